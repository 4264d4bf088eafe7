//! Property tests for the structural invariants: conservation, form
//! equivalence, telescoping, the semigroup property and particle bookkeeping.

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stickykin::{
    advance_deterministic, integrate_kinetic, sample_initial_path, simulate_pdmp, solve_kinetic, Configuration,
    Hamiltonian, KernelTrajectory, KineticOperator, KineticOperatorForm, MarginalMeasure, RateKernel, SolverScheme,
    StateGrid,
};

fn grid_strategy() -> impl Strategy<Value = StateGrid<f64>> {
    proptest::collection::vec(0.05..1.0f64, 2..6).prop_map(|gaps| {
        let mut states = vec![0.0];
        for g in gaps {
            states.push(states.last().unwrap() + g);
        }
        StateGrid::new(states).unwrap()
    })
}

/// Nonnegative upper-triangular kernel; `lambda` rescales rows when given.
fn kernel_for(n: usize, raw: &[f64], lambda: Option<f64>) -> RateKernel<f64> {
    let mut rows = vec![vec![0.0; n]; n];
    let mut it = raw.iter().cycle();
    for (i, row) in rows.iter_mut().enumerate().take(n - 1) {
        for v in row.iter_mut().skip(i + 1) {
            *v = *it.next().unwrap();
        }
        if let Some(l) = lambda {
            let s: f64 = row.iter().sum();
            if s == 0.0 {
                row[n - 1] = l;
            } else {
                row.iter_mut().for_each(|v| *v *= l / s);
            }
        }
    }
    rows[n - 1][n - 1] = lambda.unwrap_or(*it.next().unwrap());
    RateKernel::from_rows(rows).unwrap()
}

fn flux() -> impl Strategy<Value = Hamiltonian<f64>> {
    (0.0..1.0f64, 0.1..1.0f64, 0.0..0.5f64)
        .prop_map(|(a1, a2, a3)| Hamiltonian::polynomial(vec![0.0, a1, a2, a3], 1.0).unwrap())
}

fn setup() -> impl Strategy<Value = (StateGrid<f64>, Hamiltonian<f64>, Vec<f64>, f64)> {
    (grid_strategy(), flux(), proptest::collection::vec(0.0..2.0f64, 12), 0.2..2.0f64).prop_map(
        |(grid, h, raw, lambda)| {
            // rescale the flux domain to the grid top
            let p = grid.p_max();
            let coeffs = match h.kind() {
                stickykin::HamiltonianKind::Polynomial { coefficients } => coefficients.clone(),
                _ => unreachable!(),
            };
            (grid, Hamiltonian::polynomial(coeffs, p).unwrap(), raw, lambda)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_expanded_conserves_row_sums((grid, h, raw, _) in setup()) {
        let op = KineticOperator::new(&h, &grid).unwrap();
        let f = kernel_for(grid.len(), &raw, None);
        let lf = op.apply(&f, KineticOperatorForm::LossExpanded).unwrap();
        for i in 0..grid.len() {
            assert_abs_diff_eq!(lf.row_sum(i), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn forms_agree_under_constant_rate((grid, h, raw, lambda) in setup()) {
        let op = KineticOperator::new(&h, &grid).unwrap();
        let f = kernel_for(grid.len(), &raw, Some(lambda));
        let a = op.apply(&f, KineticOperatorForm::Paper).unwrap();
        let b = op.apply(&f, KineticOperatorForm::LossExpanded).unwrap();
        for (x, y) in a.entries().iter().zip(b.entries()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn lstar_forms_telescope((grid, h, raw, lambda) in setup(), picks in proptest::collection::vec(0usize..100, 1..5)) {
        let n = grid.len();
        let op = KineticOperator::new(&h, &grid).unwrap();
        let f = kernel_for(n, &raw.iter().map(|v| v + 0.1).collect::<Vec<_>>(), Some(lambda));
        let ell = MarginalMeasure::new((0..n).map(|i| 1.0 / (1.0 + i as f64)).collect());
        let mut chain = vec![picks[0] % (n - 1)];
        for p in &picks[1..] {
            let last = *chain.last().unwrap();
            chain.push(if last + 1 < n { last + 1 + p % (n - last - 1) } else { last });
        }
        let short = op.lstar_weight(&chain, &ell, &f).unwrap();
        let long = op.lstar_weight_long(&chain, &ell, &f).unwrap();
        assert_abs_diff_eq!(short, long, epsilon = 1e-12 * (1.0 + short.abs()));
    }

    #[test]
    fn rk4_conserves_rows_and_satisfies_semigroup((grid, h, raw, lambda) in setup()) {
        let g = kernel_for(grid.len(), &raw, Some(lambda));
        let scheme = SolverScheme::rk4(0.01);
        let whole = solve_kinetic(&g, &h, &grid, 0.4, &scheme).unwrap();
        prop_assert!(whole.max_row_sum_drift < 1e-10);
        prop_assert!(whole.support_preserved);
        let op = KineticOperator::new(&h, &grid).unwrap();
        let first = integrate_kinetic(&op, &g, 0.2, &scheme).unwrap();
        let second = integrate_kinetic(&op, first.trajectory.last(), 0.2, &scheme).unwrap();
        for (x, y) in whole.trajectory.last().entries().iter().zip(second.trajectory.last().entries()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn paper_euler_keeps_entries_nonnegative((grid, h, raw, lambda) in setup(), frac in 0.1..1.0f64) {
        let g = kernel_for(grid.len(), &raw, Some(lambda));
        let c = lambda * h.max_speed();
        let sol = solve_kinetic(&g, &h, &grid, 1.0, &SolverScheme::paper_euler(frac / (2.0 * c))).unwrap();
        prop_assert!(sol.min_entry >= 0.0);
        prop_assert!(sol.support_preserved);
    }

    #[test]
    fn deterministic_motion_bookkeeping(seed in 0u64..1000, dt in 0.0..5.0f64) {
        let grid = StateGrid::uniform(6, 3.0).unwrap();
        let h = Hamiltonian::quadratic(3.0).unwrap();
        let g = RateKernel::uniform_up(7, 1.0).unwrap();
        let q = sample_initial_path(&g, &grid, 1.0, 6.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let next = advance_deterministic(&q, &h, dt);
        // values only disappear, the boundary value is untouched
        prop_assert_eq!(next.last_value(), q.last_value());
        prop_assert!(next.first_value() >= q.first_value());
        prop_assert!(next.values().iter().all(|v| q.values().contains(v)));
        prop_assert!(next.values().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(next.positions().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(next.positions().iter().all(|&x| x > 0.0 && x <= 6.0));
        // flow property
        let split = advance_deterministic(&advance_deterministic(&q, &h, dt / 2.0), &h, dt / 2.0);
        prop_assert_eq!(split.values(), next.values());
        for (a, b) in split.positions().iter().zip(next.positions()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn random_evolution_keeps_configuration_valid(seed in 0u64..1000) {
        let grid = StateGrid::uniform(2, 2.0).unwrap();
        let h = Hamiltonian::quadratic(2.0).unwrap();
        let g = RateKernel::single_step(3, 1, 1.0).unwrap();
        let traj = KernelTrajectory::constant(g.clone(), 2.0).unwrap();
        let op = KineticOperator::new(&h, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = sample_initial_path(&g, &grid, 1.0, 3.0, &mut rng).unwrap();
        let out = simulate_pdmp(&q, &op, &traj, 0.0, 2.0, &mut rng).unwrap();
        prop_assert!(out.last_value() >= q.last_value());
        prop_assert!(out.values().iter().all(|v| grid.index_of(*v).is_some()));
        prop_assert!(Configuration::new(out.positions().to_vec(), out.values().to_vec(), 3.0).is_ok());
    }
}
