//! Independent re-implementations of the kinetic and marginal operators
//! (plain nested vectors, quadratic flux written out by hand) checked
//! against the library, plus the hand-derived values for the 3-state case.
#![allow(clippy::needless_range_loop)]

use stickykin::{
    solve_kinetic, solve_marginal, Hamiltonian, KineticOperator, KineticOperatorForm, MarginalMeasure, RateKernel,
    SolverScheme, StateGrid,
};

type Mat = Vec<Vec<f64>>;

/// `H[a, b]` for `H(p) = p^2 / 2`.
fn dd(a: f64, b: f64) -> f64 {
    (a + b) / 2.0
}

fn oracle_l(v: &[f64], f: &Mat) -> Mat {
    let n = v.len();
    let a: Vec<f64> = (0..n).map(|i| (0..n).map(|j| dd(v[i], v[j]) * f[i][j]).sum()).collect();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let gain: f64 = (0..n).map(|j| (dd(v[j], v[k]) - dd(v[i], v[j])) * f[i][j] * f[j][k]).sum();
            out[i][k] = gain - (a[k] - a[i]) * f[i][k];
        }
    }
    out
}

fn oracle_l0(v: &[f64], ell: &[f64], f: &Mat) -> Vec<f64> {
    let n = v.len();
    let a: Vec<f64> = (0..n).map(|i| (0..n).map(|j| dd(v[i], v[j]) * f[i][j]).sum()).collect();
    (0..n).map(|k| (0..n).map(|j| dd(v[j], v[k]) * ell[j] * f[j][k]).sum::<f64>() - a[k] * ell[k]).collect()
}

fn oracle_rk4(v: &[f64], g: &Mat, horizon: f64, steps: usize) -> Mat {
    let h = horizon / steps as f64;
    let comb = |x: &Mat, c: f64, y: &Mat| -> Mat {
        x.iter().zip(y).map(|(r, s)| r.iter().zip(s).map(|(a, b)| a + c * b).collect()).collect()
    };
    let mut f = g.clone();
    for _ in 0..steps {
        let k1 = oracle_l(v, &f);
        let k2 = oracle_l(v, &comb(&f, h / 2.0, &k1));
        let k3 = oracle_l(v, &comb(&f, h / 2.0, &k2));
        let k4 = oracle_l(v, &comb(&f, h, &k3));
        f = comb(&comb(&comb(&comb(&f, h / 6.0, &k1), h / 3.0, &k2), h / 3.0, &k3), h / 6.0, &k4);
    }
    f
}

fn three_state() -> (Hamiltonian<f64>, StateGrid<f64>, RateKernel<f64>) {
    (
        Hamiltonian::quadratic(2.0).unwrap(),
        StateGrid::uniform(2, 2.0).unwrap(),
        RateKernel::single_step(3, 1, 1.0).unwrap(),
    )
}

fn random_kernel(n: usize, seed: u64) -> Mat {
    // small LCG so the oracle does not share the library's RNG plumbing
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in m.iter_mut().enumerate().take(n - 1) {
        for v in row.iter_mut().skip(i + 1) {
            *v = next();
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
    }
    m[n - 1][n - 1] = 1.0;
    m
}

#[test]
fn three_state_operator_matches_hand_values() {
    let (h, grid, g) = three_state();
    let op = KineticOperator::new(&h, &grid).unwrap();
    let expected = oracle_l(&[0.0, 1.0, 2.0], &g.rows());
    assert_eq!(expected[0], vec![0.0, -1.0, 1.0]);
    assert_eq!(expected[1], vec![0.0, 0.0, 0.0]);
    for form in [KineticOperatorForm::Paper, KineticOperatorForm::LossExpanded] {
        let lf = op.apply(&g, form).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                assert!((lf.get(i, k) - expected[i][k]).abs() < 1e-15, "{form:?} ({i},{k})");
            }
        }
    }
    let l0 = op.apply_marginal(&MarginalMeasure::delta(3, 0), &g).unwrap();
    assert_eq!(oracle_l0(&[0.0, 1.0, 2.0], &[1.0, 0.0, 0.0], &g.rows()), vec![-0.5, 0.5, 0.0]);
    assert_eq!(l0.weights, vec![-0.5, 0.5, 0.0]);
}

#[test]
fn random_kernels_match_oracle() {
    let states = vec![0.0, 0.25, 0.9, 1.4, 2.0];
    let grid = StateGrid::new(states.clone()).unwrap();
    let h = Hamiltonian::quadratic(2.0).unwrap();
    let op = KineticOperator::new(&h, &grid).unwrap();
    for seed in 0..20 {
        let m = random_kernel(5, seed);
        let f = RateKernel::from_rows(m.clone()).unwrap();
        let want = oracle_l(&states, &m);
        let got = op.apply(&f, KineticOperatorForm::Paper).unwrap();
        for i in 0..5 {
            for k in 0..5 {
                assert!((got.get(i, k) - want[i][k]).abs() < 1e-13);
            }
        }
        let ell: Vec<f64> = (0..5).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let want0 = oracle_l0(&states, &ell, &m);
        let got0 = op.apply_marginal(&MarginalMeasure::new(ell), &f).unwrap();
        for k in 0..5 {
            assert!((got0.weights[k] - want0[k]).abs() < 1e-13);
        }
    }
}

#[test]
fn solver_matches_oracle_integrator() {
    let states = vec![0.0, 0.5, 1.0, 1.5, 2.0];
    let grid = StateGrid::new(states.clone()).unwrap();
    let h = Hamiltonian::quadratic(2.0).unwrap();
    let m = random_kernel(5, 99);
    let g = RateKernel::from_rows(m.clone()).unwrap();
    let sol = solve_kinetic(&g, &h, &grid, 1.0, &SolverScheme::rk4(1e-2)).unwrap();
    let want = oracle_rk4(&states, &m, 1.0, 100);
    let got = sol.trajectory.last();
    for i in 0..5 {
        for k in 0..5 {
            assert!((got.get(i, k) - want[i][k]).abs() < 1e-12, "({i},{k})");
        }
    }
}

#[test]
fn short_time_taylor_values() {
    let (h, grid, g) = three_state();
    let scheme = SolverScheme::rk4(1e-3);
    let kin = solve_kinetic(&g, &h, &grid, 0.01, &scheme).unwrap();
    let f = kin.trajectory.last();
    assert!((f.get(0, 2) - 0.01).abs() < 1e-4);
    assert!((f.get(0, 1) - 0.99).abs() < 1e-4);
    let marg = solve_marginal(&kin.trajectory, &h, &grid, 0.01, &scheme).unwrap();
    let l = marg.last();
    assert!((l.weights[0] - 0.995).abs() < 1e-4);
    assert!((l.weights[1] - 0.005).abs() < 1e-4);
    assert!(l.weights[2].abs() < 1e-4);
}

#[test]
fn lstar_weight_matches_oracle_finite_difference() {
    // d/dt [l(t, 0) f(t, 0, 1)] at t = 0 from oracle Euler substeps
    let v = [0.0, 1.0, 2.0];
    let g = RateKernel::single_step(3, 1, 1.0).unwrap();
    let m = g.rows();
    let dt = 1e-6;
    let lf = oracle_l(&v, &m);
    let l0 = oracle_l0(&v, &[1.0, 0.0, 0.0], &m);
    let density = |t: f64| (1.0 + t * l0[0]) * (m[0][1] + t * lf[0][1]);
    let fd = (density(dt) - density(0.0)) / dt;
    let (h, grid, _) = three_state();
    let op = KineticOperator::new(&h, &grid).unwrap();
    let w = op.lstar_weight(&[0, 1], &MarginalMeasure::delta(3, 0), &g).unwrap();
    assert_eq!(w, -1.5);
    assert!((fd - w).abs() < 1e-5);
}

#[test]
fn f32_solver_tracks_f64() {
    let g32 = RateKernel::<f32>::single_step(3, 1, 1.0).unwrap();
    let h32 = Hamiltonian::<f32>::quadratic(2.0).unwrap();
    let grid32 = StateGrid::<f32>::uniform(2, 2.0).unwrap();
    let s32 = solve_kinetic(&g32, &h32, &grid32, 1.0, &SolverScheme::rk4(1e-2)).unwrap();
    let (h, grid, g) = three_state();
    let s64 = solve_kinetic(&g, &h, &grid, 1.0, &SolverScheme::rk4(1e-2)).unwrap();
    for (a, b) in s32.trajectory.last().entries().iter().zip(s64.trajectory.last().entries()) {
        assert!((*a as f64 - b).abs() < 1e-5);
    }
    assert!(s32.max_row_sum_drift < 1e-5);
}
