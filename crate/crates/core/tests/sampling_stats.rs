//! Distributional checks of the samplers and of boundary thinning at
//! `M = 10^5`, all on fixed seeds.

use stickykin::{
    chi_square_homogeneity, estimate_mean, ks_two_sample, map_paths, sample_candidate, sample_initial_path,
    BoundaryProcess, Configuration, Hamiltonian, KernelTrajectory, KineticOperator, MarginalMeasure, MeanEstimate,
    RandomStreamPolicy, RateKernel, StateGrid, StreamLane,
};

const M: usize = 100_000;

fn long_chain() -> (RateKernel<f64>, StateGrid<f64>) {
    // 50 states so the top is practically never reached with lambda L = 2
    (RateKernel::single_step(50, 1, 1.0).unwrap(), StateGrid::uniform(49, 49.0).unwrap())
}

#[test]
fn zero_jump_probability_and_mean_count() {
    let (g, grid) = long_chain();
    let policy = RandomStreamPolicy::new(11);
    let counts = map_paths(M, 0, |p| {
        let q = sample_initial_path(&g, &grid, 1.0, 2.0, &mut policy.stream(StreamLane::InitialData, p))?;
        Ok(q.len() as f64)
    })
    .unwrap();
    let zero: Vec<f64> = counts.iter().map(|&c| f64::from(c == 0.0)).collect();
    let p0 = MeanEstimate::from_samples(&zero).unwrap();
    assert!((p0.mean - (-2.0f64).exp()).abs() <= 3.0 * p0.standard_error, "{p0:?}");
    let mean = MeanEstimate::from_samples(&counts).unwrap();
    assert!((mean.mean - 2.0).abs() <= 3.0 * mean.standard_error, "{mean:?}");
}

#[test]
fn single_target_rows_give_deterministic_chains() {
    let (g, grid) = long_chain();
    let policy = RandomStreamPolicy::new(3);
    for p in 0..200 {
        let q = sample_initial_path(&g, &grid, 1.0, 4.0, &mut policy.stream(StreamLane::InitialData, p)).unwrap();
        let expected: Vec<f64> = (0..=q.len()).map(|i| i as f64).collect();
        assert_eq!(q.values(), &expected[..]);
    }
}

#[test]
fn estimate_mean_indicator_and_error_scaling() {
    let policy = RandomStreamPolicy::new(5);
    let (g, grid) = long_chain();
    let indicator = |p: u64| {
        let q = sample_initial_path(&g, &grid, 1.0, 2.0, &mut policy.stream(StreamLane::Auxiliary, p))?;
        Ok(f64::from(q.is_empty()))
    };
    let small = estimate_mean(M, 0, indicator).unwrap();
    assert!((small.mean - (-2.0f64).exp()).abs() <= 4.0 * small.standard_error);
    let big = estimate_mean(4 * M, 0, indicator).unwrap();
    let ratio = small.standard_error / big.standard_error;
    assert!((ratio - 2.0).abs() <= 0.4, "stderr ratio {ratio}");
}

fn chain_code(q: &Configuration<f64>) -> usize {
    // value chain of the 3-state example: last value and number of jumps
    (q.last_value() as usize) * 3 + q.len()
}

#[test]
fn candidate_at_time_zero_matches_initial_law() {
    let g = RateKernel::single_step(3, 1, 1.0).unwrap();
    let grid = StateGrid::uniform(2, 2.0).unwrap();
    let policy = RandomStreamPolicy::new(21);
    let ell = MarginalMeasure::delta(3, 0);
    let draw = |initial: bool| {
        map_paths(M, 0, |p| {
            let q = if initial {
                sample_initial_path(&g, &grid, 1.0, 5.0, &mut policy.stream(StreamLane::InitialData, p))?
            } else {
                sample_candidate(&ell, &g, &grid, 1.0, 5.0, &mut policy.stream(StreamLane::Candidate, p))?
            };
            Ok((q.positions().first().copied(), chain_code(&q), q.first_value()))
        })
        .unwrap()
    };
    let a = draw(true);
    let b = draw(false);
    let first = |v: &[(Option<f64>, usize, f64)]| v.iter().filter_map(|s| s.0).collect::<Vec<_>>();
    let ks = ks_two_sample(&first(&a), &first(&b)).unwrap();
    assert!(ks.p_value > 1e-3, "KS on first jump location: {ks:?}");
    let mut ca = vec![0u64; 9];
    let mut cb = vec![0u64; 9];
    a.iter().for_each(|s| ca[s.1] += 1);
    b.iter().for_each(|s| cb[s.1] += 1);
    let chi = chi_square_homogeneity(&ca, &cb).unwrap();
    assert!(chi.p_value > 1e-3, "chi-square on value chains: {chi:?}");
    assert!(a.iter().chain(&b).all(|s| s.2 == 0.0));
}

#[test]
fn candidate_single_position_is_uniform() {
    let (g, grid) = long_chain();
    let ell = MarginalMeasure::delta(50, 0);
    let policy = RandomStreamPolicy::new(8);
    let xs: Vec<f64> = map_paths(M, 0, |p| {
        let q = sample_candidate(&ell, &g, &grid, 0.5, 4.0, &mut policy.stream(StreamLane::Candidate, p))?;
        Ok(q.positions().to_vec())
    })
    .unwrap()
    .into_iter()
    .filter(|x| x.len() == 1)
    .map(|x| x[0])
    .collect();
    let est = MeanEstimate::from_samples(&xs).unwrap();
    assert!((est.mean - 2.0).abs() <= 3.0 * est.standard_error, "{est:?}");
}

#[test]
fn thinning_produces_exponential_first_entry() {
    // two states: entry rate H[0,1] f(0,1) = 0.5 under envelope H'(P) ||f|| = 1,
    // and this kernel is stationary under the kinetic flow
    let grid = StateGrid::uniform(1, 1.0).unwrap();
    let h = Hamiltonian::quadratic(1.0).unwrap();
    let g = RateKernel::from_rows(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
    let traj = KernelTrajectory::constant(g, 3.0).unwrap();
    let op = KineticOperator::new(&h, &grid).unwrap();
    let boundary = BoundaryProcess::new(&op, &traj).unwrap();
    assert_eq!(boundary.envelope(), 1.0);
    assert_eq!(boundary.acceptance_probability(0, 0.0).unwrap(), 0.5);
    let policy = RandomStreamPolicy::new(13);
    let q0 = Configuration::flat(0.0, 100.0).unwrap();
    let times: Vec<f64> = map_paths(M, 0, |p| {
        let mut log = Vec::new();
        boundary.evolve(&q0, 0.0, 3.0, &mut policy.stream(StreamLane::Boundary, p), Some(&mut log))?;
        Ok(log.iter().find(|e| e.kind == "boundary_entry").map_or(f64::INFINITY, |e| e.time))
    })
    .unwrap();
    let none: Vec<f64> = times.iter().map(|t| f64::from(t.is_infinite())).collect();
    let p_none = MeanEstimate::from_samples(&none).unwrap();
    assert!((p_none.mean - (-1.5f64).exp()).abs() <= 4.0 * p_none.standard_error, "{p_none:?}");
    // conditional on entering before 3, compare against exact truncated exponential draws
    let entered: Vec<f64> = times.iter().copied().filter(|t| t.is_finite()).collect();
    let cap = 1.0 - (-1.5f64).exp();
    let reference: Vec<f64> = (0..entered.len())
        .map(|i| {
            let u = (i as f64 + 0.5) / entered.len() as f64 * cap;
            -(1.0 - u).ln() / 0.5
        })
        .collect();
    let ks = ks_two_sample(&entered, &reference).unwrap();
    assert!(ks.p_value > 1e-3, "{ks:?}");
}
