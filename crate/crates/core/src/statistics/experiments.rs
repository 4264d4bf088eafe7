use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::estimate::{chi_square_goodness_of_fit, map_paths, two_sample_z, MeanEstimate};
use super::observables::{laplace_functional, TestFunction};
use super::report::{ExperimentReport, StatisticRecord};
use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::kinetic::{solve_kinetic, solve_marginal, KineticOperator, SolverScheme};
use crate::particle::{BoundaryProcess, Configuration};
use crate::sampling::{sample_candidate, sample_initial_path, RandomStreamPolicy, StreamLane};
use crate::scalar::Scalar;
use crate::state_space::{KernelTrajectory, MarginalMeasure, RateKernel, StateGrid};

/// Per-functional two-sample threshold.
pub const Z_MAX: f64 = 4.0;
/// Minimum chi-square p-value for the `x = 0` marginal.
pub const CHI_SQUARE_P_MIN: f64 = 1e-3;
/// Two evolved shock positions count as equal within this distance.
pub const POSITION_TOL: f64 = 1e-9;
/// Accepted range for the chain-derivative error ratio under halving of `dt`.
pub const LSTAR_RATIO_RANGE: (f64, f64) = (1.4, 2.6);

fn scheme_json<T: Scalar>(s: &SolverScheme<T>) -> serde_json::Value {
    json!({ "kind": s.kind, "dt": s.dt.as_f64(), "substeps_per_output": s.substeps_per_output })
}

fn kernel_json<T: Scalar>(g: &RateKernel<T>) -> serde_json::Value {
    json!(g.rows().iter().map(|r| r.iter().map(|v| v.as_f64()).collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn states_json<T: Scalar>(grid: &StateGrid<T>) -> serde_json::Value {
    json!(grid.states().iter().map(|v| v.as_f64()).collect::<Vec<_>>())
}

/// `(f, l)` on `[0, T]`; for `T = 0` the constant trajectory and `delta_0`.
fn solve_both<T: Scalar>(
    g: &RateKernel<T>,
    h: &Hamiltonian<T>,
    grid: &StateGrid<T>,
    horizon: T,
    scheme: &SolverScheme<T>,
) -> Result<(KernelTrajectory<T>, MarginalMeasure<T>)> {
    if horizon < T::zero() || !horizon.is_finite() {
        return Err(Error::arg(format!("horizon must be nonnegative, got {horizon}")));
    }
    if horizon == T::zero() {
        return Ok((KernelTrajectory::constant(g.clone(), T::zero())?, MarginalMeasure::delta(grid.len(), 0)));
    }
    let kin = solve_kinetic(g, h, grid, horizon, scheme)?;
    let marg = solve_marginal(&kin.trajectory, h, grid, horizon, scheme)?;
    Ok((kin.trajectory, marg.last().clone()))
}

#[derive(Debug, Clone)]
pub struct PropagationSetup<T> {
    pub hamiltonian: Hamiltonian<T>,
    pub grid: StateGrid<T>,
    /// Initial kernel; its top entry is the total rate `lambda`.
    pub kernel: RateKernel<T>,
    pub length: T,
    pub horizon: T,
    pub paths: usize,
    pub seed: u64,
    pub workers: usize,
    pub tests: Vec<TestFunction>,
    pub scheme: SolverScheme<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateFrequency {
    pub state: f64,
    pub expected: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationOutcome {
    pub report: ExperimentReport,
    /// Evolved `rho(0)` frequencies against `l(T)`.
    pub histogram: Vec<StateFrequency>,
}

/// Compares `E G(Phi_0^T q), q ~ mu(0)` with `E G(q'), q' ~ mu(T)` over the
/// Laplace functionals of `setup.tests`.
pub fn verify_propagation<T: Scalar>(setup: &PropagationSetup<T>) -> Result<PropagationOutcome> {
    let start = Instant::now();
    let grid = &setup.grid;
    let top = grid.top();
    let lambda = setup.kernel.get(top, top);
    if setup.tests.is_empty() {
        return Err(Error::arg("test function family is empty"));
    }
    if !(setup.length > T::zero()) {
        return Err(Error::arg(format!("length must be positive, got {}", setup.length)));
    }
    let (traj, ell) = solve_both(&setup.kernel, &setup.hamiltonian, grid, setup.horizon, &setup.scheme)?;
    let op = KineticOperator::new(&setup.hamiltonian, grid)?;
    let boundary = BoundaryProcess::new(&op, &traj)?;
    let f_end = traj.last().clone();
    let policy = RandomStreamPolicy::new(setup.seed);
    let tests = &setup.tests;
    let functionals = |q: &Configuration<T>| tests.iter().map(|j| laplace_functional(q, j)).collect::<Vec<f64>>();

    let evolved = map_paths(setup.paths, setup.workers, |p| {
        let q0 = sample_initial_path(
            &setup.kernel,
            grid,
            lambda,
            setup.length,
            &mut policy.stream(StreamLane::InitialData, p),
        )?;
        let q = boundary.evolve(&q0, T::zero(), setup.horizon, &mut policy.stream(StreamLane::Boundary, p), None)?;
        let idx = grid
            .index_of(q.first_value())
            .ok_or_else(|| Error::State(format!("value {} at x = 0 is off the grid", q.first_value())))?;
        Ok((functionals(&q), idx))
    })?;
    let candidates = map_paths(setup.paths, setup.workers, |p| {
        let q =
            sample_candidate(&ell, &f_end, grid, lambda, setup.length, &mut policy.stream(StreamLane::Candidate, p))?;
        Ok(functionals(&q))
    })?;

    let mut report = ExperimentReport::new(
        "verify_propagation",
        json!({
            "hamiltonian": setup.hamiltonian.describe(),
            "states": states_json(grid),
            "kernel": kernel_json(&setup.kernel),
            "lambda": lambda.as_f64(),
            "length": setup.length.as_f64(),
            "horizon": setup.horizon.as_f64(),
            "tests": tests,
            "scheme": scheme_json(&setup.scheme),
        }),
        setup.seed,
        setup.paths,
    );

    let mut passing = 0;
    for (k, j) in tests.iter().enumerate() {
        let a: Vec<f64> = evolved.iter().map(|(g, _)| g[k]).collect();
        let b: Vec<f64> = candidates.iter().map(|g| g[k]).collect();
        let ea = MeanEstimate::from_samples(&a)?;
        let eb = MeanEstimate::from_samples(&b)?;
        let z = two_sample_z(&ea, &eb);
        let pass = z.abs() <= Z_MAX;
        passing += usize::from(pass);
        report.statistics.push(StatisticRecord {
            name: format!("laplace[{k}] {}", j.label()),
            estimate: ea.mean,
            standard_error: Some(ea.standard_error),
            reference: Some(eb.mean),
            reference_error: Some(eb.standard_error),
            z_score: Some(z),
            p_value: None,
            threshold: format!("|z| <= {Z_MAX}"),
            pass,
        });
    }
    let needed = (tests.len() * 9).div_ceil(10);
    report.statistics.push(StatisticRecord::value(
        "laplace_pass_count",
        passing as f64,
        format!(">= {needed} of {}", tests.len()),
        passing >= needed,
    ));

    let mut counts = vec![0u64; grid.len()];
    for (_, idx) in &evolved {
        counts[*idx] += 1;
    }
    let probs: Vec<f64> = ell.weights.iter().map(|w| w.as_f64().max(0.0)).collect();
    let chi = chi_square_goodness_of_fit(&counts, &probs)?;
    let chi_pass = chi.p_value > CHI_SQUARE_P_MIN;
    report.statistics.push(StatisticRecord {
        name: "x0_marginal_chi_square".into(),
        estimate: chi.statistic,
        standard_error: None,
        reference: None,
        reference_error: None,
        z_score: None,
        p_value: Some(chi.p_value),
        threshold: format!("p > {CHI_SQUARE_P_MIN} ({} dof)", chi.degrees_of_freedom),
        pass: chi_pass,
    });

    let m = setup.paths as f64;
    let histogram = grid
        .states()
        .iter()
        .zip(&probs)
        .zip(&counts)
        .map(|((&s, &p), &c)| StateFrequency { state: s.as_f64(), expected: p, observed: c as f64 / m })
        .collect();
    report.verdict = passing >= needed && chi_pass;
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(PropagationOutcome { report, histogram })
}

#[derive(Debug, Clone)]
pub struct CouplingSetup<T> {
    pub hamiltonian: Hamiltonian<T>,
    pub grid: StateGrid<T>,
    pub kernel: RateKernel<T>,
    pub short_length: T,
    pub long_length: T,
    pub horizon: T,
    pub paths: usize,
    pub seed: u64,
    pub workers: usize,
    pub scheme: SolverScheme<T>,
}

/// Same value at 0 and the same shocks strictly before `limit - tol`,
/// positions within `tol`.
fn agree_below<T: Scalar>(a: &Configuration<T>, b: &Configuration<T>, limit: f64, tol: f64) -> bool {
    let cut = |q: &Configuration<T>| q.positions().iter().filter(|x| x.as_f64() < limit - tol).count();
    let (na, nb) = (cut(a), cut(b));
    na == nb
        && a.values()[..=na] == b.values()[..=nb]
        && a.positions()[..na].iter().zip(&b.positions()[..nb]).all(|(x, y)| (x.as_f64() - y.as_f64()).abs() <= tol)
}

/// Paired runs on `[0, L1]` and `[0, L2]` sharing initial data but with
/// independent boundary noise must agree on `[0, L1 - T H'(P)]`.
pub fn verify_coupling<T: Scalar>(setup: &CouplingSetup<T>) -> Result<ExperimentReport> {
    let start = Instant::now();
    let (l1, l2, t) = (setup.short_length, setup.long_length, setup.horizon);
    let speed = setup.hamiltonian.max_speed();
    if !(T::zero() < l1 && l1 < l2) {
        return Err(Error::arg(format!("need 0 < L1 < L2, got L1={l1}, L2={l2}")));
    }
    if !(t >= T::zero() && t * speed < l1) {
        return Err(Error::arg(format!("need 0 <= T and T H'(P) < L1, got T={t}, H'(P)={speed}, L1={l1}")));
    }
    let grid = &setup.grid;
    let lambda = setup.kernel.get(grid.top(), grid.top());
    let (traj, _) = solve_both(&setup.kernel, &setup.hamiltonian, grid, t, &setup.scheme)?;
    let op = KineticOperator::new(&setup.hamiltonian, grid)?;
    let boundary = BoundaryProcess::new(&op, &traj)?;
    let policy = RandomStreamPolicy::new(setup.seed);
    let limit = (l1 - t * speed).as_f64();

    let outcomes = map_paths(setup.paths, setup.workers, |p| {
        let long0 =
            sample_initial_path(&setup.kernel, grid, lambda, l2, &mut policy.stream(StreamLane::InitialData, p))?;
        let short0 = long0.restrict(l1)?;
        let short = boundary.evolve(&short0, T::zero(), t, &mut policy.stream(StreamLane::Boundary, p), None)?;
        let long = boundary.evolve(&long0, T::zero(), t, &mut policy.stream(StreamLane::CoupledBoundary, p), None)?;
        let compared = short.positions().iter().filter(|x| x.as_f64() < limit).count();
        Ok((agree_below(&short, &long, limit, POSITION_TOL), compared))
    })?;
    let violations = outcomes.iter().filter(|o| !o.0).count();
    let compared: Vec<f64> = outcomes.iter().map(|o| o.1 as f64).collect();

    let mut report = ExperimentReport::new(
        "verify_coupling",
        json!({
            "hamiltonian": setup.hamiltonian.describe(),
            "states": states_json(grid),
            "kernel": kernel_json(&setup.kernel),
            "lambda": lambda.as_f64(),
            "short_length": l1.as_f64(),
            "long_length": l2.as_f64(),
            "horizon": t.as_f64(),
            "agreement_limit": limit,
            "position_tolerance": POSITION_TOL,
            "scheme": scheme_json(&setup.scheme),
        }),
        setup.seed,
        setup.paths,
    );
    report.statistics.push(StatisticRecord::value("violations", violations as f64, "== 0", violations == 0));
    let mean_compared = if compared.len() >= 2 {
        MeanEstimate::from_samples(&compared)?.mean
    } else {
        compared.first().copied().unwrap_or(0.0)
    };
    report.statistics.push(StatisticRecord::value("mean_shocks_compared", mean_compared, "informational", true));
    report.verdict = violations == 0;
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct LstarSetup<T> {
    pub hamiltonian: Hamiltonian<T>,
    pub grid: StateGrid<T>,
    pub kernel: RateKernel<T>,
    pub probe_times: Vec<T>,
    pub chains: Vec<Vec<usize>>,
    /// Forward-difference step; the run is repeated at `dt / 2`.
    pub dt: T,
    /// RK4 substeps per difference step.
    pub refinement: usize,
}

struct ChainProbe {
    max_relative_error: f64,
    max_form_gap: f64,
    probed: usize,
    skipped: Vec<String>,
}

fn chain_density<T: Scalar>(chain: &[usize], ell: &MarginalMeasure<T>, f: &RateKernel<T>) -> f64 {
    chain.windows(2).fold(ell.weights[chain[0]].as_f64(), |d, w| d * f.get(w[0], w[1]).as_f64())
}

fn probe_lstar<T: Scalar>(setup: &LstarSetup<T>, dt: T) -> Result<ChainProbe> {
    let h = dt / T::lit(setup.refinement as f64);
    let t_max = setup.probe_times.iter().copied().fold(T::zero(), T::max);
    let horizon = t_max + dt;
    let scheme = SolverScheme::rk4(h);
    let kin = solve_kinetic(&setup.kernel, &setup.hamiltonian, &setup.grid, horizon, &scheme)?;
    let marg = solve_marginal(&kin.trajectory, &setup.hamiltonian, &setup.grid, horizon, &scheme)?;
    let op = KineticOperator::new(&setup.hamiltonian, &setup.grid)?;
    let times = kin.trajectory.times();
    let index = |t: T| -> Result<usize> {
        let i = (t / h).as_f64().round() as usize;
        let i = i.min(times.len() - 1);
        if (times[i] - t).abs().as_f64() > 1e-9 * (1.0 + t.as_f64()) {
            return Err(Error::Numeric(format!("probe time {t} is not on the step grid")));
        }
        Ok(i)
    };
    let mut probe = ChainProbe { max_relative_error: 0.0, max_form_gap: 0.0, probed: 0, skipped: Vec::new() };
    for &t in &setup.probe_times {
        let (i0, i1) = (index(t)?, index(t + dt)?);
        let (f0, f1) = (&kin.trajectory.kernels()[i0], &kin.trajectory.kernels()[i1]);
        let (l0, l1) = (&marg.marginals[i0], &marg.marginals[i1]);
        for chain in &setup.chains {
            let d0 = chain_density(chain, l0, f0);
            let weight = match op.lstar_weight(chain, l0, f0) {
                Ok(w) => w.as_f64(),
                Err(Error::ZeroDensity { location }) => {
                    probe.skipped.push(format!("chain {chain:?} at t={t}: zero density at {location}"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let exact = weight * d0;
            if exact.abs() < 1e-12 {
                probe.skipped.push(format!("chain {chain:?} at t={t}: derivative vanishes"));
                continue;
            }
            let long = op.lstar_weight_long(chain, l0, f0)?.as_f64();
            probe.max_form_gap = probe.max_form_gap.max((long - weight).abs());
            let fd = (chain_density(chain, l1, f1) - d0) / dt.as_f64();
            probe.max_relative_error = probe.max_relative_error.max((fd - exact).abs() / exact.abs());
            probe.probed += 1;
        }
    }
    Ok(probe)
}

/// Forward differences of chain densities against `lstar_weight x density`.
pub fn verify_lstar<T: Scalar>(setup: &LstarSetup<T>) -> Result<ExperimentReport> {
    let start = Instant::now();
    if !(setup.dt > T::zero()) || setup.refinement == 0 {
        return Err(Error::arg("dt must be positive and refinement at least 1"));
    }
    if setup.probe_times.iter().any(|t| !(*t >= T::zero())) {
        return Err(Error::arg("probe times must be nonnegative"));
    }
    let n = setup.grid.len();
    if setup.chains.iter().any(|c| c.is_empty() || c.iter().any(|&i| i >= n)) {
        return Err(Error::arg("chains must be nonempty with indices on the grid"));
    }
    let coarse = probe_lstar(setup, setup.dt)?;
    let fine = probe_lstar(setup, setup.dt / T::lit(2.0))?;
    let mut report = ExperimentReport::new(
        "verify_lemma5",
        json!({
            "hamiltonian": setup.hamiltonian.describe(),
            "states": states_json(&setup.grid),
            "kernel": kernel_json(&setup.kernel),
            "probe_times": setup.probe_times.iter().map(|t| t.as_f64()).collect::<Vec<_>>(),
            "chains": setup.chains,
            "dt": setup.dt.as_f64(),
            "refinement": setup.refinement,
        }),
        0,
        0,
    );
    report.notes.extend(coarse.skipped.iter().cloned());
    if coarse.probed == 0 {
        report.notes.push("no chain had positive density at the probed times".into());
        report.verdict = false;
        report.wall_time_seconds = start.elapsed().as_secs_f64();
        return Ok(report);
    }
    let ratio = coarse.max_relative_error / fine.max_relative_error;
    let (lo, hi) = LSTAR_RATIO_RANGE;
    let ratio_pass = (lo..=hi).contains(&ratio);
    let gap = coarse.max_form_gap.max(fine.max_form_gap);
    report.statistics.push(StatisticRecord::value(
        "max_relative_error_dt",
        coarse.max_relative_error,
        "informational",
        true,
    ));
    report.statistics.push(StatisticRecord::value(
        "max_relative_error_half_dt",
        fine.max_relative_error,
        "informational",
        true,
    ));
    report.statistics.push(StatisticRecord::value("error_ratio", ratio, format!("in [{lo}, {hi}]"), ratio_pass));
    report.statistics.push(StatisticRecord::value("long_short_form_gap", gap, "<= 1e-12", gap <= 1e-12));
    report.statistics.push(StatisticRecord::value("chains_probed", coarse.probed as f64, "informational", true));
    report.verdict = ratio_pass && gap <= 1e-12;
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_state() -> (Hamiltonian<f64>, StateGrid<f64>, RateKernel<f64>) {
        (
            Hamiltonian::quadratic(2.0).unwrap(),
            StateGrid::uniform(2, 2.0).unwrap(),
            RateKernel::single_step(3, 1, 1.0).unwrap(),
        )
    }

    #[test]
    fn agreement_rule() {
        let a = Configuration::new(vec![1.0, 3.0], vec![0.0, 1.0, 2.0], 5.0).unwrap();
        let b = Configuration::new(vec![1.0 + 1e-12, 4.5], vec![0.0, 1.0, 1.5], 10.0).unwrap();
        assert!(agree_below(&a, &b, 2.0, POSITION_TOL));
        assert!(!agree_below(&a, &b, 4.0, POSITION_TOL));
    }

    #[test]
    fn zero_rate_propagation_is_exact() {
        let (h, grid, _) = three_state();
        let setup = PropagationSetup {
            hamiltonian: h,
            grid,
            kernel: RateKernel::zeros(3),
            length: 5.0,
            horizon: 1.0,
            paths: 50,
            seed: 1,
            workers: 1,
            tests: TestFunction::default_family(),
            scheme: SolverScheme::rk4(1e-2),
        };
        let out = verify_propagation(&setup).unwrap();
        assert!(out.report.verdict);
        for s in out.report.statistics.iter().filter(|s| s.z_score.is_some()) {
            assert_eq!(s.z_score, Some(0.0));
        }
    }

    #[test]
    fn coupling_rejects_bad_parameters() {
        let (h, grid, g) = three_state();
        let mut setup = CouplingSetup {
            hamiltonian: h,
            grid,
            kernel: g,
            short_length: 5.0,
            long_length: 4.0,
            horizon: 1.0,
            paths: 10,
            seed: 1,
            workers: 1,
            scheme: SolverScheme::rk4(1e-2),
        };
        assert!(matches!(verify_coupling(&setup), Err(Error::Argument(_))));
        setup.long_length = 10.0;
        setup.horizon = 3.0;
        assert!(matches!(verify_coupling(&setup), Err(Error::Argument(_))));
    }

    #[test]
    fn coupling_at_time_zero_is_exact() {
        let (h, grid, g) = three_state();
        let setup = CouplingSetup {
            hamiltonian: h,
            grid,
            kernel: g,
            short_length: 5.0,
            long_length: 10.0,
            horizon: 0.0,
            paths: 200,
            seed: 4,
            workers: 2,
            scheme: SolverScheme::rk4(1e-2),
        };
        let r = verify_coupling(&setup).unwrap();
        assert!(r.verdict);
        assert_eq!(r.statistic("violations").unwrap().estimate, 0.0);
    }

    #[test]
    fn lstar_first_order() {
        let (h, grid, g) = three_state();
        let setup = LstarSetup {
            hamiltonian: h,
            grid,
            kernel: g,
            probe_times: vec![0.0, 0.5],
            chains: vec![vec![0], vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 1, 2]],
            dt: 1e-2,
            refinement: 16,
        };
        let r = verify_lstar(&setup).unwrap();
        assert!(r.verdict, "{r:?}");
        // chains through a zero entry at t = 0 are skipped and noted
        assert!(r.notes.iter().any(|n| n.contains("t=0")));
    }
}
