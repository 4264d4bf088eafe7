//! Laplace-exponent closure for the quadratic flux.
//!
//! With `H(p) = p^2 / 2` and an increment-homogeneous kernel, every row of
//! `f(t)` is the same increment law, and its exponent
//! `psi(t, s) = sum_u (e^{s u} - 1) f(t, 0, u)` solves an inviscid Burgers
//! equation `psi_t = sigma psi psi_s`. The grid is bounded at `P`, so the
//! identities only hold up to the mass that reaches the top; residuals are
//! judged against a budget estimated from the run itself.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::report::{ExperimentReport, StatisticRecord};
use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::kinetic::{solve_kinetic, SolverScheme};
use crate::state_space::{KernelTrajectory, RateKernel, StateGrid};

/// Residuals below this are treated as rounding noise.
const ROUNDOFF_FLOOR: f64 = 1e-10;
/// Budget multiplier on the summed error estimates.
const BUDGET_FACTOR: f64 = 10.0;
/// Mass within this many steps of `P` triggers a truncation warning.
const TOP_WINDOW: usize = 5;
const TOP_MASS_WARNING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurgersSetup {
    /// Jump size in grid steps.
    pub jump: usize,
    pub lambda: f64,
    /// Number of grid steps; states are `0, P/K, ..., P`.
    pub k: usize,
    pub p_max: f64,
    pub probe_times: Vec<f64>,
    pub s_grid: Vec<f64>,
    /// Solver step; time derivatives use central differences of `2 dt`.
    pub dt: f64,
    pub ds: f64,
}

impl Default for BurgersSetup {
    fn default() -> Self {
        Self {
            jump: 1,
            lambda: 1.0,
            k: 40,
            p_max: 40.0,
            probe_times: vec![0.05, 0.1, 0.15, 0.2],
            s_grid: (-10..=0).map(|i| f64::from(i) / 10.0).collect(),
            dt: 1e-3,
            ds: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurgersRow {
    pub t: f64,
    pub s: f64,
    pub psi: f64,
    pub psi_t: f64,
    pub psi_psi_s: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurgersOutcome {
    pub report: ExperimentReport,
    /// Orientation sign `sigma` chosen at the first probe.
    pub sign: f64,
    pub rows: Vec<BurgersRow>,
}

struct Exponent<'a> {
    traj: &'a KernelTrajectory<f64>,
    grid: &'a StateGrid<f64>,
    dt: f64,
}

impl Exponent<'_> {
    fn index(&self, t: f64) -> Result<usize> {
        let i = (t / self.dt).round() as usize;
        match self.traj.times().get(i) {
            Some(&ti) if (ti - t).abs() <= 1e-9 * (1.0 + t) => Ok(i),
            _ => Err(Error::Numeric(format!("time {t} is not on the solver grid"))),
        }
    }

    fn psi_at(&self, i: usize, s: f64) -> f64 {
        let f = &self.traj.kernels()[i];
        (1..self.grid.len()).map(|j| (s * self.grid.value(j)).exp_m1() * f.get(0, j)).sum()
    }

    fn psi(&self, t: f64, s: f64) -> Result<f64> {
        Ok(self.psi_at(self.index(t)?, s))
    }

    /// `(psi, psi_t, psi psi_s)` with central differences of half-widths
    /// `tau` and `h`.
    fn derivatives(&self, t: f64, s: f64, tau: f64, h: f64) -> Result<(f64, f64, f64)> {
        let psi = self.psi(t, s)?;
        let psi_t = (self.psi(t + tau, s)? - self.psi(t - tau, s)?) / (2.0 * tau);
        let psi_s = (self.psi(t, s + h)? - self.psi(t, s - h)?) / (2.0 * h);
        Ok((psi, psi_t, psi * psi_s))
    }

    /// Row-0 mass at grid indices `>= from`.
    fn mass_from(&self, i: usize, from: usize) -> f64 {
        let f = &self.traj.kernels()[i];
        (from..self.grid.len()).map(|j| f.get(0, j)).sum()
    }
}

fn solve(
    setup: &BurgersSetup,
    grid: &StateGrid<f64>,
    h: &Hamiltonian<f64>,
    g: &RateKernel<f64>,
    dt: f64,
    horizon: f64,
) -> Result<KernelTrajectory<f64>> {
    Ok(solve_kinetic(g, h, grid, horizon, &SolverScheme::rk4(dt))
        .map_err(|e| Error::arg(format!("burgers solve with a={} failed: {e}", setup.jump)))?
        .trajectory)
}

pub fn burgers_closure_check(setup: &BurgersSetup) -> Result<BurgersOutcome> {
    let start = Instant::now();
    if setup.k < 4 || setup.jump == 0 || setup.jump > setup.k / 2 {
        return Err(Error::arg("need K >= 4 and 1 <= a <= K/2"));
    }
    if !(setup.lambda >= 0.0 && setup.dt > 0.0 && setup.ds > 0.0) {
        return Err(Error::arg("lambda must be nonnegative and dt, ds positive"));
    }
    if setup.probe_times.is_empty() || setup.s_grid.is_empty() {
        return Err(Error::arg("probe times and s grid must be nonempty"));
    }
    let tau = 2.0 * setup.dt;
    if setup.probe_times.iter().any(|&t| t < 2.0 * tau) {
        return Err(Error::arg(format!("probe times must be at least {}", 2.0 * tau)));
    }
    let grid = StateGrid::uniform(setup.k, setup.p_max)?;
    let h = Hamiltonian::quadratic(setup.p_max)?;
    let g = RateKernel::single_step(setup.k + 1, setup.jump, setup.lambda)?;
    let t_first = 2.0 * tau;
    let t_max = setup.probe_times.iter().copied().fold(t_first, f64::max);
    let horizon = t_max + 2.0 * tau;

    let traj = solve(setup, &grid, &h, &g, setup.dt, horizon)?;
    let half = solve(setup, &grid, &h, &g, setup.dt / 2.0, horizon)?;
    let main = Exponent { traj: &traj, grid: &grid, dt: setup.dt };
    let fine = Exponent { traj: &half, grid: &grid, dt: setup.dt / 2.0 };

    let mut report = ExperimentReport::new(
        "burgers_check",
        json!({
            "jump": setup.jump,
            "lambda": setup.lambda,
            "k": setup.k,
            "p_max": setup.p_max,
            "probe_times": setup.probe_times,
            "s_grid": setup.s_grid,
            "dt": setup.dt,
            "ds": setup.ds,
        }),
        0,
        0,
    );

    // compound-Poisson exponent of g at t = 0
    let jump_size = grid.value(setup.jump);
    let initial_gap = setup
        .s_grid
        .iter()
        .map(|&s| (main.psi_at(0, s) - setup.lambda * (s * jump_size).exp_m1()).abs())
        .fold(0.0, f64::max);

    // orientation sign from the first admissible time
    let first = |sigma: f64| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &s in &setup.s_grid {
            let (_, pt, pps) = main.derivatives(t_first, s, tau, setup.ds)?;
            worst = worst.max((pt - sigma * pps).abs());
        }
        Ok(worst)
    };
    let (plus, minus) = (first(1.0)?, first(-1.0)?);
    let sign = if plus <= minus { 1.0 } else { -1.0 };
    report.notes.push(format!(
        "orientation sign {sign:+} chosen at t={t_first} (residual {plus:.3e} for +1, {minus:.3e} for -1)"
    ));

    let interior = setup.k / 2;
    let mut rows = Vec::new();
    let mut residual: f64 = 0.0;
    let mut differencing: f64 = 0.0;
    let mut solver: f64 = 0.0;
    let mut homogeneity: f64 = 0.0;
    let mut reach: f64 = 0.0;
    let mut top_mass: f64 = 0.0;
    for &t in &setup.probe_times {
        for &s in &setup.s_grid {
            let (psi, pt, pps) = main.derivatives(t, s, tau, setup.ds)?;
            let r = pt - sign * pps;
            let (_, pt2, pps2) = main.derivatives(t, s, 2.0 * tau, 2.0 * setup.ds)?;
            let (_, ptf, ppsf) = fine.derivatives(t, s, tau, setup.ds)?;
            residual = residual.max(r.abs());
            differencing = differencing.max((r - (pt2 - sign * pps2)).abs());
            solver = solver.max((r - (ptf - sign * ppsf)).abs());
            rows.push(BurgersRow { t, s, psi, psi_t: pt, psi_psi_s: pps, residual: r });
        }
        let i = main.index(t)?;
        let f = &traj.kernels()[i];
        for row in 1..=interior {
            for u in 0..=setup.k - interior {
                homogeneity = homogeneity.max((f.get(row, row + u) - f.get(0, u)).abs());
            }
        }
        reach = reach.max(main.mass_from(i, interior.saturating_sub(TOP_WINDOW)));
        top_mass = top_mass.max(main.mass_from(i, setup.k - TOP_WINDOW));
    }

    // increments that leave the interior block can feel the top state
    let truncation = reach * setup.lambda.max(1.0) * (1.0 + setup.p_max);
    let budget = BUDGET_FACTOR * (differencing + solver + truncation + ROUNDOFF_FLOOR);
    let homogeneity_budget = BUDGET_FACTOR * (truncation + ROUNDOFF_FLOOR);
    if top_mass > TOP_MASS_WARNING {
        report.notes.push(format!(
            "truncation warning: mass {top_mass:.3e} within {TOP_WINDOW} steps of P exceeds {TOP_MASS_WARNING}"
        ));
    }

    let stats = &mut report.statistics;
    stats.push(StatisticRecord::value("initial_exponent_gap", initial_gap, "<= 1e-14", initial_gap <= 1e-14));
    stats.push(StatisticRecord::value("pde_residual", residual, format!("<= budget {budget:.3e}"), residual <= budget));
    stats.push(StatisticRecord::value("differencing_estimate", differencing, "informational", true));
    stats.push(StatisticRecord::value("solver_estimate", solver, "informational", true));
    stats.push(StatisticRecord::value("truncation_estimate", truncation, "informational", true));
    stats.push(StatisticRecord::value("error_budget", budget, "informational", true));
    stats.push(StatisticRecord::value(
        "homogeneity_residual",
        homogeneity,
        format!("<= budget {homogeneity_budget:.3e}"),
        homogeneity <= homogeneity_budget,
    ));
    stats.push(StatisticRecord::value("top_window_mass", top_mass, "informational", true));
    stats.push(StatisticRecord::value("orientation_sign", sign, "informational", true));
    report.verdict = report.statistics.iter().all(|s| s.pass);
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(BurgersOutcome { report, sign, rows })
}
