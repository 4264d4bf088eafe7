//! Kinetic and marginal equations on a finite grid.
//!
//! The kinetic operator acts on a rate kernel `f` as
//!
//! ```text
//! (L f)(r-, r+) = sum_{r*} (H[r*, r+] - H[r-, r*]) f(r-, r*) f(r*, r+)
//!               - [a(r+) - a(r-)] f(r-, r+),      a(r) = sum_{r*} H[r, r*] f(r, r*)
//! ```
//!
//! and the marginal operator as
//!
//! ```text
//! (L0 l)(r0) = sum_{r*} H[r*, r0] l(r*) f(r*, r0) - a(r0) l(r0).
//! ```
//!
//! Two integrators are provided: classical RK4 on `f`, and the
//! positivity-preserving explicit scheme for `h = e^{ct} f` with
//! `c = lambda H'(P)`, written here directly in terms of `f`:
//! `f_{j+1} = e^{-c dt} [(1 + c dt) f_j + dt L(f_j)]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::scalar::Scalar;
use crate::state_space::{kernel_norm, validate_rate_kernel, KernelTrajectory, MarginalMeasure, RateKernel, StateGrid};

/// Row-sum drift above which a solution is flagged.
pub const DRIFT_FLAG: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KineticOperatorForm {
    /// Loss term `[a(r+) - a(r-)] f(r-, r+)`.
    #[default]
    Paper,
    /// Loss term written with relative velocities; conserves every row sum
    /// separately, constant or not.
    LossExpanded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    PaperEuler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverScheme<T> {
    pub kind: SchemeKind,
    pub dt: T,
    pub substeps_per_output: usize,
}

impl<T: Scalar> SolverScheme<T> {
    pub fn new(kind: SchemeKind, dt: T, substeps_per_output: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > T::zero()) {
            return Err(Error::arg(format!("solver dt must be positive, got {dt}")));
        }
        if substeps_per_output == 0 {
            return Err(Error::arg("substeps_per_output must be >= 1"));
        }
        Ok(Self { kind, dt, substeps_per_output })
    }

    pub fn rk4(dt: T) -> Self {
        Self::new(SchemeKind::Rk4, dt, 1).expect("valid rk4 scheme")
    }

    pub fn paper_euler(dt: T) -> Self {
        Self::new(SchemeKind::PaperEuler, dt, 1).expect("valid euler scheme")
    }

    pub fn with_output_every(mut self, substeps: usize) -> Self {
        self.substeps_per_output = substeps.max(1);
        self
    }
}

/// Grid-bound evaluator for the kinetic and marginal operators.
///
/// Caches the table `H[v_i, v_j]` so the operators cost `O(K^3)` and
/// `O(K^2)` arithmetic with no further `H` evaluations.
#[derive(Debug, Clone)]
pub struct KineticOperator<T> {
    grid: StateGrid<T>,
    hamiltonian: Hamiltonian<T>,
    speeds: Vec<T>,
}

impl<T: Scalar> KineticOperator<T> {
    pub fn new(hamiltonian: &Hamiltonian<T>, grid: &StateGrid<T>) -> Result<Self> {
        let p = hamiltonian.p_max();
        if (grid.p_max() - p).abs() > T::lit(1e-12) * (T::one() + p.abs()) {
            return Err(Error::arg(format!("grid top state {} does not match Hamiltonian bound {}", grid.p_max(), p)));
        }
        let n = grid.len();
        let mut speeds = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                speeds[i * n + j] = hamiltonian.dd2(grid.value(i), grid.value(j));
            }
        }
        Ok(Self { grid: grid.clone(), hamiltonian: hamiltonian.clone(), speeds })
    }

    pub fn grid(&self) -> &StateGrid<T> {
        &self.grid
    }

    pub fn hamiltonian(&self) -> &Hamiltonian<T> {
        &self.hamiltonian
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// `H[v_i, v_j]`.
    #[inline]
    pub fn speed(&self, i: usize, j: usize) -> T {
        self.speeds[i * self.dim() + j]
    }

    fn check_dim(&self, n: usize, what: &str) -> Result<()> {
        if n != self.dim() {
            return Err(Error::arg(format!("{what} has dimension {n}, grid has {}", self.dim())));
        }
        Ok(())
    }

    /// `a(r) = sum_{r*} H[r, r*] f(r, r*)`, the speed-weighted outflow of each row.
    pub fn outflow(&self, f: &RateKernel<T>) -> Vec<T> {
        let n = self.dim();
        (0..n).map(|i| (i..n).map(|j| self.speed(i, j) * f.get(i, j)).sum()).collect()
    }

    /// Gain term `sum_{r*} (H[r*, r+] - H[r-, r*]) f(r-, r*) f(r*, r+)`.
    fn gain(&self, f: &RateKernel<T>) -> RateKernel<T> {
        let n = self.dim();
        let mut out = RateKernel::zeros(n);
        for i in 0..n {
            let row = out.row_mut(i);
            for j in i..n {
                let fij = f.get(i, j);
                if fij == T::zero() {
                    continue;
                }
                let left = self.speed(i, j);
                for k in j..n {
                    let fjk = f.get(j, k);
                    if fjk == T::zero() {
                        continue;
                    }
                    // nonnegative by convexity; clamp roundoff
                    let relative = (self.speed(j, k) - left).max(T::zero());
                    row[k] = row[k] + relative * fij * fjk;
                }
            }
        }
        out
    }

    /// Kinetic operator applied to `f`; the result is signed and upper-triangular.
    pub fn apply(&self, f: &RateKernel<T>, form: KineticOperatorForm) -> Result<RateKernel<T>> {
        self.check_dim(f.dim(), "kernel")?;
        let n = self.dim();
        let a = self.outflow(f);
        let mut out = self.gain(f);
        match form {
            KineticOperatorForm::Paper => {
                for i in 0..n {
                    for k in i..n {
                        let fik = f.get(i, k);
                        if fik != T::zero() {
                            out.set(i, k, out.get(i, k) - (a[k] - a[i]) * fik);
                        }
                    }
                }
            }
            KineticOperatorForm::LossExpanded => {
                let sums: Vec<T> = (0..n).map(|i| f.row_sum(i)).collect();
                for i in 0..n {
                    for k in i..n {
                        let fik = f.get(i, k);
                        if fik != T::zero() {
                            let s = self.speed(i, k);
                            let ahead = a[k] - s * sums[k];
                            let behind = a[i] - s * sums[i];
                            out.set(i, k, out.get(i, k) - (ahead - behind) * fik);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Marginal operator; the output has total mass zero for any `f`.
    pub fn apply_marginal(&self, ell: &MarginalMeasure<T>, f: &RateKernel<T>) -> Result<MarginalMeasure<T>> {
        self.check_dim(ell.len(), "marginal")?;
        self.check_dim(f.dim(), "kernel")?;
        let n = self.dim();
        let a = self.outflow(f);
        let mut out = MarginalMeasure::zeros(n);
        for k in 0..n {
            let inflow: T = (0..=k).map(|j| self.speed(j, k) * ell.weights[j] * f.get(j, k)).sum();
            out.weights[k] = inflow - a[k] * ell.weights[k];
        }
        Ok(out)
    }

    /// Gain part of the marginal operator at `r0`.
    fn marginal_inflow(&self, ell: &MarginalMeasure<T>, f: &RateKernel<T>, r0: usize) -> T {
        (0..=r0).map(|j| self.speed(j, r0) * ell.weights[j] * f.get(j, r0)).sum()
    }

    fn check_chain(&self, chain: &[usize], ell: &MarginalMeasure<T>, f: &RateKernel<T>) -> Result<()> {
        self.check_dim(ell.len(), "marginal")?;
        self.check_dim(f.dim(), "kernel")?;
        if chain.is_empty() {
            return Err(Error::arg("chain must contain at least rho_0"));
        }
        if chain.iter().any(|&c| c >= self.dim()) {
            return Err(Error::arg("chain index outside grid"));
        }
        if chain.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::arg("chain values must be nondecreasing"));
        }
        if ell.weights[chain[0]] == T::zero() {
            return Err(Error::ZeroDensity { location: format!("marginal at rho_0 = index {}", chain[0]) });
        }
        for (pos, w) in chain.windows(2).enumerate() {
            if f.get(w[0], w[1]) == T::zero() {
                return Err(Error::ZeroDensity { location: format!("link {} ({} -> {})", pos + 1, w[0], w[1]) });
            }
        }
        Ok(())
    }

    /// Time-derivative weight of the chain density `l(r0) prod f(r_{j-1}, r_j)`,
    /// in the telescoped form: marginal gain ratio, minus the outflow of the
    /// last state, plus the kinetic gain ratios along the chain.
    pub fn lstar_weight(&self, chain: &[usize], ell: &MarginalMeasure<T>, f: &RateKernel<T>) -> Result<T> {
        self.check_chain(chain, ell, f)?;
        let r0 = chain[0];
        let a = self.outflow(f);
        let gain = self.gain(f);
        let mut w = self.marginal_inflow(ell, f, r0) / ell.weights[r0] - a[chain[chain.len() - 1]];
        for link in chain.windows(2) {
            w = w + gain.get(link[0], link[1]) / f.get(link[0], link[1]);
        }
        Ok(w)
    }

    /// Same weight before telescoping: `(L0 l)(r0)/l(r0) + sum_i (L f)(r_{i-1}, r_i)/f(r_{i-1}, r_i)`.
    pub fn lstar_weight_long(&self, chain: &[usize], ell: &MarginalMeasure<T>, f: &RateKernel<T>) -> Result<T> {
        self.check_chain(chain, ell, f)?;
        let r0 = chain[0];
        let dl = self.apply_marginal(ell, f)?;
        let df = self.apply(f, KineticOperatorForm::Paper)?;
        let mut w = dl.weights[r0] / ell.weights[r0];
        for link in chain.windows(2) {
            w = w + df.get(link[0], link[1]) / f.get(link[0], link[1]);
        }
        Ok(w)
    }

    /// One explicit step of the positivity-preserving scheme.
    fn euler_step(&self, f: &RateKernel<T>, dt: T, c: T) -> RateKernel<T> {
        let n = self.dim();
        let a = self.outflow(f);
        let mut next = self.gain(f);
        let damp = (-c * dt).exp();
        for i in 0..n {
            for k in i..n {
                let fik = f.get(i, k);
                // (1 + c dt - dt (a_k - a_i)) >= 0 since a_k <= c
                let keep = T::one() + dt * (c - a[k] + a[i]);
                let v = dt * next.get(i, k) + keep * fik;
                next.set(i, k, damp * v);
            }
        }
        next
    }

    fn rk4_step(&self, f: &RateKernel<T>, dt: T) -> RateKernel<T> {
        let form = KineticOperatorForm::Paper;
        let half = dt / T::lit(2.0);
        let k1 = self.apply(f, form).expect("dimension checked");
        let k2 = self.apply(&f.axpy(half, &k1), form).expect("dimension checked");
        let k3 = self.apply(&f.axpy(half, &k2), form).expect("dimension checked");
        let k4 = self.apply(&f.axpy(dt, &k3), form).expect("dimension checked");
        let sixth = dt / T::lit(6.0);
        let third = dt / T::lit(3.0);
        f.axpy(sixth, &k1).axpy(third, &k2).axpy(third, &k3).axpy(sixth, &k4)
    }

    fn marginal_rhs(&self, ell: &MarginalMeasure<T>, traj: &KernelTrajectory<T>, t: T) -> Result<MarginalMeasure<T>> {
        let f = traj.interpolate(t.min(traj.end_time()))?;
        self.apply_marginal(ell, &f)
    }
}

/// Integration step sizes covering `[0, end]` with the last step shortened.
fn step_sizes<T: Scalar>(end: T, dt: T) -> Vec<T> {
    let ratio = (end / dt).as_f64();
    let mut n = ratio.ceil() as usize;
    if n > 0 && (ratio - (n - 1) as f64) < 1e-9 {
        n -= 1;
    }
    let n = n.max(1);
    (0..n)
        .map(|j| {
            let start = dt * T::lit(j as f64);
            if j + 1 == n {
                end - start
            } else {
                dt
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticSolution<T> {
    pub trajectory: KernelTrajectory<T>,
    /// `max |row_sum(f(t)) - row_sum(g)|` over stored times and rows.
    pub max_row_sum_drift: T,
    /// Minimum entry over every integration step.
    pub min_entry: T,
    pub drift_flagged: bool,
    /// Lower triangle (and, when `g` had all of it empty, column `P` below
    /// the top row) stayed exactly zero at every step.
    pub support_preserved: bool,
}

fn structural_zeros<T: Scalar>(g: &RateKernel<T>) -> Vec<(usize, usize)> {
    let n = g.dim();
    let top = n - 1;
    // column P can only fill through gain terms from itself
    let empty_top_column = (0..top).all(|i| g.get(i, top) == T::zero());
    let mut zeros = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let lower = j < i || (j == i && i != top);
            let top_column = empty_top_column && j == top && i < top;
            if (lower && g.get(i, j) == T::zero()) || top_column {
                zeros.push((i, j));
            }
        }
    }
    zeros
}

/// Solves the kinetic equation from a kernel satisfying the full rate
/// assumptions (constant total rate, top-state convention).
pub fn solve_kinetic<T: Scalar>(
    g: &RateKernel<T>,
    hamiltonian: &Hamiltonian<T>,
    grid: &StateGrid<T>,
    horizon: T,
    scheme: &SolverScheme<T>,
) -> Result<KineticSolution<T>> {
    if g.dim() != grid.len() {
        return Err(Error::arg("kernel dimension does not match grid"));
    }
    let lambda = g.get(grid.top(), grid.top());
    let report = validate_rate_kernel(g, lambda, false);
    if !report.is_valid() {
        return Err(Error::arg(format!("invalid rate kernel: {report}")));
    }
    let op = KineticOperator::new(hamiltonian, grid)?;
    integrate_kinetic(&op, g, horizon, scheme)
}

/// Integrates the kinetic equation from any nonnegative upper-triangular kernel.
///
/// Unlike [`solve_kinetic`] this does not insist on constant row sums, so
/// it can be used for kernels with the strict support property (which on a
/// finite grid leaves row `K-1` empty).
pub fn integrate_kinetic<T: Scalar>(
    op: &KineticOperator<T>,
    g: &RateKernel<T>,
    horizon: T,
    scheme: &SolverScheme<T>,
) -> Result<KineticSolution<T>> {
    op.check_dim(g.dim(), "kernel")?;
    if !(horizon.is_finite() && horizon > T::zero()) {
        return Err(Error::arg(format!("horizon must be positive, got {horizon}")));
    }
    if g.min_entry() < T::zero() {
        return Err(Error::arg("initial kernel has negative entries"));
    }
    let zeros = structural_zeros(g);
    if zeros.iter().any(|&(i, j)| j < i && g.get(i, j) != T::zero()) {
        return Err(Error::arg("initial kernel is not upper-triangular"));
    }
    let c = kernel_norm(g)? * op.hamiltonian().max_speed();
    if scheme.kind == SchemeKind::PaperEuler && c > T::zero() && scheme.dt > T::one() / (T::lit(2.0) * c) {
        return Err(Error::arg(format!(
            "paper_euler dt {} exceeds stability bound 1/(2c) = {}",
            scheme.dt,
            T::one() / (T::lit(2.0) * c)
        )));
    }

    let initial_sums: Vec<T> = (0..g.dim()).map(|i| g.row_sum(i)).collect();
    let mut drift = T::zero();
    let mut min_entry = g.min_entry();
    let mut support_preserved = true;

    let mut times = vec![T::zero()];
    let mut kernels = vec![g.clone()];
    let mut f = g.clone();
    let mut t = T::zero();
    let steps = step_sizes(horizon, scheme.dt);
    let last = steps.len() - 1;
    for (j, &h) in steps.iter().enumerate() {
        f = match scheme.kind {
            SchemeKind::PaperEuler => op.euler_step(&f, h, c),
            SchemeKind::Rk4 => op.rk4_step(&f, h),
        };
        t = if j == last { horizon } else { t + h };
        min_entry = min_entry.min(f.min_entry());
        if zeros.iter().any(|&(a, b)| f.get(a, b) != T::zero()) {
            support_preserved = false;
        }
        if (j + 1) % scheme.substeps_per_output == 0 || j == last {
            for (i, &s) in initial_sums.iter().enumerate() {
                drift = drift.max((f.row_sum(i) - s).abs());
            }
            times.push(t);
            kernels.push(f.clone());
        }
    }
    Ok(KineticSolution {
        trajectory: KernelTrajectory::new(times, kernels)?,
        max_row_sum_drift: drift,
        min_entry,
        drift_flagged: drift > T::lit(DRIFT_FLAG),
        support_preserved,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSolution<T> {
    pub times: Vec<T>,
    pub marginals: Vec<MarginalMeasure<T>>,
    pub max_mass_drift: T,
    pub min_entry: T,
}

impl<T: Scalar> MarginalSolution<T> {
    pub fn last(&self) -> &MarginalMeasure<T> {
        &self.marginals[self.marginals.len() - 1]
    }

    /// Piecewise-constant-left lookup, matching [`KernelTrajectory::at`].
    pub fn at(&self, t: T) -> &MarginalMeasure<T> {
        let idx = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        &self.marginals[idx]
    }
}

/// Solves the marginal equation with `l(0) = delta_0` driven by `f_traj`.
pub fn solve_marginal<T: Scalar>(
    f_traj: &KernelTrajectory<T>,
    hamiltonian: &Hamiltonian<T>,
    grid: &StateGrid<T>,
    horizon: T,
    scheme: &SolverScheme<T>,
) -> Result<MarginalSolution<T>> {
    let op = KineticOperator::new(hamiltonian, grid)?;
    integrate_marginal(&op, f_traj, horizon, scheme)
}

pub fn integrate_marginal<T: Scalar>(
    op: &KineticOperator<T>,
    f_traj: &KernelTrajectory<T>,
    horizon: T,
    scheme: &SolverScheme<T>,
) -> Result<MarginalSolution<T>> {
    op.check_dim(f_traj.dim(), "trajectory")?;
    if !(horizon.is_finite() && horizon > T::zero()) {
        return Err(Error::arg(format!("horizon must be positive, got {horizon}")));
    }
    let slack = T::lit(1e-12) * (T::one() + horizon);
    if f_traj.end_time() + slack < horizon {
        return Err(Error::arg(format!("kernel trajectory ends at {} before horizon {horizon}", f_traj.end_time())));
    }
    let n = op.dim();
    let mut ell = MarginalMeasure::delta(n, 0);
    let mut times = vec![T::zero()];
    let mut marginals = vec![ell.clone()];
    let mut drift = T::zero();
    let mut min_entry = T::zero();
    let mut t = T::zero();
    let steps = step_sizes(horizon, scheme.dt);
    let last = steps.len() - 1;
    let combine = |base: &MarginalMeasure<T>, a: T, d: &MarginalMeasure<T>| {
        MarginalMeasure::new(base.weights.iter().zip(&d.weights).map(|(&x, &y)| x + a * y).collect())
    };
    for (j, &h) in steps.iter().enumerate() {
        ell = match scheme.kind {
            SchemeKind::PaperEuler => {
                let d = op.marginal_rhs(&ell, f_traj, t)?;
                combine(&ell, h, &d)
            }
            SchemeKind::Rk4 => {
                let half = h / T::lit(2.0);
                let k1 = op.marginal_rhs(&ell, f_traj, t)?;
                let k2 = op.marginal_rhs(&combine(&ell, half, &k1), f_traj, t + half)?;
                let k3 = op.marginal_rhs(&combine(&ell, half, &k2), f_traj, t + half)?;
                let k4 = op.marginal_rhs(&combine(&ell, h, &k3), f_traj, t + h)?;
                let s = h / T::lit(6.0);
                let th = h / T::lit(3.0);
                combine(&combine(&combine(&combine(&ell, s, &k1), th, &k2), th, &k3), s, &k4)
            }
        };
        t = if j == last { horizon } else { t + h };
        min_entry = min_entry.min(ell.min());
        if (j + 1) % scheme.substeps_per_output == 0 || j == last {
            drift = drift.max((ell.total() - T::one()).abs());
            times.push(t);
            marginals.push(ell.clone());
        }
    }
    Ok(MarginalSolution { times, marginals, max_mass_drift: drift, min_entry })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub steps_per_unit: usize,
    /// `||h^n(T) - h^{2n}(T)||` in the kernel norm.
    pub difference: f64,
    /// Previous row's difference divided by this one (`None` for the first row).
    pub ratio: Option<f64>,
}

/// Successive differences of the positivity-preserving scheme at `n` and
/// `2n` steps per unit time, in the rescaled variable `h = e^{cT} f`.
pub fn convergence_study<T: Scalar>(
    g: &RateKernel<T>,
    hamiltonian: &Hamiltonian<T>,
    grid: &StateGrid<T>,
    horizon: T,
    n_values: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    if n_values.len() < 2 {
        return Err(Error::arg("convergence study needs at least two step counts"));
    }
    let op = KineticOperator::new(hamiltonian, grid)?;
    let c = kernel_norm(g)? * hamiltonian.max_speed();
    let rescale = (c * horizon).exp();
    let run = |n: usize| -> Result<RateKernel<T>> {
        let scheme = SolverScheme::new(SchemeKind::PaperEuler, T::one() / T::lit(n as f64), usize::MAX)?;
        let sol = integrate_kinetic(&op, g, horizon, &scheme)?;
        Ok(sol.trajectory.last().scaled(rescale))
    };
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(n_values.len());
    for &n in n_values {
        if n == 0 {
            return Err(Error::arg("step counts must be positive"));
        }
        let diff = kernel_norm(&run(n)?.sub(&run(2 * n)?)?)?.as_f64();
        let ratio = rows.last().map(|r| r.difference / diff);
        rows.push(ConvergenceRow { steps_per_unit: n, difference: diff, ratio });
    }
    Ok(rows)
}

/// `L f` for the given form; convenience wrapper over [`KineticOperator::apply`].
pub fn apply_kinetic_operator<T: Scalar>(
    f: &RateKernel<T>,
    hamiltonian: &Hamiltonian<T>,
    grid: &StateGrid<T>,
    form: KineticOperatorForm,
) -> Result<RateKernel<T>> {
    KineticOperator::new(hamiltonian, grid)?.apply(f, form)
}

pub fn apply_marginal_operator<T: Scalar>(
    ell: &MarginalMeasure<T>,
    f: &RateKernel<T>,
    hamiltonian: &Hamiltonian<T>,
    grid: &StateGrid<T>,
) -> Result<MarginalMeasure<T>> {
    KineticOperator::new(hamiltonian, grid)?.apply_marginal(ell, f)
}

pub fn lstar_weight<T: Scalar>(
    chain: &[usize],
    ell: &MarginalMeasure<T>,
    f: &RateKernel<T>,
    hamiltonian: &Hamiltonian<T>,
    grid: &StateGrid<T>,
) -> Result<T> {
    KineticOperator::new(hamiltonian, grid)?.lstar_weight(chain, ell, f)
}
