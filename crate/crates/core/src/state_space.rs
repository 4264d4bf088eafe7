//! Finite-grid measures on `[0, P]` and rate kernels.
//!
//! Kernels are dense `(K+1) x (K+1)` matrices indexed by grid position,
//! row `rho_-` to column `rho_+`. The top row carries the conventional
//! self-rate `rates[K][K] = lambda`, so that every row (including the one
//! at `P`) has total rate `lambda`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::validation::{ValidationReport, ViolationKind};

/// Row-sum tolerance used by [`validate_rate_kernel`].
pub const RATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid<T> {
    states: Vec<T>,
}

impl<T: Scalar> StateGrid<T> {
    /// Strictly increasing states starting at exactly 0; the last state is `P`.
    pub fn new(states: Vec<T>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::arg("state grid needs at least two states"));
        }
        if states[0] != T::zero() {
            return Err(Error::arg(format!("first grid state must be 0, got {}", states[0])));
        }
        if states.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("non-finite grid state".into()));
        }
        if let Some(i) = states.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::arg(format!("grid states not strictly increasing at index {}", i + 1)));
        }
        Ok(Self { states })
    }

    /// `k + 1` equispaced states on `[0, p_max]`.
    pub fn uniform(k: usize, p_max: T) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("uniform grid needs k >= 1"));
        }
        let step = p_max / T::lit(k as f64);
        let states = (0..=k).map(|i| if i == k { p_max } else { step * T::lit(i as f64) }).collect();
        Self::new(states)
    }

    pub fn states(&self) -> &[T] {
        &self.states
    }

    /// Number of states, `K + 1`.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the top state `P`.
    pub fn top(&self) -> usize {
        self.states.len() - 1
    }

    pub fn p_max(&self) -> T {
        self.states[self.top()]
    }

    pub fn value(&self, i: usize) -> T {
        self.states[i]
    }

    /// Exact lookup of a grid value.
    pub fn index_of(&self, value: T) -> Option<usize> {
        self.states.binary_search_by(|s| s.partial_cmp(&value).unwrap_or(std::cmp::Ordering::Less)).ok()
    }
}

/// Weights of a (possibly signed) measure on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalMeasure<T> {
    pub weights: Vec<T>,
}

impl<T: Scalar> MarginalMeasure<T> {
    pub fn new(weights: Vec<T>) -> Self {
        Self { weights }
    }

    pub fn zeros(n: usize) -> Self {
        Self { weights: vec![T::zero(); n] }
    }

    /// Unit mass at grid index `i`.
    pub fn delta(n: usize, i: usize) -> Self {
        let mut m = Self::zeros(n);
        m.weights[i] = T::one();
        m
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> T {
        self.weights.iter().copied().sum()
    }

    pub fn min(&self) -> T {
        self.weights.iter().copied().fold(T::infinity(), T::min)
    }
}

/// Total-variation norm: sum of absolute weights.
pub fn tv_norm<T: Scalar>(weights: &[T]) -> Result<T> {
    let mut acc = T::zero();
    for (i, w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::Numeric(format!("non-finite weight {w} at index {i}")));
        }
        acc = acc + w.abs();
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateKernel<T> {
    n: usize,
    rates: Vec<T>,
}

impl<T: Scalar> RateKernel<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, rates: vec![T::zero(); n * n] }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::arg("kernel needs at least one row"));
        }
        let mut k = Self::zeros(n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::arg(format!("kernel row {i} has {} entries, expected {n}", row.len())));
            }
            k.rates[i * n..(i + 1) * n].copy_from_slice(&row);
        }
        Ok(k)
    }

    /// Dimension `K + 1`.
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.rates[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.rates[i * self.n + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.rates[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.rates[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[T] {
        &self.rates
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn row_sum(&self, i: usize) -> T {
        self.row(i).iter().copied().sum()
    }

    pub fn min_entry(&self) -> T {
        self.rates.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn scaled(&self, a: T) -> Self {
        Self { n: self.n, rates: self.rates.iter().map(|&r| r * a).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self + a * other`.
    pub(crate) fn axpy(&self, a: T, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        Self { n: self.n, rates: self.rates.iter().zip(&other.rates).map(|(&x, &y)| x + a * y).collect() }
    }

    fn zip_with(&self, other: &Self, op: impl Fn(T, T) -> T) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::arg(format!("kernel dimension mismatch: {} vs {}", self.n, other.n)));
        }
        Ok(Self { n: self.n, rates: self.rates.iter().zip(&other.rates).map(|(&a, &b)| op(a, b)).collect() })
    }

    /// Sets the top row to the conventional self-rate `lambda` at `[K][K]`.
    pub fn with_top_convention(mut self, lambda: T) -> Self {
        let top = self.n - 1;
        for j in 0..self.n {
            self.set(top, j, T::zero());
        }
        self.set(top, top, lambda);
        self
    }

    /// Every row jumps `step` grid positions up (capped at the top) at rate `lambda`.
    pub fn single_step(n: usize, step: usize, lambda: T) -> Result<Self> {
        if n < 2 || step == 0 {
            return Err(Error::arg("single_step kernel needs n >= 2 and step >= 1"));
        }
        let mut k = Self::zeros(n);
        for i in 0..n - 1 {
            k.set(i, (i + step).min(n - 1), lambda);
        }
        Ok(k.with_top_convention(lambda))
    }

    /// Every row spreads rate `lambda` uniformly over the strictly higher states.
    pub fn uniform_up(n: usize, lambda: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::arg("uniform_up kernel needs n >= 2"));
        }
        let mut k = Self::zeros(n);
        for i in 0..n - 1 {
            let share = lambda / T::lit((n - 1 - i) as f64);
            for j in i + 1..n {
                k.set(i, j, share);
            }
        }
        Ok(k.with_top_convention(lambda))
    }
}

/// `sup` over rows of the row's TV norm.
pub fn kernel_norm<T: Scalar>(k: &RateKernel<T>) -> Result<T> {
    let mut best = T::zero();
    for i in 0..k.dim() {
        best = best.max(tv_norm(k.row(i))?);
    }
    Ok(best)
}

/// Checks nonnegativity, triangularity, the top-state convention and
/// constant total rate `lambda`; with `strict_support`, also that no row
/// below the top jumps into `P`.
pub fn validate_rate_kernel<T: Scalar>(g: &RateKernel<T>, lambda: T, strict_support: bool) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = g.dim();
    let top = n - 1;
    let tol = T::lit(RATE_TOL);
    for i in 0..n {
        for j in 0..n {
            let v = g.get(i, j);
            if !v.is_finite() || v < T::zero() {
                report.push(ViolationKind::Negative, format!("row {i}, col {j}"), v.as_f64());
            }
            let below_or_on_diag = j < i || (j == i && i != top);
            if below_or_on_diag && v != T::zero() {
                report.push(ViolationKind::Triangularity, format!("row {i}, col {j}"), v.as_f64());
            }
        }
        let sum = g.row_sum(i);
        if i < top && (sum - lambda).abs() > tol {
            report.push(ViolationKind::ConstantRate, format!("row {i}"), sum.as_f64());
        }
        if strict_support && i < top && g.get(i, top) != T::zero() {
            report.push(ViolationKind::Support, format!("row {i}, col {top}"), g.get(i, top).as_f64());
        }
    }
    if (g.get(top, top) - lambda).abs() > tol {
        report.push(ViolationKind::TopState, format!("row {top}, col {top}"), g.get(top, top).as_f64());
    }
    report
}

/// Time-indexed kernels.
///
/// [`KernelTrajectory::at`] is piecewise constant from the left: it returns
/// the kernel stored at the largest time not exceeding the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTrajectory<T> {
    times: Vec<T>,
    kernels: Vec<RateKernel<T>>,
}

impl<T: Scalar> KernelTrajectory<T> {
    pub fn new(times: Vec<T>, kernels: Vec<RateKernel<T>>) -> Result<Self> {
        if times.is_empty() || times.len() != kernels.len() {
            return Err(Error::arg("trajectory needs matching, nonempty times and kernels"));
        }
        if times[0] != T::zero() {
            return Err(Error::arg("trajectory must start at t = 0"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("trajectory times must be strictly increasing"));
        }
        let n = kernels[0].dim();
        if kernels.iter().any(|k| k.dim() != n) {
            return Err(Error::arg("trajectory kernels have inconsistent dimensions"));
        }
        Ok(Self { times, kernels })
    }

    /// Constant trajectory `f(t) = k` on `[0, end]`.
    pub fn constant(k: RateKernel<T>, end: T) -> Result<Self> {
        if end > T::zero() {
            Self::new(vec![T::zero(), end], vec![k.clone(), k])
        } else {
            Self::new(vec![T::zero()], vec![k])
        }
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn kernels(&self) -> &[RateKernel<T>] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn end_time(&self) -> T {
        self.times[self.times.len() - 1]
    }

    pub fn dim(&self) -> usize {
        self.kernels[0].dim()
    }

    pub fn last(&self) -> &RateKernel<T> {
        &self.kernels[self.kernels.len() - 1]
    }

    fn check_covered(&self, t: T) -> Result<()> {
        let slack = T::lit(1e-12) * (T::one() + self.end_time().abs());
        if t.is_nan() || t < T::zero() || t > self.end_time() + slack {
            return Err(Error::arg(format!("time {t} outside trajectory coverage [0, {}]", self.end_time())));
        }
        Ok(())
    }

    fn segment(&self, t: T) -> usize {
        // last index with times[idx] <= t
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Piecewise-constant-left lookup.
    pub fn at(&self, t: T) -> Result<&RateKernel<T>> {
        self.check_covered(t)?;
        Ok(&self.kernels[self.segment(t)])
    }

    /// Linear interpolation between stored kernels (used by the marginal solver).
    pub fn interpolate(&self, t: T) -> Result<RateKernel<T>> {
        self.check_covered(t)?;
        let i = self.segment(t);
        if i + 1 >= self.times.len() || t == self.times[i] {
            return Ok(self.kernels[i].clone());
        }
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        let diff = self.kernels[i + 1].sub(&self.kernels[i])?;
        Ok(self.kernels[i].axpy(w, &diff))
    }

    /// `max_t ||f(t)||` over the stored kernels.
    pub fn max_norm(&self) -> Result<T> {
        let mut best = T::zero();
        for k in &self.kernels {
            best = best.max(kernel_norm(k)?);
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn three_state() -> RateKernel<f64> {
        RateKernel::from_rows(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]]).unwrap()
    }

    #[test]
    fn tv_norm_examples() {
        assert_eq!(tv_norm(&[0.5, 0.5, 0.0]).unwrap(), 1.0);
        assert_eq!(tv_norm(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(tv_norm(&[0.5, -0.25, 0.0]).unwrap(), 0.75);
        assert!(matches!(tv_norm(&[f64::NAN]), Err(Error::Numeric(_))));
    }

    #[test]
    fn kernel_norm_examples() {
        let stochastic =
            RateKernel::from_rows(vec![vec![0.0, 0.5, 0.5], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(kernel_norm(&stochastic).unwrap(), 1.0);
        assert_eq!(kernel_norm(&RateKernel::<f64>::zeros(3)).unwrap(), 0.0);
        let k = RateKernel::from_rows(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0], vec![0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(kernel_norm(&k).unwrap(), 2.0);
    }

    #[test]
    fn validate_examples() {
        assert!(validate_rate_kernel(&three_state(), 1.0, false).is_valid());

        let mut lower = three_state();
        lower.set(1, 0, 0.5);
        assert!(validate_rate_kernel(&lower, 1.0, false).has(ViolationKind::Triangularity));

        let uneven =
            RateKernel::from_rows(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let report = validate_rate_kernel(&uneven, 1.0, false);
        assert!(report.has(ViolationKind::ConstantRate));
        assert_eq!(report.violations.len(), 1);
    }

    #[test]
    fn strict_support_flags_jumps_into_top() {
        let report = validate_rate_kernel(&three_state(), 1.0, true);
        assert!(report.has(ViolationKind::Support));
    }

    #[test]
    fn missing_top_convention_and_negatives_are_reported() {
        let mut k = three_state();
        k.set(2, 2, 0.0);
        assert!(validate_rate_kernel(&k, 1.0, false).has(ViolationKind::TopState));
        let mut k = three_state();
        k.set(0, 1, -1.0);
        k.set(0, 2, 2.0);
        assert!(validate_rate_kernel(&k, 1.0, false).has(ViolationKind::Negative));
        let mut k = three_state();
        k.set(0, 0, 0.5);
        k.set(0, 1, 0.5);
        assert!(validate_rate_kernel(&k, 1.0, false).has(ViolationKind::Triangularity));
    }

    #[test]
    fn generators_are_valid() {
        for n in 2..8 {
            for step in 1..4 {
                let k = RateKernel::<f64>::single_step(n, step, 1.5).unwrap();
                assert!(validate_rate_kernel(&k, 1.5, false).is_valid(), "single_step {n} {step}");
            }
            let k = RateKernel::<f64>::uniform_up(n, 0.7).unwrap();
            assert!(validate_rate_kernel(&k, 0.7, false).is_valid(), "uniform_up {n}");
        }
        assert!(validate_rate_kernel(&RateKernel::<f64>::single_step(4, 1, 0.0).unwrap(), 0.0, false).is_valid());
    }

    #[test]
    fn grid_construction() {
        let g = StateGrid::<f64>::uniform(4, 2.0).unwrap();
        assert_eq!(g.states(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.index_of(1.5), Some(3));
        assert_eq!(g.index_of(1.2), None);
        assert!(StateGrid::new(vec![0.1, 1.0]).is_err());
        assert!(StateGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(StateGrid::new(vec![0.0]).is_err());
    }

    #[test]
    fn trajectory_lookup_is_left_continuous() {
        let a = RateKernel::<f64>::zeros(2);
        let b = a.clone().with_top_convention(1.0);
        let traj = KernelTrajectory::new(vec![0.0, 1.0], vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(traj.at(0.5).unwrap(), &a);
        assert_eq!(traj.at(1.0).unwrap(), &b);
        assert_eq!(traj.interpolate(0.5).unwrap().get(1, 1), 0.5);
        assert!(traj.at(1.5).is_err());
        assert!(traj.at(-0.1).is_err());
        assert!(KernelTrajectory::new(vec![0.0, 0.0], vec![a.clone(), a.clone()]).is_err());
        assert!(KernelTrajectory::new(vec![0.5], vec![a]).is_err());
    }

    fn kernel_strategy() -> impl Strategy<Value = RateKernel<f64>> {
        proptest::collection::vec(-3.0..3.0f64, 16)
            .prop_map(|v| RateKernel::from_rows(v.chunks(4).map(|c| c.to_vec()).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn kernel_norm_is_a_norm(k1 in kernel_strategy(), k2 in kernel_strategy(), a in -5.0..5.0f64) {
            let n1 = kernel_norm(&k1).unwrap();
            let scaled = kernel_norm(&k1.scaled(a)).unwrap();
            prop_assert!((scaled - a.abs() * n1).abs() <= 1e-12 * (1.0 + scaled));
            let sum = kernel_norm(&k1.add(&k2).unwrap()).unwrap();
            prop_assert!(sum <= n1 + kernel_norm(&k2).unwrap() + 1e-12);
        }
    }
}
