//! Flux functions and their divided differences.
//!
//! Every velocity in the particle system and every rate in the kinetic
//! equation is a divided difference of the flux `H`, so this module is the
//! single place where `H` is evaluated. Repeated points use the confluent
//! limit (derivative values), which the top-state convention needs for
//! `H[P, P]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::validation::{ValidationReport, ViolationKind};

/// Tolerance on second divided differences and on `H'(0)`.
pub const CONVEXITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HamiltonianKind<T> {
    /// `p^2 / 2`
    Quadratic,
    /// `c p^2`
    ScaledQuadratic { c: T },
    /// `sum_k a_k p^k`, coefficients in ascending degree.
    Polynomial { coefficients: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian<T> {
    kind: HamiltonianKind<T>,
    p_max: T,
}

impl<T: Scalar> Hamiltonian<T> {
    pub fn new(kind: HamiltonianKind<T>, p_max: T) -> Result<Self> {
        if !(p_max.is_finite() && p_max > T::zero()) {
            return Err(Error::arg(format!("upper state bound P must be positive and finite, got {p_max}")));
        }
        if let HamiltonianKind::Polynomial { coefficients } = &kind {
            if coefficients.is_empty() {
                return Err(Error::arg("polynomial Hamiltonian needs at least one coefficient"));
            }
            if coefficients.iter().any(|c| !c.is_finite()) {
                return Err(Error::Numeric("non-finite polynomial coefficient".into()));
            }
        }
        if let HamiltonianKind::ScaledQuadratic { c } = &kind {
            if !c.is_finite() {
                return Err(Error::Numeric("non-finite quadratic scale".into()));
            }
        }
        Ok(Self { kind, p_max })
    }

    /// `p^2 / 2` on `[0, p_max]`.
    pub fn quadratic(p_max: T) -> Result<Self> {
        Self::new(HamiltonianKind::Quadratic, p_max)
    }

    pub fn scaled_quadratic(c: T, p_max: T) -> Result<Self> {
        Self::new(HamiltonianKind::ScaledQuadratic { c }, p_max)
    }

    pub fn polynomial(coefficients: Vec<T>, p_max: T) -> Result<Self> {
        Self::new(HamiltonianKind::Polynomial { coefficients }, p_max)
    }

    pub fn kind(&self) -> &HamiltonianKind<T> {
        &self.kind
    }

    /// Upper state bound `P`.
    pub fn p_max(&self) -> T {
        self.p_max
    }

    /// Kind, coefficients and `P` as plain JSON numbers.
    pub fn describe(&self) -> serde_json::Value {
        let kind = match &self.kind {
            HamiltonianKind::Quadratic => serde_json::json!({ "kind": "quadratic" }),
            HamiltonianKind::ScaledQuadratic { c } => {
                serde_json::json!({ "kind": "scaled_quadratic", "c": c.as_f64() })
            }
            HamiltonianKind::Polynomial { coefficients } => serde_json::json!({
                "kind": "polynomial",
                "coefficients": coefficients.iter().map(|c| c.as_f64()).collect::<Vec<_>>(),
            }),
        };
        serde_json::json!({ "flux": kind, "p_max": self.p_max.as_f64() })
    }

    pub fn value(&self, p: T) -> T {
        match &self.kind {
            HamiltonianKind::Quadratic => p * p / T::lit(2.0),
            HamiltonianKind::ScaledQuadratic { c } => *c * p * p,
            HamiltonianKind::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(T::zero(), |acc, &a| acc * p + a)
            }
        }
    }

    pub fn derivative(&self, p: T) -> T {
        match &self.kind {
            HamiltonianKind::Quadratic => p,
            HamiltonianKind::ScaledQuadratic { c } => T::lit(2.0) * *c * p,
            HamiltonianKind::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(T::zero(), |acc, (k, &a)| acc * p + a * T::lit(k as f64)),
        }
    }

    pub fn second_derivative(&self, p: T) -> T {
        match &self.kind {
            HamiltonianKind::Quadratic => T::one(),
            HamiltonianKind::ScaledQuadratic { c } => T::lit(2.0) * *c,
            HamiltonianKind::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(T::zero(), |acc, (k, &a)| acc * p + a * T::lit((k * (k - 1)) as f64)),
        }
    }

    /// `H'(P)`: bound on every shock speed and the thinning envelope factor.
    pub fn max_speed(&self) -> T {
        self.derivative(self.p_max)
    }

    fn check_domain(&self, p: T) -> Result<()> {
        if p.is_nan() || p < T::zero() || p > self.p_max {
            return Err(Error::Domain { value: p.as_f64(), lower: 0.0, upper: self.p_max.as_f64() });
        }
        Ok(())
    }

    /// Divided difference `H[p_1, ..., p_k]` for `k` in 1..=3.
    ///
    /// Arguments are sorted first, so the result is exactly symmetric.
    pub fn divided_difference(&self, points: &[T]) -> Result<T> {
        if points.is_empty() || points.len() > 3 {
            return Err(Error::arg(format!("divided difference takes 1 to 3 points, got {}", points.len())));
        }
        for &p in points {
            self.check_domain(p)?;
        }
        let mut p = [T::zero(); 3];
        p[..points.len()].copy_from_slice(points);
        let p = &mut p[..points.len()];
        p.sort_by(|a, b| a.partial_cmp(b).expect("checked non-NaN"));
        Ok(match *p {
            [a] => self.value(a),
            [a, b] => self.dd2(a, b),
            [a, b, c] => self.dd3(a, b, c),
            _ => unreachable!(),
        })
    }

    /// First divided difference without domain checks; `a <= b` not required.
    #[inline]
    pub(crate) fn dd2(&self, a: T, b: T) -> T {
        if a == b {
            self.derivative(a)
        } else {
            (self.value(b) - self.value(a)) / (b - a)
        }
    }

    /// Second divided difference for sorted `a <= b <= c`.
    fn dd3(&self, a: T, b: T, c: T) -> T {
        if a == c {
            self.second_derivative(a) / T::lit(2.0)
        } else {
            (self.dd2(b, c) - self.dd2(a, b)) / (c - a)
        }
    }
}

/// Checks convexity, `H'(0) >= 0` and finiteness of `H'(P)` on an equispaced sample.
pub fn validate_hamiltonian<T: Scalar>(h: &Hamiltonian<T>, samples: usize) -> Result<ValidationReport> {
    if samples < 3 {
        return Err(Error::arg(format!("need at least 3 samples, got {samples}")));
    }
    let tol = T::lit(CONVEXITY_TOL);
    let p_max = h.p_max();
    let step = p_max / T::lit((samples - 1) as f64);
    let grid: Vec<T> = (0..samples).map(|i| if i + 1 == samples { p_max } else { step * T::lit(i as f64) }).collect();
    for &p in &grid {
        let v = h.value(p);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("H({p}) = {v} is not finite")));
        }
    }

    let mut report = ValidationReport::default();
    for w in grid.windows(3) {
        let second = h.dd3(w[0], w[1], w[2]);
        if !second.is_finite() {
            return Err(Error::Numeric(format!("non-finite second divided difference near p={}", w[1])));
        }
        if second < -tol {
            report.push(ViolationKind::Convexity, format!("p={}", w[1]), second.as_f64());
        }
    }
    let slope0 = h.derivative(T::zero());
    if slope0 < -tol {
        report.push(ViolationKind::NegativeSlopeAtZero, "p=0", slope0.as_f64());
    }
    let slope_top = h.max_speed();
    if !slope_top.is_finite() {
        report.push(ViolationKind::InfiniteSlopeAtTop, format!("p={p_max}"), slope_top.as_f64());
    }
    Ok(report)
}
