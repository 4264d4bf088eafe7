use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particle::Configuration;
use crate::scalar::Scalar;

/// `J(x) = alpha e^{-beta x} + gamma` with nonnegative parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl TestFunction {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if [alpha, beta, gamma].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::arg(format!(
                "test function parameters must be finite and nonnegative, got ({alpha}, {beta}, {gamma})"
            )));
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.alpha * (-self.beta * x).exp() + self.gamma
    }

    /// Ten triples mixing constant, slow and fast decay.
    pub fn default_family() -> Vec<TestFunction> {
        [
            (0.0, 0.0, 1.0),
            (1.0, 0.1, 0.0),
            (1.0, 0.5, 0.0),
            (1.0, 1.0, 0.0),
            (2.0, 2.0, 0.0),
            (1.0, 5.0, 0.0),
            (0.5, 0.3, 0.2),
            (2.0, 0.2, 0.0),
            (1.0, 1.0, 0.5),
            (3.0, 0.05, 0.0),
        ]
        .into_iter()
        .map(|(a, b, c)| TestFunction { alpha: a, beta: b, gamma: c })
        .collect()
    }

    pub fn label(&self) -> String {
        format!("J(x)={}*exp(-{}x)+{}", self.alpha, self.beta, self.gamma)
    }
}

/// Atoms of the jump measure: `(0, rho_0)` then `(x_i, rho_i - rho_{i-1})`.
pub fn path_measure<T: Scalar>(q: &Configuration<T>) -> Vec<(T, T)> {
    let values = q.values();
    std::iter::once((T::zero(), values[0]))
        .chain(q.positions().iter().zip(values.windows(2)).map(|(&x, w)| (x, w[1] - w[0])))
        .collect()
}

/// Right-continuous step function value at `x` in `[0, L]`.
pub fn evaluate_solution<T: Scalar>(q: &Configuration<T>, x: T) -> Result<T> {
    if x.is_nan() || x < T::zero() || x > q.length() {
        return Err(Error::Domain { value: x.as_f64(), lower: 0.0, upper: q.length().as_f64() });
    }
    let k = q.positions().partition_point(|&p| p <= x);
    Ok(q.values()[k])
}

/// `exp(-integral of J against the jump measure)`.
pub fn laplace_functional<T: Scalar>(q: &Configuration<T>, j: &TestFunction) -> f64 {
    let exponent: f64 = path_measure(q).into_iter().map(|(x, mass)| mass.as_f64() * j.eval(x.as_f64())).sum();
    (-exponent).exp()
}
