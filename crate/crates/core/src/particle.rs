//! Sticky-particle (annihilating shock) dynamics on `[0, L]` with random
//! entries at `x = L`.
//!
//! A configuration `(x_1 < ... < x_n; rho_0 <= ... <= rho_n)` is the right-
//! continuous step function equal to `rho_i` on `[x_i, x_{i+1})`. Shock `i`
//! moves at `-H[rho_{i-1}, rho_i]`. When shocks `i` and `i+1` meet, shock
//! `i` and the value `rho_i` are removed; when `x_1` reaches 0, `x_1` and
//! `rho_0` are removed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::kinetic::KineticOperator;
use crate::scalar::Scalar;
use crate::state_space::KernelTrajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration<T> {
    positions: Vec<T>,
    values: Vec<T>,
    length: T,
}

impl<T: Scalar> Configuration<T> {
    pub fn new(positions: Vec<T>, values: Vec<T>, length: T) -> Result<Self> {
        if !(length.is_finite() && length > T::zero()) {
            return Err(Error::arg(format!("domain length must be positive, got {length}")));
        }
        if values.len() != positions.len() + 1 {
            return Err(Error::arg(format!(
                "configuration with {} positions needs {} values, got {}",
                positions.len(),
                positions.len() + 1,
                values.len()
            )));
        }
        let q = Self { positions, values, length };
        q.check()?;
        Ok(q)
    }

    /// Configuration with no shocks and constant value `rho_0`.
    pub fn flat(rho0: T, length: T) -> Result<Self> {
        Self::new(Vec::new(), vec![rho0], length)
    }

    fn check(&self) -> Result<()> {
        if let Some(&x) = self.positions.iter().find(|&&x| !(x > T::zero() && x <= self.length)) {
            return Err(Error::State(format!("position {x} outside (0, {}]", self.length)));
        }
        if self.positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::State("positions not strictly increasing".into()));
        }
        if self.values.windows(2).any(|w| w[1] < w[0]) || self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::State("values not nondecreasing".into()));
        }
        Ok(())
    }

    pub fn positions(&self) -> &[T] {
        &self.positions
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn length(&self) -> T {
        self.length
    }

    /// Number of shocks `n`.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `rho_0`, the value at `x = 0`.
    pub fn first_value(&self) -> T {
        self.values[0]
    }

    /// `rho_n`, the value at `x = L` (the boundary state).
    pub fn last_value(&self) -> T {
        self.values[self.values.len() - 1]
    }

    /// Total increment `rho_n - rho_0`.
    pub fn increment(&self) -> T {
        self.last_value() - self.first_value()
    }

    /// Keeps only shocks with `x <= cut` and relabels the domain as `[0, cut]`.
    pub fn restrict(&self, cut: T) -> Result<Self> {
        let k = self.positions.partition_point(|&x| x <= cut);
        Self::new(self.positions[..k].to_vec(), self.values[..=k].to_vec(), cut)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind<T> {
    ExitAtZero,
    /// Shocks `index` and `index + 1` (1-based) meet.
    Collision {
        index: usize,
    },
    BoundaryEntry {
        value: T,
    },
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event<T> {
    /// Time from now until the event.
    pub time: T,
    pub kind: EventKind<T>,
}

/// One line of the optional per-path event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: &'static str,
    pub index: Option<usize>,
    pub value: Option<f64>,
}

/// Rankine–Hugoniot velocities `-H[rho_{i-1}, rho_i]`, one per shock.
pub fn shock_velocities<T: Scalar>(q: &Configuration<T>, h: &Hamiltonian<T>) -> Vec<T> {
    q.values.windows(2).map(|w| -h.dd2(w[0], w[1])).collect()
}

/// Earliest exit, collision, or the horizon.
///
/// Ties go to the exit at zero first, then to the smallest collision index.
pub fn next_deterministic_event<T: Scalar>(q: &Configuration<T>, h: &Hamiltonian<T>, horizon: T) -> Event<T> {
    let v = shock_velocities(q, h);
    let mut best = Event { time: T::infinity(), kind: EventKind::Horizon };
    if let Some(&x1) = q.positions.first() {
        let speed = -v[0];
        let t = if x1 <= T::zero() {
            T::zero()
        } else if speed > T::zero() {
            x1 / speed
        } else {
            T::infinity()
        };
        if t < best.time {
            best = Event { time: t, kind: EventKind::ExitAtZero };
        }
    }
    for i in 0..q.positions.len().saturating_sub(1) {
        let gap = q.positions[i + 1] - q.positions[i];
        let closing = v[i] - v[i + 1];
        let t = if gap <= T::zero() {
            T::zero()
        } else if closing > T::zero() {
            gap / closing
        } else {
            T::infinity()
        };
        if t < best.time {
            best = Event { time: t, kind: EventKind::Collision { index: i + 1 } };
        }
    }
    if best.time > horizon {
        best = Event { time: horizon, kind: EventKind::Horizon };
    }
    best
}

impl<T: Scalar> Configuration<T> {
    fn translate(&mut self, velocities: &[T], dt: T) {
        if dt > T::zero() {
            for (x, &v) in self.positions.iter_mut().zip(velocities) {
                *x = *x + v * dt;
            }
        }
    }

    /// Deterministic flow for `dt`, processing every exit and collision in order.
    pub(crate) fn advance_in_place(
        &mut self,
        h: &Hamiltonian<T>,
        dt: T,
        clock: T,
        mut log: Option<&mut Vec<EventRecord>>,
    ) {
        let mut remaining = dt;
        let mut now = clock;
        loop {
            let event = next_deterministic_event(self, h, remaining);
            let v = shock_velocities(self, h);
            self.translate(&v, event.time);
            remaining = remaining - event.time;
            now = now + event.time;
            match event.kind {
                EventKind::Horizon => break,
                EventKind::ExitAtZero => {
                    self.positions.remove(0);
                    self.values.remove(0);
                    if let Some(log) = log.as_deref_mut() {
                        log.push(EventRecord {
                            time: now.as_f64(),
                            kind: "exit_at_zero",
                            index: Some(1),
                            value: Some(self.values[0].as_f64()),
                        });
                    }
                }
                EventKind::Collision { index } => {
                    self.positions.remove(index - 1);
                    let merged = self.values.remove(index);
                    if let Some(log) = log.as_deref_mut() {
                        log.push(EventRecord {
                            time: now.as_f64(),
                            kind: "collision",
                            index: Some(index),
                            value: Some(merged.as_f64()),
                        });
                    }
                }
                EventKind::BoundaryEntry { .. } => unreachable!("deterministic flow has no entries"),
            }
        }
        debug_assert!(self.check().is_ok(), "{:?}", self.check());
    }
}

pub fn advance_deterministic<T: Scalar>(q: &Configuration<T>, h: &Hamiltonian<T>, dt: T) -> Configuration<T> {
    let mut next = q.clone();
    next.advance_in_place(h, dt.max(T::zero()), T::zero(), None);
    next
}

/// Appends a shock at `x = L` with right value `rho_plus > rho_n`.
pub fn insert_particle<T: Scalar>(q: &Configuration<T>, rho_plus: T) -> Result<Configuration<T>> {
    if !(rho_plus > q.last_value()) {
        return Err(Error::arg(format!("entering value {rho_plus} must exceed boundary value {}", q.last_value())));
    }
    if q.positions.last().is_some_and(|&x| x >= q.length) {
        return Err(Error::State("a shock already sits at x = L".into()));
    }
    let mut next = q.clone();
    next.positions.push(q.length);
    next.values.push(rho_plus);
    Ok(next)
}

/// Random boundary at `x = L`: the boundary value jumps from `rho_n` to
/// `rho_+` at rate `H[rho_n, rho_+] f(t, rho_n, rho_+)`, simulated by
/// thinning a Poisson stream of envelope rate `H'(P) max_t ||f(t)||`.
#[derive(Debug, Clone)]
pub struct BoundaryProcess<'a, T> {
    op: &'a KineticOperator<T>,
    trajectory: &'a KernelTrajectory<T>,
    envelope: T,
}

impl<'a, T: Scalar> BoundaryProcess<'a, T> {
    pub fn new(op: &'a KineticOperator<T>, trajectory: &'a KernelTrajectory<T>) -> Result<Self> {
        if trajectory.dim() != op.dim() {
            return Err(Error::arg("trajectory dimension does not match grid"));
        }
        let envelope = op.hamiltonian().max_speed() * trajectory.max_norm()?;
        Ok(Self { op, trajectory, envelope })
    }

    pub fn envelope(&self) -> T {
        self.envelope
    }

    /// Total entry rate from grid state `from` at time `t` (self-jumps excluded).
    pub fn entry_rate(&self, from: usize, t: T) -> Result<T> {
        let f = self.trajectory.at(t)?;
        Ok((from + 1..self.op.dim()).map(|j| self.op.speed(from, j) * f.get(from, j).max(T::zero())).sum())
    }

    /// Thinning acceptance probability `rate / envelope`.
    pub fn acceptance_probability(&self, from: usize, t: T) -> Result<T> {
        if self.envelope <= T::zero() {
            return Ok(T::zero());
        }
        Ok((self.entry_rate(from, t)? / self.envelope).min(T::one()))
    }

    fn boundary_index(&self, q: &Configuration<T>) -> Result<usize> {
        self.op
            .grid()
            .index_of(q.last_value())
            .ok_or_else(|| Error::State(format!("boundary value {} is not a grid state", q.last_value())))
    }

    /// The random evolution from time `s` to `t`.
    pub fn evolve<R: Rng + ?Sized>(
        &self,
        q: &Configuration<T>,
        s: T,
        t: T,
        rng: &mut R,
        mut log: Option<&mut Vec<EventRecord>>,
    ) -> Result<Configuration<T>> {
        if !(s >= T::zero() && s <= t) {
            return Err(Error::arg(format!("need 0 <= s <= t, got s={s}, t={t}")));
        }
        self.trajectory.at(s)?;
        self.trajectory.at(t)?;
        let h = self.op.hamiltonian();
        let mut q = q.clone();
        let mut now = s;
        if self.envelope <= T::zero() {
            q.advance_in_place(h, t - s, s, log);
            return Ok(q);
        }
        loop {
            let u: f64 = rng.random();
            let gap = T::lit(-(1.0 - u).ln()) / self.envelope;
            if now + gap >= t {
                q.advance_in_place(h, t - now, now, log.as_deref_mut());
                return Ok(q);
            }
            q.advance_in_place(h, gap, now, log.as_deref_mut());
            now = now + gap;

            let from = self.boundary_index(&q)?;
            let f = self.trajectory.at(now)?;
            let weights: Vec<T> =
                (from + 1..self.op.dim()).map(|j| self.op.speed(from, j) * f.get(from, j).max(T::zero())).collect();
            let rate: T = weights.iter().copied().sum();
            let accept = T::lit(rng.random::<f64>()) * self.envelope;
            if !(accept < rate) {
                continue;
            }
            let target = from + 1 + pick_weighted(&weights, rate, rng);
            let rho_plus = self.op.grid().value(target);
            debug_assert!(rho_plus > q.last_value());
            if q.positions.last().is_some_and(|&x| x >= q.length) {
                // a stationary shock at L is hit at once by the entering one
                let last = q.values.len() - 1;
                q.values[last] = rho_plus;
            } else {
                q = insert_particle(&q, rho_plus)?;
            }
            if let Some(log) = log.as_deref_mut() {
                log.push(EventRecord {
                    time: now.as_f64(),
                    kind: "boundary_entry",
                    index: Some(q.len()),
                    value: Some(rho_plus.as_f64()),
                });
            }
        }
    }
}

/// Index drawn with probability proportional to `weights`.
pub(crate) fn pick_weighted<T: Scalar, R: Rng + ?Sized>(weights: &[T], total: T, rng: &mut R) -> usize {
    let target = T::lit(rng.random::<f64>()) * total;
    let mut acc = T::zero();
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > T::zero() {
            acc = acc + w;
            last_positive = i;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Random evolution `Phi_s^t q` with boundary entries driven by `f_traj`.
pub fn simulate_pdmp<T: Scalar, R: Rng + ?Sized>(
    q: &Configuration<T>,
    op: &KineticOperator<T>,
    f_traj: &KernelTrajectory<T>,
    s: T,
    t: T,
    rng: &mut R,
) -> Result<Configuration<T>> {
    BoundaryProcess::new(op, f_traj)?.evolve(q, s, t, rng, None)
}
