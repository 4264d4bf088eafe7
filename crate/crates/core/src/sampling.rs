//! Initial data, candidate configurations, and reproducible random streams.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particle::{pick_weighted, Configuration};
use crate::scalar::Scalar;
use crate::state_space::{MarginalMeasure, RateKernel, StateGrid};

/// Independent purposes a path can draw randomness for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamLane {
    InitialData,
    Boundary,
    /// Boundary randomness of the second system in a coupled pair.
    CoupledBoundary,
    Candidate,
    Auxiliary,
}

impl StreamLane {
    fn tag(self) -> u64 {
        match self {
            StreamLane::InitialData => 0x1,
            StreamLane::Boundary => 0x2,
            StreamLane::CoupledBoundary => 0x3,
            StreamLane::Candidate => 0x4,
            StreamLane::Auxiliary => 0x5,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-path substreams: ChaCha8 keyed by `(master_seed, lane)` with the
/// path index as the 64-bit stream id, so draws depend only on
/// `(master_seed, lane, path)` and never on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomStreamPolicy {
    pub master_seed: u64,
}

impl RandomStreamPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn stream(&self, lane: StreamLane, path: u64) -> ChaCha8Rng {
        let key = splitmix64(self.master_seed ^ splitmix64(lane.tag()));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(path);
        rng
    }
}

fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// `xi` on `[0, L]`: starts at 0, Exponential(`lambda`) gaps, each jump target
/// drawn from its row of `g / lambda`. Self-jumps (including every jump
/// from the top state) leave no trace and are skipped.
pub fn sample_initial_path<T: Scalar, R: Rng + ?Sized>(
    g: &RateKernel<T>,
    grid: &StateGrid<T>,
    lambda: T,
    length: T,
    rng: &mut R,
) -> Result<Configuration<T>> {
    if g.dim() != grid.len() {
        return Err(Error::arg("kernel dimension does not match grid"));
    }
    let mut positions = Vec::new();
    let mut values = vec![T::zero()];
    if lambda > T::zero() {
        let mut state = 0usize;
        let mut x = T::zero();
        loop {
            x = x + T::lit(-open_uniform(rng).ln()) / lambda;
            if x >= length {
                break;
            }
            let weights: Vec<T> = g.row(state)[state + 1..].iter().map(|&w| w.max(T::zero())).collect();
            let total: T = weights.iter().copied().sum();
            let u = T::lit(rng.random::<f64>()) * lambda.max(total);
            if !(u < total) {
                continue;
            }
            state = state + 1 + pick_weighted(&weights, total, rng);
            if positions.last().is_some_and(|&p| p >= x) {
                continue;
            }
            positions.push(x);
            values.push(grid.value(state));
        }
    }
    Configuration::new(positions, values, length)
}

/// Draw from the candidate law at a fixed time: `N ~ Poisson(lambda L)`
/// sorted uniform positions, `rho_0 ~ ell`, `rho_j ~ f(rho_{j-1}, .) / lambda`.
/// Zero-increment steps (top-state self-jumps) are removed afterwards.
pub fn sample_candidate<T: Scalar, R: Rng + ?Sized>(
    ell: &MarginalMeasure<T>,
    f: &RateKernel<T>,
    grid: &StateGrid<T>,
    lambda: T,
    length: T,
    rng: &mut R,
) -> Result<Configuration<T>> {
    if ell.len() != grid.len() || f.dim() != grid.len() {
        return Err(Error::arg("marginal or kernel dimension does not match grid"));
    }
    let mean = (lambda * length).as_f64();
    let count = if mean > 0.0 {
        let dist = Poisson::new(mean).map_err(|e| Error::Sampling(e.to_string()))?;
        dist.sample(rng) as usize
    } else {
        0
    };
    let mut xs: Vec<f64> = (0..count).map(|_| open_uniform(rng) * length.as_f64()).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite uniforms"));

    let ell_weights: Vec<T> = ell.weights.iter().map(|&w| w.max(T::zero())).collect();
    let ell_total: T = ell_weights.iter().copied().sum();
    if ell_total <= T::zero() {
        return Err(Error::Sampling("marginal has no positive mass".into()));
    }
    let mut state = pick_weighted(&ell_weights, ell_total, rng);
    let mut positions = Vec::new();
    let mut values = vec![grid.value(state)];
    for (drawn, &x) in xs.iter().enumerate() {
        let weights: Vec<T> = f.row(state).iter().map(|&w| w.max(T::zero())).collect();
        let total: T = weights.iter().copied().sum();
        if total <= T::zero() {
            return Err(Error::Sampling(format!(
                "zero rate row at state index {state} with {} draws remaining",
                count - drawn
            )));
        }
        let next = pick_weighted(&weights, total, rng);
        if next > state {
            let x = T::lit(x);
            if positions.last().is_some_and(|&p| p >= x) {
                return Err(Error::Sampling("coincident uniform positions".into()));
            }
            positions.push(x);
            values.push(grid.value(next));
        }
        state = next;
    }
    Configuration::new(positions, values, length)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_state() -> (RateKernel<f64>, StateGrid<f64>) {
        (RateKernel::single_step(3, 1, 1.0).unwrap(), StateGrid::uniform(2, 2.0).unwrap())
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let p = RandomStreamPolicy::new(42);
        let a: Vec<u64> = (0..4).map(|_| p.stream(StreamLane::Boundary, 9).random()).collect();
        let b: u64 = p.stream(StreamLane::Boundary, 9).random();
        assert_eq!(a[0], b);
        let c: u64 = p.stream(StreamLane::Boundary, 10).random();
        let d: u64 = p.stream(StreamLane::InitialData, 9).random();
        let e: u64 = RandomStreamPolicy::new(43).stream(StreamLane::Boundary, 9).random();
        assert_ne!(b, c);
        assert_ne!(b, d);
        assert_ne!(b, e);
    }

    #[test]
    fn single_target_chain_is_deterministic_given_count() {
        let (g, grid) = three_state();
        let policy = RandomStreamPolicy::new(5);
        for path in 0..200 {
            let q =
                sample_initial_path(&g, &grid, 1.0, 5.0, &mut policy.stream(StreamLane::InitialData, path)).unwrap();
            let expected: Vec<f64> = (0..=q.len()).map(|i| i as f64).collect();
            assert_eq!(q.values(), expected.as_slice());
            assert!(q.len() <= 2);
        }
    }

    #[test]
    fn zero_rate_gives_flat_path() {
        let (_, grid) = three_state();
        let g = RateKernel::single_step(3, 1, 0.0).unwrap();
        let mut rng = RandomStreamPolicy::new(1).stream(StreamLane::InitialData, 0);
        let q = sample_initial_path(&g, &grid, 0.0, 5.0, &mut rng).unwrap();
        assert!(q.is_empty());
        let q = sample_candidate(&MarginalMeasure::delta(3, 0), &g, &grid, 0.0, 5.0, &mut rng).unwrap();
        assert!(q.is_empty());
        assert_eq!(q.values(), &[0.0]);
    }

    #[test]
    fn candidate_reports_stuck_rows() {
        let grid = StateGrid::uniform(2, 2.0).unwrap();
        let mut f = RateKernel::zeros(3);
        f.set(0, 1, 1.0);
        // row 1 is empty, so any path reaching it with draws left is stuck
        let mut saw_error = false;
        for path in 0..50 {
            let mut rng = RandomStreamPolicy::new(2).stream(StreamLane::Candidate, path);
            if let Err(Error::Sampling(msg)) =
                sample_candidate(&MarginalMeasure::delta(3, 0), &f, &grid, 1.0, 5.0, &mut rng)
            {
                assert!(msg.contains("state index 1"));
                saw_error = true;
            }
        }
        assert!(saw_error);
    }
}
