//! Signal generation for sparse system identification experiments.
//!
//! A sparse FIR system produces the observed signal `d(t) = w^T x(t) + z(t)`,
//! where `x(t)` is the tap-delay vector of a white input stream and `z(t)` is
//! zero-mean Gaussian noise whose power realizes a target SNR against the
//! filtered signal power.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Sequential dot product; summation order is fixed so results are reproducible.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ground-truth FIR system supported on a small set of active taps.
///
/// All taps outside `active_indices` are exactly zero. When built with
/// normalization the tap vector has unit Euclidean norm, which makes the
/// filtered signal power equal to the input variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFir {
    weights: Vec<f64>,
    active_indices: Vec<usize>,
}

impl SparseFir {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Tap positions holding nonzero coefficients, ascending.
    pub fn active_indices(&self) -> &[usize] {
        &self.active_indices
    }

    pub fn n_taps(&self) -> usize {
        self.weights.len()
    }

    pub fn n_active(&self) -> usize {
        self.active_indices.len()
    }

    /// Squared Euclidean norm of the tap vector.
    pub fn energy(&self) -> f64 {
        dot(&self.weights, &self.weights)
    }
}

/// Draws a sparse system: `n_active` positions chosen uniformly without
/// replacement, coefficients standard Gaussian, optionally scaled to unit
/// norm. Deterministic for a given random-source state.
pub fn generate_sparse_fir(
    n_taps: usize,
    n_active: usize,
    rng: &mut impl Rng,
    normalize: bool,
) -> Result<SparseFir> {
    if n_taps == 0 || n_active == 0 || n_active > n_taps {
        return Err(Error::InvalidConfig(format!(
            "sparse system requires 1 <= n_active <= n_taps, got n_active={n_active}, n_taps={n_taps}"
        )));
    }
    let mut active = rand::seq::index::sample(rng, n_taps, n_active).into_vec();
    active.sort_unstable();
    let mut weights = vec![0.0; n_taps];
    for &k in &active {
        weights[k] = rng.sample(StandardNormal);
    }
    if normalize {
        let norm = dot(&weights, &weights).sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput(
                "drew an all-zero system; cannot normalize".into(),
            ));
        }
        for w in &mut weights {
            *w /= norm;
        }
    }
    Ok(SparseFir {
        weights,
        active_indices: active,
    })
}

/// Tap-delay line holding the most recent `n_taps` input samples, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorWindow {
    buffer: Vec<f64>,
}

impl RegressorWindow {
    /// Zero-filled window; the first `n_taps - 1` samples therefore see a
    /// partially warmed-up regressor.
    pub fn new(n_taps: usize) -> Self {
        Self {
            buffer: vec![0.0; n_taps],
        }
    }

    /// Shifts in one sample: slot 0 takes `x`, older samples move one slot
    /// down, and the oldest is discarded.
    pub fn push(&mut self, x: f64) {
        self.buffer.rotate_right(1);
        self.buffer[0] = x;
    }

    pub fn samples(&self) -> &[f64] {
        &self.buffer
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }
}

/// Zero-mean Gaussian observation noise with fixed power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    variance: f64,
}

impl NoiseSpec {
    pub fn new(variance: f64) -> Result<Self> {
        if !variance.is_finite() || variance < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise variance must be finite and >= 0, got {variance}"
            )));
        }
        Ok(Self { variance })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// One noise sample. Always consumes the random source, even at zero
    /// variance, so streams stay aligned across noise levels.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        z * self.variance.sqrt()
    }
}

/// Noise power realizing `snr_db` against the given signal power:
/// `signal_power * 10^(-snr_db / 10)`.
pub fn noise_variance_from_snr(snr_db: f64, signal_power: f64) -> Result<f64> {
    if !(signal_power > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "signal power must be positive, got {signal_power}"
        )));
    }
    Ok(signal_power * 10f64.powf(-snr_db / 10.0))
}

/// Observed system output `d = w^T x + z`.
pub fn system_output(system: &SparseFir, window: &RegressorWindow, noise: f64) -> Result<f64> {
    if system.n_taps() != window.len() {
        return Err(Error::DimensionMismatch {
            expected: system.n_taps(),
            actual: window.len(),
        });
    }
    Ok(dot(system.weights(), window.samples()) + noise)
}
