//! Learning-curve metrics: squared weight deviation, Monte-Carlo averaging,
//! dB conversion, and trailing-window steady-state estimates.

use crate::error::{Error, Result};

/// Sentinel for dB conversion of nonpositive values.
pub const DB_FLOOR: f64 = -320.0;

/// Squared Euclidean deviation between a reference weight vector and an
/// estimate.
pub fn msd(w_true: &[f64], w_est: &[f64]) -> Result<f64> {
    if w_true.len() != w_est.len() {
        return Err(Error::DimensionMismatch {
            expected: w_true.len(),
            actual: w_est.len(),
        });
    }
    Ok(w_true
        .iter()
        .zip(w_est)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// `10 log10(x)`. Nonpositive inputs map to the [`DB_FLOOR`] sentinel.
pub fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        10.0 * x.log10()
    } else {
        DB_FLOOR
    }
}

/// Monte-Carlo averaged MSD trajectory for one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub algorithm_id: String,
    /// Per-iteration mean squared deviation, linear scale.
    pub msd_linear: Vec<f64>,
    pub n_runs: usize,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.msd_linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.msd_linear.is_empty()
    }

    pub fn msd_db(&self) -> Vec<f64> {
        self.msd_linear.iter().copied().map(to_db).collect()
    }
}

/// Pointwise mean of equally long vectors, accumulated in the order given.
///
/// Uses the incremental form `m += (v - m) / k`, which keeps the mean of
/// identical inputs exactly equal to them for any run count.
pub fn pointwise_mean<V: AsRef<[f64]>>(runs: &[V]) -> Result<Vec<f64>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot average an empty run set".into()))?;
    let len = first.as_ref().len();
    let mut acc = vec![0.0; len];
    for (i, run) in runs.iter().enumerate() {
        let run = run.as_ref();
        if run.len() != len {
            return Err(Error::InvalidInput(format!(
                "ragged run lengths: expected {len}, got {}",
                run.len()
            )));
        }
        let k = (i + 1) as f64;
        for (a, v) in acc.iter_mut().zip(run) {
            *a += (v - *a) / k;
        }
    }
    Ok(acc)
}

/// Averages per-run MSD vectors into a [`LearningCurve`]. Averaging happens
/// in linear MSD; convert to dB afterwards.
pub fn monte_carlo_average<V: AsRef<[f64]>>(algorithm_id: &str, runs: &[V]) -> Result<LearningCurve> {
    Ok(LearningCurve {
        algorithm_id: algorithm_id.to_string(),
        msd_linear: pointwise_mean(runs)?,
        n_runs: runs.len(),
    })
}

/// Steady-state level read off the tail of a learning curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateEstimate {
    pub msd_db: f64,
    pub window_fraction: f64,
}

/// Mean of the trailing `ceil(window_fraction * len)` linear values,
/// converted to dB.
pub fn steady_state(curve: &LearningCurve, window_fraction: f64) -> Result<SteadyStateEstimate> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "steady-state window fraction must be in (0, 1], got {window_fraction}"
        )));
    }
    let len = curve.len();
    if len == 0 {
        return Err(Error::InvalidInput("cannot estimate steady state of an empty curve".into()));
    }
    let window = ((window_fraction * len as f64).ceil() as usize).clamp(1, len);
    let tail = &curve.msd_linear[len - window..];
    let mean = tail.iter().sum::<f64>() / window as f64;
    Ok(SteadyStateEstimate {
        msd_db: to_db(mean),
        window_fraction,
    })
}
