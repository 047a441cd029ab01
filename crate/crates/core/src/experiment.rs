//! Monte-Carlo experiment harness.
//!
//! A scenario draws, per run, one sparse system and one input/noise stream,
//! then drives every requested algorithm over that same stream (paired
//! comparison), recording per-iteration MSD and the mixing-parameter
//! trajectory of the combined algorithms. Runs are seeded independently from
//! the master seed and may execute in parallel; aggregation always reduces in
//! ascending run order, so results do not depend on scheduling.

use rayon::prelude::*;

use crate::adaptive_filters::{FilterState, SparsityParams};
use crate::affine_combiner::{CombinedFilter, CombinerState, FilterMode};
use crate::error::{Error, Result};
use crate::metrics::{monte_carlo_average, msd, pointwise_mean, steady_state};
use crate::metrics::{LearningCurve, SteadyStateEstimate};
use crate::signal_model::{
    generate_sparse_fir, noise_variance_from_snr, system_output, NoiseSpec, RegressorWindow,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Algorithms the harness can drive. "Fast" uses the primary step size,
/// "slow" the reduced one; the `Ac*` variants combine a fast and a slow
/// component filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    LmsFast,
    LmsSlow,
    L0lmsFast,
    L0lmsSlow,
    AcLms,
    AcL0lms,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::LmsFast,
        Algorithm::LmsSlow,
        Algorithm::L0lmsFast,
        Algorithm::L0lmsSlow,
        Algorithm::AcLms,
        Algorithm::AcL0lms,
    ];

    /// Name used in config files.
    pub fn config_name(self) -> &'static str {
        match self {
            Algorithm::LmsFast => "lms_fast",
            Algorithm::LmsSlow => "lms_slow",
            Algorithm::L0lmsFast => "l0lms_fast",
            Algorithm::L0lmsSlow => "l0lms_slow",
            Algorithm::AcLms => "ac_lms",
            Algorithm::AcL0lms => "ac_l0lms",
        }
    }

    /// Label used in emitted tables. The fast single filters carry the plain
    /// names since they are the usual single-filter baselines.
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::LmsFast => "lms",
            Algorithm::LmsSlow => "lms_slow",
            Algorithm::L0lmsFast => "l0lms",
            Algorithm::L0lmsSlow => "l0lms_slow",
            Algorithm::AcLms => "ac_lms",
            Algorithm::AcL0lms => "ac_l0lms",
        }
    }

    pub fn is_combined(self) -> bool {
        matches!(self, Algorithm::AcLms | Algorithm::AcL0lms)
    }

    pub fn from_config_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.config_name() == name)
    }
}

/// What to do when a Monte-Carlo run raises a divergence fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergencePolicy {
    /// Fail the whole scenario, surfacing the run seed.
    Abort,
    /// Drop the run from the averages and record its seed.
    Exclude,
}

/// One scenario: system dimensions, SNR, step-size schedule, sparsity
/// parameters, iteration/run budget, and seeding.
///
/// Step sizes derive from the config as `mu_fast = 1 / (n_taps + gamma)` and
/// `mu_slow = delta * mu_fast` with `delta` in `(0, 1]`. The zero-attractor
/// weight is `beta = beta_coeff * noise_variance * attractor_gain`, computed
/// per run from the realized noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_taps: usize,
    pub n_active: usize,
    pub snr_db: f64,
    /// Offset in `mu_fast = 1 / (n_taps + gamma)`.
    pub gamma: f64,
    /// Slow-to-fast step-size ratio, in `(0, 1]`.
    pub delta: f64,
    pub mu_lambda: f64,
    /// Zero-attractor sharpness.
    pub alpha: f64,
    /// Attractor weight as a multiple of the noise variance.
    pub beta_coeff: f64,
    /// Variance of the white input stream.
    pub input_variance: f64,
    /// Extra multiplier on the attractor increment, for sensitivity studies.
    pub attractor_gain: f64,
    pub n_iterations: usize,
    pub n_runs: usize,
    pub master_seed: u64,
    /// Algorithms to drive, in emission order.
    pub algorithms: Vec<Algorithm>,
    /// Scale the drawn system to unit norm (keeps the realized SNR equal to
    /// `snr_db` in every run).
    pub normalize_system: bool,
    pub lambda_init: f64,
    pub lambda_clamp: Option<(f64, f64)>,
    /// Trailing fraction of the curve used for steady-state estimates.
    pub steady_window: f64,
    pub divergence_policy: DivergencePolicy,
}

impl Default for ExperimentConfig {
    /// Reference scenario: 32-tap system with 3 active taps at 10 dB SNR,
    /// `gamma = 4`, `delta = 0.3`, `mu_lambda = 1`, `alpha = 10`,
    /// `beta = 0.02 * noise variance`, 1000 runs of 3000 iterations.
    fn default() -> Self {
        Self {
            n_taps: 32,
            n_active: 3,
            snr_db: 10.0,
            gamma: 4.0,
            delta: 0.3,
            mu_lambda: 1.0,
            alpha: 10.0,
            beta_coeff: 0.02,
            input_variance: 1.0,
            attractor_gain: 1.0,
            n_iterations: 3000,
            n_runs: 1000,
            master_seed: 1,
            algorithms: vec![
                Algorithm::LmsFast,
                Algorithm::L0lmsFast,
                Algorithm::AcLms,
                Algorithm::AcL0lms,
            ],
            normalize_system: true,
            lambda_init: 0.5,
            lambda_clamp: None,
            steady_window: 0.1,
            divergence_policy: DivergencePolicy::Abort,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_taps == 0 {
            return bad("n_taps must be >= 1".into());
        }
        if self.n_active == 0 || self.n_active > self.n_taps {
            return bad(format!(
                "n_active must be in 1..=n_taps, got {} with n_taps={}",
                self.n_active, self.n_taps
            ));
        }
        if self.snr_db.is_nan() {
            return bad("snr_db must not be NaN".into());
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad(format!("delta must be in (0, 1], got {}", self.delta));
        }
        let fast = self.n_taps as f64 + self.gamma;
        if !fast.is_finite() || fast <= 0.0 {
            return bad(format!(
                "gamma = {} gives a nonpositive step-size denominator",
                self.gamma
            ));
        }
        if !self.mu_lambda.is_finite() || self.mu_lambda <= 0.0 {
            return bad(format!("mu_lambda must be > 0, got {}", self.mu_lambda));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !self.beta_coeff.is_finite() || self.beta_coeff < 0.0 {
            return bad(format!("beta_coeff must be >= 0, got {}", self.beta_coeff));
        }
        if !self.input_variance.is_finite() || self.input_variance <= 0.0 {
            return bad(format!(
                "input_variance must be > 0, got {}",
                self.input_variance
            ));
        }
        if !self.attractor_gain.is_finite() || self.attractor_gain < 0.0 {
            return bad(format!(
                "attractor_gain must be >= 0, got {}",
                self.attractor_gain
            ));
        }
        if self.n_iterations == 0 {
            return bad("n_iterations must be >= 1".into());
        }
        if self.n_runs == 0 {
            return bad("n_runs must be >= 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("algorithms must not be empty".into());
        }
        if !self.lambda_init.is_finite() {
            return bad("lambda_init must be finite".into());
        }
        if let Some((lo, hi)) = self.lambda_clamp {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("lambda_clamp must satisfy lo <= hi, got [{lo}, {hi}]"));
            }
        }
        if !(self.steady_window > 0.0 && self.steady_window <= 1.0) {
            return bad(format!(
                "steady_window must be in (0, 1], got {}",
                self.steady_window
            ));
        }
        Ok(())
    }

    /// `(mu_fast, mu_slow)` from the `gamma`/`delta` schedule.
    pub fn derive_step_sizes(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let mu_fast = 1.0 / (self.n_taps as f64 + self.gamma);
        Ok((mu_fast, self.delta * mu_fast))
    }
}

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run_index`: a pure function of the master seed and the index,
/// so runs can execute in any order or in parallel with identical results.
pub fn derive_run_seed(master_seed: u64, run_index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(run_index))
}

/// Order-insensitive digest of the (input, noise) stream an algorithm
/// actually consumed; used to assert that every algorithm in a run saw the
/// identical stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct StreamChecksum(u64);

impl StreamChecksum {
    fn new() -> Self {
        Self(0)
    }

    fn update(&mut self, x: f64, z: f64) {
        self.0 = splitmix64(self.0 ^ x.to_bits());
        self.0 = splitmix64(self.0 ^ z.to_bits());
    }
}

enum Driver {
    Single {
        filter: FilterState,
        sparsity: Option<SparsityParams>,
    },
    Combined(CombinedFilter),
}

struct AlgoRun {
    driver: Driver,
    msd_trace: Vec<f64>,
    lambda_trace: Option<Vec<f64>>,
    checksum: StreamChecksum,
}

impl AlgoRun {
    fn new(
        algorithm: Algorithm,
        cfg: &ExperimentConfig,
        mu_fast: f64,
        mu_slow: f64,
        sparsity: SparsityParams,
    ) -> Result<Self> {
        let single = |mu: f64, sparse: bool| -> Result<Driver> {
            Ok(Driver::Single {
                filter: FilterState::new(cfg.n_taps, mu)?,
                sparsity: sparse.then_some(sparsity),
            })
        };
        let combined = |mode: FilterMode| -> Result<Driver> {
            Ok(Driver::Combined(CombinedFilter::new(
                FilterState::new(cfg.n_taps, mu_fast)?,
                FilterState::new(cfg.n_taps, mu_slow)?,
                CombinerState::new(cfg.lambda_init, cfg.mu_lambda, cfg.lambda_clamp)?,
                mode,
            )?))
        };
        let driver = match algorithm {
            Algorithm::LmsFast => single(mu_fast, false)?,
            Algorithm::LmsSlow => single(mu_slow, false)?,
            Algorithm::L0lmsFast => single(mu_fast, true)?,
            Algorithm::L0lmsSlow => single(mu_slow, true)?,
            Algorithm::AcLms => combined(FilterMode::Standard)?,
            Algorithm::AcL0lms => combined(FilterMode::Sparse(sparsity))?,
        };
        Ok(Self {
            driver,
            msd_trace: Vec::with_capacity(cfg.n_iterations),
            lambda_trace: algorithm
                .is_combined()
                .then(|| Vec::with_capacity(cfg.n_iterations)),
            checksum: StreamChecksum::new(),
        })
    }

    /// Processes one sample and records the post-update deviation (and the
    /// post-update mixing parameter for combined algorithms).
    fn step(
        &mut self,
        truth: &[f64],
        window: &RegressorWindow,
        desired: f64,
        x: f64,
        z: f64,
    ) -> Result<()> {
        self.checksum.update(x, z);
        match &mut self.driver {
            Driver::Single { filter, sparsity } => {
                let error = filter.prediction_error(desired, window)?;
                match sparsity {
                    Some(params) => filter.l0lms_step(params, window, error)?,
                    None => filter.lms_step(window, error)?,
                }
                self.msd_trace.push(msd(truth, filter.weights())?);
            }
            Driver::Combined(cf) => {
                cf.iterate(window, desired)?;
                self.msd_trace.push(msd(truth, &cf.equivalent_weights())?);
                if let Some(trace) = &mut self.lambda_trace {
                    trace.push(cf.combiner().lambda());
                }
            }
        }
        Ok(())
    }
}

/// Raw traces of one Monte-Carlo run, aligned with the configured algorithm
/// list.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleRunOutput {
    /// Per-algorithm MSD trajectory.
    pub msd: Vec<Vec<f64>>,
    /// Per-algorithm mixing-parameter trajectory; `None` for single filters.
    pub lambda: Vec<Option<Vec<f64>>>,
    /// Digest of the consumed stream, identical across algorithms.
    pub stream_checksum: u64,
}

/// Executes one seeded run: draws a system and a stream, then drives every
/// configured algorithm over that exact stream.
pub fn run_single(cfg: &ExperimentConfig, run_seed: u64) -> Result<SingleRunOutput> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(run_seed);
    let system = generate_sparse_fir(cfg.n_taps, cfg.n_active, &mut rng, cfg.normalize_system)?;

    // The stream is generated up front, before any algorithm runs, so the
    // samples every algorithm sees are independent of the algorithm set.
    let sigma_x = cfg.input_variance.sqrt();
    let xs: Vec<f64> = (0..cfg.n_iterations)
        .map(|_| {
            let u: f64 = StandardNormal.sample(&mut rng);
            u * sigma_x
        })
        .collect();
    let signal_power = system.energy() * cfg.input_variance;
    let noise_variance = noise_variance_from_snr(cfg.snr_db, signal_power)?;
    let noise = NoiseSpec::new(noise_variance)?;
    let zs: Vec<f64> = (0..cfg.n_iterations).map(|_| noise.sample(&mut rng)).collect();

    let (mu_fast, mu_slow) = cfg.derive_step_sizes()?;
    let beta = cfg.beta_coeff * noise_variance * cfg.attractor_gain;
    let sparsity = SparsityParams::new(beta, cfg.alpha)?;

    let mut algo_runs = cfg
        .algorithms
        .iter()
        .map(|&a| AlgoRun::new(a, cfg, mu_fast, mu_slow, sparsity))
        .collect::<Result<Vec<_>>>()?;

    let mut window = RegressorWindow::new(cfg.n_taps);
    for t in 0..cfg.n_iterations {
        window.push(xs[t]);
        let desired = system_output(&system, &window, zs[t])?;
        for run in &mut algo_runs {
            run.step(system.weights(), &window, desired, xs[t], zs[t])?;
        }
    }

    let checksum = algo_runs
        .first()
        .map(|r| r.checksum)
        .unwrap_or(StreamChecksum::new());
    if algo_runs.iter().any(|r| r.checksum != checksum) {
        return Err(Error::Internal(
            "algorithms consumed different streams within one run".into(),
        ));
    }

    Ok(SingleRunOutput {
        msd: algo_runs.iter_mut().map(|r| std::mem::take(&mut r.msd_trace)).collect(),
        lambda: algo_runs
            .iter_mut()
            .map(|r| r.lambda_trace.take())
            .collect(),
        stream_checksum: checksum.0,
    })
}

/// Aggregated scenario output: one curve and steady-state estimate per
/// configured algorithm, mean mixing-parameter trajectories for the combined
/// ones, and the seeds used (plus any excluded by the divergence policy).
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub curves: Vec<LearningCurve>,
    pub steady_state: Vec<SteadyStateEstimate>,
    /// Mean mixing-parameter trajectory, aligned with `config.algorithms`.
    pub lambda_mean: Vec<Option<Vec<f64>>>,
    pub run_seeds: Vec<u64>,
    pub excluded_seeds: Vec<u64>,
}

impl RunResult {
    fn index_of(&self, algorithm: Algorithm) -> Option<usize> {
        self.config.algorithms.iter().position(|&a| a == algorithm)
    }

    pub fn curve(&self, algorithm: Algorithm) -> Option<&LearningCurve> {
        self.index_of(algorithm).map(|i| &self.curves[i])
    }

    pub fn steady(&self, algorithm: Algorithm) -> Option<SteadyStateEstimate> {
        self.index_of(algorithm).map(|i| self.steady_state[i])
    }

    pub fn lambda_mean_of(&self, algorithm: Algorithm) -> Option<&[f64]> {
        self.index_of(algorithm)
            .and_then(|i| self.lambda_mean[i].as_deref())
    }
}

/// Runs the full Monte-Carlo scenario. Run seeds derive deterministically
/// from the master seed; runs execute in parallel on the current thread pool
/// and are reduced in ascending run order.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.n_runs)
        .map(|i| derive_run_seed(cfg.master_seed, i as u64))
        .collect();

    let outputs: Vec<Result<SingleRunOutput>> = seeds
        .par_iter()
        .map(|&seed| {
            run_single(cfg, seed).map_err(|e| match e {
                Error::Divergence(d) => {
                    Error::Divergence(format!("run seed {seed}: {d}"))
                }
                other => other,
            })
        })
        .collect();

    let mut included = Vec::with_capacity(cfg.n_runs);
    let mut excluded_seeds = Vec::new();
    for (i, out) in outputs.into_iter().enumerate() {
        match out {
            Ok(o) => included.push(o),
            Err(e @ Error::Divergence(_)) => match cfg.divergence_policy {
                DivergencePolicy::Abort => return Err(e),
                DivergencePolicy::Exclude => excluded_seeds.push(seeds[i]),
            },
            Err(e) => return Err(e),
        }
    }
    if included.is_empty() {
        return Err(Error::InvalidInput(
            "every Monte-Carlo run was excluded after divergence faults".into(),
        ));
    }

    let mut curves = Vec::with_capacity(cfg.algorithms.len());
    let mut steady = Vec::with_capacity(cfg.algorithms.len());
    let mut lambda_mean = Vec::with_capacity(cfg.algorithms.len());
    for (j, algorithm) in cfg.algorithms.iter().enumerate() {
        let runs: Vec<&[f64]> = included.iter().map(|o| o.msd[j].as_slice()).collect();
        let curve = monte_carlo_average(algorithm.label(), &runs)?;
        steady.push(steady_state(&curve, cfg.steady_window)?);
        curves.push(curve);
        lambda_mean.push(if algorithm.is_combined() {
            let traces: Vec<&[f64]> = included
                .iter()
                .map(|o| o.lambda[j].as_deref().unwrap_or(&[]))
                .collect();
            Some(pointwise_mean(&traces)?)
        } else {
            None
        });
    }

    Ok(RunResult {
        config: cfg.clone(),
        curves,
        steady_state: steady,
        lambda_mean,
        run_seeds: seeds,
        excluded_seeds,
    })
}

/// Runs the scenario once per step-size ratio, with identical seeds across
/// ratios so the sweep is paired. Ratios are validated before any run starts.
pub fn sweep_delta(cfg: &ExperimentConfig, deltas: &[f64]) -> Result<Vec<RunResult>> {
    if deltas.is_empty() {
        return Err(Error::InvalidConfig("delta sweep list must not be empty".into()));
    }
    for &d in deltas {
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sweep delta must be in (0, 1], got {d}"
            )));
        }
    }
    deltas
        .iter()
        .map(|&d| {
            let mut scenario = cfg.clone();
            scenario.delta = d;
            run_scenario(&scenario)
        })
        .collect()
}
