//! Config handling, presets, CSV emission, and the built-in selftest used by
//! the binary front end.
//!
//! Config files are flat `key = value` text, one key per line, `#` comments
//! allowed. Unknown keys and out-of-range values are rejected with messages
//! naming the offending field. `config.resolved`, written next to the CSV
//! output, echoes every parameter in the same format and reloads to the
//! identical configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::adaptive_filters::{l0_penalty_gradient_exact, sgn, zero_attract, FilterState};
use crate::affine_combiner::{optimal_lambda, CombinedFilter, CombinerState, FilterMode};
use crate::error::{Error, Result};
use crate::experiment::{Algorithm, DivergencePolicy, ExperimentConfig, RunResult};
use crate::metrics::to_db;
use crate::signal_model::{dot, RegressorWindow};

/// Step-size ratios used by the sweep presets.
pub const SWEEP_DELTAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Recognized config keys, in emission order.
pub const CONFIG_KEYS: [&str; 19] = [
    "n_taps",
    "n_active",
    "snr_db",
    "gamma",
    "delta",
    "mu_lambda",
    "alpha",
    "beta_coeff",
    "input_variance",
    "attractor_gain",
    "n_iterations",
    "n_runs",
    "master_seed",
    "algorithms",
    "normalize_system",
    "lambda_init",
    "lambda_clamp",
    "steady_window",
    "divergence_policy",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("invalid value for '{key}': '{value}'")))
}

fn parse_algorithms(value: &str) -> Result<Vec<Algorithm>> {
    let mut algorithms = Vec::new();
    for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let alg = Algorithm::from_config_name(name).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "invalid value for 'algorithms': unknown algorithm '{name}'"
            ))
        })?;
        if algorithms.contains(&alg) {
            return Err(Error::InvalidConfig(format!(
                "invalid value for 'algorithms': duplicate '{name}'"
            )));
        }
        algorithms.push(alg);
    }
    Ok(algorithms)
}

fn parse_lambda_clamp(value: &str) -> Result<Option<(f64, f64)>> {
    let trimmed = value.trim();
    if trimmed.eq_ignore_ascii_case("none") || trimmed.eq_ignore_ascii_case("off") {
        return Ok(None);
    }
    let (lo, hi) = trimmed.split_once(',').ok_or_else(|| {
        Error::InvalidConfig(format!(
            "invalid value for 'lambda_clamp': expected 'none' or 'lo,hi', got '{value}'"
        ))
    })?;
    Ok(Some((
        parse_num("lambda_clamp", lo)?,
        parse_num("lambda_clamp", hi)?,
    )))
}

/// Applies one `key = value` setting to the config. Range checks run later in
/// [`ExperimentConfig::validate`].
pub fn apply_setting(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "n_taps" => cfg.n_taps = parse_num(key, value)?,
        "n_active" => cfg.n_active = parse_num(key, value)?,
        "snr_db" => cfg.snr_db = parse_num(key, value)?,
        "gamma" => cfg.gamma = parse_num(key, value)?,
        "delta" => cfg.delta = parse_num(key, value)?,
        "mu_lambda" => cfg.mu_lambda = parse_num(key, value)?,
        "alpha" => cfg.alpha = parse_num(key, value)?,
        "beta_coeff" => cfg.beta_coeff = parse_num(key, value)?,
        "input_variance" => cfg.input_variance = parse_num(key, value)?,
        "attractor_gain" => cfg.attractor_gain = parse_num(key, value)?,
        "n_iterations" => cfg.n_iterations = parse_num(key, value)?,
        "n_runs" => cfg.n_runs = parse_num(key, value)?,
        "master_seed" => cfg.master_seed = parse_num(key, value)?,
        "algorithms" => cfg.algorithms = parse_algorithms(value)?,
        "normalize_system" => cfg.normalize_system = parse_num(key, value)?,
        "lambda_init" => cfg.lambda_init = parse_num(key, value)?,
        "lambda_clamp" => cfg.lambda_clamp = parse_lambda_clamp(value)?,
        "steady_window" => cfg.steady_window = parse_num(key, value)?,
        "divergence_policy" => {
            cfg.divergence_policy = match value.trim() {
                "abort" => DivergencePolicy::Abort,
                "exclude" => DivergencePolicy::Exclude,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "invalid value for 'divergence_policy': '{other}' (use 'abort' or 'exclude')"
                    )))
                }
            }
        }
        other => {
            return Err(Error::InvalidConfig(format!("unknown config key '{other}'")));
        }
    }
    Ok(())
}

/// Splits flat config text into `(key, value)` pairs. Blank lines and `#`
/// comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!(
                "config line {} is not 'key = value': '{raw}'",
                lineno + 1
            ))
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Builds a config from defaults, an optional file, and override pairs
/// (applied after the file), then validates it.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config '{}': {e}", path.display()))
        })?;
        for (key, value) in parse_config_text(&text)? {
            apply_setting(&mut cfg, &key, &value)?;
        }
    }
    apply_overrides(&mut cfg, overrides)?;
    Ok(cfg)
}

/// Applies override pairs and validates the result.
pub fn apply_overrides(cfg: &mut ExperimentConfig, overrides: &[(String, String)]) -> Result<()> {
    for (key, value) in overrides {
        apply_setting(cfg, key, value)?;
    }
    cfg.validate()
}

/// Renders the fully resolved config in the loadable flat format.
pub fn resolved_config_text(cfg: &ExperimentConfig) -> String {
    let algorithms = cfg
        .algorithms
        .iter()
        .map(|a| a.config_name())
        .collect::<Vec<_>>()
        .join(",");
    let clamp = match cfg.lambda_clamp {
        None => "none".to_string(),
        Some((lo, hi)) => format!("{lo},{hi}"),
    };
    let policy = match cfg.divergence_policy {
        DivergencePolicy::Abort => "abort",
        DivergencePolicy::Exclude => "exclude",
    };
    let mut s = String::new();
    let _ = writeln!(s, "n_taps = {}", cfg.n_taps);
    let _ = writeln!(s, "n_active = {}", cfg.n_active);
    let _ = writeln!(s, "snr_db = {}", cfg.snr_db);
    let _ = writeln!(s, "gamma = {}", cfg.gamma);
    let _ = writeln!(s, "delta = {}", cfg.delta);
    let _ = writeln!(s, "mu_lambda = {}", cfg.mu_lambda);
    let _ = writeln!(s, "alpha = {}", cfg.alpha);
    let _ = writeln!(s, "beta_coeff = {}", cfg.beta_coeff);
    let _ = writeln!(s, "input_variance = {}", cfg.input_variance);
    let _ = writeln!(s, "attractor_gain = {}", cfg.attractor_gain);
    let _ = writeln!(s, "n_iterations = {}", cfg.n_iterations);
    let _ = writeln!(s, "n_runs = {}", cfg.n_runs);
    let _ = writeln!(s, "master_seed = {}", cfg.master_seed);
    let _ = writeln!(s, "algorithms = {algorithms}");
    let _ = writeln!(s, "normalize_system = {}", cfg.normalize_system);
    let _ = writeln!(s, "lambda_init = {}", cfg.lambda_init);
    let _ = writeln!(s, "lambda_clamp = {clamp}");
    let _ = writeln!(s, "steady_window = {}", cfg.steady_window);
    let _ = writeln!(s, "divergence_policy = {policy}");
    s
}

/// Formats with 9 significant digits, the precision used in emitted CSVs.
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.8e}")
}

/// Writes `curves.csv`, `steady_state.csv`, `lambda.csv`, and
/// `config.resolved` into `out_dir`, returning the paths written.
pub fn emit_curves(result: &RunResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let mut curves = String::from("iteration,algorithm,msd_linear,msd_db\n");
    for t in 0..result.config.n_iterations {
        for curve in &result.curves {
            let v = curve.msd_linear[t];
            let _ = writeln!(
                curves,
                "{t},{},{},{}",
                curve.algorithm_id,
                fmt_sig(v),
                fmt_sig(to_db(v))
            );
        }
    }
    let path = out_dir.join("curves.csv");
    fs::write(&path, curves)?;
    written.push(path);

    let mut steady = String::from("algorithm,msd_db,window_fraction\n");
    for (curve, estimate) in result.curves.iter().zip(&result.steady_state) {
        let _ = writeln!(
            steady,
            "{},{},{}",
            curve.algorithm_id,
            fmt_sig(estimate.msd_db),
            fmt_sig(estimate.window_fraction)
        );
    }
    let path = out_dir.join("steady_state.csv");
    fs::write(&path, steady)?;
    written.push(path);

    let mut lambda = String::from("iteration,algorithm,lambda_mean\n");
    for t in 0..result.config.n_iterations {
        for (curve, trace) in result.curves.iter().zip(&result.lambda_mean) {
            if let Some(trace) = trace {
                let _ = writeln!(lambda, "{t},{},{}", curve.algorithm_id, fmt_sig(trace[t]));
            }
        }
    }
    let path = out_dir.join("lambda.csv");
    fs::write(&path, lambda)?;
    written.push(path);

    let path = out_dir.join("config.resolved");
    fs::write(&path, resolved_config_text(&result.config))?;
    written.push(path);

    Ok(written)
}

/// Emits one subdirectory per sweep point plus a `sweep_summary.csv` of
/// steady-state levels versus the step-size ratio.
pub fn emit_sweep(results: &[RunResult], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut summary = String::from("delta,algorithm,msd_db\n");
    for result in results {
        let delta = result.config.delta;
        written.extend(emit_curves(result, &out_dir.join(format!("delta_{delta}")))?);
        for (curve, estimate) in result.curves.iter().zip(&result.steady_state) {
            let _ = writeln!(
                summary,
                "{delta},{},{}",
                curve.algorithm_id,
                fmt_sig(estimate.msd_db)
            );
        }
    }
    let path = out_dir.join("sweep_summary.csv");
    fs::write(&path, summary)?;
    written.push(path);
    Ok(written)
}

/// Scenario presets mirroring the standard benchmark configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigScenario {
    /// 3 active taps, ratio 0.3.
    Fig3,
    /// 6 active taps, ratio 0.3.
    Fig4,
    /// 3 active taps, ratio 0.5.
    Fig5,
    /// 6 active taps, ratio 0.5.
    Fig6,
}

pub fn fig_scenario_config(which: FigScenario) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    match which {
        FigScenario::Fig3 => {}
        FigScenario::Fig4 => cfg.n_active = 6,
        FigScenario::Fig5 => cfg.delta = 0.5,
        FigScenario::Fig6 => {
            cfg.n_active = 6;
            cfg.delta = 0.5;
        }
    }
    cfg
}

/// Base config for the ratio-sweep presets: the combined algorithms swept
/// over [`SWEEP_DELTAS`] with `n_active` active taps.
pub fn fig_sweep_config(n_active: usize) -> ExperimentConfig {
    ExperimentConfig {
        n_active,
        algorithms: vec![Algorithm::AcLms, Algorithm::AcL0lms],
        ..ExperimentConfig::default()
    }
}

/// Options for [`selftest`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    /// Debug hook: negate the attractor inside the checks. A correct build
    /// must then fail the gradient-direction checks.
    pub flip_attractor_sign: bool,
}

pub struct SelftestCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub struct SelftestReport {
    pub checks: Vec<SelftestCheck>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for check in &self.checks {
            let verdict = if check.passed { "pass" } else { "FAIL" };
            let _ = writeln!(s, "{:<40} {:<4}  {}", check.name, verdict, check.detail);
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        let _ = write!(
            s,
            "selftest: {} ({passed}/{} checks passed)",
            if self.all_passed() { "PASS" } else { "FAIL" },
            self.checks.len()
        );
        s
    }
}

fn golden_section_min(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-10 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

fn check_affine_identity(rng: &mut ChaCha12Rng) -> SelftestCheck {
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let n = rng.gen_range(1..=48);
        let draw = |rng: &mut ChaCha12Rng| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let fast = FilterState::with_weights(draw(rng), 0.1).unwrap();
        let slow = FilterState::with_weights(draw(rng), 0.05).unwrap();
        let lambda = rng.gen_range(-4.0..4.0);
        let combiner = CombinerState::new(lambda, 1.0, None).unwrap();
        let cf = CombinedFilter::new(fast, slow, combiner, FilterMode::Standard).unwrap();
        let mut window = RegressorWindow::new(n);
        for _ in 0..n {
            window.push(rng.gen_range(-1.0..1.0));
        }
        let mixed = cf.combined_output(&window).unwrap();
        let through_eq = dot(&cf.equivalent_weights(), window.samples());
        worst = worst.max((mixed - through_eq).abs() / (1.0 + mixed.abs()));
    }
    SelftestCheck {
        name: "affine-output-identity",
        passed: worst <= 1e-12,
        detail: format!("max relative gap {worst:.2e} over 2000 cases (tol 1e-12)"),
    }
}

fn check_optimal_lambda_search(rng: &mut ChaCha12Rng) -> SelftestCheck {
    let n = 16;
    let mut worst: f64 = 0.0;
    let eye: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..25 {
        let draw = |rng: &mut ChaCha12Rng| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let (wt, wf, ws) = (draw(rng), draw(rng), draw(rng));
        let analytic = optimal_lambda(&wt, &wf, &ws, &eye).unwrap();
        let objective = |l: f64| -> f64 {
            wt.iter()
                .zip(wf.iter().zip(&ws))
                .map(|(t, (f, s))| {
                    let eq = l * (f - s) + s;
                    (t - eq) * (t - eq)
                })
                .sum()
        };
        let searched = golden_section_min(-5.0, 5.0, objective);
        worst = worst.max((analytic - searched).abs());
    }
    SelftestCheck {
        name: "optimal-combiner-vs-line-search",
        passed: worst <= 1e-3,
        detail: format!("max gap {worst:.2e} over 25 instances (tol 1e-3)"),
    }
}

fn check_optimal_lambda_exact() -> SelftestCheck {
    let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let extrapolated = optimal_lambda(&[1.0, 0.0], &[0.5, 0.0], &[0.0, 0.0], &eye).unwrap();
    let fast_exact = optimal_lambda(&[1.0, 0.3], &[1.0, 0.3], &[0.0, 0.0], &eye).unwrap();
    let slow_exact = optimal_lambda(&[1.0, 0.3], &[0.5, 0.0], &[1.0, 0.3], &eye).unwrap();
    let passed = extrapolated == 2.0 && fast_exact == 1.0 && slow_exact == 0.0;
    SelftestCheck {
        name: "optimal-combiner-closed-cases",
        passed,
        detail: format!("(2, 1, 0) expected, got ({extrapolated}, {fast_exact}, {slow_exact})"),
    }
}

fn check_penalty_gradient(sign: f64, rng: &mut ChaCha12Rng) -> SelftestCheck {
    let (alpha, beta, h) = (10.0, 1.0, 1e-6);
    let penalty = |w: f64| beta * (1.0 - (-alpha * w.abs()).exp());
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mag = rng.gen_range(0.01..=1.0);
        let w = if rng.gen::<bool>() { mag } else { -mag };
        let numeric = (penalty(w + h) - penalty(w - h)) / (2.0 * h);
        let analytic = sign * l0_penalty_gradient_exact(w, alpha, beta);
        worst = worst.max((analytic - numeric).abs() / numeric.abs().max(1e-300));
    }
    SelftestCheck {
        name: "penalty-gradient-vs-finite-difference",
        passed: worst <= 1e-4,
        detail: format!("max relative error {worst:.2e} over 100 points (tol 1e-4)"),
    }
}

fn check_taylor_consistency(sign: f64) -> SelftestCheck {
    let alpha = 10.0;
    let mut worst: f64 = 0.0;
    for i in -100i32..=100 {
        let w = f64::from(i) * 0.001;
        let lhs = -(sign * zero_attract(w, alpha)) / 2.0;
        let rhs = alpha * sgn(w) * (1.0 - alpha * w.abs());
        worst = worst.max((lhs - rhs).abs());
    }
    SelftestCheck {
        name: "attractor-matches-linearized-gradient",
        passed: worst <= 1e-12,
        detail: format!("max gap {worst:.2e} inside the window (tol 1e-12)"),
    }
}

fn check_attraction_direction(sign: f64) -> SelftestCheck {
    let alpha = 10.0;
    let mut ok = true;
    for i in 1..100 {
        let w = f64::from(i) * 0.00099;
        let s_pos = sign * zero_attract(w, alpha);
        let s_neg = sign * zero_attract(-w, alpha);
        ok &= s_pos < 0.0 && s_neg > 0.0;
    }
    ok &= sign * zero_attract(1.0 / alpha, alpha) == 0.0;
    ok &= sign * zero_attract(-1.0 / alpha, alpha) == 0.0;
    ok &= zero_attract(0.2, alpha) == 0.0 && zero_attract(0.0, alpha) == 0.0;
    SelftestCheck {
        name: "attraction-direction-and-window",
        passed: ok,
        detail: "pull opposes sign inside window, zero at edges and outside".into(),
    }
}

/// Runs the consistency checks the experiment pipeline relies on: the affine
/// output identity, the analytic combiner against a line search, and the
/// attractor against the penalty gradient. Deterministic and small-scale.
pub fn selftest(opts: &SelftestOptions) -> SelftestReport {
    let sign = if opts.flip_attractor_sign { -1.0 } else { 1.0 };
    let mut rng = ChaCha12Rng::seed_from_u64(0xA11CE);
    let checks = vec![
        check_affine_identity(&mut rng),
        check_optimal_lambda_search(&mut rng),
        check_optimal_lambda_exact(),
        check_penalty_gradient(sign, &mut rng),
        check_taylor_consistency(sign),
        check_attraction_direction(sign),
    ];
    SelftestReport { checks }
}
