use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use aclms::cli::{self, FigScenario, SelftestOptions};
use aclms::experiment::{run_scenario, sweep_delta, ExperimentConfig, RunResult};
use aclms::{Error, Result};

#[derive(Parser)]
#[command(
    name = "aclms",
    version,
    about = "Simulates adaptive sparse system identification with LMS, L0-LMS, and affine combinations of both"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file with flat `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set delta=0.5`. Repeatable; applied
    /// after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory for the CSV files.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Master seed override.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Monte-Carlo run count override.
    #[arg(long, global = true, value_name = "N")]
    runs: Option<usize>,

    /// Worker threads for the Monte-Carlo fan-out (default: all cores).
    /// Outputs are identical for any worker count.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Suppress status output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario built from defaults, config file, and overrides.
    Run,
    /// Run the scenario once per step-size ratio, with paired seeds.
    Sweep {
        /// Ratios to sweep, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = cli::SWEEP_DELTAS)]
        deltas: Vec<f64>,
    },
    /// Preset: 3 active taps, ratio 0.3.
    Fig3,
    /// Preset: 6 active taps, ratio 0.3.
    Fig4,
    /// Preset: 3 active taps, ratio 0.5.
    Fig5,
    /// Preset: 6 active taps, ratio 0.5.
    Fig6,
    /// Preset: ratio sweep of the combined algorithms, 3 active taps.
    Fig7,
    /// Preset: ratio sweep of the combined algorithms, 6 active taps.
    Fig8,
    /// Run the built-in consistency checks and exit nonzero on failure.
    Selftest {
        /// Debug hook: negate the attractor inside the checks (must fail).
        #[arg(long, hide = true)]
        flip_attractor_sign: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidConfig(_) => 2,
                Error::Io(_) => 3,
                Error::Divergence(_) => 4,
                _ => 1,
            })
        }
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| {
                    Error::InvalidConfig(format!("--set expects KEY=VALUE, got '{pair}'"))
                })
        })
        .collect()
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Internal(format!("cannot build worker pool: {e}")))?
            .install(f),
        None => f(),
    }
}

fn preset_config(cli: &Cli, base: ExperimentConfig, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    if cli.config.is_some() {
        return Err(Error::InvalidConfig(
            "presets take no config file; adjust them with --set".into(),
        ));
    }
    let mut cfg = base;
    cli::apply_overrides(&mut cfg, overrides)?;
    Ok(cfg)
}

fn report_scenario(cli: &Cli, result: &RunResult, files: &[PathBuf]) {
    if cli.quiet {
        return;
    }
    let cfg = &result.config;
    eprintln!(
        "scenario: taps={} active={} snr={} dB delta={} runs={} iterations={} seed={}",
        cfg.n_taps, cfg.n_active, cfg.snr_db, cfg.delta, cfg.n_runs, cfg.n_iterations, cfg.master_seed
    );
    for (curve, estimate) in result.curves.iter().zip(&result.steady_state) {
        eprintln!(
            "  steady-state {:<12} {:>9.3} dB",
            curve.algorithm_id, estimate.msd_db
        );
    }
    if !result.excluded_seeds.is_empty() {
        eprintln!(
            "  excluded {} diverged run(s): seeds {:?}",
            result.excluded_seeds.len(),
            result.excluded_seeds
        );
    }
    for file in files {
        eprintln!("wrote {}", file.display());
    }
}

fn run_one(cli: &Cli, cfg: &ExperimentConfig) -> Result<u8> {
    let result = with_pool(cli.workers, || run_scenario(cfg))?;
    let files = cli::emit_curves(&result, &cli.out)?;
    report_scenario(cli, &result, &files);
    Ok(0)
}

fn run_sweep(cli: &Cli, cfg: &ExperimentConfig, deltas: &[f64]) -> Result<u8> {
    let results = with_pool(cli.workers, || sweep_delta(cfg, deltas))?;
    let files = cli::emit_sweep(&results, &cli.out)?;
    if !cli.quiet {
        for result in &results {
            eprintln!("delta = {}:", result.config.delta);
            for (curve, estimate) in result.curves.iter().zip(&result.steady_state) {
                eprintln!(
                    "  steady-state {:<12} {:>9.3} dB",
                    curve.algorithm_id, estimate.msd_db
                );
            }
        }
        for file in &files {
            eprintln!("wrote {}", file.display());
        }
    }
    Ok(0)
}

fn execute(cli: Cli) -> Result<u8> {
    let overrides = parse_overrides(&cli.set)?;

    if let Command::Selftest { flip_attractor_sign } = cli.command {
        let report = cli::selftest(&SelftestOptions { flip_attractor_sign });
        println!("{}", report.render());
        return Ok(u8::from(!report.all_passed()));
    }

    let (mut cfg, sweep_list): (ExperimentConfig, Option<Vec<f64>>) = match &cli.command {
        Command::Run => (cli::load_config(cli.config.as_deref(), &overrides)?, None),
        Command::Sweep { deltas } => (
            cli::load_config(cli.config.as_deref(), &overrides)?,
            Some(deltas.clone()),
        ),
        Command::Fig3 => (
            preset_config(&cli, cli::fig_scenario_config(FigScenario::Fig3), &overrides)?,
            None,
        ),
        Command::Fig4 => (
            preset_config(&cli, cli::fig_scenario_config(FigScenario::Fig4), &overrides)?,
            None,
        ),
        Command::Fig5 => (
            preset_config(&cli, cli::fig_scenario_config(FigScenario::Fig5), &overrides)?,
            None,
        ),
        Command::Fig6 => (
            preset_config(&cli, cli::fig_scenario_config(FigScenario::Fig6), &overrides)?,
            None,
        ),
        Command::Fig7 => (
            preset_config(&cli, cli::fig_sweep_config(3), &overrides)?,
            Some(cli::SWEEP_DELTAS.to_vec()),
        ),
        Command::Fig8 => (
            preset_config(&cli, cli::fig_sweep_config(6), &overrides)?,
            Some(cli::SWEEP_DELTAS.to_vec()),
        ),
        Command::Selftest { .. } => unreachable!("handled above"),
    };

    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(runs) = cli.runs {
        cfg.n_runs = runs;
    }
    cfg.validate()?;

    match sweep_list {
        None => run_one(&cli, &cfg),
        Some(deltas) => run_sweep(&cli, &cfg, &deltas),
    }
}
