//! Command-line harness: episode simulation, curve fitting from logs,
//! guarantee verification, benchmarking, and distribution-shift runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bidpace::bench::{
    run_benchmark, run_replication, run_shift, shift_scenario, BenchError, BenchmarkReport,
    ExperimentConfig, ShiftScenario,
};
use bidpace::fit::{fit_bundle, FitOptions};
use bidpace::io::{self, write_csv, write_json, write_jsonl};
use bidpace::market::Mode;
use bidpace::verify::{
    cost_error_ladder_suite, exactness_suite, gap_suite, harmonic_number, sweep_campaign,
    traffic_growth_suite, violation_sweep,
};
use bidpace::predict::ErrorSpec;

#[derive(Parser)]
#[command(name = "bidpace", version, about = "Response-curve pacing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config (single JSON document).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Override the campaign seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the execution mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fluid,
    Stochastic,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fluid => Mode::Fluid,
            ModeArg::Stochastic => Mode::Stochastic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    CompetitionSurge,
    CpaTighten,
}

impl From<ScenarioArg> for ShiftScenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::CompetitionSurge => ShiftScenario::CompetitionSurge,
            ScenarioArg::CpaTighten => ShiftScenario::CpaTighten,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its trace and summary.
    Simulate(CommonArgs),
    /// Fit a response bundle from a JSONL tick log.
    Fit {
        /// Logged tick records, one JSON object per line.
        #[arg(long)]
        log: PathBuf,
        /// Anchor tick (1-based).
        #[arg(long, default_value_t = 1)]
        anchor: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampled future ticks per anchor.
        #[arg(long, default_value_t = bidpace::fit::DEFAULT_FUTURE_SAMPLES)]
        future_samples: usize,
        /// Weight of the log-traffic loss term.
        #[arg(long, default_value_t = bidpace::fit::DEFAULT_TRAFFIC_WEIGHT)]
        traffic_weight: f64,
        /// Multi-start restarts.
        #[arg(long, default_value_t = bidpace::fit::DEFAULT_RESTARTS)]
        restarts: usize,
    },
    /// Verify a controller guarantee against its brute-force oracle.
    Verify {
        #[command(subcommand)]
        check: VerifyCheck,
    },
    /// Run replications and write per-seed rows plus a summary.
    Bench(CommonArgs),
    /// Compare an experiment against its shifted counterpart.
    Shift {
        #[command(flatten)]
        common: CommonArgs,
        /// Which environment shift to apply.
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
    },
}

#[derive(Subcommand)]
enum VerifyCheck {
    /// Structural gap versus the brute-force trajectory optimum.
    Gap {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 20)]
        uniform: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Single-multiplier exactness versus a feasibility-grid argmax.
    Exact {
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 2048)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Constraint-violation bounds under injected prediction error.
    Violation {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &Path, seed: Option<u64>, mode: Option<ModeArg>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if let Some(seed) = seed {
        config.campaign.seed = seed;
    }
    if let Some(mode) = mode {
        config.mode = mode.into();
    }
    config.validate()?;
    Ok(config)
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn write_bench_csv(path: &Path, report: &BenchmarkReport) -> Result<()> {
    write_csv(path, &BenchmarkReport::csv_header(), &report.csv_rows())?;
    Ok(())
}

fn pass_line(name: &str, ok: bool, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => {
            let config = load_config(&args.config, args.seed, args.mode)?;
            let (seed, episode, scored) = run_replication(&config, 0)?;
            ensure_dir(&args.out)?;
            write_jsonl(&args.out.join("trace.jsonl"), &episode.trace)?;
            #[derive(Serialize)]
            struct Summary<'a> {
                seed: u64,
                total_cost: f64,
                total_value: f64,
                realized_cpa: Option<f64>,
                budget_violation: f64,
                cpa_violation: f64,
                penalty: f64,
                score: f64,
                config: &'a ExperimentConfig,
            }
            write_json(
                &args.out.join("summary.json"),
                &Summary {
                    seed,
                    total_cost: episode.total_cost,
                    total_value: episode.total_value,
                    realized_cpa: episode.realized_cpa,
                    budget_violation: episode.budget_violation,
                    cpa_violation: episode.cpa_violation,
                    penalty: scored.penalty,
                    score: scored.score,
                    config: &config,
                },
            )?;
            println!(
                "episode: cost {:.6} value {:.6} cpa {} score {:.6}",
                episode.total_cost,
                episode.total_value,
                episode
                    .realized_cpa
                    .map(|c| format!("{c:.6}"))
                    .unwrap_or_else(|| "n/a".into()),
                scored.score
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit { log, anchor, out, seed, future_samples, traffic_weight, restarts } => {
            let records = io::read_tick_log(&log)?;
            let opts = FitOptions {
                future_samples,
                traffic_weight,
                restarts,
                ..FitOptions::default()
            };
            use rand::SeedableRng;
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let outcome = fit_bundle(&records, anchor, &opts, &mut rng)?;
            ensure_dir(&out)?;
            #[derive(Serialize)]
            struct FitDump<'a> {
                anchor: usize,
                #[serde(flatten)]
                outcome: &'a bidpace::fit::FitOutcome,
            }
            write_json(&out.join("bundle.json"), &FitDump { anchor, outcome: &outcome })?;
            println!("fitted anchor {anchor}: loss {:.6e}", outcome.loss);
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { check } => run_verify(check),
        Command::Bench(args) => {
            let config = load_config(&args.config, args.seed, args.mode)?;
            let report = run_benchmark(&config)?;
            ensure_dir(&args.out)?;
            write_bench_csv(&args.out.join("bench.csv"), &report)?;
            write_json(&args.out.join("summary.json"), &report)?;
            println!(
                "bench: score {:.6} ± {:.6} over {} replications, violation rate {:.3}",
                report.mean_score,
                report.std_score,
                report.rows.len(),
                report.violation_rate
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Shift { common, scenario } => {
            let config = load_config(&common.config, common.seed, common.mode)?;
            let scenario: ShiftScenario = scenario.into();
            let report = run_shift(&config, scenario)?;
            ensure_dir(&common.out)?;
            write_bench_csv(&common.out.join("baseline.csv"), &report.baseline)?;
            write_bench_csv(&common.out.join("shifted.csv"), &report.shifted)?;
            write_json(&common.out.join("shift.json"), &report)?;
            println!(
                "shift {:?}: score {:.6} -> {:.6} ({:.2}% degradation)",
                scenario, report.baseline.mean_score, report.shifted.mean_score,
                report.degradation_pct
            );
            let shifted_config = shift_scenario(&config, scenario);
            println!(
                "shifted campaign: target_cpa {:.6}, competition_scale {:.3}",
                shifted_config.campaign.target_cpa, shifted_config.competition_scale
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_verify(check: VerifyCheck) -> Result<ExitCode> {
    let ok = match check {
        VerifyCheck::Gap { instances, uniform, out, seed } => {
            let report = gap_suite(instances, uniform, seed);
            ensure_dir(&out)?;
            write_json(&out.join("gap.json"), &report)?;
            let conclusive_hold = report.holds;
            let mut ok = pass_line(
                "gap bound",
                conclusive_hold,
                format!(
                    "{} conclusive instances of {}, bound satisfied on all conclusive",
                    report.conclusive,
                    report.instances.len()
                ),
            );
            let zero_disp = report
                .instances
                .iter()
                .filter(|c| c.uniform && c.report.conclusive)
                .all(|c| c.report.gap.abs() <= c.report.grid_tol);
            ok &= pass_line(
                "zero-dispersion gap",
                zero_disp,
                "uniform instances stay within grid tolerance".into(),
            );
            ok
        }
        VerifyCheck::Exact { cases, grid, out, seed } => {
            let report = exactness_suite(cases, grid, seed);
            ensure_dir(&out)?;
            write_json(&out.join("exactness.json"), &report)?;
            pass_line(
                "single-multiplier exactness",
                report.holds,
                format!("{}/{} cases match within one grid cell", report.matched, report.cases),
            )
        }
        VerifyCheck::Violation { instances, out, seed } => {
            ensure_dir(&out)?;
            let mut ok = true;

            // Combined-error ladder on the uniform sweep campaign.
            let (gt, config) = sweep_campaign(48, seed);
            let ladder: Vec<ErrorSpec> = [0.0, 0.005, 0.01, 0.02]
                .iter()
                .map(|&e| ErrorSpec {
                    eps_cost: e,
                    eps_value: e,
                    eps_traffic: e * 5000.0,
                    ..ErrorSpec::ZERO
                })
                .collect();
            let sweep = violation_sweep(&gt, &config, &ladder)?;
            io::write_violation_csv(&out.join("violation.csv"), &sweep)?;
            ok &= pass_line(
                "violation bounds",
                sweep.holds,
                format!("overshoot within bounds on {} ladder rungs", sweep.rows.len()),
            );

            let ladder_suite = cost_error_ladder_suite(instances, 24, seed);
            let ratio_ok = ladder_suite.bounds_hold
                && (1.2..=2.8).contains(&ladder_suite.median_doubling_ratio);
            ok &= pass_line(
                "cost-error linearity",
                ratio_ok,
                format!(
                    "median overshoot doubling ratio {:.3} across {} instances",
                    ladder_suite.median_doubling_ratio, ladder_suite.instances
                ),
            );

            let growth = traffic_growth_suite(&[16, 48, 256], 100.0, seed);
            let h_ok = growth
                .horizons
                .iter()
                .zip(&growth.harmonic_factors)
                .all(|(&t, &h)| (h - harmonic_number(t)).abs() < 1e-12 && h <= 1.0 + (t as f64).ln());
            ok &= pass_line(
                "harmonic factor",
                h_ok && growth.holds,
                format!(
                    "H_I {:?}, overshoot growth {:.3} within limit {:.3}",
                    growth.harmonic_factors, growth.growth_factor, growth.growth_limit
                ),
            );

            #[derive(Serialize)]
            struct ViolationDump {
                sweep: bidpace::verify::ViolationReport,
                ladder: bidpace::verify::LadderSuiteReport,
                growth: bidpace::verify::TrafficGrowthReport,
            }
            write_json(
                &out.join("violation.json"),
                &ViolationDump { sweep, ladder: ladder_suite, growth },
            )?;
            ok
        }
    };
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if err.downcast_ref::<serde_json::Error>().is_some() {
        "parse"
    } else if err.downcast_ref::<std::io::Error>().is_some()
        || err.downcast_ref::<io::IoError>().is_some()
    {
        "io"
    } else if let Some(BenchError::InvalidConfig(_) | BenchError::Market(_)) =
        err.downcast_ref::<BenchError>()
    {
        "config"
    } else {
        "runtime"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            let obj = serde_json::json!({
                "error": format!("{err:#}"),
                "kind": error_kind(&err),
            });
            eprintln!("{obj}");
            ExitCode::from(2)
        }
    }
}
