//! Monte Carlo sweeps, summary metrics, CSV output and the command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{
    run_algorithm1, run_baseline_fixed, run_baseline_noac, DelayMode, OrchestratorError, RunConfig,
    RunResult, RunStatus,
};
use crate::scenario::{
    draw_channels, generate_scenario, validate, watts_to_dbm, ScenarioConfig, ScenarioError,
};

/// Environment variable holding the default seed of the CLI.
pub const SEED_ENV: &str = "TACTILE_CRAN_SEED";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("no results to summarize")]
    EmptyInput,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Run(#[from] OrchestratorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Dynamic delay split with admission control.
    Proposed,
    /// Delay split fixed at thirds.
    Fixed,
    /// No admission control and no user/fronthaul/BBU budgets.
    NoAc,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::Fixed => "fixed",
            Variant::NoAc => "noac",
        }
    }

    pub fn run(
        self,
        scenario: &crate::scenario::Scenario,
        chan: &crate::scenario::ChannelRealization,
        config: &RunConfig,
    ) -> Result<RunResult, OrchestratorError> {
        match self {
            Variant::Proposed => run_algorithm1(scenario, chan, config),
            Variant::Fixed => run_baseline_fixed(scenario, chan, config),
            Variant::NoAc => run_baseline_noac(scenario, chan, config),
        }
    }
}

/// One point of a sweep: labelled parameter values, the scenario template and the
/// algorithm variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub params: Vec<(String, String)>,
    pub config: ScenarioConfig,
    pub variant: Variant,
}

/// What one realization contributes to the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationSummary {
    pub seed: u64,
    pub requested: usize,
    pub admitted: usize,
    pub converged: bool,
    pub power_w: f64,
    pub iterations: usize,
}

impl RealizationSummary {
    pub fn from_run(seed: u64, requested: usize, run: &RunResult) -> Self {
        RealizationSummary {
            seed,
            requested,
            admitted: run.admitted.len(),
            converged: run.status == RunStatus::Converged,
            power_w: run.total_power_w,
            iterations: run.iterations,
        }
    }

    /// Everyone was rejected.
    pub fn none_admitted(seed: u64, requested: usize) -> Self {
        RealizationSummary {
            seed,
            requested,
            admitted: 0,
            converged: false,
            power_w: 0.0,
            iterations: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub params: Vec<(String, String)>,
    /// dBm of the watt-average over converged realizations; NaN if none converged.
    pub mean_power_dbm: f64,
    pub mean_power_w: f64,
    /// Per realization, NaN where the run did not converge.
    pub power_dbm: Vec<f64>,
    pub sar_percent: f64,
    pub mean_iterations: f64,
    pub n_converged: usize,
    pub n_realizations: usize,
}

/// Averages powers in watts over converged realizations and the acceptance ratio over all.
pub fn compute_metrics(
    runs: &[RealizationSummary],
    params: Vec<(String, String)>,
) -> Result<RunMetrics, ExperimentError> {
    if runs.is_empty() {
        return Err(ExperimentError::EmptyInput);
    }
    let converged: Vec<&RealizationSummary> = runs.iter().filter(|r| r.converged).collect();
    let mean_power_w = if converged.is_empty() {
        f64::NAN
    } else {
        converged.iter().map(|r| r.power_w).sum::<f64>() / converged.len() as f64
    };
    let sar = runs
        .iter()
        .map(|r| {
            if r.requested == 0 {
                1.0
            } else {
                r.admitted as f64 / r.requested as f64
            }
        })
        .sum::<f64>()
        / runs.len() as f64;
    Ok(RunMetrics {
        params,
        mean_power_dbm: watts_to_dbm(mean_power_w),
        mean_power_w,
        power_dbm: runs
            .iter()
            .map(|r| {
                if r.converged {
                    watts_to_dbm(r.power_w)
                } else {
                    f64::NAN
                }
            })
            .collect(),
        sar_percent: 100.0 * sar,
        mean_iterations: runs.iter().map(|r| r.iterations as f64).sum::<f64>() / runs.len() as f64,
        n_converged: converged.len(),
        n_realizations: runs.len(),
    })
}

/// Seed of realization `r` under base seed `seed`.
pub fn realization_seed(seed: u64, r: usize) -> u64 {
    // SplitMix64 step, so neighbouring base seeds give unrelated streams.
    let mut z = seed.wrapping_add((r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one realization of a sweep point.
pub fn run_realization(
    point: &SweepPoint,
    seed: u64,
    config: &RunConfig,
) -> Result<(RealizationSummary, Option<RunResult>), ExperimentError> {
    let scenario = generate_scenario(&ScenarioConfig {
        seed,
        ..point.config.clone()
    })?;
    let chan = draw_channels(&scenario, seed);
    let requested = scenario.num_users();
    match point.variant.run(&scenario, &chan, config) {
        Ok(run) => Ok((
            RealizationSummary::from_run(seed, requested, &run),
            Some(run),
        )),
        Err(OrchestratorError::NoUsersLeft { .. }) => {
            Ok((RealizationSummary::none_admitted(seed, requested), None))
        }
        Err(e) => Err(e.into()),
    }
}

/// Every sweep point over the same `n` realizations, run in parallel; results keep the
/// sweep order.
pub fn run_monte_carlo(
    sweep: &[SweepPoint],
    n: usize,
    seed: u64,
    config: &RunConfig,
) -> Result<Vec<RunMetrics>, ExperimentError> {
    if n == 0 || sweep.is_empty() {
        return Err(ExperimentError::EmptyInput);
    }
    let jobs: Vec<(usize, usize)> = (0..sweep.len())
        .flat_map(|p| (0..n).map(move |r| (p, r)))
        .collect();
    let outcomes: Vec<RealizationSummary> = jobs
        .par_iter()
        .map(|&(p, r)| {
            run_realization(&sweep[p], realization_seed(seed, r), config).map(|(s, _)| s)
        })
        .collect::<Result<_, _>>()?;
    outcomes
        .chunks(n)
        .zip(sweep)
        .map(|(runs, point)| compute_metrics(runs, point.params.clone()))
        .collect()
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_records(
    path: Option<&Path>,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<(), ExperimentError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(io_err(Path::new("<buffer>")))?;
    }
    match path {
        Some(p) => std::fs::write(p, &buf).map_err(io_err(p)),
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

/// Header plus one row per sweep point.
pub fn emit_csv(table: &[RunMetrics], path: &Path) -> Result<(), ExperimentError> {
    let (header, rows) = metrics_records(table)?;
    write_records(Some(path), &header, &rows)
}

fn metrics_records(
    table: &[RunMetrics],
) -> Result<(Vec<String>, Vec<Vec<String>>), ExperimentError> {
    let first = table.first().ok_or(ExperimentError::EmptyInput)?;
    let mut header: Vec<String> = first.params.iter().map(|(k, _)| k.clone()).collect();
    header.extend(
        [
            "mean_power_dbm",
            "sar_percent",
            "mean_iterations",
            "n_converged",
        ]
        .map(String::from),
    );
    let rows = table
        .iter()
        .map(|m| {
            let mut r: Vec<String> = m.params.iter().map(|(_, v)| v.clone()).collect();
            r.extend([
                fmt(m.mean_power_dbm),
                fmt(m.sar_percent),
                fmt(m.mean_iterations),
                m.n_converged.to_string(),
            ]);
            r
        })
        .collect();
    Ok((header, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Users,
    Rrsv,
    Per,
    Delay,
    BaselineCompare,
    Convergence,
}

/// User pairs per slice for each user count of the users sweep.
pub const USER_SWEEP: [(usize, [usize; 2]); 4] =
    [(4, [1, 1]), (6, [2, 1]), (8, [2, 2]), (10, [3, 2])];
pub const RRSV_SWEEP: [f64; 3] = [0.0, 1.0, 2.0];
pub const PER_SWEEP: [f64; 6] = [1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2];
pub const DELAY_SWEEP_MS: [f64; 5] = [1.0, 2.0, 4.0, 6.0, 10.0];
/// Delay budgets for the baseline comparison, tightest first.
pub const BASELINE_DELAY_MS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

/// Builds the points of a sweep around `template`. `variant` applies to all kinds but
/// the baseline comparison, which runs all three variants.
pub fn sweep_points(
    kind: SweepKind,
    template: &ScenarioConfig,
    variant: Variant,
) -> Vec<SweepPoint> {
    let point =
        |params: Vec<(&str, String)>, config: ScenarioConfig, variant: Variant| SweepPoint {
            params: params
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            config,
            variant,
        };
    match kind {
        SweepKind::Users => USER_SWEEP
            .iter()
            .map(|&(n, pairs)| {
                point(
                    vec![("users", n.to_string())],
                    ScenarioConfig {
                        pairs_per_slice: pairs.to_vec(),
                        ..template.clone()
                    },
                    variant,
                )
            })
            .collect(),
        SweepKind::Rrsv => RRSV_SWEEP
            .iter()
            .map(|&r| {
                point(
                    vec![("rrsv_bps_per_hz", fmt(r))],
                    ScenarioConfig {
                        reservation_bps_per_hz: r,
                        ..template.clone()
                    },
                    variant,
                )
            })
            .collect(),
        SweepKind::Per => PER_SWEEP
            .iter()
            .map(|&xi| {
                let mut c = template.clone();
                c.qos.error_threshold = xi;
                point(vec![("error_threshold", fmt(xi))], c, variant)
            })
            .collect(),
        SweepKind::Delay => DELAY_SWEEP_MS
            .iter()
            .map(|&d| delay_point(template, d, variant))
            .collect(),
        SweepKind::BaselineCompare => BASELINE_DELAY_MS
            .iter()
            .flat_map(|&d| {
                [Variant::Proposed, Variant::Fixed, Variant::NoAc]
                    .map(|v| delay_point(template, d, v))
            })
            .collect(),
        SweepKind::Convergence => vec![point(vec![], template.clone(), variant)],
    }
}

fn delay_point(template: &ScenarioConfig, delay_ms: f64, variant: Variant) -> SweepPoint {
    let mut c = template.clone();
    c.qos.delay_budget_ms = delay_ms;
    SweepPoint {
        params: vec![
            ("delay_ms".into(), fmt(delay_ms)),
            ("variant".into(), variant.name().into()),
        ],
        config: c,
        variant,
    }
}

/// Mean objective and power per outer iteration of the final admission round, over
/// realizations. Finished runs hold their last value.
pub fn convergence_trace(
    point: &SweepPoint,
    n: usize,
    seed: u64,
    config: &RunConfig,
) -> Result<(Vec<String>, Vec<Vec<String>>), ExperimentError> {
    if n == 0 {
        return Err(ExperimentError::EmptyInput);
    }
    let runs: Vec<Option<RunResult>> = (0..n)
        .into_par_iter()
        .map(|r| run_realization(point, realization_seed(seed, r), config).map(|(_, run)| run))
        .collect::<Result<_, _>>()?;
    let series: Vec<Vec<(f64, f64)>> = runs
        .iter()
        .flatten()
        .map(|run| {
            let last = run.objective_trace.last().map_or(0, |t| t.round);
            run.objective_trace
                .iter()
                .filter(|t| t.round == last)
                .map(|t| (t.objective, t.total_power_w))
                .collect()
        })
        .filter(|s: &Vec<(f64, f64)>| !s.is_empty())
        .collect();
    let len = series.iter().map(Vec::len).max().unwrap_or(0);
    let header = ["iteration", "mean_objective", "mean_power_dbm", "n_active"]
        .map(String::from)
        .to_vec();
    let rows = (0..len)
        .map(|z| {
            let at = |s: &Vec<(f64, f64)>| s[z.min(s.len() - 1)];
            let m = series.len() as f64;
            let obj = series.iter().map(|s| at(s).0).sum::<f64>() / m;
            let pow = series.iter().map(|s| at(s).1).sum::<f64>() / m;
            let active = series.iter().filter(|s| s.len() > z).count();
            vec![
                (z + 1).to_string(),
                fmt(obj),
                fmt(watts_to_dbm(pow)),
                active.to_string(),
            ]
        })
        .collect();
    Ok((header, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DelayModeArg {
    Dynamic,
    Fixed,
}

#[derive(Debug, Parser)]
#[command(
    name = "tactile-cran",
    about = "Power-minimizing resource allocation for a two-tier C-RAN"
)]
pub struct Cli {
    /// Scenario file (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = SEED_ENV, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 50)]
    pub realizations: usize,
    /// Output file; standard output if absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "on")]
    pub ac: Switch,
    #[arg(
        long = "delay-mode",
        global = true,
        value_enum,
        default_value = "dynamic"
    )]
    pub delay_mode: DelayModeArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance and print the result as JSON.
    Run,
    /// Monte Carlo sweep, written as CSV.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
    },
    /// Check a scenario file.
    ValidateConfig,
}

impl Cli {
    fn variant(&self) -> Variant {
        match (self.ac, self.delay_mode) {
            (Switch::Off, _) => Variant::NoAc,
            (Switch::On, DelayModeArg::Fixed) => Variant::Fixed,
            (Switch::On, DelayModeArg::Dynamic) => Variant::Proposed,
        }
    }

    fn run_config(&self) -> RunConfig {
        RunConfig {
            ac_enabled: self.ac == Switch::On,
            delay_mode: match self.delay_mode {
                DelayModeArg::Dynamic => DelayMode::Dynamic,
                DelayModeArg::Fixed => DelayMode::FixedThirds,
            },
            ..RunConfig::default()
        }
    }

    fn template(&self) -> Result<ScenarioConfig, ExperimentError> {
        Ok(match &self.config {
            Some(p) => ScenarioConfig::from_path(p)?,
            None => ScenarioConfig::default(),
        })
    }
}

fn execute(cli: &Cli) -> Result<(), ExperimentError> {
    let template = cli.template()?;
    let config = cli.run_config();
    match &cli.command {
        Command::ValidateConfig => {
            let scenario = generate_scenario(&ScenarioConfig {
                seed: cli.seed,
                ..template
            })?;
            let problems = validate(&scenario);
            if let Some(first) = problems.first() {
                return Err(ScenarioError::InvalidConfig(first.to_string()).into());
            }
            let msg = format!(
                "ok: {} RRHs, {} users\n",
                scenario.num_rrh,
                scenario.num_users()
            );
            match &cli.out {
                Some(p) => std::fs::write(p, msg).map_err(io_err(p)),
                None => std::io::stdout()
                    .write_all(msg.as_bytes())
                    .map_err(io_err(Path::new("<stdout>"))),
            }
        }
        Command::Run => {
            let point = SweepPoint {
                params: vec![],
                config: template,
                variant: cli.variant(),
            };
            let scenario = generate_scenario(&ScenarioConfig {
                seed: cli.seed,
                ..point.config.clone()
            })?;
            let chan = draw_channels(&scenario, cli.seed);
            let run = point.variant.run(&scenario, &chan, &config)?;
            let json = run.to_json() + "\n";
            match &cli.out {
                Some(p) => std::fs::write(p, json).map_err(io_err(p)),
                None => std::io::stdout()
                    .write_all(json.as_bytes())
                    .map_err(io_err(Path::new("<stdout>"))),
            }
        }
        Command::Sweep {
            kind: SweepKind::Convergence,
        } => {
            let points = sweep_points(SweepKind::Convergence, &template, cli.variant());
            let (header, rows) =
                convergence_trace(&points[0], cli.realizations, cli.seed, &config)?;
            write_records(cli.out.as_deref(), &header, &rows)
        }
        Command::Sweep { kind } => {
            let points = sweep_points(*kind, &template, cli.variant());
            let table = run_monte_carlo(&points, cli.realizations, cli.seed, &config)?;
            let (header, rows) = metrics_records(&table)?;
            write_records(cli.out.as_deref(), &header, &rows)
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the exit code:
/// 2 for usage errors, 1 for failures, 0 otherwise.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(
        admitted: usize,
        requested: usize,
        power_w: f64,
        converged: bool,
    ) -> RealizationSummary {
        RealizationSummary {
            seed: 0,
            requested,
            admitted,
            converged,
            power_w,
            iterations: 3,
        }
    }

    #[test]
    fn metrics_examples() {
        let m = compute_metrics(&[summary(20, 20, 1.0, true)], vec![]).unwrap();
        assert_eq!(m.sar_percent, 100.0);
        assert!((m.mean_power_dbm - 30.0).abs() < 1e-12);
        let m = compute_metrics(&[summary(17, 20, 1.0, true)], vec![]).unwrap();
        assert!((m.sar_percent - 85.0).abs() < 1e-12);
        assert!(matches!(
            compute_metrics(&[], vec![]),
            Err(ExperimentError::EmptyInput)
        ));
    }

    #[test]
    fn power_averaged_in_watts() {
        let m = compute_metrics(
            &[
                summary(1, 1, 1.0, true),
                summary(1, 1, 3.0, true),
                summary(0, 1, 0.0, false),
            ],
            vec![],
        )
        .unwrap();
        assert!((m.mean_power_w - 2.0).abs() < 1e-15);
        assert_eq!(m.n_converged, 2);
        assert!((m.sar_percent - 200.0 / 3.0).abs() < 1e-12);
        assert!(m.power_dbm[2].is_nan());
    }

    #[test]
    fn realization_seeds_differ() {
        let s: Vec<u64> = (0..100).map(|r| realization_seed(7, r)).collect();
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), s.len());
        assert_ne!(realization_seed(7, 0), realization_seed(8, 0));
    }
}
