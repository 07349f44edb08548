//! Command-line frontend: `analyze`, `sanitize`, `sweep` and `oracle`.
//!
//! Human-readable summaries go to standard output; machine formats are only
//! written to the file given by `--out`. Symbols are labelled `x1..x|X|` in
//! summaries and indexed from 0 in JSON.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use lift_watchdog::distribution::{format_real, DistributionError};
use lift_watchdog::experiment::{self, ExperimentError};
use lift_watchdog::mechanism::ChannelExport;
use lift_watchdog::partition::GreedyTraceExport;
use lift_watchdog::{
    brute_force_optimal, build_channel, compute_lift_profile, greedy_refine_with,
    mutual_information, nmil, FixupRange, GreedyOptions, HighRiskPartition, JointDistribution,
    JointSampler, OracleOutcome, PartitionError, RiskSplit, SanitizationChannel, SweepConfig,
};
use serde::Serialize;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Caps sweep parallelism; `0` or unset uses every core.
pub const THREADS_ENV: &str = "LIFT_WATCHDOG_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "lift-watchdog",
    version,
    about = "Lift-based watchdog privacy mechanism with subset merging"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Print per-symbol leakage, the risk split and complete-merging metrics.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        /// Privacy budget in nats (`inf` allowed).
        #[arg(long, value_parser = parse_epsilon)]
        epsilon: f64,
    },
    /// Build a sanitization channel and write it as JSON.
    Sanitize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_epsilon)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Greedy)]
        method: MethodArg,
        /// Include the greedy merge log in the output.
        #[arg(long)]
        trace: bool,
        /// Do not let the fix-up phase merge into the first block.
        #[arg(long)]
        fixup_exclude_first: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo comparison of greedy and complete merging.
    Sweep {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 13)]
        secrets: usize,
        #[arg(long, default_value_t = 20)]
        symbols: usize,
        /// Comma-separated, strictly increasing.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.25,0.5,0.75,1,1.25,1.5,1.75,2,2.25,2.5"
        )]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Law used to draw each trial's joint distribution.
        #[arg(long, value_enum, default_value_t = GeneratorArg::Dirichlet)]
        generator: GeneratorArg,
        /// CSV output.
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON output mirroring the CSV.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compare the greedy partition against exhaustive search.
    Oracle {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_epsilon)]
        epsilon: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Greedy,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorArg {
    /// Uniform on the joint simplex.
    Dirichlet,
    /// Independent Uniform(0,1) cells, normalized.
    UniformEntries,
}

impl From<GeneratorArg> for JointSampler {
    fn from(g: GeneratorArg) -> Self {
        match g {
            GeneratorArg::Dirichlet => JointSampler::FlatDirichlet,
            GeneratorArg::UniformEntries => JointSampler::UniformEntries,
        }
    }
}

fn parse_epsilon(text: &str) -> Result<f64, String> {
    let value: f64 = text
        .trim()
        .parse()
        .map_err(|_| format!("{text:?} is not a number"))?;
    if value.is_nan() || value < 0.0 {
        return Err(format!("epsilon must be >= 0, got {text}"));
    }
    Ok(value)
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<DistributionError> for CliError {
    fn from(e: DistributionError) -> Self {
        match e {
            DistributionError::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = out.write_all(rendered.as_bytes());
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        EXIT_INVALID
                    } else {
                        EXIT_OK
                    }
                }
                _ => {
                    let _ = err.write_all(rendered.as_bytes());
                    EXIT_INVALID
                }
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(
    command: CliCommand,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    match command {
        CliCommand::Analyze { input, epsilon } => analyze(&input, epsilon, out),
        CliCommand::Sanitize {
            input,
            epsilon,
            method,
            trace,
            fixup_exclude_first,
            out: path,
        } => {
            let fixup_range = if fixup_exclude_first {
                FixupRange::ExcludeFirst
            } else {
                FixupRange::AllBlocks
            };
            sanitize(&input, epsilon, method, trace, fixup_range, &path, out, err)
        }
        CliCommand::Sweep {
            trials,
            secrets,
            symbols,
            epsilons,
            seed,
            generator,
            out: path,
            json,
        } => {
            let cfg = SweepConfig::new(trials, secrets, symbols, epsilons, seed)?
                .with_sampler(generator.into());
            sweep(&cfg, &path, json.as_deref(), out)
        }
        CliCommand::Oracle { input, epsilon } => oracle(&input, epsilon, out),
    }
}

fn label(x: usize) -> String {
    format!("x{}", x + 1)
}

fn label_set(symbols: &[usize]) -> String {
    let inner: Vec<String> = symbols.iter().map(|&x| label(x)).collect();
    format!("{{{}}}", inner.join(", "))
}

fn label_blocks(blocks: &[Vec<usize>]) -> String {
    let inner: Vec<String> = blocks.iter().map(|b| label_set(b)).collect();
    format!("[{}]", inner.join(", "))
}

fn load(path: &Path, epsilon: f64) -> Result<(JointDistribution, RiskSplit), CliError> {
    let j = JointDistribution::load(path)?;
    let split = RiskSplit::new(&compute_lift_profile(&j), epsilon)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok((j, split))
}

fn nmil_text(j: &JointDistribution, part: &HighRiskPartition) -> String {
    match nmil(j, part) {
        Ok(v) => format_real(v),
        Err(_) => "undefined (H(X) = 0)".to_owned(),
    }
}

fn opt_text(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_else(|| "none".to_owned())
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn analyze(input: &Path, epsilon: f64, out: &mut dyn Write) -> Result<i32, CliError> {
    let (j, split) = load(input, epsilon)?;
    let profile = compute_lift_profile(&j);
    let mut s = String::new();
    s.push_str(&format!(
        "distribution: |S| = {}, |X| = {}, H(X) = {} nats\n",
        j.num_secrets(),
        j.num_symbols(),
        format_real(j.entropy_x())
    ));
    s.push_str(&format!("epsilon: {}\n\n", format_real(epsilon)));
    s.push_str(&format!(
        "{:<8} {:<20} {:<20} {}\n",
        "symbol", "p(x)", "omega(x)", "risk"
    ));
    for x in 0..j.num_symbols() {
        s.push_str(&format!(
            "{:<8} {:<20} {:<20} {}\n",
            label(x),
            format_real(j.px()[x]),
            format_real(profile.omega()[x]),
            if split.is_high_risk(x) { "high" } else { "low" }
        ));
    }
    s.push_str(&format!(
        "\nlow-risk set:  {}\n",
        label_set(split.low_risk())
    ));
    s.push_str(&format!(
        "high-risk set: {}\n",
        label_set(split.high_risk())
    ));
    if split.high_risk().is_empty() {
        s.push_str("no high-risk symbols: the identity channel already meets epsilon\n");
    }

    let complete = HighRiskPartition::complete_merging(&split);
    let channel = build_channel(&j, &complete).map_err(|e| CliError::Invalid(e.to_string()))?;
    let merged = channel.merged_leakage();
    s.push_str("\ncomplete merging:\n");
    s.push_str(&format!("  merged leakage:  {}\n", opt_text(merged)));
    s.push_str(&format!(
        "  overall leakage: {}\n",
        format_real(channel.post_leakage())
    ));
    s.push_str(&format!(
        "  I(X;Y):          {}\n",
        format_real(mutual_information(&j, &complete))
    ));
    s.push_str(&format!(
        "  NMIL:            {}\n",
        nmil_text(&j, &complete)
    ));
    s.push_str(&format!(
        "  feasible:        {}\n",
        merged.is_none_or(|w| w <= epsilon)
    ));
    write_out(out, &s)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct Metrics {
    #[serde(with = "lift_watchdog::ext_real")]
    entropy_x: f64,
    #[serde(with = "lift_watchdog::ext_real")]
    mutual_information: f64,
    #[serde(with = "lift_watchdog::ext_real::option")]
    nmil: Option<f64>,
    #[serde(with = "lift_watchdog::ext_real")]
    post_leakage: f64,
    #[serde(with = "lift_watchdog::ext_real::option")]
    merged_leakage: Option<f64>,
    feasible: bool,
}

#[derive(Serialize)]
struct SanitizeOutput {
    #[serde(with = "lift_watchdog::ext_real")]
    epsilon: f64,
    method: MethodArg,
    low_risk: Vec<usize>,
    high_risk: Vec<usize>,
    blocks: Vec<Vec<usize>>,
    #[serde(flatten)]
    channel: ChannelExport,
    metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<GreedyTraceExport>,
}

fn metrics(
    j: &JointDistribution,
    part: &HighRiskPartition,
    channel: &SanitizationChannel,
) -> Metrics {
    let merged_leakage = channel.merged_leakage();
    Metrics {
        entropy_x: j.entropy_x(),
        mutual_information: mutual_information(j, part),
        nmil: nmil(j, part).ok(),
        post_leakage: channel.post_leakage(),
        merged_leakage,
        feasible: merged_leakage.is_none_or(|w| w <= part.split().epsilon()),
    }
}

#[allow(clippy::too_many_arguments)]
fn sanitize(
    input: &Path,
    epsilon: f64,
    method: MethodArg,
    with_trace: bool,
    fixup_range: FixupRange,
    path: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let (j, split) = load(input, epsilon)?;
    let (part, trace) = match method {
        MethodArg::Greedy => {
            let trace = greedy_refine_with(&j, &split, GreedyOptions { fixup_range });
            (trace.partition.clone(), Some(trace))
        }
        MethodArg::Complete => (HighRiskPartition::complete_merging(&split), None),
    };
    let channel = build_channel(&j, &part).map_err(|e| CliError::Invalid(e.to_string()))?;
    let m = metrics(&j, &part, &channel);
    let feasible = m.feasible;

    let mut s = String::new();
    s.push_str(&format!(
        "method: {}\n",
        match method {
            MethodArg::Greedy => "greedy",
            MethodArg::Complete => "complete",
        }
    ));
    s.push_str(&format!("epsilon: {}\n", format_real(epsilon)));
    s.push_str(&format!("blocks: {}\n", label_blocks(part.blocks())));
    s.push_str(&format!("output symbols: {}\n", channel.num_outputs()));
    s.push_str(&format!("merged leakage: {}\n", opt_text(m.merged_leakage)));
    s.push_str(&format!(
        "overall leakage: {}\n",
        format_real(m.post_leakage)
    ));
    s.push_str(&format!("I(X;Y): {}\n", format_real(m.mutual_information)));
    s.push_str(&format!("NMIL: {}\n", nmil_text(&j, &part)));
    s.push_str(&format!("feasible: {feasible}\n"));
    if with_trace {
        if let Some(t) = &trace {
            s.push_str(&format!("merge steps: {}\n", t.merge_log.len()));
        }
    }

    let doc = SanitizeOutput {
        epsilon,
        method,
        low_risk: split.low_risk().to_vec(),
        high_risk: split.high_risk().to_vec(),
        blocks: part.blocks().to_vec(),
        channel: channel.export(),
        metrics: m,
        trace: trace.filter(|_| with_trace).map(|t| t.export()),
    };
    let text = serde_json::to_string_pretty(&doc).expect("channel serializes") + "\n";
    fs::write(path, text).map_err(|e| io_err(path, e))?;
    write_out(out, &s)?;

    if !feasible {
        let _ = writeln!(
            err,
            "warning: the privacy constraint cannot be met even by merging every high-risk symbol; channel written anyway"
        );
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(EXIT_OK)
}

/// Number of sweep worker threads requested through [`THREADS_ENV`].
pub fn sweep_threads() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v.trim().parse().map_err(|_| {
            CliError::Invalid(format!(
                "{THREADS_ENV} must be a non-negative integer, got {v:?}"
            ))
        }),
    }
}

fn sweep(
    cfg: &SweepConfig,
    path: &Path,
    json: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let threads = sweep_threads()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let result = pool.install(|| experiment::run_sweep(cfg))?;
    experiment::emit_csv(&result, path)?;
    if let Some(json) = json {
        experiment::emit_json(&result, json)?;
    }

    let mut s = String::new();
    s.push_str(&format!(
        "trials = {}, |S| = {}, |X| = {}, seed = {}\ngenerator: {}\n",
        cfg.num_trials(),
        cfg.num_secrets(),
        cfg.num_symbols(),
        cfg.seed(),
        cfg.sampler().describe()
    ));
    s.push_str(&format!(
        "{:<10} {:<9} {:<16} {:<16} {:<16} {}\n",
        "epsilon", "method", "mean NMIL", "mean hr leak", "mean overall", "infeasible"
    ));
    for r in &result.per_epsilon {
        s.push_str(&format!(
            "{:<10} {:<9} {:<16} {:<16} {:<16} {}\n",
            r.epsilon,
            r.method.to_string(),
            format!("{:.6}", r.mean_nmil),
            r.mean_hr_leakage
                .map_or("-".to_owned(), |v| format!("{v:.6}")),
            format!("{:.6}", r.mean_overall_leakage),
            r.infeasible_count
        ));
    }
    write_out(out, &s)?;
    Ok(EXIT_OK)
}

fn oracle(input: &Path, epsilon: f64, out: &mut dyn Write) -> Result<i32, CliError> {
    let (j, split) = load(input, epsilon)?;
    let outcome = brute_force_optimal(&j, &split).map_err(|e| match e {
        PartitionError::TooLarge { size } => CliError::Invalid(format!(
            "high-risk set too large for oracle ({size} symbols, limit {})",
            lift_watchdog::partition::ORACLE_MAX_SYMBOLS
        )),
        other => CliError::Invalid(other.to_string()),
    })?;
    let trace = greedy_refine_with(&j, &split, GreedyOptions::default());
    let greedy_utility = mutual_information(&j, &trace.partition);

    let mut s = String::new();
    s.push_str(&format!("epsilon: {}\n", format_real(epsilon)));
    s.push_str(&format!(
        "high-risk set: {}\n",
        label_set(split.high_risk())
    ));
    s.push_str(&format!(
        "greedy:      {}  I(X;Y) = {}  feasible = {}\n",
        label_blocks(trace.partition.blocks()),
        format_real(greedy_utility),
        trace.feasible
    ));
    let code = match &outcome {
        OracleOutcome::Optimal { partition, utility } => {
            s.push_str(&format!(
                "brute force: {}  I(X;Y) = {}\n",
                label_blocks(partition.blocks()),
                format_real(*utility)
            ));
            s.push_str(&format!(
                "optimality gap: {}\n",
                format_real(utility - greedy_utility)
            ));
            EXIT_OK
        }
        OracleOutcome::Infeasible => {
            s.push_str("brute force: infeasible, no partition keeps every block within epsilon\n");
            EXIT_INFEASIBLE
        }
    };
    write_out(out, &s)?;
    Ok(code)
}
