//! `mismatch`: analyze training-curve logs for pretext/target mismatch,
//! run the toy lab end to end, and emit plot data.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mismatch_core::io::{emit_plot_data, parse_logs, LogError};
use mismatch_core::lab::spec::{bundled, BUNDLED};
use mismatch_core::lab::{analysis_config, run_protocol, run_sweep, LabError, ProtocolRunSpec};
use mismatch_core::{
    analyze, AnalyzeConfig, AnalyzeError, BaselinePolicy, ConvergencePolicy, CurveError, MismatchReport, UnitCheck,
};

const EXIT_PARSE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_NUMERIC: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "mismatch", version, about = "Measure how well a pretext objective tracks a target task over training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute mismatch metrics from JSONL curve logs.
    Analyze(AnalyzeArgs),
    /// Run a lab spec (a file or a bundled name), then analyze its logs.
    Lab(LabArgs),
    /// Re-emit plot tables from an existing report.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, short, env = "MISMATCH_OUT_DIR", default_value = "mismatch-out")]
    out: PathBuf,
    /// Also write an SVG chart.
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    /// Epochs without improvement before the pretext run counts as converged.
    #[arg(long, default_value_t = 3)]
    patience: usize,
    /// Minimum decrease that counts as an improvement.
    #[arg(long, default_value_t = 0.0)]
    min_delta: f64,
    /// Map higher-is-better metrics to `base - v` instead of `-v`.
    #[arg(long)]
    complement_base: Option<f64>,
    /// Compute M3 even when pretext and target metrics differ.
    #[arg(long)]
    allow_incomparable_units: bool,
    /// Accept target curves that do not start at step 0.
    #[arg(long)]
    allow_missing_baseline: bool,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// One or more JSONL logs; records are merged.
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    pretext_metric: Option<String>,
    #[arg(long)]
    target_metric: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct LabArgs {
    /// Spec file path, or one of the bundled names.
    #[arg(required_unless_present = "list")]
    spec: Option<String>,
    /// List the bundled specs and exit.
    #[arg(long)]
    list: bool,
    /// Replace the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for training jobs; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// A report.json written by `analyze` or `lab`.
    report: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

/// Picks the exit code from the first recognised error in the chain.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<LogError>() || cause.is::<mismatch_core::io::report::ParseReportError>() {
            return EXIT_PARSE;
        }
        if let Some(lab) = cause.downcast_ref::<LabError>() {
            return match lab {
                LabError::Divergence { .. } => EXIT_NUMERIC,
                _ => EXIT_VALIDATION,
            };
        }
        if cause.is::<AnalyzeError>() || cause.is::<CurveError>() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_VALIDATION
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_outputs(report: &MismatchReport, run: &mismatch_core::PairedRun, output: &OutputArgs) -> Result<()> {
    fs::create_dir_all(&output.out).with_context(|| format!("cannot create {}", output.out.display()))?;
    let path = output.out.join("report.json");
    fs::write(&path, report.to_json()).with_context(|| format!("cannot write {}", path.display()))?;
    emit_plot_data(report, run, &output.out, output.svg)
        .with_context(|| format!("cannot write plot data to {}", output.out.display()))?;
    println!("report\t{}", path.display());
    Ok(())
}

fn print_scalars(report: &MismatchReport) {
    for (name, value) in report.scalars.entries() {
        match report.ranges.as_ref().and_then(|r| r.entries().into_iter().find(|(n, _)| *n == name)) {
            Some((_, range)) => println!("{name}\t{value}\t+{}\t-{}", range.plus, range.minus),
            None => println!("{name}\t{value}"),
        }
    }
    for note in &report.notes {
        eprintln!("note: {note}");
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let policy = ConvergencePolicy::new(args.policy.min_delta, args.policy.patience)?;
    let config = AnalyzeConfig {
        policy,
        complement_base: args.policy.complement_base,
        units: if args.policy.allow_incomparable_units {
            UnitCheck::Override
        } else {
            UnitCheck::Enforce
        },
        baseline: if args.policy.allow_missing_baseline {
            BaselinePolicy::AllowMissing
        } else {
            BaselinePolicy::RequireStepZero
        },
        run_id: args.run_id,
        pretext_metric: args.pretext_metric,
        target_metric: args.target_metric,
    };
    let names: Vec<String> = args.logs.iter().map(|p| p.display().to_string()).collect();
    let contents = args.logs.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
    let records = parse_logs(names.iter().map(String::as_str).zip(contents.iter().map(Vec::as_slice)))?;
    let analysis = analyze(&records, &config, names)?;
    write_outputs(&analysis.report, &analysis.run, &args.output)?;
    print_scalars(&analysis.report);
    Ok(())
}

fn load_spec(name: &str) -> Result<ProtocolRunSpec> {
    let path = Path::new(name);
    let text = if path.exists() {
        String::from_utf8(read(path)?).with_context(|| format!("{name} is not UTF-8"))?
    } else if let Some(text) = bundled(name) {
        text.to_owned()
    } else {
        bail!(LabError::Config(format!("no spec file or bundled spec named `{name}`")));
    };
    ProtocolRunSpec::from_toml(&text).with_context(|| format!("in spec {name}"))
}

fn cmd_lab(args: LabArgs) -> Result<()> {
    if args.list {
        for (name, _) in BUNDLED {
            println!("{name}");
        }
        return Ok(());
    }
    let mut spec = load_spec(args.spec.as_deref().expect("clap requires a spec"))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let out = &args.output.out;
    if spec.sweep.is_some() {
        run_sweep(&spec, out, workers)?;
        println!("table\t{}", out.join(mismatch_core::lab::protocol::SWEEP_TABLE).display());
        return Ok(());
    }
    let lab = run_protocol(&spec, out, workers)?;
    let config = analysis_config(&spec)?;
    let analysis = analyze(&lab.records(), &config, lab.manifest.logs.clone())?;
    println!("manifest\t{}", lab.manifest_path.display());
    write_outputs(&analysis.report, &analysis.run, &args.output)?;
    print_scalars(&analysis.report);
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let text = String::from_utf8(read(&args.report)?).context("report is not UTF-8")?;
    let report = MismatchReport::from_json(&text).with_context(|| format!("in {}", args.report.display()))?;
    let run = report.paired_run()?;
    let files = emit_plot_data(&report, &run, &args.output.out, args.output.svg)
        .with_context(|| format!("cannot write plot data to {}", args.output.out.display()))?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Lab(args) => cmd_lab(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
