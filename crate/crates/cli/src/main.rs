use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use tveff::pipeline::{
    run_all, run_describe, run_efficiency, run_simulate, run_var, InputFile, PipelineConfig, ReportFormat,
};
use tveff::synth::DgpSpec;
use tveff::tv_var::{LambdaMode, Solver};
use tveff::unit_root::DetrendModel;
use tveff::{Error, ErrorClass};

/// Time-varying joint market efficiency from daily price files.
#[derive(Parser)]
#[command(name = "tveff", version)]
struct Cli {
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Descriptive statistics and ADF-GLS unit-root tests per asset.
    Describe(PipelineArgs),
    /// Constant VAR with BIC order, robust SEs, Granger and Lc tests.
    Var(PipelineArgs),
    /// TV-VAR fit, efficiency path, bootstrap bands and plot.
    Efficiency(PipelineArgs),
    /// describe, var and efficiency in sequence.
    All(PipelineArgs),
    /// Simulate a panel with known coefficient paths.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Banded,
    Dense,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Constant,
    Trend,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
    Json,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML configuration file. Flags below override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Price file for one asset as LABEL=PATH; repeat per asset. Replaces
    /// the inputs of the config file.
    #[arg(short, long = "input", value_parser = parse_input)]
    inputs: Vec<InputFile>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// First price date kept (YYYY-MM-DD).
    #[arg(long, value_parser = parse_date)]
    start: Option<NaiveDate>,
    /// Last price date kept (YYYY-MM-DD).
    #[arg(long, value_parser = parse_date)]
    end: Option<NaiveDate>,
    /// Report formats; repeatable.
    #[arg(long = "format", value_enum)]
    formats: Vec<FormatArg>,
    /// ADF-GLS maximum lag (default: Schwert's rule).
    #[arg(long)]
    max_lag: Option<usize>,
    #[arg(long, value_enum)]
    detrend: Option<ModelArg>,
    /// Continue even if a series fails the 1% unit-root gate.
    #[arg(long)]
    allow_unit_root: bool,
    /// Largest VAR order considered by BIC.
    #[arg(long)]
    p_max: Option<usize>,
    /// TV-VAR lag order.
    #[arg(long)]
    q: Option<usize>,
    /// Smoothing ratio σ_ε²/σ_v².
    #[arg(long)]
    lambda: Option<f64>,
    /// Re-estimate λ from a first-pass fit.
    #[arg(long)]
    two_pass: bool,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Bootstrap replications; 0 skips the bands.
    #[arg(short = 'B', long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    coverage: Option<f64>,
    /// Worker threads for the bootstrap (results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
    /// Date marked with a vertical line on the plot.
    #[arg(long, value_parser = parse_date)]
    event_date: Option<NaiveDate>,
    #[arg(long)]
    event_label: Option<String>,
    /// Write every bootstrap replicate path to replicates.csv.
    #[arg(long)]
    dump_replicates: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML file describing the data-generating process.
    spec: PathBuf,
    #[arg(short, long, default_value = "simulated")]
    output_dir: PathBuf,
    /// Also write one price file per asset, usable as --input.
    #[arg(long)]
    price_files: bool,
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    s.parse::<NaiveDate>().map_err(|e| format!("`{s}`: {e}"))
}

fn parse_input(s: &str) -> Result<InputFile, String> {
    let (asset, path) = s.split_once('=').ok_or_else(|| format!("expected LABEL=PATH, got `{s}`"))?;
    if asset.is_empty() || path.is_empty() {
        return Err(format!("expected LABEL=PATH, got `{s}`"));
    }
    Ok(InputFile {
        asset: asset.to_string(),
        path: PathBuf::from(path),
    })
}

fn build_config(a: &PipelineArgs) -> Result<PipelineConfig, Error> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if !a.inputs.is_empty() {
        // Command-line paths are relative to the working directory.
        cfg.inputs = a
            .inputs
            .iter()
            .map(|i| InputFile {
                asset: i.asset.clone(),
                path: absolute(&i.path),
            })
            .collect();
    }
    if let Some(d) = &a.output_dir {
        cfg.output_dir = d.clone();
    } else if a.config.is_some() && cfg.output_dir.is_relative() {
        cfg.output_dir = cfg.base_dir.join(&cfg.output_dir);
    }
    if a.start.is_some() {
        cfg.start_date = a.start;
    }
    if a.end.is_some() {
        cfg.end_date = a.end;
    }
    if !a.formats.is_empty() {
        cfg.report_formats = a
            .formats
            .iter()
            .map(|f| match f {
                FormatArg::Text => ReportFormat::Text,
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Json => ReportFormat::Json,
            })
            .collect();
    }
    if a.max_lag.is_some() {
        cfg.unit_root.max_lag = a.max_lag;
    }
    if let Some(m) = a.detrend {
        cfg.unit_root.model = match m {
            ModelArg::Constant => DetrendModel::Constant,
            ModelArg::Trend => DetrendModel::ConstantTrend,
        };
    }
    if a.allow_unit_root {
        cfg.unit_root.enforce_gate = false;
    }
    if let Some(p) = a.p_max {
        cfg.var.p_max = p;
    }
    if let Some(q) = a.q {
        cfg.tv_var.q = q;
    }
    if let Some(l) = a.lambda {
        cfg.tv_var.lambda = l;
    }
    if a.two_pass {
        cfg.tv_var.lambda_mode = LambdaMode::TwoPass;
    }
    if let Some(s) = a.solver {
        cfg.tv_var.solver = match s {
            SolverArg::Banded => Solver::BandedCholesky,
            SolverArg::Dense => Solver::DenseReference,
        };
    }
    if let Some(b) = a.replications {
        cfg.bootstrap.replications = b;
    }
    if let Some(s) = a.seed {
        cfg.bootstrap.master_seed = s;
    }
    if let Some(c) = a.coverage {
        cfg.bootstrap.coverage = c;
    }
    if let Some(w) = a.workers {
        cfg.bootstrap.workers = w;
    }
    if a.event_date.is_some() {
        cfg.efficiency.event_date = a.event_date;
    }
    if a.event_label.is_some() {
        cfg.efficiency.event_label = a.event_label.clone();
    }
    if a.dump_replicates {
        cfg.efficiency.dump_replicates = true;
    }
    Ok(cfg)
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    }
}

fn list_files(files: &[PathBuf]) {
    for f in files {
        eprintln!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Describe(a) => {
            let out = run_describe(&build_config(&a)?)?;
            print!("{}", out.table.to_text());
            list_files(&out.files);
        }
        Command::Var(a) => {
            let out = run_var(&build_config(&a)?)?;
            print!("{}", out.table.to_text());
            list_files(&out.files);
        }
        Command::Efficiency(a) => {
            let out = run_efficiency(&build_config(&a)?)?;
            print_efficiency(&out);
        }
        Command::All(a) => {
            let out = run_all(&build_config(&a)?)?;
            print!("{}\n{}", out.describe.table.to_text(), out.var.table.to_text());
            print_efficiency(&out.efficiency);
        }
        Command::Simulate(a) => {
            let text = fs::read_to_string(&a.spec)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", a.spec.display())))?;
            let spec = DgpSpec::from_toml(&text)?;
            let out = run_simulate(&spec, &a.output_dir, a.price_files)?;
            list_files(&out.files);
        }
    }
    Ok(())
}

fn print_efficiency(out: &tveff::pipeline::EfficiencyOutcome) {
    let defined: Vec<f64> = out.path.zeta.iter().flatten().copied().collect();
    let mean = defined.iter().sum::<f64>() / defined.len().max(1) as f64;
    println!(
        "efficiency path: {} dates, mean zeta {:.4}, {} singular, lambda {}",
        out.path.dates.len(),
        mean,
        out.path.zeta.len() - defined.len(),
        out.lambda_used
    );
    if let Some(b) = &out.bands {
        println!(
            "bands: {:.0}% pointwise, {} replications ({} failed)",
            b.coverage * 100.0,
            b.replications,
            b.failed_replications
        );
    }
    list_files(&out.files);
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Io => 1,
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
