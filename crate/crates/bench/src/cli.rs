//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tcsc_core::datagen::{gen_tasks, gen_workers_with_pieces, GenSpec};

use crate::dataset::Dataset;
use crate::report::{aggregate, write_csv, write_json, CsvRow, SweepReport};
use crate::runner::{run_once, Mode, QualityArg, RunMetrics, RunSpec, SchedulerArg};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "tcsc", version, about = "Quality-aware task assignment benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one mode over one or more seeds.
    Run(RunArgs),
    /// Run one mode across a list of values for one parameter.
    Sweep(SweepArgs),
    /// Write a generated instance as a JSON dataset.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    M,
    Tasks,
    Budget,
    K,
    Ts,
    Cores,
    Dist,
}

#[derive(Debug, Clone, Args)]
pub struct InstanceArgs {
    /// Slots per task.
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u32).range(1..))]
    pub m: u32,
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u32).range(1..))]
    pub tasks: u32,
    #[arg(long, default_value_t = 2000)]
    pub workers: u32,
    /// Task location distribution: uniform, gaussian or zipfian.
    #[arg(long, default_value = "uniform")]
    pub dist: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
    pub budget: f64,
    /// Neighbors used for interpolation.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub k: u32,
    /// Leaf size threshold of the index.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    pub ts: u32,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub cores: u32,
    #[arg(long, value_enum, default_value_t = SchedulerArg::Simulated)]
    pub scheduler: SchedulerArg,
    #[arg(long, value_enum, default_value_t = QualityArg::Plain)]
    pub quality: QualityArg,
    /// Number of consecutive seeds, starting at --seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    /// Load the instance from a dataset instead of generating it.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

impl CommonArgs {
    fn spec(&self) -> RunSpec {
        RunSpec {
            mode: self.mode,
            m: self.instance.m as usize,
            tasks: self.instance.tasks as usize,
            workers: self.instance.workers as usize,
            budget: self.budget,
            k: self.k as usize,
            ts: self.ts as usize,
            cores: self.cores as usize,
            dist: self.instance.dist.clone(),
            scheduler: self.scheduler,
            quality: self.quality,
            data: self.data.clone(),
        }
    }

    fn seeds(&self) -> impl Iterator<Item = u64> {
        let first = self.instance.seed;
        (0..self.seeds).map(move |i| first.wrapping_add(i))
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Comma-separated values for the axis.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Side length of the square arena.
    #[arg(long, default_value_t = 1000.0)]
    pub arena: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_value<T: std::str::FromStr>(axis: Axis, v: &str) -> Result<T, CliError> {
    v.trim().parse().map_err(|_| CliError::Usage(format!("bad value '{v}' for axis {axis:?}")))
}

fn apply_axis(spec: &RunSpec, axis: Axis, v: &str) -> Result<RunSpec, CliError> {
    let mut s = spec.clone();
    let positive = |n: usize| {
        if n == 0 {
            Err(CliError::Usage(format!("axis {axis:?} needs positive values")))
        } else {
            Ok(n)
        }
    };
    match axis {
        Axis::M => s.m = positive(parse_value(axis, v)?)?,
        Axis::Tasks => s.tasks = positive(parse_value(axis, v)?)?,
        Axis::Budget => s.budget = parse_value(axis, v)?,
        Axis::K => s.k = positive(parse_value(axis, v)?)?,
        Axis::Ts => s.ts = positive(parse_value(axis, v)?)?,
        Axis::Cores => s.cores = positive(parse_value(axis, v)?)?,
        Axis::Dist => s.dist = v.trim().to_string(),
    }
    s.distribution()?;
    Ok(s)
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(path) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| CliError::Io(path.display().to_string(), e))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let c = &args.common;
    let spec = c.spec();
    spec.distribution()?;
    let runs: Vec<RunMetrics> = c.seeds().map(|seed| run_once(&spec, seed)).collect::<Result<_, _>>()?;
    let mut out = open_out(&c.out)?;
    match (c.format, runs.as_slice()) {
        (Format::Json, [single]) => write_json(&mut out, single),
        (Format::Json, _) => write_json(
            &mut out,
            &SweepReport {
                axis: "seed".into(),
                aggregates: vec![aggregate("", &runs)],
                runs: runs.into_iter().map(|r| (String::new(), r)).collect(),
            },
        ),
        (Format::Csv, [single]) => write_csv(&mut out, &[CsvRow::from_run("", single)]),
        (Format::Csv, _) => {
            let agg = aggregate("", &runs);
            let mut rows: Vec<CsvRow> = runs.iter().map(|r| CsvRow::from_run("", r)).collect();
            rows.push(agg.mean);
            rows.push(agg.stddev);
            write_csv(&mut out, &rows)
        }
    }
}

fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let c = &args.common;
    let base = c.spec();
    let mut report = SweepReport { axis: format!("{:?}", args.axis).to_lowercase(), runs: Vec::new(), aggregates: Vec::new() };
    for v in &args.values {
        let spec = apply_axis(&base, args.axis, v)?;
        let runs: Vec<RunMetrics> = c.seeds().map(|seed| run_once(&spec, seed)).collect::<Result<_, _>>()?;
        report.aggregates.push(aggregate(v.trim(), &runs));
        report.runs.extend(runs.into_iter().map(|r| (v.trim().to_string(), r)));
    }
    let mut out = open_out(&c.out)?;
    match c.format {
        Format::Json => write_json(&mut out, &report),
        Format::Csv => write_csv(&mut out, &report.rows()),
    }
}

fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let i = &args.instance;
    let distribution = i.dist.parse().map_err(|_| CliError::Usage(format!("unknown distribution '{}'", i.dist)))?;
    if !(args.arena > 0.0 && args.arena.is_finite()) {
        return Err(CliError::Usage("arena must be positive".into()));
    }
    let spec = GenSpec {
        n_tasks: i.tasks as usize,
        n_workers: i.workers as usize,
        m: i.m as usize,
        distribution,
        arena: args.arena,
        seed: i.seed,
    };
    Dataset::from_generated(spec.m, &gen_tasks(&spec), &gen_workers_with_pieces(&spec)).save(&args.out)
}

/// Parses `args` (including the program name) and runs the command. A
/// leading flag selects `run`, so `tcsc --mode mmqm` works.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if let Some(first) = args.get(1).and_then(|a| a.to_str()) {
        if first.starts_with("--") && !matches!(first, "--help" | "--version") {
            args.insert(1, "run".into());
        }
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Generate(a) => generate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tcsc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
