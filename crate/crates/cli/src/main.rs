use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use hexcpg::checks::{self, Suite};
use hexcpg::config::{ConfigError, Overrides, RunConfig};
use hexcpg::controller::StackVariant;
use hexcpg::rng::{streams, RngStream};
use hexcpg::sim::{extract_gait_diagram, rollout, summarize, FaultSpec, Summary};
use hexcpg::skill::sample_skills;
use hexcpg::sweep::{run_sweep, write_sweep_csv, SweepError, SweepParam, SweepSpec};
use hexcpg::Leg;

#[derive(Parser)]
#[command(name = "hexcpg", version, about = "Hierarchical CPG hexapod simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one rollout and write trajectory, gait diagram and summary.
    Simulate(RunArgs),
    /// Run invariant suites and print a JSON report.
    Check(CheckArgs),
    /// One rollout per parameter value, summarised in sweep.csv.
    Sweep(SweepArgs),
    /// Draw skills uniformly from the unit disc as CSV.
    SampleSkills(SampleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON scenario file. Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<StackVariant>,
    /// Freeze a leg, e.g. `LM:0.0`. Repeatable.
    #[arg(long = "fault", value_name = "LEG:VALUE", value_parser = parse_fault)]
    faults: Vec<FaultSpec>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Oscillator,
    Kinematics,
    Sampler,
    Rewards,
    All,
}

#[derive(Args)]
struct CheckArgs {
    suite: SuiteArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Dotted config path (e.g. `morph.w_y`), `skill.angle` or `skill.norm`.
    #[arg(long)]
    param: String,
    #[arg(long, requires_all = ["to", "count"], conflicts_with = "values", allow_negative_numbers = true)]
    from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    to: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    /// Explicit comma-separated values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    /// Worker threads. Defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Skill norm held fixed while sweeping `skill.angle`.
    #[arg(long, default_value_t = 1.0)]
    skill_norm: f64,
    /// Skill angle (rad) held fixed while sweeping `skill.norm`.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    skill_angle: f64,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file. Standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<StackVariant, String> {
    s.parse::<StackVariant>().map_err(|e| e.to_string())
}

fn parse_fault(s: &str) -> Result<FaultSpec, String> {
    let (leg, value) = s.split_once(':').ok_or("expected LEG:VALUE")?;
    let leg: Leg = leg.parse().map_err(|e| format!("{e}"))?;
    let value: f64 = value.trim().parse().map_err(|e| format!("bad joint value: {e}"))?;
    if !value.is_finite() {
        return Err("joint value must be finite".into());
    }
    Ok(FaultSpec::new(leg, value))
}

/// Exit code 2 for configuration problems, 1 for everything else.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self {
            code: 2,
            error: anyhow::Error::new(e).context("invalid configuration"),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        let code = match e {
            SweepError::EmptyRange | SweepError::NonFinite(_) | SweepError::Config(_) => 2,
            _ => 1,
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HEXCPG_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Check(a) => check(&a),
        Command::Sweep(a) => sweep(&a),
        Command::SampleSkills(a) => sample(&a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        seed: args.seed,
        duration: args.duration,
        variant: args.variant,
        faults: args.faults.clone(),
        out_dir: args.out_dir.clone(),
    });
    Ok(config)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_summary(path: &Path, value: &Summary) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn simulate(args: &RunArgs) -> Result<ExitCode, Failure> {
    let config = load_config(args)?;
    let run = config.resolve()?;
    let dir = &run.output.dir;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;

    info!("simulating {} s with seed {}", run.duration, run.seed);
    let log = rollout(&run.sim, &run.high, &run.mid, run.duration, run.seed).context("rollout failed")?;
    if run.output.csv {
        log.write_csv(create(&dir.join("trajectory.csv"))?).context("trajectory.csv")?;
    }
    if run.output.json {
        log.write_json(create(&dir.join("trajectory.json"))?).context("trajectory.json")?;
    }
    let gait = extract_gait_diagram(&log).context("gait diagram")?;
    gait.write_csv(create(&dir.join("gait.csv"))?).context("gait.csv")?;
    let summary = summarize(&log).context("summary")?;
    write_summary(&dir.join("summary.json"), &summary)?;
    info!("wrote {} rows to {}", log.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

fn check(args: &CheckArgs) -> Result<ExitCode, Failure> {
    let suites: Vec<Suite> = match args.suite {
        SuiteArg::Oscillator => vec![Suite::Oscillator],
        SuiteArg::Kinematics => vec![Suite::Kinematics],
        SuiteArg::Sampler => vec![Suite::Sampler],
        SuiteArg::Rewards => vec![Suite::Rewards],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let report = checks::run(&suites, args.seed);
    let text = serde_json::to_string_pretty(&report).context("report")?;
    let mut out = io::stdout().lock();
    ignore_closed_pipe(writeln!(out, "{text}").and_then(|_| out.flush()))?;
    if let Some(path) = &args.out {
        fs::write(path, format!("{text}\n")).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn sweep(args: &SweepArgs) -> Result<ExitCode, Failure> {
    let param: SweepParam = args
        .param
        .parse()
        .map_err(|e: String| ConfigError::new("--param", e))?;
    let mut spec = match (&args.values, args.from, args.to, args.count) {
        (Some(values), ..) => SweepSpec::new(param, values.clone())?,
        (None, Some(from), Some(to), Some(count)) => SweepSpec::linspace(param, from, to, count)?,
        _ => return Err(ConfigError::new("--values", "give --values or --from/--to/--count").into()),
    };
    spec.skill_norm = args.skill_norm;
    spec.skill_angle = args.skill_angle;

    let config = load_config(&args.run)?;
    let dir = config.output.dir.clone();
    let points_dir = dir.join("points");
    fs::create_dir_all(&points_dir).with_context(|| format!("cannot create {}", points_dir.display()))?;

    info!("sweeping {} over {} values", spec.param, spec.values.len());
    let points = run_sweep(&config, &spec, args.jobs, Some(&points_dir))?;
    write_sweep_csv(&spec.param, &points, create(&dir.join("sweep.csv"))?).context("sweep.csv")?;
    info!("wrote {} points to {}", points.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

fn sample(args: &SampleArgs) -> Result<ExitCode, Failure> {
    let mut rng = RngStream::with_stream(args.seed, streams::SKILLS);
    let skills = sample_skills(&mut rng, args.count);
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = BufWriter::new(sink);
    let written = (|| {
        writeln!(w, "z_x,z_y")?;
        for z in &skills {
            writeln!(w, "{},{}", z.x, z.y)?;
        }
        w.flush()
    })();
    ignore_closed_pipe(written)?;
    Ok(ExitCode::SUCCESS)
}

/// A reader that stops early (e.g. `head`) is not an error.
fn ignore_closed_pipe(result: io::Result<()>) -> anyhow::Result<()> {
    match result {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other.context("write failed"),
    }
}
