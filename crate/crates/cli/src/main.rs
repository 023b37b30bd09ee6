use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use activity_miner::event::{parse_time_field, write_interval};
use activity_miner::pipeline::{self, PipelineConfig, Workspace};
use activity_miner::synth::{generate, SynthSpec};
use activity_miner::Error;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "actminer", version, about = "Mine periodic activity patterns from interval event logs and predict the next activity")]
struct Cli {
    /// TOML config file; flags below override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Generic override, repeatable: `--set key=value`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(flatten)]
    keys: KeyFlags,

    #[command(subcommand)]
    command: Command,
}

/// One flag per config key, named as in the config file.
#[derive(Args, Debug, Default)]
struct KeyFlags {
    #[arg(long, global = true)]
    minsup: Option<String>,
    #[arg(long = "max_len", global = true)]
    max_len: Option<String>,
    #[arg(long, global = true)]
    minsig: Option<String>,
    #[arg(long, global = true)]
    minpro: Option<String>,
    #[arg(long, global = true)]
    w1: Option<String>,
    #[arg(long, global = true)]
    w2: Option<String>,
    #[arg(long, global = true)]
    resolution: Option<String>,
    #[arg(long, global = true)]
    k: Option<String>,
    #[arg(long = "max_iter", global = true)]
    max_iter: Option<String>,
    #[arg(long, global = true)]
    zeta: Option<String>,
    #[arg(long = "min_p", global = true)]
    min_p: Option<String>,
    #[arg(long, global = true)]
    segmentation: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long = "y_s", global = true)]
    y_s: Option<String>,
    #[arg(long = "y_t", global = true)]
    y_t: Option<String>,
    #[arg(long = "y_l", global = true)]
    y_l: Option<String>,
    #[arg(long, global = true)]
    window: Option<String>,
    #[arg(long = "wait_table", global = true)]
    wait_table: Option<String>,
    #[arg(long, global = true)]
    threads: Option<String>,
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long = "default_region", global = true)]
    default_region: Option<String>,
    /// `sensor=region,...`
    #[arg(long, global = true)]
    regions: Option<String>,
}

impl KeyFlags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("minsup", &self.minsup),
            ("max_len", &self.max_len),
            ("minsig", &self.minsig),
            ("minpro", &self.minpro),
            ("w1", &self.w1),
            ("w2", &self.w2),
            ("resolution", &self.resolution),
            ("k", &self.k),
            ("max_iter", &self.max_iter),
            ("zeta", &self.zeta),
            ("min_p", &self.min_p),
            ("segmentation", &self.segmentation),
            ("seed", &self.seed),
            ("y_s", &self.y_s),
            ("y_t", &self.y_t),
            ("y_l", &self.y_l),
            ("window", &self.window),
            ("wait_table", &self.wait_table),
            ("threads", &self.threads),
            ("format", &self.format),
            ("default_region", &self.default_region),
            ("regions", &self.regions),
        ]
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a log into the artifact directory.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine and quality-filter composition patterns.
    Mine {
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster patterns into probabilistic patterns.
    Cluster {
        #[arg(long)]
        out: PathBuf,
    },
    /// Attach representative intervals to the probabilistic patterns.
    Periodic {
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the transition matrix and the prediction model.
    Relations {
        #[arg(long)]
        out: PathBuf,
    },
    /// All stages from a log to the prediction model.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recognize an observation and predict the next activity.
    Predict {
        #[arg(long)]
        out: PathBuf,
        /// Interval-format file; an empty or `-` end marks an ongoing event.
        #[arg(long)]
        observation: PathBuf,
        /// Current time for ongoing events.
        #[arg(long)]
        now: Option<String>,
    },
    /// Measure saved effort and time on a held-out trace.
    Evaluate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Generate a synthetic trace from an activity spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        days: u32,
        /// Trace output in interval format.
        #[arg(long)]
        trace: PathBuf,
        /// Ground truth output (JSON).
        #[arg(long)]
        truth: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::Spec(_) | Error::MissingArtifact { .. } => 1,
        Error::Invariant(_) => 3,
        _ => 2,
    }
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for (key, value) in cli.keys.pairs() {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("expected KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(value).map_err(Error::from)?);
    Ok(())
}

fn workspace(dir: &Path) -> Result<Workspace, Failure> {
    Ok(Workspace::new(dir)?)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let cfg = resolve_config(cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Ingest { input, out } => print_json(&pipeline::ingest_stage(&workspace(out)?, input, &cfg)?),
        Command::Mine { out } => print_json(&pipeline::mine_stage(&workspace(out)?, &cfg)?),
        Command::Cluster { out } => print_json(&pipeline::cluster_stage(&workspace(out)?, &cfg)?),
        Command::Periodic { out } => print_json(&pipeline::periodic_stage(&workspace(out)?, &cfg)?),
        Command::Relations { out } => print_json(&pipeline::relations_stage(&workspace(out)?, &cfg)?),
        Command::Run { input, out } => print_json(&pipeline::run_pipeline(&workspace(out)?, input, &cfg)?),
        Command::Predict { out, observation, now } => {
            let model = pipeline::load_model(&workspace(out)?)?;
            let now = match now {
                Some(t) => Some(parse_time_field(t).ok_or_else(|| Failure::Usage(format!("bad --now `{t}`")))?),
                None => None,
            };
            let obs = pipeline::load_observation(&fs::read_to_string(observation)?, now)?;
            match pipeline::predict_observation(&model, &obs) {
                Some(p) => print_json(&p),
                None => {
                    eprintln!("model has no patterns");
                    print_json(&serde_json::Value::Null)
                }
            }
        }
        Command::Evaluate { out, trace } => {
            let model = pipeline::load_model(&workspace(out)?)?;
            print_json(&pipeline::evaluate_trace(&model, &fs::read_to_string(trace)?, &cfg)?)
        }
        Command::Simulate { spec, days, trace, truth } => {
            let spec = SynthSpec::from_toml(&fs::read_to_string(spec)?)?;
            let (db, gt) = generate(&spec.activities, *days, cfg.seed)?;
            let events: Vec<_> = db.events().cloned().collect();
            fs::write(trace, write_interval(&events))?;
            fs::write(truth, serde_json::to_string_pretty(&gt).map_err(Error::from)? + "\n")?;
            print_json(&serde_json::json!({
                "days": days,
                "sequences": db.len(),
                "events": events.len(),
                "activities": gt.len(),
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
