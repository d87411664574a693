//! Command-line entry points.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semmap_core::artifacts::{read_detections_file, run_checksum, write_run};
use semmap_core::config::validate_config;
use semmap_core::eval::render_tables;
use semmap_core::pipeline::{run, simulate};
use semmap_core::sim::{DirImageStore, ImageStore};
use semmap_core::{Error, RunConfig};

use crate::check::run_checks;
use crate::server::{self, AppState, Clock};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 1;
    pub const RUNTIME: u8 = 2;
    pub const CHECK: u8 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "semmap", version, about = "Multi-robot object search missions: simulate, filter, report, review, score")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a mission end to end and write its artifacts.
    Run(RunArgs),
    /// Check configuration files and list every violated constraint.
    Validate {
        #[arg(required = true)]
        configs: Vec<String>,
    },
    /// Print the effective configuration of a scenario as TOML.
    Config { scenario: String },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Built-in scenario name (`prelim`, `final`) or path to a TOML file.
    #[arg(short, long, default_value = "prelim")]
    pub scenario: String,
    /// World seed; defaults to the scenario's own.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Artifact directory. Defaults to `<root>/<scenario>-seed<seed>`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Root for default artifact directories.
    #[arg(long, env = "SEMMAP_OUT", default_value = "runs")]
    pub out_root: PathBuf,
    /// Recorded detections (JSON lines) to use instead of the synthetic detector.
    #[arg(long, value_name = "DETECTIONS_JSONL")]
    pub replay: Option<PathBuf>,
    /// Directory of recorded frames named `<image_ref>.png`.
    #[arg(long, value_name = "DIR")]
    pub frames: Option<PathBuf>,
    /// Also write the frames referenced by delivered reports as PNG.
    #[arg(long)]
    pub images: bool,
    /// Evaluate the run's self checks; exit 3 if any fails.
    #[arg(long, conflicts_with = "serve")]
    pub check: bool,
    /// Serve the review API instead of running the simulated operator.
    #[arg(long)]
    pub serve: bool,
    /// Port to serve on; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Address to bind when serving.
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    /// Mission seconds per wall-clock second for feeding reports while
    /// serving. Without it every report is in before the server starts.
    #[arg(long, value_name = "RATE")]
    pub pace: Option<f64>,
}

/// A failure and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: Error,
}

impl Failure {
    fn config(error: Error) -> Self {
        Failure { code: exit::CONFIG, error }
    }

    fn runtime(error: Error) -> Self {
        Failure { code: exit::RUNTIME, error }
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

pub fn execute(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Run(args) => run_command(&args),
        Command::Validate { configs } => Ok(validate_command(&configs)),
        Command::Config { scenario } => {
            let cfg = RunConfig::load(&scenario).map_err(Failure::config)?;
            print!("{}", cfg.to_toml());
            Ok(exit::OK)
        }
    }
}

fn validate_command(paths: &[String]) -> u8 {
    let mut code = exit::OK;
    for path in paths {
        match RunConfig::load(path) {
            Ok(cfg) => {
                let errors = validate_config(&cfg);
                if errors.is_empty() {
                    println!("{path}: ok");
                } else {
                    code = exit::CONFIG;
                    for e in errors {
                        println!("{path}: {e}");
                    }
                }
            }
            Err(e) => {
                code = exit::CONFIG;
                println!("{path}: {e}");
            }
        }
    }
    code
}

fn load_config(scenario: &str) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::load(scenario).map_err(Failure::config)?;
    cfg.validate().map_err(Failure::config)?;
    Ok(cfg)
}

pub fn default_out_dir(root: &Path, scenario: &str, seed: u64) -> PathBuf {
    root.join(format!("{scenario}-seed{seed}"))
}

fn run_command(args: &RunArgs) -> Result<u8, Failure> {
    let cfg = load_config(&args.scenario)?;
    let seed = args.seed.unwrap_or(cfg.scenario.seed);
    let out_dir = args.out.clone().unwrap_or_else(|| default_out_dir(&args.out_root, &cfg.scenario.name, seed));
    let replay = match &args.replay {
        Some(path) => Some(read_detections_file(path).map_err(|e| {
            Failure::runtime(match e {
                Error::Line { line, message } => Error::Parse(format!("{}:{line}: {message}", path.display())),
                other => other,
            })
        })?),
        None => None,
    };
    let frames = args.frames.clone().map(|root| DirImageStore { root });

    if args.serve {
        return serve(cfg, seed, replay, frames, args, out_dir);
    }

    let store = frames.as_ref().map(|f| f as &dyn ImageStore);
    let out = run(&cfg, seed, replay, store).map_err(Failure::runtime)?;
    let images: Option<&dyn ImageStore> = args.images.then(|| store.unwrap_or(&out.mission.scene));
    write_run(&out, &out_dir, images).map_err(Failure::runtime)?;
    let checksum = run_checksum(&out_dir).map_err(Failure::runtime)?;

    let tables = render_tables(std::slice::from_ref(&out.counts));
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{}\n{}", tables.images_text, tables.objects_text);
    let _ = writeln!(
        stdout,
        "reward {} of {} ({} submitted, {} reviewed in {:.1} s)",
        out.summary.reward, out.summary.n_truth, out.summary.submitted, out.summary.reviewed, out.summary.review_time_s
    );
    let _ = writeln!(stdout, "artifacts {}", out_dir.display());
    let _ = writeln!(stdout, "checksum {checksum}");

    if args.check {
        let checks = run_checks(&out);
        for c in &checks {
            let _ = writeln!(stdout, "{c}");
        }
        if checks.iter().any(|c| !c.passed) {
            return Ok(exit::CHECK);
        }
    }
    Ok(exit::OK)
}

fn serve(
    cfg: RunConfig,
    seed: u64,
    replay: Option<Vec<semmap_core::Detection>>,
    frames: Option<DirImageStore>,
    args: &RunArgs,
    out_dir: PathBuf,
) -> Result<u8, Failure> {
    if let Some(p) = args.pace {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Failure::config(Error::Parse(format!("--pace must be positive, got {p}"))));
        }
    }
    let mission = simulate(&cfg, seed, replay, frames.as_ref().map(|f| f as &dyn ImageStore)).map_err(Failure::runtime)?;
    let (base, clock) = match args.pace {
        Some(rate) => (semmap_core::base::BaseStation::new(&mission.config.pipeline), Clock::new(0.0, rate)),
        None => (mission.base_station(), Clock::new(mission.close_at(), 1.0)),
    };
    let state = AppState::new(mission, base, clock, frames, Some(out_dir));

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| Failure::runtime(e.into()))?;
    rt.block_on(async move {
        let addr = SocketAddr::new(args.bind, args.port);
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Failure::runtime(Error::Io(format!("bind {addr}: {e}"))))?;
        let local = listener.local_addr().map_err(|e| Failure::runtime(e.into()))?;
        println!("listening on http://{local}");
        println!("port {}", local.port());
        let _ = std::io::stdout().flush();
        if args.pace.is_some() {
            tokio::spawn(server::feed(state.clone()));
        }
        axum::serve(listener, server::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Failure::runtime(e.into()))?;
        Ok(exit::OK)
    })
}
