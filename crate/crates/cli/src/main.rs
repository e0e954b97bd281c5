mod remote;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use skynav::dataset::{dataset_stats, load_dataset, save_dataset, validate_dataset, BoundsContext, DatasetError};
use skynav::episode::{andh_full_task, andh_tasks, EpisodeError, TaskInstance};
use skynav::metrics::{evaluate_run, GpMode, MetricsError};
use skynav::protocol::{
    oracle_agent, random_agent, run_agent, stationary_agent, Agent, ProtocolError, Session, SessionConfig,
    SessionSetup,
};
use skynav::raster::{
    generate_synthetic_world, list_bundles, load_bundle, save_bundle, CameraModel, RasterEnvironment, RasterError,
    SyntheticWorldSpec,
};
use skynav::synth::{synthesize_dataset, SynthError, SynthesisParams};
use skynav_service::{ServiceConfig, ServiceError};
use thiserror::Error;

use crate::remote::RemoteAgent;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

#[derive(Parser)]
#[command(name = "skynav", version, about = "Aerial dialog-navigation simulator tools")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic environment bundle.
    GenEnv {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 2048)]
        size_px: u32,
        #[arg(long, default_value_t = 0.3)]
        mpp: f64,
        #[arg(long, default_value_t = 20)]
        objects: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a JSONL dataset against the schema (and bounds, with --env-dir).
    ValidateDataset {
        path: PathBuf,
        #[arg(long)]
        env_dir: Option<PathBuf>,
    },
    /// Print dataset statistics as JSON.
    Stats { path: PathBuf },
    /// Synthesize recorded-successful episodes on an environment.
    SampleEpisodes {
        #[arg(long)]
        env: String,
        #[arg(long, default_value = ".")]
        env_dir: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an agent over a dataset and write a metrics report.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = ".")]
        env_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = TaskArg::AndhFull)]
        task: TaskArg,
        #[arg(long, value_enum)]
        agent: AgentArg,
        /// Shell command for `--agent remote`.
        #[arg(long)]
        agent_cmd: Option<String>,
        #[arg(long, value_enum, default_value_t = GpArg::Literal)]
        gp_mode: GpArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        resolution: Option<u32>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the session service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Andh,
    AndhFull,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AgentArg {
    Oracle,
    Random,
    Stationary,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum GpArg {
    Literal,
    Delta,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Cmd::GenEnv {
            seed,
            size_px,
            mpp,
            objects,
            out,
        } => {
            let spec = SyntheticWorldSpec {
                seed,
                size_px,
                meters_per_pixel: mpp,
                object_count: objects,
            };
            let (env, objs) = generate_synthetic_world(&spec)?;
            save_bundle(&env, &objs, &out)?;
            println!("{}", env.env_id());
        }
        Cmd::ValidateDataset { path, env_dir } => {
            let envs = match &env_dir {
                Some(dir) => load_envs(dir)?,
                None => BTreeMap::new(),
            };
            let cam = CameraModel::default();
            let lookup = |id: &str| envs.get(id).map(|e| e.as_ref());
            let ctx = BoundsContext {
                camera: &cam,
                environments: &lookup,
            };
            let violations = validate_dataset(&path, env_dir.as_ref().map(|_| &ctx))?;
            for v in &violations {
                println!("{v}");
            }
            if !violations.is_empty() {
                eprintln!("{} violations", violations.len());
                return Ok(ExitCode::FAILURE);
            }
            println!("ok");
        }
        Cmd::Stats { path } => {
            let eps = load_dataset(&path)?;
            println!("{}", serde_json::to_string_pretty(&dataset_stats(&eps))?);
        }
        Cmd::SampleEpisodes {
            env,
            env_dir,
            n,
            seed,
            out,
        } => {
            let (raster, objects) = load_bundle(&env_dir, &env)?;
            let eps = synthesize_dataset(&raster, &CameraModel::default(), &objects, seed, n, &SynthesisParams::default())?;
            save_dataset(&eps, &out)?;
            println!("wrote {} episodes to {}", eps.len(), out.display());
        }
        Cmd::Eval {
            dataset,
            env_dir,
            task,
            agent,
            agent_cmd,
            gp_mode,
            seed,
            max_steps,
            resolution,
            report,
        } => {
            let mut cfg = SessionConfig::default();
            if let Some(m) = max_steps {
                cfg.max_steps = m;
            }
            if let Some(r) = resolution {
                cfg.resolution = r;
            }
            let gp_mode = match gp_mode {
                GpArg::Literal => GpMode::Literal,
                GpArg::Delta => GpMode::DeltaDistance,
            };
            let rep = eval(&dataset, &env_dir, task, agent, agent_cmd.as_deref(), gp_mode, seed, &cfg)?;
            let text = serde_json::to_string_pretty(&rep)?;
            match report {
                Some(p) => std::fs::write(p, text)?,
                None => println!("{text}"),
            }
            eprintln!("n = {}, SR = {:.4}, SPL = {:.4}, GP = {:.2}", rep.n, rep.sr, rep.spl, rep.gp);
        }
        Cmd::Serve { config } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let cfg = ServiceConfig::load(config.as_deref())?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(skynav_service::serve(cfg))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_envs(dir: &Path) -> Result<BTreeMap<String, Arc<RasterEnvironment>>, CliError> {
    let mut out = BTreeMap::new();
    for id in list_bundles(dir)? {
        let (env, _) = load_bundle(dir, &id)?;
        out.insert(id, Arc::new(env));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn eval(
    dataset: &Path,
    env_dir: &Path,
    task: TaskArg,
    agent: AgentArg,
    agent_cmd: Option<&str>,
    gp_mode: GpMode,
    seed: u64,
    cfg: &SessionConfig,
) -> Result<skynav::metrics::MetricsReport, CliError> {
    let episodes = load_dataset(dataset)?;
    let envs = load_envs(env_dir)?;
    let mut remote = match (agent, agent_cmd) {
        (AgentArg::Remote, Some(cmd)) => Some(RemoteAgent::spawn(cmd)?),
        (AgentArg::Remote, None) => return Err(CliError::Usage("--agent remote needs --agent-cmd".into())),
        _ => None,
    };

    let mut tasks: Vec<TaskInstance> = Vec::new();
    let mut predictions = Vec::new();
    for ep in &episodes {
        let env = envs
            .get(&ep.env_id)
            .ok_or_else(|| CliError::Usage(format!("environment {} not found in {}", ep.env_id, env_dir.display())))?;
        let ep_tasks = match task {
            TaskArg::Andh => andh_tasks(ep, &cfg.camera)?,
            TaskArg::AndhFull => vec![andh_full_task(ep)],
        };
        for t in ep_tasks {
            let mut session = Session::new(env.clone(), SessionSetup::evaluation(&t, ep, cfg.clone()))?;
            let i = tasks.len() as u64;
            let outcome = match agent {
                AgentArg::Oracle => run_agent(&mut session, &mut oracle_agent(env.clone(), &t.reference, cfg))?,
                AgentArg::Random => run_agent(&mut session, &mut random_agent(seed.wrapping_add(i), &cfg.camera))?,
                AgentArg::Stationary => run_agent(&mut session, &mut stationary_agent())?,
                AgentArg::Remote => {
                    let r = remote.as_mut().expect("spawned above");
                    let out = run_agent(&mut session, r as &mut dyn Agent)?;
                    r.finish_episode(&out.messages)?;
                    out
                }
            };
            predictions.push(outcome.states);
            tasks.push(t);
        }
    }
    if let Some(r) = remote {
        r.close()?;
    }
    Ok(evaluate_run(&tasks, &predictions, None, &cfg.camera, gp_mode)?)
}
