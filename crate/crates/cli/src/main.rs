//! `fetchworld` command-line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fetchworld::harness::compare::{compare_runs, read_train_log, RunCurve};
use fetchworld::harness::svg::render_svg;
use fetchworld::harness::{baseline, evaluate, GreedyNet, PolicyKind};
use fetchworld::neural::checkpoint::{load_checkpoint, read_header};
use fetchworld::ppo::{train, TrainOptions};
use fetchworld::sensors::observe_visual;
use fetchworld::sensors::EmbodiedView;
use fetchworld::{Error, RunConfig};

const RESOLVED: &str = "resolved_config.json";

#[derive(Parser)]
#[command(name = "fetchworld", version, about = "Headless character-control RL sandbox")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration (defaults apply to missing keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `--set sim.arena_half_extent=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; every artifact is written inside it.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy; writes train_log.csv and ckpt_<step>.fw.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Simulation seed (beats the file and `--set`).
        #[arg(long)]
        seed: Option<u64>,
        /// Total decision steps over all environments.
        #[arg(long)]
        max_steps: Option<u64>,
        /// Also write per-step reward components to rewards_debug.csv.
        #[arg(long)]
        log_rewards: bool,
        /// Print one progress line per update to stderr.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Evaluate a checkpoint or a baseline policy; writes eval_report.json.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// checkpoint, random or heuristic.
        #[arg(long)]
        policy: Option<String>,
        /// Evaluation seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        max_episodes: Option<u64>,
        /// Include per-episode traces in the report.
        #[arg(long)]
        traces: bool,
    },
    /// Plot train logs as normalized curves; writes the SVG plus curves.csv beside it.
    Plot {
        /// train_log.csv files, one per run.
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// SVG path.
        #[arg(long, default_value = "curves.svg")]
        out: PathBuf,
    },
    /// Dump the visual observation after `step` heuristic decisions as binary PPM.
    RenderObs {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        step: u64,
    },
    /// Print a checkpoint's manifest.
    InspectCheckpoint {
        path: PathBuf,
    },
}

fn code_of(e: &Error) -> (&'static str, u8) {
    match e {
        Error::ConfigParse(_) | Error::InvalidConfig(_) | Error::InvalidRange { .. } => ("config_parse", 2),
        Error::ArchitectureMismatch(_) | Error::ShapeMismatch(_) => ("architecture_mismatch", 3),
        Error::Io { .. } | Error::Csv(_) | Error::CorruptCheckpoint(_) | Error::VersionMismatch { .. } => ("io", 4),
        _ => ("numeric", 5),
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.to_string()))
                .ok_or_else(|| Error::ConfigParse(format!("override `{s}` is not KEY=VALUE")))
        })
        .collect()
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => "{}".to_string(),
    };
    RunConfig::from_json_with_overrides(&text, &parse_overrides(&args.overrides)?)
}

fn prepare_out(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Error> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn threads_from_env() -> Result<Option<usize>, Error> {
    match std::env::var("FW_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::ConfigParse(format!("FW_THREADS=`{v}` is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train { cfg, seed, max_steps, log_rewards, verbose } => {
            let mut rc = load_config(&cfg)?;
            if let Some(s) = seed {
                rc.sim.seed = s;
            }
            if let Some(m) = max_steps {
                rc.ppo.max_steps = m;
            }
            let rc = rc.resolve()?;
            prepare_out(&cfg.out)?;
            write(&cfg.out.join(RESOLVED), rc.to_json())?;
            let opts = TrainOptions {
                out_dir: Some(cfg.out.clone()),
                log_rewards,
                threads: threads_from_env()?,
                verbose,
            };
            let result = train(&rc, &opts)?;
            if let Some(p) = result.final_checkpoint {
                println!("{}", p.display());
            }
        }
        Command::Eval { cfg, checkpoint, policy, seed, max_steps, max_episodes, traces } => {
            let mut rc = load_config(&cfg)?;
            if let Some(p) = policy {
                rc.eval.policy = serde_json::from_value(serde_json::Value::String(p.clone()))
                    .map_err(|_| Error::ConfigParse(format!("unknown policy `{p}`")))?;
            }
            if let Some(s) = seed {
                rc.eval.seed = s;
            }
            if let Some(m) = max_steps {
                rc.eval.max_steps = m;
            }
            if let Some(m) = max_episodes {
                rc.eval.max_episodes = m;
            }
            rc.eval.record_traces |= traces;
            let rc = rc.resolve()?;
            prepare_out(&cfg.out)?;
            write(&cfg.out.join(RESOLVED), rc.to_json())?;
            let mut policy = match rc.eval.policy {
                PolicyKind::Checkpoint => {
                    let path = checkpoint.ok_or_else(|| Error::ConfigParse("--checkpoint is required for the checkpoint policy".into()))?;
                    Box::new(GreedyNet { net: load_checkpoint(&path)? })
                }
                kind => baseline(kind, &rc.sim, rc.eval.seed)?,
            };
            let report = evaluate(&rc.eval, &rc.sim, &rc.reward, policy.as_mut())?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            write(&cfg.out.join("eval_report.json"), &json)?;
            println!("score {} resets {} episodes {} steps {}", report.score, report.resets, report.episodes, report.steps);
        }
        Command::Plot { inputs, out } => {
            let mut runs = Vec::new();
            for (i, p) in inputs.iter().enumerate() {
                let id = p
                    .parent()
                    .and_then(|d| d.file_name())
                    .map(|s| s.to_string_lossy().into_owned())
                    .filter(|s| !s.is_empty())
                    .unwrap_or_else(|| format!("run{i}"));
                let id = if runs.iter().any(|r: &RunCurve| r.run_id == id) { format!("{id}_{i}") } else { id };
                runs.push(RunCurve { run_id: id, stats: read_train_log(p)?, eval: None });
            }
            let cmp = if runs.len() == 1 {
                // a single curve still plots; ordering needs two
                let mut twin = runs.clone();
                twin.push(RunCurve { run_id: String::new(), stats: Vec::new(), eval: None });
                let mut c = compare_runs(&twin)?;
                c.curves.pop();
                c.pairwise.clear();
                c.ranking.retain(|(id, _)| !id.is_empty());
                c
            } else {
                compare_runs(&runs)?
            };
            let dir = out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            prepare_out(dir)?;
            write(&out, render_svg(&cmp.curves))?;
            let mut csv = Vec::new();
            cmp.write_curves_csv(&mut csv).map_err(|e| Error::io(dir.join("curves.csv"), e))?;
            write(&dir.join("curves.csv"), csv)?;
            let resolved = serde_json::json!({
                "command": "plot",
                "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                "out": out.display().to_string(),
            });
            write(&dir.join(RESOLVED), serde_json::to_string_pretty(&resolved).expect("json"))?;
            print!("{}", cmp.ordering_table());
        }
        Command::RenderObs { cfg, seed, step } => {
            let mut rc = load_config(&cfg)?;
            if let Some(s) = seed {
                rc.sim.seed = s;
            }
            let rc = rc.resolve()?;
            prepare_out(&cfg.out)?;
            write(&cfg.out.join(RESOLVED), rc.to_json())?;
            let mut env = fetchworld::env::Env::new(rc.sim.clone(), rc.reward.clone(), fetchworld::rng::Rng::new(rc.sim.seed))?;
            let mut h = fetchworld::harness::Heuristic { kind: rc.sim.action_kind };
            for _ in 0..step {
                let obs = env.observe();
                let a = fetchworld::harness::Policy::act(&mut h, &env, &obs)?;
                env.step(&a)?;
            }
            let img = observe_visual(&EmbodiedView::of(env.state(), &rc.sim), &env.rig);
            let path = cfg.out.join("obs.ppm");
            write(&path, img.to_ppm())?;
            println!("{}", path.display());
        }
        Command::InspectCheckpoint { path } => {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let (header, payload) = read_header(&bytes)?;
            println!("format {}", header.format);
            println!("arch {}", serde_json::to_string(&header.arch).expect("json"));
            println!("payload_bytes {} (file has {})", header.payload_bytes, payload.len());
            let mut total = 0;
            for t in &header.tensors {
                let n: usize = t.shape.iter().product();
                total += n;
                println!("{:<16} {:?} offset {} len {}", t.name, t.shape, t.offset, n);
            }
            println!("parameters {total}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, status) = code_of(&e);
            let msg = e.to_string().replace('\n', " ");
            eprintln!("{code}: {msg}");
            ExitCode::from(status)
        }
    }
}
