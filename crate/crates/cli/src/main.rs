//! `adaptplanner`: train, evolve, plan, evaluate and render from the command
//! line. Every command is a function of its config file, its flags and the
//! master seed; artifacts default to `$ADAPTPLANNER_DATA_DIR`.
//!
//! Exit codes: 0 on success, 2 on usage errors (printed by clap with usage
//! text), 1 on runtime errors, which are reported on stderr as one JSON
//! object `{"error": <kind>, "message": <text>}`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptplanner::diffusion::{Trajectory, TRANSITION_DIM};
use adaptplanner::eval::render_svg;
use adaptplanner::maze::{TaskSpec, Vec2};
use adaptplanner::persist::{
    data_dir, load_checkpoint, load_pool, save_checkpoint, save_pool, write_json, write_suite, Checkpoint,
    RunConfig, SuiteKind,
};
use adaptplanner::{pipeline, rng, Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "adaptplanner", version, about = "Guided diffusion planner with self-evolving data")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bundled maze name (umaze, medium, large).
    #[arg(long, global = true)]
    maze: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the expert dataset as a pool file.
    GenData {
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the base planner on expert data.
    Train {
        /// Expert pool; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run self-evolution phases from a checkpoint and its pool.
    Evolve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        phases: Option<u32>,
        /// Skip the before/after evaluations in the reports.
        #[arg(long)]
        no_eval: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Sample one plan and write it as JSON plus an SVG rendering.
    Plan {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_parser = parse_point)]
        start: Vec2,
        #[arg(long, value_parser = parse_point)]
        goal: Vec2,
        #[arg(long, value_parser = parse_point)]
        coin: Option<Vec2>,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Benchmark a checkpoint; writes per-episode CSV and aggregate JSON.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_parser = parse_suite)]
        suite: Option<SuiteKind>,
        #[arg(long)]
        n_tasks: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// File stem of the outputs.
        #[arg(long, default_value = "eval")]
        name: String,
    },
    /// Render a trajectory JSON written by `plan` as SVG.
    Render {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_point(s: &str) -> std::result::Result<Vec2, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [x, y] = parts.as_slice() else {
        return Err(format!("expected `x,y`, got `{s}`"));
    };
    let num = |v: &str| {
        v.parse::<f64>()
            .ok()
            .filter(|f| f.is_finite())
            .ok_or_else(|| format!("`{v}` is not a finite number"))
    };
    Ok([num(x)?, num(y)?])
}

fn parse_suite(s: &str) -> std::result::Result<SuiteKind, String> {
    match s {
        "hard" => Ok(SuiteKind::Hard),
        "random" => Ok(SuiteKind::Random),
        "coin" => Ok(SuiteKind::Coin),
        other => Err(format!("unknown suite `{other}` (hard, random, coin)")),
    }
}

/// Plan file written by `plan` and read by `render`.
#[derive(Debug, Serialize, Deserialize)]
struct PlanFile {
    maze: String,
    task: TaskSpec,
    alpha: f64,
    seed: u64,
    rows: Vec<[f64; TRANSITION_DIM]>,
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(m) = &g.maze {
        cfg.maze.name = m.clone();
        cfg.maze.path = None;
    }
    Ok(cfg)
}

/// Re-validates after flag overrides.
fn finish(cfg: RunConfig) -> Result<RunConfig> {
    RunConfig::from_toml(&cfg.to_toml())
}

/// Loads a checkpoint and points a bundled-maze config at its maze.
fn open_checkpoint(cfg: &mut RunConfig, path: Option<PathBuf>, default: &str) -> Result<Checkpoint> {
    let path = path.unwrap_or_else(|| data_dir().join(default));
    let ck = load_checkpoint(&path)?;
    if cfg.maze.path.is_none() {
        cfg.maze.name = ck.maze.clone();
    }
    cfg.diffusion.horizon = Some(ck.planner.horizon);
    cfg.diffusion.n_steps = Some(ck.planner.schedule.n_steps);
    Ok(ck)
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::GenData { episodes, out } => {
            if let Some(n) = episodes {
                cfg.data.expert_episodes = n;
            }
            let cfg = finish(cfg)?;
            let maze = cfg.maze_spec()?;
            let pool = pipeline::expert_pool(&cfg, &maze)?;
            let out = out.unwrap_or_else(|| data_dir().join("expert.pool"));
            save_pool(&out, &pool)?;
            print_json(&serde_json::json!({
                "pool": out, "entries": pool.len(), "horizon": pool.horizon()
            }));
        }
        Command::Train { data, steps, out } => {
            if let Some(s) = steps {
                cfg.training.steps = s;
            }
            let cfg = finish(cfg)?;
            let maze = cfg.maze_spec()?;
            let pool = match data {
                Some(p) => load_pool(&p, Some(cfg.horizon()))?,
                None => pipeline::expert_pool(&cfg, &maze)?,
            };
            let (ck, losses) = pipeline::train_base(&cfg, &pool)?;
            let out = out.unwrap_or_else(|| data_dir().join("base.ckpt"));
            save_checkpoint(&out, &ck)?;
            print_json(&serde_json::json!({
                "checkpoint": out, "steps": losses.len(), "final_loss": losses.last()
            }));
        }
        Command::Evolve {
            checkpoint,
            data,
            phases,
            no_eval,
            out_dir,
        } => {
            if let Some(p) = phases {
                cfg.evolution.phases = p;
            }
            let ck = open_checkpoint(&mut cfg, checkpoint, "base.ckpt")?;
            let cfg = finish(cfg)?;
            let maze = cfg.maze_spec()?;
            let data = data.unwrap_or_else(|| data_dir().join("expert.pool"));
            let pool = load_pool(&data, Some(ck.planner.horizon))?;
            let out =
                pipeline::run_evolution(&cfg, &maze, &ck.planner, &pool, cfg.evolution.phases, !no_eval)?;
            let dir = out_dir.unwrap_or_else(|| data_dir().join("evolve"));
            let mut written = Vec::new();
            for (report, planner) in out.reports.iter().zip(&out.phase_planners) {
                let path = dir.join(format!("phase_{}.ckpt", report.phase));
                save_checkpoint(
                    &path,
                    &Checkpoint {
                        planner: planner.clone(),
                        maze: ck.maze.clone(),
                        train: ck.train.clone(),
                    },
                )?;
                write_json(&dir.join(format!("phase_{}.json", report.phase)), report)?;
                written.push(path);
            }
            save_pool(&dir.join("pool.pool"), &out.pool)?;
            write_json(&dir.join("reports.json"), &out.reports)?;
            print_json(&serde_json::json!({ "checkpoints": written, "reports": out.reports }));
        }
        Command::Plan {
            checkpoint,
            start,
            goal,
            coin,
            alpha,
            out,
            svg,
        } => {
            let ck = open_checkpoint(&mut cfg, checkpoint, "base.ckpt")?;
            if let Some(c) = coin {
                cfg.guidance.coin = Some(c);
                cfg.guidance.mode = adaptplanner::persist::config::GuidanceKind::Coin;
            }
            if let Some(a) = alpha {
                cfg.guidance.alpha = a;
            }
            let cfg = finish(cfg)?;
            let maze = cfg.maze_spec()?;
            let mut task = TaskSpec::new(start, goal);
            task.coin = cfg.guidance.coin.filter(|_| coin.is_some() || cfg.guidance.alpha != 0.0);
            task.validate(&maze, &cfg.env())?;
            let opts = cfg.guidance.plan_options();
            let seed = rng::derive_seed(cfg.seed, "plan", 0);
            let tau = ck.planner.plan(&task, &opts, seed)?;
            let file = PlanFile {
                maze: maze.name.clone(),
                task: task.clone(),
                alpha: opts.alpha,
                seed,
                rows: (0..tau.horizon())
                    .map(|t| tau.grid().row(t).try_into().expect("row width"))
                    .collect(),
            };
            let out = out.unwrap_or_else(|| data_dir().join("plan.json"));
            let svg = svg.unwrap_or_else(|| out.with_extension("svg"));
            write_json(&out, &file)?;
            write_text(&svg, &render_svg(&maze, &tau.positions(), Some(&task)))?;
            print_json(&serde_json::json!({ "trajectory": out, "svg": svg, "rows": file.rows.len() }));
        }
        Command::Eval {
            checkpoint,
            suite,
            n_tasks,
            out_dir,
            name,
        } => {
            if let Some(s) = suite {
                cfg.eval.suite = s;
            }
            if let Some(n) = n_tasks {
                cfg.eval.n_tasks = n;
            }
            let ck = open_checkpoint(&mut cfg, checkpoint, "base.ckpt")?;
            let cfg = finish(cfg)?;
            let maze = cfg.maze_spec()?;
            let result = pipeline::evaluate(&cfg, &maze, &ck.planner)?;
            let dir = out_dir.unwrap_or_else(|| data_dir().join("eval"));
            let (csv, json) = write_suite(&dir, &name, &result)?;
            print_json(&serde_json::json!({ "csv": csv, "json": json, "summary": result.summary() }));
        }
        Command::Render { trajectory, out } => {
            let text = std::fs::read_to_string(&trajectory).map_err(|e| Error::io(&trajectory, e))?;
            let file: PlanFile = serde_json::from_str(&text).map_err(|e| Error::SchemaMismatch(e.to_string()))?;
            if cfg.maze.path.is_none() && cli.global.maze.is_none() {
                cfg.maze.name = file.maze.clone();
            }
            let cfg = finish(cfg)?;
            let maze = cfg.maze_spec()?;
            let tau = Trajectory::from_rows(&file.rows)?;
            let out = out.unwrap_or_else(|| trajectory.with_extension("svg"));
            write_text(&out, &render_svg(&maze, &tau.positions(), Some(&file.task)))?;
            print_json(&serde_json::json!({ "svg": out }));
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.kind(), "message": e.to_string() })
            );
            ExitCode::from(1)
        }
    }
}
