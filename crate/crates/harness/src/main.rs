use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vkchain::data::Phase;
use vkchain::error::{HarnessError, Result};
use vkchain::gradcheck::{model_check, op_suite};
use vkchain::report::load_report;
use vkchain::run::{default_eval_metrics, load_job, EpisodeSpecRecord, Job};
use vkchain::train::TrainRecipe;
use vkchain_envsim::RobotVariant;
use vkchain_model::VktConfig;

#[derive(Parser)]
#[command(name = "vkchain", version, about = "Visual kinematics chain forecasting on toy reach arms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted demonstrations.
    GenData {
        #[arg(long)]
        robot: RobotVariant,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        views: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24)]
        horizon: usize,
        #[arg(long, default_value_t = 10)]
        n_points: usize,
        #[arg(long, default_value_t = 64)]
        image_size: u32,
    },
    /// Train a backbone and point head on the EMD objective.
    TrainVkt {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        augment: bool,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Train one robot's action head on a frozen backbone.
    TrainHead {
        #[arg(long)]
        backbone: PathBuf,
        #[arg(long)]
        env: RobotVariant,
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Train the behavior-cloning baseline end to end.
    TrainBct {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        env: Vec<RobotVariant>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Closed-loop success on fresh worlds.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        robot: RobotVariant,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        chained: bool,
        /// Metrics file to append to; defaults to the checkpoint's.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Draw the forecast over an episode's views as SVG.
    Overlay {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        episode: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        step: usize,
    },
    /// Finite-difference checks of every op, and of the tiny model with --full.
    GradCheck {
        #[arg(long)]
        full: bool,
    },
    /// Compare models across seeds.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Replay a recorded run.json.
    Rerun {
        run: PathBuf,
        /// Redirect the output directory (or metrics file for evaluations).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct OptArgs {
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    log_interval: Option<u64>,
    #[arg(long)]
    checkpoint_interval: Option<u64>,
}

impl OptArgs {
    fn recipe(&self, phase: Phase, data: Vec<PathBuf>, seed: u64) -> TrainRecipe {
        let mut r = TrainRecipe::new(phase, data, seed);
        r.steps = self.steps.unwrap_or(r.steps);
        r.batch_size = self.batch.unwrap_or(r.batch_size);
        r.lr = self.lr.unwrap_or(r.lr);
        r.log_interval = self.log_interval.unwrap_or(r.log_interval);
        r.checkpoint_interval = self.checkpoint_interval.unwrap_or(r.checkpoint_interval);
        r
    }
}

fn load_config(path: &Path) -> Result<VktConfig> {
    Ok(VktConfig::load(path)?)
}

fn job(command: Command) -> Result<Option<Job>> {
    Ok(Some(match command {
        Command::GenData { robot, episodes, views, seed, out, horizon, n_points, image_size } => {
            if !(1..=4).contains(&views) {
                return Err(HarnessError::Validation(format!("--views {views} outside 1..=4")));
            }
            Job::GenData { spec: EpisodeSpecRecord { robot, views, horizon, n_points, image_size }, episodes, seed, out }
        }
        Command::TrainVkt { config, data, out, seed, augment, opt } => {
            let mut recipe = opt.recipe(Phase::VktBackbone, data, seed);
            recipe.augment = augment;
            Job::TrainVkt { config: load_config(&config)?, recipe, out }
        }
        Command::TrainHead { backbone, env, data, out, seed, opt } => {
            let mut recipe = opt.recipe(Phase::HeadOnly, data, seed);
            recipe.envs = vec![env.name().into()];
            Job::TrainHead { backbone, env: env.name().into(), recipe, out }
        }
        Command::TrainBct { config, data, env, out, seed, opt } => {
            let mut recipe = opt.recipe(Phase::BctEndToEnd, data, seed);
            recipe.envs = env.iter().map(|e| e.name().to_string()).collect();
            Job::TrainBct { config: load_config(&config)?, recipe, out }
        }
        Command::Eval { ckpt, robot, episodes, seed, chained, metrics } => {
            let metrics = metrics.unwrap_or_else(|| default_eval_metrics(&ckpt));
            Job::Eval { ckpt, robot, episodes, seed, chained, metrics }
        }
        Command::Overlay { ckpt, episode, out, step } => Job::Overlay { ckpt, episode, out, step },
        Command::Rerun { run, out } => {
            let job = load_job(&run)?;
            match out {
                Some(dir) => job.redirect(&dir),
                None => job,
            }
        }
        Command::GradCheck { full } => {
            grad_check(full)?;
            return Ok(None);
        }
        Command::Report { files, csv } => {
            let report = load_report(&files)?;
            print!("{}", report.text());
            if let Some(path) = csv {
                std::fs::write(&path, report.csv()).map_err(|e| HarnessError::io(&path, e))?;
            }
            return Ok(None);
        }
    }))
}

fn grad_check(full: bool) -> Result<()> {
    let mut reports = op_suite(0);
    if full {
        reports.push(model_check(1));
    }
    let mut failed = 0;
    for r in &reports {
        let ok = r.report.passed();
        failed += usize::from(!ok);
        println!("{:<16} {:>10.3e} (tol {:.0e}) {}", r.name, r.report.worst(), r.report.tolerance, if ok { "ok" } else { "FAIL" });
    }
    if failed > 0 {
        return Err(HarnessError::Validation(format!("{failed} gradient checks failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are validation errors; --help and --version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match job(cli.command).and_then(|j| j.map(|j| j.execute()).transpose()) {
        Ok(summary) => {
            if let Some(s) = summary {
                println!("{s}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
