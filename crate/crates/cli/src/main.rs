//! `adal` — run optimizer experiments from config files.
//!
//! Subcommands: `run` (any experiment), `regret` (online-convex report),
//! `noise` (noise-study report), `sweep` (the standard learning-rate search),
//! and `check-grad` (finite-difference gradient validation). The `--seed`,
//! `--out`, `--limit`, and `--optimizer` flags override the corresponding
//! config values.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use adal_core::harness::{
    finite_diff_check, parse_config, run_experiment, ExperimentConfig, ExperimentKind,
    MlpBatchProblem, OptimizerName, ProblemSpec, RunOutput, SyntheticProblem,
};
use adal_core::problems::{make_blobs, Activation, MlpModel, SyntheticKind};
use adal_core::rng::SplitMix64;
use adal_core::GradTransform;

/// Like `println!`, but treats a closed stdout (e.g. `adal run … | head`) as
/// a request to stop rather than a panic.
macro_rules! outln {
    ($($arg:tt)*) => {{
        if writeln!(std::io::stdout(), $($arg)*).is_err() {
            std::process::exit(0);
        }
    }};
}

#[derive(Parser)]
#[command(name = "adal", version, about = "AdaL optimizer experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptChoice {
    Adal,
    Adam,
    Amsgrad,
    Sgd,
}

impl OptChoice {
    fn name(self) -> OptimizerName {
        match self {
            OptChoice::Adal => OptimizerName::Adal,
            OptChoice::Adam => OptimizerName::Adam,
            OptChoice::Amsgrad => OptimizerName::Amsgrad,
            OptChoice::Sgd => OptimizerName::Sgd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GradProblem {
    Rastrigin,
    Rosenbrock,
    Mlp,
}

#[derive(Args)]
struct Overrides {
    /// Replace the run seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the trace CSV here instead of the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Truncate the dataset to its first N samples (classifier runs only).
    #[arg(long)]
    limit: Option<usize>,
    /// Run with this optimizer instead of the one the config names.
    #[arg(long, value_enum)]
    optimizer: Option<OptChoice>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run an online-convex config and report regret against the bound.
    Regret {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a noise study and report the smoothed-noise tail index.
    Noise {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Re-run a config with alpha set to each of 0.01, 0.001, 0.0001.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check an analytic gradient against central differences.
    CheckGrad {
        #[arg(value_enum)]
        problem: GradProblem,
        /// Number of coordinates to probe.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Largest acceptable relative error.
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
}

fn load(path: &PathBuf, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut cfg =
        parse_config(&text).with_context(|| format!("invalid config {}", path.display()))?;

    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.output = Some(out.display().to_string());
    }
    if let Some(limit) = overrides.limit {
        match &mut cfg.problem {
            ProblemSpec::Mlp { limit: l, .. } => *l = Some(limit),
            _ => bail!("--limit only applies to mlp_train and noise_study configs"),
        }
    }
    if let Some(choice) = overrides.optimizer {
        let name = choice.name();
        cfg.optimizer.name = name;
        // The substituted optimizer must stay within what the config
        // language allows for it.
        if name != OptimizerName::Adal {
            cfg.optimizer.transform = GradTransform::Identity;
        }
        if name != OptimizerName::Sgd {
            cfg.optimizer.momentum = 0.0;
        }
    }
    Ok(cfg)
}

fn print_summary(out: &RunOutput) {
    let r = &out.result;
    outln!("kind          = {}", r.kind.as_str());
    outln!("optimizer     = {}", r.optimizer.as_str());
    outln!("seed          = {}", r.seed);
    outln!("steps_run     = {}", r.steps_run);
    if let Some(v) = r.final_loss {
        outln!("final_loss    = {v}");
    }
    if let Some(v) = r.final_accuracy {
        outln!("final_accuracy = {v}");
    }
    if let Some(p) = &r.final_point {
        if p.len() <= 8 {
            let coords: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            outln!("final_point   = {}", coords.join(","));
        }
    }
    for cp in &r.regret_checkpoints {
        outln!(
            "checkpoint    t={} regret={} bound_rhs={} within_bound={}",
            cp.step,
            cp.regret,
            cp.bound_rhs,
            cp.regret <= cp.bound_rhs
        );
    }
    if let Some(v) = r.tail_index {
        outln!("tail_index    = {v}");
    }
    if let Some(t) = r.diverged_at {
        outln!("diverged_at   = {t}");
    }
    for note in &r.notes {
        outln!("note          = {note}");
    }
    if let Some(path) = &r.trace_path {
        outln!("trace         = {path}");
    }
    outln!("wall_time_secs = {:.3}", r.wall_time_secs);
}

fn cmd_run(config: &PathBuf, overrides: &Overrides) -> Result<()> {
    let cfg = load(config, overrides)?;
    let out = run_experiment(&cfg)?;
    print_summary(&out);
    Ok(())
}

fn cmd_regret(config: &PathBuf, overrides: &Overrides) -> Result<()> {
    let cfg = load(config, overrides)?;
    if cfg.kind != ExperimentKind::OnlineConvex {
        bail!(
            "regret expects an online_convex config, got kind = {}",
            cfg.kind.as_str()
        );
    }
    let out = run_experiment(&cfg)?;
    let mut all_within = true;
    for cp in &out.result.regret_checkpoints {
        let ok = cp.regret <= cp.bound_rhs;
        all_within &= ok;
        outln!(
            "t={} regret={} bound_rhs={} within_bound={}",
            cp.step,
            cp.regret,
            cp.bound_rhs,
            ok
        );
    }
    outln!("all_within_bound = {all_within}");
    Ok(())
}

fn cmd_noise(config: &PathBuf, overrides: &Overrides) -> Result<()> {
    let cfg = load(config, overrides)?;
    if cfg.kind != ExperimentKind::NoiseStudy {
        bail!(
            "noise expects a noise_study config, got kind = {}",
            cfg.kind.as_str()
        );
    }
    let out = run_experiment(&cfg)?;
    outln!("steps_run = {}", out.result.steps_run);
    if let Some(rec) = out.trace.last() {
        if let Some(v) = rec.noise_l2 {
            outln!("last_noise_l2 = {v}");
        }
    }
    match out.result.tail_index {
        Some(v) => println!("tail_index = {v}"),
        None => println!("tail_index = (not estimable from this run)"),
    }
    Ok(())
}

fn cmd_sweep(config: &PathBuf, overrides: &Overrides) -> Result<()> {
    if overrides.out.is_some() {
        bail!("sweep runs several configurations and does not write traces; drop --out");
    }
    let base = load(config, overrides)?;
    let mut best: Option<(f64, f64)> = None;
    for alpha in [0.01, 0.001, 0.0001] {
        let mut cfg = base.clone();
        cfg.optimizer.alpha = alpha;
        cfg.output = None;
        let out = run_experiment(&cfg)?;
        let metric = match cfg.kind {
            ExperimentKind::OnlineConvex => out
                .result
                .regret_checkpoints
                .last()
                .map(|cp| cp.regret)
                .unwrap_or(f64::INFINITY),
            _ => out.result.final_loss.unwrap_or(f64::INFINITY),
        };
        let label = match cfg.kind {
            ExperimentKind::OnlineConvex => "final_regret",
            _ => "final_loss",
        };
        let diverged = match out.result.diverged_at {
            Some(t) => format!(" diverged_at={t}"),
            None => String::new(),
        };
        outln!("alpha={alpha} {label}={metric}{diverged}");
        if best.is_none_or(|(_, m)| metric < m) {
            best = Some((alpha, metric));
        }
    }
    let (alpha, _) = best.expect("three candidates were evaluated");
    outln!("best_alpha = {alpha}");
    Ok(())
}

fn cmd_check_grad(problem: GradProblem, samples: usize, seed: u64, tolerance: f64) -> Result<()> {
    let worst = match problem {
        GradProblem::Rastrigin | GradProblem::Rosenbrock => {
            let kind = match problem {
                GradProblem::Rastrigin => SyntheticKind::Rastrigin,
                _ => SyntheticKind::Rosenbrock,
            };
            let mut rng = SplitMix64::new(seed);
            let point = [rng.next_in(-4.0, 4.0), rng.next_in(-4.0, 4.0)];
            let mut p = SyntheticProblem::new(kind, 2)?;
            finite_diff_check(&mut p, &point, samples, seed)?
        }
        GradProblem::Mlp => {
            let data = make_blobs(seed, 8, 3, 2, 0.7)?;
            let mut model = MlpModel::new(&[2, 8, 3], Activation::Tanh)?;
            model.init_uniform(&mut SplitMix64::new(seed));
            let batch: Vec<usize> = (0..data.len()).collect();
            let mut p = MlpBatchProblem::new(model, data, batch)?;
            let point = p.point();
            finite_diff_check(&mut p, &point, samples, seed)?
        }
    };
    outln!("worst_relative_error = {worst:e}");
    if worst > tolerance {
        bail!("gradient check failed: {worst:e} exceeds tolerance {tolerance:e}");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { config, overrides } => cmd_run(config, overrides),
        Command::Regret { config, overrides } => cmd_regret(config, overrides),
        Command::Noise { config, overrides } => cmd_noise(config, overrides),
        Command::Sweep { config, overrides } => cmd_sweep(config, overrides),
        Command::CheckGrad {
            problem,
            samples,
            seed,
            tolerance,
        } => cmd_check_grad(*problem, *samples, *seed, *tolerance),
    }
}
