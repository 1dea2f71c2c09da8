//! `lab`: reproducible GAN training-dynamics experiments on synthetic data.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use commands::{cmd_exp, cmd_figure2, cmd_sweep, ExpKind, Invocation};
use error::CliError;
use ganlab::sweep::SweepAxis;
use ganlab::GanVariant;

#[derive(Parser, Debug)]
#[command(name = "lab", version, about = "GAN training dynamics on synthetic Gaussian data")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Master seed; every run seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Full-length runs: 200000 generator steps and 1000 seeds per sweep cell.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Worker threads for sweeps (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct Layers {
    /// JSON config file, or the manifest.json of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override such as `train.lr_d=1e-4`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct TrainFlags {
    /// Comma-separated variants: minimax, ns, wgan, wgan-gp, gan-gp, dragan-ns.
    #[arg(long)]
    variant: Option<String>,
    /// Data dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Generator steps.
    #[arg(long)]
    steps: Option<u64>,
    /// Learning rate of both players.
    #[arg(long)]
    lr: Option<f64>,
    /// Discriminator updates per generator update.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Gradient penalty weight.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    log_every: Option<u64>,
    /// Train on a fixed dataset of this many points instead of fresh samples.
    #[arg(long)]
    dataset_size: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// 1-D data line, 1-D latent generator.
    Exp1 {
        #[command(flatten)]
        layers: Layers,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// 1-D data line, overcomplete generator (g > 1).
    Exp2 {
        #[command(flatten)]
        layers: Layers,
        #[command(flatten)]
        train: TrainFlags,
        /// Latent dimension.
        #[arg(long)]
        g: Option<usize>,
    },
    /// Generator initialized on a line parallel to the data.
    Parallel {
        #[command(flatten)]
        layers: Layers,
        #[command(flatten)]
        train: TrainFlags,
        /// Distance between the two lines; must be > 0.
        #[arg(long, allow_negative_numbers = true)]
        offset: Option<f64>,
    },
    /// Discriminator output and generator losses for two separated Gaussians.
    Figure2 {
        #[command(flatten)]
        layers: Layers,
        /// Training steps of the learned discriminator.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Seed-replicated hyperparameter sweep.
    Sweep {
        #[command(flatten)]
        layers: Layers,
        /// lr, input-dim or d-steps.
        #[arg(long)]
        axis: Option<SweepAxis>,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Comma-separated variants.
        #[arg(long)]
        variants: Option<String>,
        /// Seeds per cell.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        /// Use one task for all seeds instead of drawing one per seed.
        #[arg(long)]
        fixed_task: bool,
    },
}

fn variants_json(list: &str) -> Result<Value, CliError> {
    let names = list
        .split(',')
        .map(|s| s.trim().parse::<GanVariant>().map(|v| json!(v.name())))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::Config)?;
    Ok(Value::Array(names))
}

fn push<T: serde::Serialize>(flags: &mut Vec<(String, Value)>, path: &str, v: Option<T>) {
    if let Some(v) = v {
        flags.push((path.to_string(), json!(v)));
    }
}

fn train_flags(t: &TrainFlags, flags: &mut Vec<(String, Value)>) -> Result<(), CliError> {
    if let Some(list) = &t.variant {
        flags.push(("variants".into(), variants_json(list)?));
    }
    push(flags, "task.d", t.d);
    push(flags, "task.dataset_size", t.dataset_size);
    push(flags, "train.total_g_steps", t.steps);
    push(flags, "train.lr_d", t.lr);
    push(flags, "train.lr_g", t.lr);
    push(flags, "train.d_steps_per_g", t.k);
    push(flags, "train.batch_size", t.batch);
    push(flags, "train.penalty.lambda", t.lambda);
    push(flags, "train.log_every", t.log_every);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    let workers = g
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(CliError::Config("--workers must be ≥ 1".into()));
    }
    let mut flags = Vec::new();
    let make = |command, layers: Layers, flags| Invocation {
        command,
        out: g.out.clone(),
        paper_scale: g.paper_scale,
        workers,
        config: layers.config,
        flags,
        sets: layers.set,
    };
    match cli.command {
        Command::Exp1 { layers, train } => {
            push(&mut flags, "seed", g.seed);
            train_flags(&train, &mut flags)?;
            cmd_exp(ExpKind::Exp1, &make("exp1", layers, flags))
        }
        Command::Exp2 { layers, train, g: latent } => {
            push(&mut flags, "seed", g.seed);
            train_flags(&train, &mut flags)?;
            push(&mut flags, "train.latent_dim", latent);
            cmd_exp(ExpKind::Exp2, &make("exp2", layers, flags))
        }
        Command::Parallel { layers, train, offset } => {
            push(&mut flags, "seed", g.seed);
            train_flags(&train, &mut flags)?;
            push(&mut flags, "offset", offset);
            cmd_exp(ExpKind::Parallel, &make("parallel", layers, flags))
        }
        Command::Figure2 { layers, steps, lr } => {
            push(&mut flags, "seed", g.seed);
            push(&mut flags, "train_steps", steps);
            push(&mut flags, "train_lr", lr);
            cmd_figure2(&make("figure2", layers, flags))
        }
        Command::Sweep { layers, axis, values, variants, seeds, d, steps, lr, k, fixed_task } => {
            push(&mut flags, "master_seed", g.seed);
            push(&mut flags, "axis", axis);
            push(&mut flags, "axis_values", values);
            if let Some(list) = &variants {
                flags.push(("variants".into(), variants_json(list)?));
            }
            push(&mut flags, "n_seeds", seeds);
            push(&mut flags, "task.d", d);
            push(&mut flags, "train.total_g_steps", steps);
            push(&mut flags, "train.lr_d", lr);
            push(&mut flags, "train.lr_g", lr);
            push(&mut flags, "train.d_steps_per_g", k);
            if fixed_task {
                flags.push(("task.fixed_task".into(), json!(true)));
            }
            cmd_sweep(&make("sweep", layers, flags))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lab: {e}");
            if matches!(e, CliError::Config(_)) {
                eprintln!("run `lab <command> --help` for usage");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
