//! One function per subcommand. Each resolves its config, writes the
//! manifest, then produces its outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ganlab::analysis::{self, landscape_scan, DiscSource, TwoGaussianSetup};
use ganlab::models::{generator_forward, DiscriminatorParams, InitScheme};
use ganlab::plot::{box_svg, scatter_svg, BoxGroup, ScatterSeries, BLUE, PALETTE, RED};
use ganlab::rng::{derive_seed, normal_tensor, stream, Stream};
use ganlab::sweep::{run_sweep_with, SweepAxis, SweepResult, SweepSpec, LR_GRID, PAPER_SEEDS};
use ganlab::synth::{make_task, perpendicular_offset, sample_data, TaskSpec};
use ganlab::trainer::{train_run, TrainConfig, TrainingTrace, DESK_STEPS, PAPER_STEPS};
use ganlab::{GanVariant, GeneratorParams};

use crate::config::{load_file, merge, parse_override, resolve, set_path};
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to turn flags into a resolved config.
pub struct Invocation {
    pub command: &'static str,
    pub out: PathBuf,
    pub paper_scale: bool,
    pub workers: usize,
    pub config: Option<PathBuf>,
    /// Explicit flags as dotted paths, applied before `--set`.
    pub flags: Vec<(String, Value)>,
    pub sets: Vec<String>,
}

impl Invocation {
    fn layered(&self, defaults: Value) -> Result<Value, CliError> {
        let mut v = defaults;
        if let Some(path) = &self.config {
            merge(&mut v, load_file(path, self.command)?);
        }
        for (k, val) in &self.flags {
            set_path(&mut v, k, val.clone())?;
        }
        for s in &self.sets {
            let (k, val) = parse_override(s)?;
            set_path(&mut v, &k, val)?;
        }
        Ok(v)
    }

    fn steps(&self) -> u64 {
        if self.paper_scale {
            PAPER_STEPS
        } else {
            DESK_STEPS
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    tool_version: &'a str,
    seed: u64,
    out_dir: String,
    config: &'a T,
}

fn write_manifest<T: Serialize>(inv: &Invocation, seed: u64, config: &T) -> Result<(), CliError> {
    fs::create_dir_all(&inv.out)?;
    let m = Manifest {
        command: inv.command,
        tool_version: VERSION,
        seed,
        out_dir: inv.out.display().to_string(),
        config,
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Io(e.to_string()))?;
    write(&inv.out.join("manifest.json"), &(text + "\n"))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub d: usize,
    pub sigma: f64,
    /// 0 streams fresh samples; otherwise a fixed training set of this size.
    pub dataset_size: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig { d: 2, sigma: 1.0, dataset_size: 0 }
    }
}

/// Config of `exp1`, `exp2` and `parallel`. `train.variant` and `train.seed`
/// are replaced per run: the variant from `variants`, the seed derived from
/// the master `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpConfig {
    pub seed: u64,
    pub variants: Vec<GanVariant>,
    pub task: TaskConfig,
    pub train: TrainConfig,
    /// Steps with a parameter snapshot and, for d = 2, a scatter plot.
    /// Empty selects the command's default panels.
    pub scatter_steps: Vec<u64>,
    pub scatter_samples: usize,
    /// Perpendicular distance between the data and model lines (`parallel`).
    pub offset: f64,
}

impl Default for ExpConfig {
    fn default() -> Self {
        ExpConfig {
            seed: 0,
            variants: vec![GanVariant::NonSaturating],
            task: TaskConfig::default(),
            train: TrainConfig::default(),
            scatter_steps: Vec::new(),
            scatter_samples: 500,
            offset: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpKind {
    Exp1,
    Exp2,
    Parallel,
}

fn exp_defaults(kind: ExpKind, inv: &Invocation) -> ExpConfig {
    let mut c = ExpConfig::default();
    c.train.total_g_steps = inv.steps();
    if kind == ExpKind::Exp2 {
        c.train.latent_dim = 3;
    }
    c
}

fn task_for(seed: u64, t: &TaskConfig) -> Result<TaskSpec, CliError> {
    let task = make_task(derive_seed(&["task", &seed.to_string()]), t.d, t.sigma)
        .map_err(|e| CliError::Config(format!("task: {e}")))?;
    Ok(task.with_dataset_size(t.dataset_size))
}

fn resolve_exp(kind: ExpKind, inv: &Invocation) -> Result<(ExpConfig, TaskSpec), CliError> {
    let defaults = serde_json::to_value(exp_defaults(kind, inv)).expect("config serializes");
    let mut cfg: ExpConfig = resolve(inv.layered(defaults)?)?;
    if cfg.variants.is_empty() {
        return Err(CliError::Config("variants: must not be empty".into()));
    }
    if cfg.scatter_samples == 0 {
        return Err(CliError::Config("scatter_samples: must be ≥ 1".into()));
    }
    if cfg.task.d == 0 {
        return Err(CliError::Config("task.d: must be ≥ 1".into()));
    }
    let s = cfg.train.total_g_steps;
    match kind {
        ExpKind::Exp1 => {
            if cfg.train.latent_dim != 1 {
                return Err(CliError::Config("train.latent_dim: exp1 uses a 1-D latent (g = 1)".into()));
            }
        }
        ExpKind::Exp2 => {
            if cfg.train.latent_dim < 2 {
                return Err(CliError::Config("train.latent_dim: exp2 needs g > 1".into()));
            }
        }
        ExpKind::Parallel => {
            if cfg.task.d < 2 {
                return Err(CliError::Config("task.d: parallel lines need d ≥ 2".into()));
            }
            if !(cfg.offset.is_finite() && cfg.offset > 0.0) {
                return Err(CliError::Config(
                    "offset: must be > 0 (an offset of 0 puts the model on the data line)".into(),
                ));
            }
            cfg.train.latent_dim = 1;
        }
    }
    cfg.train.validate("train.").map_err(|e| CliError::Config(e.to_string()))?;
    let task = task_for(cfg.seed, &cfg.task)?;
    cfg.train.init = match kind {
        ExpKind::Parallel => InitScheme::Parallel {
            offset: perpendicular_offset(&task, cfg.offset).map_err(|e| CliError::Config(e.to_string()))?,
        },
        _ => InitScheme::Random,
    };
    if cfg.scatter_steps.is_empty() {
        cfg.scatter_steps = match kind {
            ExpKind::Parallel => vec![0, s / 4, s * 5 / 8, s],
            _ => vec![0, s / 2, s],
        };
        cfg.scatter_steps.dedup();
    }
    if let Some(bad) = cfg.scatter_steps.iter().find(|&&x| x > s) {
        return Err(CliError::Config(format!("scatter_steps: step {bad} is beyond total_g_steps {s}")));
    }
    Ok((cfg, task))
}

pub fn run_seed(master: u64, variant: GanVariant) -> u64 {
    derive_seed(&["run", &master.to_string(), variant.name()])
}

fn scatter_panel(task: &TaskSpec, gen: &GeneratorParams, n: usize, seed: u64, title: &str) -> Result<String, CliError> {
    let mut rng = stream(seed, Stream::Plot);
    let data = sample_data(task, n, &mut rng).rows;
    let z = normal_tensor(&mut rng, &[n, gen.latent_dim()], gen.latent_sigma);
    let model = generator_forward(gen, &z).map_err(|e| CliError::Config(e.to_string()))?;
    let pts = |t: &ganlab::Tensor| (0..t.rows()).map(|i| (t.get2(i, 0), t.get2(i, 1))).collect();
    let series = [
        ScatterSeries { label: "data".into(), color: BLUE.into(), points: pts(&data) },
        ScatterSeries { label: "model".into(), color: RED.into(), points: pts(&model) },
    ];
    Ok(scatter_svg(title, "x1", "x2", &series))
}

fn write_run(dir: &Path, task: &TaskSpec, cfg: &ExpConfig, seed: u64, trace: &TrainingTrace) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write(&dir.join("trace.csv"), &trace.to_csv())?;
    trace.write_snapshots(dir)?;
    if task.d == 2 {
        for snap in &trace.snapshots {
            let title = format!("{} step {}", cfg.train.variant.name(), snap.step);
            let svg = scatter_panel(task, &snap.gen, cfg.scatter_samples, seed, &title)?;
            write(&dir.join(format!("scatter_{}.svg", snap.step)), &svg)?;
        }
    }
    Ok(())
}

pub fn cmd_exp(kind: ExpKind, inv: &Invocation) -> Result<(), CliError> {
    let (cfg, task) = resolve_exp(kind, inv)?;
    write_manifest(inv, cfg.seed, &cfg)?;

    let mut summary = serde_json::Map::new();
    for &variant in &cfg.variants {
        let mut train = cfg.train.clone();
        train.variant = variant;
        train.seed = run_seed(cfg.seed, variant);
        train.snapshot_steps = cfg.scatter_steps.clone();
        let trace = train_run(&task, &train)?;
        let run_cfg = ExpConfig { train: train.clone(), ..cfg.clone() };
        write_run(&inv.out.join(variant.name()), &task, &run_cfg, train.seed, &trace)?;
        println!(
            "{:<10} initial {:.6}  final {:.6}",
            variant.name(),
            trace.initial_distance(),
            trace.final_distance()
        );
        summary.insert(
            variant.name().into(),
            json!({"initial_frechet_sq": trace.initial_distance(), "final_frechet_sq": trace.final_distance()}),
        );
    }
    let text = serde_json::to_string_pretty(&Value::Object(summary)).expect("summary serializes");
    write(&inv.out.join("summary.json"), &(text + "\n"))
}

/// Config of `figure2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure2Config {
    pub seed: u64,
    pub mu_data: f64,
    pub mu_model: f64,
    pub s_data: f64,
    pub s_model: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_n: usize,
    pub train_steps: usize,
    pub train_lr: f64,
}

pub const FIG2_TRAIN_STEPS: usize = 5000;
pub const FIG2_TRAIN_LR: f64 = 1e-2;

impl Default for Figure2Config {
    fn default() -> Self {
        Figure2Config {
            seed: 0,
            mu_data: -2.0,
            mu_model: 2.0,
            s_data: 0.25,
            s_model: 0.25,
            grid_lo: -4.0,
            grid_hi: 4.0,
            grid_n: 401,
            train_steps: FIG2_TRAIN_STEPS,
            train_lr: FIG2_TRAIN_LR,
        }
    }
}

impl Figure2Config {
    pub fn setup(&self) -> TwoGaussianSetup {
        TwoGaussianSetup {
            mu1: self.mu_data,
            mu2: self.mu_model,
            s1: self.s_data,
            s2: self.s_model,
            grid: analysis::linspace(self.grid_lo, self.grid_hi, self.grid_n),
        }
    }
}

pub fn cmd_figure2(inv: &Invocation) -> Result<(), CliError> {
    let defaults = serde_json::to_value(Figure2Config::default()).expect("config serializes");
    let cfg: Figure2Config = resolve(inv.layered(defaults)?)?;
    if cfg.grid_n < 2 || !(cfg.grid_hi > cfg.grid_lo) {
        return Err(CliError::Config("grid: need grid_n ≥ 2 and grid_hi > grid_lo".into()));
    }
    if !(cfg.train_lr.is_finite() && cfg.train_lr > 0.0) {
        return Err(CliError::Config("train_lr: must be > 0".into()));
    }
    let setup = cfg.setup();
    setup.validate().map_err(|e| CliError::Config(e.to_string()))?;
    write_manifest(inv, cfg.seed, &cfg)?;

    let closed = landscape_scan(&setup, DiscSource::ClosedForm).map_err(|e| CliError::Config(e.to_string()))?;
    write(&inv.out.join("landscape_closed_form.csv"), &closed.to_csv())?;
    write(&inv.out.join("landscape_closed_form.svg"), &closed.to_svg("Optimal discriminator"))?;

    let disc = analysis::train_pointwise_disc(&setup, cfg.train_steps, cfg.train_lr, cfg.seed)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let trained = landscape_scan(&setup, DiscSource::Trained(&disc)).map_err(|e| CliError::Config(e.to_string()))?;
    write(&inv.out.join("landscape_trained.csv"), &trained.to_csv())?;
    write(&inv.out.join("landscape_trained.svg"), &trained.to_svg("Trained discriminator"))?;
    write_disc(&inv.out.join("trained_disc.json"), &disc)?;
    println!("wrote closed-form and trained landscapes to {}", inv.out.display());
    Ok(())
}

fn write_disc(path: &Path, disc: &DiscriminatorParams) -> Result<(), CliError> {
    let v = json!({
        "disc.w1": disc.w1.to_json(),
        "disc.b1": disc.b1.to_json(),
        "disc.w2": disc.w2.to_json(),
        "disc.b2": disc.b2.to_json(),
    });
    write(path, &(serde_json::to_string_pretty(&v).expect("json") + "\n"))
}

pub fn sweep_defaults(inv: &Invocation) -> SweepSpec {
    let mut spec = SweepSpec::new(SweepAxis::LearningRate, LR_GRID.to_vec(), GanVariant::ALL.to_vec());
    spec.train.total_g_steps = inv.steps();
    if inv.paper_scale {
        spec.n_seeds = PAPER_SEEDS;
    }
    spec
}

pub fn cmd_sweep(inv: &Invocation) -> Result<(), CliError> {
    let defaults = serde_json::to_value(sweep_defaults(inv)).expect("spec serializes");
    let spec: SweepSpec = resolve(inv.layered(defaults)?)?;
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    write_manifest(inv, spec.master_seed, &spec)?;

    let total = spec.run_count();
    let done = AtomicUsize::new(0);
    eprintln!("sweep: {total} runs on {} worker(s)", inv.workers);
    let result = run_sweep_with(&spec, inv.workers, |_| {
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if n % (total / 20).max(1) == 0 || n == total {
            eprintln!("sweep: {n}/{total}");
        }
    })?;
    write_sweep(&inv.out, &spec, &result)?;
    for c in &result.cells {
        println!(
            "{:<10} {}={:<8} median {:.6}  q25 {:.6}  q75 {:.6}  failed {}",
            c.variant.name(),
            spec.axis,
            c.axis_value,
            c.stats.median,
            c.stats.q25,
            c.stats.q75,
            c.stats.failed
        );
    }
    Ok(())
}

fn write_sweep(out: &Path, spec: &SweepSpec, result: &SweepResult) -> Result<(), CliError> {
    write(&out.join("sweep.csv"), &result.runs_csv())?;
    write(&out.join("sweep_summary.csv"), &result.summary_csv())?;
    for &x in &spec.axis_values {
        let groups: Vec<BoxGroup> = spec
            .variants
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| {
                result.cell(v, x).map(|st| BoxGroup {
                    label: v.name().into(),
                    color: PALETTE[i % PALETTE.len()].into(),
                    stats: *st,
                })
            })
            .collect();
        let reference = result.baseline(x).map(|b| ("random init median", b.median));
        let title = format!("{} = {}", spec.axis, x);
        let svg = box_svg(&title, "final squared Fréchet distance", &groups, reference, true);
        write(&out.join(format!("box_{}_{}.svg", spec.axis, x)), &svg)?;
    }
    Ok(())
}
