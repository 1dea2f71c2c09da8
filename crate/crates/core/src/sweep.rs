//! Seed-replicated hyperparameter sweeps with quartile aggregation.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::GanVariant;
use crate::models::{generator_moments, random_params, ModelDims};
use crate::rng::derive_seed;
use crate::stats::{summarize, Summary};
use crate::synth::{frechet_squared, make_task, true_moments, SynthError, TaskSpec};
use crate::trainer::{train_run, ConfigError, TrainConfig, TrainError};

pub const LR_GRID: [f64; 3] = [1e-4, 1e-3, 1e-2];
pub const DISC_UPDATE_GRID: [f64; 4] = [1.0, 5.0, 10.0, 100.0];
pub const DESK_SEEDS: usize = 50;
pub const PAPER_SEEDS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    LearningRate,
    InputDim,
    DStepsPerG,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::LearningRate => "learning_rate",
            SweepAxis::InputDim => "input_dim",
            SweepAxis::DStepsPerG => "d_steps_per_g",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lr" | "learning_rate" => Ok(SweepAxis::LearningRate),
            "d" | "dim" | "input_dim" => Ok(SweepAxis::InputDim),
            "k" | "d_steps" | "d_steps_per_g" => Ok(SweepAxis::DStepsPerG),
            _ => Err(format!("unknown sweep axis `{s}` (expected lr, input-dim or d-steps)")),
        }
    }
}

/// How the synthetic task of each replicate is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskTemplate {
    pub d: usize,
    pub sigma: f64,
    /// Fixed dataset size; 0 streams fresh samples.
    pub dataset_size: usize,
    /// Reuse one task for every replicate instead of drawing a new one.
    pub fixed_task: bool,
}

impl Default for TaskTemplate {
    fn default() -> Self {
        TaskTemplate { d: 2, sigma: 1.0, dataset_size: 0, fixed_task: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub axis_values: Vec<f64>,
    pub variants: Vec<GanVariant>,
    pub n_seeds: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub task: TaskTemplate,
    #[serde(default)]
    pub train: TrainConfig,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, axis_values: Vec<f64>, variants: Vec<GanVariant>) -> Self {
        SweepSpec {
            axis,
            axis_values,
            variants,
            n_seeds: DESK_SEEDS,
            master_seed: 0,
            task: TaskTemplate::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.axis_values.is_empty() {
            return Err(ConfigError::new("axis_values", "must not be empty"));
        }
        if self.variants.is_empty() {
            return Err(ConfigError::new("variants", "must not be empty"));
        }
        if self.n_seeds == 0 {
            return Err(ConfigError::new("n_seeds", "must be ≥ 1"));
        }
        if self.task.d == 0 {
            return Err(ConfigError::new("task.d", "must be ≥ 1"));
        }
        if !(self.task.sigma > 0.0) {
            return Err(ConfigError::new("task.sigma", "must be > 0"));
        }
        for (i, &v) in self.axis_values.iter().enumerate() {
            let path = format!("axis_values[{i}]");
            let integral = v.is_finite() && v >= 1.0 && v.fract() == 0.0;
            match self.axis {
                SweepAxis::LearningRate if !(v.is_finite() && v >= 0.0) => {
                    return Err(ConfigError::new(path, "learning rate must be finite and ≥ 0"));
                }
                SweepAxis::InputDim | SweepAxis::DStepsPerG if !integral => {
                    return Err(ConfigError::new(path, "must be a positive integer"));
                }
                _ => {}
            }
            let cfg = self.cell_config(self.variants[0], v, 0);
            cfg.validate("train.")?;
        }
        Ok(())
    }

    /// Task seed of replicate `rep`; shared across variants and axis values
    /// so that cells are compared on identical tasks.
    pub fn task_seed(&self, rep: usize) -> u64 {
        let master = self.master_seed.to_string();
        if self.task.fixed_task {
            derive_seed(&["task", &master])
        } else {
            derive_seed(&["task", &master, &rep.to_string()])
        }
    }

    pub fn run_seed(&self, variant: GanVariant, axis_value: f64, rep: usize) -> u64 {
        derive_seed(&[
            "run",
            &self.master_seed.to_string(),
            variant.name(),
            &axis_value.to_string(),
            &rep.to_string(),
        ])
    }

    /// Data dimension of the cell at `axis_value`.
    pub fn cell_dim(&self, axis_value: f64) -> usize {
        match self.axis {
            SweepAxis::InputDim => axis_value as usize,
            _ => self.task.d,
        }
    }

    pub fn cell_task(&self, axis_value: f64, rep: usize) -> Result<TaskSpec, SynthError> {
        let task = make_task(self.task_seed(rep), self.cell_dim(axis_value), self.task.sigma)?;
        Ok(task.with_dataset_size(self.task.dataset_size))
    }

    pub fn cell_config(&self, variant: GanVariant, axis_value: f64, rep: usize) -> TrainConfig {
        let mut cfg = self.train.clone();
        cfg.variant = variant;
        cfg.seed = self.run_seed(variant, axis_value, rep);
        match self.axis {
            SweepAxis::LearningRate => {
                cfg.lr_d = axis_value;
                cfg.lr_g = axis_value;
            }
            SweepAxis::DStepsPerG => cfg.d_steps_per_g = axis_value as usize,
            SweepAxis::InputDim => {}
        }
        cfg
    }

    pub fn run_count(&self) -> usize {
        self.variants.len() * self.axis_values.len() * self.n_seeds
    }

    /// Every (variant, axis value, replicate) tuple in output order.
    pub fn cells(&self) -> Vec<(GanVariant, f64, usize)> {
        let mut out = Vec::with_capacity(self.run_count());
        for &v in &self.variants {
            for &x in &self.axis_values {
                for rep in 0..self.n_seeds {
                    out.push((v, x, rep));
                }
            }
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep spec: {0}")]
    Config(#[from] ConfigError),
    #[error("run {variant} @ {axis_value} #{rep}: {source}")]
    Run { variant: GanVariant, axis_value: f64, rep: usize, source: TrainError },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: GanVariant,
    pub axis_value: f64,
    pub replicate: usize,
    pub seed: u64,
    /// NaN for failed runs.
    pub final_frechet_sq: f64,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub variant: GanVariant,
    pub axis_value: f64,
    pub stats: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub runs: Vec<RunRecord>,
    pub cells: Vec<CellSummary>,
    /// Untrained-generator reference per axis value.
    pub baselines: Vec<(f64, Summary)>,
}

impl SweepResult {
    pub fn cell(&self, variant: GanVariant, axis_value: f64) -> Option<&Summary> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.axis_value == axis_value)
            .map(|c| &c.stats)
    }

    pub fn baseline(&self, axis_value: f64) -> Option<&Summary> {
        self.baselines.iter().find(|(x, _)| *x == axis_value).map(|(_, s)| s)
    }

    pub fn finals(&self, variant: GanVariant, axis_value: f64) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.variant == variant && r.axis_value == axis_value && !r.failed)
            .map(|r| r.final_frechet_sq)
            .collect()
    }

    /// `variant,axis_value,replicate,seed,final_frechet_sq,failed`
    pub fn runs_csv(&self) -> String {
        let mut s = String::from("variant,axis_value,replicate,seed,final_frechet_sq,failed\n");
        for r in &self.runs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.variant, r.axis_value, r.replicate, r.seed, r.final_frechet_sq, r.failed
            );
        }
        s
    }

    /// One row per cell plus one `random-init` row per axis value.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("variant,axis_value,n,failed,mean,median,q25,q75,min,max\n");
        let mut row = |name: &str, x: f64, st: &Summary| {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                name, x, st.n, st.failed, st.mean, st.median, st.q25, st.q75, st.min, st.max
            );
        };
        for c in &self.cells {
            row(c.variant.name(), c.axis_value, &c.stats);
        }
        for (x, st) in &self.baselines {
            row("random-init", *x, st);
        }
        s
    }
}

/// Trains one cell of the sweep in isolation.
pub fn run_cell(
    spec: &SweepSpec,
    variant: GanVariant,
    axis_value: f64,
    rep: usize,
) -> Result<RunRecord, SweepError> {
    let task = spec.cell_task(axis_value, rep)?;
    let cfg = spec.cell_config(variant, axis_value, rep);
    let (final_frechet_sq, failed) = match train_run(&task, &cfg) {
        Ok(trace) => (trace.final_distance(), false),
        Err(e) if e.is_numerical() => (f64::NAN, true),
        Err(source) => return Err(SweepError::Run { variant, axis_value, rep, source }),
    };
    Ok(RunRecord { variant, axis_value, replicate: rep, seed: cfg.seed, final_frechet_sq, failed })
}

/// Distances of untrained generators (standard random init) to `task`.
pub fn random_baseline(
    task: &TaskSpec,
    n_seeds: usize,
    dims: &ModelDims,
    master_seed: u64,
) -> Result<Summary, SynthError> {
    let target = true_moments(task);
    let values = (0..n_seeds)
        .map(|i| {
            let seed = derive_seed(&["baseline", &master_seed.to_string(), &i.to_string()]);
            let (gen, _) = random_params(seed, dims);
            frechet_squared(&target, &generator_moments(&gen))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(&values, 0))
}

/// Baseline paired with the sweep's replicates: replicate `i` scores a
/// fresh random generator against the task that replicate trains on.
pub fn sweep_baseline(spec: &SweepSpec, axis_value: f64) -> Result<Summary, SynthError> {
    let dims = spec.train.dims(spec.cell_dim(axis_value));
    let values = (0..spec.n_seeds)
        .map(|rep| {
            let task = spec.cell_task(axis_value, rep)?;
            let seed =
                derive_seed(&["baseline", &spec.master_seed.to_string(), &rep.to_string()]);
            let (gen, _) = random_params(seed, &dims);
            frechet_squared(&true_moments(&task), &generator_moments(&gen))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(&values, 0))
}

/// Runs every cell on up to `workers` threads and aggregates final
/// distances. Results do not depend on `workers` or scheduling.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<SweepResult, SweepError> {
    run_sweep_with(spec, workers, |_| {})
}

/// [`run_sweep`] with a callback invoked as each run finishes.
pub fn run_sweep_with(
    spec: &SweepSpec,
    workers: usize,
    on_done: impl Fn(&RunRecord) + Sync,
) -> Result<SweepResult, SweepError> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let runs: Vec<RunRecord> = pool.install(|| {
        spec.cells()
            .into_par_iter()
            .map(|(v, x, rep)| {
                let r = run_cell(spec, v, x, rep)?;
                on_done(&r);
                Ok(r)
            })
            .collect::<Result<_, SweepError>>()
    })?;

    let mut cells = Vec::new();
    for &v in &spec.variants {
        for &x in &spec.axis_values {
            let mine: Vec<&RunRecord> =
                runs.iter().filter(|r| r.variant == v && r.axis_value == x).collect();
            let ok: Vec<f64> =
                mine.iter().filter(|r| !r.failed).map(|r| r.final_frechet_sq).collect();
            let failed = mine.len() - ok.len();
            cells.push(CellSummary { variant: v, axis_value: x, stats: summarize(&ok, failed) });
        }
    }
    let baselines = spec
        .axis_values
        .iter()
        .map(|&x| Ok((x, sweep_baseline(spec, x)?)))
        .collect::<Result<_, SynthError>>()?;
    Ok(SweepResult { axis: spec.axis, runs, cells, baselines })
}

/// `spec` re-targeted at the discriminator-update axis {1, 5, 10, 100}.
pub fn disc_update_spec(spec: &SweepSpec) -> SweepSpec {
    SweepSpec { axis: SweepAxis::DStepsPerG, axis_values: DISC_UPDATE_GRID.to_vec(), ..spec.clone() }
}

pub fn disc_update_sweep(spec: &SweepSpec, workers: usize) -> Result<SweepResult, SweepError> {
    run_sweep(&disc_update_spec(spec), workers)
}
