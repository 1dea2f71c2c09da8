//! Linear generators and the single-hidden-layer ReLU discriminator.
//!
//! Latents and data points are row vectors: a batch is an `m×g` (latent) or
//! `m×d` (data) matrix and the generator computes `zW + b`.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::autodiff::{logistic, AutodiffError, NodeId, Tape, Tensor};
use crate::rng::{normal_tensor, stream, Stream};
use crate::synth::{parallel_init, SynthError, TaskSpec};

/// Default hidden width of the discriminator.
pub const DEFAULT_HIDDEN: usize = 32;
/// Std of the iid Gaussian weight init; biases start at zero.
pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected {expected} columns, got shape {got:?}")]
    ShapeMismatch { what: &'static str, expected: usize, got: Vec<usize> },
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// `G(z) = zW + b` with `W: g×d`, `b: d`, and `z ~ N(0, σ²I_g)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub w: Tensor,
    pub b: Tensor,
    pub latent_sigma: f64,
}

/// `logit(x) = w2ᵀ relu(W1ᵀx + b1) + b2`, probability = logistic(logit).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Mean and covariance of a Gaussian in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub mu: Tensor,
    pub sigma: Tensor,
}

impl GaussianMoments {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub data_dim: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub latent_sigma: f64,
}

impl ModelDims {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.data_dim == 0 || self.hidden == 0 || self.latent_dim == 0 {
            return Err(ModelError::InvalidDims(format!("all dimensions must be ≥ 1: {self:?}")));
        }
        if !(self.latent_sigma > 0.0) {
            return Err(ModelError::InvalidDims("latent_sigma must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitScheme {
    /// Gaussian weights with std [`INIT_STD`], zero biases.
    Random,
    /// Generator on the data line shifted by `offset`; random discriminator.
    Parallel { offset: Vec<f64> },
}

impl GeneratorParams {
    pub fn latent_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn data_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn tensors(&self) -> [&Tensor; 2] {
        [&self.w, &self.b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.w, &mut self.b]
    }

    /// Puts the parameters on `tape` as leaves.
    pub fn register(&self, tape: &mut Tape) -> GeneratorNodes {
        GeneratorNodes { w: tape.constant(self.w.clone()), b: tape.constant(self.b.clone()) }
    }
}

impl DiscriminatorParams {
    pub fn data_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn zeros(data_dim: usize, hidden: usize) -> Self {
        DiscriminatorParams {
            w1: Tensor::zeros(&[data_dim, hidden]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[hidden]),
            b2: Tensor::scalar(0.0),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn register(&self, tape: &mut Tape) -> DiscriminatorNodes {
        DiscriminatorNodes {
            w1: tape.constant(self.w1.clone()),
            b1: tape.constant(self.b1.clone()),
            w2: tape.constant(self.w2.clone()),
            b2: tape.constant(self.b2.clone()),
        }
    }

    /// Raw scores (pre-logistic) for each row of `x`.
    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>, ModelError> {
        check_cols("discriminator input", x, self.data_dim())?;
        let h = self.hidden();
        let pre = x.matmul(&self.w1);
        let b2 = self.b2.item();
        Ok((0..pre.rows())
            .map(|i| {
                let row = pre.row(i);
                let mut acc = 0.0;
                for j in 0..h {
                    let a = row[j] + self.b1.data()[j];
                    if a > 0.0 {
                        acc += a * self.w2.data()[j];
                    }
                }
                acc + b2
            })
            .collect())
    }
}

/// Tape handles of generator parameters.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorNodes {
    pub w: NodeId,
    pub b: NodeId,
}

impl GeneratorNodes {
    pub fn all(&self) -> [NodeId; 2] {
        [self.w, self.b]
    }

    /// Records `zW + b`.
    pub fn forward(&self, tape: &mut Tape, z: NodeId) -> Result<NodeId, AutodiffError> {
        let zw = tape.matmul(z, self.w)?;
        tape.broadcast_add(zw, self.b)
    }
}

/// Tape handles of discriminator parameters.
#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorNodes {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

impl DiscriminatorNodes {
    pub fn all(&self) -> [NodeId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }

    /// Records the raw score for each row of the `m×d` node `x`; shape `[m]`.
    pub fn logits(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, AutodiffError> {
        let m = tape.value(x).shape().first().copied().unwrap_or(0);
        let h = tape.value(self.w2).len();
        let pre = tape.matmul(x, self.w1)?;
        let pre = tape.broadcast_add(pre, self.b1)?;
        let act = tape.relu(pre)?;
        let w2 = tape.reshape(self.w2, &[h, 1])?;
        let out = tape.matmul(act, w2)?;
        let out = tape.reshape(out, &[m])?;
        let b2 = tape.expand(self.b2, &[m])?;
        tape.add(out, b2)
    }

    /// Records `logistic(logits)`.
    pub fn probs(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, AutodiffError> {
        let l = self.logits(tape, x)?;
        tape.logistic(l)
    }
}

fn check_cols(what: &'static str, x: &Tensor, expected: usize) -> Result<(), ModelError> {
    if x.rank() != 2 || x.cols() != expected {
        return Err(ModelError::ShapeMismatch { what, expected, got: x.shape().to_vec() });
    }
    Ok(())
}

/// Maps an `m×g` latent batch to `m×d` samples.
pub fn generator_forward(g: &GeneratorParams, z: &Tensor) -> Result<Tensor, ModelError> {
    check_cols("generator latent", z, g.latent_dim())?;
    let mut out = z.matmul(&g.w);
    let d = g.data_dim();
    for row in out.data_mut().chunks_mut(d) {
        for (o, b) in row.iter_mut().zip(g.b.data()) {
            *o += b;
        }
    }
    Ok(out)
}

/// Probability of "real" for each row of `x`.
pub fn discriminator_prob(d: &DiscriminatorParams, x: &Tensor) -> Result<Vec<f64>, ModelError> {
    Ok(d.logits(x)?.into_iter().map(logistic).collect())
}

/// `μ = b`, `Σ = σ² WᵀW`.
pub fn generator_moments(g: &GeneratorParams) -> GaussianMoments {
    let s2 = g.latent_sigma * g.latent_sigma;
    let wtw = g.w.transpose().matmul(&g.w);
    GaussianMoments { mu: g.b.clone(), sigma: wtw.map(|v| v * s2) }
}

/// Random discriminator and generator with the standard init.
pub fn random_params(seed: u64, dims: &ModelDims) -> (GeneratorParams, DiscriminatorParams) {
    let mut rng = stream(seed, Stream::Init);
    let gen = GeneratorParams {
        w: normal_tensor(&mut rng, &[dims.latent_dim, dims.data_dim], INIT_STD),
        b: Tensor::zeros(&[dims.data_dim]),
        latent_sigma: dims.latent_sigma,
    };
    let disc = DiscriminatorParams {
        w1: normal_tensor(&mut rng, &[dims.data_dim, dims.hidden], INIT_STD),
        b1: Tensor::zeros(&[dims.hidden]),
        w2: normal_tensor(&mut rng, &[dims.hidden], INIT_STD),
        b2: Tensor::scalar(0.0),
    };
    (gen, disc)
}

/// Deterministic initial parameters for a run.
pub fn init_params(
    seed: u64,
    scheme: &InitScheme,
    dims: &ModelDims,
    task: &TaskSpec,
) -> Result<(GeneratorParams, DiscriminatorParams), ModelError> {
    dims.validate()?;
    if task.d != dims.data_dim {
        return Err(ModelError::InvalidDims(format!(
            "task dimension {} differs from model data_dim {}",
            task.d, dims.data_dim
        )));
    }
    let (gen, disc) = random_params(seed, dims);
    match scheme {
        InitScheme::Random => Ok((gen, disc)),
        InitScheme::Parallel { offset } => {
            if dims.latent_dim != 1 {
                return Err(ModelError::InvalidDims("parallel init needs latent_dim 1".into()));
            }
            let mut g = parallel_init(task, offset)?;
            g.latent_sigma = dims.latent_sigma;
            Ok((g, disc))
        }
    }
}

/// Flat `{name → nested array}` object for checkpoint files.
pub fn snapshot_json(g: &GeneratorParams, d: &DiscriminatorParams) -> Value {
    let mut m = Map::new();
    m.insert("gen.w".into(), g.w.to_json());
    m.insert("gen.b".into(), g.b.to_json());
    m.insert("gen.latent_sigma".into(), Value::from(g.latent_sigma));
    m.insert("disc.w1".into(), d.w1.to_json());
    m.insert("disc.b1".into(), d.b1.to_json());
    m.insert("disc.w2".into(), d.w2.to_json());
    m.insert("disc.b2".into(), d.b2.to_json());
    Value::Object(m)
}
