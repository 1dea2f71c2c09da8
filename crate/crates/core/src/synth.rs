//! Synthetic ground truth: Gaussian data on a random line in `R^d`, its exact
//! moments, and the squared Fréchet distance between Gaussians.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::models::{GaussianMoments, GeneratorParams};
use crate::rng::{normal_tensor, stream, LabRng, Stream};

/// Eigenvalues below this fraction of the largest one are treated as zero.
pub const EIGEN_CLAMP_REL: f64 = 1e-10;
/// Allowed asymmetry of an input to [`psd_sqrt`], relative to its largest entry.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("expected a square matrix, got shape {0:?}")]
    NotSquare(Vec<usize>),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
}

/// Data distribution `x = z W_r + b_r`, `z ~ N(0, σ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub w_r: Tensor,
    pub b_r: Tensor,
    pub sigma: f64,
    pub d: usize,
    /// Fixed dataset size; 0 streams fresh samples.
    pub m: usize,
    pub seed: u64,
}

/// Rows of data samples.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingBatch {
    pub rows: Tensor,
}

/// Draws `W_r` and `b_r` with iid standard normal entries.
pub fn make_task(seed: u64, d: usize, sigma: f64) -> Result<TaskSpec, SynthError> {
    if d == 0 {
        return Err(SynthError::InvalidTask("d must be ≥ 1".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SynthError::InvalidTask(format!("sigma must be > 0, got {sigma}")));
    }
    let mut rng = stream(seed, Stream::Task);
    let mut w_r = normal_tensor(&mut rng, &[1, d], 1.0);
    while w_r.data().iter().all(|&v| v == 0.0) {
        w_r = normal_tensor(&mut rng, &[1, d], 1.0);
    }
    let b_r = normal_tensor(&mut rng, &[d], 1.0);
    Ok(TaskSpec { w_r, b_r, sigma, d, m: 0, seed })
}

impl TaskSpec {
    pub fn with_dataset_size(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    /// The fixed dataset of `m` examples, or `None` in streaming mode.
    pub fn fixed_dataset(&self) -> Option<TrainingBatch> {
        (self.m > 0).then(|| {
            let mut rng = stream(self.seed, Stream::Dataset);
            sample_data(self, self.m, &mut rng)
        })
    }
}

fn rows_from_latents(task: &TaskSpec, z: &[f64]) -> Tensor {
    let d = task.d;
    let mut data = Vec::with_capacity(z.len() * d);
    for &zi in z {
        data.extend(task.w_r.data().iter().zip(task.b_r.data()).map(|(w, b)| zi * w + b));
    }
    Tensor::matrix(z.len(), d, data)
}

/// `n` fresh rows `x = z W_r + b_r`.
pub fn sample_data(task: &TaskSpec, n: usize, rng: &mut LabRng) -> TrainingBatch {
    let z = normal_tensor(rng, &[n], task.sigma);
    TrainingBatch { rows: rows_from_latents(task, z.data()) }
}

/// Same as [`sample_data`] with given latents.
pub fn data_from_latents(task: &TaskSpec, z: &[f64]) -> TrainingBatch {
    TrainingBatch { rows: rows_from_latents(task, z) }
}

/// `n` rows drawn uniformly with replacement from a fixed dataset.
pub fn sample_from_dataset(dataset: &TrainingBatch, n: usize, rng: &mut LabRng) -> TrainingBatch {
    let m = dataset.rows.rows();
    let d = dataset.rows.cols();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        data.extend_from_slice(dataset.rows.row(rng.gen_range(0..m)));
    }
    TrainingBatch { rows: Tensor::matrix(n, d, data) }
}

/// `μ_r = b_r`, `Σ_r = σ² W_rᵀ W_r`.
pub fn true_moments(task: &TaskSpec) -> GaussianMoments {
    let s2 = task.sigma * task.sigma;
    let sigma = task.w_r.transpose().matmul(&task.w_r).map(|v| v * s2);
    GaussianMoments { mu: task.b_r.clone(), sigma }
}

fn to_dmatrix(m: &Tensor) -> Result<DMatrix<f64>, SynthError> {
    if m.rank() != 2 || m.rows() != m.cols() {
        return Err(SynthError::NotSquare(m.shape().to_vec()));
    }
    Ok(DMatrix::from_row_slice(m.rows(), m.cols(), m.data()))
}

fn from_dmatrix(m: &DMatrix<f64>) -> Tensor {
    let (r, c) = m.shape();
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            data.push(m[(i, j)]);
        }
    }
    Tensor::matrix(r, c, data)
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<(), SynthError> {
    let scale = m.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let asym = (m - m.transpose()).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if asym > SYMMETRY_TOL * scale {
        return Err(SynthError::NotSymmetric(asym));
    }
    Ok(())
}

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues with negatives and relatively tiny values set to zero.
fn clamp_eigenvalues(vals: &mut [f64]) {
    let top = vals.iter().fold(0.0_f64, |a, &v| a.max(v));
    for v in vals.iter_mut() {
        if *v <= EIGEN_CLAMP_REL * top {
            *v = 0.0;
        }
    }
}

fn sqrt_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrized(m));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    clamp_eigenvalues(&mut vals);
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, lam) in vals.iter().enumerate() {
        let s = lam.sqrt();
        scaled.column_mut(j).scale_mut(s);
    }
    symmetrized(&(scaled * v.transpose()))
}

/// Symmetric PSD square root via eigendecomposition; small and negative
/// eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &Tensor) -> Result<Tensor, SynthError> {
    let dm = to_dmatrix(m)?;
    check_symmetric(&dm)?;
    Ok(from_dmatrix(&sqrt_sym(&dm)))
}

/// `‖μ_P − μ_Q‖² + Tr(Σ_P + Σ_Q − 2 (Σ_P^{1/2} Σ_Q Σ_P^{1/2})^{1/2})`.
///
/// The last trace equals the sum of singular values of `Σ_Q^{1/2} Σ_P^{1/2}`,
/// which is how it is computed: the eigenvalues of the symmetric product are
/// squares of those singular values, and taking them would double the
/// condition number before the clamp is applied.
///
/// A trace term within the clamp resolution, `d · EIGEN_CLAMP_REL · (Tr Σ_P + Tr Σ_Q)`,
/// is set to zero, so identical inputs give exactly 0.
pub fn frechet_squared(p: &GaussianMoments, q: &GaussianMoments) -> Result<f64, SynthError> {
    if p.dim() != q.dim() {
        return Err(SynthError::DimMismatch(p.dim(), q.dim()));
    }
    let mean_term: f64 =
        p.mu.data().iter().zip(q.mu.data()).map(|(a, b)| (a - b) * (a - b)).sum();

    let sp = to_dmatrix(&p.sigma)?;
    let sq = to_dmatrix(&q.sigma)?;
    check_symmetric(&sp)?;
    check_symmetric(&sq)?;
    let cross = sqrt_sym(&sq) * sqrt_sym(&sp);
    let nuclear: f64 = cross.singular_values().iter().sum();
    let tr_p = sp.trace();
    let tr_q = sq.trace();
    let mut trace_term = tr_p + tr_q - 2.0 * nuclear;
    let resolution = p.dim() as f64 * EIGEN_CLAMP_REL * (tr_p.abs() + tr_q.abs());
    if trace_term <= resolution {
        trace_term = 0.0;
    }
    Ok(mean_term + trace_term)
}

/// Generator lying on the data line shifted by `offset`.
pub fn parallel_init(task: &TaskSpec, offset: &[f64]) -> Result<GeneratorParams, SynthError> {
    if offset.len() != task.d {
        return Err(SynthError::DimMismatch(offset.len(), task.d));
    }
    let b = task.b_r.data().iter().zip(offset).map(|(b, o)| b + o).collect();
    Ok(GeneratorParams { w: task.w_r.clone(), b: Tensor::vector(b), latent_sigma: task.sigma })
}

/// True when `offset` is (numerically) a multiple of `W_r`, zero included.
pub fn offset_is_parallel(task: &TaskSpec, offset: &[f64]) -> bool {
    let w = task.w_r.data();
    let ww: f64 = w.iter().map(|v| v * v).sum();
    let ow: f64 = w.iter().zip(offset).map(|(a, b)| a * b).sum();
    let oo: f64 = offset.iter().map(|v| v * v).sum();
    let perp_sq = oo - ow * ow / ww;
    oo == 0.0 || perp_sq <= 1e-18 * oo
}

/// Unit vector orthogonal to `W_r`, scaled to `magnitude`.
pub fn perpendicular_offset(task: &TaskSpec, magnitude: f64) -> Result<Vec<f64>, SynthError> {
    if task.d < 2 {
        return Err(SynthError::InvalidTask("a perpendicular offset needs d ≥ 2".into()));
    }
    let w = task.w_r.data();
    let ww: f64 = w.iter().map(|v| v * v).sum();
    let k = (0..task.d)
        .min_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()))
        .expect("d ≥ 2");
    let mut v: Vec<f64> = w.iter().map(|wi| -w[k] * wi / ww).collect();
    v[k] += 1.0;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(v.into_iter().map(|x| x / norm * magnitude).collect())
}
