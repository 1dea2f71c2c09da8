use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Dense row-major tensor of `f64` values.
///
/// Only ranks 0 (scalar), 1 (vector) and 2 (matrix) are used by the lab.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, panicking if `data` does not fill `shape` exactly.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Tensor { shape, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    /// Builds a matrix from a slice of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor::matrix(rows.len(), cols, data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// Value of a scalar (or any single-element) tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.rank(), 2);
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape;
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape, other.shape);
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul inner dimensions");
        let mut out = vec![0.0; m * n];
        if m == 0 || n == 0 || k == 0 {
            return Tensor::matrix(m, n, out);
        }
        if n == 1 {
            for (o, arow) in out.iter_mut().zip(self.data.chunks_exact(k)) {
                *o = arow.iter().zip(&other.data).map(|(a, b)| a * b).sum();
            }
        } else {
            for (orow, arow) in out.chunks_exact_mut(n).zip(self.data.chunks_exact(k)) {
                for (&a, brow) in arow.iter().zip(other.data.chunks_exact(n)) {
                    for (o, &b) in orow.iter_mut().zip(brow) {
                        *o += a * b;
                    }
                }
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul_nt inner dimensions");
        if k == 0 {
            return Tensor::zeros(&[m, n]);
        }
        let mut out = Vec::with_capacity(m * n);
        if k == 1 {
            for &a in &self.data {
                out.extend(other.data.iter().map(|b| a * b));
            }
            return Tensor::matrix(m, n, out);
        }
        for arow in self.data.chunks_exact(k) {
            for brow in other.data.chunks_exact(k) {
                out.push(arow.iter().zip(brow).map(|(a, b)| a * b).sum());
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Tensor) -> Tensor {
        let (k, m) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul_tn inner dimensions");
        let mut out = vec![0.0; m * n];
        if m == 0 || n == 0 {
            return Tensor::matrix(m, n, out);
        }
        if n == 1 {
            for (arow, &b) in self.data.chunks_exact(m).zip(&other.data) {
                for (o, &a) in out.iter_mut().zip(arow) {
                    *o += a * b;
                }
            }
            return Tensor::matrix(m, n, out);
        }
        for (arow, brow) in self.data.chunks_exact(m).zip(other.data.chunks_exact(n)) {
            for (&a, orow) in arow.iter().zip(out.chunks_exact_mut(n)) {
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Tensor::matrix(m, n, out)
    }

    pub fn transpose(&self) -> Tensor {
        let (m, n) = (self.rows(), self.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::matrix(n, m, out)
    }

    /// Nested JSON arrays mirroring the shape (a bare number for scalars).
    pub fn to_json(&self) -> Value {
        match self.rank() {
            0 => Value::from(self.data[0]),
            1 => Value::from(self.data.clone()),
            _ => {
                let inner: usize = self.shape[1..].iter().product();
                let sub_shape = self.shape[1..].to_vec();
                Value::Array(
                    self.data
                        .chunks(inner)
                        .map(|c| Tensor::new(sub_shape.clone(), c.to_vec()).to_json())
                        .collect(),
                )
            }
        }
    }
}
