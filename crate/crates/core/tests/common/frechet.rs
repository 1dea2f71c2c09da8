//! Independently coded reference for the squared Fréchet distance.

use ganlab::synth::EIGEN_CLAMP_REL;
use ganlab::{GaussianMoments, Tensor};

pub type Mat = Vec<Vec<f64>>;

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix. Returns the
/// eigenvalues and the eigenvectors as columns of `v`.
pub fn jacobi(mut a: Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut v: Mat = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-32 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

fn clamp(vals: &mut [f64]) {
    let top = vals.iter().fold(0.0_f64, |a, &v| a.max(v));
    for v in vals.iter_mut() {
        if *v <= EIGEN_CLAMP_REL * top {
            *v = 0.0;
        }
    }
}

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

fn sqrt_psd(m: &Mat) -> Mat {
    let n = m.len();
    let (mut lam, v) = jacobi(m.clone());
    clamp(&mut lam);
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| v[i][k] * lam[k].sqrt() * v[j][k]).sum()).collect())
        .collect()
}

/// Singular values by one-sided (Hestenes) Jacobi: rotate column pairs until
/// all columns are orthogonal; the column norms are then the singular values.
pub fn singular_values(mut b: Mat) -> Vec<f64> {
    let n = b.len();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = (0..n).map(|i| b[i][p] * b[i][p]).sum();
                let beta: f64 = (0..n).map(|i| b[i][q] * b[i][q]).sum();
                let gamma: f64 = (0..n).map(|i| b[i][p] * b[i][q]).sum();
                if gamma.abs() <= 1e-17 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for row in b.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (0..n).map(|j| (0..n).map(|i| b[i][j] * b[i][j]).sum::<f64>().sqrt()).collect()
}

/// Square roots by Jacobi eigendecomposition, trace of the middle term as the
/// singular-value sum of `Σ_Q^{1/2} Σ_P^{1/2}`, with the same clamp rules.
pub fn oracle(p: &GaussianMoments, q: &GaussianMoments) -> f64 {
    let n = p.dim();
    let mean: f64 = p.mu.data().iter().zip(q.mu.data()).map(|(a, b)| (a - b).powi(2)).sum();
    let sp = to_mat(&p.sigma);
    let sq = to_mat(&q.sigma);
    let nuclear: f64 = singular_values(matmul(&sqrt_psd(&sq), &sqrt_psd(&sp))).iter().sum();
    let tr_p: f64 = (0..n).map(|i| sp[i][i]).sum();
    let tr_q: f64 = (0..n).map(|i| sq[i][i]).sum();
    let trace = tr_p + tr_q - 2.0 * nuclear;
    let resolution = n as f64 * EIGEN_CLAMP_REL * (tr_p + tr_q);
    mean + if trace <= resolution { 0.0 } else { trace }
}

/// The formula taken literally: Jacobi eigenvalues of `Σ_P^{1/2} Σ_Q Σ_P^{1/2}`,
/// square-rooted. This matrix has the squared spectrum, so only eigenvalues at
/// round-off level (1e-14 relative) are clamped here.
pub fn product_oracle(p: &GaussianMoments, q: &GaussianMoments) -> f64 {
    let n = p.dim();
    let mean: f64 = p.mu.data().iter().zip(q.mu.data()).map(|(a, b)| (a - b).powi(2)).sum();
    let sp = to_mat(&p.sigma);
    let sq = to_mat(&q.sigma);
    let root = sqrt_psd(&sp);
    let mut m = matmul(&matmul(&root, &sq), &root);
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[i][j] + m[j][i]);
            m[i][j] = avg;
            m[j][i] = avg;
        }
    }
    let (mut mu, _) = jacobi(m);
    let top = mu.iter().fold(0.0_f64, |a, &v| a.max(v));
    for v in mu.iter_mut() {
        if *v <= 1e-14 * top {
            *v = 0.0;
        }
    }
    let tr_p: f64 = (0..n).map(|i| sp[i][i]).sum();
    let tr_q: f64 = (0..n).map(|i| sq[i][i]).sum();
    mean + (tr_p + tr_q - 2.0 * mu.iter().map(|v| v.sqrt()).sum::<f64>()).max(0.0)
}
