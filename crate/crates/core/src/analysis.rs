//! Loss landscape of a one-dimensional generator facing two widely separated
//! Gaussians: the discriminator output and both generator losses with their
//! input derivatives, from the closed-form optimal discriminator or from a
//! trained network.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{logistic, AutodiffError, Tape, Tensor};
use crate::losses::{discriminator_loss, GanVariant, LossError, PenaltyConfig, LOG_EPS};
use crate::models::{random_params, DiscriminatorParams, ModelDims, DEFAULT_HIDDEN};
use crate::plot::{line_svg, LineSeries, BLUE, GREEN, RED};
use crate::rng::{normal_tensor, stream, Stream};
use crate::trainer::{adam_step, AdamConfig, AdamState};

/// Data density N(mu1, s1²) against model density N(mu2, s2²), evaluated on
/// `grid`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoGaussianSetup {
    pub mu1: f64,
    pub mu2: f64,
    pub s1: f64,
    pub s2: f64,
    pub grid: Vec<f64>,
}

impl Default for TwoGaussianSetup {
    fn default() -> Self {
        TwoGaussianSetup {
            mu1: -2.0,
            mu2: 2.0,
            s1: 0.25,
            s2: 0.25,
            grid: linspace(-4.0, 4.0, 401),
        }
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid setup: {0}")]
    InvalidSetup(String),
    #[error("non-finite discriminator loss at step {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

impl TwoGaussianSetup {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.s1 > 0.0 && self.s2 > 0.0) {
            return Err(AnalysisError::InvalidSetup("standard deviations must be > 0".into()));
        }
        if !(self.mu1.is_finite() && self.mu2.is_finite()) {
            return Err(AnalysisError::InvalidSetup("means must be finite".into()));
        }
        if self.grid.iter().any(|x| !x.is_finite()) || self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AnalysisError::InvalidSetup("grid must be finite and strictly increasing".into()));
        }
        Ok(())
    }

    /// `log p_data(x) − log p_model(x)`.
    pub fn log_ratio(&self, x: f64) -> f64 {
        log_normal(x, self.mu1, self.s1) - log_normal(x, self.mu2, self.s2)
    }

    fn log_ratio_dx(&self, x: f64) -> f64 {
        -(x - self.mu1) / (self.s1 * self.s1) + (x - self.mu2) / (self.s2 * self.s2)
    }

    pub fn p_data(&self, x: f64) -> f64 {
        log_normal(x, self.mu1, self.s1).exp()
    }

    pub fn p_model(&self, x: f64) -> f64 {
        log_normal(x, self.mu2, self.s2).exp()
    }
}

fn log_normal(x: f64, mu: f64, s: f64) -> f64 {
    let z = (x - mu) / s;
    -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// `p_data / (p_data + p_model)`, evaluated in log space.
pub fn optimal_discriminator(setup: &TwoGaussianSetup, x: f64) -> f64 {
    logistic(setup.log_ratio(x))
}

/// Pointwise discriminator objective `−p_data log D − p_model log(1 − D)`.
pub fn pointwise_objective(setup: &TwoGaussianSetup, x: f64, d: f64) -> f64 {
    -setup.p_data(x) * d.ln() - setup.p_model(x) * (1.0 - d).ln()
}

#[derive(Clone, Copy, Debug)]
pub enum DiscSource<'a> {
    ClosedForm,
    Trained(&'a DiscriminatorParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeRow {
    pub x: f64,
    pub d: f64,
    pub l_mm: f64,
    pub l_ns: f64,
    pub dlmm_dx: f64,
    pub dlns_dx: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub rows: Vec<LandscapeRow>,
}

impl Landscape {
    /// `x,D,L_mm,L_ns,dLmm_dx,dLns_dx`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,D,L_mm,L_ns,dLmm_dx,dLns_dx\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.x, r.d, r.l_mm, r.l_ns, r.dlmm_dx, r.dlns_dx);
        }
        s
    }

    pub fn to_svg(&self, title: &str) -> String {
        let xs: Vec<f64> = self.rows.iter().map(|r| r.x).collect();
        let col = |f: fn(&LandscapeRow) -> f64| self.rows.iter().map(f).collect::<Vec<_>>();
        let series = [
            LineSeries { label: "D(x)".into(), color: GREEN.into(), xs: xs.clone(), ys: col(|r| r.d) },
            LineSeries { label: "minimax log(1-D)".into(), color: BLUE.into(), xs: xs.clone(), ys: col(|r| r.l_mm) },
            LineSeries { label: "non-saturating -log D".into(), color: RED.into(), xs, ys: col(|r| r.l_ns) },
        ];
        line_svg(title, "x", "value", &series)
    }
}

/// Discriminator output, both generator losses and their x-derivatives over
/// the grid. The closed form uses analytic densities; a trained network is
/// differentiated with autodiff. Losses use the `max(·, 1e-12)` log guard.
pub fn landscape_scan(setup: &TwoGaussianSetup, disc: DiscSource) -> Result<Landscape, AnalysisError> {
    setup.validate()?;
    match disc {
        DiscSource::ClosedForm => Ok(closed_form(setup)),
        DiscSource::Trained(params) => trained(setup, params),
    }
}

fn closed_form(setup: &TwoGaussianSetup) -> Landscape {
    let rows = setup
        .grid
        .iter()
        .map(|&x| {
            let r = setup.log_ratio(x);
            let rp = setup.log_ratio_dx(x);
            let d = logistic(r);
            let one_minus = logistic(-r);
            LandscapeRow {
                x,
                d,
                l_mm: one_minus.max(LOG_EPS).ln(),
                l_ns: -d.max(LOG_EPS).ln(),
                dlmm_dx: -d * rp,
                dlns_dx: -one_minus * rp,
            }
        })
        .collect();
    Landscape { rows }
}

fn trained(setup: &TwoGaussianSetup, params: &DiscriminatorParams) -> Result<Landscape, AnalysisError> {
    if params.data_dim() != 1 {
        return Err(AnalysisError::InvalidSetup(format!(
            "trained discriminator must take 1-D input, got {}",
            params.data_dim()
        )));
    }
    let n = setup.grid.len();
    let mut tape = Tape::new();
    let dn = params.register(&mut tape);
    let x = tape.constant(Tensor::matrix(n, 1, setup.grid.clone()));
    let logits = dn.logits(&mut tape, x)?;
    let p = tape.logistic(logits)?;
    let neg = tape.scale(logits, -1.0)?;
    let q = tape.logistic(neg)?;
    let q_safe = tape.clamp_min(q, LOG_EPS)?;
    let l_mm = tape.log(q_safe)?;
    let p_safe = tape.clamp_min(p, LOG_EPS)?;
    let log_p = tape.log(p_safe)?;
    let l_ns = tape.scale(log_p, -1.0)?;
    let g_mm = tape.input_gradient_node(l_mm, x)?;
    let g_ns = tape.input_gradient_node(l_ns, x)?;

    let rows = (0..n)
        .map(|i| LandscapeRow {
            x: setup.grid[i],
            d: tape.value(p).data()[i],
            l_mm: tape.value(l_mm).data()[i],
            l_ns: tape.value(l_ns).data()[i],
            dlmm_dx: tape.value(g_mm).data()[i],
            dlns_dx: tape.value(g_ns).data()[i],
        })
        .collect();
    Ok(Landscape { rows })
}

/// Trains a 1-D discriminator with the standard cross-entropy objective on
/// fresh samples from both Gaussians (batch 64, Adam(0.5, 0.9)).
pub fn train_pointwise_disc(
    setup: &TwoGaussianSetup,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<DiscriminatorParams, AnalysisError> {
    setup.validate()?;
    const BATCH: usize = 64;
    let dims = ModelDims { data_dim: 1, latent_dim: 1, hidden: DEFAULT_HIDDEN, latent_sigma: 1.0 };
    let (_, mut disc) = random_params(seed, &dims);
    let mut state = AdamState::zeros_like(&disc.tensors());
    let adam = AdamConfig { lr, beta1: 0.5, beta2: 0.9, eps: 1e-8 };
    let mut rng = stream(seed, Stream::DiscData);
    let shift = |t: Tensor, mu: f64| t.map(|v| v + mu);

    for step in 0..steps {
        let real = shift(normal_tensor(&mut rng, &[BATCH, 1], setup.s1), setup.mu1);
        let fake = shift(normal_tensor(&mut rng, &[BATCH, 1], setup.s2), setup.mu2);
        let mut tape = Tape::new();
        let dn = disc.register(&mut tape);
        let r = tape.constant(real);
        let f = tape.constant(fake);
        let loss = discriminator_loss(
            GanVariant::NonSaturating,
            &mut tape,
            &dn,
            r,
            f,
            &PenaltyConfig::default(),
            None,
        )?;
        if !tape.value(loss).item().is_finite() {
            return Err(AnalysisError::NonFinite(step));
        }
        let grads = tape.gradient(loss, &dn.all())?;
        let grads: Vec<&Tensor> = grads.iter().map(|&g| tape.value(g)).collect();
        adam_step(&mut disc.tensors_mut(), &grads, &mut state, &adam);
    }
    Ok(disc)
}
