//! Training objectives for the six GAN variants and the two gradient-penalty
//! samplers, recorded as differentiable tape graphs.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, NodeId, Tape, Tensor};
use crate::models::{DiscriminatorNodes, DiscriminatorParams};
use crate::rng::LabRng;

/// Probabilities are clamped to this before taking logs.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("real batch {real:?} and fake batch {fake:?} differ in shape")]
    BatchMismatch { real: Vec<usize>, fake: Vec<usize> },
    #[error("variant {0} draws random numbers but no rng was supplied")]
    MissingRng(GanVariant),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GanVariant {
    #[serde(rename = "minimax")]
    Minimax,
    #[serde(rename = "ns")]
    NonSaturating,
    #[serde(rename = "wgan")]
    WganClip,
    #[serde(rename = "wgan-gp")]
    WganGp,
    #[serde(rename = "gan-gp")]
    GanGp,
    #[serde(rename = "dragan-ns")]
    DraganNs,
}

/// Where the penalty's interpolation partner `x̃` comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyMode {
    /// `x̃ = x + noise` around the data.
    Dragan,
    /// `x̃ = generator sample`.
    WganGp,
}

impl GanVariant {
    pub const ALL: [GanVariant; 6] = [
        GanVariant::Minimax,
        GanVariant::NonSaturating,
        GanVariant::WganClip,
        GanVariant::WganGp,
        GanVariant::GanGp,
        GanVariant::DraganNs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GanVariant::Minimax => "minimax",
            GanVariant::NonSaturating => "ns",
            GanVariant::WganClip => "wgan",
            GanVariant::WganGp => "wgan-gp",
            GanVariant::GanGp => "gan-gp",
            GanVariant::DraganNs => "dragan-ns",
        }
    }

    pub fn penalty_mode(self) -> Option<PenaltyMode> {
        match self {
            GanVariant::WganGp | GanVariant::GanGp => Some(PenaltyMode::WganGp),
            GanVariant::DraganNs => Some(PenaltyMode::Dragan),
            _ => None,
        }
    }

    /// WGAN variants use raw critic scores instead of probabilities.
    pub fn is_wasserstein(self) -> bool {
        matches!(self, GanVariant::WganClip | GanVariant::WganGp)
    }

    pub fn clips_weights(self) -> bool {
        self == GanVariant::WganClip
    }
}

impl fmt::Display for GanVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GanVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "minimax" | "mm" | "m-gan" => Ok(GanVariant::Minimax),
            "ns" | "non-saturating" | "ns-gan" => Ok(GanVariant::NonSaturating),
            "wgan" | "wgan-clip" => Ok(GanVariant::WganClip),
            "wgan-gp" => Ok(GanVariant::WganGp),
            "gan-gp" => Ok(GanVariant::GanGp),
            "dragan-ns" | "dragan" => Ok(GanVariant::DraganNs),
            other => Err(format!(
                "unknown variant '{other}' (expected minimax, ns, wgan, wgan-gp, gan-gp, dragan-ns)"
            )),
        }
    }
}

/// Std of the DRAGAN perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseStd {
    /// Multiple of the per-dimension std of the current real batch.
    BatchRelative(f64),
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub noise_std: NoiseStd,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig { lambda: 10.0, noise_std: NoiseStd::BatchRelative(0.5) }
    }
}

impl PenaltyConfig {
    /// Per-dimension noise std for a given real batch.
    pub fn noise_for(&self, real: &Tensor) -> Vec<f64> {
        let d = real.cols();
        match self.noise_std {
            NoiseStd::Fixed(s) => vec![s; d],
            NoiseStd::BatchRelative(k) => {
                let m = real.rows() as f64;
                (0..d)
                    .map(|j| {
                        let mean = (0..real.rows()).map(|i| real.get2(i, j)).sum::<f64>() / m;
                        let var = (0..real.rows())
                            .map(|i| (real.get2(i, j) - mean).powi(2))
                            .sum::<f64>()
                            / m;
                        k * var.sqrt()
                    })
                    .collect()
            }
        }
    }
}

/// `x̂ = α x + (1 − α) x̃` with a given `α` per row.
pub fn interpolate(real: &Tensor, partner: &Tensor, alphas: &[f64]) -> Tensor {
    let d = real.cols();
    let mut out = Vec::with_capacity(real.len());
    for (i, &a) in alphas.iter().enumerate() {
        let (x, t) = (real.row(i), partner.row(i));
        out.extend((0..d).map(|j| a * x[j] + (1.0 - a) * t[j]));
    }
    Tensor::matrix(alphas.len(), d, out)
}

/// Draws the penalty points. `α ~ U(0,1)` independently per row; in DRAGAN
/// mode the partner is the real row plus Gaussian noise with per-dimension
/// std `noise_std`.
pub fn sample_interpolates(
    mode: PenaltyMode,
    real: &Tensor,
    fake: &Tensor,
    noise_std: &[f64],
    rng: &mut LabRng,
) -> Result<Tensor, LossError> {
    if real.shape() != fake.shape() {
        return Err(LossError::BatchMismatch {
            real: real.shape().to_vec(),
            fake: fake.shape().to_vec(),
        });
    }
    let alphas: Vec<f64> = (0..real.rows()).map(|_| rng.gen::<f64>()).collect();
    let partner = match mode {
        PenaltyMode::WganGp => fake.clone(),
        PenaltyMode::Dragan => {
            let d = real.cols();
            let mut t = real.clone();
            for row in t.data_mut().chunks_mut(d) {
                for (v, s) in row.iter_mut().zip(noise_std) {
                    let z: f64 = StandardNormal.sample(rng);
                    *v += s * z;
                }
            }
            t
        }
    };
    Ok(interpolate(real, &partner, &alphas))
}

/// `mean_i (‖∇ₓ out_i‖₂ − 1)²` for a per-row output `out` of the leaf `x_hat`.
/// Differentiable with respect to everything `out` depends on.
pub fn penalty_from_output(tape: &mut Tape, out: NodeId, x_hat: NodeId) -> Result<NodeId, LossError> {
    let grad = tape.input_gradient_node(out, x_hat)?;
    let norms = tape.l2norm(grad)?;
    let shifted = tape.add_scalar(norms, -1.0)?;
    let sq = tape.square(shifted)?;
    Ok(tape.mean(sq)?)
}

/// Gradient penalty of the discriminator at `x_hat`. GAN variants penalize the
/// probability output; WGAN-GP penalizes the raw score.
pub fn gradient_penalty(
    tape: &mut Tape,
    disc: &DiscriminatorNodes,
    x_hat: NodeId,
    on_score: bool,
) -> Result<NodeId, LossError> {
    let out = if on_score { disc.logits(tape, x_hat)? } else { disc.probs(tape, x_hat)? };
    penalty_from_output(tape, out, x_hat)
}

fn mean_log(tape: &mut Tape, p: NodeId) -> Result<NodeId, AutodiffError> {
    let guarded = tape.clamp_min(p, LOG_EPS)?;
    let l = tape.log(guarded)?;
    tape.mean(l)
}

fn one_minus(tape: &mut Tape, p: NodeId) -> Result<NodeId, AutodiffError> {
    let neg = tape.scale(p, -1.0)?;
    tape.add_scalar(neg, 1.0)
}

/// Discriminator (critic) cost to be minimized.
///
/// GAN variants: `−mean log D(x) − mean log(1 − D(x̃))`. WGAN variants:
/// `mean D(x̃) − mean D(x)` on raw scores. Penalized variants add
/// `λ · penalty`, which consumes draws from `rng`.
pub fn discriminator_loss(
    variant: GanVariant,
    tape: &mut Tape,
    disc: &DiscriminatorNodes,
    real: NodeId,
    fake: NodeId,
    penalty: &PenaltyConfig,
    rng: Option<&mut LabRng>,
) -> Result<NodeId, LossError> {
    let (rs, fs) = (tape.value(real).shape().to_vec(), tape.value(fake).shape().to_vec());
    if rs != fs || rs.len() != 2 {
        return Err(LossError::BatchMismatch { real: rs, fake: fs });
    }
    let base = if variant.is_wasserstein() {
        let lr = disc.logits(tape, real)?;
        let lf = disc.logits(tape, fake)?;
        let mr = tape.mean(lr)?;
        let mf = tape.mean(lf)?;
        tape.sub(mf, mr)?
    } else {
        let pr = disc.probs(tape, real)?;
        let pf = disc.probs(tape, fake)?;
        let term_real = mean_log(tape, pr)?;
        let q = one_minus(tape, pf)?;
        let term_fake = mean_log(tape, q)?;
        let both = tape.add(term_real, term_fake)?;
        tape.scale(both, -1.0)?
    };

    let Some(mode) = variant.penalty_mode() else { return Ok(base) };
    let rng = rng.ok_or(LossError::MissingRng(variant))?;
    let real_t = tape.value(real).clone();
    let noise = match mode {
        PenaltyMode::Dragan => penalty.noise_for(&real_t),
        PenaltyMode::WganGp => Vec::new(),
    };
    let x_hat = sample_interpolates(mode, &real_t, tape.value(fake), &noise, rng)?;
    let x_hat = tape.constant(x_hat);
    let gp = gradient_penalty(tape, disc, x_hat, variant.is_wasserstein())?;
    let weighted = tape.scale(gp, penalty.lambda)?;
    Ok(tape.add(base, weighted)?)
}

/// Generator cost to be minimized. Penalties never enter here.
pub fn generator_loss(
    variant: GanVariant,
    tape: &mut Tape,
    disc: &DiscriminatorNodes,
    fake: NodeId,
) -> Result<NodeId, LossError> {
    Ok(match variant {
        GanVariant::Minimax => {
            let pf = disc.probs(tape, fake)?;
            let q = one_minus(tape, pf)?;
            mean_log(tape, q)?
        }
        GanVariant::NonSaturating | GanVariant::GanGp | GanVariant::DraganNs => {
            let pf = disc.probs(tape, fake)?;
            let l = mean_log(tape, pf)?;
            tape.scale(l, -1.0)?
        }
        GanVariant::WganClip | GanVariant::WganGp => {
            let lf = disc.logits(tape, fake)?;
            let m = tape.mean(lf)?;
            tape.scale(m, -1.0)?
        }
    })
}

/// Projects every discriminator parameter into `[−c, c]`.
pub fn clip_weights(mut disc: DiscriminatorParams, c: f64) -> DiscriminatorParams {
    clip_weights_in_place(&mut disc, c);
    disc
}

pub fn clip_weights_in_place(disc: &mut DiscriminatorParams, c: f64) {
    for t in disc.tensors_mut() {
        for v in t.data_mut() {
            *v = v.clamp(-c, c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    /// A discriminator whose logit is the same constant `l` everywhere.
    fn constant_disc(d: usize, logit: f64) -> DiscriminatorParams {
        let mut p = DiscriminatorParams::zeros(d, 2);
        p.b2 = Tensor::scalar(logit);
        p
    }

    fn loss_value(
        variant: GanVariant,
        disc: &DiscriminatorParams,
        real: &Tensor,
        fake: &Tensor,
        cfg: &PenaltyConfig,
        seed: u64,
    ) -> f64 {
        let mut tape = Tape::new();
        let dn = disc.register(&mut tape);
        let r = tape.constant(real.clone());
        let f = tape.constant(fake.clone());
        let mut rng = stream(seed, Stream::Penalty);
        let l = discriminator_loss(variant, &mut tape, &dn, r, f, cfg, Some(&mut rng)).unwrap();
        tape.value(l).item()
    }

    fn gen_value(variant: GanVariant, disc: &DiscriminatorParams, fake: &Tensor) -> f64 {
        let mut tape = Tape::new();
        let dn = disc.register(&mut tape);
        let f = tape.constant(fake.clone());
        let l = generator_loss(variant, &mut tape, &dn, f).unwrap();
        tape.value(l).item()
    }

    #[test]
    fn ns_discriminator_loss_at_chance() {
        let d = constant_disc(2, 0.0);
        let x = Tensor::zeros(&[4, 2]);
        let v = loss_value(GanVariant::NonSaturating, &d, &x, &x, &PenaltyConfig::default(), 1);
        assert!((v - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((v - 1.38629).abs() < 1e-5);
    }

    #[test]
    fn ns_discriminator_loss_perfect() {
        // Logit = 40·x₀: real rows at x₀ = 1, fake rows at x₀ = −1.
        let mut d = DiscriminatorParams::zeros(1, 1);
        d.w1 = Tensor::matrix(1, 1, vec![1.0]);
        d.b1 = Tensor::vector(vec![1.0]);
        d.w2 = Tensor::vector(vec![40.0]);
        d.b2 = Tensor::scalar(-40.0);
        let real = Tensor::matrix(2, 1, vec![1.0, 1.0]);
        let fake = Tensor::matrix(2, 1, vec![-1.0, -1.0]);
        let v = loss_value(GanVariant::NonSaturating, &d, &real, &fake, &PenaltyConfig::default(), 1);
        assert!(v >= 0.0 && v < 1e-15, "{v}");
    }

    #[test]
    fn wgan_critic_cost() {
        let mut d = DiscriminatorParams::zeros(1, 1);
        d.w1 = Tensor::matrix(1, 1, vec![1.0]);
        d.w2 = Tensor::vector(vec![1.0]);
        let real = Tensor::matrix(1, 1, vec![1.0]);
        let fake = Tensor::matrix(1, 1, vec![0.3]);
        let v = loss_value(GanVariant::WganClip, &d, &real, &fake, &PenaltyConfig::default(), 1);
        assert!((v + 0.7).abs() < 1e-15);
        assert!((gen_value(GanVariant::WganClip, &d, &fake) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn generator_losses_at_chance() {
        let d = constant_disc(2, 0.0);
        let x = Tensor::zeros(&[3, 2]);
        assert!((gen_value(GanVariant::NonSaturating, &d, &x) - 2f64.ln()).abs() < 1e-15);
        assert!((gen_value(GanVariant::Minimax, &d, &x) + 2f64.ln()).abs() < 1e-15);
        assert!((gen_value(GanVariant::GanGp, &d, &x) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn missing_rng_and_shape_errors() {
        let d = constant_disc(2, 0.0);
        let mut tape = Tape::new();
        let dn = d.register(&mut tape);
        let r = tape.constant(Tensor::zeros(&[3, 2]));
        let f = tape.constant(Tensor::zeros(&[3, 2]));
        let cfg = PenaltyConfig::default();
        assert_eq!(
            discriminator_loss(GanVariant::GanGp, &mut tape, &dn, r, f, &cfg, None),
            Err(LossError::MissingRng(GanVariant::GanGp))
        );
        assert!(discriminator_loss(GanVariant::NonSaturating, &mut tape, &dn, r, f, &cfg, None).is_ok());
        let f2 = tape.constant(Tensor::zeros(&[2, 2]));
        assert!(matches!(
            discriminator_loss(GanVariant::NonSaturating, &mut tape, &dn, r, f2, &cfg, None),
            Err(LossError::BatchMismatch { .. })
        ));
    }

    #[test]
    fn interpolation_endpoints() {
        let real = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let fake = Tensor::from_rows(&[vec![-1.0, 0.0], vec![5.0, 5.0]]);
        assert_eq!(interpolate(&real, &fake, &[1.0, 1.0]), real);
        assert_eq!(interpolate(&real, &fake, &[0.0, 0.0]), fake);
        let mut rng = stream(3, Stream::Penalty);
        let x = sample_interpolates(PenaltyMode::Dragan, &real, &fake, &[0.0, 0.0], &mut rng).unwrap();
        assert_eq!(x, real);
        assert_eq!(interpolate(&real, &real, &[0.5, 0.5]), real);
    }

    #[test]
    fn interpolates_lie_on_segments() {
        let real = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
        let fake = Tensor::from_rows(&[vec![2.0, 0.0], vec![1.0, 3.0]]);
        let mut rng = stream(9, Stream::Penalty);
        let x = sample_interpolates(PenaltyMode::WganGp, &real, &fake, &[], &mut rng).unwrap();
        assert_eq!(x.get2(0, 1), 0.0);
        assert!(x.get2(0, 0) >= 0.0 && x.get2(0, 0) <= 2.0);
        assert_eq!(x.get2(1, 0), 1.0);
    }

    fn linear_penalty(w: &[f64], rows: usize) -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(
            vec![rows, w.len()],
            (0..rows * w.len()).map(|i| i as f64 * 0.37 - 1.0).collect(),
        ));
        let wn = tape.constant(Tensor::matrix(w.len(), 1, w.to_vec()));
        let xw = tape.matmul(x, wn).unwrap();
        let out = tape.reshape(xw, &[rows]).unwrap();
        let p = penalty_from_output(&mut tape, out, x).unwrap();
        let g = tape.gradient(p, &[wn]).unwrap()[0];
        (tape.value(p).item(), tape.value(g).data().to_vec())
    }

    #[test]
    fn linear_penalty_values() {
        let (p, g) = linear_penalty(&[3.0, 4.0], 3);
        assert!((p - 16.0).abs() < 1e-12);
        assert!((g[0] - 4.8).abs() < 1e-12 && (g[1] - 6.4).abs() < 1e-12, "{g:?}");
        let (p, _) = linear_penalty(&[0.6, 0.8], 2);
        assert!(p.abs() < 1e-15);
    }

    #[test]
    fn linear_penalty_gradient_matches_finite_differences() {
        let h = 1e-6;
        let (_, g) = linear_penalty(&[3.0, 4.0], 2);
        for k in 0..2 {
            let mut wp = [3.0, 4.0];
            let mut wm = [3.0, 4.0];
            wp[k] += h;
            wm[k] -= h;
            let fd = (linear_penalty(&wp, 2).0 - linear_penalty(&wm, 2).0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6, "{fd} vs {}", g[k]);
        }
    }

    #[test]
    fn constant_disc_penalty_is_one() {
        let d = constant_disc(3, 0.4);
        let mut tape = Tape::new();
        let dn = d.register(&mut tape);
        let x = tape.constant(Tensor::full(&[5, 3], 0.2));
        for on_score in [false, true] {
            let p = gradient_penalty(&mut tape, &dn, x, on_score).unwrap();
            assert_eq!(tape.value(p).item(), 1.0);
            let g = tape.gradient(p, &dn.all()).unwrap();
            for gi in g {
                assert!(tape.value(gi).all_finite());
            }
        }
    }

    #[test]
    fn clipping() {
        let mut d = DiscriminatorParams::zeros(1, 2);
        d.w1 = Tensor::matrix(1, 2, vec![0.5, -0.005]);
        d.b2 = Tensor::scalar(-3.0);
        let c = clip_weights(d, 0.01);
        assert_eq!(c.w1.data(), &[0.01, -0.005]);
        assert_eq!(c.b2.item(), -0.01);
        assert!(c.tensors().iter().all(|t| t.max_abs() <= 0.01));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in GanVariant::ALL {
            assert_eq!(v.name().parse::<GanVariant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.name()));
        }
        assert!("bogus".parse::<GanVariant>().is_err());
    }

    #[test]
    fn batch_relative_noise() {
        let real = Tensor::from_rows(&[vec![0.0, 5.0], vec![2.0, 5.0]]);
        let cfg = PenaltyConfig::default();
        assert_eq!(cfg.noise_for(&real), vec![0.5, 0.0]);
        let fixed = PenaltyConfig { noise_std: NoiseStd::Fixed(0.3), ..cfg };
        assert_eq!(fixed.noise_for(&real), vec![0.3, 0.3]);
    }
}
