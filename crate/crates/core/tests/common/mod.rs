#![allow(dead_code)]

pub mod frechet;

use ganlab::losses::LOG_EPS;
use ganlab::{DiscriminatorParams, GanVariant, GeneratorParams, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| { let z: f64 = StandardNormal.sample(rng); std * z }).collect::<Vec<f64>>();
    Tensor::new(shape.to_vec(), data)
}

pub fn random_disc(rng: &mut ChaCha8Rng, d: usize, h: usize, std: f64) -> DiscriminatorParams {
    DiscriminatorParams {
        w1: normal(rng, &[d, h], std),
        b1: normal(rng, &[h], std),
        w2: normal(rng, &[h], std),
        b2: normal(rng, &[], std),
    }
}

pub fn random_gen(rng: &mut ChaCha8Rng, g: usize, d: usize, std: f64) -> GeneratorParams {
    GeneratorParams { w: normal(rng, &[g, d], std), b: normal(rng, &[d], std), latent_sigma: 1.0 }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Hidden pre-activations, row-major `n×h`.
pub fn pre_act(disc: &DiscriminatorParams, x: &Tensor) -> Vec<f64> {
    let (d, h) = (disc.w1.rows(), disc.w1.cols());
    let mut out = Vec::with_capacity(x.rows() * h);
    for i in 0..x.rows() {
        for j in 0..h {
            let mut s = disc.b1.data()[j];
            for p in 0..d {
                s += x.get2(i, p) * disc.w1.get2(p, j);
            }
            out.push(s);
        }
    }
    out
}

pub fn plain_logits(disc: &DiscriminatorParams, x: &Tensor) -> Vec<f64> {
    let h = disc.w1.cols();
    let pre = pre_act(disc, x);
    pre.chunks(h)
        .map(|row| {
            row.iter().zip(disc.w2.data()).map(|(a, w)| a.max(0.0) * w).sum::<f64>()
                + disc.b2.item()
        })
        .collect()
}

pub fn plain_gen(gen: &GeneratorParams, z: &Tensor) -> Tensor {
    let (g, d) = (gen.w.rows(), gen.w.cols());
    let mut out = Vec::with_capacity(z.rows() * d);
    for i in 0..z.rows() {
        for j in 0..d {
            out.push(gen.b.data()[j] + (0..g).map(|p| z.get2(i, p) * gen.w.get2(p, j)).sum::<f64>());
        }
    }
    Tensor::matrix(z.rows(), d, out)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let all: Vec<f64> = v.collect();
    all.iter().sum::<f64>() / all.len() as f64
}

fn safe_log(p: f64) -> f64 {
    p.max(LOG_EPS).ln()
}

pub fn plain_gen_loss(variant: GanVariant, disc: &DiscriminatorParams, fake: &Tensor) -> f64 {
    let lf = plain_logits(disc, fake);
    match variant {
        GanVariant::Minimax => mean(lf.iter().map(|&l| safe_log(1.0 - sigmoid(l)))),
        GanVariant::WganClip | GanVariant::WganGp => -mean(lf.iter().copied()),
        _ => -mean(lf.iter().map(|&l| safe_log(sigmoid(l)))),
    }
}

/// Unpenalized discriminator loss.
pub fn plain_disc_loss(variant: GanVariant, disc: &DiscriminatorParams, real: &Tensor, fake: &Tensor) -> f64 {
    let lr = plain_logits(disc, real);
    let lf = plain_logits(disc, fake);
    if variant.is_wasserstein() {
        mean(lf.iter().copied()) - mean(lr.iter().copied())
    } else {
        -mean(lr.iter().map(|&l| safe_log(sigmoid(l))))
            - mean(lf.iter().map(|&l| safe_log(1.0 - sigmoid(l))))
    }
}

/// Unscaled input gradient of the logit, row-major `n×d`.
fn logit_input_grad(disc: &DiscriminatorParams, x: &Tensor) -> Vec<f64> {
    let (d, h) = (disc.w1.rows(), disc.w1.cols());
    let pre = pre_act(disc, x);
    let mut out = Vec::with_capacity(x.rows() * d);
    for i in 0..x.rows() {
        for p in 0..d {
            out.push(
                (0..h)
                    .filter(|&j| pre[i * h + j] > 0.0)
                    .map(|j| disc.w1.get2(p, j) * disc.w2.data()[j])
                    .sum(),
            );
        }
    }
    out
}

/// ReLU pattern plus the signs of the input gradient; the norm in the
/// penalty has a kink where the gradient passes through zero.
pub fn penalty_pattern(disc: &DiscriminatorParams, x: &Tensor) -> Vec<bool> {
    let mut p = kink_pattern(disc, &[x]);
    p.extend(logit_input_grad(disc, x).into_iter().map(|g| g > 0.0));
    p
}

/// `mean_i (‖∇ₓ out(x_i)‖ − 1)²` with the input gradient written out by hand.
pub fn plain_penalty(disc: &DiscriminatorParams, x: &Tensor, on_score: bool) -> f64 {
    let d = disc.w1.rows();
    let logits = plain_logits(disc, x);
    let grad = logit_input_grad(disc, x);
    let mut total = 0.0;
    for (i, row) in grad.chunks(d).enumerate() {
        let scale = if on_score {
            1.0
        } else {
            let s = sigmoid(logits[i]);
            s * (1.0 - s)
        };
        let norm2: f64 = row.iter().map(|g| (scale * g).powi(2)).sum();
        total += (norm2.sqrt() - 1.0).powi(2);
    }
    total / x.rows() as f64
}

/// Fourth-order central difference of `f` along coordinate `i` of `x`.
pub fn central_diff(f: &dyn Fn(&Tensor) -> f64, x: &Tensor, i: usize, h: f64) -> f64 {
    let at = |delta: f64| {
        let mut t = x.clone();
        t.data_mut()[i] += delta;
        f(&t)
    };
    (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
}

/// ReLU sign pattern of `disc` on all of `inputs`.
pub fn kink_pattern(disc: &DiscriminatorParams, inputs: &[&Tensor]) -> Vec<bool> {
    inputs.iter().flat_map(|x| pre_act(disc, x).into_iter().map(|v| v > 0.0)).collect()
}

/// Relative error with a floor of 1e-6: below that the difference quotient
/// is dominated by round-off (about `ε·|f|/H ≈ 1e-12` at `H = 1e-3`).
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn disc_with(disc: &DiscriminatorParams, k: usize, t: Tensor) -> DiscriminatorParams {
    let mut out = disc.clone();
    *out.tensors_mut()[k] = t;
    out
}

pub fn gen_with(gen: &GeneratorParams, k: usize, t: Tensor) -> GeneratorParams {
    let mut out = gen.clone();
    *out.tensors_mut()[k] = t;
    out
}

/// Compares `analytic` with central differences of `f` around `x`, skipping
/// coordinates whose probes change the ReLU pattern reported by `pattern`.
pub fn compare(
    analytic: &Tensor,
    x: &Tensor,
    f: &dyn Fn(&Tensor) -> f64,
    pattern: &dyn Fn(&Tensor) -> Vec<bool>,
    h: f64,
) -> f64 {
    let base = pattern(x);
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let kinked = [-2.0, -1.0, 1.0, 2.0].iter().any(|s| {
            let mut t = x.clone();
            t.data_mut()[i] += s * h;
            pattern(&t) != base
        });
        if kinked {
            continue;
        }
        worst = worst.max(rel_err(analytic.data()[i], central_diff(f, x, i, h)));
    }
    worst
}
