mod common;

use common::*;
use ganlab::losses::{discriminator_loss, generator_loss, gradient_penalty, PenaltyMode};
use ganlab::models::{discriminator_prob, generator_forward, generator_moments};
use ganlab::rng::{stream, Stream};
use ganlab::{GanVariant, PenaltyConfig, Tape, Tensor};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

#[test]
fn moments_match_a_million_samples() {
    let mut r = rng(5);
    let mut gen = random_gen(&mut r, 2, 3, 1.0);
    gen.latent_sigma = 0.7;
    let n = 1_000_000;
    let z = normal(&mut r, &[n, 2], gen.latent_sigma);
    let x = generator_forward(&gen, &z).unwrap();
    let m = generator_moments(&gen);
    let d = 3;
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get2(i, j)).sum::<f64>() / n as f64).collect();
    let sig = |i: usize, j: usize| m.sigma.get2(i, j);
    for j in 0..d {
        let se = (sig(j, j) / n as f64).sqrt();
        assert!((mean[j] - m.mu.data()[j]).abs() < 3.0 * se, "mean {j}");
    }
    for a in 0..d {
        for b in 0..d {
            let c = (0..n).map(|i| (x.get2(i, a) - mean[a]) * (x.get2(i, b) - mean[b])).sum::<f64>()
                / (n - 1) as f64;
            let se = ((sig(a, a) * sig(b, b) + sig(a, b).powi(2)) / n as f64).sqrt();
            assert!((c - sig(a, b)).abs() < 3.0 * se, "cov ({a},{b}): {c} vs {}", sig(a, b));
        }
    }
}

fn numeric_rank(m: &Tensor) -> usize {
    let dm = DMatrix::from_row_slice(m.rows(), m.cols(), m.data());
    let eig = SymmetricEigen::new(dm);
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    eig.eigenvalues.iter().filter(|v| v.abs() > 1e-10 * top).count()
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_rank_is_weight_rank(seed in any::<u64>(), g in 1usize..5, d in 1usize..6) {
        let gen = random_gen(&mut rng(seed), g, d, 1.0);
        let sigma = generator_moments(&gen).sigma;
        let wtw = gen.w.matmul(&gen.w.transpose());
        prop_assert_eq!(numeric_rank(&sigma), numeric_rank(&wtw));
        prop_assert!(numeric_rank(&sigma) <= g.min(d));
    }

    #[test]
    fn logit_is_piecewise_linear_and_prob_monotone(seed in any::<u64>(), d in 1usize..4, h in 1usize..8) {
        let mut r = rng(seed);
        let disc = random_disc(&mut r, d, h, 1.0);
        let start = normal(&mut r, &[d], 1.0);
        let dir = normal(&mut r, &[d], 1.0);
        let n = 201;
        let pts: Vec<f64> = (0..n)
            .flat_map(|i| {
                let t = -3.0 + 6.0 * i as f64 / (n - 1) as f64;
                (0..d).map(move |j| (j, t)).collect::<Vec<_>>()
            })
            .map(|(j, t)| start.data()[j] + t * dir.data()[j])
            .collect();
        let x = Tensor::matrix(n, d, pts);
        let logits = disc.logits(&x).unwrap();
        let pattern = kink_pattern(&disc, &[&x]);
        for i in 1..n - 1 {
            let same = (0..h).all(|j| {
                let p = |k: usize| pattern[k * h + j];
                p(i - 1) == p(i) && p(i) == p(i + 1)
            });
            if same {
                let second = logits[i + 1] - 2.0 * logits[i] + logits[i - 1];
                prop_assert!(second.abs() < 1e-12 * logits.iter().fold(1.0_f64, |a, v| a.max(v.abs())));
            }
        }
        let probs = discriminator_prob(&disc, &x).unwrap();
        let mut pairs: Vec<(f64, f64)> = logits.into_iter().zip(probs).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        prop_assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn penalty_is_row_permutation_invariant(seed in any::<u64>(), d in 1usize..4, h in 1usize..8, n in 2usize..8, on_score in any::<bool>()) {
        let mut r = rng(seed);
        let disc = random_disc(&mut r, d, h, 1.0);
        let x = normal(&mut r, &[n, d], 1.0);
        let rows: Vec<Vec<f64>> = (0..n).rev().map(|i| x.row(i).to_vec()).collect();
        let rev = Tensor::from_rows(&rows);
        let value = |x: Tensor| {
            let mut tape = Tape::new();
            let dn = disc.register(&mut tape);
            let xn = tape.constant(x);
            let gp = gradient_penalty(&mut tape, &dn, xn, on_score).unwrap();
            tape.value(gp).item()
        };
        let (a, b) = (value(x), value(rev));
        prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
    }

    #[test]
    fn zero_lambda_matches_ns_bit_for_bit(seed in any::<u64>(), d in 1usize..4, n in 1usize..6, dragan in any::<bool>()) {
        let mut r = rng(seed);
        let disc = random_disc(&mut r, d, 5, 0.5);
        let real = normal(&mut r, &[n, d], 1.0);
        let fake = normal(&mut r, &[n, d], 1.0);
        let variant = if dragan { GanVariant::DraganNs } else { GanVariant::GanGp };
        let loss = |v: GanVariant| {
            let mut tape = Tape::new();
            let dn = disc.register(&mut tape);
            let rn = tape.constant(real.clone());
            let f = tape.constant(fake.clone());
            let pen = PenaltyConfig { lambda: 0.0, ..Default::default() };
            let mut prng = stream(seed, Stream::Penalty);
            let l = discriminator_loss(v, &mut tape, &dn, rn, f, &pen, Some(&mut prng)).unwrap();
            tape.value(l).item()
        };
        prop_assert_eq!(loss(variant).to_bits(), loss(GanVariant::NonSaturating).to_bits());
        prop_assert!(variant.penalty_mode().is_some());
        prop_assert_eq!(variant.penalty_mode() == Some(PenaltyMode::Dragan), dragan);
    }

    #[test]
    fn wgan_costs_sum_to_minus_mean_real_score(seed in any::<u64>(), d in 1usize..4, n in 1usize..6) {
        let mut r = rng(seed);
        let disc = random_disc(&mut r, d, 6, 1.0);
        let real = normal(&mut r, &[n, d], 1.0);
        let fake = normal(&mut r, &[n, d], 1.0);
        let mut tape = Tape::new();
        let dn = disc.register(&mut tape);
        let rn = tape.constant(real.clone());
        let f = tape.constant(fake);
        let critic = discriminator_loss(GanVariant::WganClip, &mut tape, &dn, rn, f, &PenaltyConfig::default(), None).unwrap();
        let gen = generator_loss(GanVariant::WganClip, &mut tape, &dn, f).unwrap();
        let sum = tape.value(critic).item() + tape.value(gen).item();
        let mean_real = plain_logits(&disc, &real).iter().sum::<f64>() / n as f64;
        prop_assert!((sum + mean_real).abs() < 1e-12 * mean_real.abs().max(1.0));
    }
}

/// Single-row fake batch with `D(x) = eps` exactly at the chosen point.
#[test]
fn saturation_ratio_of_generator_gradients() {
    for eps in [0.5_f64, 0.1, 0.01] {
        let mut disc = random_disc(&mut rng(17), 2, 6, 1.0);
        let x = Tensor::matrix(1, 2, vec![0.3, -0.4]);
        let shift = (eps / (1.0 - eps)).ln() - plain_logits(&disc, &x)[0];
        disc.b2 = Tensor::scalar(disc.b2.item() + shift);
        assert!((sigmoid(plain_logits(&disc, &x)[0]) - eps).abs() < 1e-14);

        let grad = |v: GanVariant| {
            let mut tape = Tape::new();
            let dn = disc.register(&mut tape);
            let xn = tape.constant(x.clone());
            let l = generator_loss(v, &mut tape, &dn, xn).unwrap();
            let g = tape.gradient(l, &[xn]).unwrap()[0];
            tape.value(g).data().to_vec()
        };
        let ns = grad(GanVariant::NonSaturating);
        let mm = grad(GanVariant::Minimax);
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let ratio = norm(&ns) / norm(&mm);
        let want = (1.0 - eps) / eps;
        assert!((ratio - want).abs() < 1e-10 * want, "eps {eps}: {ratio} vs {want}");
    }
}
