use ganlab::analysis::{
    landscape_scan, linspace, optimal_discriminator, pointwise_objective, train_pointwise_disc, DiscSource,
    TwoGaussianSetup,
};

/// `1 − D*(x)` without cancellation: the optimal discriminator with the two
/// densities swapped.
fn complement(s: &TwoGaussianSetup, x: f64) -> f64 {
    let swapped = TwoGaussianSetup { mu1: s.mu2, mu2: s.mu1, s1: s.s2, s2: s.s1, grid: s.grid.clone() };
    optimal_discriminator(&swapped, x)
}

/// Pointwise objective with `D` and `1 − D` passed separately.
fn objective(s: &TwoGaussianSetup, x: f64, d: f64, c: f64) -> f64 {
    let term = |p: f64, v: f64| if p == 0.0 { 0.0 } else { -p * v.ln() };
    term(s.p_data(x), d) + term(s.p_model(x), c)
}
use proptest::prelude::*;

fn setup() -> impl Strategy<Value = TwoGaussianSetup> {
    (-3.0f64..3.0, -3.0f64..3.0, 0.1f64..1.5, 0.1f64..1.5).prop_map(|(mu1, mu2, s1, s2)| {
        TwoGaussianSetup { mu1, mu2, s1, s2, grid: linspace(-4.0, 4.0, 161) }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn derivative_identity_on_closed_form(s in setup()) {
        let scan = landscape_scan(&s, DiscSource::ClosedForm).unwrap();
        for r in &scan.rows {
            let lhs = r.dlns_dx.abs() * r.d;
            let rhs = r.dlmm_dx.abs() * complement(&s, r.x);
            prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()).max(1e-300), "x {}: {lhs} vs {rhs}", r.x);
        }
    }

    #[test]
    fn optimum_is_pointwise_minimal(s in setup()) {
        for &x in &s.grid {
            let d = optimal_discriminator(&s, x);
            let c = complement(&s, x);
            prop_assert!((d + c - 1.0).abs() < 1e-15);
            let at = objective(&s, x, d, c);
            for delta in [-0.01, 0.01] {
                let (dm, cm) = (d + delta, c - delta);
                if dm <= 0.0 || cm <= 0.0 {
                    continue;
                }
                prop_assert!(objective(&s, x, dm, cm) >= at, "x {x}");
            }
        }
    }

    #[test]
    fn library_objective_agrees_away_from_saturation(s in setup()) {
        for &x in &s.grid {
            let d = optimal_discriminator(&s, x);
            if d > 1e-3 && d < 1.0 - 1e-3 {
                let want = objective(&s, x, d, complement(&s, x));
                let got = pointwise_objective(&s, x, d);
                prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn saturated_points_have_large_gradient_ratio(s in setup()) {
        let scan = landscape_scan(&s, DiscSource::ClosedForm).unwrap();
        for r in scan.rows.iter().filter(|r| r.dlmm_dx != 0.0) {
            if r.d < 0.01 {
                prop_assert!(r.dlns_dx.abs() / r.dlmm_dx.abs() >= 99.0 * (1.0 - 1e-6));
            }
            if r.d > 0.99 {
                prop_assert!(r.dlns_dx.abs() <= r.dlmm_dx.abs() / 99.0 * (1.0 + 1e-6));
            }
        }
    }
}

#[test]
fn trained_discriminator_approaches_the_optimum() {
    let s = TwoGaussianSetup::default();
    for seed in [0u64, 7, 42] {
        let disc = train_pointwise_disc(&s, 5000, 1e-2, seed).unwrap();
        let scan = landscape_scan(&s, DiscSource::Trained(&disc)).unwrap();
        let at = |x: f64| scan.rows.iter().find(|r| (r.x - x).abs() < 1e-9).unwrap().d;
        assert!(at(s.mu1) > 0.9, "seed {seed}: D at data mean {}", at(s.mu1));
        assert!(at(s.mu2) < 0.1, "seed {seed}: D at model mean {}", at(s.mu2));
        let mad = scan.rows.iter().map(|r| (r.d - optimal_discriminator(&s, r.x)).abs()).sum::<f64>()
            / scan.rows.len() as f64;
        assert!(mad < 0.05, "seed {seed}: mean absolute deviation {mad}");
    }
}
