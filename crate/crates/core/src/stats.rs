//! Order statistics over per-run final distances.

use serde::{Deserialize, Serialize};

/// Aggregate of the surviving runs of one sweep cell. All fields are NaN
/// when no run survived.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub failed: usize,
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
}

/// Quantile of already sorted data, linear interpolation between order
/// statistics at position `q·(n−1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!((0.0..=1.0).contains(&q), "quantile level outside [0, 1]");
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Statistics over `values`; `failed` is carried through as a count.
pub fn summarize(values: &[f64], failed: usize) -> Summary {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = if n == 0 { f64::NAN } else { v.iter().sum::<f64>() / n as f64 };
    Summary {
        n,
        failed,
        mean,
        median: quantile_sorted(&v, 0.5),
        q25: quantile_sorted(&v, 0.25),
        q75: quantile_sorted(&v, 0.75),
        min: v.first().copied().unwrap_or(f64::NAN),
        max: v.last().copied().unwrap_or(f64::NAN),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_fills_every_field() {
        let s = summarize(&[2.5], 0);
        assert_eq!((s.mean, s.median, s.q25, s.q75, s.min, s.max), (2.5, 2.5, 2.5, 2.5, 2.5, 2.5));
    }

    #[test]
    fn interpolated_quartiles() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0], 1);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.q25, 1.75);
        assert_eq!(s.q75, 3.25);
        assert_eq!(s.failed, 1);
        assert_eq!(s.n, 4);
    }

    #[test]
    fn empty_is_nan() {
        let s = summarize(&[], 3);
        assert!(s.median.is_nan() && s.mean.is_nan());
        assert_eq!(s.failed, 3);
    }
}
