//! Small statistics toolbox: batch-means confidence intervals, the stability
//! probe, least squares, and deterministic seed derivation.

use crate::error::{Error, Result};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// SplitMix64 mixing step; the published integer hash used to derive child
/// seeds from (base seed, index).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child seed for one replication.
pub fn child_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Mean and 95% half-width from the method of batch means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMeansCi {
    pub mean: f64,
    pub half_width: f64,
    pub batches: usize,
}

/// Splits `series` into `batches` contiguous batches and returns the batch
/// means' t-interval at 95%.
pub fn batch_means_ci(series: &[f64], batches: usize) -> Result<BatchMeansCi> {
    if batches < 2 {
        return Err(Error::InvalidParameter("need at least 2 batches".into()));
    }
    if series.len() < 2 * batches {
        return Err(Error::SeriesTooShort(format!(
            "{} samples cannot fill {} batches",
            series.len(),
            batches
        )));
    }
    let means = batch_means(series, batches);
    ci_of_means(&means)
}

/// Per-batch means over contiguous, equal-size batches (the tail remainder is
/// folded into the last batch).
pub fn batch_means(series: &[f64], batches: usize) -> Vec<f64> {
    let base = series.len() / batches;
    let mut out = Vec::with_capacity(batches);
    for b in 0..batches {
        let start = b * base;
        let end = if b + 1 == batches { series.len() } else { start + base };
        let chunk = &series[start..end];
        out.push(chunk.iter().sum::<f64>() / chunk.len() as f64);
    }
    out
}

/// 95% t-interval over a set of (approximately independent) means.
pub fn ci_of_means(means: &[f64]) -> Result<BatchMeansCi> {
    let b = means.len();
    if b < 2 {
        return Err(Error::SeriesTooShort("need at least 2 means".into()));
    }
    let mean = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (b as f64 - 1.0);
    let stderr = (var / b as f64).sqrt();
    let t = t_quantile_975(b as f64 - 1.0);
    Ok(BatchMeansCi {
        mean,
        half_width: t * stderr,
        batches: b,
    })
}

/// Two-sided 95% Student-t quantile.
pub fn t_quantile_975(df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("valid t distribution")
        .inverse_cdf(0.975)
}

/// Ordinary least squares of y against x: (slope, standard error of slope).
pub fn linear_regression(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return (0.0, 0.0);
    }
    let slope = sxy / sxx;
    let dof = (xs.len().saturating_sub(2)).max(1) as f64;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let pred = my + slope * (x - mx);
            (y - pred) * (y - pred)
        })
        .sum();
    let stderr = (sse / dof / sxx).sqrt();
    (slope, stderr)
}

/// Stability verdict from windowed total-queue means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub stable: bool,
    /// Least-squares growth in cells per slot.
    pub slope: f64,
}

/// Regresses window means against window center slots. Unstable iff the
/// slope exceeds `threshold` cells/slot with a significant positive trend.
///
/// `window_len` is the number of slots each mean covers; pass 1.0 when the
/// series is already per-slot.
pub fn stability_probe(window_means: &[f64], window_len: f64, threshold: f64) -> StabilityVerdict {
    assert!(
        window_means.len() >= 10,
        "stability probe needs at least 10 windows"
    );
    let xs: Vec<f64> = (0..window_means.len())
        .map(|w| (w as f64 + 0.5) * window_len)
        .collect();
    let (slope, stderr) = linear_regression(&xs, window_means);
    let significant = stderr == 0.0 || slope / stderr > 2.0;
    StabilityVerdict {
        stable: !(slope > threshold && significant),
        slope,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_series_has_zero_width() {
        let s = vec![3.0; 100];
        let ci = batch_means_ci(&s, 20).unwrap();
        assert_abs_diff_eq!(ci.mean, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ci.half_width, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn alternating_series_mean() {
        let s: Vec<f64> = (0..1000).map(|k| (k % 2) as f64).collect();
        let ci = batch_means_ci(&s, 20).unwrap();
        assert_abs_diff_eq!(ci.mean, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn short_series_rejected() {
        assert!(batch_means_ci(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(batch_means_ci(&vec![0.0; 100], 1).is_err());
    }

    #[test]
    fn probe_constant_is_stable() {
        let v = stability_probe(&[5.0; 20], 1.0, 0.01);
        assert!(v.stable);
        assert_abs_diff_eq!(v.slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn probe_linear_growth_is_unstable() {
        let means: Vec<f64> = (0..20).map(|w| w as f64).collect();
        let v = stability_probe(&means, 1.0, 0.01);
        assert!(!v.stable);
        assert_abs_diff_eq!(v.slope, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn probe_noise_is_stable() {
        // Zero-mean noise has no significant trend.
        let means: Vec<f64> = (0..50)
            .map(|w| 100.0 + ((w * 2654435761u64 % 97) as f64) / 97.0)
            .collect();
        let v = stability_probe(&means, 1.0, 0.01);
        assert!(v.stable, "slope {}", v.slope);
    }

    #[test]
    fn child_seeds_distinct() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..1000 {
            assert!(seen.insert(child_seed(42, i)));
        }
    }
}
