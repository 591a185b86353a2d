//! Estimators, goodness-of-fit and Brownian reference values.

use rand::Rng;
use rayon::prelude::*;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::sampler::RngStream;

pub const KS_MIN_SAMPLES: usize = 1000;
pub const DEFAULT_BATCHES: usize = 32;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

fn batches(xs: &[f64]) -> Vec<&[f64]> {
    let b = DEFAULT_BATCHES.min(xs.len());
    (0..b).map(|r| &xs[r * xs.len() / b..(r + 1) * xs.len() / b]).collect()
}

/// Standard error of the mean by batch means.
pub fn batch_means_se(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let means: Vec<f64> = batches(xs).into_iter().map(mean).collect();
    (variance(&means) / means.len() as f64).sqrt()
}

/// Standard error of the sample variance, from per-batch variances.
pub fn batch_variance_se(xs: &[f64]) -> f64 {
    if xs.len() < 4 {
        return 0.0;
    }
    let vars: Vec<f64> = batches(xs).into_iter().map(variance).collect();
    (variance(&vars) / vars.len() as f64).sqrt()
}

/// Sample covariance and its batch-means standard error.
pub fn covariance_with_se(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(xs), mean(ys));
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let n = xs.len() as f64;
    (prods.iter().sum::<f64>() / (n - 1.0), batch_means_se(&prods) * n / (n - 1.0))
}

/// Empirical quantile: the `ceil(p n)`-th order statistic.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

/// CDF of `|N(0, scale^2)|`.
pub fn half_normal_cdf(x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        erf(x / (scale * std::f64::consts::SQRT_2))
    }
}

/// Kolmogorov-Smirnov distance between the sample and a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let n = samples.len();
    if n < KS_MIN_SAMPLES {
        return Err(Error::InsufficientSamples(format!(
            "the KS test needs at least {KS_MIN_SAMPLES} samples, got {n}"
        )));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < n {
        // treat ties as one jump of the empirical CDF
        let mut j = i;
        while j + 1 < n && v[j + 1] == v[i] {
            j += 1;
        }
        let f = cdf(v[i]);
        d = d.max(f - i as f64 / nf).max((j + 1) as f64 / nf - f);
        i = j + 1;
    }
    Ok(d)
}

/// Asymptotic Kolmogorov p-value `P(D_n > d)`.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `E|B_s| = E[L^0_s] = sqrt(2 s / pi)`.
pub fn brownian_abs_mean(s: f64) -> f64 {
    (2.0 * s / std::f64::consts::PI).sqrt()
}

/// `E[max B^ex] = sqrt(pi / 2)` for the normalised excursion.
pub fn excursion_max_mean() -> f64 {
    (std::f64::consts::PI / 2.0).sqrt()
}

/// Monte Carlo `E[inf_{s <= u <= s'} |B_u|]` from simple random walks with
/// `steps` steps per unit time. Returns the estimate and its standard error.
pub fn brownian_abs_inf_mean(s: f64, s2: f64, steps: usize, reps: usize, seed: u64, parallel: bool) -> (f64, f64) {
    let (lo, hi) = if s <= s2 { (s, s2) } else { (s2, s) };
    let (k_lo, k_hi) = ((lo * steps as f64) as usize, (hi * steps as f64) as usize);
    let scale = 1.0 / (steps as f64).sqrt();
    let one = |r: usize| -> f64 {
        let mut rng = RngStream::new(seed, r as u64).rng();
        let mut x: i64 = 0;
        let mut best = i64::MAX;
        let mut k = 0usize;
        while k < k_hi {
            // 64 fair steps per draw
            let bits: u64 = rng.random();
            let take = (k_hi - k).min(64);
            for b in 0..take {
                x += if bits >> b & 1 == 1 { 1 } else { -1 };
                if k + b + 1 >= k_lo {
                    best = best.min(x.abs());
                }
            }
            k += take;
        }
        if k_lo == 0 {
            best = 0;
        }
        best as f64 * scale
    };
    let vals: Vec<f64> = if parallel {
        (0..reps).into_par_iter().map(one).collect()
    } else {
        (0..reps).map(one).collect()
    };
    (mean(&vals), batch_means_se(&vals))
}
