//! Goodness-of-fit tests.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::rarevent::poisson_pmf;

/// Minimum sample size for the Kolmogorov–Smirnov tests.
pub const KS_MIN_SAMPLES: usize = 50;

/// Minimum total count for [`chisq_poisson`].
pub const CHISQ_MIN_TOTAL: u64 = 1000;

/// Minimum expected count per pooled bin.
pub const CHISQ_MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// `P{K > λ}` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Jacobi form converges fast for small arguments
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (c * m * m).exp()
            })
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut total = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        total += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample KS statistic against `cdf` with the asymptotic p-value.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: KS_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, n),
        n: xs.len(),
    })
}

/// Two-sample KS statistic with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    for s in [a, b] {
        if s.len() < KS_MIN_SAMPLES {
            return Err(Error::TooFewSamples {
                needed: KS_MIN_SAMPLES,
                got: s.len(),
            });
        }
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, n * m / (n + m)),
        n: x.len() + y.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
    /// `(first count, observed, expected)` per pooled bin; the last bin is
    /// open to the right.
    pub bins: Vec<(usize, u64, f64)>,
}

/// Pearson chi-square of a count histogram (`counts[k]` = number of draws
/// equal to `k`) against Poisson(`rate`), pooling adjacent bins until each
/// expects at least five.
pub fn chisq_poisson(counts: &[u64], rate: f64) -> Result<ChiSquareResult> {
    let total: u64 = counts.iter().sum();
    if counts.is_empty() || total == 0 {
        return Err(Error::Degenerate("empty histogram".into()));
    }
    if total < CHISQ_MIN_TOTAL {
        return Err(Error::TooFewSamples {
            needed: CHISQ_MIN_TOTAL as usize,
            got: total as usize,
        });
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!("rate must be positive, got {rate}")));
    }
    let n = total as f64;
    let mut bins: Vec<(usize, u64, f64)> = Vec::new();
    let (mut start, mut obs, mut exp, mut used) = (0usize, 0u64, 0.0, 0.0);
    for (k, &c) in counts.iter().enumerate() {
        let p = poisson_pmf(rate, k as u32);
        obs += c;
        exp += n * p;
        used += p;
        if exp >= CHISQ_MIN_EXPECTED {
            bins.push((start, obs, exp));
            start = k + 1;
            obs = 0;
            exp = 0.0;
        }
    }
    let rest = n * (1.0 - used).max(0.0);
    match bins.last_mut() {
        Some(last) if exp + rest < CHISQ_MIN_EXPECTED => {
            last.1 += obs;
            last.2 += exp + rest;
        }
        _ => bins.push((start, obs, exp + rest)),
    }
    if bins.len() < 2 {
        return Err(Error::Degenerate("pooling left fewer than two bins".into()));
    }
    let statistic: f64 = bins.iter().map(|&(_, o, e)| (o as f64 - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let p_value = ChiSquared::new(dof as f64)
        .map_err(|e| Error::Degenerate(e.to_string()))?
        .sf(statistic);
    Ok(ChiSquareResult {
        statistic,
        p_value,
        dof,
        bins,
    })
}
