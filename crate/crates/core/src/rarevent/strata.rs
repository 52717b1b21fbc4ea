//! Stratification over the number `N_t^{h}` of jumps above the threshold
//! `h = a·t` on `[0, t]`.
//!
//! Given `N = k`, the large jumps sit at `k` independent uniform times with
//! sizes drawn from `ν` restricted to `(h, ∞)`, independently of the
//! truncated process `ξ^h`. Each stratum is estimated with the same number
//! of replicates from its own stream family and weighted by the exact
//! Poisson probability; strata beyond the stopping index are bounded by the
//! remaining Poisson mass.

use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mc::{par_moments, McConfig, McEstimate, Moments};
use crate::model::{LevyModel, TailSpec};
use crate::pathsim::{open_unit, sample_capped, JumpRecord, Path, Rng};

/// Hard cap on the number of sampled strata.
pub const MAX_STRATA: u32 = 30;

/// Stop once the unsampled Poisson mass times the integrand bound is below
/// this fraction of the running estimate.
pub const TRUNCATION_REL: f64 = 1e-4;

/// Threshold, horizon and Poisson intensity of the large-jump count.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BigJumpSetup<'a> {
    pub model: &'a LevyModel,
    pub tail: &'a TailSpec,
    pub a: f64,
    pub h: f64,
    pub t: f64,
    pub mu: f64,
    pub step: f64,
}

impl<'a> BigJumpSetup<'a> {
    /// Requires a heavy right tail, negative mean and `a·t ≥ x0`.
    pub fn new(model: &'a LevyModel, t: f64, step: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("t must be positive, got {t}")));
        }
        let a = model.require_negative_drift()?;
        let tail = model.require_tail()?;
        let h = a * t;
        if h < tail.x0() {
            return Err(Error::ThresholdBelowCutoff {
                threshold: h,
                cutoff: tail.x0(),
            });
        }
        Ok(Self {
            model,
            tail,
            a,
            h,
            t,
            mu: t * tail.tail_mass(h),
            step,
        })
    }

    /// `ν̄(max(h, level)) / ν̄(h)`: probability that a large jump exceeds `level`.
    #[inline]
    pub fn exceed(&self, level: f64) -> f64 {
        if level <= self.h {
            1.0
        } else {
            self.tail.tail_mass(level) / self.tail.tail_mass(self.h)
        }
    }

    /// Large jump size.
    #[inline]
    pub fn jump_size(&self, rng: &mut Rng) -> f64 {
        self.tail.sample_above(self.h, open_unit(rng))
    }

    /// `k` large jumps at sorted uniform times.
    pub fn draw_jumps(&self, k: u32, rng: &mut Rng) -> Vec<JumpRecord> {
        let mut jumps: Vec<JumpRecord> = (0..k)
            .map(|_| {
                let time = rng.random::<f64>() * self.t;
                let size = self.jump_size(rng);
                JumpRecord { time, size }
            })
            .collect();
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
        jumps
    }

    /// `ξ^h` on `[0, t]` from `start`, with nodes at `breaks`.
    pub fn base(&self, start: f64, breaks: &[f64], rng: &mut Rng) -> Result<Path> {
        sample_capped(self.model, start, self.t, self.h, self.step, breaks, rng)
    }

    /// A draw of `ξ` on `[0, t]` given `N_t^h = k`, with its large jumps.
    pub fn composed(&self, start: f64, k: u32, rng: &mut Rng) -> Result<(Path, Vec<JumpRecord>)> {
        let jumps = self.draw_jumps(k, rng);
        let breaks: Vec<f64> = jumps.iter().map(|j| j.time).collect();
        let base = self.base(start, &breaks, rng)?;
        let path = base.add_jumps(&jumps)?;
        Ok((path, jumps))
    }
}

/// `P{N = k}` for `N ~ Poisson(mu)`.
pub(crate) fn poisson_pmf(mu: f64, k: u32) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let kf = f64::from(k);
    (kf * mu.ln() - mu - ln_factorial(k)).exp()
}

fn ln_factorial(k: u32) -> f64 {
    (1..=k).map(|j| f64::from(j).ln()).sum()
}

/// `P{N > k}` summed term by term (no cancellation for small `mu`).
pub(crate) fn poisson_tail(mu: f64, k: u32) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut j = k + 1;
    let mut term = poisson_pmf(mu, j);
    let stop = k + 60 + (10.0 * mu) as u32;
    while j <= stop {
        total += term;
        j += 1;
        term *= mu / f64::from(j);
        if term < 1e-18 * total && f64::from(j) > mu {
            break;
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumReport {
    pub k: u32,
    pub weight: f64,
    pub n: u64,
    /// Conditional means given `N = k`, one per estimated coordinate.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Per-stratum moments with the Poisson weights.
#[derive(Debug, Clone)]
pub(crate) struct Strata<const D: usize> {
    pub weights: Vec<f64>,
    pub moments: Vec<Moments<D>>,
    pub tail_mass: f64,
    pub bound: [f64; D],
    pub seed: u64,
}

impl<const D: usize> Strata<D> {
    pub fn value(&self, c: usize) -> f64 {
        self.weights
            .iter()
            .zip(&self.moments)
            .map(|(w, m)| w * m.mean(c))
            .sum()
    }

    pub fn cov(&self, c: usize, d: usize) -> f64 {
        self.weights
            .iter()
            .zip(&self.moments)
            .map(|(w, m)| w * w * m.cov(c, d) / m.n() as f64)
            .sum()
    }

    pub fn n(&self) -> u64 {
        self.moments.iter().map(|m| m.n()).sum()
    }

    pub fn truncation(&self, c: usize) -> f64 {
        self.tail_mass * self.bound[c]
    }

    /// Weighted sum for coordinate `c`; the truncation bound enters the
    /// standard error in quadrature.
    pub fn estimate(&self, c: usize) -> McEstimate {
        let se = (self.cov(c, c) + self.truncation(c).powi(2)).sqrt();
        McEstimate::new(self.value(c), se, self.n(), self.seed)
    }

    /// Delta-method estimate of `value(c) / value(d)`.
    pub fn ratio(&self, c: usize, d: usize) -> Result<McEstimate> {
        let den = self.value(d);
        if den == 0.0 {
            return Err(Error::NoEffectiveSamples { n: self.n() });
        }
        let r = self.value(c) / den;
        let var = (self.cov(c, c) - 2.0 * r * self.cov(c, d) + r * r * self.cov(d, d)).max(0.0);
        let trunc = (self.truncation(c) + r.abs() * self.truncation(d)) / den.abs();
        let se = (var / (den * den) + trunc * trunc).sqrt();
        Ok(McEstimate::new(r, se, self.n(), self.seed))
    }

    pub fn reports(&self) -> Vec<StratumReport> {
        self.weights
            .iter()
            .zip(&self.moments)
            .enumerate()
            .map(|(k, (w, m))| StratumReport {
                k: k as u32,
                weight: *w,
                n: m.n(),
                mean: (0..D).map(|c| m.mean(c)).collect(),
                stderr: (0..D).map(|c| m.stderr(c)).collect(),
            })
            .collect()
    }
}

/// Estimates `E[g]` stratum by stratum. `bound[c]` bounds `|g_c|`, and
/// `primary` is the coordinate the stopping rule watches. Strata 0 and 1 are
/// always sampled.
pub(crate) fn run_strata<const D: usize, K>(
    setup: &BigJumpSetup<'_>,
    mc: &McConfig,
    bound: [f64; D],
    primary: usize,
    kernel: K,
) -> Result<Strata<D>>
where
    K: Fn(u32, &mut Rng) -> Result<[f64; D]> + Sync,
{
    let mut strata = Strata {
        weights: Vec::new(),
        moments: Vec::new(),
        tail_mass: 1.0,
        bound,
        seed: mc.seed(),
    };
    for k in 0..=MAX_STRATA {
        let w = poisson_pmf(setup.mu, k);
        let family = mc.stream.child(u64::from(k));
        let m = par_moments::<D, _>(mc.n, &family, |_, rng| kernel(k, rng))?;
        strata.weights.push(w);
        strata.moments.push(m);
        strata.tail_mass = poisson_tail(setup.mu, k);
        if k >= 1 {
            let est = strata.value(primary).abs();
            if strata.tail_mass * bound[primary] <= TRUNCATION_REL * est || strata.tail_mass == 0.0 {
                break;
            }
        }
    }
    Ok(strata)
}

/// Stratified result with its per-stratum breakdown.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedEstimate {
    pub estimate: McEstimate,
    pub threshold: f64,
    pub poisson_mean: f64,
    pub strata: Vec<StratumReport>,
    /// Bound on the contribution of unsampled strata.
    pub truncation_bound: f64,
}

impl StratifiedEstimate {
    pub(crate) fn from_strata<const D: usize>(setup: &BigJumpSetup<'_>, s: &Strata<D>, c: usize) -> Self {
        Self {
            estimate: s.estimate(c),
            threshold: setup.h,
            poisson_mean: setup.mu,
            strata: s.reports(),
            truncation_bound: s.truncation(c),
        }
    }

    /// Share of the estimate from stratum `k`.
    pub fn stratum_share(&self, k: u32) -> f64 {
        self.strata
            .iter()
            .find(|s| s.k == k)
            .map_or(0.0, |s| s.weight * s.mean[0] / self.estimate.value)
    }
}
