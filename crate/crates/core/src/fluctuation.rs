//! Passage-time moments, occupation integrals and the renewal functions
//! they determine, plus the right-hand sides of the survival limits.
//!
//! The renewal functions enter only through the occupation identity
//! `O(x, y) = ∫_0^∞ P{S_s ≤ x, S_s − ξ_s ≤ y} ds = C₀ V(x) V̂(y)`, so `V` and
//! `V̂` are fixed up to reciprocal constants; every limit below uses them in
//! combinations where that constant cancels.

use rand::Rng as _;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::mc::{par_collect, par_diag, par_moments, McConfig, McEstimate, Moments};
use crate::model::LevyModel;
use crate::pathsim::{sample_path_with, walk_to_passage, Path};
use crate::quad::laplace_half_line;
use crate::rarevent::{cell_moments, estimate_p_xi1_exceeds, run_strata, BigJumpSetup, OneJump, StratifiedEstimate};

/// Censored fraction above which the passage horizon is flagged as short.
pub const CENSORING_WARN: f64 = 0.10;

/// Share of an occupation integral from the last tenth of the horizon above
/// which the integral is reported as not converged.
pub const LATE_SHARE_LIMIT: f64 = 0.05;

/// `max(50/a, 20·x)`.
pub fn default_horizon(a: f64, x: f64) -> f64 {
    (50.0 / a).max(20.0 * x)
}

fn require_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be non-negative, got {v}")))
    }
}

fn require_horizon(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("horizon must be positive and finite, got {h}")))
    }
}

/// Mean of `τ_0` from `x` with censoring bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanTau {
    /// Mean of `τ_0 ∧ horizon`; the standard error includes the censoring
    /// bound `censored_fraction · horizon` in quadrature.
    pub estimate: McEstimate,
    pub censored_fraction: f64,
    pub horizon: f64,
    pub horizon_warning: bool,
}

/// Passage times from `x` censored at `horizon`, with the censoring flag.
pub(crate) struct TauSummary {
    pub mean: McEstimate,
    /// Coordinates: `τ∧H`, `τ∧T`, `τ·1{τ≤T}`, `1{τ>H}`.
    pub moments: Moments<4>,
    pub censored_fraction: f64,
    pub horizon: f64,
}

pub(crate) fn estimate_tau_summary(
    model: &LevyModel,
    x: f64,
    horizon: f64,
    window: f64,
    mc: &McConfig,
) -> Result<TauSummary> {
    mc.require(2)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(domain(format!("start x must be positive, got {x}")));
    }
    require_horizon(horizon)?;
    model.require_negative_drift()?;
    let m = par_moments::<4, _>(mc.n, &mc.stream, |_, rng| {
        let tau = walk_to_passage(model, x, 0.0, horizon, f64::INFINITY, mc.step, rng)?;
        let (capped, censored) = match tau {
            Some(t) => (t, 0.0),
            None => (horizon, 1.0),
        };
        let below = if censored == 0.0 && capped <= window { capped } else { 0.0 };
        Ok([capped, capped.min(window), below, censored])
    })?;
    let censored_fraction = m.mean(3);
    let base = m.estimate(0, mc.seed());
    let se = base.stderr.hypot(censored_fraction * horizon);
    Ok(TauSummary {
        mean: McEstimate { stderr: se, ..base },
        moments: m,
        censored_fraction,
        horizon,
    })
}

/// `E_x[τ_0]` by plain Monte Carlo of the first passage below zero.
pub fn estimate_mean_tau(model: &LevyModel, x: f64, horizon: f64, mc: &McConfig) -> Result<MeanTau> {
    let s = estimate_tau_summary(model, x, horizon, horizon, mc)?;
    Ok(MeanTau {
        estimate: s.mean,
        censored_fraction: s.censored_fraction,
        horizon: s.horizon,
        horizon_warning: s.censored_fraction > CENSORING_WARN,
    })
}

/// Passage times from `x` in replicate order; censored paths return `horizon`.
pub fn sample_passage_times(model: &LevyModel, x: f64, horizon: f64, mc: &McConfig) -> Result<Vec<f64>> {
    if !(x > 0.0) {
        return Err(domain(format!("start x must be positive, got {x}")));
    }
    require_horizon(horizon)?;
    model.require_negative_drift()?;
    par_collect(mc.n, &mc.stream, |_, rng| {
        Ok(walk_to_passage(model, x, 0.0, horizon, f64::INFINITY, mc.step, rng)?.unwrap_or(horizon))
    })
}

/// Length of `{u ∈ [a, b] : lo ≤ v(u) ≤ hi}` for `v` linear from `va` to `vb`.
fn linear_time_in(a: f64, b: f64, va: f64, vb: f64, lo: f64, hi: f64) -> f64 {
    if b <= a || hi < lo {
        return 0.0;
    }
    if va == vb {
        return if va >= lo && va <= hi { b - a } else { 0.0 };
    }
    let (vmin, vmax) = if va < vb { (va, vb) } else { (vb, va) };
    let l = lo.max(vmin);
    let h = hi.min(vmax);
    if h <= l {
        return 0.0;
    }
    (b - a) * (h - l) / (vmax - vmin)
}

/// Adds `∫ 1{S_s ≤ x, S_s − ξ_s ≤ y} ds` over `[0, horizon]` for every pair
/// to `out[i]`, and the part over `[0.9·horizon, horizon]` to `out[n + i]`.
fn occupation_along(path: &Path, horizon: f64, pairs: &[(f64, f64)], out: &mut [f64]) {
    let late_from = 0.9 * horizon;
    let np = pairs.len();
    let mut sup = path.start();
    let xmax = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    for w in path.grid().windows(2) {
        let (p, q) = (w[0], w[1]);
        if p.time >= horizon || sup > xmax {
            break;
        }
        sup = sup.max(p.value);
        let (t1, v1) = if q.time > horizon {
            (horizon, p.value + (q.left - p.value) * (horizon - p.time) / (q.time - p.time))
        } else {
            (q.time, q.left)
        };
        let (t0, v0) = (p.time, p.value);
        // split where the segment first overtakes the running supremum
        let cross = if v1 > sup && v1 > v0 {
            t0 + (t1 - t0) * (sup - v0) / (v1 - v0)
        } else {
            t1
        };
        let v_cross = if cross < t1 { sup } else { v1 };
        for (i, &(x, y)) in pairs.iter().enumerate() {
            let mut pieces = [(0.0, 0.0, 0.0); 2];
            if sup <= x {
                pieces[0] = (t0, cross, linear_time_in(t0, cross, v0, v_cross, sup - y, f64::INFINITY));
            }
            if cross < t1 {
                pieces[1] = (cross, t1, linear_time_in(cross, t1, v_cross, v1, f64::NEG_INFINITY, x));
            }
            for &(a, b, len) in &pieces {
                if len == 0.0 {
                    continue;
                }
                out[i] += len;
                if b > late_from {
                    out[np + i] += len * ((b - late_from.max(a)) / (b - a)).clamp(0.0, 1.0);
                }
            }
        }
        if cross < t1 {
            sup = v1;
        }
    }
}

/// Occupation integrals on a list of `(x, y)` pairs, from shared paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationEstimates {
    pub pairs: Vec<(f64, f64)>,
    pub values: Vec<McEstimate>,
    pub late_share: Vec<f64>,
    pub horizon: f64,
}

pub(crate) fn occupation_moments(
    model: &LevyModel,
    pairs: &[(f64, f64)],
    horizon: f64,
    mc: &McConfig,
) -> Result<crate::mc::DiagMoments> {
    mc.require(2)?;
    require_horizon(horizon)?;
    for &(x, y) in pairs {
        require_nonneg("x", x)?;
        require_nonneg("y", y)?;
    }
    let n = pairs.len();
    par_diag(mc.n, 2 * n, &mc.stream, |_, rng, out| {
        let path = sample_path_with(model, 0.0, horizon, mc.step, rng)?;
        occupation_along(&path, horizon, pairs, out);
        Ok(())
    })
}

/// [`estimate_occupation_product`] on several pairs with shared paths.
pub fn estimate_occupations(
    model: &LevyModel,
    pairs: &[(f64, f64)],
    horizon: f64,
    mc: &McConfig,
) -> Result<OccupationEstimates> {
    model.require_negative_drift()?;
    let m = occupation_moments(model, pairs, horizon, mc)?;
    let n = pairs.len();
    let values: Vec<McEstimate> = (0..n).map(|i| m.estimate(i, mc.seed())).collect();
    let late_share: Vec<f64> = (0..n)
        .map(|i| if m.mean(i) > 0.0 { m.mean(n + i) / m.mean(i) } else { 0.0 })
        .collect();
    if let Some((i, s)) = late_share.iter().enumerate().find(|(_, &s)| s > LATE_SHARE_LIMIT) {
        return Err(Error::Inapplicable(format!(
            "occupation integral at {:?} has {:.1}% of its mass in the last tenth of the horizon {horizon}",
            pairs[i],
            100.0 * s
        )));
    }
    Ok(OccupationEstimates {
        pairs: pairs.to_vec(),
        values,
        late_share,
        horizon,
    })
}

/// `∫_0^∞ P{S_s ≤ x, S_s − ξ_s ≤ y} ds` from `ξ_0 = 0`, integrated exactly
/// along each path up to `horizon`.
pub fn estimate_occupation_product(
    model: &LevyModel,
    x: f64,
    y: f64,
    horizon: f64,
    mc: &McConfig,
) -> Result<McEstimate> {
    Ok(estimate_occupations(model, &[(x, y)], horizon, mc)?.values[0])
}

/// Rank-one check `O(x1,y1) O(x2,y2) = O(x1,y2) O(x2,y1)` on shared paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossRatio {
    /// `ln O11 + ln O22 − ln O12 − ln O21` with its delta-method error.
    pub log_cross_ratio: McEstimate,
    /// `O11, O12, O21, O22`.
    pub values: [McEstimate; 4],
}

pub fn occupation_cross_ratio(
    model: &LevyModel,
    xs: (f64, f64),
    ys: (f64, f64),
    horizon: f64,
    mc: &McConfig,
) -> Result<CrossRatio> {
    mc.require(2)?;
    require_horizon(horizon)?;
    model.require_negative_drift()?;
    let pairs = [(xs.0, ys.0), (xs.0, ys.1), (xs.1, ys.0), (xs.1, ys.1)];
    let m = par_moments::<4, _>(mc.n, &mc.stream, |_, rng| {
        let path = sample_path_with(model, 0.0, horizon, mc.step, rng)?;
        let mut out = [0.0; 8];
        occupation_along(&path, horizon, &pairs, &mut out);
        Ok([out[0], out[1], out[2], out[3]])
    })?;
    let means: Vec<f64> = (0..4).map(|i| m.mean(i)).collect();
    if means.iter().any(|&v| v <= 0.0) {
        return Err(Error::NoEffectiveSamples { n: m.n() });
    }
    let g = [1.0 / means[0], -1.0 / means[1], -1.0 / means[2], 1.0 / means[3]];
    let mut var = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            var += g[i] * g[j] * m.cov(i, j);
        }
    }
    let value = means[0].ln() + means[3].ln() - means[1].ln() - means[2].ln();
    let seed = mc.seed();
    Ok(CrossRatio {
        log_cross_ratio: McEstimate::new(value, (var.max(0.0) / m.n() as f64).sqrt(), m.n(), seed),
        values: [m.estimate(0, seed), m.estimate(1, seed), m.estimate(2, seed), m.estimate(3, seed)],
    })
}

/// `C₀ = exp{−∫_0^∞ (1 − e^{−t}) P{ξ_t = 0} dt/t}`: one unless the process
/// is a driftless compound Poisson process of total rate `λ`, where
/// `P{ξ_t = 0} = e^{−λt}` and the integral is `ln((λ+1)/λ)`.
pub fn c0(model: &LevyModel) -> Result<f64> {
    if model.drift() != 0.0 || model.diffusion_sigma() > 0.0 {
        return Ok(1.0);
    }
    let rate = model.jump_rate() + model.left_rate();
    if rate == 0.0 {
        return Err(Error::Degenerate("the zero process has C0 = 0".into()));
    }
    Ok(rate / (rate + 1.0))
}

/// Weighted pool-adjacent-violators projection onto non-decreasing vectors.
pub(crate) fn isotonic(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() >= 2 {
            let (v2, w2, c2) = blocks[blocks.len() - 1];
            let (v1, w1, c1) = blocks[blocks.len() - 2];
            if v1 <= v2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().expect("two blocks") = ((v1 * w1 + v2 * w2) / w, w, c1 + c2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, _, c)| std::iter::repeat_n(v, c))
        .collect()
}

/// `V` and `V̂` on a common grid, normalized by `C₀ V(z) V̂(z) = O(z, z)`
/// at the reference level `z`, then projected onto non-decreasing sequences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenewalEstimate {
    pub grid: Vec<f64>,
    pub v: Vec<f64>,
    pub v_stderr: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub v_hat_stderr: Vec<f64>,
    pub c0: f64,
    pub horizon: f64,
    pub n: u64,
    pub reference: f64,
    /// Mean `|raw − projected| / stderr` over both functions.
    pub projection_distance: f64,
}

/// Grid `0, step, …, grid_max` with `points` nodes and reference level
/// `reference` (clamped into the grid).
pub fn estimate_renewal(
    model: &LevyModel,
    grid_max: f64,
    points: usize,
    reference: f64,
    horizon: f64,
    mc: &McConfig,
) -> Result<RenewalEstimate> {
    if points < 2 || !(grid_max > 0.0) {
        return Err(domain("renewal grid needs at least two points and a positive extent"));
    }
    let c0 = c0(model)?;
    let z = reference.clamp(0.0, grid_max);
    let grid: Vec<f64> = (0..points).map(|i| grid_max * i as f64 / (points - 1) as f64).collect();
    let mut pairs: Vec<(f64, f64)> = grid.iter().map(|&x| (x, z)).collect();
    pairs.extend(grid.iter().map(|&y| (z, y)));
    pairs.push((z, z));
    let occ = estimate_occupations(model, &pairs, horizon, mc)?;
    let ozz = occ.values[2 * points].value;
    if ozz <= 0.0 {
        return Err(Error::NoEffectiveSamples { n: mc.n });
    }
    let norm = (c0 * ozz).sqrt();
    let take = |range: std::ops::Range<usize>| -> (Vec<f64>, Vec<f64>) {
        occ.values[range].iter().map(|e| (e.value / norm, e.stderr / norm)).unzip()
    };
    let (v_raw, v_se) = take(0..points);
    let (vh_raw, vh_se) = take(points..2 * points);
    let weights = |se: &[f64]| -> Vec<f64> { se.iter().map(|s| 1.0 / s.max(1e-300).powi(2)).collect() };
    let v = isotonic(&v_raw, &weights(&v_se));
    let v_hat = isotonic(&vh_raw, &weights(&vh_se));
    let dist = |raw: &[f64], proj: &[f64], se: &[f64]| -> f64 {
        raw.iter()
            .zip(proj)
            .zip(se)
            .map(|((r, p), s)| if *s > 0.0 { (r - p).abs() / s } else { 0.0 })
            .sum::<f64>()
    };
    let projection_distance =
        (dist(&v_raw, &v, &v_se) + dist(&vh_raw, &v_hat, &vh_se)) / (2 * points) as f64;
    Ok(RenewalEstimate {
        grid,
        v,
        v_stderr: v_se,
        v_hat,
        v_hat_stderr: vh_se,
        c0,
        horizon,
        n: mc.n,
        reference: z,
        projection_distance,
    })
}

impl RenewalEstimate {
    fn interp(&self, values: &[f64], x: f64) -> f64 {
        let g = &self.grid;
        let n = g.len();
        let i = g.partition_point(|&p| p <= x).clamp(1, n - 1);
        let (x0, x1) = (g[i - 1], g[i]);
        values[i - 1] + (values[i] - values[i - 1]) * (x - x0) / (x1 - x0)
    }

    /// `V(x)`, linear between nodes and extrapolated linearly past the grid.
    pub fn v_at(&self, x: f64) -> f64 {
        self.interp(&self.v, x)
    }

    pub fn v_hat_at(&self, x: f64) -> f64 {
        self.interp(&self.v_hat, x)
    }

    fn integral_to(&self, values: &[f64], x: f64) -> f64 {
        let mut total = 0.0;
        for w in self.grid.windows(2).zip(values.windows(2)) {
            let ([a, b], [fa, fb]) = (w.0, w.1) else { unreachable!() };
            if *a >= x {
                break;
            }
            let hi = b.min(x);
            let fhi = fa + (fb - fa) * (hi - a) / (b - a);
            total += 0.5 * (fa + fhi) * (hi - a);
        }
        let end = *self.grid.last().expect("nonempty");
        if x > end {
            let (f_end, f_x) = (self.interp(values, end), self.interp(values, x));
            total += 0.5 * (f_end + f_x) * (x - end);
        }
        total
    }

    /// `∫_0^x V(z) dz`.
    pub fn v_integral(&self, x: f64) -> f64 {
        self.integral_to(&self.v, x)
    }

    /// `∫_0^x V̂(z) dz`.
    pub fn v_hat_integral(&self, x: f64) -> f64 {
        self.integral_to(&self.v_hat, x)
    }

    /// `∫_0^∞ e^{−λy} V(y) dy` and the share contributed past the grid.
    pub fn laplace_v(&self, lambda: f64) -> (f64, f64) {
        let mut inside = 0.0;
        for (w, f) in self.grid.windows(2).zip(self.v.windows(2)) {
            let (a, b) = (w[0], w[1]);
            let slope = (f[1] - f[0]) / (b - a);
            inside += exp_linear(lambda, a, f[0], slope, b);
        }
        let n = self.grid.len();
        let end = self.grid[n - 1];
        let slope = (self.v[n - 1] - self.v[n - 2]) / (self.grid[n - 1] - self.grid[n - 2]);
        let outside = (-lambda * end).exp() * (self.v[n - 1] / lambda + slope / (lambda * lambda));
        let total = inside + outside;
        (total, if total > 0.0 { outside / total } else { 0.0 })
    }

    /// CSV `x,V,Vhat`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,V,Vhat")?;
        for i in 0..self.grid.len() {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", self.grid[i], self.v[i], self.v_hat[i])?;
        }
        Ok(())
    }
}

/// `∫_a^b e^{−λy} (f_a + slope·(y − a)) dy` in closed form.
fn exp_linear(lambda: f64, a: f64, fa: f64, slope: f64, b: f64) -> f64 {
    let (ea, eb) = ((-lambda * a).exp(), (-lambda * b).exp());
    let fb = fa + slope * (b - a);
    (fa * ea - fb * eb) / lambda + slope * (ea - eb) / (lambda * lambda)
}

/// A renewal-quadrature limit with its extrapolation bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitRhs {
    pub value: f64,
    pub extrapolated_share: f64,
    pub extrapolation_warning: bool,
}

/// `C₀ α V̂(x) ∫_0^∞ e^{−λy} V(y) dy`.
pub fn laplace_limit_rhs(model: &LevyModel, lam: f64, x: f64, renewal: &RenewalEstimate) -> Result<LimitRhs> {
    if !(lam > 0.0) {
        return Err(domain(format!("lambda must be positive, got {lam}")));
    }
    require_nonneg("x", x)?;
    let alpha = model.require_tail()?.alpha();
    let (lap, share) = renewal.laplace_v(lam);
    Ok(LimitRhs {
        value: renewal.c0 * alpha * renewal.v_hat_at(x) * lap,
        extrapolated_share: share,
        extrapolation_warning: share > LATE_SHARE_LIMIT,
    })
}

/// `C₀ α [V̂(y) ∫_0^x V + V(x) ∫_0^y V̂]`.
pub fn reflected_limit_rhs(model: &LevyModel, x: f64, y: f64, renewal: &RenewalEstimate) -> Result<LimitRhs> {
    require_nonneg("x", x)?;
    require_nonneg("y", y)?;
    let alpha = model.require_tail()?.alpha();
    let end = *renewal.grid.last().expect("nonempty");
    let outside = (x - end).max(0.0) + (y - end).max(0.0);
    let value = renewal.c0
        * alpha
        * (renewal.v_hat_at(y) * renewal.v_integral(x) + renewal.v_at(x) * renewal.v_hat_integral(y));
    let share = outside / (x + y).max(f64::MIN_POSITIVE);
    Ok(LimitRhs {
        value,
        extrapolated_share: share,
        extrapolation_warning: share > LATE_SHARE_LIMIT,
    })
}

/// A raw estimate multiplied by `a·t / P̂{ξ_1 > a·t}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledEstimate {
    pub raw: StratifiedEstimate,
    /// `P̂{ξ_1 > a·t}`.
    pub normalizer: McEstimate,
    /// The normalizer is `ν̄(a·t)` rather than a Monte Carlo estimate.
    pub proxy: bool,
    pub scaled: McEstimate,
}

/// `P̂{ξ_1 > level}`, or `(ν̄(level), true)` when the conditional estimator
/// does not apply to the model.
pub(crate) fn unit_tail(model: &LevyModel, level: f64, mc: &McConfig) -> Result<(McEstimate, bool)> {
    match estimate_p_xi1_exceeds(model, level, mc) {
        Ok(e) => Ok((e, false)),
        Err(Error::Unsupported(_)) => {
            Ok((McEstimate::new(model.tail_mass(level)?, 0.0, 0, mc.seed()), true))
        }
        Err(e) => Err(e),
    }
}

fn scale(model: &LevyModel, raw: StratifiedEstimate, t: f64, mc: &McConfig) -> Result<ScaledEstimate> {
    let a = model.require_negative_drift()?;
    let (normalizer, proxy) = unit_tail(model, a * t, &mc.child("unit-tail"))?;
    let c = a * t / normalizer.value;
    let value = raw.estimate.value * c;
    let rel_raw = if raw.estimate.value != 0.0 { raw.estimate.stderr / raw.estimate.value } else { 0.0 };
    let rel_norm = normalizer.stderr / normalizer.value;
    let stderr = if raw.estimate.value == 0.0 {
        raw.estimate.stderr * c
    } else {
        value.abs() * rel_raw.hypot(rel_norm)
    };
    let scaled = McEstimate::new(value, stderr, raw.estimate.n, mc.seed());
    Ok(ScaledEstimate {
        raw,
        normalizer,
        proxy,
        scaled,
    })
}

/// `∫_L^∞ e^{−λ(b + j)} ν(dj) / ν̄(h)` for `b + L ≥ 0`.
fn laplace_jump(setup: &BigJumpSetup<'_>, lam: f64, b: f64, level: f64) -> f64 {
    let tail = setup.tail;
    let l = level.max(setup.h);
    let inner = laplace_half_line(lam, l, |v| tail.density(l + v));
    (-lam * (b + l)).exp() * inner / tail.tail_mass(setup.h)
}

/// `E_x[e^{−λ ξ_t}; τ_0 > t]`, stratified.
pub fn estimate_conditional_laplace(
    model: &LevyModel,
    lam: f64,
    x: f64,
    t: f64,
    mc: &McConfig,
) -> Result<StratifiedEstimate> {
    if !(lam > 0.0) {
        return Err(domain(format!("lambda must be positive, got {lam}")));
    }
    if !(x > 0.0) {
        return Err(domain(format!("start x must be positive, got {x}")));
    }
    mc.require(2)?;
    let setup = BigJumpSetup::new(model, t, mc.step)?;
    let strata = run_strata::<1, _>(&setup, mc, [1.0], 0, |k, rng| {
        if k == 1 {
            let s = rng.random::<f64>() * t;
            let one = OneJump::draw(&setup, x, s, rng)?;
            if one.pre_min <= 0.0 {
                return Ok([0.0]);
            }
            return Ok([laplace_jump(&setup, lam, one.base.end_value(), -one.post_min)]);
        }
        let (path, _) = setup.composed(x, k, rng)?;
        if crate::rarevent::survives(&path) {
            Ok([(-lam * path.end_value()).exp()])
        } else {
            Ok([0.0])
        }
    })?;
    Ok(StratifiedEstimate::from_strata(&setup, &strata, 0))
}

/// `(a t / P{ξ_1 > a t}) · E_x[e^{−λ ξ_t}; τ_0 > t]`.
pub fn conditional_laplace_scaled(
    model: &LevyModel,
    lam: f64,
    x: f64,
    t: f64,
    mc: &McConfig,
) -> Result<ScaledEstimate> {
    let raw = estimate_conditional_laplace(model, lam, x, t, mc)?;
    scale(model, raw, t, mc)
}

/// `E[e^{−λ ξ_t}; ξ_t ≥ 0]` against `(α/(aλ)) P{ξ_1 > a t}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplacePositive {
    pub lhs: StratifiedEstimate,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub normalizer: McEstimate,
    pub proxy: bool,
    /// `(α/(aλ)) ν̄(a t)`.
    pub rhs_tail_proxy: f64,
}

pub fn laplace_positive_part(model: &LevyModel, lam: f64, t: f64, mc: &McConfig) -> Result<LaplacePositive> {
    if !(lam > 0.0) {
        return Err(domain(format!("lambda must be positive, got {lam}")));
    }
    mc.require(2)?;
    let setup = BigJumpSetup::new(model, t, mc.step)?;
    let strata = run_strata::<1, _>(&setup, mc, [1.0], 0, |k, rng| {
        if k == 1 {
            let base = setup.base(0.0, &[], rng)?;
            let b = base.end_value();
            return Ok([laplace_jump(&setup, lam, b, -b)]);
        }
        let (path, _) = setup.composed(0.0, k, rng)?;
        let v = path.end_value();
        Ok([if v >= 0.0 { (-lam * v).exp() } else { 0.0 }])
    })?;
    let lhs = StratifiedEstimate::from_strata(&setup, &strata, 0);
    let factor = setup.tail.alpha() / (setup.a * lam);
    let (normalizer, proxy) = unit_tail(model, setup.h, &mc.child("unit-tail"))?;
    Ok(LaplacePositive {
        lhs,
        rhs: factor * normalizer.value,
        rhs_stderr: factor * normalizer.stderr,
        normalizer,
        proxy,
        rhs_tail_proxy: laplace_positive_rhs_proxy(model, lam, t)?,
    })
}

/// `(α/(aλ)) ν̄(a t)`.
pub fn laplace_positive_rhs_proxy(model: &LevyModel, lam: f64, t: f64) -> Result<f64> {
    let a = model.require_negative_drift()?;
    let tail = model.require_tail()?;
    Ok(tail.alpha() / (a * lam) * tail.tail_mass(a * t))
}

/// `P{S_t ≤ x, S_t − ξ_t ≤ y}` from `ξ_0 = 0`, stratified. Infinite `x` or
/// `y` drop the corresponding constraint.
pub fn reflected_joint_cdf(model: &LevyModel, t: f64, x: f64, y: f64, mc: &McConfig) -> Result<StratifiedEstimate> {
    require_nonneg("x", x)?;
    require_nonneg("y", y)?;
    mc.require(2)?;
    let setup = BigJumpSetup::new(model, t, mc.step)?;
    let strata = run_strata::<1, _>(&setup, mc, [1.0], 0, |k, rng| {
        if k == 1 {
            let s = rng.random::<f64>() * t;
            let base = setup.base(0.0, &[s], rng)?;
            let (_, s_pre) = base.extrema_between(0.0, s);
            let (_, m) = base.extrema_between(s, t);
            let bt = base.end_value();
            if s_pre > x || m - bt > y {
                return Ok([0.0]);
            }
            let lo = s_pre - bt - y;
            let hi = x - m;
            return Ok([(setup.exceed(lo) - setup.exceed(hi)).max(0.0)]);
        }
        let (path, _) = setup.composed(0.0, k, rng)?;
        let (_, sup) = path.extrema_between(0.0, t);
        let hit = sup <= x && sup - path.end_value() <= y;
        Ok([f64::from(u8::from(hit))])
    })?;
    Ok(StratifiedEstimate::from_strata(&setup, &strata, 0))
}

/// `(a t / P{ξ_1 > a t}) · P{S_t ≤ x, S_t − ξ_t ≤ y}`.
pub fn reflected_joint_scaled(model: &LevyModel, t: f64, x: f64, y: f64, mc: &McConfig) -> Result<ScaledEstimate> {
    let raw = reflected_joint_cdf(model, t, x, y, mc)?;
    scale(model, raw, t, mc)
}

/// One cell of [`local_probability_ratio`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalRatio {
    pub x: f64,
    pub numerator: McEstimate,
    /// `t · P̂{ξ_1 ∈ [a t + x, a t + x + δ)}`.
    pub denominator: McEstimate,
    /// `None` when either cell had no mass.
    pub ratio: Option<McEstimate>,
}

/// `P{ξ_t ∈ [x, x+δ)} / (t · P{ξ_1 ∈ [at+x, at+x+δ)})` per grid point, with
/// common random numbers across the grid.
pub fn local_probability_ratio(
    model: &LevyModel,
    t: f64,
    delta: f64,
    x_grid: &[f64],
    mc: &McConfig,
) -> Result<Vec<LocalRatio>> {
    if !(delta > 0.0) {
        return Err(domain(format!("delta must be positive, got {delta}")));
    }
    if model.tail().is_none() {
        return Err(Error::Inapplicable("local probabilities need a diffuse jump law".into()));
    }
    mc.require(2)?;
    let setup = BigJumpSetup::new(model, t, mc.step)?;
    let mut out = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let strata = run_strata::<1, _>(&setup, &mc.child("numerator"), [1.0], 0, |k, rng| {
            if k == 1 {
                let b = setup.base(0.0, &[], rng)?.end_value();
                return Ok([(setup.exceed(x - b) - setup.exceed(x + delta - b)).max(0.0)]);
            }
            let (path, _) = setup.composed(0.0, k, rng)?;
            let v = path.end_value();
            Ok([f64::from(u8::from(v >= x && v < x + delta))])
        })?;
        let numerator = strata.estimate(0);
        let cell = cell_moments(model, 1.0, setup.h + x, setup.h + x + delta, &mc.child("denominator"))?;
        let denominator = cell.estimate(0, mc.seed()).scaled(t);
        let ratio = if numerator.value > 0.0 && denominator.value > 0.0 {
            let r = numerator.value / denominator.value;
            let rel = (numerator.stderr / numerator.value).hypot(denominator.stderr / denominator.value);
            Some(McEstimate::new(r, r * rel, numerator.n, mc.seed()))
        } else {
            None
        };
        out.push(LocalRatio {
            x,
            numerator,
            denominator,
            ratio,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathsim::GridPoint;
    use proptest::prelude::*;

    #[test]
    fn drift_only_mean_tau_is_exact() {
        let m = LevyModel::drift_only(-3.0);
        let e = estimate_mean_tau(&m, 3.0, 10.0, &McConfig::new(500, 1)).unwrap();
        assert!((e.estimate.value - 1.0).abs() < 1e-12);
        assert_eq!(e.estimate.stderr, 0.0);
        assert_eq!(e.censored_fraction, 0.0);
        assert!(!e.horizon_warning);
        assert!(estimate_mean_tau(&m, 0.0, 10.0, &McConfig::new(500, 1)).is_err());
        let short = estimate_mean_tau(&m, 3.0, 0.5, &McConfig::new(500, 1)).unwrap();
        assert!(short.horizon_warning);
    }

    #[test]
    fn wald_identity_for_spectrally_positive_model() {
        // downward passage is continuous, so E_x[τ_0] = x / a
        let m = LevyModel::canonical();
        let mc = McConfig::new(40_000, 2);
        for &x in &[1.0, 2.0] {
            let e = estimate_mean_tau(&m, x, 400.0, &mc).unwrap();
            assert!(e.estimate.covers(x, 4.0), "{x}: {e:?}");
        }
    }

    #[test]
    fn occupation_on_a_line() {
        // ξ_s = −s: S ≡ 0, S − ξ_s = s, so O(x, y) = min(y, horizon)
        let p = Path::linear(0.0, -1.0, 10.0);
        let mut out = [0.0; 4];
        occupation_along(&p, 10.0, &[(0.0, 3.0), (1.0, 20.0)], &mut out);
        assert!((out[0] - 3.0).abs() < 1e-12);
        assert!((out[1] - 10.0).abs() < 1e-12);
        assert!((out[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn occupation_with_jump() {
        // down to −1 at s=1, jump +3 to 2, then down
        let g = vec![
            GridPoint { time: 0.0, left: 0.0, value: 0.0 },
            GridPoint { time: 1.0, left: -1.0, value: 2.0 },
            GridPoint { time: 5.0, left: -2.0, value: -2.0 },
        ];
        let p = Path::from_grid(g, 1.0).unwrap();
        let mut out = [0.0; 4];
        occupation_along(&p, 5.0, &[(1.0, 10.0), (3.0, 1.5)], &mut out);
        // pair 1: S jumps to 2 > 1 at s=1, so only [0,1]
        assert!((out[0] - 1.0).abs() < 1e-12);
        // pair 2: on [0,1] need ξ ≥ −1.5 (all of it); after, S=2, need ξ ≥ 0.5: 1.5 time units
        assert!((out[1] - 2.5).abs() < 1e-12, "{}", out[1]);
    }

    #[test]
    fn rising_segment_updates_supremum() {
        let p = Path::linear(0.0, 1.0, 4.0);
        let mut out = [0.0; 2];
        occupation_along(&p, 4.0, &[(2.5, 0.0)], &mut out);
        assert!((out[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn c0_values() {
        assert_eq!(c0(&LevyModel::canonical()).unwrap(), 1.0);
        let driftless = LevyModel::canonical().with_drift(0.0).unwrap();
        assert!((c0(&driftless).unwrap() - 0.5).abs() < 1e-15);
        assert!(c0(&LevyModel::drift_only(0.0)).is_err());
    }

    #[test]
    fn isotonic_projection() {
        let v = isotonic(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]);
        assert_eq!(v, vec![1.0, 2.5, 2.5, 4.0]);
        let w = isotonic(&[2.0, 1.0], &[3.0, 1.0]);
        assert_eq!(w, vec![1.75, 1.75]);
    }

    fn flat_renewal(v: Vec<f64>, vh: Vec<f64>) -> RenewalEstimate {
        let n = v.len();
        RenewalEstimate {
            grid: (0..n).map(|i| i as f64).collect(),
            v_stderr: vec![0.0; n],
            v_hat_stderr: vec![0.0; n],
            v,
            v_hat: vh,
            c0: 1.0,
            horizon: 1.0,
            n: 1,
            reference: 1.0,
            projection_distance: 0.0,
        }
    }

    #[test]
    fn renewal_quadrature() {
        let m = LevyModel::canonical();
        // V(y) = 1 + y: ∫ e^{−y}(1+y) dy = 2
        let r = flat_renewal((0..11).map(|i| 1.0 + i as f64).collect(), vec![1.0; 11]);
        let (lap, share) = r.laplace_v(1.0);
        assert!((lap - 2.0).abs() < 1e-12);
        assert!(share < 1e-3);
        let rhs = laplace_limit_rhs(&m, 1.0, 3.0, &r).unwrap();
        assert!((rhs.value - 4.0).abs() < 1e-12);
        let mut doubled = r.clone();
        doubled.v_hat.iter_mut().for_each(|v| *v *= 2.0);
        assert!((laplace_limit_rhs(&m, 1.0, 3.0, &doubled).unwrap().value - 8.0).abs() < 1e-12);
        assert!(laplace_limit_rhs(&m, 200.0, 3.0, &r).unwrap().value < 0.02);
        assert!((r.v_integral(2.0) - 4.0).abs() < 1e-12);
        let refl = reflected_limit_rhs(&m, 2.0, 2.0, &r).unwrap();
        // 2·[1·4 + 3·2]
        assert!((refl.value - 20.0).abs() < 1e-12);
        let short = flat_renewal(vec![1.0, 2.0], vec![1.0, 1.0]);
        assert!(laplace_limit_rhs(&m, 1.0, 0.5, &short).unwrap().extrapolation_warning);
    }

    #[test]
    fn positive_part_proxy_value() {
        let m = LevyModel::canonical();
        let p = laplace_positive_rhs_proxy(&m, 1.0, 50.0).unwrap();
        assert!((p - 8e-4).abs() < 1e-18);
        let q = laplace_positive_rhs_proxy(&m, 2.0, 50.0).unwrap();
        assert_eq!(q, p / 2.0);
    }

    #[test]
    fn reflected_sentinels() {
        let m = LevyModel::canonical();
        let e = reflected_joint_cdf(&m, 10.0, f64::INFINITY, f64::INFINITY, &McConfig::new(500, 1)).unwrap();
        // every sampled stratum contributes its full weight; only the
        // unsampled Poisson tail is missing
        assert!((e.estimate.value - 1.0).abs() <= e.truncation_bound + 1e-12);
        assert!(e.strata.iter().all(|s| (s.mean[0] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn local_ratio_needs_diffuse_law() {
        let m = LevyModel::drift_only(-1.0);
        let err = local_probability_ratio(&m, 25.0, 1.0, &[10.0], &McConfig::new(100, 1)).unwrap_err();
        assert!(matches!(err, Error::Inapplicable(_)));
    }

    proptest! {
        #[test]
        fn occupation_is_monotone(seed in 0u64..300, x in 0.0f64..3.0, y in 0.0f64..3.0, dx in 0.0f64..2.0, dy in 0.0f64..2.0) {
            let m = LevyModel::canonical();
            let p = crate::pathsim::sample_path(&m, 0.0, 30.0, 0.01, &crate::pathsim::RngStream::new(seed, 0)).unwrap();
            let mut out = [0.0; 6];
            occupation_along(&p, 30.0, &[(x, y), (x + dx, y), (x, y + dy)], &mut out);
            prop_assert!(out[0] <= out[1] + 1e-12);
            prop_assert!(out[0] <= out[2] + 1e-12);
            prop_assert!(out[0] >= 0.0 && out[0] <= 30.0);
        }
    }
}
