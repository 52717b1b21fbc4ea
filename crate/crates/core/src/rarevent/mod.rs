//! Rare-event estimators built on the single-big-jump decomposition.
//!
//! In the stratum with exactly one jump above `h = a·t`, the jump size is
//! independent of everything else, so the indicator of most events can be
//! replaced by its conditional probability given the base path and the jump
//! time. Those conditional probabilities are tail ratios `ν̄(·)/ν̄(h)`, which
//! removes the jump-size noise from the dominant stratum.

mod limit;
mod strata;

pub use limit::{
    limit_coefficient_cf, limit_coefficient_cf_with_floor, sample_limit_law, LimitCoefficient,
    LimitLawSample, LimitLawSampler,
};
pub use strata::{StratifiedEstimate, StratumReport, MAX_STRATA, TRUNCATION_REL};
pub(crate) use strata::{poisson_pmf, run_strata, BigJumpSetup};

use rand::Rng as _;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::fluctuation::{estimate_tau_summary, default_horizon};
use crate::functional::{eval_f_log, exp_functional_unchecked};
use crate::mc::{par_moments, McConfig, McEstimate};
use crate::model::{FSpec, LevyModel};
use crate::pathsim::{sample_path_with, JumpRecord, Path, Rng};

/// A draw given exactly one jump above the threshold on `[0, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BigJumpProposal {
    pub threshold: f64,
    pub jump_time: f64,
    pub jump_size: f64,
    /// A `ξ^{threshold}` trajectory.
    pub base_path: Path,
}

impl BigJumpProposal {
    /// Base path plus the large jump.
    pub fn path(&self) -> Path {
        self.base_path
            .add_jumps(&[JumpRecord {
                time: self.jump_time,
                size: self.jump_size,
            }])
            .expect("jump time inside the horizon")
    }
}

/// Exact draw of `(ξ^{at}, jump time, jump size)` given `N_t^{at} = 1`.
pub fn propose_one_big_jump(
    model: &LevyModel,
    start: f64,
    t: f64,
    step: f64,
    rng: &mut Rng,
) -> Result<BigJumpProposal> {
    let s = BigJumpSetup::new(model, t, step)?;
    let jump_time = rng.random::<f64>() * t;
    let jump_size = s.jump_size(rng);
    let base_path = s.base(start, &[jump_time], rng)?;
    Ok(BigJumpProposal {
        threshold: s.h,
        jump_time,
        jump_size,
        base_path,
    })
}

/// Exact draw of `ξ` on `[0, t]` conditioned on `N_t^{at} = 1`.
pub fn sample_given_one_big_jump(
    model: &LevyModel,
    start: f64,
    t: f64,
    step: f64,
    rng: &mut Rng,
) -> Result<Path> {
    Ok(propose_one_big_jump(model, start, t, step, rng)?.path())
}

/// Survival on `(0, t]` of a stored path.
#[inline]
pub(crate) fn survives(path: &Path) -> bool {
    path.first_passage_unchecked(0.0).is_none()
}

/// Base path from `start` with a node at the uniform jump time `s`, plus the
/// infima of the base on `[0, s]` and `[s, t]`.
pub(crate) struct OneJump {
    pub base: Path,
    pub pre_min: f64,
    pub post_min: f64,
}

impl OneJump {
    pub fn draw(setup: &BigJumpSetup<'_>, start: f64, s: f64, rng: &mut Rng) -> Result<Self> {
        let base = setup.base(start, &[s], rng)?;
        Ok(Self::split(base, s, setup.t))
    }

    pub fn split(base: Path, s: f64, t: f64) -> Self {
        let (pre_min, _) = base.extrema_between(0.0, s);
        let (post_min, _) = base.extrema_between(s, t);
        Self {
            base,
            pre_min,
            post_min,
        }
    }

    /// `P{ξ^h + J·1_{[s,t]} > 0 on (0, t] | base, s}` when the jump must also
    /// exceed `floor`.
    #[inline]
    pub fn survival(&self, setup: &BigJumpSetup<'_>, floor: f64) -> f64 {
        if self.pre_min <= 0.0 {
            0.0
        } else {
            setup.exceed((-self.post_min).max(floor))
        }
    }
}

fn require_start(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("start x must be positive, got {x}")))
    }
}

/// Plain Monte Carlo on `[0, t]` for models without a heavy right tail.
fn plain_estimate<const D: usize, K>(mc: &McConfig, kernel: K) -> Result<crate::mc::Moments<D>>
where
    K: Fn(&mut Rng) -> Result<[f64; D]> + Sync,
{
    par_moments::<D, _>(mc.n, &mc.stream, |_, rng| kernel(rng))
}

fn plain_report<const D: usize>(m: &crate::mc::Moments<D>, c: usize, seed: u64) -> StratifiedEstimate {
    StratifiedEstimate {
        estimate: m.estimate(c, seed),
        threshold: f64::INFINITY,
        poisson_mean: 0.0,
        strata: vec![StratumReport {
            k: 0,
            weight: 1.0,
            n: m.n(),
            mean: (0..D).map(|i| m.mean(i)).collect(),
            stderr: (0..D).map(|i| m.stderr(i)).collect(),
        }],
        truncation_bound: 0.0,
    }
}

/// `P{ξ_t > 0}` from `ξ_0 = 0`, stratified over `N_t^{at}`.
pub fn estimate_p_xi_positive(model: &LevyModel, t: f64, mc: &McConfig) -> Result<StratifiedEstimate> {
    positivity(model, t, mc, true)
}

pub(crate) fn positivity(
    model: &LevyModel,
    t: f64,
    mc: &McConfig,
    rao_blackwell: bool,
) -> Result<StratifiedEstimate> {
    mc.require(2)?;
    let setup = BigJumpSetup::new(model, t, mc.step)?;
    let strata = run_strata::<1, _>(&setup, mc, [1.0], 0, |k, rng| {
        if k == 1 && rao_blackwell {
            let base = setup.base(0.0, &[], rng)?;
            return Ok([setup.exceed(-base.end_value())]);
        }
        let (path, _) = setup.composed(0.0, k, rng)?;
        Ok([f64::from(u8::from(path.end_value() > 0.0))])
    })?;
    Ok(StratifiedEstimate::from_strata(&setup, &strata, 0))
}

/// `P_x{τ_0 > t}`, stratified over `N_t^{at}`.
pub fn estimate_p_tau_exceeds(
    model: &LevyModel,
    x: f64,
    t: f64,
    mc: &McConfig,
) -> Result<StratifiedEstimate> {
    survival(model, x, t, mc, true)
}

pub(crate) fn survival(
    model: &LevyModel,
    x: f64,
    t: f64,
    mc: &McConfig,
    rao_blackwell: bool,
) -> Result<StratifiedEstimate> {
    mc.require(2)?;
    require_start(x)?;
    if model.tail().is_none() {
        model.require_negative_drift()?;
        let m = plain_estimate::<1, _>(mc, |rng| {
            let p = sample_path_with(model, x, t, mc.step, rng)?;
            Ok([f64::from(u8::from(survives(&p)))])
        })?;
        return Ok(plain_report(&m, 0, mc.seed()));
    }
    let setup = BigJumpSetup::new(model, t, mc.step)?;
    let strata = run_strata::<1, _>(&setup, mc, [1.0], 0, |k, rng| {
        if k == 1 && rao_blackwell {
            let s = rng.random::<f64>() * t;
            let one = OneJump::draw(&setup, x, s, rng)?;
            return Ok([one.survival(&setup, 0.0)]);
        }
        let (path, _) = setup.composed(x, k, rng)?;
        Ok([f64::from(u8::from(survives(&path)))])
    })?;
    Ok(StratifiedEstimate::from_strata(&setup, &strata, 0))
}

/// `E[F(A_t(γξ))]` from `ξ_0 = 0`, stratified over `N_t^{at}`.
pub fn estimate_ef_stratified(
    model: &LevyModel,
    f: &FSpec,
    t: f64,
    mc: &McConfig,
) -> Result<StratifiedEstimate> {
    mc.require(2)?;
    f.validate()?;
    let gamma = f.path_gamma();
    let setup = BigJumpSetup::new(model, t, mc.step)?;
    let strata = run_strata::<1, _>(&setup, mc, [f.sup()], 0, |k, rng| {
        let (path, _) = setup.composed(0.0, k, rng)?;
        Ok([eval_f_log(f, exp_functional_unchecked(&path, t, gamma).log_value)])
    })?;
    Ok(StratifiedEstimate::from_strata(&setup, &strata, 0))
}

/// `sup_{s ≤ window} |ξ_s − Δξ_J 1{s ≥ J}|` for the path given with the
/// first large jump removed.
fn window_sup(path_without_first: &Path, window: f64) -> f64 {
    let (lo, hi) = path_without_first.extrema_between(0.0, window);
    lo.abs().max(hi.abs())
}

/// `E_x[sup_{s≤T} |ξ_s − Δξ_{J^{at}} 1{s ≥ J^{at}}| / t | τ_0 > t]`.
pub fn scaled_path_distance(
    model: &LevyModel,
    x: f64,
    t: f64,
    window: f64,
    mc: &McConfig,
) -> Result<McEstimate> {
    mc.require(2)?;
    require_start(x)?;
    if !(window > 0.0) {
        return Err(domain("window must be positive"));
    }
    let window = window.min(t);
    if model.tail().is_none() {
        model.require_negative_drift()?;
        let m = plain_estimate::<2, _>(mc, |rng| {
            let p = sample_path_with(model, x, t, mc.step, rng)?;
            let alive = f64::from(u8::from(survives(&p)));
            Ok([alive * window_sup(&p, window) / t, alive])
        })?;
        return m.ratio(0, 1, mc.seed());
    }
    let setup = BigJumpSetup::new(model, t, mc.step)?;
    let strata = run_strata::<2, _>(&setup, mc, [f64::INFINITY, 1.0], 1, |k, rng| match k {
        0 => {
            let base = setup.base(x, &[], rng)?;
            let alive = f64::from(u8::from(survives(&base)));
            Ok([alive * window_sup(&base, window) / t, alive])
        }
        1 => {
            let s = rng.random::<f64>() * t;
            let one = OneJump::draw(&setup, x, s, rng)?;
            let p = one.survival(&setup, 0.0);
            Ok([p * window_sup(&one.base, window) / t, p])
        }
        _ => {
            let jumps = setup.draw_jumps(k, rng);
            let breaks: Vec<f64> = jumps.iter().map(|j| j.time).collect();
            let base = setup.base(x, &breaks, rng)?;
            let path = base.add_jumps(&jumps)?;
            let alive = f64::from(u8::from(survives(&path)));
            if alive == 0.0 {
                return Ok([0.0, 0.0]);
            }
            let without_first = base.add_jumps(&jumps[1..])?;
            Ok([window_sup(&without_first, window) / t, 1.0])
        }
    })?;
    // The distance is bounded by sup|ξ| which has no a-priori bound, so the
    // stopping rule watches the survival coordinate only.
    let mut s = strata;
    s.bound = [0.0, 1.0];
    s.ratio(0, 1)
}

/// Left and right sides of the size-biased first-jump limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeBiasedCheck {
    /// `P_x{Δξ_J > bt, J ≤ T | τ_0 > t}` with `J = J^{at}`.
    pub lhs: McEstimate,
    /// `(b/a)^{-α} · E_x[τ_0 ∧ T] / E_x[τ_0]`.
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub pareto_factor: f64,
    pub mean_tau: McEstimate,
    pub mean_tau_truncated: McEstimate,
    /// `E_x[τ_0; τ_0 ≤ T] / E_x[τ_0]`, shown for comparison.
    pub restricted_ratio: f64,
}

pub fn size_biased_jump_check(
    model: &LevyModel,
    x: f64,
    b: f64,
    window: f64,
    t: f64,
    mc: &McConfig,
) -> Result<SizeBiasedCheck> {
    mc.require(2)?;
    require_start(x)?;
    let setup = BigJumpSetup::new(model, t, mc.step)?;
    if b < setup.a {
        return Err(domain(format!("b = {b} must be at least a = {}", setup.a)));
    }
    if !(window >= 0.0 && window <= t) {
        return Err(domain(format!("T = {window} must lie in [0, t]")));
    }
    let bt = b * t;
    let strata = run_strata::<2, _>(&setup, &mc.child("lhs"), [1.0, 1.0], 1, |k, rng| match k {
        0 => {
            let base = setup.base(x, &[], rng)?;
            Ok([0.0, f64::from(u8::from(survives(&base)))])
        }
        1 => {
            let s1 = rng.random::<f64>() * window;
            let s2 = rng.random::<f64>() * t;
            let mut breaks = [s1, s2];
            breaks.sort_by(f64::total_cmp);
            let base = setup.base(x, &breaks, rng)?;
            let num = if window > 0.0 {
                let one = OneJump::split(base.clone(), s1, t);
                (window / t) * one.survival(&setup, bt)
            } else {
                0.0
            };
            let den = OneJump::split(base, s2, t).survival(&setup, 0.0);
            Ok([num, den])
        }
        _ => {
            let (path, jumps) = setup.composed(x, k, rng)?;
            let alive = survives(&path);
            let first = jumps[0];
            let hit = alive && first.time <= window && first.size > bt;
            Ok([f64::from(u8::from(hit)), f64::from(u8::from(alive))])
        }
    })?;
    let lhs = strata.ratio(0, 1)?;
    let alpha = setup.tail.alpha();
    let pareto_factor = (b / setup.a).powf(-alpha);
    let horizon = default_horizon(setup.a, x);
    let taus = estimate_tau_summary(model, x, horizon, window, &mc.child("tau"))?;
    let ratio = taus.moments.ratio(1, 0, mc.seed())?;
    let restricted = taus.moments.mean(2) / taus.moments.mean(0);
    Ok(SizeBiasedCheck {
        lhs,
        rhs: pareto_factor * ratio.value,
        rhs_stderr: pareto_factor * ratio.stderr,
        pareto_factor,
        mean_tau: taus.mean,
        mean_tau_truncated: taus.moments.estimate(1, mc.seed()),
        restricted_ratio: restricted,
    })
}

/// `P{ξ_1 > level}` by conditional Monte Carlo: with `M` the largest of the
/// `N` jumps on `[0, 1]`, the estimator is `P{ξ_1 > level | all but M}`
/// summed over which jump is the maximum (Asmussen–Kroese).
pub fn estimate_p_xi1_exceeds(model: &LevyModel, level: f64, mc: &McConfig) -> Result<McEstimate> {
    let m = cell_moments(model, 1.0, level, f64::INFINITY, mc)?;
    Ok(m.estimate(0, mc.seed()))
}

/// `P{ξ_t ∈ [lo, hi)}` by the same conditional Monte Carlo on `[0, t]`.
/// Requires piecewise-linear paths.
pub(crate) fn cell_moments(
    model: &LevyModel,
    t: f64,
    lo: f64,
    hi: f64,
    mc: &McConfig,
) -> Result<crate::mc::Moments<1>> {
    mc.require(2)?;
    let tail = model.require_tail()?;
    if !model.is_piecewise_linear() || model.left_jumps().is_some() {
        return Err(Error::Unsupported(
            "conditional cell estimator needs a drift plus upward compound Poisson model".into(),
        ));
    }
    if !(hi > lo) {
        return Err(domain("empty cell"));
    }
    let rate = tail.total_rate() * t;
    let drift = model.drift() * t;
    let mass = |v: f64| if v <= 0.0 { 1.0 } else { tail.tail_mass(v) / tail.total_rate() };
    par_moments::<1, _>(mc.n, &mc.stream, |_, rng| {
        let n = sample_poisson(rng, rate);
        if n == 0 {
            let v = drift;
            return Ok([f64::from(u8::from(v >= lo && v < hi))]);
        }
        let mut sizes: Vec<f64> = (0..n)
            .map(|_| tail.sample_above(tail.x0(), crate::pathsim::open_unit(rng)))
            .collect();
        sizes.sort_by(f64::total_cmp);
        let rest_max = if n >= 2 { sizes[n - 2] } else { 0.0 };
        let rest_sum: f64 = sizes[..n - 1].iter().sum();
        // With the largest jump M > rest_max: ξ = drift + rest + M.
        let need_lo = (lo - drift - rest_sum).max(rest_max);
        let need_hi = hi - drift - rest_sum;
        let p = if need_hi <= need_lo {
            0.0
        } else {
            // n · P{M ∈ (need_lo, need_hi)} with M a single jump.
            let upper = if need_hi == f64::INFINITY { 0.0 } else { mass(need_hi) };
            (mass(need_lo) - upper).max(0.0)
        };
        Ok([n as f64 * p])
    })
}

/// Poisson variate by inversion (small means) or the normal-free PTRS-free
/// fallback of repeated exponentials for moderate means.
pub(crate) fn sample_poisson(rng: &mut Rng, mean: f64) -> usize {
    use rand_distr::{Distribution, Poisson};
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathsim::RngStream;

    #[test]
    fn proposal_has_one_large_jump() {
        let m = LevyModel::canonical();
        let mut rng = RngStream::new(3, 0).rng();
        for _ in 0..50 {
            let prop = propose_one_big_jump(&m, 0.0, 20.0, 0.01, &mut rng).unwrap();
            assert!(prop.jump_size > prop.threshold);
            let p = prop.path();
            assert_eq!(p.count_large_jumps(prop.threshold, 20.0).unwrap(), 1);
            assert!(prop.base_path.jumps().iter().all(|j| j.size <= 20.0));
        }
        assert!(matches!(
            sample_given_one_big_jump(&m, 0.0, 0.5, 0.01, &mut rng),
            Err(Error::ThresholdBelowCutoff { .. })
        ));
    }

    #[test]
    fn drift_only_survival_is_exact() {
        let m = LevyModel::drift_only(-3.0);
        let mc = McConfig::new(200, 1);
        let before = estimate_p_tau_exceeds(&m, 3.0, 0.9, &mc).unwrap();
        assert_eq!(before.estimate.value, 1.0);
        assert_eq!(before.estimate.stderr, 0.0);
        let after = estimate_p_tau_exceeds(&m, 3.0, 1.1, &mc).unwrap();
        assert_eq!(after.estimate.value, 0.0);
        assert!(estimate_p_tau_exceeds(&m, 0.0, 1.0, &mc).is_err());
    }

    #[test]
    fn drift_only_conditioning_has_no_samples() {
        let m = LevyModel::drift_only(-3.0);
        let err = scaled_path_distance(&m, 1.0, 25.0, 5.0, &McConfig::new(200, 1)).unwrap_err();
        assert!(matches!(err, Error::NoEffectiveSamples { .. }));
    }

    #[test]
    fn rao_blackwell_matches_plain_strata() {
        let m = LevyModel::canonical();
        let mc = McConfig::new(40_000, 17);
        let rb = positivity(&m, 10.0, &mc, true).unwrap().estimate;
        let plain = positivity(&m, 10.0, &mc.child("plain"), false).unwrap().estimate;
        assert!((rb.value - plain.value).abs() < 4.0 * rb.combined_stderr(&plain), "{rb:?} {plain:?}");
        assert!(rb.stderr < plain.stderr);
        let rb = survival(&m, 1.0, 10.0, &mc, true).unwrap().estimate;
        let plain = survival(&m, 1.0, 10.0, &mc.child("plain"), false).unwrap().estimate;
        assert!((rb.value - plain.value).abs() < 4.0 * rb.combined_stderr(&plain), "{rb:?} {plain:?}");
    }

    #[test]
    fn stratified_matches_naive_at_small_t() {
        let m = LevyModel::canonical();
        let t = 10.0;
        let strat = estimate_p_xi_positive(&m, t, &McConfig::new(50_000, 5)).unwrap().estimate;
        let naive = par_moments::<1, _>(400_000, &RngStream::new(77, 0), |_, rng| {
            let p = sample_path_with(&m, 0.0, t, 0.01, rng)?;
            Ok([f64::from(u8::from(p.end_value() > 0.0))])
        })
        .unwrap()
        .estimate(0, 77);
        assert!(
            (strat.value - naive.value).abs() < 4.0 * strat.combined_stderr(&naive),
            "{strat:?} {naive:?}"
        );
    }

    #[test]
    fn size_biased_rejects_small_b() {
        let m = LevyModel::canonical();
        let err = size_biased_jump_check(&m, 1.0, 0.5, 5.0, 50.0, &McConfig::new(100, 1)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn tail_probability_of_xi1() {
        // P{ξ_1 > 100} for M0 against the closed form of one dominating jump:
        // the conditional estimator must agree with a direct sum over N.
        let m = LevyModel::canonical();
        let est = estimate_p_xi1_exceeds(&m, 100.0, &McConfig::new(200_000, 3)).unwrap();
        // one-jump approximation e^{-1} Σ_n n/n! … bounds: ν̄(103) ≤ P ≤ ν̄(102)·(1 + 4/100)
        assert!(est.value > 0.9 * (103.0f64).powi(-2) && est.value < 1.1 * (101.0f64).powi(-2), "{est:?}");
        assert!(est.stderr < 0.02 * est.value);
    }
}
