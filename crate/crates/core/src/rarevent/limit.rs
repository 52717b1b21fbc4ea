//! Limit laws given survival and the limit coefficient of `E[F(A_t)]`.

use rand::Rng as _;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::functional::{eval_f_log, exp_functional_unchecked};
use crate::mc::{par_moments, McConfig, McEstimate};
use crate::model::{FSpec, LevyModel};
use crate::pathsim::{open_unit, sample_path_with, Rng};

/// One draw of the limiting (jump time, jump size / t) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct LimitLawSample {
    /// Size-biased passage time.
    pub T_x: f64,
    /// Pareto(α, a) overshoot in units of `t`.
    pub P_jump: f64,
}

/// Sampler of [`LimitLawSample`] from an empirical passage-time sample:
/// `T_x = U·τ*` with `τ*` drawn proportionally to its value.
#[derive(Debug, Clone)]
pub struct LimitLawSampler {
    a: f64,
    alpha: f64,
    taus: Vec<f64>,
    cumulative: Vec<f64>,
}

impl LimitLawSampler {
    pub fn new(model: &LevyModel, tau_samples: &[f64]) -> Result<Self> {
        if tau_samples.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if tau_samples.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return Err(domain("passage times must be finite and non-negative"));
        }
        let a = model.require_negative_drift()?;
        let alpha = model.require_tail()?.alpha();
        let mut acc = 0.0;
        let cumulative: Vec<f64> = tau_samples
            .iter()
            .map(|&t| {
                acc += t;
                acc
            })
            .collect();
        if acc == 0.0 {
            return Err(Error::Degenerate("all passage times are zero".into()));
        }
        Ok(Self {
            a,
            alpha,
            taus: tau_samples.to_vec(),
            cumulative,
        })
    }

    pub fn sample(&self, rng: &mut Rng) -> LimitLawSample {
        let total = *self.cumulative.last().expect("nonempty");
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.taus.len() - 1);
        let t_x = rng.random::<f64>() * self.taus[i];
        let p_jump = self.a * open_unit(rng).powf(-1.0 / self.alpha);
        LimitLawSample {
            T_x: t_x,
            P_jump: p_jump,
        }
    }

    /// `E[T_x] = Σ τᵢ² / (2 Σ τᵢ)` for this sample.
    pub fn mean_time(&self) -> f64 {
        let sq: f64 = self.taus.iter().map(|t| t * t).sum();
        0.5 * sq / self.cumulative.last().expect("nonempty")
    }

    /// Size-biased mean `Σ τᵢ² / Σ τᵢ` of the resampled `τ*`.
    pub fn size_biased_mean(&self) -> f64 {
        2.0 * self.mean_time()
    }
}

/// A single draw with a freshly built sampler.
pub fn sample_limit_law(model: &LevyModel, x: f64, tau_samples: &[f64], rng: &mut Rng) -> Result<LimitLawSample> {
    if !(x > 0.0) {
        return Err(domain(format!("start x must be positive, got {x}")));
    }
    Ok(LimitLawSampler::new(model, tau_samples)?.sample(rng))
}

/// Surrogate for `∫_0^∞ E[C_F(s)] ds`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitCoefficient {
    /// Value at `T_big` with the Pareto floor at `a·t0`.
    pub estimate: McEstimate,
    /// `(T, C_{F,T})` for `T ∈ {T_big/4, T_big/2, T_big}` on shared draws.
    pub ladder: Vec<(f64, McEstimate)>,
    pub t0: f64,
    /// Same draws with the floor at `2·a·t0`.
    pub estimate_2t0: McEstimate,
    /// `|C(2 t0) − C(t0)| / C(t0)`.
    pub t0_shift: f64,
    pub monotone_in_t: bool,
    pub s_max: f64,
}

/// [`limit_coefficient_cf_with_floor`] with `t0 = 10⁴ / a`.
pub fn limit_coefficient_cf(
    model: &LevyModel,
    f: &FSpec,
    t_big: f64,
    s_max: f64,
    mc: &McConfig,
) -> Result<LimitCoefficient> {
    let a = model.require_negative_drift()?;
    limit_coefficient_cf_with_floor(model, f, t_big, s_max, 1e4 / a, mc)
}

/// Nested Monte Carlo of `∫_0^{s_max} E[F(A_s(γξ) + e^{−γ(ξ_s + J)} A_T(γξ̂))] ds`
/// with `J = a·t0·U^{−1/α}`, `s` uniform on `(0, s_max]` and `ξ̂` an
/// independent copy on `[0, T]`.
pub fn limit_coefficient_cf_with_floor(
    model: &LevyModel,
    f: &FSpec,
    t_big: f64,
    s_max: f64,
    t0: f64,
    mc: &McConfig,
) -> Result<LimitCoefficient> {
    mc.require(2)?;
    f.validate()?;
    let a = model.require_negative_drift()?;
    let alpha = model.require_tail()?.alpha();
    for (name, v) in [("T_big", t_big), ("s_max", s_max), ("t0", t0)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(domain(format!("{name} must be positive, got {v}")));
        }
    }
    let gamma = f.path_gamma();
    let horizons = [0.25 * t_big, 0.5 * t_big, t_big];
    let floor = a * t0;
    let m = par_moments::<4, _>(mc.n, &mc.stream, |_, rng| {
        let s = s_max * open_unit(rng);
        let outer = sample_path_with(model, 0.0, s, mc.step, rng)?;
        let log_as = exp_functional_unchecked(&outer, s, gamma).log_value;
        let xi_s = outer.end_value();
        let j = floor * open_unit(rng).powf(-1.0 / alpha);
        let inner = sample_path_with(model, 0.0, t_big, mc.step, rng)?;
        let mut out = [0.0; 4];
        let value = |jump: f64, horizon: f64| {
            let log_inner = exp_functional_unchecked(&inner, horizon, gamma).log_value;
            let tail = -gamma * (xi_s + jump) + log_inner;
            s_max * eval_f_log(f, log_add(log_as, tail))
        };
        for (o, &h) in out.iter_mut().zip(&horizons) {
            *o = value(j, h);
        }
        out[3] = value(2.0 * j, t_big);
        Ok(out)
    })?;
    let seed = mc.seed();
    let ladder: Vec<(f64, McEstimate)> = horizons
        .iter()
        .enumerate()
        .map(|(i, &h)| (h, m.estimate(i, seed)))
        .collect();
    let estimate = m.estimate(2, seed);
    let estimate_2t0 = m.estimate(3, seed);
    let monotone_in_t = ladder.windows(2).all(|w| w[0].1.value >= w[1].1.value);
    let t0_shift = if estimate.value == 0.0 {
        0.0
    } else {
        ((estimate_2t0.value - estimate.value) / estimate.value).abs()
    };
    Ok(LimitCoefficient {
        estimate,
        ladder,
        t0,
        estimate_2t0,
        t0_shift,
        monotone_in_t,
        s_max,
    })
}

#[inline]
fn log_add(x: f64, y: f64) -> f64 {
    let hi = x.max(y);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((x - hi).exp() + (y - hi).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathsim::RngStream;

    #[test]
    fn pareto_median_and_degenerate_times() {
        let m = LevyModel::canonical();
        let s = LimitLawSampler::new(&m, &[1.0]).unwrap();
        let mut rng = RngStream::new(1, 0).rng();
        let mut p: Vec<f64> = Vec::new();
        let mut t: Vec<f64> = Vec::new();
        for _ in 0..20_000 {
            let d = s.sample(&mut rng);
            assert!(d.P_jump >= 1.0 && (0.0..=1.0).contains(&d.T_x));
            p.push(d.P_jump);
            t.push(d.T_x);
        }
        p.sort_by(f64::total_cmp);
        let median = p[p.len() / 2];
        assert!((median - 2f64.sqrt()).abs() < 0.03, "{median}");
        let mean_t = t.iter().sum::<f64>() / t.len() as f64;
        assert!((mean_t - 0.5).abs() < 0.01);
        assert_eq!(s.mean_time(), 0.5);
    }

    #[test]
    fn sampler_errors() {
        let m = LevyModel::canonical();
        assert!(matches!(LimitLawSampler::new(&m, &[]), Err(Error::TooFewSamples { .. })));
        assert!(LimitLawSampler::new(&m, &[0.0, 0.0]).is_err());
        assert!(sample_limit_law(&m, 0.0, &[1.0], &mut RngStream::new(1, 0).rng()).is_err());
    }

    #[test]
    fn zero_f_gives_zero() {
        let m = LevyModel::canonical();
        let f = FSpec::cbre_survival(0.0, 1.0, 1.0);
        let c = limit_coefficient_cf(&m, &f, 20.0, 5.0, &McConfig::new(300, 2)).unwrap();
        assert_eq!(c.estimate.value, 0.0);
        assert!(c.monotone_in_t);
    }

    #[test]
    fn ladder_is_monotone() {
        let m = LevyModel::canonical();
        let f = FSpec::cbre_survival(1.0, 1.0, 1.0);
        // a low floor keeps the inner term visible so the ladder is not flat
        let c = limit_coefficient_cf_with_floor(&m, &f, 8.0, 5.0, 0.5, &McConfig::new(3000, 4)).unwrap();
        assert!(c.monotone_in_t);
        assert!(c.ladder[0].1.value > c.ladder[2].1.value);
        assert!(c.estimate_2t0.value >= c.estimate.value);
    }
}
