//! Survival of a continuous-state branching process in a Lévy environment.
//!
//! Given the environment path `ξ`, the quenched Laplace exponent solves in
//! closed form, `u_{r,t}(λ) = (cγ ∫_r^t e^{−γξ_s} ds + λ^{−γ})^{−1/γ}`, and
//! survival to time `t` from mass `x` is `E[F_x(A_t(γξ))]` with
//! `F_x(z) = 1 − exp{−x (cγz)^{−1/γ}}`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::functional::{eval_f_log, exp_functional_unchecked};
use crate::mc::{par_diag, McConfig, McEstimate};
use crate::model::{FSpec, LevyModel};
use crate::pathsim::sample_path_with;
use crate::rarevent::{estimate_ef_stratified, StratifiedEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchingSpec {
    /// Stability index in `(0, 1]`; `1` is the Feller diffusion.
    pub gamma: f64,
    /// Branching scale.
    pub c: f64,
    /// Initial mass.
    pub x_init: f64,
}

impl BranchingSpec {
    pub fn new(gamma: f64, c: f64, x_init: f64) -> Result<Self> {
        let b = Self { gamma, c, x_init };
        b.validate()?;
        Ok(b)
    }

    pub fn feller() -> Self {
        Self {
            gamma: 1.0,
            c: 1.0,
            x_init: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidModel {
                field: "gamma",
                reason: format!("stability index must lie in (0, 1], got {}", self.gamma),
            });
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidModel {
                field: "c",
                reason: format!("branching scale must be positive, got {}", self.c),
            });
        }
        if !(self.x_init > 0.0 && self.x_init.is_finite()) {
            return Err(Error::InvalidModel {
                field: "x_init",
                reason: format!("initial mass must be positive, got {}", self.x_init),
            });
        }
        Ok(())
    }

    /// `F_x` for this mechanism.
    pub fn f_spec(&self) -> FSpec {
        FSpec::cbre_survival(self.x_init, self.c, self.gamma)
    }
}

/// Terminal value of the Laplace argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda {
    Finite(f64),
    Infinite,
}

/// `(cγA + λ^{−γ})^{−1/γ}`; `λ = ∞` drops the second term, and `A = 0`
/// with `λ = ∞` returns `+∞`.
pub fn u_solve(branching: &BranchingSpec, a_int: f64, lam: Lambda) -> Result<f64> {
    branching.validate()?;
    if !(a_int >= 0.0) {
        return Err(domain(format!("exponential functional must be non-negative, got {a_int}")));
    }
    let g = branching.gamma;
    let inv = match lam {
        Lambda::Infinite => 0.0,
        Lambda::Finite(l) if l > 0.0 => l.powf(-g),
        Lambda::Finite(l) => return Err(domain(format!("lambda must be positive, got {l}"))),
    };
    let base = branching.c * g * a_int + inv;
    if base == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(base.powf(-1.0 / g))
}

/// `1 − exp{−x u_{0,t}(λ)}` for a frozen environment with functional `A`.
pub fn quenched_extinction_complement(branching: &BranchingSpec, a_int: f64, lam: Lambda) -> Result<f64> {
    let u = u_solve(branching, a_int, lam)?;
    Ok(-(-branching.x_init * u).exp_m1())
}

/// How a survival probability was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalMethod {
    Plain,
    Stratified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalEstimate {
    pub t: f64,
    pub estimate: McEstimate,
    pub method: SurvivalMethod,
    pub strata: Option<StratifiedEstimate>,
}

fn stratifiable(env: &LevyModel, t: f64) -> bool {
    match (env.negated_mean(), env.tail()) {
        (Ok(a), Some(tail)) => a > 0.0 && a * t >= tail.x0(),
        _ => false,
    }
}

/// `P{X_t(x) > 0}`; environments with negative mean and a heavy right tail
/// go through the stratified estimator of `E[F(A_t)]`.
pub fn survival_probability(
    env: &LevyModel,
    branching: &BranchingSpec,
    t: f64,
    mc: &McConfig,
) -> Result<SurvivalEstimate> {
    branching.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(domain(format!("t must be positive, got {t}")));
    }
    let f = branching.f_spec();
    if stratifiable(env, t) {
        let s = estimate_ef_stratified(env, &f, t, mc)?;
        return Ok(SurvivalEstimate {
            t,
            estimate: s.estimate,
            method: SurvivalMethod::Stratified,
            strata: Some(s),
        });
    }
    let ladder = plain_ladder(env, &f, &[t], mc)?;
    Ok(SurvivalEstimate {
        t,
        estimate: ladder[0],
        method: SurvivalMethod::Plain,
        strata: None,
    })
}

/// `E[F(A_t)]` at every `t` of an ascending ladder from shared paths, so the
/// estimates are pathwise ordered.
pub fn plain_ladder(env: &LevyModel, f: &FSpec, ts: &[f64], mc: &McConfig) -> Result<Vec<McEstimate>> {
    mc.require(100)?;
    check_ladder(ts, 1)?;
    let t_max = *ts.last().expect("nonempty");
    let gamma = f.path_gamma();
    let m = par_diag(mc.n, ts.len(), &mc.stream, |_, rng, out| {
        let path = sample_path_with(env, 0.0, t_max, mc.step, rng)?;
        for (o, &t) in out.iter_mut().zip(ts) {
            *o = eval_f_log(f, exp_functional_unchecked(&path, t, gamma).log_value);
        }
        Ok(())
    })?;
    Ok((0..ts.len()).map(|i| m.estimate(i, mc.seed())).collect())
}

fn check_ladder(ts: &[f64], min: usize) -> Result<()> {
    if ts.len() < min {
        return Err(domain(format!("t ladder needs at least {min} points, got {}", ts.len())));
    }
    if ts.iter().any(|&t| !(t > 0.0 && t.is_finite())) || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("t ladder must be positive and strictly ascending"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Supercritical,
    Critical,
    Subcritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderPoint {
    pub t: f64,
    pub survival: f64,
    pub stderr: f64,
}

/// Log-log slope of a positive series against `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    /// `−d ln P / d ln t`.
    pub exponent: f64,
    pub stderr: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    /// `E[ξ_1]` of the environment.
    pub mean_env: f64,
    pub alpha: Option<f64>,
    pub decay_exponent_hat: Option<f64>,
    pub decay_fit: Option<PowerFit>,
    /// Subcritical: `survival(t_max) / ν̄(a·t_max)`, which is
    /// `(a t_max)^α · survival(t_max)` for a unit Pareto tail.
    pub coefficient_hat: Option<McEstimate>,
    /// Supercritical: survival at the largest `t`.
    pub plateau: Option<McEstimate>,
    pub ladder: Vec<LadderPoint>,
    /// Survival is non-increasing along the ladder within two standard errors.
    pub monotone: bool,
    pub diagnostic: Option<String>,
}

/// OLS fit of `ln y` on `ln t` with the slope error propagated from the
/// per-point relative errors.
pub fn fit_power(points: &[LadderPoint]) -> Result<PowerFit> {
    if points.len() < 2 {
        return Err(domain("power fit needs at least two points"));
    }
    if points.iter().any(|p| !(p.survival > 0.0) || !(p.t > 0.0)) {
        return Err(Error::Degenerate("power fit needs positive values".into()));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.t.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.survival.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let slope: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    let var: f64 = lx
        .iter()
        .zip(points)
        .map(|(x, p)| ((x - mx) / sxx).powi(2) * (p.stderr / p.survival).powi(2))
        .sum();
    Ok(PowerFit {
        exponent: -slope,
        stderr: var.sqrt(),
        intercept: my - slope * mx,
    })
}

/// Classifies by the sign of the environment mean and summarizes the
/// survival ladder.
pub fn classify_regime(
    env: &LevyModel,
    branching: &BranchingSpec,
    t_ladder: &[f64],
    mc: &McConfig,
) -> Result<RegimeReport> {
    branching.validate()?;
    check_ladder(t_ladder, 3)?;
    let mean_env = env.mean_drift()?;
    let regime = if mean_env > 0.0 {
        Regime::Supercritical
    } else if mean_env == 0.0 {
        Regime::Critical
    } else {
        Regime::Subcritical
    };
    let f = branching.f_spec();
    let estimates: Vec<McEstimate> = if regime == Regime::Subcritical && stratifiable(env, t_ladder[0]) {
        t_ladder
            .iter()
            .map(|&t| survival_probability(env, branching, t, mc).map(|s| s.estimate))
            .collect::<Result<_>>()?
    } else {
        plain_ladder(env, &f, t_ladder, mc)?
    };
    let ladder: Vec<LadderPoint> = t_ladder
        .iter()
        .zip(&estimates)
        .map(|(&t, e)| LadderPoint {
            t,
            survival: e.value,
            stderr: e.stderr,
        })
        .collect();
    let monotone = ladder
        .windows(2)
        .all(|w| w[1].survival <= w[0].survival + 2.0 * w[0].stderr.hypot(w[1].stderr));
    let mut diagnostic = (!monotone).then(|| "survival increases along the t ladder".to_string());
    let alpha = env.tail().map(|t| t.alpha());
    let (mut decay_fit, mut coefficient_hat, mut plateau) = (None, None, None);
    match regime {
        Regime::Supercritical => plateau = estimates.last().copied(),
        Regime::Critical | Regime::Subcritical => match fit_power(&ladder) {
            Ok(fit) => decay_fit = Some(fit),
            Err(e) => diagnostic = Some(e.to_string()),
        },
    }
    if regime == Regime::Subcritical {
        if let Some(tail) = env.tail() {
            let t_max = *t_ladder.last().expect("nonempty");
            let norm = tail.tail_mass(-mean_env * t_max);
            coefficient_hat = estimates.last().map(|e| e.scaled(1.0 / norm));
        }
    }
    Ok(RegimeReport {
        regime,
        mean_env,
        alpha,
        decay_exponent_hat: decay_fit.map(|f| f.exponent),
        decay_fit,
        coefficient_hat,
        plateau,
        ladder,
        monotone,
        diagnostic,
    })
}

impl RegimeReport {
    /// CSV `t,survival,stderr`.
    pub fn write_ladder_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,survival,stderr")?;
        for p in &self.ladder {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", p.t, p.survival, p.stderr)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn u_solve_examples() {
        let b = BranchingSpec::feller();
        assert_eq!(u_solve(&b, 0.0, Lambda::Finite(2.0)).unwrap(), 2.0);
        assert_eq!(u_solve(&b, 1.0, Lambda::Infinite).unwrap(), 1.0);
        assert!((u_solve(&b, 2.0, Lambda::Finite(1.0)).unwrap() - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(u_solve(&b, 0.0, Lambda::Infinite).unwrap(), f64::INFINITY);
        assert!(u_solve(&b, -1.0, Lambda::Infinite).is_err());
        assert!(u_solve(&b, 1.0, Lambda::Finite(0.0)).is_err());
        assert!(BranchingSpec::new(1.5, 1.0, 1.0).is_err());
        assert!(BranchingSpec::new(0.5, 0.0, 1.0).is_err());
        assert!(BranchingSpec::new(0.5, 1.0, -1.0).is_err());
    }

    #[test]
    fn frozen_environment_survival() {
        let env = LevyModel::drift_only(0.0);
        let b = BranchingSpec::feller();
        let s = survival_probability(&env, &b, 1.0, &McConfig::new(200, 1)).unwrap();
        let exact = 1.0 - (-1.0f64).exp();
        assert!((s.estimate.value - exact).abs() < 1e-12);
        assert_eq!(s.method, SurvivalMethod::Plain);
        let early = survival_probability(&env, &b, 1e-9, &McConfig::new(200, 1)).unwrap();
        assert!((early.estimate.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_environment_is_stratified() {
        let env = LevyModel::canonical();
        let s = survival_probability(&env, &BranchingSpec::feller(), 20.0, &McConfig::new(2000, 1)).unwrap();
        assert_eq!(s.method, SurvivalMethod::Stratified);
        assert!(s.estimate.value > 0.0 && s.estimate.value < 1.0);
    }

    #[test]
    fn power_fit_recovers_exponent() {
        let pts: Vec<LadderPoint> = [10.0, 20.0, 40.0]
            .iter()
            .map(|&t: &f64| LadderPoint {
                t,
                survival: 3.0 * t.powf(-1.5),
                stderr: 0.0,
            })
            .collect();
        let fit = fit_power(&pts).unwrap();
        assert!((fit.exponent - 1.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn regime_from_mean_sign() {
        let b = BranchingSpec::feller();
        let mc = McConfig::new(500, 3);
        let up = LevyModel::canonical().with_drift(-1.0).unwrap();
        let r = classify_regime(&up, &b, &[5.0, 10.0, 20.0], &mc).unwrap();
        assert_eq!(r.regime, Regime::Supercritical);
        assert!(r.plateau.unwrap().value > 0.0);
        assert!(r.decay_exponent_hat.is_none());
        let flat = LevyModel::brownian(0.0, 1.0).unwrap();
        let r = classify_regime(&flat, &b, &[5.0, 10.0, 20.0], &mc.with_step(0.1)).unwrap();
        assert_eq!(r.regime, Regime::Critical);
        assert!(r.decay_exponent_hat.is_some());
        assert!(classify_regime(&flat, &b, &[5.0, 10.0], &mc).is_err());
    }

    proptest! {
        #[test]
        fn survival_monotone_in_mass_and_lambda(a in 0.0f64..50.0, x1 in 0.01f64..5.0, dx in 0.0f64..5.0, g in 0.1f64..1.0, l in 0.01f64..100.0) {
            let b1 = BranchingSpec::new(g, 1.0, x1).unwrap();
            let b2 = BranchingSpec::new(g, 1.0, x1 + dx).unwrap();
            let s1 = quenched_extinction_complement(&b1, a, Lambda::Infinite).unwrap();
            let s2 = quenched_extinction_complement(&b2, a, Lambda::Infinite).unwrap();
            prop_assert!(s1 <= s2);
            let fin = quenched_extinction_complement(&b1, a, Lambda::Finite(l)).unwrap();
            let fin2 = quenched_extinction_complement(&b1, a, Lambda::Finite(2.0 * l)).unwrap();
            prop_assert!(fin <= fin2 + 1e-15 && fin2 <= s1 + 1e-15);
            if a > 0.0 {
                let f = b1.f_spec().eval(a).unwrap();
                prop_assert!((f - s1).abs() < 1e-12);
            }
        }
    }
}
