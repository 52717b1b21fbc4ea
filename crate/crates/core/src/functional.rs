//! Exponential functionals `A_t(γξ) = ∫_0^t e^{-γ ξ_s} ds` of sampled paths.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::mc::{par_moments, McConfig, McEstimate};
use crate::model::{FKind, FSpec, LevyModel};
use crate::pathsim::{sample_path_with, Path};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_bound: f64,
    /// `ln value`, finite even when `value` overflows.
    pub log_value: f64,
}

/// `ln((1 − e^{−x}) / x)`, stable for every real `x`.
#[inline]
fn log_phi(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        -0.5 * x
    } else if x > 0.0 {
        (-(-x).exp_m1()).ln() - x.ln()
    } else {
        let y = -x;
        y + (-(-y).exp_m1()).ln() - y.ln()
    }
}

/// Accumulates `Σ e^{l_i}` in log space.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    #[inline]
    fn add(&mut self, l: f64) {
        if l == f64::NEG_INFINITY {
            return;
        }
        if l <= self.max {
            self.scaled += (l - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - l).exp() + 1.0;
            self.max = l;
        }
    }

    fn ln(&self) -> f64 {
        if self.scaled == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// `∫_0^t e^{−γ ξ_s} ds`. On exact (piecewise linear) paths each segment is
/// integrated in closed form and the error bound is zero; on Brownian grids
/// the trapezoid rule is used and the bound is the summed gap between the
/// trapezoid and the log-linear closed form on each cell.
pub fn exp_functional(path: &Path, t: f64, gamma: f64) -> Result<QuadratureResult> {
    if !(t > 0.0 && t <= path.t_end()) {
        return Err(domain(format!("t = {t} outside (0, {}]", path.t_end())));
    }
    if !(gamma > 0.0) {
        return Err(domain(format!("gamma must be positive, got {gamma}")));
    }
    Ok(exp_functional_unchecked(path, t, gamma))
}

pub(crate) fn exp_functional_unchecked(path: &Path, t: f64, gamma: f64) -> QuadratureResult {
    let mut sum = LogSum::new();
    let mut err = LogSum::new();
    let exact = path.is_exact();
    for w in path.grid().windows(2) {
        let (p, q) = (w[0], w[1]);
        if p.time >= t {
            break;
        }
        let (t1, end) = if q.time > t {
            (t, p.value + (q.left - p.value) * (t - p.time) / (q.time - p.time))
        } else {
            (q.time, q.left)
        };
        let dt = t1 - p.time;
        if dt <= 0.0 {
            continue;
        }
        let closed = dt.ln() - gamma * p.value + log_phi(gamma * (end - p.value));
        if exact {
            sum.add(closed);
        } else {
            let (a, b) = (-gamma * p.value, -gamma * end);
            let hi = a.max(b);
            let trap = (0.5 * dt).ln() + hi + ((a - hi).exp() + (b - hi).exp()).ln();
            sum.add(trap);
            // trapezoid overestimates a convex integrand
            let gap = trap + (-(closed - trap).exp_m1()).max(0.0).ln();
            err.add(gap);
        }
    }
    let log_value = sum.ln();
    QuadratureResult {
        value: log_value.exp(),
        abs_error_bound: if exact { 0.0 } else { err.ln().exp() },
        log_value,
    }
}

/// `F(z)`; errors for `z ≤ 0`.
pub fn eval_f(f: &FSpec, z: f64) -> Result<f64> {
    f.eval(z)
}

/// `F(e^{l})`, avoiding overflow of `z` itself.
#[inline]
pub(crate) fn eval_f_log(f: &FSpec, log_z: f64) -> f64 {
    match &f.kind {
        FKind::CbreSurvival { x, c, gamma } => {
            if *x == 0.0 || log_z == f64::INFINITY {
                return 0.0;
            }
            let log_u = -((c * gamma).ln() + log_z) / gamma;
            if log_u > 700.0 {
                return 1.0;
            }
            -(-x * log_u.exp()).exp_m1()
        }
        FKind::PowerCutoff { beta } => {
            if log_z <= 0.0 {
                1.0
            } else {
                (-beta * log_z).exp()
            }
        }
        FKind::Table { .. } => f.eval_unchecked(log_z.exp()),
    }
}

/// Plain Monte Carlo of `E[F(A_t(γξ))]` from `ξ_0 = 0`, with `γ` taken
/// from the test function.
pub fn estimate_ef(model: &LevyModel, f: &FSpec, t: f64, mc: &McConfig) -> Result<McEstimate> {
    mc.require(100)?;
    f.validate()?;
    if !(t > 0.0) {
        return Err(domain(format!("t must be positive, got {t}")));
    }
    let gamma = f.path_gamma();
    let m = par_moments::<1, _>(mc.n, &mc.stream, |_, rng| {
        let path = sample_path_with(model, 0.0, t, mc.step, rng)?;
        let a = exp_functional_unchecked(&path, t, gamma);
        Ok([eval_f_log(f, a.log_value)])
    })?;
    Ok(m.estimate(0, mc.seed()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathsim::{GridPoint, RngStream};
    use proptest::prelude::*;

    fn gp(time: f64, left: f64, value: f64) -> GridPoint {
        GridPoint { time, left, value }
    }

    #[test]
    fn identity_and_unit_drift() {
        let zero = Path::linear(0.0, 0.0, 5.0);
        assert!((exp_functional(&zero, 5.0, 1.0).unwrap().value - 5.0).abs() < 1e-14);
        let up = Path::linear(0.0, 1.0, 2.0);
        let v = exp_functional(&up, 2.0, 1.0).unwrap();
        assert!((v.value - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
        assert_eq!(v.abs_error_bound, 0.0);
    }

    #[test]
    fn single_jump_closed_form() {
        let p = Path::from_grid(vec![gp(0.0, 0.0, 0.0), gp(1.0, -1.0, 1.0), gp(2.0, 0.0, 0.0)], 1.0).unwrap();
        // ∫_0^1 e^{s} ds + ∫_1^2 e^{s-2} ds = 2 sinh 1
        let exact = 2.0 * 1f64.sinh();
        let v = exp_functional(&p, 2.0, 1.0).unwrap().value;
        assert!(((v - exact) / exact).abs() < 1e-13, "{v} vs {exact}");
    }

    #[test]
    fn partial_horizon_and_errors() {
        let line = Path::linear(0.0, -3.0, 2.0);
        let v = exp_functional(&line, 1.0, 1.0).unwrap().value;
        assert!((v - (3f64.exp() - 1.0) / 3.0).abs() < 1e-12);
        assert!(exp_functional(&line, 3.0, 1.0).is_err());
        assert!(exp_functional(&line, 0.0, 1.0).is_err());
        assert!(exp_functional(&line, 1.0, 0.0).is_err());
    }

    #[test]
    fn cbre_f_values() {
        let f = FSpec::cbre_survival(1.0, 1.0, 1.0);
        assert!((eval_f(&f, 1.0).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!(eval_f(&f, 0.0).is_err());
        assert!(eval_f(&f, 1e300).unwrap() < 1e-299);
        assert!((eval_f(&f, 1e-300).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(eval_f(&FSpec::cbre_survival(0.0, 1.0, 1.0), 3.0).unwrap(), 0.0);
        for &z in &[1e-3, 0.7, 2.0, 55.0] {
            assert!((eval_f_log(&f, f64::ln(z)) - f.eval(z).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn deterministic_model_has_zero_variance() {
        let m = LevyModel::drift_only(-3.0);
        let f = FSpec::cbre_survival(1.0, 1.0, 1.0);
        let est = estimate_ef(&m, &f, 2.0, &McConfig::new(200, 1)).unwrap();
        let z = ((6.0f64).exp() - 1.0) / 3.0;
        assert!((est.value - f.eval(z).unwrap()).abs() < 1e-13);
        assert!(est.stderr < 1e-14);
    }

    #[test]
    fn trapezoid_bound_is_reported() {
        let m = LevyModel::brownian(0.0, 1.0).unwrap();
        let p = crate::pathsim::sample_path(&m, 0.0, 1.0, 0.01, &RngStream::new(1, 0)).unwrap();
        let q = exp_functional(&p, 1.0, 1.0).unwrap();
        assert!(q.abs_error_bound > 0.0);
        assert!(q.abs_error_bound < 1e-3 * q.value);
    }

    proptest! {
        #[test]
        fn sandwich_shift_and_monotonicity(seed in 0u64..500, h in -3.0f64..3.0, gamma in 0.2f64..1.5) {
            let m = LevyModel::canonical();
            let p = crate::pathsim::sample_path(&m, 0.5, 8.0, 0.01, &RngStream::new(seed, 1)).unwrap();
            let a4 = exp_functional(&p, 4.0, gamma).unwrap().value;
            let a8 = exp_functional(&p, 8.0, gamma).unwrap().value;
            prop_assert!(a4 <= a8);
            let (lo, hi) = p.extrema_between(0.0, 8.0);
            prop_assert!(a8 <= 8.0 * (-gamma * lo).exp() * (1.0 + 1e-12));
            prop_assert!(a8 >= 8.0 * (-gamma * hi).exp() * (1.0 - 1e-12));
            let shifted = exp_functional(&p.shifted(h), 8.0, gamma).unwrap().value;
            prop_assert!((shifted - a8 * (-gamma * h).exp()).abs() <= 1e-11 * shifted);
        }
    }
}
