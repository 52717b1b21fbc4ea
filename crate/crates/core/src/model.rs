//! Lévy model family with a regularly varying right tail.
//!
//! The jump part is a compound Poisson process whose Lévy measure lives on
//! `[x0, ∞)` with tail `ν̄(x) = C x^{-α} ℓ(x)`; below the cutoff the tail is
//! flat, `ν̄(x) = ν̄(x0)`, so the total jump rate is finite and every jump can
//! be drawn by inverting `ν̄`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::quad;

/// Slowly varying factor of the tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowlyVarying {
    /// `ℓ ≡ 1` (the constant is carried by [`TailSpec::scale`]).
    Constant,
    /// `ℓ(x) = (ln(e + x))^p`.
    LogPower(f64),
}

impl SlowlyVarying {
    #[inline]
    fn factor(self, x: f64) -> f64 {
        match self {
            SlowlyVarying::Constant => 1.0,
            SlowlyVarying::LogPower(p) => (std::f64::consts::E + x).ln().powf(p),
        }
    }

    /// `x ℓ'(x) / ℓ(x)`
    #[inline]
    fn log_slope(self, x: f64) -> f64 {
        match self {
            SlowlyVarying::Constant => 0.0,
            SlowlyVarying::LogPower(p) => {
                let ex = std::f64::consts::E + x;
                p * x / (ex * ex.ln())
            }
        }
    }
}

/// Right tail of the Lévy measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSpec {
    alpha: f64,
    x0: f64,
    scale: f64,
    slowly_varying: SlowlyVarying,
}

impl TailSpec {
    pub fn new(alpha: f64, x0: f64, scale: f64, slowly_varying: SlowlyVarying) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidModel {
                field: "alpha",
                reason: format!("tail index must be positive and finite, got {alpha}"),
            });
        }
        if !(x0.is_finite() && x0 > 0.0) {
            return Err(Error::InvalidModel {
                field: "x0",
                reason: format!("cutoff must be positive, got {x0}"),
            });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidModel {
                field: "scale",
                reason: format!("scale must be positive, got {scale}"),
            });
        }
        if let SlowlyVarying::LogPower(p) = slowly_varying {
            // x ℓ'/ℓ < p, so p < α keeps ν̄ strictly decreasing.
            if !p.is_finite() || p >= alpha {
                return Err(Error::InvalidModel {
                    field: "sv",
                    reason: format!("log power must be finite and below alpha, got {p}"),
                });
            }
        }
        Ok(Self {
            alpha,
            x0,
            scale,
            slowly_varying,
        })
    }

    /// Pareto tail `ν̄(x) = C (x / x0)^{-α}`-style with `ν̄(x) = scale · x^{-α}`.
    pub fn pareto(alpha: f64, x0: f64, scale: f64) -> Result<Self> {
        Self::new(alpha, x0, scale, SlowlyVarying::Constant)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn slowly_varying(&self) -> SlowlyVarying {
        self.slowly_varying
    }

    /// `ν̄(x)`, flat below the cutoff. Callers guarantee `x > 0`.
    #[inline]
    pub fn tail_mass(&self, x: f64) -> f64 {
        let x = x.max(self.x0);
        if x == f64::INFINITY {
            return 0.0;
        }
        self.scale * x.powf(-self.alpha) * self.slowly_varying.factor(x)
    }

    /// Total compound Poisson rate `ν̄(x0)`.
    pub fn total_rate(&self) -> f64 {
        self.tail_mass(self.x0)
    }

    /// Jump density `-dν̄/dx` for `x > x0`, zero below.
    pub fn density(&self, x: f64) -> f64 {
        if x < self.x0 {
            return 0.0;
        }
        self.tail_mass(x) * (self.alpha - self.slowly_varying.log_slope(x)) / x
    }

    /// Smallest `x ≥ x0` with `ν̄(x) = v`, for `v ∈ (0, ν̄(x0)]`.
    pub fn inverse_tail(&self, v: f64) -> f64 {
        if v >= self.total_rate() {
            return self.x0;
        }
        if v <= 0.0 {
            return f64::INFINITY;
        }
        match self.slowly_varying {
            SlowlyVarying::Constant => (self.scale / v).powf(1.0 / self.alpha),
            SlowlyVarying::LogPower(_) => self.invert_numerically(v),
        }
    }

    fn invert_numerically(&self, v: f64) -> f64 {
        // g(y) = ln ν̄(e^y) - ln v is strictly decreasing in y = ln x.
        let target = v.ln();
        let g = |y: f64| self.tail_mass(y.exp()).ln() - target;
        let mut lo = self.x0.ln();
        let mut hi = lo + 1.0;
        while g(hi) > 0.0 {
            hi = lo + 2.0 * (hi - lo);
            if hi > 700.0 {
                return f64::INFINITY;
            }
        }
        let mut y = ((self.scale.ln() - target) / self.alpha).clamp(lo, hi);
        for _ in 0..100 {
            let gy = g(y);
            if gy > 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let slope = -(self.alpha - self.slowly_varying.log_slope(y.exp()));
            let mut next = y - gy / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - y).abs() < 1e-15 * y.abs().max(1.0) {
                y = next;
                break;
            }
            y = next;
        }
        y.exp()
    }

    /// Draws a jump from `ν` restricted to `(level, ∞)`, normalized, with
    /// `u ∈ (0, 1]` by inversion. Levels below `x0` give the full jump law.
    #[inline]
    pub fn sample_above(&self, level: f64, u: f64) -> f64 {
        let base = self.tail_mass(level);
        match self.slowly_varying {
            SlowlyVarying::Constant => {
                let level = level.max(self.x0);
                level * u.powf(-1.0 / self.alpha)
            }
            SlowlyVarying::LogPower(_) => self.inverse_tail(base * u),
        }
    }

    /// Draws a jump from `ν` restricted to `[x0, cap]`, with `u ∈ (0, 1]`.
    #[inline]
    pub fn sample_below(&self, cap: f64, u: f64) -> f64 {
        let top = self.tail_mass(cap);
        let total = self.total_rate();
        let v = top + u * (total - top);
        self.inverse_tail(v).min(cap)
    }

    /// `∫_{(level, ∞)} u ν(du)`; infinite when `α ≤ 1`.
    pub fn first_moment_above(&self, level: f64) -> f64 {
        if self.alpha <= 1.0 {
            return f64::INFINITY;
        }
        let l = level.max(self.x0);
        // ∫_{(l,∞)} u ν(du) = l ν̄(l) + ∫_l^∞ ν̄(u) du
        l * self.tail_mass(l) + self.integrated_tail(l)
    }

    /// `∫_l^∞ ν̄(u) du` for `l ≥ x0`.
    fn integrated_tail(&self, l: f64) -> f64 {
        let am1 = self.alpha - 1.0;
        let lead = self.scale * l.powf(-am1) / am1;
        match self.slowly_varying {
            SlowlyVarying::Constant => lead,
            sv @ SlowlyVarying::LogPower(_) => {
                // u = l s^{-1/(α-1)} maps (0,1] onto [l,∞) with Jacobian
                // absorbing the power law exactly.
                lead * quad::dyadic_unit(|s| sv.factor(l * s.powf(-1.0 / am1)))
            }
        }
    }
}

/// Treatment of infinite-activity jumps below a small cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SmallJumps {
    #[default]
    None,
    /// Jumps of size at most `epsilon` replaced by a Brownian term whose
    /// variance per unit time is `variance` (the second moment of the
    /// small-jump measure).
    GaussianApprox { epsilon: f64, variance: f64 },
}

/// Light left tail: downward jumps at `rate` with exponential sizes of
/// mean `mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeftJumps {
    pub rate: f64,
    pub mean: f64,
}

/// `ξ_t = ξ_0 + drift·t + σ B_t + (compound Poisson jumps)`, stored in
/// simulation form. The negated mean `a = -E[ξ_1]` is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    drift: f64,
    sigma: f64,
    tail: Option<TailSpec>,
    small_jump: SmallJumps,
    left_jumps: Option<LeftJumps>,
}

impl LevyModel {
    pub fn new(drift: f64, sigma: f64, tail: Option<TailSpec>) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::InvalidModel {
                field: "drift",
                reason: "must be finite".into(),
            });
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidModel {
                field: "sigma",
                reason: format!("must be non-negative, got {sigma}"),
            });
        }
        Ok(Self {
            drift,
            sigma,
            tail,
            small_jump: SmallJumps::None,
            left_jumps: None,
        })
    }

    /// Compound Poisson with Pareto(α=2) jumps above 1 at rate 1 and drift
    /// −3, so `E[ξ_1] = −1`.
    pub fn canonical() -> Self {
        Self::new(-3.0, 0.0, Some(TailSpec::pareto(2.0, 1.0, 1.0).expect("valid")))
            .expect("valid")
    }

    /// Deterministic drift, no jumps, no diffusion.
    pub fn drift_only(drift: f64) -> Self {
        Self::new(drift, 0.0, None).expect("finite drift")
    }

    /// Brownian motion with drift.
    pub fn brownian(drift: f64, sigma: f64) -> Result<Self> {
        Self::new(drift, sigma, None)
    }

    pub fn with_small_jumps(mut self, small: SmallJumps) -> Result<Self> {
        if let SmallJumps::GaussianApprox { epsilon, variance } = small {
            if !(epsilon > 0.0 && variance >= 0.0 && variance.is_finite()) {
                return Err(Error::InvalidModel {
                    field: "small_jump",
                    reason: "epsilon must be positive and variance non-negative".into(),
                });
            }
            if let Some(tail) = &self.tail {
                if epsilon > tail.x0() {
                    return Err(Error::InvalidModel {
                        field: "small_jump",
                        reason: "epsilon must not exceed the jump cutoff x0".into(),
                    });
                }
            }
        }
        self.small_jump = small;
        Ok(self)
    }

    pub fn with_left_jumps(mut self, left: LeftJumps) -> Result<Self> {
        if !(left.rate >= 0.0 && left.mean > 0.0 && left.rate.is_finite() && left.mean.is_finite()) {
            return Err(Error::InvalidModel {
                field: "left_jumps",
                reason: "rate must be non-negative and mean positive".into(),
            });
        }
        self.left_jumps = Some(left);
        Ok(self)
    }

    pub fn with_drift(&self, drift: f64) -> Result<Self> {
        let mut m = self.clone();
        if !drift.is_finite() {
            return Err(Error::InvalidModel {
                field: "drift",
                reason: "must be finite".into(),
            });
        }
        m.drift = drift;
        Ok(m)
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tail(&self) -> Option<&TailSpec> {
        self.tail.as_ref()
    }

    pub fn small_jump(&self) -> SmallJumps {
        self.small_jump
    }

    pub fn left_jumps(&self) -> Option<LeftJumps> {
        self.left_jumps
    }

    /// Standard deviation per unit time of the Gaussian part, including the
    /// small-jump substitute.
    pub fn diffusion_sigma(&self) -> f64 {
        let extra = match self.small_jump {
            SmallJumps::None => 0.0,
            SmallJumps::GaussianApprox { variance, .. } => variance,
        };
        (self.sigma * self.sigma + extra).sqrt()
    }

    /// Whether paths are piecewise linear between jumps.
    pub fn is_piecewise_linear(&self) -> bool {
        self.diffusion_sigma() == 0.0
    }

    /// Total rate of upward jumps.
    pub fn jump_rate(&self) -> f64 {
        self.tail.map_or(0.0, |t| t.total_rate())
    }

    pub fn left_rate(&self) -> f64 {
        self.left_jumps.map_or(0.0, |l| l.rate)
    }

    /// `ν̄(x)`; errors for `x ≤ 0`.
    pub fn tail_mass(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(domain(format!("tail_mass needs x > 0, got {x}")));
        }
        Ok(self.tail.map_or(0.0, |t| t.tail_mass(x)))
    }

    /// `E[ξ_1]`.
    pub fn mean_drift(&self) -> Result<f64> {
        let jumps = match &self.tail {
            None => 0.0,
            Some(t) if t.alpha() <= 1.0 => {
                return Err(Error::InvalidModel {
                    field: "alpha",
                    reason: format!("mean jump is infinite for alpha = {} <= 1", t.alpha()),
                })
            }
            Some(t) => t.first_moment_above(0.0),
        };
        let left = self.left_jumps.map_or(0.0, |l| l.rate * l.mean);
        Ok(self.drift + jumps - left)
    }

    /// `a = -E[ξ_1]`; positive in the negative-drift regime.
    pub fn negated_mean(&self) -> Result<f64> {
        self.mean_drift().map(|m| -m)
    }

    /// `a`, failing unless it is positive.
    pub(crate) fn require_negative_drift(&self) -> Result<f64> {
        let a = self.negated_mean()?;
        if a > 0.0 {
            Ok(a)
        } else {
            Err(Error::Inapplicable(format!(
                "needs E[xi_1] < 0, model has E[xi_1] = {}",
                -a
            )))
        }
    }

    pub(crate) fn require_tail(&self) -> Result<&TailSpec> {
        self.tail
            .as_ref()
            .ok_or_else(|| Error::Inapplicable("model has no heavy right tail".into()))
    }

    pub fn validate_heavy_tail_conditions(&self) -> ConditionReport {
        let mut checks = Vec::new();
        let regular = match &self.tail {
            None => {
                checks.push(ConditionCheck::new(
                    "regular_variation",
                    false,
                    "no jump part; right tail is light",
                ));
                false
            }
            Some(t) => {
                let ok = t.alpha() > 1.0;
                checks.push(ConditionCheck::new(
                    "regular_variation",
                    ok,
                    format!("tail index alpha = {} (needs > 1)", t.alpha()),
                ));
                ok
            }
        };
        // Power-law density times a smooth slowly varying factor satisfies
        // the local tail condition exactly.
        let local = regular;
        checks.push(ConditionCheck::new(
            "local_density",
            local,
            if local {
                "jump density is alpha x^-1 nu_bar(x) (1 + o(1))".to_string()
            } else {
                "requires a regularly varying tail".to_string()
            },
        ));
        let mean = self.mean_drift().ok();
        let negative = mean.is_some_and(|m| m < 0.0);
        checks.push(ConditionCheck::new(
            "negative_mean",
            negative,
            match mean {
                Some(m) => format!("E[xi_1] = {m}"),
                None => "mean undefined".into(),
            },
        ));

        let mut applicable = vec!["jump-count-poisson", "jump-time-uniform", "cbre-regimes"];
        if !regular {
            applicable.retain(|id| *id == "cbre-regimes");
        }
        if regular && negative {
            applicable.extend([
                "positivity-rate",
                "passage-rate",
                "size-biased-jump",
                "event-equivalence",
            ]);
            if local {
                applicable.extend([
                    "laplace-positive",
                    "conditional-laplace",
                    "reflected-joint",
                    "limit-coefficient",
                ]);
            }
        }
        let regime = match mean {
            Some(m) if m > 0.0 => "supercritical",
            Some(m) if m == 0.0 => "critical",
            Some(_) => "subcritical",
            None => "undefined",
        };
        ConditionReport {
            checks,
            all_pass: regular && local && negative,
            applicable_theorems: applicable.into_iter().map(String::from).collect(),
            cbre_regime: regime.to_string(),
        }
    }

    pub fn to_file(&self) -> ModelFile {
        let (alpha, x0, scale, sv) = match &self.tail {
            Some(t) => (
                t.alpha(),
                t.x0(),
                t.scale(),
                match t.slowly_varying() {
                    SlowlyVarying::Constant => SvFile::Const,
                    SlowlyVarying::LogPower(p) => SvFile::LogP(p),
                },
            ),
            None => (2.0, 1.0, 0.0, SvFile::Const),
        };
        ModelFile {
            drift: self.drift,
            sigma: self.sigma,
            alpha,
            x0,
            scale,
            sv,
            small_jump: match self.small_jump {
                SmallJumps::None => SmallJumpFile::None,
                SmallJumps::GaussianApprox { epsilon, variance } => {
                    SmallJumpFile::GaussianApprox { epsilon, variance }
                }
            },
            left_jumps: self.left_jumps,
        }
    }

    /// Short content hash of the canonical model file.
    pub fn model_hash(&self) -> String {
        let canonical = serde_json::to_vec(&self.to_file()).expect("model serializes");
        let digest = Sha256::digest(&canonical);
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

impl ConditionCheck {
    fn new(name: &str, holds: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            holds,
            detail: detail.into(),
        }
    }
}

/// Which standing assumptions hold, and which verification runs they admit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub checks: Vec<ConditionCheck>,
    pub all_pass: bool,
    pub applicable_theorems: Vec<String>,
    pub cbre_regime: String,
}

impl ConditionReport {
    pub fn holds(&self, name: &str) -> bool {
        self.checks.iter().any(|c| c.name == name && c.holds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SvFile {
    #[serde(rename = "const")]
    Const,
    #[serde(rename = "logp")]
    LogP(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum SmallJumpFile {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "gaussian_approx")]
    GaussianApprox { epsilon: f64, variance: f64 },
}

/// On-disk model description. `scale = 0` means no jump part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub drift: f64,
    #[serde(default)]
    pub sigma: f64,
    pub alpha: f64,
    pub x0: f64,
    pub scale: f64,
    #[serde(default = "default_sv")]
    pub sv: SvFile,
    #[serde(default)]
    pub small_jump: SmallJumpFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_jumps: Option<LeftJumps>,
}

fn default_sv() -> SvFile {
    SvFile::Const
}

impl TryFrom<ModelFile> for LevyModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let tail = if f.scale == 0.0 {
            None
        } else {
            let sv = match f.sv {
                SvFile::Const => SlowlyVarying::Constant,
                SvFile::LogP(p) => SlowlyVarying::LogPower(p),
            };
            Some(TailSpec::new(f.alpha, f.x0, f.scale, sv)?)
        };
        let mut model = LevyModel::new(f.drift, f.sigma, tail)?;
        model = model.with_small_jumps(match f.small_jump {
            SmallJumpFile::None => SmallJumps::None,
            SmallJumpFile::GaussianApprox { epsilon, variance } => {
                SmallJumps::GaussianApprox { epsilon, variance }
            }
        })?;
        if let Some(left) = f.left_jumps {
            model = model.with_left_jumps(left)?;
        }
        Ok(model)
    }
}

impl LevyModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::InvalidModel {
            field: "model",
            reason: e.to_string(),
        })?;
        LevyModel::try_from(file)
    }
}

/// Test function `F` applied to exponential functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FKind {
    /// `F(z) = 1 − exp{−x (c γ z)^{−1/γ}}`; evaluated on `A_t(γξ)`.
    CbreSurvival { x: f64, c: f64, gamma: f64 },
    /// `F(z) = min(1, z^{−β})`.
    PowerCutoff { beta: f64 },
    /// Points `(z, F(z))`, interpolated log-linearly, clamped outside.
    Table { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FSpec {
    pub kind: FKind,
    /// Exponent with `sup_z z^β F(z) < ∞`, in `(0, 1)`.
    pub beta: f64,
    /// Lipschitz checks are made on `[δ, ∞)`.
    pub lipschitz_floor: f64,
}

impl FSpec {
    pub fn cbre_survival(x: f64, c: f64, gamma: f64) -> Self {
        Self {
            kind: FKind::CbreSurvival { x, c, gamma },
            beta: 0.5,
            lipschitz_floor: 1e-3,
        }
    }

    pub fn power_cutoff(beta: f64) -> Self {
        Self {
            kind: FKind::PowerCutoff { beta },
            beta: beta.min(0.99),
            lipschitz_floor: 1e-3,
        }
    }

    pub fn table(points: Vec<(f64, f64)>) -> Self {
        Self {
            kind: FKind::Table { points },
            beta: 0.5,
            lipschitz_floor: 1e-3,
        }
    }

    /// Scale applied to the process inside the functional: `A_t(γξ)` for the
    /// branching survival function, `A_t(ξ)` otherwise.
    pub fn path_gamma(&self) -> f64 {
        match self.kind {
            FKind::CbreSurvival { gamma, .. } => gamma,
            _ => 1.0,
        }
    }

    /// `F(0+)`.
    pub fn sup(&self) -> f64 {
        match &self.kind {
            FKind::CbreSurvival { x, .. } => {
                if *x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            FKind::PowerCutoff { .. } => 1.0,
            FKind::Table { points } => points.first().map_or(0.0, |p| p.1),
        }
    }

    /// Evaluates `F(z)` for `z > 0`.
    pub fn eval(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(domain(format!("F needs z > 0, got {z}")));
        }
        Ok(self.eval_unchecked(z))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, z: f64) -> f64 {
        match &self.kind {
            FKind::CbreSurvival { x, c, gamma } => {
                if *x == 0.0 {
                    return 0.0;
                }
                if z == f64::INFINITY {
                    return 0.0;
                }
                let u = (c * gamma * z).powf(-1.0 / gamma);
                -(-x * u).exp_m1()
            }
            FKind::PowerCutoff { beta } => {
                if z <= 1.0 {
                    1.0
                } else {
                    z.powf(-beta)
                }
            }
            FKind::Table { points } => table_eval(points, z),
        }
    }

    /// Checks boundedness, monotonicity, vanishing power decay and
    /// Lipschitz continuity away from zero on a logarithmic grid.
    pub fn validate(&self) -> Result<FValidation> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidF(format!("beta must lie in (0,1), got {}", self.beta)));
        }
        if !(self.lipschitz_floor > 0.0) {
            return Err(Error::InvalidF("lipschitz_floor must be positive".into()));
        }
        match &self.kind {
            FKind::CbreSurvival { x, c, gamma } => {
                if !(*x >= 0.0 && *c > 0.0 && *gamma > 0.0 && *gamma <= 1.0) {
                    return Err(Error::InvalidF(
                        "cbre_survival needs x >= 0, c > 0, gamma in (0,1]".into(),
                    ));
                }
            }
            FKind::PowerCutoff { beta } => {
                if !(*beta > 0.0) {
                    return Err(Error::InvalidF("power_cutoff exponent must be positive".into()));
                }
            }
            FKind::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidF("table needs at least two points".into()));
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(Error::InvalidF("table abscissae must increase".into()));
                    }
                    if w[1].1 > w[0].1 {
                        return Err(Error::InvalidF("table values must be non-increasing".into()));
                    }
                }
                if points.iter().any(|p| !(p.0 > 0.0) || !(p.1 >= 0.0) || !p.1.is_finite()) {
                    return Err(Error::InvalidF("table needs z > 0 and finite F >= 0".into()));
                }
            }
        }

        let grid: Vec<f64> = (-60..=120).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
        let values: Vec<f64> = grid.iter().map(|&z| self.eval_unchecked(z)).collect();
        let bound = self.sup();
        let mut weighted_sup_low = 0.0_f64;
        let mut weighted_sup_high = 0.0_f64;
        let mut lipschitz = 0.0_f64;
        for (i, (&z, &f)) in grid.iter().zip(values.iter()).enumerate() {
            if !f.is_finite() || f < 0.0 || f > bound * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::InvalidF(format!("F({z}) = {f} is not bounded by F(0+)")));
            }
            if i > 0 && f > values[i - 1] * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::InvalidF(format!("F increases near z = {z}")));
            }
            let w = z.powf(self.beta) * f;
            if z <= 1e6 {
                weighted_sup_low = weighted_sup_low.max(w);
            } else {
                weighted_sup_high = weighted_sup_high.max(w);
            }
            if i > 0 && grid[i - 1] >= self.lipschitz_floor {
                let slope = (values[i - 1] - f).abs() / (z - grid[i - 1]);
                lipschitz = lipschitz.max(slope);
            }
        }
        if weighted_sup_high > 10.0 * weighted_sup_low + 1e-300 {
            return Err(Error::InvalidF(format!(
                "z^beta F(z) grows without bound (beta = {}); F does not vanish fast enough",
                self.beta
            )));
        }
        Ok(FValidation {
            weighted_sup: weighted_sup_low.max(weighted_sup_high),
            lipschitz_constant: lipschitz,
        })
    }
}

/// Grid diagnostics from [`FSpec::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FValidation {
    pub weighted_sup: f64,
    pub lipschitz_constant: f64,
}

fn table_eval(points: &[(f64, f64)], z: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if z <= first.0 {
        return first.1;
    }
    if z >= last.0 {
        return last.1;
    }
    let i = points.partition_point(|p| p.0 <= z);
    let (z0, f0) = points[i - 1];
    let (z1, f1) = points[i];
    if f0 > 0.0 && f1 > 0.0 {
        let w = (z.ln() - z0.ln()) / (z1.ln() - z0.ln());
        (f0.ln() + w * (f1.ln() - f0.ln())).exp()
    } else {
        let w = (z - z0) / (z1 - z0);
        f0 + w * (f1 - f0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_tail_values() {
        let m = LevyModel::canonical();
        assert_eq!(m.tail_mass(2.0).unwrap(), 0.25);
        assert_eq!(m.tail_mass(1.0).unwrap(), 1.0);
        assert_eq!(m.tail_mass(0.5).unwrap(), 1.0);
        assert!(m.tail_mass(0.0).is_err());
        assert!(m.tail_mass(-1.0).is_err());
    }

    #[test]
    fn canonical_mean() {
        let m = LevyModel::canonical();
        assert!((m.mean_drift().unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(LevyModel::drift_only(-3.0).mean_drift().unwrap(), -3.0);
        let with_bm = LevyModel::new(-3.0, 0.5, m.tail().copied()).unwrap();
        assert!((with_bm.mean_drift().unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn infinite_mean_rejected() {
        let tail = TailSpec::pareto(0.9, 1.0, 1.0).unwrap();
        let m = LevyModel::new(-3.0, 0.0, Some(tail)).unwrap();
        assert!(matches!(m.mean_drift(), Err(Error::InvalidModel { field: "alpha", .. })));
        let report = m.validate_heavy_tail_conditions();
        assert!(!report.holds("regular_variation"));
        assert!(!report.all_pass);
    }

    #[test]
    fn condition_report_regimes() {
        let r = LevyModel::canonical().validate_heavy_tail_conditions();
        assert!(r.all_pass);
        assert_eq!(r.cbre_regime, "subcritical");
        assert!(r.applicable_theorems.iter().any(|t| t == "passage-rate"));

        let up = LevyModel::canonical().with_drift(-1.0).unwrap();
        let r = up.validate_heavy_tail_conditions();
        assert!(!r.holds("negative_mean"));
        assert!(!r.applicable_theorems.iter().any(|t| t == "passage-rate"));
        assert!(r.applicable_theorems.iter().any(|t| t == "cbre-regimes"));
        assert_eq!(r.cbre_regime, "supercritical");
    }

    #[test]
    fn log_power_inverse_and_moment() {
        let tail = TailSpec::new(2.5, 1.0, 2.0, SlowlyVarying::LogPower(1.5)).unwrap();
        for &x in &[1.0, 1.7, 10.0, 333.0, 1e5] {
            let v = tail.tail_mass(x);
            let back = tail.inverse_tail(v);
            assert!((back - x).abs() < 1e-9 * x, "{x} -> {back}");
        }
        // first moment by brute-force trapezoid on a log grid
        let l: f64 = 3.0;
        let mut acc = 0.0;
        let n = 400_000;
        let (lo, hi) = (l.ln(), 1e7_f64.ln());
        let h = (hi - lo) / n as f64;
        for i in 0..=n {
            let y = lo + h * i as f64;
            let x = y.exp();
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * x * tail.density(x) * x * h;
        }
        let exact = tail.first_moment_above(l);
        let beyond = {
            // tail beyond 1e7 from the asymptotic power law
            let x = 1e7_f64;
            x * tail.tail_mass(x) * 2.5 / 1.5
        };
        assert!(((acc + beyond) - exact).abs() < 1e-5 * exact, "{acc} {exact}");
    }

    #[test]
    fn pareto_first_moment_closed_form() {
        let tail = TailSpec::pareto(2.0, 1.0, 1.0).unwrap();
        assert!((tail.first_moment_above(0.0) - 2.0).abs() < 1e-15);
        assert!((tail.first_moment_above(50.0) - 2.0 / 50.0).abs() < 1e-15);
    }

    #[test]
    fn tail_sampling_inverts() {
        let tail = TailSpec::pareto(2.0, 1.0, 1.0).unwrap();
        assert_eq!(tail.sample_above(10.0, 1.0), 10.0);
        assert!((tail.sample_above(10.0, 0.25) - 20.0).abs() < 1e-12);
        let j = tail.sample_below(5.0, 1e-12);
        assert!(j <= 5.0 && j > 4.99);
        assert!((tail.sample_below(5.0, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_file_round_trip() {
        let text = r#"{"drift": -3, "sigma": 0, "alpha": 2, "x0": 1, "scale": 1, "sv": "const"}"#;
        let m = LevyModel::from_json(text).unwrap();
        assert_eq!(m, LevyModel::canonical());
        let logp = r#"{"drift": -3, "alpha": 2, "x0": 1, "scale": 1, "sv": {"logp": 0.5},
                      "small_jump": {"gaussian_approx": {"epsilon": 0.1, "variance": 0.01}}}"#;
        let m2 = LevyModel::from_json(logp).unwrap();
        assert_eq!(m2.tail().unwrap().slowly_varying(), SlowlyVarying::LogPower(0.5));
        assert!((m2.diffusion_sigma() - 0.1).abs() < 1e-15);
        let back: ModelFile = serde_json::from_str(&serde_json::to_string(&m2.to_file()).unwrap()).unwrap();
        assert_eq!(LevyModel::try_from(back).unwrap(), m2);
        assert_ne!(m.model_hash(), m2.model_hash());
    }

    #[test]
    fn model_file_errors_name_field() {
        let bad = r#"{"drift": -3, "alpha": 2, "x0": -1, "scale": 1}"#;
        let err = LevyModel::from_json(bad).unwrap_err();
        assert!(err.to_string().contains("x0"), "{err}");
        let missing = r#"{"drift": -3, "x0": 1, "scale": 1}"#;
        let err = LevyModel::from_json(missing).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }

    #[test]
    fn f_specs_validate() {
        assert!(FSpec::cbre_survival(1.0, 1.0, 1.0).validate().is_ok());
        assert!(FSpec::cbre_survival(1.0, 2.0, 0.5).validate().is_ok());
        assert!(FSpec::power_cutoff(0.7).validate().is_ok());
        let ok = FSpec::table(vec![(0.1, 1.0), (1.0, 0.5), (100.0, 0.0)]);
        assert!(ok.validate().is_ok());
        let flat_tail = FSpec::table(vec![(0.1, 1.0), (1.0, 0.5)]);
        assert!(matches!(flat_tail.validate(), Err(Error::InvalidF(_))));
        let increasing = FSpec::table(vec![(0.1, 0.5), (1.0, 0.7), (100.0, 0.0)]);
        assert!(increasing.validate().is_err());
    }
}
