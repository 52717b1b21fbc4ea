//! Registry of the limit statements checked by the battery, and one runner
//! per statement producing pass/fail reports.

use serde::Serialize;
use serde_json::Value;

use crate::cbre::{classify_regime, plain_ladder, survival_probability, BranchingSpec};
use crate::error::{domain, Error, Result};
use crate::fluctuation::{
    conditional_laplace_scaled, default_horizon, estimate_mean_tau, estimate_renewal, laplace_limit_rhs,
    laplace_positive_part, occupation_cross_ratio, reflected_joint_scaled, reflected_limit_rhs,
};
use crate::mc::{par_collect, McConfig, McEstimate, DEFAULT_STEP};
use crate::model::{FSpec, LevyModel};
use crate::pathsim::sample_path_with;
use crate::rarevent::{
    estimate_ef_stratified, estimate_p_tau_exceeds, estimate_p_xi_positive, limit_coefficient_cf,
    sample_given_one_big_jump, size_biased_jump_check,
};

use super::equivalence::{event_equivalence, EventPair};
use super::stats::{chisq_poisson, ks_test};
use super::trend::{trend_check, Direction, TrendPoint};

/// Acceptance level for p-values.
pub const P_FLOOR: f64 = 0.01;

/// Slack, in combined standard errors, of the three-point trend checks.
pub const TREND_SLACK: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TheoremInfo {
    pub id: &'static str,
    /// The statement being checked.
    pub anchor: &'static str,
    pub command: &'static str,
    pub summary: &'static str,
}

pub const THEOREMS: [TheoremInfo; 11] = [
    TheoremInfo {
        id: "jump-count-poisson",
        anchor: "P{N_t^x = k} = (ν̄(x) t)^k / k! · exp{−ν̄(x) t}",
        command: "levy-bigjump verify --theorem jump-count-poisson --model MODEL --t 10 --n 100000",
        summary: "chi-square of large-jump counts above 5 against the exact Poisson law",
    },
    TheoremInfo {
        id: "jump-time-uniform",
        anchor: "given N_t^{at} = 1 the jump time is U·t with U ~ Uniform[0,1]",
        command: "levy-bigjump verify --theorem jump-time-uniform --model MODEL --t 50 --n 100000",
        summary: "KS of conditional jump times against Uniform[0,t] and of jump sizes against ν restricted to (at,∞)",
    },
    TheoremInfo {
        id: "positivity-rate",
        anchor: "P{ξ_t > 0} ~ t · ν̄(at)",
        command: "levy-bigjump verify --theorem positivity-rate --model MODEL --t 25,50,100",
        summary: "stratified P{ξ_t > 0} / (t ν̄(at)) trends toward one",
    },
    TheoremInfo {
        id: "passage-rate",
        anchor: "P_x{τ_0 > t} ~ E_x[τ_0] · ν̄(at)",
        command: "levy-bigjump verify --theorem passage-rate --model MODEL --t 25,50,100",
        summary: "stratified survival over (E_x τ_0 · ν̄(at)) trends toward one at x = 1",
    },
    TheoremInfo {
        id: "size-biased-jump",
        anchor: "P_x{Δξ_J > bt, J ≤ T | τ_0 > t} → (b/a)^{−α} E_x[τ_0 ∧ T] / E_x[τ_0]",
        command: "levy-bigjump verify --theorem size-biased-jump --model MODEL --t 100",
        summary: "first large jump law given survival, b ∈ {a, 2a}, T = 5",
    },
    TheoremInfo {
        id: "event-equivalence",
        anchor: "P{A Δ B} / P{B} → 0 for {N_t^{at} = 1} ~ {ξ_t > 0} and {τ_0 > J^{at}} ~ {τ_0 > t}",
        command: "levy-bigjump verify --theorem event-equivalence --model MODEL --t 25,50,100",
        summary: "symmetric-difference ratios decrease along the t ladder",
    },
    TheoremInfo {
        id: "laplace-positive",
        anchor: "E[e^{−λξ_t}; ξ_t ≥ 0] ~ α/(aλ) · P{ξ_1 > at}",
        command: "levy-bigjump verify --theorem laplace-positive --model MODEL --t 100 --n 1000000",
        summary: "ratio of the stratified Laplace transform to its limit within 25% and exact λ scaling",
    },
    TheoremInfo {
        id: "conditional-laplace",
        anchor: "at/P{ξ_1 > at} · E_x[e^{−λξ_t}; τ_0 > t] → C₀ α V̂(x) ∫_0^∞ e^{−λy} V(y) dy",
        command: "levy-bigjump verify --theorem conditional-laplace --model MODEL --t 25,50,100",
        summary: "scaled conditional Laplace transform against the renewal quadrature",
    },
    TheoremInfo {
        id: "reflected-joint",
        anchor: "∫_0^∞ P{S_s ≤ x, S_s − ξ_s ≤ y} ds = C₀ V(x) V̂(y)",
        command: "levy-bigjump verify --theorem reflected-joint --model MODEL --t 25,50,100",
        summary: "rank-one cross ratio of occupation integrals on {1,2}² and the scaled joint law of (S_t, S_t − ξ_t)",
    },
    TheoremInfo {
        id: "limit-coefficient",
        anchor: "E[F(A_t)] ~ ν̄(at) · ∫_0^∞ E[C_F(s)] ds",
        command: "levy-bigjump verify --theorem limit-coefficient --model MODEL --t 50,100",
        summary: "nested estimate of the limit coefficient, its monotonicity in T and the t0 sensitivity",
    },
    TheoremInfo {
        id: "cbre-regimes",
        anchor: "P{X_t > 0} = E[F_x(A_t(γξ))]: constant, t^{−1/2}, or ν̄(at) decay by the sign of E[ξ_1]",
        command: "levy-bigjump verify --theorem cbre-regimes --model MODEL --t 25,50,100",
        summary: "survival of a branching process in Lévy environment in each regime",
    },
];

pub fn theorem(id: &str) -> Option<&'static TheoremInfo> {
    THEOREMS.iter().find(|t| t.id == id)
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub theorem_id: String,
    pub test: String,
    pub statistic: f64,
    /// p-value for goodness-of-fit tests, otherwise the tolerance the
    /// statistic was compared with.
    pub p_or_slack: f64,
    pub pass: bool,
}

/// Overrides for a runner. `None` keeps the theorem's default budget.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    /// Replicates for the primary Monte Carlo component.
    pub n: Option<u64>,
    pub seed: u64,
    /// Ladder for trend checks; single-horizon theorems use its last entry.
    pub t: Option<Vec<f64>>,
    pub step: f64,
}

impl VerifyConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            n: None,
            seed,
            t: None,
            step: DEFAULT_STEP,
        }
    }

    fn mc(&self, default_n: u64, label: &str) -> McConfig {
        McConfig::new(self.n.unwrap_or(default_n), self.seed)
            .with_step(self.step)
            .child(label)
    }

    /// The override ladder, or `default` scaled by `1/a`.
    fn ladder(&self, default: &[f64], a: f64) -> Vec<f64> {
        self.t
            .clone()
            .unwrap_or_else(|| default.iter().map(|t| t / a).collect())
    }

    fn horizon(&self, default: f64) -> f64 {
        self.t.as_ref().and_then(|t| t.last().copied()).unwrap_or(default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremOutcome {
    pub id: String,
    pub reports: Vec<CheckReport>,
    pub details: Value,
}

impl TheoremOutcome {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    /// Number of individual tests; no multiplicity correction is applied.
    pub fn tests(&self) -> usize {
        self.reports.len()
    }
}

const DEFAULT_LADDER: [f64; 3] = [25.0, 50.0, 100.0];

pub fn run_theorem(id: &str, model: &LevyModel, cfg: &VerifyConfig) -> Result<TheoremOutcome> {
    let mut out = Outcome::new(id);
    match id {
        "jump-count-poisson" => jump_count_poisson(model, cfg, &mut out)?,
        "jump-time-uniform" => jump_time_uniform(model, cfg, &mut out)?,
        "positivity-rate" => positivity_rate(model, cfg, &mut out)?,
        "passage-rate" => passage_rate(model, cfg, &mut out)?,
        "size-biased-jump" => size_biased(model, cfg, &mut out)?,
        "event-equivalence" => equivalence(model, cfg, &mut out)?,
        "laplace-positive" => laplace_positive(model, cfg, &mut out)?,
        "conditional-laplace" => conditional_laplace(model, cfg, &mut out)?,
        "reflected-joint" => reflected_joint(model, cfg, &mut out)?,
        "limit-coefficient" => limit_coefficient(model, cfg, &mut out)?,
        "cbre-regimes" => cbre_regimes(model, cfg, &mut out)?,
        _ => return Err(domain(format!("unknown theorem id {id:?}"))),
    }
    Ok(out.finish())
}

struct Outcome {
    id: &'static str,
    reports: Vec<CheckReport>,
    details: serde_json::Map<String, Value>,
}

impl Outcome {
    fn new(id: &str) -> Self {
        let id = theorem(id).map_or("", |t| t.id);
        Self {
            id,
            reports: Vec::new(),
            details: serde_json::Map::new(),
        }
    }

    fn check(&mut self, test: impl Into<String>, statistic: f64, p_or_slack: f64, pass: bool) {
        self.reports.push(CheckReport {
            theorem_id: self.id.to_string(),
            test: test.into(),
            statistic,
            p_or_slack,
            pass,
        });
    }

    fn detail(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::Degenerate(e.to_string()))?;
        self.details.insert(key.to_string(), v);
        Ok(())
    }

    fn finish(self) -> TheoremOutcome {
        TheoremOutcome {
            id: self.id.to_string(),
            reports: self.reports,
            details: Value::Object(self.details),
        }
    }
}

fn negated_mean(model: &LevyModel) -> Result<f64> {
    let a = model.negated_mean()?;
    if a > 0.0 {
        Ok(a)
    } else {
        Err(Error::Inapplicable(format!("needs E[ξ_1] < 0, got {}", -a)))
    }
}

fn ratio_point(t: f64, num: &McEstimate, den: f64) -> TrendPoint {
    TrendPoint {
        t,
        value: num.value / den,
        stderr: num.stderr / den,
    }
}

/// Threshold of the jump-count check.
pub const COUNT_THRESHOLD: f64 = 5.0;

fn jump_count_poisson(model: &LevyModel, cfg: &VerifyConfig, out: &mut Outcome) -> Result<()> {
    let t = cfg.horizon(10.0);
    let mc = cfg.mc(100_000, "jump-count");
    let counts = par_collect(mc.n, &mc.stream, |_, rng| {
        sample_path_with(model, 0.0, t, mc.step, rng)?.count_large_jumps(COUNT_THRESHOLD, t)
    })?;
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0u64; max + 1];
    for c in counts {
        hist[c] += 1;
    }
    let rate = t * model.tail_mass(COUNT_THRESHOLD)?;
    let r = chisq_poisson(&hist, rate)?;
    out.check("chisq_poisson", r.statistic, r.p_value, r.p_value > P_FLOOR);
    out.detail("t", t)?;
    out.detail("threshold", COUNT_THRESHOLD)?;
    out.detail("rate", rate)?;
    out.detail("histogram", &hist)?;
    out.detail("chisq", &r)?;
    Ok(())
}

fn jump_time_uniform(model: &LevyModel, cfg: &VerifyConfig, out: &mut Outcome) -> Result<()> {
    let a = negated_mean(model)?;
    let tail = model.require_tail()?;
    let t = cfg.horizon(50.0 / a);
    let h = a * t;
    let mc = cfg.mc(10_000, "jump-time");
    let draws = par_collect(mc.n, &mc.stream, |_, rng| {
        let path = sample_given_one_big_jump(model, 0.0, t, mc.step, rng)?;
        let big: Vec<_> = path.jumps().iter().filter(|j| j.size > h).collect();
        match big.as_slice() {
            [j] => Ok((j.time, j.size)),
            _ => Err(Error::Degenerate(format!("expected one jump above {h}, found {}", big.len()))),
        }
    })?;
    let times: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let sizes: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let time_ks = ks_test(&times, |s| (s / t).clamp(0.0, 1.0))?;
    let size_ks = ks_test(&sizes, |z| {
        if z <= h {
            0.0
        } else {
            1.0 - tail.tail_mass(z) / tail.tail_mass(h)
        }
    })?;
    out.check("ks_jump_time_uniform", time_ks.statistic, time_ks.p_value, time_ks.p_value > P_FLOOR);
    out.check("ks_jump_size_tail", size_ks.statistic, size_ks.p_value, size_ks.p_value > P_FLOOR);
    out.detail("t", t)?;
    out.detail("threshold", h)?;
    out.detail("accepted", times.len())?;
    out.detail("time_ks", time_ks)?;
    out.detail("size_ks", size_ks)?;
    Ok(())
}

fn trend_report(out: &mut Outcome, test: &str, points: &[TrendPoint], dir: Direction, slack: f64) -> Result<bool> {
    let r = trend_check(points, dir, slack)?;
    out.check(test, r.worst_step, slack, r.pass);
    out.detail(test, &r)?;
    Ok(r.pass)
}

fn positivity_rate(model: &LevyModel, cfg: &VerifyConfig, out: &mut Outcome) -> Result<()> {
    let a = negated_mean(model)?;
    let ts = cfg.ladder(&DEFAULT_LADDER, a);
    let mut points = Vec::new();
    let mut raw = Vec::new();
    for (i, &t) in ts.iter().enumerate() {
        let est = estimate_p_xi_positive(model, t, &cfg.mc(100_000, &format!("positivity-{i}")))?;
        let norm = t * model.tail_mass(a * t)?;
        points.push(ratio_point(t, &est.estimate, norm));
        raw.push(est);
    }
    trend_report(out, "ratio_toward_one", &points, Direction::TowardOne, TREND_SLACK)?;
    out.detail("estimates", &raw)?;
    Ok(())
}

fn passage_rate(model: &LevyModel, cfg: &VerifyConfig, out: &mut Outcome) -> Result<()> {
    let a = negated_mean(model)?;
    let x = 1.0;
    let ts = cfg.ladder(&DEFAULT_LADDER, a);
    let tau = estimate_mean_tau(model, x, default_horizon(a, x), &cfg.mc(100_000, "mean-tau"))?;
    let mut points = Vec::new();
    let mut raw = Vec::new();
    for (i, &t) in ts.iter().enumerate() {
        let est = estimate_p_tau_exceeds(model, x, t, &cfg.mc(100_000, &format!("passage-{i}")))?;
        let nb = model.tail_mass(a * t)?;
        let value = est.estimate.value / (tau.estimate.value * nb);
        let rel = (est.estimate.stderr / est.estimate.value).hypot(tau.estimate.stderr / tau.estimate.value);
        points.push(TrendPoint {
            t,
            value,
            stderr: value.abs() * rel,
        });
        raw.push(est);
    }
    trend_report(out, "ratio_toward_one", &points, Direction::TowardOne, TREND_SLACK)?;
    out.detail("x", x)?;
    out.detail("mean_tau", &tau)?;
    out.detail("estimates", &raw)?;
    Ok(())
}

/// Jump-time window of the size-biased check.
pub const SIZE_BIASED_WINDOW: f64 = 5.0;

fn size_biased(model: &LevyModel, cfg: &VerifyConfig, out: &mut Outcome) -> Result<()> {
    let a = negated_mean(model)?;
    let alpha = model.require_tail()?.alpha();
    let t = cfg.horizon(100.0 / a);
    let x = 1.0;
    let mut checks = Vec::new();
    for (label, b) in [("b=a", a), ("b=2a", 2.0 * a)] {
        let c = size_biased_jump_check(model, x, b, SIZE_BIASED_WINDOW, t, &cfg.mc(100_000, label))?;
        let se = c.lhs.stderr.hypot(c.rhs_stderr);
        let tol = 3.0 * se + 0.1;
        let diff = (c.lhs.value - c.rhs).abs();
        out.check(format!("lhs_vs_rhs_{label}"), diff, tol, diff < tol);
        checks.push((b, c));
    }
    let factor = checks[1].1.pareto_factor;
    let exact = 2f64.powf(-alpha);
    out.check("pareto_factor_2a", factor, exact, factor == exact);
    out.detail("t", t)?;
    out.detail("x", x)?;
    out.detail("window", SIZE_BIASED_WINDOW)?;
    out.detail("checks", &checks)?;
    Ok(())
}

fn equivalence(model: &LevyModel, cfg: &VerifyConfig, out: &mut Outcome) -> Result<()> {
    let a = negated_mean(model)?;
    let ts = cfg.ladder(&DEFAULT_LADDER, a);
    for (pair, name) in [
        (EventPair::BigjumpVsPositive, "bigjump_vs_positive"),
        (EventPair::SurvivalVsJumpSurvival, "survival_vs_jump_survival"),
    ] {
        let mut points = Vec::new();
        let mut raw = Vec::new();
        for (i, &t) in ts.iter().enumerate() {
            let e = event_equivalence(model, t, &cfg.mc(100_000, &format!("{name}-{i}")), pair)?;
            points.push(TrendPoint::new(t, &e.ratio));
            raw.push(e);
        }
        trend_report(out, &format!("{name}_decreasing"), &points, Direction::Decreasing, 0.0)?;
        out.detail(&format!("{name}_estimates"), &raw)?;
    }
    Ok(())
}

/// Band for `lhs / rhs` in the Laplace check.
pub const LAPLACE_BAND: (f64, f64) = (0.75, 1.25);

fn laplace_positive(model: &LevyModel, cfg: &VerifyConfig, out: &mut Outcome) -> Result<()> {
    let a = negated_mean(model)?;
    let alpha = model.require_tail()?.alpha();
    let t = cfg.horizon(100.0 / a);
    let lam = 1.0;
    let r = laplace_positive_part(model, lam, t, &cfg.mc(1_000_000, "laplace"))?;
    let ratio = r.lhs.estimate.value / r.rhs;
    out.check(
        "lhs_over_rhs_in_band",
        ratio,
        LAPLACE_BAND.1 - 1.0,
        (LAPLACE_BAND.0..=LAPLACE_BAND.1).contains(&ratio),
    );
    let rhs_2 = alpha / (a * 2.0 * lam) * r.normalizer.value;
    let gap = (rhs_2 - r.rhs / 2.0).abs() / r.rhs;
    out.check("lambda_scaling", gap, 0.0, gap == 0.0);
    out.detail("t", t)?;
    out.detail("lambda", lam)?;
    out.detail("ratio", ratio)?;
    out.detail("rhs_2lambda", rhs_2)?;
    out.detail("estimate", &r)?;
    Ok(())
}

/// Relative tolerance of the renewal-quadrature comparisons at the largest `t`.
pub const QUADRATURE_TOLERANCE: f64 = 0.3;

fn conditional_laplace(model: &LevyModel, cfg: &VerifyConfig, out: &mut Outcome) -> Result<()> {
    let a = negated_mean(model)?;
    let ts = cfg.ladder(&DEFAULT_LADDER, a);
    let (lam, x) = (1.0, 1.0);
    let grid_max = 15.0;
    let renewal = estimate_renewal(
        model,
        grid_max,
        31,
        1.0,
        default_horizon(a, grid_max),
        &cfg.mc(100_000, "renewal"),
    )?;
    let rhs = laplace_limit_rhs(model, lam, x, &renewal)?;
    let mut points = Vec::new();
    let mut raw = Vec::new();
    for (i, &t) in ts.iter().enumerate() {
        let s = conditional_laplace_scaled(model, lam, x, t, &cfg.mc(100_000, &format!("cond-laplace-{i}")))?;
        points.push(ratio_point(t, &s.scaled, rhs.value));
        raw.push(s);
    }
    trend_report(out, "ratio_toward_one", &points, Direction::TowardOne, TREND_SLACK)?;
    let last = points.last().expect("ladder").value;
    out.check(
        "ratio_at_max_t",
        (last - 1.0).abs(),
        QUADRATURE_TOLERANCE,
        (last - 1.0).abs() <= QUADRATURE_TOLERANCE,
    );
    out.detail("lambda", lam)?;
    out.detail("x", x)?;
    out.detail("rhs", rhs)?;
    out.detail("renewal", &renewal)?;
    out.detail("estimates", &raw)?;
    Ok(())
}

/// Bound on `|ln cross ratio|` in standard errors.
pub const CROSS_RATIO_SIGMAS: f64 = 4.0;

fn reflected_joint(model: &LevyModel, cfg: &VerifyConfig, out: &mut Outcome) -> Result<()> {
    let a = negated_mean(model)?;
    let horizon = default_horizon(a, 2.0).max(200.0 / a);
    let cr = occupation_cross_ratio(model, (1.0, 2.0), (1.0, 2.0), horizon, &cfg.mc(100_000, "cross-ratio"))?;
    let l = cr.log_cross_ratio;
    let tol = CROSS_RATIO_SIGMAS * l.stderr;
    out.check("log_cross_ratio", l.value.abs(), tol, l.value.abs() <= tol);
    out.detail("cross_ratio", &cr)?;
    out.detail("horizon", horizon)?;

    let (x, y) = (2.0, 2.0);
    let ts = cfg.ladder(&DEFAULT_LADDER, a);
    let renewal = estimate_renewal(model, 4.0, 41, 1.0, default_horizon(a, 4.0), &cfg.mc(100_000, "renewal"))?;
    let rhs = reflected_limit_rhs(model, x, y, &renewal)?;
    let mut points = Vec::new();
    let mut raw = Vec::new();
    for (i, &t) in ts.iter().enumerate() {
        let s = reflected_joint_scaled(model, t, x, y, &cfg.mc(100_000, &format!("reflected-{i}")))?;
        points.push(ratio_point(t, &s.scaled, rhs.value));
        raw.push(s);
    }
    let last = points.last().expect("ladder").value;
    out.check(
        "scaled_joint_at_max_t",
        (last - 1.0).abs(),
        QUADRATURE_TOLERANCE,
        (last - 1.0).abs() <= QUADRATURE_TOLERANCE,
    );
    out.detail("joint_ratios", &points)?;
    out.detail("joint_rhs", rhs)?;
    out.detail("joint_estimates", &raw)?;
    Ok(())
}

fn limit_coefficient(model: &LevyModel, cfg: &VerifyConfig, out: &mut Outcome) -> Result<()> {
    let a = negated_mean(model)?;
    let f = FSpec::cbre_survival(1.0, 1.0, 1.0);
    let ts = cfg.t.clone().unwrap_or_else(|| vec![50.0 / a, 100.0 / a]);
    let c = limit_coefficient_cf(model, &f, 100.0 / a, 100.0 / a, &cfg.mc(100_000, "coefficient"))?;
    out.check("monotone_in_T", f64::from(u8::from(c.monotone_in_t)), 0.0, c.monotone_in_t);
    let mut scaled = Vec::new();
    for (i, &t) in ts.iter().enumerate() {
        let e = estimate_ef_stratified(model, &f, t, &cfg.mc(100_000, &format!("ef-{i}")))?;
        scaled.push((t, e.estimate.scaled(1.0 / model.tail_mass(a * t)?)));
    }
    let se = scaled
        .iter()
        .map(|(_, e)| e.stderr)
        .fold(c.estimate.stderr, f64::max);
    let lo = scaled.iter().map(|(_, e)| e.value).fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().map(|(_, e)| e.value).fold(f64::NEG_INFINITY, f64::max);
    let band = 3.0 * se * std::f64::consts::SQRT_2;
    let v = c.estimate.value;
    let outside = (lo - v).max(v - hi).max(0.0);
    out.check("bracketed_by_scaled_ef", outside, band, outside <= band);
    out.check("t0_shift", c.t0_shift, 0.1, c.t0_shift < 0.1);
    out.detail("coefficient", &c)?;
    out.detail("scaled_ef", &scaled)?;
    Ok(())
}

/// Exponent band for the subcritical decay.
pub const SUBCRITICAL_EXPONENT: (f64, f64) = (1.6, 2.4);
/// Exponent band for the critical decay.
pub const CRITICAL_EXPONENT: (f64, f64) = (0.35, 0.65);

fn cbre_regimes(model: &LevyModel, cfg: &VerifyConfig, out: &mut Outcome) -> Result<()> {
    let b = BranchingSpec::feller();
    let zero = survival_probability(&LevyModel::drift_only(0.0), &b, 1.0, &cfg.mc(1_000, "zero-env"))?;
    let exact = -(-1f64).exp_m1();
    let gap = (zero.estimate.value - exact).abs();
    out.check("zero_environment", gap, 1e-12, gap <= 1e-12);
    out.detail("zero_environment", &zero)?;

    let mean = model.mean_drift()?;
    let a = if mean < 0.0 { -mean } else { 1.0 };
    let ts = cfg.ladder(&DEFAULT_LADDER, a);

    let sup = model.with_drift(model.drift() - mean + 1.0)?;
    let ladder = plain_ladder(&sup, &b.f_spec(), &ts, &cfg.mc(100_000, "supercritical"))?;
    let worst = ladder
        .windows(2)
        .map(|w| (w[1].value - w[0].value).abs() / w[0].combined_stderr(&w[1]))
        .fold(0.0, f64::max);
    out.check("supercritical_plateau", worst, 2.0, worst < 2.0);
    out.detail("supercritical", &ladder)?;

    if mean < 0.0 {
        let r = classify_regime(model, &b, &ts, &cfg.mc(100_000, "subcritical"))?;
        let e = r.decay_exponent_hat.unwrap_or(f64::NAN);
        let ok = (SUBCRITICAL_EXPONENT.0..=SUBCRITICAL_EXPONENT.1).contains(&e);
        out.check("subcritical_exponent", e, SUBCRITICAL_EXPONENT.1 - SUBCRITICAL_EXPONENT.0, ok);
        out.detail("subcritical", &r)?;
    }

    let bm = LevyModel::brownian(0.0, 1.0)?;
    let mut mc = cfg.mc(100_000, "critical");
    mc.step = 0.05;
    let r = classify_regime(&bm, &b, &ts, &mc)?;
    let e = r.decay_exponent_hat.unwrap_or(f64::NAN);
    let ok = (CRITICAL_EXPONENT.0..=CRITICAL_EXPONENT.1).contains(&e);
    out.check("critical_exponent", e, CRITICAL_EXPONENT.1 - CRITICAL_EXPONENT.0, ok);
    out.detail("critical", &r)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry() {
        assert_eq!(THEOREMS.len(), 11);
        let mut ids: Vec<_> = THEOREMS.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 11);
        assert!(THEOREMS.iter().all(|t| !t.anchor.is_empty() && t.command.contains(t.id)));
        assert!(run_theorem("nope", &LevyModel::canonical(), &VerifyConfig::new(1)).is_err());
    }

    #[test]
    fn small_jump_count_run_passes_and_is_deterministic() {
        let mut cfg = VerifyConfig::new(3);
        cfg.n = Some(20_000);
        let m = LevyModel::canonical();
        let a = run_theorem("jump-count-poisson", &m, &cfg).unwrap();
        let b = run_theorem("jump-count-poisson", &m, &cfg).unwrap();
        assert!(a.pass(), "{:?}", a.reports);
        assert_eq!(a, b);
        assert_eq!(a.tests(), 1);
    }

    #[test]
    fn drift_only_model_is_inapplicable() {
        let m = LevyModel::drift_only(-1.0);
        let r = run_theorem("positivity-rate", &m, &VerifyConfig::new(1));
        assert!(r.is_err());
    }
}
