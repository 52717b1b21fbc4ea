//! One function per subcommand. Each writes its files atomically into the
//! output directory and returns whether every check it ran passed.

use std::io::Write as _;

use anyhow::Context as _;
use levy_bigjump::cbre::{classify_regime, BranchingSpec};
use levy_bigjump::fluctuation::{
    conditional_laplace_scaled, default_horizon, estimate_mean_tau, estimate_renewal, laplace_positive_part,
    reflected_joint_cdf,
};
use levy_bigjump::functional::exp_functional;
use levy_bigjump::mc::par_collect;
use levy_bigjump::rarevent::{estimate_ef_stratified, estimate_p_tau_exceeds, estimate_p_xi_positive};
use levy_bigjump::report::{to_json, write_atomic, Envelope};
use levy_bigjump::verify::{run_theorem, theorem, CheckReport, VerifyConfig, THEOREMS};
use levy_bigjump::{FSpec, McConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;

fn mc(cfg: &ExperimentConfig, default_n: u64) -> McConfig {
    McConfig::new(cfg.n_or(default_n), cfg.seed)
}

fn write_json<T: Serialize>(cfg: &ExperimentConfig, name: &str, value: &T) -> anyhow::Result<String> {
    let envelope = Envelope::new(&cfg.model, cfg.seed, value);
    let text = to_json(&envelope)?;
    write_file(cfg, name, text.as_bytes())?;
    Ok(text)
}

fn write_file(cfg: &ExperimentConfig, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("cannot create output directory {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(name);
    write_atomic(&path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes to stdout, ignoring a closed pipe.
fn out(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush());
}

fn emit(cfg: &ExperimentConfig, json_text: &str, human: impl FnOnce() -> String) {
    if cfg.json {
        out(json_text);
    } else {
        out(&(human() + "\n"));
    }
}

#[derive(Serialize)]
struct PathSummary {
    replicate: u64,
    end_value: f64,
    sup: f64,
    inf: f64,
    jumps: usize,
    exp_functional: f64,
}

pub fn simulate(cfg: &ExperimentConfig, start: f64) -> anyhow::Result<bool> {
    let t = cfg.t_max();
    let mc = mc(cfg, 1000);
    let model = &cfg.model;
    let rows = par_collect(mc.n, &mc.stream, |i, rng| {
        let path = levy_bigjump::pathsim::sample_path_with(model, start, t, mc.step, rng)?;
        let (sup, inf) = path.running_extrema(t)?;
        Ok(PathSummary {
            replicate: i,
            end_value: path.end_value(),
            sup,
            inf,
            jumps: path.jumps().len(),
            exp_functional: exp_functional(&path, t, 1.0)?.value,
        })
    })?;
    let mut csv = Vec::new();
    writeln!(csv, "replicate,end_value,sup,inf,jumps,exp_functional")?;
    for r in &rows {
        writeln!(
            csv,
            "{},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            r.replicate, r.end_value, r.sup, r.inf, r.jumps, r.exp_functional
        )?;
    }
    write_file(cfg, "paths.csv", &csv)?;
    let mean_end = rows.iter().map(|r| r.end_value).sum::<f64>() / rows.len() as f64;
    let positive = rows.iter().filter(|r| r.end_value > 0.0).count() as f64 / rows.len() as f64;
    let summary = json!({ "t": t, "start": start, "n": mc.n, "mean_end_value": mean_end, "fraction_positive": positive });
    let text = write_json(cfg, "simulate.json", &summary)?;
    emit(cfg, &text, || {
        format!("simulated {} paths to t = {t}: mean ξ_t = {mean_end:.6}, P(ξ_t > 0) ≈ {positive:.6}", mc.n)
    });
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Quantity {
    /// P{ξ_t > 0} from 0.
    PPositive,
    /// P_x{τ_0 > t}.
    PSurvive,
    /// E_x[τ_0] from passage times censored at the horizon.
    MeanTau,
    /// E[F(A_t)] for the test function.
    Ef,
    /// E[e^{−λξ_t}; ξ_t ≥ 0] with its limit.
    LaplacePositive,
    /// at/P{ξ_1 > at} · E_x[e^{−λξ_t}; τ_0 > t].
    ConditionalLaplace,
    /// P{S_t ≤ x, S_t − ξ_t ≤ y}.
    ReflectedJoint,
}

pub struct EstimateArgs<'a> {
    pub quantity: Quantity,
    pub x: f64,
    pub y: f64,
    pub lambda: f64,
    pub f: &'a FSpec,
}

pub fn estimate(cfg: &ExperimentConfig, args: &EstimateArgs<'_>) -> anyhow::Result<bool> {
    let model = &cfg.model;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    let mut results: Vec<Value> = Vec::new();
    if args.quantity == Quantity::MeanTau {
        let a = model.negated_mean()?;
        let horizon = default_horizon(a.max(f64::MIN_POSITIVE), args.x).max(cfg.t_max());
        let r = estimate_mean_tau(model, args.x, horizon, &mc(cfg, 100_000))?;
        rows.push((horizon, r.estimate.value, r.estimate.stderr));
        results.push(serde_json::to_value(&r)?);
    } else {
        for (i, &t) in cfg.t_ladder.iter().enumerate() {
            let mc = mc(cfg, 10_000).child(&format!("t{i}"));
            let (value, stderr, full) = match args.quantity {
                Quantity::PPositive => {
                    let r = estimate_p_xi_positive(model, t, &mc)?;
                    (r.estimate.value, r.estimate.stderr, serde_json::to_value(&r)?)
                }
                Quantity::PSurvive => {
                    let r = estimate_p_tau_exceeds(model, args.x, t, &mc)?;
                    (r.estimate.value, r.estimate.stderr, serde_json::to_value(&r)?)
                }
                Quantity::Ef => {
                    let r = estimate_ef_stratified(model, args.f, t, &mc)?;
                    (r.estimate.value, r.estimate.stderr, serde_json::to_value(&r)?)
                }
                Quantity::LaplacePositive => {
                    let r = laplace_positive_part(model, args.lambda, t, &mc)?;
                    (r.lhs.estimate.value, r.lhs.estimate.stderr, serde_json::to_value(&r)?)
                }
                Quantity::ConditionalLaplace => {
                    let r = conditional_laplace_scaled(model, args.lambda, args.x, t, &mc)?;
                    (r.scaled.value, r.scaled.stderr, serde_json::to_value(&r)?)
                }
                Quantity::ReflectedJoint => {
                    let r = reflected_joint_cdf(model, t, args.x, args.y, &mc)?;
                    (r.estimate.value, r.estimate.stderr, serde_json::to_value(&r)?)
                }
                Quantity::MeanTau => unreachable!("handled above"),
            };
            rows.push((t, value, stderr));
            results.push(json!({ "t": t, "result": full }));
        }
    }
    let mut csv = Vec::new();
    writeln!(csv, "t,value,stderr")?;
    for (t, v, s) in &rows {
        writeln!(csv, "{t:.16e},{v:.16e},{s:.16e}")?;
    }
    write_file(cfg, "estimate.csv", &csv)?;
    let doc = json!({
        "quantity": format!("{:?}", args.quantity),
        "x": args.x,
        "y": args.y,
        "lambda": args.lambda,
        "results": results,
    });
    let text = write_json(cfg, "estimate.json", &doc)?;
    emit(cfg, &text, || {
        rows.iter()
            .map(|(t, v, s)| format!("t = {t}: {v:.6e} ± {s:.2e}"))
            .collect::<Vec<_>>()
            .join("\n")
    });
    Ok(true)
}

pub struct RenewalArgs {
    pub grid_max: f64,
    pub points: usize,
    pub reference: f64,
    pub horizon: Option<f64>,
}

pub fn renewal(cfg: &ExperimentConfig, args: &RenewalArgs) -> anyhow::Result<bool> {
    let a = cfg.model.negated_mean()?;
    let horizon = args.horizon.unwrap_or_else(|| default_horizon(a, args.grid_max));
    let r = estimate_renewal(
        &cfg.model,
        args.grid_max,
        args.points,
        args.reference,
        horizon,
        &mc(cfg, 100_000),
    )?;
    let mut csv = Vec::new();
    r.write_csv(&mut csv)?;
    write_file(cfg, "renewal.csv", &csv)?;
    let text = write_json(cfg, "renewal.json", &r)?;
    emit(cfg, &text, || {
        format!(
            "renewal functions on [0, {}] with {} points, horizon {horizon}: V({}) = {:.6}, V̂({}) = {:.6}",
            args.grid_max,
            args.points,
            args.grid_max,
            r.v.last().copied().unwrap_or(f64::NAN),
            args.grid_max,
            r.v_hat.last().copied().unwrap_or(f64::NAN)
        )
    });
    Ok(true)
}

pub fn cbre(cfg: &ExperimentConfig, branching: &BranchingSpec) -> anyhow::Result<bool> {
    let r = classify_regime(&cfg.model, branching, &cfg.t_ladder, &mc(cfg, 10_000))?;
    let mut csv = Vec::new();
    r.write_ladder_csv(&mut csv)?;
    write_file(cfg, "cbre_ladder.csv", &csv)?;
    let text = write_json(cfg, "cbre.json", &json!({ "branching": branching, "report": r }))?;
    emit(cfg, &text, || {
        let mut s = format!("regime {:?} (E[ξ_1] = {:.6})", r.regime, r.mean_env);
        for p in &r.ladder {
            s.push_str(&format!("\n  t = {}: P(survival) = {:.6e} ± {:.2e}", p.t, p.survival, p.stderr));
        }
        if let Some(e) = r.decay_exponent_hat {
            s.push_str(&format!("\n  fitted decay exponent {e:.4}"));
        }
        s
    });
    Ok(true)
}

pub fn verify(cfg: &ExperimentConfig, id: &str, explicit_t: bool, step: Option<f64>) -> anyhow::Result<bool> {
    let ids: Vec<&str> = if id == "all" {
        THEOREMS.iter().map(|t| t.id).collect()
    } else {
        vec![theorem(id)
            .ok_or_else(|| crate::config::ConfigError(format!("unknown theorem {id:?}; see list-theorems")))?
            .id]
    };
    let mut vcfg = VerifyConfig::new(cfg.seed);
    vcfg.n = cfg.n;
    if explicit_t {
        vcfg.t = Some(cfg.t_ladder.clone());
    }
    if let Some(step) = step {
        vcfg.step = step;
    }
    let mut reports: Vec<CheckReport> = Vec::new();
    let mut outcomes = Vec::new();
    for id in ids {
        let o = run_theorem(id, &cfg.model, &vcfg)?;
        reports.extend(o.reports.iter().cloned());
        outcomes.push(o);
    }
    let pass = reports.iter().all(|r| r.pass);
    write_json(cfg, "verify_details.json", &outcomes)?;
    let text = write_json(cfg, "verify_report.json", &reports)?;
    emit(cfg, &text, || {
        let mut lines: Vec<String> = reports
            .iter()
            .map(|r| {
                format!(
                    "[{}] {} / {}: statistic {:.6}, p_or_slack {:.6}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.theorem_id,
                    r.test,
                    r.statistic,
                    r.p_or_slack
                )
            })
            .collect();
        lines.push(format!(
            "{} of {} tests passed (no multiple-testing correction)",
            reports.iter().filter(|r| r.pass).count(),
            reports.len()
        ));
        lines.join("\n")
    });
    Ok(pass)
}

pub fn list_theorems(json: bool) -> anyhow::Result<bool> {
    if json {
        out(&to_json(&THEOREMS)?);
    } else {
        let table: String = THEOREMS
            .iter()
            .map(|t| format!("{:<20} {}\n{:<20} {}\n", t.id, t.anchor, "", t.command))
            .collect();
        out(&table);
    }
    Ok(true)
}
