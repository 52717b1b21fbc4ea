//! Acceptance battery on the canonical model: compound Poisson with unit
//! Pareto jumps (α = 2, x0 = 1, rate 1) and drift −3, so a = 1.
//!
//! Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use levy_bigjump::functional::exp_functional;
use levy_bigjump::mc::with_workers;
use levy_bigjump::pathsim::GridPoint;
use levy_bigjump::report::to_json;
use levy_bigjump::verify::{run_theorem, TheoremOutcome, VerifyConfig};
use levy_bigjump::{LevyModel, Path};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, Poisson};
use rayon::prelude::*;

const SEED: u64 = 20_240_601;

struct Line {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

struct Battery {
    model: LevyModel,
    cfg: VerifyConfig,
    outcomes: BTreeMap<&'static str, Result<TheoremOutcome, String>>,
    lines: Vec<Line>,
}

impl Battery {
    fn outcome(&mut self, id: &'static str) -> (Result<TheoremOutcome, String>, f64) {
        let start = Instant::now();
        let (model, cfg) = (self.model.clone(), self.cfg.clone());
        let r = with_workers(1, move || run_theorem(id, &model, &cfg)).map_err(|e| e.to_string());
        self.outcomes.insert(id, r.clone());
        (r, start.elapsed().as_secs_f64())
    }

    fn record(&mut self, id: u32, name: &'static str, secs: f64, result: Result<(bool, String), String>) {
        let (pass, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        let line = Line {
            id,
            name,
            pass,
            detail,
            secs,
        };
        println!(
            "[{}] {:>2} {:<28} {:>7.1}s  {}",
            if line.pass { "PASS" } else { "FAIL" },
            line.id,
            line.name,
            line.secs,
            line.detail
        );
        self.lines.push(line);
    }

    /// Criterion decided by the named reports of one theorem run.
    fn from_reports(&mut self, id: u32, name: &'static str, theorem: &'static str, tests: &[&str]) {
        let (r, secs) = self.outcome(theorem);
        let res = r.map(|o| summarize(&o, tests));
        self.record(id, name, secs, res);
    }
}

fn summarize(o: &TheoremOutcome, tests: &[&str]) -> (bool, String) {
    let chosen: Vec<_> = o
        .reports
        .iter()
        .filter(|r| tests.is_empty() || tests.contains(&r.test.as_str()))
        .collect();
    let pass = !chosen.is_empty() && chosen.iter().all(|r| r.pass);
    let text = chosen
        .iter()
        .map(|r| {
            format!(
                "{}={:.4} ({}{:.4}){}",
                r.test,
                r.statistic,
                if r.test.starts_with("ks_") || r.test.starts_with("chisq") { "p=" } else { "tol=" },
                r.p_or_slack,
                if r.pass { "" } else { " ✗" }
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    (pass, text)
}

fn gp(time: f64, left: f64, value: f64) -> GridPoint {
    GridPoint { time, left, value }
}

fn quadrature_exactness() -> Result<(bool, String), String> {
    let zero = Path::linear(0.0, 0.0, 5.0);
    let up = Path::linear(0.0, 1.0, 2.0);
    let jump = Path::from_grid(vec![gp(0.0, 0.0, 0.0), gp(1.0, -1.0, 1.0), gp(2.0, 0.0, 0.0)], 1.0)
        .map_err(|e| e.to_string())?;
    let down = Path::linear(0.0, -3.0, 2.0);
    let cases = [
        ("zero", &zero, 5.0, 5.0),
        ("unit_up", &up, 2.0, -(-2f64).exp_m1()),
        ("one_jump", &jump, 2.0, 2.0 * 1f64.sinh()),
        ("down_partial", &down, 1.0, 3f64.exp_m1() / 3.0),
    ];
    let mut worst: f64 = 0.0;
    for (_, path, t, exact) in cases {
        let v = exp_functional(path, t, 1.0).map_err(|e| e.to_string())?.value;
        worst = worst.max(((v - exact) / exact).abs());
    }
    Ok((worst < 1e-12, format!("max relative error {worst:.3e} (tol 1e-12)")))
}

/// Naive Monte Carlo of `P{ξ_t > 0}` straight from the compound Poisson
/// representation, with its own generator and samplers.
fn naive_positivity(t: f64, n: u64, seed: u64) -> (f64, f64) {
    const CHUNK: u64 = 100_000;
    let poisson = Poisson::new(t).expect("rate");
    let pareto = Pareto::new(1.0, 2.0).expect("pareto");
    let hits: u64 = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            let m = CHUNK.min(n - c * CHUNK);
            let mut hit = 0u64;
            for _ in 0..m {
                let k = poisson.sample(&mut rng) as u64;
                let mut s = -3.0 * t;
                for _ in 0..k {
                    s += pareto.sample(&mut rng);
                }
                hit += u64::from(s > 0.0);
            }
            hit
        })
        .sum();
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

fn positivity(b: &mut Battery) {
    let (r, secs) = b.outcome("positivity-rate");
    let start = Instant::now();
    let res = r.and_then(|o| {
        let (trend_pass, trend) = summarize(&o, &[]);
        let est = &o.details["estimates"][1];
        let a = b.model.negated_mean().map_err(|e| e.to_string())?;
        let t = est["threshold"].as_f64().ok_or("missing threshold")? / a;
        let v = est["estimate"]["value"].as_f64().ok_or("missing value")?;
        let se = est["estimate"]["stderr"].as_f64().ok_or("missing stderr")?;
        let (p, pse) = naive_positivity(t, 10_000_000, SEED ^ 0xA5A5);
        let z = (v - p).abs() / se.hypot(pse);
        Ok((
            trend_pass && z <= 4.0,
            format!("{trend}; t={t} stratified {v:.4e}±{se:.1e} naive {p:.4e}±{pse:.1e} |z|={z:.2} (tol 4)"),
        ))
    });
    let secs = secs + start.elapsed().as_secs_f64();
    b.record(4, "positivity-rate", secs, res);
}

fn reproducibility(b: &mut Battery) {
    let start = Instant::now();
    let ids: Vec<&'static str> = b.outcomes.keys().copied().collect();
    let mut mismatched = Vec::new();
    for id in &ids {
        let first = b.outcomes[id].as_ref().map(|o| to_json(o).expect("json")).map_err(Clone::clone);
        let (model, cfg) = (b.model.clone(), b.cfg.clone());
        let id2 = *id;
        let again = with_workers(4, move || run_theorem(id2, &model, &cfg))
            .map(|o| to_json(&o).expect("json"))
            .map_err(|e| e.to_string());
        if first != again {
            mismatched.push(*id);
        }
    }
    let pass = mismatched.is_empty() && !ids.is_empty();
    let detail = if pass {
        format!("{} theorem outputs byte-identical for workers 1 and 4", ids.len())
    } else {
        format!("differing: {mismatched:?}")
    };
    b.record(13, "reproducibility", start.elapsed().as_secs_f64(), Ok((pass, detail)));
}

fn main() -> ExitCode {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let want = |i: u32| only.as_ref().is_none_or(|o| o.contains(&i));
    let mut b = Battery {
        model: LevyModel::canonical(),
        cfg: VerifyConfig::new(SEED),
        outcomes: BTreeMap::new(),
        lines: Vec::new(),
    };
    let total = Instant::now();
    println!("acceptance battery, seed {SEED}");
    if want(1) {
        b.from_reports(1, "jump-count-poisson", "jump-count-poisson", &[]);
    }
    if want(2) {
        let start = Instant::now();
        let r = quadrature_exactness();
        b.record(2, "quadrature-exactness", start.elapsed().as_secs_f64(), r);
    }
    if want(3) {
        b.from_reports(3, "jump-time-uniform", "jump-time-uniform", &["ks_jump_time_uniform"]);
    }
    if want(4) {
        positivity(&mut b);
    }
    if want(5) {
        b.from_reports(5, "passage-rate", "passage-rate", &[]);
    }
    if want(6) {
        b.from_reports(6, "size-biased-jump", "size-biased-jump", &[]);
    }
    if want(7) {
        b.from_reports(7, "event-equivalence", "event-equivalence", &[]);
    }
    if want(8) {
        b.from_reports(8, "laplace-positive", "laplace-positive", &[]);
    }
    if want(9) {
        b.from_reports(9, "renewal-factorization", "reflected-joint", &["log_cross_ratio"]);
    }
    if want(10) {
        b.from_reports(10, "conditional-laplace", "conditional-laplace", &[]);
    }
    if want(11) {
        b.from_reports(11, "limit-coefficient", "limit-coefficient", &[]);
    }
    if want(12) {
        b.from_reports(12, "cbre-regimes", "cbre-regimes", &[]);
    }
    if want(13) {
        reproducibility(&mut b);
    }
    let failed: Vec<u32> = b.lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!(
        "acceptance: {} passed, {} failed in {:.1}s{}",
        b.lines.len() - failed.len(),
        failed.len(),
        total.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!(" (failed: {failed:?})") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
