//! Probability of the symmetric difference of two events relative to a
//! reference event, with both indicators evaluated on shared paths.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mc::{par_moments, McConfig, McEstimate};
use crate::model::LevyModel;
use crate::pathsim::{exponential, walk_to_passage, Rng, RngStream};
use crate::rarevent::{run_strata, survives, BigJumpSetup, OneJump};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventPair {
    /// `{N_t^{at} = 1}` against `{ξ_t > 0}` from `ξ_0 = 0`; reference `{ξ_t > 0}`.
    BigjumpVsPositive,
    /// `{τ_0 > J^{at}}` against `{τ_0 > t}` from `ξ_0 = x`; reference `{τ_0 > t}`.
    SurvivalVsJumpSurvival,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceEstimate {
    pub pair: EventPair,
    /// `P{A Δ B} / P{reference}`.
    pub ratio: McEstimate,
    pub symmetric_difference: McEstimate,
    pub reference: McEstimate,
}

/// [`event_equivalence_from`] with `x = 1` for the survival pair.
pub fn event_equivalence(model: &LevyModel, t: f64, mc: &McConfig, pair: EventPair) -> Result<EquivalenceEstimate> {
    event_equivalence_from(model, 1.0, t, mc, pair)
}

pub fn event_equivalence_from(
    model: &LevyModel,
    x: f64,
    t: f64,
    mc: &McConfig,
    pair: EventPair,
) -> Result<EquivalenceEstimate> {
    mc.require(2)?;
    let setup = BigJumpSetup::new(model, t, mc.step)?;
    let strata = match pair {
        EventPair::BigjumpVsPositive => run_strata::<2, _>(&setup, mc, [1.0, 1.0], 1, |k, rng| {
            if k == 1 {
                let base = setup.base(0.0, &[], rng)?;
                let p = setup.exceed(-base.end_value());
                return Ok([1.0 - p, p]);
            }
            let (path, _) = setup.composed(0.0, k, rng)?;
            let pos = f64::from(u8::from(path.end_value() > 0.0));
            Ok([pos, pos])
        })?,
        EventPair::SurvivalVsJumpSurvival => {
            if !(x > 0.0) {
                return Err(domain(format!("start x must be positive, got {x}")));
            }
            run_strata::<2, _>(&setup, mc, [1.0, 1.0], 1, |k, rng| survival_pair(&setup, x, k, rng))?
        }
    };
    let ratio = strata.ratio(0, 1)?;
    Ok(EquivalenceEstimate {
        pair,
        ratio,
        symmetric_difference: strata.estimate(0),
        reference: strata.estimate(1),
    })
}

/// `[1{A Δ B}, 1{B}]` for `A = {τ_0 > J}`, `B = {τ_0 > t}` given `N = k`.
fn survival_pair(setup: &BigJumpSetup<'_>, x: f64, k: u32, rng: &mut Rng) -> Result<[f64; 2]> {
    match k {
        0 => {
            // J lies beyond t: A ⊂ B and the difference is dying in (t, J)
            let base = setup.base(x, &[], rng)?;
            if !survives(&base) {
                return Ok([0.0, 0.0]);
            }
            let wait = exponential(rng, setup.tail.tail_mass(setup.h));
            let died = walk_to_passage(
                setup.model,
                base.end_value(),
                0.0,
                wait,
                setup.h,
                setup.step,
                rng,
            )?
            .is_some();
            Ok([f64::from(u8::from(died)), 1.0])
        }
        1 => {
            let s = rng.random::<f64>() * setup.t;
            let one = OneJump::draw(setup, x, s, rng)?;
            if one.pre_min <= 0.0 {
                return Ok([0.0, 0.0]);
            }
            let p = setup.exceed(-one.post_min);
            Ok([1.0 - p, p])
        }
        _ => {
            let (path, jumps) = setup.composed(x, k, rng)?;
            let (pre_min, _) = path.extrema_between(0.0, jumps[0].time);
            if pre_min <= 0.0 {
                return Ok([0.0, 0.0]);
            }
            let alive = survives(&path);
            Ok(if alive { [0.0, 1.0] } else { [1.0, 0.0] })
        }
    }
}

/// `P{A Δ B} / P{B}` by plain Monte Carlo of `draw() = (1_A, 1_B)`.
pub fn symmetric_difference_ratio<F>(n: u64, stream: &RngStream, draw: F) -> Result<McEstimate>
where
    F: Fn(&mut Rng) -> Result<(bool, bool)> + Sync,
{
    let m = par_moments::<2, _>(n, stream, |_, rng| {
        let (a, b) = draw(rng)?;
        Ok([f64::from(u8::from(a != b)), f64::from(u8::from(b))])
    })?;
    if m.mean(1) == 0.0 {
        return Err(Error::NoEffectiveSamples { n });
    }
    m.ratio(0, 1, stream.master_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_disjoint_events() {
        let s = RngStream::from_seed(4);
        let same = symmetric_difference_ratio(5000, &s, |rng| {
            let a = rng.random::<f64>() < 0.3;
            Ok((a, a))
        })
        .unwrap();
        assert_eq!(same.value, 0.0);
        let disjoint = symmetric_difference_ratio(20_000, &s, |rng| {
            let u = rng.random::<f64>();
            Ok((u < 0.2, u > 0.8))
        })
        .unwrap();
        assert!(disjoint.covers(2.0, 4.0), "{disjoint:?}");
        let none = symmetric_difference_ratio(100, &s, |_| Ok((true, false)));
        assert!(matches!(none, Err(Error::NoEffectiveSamples { .. })));
    }

    #[test]
    fn canonical_ratios_are_small_and_positive() {
        let m = LevyModel::canonical();
        let mc = McConfig::new(20_000, 9);
        for pair in [EventPair::BigjumpVsPositive, EventPair::SurvivalVsJumpSurvival] {
            let e = event_equivalence(&m, 25.0, &mc, pair).unwrap();
            assert!(e.ratio.value > 0.0 && e.ratio.value < 1.0, "{pair:?}: {e:?}");
        }
    }
}
