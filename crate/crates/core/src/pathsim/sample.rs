use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::path::{GridPoint, JumpRecord, Path};
use super::rng::{Rng, RngStream};
use crate::error::{domain, Error, Result};
use crate::model::{LevyModel, TailSpec};

/// Uniform on `(0, 1]`.
#[inline]
pub(crate) fn open_unit(rng: &mut Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

#[inline]
pub(crate) fn exponential(rng: &mut Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        f64::INFINITY
    } else {
        -open_unit(rng).ln() / rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Move {
    Continuous,
    Up(f64),
    Down(f64),
}

/// One piece of a trajectory: linear from `(t0, v0)` to `(t1, left)`, then
/// a possible jump to `value` at `t1`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Segment {
    pub t0: f64,
    pub v0: f64,
    pub t1: f64,
    pub left: f64,
    pub value: f64,
    pub kind: Move,
}

/// Incremental sampler of `ξ` (optionally with jumps above `cap` removed).
/// Everything the path samplers and passage walkers draw goes through here.
pub(crate) struct Walker<'a> {
    tail: Option<&'a TailSpec>,
    drift: f64,
    sigma: f64,
    up_rate: f64,
    cap: f64,
    dn_rate: f64,
    dn_mean: f64,
    step: f64,
    steps_done: u64,
    pub t: f64,
    pub v: f64,
    next_event: f64,
}

impl<'a> Walker<'a> {
    pub fn new(model: &'a LevyModel, start: f64, cap: f64, step: f64, rng: &mut Rng) -> Result<Self> {
        let tail = model.tail();
        let up_rate = match tail {
            None => 0.0,
            Some(t) => {
                if cap < t.x0() {
                    return Err(Error::ThresholdBelowCutoff {
                        threshold: cap,
                        cutoff: t.x0(),
                    });
                }
                t.total_rate() - t.tail_mass(cap)
            }
        };
        let (dn_rate, dn_mean) = model.left_jumps().map_or((0.0, 1.0), |l| (l.rate, l.mean));
        let sigma = model.diffusion_sigma();
        let mut w = Self {
            tail,
            drift: model.drift(),
            sigma,
            up_rate,
            cap,
            dn_rate,
            dn_mean,
            step: if sigma > 0.0 { step } else { f64::INFINITY },
            steps_done: 0,
            t: 0.0,
            v: start,
            next_event: 0.0,
        };
        w.next_event = exponential(rng, up_rate + dn_rate);
        Ok(w)
    }

    #[inline]
    fn next_grid(&self) -> f64 {
        self.step * (self.steps_done + 1) as f64
    }

    /// Moves to the first of: next jump, next grid time, `until`.
    #[inline]
    pub fn advance(&mut self, rng: &mut Rng, until: f64) -> Segment {
        let grid = self.next_grid();
        let t1 = self.next_event.min(grid).min(until);
        let dt = t1 - self.t;
        let mut left = self.v + self.drift * dt;
        if self.sigma > 0.0 && dt > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            left += self.sigma * dt.sqrt() * z;
        }
        let mut kind = Move::Continuous;
        let mut value = left;
        if t1 == self.next_event {
            kind = self.draw_jump(rng);
            value = match kind {
                Move::Up(s) | Move::Down(s) => left + s,
                Move::Continuous => left,
            };
            self.next_event = t1 + exponential(rng, self.up_rate + self.dn_rate);
        }
        if t1 == grid {
            self.steps_done += 1;
        }
        let seg = Segment {
            t0: self.t,
            v0: self.v,
            t1,
            left,
            value,
            kind,
        };
        self.t = t1;
        self.v = value;
        seg
    }

    fn draw_jump(&mut self, rng: &mut Rng) -> Move {
        let total = self.up_rate + self.dn_rate;
        let u = rng.random::<f64>() * total;
        let w = open_unit(rng);
        if u < self.up_rate {
            let tail = self.tail.expect("positive up rate has a tail");
            let size = if self.cap == f64::INFINITY {
                tail.sample_above(tail.x0(), w)
            } else {
                tail.sample_below(self.cap, w)
            };
            Move::Up(size)
        } else {
            Move::Down(self.dn_mean * w.ln())
        }
    }
}

fn check_args(t: f64, step: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(domain(format!("horizon t must be positive, got {t}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(domain(format!("step must be positive, got {step}")));
    }
    Ok(())
}

/// Samples `ξ` on `[0, t]` from `start`, with every jump above `cap` removed
/// and grid nodes forced at `breakpoints` (sorted, inside `(0, t)`).
pub(crate) fn sample_capped(
    model: &LevyModel,
    start: f64,
    t: f64,
    cap: f64,
    step: f64,
    breakpoints: &[f64],
    rng: &mut Rng,
) -> Result<Path> {
    let mut w = Walker::new(model, start, cap, step, rng)?;
    let expected = (model.jump_rate() + model.left_rate()) * t
        + if model.is_piecewise_linear() { 0.0 } else { t / step };
    let mut grid = Vec::with_capacity(expected as usize + breakpoints.len() + 4);
    grid.push(GridPoint {
        time: 0.0,
        left: start,
        value: start,
    });
    let mut jumps = Vec::new();
    let mut down = Vec::new();
    let mut bp = breakpoints.iter().copied().filter(|&b| b > 0.0 && b < t).peekable();
    loop {
        let until = bp.peek().copied().unwrap_or(t);
        let seg = w.advance(rng, until);
        match seg.kind {
            Move::Up(size) => jumps.push(JumpRecord { time: seg.t1, size }),
            Move::Down(size) => down.push(JumpRecord { time: seg.t1, size }),
            Move::Continuous => {}
        }
        grid.push(GridPoint {
            time: seg.t1,
            left: seg.left,
            value: seg.value,
        });
        if seg.t1 == until {
            if bp.next().is_none() {
                break;
            }
        }
    }
    let floor = model.tail().map_or(f64::INFINITY, |t| t.x0());
    Ok(Path::from_parts(start, grid, jumps, down, floor, model.is_piecewise_linear()))
}

/// Samples `ξ` on `[0, t]` from `start`.
pub fn sample_path(model: &LevyModel, start: f64, t: f64, step: f64, stream: &RngStream) -> Result<Path> {
    let mut rng = stream.rng();
    sample_path_with(model, start, t, step, &mut rng)
}

/// [`sample_path`] drawing from an existing generator.
pub fn sample_path_with(model: &LevyModel, start: f64, t: f64, step: f64, rng: &mut Rng) -> Result<Path> {
    check_args(t, step)?;
    sample_capped(model, start, t, f64::INFINITY, step, &[], rng)
}

/// Samples `ξ^cap` (jumps above `cap` removed) on `[0, t]`.
pub fn sample_truncated_with(
    model: &LevyModel,
    start: f64,
    t: f64,
    cap: f64,
    step: f64,
    rng: &mut Rng,
) -> Result<Path> {
    check_args(t, step)?;
    sample_capped(model, start, t, cap, step, &[], rng)
}

/// First time in `(0, horizon]` the process from `start` (jumps above `cap`
/// removed) is at or below `level`, without storing the path.
pub(crate) fn walk_to_passage(
    model: &LevyModel,
    start: f64,
    level: f64,
    horizon: f64,
    cap: f64,
    step: f64,
    rng: &mut Rng,
) -> Result<Option<f64>> {
    if start <= level {
        return Ok(Some(0.0));
    }
    let mut w = Walker::new(model, start, cap, step, rng)?;
    while w.t < horizon {
        let seg = w.advance(rng, horizon);
        if seg.left <= level {
            let frac = (seg.v0 - level) / (seg.v0 - seg.left);
            return Ok(Some(seg.t0 + frac * (seg.t1 - seg.t0)));
        }
        if seg.value <= level {
            return Ok(Some(seg.t1));
        }
    }
    Ok(None)
}
