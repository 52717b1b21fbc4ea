//! Finite-`t` checks of the direction in which a family of estimates moves.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::mc::McEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `|value − 1|` does not grow.
    TowardOne,
    Decreasing,
    Increasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendPoint {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

impl TrendPoint {
    pub fn new(t: f64, e: &McEstimate) -> Self {
        Self {
            t,
            value: e.value,
            stderr: e.stderr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    pub points: Vec<TrendPoint>,
    pub direction: Direction,
    pub pass: bool,
    pub slack: f64,
    /// Largest step against the direction, in units of the combined
    /// standard error of the two points (negative when every step moves
    /// the right way).
    pub worst_step: f64,
}

/// Each successive step may move against `direction` by at most
/// `slack · √(se_i² + se_{i+1}²)`. With zero slack every step must move
/// strictly in the direction.
pub fn trend_check(points: &[TrendPoint], direction: Direction, slack: f64) -> Result<TrendReport> {
    if points.len() < 3 {
        return Err(domain(format!("trend check needs at least 3 points, got {}", points.len())));
    }
    if !(slack >= 0.0) {
        return Err(domain("slack must be non-negative"));
    }
    let mut pass = true;
    let mut worst = f64::NEG_INFINITY;
    for w in points.windows(2) {
        let (p, q) = (w[0], w[1]);
        let against = match direction {
            Direction::TowardOne => (q.value - 1.0).abs() - (p.value - 1.0).abs(),
            Direction::Decreasing => q.value - p.value,
            Direction::Increasing => p.value - q.value,
        };
        let se = p.stderr.hypot(q.stderr);
        let ok = if slack == 0.0 { against < 0.0 } else { against <= slack * se };
        pass &= ok;
        let scaled = if se > 0.0 {
            against / se
        } else if against > 0.0 {
            f64::INFINITY
        } else if against < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        worst = worst.max(scaled);
    }
    Ok(TrendReport {
        points: points.to_vec(),
        direction,
        pass,
        slack,
        worst_step: worst,
    })
}
