use serde::Serialize;

use crate::error::{domain, Error, Result};

/// Grid node of a cadlag path: `left` is the left limit `ξ_{time-}` and
/// `value` is `ξ_time`. The two differ only at jump times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub time: f64,
    pub left: f64,
    pub value: f64,
}

impl GridPoint {
    #[inline]
    pub fn is_jump(&self) -> bool {
        self.value != self.left
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpRecord {
    pub time: f64,
    pub size: f64,
}

/// One trajectory on `[0, t_end]`.
///
/// Between consecutive grid nodes the path is linear from `value` of the
/// earlier node to `left` of the later one. For models without a Gaussian
/// part this is exact; otherwise it is the grid interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    t_end: f64,
    start: f64,
    grid: Vec<GridPoint>,
    jumps: Vec<JumpRecord>,
    down_jumps: Vec<JumpRecord>,
    jump_floor: f64,
    exact: bool,
}

impl Path {
    pub(crate) fn from_parts(
        start: f64,
        grid: Vec<GridPoint>,
        jumps: Vec<JumpRecord>,
        down_jumps: Vec<JumpRecord>,
        jump_floor: f64,
        exact: bool,
    ) -> Self {
        debug_assert!(grid.len() >= 2 || grid.len() == 1);
        debug_assert_eq!(grid[0].time, 0.0);
        let t_end = grid.last().expect("non-empty grid").time;
        Self {
            t_end,
            start,
            grid,
            jumps,
            down_jumps,
            jump_floor,
            exact,
        }
    }

    /// A path from explicit nodes; jumps are read off the nodes where
    /// `value != left` (positive ones are recorded as large jumps).
    pub fn from_grid(grid: Vec<GridPoint>, jump_floor: f64) -> Result<Self> {
        if grid.len() < 2 {
            return Err(domain("a path needs at least two grid points"));
        }
        if grid[0].time != 0.0 || grid[0].left != grid[0].value {
            return Err(domain("path must start at time 0 without a jump"));
        }
        if grid.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(domain("grid times must be strictly increasing"));
        }
        let mut jumps = Vec::new();
        let mut down = Vec::new();
        for g in &grid {
            let size = g.value - g.left;
            if size > 0.0 {
                jumps.push(JumpRecord { time: g.time, size });
            } else if size < 0.0 {
                down.push(JumpRecord { time: g.time, size });
            }
        }
        Ok(Self::from_parts(grid[0].value, grid, jumps, down, jump_floor, true))
    }

    /// Straight line `start + slope · s` on `[0, t_end]`.
    pub fn linear(start: f64, slope: f64, t_end: f64) -> Self {
        let grid = vec![
            GridPoint {
                time: 0.0,
                left: start,
                value: start,
            },
            GridPoint {
                time: t_end,
                left: start + slope * t_end,
                value: start + slope * t_end,
            },
        ];
        Self::from_parts(start, grid, Vec::new(), Vec::new(), f64::INFINITY, true)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn grid(&self) -> &[GridPoint] {
        &self.grid
    }

    /// Upward jumps in time order.
    pub fn jumps(&self) -> &[JumpRecord] {
        &self.jumps
    }

    /// Downward jumps (negative sizes) in time order.
    pub fn down_jumps(&self) -> &[JumpRecord] {
        &self.down_jumps
    }

    /// Whether linear interpolation between nodes is exact.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn end_value(&self) -> f64 {
        self.grid[self.grid.len() - 1].value
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t >= 0.0 && t <= self.t_end {
            Ok(())
        } else {
            Err(domain(format!("time {t} outside [0, {}]", self.t_end)))
        }
    }

    /// Index of the last node with `time <= t`.
    #[inline]
    fn node_at_or_before(&self, t: f64) -> usize {
        self.grid.partition_point(|g| g.time <= t).saturating_sub(1)
    }

    /// `ξ_t` (right-continuous).
    pub fn value_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.value_unchecked(t))
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, t: f64) -> f64 {
        let i = self.node_at_or_before(t);
        let p = self.grid[i];
        if p.time == t || i + 1 == self.grid.len() {
            return p.value;
        }
        let q = self.grid[i + 1];
        p.value + (q.left - p.value) * (t - p.time) / (q.time - p.time)
    }

    /// Infimum and supremum of `ξ` over `[a, b]`, left limits included.
    pub(crate) fn extrema_between(&self, a: f64, b: f64) -> (f64, f64) {
        let va = self.value_unchecked(a);
        let vb = self.value_unchecked(b);
        let (mut lo, mut hi) = (va.min(vb), va.max(vb));
        let first = self.grid.partition_point(|g| g.time <= a);
        for p in &self.grid[first..] {
            if p.time > b {
                break;
            }
            lo = lo.min(p.left).min(p.value);
            hi = hi.max(p.left).max(p.value);
        }
        (lo, hi)
    }

    /// `(S_t, I_t)` with `S_t = sup_{s≤t} 0 ∨ ξ_s`, `I_t = inf_{s≤t} 0 ∧ ξ_s`.
    pub fn running_extrema(&self, t: f64) -> Result<(f64, f64)> {
        self.check_time(t)?;
        let (lo, hi) = self.extrema_between(0.0, t);
        Ok((hi.max(0.0), lo.min(0.0)))
    }

    /// `inf{s > 0 : ξ_s ≤ level}` within `[0, t_end]`.
    pub fn first_passage(&self, level: f64) -> Result<Option<f64>> {
        if level > self.start {
            return Err(domain(format!(
                "passage level {level} is above the start {}",
                self.start
            )));
        }
        Ok(self.first_passage_unchecked(level))
    }

    pub(crate) fn first_passage_unchecked(&self, level: f64) -> Option<f64> {
        let g = &self.grid;
        if g[0].value <= level {
            return Some(0.0);
        }
        for w in g.windows(2) {
            let (p, q) = (w[0], w[1]);
            if q.left <= level {
                let frac = (p.value - level) / (p.value - q.left);
                return Some(p.time + frac * (q.time - p.time));
            }
            if q.value <= level {
                return Some(q.time);
            }
        }
        None
    }

    /// `N_t^x`: number of recorded jumps larger than `x` up to time `t`.
    pub fn count_large_jumps(&self, x: f64, t: f64) -> Result<usize> {
        self.check_time(t)?;
        Ok(self
            .jumps
            .iter()
            .filter(|j| j.time <= t && j.size > x)
            .count())
    }

    /// `J^x`: time of the first jump larger than `x`.
    pub fn first_large_jump(&self, x: f64) -> Option<f64> {
        self.jumps.iter().find(|j| j.size > x).map(|j| j.time)
    }

    /// `ξ^x`: the same path with every jump larger than `x` deleted.
    pub fn truncate_large(&self, x: f64) -> Result<Path> {
        if x < self.jump_floor {
            return Err(Error::Unsupported(format!(
                "truncation level {x} is below the jump cutoff {}",
                self.jump_floor
            )));
        }
        let removed: Vec<JumpRecord> = self.jumps.iter().copied().filter(|j| j.size > x).collect();
        if removed.is_empty() {
            return Ok(self.clone());
        }
        let mut shift = 0.0;
        let mut next = 0;
        let mut grid = Vec::with_capacity(self.grid.len());
        for p in &self.grid {
            let left = p.left - shift;
            if next < removed.len() && removed[next].time == p.time {
                shift += removed[next].size;
                next += 1;
            }
            grid.push(GridPoint {
                time: p.time,
                left,
                value: p.value - shift,
            });
        }
        let jumps = self.jumps.iter().copied().filter(|j| j.size <= x).collect();
        Ok(Path {
            grid,
            jumps,
            ..self.clone()
        })
    }

    /// Adds upward jumps at the given times (sorted by time), shifting the
    /// path after each one.
    pub fn add_jumps(&self, extra: &[JumpRecord]) -> Result<Path> {
        if extra.is_empty() {
            return Ok(self.clone());
        }
        let mut extra = extra.to_vec();
        extra.sort_by(|a, b| a.time.total_cmp(&b.time));
        for j in &extra {
            self.check_time(j.time)?;
            if !(j.size > 0.0) {
                return Err(domain("added jumps must be positive"));
            }
        }
        let mut grid = Vec::with_capacity(self.grid.len() + extra.len());
        let mut shift = 0.0;
        let mut k = 0;
        let g = &self.grid;
        for i in 0..g.len() {
            let p = g[i];
            // jumps strictly inside the segment ending at p
            while k < extra.len() && extra[k].time < p.time {
                let j = extra[k];
                let prev = g[i - 1];
                let base = prev.value + (p.left - prev.value) * (j.time - prev.time) / (p.time - prev.time);
                let left = base + shift;
                shift += j.size;
                grid.push(GridPoint {
                    time: j.time,
                    left,
                    value: base + shift,
                });
                k += 1;
            }
            let left = p.left + shift;
            while k < extra.len() && extra[k].time == p.time {
                shift += extra[k].size;
                k += 1;
            }
            grid.push(GridPoint {
                time: p.time,
                left,
                value: p.value + shift,
            });
        }
        let mut jumps = self.jumps.clone();
        jumps.extend(extra.iter().copied());
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(Path {
            grid,
            jumps,
            ..self.clone()
        })
    }

    /// The path started from `start + h`.
    pub fn shifted(&self, h: f64) -> Path {
        let grid = self
            .grid
            .iter()
            .map(|p| GridPoint {
                time: p.time,
                left: p.left + h,
                value: p.value + h,
            })
            .collect();
        Path {
            grid,
            start: self.start + h,
            ..self.clone()
        }
    }

    /// Writes `time,value,is_jump,jump_size` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,value,is_jump,jump_size")?;
        for p in &self.grid {
            let size = p.value - p.left;
            writeln!(
                out,
                "{:.16e},{:.16e},{},{:.16e}",
                p.time,
                p.value,
                u8::from(p.is_jump()),
                size
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp(time: f64, left: f64, value: f64) -> GridPoint {
        GridPoint { time, left, value }
    }

    /// drift −1 from 0 on [0, 10] with jumps 2 at time 2 and 5 at time 3
    fn two_jump_path() -> Path {
        Path::from_grid(
            vec![
                gp(0.0, 0.0, 0.0),
                gp(2.0, -2.0, 0.0),
                gp(3.0, -1.0, 4.0),
                gp(10.0, -3.0, -3.0),
            ],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn counts_and_first_jump() {
        let p = two_jump_path();
        assert_eq!(p.count_large_jumps(1.0, 10.0).unwrap(), 2);
        assert_eq!(p.count_large_jumps(10.0, 10.0).unwrap(), 0);
        assert_eq!(p.count_large_jumps(1.0, 2.5).unwrap(), 1);
        assert!(p.count_large_jumps(1.0, 11.0).is_err());
        assert_eq!(p.first_large_jump(3.0), Some(3.0));
        assert_eq!(p.first_large_jump(6.0), None);
    }

    #[test]
    fn truncation_shifts_later_values() {
        let p = two_jump_path();
        let q = p.truncate_large(3.0).unwrap();
        assert_eq!(q.jumps().len(), 1);
        assert_eq!(q.value_at(2.5).unwrap(), p.value_at(2.5).unwrap());
        assert_eq!(q.value_at(3.0).unwrap(), p.value_at(3.0).unwrap() - 5.0);
        assert_eq!(q.end_value(), p.end_value() - 5.0);
        assert_eq!(q.count_large_jumps(3.0, 10.0).unwrap(), 0);
        assert_eq!(p.truncate_large(5.0).unwrap(), p);
        assert!(p.truncate_large(0.5).is_err());
    }

    #[test]
    fn add_jumps_inverts_truncation() {
        let p = two_jump_path();
        let q = p.truncate_large(3.0).unwrap();
        let back = q.add_jumps(&[JumpRecord { time: 3.0, size: 5.0 }]).unwrap();
        for t in [0.0, 1.0, 2.9, 3.0, 5.0, 10.0] {
            assert!((back.value_at(t).unwrap() - p.value_at(t).unwrap()).abs() < 1e-12);
        }
        let mid = q.add_jumps(&[JumpRecord { time: 6.5, size: 1.5 }]).unwrap();
        assert_eq!(mid.grid().len(), q.grid().len() + 1);
        assert!((mid.end_value() - (q.end_value() + 1.5)).abs() < 1e-12);
        assert!((mid.value_at(6.0).unwrap() - q.value_at(6.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn passage_on_linear_segments() {
        let line = Path::linear(3.0, -3.0, 2.0);
        assert_eq!(line.first_passage(0.0).unwrap(), Some(1.0));
        assert!(line.first_passage(4.0).is_err());
        let up = Path::from_grid(vec![gp(0.0, 1.0, 1.0), gp(0.2, 0.8, 10.8), gp(1.0, 10.0, 10.0)], 1.0)
            .unwrap();
        assert_eq!(up.first_passage(0.0).unwrap(), None);
    }

    #[test]
    fn extrema_single_jump() {
        // drift −3 from 0, +5 at 0.5, t = 1
        let p = Path::from_grid(vec![gp(0.0, 0.0, 0.0), gp(0.5, -1.5, 3.5), gp(1.0, 2.0, 2.0)], 1.0)
            .unwrap();
        let (s, i) = p.running_extrema(1.0).unwrap();
        assert_eq!(s, 3.5);
        assert_eq!(i, -1.5);
        let line = Path::linear(0.0, -3.0, 1.0);
        assert_eq!(line.running_extrema(1.0).unwrap(), (0.0, -3.0));
    }

    #[test]
    fn csv_header_and_rows() {
        let mut buf = Vec::new();
        two_jump_path().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time,value,is_jump,jump_size"));
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(3).unwrap().contains(",1,"));
    }
}
