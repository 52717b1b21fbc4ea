//! Monte Carlo plumbing: estimates, streaming moments and the deterministic
//! parallel reduction shared by every estimator.
//!
//! Replicate `i` always draws from stream `i` of its family and replicates
//! are summarized in blocks of fixed size that are merged in block order, so
//! results do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathsim::{Rng, RngStream};

/// Replicates per reduction block.
pub const BLOCK: u64 = 512;

/// Default Brownian grid step.
pub const DEFAULT_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
}

impl McEstimate {
    pub fn new(value: f64, stderr: f64, n: u64, seed: u64) -> Self {
        Self {
            value,
            stderr,
            n,
            seed,
        }
    }

    /// `value ± k·stderr` contains `x`.
    pub fn covers(&self, x: f64, k: f64) -> bool {
        (self.value - x).abs() <= k * self.stderr
    }

    /// Standard error of `self − other` for independent estimates.
    pub fn combined_stderr(&self, other: &McEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }

    pub fn scaled(&self, c: f64) -> McEstimate {
        McEstimate {
            value: self.value * c,
            stderr: self.stderr * c.abs(),
            ..*self
        }
    }
}

/// Sampling budget and randomness for one estimator call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n: u64,
    pub stream: RngStream,
    pub step: f64,
}

impl McConfig {
    pub fn new(n: u64, seed: u64) -> Self {
        Self {
            n,
            stream: RngStream::from_seed(seed),
            step: DEFAULT_STEP,
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_n(mut self, n: u64) -> Self {
        self.n = n;
        self
    }

    /// Same budget on an independent labeled family of streams.
    pub fn child(&self, label: &str) -> Self {
        Self {
            stream: self.stream.labeled(label),
            ..*self
        }
    }

    pub fn seed(&self) -> u64 {
        self.stream.master_seed
    }

    pub(crate) fn require(&self, min: u64) -> Result<()> {
        if self.n < min {
            Err(Error::TooFewSamples {
                needed: min as usize,
                got: self.n as usize,
            })
        } else {
            Ok(())
        }
    }
}

/// Running mean and co-moment matrix of a `D`-vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<const D: usize> {
    n: u64,
    mean: [f64; D],
    m2: [[f64; D]; D],
}

impl<const D: usize> Default for Moments<D> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const D: usize> Moments<D> {
    pub fn new() -> Self {
        Self {
            n: 0,
            mean: [0.0; D],
            m2: [[0.0; D]; D],
        }
    }

    #[inline]
    pub fn push(&mut self, x: [f64; D]) {
        self.n += 1;
        let n = self.n as f64;
        let mut delta = [0.0; D];
        for i in 0..D {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / n;
        }
        for i in 0..D {
            let after = x[i] - self.mean[i];
            for j in 0..D {
                self.m2[j][i] += delta[j] * after;
            }
        }
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &Moments<D>) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let mut delta = [0.0; D];
        for i in 0..D {
            delta[i] = other.mean[i] - self.mean[i];
        }
        for i in 0..D {
            for j in 0..D {
                self.m2[i][j] += other.m2[i][j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for i in 0..D {
            self.mean[i] += delta[i] * nb / n;
        }
        self.n += other.n;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mean[i]
    }

    /// Sample covariance of coordinates `i`, `j`.
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let c = self.m2[i][j] / (self.n - 1) as f64;
        if i == j {
            c.max(0.0)
        } else {
            c
        }
    }

    pub fn var(&self, i: usize) -> f64 {
        self.cov(i, i)
    }

    /// Standard error of the mean of coordinate `i`.
    pub fn stderr(&self, i: usize) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        (self.var(i) / self.n as f64).sqrt()
    }

    pub fn estimate(&self, i: usize, seed: u64) -> McEstimate {
        McEstimate::new(self.mean(i), self.stderr(i), self.n, seed)
    }

    /// Delta-method estimate of `mean_i / mean_j`.
    pub fn ratio(&self, i: usize, j: usize, seed: u64) -> Result<McEstimate> {
        let d = self.mean(j);
        if d == 0.0 {
            return Err(Error::NoEffectiveSamples { n: self.n });
        }
        let r = self.mean(i) / d;
        let v = (self.var(i) - 2.0 * r * self.cov(i, j) + r * r * self.var(j)).max(0.0);
        Ok(McEstimate::new(r, (v / self.n as f64).sqrt() / d.abs(), self.n, seed))
    }
}

/// Runs `kernel(i, rng_i)` for replicates `0..n` and reduces the outputs.
pub fn par_moments<const D: usize, F>(n: u64, stream: &RngStream, kernel: F) -> Result<Moments<D>>
where
    F: Fn(u64, &mut Rng) -> Result<[f64; D]> + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<Result<Moments<D>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut m = Moments::new();
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                let mut rng = stream.replicate(i);
                m.push(kernel(i, &mut rng)?);
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::new();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Runs `draw(i, rng_i)` for replicates `0..n`, keeping outputs in
/// replicate order.
pub fn par_collect<T, F>(n: u64, stream: &RngStream, draw: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut Rng) -> Result<T> + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<Result<Vec<T>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let range = b * BLOCK..((b + 1) * BLOCK).min(n);
            let mut out = Vec::with_capacity((range.end - range.start) as usize);
            for i in range {
                let mut rng = stream.replicate(i);
                out.push(draw(i, &mut rng)?);
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(n as usize);
    for p in parts {
        all.extend(p?);
    }
    Ok(all)
}

/// Running means and variances of a vector whose length is set at runtime.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagMoments {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl DiagMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &DiagMoments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
            self.mean[i] += d * nb / n;
        }
        self.n += other.n;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mean[i]
    }

    pub fn stderr(&self, i: usize) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        (self.m2[i].max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt()
    }

    pub fn estimate(&self, i: usize, seed: u64) -> McEstimate {
        McEstimate::new(self.mean(i), self.stderr(i), self.n, seed)
    }
}

/// [`par_moments`] for runtime-sized outputs, without cross moments.
pub fn par_diag<F>(n: u64, dim: usize, stream: &RngStream, kernel: F) -> Result<DiagMoments>
where
    F: Fn(u64, &mut Rng, &mut [f64]) -> Result<()> + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<Result<DiagMoments>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut m = DiagMoments::new(dim);
            let mut buf = vec![0.0; dim];
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                let mut rng = stream.replicate(i);
                buf.iter_mut().for_each(|v| *v = 0.0);
                kernel(i, &mut rng, &mut buf)?;
                m.push(&buf);
            }
            Ok(m)
        })
        .collect();
    let mut total = DiagMoments::new(dim);
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};
    use rand::Rng as _;

    #[test]
    fn moments_match_two_pass() {
        let xs: Vec<[f64; 2]> = (0..1000).map(|i| [(i as f64).sin(), (i as f64 * 0.3).cos() * 2.0]).collect();
        let mut m = Moments::<2>::new();
        for x in &xs {
            m.push(*x);
        }
        let n = xs.len() as f64;
        let mean0 = xs.iter().map(|x| x[0]).sum::<f64>() / n;
        let mean1 = xs.iter().map(|x| x[1]).sum::<f64>() / n;
        let cov = xs.iter().map(|x| (x[0] - mean0) * (x[1] - mean1)).sum::<f64>() / (n - 1.0);
        assert!((m.mean(0) - mean0).abs() < 1e-14);
        assert!((m.cov(0, 1) - cov).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn merge_is_concatenation(xs in prop::collection::vec(-1e3f64..1e3, 2..200), cut in 0usize..200) {
            let cut = cut.min(xs.len());
            let mut whole = Moments::<1>::new();
            let mut a = Moments::<1>::new();
            let mut b = Moments::<1>::new();
            for (k, &x) in xs.iter().enumerate() {
                whole.push([x]);
                if k < cut { a.push([x]) } else { b.push([x]) }
            }
            a.merge(&b);
            prop_assert_eq!(a.n(), whole.n());
            prop_assert!((a.mean(0) - whole.mean(0)).abs() < 1e-9);
            prop_assert!((a.var(0) - whole.var(0)).abs() < 1e-6 * (1.0 + whole.var(0)));
        }
    }

    #[test]
    fn reduction_independent_of_workers() {
        let s = RngStream::from_seed(5);
        let run = |w| {
            with_workers(w, || {
                par_moments::<1, _>(5000, &s, |_, rng| Ok([rng.random::<f64>()])).unwrap()
            })
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
        assert!((a.mean(0) - 0.5).abs() < 4.0 * a.stderr(0));
    }

    #[test]
    fn diag_matches_fixed_size() {
        let s = RngStream::from_seed(8);
        let fixed = par_moments::<2, _>(2000, &s, |_, rng| {
            let u = rng.random::<f64>();
            Ok([u, u * u])
        })
        .unwrap();
        let diag = par_diag(2000, 2, &s, |_, rng, out| {
            let u = rng.random::<f64>();
            out[0] = u;
            out[1] = u * u;
            Ok(())
        })
        .unwrap();
        for i in 0..2 {
            assert!((fixed.mean(i) - diag.mean(i)).abs() < 1e-14);
            assert!((fixed.stderr(i) - diag.stderr(i)).abs() < 1e-14);
        }
    }

    #[test]
    fn ratio_delta_method() {
        let mut m = Moments::<2>::new();
        for i in 0..100 {
            let x = i as f64;
            m.push([2.0 * x, x]);
        }
        let r = m.ratio(0, 1, 0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-14);
        assert!(r.stderr < 1e-12);
        let zero = Moments::<2>::new();
        assert!(matches!(zero.ratio(0, 1, 0), Err(Error::NoEffectiveSamples { .. })));
    }
}
