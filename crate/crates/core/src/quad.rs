//! Small fixed-order Gauss–Legendre quadrature used by the tail integrals.

use std::sync::OnceLock;

const ORDER: usize = 16;

struct Rule {
    nodes: [f64; ORDER],
    weights: [f64; ORDER],
}

fn rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = ORDER;
        let mut nodes = [0.0; ORDER];
        let mut weights = [0.0; ORDER];
        for i in 0..n {
            // Newton iteration on P_n starting from the Chebyshev guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        Rule { nodes, weights }
    })
}

/// Integrates `f` over `[a, b]` with a single 16-point Gauss–Legendre panel.
pub(crate) fn gauss_legendre<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let r = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in r.nodes.iter().zip(r.weights.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Integrates over `(0, 1]` on dyadic panels `[2^-(k+1), 2^-k]`, which handles
/// integrable logarithmic growth at the origin.
pub(crate) fn dyadic_unit<F: FnMut(f64) -> f64>(mut f: F) -> f64 {
    let mut total = 0.0;
    let mut hi = 1.0_f64;
    for _ in 0..90 {
        let lo = 0.5 * hi;
        let piece = gauss_legendre(lo, hi, &mut f);
        total += piece;
        if piece.abs() < 1e-17 * total.abs() {
            break;
        }
        hi = lo;
    }
    total
}

/// `∫_0^∞ e^{-λ v} g(v) dv` on geometrically growing panels. `g` must be
/// bounded and smooth on the scale `1/λ`.
pub(crate) fn laplace_half_line<F: FnMut(f64) -> f64>(lambda: f64, scale: f64, mut g: F) -> f64 {
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut width = scale.min(1.0 / lambda) * 0.25;
    for _ in 0..200 {
        let hi = lo + width;
        let piece = gauss_legendre(lo, hi, |v| (-lambda * v).exp() * g(v));
        total += piece;
        if lambda * hi > 60.0 && piece.abs() <= 1e-16 * total.abs() {
            break;
        }
        lo = hi;
        width *= 1.5;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness() {
        let v = gauss_legendre(0.0, 2.0, |x| x.powi(7) - 3.0 * x * x);
        assert!((v - (256.0 / 8.0 - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn log_singularity() {
        // ∫_0^1 -ln s ds = 1
        let v = dyadic_unit(|s| -s.ln());
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn laplace_of_power() {
        // ∫_0^∞ e^{-v} (1+v)^{-2} dv = 1 - e E_1(1) ≈ 0.403652637676806
        let v = laplace_half_line(1.0, 1.0, |v| (1.0 + v).powi(-2));
        assert!((v - 0.403_652_637_676_806).abs() < 1e-10, "{v}");
    }
}
