//! Numerical integration: adaptive Simpson in 1D and tensor Gauss–Legendre
//! on boxes.

/// Default absolute tolerance for adaptive Simpson.
pub const SIMPSON_TOL: f64 = 1e-10;
/// Maximum recursion depth for adaptive Simpson.
pub const SIMPSON_MAX_DEPTH: u32 = 60;

/// ∫_a^b f with adaptive Simpson (Richardson-corrected), absolute tolerance
/// `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, SIMPSON_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// ∫_a^b f over a possibly infinite interval, by the substitution
/// x = t / (1 - t²) on (-1, 1) when needed.
pub fn integrate_line<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive_simpson(f, a, b, tol),
        _ => {
            let to_t = |x: f64| {
                if x == f64::INFINITY {
                    1.0
                } else if x == f64::NEG_INFINITY {
                    -1.0
                } else if x == 0.0 {
                    0.0
                } else {
                    // inverse of x = t/(1-t²)
                    (-1.0 + (1.0 + 4.0 * x * x).sqrt()) / (2.0 * x)
                }
            };
            let g = |t: f64| {
                let d = 1.0 - t * t;
                if d <= 0.0 {
                    return 0.0;
                }
                let x = t / d;
                let v = f(x) * (1.0 + t * t) / (d * d);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            };
            adaptive_simpson(&g, to_t(a), to_t(b), tol)
        }
    }
}

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];
const GL3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_WEIGHTS: [f64; 3] = [0.555_555_555_555_555_6, 0.888_888_888_888_888_9, 0.555_555_555_555_555_6];

/// Gauss–Legendre rule order for [`box_average`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussOrder {
    Three,
    Five,
}

impl GaussOrder {
    fn rule(self) -> (&'static [f64], &'static [f64]) {
        match self {
            GaussOrder::Three => (&GL3_NODES, &GL3_WEIGHTS),
            GaussOrder::Five => (&GL5_NODES, &GL5_WEIGHTS),
        }
    }
}

/// Average of `f` over the box `[lo, hi]` under Lebesgue measure, by a
/// tensor Gauss–Legendre rule. Degenerate boxes return `f(lo)`.
pub fn box_average<F: Fn(&[f64]) -> f64>(f: &F, lo: &[f64], hi: &[f64], order: GaussOrder) -> f64 {
    let d = lo.len();
    let (nodes, weights) = order.rule();
    let q = nodes.len();
    let total = q.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        let mut w = 1.0;
        for k in 0..d {
            let j = rem % q;
            rem /= q;
            let half = 0.5 * (hi[k] - lo[k]);
            x[k] = lo[k] + half * (1.0 + nodes[j]);
            w *= 0.5 * weights[j];
        }
        acc += w * f(&x);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomials_and_transcendentals() {
        let v = adaptive_simpson(&|x: f64| x * x, 0.0, 1.0, 1e-12);
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-11);
        // kink
        let v = adaptive_simpson(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12);
        assert!((v - (0.045 + 0.245)).abs() < 1e-10);
    }

    #[test]
    fn infinite_intervals() {
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let v = integrate_line(&phi, f64::NEG_INFINITY, f64::INFINITY, 1e-12);
        assert!((v - 1.0).abs() < 1e-9, "{v}");
        let v = integrate_line(&|x: f64| x * phi(x), 0.0, f64::INFINITY, 1e-12);
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-9, "{v}");
    }

    #[test]
    fn gauss_legendre_box() {
        let f = |x: &[f64]| x[0] * x[0] * x[1];
        let v = box_average(&f, &[0.0, 0.0], &[1.0, 2.0], GaussOrder::Three);
        // ∫∫ x² y dx dy / 2 = (1/3)(2) / 2
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
        let v = box_average(&|x: &[f64]| x[0].powi(9), &[0.0], &[1.0], GaussOrder::Five);
        assert!((v - 0.1).abs() < 1e-14);
    }
}
