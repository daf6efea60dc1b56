//! Small numerical kernels shared by the other modules.

use libm::{exp, expm1, log, log1p};

/// `log(Σ exp(xᵢ))` with max-shift stabilization. Empty input gives `-inf`.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(terms: I) -> f64
where
    I::IntoIter: Clone,
{
    let iter = terms.into_iter();
    let max = iter.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = iter.map(|x| exp(x - max)).sum();
    max + log(sum)
}

/// `log(1 - exp(-z))` for `z = exp(log_z) ≥ 0`, accurate for tiny and huge `z`.
pub fn log_one_minus_exp_neg(log_z: f64) -> f64 {
    if log_z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if log_z < -700.0 {
        // 1 - e^{-z} = z (1 - z/2 + ...) and z is below the subnormal range.
        return log_z;
    }
    let z = exp(log_z);
    log(-expm1(-z))
}

/// `log(1 - (1 - b)^k)` where `b = exp(log_b) ∈ [0, 1]`.
pub fn log_one_minus_pow_complement(log_b: f64, k: u32) -> f64 {
    if log_b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if log_b >= 0.0 {
        return 0.0;
    }
    if k == 1 {
        return log_b;
    }
    if log_b < -700.0 {
        return log_b + log(k as f64);
    }
    let b = exp(log_b);
    log(-expm1(k as f64 * log1p(-b)))
}

/// Outcome of a one-dimensional root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: u32,
}

pub const MAX_ITERATIONS: u32 = 200;

/// Newton's method safeguarded by bisection on a bracket `[lo, hi]` for an
/// increasing function `f` with `f(lo) ≤ 0 ≤ f(hi)`.
///
/// `eval` returns `(f(x), f'(x))`. Stops when `|f| ≤ tol` or the bracket has
/// collapsed to adjacent floats. Returns `None` after [`MAX_ITERATIONS`].
pub fn newton_bracketed<F>(mut eval: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<Root>
where
    F: FnMut(f64) -> (f64, f64),
{
    let mut x = 0.5 * (lo + hi);
    for it in 0..MAX_ITERATIONS {
        let (fx, dfx) = eval(x);
        if fx.abs() <= tol {
            return Some(Root { x, residual: fx, iterations: it });
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Some(Root { x, residual: fx, iterations: it });
        }
        let step = x - fx / dfx;
        x = if dfx > 0.0 && step > lo && step < hi { step } else { mid };
    }
    None
}

/// Plain bisection for an increasing `f` on `[lo, hi]` until the bracket is
/// narrower than `tol`.
pub fn bisect_increasing<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64>
where
    F: FnMut(f64) -> f64,
{
    for _ in 0..MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Some(mid);
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    None
}

/// Golden-section minimisation of a unimodal `f` on `[a, b]`.
/// Returns `(argmin, min)`.
pub fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_naive() {
        let xs = [0.1, -2.0, 3.5];
        let naive = log(xs.iter().map(|&x| exp(x)).sum::<f64>());
        assert!((log_sum_exp(xs) - naive).abs() < 1e-14);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY; 2]), f64::NEG_INFINITY);
        assert!((log_sum_exp([1000.0, 1000.0]) - (1000.0 + log(2.0))).abs() < 1e-12);
    }

    #[test]
    fn one_minus_exp_neg_extremes() {
        assert!((log_one_minus_exp_neg(log(1e-20)) - log(1e-20)).abs() < 1e-15);
        assert_eq!(log_one_minus_exp_neg(-800.0), -800.0);
        assert_eq!(log_one_minus_exp_neg(f64::INFINITY), 0.0);
        let z: f64 = 0.7;
        assert!((log_one_minus_exp_neg(log(z)) - log(1.0 - exp(-z))).abs() < 1e-14);
    }

    #[test]
    fn pow_complement() {
        let b: f64 = 0.3;
        let want = log(1.0 - (1.0 - b) * (1.0 - b) * (1.0 - b));
        assert!((log_one_minus_pow_complement(log(b), 3) - want).abs() < 1e-14);
        assert!((log_one_minus_pow_complement(-1000.0, 2) - (-1000.0 + log(2.0))).abs() < 1e-12);
        assert_eq!(log_one_minus_pow_complement(0.0, 5), 0.0);
    }

    #[test]
    fn newton_finds_cube_root() {
        let r = newton_bracketed(|x| (x * x * x - 2.0, 3.0 * x * x), 0.0, 2.0, 1e-14).unwrap();
        assert!((r.x - libm::cbrt(2.0)).abs() < 1e-13);
    }

    #[test]
    fn golden_on_parabola() {
        let (x, v) = golden_section(|t| (t - 0.3) * (t - 0.3) + 1.0, 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-12);
    }
}
