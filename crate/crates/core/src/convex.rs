//! Convex-analytic constants of a model: the Legendre transform `I` of the
//! cumulant generating function, the tangency point `θ₀` of `ν`, the speed
//! `c(θ)`, the threshold `d(θ)` and the lower tangency abscissa `a_θ^ρ`.

use libm::log;
use thiserror::Error;

use crate::models::{nu, DisplacementModel, OffspringModel};
use crate::numeric::{bisect_increasing, newton_bracketed};

/// Upper end of the search interval for `θ₀`; beyond it `θ₀ = ∞` is reported.
pub const THETA0_SEARCH_MAX: f64 = 50.0;

/// Residual tolerance for all root solves (scaled by `1 + |target|`).
pub const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ConvexError {
    #[error("{0} lies outside the interior of the domain of I")]
    OutsideDomain(f64),
    #[error("theta must be positive and finite, got {0}")]
    BadTheta(f64),
    #[error("a_tangent is undefined because P(N = 1) = 0")]
    InfiniteRho,
    #[error("log E[N] = {0} is not positive")]
    NotSupercritical(f64),
    #[error("root solver did not converge")]
    NoConvergence,
}

/// Solves `φ'(λ) = x` for `x` strictly inside the range of `φ'`.
fn invert_cgf_prime(model: &DisplacementModel, x: f64) -> Result<f64, ConvexError> {
    let (lo_edge, hi_edge) = model.support_bounds();
    if !(x > lo_edge && x < hi_edge) {
        return Err(ConvexError::OutsideDomain(x));
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut expansions = 0;
    while model.cgf_prime(lo) > x || model.cgf_prime(hi) < x {
        if model.cgf_prime(lo) > x {
            lo *= 2.0;
        }
        if model.cgf_prime(hi) < x {
            hi *= 2.0;
        }
        expansions += 1;
        if expansions > 60 {
            // x is within rounding of a support edge
            return Err(ConvexError::OutsideDomain(x));
        }
    }
    let tol = ROOT_TOL * (1.0 + x.abs());
    newton_bracketed(
        |lambda| (model.cgf_prime(lambda) - x, model.cgf_second(lambda)),
        lo,
        hi,
        tol,
    )
    .map(|r| r.x)
    .ok_or(ConvexError::NoConvergence)
}

/// Legendre transform `I(x) = sup_λ {λx - φ(λ)}`; `+∞` off the domain.
pub fn legendre(model: &DisplacementModel, x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let (lo, hi) = model.support_bounds();
    if let Some(l) = model.as_lattice() {
        if x == hi {
            return -log(l.p_max());
        }
        if x == lo {
            return -log(l.p_min());
        }
    }
    if x < lo || x > hi {
        return f64::INFINITY;
    }
    match invert_cgf_prime(model, x) {
        Ok(lambda) => (lambda * x - model.cgf(lambda)).max(0.0),
        // numerically on the edge: the closed-form edge value is the limit
        Err(_) => match model.as_lattice() {
            Some(l) if (x - hi).abs() < (x - lo).abs() => -log(l.p_max()),
            Some(l) => -log(l.p_min()),
            None => f64::INFINITY,
        },
    }
}

/// `I'(x) = (φ')⁻¹(x)`.
pub fn legendre_prime(model: &DisplacementModel, x: f64) -> Result<f64, ConvexError> {
    invert_cgf_prime(model, x)
}

/// `θ₀`: the root of `g(θ) = θν'(θ) - ν(θ)` on `(0, ∞)`, or `+∞` if none.
pub fn solve_theta0(
    model: &DisplacementModel,
    offspring: &OffspringModel,
) -> Result<f64, ConvexError> {
    let log_mean = offspring.log_mean();
    if log_mean <= 0.0 {
        return Err(ConvexError::NotSupercritical(log_mean));
    }
    if let Some(l) = model.as_lattice() {
        // g increases to -log p_max - log E[N] as θ → ∞
        if -log(l.p_max()) - log_mean <= 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    let g = |theta: f64| theta * model.cgf_prime(theta) - nu(model, offspring, theta);
    if g(THETA0_SEARCH_MAX) < 0.0 {
        return Ok(f64::INFINITY);
    }
    let mut theta = bisect_increasing(g, 0.0, THETA0_SEARCH_MAX, ROOT_TOL)
        .ok_or(ConvexError::NoConvergence)?;
    // Newton polish, g'(θ) = θφ''(θ)
    for _ in 0..3 {
        let (gt, slope) = (g(theta), theta * model.cgf_second(theta));
        let next = theta - gt / slope;
        if !(slope > 0.0 && next.is_finite() && g(next).abs() < gt.abs()) {
            break;
        }
        theta = next;
    }
    Ok(theta)
}

/// `lim_{θ→∞} ν(θ)/θ`, the speed of the unmodified walk when `θ₀ = ∞`.
fn speed_limit(model: &DisplacementModel, offspring: &OffspringModel) -> f64 {
    match model.as_lattice() {
        Some(_) => model.support_bounds().1,
        None => nu(model, offspring, THETA0_SEARCH_MAX) / THETA0_SEARCH_MAX,
    }
}

/// `c(θ)` given a precomputed `θ₀`.
pub fn speed_with_theta0(
    model: &DisplacementModel,
    offspring: &OffspringModel,
    theta: f64,
    theta0: f64,
) -> f64 {
    if theta < theta0 {
        nu(model, offspring, theta) / theta
    } else {
        nu(model, offspring, theta0) / theta0
    }
}

/// Speed `c(θ)` of the modified walk.
pub fn speed(
    model: &DisplacementModel,
    offspring: &OffspringModel,
    theta: f64,
) -> Result<f64, ConvexError> {
    check_theta(theta)?;
    let theta0 = solve_theta0(model, offspring)?;
    Ok(speed_with_theta0(model, offspring, theta, theta0))
}

/// `d(θ) = max{c(θ), φ'(θ)}`.
pub fn threshold(
    model: &DisplacementModel,
    offspring: &OffspringModel,
    theta: f64,
) -> Result<f64, ConvexError> {
    Ok(speed(model, offspring, theta)?.max(model.cgf_prime(theta)))
}

/// Tangent from `(speed, 0)` to the graph of `I + ρ`, returned as
/// `(a, I'(a))`.
///
/// Substituting `λ = I'(a)` (so `a = φ'(λ)` and `I(a) = λa - φ(λ)`) turns the
/// tangency condition `I'(a)(a - c) = I(a) + ρ` into `φ(λ) - λc - ρ = 0`,
/// which is strictly convex in `λ`, equals `-ρ` at 0 and decreases there, so
/// it has exactly one negative root.
pub fn tangent_from(
    model: &DisplacementModel,
    speed: f64,
    rho: f64,
) -> Result<(f64, f64), ConvexError> {
    if !rho.is_finite() {
        return Err(ConvexError::InfiniteRho);
    }
    let h = |lambda: f64| model.cgf(lambda) - lambda * speed - rho;
    let mut lo = -1.0;
    let mut expansions = 0;
    while h(lo) < 0.0 {
        lo *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(ConvexError::NoConvergence);
        }
    }
    // -h is increasing on [lo, 0]
    let tol = ROOT_TOL * (1.0 + rho);
    let root = newton_bracketed(
        |lambda| (-h(lambda), speed - model.cgf_prime(lambda)),
        lo,
        0.0,
        tol,
    )
    .ok_or(ConvexError::NoConvergence)?;
    Ok((model.cgf_prime(root.x), root.x))
}

/// `a_θ^ρ` for the modified walk at parameter `θ`.
pub fn solve_a_tangent(
    model: &DisplacementModel,
    offspring: &OffspringModel,
    theta: f64,
) -> Result<f64, ConvexError> {
    let c = speed(model, offspring, theta)?;
    tangent_from(model, c, offspring.rho()).map(|(a, _)| a)
}

fn check_theta(theta: f64) -> Result<(), ConvexError> {
    if theta.is_finite() && theta > 0.0 {
        Ok(())
    } else {
        Err(ConvexError::BadTheta(theta))
    }
}

/// All derived scalars for a fixed model and `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConstants {
    pub theta: f64,
    pub theta0: f64,
    pub speed_c: f64,
    pub threshold_d: f64,
    pub rho: f64,
    /// `a_θ^ρ`, present iff `ρ < ∞`.
    pub a_tangent: Option<f64>,
    /// `I'(a_θ^ρ)`, the (negative) slope of the linear lower branch.
    pub tangent_slope: Option<f64>,
    pub mean_x: f64,
    pub log_mean_n: f64,
}

impl ModelConstants {
    pub fn compute(
        model: &DisplacementModel,
        offspring: &OffspringModel,
        theta: f64,
    ) -> Result<Self, ConvexError> {
        check_theta(theta)?;
        let theta0 = solve_theta0(model, offspring)?;
        let speed_c = speed_with_theta0(model, offspring, theta, theta0);
        Self::assemble(model, offspring, theta, theta0, speed_c, model.cgf_prime(theta))
    }

    /// Constants of the unmodified walk: `θ = θ₀` and `c = c(θ₀)`.
    ///
    /// When `θ₀ = ∞`, `c(θ₀)` is the limit of `ν(θ)/θ` (the right support edge
    /// for lattices). `threshold_d` is `+∞`: the upper rate of `R_n` never
    /// turns linear.
    pub fn classical(
        model: &DisplacementModel,
        offspring: &OffspringModel,
    ) -> Result<Self, ConvexError> {
        let theta0 = solve_theta0(model, offspring)?;
        let speed_c = if theta0.is_finite() {
            nu(model, offspring, theta0) / theta0
        } else {
            speed_limit(model, offspring)
        };
        Self::assemble(model, offspring, theta0, theta0, speed_c, f64::INFINITY)
    }

    fn assemble(
        model: &DisplacementModel,
        offspring: &OffspringModel,
        theta: f64,
        theta0: f64,
        speed_c: f64,
        tilt_mean: f64,
    ) -> Result<Self, ConvexError> {
        let rho = offspring.rho();
        let (a_tangent, tangent_slope) = if rho.is_finite() {
            let (a, slope) = tangent_from(model, speed_c, rho)?;
            (Some(a), Some(slope))
        } else {
            (None, None)
        };
        Ok(Self {
            theta,
            theta0,
            speed_c,
            threshold_d: speed_c.max(tilt_mean),
            rho,
            a_tangent,
            tangent_slope,
            mean_x: model.mean(),
            log_mean_n: offspring.log_mean(),
        })
    }

    /// `|(I(a) + ρ) - I'(a)(a - c)|` with `I` evaluated independently.
    pub fn tangency_residual(&self, model: &DisplacementModel) -> Option<f64> {
        let a = self.a_tangent?;
        let slope = self.tangent_slope?;
        Some(((legendre(model, a) + self.rho) - slope * (a - self.speed_c)).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::LN_2;
    use libm::{sqrt, tanh};
    use proptest::prelude::*;

    fn gauss() -> DisplacementModel {
        DisplacementModel::gaussian(0.0, 1.0).unwrap()
    }

    fn two() -> OffspringModel {
        OffspringModel::deterministic(2).unwrap()
    }

    fn one_or_three() -> OffspringModel {
        OffspringModel::new(&[(1, 0.5), (3, 0.5)]).unwrap()
    }

    fn quarter() -> DisplacementModel {
        DisplacementModel::lattice(1.0, &[-1, 1], &[0.75, 0.25]).unwrap()
    }

    #[test]
    fn legendre_examples() {
        assert!((legendre(&gauss(), 2.0) - 2.0).abs() < 1e-12);
        assert_eq!(legendre(&gauss(), 0.0), 0.0);
        let r = DisplacementModel::rademacher();
        assert!((legendre(&r, 1.0) - LN_2).abs() < 1e-15);
        assert_eq!(legendre(&r, 0.0), 0.0);
        assert_eq!(legendre(&r, 1.5), f64::INFINITY);
        assert_eq!(legendre(&r, -1.0000001), f64::INFINITY);
        // I(x) for a Rademacher step: ((1+x)log(1+x) + (1-x)log(1-x))/2
        let x: f64 = 0.6;
        let want = 0.5 * ((1.0 + x) * log(1.0 + x) + (1.0 - x) * log(1.0 - x));
        assert!((legendre(&r, x) - want).abs() < 1e-13);
        // approaching the edge converges to -log p_max
        assert!((legendre(&r, 1.0 - 1e-12) - LN_2).abs() < 1e-9);
    }

    #[test]
    fn lattice_edge_values() {
        let q = quarter();
        assert!((legendre(&q, 1.0) - log(4.0)).abs() < 1e-10);
        assert!((legendre(&q, -1.0) - log(4.0 / 3.0)).abs() < 1e-10);
    }

    #[test]
    fn legendre_prime_examples() {
        assert!((legendre_prime(&gauss(), -0.4877).unwrap() + 0.4877).abs() < 1e-12);
        assert_eq!(legendre_prime(&gauss(), 0.0).unwrap(), 0.0);
        let r = DisplacementModel::rademacher();
        assert!((legendre_prime(&r, tanh(1.0)).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(
            legendre_prime(&r, 1.0),
            Err(ConvexError::OutsideDomain(1.0))
        );
    }

    #[test]
    fn theta0_examples() {
        let t0 = solve_theta0(&gauss(), &two()).unwrap();
        assert!((t0 - sqrt(2.0 * LN_2)).abs() < 1e-10);
        assert!((t0 - 1.177_410_0).abs() < 1e-7);
        assert_eq!(
            solve_theta0(&DisplacementModel::rademacher(), &two()).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn rademacher_g_is_negative_on_grid() {
        let r = DisplacementModel::rademacher();
        // g(θ) → 0⁻ like -2θe^{-2θ}, so only moderate θ resolve the sign
        for k in 1..=30 {
            let th = 0.5 * k as f64;
            assert!(th * r.cgf_prime(th) - nu(&r, &two(), th) < 0.0);
        }
    }

    #[test]
    fn theta0_quarter_lattice_against_grid_scan() {
        let q = quarter();
        let t0 = solve_theta0(&q, &two()).unwrap();
        assert!(t0.is_finite() && t0 > 0.0 && t0 < THETA0_SEARCH_MAX);
        let g = |th: f64| th * q.cgf_prime(th) - nu(&q, &two(), th);
        // independent scan: first grid point where g turns nonnegative
        let step = 1e-5;
        let first = (1..5_000_000)
            .map(|i| i as f64 * step)
            .find(|&th| g(th) >= 0.0)
            .unwrap();
        assert!((first - t0).abs() <= step);
        let resid = nu(&q, &two(), t0) / t0 - q.cgf_prime(t0);
        assert!(resid.abs() < 1e-10);
    }

    #[test]
    fn speed_examples() {
        let root = sqrt(2.0 * LN_2);
        assert!((speed(&gauss(), &two(), 3.0).unwrap() - root).abs() < 1e-10);
        let t0 = solve_theta0(&gauss(), &two()).unwrap();
        assert!((speed(&gauss(), &two(), t0).unwrap() - root).abs() < 1e-10);
        assert!((speed(&gauss(), &two(), 1.0).unwrap() - (0.5 + LN_2)).abs() < 1e-15);
    }

    #[test]
    fn threshold_examples() {
        assert!((threshold(&gauss(), &two(), 3.0).unwrap() - 3.0).abs() < 1e-15);
        assert!((threshold(&gauss(), &two(), 2.0).unwrap() - 2.0).abs() < 1e-15);
        let c = speed(&gauss(), &two(), 0.5).unwrap();
        assert_eq!(threshold(&gauss(), &two(), 0.5).unwrap(), c);
    }

    #[test]
    fn a_tangent_f2() {
        let want = -(2.0 - core::f64::consts::SQRT_2) * sqrt(LN_2);
        let a = solve_a_tangent(&gauss(), &one_or_three(), 3.0).unwrap();
        assert!((a - want).abs() < 1e-10);
        assert!((a + 0.487_699_2).abs() < 1e-7);
        let k = ModelConstants::compute(&gauss(), &one_or_three(), 3.0).unwrap();
        assert!((k.tangent_slope.unwrap() - want).abs() < 1e-10);
        assert!(k.tangency_residual(&gauss()).unwrap() < 1e-10);
        assert_eq!(
            solve_a_tangent(&gauss(), &two(), 3.0),
            Err(ConvexError::InfiniteRho)
        );
    }

    #[test]
    fn constants_invariants_on_lattices() {
        let models = [
            (quarter(), two()),
            (quarter(), one_or_three()),
            (DisplacementModel::rademacher(), one_or_three()),
            (
                DisplacementModel::lattice(0.5, &[-2, 0, 3], &[0.2, 0.5, 0.3]).unwrap(),
                OffspringModel::new(&[(1, 0.2), (2, 0.5), (4, 0.3)]).unwrap(),
            ),
        ];
        for (m, n) in &models {
            for theta in [0.3, 1.0, 2.0, 5.0] {
                let k = ModelConstants::compute(m, n, theta).unwrap();
                assert!(k.speed_c <= k.threshold_d);
                assert_eq!(k.threshold_d, k.speed_c.max(m.cgf_prime(theta)));
                if let Some(a) = k.a_tangent {
                    assert!(a < k.mean_x && k.mean_x < k.speed_c, "{k:?}");
                    assert!(k.tangency_residual(m).unwrap() < 1e-8, "{k:?}");
                }
                if k.theta0.is_finite() {
                    let t0 = k.theta0;
                    assert!((nu(m, n, t0) / t0 - m.cgf_prime(t0)).abs() < 1e-10);
                }
                if theta < k.theta0 {
                    assert_eq!(k.threshold_d, k.speed_c);
                }
            }
        }
    }

    #[test]
    fn a_tangent_ignores_support_listing_order() {
        let m1 = DisplacementModel::lattice(1.0, &[-1, 0, 2], &[0.3, 0.45, 0.25]).unwrap();
        let m2 = DisplacementModel::lattice(1.0, &[2, -1, 0], &[0.25, 0.3, 0.45]).unwrap();
        let n = one_or_three();
        let a1 = solve_a_tangent(&m1, &n, 1.5).unwrap();
        let a2 = solve_a_tangent(&m2, &n, 1.5).unwrap();
        assert_eq!(a1.to_bits(), a2.to_bits());
    }

    #[test]
    fn speed_is_nonincreasing_and_freezes() {
        for (m, n) in [(gauss(), two()), (quarter(), two())] {
            let t0 = solve_theta0(&m, &n).unwrap();
            let mut prev = f64::INFINITY;
            for i in 1..200 {
                let th = 0.05 * i as f64;
                let c = speed(&m, &n, th).unwrap();
                assert!(c <= prev + 1e-15);
                if th >= t0 {
                    assert_eq!(c, nu(&m, &n, t0) / t0);
                }
                prev = c;
            }
        }
    }

    #[test]
    fn legendre_duality_round_trip() {
        // sup over a fine x-grid of λx - I(x) recovers φ(λ)
        let models = [gauss(), DisplacementModel::rademacher(), quarter()];
        for m in &models {
            let (lo, hi) = m.support_bounds();
            let (lo, hi) = (lo.max(-8.0), hi.min(8.0));
            let xs: alloc::vec::Vec<f64> = (0..=4000)
                .map(|i| lo + (hi - lo) * i as f64 / 4000.0)
                .collect();
            let is: alloc::vec::Vec<f64> = xs.iter().map(|&x| legendre(m, x)).collect();
            for lambda in [-2.0, -0.5, 0.0, 0.7, 2.0] {
                let sup = xs
                    .iter()
                    .zip(&is)
                    .map(|(x, i)| lambda * x - i)
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!((sup - m.cgf(lambda)).abs() < 1e-4, "{m:?} {lambda}");
            }
        }
    }

    proptest! {
        #[test]
        fn legendre_is_convex_nonnegative(x in -0.999f64..0.999, h in 1e-4f64..1e-3) {
            let m = quarter();
            let (a, b, c) = (legendre(&m, x - h), legendre(&m, x), legendre(&m, x + h));
            prop_assert!(b >= 0.0);
            prop_assert!(a + c - 2.0 * b >= -1e-10);
        }

        #[test]
        fn legendre_prime_inverts(lambda in -6.0f64..6.0) {
            let m = DisplacementModel::lattice(0.5, &[-2, 0, 3], &[0.2, 0.5, 0.3]).unwrap();
            let x = m.cgf_prime(lambda);
            let back = legendre_prime(&m, x).unwrap();
            prop_assert!((back - lambda).abs() < 1e-6 * (1.0 + lambda.abs()));
        }
    }
}
