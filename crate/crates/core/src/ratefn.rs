//! Rate functions of `R_n*/n` (`Ψ_θ`), of `R_n/n` (`Φ`), and of a single
//! modified branch (`I_θ`), each evaluated with a label for the branch of
//! its piecewise formula.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::convex::{legendre, ConvexError, ModelConstants};
use crate::models::{DisplacementModel, OffspringModel};
use crate::numeric::golden_section;

/// Half-width (relative to `1 + |c|`) inside which `x` is taken to be `c`.
pub const BREAKPOINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RateError {
    #[error("x = {0} is not below the speed {1}")]
    NotBelowSpeed(f64, f64),
    #[error("the lower tail is infinite-rate because P(N = 1) = 0")]
    InfiniteRho,
    #[error("grid is not strictly increasing at index {0}")]
    GridNotIncreasing(usize),
    #[error(transparent)]
    Convex(#[from] ConvexError),
}

/// Piece of the rate function a point falls on.
///
/// Named after the upper-tail-first ordering of the modified walk's formula;
/// the classical walk uses the same pieces except [`Branch::UpperLinear`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `θx - φ(θ) - log E[N]` above `d(θ)`.
    UpperLinear,
    /// `I(x) - log E[N]` on `(c, d]`.
    UpperCramer,
    /// The speed itself.
    Zero,
    /// Tangent line `I'(a)(x - c)` on `[a, c)`.
    LowerLinear,
    /// `I(x) + ρ` below `a`.
    LowerCramer,
    /// `+∞` below `c` when `ρ = ∞`.
    InfiniteBelow,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::UpperLinear => "i",
            Branch::UpperCramer => "ii",
            Branch::Zero => "iii",
            Branch::LowerLinear => "iv",
            Branch::LowerCramer => "v",
            Branch::InfiniteBelow => "vi",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub x: f64,
    pub value: f64,
    pub branch: Branch,
}

fn is_at_speed(x: f64, c: f64) -> bool {
    (x - c).abs() <= BREAKPOINT_TOL * (1.0 + c.abs())
}

/// Lower-deviation part shared by `Ψ_θ` and `Φ` (`x < c`).
fn lower(k: &ModelConstants, model: &DisplacementModel, x: f64) -> RatePoint {
    match (k.a_tangent, k.tangent_slope) {
        (Some(a), Some(slope)) if x >= a => RatePoint {
            x,
            value: slope * (x - k.speed_c),
            branch: Branch::LowerLinear,
        },
        (Some(_), Some(_)) => RatePoint {
            x,
            value: legendre(model, x) + k.rho,
            branch: Branch::LowerCramer,
        },
        _ => RatePoint {
            x,
            value: f64::INFINITY,
            branch: Branch::InfiniteBelow,
        },
    }
}

/// `Ψ_θ(x)`, the rate function of `R_n*(θ, μ)/n`.
pub fn psi(k: &ModelConstants, model: &DisplacementModel, x: f64) -> RatePoint {
    let c = k.speed_c;
    if is_at_speed(x, c) {
        return RatePoint { x, value: 0.0, branch: Branch::Zero };
    }
    if x > k.threshold_d {
        let value = k.theta * x - model.cgf(k.theta) - k.log_mean_n;
        return RatePoint { x, value, branch: Branch::UpperLinear };
    }
    if x > c {
        let value = legendre(model, x) - k.log_mean_n;
        return RatePoint { x, value, branch: Branch::UpperCramer };
    }
    lower(k, model, x)
}

/// `Φ(x)`, the rate function of `R_n/n`, from [`ModelConstants::classical`].
pub fn phi_with(k: &ModelConstants, model: &DisplacementModel, x: f64) -> RatePoint {
    let c = k.speed_c;
    if is_at_speed(x, c) {
        return RatePoint { x, value: 0.0, branch: Branch::Zero };
    }
    if x > c {
        let value = legendre(model, x) - k.log_mean_n;
        return RatePoint { x, value, branch: Branch::UpperCramer };
    }
    lower(k, model, x)
}

/// `Φ(x)` computed from the laws directly.
pub fn phi_classical(
    model: &DisplacementModel,
    offspring: &OffspringModel,
    x: f64,
) -> Result<RatePoint, RateError> {
    let k = ModelConstants::classical(model, offspring)?;
    Ok(phi_with(&k, model, x))
}

/// `I_θ(x)`: rate of `S_n/n + log(Y/E)/(nθ)` along a single line of descent.
pub fn branch_rate(model: &DisplacementModel, theta: f64, x: f64) -> f64 {
    if x <= model.cgf_prime(theta) {
        legendre(model, x)
    } else {
        theta * x - model.cgf(theta)
    }
}

/// `inf_{0<t≤1} {ρt + t I((x - (1-t)c)/t)}` for `x < c`.
///
/// A coarse scan over `grid_size` equally spaced `t` locates the basin and
/// golden-section search refines it; the objective is convex in `t` (a
/// perspective of `I` plus a linear term). Arguments outside the domain of
/// `I` evaluate to `+∞`, which also covers the `t → 0` limit.
pub fn variational_lower_rate(
    k: &ModelConstants,
    model: &DisplacementModel,
    x: f64,
    grid_size: usize,
) -> Result<f64, RateError> {
    let c = k.speed_c;
    if !(x < c) {
        return Err(RateError::NotBelowSpeed(x, c));
    }
    if !k.rho.is_finite() {
        return Err(RateError::InfiniteRho);
    }
    let rho = k.rho;
    let objective = |t: f64| {
        let i = legendre(model, (x - (1.0 - t) * c) / t);
        if i.is_infinite() {
            f64::INFINITY
        } else {
            rho * t + t * i
        }
    };
    let m = grid_size.max(2);
    let (best, _) = (1..=m)
        .map(|i| (i, objective(i as f64 / m as f64)))
        .fold((m, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
    let lo = (best - 1) as f64 / m as f64;
    let hi = ((best + 1).min(m)) as f64 / m as f64;
    let lo = if lo == 0.0 { f64::EPSILON } else { lo };
    let (_, refined) = golden_section(objective, lo, hi, 1e-11);
    Ok(refined.min(objective(1.0)))
}

/// A rate function tabulated on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub constants: ModelConstants,
    pub points: Vec<RatePoint>,
}

impl RateCurve {
    pub fn tabulate<F>(constants: ModelConstants, xs: &[f64], f: F) -> Result<Self, RateError>
    where
        F: FnMut(f64) -> RatePoint,
    {
        if let Some(i) = xs.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(RateError::GridNotIncreasing(i + 1));
        }
        Ok(Self { constants, points: xs.iter().copied().map(f).collect() })
    }
}

/// `steps` equally spaced points on `[lo, hi]`, with `c` snapped in when it
/// falls within half a cell of a grid point.
pub fn grid_with_breakpoint(lo: f64, hi: f64, steps: usize, c: f64) -> Vec<f64> {
    let n = steps.max(2);
    let h = (hi - lo) / (n - 1) as f64;
    let mut xs: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
    if c > lo && c < hi {
        let j = libm::round((c - lo) / h) as usize;
        if j < n && (xs[j] - c).abs() <= 1e-9 * (1.0 + c.abs()) {
            xs[j] = c;
        }
    }
    xs
}
