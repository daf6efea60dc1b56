//! The three input laws of the process: the displacement `X`, the offspring
//! count `N` and the last-generation perturbation measure `μ`.
//!
//! Only families with an everywhere-finite moment generating function are
//! representable (Gaussian and finite lattice displacements, finitely
//! supported offspring and perturbation laws), so the moment assumptions on
//! `X`, `N` and `μ` hold by construction and only the remaining shape
//! constraints are checked at runtime.

use alloc::vec::Vec;

use libm::{exp, log, tanh};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::numeric::log_sum_exp;

/// Tolerance on `|Σ p - 1|` accepted for any probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("standard deviation must be positive and finite, got {0}")]
    BadStddev(f64),
    #[error("mean must be finite, got {0}")]
    BadMean(f64),
    #[error("lattice step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("offsets and probabilities differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("probability {0} is not in [0, 1]")]
    BadProbability(f64),
    #[error("probabilities sum to {0}, expected 1 within 1e-12")]
    NotNormalized(f64),
    #[error("value {0} appears more than once in the support")]
    DuplicateSupport(i64),
    #[error("displacement is degenerate (a single support point)")]
    Degenerate,
    #[error("offspring count 0 has positive probability (extinction is not allowed)")]
    Extinction,
    #[error("offspring law is a.s. 1: no branching")]
    NoBranching,
    #[error("perturbation atom {0} is not strictly positive and finite")]
    BadAtom(f64),
    #[error("empty support")]
    EmptySupport,
}

fn check_prob(p: f64) -> Result<(), ModelError> {
    if p.is_finite() && (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ModelError::BadProbability(p))
    }
}

fn check_normalized(total: f64) -> Result<(), ModelError> {
    if (total - 1.0).abs() <= NORMALIZATION_TOL {
        Ok(())
    } else {
        Err(ModelError::NotNormalized(total))
    }
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// Index drawn from a cumulative table; the last index absorbs rounding.
fn draw_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Finite lattice law `X = step · k` with `P(k = offsets[i]) = probs[i]`.
///
/// Offsets are kept sorted ascending with zero-probability entries dropped,
/// so `offsets[0]` and `offsets[last]` are the support edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    step: f64,
    offsets: Vec<i64>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl Lattice {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn min_offset(&self) -> i64 {
        self.offsets[0]
    }

    pub fn max_offset(&self) -> i64 {
        self.offsets[self.offsets.len() - 1]
    }

    /// Probability of the left support edge.
    pub fn p_min(&self) -> f64 {
        self.probs[0]
    }

    /// Probability of the right support edge.
    pub fn p_max(&self) -> f64 {
        self.probs[self.probs.len() - 1]
    }

    fn points(&self) -> impl Iterator<Item = (f64, f64)> + Clone + '_ {
        self.offsets
            .iter()
            .zip(&self.probs)
            .map(move |(&k, &p)| (self.step * k as f64, p))
    }

    /// Tilted weights `pᵢ e^{λxᵢ} / m(λ)` paired with the support points.
    fn tilted(&self, lambda: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let shift = self
            .points()
            .map(|(x, _)| lambda * x)
            .fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = self.points().map(|(x, p)| p * exp(lambda * x - shift)).sum();
        self.points()
            .map(move |(x, p)| (x, p * exp(lambda * x - shift) / total))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisplacementFamily {
    Gaussian { mean: f64, stddev: f64 },
    FiniteLattice(Lattice),
}

/// Law of the displacement `X` of a child relative to its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementModel {
    family: DisplacementFamily,
    mean: f64,
    variance: f64,
}

impl DisplacementModel {
    pub fn gaussian(mean: f64, stddev: f64) -> Result<Self, ModelError> {
        if !mean.is_finite() {
            return Err(ModelError::BadMean(mean));
        }
        if !(stddev.is_finite() && stddev > 0.0) {
            return Err(ModelError::BadStddev(stddev));
        }
        Ok(Self {
            family: DisplacementFamily::Gaussian { mean, stddev },
            mean,
            variance: stddev * stddev,
        })
    }

    pub fn lattice(step: f64, offsets: &[i64], probs: &[f64]) -> Result<Self, ModelError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(ModelError::BadStep(step));
        }
        if offsets.len() != probs.len() {
            return Err(ModelError::LengthMismatch(offsets.len(), probs.len()));
        }
        for &p in probs {
            check_prob(p)?;
        }
        check_normalized(probs.iter().sum())?;

        let mut pairs: Vec<(i64, f64)> = offsets
            .iter()
            .copied()
            .zip(probs.iter().copied())
            .collect();
        pairs.sort_by_key(|&(k, _)| k);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ModelError::DuplicateSupport(w[0].0));
            }
        }
        pairs.retain(|&(_, p)| p > 0.0);
        if pairs.len() < 2 {
            return Err(ModelError::Degenerate);
        }

        let offsets: Vec<i64> = pairs.iter().map(|&(k, _)| k).collect();
        let probs: Vec<f64> = pairs.iter().map(|&(_, p)| p).collect();
        let lattice = Lattice {
            step,
            log_probs: probs.iter().map(|&p| log(p)).collect(),
            cdf: cumulative(&probs),
            offsets,
            probs,
        };
        let mean: f64 = lattice.points().map(|(x, p)| p * x).sum();
        let variance: f64 = lattice
            .points()
            .map(|(x, p)| p * (x - mean) * (x - mean))
            .sum();
        Ok(Self {
            family: DisplacementFamily::FiniteLattice(lattice),
            mean,
            variance,
        })
    }

    /// Symmetric ±1 steps.
    pub fn rademacher() -> Self {
        Self::lattice(1.0, &[-1, 1], &[0.5, 0.5]).expect("valid lattice")
    }

    pub fn family(&self) -> &DisplacementFamily {
        &self.family
    }

    pub fn as_lattice(&self) -> Option<&Lattice> {
        match &self.family {
            DisplacementFamily::FiniteLattice(l) => Some(l),
            DisplacementFamily::Gaussian { .. } => None,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Closure of the range of `φ'`: `(-∞, ∞)` or `[x_min, x_max]`.
    pub fn support_bounds(&self) -> (f64, f64) {
        match &self.family {
            DisplacementFamily::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            DisplacementFamily::FiniteLattice(l) => (
                l.step * l.min_offset() as f64,
                l.step * l.max_offset() as f64,
            ),
        }
    }

    /// Cumulant generating function `φ(λ) = log E[e^{λX}]`.
    pub fn cgf(&self, lambda: f64) -> f64 {
        match &self.family {
            DisplacementFamily::Gaussian { mean, stddev } => {
                mean * lambda + 0.5 * stddev * stddev * lambda * lambda
            }
            DisplacementFamily::FiniteLattice(l) => {
                if lambda == 0.0 {
                    return 0.0;
                }
                log_sum_exp(
                    l.offsets
                        .iter()
                        .zip(&l.log_probs)
                        .map(|(&k, &lp)| lp + lambda * l.step * k as f64),
                )
            }
        }
    }

    /// `φ'(λ)`, the mean of the exponentially tilted law.
    pub fn cgf_prime(&self, lambda: f64) -> f64 {
        match &self.family {
            DisplacementFamily::Gaussian { mean, stddev } => mean + stddev * stddev * lambda,
            DisplacementFamily::FiniteLattice(l) => {
                if let [a, b] = l.offsets[..] {
                    // Two-point law: closed form through tanh keeps full
                    // relative accuracy far into the tails.
                    let (xa, xb) = (l.step * a as f64, l.step * b as f64);
                    let half = 0.5 * (xb - xa);
                    let skew = 0.5 * (l.log_probs[1] - l.log_probs[0]);
                    return 0.5 * (xa + xb) + half * tanh(lambda * half + skew);
                }
                l.tilted(lambda).map(|(x, w)| w * x).sum()
            }
        }
    }

    /// `φ''(λ)`, the variance of the tilted law (strictly positive).
    pub fn cgf_second(&self, lambda: f64) -> f64 {
        match &self.family {
            DisplacementFamily::Gaussian { stddev, .. } => stddev * stddev,
            DisplacementFamily::FiniteLattice(l) => {
                let m = self.cgf_prime(lambda);
                l.tilted(lambda).map(|(x, w)| w * (x - m) * (x - m)).sum()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            DisplacementFamily::Gaussian { mean, stddev } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + stddev * z
            }
            DisplacementFamily::FiniteLattice(l) => {
                l.step * l.offsets[draw_index(&l.cdf, rng)] as f64
            }
        }
    }

    /// Lattice offset index of a draw; `None` for continuous families.
    pub fn sample_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<i64> {
        self.as_lattice().map(|l| l.offsets[draw_index(&l.cdf, rng)])
    }
}

/// Law of the offspring count `N` (finite support, `N ≥ 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringModel {
    values: Vec<u32>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    cdf: Vec<f64>,
    mean: f64,
    rho: f64,
}

impl OffspringModel {
    pub fn new(pmf: &[(u32, f64)]) -> Result<Self, ModelError> {
        if pmf.is_empty() {
            return Err(ModelError::EmptySupport);
        }
        for &(_, p) in pmf {
            check_prob(p)?;
        }
        check_normalized(pmf.iter().map(|&(_, p)| p).sum())?;
        let mut pairs = pmf.to_vec();
        pairs.sort_by_key(|&(k, _)| k);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ModelError::DuplicateSupport(w[0].0 as i64));
            }
        }
        pairs.retain(|&(_, p)| p > 0.0);
        if pairs.iter().any(|&(k, _)| k == 0) {
            return Err(ModelError::Extinction);
        }
        if pairs.len() == 1 && pairs[0].0 == 1 {
            return Err(ModelError::NoBranching);
        }
        let values: Vec<u32> = pairs.iter().map(|&(k, _)| k).collect();
        let probs: Vec<f64> = pairs.iter().map(|&(_, p)| p).collect();
        let mean = pairs.iter().map(|&(k, p)| k as f64 * p).sum();
        let rho = match pairs.iter().find(|&&(k, _)| k == 1) {
            Some(&(_, p)) => -log(p),
            None => f64::INFINITY,
        };
        Ok(Self {
            log_probs: probs.iter().map(|&p| log(p)).collect(),
            cdf: cumulative(&probs),
            values,
            probs,
            mean,
            rho,
        })
    }

    /// `N ≡ k`.
    pub fn deterministic(k: u32) -> Result<Self, ModelError> {
        Self::new(&[(k, 1.0)])
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn pmf(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn log_mean(&self) -> f64 {
        log(self.mean)
    }

    /// `ρ = -log P(N = 1)`, `+∞` when 1 is not in the support.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn max_value(&self) -> u32 {
        self.values[self.values.len() - 1]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.values[draw_index(&self.cdf, rng)]
    }
}

/// `ν(λ) = φ(λ) + log E[N]`.
pub fn nu(displacement: &DisplacementModel, offspring: &OffspringModel, lambda: f64) -> f64 {
    displacement.cgf(lambda) + offspring.log_mean()
}

/// `ν'(λ) = φ'(λ)`.
pub fn nu_prime(displacement: &DisplacementModel, lambda: f64) -> f64 {
    displacement.cgf_prime(lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationFamily {
    PointMass { y: f64 },
    FiniteDiscrete { atoms: Vec<(f64, f64)> },
}

/// Positively supported measure `μ` of the last-generation factors `Y_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationMeasure {
    family: PerturbationFamily,
    log_atoms: Vec<f64>,
    log_probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl PerturbationMeasure {
    pub fn point_mass(y: f64) -> Result<Self, ModelError> {
        if !(y.is_finite() && y > 0.0) {
            return Err(ModelError::BadAtom(y));
        }
        Ok(Self {
            family: PerturbationFamily::PointMass { y },
            log_atoms: alloc::vec![log(y)],
            log_probs: alloc::vec![0.0],
            cdf: alloc::vec![1.0],
        })
    }

    /// `δ₁`.
    pub fn unit() -> Self {
        Self::point_mass(1.0).expect("valid atom")
    }

    pub fn discrete(atoms: &[(f64, f64)]) -> Result<Self, ModelError> {
        if atoms.is_empty() {
            return Err(ModelError::EmptySupport);
        }
        for &(y, p) in atoms {
            if !(y.is_finite() && y > 0.0) {
                return Err(ModelError::BadAtom(y));
            }
            check_prob(p)?;
        }
        check_normalized(atoms.iter().map(|&(_, p)| p).sum())?;
        let kept: Vec<(f64, f64)> = atoms.iter().copied().filter(|&(_, p)| p > 0.0).collect();
        let probs: Vec<f64> = kept.iter().map(|&(_, p)| p).collect();
        Ok(Self {
            log_atoms: kept.iter().map(|&(y, _)| log(y)).collect(),
            log_probs: probs.iter().map(|&p| log(p)).collect(),
            cdf: cumulative(&probs),
            family: PerturbationFamily::FiniteDiscrete { atoms: kept },
        })
    }

    pub fn family(&self) -> &PerturbationFamily {
        &self.family
    }

    pub fn mean(&self) -> f64 {
        self.log_atoms
            .iter()
            .zip(&self.log_probs)
            .map(|(a, p)| exp(a + p))
            .sum()
    }

    /// Laplace transform `L_μ(s) = ∫ e^{-s y} dμ(y)`.
    pub fn laplace(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 1.0;
        }
        self.log_atoms
            .iter()
            .zip(&self.log_probs)
            .map(|(&la, &lp)| exp(lp - s * exp(la)))
            .sum()
    }

    /// `log L_μ(e^{log_s})`, finite-free of overflow for any `log_s`.
    pub fn log_laplace_at_log(&self, log_s: f64) -> f64 {
        log_sum_exp(
            self.log_atoms
                .iter()
                .zip(&self.log_probs)
                .map(move |(&la, &lp)| lp - exp(log_s + la)),
        )
    }

    /// `log(1 - L_μ(e^{log_s}))`, accurate when `L_μ` is close to 1.
    pub fn log_one_minus_laplace_at_log(&self, log_s: f64) -> f64 {
        log_sum_exp(
            self.log_atoms
                .iter()
                .zip(&self.log_probs)
                .map(move |(&la, &lp)| lp + crate::numeric::log_one_minus_exp_neg(log_s + la)),
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            PerturbationFamily::PointMass { y } => *y,
            PerturbationFamily::FiniteDiscrete { atoms } => atoms[draw_index(&self.cdf, rng)].0,
        }
    }

    /// `log Y` of a draw; avoids a `log` call in the simulation hot path.
    pub fn sample_log<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.log_atoms.len() == 1 {
            self.log_atoms[0]
        } else {
            self.log_atoms[draw_index(&self.cdf, rng)]
        }
    }
}

/// The three laws that define a (modified) branching random walk.
#[derive(Debug, Clone, PartialEq)]
pub struct BrwModel {
    pub displacement: DisplacementModel,
    pub offspring: OffspringModel,
    pub perturbation: PerturbationMeasure,
}

impl BrwModel {
    pub fn new(
        displacement: DisplacementModel,
        offspring: OffspringModel,
        perturbation: PerturbationMeasure,
    ) -> Self {
        Self { displacement, offspring, perturbation }
    }
}

/// Exponential(1) by inversion: `-log U` with `U ∈ (0, 1]`.
pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -sample_log_uniform(rng)
}

/// `log U` for `U` uniform on `(0, 1]`, i.e. `-E` with `E ~ Exponential(1)`.
pub fn sample_log_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    log(1.0 - u)
}
