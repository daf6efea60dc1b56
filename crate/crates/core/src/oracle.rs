//! Exact distributions of `R_n` and `R_n*` for lattice displacements and
//! finite offspring laws.
//!
//! Both follow from conditioning on the first generation. For `R_n`,
//!
//! ```text
//! q_0(s) = 1{s ≥ 0},   q_n(s) = Σ_k P(N=k) (Σ_x p_x q_{n-1}(s - x))^k
//! ```
//!
//! and for `R_n*`, with `ε = e^{-θt}` and `L_μ` the Laplace transform of `μ`,
//!
//! ```text
//! ψ_0(ε) = L_μ(ε),   ψ_n(ε) = Σ_k P(N=k) (Σ_x p_x ψ_{n-1}(ε e^{θx}))^k.
//! ```
//!
//! Unrolled from the root, every node is identified by the lattice index of
//! its accumulated displacement, so one table per depth covers all the
//! arguments that occur. Lower tails are propagated in log space; upper tails
//! use the complementary recursion `1 - (1 - ū)^k` through `log1p`/`expm1`
//! and never form `1 - ψ`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use libm::{ceil, exp, floor, pow, round};
use thiserror::Error;

use crate::convex::{ConvexError, ModelConstants};
use crate::models::{BrwModel, PerturbationMeasure};
use crate::numeric::{log_one_minus_pow_complement, log_sum_exp};
use crate::simulate::Tail;

/// Deepest generation accepted by [`exact_rate_curve`].
pub const MAX_RATE_GENERATIONS: u32 = 512;

/// Smallest representable log-tail, `-700 ln 10`.
pub const LOG_TAIL_FLOOR: f64 = -700.0 * core::f64::consts::LN_10;

/// Work limit of [`brute_force_frontier`].
pub const BRUTE_FORCE_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OracleError {
    #[error("the displacement law is not a finite lattice")]
    NotLattice,
    #[error("threshold {0} is not a lattice point")]
    OffLattice(f64),
    #[error("x = {0} equals the speed; neither tail decays")]
    AtSpeed(f64),
    #[error("n = {0} exceeds the supported maximum of {MAX_RATE_GENERATIONS}")]
    TooManyGenerations(u32),
    #[error("log tail {log_tail} at n = {n} is below the double-precision floor")]
    Underflow { n: u32, log_tail: f64 },
    #[error("enumeration exceeds {BRUTE_FORCE_LIMIT} outcomes")]
    CombinatorialBlowup,
    #[error(transparent)]
    Convex(#[from] ConvexError),
}

/// A lattice model together with the modification parameter `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    model: BrwModel,
    theta: f64,
    step: f64,
    offsets: Vec<i64>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    min_offset: i64,
    max_offset: i64,
}

impl LatticeSpec {
    pub fn new(model: BrwModel, theta: f64) -> Result<Self, OracleError> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(ConvexError::BadTheta(theta).into());
        }
        let l = model.displacement.as_lattice().ok_or(OracleError::NotLattice)?;
        Ok(Self {
            theta,
            step: l.step(),
            offsets: l.offsets().to_vec(),
            probs: l.probs().to_vec(),
            log_probs: l.log_probs().to_vec(),
            min_offset: l.min_offset(),
            max_offset: l.max_offset(),
            model,
        })
    }

    pub fn model(&self) -> &BrwModel {
        &self.model
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn constants(&self) -> Result<ModelConstants, OracleError> {
        Ok(ModelConstants::compute(
            &self.model.displacement,
            &self.model.offspring,
            self.theta,
        )?)
    }

    fn width(&self, depth: u32) -> usize {
        (depth as i64 * (self.max_offset - self.min_offset)) as usize + 1
    }

    /// Pushes `(log P(below), log P(above))` from the leaves at depth `n`
    /// (indexed by accumulated offset) up to the root.
    fn propagate_log<F>(&self, n: u32, leaf: F) -> (f64, f64)
    where
        F: Fn(i64) -> (f64, f64),
    {
        let base = |d: u32| d as i64 * self.min_offset;
        let mut level: Vec<(f64, f64)> = (0..self.width(n))
            .map(|i| leaf(base(n) + i as i64))
            .collect();
        let off = &self.model.offspring;
        for d in (0..n).rev() {
            level = (0..self.width(d))
                .map(|i| {
                    let child = |o: i64| level[(i as i64 + o - self.min_offset) as usize];
                    let below = log_sum_exp(
                        self.offsets
                            .iter()
                            .zip(&self.log_probs)
                            .map(|(&o, &lp)| lp + child(o).0),
                    );
                    let above = log_sum_exp(
                        self.offsets
                            .iter()
                            .zip(&self.log_probs)
                            .map(|(&o, &lp)| lp + child(o).1),
                    );
                    let node_below = log_sum_exp(
                        off.values()
                            .iter()
                            .zip(off.log_probs())
                            .map(|(&k, &lp)| lp + if below == f64::NEG_INFINITY { below } else { k as f64 * below }),
                    );
                    let node_above = log_sum_exp(
                        off.values()
                            .iter()
                            .zip(off.log_probs())
                            .map(|(&k, &lp)| lp + log_one_minus_pow_complement(above, k)),
                    );
                    (node_below, node_above)
                })
                .collect();
        }
        level[0]
    }

    /// Same recursion for the lower tail in plain probability space.
    fn propagate_linear<F>(&self, n: u32, leaf: F) -> f64
    where
        F: Fn(i64) -> f64,
    {
        let base = |d: u32| d as i64 * self.min_offset;
        let mut level: Vec<f64> = (0..self.width(n)).map(|i| leaf(base(n) + i as i64)).collect();
        let off = &self.model.offspring;
        for d in (0..n).rev() {
            level = (0..self.width(d))
                .map(|i| {
                    let a: f64 = self
                        .offsets
                        .iter()
                        .zip(&self.probs)
                        .map(|(&o, &p)| p * level[(i as i64 + o - self.min_offset) as usize])
                        .sum();
                    off.pmf().map(|(k, p)| p * pow(a, k as f64)).sum()
                })
                .collect();
        }
        level[0]
    }

    fn lattice_index(&self, s: f64) -> Result<i64, OracleError> {
        let r = s / self.step;
        let k = round(r);
        if (r - k).abs() > 1e-9 * (1.0 + r.abs()) {
            return Err(OracleError::OffLattice(s));
        }
        Ok(k as i64)
    }
}

/// `P(R ≤ threshold)` and `P(R > threshold)` with their logarithms.
///
/// `lower` comes from the linear-space recursion, `log_lower` and
/// `log_upper` from the log-space and complementary recursions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactTail {
    pub lower: f64,
    pub log_lower: f64,
    pub log_upper: f64,
}

impl ExactTail {
    pub fn upper(&self) -> f64 {
        exp(self.log_upper)
    }

    pub fn log_tail(&self, tail: Tail) -> f64 {
        match tail {
            Tail::Lower => self.log_lower,
            Tail::Upper => self.log_upper,
        }
    }
}

/// `P(R_n ≤ s)` for a lattice point `s`.
pub fn exact_rn_cdf(spec: &LatticeSpec, n: u32, s: f64) -> Result<ExactTail, OracleError> {
    let k = spec.lattice_index(s)?;
    Ok(rn_cdf_at_index(spec, n, k))
}

fn rn_cdf_at_index(spec: &LatticeSpec, n: u32, k: i64) -> ExactTail {
    let (log_lower, log_upper) = spec.propagate_log(n, |m| {
        if m <= k {
            (0.0, f64::NEG_INFINITY)
        } else {
            (f64::NEG_INFINITY, 0.0)
        }
    });
    let lower = spec.propagate_linear(n, |m| if m <= k { 1.0 } else { 0.0 });
    ExactTail { lower, log_lower, log_upper }
}

/// `P(R_n* ≤ t)` for any real `t`.
pub fn exact_rn_star_cdf(spec: &LatticeSpec, n: u32, t: f64) -> ExactTail {
    let (log_lower, log_upper) = spec.propagate_log(n, |m| {
        let log_s = leaf_log_arg(spec, m, t);
        let mu = &spec.model.perturbation;
        (mu.log_laplace_at_log(log_s), mu.log_one_minus_laplace_at_log(log_s))
    });
    ExactTail {
        lower: exact_rn_star_cdf_linear(spec, n, t),
        log_lower,
        log_upper,
    }
}

/// `θ(S - t)` for a leaf with accumulated offset `m`, i.e. `log(ε e^{θS})`.
fn leaf_log_arg(spec: &LatticeSpec, m: i64, t: f64) -> f64 {
    if t.is_infinite() {
        return -t;
    }
    spec.theta * (spec.step * m as f64 - t)
}

/// `P(R_n* ≤ t)` from the recursion in plain probability space.
pub fn exact_rn_star_cdf_linear(spec: &LatticeSpec, n: u32, t: f64) -> f64 {
    spec.propagate_linear(n, |m| {
        let log_s = leaf_log_arg(spec, m, t);
        spec.model.perturbation.laplace(exp(log_s))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfPoint {
    pub threshold: f64,
    pub probability: f64,
    pub log_probability: f64,
}

/// `P(R_n* ≤ t)` (or `> t`) tabulated on a set of thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactCdf {
    pub n: u32,
    pub grid: Vec<CdfPoint>,
    pub tail_mode: Tail,
}

impl ExactCdf {
    pub fn rn_star(spec: &LatticeSpec, n: u32, thresholds: &[f64], tail_mode: Tail) -> Self {
        let grid = thresholds
            .iter()
            .map(|&t| {
                let e = exact_rn_star_cdf(spec, n, t);
                let log_probability = e.log_tail(tail_mode);
                CdfPoint { threshold: t, probability: exp(log_probability), log_probability }
            })
            .collect();
        Self { n, grid, tail_mode }
    }
}

/// One row of an exact rate sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactRate {
    pub n: u32,
    pub tail: Tail,
    /// `n·x` before snapping.
    pub threshold: f64,
    /// Threshold actually used (identical to `threshold` for `R_n*`).
    pub threshold_snapped: f64,
    pub log_tail: f64,
    pub rate: f64,
}

fn pick_tail(x: f64, c: f64) -> Result<Tail, OracleError> {
    if x > c {
        Ok(Tail::Upper)
    } else if x < c {
        Ok(Tail::Lower)
    } else {
        Err(OracleError::AtSpeed(x))
    }
}

fn finish(n: u32, tail: Tail, threshold: f64, snapped: f64, log_tail: f64) -> Result<ExactRate, OracleError> {
    if !(log_tail >= LOG_TAIL_FLOOR) {
        return Err(OracleError::Underflow { n, log_tail });
    }
    Ok(ExactRate {
        n,
        tail,
        threshold,
        threshold_snapped: snapped,
        log_tail,
        rate: -log_tail / n as f64,
    })
}

/// `-(1/n) log P(R_n* > nx)` for `x > c(θ)`, or `-(1/n) log P(R_n* < nx)`
/// for `x < c(θ)`, at a single `n ≥ 1`.
pub fn exact_rate_at(spec: &LatticeSpec, x: f64, n: u32) -> Result<ExactRate, OracleError> {
    let tail = pick_tail(x, spec.constants()?.speed_c)?;
    rn_star_rate(spec, x, n, tail)
}

fn rn_star_rate(spec: &LatticeSpec, x: f64, n: u32, tail: Tail) -> Result<ExactRate, OracleError> {
    if n > MAX_RATE_GENERATIONS {
        return Err(OracleError::TooManyGenerations(n));
    }
    let t = n as f64 * x;
    let e = exact_rn_star_cdf(spec, n, t);
    finish(n, tail, t, t, e.log_tail(tail))
}

/// Exact rate sequence of `R_n*` for `n = 1..=n_max`.
pub fn exact_rate_curve(spec: &LatticeSpec, x: f64, n_max: u32) -> Result<Vec<ExactRate>, OracleError> {
    if n_max > MAX_RATE_GENERATIONS {
        return Err(OracleError::TooManyGenerations(n_max));
    }
    let tail = pick_tail(x, spec.constants()?.speed_c)?;
    (1..=n_max).map(|n| rn_star_rate(spec, x, n, tail)).collect()
}

/// Exact rate sequence of the unmodified maximum `R_n`.
///
/// `nx` is snapped to the lattice: down for `P(R_n > ·)`, up for
/// `P(R_n < ·)`; the snapped value is reported with each row.
pub fn exact_classical_rate_curve(
    spec: &LatticeSpec,
    x: f64,
    n_max: u32,
) -> Result<Vec<ExactRate>, OracleError> {
    if n_max > MAX_RATE_GENERATIONS {
        return Err(OracleError::TooManyGenerations(n_max));
    }
    let k = ModelConstants::classical(&spec.model.displacement, &spec.model.offspring)?;
    let tail = pick_tail(x, k.speed_c)?;
    (1..=n_max)
        .map(|n| {
            let t = n as f64 * x;
            let r = t / spec.step;
            let idx = match tail {
                Tail::Upper => floor(r + 1e-9) as i64,
                Tail::Lower => ceil(r - 1e-9) as i64,
            };
            let snapped = idx as f64 * spec.step;
            let log_tail = match tail {
                Tail::Upper => rn_cdf_at_index(spec, n, idx).log_upper,
                // R_n < snapped  ⟺  R_n ≤ snapped - step
                Tail::Lower => rn_cdf_at_index(spec, n, idx - 1).log_lower,
            };
            finish(n, tail, t, snapped, log_tail)
        })
        .collect()
}

/// Law of the generation-`n` frontier as a multiset of lattice indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierDistribution {
    pub n: u32,
    pub step: f64,
    /// Sorted index multisets with their probabilities.
    pub outcomes: Vec<(Vec<i64>, f64)>,
}

impl FrontierDistribution {
    pub fn total_probability(&self) -> f64 {
        self.outcomes.iter().map(|(_, p)| p).sum()
    }

    /// `P(R_n ≤ s)`.
    pub fn rn_cdf(&self, s: f64) -> f64 {
        self.outcomes
            .iter()
            .filter(|(v, _)| self.step * *v.last().expect("nonempty") as f64 <= s + 1e-12)
            .map(|(_, p)| p)
            .sum()
    }

    /// `P(R_n* ≤ t) = E[Π_v L_μ(e^{θ(S(v) - t)})]`.
    pub fn rn_star_cdf(&self, theta: f64, mu: &PerturbationMeasure, t: f64) -> f64 {
        self.outcomes
            .iter()
            .map(|(v, p)| {
                p * v
                    .iter()
                    .map(|&m| mu.laplace(exp(theta * (self.step * m as f64 - t))))
                    .product::<f64>()
            })
            .sum()
    }

    /// `E[A_n(θ)] = E[Σ_v e^{θS(v)} Y_v]`.
    pub fn mean_linear_stat(&self, theta: f64, mu: &PerturbationMeasure) -> f64 {
        let ey = mu.mean();
        self.outcomes
            .iter()
            .map(|(v, p)| p * v.iter().map(|&m| exp(theta * self.step * m as f64)).sum::<f64>())
            .sum::<f64>()
            * ey
    }
}

/// Enumerates every tree up to generation `n`, merging equal frontiers.
pub fn brute_force_frontier(spec: &LatticeSpec, n: u32) -> Result<FrontierDistribution, OracleError> {
    let mut work: u64 = 0;
    let mut tick = |amount: u64| {
        work += amount;
        if work > BRUTE_FORCE_LIMIT {
            Err(OracleError::CombinatorialBlowup)
        } else {
            Ok(())
        }
    };

    // Law of one particle's children as a sorted multiset of offsets.
    let mut brood: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    for (k, pk) in spec.model.offspring.pmf() {
        let mut partial: BTreeMap<Vec<i64>, f64> = BTreeMap::from([(Vec::new(), pk)]);
        for _ in 0..k {
            let mut next = BTreeMap::new();
            for (kids, q) in &partial {
                tick(spec.offsets.len() as u64)?;
                for (&o, &p) in spec.offsets.iter().zip(&spec.probs) {
                    let mut v = kids.clone();
                    v.push(o);
                    v.sort_unstable();
                    *next.entry(v).or_insert(0.0) += q * p;
                }
            }
            partial = next;
        }
        for (v, p) in partial {
            *brood.entry(v).or_insert(0.0) += p;
        }
    }

    let mut dist: BTreeMap<Vec<i64>, f64> = BTreeMap::from([(vec![0], 1.0)]);
    for _ in 0..n {
        let mut next_gen: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (frontier, p) in &dist {
            let mut partial: BTreeMap<Vec<i64>, f64> = BTreeMap::from([(Vec::new(), *p)]);
            for &pos in frontier {
                let mut next = BTreeMap::new();
                tick((partial.len() * brood.len()) as u64)?;
                for (acc, q) in &partial {
                    for (kids, r) in &brood {
                        let mut v = acc.clone();
                        v.extend(kids.iter().map(|&o| pos + o));
                        v.sort_unstable();
                        *next.entry(v).or_insert(0.0) += q * r;
                    }
                }
                partial = next;
            }
            for (v, q) in partial {
                *next_gen.entry(v).or_insert(0.0) += q;
            }
        }
        dist = next_gen;
    }
    Ok(FrontierDistribution {
        n,
        step: spec.step,
        outcomes: dist.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DisplacementModel, OffspringModel};
    use libm::{cosh, log};

    fn spec(disp: DisplacementModel, off: OffspringModel, theta: f64) -> LatticeSpec {
        LatticeSpec::new(BrwModel::new(disp, off, PerturbationMeasure::unit()), theta).unwrap()
    }

    fn rademacher_binary() -> LatticeSpec {
        spec(
            DisplacementModel::rademacher(),
            OffspringModel::deterministic(2).unwrap(),
            1.0,
        )
    }

    fn rademacher_one_or_three() -> LatticeSpec {
        spec(
            DisplacementModel::rademacher(),
            OffspringModel::new(&[(1, 0.5), (3, 0.5)]).unwrap(),
            1.0,
        )
    }

    #[test]
    fn rn_cdf_hand_values() {
        let s = rademacher_binary();
        assert_eq!(exact_rn_cdf(&s, 1, 0.0).unwrap().lower, 0.25);
        assert_eq!(exact_rn_cdf(&s, 2, 0.0).unwrap().lower, 25.0 / 64.0);
        let e = exact_rn_cdf(&s, 2, 0.0).unwrap();
        assert!((exp(e.log_lower) - 25.0 / 64.0).abs() < 1e-15);
        assert!((e.upper() - 39.0 / 64.0).abs() < 1e-15);
        assert_eq!(exact_rn_cdf(&s, 5, 5.0).unwrap().lower, 1.0);
        assert_eq!(exact_rn_cdf(&s, 5, 5.0).unwrap().log_upper, f64::NEG_INFINITY);
        assert_eq!(exact_rn_cdf(&s, 2, 0.5), Err(OracleError::OffLattice(0.5)));
    }

    #[test]
    fn rn_star_generation_zero() {
        let s = spec(
            DisplacementModel::rademacher(),
            OffspringModel::deterministic(2).unwrap(),
            2.5,
        );
        for t in [-2.0, 0.0, 0.7, 3.0] {
            let e = exact_rn_star_cdf(&s, 0, t);
            let want = exp(-exp(-2.5 * t));
            assert!((e.lower - want).abs() < 1e-15);
            assert!((exp(e.log_lower) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn rn_star_two_particle_closed_form() {
        let s = rademacher_binary();
        for t in [-1.0, 0.0, 1.0, 2.0] {
            let eps = exp(-t);
            let e1 = core::f64::consts::E;
            let half = 0.5 * (exp(-eps * e1) + exp(-eps / e1));
            let want = half * half;
            let got = exact_rn_star_cdf(&s, 1, t);
            assert!((got.lower - want).abs() < 1e-15);
            assert!((exp(got.log_lower) - want).abs() < 1e-14);
            assert!((got.upper() - (1.0 - want)).abs() < 1e-14);
        }
    }

    #[test]
    fn rn_star_limits() {
        let s = rademacher_one_or_three();
        let hi = exact_rn_star_cdf(&s, 4, f64::INFINITY);
        assert_eq!(hi.lower, 1.0);
        assert_eq!(hi.log_upper, f64::NEG_INFINITY);
        let lo = exact_rn_star_cdf(&s, 4, f64::NEG_INFINITY);
        assert_eq!(lo.lower, 0.0);
        assert_eq!(lo.log_upper, 0.0);
        assert!(exact_rn_star_cdf(&s, 4, 200.0).lower > 1.0 - 1e-15);
    }

    #[test]
    fn brute_force_trivial_and_mean() {
        let s = rademacher_binary();
        let d0 = brute_force_frontier(&s, 0).unwrap();
        assert_eq!(d0.outcomes, vec![(vec![0], 1.0)]);
        let d1 = brute_force_frontier(&s, 1).unwrap();
        assert!((d1.mean_linear_stat(1.0, &PerturbationMeasure::unit()) - 2.0 * cosh(1.0)).abs() < 1e-14);
        assert!((d1.mean_linear_stat(1.0, &PerturbationMeasure::unit()) - 3.086_161_3).abs() < 1e-7);
        let d2 = brute_force_frontier(&s, 2).unwrap();
        assert_eq!(d2.rn_cdf(0.0), 25.0 / 64.0);
        assert!((d2.total_probability() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dp_matches_enumeration() {
        let mu2 = PerturbationMeasure::discrete(&[(0.5, 0.3), (2.0, 0.7)]).unwrap();
        let specs = [
            rademacher_binary(),
            rademacher_one_or_three(),
            LatticeSpec::new(
                BrwModel::new(
                    DisplacementModel::lattice(0.5, &[-1, 0, 2], &[0.3, 0.3, 0.4]).unwrap(),
                    OffspringModel::new(&[(1, 0.6), (2, 0.4)]).unwrap(),
                    mu2,
                ),
                1.7,
            )
            .unwrap(),
        ];
        for s in &specs {
            for n in 0..=3 {
                let d = brute_force_frontier(s, n).unwrap();
                for k in -4..=7 {
                    let thr = k as f64 * s.step();
                    let e = exact_rn_cdf(s, n, thr).unwrap();
                    assert!((e.lower - d.rn_cdf(thr)).abs() < 1e-12);
                }
                for t in [-2.0, -0.5, 0.0, 0.3, 1.0, 2.5] {
                    let want = d.rn_star_cdf(s.theta(), &s.model().perturbation, t);
                    let e = exact_rn_star_cdf(s, n, t);
                    assert!((e.lower - want).abs() < 1e-12);
                    assert!((exp(e.log_lower) - want).abs() < 1e-12);
                    assert!((e.upper() - (1.0 - want)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn complementary_tail_survives_cancellation() {
        let s = rademacher_binary();
        let mut prev = f64::INFINITY;
        for t in [5.0, 10.0, 20.0, 40.0, 80.0] {
            let e = exact_rn_star_cdf(&s, 6, t);
            assert!(e.log_upper.is_finite());
            assert!(e.log_upper < prev);
            prev = e.log_upper;
            let naive = 1.0 - e.lower;
            if naive > 1e-6 {
                assert!((naive - e.upper()).abs() < 1e-10);
            }
        }
        // 1 - ψ has cancelled to 0 here while the complementary form has not
        assert_eq!(1.0 - exact_rn_star_cdf(&s, 6, 80.0).lower, 0.0);
    }

    #[test]
    fn log_and_linear_lower_tails_agree() {
        let s = rademacher_one_or_three();
        for n in [1u32, 5, 10, 20] {
            for t in [-6.0, -2.0, 0.0, 3.0] {
                let e = exact_rn_star_cdf(&s, n, t);
                if e.lower > 1e-300 {
                    assert!((exp(e.log_lower) - e.lower).abs() <= 1e-12 * e.lower);
                }
            }
        }
    }

    #[test]
    fn rate_rows_and_errors() {
        let s = rademacher_one_or_three();
        let k = s.constants().unwrap();
        assert_eq!(exact_rate_curve(&s, k.speed_c, 3), Err(OracleError::AtSpeed(k.speed_c)));
        assert_eq!(exact_rate_curve(&s, 0.0, 513), Err(OracleError::TooManyGenerations(513)));
        let rows = exact_rate_curve(&s, 0.0, 4).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].tail, Tail::Lower);
        // n = 1 from enumeration
        let d = brute_force_frontier(&s, 1).unwrap();
        let p = d.rn_star_cdf(1.0, &PerturbationMeasure::unit(), 0.0);
        assert!((rows[0].rate + log(p)).abs() < 1e-12);
    }

    #[test]
    fn classical_curve_snaps() {
        let s = spec(
            DisplacementModel::lattice(1.0, &[-1, 1], &[0.75, 0.25]).unwrap(),
            OffspringModel::deterministic(2).unwrap(),
            1.0,
        );
        let k = ModelConstants::classical(&s.model().displacement, &s.model().offspring).unwrap();
        let x = 0.5 * (k.speed_c + 1.0);
        let rows = exact_classical_rate_curve(&s, x, 6).unwrap();
        for r in &rows {
            assert_eq!(r.threshold_snapped, floor(r.threshold));
            assert!(r.rate > 0.0);
        }
    }

    #[test]
    fn not_lattice() {
        let m = BrwModel::new(
            DisplacementModel::gaussian(0.0, 1.0).unwrap(),
            OffspringModel::deterministic(2).unwrap(),
            PerturbationMeasure::unit(),
        );
        assert_eq!(LatticeSpec::new(m, 1.0), Err(OracleError::NotLattice));
    }
}
