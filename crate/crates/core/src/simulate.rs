//! Monte Carlo for the branching random walk and its last-progeny
//! modification.
//!
//! Every replicate draws from its own counter-based ChaCha stream keyed by
//! `(master_seed, replicate_index)`. Replicates are grouped into fixed blocks
//! of [`BLOCK`] indices; an [`Executor`] may evaluate blocks in any order and
//! on any number of threads, and block summaries are merged in block order,
//! so aggregated estimates are bit-identical for every degree of parallelism.

use alloc::vec::Vec;
use core::ops::Range;

use libm::{exp, expm1, log, sqrt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::RngCore;
use thiserror::Error;

use crate::convex::{ConvexError, ModelConstants};
use crate::models::{sample_exponential, BrwModel, DisplacementModel, OffspringModel};
use crate::numeric::log_sum_exp;

/// Largest generation size a replicate may reach.
pub const POP_CAP: usize = 1 << 25;

/// Replicates per scheduling block.
pub const BLOCK: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SimError {
    #[error("population would exceed {cap} particles at generation {generation}; lower n")]
    PopulationCap { generation: u32, cap: usize },
    #[error("estimated probability is 0 at n = {0}: more replicates are needed")]
    DegenerateEstimate(u32),
    #[error("replicate count must be positive")]
    NoReplicates,
    #[error(transparent)]
    Convex(#[from] ConvexError),
}

/// Random stream of one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateRng {
    seed: u64,
    index: u64,
    inner: ChaCha8Rng,
}

impl ReplicateRng {
    pub fn new(master_seed: u64, replicate_index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(replicate_index);
        Self { seed: master_seed, index: replicate_index, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }
}

impl RngCore for ReplicateRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Runs independent blocks of work and returns their results in block order.
pub trait Executor: Sync {
    fn map_blocks<T, F>(&self, blocks: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Single-threaded executor.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_blocks<T, F>(&self, blocks: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..blocks).map(f).collect()
    }
}

fn block_count(replicates: u64) -> usize {
    replicates.div_ceil(BLOCK) as usize
}

fn block_range(block: usize, replicates: u64) -> Range<u64> {
    let start = block as u64 * BLOCK;
    start..(start + BLOCK).min(replicates)
}

/// Count, sum and sum of squares.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Pairwise combination of two running summaries.
    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        self.mean += d * nb / n;
        self.m2 += other.m2 + d * d * na * nb / n;
        self.count += other.count;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.mean
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        sqrt((self.m2 / (n - 1.0)).max(0.0) / n)
    }
}

/// Generation-`n` positions of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierSample {
    pub generation: u32,
    pub positions: Vec<f64>,
    pub rightmost: f64,
    pub rng_seed: u64,
    pub replicate_index: u64,
}

/// One realisation of `R_n*` and `A_n(θ)` on top of a frontier.
#[derive(Debug, Clone, PartialEq)]
pub struct LpmSample {
    pub base: FrontierSample,
    pub theta: f64,
    pub r_star: f64,
    /// `log Σ_v e^{θS(v)} Y_v`.
    pub log_linear_stat: f64,
}

impl LpmSample {
    pub fn linear_stat(&self) -> f64 {
        exp(self.log_linear_stat)
    }
}

fn check_projected(offspring: &OffspringModel, n: u32) -> Result<(), SimError> {
    if n as f64 * offspring.log_mean() > log(POP_CAP as f64) {
        return Err(SimError::PopulationCap { generation: n, cap: POP_CAP });
    }
    Ok(())
}

/// Reusable double buffer for frontier growth.
#[derive(Debug, Default)]
struct Frontier {
    current: Vec<f64>,
    next: Vec<f64>,
}

impl Frontier {
    fn reset(&mut self) {
        self.current.clear();
        self.current.push(0.0);
    }

    fn advance<R: RngCore>(
        &mut self,
        displacement: &DisplacementModel,
        offspring: &OffspringModel,
        generation: u32,
        rng: &mut R,
    ) -> Result<(), SimError> {
        self.next.clear();
        for &parent in &self.current {
            let k = offspring.sample(rng);
            for _ in 0..k {
                self.next.push(parent + displacement.sample(rng));
            }
        }
        if self.next.len() > POP_CAP {
            return Err(SimError::PopulationCap { generation, cap: POP_CAP });
        }
        core::mem::swap(&mut self.current, &mut self.next);
        Ok(())
    }

    fn grow<R: RngCore>(
        &mut self,
        displacement: &DisplacementModel,
        offspring: &OffspringModel,
        n: u32,
        rng: &mut R,
    ) -> Result<(), SimError> {
        self.reset();
        for g in 1..=n {
            self.advance(displacement, offspring, g, rng)?;
        }
        Ok(())
    }
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Grows a fresh tree to generation `n` and returns its frontier.
pub fn grow_frontier(
    displacement: &DisplacementModel,
    offspring: &OffspringModel,
    n: u32,
    rng: &mut ReplicateRng,
) -> Result<FrontierSample, SimError> {
    check_projected(offspring, n)?;
    let mut f = Frontier::default();
    f.grow(displacement, offspring, n, rng)?;
    Ok(FrontierSample {
        generation: n,
        rightmost: max_of(&f.current),
        positions: f.current,
        rng_seed: rng.seed(),
        replicate_index: rng.index(),
    })
}

/// `(R_n*, log A_n(θ))` for given positions, sharing the `Y_v` draws.
fn modify<R: RngCore>(model: &BrwModel, positions: &[f64], theta: f64, rng: &mut R) -> (f64, f64) {
    let mut r_star = f64::NEG_INFINITY;
    let mut log_terms_max = f64::NEG_INFINITY;
    let mut scaled_sum = 0.0;
    for &s in positions {
        let log_y = model.perturbation.sample_log(rng);
        let log_e = log(sample_exponential(rng));
        r_star = r_star.max(s + (log_y - log_e) / theta);
        // streaming log-sum-exp of θS + log Y
        let term = theta * s + log_y;
        if term > log_terms_max {
            scaled_sum = scaled_sum * exp(log_terms_max - term) + 1.0;
            log_terms_max = term;
        } else {
            scaled_sum += exp(term - log_terms_max);
        }
    }
    (r_star, log_terms_max + log(scaled_sum))
}

/// Applies the last-generation perturbation `log(Y_v/E_v)/θ` to a frontier.
pub fn lpm_sample(
    frontier: FrontierSample,
    theta: f64,
    model: &BrwModel,
    rng: &mut ReplicateRng,
) -> LpmSample {
    let (r_star, log_linear_stat) = modify(model, &frontier.positions, theta, rng);
    LpmSample { base: frontier, theta, r_star, log_linear_stat }
}

/// `(log A_n^μ(θ) - log E)/θ` on a fresh tree with an independent `E`.
pub fn coupling_sample(
    model: &BrwModel,
    theta: f64,
    n: u32,
    rng: &mut ReplicateRng,
) -> Result<f64, SimError> {
    let frontier = grow_frontier(&model.displacement, &model.offspring, n, rng)?;
    Ok(coupling_from(model, &frontier.positions, theta, rng))
}

fn coupling_from<R: RngCore>(model: &BrwModel, positions: &[f64], theta: f64, rng: &mut R) -> f64 {
    let log_a = log_sum_exp(
        positions
            .iter()
            .map(|&s| theta * s + model.perturbation.sample_log(rng))
            .collect::<Vec<_>>(),
    );
    (log_a - log(sample_exponential(rng))) / theta
}

/// Per-replicate record written by the `simulate` command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateRow {
    pub replicate: u64,
    pub n: u32,
    pub r_n: f64,
    pub r_star: f64,
    pub log_a_n_theta: f64,
}

/// Runs `replicates` independent trees and records `R_n`, `R_n*`, `log A_n(θ)`.
pub fn simulate_replicates<E: Executor>(
    model: &BrwModel,
    theta: f64,
    n: u32,
    replicates: u64,
    seed: u64,
    exec: &E,
) -> Result<Vec<ReplicateRow>, SimError> {
    check_projected(&model.offspring, n)?;
    let blocks = exec.map_blocks(block_count(replicates), |b| -> Result<_, SimError> {
        let mut f = Frontier::default();
        let mut rows = Vec::new();
        for r in block_range(b, replicates) {
            let mut rng = ReplicateRng::new(seed, r);
            f.grow(&model.displacement, &model.offspring, n, &mut rng)?;
            let (r_star, log_a) = modify(model, &f.current, theta, &mut rng);
            rows.push(ReplicateRow {
                replicate: r,
                n,
                r_n: max_of(&f.current),
                r_star,
                log_a_n_theta: log_a,
            });
        }
        Ok(rows)
    });
    let mut out = Vec::with_capacity(replicates as usize);
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}

/// Which side of a threshold a probability refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tail {
    /// `P(R ≤ t)` (or `< t`; the law of `R_n*` has no atoms).
    Lower,
    /// `P(R > t)`.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Indicator of the event on a simulated `R_n*`.
    Direct,
    /// Conditional probability given the tree, averaged over trees.
    Smoothed,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::Direct => "direct",
            Estimator::Smoothed => "smoothed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub n: u32,
    pub threshold: f64,
    pub tail: Tail,
    pub p_hat: f64,
    pub std_error: f64,
    pub replicates: u64,
    pub estimator: Estimator,
}

/// Both tails of `P(R_n* ≤ t)` estimated on one replicate set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfEstimate {
    pub lower: TailEstimate,
    pub upper: TailEstimate,
}

/// `Σ_v log L_μ(e^{θ(S(v) - t)}) = log P(R_n* ≤ t | tree)`.
fn conditional_log_cdf(model: &BrwModel, positions: &[f64], theta: f64, t: f64) -> f64 {
    match model.perturbation.family() {
        crate::models::PerturbationFamily::PointMass { y } => {
            let log_y = log(*y);
            -positions
                .iter()
                .map(|&s| exp(theta * (s - t) + log_y))
                .sum::<f64>()
        }
        _ => positions
            .iter()
            .map(|&s| model.perturbation.log_laplace_at_log(theta * (s - t)))
            .sum(),
    }
}

fn estimate(n: u32, t: f64, tail: Tail, m: &Moments, estimator: Estimator) -> TailEstimate {
    TailEstimate {
        n,
        threshold: t,
        tail,
        p_hat: m.mean().clamp(0.0, 1.0),
        std_error: m.std_error(),
        replicates: m.count,
        estimator,
    }
}

/// Estimates `P(R_n* ≤ t)` and `P(R_n* > t)` for every `t` in `thresholds`
/// with common random numbers across thresholds.
///
/// The smoothed estimator averages `Π_v L_μ(e^{θ(S(v)-t)})` (and its
/// complement through `expm1`) over simulated trees; the direct estimator
/// averages indicators on a simulated `R_n*`.
#[allow(clippy::too_many_arguments)]
pub fn smoothed_cdf<E: Executor>(
    model: &BrwModel,
    theta: f64,
    n: u32,
    thresholds: &[f64],
    replicates: u64,
    seed: u64,
    estimator: Estimator,
    exec: &E,
) -> Result<Vec<CdfEstimate>, SimError> {
    if replicates == 0 {
        return Err(SimError::NoReplicates);
    }
    check_projected(&model.offspring, n)?;
    let k = thresholds.len();
    let blocks = exec.map_blocks(block_count(replicates), |b| -> Result<_, SimError> {
        let mut f = Frontier::default();
        let mut acc = alloc::vec![(Moments::default(), Moments::default()); k];
        for r in block_range(b, replicates) {
            let mut rng = ReplicateRng::new(seed, r);
            f.grow(&model.displacement, &model.offspring, n, &mut rng)?;
            match estimator {
                Estimator::Smoothed => {
                    for (slot, &t) in acc.iter_mut().zip(thresholds) {
                        let s = conditional_log_cdf(model, &f.current, theta, t);
                        slot.0.push(exp(s));
                        slot.1.push(-expm1(s));
                    }
                }
                Estimator::Direct => {
                    let (r_star, _) = modify(model, &f.current, theta, &mut rng);
                    for (slot, &t) in acc.iter_mut().zip(thresholds) {
                        let below = if r_star <= t { 1.0 } else { 0.0 };
                        slot.0.push(below);
                        slot.1.push(1.0 - below);
                    }
                }
            }
        }
        Ok(acc)
    });
    let mut total = alloc::vec![(Moments::default(), Moments::default()); k];
    for b in blocks {
        for (t, m) in total.iter_mut().zip(b?) {
            t.0.merge(&m.0);
            t.1.merge(&m.1);
        }
    }
    Ok(total
        .iter()
        .zip(thresholds)
        .map(|((lo, up), &t)| CdfEstimate {
            lower: estimate(n, t, Tail::Lower, lo, estimator),
            upper: estimate(n, t, Tail::Upper, up, estimator),
        })
        .collect())
}

/// `-(1/n) log p̂` with its delta-method band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub n: u32,
    pub tail: Tail,
    pub estimate: TailEstimate,
    pub rate_hat: f64,
    pub std_band: f64,
}

/// Monte Carlo rate `-(1/n) log P(R_n* > nx)` (upper tail when `x ≥ c(θ)`)
/// or `-(1/n) log P(R_n* < nx)` (when `x < c(θ)`), for each `n` in `n_list`.
///
/// Each replicate grows one tree to `max(n_list)` and is evaluated at every
/// requested generation along the way.
#[allow(clippy::too_many_arguments)]
pub fn empirical_rate<E: Executor>(
    model: &BrwModel,
    theta: f64,
    x: f64,
    n_list: &[u32],
    replicates: u64,
    seed: u64,
    exec: &E,
) -> Result<Vec<RateEstimate>, SimError> {
    if replicates == 0 {
        return Err(SimError::NoReplicates);
    }
    let k = ModelConstants::compute(&model.displacement, &model.offspring, theta)?;
    let tail = if x >= k.speed_c { Tail::Upper } else { Tail::Lower };
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    check_projected(&model.offspring, n_max)?;
    let blocks = exec.map_blocks(block_count(replicates), |b| -> Result<_, SimError> {
        let mut f = Frontier::default();
        let mut acc = alloc::vec![Moments::default(); n_list.len()];
        for r in block_range(b, replicates) {
            let mut rng = ReplicateRng::new(seed, r);
            f.reset();
            for g in 0..=n_max {
                if g > 0 {
                    f.advance(&model.displacement, &model.offspring, g, &mut rng)?;
                }
                for (slot, _) in acc.iter_mut().zip(n_list).filter(|(_, &n)| n == g) {
                    let s = conditional_log_cdf(model, &f.current, theta, g as f64 * x);
                    slot.push(match tail {
                        Tail::Lower => exp(s),
                        Tail::Upper => -expm1(s),
                    });
                }
            }
        }
        Ok(acc)
    });
    let mut total = alloc::vec![Moments::default(); n_list.len()];
    for b in blocks {
        for (t, m) in total.iter_mut().zip(b?) {
            t.merge(&m);
        }
    }
    n_list
        .iter()
        .zip(&total)
        .map(|(&n, m)| {
            let est = estimate(n, n as f64 * x, tail, m, Estimator::Smoothed);
            if est.p_hat <= 0.0 {
                return Err(SimError::DegenerateEstimate(n));
            }
            let nf = (n as f64).max(1.0);
            Ok(RateEstimate {
                n,
                tail,
                estimate: est,
                rate_hat: -log(est.p_hat) / nf,
                std_band: est.std_error / (est.p_hat * nf),
            })
        })
        .collect()
}

/// Independent draws of `R_n*` from [`lpm_sample`] on fresh trees.
pub fn lpm_draws<E: Executor>(
    model: &BrwModel,
    theta: f64,
    n: u32,
    replicates: u64,
    seed: u64,
    exec: &E,
) -> Result<Vec<f64>, SimError> {
    Ok(simulate_replicates(model, theta, n, replicates, seed, exec)?
        .into_iter()
        .map(|r| r.r_star)
        .collect())
}

/// Independent draws of `(log A_n^μ(θ) - log E)/θ`.
pub fn coupling_draws<E: Executor>(
    model: &BrwModel,
    theta: f64,
    n: u32,
    replicates: u64,
    seed: u64,
    exec: &E,
) -> Result<Vec<f64>, SimError> {
    check_projected(&model.offspring, n)?;
    let blocks = exec.map_blocks(block_count(replicates), |b| -> Result<_, SimError> {
        let mut f = Frontier::default();
        let mut out = Vec::new();
        for r in block_range(b, replicates) {
            let mut rng = ReplicateRng::new(seed, r);
            f.grow(&model.displacement, &model.offspring, n, &mut rng)?;
            out.push(coupling_from(model, &f.current, theta, &mut rng));
        }
        Ok(out)
    });
    let mut all = Vec::with_capacity(replicates as usize);
    for b in blocks {
        all.extend(b?);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::PerturbationMeasure;
    use core::f64::consts::LN_2;

    fn f1() -> BrwModel {
        BrwModel::new(
            DisplacementModel::gaussian(0.0, 1.0).unwrap(),
            OffspringModel::deterministic(2).unwrap(),
            PerturbationMeasure::unit(),
        )
    }

    fn rademacher_binary() -> BrwModel {
        BrwModel::new(
            DisplacementModel::rademacher(),
            OffspringModel::deterministic(2).unwrap(),
            PerturbationMeasure::unit(),
        )
    }

    #[test]
    fn generation_zero() {
        let m = f1();
        let mut rng = ReplicateRng::new(1, 0);
        let fs = grow_frontier(&m.displacement, &m.offspring, 0, &mut rng).unwrap();
        assert_eq!(fs.positions, [0.0]);
        assert_eq!(fs.rightmost, 0.0);
        let mut copy = rng.clone();
        let e = sample_exponential(&mut copy);
        let s = lpm_sample(fs, 2.0, &m, &mut rng);
        assert!((s.r_star + log(e) / 2.0).abs() < 1e-15);
        assert_eq!(s.linear_stat(), 1.0);
    }

    #[test]
    fn coupling_generation_zero() {
        let m = f1();
        let mut rng = ReplicateRng::new(4, 9);
        let mut copy = rng.clone();
        let v = coupling_sample(&m, 3.0, 0, &mut rng).unwrap();
        let e = sample_exponential(&mut copy);
        assert!((v + log(e) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn population_cap() {
        let m = f1();
        let mut rng = ReplicateRng::new(1, 0);
        assert_eq!(
            grow_frontier(&m.displacement, &m.offspring, 26, &mut rng),
            Err(SimError::PopulationCap { generation: 26, cap: POP_CAP })
        );
    }

    #[test]
    fn rightmost_after_one_rademacher_generation() {
        let m = rademacher_binary();
        let reps = 1_000_000;
        let rows = simulate_replicates(&m, 1.0, 1, reps, 5, &Sequential).unwrap();
        let hits = rows.iter().filter(|r| r.r_n == 1.0).count() as f64 / reps as f64;
        assert!((hits - 0.75).abs() < 0.002);
    }

    #[test]
    fn rows_are_consistent() {
        let m = f1();
        let rows = simulate_replicates(&m, 1.5, 3, 300, 2, &Sequential).unwrap();
        assert_eq!(rows.len(), 300);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.replicate, i as u64);
            assert!(r.log_a_n_theta.is_finite());
        }
        let mut rng = ReplicateRng::new(2, 17);
        let fs = grow_frontier(&m.displacement, &m.offspring, 3, &mut rng).unwrap();
        assert_eq!(fs.positions.len(), 8);
        assert_eq!(fs.rightmost, rows[17].r_n);
        let s = lpm_sample(fs, 1.5, &m, &mut rng);
        assert_eq!(s.r_star, rows[17].r_star);
        assert_eq!(s.log_linear_stat, rows[17].log_a_n_theta);
    }

    #[test]
    fn large_theta_pins_r_star_to_rightmost() {
        let m = f1();
        let rows = simulate_replicates(&m, 1000.0, 4, 10_000, 8, &Sequential).unwrap();
        let close = rows.iter().filter(|r| (r.r_star - r.r_n).abs() < 0.05).count();
        assert!(close as f64 >= 0.99 * 10_000.0);
    }

    #[test]
    fn smoothed_generation_zero_is_exact() {
        let m = f1();
        let theta = 2.0;
        let t = 0.4;
        let est = smoothed_cdf(&m, theta, 0, &[t], 50, 1, Estimator::Smoothed, &Sequential)
            .unwrap();
        let want = exp(-exp(-theta * t));
        assert!((est[0].lower.p_hat - want).abs() < 1e-15);
        assert!(est[0].lower.std_error < 1e-12);
    }

    #[test]
    fn smoothed_limits_and_monotonicity() {
        let m = f1();
        let ts = [f64::NEG_INFINITY, 1.0, 2.0, 3.0, f64::INFINITY];
        let est = smoothed_cdf(&m, 1.0, 4, &ts, 500, 3, Estimator::Smoothed, &Sequential).unwrap();
        assert_eq!(est[0].lower.p_hat, 0.0);
        assert_eq!(est[0].upper.p_hat, 1.0);
        assert_eq!(est[4].lower.p_hat, 1.0);
        assert_eq!(est[4].upper.p_hat, 0.0);
        for w in est.windows(2) {
            assert!(w[0].lower.p_hat <= w[1].lower.p_hat);
        }
    }

    #[test]
    fn direct_and_smoothed_agree() {
        let m = f1();
        let ts = [1.5, 3.0];
        let s = smoothed_cdf(&m, 1.0, 3, &ts, 40_000, 3, Estimator::Smoothed, &Sequential).unwrap();
        let d = smoothed_cdf(&m, 1.0, 3, &ts, 40_000, 4, Estimator::Direct, &Sequential).unwrap();
        for (a, b) in s.iter().zip(&d) {
            let se = sqrt(a.lower.std_error.powi(2) + b.lower.std_error.powi(2));
            assert!((a.lower.p_hat - b.lower.p_hat).abs() < 5.0 * se);
            // Rao-Blackwellisation never increases the variance
            assert!(a.lower.std_error <= b.lower.std_error * 1.05);
        }
    }

    #[test]
    fn linear_stat_mean() {
        // E[A_n(θ)] = (E[N] m(θ))^n with μ = δ₁
        let m = f1();
        let theta = 1.0;
        for n in [1u32, 3, 6] {
            let rows = simulate_replicates(&m, theta, n, 100_000, 21, &Sequential).unwrap();
            let mut mom = Moments::default();
            for r in &rows {
                mom.push(exp(r.log_a_n_theta));
            }
            let want = exp(n as f64 * (LN_2 + 0.5));
            assert!(
                (mom.mean() - want).abs() < 5.0 * mom.std_error(),
                "n={n}: {} vs {want} ± {}",
                mom.mean(),
                mom.std_error()
            );
        }
    }

    #[test]
    fn empirical_rate_at_speed_is_small() {
        let m = f1();
        let k = ModelConstants::compute(&m.displacement, &m.offspring, 3.0).unwrap();
        let r = empirical_rate(&m, 3.0, k.speed_c, &[4, 8], 2000, 1, &Sequential).unwrap();
        assert_eq!(r[0].tail, Tail::Upper);
        // polynomial decay at the speed: the rate shrinks roughly like log n / n
        assert!(r[1].rate_hat < r[0].rate_hat && r[1].rate_hat < 0.4, "{:?}", r);
    }

    #[test]
    fn degenerate_estimate_is_reported() {
        let m = f1();
        let r = empirical_rate(&m, 3.0, 1000.0, &[2], 10, 1, &Sequential);
        assert_eq!(r.unwrap_err(), SimError::DegenerateEstimate(2));
    }

    #[test]
    fn moments_merge() {
        let mut a = Moments::default();
        let mut b = Moments::default();
        a.push(1.0);
        b.push(3.0);
        a.merge(&b);
        assert_eq!(a.mean(), 2.0);
        assert!((a.std_error() - 1.0).abs() < 1e-15);
    }
}
