//! Invariant checks run by the `verify` command.

use brwld_core::convex::{legendre, legendre_prime, ModelConstants};
use brwld_core::oracle::{
    brute_force_frontier, exact_rn_cdf, exact_rn_star_cdf, LatticeSpec, OracleError,
};
use brwld_core::ratefn::{branch_rate, phi_with, psi, variational_lower_rate};
use brwld_core::simulate::{
    coupling_draws, lpm_draws, simulate_replicates, smoothed_cdf, Estimator, Executor,
};
use brwld_core::stats::ks_two_sample;
use brwld_core::{BrwModel, DisplacementModel};
use serde::Serialize;

use crate::config::RunModel;
use crate::error::CliError;
use crate::runner::Threads;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub check_name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `statistic ≤ threshold`.
    pub fn at_most(name: &str, statistic: f64, threshold: f64) -> Self {
        Self { check_name: name.into(), statistic, threshold, pass: statistic <= threshold }
    }

    /// Passes when `statistic > threshold`.
    pub fn above(name: &str, statistic: f64, threshold: f64) -> Self {
        Self { check_name: name.into(), statistic, threshold, pass: statistic > threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config: String,
    pub theta: f64,
    pub seed: u64,
    pub replicates: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// `|a - b|`, with equal infinities counting as agreement.
fn gap(a: f64, b: f64) -> f64 {
    if a == b { 0.0 } else { (a - b).abs() }
}

/// Largest relative error of central differences against `φ'` and `φ''`.
pub fn cgf_finite_difference(d: &DisplacementModel) -> f64 {
    let h = 1e-5;
    linspace(-3.0, 3.0, 25)
        .map(|l| {
            let fd1 = (d.cgf(l + h) - d.cgf(l - h)) / (2.0 * h);
            let fd2 = (d.cgf_prime(l + h) - d.cgf_prime(l - h)) / (2.0 * h);
            let e1 = (fd1 - d.cgf_prime(l)).abs() / d.cgf_prime(l).abs().max(1.0);
            let e2 = (fd2 - d.cgf_second(l)).abs() / d.cgf_second(l).abs().max(1.0);
            e1.max(e2)
        })
        .fold(0.0, f64::max)
}

/// Largest error of `I(φ'(λ)) = λφ'(λ) - φ(λ)` and `I'(φ'(λ)) = λ`.
pub fn legendre_duality(d: &DisplacementModel) -> f64 {
    linspace(-2.0, 2.0, 41)
        .map(|l| {
            let x = d.cgf_prime(l);
            let e1 = (legendre(d, x) - (l * x - d.cgf(l))).abs();
            let e2 = legendre_prime(d, x).map(|p| (p - l).abs()).unwrap_or(f64::INFINITY);
            e1.max(e2)
        })
        .fold(0.0, f64::max)
}

/// Largest jump of `Ψ_θ` across `d(θ)`, `c(θ)` and `a`.
pub fn psi_continuity(k: &ModelConstants, d: &DisplacementModel) -> f64 {
    let h = 1e-10;
    let at = |x: f64| psi(k, d, x).value;
    let mut worst: f64 = 0.0;
    let c = k.speed_c;
    if k.threshold_d.is_finite() && k.threshold_d - h > c {
        let b = k.threshold_d;
        worst = worst.max(gap(at(b - h), at(b + h)));
    }
    worst = worst.max(at(c + h * (1.0 + c.abs())));
    if k.rho.is_finite() {
        worst = worst.max(at(c - h * (1.0 + c.abs())));
    }
    if let Some(a) = k.a_tangent {
        worst = worst.max(gap(at(a - h), at(a + h)));
    }
    worst
}

/// Largest `|Ψ_θ(x) - (I_θ(x) - log E[N])|` over `x ∈ [c, c + 4]`.
pub fn psi_upper_identity(k: &ModelConstants, d: &DisplacementModel) -> f64 {
    let c = k.speed_c;
    linspace(c, c + 4.0, 200)
        .map(|x| gap(psi(k, d, x).value, branch_rate(d, k.theta, x) - k.log_mean_n))
        .fold(0.0, f64::max)
}

/// Largest `|Ψ_θ(x) - Φ(x)|` for `x ≤ φ'(θ)`; `None` unless `θ ≥ θ₀`.
pub fn psi_phi_agreement(m: &BrwModel, k: &ModelConstants) -> Result<Option<f64>, CliError> {
    if !(k.theta0.is_finite() && k.theta >= k.theta0) {
        return Ok(None);
    }
    let d = &m.displacement;
    let kc = ModelConstants::classical(d, &m.offspring)?;
    let hi = d.cgf_prime(k.theta);
    Ok(Some(
        linspace(k.speed_c - 3.0, hi, 200)
            .map(|x| gap(psi(k, d, x).value, phi_with(&kc, d, x).value))
            .fold(0.0, f64::max),
    ))
}

/// Largest `|variational - Ψ_θ|` on 100 points of `[c - 4, c)`; `None` when
/// `ρ = ∞`.
pub fn variational_gap(k: &ModelConstants, d: &DisplacementModel) -> Result<Option<f64>, CliError> {
    if !k.rho.is_finite() {
        return Ok(None);
    }
    let c = k.speed_c;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let x = c - 4.0 + 4.0 * i as f64 / 100.0;
        let v = variational_lower_rate(k, d, x, 200)?;
        worst = worst.max(gap(v, psi(k, d, x).value));
    }
    Ok(Some(worst))
}

/// KS p-value between `lpm_sample` and `coupling_sample` draws.
pub fn coupling_ks<E: Executor>(
    m: &BrwModel,
    theta: f64,
    n: u32,
    reps: u64,
    seed: u64,
    exec: &E,
) -> Result<f64, CliError> {
    let a = lpm_draws(m, theta, n, reps, seed, exec)?;
    let b = coupling_draws(m, theta, n, reps, seed ^ 0x9E37_79B9_7F4A_7C15, exec)?;
    Ok(ks_two_sample(&a, &b).p_value)
}

/// Number of thread counts in `threads` whose output differs from the first.
pub fn determinism(m: &BrwModel, theta: f64, n: u32, reps: u64, seed: u64, threads: &[usize]) -> Result<f64, CliError> {
    let base_rows = simulate_replicates(m, theta, n, reps, seed, &Threads(threads[0]))?;
    let ts = [0.5 * n as f64, 1.0 * n as f64, 1.5 * n as f64];
    let base_cdf = smoothed_cdf(m, theta, n, &ts, reps, seed, Estimator::Smoothed, &Threads(threads[0]))?;
    let mut differing = 0;
    for &t in &threads[1..] {
        let rows = simulate_replicates(m, theta, n, reps, seed, &Threads(t))?;
        let cdf = smoothed_cdf(m, theta, n, &ts, reps, seed, Estimator::Smoothed, &Threads(t))?;
        if rows != base_rows || cdf != base_cdf {
            differing += 1;
        }
    }
    Ok(differing as f64)
}

/// Largest difference between the DP oracle and full enumeration for
/// `n ≤ n_max`, over `R_n` and `R_n*` CDFs.
pub fn oracle_vs_bruteforce(spec: &LatticeSpec, n_max: u32) -> Result<f64, CliError> {
    let mut worst: f64 = 0.0;
    let step = spec.step();
    for n in 0..=n_max {
        let d = match brute_force_frontier(spec, n) {
            Ok(d) => d,
            Err(OracleError::CombinatorialBlowup) if n > 1 => break,
            Err(e) => return Err(e.into()),
        };
        let l = spec.model().displacement.as_lattice().expect("lattice spec");
        let lo = l.min_offset() * n as i64 - 1;
        let hi = l.max_offset() * n as i64 + 1;
        for k in lo..=hi {
            let s = k as f64 * step;
            worst = worst.max((exact_rn_cdf(spec, n, s)?.lower - d.rn_cdf(s)).abs());
        }
        for t in linspace(lo as f64 * step, hi as f64 * step, 13) {
            let want = d.rn_star_cdf(spec.theta(), &spec.model().perturbation, t);
            let e = exact_rn_star_cdf(spec, n, t);
            worst = worst
                .max((e.lower - want).abs())
                .max((e.log_lower.exp() - want).abs())
                .max((e.upper() - (1.0 - want)).abs());
        }
    }
    Ok(worst)
}

/// Largest `|p̂ - p|/se` of the smoothed estimator against the exact
/// `P(R_n* ≤ t)` over `n ∈ {1, 3, 5, 8, 10}` and five thresholds per `n`.
pub fn oracle_vs_simulation<E: Executor>(spec: &LatticeSpec, c: f64, reps: u64, seed: u64, exec: &E) -> Result<f64, CliError> {
    let mut worst: f64 = 0.0;
    for n in [1u32, 3, 5, 8, 10] {
        let nf = n as f64;
        let ts: Vec<f64> = [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|z| nf * c + z * nf.sqrt()).collect();
        let est = smoothed_cdf(spec.model(), spec.theta(), n, &ts, reps, seed.wrapping_add(n as u64), Estimator::Smoothed, exec)?;
        for (t, e) in ts.iter().zip(&est) {
            let p = exact_rn_star_cdf(spec, n, *t).lower;
            let se = e.lower.std_error.max(1e-12);
            worst = worst.max((e.lower.p_hat - p).abs() / se);
        }
    }
    Ok(worst)
}

pub fn run_checks(m: &RunModel, theta: f64, reps: u64, seed: u64, exec: &Threads) -> Result<Report, CliError> {
    let model = &m.model;
    let d = &model.displacement;
    let k = ModelConstants::compute(d, &model.offspring, theta)?;
    let mut checks = vec![
        Check::at_most("cgf_finite_difference", cgf_finite_difference(d), 1e-6),
        Check::at_most("legendre_duality", legendre_duality(d), 1e-4),
        Check::at_most("psi_continuity", psi_continuity(&k, d), 1e-8),
        Check::at_most("psi_upper_identity", psi_upper_identity(&k, d), 1e-12),
    ];
    if let Some(g) = psi_phi_agreement(model, &k)? {
        checks.push(Check::at_most("psi_phi_agreement", g, 1e-10));
    }
    if let Some(g) = variational_gap(&k, d)? {
        checks.push(Check::at_most("variational_matches_closed_form", g, 1e-5));
    }
    let n = 4.min(max_affordable_n(model));
    checks.push(Check::above("coupling_ks", coupling_ks(model, theta, n, reps, seed, exec)?, 1e-3));
    checks.push(Check::at_most(
        "determinism",
        determinism(model, theta, n, reps.min(2048), seed, &[1, 4, 16])?,
        0.0,
    ));
    if m.is_lattice() {
        let spec = LatticeSpec::new(model.clone(), theta)?;
        checks.push(Check::at_most("oracle_vs_bruteforce", oracle_vs_bruteforce(&spec, 3)?, 1e-12));
        if max_affordable_n(model) >= 10 {
            checks.push(Check::at_most(
                "oracle_vs_simulation",
                oracle_vs_simulation(&spec, k.speed_c, reps, seed, exec)?,
                4.0,
            ));
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(Report {
        config: m.path.display().to_string(),
        theta,
        seed,
        replicates: reps,
        checks,
        pass,
    })
}

/// Largest generation whose expected population stays below 10⁵.
fn max_affordable_n(m: &BrwModel) -> u32 {
    let lm = m.offspring.log_mean();
    ((1e5f64).ln() / lm).floor().clamp(1.0, 64.0) as u32
}
