use brwld_core::oracle::{brute_force_frontier, exact_rn_cdf, exact_rn_star_cdf, LatticeSpec};
use brwld_core::simulate::{simulate_replicates, smoothed_cdf, Estimator, Sequential};
use brwld_core::{BrwModel, DisplacementModel, OffspringModel, PerturbationMeasure};

fn one_or_three(mu: PerturbationMeasure) -> BrwModel {
    BrwModel::new(
        DisplacementModel::rademacher(),
        OffspringModel::new(&[(1, 0.5), (3, 0.5)]).unwrap(),
        mu,
    )
}

#[test]
fn smoothed_estimates_bracket_exact_cdf() {
    let model = one_or_three(PerturbationMeasure::unit());
    let theta = 1.0;
    let spec = LatticeSpec::new(model.clone(), theta).unwrap();
    let ts = [-1.0, 0.5, 2.0, 3.5, 5.0];
    for n in [2u32, 5] {
        for estimator in [Estimator::Smoothed, Estimator::Direct] {
            let est = smoothed_cdf(&model, theta, n, &ts, 20_000, 99, estimator, &Sequential).unwrap();
            for (t, e) in ts.iter().zip(&est) {
                let exact = exact_rn_star_cdf(&spec, n, *t);
                let lo = e.lower;
                assert!(
                    (lo.p_hat - exact.lower).abs() <= 4.0 * lo.std_error.max(1e-4),
                    "n={n} t={t} {estimator:?}: {} vs {}",
                    lo.p_hat,
                    exact.lower
                );
                assert!((e.upper.p_hat - exact.upper()).abs() <= 4.0 * e.upper.std_error.max(1e-4));
            }
        }
    }
}

#[test]
fn upper_tail_of_large_theta_model() {
    // θ = 3 is past θ₀ for this model; the tail at t = 10·1.6 is far out
    let model = BrwModel::new(
        DisplacementModel::lattice(0.5, &[-2, 1, 3], &[0.25, 0.5, 0.25]).unwrap(),
        OffspringModel::deterministic(2).unwrap(),
        PerturbationMeasure::unit(),
    );
    let theta = 3.0;
    let spec = LatticeSpec::new(model.clone(), theta).unwrap();
    let n = 10;
    let t = 10.0 * 1.6;
    let exact = exact_rn_star_cdf(&spec, n, t).upper();
    let est = smoothed_cdf(&model, theta, n, &[t], 20_000, 5, Estimator::Smoothed, &Sequential).unwrap();
    let u = est[0].upper;
    assert!(exact > 0.0 && exact < 0.5);
    assert!((u.p_hat - exact).abs() <= 3.0 * u.std_error, "{} vs {exact} ± {}", u.p_hat, u.std_error);
}

#[test]
fn rightmost_particle_law_matches_dp() {
    let model = one_or_three(PerturbationMeasure::unit());
    let spec = LatticeSpec::new(model.clone(), 1.0).unwrap();
    let n = 3;
    let reps = 200_000u64;
    let rows = simulate_replicates(&model, 1.0, n, reps, 17, &Sequential).unwrap();
    for s in [-1.0, 1.0, 3.0] {
        let p = exact_rn_cdf(&spec, n, s).unwrap().lower;
        let hits = rows.iter().filter(|r| r.r_n <= s + 1e-9).count() as f64 / reps as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((hits - p).abs() <= 4.0 * se, "s={s}: {hits} vs {p}");
    }
}

#[test]
fn linear_stat_mean_matches_enumeration() {
    let mu = PerturbationMeasure::discrete(&[(0.5, 0.5), (1.5, 0.5)]).unwrap();
    let model = one_or_three(mu.clone());
    let theta = 0.7;
    let spec = LatticeSpec::new(model.clone(), theta).unwrap();
    for n in 1..=3u32 {
        let d = brute_force_frontier(&spec, n).unwrap();
        // E[A_n] = (E[N] e^{φ(θ)})^n E[Y]
        let closed = (2.0 * model.displacement.cgf(theta).exp()).powi(n as i32) * mu.mean();
        assert!((d.mean_linear_stat(theta, &mu) - closed).abs() < 1e-12 * closed);
    }
}
