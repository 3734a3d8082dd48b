use rateex_core::ep::*;

// Oracles from an independent trapezoid computation on [1e-6, 20] with 2e6 panels.
const WALD_ENTROPY: f64 = 0.196_068_168_463_708_6;
const WALD_ENTROPY_POWER: f64 = 0.086_661_918_083_337_26;
// κ = N(X)·J(X) by de Bruijn's identity, J from the closed-form score.
const WALD_KAPPA: f64 = 1.356_692_327_594_644;
// N(X + √v G) from direct trapezoid convolution (step 2e-3).
const WALD_SMOOTHED: [(f64, f64); 4] = [
    (1.0, 1.099_870_976_634_192),
    (0.5, 0.599_563_562_940_176_2),
    (0.1, 0.196_486_475_399_727_3),
    (0.02, 0.111_064_701_638_256_3),
];

fn wald() -> DensitySpec {
    DensitySpec::wald(1.0, 10.0)
}

#[test]
fn wald_entropy_matches_trapezoid_oracle() {
    let h = differential_entropy(&wald()).unwrap();
    assert!((h - WALD_ENTROPY).abs() < 1e-6, "h = {h}");
}

#[test]
fn wald_entropy_power_and_kappa() {
    let (n, k) = entropy_power_and_kappa(&wald()).unwrap();
    println!("N = {n:.12}, kappa = {k:.12}");
    assert!((n - WALD_ENTROPY_POWER).abs() < 1e-7);
    // Two-step Richardson leaves a t0·t1·N'''/6-type residual, about 1.2e-4 here.
    assert!((k - WALD_KAPPA).abs() < 2e-4, "kappa = {k}");
    assert!(k < WALD_KAPPA);
}

#[test]
fn wald_smoothed_entropy_powers() {
    let vs: Vec<f64> = WALD_SMOOTHED.iter().map(|p| p.0).collect();
    let ns = smoothed_entropy_powers(&wald(), &vs).unwrap();
    for ((v, want), got) in WALD_SMOOTHED.iter().zip(&ns) {
        println!("v = {v}: {got:.12} vs {want:.12}");
        assert!((got - want).abs() < 1e-6);
    }
}


#[test]
fn wald_rate_redundancy_matches_oracle() {
    // Same oracle pipeline with N(X + √0.2 G) = 0.2983281960730153.
    let r = rate_redundancy_bound(&wald(), 1.0, 5, 0.1).unwrap();
    assert!((r - 0.887_951_000_088_816_9).abs() < 1e-6, "r = {r}");
}

#[test]
fn entropy_power_below_variance() {
    for d in [wald(), DensitySpec::wald(2.0, 3.0), DensitySpec::uniform(-1.0, 2.0)] {
        let p = source_powers(&d).unwrap();
        assert!(p.entropy_power < p.variance, "{d:?}");
    }
    let p = source_powers(&DensitySpec::gaussian(0.7)).unwrap();
    assert!((p.entropy_power - 0.7).abs() < 1e-9);
}

#[test]
fn entropy_power_inequality_under_gaussian_noise() {
    let vs = [0.01, 0.1, 0.5, 1.0, 4.0];
    for d in [wald(), DensitySpec::uniform(0.0, 1.0)] {
        let n = source_powers(&d).unwrap().entropy_power;
        for (v, ny) in vs.iter().zip(smoothed_entropy_powers(&d, &vs).unwrap()) {
            assert!(ny >= n + v - 1e-6, "{d:?} v = {v}");
        }
    }
}

#[test]
fn de_bruijn_bound_for_k_up_to_100() {
    let p = source_profile(&wald()).unwrap();
    let vs: Vec<f64> = (1..=100).map(|k| 1.0 / k as f64).collect();
    for (v, ny) in vs.iter().zip(smoothed_entropy_powers(&wald(), &vs).unwrap()) {
        assert!(ny <= p.entropy_power + v * p.kappa.unwrap() + 1e-6, "v = {v}");
    }
}

#[test]
fn p2p_bounds_coincide_for_gaussian_sources() {
    for (sx, sz) in [(1.0, 1.0), (0.1, 0.05), (2.0, 0.3)] {
        for r in [0.0, 0.05, 0.3, 1.0, 2.5, 8.0] {
            let b = p2p_bounds(&DensitySpec::gaussian(sx), sz, r).unwrap();
            assert!((b.lower - b.upper).abs() < 1e-12);
        }
    }
}

#[test]
fn p2p_ordering_at_low_rate() {
    for d in [wald(), DensitySpec::uniform(0.0, 1.0)] {
        for sz in [0.05, 0.3, 1.0] {
            let b = p2p_bounds(&d, sz, 0.3).unwrap();
            assert!(b.lower <= b.upper, "{d:?} sz = {sz}: {b:?}");
        }
    }
}

#[test]
fn p2p_power_bound_exceeds_mutual_information_at_high_rate() {
    // At R → ∞ the entropy-power expression is I(X;Y) = h(Y) − ½ln(2πeσ_Z²) exactly,
    // while the power expression tends to the Gaussian-input value ½ln(1 + σ_X²/σ_Z²),
    // which is larger for any non-Gaussian X of the same variance.
    let sz = 0.05;
    let b = p2p_bounds(&wald(), sz, f64::INFINITY).unwrap();
    let hy = smoothed_entropies(&wald(), &[sz]).unwrap()[0];
    let mi = hy - 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * sz).ln();
    assert!((b.upper - mi).abs() < 1e-9);
    assert!((b.lower - 0.5 * (1.0 + 0.1 / sz).ln()).abs() < 1e-15);
    assert!(b.lower > b.upper + 0.01, "{b:?}");
}

#[test]
fn wald_gap_is_nonnegative_and_limit_bound_holds() {
    let e_grid: Vec<f64> = (0..=40).map(|i| 0.025 * i as f64).collect();
    let curve = gap_curve(&wald(), 1.0, 50, &e_grid).unwrap();
    assert!(curve.rows.len() > 500);
    for r in &curve.rows {
        assert!(r.delta >= 0.0);
        assert!(r.limit_bound_with_e <= r.limit_bound_uniform + 1e-15);
    }
    let p = source_profile(&wald()).unwrap();
    let k = 10_000;
    let ny = smoothed_entropy_power(&wald(), 1.0 / k as f64).unwrap();
    for &e in &[0.0, 0.5, 1.0, 2.0] {
        let gap = sum_rate_bounds_from(&p, ny, 1.0, k, e).unwrap().gap;
        let lim = gap_limit_bound(&wald(), 1.0, e).unwrap();
        assert!(gap <= lim.with_exponent + 1e-3, "E = {e}: {gap} vs {lim:?}");
    }
}

#[test]
fn gaussian_gap_vanishes() {
    let e_grid: Vec<f64> = (0..=20).map(|i| 0.05 * i as f64).collect();
    let curve = gap_curve(&DensitySpec::gaussian(1.3), 0.8, 30, &e_grid).unwrap();
    for r in &curve.rows {
        assert!(r.delta.abs() <= 1e-9);
        assert!(r.limit_bound_uniform.abs() <= 1e-9);
    }
    for k in [1, 2, 7] {
        let b = sum_rate_bounds(&DensitySpec::gaussian(1.3), 0.8, k, 0.1).unwrap();
        assert!((b.lower - b.upper).abs() < 1e-12);
    }
}

#[test]
fn out_of_domain_exponent() {
    assert!(matches!(sum_rate_bounds(&wald(), 1.0, 1, 1.0), Err(rateex_core::Error::ExponentOutOfDomain { .. })));
    assert!(matches!(rate_redundancy_bound(&wald(), 1.0, 2, 5.0), Err(rateex_core::Error::ExponentOutOfDomain { .. })));
}

#[test]
fn jump_in_density_has_no_finite_kappa() {
    let r = source_profile(&DensitySpec::uniform(0.0, 1.0));
    assert!(matches!(r, Err(rateex_core::Error::QuadratureNotConverged(_))));
}
