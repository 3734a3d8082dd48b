use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rateex_core::model::linalg::{inverse_spd, logdet_spd, principal};
use rateex_core::vg::*;
use rateex_core::*;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let a = random_matrix(rng, n, n, 1.0);
    &a * a.transpose() + Mat::identity(n, n) * rng.random_range(0.2..1.0)
}

fn sqrt_spd(m: &Mat) -> Mat {
    let e = SymmetricEigen::new(m.clone());
    &e.eigenvectors * Mat::from_diagonal(&e.eigenvalues.map(f64::sqrt)) * e.eigenvectors.transpose()
}

fn random_model(seed: u64) -> GaussianNetworkModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_x = rng.random_range(1..=3);
    let n_0 = rng.random_range(0..=2);
    let k = rng.random_range(1..=3);
    let sensors = (0..k)
        .map(|_| {
            let n_k = rng.random_range(1..=2);
            GaussianSensor {
                h: random_matrix(&mut rng, n_k, n_x, 1.0),
                sigma_k0: random_matrix(&mut rng, n_k, n_0, 0.4),
                sigma_k: random_spd(&mut rng, n_k),
            }
        })
        .collect();
    GaussianNetworkModel::from_blocks(
        Convention::Complex,
        random_spd(&mut rng, n_x),
        random_matrix(&mut rng, n_0, n_x, 1.0),
        random_spd(&mut rng, n_0),
        sensors,
    )
    .unwrap()
}

/// Ω_k = Σ_k^{-1/2} W Σ_k^{-1/2} with W having eigenvalues in `range`, so 0 ≺ Ω_k ≺ Σ_k⁻¹.
fn random_omegas(model: &GaussianNetworkModel, seed: u64, lo: f64, hi: f64) -> OmegaSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mats: Vec<Mat> = model
        .sensors()
        .iter()
        .map(|s| {
            let n = s.sigma_k.nrows();
            let q = random_matrix(&mut rng, n, n, 1.0).qr().q();
            let w = Mat::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.random_range(lo..hi)));
            let inv_sqrt = inverse_spd(&sqrt_spd(&s.sigma_k)).unwrap();
            let om = &inv_sqrt * (&q * w * q.transpose()) * &inv_sqrt;
            (&om + om.transpose()) * 0.5
        })
        .collect();
    OmegaSet::from_matrices(&mats)
}

/// Conditional covariance of X given (Y_0, U_{S^c}) built directly from the joint
/// covariance, with U_k = Y_k + V_k and V_k drawn from the test-channel covariance.
fn conditional_covariance(model: &GaussianNetworkModel, omegas: &OmegaSet, subset: SubsetMask) -> Mat {
    let noise = qbt_test_channel_covariance(model, omegas).unwrap();
    let mut observed = Vec::new();
    for k in subset.complement_members() {
        if matches!(noise[k], TestChannelNoise::Finite(_)) {
            observed.push(k);
        }
    }
    let idx = model.rows_for(&observed);
    let h = model.stacked_channel(&observed);
    let mut cov = &h * model.sigma_x() * h.transpose() + principal(model.noise_covariance(), &idx);
    let mut r = model.n_0();
    for &k in &observed {
        let TestChannelNoise::Finite(g) = &noise[k] else { unreachable!() };
        let n = g.nrows();
        let mut block = cov.view_mut((r, r), (n, n));
        block += g;
        r += n;
    }
    let sx = model.sigma_x();
    if idx.is_empty() {
        return sx.clone();
    }
    let cross = sx * h.transpose();
    sx - &cross * inverse_spd(&cov).unwrap() * cross.transpose()
}

fn scalar_inputs() -> impl Strategy<Value = (f64, Vec<f64>, Vec<f64>, Vec<f64>, u32)> {
    (1usize..=4).prop_flat_map(|k| {
        (
            0.1f64..5.0,
            prop::collection::vec(0.1f64..5.0, k),
            prop::collection::vec(0.0f64..1.0, k),
            prop::collection::vec(0.0f64..3.0, k),
            0u32..(1 << k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entropy_grows_with_psd_increment(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_spd(&mut rng, n);
        let a = random_matrix(&mut rng, n, n, 1.0);
        let bigger = &s + &a * a.transpose();
        for c in [Convention::Complex, Convention::Real] {
            prop_assert!(gaussian_entropy(&bigger, c).unwrap() >= gaussian_entropy(&s, c).unwrap() - 1e-12);
        }
    }

    #[test]
    fn sensor_noise_blocks_factor_through_side_noise(seed in any::<u64>()) {
        let m = random_model(seed);
        let s0_inv = inverse_spd(m.sigma_0()).unwrap_or_else(|| Mat::zeros(0, 0));
        for j in 0..m.num_sensors() {
            for k in 0..m.num_sensors() {
                if j == k { continue; }
                let (rj, rk) = (m.sensor_rows(j), m.sensor_rows(k));
                let block = m.noise_covariance().view((rj.start, rk.start), (rj.len(), rk.len())).clone_owned();
                let expect = &m.sensor(j).sigma_k0 * &s0_inv * m.sensor(k).sigma_k0.transpose();
                prop_assert!((block - expect).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn scalar_exponent_nondecreasing_in_rates(
        (sx, noise, _, rates, _) in scalar_inputs(),
        bump in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        let higher: Vec<f64> = rates.iter().zip(&bump).map(|(r, b)| r + b).collect();
        let (e0, _) = optimize_scalar_exponent(sx, &noise, &rates).unwrap();
        let (e1, _) = optimize_scalar_exponent(sx, &noise, &higher).unwrap();
        prop_assert!(e1 >= e0 - 1e-9, "{e0} -> {e1}");
    }

    #[test]
    fn scalar_exponent_below_centralized_cap((sx, noise, _, rates, _) in scalar_inputs()) {
        let (e, _) = optimize_scalar_exponent(sx, &noise, &rates).unwrap();
        prop_assert!(e <= scalar_centralized_exponent(sx, &noise) + 1e-9);
    }

    #[test]
    fn subset_bound_concave_in_gamma(
        (sx, noise, u, rates, bits) in scalar_inputs(),
        v in prop::collection::vec(0.0f64..1.0, 4),
        lambda in 0.0f64..1.0,
    ) {
        let k = noise.len();
        let s = SubsetMask::new(bits, k).unwrap();
        let box_point = |w: &[f64]| GammaVector(w.iter().zip(&noise).map(|(t, n)| 0.999 * t / n).collect());
        let (g, h) = (box_point(&u), box_point(&v[..k]));
        let mix = GammaVector(g.0.iter().zip(&h.0).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect());
        let f = |gv: &GammaVector| evaluate_scalar_bound(sx, &noise, gv, &rates, s).unwrap();
        prop_assert!(f(&mix) >= lambda * f(&g) + (1.0 - lambda) * f(&h) - 1e-12);
    }

    #[test]
    fn one_by_one_matrices_match_scalar_formula((sx, noise, u, rates, bits) in scalar_inputs()) {
        let k = noise.len();
        let model = GaussianNetworkModel::scalar_independent(Convention::Complex, sx, &noise).unwrap();
        let gammas: Vec<f64> = u.iter().zip(&noise).map(|(t, n)| t / n).collect();
        let s = SubsetMask::new(bits, k).unwrap();
        let vector = evaluate_vg_bound(&model, &OmegaSet::scalars(&gammas), &rates, s).unwrap();
        let scalar = evaluate_scalar_bound(sx, &noise, &GammaVector(gammas), &rates, s).unwrap();
        prop_assert!((vector - scalar).abs() <= 1e-12 * (1.0 + scalar.abs()), "{vector} vs {scalar}");
    }

    #[test]
    fn fisher_matrix_inverts_conditional_covariance(seed in any::<u64>(), bits in any::<u32>()) {
        let model = random_model(seed);
        let k = model.num_sensors();
        let s = SubsetMask::new(bits & ((1 << k) - 1), k).unwrap();
        let omegas = random_omegas(&model, seed, 0.05, 0.95);
        let j = fisher_closed_form(&model, &omegas, s).unwrap();
        let cond = conditional_covariance(&model, &omegas, s);
        let n = model.n_x() as f64;
        let pe = (std::f64::consts::PI * std::f64::consts::E).ln();
        // log|(πe)J⁻¹| against the Gaussian conditional entropy log|(πe)·mmse|.
        let from_fisher = n * pe - logdet_spd(&j).unwrap();
        let from_mmse = n * pe + logdet_spd(&cond).unwrap();
        prop_assert!((from_fisher - from_mmse).abs() < 1e-10, "{from_fisher} vs {from_mmse}");
        prop_assert!((&j * &cond - Mat::identity(model.n_x(), model.n_x())).amax() < 1e-9);
    }

    #[test]
    fn silent_test_channels_hide_unselected_sensors(seed in any::<u64>(), bits in any::<u32>(), scale in 0.1f64..3.0) {
        let model = random_model(seed);
        let k = model.num_sensors();
        let s = SubsetMask::new(bits & ((1 << k) - 1), k).unwrap();
        let rates = vec![0.4; k];
        let base = evaluate_vg_bound(&model, &OmegaSet::zeros(&model), &rates, s).unwrap();
        // Rescale every channel outside S; with Ω = 0 those sensors carry nothing.
        let sensors = model
            .sensors()
            .iter()
            .enumerate()
            .map(|(i, sk)| GaussianSensor { h: if s.contains(i) { sk.h.clone() } else { &sk.h * scale }, ..sk.clone() })
            .collect();
        let other = GaussianNetworkModel::from_blocks(
            Convention::Complex,
            model.sigma_x().clone(),
            model.h0().clone(),
            model.sigma_0().clone(),
            sensors,
        )
        .unwrap();
        let moved = evaluate_vg_bound(&other, &OmegaSet::zeros(&other), &rates, s).unwrap();
        prop_assert!((base - moved).abs() < 1e-10);
    }
}

#[test]
fn fisher_at_box_corner_uses_raw_observations() {
    let model = random_model(7);
    let k = model.num_sensors();
    let corner = OmegaSet::upper_corner(&model);
    for s in SubsetMask::all(k) {
        let j = fisher_closed_form(&model, &corner, s).unwrap();
        let cond = conditional_covariance(&model, &corner, s);
        assert!((&j * &cond - Mat::identity(model.n_x(), model.n_x())).amax() < 1e-9);
    }
}
