use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rateex_core::dm::*;
use rateex_core::qbt::GaussianSimModel;
use rateex_core::vg::optimize_scalar_exponent;
use rateex_core::*;

fn simplex(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(floor..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn random_instance(seed: u64) -> DiscreteHTInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rng.random_range(2..=3);
    let y0 = rng.random_range(1..=2);
    let k = rng.random_range(1..=2);
    let p_xy0 = simplex(&mut rng, x * y0, 0.05);
    let conds: Vec<(usize, Vec<f64>)> = (0..k)
        .map(|_| {
            let n = rng.random_range(2..=3);
            (n, (0..x * y0).flat_map(|_| simplex(&mut rng, n, 0.05)).collect())
        })
        .collect();
    DiscreteHTInstance::from_factors(x, y0, &p_xy0, &conds).unwrap()
}

fn random_channels(inst: &DiscreteHTInstance, rng: &mut ChaCha8Rng, u: usize) -> TestChannelFamily {
    TestChannelFamily::without_time_sharing(
        inst.pmfs().sensors.iter().map(|&n| (0..n).map(|_| simplex(rng, u, 0.0)).collect()).collect(),
    )
}

/// Single-sensor real Gaussian exponent ½ ln(σ_Y² / (σ_X² e^{−2R} + σ²)).
fn real_gaussian_exponent(sx: f64, s: f64, r: f64) -> f64 {
    0.5 * ((sx + s) / (sx * (-2.0 * r).exp() + s)).ln()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn information_chain_rule(seed in any::<u64>(), dims in prop::collection::vec(1usize..4, 4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size: usize = dims.iter().product();
        let axes: Vec<(Var, usize)> = dims.iter().enumerate().map(|(i, &d)| (Var::Other(i as u32), d)).collect();
        let t = JointPmfTensor::new(axes, simplex(&mut rng, size, 0.0)).unwrap();
        let [a, b, c, d] = [0, 1, 2, 3].map(Var::Other);
        let whole = t.conditional_mutual_information(&[a], &[b, c], &[d]).unwrap();
        let first = t.conditional_mutual_information(&[a], &[b], &[d]).unwrap();
        let second = t.conditional_mutual_information(&[a], &[c], &[b, d]).unwrap();
        prop_assert!(whole >= -1e-12 && first >= -1e-12 && second >= -1e-12);
        prop_assert!((whole - first - second).abs() < 1e-12);
    }

    #[test]
    fn composed_instances_validate_and_perturbed_do_not(seed in any::<u64>(), which in any::<prop::sample::Index>(), on_q in any::<bool>()) {
        let inst = random_instance(seed);
        let mut pm = inst.pmfs().clone();
        prop_assert!(DiscreteHTInstance::validate(pm.clone()).is_ok());
        let target = if on_q { &mut pm.q } else { &mut pm.p };
        let i = which.index(target.len());
        target[i] += 1e-6;
        let s: f64 = target.iter().sum();
        target.iter_mut().for_each(|v| *v /= s);
        prop_assert!(DiscreteHTInstance::validate(pm).is_err());
    }

    #[test]
    fn discrete_exponent_below_real_gaussian_after_quantization(seed in any::<u64>(), r in 0.05f64..2.0, u in 2usize..5) {
        // Quantizing X and Y cannot help: U − Y_q − Y − X − X_q keeps both constraints valid for the
        // continuous problem, so the discrete exponent is at most the Gaussian one.
        let inst = GaussianSimModel::equiprobable(1.0, &[1.0], 32, 32).unwrap().discretize().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = random_channels(&inst, &mut rng, u);
        let rep = evaluate_theorem1_bound(&inst, &ch, &[r]).unwrap();
        prop_assert!(rep.exponent <= real_gaussian_exponent(1.0, 1.0, r) + 1e-12);
    }
}

#[test]
fn real_exponent_is_half_the_complex_one_at_double_rate() {
    for i in 1..=20 {
        let r = 0.1 * i as f64;
        let (e, _) = optimize_scalar_exponent(1.0, &[1.0], &[2.0 * r]).unwrap();
        assert!((0.5 * e - real_gaussian_exponent(1.0, 1.0, r)).abs() < 1e-9);
    }
}

#[test]
fn quantized_gaussian_grid_search_within_slack() {
    // 32-level X with 4-level Y keeps the grid small; threshold channels are grid points.
    let inst = GaussianSimModel::equiprobable(1.0, &[1.0], 32, 4).unwrap().discretize().unwrap();
    for r in [0.1, 0.3, 0.6] {
        let g = grid_search_dm_exponent(&inst, &[r], &GridSearchOptions::new(10).with_u_sizes(vec![2])).unwrap();
        let cont = real_gaussian_exponent(1.0, 1.0, r);
        assert!(g.exponent <= cont + 1e-12, "R = {r}: {} vs {cont}", g.exponent);
        assert!(g.exponent >= cont - 0.05, "R = {r}: {} far below {cont}", g.exponent);
    }
}

#[test]
fn grid_search_monotone_under_refinement_and_alphabet_growth() {
    for seed in 0..6 {
        let inst = random_instance(seed);
        if inst.num_sensors() > 1 && inst.pmfs().sensors.iter().any(|&n| n > 2) {
            continue;
        }
        let k = inst.num_sensors();
        let rates = vec![0.15; k];
        let run = |m: usize, u: usize| {
            grid_search_dm_exponent(&inst, &rates, &GridSearchOptions::new(m).with_u_sizes(vec![u; k])).unwrap().exponent
        };
        let (coarse, fine) = (run(3, 2), run(6, 2));
        assert!(fine >= coarse - 1e-12, "seed {seed}: {coarse} -> {fine}");
        let wider = run(3, 3);
        assert!(wider >= coarse - 1e-12, "seed {seed}: {coarse} -> {wider}");
    }
}

#[test]
fn side_term_binds_at_large_rate() {
    for seed in 0..10 {
        let inst = random_instance(seed);
        let k = inst.num_sensors();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let ch = random_channels(&inst, &mut rng, 3);
        let rep = evaluate_theorem1_bound(&inst, &ch, &vec![50.0; k]).unwrap();
        assert_eq!(rep.binding, vec![SubsetMask::empty(k)]);
    }
}
