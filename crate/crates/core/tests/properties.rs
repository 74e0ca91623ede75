//! Property tests of the public building blocks and reproducibility of the
//! convergence study.

use hydrolimit::fields::random::{random_scalar, RandomShape};
use hydrolimit::fields::{inverse, transform, Cheb, Fft2};
use hydrolimit::harness::report::write_csv;
use hydrolimit::harness::{run_convergence_study, SimConfig, SolverPaths, CSV_HEADER};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shape(kmax: usize) -> RandomShape {
    RandomShape {
        kmax,
        degree: 5,
        wall_zero: false,
        average_free: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fourier_round_trip(seed in any::<u64>(), nh in 1usize..7, nz in 3usize..12) {
        let cheb = Cheb::new(nz);
        let f = random_scalar(&mut ChaCha8Rng::seed_from_u64(seed), nh, &cheb, shape(nh));
        let back = transform(&inverse(&f), nh).unwrap();
        let err = f.data.iter().zip(&back.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn padded_grid_round_trip(seed in any::<u64>(), nh in 1usize..5, pad in 0usize..6) {
        let cheb = Cheb::new(5);
        let f = random_scalar(&mut ChaCha8Rng::seed_from_u64(seed), nh, &cheb, shape(nh));
        let fft = Fft2::new(2 * nh + 1 + pad);
        let back = fft.to_spectral(&fft.to_physical(&f).unwrap(), nh).unwrap();
        let err = f.data.iter().zip(&back.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn physical_values_are_real(seed in any::<u64>(), nh in 1usize..6) {
        let cheb = Cheb::new(4);
        let f = random_scalar(&mut ChaCha8Rng::seed_from_u64(seed), nh, &cheb, shape(nh));
        let p = inverse(&f);
        let im = p.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        prop_assert!(im < 1e-13, "{im}");
    }

    #[test]
    fn derivative_inverts_cumulative_integral(coef in prop::collection::vec(-1.0f64..1.0, 1..6), n in 8usize..24) {
        let cheb = Cheb::new(n);
        let vals: Vec<f64> = cheb.nodes.iter().map(|&z| coef.iter().rev().fold(0.0, |a, c| a * z + c)).collect();
        let v = nalgebra::DVector::from_vec(vals.clone());
        let back = &cheb.d1 * (&cheb.cumint * &v);
        let err = back.iter().zip(&vals).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "{err}");
        prop_assert!((&cheb.cumint * &v)[cheb.n - 1].abs() < 1e-14, "integral starts at z = -1");
    }

    #[test]
    fn config_toml_round_trip(n_h in 4usize..16, n_z in 8usize..40, k in 1usize..5, seed in 0..=i64::MAX as u64) {
        let epsilons: Vec<f64> = (0..k).map(|i| 0.5f64.powi(i as i32)).collect();
        let cfg = SimConfig { n_h, n_z, epsilons, seed, ..SimConfig::default() };
        let text = cfg.to_toml_string().unwrap();
        prop_assert_eq!(SimConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn unrepresentable_seed_is_a_config_error(seed in i64::MAX as u64 + 1..=u64::MAX) {
        let cfg = SimConfig { seed, ..SimConfig::default() };
        prop_assert!(matches!(cfg.validate(), Err(hydrolimit::Error::Config(_))));
    }
}

#[test]
fn study_csv_is_deterministic_except_wall_time() {
    let cfg = SimConfig {
        n_h: 3,
        n_z: 10,
        t_final: 1.0 / 16.0,
        dt: 1.0 / 128.0,
        epsilons: vec![0.2, 0.1, 0.05],
        paths: SolverPaths::Difference,
        ..SimConfig::default()
    };
    let csv = || {
        let mut buf = Vec::new();
        write_csv(&run_convergence_study(&cfg).unwrap(), &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    };
    let wall = CSV_HEADER.iter().position(|&h| h == "wall_ms").unwrap();
    let strip = |s: String| -> Vec<Vec<String>> {
        s.lines()
            .map(|l| l.split(',').enumerate().filter(|&(i, _)| i != wall).map(|(_, x)| x.to_string()).collect())
            .collect()
    };
    let (a, b) = (strip(csv()), strip(csv()));
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);
}
