mod common;

use common::mean_se;
use proptest::prelude::*;
use sivism::baselines::{sgld_run, sgld_run_streams, SgldConfig};
use sivism::rng::STREAM_PARTICLE_BASE;
use sivism::targets::{banana_target, gaussian_target};

#[test]
fn standard_normal_variance_within_five_percent() {
    let config = SgldConfig {
        particles: 10_000,
        step_size: 1e-3,
        iterations: 10_000,
        seed: 5,
        init_scale: 3.0,
        data_batch: None,
    };
    let out = sgld_run(&gaussian_target(vec![0.0], vec![1.0]), &config).unwrap();
    assert_eq!(out.num_diverged(), 0);
    let (m, se) = mean_se(&out.particles);
    assert!(m.abs() < 3.0 * se, "mean {m}");
    let sq: Vec<f64> = out.particles.iter().map(|v| (v - m) * (v - m)).collect();
    let var = sq.iter().sum::<f64>() / (sq.len() - 1) as f64;
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn correlated_gaussian_covariance() {
    let cov = vec![1.0, 0.6, 0.6, 2.0];
    let config = SgldConfig {
        particles: 4_000,
        step_size: 1e-2,
        iterations: 3_000,
        seed: 6,
        ..Default::default()
    };
    let out = sgld_run(&gaussian_target(vec![1.0, -1.0], cov.clone()), &config).unwrap();
    let p = &out.particles;
    let n = p.len() / 2;
    let m = [
        p.iter().step_by(2).sum::<f64>() / n as f64,
        p.iter().skip(1).step_by(2).sum::<f64>() / n as f64,
    ];
    assert!((m[0] - 1.0).abs() < 0.1 && (m[1] + 1.0).abs() < 0.1, "{m:?}");
    let c01 = p.chunks_exact(2).map(|r| (r[0] - m[0]) * (r[1] - m[1])).sum::<f64>() / (n - 1) as f64;
    // step 1e-2 biases the stationary covariance by O(eta)
    assert!((c01 - 0.6).abs() < 0.1, "cov {c01}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn permuting_streams_permutes_particles(perm in Just((0..6u64).collect::<Vec<_>>()).prop_shuffle(), seed in 0u64..1000) {
        let config = SgldConfig { particles: 6, step_size: 1e-2, iterations: 40, seed, ..Default::default() };
        let ids: Vec<u64> = (0..6).map(|i| STREAM_PARTICLE_BASE + i).collect();
        let shuffled: Vec<u64> = perm.iter().map(|&i| ids[i as usize]).collect();
        let t = banana_target();
        let a = sgld_run_streams(&t, &config, &ids).unwrap();
        let b = sgld_run_streams(&t, &config, &shuffled).unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            let src = src as usize;
            prop_assert_eq!(&b.particles[slot * 2..slot * 2 + 2], &a.particles[src * 2..src * 2 + 2]);
        }
    }

    #[test]
    fn particle_count_does_not_change_shared_prefix(extra in 1usize..5, seed in 0u64..1000) {
        let t = banana_target();
        let small = SgldConfig { particles: 3, step_size: 1e-2, iterations: 30, seed, ..Default::default() };
        let big = SgldConfig { particles: 3 + extra, ..small.clone() };
        let a = sgld_run(&t, &small).unwrap();
        let b = sgld_run(&t, &big).unwrap();
        prop_assert_eq!(&a.particles[..], &b.particles[..6]);
    }
}
