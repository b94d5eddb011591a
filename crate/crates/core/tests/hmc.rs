mod common;

use common::{column, mean_se, Conjugate};
use nalgebra::DMatrix;
use sivism::baselines::{hmc_reverse_conditional, HmcConfig};
use sivism::rng::{normal_vec, stream};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn conjugate() -> Conjugate {
    let a = DMatrix::from_row_slice(2, 2, &[1.2, -0.4, 0.3, 0.8]);
    Conjugate::new(a, &[0.5, -0.2], &[0.6, 0.9])
}

fn exact_kernel() -> HmcConfig {
    HmcConfig {
        step_size: 0.35,
        adapt_rate: 0.0,
        ..Default::default()
    }
}

/// One chain per draw: `z0` exact, then `x` fixed across chains.
fn pooled_fixed_x(c: &Conjugate, x: &[f64], n: usize, config: &HmcConfig, seed: u64) -> Vec<f64> {
    let fam = c.family();
    let mut rng = stream(seed, 0);
    let mut out = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let z0 = c.draw(x, &normal_vec(&mut rng, 2));
        let mut eps = config.step_size;
        out.extend(hmc_reverse_conditional(&fam, x, &z0, config, &mut eps, &mut rng).unwrap().z);
    }
    out
}

#[test]
fn conjugate_moments_within_three_standard_errors() {
    let c = conjugate();
    let x = [1.0, -0.5];
    let n = 10_000;
    let z = pooled_fixed_x(&c, &x, n, &exact_kernel(), 11);
    let m = c.mean(&x);
    for j in 0..2 {
        let col = column(&z, 2, j);
        let (mj, se) = mean_se(&col);
        assert!((mj - m[j]).abs() < 3.0 * se, "mean {j}: {mj} vs {}", m[j]);
        // variance of a normal sample variance is 2 s^4 / (n - 1)
        let v = col.iter().map(|v| (v - mj).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se_v = c.cov[(j, j)] * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((v - c.cov[(j, j)]).abs() < 3.0 * se_v, "var {j}: {v} vs {}", c.cov[(j, j)]);
    }
    let prods: Vec<f64> = z.chunks_exact(2).map(|r| (r[0] - m[0]) * (r[1] - m[1])).collect();
    let (cov01, se) = mean_se(&prods);
    assert!((cov01 - c.cov[(0, 1)]).abs() < 3.0 * se, "cov {cov01} vs {}", c.cov[(0, 1)]);
}

#[test]
fn invariance_chi_square_not_rejected() {
    // |L^T (z - m)|^2 is chi-square(2) under the exact conditional; bin it
    // into equiprobable cells and run Pearson's test at alpha = 0.01
    let c = conjugate();
    let x = [-0.3, 1.4];
    let n = 10_000;
    let z = pooled_fixed_x(&c, &x, n, &exact_kernel(), 12);
    let cells = 20;
    let chi2 = ChiSquared::new(2.0).unwrap();
    let mut counts = vec![0usize; cells];
    for r in z.chunks_exact(2) {
        let u = c.whiten(&x, r);
        let p = chi2.cdf(u[0] * u[0] + u[1] * u[1]);
        counts[((p * cells as f64) as usize).min(cells - 1)] += 1;
    }
    let e = n as f64 / cells as f64;
    let stat: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    let crit = ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(stat < crit, "Pearson {stat} >= {crit}");
}

#[test]
fn warm_started_chains_follow_the_joint() {
    // the sampling pattern of the UIVI inner loop: z ~ N(0, I), x ~ q(x|z),
    // chain from z; whitened outputs are standard normal across x
    let c = conjugate();
    let fam = c.family();
    let config = exact_kernel();
    let mut rng = stream(13, 0);
    let n = 10_000;
    let mut u = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let batch = fam.sample_batch(1, &mut rng).unwrap();
        let mut eps = config.step_size;
        let out = hmc_reverse_conditional(&fam, &batch.x, &batch.z, &config, &mut eps, &mut rng).unwrap();
        u.extend(c.whiten(&batch.x, &out.z));
    }
    for j in 0..2 {
        let col = column(&u, 2, j);
        let (m, se) = mean_se(&col);
        assert!(m.abs() < 3.0 * se, "whitened mean {j} = {m}");
        let sq: Vec<f64> = col.iter().map(|v| v * v).collect();
        let (v, se) = mean_se(&sq);
        assert!((v - 1.0).abs() < 3.0 * se, "whitened second moment {j} = {v}");
    }
}

#[test]
fn adaptation_moves_acceptance_toward_target() {
    let c = conjugate();
    let fam = c.family();
    let config = HmcConfig {
        iterations: 200,
        burn_in: 150,
        step_size: 3.0,
        ..Default::default()
    };
    let x = [0.2, 0.1];
    let mut rng = stream(14, 0);
    let mut eps = config.step_size;
    let out = hmc_reverse_conditional(&fam, &x, &[0.0, 0.0], &config, &mut eps, &mut rng).unwrap();
    assert!(eps < 3.0);
    assert_eq!(out.step_size, eps);
    assert_eq!(out.proposals, 200);
    assert!(out.accepted > 0);
}
