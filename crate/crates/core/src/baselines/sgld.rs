//! Parallel stochastic gradient Langevin dynamics,
//! `x <- x + (eta / 2) S(x) + sqrt(eta) xi`, with independent particles.

use serde::{Deserialize, Serialize};

use crate::rng::{self, Rng};
use crate::targets::{minibatch, TargetPosterior};
use crate::{Error, Result};

/// Particles whose norm exceeds this are flagged and frozen.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgldConfig {
    pub particles: usize,
    pub step_size: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian initial positions.
    pub init_scale: f64,
    /// Minibatch size for subsampled scores; `None` uses the full data.
    pub data_batch: Option<usize>,
}

impl Default for SgldConfig {
    fn default() -> Self {
        SgldConfig {
            particles: 1000,
            step_size: 1e-4,
            iterations: 400_000,
            seed: 0,
            init_scale: 1.0,
            data_batch: None,
        }
    }
}

impl SgldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::config("sgld.particles", "must be positive"));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::config("sgld.step_size", "must be positive"));
        }
        if self.iterations == 0 {
            return Err(Error::config("sgld.iterations", "must be positive"));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::config("sgld.init_scale", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgldOutput {
    /// Final positions, row-major `(particles, dim)`.
    pub particles: Vec<f64>,
    pub diverged: Vec<bool>,
    pub dim: usize,
}

impl SgldOutput {
    pub fn num_diverged(&self) -> usize {
        self.diverged.iter().filter(|d| **d).count()
    }

    /// Rows of the particles that stayed finite.
    pub fn healthy(&self) -> Vec<f64> {
        self.particles
            .chunks_exact(self.dim)
            .zip(&self.diverged)
            .filter(|(_, d)| !**d)
            .flat_map(|(r, _)| r.to_vec())
            .collect()
    }
}

/// Runs SGLD with particle `i` driven by stream `STREAM_PARTICLE_BASE + i`.
pub fn sgld_run(target: &dyn TargetPosterior, config: &SgldConfig) -> Result<SgldOutput> {
    let ids: Vec<u64> = (0..config.particles as u64).map(|i| rng::STREAM_PARTICLE_BASE + i).collect();
    sgld_run_streams(target, config, &ids)
}

/// Runs SGLD with one particle per entry of `stream_ids`; each particle's
/// initial position and noise come only from its own stream.
pub fn sgld_run_streams(target: &dyn TargetPosterior, config: &SgldConfig, stream_ids: &[u64]) -> Result<SgldOutput> {
    config.validate()?;
    let d = target.dim();
    let n = stream_ids.len();
    let mut streams: Vec<Rng> = stream_ids.iter().map(|&id| rng::stream(config.seed, id)).collect();
    let mut x = Vec::with_capacity(n * d);
    for s in streams.iter_mut() {
        x.extend(rng::normal_vec(s, d).into_iter().map(|v| v * config.init_scale));
    }
    let mut diverged = vec![false; n];
    let mut data_rng = rng::stream(config.seed, rng::STREAM_DATA);
    let mut score = vec![0.0; n * d];
    let mut noise = vec![0.0; d];
    let half = 0.5 * config.step_size;
    let root = config.step_size.sqrt();
    for _ in 0..config.iterations {
        match config.data_batch.and_then(|b| minibatch(target, b, &mut data_rng)) {
            Some(view) => view.score_batch(&x, &mut score),
            None => target.score_batch(&x, &mut score),
        }
        for (i, s) in streams.iter_mut().enumerate() {
            if diverged[i] {
                continue;
            }
            rng::fill_normal(s, &mut noise);
            let row = &mut x[i * d..(i + 1) * d];
            let g = &score[i * d..(i + 1) * d];
            let mut norm2 = 0.0;
            for j in 0..d {
                row[j] += half * g[j] + root * noise[j];
                norm2 += row[j] * row[j];
            }
            if !(norm2.sqrt() <= DIVERGENCE_NORM) {
                diverged[i] = true;
                log::warn!("SGLD particle {i} diverged");
            }
        }
    }
    Ok(SgldOutput {
        particles: x,
        diverged,
        dim: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::gaussian_target;

    struct Flat;

    impl TargetPosterior for Flat {
        fn name(&self) -> &str {
            "flat"
        }
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn score(&self, _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn hessian_vec(&self, _: &[f64], _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    #[test]
    fn zero_score_is_brownian() {
        let cfg = SgldConfig {
            particles: 4000,
            step_size: 1e-2,
            iterations: 100,
            init_scale: 0.0,
            ..Default::default()
        };
        let out = sgld_run(&Flat, &cfg).unwrap();
        let n = out.particles.len() as f64;
        let var = out.particles.iter().map(|v| v * v).sum::<f64>() / n;
        // eta * iterations = 1, relative se sqrt(2 / n)
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt(), "{var}");
    }

    #[test]
    fn streams_permute_with_ids() {
        let target = gaussian_target(vec![0.5], vec![2.0]);
        let cfg = SgldConfig {
            particles: 5,
            step_size: 1e-2,
            iterations: 50,
            seed: 3,
            ..Default::default()
        };
        let ids: Vec<u64> = (0..5).map(|i| rng::STREAM_PARTICLE_BASE + i).collect();
        let mut rev = ids.clone();
        rev.reverse();
        let a = sgld_run_streams(&target, &cfg, &ids).unwrap();
        let b = sgld_run_streams(&target, &cfg, &rev).unwrap();
        for i in 0..5 {
            assert_eq!(a.particles[i], b.particles[4 - i]);
        }
        assert_eq!(sgld_run(&target, &cfg).unwrap(), a);
    }

    #[test]
    fn divergence_is_flagged() {
        let target = gaussian_target(vec![0.0], vec![1e-4]);
        let cfg = SgldConfig {
            particles: 3,
            step_size: 1.0,
            iterations: 200,
            ..Default::default()
        };
        let out = sgld_run(&target, &cfg).unwrap();
        assert_eq!(out.num_diverged(), 3);
        assert!(out.healthy().is_empty());
    }
}
