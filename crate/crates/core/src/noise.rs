//! Reproducible Itô increments dξ(t) of the single global white-noise process.
//!
//! One process is shared by every interacting pair within a trajectory; it is
//! a function of time only, not of position. Increments obey the Itô rules
//! `dξ* dξ = dt`, `dt dξ = 0`: real mode draws N(0, dt); complex mode draws
//! independent real and imaginary parts of variance dt/2 each, so that
//! `E[dξ dξ*] = dt` and `E[dξ²] = 0`.
//!
//! Generator: ChaCha12 keyed by the 64-bit seed, with the 64-bit stream id set
//! to the trajectory index, mapped through the ziggurat sampler of
//! `rand_distr::StandardNormal`. A path is a pure function of
//! (seed, trajectory_index, step index), so disjoint trajectory indices give
//! statistically independent streams and concurrent generation needs no
//! coordination. The algorithm is fixed for a given release; bit-exact
//! reproducibility is promised per release, not across releases or platforms
//! with differing math libraries.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable consulted for the default seed (decimal u64).
/// An explicit `--seed` flag takes precedence.
pub const SEED_ENV: &str = "COLLAPSE_SEED";

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("dt must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("a path needs at least one step")]
    EmptyPath,
    #[error("{SEED_ENV} is not a decimal 64-bit unsigned integer: {0:?}")]
    BadSeedEnv(String),
}

/// Configuration of one trajectory's view of the global noise process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub seed: u64,
    pub dt: f64,
    pub complex_noise: bool,
    pub trajectory_index: u64,
}

impl NoiseConfig {
    pub fn new(seed: u64, dt: f64) -> Self {
        Self {
            seed,
            dt,
            complex_noise: false,
            trajectory_index: 0,
        }
    }

    pub fn with_trajectory(mut self, index: u64) -> Self {
        self.trajectory_index = index;
        self
    }

    pub fn complex(mut self) -> Self {
        self.complex_noise = true;
        self
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.dt > 0.0) {
            return Err(NoiseError::NonPositiveDt(self.dt));
        }
        Ok(())
    }
}

/// A realized sequence of increments dξ with variance dt per step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    increments: Vec<Complex64>,
    dt: f64,
}

impl NoisePath {
    pub fn from_increments(increments: Vec<Complex64>, dt: f64) -> Self {
        Self { increments, dt }
    }

    pub fn increments(&self) -> &[Complex64] {
        &self.increments
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Σ dξ dξ*, the realized quadratic variation.
    pub fn quadratic_variation(&self) -> f64 {
        crate::numeric::kahan_sum(self.increments.iter().map(|z| z.norm_sqr()))
    }
}

/// Deterministic stream for trajectory-scoped randomness.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws the increments of one trajectory's noise path.
pub fn sample_path(cfg: &NoiseConfig, n_steps: usize) -> Result<NoisePath, NoiseError> {
    cfg.validate()?;
    if n_steps == 0 {
        return Err(NoiseError::EmptyPath);
    }
    let mut rng = stream_rng(cfg.seed, cfg.trajectory_index);
    let increments = if cfg.complex_noise {
        let sigma = (0.5 * cfg.dt).sqrt();
        (0..n_steps)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(sigma * re, sigma * im)
            })
            .collect()
    } else {
        let sigma = cfg.dt.sqrt();
        (0..n_steps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(sigma * z, 0.0)
            })
            .collect()
    };
    Ok(NoisePath {
        increments,
        dt: cfg.dt,
    })
}

/// Reads the seed override from [`SEED_ENV`], if present.
pub fn seed_from_env() -> Result<Option<u64>, NoiseError> {
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| NoiseError::BadSeedEnv(text)),
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn same_seed_and_index_is_bit_identical() {
        let cfg = NoiseConfig::new(42, 1e-3).with_trajectory(17);
        let a = sample_path(&cfg, 1000).unwrap();
        let b = sample_path(&cfg, 1000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_dt_rejected() {
        let cfg = NoiseConfig::new(1, 0.0);
        assert_eq!(
            sample_path(&cfg, 10).unwrap_err(),
            NoiseError::NonPositiveDt(0.0)
        );
    }

    #[test]
    fn zero_steps_rejected() {
        let cfg = NoiseConfig::new(1, 1e-3);
        assert_eq!(sample_path(&cfg, 0).unwrap_err(), NoiseError::EmptyPath);
    }

    #[test]
    fn quadratic_variation_follows_ito_rule() {
        // (Σ dξ dξ*) / (n dt) should be 1 within Monte Carlo error, in both
        // real and complex modes.
        for complex in [false, true] {
            let n_steps = 100_000;
            let dt = 1e-3;
            let stats: Vec<f64> = (0..100)
                .map(|traj| {
                    let mut cfg = NoiseConfig::new(7, dt).with_trajectory(traj);
                    cfg.complex_noise = complex;
                    let path = sample_path(&cfg, n_steps).unwrap();
                    path.quadratic_variation() / (n_steps as f64 * dt)
                })
                .collect();
            let (mean, se) = mean_and_stderr(&stats);
            assert!(
                (mean - 1.0).abs() <= 5.0 * se,
                "complex={complex}: mean {mean} off 1 by more than 5 x {se}"
            );
        }
    }

    #[test]
    fn dt_dxi_vanishes_relative_to_quadratic_variation() {
        // |Σ dt dξ| / Σ dξ dξ* ~ √(dt/n): decreasing in dt at fixed n.
        let n_steps = 100_000;
        let mut ratios = Vec::new();
        for &dt in &[1e-2, 1e-3, 1e-4] {
            let per_path: Vec<f64> = (0..100)
                .map(|traj| {
                    let cfg = NoiseConfig::new(11, dt).with_trajectory(traj);
                    let path = sample_path(&cfg, n_steps).unwrap();
                    let linear: f64 = path.increments().iter().map(|z| dt * z.re).sum();
                    linear.abs() / path.quadratic_variation()
                })
                .collect();
            ratios.push(per_path.iter().sum::<f64>() / per_path.len() as f64);
        }
        assert!(
            ratios[0] > ratios[1] && ratios[1] > ratios[2],
            "ratios not monotone: {ratios:?}"
        );
    }

    #[test]
    fn disjoint_trajectory_indices_are_uncorrelated() {
        let n_steps = 100_000;
        let dt = 1e-3;
        let corrs: Vec<f64> = (0..100)
            .map(|pair| {
                let a = sample_path(&NoiseConfig::new(3, dt).with_trajectory(2 * pair), n_steps)
                    .unwrap();
                let b = sample_path(
                    &NoiseConfig::new(3, dt).with_trajectory(2 * pair + 1),
                    n_steps,
                )
                .unwrap();
                let cross: f64 = a
                    .increments()
                    .iter()
                    .zip(b.increments())
                    .map(|(x, y)| x.re * y.re)
                    .sum();
                cross / (n_steps as f64 * dt)
            })
            .collect();
        let (mean, se) = mean_and_stderr(&corrs);
        assert!(mean.abs() <= 5.0 * se, "cross-correlation {mean} vs se {se}");
    }

    #[test]
    fn complex_mode_splits_variance() {
        let cfg = NoiseConfig::new(5, 2e-3).complex();
        let path = sample_path(&cfg, 200_000).unwrap();
        let n = path.len() as f64;
        let re_var: f64 = path.increments().iter().map(|z| z.re * z.re).sum::<f64>() / n;
        let im_var: f64 = path.increments().iter().map(|z| z.im * z.im).sum::<f64>() / n;
        // Each component carries dt/2; E[dξ²] = 0.
        assert!((re_var / 1e-3 - 1.0).abs() < 0.05);
        assert!((im_var / 1e-3 - 1.0).abs() < 0.05);
        let square: Complex64 = path.increments().iter().map(|z| z * z).sum();
        assert!(square.norm() / (n * 2e-3) < 0.05);
    }

    #[test]
    fn seed_env_parsing() {
        // Not using set_var: mutating the environment races with other tests.
        assert!(matches!(seed_from_env(), Ok(_) | Err(NoiseError::BadSeedEnv(_))));
    }
}
