//! Simulation library for a nonlinear, norm-preserving stochastic extension of
//! Schrödinger dynamics in which wave-function collapse is driven by
//! interactions.
//!
//! A state `ψ` evolves under
//!
//! ```text
//! dψ = (-i/ħ) H ψ dt + Σ O_i ψ √γ_i dξ(t) - ½ (Σ O_i √γ_i)² ψ dξ*dξ
//! ```
//!
//! where each `O_i = k_i (A_i - ⟨ψ|A_i|ψ⟩)` is the deviation of a self-adjoint
//! operator from its expectation, `γ_i` is a rate (fixed, or computed per step
//! from the interaction), and `dξ` is a single global white-noise increment
//! shared by every term. For a two-level system the squared amplitude of a
//! branch performs an unbiased random walk, so branch outcome frequencies
//! reproduce the squared initial amplitudes.
//!
//! Module map:
//!
//! - [`state`]: complex states, Hermitian operators, expectations, partial traces.
//! - [`noise`]: reproducible Itô increments of the global noise process.
//! - [`integrator`]: Euler–Maruyama stepping and trajectory records.
//! - [`two_level`]: arc parameterization, random-walk oracle, Born-rule experiments.
//! - [`interaction`]: two-particle grid scenarios, interaction-rate model,
//!   conservation instrumentation.
//! - [`lorentz`]: relativistic energy transforms, frame-invariance checks,
//!   laboratory-scale estimates.
//! - [`ensemble`]: parallel trajectory ensembles and the statistical test battery.
//! - [`stats`]: chi-square and binomial helpers.

pub mod ensemble;
pub mod integrator;
pub mod interaction;
pub mod lorentz;
pub mod noise;
pub mod numeric;
pub mod state;
pub mod stats;
pub mod two_level;

pub use num_complex::Complex64;
