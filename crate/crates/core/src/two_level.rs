//! Two-level collapse analysis: tangent-vector decomposition of the
//! stochastic term, the arc coordinate, the random-walk absorption oracle,
//! and Monte Carlo Born-rule experiments.
//!
//! For ψ = α|x⟩ + β|y⟩ with real nonnegative amplitudes the deviation term
//! factorizes as `k α β (a-b) [β|x⟩ - α|y⟩]`: a coefficient times the unit
//! tangent of the arc α = cos θ, β = sin θ. The squared amplitude β² is then
//! an unbiased walk coordinate on [0, 1], absorbed at the endpoints where
//! α β → 0, so outcome |y⟩ occurs with probability β²(0). States with complex
//! amplitudes lose no generality here and can be driven through the generic
//! integrator directly.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::two_level_completion;
use crate::integrator::{
    integrate_trajectory, suggested_dt, CollapseTerm, IntegrateError, Schedule, TrajectoryProblem,
    DEFAULT_COMPLETION_THRESHOLD,
};
use crate::noise::{stream_rng, NoiseConfig};
use crate::state::{HermitianOperator, Operator, StateVector};

/// Step budget: this many collapse time constants 1/(γ k² (a-b)²), converted
/// to steps. Empirically ample for absorption at the default threshold.
pub const STEP_BUDGET_TIME_CONSTANTS: f64 = 50.0;

/// Unresolved-fraction above which a Born experiment is flagged as
/// under-budgeted.
pub const UNRESOLVED_FLAG_FRACTION: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum TwoLevelError {
    #[error("amplitudes must satisfy alpha² + beta² = 1 within 1e-12, got {0}")]
    NotNormalized(f64),
    #[error("amplitudes must be nonnegative")]
    NegativeAmplitude,
    #[error("rate gamma must be >= 0 and finite")]
    BadGamma,
    #[error("walk start {0} outside [0, 1]")]
    BadWalkStart(f64),
    #[error("fixed step size {0} invalid: needs 0 < delta <= min(p, 1-p)")]
    BadStepSize(f64),
    #[error("born experiment needs gamma > 0 and a != b")]
    DegenerateCollapse,
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Two-level collapse scenario: real nonnegative amplitudes (α, β), collapse
/// eigenvalues a and b, strength k, fixed rate γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelSpec {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub gamma: f64,
}

impl TwoLevelSpec {
    pub fn new(
        alpha: f64,
        beta: f64,
        a: f64,
        b: f64,
        k: f64,
        gamma: f64,
    ) -> Result<Self, TwoLevelError> {
        if alpha < 0.0 || beta < 0.0 {
            return Err(TwoLevelError::NegativeAmplitude);
        }
        let norm = alpha * alpha + beta * beta;
        if (norm - 1.0).abs() > 1e-12 {
            return Err(TwoLevelError::NotNormalized(norm));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(TwoLevelError::BadGamma);
        }
        Ok(Self {
            alpha,
            beta,
            a,
            b,
            k,
            gamma,
        })
    }

    /// Spec from the target |y⟩ weight β².
    pub fn from_beta2(beta2: f64, a: f64, b: f64, k: f64, gamma: f64) -> Result<Self, TwoLevelError> {
        if !(0.0..=1.0).contains(&beta2) {
            return Err(TwoLevelError::BadWalkStart(beta2));
        }
        Self::new((1.0 - beta2).sqrt(), beta2.sqrt(), a, b, k, gamma)
    }

    pub fn state(&self) -> StateVector {
        StateVector::new(vec![
            Complex64::new(self.alpha, 0.0),
            Complex64::new(self.beta, 0.0),
        ])
        .expect("normalized by construction")
    }

    /// The collapse basis source: diag(a, b).
    pub fn collapse_operator(&self) -> HermitianOperator {
        HermitianOperator::from_diagonal(&[self.a, self.b])
    }

    pub fn collapse_term(&self) -> CollapseTerm {
        CollapseTerm::fixed(Arc::new(self.collapse_operator()), self.k, self.gamma)
    }

    /// Diffusion scale w = γ k² (a-b)² of the walk coordinate.
    pub fn diffusion_scale(&self) -> f64 {
        self.gamma * self.k * self.k * (self.a - self.b).powi(2)
    }

    /// Off-diagonal decay rate of the ensemble-mean density at H = 0.
    ///
    /// The Itô expansion of d(ψψ†) leaves `γ k² (A ρ A - ½{A², ρ})` in the
    /// mean (the expectation-subtraction terms cancel), which for A = diag(a, b)
    /// damps ρ_xy at rate γ k² (a-b)²/2 and leaves the diagonal untouched.
    pub fn mean_decay_rate(&self) -> f64 {
        0.5 * self.diffusion_scale()
    }

    /// Step satisfying the default accuracy target for this scenario (H = 0).
    pub fn default_dt(&self) -> f64 {
        suggested_dt(0.0, self.diffusion_scale())
    }

    /// Default step budget for absorption runs with step `dt`.
    pub fn step_budget(&self, dt: f64) -> usize {
        (STEP_BUDGET_TIME_CONSTANTS / (self.diffusion_scale() * dt)).ceil() as usize
    }
}

/// Coefficient and unit tangent of the stochastic term: the deviation applied
/// to ψ equals `coefficient * tangent` with coefficient k α β (a-b) and
/// tangent β|x⟩ - α|y⟩.
pub fn tangent_term(spec: &TwoLevelSpec) -> (f64, StateVector) {
    let coefficient = spec.k * spec.alpha * spec.beta * (spec.a - spec.b);
    let tangent = StateVector::new(vec![
        Complex64::new(spec.beta, 0.0),
        Complex64::new(-spec.alpha, 0.0),
    ])
    .expect("unit tangent");
    (coefficient, tangent)
}

/// Position of ψ along the arc: β² = sin²θ, exactly 0 and 1 at the endpoints.
pub fn walk_coordinate(alpha: f64, beta: f64) -> Result<f64, TwoLevelError> {
    if alpha < 0.0 || beta < 0.0 {
        return Err(TwoLevelError::NegativeAmplitude);
    }
    let norm = alpha * alpha + beta * beta;
    if (norm - 1.0).abs() > 1e-12 {
        return Err(TwoLevelError::NotNormalized(norm));
    }
    Ok(beta * beta)
}

/// Step rule for the absorption walk. Either rule keeps the step within the
/// distance to the nearest endpoint, so the walk stays in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    /// ±min(delta, p, 1-p).
    Fixed(f64),
    /// ±u · min(p, 1-p) with u uniform on (0, 1]; endpoints are then declared
    /// at a residual distance of 1e-9 (the walk only converges to them).
    CappedRandom,
}

const CAPPED_ABSORB_TOL: f64 = 1e-9;

/// Monte Carlo estimate of the probability that an unbiased walk started at
/// `p` is absorbed at 1. Independent of the step rule, the position is a
/// bounded martingale, so the estimate converges to `p` itself.
pub fn gambler_ruin_oracle(
    p: f64,
    rule: StepRule,
    n_walks: u64,
    seed: u64,
) -> Result<f64, TwoLevelError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(TwoLevelError::BadWalkStart(p));
    }
    if let StepRule::Fixed(delta) = rule {
        if !(delta > 0.0) || delta > p.min(1.0 - p) && p != 0.0 && p != 1.0 {
            return Err(TwoLevelError::BadStepSize(delta));
        }
    }
    let hits: u64 = (0..n_walks)
        .into_par_iter()
        .map(|walk| {
            let mut rng = stream_rng(seed, walk);
            let mut pos = p;
            loop {
                if pos <= 0.0 {
                    return 0u64;
                }
                if pos >= 1.0 {
                    return 1u64;
                }
                let edge = pos.min(1.0 - pos);
                let step = match rule {
                    StepRule::Fixed(delta) => delta.min(edge),
                    StepRule::CappedRandom => {
                        if edge <= CAPPED_ABSORB_TOL {
                            // Declared absorbed at the nearer endpoint.
                            return if pos > 0.5 { 1 } else { 0 };
                        }
                        rng.random_range(0.0..=1.0) * edge
                    }
                };
                if rng.random_bool(0.5) {
                    pos += step;
                } else {
                    pos -= step;
                }
            }
        })
        .sum();
    Ok(hits as f64 / n_walks as f64)
}

/// Outcome tally of a two-level Born experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BornOutcome {
    pub count_x: u64,
    pub count_y: u64,
    pub unresolved: u64,
    pub n_traj: u64,
    /// Set when the unresolved fraction exceeds 1%: the step budget was too
    /// small for the requested threshold.
    pub flagged: bool,
    pub threshold: f64,
    pub step_budget: usize,
    pub dt: f64,
}

impl BornOutcome {
    pub fn frequency_y(&self) -> f64 {
        self.count_y as f64 / self.n_traj as f64
    }
}

/// Runs `n_traj` collapse trajectories with H = 0 and tallies which
/// eigenstate absorbs each one.
pub fn born_experiment(
    spec: &TwoLevelSpec,
    n_traj: u64,
    dt: f64,
    seed: u64,
) -> Result<BornOutcome, TwoLevelError> {
    born_experiment_with(spec, None, n_traj, dt, seed)
}

/// Born experiment with an optional Hamiltonian (e.g. one commuting with the
/// collapse basis, which leaves the walk statistics unchanged).
pub fn born_experiment_with(
    spec: &TwoLevelSpec,
    hamiltonian: Option<HermitianOperator>,
    n_traj: u64,
    dt: f64,
    seed: u64,
) -> Result<BornOutcome, TwoLevelError> {
    if spec.gamma <= 0.0 || spec.a == spec.b {
        return Err(TwoLevelError::DegenerateCollapse);
    }
    let budget = spec.step_budget(dt);
    let schedule = Schedule::new(dt, budget, budget)
        .with_completion(two_level_completion(DEFAULT_COMPLETION_THRESHOLD));
    let hamiltonian: Option<Arc<dyn Operator>> = hamiltonian
        .map(|h| Arc::new(h) as Arc<dyn Operator>);

    let tallies: Vec<(u64, u64, u64)> = (0..n_traj)
        .into_par_iter()
        .map(|traj| {
            let mut problem = TrajectoryProblem::new(spec.state(), schedule.clone())
                .with_term(spec.collapse_term());
            if let Some(h) = &hamiltonian {
                problem = problem.with_hamiltonian(h.clone());
            }
            let noise = NoiseConfig::new(seed, dt).with_trajectory(traj);
            let record = integrate_trajectory(problem, &noise)?;
            Ok(match record.outcome.as_deref() {
                Some("x") => (1, 0, 0),
                Some("y") => (0, 1, 0),
                _ => (0, 0, 1),
            })
        })
        .collect::<Result<_, IntegrateError>>()?;

    let (count_x, count_y, unresolved) = tallies
        .into_iter()
        .fold((0, 0, 0), |acc, t| (acc.0 + t.0, acc.1 + t.1, acc.2 + t.2));
    Ok(BornOutcome {
        count_x,
        count_y,
        unresolved,
        n_traj,
        flagged: unresolved as f64 > UNRESOLVED_FLAG_FRACTION * n_traj as f64,
        threshold: DEFAULT_COMPLETION_THRESHOLD,
        step_budget: budget,
        dt,
    })
}
