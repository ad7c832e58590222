//! Frame-invariance checks for the collapse term, in 1-D kinematics with
//! c = 1 (parallel boosts only), plus SI-scale estimate calculators.
//!
//! The collapse amplitude shift is set by the ratio of interaction energy to
//! the total relativistic energy of the pair. In the center-of-momentum frame
//! the pair's total momentum vanishes, so boosting multiplies both energies
//! by the same Γ and the ratio is frame-independent. The rate integral is
//! likewise invariant: time dilation t' = Γ t comes with γ' = γ/Γ, and the
//! Itô variance law E[dξ' dξ'*] = dt' keeps the mean square of Σ √γ dξ equal
//! between frames.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::stream_rng;
use crate::stats::mean_and_stderr;

/// Pinned SI constants.
pub mod si {
    /// Reduced Planck constant, J s.
    pub const HBAR: f64 = 1.054571817e-34;
    /// Speed of light, m/s.
    pub const C: f64 = 2.99792458e8;
    /// Electron mass, kg.
    pub const M_E: f64 = 9.1093837015e-31;
    /// Electronvolt, J.
    pub const EV: f64 = 1.602176634e-19;
}

#[derive(Debug, Error, PartialEq)]
pub enum LorentzError {
    #[error("speeds must satisfy |v| < 1 (in units of c), got {0}")]
    Superluminal(f64),
    #[error("masses must be positive (massless systems are out of scope), got {0}")]
    NonPositiveMass(f64),
    #[error("pair is not in its center-of-momentum frame: p_total = {0:.3e}")]
    NotCenterOfMomentum(f64),
    #[error("rate series must be nonempty with strictly increasing times")]
    BadRateSeries,
    #[error("inputs must be positive, got {name} = {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// Two massive systems with 1-D velocities (fractions of c) and an
/// interaction energy, all in units where c = 1 (masses carry energy units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativisticPair {
    pub m_j: f64,
    pub m_k: f64,
    pub v_j: f64,
    pub v_k: f64,
    /// Interaction energy V.
    pub interaction: f64,
}

fn gamma_of(v: f64) -> f64 {
    1.0 / (1.0 - v * v).sqrt()
}

impl RelativisticPair {
    pub fn new(
        m_j: f64,
        m_k: f64,
        v_j: f64,
        v_k: f64,
        interaction: f64,
    ) -> Result<Self, LorentzError> {
        for m in [m_j, m_k] {
            if !(m > 0.0) {
                return Err(LorentzError::NonPositiveMass(m));
            }
        }
        for v in [v_j, v_k] {
            if v.abs() >= 1.0 {
                return Err(LorentzError::Superluminal(v));
            }
        }
        Ok(Self {
            m_j,
            m_k,
            v_j,
            v_k,
            interaction,
        })
    }

    /// Electron pair at rest in its c-o-m frame with interaction energy in eV;
    /// masses expressed in eV.
    pub fn electron_pair(interaction_ev: f64) -> Self {
        let m_ev = si::M_E * si::C * si::C / si::EV;
        Self {
            m_j: m_ev,
            m_k: m_ev,
            v_j: 0.0,
            v_k: 0.0,
            interaction: interaction_ev,
        }
    }

    /// Rest + kinetic energy of both systems plus the interaction energy:
    /// (m_j Γ_j + m_k Γ_k) c² + V, with c = 1.
    pub fn total_energy(&self) -> f64 {
        self.m_j * gamma_of(self.v_j) + self.m_k * gamma_of(self.v_k) + self.interaction
    }

    /// Total momentum (c = 1).
    pub fn total_momentum(&self) -> f64 {
        self.m_j * gamma_of(self.v_j) * self.v_j + self.m_k * gamma_of(self.v_k) * self.v_k
    }
}

/// Parallel boost with |u| < 1 in units of c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boost {
    u: f64,
}

impl Boost {
    pub fn new(u: f64) -> Result<Self, LorentzError> {
        if u.abs() >= 1.0 {
            return Err(LorentzError::Superluminal(u));
        }
        Ok(Self { u })
    }

    pub fn velocity(&self) -> f64 {
        self.u
    }

    pub fn gamma(&self) -> f64 {
        gamma_of(self.u)
    }

    pub fn inverse(&self) -> Boost {
        Boost { u: -self.u }
    }
}

/// Energy as the time component of the energy-momentum four-vector:
/// E' = Γ (E - u p∥).
pub fn boost_energy(energy: f64, p_parallel: f64, boost: Boost) -> f64 {
    boost.gamma() * (energy - boost.u * p_parallel)
}

/// Full (E, p) transform: E' = Γ(E - u p), p' = Γ(p - u E).
pub fn boost_four(energy: f64, momentum: f64, boost: Boost) -> (f64, f64) {
    let g = boost.gamma();
    (
        g * (energy - boost.u * momentum),
        g * (momentum - boost.u * energy),
    )
}

/// Maximum relative deviation, over the given boosts, of the ratio V/E_total
/// computed two ways: (a) multiplying both energies by Γ, (b) transforming
/// the full four-vectors. Requires the pair in its c-o-m frame, where both
/// routes reduce to the unboosted ratio.
pub fn ratio_invariance(pair: &RelativisticPair, boosts: &[Boost]) -> Result<f64, LorentzError> {
    let p_total = pair.total_momentum();
    if p_total.abs() > 1e-12 {
        return Err(LorentzError::NotCenterOfMomentum(p_total));
    }
    let base = pair.interaction / pair.total_energy();
    let mut max_dev: f64 = 0.0;
    for boost in boosts {
        let g = boost.gamma();
        let scaled = (g * pair.interaction) / (g * pair.total_energy());
        // In the c-o-m frame neither energy contributes momentum.
        let (e_prime, _) = boost_four(pair.total_energy(), 0.0, *boost);
        let (v_prime, _) = boost_four(pair.interaction, 0.0, *boost);
        let transformed = v_prime / e_prime;
        for ratio in [scaled, transformed] {
            max_dev = max_dev.max(((ratio - base) / base).abs());
        }
    }
    Ok(max_dev)
}

/// Result of the rate-integral dilation check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateDilation {
    pub unprimed: f64,
    pub primed: f64,
    pub deviation: f64,
}

/// Applies t' = Γ t, γ' = γ/Γ to a sampled rate series and compares the
/// trapezoidal integrals ∫ γ dt; dilation is an exact change of variables.
pub fn rate_integral_invariance(
    series: &[(f64, f64)],
    boost: Boost,
) -> Result<RateDilation, LorentzError> {
    if series.len() < 2 || series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(LorentzError::BadRateSeries);
    }
    let g = boost.gamma();
    let trapezoid = |points: &dyn Fn(usize) -> (f64, f64)| -> f64 {
        let mut acc = 0.0;
        for i in 0..series.len() - 1 {
            let (t0, g0) = points(i);
            let (t1, g1) = points(i + 1);
            acc += 0.5 * (g0 + g1) * (t1 - t0);
        }
        acc
    };
    let unprimed = trapezoid(&|i| series[i]);
    let primed = trapezoid(&|i| {
        let (t, gamma) = series[i];
        (g * t, gamma / g)
    });
    let scale = unprimed.abs().max(1e-300);
    Ok(RateDilation {
        unprimed,
        primed,
        deviation: ((primed - unprimed) / scale).abs(),
    })
}

/// Monte Carlo comparison of E[|Σ √γ dξ|²] between frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSquareComparison {
    pub unprimed_mean: f64,
    pub unprimed_stderr: f64,
    pub primed_mean: f64,
    pub primed_stderr: f64,
    /// Difference of means in combined standard errors.
    pub z: f64,
}

/// Samples Σ √γ_i dξ_i over `n_paths` independent noise paths in the unprimed
/// frame (dξ ~ N(0, dt_i)) and in the boosted frame (γ' = γ/Γ, dt' = Γ dt, so
/// dξ' ~ N(0, Γ dt_i)); both mean squares estimate ∫ γ dt.
pub fn boosted_noise_mean_square(
    series: &[(f64, f64)],
    boost: Boost,
    n_paths: u64,
    seed: u64,
) -> Result<MeanSquareComparison, LorentzError> {
    if series.len() < 2 || series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(LorentzError::BadRateSeries);
    }
    let g = boost.gamma();
    let sample = |stream_base: u64, dilate: bool| -> Vec<f64> {
        (0..n_paths)
            .map(|path| {
                let mut rng = stream_rng(seed, stream_base + path);
                let mut sum = 0.0;
                for w in series.windows(2) {
                    let (t0, gamma0) = w[0];
                    let (t1, _) = w[1];
                    let (dt, gamma) = if dilate {
                        (g * (t1 - t0), gamma0 / g)
                    } else {
                        (t1 - t0, gamma0)
                    };
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sum += gamma.sqrt() * dt.sqrt() * z;
                }
                sum * sum
            })
            .collect()
    };
    let unprimed = sample(0, false);
    let primed = sample(n_paths, true);
    let (mu0, se0) = mean_and_stderr(&unprimed);
    let (mu1, se1) = mean_and_stderr(&primed);
    let combined = (se0 * se0 + se1 * se1).sqrt();
    Ok(MeanSquareComparison {
        unprimed_mean: mu0,
        unprimed_stderr: se0,
        primed_mean: mu1,
        primed_stderr: se1,
        z: (mu1 - mu0) / combined,
    })
}

/// Laboratory-scale estimates for an elementary interaction, all SI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimates {
    /// Interaction duration ħ/V_max, s.
    pub dt_int: f64,
    /// Hyperplane/propagation-delay discrepancy separation/c, s.
    pub temporal_discrepancy: f64,
    /// v_max · temporal discrepancy, m.
    pub positional_discrepancy: f64,
    /// Positional discrepancy over the separation.
    pub fraction: f64,
    /// (V_max / (m_j + m_k) c²)²: scale of deviations from linearity.
    pub nonlinearity: f64,
}

/// SI estimates from separation (m), maximum interaction energy (J), masses
/// (kg), and maximum system speed (m/s).
pub fn scale_estimates(
    separation: f64,
    v_max_energy: f64,
    m_j: f64,
    m_k: f64,
    v_max_speed: f64,
) -> Result<ScaleEstimates, LorentzError> {
    for (name, value) in [
        ("separation", separation),
        ("v_max_energy", v_max_energy),
        ("m_j", m_j),
        ("m_k", m_k),
        ("v_max_speed", v_max_speed),
    ] {
        if !(value > 0.0) {
            return Err(LorentzError::NonPositive { name, value });
        }
    }
    let temporal = separation / si::C;
    let positional = v_max_speed * temporal;
    let rest_energy = (m_j + m_k) * si::C * si::C;
    Ok(ScaleEstimates {
        dt_int: si::HBAR / v_max_energy,
        temporal_discrepancy: temporal,
        positional_discrepancy: positional,
        fraction: positional / separation,
        nonlinearity: (v_max_energy / rest_energy).powi(2),
    })
}
