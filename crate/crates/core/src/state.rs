//! Complex linear-algebra substrate: normalized state vectors, Hermitian
//! operators, expectations, deviation operators, and partial traces.
//!
//! Everything is dense, double precision, and immutable after construction;
//! values can be shared freely across worker threads.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{self, hermitian_eigenvalues};

/// Norm tolerance accepted when wrapping raw amplitudes into a [`StateVector`].
/// Matches the per-step renormalization tolerance of the integrator.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Hermiticity defect (max |M - M†| entry / 2) tolerated at construction.
pub const HERMITICITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state must have dimension >= 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("state norm {norm} outside [1 - {tol}, 1 + {tol}]", tol = NORM_TOLERANCE)]
    NotNormalized { norm: f64 },
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("matrix is not Hermitian: symmetrization defect {defect:.3e} exceeds {max:.0e}", max = HERMITICITY_TOLERANCE)]
    NotHermitian { defect: f64 },
    #[error("partition {a}x{b} inconsistent with dimension {dim}")]
    BadPartition { a: usize, b: usize, dim: usize },
    #[error("matrix entries length {got} does not match dim {dim} squared")]
    BadMatrixShape { dim: usize, got: usize },
}

/// A normalized complex amplitude vector over a finite basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Wraps amplitudes that are already normalized to within
    /// [`NORM_TOLERANCE`]; the residual is removed exactly.
    pub fn new(amps: Vec<Complex64>) -> Result<Self, StateError> {
        if amps.len() < 2 {
            return Err(StateError::DimensionTooSmall(amps.len()));
        }
        let norm = numeric::norm_sqr(&amps).sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(StateError::NotNormalized { norm });
        }
        let mut state = Self { amps };
        state.renormalize();
        Ok(state)
    }

    /// Normalizes arbitrary amplitudes.
    pub fn normalized(mut amps: Vec<Complex64>) -> Result<Self, StateError> {
        if amps.len() < 2 {
            return Err(StateError::DimensionTooSmall(amps.len()));
        }
        let norm = numeric::norm_sqr(&amps).sqrt();
        if norm < 1e-300 {
            return Err(StateError::ZeroVector);
        }
        let inv = 1.0 / norm;
        for a in &mut amps {
            *a *= inv;
        }
        Ok(Self { amps })
    }

    /// Basis state |i⟩ in `dim` dimensions.
    pub fn basis(dim: usize, index: usize) -> Result<Self, StateError> {
        if dim < 2 {
            return Err(StateError::DimensionTooSmall(dim));
        }
        assert!(index < dim, "basis index out of range");
        let mut amps = vec![Complex64::ZERO; dim];
        amps[index] = Complex64::ONE;
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        numeric::norm_sqr(&self.amps).sqrt()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Complex64 {
        numeric::dot(&self.amps, &other.amps)
    }

    /// Squared weight carried by a set of basis indices.
    pub fn branch_weight(&self, indices: &[usize]) -> f64 {
        numeric::kahan_sum(indices.iter().map(|&i| self.amps[i].norm_sqr()))
    }

    /// Rescales to unit norm and returns the pre-renormalization norm.
    pub fn renormalize(&mut self) -> f64 {
        let norm = numeric::norm_sqr(&self.amps).sqrt();
        let inv = 1.0 / norm;
        for a in &mut self.amps {
            *a *= inv;
        }
        norm
    }

    pub(crate) fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub(crate) fn from_raw(amps: Vec<Complex64>) -> Self {
        Self { amps }
    }
}

/// Anything that acts linearly on amplitude vectors. Implementations must be
/// self-adjoint; the integrator and the statistics rely on real expectations.
pub trait Operator: Send + Sync {
    fn dim(&self) -> usize;

    /// `out = A x`. Overwrites `out`.
    fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]);

    /// ⟨ψ|A|ψ⟩ for a normalized ψ. The imaginary residue of the bilinear form
    /// is a diagnostic for broken self-adjointness.
    fn expectation_of(&self, psi: &[Complex64]) -> f64 {
        let mut out = vec![Complex64::ZERO; psi.len()];
        self.apply_into(psi, &mut out);
        let form = numeric::dot(psi, &out);
        debug_assert!(
            form.im.abs() <= 1e-12 * (1.0 + form.re.abs()),
            "imaginary residue {:.3e} in expectation",
            form.im
        );
        form.re
    }
}

/// Dense self-adjoint matrix, row-major storage.
///
/// Construction symmetrizes the input as `(M + M†)/2` and rejects matrices
/// whose symmetrization defect exceeds [`HERMITICITY_TOLERANCE`]; grid-assembled
/// potentials may carry round-off asymmetry but nothing larger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermitianOperator {
    dim: usize,
    entries: Vec<Complex64>,
    defect: f64,
}

impl HermitianOperator {
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self, StateError> {
        if entries.len() != dim * dim {
            return Err(StateError::BadMatrixShape {
                dim,
                got: entries.len(),
            });
        }
        let mut sym = entries.clone();
        let mut defect: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let m = entries[i * dim + j];
                let mt = entries[j * dim + i].conj();
                defect = defect.max(0.5 * (m - mt).norm());
                sym[i * dim + j] = 0.5 * (m + mt);
            }
        }
        if defect > HERMITICITY_TOLERANCE {
            return Err(StateError::NotHermitian { defect });
        }
        Ok(Self {
            dim,
            entries: sym,
            defect,
        })
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut entries = vec![Complex64::ZERO; dim * dim];
        for (i, &d) in diag.iter().enumerate() {
            entries[i * dim + i] = Complex64::new(d, 0.0);
        }
        Self {
            dim,
            entries,
            defect: 0.0,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    /// Defect recorded before symmetrization.
    pub fn symmetrization_defect(&self) -> f64 {
        self.defect
    }

    pub fn frobenius_norm(&self) -> f64 {
        numeric::kahan_sum(self.entries.iter().map(|z| z.norm_sqr())).sqrt()
    }

    /// Row-sum (Gershgorin) bound on the spectral radius; cheap dt heuristic.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| self.entry(i, j).norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.entries, self.dim)
    }

    /// `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self, StateError> {
        if self.dim != other.dim {
            return Err(StateError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        Self::new(self.dim, entries)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|z| z * factor).collect(),
            defect: self.defect,
        }
    }
}

impl Operator for HermitianOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.entries[i * self.dim..(i + 1) * self.dim];
            let mut acc = Complex64::ZERO;
            for (m, v) in row.iter().zip(x) {
                acc += m * v;
            }
            *o = acc;
        }
    }
}

/// ⟨ψ|A|ψ⟩ with dimension checking.
pub fn expectation(op: &HermitianOperator, psi: &StateVector) -> Result<f64, StateError> {
    if op.dim() != psi.dim() {
        return Err(StateError::DimensionMismatch {
            expected: op.dim(),
            got: psi.dim(),
        });
    }
    Ok(op.expectation_of(psi.amplitudes()))
}

/// `k (A - ⟨ψ|A|ψ⟩) ψ`: the deviation of `A` from its expectation applied to
/// ψ, scaled by `k`. The subtraction makes the result orthogonal to ψ, as in
/// the Gram-Schmidt procedure.
pub fn deviation_apply(
    op: &HermitianOperator,
    psi: &StateVector,
    k: f64,
) -> Result<Vec<Complex64>, StateError> {
    if op.dim() != psi.dim() {
        return Err(StateError::DimensionMismatch {
            expected: op.dim(),
            got: psi.dim(),
        });
    }
    let amps = psi.amplitudes();
    let mut out = vec![Complex64::ZERO; amps.len()];
    op.apply_into(amps, &mut out);
    let mean = numeric::dot(amps, &out).re;
    for (o, a) in out.iter_mut().zip(amps) {
        *o = k * (*o - mean * a);
    }
    Ok(out)
}

/// Splitting of a basis of dimension `a * b` into two subsystems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipartitePartition {
    pub dim_a: usize,
    pub dim_b: usize,
}

impl BipartitePartition {
    pub fn new(dim_a: usize, dim_b: usize) -> Self {
        Self { dim_a, dim_b }
    }

    pub fn check(&self, dim: usize) -> Result<(), StateError> {
        if self.dim_a * self.dim_b != dim || self.dim_a == 0 || self.dim_b == 0 {
            return Err(StateError::BadPartition {
                a: self.dim_a,
                b: self.dim_b,
                dim,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    A,
    B,
}

/// Hermitian, positive semidefinite, unit-trace matrix describing a subsystem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![Complex64::ZERO; dim * dim],
        }
    }

    /// |ψ⟩⟨ψ|.
    pub fn from_pure(psi: &StateVector) -> Self {
        let amps = psi.amplitudes();
        let dim = amps.len();
        let mut entries = vec![Complex64::ZERO; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                entries[i * dim + j] = amps[i] * amps[j].conj();
            }
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.entry(i, i)).sum()
    }

    pub fn add_scaled(&mut self, other: &Self, weight: f64) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += weight * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.entries {
            *a *= factor;
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.entries, self.dim)
    }

    /// ½ ‖ρ₁ - ρ₂‖₁ via the eigenvalues of the Hermitian difference.
    pub fn trace_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        let diff: Vec<Complex64> = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a - b)
            .collect();
        if self.dim == 2 {
            // Closed form for 2x2 Hermitian: λ± = t/2 ± √(t²/4 - det).
            let a = diff[0].re;
            let d = diff[3].re;
            let b = diff[1];
            let half = 0.5 * (a - d);
            let disc = (half * half + b.norm_sqr()).sqrt();
            return 0.5 * (((a + d) * 0.5 + disc).abs() + ((a + d) * 0.5 - disc).abs());
        }
        0.5 * hermitian_eigenvalues(&diff, self.dim)
            .iter()
            .map(|l| l.abs())
            .sum::<f64>()
    }
}

/// Partial trace of a pure bipartite state over the complement of `keep`.
pub fn reduced_density(
    psi: &StateVector,
    part: BipartitePartition,
    keep: Subsystem,
) -> Result<DensityMatrix, StateError> {
    part.check(psi.dim())?;
    let (da, db) = (part.dim_a, part.dim_b);
    let amps = psi.amplitudes();
    // Index convention: |i⟩_A ⊗ |j⟩_B ↦ i * db + j.
    match keep {
        Subsystem::A => {
            let mut rho = vec![Complex64::ZERO; da * da];
            for i in 0..da {
                for ip in 0..da {
                    let mut acc = Complex64::ZERO;
                    for j in 0..db {
                        acc += amps[i * db + j] * amps[ip * db + j].conj();
                    }
                    rho[i * da + ip] = acc;
                }
            }
            Ok(DensityMatrix {
                dim: da,
                entries: rho,
            })
        }
        Subsystem::B => {
            let mut rho = vec![Complex64::ZERO; db * db];
            for j in 0..db {
                for jp in 0..db {
                    let mut acc = Complex64::ZERO;
                    for i in 0..da {
                        acc += amps[i * db + j] * amps[i * db + jp].conj();
                    }
                    rho[j * db + jp] = acc;
                }
            }
            Ok(DensityMatrix {
                dim: db,
                entries: rho,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    pub(crate) fn random_state(rng: &mut ChaCha12Rng, dim: usize) -> StateVector {
        let amps: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        StateVector::normalized(amps).unwrap()
    }

    pub(crate) fn random_hermitian(rng: &mut ChaCha12Rng, dim: usize) -> HermitianOperator {
        let mut entries = vec![Complex64::ZERO; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
            for j in (i + 1)..dim {
                let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                entries[i * dim + j] = z;
                entries[j * dim + i] = z.conj();
            }
        }
        HermitianOperator::new(dim, entries).unwrap()
    }

    #[test]
    fn identity_expectation_is_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for dim in [2, 3, 8] {
            let psi = random_state(&mut rng, dim);
            let id = HermitianOperator::identity(dim);
            let e = expectation(&id, &psi).unwrap();
            assert!((e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenstate_expectation_is_eigenvalue() {
        let op = HermitianOperator::from_diagonal(&[0.7, -1.3]);
        let psi = StateVector::basis(2, 0).unwrap();
        assert_eq!(expectation(&op, &psi).unwrap(), 0.7);
    }

    #[test]
    fn expectation_matches_elementwise_double_sum() {
        // Independent oracle: explicit Σ_ij conj(ψ_i) M_ij ψ_j.
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..50 {
            let op = random_hermitian(&mut rng, 4);
            let psi = random_state(&mut rng, 4);
            let mut oracle = Complex64::ZERO;
            for i in 0..4 {
                for j in 0..4 {
                    oracle += psi.amplitudes()[i].conj() * op.entry(i, j) * psi.amplitudes()[j];
                }
            }
            let e = expectation(&op, &psi).unwrap();
            assert!((e - oracle.re).abs() <= 1e-12 * (1.0 + oracle.re.abs()));
            assert!(oracle.im.abs() < 1e-12);
        }
    }

    #[test]
    fn expectation_rejects_dimension_mismatch() {
        let op = HermitianOperator::identity(3);
        let psi = StateVector::basis(2, 0).unwrap();
        assert!(matches!(
            expectation(&op, &psi),
            Err(StateError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn deviation_vanishes_on_eigenstates_and_for_zero_strength() {
        let op = HermitianOperator::from_diagonal(&[1.0, -1.0]);
        let eig = StateVector::basis(2, 1).unwrap();
        let out = deviation_apply(&op, &eig, 1.0).unwrap();
        assert!(out.iter().all(|z| z.norm() < 1e-14));

        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let psi = random_state(&mut rng, 2);
        let out = deviation_apply(&op, &psi, 0.0).unwrap();
        assert!(out.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn deviation_matches_two_level_expansion() {
        // For ψ = α|x⟩ + β|y⟩ with real α, β the deviation expands to
        // k α β (a - b) [β, -α].
        let (alpha, beta) = (0.5_f64.sqrt(), 0.5_f64.sqrt());
        let op = HermitianOperator::from_diagonal(&[1.0, -1.0]);
        let psi = StateVector::new(vec![
            Complex64::new(alpha, 0.0),
            Complex64::new(beta, 0.0),
        ])
        .unwrap();
        let out = deviation_apply(&op, &psi, 1.0).unwrap();
        let coeff = alpha * beta * 2.0;
        assert!((out[0] - Complex64::new(coeff * beta, 0.0)).norm() < 1e-12);
        assert!((out[1] - Complex64::new(-coeff * alpha, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn deviation_is_orthogonal_for_1000_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let dim = rng.random_range(2..=8);
            let op = random_hermitian(&mut rng, dim);
            let psi = random_state(&mut rng, dim);
            let out = deviation_apply(&op, &psi, 1.3).unwrap();
            let norm = numeric::norm_sqr(&out).sqrt();
            if norm < 1e-14 {
                continue;
            }
            let overlap = numeric::dot(psi.amplitudes(), &out).norm();
            assert!(overlap <= 1e-12 * norm, "overlap {overlap} vs norm {norm}");
        }
    }

    #[test]
    fn expectation_within_spectrum_for_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..200 {
            let dim = rng.random_range(2..=16);
            let op = random_hermitian(&mut rng, dim);
            let psi = random_state(&mut rng, dim);
            let e = expectation(&op, &psi).unwrap();
            let vals = op.eigenvalues();
            let (lo, hi) = (vals[0], vals[vals.len() - 1]);
            assert!(e >= lo - 1e-10 && e <= hi + 1e-10, "{e} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn hermiticity_enforced_at_construction() {
        // Tiny asymmetry is symmetrized away, large asymmetry is an error.
        let dim = 2;
        let mut entries = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.5 + 1e-12, 0.0),
            Complex64::new(-1.0, 0.0),
        ];
        let op = HermitianOperator::new(dim, entries.clone()).unwrap();
        assert!(op.symmetrization_defect() <= 1e-10);
        assert_eq!(op.entry(0, 1), op.entry(1, 0).conj());

        entries[2] = Complex64::new(0.8, 0.0);
        assert!(matches!(
            HermitianOperator::new(dim, entries),
            Err(StateError::NotHermitian { .. })
        ));
    }

    #[test]
    fn reduced_density_of_product_state_is_pure() {
        // (a|0⟩ + b|1⟩) ⊗ |0⟩ reduces on A to a rank-1 projector.
        let a = Complex64::new(0.6, 0.0);
        let b = Complex64::new(0.0, 0.8);
        let amps = vec![a, Complex64::ZERO, b, Complex64::ZERO];
        let psi = StateVector::new(amps).unwrap();
        let rho = reduced_density(&psi, BipartitePartition::new(2, 2), Subsystem::A).unwrap();
        let purity: f64 = rho.eigenvalues().iter().map(|l| l * l).sum();
        assert!((purity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reduced_density_of_bell_state_is_maximally_mixed() {
        let r = (0.5_f64).sqrt();
        let amps = vec![
            Complex64::new(r, 0.0),
            Complex64::ZERO,
            Complex64::ZERO,
            Complex64::new(r, 0.0),
        ];
        let psi = StateVector::new(amps).unwrap();
        for side in [Subsystem::A, Subsystem::B] {
            let rho = reduced_density(&psi, BipartitePartition::new(2, 2), side).unwrap();
            assert!((rho.entry(0, 0).re - 0.5).abs() < 1e-12);
            assert!((rho.entry(1, 1).re - 0.5).abs() < 1e-12);
            assert!(rho.entry(0, 1).norm() < 1e-12);
        }
    }

    #[test]
    fn reduced_density_matches_index_summation_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let (da, db) = (3, 4);
        let psi = random_state(&mut rng, da * db);
        let rho = reduced_density(&psi, BipartitePartition::new(da, db), Subsystem::B).unwrap();
        // Brute-force double loop.
        for j in 0..db {
            for jp in 0..db {
                let mut acc = Complex64::ZERO;
                for i in 0..da {
                    acc += psi.amplitudes()[i * db + j] * psi.amplitudes()[i * db + jp].conj();
                }
                assert!((rho.entry(j, jp) - acc).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn reduced_density_unit_trace_for_1000_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let da = rng.random_range(2..=4);
            let db = rng.random_range(2..=4);
            let psi = random_state(&mut rng, da * db);
            let keep = if rng.random_bool(0.5) {
                Subsystem::A
            } else {
                Subsystem::B
            };
            let rho = reduced_density(&psi, BipartitePartition::new(da, db), keep).unwrap();
            assert!((rho.trace().re - 1.0).abs() <= 1e-12);
            assert!(rho.trace().im.abs() <= 1e-12);
            // Positive semidefinite within round-off.
            assert!(rho.eigenvalues().iter().all(|&l| l > -1e-10));
        }
    }

    #[test]
    fn reduced_density_rejects_bad_partition() {
        let psi = StateVector::basis(6, 0).unwrap();
        assert!(matches!(
            reduced_density(&psi, BipartitePartition::new(4, 2), Subsystem::A),
            Err(StateError::BadPartition { .. })
        ));
    }
}
