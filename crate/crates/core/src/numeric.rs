//! Small numeric utilities: compensated summation and a Jacobi eigensolver.
//!
//! Compensated (Neumaier) accumulation is used for every scalar reduction in
//! the grid-scenario hot path. Besides accuracy, it makes reductions
//! insensitive to summation order at the level of the final rounded double,
//! which keeps trajectories bit-identical under cyclic relabelings of the grid.

use num_complex::Complex64;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator of doubles.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = Kahan::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Compensated `Σ conj(a_i) b_i`.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut re = Kahan::new();
    let mut im = Kahan::new();
    for (x, y) in a.iter().zip(b) {
        let p = x.conj() * y;
        re.add(p.re);
        im.add(p.im);
    }
    Complex64::new(re.value(), im.value())
}

/// Compensated `Σ |a_i|²`.
pub fn norm_sqr(a: &[Complex64]) -> f64 {
    let mut acc = Kahan::new();
    for x in a {
        acc.add(x.norm_sqr());
    }
    acc.value()
}

/// Eigenvalues and eigenvectors of a dense real symmetric matrix (row-major),
/// by cyclic Jacobi rotations. Intended for the small matrices that appear in
/// diagnostics (dim ≤ a few hundred). Eigenvalues ascending; eigenvectors are
/// the columns of the returned matrix.
pub fn sym_eigen(mat: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(mat.len(), dim * dim, "matrix size mismatch");
    let mut a = mat.to_vec();
    let mut v = vec![0.0; dim * dim];
    for i in 0..dim {
        v[i * dim + i] = 1.0;
    }

    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..dim {
            for j in (i + 1)..dim {
                s += a[i * dim + j] * a[i * dim + j];
            }
        }
        s
    };

    let mut sweeps = 0;
    while off(&a) > 1e-26 * (dim as f64) && sweeps < 100 {
        sweeps += 1;
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[p * dim + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * dim + p];
                let aqq = a[q * dim + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k * dim + p];
                    let akq = a[k * dim + q];
                    a[k * dim + p] = c * akp - s * akq;
                    a[k * dim + q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p * dim + k];
                    let aqk = a[q * dim + k];
                    a[p * dim + k] = c * apk - s * aqk;
                    a[q * dim + k] = s * apk + c * aqk;
                }
                for k in 0..dim {
                    let vkp = v[k * dim + p];
                    let vkq = v[k * dim + q];
                    v[k * dim + p] = c * vkp - s * vkq;
                    v[k * dim + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| a[i * dim + i].partial_cmp(&a[j * dim + j]).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| a[i * dim + i]).collect();
    let mut eigvecs = vec![0.0; dim * dim];
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..dim {
            eigvecs[row * dim + new_col] = v[row * dim + old_col];
        }
    }
    (eigvals, eigvecs)
}

/// Eigenvalues of a dense complex Hermitian matrix (row-major), via the real
/// symmetric embedding `[[Re, -Im], [Im, Re]]` whose spectrum doubles the
/// Hermitian one.
pub fn hermitian_eigenvalues(mat: &[Complex64], dim: usize) -> Vec<f64> {
    assert_eq!(mat.len(), dim * dim, "matrix size mismatch");
    let n = 2 * dim;
    let mut real = vec![0.0; n * n];
    for i in 0..dim {
        for j in 0..dim {
            let z = mat[i * dim + j];
            real[i * n + j] = z.re;
            real[i * n + (dim + j)] = -z.im;
            real[(dim + i) * n + j] = z.im;
            real[(dim + i) * n + (dim + j)] = z.re;
        }
    }
    let (vals, _) = sym_eigen(&real, n);
    // Doubled spectrum: take every other eigenvalue of the sorted list.
    vals.into_iter().step_by(2).collect()
}
