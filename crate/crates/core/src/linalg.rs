//! Dense complex-matrix kernel.
//!
//! Everything above this module is decomposition-agnostic: Hermitian
//! eigendecompositions, singular values, PSD clipping and inverse square
//! roots are only ever obtained through the functions here.

use nalgebra::{Complex, ComplexField, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::scalar::Real;

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Relative tolerance for the Hermitian check (double precision).
pub const HERMITIAN_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (max |A - A^H| = {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is singular or not positive definite (min eigenvalue {min_eigenvalue:e})")]
    Singular { min_eigenvalue: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Eigendecomposition `A = U diag(values) U^H` with eigenvalues sorted in
/// descending order.
#[derive(Debug, Clone)]
pub struct EigenPair<T: Real> {
    pub values: DVector<T>,
    pub vectors: CMatrix<T>,
}

impl<T: Real> EigenPair<T> {
    /// Rebuilds `U diag(f(lambda)) U^H`.
    pub fn rebuild_with(&self, mut f: impl FnMut(T) -> T) -> CMatrix<T> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let w = f(self.values[k]);
            scaled
                .column_mut(k)
                .iter_mut()
                .for_each(|x| *x = x.scale(w));
        }
        hermitian_part(&(scaled * self.vectors.adjoint()))
    }

    pub fn max(&self) -> T {
        if self.values.is_empty() {
            T::zero()
        } else {
            self.values[0]
        }
    }

    pub fn min(&self) -> T {
        if self.values.is_empty() {
            T::zero()
        } else {
            self.values[self.values.len() - 1]
        }
    }
}

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub fn creal<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

pub fn identity<T: Real>(n: usize) -> CMatrix<T> {
    CMatrix::identity(n, n)
}

pub fn zeros<T: Real>(rows: usize, cols: usize) -> CMatrix<T> {
    CMatrix::zeros(rows, cols)
}

pub fn is_finite<T: Real>(a: &CMatrix<T>) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `max_{ij} |A_ij - conj(A_ji)|`.
pub fn hermitian_deviation<T: Real>(a: &CMatrix<T>) -> T {
    let n = a.nrows();
    let mut dev = T::zero();
    for j in 0..n {
        for i in 0..=j {
            let d = (a[(i, j)] - a[(j, i)].conj()).modulus();
            if d > dev {
                dev = d;
            }
        }
    }
    dev
}

/// `(A + A^H) / 2`.
pub fn hermitian_part<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    (a + a.adjoint()).scale(T::lit(0.5))
}

fn check_square<T: Real>(a: &CMatrix<T>) -> Result<(), KernelError> {
    if a.nrows() != a.ncols() {
        return Err(KernelError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

/// Validates squareness, finiteness and Hermitian symmetry within
/// `1e-12 * max(1, ||A||_F)`.
pub fn check_hermitian<T: Real>(a: &CMatrix<T>) -> Result<(), KernelError> {
    check_square(a)?;
    if !is_finite(a) {
        return Err(KernelError::NonFinite);
    }
    let dev = hermitian_deviation(a);
    let scale = T::one().max(a.norm());
    if dev > T::tol(HERMITIAN_RTOL) * scale {
        return Err(KernelError::NotHermitian {
            deviation: dev.as_f64(),
        });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
///
/// The input is symmetrized before decomposition so that round-off
/// asymmetries accumulated by iterative callers do not leak into the
/// eigenvectors.
pub fn hermitian_evd<T: Real>(a: &CMatrix<T>) -> Result<EigenPair<T>, KernelError> {
    check_hermitian(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenPair {
            values: DVector::zeros(0),
            vectors: zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .partial_cmp(&eig.eigenvalues[x])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenPair { values, vectors })
}

/// `U diag(max(0, lambda_k - mu)) U^H`: projection of `A - mu I` onto the
/// PSD cone.
pub fn psd_clip<T: Real>(a: &CMatrix<T>, mu: T) -> Result<CMatrix<T>, KernelError> {
    let eig = hermitian_evd(a)?;
    Ok(eig.rebuild_with(|l| (l - mu).max(T::zero())))
}

/// Divided differences of `max(0, .)` over the eigenvalues of an
/// [`EigenPair`]: the directional derivative of the PSD projection at
/// `A = U diag(l) U^H` is `U (W o (U^H E U)) U^H`.
pub fn psd_projection_weights<T: Real>(eig: &EigenPair<T>) -> DMatrix<T> {
    let l = &eig.values;
    let n = l.len();
    DMatrix::from_fn(n, n, |p, q| {
        let (a, b) = (l[p], l[q]);
        if a > T::zero() && b > T::zero() {
            T::one()
        } else if a <= T::zero() && b <= T::zero() {
            T::zero()
        } else {
            (a.max(T::zero()) - b.max(T::zero())) / (a - b)
        }
    })
}

/// `Re sum_pq conj(A_pq) W_pq B_pq`.
pub fn weighted_inner<T: Real>(a: &CMatrix<T>, w: &DMatrix<T>, b: &CMatrix<T>) -> T {
    let mut acc = T::zero();
    for q in 0..w.ncols() {
        for p in 0..w.nrows() {
            let c = w[(p, q)];
            if c != T::zero() {
                acc += c * (a[(p, q)].conj() * b[(p, q)]).re;
            }
        }
    }
    acc
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn lambda_max<T: Real>(a: &CMatrix<T>) -> Result<T, KernelError> {
    Ok(hermitian_evd(a)?.max())
}

/// Largest singular value, `sqrt(lambda_max(H^H H))`.
pub fn max_singular_value<T: Real>(h: &CMatrix<T>) -> T {
    if h.nrows() == 0 || h.ncols() == 0 {
        return T::zero();
    }
    let gram = if h.nrows() <= h.ncols() {
        h * h.adjoint()
    } else {
        h.adjoint() * h
    };
    let gram = hermitian_part(&gram);
    let top = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .copied()
        .fold(T::zero(), |m, v| m.max(v));
    top.max(T::zero()).sqrt()
}

/// Inverse square root of a Hermitian positive-definite matrix.
pub fn inv_sqrt_pd<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>, KernelError> {
    let eig = hermitian_evd(a)?;
    let floor = T::tol(1e-14) * T::one().max(eig.max().abs());
    if eig.values.is_empty() {
        return Ok(zeros(0, 0));
    }
    if eig.min() <= floor {
        return Err(KernelError::Singular {
            min_eigenvalue: eig.min().as_f64(),
        });
    }
    Ok(eig.rebuild_with(|l| T::one() / l.sqrt()))
}

/// Principal square root of a Hermitian PSD matrix (negative eigenvalues
/// clipped to zero).
pub fn sqrt_psd<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>, KernelError> {
    let eig = hermitian_evd(a)?;
    Ok(eig.rebuild_with(|l| l.max(T::zero()).sqrt()))
}

/// Column-major stacking of the entries of `a`.
pub fn vec<T: Real>(a: &CMatrix<T>) -> CVector<T> {
    CVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec<T: Real>(v: &CVector<T>, rows: usize, cols: usize) -> Result<CMatrix<T>, KernelError> {
    if v.len() != rows * cols {
        return Err(KernelError::LengthMismatch {
            expected: rows * cols,
            got: v.len(),
        });
    }
    Ok(CMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a.kronecker(b)
}

/// `Re Tr(A^H B)`.
pub fn frob_inner<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (x, y)| acc + x.re * y.re + x.im * y.im)
}

pub fn frob_norm_sq<T: Real>(a: &CMatrix<T>) -> T {
    a.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr())
}

/// `Re Tr(A)`.
pub fn trace_re<T: Real>(a: &CMatrix<T>) -> T {
    (0..a.nrows().min(a.ncols())).fold(T::zero(), |acc, k| acc + a[(k, k)].re)
}

/// `Re Tr(A B)` without forming the product.
pub fn trace_product_re<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    let mut acc = T::zero();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let x = a[(i, j)];
            let y = b[(j, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

fn cholesky_hpd<T: Real>(
    a: &CMatrix<T>,
) -> Result<nalgebra::Cholesky<Complex<T>, nalgebra::Dyn>, KernelError> {
    check_square(a)?;
    let singular = KernelError::Singular {
        min_eigenvalue: f64::NAN,
    };
    let chol = hermitian_part(a).cholesky().ok_or(singular.clone())?;
    let l = chol.l_dirty();
    for k in 0..a.nrows() {
        let z = l[(k, k)];
        // complex Cholesky takes a complex square root on indefinite input
        if z.re <= T::zero() || !z.re.is_finite() || z.im.abs() > z.re * T::tol(1e-8) {
            return Err(singular);
        }
    }
    Ok(chol)
}

/// `ln det A` for Hermitian positive-definite `A` (Cholesky based).
pub fn logdet_hpd<T: Real>(a: &CMatrix<T>) -> Result<T, KernelError> {
    let chol = cholesky_hpd(a)?;
    let l = chol.l_dirty();
    let acc = (0..a.nrows()).fold(T::zero(), |acc, k| acc + l[(k, k)].re.ln());
    Ok(acc + acc)
}

/// Inverse of a Hermitian positive-definite matrix (Cholesky based).
pub fn inverse_hpd<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>, KernelError> {
    Ok(hermitian_part(&cholesky_hpd(a)?.inverse()))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn lambda_min<T: Real>(a: &CMatrix<T>) -> Result<T, KernelError> {
    Ok(hermitian_evd(a)?.min())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix<f64> {
        CMatrix::from_fn(r, c, |_, _| {
            cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn rand_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix<f64> {
        hermitian_part(&rand_matrix(rng, n, n)).scale(4.0)
    }

    fn diag(vals: &[f64]) -> CMatrix<f64> {
        CMatrix::from_diagonal(&DVector::from_iterator(
            vals.len(),
            vals.iter().map(|&v| creal(v)),
        ))
    }

    #[test]
    fn evd_of_identity_and_diagonal() {
        let e = hermitian_evd(&identity::<f64>(2)).unwrap();
        assert!(close(e.values[0], 1.0, 1e-14) && close(e.values[1], 1.0, 1e-14));
        let utu = e.vectors.adjoint() * &e.vectors;
        assert!((utu - identity::<f64>(2)).norm() < 1e-12);

        let e = hermitian_evd(&diag(&[1.0, 3.0])).unwrap();
        assert!(close(e.values[0], 3.0, 1e-14));
        assert!(close(e.values[1], 1.0, 1e-14));
    }

    #[test]
    fn evd_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..7 {
            let a = rand_hermitian(&mut rng, n);
            let e = hermitian_evd(&a).unwrap();
            let back = e.rebuild_with(|l| l);
            assert!((&back - &a).norm() <= 1e-9 * a.norm().max(1.0));
            let utu = e.vectors.adjoint() * &e.vectors;
            assert!((utu - identity::<f64>(n)).camax() < 1e-10);
            for k in 1..n {
                assert!(e.values[k - 1] >= e.values[k]);
            }
        }
    }

    #[test]
    fn evd_rejects_bad_input() {
        let a = CMatrix::<f64>::zeros(2, 3);
        assert!(matches!(
            hermitian_evd(&a),
            Err(KernelError::NotSquare { .. })
        ));
        let mut b = identity::<f64>(2);
        b[(0, 1)] = cplx(1.0, 0.0);
        assert!(matches!(
            hermitian_evd(&b),
            Err(KernelError::NotHermitian { .. })
        ));
        let mut c = identity::<f64>(2);
        c[(0, 0)] = cplx(f64::NAN, 0.0);
        assert_eq!(hermitian_evd(&c).unwrap_err(), KernelError::NonFinite);
    }

    #[test]
    fn evd_tolerates_tiny_asymmetry() {
        let mut a = diag(&[2.0, 1.0]);
        a[(0, 1)] = cplx(1e-15, 0.0);
        assert!(hermitian_evd(&a).is_ok());
    }

    #[test]
    fn psd_clip_examples() {
        let out = psd_clip(&diag(&[3.0, 1.0]), 1.0).unwrap();
        assert!((out - diag(&[2.0, 0.0])).norm() < 1e-14);
        let out = psd_clip(&diag(&[-2.0, -1.0]), 0.0).unwrap();
        assert!(out.norm() < 1e-14);
    }

    #[test]
    fn projection_weights_give_directional_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let a = rand_hermitian(&mut rng, 4);
            let e = rand_hermitian(&mut rng, 4);
            let eig = hermitian_evd(&a).unwrap();
            let w = psd_projection_weights(&eig);
            let u = &eig.vectors;
            let rotated = u.adjoint() * &e * u;
            let d = rotated.zip_map(&w.map(creal), |r, c| r * c);
            let analytic = u * d * u.adjoint();
            let h = 1e-6;
            let fd = (psd_clip(&(&a + e.scale(h)), 0.0).unwrap()
                - psd_clip(&(&a - e.scale(h)), 0.0).unwrap())
            .unscale(2.0 * h);
            assert!((&analytic - &fd).norm() < 1e-6 * (1.0 + fd.norm()));
            assert!(close(
                weighted_inner(&rotated, &w, &rotated),
                frob_inner(&e, &analytic),
                1e-10
            ));
        }
    }

    #[test]
    fn psd_clip_idempotent_on_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = rand_matrix(&mut rng, 4, 4);
        let a = hermitian_part(&(&b * b.adjoint()));
        let out = psd_clip(&a, 0.0).unwrap();
        assert!((out - &a).norm() < 1e-12);
    }

    #[test]
    fn singular_value_examples() {
        assert!(close(max_singular_value(&identity::<f64>(3)), 1.0, 1e-14));
        assert!(close(max_singular_value(&diag(&[1.0, 2.0])), 2.0, 1e-14));
        assert_eq!(max_singular_value(&zeros::<f64>(0, 3)), 0.0);
    }

    #[test]
    fn inv_sqrt_examples() {
        let b = inv_sqrt_pd(&identity::<f64>(3)).unwrap();
        assert!((b - identity::<f64>(3)).norm() < 1e-14);
        let b = inv_sqrt_pd(&diag(&[4.0, 9.0])).unwrap();
        assert!((b - diag(&[0.5, 1.0 / 3.0])).norm() < 1e-14);
        assert!(matches!(
            inv_sqrt_pd(&diag(&[1.0, 0.0])),
            Err(KernelError::Singular { .. })
        ));
    }

    #[test]
    fn vec_is_column_major() {
        let a = CMatrix::from_row_slice(2, 2, &[creal(1.0), creal(3.0), creal(2.0), creal(4.0)]);
        let v = vec(&a);
        let got: Vec<f64> = v.iter().map(|z| z.re).collect();
        assert_eq!(got, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unvec(&v, 2, 2).unwrap(), a);
        assert_eq!(
            unvec(&v, 3, 1).unwrap_err(),
            KernelError::LengthMismatch {
                expected: 3,
                got: 4
            }
        );
    }

    #[test]
    fn logdet_and_inverse() {
        let a = diag(&[2.0, 3.0]);
        assert!(close(logdet_hpd(&a).unwrap(), 6f64.ln(), 1e-14));
        let inv = inverse_hpd(&a).unwrap();
        assert!((inv * a - identity::<f64>(2)).norm() < 1e-14);
        assert!(logdet_hpd(&diag(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn trace_helpers_agree_with_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = rand_matrix(&mut rng, 3, 3);
        let b = rand_matrix(&mut rng, 3, 3);
        assert!(close(trace_product_re(&a, &b), (&a * &b).trace().re, 1e-13));
        assert!(close(
            frob_inner(&a, &b),
            (a.adjoint() * &b).trace().re,
            1e-13
        ));
    }

    #[test]
    fn f32_kernel_smoke() {
        let a = CMatrix::<f32>::from_diagonal(&DVector::from_vec(vec![creal(3.0f32), creal(1.0)]));
        let e = hermitian_evd(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-6);
        let c = psd_clip(&a, 1.0).unwrap();
        assert!((c[(0, 0)].re - 2.0).abs() < 1e-6);
    }
}
