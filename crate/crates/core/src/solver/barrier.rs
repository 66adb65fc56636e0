//! Log-barrier Newton method for the block quadratic programs of
//! [`super::admm`], started from a strictly feasible point.
//!
//! Each Hermitian block is handled in orthonormal real coordinates so the
//! Newton system is an ordinary dense symmetric positive definite solve.

use nalgebra::{DMatrix, DVector};

use super::admm::BlockQp;
use crate::linalg::{self, cplx, creal, CMatrix};
use crate::scalar::Real;

/// Orthonormal coordinates of a Hermitian matrix: diagonal entries, then
/// `sqrt(2) Re` and `sqrt(2) Im` of each strictly upper entry.
pub(crate) fn herm_to_real<T: Real>(a: &CMatrix<T>) -> DVector<T> {
    let n = a.nrows();
    let r2 = T::lit(2.0).sqrt();
    let mut v = DVector::zeros(n * n);
    let mut k = 0;
    for i in 0..n {
        v[k] = a[(i, i)].re;
        k += 1;
    }
    for j in 0..n {
        for i in 0..j {
            v[k] = a[(i, j)].re * r2;
            v[k + 1] = a[(i, j)].im * r2;
            k += 2;
        }
    }
    v
}

pub(crate) fn real_to_herm<T: Real>(v: &[T], n: usize) -> CMatrix<T> {
    let r2 = T::lit(0.5).sqrt();
    let mut a = linalg::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        a[(i, i)] = creal(v[k]);
        k += 1;
    }
    for j in 0..n {
        for i in 0..j {
            let z = cplx(v[k] * r2, v[k + 1] * r2);
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
            k += 2;
        }
    }
    a
}

/// Hessian of `-ln det X` in the coordinates of [`herm_to_real`], from
/// `x_inv = X^-1`. Column `q` is `X^-1 E_q X^-1` for the basis matrix `E_q`,
/// an outer product of columns of `X^-1`.
pub(crate) fn logdet_hessian<T: Real>(x_inv: &CMatrix<T>) -> DMatrix<T> {
    let n = x_inv.nrows();
    let r = T::lit(0.5).sqrt();
    let mut h = DMatrix::zeros(n * n, n * n);
    let mut k = 0;
    for i in 0..n {
        let c = x_inv.column(i);
        h.set_column(k, &herm_to_real(&(c * c.adjoint())));
        k += 1;
    }
    for j in 0..n {
        for i in 0..j {
            let p = x_inv.column(i) * x_inv.column(j).adjoint();
            let pa = p.adjoint();
            h.set_column(k, &herm_to_real(&(&p + &pa).scale(r)));
            h.set_column(k + 1, &herm_to_real(&((&p - &pa) * cplx(T::zero(), r))));
            k += 2;
        }
    }
    h
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierSettings<T: Real> {
    /// Absolute duality-gap bound at which the path following stops.
    pub gap: T,
    /// Factor applied to the barrier weight between centerings.
    pub growth: T,
    pub max_newton: usize,
}

impl<T: Real> BarrierSettings<T> {
    pub fn with_gap(gap: T) -> Self {
        BarrierSettings {
            gap,
            growth: T::lit(50.0),
            max_newton: 400,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierReport {
    pub newton_steps: usize,
    /// Duality-gap bound of the returned point.
    pub gap: f64,
}

struct Layout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
}

impl Layout {
    fn new(blocks: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut at = 0;
        for &n in blocks {
            offsets.push(at);
            at += n * n;
        }
        Layout {
            sizes: blocks.to_vec(),
            offsets,
            dim: at,
        }
    }

    fn pack<T: Real>(&self, x: &[CMatrix<T>]) -> DVector<T> {
        let mut v = DVector::zeros(self.dim);
        for (i, m) in x.iter().enumerate() {
            v.rows_mut(self.offsets[i], self.sizes[i] * self.sizes[i])
                .copy_from(&herm_to_real(m));
        }
        v
    }

    fn unpack<T: Real>(&self, v: &DVector<T>) -> Vec<CMatrix<T>> {
        (0..self.sizes.len())
            .map(|i| {
                let n = self.sizes[i];
                real_to_herm(v.rows(self.offsets[i], n * n).as_slice(), n)
            })
            .collect()
    }
}

/// Barrier value `tau f(x) - sum ln(slack_k) - sum ln det X_i`, or `None`
/// outside the domain.
fn barrier_value<T: Real>(
    qp: &BlockQp<T>,
    a: &[DVector<T>],
    v: &DVector<T>,
    x: &[CMatrix<T>],
    tau: T,
) -> Option<T> {
    let mut phi = tau * qp.objective(x);
    for (ak, c) in a.iter().zip(&qp.constraints) {
        let s = c.bound - ak.dot(v);
        if !(s > T::zero()) {
            return None;
        }
        phi -= s.ln();
    }
    for m in x {
        phi -= linalg::logdet_hpd(m).ok()?;
    }
    phi.is_finite().then_some(phi)
}

/// Path-following barrier method from the strictly feasible `x0`. Returns
/// `None` if `x0` is not strictly feasible or a Newton system breaks down.
pub fn solve_block_qp_barrier<T: Real>(
    qp: &BlockQp<T>,
    x0: &[CMatrix<T>],
    settings: &BarrierSettings<T>,
) -> Option<(Vec<CMatrix<T>>, BarrierReport)> {
    let layout = Layout::new(&x0.iter().map(|m| m.nrows()).collect::<Vec<_>>());
    let a: Vec<DVector<T>> = qp
        .constraints
        .iter()
        .map(|c| layout.pack(&c.coeffs))
        .collect();
    let b = layout.pack(&qp.targets);
    let mut v = layout.pack(x0);
    let mut x = layout.unpack(&v);
    let two = T::lit(2.0);
    let nu = T::lit((layout.sizes.iter().sum::<usize>() + a.len()) as f64);
    let f0 = qp.objective(&x);
    barrier_value(qp, &a, &v, &x, T::one())?;
    let mut tau = nu / (T::one() + f0.abs());
    let mut steps = 0;
    // quadratic part of the Hessian, shared by every Newton step
    let mut quad = DMatrix::identity(layout.dim, layout.dim).scale(two * qp.prox);
    if qp.coupling != T::zero() {
        let m = layout.sizes[0] * layout.sizes[0];
        for i in 0..layout.sizes.len() {
            for j in 0..layout.sizes.len() {
                for d in 0..m {
                    quad[(layout.offsets[i] + d, layout.offsets[j] + d)] += two * qp.coupling;
                }
            }
        }
    }
    loop {
        // rough centering is enough away from the final weight
        let last = nu / tau <= settings.gap * T::lit(1.000001);
        let center_tol = if last { T::tol(1e-8) } else { T::lit(1e-2) };
        for _ in 0..60 {
            if steps >= settings.max_newton {
                break;
            }
            steps += 1;
            let mut grad = (&quad * &v - b.scale(two)).scale(tau);
            let mut hess = quad.scale(tau);
            for (i, m) in x.iter().enumerate() {
                let inv = linalg::inverse_hpd(m).ok()?;
                let (o, n2) = (layout.offsets[i], layout.sizes[i] * layout.sizes[i]);
                let mut g = grad.rows_mut(o, n2);
                g -= herm_to_real(&inv);
                let mut h = hess.view_mut((o, o), (n2, n2));
                h += logdet_hessian(&inv);
            }
            for (ak, c) in a.iter().zip(&qp.constraints) {
                let s = c.bound - ak.dot(&v);
                grad += ak.unscale(s);
                hess.ger(T::one() / (s * s), ak, ak, T::one());
            }
            let chol = hess.cholesky()?;
            let step = -chol.solve(&grad);
            let dec = -grad.dot(&step);
            if dec * T::lit(0.5) <= center_tol {
                break;
            }
            let phi0 = barrier_value(qp, &a, &v, &x, tau)?;
            let mut alpha = T::one();
            let mut moved = false;
            for _ in 0..50 {
                let vn = &v + step.scale(alpha);
                let xn = layout.unpack(&vn);
                if let Some(phi) = barrier_value(qp, &a, &vn, &xn, tau) {
                    if phi <= phi0 - T::lit(0.25) * alpha * dec {
                        v = vn;
                        x = xn;
                        moved = true;
                        break;
                    }
                }
                alpha *= T::lit(0.5);
            }
            if !moved {
                break;
            }
        }
        if last || steps >= settings.max_newton {
            break;
        }
        tau = (tau * settings.growth).min(nu / settings.gap);
    }
    Some((
        x,
        BarrierReport {
            newton_steps: steps,
            gap: (nu / tau).as_f64(),
        },
    ))
}
