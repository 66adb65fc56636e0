//! Operator splitting for strictly convex quadratics over products of PSD
//! cones with a few coupled linear inequalities.
//!
//! The problem is
//!
//! ```text
//! minimize   coupling ||sum_i X_i||^2 + prox sum_i ||X_i||^2 - 2 sum_i Re Tr(B_i X_i)
//! subject to X_i >= 0,  sum_i Re Tr(D_ki X_i) <= d_k
//! ```
//!
//! The ADMM x-step keeps the quadratic and the linear inequalities (a tiny
//! complementarity problem in the multipliers), the z-step projects each
//! block onto the PSD cone.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, CMatrix, KernelError};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct LinearConstraint<T: Real> {
    /// One Hermitian coefficient matrix per block.
    pub coeffs: Vec<CMatrix<T>>,
    pub bound: T,
}

impl<T: Real> LinearConstraint<T> {
    pub fn eval(&self, x: &[CMatrix<T>]) -> T {
        self.coeffs
            .iter()
            .zip(x)
            .fold(T::zero(), |a, (d, x)| a + linalg::frob_inner(d, x))
    }

    /// `bound - eval(x)`; nonnegative when satisfied.
    pub fn slack(&self, x: &[CMatrix<T>]) -> T {
        self.bound - self.eval(x)
    }
}

#[derive(Debug, Clone)]
pub struct BlockQp<T: Real> {
    pub coupling: T,
    pub prox: T,
    pub targets: Vec<CMatrix<T>>,
    pub constraints: Vec<LinearConstraint<T>>,
}

impl<T: Real> BlockQp<T> {
    pub fn objective(&self, x: &[CMatrix<T>]) -> T {
        let mut lin = T::zero();
        let mut sq = T::zero();
        for (b, x) in self.targets.iter().zip(x) {
            lin += linalg::frob_inner(b, x);
            sq += linalg::frob_norm_sq(x);
        }
        let mut v = self.prox * sq - (lin + lin);
        if self.coupling != T::zero() {
            let n = x[0].nrows();
            let total = x.iter().fold(linalg::zeros(n, n), |a, m| a + m);
            v += self.coupling * linalg::frob_norm_sq(&total);
        }
        v
    }

    /// Largest constraint violation (zero when feasible).
    pub fn max_violation(&self, x: &[CMatrix<T>]) -> T {
        self.constraints
            .iter()
            .fold(T::zero(), |a, c| a.max(-c.slack(x)))
    }

    /// Solves `(2C + sigma I) x = r` using the structure of `C`.
    fn shifted_solve(&self, r: &[CMatrix<T>], sigma: T) -> Vec<CMatrix<T>> {
        let a = self.prox + self.prox + sigma;
        if self.coupling == T::zero() {
            return r.iter().map(|m| m.unscale(a)).collect();
        }
        let n = r[0].nrows();
        let two_c = self.coupling + self.coupling;
        let total = r.iter().fold(linalg::zeros(n, n), |acc, m| acc + m);
        let xbar = total.unscale(a + two_c * T::lit(r.len() as f64));
        r.iter()
            .map(|m| (m - xbar.scale(two_c)).unscale(a))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdmmSettings<T: Real> {
    pub eps: T,
    pub max_iters: usize,
    pub relaxation: T,
    pub adapt_every: usize,
}

impl<T: Real> AdmmSettings<T> {
    pub fn with_eps(eps: T) -> Self {
        AdmmSettings {
            eps,
            max_iters: 20_000,
            relaxation: T::lit(1.6),
            adapt_every: 10,
        }
    }
}

/// Iterate carried between calls for warm starts.
#[derive(Debug, Clone)]
pub struct AdmmState<T: Real> {
    pub z: Vec<CMatrix<T>>,
    pub u: Vec<CMatrix<T>>,
    pub sigma: T,
}

impl<T: Real> AdmmState<T> {
    pub fn from_point(z: Vec<CMatrix<T>>) -> Self {
        let u = z
            .iter()
            .map(|m| linalg::zeros(m.nrows(), m.ncols()))
            .collect();
        AdmmState {
            z,
            u,
            sigma: T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdmmReport {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

struct Multipliers<T: Real> {
    w: Vec<Vec<CMatrix<T>>>,
    p: DMatrix<T>,
}

fn block_inner<T: Real>(a: &[CMatrix<T>], b: &[CMatrix<T>]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + linalg::frob_inner(x, y))
}

fn block_norm<T: Real>(a: &[CMatrix<T>]) -> T {
    a.iter()
        .fold(T::zero(), |acc, x| acc + linalg::frob_norm_sq(x))
        .sqrt()
}

fn multipliers<T: Real>(qp: &BlockQp<T>, sigma: T) -> Multipliers<T> {
    let w: Vec<Vec<CMatrix<T>>> = qp
        .constraints
        .iter()
        .map(|c| qp.shifted_solve(&c.coeffs, sigma))
        .collect();
    let k = w.len();
    let mut p = DMatrix::zeros(k, k);
    for r in 0..k {
        for c in 0..k {
            p[(r, c)] = block_inner(&qp.constraints[r].coeffs, &w[c]);
        }
    }
    let p = (&p + p.transpose()).scale(T::lit(0.5));
    Multipliers { w, p }
}

/// Nonnegative `lambda` with `P lambda - q >= 0` and complementarity, i.e. the
/// minimizer of `lambda^T P lambda / 2 - q^T lambda` over the orthant.
pub(crate) fn solve_lcp<T: Real>(p: &DMatrix<T>, q: &DVector<T>) -> DVector<T> {
    let k = q.len();
    let scale = p.iter().fold(T::one(), |a, &x| a.max(x.abs())) * T::one().max(q.amax());
    let tol = T::tol(1e-12) * scale;
    if q.iter().all(|&x| x <= T::zero()) {
        return DVector::zeros(k);
    }
    if k <= 10 {
        let mut best: Option<(usize, DVector<T>)> = None;
        for mask in 1u32..(1 << k) {
            let idx: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).collect();
            if best.as_ref().is_some_and(|(n, _)| *n <= idx.len()) {
                continue;
            }
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| p[(idx[r], idx[c])]);
            let rhs = DVector::from_fn(idx.len(), |r, _| q[idx[r]]);
            let Some(sol) = sub.lu().solve(&rhs) else {
                continue;
            };
            if sol.iter().any(|&x| x < -tol || !x.is_finite()) {
                continue;
            }
            let mut lam = DVector::zeros(k);
            for (r, &i) in idx.iter().enumerate() {
                lam[i] = sol[r].max(T::zero());
            }
            let res = p * &lam - q;
            if res.iter().all(|&x| x >= -tol) {
                best = Some((idx.len(), lam));
            }
        }
        if let Some((_, lam)) = best {
            return lam;
        }
    }
    projected_gauss_seidel(p, q)
}

fn projected_gauss_seidel<T: Real>(p: &DMatrix<T>, q: &DVector<T>) -> DVector<T> {
    let k = q.len();
    let mut lam = DVector::zeros(k);
    for _ in 0..5000 {
        let mut change = T::zero();
        for i in 0..k {
            if p[(i, i)] <= T::zero() {
                continue;
            }
            let r = q[i] - (p.row(i) * &lam)[0] + p[(i, i)] * lam[i];
            let next = (r / p[(i, i)]).max(T::zero());
            change = change.max((next - lam[i]).abs());
            lam[i] = next;
        }
        if change <= T::tol(1e-15) * T::one().max(lam.amax()) {
            break;
        }
    }
    lam
}

/// Runs ADMM from `state` and leaves the final iterate in it. The returned
/// point is `state.z`: exactly PSD, linear constraints met to `eps`.
pub fn solve_block_qp<T: Real>(
    qp: &BlockQp<T>,
    state: &mut AdmmState<T>,
    settings: &AdmmSettings<T>,
) -> Result<AdmmReport, KernelError> {
    let nb = qp.targets.len();
    let k = qp.constraints.len();
    let mut sigma = state.sigma;
    let mut mult = multipliers(qp, sigma);
    let alpha = settings.relaxation;
    let one = T::one();
    let mut report = AdmmReport {
        iterations: 0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        converged: false,
    };
    let two = T::lit(2.0);
    for it in 1..=settings.max_iters {
        let rhs: Vec<CMatrix<T>> = (0..nb)
            .map(|i| qp.targets[i].scale(two) + (&state.z[i] - &state.u[i]).scale(sigma))
            .collect();
        let mut x = qp.shifted_solve(&rhs, sigma);
        if k > 0 {
            let q = DVector::from_fn(k, |r, _| {
                qp.constraints[r].eval(&x) - qp.constraints[r].bound
            });
            let lam = solve_lcp(&mult.p, &q);
            for (r, &l) in lam.iter().enumerate() {
                if l > T::zero() {
                    for i in 0..nb {
                        x[i] -= mult.w[r][i].scale(l);
                    }
                }
            }
        }
        let mut z_new = Vec::with_capacity(nb);
        let mut dz = T::zero();
        let mut rp = T::zero();
        for i in 0..nb {
            let xh = x[i].scale(alpha) + state.z[i].scale(one - alpha);
            let zi = linalg::psd_clip(&(&xh + &state.u[i]), T::zero())?;
            state.u[i] += &xh - &zi;
            dz += linalg::frob_norm_sq(&(&zi - &state.z[i]));
            rp += linalg::frob_norm_sq(&(&x[i] - &zi));
            z_new.push(zi);
        }
        state.z = z_new;
        let rp = rp.sqrt();
        let rd = sigma * dz.sqrt();
        let xn = block_norm(&x).max(block_norm(&state.z));
        let un = sigma * block_norm(&state.u);
        report = AdmmReport {
            iterations: it,
            primal_residual: rp.as_f64(),
            dual_residual: rd.as_f64(),
            converged: false,
        };
        let eps = settings.eps;
        if rp <= eps * (one + xn) && rd <= eps * (one + un) {
            report.converged = true;
            break;
        }
        if it % settings.adapt_every == 0 {
            let pr = rp / (one + xn);
            let dr = rd / (one + un);
            if pr > T::zero() && dr > T::zero() {
                let ratio = (pr / dr).sqrt();
                if ratio > T::lit(5.0) || ratio < T::lit(0.2) {
                    let next = (sigma * ratio).max(T::tol(1e-8)).min(T::lit(1e8));
                    let f = sigma / next;
                    for u in state.u.iter_mut() {
                        *u = u.scale(f);
                    }
                    sigma = next;
                    mult = multipliers(qp, sigma);
                }
            }
        }
    }
    state.sigma = sigma;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cplx, creal, identity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_herm(rng: &mut impl Rng, n: usize) -> CMatrix<f64> {
        let a = CMatrix::from_fn(n, n, |_, _| {
            cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        linalg::hermitian_part(&a)
    }

    #[test]
    fn lcp_small_cases() {
        let p = DMatrix::<f64>::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let lam = solve_lcp(&p, &DVector::from_vec(vec![-1.0, -2.0]));
        assert_eq!(lam.amax(), 0.0);
        let lam = solve_lcp(&p, &DVector::from_vec(vec![2.0, -5.0]));
        assert!((lam[0] - 1.0).abs() < 1e-14 && lam[1] == 0.0);
        let q = DVector::from_vec(vec![1.0, 1.0]);
        let lam = solve_lcp(&p, &q);
        let res = &p * &lam - &q;
        assert!(res.amax() < 1e-12 && lam.min() >= 0.0);
        let pgs = projected_gauss_seidel(&p, &q);
        assert!((pgs - lam).amax() < 1e-10);
    }

    #[test]
    fn unconstrained_optimum_is_returned() {
        // prox = 1, target B: optimum X = B when B is PSD
        let b = CMatrix::from_row_slice(
            2,
            2,
            &[creal(0.4), cplx(0.1, 0.1), cplx(0.1, -0.1), creal(0.3)],
        );
        let qp = BlockQp {
            coupling: 0.0,
            prox: 1.0,
            targets: vec![b.clone()],
            constraints: vec![LinearConstraint {
                coeffs: vec![identity(2)],
                bound: 1.0,
            }],
        };
        let mut st = AdmmState::from_point(vec![linalg::zeros(2, 2)]);
        let rep = solve_block_qp(&qp, &mut st, &AdmmSettings::with_eps(1e-10)).unwrap();
        assert!(rep.converged);
        assert!((&st.z[0] - b).norm() < 1e-8);
    }

    #[test]
    fn projection_onto_trace_ball_matches_waterfilling() {
        // prox = 1, target Y: X = Proj(Y) onto {X >= 0, Tr X <= 1}
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = rand_herm(&mut rng, 3).scale(4.0) + identity::<f64>(3);
        let qp = BlockQp {
            coupling: 0.0,
            prox: 1.0,
            targets: vec![y.clone()],
            constraints: vec![LinearConstraint {
                coeffs: vec![identity(3)],
                bound: 1.0,
            }],
        };
        let mut st = AdmmState::from_point(vec![linalg::zeros(3, 3)]);
        solve_block_qp(&qp, &mut st, &AdmmSettings::with_eps(1e-11)).unwrap();
        // oracle: bisection on the eigenvalue shift
        let e = linalg::hermitian_evd(&y).unwrap();
        let (mut lo, mut hi) = (0.0, e.max());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let t: f64 = e.values.iter().map(|&l| (l - mid).max(0.0)).sum();
            if t > 1.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let oracle = e.rebuild_with(|l| (l - hi).max(0.0));
        assert!((&st.z[0] - oracle).norm() < 1e-7);
    }
}
