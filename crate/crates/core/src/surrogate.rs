//! Minorizers used by the MM solvers.
//!
//! Every information rate splits as `R_i = s_i(S_bar) - g_i(S_{-i})` with
//! both terms concave log-determinants. The interference term `g_i` is
//! bounded above by its tangent plane, and `s_i` below by a quadratic with
//! scalar curvature `gamma_i = sigma_max(H_i)^4 / 2`.

use nalgebra::DVector;
use thiserror::Error;

use crate::linalg::{self, CMatrix, CVector};
use crate::model::{self, CovarianceTuple, ModelError, Scenario};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("quadratic subproblem is not strictly convex (smallest curvature {min_eigenvalue:e}); use a positive proximal weight")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<linalg::KernelError> for SurrogateError {
    fn from(e: linalg::KernelError) -> Self {
        SurrogateError::Model(e.into())
    }
}

/// Tangent plane of `g_i = ln det(Omega_i)` at `s0`, returned as `(R_i, offset)`
/// with `g_i(S) <= Tr(R_i S_{-i}) + offset` and equality at `s0`.
pub fn linear_bound_g<T: Real>(
    sc: &Scenario<T>,
    s0: &CovarianceTuple<T>,
    i: usize,
) -> Result<(CMatrix<T>, T), ModelError> {
    let om = model::interference_covariance(sc, s0, i)?;
    let inv = linalg::inverse_hpd(&om)?;
    let h = sc.info_channel(i);
    let r = linalg::hermitian_part(&(h.adjoint() * &inv * h));
    let offset = linalg::logdet_hpd(&om)? + linalg::trace_re(&inv) - T::lit(h.nrows() as f64);
    Ok((r, offset))
}

/// Minimal curvature of the quadratic minorizer of `s_i`: `sigma_max(H)^4 / 2`.
pub fn gamma_coefficient<T: Real>(h: &CMatrix<T>) -> T {
    let s2 = linalg::max_singular_value(h).powi(2);
    T::lit(0.5) * s2 * s2
}

/// Per-user curvature of the decoupled minorizer: `N^2 sigma_max(H)^4 / 2`.
pub fn xi_coefficient<T: Real>(h: &CMatrix<T>, n_users: usize) -> T {
    let n = T::lit(n_users as f64);
    n * n * gamma_coefficient(h)
}

/// `H^H (I + H X H^H)^{-1} H`, the gradient of `ln det(I + H X H^H)`.
fn log_det_gradient<T: Real>(h: &CMatrix<T>, x: &CMatrix<T>) -> Result<CMatrix<T>, ModelError> {
    let a = linalg::identity::<T>(h.nrows()) + h * x * h.adjoint();
    Ok(linalg::hermitian_part(
        &(h.adjoint() * linalg::inverse_hpd(&a)? * h),
    ))
}

/// Quadratic minorizer of the weighted sum rate around `expansion`:
///
/// `sum_i omega_i (Tr(E_i S_bar) - gamma_i ||S_bar||^2 + Tr(R_i S_i) + kappa2_i)
///  - rho sum_i ||S_i - S0_i||^2`.
#[derive(Debug, Clone)]
pub struct HybridSurrogate<T: Real> {
    pub g: Vec<CMatrix<T>>,
    pub r: Vec<CMatrix<T>>,
    pub j: Vec<CMatrix<T>>,
    pub e: Vec<CMatrix<T>>,
    pub gamma: Vec<T>,
    pub omega: Vec<T>,
    pub expansion: CovarianceTuple<T>,
    pub rho: T,
    /// Constant of the `s_i` minorizer.
    pub kappa1: Vec<T>,
    /// `kappa1_i` minus the tangent-plane offset of `g_i`.
    pub kappa2: Vec<T>,
}

pub fn hybrid_surrogate<T: Real>(
    sc: &Scenario<T>,
    s0: &CovarianceTuple<T>,
    rho: T,
) -> Result<HybridSurrogate<T>, ModelError> {
    let gamma = (0..sc.n_info())
        .map(|i| gamma_coefficient(sc.info_channel(i)))
        .collect();
    hybrid_surrogate_with_curvature(sc, s0, rho, gamma)
}

/// Like [`hybrid_surrogate`] with explicit curvatures. Values below the
/// minimal admissible ones do not give a valid minorizer.
pub fn hybrid_surrogate_with_curvature<T: Real>(
    sc: &Scenario<T>,
    s0: &CovarianceTuple<T>,
    rho: T,
    gamma: Vec<T>,
) -> Result<HybridSurrogate<T>, ModelError> {
    if !(rho >= T::zero()) {
        return Err(ModelError::Parameter(
            "proximal weight must be nonnegative".into(),
        ));
    }
    if gamma.len() != sc.n_info() {
        return Err(ModelError::Dimension(
            "one curvature per information user".into(),
        ));
    }
    let sbar = s0.sum();
    let nsq = linalg::frob_norm_sq(&sbar);
    let n = sc.n_info();
    let (mut g, mut r, mut j, mut e) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    let mut kappa1 = Vec::with_capacity(n);
    let mut kappa2 = Vec::with_capacity(n);
    for i in 0..n {
        let h = sc.info_channel(i);
        let gi = log_det_gradient(h, &sbar)?;
        let (ri, offset) = linear_bound_g(sc, s0, i)?;
        let ji = &gi + sbar.scale(gamma[i] + gamma[i]);
        let (si, _) = model::rate_decomposition(sc, s0, i)?;
        let k1 = si - linalg::frob_inner(&gi, &sbar) - gamma[i] * nsq;
        kappa1.push(k1);
        kappa2.push(k1 - offset);
        e.push(&ji - &ri);
        g.push(gi);
        r.push(ri);
        j.push(ji);
    }
    Ok(HybridSurrogate {
        g,
        r,
        j,
        e,
        gamma,
        omega: sc.omega.clone(),
        expansion: s0.clone(),
        rho,
        kappa1,
        kappa2,
    })
}

impl<T: Real> HybridSurrogate<T> {
    pub fn value(&self, s: &CovarianceTuple<T>) -> T {
        let sbar = s.sum();
        let nsq = linalg::frob_norm_sq(&sbar);
        let mut v = T::zero();
        for i in 0..self.omega.len() {
            v += self.omega[i]
                * (linalg::frob_inner(&self.e[i], &sbar) - self.gamma[i] * nsq
                    + linalg::frob_inner(&self.r[i], &s.mats[i])
                    + self.kappa2[i]);
        }
        v - self.rho * s.dist_sq(&self.expansion)
    }

    /// Gradient of [`HybridSurrogate::value`] with respect to each `S_l`.
    pub fn gradient(&self, s: &CovarianceTuple<T>) -> CovarianceTuple<T> {
        let sbar = s.sum();
        let n = sbar.nrows();
        let common = (0..self.omega.len()).fold(linalg::zeros(n, n), |acc, i| {
            acc + (&self.e[i] - sbar.scale(self.gamma[i] + self.gamma[i])).scale(self.omega[i])
        });
        let two_rho = self.rho + self.rho;
        CovarianceTuple::new(
            (0..self.omega.len())
                .map(|l| {
                    &common + self.r[l].scale(self.omega[l])
                        - (&s.mats[l] - &self.expansion.mats[l]).scale(two_rho)
                })
                .collect(),
        )
    }

    /// `sum_i omega_i gamma_i`.
    pub fn weighted_curvature(&self) -> T {
        self.omega
            .iter()
            .zip(&self.gamma)
            .fold(T::zero(), |a, (&w, &g)| a + w * g)
    }
}

/// Decoupled quadratic minorizer of the weighted-sum objective:
/// `sum_i Tr(F_i S_i) - beta sum_i ||S_i||^2 + kappa`.
#[derive(Debug, Clone)]
pub struct SumSurrogate<T: Real> {
    pub f: Vec<CMatrix<T>>,
    pub beta: T,
    pub r_h: CMatrix<T>,
    pub expansion: CovarianceTuple<T>,
    pub kappa: T,
}

pub fn sum_surrogate<T: Real>(
    sc: &Scenario<T>,
    s0: &CovarianceTuple<T>,
) -> Result<SumSurrogate<T>, ModelError> {
    let n = sc.n_info();
    let nt = sc.n_tx();
    let sbar = s0.sum();
    let beta = (0..n).fold(T::zero(), |a, k| {
        a + sc.omega[k] * xi_coefficient(sc.info_channel(k), n)
    });
    let r_h = sc.weighted_harvest_gram();
    let mut g_check = linalg::zeros(nt, nt);
    let mut wr = Vec::with_capacity(n);
    let mut kappa = T::zero();
    for k in 0..n {
        let h = sc.info_channel(k);
        let gk = log_det_gradient(h, &sbar)?;
        let (rk, offset) = linear_bound_g(sc, s0, k)?;
        let (sk, _) = model::rate_decomposition(sc, s0, k)?;
        kappa += sc.omega[k] * (sk - linalg::frob_inner(&gk, &sbar) - offset);
        g_check += gk.scale(sc.omega[k]);
        wr.push(rk.scale(sc.omega[k]));
    }
    kappa -= beta * s0.norm_sq();
    let wr_total = wr.iter().fold(linalg::zeros(nt, nt), |a, m| a + m);
    let f = (0..n)
        .map(|i| {
            let others = &wr_total - &wr[i];
            linalg::hermitian_part(&(&g_check + s0.mats[i].scale(beta + beta) - others + &r_h))
        })
        .collect();
    Ok(SumSurrogate {
        f,
        beta,
        r_h,
        expansion: s0.clone(),
        kappa,
    })
}

impl<T: Real> SumSurrogate<T> {
    pub fn value(&self, s: &CovarianceTuple<T>) -> T {
        let lin = self
            .f
            .iter()
            .zip(&s.mats)
            .fold(T::zero(), |a, (f, x)| a + linalg::frob_inner(f, x));
        lin - self.beta * s.norm_sq() + self.kappa
    }

    pub fn gradient(&self, s: &CovarianceTuple<T>) -> CovarianceTuple<T> {
        let two_beta = self.beta + self.beta;
        CovarianceTuple::new(
            self.f
                .iter()
                .zip(&s.mats)
                .map(|(f, x)| f - x.scale(two_beta))
                .collect(),
        )
    }
}

/// Convex program solved once per outer iteration of the hybrid solver:
///
/// minimize `s^H C s - 2 Re(b^H s)` over the stacked `s = (vec S_1, ..., vec S_N)`
/// subject to `S_i >= 0`, power and harvest constraints, where
/// `C = gamma_tilde (11^T (x) I) + rho I` and `b_i = vec(B_i)`.
///
/// Up to a constant this is `||C^{1/2} s - c||^2` with `c = C^{-1/2} b`.
#[derive(Debug, Clone)]
pub struct QuadSubproblem<T: Real> {
    pub n_tx: usize,
    pub gamma_tilde: T,
    pub rho: T,
    /// Hermitian `B_i`.
    pub targets: Vec<CMatrix<T>>,
    pub power: T,
    /// `H_j^H H_j` of every harvesting user.
    pub harvest_grams: Vec<CMatrix<T>>,
    pub q: Vec<T>,
}

pub fn build_quad_subproblem<T: Real>(
    hs: &HybridSurrogate<T>,
    sc: &Scenario<T>,
) -> Result<QuadSubproblem<T>, SurrogateError> {
    let n = sc.n_info();
    let nt = sc.n_tx();
    let gamma_tilde = hs.weighted_curvature();
    let e_tilde = (0..n).fold(linalg::zeros(nt, nt), |a, k| a + hs.e[k].scale(hs.omega[k]));
    let half = T::lit(0.5);
    let targets = (0..n)
        .map(|i| {
            let a = &e_tilde + hs.r[i].scale(hs.omega[i]);
            linalg::hermitian_part(&(a.scale(half) + hs.expansion.mats[i].scale(hs.rho)))
        })
        .collect();
    let qp = QuadSubproblem {
        n_tx: nt,
        gamma_tilde,
        rho: hs.rho,
        targets,
        power: sc.power,
        harvest_grams: (0..sc.n_harvest()).map(|j| sc.harvest_gram(j)).collect(),
        q: sc.q.clone(),
    };
    let lmin = qp.min_curvature();
    if !(lmin > T::zero()) {
        return Err(SurrogateError::NotPositiveDefinite {
            min_eigenvalue: lmin.as_f64(),
        });
    }
    Ok(qp)
}

impl<T: Real> QuadSubproblem<T> {
    pub fn n_users(&self) -> usize {
        self.targets.len()
    }

    /// Smallest eigenvalue of `C`: `rho` on differences between users and
    /// `N gamma_tilde + rho` on their common part.
    pub fn min_curvature(&self) -> T {
        let common = T::lit(self.n_users() as f64) * self.gamma_tilde + self.rho;
        if self.n_users() > 1 {
            common.min(self.rho)
        } else {
            common
        }
    }

    /// `s^H C s - 2 Re(b^H s)`.
    pub fn objective(&self, s: &CovarianceTuple<T>) -> T {
        let lin = self
            .targets
            .iter()
            .zip(&s.mats)
            .fold(T::zero(), |a, (b, x)| a + linalg::frob_inner(b, x));
        self.gamma_tilde * linalg::frob_norm_sq(&s.sum()) + self.rho * s.norm_sq() - (lin + lin)
    }

    pub fn stacked_target(&self) -> CVector<T> {
        stack(&self.targets)
    }

    /// Dense `C` of size `n_T^2 N`.
    pub fn c_tilde(&self) -> CMatrix<T> {
        let n = self.n_users();
        let m = self.n_tx * self.n_tx;
        let ones = CMatrix::from_element(n, n, linalg::creal(self.gamma_tilde));
        linalg::kron(&ones, &linalg::identity::<T>(m))
            + linalg::identity::<T>(n * m).scale(self.rho)
    }

    /// Dense `C^{1/2}` in closed form from the two-eigenvalue structure of `C`.
    pub fn c_tilde_sqrt(&self) -> CMatrix<T> {
        let n = self.n_users();
        let m = self.n_tx * self.n_tx;
        let nn = T::lit(n as f64);
        let lo = self.rho.sqrt();
        let hi = (nn * self.gamma_tilde + self.rho).sqrt();
        let mean = CMatrix::from_element(n, n, linalg::creal(T::one() / nn));
        linalg::kron(&mean, &linalg::identity::<T>(m)).scale(hi - lo)
            + linalg::identity::<T>(n * m).scale(lo)
    }

    /// `c = C^{-1/2} b`.
    pub fn c_vector(&self) -> CVector<T> {
        let n = self.n_users();
        let nn = T::lit(n as f64);
        let hi = T::one() / (nn * self.gamma_tilde + self.rho).sqrt();
        let mean = self
            .targets
            .iter()
            .fold(linalg::zeros(self.n_tx, self.n_tx), |a, b| a + b)
            .unscale(nn);
        let blocks: Vec<CMatrix<T>> = if n == 1 {
            vec![mean.scale(hi)]
        } else {
            let lo = T::one() / self.rho.sqrt();
            self.targets
                .iter()
                .map(|b| b.scale(lo) + mean.scale(hi - lo))
                .collect()
        };
        stack(&blocks)
    }

    /// `||C^{1/2} s - c||^2`, equal to [`QuadSubproblem::objective`] plus
    /// `c^H c`.
    pub fn residual_norm_sq(&self, s: &CovarianceTuple<T>) -> T {
        let r = self.c_tilde_sqrt() * stack(&s.mats) - self.c_vector();
        r.norm_squared()
    }

    /// Largest deviation between `-objective` and the surrogate value across
    /// `points`, after removing the constant difference at the first point.
    /// Zero (to rounding) when the subproblem faithfully encodes `hs`.
    pub fn equivalence_gap(&self, hs: &HybridSurrogate<T>, points: &[CovarianceTuple<T>]) -> T {
        let diff = |s: &CovarianceTuple<T>| hs.value(s) + self.residual_norm_sq(s);
        let Some(first) = points.first() else {
            return T::zero();
        };
        let d0 = diff(first);
        points
            .iter()
            .fold(T::zero(), |a, s| a.max((diff(s) - d0).abs()))
    }
}

fn stack<T: Real>(blocks: &[CMatrix<T>]) -> CVector<T> {
    let parts: Vec<CVector<T>> = blocks.iter().map(linalg::vec).collect();
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(&p);
        at += p.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cplx, creal, identity};
    use crate::model::{generate_channels, ChannelSet, Formulation, UserPartition};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_psd(rng: &mut impl Rng, n: usize, scale: f64) -> CMatrix<f64> {
        let a = CMatrix::from_fn(n, n, |_, _| {
            cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        (&a * a.adjoint()).scale(scale)
    }

    fn scenario(seed: u64, nt: usize, n: usize, m: usize) -> Scenario<f64> {
        let ch = generate_channels::<f64>(seed, nt, &vec![2; n + m], &vec![1.0; n + m]).unwrap();
        Scenario::new(ch, UserPartition::contiguous(n, m), 1.0)
            .unwrap()
            .with_alpha(vec![1.5; m])
            .unwrap()
    }

    fn identity_channel_scenario() -> Scenario<f64> {
        let ch = ChannelSet::new(2, vec![identity(2), identity(2)]).unwrap();
        Scenario::new(ch, UserPartition::contiguous(1, 1), 1.0).unwrap()
    }

    #[test]
    fn linear_bound_single_user_is_gram() {
        let sc = scenario(1, 3, 1, 0);
        let (r, offset) = linear_bound_g(&sc, &CovarianceTuple::zeros(3, 1), 0).unwrap();
        let h = sc.info_channel(0);
        assert!((r - h.adjoint() * h).norm() < 1e-12);
        assert!(offset.abs() < 1e-12);
    }

    #[test]
    fn linear_bound_dominates_interference_term() {
        let sc = scenario(2, 3, 2, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s0 = CovarianceTuple::new(vec![rand_psd(&mut rng, 3, 0.5), rand_psd(&mut rng, 3, 0.5)]);
        for i in 0..2 {
            let (r, offset) = linear_bound_g(&sc, &s0, i).unwrap();
            let g = |s: &CovarianceTuple<f64>| model::rate_decomposition(&sc, s, i).unwrap().1;
            let bound =
                |s: &CovarianceTuple<f64>| linalg::frob_inner(&r, &s.sum_except(i)) + offset;
            assert!((bound(&s0) - g(&s0)).abs() < 1e-12);
            for _ in 0..500 {
                let s = CovarianceTuple::new(vec![
                    rand_psd(&mut rng, 3, 2.0),
                    rand_psd(&mut rng, 3, 2.0),
                ]);
                assert!(bound(&s) - g(&s) >= -1e-10);
            }
        }
    }

    #[test]
    fn curvature_examples() {
        assert_eq!(gamma_coefficient(&identity::<f64>(3)), 0.5);
        let mut d = identity::<f64>(2);
        d[(1, 1)] = creal(2.0);
        assert!((gamma_coefficient(&d) - 8.0).abs() < 1e-12);
        assert_eq!(xi_coefficient(&identity::<f64>(2), 1), 0.5);
        assert!((xi_coefficient(&identity::<f64>(2), 3) - 4.5).abs() < 1e-15);
        let sc = scenario(3, 4, 1, 0);
        let h = sc.info_channel(0);
        assert!(
            (xi_coefficient(h, 3) - 9.0 * gamma_coefficient(h)).abs()
                < 1e-12 * xi_coefficient(h, 3)
        );
    }

    #[test]
    fn gamma_matches_power_iteration() {
        let sc = scenario(4, 5, 1, 0);
        let h = sc.info_channel(0);
        let g = h.adjoint() * h;
        let mut v = CVector::<f64>::from_element(5, creal(1.0));
        let mut lam = 0.0;
        for _ in 0..2000 {
            let w = &g * &v;
            lam = w.norm() / v.norm();
            v = w.unscale(w.norm());
        }
        let oracle = 0.5 * lam * lam;
        assert!((gamma_coefficient(h) - oracle).abs() <= 1e-9 * oracle);
    }

    #[test]
    fn hybrid_surrogate_at_zero_identity() {
        let sc = identity_channel_scenario();
        let hs = hybrid_surrogate(&sc, &CovarianceTuple::zeros(2, 1), 0.0).unwrap();
        let i2 = identity::<f64>(2);
        assert!((&hs.g[0] - &i2).norm() < 1e-15);
        assert!((&hs.j[0] - &i2).norm() < 1e-15);
        assert!((&hs.r[0] - &i2).norm() < 1e-15);
        assert!(hs.e[0].norm() < 1e-15);
    }

    #[test]
    fn curvature_override_scales_quadratic_only() {
        let sc = scenario(5, 3, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s0 = CovarianceTuple::new(vec![rand_psd(&mut rng, 3, 0.2), rand_psd(&mut rng, 3, 0.2)]);
        let a = hybrid_surrogate(&sc, &s0, 0.0).unwrap();
        let doubled = a.gamma.iter().map(|g| 2.0 * g).collect();
        let b = hybrid_surrogate_with_curvature(&sc, &s0, 0.0, doubled).unwrap();
        for i in 0..2 {
            assert!((&a.g[i] - &b.g[i]).norm() < 1e-14);
            assert!((b.gamma[i] - 2.0 * a.gamma[i]).abs() < 1e-14);
        }
        let s = CovarianceTuple::new(vec![rand_psd(&mut rng, 3, 0.3), rand_psd(&mut rng, 3, 0.3)]);
        let quad = |h: &HybridSurrogate<f64>| {
            let d = s.sum() - s0.sum();
            h.omega
                .iter()
                .zip(&h.gamma)
                .map(|(w, g)| w * g)
                .sum::<f64>()
                * linalg::frob_norm_sq(&d)
        };
        let true_obj = model::objective(&sc, &s, Formulation::Hybrid).unwrap();
        // a larger curvature only loosens the bound
        assert!(b.value(&s) <= a.value(&s) + 1e-12);
        assert!((a.value(&s) - b.value(&s) - quad(&a)).abs() < 1e-9);
        assert!(b.value(&s) <= true_obj + 1e-9);
    }

    #[test]
    fn hybrid_surrogate_is_tangent() {
        let sc = scenario(6, 4, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s0 = CovarianceTuple::new((0..3).map(|_| rand_psd(&mut rng, 4, 0.1)).collect());
        let hs = hybrid_surrogate(&sc, &s0, 0.3).unwrap();
        let f0 = model::objective(&sc, &s0, Formulation::Hybrid).unwrap();
        assert!((hs.value(&s0) - f0).abs() < 1e-9);
        for i in 0..3 {
            assert!((&hs.e[i] - (&hs.j[i] - &hs.r[i])).norm() == 0.0);
            assert!(linalg::hermitian_deviation(&hs.e[i]) < 1e-12);
        }
    }

    #[test]
    fn sum_surrogate_identity_example() {
        let sc = identity_channel_scenario();
        let ss = sum_surrogate(&sc, &CovarianceTuple::zeros(2, 1)).unwrap();
        assert!((ss.beta - 0.5).abs() < 1e-15);
        assert!((&ss.f[0] - identity::<f64>(2)).norm() < 1e-15);
    }

    #[test]
    fn sum_surrogate_pure_harvesting() {
        let sc = scenario(7, 3, 2, 1)
            .with_omega(vec![0.0, 0.0])
            .unwrap()
            .with_alpha(vec![1.0])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s0 = CovarianceTuple::new(vec![rand_psd(&mut rng, 3, 0.1), rand_psd(&mut rng, 3, 0.1)]);
        let ss = sum_surrogate(&sc, &s0).unwrap();
        assert_eq!(ss.beta, 0.0);
        for f in &ss.f {
            assert!((f - sc.harvest_gram(0)).norm() < 1e-12);
        }
    }

    #[test]
    fn sum_surrogate_beta_formula() {
        let sc = scenario(8, 4, 3, 1)
            .with_omega(vec![1.0, 0.5, 2.0])
            .unwrap();
        let ss = sum_surrogate(&sc, &CovarianceTuple::scaled_identity(4, 3, 1.0)).unwrap();
        let expect: f64 = (0..3)
            .map(|k| {
                let h = sc.info_channel(k);
                let lmax = linalg::lambda_max(&(h.adjoint() * h)).unwrap();
                0.5 * 9.0 * sc.omega[k] * lmax * lmax
            })
            .sum();
        assert!((ss.beta - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn quad_subproblem_single_user_curvature() {
        let sc = scenario(9, 2, 1, 0);
        let hs = hybrid_surrogate(&sc, &CovarianceTuple::zeros(2, 1), 0.0).unwrap();
        let qp = build_quad_subproblem(&hs, &sc).unwrap();
        let c = qp.c_tilde();
        assert_eq!(c.nrows(), 4);
        assert!((c - identity::<f64>(4).scale(hs.gamma[0])).norm() < 1e-12);
        assert_eq!(qp.c_vector().len(), 4);
    }

    #[test]
    fn quad_subproblem_requires_proximal_weight() {
        let sc = scenario(10, 2, 2, 0);
        let hs = hybrid_surrogate(&sc, &CovarianceTuple::zeros(2, 2), 0.0).unwrap();
        assert!(matches!(
            build_quad_subproblem(&hs, &sc),
            Err(SurrogateError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn closed_form_square_root_matches_dense() {
        let sc = scenario(11, 3, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s0 = CovarianceTuple::new((0..3).map(|_| rand_psd(&mut rng, 3, 0.1)).collect());
        let hs = hybrid_surrogate(&sc, &s0, 0.05).unwrap();
        let qp = build_quad_subproblem(&hs, &sc).unwrap();
        let dense = linalg::sqrt_psd(&qp.c_tilde()).unwrap();
        assert!((&dense - qp.c_tilde_sqrt()).norm() < 1e-9 * dense.norm());
        let inv = linalg::inverse_hpd(&dense).unwrap();
        let c = inv * qp.stacked_target();
        assert!((c - qp.c_vector()).norm() < 1e-8 * qp.c_vector().norm());
    }

    #[test]
    fn quadratic_form_encodes_surrogate() {
        let sc = scenario(12, 3, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s0 = CovarianceTuple::new(vec![rand_psd(&mut rng, 3, 0.1), rand_psd(&mut rng, 3, 0.1)]);
        let hs = hybrid_surrogate(&sc, &s0, 0.01).unwrap();
        let qp = build_quad_subproblem(&hs, &sc).unwrap();
        let pts: Vec<_> = (0..5)
            .map(|_| {
                CovarianceTuple::new(vec![rand_psd(&mut rng, 3, 0.1), rand_psd(&mut rng, 3, 0.1)])
            })
            .collect();
        assert!(qp.equivalence_gap(&hs, &pts) <= 1e-8);
        for p in &pts {
            let a = qp.objective(p) + qp.c_vector().norm_squared();
            assert!((a - qp.residual_norm_sq(p)).abs() < 1e-9);
        }
    }
}
