//! Physical quantities of a covariance tuple: interference, rates, harvested
//! powers and feasibility.
//!
//! Rates are natural-log based internally; the `*_bits` variants convert at
//! the reporting boundary.

use super::{CovarianceTuple, Formulation, ModelError, Scenario};
use crate::linalg::{self, CMatrix};
use crate::scalar::Real;

/// `Omega_i = H_i (sum_{k != i} S_k) H_i^H + I`.
pub fn interference_covariance<T: Real>(
    sc: &Scenario<T>,
    s: &CovarianceTuple<T>,
    i: usize,
) -> Result<CMatrix<T>, ModelError> {
    sc.check_info_index(i)?;
    check_tuple_shape(sc, s)?;
    Ok(omega_unchecked(sc, s, i))
}

pub(crate) fn omega_unchecked<T: Real>(
    sc: &Scenario<T>,
    s: &CovarianceTuple<T>,
    i: usize,
) -> CMatrix<T> {
    let h = sc.info_channel(i);
    let interf = s.sum_except(i);
    let nr = h.nrows();
    linalg::hermitian_part(&(h * interf * h.adjoint())) + linalg::identity::<T>(nr)
}

fn check_tuple_shape<T: Real>(sc: &Scenario<T>, s: &CovarianceTuple<T>) -> Result<(), ModelError> {
    if s.len() != sc.n_info() {
        return Err(ModelError::Dimension(format!(
            "{} covariances for {} information users",
            s.len(),
            sc.n_info()
        )));
    }
    if s.mats
        .iter()
        .any(|m| m.nrows() != sc.n_tx() || m.ncols() != sc.n_tx())
    {
        return Err(ModelError::Dimension(
            "covariance size differs from n_T".into(),
        ));
    }
    Ok(())
}

fn check_psd<T: Real>(s: &CovarianceTuple<T>) -> Result<(), ModelError> {
    for (user, m) in s.mats.iter().enumerate() {
        let lmin = linalg::lambda_min(m)?;
        let tol = T::tol(1e-9) * T::one().max(m.norm());
        if lmin < -tol {
            return Err(ModelError::NotPsd {
                user,
                min_eigenvalue: lmin.as_f64(),
            });
        }
    }
    Ok(())
}

/// `(s_i, g_i)` with `s_i = ln det(I + H_i S_bar H_i^H)` and
/// `g_i = ln det(Omega_i)`, so that `R_i = s_i - g_i`.
pub fn rate_decomposition<T: Real>(
    sc: &Scenario<T>,
    s: &CovarianceTuple<T>,
    i: usize,
) -> Result<(T, T), ModelError> {
    sc.check_info_index(i)?;
    check_tuple_shape(sc, s)?;
    let h = sc.info_channel(i);
    let total =
        linalg::hermitian_part(&(h * s.sum() * h.adjoint())) + linalg::identity::<T>(h.nrows());
    let omega = omega_unchecked(sc, s, i);
    Ok((linalg::logdet_hpd(&total)?, linalg::logdet_hpd(&omega)?))
}

/// Rate of information user `i` in nats per channel use, computed as
/// `ln det(Omega_i + H_i S_i H_i^H) - ln det(Omega_i)`.
pub fn user_rate<T: Real>(
    sc: &Scenario<T>,
    s: &CovarianceTuple<T>,
    i: usize,
) -> Result<T, ModelError> {
    sc.check_info_index(i)?;
    check_tuple_shape(sc, s)?;
    check_psd(s)?;
    rate_unchecked(sc, s, i)
}

pub(crate) fn rate_unchecked<T: Real>(
    sc: &Scenario<T>,
    s: &CovarianceTuple<T>,
    i: usize,
) -> Result<T, ModelError> {
    let h = sc.info_channel(i);
    let omega = omega_unchecked(sc, s, i);
    let signal = linalg::hermitian_part(&(h * &s.mats[i] * h.adjoint()));
    let r = linalg::logdet_hpd(&(&omega + signal))? - linalg::logdet_hpd(&omega)?;
    Ok(r)
}

/// Rate of information user `i` in bits per channel use.
pub fn user_rate_bits<T: Real>(
    sc: &Scenario<T>,
    s: &CovarianceTuple<T>,
    i: usize,
) -> Result<T, ModelError> {
    Ok(user_rate(sc, s, i)? / T::ln_2())
}

/// All information-user rates in nats.
pub fn rates<T: Real>(sc: &Scenario<T>, s: &CovarianceTuple<T>) -> Result<Vec<T>, ModelError> {
    check_tuple_shape(sc, s)?;
    (0..sc.n_info()).map(|i| rate_unchecked(sc, s, i)).collect()
}

/// `sum_i R_i` in bits.
pub fn sum_rate_bits<T: Real>(sc: &Scenario<T>, s: &CovarianceTuple<T>) -> Result<T, ModelError> {
    Ok(rates(sc, s)?.into_iter().fold(T::zero(), |a, r| a + r) / T::ln_2())
}

/// `sum_i omega_i R_i` in nats.
pub fn weighted_rate<T: Real>(sc: &Scenario<T>, s: &CovarianceTuple<T>) -> Result<T, ModelError> {
    Ok(rates(sc, s)?
        .into_iter()
        .zip(&sc.omega)
        .fold(T::zero(), |a, (r, &w)| a + w * r))
}

/// `E_j = sum_i Tr(H_j S_i H_j^H)` (baseband equivalent, before `zeta_j`).
pub fn harvested_power<T: Real>(
    sc: &Scenario<T>,
    s: &CovarianceTuple<T>,
    j: usize,
) -> Result<T, ModelError> {
    sc.check_harvest_index(j)?;
    check_tuple_shape(sc, s)?;
    Ok(harvest_unchecked(sc, s, j))
}

pub(crate) fn harvest_unchecked<T: Real>(sc: &Scenario<T>, s: &CovarianceTuple<T>, j: usize) -> T {
    let h = sc.harvest_channel(j);
    linalg::trace_re(&(h * s.sum() * h.adjoint()))
}

pub fn harvests<T: Real>(sc: &Scenario<T>, s: &CovarianceTuple<T>) -> Result<Vec<T>, ModelError> {
    check_tuple_shape(sc, s)?;
    Ok((0..sc.n_harvest())
        .map(|j| harvest_unchecked(sc, s, j))
        .collect())
}

/// True objective of a scalarization: `sum omega_i R_i` for
/// [`Formulation::Hybrid`], plus `sum alpha_j E_j` for [`Formulation::Sum`].
pub fn objective<T: Real>(
    sc: &Scenario<T>,
    s: &CovarianceTuple<T>,
    formulation: Formulation,
) -> Result<T, ModelError> {
    let wr = weighted_rate(sc, s)?;
    match formulation {
        Formulation::Hybrid => Ok(wr),
        Formulation::Sum => {
            let e = harvests(sc, s)?;
            Ok(e.into_iter()
                .zip(&sc.alpha)
                .fold(wr, |a, (e, &w)| a + w * e))
        }
    }
}

/// Gradient of [`objective`] with respect to each `S_l` (Hermitian,
/// Frobenius inner product):
/// `sum_i omega_i G_i(S_bar) - sum_{i != l} omega_i H_i^H Omega_i^{-1} H_i`,
/// plus `R_H` for the sum formulation.
pub fn objective_gradient<T: Real>(
    sc: &Scenario<T>,
    s: &CovarianceTuple<T>,
    formulation: Formulation,
) -> Result<CovarianceTuple<T>, ModelError> {
    check_tuple_shape(sc, s)?;
    let n = sc.n_tx();
    let total = s.sum();
    let mut common = linalg::zeros(n, n);
    let mut interf = Vec::with_capacity(sc.n_info());
    for i in 0..sc.n_info() {
        let h = sc.info_channel(i);
        let w = sc.omega[i];
        let nr = h.nrows();
        let full = linalg::identity::<T>(nr) + h * &total * h.adjoint();
        common += (h.adjoint() * linalg::inverse_hpd(&full)? * h).scale(w);
        let om = omega_unchecked(sc, s, i);
        interf.push((h.adjoint() * linalg::inverse_hpd(&om)? * h).scale(w));
    }
    if formulation == Formulation::Sum {
        common += sc.weighted_harvest_gram();
    }
    let all_interf = interf.iter().fold(linalg::zeros(n, n), |acc, m| acc + m);
    let mats = (0..sc.n_info())
        .map(|l| linalg::hermitian_part(&(&common - (&all_interf - &interf[l]))))
        .collect();
    Ok(CovarianceTuple::new(mats))
}

/// Tolerances used by the feasibility reports.
#[derive(Debug, Clone, Copy)]
pub struct FeasibilityTolerance {
    /// Power excess allowed, relative to `max(1, P_T)`.
    pub power: f64,
    /// Harvest shortfall allowed, relative to `max(1, Q_j)`.
    pub harvest: f64,
    /// Negative eigenvalue allowed, relative to `max(1, ||S_i||_F)`.
    pub psd: f64,
}

impl Default for FeasibilityTolerance {
    fn default() -> Self {
        FeasibilityTolerance {
            power: 1e-8,
            harvest: 1e-7,
            psd: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Power { excess: f64 },
    Harvest { user: usize, shortfall: f64 },
    NotPsd { user: usize, min_eigenvalue: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

fn feasibility<T: Real>(
    s: &CovarianceTuple<T>,
    sc: &Scenario<T>,
    tol: FeasibilityTolerance,
    with_harvest: bool,
) -> Result<FeasibilityReport, ModelError> {
    check_tuple_shape(sc, s)?;
    let mut violations = Vec::new();
    let p = sc.power.as_f64();
    let excess = s.total_power().as_f64() - p;
    if excess > tol.power * p.max(1.0) {
        violations.push(Violation::Power { excess });
    }
    if with_harvest {
        for j in 0..sc.n_harvest() {
            let q = sc.q[j].as_f64();
            let shortfall = q - harvest_unchecked(sc, s, j).as_f64();
            if shortfall > tol.harvest * q.max(1.0) {
                violations.push(Violation::Harvest { user: j, shortfall });
            }
        }
    }
    for (user, m) in s.mats.iter().enumerate() {
        let lmin = linalg::lambda_min(m)?.as_f64();
        if lmin < -tol.psd * m.norm().as_f64().max(1.0) {
            violations.push(Violation::NotPsd {
                user,
                min_eigenvalue: lmin,
            });
        }
    }
    Ok(FeasibilityReport { violations })
}

/// Membership report for `S_1` (power, harvest targets, PSD).
pub fn check_feasible_s1<T: Real>(
    s: &CovarianceTuple<T>,
    sc: &Scenario<T>,
    tol: FeasibilityTolerance,
) -> Result<FeasibilityReport, ModelError> {
    feasibility(s, sc, tol, true)
}

/// Membership report for `S_2` (power, PSD).
pub fn check_feasible_s2<T: Real>(
    s: &CovarianceTuple<T>,
    sc: &Scenario<T>,
    tol: FeasibilityTolerance,
) -> Result<FeasibilityReport, ModelError> {
    feasibility(s, sc, tol, false)
}

/// Factor `S = B B^H` with `B = U Lambda^{1/2}` restricted to eigenvalues
/// above `1e-9 max(1, lambda_max)`; the column count is the numerical rank.
pub fn recover_precoder<T: Real>(s: &CMatrix<T>) -> Result<CMatrix<T>, ModelError> {
    let eig = linalg::hermitian_evd(s)?;
    let tol = T::tol(1e-9) * T::one().max(eig.max());
    let keep: Vec<usize> = (0..eig.values.len())
        .filter(|&k| eig.values[k] > tol)
        .collect();
    let mut b = linalg::zeros(s.nrows(), keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let w = eig.values[k].sqrt();
        b.set_column(c, &eig.vectors.column(k).map(|z| z.scale(w)));
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{creal, identity};
    use crate::model::{ChannelSet, UserPartition};

    fn identity_scenario(n_info: usize, n_harvest: usize) -> Scenario<f64> {
        let h = vec![identity::<f64>(2); n_info + n_harvest];
        Scenario::new(
            ChannelSet::new(2, h).unwrap(),
            UserPartition::contiguous(n_info, n_harvest),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn single_user_sees_identity_interference() {
        let sc = identity_scenario(1, 0);
        let s = CovarianceTuple::scaled_identity(2, 1, 1.0);
        let om = interference_covariance(&sc, &s, 0).unwrap();
        assert!((om - identity::<f64>(2)).norm() < 1e-15);
    }

    #[test]
    fn one_interferer_doubles_noise() {
        let sc = identity_scenario(2, 0);
        let s = CovarianceTuple::new(vec![identity(2), identity(2)]);
        let om = interference_covariance(&sc, &s, 0).unwrap();
        assert!((om - identity::<f64>(2).scale(2.0)).norm() < 1e-15);
        assert!(interference_covariance(&sc, &s, 2).is_err());
    }

    #[test]
    fn parallel_channel_rate() {
        let sc = identity_scenario(1, 0);
        let p = 0.7;
        let s = CovarianceTuple::new(vec![identity::<f64>(2).scale(p)]);
        let r = user_rate_bits(&sc, &s, 0).unwrap();
        assert!((r - 2.0 * (1.0 + p).log2()).abs() < 1e-13);
        let z = CovarianceTuple::zeros(2, 1);
        assert_eq!(user_rate(&sc, &z, 0).unwrap(), 0.0);
    }

    #[test]
    fn rate_rejects_indefinite_covariance() {
        let sc = identity_scenario(1, 0);
        let mut m = identity::<f64>(2).scale(0.1);
        m[(1, 1)] = creal(-0.5);
        let s = CovarianceTuple::new(vec![m]);
        assert!(matches!(
            user_rate(&sc, &s, 0),
            Err(ModelError::NotPsd { .. })
        ));
    }

    #[test]
    fn harvest_examples() {
        let sc = identity_scenario(2, 1);
        let z = CovarianceTuple::zeros(2, 2);
        assert_eq!(harvested_power(&sc, &z, 0).unwrap(), 0.0);
        let s = CovarianceTuple::new(vec![
            identity::<f64>(2).scale(0.25),
            identity::<f64>(2).scale(0.75),
        ]);
        assert!((harvested_power(&sc, &s, 0).unwrap() - 2.0).abs() < 1e-15);
        assert!(harvested_power(&sc, &s, 1).is_err());
    }

    #[test]
    fn feasibility_reports() {
        let sc = identity_scenario(2, 1);
        let z = CovarianceTuple::zeros(2, 2);
        let tol = FeasibilityTolerance::default();
        assert!(check_feasible_s1(&z, &sc, tol).unwrap().is_feasible());
        assert!(check_feasible_s2(&z, &sc, tol).unwrap().is_feasible());
        let s = CovarianceTuple::scaled_identity(2, 2, 1.0);
        assert!(check_feasible_s2(&s, &sc, tol).unwrap().is_feasible());
        let over = s.scale(1.01);
        let rep = check_feasible_s2(&over, &sc, tol).unwrap();
        assert!(matches!(rep.violations[0], Violation::Power { .. }));
        let sc_q = sc.clone().with_q(vec![5.0]).unwrap();
        let rep = check_feasible_s1(&s, &sc_q, tol).unwrap();
        assert!(matches!(
            rep.violations[0],
            Violation::Harvest { user: 0, .. }
        ));
        assert!(check_feasible_s2(&s, &sc_q, tol).unwrap().is_feasible());
    }

    #[test]
    fn gradient_matches_central_differences() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let ch =
            crate::model::generate_channels::<f64>(9, 3, &[2, 1, 2], &[1.0, 1.0, 1.0]).unwrap();
        let sc = Scenario::new(ch, UserPartition::contiguous(2, 1), 1.0)
            .unwrap()
            .with_omega(vec![1.0, 0.7])
            .unwrap()
            .with_alpha(vec![2.0])
            .unwrap();
        let s = CovarianceTuple::new(vec![rand_psd(&mut rng, 3), rand_psd(&mut rng, 3)]);
        let d = CovarianceTuple::new(vec![rand_herm(&mut rng, 3), rand_herm(&mut rng, 3)]);
        for f in [Formulation::Hybrid, Formulation::Sum] {
            let g = objective_gradient(&sc, &s, f).unwrap();
            let h = 1e-6;
            let fd = (objective(&sc, &s.axpy(h, &d), f).unwrap()
                - objective(&sc, &s.axpy(-h, &d), f).unwrap())
                / (2.0 * h);
            let an = g.inner(&d);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
        }
    }

    fn rand_herm(rng: &mut impl rand::Rng, n: usize) -> CMatrix<f64> {
        let a = CMatrix::from_fn(n, n, |_, _| {
            crate::linalg::cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        crate::linalg::hermitian_part(&a)
    }

    fn rand_psd(rng: &mut impl rand::Rng, n: usize) -> CMatrix<f64> {
        let a = CMatrix::from_fn(n, n, |_, _| {
            crate::linalg::cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        &a * a.adjoint()
    }

    #[test]
    fn precoder_examples() {
        let b = recover_precoder(&identity::<f64>(3)).unwrap();
        assert!((&b * b.adjoint() - identity::<f64>(3)).norm() < 1e-12);
        let v = nalgebra::DVector::from_vec(vec![
            creal(1.0),
            crate::linalg::cplx(0.0, 2.0),
            creal(-1.0),
        ]);
        let s = &v * v.adjoint();
        let b = recover_precoder(&s).unwrap();
        assert_eq!(b.ncols(), 1);
        let col = b.column(0);
        let ratio = col[1] / col[0];
        assert!((ratio - crate::linalg::cplx(0.0, 2.0)).norm() < 1e-10);
    }
}
