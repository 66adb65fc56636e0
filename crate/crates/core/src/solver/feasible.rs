//! Max-slack point of the harvest-constrained set, by a log-barrier method.
//!
//! Only the aggregate `S_bar` matters for power and harvest, so the search
//! runs over one Hermitian matrix (as `n^2` real coordinates) plus the
//! slack `t`:
//!
//! ```text
//! maximize t  s.t.  Tr(K_j S_bar) - Q_j >= t,  Tr(S_bar) <= P,  S_bar > 0
//! ```

use nalgebra::{DMatrix, DVector};

use super::barrier::{herm_to_real, logdet_hessian, real_to_herm};
use super::SolverError;
use crate::linalg;
use crate::model::{CovarianceTuple, Scenario};
use crate::scalar::Real;

/// Output of [`find_feasible_s1`].
#[derive(Debug, Clone)]
pub struct FeasiblePoint<T: Real> {
    pub s: CovarianceTuple<T>,
    /// Smallest harvest surplus `min_j (E_j - Q_j)`; infinite when no target
    /// is positive.
    pub slack: T,
}

struct Barrier<'a, T: Real> {
    grams: &'a [DVector<T>],
    q: &'a [T],
    power: T,
    trace: DVector<T>,
    n: usize,
}

impl<T: Real> Barrier<'_, T> {
    /// Constraint values `(harvest slacks minus t, power slack)`, or `None`
    /// outside the domain.
    fn slacks(&self, v: &DVector<T>, t: T) -> Option<(Vec<T>, T)> {
        let hs: Vec<T> = self
            .grams
            .iter()
            .zip(self.q)
            .map(|(k, &q)| k.dot(v) - q - t)
            .collect();
        let ps = self.power - self.trace.dot(v);
        if hs.iter().any(|&c| !(c > T::zero())) || !(ps > T::zero()) {
            return None;
        }
        Some((hs, ps))
    }

    fn value(&self, v: &DVector<T>, t: T, tau: T) -> Option<T> {
        let (hs, ps) = self.slacks(v, t)?;
        let s = real_to_herm(v.as_slice(), self.n);
        let ld = linalg::logdet_hpd(&s).ok()?;
        Some(-tau * t - hs.iter().fold(T::zero(), |a, &c| a + c.ln()) - ps.ln() - ld)
    }
}

/// Point of `S_1` with the largest harvest surplus, split evenly across
/// information users. Errors with the (negative) optimal surplus when the
/// targets cannot be met.
pub fn find_feasible_s1<T: Real>(sc: &Scenario<T>) -> Result<FeasiblePoint<T>, SolverError> {
    let n = sc.n_tx();
    let nu = sc.n_info();
    let active: Vec<usize> = (0..sc.n_harvest())
        .filter(|&j| sc.q[j] > T::zero())
        .collect();
    if active.is_empty() {
        return Ok(FeasiblePoint {
            s: CovarianceTuple::scaled_identity(n, nu, sc.power),
            slack: T::lit(f64::INFINITY),
        });
    }
    let grams: Vec<DVector<T>> = active
        .iter()
        .map(|&j| herm_to_real(&sc.harvest_gram(j)))
        .collect();
    let q: Vec<T> = active.iter().map(|&j| sc.q[j]).collect();
    let qmax = q.iter().fold(T::zero(), |a, &b| a.max(b));
    let bar = Barrier {
        grams: &grams,
        q: &q,
        power: sc.power,
        trace: herm_to_real(&linalg::identity::<T>(n)),
        n,
    };
    let m = n * n;
    let mut v = herm_to_real(&linalg::identity::<T>(n).scale(sc.power / T::lit(2.0 * n as f64)));
    let mut t = grams
        .iter()
        .zip(&q)
        .fold(T::lit(f64::INFINITY), |a, (k, &qj)| a.min(k.dot(&v) - qj))
        - T::one().max(qmax);
    let scale = T::one().max(qmax);
    let n_constraints = T::lit((n + active.len() + 1) as f64);
    let mut tau = T::one() / scale;
    let gap_tol = T::tol(1e-11) * scale;
    for _outer in 0..60 {
        for _newton in 0..100 {
            let (hs, ps) = bar.slacks(&v, t).expect("iterate stays interior");
            let s = real_to_herm(v.as_slice(), n);
            let s_inv = linalg::inverse_hpd(&s)?;
            let mut grad = DVector::zeros(m + 1);
            let mut hess = DMatrix::zeros(m + 1, m + 1);
            hess.view_mut((0, 0), (m, m))
                .copy_from(&logdet_hessian(&s_inv));
            grad.rows_mut(0, m).copy_from(&(-herm_to_real(&s_inv)));
            grad[m] = -tau;
            let mut add = |a: &DVector<T>, c: T| {
                // contribution of -ln(a^T (v, t) + const) with value c
                grad -= a.unscale(c);
                hess += (a * a.transpose()).unscale(c * c);
            };
            for (k, &c) in grams.iter().zip(&hs) {
                let mut a = DVector::zeros(m + 1);
                a.rows_mut(0, m).copy_from(k);
                a[m] = -T::one();
                add(&a, c);
            }
            let mut a = DVector::zeros(m + 1);
            a.rows_mut(0, m).copy_from(&(-&bar.trace));
            add(&a, ps);
            let Some(chol) = hess.clone().cholesky() else {
                break;
            };
            let step = -chol.solve(&grad);
            let decrement = -grad.dot(&step);
            if decrement * T::lit(0.5) <= T::tol(1e-12) {
                break;
            }
            let f0 = bar.value(&v, t, tau).expect("interior");
            let mut alpha = T::one();
            let mut moved = false;
            for _ in 0..60 {
                let vn = &v + step.rows(0, m).scale(alpha);
                let tn = t + step[m] * alpha;
                if let Some(f1) = bar.value(&vn, tn, tau) {
                    if f1 <= f0 - T::lit(0.25) * alpha * decrement {
                        v = vn;
                        t = tn;
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
        if n_constraints / tau <= gap_tol {
            break;
        }
        tau *= T::lit(10.0);
    }
    if t < -T::tol(1e-9) * scale {
        return Err(SolverError::Infeasible {
            max_slack: t.as_f64(),
        });
    }
    let sbar = real_to_herm(v.as_slice(), n);
    let per_user = sbar.unscale(T::lit(nu as f64));
    let s = CovarianceTuple::new(vec![per_user; nu]);
    let slack = (0..sc.n_harvest())
        .filter(|&j| sc.q[j] > T::zero())
        .map(|j| crate::model::harvested_power(sc, &s, j).map(|e| e - sc.q[j]))
        .try_fold(T::lit(f64::INFINITY), |a, e| e.map(|e| a.min(e)))?;
    Ok(FeasiblePoint { s, slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_channels, harvests, UserPartition};

    fn scenario(seed: u64, q: Vec<f64>) -> Scenario<f64> {
        let m = q.len();
        let ch = generate_channels::<f64>(seed, 4, &vec![2; 2 + m], &vec![1.0; 2 + m]).unwrap();
        Scenario::new(ch, UserPartition::contiguous(2, m), 1.0)
            .unwrap()
            .with_q(q)
            .unwrap()
    }

    #[test]
    fn zero_targets_give_scaled_identity() {
        let sc = scenario(1, vec![0.0, 0.0]);
        let fp = find_feasible_s1(&sc).unwrap();
        assert_eq!(fp.s, CovarianceTuple::scaled_identity(4, 2, 1.0));
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        let sc = scenario(2, vec![0.0, 0.0]);
        let k = sc.harvest_gram(0);
        let cap = linalg::lambda_max(&k).unwrap() * sc.power;
        let sc = sc.with_q(vec![1.01 * cap, 0.0]).unwrap();
        match find_feasible_s1(&sc) {
            Err(SolverError::Infeasible { max_slack }) => assert!(max_slack < 0.0),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn half_of_achieved_harvest_is_feasible() {
        let sc = scenario(3, vec![0.0, 0.0]);
        let e = harvests(&sc, &CovarianceTuple::all_ones(4, 2, 1.0)).unwrap();
        let sc = sc.with_q(e.iter().map(|x| 0.5 * x).collect()).unwrap();
        let fp = find_feasible_s1(&sc).unwrap();
        let got = harvests(&sc, &fp.s).unwrap();
        for j in 0..2 {
            assert!(got[j] >= sc.q[j]);
        }
        assert!(fp.s.total_power() <= 1.0 + 1e-12);
        assert!(fp.slack > 0.0);
    }

    #[test]
    fn single_target_slack_matches_eigenvalue_bound() {
        // with one harvester the best surplus is P lambda_max(K) - Q
        let sc = scenario(4, vec![0.3]);
        let lmax = linalg::lambda_max(&sc.harvest_gram(0)).unwrap();
        let fp = find_feasible_s1(&sc).unwrap();
        assert!(
            (fp.slack - (lmax - 0.3)).abs() < 1e-7,
            "{} vs {}",
            fp.slack,
            lmax - 0.3
        );
    }
}
