//! Euclidean projection onto the feasible sets and a projected-gradient
//! ascent loop with Armijo backtracking.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, CMatrix, EigenPair};
use crate::scalar::Real;
use crate::solver::admm::LinearConstraint;
use crate::solver::{waterfill_mu, SolverError};

pub(crate) type Blocks<T> = Vec<CMatrix<T>>;

/// Projection onto `{X_i >= 0, sum_i Tr X_i <= P}` intersected with further
/// linear inequalities.
///
/// Power-only sets are handled in closed form (common eigenvalue shift).
/// Otherwise the projection is computed in the dual, one multiplier per
/// constraint, by a projected semismooth Newton method; a repair step then
/// mixes toward a feasible anchor to remove the residual violation.
pub(crate) struct Projector<T: Real> {
    power: T,
    extra: Vec<LinearConstraint<T>>,
    anchor: Option<Blocks<T>>,
    /// Multipliers of the last call, reused as a warm start.
    dual: Option<DVector<T>>,
}

impl<T: Real> Projector<T> {
    pub(crate) fn power_only(power: T) -> Self {
        Projector {
            power,
            extra: Vec::new(),
            anchor: None,
            dual: None,
        }
    }

    /// `extra` are the constraints besides the power budget; `anchor` must
    /// satisfy all of them.
    pub(crate) fn new(power: T, extra: Vec<LinearConstraint<T>>, anchor: Blocks<T>) -> Self {
        Projector {
            anchor: Some(anchor),
            extra,
            ..Self::power_only(power)
        }
    }

    /// Like [`Projector::new`] but without the repair step, so the output
    /// meets `extra` only to the dual solver's accuracy.
    pub(crate) fn unrepaired(power: T, extra: Vec<LinearConstraint<T>>) -> Self {
        Projector {
            extra,
            ..Self::power_only(power)
        }
    }

    pub(crate) fn anchor(&self) -> Option<&[CMatrix<T>]> {
        self.anchor.as_deref()
    }

    pub(crate) fn project(&mut self, y: &[CMatrix<T>]) -> Result<Blocks<T>, SolverError> {
        let y: Blocks<T> = y.iter().map(linalg::hermitian_part).collect();
        if self.extra.is_empty() {
            return project_power(&y, self.power);
        }
        let mut constraints = vec![LinearConstraint {
            coeffs: y.iter().map(|m| linalg::identity::<T>(m.nrows())).collect(),
            bound: self.power,
        }];
        constraints.extend(self.extra.iter().cloned());
        let lam0 = self
            .dual
            .take()
            .filter(|d| d.len() == constraints.len())
            .unwrap_or_else(|| DVector::zeros(constraints.len()));
        let (mut x, lam) = dual_newton(&y, &constraints, lam0)?;
        self.dual = Some(lam);
        let used: T = x.iter().fold(T::zero(), |a, m| a + linalg::trace_re(m));
        if used > self.power {
            let f = self.power / used;
            x.iter_mut().for_each(|m| *m = m.scale(f));
        }
        if let Some(anchor) = &self.anchor {
            let mut theta = T::zero();
            for c in &self.extra {
                let (sx, sa) = (c.slack(&x), c.slack(anchor));
                if sx < T::zero() && sa > sx {
                    theta = theta.max((-sx / (sa - sx)).min(T::one()));
                }
            }
            if theta > T::zero() {
                for (m, a) in x.iter_mut().zip(anchor) {
                    *m = m.scale(T::one() - theta) + a.scale(theta);
                }
            }
        }
        Ok(x)
    }
}

struct DualPoint<T: Real> {
    evds: Vec<EigenPair<T>>,
    x: Blocks<T>,
    grad: DVector<T>,
    value: T,
}

/// `X(lam) = P_psd(Y - sum_k lam_k A_k)` and the dual function
/// `||X - Y||^2 / 2 + lam^T (A X - b)` with its gradient `A X - b`.
fn dual_point<T: Real>(
    y: &[CMatrix<T>],
    cons: &[LinearConstraint<T>],
    lam: &DVector<T>,
) -> Result<DualPoint<T>, SolverError> {
    let mut evds = Vec::with_capacity(y.len());
    let mut x = Vec::with_capacity(y.len());
    let mut value = T::zero();
    for (i, yi) in y.iter().enumerate() {
        let mut z = yi.clone();
        for (c, &l) in cons.iter().zip(lam.iter()) {
            if l != T::zero() {
                z -= c.coeffs[i].scale(l);
            }
        }
        let evd = linalg::hermitian_evd(&linalg::hermitian_part(&z))?;
        let xi = evd.rebuild_with(|v| v.max(T::zero()));
        value += linalg::frob_norm_sq(&(&xi - yi)) * T::lit(0.5);
        x.push(xi);
        evds.push(evd);
    }
    let grad = DVector::from_fn(cons.len(), |k, _| -cons[k].slack(&x));
    value += lam.dot(&grad);
    Ok(DualPoint {
        evds,
        x,
        grad,
        value,
    })
}

/// Generalized Jacobian of `lam -> A X(lam)`, negated (positive semidefinite).
fn dual_curvature<T: Real>(pt: &DualPoint<T>, cons: &[LinearConstraint<T>]) -> DMatrix<T> {
    let k = cons.len();
    let mut h = DMatrix::zeros(k, k);
    for (i, evd) in pt.evds.iter().enumerate() {
        let u = &evd.vectors;
        let w = linalg::psd_projection_weights(evd);
        let rotated: Vec<CMatrix<T>> = cons
            .iter()
            .map(|c| u.adjoint() * &c.coeffs[i] * u)
            .collect();
        for r in 0..k {
            for c in r..k {
                let acc = linalg::weighted_inner(&rotated[r], &w, &rotated[c]);
                h[(r, c)] += acc;
                if r != c {
                    h[(c, r)] += acc;
                }
            }
        }
    }
    h
}

/// Maximizes the dual over `lam >= 0` by projected Newton steps.
fn dual_newton<T: Real>(
    y: &[CMatrix<T>],
    cons: &[LinearConstraint<T>],
    mut lam: DVector<T>,
) -> Result<(Blocks<T>, DVector<T>), SolverError> {
    let scale = cons.iter().fold(T::one(), |a, c| a.max(c.bound.abs()));
    let tol = T::tol(1e-13) * scale;
    let mut pt = dual_point(y, cons, &lam)?;
    for _ in 0..200 {
        let step_res = lam
            .iter()
            .zip(pt.grad.iter())
            .fold(T::zero(), |a, (&l, &g)| {
                a.max((l - (l + g).max(T::zero())).abs())
            });
        if step_res <= tol {
            break;
        }
        let k = lam.len();
        let binding: Vec<bool> = (0..k)
            .map(|r| lam[r] <= tol && pt.grad[r] < T::zero())
            .collect();
        let free: Vec<usize> = (0..k).filter(|&r| !binding[r]).collect();
        let mut dir = pt.grad.clone();
        if !free.is_empty() {
            let h = dual_curvature(&pt, cons);
            let mut hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let ridge = T::tol(1e-12) * T::one().max(hf.diagonal().amax());
            for d in 0..free.len() {
                hf[(d, d)] += ridge;
            }
            let rhs = DVector::from_fn(free.len(), |a, _| pt.grad[free[a]]);
            if let Some(ch) = hf.cholesky() {
                let d = ch.solve(&rhs);
                for (a, &r) in free.iter().enumerate() {
                    dir[r] = d[a];
                }
            }
        }
        let mut t = T::one();
        let mut moved = false;
        for _ in 0..60 {
            let trial = (&lam + dir.scale(t)).map(|v| v.max(T::zero()));
            let cand = dual_point(y, cons, &trial)?;
            let gain = pt.grad.dot(&(&trial - &lam));
            if cand.value >= pt.value + T::lit(1e-4) * gain - T::tol(1e-15) * pt.value.abs() {
                lam = trial;
                pt = cand;
                moved = true;
                break;
            }
            t *= T::lit(0.5);
        }
        if !moved {
            break;
        }
    }
    Ok((pt.x, lam))
}

/// Closed-form projection onto the power-constrained PSD blocks.
pub(crate) fn project_power<T: Real>(y: &[CMatrix<T>], power: T) -> Result<Blocks<T>, SolverError> {
    let evds = y
        .iter()
        .map(linalg::hermitian_evd)
        .collect::<Result<Vec<_>, _>>()?;
    let eigs: Vec<Vec<T>> = evds
        .iter()
        .map(|e| e.values.iter().copied().collect())
        .collect();
    let mu = waterfill_mu(&eigs, power, T::tol(1e-14) * T::one().max(power))?;
    Ok(evds
        .iter()
        .map(|e| e.rebuild_with(|l| (l - mu).max(T::zero())))
        .collect())
}

pub(crate) fn inner<T: Real>(a: &[CMatrix<T>], b: &[CMatrix<T>]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + linalg::frob_inner(x, y))
}

pub(crate) fn dist<T: Real>(a: &[CMatrix<T>], b: &[CMatrix<T>]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| {
            acc + linalg::frob_norm_sq(&(x - y))
        })
        .sqrt()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AscentSettings<T: Real> {
    /// Stop when `||X - P(X + grad)|| <= tol`.
    pub tol: T,
    pub max_iters: usize,
    pub armijo: T,
    pub step0: T,
}

pub(crate) struct AscentOutcome<T: Real> {
    pub x: Blocks<T>,
    pub converged: bool,
}

/// Projected gradient ascent from a feasible `x0`. `accept` sees every
/// accepted iterate.
pub(crate) fn projected_ascent<T, F, G, A>(
    x0: Blocks<T>,
    mut value: F,
    mut grad: G,
    proj: &mut Projector<T>,
    settings: &AscentSettings<T>,
    mut accept: A,
) -> Result<AscentOutcome<T>, SolverError>
where
    T: Real,
    F: FnMut(&[CMatrix<T>]) -> Result<T, SolverError>,
    G: FnMut(&[CMatrix<T>]) -> Result<Blocks<T>, SolverError>,
    A: FnMut(usize, &[CMatrix<T>], T) -> Result<(), SolverError>,
{
    let mut x = x0;
    let mut f = value(&x)?;
    let half = T::lit(0.5);
    let floor = T::tol(1e-18);
    for it in 1..=settings.max_iters {
        let g = grad(&x)?;
        let mut t = settings.step0;
        let mut next = None;
        while t > floor {
            let y: Blocks<T> = x.iter().zip(&g).map(|(a, b)| a + b.scale(t)).collect();
            let xt = proj.project(&y)?;
            if t == settings.step0 && dist(&xt, &x) <= settings.tol * settings.step0 {
                return Ok(AscentOutcome { x, converged: true });
            }
            let d: Blocks<T> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            let ft = value(&xt)?;
            if ft >= f + settings.armijo * inner(&g, &d) {
                next = Some((xt, ft));
                break;
            }
            t *= half;
        }
        let Some((xn, fn_)) = next else {
            // no ascent at any representable step
            return Ok(AscentOutcome {
                x,
                converged: false,
            });
        };
        x = xn;
        f = fn_;
        accept(it, &x, f)?;
    }
    Ok(AscentOutcome {
        x,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cplx, creal};

    #[test]
    fn power_projection_matches_shifted_eigenvalues() {
        let y = vec![
            CMatrix::from_row_slice(
                2,
                2,
                &[creal(2.0), cplx(0.5, 0.5), cplx(0.5, -0.5), creal(-1.0)],
            ),
            CMatrix::from_diagonal_element(2, 2, creal(0.5)),
        ];
        let x = project_power(&y, 1.0).unwrap();
        let total: f64 = x.iter().map(linalg::trace_re).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for m in &x {
            assert!(linalg::lambda_min(m).unwrap() > -1e-12);
        }
    }

    #[test]
    fn feasible_input_is_fixed_by_power_projection() {
        let y = vec![CMatrix::<f64>::from_diagonal_element(3, 3, creal(0.1))];
        let x = project_power(&y, 1.0).unwrap();
        assert!((&x[0] - &y[0]).norm() < 1e-14);
    }

    #[test]
    fn constrained_projection_is_optimal() {
        // a single harvest-like constraint tr(K X) >= q on one block
        let k = CMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_vec(vec![
            creal(1.0),
            creal(0.0),
        ]));
        let c = LinearConstraint {
            coeffs: vec![-&k],
            bound: -0.8,
        };
        let anchor = vec![CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            creal(0.9),
            creal(0.0),
        ]))];
        let mut p = Projector::new(1.0, vec![c.clone()], anchor);
        let y = vec![CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            creal(0.2),
            creal(0.6),
        ]))];
        let x = p.project(&y).unwrap();
        // minimizer puts 0.8 on the first entry and 0.2 on the second
        assert!((x[0][(0, 0)].re - 0.8).abs() < 1e-7, "{}", x[0]);
        assert!((x[0][(1, 1)].re - 0.2).abs() < 1e-7, "{}", x[0]);
        assert!(c.slack(&x) >= 0.0);
    }
}
