//! Block diagonalization: every information user transmits in the null space
//! of the other information users' channels, so the rates decouple and the
//! problem becomes concave in the reduced covariances `X_i`
//! (`S_i = V_i X_i V_i^H`).

use super::ascent::{projected_ascent, AscentSettings, Blocks, Projector};
use crate::linalg::{self, CMatrix};
use crate::model::{CovarianceTuple, Formulation, Scenario};
use crate::scalar::Real;
use crate::solver::admm::LinearConstraint;
use crate::solver::{true_objective, Clock, RunTrace, SolverError};

#[derive(Debug, Clone)]
pub struct BdOptions<T: Real> {
    pub formulation: Formulation,
    /// Projected-gradient norm at which the reduced problem counts as solved
    /// (unused when the water-filling closed form applies).
    pub tol: T,
    pub max_iters: usize,
}

impl<T: Real> Default for BdOptions<T> {
    fn default() -> Self {
        BdOptions {
            formulation: Formulation::Hybrid,
            tol: T::lit(1e-5),
            max_iters: 20_000,
        }
    }
}

/// Orthonormal bases (`n_T x d_i`) of the null spaces of the stacked
/// channels of the other information users.
pub fn null_space_bases<T: Real>(sc: &Scenario<T>) -> Result<Vec<CMatrix<T>>, SolverError> {
    let n = sc.n_tx();
    let nu = sc.n_info();
    let mut out = Vec::with_capacity(nu);
    for i in 0..nu {
        let others: usize = (0..nu)
            .filter(|&k| k != i)
            .map(|k| sc.info_channel(k).nrows())
            .sum();
        if others > n {
            return Err(SolverError::Dimension(format!(
                "block diagonalization needs n_T >= {others} for user {i}, have {n}"
            )));
        }
        let mut gram = linalg::zeros::<T>(n, n);
        for k in (0..nu).filter(|&k| k != i) {
            let h = sc.info_channel(k);
            gram += h.adjoint() * h;
        }
        let evd = linalg::hermitian_evd(&linalg::hermitian_part(&gram))?;
        let cut = T::tol(1e-10) * T::one().max(evd.max());
        let cols: Vec<usize> = (0..n).filter(|&c| evd.values[c] <= cut).collect();
        if cols.is_empty() {
            return Err(SolverError::Dimension(format!(
                "user {i} has no interference-free subspace"
            )));
        }
        out.push(evd.vectors.select_columns(&cols));
    }
    Ok(out)
}

/// Levels `p_k = [w_k L - 1/g_k]^+` with `sum_k p_k = power`, for gains `g_k`
/// and weights `w_k`.
fn weighted_waterfill<T: Real>(gains: &[T], weights: &[T], power: T) -> Vec<T> {
    let mut order: Vec<usize> = (0..gains.len())
        .filter(|&k| gains[k] > T::zero() && weights[k] > T::zero())
        .collect();
    order.sort_by(|&a, &b| {
        (weights[b] * gains[b])
            .partial_cmp(&(weights[a] * gains[a]))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut p = vec![T::zero(); gains.len()];
    let mut level = T::zero();
    let (mut wsum, mut inv) = (T::zero(), T::zero());
    let mut active = 0;
    for (m, &k) in order.iter().enumerate() {
        wsum += weights[k];
        inv += T::one() / gains[k];
        let l = (power + inv) / wsum;
        if weights[k] * gains[k] * l <= T::one() {
            break;
        }
        level = l;
        active = m + 1;
    }
    for &k in &order[..active] {
        p[k] = (weights[k] * level - T::one() / gains[k]).max(T::zero());
    }
    p
}

struct Reduced<'a, T: Real> {
    sc: &'a Scenario<T>,
    bases: &'a [CMatrix<T>],
    /// `H_i V_i`
    channels: Vec<CMatrix<T>>,
    /// `V_i^H R_H V_i` for the sum scalarization.
    harvest: Option<Vec<CMatrix<T>>>,
}

impl<T: Real> Reduced<'_, T> {
    fn value(&self, x: &[CMatrix<T>]) -> Result<T, SolverError> {
        let mut v = T::zero();
        for (i, (h, xi)) in self.channels.iter().zip(x).enumerate() {
            let m = linalg::identity::<T>(h.nrows()) + h * xi * h.adjoint();
            v += self.sc.omega[i] * linalg::logdet_hpd(&linalg::hermitian_part(&m))?;
        }
        if let Some(rh) = &self.harvest {
            v += rh
                .iter()
                .zip(x)
                .fold(T::zero(), |a, (r, xi)| a + linalg::frob_inner(r, xi));
        }
        Ok(v)
    }

    fn gradient(&self, x: &[CMatrix<T>]) -> Result<Blocks<T>, SolverError> {
        let mut out = Vec::with_capacity(x.len());
        for (i, (h, xi)) in self.channels.iter().zip(x).enumerate() {
            let m = linalg::identity::<T>(h.nrows()) + h * xi * h.adjoint();
            let inv = linalg::inverse_hpd(&linalg::hermitian_part(&m))?;
            let mut g = (h.adjoint() * inv * h).scale(self.sc.omega[i]);
            if let Some(rh) = &self.harvest {
                g += &rh[i];
            }
            out.push(linalg::hermitian_part(&g));
        }
        Ok(out)
    }

    fn lift(&self, x: &[CMatrix<T>]) -> CovarianceTuple<T> {
        CovarianceTuple::new(
            self.bases
                .iter()
                .zip(x)
                .map(|(v, xi)| linalg::hermitian_part(&(v * xi * v.adjoint())))
                .collect(),
        )
    }

    fn reduce(&self, m: &CMatrix<T>) -> Vec<CMatrix<T>> {
        self.bases
            .iter()
            .map(|v| linalg::hermitian_part(&(v.adjoint() * m * v)))
            .collect()
    }
}

/// Q = 0 hybrid case: joint water-filling over the effective channels.
fn waterfill_solution<T: Real>(red: &Reduced<'_, T>) -> Result<Blocks<T>, SolverError> {
    let mut evds = Vec::new();
    let (mut gains, mut weights, mut owner) = (Vec::new(), Vec::new(), Vec::new());
    for (i, h) in red.channels.iter().enumerate() {
        let evd = linalg::hermitian_evd(&linalg::hermitian_part(&(h.adjoint() * h)))?;
        for k in 0..evd.values.len() {
            gains.push(evd.values[k].max(T::zero()));
            weights.push(red.sc.omega[i]);
            owner.push((i, k));
        }
        evds.push(evd);
    }
    let p = weighted_waterfill(&gains, &weights, red.sc.power);
    let mut levels: Vec<Vec<T>> = evds
        .iter()
        .map(|e| vec![T::zero(); e.values.len()])
        .collect();
    for (&(i, k), &pk) in owner.iter().zip(&p) {
        levels[i][k] = pk;
    }
    Ok(evds
        .iter()
        .zip(&levels)
        .map(|(e, l)| {
            let mut k = 0;
            e.rebuild_with(|_| {
                k += 1;
                l[k - 1]
            })
        })
        .collect())
}

/// Feasible set of the reduced hybrid problem and a point in it.
fn reduced_s1<T: Real>(
    sc: &Scenario<T>,
    red: &Reduced<'_, T>,
) -> Result<Projector<T>, SolverError> {
    let active: Vec<usize> = (0..sc.n_harvest())
        .filter(|&j| sc.q[j] > T::zero())
        .collect();
    let grams: Vec<Vec<CMatrix<T>>> = active
        .iter()
        .map(|&j| red.reduce(&sc.harvest_gram(j)))
        .collect();
    let constraint = |j: usize, k: &[CMatrix<T>], margin: T| LinearConstraint {
        coeffs: k.iter().map(|m| -m).collect(),
        bound: -(sc.q[j] + margin),
    };
    let exact: Vec<LinearConstraint<T>> = active
        .iter()
        .zip(&grams)
        .map(|(&j, k)| constraint(j, k, T::zero()))
        .collect();
    let tightened: Vec<LinearConstraint<T>> = active
        .iter()
        .zip(&grams)
        .map(|(&j, k)| constraint(j, k, T::tol(1e-7) * T::one().max(sc.q[j])))
        .collect();
    let dims: usize = red.bases.iter().map(|v| v.ncols()).sum();
    let start: Blocks<T> = red
        .bases
        .iter()
        .map(|v| linalg::identity::<T>(v.ncols()).scale(sc.power / T::lit(dims as f64)))
        .collect();
    // projection without repair; it lands on the set only if the set is
    // nonempty
    let mut probe = Projector::unrepaired(sc.power, tightened);
    let anchor = probe.project(&start)?;
    let worst = exact
        .iter()
        .fold(T::lit(f64::INFINITY), |a, c| a.min(c.slack(&anchor)));
    let used = anchor
        .iter()
        .fold(T::zero(), |a, m| a + linalg::trace_re(m));
    if worst < T::zero() || used > sc.power * (T::one() + T::tol(1e-12)) {
        return Err(SolverError::Infeasible {
            max_slack: worst.min(T::zero()).as_f64(),
        });
    }
    Ok(Projector::new(sc.power, exact, anchor))
}

/// Block-diagonalization baseline.
pub fn solve_bd<T: Real>(
    sc: &Scenario<T>,
    opts: &BdOptions<T>,
) -> Result<(CovarianceTuple<T>, RunTrace), SolverError> {
    if !(opts.tol > T::zero()) {
        return Err(SolverError::Option("tolerance must be positive".into()));
    }
    sc.validate()?;
    let mut clock = Clock::start();
    let bases = null_space_bases(sc)?;
    let channels = bases
        .iter()
        .enumerate()
        .map(|(i, v)| sc.info_channel(i) * v)
        .collect();
    let mut red = Reduced {
        sc,
        bases: &bases,
        channels,
        harvest: None,
    };
    let formulation = opts.formulation;
    let mut trace = RunTrace::default();
    let has_targets = sc.q.iter().any(|&q| q > T::zero());
    if formulation == Formulation::Hybrid && !has_targets {
        let x = waterfill_solution(&red)?;
        let s = red.lift(&x);
        let f = true_objective(sc, &s, formulation)?;
        clock.record(&mut trace, sc, &s, 1, f, None)?;
        trace.converged = true;
        return Ok((s, trace));
    }
    let mut proj = match formulation {
        Formulation::Sum => {
            red.harvest = Some(red.reduce(&sc.weighted_harvest_gram()));
            Projector::power_only(sc.power)
        }
        Formulation::Hybrid => reduced_s1(sc, &red)?,
    };
    let dims: usize = bases.iter().map(|v| v.ncols()).sum();
    let x0: Blocks<T> = match formulation {
        Formulation::Sum => bases
            .iter()
            .map(|v| linalg::identity::<T>(v.ncols()).scale(sc.power / T::lit(dims as f64)))
            .collect(),
        Formulation::Hybrid => proj
            .anchor()
            .expect("hybrid projector carries an anchor")
            .to_vec(),
    };
    let s0 = red.lift(&x0);
    let f0 = true_objective(sc, &s0, formulation)?;
    clock.record(&mut trace, sc, &s0, 0, f0, None)?;
    let settings = AscentSettings {
        tol: opts.tol,
        max_iters: opts.max_iters,
        armijo: T::lit(1e-4),
        step0: T::one(),
    };
    let out = projected_ascent(
        x0,
        |x| red.value(x),
        |x| red.gradient(x),
        &mut proj,
        &settings,
        |it, x, _| {
            let s = red.lift(x);
            let f = true_objective(sc, &s, formulation)?;
            Ok(clock.record(&mut trace, sc, &s, it, f, None)?)
        },
    )?;
    trace.converged = out.converged;
    Ok((red.lift(&out.x), trace))
}
