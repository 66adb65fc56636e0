use super::admm::{self, AdmmSettings, AdmmState, BlockQp, LinearConstraint};
use super::barrier::{self, BarrierSettings};
use super::{
    converged, find_feasible_s1, true_objective, Clock, FeasiblePoint, Init, RunTrace, SolverError,
};
use crate::linalg;
use crate::model::{self, CovarianceTuple, FeasibilityTolerance, Formulation, Scenario};
use crate::scalar::Real;
use crate::surrogate::{self, QuadSubproblem};

#[derive(Debug, Clone)]
pub struct HybridSolverOptions<T: Real> {
    pub max_iters: usize,
    pub eps_obj: T,
    /// Residual tolerance of the inner convex solver.
    pub eps_inner: T,
    pub inner_max_iters: usize,
    /// Proximal weight; must be positive when there are several
    /// information users.
    pub rho: T,
    pub init: Init<T>,
}

impl<T: Real> Default for HybridSolverOptions<T> {
    fn default() -> Self {
        HybridSolverOptions {
            max_iters: 2000,
            eps_obj: T::lit(1e-6),
            eps_inner: T::lit(1e-7),
            inner_max_iters: 20_000,
            rho: T::lit(1e-6),
            init: Init::Auto,
        }
    }
}

impl<T: Real> HybridSolverOptions<T> {
    fn validate(&self) -> Result<(), SolverError> {
        if !(self.eps_obj > T::zero()) || !(self.eps_inner > T::zero()) {
            return Err(SolverError::Option("tolerances must be positive".into()));
        }
        if !(self.rho >= T::zero()) {
            return Err(SolverError::Option(
                "proximal weight must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Power and active harvest constraints of `S_1` in the inner solver's form.
pub(crate) fn s1_constraints<T: Real>(sc: &Scenario<T>) -> Vec<LinearConstraint<T>> {
    let n = sc.n_info();
    let nt = sc.n_tx();
    let mut out = vec![LinearConstraint {
        coeffs: vec![linalg::identity::<T>(nt); n],
        bound: sc.power,
    }];
    for j in 0..sc.n_harvest() {
        if sc.q[j] > T::zero() {
            let k = sc.harvest_gram(j).scale(-T::one());
            out.push(LinearConstraint {
                coeffs: vec![k; n],
                bound: -sc.q[j],
            });
        }
    }
    out
}

fn block_qp<T: Real>(qp: &QuadSubproblem<T>) -> BlockQp<T> {
    let n = qp.n_users();
    let mut constraints = vec![LinearConstraint {
        coeffs: vec![linalg::identity::<T>(qp.n_tx); n],
        bound: qp.power,
    }];
    for (k, &q) in qp.harvest_grams.iter().zip(&qp.q) {
        if q > T::zero() {
            constraints.push(LinearConstraint {
                coeffs: vec![k.scale(-T::one()); n],
                bound: -q,
            });
        }
    }
    BlockQp {
        coupling: qp.gamma_tilde,
        prox: qp.rho,
        targets: qp.targets.clone(),
        constraints,
    }
}

/// Minimizer of the subproblem over `S_1`, to the residual tolerance
/// `opts.eps_inner`, from a cold start.
pub fn solve_quad_subproblem<T: Real>(
    qp: &QuadSubproblem<T>,
    opts: &HybridSolverOptions<T>,
) -> Result<CovarianceTuple<T>, SolverError> {
    let nt = qp.n_tx;
    let mut state = AdmmState::from_point(vec![linalg::zeros(nt, nt); qp.n_users()]);
    let settings = AdmmSettings {
        max_iters: opts.inner_max_iters,
        ..AdmmSettings::with_eps(opts.eps_inner)
    };
    let rep = admm::solve_block_qp(&block_qp(qp), &mut state, &settings)?;
    if !rep.converged {
        return Err(SolverError::InnerNotConverged {
            iterations: rep.iterations,
            primal: rep.primal_residual,
            dual: rep.dual_residual,
        });
    }
    Ok(CovarianceTuple::new(state.z))
}

/// Pulls an approximately feasible PSD tuple into `S_1`: scale down to the
/// power budget, then mix toward `anchor` (strictly feasible) until every
/// harvest target is met.
pub(crate) fn restore_feasibility<T: Real>(
    sc: &Scenario<T>,
    s: CovarianceTuple<T>,
    anchor: Option<&CovarianceTuple<T>>,
) -> Result<CovarianceTuple<T>, SolverError> {
    let mut s = s.hermitianized();
    let p = s.total_power();
    if p > sc.power {
        s = s.scale(sc.power / p);
    }
    let Some(anchor) = anchor else {
        return Ok(s);
    };
    let mut theta = T::zero();
    for j in 0..sc.n_harvest() {
        if sc.q[j] <= T::zero() {
            continue;
        }
        let e = model::harvested_power(sc, &s, j)?;
        let ea = model::harvested_power(sc, anchor, j)?;
        if e < sc.q[j] && ea > e {
            theta = theta.max(((sc.q[j] - e) / (ea - e)).min(T::one()));
        }
    }
    if theta > T::zero() {
        s = s.scale(T::one() - theta).axpy(theta, anchor);
    }
    Ok(s)
}

/// Strictly feasible point with slack in every constraint, or `None` when
/// the harvest targets leave no interior.
pub(crate) fn interior_point<T: Real>(
    sc: &Scenario<T>,
    fp: &FeasiblePoint<T>,
) -> Option<CovarianceTuple<T>> {
    let half = T::lit(0.5);
    let centre = CovarianceTuple::scaled_identity(sc.n_tx(), sc.n_info(), sc.power).scale(half);
    if !fp.slack.is_finite() {
        return Some(centre);
    }
    if !(fp.slack > T::zero()) {
        return None;
    }
    let top = (0..sc.n_harvest())
        .filter(|&j| sc.q[j] > T::zero())
        .fold(T::zero(), |a, j| a.max(sc.q[j] + fp.slack));
    let eta = (fp.slack / (top + top)).min(half);
    Some(fp.s.scale(T::one() - eta).axpy(eta, &centre))
}

pub(crate) fn is_s1<T: Real>(sc: &Scenario<T>, s: &CovarianceTuple<T>) -> bool {
    model::check_feasible_s1(s, sc, FeasibilityTolerance::default()).is_ok_and(|r| r.is_feasible())
}

/// Hybrid MM solver: weighted sum rate subject to the harvest targets and the
/// power budget.
pub fn solve_hybrid<T: Real>(
    sc: &Scenario<T>,
    opts: &HybridSolverOptions<T>,
) -> Result<(CovarianceTuple<T>, RunTrace), SolverError> {
    opts.validate()?;
    sc.validate()?;
    let mut clock = Clock::start();
    let feasible = find_feasible_s1(sc)?;
    let anchor = sc.q.iter().any(|&q| q > T::zero()).then_some(&feasible.s);
    let mut s = opts
        .init
        .resolve(sc)
        .filter(|s| is_s1(sc, s))
        .unwrap_or_else(|| feasible.s.clone());
    let mut trace = RunTrace::default();
    let mut f = true_objective(sc, &s, Formulation::Hybrid)?;
    clock.record(&mut trace, sc, &s, 0, f, None)?;
    let interior = interior_point(sc, &feasible);
    let mut state = AdmmState::from_point(s.mats.clone());
    let settings = AdmmSettings {
        max_iters: opts.inner_max_iters,
        ..AdmmSettings::with_eps(opts.eps_inner)
    };
    let theta = T::lit(0.1);
    for k in 1..=opts.max_iters {
        let hs = surrogate::hybrid_surrogate(sc, &s, opts.rho)?;
        let qp = block_qp(&surrogate::build_quad_subproblem(&hs, sc)?);
        let gap = opts.eps_inner * T::one().max(f.abs());
        let direct = interior.as_ref().and_then(|a| {
            let x0 = s.scale(T::one() - theta).axpy(theta, a);
            barrier::solve_block_qp_barrier(&qp, &x0.mats, &BarrierSettings::with_gap(gap))
        });
        let raw = match direct {
            Some((x, _)) => CovarianceTuple::new(x),
            None => {
                state.z = s.mats.clone();
                admm::solve_block_qp(&qp, &mut state, &settings)?;
                CovarianceTuple::new(state.z.clone())
            }
        };
        let candidate = restore_feasibility(sc, raw, anchor)?;
        let f_new = true_objective(sc, &candidate, Formulation::Hybrid)?;
        if f_new < f || !is_s1(sc, &candidate) {
            // the inner solution is no longer accurate enough to ascend
            trace.converged = converged(f, f_new, opts.eps_obj.max(opts.eps_inner));
            break;
        }
        s = candidate;
        clock.record(&mut trace, sc, &s, k, f_new, None)?;
        let done = converged(f, f_new, opts.eps_obj);
        f = f_new;
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok((s, trace))
}
