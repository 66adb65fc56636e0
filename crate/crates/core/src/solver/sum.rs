use super::{converged, is_s2, true_objective, Clock, Init, RunTrace, SolverError};
use crate::linalg::{self, EigenPair};
use crate::model::{CovarianceTuple, Formulation, Scenario};
use crate::scalar::Real;
use crate::surrogate;

#[derive(Debug, Clone)]
pub struct SumSolverOptions<T: Real> {
    pub max_iters: usize,
    /// Relative objective change below which the run stops.
    pub eps_obj: T,
    /// Bracket width at which the multiplier bisection stops.
    pub eps_mu: T,
    pub init: Init<T>,
}

impl<T: Real> Default for SumSolverOptions<T> {
    fn default() -> Self {
        SumSolverOptions {
            max_iters: 2000,
            eps_obj: T::lit(1e-6),
            eps_mu: T::lit(1e-10),
            init: Init::Auto,
        }
    }
}

impl<T: Real> SumSolverOptions<T> {
    fn validate(&self) -> Result<(), SolverError> {
        if !(self.eps_obj > T::zero()) || !(self.eps_mu > T::zero()) {
            return Err(SolverError::Option("tolerances must be positive".into()));
        }
        Ok(())
    }
}

fn clipped_total<T: Real>(eigs: &[Vec<T>], mu: T) -> T {
    eigs.iter()
        .flatten()
        .fold(T::zero(), |a, &l| a + (l - mu).max(T::zero()))
}

/// Water level `mu >= 0` with `sum_i Tr([Lambda_i - mu]^+) = target`, or zero
/// when the unclipped positive mass already fits in `target`.
///
/// Bisection to `eps_mu`, then the level is recomputed exactly from the
/// active eigenvalues.
pub fn waterfill_mu<T: Real>(eigs: &[Vec<T>], target: T, eps_mu: T) -> Result<T, SolverError> {
    if eigs.iter().all(|e| e.is_empty()) {
        return Err(SolverError::Dimension(
            "no eigenvalues to water-fill".into(),
        ));
    }
    if !(target > T::zero()) {
        return Err(SolverError::Option(
            "water-filling target must be positive".into(),
        ));
    }
    if clipped_total(eigs, T::zero()) <= target {
        return Ok(T::zero());
    }
    let top = eigs.iter().flatten().fold(T::zero(), |a, &l| a.max(l));
    let (mut lo, mut hi) = (T::zero(), top);
    while hi - lo > eps_mu {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if clipped_total(eigs, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // exact level for the active set found by bisection
    let mid = (lo + hi) * T::lit(0.5);
    let active: Vec<T> = eigs
        .iter()
        .flatten()
        .copied()
        .filter(|&l| l > mid)
        .collect();
    if active.is_empty() {
        return Ok(mid);
    }
    let exact =
        (active.iter().fold(T::zero(), |a, &l| a + l) - target) / T::lit(active.len() as f64);
    if exact >= lo && exact <= hi && exact > T::zero() {
        Ok(exact)
    } else {
        Ok(mid)
    }
}

/// One MM iteration of the weighted-sum solver from `s`, returning the next
/// iterate and the power multiplier.
pub fn mm_sum_step<T: Real>(
    sc: &Scenario<T>,
    s: &CovarianceTuple<T>,
) -> Result<(CovarianceTuple<T>, T), SolverError> {
    step(sc, s, T::lit(1e-10))
}

fn step<T: Real>(
    sc: &Scenario<T>,
    s: &CovarianceTuple<T>,
    eps_mu: T,
) -> Result<(CovarianceTuple<T>, T), SolverError> {
    let ss = surrogate::sum_surrogate(sc, s)?;
    let evd: Vec<EigenPair<T>> =
        ss.f.iter()
            .map(linalg::hermitian_evd)
            .collect::<Result<_, _>>()?;
    let n = sc.n_tx();
    if ss.beta == T::zero() {
        // linear surrogate: all power on the best eigen-direction
        let (best, _) = evd
            .iter()
            .enumerate()
            .fold((0, evd[0].max()), |acc, (i, e)| {
                if e.max() > acc.1 {
                    (i, e.max())
                } else {
                    acc
                }
            });
        let top = evd[best].max();
        let mut next = CovarianceTuple::zeros(n, sc.n_info());
        if top > T::zero() {
            let v = evd[best].vectors.column(0);
            next.mats[best] = (&v * v.adjoint()).scale(sc.power);
        }
        return Ok((next, top.max(T::zero())));
    }
    let two_beta = ss.beta + ss.beta;
    let eigs: Vec<Vec<T>> = evd
        .iter()
        .map(|e| e.values.iter().copied().collect())
        .collect();
    let mu = waterfill_mu(&eigs, two_beta * sc.power, eps_mu)?;
    let mats = evd
        .iter()
        .map(|e| e.rebuild_with(|l| (l - mu).max(T::zero()) / two_beta))
        .collect();
    Ok((CovarianceTuple::new(mats), mu))
}

/// Weighted-sum MM solver: rates plus weighted harvested powers under the
/// power budget.
pub fn solve_sum<T: Real>(
    sc: &Scenario<T>,
    opts: &SumSolverOptions<T>,
) -> Result<(CovarianceTuple<T>, RunTrace), SolverError> {
    opts.validate()?;
    sc.validate()?;
    let mut clock = Clock::start();
    let mut s = opts
        .init
        .resolve(sc)
        .filter(|s| is_s2(sc, s))
        .unwrap_or_else(|| CovarianceTuple::scaled_identity(sc.n_tx(), sc.n_info(), sc.power));
    let mut trace = RunTrace::default();
    let mut f = true_objective(sc, &s, Formulation::Sum)?;
    clock.record(&mut trace, sc, &s, 0, f, None)?;
    for k in 1..=opts.max_iters {
        let (next, mu) = step(sc, &s, opts.eps_mu)?;
        let f_new = true_objective(sc, &next, Formulation::Sum)?;
        s = next;
        clock.record(&mut trace, sc, &s, k, f_new, Some(mu))?;
        let done = converged(f, f_new, opts.eps_obj);
        f = f_new;
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok((s, trace))
}
