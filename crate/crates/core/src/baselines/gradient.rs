//! Projected gradient ascent directly on the nonconvex objectives.

use super::ascent::{projected_ascent, AscentSettings};
use super::mm_linear::feasible_setup;
use crate::model::{self, CovarianceTuple, Formulation, Scenario};
use crate::scalar::Real;
use crate::solver::{true_objective, Clock, Init, RunTrace, SolverError};

#[derive(Debug, Clone)]
pub struct GradientOptions<T: Real> {
    pub max_iters: usize,
    /// Stop when `||S - P(S + grad)||_F` falls below this.
    pub tol: T,
    pub armijo: T,
    pub step0: T,
    pub init: Init<T>,
}

impl<T: Real> Default for GradientOptions<T> {
    fn default() -> Self {
        GradientOptions {
            max_iters: 20_000,
            tol: T::lit(1e-5),
            armijo: T::lit(1e-4),
            step0: T::one(),
            init: Init::ScaledIdentity,
        }
    }
}

pub fn solve_projected_gradient<T: Real>(
    sc: &Scenario<T>,
    formulation: Formulation,
    opts: &GradientOptions<T>,
) -> Result<(CovarianceTuple<T>, RunTrace), SolverError> {
    if !(opts.tol > T::zero()) || !(opts.step0 > T::zero()) {
        return Err(SolverError::Option(
            "tolerance and initial step must be positive".into(),
        ));
    }
    if !(opts.armijo > T::zero() && opts.armijo < T::one()) {
        return Err(SolverError::Option(
            "Armijo constant must lie in (0, 1)".into(),
        ));
    }
    sc.validate()?;
    let mut clock = Clock::start();
    let (mut proj, s) = feasible_setup(sc, formulation, &opts.init)?;
    let mut trace = RunTrace::default();
    let f = true_objective(sc, &s, formulation)?;
    clock.record(&mut trace, sc, &s, 0, f, None)?;
    let settings = AscentSettings {
        tol: opts.tol,
        max_iters: opts.max_iters,
        armijo: opts.armijo,
        step0: opts.step0,
    };
    let out = projected_ascent(
        s.mats,
        |x| {
            Ok(model::objective(
                sc,
                &CovarianceTuple::new(x.to_vec()),
                formulation,
            )?)
        },
        |x| Ok(model::objective_gradient(sc, &CovarianceTuple::new(x.to_vec()), formulation)?.mats),
        &mut proj,
        &settings,
        |it, x, f| {
            Ok(clock.record(
                &mut trace,
                sc,
                &CovarianceTuple::new(x.to_vec()),
                it,
                f,
                None,
            )?)
        },
    )?;
    trace.converged = out.converged;
    Ok((CovarianceTuple::new(out.x), trace))
}
