//! MM solvers for the weighted-sum and hybrid scalarizations.

pub mod admm;
pub mod barrier;
mod feasible;
mod hybrid;
mod sum;

pub use feasible::{find_feasible_s1, FeasiblePoint};
pub(crate) use hybrid::{interior_point, is_s1, s1_constraints};
pub use hybrid::{solve_hybrid, solve_quad_subproblem, HybridSolverOptions};
pub use sum::{mm_sum_step, solve_sum, waterfill_mu, SumSolverOptions};

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::linalg::KernelError;
use crate::model::{self, CovarianceTuple, Formulation, ModelError, Scenario};
use crate::scalar::Real;
use crate::surrogate::SurrogateError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("harvest targets are infeasible (best achievable surplus {max_slack:e})")]
    Infeasible { max_slack: f64 },
    #[error("inner solver stopped after {iterations} iterations (primal residual {primal:e}, dual residual {dual:e})")]
    InnerNotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
    },
    #[error("{0}")]
    Dimension(String),
    #[error("invalid option: {0}")]
    Option(String),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<KernelError> for SolverError {
    fn from(e: KernelError) -> Self {
        SolverError::Model(e.into())
    }
}

/// Starting point of an iterative solver.
#[derive(Debug, Clone, Default)]
pub enum Init<T: Real> {
    /// The solver's own default.
    #[default]
    Auto,
    /// `S_i = P / (N n_T) I`.
    ScaledIdentity,
    /// `S_i = P / (N n_T) 11^T`.
    AllOnes,
    /// A given tuple, e.g. the solution at a neighbouring sweep point. Ignored
    /// in favour of the default when it is not feasible.
    Warm(CovarianceTuple<T>),
}

impl<T: Real> Init<T> {
    pub(crate) fn resolve(&self, sc: &Scenario<T>) -> Option<CovarianceTuple<T>> {
        let (n, nu, p) = (sc.n_tx(), sc.n_info(), sc.power);
        match self {
            Init::Auto => None,
            Init::ScaledIdentity => Some(CovarianceTuple::scaled_identity(n, nu, p)),
            Init::AllOnes => Some(CovarianceTuple::all_ones(n, nu, p)),
            Init::Warm(s) if s.len() == nu && s.n_tx() == n && s.is_finite() => Some(s.clone()),
            Init::Warm(_) => None,
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// Solver wall time up to this iterate, excluding trace bookkeeping.
    pub time_s: f64,
    /// True objective of the scalarization being solved (nats based).
    pub objective: f64,
    pub sum_rate_bits: f64,
    pub rates_bits: Vec<f64>,
    pub harvests: Vec<f64>,
    pub power: f64,
    /// Power multiplier of the iteration, when the solver has one.
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
}

impl RunTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// Largest drop between consecutive objective values (zero for a
    /// monotone trace).
    pub fn max_decrease(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[0].objective - w[1].objective)
            .fold(0.0, f64::max)
    }

    /// Wall time at which the objective first comes within `rel` of its final
    /// value.
    pub fn time_to_within(&self, rel: f64) -> Option<f64> {
        let fin = self.last()?.objective;
        self.records
            .iter()
            .find(|r| (fin - r.objective).abs() <= rel * fin.abs())
            .map(|r| r.time_s)
    }
}

/// Stopwatch that can be paused while the trace is written.
pub(crate) struct Clock {
    start: Instant,
    paused: Duration,
}

impl Clock {
    pub(crate) fn start() -> Self {
        Clock {
            start: Instant::now(),
            paused: Duration::ZERO,
        }
    }

    pub(crate) fn elapsed(&self) -> f64 {
        (self.start.elapsed() - self.paused).as_secs_f64()
    }

    pub(crate) fn record<T: Real>(
        &mut self,
        trace: &mut RunTrace,
        sc: &Scenario<T>,
        s: &CovarianceTuple<T>,
        iter: usize,
        objective: T,
        mu: Option<T>,
    ) -> Result<(), ModelError> {
        let time_s = self.elapsed();
        let pause = Instant::now();
        let rates = model::rates(sc, s)?;
        let ln2 = std::f64::consts::LN_2;
        let rates_bits: Vec<f64> = rates.iter().map(|r| r.as_f64() / ln2).collect();
        trace.records.push(TraceRecord {
            iter,
            time_s,
            objective: objective.as_f64(),
            sum_rate_bits: rates_bits.iter().sum(),
            rates_bits,
            harvests: model::harvests(sc, s)?.iter().map(|e| e.as_f64()).collect(),
            power: s.total_power().as_f64(),
            mu: mu.map(|m| m.as_f64()),
        });
        self.paused += pause.elapsed();
        Ok(())
    }
}

/// `|f_new - f_old| <= eps |f_old|`, with an absolute floor for objectives
/// near zero.
pub(crate) fn converged<T: Real>(f_old: T, f_new: T, eps: T) -> bool {
    (f_new - f_old).abs() <= eps * f_old.abs() + T::tol(1e-15)
}

pub(crate) fn is_s2<T: Real>(sc: &Scenario<T>, s: &CovarianceTuple<T>) -> bool {
    model::check_feasible_s2(s, sc, model::FeasibilityTolerance::default())
        .is_ok_and(|r| r.is_feasible())
}

pub(crate) fn true_objective<T: Real>(
    sc: &Scenario<T>,
    s: &CovarianceTuple<T>,
    formulation: Formulation,
) -> Result<T, ModelError> {
    model::objective(sc, s, formulation)
}
