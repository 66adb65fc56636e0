//! MM with the linear bound on the interference term only.
//!
//! Each outer step maximizes the concave minorizer
//! `sum_i omega_i (s_i(S) - Tr(R_i S_{-i})) - rho ||S - S^k||^2`
//! (plus the harvest term for the sum scalarization) by projected gradient.

use super::ascent::{projected_ascent, AscentSettings, Blocks, Projector};
use crate::linalg::{self, CMatrix};
use crate::model::{CovarianceTuple, Formulation, Scenario};
use crate::scalar::Real;
use crate::solver::{
    converged, find_feasible_s1, interior_point, is_s1, is_s2, s1_constraints, true_objective,
    Clock, Init, RunTrace, SolverError,
};
use crate::surrogate;

#[derive(Debug, Clone)]
pub struct MmLinearOptions<T: Real> {
    pub max_iters: usize,
    pub eps_obj: T,
    pub rho: T,
    /// Projected-gradient norm at which an inner problem counts as solved.
    pub inner_tol: T,
    pub inner_max_iters: usize,
    pub init: Init<T>,
}

impl<T: Real> Default for MmLinearOptions<T> {
    fn default() -> Self {
        MmLinearOptions {
            max_iters: 2000,
            eps_obj: T::lit(1e-6),
            rho: T::lit(1e-6),
            inner_tol: T::lit(1e-5),
            inner_max_iters: 2000,
            init: Init::Auto,
        }
    }
}

impl<T: Real> MmLinearOptions<T> {
    fn validate(&self) -> Result<(), SolverError> {
        if !(self.eps_obj > T::zero()) || !(self.inner_tol > T::zero()) {
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

/// Feasible set and starting point of a scalarization.
pub(crate) fn feasible_setup<T: Real>(
    sc: &Scenario<T>,
    formulation: Formulation,
    init: &Init<T>,
) -> Result<(Projector<T>, CovarianceTuple<T>), SolverError> {
    let fallback = CovarianceTuple::scaled_identity(sc.n_tx(), sc.n_info(), sc.power);
    if formulation == Formulation::Sum || sc.q.iter().all(|&q| q <= T::zero()) {
        let feasible = match formulation {
            Formulation::Sum => is_s2::<T>,
            Formulation::Hybrid => is_s1::<T>,
        };
        let start = init
            .resolve(sc)
            .filter(|s| feasible(sc, s))
            .unwrap_or(fallback);
        return Ok((Projector::power_only(sc.power), start));
    }
    let fp = find_feasible_s1(sc)?;
    let anchor = interior_point(sc, &fp).unwrap_or_else(|| fp.s.clone());
    let extra = s1_constraints(sc).into_iter().skip(1).collect();
    let start = init
        .resolve(sc)
        .filter(|s| is_s1(sc, s))
        .unwrap_or_else(|| anchor.clone());
    Ok((Projector::new(sc.power, extra, anchor.mats), start))
}

/// Minorizer of one outer step, with constants dropped.
struct LinearSurrogate<'a, T: Real> {
    sc: &'a Scenario<T>,
    center: Blocks<T>,
    /// `omega_i R_i`
    interference: Vec<CMatrix<T>>,
    harvest: Option<CMatrix<T>>,
    rho: T,
}

impl<'a, T: Real> LinearSurrogate<'a, T> {
    fn new(
        sc: &'a Scenario<T>,
        s: &CovarianceTuple<T>,
        formulation: Formulation,
        rho: T,
    ) -> Result<Self, SolverError> {
        let interference = (0..sc.n_info())
            .map(|i| surrogate::linear_bound_g(sc, s, i).map(|(r, _)| r.scale(sc.omega[i])))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LinearSurrogate {
            sc,
            center: s.mats.clone(),
            interference,
            harvest: (formulation == Formulation::Sum).then(|| sc.weighted_harvest_gram()),
            rho,
        })
    }

    fn total(x: &[CMatrix<T>]) -> CMatrix<T> {
        let n = x[0].nrows();
        x.iter().fold(linalg::zeros(n, n), |a, m| a + m)
    }

    fn value(&self, x: &[CMatrix<T>]) -> Result<T, SolverError> {
        let total = Self::total(x);
        let mut v = T::zero();
        for i in 0..self.sc.n_info() {
            let h = self.sc.info_channel(i);
            let m = linalg::identity::<T>(h.nrows()) + h * &total * h.adjoint();
            v += self.sc.omega[i] * linalg::logdet_hpd(&linalg::hermitian_part(&m))?;
            v -= linalg::frob_inner(&self.interference[i], &(&total - &x[i]));
        }
        if let Some(rh) = &self.harvest {
            v += linalg::frob_inner(rh, &total);
        }
        let prox = x
            .iter()
            .zip(&self.center)
            .fold(T::zero(), |a, (p, c)| a + linalg::frob_norm_sq(&(p - c)));
        Ok(v - self.rho * prox)
    }

    fn gradient(&self, x: &[CMatrix<T>]) -> Result<Blocks<T>, SolverError> {
        let total = Self::total(x);
        let n = total.nrows();
        let mut common = linalg::zeros(n, n);
        for i in 0..self.sc.n_info() {
            let h = self.sc.info_channel(i);
            let m = linalg::identity::<T>(h.nrows()) + h * &total * h.adjoint();
            let inv = linalg::inverse_hpd(&linalg::hermitian_part(&m))?;
            common += (h.adjoint() * inv * h).scale(self.sc.omega[i]);
        }
        if let Some(rh) = &self.harvest {
            common += rh;
        }
        let all = self
            .interference
            .iter()
            .fold(linalg::zeros(n, n), |a, m| a + m);
        let two_rho = self.rho + self.rho;
        Ok((0..x.len())
            .map(|l| {
                let g = &common
                    - (&all - &self.interference[l])
                    - (&x[l] - &self.center[l]).scale(two_rho);
                linalg::hermitian_part(&g)
            })
            .collect())
    }
}

fn solve_mm_linear<T: Real>(
    sc: &Scenario<T>,
    formulation: Formulation,
    opts: &MmLinearOptions<T>,
) -> Result<(CovarianceTuple<T>, RunTrace), SolverError> {
    opts.validate()?;
    sc.validate()?;
    let mut clock = Clock::start();
    let (mut proj, mut s) = feasible_setup(sc, formulation, &opts.init)?;
    let mut trace = RunTrace::default();
    let mut f = true_objective(sc, &s, formulation)?;
    clock.record(&mut trace, sc, &s, 0, f, None)?;
    let settings = AscentSettings {
        tol: opts.inner_tol,
        max_iters: opts.inner_max_iters,
        armijo: T::lit(1e-4),
        step0: T::one(),
    };
    for k in 1..=opts.max_iters {
        let sur = LinearSurrogate::new(sc, &s, formulation, opts.rho)?;
        let out = projected_ascent(
            s.mats.clone(),
            |x| sur.value(x),
            |x| sur.gradient(x),
            &mut proj,
            &settings,
            |_, _, _| Ok(()),
        )?;
        let candidate = CovarianceTuple::new(out.x);
        let f_new = true_objective(sc, &candidate, formulation)?;
        if f_new < f {
            trace.converged = converged(f, f_new, opts.eps_obj);
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

/// MM-L for the weighted sum rate under harvest targets.
pub fn solve_mm_linear_hybrid<T: Real>(
    sc: &Scenario<T>,
    opts: &MmLinearOptions<T>,
) -> Result<(CovarianceTuple<T>, RunTrace), SolverError> {
    solve_mm_linear(sc, Formulation::Hybrid, opts)
}

/// MM-L for the weighted rate plus harvested power objective.
pub fn solve_mm_linear_sum<T: Real>(
    sc: &Scenario<T>,
    opts: &MmLinearOptions<T>,
) -> Result<(CovarianceTuple<T>, RunTrace), SolverError> {
    solve_mm_linear(sc, Formulation::Sum, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_channels, harvests, objective_gradient, UserPartition};

    fn scenario(seed: u64, n: usize, m: usize) -> Scenario<f64> {
        let ch = generate_channels::<f64>(seed, 4, &vec![2; n + m], &vec![1.0; n + m]).unwrap();
        Scenario::new(ch, UserPartition::contiguous(n, m), 1.0).unwrap()
    }

    #[test]
    fn surrogate_is_tangent_at_center() {
        let sc = scenario(1, 3, 1).with_alpha(vec![2.0]).unwrap();
        let s = CovarianceTuple::all_ones(4, 3, 1.0);
        let sur = LinearSurrogate::new(&sc, &s, Formulation::Sum, 0.1).unwrap();
        let g = sur.gradient(&s.mats).unwrap();
        let want = objective_gradient(&sc, &s, Formulation::Sum).unwrap();
        for (a, b) in g.iter().zip(&want.mats) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn hybrid_trace_is_monotone_and_feasible() {
        let sc = scenario(2, 2, 2);
        let e = harvests(&sc, &CovarianceTuple::scaled_identity(4, 2, 1.0)).unwrap();
        let sc = sc.with_q(e.iter().map(|x| 0.8 * x).collect()).unwrap();
        let (s, tr) = solve_mm_linear_hybrid(&sc, &MmLinearOptions::default()).unwrap();
        assert!(tr.max_decrease() <= 1e-9);
        assert!(is_s1(&sc, &s));
        assert!(tr.iterations() > 1);
    }

    #[test]
    fn sum_trace_is_monotone() {
        let sc = scenario(3, 2, 1).with_alpha(vec![0.5]).unwrap();
        let (s, tr) = solve_mm_linear_sum(&sc, &MmLinearOptions::default()).unwrap();
        assert!(tr.max_decrease() <= 1e-9);
        assert!(is_s2(&sc, &s));
    }
}
