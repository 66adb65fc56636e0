//! The three experiment families. Independent chains (seed, sweep row,
//! solver) run in parallel; points inside a chain run in order so each can
//! start from its neighbour's solution.

use rayon::prelude::*;

use super::config::{max_harvest, Config, QScale, SolverFamily, Tolerances};
use super::table::{Outcome, Row, SolverId, Status};
use super::ExperimentError;
use crate::baselines::{
    solve_bd, solve_mm_linear_hybrid, solve_mm_linear_sum, solve_projected_gradient, BdOptions,
    GradientOptions, MmLinearOptions,
};
use crate::model::{self, CovarianceTuple, FeasibilityTolerance, Formulation, Scenario};
use crate::solver::{
    find_feasible_s1, solve_hybrid, solve_sum, HybridSolverOptions, Init, RunTrace, SolverError,
    SumSolverOptions,
};

type Solved = (CovarianceTuple<f64>, RunTrace);

pub(crate) fn solve(
    id: SolverId,
    sc: &Scenario<f64>,
    tol: &Tolerances,
    warm: Option<&CovarianceTuple<f64>>,
) -> Result<Solved, SolverError> {
    let init = id
        .fixed_init()
        .unwrap_or_else(|| warm.map_or(Init::Auto, |s| Init::Warm(s.clone())));
    let mml = MmLinearOptions {
        max_iters: tol.max_iters,
        eps_obj: tol.eps_obj,
        rho: tol.rho,
        init: init.clone(),
        ..Default::default()
    };
    match id {
        SolverId::MmqSum => solve_sum(
            sc,
            &SumSolverOptions {
                max_iters: tol.max_iters,
                eps_obj: tol.eps_obj,
                init,
                ..Default::default()
            },
        ),
        SolverId::MmqHybrid => solve_hybrid(
            sc,
            &HybridSolverOptions {
                max_iters: tol.max_iters,
                eps_obj: tol.eps_obj,
                eps_inner: tol.eps_inner,
                rho: tol.rho,
                init,
                ..Default::default()
            },
        ),
        SolverId::MmlHybrid => solve_mm_linear_hybrid(sc, &mml),
        SolverId::MmlSum => solve_mm_linear_sum(sc, &mml),
        SolverId::GradSumIdentity
        | SolverId::GradSumOnes
        | SolverId::GradHybridIdentity
        | SolverId::GradHybridOnes => solve_projected_gradient(
            sc,
            id.formulation(),
            &GradientOptions {
                init,
                ..Default::default()
            },
        ),
        SolverId::BdHybrid | SolverId::BdSum => solve_bd(
            sc,
            &BdOptions {
                formulation: id.formulation(),
                ..Default::default()
            },
        ),
    }
}

fn feasible(sc: &Scenario<f64>, s: &CovarianceTuple<f64>, formulation: Formulation) -> bool {
    let tol = FeasibilityTolerance::default();
    let report = match formulation {
        Formulation::Hybrid => model::check_feasible_s1(s, sc, tol),
        Formulation::Sum => model::check_feasible_s2(s, sc, tol),
    };
    report.is_ok_and(|r| r.is_feasible())
}

/// Where a row sits and which scenario produced it.
struct Site<'a> {
    experiment: &'static str,
    solver: SolverId,
    seed: u64,
    point: usize,
    sc: &'a Scenario<f64>,
}

impl Site<'_> {
    fn row(&self, iter: usize, outcome: Option<Outcome>, status: Status) -> Row {
        Row {
            experiment: self.experiment,
            solver: self.solver,
            seed: self.seed,
            point: self.point,
            iter,
            outcome,
            q: self.sc.q.clone(),
            alpha: self.sc.alpha.clone(),
            omega: self.sc.omega.clone(),
            status,
        }
    }

    fn status(&self, s: &CovarianceTuple<f64>, trace: &RunTrace) -> Status {
        if !feasible(self.sc, s, self.solver.formulation()) {
            Status::Error
        } else if trace.converged {
            Status::Ok
        } else {
            Status::MaxIter
        }
    }

    /// One row per accepted iterate.
    fn trace_rows(&self, result: &Result<Solved, SolverError>) -> Vec<Row> {
        match result {
            Ok((s, trace)) => {
                let st = self.status(s, trace);
                trace
                    .records
                    .iter()
                    .map(|r| self.row(r.iter, Some(r.into()), st))
                    .collect()
            }
            Err(e) => vec![self.failure(e)],
        }
    }

    /// One row for the converged point.
    fn final_row(&self, result: &Result<Solved, SolverError>) -> Row {
        match result {
            Ok((s, trace)) => match trace.last() {
                Some(r) => self.row(r.iter, Some(r.into()), self.status(s, trace)),
                None => self.row(0, None, Status::Error),
            },
            Err(e) => self.failure(e),
        }
    }

    fn failure(&self, e: &SolverError) -> Row {
        let status = match e {
            SolverError::Infeasible { .. } => Status::Infeasible,
            _ => Status::Error,
        };
        self.row(0, None, status)
    }
}

/// Convergence traces of every method at one matched operating point: the
/// MM-Q sum solution's harvested powers become the hybrid targets unless the
/// scenario fixes them.
pub(crate) fn convergence(cfg: &Config) -> Result<Vec<Row>, ExperimentError> {
    let per_seed: Vec<Result<Vec<Row>, ExperimentError>> = cfg
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| convergence_seed(cfg, seed))
        .collect();
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    Ok(rows)
}

fn convergence_seed(cfg: &Config, seed: u64) -> Result<Vec<Row>, ExperimentError> {
    const NAME: &str = "convergence";
    let fams = cfg.families();
    let tol = &cfg.experiment.tolerances;
    let sc = cfg.scenario(seed)?;
    let mut ids = Vec::new();
    for f in &fams {
        ids.extend_from_slice(match f {
            SolverFamily::MmqSum => &[SolverId::MmqSum][..],
            SolverFamily::MmqHybrid => &[SolverId::MmqHybrid],
            SolverFamily::Mml => &[SolverId::MmlHybrid],
            SolverFamily::Grad => &[
                SolverId::GradSumIdentity,
                SolverId::GradSumOnes,
                SolverId::GradHybridIdentity,
                SolverId::GradHybridOnes,
            ],
            SolverFamily::Bd => &[SolverId::BdHybrid, SolverId::BdSum],
        });
    }
    let mut rows = Vec::new();
    let matched = cfg.scenario.q.is_none();
    let needs_hybrid = ids.iter().any(|id| id.formulation() == Formulation::Hybrid);
    let sch = if matched && needs_hybrid {
        let result = solve(SolverId::MmqSum, &sc, tol, None);
        let (s, _) = result.as_ref().map_err(|e| e.clone())?;
        let q = model::harvests(&sc, s)?;
        if ids.contains(&SolverId::MmqSum) {
            let site = Site {
                experiment: NAME,
                solver: SolverId::MmqSum,
                seed,
                point: 0,
                sc: &sc,
            };
            rows.extend(site.trace_rows(&result));
        }
        sc.clone().with_q(q)?
    } else {
        sc.clone()
    };
    if needs_hybrid {
        // fails fast with the certificate when the targets cannot be met
        find_feasible_s1(&sch)?;
    }
    for id in ids {
        if matched && needs_hybrid && id == SolverId::MmqSum {
            continue;
        }
        let scn = match id.formulation() {
            Formulation::Hybrid => &sch,
            Formulation::Sum => &sc,
        };
        let site = Site {
            experiment: NAME,
            solver: id,
            seed,
            point: 0,
            sc: scn,
        };
        rows.extend(site.trace_rows(&solve(id, scn, tol, None)));
    }
    Ok(rows)
}

/// Solver of each requested family for a sweep over one scalarization.
fn sweep_ids(fams: &[SolverFamily], formulation: Formulation) -> Vec<SolverId> {
    let hybrid = formulation == Formulation::Hybrid;
    let mut ids: Vec<SolverId> = fams
        .iter()
        .map(|f| match (f, hybrid) {
            (SolverFamily::MmqSum | SolverFamily::MmqHybrid, true) => SolverId::MmqHybrid,
            (SolverFamily::MmqSum | SolverFamily::MmqHybrid, false) => SolverId::MmqSum,
            (SolverFamily::Mml, true) => SolverId::MmlHybrid,
            (SolverFamily::Mml, false) => SolverId::MmlSum,
            (SolverFamily::Grad, true) => SolverId::GradHybridIdentity,
            (SolverFamily::Grad, false) => SolverId::GradSumIdentity,
            (SolverFamily::Bd, true) => SolverId::BdHybrid,
            (SolverFamily::Bd, false) => SolverId::BdSum,
        })
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

fn q_target(
    cfg: &Config,
    sc: &Scenario<f64>,
    j: usize,
    level: f64,
) -> Result<f64, ExperimentError> {
    Ok(match cfg.experiment.grid.q_scale {
        QScale::Absolute => level,
        QScale::Relative => level * max_harvest(sc, j)?,
    })
}

/// Rate-power surface over a grid of harvest targets (hybrid) or harvest
/// weights (sum). Grid rows fix every coordinate but the last; points along a
/// row are warm-started.
pub(crate) fn surface(cfg: &Config) -> Result<Vec<Row>, ExperimentError> {
    const NAME: &str = "rate_power_surface";
    let g = &cfg.experiment.grid;
    let (axes, formulation) = match (&g.q, &g.alpha) {
        (Some(q), _) => (q, Formulation::Hybrid),
        (None, Some(a)) => (a, Formulation::Sum),
        (None, None) => return Err(ExperimentError::Config("surface grid missing".into())),
    };
    let last = axes.last().cloned().unwrap_or_default();
    let row_len = last.len().max(1);
    let total: usize = axes.iter().map(|a| a.len()).product();
    let ids = sweep_ids(&cfg.families(), formulation);
    let mut jobs = Vec::new();
    for &seed in &cfg.experiment.seeds {
        for r in 0..total / row_len {
            for &id in &ids {
                jobs.push((seed, r, id));
            }
        }
    }
    let tol = cfg.experiment.tolerances;
    let rows: Vec<Vec<Row>> = jobs
        .par_iter()
        .map(|&(seed, r, id)| {
            let base = match cfg.scenario(seed) {
                Ok(sc) => sc,
                Err(_) => return Vec::new(),
            };
            let make = |point: usize| -> Result<Scenario<f64>, ExperimentError> {
                let levels = grid_levels(axes, point);
                match formulation {
                    Formulation::Hybrid => {
                        let q = levels
                            .iter()
                            .enumerate()
                            .map(|(j, &l)| q_target(cfg, &base, j, l))
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok(base.clone().with_q(q)?)
                    }
                    Formulation::Sum => Ok(base.clone().with_alpha(levels)?),
                }
            };
            let order: Vec<usize> = descending(&last)
                .into_iter()
                .map(|k| r * row_len + k)
                .collect();
            chain(NAME, id, seed, &order, &tol, make)
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Levels of grid point `index`, last axis fastest.
fn grid_levels(axes: &[Vec<f64>], mut index: usize) -> Vec<f64> {
    let mut out = vec![0.0; axes.len()];
    for (a, axis) in axes.iter().enumerate().rev() {
        out[a] = axis[index % axis.len()];
        index /= axis.len();
    }
    out
}

/// Solves the sweep points in `order`, each warm-started from the previous
/// solution, and returns one row per point.
fn chain<F>(
    experiment: &'static str,
    id: SolverId,
    seed: u64,
    order: &[usize],
    tol: &Tolerances,
    make: F,
) -> Vec<Row>
where
    F: Fn(usize) -> Result<Scenario<f64>, ExperimentError>,
{
    let mut warm: Option<CovarianceTuple<f64>> = None;
    let mut rows = Vec::with_capacity(order.len());
    for &point in order {
        let Ok(sc) = make(point) else { continue };
        let result = solve(id, &sc, tol, warm.as_ref());
        let site = Site {
            experiment,
            solver: id,
            seed,
            point,
            sc: &sc,
        };
        rows.push(site.final_row(&result));
        if let Ok((s, _)) = result {
            warm = Some(s);
        }
    }
    rows
}

/// Indices of `levels`, largest first. A solution for larger harvest targets
/// is feasible for smaller ones, so chains in this order only improve.
fn descending(levels: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..levels.len()).collect();
    idx.sort_by(|&a, &b| levels[b].total_cmp(&levels[a]));
    idx
}

/// Rate regions of two information users: for every common harvest level,
/// sweep the weights `(t, 1 - t)` and record the rate pair. Each chain holds
/// the weights fixed and walks the harvest levels downwards.
pub(crate) fn region(cfg: &Config) -> Result<Vec<Row>, ExperimentError> {
    const NAME: &str = "rate_region";
    let g = &cfg.experiment.grid;
    let levels = g.q_levels.clone().unwrap_or_default();
    let points = g.omega_points;
    let ids: Vec<SolverId> = sweep_ids(&cfg.families(), Formulation::Hybrid)
        .into_iter()
        .filter(|id| {
            matches!(
                id,
                SolverId::MmqHybrid | SolverId::MmlHybrid | SolverId::BdHybrid
            )
        })
        .collect();
    let mut jobs = Vec::new();
    for &seed in &cfg.experiment.seeds {
        for k in 0..points {
            for &id in &ids {
                jobs.push((seed, k, id));
            }
        }
    }
    let tol = cfg.experiment.tolerances;
    let rows: Vec<Vec<Row>> = jobs
        .par_iter()
        .map(|&(seed, k, id)| {
            let Ok(base) = cfg.scenario(seed) else {
                return Vec::new();
            };
            let make = |point: usize| -> Result<Scenario<f64>, ExperimentError> {
                let (l, k) = (point / points, point % points);
                let t = k as f64 / (points - 1) as f64;
                let q = (0..base.n_harvest())
                    .map(|j| q_target(cfg, &base, j, levels[l]))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(base.clone().with_q(q)?.with_omega(vec![t, 1.0 - t])?)
            };
            let order: Vec<usize> = descending(&levels)
                .into_iter()
                .map(|l| l * points + k)
                .collect();
            chain(NAME, id, seed, &order, &tol, make)
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}
