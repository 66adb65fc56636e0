//! Config-driven experiments producing a CSV table and a JSON summary.

mod config;
mod runs;
mod table;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::KernelError;
use crate::model::ModelError;
use crate::solver::SolverError;

pub use config::{
    max_harvest, Config, ExperimentConfig, ExperimentKind, GridConfig, PerUser, QScale,
    ScenarioConfig, SolverFamily, Tolerances,
};
pub use table::{header, render, sort_rows, Outcome, Row, SolverId, Status, CSV_VERSION};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("harvest targets are infeasible (best achievable surplus {max_slack:e})")]
    Infeasible { max_slack: f64 },
    #[error(transparent)]
    Solver(SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ExperimentError {
    /// Process exit status for the command-line front end: 2 for an invalid
    /// configuration, 3 for unreachable harvest targets, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Infeasible { .. } => 3,
            _ => 1,
        }
    }
}

impl From<SolverError> for ExperimentError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Infeasible { max_slack } => ExperimentError::Infeasible { max_slack },
            e => ExperimentError::Solver(e),
        }
    }
}

impl From<KernelError> for ExperimentError {
    fn from(e: KernelError) -> Self {
        ExperimentError::Model(e.into())
    }
}

/// Validates `cfg` and runs it on the current rayon pool.
pub fn run(cfg: &Config) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate()?;
    let kind = cfg.experiment.kind;
    let mut rows = match kind {
        ExperimentKind::Convergence => runs::convergence(cfg)?,
        ExperimentKind::RatePowerSurface => runs::surface(cfg)?,
        ExperimentKind::RateRegion => runs::region(cfg)?,
    };
    sort_rows(&mut rows);
    let summary = Summary::new(cfg, &rows);
    Ok(ExperimentOutput {
        kind,
        n_info: cfg.scenario.info_users,
        n_harvest: cfg.scenario.harvest_users,
        rows,
        summary,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub n_info: usize,
    pub n_harvest: usize,
    pub rows: Vec<Row>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn csv(&self) -> String {
        render(&self.rows, self.n_info, self.n_harvest)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary is plain data")
    }

    /// File name of the CSV table, `<type>.csv`.
    pub fn csv_name(&self) -> String {
        format!("{}.csv", self.kind.name())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub csv_version: u32,
    pub experiment: &'static str,
    pub rows: usize,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub convergence: Vec<ConvergenceStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionStats>,
}

/// Medians over seeds for one solver.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStats {
    pub solver: &'static str,
    pub runs: usize,
    pub failed_runs: usize,
    pub median_iterations: Option<f64>,
    pub median_final_objective: Option<f64>,
    pub median_final_sum_rate_bits: Option<f64>,
    /// Time until the objective is within 0.1% of its final value.
    pub median_time_to_final_s: Option<f64>,
    pub median_time_per_iteration_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfaceStats {
    pub mm_solver: Option<&'static str>,
    pub bd_solver: Option<&'static str>,
    /// Grid points (over all seeds) the MM-Q solver solved.
    pub feasible_points: usize,
    pub infeasible_points: usize,
    /// Feasible points at which BD found no solution.
    pub bd_unsolved_points: usize,
    /// Share of feasible points where MM-Q reaches at least the BD sum rate
    /// (points BD cannot serve count as wins).
    pub mm_dominance_fraction: Option<f64>,
    pub median_improvement_ratio: Option<f64>,
    /// Improvement ratio at the grid point with all levels zero, per seed.
    pub zero_corner_ratios: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionStats {
    pub levels: Vec<f64>,
    pub curves: Vec<RegionCurve>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionCurve {
    pub solver: &'static str,
    pub seed: u64,
    /// Area of the outer rate-region bound per harvest level; `None` when the
    /// level is infeasible.
    pub areas: Vec<Option<f64>>,
    /// Largest amount by which a higher harvest level beats a lower one in
    /// weighted rate at a common weight (positive values break nesting).
    pub max_nesting_violation: Option<f64>,
}

/// Median of the values, averaging the middle pair.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn solved(r: &Row) -> Option<&Outcome> {
    match r.status {
        Status::Ok | Status::MaxIter => r.outcome.as_ref(),
        _ => None,
    }
}

impl Summary {
    fn new(cfg: &Config, rows: &[Row]) -> Self {
        let kind = cfg.experiment.kind;
        let mut s = Summary {
            csv_version: CSV_VERSION,
            experiment: kind.name(),
            rows: rows.len(),
            seeds: cfg.experiment.seeds.clone(),
            convergence: Vec::new(),
            surface: None,
            region: None,
        };
        match kind {
            ExperimentKind::Convergence => s.convergence = convergence_stats(rows),
            ExperimentKind::RatePowerSurface => s.surface = Some(surface_stats(rows)),
            ExperimentKind::RateRegion => s.region = Some(region_stats(cfg, rows)),
        }
        s
    }
}

fn convergence_stats(rows: &[Row]) -> Vec<ConvergenceStats> {
    let mut solvers: Vec<SolverId> = rows.iter().map(|r| r.solver).collect();
    solvers.sort();
    solvers.dedup();
    solvers
        .into_iter()
        .map(|id| {
            let mut seeds: Vec<u64> = rows
                .iter()
                .filter(|r| r.solver == id)
                .map(|r| r.seed)
                .collect();
            seeds.sort();
            seeds.dedup();
            let (mut iters, mut objs, mut rates, mut reach, mut per_iter) =
                (vec![], vec![], vec![], vec![], vec![]);
            let mut failed = 0;
            for &seed in &seeds {
                let run: Vec<&Outcome> = rows
                    .iter()
                    .filter(|r| r.solver == id && r.seed == seed)
                    .filter_map(solved)
                    .collect();
                let Some(last) = run.last() else {
                    failed += 1;
                    continue;
                };
                let n_iter = rows
                    .iter()
                    .filter(|r| r.solver == id && r.seed == seed)
                    .map(|r| r.iter)
                    .max()
                    .unwrap_or(0);
                iters.push(n_iter as f64);
                objs.push(last.objective);
                rates.push(last.sum_rate_bits);
                let band = 1e-3 * last.objective.abs();
                if let Some(hit) = run
                    .iter()
                    .find(|o| (last.objective - o.objective).abs() <= band)
                {
                    reach.push(hit.time_s);
                }
                if n_iter > 0 {
                    per_iter.push((last.time_s - run[0].time_s) / n_iter as f64);
                }
            }
            ConvergenceStats {
                solver: id.name(),
                runs: seeds.len(),
                failed_runs: failed,
                median_iterations: median(&iters),
                median_final_objective: median(&objs),
                median_final_sum_rate_bits: median(&rates),
                median_time_to_final_s: median(&reach),
                median_time_per_iteration_s: median(&per_iter),
            }
        })
        .collect()
}

fn surface_stats(rows: &[Row]) -> SurfaceStats {
    let mm = rows
        .iter()
        .map(|r| r.solver)
        .find(|s| matches!(s, SolverId::MmqSum | SolverId::MmqHybrid));
    let bd = rows
        .iter()
        .map(|r| r.solver)
        .find(|s| matches!(s, SolverId::BdSum | SolverId::BdHybrid));
    let mut stats = SurfaceStats {
        mm_solver: mm.map(SolverId::name),
        bd_solver: bd.map(SolverId::name),
        feasible_points: 0,
        infeasible_points: 0,
        bd_unsolved_points: 0,
        mm_dominance_fraction: None,
        median_improvement_ratio: None,
        zero_corner_ratios: Vec::new(),
    };
    let Some(mm) = mm else { return stats };
    let mut wins = 0usize;
    let mut ratios = Vec::new();
    for r in rows.iter().filter(|r| r.solver == mm) {
        let Some(o) = solved(r) else {
            if r.status == Status::Infeasible {
                stats.infeasible_points += 1;
            }
            continue;
        };
        stats.feasible_points += 1;
        let Some(bd) = bd else { continue };
        let other = rows
            .iter()
            .find(|b| b.solver == bd && b.seed == r.seed && b.point == r.point)
            .and_then(solved);
        match other {
            None => {
                wins += 1;
                stats.bd_unsolved_points += 1;
            }
            Some(b) => {
                if o.sum_rate_bits >= b.sum_rate_bits - 1e-6 {
                    wins += 1;
                }
                if b.sum_rate_bits > 0.0 {
                    let ratio = o.sum_rate_bits / b.sum_rate_bits;
                    ratios.push(ratio);
                    let zero = match mm {
                        SolverId::MmqHybrid => r.q.iter().all(|&q| q == 0.0),
                        _ => r.alpha.iter().all(|&a| a == 0.0),
                    };
                    if zero {
                        stats.zero_corner_ratios.push(ratio);
                    }
                }
            }
        }
    }
    if bd.is_some() && stats.feasible_points > 0 {
        stats.mm_dominance_fraction = Some(wins as f64 / stats.feasible_points as f64);
    }
    stats.median_improvement_ratio = median(&ratios);
    stats
}

/// Area of `{r >= 0 : w . r <= v}` over every cut `(w, v)`, the outer bound
/// on a rate region that weighted-sum optima certify. `None` while some axis
/// is unbounded.
fn region_area(cuts: &[([f64; 2], f64)]) -> Option<f64> {
    let bound = |axis: usize| {
        cuts.iter()
            .filter(|(w, _)| w[axis] > 0.0)
            .map(|(w, v)| v / w[axis])
            .min_by(f64::total_cmp)
    };
    let (x, y) = (bound(0)?, bound(1)?);
    let mut poly = vec![[0.0, 0.0], [x, 0.0], [x, y], [0.0, y]];
    for (w, v) in cuts {
        let excess = |p: &[f64; 2]| w[0] * p[0] + w[1] * p[1] - v;
        let mut next = Vec::with_capacity(poly.len() + 1);
        for k in 0..poly.len() {
            let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
            let (ep, eq) = (excess(&p), excess(&q));
            if ep <= 0.0 {
                next.push(p);
            }
            if (ep < 0.0 && eq > 0.0) || (ep > 0.0 && eq < 0.0) {
                let t = ep / (ep - eq);
                next.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        poly = next;
    }
    let twice: f64 = (0..poly.len())
        .map(|k| {
            let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    Some(0.5 * twice.abs())
}

fn region_stats(cfg: &Config, rows: &[Row]) -> RegionStats {
    let levels = cfg.experiment.grid.q_levels.clone().unwrap_or_default();
    let points = cfg.experiment.grid.omega_points;
    let mut keys: Vec<(SolverId, u64)> = rows.iter().map(|r| (r.solver, r.seed)).collect();
    keys.sort();
    keys.dedup();
    let curves = keys
        .into_iter()
        .map(|(id, seed)| {
            let at = |l: usize, k: usize| -> Option<(&Row, &Outcome)> {
                rows.iter()
                    .find(|r| r.solver == id && r.seed == seed && r.point == l * points + k)
                    .and_then(|r| solved(r).map(|o| (r, o)))
            };
            let areas = (0..levels.len())
                .map(|l| {
                    let cuts: Vec<([f64; 2], f64)> = (0..points)
                        .filter_map(|k| at(l, k))
                        .map(|(r, o)| {
                            (
                                [r.omega[0], r.omega[1]],
                                r.omega[0] * o.rates_bits[0] + r.omega[1] * o.rates_bits[1],
                            )
                        })
                        .collect();
                    region_area(&cuts)
                })
                .collect();
            let mut worst: Option<f64> = None;
            for l in 1..levels.len() {
                for k in 0..points {
                    let (Some((r, lo)), Some((_, hi))) = (at(l - 1, k), at(l, k)) else {
                        continue;
                    };
                    let w = |o: &Outcome| {
                        r.omega
                            .iter()
                            .zip(&o.rates_bits)
                            .map(|(w, x)| w * x)
                            .sum::<f64>()
                    };
                    let gap = if levels[l] >= levels[l - 1] {
                        w(hi) - w(lo)
                    } else {
                        w(lo) - w(hi)
                    };
                    worst = Some(worst.map_or(gap, |v: f64| v.max(gap)));
                }
            }
            RegionCurve {
                solver: id.name(),
                seed,
                areas,
                max_nesting_violation: worst,
            }
        })
        .collect();
    RegionStats { levels, curves }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_handles_even_and_odd_counts() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn region_area_clips_the_axis_box() {
        let boxed = [([1.0, 0.0], 1.0), ([0.0, 1.0], 2.0)];
        assert!((region_area(&boxed).unwrap() - 2.0).abs() < 1e-12);
        let cut = [([1.0, 0.0], 1.0), ([0.0, 1.0], 1.0), ([0.5, 0.5], 0.5)];
        assert!((region_area(&cut).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(region_area(&[([1.0, 0.0], 1.0)]), None);
    }
}
