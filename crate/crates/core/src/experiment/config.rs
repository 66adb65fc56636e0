//! JSON experiment description.
//!
//! ```json
//! {
//!   "scenario": { "n_tx": 6, "info_users": 3, "harvest_users": 3, "rx_antennas": 2,
//!                 "alpha": [1, 5, 10] },
//!   "experiment": { "type": "convergence", "seeds": [0, 1, 2] }
//! }
//! ```
//!
//! Omitted fields take the defaults `power = 1`, unit `omega`, `alpha`,
//! `zeta` and channel scales, `rho = 1e-6`, `eps_obj = 1e-6`,
//! `eps_inner = 1e-7`.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::model::{generate_channels, Scenario, UserPartition};

use super::ExperimentError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub experiment: ExperimentConfig,
}

/// One value for every user or an explicit list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUser {
    All(usize),
    Each(Vec<usize>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_tx: usize,
    pub info_users: usize,
    pub harvest_users: usize,
    #[serde(default = "default_rx")]
    pub rx_antennas: PerUser,
    #[serde(default = "one")]
    pub power: f64,
    #[serde(default)]
    pub omega: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    /// Harvest targets in power units. When given, the convergence
    /// experiment uses them instead of the matched targets.
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub zeta: Option<Vec<f64>>,
    /// Per-user channel amplitude scale (path loss), info users first.
    #[serde(default)]
    pub channel_scales: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Convergence,
    RatePowerSurface,
    RateRegion,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::RatePowerSurface => "rate_power_surface",
            ExperimentKind::RateRegion => "rate_region",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "type")]
    pub kind: ExperimentKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Solver families to run; `None` runs every family that applies.
    #[serde(default)]
    pub solvers: Option<Vec<SolverFamily>>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SolverFamily {
    #[serde(rename = "mmq-sum")]
    MmqSum,
    #[serde(rename = "mmq-hybrid")]
    MmqHybrid,
    #[serde(rename = "mml")]
    Mml,
    #[serde(rename = "grad")]
    Grad,
    #[serde(rename = "bd")]
    Bd,
}

impl SolverFamily {
    pub const ALL: [SolverFamily; 5] = [
        SolverFamily::MmqSum,
        SolverFamily::MmqHybrid,
        SolverFamily::Mml,
        SolverFamily::Grad,
        SolverFamily::Bd,
    ];

    pub fn token(self) -> &'static str {
        match self {
            SolverFamily::MmqSum => "mmq-sum",
            SolverFamily::MmqHybrid => "mmq-hybrid",
            SolverFamily::Mml => "mml",
            SolverFamily::Grad => "grad",
            SolverFamily::Bd => "bd",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.token() == token.trim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QScale {
    /// Fraction of `P lambda_max(H_j^H H_j)`, the most user `j` can harvest.
    #[default]
    Relative,
    Absolute,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Surface over harvest targets: one list of levels per harvester.
    #[serde(default)]
    pub q: Option<Vec<Vec<f64>>>,
    /// Surface over harvest weights: one list of levels per harvester.
    #[serde(default)]
    pub alpha: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub q_scale: QScale,
    /// Rate region: common target applied to every harvester.
    #[serde(default)]
    pub q_levels: Option<Vec<f64>>,
    /// Rate region: number of weight pairs `(t, 1 - t)` on `[0, 1]`.
    #[serde(default = "default_omega_points")]
    pub omega_points: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_eps_obj")]
    pub eps_obj: f64,
    #[serde(default = "default_eps_inner")]
    pub eps_inner: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_obj: default_eps_obj(),
            eps_inner: default_eps_inner(),
            rho: default_rho(),
            max_iters: default_max_iters(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_rx() -> PerUser {
    PerUser::All(2)
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_omega_points() -> usize {
    11
}
fn default_eps_obj() -> f64 {
    1e-6
}
fn default_eps_inner() -> f64 {
    1e-7
}
fn default_rho() -> f64 {
    1e-6
}
fn default_max_iters() -> usize {
    2000
}

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let sc = &self.scenario;
        let n_users = sc.info_users + sc.harvest_users;
        if sc.n_tx == 0 || sc.info_users == 0 {
            return Err(invalid(
                "need at least one transmit antenna and one information user",
            ));
        }
        if let PerUser::Each(v) = &sc.rx_antennas {
            if v.len() != n_users {
                return Err(invalid(format!(
                    "rx_antennas lists {} users, expected {n_users}",
                    v.len()
                )));
            }
        }
        if self.rx_antennas().contains(&0) {
            return Err(invalid("every user needs at least one receive antenna"));
        }
        if !(sc.power > 0.0 && sc.power.is_finite()) {
            return Err(invalid("power must be positive"));
        }
        let lists = [
            ("omega", &sc.omega, sc.info_users),
            ("alpha", &sc.alpha, sc.harvest_users),
            ("q", &sc.q, sc.harvest_users),
            ("zeta", &sc.zeta, sc.harvest_users),
            ("channel_scales", &sc.channel_scales, n_users),
        ];
        for (name, v, len) in lists {
            if let Some(v) = v {
                if v.len() != len {
                    return Err(invalid(format!(
                        "{name} has {} entries, expected {len}",
                        v.len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(invalid(format!(
                        "{name} entries must be finite and nonnegative"
                    )));
                }
            }
        }
        let ex = &self.experiment;
        if ex.seeds.is_empty() {
            return Err(invalid("seeds must not be empty"));
        }
        let t = &ex.tolerances;
        if !(t.eps_obj > 0.0 && t.eps_inner > 0.0 && t.rho >= 0.0) || t.max_iters == 0 {
            return Err(invalid("tolerances must be positive and max_iters nonzero"));
        }
        if sc.info_users > 1 && t.rho <= 0.0 {
            return Err(invalid(
                "rho must be positive with several information users",
            ));
        }
        let g = &ex.grid;
        let per_harvester = |name: &str, levels: &Vec<Vec<f64>>| {
            if levels.len() != sc.harvest_users {
                return Err(invalid(format!(
                    "grid.{name} has {} axes, expected one per harvester ({})",
                    levels.len(),
                    sc.harvest_users
                )));
            }
            if levels
                .iter()
                .any(|l| l.is_empty() || l.iter().any(|x| !x.is_finite() || *x < 0.0))
            {
                return Err(invalid(format!(
                    "grid.{name} levels must be nonempty and nonnegative"
                )));
            }
            Ok(())
        };
        match ex.kind {
            ExperimentKind::Convergence => {}
            ExperimentKind::RatePowerSurface => match (&g.q, &g.alpha) {
                (Some(q), None) => per_harvester("q", q)?,
                (None, Some(a)) => per_harvester("alpha", a)?,
                _ => {
                    return Err(invalid(
                        "rate_power_surface needs exactly one of grid.q and grid.alpha",
                    ))
                }
            },
            ExperimentKind::RateRegion => {
                if sc.info_users != 2 {
                    return Err(invalid("rate_region needs exactly two information users"));
                }
                match &g.q_levels {
                    Some(l) if !l.is_empty() && l.iter().all(|x| x.is_finite() && *x >= 0.0) => {}
                    _ => {
                        return Err(invalid(
                            "rate_region needs nonempty, nonnegative grid.q_levels",
                        ))
                    }
                }
                if g.omega_points < 2 {
                    return Err(invalid("grid.omega_points must be at least 2"));
                }
            }
        }
        Ok(())
    }

    pub fn rx_antennas(&self) -> Vec<usize> {
        let n = self.scenario.info_users + self.scenario.harvest_users;
        match &self.scenario.rx_antennas {
            PerUser::All(r) => vec![*r; n],
            PerUser::Each(v) => v.clone(),
        }
    }

    /// Solver families requested, in canonical order.
    pub fn families(&self) -> Vec<SolverFamily> {
        let mut f = self
            .experiment
            .solvers
            .clone()
            .unwrap_or_else(|| SolverFamily::ALL.to_vec());
        f.sort();
        f.dedup();
        f
    }

    /// Scenario for one seed: channels drawn from the seed, weights and
    /// targets from the config.
    pub fn scenario(&self, seed: u64) -> Result<Scenario<f64>, ExperimentError> {
        let sc = &self.scenario;
        let n_users = sc.info_users + sc.harvest_users;
        let scales = sc
            .channel_scales
            .clone()
            .unwrap_or_else(|| vec![1.0; n_users]);
        let ch = generate_channels::<f64>(seed, sc.n_tx, &self.rx_antennas(), &scales)?;
        let part = UserPartition::contiguous(sc.info_users, sc.harvest_users);
        let mut out = Scenario::new(ch, part, sc.power)?
            .with_seed(seed)
            .with_alpha(
                sc.alpha
                    .clone()
                    .unwrap_or_else(|| vec![1.0; sc.harvest_users]),
            )?;
        if let Some(w) = &sc.omega {
            out = out.with_omega(w.clone())?;
        }
        if let Some(q) = &sc.q {
            out = out.with_q(q.clone())?;
        }
        if let Some(z) = &sc.zeta {
            out = out.with_zeta(z.clone())?;
        }
        Ok(out)
    }
}

/// Largest power harvester `j` can collect: `P lambda_max(H_j^H H_j)`.
pub fn max_harvest(sc: &Scenario<f64>, j: usize) -> Result<f64, ExperimentError> {
    Ok(sc.power * linalg::lambda_max(&sc.harvest_gram(j))?)
}
