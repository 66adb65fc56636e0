//! CSV rows shared by every experiment.

use std::fmt;

use serde::Serialize;

use crate::model::Formulation;
use crate::solver::{Init, TraceRecord};

/// Bumped whenever the column layout changes.
pub const CSV_VERSION: u32 = 1;

/// Concrete solver configuration behind a CSV `solver` value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SolverId {
    MmqSum,
    MmqHybrid,
    MmlHybrid,
    MmlSum,
    GradSumIdentity,
    GradSumOnes,
    GradHybridIdentity,
    GradHybridOnes,
    BdHybrid,
    BdSum,
}

impl SolverId {
    pub fn name(self) -> &'static str {
        match self {
            SolverId::MmqSum => "mmq-sum",
            SolverId::MmqHybrid => "mmq-hybrid",
            SolverId::MmlHybrid => "mml-hybrid",
            SolverId::MmlSum => "mml-sum",
            SolverId::GradSumIdentity => "grad-sum-identity",
            SolverId::GradSumOnes => "grad-sum-ones",
            SolverId::GradHybridIdentity => "grad-hybrid-identity",
            SolverId::GradHybridOnes => "grad-hybrid-ones",
            SolverId::BdHybrid => "bd-hybrid",
            SolverId::BdSum => "bd-sum",
        }
    }

    pub fn formulation(self) -> Formulation {
        match self {
            SolverId::MmqSum
            | SolverId::MmlSum
            | SolverId::GradSumIdentity
            | SolverId::GradSumOnes
            | SolverId::BdSum => Formulation::Sum,
            _ => Formulation::Hybrid,
        }
    }

    /// Fixed starting point, for the gradient variants.
    pub(crate) fn fixed_init(self) -> Option<Init<f64>> {
        match self {
            SolverId::GradSumIdentity | SolverId::GradHybridIdentity => Some(Init::ScaledIdentity),
            SolverId::GradSumOnes | SolverId::GradHybridOnes => Some(Init::AllOnes),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// Stopped at the iteration limit.
    MaxIter,
    Infeasible,
    Error,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Ok => "ok",
            Status::MaxIter => "max_iter",
            Status::Infeasible => "infeasible",
            Status::Error => "error",
        })
    }
}

/// Measured values of a row; absent for failed runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub time_s: f64,
    pub objective: f64,
    pub sum_rate_bits: f64,
    pub rates_bits: Vec<f64>,
    pub harvests: Vec<f64>,
    pub mu: Option<f64>,
}

impl From<&TraceRecord> for Outcome {
    fn from(r: &TraceRecord) -> Self {
        Outcome {
            time_s: r.time_s,
            objective: r.objective,
            sum_rate_bits: r.sum_rate_bits,
            rates_bits: r.rates_bits.clone(),
            harvests: r.harvests.clone(),
            mu: r.mu,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: &'static str,
    pub solver: SolverId,
    pub seed: u64,
    /// Position in the sweep; orders rows but is not emitted (the sweep
    /// coordinates are).
    pub point: usize,
    pub iter: usize,
    pub outcome: Option<Outcome>,
    pub q: Vec<f64>,
    pub alpha: Vec<f64>,
    pub omega: Vec<f64>,
    pub status: Status,
}

impl Row {
    fn key(&self) -> (usize, SolverId, u64, usize) {
        (self.point, self.solver, self.seed, self.iter)
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Header for `n` information and `m` harvesting users.
pub fn header(n: usize, m: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "experiment",
        "solver",
        "seed",
        "iter",
        "time_s",
        "objective",
        "sum_rate_bits",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=n).map(|i| format!("rate_u{i}")));
    h.extend((1..=m).map(|j| format!("harvest_u{j}")));
    h.push("mu".into());
    h.extend((1..=m).map(|j| format!("Q_u{j}")));
    h.extend((1..=m).map(|j| format!("alpha_u{j}")));
    h.extend((1..=n).map(|i| format!("omega_u{i}")));
    h.push("status".into());
    h
}

fn fields(r: &Row, n: usize, m: usize) -> Vec<String> {
    let o = r.outcome.as_ref();
    let mut f = vec![
        r.experiment.to_string(),
        r.solver.name().to_string(),
        r.seed.to_string(),
        r.iter.to_string(),
        opt(o.map(|o| o.time_s)),
        opt(o.map(|o| o.objective)),
        opt(o.map(|o| o.sum_rate_bits)),
    ];
    let padded = |v: Option<&Vec<f64>>, len: usize| -> Vec<String> {
        (0..len)
            .map(|k| opt(v.and_then(|v| v.get(k).copied())))
            .collect()
    };
    f.extend(padded(o.map(|o| &o.rates_bits), n));
    f.extend(padded(o.map(|o| &o.harvests), m));
    f.push(opt(o.and_then(|o| o.mu)));
    f.extend(padded(Some(&r.q), m));
    f.extend(padded(Some(&r.alpha), m));
    f.extend(padded(Some(&r.omega), n));
    f.push(r.status.to_string());
    f
}

/// Canonical row order: sweep point, solver, seed, iteration.
pub fn sort_rows(rows: &mut [Row]) {
    rows.sort_by(|a, b| a.key().cmp(&b.key()));
}

pub fn render(rows: &[Row], n: usize, m: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(n, m)).expect("writing to memory");
    for r in rows.iter() {
        w.write_record(fields(r, n, m)).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("CSV fields are UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(point: usize, solver: SolverId, outcome: Option<Outcome>) -> Row {
        Row {
            experiment: "test",
            solver,
            seed: 1,
            point,
            iter: 3,
            outcome,
            q: vec![0.5],
            alpha: vec![1.0],
            omega: vec![1.0, 1.0],
            status: Status::Ok,
        }
    }

    #[test]
    fn header_matches_user_counts() {
        let h = header(2, 1).join(",");
        assert_eq!(
            h,
            "experiment,solver,seed,iter,time_s,objective,sum_rate_bits,rate_u1,rate_u2,harvest_u1,mu,Q_u1,alpha_u1,omega_u1,omega_u2,status"
        );
    }

    #[test]
    fn rows_are_sorted_and_padded() {
        let o = Outcome {
            time_s: 0.25,
            objective: 2.0,
            sum_rate_bits: 3.0,
            rates_bits: vec![1.0, 2.0],
            harvests: vec![0.5],
            mu: None,
        };
        let mut rows = vec![
            row(1, SolverId::MmqHybrid, None),
            row(0, SolverId::BdHybrid, Some(o)),
        ];
        rows[0].status = Status::Infeasible;
        sort_rows(&mut rows);
        let text = render(&rows, 2, 1);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[1],
            "test,bd-hybrid,1,3,0.25,2,3,1,2,0.5,,0.5,1,1,1,ok"
        );
        assert_eq!(lines[2], "test,mmq-hybrid,1,3,,,,,,,,0.5,1,1,1,infeasible");
    }
}
