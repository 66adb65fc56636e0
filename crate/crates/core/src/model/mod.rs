//! Problem instances: channels, user partition, scenario parameters and the
//! covariance tuple that every solver optimizes.

mod channel;
mod metrics;

pub use channel::{generate_channels, ChannelSet, UserPartition};
pub use metrics::{
    check_feasible_s1, check_feasible_s2, harvested_power, harvests, interference_covariance,
    objective, objective_gradient, rate_decomposition, rates, recover_precoder, sum_rate_bits,
    user_rate, user_rate_bits, weighted_rate, FeasibilityReport, FeasibilityTolerance, Violation,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, CMatrix, KernelError};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite channel or parameter data")]
    NonFinite,
    #[error("invalid user partition: {0}")]
    Partition(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("user index {index} out of range (partition has {len} users)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error(
        "covariance of information user {user} is not PSD (min eigenvalue {min_eigenvalue:e})"
    )]
    NotPsd { user: usize, min_eigenvalue: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Scalarization used to turn the multi-objective problem into a single one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Weighted sum rate, harvested powers as `>= Q_j` constraints.
    Hybrid,
    /// Weighted sum rate plus weighted sum of harvested powers.
    Sum,
}

/// A full problem instance.
///
/// Harvest targets `q` are already divided by the conversion efficiency, so
/// the solvers compare them directly against baseband-equivalent powers.
/// `zeta` is carried only for reporting electrical power.
#[derive(Debug, Clone)]
pub struct Scenario<T: Real> {
    pub channels: ChannelSet<T>,
    pub partition: UserPartition,
    pub power: T,
    pub omega: Vec<T>,
    pub alpha: Vec<T>,
    pub q: Vec<T>,
    pub zeta: Vec<T>,
    pub seed: u64,
}

impl<T: Real> Scenario<T> {
    /// Scenario with unit rate weights, zero harvest weights and targets, and
    /// unit efficiencies.
    pub fn new(
        channels: ChannelSet<T>,
        partition: UserPartition,
        power: T,
    ) -> Result<Self, ModelError> {
        let n = partition.info.len();
        let m = partition.harvest.len();
        let sc = Scenario {
            channels,
            partition,
            power,
            omega: vec![T::one(); n],
            alpha: vec![T::zero(); m],
            q: vec![T::zero(); m],
            zeta: vec![T::one(); m],
            seed: 0,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn with_omega(mut self, omega: Vec<T>) -> Result<Self, ModelError> {
        self.omega = omega;
        self.validate()?;
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: Vec<T>) -> Result<Self, ModelError> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn with_q(mut self, q: Vec<T>) -> Result<Self, ModelError> {
        self.q = q;
        self.validate()?;
        Ok(self)
    }

    pub fn with_zeta(mut self, zeta: Vec<T>) -> Result<Self, ModelError> {
        self.zeta = zeta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.partition.validate(self.channels.n_users())?;
        if !(self.power > T::zero()) || !self.power.is_finite() {
            return Err(ModelError::Parameter("total power must be positive".into()));
        }
        let n = self.n_info();
        let m = self.n_harvest();
        let check = |name: &str, v: &[T], len: usize| -> Result<(), ModelError> {
            if v.len() != len {
                return Err(ModelError::Dimension(format!(
                    "{name} has {} entries, expected {len}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::NonFinite);
            }
            if v.iter().any(|&x| x < T::zero()) {
                return Err(ModelError::Parameter(format!("{name} must be nonnegative")));
            }
            Ok(())
        };
        check("omega", &self.omega, n)?;
        check("alpha", &self.alpha, m)?;
        check("q", &self.q, m)?;
        check("zeta", &self.zeta, m)?;
        if self.zeta.iter().any(|&z| z <= T::zero() || z > T::one()) {
            return Err(ModelError::Parameter("zeta must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn n_tx(&self) -> usize {
        self.channels.n_tx()
    }

    /// Number of information users `N`.
    pub fn n_info(&self) -> usize {
        self.partition.info.len()
    }

    /// Number of harvesting users `M`.
    pub fn n_harvest(&self) -> usize {
        self.partition.harvest.len()
    }

    /// Channel of the `i`-th information user (position within `U_I`).
    pub fn info_channel(&self, i: usize) -> &CMatrix<T> {
        self.channels.get(self.partition.info[i])
    }

    /// Channel of the `j`-th harvesting user (position within `U_E`).
    pub fn harvest_channel(&self, j: usize) -> &CMatrix<T> {
        self.channels.get(self.partition.harvest[j])
    }

    /// `H_j^H H_j` for harvesting user `j`.
    pub fn harvest_gram(&self, j: usize) -> CMatrix<T> {
        let h = self.harvest_channel(j);
        linalg::hermitian_part(&(h.adjoint() * h))
    }

    /// `R_H = sum_j alpha_j H_j^H H_j`.
    pub fn weighted_harvest_gram(&self) -> CMatrix<T> {
        let n = self.n_tx();
        (0..self.n_harvest()).fold(linalg::zeros(n, n), |acc, j| {
            acc + self.harvest_gram(j).scale(self.alpha[j])
        })
    }

    pub(crate) fn check_info_index(&self, i: usize) -> Result<(), ModelError> {
        if i >= self.n_info() {
            return Err(ModelError::IndexOutOfRange {
                index: i,
                len: self.n_info(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_harvest_index(&self, j: usize) -> Result<(), ModelError> {
        if j >= self.n_harvest() {
            return Err(ModelError::IndexOutOfRange {
                index: j,
                len: self.n_harvest(),
            });
        }
        Ok(())
    }
}

/// Transmit covariances `(S_i)` of the information users.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTuple<T: Real> {
    pub mats: Vec<CMatrix<T>>,
}

impl<T: Real> CovarianceTuple<T> {
    pub fn new(mats: Vec<CMatrix<T>>) -> Self {
        CovarianceTuple { mats }
    }

    pub fn zeros(n_tx: usize, n_users: usize) -> Self {
        CovarianceTuple {
            mats: vec![linalg::zeros(n_tx, n_tx); n_users],
        }
    }

    /// `S_i = P / (N n_T) I` for every user.
    pub fn scaled_identity(n_tx: usize, n_users: usize, power: T) -> Self {
        let p = power / T::lit((n_users * n_tx) as f64);
        CovarianceTuple {
            mats: vec![linalg::identity::<T>(n_tx).scale(p); n_users],
        }
    }

    /// `S_i = P / (N n_T) 11^T` for every user (rank one, same total power as
    /// [`CovarianceTuple::scaled_identity`]).
    pub fn all_ones(n_tx: usize, n_users: usize, power: T) -> Self {
        let p = power / T::lit((n_users * n_tx) as f64);
        CovarianceTuple {
            mats: vec![CMatrix::from_element(n_tx, n_tx, linalg::creal(p)); n_users],
        }
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn n_tx(&self) -> usize {
        self.mats.first().map_or(0, |m| m.nrows())
    }

    /// `S_bar = sum_k S_k`.
    pub fn sum(&self) -> CMatrix<T> {
        let n = self.n_tx();
        self.mats.iter().fold(linalg::zeros(n, n), |acc, m| acc + m)
    }

    /// `sum_{k != i} S_k`.
    pub fn sum_except(&self, i: usize) -> CMatrix<T> {
        let n = self.n_tx();
        self.mats
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .fold(linalg::zeros(n, n), |acc, (_, m)| acc + m)
    }

    /// `sum_i Tr(S_i)`.
    pub fn total_power(&self) -> T {
        self.mats
            .iter()
            .fold(T::zero(), |acc, m| acc + linalg::trace_re(m))
    }

    pub fn scale(&self, a: T) -> Self {
        CovarianceTuple {
            mats: self.mats.iter().map(|m| m.scale(a)).collect(),
        }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: T, other: &Self) -> Self {
        CovarianceTuple {
            mats: self
                .mats
                .iter()
                .zip(&other.mats)
                .map(|(x, y)| x + y.scale(a))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-T::one(), other)
    }

    /// `sum_i Re Tr(A_i^H B_i)`.
    pub fn inner(&self, other: &Self) -> T {
        self.mats
            .iter()
            .zip(&other.mats)
            .fold(T::zero(), |acc, (x, y)| acc + linalg::frob_inner(x, y))
    }

    pub fn norm_sq(&self) -> T {
        self.mats
            .iter()
            .fold(T::zero(), |acc, m| acc + linalg::frob_norm_sq(m))
    }

    pub fn dist_sq(&self, other: &Self) -> T {
        self.sub(other).norm_sq()
    }

    pub fn hermitianized(&self) -> Self {
        CovarianceTuple {
            mats: self.mats.iter().map(linalg::hermitian_part).collect(),
        }
    }

    /// Smallest eigenvalue across all users.
    pub fn min_eigenvalue(&self) -> Result<T, KernelError> {
        let mut lo: Option<T> = None;
        for m in &self.mats {
            let l = linalg::lambda_min(m)?;
            lo = Some(lo.map_or(l, |x: T| x.min(l)));
        }
        Ok(lo.unwrap_or_else(T::zero))
    }

    pub fn is_finite(&self) -> bool {
        self.mats.iter().all(linalg::is_finite)
    }
}
