use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ModelError;
use crate::linalg::{self, cplx, CMatrix};
use crate::scalar::Real;

/// Per-user channel matrices `H_k` (`n_Rk x n_T`), all sharing one
/// transmitter.
#[derive(Debug, Clone)]
pub struct ChannelSet<T: Real> {
    n_tx: usize,
    h: Vec<CMatrix<T>>,
    norm_scales: Vec<T>,
}

impl<T: Real> ChannelSet<T> {
    pub fn new(n_tx: usize, h: Vec<CMatrix<T>>) -> Result<Self, ModelError> {
        let k = h.len();
        Self::with_scales(n_tx, h, vec![T::one(); k])
    }

    pub fn with_scales(
        n_tx: usize,
        h: Vec<CMatrix<T>>,
        norm_scales: Vec<T>,
    ) -> Result<Self, ModelError> {
        if n_tx == 0 {
            return Err(ModelError::Dimension(
                "transmitter needs at least one antenna".into(),
            ));
        }
        if norm_scales.len() != h.len() {
            return Err(ModelError::Dimension(format!(
                "{} norm scales for {} users",
                norm_scales.len(),
                h.len()
            )));
        }
        for (k, m) in h.iter().enumerate() {
            if m.ncols() != n_tx {
                return Err(ModelError::Dimension(format!(
                    "user {k}: channel has {} columns, transmitter has {n_tx} antennas",
                    m.ncols()
                )));
            }
            if m.nrows() == 0 {
                return Err(ModelError::Dimension(format!(
                    "user {k} has no receive antennas"
                )));
            }
            if !linalg::is_finite(m) {
                return Err(ModelError::NonFinite);
            }
        }
        Ok(ChannelSet {
            n_tx,
            h,
            norm_scales,
        })
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_users(&self) -> usize {
        self.h.len()
    }

    pub fn rx_antennas(&self) -> Vec<usize> {
        self.h.iter().map(|m| m.nrows()).collect()
    }

    pub fn norm_scales(&self) -> &[T] {
        &self.norm_scales
    }

    pub fn get(&self, k: usize) -> &CMatrix<T> {
        &self.h[k]
    }

    pub fn matrices(&self) -> &[CMatrix<T>] {
        &self.h
    }

    /// Replaces `H_k` by `N_k^{-1/2} H_k` so that user `k` sees unit noise
    /// covariance.
    pub fn whiten(&mut self, k: usize, noise_cov: &CMatrix<T>) -> Result<(), ModelError> {
        if k >= self.h.len() {
            return Err(ModelError::IndexOutOfRange {
                index: k,
                len: self.h.len(),
            });
        }
        if noise_cov.nrows() != self.h[k].nrows() {
            return Err(ModelError::Dimension(format!(
                "noise covariance of user {k} is {}x{}, channel has {} rows",
                noise_cov.nrows(),
                noise_cov.ncols(),
                self.h[k].nrows()
            )));
        }
        let w = linalg::inv_sqrt_pd(noise_cov)?;
        self.h[k] = w * &self.h[k];
        Ok(())
    }
}

/// Draws i.i.d. `CN(0, 1)` channel entries (real and imaginary parts each
/// with variance 1/2) and scales user `k` by `norm_scales[k]`.
///
/// Deterministic for a fixed seed.
pub fn generate_channels<T: Real>(
    seed: u64,
    n_tx: usize,
    rx_antennas: &[usize],
    norm_scales: &[T],
) -> Result<ChannelSet<T>, ModelError> {
    if norm_scales.len() != rx_antennas.len() {
        return Err(ModelError::Dimension(format!(
            "{} norm scales for {} users",
            norm_scales.len(),
            rx_antennas.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = std::f64::consts::FRAC_1_SQRT_2;
    let h = rx_antennas
        .iter()
        .zip(norm_scales)
        .map(|(&rows, &scale)| {
            CMatrix::from_fn(rows, n_tx, |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                cplx(T::lit(re * sd) * scale, T::lit(im * sd) * scale)
            })
        })
        .collect();
    ChannelSet::with_scales(n_tx, h, norm_scales.to_vec())
}

/// Disjoint split of the users into information receivers `U_I` and energy
/// harvesters `U_E`, given as indices into the [`ChannelSet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserPartition {
    pub info: Vec<usize>,
    pub harvest: Vec<usize>,
}

impl UserPartition {
    pub fn new(info: Vec<usize>, harvest: Vec<usize>, n_users: usize) -> Result<Self, ModelError> {
        let p = UserPartition { info, harvest };
        p.validate(n_users)?;
        Ok(p)
    }

    /// The first `n_info` users receive information, the next `n_harvest`
    /// harvest energy.
    pub fn contiguous(n_info: usize, n_harvest: usize) -> Self {
        UserPartition {
            info: (0..n_info).collect(),
            harvest: (n_info..n_info + n_harvest).collect(),
        }
    }

    pub fn validate(&self, n_users: usize) -> Result<(), ModelError> {
        if self.info.is_empty() {
            return Err(ModelError::Partition(
                "at least one information user is required".into(),
            ));
        }
        if self.info.len() + self.harvest.len() != n_users {
            return Err(ModelError::Partition(format!(
                "{} information + {} harvesting users do not cover {n_users} channels",
                self.info.len(),
                self.harvest.len()
            )));
        }
        let mut seen = vec![false; n_users];
        for &k in self.info.iter().chain(&self.harvest) {
            if k >= n_users {
                return Err(ModelError::Partition(format!("user {k} has no channel")));
            }
            if seen[k] {
                return Err(ModelError::Partition(format!("user {k} appears twice")));
            }
            seen[k] = true;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_channels::<f64>(11, 4, &[2, 2, 1], &[1.0, 1.0, 1.0]).unwrap();
        let b = generate_channels::<f64>(11, 4, &[2, 2, 1], &[1.0, 1.0, 1.0]).unwrap();
        for k in 0..3 {
            assert_eq!(a.get(k), b.get(k));
        }
        let c = generate_channels::<f64>(12, 4, &[2, 2, 1], &[1.0, 1.0, 1.0]).unwrap();
        assert_ne!(a.get(0), c.get(0));
    }

    #[test]
    fn zero_scale_gives_zero_channel() {
        let a = generate_channels::<f64>(1, 3, &[2, 2], &[1.0, 0.0]).unwrap();
        assert_eq!(a.get(1).norm(), 0.0);
        assert!(a.get(0).norm() > 0.0);
    }

    #[test]
    fn entries_have_unit_power() {
        let a = generate_channels::<f64>(5, 100, &[100], &[1.0]).unwrap();
        let h = a.get(0);
        let p = h.iter().map(|z| z.norm_sqr()).sum::<f64>() / 1e4;
        assert!((p - 1.0).abs() < 0.05, "empirical E|h|^2 = {p}");
        let re = h.iter().map(|z| z.re * z.re).sum::<f64>() / 1e4;
        assert!((re - 0.5).abs() < 0.05);
    }

    #[test]
    fn partition_validation() {
        assert!(UserPartition::new(vec![0, 1], vec![2], 3).is_ok());
        assert!(UserPartition::new(vec![0, 1], vec![1], 3).is_err());
        assert!(UserPartition::new(vec![0], vec![1], 3).is_err());
        assert!(UserPartition::new(vec![], vec![0], 1).is_err());
        assert!(UserPartition::new(vec![0], vec![5], 2).is_err());
    }

    #[test]
    fn bad_dimensions_rejected() {
        let h = vec![CMatrix::<f64>::zeros(2, 3)];
        assert!(ChannelSet::new(4, h).is_err());
        assert!(ChannelSet::<f64>::new(0, vec![]).is_err());
    }

    #[test]
    fn whitening_with_identity_is_noop() {
        let mut a = generate_channels::<f64>(2, 3, &[2], &[1.0]).unwrap();
        let before = a.get(0).clone();
        a.whiten(0, &linalg::identity(2)).unwrap();
        assert!((a.get(0) - &before).norm() < 1e-14);
        let noise = linalg::identity::<f64>(2).scale(4.0);
        a.whiten(0, &noise).unwrap();
        assert!((a.get(0).norm() * 2.0 - before.norm()).abs() < 1e-12);
    }
}
