//! Parameter-trajectory accumulation: SWA mean, diagonal second-moment
//! variance and the low-rank deviation matrix used by SWAG.
//!
//! A [`SwagCollector`] absorbs one [`ParamSnapshot`] at a time in O(dim)
//! memory per running moment plus at most `rank_cap` deviation columns.
//! [`SwagCollector::finalize`] consumes the collector and produces an
//! immutable [`PosteriorApprox`].

mod file;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use file::{
    sidecar_path, read_sidecar, write_sidecar, Trajectory, TrajectoryMeta, CHECKPOINT_TAG,
    FORMAT_VERSION, TRAJECTORY_MAGIC,
};

/// One flat parameter vector captured during training.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSnapshot {
    values: Vec<f64>,
}

impl ParamSnapshot {
    /// Fails on an empty vector or any NaN/Inf entry.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("parameter snapshot must be non-empty".into()));
        }
        check_finite(&values)?;
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for ParamSnapshot {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Which running mean a deviation column is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationMode {
    /// `D_i = θ_i − θ̂_i`, where `θ̂_i` already includes snapshot `i`.
    #[default]
    PostUpdate,
    /// `D_i = θ_i − θ̂_{i−1}`, the mean of the snapshots before `i`.
    /// The first column is zero since no earlier mean exists.
    PreUpdate,
}

impl DeviationMode {
    fn code(self) -> u32 {
        match self {
            DeviationMode::PostUpdate => 0,
            DeviationMode::PreUpdate => 1,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(DeviationMode::PostUpdate),
            1 => Some(DeviationMode::PreUpdate),
            _ => None,
        }
    }
}

/// Running SWAG statistics. Updates must be externally serialized.
#[derive(Debug, Clone, PartialEq)]
pub struct SwagCollector {
    dim: usize,
    count: usize,
    running_mean: Vec<f64>,
    running_sq_mean: Vec<f64>,
    deviations: VecDeque<Vec<f64>>,
    rank_cap: usize,
    mode: DeviationMode,
}

/// Plain-data view of a collector, used for checkpointing and restore.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectorState {
    pub count: usize,
    pub rank_cap: usize,
    pub mode: DeviationMode,
    pub running_mean: Vec<f64>,
    pub running_sq_mean: Vec<f64>,
    /// Oldest first.
    pub deviations: Vec<Vec<f64>>,
}

impl SwagCollector {
    pub fn new(dim: usize, rank_cap: usize) -> Result<Self> {
        Self::with_mode(dim, rank_cap, DeviationMode::default())
    }

    pub fn with_mode(dim: usize, rank_cap: usize, mode: DeviationMode) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("collector dimension must be at least 1".into()));
        }
        if rank_cap < 2 {
            return Err(Error::Config(format!(
                "rank cap must be at least 2, got {rank_cap}"
            )));
        }
        Ok(Self {
            dim,
            count: 0,
            running_mean: vec![0.0; dim],
            running_sq_mean: vec![0.0; dim],
            deviations: VecDeque::with_capacity(rank_cap),
            rank_cap,
            mode,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn rank_cap(&self) -> usize {
        self.rank_cap
    }

    pub fn mode(&self) -> DeviationMode {
        self.mode
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_sq_mean(&self) -> &[f64] {
        &self.running_sq_mean
    }

    /// Retained deviation columns, oldest first.
    pub fn deviations(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.deviations.iter().map(Vec::as_slice)
    }

    /// Absorbs snapshot `i = count + 1`.
    pub fn update(&mut self, snap: &ParamSnapshot) -> Result<()> {
        if snap.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "snapshot",
                expected: self.dim,
                found: snap.dim(),
            });
        }
        check_finite(snap.values())?;

        let first = self.count == 0;
        self.count += 1;
        let n = self.count as f64;

        let column = if self.deviations.len() == self.rank_cap {
            // Reuse the evicted buffer.
            self.deviations.pop_front()
        } else {
            None
        };
        let mut column = column.unwrap_or_else(|| vec![0.0; self.dim]);

        for (j, &theta) in snap.values().iter().enumerate() {
            let prev_mean = self.running_mean[j];
            let mean = prev_mean + (theta - prev_mean) / n;
            let sq = self.running_sq_mean[j];
            self.running_sq_mean[j] = sq + (theta * theta - sq) / n;
            self.running_mean[j] = mean;
            column[j] = match self.mode {
                DeviationMode::PostUpdate => theta - mean,
                DeviationMode::PreUpdate if first => 0.0,
                DeviationMode::PreUpdate => theta - prev_mean,
            };
        }
        self.deviations.push_back(column);
        Ok(())
    }

    /// Consumes the collector; needs at least two snapshots.
    pub fn finalize(self) -> Result<PosteriorApprox> {
        if self.count < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                found: self.count,
            });
        }
        let diag_var = self
            .running_sq_mean
            .iter()
            .zip(&self.running_mean)
            .map(|(&sq, &m)| clamped_variance(sq, m))
            .collect();
        Ok(PosteriorApprox {
            mean: self.running_mean,
            diag_var,
            deviations: self.deviations.into_iter().collect(),
            snapshot_count: self.count,
        })
    }

    pub fn state(&self) -> CollectorState {
        CollectorState {
            count: self.count,
            rank_cap: self.rank_cap,
            mode: self.mode,
            running_mean: self.running_mean.clone(),
            running_sq_mean: self.running_sq_mean.clone(),
            deviations: self.deviations.iter().cloned().collect(),
        }
    }

    /// Rebuilds a collector, checking every structural invariant.
    pub fn from_state(state: CollectorState) -> Result<Self> {
        let dim = state.running_mean.len();
        let mut c = Self::with_mode(dim, state.rank_cap, state.mode)?;
        if state.running_sq_mean.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "running second moment",
                expected: dim,
                found: state.running_sq_mean.len(),
            });
        }
        let expected_cols = state.count.min(state.rank_cap);
        if state.deviations.len() != expected_cols {
            return Err(Error::Data(format!(
                "collector with {} snapshots and rank cap {} must hold {expected_cols} deviation columns, found {}",
                state.count,
                state.rank_cap,
                state.deviations.len()
            )));
        }
        check_finite(&state.running_mean)?;
        check_finite(&state.running_sq_mean)?;
        for col in &state.deviations {
            if col.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "deviation column",
                    expected: dim,
                    found: col.len(),
                });
            }
            check_finite(col)?;
        }
        c.count = state.count;
        c.running_mean = state.running_mean;
        c.running_sq_mean = state.running_sq_mean;
        c.deviations = state.deviations.into();
        Ok(c)
    }
}

/// `max(0, E[θ²] − E[θ]²)`; the clamp absorbs cancellation round-off.
pub fn clamped_variance(sq_mean: f64, mean: f64) -> f64 {
    (sq_mean - mean * mean).max(0.0)
}

/// Finalized SWAG posterior: `N(mean, ½(diag(diag_var) + DDᵀ/(K−1)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorApprox {
    mean: Vec<f64>,
    diag_var: Vec<f64>,
    deviations: Vec<Vec<f64>>,
    snapshot_count: usize,
}

impl PosteriorApprox {
    /// Assembles a posterior from explicit factors. `deviations` are the
    /// columns of D, oldest first.
    pub fn from_parts(
        mean: Vec<f64>,
        diag_var: Vec<f64>,
        deviations: Vec<Vec<f64>>,
        snapshot_count: usize,
    ) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 {
            return Err(Error::Config("posterior dimension must be at least 1".into()));
        }
        if diag_var.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "diagonal variance",
                expected: dim,
                found: diag_var.len(),
            });
        }
        check_finite(&mean)?;
        check_finite(&diag_var)?;
        if let Some(j) = diag_var.iter().position(|&v| v < 0.0) {
            return Err(Error::Data(format!(
                "diagonal variance entry {j} is negative ({})",
                diag_var[j]
            )));
        }
        if deviations.len() > snapshot_count {
            return Err(Error::Data(format!(
                "rank {} exceeds snapshot count {snapshot_count}",
                deviations.len()
            )));
        }
        for col in &deviations {
            if col.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "deviation column",
                    expected: dim,
                    found: col.len(),
                });
            }
            check_finite(col)?;
        }
        Ok(Self {
            mean,
            diag_var,
            deviations,
            snapshot_count,
        })
    }

    /// A posterior with zero covariance around `mean`.
    pub fn point_mass(mean: ParamSnapshot) -> Self {
        let dim = mean.dim();
        Self {
            mean: mean.into_values(),
            diag_var: vec![0.0; dim],
            deviations: vec![vec![0.0; dim]; 2],
            snapshot_count: 2,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// The SWA solution as a snapshot.
    pub fn swa_params(&self) -> ParamSnapshot {
        ParamSnapshot {
            values: self.mean.clone(),
        }
    }

    pub fn diag_var(&self) -> &[f64] {
        &self.diag_var
    }

    /// Columns of D, oldest first.
    pub fn deviation_columns(&self) -> &[Vec<f64>] {
        &self.deviations
    }

    /// Number of retained deviation columns (K_eff).
    pub fn rank(&self) -> usize {
        self.deviations.len()
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshot_count
    }

    /// Dense `½(diag(diag_var) + DDᵀ/(rank−1))`, row-major. Quadratic in
    /// dim; for diagnostics and tests on small models only.
    pub fn covariance_dense(&self) -> Result<Vec<Vec<f64>>> {
        let rank = self.rank();
        if rank < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                found: rank,
            });
        }
        let dim = self.dim();
        let inv = 1.0 / (rank as f64 - 1.0);
        let mut cov = vec![vec![0.0; dim]; dim];
        for a in 0..dim {
            for b in a..dim {
                let low_rank: f64 = self.deviations.iter().map(|d| d[a] * d[b]).sum();
                let mut v = low_rank * inv;
                if a == b {
                    v += self.diag_var[a];
                }
                cov[a][b] = 0.5 * v;
                cov[b][a] = 0.5 * v;
            }
        }
        Ok(cov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(v: &[f64]) -> ParamSnapshot {
        ParamSnapshot::new(v.to_vec()).unwrap()
    }

    #[test]
    fn new_collector_is_empty() {
        let c = SwagCollector::new(3, 5).unwrap();
        assert_eq!(c.count(), 0);
        assert_eq!(c.running_mean(), &[0.0; 3]);
        assert_eq!(c.running_sq_mean(), &[0.0; 3]);
        assert_eq!(c.deviations().len(), 0);
        assert!(SwagCollector::new(1, 2).is_ok());
    }

    #[test]
    fn rank_cap_below_two_is_rejected() {
        assert!(matches!(SwagCollector::new(3, 1), Err(Error::Config(_))));
        assert!(matches!(SwagCollector::new(0, 5), Err(Error::Config(_))));
    }

    #[test]
    fn running_moments_two_snapshots() {
        let mut c = SwagCollector::new(2, 5).unwrap();
        c.update(&snap(&[2.0, 4.0])).unwrap();
        c.update(&snap(&[4.0, 8.0])).unwrap();
        assert_eq!(c.running_mean(), &[3.0, 6.0]);
        assert_eq!(c.running_sq_mean(), &[10.0, 40.0]);
    }

    #[test]
    fn constant_trajectory_has_zero_deviation() {
        let mut c = SwagCollector::new(3, 4).unwrap();
        for _ in 0..7 {
            c.update(&snap(&[0.1, -2.7, 1e-3])).unwrap();
        }
        assert_eq!(c.running_mean(), &[0.1, -2.7, 1e-3]);
        assert!(c.deviations().all(|d| d.iter().all(|&x| x == 0.0)));
        let p = c.finalize().unwrap();
        assert!(p.diag_var().iter().all(|&v| v == 0.0));
        assert!(p.deviation_columns().iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn eviction_keeps_latest_columns() {
        let mut c = SwagCollector::new(1, 2).unwrap();
        for v in [1.0, 5.0, 9.0] {
            c.update(&snap(&[v])).unwrap();
        }
        // prefix means: 1, 3, 5 -> deviations 0, 2, 4
        let cols: Vec<f64> = c.deviations().map(|d| d[0]).collect();
        assert_eq!(cols, vec![2.0, 4.0]);
    }

    #[test]
    fn pre_update_mode_uses_previous_mean() {
        let mut c = SwagCollector::with_mode(1, 5, DeviationMode::PreUpdate).unwrap();
        for v in [1.0, 5.0, 9.0] {
            c.update(&snap(&[v])).unwrap();
        }
        let cols: Vec<f64> = c.deviations().map(|d| d[0]).collect();
        assert_eq!(cols, vec![0.0, 4.0, 6.0]);
    }

    #[test]
    fn update_rejects_bad_snapshots() {
        let mut c = SwagCollector::new(2, 3).unwrap();
        assert!(matches!(
            c.update(&snap(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            ParamSnapshot::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(ParamSnapshot::new(vec![f64::INFINITY]).is_err());
        assert_eq!(c.count(), 0);
    }

    #[test]
    fn finalize_two_scalar_snapshots() {
        let mut c = SwagCollector::new(1, 5).unwrap();
        c.update(&snap(&[0.0])).unwrap();
        c.update(&snap(&[2.0])).unwrap();
        let p = c.finalize().unwrap();
        assert_eq!(p.mean(), &[1.0]);
        assert_eq!(p.diag_var(), &[1.0]);
        assert_eq!(p.rank(), 2);
        assert_eq!(p.snapshot_count(), 2);
    }

    #[test]
    fn finalize_needs_two_snapshots() {
        let mut c = SwagCollector::new(1, 5).unwrap();
        assert!(matches!(
            c.clone().finalize(),
            Err(Error::InsufficientData { found: 0, .. })
        ));
        c.update(&snap(&[1.0])).unwrap();
        assert!(matches!(
            c.finalize(),
            Err(Error::InsufficientData { found: 1, .. })
        ));
    }

    #[test]
    fn negative_round_off_variance_clamps_to_zero() {
        let m = 0.1_f64;
        let sq = 0.01_f64;
        assert!(sq - m * m < 0.0 && sq - m * m > -1e-17);
        let c = SwagCollector::from_state(CollectorState {
            count: 2,
            rank_cap: 2,
            mode: DeviationMode::PostUpdate,
            running_mean: vec![m],
            running_sq_mean: vec![sq],
            deviations: vec![vec![0.0], vec![0.0]],
        })
        .unwrap();
        assert_eq!(c.finalize().unwrap().diag_var(), &[0.0]);
        assert_eq!(clamped_variance(1.0 - 1e-18, 1.0), 0.0);
    }

    #[test]
    fn from_state_checks_column_count() {
        let err = SwagCollector::from_state(CollectorState {
            count: 3,
            rank_cap: 2,
            mode: DeviationMode::PostUpdate,
            running_mean: vec![0.0],
            running_sq_mean: vec![0.0],
            deviations: vec![vec![0.0]],
        });
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn dense_covariance_hand_example() {
        let p = PosteriorApprox::from_parts(
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            2,
        )
        .unwrap();
        assert_eq!(
            p.covariance_dense().unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 0.0]]
        );
    }

    #[test]
    fn dense_covariance_zero_factors() {
        let p = PosteriorApprox::point_mass(snap(&[1.0, 2.0, 3.0]));
        let cov = p.covariance_dense().unwrap();
        assert!(cov.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn dense_covariance_needs_rank_two() {
        let p = PosteriorApprox::from_parts(vec![0.0], vec![1.0], vec![vec![1.0]], 1).unwrap();
        assert!(p.covariance_dense().is_err());
    }

    #[test]
    fn from_parts_validates() {
        assert!(PosteriorApprox::from_parts(vec![0.0], vec![-1.0], vec![], 2).is_err());
        assert!(PosteriorApprox::from_parts(vec![0.0], vec![0.0, 1.0], vec![], 2).is_err());
        assert!(
            PosteriorApprox::from_parts(vec![0.0], vec![0.0], vec![vec![0.0]; 3], 2).is_err()
        );
    }
}
