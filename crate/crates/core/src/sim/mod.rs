//! Pathwise integration and the synchronization diagnostics built on it.

mod attractor;
mod integrate;
mod sync;

pub use attractor::{
    absorbing_radius, absorbing_radius_at, attractor_trajectory, averaged_absorbing_radius,
    averaged_attractor_trajectory, averaged_pullback_attractor, pullback_attractor, AttractorEstimate,
    PullbackOptions,
};
pub use integrate::{
    integrate_averaged, integrate_rode, integrate_sode_stratonovich, stochastic_heun_step, IntegratorOptions,
    Substeps,
};
pub use sync::{
    MIN_WINDOW_NODES,
    averaged_comparison, component_gap, contraction_envelope, fit_decay_rate, m_bound, nu_sweep, pairwise_gap,
    stationary_residual, AveragedReport, AveragedRow, ComponentGapReport, EnvelopeCheck, PairwiseReport,
    ResidualReport, SweepReport, SweepRow,
};

use crate::dynamics::{Frame, StateVector};
use crate::error::{Result, SyncError};
use crate::noise::TimeGrid;
use crate::scalar::{distance, Real};

/// States of all `N` components on a (sub-)grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle<T> {
    grid: TimeGrid<T>,
    frame: Frame,
    n: usize,
    d: usize,
    /// Node-major: `states[k * n * d + j * d + c]`.
    states: Vec<T>,
    seed: u64,
}

impl<T: Real> TrajectoryBundle<T> {
    pub(crate) fn from_parts(grid: TimeGrid<T>, frame: Frame, n: usize, d: usize, states: Vec<T>, seed: u64) -> Self {
        debug_assert_eq!(states.len(), grid.n_points() * n * d);
        TrajectoryBundle {
            grid,
            frame,
            n,
            d,
            states,
            seed,
        }
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn len(&self) -> usize {
        self.grid.n_points()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Flattened state at node `k`.
    pub fn state(&self, k: usize) -> &[T] {
        let w = self.n * self.d;
        &self.states[k * w..(k + 1) * w]
    }

    pub fn component(&self, k: usize, j: usize) -> &[T] {
        let s = self.state(k);
        &s[j * self.d..(j + 1) * self.d]
    }

    pub fn state_vector(&self, k: usize) -> StateVector<T> {
        StateVector::new(self.frame, self.n, self.d, self.state(k).to_vec()).expect("consistent dimensions")
    }

    pub fn last_state(&self) -> StateVector<T> {
        self.state_vector(self.len() - 1)
    }

    /// State at time `t`, which must be a node of the bundle's grid.
    pub fn state_at(&self, t: T) -> Result<StateVector<T>> {
        Ok(self.state_vector(self.grid.index_of(t)?))
    }

    /// The nodes of `[t0, t1]`.
    pub fn window(&self, t0: T, t1: T) -> Result<TrajectoryBundle<T>> {
        let (grid, i0) = self.grid.window(t0, t1)?;
        let w = self.n * self.d;
        let states = self.states[i0 * w..(i0 + grid.n_points()) * w].to_vec();
        Ok(TrajectoryBundle {
            grid,
            frame: self.frame,
            n: self.n,
            d: self.d,
            states,
            seed: self.seed,
        })
    }

    /// Largest node-wise Euclidean distance to `other`.
    pub fn sup_distance(&self, other: &TrajectoryBundle<T>) -> Result<T> {
        self.check_compatible(other)?;
        Ok((0..self.len())
            .map(|k| distance(self.state(k), other.state(k)))
            .fold(T::zero(), |a, b| a.max(b)))
    }

    /// Largest node-wise Euclidean norm.
    pub fn sup_norm(&self) -> T {
        (0..self.len())
            .map(|k| crate::scalar::norm(self.state(k)))
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub(crate) fn check_compatible(&self, other: &TrajectoryBundle<T>) -> Result<()> {
        if self.grid != other.grid {
            return Err(SyncError::Comparison("trajectories live on different grids".into()));
        }
        if self.frame != other.frame {
            return Err(SyncError::Comparison("trajectories are in different frames".into()));
        }
        if self.n != other.n || self.d != other.d {
            return Err(SyncError::Comparison("trajectories have different shapes".into()));
        }
        Ok(())
    }

    /// Node-wise conversion to the other frame.
    pub fn convert(&self, ou: &crate::noise::OUPathSet<T>, target: Frame) -> Result<TrajectoryBundle<T>> {
        if target == self.frame {
            return Ok(self.clone());
        }
        let i0 = ou.grid().index_of(self.grid.time(0))?;
        let mut states = Vec::with_capacity(self.states.len());
        for k in 0..self.len() {
            let ou_k = ou.at(i0 + k);
            let converted = crate::dynamics::frame_convert(&self.state_vector(k), &ou_k, target).map_err(|e| {
                with_time(e, self.grid.time(k))
            })?;
            states.extend(converted.into_vec());
        }
        Ok(TrajectoryBundle {
            grid: self.grid,
            frame: target,
            n: self.n,
            d: self.d,
            states,
            seed: self.seed,
        })
    }

    /// Writes `t, j, x_1..x_d` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, comment: Option<&str>) -> std::io::Result<()> {
        let mut cols = vec!["t".to_string(), "j".to_string()];
        cols.extend((1..=self.d).map(|c| format!("x{c}")));
        if let Some(c) = comment {
            writeln!(out, "# {c} columns={}", cols.join(","))?;
        }
        writeln!(out, "{}", cols.join(","))?;
        for k in 0..self.len() {
            let t = crate::noise::fmt12(self.grid.time(k).to_f64_lossy());
            for j in 0..self.n {
                let vals: Vec<String> = self
                    .component(k, j)
                    .iter()
                    .map(|v| crate::noise::fmt12(v.to_f64_lossy()))
                    .collect();
                writeln!(out, "{t},{},{}", j + 1, vals.join(","))?;
            }
        }
        Ok(())
    }
}

/// Attaches the time at which a numeric-range error occurred.
pub(crate) fn with_time<T: Real>(err: SyncError, t: T) -> SyncError {
    match err {
        SyncError::NumericRange { detail, .. } => SyncError::NumericRange {
            time: t.to_f64_lossy(),
            detail,
        },
        other => other,
    }
}
