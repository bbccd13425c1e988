//! Driver noise and the Ornstein-Uhlenbeck conjugating processes.
//!
//! A [`NoiseGrid`] is the operational stand-in for a sample path ω: a seed,
//! a uniform two-sided time grid and the Wiener increments of `m` independent
//! scalar drivers on it. Everything downstream (OU paths, shifted paths,
//! trajectories) is a pure function of it.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SyncError};
use crate::scalar::Real;

/// Uniform time grid `t_min, t_min + h, ..., t_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    t_min: T,
    t_max: T,
    h: T,
    n_points: usize,
    /// Index of the node at t = 0, when the grid contains it.
    zero: Option<usize>,
}

impl<T: Real> TimeGrid<T> {
    /// Builds a grid; the node count is `round((t_max - t_min)/h) + 1` and
    /// `t_max` is snapped onto the last node. If the interval contains 0 it
    /// must be a node.
    pub fn new(t_min: T, t_max: T, h: T) -> Result<Self> {
        if !(h > T::zero()) || !h.is_finite() {
            return Err(SyncError::Config(format!("grid step must be positive, got {h}")));
        }
        if !(t_min < t_max) || !t_min.is_finite() || !t_max.is_finite() {
            return Err(SyncError::Config(format!(
                "grid requires t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        let steps = ((t_max - t_min) / h).round();
        let steps = steps
            .to_usize()
            .ok_or_else(|| SyncError::Config("grid too large".into()))?;
        if steps == 0 {
            return Err(SyncError::Config("grid has a single node".into()));
        }
        let zero = if t_min <= T::zero() && T::zero() <= t_max {
            let r = -t_min / h;
            let k = r.round();
            if (r - k).abs() > T::grid_eps() * r.abs().max(T::one()) {
                return Err(SyncError::Config(format!(
                    "t = 0 must be a grid node (t_min = {t_min}, h = {h})"
                )));
            }
            Some(k.to_usize().unwrap_or(0))
        } else {
            None
        };
        let mut grid = TimeGrid {
            t_min,
            t_max,
            h,
            n_points: steps + 1,
            zero,
        };
        if let Some(k0) = zero {
            grid.t_min = -T::lit(k0 as f64) * h;
        }
        grid.t_max = grid.time(steps);
        Ok(grid)
    }

    pub fn t_min(&self) -> T {
        self.t_min
    }

    pub fn t_max(&self) -> T {
        self.t_max
    }

    pub fn step(&self) -> T {
        self.h
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn zero_index(&self) -> Option<usize> {
        self.zero
    }

    /// Time of node `k`. Nodes are measured from the zero node when there is
    /// one, so t = 0 is represented exactly.
    #[inline]
    pub fn time(&self, k: usize) -> T {
        match self.zero {
            Some(k0) => T::lit(k as f64 - k0 as f64) * self.h,
            None => self.t_min + T::lit(k as f64) * self.h,
        }
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.n_points).map(|k| self.time(k)).collect()
    }

    /// Index of the node at time `t`.
    pub fn index_of(&self, t: T) -> Result<usize> {
        let r = (t - self.t_min) / self.h;
        let k = r.round();
        if (r - k).abs() > T::grid_eps() * r.abs().max(T::one()) {
            return Err(SyncError::Alignment {
                time: t.to_f64_lossy(),
                step: self.h.to_f64_lossy(),
            });
        }
        if k < T::zero() || k > T::lit((self.n_points - 1) as f64) {
            return Err(SyncError::Range(format!(
                "t = {t} outside grid [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        Ok(k.to_usize().unwrap_or(0))
    }

    /// Sub-grid covering `[t0, t1]` and the index of `t0` in `self`.
    pub fn window(&self, t0: T, t1: T) -> Result<(TimeGrid<T>, usize)> {
        let i0 = self.index_of(t0)?;
        let i1 = self.index_of(t1)?;
        if i1 <= i0 {
            return Err(SyncError::Range(format!("empty window [{t0}, {t1}]")));
        }
        let zero = self.zero.and_then(|k0| (i0..=i1).contains(&k0).then(|| k0 - i0));
        Ok((
            TimeGrid {
                t_min: self.time(i0),
                t_max: self.time(i1),
                h: self.h,
                n_points: i1 - i0 + 1,
                zero,
            },
            i0,
        ))
    }

    /// The same nodes relabelled by `t -> t - s`; `s` must be a node.
    pub fn translated(&self, s: T) -> Result<TimeGrid<T>> {
        let ks = self.index_of(s)?;
        Ok(TimeGrid {
            t_min: self.t_min - s,
            t_max: self.t_max - s,
            h: self.h,
            n_points: self.n_points,
            zero: Some(ks),
        }
        .resnapped())
    }

    fn resnapped(mut self) -> Self {
        self.t_min = self.time(0);
        self.t_max = self.time(self.n_points - 1);
        self
    }
}

/// Two-sided Wiener increments for `m` scalar drivers on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid<T> {
    grid: TimeGrid<T>,
    /// `increments[i][k] = W^(i)(t_{k+1}) - W^(i)(t_k)`.
    increments: Vec<Vec<T>>,
    /// Stationary state `∫_{-∞}^{t_min} e^{τ - t_min} dW^(i)_τ` of the unit OU
    /// process of each driver at the first node, distributed N(0, 1/2).
    pre_window: Vec<T>,
    seed: u64,
}

/// Draws the driver path for `(seed, grid, m)`.
///
/// Increments are i.i.d. N(0, h). The function is deterministic in its
/// arguments and independent of the scalar type.
pub fn sample_wiener<T: Real>(seed: u64, grid: TimeGrid<T>, m: usize) -> Result<NoiseGrid<T>> {
    if m == 0 {
        return Err(SyncError::Config("at least one driver is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_h = grid.step().to_f64_lossy().sqrt();
    let n_inc = grid.n_points() - 1;
    let increments = (0..m)
        .map(|_| {
            (0..n_inc)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    T::lit(z * sqrt_h)
                })
                .collect()
        })
        .collect();
    let pre_window = (0..m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z * std::f64::consts::FRAC_1_SQRT_2)
        })
        .collect();
    Ok(NoiseGrid {
        grid,
        increments,
        pre_window,
        seed,
    })
}

impl<T: Real> NoiseGrid<T> {
    /// Wraps externally supplied increments (one row per driver).
    pub fn from_increments(
        grid: TimeGrid<T>,
        increments: Vec<Vec<T>>,
        pre_window: Vec<T>,
        seed: u64,
    ) -> Result<Self> {
        if increments.is_empty() {
            return Err(SyncError::Config("at least one driver is required".into()));
        }
        if increments.iter().any(|r| r.len() + 1 != grid.n_points()) {
            return Err(SyncError::Dimension(format!(
                "each increment row needs {} entries",
                grid.n_points() - 1
            )));
        }
        if pre_window.len() != increments.len() {
            return Err(SyncError::Dimension("one pre-window state per driver".into()));
        }
        Ok(NoiseGrid {
            grid,
            increments,
            pre_window,
            seed,
        })
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn n_drivers(&self) -> usize {
        self.increments.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn increments(&self, i: usize) -> &[T] {
        &self.increments[i]
    }

    pub fn pre_window(&self) -> &[T] {
        &self.pre_window
    }

    /// Node used as the path origin: t = 0 if on the grid, else the first node.
    fn anchor(&self) -> usize {
        self.grid.zero_index().unwrap_or(0)
    }

    /// `W^(i)(t_k)` for every node, with `W^(i)` vanishing at the anchor node.
    pub fn wiener_path(&self, i: usize) -> Vec<T> {
        let inc = &self.increments[i];
        let n = self.grid.n_points();
        let k0 = self.anchor();
        let mut w = vec![T::zero(); n];
        for k in k0..n - 1 {
            w[k + 1] = w[k] + inc[k];
        }
        for k in (0..k0).rev() {
            w[k] = w[k + 1] - inc[k];
        }
        w
    }
}

/// Path of `θ_s ω`: `W(· + s) - W(s)` on the relabelled grid.
///
/// `s` must be a grid node so that the shifted grid still contains t = 0.
pub fn shift_path<T: Real>(noise: &NoiseGrid<T>, s: T) -> Result<NoiseGrid<T>> {
    let grid = noise.grid.translated(s)?;
    Ok(NoiseGrid {
        grid,
        increments: noise.increments.clone(),
        pre_window: noise.pre_window.clone(),
        seed: noise.seed,
    })
}

/// Initial condition of the OU recursion at the first grid node.
#[derive(Debug, Clone, PartialEq)]
pub enum OuInit<T> {
    /// Joint Gaussian with covariance ½ C Cᵀ, built from the noise's
    /// pre-window draws.
    Stationary,
    /// One value per OU component.
    Explicit(Vec<T>),
}

/// `N` OU paths `O^(j)` driven by shared drivers with coefficients `c_i^(j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OUPathSet<T> {
    grid: TimeGrid<T>,
    values: Vec<Vec<T>>,
    coeffs: Vec<Vec<T>>,
}

/// Builds the OU paths `dO^(j) = -O^(j) dt + Σ_i c_i^(j) dW^(i)` by the
/// exponential-Euler recursion `O_{k+1} = e^{-h} O_k + Σ_i c_i^(j) ΔW_k^(i)`.
pub fn build_ou_paths<T: Real>(
    noise: &NoiseGrid<T>,
    coeffs: &[Vec<T>],
    init: OuInit<T>,
) -> Result<OUPathSet<T>> {
    if coeffs.is_empty() {
        return Err(SyncError::Config("need at least one OU component".into()));
    }
    let m = noise.n_drivers();
    if let Some(row) = coeffs.iter().find(|r| r.len() != m) {
        return Err(SyncError::Dimension(format!(
            "coefficient row has {} entries but the noise has {m} drivers",
            row.len()
        )));
    }
    let start: Vec<T> = match init {
        OuInit::Stationary => coeffs
            .iter()
            .map(|row| crate::scalar::dot(row, &noise.pre_window))
            .collect(),
        OuInit::Explicit(v) => {
            if v.len() != coeffs.len() {
                return Err(SyncError::Dimension(format!(
                    "{} initial values for {} OU components",
                    v.len(),
                    coeffs.len()
                )));
            }
            v
        }
    };
    let n = noise.grid.n_points();
    let decay = (-noise.grid.step()).exp();
    let values = coeffs
        .iter()
        .zip(start)
        .map(|(row, o0)| {
            let mut path = Vec::with_capacity(n);
            path.push(o0);
            let mut o = o0;
            for k in 0..n - 1 {
                let mut kick = T::zero();
                for (i, &c) in row.iter().enumerate() {
                    if c != T::zero() {
                        kick += c * noise.increments[i][k];
                    }
                }
                o = decay * o + kick;
                path.push(o);
            }
            path
        })
        .collect();
    Ok(OUPathSet {
        grid: noise.grid,
        values,
        coeffs: coeffs.to_vec(),
    })
}

impl<T: Real> OUPathSet<T> {
    /// Injects arbitrary paths, e.g. synthetic or smooth test signals.
    pub fn from_values(grid: TimeGrid<T>, values: Vec<Vec<T>>, coeffs: Vec<Vec<T>>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| v.len() != grid.n_points()) {
            return Err(SyncError::Dimension(format!(
                "each OU path needs {} values",
                grid.n_points()
            )));
        }
        if coeffs.len() != values.len() {
            return Err(SyncError::Dimension("one coefficient row per OU path".into()));
        }
        Ok(OUPathSet {
            grid,
            values,
            coeffs,
        })
    }

    /// All-zero paths for `n` components on `grid`.
    pub fn zeros(grid: TimeGrid<T>, n: usize) -> Self {
        OUPathSet {
            grid,
            values: vec![vec![T::zero(); grid.n_points()]; n],
            coeffs: vec![Vec::new(); n],
        }
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn n_components(&self) -> usize {
        self.values.len()
    }

    pub fn coeffs(&self) -> &[Vec<T>] {
        &self.coeffs
    }

    pub fn path(&self, j: usize) -> &[T] {
        &self.values[j]
    }

    #[inline]
    pub fn value(&self, j: usize, k: usize) -> T {
        self.values[j][k]
    }

    /// Values of all components at node `k`.
    pub fn at(&self, k: usize) -> Vec<T> {
        self.values.iter().map(|p| p[k]).collect()
    }

    /// Paths of `θ_s ω`: same values, times relabelled by `t -> t - s`.
    pub fn shifted(&self, s: T) -> Result<Self> {
        Ok(OUPathSet {
            grid: self.grid.translated(s)?,
            values: self.values.clone(),
            coeffs: self.coeffs.clone(),
        })
    }

    /// `∫_0^{t_k} O^(j)` at every node by the trapezoid rule (signed, so
    /// negative for nodes before 0 when the integrand is positive).
    pub fn cumulative_integral(&self, j: usize) -> Result<Vec<T>> {
        let k0 = self
            .grid
            .zero_index()
            .ok_or_else(|| SyncError::Range("grid does not contain t = 0".into()))?;
        let path = &self.values[j];
        let half_h = self.grid.step() * T::lit(0.5);
        let mut acc = vec![T::zero(); path.len()];
        for k in k0..path.len() - 1 {
            acc[k + 1] = acc[k] + half_h * (path[k] + path[k + 1]);
        }
        for k in (0..k0).rev() {
            acc[k] = acc[k + 1] - half_h * (path[k] + path[k + 1]);
        }
        Ok(acc)
    }

    /// Sample covariance of components `j` and `k` over nodes with `t >= from`.
    pub fn empirical_covariance(&self, j: usize, k: usize, from: T) -> Result<T> {
        let i0 = self.grid.index_of(from)?;
        let a = &self.values[j][i0..];
        let b = &self.values[k][i0..];
        let n = T::lit(a.len() as f64);
        let ma = a.iter().copied().sum::<T>() / n;
        let mb = b.iter().copied().sum::<T>() / n;
        Ok(a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - ma) * (y - mb))
            .sum::<T>()
            / n)
    }
}

/// Time average `(1/t) ∫_0^t O^(j)` by the trapezoid rule.
pub fn ergodic_average<T: Real>(ou: &OUPathSet<T>, j: usize, t: T) -> Result<T> {
    if t == T::zero() {
        return Err(SyncError::Parameter("ergodic average over t = 0 divides by zero".into()));
    }
    if j >= ou.n_components() {
        return Err(SyncError::Dimension(format!("no OU component {j}")));
    }
    let k = ou.grid.index_of(t)?;
    let cum = ou.cumulative_integral(j)?;
    Ok(cum[k] / ou.grid.time(k))
}

/// Outcome of the search for the random time `T_ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaTime<T> {
    /// Smallest certified grid time, or `t_max` when `found` is false.
    pub time: T,
    pub found: bool,
}

/// Smallest grid time `T >= 0` such that, for every component `j`,
/// `∫_0^t O^(j) <= (L/4) t` for all grid `t > T` and
/// `∫_s^0 O^(j) <= -(L/4) s` for all grid `s < -T`.
///
/// If the last violation sits on the edge of the grid the bound cannot be
/// certified and the `t_max` sentinel is returned with `found = false`.
pub fn estimate_t_omega<T: Real>(ou: &OUPathSet<T>, l: T) -> Result<OmegaTime<T>> {
    if !(l > T::zero()) {
        return Err(SyncError::Parameter(format!("L must be positive, got {l}")));
    }
    let grid = &ou.grid;
    let k0 = match grid.zero_index() {
        Some(k0) if k0 > 0 && k0 + 1 < grid.n_points() => k0,
        _ => {
            return Err(SyncError::Range(
                "T_omega needs a grid spanning both signs of time".into(),
            ))
        }
    };
    let quarter = l * T::lit(0.25);
    let last = grid.n_points() - 1;
    let not_found = OmegaTime {
        time: grid.t_max(),
        found: false,
    };
    let mut t_omega = T::zero();
    for j in 0..ou.n_components() {
        let cum = ou.cumulative_integral(j)?;
        // forward: latest violating node
        if let Some(k) = (k0 + 1..=last).rev().find(|&k| cum[k] > quarter * grid.time(k)) {
            if k == last {
                return Ok(not_found);
            }
            t_omega = t_omega.max(grid.time(k));
        }
        // backward: ∫_s^0 O = -cum[s]; earliest violating node
        if let Some(k) = (0..k0).find(|&k| -cum[k] > -quarter * grid.time(k)) {
            if k == 0 {
                return Ok(not_found);
            }
            t_omega = t_omega.max(-grid.time(k));
        }
    }
    Ok(OmegaTime {
        time: t_omega,
        found: true,
    })
}

/// Formats a value with 12 significant digits, the format used by every CSV
/// artifact.
pub fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

/// Writes `t, W1..Wm, O1..ON` rows. Both sets must live on the same grid.
pub fn write_paths_csv<T: Real, W: Write>(
    mut out: W,
    noise: &NoiseGrid<T>,
    ou: &OUPathSet<T>,
    comment: Option<&str>,
) -> io::Result<()> {
    if noise.grid != ou.grid {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "noise and OU paths live on different grids",
        ));
    }
    let m = noise.n_drivers();
    let n = ou.n_components();
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=m).map(|i| format!("W{i}")));
    cols.extend((1..=n).map(|j| format!("O{j}")));
    if let Some(c) = comment {
        writeln!(out, "# {c} columns={}", cols.join(","))?;
    }
    writeln!(out, "{}", cols.join(","))?;
    let w: Vec<Vec<T>> = (0..m).map(|i| noise.wiener_path(i)).collect();
    for k in 0..noise.grid.n_points() {
        let mut row = vec![fmt12(noise.grid.time(k).to_f64_lossy())];
        row.extend(w.iter().map(|p| fmt12(p[k].to_f64_lossy())));
        row.extend(ou.values.iter().map(|p| fmt12(p[k].to_f64_lossy())));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(a: f64, b: f64, h: f64) -> TimeGrid<f64> {
        TimeGrid::new(a, b, h).unwrap()
    }

    #[test]
    fn grid_counts_and_zero_node() {
        let g = grid(-1.0, 2.0, 0.1);
        assert_eq!(g.n_points(), 31);
        assert_eq!(g.zero_index(), Some(10));
        assert_eq!(g.time(10), 0.0);
        assert_relative_eq!(g.t_max(), 2.0, epsilon = 1e-12);
        assert_eq!(g.index_of(0.5).unwrap(), 15);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(TimeGrid::new(0.0, 1.0, 0.0), Err(SyncError::Config(_))));
        assert!(matches!(TimeGrid::new(1.0, 0.0, 0.1), Err(SyncError::Config(_))));
        assert!(matches!(TimeGrid::new(-0.25, 1.0, 0.1), Err(SyncError::Config(_))));
        let g = grid(0.0, 1.0, 0.1);
        assert!(matches!(g.index_of(0.05), Err(SyncError::Alignment { .. })));
        assert!(matches!(g.index_of(1.5), Err(SyncError::Range(_))));
    }

    #[test]
    fn wiener_reconstruction() {
        let noise = sample_wiener(1, grid(0.0, 1.0, 0.5), 1).unwrap();
        let inc = noise.increments(0);
        assert_eq!(inc.len(), 2);
        let w = noise.wiener_path(0);
        assert_eq!(w[0], 0.0);
        assert_eq!(w[2], inc[0] + inc[1]);
    }

    #[test]
    fn two_sided_path_vanishes_at_zero() {
        let noise = sample_wiener(4, grid(-1.0, 1.0, 0.25), 2).unwrap();
        let w = noise.wiener_path(1);
        assert_eq!(w[4], 0.0);
        assert_relative_eq!(w[8] - w[0], noise.increments(1).iter().sum::<f64>(), epsilon = 1e-14);
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = grid(-2.0, 3.0, 0.01);
        assert_eq!(sample_wiener::<f64>(9, g, 3).unwrap(), sample_wiener(9, g, 3).unwrap());
        assert_ne!(sample_wiener::<f64>(9, g, 3).unwrap(), sample_wiener(10, g, 3).unwrap());
    }

    #[test]
    fn increment_moments() {
        let h = 1e-3;
        let noise = sample_wiener(1, grid(0.0, 10.0, h), 1).unwrap();
        let inc = noise.increments(0);
        let n = inc.len() as f64;
        let mean = inc.iter().sum::<f64>() / n;
        let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 4.0 * h.sqrt() / n.sqrt());
        assert!((var / h - 1.0).abs() <= 0.05, "variance ratio {}", var / h);
    }

    #[test]
    fn f32_and_f64_share_the_sample_path() {
        let a = sample_wiener::<f64>(3, grid(0.0, 1.0, 0.125), 1).unwrap();
        let b = sample_wiener::<f32>(3, TimeGrid::new(0.0, 1.0, 0.125).unwrap(), 1).unwrap();
        for (x, y) in a.increments(0).iter().zip(b.increments(0)) {
            assert_relative_eq!(*x, *y as f64, max_relative = 1e-6);
        }
    }

    #[test]
    fn zero_coefficients_give_zero_paths() {
        let noise = sample_wiener(2, grid(0.0, 5.0, 0.01), 2).unwrap();
        let ou = build_ou_paths(&noise, &[vec![0.0, 0.0]], OuInit::Explicit(vec![0.0])).unwrap();
        assert!(ou.path(0).iter().all(|&v| v == 0.0));
        let ou = build_ou_paths(&noise, &[vec![0.0, 0.0]], OuInit::Stationary).unwrap();
        assert!(ou.path(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_rows_give_identical_paths() {
        let noise = sample_wiener(2, grid(-1.0, 5.0, 0.01), 2).unwrap();
        let rows = vec![vec![0.3, -0.7], vec![1.0, 0.0], vec![0.3, -0.7]];
        let ou = build_ou_paths(&noise, &rows, OuInit::Stationary).unwrap();
        assert_eq!(ou.path(0), ou.path(2));
        assert_ne!(ou.path(0), ou.path(1));
    }

    #[test]
    fn coefficient_shape_is_checked() {
        let noise = sample_wiener(2, grid(0.0, 1.0, 0.1), 2).unwrap();
        let err = build_ou_paths(&noise, &[vec![1.0]], OuInit::Stationary).unwrap_err();
        assert!(matches!(err, SyncError::Dimension(_)));
        let err = build_ou_paths(&noise, &[vec![1.0, 0.0]], OuInit::Explicit(vec![0.0, 1.0])).unwrap_err();
        assert!(matches!(err, SyncError::Dimension(_)));
    }

    #[test]
    fn recursion_matches_hand_computation() {
        let g = grid(0.0, 0.2, 0.1);
        let noise = NoiseGrid::from_increments(g, vec![vec![0.5, -0.25]], vec![0.0], 0).unwrap();
        let ou = build_ou_paths(&noise, &[vec![2.0]], OuInit::Explicit(vec![1.0])).unwrap();
        let e = (-0.1f64).exp();
        assert_relative_eq!(ou.value(0, 1), e + 1.0, epsilon = 1e-15);
        assert_relative_eq!(ou.value(0, 2), e * (e + 1.0) - 0.5, epsilon = 1e-15);
    }

    #[test]
    fn stationary_variance_is_one_half() {
        let noise = sample_wiener(11, grid(0.0, 1000.0, 0.01), 1).unwrap();
        let ou = build_ou_paths(&noise, &[vec![1.0]], OuInit::Stationary).unwrap();
        let v = ou.empirical_covariance(0, 0, 0.0).unwrap();
        // discrete stationary variance of the recursion is h/(1 - e^{-2h})
        let lyapunov = 0.01 / (1.0 - (-0.02f64).exp());
        assert_relative_eq!(lyapunov, 0.5, max_relative = 0.01);
        assert!((v / 0.5 - 1.0).abs() <= 0.1, "variance {v}");
    }

    #[test]
    fn zero_shift_is_identity() {
        let noise = sample_wiener(5, grid(-2.0, 2.0, 0.1), 2).unwrap();
        assert_eq!(shift_path(&noise, 0.0).unwrap(), noise);
    }

    #[test]
    fn shift_group_property_and_errors() {
        let noise = sample_wiener(5, grid(-2.0, 2.0, 0.1), 1).unwrap();
        let shifted = shift_path(&noise, 0.5).unwrap();
        assert_eq!(shifted.grid().time(0), -2.5);
        // W(θ_s ω)(t) = W(t + s) - W(s)
        let w = noise.wiener_path(0);
        let ws = shifted.wiener_path(0);
        let ks = noise.grid().index_of(0.5).unwrap();
        for k in 0..w.len() {
            assert_relative_eq!(ws[k], w[k] - w[ks], epsilon = 1e-12);
        }
        let back = shift_path(&shifted, -0.5).unwrap();
        assert_eq!(back.grid().zero_index(), noise.grid().zero_index());
        assert_relative_eq!(back.grid().t_min(), noise.grid().t_min(), epsilon = 1e-12);
        assert_eq!(back.increments(0), noise.increments(0));
        assert!(matches!(shift_path(&noise, 0.05), Err(SyncError::Alignment { .. })));
        assert!(matches!(shift_path(&noise, 3.0), Err(SyncError::Range(_))));
    }

    #[test]
    fn shifted_ou_reads_the_original_path() {
        let noise = sample_wiener(8, grid(-3.0, 3.0, 0.01), 1).unwrap();
        let ou = build_ou_paths(&noise, &[vec![1.0]], OuInit::Stationary).unwrap();
        let s = 1.25;
        let rebuilt = build_ou_paths(&shift_path(&noise, s).unwrap(), &[vec![1.0]], OuInit::Stationary).unwrap();
        let via_set = ou.shifted(s).unwrap();
        for t in [-1.0, 0.0, 0.5, 1.5] {
            let a = rebuilt.value(0, rebuilt.grid().index_of(t).unwrap());
            let b = ou.value(0, ou.grid().index_of(t + s).unwrap());
            assert_relative_eq!(a, b, epsilon = 1e-12);
            assert_eq!(via_set.value(0, via_set.grid().index_of(t).unwrap()), b);
        }
    }

    #[test]
    fn ergodic_average_edge_cases() {
        let g = grid(-1.0, 4.0, 0.01);
        let zero = OUPathSet::zeros(g, 2);
        assert_eq!(ergodic_average(&zero, 1, 3.0).unwrap(), 0.0);
        assert!(matches!(ergodic_average(&zero, 0, 0.0), Err(SyncError::Parameter(_))));
        let constant = OUPathSet::from_values(g, vec![vec![0.7; g.n_points()]], vec![vec![]]).unwrap();
        assert_relative_eq!(ergodic_average(&constant, 0, 2.0).unwrap(), 0.7, epsilon = 1e-12);
        assert_relative_eq!(ergodic_average(&constant, 0, -1.0).unwrap(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn t_omega_trivial_cases() {
        let g = grid(-5.0, 5.0, 0.01);
        let zero = OUPathSet::zeros(g, 3);
        assert_eq!(
            estimate_t_omega(&zero, 1.0).unwrap(),
            OmegaTime { time: 0.0, found: true }
        );
        let l = 1.0;
        let constant = OUPathSet::from_values(g, vec![vec![l / 2.0; g.n_points()]], vec![vec![]]).unwrap();
        let t = estimate_t_omega(&constant, l).unwrap();
        assert!(!t.found);
        assert_eq!(t.time, g.t_max());
        assert!(matches!(estimate_t_omega(&zero, 0.0), Err(SyncError::Parameter(_))));
        let one_sided = OUPathSet::zeros(grid(0.0, 1.0, 0.1), 1);
        assert!(matches!(estimate_t_omega(&one_sided, 1.0), Err(SyncError::Range(_))));
    }

    #[test]
    fn t_omega_finds_last_violation() {
        let g = grid(-4.0, 4.0, 0.5);
        // positive bump on [0, 1] then strongly negative
        let path: Vec<f64> = g.times().iter().map(|&t| if (0.0..=1.0).contains(&t) { 3.0 } else { -3.0 }).collect();
        let ou = OUPathSet::from_values(g, vec![path], vec![vec![]]).unwrap();
        let t = estimate_t_omega(&ou, 1.0).unwrap();
        assert!(t.found);
        let cum = ou.cumulative_integral(0).unwrap();
        for k in 0..g.n_points() {
            let s = g.time(k);
            if s > t.time {
                assert!(cum[k] <= 0.25 * s);
            }
            if s < -t.time {
                assert!(-cum[k] <= -0.25 * s);
            }
        }
        assert!(t.time > 0.0);
    }

    #[test]
    fn csv_has_header_and_twelve_digits() {
        let g = grid(0.0, 0.2, 0.1);
        let noise = NoiseGrid::from_increments(g, vec![vec![0.5, -0.25]], vec![0.0], 0).unwrap();
        let ou = build_ou_paths(&noise, &[vec![1.0], vec![0.0]], OuInit::Explicit(vec![0.0, 0.0])).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &noise, &ou, Some("hash=abc")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# hash=abc columns=t,W1,O1,O2");
        assert_eq!(lines[1], "t,W1,O1,O2");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[3].split(',').nth(1).unwrap(), "5.00000000000e-1");
        assert_eq!(fmt12(1.0 / 3.0), "3.33333333333e-1");
    }
}
