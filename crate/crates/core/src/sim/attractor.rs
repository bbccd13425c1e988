//! Pullback approximation of the singleton random attractors and the radii
//! of their absorbing balls.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{Frame, StateVector, SystemSpec};
use crate::error::{Result, SyncError};
use crate::noise::OUPathSet;
use crate::scalar::{distance, norm, Real};
use crate::spectral::{comparison_bound_at, CouplingMatrixSeries, CouplingVariant};

use super::integrate::{heun, Flow, IntegratorOptions};
use super::TrajectoryBundle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PullbackOptions<T> {
    /// Time at which the attractor is evaluated.
    pub t_eval: T,
    /// Seed for the random initial states on the absorbing sphere.
    pub seed: u64,
    pub integrator: IntegratorOptions,
}

impl<T: Real> Default for PullbackOptions<T> {
    fn default() -> Self {
        PullbackOptions {
            t_eval: T::zero(),
            seed: 0,
            integrator: IntegratorOptions::default(),
        }
    }
}

/// Pullback estimate of a singleton attractor at one evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorEstimate<T> {
    /// State reached from the origin after the deepest pullback.
    pub value: StateVector<T>,
    pub t_eval: T,
    pub depths: Vec<T>,
    /// Distance between the origin runs of the two deepest depths; `None`
    /// when only one depth was requested.
    pub cauchy_gap: Option<T>,
    /// Largest distance between the deepest runs started from the origin and
    /// from the random points on the absorbing sphere.
    pub singleton_gap: T,
    /// Radius of the sphere the random initial states were drawn from.
    pub radius: T,
    pub converged: bool,
}

fn check_depths<T: Real>(depths: &[T]) -> Result<()> {
    if depths.is_empty() {
        return Err(SyncError::Parameter("need at least one pullback depth".into()));
    }
    if depths.iter().any(|d| !(*d > T::zero())) {
        return Err(SyncError::Parameter("pullback depths must be positive".into()));
    }
    if depths.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SyncError::Parameter("pullback depths must be increasing".into()));
    }
    Ok(())
}

fn sphere_point<T: Real>(rng: &mut ChaCha8Rng, dim: usize, radius: T) -> Vec<T> {
    let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
    let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    dir.iter().map(|v| T::lit(v / len) * radius).collect()
}

fn run_to<T: Real>(flow: Flow<T>, ou: &OUPathSet<T>, x0: &[T], t0: T, t1: T, opts: IntegratorOptions) -> Result<Vec<T>> {
    let i0 = ou.grid().index_of(t0)?;
    let i1 = ou.grid().index_of(t1)?;
    let states = heun(flow, ou, x0, i0, i1, opts)?;
    Ok(states[states.len() - x0.len()..].to_vec())
}

fn pullback<T: Real>(
    flow: Flow<T>,
    ou: &OUPathSet<T>,
    depths: &[T],
    tolerance: T,
    radius: T,
    opts: &PullbackOptions<T>,
) -> Result<(Vec<T>, Option<T>, T)> {
    check_depths(depths)?;
    let dim = flow.dim();
    let origin = vec![T::zero(); dim];
    let t1 = opts.t_eval;
    let mut origin_runs = Vec::with_capacity(depths.len());
    for &depth in depths {
        origin_runs.push(run_to(flow, ou, &origin, t1 - depth, t1, opts.integrator)?);
    }
    let deepest = *depths.last().expect("checked non-empty");
    let value = origin_runs.last().expect("checked non-empty").clone();
    let cauchy = (origin_runs.len() >= 2).then(|| {
        let n = origin_runs.len();
        distance(&origin_runs[n - 1], &origin_runs[n - 2])
    });
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut singleton = T::zero();
    for _ in 0..2 {
        let start = sphere_point(&mut rng, dim, radius);
        let end = run_to(flow, ou, &start, t1 - deepest, t1, opts.integrator)?;
        singleton = singleton.max(distance(&end, &value));
    }
    let _ = tolerance;
    Ok((value, cauchy, singleton))
}

/// Pullback estimate of the coupled-RODE attractor at `opts.t_eval`.
///
/// Integrates from `t_eval - T` to `t_eval` for every depth `T` starting at
/// the origin, then from the deepest depth starting at two seeded points on
/// the absorbing sphere of radius `R_ν`. Converged when both the depth-to-depth
/// gap and the spread of the three deepest runs are within `tolerance`.
pub fn pullback_attractor<T: Real>(
    spec: &SystemSpec<T>,
    ou: &OUPathSet<T>,
    depths: &[T],
    tolerance: T,
    opts: &PullbackOptions<T>,
) -> Result<AttractorEstimate<T>> {
    check_depths(depths)?;
    let deepest = *depths.last().expect("checked non-empty");
    let radius = absorbing_radius_at(spec, ou, deepest, opts.t_eval)?;
    let (value, cauchy_gap, singleton_gap) = pullback(Flow::Coupled(spec), ou, depths, tolerance, radius, opts)?;
    let converged = singleton_gap <= tolerance && cauchy_gap.is_none_or(|g| g <= tolerance);
    Ok(AttractorEstimate {
        value: StateVector::new(Frame::Rode, spec.n(), spec.d(), value)?,
        t_eval: opts.t_eval,
        depths: depths.to_vec(),
        cauchy_gap,
        singleton_gap,
        radius,
        converged,
    })
}

/// Pullback estimate of the averaged-RODE attractor `z̄` at `opts.t_eval`.
/// The returned state has a single component.
pub fn averaged_pullback_attractor<T: Real>(
    spec: &SystemSpec<T>,
    ou: &OUPathSet<T>,
    depths: &[T],
    tolerance: T,
    opts: &PullbackOptions<T>,
) -> Result<AttractorEstimate<T>> {
    check_depths(depths)?;
    let deepest = *depths.last().expect("checked non-empty");
    let radius = averaged_absorbing_radius(spec, ou, deepest, opts.t_eval)?;
    let (value, cauchy_gap, singleton_gap) = pullback(Flow::Averaged(spec), ou, depths, tolerance, radius, opts)?;
    let converged = singleton_gap <= tolerance && cauchy_gap.is_none_or(|g| g <= tolerance);
    Ok(AttractorEstimate {
        value: StateVector::new(Frame::Rode, 1, spec.d(), value)?,
        t_eval: opts.t_eval,
        depths: depths.to_vec(),
        cauchy_gap,
        singleton_gap,
        radius,
        converged,
    })
}

fn trajectory<T: Real>(
    flow: Flow<T>,
    ou: &OUPathSet<T>,
    depth: T,
    t1: T,
    t2: T,
    opts: IntegratorOptions,
) -> Result<TrajectoryBundle<T>> {
    if !(depth > T::zero()) {
        return Err(SyncError::Parameter("pullback depth must be positive".into()));
    }
    let start = t1 - depth;
    let (full, i0) = ou.grid().window(start, t2)?;
    let states = heun(flow, ou, &vec![T::zero(); flow.dim()], i0, i0 + full.n_points() - 1, opts)?;
    let bundle = TrajectoryBundle::from_parts(full, Frame::Rode, flow.n(), flow.spec().d(), states, 0);
    bundle.window(t1, t2)
}

/// Attractor trajectory `t ↦ x̄_ν(θ_t ω)` on `[t1, t2]`, obtained by starting
/// at the origin `depth` before `t1` and integrating through the window.
pub fn attractor_trajectory<T: Real>(
    spec: &SystemSpec<T>,
    ou: &OUPathSet<T>,
    depth: T,
    t1: T,
    t2: T,
    opts: IntegratorOptions,
) -> Result<TrajectoryBundle<T>> {
    trajectory(Flow::Coupled(spec), ou, depth, t1, t2, opts)
}

/// Averaged attractor trajectory `t ↦ z̄(θ_t ω)` on `[t1, t2]`.
pub fn averaged_attractor_trajectory<T: Real>(
    spec: &SystemSpec<T>,
    ou: &OUPathSet<T>,
    depth: T,
    t1: T,
    t2: T,
    opts: IntegratorOptions,
) -> Result<TrajectoryBundle<T>> {
    trajectory(Flow::Averaged(spec), ou, depth, t1, t2, opts)
}

/// Absorbing radius `R_ν = sqrt(1 + |C_ν|²)` at `t = 0`, where
/// `C_ν = ∫_{-T}^0 exp(∫_u^0 Ã_ν) f̃(u) du` and
/// `f̃_j(u) = e^{-2O^(j)_u} |f^(j)(0)|² / L`.
pub fn absorbing_radius<T: Real>(spec: &SystemSpec<T>, ou: &OUPathSet<T>, truncation: T) -> Result<T> {
    absorbing_radius_at(spec, ou, truncation, T::zero())
}

/// [`absorbing_radius`] for the ball at evaluation time `t_eval`.
pub fn absorbing_radius_at<T: Real>(spec: &SystemSpec<T>, ou: &OUPathSet<T>, truncation: T, t_eval: T) -> Result<T> {
    if !(truncation > T::zero()) {
        return Err(SyncError::Parameter("truncation time must be positive".into()));
    }
    let l = spec.l();
    let forcing: Vec<T> = spec.drifts().iter().map(|f| f.origin_norm_sq() / l).collect();
    if forcing.iter().all(|&g| g == T::zero()) {
        ou.grid().index_of(t_eval - truncation)?;
        return Ok(T::one());
    }
    let series = CouplingMatrixSeries::build(spec, ou, CouplingVariant::Absorbing)?;
    let psi = |k: usize| -> Vec<T> {
        forcing
            .iter()
            .enumerate()
            .map(|(j, &g)| g * (-T::lit(2.0) * ou.value(j, k)).exp())
            .collect()
    };
    let c = comparison_bound_at(
        ou.grid(),
        |k| series.matrix_at(k),
        psi,
        &vec![T::zero(); spec.n()],
        t_eval - truncation,
        t_eval,
    )?;
    let r = (T::one() + norm(&c).powi(2)).sqrt();
    if !r.is_finite() {
        return Err(SyncError::NumericRange {
            time: t_eval.to_f64_lossy(),
            detail: "absorbing radius overflowed".into(),
        });
    }
    Ok(r)
}

/// Absorbing radius of the averaged RODE at `t_eval`:
/// `R² = 1 + (1/N) Σ_j (|f^(j)(0)|²/L) ∫_{-T}^0 e^{Lu - 2O^(j)_u} e^{(2/N) Σ_k ∫_u^0 O^(k)} du`
/// (times relative to `t_eval`), trapezoid rule on the OU grid.
pub fn averaged_absorbing_radius<T: Real>(spec: &SystemSpec<T>, ou: &OUPathSet<T>, truncation: T, t_eval: T) -> Result<T> {
    if !(truncation > T::zero()) {
        return Err(SyncError::Parameter("truncation time must be positive".into()));
    }
    let grid = ou.grid();
    let i0 = grid.index_of(t_eval - truncation)?;
    let i1 = grid.index_of(t_eval)?;
    let n = spec.n();
    let l = spec.l();
    // (2/N) Σ_k ∫ O^(k) is twice the integral of the mean path
    let two = T::lit(2.0);
    let half_h = grid.step() * T::lit(0.5);
    // mean path and its integral from u to t_eval, accumulated backwards
    let mean: Vec<T> = (i0..=i1)
        .map(|k| (0..n).map(|j| ou.value(j, k)).sum::<T>() / T::lit(n as f64))
        .collect();
    let len = mean.len();
    let mut tail = vec![T::zero(); len];
    for k in (0..len - 1).rev() {
        tail[k] = tail[k + 1] + half_h * (mean[k] + mean[k + 1]);
    }
    let mut total = T::zero();
    for j in 0..n {
        let g = spec.drift(j).origin_norm_sq() / l;
        if g == T::zero() {
            continue;
        }
        let integrand: Vec<T> = (0..len)
            .map(|r| {
                let u = grid.time(i0 + r) - t_eval;
                (l * u - T::lit(2.0) * ou.value(j, i0 + r) + two * tail[r]).exp()
            })
            .collect();
        let integral: T = integrand.windows(2).map(|w| half_h * (w[0] + w[1])).sum();
        total += g * integral;
    }
    let r = (T::one() + total / T::lit(n as f64)).sqrt();
    if !r.is_finite() {
        return Err(SyncError::NumericRange {
            time: t_eval.to_f64_lossy(),
            detail: "averaged absorbing radius overflowed".into(),
        });
    }
    Ok(r)
}
