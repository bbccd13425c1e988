use crate::dynamics::{
    averaged_rode_rhs_into, coupled_rode_rhs_into, coupled_sode_drift_into, DriftKind, Frame, StateVector,
    SystemSpec,
};
use crate::error::{Result, SyncError};
use crate::noise::{NoiseGrid, OUPathSet};
use crate::scalar::Real;

use super::{with_time, TrajectoryBundle};

/// Number of Heun sub-steps per grid cell. OU values are linearly
/// interpolated between nodes when more than one sub-step is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substeps {
    Fixed(usize),
    /// Enough sub-steps to keep `h_sub · ρ <= 1`, where `ρ` bounds the
    /// stiffness of the linear part (coupling, drift rate and `|O|`).
    Auto,
}

impl Default for Substeps {
    fn default() -> Self {
        Substeps::Fixed(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegratorOptions {
    pub substeps: Substeps,
}

impl IntegratorOptions {
    pub fn fixed(substeps: usize) -> Self {
        IntegratorOptions {
            substeps: Substeps::Fixed(substeps.max(1)),
        }
    }

    pub fn auto() -> Self {
        IntegratorOptions {
            substeps: Substeps::Auto,
        }
    }
}

#[derive(Clone, Copy)]
pub(crate) enum Flow<'a, T> {
    Coupled(&'a SystemSpec<T>),
    Averaged(&'a SystemSpec<T>),
}

pub(crate) struct Workspace<T> {
    term: Vec<T>,
    scratch: Vec<T>,
}

impl<'a, T: Real> Flow<'a, T> {
    pub(crate) fn spec(&self) -> &'a SystemSpec<T> {
        match self {
            Flow::Coupled(s) | Flow::Averaged(s) => s,
        }
    }

    pub(crate) fn n(&self) -> usize {
        match self {
            Flow::Coupled(s) => s.n(),
            Flow::Averaged(_) => 1,
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.n() * self.spec().d()
    }

    pub(crate) fn workspace(&self) -> Workspace<T> {
        let d = self.spec().d();
        Workspace {
            term: vec![T::zero(); d],
            scratch: vec![T::zero(); d],
        }
    }

    fn rhs_into(&self, x: &[T], ou: &[T], out: &mut [T], ws: &mut Workspace<T>) -> Result<()> {
        match self {
            Flow::Coupled(s) => coupled_rode_rhs_into(s, x, ou, out, &mut ws.scratch),
            Flow::Averaged(s) => averaged_rode_rhs_into(s, x, ou, out, &mut ws.term, &mut ws.scratch),
        }
    }

    /// Rough bound on the spectral radius of the Jacobian.
    fn stiffness(&self, max_abs_ou: T) -> T {
        let spec = self.spec();
        let drift_rate = spec
            .drifts()
            .iter()
            .map(|f| match f.kind() {
                DriftKind::Linear { lambda } => *lambda,
                DriftKind::Cubic { a, .. } => *a,
                DriftKind::Tabulated { knots, values } => knots
                    .windows(2)
                    .zip(values.windows(2))
                    .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
                    .fold(T::zero(), |a, b| a.max(b)),
            })
            .fold(T::zero(), |a, b| a.max(b));
        let coupling = match self {
            Flow::Coupled(s) => T::lit(4.0) * s.nu(),
            Flow::Averaged(_) => T::zero(),
        };
        coupling + drift_rate + max_abs_ou
    }
}

fn resolve_substeps<T: Real>(flow: &Flow<T>, ou: &OUPathSet<T>, i0: usize, i1: usize, opts: IntegratorOptions) -> usize {
    match opts.substeps {
        Substeps::Fixed(s) => s.max(1),
        Substeps::Auto => {
            let max_o = (0..ou.n_components())
                .flat_map(|j| ou.path(j)[i0..=i1].iter().map(|o| o.abs()))
                .fold(T::zero(), |a, b| a.max(b));
            let rho = flow.stiffness(max_o) * ou.grid().step();
            rho.ceil().to_usize().unwrap_or(1).max(1)
        }
    }
}

/// Heun (trapezoidal predictor-corrector) over nodes `i0..=i1` of the OU grid.
/// Returns node-major states including the initial one.
pub(crate) fn heun<T: Real>(
    flow: Flow<T>,
    ou: &OUPathSet<T>,
    x0: &[T],
    i0: usize,
    i1: usize,
    opts: IntegratorOptions,
) -> Result<Vec<T>> {
    let dim = flow.dim();
    let n_ou = flow.spec().n();
    let grid = ou.grid();
    let sub = resolve_substeps(&flow, ou, i0, i1, opts);
    let hs = grid.step() / T::lit(sub as f64);
    let half = hs * T::lit(0.5);
    let mut ws = flow.workspace();
    let mut states = Vec::with_capacity((i1 - i0 + 1) * dim);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut pred) = (vec![T::zero(); dim], vec![T::zero(); dim], vec![T::zero(); dim]);
    let (mut o_a, mut o_b) = (vec![T::zero(); n_ou], vec![T::zero(); n_ou]);
    for k in i0..i1 {
        for s in 0..sub {
            let wa = T::lit(s as f64 / sub as f64);
            let wb = T::lit((s + 1) as f64 / sub as f64);
            for j in 0..n_ou {
                let (lo, hi) = (ou.value(j, k), ou.value(j, k + 1));
                o_a[j] = lo + (hi - lo) * wa;
                o_b[j] = lo + (hi - lo) * wb;
            }
            let t = grid.time(k);
            flow.rhs_into(&x, &o_a, &mut k1, &mut ws).map_err(|e| with_time(e, t))?;
            for c in 0..dim {
                pred[c] = x[c] + hs * k1[c];
            }
            flow.rhs_into(&pred, &o_b, &mut k2, &mut ws).map_err(|e| with_time(e, t))?;
            for c in 0..dim {
                x[c] += half * (k1[c] + k2[c]);
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SyncError::NumericRange {
                time: grid.time(k + 1).to_f64_lossy(),
                detail: "state is no longer finite".into(),
            });
        }
        states.extend_from_slice(&x);
    }
    Ok(states)
}

fn check_ou_set<T: Real>(spec: &SystemSpec<T>, ou: &OUPathSet<T>) -> Result<()> {
    if ou.n_components() != spec.n() {
        return Err(SyncError::Dimension(format!(
            "{} OU paths for {} systems",
            ou.n_components(),
            spec.n()
        )));
    }
    Ok(())
}

/// Integrates the coupled RODE over `[t0, t1]` on the OU grid with the
/// explicit Heun scheme.
pub fn integrate_rode<T: Real>(
    spec: &SystemSpec<T>,
    ou: &OUPathSet<T>,
    x0: &StateVector<T>,
    t0: T,
    t1: T,
    opts: IntegratorOptions,
) -> Result<TrajectoryBundle<T>> {
    check_ou_set(spec, ou)?;
    if x0.frame() != Frame::Rode || x0.n() != spec.n() || x0.d() != spec.d() {
        return Err(SyncError::Dimension("initial state must be an N x d RODE state".into()));
    }
    if x0.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(SyncError::Parameter("initial state must be finite".into()));
    }
    let (window, i0) = ou.grid().window(t0, t1)?;
    let i1 = i0 + window.n_points() - 1;
    let states = heun(Flow::Coupled(spec), ou, x0.as_slice(), i0, i1, opts)?;
    Ok(TrajectoryBundle::from_parts(window, Frame::Rode, spec.n(), spec.d(), states, 0))
}

/// Integrates the averaged RODE for `z ∈ ℝ^d`; the bundle has one component.
pub fn integrate_averaged<T: Real>(
    spec: &SystemSpec<T>,
    ou: &OUPathSet<T>,
    z0: &[T],
    t0: T,
    t1: T,
    opts: IntegratorOptions,
) -> Result<TrajectoryBundle<T>> {
    check_ou_set(spec, ou)?;
    if z0.len() != spec.d() {
        return Err(SyncError::Dimension(format!("averaged state needs {} entries", spec.d())));
    }
    let (window, i0) = ou.grid().window(t0, t1)?;
    let i1 = i0 + window.n_points() - 1;
    let states = heun(Flow::Averaged(spec), ou, z0, i0, i1, opts)?;
    Ok(TrajectoryBundle::from_parts(window, Frame::Rode, 1, spec.d(), states, 0))
}

/// One stochastic Heun step of the equivalent coupled SODE.
///
/// `dw` holds the driver increments over the step. Returns the corrected
/// state and the Euler predictor; their difference is the embedded local
/// error estimate.
pub fn stochastic_heun_step<T: Real>(
    spec: &SystemSpec<T>,
    x: &[T],
    ou_start: &[T],
    ou_end: &[T],
    dw: &[T],
    h: T,
) -> Result<(Vec<T>, Vec<T>)> {
    let (n, d) = (spec.n(), spec.d());
    let dim = n * d;
    if x.len() != dim || dw.len() != spec.m() {
        return Err(SyncError::Dimension("state or increment size does not match the system".into()));
    }
    let gain: Vec<T> = spec
        .coeffs()
        .iter()
        .map(|row| row.iter().zip(dw).map(|(&c, &w)| c * w).sum())
        .collect();
    let mut a0 = vec![T::zero(); dim];
    coupled_sode_drift_into(spec, x, ou_start, &mut a0)?;
    let mut pred = vec![T::zero(); dim];
    for j in 0..n {
        for c in 0..d {
            let i = j * d + c;
            pred[i] = x[i] + a0[i] * h + gain[j] * x[i];
        }
    }
    let mut a1 = vec![T::zero(); dim];
    coupled_sode_drift_into(spec, &pred, ou_end, &mut a1)?;
    let half = T::lit(0.5);
    let mut next = vec![T::zero(); dim];
    for j in 0..n {
        for c in 0..d {
            let i = j * d + c;
            next[i] = x[i] + half * (a0[i] + a1[i]) * h + half * gain[j] * (x[i] + pred[i]);
        }
    }
    Ok((next, pred))
}

/// Integrates the equivalent coupled SODE directly with the Stratonovich
/// Heun scheme, reusing the driver increments that built `ou`.
pub fn integrate_sode_stratonovich<T: Real>(
    spec: &SystemSpec<T>,
    noise: &NoiseGrid<T>,
    ou: &OUPathSet<T>,
    x0: &StateVector<T>,
    t0: T,
    t1: T,
) -> Result<TrajectoryBundle<T>> {
    check_ou_set(spec, ou)?;
    if noise.grid() != ou.grid() {
        return Err(SyncError::Dimension("noise and OU paths must share a grid".into()));
    }
    if noise.n_drivers() != spec.m() {
        return Err(SyncError::Dimension(format!(
            "system has {} drivers, noise has {}",
            spec.m(),
            noise.n_drivers()
        )));
    }
    if x0.frame() != Frame::Sode || x0.n() != spec.n() || x0.d() != spec.d() {
        return Err(SyncError::Dimension("initial state must be an N x d SODE state".into()));
    }
    let grid = ou.grid();
    let (window, i0) = grid.window(t0, t1)?;
    let i1 = i0 + window.n_points() - 1;
    let h = grid.step();
    let mut states = Vec::with_capacity(window.n_points() * x0.as_slice().len());
    states.extend_from_slice(x0.as_slice());
    let mut x = x0.as_slice().to_vec();
    let mut dw = vec![T::zero(); spec.m()];
    for k in i0..i1 {
        for (i, w) in dw.iter_mut().enumerate() {
            *w = noise.increments(i)[k];
        }
        let (next, _) = stochastic_heun_step(spec, &x, &ou.at(k), &ou.at(k + 1), &dw, h)
            .map_err(|e| with_time(e, grid.time(k)))?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(SyncError::NumericRange {
                time: grid.time(k + 1).to_f64_lossy(),
                detail: "state is no longer finite".into(),
            });
        }
        x = next;
        states.extend_from_slice(&x);
    }
    Ok(TrajectoryBundle::from_parts(
        window,
        Frame::Sode,
        spec.n(),
        spec.d(),
        states,
        noise.seed(),
    ))
}
