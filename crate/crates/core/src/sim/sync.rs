//! Synchronization diagnostics: pairwise and component gaps, decay-rate fits,
//! ν-sweeps and convergence to the averaged attractor.

use rayon::prelude::*;

use crate::dynamics::{frame_convert, Frame, StateVector, SystemSpec};
use crate::error::{Result, SyncError};
use crate::noise::{NoiseGrid, OUPathSet, OmegaTime};
use crate::scalar::{distance, norm, Real};

use super::attractor::{attractor_trajectory, averaged_attractor_trajectory};
use super::integrate::{integrate_rode, stochastic_heun_step, IntegratorOptions};
use super::TrajectoryBundle;

/// Windows shorter than this many nodes are rejected.
pub const MIN_WINDOW_NODES: usize = 10;

/// Gaps below this are treated as the numerical floor when fitting rates.
const GAP_FLOOR: f64 = 1e-12;

fn window_range<T: Real>(traj: &TrajectoryBundle<T>, t1: T, t2: T) -> Result<(usize, usize)> {
    let (w, i0) = traj.grid().window(t1, t2)?;
    if w.n_points() < MIN_WINDOW_NODES {
        return Err(SyncError::Parameter(format!(
            "window [{t1}, {t2}] has {} nodes, need at least {MIN_WINDOW_NODES}",
            w.n_points()
        )));
    }
    Ok((i0, i0 + w.n_points() - 1))
}

fn max_component_distance<T: Real>(a: &TrajectoryBundle<T>, b: &TrajectoryBundle<T>, k: usize) -> T {
    (0..a.n())
        .map(|j| distance(a.component(k, j), b.component(k, j)))
        .fold(T::zero(), |x, y| x.max(y))
}

/// Ordinary least-squares slope of `y` against `x`.
fn ols_slope<T: Real>(x: &[T], y: &[T]) -> Option<T> {
    if x.len() < 2 {
        return None;
    }
    let n = T::lit(x.len() as f64);
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let sxx: T = x.iter().map(|&v| (v - mx) * (v - mx)).sum();
    if sxx == T::zero() {
        return None;
    }
    let sxy: T = x.iter().zip(y).map(|(&u, &v)| (u - mx) * (v - my)).sum();
    Some(sxy / sxx)
}

/// Least-squares exponential rate of `gaps` from `t_start` on.
///
/// Fits `ln gap` linearly in `t`, stopping at the first node where the gap
/// drops below `1e-12`. `None` when fewer than two usable nodes remain.
pub fn fit_decay_rate<T: Real>(times: &[T], gaps: &[T], t_start: T) -> Option<T> {
    let floor = T::lit(GAP_FLOOR);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&t, &g) in times.iter().zip(gaps) {
        if t < t_start {
            continue;
        }
        if !(g >= floor) {
            break;
        }
        xs.push(t);
        ys.push(g.ln());
    }
    ols_slope(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseReport<T> {
    pub times: Vec<T>,
    /// `max_j ‖x₁^(j)(t) − x₂^(j)(t)‖` at every node.
    pub gaps: Vec<T>,
    /// Start of the fit window.
    pub fit_start: T,
    /// `None` when the gap is identically zero or hits the floor at once.
    pub fitted_rate: Option<T>,
}

/// Gap series between two trajectories and its fitted exponential rate.
///
/// The fit starts at the later of `t_omega` and the first node where the gap
/// falls below a tenth of its initial value.
pub fn pairwise_gap<T: Real>(a: &TrajectoryBundle<T>, b: &TrajectoryBundle<T>, t_omega: T) -> Result<PairwiseReport<T>> {
    a.check_compatible(b)?;
    let times = a.grid().times();
    let gaps: Vec<T> = (0..a.len()).map(|k| max_component_distance(a, b, k)).collect();
    let first = gaps[0] * T::lit(0.1);
    let drop = times
        .iter()
        .zip(&gaps)
        .find(|(_, &g)| g < first)
        .map(|(&t, _)| t)
        .unwrap_or(times[0]);
    let fit_start = drop.max(t_omega);
    let fitted_rate = fit_decay_rate(&times, &gaps, fit_start);
    Ok(PairwiseReport {
        times,
        gaps,
        fit_start,
        fitted_rate,
    })
}

/// Outcome of the exponential contraction test after `T_ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeCheck<T> {
    pub t_omega: T,
    /// `false` when no finite `T_ω` was found on the grid.
    pub found: bool,
    /// Largest `|y(t)| / (e^{-L(t - t₀)} |y(t₀)|)` over nodes `t ≥ T_ω`, where
    /// `y_j = ‖x₁^(j) − x₂^(j)‖²` and `t₀` is the first node.
    pub worst_ratio: T,
    pub holds: bool,
    /// Largest `‖x₁(t) − x₂(t)‖ / (e^{-L(t - T_ω)} ‖x₁(T_ω) − x₂(T_ω)‖)`.
    pub anchored_ratio: T,
    pub anchored_holds: bool,
}

/// Checks the exponential contraction envelope with multiplicative slack
/// `1 + slack` on nodes at or after `T_ω`.
pub fn contraction_envelope<T: Real>(
    a: &TrajectoryBundle<T>,
    b: &TrajectoryBundle<T>,
    t_omega: OmegaTime<T>,
    l: T,
    slack: T,
) -> Result<EnvelopeCheck<T>> {
    a.check_compatible(b)?;
    let grid = a.grid();
    let t0 = grid.time(0);
    let squared = |k: usize| -> Vec<T> {
        (0..a.n())
            .map(|j| distance(a.component(k, j), b.component(k, j)).powi(2))
            .collect()
    };
    let full = |k: usize| distance(a.state(k), b.state(k));
    let ratio = |num: T, den: T| {
        if den > T::zero() {
            num / den
        } else if num > T::zero() {
            T::infinity()
        } else {
            T::zero()
        }
    };
    let y0 = norm(&squared(0));
    let start = (0..a.len()).find(|&k| grid.time(k) >= t_omega.time).unwrap_or(a.len());
    let mut worst = T::zero();
    let mut anchored = T::zero();
    if start < a.len() {
        let ts = grid.time(start);
        let g_anchor = full(start);
        for k in start..a.len() {
            let t = grid.time(k);
            worst = worst.max(ratio(norm(&squared(k)), (-l * (t - t0)).exp() * y0));
            anchored = anchored.max(ratio(full(k), (-l * (t - ts)).exp() * g_anchor));
        }
    }
    let limit = T::one() + slack;
    Ok(EnvelopeCheck {
        t_omega: t_omega.time,
        found: t_omega.found,
        worst_ratio: worst,
        holds: t_omega.found && worst <= limit,
        anchored_ratio: anchored,
        anchored_holds: t_omega.found && anchored <= limit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGapReport<T> {
    pub times: Vec<T>,
    /// `max_{j,k} ‖x^(j)(t) − x^(k)(t)‖` at every node.
    pub gaps: Vec<T>,
    pub window: (T, T),
    pub sup_gap: T,
}

fn spread<T: Real>(traj: &TrajectoryBundle<T>, k: usize) -> T {
    let mut best = T::zero();
    for j in 0..traj.n() {
        for i in j + 1..traj.n() {
            best = best.max(distance(traj.component(k, j), traj.component(k, i)));
        }
    }
    best
}

/// Largest distance between components at every node and its sup over
/// `[t1, t2]`.
pub fn component_gap<T: Real>(traj: &TrajectoryBundle<T>, t1: T, t2: T) -> Result<ComponentGapReport<T>> {
    let (i0, i1) = window_range(traj, t1, t2)?;
    let gaps: Vec<T> = (0..traj.len()).map(|k| spread(traj, k)).collect();
    let sup_gap = gaps[i0..=i1].iter().fold(T::zero(), |a, &b| a.max(b));
    Ok(ComponentGapReport {
        times: traj.grid().times(),
        gaps,
        window: (t1, t2),
        sup_gap,
    })
}

/// Uniform bound `M` of the squared component-gap forcing on `[t1, t2]`.
///
/// With `g_j(t) = (4/β)(e^{-2O_j}‖f^(j)(e^{O_j}x^(j))‖² + O_j²‖x^(j)‖²)`, returns
/// the largest `sup g_k + sup g_l` over pairs `k ≠ l`.
pub fn m_bound<T: Real>(
    spec: &SystemSpec<T>,
    ou: &OUPathSet<T>,
    traj: &TrajectoryBundle<T>,
    t1: T,
    t2: T,
    beta: T,
) -> Result<T> {
    if !(beta > T::zero()) {
        return Err(SyncError::Parameter("beta must be positive".into()));
    }
    if traj.frame() != Frame::Rode || traj.n() != spec.n() {
        return Err(SyncError::Dimension("M-bound needs a RODE trajectory of the system".into()));
    }
    let (i0, i1) = window_range(traj, t1, t2)?;
    let offset = ou.grid().index_of(traj.grid().time(0))?;
    let d = spec.d();
    let mut sups = vec![T::zero(); spec.n()];
    let mut lifted = vec![T::zero(); d];
    let mut fx = vec![T::zero(); d];
    for k in i0..=i1 {
        for (j, sup) in sups.iter_mut().enumerate() {
            let o = ou.value(j, offset + k);
            let x = traj.component(k, j);
            let e = o.exp();
            for c in 0..d {
                lifted[c] = e * x[c];
            }
            spec.drift(j).eval_into(&lifted, &mut fx);
            let g = T::lit(4.0) / beta * ((-T::lit(2.0) * o).exp() * norm(&fx).powi(2) + o * o * norm(x).powi(2));
            if !g.is_finite() {
                return Err(SyncError::NumericRange {
                    time: traj.grid().time(k).to_f64_lossy(),
                    detail: "M-bound integrand overflowed".into(),
                });
            }
            *sup = sup.max(g);
        }
    }
    sups.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    Ok(sups[0] + sups[1])
}

fn check_nus<T: Real>(nus: &[T]) -> Result<()> {
    if nus.is_empty() {
        return Err(SyncError::Parameter("empty coupling list".into()));
    }
    if nus.iter().any(|&v| !(v >= T::one())) {
        return Err(SyncError::Parameter("coupling strengths must be at least 1".into()));
    }
    if nus.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SyncError::Parameter("nus not ascending".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub nu: T,
    pub sup_gap: T,
    pub m_bound: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport<T> {
    pub rows: Vec<SweepRow<T>>,
    pub window: (T, T),
    /// Slope of `ln sup_gap` against `ln ν`; `None` with fewer than two
    /// positive gaps.
    pub slope: Option<T>,
    pub strictly_decreasing: bool,
    /// Every `M` is within 5% of the one at the smallest `ν`.
    pub m_uniform: bool,
}

/// Component-gap scaling in `ν` with the noise and initial data held fixed.
///
/// Each run starts from `x0` at `t0` and the sup gap is taken over
/// `[window.0, window.1]`. Runs for different `ν` execute in parallel.
pub fn nu_sweep<T: Real>(
    spec: &SystemSpec<T>,
    ou: &OUPathSet<T>,
    x0: &StateVector<T>,
    t0: T,
    nus: &[T],
    window: (T, T),
    opts: IntegratorOptions,
) -> Result<SweepReport<T>> {
    check_nus(nus)?;
    let (t1, t2) = window;
    if t1 < t0 {
        return Err(SyncError::Parameter("window starts before the initial time".into()));
    }
    let rows = nus
        .par_iter()
        .map(|&nu| {
            let s = spec.with_nu(nu)?;
            let traj = integrate_rode(&s, ou, x0, t0, t2, opts)?;
            let gap = component_gap(&traj, t1, t2)?;
            let m = m_bound(&s, ou, &traj, t1, t2, T::one())?;
            Ok(SweepRow {
                nu,
                sup_gap: gap.sup_gap,
                m_bound: m,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let positive: Vec<&SweepRow<T>> = rows.iter().filter(|r| r.sup_gap > T::zero()).collect();
    let slope = if positive.len() == rows.len() {
        let x: Vec<T> = positive.iter().map(|r| r.nu.ln()).collect();
        let y: Vec<T> = positive.iter().map(|r| r.sup_gap.ln()).collect();
        ols_slope(&x, &y)
    } else {
        None
    };
    let strictly_decreasing = rows.windows(2).all(|w| w[1].sup_gap < w[0].sup_gap);
    let m_cap = rows[0].m_bound * T::lit(1.05);
    let m_uniform = rows.iter().all(|r| r.m_bound <= m_cap);
    Ok(SweepReport {
        rows,
        window,
        slope,
        strictly_decreasing,
        m_uniform,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRow<T> {
    pub nu: T,
    /// `sup_t max_j ‖x̄_ν^(j)(t) − z̄(t)‖` over the window.
    pub sup_gap: T,
    /// `sup_t ‖(1/N) Σ_j x̄_ν^(j)(t) − z̄(t)‖` over the window.
    pub mean_gap: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedReport<T> {
    pub rows: Vec<AveragedRow<T>>,
    pub window: (T, T),
    pub depth: T,
    pub decreasing: bool,
}

/// Distance between the coupled attractor trajectories and the averaged
/// attractor trajectory on `[window.0, window.1]` for every `ν`.
///
/// Attractor trajectories are started at the origin `depth` before the
/// window and integrated through it.
pub fn averaged_comparison<T: Real>(
    spec: &SystemSpec<T>,
    ou: &OUPathSet<T>,
    nus: &[T],
    window: (T, T),
    depth: T,
    opts: IntegratorOptions,
) -> Result<AveragedReport<T>> {
    check_nus(nus)?;
    let (t1, t2) = window;
    let zbar = averaged_attractor_trajectory(spec, ou, depth, t1, t2, opts)?;
    if zbar.len() < MIN_WINDOW_NODES {
        return Err(SyncError::Parameter(format!(
            "window has {} nodes, need at least {MIN_WINDOW_NODES}",
            zbar.len()
        )));
    }
    let d = spec.d();
    let rows = nus
        .par_iter()
        .map(|&nu| {
            let s = spec.with_nu(nu)?;
            let traj = attractor_trajectory(&s, ou, depth, t1, t2, opts)?;
            let mut sup_gap = T::zero();
            let mut mean_gap = T::zero();
            let mut mean = vec![T::zero(); d];
            let inv_n = T::one() / T::lit(s.n() as f64);
            for k in 0..traj.len() {
                let z = zbar.component(k, 0);
                mean.iter_mut().for_each(|m| *m = T::zero());
                for j in 0..s.n() {
                    let x = traj.component(k, j);
                    sup_gap = sup_gap.max(distance(x, z));
                    for c in 0..d {
                        mean[c] += x[c] * inv_n;
                    }
                }
                mean_gap = mean_gap.max(distance(&mean, z));
            }
            Ok(AveragedRow { nu, sup_gap, mean_gap })
        })
        .collect::<Result<Vec<_>>>()?;
    let decreasing = rows.windows(2).all(|w| w[1].sup_gap < w[0].sup_gap);
    Ok(AveragedReport {
        rows,
        window,
        depth,
        decreasing,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport<T> {
    /// `sup_k ‖S(X̄(t_k)) − X̄(t_{k+1})‖` with `S` one stochastic Heun step.
    pub sup_residual: T,
    /// `sup_k` of the corrector-predictor difference of the same steps.
    pub sup_error_estimate: T,
    pub passed: bool,
}

/// Tests that the frame-converted attractor trajectory solves the SODE:
/// one stochastic Heun step from each node must land within ten times the
/// step's embedded error estimate of the next node.
pub fn stationary_residual<T: Real>(
    spec: &SystemSpec<T>,
    noise: &NoiseGrid<T>,
    ou: &OUPathSet<T>,
    depth: T,
    window: (T, T),
    opts: IntegratorOptions,
) -> Result<ResidualReport<T>> {
    if noise.grid() != ou.grid() {
        return Err(SyncError::Dimension("noise and OU paths must share a grid".into()));
    }
    let (t1, t2) = window;
    let traj = attractor_trajectory(spec, ou, depth, t1, t2, opts)?;
    let grid = ou.grid();
    let offset = grid.index_of(t1)?;
    let h = grid.step();
    let mut sode = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let state = frame_convert(&traj.state_vector(k), &ou.at(offset + k), Frame::Sode)?;
        sode.push(state.into_vec());
    }
    let mut dw = vec![T::zero(); spec.m()];
    let mut sup_residual = T::zero();
    let mut sup_est = T::zero();
    for k in 0..traj.len() - 1 {
        let g = offset + k;
        for (i, w) in dw.iter_mut().enumerate() {
            *w = noise.increments(i)[g];
        }
        let (next, pred) = stochastic_heun_step(spec, &sode[k], &ou.at(g), &ou.at(g + 1), &dw, h)?;
        sup_residual = sup_residual.max(distance(&next, &sode[k + 1]));
        sup_est = sup_est.max(distance(&next, &pred));
    }
    Ok(ResidualReport {
        sup_residual,
        sup_error_estimate: sup_est,
        passed: sup_residual <= T::lit(10.0) * sup_est,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DriftSpec;
    use crate::noise::TimeGrid;
    use approx::assert_relative_eq;

    fn bundle(values: Vec<f64>, n: usize, h: f64) -> TrajectoryBundle<f64> {
        let k = values.len() / n;
        let grid = TimeGrid::new(0.0, h * (k - 1) as f64, h).unwrap();
        TrajectoryBundle::from_parts(grid, Frame::Rode, n, 1, values, 0)
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let gaps: Vec<f64> = times.iter().map(|t| 3.0 * (-1.7 * t).exp()).collect();
        assert_relative_eq!(fit_decay_rate(&times, &gaps, 0.0).unwrap(), -1.7, epsilon = 1e-10);
        // fitting stops at the floor
        let floored: Vec<f64> = times.iter().map(|&t| if t > 5.0 { 1e-13 } else { (-t).exp() }).collect();
        assert_relative_eq!(fit_decay_rate(&times, &floored, 0.0).unwrap(), -1.0, epsilon = 1e-10);
        assert_eq!(fit_decay_rate(&times, &vec![0.0; 100], 0.0), None);
    }

    #[test]
    fn identical_trajectories_have_no_rate() {
        let a = bundle((0..60).map(|k| k as f64).collect(), 3, 0.1);
        let r = pairwise_gap(&a, &a, 0.0).unwrap();
        assert!(r.gaps.iter().all(|&g| g == 0.0));
        assert_eq!(r.fitted_rate, None);
        let other = bundle(vec![0.0; 40], 2, 0.1);
        assert!(matches!(pairwise_gap(&a, &other, 0.0), Err(SyncError::Comparison(_))));
    }

    #[test]
    fn component_gap_examples() {
        let same = bundle(vec![0.5; 3 * 20], 3, 0.1);
        assert_eq!(component_gap(&same, 0.0, 1.9).unwrap().sup_gap, 0.0);
        let mut v = vec![0.0; 3 * 20];
        v[3 * 4] = 1.0;
        let r = component_gap(&bundle(v, 3, 0.1), 0.0, 1.9).unwrap();
        assert_eq!(r.gaps[4], 1.0);
        assert_eq!(r.sup_gap, 1.0);
        let short = component_gap(&same, 0.0, 0.5).unwrap_err();
        assert!(matches!(short, SyncError::Parameter(_)));
    }

    #[test]
    fn nu_list_validation() {
        assert!(check_nus::<f64>(&[]).is_err());
        assert!(check_nus(&[10.0, 1.0]).unwrap_err().to_string().contains("nus not ascending"));
        assert!(check_nus(&[0.5, 1.0]).is_err());
        assert!(check_nus(&[1.0, 10.0, 100.0]).is_ok());
    }

    #[test]
    fn envelope_of_exact_exponential() {
        let h = 0.05;
        let k = 80;
        let mut a = Vec::new();
        for i in 0..k {
            let t = i as f64 * h;
            a.extend([(-t).exp(), 0.0, 0.0]);
        }
        let a = bundle(a, 3, h);
        let b = bundle(vec![0.0; 3 * k], 3, h);
        let t_omega = OmegaTime { time: 1.0, found: true };
        // squared gap decays like e^{-2t}, so the rate-1 envelope holds
        let check = contraction_envelope(&a, &b, t_omega, 1.0, 0.05).unwrap();
        assert!(check.holds && check.anchored_holds);
        let check = contraction_envelope(&a, &b, t_omega, 2.5, 0.05).unwrap();
        assert!(!check.holds);
        let missing = contraction_envelope(&a, &b, OmegaTime { time: 3.95, found: false }, 1.0, 0.05).unwrap();
        assert!(!missing.holds);
    }

    #[test]
    fn m_bound_of_linear_state() {
        let spec = SystemSpec::homogeneous(3, DriftSpec::linear(2.0, 1).unwrap(), vec![0.0], 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        let ou = OUPathSet::zeros(grid, 3);
        let values: Vec<f64> = (0..11).flat_map(|_| [1.0, 0.5, 0.0]).collect();
        let traj = TrajectoryBundle::from_parts(grid, Frame::Rode, 3, 1, values, 0);
        // g_j = 4 |f(x_j)|² = 16 x_j²: sups 16 and 4
        assert_relative_eq!(m_bound(&spec, &ou, &traj, 0.0, 1.0, 1.0).unwrap(), 20.0, epsilon = 1e-12);
        assert!(m_bound(&spec, &ou, &traj, 0.0, 1.0, 0.0).is_err());
    }
}
