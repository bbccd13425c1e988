//! Drift catalogue, the conjugation between the SODE and RODE frames, and
//! the right-hand sides of the coupled, equivalent-SODE and averaged systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SyncError};
use crate::scalar::{dot, Real};

/// OU values beyond this magnitude make `e^{O}` unusable in products.
pub const OU_LIMIT: f64 = 500.0;

#[derive(Debug, Clone, PartialEq)]
pub enum DriftKind<T> {
    /// `f(x) = -λ x`
    Linear { lambda: T },
    /// `f(x) = -a x - b x³` componentwise
    Cubic { a: T, b: T },
    /// Piecewise-linear scalar function applied componentwise, extended
    /// linearly beyond the outer knots.
    Tabulated { knots: Vec<T>, values: Vec<T> },
}

/// A drift `f: ℝ^d → ℝ^d` together with its one-sided dissipative
/// Lipschitz constant `L`, i.e. `⟨x₁-x₂, f(x₁)-f(x₂)⟩ <= -L |x₁-x₂|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec<T> {
    kind: DriftKind<T>,
    dim: usize,
    claimed_l: T,
}

/// Result of sampling the one-sided Lipschitz inequality.
#[derive(Debug, Clone, PartialEq)]
pub enum LipschitzCheck<T> {
    Pass,
    Fail { x1: Vec<T>, x2: Vec<T> },
}

impl<T> LipschitzCheck<T> {
    pub fn passed(&self) -> bool {
        matches!(self, LipschitzCheck::Pass)
    }
}

const CERTIFY_SAMPLES: usize = 4096;
const CERTIFY_SEED: u64 = 0x5eed_d81f;

impl<T: Real> DriftSpec<T> {
    pub fn linear(lambda: T, dim: usize) -> Result<Self> {
        if !(lambda > T::zero()) {
            return Err(SyncError::Parameter(format!("linear drift needs λ > 0, got {lambda}")));
        }
        Self::check_dim(dim)?;
        Ok(DriftSpec {
            kind: DriftKind::Linear { lambda },
            dim,
            claimed_l: lambda,
        })
    }

    pub fn cubic(a: T, b: T, dim: usize) -> Result<Self> {
        if !(a > T::zero()) || b < T::zero() {
            return Err(SyncError::Parameter(format!(
                "cubic drift needs a > 0 and b >= 0, got a = {a}, b = {b}"
            )));
        }
        Self::check_dim(dim)?;
        Ok(DriftSpec {
            kind: DriftKind::Cubic { a, b },
            dim,
            claimed_l: a,
        })
    }

    /// Tabulated drift with a user-claimed `L`, certified by sampling pairs
    /// in a ball that covers the knots.
    pub fn tabulated(knots: Vec<T>, values: Vec<T>, dim: usize, claimed_l: T) -> Result<Self> {
        Self::check_dim(dim)?;
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(SyncError::Parameter(
                "tabulated drift needs at least two knots and one value per knot".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SyncError::Parameter("knots must be strictly increasing".into()));
        }
        if !(claimed_l > T::zero()) {
            return Err(SyncError::Parameter(format!("claimed L must be positive, got {claimed_l}")));
        }
        let spread = knots
            .iter()
            .fold(T::zero(), |acc, k| acc.max(k.abs()));
        let drift = DriftSpec {
            kind: DriftKind::Tabulated { knots, values },
            dim,
            claimed_l,
        };
        let radius = T::lit(2.0) * spread + T::one();
        match verify_one_sided_lipschitz(&drift, claimed_l, CERTIFY_SAMPLES, radius, CERTIFY_SEED)? {
            LipschitzCheck::Pass => Ok(drift),
            LipschitzCheck::Fail { .. } => Err(SyncError::Parameter(format!(
                "tabulated drift violates the one-sided Lipschitz bound with L = {claimed_l}"
            ))),
        }
    }

    /// `f(x) = g - λ x` componentwise, expressed as a two-knot table.
    pub fn affine(lambda: T, offset: T, dim: usize) -> Result<Self> {
        if !(lambda > T::zero()) {
            return Err(SyncError::Parameter(format!("affine drift needs λ > 0, got {lambda}")));
        }
        Self::tabulated(
            vec![-T::one(), T::one()],
            vec![offset + lambda, offset - lambda],
            dim,
            lambda,
        )
    }

    fn check_dim(dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(SyncError::Parameter("state dimension must be at least 1".into()));
        }
        Ok(())
    }

    pub fn kind(&self) -> &DriftKind<T> {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn claimed_l(&self) -> T {
        self.claimed_l
    }

    /// Writes `f(x)` into `out`.
    pub fn eval_into(&self, x: &[T], out: &mut [T]) {
        match &self.kind {
            DriftKind::Linear { lambda } => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = -*lambda * xi;
                }
            }
            DriftKind::Cubic { a, b } => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = -*a * xi - *b * xi * xi * xi;
                }
            }
            DriftKind::Tabulated { knots, values } => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = interpolate(knots, values, xi);
                }
            }
        }
    }

    pub fn eval(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); x.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// `|f(0)|²`, the forcing that feeds the absorbing-ball estimate.
    pub fn origin_norm_sq(&self) -> T {
        let f0 = self.eval(&vec![T::zero(); self.dim]);
        dot(&f0, &f0)
    }
}

fn interpolate<T: Real>(knots: &[T], values: &[T], x: T) -> T {
    let last = knots.len() - 1;
    let seg = if x <= knots[0] {
        0
    } else if x >= knots[last] {
        last - 1
    } else {
        knots.partition_point(|&k| k <= x) - 1
    };
    let (x0, x1) = (knots[seg], knots[seg + 1]);
    let (y0, y1) = (values[seg], values[seg + 1]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Samples `n_samples` pairs uniformly in the ball of `radius` and checks
/// `⟨x₁-x₂, f(x₁)-f(x₂)⟩ <= -L |x₁-x₂|²` up to `1e-12 |x₁-x₂|²`.
pub fn verify_one_sided_lipschitz<T: Real>(
    drift: &DriftSpec<T>,
    l: T,
    n_samples: usize,
    radius: T,
    seed: u64,
) -> Result<LipschitzCheck<T>> {
    if n_samples == 0 {
        return Err(SyncError::Parameter("need at least one sample".into()));
    }
    if !(radius > T::zero()) {
        return Err(SyncError::Parameter(format!("radius must be positive, got {radius}")));
    }
    let d = drift.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| -> Vec<T> {
        let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let r = radius.to_f64_lossy() * rng.random::<f64>().powf(1.0 / d as f64);
        dir.iter().map(|v| T::lit(v / len * r)).collect()
    };
    let tol = T::lit(1e-12);
    for _ in 0..n_samples {
        let x1 = sample(&mut rng);
        let x2 = sample(&mut rng);
        let diff: Vec<T> = x1.iter().zip(&x2).map(|(&a, &b)| a - b).collect();
        let df: Vec<T> = drift
            .eval(&x1)
            .into_iter()
            .zip(drift.eval(&x2))
            .map(|(a, b)| a - b)
            .collect();
        let sq = dot(&diff, &diff);
        if dot(&diff, &df) > -l * sq + tol * sq {
            return Ok(LipschitzCheck::Fail { x1, x2 });
        }
    }
    Ok(LipschitzCheck::Pass)
}

/// `N` coupled systems sharing state dimension `d` and `m` scalar drivers.
///
/// Component indices are cyclic: the neighbours of `0` are `N-1` and `1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec<T> {
    n: usize,
    d: usize,
    m: usize,
    drifts: Vec<DriftSpec<T>>,
    coeffs: Vec<Vec<T>>,
    nu: T,
    l: T,
}

impl<T: Real> SystemSpec<T> {
    pub fn new(drifts: Vec<DriftSpec<T>>, coeffs: Vec<Vec<T>>, nu: T) -> Result<Self> {
        let n = drifts.len();
        if n < 3 {
            return Err(SyncError::Config(format!("need N >= 3 coupled systems, got {n}")));
        }
        let d = drifts[0].dim;
        if drifts.iter().any(|f| f.dim != d) {
            return Err(SyncError::Dimension("all drifts must share the state dimension".into()));
        }
        if coeffs.len() != n {
            return Err(SyncError::Dimension(format!(
                "{} coefficient rows for {n} systems",
                coeffs.len()
            )));
        }
        let m = coeffs[0].len();
        if m == 0 || coeffs.iter().any(|r| r.len() != m) {
            return Err(SyncError::Dimension("coefficient rows must share a positive length".into()));
        }
        if !(nu >= T::zero()) || !nu.is_finite() {
            return Err(SyncError::Parameter(format!("coupling must be finite and >= 0, got {nu}")));
        }
        let l = drifts
            .iter()
            .map(|f| f.claimed_l)
            .fold(T::infinity(), |a, b| a.min(b));
        Ok(SystemSpec {
            n,
            d,
            m,
            drifts,
            coeffs,
            nu,
            l,
        })
    }

    /// Same drift and coefficient row replicated over `n` systems.
    pub fn homogeneous(n: usize, drift: DriftSpec<T>, coeffs: Vec<T>, nu: T) -> Result<Self> {
        Self::new(vec![drift; n], vec![coeffs; n], nu)
    }

    pub fn with_nu(&self, nu: T) -> Result<Self> {
        Self::new(self.drifts.clone(), self.coeffs.clone(), nu)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    /// Common dissipativity constant: the minimum over the drifts.
    pub fn l(&self) -> T {
        self.l
    }

    pub fn drift(&self, j: usize) -> &DriftSpec<T> {
        &self.drifts[j]
    }

    pub fn drifts(&self) -> &[DriftSpec<T>] {
        &self.drifts
    }

    pub fn coeffs(&self) -> &[Vec<T>] {
        &self.coeffs
    }

    #[inline]
    pub fn prev(&self, j: usize) -> usize {
        (j + self.n - 1) % self.n
    }

    #[inline]
    pub fn next(&self, j: usize) -> usize {
        (j + 1) % self.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Conjugated variables `x^(j) = e^{-O^(j)} X^(j)`.
    Rode,
    /// Original variables `X^(j)`.
    Sode,
}

/// `N` component vectors in `ℝ^d`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T> {
    frame: Frame,
    n: usize,
    d: usize,
    data: Vec<T>,
}

impl<T: Real> StateVector<T> {
    pub fn new(frame: Frame, n: usize, d: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * d {
            return Err(SyncError::Dimension(format!(
                "state of {n} x {d} needs {} values, got {}",
                n * d,
                data.len()
            )));
        }
        Ok(StateVector { frame, n, d, data })
    }

    pub fn zeros(frame: Frame, n: usize, d: usize) -> Self {
        StateVector {
            frame,
            n,
            d,
            data: vec![T::zero(); n * d],
        }
    }

    /// Every component equal to `v`.
    pub fn uniform(frame: Frame, n: usize, v: &[T]) -> Self {
        StateVector {
            frame,
            n,
            d: v.len(),
            data: v.iter().copied().cycle().take(n * v.len()).collect(),
        }
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

    pub fn component(&self, j: usize) -> &[T] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

#[inline]
fn check_ou<T: Real>(o: T) -> Result<()> {
    if !o.is_finite() || o.abs() > T::lit(OU_LIMIT) {
        return Err(SyncError::NumericRange {
            time: f64::NAN,
            detail: format!("|O| = {o} exceeds {OU_LIMIT}"),
        });
    }
    Ok(())
}

/// Writes `e^{-o} f(e^{o} x) + o x` into `out`; `scratch` has length `d`.
pub(crate) fn conjugate_rhs_into<T: Real>(
    drift: &DriftSpec<T>,
    x: &[T],
    o: T,
    out: &mut [T],
    scratch: &mut [T],
) -> Result<()> {
    check_ou(o)?;
    let grow = o.exp();
    let shrink = (-o).exp();
    for (s, &xi) in scratch.iter_mut().zip(x) {
        *s = grow * xi;
    }
    drift.eval_into(scratch, out);
    for (f, &xi) in out.iter_mut().zip(x) {
        *f = shrink * *f + o * xi;
    }
    Ok(())
}

/// Conjugated drift `F^(j)(x, O) = e^{-O} f^(j)(e^{O} x) + O x`.
pub fn conjugate_rhs<T: Real>(spec: &SystemSpec<T>, j: usize, x: &[T], o: T) -> Result<Vec<T>> {
    if j >= spec.n {
        return Err(SyncError::Dimension(format!("no component {j} in a system of {}", spec.n)));
    }
    if x.len() != spec.d {
        return Err(SyncError::Dimension(format!("state has {} entries, expected {}", x.len(), spec.d)));
    }
    let mut out = vec![T::zero(); spec.d];
    let mut scratch = vec![T::zero(); spec.d];
    conjugate_rhs_into(&spec.drifts[j], x, o, &mut out, &mut scratch)?;
    Ok(out)
}

fn check_state<T: Real>(spec: &SystemSpec<T>, state: &StateVector<T>, frame: Frame, ou: &[T]) -> Result<()> {
    if state.frame != frame {
        return Err(SyncError::Dimension(format!("expected a {frame:?} state, got {:?}", state.frame)));
    }
    if state.n != spec.n || state.d != spec.d {
        return Err(SyncError::Dimension(format!(
            "state is {} x {}, system is {} x {}",
            state.n, state.d, spec.n, spec.d
        )));
    }
    if ou.len() != spec.n {
        return Err(SyncError::Dimension(format!("{} OU values for {} systems", ou.len(), spec.n)));
    }
    Ok(())
}

/// Flat-slice kernel of [`coupled_rode_rhs`].
pub(crate) fn coupled_rode_rhs_into<T: Real>(
    spec: &SystemSpec<T>,
    x: &[T],
    ou: &[T],
    out: &mut [T],
    scratch: &mut [T],
) -> Result<()> {
    let d = spec.d;
    let nu = spec.nu;
    let two = T::lit(2.0);
    for j in 0..spec.n {
        let (p, q) = (spec.prev(j), spec.next(j));
        let dst = &mut out[j * d..(j + 1) * d];
        conjugate_rhs_into(&spec.drifts[j], &x[j * d..(j + 1) * d], ou[j], dst, scratch)?;
        if nu != T::zero() {
            for c in 0..d {
                dst[c] += nu * (x[p * d + c] - two * x[j * d + c] + x[q * d + c]);
            }
        }
    }
    Ok(())
}

/// Right-hand side of the coupled RODE:
/// `F^(j)(x^(j), O^(j)) + ν (x^(j-1) - 2x^(j) + x^(j+1))`.
pub fn coupled_rode_rhs<T: Real>(
    spec: &SystemSpec<T>,
    state: &StateVector<T>,
    ou_values: &[T],
) -> Result<StateVector<T>> {
    check_state(spec, state, Frame::Rode, ou_values)?;
    let mut out = vec![T::zero(); spec.n * spec.d];
    let mut scratch = vec![T::zero(); spec.d];
    coupled_rode_rhs_into(spec, &state.data, ou_values, &mut out, &mut scratch)?;
    StateVector::new(Frame::Rode, spec.n, spec.d, out)
}

/// Flat-slice kernel of [`coupled_sode_drift`].
pub(crate) fn coupled_sode_drift_into<T: Real>(
    spec: &SystemSpec<T>,
    x: &[T],
    ou: &[T],
    out: &mut [T],
) -> Result<()> {
    let d = spec.d;
    let nu = spec.nu;
    let two = T::lit(2.0);
    for &o in ou {
        check_ou(o)?;
    }
    for j in 0..spec.n {
        let (p, q) = (spec.prev(j), spec.next(j));
        let dst = &mut out[j * d..(j + 1) * d];
        spec.drifts[j].eval_into(&x[j * d..(j + 1) * d], dst);
        if nu != T::zero() {
            let w_prev = (ou[j] - ou[p]).exp();
            let w_next = (ou[j] - ou[q]).exp();
            for c in 0..d {
                dst[c] += nu * (w_prev * x[p * d + c] - two * x[j * d + c] + w_next * x[q * d + c]);
            }
        }
    }
    Ok(())
}

/// Drift of the equivalent coupled SODE:
/// `f^(j)(X^(j)) + ν (e^{ρ_j} X^(j-1) - 2X^(j) + e^{ϱ_j} X^(j+1))` with
/// `ρ_j = O^(j) - O^(j-1)` and `ϱ_j = O^(j) - O^(j+1)`. The Stratonovich
/// noise term `Σ_i c_i^(j) X^(j) ∘ dW^(i)` is left to the integrator.
pub fn coupled_sode_drift<T: Real>(
    spec: &SystemSpec<T>,
    state: &StateVector<T>,
    ou_values: &[T],
) -> Result<StateVector<T>> {
    check_state(spec, state, Frame::Sode, ou_values)?;
    let mut out = vec![T::zero(); spec.n * spec.d];
    coupled_sode_drift_into(spec, &state.data, ou_values, &mut out)?;
    StateVector::new(Frame::Sode, spec.n, spec.d, out)
}

pub(crate) fn averaged_rode_rhs_into<T: Real>(
    spec: &SystemSpec<T>,
    z: &[T],
    ou: &[T],
    out: &mut [T],
    term: &mut [T],
    scratch: &mut [T],
) -> Result<()> {
    out.iter_mut().for_each(|v| *v = T::zero());
    for j in 0..spec.n {
        conjugate_rhs_into(&spec.drifts[j], z, ou[j], term, scratch)?;
        for (o, &t) in out.iter_mut().zip(term.iter()) {
            *o += t;
        }
    }
    let inv_n = T::one() / T::lit(spec.n as f64);
    out.iter_mut().for_each(|v| *v *= inv_n);
    Ok(())
}

/// Averaged RODE `(1/N) Σ_j [e^{-O^(j)} f^(j)(e^{O^(j)} z) + O^(j) z]`.
pub fn averaged_rode_rhs<T: Real>(spec: &SystemSpec<T>, z: &[T], ou_values: &[T]) -> Result<Vec<T>> {
    if z.len() != spec.d || ou_values.len() != spec.n {
        return Err(SyncError::Dimension(format!(
            "averaged RODE takes a {}-vector and {} OU values",
            spec.d, spec.n
        )));
    }
    let d = spec.d;
    let (mut out, mut term, mut scratch) = (vec![T::zero(); d], vec![T::zero(); d], vec![T::zero(); d]);
    averaged_rode_rhs_into(spec, z, ou_values, &mut out, &mut term, &mut scratch)?;
    Ok(out)
}

/// Moves a state between frames: `X^(j) = e^{O^(j)} x^(j)`.
pub fn frame_convert<T: Real>(state: &StateVector<T>, ou_values: &[T], target: Frame) -> Result<StateVector<T>> {
    if ou_values.len() != state.n {
        return Err(SyncError::Dimension(format!("{} OU values for {} components", ou_values.len(), state.n)));
    }
    if state.frame == target {
        return Ok(state.clone());
    }
    let sign = match target {
        Frame::Sode => T::one(),
        Frame::Rode => -T::one(),
    };
    let mut data = state.data.clone();
    for (j, &o) in ou_values.iter().enumerate() {
        check_ou(o)?;
        let factor = (sign * o).exp();
        data[j * state.d..(j + 1) * state.d].iter_mut().for_each(|v| *v *= factor);
    }
    Ok(StateVector {
        frame: target,
        n: state.n,
        d: state.d,
        data,
    })
}

/// Conjugation factor of the averaged system: `Z = exp((1/N) Σ_j O^(j)) z`.
pub fn averaged_to_sode<T: Real>(z: &[T], ou_values: &[T]) -> Result<Vec<T>> {
    let mean = ou_values.iter().copied().sum::<T>() / T::lit(ou_values.len() as f64);
    check_ou(mean)?;
    let factor = mean.exp();
    Ok(z.iter().map(|&v| v * factor).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn linear_spec(n: usize, lambda: f64, nu: f64) -> SystemSpec<f64> {
        SystemSpec::homogeneous(n, DriftSpec::linear(lambda, 1).unwrap(), vec![0.0], nu).unwrap()
    }

    fn mixed_spec(nu: f64) -> SystemSpec<f64> {
        let drifts = vec![
            DriftSpec::linear(1.0, 2).unwrap(),
            DriftSpec::cubic(1.5, 0.5, 2).unwrap(),
            DriftSpec::affine(2.0, 0.3, 2).unwrap(),
            DriftSpec::linear(3.0, 2).unwrap(),
        ];
        let coeffs = vec![vec![0.5, 0.0], vec![0.2, 0.1], vec![0.0, 1.0], vec![0.5, 0.0]];
        SystemSpec::new(drifts, coeffs, nu).unwrap()
    }

    #[test]
    fn lipschitz_certification() {
        let lin = DriftSpec::linear(1.0, 3).unwrap();
        assert!(verify_one_sided_lipschitz(&lin, 1.0, 1000, 2.0, 1).unwrap().passed());
        match verify_one_sided_lipschitz(&lin, 2.0, 10, 2.0, 1).unwrap() {
            LipschitzCheck::Fail { x1, x2 } => assert_ne!(x1, x2),
            LipschitzCheck::Pass => panic!("λ = 1 cannot certify L = 2"),
        }
        let cubic = DriftSpec::cubic(1.0, 1.0, 2).unwrap();
        assert!(verify_one_sided_lipschitz(&cubic, 1.0, 10_000, 5.0, 2).unwrap().passed());
        assert!(verify_one_sided_lipschitz(&lin, 1.0, 0, 2.0, 1).is_err());
        assert!(verify_one_sided_lipschitz(&lin, 1.0, 10, 0.0, 1).is_err());
    }

    #[test]
    fn drift_constructors_validate() {
        assert!(DriftSpec::linear(0.0, 1).is_err());
        assert!(DriftSpec::linear(1.0, 0).is_err());
        assert!(DriftSpec::cubic(1.0, -1.0, 1).is_err());
        assert!(DriftSpec::tabulated(vec![0.0, 0.0], vec![0.0, 1.0], 1, 1.0).is_err());
        // increasing table is not dissipative
        assert!(DriftSpec::tabulated(vec![-1.0, 1.0], vec![-1.0, 1.0], 1, 0.5).is_err());
        let f = DriftSpec::tabulated(vec![-1.0, 0.0, 1.0], vec![2.0, 0.0, -3.0], 1, 2.0).unwrap();
        assert_eq!(f.eval(&[0.5]), vec![-1.5]);
        assert_eq!(f.eval(&[-3.0]), vec![6.0]);
        let g = DriftSpec::affine(2.0, 0.5, 2).unwrap();
        assert_relative_eq!(g.eval(&[1.5, -4.0])[1], 8.5, epsilon = 1e-14);
        assert_relative_eq!(g.origin_norm_sq(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn system_spec_validation() {
        let f = DriftSpec::linear(1.0, 1).unwrap();
        assert!(matches!(
            SystemSpec::homogeneous(2, f.clone(), vec![1.0], 1.0),
            Err(SyncError::Config(_))
        ));
        assert!(SystemSpec::homogeneous(3, f.clone(), vec![1.0], -1.0).is_err());
        assert!(SystemSpec::new(vec![f.clone(); 3], vec![vec![1.0]; 2], 1.0).is_err());
        let spec = mixed_spec(2.0);
        assert_eq!((spec.n(), spec.d(), spec.m()), (4, 2, 2));
        assert_eq!(spec.l(), 1.0);
        assert_eq!((spec.prev(0), spec.next(3)), (3, 0));
    }

    #[test]
    fn conjugate_rhs_examples() {
        let spec = mixed_spec(1.0);
        let x = [0.4, -1.2];
        assert_eq!(conjugate_rhs(&spec, 1, &x, 0.0).unwrap(), spec.drift(1).eval(&x));
        let lin = conjugate_rhs(&spec, 3, &x, 0.7).unwrap();
        assert_relative_eq!(lin[0], (-3.0 + 0.7) * 0.4, epsilon = 1e-14);
        let cubic = SystemSpec::homogeneous(3, DriftSpec::cubic(1.0, 1.0, 1).unwrap(), vec![1.0], 0.0).unwrap();
        let v = conjugate_rhs(&cubic, 0, &[1.0], 2f64.ln()).unwrap()[0];
        assert_relative_eq!(v, -5.0 + 2f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(v, -4.30685, epsilon = 1e-5);
        assert!(matches!(
            conjugate_rhs(&spec, 0, &x, 600.0),
            Err(SyncError::NumericRange { .. })
        ));
        assert!(conjugate_rhs(&spec, 4, &x, 0.0).is_err());
    }

    #[test]
    fn coupled_rhs_laplacian() {
        let spec = SystemSpec::homogeneous(3, DriftSpec::linear(1.0, 1).unwrap(), vec![0.0], 1.0).unwrap();
        let x = StateVector::new(Frame::Rode, 3, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let out = coupled_rode_rhs(&spec, &x, &[0.0; 3]).unwrap();
        // drift -x plus the Laplacian (-2, 1, 1)
        assert_eq!(out.as_slice(), &[-3.0, 1.0, 1.0]);
        let uniform = StateVector::uniform(Frame::Rode, 4, &[0.3, -0.2]);
        let spec = mixed_spec(5.0);
        let ou = [0.1, -0.4, 0.2, 0.0];
        let out = coupled_rode_rhs(&spec, &uniform, &ou).unwrap();
        for j in 0..4 {
            let expect = conjugate_rhs(&spec, j, &[0.3, -0.2], ou[j]).unwrap();
            for c in 0..2 {
                assert_relative_eq!(out.component(j)[c], expect[c], epsilon = 1e-14);
            }
        }
        assert!(coupled_rode_rhs(&spec, &StateVector::zeros(Frame::Sode, 4, 2), &ou).is_err());
    }

    #[test]
    fn zero_coupling_is_separable() {
        let spec = mixed_spec(0.0);
        let x = StateVector::new(Frame::Rode, 4, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8]).unwrap();
        let ou = [0.3, -0.1, 0.0, 0.2];
        let out = coupled_rode_rhs(&spec, &x, &ou).unwrap();
        for j in 0..4 {
            assert_eq!(out.component(j), conjugate_rhs(&spec, j, x.component(j), ou[j]).unwrap().as_slice());
        }
        let sx = StateVector::new(Frame::Sode, 4, 2, x.as_slice().to_vec()).unwrap();
        let drift = coupled_sode_drift(&spec, &sx, &ou).unwrap();
        for j in 0..4 {
            assert_eq!(drift.component(j), spec.drift(j).eval(x.component(j)).as_slice());
        }
    }

    #[test]
    fn sode_drift_with_equal_ou_is_plain_laplacian() {
        let spec = linear_spec(3, 1.0, 2.0);
        let x = StateVector::new(Frame::Sode, 3, 1, vec![1.0, 2.0, 4.0]).unwrap();
        let out = coupled_sode_drift(&spec, &x, &[0.7; 3]).unwrap();
        assert_relative_eq!(out.as_slice()[0], -1.0 + 2.0 * (4.0 - 2.0 + 2.0), epsilon = 1e-13);
    }

    #[test]
    fn averaged_rhs_examples() {
        let spec = SystemSpec::homogeneous(5, DriftSpec::cubic(2.0, 1.0, 1).unwrap(), vec![1.0], 1.0).unwrap();
        assert_eq!(averaged_rode_rhs(&spec, &[0.5], &[0.0; 5]).unwrap(), spec.drift(0).eval(&[0.5]));
        let drifts = (1..=3).map(|l| DriftSpec::linear(l as f64, 1).unwrap()).collect();
        let spec = SystemSpec::new(drifts, vec![vec![0.0]; 3], 1.0).unwrap();
        assert_relative_eq!(averaged_rode_rhs(&spec, &[2.0], &[0.0; 3]).unwrap()[0], -4.0, epsilon = 1e-14);
    }

    #[test]
    fn frame_conversion_examples() {
        let x = StateVector::new(Frame::Rode, 3, 1, vec![2.0, 1.0, -1.0]).unwrap();
        let ou = [3f64.ln(), 0.0, -0.5];
        let big = frame_convert(&x, &ou, Frame::Sode).unwrap();
        assert_relative_eq!(big.as_slice()[0], 6.0, epsilon = 1e-14);
        assert_eq!(frame_convert(&x, &[0.0; 3], Frame::Sode).unwrap().as_slice(), x.as_slice());
        assert_eq!(frame_convert(&x, &ou, Frame::Rode).unwrap(), x);
        assert!(frame_convert(&x, &[0.0; 2], Frame::Sode).is_err());
        let z = averaged_to_sode(&[1.0], &[0.3, 0.6, 0.9]).unwrap();
        assert_relative_eq!(z[0], 0.6f64.exp(), epsilon = 1e-14);
    }

    fn state_strategy(n: usize, d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0..3.0f64, n * d)
    }

    proptest! {
        #[test]
        fn frame_round_trip(data in state_strategy(4, 2), ou in prop::collection::vec(-5.0..5.0f64, 4)) {
            let x = StateVector::new(Frame::Rode, 4, 2, data).unwrap();
            let back = frame_convert(&frame_convert(&x, &ou, Frame::Sode).unwrap(), &ou, Frame::Rode).unwrap();
            for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300) + 1e-300);
            }
        }

        #[test]
        fn conjugacy_identity(data in state_strategy(4, 2), ou in prop::collection::vec(-2.0..2.0f64, 4), nu in 0.0..10.0f64) {
            // a(X) = e^{O} F(x) - O X for X = e^{O} x
            let spec = mixed_spec(nu);
            let x = StateVector::new(Frame::Rode, 4, 2, data).unwrap();
            let big = frame_convert(&x, &ou, Frame::Sode).unwrap();
            let rode = coupled_rode_rhs(&spec, &x, &ou).unwrap();
            let sode = coupled_sode_drift(&spec, &big, &ou).unwrap();
            for j in 0..4 {
                for c in 0..2 {
                    let lhs = ou[j].exp() * rode.component(j)[c] - ou[j] * big.component(j)[c];
                    let rhs = sode.component(j)[c];
                    prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
                }
            }
        }

        #[test]
        fn averaged_is_mean_of_conjugates(z in state_strategy(1, 2), ou in prop::collection::vec(-2.0..2.0f64, 4)) {
            let spec = mixed_spec(1.0);
            let avg = averaged_rode_rhs(&spec, &z, &ou).unwrap();
            for c in 0..2 {
                let mean = (0..4).map(|j| conjugate_rhs(&spec, j, &z, ou[j]).unwrap()[c]).sum::<f64>() / 4.0;
                prop_assert!((avg[c] - mean).abs() <= 1e-15 * mean.abs().max(1.0) * 4.0);
            }
        }

        #[test]
        fn coupled_rhs_is_dissipative(
            a in state_strategy(4, 2),
            b in state_strategy(4, 2),
            ou in prop::collection::vec(-2.0..2.0f64, 4),
            nu in 0.0..10.0f64,
        ) {
            // ⟨a-b, F(a)-F(b)⟩ <= Σ_j (O_j - L_j)|a_j-b_j|² + ν Σ_j ⟨Δ_j, Δ_{j-1} - 2Δ_j + Δ_{j+1}⟩
            let spec = mixed_spec(nu);
            let sa = StateVector::new(Frame::Rode, 4, 2, a).unwrap();
            let sb = StateVector::new(Frame::Rode, 4, 2, b).unwrap();
            let fa = coupled_rode_rhs(&spec, &sa, &ou).unwrap();
            let fb = coupled_rode_rhs(&spec, &sb, &ou).unwrap();
            let delta: Vec<f64> = sa.as_slice().iter().zip(sb.as_slice()).map(|(x, y)| x - y).collect();
            let df: Vec<f64> = fa.as_slice().iter().zip(fb.as_slice()).map(|(x, y)| x - y).collect();
            let lhs = dot(&delta, &df);
            let mut bound = 0.0;
            for j in 0..4 {
                let dj = &delta[j * 2..j * 2 + 2];
                bound += (ou[j] - spec.drift(j).claimed_l()) * dot(dj, dj);
                let (p, q) = (spec.prev(j), spec.next(j));
                for c in 0..2 {
                    bound += nu * dj[c] * (delta[p * 2 + c] - 2.0 * dj[c] + delta[q * 2 + c]);
                }
            }
            prop_assert!(lhs <= bound + 1e-10 * (1.0 + bound.abs()), "{lhs} > {bound}");
        }
    }
}
