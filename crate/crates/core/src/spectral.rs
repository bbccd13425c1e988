//! Spectra of the tridiagonal and circulant coupling matrices, the
//! time-dependent comparison matrices of the pairwise and absorbing
//! estimates, and the componentwise comparison integrator.

use crate::dynamics::SystemSpec;
use crate::error::{Result, SyncError};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::noise::{OUPathSet, TimeGrid};
use crate::scalar::Real;

/// The `p x p` tridiagonal matrix with `-α` on the diagonal and ones beside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TridiagSpec<T> {
    pub p: usize,
    pub alpha: T,
}

impl<T: Real> TridiagSpec<T> {
    pub fn new(p: usize, alpha: T) -> Result<Self> {
        if p == 0 {
            return Err(SyncError::Parameter("tridiagonal size must be at least 1".into()));
        }
        Ok(TridiagSpec { p, alpha })
    }

    pub fn matrix(&self) -> Matrix<T> {
        let mut a = Matrix::zeros(self.p);
        for i in 0..self.p {
            a[(i, i)] = -self.alpha;
            if i + 1 < self.p {
                a[(i, i + 1)] = T::one();
                a[(i + 1, i)] = T::one();
            }
        }
        a
    }
}

/// Closed-form spectrum `-α + 2 cos(kπ/(p+1))`, `k = 1..p`, ascending.
pub fn tridiag_eigenvalues<T: Real>(spec: &TridiagSpec<T>) -> Vec<T> {
    let p1 = T::lit((spec.p + 1) as f64);
    // cos decreases on (0, π), so k = p..1 is ascending
    (1..=spec.p)
        .rev()
        .map(|k| {
            // the middle mode has cos(π/2) = 0 exactly
            let c = if 2 * k == spec.p + 1 {
                T::zero()
            } else {
                (T::lit(k as f64) * T::PI() / p1).cos()
            };
            -spec.alpha + T::lit(2.0) * c
        })
        .collect()
}

/// `α₀(p) = 1 - cos(pπ/(p+1))`; the tridiagonal matrix is negative
/// definite for every `α >= α₀(p)`.
pub fn alpha_threshold<T: Real>(p: usize) -> T {
    let p = T::lit(p as f64);
    T::one() - (p * T::PI() / (p + T::one())).cos()
}

/// `2 cos(π/(p+1))`: the value of `α` at which the largest eigenvalue
/// crosses zero.
pub fn sharp_alpha_threshold<T: Real>(p: usize) -> T {
    T::lit(2.0) * (T::PI() / T::lit((p + 1) as f64)).cos()
}

/// Spectrum of `ν (x^(j-1) - 2x^(j) + x^(j+1))` on the cycle of length `n`:
/// `-2ν (1 - cos(2πk/n))`, `k = 0..n-1`.
pub fn circulant_laplacian_eigenvalues<T: Real>(n: usize, nu: T) -> Vec<T> {
    let nn = T::lit(n as f64);
    (0..n)
        .map(|k| -T::lit(2.0) * nu * (T::one() - (T::lit(2.0 * k as f64) * T::PI() / nn).cos()))
        .collect()
}

/// Symmetric circulant matrix with the given diagonal and `ν` at the cyclic
/// neighbours, corners included. Requires `n >= 3`.
pub fn cyclic_coupling_matrix<T: Real>(diag: &[T], nu: T) -> Matrix<T> {
    let n = diag.len();
    let mut a = Matrix::from_diagonal(diag);
    if n >= 3 {
        for j in 0..n {
            let q = (j + 1) % n;
            a[(j, q)] = nu;
            a[(q, j)] = nu;
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingVariant {
    /// Diagonal `2O^(j) - 2L - 2ν`, governing differences of two solutions.
    Pairwise,
    /// Diagonal `2O^(j) - L - 2ν`, governing the norm of one solution.
    Absorbing,
}

/// Time series of the comparison matrices `A_ν(t)` or `Ã_ν(t)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrixSeries<T> {
    grid: TimeGrid<T>,
    nu: T,
    /// `diagonal[j][k]`: entry `j` of the diagonal at node `k`.
    diagonal: Vec<Vec<T>>,
    variant: CouplingVariant,
}

impl<T: Real> CouplingMatrixSeries<T> {
    pub fn build(spec: &SystemSpec<T>, ou: &OUPathSet<T>, variant: CouplingVariant) -> Result<Self> {
        if ou.n_components() != spec.n() {
            return Err(SyncError::Dimension(format!(
                "{} OU paths for {} systems",
                ou.n_components(),
                spec.n()
            )));
        }
        let l = spec.l();
        let shift = match variant {
            CouplingVariant::Pairwise => T::lit(2.0) * l,
            CouplingVariant::Absorbing => l,
        } + T::lit(2.0) * spec.nu();
        let diagonal = (0..spec.n())
            .map(|j| ou.path(j).iter().map(|&o| T::lit(2.0) * o - shift).collect())
            .collect();
        Ok(CouplingMatrixSeries {
            grid: *ou.grid(),
            nu: spec.nu(),
            diagonal,
            variant,
        })
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.diagonal.len()
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn variant(&self) -> CouplingVariant {
        self.variant
    }

    pub fn diagonal_at(&self, k: usize) -> Vec<T> {
        self.diagonal.iter().map(|d| d[k]).collect()
    }

    pub fn matrix_at(&self, k: usize) -> Matrix<T> {
        cyclic_coupling_matrix(&self.diagonal_at(k), self.nu)
    }

    /// Trapezoid approximation of `∫_{t_from}^{t_to} A(τ) dτ` (node indices).
    pub fn integrated(&self, from: usize, to: usize) -> Matrix<T> {
        let (lo, hi, sign) = if from <= to {
            (from, to, T::one())
        } else {
            (to, from, -T::one())
        };
        let half_h = self.grid.step() * T::lit(0.5);
        let diag: Vec<T> = self
            .diagonal
            .iter()
            .map(|d| (lo..hi).map(|k| half_h * (d[k] + d[k + 1])).sum::<T>() * sign)
            .collect();
        let span = self.grid.step() * T::lit((hi - lo) as f64) * sign;
        cyclic_coupling_matrix(&diag, self.nu * span)
    }
}

fn check_len<T: Real>(series: &CouplingMatrixSeries<T>, xi: &[T]) -> Result<()> {
    if xi.len() != series.n() {
        return Err(SyncError::Dimension(format!(
            "vector of length {} for {} x {} matrices",
            xi.len(),
            series.n(),
            series.n()
        )));
    }
    Ok(())
}

/// `ξᵀ A(t_k) ξ`, evaluated without forming the matrix.
pub fn circulant_quadratic_form<T: Real>(series: &CouplingMatrixSeries<T>, xi: &[T], k: usize) -> Result<T> {
    check_len(series, xi)?;
    if k >= series.grid.n_points() {
        return Err(SyncError::Range(format!("node {k} outside the series")));
    }
    let n = xi.len();
    let diag: T = (0..n).map(|j| series.diagonal[j][k] * xi[j] * xi[j]).sum();
    let off: T = (0..n).map(|j| xi[j] * xi[(j + 1) % n]).sum();
    Ok(diag + T::lit(2.0) * series.nu * off)
}

/// `ξᵀ (∫_{t_from}^{t_to} A(τ) dτ) ξ` with the diagonal integrated by the
/// trapezoid rule.
pub fn accumulated_quadratic_form<T: Real>(
    series: &CouplingMatrixSeries<T>,
    xi: &[T],
    from: usize,
    to: usize,
) -> Result<T> {
    check_len(series, xi)?;
    if from.max(to) >= series.grid.n_points() {
        return Err(SyncError::Range("node outside the series".into()));
    }
    Ok(series.integrated(from, to).quadratic_form(xi))
}

/// `(e^z - 1)/z`
fn phi1<T: Real>(z: T) -> T {
    if z == T::zero() {
        T::one()
    } else {
        z.exp_m1() / z
    }
}

/// `∫_0^1 σ e^{zσ} dσ = (z e^z - e^z + 1)/z²`
fn chi<T: Real>(z: T) -> T {
    if z.abs() < T::lit(0.5) {
        // Σ z^n / (n! (n+2))
        let mut term = T::one();
        let mut acc = T::lit(0.5);
        for n in 1..20 {
            term = term * z / T::lit(n as f64);
            acc += term / T::lit((n + 2) as f64);
        }
        acc
    } else {
        (z * z.exp() - z.exp_m1()) / (z * z)
    }
}

fn check_structure<T: Real>(a: &Matrix<T>, k: usize) -> Result<()> {
    let tol = T::lit(1e-10) * a.max_abs().max(T::one());
    if a.asymmetry() > tol {
        return Err(SyncError::Unsupported(format!(
            "comparison matrix at node {k} is not symmetric"
        )));
    }
    let n = a.dim();
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] < -tol {
                return Err(SyncError::Unsupported(format!(
                    "comparison matrix at node {k} has a negative off-diagonal entry; \
                     componentwise bounds need nonnegative off-diagonals"
                )));
            }
        }
    }
    Ok(())
}

/// Componentwise comparison bound: for `φ' <= A(t) φ + ψ(t)`,
///
/// `φ(t) <= exp(∫_{t0}^t A) φ(t0) + ∫_{t0}^t exp(∫_u^t A) ψ(u) du`.
///
/// `a_at(k)` and `psi_at(k)` give `A` and `ψ` at grid node `k`. Every `A(t_k)`
/// must be symmetric with nonnegative off-diagonal entries. `∫A` uses the
/// trapezoid rule and matrix exponentials come from a symmetric
/// eigendecomposition. The outer integral is integrated exactly on each cell
/// with `A` frozen at its cell average and `ψ` linear in time; this reduces to
/// the trapezoid rule as `h → 0` and is exact for constant coefficients.
///
/// Returns the bound at every node of `[t0, t1]`.
pub fn comparison_bound<T, FA, FP>(
    grid: &TimeGrid<T>,
    a_at: FA,
    psi_at: FP,
    phi0: &[T],
    t0: T,
    t1: T,
) -> Result<Vec<Vec<T>>>
where
    T: Real,
    FA: Fn(usize) -> Matrix<T>,
    FP: Fn(usize) -> Vec<T>,
{
    let plan = ComparisonPlan::new(grid, a_at, psi_at, phi0, t0, t1)?;
    Ok((0..=plan.cells.len()).map(|k| plan.bound_at(k)).collect())
}

/// The comparison bound at `t1` only; linear rather than quadratic in the
/// number of nodes.
pub fn comparison_bound_at<T, FA, FP>(
    grid: &TimeGrid<T>,
    a_at: FA,
    psi_at: FP,
    phi0: &[T],
    t0: T,
    t1: T,
) -> Result<Vec<T>>
where
    T: Real,
    FA: Fn(usize) -> Matrix<T>,
    FP: Fn(usize) -> Vec<T>,
{
    let plan = ComparisonPlan::new(grid, a_at, psi_at, phi0, t0, t1)?;
    Ok(plan.bound_at(plan.cells.len()))
}

struct ComparisonPlan<T> {
    /// Trapezoid `∫_{t0}^{t_k} A`, indexed relative to `t0`.
    cumulative: Vec<Matrix<T>>,
    /// `∫_{t_i}^{t_{i+1}} exp(Ā_i (t_{i+1} - u)) ψ(u) du` for each cell.
    cells: Vec<Vec<T>>,
    phi0: Vec<T>,
}

impl<T: Real> ComparisonPlan<T> {
    fn new<FA, FP>(grid: &TimeGrid<T>, a_at: FA, psi_at: FP, phi0: &[T], t0: T, t1: T) -> Result<Self>
    where
        FA: Fn(usize) -> Matrix<T>,
        FP: Fn(usize) -> Vec<T>,
    {
        let i0 = grid.index_of(t0)?;
        let i1 = grid.index_of(t1)?;
        if i1 < i0 {
            return Err(SyncError::Range(format!("comparison interval [{t0}, {t1}] is reversed")));
        }
        let p = phi0.len();
        let h = grid.step();
        let mut a_prev = a_at(i0);
        if a_prev.dim() != p {
            return Err(SyncError::Dimension(format!(
                "A is {0} x {0} but φ has {p} entries",
                a_prev.dim()
            )));
        }
        check_structure(&a_prev, i0)?;
        let mut psi_prev = psi_at(i0);
        if psi_prev.len() != p {
            return Err(SyncError::Dimension(format!(
                "ψ has {} entries, expected {p}",
                psi_prev.len()
            )));
        }
        let mut cumulative = Vec::with_capacity(i1 - i0 + 1);
        cumulative.push(Matrix::zeros(p));
        let mut cells = Vec::with_capacity(i1 - i0);
        for k in i0..i1 {
            let a_next = a_at(k + 1);
            if a_next.dim() != p {
                return Err(SyncError::Dimension(format!("A changes size at node {}", k + 1)));
            }
            check_structure(&a_next, k + 1)?;
            let psi_next = psi_at(k + 1);
            if psi_next.len() != p {
                return Err(SyncError::Dimension(format!("ψ changes size at node {}", k + 1)));
            }
            let mut mean = a_prev.clone();
            mean.add_scaled(&a_next, T::one());
            let mean = mean.scaled(T::lit(0.5));
            let mut cum = cumulative.last().expect("seeded").clone();
            cum.add_scaled(&mean, h);
            cumulative.push(cum);

            let eig = symmetric_eigen(&mean);
            let w = eig.to_eigenbasis(&psi_prev);
            let slope: Vec<T> = psi_next.iter().zip(&psi_prev).map(|(&b, &a)| b - a).collect();
            let dw = eig.to_eigenbasis(&slope);
            let modal: Vec<T> = eig
                .values
                .iter()
                .zip(w.iter().zip(&dw))
                .map(|(&lam, (&wk, &dk))| {
                    let z = lam * h;
                    h * ((wk + dk) * phi1(z) - dk * chi(z))
                })
                .collect();
            cells.push(eig.from_eigenbasis(&modal));
            a_prev = a_next;
            psi_prev = psi_next;
        }
        Ok(ComparisonPlan {
            cumulative,
            cells,
            phi0: phi0.to_vec(),
        })
    }

    fn bound_at(&self, k: usize) -> Vec<T> {
        let pk = &self.cumulative[k];
        let mut out = expm_apply(pk, &self.phi0);
        for i in 0..k {
            let gap = pk.sub(&self.cumulative[i + 1]);
            let v = expm_apply(&gap, &self.cells[i]);
            out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
        }
        out
    }
}

/// `exp(A) v` for symmetric `A`.
pub(crate) fn expm_apply<T: Real>(a: &Matrix<T>, v: &[T]) -> Vec<T> {
    if a.max_abs() == T::zero() {
        return v.to_vec();
    }
    let eig = symmetric_eigen(a);
    let w: Vec<T> = eig
        .to_eigenbasis(v)
        .into_iter()
        .zip(&eig.values)
        .map(|(x, &l)| x * l.exp())
        .collect();
    eig.from_eigenbasis(&w)
}
