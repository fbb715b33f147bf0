//! Phase-space (Wigner) representation of discretized position-space operators.
//!
//! A density matrix ρ on a uniform position grid qₐ = q₀ + a·δ is mapped to the
//! real field
//!
//!   ρ_W(q̄, p) = π⁻¹ Σ_λ ⟨q̄−λ|ρ|q̄+λ⟩ e^{2iλp},
//!
//! evaluated on the staggered center lattice q̄ₖ = q₀ + k·δ/2 (so that every
//! matrix element ρ[a,b] contributes to exactly one center, k = a+b) and on the
//! physical momentum band p ∈ [−π/2δ, π/2δ).  Observables get the companion
//! symbol without the π⁻¹ prefactor,
//!
//!   O_W(q̄, p) = Σ_z ⟨q̄−z/2|O|q̄+z/2⟩ e^{ipz},
//!
//! and with these two normalizations the lattice versions of the trace and
//! pairing identities hold at machine precision for *arbitrary* Hermitian
//! matrices:
//!
//!   ∬ ρ_W dq dp = Tr ρ,      ∬ ρ_W O_W dq dp = Tr(ρO).
//!
//! Integer centers (k even) hold the even-separation coherences, half-step
//! centers the odd ones.  Operators diagonal in position therefore have support
//! only on integer centers; pointwise reads of such symbols should use those
//! rows, while integrals and pairings are exact as computed.  Even rows are
//! π/δ-periodic in p, which is why the integral doubles the even-row sum over
//! the stored half band (the odd-row contribution to linear integrals vanishes
//! identically, and row-wise products are always even in parity).
//!
//! The module also provides a truncated Moyal (star) product check with the
//! bidifferential Λ = ∂⃖_p ∂⃗_q − ∂⃖_q ∂⃗_p evaluated by finite differences, and a
//! classical conditional entropy S = −∬_Γ ρ̃_W log(ρ̃_W / ρ̃_{*W}) of smoothed,
//! norm-preserving fields against a smoothed stationary reference, which is ≤ 0,
//! vanishes exactly at equilibrium, and relaxes to zero from below.

use crate::C64;
use ndarray::Array2;
use thiserror::Error;

/// Errors from phase-space construction and functionals.
#[derive(Debug, Error)]
pub enum WignerError {
    /// Input operator matrix is not square.
    #[error("operator matrix is {rows}x{cols}, expected square")]
    NonSquare { rows: usize, cols: usize },
    /// Input matrix violates Hermitian symmetry beyond tolerance.
    #[error("matrix deviates from Hermitian symmetry by {residual:.3e} (relative)")]
    NonHermitian { residual: f64 },
    /// Grid too coarse for the requested stencil work.
    #[error("grid with {got} position nodes is too small, need at least {need}")]
    GridTooSmall { need: usize, got: usize },
    /// Position step must be positive.
    #[error("position step must be positive, got {step}")]
    BadStep { step: f64 },
    /// Transform output retained a spurious imaginary part.
    #[error("imaginary residue {max:.3e} exceeds tolerance after transform")]
    ImaginaryResidue { max: f64 },
    /// Two fields live on different phase-space grids.
    #[error("phase-space grids do not match")]
    GridMismatch,
    /// Moyal truncation order beyond the implemented bidifferential depth.
    #[error("Moyal truncation order {order} not supported, maximum is 2")]
    UnsupportedOrder { order: usize },
    /// Smoothing kernel narrower than the guaranteed-coarsening minimum.
    #[error("smoothing width {width} cells is below the minimum of 2")]
    WidthTooSmall { width: f64 },
    /// Snapshot count and time grid disagree.
    #[error("got {snapshots} snapshots for {times} sample times")]
    LengthMismatch { snapshots: usize, times: usize },
    /// The smoothed reference density has no positive support.
    #[error("stationary reference has no positive support on the grid")]
    NoPositiveSupport,
}

/// Uniform rectangular phase-space grid.
///
/// `q_step` is the staggered center spacing (half the position-grid step of the
/// underlying matrix); `p` covers the physical band [−π/2δ, π/2δ).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    q_min: f64,
    q_step: f64,
    nq: usize,
    p_min: f64,
    p_step: f64,
    np: usize,
}

impl PhaseGrid {
    /// Staggered grid conjugate to `n` position nodes starting at `q_min` with step `dq`.
    fn conjugate(q_min: f64, dq: f64, n: usize) -> Self {
        PhaseGrid {
            q_min,
            q_step: 0.5 * dq,
            nq: 2 * n - 1,
            p_min: -std::f64::consts::PI / (2.0 * dq),
            p_step: std::f64::consts::PI / (n as f64 * dq),
            np: n,
        }
    }

    /// Center coordinate of row `i`.
    pub fn q(&self, i: usize) -> f64 {
        self.q_min + i as f64 * self.q_step
    }

    /// Momentum coordinate of column `j`.
    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.p_step
    }

    /// Number of center rows.
    pub fn nq(&self) -> usize {
        self.nq
    }

    /// Number of momentum columns.
    pub fn np(&self) -> usize {
        self.np
    }

    /// Row spacing along q.
    pub fn q_step(&self) -> f64 {
        self.q_step
    }

    /// Column spacing along p.
    pub fn p_step(&self) -> f64 {
        self.p_step
    }

    /// Phase-space measure of one cell.
    pub fn cell(&self) -> f64 {
        self.q_step * self.p_step
    }
}

/// Real field over a [`PhaseGrid`]: a Wigner density or an observable symbol.
#[derive(Debug, Clone)]
pub struct PhaseSpaceFunction {
    grid: PhaseGrid,
    values: Array2<f64>,
}

impl PhaseSpaceFunction {
    /// Grid the field lives on.
    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    /// Field values, indexed `[center row, momentum column]`.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// ∬ f dq dp, exact for Wigner densities: the stored band covers one full
    /// period of the even rows (doubled below), while odd-row sums vanish
    /// identically for the linear integral.
    pub fn integral(&self) -> f64 {
        let mut even = 0.0;
        for i in (0..self.grid.nq).step_by(2) {
            for j in 0..self.grid.np {
                even += self.values[[i, j]];
            }
        }
        2.0 * even * self.grid.cell()
    }

    /// ∬ f g dq dp, exact pairing: row-wise products are even-parity in p, so
    /// the half band again holds exactly half of the full-period sum.
    pub fn pairing(&self, other: &PhaseSpaceFunction) -> Result<f64, WignerError> {
        if self.grid != other.grid {
            return Err(WignerError::GridMismatch);
        }
        let mut acc = 0.0;
        for i in 0..self.grid.nq {
            for j in 0..self.grid.np {
                acc += self.values[[i, j]] * other.values[[i, j]];
            }
        }
        Ok(2.0 * acc * self.grid.cell())
    }

    /// Smallest field value (negativity probe).
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Pointwise linear combination `self + c·other` on a shared grid.
    pub fn add_scaled(&self, c: f64, other: &PhaseSpaceFunction) -> Result<PhaseSpaceFunction, WignerError> {
        if self.grid != other.grid {
            return Err(WignerError::GridMismatch);
        }
        Ok(PhaseSpaceFunction {
            grid: self.grid.clone(),
            values: &self.values + &(c * &other.values),
        })
    }
}

const HERMITICITY_TOL: f64 = 1e-10;
const IMAG_RESIDUE_TOL: f64 = 1e-10;

fn check_square_hermitian(m: &Array2<C64>) -> Result<usize, WignerError> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(WignerError::NonSquare { rows, cols });
    }
    if rows < 2 {
        return Err(WignerError::GridTooSmall { need: 2, got: rows });
    }
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.norm()));
    let mut residual = 0.0f64;
    for a in 0..rows {
        for b in a..rows {
            residual = residual.max((m[[a, b]] - m[[b, a]].conj()).norm());
        }
    }
    if residual > HERMITICITY_TOL * scale.max(1e-300) {
        return Err(WignerError::NonHermitian { residual: residual / scale.max(1e-300) });
    }
    Ok(rows)
}

/// Raw staggered-lattice symbol Σₐ M[a, k−a] e^{i(k−2a)δp} without prefactor,
/// for complex matrices (no Hermiticity assumed).  Rows are centers k = a+b,
/// columns the momentum band.
fn complex_symbol(m: &Array2<C64>, q_min: f64, dq: f64) -> Array2<C64> {
    let n = m.nrows();
    let grid = PhaseGrid::conjugate(q_min, dq, n);
    let mut out = Array2::from_elem((grid.nq, grid.np), C64::ZERO);
    // Phase table e^{i r δ p_j} for r ∈ [−(n−1), n−1].
    let mut phases = Array2::from_elem((2 * n - 1, grid.np), C64::ZERO);
    for (ri, r) in (-(n as isize - 1)..=(n as isize - 1)).enumerate() {
        for j in 0..grid.np {
            let arg = r as f64 * dq * grid.p(j);
            phases[[ri, j]] = C64::new(arg.cos(), arg.sin());
        }
    }
    for k in 0..grid.nq {
        let a_lo = k.saturating_sub(n - 1);
        let a_hi = k.min(n - 1);
        for a in a_lo..=a_hi {
            let b = k - a;
            let coeff = m[[a, b]];
            if coeff == C64::ZERO {
                continue;
            }
            let r = k as isize - 2 * a as isize;
            let ri = (r + n as isize - 1) as usize;
            for j in 0..grid.np {
                out[[k, j]] += coeff * phases[[ri, j]];
            }
        }
    }
    out
}

fn realize(
    raw: Array2<C64>,
    grid: PhaseGrid,
    prefactor: f64,
) -> Result<PhaseSpaceFunction, WignerError> {
    let scale = raw.iter().fold(0.0f64, |s, v| s.max(v.re.abs()));
    let max_imag = raw.iter().fold(0.0f64, |s, v| s.max(v.im.abs()));
    if max_imag > IMAG_RESIDUE_TOL * scale.max(1e-300) {
        return Err(WignerError::ImaginaryResidue { max: max_imag });
    }
    Ok(PhaseSpaceFunction {
        grid,
        values: raw.mapv(|v| prefactor * v.re),
    })
}

/// Wigner transform of a Hermitian density matrix on a uniform position grid.
///
/// `rho[a, b] = ⟨qₐ|ρ|q_b⟩` with Tr ρ = Σₐ rho[a, a]; the trace identity
/// `integral() = Tr ρ` is exact on the returned field.
pub fn wigner_transform(
    rho: &Array2<C64>,
    q_min: f64,
    dq: f64,
) -> Result<PhaseSpaceFunction, WignerError> {
    if !(dq > 0.0) {
        return Err(WignerError::BadStep { step: dq });
    }
    let n = check_square_hermitian(rho)?;
    let grid = PhaseGrid::conjugate(q_min, dq, n);
    realize(complex_symbol(rho, q_min, dq), grid, std::f64::consts::FRAC_1_PI)
}

/// Weyl symbol of a Hermitian observable on the same staggered lattice.
///
/// Carries no π⁻¹ prefactor, so `rho_w.pairing(&o_w) = Tr(ρO)` exactly.
pub fn weyl_symbol(op: &Array2<C64>, q_min: f64, dq: f64) -> Result<PhaseSpaceFunction, WignerError> {
    if !(dq > 0.0) {
        return Err(WignerError::BadStep { step: dq });
    }
    let n = check_square_hermitian(op)?;
    let grid = PhaseGrid::conjugate(q_min, dq, n);
    realize(complex_symbol(op, q_min, dq), grid, 1.0)
}

// ---------------------------------------------------------------------------
// Moyal product check
// ---------------------------------------------------------------------------

/// Residuals of the truncated Moyal expansion against the exact product symbol.
///
/// `residuals[k]` is the interior max of |symbol(O₁O₂) − Σ_{n≤k} star term n|;
/// `scale` is the interior max of |symbol(O₁O₂)| for relative reading.
#[derive(Debug, Clone)]
pub struct MoyalReport {
    pub residuals: Vec<f64>,
    pub scale: f64,
}

/// Fraction of a symbol's mass below which a parity class counts as empty.
const PARITY_EMPTY: f64 = 1e-12;
/// Interior margin (rows and columns) excluded from Moyal residuals, wide
/// enough for two nested fourth-order stencils.
const EDGE_TRIM: usize = 6;

/// Fill the near-empty parity class of a staggered symbol by cubic
/// interpolation along q from the populated class (exact for cubics, hence for
/// the polynomial and lattice-trigonometric symbols used as oracles).  Symbols
/// of smooth kernels populate both classes smoothly and pass through.
fn parity_complete(field: &Array2<C64>) -> Array2<C64> {
    let (nq, np) = field.dim();
    let mass = |parity: usize| -> f64 {
        let mut s = 0.0;
        for i in (parity..nq).step_by(2) {
            for j in 0..np {
                s += field[[i, j]].norm();
            }
        }
        s
    };
    let (even, odd) = (mass(0), mass(1));
    let total = even + odd;
    if total == 0.0 || (even > PARITY_EMPTY * total && odd > PARITY_EMPTY * total) {
        return field.clone();
    }
    let keep = if even >= odd { 0usize } else { 1usize };
    let mut out = field.clone();
    for i in 0..nq {
        if i % 2 == keep {
            continue;
        }
        for j in 0..np {
            // Half-point cubic: f(0) = (−f(−3) + 9f(−1) + 9f(+1) − f(+3)) / 16,
            // falling back to the nearest populated row at the borders (the
            // interior trim keeps borders out of every residual).
            let val = if i >= 3 && i + 3 < nq {
                (-field[[i - 3, j]] + 9.0 * field[[i - 1, j]] + 9.0 * field[[i + 1, j]]
                    - field[[i + 3, j]])
                    / 16.0
            } else if i >= 1 && i + 1 < nq {
                0.5 * (field[[i - 1, j]] + field[[i + 1, j]])
            } else if i >= 1 {
                field[[i - 1, j]]
            } else {
                field[[i + 1, j]]
            };
            out[[i, j]] = val;
        }
    }
    out
}

/// Fourth-order central first derivative along the given axis (0 = q, 1 = p).
fn d1(field: &Array2<C64>, axis: usize, h: f64) -> Array2<C64> {
    let (nq, np) = field.dim();
    let mut out = Array2::from_elem((nq, np), C64::ZERO);
    let get = |i: isize, j: isize| -> C64 {
        let i = i.clamp(0, nq as isize - 1) as usize;
        let j = j.clamp(0, np as isize - 1) as usize;
        field[[i, j]]
    };
    for i in 0..nq as isize {
        for j in 0..np as isize {
            let f = |s: isize| if axis == 0 { get(i + s, j) } else { get(i, j + s) };
            // (−f₂ + 8f₁ − 8f₋₁ + f₋₂) / 12h
            out[[i as usize, j as usize]] =
                (-f(2) + 8.0 * f(1) - 8.0 * f(-1) + f(-2)) / (12.0 * h);
        }
    }
    out
}

/// Interior maximum absolute value, skipping `trim` rows/columns on each edge.
fn interior_max(field: &Array2<C64>, trim: usize) -> f64 {
    let (nq, np) = field.dim();
    let mut m = 0.0f64;
    for i in trim..nq - trim {
        for j in trim..np - trim {
            m = m.max(field[[i, j]].norm());
        }
    }
    m
}

/// Compare the symbol of the operator product O₁O₂ with its Moyal expansion
/// O₁_W ⋆ O₂_W truncated at orders 0..=`k_max` (k_max ≤ 2):
///
///   O₁_W ⋆ O₂_W = Σₙ (1/n!) (1/2i)ⁿ Λⁿ(O₁_W, O₂_W),
///   Λ(f, g) = ∂_p f ∂_q g − ∂_q f ∂_p g.
///
/// Derivatives are fourth-order central finite differences on the staggered
/// lattice (after parity completion), and residuals are taken on the interior
/// with an edge trim of 6 cells.
pub fn moyal_product_check(
    o1: &Array2<C64>,
    o2: &Array2<C64>,
    q_min: f64,
    dq: f64,
    k_max: usize,
) -> Result<MoyalReport, WignerError> {
    if !(dq > 0.0) {
        return Err(WignerError::BadStep { step: dq });
    }
    if k_max > 2 {
        return Err(WignerError::UnsupportedOrder { order: k_max });
    }
    let n = o1.nrows();
    if o1.dim() != (n, n) {
        return Err(WignerError::NonSquare { rows: o1.nrows(), cols: o1.ncols() });
    }
    if o2.dim() != (n, n) {
        return Err(WignerError::NonSquare { rows: o2.nrows(), cols: o2.ncols() });
    }
    // Need 2·EDGE_TRIM + a 5-point stencil of interior on the staggered axis.
    let need = EDGE_TRIM + 5;
    if n < need {
        return Err(WignerError::GridTooSmall { need, got: n });
    }
    let f = parity_complete(&complex_symbol(o1, q_min, dq));
    let g = parity_complete(&complex_symbol(o2, q_min, dq));
    let product = o1.dot(o2);
    let lhs = parity_complete(&complex_symbol(&product, q_min, dq));

    let grid = PhaseGrid::conjugate(q_min, dq, n);
    let (hq, hp) = (grid.q_step, grid.p_step);
    let scale = interior_max(&lhs, EDGE_TRIM);

    // Star-product terms through second order in the bidifferential.
    let term0 = &f * &g;
    let (f_q, f_p) = (d1(&f, 0, hq), d1(&f, 1, hp));
    let (g_q, g_p) = (d1(&g, 0, hq), d1(&g, 1, hp));
    let half_i = C64::new(0.0, -0.5); // 1/(2i)
    let term1 = (&(&f_p * &g_q) - &(&f_q * &g_p)).mapv(|v| v * half_i);
    let term2 = if k_max >= 2 {
        let f_pp = d1(&f_p, 1, hp);
        let f_qq = d1(&f_q, 0, hq);
        let f_pq = d1(&f_p, 0, hq);
        let g_pp = d1(&g_p, 1, hp);
        let g_qq = d1(&g_q, 0, hq);
        let g_qp = d1(&g_q, 1, hp);
        // (1/2!) (1/2i)² [f_pp g_qq − 2 f_pq g_qp + f_qq g_pp]
        let mix = &(&f_pp * &g_qq) + &(&f_qq * &g_pp) - &(&f_pq * &g_qp).mapv(|v| 2.0 * v);
        Some(mix.mapv(|v| v * half_i * half_i * 0.5))
    } else {
        None
    };

    let mut residuals = Vec::with_capacity(k_max + 1);
    let mut approx = term0;
    residuals.push(interior_max(&(&lhs - &approx), EDGE_TRIM));
    if k_max >= 1 {
        approx = &approx + &term1;
        residuals.push(interior_max(&(&lhs - &approx), EDGE_TRIM));
    }
    if let Some(t2) = term2 {
        approx = &approx + &t2;
        residuals.push(interior_max(&(&lhs - &approx), EDGE_TRIM));
    }
    Ok(MoyalReport { residuals, scale })
}

// ---------------------------------------------------------------------------
// Classical conditional entropy
// ---------------------------------------------------------------------------

/// Normalized Gaussian smoothing kernel applied separably in q and p with
/// mirror boundary conditions; symmetric weights plus mirroring preserve the
/// plain grid sum (and hence `integral()`) exactly.
#[derive(Debug, Clone)]
pub struct SmoothingKernel {
    weights: Vec<f64>,
}

impl SmoothingKernel {
    /// Gaussian of standard deviation `width` grid cells, `width ≥ 2`.
    pub fn new(width: f64) -> Result<Self, WignerError> {
        if !(width >= 2.0) {
            return Err(WignerError::WidthTooSmall { width });
        }
        let radius = (4.0 * width).ceil() as i64;
        let mut weights: Vec<f64> = (-radius..=radius)
            .map(|j| (-0.5 * (j as f64 / width).powi(2)).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(SmoothingKernel { weights })
    }

    fn convolve_axis(&self, values: &Array2<f64>, axis: usize) -> Array2<f64> {
        let (nq, np) = values.dim();
        let radius = (self.weights.len() / 2) as isize;
        let len = if axis == 0 { nq as isize } else { np as isize };
        let mirror = |idx: isize| -> usize {
            // Half-sample mirror: ..., x1, x0 | x0, x1, ... (period 2·len).
            let m = idx.rem_euclid(2 * len);
            if m < len { m as usize } else { (2 * len - 1 - m) as usize }
        };
        let mut out = Array2::zeros((nq, np));
        for i in 0..nq {
            for j in 0..np {
                let c = if axis == 0 { i as isize } else { j as isize };
                let mut acc = 0.0;
                for (wi, w) in self.weights.iter().enumerate() {
                    let s = c + wi as isize - radius;
                    let idx = mirror(s);
                    acc += w * if axis == 0 { values[[idx, j]] } else { values[[i, idx]] };
                }
                out[[i, j]] = acc;
            }
        }
        out
    }

    /// Smooth a field; the grid is unchanged and the plain sum is preserved.
    pub fn apply(&self, field: &PhaseSpaceFunction) -> PhaseSpaceFunction {
        let once = self.convolve_axis(&field.values, 0);
        PhaseSpaceFunction {
            grid: field.grid.clone(),
            values: self.convolve_axis(&once, 1),
        }
    }
}

/// Classical conditional entropy curve and its diagnostics.
#[derive(Debug, Clone)]
pub struct ClassicalEntropyCurve {
    /// Sample times.
    pub times: Vec<f64>,
    /// S(t) = −∬_Γ ρ̃_W log(ρ̃_W/ρ̃_{*W}); ≤ 0, zero exactly at equilibrium.
    pub s: Vec<f64>,
    /// Finite-difference time derivative of S (central in the interior).
    pub s_dot: Vec<f64>,
    /// Mass of each snapshot's smoothed field outside the positive region Γ.
    pub excluded_mass: Vec<f64>,
    /// Sup-norm of (smoothed ρ_{*W} − ρ_{*W}) relative to sup ρ_{*W}: how far
    /// the smoothing is from fixing the stationary field.
    pub fixed_point_residual: f64,
}

/// Entropy of smoothed Wigner snapshots relative to a stationary reference.
///
/// Both the snapshots and the reference are coarsened by the same
/// norm-preserving kernel; Γ is the region where both smoothed fields are
/// positive, log arguments are clipped at 1e-300, and mass falling outside Γ
/// is reported per snapshot rather than treated as an error.
pub fn classical_conditional_entropy(
    snapshots: &[PhaseSpaceFunction],
    rho_star: &PhaseSpaceFunction,
    kernel: &SmoothingKernel,
    times: &[f64],
) -> Result<ClassicalEntropyCurve, WignerError> {
    if snapshots.len() != times.len() {
        return Err(WignerError::LengthMismatch { snapshots: snapshots.len(), times: times.len() });
    }
    let star = kernel.apply(rho_star);
    if !(star.values.iter().any(|&v| v > 0.0)) {
        return Err(WignerError::NoPositiveSupport);
    }
    let star_scale = rho_star.max_abs().max(1e-300);
    let fixed_point_residual = {
        let mut m = 0.0f64;
        for (a, b) in star.values.iter().zip(rho_star.values.iter()) {
            m = m.max((a - b).abs());
        }
        m / star_scale
    };
    let cell = rho_star.grid.cell();
    let mut s = Vec::with_capacity(times.len());
    let mut excluded = Vec::with_capacity(times.len());
    for snap in snapshots {
        if snap.grid != rho_star.grid {
            return Err(WignerError::GridMismatch);
        }
        let smoothed = kernel.apply(snap);
        let mut acc = 0.0;
        let mut outside = 0.0;
        for (v, w) in smoothed.values.iter().zip(star.values.iter()) {
            if *v > 0.0 && *w > 0.0 {
                let ratio = (v / w).max(1e-300);
                acc += v * ratio.ln();
            } else {
                outside += v.abs();
            }
        }
        s.push(-acc * cell);
        excluded.push(outside * cell);
    }
    let mut s_dot = vec![0.0; times.len()];
    if times.len() >= 2 {
        for i in 0..times.len() {
            let (lo, hi) = if i == 0 {
                (0, 1)
            } else if i == times.len() - 1 {
                (times.len() - 2, times.len() - 1)
            } else {
                (i - 1, i + 1)
            };
            s_dot[i] = (s[hi] - s[lo]) / (times[hi] - times[lo]);
        }
    }
    Ok(ClassicalEntropyCurve {
        times: times.to_vec(),
        s,
        s_dot,
        excluded_mass: excluded,
        fixed_point_residual,
    })
}
