//! The Friedrichs model: discrete levels coupled to a half-line continuum.
//!
//! The Hamiltonian is H = Σₙ ωₙ|n⟩⟨n| + ∫₀^∞ ω|ω⟩⟨ω|dω
//! + λ Σₙ cₙ ∫₀^∞ f(ω)(|n⟩⟨ω| + |ω⟩⟨n|) dω, with a shared base form factor
//! f and per-level scales cₙ. All spectral information is carried by the
//! reduced resolvent function
//!
//!   η(z) = z - ω₀ - λ²c₀² G(z),      G(z) = ∫₀^∞ f²(ω)/(z-ω) dω
//!
//! (a matrix η_nm(z) = (z-ωₙ)δ_nm - λ²cₙcₘG(z) when several levels are
//! present). G has a cut on [0, ∞); continuing through the cut from above
//! gives the second sheet G_II = G - 2πi f², where resonance poles live as
//! zeros of η_II. This module provides the form-factor family, η on every
//! sheet, pole and bound-state location, and deformed integration contours
//! with cached node tables for background integrals.

use crate::quad::{self, GaussRule, QuadError, Tol};
use crate::{c64, C64};
use ndarray::Array2;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("form factor denominator vanishes on the spectrum near ω = {at:.6}")]
    DenominatorOnSpectrum { at: f64 },
    #[error("form factor weight is negative near ω = {at:.6} (value {value:.3e})")]
    NegativeWeight { at: f64, value: f64 },
    #[error("form factor decays like ω^-{power} at infinity; need at least ω^-2")]
    InsufficientDecay { power: i64 },
    #[error("moment of order {order} diverges for decay power {power}")]
    DivergentMoment { order: u32, power: i64 },
    #[error("level energies must be finite and non-negative, got {value}")]
    BadLevel { value: f64 },
    #[error("need one scale per level: {levels} levels, {scales} scales")]
    ScaleMismatch { levels: usize, scales: usize },
    #[error("operation requires a single-level model, this one has {n} levels")]
    NotSingleLevel { n: usize },
    #[error("pole search did not converge: started {start}, stalled at {last} with |η| = {residual:.3e}")]
    PoleSearchFailed { start: C64, last: C64, residual: f64 },
    #[error("located pole {z} is not in the lower half-plane")]
    PoleNotDecaying { z: C64 },
    #[error(
        "contour obstructed: needs depth > {needed:.4} below the axis but the \
         nearest form-factor singularity allows at most {allowed:.4}"
    )]
    ContourObstructed { needed: f64, allowed: f64 },
    #[error("contour node budget exhausted at {nodes} nodes, residual {residual:.3e}")]
    ContourNotConverged { nodes: usize, residual: f64 },
    #[error("quadrature failure: {0}")]
    Quad(#[from] QuadError),
}

// ---------------------------------------------------------------------------
// Real-coefficient polynomials
// ---------------------------------------------------------------------------

/// Dense real polynomial, coefficients ascending in degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Polynomial { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(vec![c])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().expect("non-empty")
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, z: C64) -> C64 {
        let mut acc = C64::ZERO;
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::constant(0.0);
        }
        let d = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        Polynomial::new(d)
    }

    /// All complex roots by Durand–Kerner iteration. Multiple roots come out
    /// as tight clusters of simple approximants; accuracy there is limited to
    /// roughly the square root of machine precision, which is fine for the
    /// geometric uses (singularity clearance) this crate has.
    pub fn roots(&self) -> Vec<C64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let lead = self.leading();
        let monic: Vec<f64> = self.coeffs.iter().map(|c| c / lead).collect();
        let radius = 1.0
            + monic
                .iter()
                .take(n)
                .map(|c| c.abs())
                .fold(0.0_f64, f64::max);
        let seed = c64(0.4, 0.9);
        let mut xs: Vec<C64> = (0..n)
            .map(|k| radius * seed.powu(k as u32 + 1))
            .collect();
        let eval = |z: C64| -> C64 {
            let mut acc = C64::ZERO;
            for &c in monic.iter().rev() {
                acc = acc * z + c;
            }
            acc
        };
        for _ in 0..400 {
            let mut moved = 0.0_f64;
            for i in 0..n {
                let mut denom = c64(1.0, 0.0);
                for j in 0..n {
                    if i != j {
                        denom *= xs[i] - xs[j];
                    }
                }
                if denom.norm() < 1e-300 {
                    continue;
                }
                let step = eval(xs[i]) / denom;
                xs[i] -= step;
                moved = moved.max(step.norm());
            }
            if moved < 1e-14 * radius {
                break;
            }
        }
        xs
    }
}

// ---------------------------------------------------------------------------
// Form factors
// ---------------------------------------------------------------------------

/// Rational form-factor family f²(ω) = ω·p(ω)/q(ω).
///
/// The explicit factor ω enforces the threshold behaviour f² ~ ω at the
/// bottom of the continuum; q must stay positive on [0, ∞) and must grow at
/// least three degrees faster than p so that f² is integrable. Because f²
/// is rational, it continues to a single-valued analytic function off the
/// zeros of q — which is what makes second-sheet formulas like
/// G_II = G - 2πi f² directly computable.
#[derive(Debug, Clone)]
pub struct FormFactor {
    numer: Polynomial,
    denom: Polynomial,
    singularities: Vec<C64>,
}

impl FormFactor {
    pub fn new(numer: Polynomial, denom: Polynomial) -> Result<Self, ModelError> {
        let power = denom.degree() as i64 - numer.degree() as i64 - 1;
        if power < 2 {
            return Err(ModelError::InsufficientDecay { power });
        }
        let singularities = denom.roots();
        for s in &singularities {
            if s.im.abs() < 1e-8 && s.re > -1e-8 {
                return Err(ModelError::DenominatorOnSpectrum { at: s.re });
            }
        }
        // Positivity of the weight on the spectrum, checked on a dense grid
        // reaching well past every finite feature of the rational function.
        let reach = 10.0
            * (1.0
                + singularities
                    .iter()
                    .map(|s| s.norm())
                    .fold(0.0_f64, f64::max));
        for k in 0..=4096 {
            let w = reach * (k as f64 / 4096.0).powi(2);
            let value = w * numer.eval_real(w) / denom.eval_real(w);
            if value < -1e-12 * (1.0 + value.abs()) {
                return Err(ModelError::NegativeWeight { at: w, value });
            }
        }
        Ok(FormFactor {
            numer,
            denom,
            singularities,
        })
    }

    /// f²(ω) = ω/(1+ω²)²: threshold-linear, decay ω⁻³, singularities ±i
    /// (double). The workhorse weight for every default model.
    pub fn canonical() -> Self {
        FormFactor::canonical_scaled(1.0)
    }

    /// f²(ω) = a·ω/(1+ω²)², a > 0.
    pub fn canonical_scaled(a: f64) -> Self {
        assert!(a > 0.0 && a.is_finite(), "scale must be positive");
        FormFactor::new(
            Polynomial::constant(a),
            Polynomial::new(vec![1.0, 0.0, 2.0, 0.0, 1.0]),
        )
        .expect("canonical weight is valid")
    }

    /// f²(z), single-valued for z off the zeros of the denominator.
    pub fn fsq(&self, z: C64) -> C64 {
        z * self.numer.eval(z) / self.denom.eval(z)
    }

    /// d(f²)/dz.
    pub fn fsq_prime(&self, z: C64) -> C64 {
        let p = self.numer.eval(z);
        let dp = self.numer.derivative().eval(z);
        let q = self.denom.eval(z);
        let dq = self.denom.derivative().eval(z);
        (p + z * dp) / q - z * p * dq / (q * q)
    }

    pub fn fsq_real(&self, w: f64) -> f64 {
        w * self.numer.eval_real(w) / self.denom.eval_real(w)
    }

    /// f(ω) ≥ 0 on the spectrum.
    pub fn f_real(&self, w: f64) -> f64 {
        self.fsq_real(w).max(0.0).sqrt()
    }

    /// Zeros of the denominator: the singularities of f² in the complex
    /// plane. Contours must keep clear of these.
    pub fn singularities(&self) -> &[C64] {
        &self.singularities
    }

    /// Algebraic decay power: f²(ω) ~ ω^(-power) as ω → ∞.
    pub fn decay_power(&self) -> i64 {
        self.denom.degree() as i64 - self.numer.degree() as i64 - 1
    }

    /// ∫₀^∞ ωᵏ f²(ω) dω.
    pub fn moment(&self, order: u32) -> Result<f64, ModelError> {
        let power = self.decay_power();
        if (order as i64) + 2 > power {
            return Err(ModelError::DivergentMoment {
                order,
                power,
            });
        }
        let r = quad::integrate_semi_infinite(
            |w| c64(w.powi(order as i32) * self.fsq_real(w), 0.0),
            0.0,
            Tol::default(),
        )?;
        Ok(r.value.re)
    }

    /// ∫₀^∞ f²(ω)/ω dω, finite thanks to the threshold factor. A bound
    /// state below the continuum exists iff λ²c₀² times this exceeds ω₀.
    pub fn inverse_moment(&self) -> Result<f64, ModelError> {
        let r = quad::integrate_semi_infinite(
            |w| {
                c64(
                    self.numer.eval_real(w) / self.denom.eval_real(w),
                    0.0,
                )
            },
            0.0,
            Tol::default(),
        )?;
        Ok(r.value.re)
    }
}

// ---------------------------------------------------------------------------
// Sheets and boundary sides
// ---------------------------------------------------------------------------

/// Which boundary value on the cut [0, ∞) is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Above,
    Below,
}

/// Analytic branch of a cut function.
///
/// `First` is the physical sheet. `Second` is reached by continuing through
/// the cut downward from above (G_II = G - 2πi f²); decaying resonance poles
/// live there. `SecondConj` is the mirror branch reached by continuing
/// upward from below (G + 2πi f²); it hosts the conjugate, growing poles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sheet {
    First,
    Second,
    SecondConj,
}

impl Sheet {
    /// Coefficient of the -2πi f² continuation term on this branch.
    pub(crate) fn shift(self) -> f64 {
        match self {
            Sheet::First => 0.0,
            Sheet::Second => 1.0,
            Sheet::SecondConj => -1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// The model
// ---------------------------------------------------------------------------

/// Discrete levels ωₙ coupled to the continuum with strengths λcₙ through a
/// shared base form factor.
#[derive(Debug, Clone)]
pub struct FriedrichsModel {
    levels: Vec<f64>,
    scales: Vec<f64>,
    lambda: f64,
    form: FormFactor,
}

/// Decaying resonance pole of a single-level model.
#[derive(Debug, Clone, Copy)]
pub struct Resonance {
    /// Pole position z₀ = E_R - iγ/2 on the second sheet.
    pub z: C64,
    /// Full width γ = -2 Im z₀.
    pub gamma: f64,
    /// Residue normalization N₀ = 1/η'_II(z₀).
    pub norm: C64,
}

/// Real eigenvalue below the continuum.
#[derive(Debug, Clone, Copy)]
pub struct BoundState {
    /// Energy e < 0 with η_I(e) = 0.
    pub energy: f64,
    /// Normalization 1/η'_I(e) ∈ (0, 1): the discrete-state weight of the
    /// eigenvector.
    pub norm: f64,
}

/// Resonance pole of a multi-level model together with its normalized null
/// vector: η_II(z)·u = 0 with the bilinear normalization uᵀ η'_II(z) u = 1.
#[derive(Debug, Clone)]
pub struct LevelPole {
    pub z: C64,
    pub gamma: f64,
    pub vector: Vec<C64>,
}

impl FriedrichsModel {
    pub fn single(omega0: f64, lambda: f64, form: FormFactor) -> Result<Self, ModelError> {
        FriedrichsModel::multi(vec![omega0], vec![1.0], lambda, form)
    }

    pub fn multi(
        levels: Vec<f64>,
        scales: Vec<f64>,
        lambda: f64,
        form: FormFactor,
    ) -> Result<Self, ModelError> {
        if levels.is_empty() {
            return Err(ModelError::ScaleMismatch {
                levels: 0,
                scales: scales.len(),
            });
        }
        if levels.len() != scales.len() {
            return Err(ModelError::ScaleMismatch {
                levels: levels.len(),
                scales: scales.len(),
            });
        }
        for &w in &levels {
            if !w.is_finite() || w < 0.0 {
                return Err(ModelError::BadLevel { value: w });
            }
        }
        for &c in &scales {
            if !c.is_finite() || c == 0.0 {
                return Err(ModelError::BadLevel { value: c });
            }
        }
        Ok(FriedrichsModel {
            levels,
            scales,
            lambda,
            form,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn form(&self) -> &FormFactor {
        &self.form
    }

    /// λ²c₀² for the single-level fast path.
    pub fn coupling_sq(&self) -> f64 {
        self.lambda * self.lambda * self.scales[0] * self.scales[0]
    }

    fn require_single(&self) -> Result<(), ModelError> {
        if self.levels.len() == 1 {
            Ok(())
        } else {
            Err(ModelError::NotSingleLevel {
                n: self.levels.len(),
            })
        }
    }

    // -- resolvent building blocks -----------------------------------------

    /// G(z) = ∫₀^∞ f²(ω)/(z-ω) dω for z off the cut [0, ∞).
    pub fn g_cauchy(&self, z: C64) -> Result<C64, ModelError> {
        let form = &self.form;
        let r = quad::integrate_semi_infinite(move |w| form.fsq_real(w) / (z - w), 0.0, G_TOL)?;
        Ok(r.value)
    }

    /// dG/dz = -∫₀^∞ f²(ω)/(z-ω)² dω for z off the cut.
    pub fn g_prime(&self, z: C64) -> Result<C64, ModelError> {
        let form = &self.form;
        let r = quad::integrate_semi_infinite(
            move |w| {
                let d = z - w;
                -form.fsq_real(w) / (d * d)
            },
            0.0,
            G_TOL,
        )?;
        Ok(r.value)
    }

    /// Boundary value G(x ± i0) on the cut: principal value ∓ iπ f²(x).
    pub fn g_boundary(&self, x: f64, side: Side) -> Result<C64, ModelError> {
        assert!(x >= 0.0, "boundary values live on the cut [0, ∞)");
        let form = &self.form;
        let split = (2.0 * x + 10.0).max(16.0);
        let pv = if x == 0.0 {
            quad::integrate_semi_infinite(move |w| c64(-form.fsq_real(w) / w, 0.0), 0.0, G_TOL)?
                .value
        } else {
            let head = quad::principal_value(
                move |w| c64(form.fsq_real(w), 0.0),
                x,
                0.0,
                split,
                G_TOL,
            )?;
            let tail = quad::integrate_semi_infinite(
                move |w| c64(form.fsq_real(w) / (x - w), 0.0),
                split,
                G_TOL,
            )?;
            head.value + tail.value
        };
        let jump = PI * self.form.fsq_real(x);
        Ok(match side {
            Side::Above => pv - c64(0.0, jump),
            Side::Below => pv + c64(0.0, jump),
        })
    }

    /// G on a chosen analytic branch: G_I, G_I - 2πi f², or G_I + 2πi f².
    pub fn g_on_sheet(&self, z: C64, sheet: Sheet) -> Result<C64, ModelError> {
        let base = self.g_cauchy(z)?;
        Ok(base - c64(0.0, 2.0 * PI) * sheet.shift() * self.form.fsq(z))
    }

    // -- η for a single level ----------------------------------------------

    /// First-sheet η(z) = z - ω₀ - λ²c₀² G(z), z off the cut.
    pub fn eta_first(&self, z: C64) -> Result<C64, ModelError> {
        self.require_single()?;
        Ok(z - self.levels[0] - self.coupling_sq() * self.g_cauchy(z)?)
    }

    /// Boundary value η(x ± i0) on the cut.
    pub fn eta_first_boundary(&self, x: f64, side: Side) -> Result<C64, ModelError> {
        self.require_single()?;
        Ok(x - self.levels[0] - self.coupling_sq() * self.g_boundary(x, side)?)
    }

    /// Second-sheet η_II(z) = η_I(z) + 2πi λ²c₀² f²(z): the continuation of
    /// the upper boundary value through the cut. Its zero in the lower
    /// half-plane is the decaying resonance pole.
    pub fn eta_second(&self, z: C64) -> Result<C64, ModelError> {
        Ok(self.eta_first(z)? + c64(0.0, 2.0 * PI) * self.coupling_sq() * self.form.fsq(z))
    }

    /// η on a chosen branch.
    pub fn eta_on_sheet(&self, z: C64, sheet: Sheet) -> Result<C64, ModelError> {
        self.require_single()?;
        Ok(z - self.levels[0] - self.coupling_sq() * self.g_on_sheet(z, sheet)?)
    }

    /// dη_I/dz = 1 - λ²c₀² G'(z).
    pub fn eta_first_prime(&self, z: C64) -> Result<C64, ModelError> {
        self.require_single()?;
        Ok(c64(1.0, 0.0) - self.coupling_sq() * self.g_prime(z)?)
    }

    /// dη_II/dz = η_I'(z) + 2πi λ²c₀² (f²)'(z).
    pub fn eta_second_prime(&self, z: C64) -> Result<C64, ModelError> {
        Ok(self.eta_first_prime(z)?
            + c64(0.0, 2.0 * PI) * self.coupling_sq() * self.form.fsq_prime(z))
    }

    // -- η as a matrix (any number of levels) --------------------------------

    /// η_nm(z) = (z - ωₙ)δ_nm - λ²cₙcₘ G(z) on the requested branch.
    /// Complex symmetric, so left and right null vectors coincide.
    pub fn eta_matrix(&self, z: C64, sheet: Sheet) -> Result<Array2<C64>, ModelError> {
        let g = self.g_on_sheet(z, sheet)?;
        let n = self.levels.len();
        let lam2 = self.lambda * self.lambda;
        Ok(Array2::from_shape_fn((n, n), |(i, j)| {
            let kron = if i == j { z - self.levels[i] } else { C64::ZERO };
            kron - lam2 * self.scales[i] * self.scales[j] * g
        }))
    }

    /// dη/dz on the requested branch.
    pub fn eta_matrix_prime(&self, z: C64, sheet: Sheet) -> Result<Array2<C64>, ModelError> {
        let gp = self.g_prime(z)?
            - c64(0.0, 2.0 * PI) * sheet.shift() * self.form.fsq_prime(z);
        let n = self.levels.len();
        let lam2 = self.lambda * self.lambda;
        Ok(Array2::from_shape_fn((n, n), |(i, j)| {
            let kron = if i == j { c64(1.0, 0.0) } else { C64::ZERO };
            kron - lam2 * self.scales[i] * self.scales[j] * gp
        }))
    }

    // -- golden-rule data ----------------------------------------------------

    /// Weak-coupling width 2π λ²cₙ² f²(ωₙ) of level n.
    pub fn golden_rule_width(&self, level: usize) -> f64 {
        let c = self.scales[level];
        2.0 * PI * self.lambda * self.lambda * c * c * self.form.fsq_real(self.levels[level])
    }

    /// Second-order level shift λ²cₙ² P∫ f²/(ωₙ-ω) dω.
    pub fn level_shift(&self, level: usize) -> Result<f64, ModelError> {
        let c = self.scales[level];
        let pv = self.g_boundary(self.levels[level], Side::Above)?.re;
        Ok(self.lambda * self.lambda * c * c * pv)
    }

    // -- poles ----------------------------------------------------------------

    /// Decaying resonance pole of a single-level model: Newton iteration on
    /// η_II from the golden-rule starting point ω₀ + shift - iγ/2.
    pub fn resonance(&self) -> Result<Resonance, ModelError> {
        self.require_single()?;
        let gamma0 = self.golden_rule_width(0);
        let shift = self.level_shift(0)?;
        let start = c64(self.levels[0] + shift, -0.5 * gamma0.max(1e-6));
        let mut z = start;
        let mut residual = f64::INFINITY;
        for _ in 0..80 {
            let value = self.eta_second(z)?;
            residual = value.norm();
            if residual < 1e-13 * (1.0 + z.norm()) {
                break;
            }
            let deriv = self.eta_second_prime(z)?;
            let step = value / deriv;
            z -= step;
            if step.norm() < 1e-15 * (1.0 + z.norm()) {
                break;
            }
        }
        let value = self.eta_second(z)?;
        residual = residual.min(value.norm());
        if residual > 1e-10 * (1.0 + z.norm()) {
            return Err(ModelError::PoleSearchFailed {
                start,
                last: z,
                residual,
            });
        }
        if z.im >= 0.0 {
            return Err(ModelError::PoleNotDecaying { z });
        }
        let norm = 1.0 / self.eta_second_prime(z)?;
        Ok(Resonance {
            z,
            gamma: -2.0 * z.im,
            norm,
        })
    }

    /// Real eigenvalues below the continuum: zeros of η_I on (-∞, 0),
    /// located by sign scan plus bisection on det η_I (which is real there).
    pub fn bound_states(&self) -> Result<Vec<BoundState>, ModelError> {
        let lam2 = self.lambda * self.lambda;
        let cmax = self.scales.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        let depth = 10.0
            * (1.0
                + self.levels.iter().fold(0.0_f64, |m, &w| m.max(w))
                + lam2 * cmax * cmax * self.form.moment(0)?);
        let det_at = |x: f64| -> Result<f64, ModelError> {
            let m = self.eta_matrix(c64(x, 0.0), Sheet::First)?;
            Ok(det(&m).re)
        };
        let n_grid = 600;
        let mut out = Vec::new();
        let mut prev_x = -depth;
        let mut prev_v = det_at(prev_x)?;
        for k in 1..=n_grid {
            // Geometric spacing clusters points near the threshold at 0.
            let x = -depth * ((n_grid - k) as f64 / n_grid as f64).powi(3) - 1e-9;
            let v = det_at(x)?;
            if prev_v == 0.0 {
                prev_x = x;
                prev_v = v;
                continue;
            }
            if v == 0.0 || v.signum() != prev_v.signum() {
                let (mut a, mut b) = (prev_x, x);
                let (mut fa, _) = (prev_v, v);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    let fm = det_at(mid)?;
                    if fm == 0.0 || (b - a) < 1e-15 * (1.0 + mid.abs()) {
                        a = mid;
                        b = mid;
                        break;
                    }
                    if fm.signum() == fa.signum() {
                        a = mid;
                        fa = fm;
                    } else {
                        b = mid;
                    }
                }
                let e = 0.5 * (a + b);
                let norm = if self.levels.len() == 1 {
                    1.0 / self.eta_first_prime(c64(e, 0.0))?.re
                } else {
                    // Weight of the discrete sector: uᵀη' u for the null
                    // vector of the η matrix at the eigenvalue.
                    let eta = self.eta_matrix(c64(e, 0.0), Sheet::First)?;
                    let u = null_vector(&eta);
                    let etap = self.eta_matrix_prime(c64(e, 0.0), Sheet::First)?;
                    let alpha = bilinear(&u, &etap, &u);
                    1.0 / alpha.re
                };
                out.push(BoundState { energy: e, norm });
            }
            prev_x = x;
            prev_v = v;
        }
        Ok(out)
    }

    /// All decaying poles of a multi-level model: one Newton run on
    /// det η_II(z) per level, seeded at that level's golden-rule estimate,
    /// with the bilinear-normalized null vector attached.
    pub fn level_poles(&self) -> Result<Vec<LevelPole>, ModelError> {
        let mut poles: Vec<LevelPole> = Vec::new();
        for n in 0..self.levels.len() {
            let gamma0 = self.golden_rule_width(n);
            let shift = self.level_shift(n)?;
            let start = c64(self.levels[n] + shift, -0.5 * gamma0.max(1e-6));
            let det_second = |z: C64| -> Result<C64, ModelError> {
                Ok(det(&self.eta_matrix(z, Sheet::Second)?))
            };
            let mut z = start;
            let mut residual = f64::INFINITY;
            for _ in 0..80 {
                let value = det_second(z)?;
                residual = value.norm();
                if residual < 1e-13 * (1.0 + z.norm().powi(self.levels.len() as i32)) {
                    break;
                }
                let h = 1e-7 * (1.0 + z.norm());
                let dv = (det_second(z + c64(h, 0.0))? - det_second(z - c64(h, 0.0))?)
                    / c64(2.0 * h, 0.0);
                let step = value / dv;
                z -= step;
                if step.norm() < 1e-15 * (1.0 + z.norm()) {
                    break;
                }
            }
            if residual > 1e-9 * (1.0 + z.norm()) {
                return Err(ModelError::PoleSearchFailed {
                    start,
                    last: z,
                    residual,
                });
            }
            if z.im >= 0.0 {
                return Err(ModelError::PoleNotDecaying { z });
            }
            if poles.iter().any(|p| (p.z - z).norm() < 1e-8) {
                continue; // two seeds converged to the same pole
            }
            let eta = self.eta_matrix(z, Sheet::Second)?;
            let mut u = null_vector(&eta);
            let etap = self.eta_matrix_prime(z, Sheet::Second)?;
            let alpha = bilinear(&u, &etap, &u);
            let scale = 1.0 / alpha.sqrt();
            for c in &mut u {
                *c *= scale;
            }
            poles.push(LevelPole {
                z,
                gamma: -2.0 * z.im,
                vector: u,
            });
        }
        Ok(poles)
    }

    // -- pair kernels -----------------------------------------------------------

    /// Q(z₁, z₂) = ∫₀^∞ f²(ω)/((z₁-ω)(z₂-ω)) dω by direct quadrature, with
    /// both points off the cut. On the first sheet this equals
    /// -[G(z₂) - G(z₁)]/(z₂ - z₁), but it is computed independently so it
    /// can serve as a cross-check of that identity.
    pub fn q_integral(&self, z1: C64, z2: C64) -> Result<C64, ModelError> {
        let form = &self.form;
        let r = quad::integrate_semi_infinite(
            move |w| form.fsq_real(w) / ((z1 - w) * (z2 - w)),
            0.0,
            G_TOL,
        )?;
        Ok(r.value)
    }

    /// The divided-difference kernel on arbitrary branches:
    ///
    ///   Q_{S₁S₂}(z₁, z₂) = -[G_{S₂}(z₂) - G_{S₁}(z₁)]/(z₂ - z₁)
    ///                    = Q(z₁, z₂) + 2πi·[s₂ f²(z₂) - s₁ f²(z₁)]/(z₂ - z₁)
    ///
    /// with sᵢ the branch shifts. This is the object that makes every
    /// cross-pole pairing computable: 1 + λ²c² Q_{S₁S₂} equals
    /// [η_{S₂}(z₂) - η_{S₁}(z₁)]/(z₂ - z₁), which vanishes whenever both
    /// points are poles on their own branches.
    pub fn q_cross(
        &self,
        z1: C64,
        sheet1: Sheet,
        z2: C64,
        sheet2: Sheet,
    ) -> Result<C64, ModelError> {
        let base = self.q_integral(z1, z2)?;
        let d = z2 - z1;
        assert!(
            d.norm() > 1e-12 * (1.0 + z1.norm()),
            "cross kernel needs distinct points; use g_prime for the limit"
        );
        let corr = c64(0.0, 2.0 * PI)
            * (sheet2.shift() * self.form.fsq(z2) - sheet1.shift() * self.form.fsq(z1))
            / d;
        Ok(base + corr)
    }
}

/// Default tolerance for resolvent integrals.
const G_TOL: Tol = Tol {
    abs: 1e-13,
    rel: 1e-11,
};

// ---------------------------------------------------------------------------
// Small dense complex linear algebra (n is the number of levels, tiny)
// ---------------------------------------------------------------------------

/// Determinant by Gaussian elimination with partial pivoting.
pub(crate) fn det(m: &Array2<C64>) -> C64 {
    let n = m.nrows();
    let mut a = m.clone();
    let mut result = c64(1.0, 0.0);
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[(row, col)].norm() > a[(pivot, col)].norm() {
                pivot = row;
            }
        }
        if a[(pivot, col)].norm() == 0.0 {
            return C64::ZERO;
        }
        if pivot != col {
            for k in 0..n {
                let tmp = a[(col, k)];
                a[(col, k)] = a[(pivot, k)];
                a[(pivot, k)] = tmp;
            }
            result = -result;
        }
        result *= a[(col, col)];
        for row in col + 1..n {
            let factor = a[(row, col)] / a[(col, col)];
            for k in col..n {
                let sub = factor * a[(col, k)];
                a[(row, k)] -= sub;
            }
        }
    }
    result
}

/// Null vector of a numerically rank-deficient square matrix: full-pivot
/// elimination, set the free variable to 1, back-substitute. The result is
/// not normalized.
pub(crate) fn null_vector(m: &Array2<C64>) -> Vec<C64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut col_perm: Vec<usize> = (0..n).collect();
    let rank = n - 1;
    for step in 0..rank {
        // Full pivot over the remaining block.
        let (mut pr, mut pc, mut best) = (step, step, 0.0);
        for r in step..n {
            for c in step..n {
                let mag = a[(r, c)].norm();
                if mag > best {
                    best = mag;
                    pr = r;
                    pc = c;
                }
            }
        }
        if pr != step {
            for k in 0..n {
                let tmp = a[(step, k)];
                a[(step, k)] = a[(pr, k)];
                a[(pr, k)] = tmp;
            }
        }
        if pc != step {
            for k in 0..n {
                let tmp = a[(k, step)];
                a[(k, step)] = a[(k, pc)];
                a[(k, pc)] = tmp;
            }
            col_perm.swap(step, pc);
        }
        for r in step + 1..n {
            let factor = a[(r, step)] / a[(step, step)];
            for k in step..n {
                let sub = factor * a[(step, k)];
                a[(r, k)] -= sub;
            }
        }
    }
    // Free variable = 1 in the permuted frame; back-substitute the top block.
    let mut y = vec![C64::ZERO; n];
    y[n - 1] = c64(1.0, 0.0);
    for row in (0..rank).rev() {
        let mut rhs = -a[(row, n - 1)];
        for k in row + 1..rank {
            rhs -= a[(row, k)] * y[k];
        }
        y[row] = rhs / a[(row, row)];
    }
    let mut x = vec![C64::ZERO; n];
    for (permuted, &original) in col_perm.iter().enumerate() {
        x[original] = y[permuted];
    }
    x
}

/// Distance from a point to a piecewise-linear path.
pub(crate) fn distance_to_polyline(p: C64, vertices: &[C64]) -> f64 {
    vertices
        .windows(2)
        .map(|seg| {
            let d = seg[1] - seg[0];
            let len_sq = d.norm_sqr();
            if len_sq == 0.0 {
                return (p - seg[0]).norm();
            }
            // Projection parameter of p onto the segment, clamped.
            let t = (((p - seg[0]) * d.conj()).re / len_sq).clamp(0.0, 1.0);
            (p - (seg[0] + t * d)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// uᵀ M v (bilinear, no conjugation).
pub(crate) fn bilinear(u: &[C64], m: &Array2<C64>, v: &[C64]) -> C64 {
    let mut acc = C64::ZERO;
    for i in 0..u.len() {
        for j in 0..v.len() {
            acc += u[i] * m[(i, j)] * v[j];
        }
    }
    acc
}

/// Solve M x = b by Gaussian elimination with partial pivoting. Returns
/// `None` when a pivot collapses (matrix numerically singular). Sized for
/// level-space systems, i.e. tiny n.
pub(crate) fn linear_solve(m: &Array2<C64>, b: &[C64]) -> Option<Vec<C64>> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut x: Vec<C64> = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[(row, col)].norm() > a[(pivot, col)].norm() {
                pivot = row;
            }
        }
        if a[(pivot, col)].norm() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                let tmp = a[(col, k)];
                a[(col, k)] = a[(pivot, k)];
                a[(pivot, k)] = tmp;
            }
            x.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[(row, col)] / a[(col, col)];
            for k in col..n {
                let sub = factor * a[(col, k)];
                a[(row, k)] -= sub;
            }
            let sub = factor * x[col];
            x[row] -= sub;
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in col + 1..n {
            acc -= a[(col, k)] * x[k];
        }
        x[col] = acc / a[(col, col)];
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// Contours and cached background tables
// ---------------------------------------------------------------------------

/// Piecewise-linear integration path in the lower half-plane, running from
/// the spectral threshold at 0 out to Ω on the real axis.
#[derive(Debug, Clone)]
pub struct Contour {
    vertices: Vec<C64>,
}

impl Contour {
    /// The undeformed path [0, Ω] on the axis (useful for diagnostics only;
    /// background integrands are singular on it).
    pub fn flat(omega_max: f64) -> Self {
        Contour {
            vertices: vec![C64::ZERO, c64(omega_max, 0.0)],
        }
    }

    /// A trapezoidal dip below the given poles:
    /// (0,0) → (x₁,-d) → (x₂,-d) → (Ω,0). Every pole must sit strictly
    /// between the axis and the path, and the path must stay clear of the
    /// form-factor singularities below the axis. Within those bounds the
    /// dip is made as deep as possible (up to 10× the pole depth) so that
    /// quadrature nodes are never close to the resonance spike. Errors out
    /// if the two requirements conflict.
    pub fn deformed_below(
        form: &FormFactor,
        poles: &[C64],
        omega_max: f64,
    ) -> Result<Self, ModelError> {
        Contour::deformed_below_avoiding(form, poles, &[], omega_max)
    }

    /// Like `deformed_below`, but the path must additionally stay strictly
    /// above every point in `obstacles` (amplitude singularities other than
    /// the poles being enclosed; upper-half-plane obstacles are ignored).
    pub fn deformed_below_avoiding(
        form: &FormFactor,
        poles: &[C64],
        obstacles: &[C64],
        omega_max: f64,
    ) -> Result<Self, ModelError> {
        assert!(!poles.is_empty(), "need at least one pole to dip under");
        let max_im = poles.iter().map(|z| -z.im).fold(0.0_f64, f64::max);
        let min_re = poles.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let max_re = poles.iter().map(|z| z.re).fold(0.0_f64, f64::max);
        let allowed = form
            .singularities()
            .iter()
            .chain(obstacles.iter())
            .filter(|s| s.im < 0.0)
            .map(|s| -s.im * 0.8)
            .fold(f64::INFINITY, f64::min);
        let needed = 1.2 * max_im;
        if needed >= allowed {
            return Err(ModelError::ContourObstructed { needed, allowed });
        }
        let depth = (10.0 * max_im).max(0.1).clamp(needed, allowed);
        let x1 = (0.5 * min_re).max(0.05);
        let x2 = (1.5 * max_re + 1.0).min(0.8 * omega_max);
        assert!(x1 < x2 && x2 < omega_max, "pole cluster too close to Ω");
        Ok(Contour {
            vertices: vec![
                C64::ZERO,
                c64(x1, -depth),
                c64(x2, -depth),
                c64(omega_max, 0.0),
            ],
        })
    }

    pub fn vertices(&self) -> &[C64] {
        &self.vertices
    }

    pub fn length(&self) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }
}

/// Precomputed quadrature data along a contour: nodes, complex measures, and
/// the model functions every background integral needs (η on both sheets and
/// f²). Build once, reuse for all times and all amplitudes.
#[derive(Debug, Clone)]
pub struct BackgroundTable {
    nodes: Vec<C64>,
    dz: Vec<C64>,
    eta1: Vec<C64>,
    eta2: Vec<C64>,
    fsq: Vec<C64>,
    coupling_sq: f64,
}

impl BackgroundTable {
    /// Build with a node budget adapted to two things: the largest
    /// evolution time the table will serve (e^{-izt} oscillates like
    /// e^{-i Re z·t} along the path, so density scales with t_max) and the
    /// separation between the path and the given poles (panels must be
    /// shorter than that separation for Gauss panels to resolve the spike).
    pub fn build(
        model: &FriedrichsModel,
        contour: &Contour,
        poles: &[C64],
        t_max: f64,
    ) -> Result<Self, ModelError> {
        let nodes = Self::suggested_nodes(contour, poles, t_max);
        Self::build_with_nodes(model, contour, nodes)
    }

    pub fn suggested_nodes(contour: &Contour, poles: &[C64], t_max: f64) -> usize {
        let len = contour.length();
        let oscillation = 0.75 * len * t_max.max(1.0);
        let sep = poles
            .iter()
            .map(|&p| distance_to_polyline(p, &contour.vertices))
            .fold(f64::INFINITY, f64::min)
            .max(1e-6);
        let spike = if sep.is_finite() { 24.0 * len / sep } else { 0.0 };
        (oscillation.max(spike).ceil() as usize).clamp(257, 400_000)
    }

    pub fn build_with_nodes(
        model: &FriedrichsModel,
        contour: &Contour,
        total_nodes: usize,
    ) -> Result<Self, ModelError> {
        model.require_single()?;
        let length = contour.length();
        let mut nodes = Vec::with_capacity(total_nodes + 64);
        let mut dz = Vec::with_capacity(total_nodes + 64);
        const PANEL: usize = 24;
        let rule = GaussRule::legendre(PANEL);
        for seg in contour.vertices.windows(2) {
            let delta = seg[1] - seg[0];
            let seg_nodes =
                ((total_nodes as f64 * delta.norm() / length).ceil() as usize).max(2 * PANEL);
            let panels = seg_nodes.div_ceil(PANEL);
            for p in 0..panels {
                let lo = p as f64 / panels as f64;
                let hi = (p + 1) as f64 / panels as f64;
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let s = mid + half * t;
                    nodes.push(seg[0] + s * delta);
                    dz.push(w * half * delta);
                }
            }
        }
        let mut eta1 = Vec::with_capacity(nodes.len());
        let mut eta2 = Vec::with_capacity(nodes.len());
        let mut fsq = Vec::with_capacity(nodes.len());
        for &z in &nodes {
            let e1 = model.eta_first(z)?;
            let f2 = model.form.fsq(z);
            eta1.push(e1);
            eta2.push(e1 + c64(0.0, 2.0 * PI) * model.coupling_sq() * f2);
            fsq.push(f2);
        }
        Ok(BackgroundTable {
            nodes,
            dz,
            eta1,
            eta2,
            fsq,
            coupling_sq: model.coupling_sq(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[C64] {
        &self.nodes
    }

    pub fn measures(&self) -> &[C64] {
        &self.dz
    }

    pub fn eta_first(&self) -> &[C64] {
        &self.eta1
    }

    pub fn eta_second(&self) -> &[C64] {
        &self.eta2
    }

    pub fn fsq(&self) -> &[C64] {
        &self.fsq
    }

    pub fn coupling_sq(&self) -> f64 {
        self.coupling_sq
    }

    /// ∫_Γ g(j, z) dz with the caller supplying integrand values per node.
    pub fn quadrature<F: Fn(usize, C64) -> C64>(&self, g: F) -> C64 {
        self.nodes
            .iter()
            .enumerate()
            .map(|(j, &z)| self.dz[j] * g(j, z))
            .sum()
    }

    /// Background part of the survival amplitude of the discrete state:
    /// ∫_Γ λ²c₀² f²(z) e^{-izt} / (η_I(z) η_II(z)) dz.
    pub fn survival_background(&self, t: f64) -> C64 {
        let mut acc = C64::ZERO;
        for j in 0..self.nodes.len() {
            let phase = (-c64(0.0, 1.0) * self.nodes[j] * t).exp();
            acc += self.dz[j] * self.coupling_sq * self.fsq[j] * phase
                / (self.eta1[j] * self.eta2[j]);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn canonical_model(lambda: f64) -> FriedrichsModel {
        FriedrichsModel::single(1.0, lambda, FormFactor::canonical()).unwrap()
    }

    #[test]
    fn polynomial_roots_simple() {
        // (x-1)(x-2)(x-3) = x³ - 6x² + 11x - 6
        let p = Polynomial::new(vec![-6.0, 11.0, -6.0, 1.0]);
        let mut roots: Vec<f64> = p.roots().iter().map(|r| r.re).collect();
        roots.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(roots[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(roots[1], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(roots[2], 3.0, epsilon = 1e-9);
        assert!(p.roots().iter().all(|r| r.im.abs() < 1e-9));
    }

    #[test]
    fn polynomial_roots_double_pair() {
        // (1+x²)² has ±i, each twice; accept cluster accuracy.
        let q = Polynomial::new(vec![1.0, 0.0, 2.0, 0.0, 1.0]);
        let roots = q.roots();
        assert_eq!(roots.len(), 4);
        for r in roots {
            assert!((r - c64(0.0, 1.0)).norm() < 1e-5 || (r - c64(0.0, -1.0)).norm() < 1e-5);
        }
    }

    #[test]
    fn canonical_weight_values() {
        let ff = FormFactor::canonical();
        assert_relative_eq!(ff.fsq_real(1.0), 0.25, epsilon = 1e-14);
        assert_relative_eq!(ff.f_real(1.0), 0.5, epsilon = 1e-14);
        assert_eq!(ff.decay_power(), 3);
        // Singularities ±i as a double pair.
        assert!(ff
            .singularities()
            .iter()
            .all(|s| (s.re.abs() < 1e-5) && ((s.im.abs() - 1.0).abs() < 1e-5)));
    }

    #[test]
    fn canonical_moments() {
        let ff = FormFactor::canonical();
        // ∫ ω/(1+ω²)² = 1/2, ∫ ω²/(1+ω²)² = π/4, ∫ (1/ω)·ω/(1+ω²)² = π/4.
        assert_relative_eq!(ff.moment(0).unwrap(), 0.5, max_relative = 1e-10);
        assert_relative_eq!(
            ff.moment(1).unwrap(),
            std::f64::consts::FRAC_PI_4,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            ff.inverse_moment().unwrap(),
            std::f64::consts::FRAC_PI_4,
            max_relative = 1e-10
        );
        assert!(matches!(
            ff.moment(2),
            Err(ModelError::DivergentMoment { .. })
        ));
    }

    #[test]
    fn invalid_weights_rejected() {
        // Denominator root on the spectrum: q = (ω-2)²(1+ω²).
        let res = FormFactor::new(
            Polynomial::constant(1.0),
            Polynomial::new(vec![4.0, -4.0, 5.0, -4.0, 1.0]),
        );
        assert!(matches!(
            res,
            Err(ModelError::DenominatorOnSpectrum { .. })
        ));
        // Too slow decay: p of degree 2 against q of degree 4.
        let res = FormFactor::new(
            Polynomial::new(vec![1.0, 0.0, 1.0]),
            Polynomial::new(vec![1.0, 0.0, 2.0, 0.0, 1.0]),
        );
        assert!(matches!(res, Err(ModelError::InsufficientDecay { .. })));
        // Sign change on the spectrum: p = 1 - ω.
        let res = FormFactor::new(
            Polynomial::new(vec![1.0, -1.0]),
            Polynomial::new(vec![1.0, 0.0, 3.0, 0.0, 3.0, 0.0, 1.0]),
        );
        assert!(matches!(res, Err(ModelError::NegativeWeight { .. })));
    }

    #[test]
    fn g_matches_brute_force_off_axis() {
        let m = canonical_model(0.1);
        let z = c64(0.7, 0.4);
        let g = m.g_cauchy(z).unwrap();
        let n = 400_000;
        let big = 6000.0;
        let h = big / n as f64;
        let mut brute = C64::ZERO;
        for k in 0..n {
            let w = (k as f64 + 0.5) * h;
            brute += h * m.form().fsq_real(w) / (z - w);
        }
        // The midpoint rule itself carries an O(h²) error ≈ 1.2e-5 here;
        // the adaptive result is far more accurate than the reference.
        assert!((g - brute).norm() < 5e-5, "adaptive {g} vs brute {brute}");
    }

    #[test]
    fn g_at_origin_is_minus_inverse_moment() {
        // G(z) → -∫ f²/ω dω = -π/4 as z → 0 from the negative axis.
        let m = canonical_model(0.1);
        let g = m.g_cauchy(c64(-1e-9, 0.0)).unwrap();
        assert_abs_diff_eq!(g.re, -std::f64::consts::FRAC_PI_4, epsilon = 1e-6);
        assert_abs_diff_eq!(g.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn schwarz_symmetry() {
        let m = canonical_model(0.2);
        let z = c64(1.3, 0.8);
        let a = m.eta_first(z).unwrap();
        let b = m.eta_first(z.conj()).unwrap();
        assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-10);
        assert_abs_diff_eq!(a.im, -b.im, epsilon = 1e-10);
    }

    #[test]
    fn boundary_values_match_plemelj() {
        let m = canonical_model(0.1);
        let x = 1.0;
        let above = m.g_boundary(x, Side::Above).unwrap();
        let below = m.g_boundary(x, Side::Below).unwrap();
        // Jump across the cut is -2πi f².
        let jump = above - below;
        assert_abs_diff_eq!(jump.re, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(jump.im, -2.0 * PI * 0.25, epsilon = 1e-10);
        // Boundary value agrees with the limit from the complex plane.
        let eps = 1e-6;
        let interior = m.g_cauchy(c64(x, eps)).unwrap();
        assert!((interior - above).norm() < 1e-4);
    }

    #[test]
    fn second_sheet_glues_to_first_across_cut() {
        // η_II just below the axis continues η_I from just above: the cut
        // is invisible to the pair (η_I above, η_II below).
        let m = canonical_model(0.1);
        let x = 1.1;
        let eps = 1e-7;
        let above = m.eta_first(c64(x, eps)).unwrap();
        let below = m.eta_second(c64(x, -eps)).unwrap();
        assert!((above - below).norm() < 1e-5);
    }

    #[test]
    fn golden_rule_width_canonical() {
        let m = canonical_model(0.1);
        // 2π λ² f²(1) = 2π·0.01·0.25
        assert_relative_eq!(m.golden_rule_width(0), 0.015707963267948967, epsilon = 1e-12);
    }

    #[test]
    fn resonance_pole_weak_coupling() {
        let m = canonical_model(0.1);
        let r = m.resonance().unwrap();
        // Pole residual is tiny.
        assert!(m.eta_second(r.z).unwrap().norm() < 1e-12);
        // Decaying, close to the golden-rule prediction at λ = 0.1.
        assert!(r.z.im < 0.0);
        assert_relative_eq!(r.gamma, m.golden_rule_width(0), max_relative = 0.05);
        let shift = m.level_shift(0).unwrap();
        assert_abs_diff_eq!(r.z.re, 1.0 + shift, epsilon = 2e-3);
        // Norm close to 1 in weak coupling.
        assert!((r.norm - c64(1.0, 0.0)).norm() < 0.05);
    }

    #[test]
    fn conjugate_pole_on_mirror_branch() {
        // η on the mirror branch vanishes at the conjugate point.
        let m = canonical_model(0.1);
        let r = m.resonance().unwrap();
        let mirror = m.eta_on_sheet(r.z.conj(), Sheet::SecondConj).unwrap();
        assert!(mirror.norm() < 1e-10);
    }

    #[test]
    fn bound_state_threshold() {
        // Threshold coupling: λ² ∫f²/ω = ω₀ ⇒ λ_c = √(ω₀/(π/4)) ≈ 1.1284.
        let below = canonical_model(1.0).bound_states().unwrap();
        assert!(below.is_empty());
        let above = canonical_model(1.2).bound_states().unwrap();
        assert_eq!(above.len(), 1);
        let b = above[0];
        assert!(b.energy < 0.0);
        assert!(
            canonical_model(1.2)
                .eta_first(c64(b.energy, 0.0))
                .unwrap()
                .norm()
                < 1e-9
        );
        assert!(b.norm > 0.0 && b.norm < 1.0);
    }

    #[test]
    fn q_kernel_matches_divided_difference() {
        // Direct quadrature of the product kernel against the independent
        // divided-difference route -[G(z₂)-G(z₁)]/(z₂-z₁).
        let m = canonical_model(0.3);
        let z1 = c64(0.4, 0.9);
        let z2 = c64(1.7, -1.4); // still first sheet as long as we use g_cauchy
        let q = m.q_integral(z1, z2).unwrap();
        let g1 = m.g_cauchy(z1).unwrap();
        let g2 = m.g_cauchy(z2).unwrap();
        let dd = -(g2 - g1) / (z2 - z1);
        assert!((q - dd).norm() < 1e-9, "q {q} vs divided difference {dd}");
    }

    #[test]
    fn cross_kernel_reproduces_eta_difference() {
        // 1 + λ² Q_{S₁S₂}(z₁,z₂) = [η_{S₂}(z₂) - η_{S₁}(z₁)]/(z₂-z₁)
        // across sheet combinations.
        let m = canonical_model(0.25);
        let z1 = c64(0.8, 0.5);
        let z2 = c64(1.4, -0.3);
        for (s1, s2) in [
            (Sheet::First, Sheet::First),
            (Sheet::First, Sheet::Second),
            (Sheet::Second, Sheet::Second),
            (Sheet::SecondConj, Sheet::Second),
        ] {
            let lhs = c64(1.0, 0.0) + m.coupling_sq() * m.q_cross(z1, s1, z2, s2).unwrap();
            let e1 = m.eta_on_sheet(z1, s1).unwrap();
            let e2 = m.eta_on_sheet(z2, s2).unwrap();
            let rhs = (e2 - e1) / (z2 - z1);
            assert!(
                (lhs - rhs).norm() < 1e-8,
                "sheet pair {s1:?},{s2:?}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn two_level_poles_near_golden_rule() {
        let m = FriedrichsModel::multi(
            vec![1.0, 2.0],
            vec![1.0, 1.0],
            0.1,
            FormFactor::canonical(),
        )
        .unwrap();
        let poles = m.level_poles().unwrap();
        assert_eq!(poles.len(), 2);
        for (n, p) in poles.iter().enumerate() {
            assert!(p.z.im < 0.0);
            assert_relative_eq!(p.gamma, m.golden_rule_width(n), max_relative = 0.10);
            // Null vector property and normalization.
            let eta = m.eta_matrix(p.z, Sheet::Second).unwrap();
            let image: Vec<C64> = (0..2)
                .map(|i| (0..2).map(|j| eta[(i, j)] * p.vector[j]).sum())
                .collect();
            assert!(image.iter().all(|v| v.norm() < 1e-9));
            let etap = m.eta_matrix_prime(p.z, Sheet::Second).unwrap();
            let alpha = bilinear(&p.vector, &etap, &p.vector);
            assert!((alpha - c64(1.0, 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn null_vector_and_det_helpers() {
        // Singular 3×3 with known kernel (1, 1, 1).
        let m = Array2::from_shape_vec(
            (3, 3),
            vec![
                c64(1.0, 0.0),
                c64(2.0, 1.0),
                c64(-3.0, -1.0),
                c64(0.0, 2.0),
                c64(1.0, 0.0),
                c64(-1.0, -2.0),
                c64(2.0, -1.0),
                c64(0.0, 1.0),
                c64(-2.0, 0.0),
            ],
        )
        .unwrap();
        assert!(det(&m).norm() < 1e-12);
        let u = null_vector(&m);
        let ratio0 = u[0] / u[2];
        let ratio1 = u[1] / u[2];
        assert!((ratio0 - c64(1.0, 0.0)).norm() < 1e-10);
        assert!((ratio1 - c64(1.0, 0.0)).norm() < 1e-10);
        let regular =
            Array2::from_shape_fn((2, 2), |(i, j)| c64((2 * i + j) as f64 + 1.0, j as f64));
        // det [[1, 2+i], [3, 4+i]] = (4+i) - 3(2+i) = -2 - 2i
        assert!((det(&regular) - c64(-2.0, -2.0)).norm() < 1e-12);
    }

    #[test]
    fn contour_avoids_poles_and_singularities() {
        let m = canonical_model(0.1);
        let r = m.resonance().unwrap();
        let contour = Contour::deformed_below(m.form(), &[r.z], 20.0).unwrap();
        let depth = contour
            .vertices()
            .iter()
            .map(|v| -v.im)
            .fold(0.0_f64, f64::max);
        assert!(depth > -r.z.im, "pole must sit above the path");
        assert!(depth < 0.5, "path must clear the singularity at -i");
        // Obstruction: a pole too deep for the canonical weight, whose
        // singularities at ±i cap the usable depth at 0.8.
        let err = Contour::deformed_below(m.form(), &[c64(1.0, -0.75)], 20.0);
        assert!(matches!(err, Err(ModelError::ContourObstructed { .. })));
    }

    #[test]
    fn survival_reconstruction_at_t_zero() {
        // Pole residue + background integral reproduce the t = 0 amplitude:
        // N₀ + ∫_Γ λ²f²/(η_I η_II) dz = 1 exactly.
        let m = canonical_model(0.1);
        let r = m.resonance().unwrap();
        let contour = Contour::deformed_below(m.form(), &[r.z], 20.0).unwrap();
        let table = BackgroundTable::build(&m, &contour, &[r.z], 10.0).unwrap();
        let total = r.norm + table.survival_background(0.0);
        // Residual budget: quadrature plus the discarded axis tail beyond
        // Ω = 20, which is ≈ 2e-8 for the canonical weight.
        assert!(
            (total - c64(1.0, 0.0)).norm() < 2e-7,
            "reconstruction gave {total}"
        );
    }

    #[test]
    fn survival_background_decays_with_time() {
        let m = canonical_model(0.1);
        let r = m.resonance().unwrap();
        let contour = Contour::deformed_below(m.form(), &[r.z], 20.0).unwrap();
        let table = BackgroundTable::build(&m, &contour, &[r.z], 10.0).unwrap();
        let b0 = table.survival_background(0.0).norm();
        let b10 = table.survival_background(10.0).norm();
        assert!(b10 < b0);
    }
}
