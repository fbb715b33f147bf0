//! Thermalization of discrete levels immersed in an equilibrium continuum.
//!
//! The degrees of freedom split into the level block and the bath.  An initial
//! state carries an arbitrary Hermitian level matrix ρ_{nm} on top of a thermal
//! continuum Z e^{−βE}, the whole evolving under the coupled Hamiltonian.  The
//! reduced level state,
//!
//!   ρ_O(t)[n,m] = Σ_{ab} ρ_{ab} A_{na}(t) A*_{mb}(t) + Σ_k p_k A_{nk}(t) A*_{mk}(t),
//!
//! with A(t) = ⟨level|e^{−iHt}|·⟩ taken from the exact eigenvectors of the
//! discretized Hamiltonian, relaxes for weak coupling to Gibbs populations
//! ∝ e^{−βωₙ}: the initial level data decays at the resonance widths while the
//! bath pumps each level through its concentrated spectral window.  The bath is
//! treated as always in equilibrium — its off-diagonal components are dropped
//! and nothing is ever written back to it.
//!
//! The weak-coupling mechanism itself is quantified by [`weak_coupling_overlap_check`]:
//! the spectral measure |⟨n|v_μ⟩|² of a level concentrates around ωₙ with a
//! second moment shrinking ∝ λ² (golden rule), while cross-level overlap mass
//! and the mass outside any fixed window around ωₙ vanish.

use crate::oracle::{DiscretizedHamiltonian, OracleError};
use crate::{c64, C64};
use ndarray::Array2;
use thiserror::Error;

/// Errors from thermal-state construction and reduction.
#[derive(Debug, Error)]
pub enum ThermalError {
    /// Inverse temperature must be positive.
    #[error("inverse temperature must be positive, got {beta}")]
    BadBeta { beta: f64 },
    /// Level-block matrix is not square.
    #[error("level block is {rows}x{cols}, expected square")]
    NonSquare { rows: usize, cols: usize },
    /// Level-block matrix violates Hermitian symmetry.
    #[error("level block deviates from Hermitian symmetry by {residual:.3e}")]
    NonHermitian { residual: f64 },
    /// Level-block trace must leave non-negative bath weight.
    #[error("level-block trace {trace} must lie in [0, 1]")]
    BadTrace { trace: f64 },
    /// Bath and propagator were built on different discretizations.
    #[error("bath grid does not match the diagonalized model")]
    GridMismatch,
    /// Reduction time must be non-negative.
    #[error("time must be non-negative, got {t}")]
    NegativeTime { t: f64 },
    /// Level count of the bath block does not match the model.
    #[error("bath has {got} levels, model has {expected}")]
    LevelMismatch { expected: usize, got: usize },
    /// Coupling sequence must be strictly decreasing and non-negative.
    #[error("lambda sequence must be strictly decreasing and non-negative")]
    BadSequence,
    /// Forwarded oracle failure.
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

const HERMITICITY_TOL: f64 = 1e-10;

/// Initial state: Hermitian level block ρ_{nm} plus a thermal bath Z e^{−βE}
/// on the discretization grid, normalized so the total trace is exactly one.
#[derive(Debug, Clone)]
pub struct ThermalBathState {
    beta: f64,
    z: f64,
    rho_levels: Array2<C64>,
    /// e^{−βE_k} per grid node (unweighted spectral profile).
    boltzmann: Vec<f64>,
    /// Mode occupations p_k = Z·w·e^{−βE_k}.
    weights: Vec<f64>,
    grid: Vec<f64>,
    bin_width: f64,
}

impl ThermalBathState {
    /// Build the state on the discretization carried by `ham`, fixing Z so
    /// that Tr ρ_levels + Z ∫ e^{−βE} dE = 1.
    pub fn new(
        beta: f64,
        rho_levels: Array2<C64>,
        ham: &DiscretizedHamiltonian,
    ) -> Result<Self, ThermalError> {
        if !(beta > 0.0) {
            return Err(ThermalError::BadBeta { beta });
        }
        let (rows, cols) = rho_levels.dim();
        if rows != cols {
            return Err(ThermalError::NonSquare { rows, cols });
        }
        if rows != ham.n_levels() {
            return Err(ThermalError::LevelMismatch { expected: ham.n_levels(), got: rows });
        }
        let scale = rho_levels.iter().fold(0.0f64, |m, v| m.max(v.norm())).max(1e-300);
        let mut residual = 0.0f64;
        for a in 0..rows {
            for b in a..cols {
                residual = residual.max((rho_levels[[a, b]] - rho_levels[[b, a]].conj()).norm());
            }
        }
        if residual > HERMITICITY_TOL * scale {
            return Err(ThermalError::NonHermitian { residual });
        }
        let trace: f64 = (0..rows).map(|a| rho_levels[[a, a]].re).sum();
        if !(0.0..=1.0).contains(&trace) {
            return Err(ThermalError::BadTrace { trace });
        }
        let w = ham.bin_width();
        let boltzmann: Vec<f64> = ham.grid().iter().map(|&e| (-beta * e).exp()).collect();
        let integral: f64 = boltzmann.iter().map(|b| b * w).sum();
        let z = (1.0 - trace) / integral;
        let weights = boltzmann.iter().map(|b| z * w * b).collect();
        Ok(ThermalBathState {
            beta,
            z,
            rho_levels,
            boltzmann,
            weights,
            grid: ham.grid().to_vec(),
            bin_width: w,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Normalization coefficient of the bath profile.
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn rho_levels(&self) -> &Array2<C64> {
        &self.rho_levels
    }

    /// Spectral profile e^{−βE_k} on the grid.
    pub fn boltzmann(&self) -> &[f64] {
        &self.boltzmann
    }

    /// Mode occupations p_k = Z w e^{−βE_k}.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Tr(level block) + Z ∫ e^{−βE} dE; equals one by construction.
    pub fn total_trace(&self) -> f64 {
        let levels: f64 = (0..self.rho_levels.nrows()).map(|a| self.rho_levels[[a, a]].re).sum();
        let bath: f64 = self.weights.iter().sum();
        levels + bath
    }
}

/// Exact propagator data for the reduction: eigenvalues and the level and
/// bath blocks of the eigenvectors of the discretized Hamiltonian.
pub struct ThermalPropagator {
    levels: usize,
    grid: Vec<f64>,
    bin_width: f64,
    values: Vec<f64>,
    /// head[n][μ] = ⟨level n|v_μ⟩.
    head: Vec<Vec<f64>>,
    /// bath[k][μ] = ⟨bin k|v_μ⟩.
    bath: Vec<Vec<f64>>,
}

impl ThermalPropagator {
    /// Dense diagonalization of the discretized model (O(dim³): modest grids).
    pub fn new(ham: &DiscretizedHamiltonian) -> Self {
        let eig = ham.dense_eigen();
        let m = ham.n_levels();
        let n = ham.n_bins();
        let dim = ham.dim();
        let mut head = vec![vec![0.0; dim]; m];
        let mut bath = vec![vec![0.0; dim]; n];
        for (mu, v) in eig.vectors.iter().enumerate() {
            for i in 0..m {
                head[i][mu] = v[i];
            }
            for k in 0..n {
                bath[k][mu] = v[m + k];
            }
        }
        ThermalPropagator {
            levels: m,
            grid: ham.grid().to_vec(),
            bin_width: ham.bin_width(),
            values: eig.values,
            head,
            bath,
        }
    }

    pub fn n_levels(&self) -> usize {
        self.levels
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    /// Reduced level matrix ρ_O(t): evolve the initial state exactly through
    /// the eigenbasis and trace away the bath.  The bath itself is never
    /// modified — it stays in equilibrium by construction.
    pub fn reduced_oscillator_state(
        &self,
        bath: &ThermalBathState,
        t: f64,
    ) -> Result<Array2<C64>, ThermalError> {
        if t < 0.0 {
            return Err(ThermalError::NegativeTime { t });
        }
        if bath.rho_levels.nrows() != self.levels {
            return Err(ThermalError::LevelMismatch {
                expected: self.levels,
                got: bath.rho_levels.nrows(),
            });
        }
        if bath.grid.len() != self.grid.len()
            || bath.bin_width != self.bin_width
            || bath
                .grid
                .first()
                .zip(self.grid.first())
                .is_some_and(|(a, b)| a != b)
        {
            return Err(ThermalError::GridMismatch);
        }
        let m = self.levels;
        let dim = self.values.len();
        let n = self.grid.len();
        // W[i][μ] = head[i][μ] e^{−ie_μ t}.
        let phases: Vec<C64> = self.values.iter().map(|&e| (-c64(0.0, 1.0) * e * t).exp()).collect();
        let w: Vec<Vec<C64>> = (0..m)
            .map(|i| (0..dim).map(|mu| phases[mu] * self.head[i][mu]).collect())
            .collect();
        // Level-to-level amplitudes A[i][a] = Σ_μ head[i][μ] e^{−ie_μt} head[a][μ].
        let mut amp = Array2::from_elem((m, m), C64::ZERO);
        for i in 0..m {
            for a in 0..m {
                let mut acc = C64::ZERO;
                for mu in 0..dim {
                    acc += w[i][mu] * self.head[a][mu];
                }
                amp[[i, a]] = acc;
            }
        }
        // Level-to-bath amplitudes G[i][k] = Σ_μ head[i][μ] e^{−ie_μt} bath[k][μ].
        let mut g = vec![vec![C64::ZERO; n]; m];
        for i in 0..m {
            for (k, bath_k) in self.bath.iter().enumerate() {
                let mut acc = C64::ZERO;
                for mu in 0..dim {
                    acc += w[i][mu] * bath_k[mu];
                }
                g[i][k] = acc;
            }
        }
        // ρ_O = A ρ_levels A† + Σ_k p_k G_{·k} G_{·k}†.
        let mut out = Array2::from_elem((m, m), C64::ZERO);
        for i in 0..m {
            for j in 0..m {
                let mut acc = C64::ZERO;
                for a in 0..m {
                    for b in 0..m {
                        acc += amp[[i, a]] * bath.rho_levels[[a, b]] * amp[[j, b]].conj();
                    }
                }
                for k in 0..n {
                    acc += bath.weights[k] * g[i][k] * g[j][k].conj();
                }
                out[[i, j]] = acc;
            }
        }
        Ok(out)
    }
}

/// Concentration data for one coupling strength.
#[derive(Debug, Clone)]
pub struct OverlapSample {
    pub lambda: f64,
    /// Second moment of |⟨n|v_μ⟩|² around ωₙ, per level.
    pub second_moment: Vec<f64>,
    /// Spectral mass of level n outside |e − ωₙ| ≤ window, per level.
    pub outside_mass: Vec<f64>,
    /// Σ_μ |⟨0|v_μ⟩ ⟨1|v_μ⟩| for multi-level models (0 for a single level).
    pub cross_level: f64,
}

/// Report of the V → 0 concentration limits along a λ-sequence.
#[derive(Debug, Clone)]
pub struct OverlapReport {
    pub samples: Vec<OverlapSample>,
    /// Least-squares slope of ln(second moment of level 0) against ln λ over
    /// the strictly positive couplings; ≈ 2 by the golden rule.
    pub width_exponent: Option<f64>,
    pub window: f64,
}

/// Spectral-overlap concentration along a strictly decreasing λ-sequence.
///
/// For each λ the model `levels`/`scales`/`form` is discretized on `omega_max`
/// × `n_bins` and diagonalized (closed-form arrowhead path for one level, the
/// dense path otherwise).  λ = 0 short-circuits to the exact block-identity
/// overlap matrix: all moments vanish and nothing concentrates because nothing
/// is spread.
pub fn weak_coupling_overlap_check(
    levels: &[f64],
    scales: &[f64],
    form: crate::friedrichs::FormFactor,
    lambdas: &[f64],
    omega_max: f64,
    n_bins: usize,
    window: f64,
) -> Result<OverlapReport, ThermalError> {
    use crate::friedrichs::FriedrichsModel;
    use crate::oracle::Discretization;

    if lambdas.is_empty() || lambdas.windows(2).any(|p| p[1] >= p[0]) || lambdas.iter().any(|&l| l < 0.0)
    {
        return Err(ThermalError::BadSequence);
    }
    let mut samples = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        if lambda == 0.0 {
            samples.push(OverlapSample {
                lambda,
                second_moment: vec![0.0; levels.len()],
                outside_mass: vec![0.0; levels.len()],
                cross_level: 0.0,
            });
            continue;
        }
        let model = FriedrichsModel::multi(levels.to_vec(), scales.to_vec(), lambda, form.clone())
            .expect("level/scale data validated by caller");
        let ham = DiscretizedHamiltonian::new(&model, Discretization::new(omega_max, n_bins))?;
        // weights[n][μ] = |⟨n|v_μ⟩|², eigenvalues e_μ.
        let (values, weights): (Vec<f64>, Vec<Vec<f64>>) = if levels.len() == 1 {
            let arrow = ham.arrowhead_eigen()?;
            (arrow.values.clone(), vec![arrow.head_weight.clone()])
        } else {
            let eig = ham.dense_eigen();
            let w = (0..levels.len())
                .map(|n| eig.vectors.iter().map(|v| v[n] * v[n]).collect())
                .collect();
            (eig.values, w)
        };
        let mut second_moment = Vec::with_capacity(levels.len());
        let mut outside_mass = Vec::with_capacity(levels.len());
        for (n, &omega_n) in levels.iter().enumerate() {
            let total: f64 = weights[n].iter().sum();
            let m2: f64 = values
                .iter()
                .zip(&weights[n])
                .map(|(&e, &p)| p * (e - omega_n) * (e - omega_n))
                .sum();
            let out: f64 = values
                .iter()
                .zip(&weights[n])
                .filter(|(&e, _)| (e - omega_n).abs() > window)
                .map(|(_, &p)| p)
                .sum();
            second_moment.push(m2 / total);
            outside_mass.push(out / total);
        }
        let cross_level = if levels.len() >= 2 {
            let eig_pairs = weights[0].iter().zip(&weights[1]);
            eig_pairs.map(|(&p0, &p1)| (p0 * p1).sqrt()).sum()
        } else {
            0.0
        };
        samples.push(OverlapSample { lambda, second_moment, outside_mass, cross_level });
    }
    let positive: Vec<&OverlapSample> = samples.iter().filter(|s| s.lambda > 0.0).collect();
    let width_exponent = if positive.len() >= 2 {
        let xs: Vec<f64> = positive.iter().map(|s| s.lambda.ln()).collect();
        let ys: Vec<f64> = positive.iter().map(|s| s.second_moment[0].ln()).collect();
        let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
        let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
        let den: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
        Some(num / den)
    } else {
        None
    };
    Ok(OverlapReport { samples, width_exponent, window })
}
