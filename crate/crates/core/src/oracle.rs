//! Independent cross-check path: brute-force discretization of the model.
//!
//! The continuum [0, Ω] is replaced by N midpoint bins ω_k = (k+½)w with
//! w = Ω/N, turning H into an (m+N)-dimensional real symmetric matrix with
//! couplings g_{nk} = λcₙ f(ω_k)√w. Everything the analytic machinery
//! predicts (survival amplitudes, spectral densities, reduced density
//! matrices) can then be recomputed here with controlled O(w²) error and no
//! shared code path:
//!
//! - a dedicated arrowhead eigensolver for single-level models (secular
//!   bisection + closed-form eigenvectors, O(N²) total),
//! - a dense symmetric eigensolver for small multi-level cross-checks,
//! - a Chebyshev expansion of e^{-iHt} for long-time propagation at sizes
//!   where dense diagonalization is not affordable.

use crate::friedrichs::FriedrichsModel;
use crate::{c64, C64};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("operation requires a single-level model, this one has {n}")]
    NotSingleLevel { n: usize },
    #[error("secular root bracketing failed in gap {gap} [{lo}, {hi}]")]
    BracketFailed { gap: usize, lo: f64, hi: f64 },
    #[error("state dimension {got} does not match discretization {expect}")]
    DimensionMismatch { got: usize, expect: usize },
    #[error("discretization needs at least {need} bins, got {got}")]
    TooFewBins { need: usize, got: usize },
}

/// Grid parameters for the continuum discretization.
#[derive(Debug, Clone, Copy)]
pub struct Discretization {
    pub omega_max: f64,
    pub n_bins: usize,
}

impl Discretization {
    pub fn new(omega_max: f64, n_bins: usize) -> Self {
        Discretization { omega_max, n_bins }
    }

    /// Recurrence time 2π/w beyond which the discrete spectrum dephases
    /// back; trajectories are only faithful well below this.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.n_bins as f64 / self.omega_max
    }
}

/// The discretized Hamiltonian: `m` discrete levels followed by `n` bins.
#[derive(Debug, Clone)]
pub struct DiscretizedHamiltonian {
    levels: Vec<f64>,
    grid: Vec<f64>,
    bin_width: f64,
    /// couplings[n][k] = λ cₙ f(ω_k) √w
    couplings: Vec<Vec<f64>>,
}

impl DiscretizedHamiltonian {
    pub fn new(model: &FriedrichsModel, disc: Discretization) -> Result<Self, OracleError> {
        if disc.n_bins < 8 {
            return Err(OracleError::TooFewBins {
                need: 8,
                got: disc.n_bins,
            });
        }
        let w = disc.omega_max / disc.n_bins as f64;
        let grid: Vec<f64> = (0..disc.n_bins).map(|k| (k as f64 + 0.5) * w).collect();
        let couplings = model
            .scales()
            .iter()
            .map(|&c| {
                grid.iter()
                    .map(|&om| model.lambda() * c * model.form().f_real(om) * w.sqrt())
                    .collect()
            })
            .collect();
        Ok(DiscretizedHamiltonian {
            levels: model.levels().to_vec(),
            grid,
            bin_width: w,
            couplings,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn n_bins(&self) -> usize {
        self.grid.len()
    }

    pub fn dim(&self) -> usize {
        self.levels.len() + self.grid.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn couplings(&self) -> &[Vec<f64>] {
        &self.couplings
    }

    /// Pack a continuum profile ψ_c(ω) into bin coordinates √w·ψ_c(ω_k),
    /// prefixed by the given discrete components.
    pub fn pack_state<F: Fn(f64) -> C64>(&self, discrete: &[C64], profile: F) -> Vec<C64> {
        assert_eq!(discrete.len(), self.levels.len());
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(discrete);
        let sw = self.bin_width.sqrt();
        out.extend(self.grid.iter().map(|&om| profile(om) * sw));
        out
    }

    /// y = Hx.
    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        let m = self.levels.len();
        let n = self.grid.len();
        debug_assert_eq!(x.len(), m + n);
        debug_assert_eq!(y.len(), m + n);
        for i in 0..m {
            let mut acc = self.levels[i] * x[i];
            let g = &self.couplings[i];
            for k in 0..n {
                acc += g[k] * x[m + k];
            }
            y[i] = acc;
        }
        for k in 0..n {
            let mut acc = self.grid[k] * x[m + k];
            for i in 0..m {
                acc += self.couplings[i][k] * x[i];
            }
            y[m + k] = acc;
        }
    }

    /// Gershgorin bounds on the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, &w0) in self.levels.iter().enumerate() {
            let row: f64 = self.couplings[i].iter().map(|g| g.abs()).sum();
            lo = lo.min(w0 - row);
            hi = hi.max(w0 + row);
        }
        for (k, &om) in self.grid.iter().enumerate() {
            let col: f64 = self.couplings.iter().map(|g| g[k].abs()).sum();
            lo = lo.min(om - col);
            hi = hi.max(om + col);
        }
        (lo, hi)
    }

    /// Full dense symmetric eigendecomposition. Only affordable for modest
    /// dimensions; used to cross-check the structured paths.
    pub fn dense_eigen(&self) -> DenseEigen {
        let d = self.dim();
        let m = self.levels.len();
        let mut h = DMatrix::<f64>::zeros(d, d);
        for (i, &w0) in self.levels.iter().enumerate() {
            h[(i, i)] = w0;
            for (k, &g) in self.couplings[i].iter().enumerate() {
                h[(i, m + k)] = g;
                h[(m + k, i)] = g;
            }
        }
        for (k, &om) in self.grid.iter().enumerate() {
            h[(m + k, m + k)] = om;
        }
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
        let vectors = order
            .iter()
            .map(|&j| DVector::from(eig.eigenvectors.column(j).clone_owned()))
            .collect();
        DenseEigen { values, vectors }
    }

    /// Eigendecomposition of the single-level arrowhead matrix through its
    /// secular function s(x) = x - ω₀ - Σ g²_k/(x - ω_k): one root per grid
    /// gap plus one beyond each end (interlacing), found by bisection and
    /// polished by Newton. Eigenvector components follow in closed form,
    /// with head weight a² = 1/s'(E).
    pub fn arrowhead_eigen(&self) -> Result<ArrowheadEigen, OracleError> {
        if self.levels.len() != 1 {
            return Err(OracleError::NotSingleLevel {
                n: self.levels.len(),
            });
        }
        let omega0 = self.levels[0];
        let g = &self.couplings[0];
        let grid = &self.grid;
        let n = grid.len();
        let s = |x: f64| -> f64 {
            let mut acc = x - omega0;
            for k in 0..n {
                acc -= g[k] * g[k] / (x - grid[k]);
            }
            acc
        };
        let sprime = |x: f64| -> f64 {
            let mut acc = 1.0;
            for k in 0..n {
                let d = x - grid[k];
                acc += g[k] * g[k] / (d * d);
            }
            acc
        };
        let gnorm_sq: f64 = g.iter().map(|v| v * v).sum();
        let mut values = Vec::with_capacity(n + 1);
        // Gap below the grid, all interior gaps, and the gap above.
        let lo_edge = grid[0] - gnorm_sq / self.bin_width.max(1e-12) - omega0.abs() - 1.0;
        for gap in 0..=n {
            let (mut lo, mut hi) = if gap == 0 {
                (lo_edge, grid[0])
            } else if gap == n {
                (grid[n - 1], grid[n - 1] + gnorm_sq + omega0 + 1.0)
            } else {
                (grid[gap - 1], grid[gap])
            };
            // Shrink away from the poles where s is ∓∞.
            let span = hi - lo;
            lo += 1e-14 * span.max(1.0);
            hi -= 1e-14 * span.max(1.0);
            let (mut flo, mut fhi) = (s(lo), s(hi));
            // Against the poles the sign is known analytically; fix up any
            // evaluation that landed on the wrong side through roundoff.
            if gap > 0 && flo > 0.0 {
                flo = f64::NEG_INFINITY;
            }
            if gap < n && fhi < 0.0 {
                fhi = f64::INFINITY;
            }
            if flo > 0.0 || fhi < 0.0 {
                return Err(OracleError::BracketFailed { gap, lo, hi });
            }
            let mut x = 0.5 * (lo + hi);
            for _ in 0..200 {
                let fx = s(x);
                if fx == 0.0 {
                    break;
                }
                if fx < 0.0 {
                    lo = x;
                } else {
                    hi = x;
                }
                // Newton step, falling back to bisection when it escapes.
                let step = fx / sprime(x);
                let candidate = x - step;
                x = if candidate > lo && candidate < hi {
                    candidate
                } else {
                    0.5 * (lo + hi)
                };
                if hi - lo < 4.0 * f64::EPSILON * (1.0 + x.abs()) {
                    break;
                }
            }
            values.push(x);
        }
        let head_weight: Vec<f64> = values.iter().map(|&e| 1.0 / sprime(e)).collect();
        Ok(ArrowheadEigen {
            omega0,
            values,
            head_weight,
            grid: grid.clone(),
            couplings: g.clone(),
        })
    }

    /// e^{-iHt}·x for every t in `ts`, by Chebyshev expansion of the
    /// propagator on the Gershgorin interval. One pass of matvecs serves
    /// all times; cost is O(K·dim) with K ≈ spectral-radius × max|t|.
    /// Negative times are fine — the expansion is exactly reversible.
    pub fn chebyshev_evolve_many(
        &self,
        x: &[C64],
        ts: &[f64],
    ) -> Result<Vec<Vec<C64>>, OracleError> {
        let d = self.dim();
        if x.len() != d {
            return Err(OracleError::DimensionMismatch {
                got: x.len(),
                expect: d,
            });
        }
        let (lo, hi) = self.spectral_bounds();
        let center = 0.5 * (hi + lo);
        let radius = 0.5 * (hi - lo) * 1.001 + 1e-12;
        let theta_max = ts.iter().fold(0.0_f64, |m, &t| m.max((radius * t).abs()));
        let kmax =
            (theta_max + 40.0 + 15.0 * theta_max.powf(1.0 / 3.0)).ceil() as usize;
        // Coefficient tables: c_k(t) = (2-δ_k0)·(-i)^k·J_k(r·t), with the
        // parity rule J_k(-θ) = (-1)^k J_k(θ) covering negative times.
        let coeff: Vec<Vec<C64>> = ts
            .iter()
            .map(|&t| {
                let theta = radius * t;
                let bessel = bessel_j_sequence(theta.abs(), kmax);
                (0..=kmax)
                    .map(|k| {
                        let mut c = c64(0.0, -1.0).powu(k as u32) * bessel[k];
                        if theta < 0.0 && k % 2 == 1 {
                            c = -c;
                        }
                        if k > 0 {
                            c *= 2.0;
                        }
                        c
                    })
                    .collect()
            })
            .collect();
        let phase: Vec<C64> = ts
            .iter()
            .map(|&t| (-c64(0.0, 1.0) * center * t).exp())
            .collect();
        // Streamed Chebyshev recurrence on the shifted operator.
        let shifted_matvec = |v: &[C64], out: &mut [C64]| {
            self.matvec(v, out);
            for i in 0..d {
                out[i] = (out[i] - center * v[i]) / radius;
            }
        };
        let mut acc: Vec<Vec<C64>> = ts.iter().map(|_| vec![C64::ZERO; d]).collect();
        let mut t_prev = x.to_vec();
        let mut t_cur = vec![C64::ZERO; d];
        shifted_matvec(&t_prev, &mut t_cur);
        for (j, a) in acc.iter_mut().enumerate() {
            let (c0, c1) = (coeff[j][0], coeff[j][1]);
            for i in 0..d {
                a[i] += c0 * t_prev[i] + c1 * t_cur[i];
            }
        }
        let mut t_next = vec![C64::ZERO; d];
        for k in 2..=kmax {
            shifted_matvec(&t_cur, &mut t_next);
            for i in 0..d {
                t_next[i] = 2.0 * t_next[i] - t_prev[i];
            }
            for (j, a) in acc.iter_mut().enumerate() {
                let ck = coeff[j][k];
                if ck.norm() < 1e-18 {
                    continue;
                }
                for i in 0..d {
                    a[i] += ck * t_next[i];
                }
            }
            std::mem::swap(&mut t_prev, &mut t_cur);
            std::mem::swap(&mut t_cur, &mut t_next);
        }
        for (j, a) in acc.iter_mut().enumerate() {
            for v in a.iter_mut() {
                *v *= phase[j];
            }
        }
        Ok(acc)
    }
}

/// Dense eigendecomposition, eigenvalues ascending.
pub struct DenseEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
}

/// Spectral data of the single-level arrowhead matrix.
///
/// Eigenvectors are never stored densely: component k of the eigenvector
/// with eigenvalue E is g_k·a/(E - ω_k) with head component a = √(1/s'(E)),
/// so every overlap is a closed-form O(N) sum.
pub struct ArrowheadEigen {
    omega0: f64,
    pub values: Vec<f64>,
    /// |⟨level|E⟩|² = 1/s'(E) per eigenvalue.
    pub head_weight: Vec<f64>,
    grid: Vec<f64>,
    couplings: Vec<f64>,
}

impl ArrowheadEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    /// ⟨E_j|ψ⟩ for a packed state (head component first, then bins).
    pub fn overlaps(&self, psi: &[C64]) -> Vec<C64> {
        let n = self.grid.len();
        assert_eq!(psi.len(), n + 1);
        self.values
            .iter()
            .zip(&self.head_weight)
            .map(|(&e, &hw)| {
                let a = hw.sqrt();
                let mut acc = psi[0];
                for k in 0..n {
                    acc += self.couplings[k] * psi[1 + k] / (e - self.grid[k]);
                }
                a * acc
            })
            .collect()
    }

    /// Survival amplitude of the discrete level: Σ_j (1/s'(E_j)) e^{-iE_j t}.
    /// Compensated summation keeps the roundoff floor near machine ε even
    /// for thousands of terms, which the short-time regime needs.
    pub fn survival_amplitude(&self, t: f64) -> C64 {
        let mut sum = C64::ZERO;
        let mut comp = C64::ZERO;
        for (&e, &hw) in self.values.iter().zip(&self.head_weight) {
            let term = hw * (-c64(0.0, 1.0) * e * t).exp();
            let y = term - comp;
            let next = sum + y;
            comp = (next - sum) - y;
            sum = next;
        }
        sum
    }

    pub fn survival_probability(&self, t: f64) -> f64 {
        self.survival_amplitude(t).norm_sqr()
    }

    /// ⟨φ(t)|ψ(0)⟩ ... evolve ψ and project on φ: Σ_j conj(⟨E|φ⟩)⟨E|ψ⟩e^{-iEt},
    /// with both overlap vectors supplied by `overlaps`.
    pub fn matrix_element(&self, phi_overlaps: &[C64], psi_overlaps: &[C64], t: f64) -> C64 {
        let mut sum = C64::ZERO;
        for ((&e, &fo), &po) in self
            .values
            .iter()
            .zip(phi_overlaps)
            .zip(psi_overlaps)
        {
            sum += fo.conj() * po * (-c64(0.0, 1.0) * e * t).exp();
        }
        sum
    }

    /// Eigenvector components on the grid for eigenvalue index j.
    pub fn bin_components(&self, j: usize) -> Vec<f64> {
        let e = self.values[j];
        let a = self.head_weight[j].sqrt();
        self.grid
            .iter()
            .zip(&self.couplings)
            .map(|(&om, &g)| a * g / (e - om))
            .collect()
    }
}

/// J_0..J_kmax at a single non-negative argument by Miller's downward
/// recurrence with the Σ-normalization J_0 + 2ΣJ_{2k} = 1.
pub fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    assert!(x >= 0.0);
    if x < 1e-300 {
        let mut out = vec![0.0; kmax + 1];
        out[0] = 1.0;
        return out;
    }
    let start = kmax + 20 + (2.0 * x.sqrt()) as usize + (0.1 * x) as usize;
    let mut jnext = 0.0_f64;
    let mut jcur = 1e-300_f64;
    let mut out = vec![0.0; kmax + 1];
    let mut norm = 0.0_f64;
    for n in (0..=start).rev() {
        let jprev = (2.0 * (n as f64 + 1.0) / x) * jcur - jnext;
        jnext = jcur;
        jcur = jprev;
        // Rescale to dodge overflow during the downward sweep.
        if jcur.abs() > 1e250 {
            jcur *= 1e-250;
            jnext *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
        if n <= kmax {
            out[n] = jcur;
        }
        if n % 2 == 0 {
            norm += if n == 0 { jcur } else { 2.0 * jcur };
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}
