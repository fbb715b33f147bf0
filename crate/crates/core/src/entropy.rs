//! Projected conditional entropy for the ghost sector.
//!
//! The naive conditional entropy −Tr[ρ log(ρρ*⁻¹)] of a decaying state is
//! identically zero: expanding the logarithm near equilibrium leaves
//! −½e^{−2γ_min t}Tr[ρ₁²ρ*⁻¹], and every product of two ghost-carrying bar
//! dyads dies under the trace (⟨ḡ|ḡ⟩ = ε = 0). A nontrivial, monotone
//! entropy needs a projector P that copies part of the ghost content into
//! the dual (tilde) family, where the mixed pairing ⟨ḡ|g̃⟩ = 1 survives.
//!
//! The projector acts as the identity on the singular diagonal (so traces
//! and the equilibrium state are untouched) and carries two matrix blocks
//! over the ghost labels:
//!
//! * `p` — maps bar ghost coefficients to bar ghost coefficients,
//! * `q` — maps bar ghost coefficients onto tilde dyads |μ̃).
//!
//! Three structural conditions pin the remaining blocks: trace preservation
//! (Tr Pρ = Tr ρ, so nothing leaks from the ghost sector into the
//! diagonal), equilibrium fixed point (Pρ* = ρ*, so the projection is
//! irrelevant at t → ∞), and non-triviality (q ≠ 0, so Tr[(Pρ₁)²ρ*⁻¹] ≠ 0).
//! When idempotency is requested, p·p = p and q·p = q must hold as well.
//!
//! [`conditional_entropy`] evaluates the leading term of the projected
//! entropy,
//!
//! S(t) = −½ Tr[(Pρ₁(t))² ρ*⁻¹],
//!
//! in the ghost algebra. ρ*⁻¹ is diagonal: the stable slot closes with
//! weight 1/ρ₀*, and a ghost slot closes with the inverse equilibrium
//! density interpolated at the resonance energy Re z. Near equilibrium S is
//! negative, non-decreasing, and → 0 with rate 2γ_min.

use crate::liouville::{Dyad, Flavor, LiouvilleError, LiouvilleState, Slot};
use crate::C64;
use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("a projector needs at least one ghost label")]
    NoGhostLabels,
    #[error("projector blocks are {got}×{got} but the state carries {expected} ghost labels")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("block is {rows}×{cols}, expected {dim}×{dim}")]
    BlockShape { rows: usize, cols: usize, dim: usize },
    #[error("recipe is not idempotent: max residual of (p·p−p, q·p−q) is {residual:.3e}; pass idempotent: false to keep it")]
    NotIdempotent { residual: f64 },
    #[error("q block is identically zero, so the projected entropy is trivial; use the naive recipe to request that explicitly")]
    TrivialQ,
    #[error("rank-one recipe needs a nonzero vector")]
    ZeroVector,
    #[error("equilibrium weight {weight:.3e} at a trace closure is not positive")]
    SingularEquilibrium { weight: f64 },
    #[error("closure energy {energy} lies outside the grid [0, {omega_max}]")]
    ClosureOffGrid { energy: f64, omega_max: f64 },
    #[error("state and equilibrium live on different grids")]
    GridMismatch,
    #[error(transparent)]
    Liouville(#[from] LiouvilleError),
}

/// Projector on the rigged Liouville space, stored as its two ghost-sector
/// blocks. The diagonal block is the identity and the diagonal↔ghost blocks
/// are zero by construction, which is exactly what trace preservation and
/// the equilibrium fixed point require.
#[derive(Debug, Clone)]
pub struct EntropyProjector {
    p: Array2<C64>,
    q: Array2<C64>,
    idempotent: bool,
}

/// How to fill the ghost blocks.
#[derive(Debug, Clone)]
pub enum ProjectorRecipe<'a> {
    /// p = q = identity on the ghost labels. The simplest valid choice.
    GhostIdentity,
    /// p = identity, q = 0: the unprojected ("naive") entropy, identically
    /// zero. Kept constructible so the triviality is demonstrable.
    Naive,
    /// p = q = v v†/‖v‖², the rank-one projector onto span{v}.
    RankOne(&'a [C64]),
    /// Explicit blocks. `idempotent` requests verification of p·p = p and
    /// q·p = q.
    Custom {
        p: Array2<C64>,
        q: Array2<C64>,
        idempotent: bool,
    },
}

const IDEMPOTENCY_TOL: f64 = 1e-12;

/// Builds a projector over `labels` ghost labels and verifies its
/// invariants numerically.
pub fn build_projector(
    labels: usize,
    recipe: ProjectorRecipe,
) -> Result<EntropyProjector, EntropyError> {
    if labels == 0 {
        return Err(EntropyError::NoGhostLabels);
    }
    let eye = Array2::from_shape_fn((labels, labels), |(i, j)| {
        if i == j {
            C64::new(1.0, 0.0)
        } else {
            C64::ZERO
        }
    });
    let (p, q, idempotent) = match recipe {
        ProjectorRecipe::GhostIdentity => (eye.clone(), eye, true),
        ProjectorRecipe::Naive => (eye, Array2::zeros((labels, labels)), true),
        ProjectorRecipe::RankOne(v) => {
            check_shape(v.len(), 1, labels)?;
            let norm_sq: f64 = v.iter().map(|a| a.norm_sqr()).sum();
            if norm_sq == 0.0 {
                return Err(EntropyError::ZeroVector);
            }
            let p = Array2::from_shape_fn((labels, labels), |(i, j)| {
                v[i] * v[j].conj() / norm_sq
            });
            (p.clone(), p, true)
        }
        ProjectorRecipe::Custom { p, q, idempotent } => {
            check_shape(p.nrows(), p.ncols(), labels)?;
            check_shape(q.nrows(), q.ncols(), labels)?;
            if q.iter().all(|a| a.norm() == 0.0) {
                return Err(EntropyError::TrivialQ);
            }
            (p, q, idempotent)
        }
    };
    if idempotent {
        let res_p = max_abs(&(p.dot(&p) - &p));
        let res_q = max_abs(&(q.dot(&p) - &q));
        let residual = res_p.max(res_q);
        if residual > IDEMPOTENCY_TOL {
            return Err(EntropyError::NotIdempotent { residual });
        }
    }
    Ok(EntropyProjector { p, q, idempotent })
}

fn check_shape(rows: usize, cols: usize, dim: usize) -> Result<(), EntropyError> {
    if rows != dim || (cols != dim && cols != 1) {
        return Err(EntropyError::BlockShape { rows, cols, dim });
    }
    Ok(())
}

fn max_abs(m: &Array2<C64>) -> f64 {
    m.iter().map(|a| a.norm()).fold(0.0, f64::max)
}

impl EntropyProjector {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn p(&self) -> &Array2<C64> {
        &self.p
    }

    pub fn q(&self) -> &Array2<C64> {
        &self.q
    }

    pub fn is_idempotent(&self) -> bool {
        self.idempotent
    }

    /// True for the naive recipe (q = 0): the projected entropy vanishes.
    pub fn is_naive(&self) -> bool {
        self.q.iter().all(|a| a.norm() == 0.0)
    }

    /// ρ̃ = Pρ. The diagonal blocks pass through unchanged; the bar ghost
    /// coefficients are mapped by `p` and a tilde copy weighted by `q` is
    /// added. A state with no ghost dyads is returned unchanged (P restricts
    /// to the identity there), which is the equilibrium fixed point.
    pub fn apply(&self, rho: &LiouvilleState) -> Result<LiouvilleState, EntropyError> {
        let labels = ghost_labels(rho);
        if labels.is_empty() {
            return Ok(rho.clone());
        }
        if labels.len() != self.dim() {
            return Err(EntropyError::DimensionMismatch {
                expected: labels.len(),
                got: self.dim(),
            });
        }
        let c: Vec<C64> = labels.iter().map(|&(_, _, coeff)| coeff).collect();
        let mut dyads: Vec<Dyad> = rho
            .dyads()
            .iter()
            .filter(|d| !is_bar_ghost(d))
            .cloned()
            .collect();
        for (mu, &(ket, bra, _)) in labels.iter().enumerate() {
            let a: C64 = (0..labels.len()).map(|nu| self.p[(mu, nu)] * c[nu]).sum();
            let b: C64 = (0..labels.len()).map(|nu| self.q[(mu, nu)] * c[nu]).sum();
            if a != C64::ZERO {
                dyads.push(Dyad::bar(ket, bra, a));
            }
            if b != C64::ZERO {
                dyads.push(Dyad::tilde(ket, bra, b));
            }
        }
        Ok(rho.replace_dyads(dyads))
    }
}

fn is_bar_ghost(d: &Dyad) -> bool {
    d.ket_flavor == Flavor::Bar
        && d.bra_flavor == Flavor::Bar
        && (d.ket.is_ghost() || d.bra.is_ghost())
}

/// The ghost labels of a state: its bar dyads with at least one ghost slot,
/// merged by slot pair in order of first appearance. Projector blocks are
/// indexed in this order.
pub fn ghost_labels(rho: &LiouvilleState) -> Vec<(Slot, Slot, C64)> {
    let mut labels: Vec<(Slot, Slot, C64)> = Vec::new();
    for d in rho.dyads().iter().filter(|d| is_bar_ghost(d)) {
        if let Some(entry) = labels
            .iter_mut()
            .find(|(k, b, _)| *k == d.ket && *b == d.bra)
        {
            entry.2 += d.coeff;
        } else {
            labels.push((d.ket, d.bra, d.coeff));
        }
    }
    labels
}

/// S(t) samples with the reported bound on the neglected (cubic and higher)
/// terms of the logarithm expansion.
#[derive(Debug, Clone)]
pub struct EntropyCurve {
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    /// Upper bound on the discarded third-order term at each sample.
    pub neglected: Vec<f64>,
    /// Slowest ghost rate of the input state; None without ghost content.
    pub gamma_min: Option<f64>,
}

/// Leading term of the projected conditional entropy on a time grid:
///
/// S(t) = −½ Tr[(Pρ₁(t))² ρ*⁻¹]
///
/// evaluated in the ghost algebra. With a = p·c(t) the bar and b = q·c(t)
/// the tilde coefficients of Pρ₁, the surviving trace loops close exactly
/// once through the diagonal of ρ*⁻¹:
///
/// Tr[(Pρ₁)²ρ*⁻¹] = Σ_μ a_μ b_{μᵀ} / ρ*(ket_μ),
///
/// where μᵀ is the label with transposed slots and ρ*(s) is the equilibrium
/// diagonal weight at slot s — ρ₀* for the stable slot, the interpolated
/// density ρ*_σ(Re z) for a ghost. Coefficients evolve analytically,
/// c_ν(t) = c_ν(0)e^{−iζ_ν t}, so every sample is exact in t.
///
/// An equilibrium input (no ghost dyads) yields S ≡ 0, as does the naive
/// projector (q = 0). For Hermitian states the sum is real; the real part
/// is returned.
pub fn conditional_entropy(
    rho: &LiouvilleState,
    rho_star: &LiouvilleState,
    proj: &EntropyProjector,
    times: &[f64],
) -> Result<EntropyCurve, EntropyError> {
    if rho.grid() != rho_star.grid() {
        return Err(EntropyError::GridMismatch);
    }
    let labels = ghost_labels(rho);
    let gamma_min = ghost_gamma_min(rho)?;
    if labels.is_empty() {
        return Ok(EntropyCurve {
            times: times.to_vec(),
            s: vec![0.0; times.len()],
            neglected: vec![0.0; times.len()],
            gamma_min,
        });
    }
    let n = labels.len();
    if n != proj.dim() {
        return Err(EntropyError::DimensionMismatch {
            expected: n,
            got: proj.dim(),
        });
    }
    // Frequencies ζ_μ and the transpose pairing μ ↦ μᵀ.
    let mut zetas = Vec::with_capacity(n);
    for &(ket, bra, coeff) in &labels {
        zetas.push(rho.dyad_zeta(&Dyad::bar(ket, bra, coeff))?);
    }
    let transpose: Vec<Option<usize>> = labels
        .iter()
        .map(|&(k, b, _)| labels.iter().position(|&(k2, b2, _)| k2 == b && b2 == k))
        .collect();
    // Closure weights 1/ρ*(ket_μ), only where a loop actually closes.
    let mut inv_weight = vec![0.0_f64; n];
    let mut w_max = 0.0_f64;
    for (mu, &(ket, _, _)) in labels.iter().enumerate() {
        if transpose[mu].is_none() {
            continue;
        }
        let w = diagonal_weight(rho_star, ket, rho.ghost_poles())?;
        inv_weight[mu] = 1.0 / w;
        w_max = w_max.max(1.0 / w);
    }
    let i = C64::new(0.0, 1.0);
    let mut s = Vec::with_capacity(times.len());
    let mut neglected = Vec::with_capacity(times.len());
    for &t in times {
        let c: Vec<C64> = labels
            .iter()
            .zip(&zetas)
            .map(|(&(_, _, c0), &z)| c0 * (-i * z * t).exp())
            .collect();
        let mut a = vec![C64::ZERO; n];
        let mut b = vec![C64::ZERO; n];
        for mu in 0..n {
            for nu in 0..n {
                a[mu] += proj.p()[(mu, nu)] * c[nu];
                b[mu] += proj.q()[(mu, nu)] * c[nu];
            }
        }
        let mut q_trace = C64::ZERO;
        let mut mass = 0.0_f64;
        for mu in 0..n {
            mass += a[mu].norm() + b[mu].norm();
            if let Some(tau) = transpose[mu] {
                q_trace += a[mu] * b[tau] * inv_weight[mu];
            }
        }
        s.push(-0.5 * q_trace.re);
        neglected.push(mass.powi(3) / 3.0 * w_max * w_max);
    }
    Ok(EntropyCurve {
        times: times.to_vec(),
        s,
        neglected,
        gamma_min,
    })
}

/// Slowest decay rate over the state's ghost dyads and channels.
fn ghost_gamma_min(rho: &LiouvilleState) -> Result<Option<f64>, EntropyError> {
    let mut gamma_min: Option<f64> = None;
    let mut fold = |g: f64| {
        gamma_min = Some(match gamma_min {
            Some(cur) => cur.min(g),
            None => g,
        })
    };
    for d in rho.dyads() {
        if is_bar_ghost(d) && d.coeff != C64::ZERO {
            fold(-rho.dyad_zeta(d)?.im);
        }
    }
    for ch in rho.channels() {
        fold(ch.gamma());
    }
    Ok(gamma_min)
}

/// Equilibrium diagonal weight at a slot: ρ₀* on the stable slot, the
/// linearly interpolated effective diagonal at Re z on a ghost slot.
fn diagonal_weight(
    star: &LiouvilleState,
    slot: Slot,
    poles: &[C64],
) -> Result<f64, EntropyError> {
    let w = match slot {
        Slot::Stable(_) => star.rho0(),
        Slot::Ghost(j) => {
            let energy = poles
                .get(j)
                .ok_or(EntropyError::Liouville(LiouvilleError::UnknownSlot { slot }))?
                .re;
            let grid = star.grid();
            if energy < 0.0 || energy > grid.omega_max() {
                return Err(EntropyError::ClosureOffGrid {
                    energy,
                    omega_max: grid.omega_max(),
                });
            }
            let x = energy / grid.delta_sigma();
            let lo = (x.floor() as usize).min(grid.len() - 2);
            let frac = x - lo as f64;
            (1.0 - frac) * star.effective_diagonal(lo) + frac * star.effective_diagonal(lo + 1)
        }
    };
    if w <= 1e-14 {
        return Err(EntropyError::SingularEquilibrium { weight: w });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;
    use crate::friedrichs::{FormFactor, FriedrichsModel};
    use crate::liouville::{LiouvilleState, SigmaGrid, StateBuilder};
    use crate::spectral::{expand_with_options, AnalyticState, ExpansionOptions};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cascade_state() -> (FriedrichsModel, LiouvilleState) {
        let model = FriedrichsModel::single(1.0, 1.3, FormFactor::canonical()).unwrap();
        let opts = ExpansionOptions {
            omega_max: Some(60.0),
            ..ExpansionOptions::default()
        };
        let gs = expand_with_options(&model, &AnalyticState::bare_level(1, 0), &opts).unwrap();
        let grid = SigmaGrid::with_nodes(60.0, 129);
        let rho = LiouvilleState::from_pure(&gs, grid).unwrap();
        (model, rho)
    }

    #[test]
    fn projector_invariants_and_trace_preservation() {
        // Default recipe on one label is p = q = [1].
        let p1 = build_projector(1, ProjectorRecipe::GhostIdentity).unwrap();
        assert_eq!(p1.p()[(0, 0)], c64(1.0, 0.0));
        assert_eq!(p1.q()[(0, 0)], c64(1.0, 0.0));
        assert!(p1.is_idempotent() && !p1.is_naive());

        // Rank-one recipe on two labels is idempotent (verified residuals).
        let v = [c64(0.6, 0.2), c64(-0.3, 0.7)];
        let r1 = build_projector(2, ProjectorRecipe::RankOne(&v)).unwrap();
        let pp = r1.p().dot(r1.p());
        assert!(max_abs(&(pp - r1.p())) < 1e-14);

        // Tr Pρ = Tr ρ for 20 random states: the ghost sector never leaks
        // into the diagonal, so the traces agree exactly.
        let grid = SigmaGrid::with_nodes(10.0, 33);
        let proj = build_projector(3, ProjectorRecipe::GhostIdentity).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let z = c64(
                1.0 + rng.random::<f64>(),
                -(0.2 + 0.5 * rng.random::<f64>()),
            );
            let c_bg = c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let c_gg = rng.random::<f64>();
            let (a1, a2) = (rng.random::<f64>(), rng.random::<f64>());
            let rho = StateBuilder::new(grid, 1.0)
                .rho0(rng.random::<f64>())
                .ghosts(&[z])
                .dyad(Slot::Stable(0), Slot::Ghost(0), c_bg)
                .dyad(Slot::Ghost(0), Slot::Stable(0), c_bg.conj())
                .dyad(Slot::Ghost(0), Slot::Ghost(0), c64(c_gg, 0.0))
                .rho_sigma(move |s| 0.1 + a1 + a2 * (0.3 * s).sin().powi(2))
                .build()
                .unwrap();
            let projected = proj.apply(&rho).unwrap();
            assert_eq!(projected.generalized_trace(), rho.generalized_trace());
            assert_eq!(projected.energy_trace(), rho.energy_trace());
            // The tilde copy is present: twice the dyad count.
            assert_eq!(projected.dyads().len(), 2 * rho.dyads().len());
        }

        // Equilibrium fixed point: a ghost-free state passes through
        // untouched, whatever the projector dimension.
        let star = StateBuilder::new(grid, 1.0).rho0(0.4).build().unwrap();
        let fixed = proj.apply(&star).unwrap();
        assert_eq!(fixed.distance(&star).unwrap(), 0.0);
        assert!(fixed.dyads().is_empty());
    }

    #[test]
    fn one_ghost_closed_form() {
        // Single ghost of weight w and rate γ against a flat equilibrium
        // density ρ_w: S(t) = −½ e^{−2γt} w²/ρ_w exactly.
        let grid = SigmaGrid::with_nodes(10.0, 41);
        let gamma = 0.7;
        let w = 0.35;
        let rho_w = 0.0625;
        let z = c64(2.0, -0.5 * gamma);
        let rho = StateBuilder::new(grid, 1.0)
            .ghosts(&[z])
            .dyad(Slot::Ghost(0), Slot::Ghost(0), c64(w, 0.0))
            .build()
            .unwrap();
        let star = StateBuilder::new(grid, 1.0)
            .rho_sigma(|_| rho_w)
            .build()
            .unwrap();
        let proj = build_projector(1, ProjectorRecipe::GhostIdentity).unwrap();
        let times: Vec<f64> = (0..12).map(|k| 0.4 * k as f64).collect();
        let curve = conditional_entropy(&rho, &star, &proj, &times).unwrap();
        assert_eq!(curve.gamma_min, Some(gamma));
        for (k, &t) in times.iter().enumerate() {
            let expect = -0.5 * (-2.0 * gamma * t).exp() * w * w / rho_w;
            assert_relative_eq!(curve.s[k], expect, max_relative = 1e-12);
            assert!(curve.s[k] <= 0.0);
            assert!(curve.neglected[k] > 0.0);
        }
        // The reported neglected term decays at the cubic rate e^{−3γt}.
        let ratio = curve.neglected[10] / curve.neglected[5];
        assert_relative_eq!(
            ratio,
            (-3.0 * gamma * (times[10] - times[5])).exp(),
            max_relative = 1e-9
        );
        // Monotone increase toward zero.
        for k in 1..times.len() {
            assert!(curve.s[k] >= curve.s[k - 1]);
        }
    }

    #[test]
    fn naive_projector_vanishes_and_recipes_validate() {
        let (_, rho) = cascade_state();
        let star = rho.equilibrium_parts(0.0).unwrap().stationary;
        let n = ghost_labels(&rho).len();
        assert_eq!(n, 3);
        let naive = build_projector(n, ProjectorRecipe::Naive).unwrap();
        assert!(naive.is_naive());
        let ts: Vec<f64> = (0..8).map(|k| 0.5 * k as f64).collect();
        let curve = conditional_entropy(&rho, &star, &naive, &ts).unwrap();
        assert!(curve.s.iter().all(|&v| v == 0.0));

        // Equilibrium input → S ≡ 0 regardless of the projector.
        let proj = build_projector(n, ProjectorRecipe::GhostIdentity).unwrap();
        let flat = conditional_entropy(&star, &star, &proj, &ts).unwrap();
        assert!(flat.s.iter().all(|&v| v == 0.0));
        assert_eq!(flat.gamma_min, None);

        // Error paths.
        assert!(matches!(
            build_projector(0, ProjectorRecipe::GhostIdentity),
            Err(EntropyError::NoGhostLabels)
        ));
        assert!(matches!(
            build_projector(
                2,
                ProjectorRecipe::Custom {
                    p: Array2::zeros((2, 2)),
                    q: Array2::zeros((2, 2)),
                    idempotent: false,
                }
            ),
            Err(EntropyError::TrivialQ)
        ));
        let skew = Array2::from_shape_fn((2, 2), |(i, j)| {
            if i == 0 && j == 1 {
                c64(0.5, 0.0)
            } else {
                C64::ZERO
            }
        });
        match build_projector(
            2,
            ProjectorRecipe::Custom {
                p: skew.clone(),
                q: skew.clone(),
                idempotent: true,
            },
        ) {
            Err(EntropyError::NotIdempotent { residual }) => assert!(residual > 0.4),
            other => panic!("expected idempotency failure, got {other:?}"),
        }
        // The same blocks are accepted when idempotency is not requested.
        assert!(build_projector(
            2,
            ProjectorRecipe::Custom {
                p: skew.clone(),
                q: skew,
                idempotent: false,
            }
        )
        .is_ok());
        assert!(matches!(
            build_projector(2, ProjectorRecipe::RankOne(&[C64::ZERO, C64::ZERO])),
            Err(EntropyError::ZeroVector)
        ));
        let small = build_projector(2, ProjectorRecipe::GhostIdentity).unwrap();
        assert!(matches!(
            conditional_entropy(&rho, &star, &small, &ts),
            Err(EntropyError::DimensionMismatch { expected: 3, got: 2 })
        ));

        // Singular equilibrium: the stable closure needs ρ₀* > 0.
        let hollow = StateBuilder::new(*rho.grid(), star.discrete_energy())
            .build()
            .unwrap();
        assert!(matches!(
            conditional_entropy(&rho, &hollow, &proj, &ts),
            Err(EntropyError::SingularEquilibrium { .. })
        ));
    }

    #[test]
    fn cascade_entropy_is_monotone_with_rate_twice_gamma_min() {
        let (model, rho) = cascade_state();
        let gamma = model.resonance().unwrap().gamma;
        let split = rho.equilibrium_parts(0.0).unwrap();
        let star = split.stationary;
        let gamma_min = split.gamma_min.unwrap();
        // The mixed bound–ghost dyads decay at γ/2 — the slowest rate.
        assert_relative_eq!(gamma_min, 0.5 * gamma, max_relative = 1e-12);

        let proj = build_projector(3, ProjectorRecipe::GhostIdentity).unwrap();
        // Projecting onto the mixed pair only (drop the ghost diagonal)
        // keeps idempotency and changes the curve but not the rate.
        let labels = ghost_labels(&rho);
        let mut pair = Array2::zeros((3, 3));
        for (idx, (k, b, _)) in labels.iter().enumerate() {
            if k.is_ghost() != b.is_ghost() {
                pair[(idx, idx)] = c64(1.0, 0.0);
            }
        }
        let proj2 = build_projector(
            3,
            ProjectorRecipe::Custom {
                p: pair.clone(),
                q: pair,
                idempotent: true,
            },
        )
        .unwrap();

        let t_lo = 3.0 / gamma_min;
        let t_hi = 10.0 / gamma_min;
        let times: Vec<f64> = (0..60)
            .map(|k| t_lo + (t_hi - t_lo) * k as f64 / 59.0)
            .collect();
        let c1 = conditional_entropy(&rho, &star, &proj, &times).unwrap();
        let c2 = conditional_entropy(&rho, &star, &proj2, &times).unwrap();
        let fit = |curve: &EntropyCurve| {
            let xs: Vec<f64> = curve.times.clone();
            let ys: Vec<f64> = curve.s.iter().map(|&v| (-v).ln()).collect();
            let n = xs.len() as f64;
            let sx: f64 = xs.iter().sum();
            let sy: f64 = ys.iter().sum();
            let sxx: f64 = xs.iter().map(|x| x * x).sum();
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
            (n * sxy - sx * sy) / (n * sxx - sx * sx)
        };
        for curve in [&c1, &c2] {
            // Negative, non-decreasing, vanishing at late times.
            for k in 0..times.len() {
                assert!(curve.s[k] < 0.0);
                if k > 0 {
                    assert!(curve.s[k] >= curve.s[k - 1]);
                }
            }
            assert!(curve.s[times.len() - 1].abs() < 1e-3 * curve.s[0].abs());
            let slope = fit(curve);
            assert_relative_eq!(slope, -2.0 * gamma_min, max_relative = 0.02);
        }
        // Different projectors, same dominant exponent; different curves.
        assert!((c1.s[0] - c2.s[0]).abs() > 1e-12);
    }
}
