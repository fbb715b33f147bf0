//! Resonance spectral decompositions for the Friedrichs model.
//!
//! A discrete level ω₀ (or several levels ωₙ) is coupled with strength λ to a
//! half-line continuum [0, ∞) through a form factor f(ω). The survival
//! amplitude of the discrete state develops a resonance pole on the second
//! Riemann sheet of the resolvent, and the crate builds the full machinery
//! around that pole:
//!
//! - [`quad`] — adaptive complex-valued quadrature on segments and on the
//!   semi-infinite axis, plus fixed Gauss–Legendre panels for contours.
//! - [`friedrichs`] — form factors, the reduced resolvent η(z) on both
//!   sheets, pole location, and deformed background contours.
//! - [`spectral`] — Gamow vectors, generalized eigenexpansions of pure
//!   states, time evolution, survival probabilities, and Hardy-class
//!   membership checks for admissible states.
//! - [`liouville`] — density operators carried in the generalized basis:
//!   singular diagonals, ghost dyads, decoherence profiles, Lyapunov
//!   functionals.
//! - [`entropy`] — the projector construction that turns the ghost sector
//!   into a monotone entropy production term.
//! - [`wigner`] — discrete Wigner/Weyl phase-space transforms and the
//!   classical entropy integral they support.
//! - [`thermal`] — a discrete level embedded in a thermal bath: reduced
//!   state evolution toward a Gibbs diagonal.
//! - [`oracle`] — an independent cross-check path: the same physics from a
//!   dense discretization of the Hamiltonian, eigensolvers, and a Chebyshev
//!   propagator. Used throughout the test suite to validate the analytic
//!   machinery against brute force.

pub mod entropy;
pub mod friedrichs;
pub mod liouville;
pub mod oracle;
pub mod quad;
pub mod spectral;
pub mod thermal;
pub mod wigner;

/// Complex double-precision scalar used across the crate.
pub type C64 = num_complex::Complex64;

/// Convenience constructor for [`C64`].
#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
