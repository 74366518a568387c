//! Spectral solver for the passive scalar transport equation
//!
//! ```text
//!     dθ = ½ ν Δθ dt − v·∇θ ∘ dW ,        θ(0,·) = θ₀ ,
//! ```
//!
//! on the 2π-periodic d-torus, where `v` is a zero-mean, white-in-time,
//! incompressible Gaussian velocity field with prescribed spatial spectrum.
//! The solution is represented by its Wiener chaos expansion
//! `θ(t) = Σ_α θ_α(t) ξ_α` over a Cameron–Martin basis built from a cosine
//! basis in time and a finite set of divergence-free velocity modes. The
//! chaos coefficients `θ_α` solve a lower-triangular system of deterministic
//! PDEs (the propagator) which this crate integrates spectrally.
//!
//! Module map:
//!
//! * [`field`] — sparse complex Fourier representation of real fields on the
//!   torus, with the exact product-to-sum shift rules used everywhere else.
//! * [`velocity`] — covariance spectrum, divergence-free mode basis,
//!   covariance-at-zero, and the first-order advection operators `M_k`.
//! * [`chaos`] — cosine time basis, Hermite polynomials, multi-index
//!   enumeration, Gaussian samples and Wick polynomial evaluation `ξ_α`.
//! * [`propagator`] — the chaos coefficient system and its exact-semigroup
//!   Runge–Kutta integrator, plus reconstruction and moment extraction.
//! * [`oracle`] — independent verification paths: nested-quadrature iterated
//!   integrals for per-level norms and the energy-balance ledger.
//! * [`mc`] — Euler–Maruyama Monte Carlo on the same noise realizations,
//!   used to cross-validate the chaos solution weakly and pathwise.
//! * [`quadrature`] — Gauss–Legendre nodes and cumulative grid quadrature.
//!
//! Conventions that must stay in sync across modules (they are recorded in
//! every output header written by the CLI):
//!
//! * Hermite polynomials use the generator convention
//!   `H_n(t) = e^{t²/2} dⁿ/dtⁿ e^{−t²/2}` (so `H₁(t) = −t`); the
//!   probabilists' variant `He_n = (−1)ⁿ H_n` is available alongside.
//! * The propagator forcing carries a plus sign,
//!   `θ̇_α = Aθ_α + Σ √α_i^k m_i(t) M_k θ_{α−(i,k)}`, and reconstruction
//!   pairs the coefficients with the probabilists' Wick basis so that the
//!   reconstructed field matches the Itô equation
//!   `dθ = Aθ dt + Σ_k M_kθ dw_k` driven by the same Gaussian sample. The
//!   Monte Carlo oracle integrates exactly that equation.

pub mod chaos;
pub mod field;
pub mod mc;
pub mod oracle;
pub mod propagator;
pub mod quadrature;
pub mod velocity;

use thiserror::Error;

/// Highest spatial dimension the packed wavevector representation supports.
///
/// The algorithms are written for general `d ≥ 2`; the storage caps `d` at 4
/// because integer lattice shells (and with them every loop in this crate)
/// grow combinatorially in `d`, and nothing beyond `d = 3` is exercised at
/// realistic truncations.
pub const MAX_DIM: usize = 4;

/// Errors shared by the solver layers.
///
/// Dimension mismatches between fields that are combined arithmetically are
/// programming errors and panic instead; everything that depends on runtime
/// configuration or data is reported through this enum.
#[derive(Debug, Error)]
pub enum Error {
    /// A spectral product would need support beyond the configured cap.
    #[error("grid overflow: operation needs support radius {needed} but the cap is {cap}")]
    GridOverflow { needed: i64, cap: i64 },

    /// The requested covariance regime has no basis construction here.
    #[error("unsupported velocity regime: {0}")]
    UnsupportedRegime(String),

    /// A scalar or structural parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A non-finite coefficient was produced; carries full provenance.
    #[error("non-finite coefficient: {context}")]
    NonFinite { context: String },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// `(2π)^d`, the volume of the d-torus; the natural `L²` normalization
/// constant for all inner products in this crate.
pub fn torus_volume(dim: usize) -> f64 {
    (2.0 * std::f64::consts::PI).powi(dim as i32)
}
