//! Particle-based simulation and verification toolkit for measure-valued
//! dynamics driven by a common noise.
//!
//! The toolkit simulates interacting particle systems and conditional
//! McKean--Vlasov dynamics in which every particle sees the same Brownian
//! path `W` plus an independent idiosyncratic path `B`, estimates the
//! conditional law given `W` as a weighted empirical measure, and checks
//! the structural identities that the limiting measure-valued equation
//! satisfies: the weak (integral) formulation, the forward/backward duality
//! pairing, the `1/sqrt(N)` convergence of empirical laws, and the
//! Stratonovich/Ito drift correction for kernel-type diffusions.
//!
//! Modules map onto the moving parts:
//!
//! - [`measures`]: weighted empirical measures, test functions, and the
//!   bounded-Lipschitz / Wasserstein-1 metrics.
//! - [`coeffs`]: coefficient triples `(a, b, sigma)`, the derived
//!   idiosyncratic diffusion `alpha = [2a - sigma sigma^T]^(1/2)`, assumption
//!   audits, and the Stratonovich-to-Ito conversion.
//! - [`noise`] / [`simulate`]: reproducible noise bundles and the explicit
//!   Euler / Heun particle steppers.
//! - [`mckv`]: Picard iteration on the conditional-law map.
//! - [`fpe`]: pathwise weak-formulation residuals.
//! - [`duality`]: Feynman--Kac evaluation of the dual backward equation and
//!   the duality-gap / uniqueness-witness experiments.
//! - [`chaos`]: convergence-rate fits, conditional propagation-of-chaos
//!   gaps, and conditional martingale statistics.
//!
//! All randomness is counter-based (see [`rng`]): a draw is a pure function
//! of `(seed, role, index, step, lane)`, so results are bit-identical for
//! any worker count. With the `parallel` feature (default) the inner loops
//! run on rayon; disabling it leaves a dependency-free sequential build.

pub mod chaos;
pub mod coeffs;
pub mod duality;
pub mod error;
pub mod exec;
pub mod fpe;
pub mod linalg;
pub mod mckv;
pub mod measures;
pub mod noise;
pub mod rng;
pub mod simulate;

pub use error::{Result, SimError};
