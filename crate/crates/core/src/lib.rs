//! Discrete coagulation with a constant source of small clusters.
//!
//! The crate simulates the truncated system
//! `dc_n/dt = ½ Σ_{ℓ<n} K(n-ℓ,ℓ) c_{n-ℓ} c_ℓ - c_n Σ_ℓ K(n,ℓ) c_ℓ + η_n`
//! for homogeneous kernels, classifies the long-time regime of `(γ, λ)`,
//! evaluates inner-region and self-similar asymptotics, and provides
//! diagnostics and independent oracles to compare them with simulations.

pub mod diagnostics;
pub mod interface;
pub mod kernel;
pub mod numerics;
pub mod ode;
pub mod oracle;
pub mod quadrature;
pub mod quasistationary;
pub mod regimes;
pub mod selfsimilar;

pub use kernel::{KernelError, KernelSpec, Shape};
pub use ode::{RhsMode, RunConfig, SourceSpec, StateVector};
