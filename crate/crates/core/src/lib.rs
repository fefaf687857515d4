//! Geometric shock-formation laboratory for a coupled fast/slow quasilinear
//! wave system in 1+2 dimensions.
//!
//! The fast wave Ψ solves □_{g(Ψ)}Ψ = 𝔐Q + 𝔑₁·∂Ψ + 𝔑₂ and the slow wave is
//! carried by the first-order array W = (w, w0, w1, w2). Solutions are
//! evolved in eikonal (geometric) coordinates (t, u, θ), where the solution
//! stays smooth while the inverse foliation density μ goes to zero.
//!
//! Modules:
//! - [`metric`]: the system and its structural checks
//! - [`frame`]: null frame, connection coefficients, Jacobian
//! - [`plane`]: plane-symmetric method-of-characteristics solver
//! - [`geo2d`]: full 1+2 solver in geometric coordinates
//! - [`cartesian`]: Cartesian reference solver for cross-validation
//! - [`diagnostics`]: energies, fluxes, audits and shock fits
//! - [`config`], [`harness`]: run configuration and orchestration

pub mod metric;
pub mod frame;
pub mod data;
pub mod diagnostics;
pub mod numerics;
pub mod plane;
pub mod geo2d;
pub mod cartesian;
pub mod config;
pub mod harness;
pub mod rng;
