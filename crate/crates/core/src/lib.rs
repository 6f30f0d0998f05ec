//! Topological solutions of the skew-symmetric Chern–Simons system
//!
//! ```text
//! Δu = λ e^{v}(e^{u} − 1) + g,   Δv = λ e^{u}(e^{v} − 1) + h   on ℤⁿ
//! ```
//!
//! with `u, v → 0` at infinity, computed by monotone iteration on an
//! exhausting sequence of boxes, together with the lattice Green's function
//! and drivers that probe decay, λ-asymptotics and uniqueness.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod exhaustion;
pub mod green;
pub mod lattice;
pub mod linear_solver;
pub mod monotone;
pub mod newton;
pub mod operators;
pub mod vortex;

pub use error::{Error, Result};
pub use lattice::{LatticeBox, LatticePoint};
pub use operators::{FieldPair, LatticeFunction};
pub use vortex::{Side, VortexConfig};
