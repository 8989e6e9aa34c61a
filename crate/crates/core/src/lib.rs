//! Hybrid High-Order discretization of degenerate Leray-Lions problems
//! `-div sigma(x, grad u) = f` with Carreau-Yasuda type fluxes, `p in (1, 2]`.

pub mod analysis;
pub mod assembly;
pub mod cases;
pub mod error;
pub mod flux;
pub mod harness;
pub mod local_ops;
pub mod mesh;
pub mod par;
pub mod polyquad;

pub use error::{Error, Result};
pub use mesh::{Mesh, Vec2};
