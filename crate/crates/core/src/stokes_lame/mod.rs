//! 2D reduction of the coupled Stokes-elasticity system: a fluid annulus
//! around a square elastic inclusion, Taylor-Hood for the fluid, vector P1
//! for the solid, shared interface velocities, and pressure elimination by a
//! divergence-free basis.

pub mod assemble;
pub(crate) mod elements;
pub mod mesh;
pub mod project;

pub use assemble::{assemble_saddle, DofMaps, MaterialParams, SaddleSystem};
pub use mesh::{generate_annulus_mesh, BoundaryEdge, EdgeTag, Mesh, Region};
pub use project::{project_solenoidal, project_solenoidal_with_horizon, SolenoidalReduction};
