//! Harmonic maps from the unit ball into the sphere under tangential
//! anchoring: discrete fields, energies, constrained solvers, the dyadic
//! symmetrization, density and defect diagnostics, and the energy bounds
//! of the axially symmetric problem.

pub mod analysis;
pub mod bounds;
pub mod energy;
pub mod fields;
pub mod geometry;
pub mod par;
pub mod quad;
pub mod solvers;
pub mod symmetrization;

pub use geometry::{Mat3, UnitVec3, Vec3};
