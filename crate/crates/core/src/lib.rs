//! Steady kinetic heat transfer between two diffuse thermal walls.
//!
//! A rarefied gas fills the slab x ∈ (0,1); the walls re-emit particles as
//! flux-matched Maxwellians at temperatures θ₀ and θ₁. The crate provides
//!
//! * a discrete-velocity hard-sphere Boltzmann solver for the steady slab
//!   problem (`kinetic`),
//! * the Navier–Stokes description of the bulk with temperature-jump wall
//!   conditions (`ns_profile`), whose jump coefficient is extracted from a
//!   half-space Milne problem (`milne`),
//! * the matched-asymptotics construction (Chapman–Enskog corrector,
//!   Knudsen layers, higher-order mass fix) that approximates the kinetic
//!   solution to O(ε^{1+α}) in the Knudsen number ε (`expansion`),
//! * norms and ε-sweep studies quantifying the agreement (`diagnostics`).
//!
//! All velocity integrals run through [`grid::VelocityGrid`]; all collision
//! machinery lives in [`collision`].

pub mod collision;
pub mod diagnostics;
pub mod error;
pub mod expansion;
pub mod grid;
pub mod io;
pub mod kinetic;
pub mod maxwell;
pub mod milne;
pub mod ns_profile;
pub mod numerics;

pub use error::CoreError;
pub use grid::{SpatialGrid, SphereQuadrature, VelocityGrid};
pub use maxwell::{DistributionField, MacroState, WeightSpec};
pub use ns_profile::{NsProfile, SlipCoefficients};
