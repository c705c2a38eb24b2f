//! Straightening of Beltrami fields by gluing similarity surfaces.
//!
//! A measurable field `μ` with `‖μ‖_∞ < 1` is discretized into cell averages,
//! each cell is deformed by the real-affine chart `z ↦ z + μ_j·z̄`, and the
//! resulting parallelograms are glued along shared edges by complex-affine
//! maps. The glued surface carries a similarity structure whose corner
//! singularities are encoded by a rational Christoffel symbol
//! `ζ = Σ res_k/(z − z_k)`; solving a generalized accessory-parameter problem
//! for the pole positions uniformizes the surface over the sphere and yields
//! an approximate straightening map for `μ`. The crate also provides the
//! parallel-transport, geodesic, and measure-limit tooling used to study the
//! refinement limit of these discrete structures.
//!
//! Modules mirror the pipeline:
//!
//! * [`fields`] — Beltrami fields and their cell-average discretization;
//! * [`gluing`] — polygons, edge pairings, vertex cycles, grid complexes;
//! * [`christoffel`] — rational symbols, pullbacks, normal forms;
//! * [`transport`] — branch-tracked line integrals, developed charts,
//!   geodesics and saddle connections;
//! * [`uniformize`] — the accessory-parameter problem and the straightening
//!   map it produces;
//! * [`limits`] — refinement-limit densities, atomic measures, and the limit
//!   connection.
//!
//! All numerics are `f64`; the scalar type is fixed because every tolerance,
//! quadrature table, and interchange format in the crate is calibrated to
//! double precision.

pub mod affine;
pub mod christoffel;
pub mod defaults;
pub mod error;
pub mod fields;
pub mod gluing;
pub mod limits;
pub mod transport;
pub mod uniformize;
pub mod wire;

/// The complex scalar used throughout the crate.
pub type Complex = num_complex::Complex64;

pub use error::{Error, Result};

/// Shorthand constructor for [`Complex`] values.
#[inline]
pub fn cx(re: f64, im: f64) -> Complex {
    Complex::new(re, im)
}

/// The imaginary unit.
pub const I: Complex = Complex::new(0.0, 1.0);
