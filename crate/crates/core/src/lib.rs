//! Isogeometric simulation of geometrically nonlinear Cosserat rods with
//! unconstrained directors of arbitrary order, including frictionless
//! lateral contact enforced by a penalty method with an active-set strategy.
//!
//! The crate is organized along the pipeline:
//!
//! * [`splines`] — B-spline/NURBS bases on clamped and periodic knot
//!   vectors, curve evaluation up to second derivatives, and least-squares
//!   fitting of smooth closed profile curves.
//! * [`kinematics`] — director-expansion kinematics: the monomial operator
//!   mapping generalized directors to material points, covariant bases,
//!   Green-Lagrange strain, lateral-surface frames and cross-section data.
//! * [`material`] — hyperelastic constitutive models (Neo-Hookean,
//!   St.Venant-Kirchhoff) in convective coordinates.
//! * [`element`] — rod element integrals: internal force, consistent
//!   tangent, external loads, follower end moments, weak Dirichlet patches.
//! * [`contact`] — Gauss-point-to-surface contact: global/local closest
//!   point projection, gap evaluation, contact residual and stiffness,
//!   active-set updates.
//! * [`solver`] — global assembly, load stepping, Newton iteration and the
//!   outer active-set loop.
//! * [`scenario`] — serializable problem definitions plus built-in presets.
//! * [`output`] — post-processing series and CSV/VTK emission.

pub mod contact;
pub mod element;
pub mod error;
pub mod kinematics;
pub mod material;
pub mod output;
pub mod quadrature;
pub mod scenario;
pub mod solver;
pub mod splines;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
