//! Canonical solutions of the ∂̄-equation on planar domains and their products.

pub mod appendix;
pub mod cli;
pub mod error;
pub mod field;
pub mod forms;
pub mod geometry;
pub mod greens;
pub mod kernels;
pub mod oracle;
pub mod product;
pub mod report;
pub mod sampling;
pub mod solve1d;

pub use error::{Error, Result};
pub use geometry::{
    make_domain, AreaQuadrature, BoundaryQuadrature, ComplexPoint, Curve, DomainDescriptor,
    ExhaustionStep, PlanarDomain, PolarRule,
};
pub use report::{EstimateReport, InequalityId};
