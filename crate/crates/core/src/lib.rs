//! Numerical workbench for conformal geometry: Taylor jets, metric
//! expressions, curvature, the normal tractor connection and estimators for
//! the dimensions of almost Einstein scales and normal conformal Killing fields.

pub mod analysis;
pub mod curvature;
pub mod expr;
pub mod geometry;
pub mod jets;
pub mod tractor;
