//! Plane-fronted waves: construction, geodesic reduction, Killing drifts and
//! the curvature condition on the orthogonal complement of a null field.

pub mod killing;
pub mod ppcondition;
pub mod ppwave;

pub use killing::killing_conservation;
pub use ppcondition::{check_pp_curvature_condition, orthogonal_basis, PpConditionReport, PpPointResult, PP_TOLERANCE_FACTOR};
pub use ppwave::{
    build_ppwave, geodesic_riemannian_reduction_check, reduced_flow, PlaneWaveProfile, PpWaveSpec, ProfileFn,
    ReductionReport,
};
