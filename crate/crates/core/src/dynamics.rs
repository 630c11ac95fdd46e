//! Dynamic side of the transport problem: test functions with flow
//! gradients, vector fields on `Ω × R^d`, characteristic flows, displacement
//! geodesics and their kinetic action, and the weak continuity-equation
//! residual.

pub mod bumps;
pub mod characteristics;
pub mod curve;
pub mod test_function;
pub mod vector_field;

pub use bumps::{SpaceBump, TimeBump};
pub use characteristics::{integrate_characteristics, uniform_grid, CharacteristicPath};
pub use curve::{
    action, build_geodesic, ce_residual, extract_xi_t, paths_to_measure, pushforward_flow,
    superposition_sample, weak_continuity_bound, CurveOfMeasures, InterpolationRule, SampledPath,
    WeakContinuityCheck,
};
pub use test_function::{
    audit_derivative_bound, grad_omega, make_test_function, GradMode, MollifierQuadrature,
    TestFunction,
};
pub use vector_field::{FieldAudit, VectorField};
