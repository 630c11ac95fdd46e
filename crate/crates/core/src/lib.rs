//! Transport distances between stationarized periodic measures on the flat torus.
//!
//! The library works with two families of translation-invariant measures on a
//! cubic torus of side `L`:
//!
//! - weighted periodic point configurations, and
//! - periodic densities sampled on a uniform grid.
//!
//! For a pair of such measures with equal intensity it computes the p-cost of
//! the optimal equivariant coupling (an exact finite transport problem with
//! quotient cost), the balancing kernel realizing that coupling through the
//! Palm measures, the induced Wasserstein problem on `Ω × R^d`, and the
//! displacement geodesic whose kinetic action reproduces the static cost. A
//! separate staggered-grid solver computes the same quadratic cost for the
//! density family by minimizing the dynamic action directly, which gives an
//! independent cross-check of the static value.
//!
//! Modules map onto the layers of that construction:
//!
//! | module       | contents                                                           |
//! |--------------|--------------------------------------------------------------------|
//! | [`torus`]    | geometry, configurations, densities, Palm measures, Campbell check |
//! | [`transport`]| quotient costs, exact simplex / Sinkhorn solvers, balancing kernels|
//! | [`product`]  | measures and couplings on `Ω × R^d`, the induced Wasserstein cost  |
//! | [`dynamics`] | test functions, vector fields, characteristics, geodesics, action  |
//! | [`bb`]       | staggered-grid dynamic solver for periodic densities (p = 2)       |
//! | [`fixtures`] | seeded generators for benchmark and test instances                 |
//! | [`io`]       | model-file reading and writing                                     |
//!
//! All floating point state is `f64`, all types are immutable after
//! construction, and every solver is deterministic for fixed inputs.

#![forbid(unsafe_code)]

pub mod bb;
pub mod dynamics;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod product;
pub mod torus;
pub mod transport;

pub use error::{Error, Result};
pub use torus::{
    PalmMeasure, PeriodicDensity, PeriodicPointConfiguration, StationaryModel, TorusGeometry,
    TorusPoint,
};
pub use transport::{BalancingKernel, QuotientCostMatrix, StaticSolveReport, TransportPlan};
