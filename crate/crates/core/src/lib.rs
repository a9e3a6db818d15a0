//! Constrained topological degree for semilinear differential inclusions
//! `u̇ ∈ Au + F(t, u)`, `u ∈ K`, in finite dimensions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convex;
pub mod degree;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod operator;
pub mod scenario;
pub mod setvalued;

pub use convex::{ConvexSet, Retraction, SetValue, TangentCone};
pub use degree::{DegreeCertificate, OpenRegion, Shape};
pub use error::{Error, Result};
pub use harness::{Scenario, Sweeps, VerificationReport};
pub use integrator::{Scheme, Trajectory};
pub use operator::{ForcingSignal, LinearOperator};
pub use scenario::ScenarioSpec;
pub use setvalued::{Selection, SelectionRule, SetValuedMap, TangentSelection, VectorField};
