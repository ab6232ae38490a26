//! Risk certificates for multi-criteria scenario-based decisions.
//!
//! The crate is layered bottom-up: [`numerics`] holds the ψ family and its
//! root finder, [`allocations`] turns λ-allocations into region functions and
//! scalar interval bounds, [`certificates`] assembles a-posteriori and
//! a-priori certificates, and [`scenario`] runs decision problems and Monte
//! Carlo coverage checks against them. [`export`] writes JSON and CSV.

pub mod allocations;
pub mod certificates;
pub mod error;
pub mod export;
pub mod numerics;
pub mod scenario;

pub use allocations::{AllocationSpec, IntervalBound, Scheme, IntervalChoice};
pub use certificates::{JointRiskCertificate, Method, RegionCertificate, RegionKind, RegionPayload};
pub use error::{Error, Result};
pub use numerics::{MultiIndex, PsiSpec, RootPair, DEFAULT_TOLERANCE};
