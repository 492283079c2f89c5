//! Staircase randomized response for location data under local differential privacy.
//!
//! Clients encode a position as a quadkey, perturb it with a distance-graded
//! staircase mechanism and submit the perturbed index; the collector counts
//! submissions per epoch and recovers the location distribution.

pub mod baseline;
pub mod config;
pub mod domain;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod geo;
pub mod hadamard;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod nav;
pub mod od;
pub mod service;
pub mod srr;
pub mod synth;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use domain::{GroupPartition, LocationDomain};
pub use error::{Error, Result};
pub use estimation::{DistributionEstimate, Estimator, ObservedFrequencies};
pub use geo::{EncodedLocation, GeoPoint};
pub use hadamard::HadamardPlan;
pub use model::PerturbationModel;
pub use srr::{SchemeTable, StaircaseScheme};
