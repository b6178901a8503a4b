//! Simulation, scoring and verification of continuum-of-urns schemes.
//!
//! A continuum-of-urns scheme runs an independent exchangeable urn (an EPPF
//! driven sequential scheme) at every atom of an i.i.d. Bernoulli driving
//! sequence. The resulting rows `X_1, X_2, ...` are exchangeable Bernoulli
//! processes directed by a generalized beta process, and their location-free
//! combinatorial structure is an Indian-buffet-type feature allocation.
//!
//! Module map:
//!
//! * [`eppf`]: partition models, EPPFs, predictive rules and the integrals
//!   `f(n, k)` of the structural distribution.
//! * [`urn`]: sequential urn simulation, stick-breaking frequencies and the
//!   fixed-atom kernels.
//! * [`measures`]: hazard measures, Bernoulli and Poisson processes on `[0, 1)`.
//! * [`cou`]: the two row samplers, the stick-breaking constructions of the
//!   directing measure, truncation bounds and posterior sampling.
//! * [`combinatorics`]: feature allocations, orderings and exact pmfs.
//! * [`verify`]: statistical suites wiring the samplers against the formulas.
//!
//! Monte Carlo replicas are fanned out with rayon when the `parallel` feature
//! is enabled (the default) and run sequentially otherwise. Each replica draws
//! from its own ChaCha stream derived from `(seed, replica index)`, so results
//! do not depend on the execution order.

pub mod combinatorics;
pub mod cou;
pub mod eppf;
mod error;
pub mod measures;
pub mod parallel;
pub mod rng;
mod special;
pub mod stats;
pub mod urn;
pub mod verify;

pub use combinatorics::{FeatureAllocation, History, LabeledMatrix};
pub use cou::{AtomicHazardRealization, CouState};
pub use eppf::{Composition, PartitionModel, StructuralDistribution};
pub use error::{Error, Result};
pub use measures::{BernoulliRealization, HazardMeasureSpec};
pub use urn::{FrequencySequence, UrnState};
