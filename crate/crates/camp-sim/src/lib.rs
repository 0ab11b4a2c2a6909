//! Finite-size recovery: structured sensing operators, CAMP/AMP/OAMP
//! iterations, Gaussianity diagnostics and the seeded experiment harness.

pub mod algorithms;
pub mod fwht;
pub mod gaussianity;
pub mod harness;
pub mod instance;
pub mod reference;
pub mod sensing;

pub use algorithms::{prepare, registry, AlgorithmContext, RecoveryAlgorithm, RunOptions, RunTrace};
pub use instance::{derive_seed, generate_instance, Instance};
pub use sensing::{SensingInstance, SensingKind};
