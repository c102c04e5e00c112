//! Exact reconstruction of binary images from ray sums with a simulated
//! relaxation-based dynamical Ising machine (the V₂ model).
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: images, ray systems, instances, spin states, run reports.
//! * [`builder`]: grid ray systems, projections, instance assembly, λ weights.
//! * [`dynamics`]: vector-charge equations of motion, Euler integration with
//!   the phase-wrap rule, agitations and the machine loop.
//! * [`analysis`]: cut functions, residual charges, clusters, oracles, fixtures.
//! * [`localsearch`]: the greedy 1-opt baseline.
//! * [`harness`]: success-probability experiments and CSV tables.
//! * [`io`]: text formats for instances and images.
//!
//! Restart sampling runs on rayon when the `parallel` feature is enabled
//! (the default) and falls back to a sequential loop otherwise; see [`exec`].

pub mod analysis;
pub mod builder;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod harness;
pub mod io;
pub mod localsearch;
pub mod model;
pub mod seed;

pub use error::{Error, Result};
pub use model::{
    BinaryImage, MachineConfig, RaySystem, RunReport, SpinState, TomographyInstance,
    VectorChargeTable,
};
