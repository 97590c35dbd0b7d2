//! Event-driven simulation of symmetric exclusion processes on finite graphs
//! with inhomogeneous conductances, together with exact one-particle
//! computations and continuum references for homogenization and
//! hydrodynamic-limit checks.

pub mod conductance;
pub mod config;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod harris;
pub mod kernel;
pub mod pde;
pub mod seeding;

pub use conductance::{harmonic_mean, ConductanceField, FieldKind};
pub use error::{Error, Result};
pub use graph::{build_torus_1d, build_torus_2d, GraphInstance, Scaling, TestFunction};
pub use harris::{sample_clocks, ClockSampler, EventLog, Occupancy};
pub use kernel::{semigroup_apply, transition_matrix, TransitionKernel};
pub use pde::{heat_solve, DensityProfile, InitialProfile};
