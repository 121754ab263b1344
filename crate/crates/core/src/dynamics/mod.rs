//! Time integration, Poincaré sections and periodic orbits.

pub mod cycle;
pub mod integrator;
pub mod section;

pub use cycle::{
    default_section, find_cycle, find_limit_cycle, find_limit_cycle_with, homoclinic_proximity, CycleOptions,
    CycleOutcome, CycleResult, HomoclinicRow, HomoclinicTable, NoCycleReason,
};
pub use integrator::{integrate, integrate_partial, IntegratorOptions, SolverStatus, Trajectory};
pub use section::{section_crossings, Crossing, Direction, SectionSpec};
