//! Numerical bifurcation analysis of an SIU epidemic model with treatment and
//! prevalence-dependent recruitment into a core group.
//!
//! The crate covers equilibria and their stability ([`equilibria`]), time
//! integration and periodic orbits ([`dynamics`]), one-parameter scans and
//! critical points ([`bifurcation`]), and the quadratic normal form at the
//! double-zero organizing point ([`normal_form`]).

pub mod bifurcation;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod exec;
pub mod export;
pub mod linalg;
pub mod model;
pub mod normal_form;
pub mod params;
pub(crate) mod serde_complex;

pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{CoreState, FullState, VectorField};
pub use params::{ModelParams, ParamName};
