//! Simulation core for magnetically actuated crawling millirobots: rig field,
//! single-unit gait, spike-foot penetration, convoys, reference validation and
//! a tick-driven steering session.

// `!(x > 0.0)` is how NaN gets rejected alongside the range check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convoy;
pub mod error;
pub mod foot;
pub mod gait;
pub mod harness;
pub mod magnetics;
pub mod teleop;

pub use error::{Result, SimError};
pub use gait::{Foot, GaitParams, GaitState, UnitGeometry};
pub use magnetics::{ActuationSetup, DipoleSource, FieldOrientation, FieldSample, Surface};
pub use nalgebra::Vector3;
