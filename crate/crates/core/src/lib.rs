//! Steady shapes, stability and mode-transition planning for a chain
//! spinning about a vertical axis with its bottom end pinned.

pub mod io;
pub mod kinematics;
pub mod planner;
pub mod simulator;
pub mod stability;

pub use kinematics::{
    ChainParams, Configuration, ControlInput, CubeLimits, KinematicsError, Orientation,
    ParamPoint, ShapeSamples,
};
