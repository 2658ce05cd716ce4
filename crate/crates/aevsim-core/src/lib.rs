//! Simulation core for energy management of an autonomous electric vehicle
//! in cold weather: longitudinal vehicle dynamics, single-zone cabin thermal
//! model, R134a heat-pump cycle, first-order equivalent-circuit battery with
//! lumped thermal dynamics and resistive heater, proportional low-level
//! controllers, and a system-level receding-horizon controller that splits
//! battery power between propulsion, cabin heating, and battery
//! preconditioning ahead of a charging stop.
//!
//! The crate is `no_std`-compatible (requires `alloc`); all I/O, file
//! formats, and the command line live in the companion `aevsim` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod battery;
pub mod cabin;
pub mod control;
pub mod error;
pub(crate) mod linalg;
pub mod mpc;
pub mod refrigerant;
pub mod route;
pub mod sim;
pub mod vehicle;

pub use error::CoreError;
