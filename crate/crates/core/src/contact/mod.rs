//! Quasi-static peg-in-hole contact model and a noisy wrist force/torque sensor.
//!
//! Pegs are extruded 2D contours (optionally several pins); holes are the same
//! contours grown by a clearance and cut into a flat surface with a 45° chamfer.
//! Contact is a penalty law on sample rings around the peg, and the peg hangs
//! from the commanded hand through a wrist spring, so pressing into contact
//! yields force rather than unbounded interpenetration.

mod contour;
mod model;
mod plant;
mod sensor;

use thiserror::Error;

pub use contour::{Contour, Vec2};
pub use model::{
    contact_wrench, sum_wrench, ContactFlags, ContactKind, ContactPoint, PegHoleModel, PegHoleSpec, Pin,
    WrenchFrame, WrenchSample,
};
pub use plant::{step, Plant, SimState, SUBSTEP_ROTATION, SUBSTEP_TRANSLATION};
pub use sensor::{sense, Sensor, SensorModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("invalid peg/hole model: {0}")]
    InvalidModel(String),
    #[error("invalid sensor model: {0}")]
    InvalidSensor(String),
}
