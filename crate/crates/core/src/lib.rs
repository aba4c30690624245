//! Fly a velocity-commanded quadcopter as if it were a fixed-wing.
//!
//! The crate covers the whole desk-scale loop:
//!
//! - [`mimic`]: attitude to semi-body velocity command, the turn law and the
//!   geometry that ties bank angle to turn radius.
//! - [`mapping`]: hand gestures or a stick to a deflection, and the attitude
//!   and rate strategies that turn a deflection into an attitude.
//! - [`sim`]: fixed-step kinematics with altitude repulsion, crash and
//!   respawn, gimbal pointing and platform feedback.
//! - [`course`]: waypoint courses, crossing planes and Gaussian scoring.
//! - [`linksim`]: lossy, delayed telemetry links and round-trip benches.
//! - [`pilot`]: a pursuit pilot and the closed-loop episode runner.
//! - [`session`], [`record`], [`protocol`], [`server`]: the tick loop, its
//!   log, and the TCP service a cockpit client connects to.
//!
//! ```
//! use embflight::mimic::{mimic_velocity, AttitudeCommand, MimicParams};
//!
//! let params = MimicParams::default();
//! let cmd = AttitudeCommand::clamped(10f64.to_radians(), 5f64.to_radians(), &params);
//! let vel = mimic_velocity(cmd, &params);
//! assert!((vel.norm() - params.cruise_speed).abs() < 1e-9);
//! ```

// `!(x > 0.0)` is how validation rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod course;
pub mod geometry;
pub mod linksim;
pub mod mapping;
pub mod mimic;
pub mod pilot;
pub mod protocol;
pub mod record;
pub mod server;
pub mod session;
pub mod sim;
mod units;

// The guide's chapters, so their snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/mimicry.md")]
    mod mimicry {}
    #[doc = include_str!("../../../book/src/mapping.md")]
    mod mapping {}
    #[doc = include_str!("../../../book/src/flight.md")]
    mod flight {}
    #[doc = include_str!("../../../book/src/course.md")]
    mod course {}
    #[doc = include_str!("../../../book/src/link.md")]
    mod link {}
    #[doc = include_str!("../../../book/src/pilot.md")]
    mod pilot {}
    #[doc = include_str!("../../../book/src/session.md")]
    mod session {}
}

pub use config::RunConfig;
pub use course::{Course, ScoreRecord, ScoringParams};
pub use linksim::LinkProfile;
pub use mapping::{Deflection, MappingConfig};
pub use mimic::{AttitudeCommand, MimicParams, VelocityCommand};
pub use pilot::{EpisodeConfig, EpisodeReport, Strategy};
pub use session::{InputFrame, Session, StateFrame};
pub use sim::{SafetyConfig, SimState};
