//! Kinematic integration of the mimicking quadcopter.
//!
//! The vehicle is a point that follows its velocity command exactly. Each
//! step first updates the heading from the turn law, then moves along the
//! command rotated by the new heading (semi-implicit Euler).

use crate::course::Course;
use crate::geometry::{heading_of, semi_body_to_world, wrap_angle, Vec3};
use crate::mimic::{climb_angle, mimic_velocity, yaw_rate, AttitudeCommand, MimicParams, VelocityCommand};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

pub const DEFAULT_DT: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub position: Vec3,
    pub yaw: f64,
    /// Attitude shown to the pilot: the virtual fixed-wing's, not the quadcopter's.
    pub cmd: AttitudeCommand,
    pub vel_cmd: VelocityCommand,
    pub t: f64,
    pub crashed_count: u32,
}

impl SimState {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        SimState {
            position,
            yaw: wrap_angle(yaw),
            cmd: AttitudeCommand::LEVEL,
            vel_cmd: VelocityCommand::default(),
            t: 0.0,
            crashed_count: 0,
        }
    }

    /// World-frame velocity implied by the current command.
    pub fn world_velocity(&self) -> Vec3 {
        semi_body_to_world(
            &Vec3::new(self.vel_cmd.v_x, self.vel_cmd.v_y, self.vel_cmd.v_z),
            self.yaw,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetyConfig {
    /// Below this altitude the vertical command is pushed upward.
    pub floor_alt_m: f64,
    /// Repulsion gain, 1/s.
    pub k_rep_per_s: f64,
    /// Crash plane.
    pub ground_alt_m: f64,
    /// How far before the next waypoint a crashed vehicle reappears.
    pub respawn_dist_m: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            floor_alt_m: 20.0,
            k_rep_per_s: 1.0,
            ground_alt_m: 0.0,
            respawn_dist_m: 40.0,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.floor_alt_m > self.ground_alt_m) {
            return Err("floor_alt_m must be above ground_alt_m".into());
        }
        if !(self.k_rep_per_s >= 0.0) {
            return Err("k_rep_per_s must be non-negative".into());
        }
        if !(self.respawn_dist_m >= 0.0) {
            return Err("respawn_dist_m must be non-negative".into());
        }
        Ok(())
    }
}

/// Adds `k_rep * (floor - z)` to the vertical velocity below the floor.
pub fn apply_altitude_repulsion(z: f64, v_z: f64, safety: &SafetyConfig) -> f64 {
    if z >= safety.floor_alt_m {
        v_z
    } else {
        v_z + safety.k_rep_per_s * (safety.floor_alt_m - z)
    }
}

/// Advances the vehicle by `dt` under attitude `cmd`.
pub fn step(s: &SimState, cmd: AttitudeCommand, dt: f64, params: &MimicParams, safety: &SafetyConfig) -> SimState {
    debug_assert!(dt > 0.0 && dt <= 0.1, "dt {dt} outside (0, 0.1]");
    let cmd = AttitudeCommand::clamped(cmd.phi_ref, cmd.theta_ref, params);
    let mut vel = mimic_velocity(cmd, params);
    vel.v_z = apply_altitude_repulsion(s.position.z, vel.v_z, safety);
    let yaw = wrap_angle(s.yaw + yaw_rate(&vel, params) * dt);
    let displacement = semi_body_to_world(&Vec3::new(vel.v_x, vel.v_y, vel.v_z), yaw) * dt;
    SimState {
        position: s.position + displacement,
        yaw,
        cmd,
        vel_cmd: vel,
        t: s.t + dt,
        crashed_count: s.crashed_count,
    }
}

pub fn detect_crash(s: &SimState, safety: &SafetyConfig) -> bool {
    s.position.z <= safety.ground_alt_m
}

/// Every waypoint has been passed; there is nothing to respawn in front of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("course complete")]
pub struct CourseComplete;

/// Places the vehicle `respawn_dist` before waypoint `next_idx` along the
/// horizontal direction of its incoming segment, level and heading along it.
pub fn respawn(s: &SimState, course: &Course, next_idx: usize, respawn_dist: f64) -> Result<SimState, CourseComplete> {
    if next_idx >= course.len() {
        return Err(CourseComplete);
    }
    let target = course.center(next_idx);
    let mut seg = target - course.previous_point(next_idx);
    seg.z = 0.0;
    let dir = seg.try_normalize(1e-9).unwrap_or_else(Vec3::y);
    Ok(SimState {
        position: target - dir * respawn_dist,
        yaw: wrap_angle(heading_of(&dir)),
        cmd: AttitudeCommand::LEVEL,
        vel_cmd: VelocityCommand::default(),
        t: s.t,
        crashed_count: s.crashed_count + 1,
    })
}

/// Launch state: same placement as a respawn before the first waypoint,
/// without counting a crash.
pub fn launch_state(course: &Course, respawn_dist: f64) -> SimState {
    let mut s = respawn(&SimState::new(course.start, 0.0), course, 0, respawn_dist).expect("course has waypoints");
    s.crashed_count = 0;
    s
}

/// Camera orientation relative to the velocity-aligned frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GimbalPose {
    pub pitch: f64,
    pub yaw: f64,
}

/// Camera pitched onto the flight path plus the pilot's head offset.
pub fn gimbal_pose(vel: &VelocityCommand, head_pitch: f64, head_yaw: f64) -> GimbalPose {
    let base = if vel.norm() > 0.0 { climb_angle(vel) } else { 0.0 };
    GimbalPose {
        pitch: (base + head_pitch).clamp(-FRAC_PI_2, FRAC_PI_2),
        yaw: head_yaw,
    }
}

/// What the motion platform renders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformFeedback {
    pub roll: f64,
    pub pitch: f64,
    pub airspeed: f64,
}

pub fn feedback(s: &SimState, params: &MimicParams) -> PlatformFeedback {
    PlatformFeedback {
        roll: s.cmd.phi_ref,
        pitch: s.cmd.theta_ref,
        airspeed: params.cruise_speed,
    }
}
