//! Fixed-wing mimicry: turning a desired roll/pitch into quadcopter velocity
//! commands in the semi-body frame.
//!
//! The semi-body frame is the earth frame rotated by the vehicle yaw only:
//! `v_x` points forward along the heading, `v_y` to the right, `v_z` up.
//! The commanded vector always has the cruise speed as its norm, so the
//! quadcopter moves like a fixed-wing that cannot slow down.
//!
//! Everything in here is a pure function of its arguments.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MimicError {
    #[error("roll command {phi_ref} rad outside the +/-{phi_max} rad clamp")]
    RollOutOfRange { phi_ref: f64, phi_max: f64 },
    #[error("pitch command {theta_ref} rad outside the +/-{theta_max} rad clamp")]
    PitchOutOfRange { theta_ref: f64, theta_max: f64 },
    #[error("zero roll has no finite turn radius (straight flight)")]
    StraightFlight,
    #[error("invalid mimic parameters: {0}")]
    InvalidParams(String),
}

/// Parameters of the virtual fixed-wing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MimicParams {
    /// Constant total speed, m/s.
    #[serde(rename = "cruise_speed_mps")]
    pub cruise_speed: f64,
    /// Yaw-rate gain of the turn law.
    pub yaw_gain: f64,
    #[serde(rename = "gravity_mps2")]
    pub gravity: f64,
    #[serde(rename = "roll_max_deg", with = "crate::units::deg")]
    pub roll_max: f64,
    #[serde(rename = "pitch_max_deg", with = "crate::units::deg")]
    pub pitch_max: f64,
    /// Bound on `|v_z| / v`.
    pub vz_frac_max: f64,
    /// Bound on `|v_y| / sqrt(v^2 - v_z^2)`.
    pub vy_frac_max: f64,
}

impl Default for MimicParams {
    fn default() -> Self {
        MimicParams {
            cruise_speed: 12.0,
            yaw_gain: 0.6,
            gravity: 9.81,
            roll_max: 45f64.to_radians(),
            pitch_max: 26f64.to_radians(),
            vz_frac_max: 0.5,
            vy_frac_max: 0.9,
        }
    }
}

impl MimicParams {
    /// Roll at which the turn coefficient diverges.
    pub fn roll_singularity(&self) -> f64 {
        (FRAC_PI_2 * self.cruise_speed * self.yaw_gain / self.gravity).atan()
    }

    pub fn validate(&self) -> Result<(), MimicError> {
        let bad = |msg: String| Err(MimicError::InvalidParams(msg));
        if !(self.cruise_speed > 0.0 && self.yaw_gain > 0.0 && self.gravity > 0.0) {
            return bad("cruise speed, yaw gain and gravity must be positive".into());
        }
        if !(self.vz_frac_max > 0.0 && self.vz_frac_max < 1.0) {
            return bad(format!("vz_frac_max {} not in (0, 1)", self.vz_frac_max));
        }
        if !(self.vy_frac_max > 0.0 && self.vy_frac_max < 1.0) {
            return bad(format!("vy_frac_max {} not in (0, 1)", self.vy_frac_max));
        }
        if !(self.roll_max > 0.0 && self.roll_max < self.roll_singularity()) {
            return bad(format!(
                "roll_max {:.3} deg must be in (0, {:.3}) deg",
                self.roll_max.to_degrees(),
                self.roll_singularity().to_degrees()
            ));
        }
        if !(self.pitch_max > 0.0 && self.pitch_max.tan() <= self.vz_frac_max) {
            return bad(format!(
                "tan(pitch_max) = {:.4} exceeds vz_frac_max {}",
                self.pitch_max.tan(),
                self.vz_frac_max
            ));
        }
        Ok(())
    }
}

/// Desired roll and pitch of the virtual fixed-wing, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AttitudeCommand {
    pub phi_ref: f64,
    pub theta_ref: f64,
}

impl AttitudeCommand {
    pub const LEVEL: AttitudeCommand = AttitudeCommand {
        phi_ref: 0.0,
        theta_ref: 0.0,
    };

    /// Builds a command saturated to the roll/pitch clamps.
    pub fn clamped(phi_ref: f64, theta_ref: f64, params: &MimicParams) -> Self {
        AttitudeCommand {
            phi_ref: phi_ref.clamp(-params.roll_max, params.roll_max),
            theta_ref: theta_ref.clamp(-params.pitch_max, params.pitch_max),
        }
    }

    pub fn try_new(phi_ref: f64, theta_ref: f64, params: &MimicParams) -> Result<Self, MimicError> {
        if phi_ref.abs() > params.roll_max || phi_ref.is_nan() {
            return Err(MimicError::RollOutOfRange {
                phi_ref,
                phi_max: params.roll_max,
            });
        }
        if theta_ref.abs() > params.pitch_max || theta_ref.is_nan() {
            return Err(MimicError::PitchOutOfRange {
                theta_ref,
                theta_max: params.pitch_max,
            });
        }
        Ok(AttitudeCommand { phi_ref, theta_ref })
    }
}

/// Semi-body-frame velocity command, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub v_x: f64,
    pub v_y: f64,
    pub v_z: f64,
}

impl VelocityCommand {
    pub fn norm(&self) -> f64 {
        (self.v_x * self.v_x + self.v_y * self.v_y + self.v_z * self.v_z).sqrt()
    }

    pub fn horizontal_speed(&self) -> f64 {
        self.v_x.hypot(self.v_y)
    }
}

/// Radius and turn rate of a steady coordinated turn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnGeometry {
    pub radius: f64,
    pub turn_rate: f64,
}

/// Vertical command for a pitch, positive up. Saturates at `vz_frac_max * v`.
pub fn vz_from_pitch(theta_ref: f64, params: &MimicParams) -> f64 {
    let v = params.cruise_speed;
    let limit = params.vz_frac_max * v;
    (theta_ref.tan() * v).clamp(-limit, limit)
}

/// `A = tan(tan(phi) * g / (v * k))`, the ratio `v_y / v_x` that produces the
/// yaw rate of a fixed-wing banked at `phi`.
pub fn turn_coefficient(phi_ref: f64, params: &MimicParams) -> Result<f64, MimicError> {
    if !(phi_ref.abs() <= params.roll_max) {
        return Err(MimicError::RollOutOfRange {
            phi_ref,
            phi_max: params.roll_max,
        });
    }
    let inner = phi_ref.tan() * params.gravity / (params.cruise_speed * params.yaw_gain);
    Ok(inner.tan())
}

/// Velocity command reproducing a fixed-wing flying at the given attitude.
///
/// `v_z` comes from the pitch, then the remaining horizontal speed
/// `h = sqrt(v^2 - v_z^2)` is split between forward and lateral so that
/// `v_y / v_x = A`: `v_y = h * A / sqrt(1 + A^2)`. Both `v_z` and `v_y` are
/// saturated right after they are computed, and `v_x` closes the speed budget.
///
/// Commands outside the attitude clamps are saturated first.
pub fn mimic_velocity(cmd: AttitudeCommand, params: &MimicParams) -> VelocityCommand {
    let cmd = AttitudeCommand::clamped(cmd.phi_ref, cmd.theta_ref, params);
    let v = params.cruise_speed;
    let v_z = vz_from_pitch(cmd.theta_ref, params);
    let horizontal = (v * v - v_z * v_z).max(0.0).sqrt();
    // Cannot fail: the roll was clamped above.
    let a = turn_coefficient(cmd.phi_ref, params).unwrap_or(0.0);
    let vy_limit = params.vy_frac_max * horizontal;
    let v_y = (horizontal * a / (1.0 + a * a).sqrt()).clamp(-vy_limit, vy_limit);
    let v_x = (v * v - v_y * v_y - v_z * v_z).max(0.0).sqrt();
    VelocityCommand { v_x, v_y, v_z }
}

/// Heading rate `k * atan(v_y / v_x)` commanded alongside a velocity.
pub fn yaw_rate(vel: &VelocityCommand, params: &MimicParams) -> f64 {
    assert!(vel.v_x > 0.0, "forward velocity must stay positive, got {}", vel.v_x);
    params.yaw_gain * (vel.v_y / vel.v_x).atan()
}

/// Radius `v^2 / (g * tan|phi|)` of the coordinated turn at bank `phi`.
pub fn steady_turn_radius(phi_ref: f64, params: &MimicParams) -> Result<f64, MimicError> {
    if phi_ref.abs() > params.roll_max {
        return Err(MimicError::RollOutOfRange {
            phi_ref,
            phi_max: params.roll_max,
        });
    }
    if phi_ref == 0.0 {
        return Err(MimicError::StraightFlight);
    }
    let v = params.cruise_speed;
    Ok(v * v / (params.gravity * phi_ref.abs().tan()))
}

pub fn turn_geometry(phi_ref: f64, params: &MimicParams) -> Result<TurnGeometry, MimicError> {
    let radius = steady_turn_radius(phi_ref, params)?;
    Ok(TurnGeometry {
        radius,
        turn_rate: params.cruise_speed / radius,
    })
}

/// Flight-path angle of a velocity: the gimbal pitch that keeps the camera on
/// the velocity vector.
pub fn climb_angle(vel: &VelocityCommand) -> f64 {
    vel.v_z.atan2(vel.horizontal_speed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p() -> MimicParams {
        MimicParams::default()
    }

    #[test]
    fn defaults_are_valid() {
        p().validate().unwrap();
        assert_relative_eq!(p().roll_singularity().to_degrees(), 49.0618, epsilon = 1e-3);
    }

    #[test]
    fn validate_rejects_roll_past_singularity() {
        let mut params = p();
        params.roll_max = 50f64.to_radians();
        assert!(params.validate().is_err());
        params.roll_max = 45f64.to_radians();
        params.pitch_max = 30f64.to_radians();
        assert!(params.validate().is_err());
    }

    #[test]
    fn vz_examples() {
        assert_eq!(vz_from_pitch(0.0, &p()), 0.0);
        assert_relative_eq!(
            vz_from_pitch(5f64.to_radians(), &p()),
            1.0498639623110881,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            vz_from_pitch(-5f64.to_radians(), &p()),
            -1.0498639623110881,
            epsilon = 1e-12
        );
        // Past the pitch clamp the vertical command saturates.
        assert_eq!(vz_from_pitch(1.2, &p()), 6.0);
    }

    #[test]
    fn turn_coefficient_examples() {
        assert_eq!(turn_coefficient(0.0, &p()).unwrap(), 0.0);
        assert_relative_eq!(
            turn_coefficient(10f64.to_radians(), &p()).unwrap(),
            0.24497693231935025,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            turn_coefficient(15f64.to_radians(), &p()).unwrap(),
            0.38221463050862875,
            epsilon = 1e-12
        );
        assert!(matches!(
            turn_coefficient(46f64.to_radians(), &p()),
            Err(MimicError::RollOutOfRange { .. })
        ));
    }

    #[test]
    fn mimic_examples() {
        let level = mimic_velocity(AttitudeCommand::LEVEL, &p());
        assert_eq!(
            level,
            VelocityCommand {
                v_x: 12.0,
                v_y: 0.0,
                v_z: 0.0
            }
        );

        let cmd = AttitudeCommand::try_new(10f64.to_radians(), 5f64.to_radians(), &p()).unwrap();
        let vel = mimic_velocity(cmd, &p());
        assert_relative_eq!(vel.v_x, 11.61066276173577, epsilon = 1e-9);
        assert_relative_eq!(vel.v_y, 2.844344545564544, epsilon = 1e-9);
        assert_relative_eq!(vel.v_z, 1.0498639623110881, epsilon = 1e-9);
        assert_relative_eq!(vel.norm(), 12.0, max_relative = 1e-9);

        let mirrored = mimic_velocity(
            AttitudeCommand {
                phi_ref: -cmd.phi_ref,
                ..cmd
            },
            &p(),
        );
        assert_eq!(mirrored.v_x, vel.v_x);
        assert_eq!(mirrored.v_z, vel.v_z);
        assert_eq!(mirrored.v_y, -vel.v_y);
    }

    #[test]
    fn lateral_clamp_engages_near_max_roll() {
        let vel = mimic_velocity(
            AttitudeCommand {
                phi_ref: p().roll_max,
                theta_ref: 0.0,
            },
            &p(),
        );
        assert_relative_eq!(vel.v_y, 0.9 * 12.0, epsilon = 1e-12);
        assert!(vel.v_x > 0.0);
        assert_relative_eq!(vel.norm(), 12.0, max_relative = 1e-12);
    }

    #[test]
    fn yaw_rate_examples() {
        let params = p();
        assert_eq!(
            yaw_rate(
                &VelocityCommand {
                    v_x: 12.0,
                    v_y: 0.0,
                    v_z: 0.0
                },
                &params
            ),
            0.0
        );
        let vel = mimic_velocity(
            AttitudeCommand {
                phi_ref: 10f64.to_radians(),
                theta_ref: 5f64.to_radians(),
            },
            &params,
        );
        assert_relative_eq!(yaw_rate(&vel, &params), 0.14414730672917014, epsilon = 1e-9);
        let vel = mimic_velocity(
            AttitudeCommand {
                phi_ref: 15f64.to_radians(),
                theta_ref: 0.0,
            },
            &params,
        );
        assert_relative_eq!(yaw_rate(&vel, &params), 0.2190484648124428, epsilon = 1e-12);
    }

    #[test]
    #[should_panic(expected = "forward velocity")]
    fn yaw_rate_rejects_zero_forward_speed() {
        yaw_rate(
            &VelocityCommand {
                v_x: 0.0,
                v_y: 1.0,
                v_z: 0.0,
            },
            &p(),
        );
    }

    #[test]
    fn turn_radius_examples() {
        let params = p();
        assert_relative_eq!(
            steady_turn_radius(15f64.to_radians(), &params).unwrap(),
            54.78239717532297,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            steady_turn_radius(-10f64.to_radians(), &params).unwrap(),
            83.24817349897555,
            epsilon = 1e-9
        );
        assert_eq!(steady_turn_radius(0.0, &params), Err(MimicError::StraightFlight));
        let at_max = steady_turn_radius(params.roll_max, &params).unwrap();
        assert_relative_eq!(at_max, 14.67889908256881, epsilon = 1e-9);
        let geo = turn_geometry(15f64.to_radians(), &params).unwrap();
        assert_relative_eq!(geo.turn_rate * geo.radius, 12.0, epsilon = 1e-12);
    }

    #[test]
    fn climb_angle_examples() {
        assert_eq!(
            climb_angle(&VelocityCommand {
                v_x: 12.0,
                v_y: 0.0,
                v_z: 0.0
            }),
            0.0
        );
        assert_relative_eq!(
            climb_angle(&VelocityCommand {
                v_x: 3.0,
                v_y: 4.0,
                v_z: 5.0
            }),
            std::f64::consts::FRAC_PI_4,
            epsilon = 1e-15
        );
        let vel = VelocityCommand {
            v_x: 11.61066276173577,
            v_y: 2.844344545564544,
            v_z: 1.0498639623110881,
        };
        assert_relative_eq!(climb_angle(&vel), 0.08760065997320289, epsilon = 1e-12);
    }

    #[test]
    fn params_serialize_in_degrees() {
        let json = serde_json::to_value(p()).unwrap();
        assert_relative_eq!(json["roll_max_deg"].as_f64().unwrap(), 45.0, epsilon = 1e-12);
        let back: MimicParams = serde_json::from_value(json).unwrap();
        assert_relative_eq!(back.pitch_max, p().pitch_max, epsilon = 1e-15);
    }
}
