//! Pilot input to attitude command.
//!
//! Two input sources produce a normalized [`Deflection`]: a pair of hand
//! pronation angles, or a two-axis stick. Two strategies then turn the
//! deflection into an attitude: [`attitude_strategy`] maps it to an angle
//! directly, [`RateStrategyState::step`] maps it to an angular rate that the
//! attitude integrates.

use crate::mimic::{AttitudeCommand, MimicParams};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Hand pronation/supination angles, radians. Positive tilts the leading
/// edge up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HandPose {
    pub left: f64,
    pub right: f64,
}

impl HandPose {
    pub fn clamped(left: f64, right: f64) -> Self {
        HandPose {
            left: left.clamp(-FRAC_PI_2, FRAC_PI_2),
            right: right.clamp(-FRAC_PI_2, FRAC_PI_2),
        }
    }
}

/// Normalized pitch/roll deflection in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Deflection {
    pub pitch_axis: f64,
    pub roll_axis: f64,
}

impl Deflection {
    pub const NEUTRAL: Deflection = Deflection {
        pitch_axis: 0.0,
        roll_axis: 0.0,
    };

    pub fn new(pitch_axis: f64, roll_axis: f64) -> Self {
        Deflection {
            pitch_axis: pitch_axis.clamp(-1.0, 1.0),
            roll_axis: roll_axis.clamp(-1.0, 1.0),
        }
    }
}

impl std::ops::Neg for Deflection {
    type Output = Deflection;
    fn neg(self) -> Deflection {
        Deflection {
            pitch_axis: -self.pitch_axis,
            roll_axis: -self.roll_axis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MappingConfig {
    /// Hand angle that gives a full-scale axis.
    #[serde(rename = "hand_full_scale_deg", with = "crate::units::deg")]
    pub hand_full_scale: f64,
    #[serde(rename = "rate_max_roll_dps", with = "crate::units::deg")]
    pub rate_max_roll: f64,
    #[serde(rename = "rate_max_pitch_dps", with = "crate::units::deg")]
    pub rate_max_pitch: f64,
    /// Time constant of the rate response, s.
    #[serde(rename = "rate_tau_s")]
    pub rate_tau: f64,
    pub deadband: f64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        MappingConfig {
            hand_full_scale: 30f64.to_radians(),
            rate_max_roll: 60f64.to_radians(),
            rate_max_pitch: 60f64.to_radians(),
            rate_tau: 0.3,
            deadband: 0.05,
        }
    }
}

impl MappingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.hand_full_scale > 0.0) {
            return Err("hand_full_scale must be positive".into());
        }
        if !(self.rate_tau > 0.0) {
            return Err("rate_tau must be positive".into());
        }
        if !(self.rate_max_roll >= 0.0 && self.rate_max_pitch >= 0.0) {
            return Err("rate limits must be non-negative".into());
        }
        if !(0.0..0.2).contains(&self.deadband) {
            return Err(format!("deadband {} not in [0, 0.2)", self.deadband));
        }
        Ok(())
    }
}

fn deadband(x: f64, band: f64) -> f64 {
    if x.abs() < band {
        0.0
    } else {
        x
    }
}

/// Both hands up pitches up; right hand up with left hand down rolls right.
pub fn hands_to_deflection(pose: HandPose, cfg: &MappingConfig) -> Deflection {
    let scale = 2.0 * cfg.hand_full_scale;
    let pitch = ((pose.left + pose.right) / scale).clamp(-1.0, 1.0);
    let roll = ((pose.right - pose.left) / scale).clamp(-1.0, 1.0);
    Deflection {
        pitch_axis: deadband(pitch, cfg.deadband),
        roll_axis: deadband(roll, cfg.deadband),
    }
}

/// Stick x is roll, stick y is pitch.
pub fn stick_to_deflection(stick_x: f64, stick_y: f64, cfg: &MappingConfig) -> Deflection {
    Deflection {
        pitch_axis: deadband(stick_y.clamp(-1.0, 1.0), cfg.deadband),
        roll_axis: deadband(stick_x.clamp(-1.0, 1.0), cfg.deadband),
    }
}

/// Deflection commands the angle directly, scaled to the clamps.
pub fn attitude_strategy(d: Deflection, params: &MimicParams) -> AttitudeCommand {
    AttitudeCommand {
        phi_ref: d.roll_axis.clamp(-1.0, 1.0) * params.roll_max,
        theta_ref: d.pitch_axis.clamp(-1.0, 1.0) * params.pitch_max,
    }
}

/// Attitude and rate carried by the rate strategy between ticks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateStrategyState {
    pub phi: f64,
    pub theta: f64,
    pub rate_phi: f64,
    pub rate_theta: f64,
}

impl RateStrategyState {
    pub fn attitude(&self) -> AttitudeCommand {
        AttitudeCommand {
            phi_ref: self.phi,
            theta_ref: self.theta,
        }
    }

    /// Advances by `dt`. Each rate follows a first-order lag toward
    /// `axis * rate_max`, discretized exactly under a held deflection; the
    /// angle then integrates the new rate and stops dead at its clamp.
    pub fn step(&self, d: Deflection, dt: f64, cfg: &MappingConfig, params: &MimicParams) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        let blend = 1.0 - (-dt / cfg.rate_tau).exp();
        let (phi, rate_phi) = axis_step(
            self.phi,
            self.rate_phi,
            d.roll_axis.clamp(-1.0, 1.0) * cfg.rate_max_roll,
            blend,
            dt,
            params.roll_max,
        );
        let (theta, rate_theta) = axis_step(
            self.theta,
            self.rate_theta,
            d.pitch_axis.clamp(-1.0, 1.0) * cfg.rate_max_pitch,
            blend,
            dt,
            params.pitch_max,
        );
        RateStrategyState {
            phi,
            theta,
            rate_phi,
            rate_theta,
        }
    }
}

fn axis_step(angle: f64, rate: f64, target: f64, blend: f64, dt: f64, limit: f64) -> (f64, f64) {
    let rate = rate + (target - rate) * blend;
    let angle = angle + rate * dt;
    if angle > limit {
        (limit, 0.0)
    } else if angle < -limit {
        (-limit, 0.0)
    } else {
        (angle, rate)
    }
}

/// Free-function form of [`RateStrategyState::step`].
pub fn rate_strategy_step(
    d: Deflection,
    s: &RateStrategyState,
    dt: f64,
    cfg: &MappingConfig,
    params: &MimicParams,
) -> RateStrategyState {
    s.step(d, dt, cfg, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gesture_decomposition() {
        let cfg = MappingConfig::default();
        let h = cfg.hand_full_scale;
        assert_eq!(hands_to_deflection(HandPose::default(), &cfg), Deflection::NEUTRAL);
        assert_eq!(
            hands_to_deflection(HandPose { left: h, right: h }, &cfg),
            Deflection {
                pitch_axis: 1.0,
                roll_axis: 0.0
            }
        );
        assert_eq!(
            hands_to_deflection(HandPose { left: -h, right: h }, &cfg),
            Deflection {
                pitch_axis: 0.0,
                roll_axis: 1.0
            }
        );
        // Beyond full scale saturates.
        let d = hands_to_deflection(HandPose { left: 1.5, right: 1.5 }, &cfg);
        assert_eq!(d.pitch_axis, 1.0);
    }

    #[test]
    fn stick_examples() {
        let cfg = MappingConfig {
            deadband: 0.1,
            ..Default::default()
        };
        assert_eq!(stick_to_deflection(0.0, 0.0, &cfg), Deflection::NEUTRAL);
        assert_eq!(
            stick_to_deflection(1.0, 0.0, &cfg),
            Deflection {
                pitch_axis: 0.0,
                roll_axis: 1.0
            }
        );
        assert_eq!(stick_to_deflection(0.05, 0.0, &cfg), Deflection::NEUTRAL);
        assert_eq!(stick_to_deflection(0.0, -0.5, &cfg).pitch_axis, -0.5);
    }

    #[test]
    fn attitude_examples() {
        let params = MimicParams::default();
        assert_eq!(attitude_strategy(Deflection::NEUTRAL, &params), AttitudeCommand::LEVEL);
        assert_eq!(
            attitude_strategy(Deflection::new(0.0, 1.0), &params).phi_ref,
            params.roll_max
        );
        assert_relative_eq!(
            attitude_strategy(Deflection::new(0.0, 0.5), &params)
                .phi_ref
                .to_degrees(),
            22.5,
            epsilon = 1e-12
        );
        let d = Deflection::new(0.3, -0.7);
        let a = attitude_strategy(d, &params);
        let b = attitude_strategy(-d, &params);
        assert_eq!((a.phi_ref, a.theta_ref), (-b.phi_ref, -b.theta_ref));
    }

    #[test]
    fn rate_mode_rest_is_fixed_point() {
        let (cfg, params) = (MappingConfig::default(), MimicParams::default());
        let s = RateStrategyState::default();
        assert_eq!(s.step(Deflection::NEUTRAL, 0.02, &cfg, &params), s);
    }

    #[test]
    fn rate_mode_holds_angle_after_release() {
        let (cfg, params) = (MappingConfig::default(), MimicParams::default());
        let mut s = RateStrategyState::default();
        for _ in 0..200 {
            s = s.step(Deflection::new(0.0, 1.0), 0.02, &cfg, &params);
        }
        assert_eq!(s.phi, params.roll_max);
        for _ in 0..200 {
            s = s.step(Deflection::NEUTRAL, 0.02, &cfg, &params);
        }
        assert_eq!(s.phi, params.roll_max);
        assert_eq!(s.rate_phi, 0.0);
    }

    #[test]
    fn rate_response_matches_closed_form() {
        // Small clamp-free scenario: rate_max low enough not to hit the stop.
        let cfg = MappingConfig {
            rate_max_roll: 0.05,
            ..Default::default()
        };
        let params = MimicParams::default();
        let dt = 0.001;
        let mut s = RateStrategyState::default();
        let mut t = 0.0;
        for _ in 0..1500 {
            s = s.step(Deflection::new(0.0, 1.0), dt, &cfg, &params);
            t += dt;
            let expected = cfg.rate_max_roll * (1.0 - (-t / cfg.rate_tau).exp());
            assert_relative_eq!(s.rate_phi, expected, max_relative = 1e-3);
        }
    }
}
