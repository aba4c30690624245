//! World and semi-body frame conventions.
//!
//! World axes are x east, y north, z up. Yaw is a heading measured clockwise
//! from north, so yaw 0 flies north and positive yaw rate turns right. The
//! semi-body frame is the world frame rotated by the yaw: x forward, y right,
//! z up.

use nalgebra::Vector3;
use std::f64::consts::{PI, TAU};

pub type Vec3 = Vector3<f64>;

/// Horizontal unit vector along the heading.
pub fn forward(yaw: f64) -> Vec3 {
    Vec3::new(yaw.sin(), yaw.cos(), 0.0)
}

/// Horizontal unit vector to the right of the heading.
pub fn right(yaw: f64) -> Vec3 {
    Vec3::new(yaw.cos(), -yaw.sin(), 0.0)
}

pub fn semi_body_to_world(body: &Vec3, yaw: f64) -> Vec3 {
    forward(yaw) * body.x + right(yaw) * body.y + Vec3::z() * body.z
}

pub fn world_to_semi_body(world: &Vec3, yaw: f64) -> Vec3 {
    Vec3::new(world.dot(&forward(yaw)), world.dot(&right(yaw)), world.z)
}

/// Heading of a horizontal direction, same convention as yaw.
pub fn heading_of(dir: &Vec3) -> f64 {
    dir.x.atan2(dir.y)
}

/// Wraps to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}
