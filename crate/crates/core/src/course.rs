//! Waypoint course, crossing planes and Gaussian scoring.
//!
//! A waypoint counts as passed when the vehicle crosses the plane through its
//! center whose normal points from the previous waypoint to the next one. The
//! in-plane distance between the crossing point and the center is scored with
//! a Gaussian that gives 100% at the center and `p_floor` at `d_floor`.

use crate::geometry::{forward, heading_of, world_to_semi_body, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CourseError {
    #[error("a course needs at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("outlier threshold needs at least two samples, got {0}")]
    TooFewSamples(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub index: usize,
    pub center: Vec3,
}

/// Knobs of the course generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CourseGenParams {
    #[serde(rename = "heading_jitter_deg", with = "crate::units::deg")]
    pub heading_jitter: f64,
    /// Relative spacing jitter, e.g. 0.1 for +/-10%.
    pub spacing_jitter: f64,
    pub alt_jitter_m: f64,
    pub alt_min_m: f64,
    pub alt_max_m: f64,
    pub start_alt_m: f64,
}

impl Default for CourseGenParams {
    fn default() -> Self {
        CourseGenParams {
            heading_jitter: 45f64.to_radians(),
            spacing_jitter: 0.1,
            alt_jitter_m: 10.0,
            alt_min_m: 30.0,
            alt_max_m: 150.0,
            start_alt_m: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Course {
    pub seed: u64,
    pub spacing: f64,
    /// Launch point; acts as the waypoint before the first one.
    pub start: Vec3,
    pub waypoints: Vec<Waypoint>,
}

impl Course {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn center(&self, i: usize) -> Vec3 {
        self.waypoints[i].center
    }

    /// Center of the waypoint before `i`, the launch point for `i = 0`.
    pub fn previous_point(&self, i: usize) -> Vec3 {
        if i == 0 {
            self.start
        } else {
            self.center(i - 1)
        }
    }

    /// Sum of segment lengths from the launch point through every waypoint.
    pub fn path_length(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.center(i) - self.previous_point(i)).norm())
            .sum()
    }

    /// Length between the first and last waypoint.
    pub fn waypoint_path_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1].center - w[0].center).norm())
            .sum()
    }

    pub fn start_heading(&self) -> f64 {
        heading_of(&(self.center(0) - self.start))
    }
}

/// Random walk of waypoints: each step turns by up to the heading jitter,
/// advances by the jittered spacing and moves the altitude by up to the
/// altitude jitter, clamped to the band.
pub fn generate_course(seed: u64, count: usize, spacing: f64, gen: &CourseGenParams) -> Result<Course, CourseError> {
    if count < 2 {
        return Err(CourseError::TooFewWaypoints(count));
    }
    if !(spacing > 0.0) {
        return Err(CourseError::BadSpacing(spacing));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Vec3::new(0.0, 0.0, gen.start_alt_m);
    let mut heading = 0.0f64;
    let mut here = start;
    let mut waypoints = Vec::with_capacity(count);
    for index in 0..count {
        if index > 0 {
            heading += rng.random_range(-gen.heading_jitter..=gen.heading_jitter);
        }
        let step = spacing * (1.0 + rng.random_range(-gen.spacing_jitter..=gen.spacing_jitter));
        let dz = rng.random_range(-gen.alt_jitter_m..=gen.alt_jitter_m);
        let mut next = here + forward(heading) * step;
        next.z = (here.z + dz).clamp(gen.alt_min_m, gen.alt_max_m);
        waypoints.push(Waypoint { index, center: next });
        here = next;
    }
    Ok(Course {
        seed,
        spacing,
        start,
        waypoints,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingPlane {
    pub point: Vec3,
    pub normal: Vec3,
}

impl CrossingPlane {
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    /// Distance from the center to the projection of `p` onto the plane.
    pub fn in_plane_distance(&self, p: &Vec3) -> f64 {
        let rel = p - self.point;
        (rel - self.normal * rel.dot(&self.normal)).norm()
    }
}

fn unit_or(v: Vec3, fallback: Vec3) -> Vec3 {
    v.try_normalize(1e-12)
        .or_else(|| fallback.try_normalize(1e-12))
        .unwrap_or_else(Vec3::y)
}

/// Plane through waypoint `i` with normal along `next - previous`. The first
/// and last waypoints use their single adjacent segment.
pub fn crossing_plane(course: &Course, i: usize) -> CrossingPlane {
    let n = course.len();
    let c = course.center(i);
    let normal = if n < 2 {
        unit_or(c - course.start, Vec3::y())
    } else if i == 0 {
        unit_or(course.center(1) - c, c - course.start)
    } else if i == n - 1 {
        unit_or(c - course.center(i - 1), Vec3::y())
    } else {
        unit_or(course.center(i + 1) - course.center(i - 1), c - course.center(i - 1))
    };
    CrossingPlane { point: c, normal }
}

/// In-plane miss distance if the step from `p_prev` to `p_new` passes the
/// plane from its front (negative) side to its back side.
pub fn check_crossing(p_prev: &Vec3, p_new: &Vec3, plane: &CrossingPlane) -> Option<f64> {
    let d0 = plane.signed_distance(p_prev);
    let d1 = plane.signed_distance(p_new);
    if !(d0 < 0.0 && d1 >= 0.0) {
        return None;
    }
    let s = d0 / (d0 - d1);
    let hit = p_prev + (p_new - p_prev) * s;
    Some((hit - plane.point).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringParams {
    /// Distance at which the score has fallen to `p_floor`.
    pub d_floor_m: f64,
    /// Score fraction at `d_floor_m`.
    pub p_floor: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams {
            d_floor_m: 38.4,
            p_floor: 0.01,
        }
    }
}

impl ScoringParams {
    pub fn sigma(&self) -> f64 {
        self.d_floor_m / (2.0 * (1.0 / self.p_floor).ln()).sqrt()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.d_floor_m > 0.0) || !(self.p_floor > 0.0 && self.p_floor < 1.0) {
            return Err("scoring needs d_floor_m > 0 and 0 < p_floor < 1".into());
        }
        Ok(())
    }
}

/// Percent score for a miss distance.
pub fn score_fn(distance: f64, p: &ScoringParams) -> f64 {
    let sigma = p.sigma();
    100.0 * (-(distance * distance) / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    #[serde(rename = "index")]
    pub waypoint_index: usize,
    pub t: f64,
    #[serde(rename = "distance_m")]
    pub distance: f64,
    #[serde(rename = "score_pct")]
    pub score: f64,
    pub crashed_before: bool,
}

/// Trailing moving average. Empty when the input is shorter than the window.
pub fn windowed_performance(scores: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    scores
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect()
}

/// Mean plus 2.5 sample standard deviations.
pub fn outlier_threshold(distances: &[f64]) -> Result<f64, CourseError> {
    let n = distances.len();
    if n < 2 {
        return Err(CourseError::TooFewSamples(n));
    }
    let mean = distances.iter().sum::<f64>() / n as f64;
    let var = distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(mean + 2.5 * var.sqrt())
}

/// Direction to a waypoint in world and yaw-relative axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaypointArrow {
    pub world: Vec3,
    /// Forward, right, up.
    pub body: Vec3,
}

impl WaypointArrow {
    pub const NONE: WaypointArrow = WaypointArrow {
        world: Vec3::new(0.0, 0.0, 0.0),
        body: Vec3::new(0.0, 0.0, 0.0),
    };

    pub fn is_sentinel(&self) -> bool {
        self.world == Vec3::zeros()
    }
}

/// Unit vector from the vehicle to waypoint `i`, zero when on top of it.
pub fn next_waypoint_direction(position: &Vec3, yaw: f64, course: &Course, i: usize) -> WaypointArrow {
    match (course.center(i) - position).try_normalize(1e-9) {
        Some(world) => WaypointArrow {
            world,
            body: world_to_semi_body(&world, yaw),
        },
        None => WaypointArrow::NONE,
    }
}

/// Walks the course in order and scores each waypoint once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseProgress {
    pub next: usize,
    pub records: Vec<ScoreRecord>,
    crashed_since_last: bool,
}

impl Default for CourseProgress {
    fn default() -> Self {
        Self::new()
    }
}

impl CourseProgress {
    pub fn new() -> Self {
        CourseProgress {
            next: 0,
            records: Vec::new(),
            crashed_since_last: false,
        }
    }

    pub fn is_complete(&self, course: &Course) -> bool {
        self.next >= course.len()
    }

    pub fn note_crash(&mut self) {
        self.crashed_since_last = true;
    }

    fn push(&mut self, index: usize, t: f64, distance: f64, scoring: &ScoringParams) -> ScoreRecord {
        let rec = ScoreRecord {
            waypoint_index: index,
            t,
            distance,
            score: score_fn(distance, scoring),
            crashed_before: self.crashed_since_last,
        };
        self.crashed_since_last = false;
        self.records.push(rec);
        rec
    }

    /// Scores whatever the step `p_prev -> p_new` passed. If the plane of the
    /// following waypoint is crossed first, the skipped one is scored by the
    /// in-plane distance of `p_new` to its center.
    pub fn update(
        &mut self,
        course: &Course,
        p_prev: &Vec3,
        p_new: &Vec3,
        t: f64,
        scoring: &ScoringParams,
    ) -> Vec<ScoreRecord> {
        let mut out = Vec::new();
        if self.is_complete(course) {
            return out;
        }
        let i = self.next;
        let plane = crossing_plane(course, i);
        if let Some(d) = check_crossing(p_prev, p_new, &plane) {
            out.push(self.push(i, t, d, scoring));
            self.next += 1;
        } else if i + 1 < course.len() {
            let following = crossing_plane(course, i + 1);
            if let Some(d) = check_crossing(p_prev, p_new, &following) {
                let skipped = plane.in_plane_distance(p_new);
                out.push(self.push(i, t, skipped, scoring));
                out.push(self.push(i + 1, t, d, scoring));
                self.next += 2;
            }
        }
        out
    }

    pub fn mean_score(&self) -> f64 {
        mean(self.records.iter().map(|r| r.score))
    }
}

pub(crate) fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Writes records as `index,t,distance_m,score_pct,crashed_before`.
pub fn write_scores_csv<W: std::io::Write>(records: &[ScoreRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(n: usize) -> Course {
        Course {
            seed: 0,
            spacing: 40.0,
            start: Vec3::new(0.0, 0.0, 50.0),
            waypoints: (0..n)
                .map(|i| Waypoint {
                    index: i,
                    center: Vec3::new(0.0, 40.0 * (i + 1) as f64, 50.0),
                })
                .collect(),
        }
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let gen = CourseGenParams::default();
        let a = generate_course(7, 84, 40.0, &gen).unwrap();
        let b = generate_course(7, 84, 40.0, &gen).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_course(8, 84, 40.0, &gen).unwrap());
        assert_eq!(a.len(), 84);
        for w in &a.waypoints {
            assert!((30.0..=150.0).contains(&w.center.z));
        }
        for i in 0..a.len() {
            let seg = (a.center(i) - a.previous_point(i)).norm();
            assert!((0.8 * 40.0..=1.2 * 40.0).contains(&seg), "segment {i} is {seg}");
        }
        let total = a.waypoint_path_length();
        assert!((total - 83.0 * 40.0).abs() <= 0.1 * 83.0 * 40.0, "path {total}");
    }

    #[test]
    fn generation_rejects_degenerate_input() {
        let gen = CourseGenParams::default();
        assert_eq!(generate_course(0, 1, 40.0, &gen), Err(CourseError::TooFewWaypoints(1)));
        assert!(generate_course(0, 5, 0.0, &gen).is_err());
    }

    #[test]
    fn plane_normals() {
        let c = line(4);
        assert_relative_eq!(crossing_plane(&c, 1).normal, Vec3::y(), epsilon = 1e-15);
        assert_relative_eq!(crossing_plane(&c, 0).normal, Vec3::y(), epsilon = 1e-15);
        assert_relative_eq!(crossing_plane(&c, 3).normal, Vec3::y(), epsilon = 1e-15);

        let mut bend = line(3);
        bend.waypoints[2].center = Vec3::new(40.0, 80.0, 50.0);
        let n = crossing_plane(&bend, 1).normal;
        let chord = (Vec3::new(40.0, 80.0, 50.0) - Vec3::new(0.0, 40.0, 50.0)).normalize();
        assert_relative_eq!(n, chord, epsilon = 1e-15);

        // next == previous falls back to previous -> current.
        let mut back = line(3);
        back.waypoints[2].center = back.waypoints[0].center;
        assert_relative_eq!(crossing_plane(&back, 1).normal, Vec3::y(), epsilon = 1e-15);
    }

    #[test]
    fn crossing_examples() {
        let plane = CrossingPlane {
            point: Vec3::new(0.0, 40.0, 50.0),
            normal: Vec3::y(),
        };
        let through = check_crossing(&Vec3::new(0.0, 39.0, 50.0), &Vec3::new(0.0, 41.0, 50.0), &plane);
        assert_eq!(through, Some(0.0));
        let parallel = check_crossing(&Vec3::new(0.0, 39.0, 50.0), &Vec3::new(5.0, 39.0, 50.0), &plane);
        assert_eq!(parallel, None);
        // Back to front does not count.
        assert_eq!(
            check_crossing(&Vec3::new(0.0, 41.0, 50.0), &Vec3::new(0.0, 39.0, 50.0), &plane),
            None
        );
    }

    #[test]
    fn crossing_off_center_oblique() {
        // Segment built to hit the plane 3 m east and 4 m up of the center.
        let plane = CrossingPlane {
            point: Vec3::new(10.0, 20.0, 30.0),
            normal: Vec3::new(1.0, 1.0, 0.0).normalize(),
        };
        let e1 = Vec3::new(1.0, -1.0, 0.0).normalize();
        let hit = plane.point + e1 * 3.0 + Vec3::z() * 4.0;
        let dir = Vec3::new(0.6, 0.9, 0.2);
        let d = check_crossing(&(hit - dir), &(hit + dir * 0.5), &plane).unwrap();
        assert_relative_eq!(d, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn scoring_constants() {
        let p = ScoringParams::default();
        assert_relative_eq!(p.sigma(), 12.652996396459406, epsilon = 1e-12);
        assert_eq!(score_fn(0.0, &p), 100.0);
        assert_relative_eq!(score_fn(38.4, &p), 1.0, epsilon = 1e-9);
        assert_relative_eq!(score_fn(p.sigma(), &p), 60.653065971263345, epsilon = 1e-9);
    }

    #[test]
    fn windowed_examples() {
        assert_eq!(windowed_performance(&[80.0; 30], 20), vec![80.0; 11]);
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert_eq!(windowed_performance(&xs, 20), vec![9.5]);
        assert!(windowed_performance(&xs[..5], 20).is_empty());
        // Step input gives a ramp, checked against a brute-force mean.
        let step: Vec<f64> = (0..40).map(|i| if i < 20 { 0.0 } else { 100.0 }).collect();
        let ramp = windowed_performance(&step, 20);
        for (k, v) in ramp.iter().enumerate() {
            let brute: f64 = step[k..k + 20].iter().sum::<f64>() / 20.0;
            assert_relative_eq!(*v, brute, epsilon = 1e-12);
            assert_relative_eq!(*v, 5.0 * k as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn outlier_examples() {
        assert_eq!(outlier_threshold(&[4.0, 4.0, 4.0]).unwrap(), 4.0);
        assert_relative_eq!(
            outlier_threshold(&[0.0, 10.0]).unwrap(),
            22.67766952966369,
            epsilon = 1e-12
        );
        assert_eq!(outlier_threshold(&[1.0]), Err(CourseError::TooFewSamples(1)));
    }

    #[test]
    fn arrow_examples() {
        let c = line(2);
        let ahead = next_waypoint_direction(&Vec3::new(0.0, 0.0, 50.0), 0.0, &c, 0);
        assert_relative_eq!(ahead.body, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        let behind = next_waypoint_direction(&Vec3::new(0.0, 60.0, 50.0), 0.0, &c, 0);
        assert_relative_eq!(behind.body, Vec3::new(-1.0, 0.0, 0.0), epsilon = 1e-15);
        let on = next_waypoint_direction(&c.center(0), 0.0, &c, 0);
        assert!(on.is_sentinel());
    }

    #[test]
    fn progress_scores_in_order_and_handles_skips() {
        let c = line(3);
        let p = ScoringParams::default();
        let mut prog = CourseProgress::new();
        let r = prog.update(&c, &Vec3::new(0.0, 39.0, 50.0), &Vec3::new(0.0, 41.0, 50.0), 1.0, &p);
        assert_eq!(r.len(), 1);
        assert_eq!(prog.next, 1);
        // Jump straight across waypoint 2's plane 3 m off center; waypoint 1 skipped.
        prog.note_crash();
        let r = prog.update(&c, &Vec3::new(3.0, 119.0, 50.0), &Vec3::new(3.0, 121.0, 50.0), 2.0, &p);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].waypoint_index, 1);
        assert!(r[0].crashed_before);
        assert!(!r[1].crashed_before);
        assert_relative_eq!(r[1].distance, 3.0, epsilon = 1e-12);
        assert!(prog.is_complete(&c));
        assert_relative_eq!(
            prog.mean_score(),
            (r[0].score + r[1].score + 100.0) / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn csv_columns() {
        let rec = ScoreRecord {
            waypoint_index: 3,
            t: 1.5,
            distance: 2.0,
            score: 98.76,
            crashed_before: false,
        };
        let mut buf = Vec::new();
        write_scores_csv(&[rec], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next().unwrap(), "index,t,distance_m,score_pct,crashed_before");
        assert_eq!(s.lines().nth(1).unwrap(), "3,1.5,2.0,98.76,false");
    }
}
