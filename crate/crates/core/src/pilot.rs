//! Headless pursuit pilot and the closed-loop episode runner.

use crate::course::{mean, Course, CourseProgress, ScoreRecord, ScoringParams};
use crate::geometry::{world_to_semi_body, Vec3};
use crate::linksim::{Link, LinkProfile};
use crate::mapping::{attitude_strategy, Deflection, MappingConfig, RateStrategyState};
use crate::mimic::{AttitudeCommand, MimicParams};
use crate::sim::{detect_crash, launch_state, respawn, step, SafetyConfig, SimState, DEFAULT_DT};
use serde::{Deserialize, Serialize};

/// Mapping strategy from deflection to attitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Deflection sets the angle.
    #[default]
    Attitude,
    /// Deflection sets the angular rate.
    Rate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PursuitGains {
    /// Roll axis per radian of bearing error.
    pub k_roll: f64,
    /// Pitch axis per radian of elevation error.
    pub k_pitch: f64,
    /// Carrot distance along the incoming segment, m.
    pub lookahead_m: f64,
}

impl Default for PursuitGains {
    fn default() -> Self {
        PursuitGains {
            k_roll: 2.0,
            k_pitch: 2.0,
            lookahead_m: 40.0,
        }
    }
}

/// Point the pilot steers at: `lookahead` metres ahead of the vehicle's
/// projection on the segment leading into waypoint `i`, never past the
/// waypoint itself.
pub fn aim_point(position: &Vec3, course: &Course, i: usize, lookahead: f64) -> Vec3 {
    let target = course.center(i);
    let prev = course.previous_point(i);
    let seg = target - prev;
    let len = seg.norm();
    if len < 1e-9 {
        return target;
    }
    let along = ((position - prev).dot(&seg) / (len * len)).clamp(0.0, 1.0);
    let s = (along + lookahead / len).min(1.0);
    prev + seg * s
}

/// Proportional pursuit: roll toward the bearing of the aim point, pitch
/// toward its elevation.
pub fn pursuit_command(state: &SimState, course: &Course, i: usize, gains: &PursuitGains) -> Deflection {
    let aim = aim_point(&state.position, course, i, gains.lookahead_m);
    let body = world_to_semi_body(&(aim - state.position), state.yaw);
    let horizontal = body.x.hypot(body.y);
    if horizontal == 0.0 && body.z == 0.0 {
        return Deflection::NEUTRAL;
    }
    let bearing = body.y.atan2(body.x);
    let elevation = body.z.atan2(horizontal);
    Deflection::new(gains.k_pitch * elevation, gains.k_roll * bearing)
}

/// Stick input that drives the rate strategy toward a desired attitude.
pub fn rate_mode_deflection(
    desired: AttitudeCommand,
    current: &RateStrategyState,
    cfg: &MappingConfig,
    response_s: f64,
) -> Deflection {
    let axis = |err: f64, rate_max: f64| {
        if rate_max > 0.0 {
            err / response_s / rate_max
        } else {
            0.0
        }
    };
    Deflection::new(
        axis(desired.theta_ref - current.theta, cfg.rate_max_pitch),
        axis(desired.phi_ref - current.phi, cfg.rate_max_roll),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub strategy: Strategy,
    pub gains: PursuitGains,
    pub mimic: MimicParams,
    pub mapping: MappingConfig,
    pub safety: SafetyConfig,
    pub scoring: ScoringParams,
    pub dt: f64,
    /// `None` wires the pilot straight to the vehicle.
    pub link: Option<LinkProfile>,
    pub link_seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            strategy: Strategy::Attitude,
            gains: PursuitGains::default(),
            mimic: MimicParams::default(),
            mapping: MappingConfig::default(),
            safety: SafetyConfig::default(),
            scoring: ScoringParams::default(),
            dt: DEFAULT_DT,
            link: None,
            link_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub strategy: Strategy,
    pub course_seed: u64,
    pub link: Option<String>,
    pub waypoints: usize,
    pub completed: bool,
    pub mean_score: f64,
    pub crashes: u32,
    pub duration_s: f64,
    pub records: Vec<ScoreRecord>,
}

/// Time after which an episode is abandoned: three times the nominal flight
/// time along the course.
pub fn episode_time_cap(course: &Course, params: &MimicParams) -> f64 {
    3.0 * course.path_length() / params.cruise_speed
}

/// Flies the whole course with the pursuit pilot in closed loop:
/// pilot, mapping, optional uplink delay, mimicry, integration, scoring, and
/// optional downlink delay back to the pilot.
pub fn run_episode(course: &Course, cfg: &EpisodeConfig) -> EpisodeReport {
    let dt = cfg.dt;
    let tick_hz = 1.0 / dt;
    let cap = episode_time_cap(course, &cfg.mimic);
    let mut link: Option<Link<AttitudeCommand, (SimState, usize)>> =
        cfg.link.clone().map(|p| Link::new(p, tick_hz, cfg.link_seed));

    let mut sim = launch_state(course, cfg.safety.respawn_dist_m);
    let mut progress = CourseProgress::new();
    let mut rate_state = RateStrategyState::default();
    let mut held = AttitudeCommand::LEVEL;
    let mut observed: Option<(SimState, usize)> = link.is_none().then_some((sim, 0));

    while !progress.is_complete(course) && sim.t < cap {
        let t = sim.t;

        // Ground side.
        let deflection = match observed {
            Some((seen, idx)) if idx < course.len() => pursuit_command(&seen, course, idx, &cfg.gains),
            _ => Deflection::NEUTRAL,
        };
        let attitude = match cfg.strategy {
            Strategy::Attitude => attitude_strategy(deflection, &cfg.mimic),
            Strategy::Rate => {
                let desired = attitude_strategy(deflection, &cfg.mimic);
                let stick = rate_mode_deflection(desired, &rate_state, &cfg.mapping, 0.15);
                rate_state = rate_state.step(stick, dt, &cfg.mapping, &cfg.mimic);
                rate_state.attitude()
            }
        };
        match link.as_mut() {
            None => held = attitude,
            Some(l) => {
                l.uplink.send(attitude, t);
                if let Some(p) = l.uplink.poll(t).pop() {
                    held = p.payload;
                }
            }
        }

        // Vehicle side.
        let next = step(&sim, held, dt, &cfg.mimic, &cfg.safety);
        progress.update(course, &sim.position, &next.position, next.t, &cfg.scoring);
        sim = next;
        if detect_crash(&sim, &cfg.safety) {
            progress.note_crash();
            match respawn(&sim, course, progress.next, cfg.safety.respawn_dist_m) {
                Ok(s) => {
                    sim = s;
                    held = AttitudeCommand::LEVEL;
                }
                Err(_) => break,
            }
        }

        match link.as_mut() {
            None => observed = Some((sim, progress.next)),
            Some(l) => {
                l.downlink.send((sim, progress.next), sim.t);
                if let Some(p) = l.downlink.poll(sim.t).pop() {
                    observed = Some(p.payload);
                }
            }
        }
    }

    let records = progress.records;
    EpisodeReport {
        strategy: cfg.strategy,
        course_seed: course.seed,
        link: cfg.link.as_ref().map(|p| p.name.clone()),
        waypoints: course.len(),
        completed: records.len() == course.len(),
        mean_score: mean(records.iter().map(|r| r.score)),
        crashes: sim.crashed_count,
        duration_s: sim.t,
        records,
    }
}
