//! The session: one fixed-tick loop that owns all mutable simulation state.
//!
//! Per tick the session drains client input that made it through the
//! emulated uplink, maps it to an attitude, steps the vehicle, scores
//! crossings, advances the phase schedule and pushes a [`StateFrame`] into
//! the downlink. Pausing freezes the simulated clock but frames keep flowing.

use crate::config::{ConfigError, InputSource, PhaseEnd, RunConfig};
use crate::course::{
    generate_course, mean, next_waypoint_direction, Course, CourseProgress, ScoreRecord, WaypointArrow,
};
use crate::geometry::Vec3;
use crate::linksim::Link;
use crate::mapping::{
    attitude_strategy, hands_to_deflection, stick_to_deflection, Deflection, HandPose, RateStrategyState,
};
use crate::mimic::{AttitudeCommand, VelocityCommand};
use crate::pilot::{pursuit_command, rate_mode_deflection, Strategy};
use crate::sim::{detect_crash, gimbal_pose, launch_state, respawn, step, GimbalPose, SimState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stick {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeadPose {
    pub pitch: f64,
    pub yaw: f64,
}

/// Client to service. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InputFrame {
    pub t_client: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hands: Option<HandPose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stick: Option<Stick>,
    #[serde(default)]
    pub head: HeadPose,
    #[serde(default)]
    pub pause: bool,
}

impl InputFrame {
    pub fn stick(t_client: f64, x: f64, y: f64) -> Self {
        InputFrame {
            t_client,
            stick: Some(Stick { x, y }),
            ..Default::default()
        }
    }

    pub fn hands(t_client: f64, left: f64, right: f64) -> Self {
        InputFrame {
            t_client,
            hands: Some(HandPose { left, right }),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if let Some(h) = self.hands {
            if !(h.left.abs() <= half_pi && h.right.abs() <= half_pi) {
                return Err("hand angles must be within [-pi/2, pi/2]".into());
            }
        }
        if let Some(s) = self.stick {
            if !(s.x.abs() <= 1.0 && s.y.abs() <= 1.0) {
                return Err("stick axes must be within [-1, 1]".into());
            }
        }
        if !(self.head.pitch.is_finite() && self.head.yaw.is_finite() && self.t_client.is_finite()) {
            return Err("non-finite value in input frame".into());
        }
        Ok(())
    }
}

/// Service to client, once per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub tick: u64,
    pub t: f64,
    pub position: Vec3,
    pub yaw: f64,
    /// Displayed (virtual fixed-wing) attitude.
    pub attitude: AttitudeCommand,
    pub vel_cmd: VelocityCommand,
    pub gimbal: GimbalPose,
    pub waypoint_index: usize,
    pub arrow: WaypointArrow,
    pub last_score: Option<f64>,
    pub airspeed: f64,
    pub phase: String,
    pub display_delay_ms: f64,
    /// `t_client` of the most recent input applied.
    pub echo_t_client: Option<f64>,
    /// Age of the input freshly applied this tick, s.
    pub input_age_s: Option<f64>,
    pub paused: bool,
    pub complete: bool,
    pub crashed_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum SessionEvent {
    PhaseChange {
        t: f64,
        from: String,
        to: String,
    },
    WaypointScored {
        phase: String,
        record: ScoreRecord,
    },
    Crash {
        t: f64,
        position: Vec3,
        waypoint_index: usize,
    },
    SessionComplete {
        t: f64,
        mean_score: f64,
        waypoints: usize,
    },
}

/// An input and the simulated time it entered the uplink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppliedInput {
    pub frame: InputFrame,
    pub sent_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    /// Input that arrived over the uplink this tick, if any.
    pub applied: Option<AppliedInput>,
    pub paused: bool,
    /// Frame produced by this tick.
    pub state: StateFrame,
    /// Frames that came out of the downlink this tick.
    pub delivered: Vec<StateFrame>,
    pub events: Vec<SessionEvent>,
}

#[derive(Debug, Clone)]
struct PhaseTracker {
    idx: usize,
    started_at: f64,
    scored: usize,
    records: Vec<ScoreRecord>,
}

pub struct Session {
    cfg: RunConfig,
    course: Course,
    link: Option<Link<AppliedInput, StateFrame>>,
    /// Client input waiting for the next tick when there is no link.
    direct: Option<AppliedInput>,
    sim: SimState,
    rate: RateStrategyState,
    progress: CourseProgress,
    held: Option<InputFrame>,
    phase: PhaseTracker,
    tick: u64,
    paused: bool,
    complete: bool,
    last_score: Option<f64>,
    pending: Vec<SessionEvent>,
    last_frame: Option<StateFrame>,
}

impl Session {
    pub fn new(cfg: RunConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let course = generate_course(
            cfg.course.seed,
            cfg.course.count,
            cfg.course.spacing_m,
            &cfg.course.generator,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let link = cfg.link_profile()?.map(|p| Link::new(p, cfg.tick_hz, cfg.link_seed));
        let sim = launch_state(&course, cfg.safety.respawn_dist_m);
        let mut session = Session {
            cfg,
            course,
            link,
            direct: None,
            sim,
            rate: RateStrategyState::default(),
            progress: CourseProgress::new(),
            held: None,
            phase: PhaseTracker {
                idx: 0,
                started_at: 0.0,
                scored: 0,
                records: Vec::new(),
            },
            tick: 0,
            paused: false,
            complete: false,
            last_score: None,
            pending: Vec::new(),
            last_frame: None,
        };
        // Phase changes at t = 0 surface on the first tick.
        session.pending = session.advance_phases();
        Ok(session)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn course(&self) -> &Course {
        &self.course
    }

    pub fn sim_state(&self) -> &SimState {
        &self.sim
    }

    pub fn phase_name(&self) -> &str {
        if self.complete {
            "complete"
        } else {
            &self.cfg.phases[self.phase.idx].name
        }
    }

    /// Most recent frame produced, if any tick has run.
    pub fn last_frame(&self) -> Option<&StateFrame> {
        self.last_frame.as_ref()
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn set_paused(&mut self, paused: bool) {
        self.paused = paused;
    }

    /// Hands a client input to the uplink at the current simulated time.
    /// The pause flag takes effect immediately.
    pub fn submit_input(&mut self, frame: InputFrame) {
        self.paused = frame.pause;
        let applied = AppliedInput {
            frame,
            sent_at: self.sim.t,
        };
        match self.link.as_mut() {
            Some(link) => {
                link.uplink.send(applied, self.sim.t);
            }
            None => self.direct = Some(applied),
        }
    }

    /// One tick of the loop.
    pub fn tick(&mut self) -> TickOutput {
        let paused = self.paused;
        let arrived = if paused || self.complete {
            None
        } else {
            match self.link.as_mut() {
                Some(link) => link.uplink.poll(self.sim.t).pop().map(|p| p.payload),
                None => self.direct.take(),
            }
        };
        let (state, events) = self.advance(arrived, paused);
        let delivered = if paused || self.complete {
            vec![state.clone()]
        } else {
            match self.link.as_mut() {
                Some(link) => {
                    link.downlink.send(state.clone(), state.t);
                    link.downlink.poll(state.t).into_iter().map(|p| p.payload).collect()
                }
                None => vec![state.clone()],
            }
        };
        TickOutput {
            applied: arrived,
            paused,
            state,
            delivered,
            events,
        }
    }

    /// The deterministic core of [`tick`](Self::tick): everything after the
    /// uplink. Replays drive this directly with the recorded inputs.
    pub fn advance(&mut self, arrived: Option<AppliedInput>, paused: bool) -> (StateFrame, Vec<SessionEvent>) {
        let mut events = std::mem::take(&mut self.pending);
        let mut input_age = None;
        if let Some(a) = arrived {
            self.held = Some(a.frame);
            input_age = Some(self.sim.t - a.sent_at);
        }

        if paused || self.complete {
            self.tick += 1;
            let frame = self.frame(paused, input_age);
            self.last_frame = Some(frame.clone());
            return (frame, events);
        }

        let dt = self.cfg.dt();
        let attitude = self.attitude_for_tick(dt);
        let next = step(&self.sim, attitude, dt, &self.cfg.mimic, &self.cfg.safety);
        let phase_name = self.cfg.phases[self.phase.idx].name.clone();
        for record in self.progress.update(
            &self.course,
            &self.sim.position,
            &next.position,
            next.t,
            &self.cfg.scoring,
        ) {
            self.last_score = Some(record.score);
            self.phase.scored += 1;
            self.phase.records.push(record);
            events.push(SessionEvent::WaypointScored {
                phase: phase_name.clone(),
                record,
            });
        }
        self.sim = next;

        if detect_crash(&self.sim, &self.cfg.safety) {
            events.push(SessionEvent::Crash {
                t: self.sim.t,
                position: self.sim.position,
                waypoint_index: self.progress.next,
            });
            self.progress.note_crash();
            self.rate = RateStrategyState::default();
            match respawn(
                &self.sim,
                &self.course,
                self.progress.next,
                self.cfg.safety.respawn_dist_m,
            ) {
                Ok(s) => self.sim = s,
                Err(_) => self.restart_course(),
            }
        }
        if self.progress.is_complete(&self.course) {
            self.restart_course();
        }

        events.extend(self.advance_phases());
        self.tick += 1;
        let frame = self.frame(false, input_age);
        self.last_frame = Some(frame.clone());
        (frame, events)
    }

    fn attitude_for_tick(&mut self, dt: f64) -> AttitudeCommand {
        let pilot_flies = self.cfg.input == InputSource::Pilot || self.cfg.phases[self.phase.idx].is_passive();
        let (cfg, params) = (&self.cfg.mapping, &self.cfg.mimic);
        if pilot_flies {
            let d = pursuit_command(&self.sim, &self.course, self.progress.next, &self.cfg.pilot);
            return match self.cfg.strategy {
                Strategy::Attitude => attitude_strategy(d, params),
                Strategy::Rate => {
                    let stick = rate_mode_deflection(attitude_strategy(d, params), &self.rate, cfg, 0.15);
                    self.rate = self.rate.step(stick, dt, cfg, params);
                    self.rate.attitude()
                }
            };
        }
        let d = match self.held {
            None => Deflection::NEUTRAL,
            Some(frame) => match (self.cfg.input, frame.hands, frame.stick) {
                (InputSource::Stick, _, Some(s)) => stick_to_deflection(s.x, s.y, cfg),
                (_, Some(h), _) => hands_to_deflection(HandPose::clamped(h.left, h.right), cfg),
                (_, None, Some(s)) => stick_to_deflection(s.x, s.y, cfg),
                (_, None, None) => Deflection::NEUTRAL,
            },
        };
        match self.cfg.strategy {
            Strategy::Attitude => attitude_strategy(d, params),
            Strategy::Rate => {
                self.rate = self.rate.step(d, dt, cfg, params);
                self.rate.attitude()
            }
        }
    }

    /// Back to the launch point with a fresh score sheet; time and crash
    /// count carry over.
    fn restart_course(&mut self) {
        let (t, crashes) = (self.sim.t, self.sim.crashed_count);
        self.sim = launch_state(&self.course, self.cfg.safety.respawn_dist_m);
        self.sim.t = t;
        self.sim.crashed_count = crashes;
        self.progress = CourseProgress::new();
        self.rate = RateStrategyState::default();
    }

    /// Moves through every phase whose end condition holds.
    fn advance_phases(&mut self) -> Vec<SessionEvent> {
        let mut events = Vec::new();
        while !self.complete {
            let spec = &self.cfg.phases[self.phase.idx];
            let done = match spec.end {
                PhaseEnd::DurationS(d) => self.sim.t - self.phase.started_at >= d - 1e-9,
                PhaseEnd::Waypoints(n) => self.phase.scored >= n,
            };
            if !done {
                break;
            }
            let from = spec.name.clone();
            if self.phase.idx + 1 == self.cfg.phases.len() {
                self.complete = true;
                events.push(SessionEvent::SessionComplete {
                    t: self.sim.t,
                    mean_score: mean(self.phase.records.iter().map(|r| r.score)),
                    waypoints: self.phase.records.len(),
                });
                break;
            }
            self.phase = PhaseTracker {
                idx: self.phase.idx + 1,
                started_at: self.sim.t,
                scored: 0,
                records: Vec::new(),
            };
            let to = self.cfg.phases[self.phase.idx].name.clone();
            if matches!(self.cfg.phases[self.phase.idx].end, PhaseEnd::Waypoints(_)) {
                // Scored phases start from the top of the course.
                self.restart_course();
            }
            events.push(SessionEvent::PhaseChange {
                t: self.sim.t,
                from,
                to,
            });
        }
        events
    }

    fn frame(&self, paused: bool, input_age: Option<f64>) -> StateFrame {
        let s = &self.sim;
        let head = self.held.map(|f| f.head).unwrap_or_default();
        let (idx, arrow) = if self.progress.next < self.course.len() {
            let i = self.progress.next;
            (i, next_waypoint_direction(&s.position, s.yaw, &self.course, i))
        } else {
            (self.course.len(), WaypointArrow::NONE)
        };
        StateFrame {
            tick: self.tick,
            t: s.t,
            position: s.position,
            yaw: s.yaw,
            attitude: s.cmd,
            vel_cmd: s.vel_cmd,
            gimbal: gimbal_pose(&s.vel_cmd, head.pitch, head.yaw),
            waypoint_index: idx,
            arrow,
            last_score: self.last_score,
            airspeed: self.cfg.mimic.cruise_speed,
            phase: self.phase_name().to_string(),
            display_delay_ms: self.cfg.display_delay_ms,
            echo_t_client: self.held.map(|f| f.t_client),
            input_age_s: input_age,
            paused,
            complete: self.complete,
            crashed_count: s.crashed_count,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PhaseSpec;
    use approx::assert_relative_eq;

    fn cfg() -> RunConfig {
        RunConfig {
            link: "none".into(),
            ..Default::default()
        }
    }

    #[test]
    fn fifty_ticks_is_one_second() {
        let mut s = Session::new(cfg()).unwrap();
        for _ in 0..50 {
            s.tick();
        }
        assert_relative_eq!(s.sim_state().t, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pause_freezes_clock_but_streams_frames() {
        let mut c = cfg();
        c.phases = vec![PhaseSpec::duration("training", 100.0)];
        let mut s = Session::new(c).unwrap();
        for _ in 0..10 {
            s.tick();
        }
        let t = s.sim_state().t;
        s.submit_input(InputFrame {
            pause: true,
            ..InputFrame::stick(1.0, 0.0, 0.0)
        });
        for _ in 0..10 {
            let out = s.tick();
            assert!(out.state.paused);
            assert_eq!(out.delivered.len(), 1);
        }
        assert_eq!(s.sim_state().t, t);
        s.submit_input(InputFrame::stick(2.0, 0.0, 0.0));
        s.tick();
        assert!(s.sim_state().t > t);
    }

    #[test]
    fn zero_length_passive_goes_straight_to_training() {
        let mut c = cfg();
        c.phases = vec![
            PhaseSpec::duration("passive", 0.0),
            PhaseSpec::duration("training", 10.0),
        ];
        let mut s = Session::new(c).unwrap();
        assert_eq!(s.phase_name(), "training");
        let out = s.tick();
        assert!(matches!(&out.events[0], SessionEvent::PhaseChange { to, .. } if to == "training"));
    }

    #[test]
    fn neutral_stick_cruises_straight() {
        let mut c = cfg();
        c.input = InputSource::Stick;
        c.phases = vec![PhaseSpec::duration("training", 100.0)];
        let mut s = Session::new(c).unwrap();
        let yaw0 = s.sim_state().yaw;
        for k in 0..100 {
            s.submit_input(InputFrame::stick(k as f64, 0.0, 0.0));
            let out = s.tick();
            assert_eq!(out.state.vel_cmd.v_x, 12.0);
            assert_eq!(out.state.yaw, yaw0);
            assert_eq!(out.state.echo_t_client, Some(k as f64));
        }
    }

    #[test]
    fn right_stick_turns_right() {
        let mut c = cfg();
        c.input = InputSource::Stick;
        c.phases = vec![PhaseSpec::duration("training", 100.0)];
        let mut s = Session::new(c).unwrap();
        let mut last = s.sim_state().yaw;
        for k in 0..50 {
            s.submit_input(InputFrame::stick(k as f64, 1.0, 0.0));
            let out = s.tick();
            assert!(out.state.attitude.phi_ref > 0.0);
            assert!(crate::geometry::wrap_angle(out.state.yaw - last) > 0.0);
            last = out.state.yaw;
        }
    }
}
