//! Reduced-order closed loop: decoupled aSLIP dynamics driven by the planners
//! over blind terrain contact.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::gait::{advance_clock, swing_foot_ref, GaitClock, GaitEvent, Side, SwingParams};
use crate::horizontal::{periodic_exchange_state, HorizontalPlanner, HorizontalState};
use crate::scenario::{ConfigError, ContactMode, Scenario};
use crate::terrain::TerrainProfile;
use crate::vertical::{vertical_reference, StepSchedule, VerticalPlanner, VerticalState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushEvent {
    pub start: f64,
    pub duration: f64,
    /// Force at the CoM in newtons.
    pub force: [f64; 3],
}

impl PushEvent {
    pub fn active(&self, t: f64) -> bool {
        t >= self.start - 1e-9 && t < self.start + self.duration - 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoMState {
    pub pos: [f64; 3],
    pub vel: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams {
    pub omega_x: f64,
    pub omega_z: f64,
    pub mass: f64,
}

/// One RK4 step of the decoupled dynamics about `stance`. The folded spring
/// reference moves linearly from `r.0` to `r.1` over the step.
pub fn step_dynamics(
    com: &CoMState,
    stance: [f64; 3],
    r: (f64, f64),
    force: [f64; 3],
    dt: f64,
    p: &DynamicsParams,
) -> CoMState {
    let (wx2, wz2) = (p.omega_x * p.omega_x, p.omega_z * p.omega_z);
    let accel = |pos: [f64; 3], tau: f64| {
        let r_now = r.0 + (r.1 - r.0) * tau / dt;
        [
            wx2 * (pos[0] - stance[0]) + force[0] / p.mass,
            wx2 * (pos[1] - stance[1]) + force[1] / p.mass,
            -wz2 * (pos[2] - stance[2] - r_now) + force[2] / p.mass,
        ]
    };
    let add = |a: [f64; 3], b: [f64; 3], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]];
    let (x, v) = (com.pos, com.vel);
    let k1v = accel(x, 0.0);
    let k1x = v;
    let k2v = accel(add(x, k1x, dt / 2.0), dt / 2.0);
    let k2x = add(v, k1v, dt / 2.0);
    let k3v = accel(add(x, k2x, dt / 2.0), dt / 2.0);
    let k3x = add(v, k2v, dt / 2.0);
    let k4v = accel(add(x, k3x, dt), dt);
    let k4x = add(v, k3v, dt);
    let mut out = *com;
    for i in 0..3 {
        out.pos[i] += dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
        out.vel[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallReason {
    /// CoM dropped below the fall height above the stance contact.
    Collapse,
    /// Swing foot hit a riser taller than its apex.
    ToeStub,
    /// Footstep planning failed on consecutive ticks.
    PlannerFailure,
    /// CoM further than a rest leg length from the stance foot horizontally.
    Overreach,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimEvent {
    Touchdown(GaitEvent),
    LateStart,
    /// Swing foot met a riser while descending and landed on its top.
    EdgeLanding,
    /// First second-half ground contact of a compliant swing foot.
    EarlyContact,
    /// A compliant swing foot still in the air at the step end dropped onto
    /// the terrain.
    FootDrop,
    PushStart,
    PushEnd,
    PlannerFailure,
    Fall(FallReason),
    Boundary,
}

impl SimEvent {
    pub fn label(&self) -> &'static str {
        match self {
            SimEvent::Touchdown(e) => e.label(),
            SimEvent::LateStart => "late_start",
            SimEvent::EdgeLanding => "edge_landing",
            SimEvent::EarlyContact => "early_contact",
            SimEvent::FootDrop => "foot_drop",
            SimEvent::PushStart => "push_start",
            SimEvent::PushEnd => "push_end",
            SimEvent::PlannerFailure => "planner_failure",
            SimEvent::Fall(FallReason::Collapse) => "fall_collapse",
            SimEvent::Fall(FallReason::ToeStub) => "fall_toe_stub",
            SimEvent::Fall(FallReason::PlannerFailure) => "fall_planner",
            SimEvent::Fall(FallReason::Overreach) => "fall_overreach",
            SimEvent::Fall(FallReason::NonFinite) => "fall_non_finite",
            SimEvent::Boundary => "boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    Fell(FallReason),
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub com: [f64; 3],
    pub vel: [f64; 3],
    /// Closed-form height reference of the current step, world frame.
    pub z_ref: f64,
    /// Folded spring reference length.
    pub r: f64,
    pub support: Side,
    pub stance: [f64; 3],
    pub swing: [f64; 3],
    pub planned_step: [f64; 2],
    pub push: [f64; 3],
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub support: Side,
    pub contact: [f64; 3],
    pub event: GaitEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub rows: Vec<LogRow>,
    /// Support exchanges in order.
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
    /// Wall time of each planning tick in microseconds.
    pub latencies_us: Vec<f64>,
}

impl SimLog {
    pub fn fell(&self) -> bool {
        matches!(self.outcome, Outcome::Fell(_))
    }

    pub fn events(&self) -> impl Iterator<Item = (f64, SimEvent)> + '_ {
        self.rows.iter().flat_map(|r| r.events.iter().map(move |e| (r.t, *e)))
    }
}

/// Simulator state. Construct with [`Simulator::new`], then [`Simulator::run`].
pub struct Simulator {
    scenario: Scenario,
    terrain: TerrainProfile,
    vertical: VerticalPlanner,
    horizontal: HorizontalPlanner,
    dynamics: DynamicsParams,
    swing_params: SwingParams,
    com: CoMState,
    stance: [f64; 3],
    swing: [f64; 3],
    swing_start: [f64; 3],
    clock: GaitClock,
    schedule: StepSchedule,
    com_z_step_start: f64,
    target: [f64; 2],
    /// The compliant swing foot has touched the ground this step.
    grounded: bool,
    next_delta_r: f64,
    failures: usize,
    tick: u64,
}

impl Simulator {
    /// Places the robot on the periodic gait at `x = 0` with left support.
    pub fn new(scenario: &Scenario) -> Result<Self, ConfigError> {
        let mut scenario = scenario.clone();
        scenario.sync();
        scenario.validate()?;
        let terrain = TerrainProfile::build(&scenario.terrain)?;
        let vertical = VerticalPlanner::new(scenario.vertical.clone())?;
        let horizontal = HorizontalPlanner::new(scenario.horizontal.clone())?;
        let hp = horizontal.params().clone();
        let vp = vertical.params().clone();
        let support = Side::Left;
        let (sx, sy) = periodic_exchange_state(&hp, support);
        let stance_xy = [-sx.position, -sy.position];
        let stance = [stance_xy[0], stance_xy[1], terrain.height_at(stance_xy[0], stance_xy[1])?];
        let back = [stance_xy[0] - hp.desired_velocity[0] * hp.step_duration, -stance_xy[1]];
        let swing = [back[0], back[1], terrain.height_at(back[0], back[1])?];
        let com = CoMState { pos: [0.0, 0.0, stance[2] + vp.rest_length], vel: [sx.velocity, sy.velocity, 0.0] };
        let dynamics = DynamicsParams { omega_x: hp.omega(), omega_z: vp.omega(), mass: vp.mass };
        let swing_params = SwingParams { foot_height: scenario.gait.foot_height, offset: scenario.gait.swing_offset };
        let clock = GaitClock::new(support, scenario.gait.step_duration);
        Ok(Self {
            schedule: StepSchedule::equilibrium(&vp),
            com_z_step_start: com.pos[2],
            target: [swing[0], swing[1]],
            grounded: false,
            next_delta_r: 0.0,
            failures: 0,
            tick: 0,
            scenario,
            terrain,
            vertical,
            horizontal,
            dynamics,
            swing_params,
            com,
            stance,
            swing,
            swing_start: swing,
            clock,
        })
    }

    pub fn com(&self) -> &CoMState {
        &self.com
    }

    pub fn support(&self) -> Side {
        self.clock.support
    }

    fn time(&self) -> f64 {
        self.tick as f64 * self.scenario.sim.dt
    }

    fn push_force(&self, t: f64) -> [f64; 3] {
        let mut f = [0.0; 3];
        for p in self.scenario.pushes.iter().filter(|p| p.active(t)) {
            for i in 0..3 {
                f[i] += p.force[i];
            }
        }
        f
    }

    fn z_ref_world(&self) -> f64 {
        let vp = self.vertical.params();
        let sag = vp.sag();
        let t = self.clock.phase_time.min(vp.step_duration);
        let r0 = self.schedule.r_start + sag;
        let r1 = r0 + self.schedule.delta_r;
        let (z, _) = vertical_reference(
            self.schedule.anchor.z,
            self.schedule.anchor.z_dot,
            r0,
            r1,
            vp.step_duration,
            t,
            vp.omega(),
            vp.gravity,
        );
        z + self.stance[2]
    }

    fn r_now(&self, phase: f64) -> f64 {
        let t_step = self.clock.step_duration;
        self.schedule.r_at(phase.min(t_step), t_step)
    }

    fn row(&self, events: Vec<SimEvent>) -> LogRow {
        let t = self.time();
        LogRow {
            t,
            com: self.com.pos,
            vel: self.com.vel,
            z_ref: self.z_ref_world(),
            r: self.r_now(self.clock.phase_time),
            support: self.clock.support,
            stance: self.stance,
            swing: self.swing,
            planned_step: self.target,
            push: self.push_force(t),
            events,
        }
    }

    /// Runs the planners once from the current state. Returns false on a
    /// footstep planning failure.
    fn plan(&mut self) -> bool {
        let phase = self.clock.phase_time;
        let vstate = VerticalState::new(self.com.pos[2] - self.stance[2], self.com.vel[2]);
        let vsol = self.vertical.plan(vstate, phase, &self.schedule);
        self.next_delta_r = vsol.delta_r[0];
        let sx = HorizontalState::new(self.com.pos[0], self.com.vel[0]);
        let sy = HorizontalState::new(self.com.pos[1], self.com.vel[1]);
        match self.horizontal.plan(sx, sy, (self.stance[0], self.stance[1]), self.clock.support, phase) {
            Ok((px, py)) => {
                self.target = [px.future_steps[0], py.future_steps[0]];
                true
            }
            Err(e) => {
                log::warn!("t={:.3}: {e}", self.time());
                false
            }
        }
    }

    pub fn run(mut self) -> SimLog {
        let dt = self.scenario.sim.dt;
        let n_ticks = (self.scenario.duration / dt).round() as u64;
        let mut rows = Vec::with_capacity(n_ticks as usize + 1);
        let mut steps = Vec::new();
        let mut latencies = Vec::with_capacity(n_ticks as usize);
        let mut pending: Vec<SimEvent> = Vec::new();
        let mut outcome = Outcome::Completed;
        let mut last_force = [0.0; 3];

        while self.tick < n_ticks {
            let t = self.time();
            let force = self.push_force(t);
            let pushing = force.iter().any(|f| *f != 0.0);
            let was_pushing = last_force.iter().any(|f| *f != 0.0);
            if pushing && !was_pushing {
                pending.push(SimEvent::PushStart);
            }
            if !pushing && was_pushing {
                pending.push(SimEvent::PushEnd);
            }
            last_force = force;

            if self.tick % self.scenario.sim.planner_decimation as u64 == 0 {
                let started = Instant::now();
                let ok = self.plan();
                latencies.push(started.elapsed().as_secs_f64() * 1e6);
                if ok {
                    self.failures = 0;
                } else {
                    self.failures += 1;
                    pending.push(SimEvent::PlannerFailure);
                    if self.failures >= 2 {
                        pending.push(SimEvent::Fall(FallReason::PlannerFailure));
                        outcome = Outcome::Fell(FallReason::PlannerFailure);
                        break;
                    }
                }
            }
            rows.push(self.row(std::mem::take(&mut pending)));

            // Dynamics over the tick.
            let phase = self.clock.phase_time;
            let r = (self.r_now(phase), self.r_now(phase + dt));
            self.com = step_dynamics(&self.com, self.stance, r, force, dt, &self.dynamics);
            self.tick += 1;

            // Swing foot and contact.
            match self.advance_swing(dt, &mut pending) {
                Ok(Some(contact)) => {
                    let (clock, event) = advance_clock(self.clock, dt, true);
                    match event {
                        Some(e) if e.exchanges_support() => {
                            self.exchange(contact, clock, e, r.1, &mut steps);
                            pending.push(SimEvent::Touchdown(e));
                        }
                        _ => self.clock = clock,
                    }
                }
                Ok(None) => {
                    let (clock, event) = advance_clock(self.clock, dt, false);
                    self.clock = clock;
                    if event == Some(GaitEvent::LateStart) {
                        pending.push(SimEvent::LateStart);
                    }
                }
                Err(stop) => {
                    pending.push(stop);
                    outcome = match stop {
                        SimEvent::Fall(reason) => Outcome::Fell(reason),
                        _ => Outcome::Boundary,
                    };
                    break;
                }
            }

            let finite = self.com.pos.iter().chain(self.com.vel.iter()).all(|v| v.is_finite());
            if !finite {
                pending.push(SimEvent::Fall(FallReason::NonFinite));
                outcome = Outcome::Fell(FallReason::NonFinite);
                break;
            }
            if self.com.pos[2] - self.stance[2] < self.scenario.sim.fall_height {
                pending.push(SimEvent::Fall(FallReason::Collapse));
                outcome = Outcome::Fell(FallReason::Collapse);
                break;
            }
            let reach = (self.com.pos[0] - self.stance[0]).hypot(self.com.pos[1] - self.stance[1]);
            if reach > self.swing_params.offset {
                pending.push(SimEvent::Fall(FallReason::Overreach));
                outcome = Outcome::Fell(FallReason::Overreach);
                break;
            }
            if !self.terrain.contains(self.com.pos[0]) {
                pending.push(SimEvent::Boundary);
                outcome = Outcome::Boundary;
                break;
            }
        }
        if outcome != Outcome::Completed || self.tick == n_ticks {
            rows.push(self.row(pending));
        }
        SimLog { rows, steps, outcome, latencies_us: latencies }
    }

    /// Moves the swing foot over one tick. Returns the contact point on
    /// touchdown, or the terminating event.
    fn advance_swing(&mut self, dt: f64, events: &mut Vec<SimEvent>) -> Result<Option<[f64; 3]>, SimEvent> {
        let prev = self.swing;
        let mut clock = self.clock;
        clock.phase_time = (clock.phase_time + dt).min(clock.step_duration);
        let next = if self.clock.late {
            [prev[0], prev[1], prev[2] - self.scenario.sim.drop_rate * dt]
        } else {
            swing_foot_ref(&clock, self.swing_start, self.target, self.com_z_step_start, &self.swing_params).position
        };
        // A compliant foot lands at the scheduled step end, dropping onto the
        // terrain if it is still in the air.
        let compliant = self.scenario.sim.contact_mode == ContactMode::Compliant;
        let at_end = clock.phase_time >= clock.step_duration - 1e-9;
        let descending = self.clock.late || if compliant { at_end } else { clock.in_second_half() };

        // Risers between the previous and the new foot position.
        let apex = self.com_z_step_start - self.swing_params.offset + self.swing_params.foot_height;
        let crossed: Vec<_> = self.terrain.edges_crossed(prev[0], next[0]).copied().collect();
        for edge in crossed {
            let s = if next[0] != prev[0] { (edge.x - prev[0]) / (next[0] - prev[0]) } else { 1.0 };
            let z_cross = prev[2] + s * (next[2] - prev[2]);
            if z_cross >= edge.top() {
                continue;
            }
            if edge.top() > apex + 1e-9 {
                log::info!("toe stub at x={:.3}: riser top {:.3} above apex {:.3}", edge.x, edge.top(), apex);
                self.swing = [edge.x, prev[1] + s * (next[1] - prev[1]), z_cross];
                return Err(SimEvent::Fall(FallReason::ToeStub));
            }
            if descending {
                let y = prev[1] + s * (next[1] - prev[1]);
                let contact = [edge.x, y, edge.top()];
                self.swing = contact;
                events.push(SimEvent::EdgeLanding);
                return Ok(Some(contact));
            }
        }

        let ground = self.terrain.height_at(next[0], next[1]).map_err(|_| SimEvent::Boundary)?;
        if next[2] <= ground + 1e-9 || (compliant && at_end) {
            if next[2] > ground + 1e-9 {
                events.push(SimEvent::FootDrop);
            }
            let contact = [next[0], next[1], ground];
            self.swing = contact;
            if descending {
                return Ok(Some(contact));
            }
            if clock.in_second_half() && !self.grounded {
                self.grounded = true;
                events.push(SimEvent::EarlyContact);
            }
            log::debug!("swing foot on the ground at phase {:.3}", clock.phase_time);
            return Ok(None);
        }
        self.swing = next;
        Ok(None)
    }

    fn exchange(&mut self, contact: [f64; 3], clock: GaitClock, event: GaitEvent, r_end: f64, steps: &mut Vec<StepRecord>) {
        let old = self.stance;
        self.stance = contact;
        self.grounded = false;
        self.swing_start = old;
        self.swing = old;
        self.clock = clock;
        self.schedule = StepSchedule {
            anchor: VerticalState::new(self.com.pos[2] - contact[2], self.com.vel[2]),
            // Shift the reference by the change in contact height so the leg
            // force is continuous across the exchange.
            r_start: r_end - (contact[2] - old[2]),
            delta_r: self.next_delta_r,
        };
        // The swing never aims below the new stance foot.
        self.com_z_step_start = self.com.pos[2].max(contact[2] + self.swing_params.offset);
        self.target = [old[0], old[1]];
        steps.push(StepRecord { t: self.time(), support: clock.support, contact, event });
    }
}

/// Validates and runs `scenario` to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<SimLog, ConfigError> {
    Ok(Simulator::new(scenario)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::horizontal::discretize_lip;
    use crate::vertical::discretize_vertical;
    use nalgebra::Vector2;

    fn params() -> DynamicsParams {
        DynamicsParams { omega_x: (9.81f64 / 0.715).sqrt(), omega_z: (1470.0f64 / 14.5).sqrt(), mass: 14.5 }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let com = CoMState { pos: [0.3, -0.1, 0.715 + 0.02], vel: [0.0; 3] };
        let next = step_dynamics(&com, [0.3, -0.1, 0.02], (0.715, 0.715), [0.0; 3], 1e-3, &params());
        for i in 0..3 {
            assert!((next.pos[i] - com.pos[i]).abs() < 1e-12 && next.vel[i].abs() < 1e-12);
        }
    }

    #[test]
    fn rollout_matches_discrete_propagators() {
        let p = params();
        let stance = [0.05, 0.1, 0.0];
        let mut com = CoMState { pos: [0.0, 0.0, 0.70], vel: [0.4, -0.3, 0.1] };
        for _ in 0..100 {
            com = step_dynamics(&com, stance, (0.715, 0.715), [0.0; 3], 1e-3, &p);
        }
        let (ax, bx) = discretize_lip(p.omega_x, 0.1);
        let (az, bz) = discretize_vertical(p.omega_z, 0.1);
        let x = ax * Vector2::new(0.0, 0.4) + bx * 0.05;
        let y = ax * Vector2::new(0.0, -0.3) + bx * 0.1;
        let z = az * Vector2::new(0.70, 0.1) + bz * 0.715;
        for (got, want) in [((com.pos[0], com.vel[0]), x), ((com.pos[1], com.vel[1]), y), ((com.pos[2], com.vel[2]), z)] {
            assert!((got.0 - want[0]).abs() < 1e-9 && (got.1 - want[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn vertical_energy_is_conserved() {
        let p = params();
        let (m, k, g) = (14.5, 1470.0, 9.81);
        let r_int = 0.715 + g / (p.omega_z * p.omega_z);
        let energy = |c: &CoMState| 0.5 * m * c.vel[2].powi(2) + 0.5 * k * (c.pos[2] - r_int).powi(2) + m * g * c.pos[2];
        let mut com = CoMState { pos: [0.0, 0.0, 0.68], vel: [0.0, 0.0, 0.2] };
        let e0 = energy(&com);
        for _ in 0..1000 {
            com = step_dynamics(&com, [0.0; 3], (0.715, 0.715), [0.0; 3], 1e-3, &p);
        }
        assert!((energy(&com) - e0).abs() < 1e-6);
    }

    #[test]
    fn push_adds_impulse_over_mass() {
        let p = DynamicsParams { omega_x: 1e-9, ..params() };
        let mut com = CoMState { pos: [0.0, 0.0, 0.715], vel: [0.0; 3] };
        for _ in 0..100 {
            com = step_dynamics(&com, [0.0, 0.0, 0.0], (0.715, 0.715), [40.0, 0.0, 0.0], 1e-3, &p);
        }
        assert!((com.vel[0] - 40.0 * 0.1 / 14.5).abs() < 0.02 * 0.2759);
        // With the pendulum active the forced response is (a / w) sinh(w t).
        let p = params();
        let mut com = CoMState { pos: [0.0, 0.0, 0.715], vel: [0.0; 3] };
        for _ in 0..100 {
            com = step_dynamics(&com, [0.0, 0.0, 0.0], (0.715, 0.715), [40.0, 0.0, 0.0], 1e-3, &p);
        }
        let a = 40.0 / 14.5;
        assert!((com.vel[0] - a / p.omega_x * (p.omega_x * 0.1).sinh()).abs() < 1e-9);
    }

    #[test]
    fn flat_walk_completes_and_alternates() {
        let scenario = Scenario { duration: 5.0, ..Default::default() };
        let log = run_scenario(&scenario).unwrap();
        assert_eq!(log.outcome, Outcome::Completed);
        assert!(log.steps.len() >= 6);
        assert!(log.steps.windows(2).all(|w| w[0].support != w[1].support));
        assert_eq!(log.rows.len(), 5001);
    }

    #[test]
    fn stance_rests_on_terrain() {
        let scenario = Scenario {
            duration: 6.0,
            terrain: crate::terrain::TerrainSpec::slope(-2.0, 20.0, 0.5, 10.0),
            ..Default::default()
        };
        let terrain = TerrainProfile::build(&scenario.terrain).unwrap();
        let log = run_scenario(&scenario).unwrap();
        for row in log.rows.iter().step_by(50) {
            let h = terrain.height_at(row.stance[0], row.stance[1]).unwrap();
            assert!((row.stance[2] - h).abs() < 1e-9);
        }
    }

    #[test]
    fn contact_modes_agree_on_flat_ground() {
        let mut scenario = Scenario { duration: 4.0, ..Default::default() };
        let compliant = run_scenario(&scenario).unwrap();
        scenario.sim.contact_mode = ContactMode::Exchange;
        let exchange = run_scenario(&scenario).unwrap();
        assert_eq!(compliant.steps.len(), exchange.steps.len());
        for (a, b) in compliant.steps.iter().zip(&exchange.steps) {
            assert!((a.t - b.t).abs() < 1e-9);
            assert!((0..3).all(|i| (a.contact[i] - b.contact[i]).abs() < 1e-6));
        }
    }

    #[test]
    fn riser_above_apex_is_a_toe_stub() {
        let scenario = Scenario {
            duration: 4.0,
            terrain: crate::terrain::TerrainSpec::stairs(-2.0, 20.0, 0.5, vec![0.08], 0.3),
            ..Default::default()
        };
        let log = run_scenario(&scenario).unwrap();
        assert_eq!(log.outcome, Outcome::Fell(FallReason::ToeStub));
    }

    #[test]
    fn leg_force_is_continuous_across_a_step_up() {
        let scenario = Scenario {
            duration: 4.0,
            terrain: crate::terrain::TerrainSpec::stairs(-2.0, 20.0, 0.5, vec![0.03], 3.0),
            ..Default::default()
        };
        let log = run_scenario(&scenario).unwrap();
        assert_eq!(log.outcome, Outcome::Completed);
        let compression = |row: &LogRow| row.r - (row.com[2] - row.stance[2]);
        let mut climbed = false;
        for w in log.rows.windows(2) {
            if w[0].stance != w[1].stance {
                climbed |= w[1].stance[2] > w[0].stance[2] + 0.01;
                assert!((compression(&w[1]) - compression(&w[0])).abs() < 2e-3);
            }
        }
        assert!(climbed);
    }
}
