//! Step phasing and swing-foot trajectories.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// 0 for left support, 1 for right.
    pub fn flag(self) -> u8 {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    /// Lateral sign of this foot, left at `+y`.
    pub fn lateral_sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitClock {
    pub step_index: u64,
    /// Time since the current step began, held at `step_duration` while late.
    pub phase_time: f64,
    pub support: Side,
    pub step_duration: f64,
    /// The nominal step ended without contact; waiting for touchdown.
    pub late: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaitEvent {
    /// Contact at the nominal end of the step.
    StepEnd,
    /// Contact during the second half of swing.
    EarlyTouchdown,
    /// The step ran out without contact.
    LateStart,
    /// Contact after the nominal end of the step.
    LateTouchdown,
}

impl GaitEvent {
    pub fn exchanges_support(self) -> bool {
        !matches!(self, GaitEvent::LateStart)
    }

    pub fn label(self) -> &'static str {
        match self {
            GaitEvent::StepEnd => "step_end",
            GaitEvent::EarlyTouchdown => "early_touchdown",
            GaitEvent::LateStart => "late_start",
            GaitEvent::LateTouchdown => "late_touchdown",
        }
    }
}

impl GaitClock {
    pub fn new(support: Side, step_duration: f64) -> Self {
        Self { step_index: 0, phase_time: 0.0, support, step_duration, late: false }
    }

    pub fn in_second_half(&self) -> bool {
        self.phase_time >= 0.5 * self.step_duration
    }
}

const END_TOL: f64 = 1e-9;

/// Advances the clock by `dt`; `touchdown` reports swing-foot contact at the
/// end of the interval.
pub fn advance_clock(clock: GaitClock, dt: f64, touchdown: bool) -> (GaitClock, Option<GaitEvent>) {
    let mut next = clock;
    next.phase_time = (clock.phase_time + dt).min(clock.step_duration);
    let at_end = clock.phase_time + dt >= clock.step_duration - END_TOL;
    if touchdown {
        if next.in_second_half() || clock.late {
            let event = if clock.late {
                GaitEvent::LateTouchdown
            } else if at_end {
                GaitEvent::StepEnd
            } else {
                GaitEvent::EarlyTouchdown
            };
            let flipped = GaitClock {
                step_index: clock.step_index + 1,
                phase_time: 0.0,
                support: clock.support.other(),
                step_duration: clock.step_duration,
                late: false,
            };
            return (flipped, Some(event));
        }
        log::warn!("ignoring contact at phase {:.3} s in the first half of swing", next.phase_time);
    }
    if at_end && !clock.late {
        next.late = true;
        return (next, Some(GaitEvent::LateStart));
    }
    (next, None)
}

/// Degree-5 polynomial `sum c_i t^i` over `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticSegment {
    pub coeffs: [f64; 6],
    pub duration: f64,
}

impl QuinticSegment {
    /// Position, velocity and acceleration at `t`, clamped to the segment.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let t = t.clamp(0.0, self.duration);
        let c = &self.coeffs;
        let p = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
        let v = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
        let a = 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
        (p, v, a)
    }
}

pub fn quintic_coeffs(p0: f64, v0: f64, a0: f64, p1: f64, v1: f64, a1: f64, t: f64) -> QuinticSegment {
    let h = p1 - p0;
    let (t2, t3) = (t * t, t * t * t);
    let c3 = (20.0 * h - (8.0 * v1 + 12.0 * v0) * t - (3.0 * a0 - a1) * t2) / (2.0 * t3);
    let c4 = (-30.0 * h + (14.0 * v1 + 16.0 * v0) * t + (3.0 * a0 - 2.0 * a1) * t2) / (2.0 * t3 * t);
    let c5 = (12.0 * h - 6.0 * (v1 + v0) * t + (a1 - a0) * t2) / (2.0 * t3 * t2);
    QuinticSegment { coeffs: [p0, v0, 0.5 * a0, c3, c4, c5], duration: t }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingRef {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub acceleration: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingParams {
    pub foot_height: f64,
    /// Subtracted from the CoM height at step start to get the landing height.
    pub offset: f64,
}

impl Default for SwingParams {
    fn default() -> Self {
        Self { foot_height: 0.05, offset: 0.715 }
    }
}

/// Swing-foot reference at `clock.phase_time` for a swing that began at
/// `start` and lands at `target_xy`.
pub fn swing_foot_ref(
    clock: &GaitClock,
    start: [f64; 3],
    target_xy: [f64; 2],
    com_z_at_step_start: f64,
    params: &SwingParams,
) -> SwingRef {
    let big_t = clock.step_duration;
    let t = clock.phase_time.clamp(0.0, big_t);
    let mut out = SwingRef { position: [0.0; 3], velocity: [0.0; 3], acceleration: [0.0; 3] };
    for axis in 0..2 {
        let seg = quintic_coeffs(start[axis], 0.0, 0.0, target_xy[axis], 0.0, 0.0, big_t);
        let (p, v, a) = seg.eval(t);
        out.position[axis] = p;
        out.velocity[axis] = v;
        out.acceleration[axis] = a;
    }
    let land = com_z_at_step_start - params.offset;
    let apex = land + params.foot_height;
    let half = 0.5 * big_t;
    let (p, v, a) = if t <= half {
        quintic_coeffs(start[2], 0.0, 0.0, apex, 0.0, 0.0, half).eval(t)
    } else {
        quintic_coeffs(apex, 0.0, 0.0, land, 0.0, 0.0, half).eval(t - half)
    };
    out.position[2] = p;
    out.velocity[2] = v;
    out.acceleration[2] = a;
    out
}
