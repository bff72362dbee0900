//! Single-unit crawl kinematics. The body's long axis follows the centre
//! field; one foot tip stays pinned while the other swings, and the roles swap
//! whenever the field elevation changes sign.
//!
//! Foot A is the tail (−u end), foot B the head (+u end). Positions are mm,
//! the crawl surface is z = 0.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SimError};
use crate::magnetics::{rotor_field_x_max, setup_field_analytic, static_field_y, ActuationSetup, Surface};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitGeometry {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// mg
    pub mass: f64,
    /// A·m²
    pub moment: f64,
}

impl Default for UnitGeometry {
    fn default() -> Self {
        Self { length: 3.1, width: 1.6, height: 2.0, mass: 20.0, moment: 1.68e-3 }
    }
}

impl UnitGeometry {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length", self.length),
            ("width", self.width),
            ("height", self.height),
            ("mass", self.mass),
            ("moment", self.moment),
        ] {
            if !(v > 0.0) {
                return Err(invalid(name, "must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Foot {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitState {
    pub position: Vector3<f64>,
    pub heading: f64,
    pub anchored_foot: Foot,
    pub alpha_local: f64,
    pub pose_angle: f64,
    /// Pinned tip of the anchored foot; stays bit-identical until the next swap.
    pub anchor_tip: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    pub frequency: f64,
    pub alpha_step: f64,
    pub surface: Surface,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self { frequency: 1.0, alpha_step: 3f64.to_radians(), surface: Surface::Horizontal }
    }
}

impl GaitParams {
    pub fn validate(&self) -> Result<()> {
        // zero frequency is allowed: the drive is simply stopped
        if !(0.0..=10.0).contains(&self.frequency) {
            return Err(invalid("frequency", "must be in [0, 10] Hz"));
        }
        if !(self.alpha_step > 0.0 && self.alpha_step <= PI / 8.0) {
            return Err(invalid("alpha_step", "must be in (0, pi/8]"));
        }
        Ok(())
    }

    pub fn tick_seconds(&self) -> f64 {
        if self.frequency > 0.0 {
            self.alpha_step / (2.0 * PI * self.frequency)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitSample {
    pub tick: u64,
    pub alpha: f64,
    pub center: Vector3<f64>,
    pub tip_a: Vector3<f64>,
    pub tip_b: Vector3<f64>,
    pub pose_angle: f64,
    pub anchored_foot: Foot,
}

/// Unit vector of the centre field for the setup's yaw at drive phase `alpha`.
fn axis(setup: &ActuationSetup, alpha: f64) -> Result<Vector3<f64>> {
    setup_field_analytic(&setup.at_alpha(alpha)).try_normalize(0.0).ok_or(SimError::ZeroField)
}

fn elevation(u: &Vector3<f64>) -> Result<f64> {
    let phi = u.z.asin();
    if phi.abs() >= PI / 2.0 - 1e-9 {
        return Err(SimError::UnphysicalPose { deg: phi.to_degrees() });
    }
    Ok(phi)
}

fn preferred_anchor(u: &Vector3<f64>) -> Option<Foot> {
    if u.z > 0.0 {
        Some(Foot::A)
    } else if u.z < 0.0 {
        Some(Foot::B)
    } else {
        None
    }
}

fn tips(anchor: Foot, pin: Vector3<f64>, u: &Vector3<f64>, len: f64) -> (Vector3<f64>, Vector3<f64>) {
    match anchor {
        Foot::A => (pin, pin + len * u),
        Foot::B => (pin - len * u, pin),
    }
}

impl GaitState {
    /// Unit resting with its body centre above `center_xy` at drive phase `alpha`.
    pub fn at_rest(setup: &ActuationSetup, geom: &UnitGeometry, alpha: f64, center_xy: [f64; 2]) -> Result<Self> {
        let u = axis(setup, alpha)?;
        let pose_angle = elevation(&u)?;
        let anchored_foot = preferred_anchor(&u).unwrap_or(Foot::B);
        let half = 0.5 * geom.length * u;
        let c = Vector3::new(center_xy[0], center_xy[1], 0.0);
        let mut pin = match anchored_foot {
            Foot::A => c - half,
            Foot::B => c + half,
        };
        pin.z = 0.0;
        let (a, b) = tips(anchored_foot, pin, &u, geom.length);
        Ok(Self {
            position: 0.5 * (a + b),
            heading: setup.beta,
            anchored_foot,
            alpha_local: alpha,
            pose_angle,
            anchor_tip: pin,
        })
    }

    pub fn tips(&self, setup: &ActuationSetup, geom: &UnitGeometry) -> Result<(Vector3<f64>, Vector3<f64>)> {
        let u = axis(setup, self.alpha_local)?;
        Ok(tips(self.anchored_foot, self.anchor_tip, &u, geom.length))
    }

    /// Rigidly shift the unit in the surface plane.
    pub fn translate(&mut self, d: [f64; 2]) {
        let v = Vector3::new(d[0], d[1], 0.0);
        self.position += v;
        self.anchor_tip += v;
    }

    fn sample(&self, tick: u64, setup: &ActuationSetup, geom: &UnitGeometry) -> Result<GaitSample> {
        let (tip_a, tip_b) = self.tips(setup, geom)?;
        Ok(GaitSample {
            tick,
            alpha: self.alpha_local,
            center: self.position,
            tip_a,
            tip_b,
            pose_angle: self.pose_angle,
            anchored_foot: self.anchored_foot,
        })
    }
}

/// Advance one unit from its current phase to `alpha_to`, swapping the anchor at
/// each elevation zero crossing on the way. `alpha_to - alpha_local` must not
/// exceed pi/8 so at most one crossing can occur.
pub fn advance_to(
    state: &GaitState,
    setup: &ActuationSetup,
    geom: &UnitGeometry,
    alpha_to: f64,
) -> Result<(GaitState, bool)> {
    let mut s = *state;
    s.heading = setup.beta;
    let u1 = axis(setup, alpha_to)?;
    let mut swapped = false;
    if let Some(want) = preferred_anchor(&u1) {
        if want != s.anchored_foot {
            // bisection on the elevation sign; the landing foot becomes the pin
            let side = |a: f64| -> Result<bool> { Ok(preferred_anchor(&axis(setup, a)?) == Some(want)) };
            let (mut lo, mut hi) = (s.alpha_local, alpha_to);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if side(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let uc = axis(setup, hi)?;
            let (a, b) = tips(s.anchored_foot, s.anchor_tip, &uc, geom.length);
            let mut landing = if s.anchored_foot == Foot::A { b } else { a };
            landing.z = 0.0;
            s.anchor_tip = landing;
            s.anchored_foot = want;
            swapped = true;
        }
    }
    s.pose_angle = elevation(&u1)?;
    s.alpha_local = alpha_to;
    let (a, b) = tips(s.anchored_foot, s.anchor_tip, &u1, geom.length);
    s.position = 0.5 * (a + b);
    Ok((s, swapped))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GaitTrace {
    pub samples: Vec<GaitSample>,
    pub swaps: usize,
    pub dt: f64,
}

/// Advance `ticks` ticks; the trace holds the initial sample plus one per tick.
pub fn step_simulate(
    state: &GaitState,
    setup: &ActuationSetup,
    geom: &UnitGeometry,
    params: &GaitParams,
    ticks: u64,
) -> Result<(GaitState, GaitTrace)> {
    setup.validate()?;
    geom.validate()?;
    params.validate()?;
    let step = if params.frequency > 0.0 { params.alpha_step } else { 0.0 };
    let mut s = *state;
    let mut trace = GaitTrace { samples: Vec::with_capacity(ticks as usize + 1), swaps: 0, dt: params.tick_seconds() };
    trace.samples.push(s.sample(0, setup, geom)?);
    for t in 1..=ticks {
        let (next, swapped) = advance_to(&s, setup, geom, s.alpha_local + step)?;
        if swapped {
            trace.swaps += 1;
        } else {
            debug_assert_eq!(next.anchor_tip, s.anchor_tip);
        }
        s = next;
        trace.samples.push(s.sample(t, setup, geom)?);
    }
    Ok((s, trace))
}

pub fn azimuth_swing(setup: &ActuationSetup) -> f64 {
    2.0 * rotor_field_x_max(setup).atan2(static_field_y(setup))
}

pub fn stride_length(setup: &ActuationSetup, geom: &UnitGeometry) -> f64 {
    2.0 * geom.length * (0.5 * azimuth_swing(setup)).sin()
}

pub fn crawl_velocity(setup: &ActuationSetup, geom: &UnitGeometry, frequency: f64) -> f64 {
    stride_length(setup, geom) * frequency
}

/// Swing-foot tip over the half-cycle alpha = 90°..270°, relative to the pinned tail tip.
pub fn foot_path(setup: &ActuationSetup, geom: &UnitGeometry, samples: usize) -> Result<Vec<Vector3<f64>>> {
    let n = samples.max(2);
    (0..n)
        .map(|k| {
            let a = PI / 2.0 + PI * k as f64 / (n - 1) as f64;
            let mut p = geom.length * axis(setup, a)?;
            if k == 0 || k == n - 1 {
                p.z = 0.0;
            }
            Ok(p)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootPathStats {
    pub chord: f64,
    pub max_lift: f64,
    /// Total up-and-down travel of the tip over the swing.
    pub vertical_travel: f64,
    /// vertical_travel / chord
    pub lift_ratio: f64,
}

pub fn foot_path_stats(path: &[Vector3<f64>]) -> FootPathStats {
    let chord = match (path.first(), path.last()) {
        (Some(a), Some(b)) => (b - a).xy().norm(),
        _ => 0.0,
    };
    let max_lift = path.iter().map(|p| p.z).fold(0.0, f64::max);
    let vertical_travel: f64 = path.windows(2).map(|w| (w[1].z - w[0].z).abs()).sum();
    FootPathStats {
        chord,
        max_lift,
        vertical_travel,
        lift_ratio: if chord > 0.0 { vertical_travel / chord } else { f64::INFINITY },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub path: Vec<[f64; 2]>,
    /// Beta applied during each cycle, rad.
    pub beta_schedule: Vec<f64>,
    pub cycles: usize,
}

fn wrap_pi(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Cycle budget: four times the nominal cycle count plus a fixed allowance.
pub fn cycle_budget(waypoints: &[[f64; 2]], stride: f64) -> usize {
    let len: f64 = waypoints.windows(2).map(|w| dist(w[0], w[1])).sum();
    if stride > 0.0 {
        (4.0 * len / stride).ceil() as usize + 50
    } else {
        50
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Crawl through `waypoints` with a proportional heading controller that
/// retunes beta once per drive cycle.
pub fn trajectory_follow(
    waypoints: &[[f64; 2]],
    setup: &ActuationSetup,
    geom: &UnitGeometry,
    params: &GaitParams,
    gain: f64,
) -> Result<Trajectory> {
    if waypoints.len() < 2 {
        return Err(invalid("waypoints", "need at least two"));
    }
    params.validate()?;
    let stride = stride_length(setup, geom);
    let ticks_per_cycle = (2.0 * PI / params.alpha_step).round() as u64;
    let budget = cycle_budget(waypoints, stride);

    let first = waypoints[0];
    let mut su = *setup;
    su.beta = (waypoints[1][1] - first[1]).atan2(waypoints[1][0] - first[0]);
    let mut state = GaitState::at_rest(&su, geom, 0.0, first)?;
    let mut path = vec![[state.position.x, state.position.y]];
    let mut schedule = Vec::new();
    let mut idx = 1;
    let last = waypoints.len() - 1;

    for cycle in 0..budget {
        let here = [state.position.x, state.position.y];
        while idx < last && dist(here, waypoints[idx]) < stride {
            idx += 1;
        }
        if idx == last && dist(here, waypoints[last]) <= stride {
            return Ok(Trajectory { path, beta_schedule: schedule, cycles: cycle });
        }
        let tgt = waypoints[idx];
        let bearing = (tgt[1] - here[1]).atan2(tgt[0] - here[0]);
        su.beta = wrap_pi(su.beta + gain * wrap_pi(bearing - su.beta));
        schedule.push(su.beta);
        let (next, tr) = step_simulate(&state, &su, geom, params, ticks_per_cycle)?;
        path.extend(tr.samples.iter().skip(1).map(|s| [s.center.x, s.center.y]));
        state = next;
    }
    Err(SimError::NoConvergence { cycles: budget, partial: path })
}

/// Largest distance from any path point to the waypoint polyline.
pub fn cross_track_error(path: &[[f64; 2]], waypoints: &[[f64; 2]]) -> f64 {
    path.iter()
        .map(|p| waypoints.windows(2).map(|w| point_segment_distance(*p, w[0], w[1])).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let l2 = dx * dx + dy * dy;
    let t = if l2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / l2).clamp(0.0, 1.0) } else { 0.0 };
    dist(p, [a[0] + t * dx, a[1] + t * dy])
}
