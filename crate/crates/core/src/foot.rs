//! Side-view spike-foot profiles and their penetration into a rigid substrate
//! line. Lengths are mm unless a field says otherwise.
//!
//! Contact rule: at each roll angle the lowest spike tip may sink below the
//! substrate; the substrate line sits at whichever comes first going up, the
//! next spike tip or the lowest blunt (base-strip) vertex. Blunt features never
//! penetrate on their own.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SimError};
use crate::gait::UnitGeometry;
use crate::magnetics::{setup_field_analytic, ActuationSetup};

/// Roll sampling step for the contact sweep, degrees.
pub const ROLL_STEP_DEG: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootDesign {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    /// degrees
    pub delta: f64,
    /// μm
    pub tip_width: f64,
    /// μm
    pub thickness: f64,
    pub n_spikes: usize,
}

impl Default for FootDesign {
    fn default() -> Self {
        Self { l1: 0.5, l2: 0.8, l3: 1.0, delta: 45.0, tip_width: 10.0, thickness: 50.0, n_spikes: 4 }
    }
}

impl FootDesign {
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    fn tip_mm(&self) -> f64 {
        self.tip_width * 1e-3
    }

    fn strip_height(&self) -> f64 {
        self.thickness * 1e-3
    }

    /// Width of one spike where it meets the base strip.
    pub fn base_width(&self) -> f64 {
        self.tip_mm() + 2.0 * self.l1 * (0.5 * self.delta.to_radians()).tan()
    }

    pub fn strip_length(&self) -> f64 {
        self.n_spikes.saturating_sub(1) as f64 * self.l2 + self.l3
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 90.0) {
            return Err(invalid("delta", "must be in (0, 90) deg"));
        }
        if !(self.l1 >= 0.0) {
            return Err(invalid("l1", "must be >= 0"));
        }
        if !(self.l2 > 0.0 && self.l3 > 0.0 && self.thickness > 0.0 && self.tip_width > 0.0) {
            return Err(invalid("foot", "lengths must be positive"));
        }
        if self.l1 > 0.0 {
            if self.tip_mm() >= self.l1 {
                return Err(invalid("tip_width", "must be much smaller than l1"));
            }
            let wb = self.base_width();
            if self.n_spikes > 1 && wb >= self.l2 {
                return Err(invalid("delta", format!("spikes overlap: base {wb:.3} mm >= pitch {:.3} mm", self.l2)));
            }
            if wb >= self.l3 {
                return Err(invalid("delta", format!("outer spike runs past the strip end (base {wb:.3} mm)")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexKind {
    Base,
    /// Truncated apex corner; both corners of one apex share `spike`.
    Tip {
        spike: usize,
    },
    Root,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootProfile {
    /// Counter-clockwise, y up, strip bottom at y = 0.
    pub vertices: Vec<[f64; 2]>,
    pub kinds: Vec<VertexKind>,
}

pub fn foot_profile(d: &FootDesign) -> Result<FootProfile> {
    d.validate()?;
    let len = d.strip_length();
    let t = d.strip_height();
    let mut vertices = vec![[0.0, 0.0]];
    let mut kinds = vec![VertexKind::Base];
    if d.l1 > 0.0 {
        let (wb, tw) = (d.base_width(), d.tip_mm());
        for k in 0..d.n_spikes {
            let c = 0.5 * d.l3 + k as f64 * d.l2;
            vertices.extend([[c - 0.5 * wb, 0.0], [c - 0.5 * tw, -d.l1], [c + 0.5 * tw, -d.l1], [c + 0.5 * wb, 0.0]]);
            kinds.extend([
                VertexKind::Root,
                VertexKind::Tip { spike: k },
                VertexKind::Tip { spike: k },
                VertexKind::Root,
            ]);
        }
    }
    vertices.extend([[len, 0.0], [len, t], [0.0, t]]);
    kinds.extend([VertexKind::Base; 3]);
    Ok(FootProfile { vertices, kinds })
}

/// Signed shoelace area (positive for counter-clockwise).
pub fn signed_area(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

/// Part of a polygon with y <= `level`.
pub fn clip_below(pts: &[[f64; 2]], level: f64) -> Vec<[f64; 2]> {
    let n = pts.len();
    let mut out = Vec::with_capacity(n + 4);
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let (ina, inb) = (a[1] <= level, b[1] <= level);
        if ina {
            out.push(a);
        }
        if ina != inb {
            let t = (level - a[1]) / (b[1] - a[1]);
            out.push([a[0] + t * (b[0] - a[0]), level]);
        }
    }
    out
}

fn rotate(pts: &[[f64; 2]], roll: f64) -> Vec<[f64; 2]> {
    let (s, c) = roll.sin_cos();
    pts.iter().map(|p| [p[0] * c - p[1] * s, p[0] * s + p[1] * c]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub depth: f64,
    pub area: f64,
    pub gap_present: bool,
    pub level: f64,
}

/// Contact tolerance for deciding whether the strip touches the substrate
/// line; one apex width, which also covers the roll-grid resolution.
fn contact_tol(d: &FootDesign) -> f64 {
    d.tip_mm()
}

pub fn contact_at_roll(profile: &FootProfile, roll: f64, tol: f64) -> Contact {
    let pts = rotate(&profile.vertices, roll);
    let mut tips: Vec<(usize, f64)> = Vec::new();
    let mut blunt = f64::INFINITY;
    let mut lowest = f64::INFINITY;
    for (p, k) in pts.iter().zip(&profile.kinds) {
        lowest = lowest.min(p[1]);
        match *k {
            VertexKind::Tip { spike } => match tips.iter_mut().find(|t| t.0 == spike) {
                Some(t) => t.1 = t.1.min(p[1]),
                None => tips.push((spike, p[1])),
            },
            _ => blunt = blunt.min(p[1]),
        }
    }
    tips.sort_by(|a, b| a.1.total_cmp(&b.1));
    let second_tip = tips.get(1).map_or(f64::INFINITY, |t| t.1);
    let level = blunt.min(second_tip);
    let depth = (level - lowest).max(0.0);
    let area = if depth > 0.0 { signed_area(&clip_below(&pts, level)).abs() } else { 0.0 };
    Contact { depth, area, gap_present: blunt > level + tol, level }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenetrationResult {
    pub depth: f64,
    pub area: f64,
    pub gap_present: bool,
    /// degrees, magnitude of the maximising roll
    pub tilt_at_max: f64,
}

/// Rolls are swept both ways so a mirrored profile gives the same answer.
pub fn penetration(d: &FootDesign, tilt_max: f64) -> Result<PenetrationResult> {
    if !(tilt_max > 0.0 && tilt_max <= 60.0) {
        return Err(invalid("tilt_max", "must be in (0, 60] deg"));
    }
    let profile = foot_profile(d)?;
    if !(signed_area(&profile.vertices) > 0.0) || profile.vertices.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SimError::DegeneratePolygon(format!("{d:?}")));
    }
    Ok(penetration_of(&profile, tilt_max, contact_tol(d)))
}

pub fn penetration_of(profile: &FootProfile, tilt_max: f64, tol: f64) -> PenetrationResult {
    let steps = (tilt_max / ROLL_STEP_DEG).floor() as usize;
    let mut rolls: Vec<f64> = (0..=steps).map(|k| k as f64 * ROLL_STEP_DEG).collect();
    if rolls.last().is_some_and(|r| *r < tilt_max) {
        rolls.push(tilt_max);
    }
    let mut best = PenetrationResult { depth: 0.0, area: 0.0, gap_present: true, tilt_at_max: 0.0 };
    let mut first = true;
    for r in rolls {
        for sign in [1.0, -1.0] {
            let c = contact_at_roll(profile, sign * r.to_radians(), tol);
            if first || c.depth > best.depth {
                best = PenetrationResult { depth: c.depth, area: c.area, gap_present: c.gap_present, tilt_at_max: r };
                first = false;
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub depth: f64,
    pub area: f64,
    pub gap_present: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeSweep {
    pub curve: Vec<SweepPoint>,
    pub depth_argmax: f64,
    pub depth_max: f64,
    pub area_argmax: f64,
    pub area_max: f64,
}

pub fn spike_angle_sweep(base: &FootDesign, deltas: &[f64], tilt_max: f64) -> Result<SpikeSweep> {
    if deltas.is_empty() {
        return Err(invalid("delta_range", "empty"));
    }
    let mut curve = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let r = penetration(&base.with_delta(delta), tilt_max)?;
        curve.push(SweepPoint { delta, depth: r.depth, area: r.area, gap_present: r.gap_present });
    }
    let pick = |f: fn(&SweepPoint) -> f64| {
        curve.iter().fold((curve[0].delta, f(&curve[0])), |acc, p| if f(p) > acc.1 { (p.delta, f(p)) } else { acc })
    };
    let (depth_argmax, depth_max) = pick(|p| p.depth);
    let (area_argmax, area_max) = pick(|p| p.area);
    Ok(SpikeSweep { curve, depth_argmax, depth_max, area_argmax, area_max })
}

/// Evenly spaced samples over [lo, hi], inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftBudget {
    /// mN·mm
    pub torque_max: f64,
    /// mN
    pub lift_available: f64,
    /// mN
    pub lift_required: f64,
    pub feasible: bool,
}

/// Force measured to lift one foot against the substrate, mN.
pub const LIFT_REQUIRED_MN: f64 = 0.1;

pub fn lifting_force_budget(setup: &ActuationSetup, geom: &UnitGeometry) -> LiftBudget {
    let bmax =
        (0..360).map(|k| setup_field_analytic(&setup.at_alpha(2.0 * PI * k as f64 / 360.0)).norm()).fold(0.0, f64::max);
    // N·m -> mN·mm
    let torque_max = geom.moment * bmax * 1e6;
    let lift_available = torque_max / geom.length;
    LiftBudget {
        torque_max,
        lift_available,
        lift_required: LIFT_REQUIRED_MN,
        feasible: lift_available >= LIFT_REQUIRED_MN,
    }
}
