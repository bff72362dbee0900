//! Wire-coupled convoys: per-unit phase lag from field non-uniformity,
//! stopper-bounded spacing, and the summed propulsive force pulse.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SimError};
use crate::gait::{advance_to, GaitParams, GaitState, UnitGeometry};
use crate::magnetics::{superposed_field, ActuationSetup, G, WORKSPACE_HALF_M};

/// Closest allowed centre-to-centre distance, mm.
pub const SPACING_MIN_MM: f64 = 3.0;
/// Phase-lag search resolution, degrees.
pub const LAG_RES_DEG: f64 = 0.5;
/// Anchoring cap fitted once so two units with their geometric lags peak at
/// 1.6x a single unit (default rig, 5 mm spacing); see `calibrate_cap`.
pub const DEFAULT_ANCHORING_CAP_MN: f64 = 1.6939;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvoyConfig {
    pub n_units: usize,
    pub spacing: f64,
    pub slack: f64,
    pub payload_length: f64,
    /// mg
    pub payload_mass: f64,
    /// mN
    pub per_unit_force: f64,
    /// mN
    pub anchoring_cap: f64,
}

impl Default for ConvoyConfig {
    fn default() -> Self {
        Self {
            n_units: 3,
            spacing: 5.0,
            slack: 0.5,
            payload_length: 250.0,
            payload_mass: 70.0,
            per_unit_force: 0.93,
            anchoring_cap: DEFAULT_ANCHORING_CAP_MN,
        }
    }
}

impl ConvoyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.n_units) {
            return Err(invalid("n_units", "must be in 1..=5"));
        }
        if !(self.spacing >= SPACING_MIN_MM) {
            return Err(invalid("spacing", "must be >= 3 mm"));
        }
        if !(self.slack >= 0.0 && self.per_unit_force >= 0.0 && self.anchoring_cap > 0.0 && self.payload_mass >= 0.0) {
            return Err(invalid("convoy", "negative slack/force/mass or non-positive cap"));
        }
        Ok(())
    }

    pub fn with_units(mut self, n: usize) -> Self {
        self.n_units = n;
        self
    }

    pub fn spacing_max(&self) -> f64 {
        self.spacing + self.slack
    }

    /// In-plane offsets (mm, setup frame before yaw) of each unit from the
    /// convoy centre, trailing unit first.
    pub fn offsets(&self) -> Vec<f64> {
        let mid = 0.5 * (self.n_units as f64 - 1.0);
        (0..self.n_units).map(|i| (i as f64 - mid) * self.spacing).collect()
    }
}

fn direction_trace(setup: &ActuationSetup, p: &Vector3<f64>, n: usize) -> Result<Vec<Vector3<f64>>> {
    (0..n)
        .map(|k| {
            let b = superposed_field(&setup.at_alpha(2.0 * PI * k as f64 / n as f64), p)?;
            b.try_normalize(0.0).ok_or(SimError::ZeroField)
        })
        .collect()
}

/// Drive-phase shift (rad, in (−π, π]) that best aligns the field-direction
/// trace at `offset` (m) with the one at the centre.
pub fn local_phase_lag(setup: &ActuationSetup, offset: &Vector3<f64>) -> Result<f64> {
    if offset.iter().any(|c| c.abs() > WORKSPACE_HALF_M) {
        return Err(SimError::OutsideWorkspace(format!("{:?} m", offset.as_slice())));
    }
    if offset.norm() == 0.0 {
        return Ok(0.0);
    }
    let n = (360.0 / LAG_RES_DEG).round() as usize;
    let centre = direction_trace(setup, &Vector3::zeros(), n)?;
    let off = direction_trace(setup, offset, n)?;
    let mut best = (f64::INFINITY, 0usize);
    for shift in 0..n {
        let err: f64 = (0..n).map(|k| (off[(k + shift) % n] - centre[k]).norm_squared()).sum();
        if err < best.0 {
            best = (err, shift);
        }
    }
    let s = if best.1 > n / 2 { best.1 as f64 - n as f64 } else { best.1 as f64 };
    Ok(s * 2.0 * PI / n as f64)
}

/// Lag of each unit at its nominal offset along the (yawed) crawl axis.
pub fn convoy_lags(cfg: &ConvoyConfig, setup: &ActuationSetup) -> Result<Vec<f64>> {
    let (s, c) = setup.beta.sin_cos();
    cfg.offsets().iter().map(|x| local_phase_lag(setup, &(Vector3::new(c * x, s * x, 0.0) * 1e-3))).collect()
}

pub fn max_pairwise_lag(lags: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for a in lags {
        for b in lags {
            m = m.max((a - b).abs());
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvoyState {
    pub units: Vec<GaitState>,
    pub lags: Vec<f64>,
    /// Common drive phase, rad.
    pub alpha: f64,
}

impl ConvoyState {
    /// Units at rest along the crawl axis, centred on `center_xy`.
    pub fn at_rest(
        cfg: &ConvoyConfig,
        setup: &ActuationSetup,
        geom: &UnitGeometry,
        lags: Vec<f64>,
        center_xy: [f64; 2],
    ) -> Result<Self> {
        cfg.validate()?;
        if lags.len() != cfg.n_units {
            return Err(invalid("lags", "one per unit"));
        }
        let (s, c) = setup.beta.sin_cos();
        let units = cfg
            .offsets()
            .iter()
            .zip(&lags)
            .map(|(x, lag)| GaitState::at_rest(setup, geom, *lag, [center_xy[0] + c * x, center_xy[1] + s * x]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { units, lags, alpha: 0.0 })
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.units.len() as f64;
        let (x, y) = self.units.iter().fold((0.0, 0.0), |a, u| (a.0 + u.position.x, a.1 + u.position.y));
        [x / n, y / n]
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.units.windows(2).map(|w| (w[1].position - w[0].position).xy().norm()).collect()
    }
}

/// Anchoring-failure region; a unit whose centre lies inside gets no grip.
pub type Region = Vec<[f64; 2]>;

pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + n - 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
    }
    inside
}

/// One tick: every unit advances at its own lagged phase, units sitting on
/// an obstacle keep their place, then the stoppers are enforced.
pub fn convoy_step(
    state: &ConvoyState,
    cfg: &ConvoyConfig,
    setup: &ActuationSetup,
    geom: &UnitGeometry,
    params: &GaitParams,
    obstacles: &[Region],
) -> Result<ConvoyState> {
    let step = if params.frequency > 0.0 { params.alpha_step } else { 0.0 };
    convoy_advance(state, cfg, setup, geom, state.alpha + step, obstacles)
}

/// Like `convoy_step` but to an explicit drive phase (step ≤ π/8).
pub fn convoy_advance(
    state: &ConvoyState,
    cfg: &ConvoyConfig,
    setup: &ActuationSetup,
    geom: &UnitGeometry,
    alpha_to: f64,
    obstacles: &[Region],
) -> Result<ConvoyState> {
    let mut next = state.clone();
    next.alpha = alpha_to;
    for (u, lag) in next.units.iter_mut().zip(&state.lags) {
        let here = [u.position.x, u.position.y];
        let (mut moved, _) = advance_to(u, setup, geom, alpha_to + lag)?;
        if obstacles.iter().any(|o| point_in_polygon(here, o)) {
            moved.translate([here[0] - moved.position.x, here[1] - moved.position.y]);
        }
        *u = moved;
    }
    enforce_stoppers(&mut next.units, cfg, setup.beta)?;
    Ok(next)
}

const STOPPER_TOL: f64 = 1e-9;

fn enforce_stoppers(units: &mut [GaitState], cfg: &ConvoyConfig, heading: f64) -> Result<()> {
    let dir = [heading.cos(), heading.sin()];
    let (lo, hi) = (SPACING_MIN_MM, cfg.spacing_max());
    for _ in 0..4 * units.len() + 4 {
        let mut changed = false;
        for i in 0..units.len().saturating_sub(1) {
            let v = (units[i + 1].position - units[i].position).xy();
            let d = v.norm();
            // links act along the chain; only coincident units fall back to the heading
            let e = if d > 1e-12 { v / d } else { nalgebra::Vector2::new(dir[0], dir[1]) };
            if d > hi + STOPPER_TOL {
                let k = d - hi;
                units[i].translate([e.x * k, e.y * k]);
                changed = true;
            } else if d < lo - STOPPER_TOL {
                let k = lo - d;
                units[i + 1].translate([e.x * k, e.y * k]);
                changed = true;
            }
        }
        if !changed {
            return Ok(());
        }
    }
    Err(SimError::ConstraintInfeasible("stoppers did not settle".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceProfile {
    pub alpha: Vec<f64>,
    /// mN
    pub total: Vec<f64>,
    pub peak: f64,
    pub mean: f64,
}

/// Samples per drive cycle for force profiles.
pub const PROFILE_SAMPLES: usize = 720;

/// Sum of half-sine pulses, one per unit, saturated by the anchoring cap so
/// a single unit still peaks at exactly `per_unit_force`.
pub fn force_profile_with_lags(cfg: &ConvoyConfig, lags: &[f64]) -> ForceProfile {
    let f = cfg.per_unit_force;
    let cap = cfg.anchoring_cap;
    let alpha: Vec<f64> = (0..PROFILE_SAMPLES).map(|k| 2.0 * PI * k as f64 / PROFILE_SAMPLES as f64).collect();
    let total: Vec<f64> = alpha
        .iter()
        .map(|a| {
            let raw: f64 = lags.iter().map(|l| f * (a + l).sin().max(0.0)).sum();
            if f > 0.0 {
                f * (raw / cap).tanh() / (f / cap).tanh()
            } else {
                0.0
            }
        })
        .collect();
    let peak = total.iter().cloned().fold(0.0, f64::max);
    let mean = total.iter().sum::<f64>() / total.len() as f64;
    ForceProfile { alpha, total, peak, mean }
}

pub fn convoy_force_profile(cfg: &ConvoyConfig, setup: &ActuationSetup) -> Result<ForceProfile> {
    cfg.validate()?;
    Ok(force_profile_with_lags(cfg, &convoy_lags(cfg, setup)?))
}

/// Fit the anchoring cap so peak(2)/peak(1) hits `ratio` (bisection on the cap).
pub fn calibrate_cap(cfg: &ConvoyConfig, setup: &ActuationSetup, ratio: f64) -> Result<f64> {
    if !(ratio > 1.0 && ratio < 2.0) {
        return Err(invalid("ratio", "must be in (1, 2)"));
    }
    let two = cfg.with_units(2);
    let lags = convoy_lags(&two, setup)?;
    let r = |cap: f64| {
        let c = ConvoyConfig { anchoring_cap: cap, ..two };
        force_profile_with_lags(&c, &lags).peak / force_profile_with_lags(&c, &lags[..1]).peak
    };
    let (mut lo, mut hi) = (1e-3 * cfg.per_unit_force, 1e3 * cfg.per_unit_force);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if r(mid) < ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayloadCheck {
    /// mN
    pub drag: f64,
    /// mN
    pub available_mean: f64,
    pub feasible: bool,
}

pub fn payload_feasibility(cfg: &ConvoyConfig, setup: &ActuationSetup, drag_coefficient: f64) -> Result<PayloadCheck> {
    if !(drag_coefficient >= 0.0) {
        return Err(invalid("drag_coefficient", "must be >= 0"));
    }
    // mg -> kg, N -> mN
    let drag = drag_coefficient * cfg.payload_mass * 1e-6 * G * 1e3;
    let available_mean = convoy_force_profile(cfg, setup)?.mean;
    Ok(PayloadCheck { drag, available_mean, feasible: available_mean >= drag })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_offset_has_no_lag() {
        assert_eq!(local_phase_lag(&ActuationSetup::default(), &Vector3::zeros()).unwrap(), 0.0);
        assert!(local_phase_lag(&ActuationSetup::default(), &Vector3::new(0.03, 0.0, 0.0)).is_err());
    }

    #[test]
    fn single_unit_peak_is_exact() {
        let cfg = ConvoyConfig::default().with_units(1);
        let p = convoy_force_profile(&cfg, &ActuationSetup::default()).unwrap();
        assert!((p.peak - cfg.per_unit_force).abs() < 1e-12);
    }

    #[test]
    fn default_cap_matches_calibration() {
        let cap = calibrate_cap(&ConvoyConfig::default(), &ActuationSetup::default(), 1.6).unwrap();
        assert!((cap - DEFAULT_ANCHORING_CAP_MN).abs() < 1e-3, "{cap}");
    }

    #[test]
    fn payload_drag() {
        let cfg = ConvoyConfig::default();
        let s = ActuationSetup::default();
        let c = payload_feasibility(&cfg, &s, 0.5).unwrap();
        assert!((c.drag - 0.343).abs() < 1e-3);
        assert!(payload_feasibility(&cfg, &s, 0.0).unwrap().feasible);
        let zero = ConvoyConfig { per_unit_force: 0.0, ..cfg };
        assert!(!payload_feasibility(&zero, &s, 0.1).unwrap().feasible);
    }

    #[test]
    fn polygon_membership() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(point_in_polygon([0.5, 0.5], &sq));
        assert!(!point_in_polygon([1.5, 0.5], &sq));
    }
}
