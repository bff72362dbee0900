//! Scenario configuration, reference dataset, sweeps, validation report and
//! table export.
//!
//! Config files are one JSON document whose keys carry their unit
//! (`h_mm`, `freq_hz`, ...); unknown keys are rejected.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::convoy::{
    convoy_force_profile, convoy_lags, convoy_step, force_profile_with_lags, local_phase_lag, max_pairwise_lag,
    payload_feasibility, ConvoyConfig, ConvoyState, Region, SPACING_MIN_MM,
};
use crate::error::{Result, SimError};
use crate::foot::{lifting_force_budget, linspace, penetration, spike_angle_sweep, FootDesign};
use crate::gait::{crawl_velocity, foot_path, foot_path_stats, stride_length, GaitParams, GaitState, UnitGeometry};
use crate::magnetics::{
    cycle_gradient, orientation_cycle, pose_angle_max, rotor_field_z_max, static_field_y, ActuationSetup, Surface,
};

// ---------------------------------------------------------------- config

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetupConfig {
    pub m_s_am2: f64,
    pub m_r_am2: f64,
    pub w_mm: f64,
    pub h_mm: f64,
    pub beta_deg: f64,
}

impl Default for SetupConfig {
    fn default() -> Self {
        Self { m_s_am2: 205.4, m_r_am2: 133.0, w_mm: 259.75, h_mm: 190.5, beta_deg: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitConfig {
    pub length_mm: f64,
    pub width_mm: f64,
    pub height_mm: f64,
    pub mass_mg: f64,
    pub moment_am2: f64,
}

impl Default for UnitConfig {
    fn default() -> Self {
        let g = UnitGeometry::default();
        Self { length_mm: g.length, width_mm: g.width, height_mm: g.height, mass_mg: g.mass, moment_am2: g.moment }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FootConfig {
    pub l1_mm: f64,
    pub l2_mm: f64,
    pub l3_mm: f64,
    pub delta_deg: f64,
    pub tip_width_um: f64,
    pub thickness_um: f64,
    pub n_spikes: usize,
    pub tilt_max_deg: f64,
    pub sweep_min_deg: f64,
    pub sweep_max_deg: f64,
    pub sweep_samples: usize,
}

impl Default for FootConfig {
    fn default() -> Self {
        let d = FootDesign::default();
        Self {
            l1_mm: d.l1,
            l2_mm: d.l2,
            l3_mm: d.l3,
            delta_deg: d.delta,
            tip_width_um: d.tip_width,
            thickness_um: d.thickness,
            n_spikes: d.n_spikes,
            tilt_max_deg: 39.0,
            sweep_min_deg: 10.0,
            sweep_max_deg: 60.0,
            sweep_samples: 26,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvoySection {
    pub n_units: usize,
    pub spacing_mm: f64,
    pub slack_mm: f64,
    pub payload_length_mm: f64,
    pub payload_mass_mg: f64,
    pub per_unit_force_mn: f64,
    pub anchoring_cap_mn: f64,
    pub drag_coefficient: f64,
}

impl Default for ConvoySection {
    fn default() -> Self {
        let c = ConvoyConfig::default();
        Self {
            n_units: c.n_units,
            spacing_mm: c.spacing,
            slack_mm: c.slack,
            payload_length_mm: c.payload_length,
            payload_mass_mg: c.payload_mass,
            per_unit_force_mn: c.per_unit_force,
            anchoring_cap_mn: c.anchoring_cap,
            drag_coefficient: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub alpha_step_deg: f64,
    pub freq_hz: f64,
    pub tick_rate_hz: f64,
    pub gain: f64,
    pub surface: Surface,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { alpha_step_deg: 3.0, freq_hz: 1.0, tick_rate_hz: 30.0, gain: 1.0, surface: Surface::Horizontal }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub setup: SetupConfig,
    pub unit: UnitConfig,
    pub foot: FootConfig,
    pub convoy: ConvoySection,
    pub sim: SimConfig,
    pub scene: String,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            setup: SetupConfig::default(),
            unit: UnitConfig::default(),
            foot: FootConfig::default(),
            convoy: ConvoySection::default(),
            sim: SimConfig::default(),
            scene: "straight".into(),
            output: OutputConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut s = String::new();
        std::fs::File::open(path)?.read_to_string(&mut s)?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        self.actuation().validate()?;
        self.geometry().validate()?;
        self.gait_params().validate()?;
        self.convoy_config().validate()?;
        if self.sim.tick_rate_hz <= 0.0 {
            return Err(SimError::Config("sim.tick_rate_hz must be > 0".into()));
        }
        Ok(())
    }

    pub fn actuation(&self) -> ActuationSetup {
        let s = &self.setup;
        ActuationSetup {
            m_s: s.m_s_am2,
            m_r: s.m_r_am2,
            w: s.w_mm * 1e-3,
            h: s.h_mm * 1e-3,
            alpha: 0.0,
            beta: s.beta_deg.to_radians(),
        }
    }

    pub fn geometry(&self) -> UnitGeometry {
        let u = &self.unit;
        UnitGeometry {
            length: u.length_mm,
            width: u.width_mm,
            height: u.height_mm,
            mass: u.mass_mg,
            moment: u.moment_am2,
        }
    }

    pub fn foot_design(&self) -> FootDesign {
        let f = &self.foot;
        FootDesign {
            l1: f.l1_mm,
            l2: f.l2_mm,
            l3: f.l3_mm,
            delta: f.delta_deg,
            tip_width: f.tip_width_um,
            thickness: f.thickness_um,
            n_spikes: f.n_spikes,
        }
    }

    pub fn convoy_config(&self) -> ConvoyConfig {
        let c = &self.convoy;
        ConvoyConfig {
            n_units: c.n_units,
            spacing: c.spacing_mm,
            slack: c.slack_mm,
            payload_length: c.payload_length_mm,
            payload_mass: c.payload_mass_mg,
            per_unit_force: c.per_unit_force_mn,
            anchoring_cap: c.anchoring_cap_mn,
        }
    }

    pub fn gait_params(&self) -> GaitParams {
        GaitParams {
            frequency: self.sim.freq_hz,
            alpha_step: self.sim.alpha_step_deg.to_radians(),
            surface: self.sim.surface,
        }
    }
}

// ---------------------------------------------------------------- references

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    /// Failing flips the validation exit status.
    Hard,
    /// Reported with pass/fail, never gates.
    Soft,
    /// Compared but the comparison is informational.
    Report,
    /// Measured value carried for context only.
    Data,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compare {
    /// |model − value| ≤ tolerance·|value|
    Within,
    AtMost,
    AtLeast,
    /// Property check; the model returns 1 for true.
    Holds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDatum {
    pub key: String,
    pub value: f64,
    pub unit: String,
    pub tolerance: f64,
    pub provenance: String,
    pub gate: Gate,
    pub compare: Compare,
}

fn datum(key: &str, value: f64, unit: &str, tol: f64, gate: Gate, compare: Compare, prov: &str) -> ReferenceDatum {
    ReferenceDatum { key: key.into(), value, unit: unit.into(), tolerance: tol, provenance: prov.into(), gate, compare }
}

/// Published values the model is checked against.
pub fn reference_dataset() -> Vec<ReferenceDatum> {
    use Compare::*;
    use Gate::*;
    vec![
        datum(
            "field.by_center_mt",
            4.7,
            "mT",
            0.02,
            Hard,
            Within,
            "measured static flux density at the centre, 4.7 mT",
        ),
        datum("field.bz_max_mt", 3.6, "mT", 0.10, Hard, Within, "measured rotating-field maximum, 3.6 mT"),
        datum("field.grad_max_tpm", 0.06, "T/m", 0.01, Hard, AtMost, "centre gradient below 0.06 T/m over a cycle"),
        datum("orient.theta_min_deg", 67.0, "deg", 2.0 / 67.0, Hard, Within, "azimuth swings from 67 deg"),
        datum("orient.theta_max_deg", 112.0, "deg", 2.0 / 112.0, Hard, Within, "azimuth swings to 112 deg"),
        datum("orient.phi_min_deg", -39.0, "deg", 2.0 / 39.0, Hard, Within, "elevation swings from -39 deg"),
        datum("orient.phi_max_deg", 39.0, "deg", 2.0 / 39.0, Hard, Within, "elevation swings to 39 deg"),
        datum("pose.phi_max_h182_deg", 41.0, "deg", 3.0 / 41.0, Hard, Within, "pose angle 41 deg with rotor at 182 mm"),
        datum("pose.phi_max_h238_deg", 22.0, "deg", 3.0 / 22.0, Hard, Within, "pose angle 22 deg with rotor at 238 mm"),
        datum("pose.bz_h182_mt", 4.1, "mT", 0.10, Hard, Within, "rotating field 4.1 mT at 182 mm"),
        datum("pose.bz_h238_mt", 1.9, "mT", 0.10, Hard, Within, "rotating field 1.9 mT at 238 mm"),
        datum("gait.stride_41_mm", 2.5, "mm", 0.20, Hard, Within, "stride 2.5 mm at a 41 deg pose angle"),
        datum("gait.stride_ratio_31", 1.6, "", 0.20, Hard, Within, "stride at 41 deg is 160% of that at 31 deg"),
        datum("gait.stride_ratio_22", 2.2, "", 0.20, Hard, Within, "stride at 41 deg is 220% of that at 22 deg"),
        datum("gait.speed_017hz_mms", 0.4, "mm/s", 0.10, Hard, Within, "0.4 mm/s at 0.17 Hz"),
        datum("gait.speed_17hz_mms", 4.2, "mm/s", 0.10, Hard, Within, "4.2 mm/s at 1.7 Hz"),
        datum("gait.speed_linear", 1.0, "", 0.01, Hard, Holds, "speed rises linearly with drive frequency"),
        datum("gait.foot_lift_ratio", 1.0, "", 0.01, Hard, AtLeast, "swing foot rises more than it travels in-plane"),
        datum("foot.depth_ordering", 1.0, "", 0.01, Hard, Holds, "45 deg spikes penetrate deepest of 15/30/45 deg"),
        datum("foot.gap_pattern", 1.0, "", 0.01, Hard, Holds, "gap under the unit at 15 and 30 deg, none at 45 deg"),
        datum("foot.depth_argmax_deg", 41.0, "deg", 5.0 / 41.0, Soft, Within, "deepest penetration at a 41 deg spike"),
        datum("foot.depth_max_mm", 0.84, "mm", 0.25, Soft, Within, "maximum penetration depth 0.84 mm"),
        datum("foot.area_argmax_deg", 41.0, "deg", 5.0 / 41.0, Soft, Within, "largest penetrating area at 41 deg"),
        datum("foot.area_max_mm2", 0.27, "mm^2", 0.30, Soft, Within, "maximum penetrating area 0.27 mm^2"),
        datum("lift.torque_mnmm", 10.0, "mN*mm", 0.20, Hard, Within, "maximum magnetic torque about 10 mN*mm"),
        datum("lift.available_mn", 3.0, "mN", 0.20, Hard, Within, "lifting force about 3 mN"),
        datum("lift.required_mn", 0.1, "mN", 0.01, Hard, AtLeast, "lifting a foot takes about 0.1 mN"),
        datum("convoy.peak_sublinear", 1.0, "", 0.01, Hard, Holds, "group force does not scale with unit count"),
        datum("convoy.mean_increasing", 1.0, "", 0.01, Hard, Holds, "more units give a higher mean pulling force"),
        datum("convoy.sync_stride", 1.0, "", 0.01, Hard, Holds, "a synchronised convoy strides like one unit"),
        datum("convoy.stopper_bounds", 1.0, "", 0.01, Hard, Holds, "stoppers keep units at least 3 mm apart"),
        datum("convoy.ratio2", 1.6, "", 0.20, Report, Within, "two units pull 1.6 times one unit"),
        datum("convoy.ratio3", 1.8, "", 0.20, Report, Within, "three units pull 1.8 times one unit"),
        datum("convoy.max_lag_deg", 24.0, "deg", 0.20, Report, Within, "maximum phase lag between units 24 deg"),
        datum("convoy.payload_3_units", 1.0, "", 0.01, Report, Holds, "three units carry a 70 mg, 250 mm payload"),
        datum("force.no_feet_mn", 0.27, "mN", 0.1, Data, Within, "propulsive force without feet 0.27 mN"),
        datum("force.feet45_mn", 0.93, "mN", 0.1, Data, Within, "propulsive force with 45 deg feet 0.93 mN"),
        datum("gravity.vertical_tpm", 0.35, "T/m", 0.1, Data, Within, "gradient needed on a vertical wall 0.35 T/m"),
        datum("gravity.inverted_tpm", 0.6, "T/m", 0.1, Data, Within, "gradient needed upside down 0.6 T/m"),
        datum("foot.sim_bias", 0.14, "", 0.5, Data, Within, "geometric simulation reads 14% below measurements"),
    ]
}

// ---------------------------------------------------------------- model evaluation

fn b(x: bool) -> f64 {
    if x {
        1.0
    } else {
        0.0
    }
}

/// Setup whose maximum pose angle equals `deg`.
pub fn setup_at_pose(setup: &ActuationSetup, deg: f64) -> ActuationSetup {
    setup.with_pose_angle(deg.to_radians())
}

fn orientation_extremes(setup: &ActuationSetup) -> Result<[f64; 4]> {
    let cyc = orientation_cycle(setup, 720)?;
    let mut e = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for (_, o) in cyc {
        e[0] = e[0].min(o.theta);
        e[1] = e[1].max(o.theta);
        e[2] = e[2].min(o.phi);
        e[3] = e[3].max(o.phi);
    }
    Ok(e.map(f64::to_degrees))
}

fn convoy_properties(cfg: &ScenarioConfig) -> Result<BTreeMap<&'static str, f64>> {
    let setup = cfg.actuation();
    let geom = cfg.geometry();
    let base = cfg.convoy_config();
    let mut peaks = Vec::new();
    let mut means = Vec::new();
    for n in 1..=5 {
        let p = convoy_force_profile(&base.with_units(n), &setup)?;
        peaks.push(p.peak);
        means.push(p.mean);
    }
    let sub = (1..peaks.len()).all(|i| peaks[i] > peaks[i - 1] && peaks[i] < (i + 1) as f64 * peaks[0]);
    let inc = (1..means.len()).all(|i| means[i] > means[i - 1]);

    let params = cfg.gait_params();
    let ticks = (2.0 * PI / params.alpha_step).round() as usize;
    let zero = vec![0.0; base.n_units];
    let mut st = ConvoyState::at_rest(&base, &setup, &geom, zero, [0.0, 0.0])?;
    let c0 = st.centroid();
    for _ in 0..ticks {
        st = convoy_step(&st, &base, &setup, &geom, &params, &[])?;
    }
    let c1 = st.centroid();
    let adv = (c1[0] - c0[0]).hypot(c1[1] - c0[1]);
    let stride = stride_length(&setup, &geom);
    let sync = stride > 0.0 && ((adv - stride) / stride).abs() < 0.01;

    let lags = convoy_lags(&base, &setup)?;
    let mut st = ConvoyState::at_rest(&base, &setup, &geom, lags.clone(), [0.0, 0.0])?;
    let p0 = st.units[0].position;
    let block: Region =
        vec![[p0.x - 1.5, p0.y - 5.0], [p0.x + 1.5, p0.y - 5.0], [p0.x + 1.5, p0.y + 5.0], [p0.x - 1.5, p0.y + 5.0]];
    let mut bounded = true;
    for t in 0..5 * ticks {
        let obst = if t < ticks { std::slice::from_ref(&block) } else { &[] };
        st = convoy_step(&st, &base, &setup, &geom, &params, obst)?;
        bounded &= st.gaps().iter().all(|g| *g >= SPACING_MIN_MM - 1e-9 && *g <= base.spacing_max() + 1e-9);
    }
    let three = payload_feasibility(&base.with_units(3), &setup, cfg.convoy.drag_coefficient)?;

    let mut m = BTreeMap::new();
    m.insert("convoy.peak_sublinear", b(sub));
    m.insert("convoy.mean_increasing", b(inc));
    m.insert("convoy.sync_stride", b(sync));
    m.insert("convoy.stopper_bounds", b(bounded));
    m.insert("convoy.ratio2", peaks[1] / peaks[0]);
    m.insert("convoy.ratio3", peaks[2] / peaks[0]);
    m.insert("convoy.max_lag_deg", max_pairwise_lag(&lags).to_degrees());
    m.insert("convoy.payload_3_units", b(three.feasible));
    Ok(m)
}

fn foot_properties(cfg: &ScenarioConfig) -> Result<BTreeMap<&'static str, f64>> {
    let d = cfg.foot_design();
    let tilt = cfg.foot.tilt_max_deg;
    let r: Vec<_> = [15.0, 30.0, 45.0].iter().map(|x| penetration(&d.with_delta(*x), tilt)).collect::<Result<_>>()?;
    let f = &cfg.foot;
    let sweep = spike_angle_sweep(&d, &linspace(f.sweep_min_deg, f.sweep_max_deg, f.sweep_samples), tilt)?;
    let mut m = BTreeMap::new();
    m.insert("foot.depth_ordering", b(r[2].depth > r[1].depth && r[1].depth > r[0].depth));
    m.insert("foot.gap_pattern", b(r[0].gap_present && r[1].gap_present && !r[2].gap_present));
    m.insert("foot.depth_argmax_deg", sweep.depth_argmax);
    m.insert("foot.depth_max_mm", sweep.depth_max);
    m.insert("foot.area_argmax_deg", sweep.area_argmax);
    m.insert("foot.area_max_mm2", sweep.area_max);
    Ok(m)
}

type Group = Vec<(&'static str, f64)>;

fn field_group(cfg: &ScenarioConfig) -> Result<Group> {
    let setup = cfg.actuation();
    Ok(vec![
        ("field.by_center_mt", static_field_y(&setup) * 1e3),
        ("field.bz_max_mt", rotor_field_z_max(&setup) * 1e3),
        ("field.grad_max_tpm", cycle_gradient(&setup, &Vector3::zeros(), 72)?.max_grad_magnitude),
    ])
}

fn orient_group(cfg: &ScenarioConfig) -> Result<Group> {
    let e = orientation_extremes(&cfg.actuation())?;
    Ok(["orient.theta_min_deg", "orient.theta_max_deg", "orient.phi_min_deg", "orient.phi_max_deg"]
        .into_iter()
        .zip(e)
        .collect())
}

fn pose_group(cfg: &ScenarioConfig) -> Result<Group> {
    let setup = cfg.actuation();
    let mut g = Vec::new();
    for (h, k, kb) in
        [(0.182, "pose.phi_max_h182_deg", "pose.bz_h182_mt"), (0.238, "pose.phi_max_h238_deg", "pose.bz_h238_mt")]
    {
        let s = setup.with_height(h);
        g.push((k, pose_angle_max(&s).to_degrees()));
        g.push((kb, rotor_field_z_max(&s) * 1e3));
    }
    Ok(g)
}

fn gait_group(cfg: &ScenarioConfig) -> Result<Group> {
    let setup = cfg.actuation();
    let geom = cfg.geometry();
    let s41 = setup_at_pose(&setup, 41.0);
    s41.validate()?;
    let st41 = stride_length(&s41, &geom);
    let lin = [0.17, 0.5, 1.0, 1.7]
        .iter()
        .all(|f| crawl_velocity(&s41, &geom, 2.0 * f) == 2.0 * crawl_velocity(&s41, &geom, *f));
    Ok(vec![
        ("gait.stride_41_mm", st41),
        ("gait.stride_ratio_31", st41 / stride_length(&setup_at_pose(&setup, 31.0), &geom)),
        ("gait.stride_ratio_22", st41 / stride_length(&setup_at_pose(&setup, 22.0), &geom)),
        ("gait.speed_017hz_mms", crawl_velocity(&s41, &geom, 0.17)),
        ("gait.speed_17hz_mms", crawl_velocity(&s41, &geom, 1.7)),
        ("gait.speed_linear", b(lin)),
        ("gait.foot_lift_ratio", foot_path_stats(&foot_path(&setup, &geom, 361)?).lift_ratio),
    ])
}

fn lift_group(cfg: &ScenarioConfig) -> Result<Group> {
    let lb = lifting_force_budget(&cfg.actuation(), &cfg.geometry());
    Ok(vec![
        ("lift.torque_mnmm", lb.torque_max),
        ("lift.available_mn", lb.lift_available),
        ("lift.required_mn", lb.lift_available),
    ])
}

fn map_group(m: Result<BTreeMap<&'static str, f64>>) -> Result<Group> {
    m.map(|m| m.into_iter().collect())
}

/// Model values for every requested key. A group whose evaluation fails
/// leaves its keys out and records the error instead of aborting.
fn model_values(cfg: &ScenarioConfig, keys: &[&str]) -> (BTreeMap<String, f64>, BTreeMap<String, String>) {
    let groups: [(&str, &dyn Fn() -> Result<Group>); 7] = [
        ("field.", &|| field_group(cfg)),
        ("orient.", &|| orient_group(cfg)),
        ("pose.", &|| pose_group(cfg)),
        ("gait.", &|| gait_group(cfg)),
        ("foot.", &|| map_group(foot_properties(cfg))),
        ("lift.", &|| lift_group(cfg)),
        ("convoy.", &|| map_group(convoy_properties(cfg))),
    ];
    let mut out = BTreeMap::new();
    let mut errors = BTreeMap::new();
    for (prefix, eval) in groups {
        if !keys.iter().any(|k| k.starts_with(prefix)) {
            continue;
        }
        match eval() {
            Ok(g) => out.extend(g.into_iter().map(|(k, v)| (k.to_string(), v))),
            Err(e) => {
                errors.insert(prefix.to_string(), e.to_string());
            }
        }
    }
    (out, errors)
}

// ---------------------------------------------------------------- validation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub key: String,
    pub gate: Gate,
    pub compare: Compare,
    pub reference: f64,
    pub unit: String,
    pub tolerance: f64,
    pub model: Option<f64>,
    pub pass: Option<bool>,
    pub provenance: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub comparisons: Vec<Comparison>,
    pub hard_failures: Vec<String>,
    pub passed: bool,
}

impl Report {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.comparisons {
            let status = match (c.pass, c.gate) {
                (_, Gate::Data) => "data",
                (Some(true), _) => "PASS",
                (Some(false), _) => "FAIL",
                (None, _) => "n/a",
            };
            let model = c.model.map_or("-".to_string(), fmt_num);
            let _ = writeln!(
                s,
                "{status:4} [{:6}] {:28} model {:>14} ref {} {}",
                format!("{:?}", c.gate).to_lowercase(),
                c.key,
                model,
                fmt_num(c.reference),
                c.unit
            );
        }
        let _ = writeln!(s, "hard failures: {}", self.hard_failures.len());
        s
    }
}

pub fn compare(compare: Compare, model: f64, reference: f64, tol: f64) -> bool {
    match compare {
        Compare::Within => (model - reference).abs() <= tol * reference.abs() + 1e-12,
        Compare::AtMost => model <= reference,
        Compare::AtLeast => model >= reference,
        Compare::Holds => model == 1.0,
    }
}

pub fn validate_all(cfg: &ScenarioConfig) -> Result<Report> {
    validate_with(cfg, &reference_dataset())
}

pub fn validate_with(cfg: &ScenarioConfig, refs: &[ReferenceDatum]) -> Result<Report> {
    if let Some(r) = refs.iter().find(|r| r.provenance.trim().is_empty()) {
        return Err(SimError::MissingProvenance(r.key.clone()));
    }
    if let Some(r) = refs.iter().find(|r| !(r.tolerance > 0.0 && r.tolerance <= 0.5)) {
        return Err(SimError::Config(format!("reference `{}` tolerance outside (0, 0.5]", r.key)));
    }
    let keys: Vec<&str> = refs.iter().filter(|r| r.gate != Gate::Data).map(|r| r.key.as_str()).collect();
    let (models, errors) = model_values(cfg, &keys);
    let mut comparisons = Vec::with_capacity(refs.len());
    let mut hard_failures = Vec::new();
    for r in refs {
        let model = if r.gate == Gate::Data { None } else { models.get(&r.key).copied() };
        let pass = model.map(|m| compare(r.compare, m, r.value, r.tolerance));
        if r.gate == Gate::Hard && pass != Some(true) {
            hard_failures.push(r.key.clone());
        }
        comparisons.push(Comparison {
            key: r.key.clone(),
            gate: r.gate,
            compare: r.compare,
            reference: r.value,
            unit: r.unit.clone(),
            tolerance: r.tolerance,
            model,
            pass,
            provenance: r.provenance.clone(),
            error: errors.iter().find(|(p, _)| r.key.starts_with(p.as_str())).map(|(_, e)| e.clone()),
        });
    }
    let passed = hard_failures.is_empty();
    Ok(Report { comparisons, hard_failures, passed })
}

// ---------------------------------------------------------------- tables and sweeps

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Bool(bool),
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Bool(b) => b.to_string(),
            Cell::Num(v) => fmt_num(*v),
            Cell::Text(s) => s.clone(),
        }
    }

    fn parse(s: &str) -> Cell {
        match s {
            "true" => Cell::Bool(true),
            "false" => Cell::Bool(false),
            _ => s.parse::<f64>().map(Cell::Num).unwrap_or_else(|_| Cell::Text(s.into())),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }
}

/// Twelve significant digits, shortest plain form.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.11e}", v);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, v);
        trim_zeros(&s).to_string()
    } else {
        format!("{}e{}", trim_zeros(mant), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            o => Err(SimError::Config(format!("unknown format `{o}`"))),
        }
    }
}

pub fn to_csv(t: &Table) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(&t.columns)?;
    for r in &t.rows {
        w.write_record(r.iter().map(Cell::render))?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn from_csv(text: &str) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let columns = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(Cell::parse).collect());
    }
    Ok(Table { columns, rows })
}

pub fn to_json(t: &Table) -> Result<String> {
    let arr: Vec<serde_json::Value> = t
        .rows
        .iter()
        .map(|r| {
            let obj = t
                .columns
                .iter()
                .zip(r)
                .map(|(c, v)| {
                    let j = match v {
                        Cell::Num(x) if x.is_finite() => {
                            serde_json::Number::from_f64(fmt_num(*x).parse().expect("formatted number parses"))
                                .map_or(serde_json::Value::Null, serde_json::Value::Number)
                        }
                        Cell::Num(_) => serde_json::Value::Null,
                        Cell::Bool(b) => serde_json::Value::Bool(*b),
                        Cell::Text(s) => serde_json::Value::String(s.clone()),
                    };
                    (c.clone(), j)
                })
                .collect::<serde_json::Map<_, _>>();
            serde_json::Value::Object(obj)
        })
        .collect();
    Ok(serde_json::to_string_pretty(&arr)?)
}

pub fn render(t: &Table, format: Format) -> Result<String> {
    match format {
        Format::Csv => to_csv(t),
        Format::Json => to_json(t),
    }
}

pub fn export(t: &Table, format: Format, path: &Path) -> Result<()> {
    let text = render(t, format)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Field,
    Pose,
    Stride,
    Speed,
    Foot,
    Convoy,
    Phase,
}

impl std::str::FromStr for SweepKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "field" => SweepKind::Field,
            "pose" => SweepKind::Pose,
            "stride" => SweepKind::Stride,
            "speed" => SweepKind::Speed,
            "foot" => SweepKind::Foot,
            "convoy" => SweepKind::Convoy,
            "phase" => SweepKind::Phase,
            o => return Err(SimError::Config(format!("unknown sweep kind `{o}`"))),
        })
    }
}

fn ref_cells(model: f64, reference: Option<(f64, f64)>) -> [Cell; 2] {
    match reference {
        Some((r, tol)) => [Cell::Num(r), Cell::Bool(compare(Compare::Within, model, r, tol))],
        None => [Cell::Text(String::new()), Cell::Text(String::new())],
    }
}

/// Reference (value, tolerance) attached to an exact grid point.
fn lookup(x: f64, table: &[(f64, (f64, f64))]) -> Option<(f64, f64)> {
    table.iter().find(|(k, _)| *k == x).map(|(_, r)| *r)
}

pub fn run_sweep(kind: SweepKind, cfg: &ScenarioConfig) -> Result<Table> {
    cfg.validate()?;
    let setup = cfg.actuation();
    let geom = cfg.geometry();
    Ok(match kind {
        SweepKind::Field => {
            let mut t = Table::new(&["alpha_deg", "bx_mt", "by_mt", "bz_mt", "theta_deg", "phi_deg", "grad_max_tpm"]);
            for k in 0..72 {
                let a = (5 * k) as f64;
                let s = setup.at_alpha(a.to_radians());
                let fs = crate::magnetics::setup_field_full(&s, &Vector3::zeros())?;
                let o = crate::magnetics::field_orientation(&fs.b)?;
                t.push(vec![
                    a.into(),
                    (fs.b.x * 1e3).into(),
                    (fs.b.y * 1e3).into(),
                    (fs.b.z * 1e3).into(),
                    o.theta.to_degrees().into(),
                    o.phi.to_degrees().into(),
                    fs.grad_magnitude().amax().into(),
                ]);
            }
            t
        }
        SweepKind::Pose => {
            let mut t = Table::new(&["h_mm", "phi_max_deg", "bz_max_mt", "reference_deg", "pass"]);
            let mut hs: Vec<f64> = (0..=14).map(|k| 110.0 + 10.0 * k as f64).collect();
            hs.extend([182.0, 238.0]);
            hs.sort_by(f64::total_cmp);
            for h in hs {
                let s = setup.with_height(h * 1e-3);
                let phi = pose_angle_max(&s).to_degrees();
                let r = lookup(h, &[(182.0, (41.0, 3.0 / 41.0)), (238.0, (22.0, 3.0 / 22.0))]);
                let [rc, pc] = ref_cells(phi, r);
                t.push(vec![h.into(), phi.into(), (rotor_field_z_max(&s) * 1e3).into(), rc, pc]);
            }
            t
        }
        SweepKind::Stride => {
            let mut t = Table::new(&["phi_max_deg", "h_mm", "stride_mm", "reference_mm", "pass"]);
            let s41 = stride_length(&setup_at_pose(&setup, 41.0), &geom);
            for phi in [10.0, 15.0, 20.0, 22.0, 25.0, 30.0, 31.0, 35.0, 40.0, 41.0, 45.0] {
                let s = setup_at_pose(&setup, phi);
                let st = stride_length(&s, &geom);
                let r = lookup(phi, &[(41.0, (2.5, 0.2)), (31.0, (s41 / 1.6, 0.2)), (22.0, (s41 / 2.2, 0.2))]);
                let [rc, pc] = ref_cells(st, r);
                t.push(vec![phi.into(), (s.h * 1e3).into(), st.into(), rc, pc]);
            }
            t
        }
        SweepKind::Speed => {
            let mut t = Table::new(&["freq_hz", "velocity_mms", "reference_mms", "pass"]);
            let s41 = setup_at_pose(&setup, 41.0);
            for f in [0.17, 0.5, 1.0, 1.5, 1.7, 2.0] {
                let v = crawl_velocity(&s41, &geom, f);
                let r = lookup(f, &[(0.17, (0.4, 0.1)), (1.7, (4.2, 0.1))]);
                let [rc, pc] = ref_cells(v, r);
                t.push(vec![f.into(), v.into(), rc, pc]);
            }
            t
        }
        SweepKind::Foot => {
            let f = &cfg.foot;
            let sw = spike_angle_sweep(
                &cfg.foot_design(),
                &linspace(f.sweep_min_deg, f.sweep_max_deg, f.sweep_samples),
                f.tilt_max_deg,
            )?;
            let mut t = Table::new(&["delta_deg", "depth_mm", "area_mm2", "gap_present"]);
            for p in sw.curve {
                t.push(vec![p.delta.into(), p.depth.into(), p.area.into(), p.gap_present.into()]);
            }
            t
        }
        SweepKind::Convoy => {
            let mut t =
                Table::new(&["n_units", "peak_mn", "mean_mn", "peak_ratio", "reference_ratio", "within_tolerance"]);
            let base = cfg.convoy_config();
            let one = convoy_force_profile(&base.with_units(1), &setup)?.peak;
            for n in 1..=5 {
                let p = convoy_force_profile(&base.with_units(n), &setup)?;
                let ratio = p.peak / one;
                let r = match n {
                    2 => Some((1.6, 0.2)),
                    3 => Some((1.8, 0.2)),
                    _ => None,
                };
                let [rc, pc] = ref_cells(ratio, r);
                t.push(vec![(n as f64).into(), p.peak.into(), p.mean.into(), ratio.into(), rc, pc]);
            }
            t
        }
        SweepKind::Phase => {
            let mut t = Table::new(&["offset_x_mm", "lag_deg"]);
            for k in 0..=20 {
                let x = k as f64;
                let lag = local_phase_lag(&setup, &Vector3::new(x * 1e-3, 0.0, 0.0))?;
                t.push(vec![x.into(), lag.to_degrees().into()]);
            }
            t
        }
    })
}

/// Sum of unit pulses with no lags; exposed for sweeps over synchronised convoys.
pub fn synchronized_profile(cfg: &ConvoyConfig) -> crate::convoy::ForceProfile {
    force_profile_with_lags(cfg, &vec![0.0; cfg.n_units])
}

/// Unit at rest at the origin; convenience for CLI scenario runs.
pub fn rest_state(cfg: &ScenarioConfig) -> Result<GaitState> {
    GaitState::at_rest(&cfg.actuation(), &cfg.geometry(), 0.0, [0.0, 0.0])
}
