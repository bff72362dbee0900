//! Fixed-tick steering session and its JSON protocol.
//!
//! The session is a pure state machine: `submit` queues client commands,
//! `tick` applies everything queued and then advances the drive by one tick.
//! Transport and wall-clock pacing live in the CLI.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::convoy::{convoy_advance, convoy_lags, point_in_polygon, ConvoyConfig, ConvoyState, Region};
use crate::error::{Result, SimError};
use crate::gait::{point_segment_distance, Foot, UnitGeometry};
use crate::magnetics::{setup_field_analytic, ActuationSetup};

pub const FREQ_RANGE_HZ: (f64, f64) = (0.0, 2.0);
pub const ROTOR_HEIGHT_RANGE_MM: (f64, f64) = (110.0, 250.0);
pub const UNITS_RANGE: (usize, usize) = (1, 5);
pub const DEFAULT_TICK_RATE_HZ: f64 = 30.0;
pub const MAX_SUBSTEP_DEG: f64 = 3.0;

// ---------------------------------------------------------------- scenes

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    /// Crawl direction, deg.
    pub heading: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    /// Left and right lumen walls, mm, running start → goal.
    pub walls: Vec<Vec<[f64; 2]>>,
    pub start: StartPose,
    pub goal: Region,
    #[serde(default)]
    pub obstacles: Vec<Region>,
    #[serde(default)]
    pub centerline: Vec<[f64; 2]>,
}

/// Channel of constant or varying width around a centreline.
fn channel(id: &str, center: Vec<[f64; 2]>, width: impl Fn(usize) -> f64, obstacles: Vec<Region>) -> Scene {
    let n = center.len();
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for i in 0..n {
        let a = center[i.saturating_sub(1)];
        let b = center[(i + 1).min(n - 1)];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let l = dx.hypot(dy);
        let nrm = [-dy / l, dx / l];
        let hw = 0.5 * width(i);
        left.push([center[i][0] + hw * nrm[0], center[i][1] + hw * nrm[1]]);
        right.push([center[i][0] - hw * nrm[0], center[i][1] - hw * nrm[1]]);
    }
    let (s0, s1) = (center[0], center[1]);
    let heading = (s1[1] - s0[1]).atan2(s1[0] - s0[0]).to_degrees();
    let start = center[2];
    let e = center[n - 1];
    let (p, q) = (center[n - 2], e);
    let l = (q[0] - p[0]).hypot(q[1] - p[1]);
    let (tx, ty) = ((q[0] - p[0]) / l, (q[1] - p[1]) / l);
    // square goal pocket at the far end, 8 mm deep
    let hw = 0.5 * width(n - 1);
    let back = [e[0] - 8.0 * tx, e[1] - 8.0 * ty];
    let goal = vec![
        [back[0] - hw * ty, back[1] + hw * tx],
        [e[0] - hw * ty, e[1] + hw * tx],
        [e[0] + hw * ty, e[1] - hw * tx],
        [back[0] + hw * ty, back[1] - hw * tx],
    ];
    Scene {
        id: id.into(),
        walls: vec![left, right],
        start: StartPose { x: start[0], y: start[1], heading },
        goal,
        obstacles,
        centerline: center,
    }
}

impl Scene {
    pub const BUNDLED: [&'static str; 3] = ["straight", "s-curve", "bile-duct"];

    pub fn bundled(id: &str) -> Result<Scene> {
        let scene = match id {
            "straight" => {
                let c: Vec<[f64; 2]> = (0..=22).map(|k| [-10.0 + 5.0 * k as f64, 0.0]).collect();
                channel("straight", c, |_| 12.0, Vec::new())
            }
            "s-curve" => {
                let c: Vec<[f64; 2]> = (0..=60)
                    .map(|k| {
                        let x = -10.0 + 2.5 * k as f64;
                        let y = if (10.0..=120.0).contains(&x) {
                            15.0 * (2.0 * PI * (x - 10.0) / 110.0).sin()
                        } else {
                            0.0
                        };
                        [x, y]
                    })
                    .collect();
                channel("s-curve", c, |_| 14.0, Vec::new())
            }
            "bile-duct" => {
                let c: Vec<[f64; 2]> = (0..=50)
                    .map(|k| {
                        let t = k as f64 / 50.0;
                        let x = -10.0 + 110.0 * t;
                        let bend = ((t - 0.2) / 0.8).clamp(0.0, 1.0);
                        let y = 25.0 * (1.0 - (0.5 * PI * bend).cos());
                        [x, y]
                    })
                    .collect();
                // a patch of slick mucosa where feet find no grip
                let slick = c[22];
                let obst = vec![
                    [slick[0] - 2.0, slick[1] - 1.5],
                    [slick[0] + 2.0, slick[1] - 1.5],
                    [slick[0] + 2.0, slick[1] + 1.5],
                    [slick[0] - 2.0, slick[1] + 1.5],
                ];
                // the duct narrows from 13 mm to 10 mm
                channel("bile-duct", c, |i| 13.0 - 3.0 * i as f64 / 50.0, vec![obst])
            }
            other => return Err(SimError::UnknownScene(other.into())),
        };
        Ok(scene)
    }

    pub fn from_json(text: &str) -> Result<Scene> {
        let s: Scene = serde_json::from_str(text).map_err(|e| SimError::BadScene(e.to_string()))?;
        Ok(s)
    }

    /// Bundled id or a path to a scene JSON file.
    pub fn resolve(id_or_path: &str) -> Result<Scene> {
        match Scene::bundled(id_or_path) {
            Err(SimError::UnknownScene(_)) if std::path::Path::new(id_or_path).is_file() => {
                Scene::from_json(&std::fs::read_to_string(id_or_path)?)
            }
            r => r,
        }
    }

    /// Lumen outline: left wall then right wall reversed.
    pub fn lumen(&self) -> Region {
        let mut p = self.walls[0].clone();
        p.extend(self.walls[1].iter().rev());
        p
    }

    pub fn wall_segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        self.walls.iter().flat_map(|w| w.windows(2).map(|s| (s[0], s[1])))
    }

    pub fn wall_distance(&self, p: [f64; 2]) -> f64 {
        self.wall_segments().map(|(a, b)| point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
    }

    /// Structural checks plus the tunnelling bound: the largest tip
    /// displacement per substep must stay below the smallest wall feature.
    pub fn validate(&self, geom: &UnitGeometry, setup: &ActuationSetup) -> Result<()> {
        if self.walls.len() != 2 || self.walls.iter().any(|w| w.len() < 2) {
            return Err(SimError::BadScene(format!("{}: need two wall polylines of ≥ 2 points", self.id)));
        }
        if self.goal.len() < 3 {
            return Err(SimError::BadScene(format!("{}: goal polygon needs ≥ 3 points", self.id)));
        }
        let lumen = self.lumen();
        let start = [self.start.x, self.start.y];
        if !point_in_polygon(start, &lumen) {
            return Err(SimError::BadScene(format!("{}: start outside the lumen", self.id)));
        }
        let clear = 0.5 * (geom.length + geom.width);
        if self.wall_distance(start) < clear {
            return Err(SimError::BadScene(format!("{}: start closer than {clear} mm to a wall", self.id)));
        }
        let n = self.goal.len() as f64;
        let gc = self.goal.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
        if !point_in_polygon(gc, &lumen) {
            return Err(SimError::BadScene(format!("{}: goal outside the lumen", self.id)));
        }
        let min_seg = self.wall_segments().map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1])).fold(f64::INFINITY, f64::min);
        let worst = setup.with_height(ROTOR_HEIGHT_RANGE_MM.0 * 1e-3);
        let step = max_substep_displacement(&worst, geom)?;
        let bound = min_seg.min(0.5 * geom.width);
        if step >= bound {
            return Err(SimError::BadScene(format!(
                "{}: substep displacement {step:.3} mm not below wall clearance {bound:.3} mm",
                self.id
            )));
        }
        Ok(())
    }
}

/// Largest body-tip displacement over one substep anywhere in the cycle.
pub fn max_substep_displacement(setup: &ActuationSetup, geom: &UnitGeometry) -> Result<f64> {
    let d = MAX_SUBSTEP_DEG.to_radians();
    let mut worst: f64 = 0.0;
    let n = 360;
    for k in 0..n {
        let a = 2.0 * PI * k as f64 / n as f64;
        let u0 = setup_field_analytic(&setup.at_alpha(a)).normalize();
        let u1 = setup_field_analytic(&setup.at_alpha(a + d)).normalize();
        worst = worst.max(geom.length * (u1 - u0).norm());
    }
    Ok(worst)
}

// ---------------------------------------------------------------- control

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// deg
    pub beta: f64,
    /// Hz
    pub frequency: f64,
    /// mm
    pub rotor_height: f64,
    pub running: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Beta,
    Freq,
    RotorHeight,
}

fn clamp_flag(v: f64, (lo, hi): (f64, f64)) -> (f64, bool) {
    let c = v.clamp(lo, hi);
    (c, c != v)
}

fn wrap_deg(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

impl ControlInput {
    /// Apply one parameter update; returns whether the value was clamped.
    pub fn set(&mut self, param: Param, value: f64) -> bool {
        if !value.is_finite() {
            return true;
        }
        match param {
            Param::Beta => {
                self.beta = wrap_deg(value);
                false
            }
            Param::Freq => {
                let (v, c) = clamp_flag(value, FREQ_RANGE_HZ);
                self.frequency = v;
                c
            }
            Param::RotorHeight => {
                let (v, c) = clamp_flag(value, ROTOR_HEIGHT_RANGE_MM);
                self.rotor_height = v;
                c
            }
        }
    }
}

// ---------------------------------------------------------------- protocol

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMsg {
    Start { scene: String, units: usize },
    Set { param: Param, value: f64 },
    Pause,
    Resume,
    Reset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitFrame {
    pub x: f64,
    pub y: f64,
    /// deg
    pub heading: f64,
    /// deg
    pub pose_angle: f64,
    pub anchored_foot: Foot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldFrame {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub tick: u64,
    /// Drive phase in [0, 360), deg.
    pub alpha: f64,
    pub units: Vec<UnitFrame>,
    /// mT at the workspace centre.
    pub field: FieldFrame,
    pub collision: bool,
    pub goal_reached: bool,
    pub clamped: bool,
    pub control: ControlInput,
    /// Nominal crawl speed for the current controls, mm/s.
    pub speed: f64,
    /// Nominal stride for the current controls, mm.
    pub stride: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    State(TelemetryFrame),
    Error { code: String, text: String },
    SceneInfo { id: String, walls: Vec<Vec<[f64; 2]>>, goal: Region, obstacles: Vec<Region> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolError {
    pub code: &'static str,
    pub text: String,
}

impl ProtocolError {
    pub fn to_msg(&self) -> ServerMsg {
        ServerMsg::Error { code: self.code.into(), text: self.text.clone() }
    }
}

const CLIENT_TYPES: [&str; 5] = ["start", "set", "pause", "resume", "reset"];

pub fn decode_client(bytes: &[u8]) -> std::result::Result<ClientMsg, ProtocolError> {
    let bad = |e: &dyn std::fmt::Display| ProtocolError { code: "bad_json", text: e.to_string() };
    let text = std::str::from_utf8(bytes).map_err(|e| bad(&e))?;
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(&e))?;
    let ty = v.get("type").and_then(|t| t.as_str()).ok_or_else(|| bad(&"missing string field `type`"))?;
    if !CLIENT_TYPES.contains(&ty) {
        return Err(ProtocolError { code: "unknown_type", text: format!("unknown message type `{ty}`") });
    }
    serde_json::from_value(v).map_err(|e| bad(&e))
}

pub fn encode_client(m: &ClientMsg) -> String {
    serde_json::to_string(m).expect("client message serialises")
}

pub fn encode_server(m: &ServerMsg) -> String {
    serde_json::to_string(m).expect("server message serialises")
}

pub fn decode_server(bytes: &[u8]) -> Result<ServerMsg> {
    Ok(serde_json::from_slice(bytes)?)
}

// ---------------------------------------------------------------- session

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Tick boundary at which the command took effect.
    pub tick: u64,
    pub msg: ClientMsg,
}

#[derive(Clone, Debug)]
pub struct Session {
    scene: Scene,
    setup: ActuationSetup,
    geom: UnitGeometry,
    convoy: ConvoyConfig,
    tick_rate: f64,
    control: ControlInput,
    state: ConvoyState,
    tick: u64,
    collision: bool,
    goal_reached: bool,
    clamped: bool,
    queue: Vec<ClientMsg>,
    log: Vec<LogEntry>,
}

impl Session {
    /// `setup` supplies the magnets; its height and β are overridden by the
    /// controls. The session starts paused.
    pub fn new(
        scene: Scene,
        setup: ActuationSetup,
        geom: UnitGeometry,
        convoy: ConvoyConfig,
        tick_rate: f64,
    ) -> Result<Session> {
        if !(tick_rate > 0.0 && tick_rate.is_finite()) {
            return Err(SimError::InvalidParameter { name: "tick_rate", reason: "must be > 0".into() });
        }
        setup.validate()?;
        geom.validate()?;
        scene.validate(&geom, &setup)?;
        let control = ControlInput {
            beta: wrap_deg(scene.start.heading),
            frequency: 1.0,
            rotor_height: (setup.h * 1e3).clamp(ROTOR_HEIGHT_RANGE_MM.0, ROTOR_HEIGHT_RANGE_MM.1),
            running: false,
        };
        let state = Self::place(&scene, &setup, &geom, &convoy, &control)?;
        Ok(Session {
            scene,
            setup,
            geom,
            convoy,
            tick_rate,
            control,
            state,
            tick: 0,
            collision: false,
            goal_reached: false,
            clamped: false,
            queue: Vec::new(),
            log: Vec::new(),
        })
    }

    pub fn with_defaults(scene: Scene) -> Result<Session> {
        Session::new(
            scene,
            ActuationSetup::default(),
            UnitGeometry::default(),
            ConvoyConfig::default().with_units(1),
            DEFAULT_TICK_RATE_HZ,
        )
    }

    fn live_setup(setup: &ActuationSetup, c: &ControlInput) -> ActuationSetup {
        let mut s = *setup;
        s.beta = c.beta.to_radians();
        s.h = c.rotor_height * 1e-3;
        s
    }

    fn place(
        scene: &Scene,
        setup: &ActuationSetup,
        geom: &UnitGeometry,
        cfg: &ConvoyConfig,
        c: &ControlInput,
    ) -> Result<ConvoyState> {
        let s = Self::live_setup(setup, c);
        let lags = convoy_lags(cfg, &s)?;
        ConvoyState::at_rest(cfg, &s, geom, lags, [scene.start.x, scene.start.y])
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn control(&self) -> &ControlInput {
        &self.control
    }

    pub fn state(&self) -> &ConvoyState {
        &self.state
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn tick_rate(&self) -> f64 {
        self.tick_rate
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn scene_info(&self) -> ServerMsg {
        ServerMsg::SceneInfo {
            id: self.scene.id.clone(),
            walls: self.scene.walls.clone(),
            goal: self.scene.goal.clone(),
            obstacles: self.scene.obstacles.clone(),
        }
    }

    /// Queue a command; it takes effect at the next tick boundary.
    pub fn submit(&mut self, msg: ClientMsg) {
        self.queue.push(msg);
    }

    fn apply(&mut self, msg: &ClientMsg) -> Result<()> {
        match msg {
            ClientMsg::Start { scene, units } => {
                let n = (*units).clamp(UNITS_RANGE.0, UNITS_RANGE.1);
                self.clamped |= n != *units;
                if *scene != self.scene.id {
                    let sc = Scene::resolve(scene)?;
                    sc.validate(&self.geom, &self.setup)?;
                    self.scene = sc;
                }
                self.convoy = self.convoy.with_units(n);
                self.control.beta = wrap_deg(self.scene.start.heading);
                self.reset_state()?;
                self.control.running = true;
            }
            ClientMsg::Set { param, value } => {
                self.clamped |= self.control.set(*param, *value);
            }
            ClientMsg::Pause => self.control.running = false,
            ClientMsg::Resume => self.control.running = true,
            ClientMsg::Reset => {
                self.control.beta = wrap_deg(self.scene.start.heading);
                self.reset_state()?;
            }
        }
        Ok(())
    }

    fn reset_state(&mut self) -> Result<()> {
        self.state = Self::place(&self.scene, &self.setup, &self.geom, &self.convoy, &self.control)?;
        self.collision = false;
        self.goal_reached = false;
        Ok(())
    }

    fn collides(&self, st: &ConvoyState, setup: &ActuationSetup) -> Result<bool> {
        let r = 0.5 * self.geom.width;
        for u in &st.units {
            let (a, b) = u.tips(setup, &self.geom)?;
            let (a, b) = ([a.x, a.y], [b.x, b.y]);
            if self.scene.wall_segments().any(|(p, q)| segment_distance(a, b, p, q) < r) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Apply queued commands, advance one tick and return its frame.
    /// Commands that fail are dropped and reported as errors.
    pub fn tick(&mut self) -> (TelemetryFrame, Vec<ProtocolError>) {
        let mut errors = Vec::new();
        for msg in std::mem::take(&mut self.queue) {
            match self.apply(&msg) {
                Ok(()) => self.log.push(LogEntry { tick: self.tick, msg }),
                Err(e) => errors.push(ProtocolError { code: "rejected", text: e.to_string() }),
            }
        }
        if let Err(e) = self.advance() {
            self.control.running = false;
            errors.push(ProtocolError { code: "sim_error", text: e.to_string() });
        }
        self.tick += 1;
        let frame = self.frame();
        self.clamped = false;
        (frame, errors)
    }

    fn advance(&mut self) -> Result<()> {
        let c = self.control;
        if !c.running || self.collision || self.goal_reached || c.frequency == 0.0 {
            return Ok(());
        }
        let setup = Self::live_setup(&self.setup, &c);
        let dalpha = 2.0 * PI * c.frequency / self.tick_rate;
        let n = (dalpha / MAX_SUBSTEP_DEG.to_radians()).ceil().max(1.0) as usize;
        let h = dalpha / n as f64;
        let base = self.state.alpha;
        for k in 1..=n {
            let next = convoy_advance(
                &self.state,
                &self.convoy,
                &setup,
                &self.geom,
                base + h * k as f64,
                &self.scene.obstacles,
            )?;
            if self.collides(&next, &setup)? {
                self.collision = true;
                return Ok(());
            }
            self.state = next;
            if point_in_polygon(self.state.centroid(), &self.scene.goal) {
                self.goal_reached = true;
                return Ok(());
            }
        }
        // keep the phase bounded without disturbing the per-unit lags
        let wrap = (self.state.alpha / (2.0 * PI)).floor() * 2.0 * PI;
        if wrap != 0.0 {
            self.state.alpha -= wrap;
            for u in &mut self.state.units {
                u.alpha_local -= wrap;
            }
        }
        Ok(())
    }

    pub fn frame(&self) -> TelemetryFrame {
        let c = self.control;
        let setup = Self::live_setup(&self.setup, &c);
        let b = setup_field_analytic(&setup.at_alpha(self.state.alpha)) * 1e3;
        let stride = crate::gait::stride_length(&setup, &self.geom);
        TelemetryFrame {
            tick: self.tick,
            alpha: self.state.alpha.to_degrees().rem_euclid(360.0),
            units: self
                .state
                .units
                .iter()
                .map(|u| UnitFrame {
                    x: u.position.x,
                    y: u.position.y,
                    heading: u.heading.to_degrees(),
                    pose_angle: u.pose_angle.to_degrees(),
                    anchored_foot: u.anchored_foot,
                })
                .collect(),
            field: FieldFrame { bx: b.x, by: b.y, bz: b.z },
            collision: self.collision,
            goal_reached: self.goal_reached,
            clamped: self.clamped,
            control: c,
            speed: stride * c.frequency,
            stride,
        }
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Distance between segments ab and pq (0 when they cross).
pub fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2], q: [f64; 2]) -> f64 {
    let d1 = cross(p, q, a);
    let d2 = cross(p, q, b);
    let d3 = cross(a, b, p);
    let d4 = cross(a, b, q);
    if ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0)) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0 {
        return 0.0;
    }
    point_segment_distance(a, p, q)
        .min(point_segment_distance(b, p, q))
        .min(point_segment_distance(p, a, b))
        .min(point_segment_distance(q, a, b))
}

// ---------------------------------------------------------------- log

pub fn write_log<W: Write>(log: &[LogEntry], mut w: W) -> Result<()> {
    for e in log {
        writeln!(w, "{}", serde_json::to_string(e)?)?;
    }
    Ok(())
}

pub fn read_log<R: BufRead>(r: R) -> Result<Vec<LogEntry>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Re-run a recorded input log for `ticks` ticks; returns every frame.
pub fn replay(mut session: Session, log: &[LogEntry], ticks: u64) -> Vec<TelemetryFrame> {
    let mut frames = Vec::with_capacity(ticks as usize);
    let mut i = 0;
    for _ in 0..ticks {
        while i < log.len() && log[i].tick == session.tick_count() {
            session.submit(log[i].msg.clone());
            i += 1;
        }
        frames.push(session.tick().0);
    }
    frames
}
