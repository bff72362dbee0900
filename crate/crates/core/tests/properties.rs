use std::f64::consts::PI;

use magcrawl::convoy::{
    convoy_step, force_profile_with_lags, local_phase_lag, ConvoyConfig, ConvoyState, LAG_RES_DEG, SPACING_MIN_MM,
};
use magcrawl::foot::{
    clip_below, foot_profile, linspace, penetration, penetration_of, signed_area, spike_angle_sweep, FootDesign,
    FootProfile,
};
use magcrawl::gait::{crawl_velocity, step_simulate, stride_length};
use magcrawl::harness::fmt_num;
use magcrawl::magnetics::{dipole_field, pose_angle_max, setup_field_full, superposed_field};
use magcrawl::teleop::{decode_client, encode_client, replay, ClientMsg, LogEntry, Param, Scene, Session};
use magcrawl::{ActuationSetup, DipoleSource, Foot, GaitParams, GaitState, UnitGeometry, Vector3};
use proptest::prelude::*;

fn setup_strategy() -> impl Strategy<Value = ActuationSetup> {
    (50.0..300.0f64, 50.0..200.0f64, 0.2..0.35f64, 0.12..0.25f64, 0.0..2.0 * PI, -PI..PI)
        .prop_map(|(m_s, m_r, w, h, alpha, beta)| ActuationSetup { m_s, m_r, w, h, alpha, beta })
}

fn workspace_point() -> impl Strategy<Value = Vector3<f64>> {
    (-0.025..0.025f64, -0.025..0.025f64, -0.025..0.025f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn one_cycle(setup: &ActuationSetup) -> Vector3<f64> {
    let geom = UnitGeometry::default();
    let s0 = GaitState::at_rest(setup, &geom, 0.0, [0.0, 0.0]).unwrap();
    let (s1, _) = step_simulate(&s0, setup, &geom, &GaitParams::default(), 120).unwrap();
    s1.position - s0.position
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn superposition_is_exact(s in setup_strategy(), p in workspace_point()) {
        let sum: Vector3<f64> = s.sources().iter().map(|src| dipole_field(src, &p).unwrap()).sum();
        let b = setup_field_full(&s, &p).unwrap().b;
        prop_assert!((b - sum).norm() <= 1e-14 * sum.norm());
    }

    #[test]
    fn field_is_divergence_free(s in setup_strategy(), p in workspace_point()) {
        let g = setup_field_full(&s, &p).unwrap().grad;
        prop_assert!(g.trace().abs() < 1e-3 * g.amax());
    }

    #[test]
    fn centre_parity(mut s in setup_strategy()) {
        s.beta = 0.0;
        let a = s.alpha;
        let plus = superposed_field(&s.at_alpha(a), &Vector3::zeros()).unwrap();
        let minus = superposed_field(&s.at_alpha(-a), &Vector3::zeros()).unwrap();
        let scale = plus.norm();
        prop_assert!((plus.x + minus.x).abs() <= 1e-12 * scale);
        prop_assert!((plus.z - minus.z).abs() <= 1e-12 * scale);
    }

    #[test]
    fn axial_inverse_cube(r in 0.002..1.0f64, m in 0.01..500.0f64, theta in 0.0..PI, phi in 0.0..2.0 * PI) {
        let dir = Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
        let src = DipoleSource { position: Vector3::new(0.01, 0.02, -0.03), moment: m * dir };
        let near = dipole_field(&src, &(src.position + r * dir)).unwrap().norm();
        let far = dipole_field(&src, &(src.position + 2.0 * r * dir)).unwrap().norm();
        prop_assert!((near / far - 8.0).abs() / 8.0 < 1e-6);
    }

    #[test]
    fn pose_angle_monotone(s in setup_strategy(), dh in 0.001..0.05f64, dm in 1.0..50.0f64) {
        prop_assert!(pose_angle_max(&s.with_height(s.h + dh)) < pose_angle_max(&s));
        let mut stronger = s;
        stronger.m_r += dm;
        prop_assert!(pose_angle_max(&stronger) > pose_angle_max(&s));
    }

    #[test]
    fn velocity_exactly_linear(s in setup_strategy(), f in 0.01..1.0f64) {
        let g = UnitGeometry::default();
        prop_assert_eq!(crawl_velocity(&s, &g, 2.0 * f), 2.0 * crawl_velocity(&s, &g, f));
    }

    #[test]
    fn stride_monotone_in_height(s in setup_strategy(), dh in 0.001..0.05f64) {
        let g = UnitGeometry::default();
        prop_assert!(stride_length(&s.with_height(s.h + dh), &g) < stride_length(&s, &g));
    }
}

#[test]
fn stride_vanishes_without_rotor() {
    let s = ActuationSetup { m_r: 0.0, ..Default::default() };
    assert_eq!(stride_length(&s, &UnitGeometry::default()), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn beta_rotates_cycle_displacement(beta in -PI..PI) {
        let s0 = ActuationSetup::default();
        let d0 = one_cycle(&s0);
        let d1 = one_cycle(&ActuationSetup { beta, ..s0 });
        let (sn, cs) = beta.sin_cos();
        let rot = Vector3::new(cs * d0.x - sn * d0.y, sn * d0.x + cs * d0.y, d0.z);
        prop_assert!((d1 - rot).norm() < 1e-9, "{d1:?} vs {rot:?}");
        prop_assert!((d1.norm() - d0.norm()).abs() < 1e-9);
    }

    #[test]
    fn gait_deterministic_and_pinned(s in setup_strategy(), ticks in 10u64..200) {
        let s = ActuationSetup { h: s.h.max(0.15), ..s };
        let geom = UnitGeometry::default();
        let st = GaitState::at_rest(&s, &geom, s.alpha, [1.0, -2.0]).unwrap();
        let p = GaitParams::default();
        let (a, ta) = step_simulate(&st, &s, &geom, &p, ticks).unwrap();
        let (b, tb) = step_simulate(&st, &s, &geom, &p, ticks).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(&ta, &tb);
        for w in ta.samples.windows(2) {
            if w[0].anchored_foot == w[1].anchored_foot {
                let (p0, p1) = match w[0].anchored_foot {
                    Foot::A => (w[0].tip_a, w[1].tip_a),
                    Foot::B => (w[0].tip_b, w[1].tip_b),
                };
                prop_assert_eq!(p0, p1);
            }
        }
    }

    #[test]
    fn tilt_monotone(delta in 12.0..60.0f64, t0 in 5.0..55.0f64, dt in 0.5..5.0f64) {
        let d = FootDesign::default().with_delta(delta);
        let a = penetration(&d, t0).unwrap();
        let b = penetration(&d, t0 + dt).unwrap();
        prop_assert!(b.depth >= a.depth);
        prop_assert!(b.area >= a.area - 1e-12);
    }

    #[test]
    fn mirror_symmetric(delta in 12.0..60.0f64, tilt in 5.0..60.0f64) {
        let d = FootDesign::default().with_delta(delta);
        let p = foot_profile(&d).unwrap();
        let mut m = FootProfile {
            vertices: p.vertices.iter().map(|v| [-v[0], v[1]]).collect(),
            kinds: p.kinds.clone(),
        };
        m.vertices.reverse();
        m.kinds.reverse();
        let tol = d.tip_width * 1e-3;
        let a = penetration_of(&p, tilt, tol);
        let b = penetration_of(&m, tilt, tol);
        prop_assert!((a.depth - b.depth).abs() < 1e-12);
        prop_assert!((a.area - b.area).abs() < 1e-12);
        prop_assert_eq!(a.gap_present, b.gap_present);
    }

    #[test]
    fn clipped_area_bounded(delta in 12.0..60.0f64, level in -0.6..0.1f64) {
        let p = foot_profile(&FootDesign::default().with_delta(delta)).unwrap();
        let total = signed_area(&p.vertices);
        let below = signed_area(&clip_below(&p.vertices, level)).abs();
        prop_assert!(below <= total * (1.0 + 1e-12));
    }

    #[test]
    fn lag_even_in_offset(x in 0.5..20.0f64) {
        let s = ActuationSetup::default();
        let a = local_phase_lag(&s, &Vector3::new(x * 1e-3, 0.0, 0.0)).unwrap();
        let b = local_phase_lag(&s, &Vector3::new(-x * 1e-3, 0.0, 0.0)).unwrap();
        prop_assert!((a.abs() - b.abs()).abs() <= LAG_RES_DEG.to_radians() + 1e-12);
    }

    #[test]
    fn peak_falls_with_lag(n in 2usize..6, raw in proptest::collection::vec(0.0..0.5f64, 5), k in 0.0..1.0f64) {
        let cfg = ConvoyConfig::default().with_units(n);
        let lags: Vec<f64> = raw[..n].to_vec();
        let scaled: Vec<f64> = lags.iter().map(|l| l * k).collect();
        let wide = force_profile_with_lags(&cfg, &lags).peak;
        let narrow = force_profile_with_lags(&cfg, &scaled).peak;
        prop_assert!(wide <= narrow + 1e-12);
    }

    #[test]
    fn stoppers_hold(n in 2usize..5, betas in proptest::collection::vec(-0.6..0.6f64, 1..6), block in 0usize..4) {
        let cfg = ConvoyConfig::default().with_units(n);
        let geom = UnitGeometry::default();
        let params = GaitParams::default();
        let mut setup = ActuationSetup::default();
        let lags = magcrawl::convoy::convoy_lags(&cfg, &setup).unwrap();
        let mut st = ConvoyState::at_rest(&cfg, &setup, &geom, lags, [0.0, 0.0]).unwrap();
        let b = st.units[block.min(n - 1)].position;
        let obst = vec![vec![[b.x - 1.0, b.y - 4.0], [b.x + 1.0, b.y - 4.0], [b.x + 1.0, b.y + 4.0], [b.x - 1.0, b.y + 4.0]]];
        for beta in betas {
            setup.beta = beta;
            for _ in 0..60 {
                st = convoy_step(&st, &cfg, &setup, &geom, &params, &obst).unwrap();
                for g in st.gaps() {
                    prop_assert!(g >= SPACING_MIN_MM - 1e-9 && g <= cfg.spacing_max() + 1e-9, "gap {g}");
                }
            }
        }
    }

    #[test]
    fn number_format_round_trips(x in proptest::num::f64::NORMAL) {
        let s = fmt_num(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-12 * x.abs());
        prop_assert_eq!(fmt_num(back), s);
    }
}

#[test]
fn sweep_is_continuous() {
    let sw = spike_angle_sweep(&FootDesign::default(), &linspace(10.0, 60.0, 51), 39.0).unwrap();
    for series in [sw.curve.iter().map(|p| p.depth).collect::<Vec<_>>(), sw.curve.iter().map(|p| p.area).collect()] {
        let diffs: Vec<f64> = series.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        for i in 0..diffs.len() {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(diffs.len());
            let mut nb: Vec<f64> = (lo..hi).filter(|&j| j != i).map(|j| diffs[j]).collect();
            nb.sort_by(f64::total_cmp);
            let median = nb[nb.len() / 2];
            assert!(diffs[i] <= 3.0 * median + 1e-9, "jump {} at {i}", diffs[i]);
        }
    }
}

fn client_msg() -> impl Strategy<Value = ClientMsg> {
    prop_oneof![
        (prop::sample::select(vec!["straight", "s-curve", "bile-duct"]), 0usize..8)
            .prop_map(|(s, units)| ClientMsg::Start { scene: s.to_string(), units }),
        (prop::sample::select(vec![Param::Beta, Param::Freq, Param::RotorHeight]), -400.0..400.0f64)
            .prop_map(|(param, value)| ClientMsg::Set { param, value }),
        Just(ClientMsg::Pause),
        Just(ClientMsg::Resume),
        Just(ClientMsg::Reset),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn codec_round_trip(m in client_msg()) {
        prop_assert_eq!(decode_client(encode_client(&m).as_bytes()).unwrap(), m);
    }

    #[test]
    fn replay_reproduces_stream(inputs in proptest::collection::vec((0u64..120, client_msg()), 1..12)) {
        let mut log: Vec<LogEntry> = inputs.into_iter().map(|(tick, msg)| LogEntry { tick, msg }).collect();
        log.sort_by_key(|e| e.tick);
        let fresh = || Session::with_defaults(Scene::bundled("straight").unwrap()).unwrap();
        let live = {
            let mut s = fresh();
            let mut frames = Vec::new();
            let mut i = 0;
            for _ in 0..150 {
                while i < log.len() && log[i].tick == s.tick_count() {
                    s.submit(log[i].msg.clone());
                    i += 1;
                }
                frames.push(s.tick().0);
            }
            (frames, s.log().to_vec())
        };
        let again = replay(fresh(), &live.1, 150);
        let a: Vec<String> = live.0.iter().map(|f| serde_json::to_string(f).unwrap()).collect();
        let b: Vec<String> = again.iter().map(|f| serde_json::to_string(f).unwrap()).collect();
        prop_assert_eq!(a, b);
    }
}
