use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use magcrawl::convoy::{convoy_force_profile, ConvoyConfig};
use magcrawl::foot::{linspace, penetration, spike_angle_sweep, FootDesign};
use magcrawl::gait::step_simulate;
use magcrawl::magnetics::{dipole_field, setup_field_full};
use magcrawl::teleop::{ClientMsg, Param, Scene, Session};
use magcrawl::{ActuationSetup, DipoleSource, GaitParams, GaitState, UnitGeometry, Vector3};

fn field(c: &mut Criterion) {
    let src = DipoleSource { position: Vector3::new(0.0, 0.26, 0.0), moment: Vector3::new(0.0, 205.4, 0.0) };
    let p = Vector3::new(0.01, 0.0, 0.005);
    c.bench_function("dipole_field", |b| b.iter(|| dipole_field(black_box(&src), black_box(&p)).unwrap()));
    let s = ActuationSetup::default().at_alpha(0.7);
    c.bench_function("setup_field_full", |b| b.iter(|| setup_field_full(black_box(&s), black_box(&p)).unwrap()));
}

fn foot(c: &mut Criterion) {
    let d = FootDesign::default();
    c.bench_function("penetration_39deg", |b| b.iter(|| penetration(black_box(&d), 39.0).unwrap()));
    let deltas = linspace(10.0, 60.0, 26);
    c.bench_function("spike_angle_sweep_26", |b| b.iter(|| spike_angle_sweep(black_box(&d), &deltas, 39.0).unwrap()));
}

fn gait(c: &mut Criterion) {
    let s = ActuationSetup::default();
    let g = UnitGeometry::default();
    let st = GaitState::at_rest(&s, &g, 0.0, [0.0, 0.0]).unwrap();
    let p = GaitParams::default();
    c.bench_function("gait_cycle_120_ticks", |b| b.iter(|| step_simulate(black_box(&st), &s, &g, &p, 120).unwrap()));
    let cfg = ConvoyConfig::default();
    c.bench_function("convoy_force_profile_3", |b| b.iter(|| convoy_force_profile(black_box(&cfg), &s).unwrap()));
}

fn session(c: &mut Criterion) {
    let mut s = Session::with_defaults(Scene::bundled("s-curve").unwrap()).unwrap();
    s.submit(ClientMsg::Start { scene: "s-curve".into(), units: 3 });
    s.submit(ClientMsg::Set { param: Param::Freq, value: 2.0 });
    s.tick();
    c.bench_function("session_tick_3_units_2hz", |b| {
        b.iter_batched(|| s.clone(), |mut s| s.tick(), criterion::BatchSize::SmallInput)
    });
}

criterion_group!(benches, field, foot, gait, session);
criterion_main!(benches);
