use magcrawl::harness::{
    export, from_csv, reference_dataset, run_sweep, to_csv, to_json, validate_all, validate_with, Cell, Format, Gate,
    ScenarioConfig, SweepKind, Table,
};

fn num(c: &Cell) -> f64 {
    c.as_f64().unwrap()
}

#[test]
fn field_sweep_shape_and_constant_by() {
    let t = run_sweep(SweepKind::Field, &ScenarioConfig::default()).unwrap();
    assert_eq!(t.rows.len(), 72);
    // By from the static pair alone: mu0 m_s / (pi w^3), here in mT
    let by = 4e-7 * 205.4 / 0.25975f64.powi(3) * 1e3;
    for c in t.column("by_mt").unwrap() {
        assert!((num(c) - by).abs() / by < 0.01, "{} vs {by}", num(c));
    }
    assert_eq!(to_csv(&t).unwrap().lines().count(), 73);
}

#[test]
fn every_sweep_kind_runs_and_round_trips() {
    let cfg = ScenarioConfig::default();
    for k in [
        SweepKind::Field,
        SweepKind::Pose,
        SweepKind::Stride,
        SweepKind::Speed,
        SweepKind::Foot,
        SweepKind::Convoy,
        SweepKind::Phase,
    ] {
        let t = run_sweep(k, &cfg).unwrap();
        assert!(!t.rows.is_empty(), "{k:?}");
        let csv = to_csv(&t).unwrap();
        let back = to_csv(&from_csv(&csv).unwrap()).unwrap();
        assert_eq!(csv, back, "{k:?}");
        let json: serde_json::Value = serde_json::from_str(&to_json(&t).unwrap()).unwrap();
        assert_eq!(json.as_array().unwrap().len(), t.rows.len());
    }
}

#[test]
fn speed_sweep_matches_references() {
    let t = run_sweep(SweepKind::Speed, &ScenarioConfig::default()).unwrap();
    let f = t.column("freq_hz").unwrap();
    let pass = t.column("pass").unwrap();
    for (i, fr) in f.iter().enumerate() {
        if num(fr) == 0.17 || num(fr) == 1.7 {
            assert_eq!(pass[i], &Cell::Bool(true));
        }
    }
}

#[test]
fn export_to_file_and_unwritable_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Table::new(&["x", "ok", "label"]);
    t.push(vec![Cell::Num(1.0 / 3.0), Cell::Bool(true), Cell::Text("a".into())]);
    let p = dir.path().join("t.csv");
    export(&t, Format::Csv, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text, "x,ok,label\n0.333333333333,true,a\n");
    assert!(export(&t, Format::Json, &dir.path().join("missing/dir/t.json")).is_err());
}

#[test]
fn no_rotor_fails_gait_but_keeps_static_field() {
    let mut cfg = ScenarioConfig::default();
    cfg.setup.m_r_am2 = 0.0;
    let r = validate_all(&cfg).unwrap();
    let get = |k: &str| r.comparisons.iter().find(|c| c.key == k).unwrap();
    assert_eq!(get("field.by_center_mt").pass, Some(true));
    assert_ne!(get("gait.stride_41_mm").pass, Some(true));
    assert_ne!(get("gait.speed_17hz_mms").pass, Some(true));
    assert!(!r.passed);
}

#[test]
fn report_is_deterministic() {
    let cfg = ScenarioConfig::default();
    let a = serde_json::to_string(&validate_all(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&validate_all(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn report_only_items_never_gate() {
    let refs: Vec<_> = reference_dataset().into_iter().filter(|r| r.gate != Gate::Hard).collect();
    let r = validate_with(&ScenarioConfig::default(), &refs).unwrap();
    assert!(r.passed);
    assert!(r.comparisons.iter().any(|c| c.key == "convoy.max_lag_deg" && c.pass == Some(false)));
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    let cfg = ScenarioConfig::default();
    std::fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    assert_eq!(ScenarioConfig::load(&p).unwrap(), cfg);
}
