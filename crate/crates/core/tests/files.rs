use bimodal_core::analysis::{
    capability_table, quadrant_map, read_capability_csv, read_quadrant_csv, write_capability_csv,
    write_quadrant_csv,
};
use bimodal_core::sim::{read_trace_csv, run_scenario, Scenario, TraceRow, TRACE_COLUMNS};
use bimodal_core::valve::{read_mass_map_csv, MassMapRow, ValveMassModel};
use bimodal_core::{Config, Error, Execution};
use proptest::prelude::*;

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Config::default()
        .with_overrides(&[
            "valve.k_open=0.07".into(),
            "load.heavy.mass_kg=90.0".into(),
            "load.heavy.external_force_n=900.0".into(),
            "load.heavy.loss_coeff_ns_per_m=0.0".into(),
        ])
        .unwrap();
    let path = dir.path().join("dumped.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    let back = Config::load(&path).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.params.valve.loss_map.k_open(), 0.07);
    assert_eq!(back.params.scenario("heavy").unwrap().mass, 90.0);
}

#[test]
fn incomplete_load_lists_each_missing_key_once() {
    let err = Config::default()
        .with_overrides(&["load.heavy.mass_kg=90.0".into()])
        .unwrap_err();
    let Error::Validation(list) = err else {
        panic!("{err:?}")
    };
    assert_eq!(
        list,
        vec![
            "missing key `load.heavy.external_force_n`",
            "missing key `load.heavy.loss_coeff_ns_per_m`"
        ]
    );
}

#[test]
fn malformed_file_reports_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "schema_version = \"1.0.0\"\nvalve.k_open = = 3\n").unwrap();
    match Config::load(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn trace_csv_round_trip() {
    let cfg = Config::default();
    let trace = run_scenario(&Scenario::builtin("swing-only").unwrap(), &cfg).unwrap();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let header = String::from_utf8(buf.clone())
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, TRACE_COLUMNS.join(","));
    let rows = read_trace_csv(buf.as_slice()).unwrap();
    let expected: Vec<TraceRow> = trace.samples.iter().map(TraceRow::from).collect();
    assert_eq!(rows, expected);
    assert!(read_trace_csv("a,b\n1,2\n".as_bytes()).is_err());
}

#[test]
fn mass_map_csv_round_trip() {
    let cfg = Config::default();
    let model = ValveMassModel::from_params(&cfg.params).unwrap();
    let al = cfg.params.material("al7075").unwrap();
    let grid = model
        .mass_map(
            (4e-3, 16e-3),
            (0.02, 0.5),
            al,
            (13, 7),
            Execution::Sequential,
        )
        .unwrap();
    let mut buf = Vec::new();
    grid.write_csv(&mut buf).unwrap();
    let rows = read_mass_map_csv(buf.as_slice()).unwrap();
    let expected: Vec<MassMapRow> = grid.cells.iter().map(MassMapRow::from).collect();
    assert_eq!(rows, expected);
}

#[test]
fn mass_map_parallel_matches_sequential() {
    let cfg = Config::default();
    let model = ValveMassModel::from_params(&cfg.params).unwrap();
    let brass = cfg.params.material("brass").unwrap();
    let run = |exec| {
        model
            .mass_map((5e-3, 19e-3), (0.05, 0.4), brass, (57, 33), exec)
            .unwrap()
    };
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}

#[test]
fn analysis_csv_round_trips() {
    let cfg = Config::default();
    let rows = capability_table(&cfg.params, &cfg.analysis);
    let mut buf = Vec::new();
    write_capability_csv(&rows, &mut buf).unwrap();
    assert_eq!(read_capability_csv(buf.as_slice()).unwrap(), rows);

    let regions = quadrant_map(&cfg.params, cfg.analysis.braking_angle);
    let mut buf = Vec::new();
    write_quadrant_csv(&regions, &mut buf).unwrap();
    assert_eq!(read_quadrant_csv(buf.as_slice()).unwrap(), regions);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn overrides_show_up_in_the_dump(k in 0.01f64..1.0, fpk in 10.0f64..100.0) {
        let cfg = Config::default()
            .with_overrides(&[format!("valve.k_open={k:?}"), format!("analysis.force_per_kg_n={fpk:?}")])
            .unwrap();
        let again = Config::from_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(again.params.valve.loss_map.k_open(), k);
        prop_assert_eq!(again.analysis.force_per_kg, fpk);
        prop_assert_eq!(again, cfg);
    }
}
