use bimodal_core::sim::{
    check_expectations, energy_audit, run_batch, run_scenario, summary_text, Scenario,
    BUILTIN_NAMES,
};
use bimodal_core::{Config, Error, Execution};

#[test]
fn builtins_meet_their_expectations() {
    let cfg = Config::default();
    for name in BUILTIN_NAMES {
        let sc = Scenario::builtin(name).unwrap();
        let trace = run_scenario(&sc, &cfg).unwrap();
        let ledger = energy_audit(&trace);
        let missed = check_expectations(&trace, &sc, &ledger);
        assert!(missed.is_empty(), "{name}: {missed:?}");
        assert!(!trace.missed_contact, "{name}");
    }
}

#[test]
fn batch_keeps_order_and_matches_sequential() {
    let cfg = Config::default();
    let scenarios: Vec<Scenario> = ["lift-only", "swing-only", "drop"]
        .iter()
        .map(|n| Scenario::builtin(n).unwrap())
        .collect();
    let par = run_batch(&scenarios, &cfg, Execution::Parallel);
    let seq = run_batch(&scenarios, &cfg, Execution::Sequential);
    for ((p, s), sc) in par.iter().zip(&seq).zip(&scenarios) {
        let (p, s) = (p.as_ref().unwrap(), s.as_ref().unwrap());
        assert_eq!(p.scenario, sc.name);
        assert_eq!(p.samples, s.samples);
        assert_eq!(p.events, s.events);
    }
}

#[test]
fn blinded_contact_detector_is_reported() {
    let cfg = Config::default()
        .with_overrides(&["control.contact.pressure_threshold_pa=1e9".into()])
        .unwrap();
    let sc = Scenario::builtin("gait").unwrap();
    let trace = run_scenario(&sc, &cfg).unwrap();
    assert!(trace.metrics.contact_time.is_none());
    assert!(trace.metrics.downshift().is_none());
    assert!(trace.missed_contact);
    let ledger = energy_audit(&trace);
    assert!(summary_text(&trace, &ledger).contains("missed_contact: yes"));
    assert!(!check_expectations(&trace, &sc, &ledger).is_empty());
}

#[test]
fn lift_moves_the_payload_up_then_back() {
    let trace = run_scenario(&Scenario::builtin("lift-only").unwrap(), &Config::default()).unwrap();
    let at = |t: f64| {
        trace
            .samples
            .iter()
            .find(|s| (s.t - t).abs() < 1e-9)
            .unwrap()
            .x_o
    };
    let start = at(0.1);
    assert!(at(0.6) - start > 0.009, "{} -> {}", start, at(0.6));
    assert!((at(1.1) - start).abs() < 2e-3);
}

#[test]
fn unknown_scenario_is_an_error() {
    assert!(matches!(
        Scenario::resolve("moonwalk"),
        Err(Error::UnknownScenario(_)) | Err(Error::Io { .. })
    ));
}

#[test]
fn scenario_file_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.toml");
    std::fs::write(
        &path,
        "name = \"short\"\nduration_s = 0.05\ninitial_mode = \"HS\"\n\n[[script]]\nt_s = 0.0\nrequest = \"hs\"\ncurrent_frac = 0.2\n\n[[load]]\ntrigger = \"start\"\nload = \"swing\"\n",
    )
    .unwrap();
    let sc = Scenario::resolve(path.to_str().unwrap()).unwrap();
    let trace = run_scenario(&sc, &Config::default()).unwrap();
    assert_eq!(trace.samples.len(), 51);
    assert!(trace.final_sample().unwrap().v_o > 0.0);
}
