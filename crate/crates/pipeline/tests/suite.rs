use umimo_core::ScenarioClass;
use umimo_pipeline::{run_manifest_suite, run_scenario_suite, write_reports, DatasetManifest, Provenance, RunConfig};

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 11;
    cfg.suite.classes = vec![ScenarioClass::NfLos];
    cfg.suite.links_per_class = 4;
    cfg.suite.tx_array = "planar:2x4:0.01".into();
    cfg.suite.rx_array = "planar:2x2:0.01".into();
    cfg.suite.pn_register_width = 7;
    cfg.suite.pn_polynomial = 0x83;
    cfg
}

#[test]
fn empty_manifest_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let m = DatasetManifest::empty(Provenance::External { note: "none".into() });
    let r = run_manifest_suite(&RunConfig::default(), &m, dir.path()).unwrap();
    assert!(r.links.is_empty());
    assert!(r.failures.is_empty());
    assert!(!r.warnings.is_empty());
    assert_eq!(r.exit_code(), 0);
    let files = write_reports(&r, dir.path()).unwrap();
    assert!(files.iter().all(|f| f.is_file()));
}

#[test]
fn noiseless_shadowing_recovers_generator_ple() {
    let mut cfg = small_config();
    cfg.suite.shadow_sigma_db = 0.0;
    let r = run_scenario_suite(&cfg).unwrap();
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    assert_eq!(r.links.len(), 4);
    let ci = r
        .path_loss
        .iter()
        .find(|f| f.scenario == "NF_LOS" && f.model == "CI")
        .expect("CI fit");
    let ple = ci.params["ple"];
    assert!((ple - 1.98).abs() <= 0.02, "ple {ple}");
}

#[test]
fn iid_capacity_matches_reference() {
    let mut cfg = RunConfig::default();
    cfg.suite.classes = vec![];
    cfg.iid.enabled = true;
    let r = run_scenario_suite(&cfg).unwrap();
    let row = r.capacity.iter().find(|c| c.scenario == "IID_RAYLEIGH").expect("iid row");
    assert_eq!(row.n, cfg.iid.draws);
    assert!((row.mean - 200.0).abs() <= 2.0, "mean {}", row.mean);
    let check = r.checks.iter().find(|c| c.name.starts_with("IID_RAYLEIGH")).unwrap();
    assert!(check.pass);
}

#[test]
fn identical_runs_give_identical_reports() {
    let mut cfg = small_config();
    cfg.suite.links_per_class = 2;
    let a = run_scenario_suite(&cfg).unwrap();
    let b = run_scenario_suite(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let ids: Vec<_> = a.links.iter().map(|l| l.spec.link_id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}
