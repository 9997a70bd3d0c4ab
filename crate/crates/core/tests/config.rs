use std::io::Write;

use ftn_isac::config::{parse_override, ExperimentConfig};
use ftn_isac::Error;
use serde_json::json;

fn temp_file(name: &str, body: &str) -> std::path::PathBuf {
    let p = std::env::temp_dir().join(format!("ftn-isac-{}-{name}", std::process::id()));
    std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
    p
}

#[test]
fn defaults_are_valid() {
    let cfg = ExperimentConfig::load(None, &[]).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    let v = cfg.variances();
    assert_eq!(v.sigma2_c, 1.0);
    assert!((v.sigma2_h - 100.0).abs() < 1e-12);
}

#[test]
fn file_then_overrides() {
    let p = temp_file("merge.json", r#"{"fig4": {"trials": 7, "tau": [0.9]}, "pulse": {"tau": 0.7}}"#);
    let ov = vec![parse_override("fig4.trials=3").unwrap(), parse_override("output_dir=results").unwrap()];
    let cfg = ExperimentConfig::load(Some(&p), &ov).unwrap();
    assert_eq!(cfg.fig4.trials, 3);
    assert_eq!(cfg.fig4.tau, vec![0.9]);
    assert_eq!(cfg.fig4.gamma_db, vec![5.0, 10.0, 15.0, 20.0]);
    assert_eq!(cfg.pulse.tau, 0.7);
    assert_eq!(cfg.output_dir, "results");
    std::fs::remove_file(p).unwrap();
}

#[test]
fn override_parsing() {
    assert_eq!(parse_override("a.b=[1, 2]").unwrap(), ("a.b".into(), json!([1, 2])));
    assert_eq!(parse_override("x=abc").unwrap(), ("x".into(), json!("abc")));
    assert_eq!(parse_override("x=1e3").unwrap().1, json!(1e3));
    assert!(parse_override("novalue").is_err());
}

#[test]
fn unknown_keys_are_rejected() {
    let e = ExperimentConfig::load(None, &[parse_override("fig4.trails=3").unwrap()]).unwrap_err();
    assert!(e.to_string().contains("fig4.trails"), "{e}");
    let e = ExperimentConfig::load(None, &[parse_override("fig4=3").unwrap()]).unwrap_err();
    assert!(e.to_string().contains("section"), "{e}");
    let p = temp_file("unknown.json", r#"{"system": {"n_tx": 8, "bogus": 1}}"#);
    let e = ExperimentConfig::load(Some(&p), &[]).unwrap_err();
    assert!(e.to_string().contains("system.bogus"), "{e}");
    std::fs::remove_file(p).unwrap();
}

#[test]
fn unreadable_files_name_the_path() {
    let p = std::path::Path::new("/nonexistent/ftn.json");
    let e = ExperimentConfig::load(Some(p), &[]).unwrap_err();
    assert!(matches!(e, Error::Config(_)));
    assert!(e.to_string().contains("/nonexistent/ftn.json"), "{e}");
    let bad = temp_file("bad.json", "{not json");
    assert!(ExperimentConfig::load(Some(&bad), &[]).unwrap_err().to_string().contains("cannot parse"));
    std::fs::remove_file(bad).unwrap();
}

#[test]
fn validation_messages() {
    let load = |k: &str| ExperimentConfig::load(None, &[parse_override(k).unwrap()]).unwrap().validate();
    assert!(load("pulse.tau=1.2").unwrap_err().to_string().contains("tau must be in (0, 1]"));
    assert!(load("fig5.tau=[0.8, 0]").unwrap_err().to_string().contains("tau must be in (0, 1]"));
    assert!(load("fig2.trials=0").unwrap_err().to_string().contains("fig2.trials must be at least 1"));
    assert!(load("fig4.n_users=16").unwrap_err().to_string().contains("fig4.n_users"));
    assert!(matches!(load("system.mod_order=6").unwrap_err(), Error::UnsupportedModulation(6)));
    assert!(load("sca.epsilon=-1").is_err());
}

#[test]
fn unit_table_converts_decibels() {
    let cfg = ExperimentConfig::default();
    let t = cfg.unit_table();
    let get = |k: &str| t.iter().find(|r| r.key == k).unwrap_or_else(|| panic!("{k} missing"));
    assert_eq!(get("system.sigma2_c_dbm").linear, 1.0);
    assert!((get("system.sigma2_h_dbm").linear - 100.0).abs() < 1e-12);
    assert!((get("fig4.energy_dbm").linear - 1e4).abs() < 1e-9);
    assert!((get("fig4.gamma_db[2]").linear - 10f64.powf(1.5)).abs() < 1e-12);
    assert_eq!(get("fig5.energy_dbm").unit, "dBm");
    assert_eq!(get("fig5.gamma_db[0]").unit, "dB");
}
