use std::path::Path;
use std::process::{Command, Output};

fn evtcosim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evtcosim"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = evtcosim(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synthesized() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["--working-dir", ".", "synth"]);
    assert!(out.contains("5350 parcels"), "{out}");
    assert!(dir.path().join("small.json").is_file());
    dir
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn synth_then_run_writes_every_output() {
    let dir = synthesized();
    let out = ok(dir.path(), &["--config", "small.json", "run"]);
    assert!(out.contains("total time to evacuate"), "{out}");
    for f in ["run_report.json", "violations.csv", "severity_histogram.csv", "taz_overloads.csv", "evacuation_curve.csv"] {
        assert!(dir.path().join("small").join(f).is_file(), "missing {f}");
    }
}

#[test]
fn stages_in_order_then_simulate_again_is_byte_identical() {
    let dir = synthesized();
    for stage in ["link", "predict", "scenario", "simulate", "report"] {
        ok(dir.path(), &["--config", "small.json", stage]);
    }
    let run = dir.path().join("small");
    let files = ["vehicle_results.csv", "violations.csv", "power_summary.csv"];
    let before: Vec<_> = files.iter().map(|f| read(&run.join(f))).collect();
    ok(dir.path(), &["--config", "small.json", "simulate"]);
    let after: Vec<_> = files.iter().map(|f| read(&run.join(f))).collect();
    assert_eq!(before, after);
}

#[test]
fn report_before_simulate_exits_with_stage_order_code() {
    let dir = synthesized();
    ok(dir.path(), &["--config", "small.json", "link"]);
    let out = evtcosim(dir.path(), &["--config", "small.json", "report"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulate"));
}

#[test]
fn unknown_flags_and_missing_configs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = evtcosim(dir.path(), &["--no-such-flag", "run"]);
    assert!(!out.status.success());
    let out = evtcosim(dir.path(), &["--config", "absent.json", "run"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.json"));
}

#[test]
fn compare_writes_the_comparison_table() {
    let dir = synthesized();
    ok(dir.path(), &["--config", "small.json", "--scenario-name", "on", "run"]);
    ok(dir.path(), &["--config", "small.json", "--scenario-name", "off", "--controls", "off", "run"]);
    let out = ok(dir.path(), &["compare", "--a", "on", "--b", "off", "--out", "cmp"]);
    assert!(out.contains("overload delta"), "{out}");
    let csv = String::from_utf8(read(&dir.path().join("cmp/comparison.csv"))).unwrap();
    assert!(csv.starts_with("interval,"));
    assert!(csv.lines().count() > 1);
}

#[test]
fn evacuating_no_zones_succeeds_with_an_empty_run() {
    let dir = synthesized();
    let out = ok(
        dir.path(),
        &["--config", "small.json", "--scenario-name", "none", "--tazs-to-evacuate", "", "run"],
    );
    assert!(out.contains("0 vehicles"), "{out}");
}
