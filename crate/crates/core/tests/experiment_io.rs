use std::fs;
use std::path::Path;

use trps_precoding::experiment::{
    emit_csv, emit_plot_script, read_csv, run_scenario, run_to_dir, write_csv, Design, ResultRow, RunOptions,
    Scenario, SweepKind, CSV_COLUMNS,
};
use trps_precoding::Error;

const SMALL: &str = r#"
name = "small"
nx = 2
ny = 4
k = 2
mt = 2
g_ut_dbi = 30.0
architectures = ["fc-trps", "pc-trps", "digital"]
sweep = "power-budget"
sweep_values = [0.0, 10.0]
mc_samples = 200
linear_baseline = true
"#;

fn small() -> Scenario {
    Scenario::from_toml(SMALL).unwrap()
}

fn quiet() -> RunOptions {
    RunOptions {
        zero_timing: true,
        ..RunOptions::default()
    }
}

fn scenarios_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

#[test]
fn rows_come_back_in_job_order() {
    let rows = run_scenario(&small(), quiet()).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 2);
    let keys: Vec<(String, Design, f64)> =
        rows.iter().map(|r| (r.architecture.clone(), r.design, r.sweep_value)).collect();
    let mut expect = Vec::new();
    for a in ["fc-trps", "pc-trps", "digital"] {
        for d in [Design::Nonlinear, Design::Linear] {
            for v in [0.0, 10.0] {
                expect.push((a.to_string(), d, v));
            }
        }
    }
    assert_eq!(keys, expect);
    for r in &rows {
        assert_eq!(r.status, "ok");
        assert!(r.ee > 0.0 && r.mc_sum_rate.is_some());
        assert_eq!(r.residual.is_some(), r.architecture != "digital");
        assert_eq!(r.wall_time_s, 0.0);
    }
}

#[test]
fn csv_round_trips() {
    let rows = run_scenario(&small(), quiet()).unwrap();
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# units:"));
    assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
}

#[test]
fn empty_rows_give_a_header_only_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    emit_csv(&[], &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1], CSV_COLUMNS.join(","));
    assert!(read_csv(text.as_bytes()).unwrap().is_empty());
}

#[test]
fn fixed_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_to_dir(&small(), a.path(), quiet()).unwrap();
    run_to_dir(&small(), b.path(), quiet()).unwrap();
    for f in ["small.csv", "small_plot.py"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let mut other = small();
    other.seed = 2;
    let c = tempfile::tempdir().unwrap();
    run_to_dir(&other, c.path(), quiet()).unwrap();
    assert_ne!(fs::read(a.path().join("small.csv")).unwrap(), fs::read(c.path().join("small.csv")).unwrap());
}

#[test]
fn failing_points_are_reported_per_row() {
    let mut s = small();
    s.nx = 2;
    s.ny = 3;
    s.mt = 4;
    s.linear_baseline = false;
    s.architectures = vec!["fc-trps".into(), "pc-trps".into()];
    let rows = run_scenario(&s, quiet()).unwrap();
    assert!(rows.iter().filter(|r| r.architecture == "fc-trps").all(|r| r.status == "ok"));
    for r in rows.iter().filter(|r| r.architecture == "pc-trps") {
        assert!(r.status.starts_with("error:domain:"), "{}", r.status);
        assert!(r.ee.is_nan());
    }
}

#[test]
fn plot_script_draws_one_curve_per_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let rows = run_to_dir(&small(), dir.path(), quiet()).unwrap();
    let script = fs::read_to_string(dir.path().join("small_plot.py")).unwrap();
    assert!(script.contains("\"small.csv\""));
    assert!(script.contains("Power budget"));
    assert!(script.contains("row[\"architecture\"] + \" (\" + row[\"design\"] + \")\""));
    let empty = dir.path().join("empty_plot.py");
    emit_plot_script(&[] as &[ResultRow], "empty.csv", &empty).unwrap();
    let empty_script = fs::read_to_string(&empty).unwrap();
    assert!(empty_script.contains("if curves:"));
    let python = std::process::Command::new("python3")
        .args(["-m", "py_compile"])
        .arg(dir.path().join("small_plot.py"))
        .arg(&empty)
        .status();
    if let Ok(status) = python {
        assert!(status.success());
    }
    let curves: std::collections::BTreeSet<_> = rows.iter().map(|r| (&r.architecture, r.design as u8)).collect();
    assert_eq!(curves.len(), 6);
}

#[test]
fn scenario_errors_are_config_errors() {
    let bad = [
        "bogus_key = 1",
        "sweep = \"hi-ratio\"\nsweep_values = [0.5, 1.5]",
        "architectures = [\"fc-mystery\"]",
        "sweep_values = []",
        "bw_hz = -1.0",
        "sweep = \"rf-chains\"\nsweep_values = [2.5]",
    ];
    for text in bad {
        let err = Scenario::from_toml(text).unwrap_err();
        assert_eq!(err.code(), "config", "{text}: {err}");
    }
    assert!(matches!(Scenario::load(Path::new("/nonexistent/x.toml")), Err(Error::Io(_))));
}

#[test]
fn checked_in_scenarios_load() {
    let mut names = Vec::new();
    for entry in fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        let s = Scenario::load(&path).unwrap();
        assert_eq!(path.file_stem().unwrap().to_str().unwrap(), s.name);
        names.push(s.name);
    }
    names.sort();
    assert_eq!(
        names,
        [
            "fig2_hi_ratio",
            "fig3_convergence",
            "fig4_bound",
            "fig5_linearity",
            "fig5_linearity_small",
            "fig6_resolution",
            "fig7_rf_chains",
            "fig8_architectures"
        ]
    );
}

#[test]
fn paper_scale_switches_dimensions() {
    let s = Scenario::load(&scenarios_dir().join("fig7_rf_chains.toml")).unwrap().paper_scale();
    assert_eq!((s.nx, s.ny, s.k, s.mt), (12, 12, 9, 9));
    assert_eq!(s.sweep, SweepKind::RfChains);
    assert!(s.sweep_values.iter().all(|&m| m >= 9.0));
}

#[test]
fn trace_file_is_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = small();
    s.write_trace = true;
    s.architectures = vec!["fc-trps".into()];
    s.linear_baseline = false;
    run_to_dir(&s, dir.path(), quiet()).unwrap();
    let text = fs::read_to_string(dir.path().join("small_trace.csv")).unwrap();
    assert!(text.starts_with("architecture,design,sweep_value,trial,stage"));
    for stage in [",inner,", ",outer,", ",mm,"] {
        assert!(text.contains(stage), "{stage}");
    }
}
