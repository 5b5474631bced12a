mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;

use ompforge::lists::GreenRedList;
use ompforge::report::ResultsSnapshot;

use common::*;

fn ompforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ompforge"))
        .args(args)
        .current_dir(dir)
        .env_remove("OMPFORGE_WORKSPACE")
        .env_remove("OMPFORGE_FIXED_TIME")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const REFERENCE_CONFIG: &str = r#"{
    "toolchains": [{"id": "llvm", "c_compiler": "clang", "cxx_compiler": "clang++",
                    "fortran_compiler": "flang-new"}],
    "targets": [
        {"id": "mi210", "vendor": "amd", "accelerator_name": "AMD MI210", "offload_flags": ["-fopenmp"]},
        {"id": "h100", "vendor": "nvidia", "accelerator_name": "NVIDIA H100", "offload_flags": ["-fopenmp"]}
    ],
    "suites": [
        {"id": "vv", "kind": "versioned_conformance", "root": "vv", "pinned_commit": "a1b2c3",
         "languages": ["C", "C++", "Fortran"]},
        {"id": "smoke", "kind": "flat_application", "root": "smoke", "pinned_commit": "d4e5f6",
         "languages": ["C", "C++"]},
        {"id": "hecbench", "kind": "flat_application", "root": "hecbench", "pinned_commit": "0789ab",
         "languages": ["C++"]}
    ],
    "benchmarks": [{"id": "505.lbm", "language": "C", "model_variants": ["TGT"], "source_dir": "lbm"}],
    "triggers": [
        {"suite_or_bench_id": "vv", "cadence": "hourly"},
        {"suite_or_bench_id": "smoke", "cadence": "hourly"},
        {"suite_or_bench_id": "hecbench", "cadence": "hourly"},
        {"suite_or_bench_id": "505.lbm", "cadence": "weekly"}
    ]
}"#;

#[test]
fn plan_reference_config_hourly() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), REFERENCE_CONFIG).unwrap();
    let out = ompforge(dir.path(), &["plan", "c.json", "--cadence", "hourly"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("build: 2, test: 6"), "{text}");
    assert!(text.contains("run_suite: 6, run_bench: 0"), "{text}");
}

#[test]
fn plan_weekly_has_only_bench_jobs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), REFERENCE_CONFIG).unwrap();
    let out = ompforge(dir.path(), &["plan", "c.json", "--cadence", "weekly"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(
        text.contains("setup: 0, build: 2, test: 2, cleanup: 1"),
        "{text}"
    );
    assert!(text.contains("run_suite: 0, run_bench: 2"), "{text}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        ompforge(d, &["plan", "missing.json", "--cadence", "hourly"])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(d.join("bad.json"), "{ \"toolchains\": [").unwrap();
    let out = ompforge(d, &["run", "bad.json", "--cadence", "hourly"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
    std::fs::write(d.join("c.json"), REFERENCE_CONFIG).unwrap();
    assert_eq!(
        ompforge(d, &["plan", "c.json", "--cadence", "manual"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(ompforge(d, &["plan", "c.json"]).status.code(), Some(2));
    assert_eq!(ompforge(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(ompforge(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn dangling_trigger_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(REFERENCE_CONFIG).unwrap();
    v["triggers"]
        .as_array_mut()
        .unwrap()
        .push(json!({"suite_or_bench_id": "specfp", "cadence": "weekly"}));
    write_json(&dir.path().join("c.json"), &v);
    let out = ompforge(dir.path(), &["plan", "c.json", "--cadence", "hourly"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("triggers[specfp]"));
}

#[test]
fn run_all_pass_then_one_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    flip_setup(d);
    write_flip_manifest(d, &[]);
    let out = ompforge(
        d,
        &[
            "run",
            "config.json",
            "--cadence",
            "manual",
            "--out",
            "s1.json",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("PASS  run_suite/apps/llvm/h100"));
    assert!(d.join("ws").read_dir().unwrap().any(|e| {
        e.unwrap()
            .file_name()
            .to_string_lossy()
            .starts_with("pipeline-manual-")
    }));

    write_flip_manifest(d, &[12]);
    let out = ompforge(
        d,
        &[
            "run",
            "config.json",
            "--cadence",
            "manual",
            "--out",
            "s2.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("FAIL  run_suite/apps/llvm/h100"), "{text}");
    assert!(text.contains("PASS  cleanup_workspace"), "{text}");
}

#[test]
fn workspace_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    flip_setup(d);
    write_flip_manifest(d, &[]);
    let out = Command::new(env!("CARGO_BIN_EXE_ompforge"))
        .args(["run", "config.json", "--cadence", "manual"])
        .current_dir(d)
        .env("OMPFORGE_WORKSPACE", d.join("elsewhere"))
        .env("OMPFORGE_FIXED_TIME", FIXED_TIME)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(d
        .join("elsewhere/snapshot-manual-20240601T000000Z.json")
        .exists());
    assert!(!d.join("ws").exists());
}

#[test]
fn greenlist_gen_and_diff() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    flip_setup(d);
    write_flip_manifest(d, &[]);
    ompforge(
        d,
        &[
            "run",
            "config.json",
            "--cadence",
            "manual",
            "--out",
            "s.json",
        ],
    );

    let out = ompforge(d, &["greenlist", "gen", "s.json", "--out-dir", "lists"]);
    assert_eq!(out.status.code(), Some(0));
    let path = d.join("lists/greenlist-llvm-h100-apps.json");
    let list: GreenRedList =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(list.red.is_empty());
    assert_eq!(list.green.len(), 100);
    assert_eq!(list.baseline_pin, "c0ffee1");

    let out = ompforge(
        d,
        &[
            "greenlist",
            "diff",
            "s.json",
            "--baseline",
            "lists/greenlist-llvm-h100-apps.json",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));

    let out = ompforge(
        d,
        &[
            "greenlist",
            "diff",
            "s.json",
            "--baseline",
            "lists/greenlist-llvm-h100-apps.json",
            "--scope",
            "gnu:h100:apps",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scope mismatch"));

    let out = ompforge(
        d,
        &[
            "greenlist",
            "gen",
            "s.json",
            "--scope",
            "gnu:h100:apps",
            "--out-dir",
            "lists",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut paths = Vec::new();
    for s in matrix_snapshots(11) {
        let p = d.join(format!("{}.json", s.system_label));
        std::fs::write(&p, s.to_json()).unwrap();
        paths.push(p.to_string_lossy().into_owned());
    }
    let mut args = vec!["report"];
    args.extend(paths.iter().map(String::as_str));
    args.extend([
        "--shape",
        "version-matrix",
        "--format",
        "csv",
        "--out",
        "vm.csv",
    ]);
    let out = ompforge(d, &args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(d.join("vm.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("version,Frontier amd,"), "{header}");
    let total = csv.lines().find(|l| l.starts_with("Total")).unwrap();
    assert!(
        total.starts_with("Total,409,329,394,394,328,413,396,213,374"),
        "{total}"
    );

    let mut args = vec!["report"];
    args.extend(paths.iter().map(String::as_str));
    args.extend(["--shape", "totals", "--format", "json"]);
    let out = Command::new(env!("CARGO_BIN_EXE_ompforge"))
        .args(&args)
        .current_dir(d)
        .env("OMPFORGE_WORKSPACE", d.join("ws"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(d.join("ws/reports/totals.json").exists());

    let mut args = vec!["report"];
    args.extend(paths.iter().map(String::as_str));
    args.extend(["--shape", "histogram", "--format", "csv"]);
    assert_eq!(ompforge(d, &args).status.code(), Some(2));
    let mut args = vec!["report"];
    args.extend(paths.iter().map(String::as_str));
    args.extend(["--shape", "totals", "--format", "xlsx"]);
    assert_eq!(ompforge(d, &args).status.code(), Some(2));
}

#[test]
fn report_bench_shows_build_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    bench_setup(d);
    let out = ompforge(
        d,
        &[
            "run",
            "frontier.json",
            "--cadence",
            "weekly",
            "--fixed-time",
            FIXED_TIME,
            "--out",
            "f.json",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(1),
        "BE and EE cells fail their bench jobs"
    );
    let out = ompforge(
        d,
        &[
            "report", "f.json", "--shape", "bench", "--format", "markdown", "--out", "b.md",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let md = std::fs::read_to_string(d.join("b.md")).unwrap();
    assert!(
        md.lines()
            .next()
            .unwrap()
            .contains("Frontier cray | Frontier gnu | Frontier llvm | Frontier rocm"),
        "{md}"
    );
    assert!(
        md.contains("| 513.soma | BE | BE | 87.98 | 70.05 |"),
        "{md}"
    );
    let row = md.lines().find(|l| l.contains("519.clvleaf")).unwrap();
    assert!(row.contains("BE"), "{row}");
}

#[test]
fn report_evolution_is_chronological() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    flip_setup(d);
    write_flip_manifest(d, &[1, 2, 3]);
    ompforge(
        d,
        &[
            "run",
            "config.json",
            "--cadence",
            "manual",
            "--fixed-time",
            "2024-06-02T00:00:00Z",
            "--out",
            "late.json",
        ],
    );
    write_flip_manifest(d, &[1, 2, 3, 4, 5]);
    ompforge(
        d,
        &[
            "run",
            "config.json",
            "--cadence",
            "manual",
            "--fixed-time",
            "2024-06-01T00:00:00Z",
            "--out",
            "early.json",
        ],
    );
    let out = ompforge(
        d,
        &[
            "report",
            "late.json",
            "early.json",
            "--shape",
            "evolution",
            "--format",
            "csv",
            "--out",
            "e.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(d.join("e.csv")).unwrap();
    let c_rows: Vec<&str> = csv.lines().filter(|l| l.contains("C & C++")).collect();
    assert_eq!(c_rows.len(), 2, "{csv}");
    assert!(
        c_rows[0].starts_with("2024-06-01") && c_rows[0].ends_with(",95"),
        "{csv}"
    );
    assert!(
        c_rows[1].starts_with("2024-06-02") && c_rows[1].ends_with(",97"),
        "{csv}"
    );
    let snap = ResultsSnapshot::load(&d.join("late.json")).unwrap();
    assert_eq!(snap.captured_at.to_rfc3339(), "2024-06-02T00:00:00+00:00");
}
