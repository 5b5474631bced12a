//! Fixtures shared by the integration tests and the acceptance harness:
//! reference conformance and benchmark results, generators for suite trees,
//! mock manifests and configs that reproduce them, and synthetic snapshots.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use ompforge::config::{parse_config, Config, Language};
use ompforge::report::ResultsSnapshot;
use ompforge::suite::{PhaseResult, SpecVersion, TestCase, TestOutcome};

pub const VERSIONS: [SpecVersion; 4] = [
    SpecVersion::V4_5,
    SpecVersion::V5_0,
    SpecVersion::V5_1,
    SpecVersion::V5_2,
];

/// Tests per version: C, C++, Fortran.
pub const VV_LAYOUT: [[usize; 3]; 4] = [[134, 14, 104], [191, 13, 128], [99, 2, 28], [16, 8, 5]];
pub const VV_TOTAL: usize = 742;

/// (system, toolchain) columns of the conformance matrix.
pub const MATRIX_COLUMNS: [(&str, &str); 9] = [
    ("Frontier", "amd"),
    ("Frontier", "cray"),
    ("Frontier", "gnu"),
    ("Frontier", "llvm"),
    ("Perlmutter", "cray"),
    ("Perlmutter", "gnu"),
    ("Perlmutter", "llvm"),
    ("Perlmutter", "nvidia"),
    ("Sunspot", "intel"),
];

pub const CXX_PASSES: [[usize; 9]; 4] = [
    [146, 142, 137, 147, 142, 145, 148, 131, 142],
    [179, 147, 170, 171, 146, 175, 172, 67, 162],
    [68, 39, 75, 66, 39, 75, 66, 13, 67],
    [16, 1, 12, 10, 1, 18, 10, 2, 3],
];
pub const CXX_PASS_TOTALS: [usize; 9] = [409, 329, 394, 394, 328, 413, 396, 213, 374];

pub const FORTRAN_PASSES: [[usize; 9]; 4] = [
    [86, 89, 104, 15, 88, 104, 15, 97, 97],
    [40, 86, 110, 9, 81, 107, 9, 24, 85],
    [2, 3, 19, 0, 3, 19, 0, 2, 12],
    [4, 2, 4, 3, 2, 4, 3, 3, 3],
];
pub const FORTRAN_PASS_TOTALS: [usize; 9] = [132, 180, 237, 27, 174, 234, 27, 126, 197];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    T(f64),
    BE,
    EE,
}

use Cell::{BE, EE, T};

pub const PERLMUTTER_TOOLCHAINS: [&str; 4] = ["gnu", "llvm", "cray", "nvidia"];
pub const FRONTIER_TOOLCHAINS: [&str; 4] = ["gnu", "llvm", "cray", "rocm"];

/// Offloading base times: app, language, Perlmutter cells, Frontier cells.
pub const OFFLOAD_TIMES: [(&str, Language, [Cell; 4], [Cell; 4]); 10] = [
    (
        "505.lbm",
        Language::C,
        [T(484.89), T(38.29), T(28.34), T(35.9)],
        [T(2813.46), T(43.44), T(40.82), T(54.64)],
    ),
    (
        "513.soma",
        Language::C,
        [T(855.05), T(69.61), T(56.75), T(65.64)],
        [BE, T(87.98), BE, T(70.05)],
    ),
    (
        "518.tealeaf",
        Language::C,
        [T(2200.95), T(90.84), T(49.09), T(40.49)],
        [T(337.12), T(43.58), T(40.41), T(48.51)],
    ),
    (
        "519.clvleaf",
        Language::Fortran,
        [BE, BE, EE, T(45.54)],
        [BE, BE, T(58.73), T(72.73)],
    ),
    (
        "521.miniswp",
        Language::C,
        [EE, T(209.55), T(96.76), T(573.09)],
        [EE, T(160.44), T(93.59), T(142.61)],
    ),
    (
        "528.pot3d",
        Language::Fortran,
        [T(926.24), BE, T(55.34), T(61.54)],
        [BE, BE, T(45.64), T(92.61)],
    ),
    (
        "532.sph_exa",
        Language::Cxx,
        [T(1454.46), T(849.6), EE, T(491.41)],
        [BE, T(203.34), T(226.33), T(207.4)],
    ),
    (
        "532.sph_exaM",
        Language::Cxx,
        [T(5973.46), T(179.41), T(128.36), EE],
        [BE, T(145.61), T(164.87), T(144.83)],
    ),
    (
        "534.hpgmgfv",
        Language::C,
        [EE, T(156.75), T(71.2), T(163.33)],
        [BE, T(102.32), T(87.5), T(95.59)],
    ),
    (
        "535.weather",
        Language::Fortran,
        [T(1391.84), BE, T(38.51), T(42.72)],
        [T(2569.96), BE, T(32.51), T(53.19)],
    ),
];

/// OpenACC base times with the NVIDIA toolchain on Perlmutter.
pub const ACC_TIMES: [(&str, f64); 9] = [
    ("505.lbm", 28.48),
    ("513.soma", 45.82),
    ("518.tealeaf", 48.23),
    ("519.clvleaf", 35.69),
    ("521.miniswp", 52.38),
    ("528.pot3d", 53.58),
    ("532.sph_exa", 129.08),
    ("534.hpgmgfv", 64.27),
    ("535.weather", 37.23),
];

pub const FIXED_TIME: &str = "2024-06-01T00:00:00Z";

pub fn fixed_time() -> DateTime<Utc> {
    FIXED_TIME.parse().unwrap()
}

pub fn write_json(path: &Path, value: &Value) {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).unwrap();
    }
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// Parse a config file and rebase its paths the way the CLI does.
pub fn load_config(path: &Path) -> Config {
    let mut cfg = parse_config(&std::fs::read_to_string(path).unwrap()).unwrap();
    cfg.resolve_paths(path.parent().unwrap());
    cfg
}

fn lang_dir(lang: Language) -> (&'static str, &'static str) {
    match lang {
        Language::C => ("c", "c"),
        Language::Cxx => ("cpp", "cpp"),
        Language::Fortran => ("fortran", "F90"),
    }
}

const LANGS: [Language; 3] = [Language::C, Language::Cxx, Language::Fortran];

/// Relative paths of a versioned suite laid out with the reference counts.
pub fn vv_rel_paths() -> Vec<(SpecVersion, Language, String)> {
    let mut out = Vec::new();
    for (vi, version) in VERSIONS.iter().enumerate() {
        let tag = version.as_str().replace('.', "");
        for (li, lang) in LANGS.iter().enumerate() {
            let (dir, ext) = lang_dir(*lang);
            for i in 0..VV_LAYOUT[vi][li] {
                out.push((
                    *version,
                    *lang,
                    format!("{}/{dir}/test_{tag}_{dir}_{i:03}.{ext}", version.as_str()),
                ));
            }
        }
    }
    out
}

/// Write the reference suite tree under `root`, plus a few files discovery must ignore.
pub fn write_vv_tree(root: &Path) {
    for (_, lang, rel) in vv_rel_paths() {
        let path = root.join(&rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        let body = match lang {
            Language::Fortran => "program t\nend program t\n",
            _ => "int main(void) { return 0; }\n",
        };
        std::fs::write(path, body).unwrap();
    }
    std::fs::write(root.join("README.md"), "suite\n").unwrap();
    std::fs::create_dir_all(root.join("4.5/c")).unwrap();
    std::fs::write(root.join("4.5/c/ompvv.h"), "#pragma once\n").unwrap();
}

pub fn vv_cases(suite_id: &str) -> Vec<TestCase> {
    vv_rel_paths()
        .into_iter()
        .map(|(spec_version, language, rel_path)| TestCase {
            suite_id: suite_id.to_string(),
            name: Path::new(&rel_path)
                .file_stem()
                .unwrap()
                .to_string_lossy()
                .into_owned(),
            rel_path,
            spec_version,
            language,
        })
        .collect()
}

fn mock_toolchain(id: &str, manifest: &str) -> Value {
    json!({
        "id": id,
        "c_compiler": manifest,
        "cxx_compiler": manifest,
        "fortran_compiler": manifest,
        "kind": "mock"
    })
}

fn target(id: &str, vendor: &str) -> Value {
    json!({"id": id, "vendor": vendor, "accelerator_name": id, "offload_flags": ["-fopenmp"]})
}

/// A config running one mock toolchain over the reference suite tree. Tests listed
/// in `failing` exit with wrong-answer status; all others pass.
pub fn vv_setup(dir: &Path, failing: &[&str]) -> PathBuf {
    write_vv_tree(&dir.join("vv"));
    let per_test: BTreeMap<&str, Value> = failing
        .iter()
        .map(|t| (*t, json!({"run": {"exit": 1}})))
        .collect();
    write_json(
        &dir.join("mock-llvm.json"),
        &json!({"default_behavior": {"compile_seconds": 0.5, "run_seconds": 0.25}, "per_test": per_test}),
    );
    let cfg = json!({
        "toolchains": [mock_toolchain("llvm", "mock-llvm.json")],
        "targets": [target("mi250x", "amd")],
        "suites": [{"id": "vv", "kind": "versioned_conformance", "root": "vv",
                    "pinned_commit": "1f2e3d4", "languages": ["C", "C++", "Fortran"]}],
        "triggers": [{"suite_or_bench_id": "vv", "cadence": "hourly"}],
        "workspace_dir": "ws",
        "system_label": "Frontier"
    });
    let path = dir.join("config.json");
    write_json(&path, &cfg);
    path
}

/// Per-column synthetic outcomes over the reference suite tests: in each (version,
/// language group) a seeded random subset of exactly the expected size
/// passes and the rest fail. One snapshot per system.
pub fn matrix_snapshots(seed: u64) -> Vec<ResultsSnapshot> {
    let cases = vv_cases("vv");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_system: BTreeMap<&str, Vec<TestOutcome>> = BTreeMap::new();
    for (c, (system, toolchain)) in MATRIX_COLUMNS.iter().enumerate() {
        let target_id = format!("{}-gpu", system.to_lowercase());
        for (vi, version) in VERSIONS.iter().enumerate() {
            for (fortran, counts) in [(false, &CXX_PASSES), (true, &FORTRAN_PASSES)] {
                let mut group: Vec<&TestCase> = cases
                    .iter()
                    .filter(|t| {
                        t.spec_version == *version && (t.language == Language::Fortran) == fortran
                    })
                    .collect();
                group.shuffle(&mut rng);
                let k = counts[vi][c];
                for (i, t) in group.into_iter().enumerate() {
                    by_system.entry(system).or_default().push(TestOutcome {
                        test: t.clone(),
                        toolchain_id: toolchain.to_string(),
                        target_id: target_id.clone(),
                        phase_result: if i < k {
                            PhaseResult::Pass
                        } else {
                            PhaseResult::WrongAnswer
                        },
                        compile_seconds: 1.0,
                        run_seconds: 0.5,
                        diagnostics: String::new(),
                    });
                }
            }
        }
    }
    by_system
        .into_iter()
        .map(|(system, outcomes)| ResultsSnapshot {
            snapshot_id: format!("synthetic-{system}"),
            captured_at: fixed_time(),
            system_label: system.to_string(),
            commit_pins: [("vv".to_string(), "1f2e3d4".to_string())].into(),
            discovered: cases.clone(),
            outcomes,
            bench: Vec::new(),
        })
        .collect()
}

fn bench_entry(app: &str, variant: &str, cell: Cell) -> Value {
    match cell {
        // The middle of three runs is the median.
        T(t) => {
            json!({"app_id": app, "variant": variant, "run_seconds_sequence": [t + 1.0, t, t * 0.5]})
        }
        BE => json!({"app_id": app, "variant": variant, "build": "fail"}),
        EE => {
            json!({"app_id": app, "variant": variant, "run_seconds_sequence": [12.5], "verify": false})
        }
    }
}

fn bench_app(app: &str, lang: Language, variant: &str) -> Value {
    json!({
        "id": app,
        "language": lang,
        "model_variants": [variant],
        "source_dir": format!("spec/{app}")
    })
}

/// Write mock manifests and three configs (Perlmutter offloading,
/// Frontier offloading, Perlmutter OpenACC) that reproduce the benchmark
/// tables. Every benchmark is on the weekly cadence.
pub fn bench_setup(dir: &Path) -> Vec<PathBuf> {
    let systems: [(&str, &str, &str, [&str; 4], usize); 2] = [
        ("Perlmutter", "a100", "nvidia", PERLMUTTER_TOOLCHAINS, 0),
        ("Frontier", "mi250x", "amd", FRONTIER_TOOLCHAINS, 1),
    ];
    let mut configs = Vec::new();
    for (system, tgt, vendor, toolchains, side) in systems {
        let sys = system.to_lowercase();
        let mut tcs = Vec::new();
        for (ti, tc) in toolchains.iter().enumerate() {
            let mut per_bench: Vec<Value> = OFFLOAD_TIMES
                .iter()
                .map(|(app, _, p, f)| {
                    bench_entry(app, "TGT", if side == 0 { p[ti] } else { f[ti] })
                })
                .collect();
            if system == "Perlmutter" && *tc == "nvidia" {
                per_bench.extend(
                    ACC_TIMES
                        .iter()
                        .map(|(app, t)| bench_entry(app, "ACC", T(*t))),
                );
            }
            let manifest = format!("mock-{sys}-{tc}.json");
            write_json(&dir.join(&manifest), &json!({"per_bench": per_bench}));
            tcs.push(mock_toolchain(tc, &manifest));
        }
        let apps: Vec<Value> = OFFLOAD_TIMES
            .iter()
            .map(|(app, lang, _, _)| bench_app(app, *lang, "TGT"))
            .collect();
        let triggers: Vec<Value> = OFFLOAD_TIMES
            .iter()
            .map(|(app, ..)| json!({"suite_or_bench_id": app, "cadence": "weekly"}))
            .collect();
        let path = dir.join(format!("{sys}.json"));
        write_json(
            &path,
            &json!({
                "toolchains": tcs,
                "targets": [target(tgt, vendor)],
                "suites": [],
                "benchmarks": apps,
                "triggers": triggers,
                "workspace_dir": format!("ws-{sys}"),
                "system_label": system
            }),
        );
        configs.push(path);
    }

    let lang_of = |app: &str| OFFLOAD_TIMES.iter().find(|(a, ..)| *a == app).unwrap().1;
    let apps: Vec<Value> = ACC_TIMES
        .iter()
        .map(|(app, _)| bench_app(app, lang_of(app), "ACC"))
        .collect();
    let triggers: Vec<Value> = ACC_TIMES
        .iter()
        .map(|(app, _)| json!({"suite_or_bench_id": app, "cadence": "weekly"}))
        .collect();
    let path = dir.join("perlmutter-acc.json");
    write_json(
        &path,
        &json!({
            "toolchains": [mock_toolchain("nvidia", "mock-perlmutter-nvidia.json")],
            "targets": [target("a100", "nvidia")],
            "suites": [],
            "benchmarks": apps,
            "triggers": triggers,
            "workspace_dir": "ws-perlmutter-acc",
            "system_label": "Perlmutter"
        }),
    );
    configs.push(path);
    configs
}

/// A flat 100-test suite and a mock toolchain whose behavior is read from
/// `mock.json`; see [`write_flip_manifest`].
pub fn flip_setup(dir: &Path) -> PathBuf {
    let root = dir.join("apps");
    std::fs::create_dir_all(&root).unwrap();
    for i in 0..100 {
        std::fs::write(
            root.join(format!("app_{i:03}.c")),
            "int main(void) { return 0; }\n",
        )
        .unwrap();
    }
    let cfg = json!({
        "toolchains": [mock_toolchain("llvm", "mock.json")],
        "targets": [target("h100", "nvidia")],
        "suites": [{"id": "apps", "kind": "flat_application", "root": "apps",
                    "pinned_commit": "c0ffee1", "languages": ["C"]}],
        "triggers": [{"suite_or_bench_id": "apps", "cadence": "manual"}],
        "workspace_dir": "ws",
        "system_label": "Perlmutter"
    });
    let path = dir.join("config.json");
    write_json(&path, &cfg);
    path
}

/// Every test whose index is in `failing` fails; the rest pass.
pub fn write_flip_manifest(dir: &Path, failing: &[usize]) {
    let per_test: BTreeMap<String, Value> = failing
        .iter()
        .map(|i| (format!("app_{i:03}"), json!({"run": {"exit": 1}})))
        .collect();
    write_json(
        &dir.join("mock.json"),
        &json!({"default_behavior": {}, "per_test": per_test}),
    );
}

pub fn flip_test_id(i: usize) -> String {
    format!("app_{i:03}.c")
}
