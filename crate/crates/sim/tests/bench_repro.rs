//! Benchmark determinism: identical inputs give byte-identical CSV outputs,
//! and the emitted files carry the promised structure.

use std::path::{Path, PathBuf};

use cameo_sim::bench::{self, Method};

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

#[test]
fn smoke_suite_is_byte_reproducible() {
    let suite = assets().join("suites/smoke.json");
    let methods = [Method::Cameo, Method::ColdGpEi, Method::Random];
    let out1 = std::env::temp_dir().join("cameo_bench_repro_1");
    let out2 = std::env::temp_dir().join("cameo_bench_repro_2");
    for dir in [&out1, &out2] {
        let _ = std::fs::remove_dir_all(dir);
    }
    let report1 = bench::run_benchmark(&suite, &methods, 1, &out1).unwrap();
    let report2 = bench::run_benchmark(&suite, &methods, 1, &out2).unwrap();
    assert_eq!(report1.cells.len(), report2.cells.len());
    for name in ["summary.csv", "trajectories.csv", "hamming.csv"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // report and plots exist with the promised shape
    let report_text = std::fs::read_to_string(out1.join("report.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&report_text).unwrap();
    assert_eq!(parsed["report_version"], 1);
    assert!(out1.join("plots/smoke_low_objective.svg").exists());
    // every cell ran
    assert!(report1.cells.iter().all(|c| c.status == "ok"), "{:?}",
        report1.cells.iter().map(|c| c.status.clone()).collect::<Vec<_>>());
}

#[test]
fn random_method_is_running_minimum_of_uniform_draws() {
    let suite = assets().join("suites/smoke.json");
    let out = std::env::temp_dir().join("cameo_bench_random");
    let _ = std::fs::remove_dir_all(&out);
    let report = bench::run_benchmark(&suite, &[Method::Random], 1, &out).unwrap();
    for cell in &report.cells {
        let ys: Vec<f64> = cell.trajectory.iter().filter_map(|y| *y).collect();
        for w in ys.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "random trajectory not monotone");
        }
    }
}
