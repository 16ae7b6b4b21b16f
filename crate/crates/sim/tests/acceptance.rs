//! Acceptance suite: the binding correctness and performance criteria for
//! the whole pipeline, run on the synthetic benchmark environments. Each
//! test prints one PASS/FAIL line.
//!
//! The heavyweight benchmark cells (severity scenarios plus the constrained
//! scenario, three seeds, all methods) are computed once and shared.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use cameo_core::acquisition::expected_improvement;
use cameo_core::data::{Dataset, MeasurementRecord, Provenance};
use cameo_core::discovery;
use cameo_core::effects::{self, InterventionQuery};
use cameo_core::graph::{Mark, MixedGraph, Node, NodeRole, Stage};
use cameo_core::optimizer::{self, epsilon, Direction, Query, RunOptions};
use cameo_core::space::{Configuration, ConfigurationSpace, OptionDomain, Value};
use cameo_core::stats::{self, std_normal};
use cameo_sim::baselines::ConditionalRegressor;
use cameo_sim::bench::{self, BenchmarkReport, Cell, Method};
use cameo_sim::env::MedianRepeatEvaluator;
use cameo_sim::{build_env, generate_shift, kl_divergence, shift_env, Severity, ShiftSpec};
use rand::{RngExt, SeedableRng};

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn lower_median(values: &[f64]) -> f64 {
    stats::lower_median(values)
}

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {n} {name}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

/// Shared benchmark cells over the shipped reference suite, restricted to
/// the scenarios the criteria read.
fn shared_report() -> &'static BenchmarkReport {
    static REPORT: OnceLock<BenchmarkReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let suite_path = assets().join("suites/reference.json");
        let full = bench::load_suite(&suite_path).unwrap();
        let keep = ["severity_low", "severity_medium", "severity_high", "constrained_medium"];
        let suite = bench::Suite {
            name: "acceptance".into(),
            scenarios: full
                .scenarios
                .into_iter()
                .filter(|s| keep.contains(&s.name.as_str()))
                .collect(),
        };
        let out = std::env::temp_dir().join("cameo_acceptance_report");
        let _ = std::fs::remove_dir_all(&out);
        bench::run_suite(
            &suite,
            &suite_path.parent().unwrap().to_path_buf(),
            &[Method::Cameo, Method::ColdGpEi, Method::Random],
            3,
            &out,
        )
        .unwrap()
    })
}

fn cells<'a>(report: &'a BenchmarkReport, scenario: &str, method: &str) -> Vec<&'a Cell> {
    report
        .cells
        .iter()
        .filter(|c| c.scenario == scenario && c.method == method && c.status == "ok")
        .collect()
}

fn median_re_at(cells: &[&Cell], iteration: usize) -> Option<f64> {
    let res: Vec<f64> = cells
        .iter()
        .filter_map(|c| {
            let y = c.trajectory.get(iteration - 1).copied().flatten()?;
            Some((y - c.y_opt).abs() / c.y_opt.abs() * 100.0)
        })
        .collect();
    if res.is_empty() {
        None
    } else {
        Some(lower_median(&res))
    }
}

// ---------------------------------------------------------------------
// 1. Confounding robustness: interventional prediction beats conditional
//    regression on the shifted sandbox by at least 25% relative.
// ---------------------------------------------------------------------
#[test]
fn acceptance_01_confounding_robustness() {
    let started = Instant::now();
    let base = build_env(&assets().join("envs/sandbox.json"), 42).unwrap();
    let shift: ShiftSpec = serde_json::from_str(
        &std::fs::read_to_string(assets().join("shifts/sandbox_medium.json")).unwrap(),
    )
    .unwrap();
    let mut improvements = Vec::new();
    for seed in 0..10u64 {
        let mut env = base.clone();
        env.seed = seed;
        let target = shift_env(&env, &shift).unwrap();
        let source = env.observe(2000, 1, seed).unwrap();
        let graph = discovery::learn_cpm(&source, 0.05).unwrap();
        let conditional = ConditionalRegressor::fit(&source, "latency");
        let tests = env.space.sample_uniform(200, 1000 + seed);
        let mut do_errs = Vec::new();
        let mut cond_errs = Vec::new();
        for (i, cfg) in tests.iter().enumerate() {
            let truth = target.evaluate_noise_free(cfg).unwrap()["latency"];
            let measured = target.evaluate(cfg, 5000 + i as u64).unwrap();
            let cond_pred = conditional.predict(&env.space, cfg, &measured.events);
            let q = InterventionQuery {
                assignments: cfg.values.clone(),
                target: "latency".into(),
            };
            let (do_pred, _) = effects::estimate_do(&source, &graph, &q).unwrap();
            do_errs.push(((do_pred - truth) / truth).abs());
            cond_errs.push(((cond_pred - truth) / truth).abs());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (d, c) = (mean(&do_errs), mean(&cond_errs));
        improvements.push((c - d) / c * 100.0);
    }
    let median = lower_median(&improvements);
    let elapsed = started.elapsed();
    verdict(
        1,
        "confounding robustness",
        median >= 25.0 && elapsed.as_secs() < 120,
        &format!("median relative improvement {median:.1}% (need ≥ 25%), runtime {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------
// 2. Structure recovery on 5-node linear-Gaussian models.
// ---------------------------------------------------------------------
#[test]
fn acceptance_02_structure_recovery() {
    let started = Instant::now();
    let mut f1s = Vec::new();
    for seed in 0..10u64 {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..5usize {
            for j in (i + 1)..5 {
                if rng.random_bool(0.4) {
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    edges.push((i, j, sign * (0.8 + 0.7 * rng.random::<f64>())));
                }
            }
        }
        let space = ConfigurationSpace::new(
            vec![OptionDomain::boolean("dummy")],
            (0..5).map(|i| format!("v{i}")).collect(),
            vec!["obj".into()],
        )
        .unwrap();
        let mut ds = Dataset::new(space, "f1");
        for _ in 0..5000 {
            let mut vals = [0.0f64; 5];
            for j in 0..5 {
                let mut v = 0.6 * std_normal(&mut rng);
                for &(a, b, c) in &edges {
                    if b == j {
                        v += c * vals[a];
                    }
                }
                vals[j] = v;
            }
            ds.push(MeasurementRecord {
                config: Configuration::new().with("dummy", Value::Bool(false)),
                events: vals
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (format!("v{i}"), *v))
                    .collect(),
                objectives: BTreeMap::from([("obj".to_string(), std_normal(&mut rng))]),
                provenance: Provenance::Observational,
                repeat_index: 0,
            })
            .unwrap();
        }
        if edges.is_empty() {
            f1s.push(1.0);
            continue;
        }
        let g = discovery::learn_cpm(&ds, 0.05).unwrap();
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (a, b, ma, mb) in g.edges() {
            let na = g.node_name(a);
            let nb = g.node_name(b);
            if !na.starts_with('v') || !nb.starts_with('v') {
                continue;
            }
            let ia: usize = na[1..].parse().unwrap();
            let ib: usize = nb[1..].parse().unwrap();
            let oriented = match (ma, mb) {
                (Mark::Tail, Mark::Arrow) => Some((ia, ib)),
                (Mark::Arrow, Mark::Tail) => Some((ib, ia)),
                _ => None,
            };
            match oriented {
                Some((f, t)) if edges.iter().any(|&(x, y, _)| x == f && y == t) => tp += 1,
                _ => fp += 1,
            }
        }
        let fn_count = edges.len().saturating_sub(tp);
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_count as f64)
        };
        f1s.push(f1);
    }
    let median = lower_median(&f1s);
    let elapsed = started.elapsed();
    verdict(
        2,
        "structure recovery",
        median >= 0.9 && elapsed.as_secs() < 60,
        &format!("median directed-edge F1 {median:.3} (need ≥ 0.9), runtime {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------
// 3. Markov blanket equals brute-force minimal separation exactly.
// ---------------------------------------------------------------------
fn brute_force_blanket(g: &MixedGraph, targets: &BTreeSet<usize>) -> BTreeSet<usize> {
    let n = g.node_count();
    let others: Vec<usize> = (0..n).filter(|v| !targets.contains(v)).collect();
    let mut best: Option<BTreeSet<usize>> = None;
    for mask in 0..(1u32 << others.len()) {
        let s: BTreeSet<usize> = others
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, &v)| v)
            .collect();
        if let Some(b) = &best {
            if s.len() > b.len() {
                continue;
            }
        }
        let rest: BTreeSet<usize> = others.iter().filter(|v| !s.contains(v)).copied().collect();
        if rest.is_empty() || g.m_separated(targets, &rest, &s) {
            let better = match &best {
                None => true,
                Some(b) => s.len() < b.len() || (s.len() == b.len() && s < *b),
            };
            if better {
                best = Some(s);
            }
        }
    }
    let mut out = best.expect("full set separates");
    out.extend(targets.iter().copied());
    out
}

#[test]
fn acceptance_03_markov_blanket_oracle() {
    let mut queries = 0usize;
    let mut mismatches = 0usize;
    for seed in 0..200u64 {
        let nodes = 3 + (seed % 4) as usize;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut g = MixedGraph::new(
            (0..nodes)
                .map(|i| Node { name: format!("n{i}"), role: NodeRole::Event })
                .collect(),
            Stage::Admg,
        );
        for a in 0..nodes {
            for b in (a + 1)..nodes {
                let draw: f64 = rng.random();
                if draw < 0.30 {
                    g.set_edge(a, b, Mark::Tail, Mark::Arrow);
                } else if draw < 0.45 {
                    g.set_edge(a, b, Mark::Arrow, Mark::Arrow);
                }
            }
        }
        let mut target_sets: Vec<BTreeSet<usize>> =
            (0..nodes).map(|t| BTreeSet::from([t])).collect();
        for a in 0..nodes {
            for b in (a + 1)..nodes {
                target_sets.push(BTreeSet::from([a, b]));
            }
        }
        for targets in target_sets {
            let ours = effects::markov_blanket_multi(&g, &targets);
            let truth = brute_force_blanket(&g, &targets);
            queries += 1;
            if ours != truth {
                mismatches += 1;
            }
        }
    }
    verdict(
        3,
        "markov blanket oracle equivalence",
        mismatches == 0,
        &format!("{queries} queries over 200 graphs, {mismatches} mismatches (need 0)"),
    );
}

// ---------------------------------------------------------------------
// 4. Refinement reaches RE ≤ 10% in at least 10% fewer median iterations.
// ---------------------------------------------------------------------
#[test]
fn acceptance_04_refinement_speedup() {
    let root = assets();
    let env = build_env(&root.join("envs/perf_stack.json"), 42).unwrap();
    let shift: ShiftSpec = serde_json::from_str(
        &std::fs::read_to_string(root.join("shifts/perf_stack_medium.json")).unwrap(),
    )
    .unwrap();
    let target = shift_env(&env, &shift).unwrap();
    let (_, y_opt) = target.ground_truth_auto("latency", 7).unwrap();
    let source = env.observe(2000, 5, 1).unwrap();
    let eval5 = MedianRepeatEvaluator::new(&target, 5);
    let query = Query {
        objective: "latency".into(),
        direction: Direction::Minimize,
        budget_iterations: Some(120),
        budget_seconds: None,
        constraints: vec![],
    };
    let mut medians = Vec::new();
    for refine in [true, false] {
        let mut iters = Vec::new();
        for seed in 0..10u64 {
            let options =
                RunOptions { seed, convergence_window: 0, refine, ..RunOptions::default() };
            let res = optimizer::run(query.clone(), &source, &eval5, options).unwrap();
            let reached = res
                .best_trajectory()
                .iter()
                .position(|y| {
                    y.map(|y| (y - y_opt).abs() / y_opt.abs() * 100.0 <= 10.0).unwrap_or(false)
                })
                .map(|i| i + 1)
                .unwrap_or(121);
            iters.push(reached as f64);
        }
        medians.push(lower_median(&iters));
    }
    let (with, without) = (medians[0], medians[1]);
    verdict(
        4,
        "refinement speedup",
        with <= 0.9 * without,
        &format!(
            "median iterations to RE≤10%: refined {with}, unrefined {without} (need ≥ 10% fewer)"
        ),
    );
}

// ---------------------------------------------------------------------
// 5. Transfer benefit on the medium-shift reference scenario.
// ---------------------------------------------------------------------
#[test]
fn acceptance_05_transfer_benefit() {
    let started = Instant::now();
    let report = shared_report();
    let cameo = cells(report, "severity_medium", "cameo");
    let cold = cells(report, "severity_medium", "cold-gp-ei");
    assert_eq!(cameo.len(), 3, "three cameo seeds expected");
    assert_eq!(cold.len(), 3, "three cold seeds expected");
    let cameo_50 = median_re_at(&cameo, 50).unwrap();
    let cold_50 = median_re_at(&cold, 50).unwrap();
    let cameo_final = median_re_at(&cameo, 200).unwrap();
    let cold_final = median_re_at(&cold, 200).unwrap();
    let elapsed = started.elapsed();
    verdict(
        5,
        "transfer benefit",
        cameo_50 < cold_50 && cameo_final <= cold_final && elapsed.as_secs() < 600,
        &format!(
            "median RE@50 cameo {cameo_50:.2}% vs cold {cold_50:.2}% (strict), \
             final {cameo_final:.2}% vs {cold_final:.2}% (≤), shared-suite wall {elapsed:?}"
        ),
    );
}

// ---------------------------------------------------------------------
// 6. Hamming convergence of the maintained target model.
// ---------------------------------------------------------------------
#[test]
fn acceptance_06_hamming_convergence() {
    let report = shared_report();
    let cameo = cells(report, "severity_medium", "cameo");
    let mut initials = Vec::new();
    let mut finals = Vec::new();
    let mut combined = Vec::new();
    let mut source_only = Vec::new();
    for cell in &cameo {
        let first = cell.hamming.first().expect("hamming trajectory");
        let last = cell.hamming.last().expect("hamming trajectory");
        initials.push(first.target as f64);
        finals.push(last.target as f64);
        combined.push(last.combined as f64);
        source_only.push(last.source_only as f64);
    }
    let initial_med = lower_median(&initials);
    let final_med = lower_median(&finals);
    let combined_med = lower_median(&combined);
    let source_med = lower_median(&source_only);
    verdict(
        6,
        "hamming convergence",
        final_med <= initial_med && combined_med <= source_med,
        &format!(
            "target-model distance {initial_med} → {final_med} (need non-increasing), \
             combined {combined_med} vs source-only {source_med} (need ≤)"
        ),
    );
}

// ---------------------------------------------------------------------
// 7. Severity monotonicity: KL ordering and nonnegative RE gap.
// ---------------------------------------------------------------------
#[test]
fn acceptance_07_severity_monotonicity() {
    let env = build_env(&assets().join("envs/perf_stack.json"), 42).unwrap();
    let probe = env.space.sample_uniform(1500, 99);
    let mut kl_medians = Vec::new();
    for severity in [Severity::Low, Severity::Medium, Severity::High] {
        let mut kls = Vec::new();
        for seed in 0..10u64 {
            let spec = generate_shift(&env, severity, seed);
            let target = shift_env(&env, &spec).unwrap();
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (i, cfg) in probe.iter().enumerate() {
                a.push(env.evaluate(cfg, i as u64).unwrap().objectives["latency"]);
                b.push(target.evaluate(cfg, i as u64).unwrap().objectives["latency"]);
            }
            kls.push(kl_divergence(&a, &b, 50));
        }
        kls.sort_by(|a, b| a.total_cmp(b));
        kl_medians.push(kls[4]);
    }
    let kl_ok = kl_medians[0] < kl_medians[1] && kl_medians[1] < kl_medians[2];

    let report = shared_report();
    let mut gaps = Vec::new();
    for scenario in ["severity_low", "severity_medium", "severity_high"] {
        let cameo = median_re_at(&cells(report, scenario, "cameo"), 50);
        let cold = median_re_at(&cells(report, scenario, "cold-gp-ei"), 50);
        match (cameo, cold) {
            (Some(c), Some(b)) => gaps.push((scenario, b - c)),
            _ => gaps.push((scenario, f64::NAN)),
        }
    }
    let gaps_ok = gaps.iter().all(|(_, g)| *g >= 0.0);
    verdict(
        7,
        "severity monotonicity",
        kl_ok && gaps_ok,
        &format!("KL medians {kl_medians:?} (need increasing); RE@50 gaps {gaps:?} (need ≥ 0)"),
    );
}

// ---------------------------------------------------------------------
// 8. Constraint safety on every constrained benchmark run.
// ---------------------------------------------------------------------
#[test]
fn acceptance_08_constraint_safety() {
    let report = shared_report();
    let constrained: Vec<&Cell> =
        report.cells.iter().filter(|c| c.scenario == "constrained_medium").collect();
    assert!(!constrained.is_empty(), "constrained scenario must run");
    let failures: Vec<String> = constrained
        .iter()
        .filter(|c| c.status != "ok" || c.constraint_violations > 0)
        .map(|c| format!("{}/{}/{}", c.scenario, c.method, c.seed))
        .collect();
    verdict(
        8,
        "constraint safety",
        failures.is_empty(),
        &format!(
            "{} constrained cells, violations in {:?} (need none)",
            constrained.len(),
            failures
        ),
    );
}

// ---------------------------------------------------------------------
// 9. Unit formula suite, exact.
// ---------------------------------------------------------------------
#[test]
fn acceptance_09_unit_formulas() {
    // exploration coefficient arithmetic
    let eps_ok = epsilon(0.5, 50, 100) == 0.25;

    // indicator at the stated gaps with threshold 0.1
    let warm = [1.0, 0.95, 0.90, 0.70];
    let lambdas: Vec<u8> = (0..4)
        .map(|i| cameo_core::acquisition::interpolation_coeff(&warm, i, 0.1))
        .collect();
    let lambda_ok = lambdas == vec![1, 1, 1, 0];

    // combined-score degenerate cases
    let (all_cold, _) = cameo_core::acquisition::combine_scores(&[1.0, 0.99], &[0.3, 0.8], 0.1);
    let degenerate_cold = all_cold.iter().all(|r| r.2 == 1 && (r.3 - r.1).abs() < 1e-15);
    let (mixed, _) = cameo_core::acquisition::combine_scores(&[1.0, 0.2], &[0.3, 0.8], 0.1);
    let degenerate_warm = mixed[1].2 == 0 && (mixed[1].3 - mixed[1].0).abs() < 1e-15;

    // relative error formula
    let re_ok = (cameo_sim::relative_error(11.0, 10.0).unwrap() - 10.0).abs() < 1e-12
        && (cameo_sim::relative_error(8.0, 10.0).unwrap() - 20.0).abs() < 1e-12;

    // EI closed form against a million-draw Monte Carlo
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
    let (mean, std, best) = (1.0, 0.8, 1.2);
    let draws = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..draws {
        let y = mean + std * std_normal(&mut rng);
        acc += (best - y).max(0.0);
    }
    let mc = acc / draws as f64;
    let closed = expected_improvement(mean, std, best);
    let ei_ok = (mc - closed).abs() < 1e-3;

    // Fisher-z arithmetic
    let z = stats::fisher_z(0.5, 103, 0);
    let fisher_ok = (z - 0.5 * 3f64.ln() * 10.0).abs() < 1e-6;

    verdict(
        9,
        "unit formula suite",
        eps_ok && lambda_ok && degenerate_cold && degenerate_warm && re_ok && ei_ok && fisher_ok,
        &format!(
            "eps {eps_ok}, lambda {lambda_ok}, combine {},{} , re {re_ok}, \
             ei |mc-closed|={:.2e}, fisher {fisher_ok}",
            degenerate_cold,
            degenerate_warm,
            (mc - closed).abs()
        ),
    );
}

// ---------------------------------------------------------------------
// 10. Reproducibility: byte-identical report CSVs.
// ---------------------------------------------------------------------
#[test]
fn acceptance_10_reproducibility() {
    let suite = assets().join("suites/smoke.json");
    let methods = [Method::Cameo, Method::ColdGpEi, Method::Random];
    let out1 = std::env::temp_dir().join("cameo_acc10_a");
    let out2 = std::env::temp_dir().join("cameo_acc10_b");
    for dir in [&out1, &out2] {
        let _ = std::fs::remove_dir_all(dir);
    }
    bench::run_benchmark(&suite, &methods, 2, &out1).unwrap();
    bench::run_benchmark(&suite, &methods, 2, &out2).unwrap();
    let mut identical = true;
    let mut detail = String::new();
    for name in ["summary.csv", "trajectories.csv", "hamming.csv"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        let same = a == b;
        identical &= same;
        detail.push_str(&format!("{name}:{} ", if same { "identical" } else { "DIFFERS" }));
    }
    verdict(10, "reproducibility", identical, detail.trim());
}
