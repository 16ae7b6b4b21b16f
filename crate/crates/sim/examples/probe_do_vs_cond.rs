use cameo_core::discovery;
use cameo_core::effects::{estimate_do, InterventionQuery};
use cameo_sim::baselines::ConditionalRegressor;
use cameo_sim::{build_env, shift_env, ShiftSpec};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets");
    let base = build_env(&root.join("envs/sandbox.json"), 42).unwrap();
    let shift: ShiftSpec = serde_json::from_str(
        &std::fs::read_to_string(root.join("shifts/sandbox_medium.json")).unwrap(),
    )
    .unwrap();
    let t_all = Instant::now();
    let mut improvements = Vec::new();
    for seed in 0..10u64 {
        let mut env = base.clone();
        env.seed = seed;
        let target = shift_env(&env, &shift).unwrap();
        let source = env.observe(2000, 1, seed).unwrap();
        let graph = discovery::learn_cpm(&source, 0.05).unwrap();
        let cond = ConditionalRegressor::fit(&source, "latency");

        let tests = env.space.sample_uniform(200, 1000 + seed);
        let mut do_errs = Vec::new();
        let mut cond_errs = Vec::new();
        for (i, cfg) in tests.iter().enumerate() {
            let truth = target.evaluate_noise_free(cfg).unwrap()["latency"];
            // conditional predictor reads target-measured events
            let measured = target.evaluate(cfg, 5000 + i as u64).unwrap();
            let cond_pred = cond.predict(&env.space, cfg, &measured.events);
            let q = InterventionQuery {
                assignments: cfg.values.clone().into_iter().collect::<BTreeMap<_, _>>(),
                target: "latency".into(),
            };
            let do_pred = match estimate_do(&source, &graph, &q) {
                Ok((m, _)) => m,
                Err(e) => {
                    println!("estimate_do failed: {e}");
                    return;
                }
            };
            do_errs.push(((do_pred - truth) / truth).abs());
            cond_errs.push(((cond_pred - truth) / truth).abs());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (d, c) = (mean(&do_errs), mean(&cond_errs));
        let impr = (c - d) / c * 100.0;
        println!("seed {seed}: do {:.4} cond {:.4} improvement {:.1}%", d, c, impr);
        improvements.push(impr);
    }
    improvements.sort_by(|a, b| a.total_cmp(b));
    println!("median improvement {:.1}% (need >= 25), total time {:?}", improvements[4], t_all.elapsed());
}
