use cameo_sim::{build_env, generate_shift, shift_env, Severity, ShiftSpec};
use std::path::Path;

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
    let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n).sqrt();
    cov / (sa * sb)
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets");
    let env = build_env(&root.join("envs/sandbox.json"), 42).unwrap();
    let shift: ShiftSpec =
        serde_json::from_str(&std::fs::read_to_string(root.join("shifts/sandbox_medium.json")).unwrap()).unwrap();
    let target = shift_env(&env, &shift).unwrap();

    for (label, e) in [("source", &env), ("target", &target)] {
        let data = e.observe(2000, 1, 7).unwrap();
        let ipc: Vec<f64> = data.records.iter().map(|r| r.events["ipc"]).collect();
        let lat: Vec<f64> = data.records.iter().map(|r| r.objectives["latency"]).collect();
        println!("{label}: corr(ipc, latency) = {:.3}", corr(&ipc, &lat));
        let (cfg, y) = e.ground_truth("latency", 11).unwrap();
        println!("{label}: optimum y = {:.4} at {:?}", y, cfg.canonical_key());
    }
    // do-effect sign of swappiness on latency in both envs
    use cameo_core::space::{Configuration, Value};
    for (label, e) in [("source", &env), ("target", &target)] {
        let mut diffs = Vec::new();
        for seed in 0..200u64 {
            let base = e.space.sample_uniform(1, seed).remove(0);
            let mut low = base.clone();
            low.set("swappiness", Value::Int(0));
            let mut high = base.clone();
            high.set("swappiness", Value::Int(100));
            let yl = e.evaluate(&low, seed).unwrap().objectives["latency"];
            let yh = e.evaluate(&high, seed).unwrap().objectives["latency"];
            diffs.push(yh - yl);
        }
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        println!("{label}: mean do(swappiness 0→100) latency delta = {mean:.3}");
        let _ = Configuration::new();
    }
    // KL ordering over generated severities
    for sev in [Severity::Low, Severity::Medium, Severity::High] {
        let mut kls = Vec::new();
        for seed in 0..10u64 {
            let spec = generate_shift(&env, sev, seed);
            let t = shift_env(&env, &spec).unwrap();
            let probe = env.space.sample_uniform(2000, 99);
            let mut s_samples = Vec::new();
            let mut t_samples = Vec::new();
            for (i, cfg) in probe.iter().enumerate() {
                s_samples.push(env.evaluate(cfg, i as u64).unwrap().objectives["latency"]);
                t_samples.push(t.evaluate(cfg, i as u64).unwrap().objectives["latency"]);
            }
            kls.push(cameo_sim::kl_divergence(&s_samples, &t_samples, 50));
        }
        kls.sort_by(|a, b| a.total_cmp(b));
        println!("{sev:?}: KL median {:.4} (min {:.4} max {:.4})", kls[4], kls[0], kls[9]);
    }
}
