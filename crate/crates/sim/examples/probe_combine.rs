use cameo_core::graph::{hamming_distance, Mark, MixedGraph};
use cameo_core::optimizer::{self, Direction, Query, RunOptions};
use cameo_sim::env::MedianRepeatEvaluator;
use cameo_sim::{build_env, shift_env, ShiftSpec};
use std::path::Path;

fn union_first(primary: &MixedGraph, secondary: &MixedGraph) -> MixedGraph {
    let mut out = primary.clone();
    for (a, b, ma, mb) in secondary.edges() {
        let na = secondary.node_name(a);
        let nb = secondary.node_name(b);
        if let (Some(ia), Some(ib)) = (out.node_index(na), out.node_index(nb)) {
            if !out.has_edge(ia, ib) {
                out.set_edge(ia, ib, ma, mb);
            }
        }
    }
    out
}

/// Source-first, but target absence vetoes source edges whose pair was
/// informed by interventions (any option endpoint).
fn veto_combine(source: &MixedGraph, target: &MixedGraph) -> MixedGraph {
    use cameo_core::graph::NodeRole;
    let mut out = union_first(source, target);
    let pairs: Vec<(usize, usize)> = out.edges().map(|(a, b, _, _)| (a, b)).collect();
    for (a, b) in pairs {
        let in_source = {
            let (sa, sb) = (source.node_index(out.node_name(a)), source.node_index(out.node_name(b)));
            match (sa, sb) { (Some(x), Some(y)) => source.has_edge(x, y), _ => false }
        };
        let in_target = {
            let (ta, tb) = (target.node_index(out.node_name(a)), target.node_index(out.node_name(b)));
            match (ta, tb) { (Some(x), Some(y)) => target.has_edge(x, y), _ => false }
        };
        let involves_option = out.nodes[a].role == NodeRole::Option || out.nodes[b].role == NodeRole::Option;
        if in_source && !in_target && involves_option {
            out.remove_edge(a, b);
        }
    }
    out
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets");
    let env = build_env(&root.join("envs/perf_stack.json"), 42).unwrap();
    let shift: ShiftSpec = serde_json::from_str(
        &std::fs::read_to_string(root.join("shifts/perf_stack_medium.json")).unwrap(),
    )
    .unwrap();
    let target_env = shift_env(&env, &shift).unwrap();
    let gt = target_env.ground_truth_graph();
    let source = env.observe(2000, 5, 1).unwrap();
    let eval5 = MedianRepeatEvaluator::new(&target_env, 5);
    let query = Query {
        objective: "latency".into(),
        direction: Direction::Minimize,
        budget_iterations: Some(200),
        budget_seconds: None,
        constraints: vec![],
    };
    for seed in 0..3u64 {
        let options = RunOptions { seed, convergence_window: 0, ..RunOptions::default() };
        let res = optimizer::run(query.clone(), &source, &eval5, options).unwrap();
        let tgt_graph = res.target_graph.aligned_to(&gt.nodes).unwrap();
        let src_graph = res
            .source_graph_refined
            .as_ref()
            .unwrap()
            .aligned_to(&gt.nodes)
            .unwrap();
        let d_t = hamming_distance(&tgt_graph, &gt).unwrap();
        let d_s = hamming_distance(&src_graph, &gt).unwrap();
        let a = hamming_distance(&union_first(&tgt_graph, &src_graph), &gt).unwrap();
        let b = hamming_distance(&union_first(&src_graph, &tgt_graph), &gt).unwrap();
        let c = hamming_distance(&veto_combine(&src_graph, &tgt_graph), &gt).unwrap();
        println!("seed {seed}: target {d_t} source {d_s} | target-first {a} source-first {b} veto {c}");
        let _ = Mark::Tail;
    }
}
