//! Interventional estimation and source-model refinement.
//!
//! Do-queries are answered by backdoor adjustment: a Gaussian-kernel local
//! average of the objective on (intervened options, adjustment set), averaged
//! over the empirical adjustment-set distribution. Options are ranked by
//! average causal effect, the top group is selected by the largest relative
//! gap, and the source model is pruned to the Markov blanket of that group.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::data::Dataset;
use crate::graph::{GraphError, MixedGraph, NodeRole};
use crate::space::Value;
use crate::stats;

#[derive(Debug, Error)]
pub enum EffectsError {
    #[error("effect of `{option}` is not identifiable: {reason}")]
    NonIdentifiable { option: String, reason: String },
    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("`{0}` is not an objective of the space")]
    NotAnObjective(String),
    #[error("`{0}` is not an option of the space")]
    NotAnOption(String),
    #[error("graph error: {0}")]
    Graph(#[from] GraphError),
    #[error("ace table needs at least 2 scored options, got {0}")]
    TooFewScored(usize),
}

/// A do-query: force the listed options and read off one objective.
#[derive(Debug, Clone)]
pub struct InterventionQuery {
    pub assignments: BTreeMap<String, Value>,
    pub target: String,
}

/// Result of looking for a backdoor adjustment set.
#[derive(Debug, Clone, PartialEq)]
pub enum Identifiability {
    /// The parent set of the intervened node blocks every backdoor path.
    Adjustment(BTreeSet<usize>),
    NonIdentifiable(String),
}

/// Adjustment set for the effect of x on y: the observed parents of x when
/// they satisfy the backdoor criterion and no bidirected edge touches x.
pub fn adjustment_set(graph: &MixedGraph, x: usize, y: usize) -> Identifiability {
    if !graph.spouses_bidirected(x).is_empty() {
        return Identifiability::NonIdentifiable(format!(
            "bidirected edge incident to `{}`",
            graph.node_name(x)
        ));
    }
    let parents: BTreeSet<usize> = graph.parents(x).into_iter().collect();
    // Backdoor check: with x's outgoing edges cut, Pa(x) must m-separate x
    // from y.
    let mut cut = graph.clone();
    for c in graph.children(x) {
        cut.remove_edge(x, c);
    }
    let xs = BTreeSet::from([x]);
    let ys = BTreeSet::from([y]);
    if cut.m_separated(&xs, &ys, &parents) {
        Identifiability::Adjustment(parents)
    } else {
        Identifiability::NonIdentifiable(format!(
            "backdoor paths from `{}` not blocked by its parents",
            graph.node_name(x)
        ))
    }
}

/// Per-record normalized coordinate of one graph variable: options use their
/// domain embedding, events and objectives are min-max scaled over the
/// dataset.
fn normalized_column(dataset: &Dataset, name: &str) -> Option<Vec<f64>> {
    let records = dataset.feasible_records();
    if dataset.space.option(name).is_some() {
        return Some(
            records
                .iter()
                .map(|r| {
                    r.config
                        .values
                        .get(name)
                        .and_then(|v| dataset.space.numeric_embedding(name, v))
                        .unwrap_or(0.5)
                })
                .collect(),
        );
    }
    let raw: Vec<f64> = if dataset.space.events.iter().any(|e| e == name) {
        records.iter().map(|r| r.events.get(name).copied().unwrap_or(f64::NAN)).collect()
    } else if dataset.space.objectives.iter().any(|o| o == name) {
        records.iter().map(|r| r.objectives.get(name).copied().unwrap_or(f64::NAN)).collect()
    } else {
        return None;
    };
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        Some(raw.iter().map(|v| (v - lo) / (hi - lo)).collect())
    } else {
        Some(vec![0.5; raw.len()])
    }
}

// Cap on the adjustment-distribution averaging loop; a deterministic stride
// subsample keeps large source datasets cheap without changing results
// meaningfully.
const ADJUSTMENT_SAMPLE_CAP: usize = 200;

/// Ê[Y | do(assignments)] with its interventional variance.
///
/// Identifiability of every assigned option is required. The estimate is a
/// Nadaraya-Watson regression of Y on (X, Z) evaluated at the forced X,
/// averaged over the empirical Z distribution; the variance combines the
/// kernel-weighted conditional variance with the spread of the conditional
/// means (floored at 1e-9).
pub fn estimate_do(
    dataset: &Dataset,
    graph: &MixedGraph,
    query: &InterventionQuery,
) -> Result<(f64, f64), EffectsError> {
    let records = dataset.feasible_records();
    if records.len() < 10 {
        return Err(EffectsError::TooFewRecords { needed: 10, got: records.len() });
    }
    let target_idx = graph
        .node_index(&query.target)
        .ok_or_else(|| EffectsError::UnknownNode(query.target.clone()))?;

    // Adjustment set: union of parents of the assigned options, minus the
    // assigned options themselves.
    let mut z_names: BTreeSet<String> = BTreeSet::new();
    for name in query.assignments.keys() {
        let x_idx = graph.node_index(name).ok_or_else(|| EffectsError::UnknownNode(name.clone()))?;
        match adjustment_set(graph, x_idx, target_idx) {
            Identifiability::Adjustment(parents) => {
                for p in parents {
                    z_names.insert(graph.node_name(p).to_string());
                }
            }
            Identifiability::NonIdentifiable(reason) => {
                return Err(EffectsError::NonIdentifiable { option: name.clone(), reason });
            }
        }
    }
    for name in query.assignments.keys() {
        z_names.remove(name);
    }

    let y: Vec<f64> = records
        .iter()
        .map(|r| r.objectives.get(&query.target).copied().unwrap_or(f64::NAN))
        .collect();

    // X coordinates: per assigned option, the column plus the forced value.
    let mut x_cols: Vec<(Vec<f64>, f64, f64)> = Vec::new(); // (column, target coord, bandwidth)
    for (name, value) in &query.assignments {
        let col = normalized_column(dataset, name)
            .ok_or_else(|| EffectsError::UnknownNode(name.clone()))?;
        let coord = dataset
            .space
            .numeric_embedding(name, value)
            .ok_or_else(|| EffectsError::NotAnOption(name.clone()))?;
        let h = stats::silverman_bandwidth(&col);
        x_cols.push((col, coord, h));
    }
    // Z coordinates (no forced value; the outer loop sweeps them).
    let mut z_cols: Vec<(Vec<f64>, f64)> = Vec::new();
    for name in &z_names {
        if let Some(col) = normalized_column(dataset, name) {
            let h = stats::silverman_bandwidth(&col);
            z_cols.push((col, h));
        }
    }

    let n = records.len();
    let outer: Vec<usize> = if z_cols.is_empty() {
        vec![0] // single evaluation, no adjustment averaging
    } else {
        let stride = n.div_ceil(ADJUSTMENT_SAMPLE_CAP);
        (0..n).step_by(stride.max(1)).collect()
    };

    // Local-linear fit at each query: weighted least squares of y on the
    // centered coordinates. Unlike a plain kernel average this is exact for
    // linear responses, so domain boundaries carry no smoothing bias.
    let dims = x_cols.len() + z_cols.len();
    let k = dims + 1;
    let mut means = Vec::with_capacity(outer.len());
    let mut within_vars = Vec::with_capacity(outer.len());
    let mut delta = vec![0.0; dims];
    for &i in &outer {
        let mut wsum = 0.0;
        let mut xtwx = vec![0.0; k * k];
        let mut xtwy = vec![0.0; k];
        let mut ysum = 0.0;
        let mut y2sum = 0.0;
        for j in 0..n {
            let mut d2 = 0.0;
            for (d, (col, coord, h)) in x_cols.iter().enumerate() {
                delta[d] = col[j] - coord;
                let s = delta[d] / h;
                d2 += s * s;
            }
            for (d, (col, h)) in z_cols.iter().enumerate() {
                let idx = x_cols.len() + d;
                delta[idx] = col[j] - col[i];
                let s = delta[idx] / h;
                d2 += s * s;
            }
            let w = (-0.5 * d2).exp();
            if w < 1e-15 {
                continue;
            }
            wsum += w;
            ysum += w * y[j];
            y2sum += w * y[j] * y[j];
            // design row: [1, delta...]
            xtwx[0] += w;
            xtwy[0] += w * y[j];
            for a in 0..dims {
                xtwx[a + 1] += w * delta[a];
                xtwx[(a + 1) * k] += w * delta[a];
                xtwy[a + 1] += w * delta[a] * y[j];
                for b in 0..dims {
                    xtwx[(a + 1) * k + (b + 1)] += w * delta[a] * delta[b];
                }
            }
        }
        if wsum < 1e-12 {
            continue;
        }
        for d in 0..k {
            xtwx[d * k + d] += 1e-9;
        }
        let m = match stats::cholesky(&xtwx, k) {
            Some(l) => stats::cholesky_solve(&l, k, &xtwy)[0],
            None => ysum / wsum,
        };
        means.push(m);
        within_vars.push((y2sum / wsum - (ysum / wsum) * (ysum / wsum)).max(0.0));
    }

    if means.is_empty() {
        // Widest-uncertainty fallback.
        return Ok((stats::mean(&y), stats::variance(&y).max(1e-9)));
    }
    let mean = stats::mean(&means);
    let between = if means.len() > 1 {
        means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / means.len() as f64
    } else {
        0.0
    };
    let variance = (stats::mean(&within_vars) + between).max(1e-9);
    Ok((mean, variance))
}

/// Average causal effect of one option on the target: the mean absolute
/// difference of Ê[Y | do(option = x)] between successive grid values.
pub fn ace(
    dataset: &Dataset,
    graph: &MixedGraph,
    option: &str,
    target: &str,
    grid_size: usize,
) -> Result<f64, EffectsError> {
    let domain = dataset
        .space
        .option(option)
        .ok_or_else(|| EffectsError::NotAnOption(option.to_string()))?;
    let grid = domain.grid(grid_size);
    let mut estimates = Vec::with_capacity(grid.len());
    for v in grid {
        let query = InterventionQuery {
            assignments: BTreeMap::from([(option.to_string(), v)]),
            target: target.to_string(),
        };
        estimates.push(estimate_do(dataset, graph, &query)?.0);
    }
    let m = estimates.len();
    let total: f64 = estimates.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(total / (m - 1) as f64)
}

/// Options ranked by ACE, descending; ties by name. Non-identifiable options
/// score zero.
#[derive(Debug, Clone, Serialize)]
pub struct AceTable {
    pub scores: Vec<(String, f64)>,
    pub grid_size: usize,
}

impl AceTable {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            option: &'a str,
            ace: f64,
        }
        let rows: Vec<Row> =
            self.scores.iter().map(|(o, a)| Row { option: o, ace: *a }).collect();
        serde_json::to_string_pretty(&rows).expect("ace table serializes")
    }
}

/// Score every option node of the graph against the target objective.
pub fn build_ace_table(
    dataset: &Dataset,
    graph: &MixedGraph,
    target: &str,
    grid_size: usize,
) -> Result<AceTable, EffectsError> {
    if graph.node_index(target).is_none() {
        return Err(EffectsError::UnknownNode(target.to_string()));
    }
    let mut scores: Vec<(String, f64)> = Vec::new();
    for node in &graph.nodes {
        if node.role != NodeRole::Option || dataset.space.option(&node.name).is_none() {
            continue;
        }
        let value = match ace(dataset, graph, &node.name, target, grid_size) {
            Ok(v) => v,
            Err(EffectsError::NonIdentifiable { .. }) => 0.0,
            Err(e) => return Err(e),
        };
        scores.push((node.name.clone(), value));
    }
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(AceTable { scores, grid_size })
}

/// Choose k by the largest relative gap in the descending score list,
/// capped at min(10, #options); equal scores fall back to the cap.
pub fn select_top_k(table: &AceTable) -> Result<(usize, Vec<String>), EffectsError> {
    let n = table.scores.len();
    if n < 2 {
        return Err(EffectsError::TooFewScored(n));
    }
    let cap = n.min(10);
    let mut best_drop = 0.0;
    let mut best_k = cap;
    for i in 0..cap.min(n - 1) {
        let s = table.scores[i].1;
        let next = table.scores[i + 1].1;
        let drop = if s > 0.0 { (s - next) / s } else { 0.0 };
        if drop > best_drop {
            best_drop = drop;
            best_k = i + 1;
        }
    }
    let k = best_k.clamp(1, cap);
    let names = table.scores.iter().take(k).map(|(n, _)| n.clone()).collect();
    Ok((k, names))
}

/// Markov blanket of a target set: grow from the local blankets
/// (parents, children, co-parents, bidirected partners), repair by adding
/// any node still m-connected to the targets, then shrink by removing nodes
/// that are m-separated from every target given the rest. Targets are
/// included in the output.
pub fn markov_blanket_multi(graph: &MixedGraph, targets: &BTreeSet<usize>) -> BTreeSet<usize> {
    let n = graph.node_count();
    let mut blanket: BTreeSet<usize> = BTreeSet::new();
    for &t in targets {
        for p in graph.parents(t) {
            blanket.insert(p);
        }
        for s in graph.spouses_bidirected(t) {
            blanket.insert(s);
        }
        for c in graph.children(t) {
            blanket.insert(c);
            for cp in graph.parents(c) {
                blanket.insert(cp);
            }
        }
    }
    for t in targets {
        blanket.remove(t);
    }

    for _round in 0..2 * n + 2 {
        let mut changed = false;
        // Repair: pull in outside nodes still m-connected given the blanket.
        for v in 0..n {
            if targets.contains(&v) || blanket.contains(&v) {
                continue;
            }
            if !graph.m_separated(targets, &BTreeSet::from([v]), &blanket) {
                blanket.insert(v);
                changed = true;
            }
        }
        // Shrink: drop nodes the remaining set already separates.
        let members: Vec<usize> = blanket.iter().copied().collect();
        for v in members {
            let mut rest = blanket.clone();
            rest.remove(&v);
            if graph.m_separated(targets, &BTreeSet::from([v]), &rest) {
                blanket.remove(&v);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    blanket.union(targets).copied().collect()
}

/// Refine a source model: rank options by ACE, select the top group, and
/// keep only the induced subgraph on the Markov blanket of that group plus
/// the objective.
pub fn refine_model(
    source_graph: &MixedGraph,
    dataset: &Dataset,
    target_objective: &str,
) -> Result<MixedGraph, EffectsError> {
    Ok(refine_model_detailed(source_graph, dataset, target_objective, 10)?.graph)
}

/// Refinement with the intermediate products exposed.
pub struct RefinedModel {
    pub graph: MixedGraph,
    pub ace: AceTable,
    pub k: usize,
    pub top: Vec<String>,
}

pub fn refine_model_detailed(
    source_graph: &MixedGraph,
    dataset: &Dataset,
    target_objective: &str,
    grid_size: usize,
) -> Result<RefinedModel, EffectsError> {
    let objective_idx = source_graph
        .node_index(target_objective)
        .ok_or_else(|| EffectsError::UnknownNode(target_objective.to_string()))?;
    let ace = build_ace_table(dataset, source_graph, target_objective, grid_size)?;
    let (k, top) = select_top_k(&ace)?;
    let mut targets: BTreeSet<usize> = BTreeSet::from([objective_idx]);
    for name in &top {
        if let Some(i) = source_graph.node_index(name) {
            targets.insert(i);
        }
    }
    let blanket = markov_blanket_multi(source_graph, &targets);
    let keep: BTreeSet<String> =
        blanket.iter().map(|&i| source_graph.node_name(i).to_string()).collect();
    Ok(RefinedModel { graph: source_graph.induced_subgraph(&keep), ace, k, top })
}

/// Helper shared with the surrogate layer: is the effect of this option on
/// the objective identifiable in the graph?
pub fn option_identifiable(graph: &MixedGraph, option: &str, objective: &str) -> bool {
    match (graph.node_index(option), graph.node_index(objective)) {
        (Some(x), Some(y)) => matches!(adjustment_set(graph, x, y), Identifiability::Adjustment(_)),
        _ => false,
    }
}
