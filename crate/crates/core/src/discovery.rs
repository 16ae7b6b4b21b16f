//! Constraint-based structure learning: conditional-independence tests,
//! skeleton search, endpoint orientation, and resolution of the remaining
//! undetermined endpoints into a directed/bidirected graph.
//!
//! The pipeline is deterministic: variables keep schema order, conditioning
//! sets are enumerated lexicographically, and edge removals are applied as a
//! batch per depth level so results do not depend on processing order within
//! a level.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::data::Dataset;
use crate::graph::{Mark, MixedGraph, Node, NodeRole, Stage};
use crate::space::{DomainKind, Value};
use crate::stats;

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("alpha must be in (0,1), got {0}")]
    BadAlpha(f64),
    #[error("need more than |Z| + 3 = {needed} samples for the continuous test, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("need at least 2 variables, got {0}")]
    TooFewVariables(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unknown variable index {0}")]
    UnknownVariable(usize),
}

/// Column values for one variable entering the independence tests.
#[derive(Debug, Clone)]
pub enum ColumnValues {
    Continuous(Vec<f64>),
    /// Level codes 0..level_count.
    Discrete { codes: Vec<u32>, level_count: usize },
}

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub role: NodeRole,
    pub values: ColumnValues,
}

impl Column {
    pub fn len(&self) -> usize {
        match &self.values {
            ColumnValues::Continuous(v) => v.len(),
            ColumnValues::Discrete { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_constant(&self) -> bool {
        match &self.values {
            ColumnValues::Continuous(v) => {
                v.windows(2).all(|w| w[0] == w[1])
            }
            ColumnValues::Discrete { codes, .. } => codes.windows(2).all(|w| w[0] == w[1]),
        }
    }
}

/// All variables of a dataset laid out for testing, in schema order:
/// options, then events, then objectives.
#[derive(Debug, Clone)]
pub struct DataColumns {
    pub columns: Vec<Column>,
}

impl DataColumns {
    /// Extract columns from a dataset. Penalized records are skipped since
    /// their objective sentinel is not a measurement. Boolean and categorical
    /// options become discrete columns, everything else is continuous.
    pub fn from_dataset(dataset: &Dataset) -> Result<DataColumns, DiscoveryError> {
        let records = dataset.feasible_records();
        if records.is_empty() {
            return Err(DiscoveryError::EmptyDataset);
        }
        let mut columns = Vec::new();
        for opt in &dataset.space.options {
            let values = match &opt.kind {
                DomainKind::Real { .. } | DomainKind::Integer { .. } => ColumnValues::Continuous(
                    records
                        .iter()
                        .map(|r| match r.config.values.get(&opt.name) {
                            Some(Value::Real(v)) => *v,
                            Some(Value::Int(v)) => *v as f64,
                            _ => f64::NAN,
                        })
                        .collect(),
                ),
                DomainKind::Boolean => ColumnValues::Discrete {
                    codes: records
                        .iter()
                        .map(|r| match r.config.values.get(&opt.name) {
                            Some(Value::Bool(b)) => *b as u32,
                            _ => 0,
                        })
                        .collect(),
                    level_count: 2,
                },
                DomainKind::Categorical { levels } => ColumnValues::Discrete {
                    codes: records
                        .iter()
                        .map(|r| match r.config.values.get(&opt.name) {
                            Some(Value::Level(l)) => {
                                levels.iter().position(|x| x == l).unwrap_or(0) as u32
                            }
                            _ => 0,
                        })
                        .collect(),
                    level_count: levels.len(),
                },
            };
            columns.push(Column { name: opt.name.clone(), role: NodeRole::Option, values });
        }
        for name in &dataset.space.events {
            columns.push(Column {
                name: name.clone(),
                role: NodeRole::Event,
                values: ColumnValues::Continuous(
                    records.iter().map(|r| r.events.get(name).copied().unwrap_or(f64::NAN)).collect(),
                ),
            });
        }
        for name in &dataset.space.objectives {
            columns.push(Column {
                name: name.clone(),
                role: NodeRole::Objective,
                values: ColumnValues::Continuous(
                    records
                        .iter()
                        .map(|r| r.objectives.get(name).copied().unwrap_or(f64::NAN))
                        .collect(),
                ),
            });
        }
        Ok(DataColumns { columns })
    }

    pub fn var_count(&self) -> usize {
        self.columns.len()
    }

    pub fn sample_count(&self) -> usize {
        self.columns.first().map(|c| c.len()).unwrap_or(0)
    }

    pub fn nodes(&self) -> Vec<Node> {
        self.columns.iter().map(|c| Node { name: c.name.clone(), role: c.role }).collect()
    }

    /// Discretized codes for a column: discrete columns keep their levels,
    /// continuous ones are quantile-binned into ⌈n^(1/3)⌉ (≤ 8) bins.
    fn binned(&self, i: usize) -> (Vec<u32>, usize) {
        match &self.columns[i].values {
            ColumnValues::Discrete { codes, level_count } => (codes.clone(), *level_count),
            ColumnValues::Continuous(v) => {
                let k = stats::bin_count(v.len());
                let codes = stats::quantile_bins(v, k);
                let levels = codes.iter().copied().max().map(|m| m as usize + 1).unwrap_or(1);
                (codes, levels)
            }
        }
    }
}

/// Outcome of one conditional-independence test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiResult {
    pub independent: bool,
    pub statistic: f64,
    pub pvalue: f64,
    /// Set when the decision was forced (constant column, untestable table).
    pub degenerate: bool,
}

/// Test x ⟂ y | Z at significance `alpha`.
///
/// All-continuous triples use Fisher's z on the partial correlation; if any
/// variable is discrete, a conditional G-test on contingency tables runs
/// instead, with continuous variables quantile-binned.
pub fn ci_test(
    data: &DataColumns,
    x: usize,
    y: usize,
    z: &[usize],
    alpha: f64,
) -> Result<CiResult, DiscoveryError> {
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(DiscoveryError::BadAlpha(alpha));
    }
    for &i in [x, y].iter().chain(z) {
        if i >= data.var_count() {
            return Err(DiscoveryError::UnknownVariable(i));
        }
    }
    if data.columns[x].is_constant() || data.columns[y].is_constant() {
        return Ok(CiResult { independent: true, statistic: 0.0, pvalue: 1.0, degenerate: true });
    }

    let all_continuous = [x, y]
        .iter()
        .chain(z)
        .all(|&i| matches!(data.columns[i].values, ColumnValues::Continuous(_)));

    if all_continuous {
        fisher_z_test(data, x, y, z, alpha)
    } else {
        g_test(data, x, y, z, alpha)
    }
}

fn fisher_z_test(
    data: &DataColumns,
    x: usize,
    y: usize,
    z: &[usize],
    alpha: f64,
) -> Result<CiResult, DiscoveryError> {
    let n = data.sample_count();
    if n <= z.len() + 3 {
        return Err(DiscoveryError::InsufficientSamples { needed: z.len() + 4, got: n });
    }
    let cols: Vec<&[f64]> = [x, y]
        .iter()
        .chain(z)
        .map(|&i| match &data.columns[i].values {
            ColumnValues::Continuous(v) => v.as_slice(),
            ColumnValues::Discrete { .. } => unreachable!("continuous branch"),
        })
        .collect();
    let k = cols.len();
    let corr = stats::correlation_matrix(&cols);
    let r = if k == 2 {
        corr[1]
    } else {
        let mut inv = stats::invert(&corr, k);
        if inv.is_none() {
            // Collinear conditioning set: retry with a small ridge.
            let mut ridged = corr.clone();
            for i in 0..k {
                ridged[i * k + i] += 1e-8;
            }
            inv = stats::invert(&ridged, k);
        }
        match inv {
            Some(p) => -p[1] / (p[0] * p[k + 1]).sqrt(),
            None => {
                return Ok(CiResult {
                    independent: true,
                    statistic: 0.0,
                    pvalue: 1.0,
                    degenerate: true,
                })
            }
        }
    };
    let statistic = stats::fisher_z(r, n, z.len());
    let pvalue = stats::normal_two_sided_p(statistic);
    Ok(CiResult { independent: pvalue > alpha, statistic, pvalue, degenerate: false })
}

fn g_test(
    data: &DataColumns,
    x: usize,
    y: usize,
    z: &[usize],
    alpha: f64,
) -> Result<CiResult, DiscoveryError> {
    let (x_codes, x_levels) = data.binned(x);
    let (y_codes, y_levels) = data.binned(y);
    let z_binned: Vec<(Vec<u32>, usize)> = z.iter().map(|&i| data.binned(i)).collect();
    let n = x_codes.len();

    // Stratify by the joint Z cell.
    let mut strata: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for t in 0..n {
        let mut key = 0u64;
        for (codes, levels) in &z_binned {
            key = key * (*levels as u64) + codes[t] as u64;
        }
        strata.entry(key).or_default().push(t);
    }

    let mut g = 0.0;
    let mut df = 0usize;
    for rows in strata.values() {
        let ns = rows.len() as f64;
        let mut table = vec![0.0f64; x_levels * y_levels];
        for &t in rows {
            table[x_codes[t] as usize * y_levels + y_codes[t] as usize] += 1.0;
        }
        let row_sums: Vec<f64> =
            (0..x_levels).map(|i| (0..y_levels).map(|j| table[i * y_levels + j]).sum()).collect();
        let col_sums: Vec<f64> =
            (0..y_levels).map(|j| (0..x_levels).map(|i| table[i * y_levels + j]).sum()).collect();
        let r_nonzero = row_sums.iter().filter(|&&v| v > 0.0).count();
        let c_nonzero = col_sums.iter().filter(|&&v| v > 0.0).count();
        if r_nonzero < 2 || c_nonzero < 2 {
            continue;
        }
        for i in 0..x_levels {
            for j in 0..y_levels {
                let obs = table[i * y_levels + j];
                if obs > 0.0 {
                    let expected = row_sums[i] * col_sums[j] / ns;
                    g += 2.0 * obs * (obs / expected).ln();
                }
            }
        }
        df += (r_nonzero - 1) * (c_nonzero - 1);
    }

    if df == 0 {
        return Ok(CiResult { independent: true, statistic: 0.0, pvalue: 1.0, degenerate: true });
    }
    let pvalue = stats::chi2_sf(g, df as f64);
    Ok(CiResult { independent: pvalue > alpha, statistic: g, pvalue, degenerate: false })
}

/// Separating set recorded for a removed skeleton edge.
#[derive(Debug, Clone)]
pub struct SepSetEntry {
    pub set: BTreeSet<usize>,
    pub pvalue: f64,
}

/// Map from unordered variable pair to the conditioning set that rendered
/// the pair independent.
#[derive(Debug, Clone, Default)]
pub struct SepSetTable {
    entries: BTreeMap<(usize, usize), SepSetEntry>,
}

impl SepSetTable {
    pub fn get(&self, a: usize, b: usize) -> Option<&SepSetEntry> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.entries.get(&key)
    }

    fn insert(&mut self, a: usize, b: usize, entry: SepSetEntry) {
        let key = if a < b { (a, b) } else { (b, a) };
        self.entries.insert(key, entry);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &SepSetEntry)> {
        self.entries.iter()
    }
}

/// k-subsets of `pool` in lexicographic order.
fn subsets_of_size(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > pool.len() {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| pool[i]).collect());
        // advance combination
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + pool.len() - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// PC-style edge removal with conditioning sets of growing size drawn from
/// current adjacencies. `max_depth` of −1 means unlimited.
pub fn fci_skeleton(
    data: &DataColumns,
    alpha: f64,
    max_depth: i32,
) -> Result<(MixedGraph, SepSetTable), DiscoveryError> {
    let p = data.var_count();
    if p < 2 {
        return Err(DiscoveryError::TooFewVariables(p));
    }
    let mut graph = MixedGraph::new(data.nodes(), Stage::Skeleton);
    for a in 0..p {
        for b in (a + 1)..p {
            graph.set_edge(a, b, Mark::Circle, Mark::Circle);
        }
    }
    let mut sepsets = SepSetTable::default();

    let mut depth: usize = 0;
    loop {
        if max_depth >= 0 && depth > max_depth as usize {
            break;
        }
        // Adjacency snapshot so removals apply as a batch per level.
        let adj: Vec<Vec<usize>> = (0..p).map(|i| graph.adjacent(i)).collect();
        let any_candidate = (0..p).any(|i| adj[i].len() > depth);
        if !any_candidate && depth > 0 {
            break;
        }

        let mut removals: Vec<(usize, usize, SepSetEntry)> = Vec::new();
        for a in 0..p {
            for b in (a + 1)..p {
                if !graph.has_edge(a, b) {
                    continue;
                }
                let mut candidates: BTreeSet<Vec<usize>> = BTreeSet::new();
                let pool_a: Vec<usize> = adj[a].iter().copied().filter(|&v| v != b).collect();
                let pool_b: Vec<usize> = adj[b].iter().copied().filter(|&v| v != a).collect();
                for s in subsets_of_size(&pool_a, depth) {
                    candidates.insert(s);
                }
                for s in subsets_of_size(&pool_b, depth) {
                    candidates.insert(s);
                }
                for set in candidates {
                    // A conditioning set too large for the sample size cannot
                    // be tested; the edge stays for this candidate.
                    let res = match ci_test(data, a, b, &set, alpha) {
                        Ok(res) => res,
                        Err(DiscoveryError::InsufficientSamples { .. }) => continue,
                        Err(e) => return Err(e),
                    };
                    if res.independent {
                        removals.push((
                            a,
                            b,
                            SepSetEntry { set: set.into_iter().collect(), pvalue: res.pvalue },
                        ));
                        break;
                    }
                }
            }
        }
        if removals.is_empty() && !any_candidate {
            break;
        }
        for (a, b, entry) in removals {
            graph.remove_edge(a, b);
            sepsets.insert(a, b, entry);
        }
        depth += 1;
        if depth >= p {
            break;
        }
    }
    Ok((graph, sepsets))
}

fn mark_at(graph: &MixedGraph, at: usize, other: usize) -> Option<Mark> {
    graph.edge(at, other).map(|(m, _)| m)
}

/// Whether an arrowhead may be placed at this endpoint. Options are
/// exogenous knobs, so nothing in the system points into them; this is the
/// usual background-knowledge restriction for configurable-system data, and
/// without it a single statistically unlucky separating set can spawn a
/// false collider into an option and destroy its identifiability.
fn arrow_allowed(g: &MixedGraph, at: usize) -> bool {
    g.nodes[at].role != NodeRole::Option
}

/// Collider orientation followed by orientation rules R1-R4 applied to a
/// fixpoint. Edges are never added or removed, only endpoint marks change.
pub fn fci_orient(skeleton: &MixedGraph, sepsets: &SepSetTable) -> MixedGraph {
    let mut g = skeleton.clone();
    g.stage = Stage::Pag;
    let p = g.node_count();

    // Unshielded colliders: a *→ c ←* b whenever c is not in sepset(a, b).
    for c in 0..p {
        if !arrow_allowed(&g, c) {
            continue;
        }
        let neighbors = g.adjacent(c);
        for i in 0..neighbors.len() {
            for j in (i + 1)..neighbors.len() {
                let (a, b) = (neighbors[i], neighbors[j]);
                if g.has_edge(a, b) {
                    continue;
                }
                let in_sepset = sepsets.get(a, b).map(|e| e.set.contains(&c)).unwrap_or(true);
                if !in_sepset {
                    g.set_mark(c, a, Mark::Arrow);
                    g.set_mark(c, b, Mark::Arrow);
                }
            }
        }
    }

    // R1-R4 to fixpoint.
    loop {
        let mut changed = false;
        changed |= rule_r1(&mut g);
        changed |= rule_r2(&mut g);
        changed |= rule_r3(&mut g);
        changed |= rule_r4(&mut g, sepsets);
        if !changed {
            break;
        }
    }
    g
}

/// R1: a *→ b o−* c with a, c non-adjacent orients b → c.
fn rule_r1(g: &mut MixedGraph) -> bool {
    let p = g.node_count();
    let mut changed = false;
    for b in 0..p {
        for a in g.adjacent(b) {
            if mark_at(g, b, a) != Some(Mark::Arrow) {
                continue;
            }
            for c in g.adjacent(b) {
                if c == a || g.has_edge(a, c) {
                    continue;
                }
                if mark_at(g, b, c) == Some(Mark::Circle) && arrow_allowed(g, c) {
                    g.set_edge(b, c, Mark::Tail, Mark::Arrow);
                    changed = true;
                }
            }
        }
    }
    changed
}

/// R2: a → b *→ c or a *→ b → c, with a *−o c, orients the mark at c to an
/// arrowhead.
fn rule_r2(g: &mut MixedGraph) -> bool {
    let p = g.node_count();
    let mut changed = false;
    for a in 0..p {
        for c in g.adjacent(a) {
            if mark_at(g, c, a) != Some(Mark::Circle) {
                continue;
            }
            for b in g.adjacent(a) {
                if b == c || !g.has_edge(b, c) {
                    continue;
                }
                let a_to_b = mark_at(g, a, b) == Some(Mark::Tail)
                    && mark_at(g, b, a) == Some(Mark::Arrow);
                let b_to_c = mark_at(g, b, c) == Some(Mark::Tail)
                    && mark_at(g, c, b) == Some(Mark::Arrow);
                let b_arrow = mark_at(g, b, a) == Some(Mark::Arrow);
                let c_arrow = mark_at(g, c, b) == Some(Mark::Arrow);
                if ((a_to_b && c_arrow) || (b_arrow && b_to_c)) && arrow_allowed(g, c) {
                    g.set_mark(c, a, Mark::Arrow);
                    changed = true;
                    break;
                }
            }
        }
    }
    changed
}

/// R3: a *→ b ←* c, a *−o d o−* c, a and c non-adjacent, d *−o b orients the
/// mark at b on the d-b edge to an arrowhead.
fn rule_r3(g: &mut MixedGraph) -> bool {
    let p = g.node_count();
    let mut changed = false;
    for b in 0..p {
        for d in g.adjacent(b) {
            if mark_at(g, b, d) != Some(Mark::Circle) {
                continue;
            }
            let shared: Vec<usize> =
                g.adjacent(b).into_iter().filter(|&v| v != d && g.has_edge(v, d)).collect();
            let mut fired = false;
            for i in 0..shared.len() {
                for j in 0..shared.len() {
                    if i == j {
                        continue;
                    }
                    let (a, c) = (shared[i], shared[j]);
                    if g.has_edge(a, c) {
                        continue;
                    }
                    let collider = mark_at(g, b, a) == Some(Mark::Arrow)
                        && mark_at(g, b, c) == Some(Mark::Arrow);
                    let d_circles = mark_at(g, d, a) == Some(Mark::Circle)
                        && mark_at(g, d, c) == Some(Mark::Circle);
                    if collider && d_circles && arrow_allowed(g, b) {
                        g.set_mark(b, d, Mark::Arrow);
                        changed = true;
                        fired = true;
                        break;
                    }
                }
                if fired {
                    break;
                }
            }
        }
    }
    changed
}

/// R4 (discriminating path): with a path ⟨d, …, a, b, c⟩ where every vertex
/// between d and b is a collider on the path and a parent of c, d is not
/// adjacent to c, and b o−* c: orient b → c when b lies in sepset(d, c),
/// otherwise orient a ↔ b ↔ c.
fn rule_r4(g: &mut MixedGraph, sepsets: &SepSetTable) -> bool {
    let p = g.node_count();
    let mut changed = false;
    for b in 0..p {
        for c in g.adjacent(b) {
            if mark_at(g, b, c) != Some(Mark::Circle) {
                continue;
            }
            // Candidate last intermediates a: collider-marked toward b and a
            // definite parent of c.
            let candidates: Vec<usize> = g
                .adjacent(b)
                .into_iter()
                .filter(|&a| {
                    a != c
                        && mark_at(g, a, b) == Some(Mark::Arrow)
                        && g.has_edge(a, c)
                        && mark_at(g, a, c) == Some(Mark::Tail)
                        && mark_at(g, c, a) == Some(Mark::Arrow)
                })
                .collect();
            for a in candidates {
                if let Some(d) = find_discriminating_source(g, a, b, c) {
                    let b_in_sepset =
                        sepsets.get(d, c).map(|e| e.set.contains(&b)).unwrap_or(false);
                    if b_in_sepset {
                        if !arrow_allowed(g, c) {
                            continue;
                        }
                        g.set_edge(b, c, Mark::Tail, Mark::Arrow);
                    } else {
                        if !arrow_allowed(g, a) || !arrow_allowed(g, b) || !arrow_allowed(g, c) {
                            continue;
                        }
                        g.set_edge(a, b, Mark::Arrow, Mark::Arrow);
                        g.set_edge(b, c, Mark::Arrow, Mark::Arrow);
                    }
                    changed = true;
                    break;
                }
            }
        }
    }
    changed
}

/// Search backwards from `a` for the start `d` of a discriminating path for b
/// with respect to c. Intermediates must be colliders on the path and parents
/// of c; the source d must not be adjacent to c.
fn find_discriminating_source(g: &MixedGraph, a: usize, b: usize, c: usize) -> Option<usize> {
    let mut visited: BTreeSet<(usize, usize)> = BTreeSet::new(); // (prev, cur)
    let mut stack: Vec<(usize, usize)> = vec![(b, a)];
    while let Some((prev, cur)) = stack.pop() {
        for next in g.adjacent(cur) {
            if next == prev || next == b || next == c {
                continue;
            }
            // The edge next—cur must point into cur (cur stays a collider).
            if mark_at(g, cur, next) != Some(Mark::Arrow) {
                continue;
            }
            if !g.has_edge(next, c) {
                return Some(next);
            }
            // next can only be an intermediate if it is also a collider
            // candidate and a parent of c.
            let next_parent_of_c = mark_at(g, next, c) == Some(Mark::Tail)
                && mark_at(g, c, next) == Some(Mark::Arrow);
            let arrow_into_next = mark_at(g, next, cur) == Some(Mark::Arrow);
            if next_parent_of_c && arrow_into_next && visited.insert((cur, next)) {
                stack.push((cur, next));
            }
        }
    }
    None
}

/// Replace every remaining circle endpoint with a tail or arrowhead.
///
/// Orientation layers, in order:
/// 1. Role order: options are exogenous knobs and objectives terminal
///    readings, so across roles the edge points option → event → objective.
/// 2. Within a role, a marginal-entropy comparison takes the lower-entropy
///    variable as the cause; entropies within 0.1 nats count as tied.
/// 3. Ties prefer an orientation that keeps the directed part acyclic, then
///    the lexicographically smaller source.
///
/// An orientation that would close a cycle is flipped, and an endpoint whose
/// opposite side already carries an arrowhead becomes bidirected when it
/// cannot be a tail.
pub fn resolve_pag(pag: &MixedGraph, data: &DataColumns) -> MixedGraph {
    const ENTROPY_TIE: f64 = 0.1;
    let mut g = pag.clone();
    g.stage = Stage::Admg;

    let entropy: Vec<f64> = (0..g.node_count())
        .map(|i| {
            let col = &data.columns[i];
            match &col.values {
                ColumnValues::Discrete { codes, .. } => stats::entropy_of_labels(codes),
                ColumnValues::Continuous(v) => {
                    let k = stats::bin_count(v.len());
                    stats::entropy_of_labels(&stats::equal_width_bins_robust(v, k))
                }
            }
        })
        .collect();
    let ranks: Vec<u8> = g
        .nodes
        .iter()
        .map(|n| match n.role {
            NodeRole::Option => 0,
            NodeRole::Event => 1,
            NodeRole::Objective => 2,
        })
        .collect();
    let names: Vec<String> = g.nodes.iter().map(|n| n.name.clone()).collect();
    // None means undecided at this layer.
    let prefers_cause = move |a: usize, b: usize| -> Option<bool> {
        if ranks[a] != ranks[b] {
            return Some(ranks[a] < ranks[b]);
        }
        if entropy[a] < entropy[b] - ENTROPY_TIE {
            Some(true)
        } else if entropy[b] < entropy[a] - ENTROPY_TIE {
            Some(false)
        } else {
            None
        }
    };

    let pairs: Vec<(usize, usize, Mark, Mark)> = g.edges().collect();
    for (a, b, ma, mb) in pairs {
        match (ma, mb) {
            (Mark::Circle, Mark::Circle) => {
                let prefer_a_to_b = match prefers_cause(a, b) {
                    Some(p) => p,
                    None => {
                        let a_ok = !g.creates_cycle(a, b);
                        let b_ok = !g.creates_cycle(b, a);
                        match (a_ok, b_ok) {
                            (true, false) => true,
                            (false, true) => false,
                            _ => names[a] <= names[b],
                        }
                    }
                };
                let (from, to) = if prefer_a_to_b { (a, b) } else { (b, a) };
                if !g.creates_cycle(from, to) {
                    g.set_edge(from, to, Mark::Tail, Mark::Arrow);
                } else if !g.creates_cycle(to, from) {
                    g.set_edge(to, from, Mark::Tail, Mark::Arrow);
                } else {
                    g.set_edge(a, b, Mark::Arrow, Mark::Arrow);
                }
            }
            (Mark::Circle, Mark::Arrow) | (Mark::Arrow, Mark::Circle) => {
                let (o, fixed) = if ma == Mark::Circle { (a, b) } else { (b, a) };
                // Tail at o gives o → fixed; arrow gives o ↔ fixed. Options
                // never take the arrowhead.
                let tail_ok = prefers_cause(o, fixed).unwrap_or(true)
                    || g.nodes[o].role == NodeRole::Option;
                if tail_ok && !g.creates_cycle(o, fixed) {
                    g.set_edge(o, fixed, Mark::Tail, Mark::Arrow);
                } else {
                    g.set_edge(o, fixed, Mark::Arrow, Mark::Arrow);
                }
            }
            (Mark::Circle, Mark::Tail) | (Mark::Tail, Mark::Circle) => {
                // The circle endpoint is forced to an arrowhead: a tail-tail
                // edge has no reading in the resolved graph.
                let (o, fixed) = if ma == Mark::Circle { (a, b) } else { (b, a) };
                if !g.creates_cycle(fixed, o) {
                    g.set_edge(fixed, o, Mark::Tail, Mark::Arrow);
                } else {
                    g.set_edge(fixed, o, Mark::Arrow, Mark::Arrow);
                }
            }
            _ => {}
        }
    }
    debug_assert!(g.check_stage().is_ok());
    g
}

/// Full structure learning: skeleton, orientation, resolution.
pub fn learn_cpm(dataset: &Dataset, alpha: f64) -> Result<MixedGraph, DiscoveryError> {
    learn_cpm_with_depth(dataset, alpha, -1)
}

pub fn learn_cpm_with_depth(
    dataset: &Dataset,
    alpha: f64,
    max_depth: i32,
) -> Result<MixedGraph, DiscoveryError> {
    let data = DataColumns::from_dataset(dataset)?;
    let (skeleton, sepsets) = fci_skeleton(&data, alpha, max_depth)?;
    let pag = fci_orient(&skeleton, &sepsets);
    Ok(resolve_pag(&pag, &data))
}
