//! Mixed graphs over options, events, and objectives.
//!
//! One representation serves all three stages of structure learning: the
//! undirected skeleton, the partially oriented graph with circle endpoints,
//! and the fully resolved acyclic directed mixed graph whose only edge types
//! are directed (tail→arrow) and bidirected (arrow↔arrow).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node sets differ: {0}")]
    NodeSetMismatch(String),
    #[error("invalid graph for stage {stage:?}: {reason}")]
    InvalidStage { stage: Stage, reason: String },
    #[error("self loop on `{0}`")]
    SelfLoop(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Edge endpoint mark. Circle marks are undetermined endpoints and exist
/// only before resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    Tail,
    Arrow,
    Circle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Option,
    Event,
    Objective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Skeleton,
    Pag,
    Admg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub role: NodeRole,
}

/// A mixed graph: at most one edge per unordered node pair, each edge
/// carrying a mark at both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedGraph {
    pub nodes: Vec<Node>,
    // key (a, b) with a < b; value (mark at a, mark at b)
    edges: BTreeMap<(usize, usize), (Mark, Mark)>,
    pub stage: Stage,
}

impl MixedGraph {
    pub fn new(nodes: Vec<Node>, stage: Stage) -> Self {
        MixedGraph { nodes, edges: BTreeMap::new(), stage }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn node_name(&self, i: usize) -> &str {
        &self.nodes[i].name
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, Mark, Mark)> + '_ {
        self.edges.iter().map(|(&(a, b), &(ma, mb))| (a, b, ma, mb))
    }

    /// Marks of the edge between a and b, returned as (mark at a, mark at b).
    pub fn edge(&self, a: usize, b: usize) -> Option<(Mark, Mark)> {
        if a < b {
            self.edges.get(&(a, b)).copied()
        } else {
            self.edges.get(&(b, a)).map(|&(ma, mb)| (mb, ma))
        }
    }

    pub fn set_edge(&mut self, a: usize, b: usize, mark_a: Mark, mark_b: Mark) {
        assert_ne!(a, b, "self loops are not allowed");
        if a < b {
            self.edges.insert((a, b), (mark_a, mark_b));
        } else {
            self.edges.insert((b, a), (mark_b, mark_a));
        }
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.remove(&key);
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edge(a, b).is_some()
    }

    /// Set the mark at `at` on the edge between `at` and `other`.
    pub fn set_mark(&mut self, at: usize, other: usize, mark: Mark) {
        let (_, mark_other) = self.edge(at, other).expect("edge exists");
        self.set_edge(at, other, mark, mark_other);
    }

    pub fn adjacent(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &(a, b) in self.edges.keys() {
            if a == i {
                out.push(b);
            } else if b == i {
                out.push(a);
            }
        }
        out
    }

    /// Directed parents: j with j → i.
    pub fn parents(&self, i: usize) -> Vec<usize> {
        self.adjacent(i)
            .into_iter()
            .filter(|&j| self.edge(j, i) == Some((Mark::Tail, Mark::Arrow)))
            .collect()
    }

    /// Directed children: j with i → j.
    pub fn children(&self, i: usize) -> Vec<usize> {
        self.adjacent(i)
            .into_iter()
            .filter(|&j| self.edge(i, j) == Some((Mark::Tail, Mark::Arrow)))
            .collect()
    }

    /// Bidirected partners: j with i ↔ j.
    pub fn spouses_bidirected(&self, i: usize) -> Vec<usize> {
        self.adjacent(i)
            .into_iter()
            .filter(|&j| self.edge(i, j) == Some((Mark::Arrow, Mark::Arrow)))
            .collect()
    }

    /// Ancestors of `i` through directed edges, excluding `i` itself.
    pub fn ancestors(&self, i: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([i]);
        while let Some(v) = queue.pop_front() {
            for p in self.parents(v) {
                if seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        seen
    }

    /// Whether adding from → to would close a directed cycle.
    pub fn creates_cycle(&self, from: usize, to: usize) -> bool {
        from == to || self.ancestors(from).contains(&to)
    }

    pub fn directed_part_is_acyclic(&self) -> bool {
        // Kahn over directed edges only.
        let n = self.node_count();
        let mut indeg = vec![0usize; n];
        for i in 0..n {
            indeg[i] = self.parents(i).len();
        }
        let mut queue: VecDeque<usize> =
            (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        seen == n
    }

    /// Check the structural invariants of the graph's declared stage.
    pub fn check_stage(&self) -> Result<(), GraphError> {
        match self.stage {
            Stage::Skeleton | Stage::Pag => Ok(()),
            Stage::Admg => {
                for (a, b, ma, mb) in self.edges() {
                    let ok = matches!(
                        (ma, mb),
                        (Mark::Tail, Mark::Arrow) | (Mark::Arrow, Mark::Tail) | (Mark::Arrow, Mark::Arrow)
                    );
                    if !ok {
                        return Err(GraphError::InvalidStage {
                            stage: self.stage,
                            reason: format!(
                                "edge {}-{} has marks {:?}/{:?}",
                                self.node_name(a),
                                self.node_name(b),
                                ma,
                                mb
                            ),
                        });
                    }
                }
                if !self.directed_part_is_acyclic() {
                    return Err(GraphError::InvalidStage {
                        stage: self.stage,
                        reason: "directed part has a cycle".into(),
                    });
                }
                Ok(())
            }
        }
    }

    /// m-separation: is X separated from Y given Z?
    ///
    /// Bidirected edges are expanded into explicit latent common parents, then
    /// the usual moralized-ancestral-graph test runs on the augmented DAG.
    pub fn m_separated(&self, xs: &BTreeSet<usize>, ys: &BTreeSet<usize>, zs: &BTreeSet<usize>) -> bool {
        let n = self.node_count();
        // Augmented DAG as parent lists; latents get indices n, n+1, ...
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (a, b, ma, mb) in self.edges() {
            match (ma, mb) {
                (Mark::Tail, Mark::Arrow) => parents[b].push(a),
                (Mark::Arrow, Mark::Tail) => parents[a].push(b),
                (Mark::Arrow, Mark::Arrow) => {
                    let latent = parents.len();
                    parents.push(Vec::new());
                    parents[a].push(latent);
                    parents[b].push(latent);
                }
                other => panic!("m-separation requires a resolved graph, found {other:?}"),
            }
        }
        let total = parents.len();

        // Ancestors of X ∪ Y ∪ Z in the augmented DAG.
        let mut relevant = vec![false; total];
        let mut queue: VecDeque<usize> = xs.iter().chain(ys).chain(zs).copied().collect();
        for &v in xs.iter().chain(ys).chain(zs) {
            relevant[v] = true;
        }
        while let Some(v) = queue.pop_front() {
            for &p in &parents[v] {
                if !relevant[p] {
                    relevant[p] = true;
                    queue.push_back(p);
                }
            }
        }

        // Moralize the ancestral subgraph.
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); total];
        for v in 0..total {
            if !relevant[v] {
                continue;
            }
            let ps: Vec<usize> = parents[v].iter().copied().filter(|&p| relevant[p]).collect();
            for &p in &ps {
                adj[v].insert(p);
                adj[p].insert(v);
            }
            for i in 0..ps.len() {
                for j in (i + 1)..ps.len() {
                    adj[ps[i]].insert(ps[j]);
                    adj[ps[j]].insert(ps[i]);
                }
            }
        }

        // Remove Z and test connectivity from X to Y.
        let blocked: Vec<bool> = (0..total).map(|v| v < n && zs.contains(&v)).collect();
        let mut seen = vec![false; total];
        let mut queue: VecDeque<usize> = xs.iter().copied().filter(|&v| !blocked[v]).collect();
        for &v in &queue {
            seen[v] = true;
        }
        while let Some(v) = queue.pop_front() {
            if v < n && ys.contains(&v) {
                return false;
            }
            for &w in &adj[v] {
                if !seen[w] && !blocked[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        true
    }

    /// Induced subgraph on the named nodes, preserving relative order.
    pub fn induced_subgraph(&self, keep: &BTreeSet<String>) -> MixedGraph {
        let kept: Vec<usize> =
            (0..self.node_count()).filter(|&i| keep.contains(&self.nodes[i].name)).collect();
        let remap: BTreeMap<usize, usize> =
            kept.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let mut g = MixedGraph::new(
            kept.iter().map(|&i| self.nodes[i].clone()).collect(),
            self.stage,
        );
        for (a, b, ma, mb) in self.edges() {
            if let (Some(&na), Some(&nb)) = (remap.get(&a), remap.get(&b)) {
                g.set_edge(na, nb, ma, mb);
            }
        }
        g
    }

    /// Re-express this graph over a larger node list (missing nodes become
    /// isolated). Every current node must appear in `nodes`.
    pub fn aligned_to(&self, nodes: &[Node]) -> Result<MixedGraph, GraphError> {
        let mut g = MixedGraph::new(nodes.to_vec(), self.stage);
        let mut map = Vec::with_capacity(self.node_count());
        for node in &self.nodes {
            let idx = g
                .node_index(&node.name)
                .ok_or_else(|| GraphError::UnknownNode(node.name.clone()))?;
            map.push(idx);
        }
        for (a, b, ma, mb) in self.edges() {
            g.set_edge(map[a], map[b], ma, mb);
        }
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        let doc = GraphJson {
            nodes: self.nodes.clone(),
            edges: self
                .edges()
                .map(|(a, b, ma, mb)| EdgeJson {
                    a: self.node_name(a).to_string(),
                    b: self.node_name(b).to_string(),
                    mark_a: ma,
                    mark_b: mb,
                })
                .collect(),
            stage: self.stage,
        };
        serde_json::to_string_pretty(&doc).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<MixedGraph, GraphError> {
        let doc: GraphJson = serde_json::from_str(text)?;
        let mut g = MixedGraph::new(doc.nodes, doc.stage);
        for e in doc.edges {
            let a = g.node_index(&e.a).ok_or(GraphError::UnknownNode(e.a))?;
            let b = g.node_index(&e.b).ok_or(GraphError::UnknownNode(e.b))?;
            g.set_edge(a, b, e.mark_a, e.mark_b);
        }
        Ok(g)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    nodes: Vec<Node>,
    edges: Vec<EdgeJson>,
    stage: Stage,
}

#[derive(Serialize, Deserialize)]
struct EdgeJson {
    a: String,
    b: String,
    mark_a: Mark,
    mark_b: Mark,
}

/// Number of unordered node pairs whose edge status or endpoint-mark pair
/// differs between the two graphs. Graphs must share a node set; nodes are
/// matched by name.
pub fn hamming_distance(g1: &MixedGraph, g2: &MixedGraph) -> Result<usize, GraphError> {
    let names1: BTreeSet<&str> = g1.nodes.iter().map(|n| n.name.as_str()).collect();
    let names2: BTreeSet<&str> = g2.nodes.iter().map(|n| n.name.as_str()).collect();
    if names1 != names2 {
        let diff: Vec<&&str> = names1.symmetric_difference(&names2).collect();
        return Err(GraphError::NodeSetMismatch(format!("{diff:?}")));
    }
    let names: Vec<&str> = names1.into_iter().collect();
    let mut count = 0usize;
    for i in 0..names.len() {
        for j in (i + 1)..names.len() {
            let a1 = g1.node_index(names[i]).unwrap();
            let b1 = g1.node_index(names[j]).unwrap();
            let a2 = g2.node_index(names[i]).unwrap();
            let b2 = g2.node_index(names[j]).unwrap();
            let e1 = g1.edge(a1, b1);
            let e2 = g2.edge(a2, b2);
            if e1 != e2 {
                count += 1;
            }
        }
    }
    Ok(count)
}
