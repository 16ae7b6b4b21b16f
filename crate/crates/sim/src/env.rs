//! Synthetic structural-causal-model environments.
//!
//! An environment is a configuration space plus one structural equation per
//! event and objective. Equations consume the normalized numeric embedding
//! of their parents (options in [0,1], upstream events at their computed
//! values) through linear, quadratic, interaction, and threshold terms, plus
//! Gaussian noise. Optional latent variables feed several visible nodes at
//! once, and an observational-sampling bias can tie option draws to latents,
//! so passively observed data can carry spurious option-objective
//! correlations that interventions do not reproduce.
//!
//! Everything is deterministic given (environment, configuration, noise
//! seed); per-node noise streams derive from hashed node names so evaluation
//! order cannot matter.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use cameo_core::data::{Dataset, MeasurementRecord, Provenance};
use cameo_core::graph::{Mark, MixedGraph, Node, NodeRole, Stage};
use cameo_core::optimizer::Evaluator;
use cameo_core::space::{Configuration, ConfigurationSpace, Value};
use cameo_core::stats::{fnv1a, std_normal};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("environment spec: {0}")]
    Spec(String),
    #[error("equation for `{node}` references unknown node `{of}`")]
    DanglingReference { node: String, of: String },
    #[error("options are exogenous; `{0}` cannot have an equation")]
    OptionWithEquation(String),
    #[error("cycle among structural equations involving `{0}`")]
    Cycle(String),
    #[error("latent `{0}` must feed at least 2 visible nodes")]
    LatentTooNarrow(String),
    #[error("configuration invalid: {0}")]
    InvalidConfiguration(String),
    #[error("discretized space too large: {0} points (limit 1e6)")]
    SpaceTooLarge(usize),
    #[error("objective `{0}` missing from the environment")]
    UnknownObjective(String),
    #[error("shift violates severity cap: {0}")]
    ShiftCap(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("space: {0}")]
    Space(#[from] cameo_core::space::SpaceError),
    #[error("data: {0}")]
    Data(#[from] cameo_core::data::DataError),
}

/// One additive term of a structural equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Term {
    Linear { of: String, coef: f64 },
    Quadratic { of: String, coef: f64 },
    Interaction { a: String, b: String, coef: f64 },
    Threshold { of: String, at: f64, coef: f64 },
}

impl Term {
    pub fn parents(&self) -> Vec<&str> {
        match self {
            Term::Linear { of, .. } | Term::Quadratic { of, .. } | Term::Threshold { of, .. } => {
                vec![of]
            }
            Term::Interaction { a, b, .. } => vec![a, b],
        }
    }

    pub fn scale_coef(&mut self, factor: f64) {
        match self {
            Term::Linear { coef, .. }
            | Term::Quadratic { coef, .. }
            | Term::Interaction { coef, .. }
            | Term::Threshold { coef, .. } => *coef *= factor,
        }
    }

    fn eval(&self, value_of: &dyn Fn(&str) -> f64) -> f64 {
        match self {
            Term::Linear { of, coef } => coef * value_of(of),
            Term::Quadratic { of, coef } => {
                let v = value_of(of);
                coef * v * v
            }
            Term::Interaction { a, b, coef } => coef * value_of(a) * value_of(b),
            Term::Threshold { of, at, coef } => {
                if value_of(of) >= *at {
                    *coef
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equation {
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub terms: Vec<Term>,
    #[serde(default)]
    pub noise: f64,
}

/// A hidden exogenous variable feeding two or more visible nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub name: String,
    pub scale: f64,
    /// node name → additive coefficient on the latent value
    pub effects: BTreeMap<String, f64>,
}

/// Observational sampling bias: when passively observing, this option's
/// drawn value is pushed along a latent. Interventions are unaffected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationalBias {
    pub option: String,
    pub latent: String,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmEnvironment {
    pub name: String,
    pub space: ConfigurationSpace,
    #[serde(default)]
    pub latents: Vec<Latent>,
    pub equations: BTreeMap<String, Equation>,
    #[serde(default)]
    pub observational_bias: Vec<ObservationalBias>,
    #[serde(default)]
    pub seed: u64,
}

/// Parse and validate an environment spec file.
pub fn build_env(path: &std::path::Path, seed: u64) -> Result<ScmEnvironment, SimError> {
    let text = std::fs::read_to_string(path)?;
    build_env_from_json(&text, seed)
}

pub fn build_env_from_json(text: &str, seed: u64) -> Result<ScmEnvironment, SimError> {
    let mut env: ScmEnvironment = serde_json::from_str(text)?;
    env.seed = seed;
    env.validate()?;
    Ok(env)
}

impl ScmEnvironment {
    pub fn validate(&self) -> Result<(), SimError> {
        let option_names: BTreeSet<&str> =
            self.space.options.iter().map(|o| o.name.as_str()).collect();
        let derived: BTreeSet<&str> = self
            .space
            .events
            .iter()
            .chain(self.space.objectives.iter())
            .map(|s| s.as_str())
            .collect();
        let latent_names: BTreeSet<&str> = self.latents.iter().map(|l| l.name.as_str()).collect();

        for node in &derived {
            if !self.equations.contains_key(*node) {
                return Err(SimError::Spec(format!("no equation for `{node}`")));
            }
        }
        for (node, eq) in &self.equations {
            if option_names.contains(node.as_str()) {
                return Err(SimError::OptionWithEquation(node.clone()));
            }
            if !derived.contains(node.as_str()) {
                return Err(SimError::Spec(format!("equation for unknown node `{node}`")));
            }
            for parent in eq.terms.iter().flat_map(|t| t.parents()) {
                let known = option_names.contains(parent)
                    || derived.contains(parent)
                    || latent_names.contains(parent);
                if !known {
                    return Err(SimError::DanglingReference {
                        node: node.clone(),
                        of: parent.to_string(),
                    });
                }
                if self.space.objectives.iter().any(|o| o == parent) {
                    return Err(SimError::Spec(format!(
                        "objective `{parent}` cannot be a parent of `{node}`"
                    )));
                }
            }
        }
        for latent in &self.latents {
            if latent.effects.len() < 2 {
                return Err(SimError::LatentTooNarrow(latent.name.clone()));
            }
            for node in latent.effects.keys() {
                if !derived.contains(node.as_str()) {
                    return Err(SimError::Spec(format!(
                        "latent `{}` feeds unknown or non-equation node `{node}`",
                        latent.name
                    )));
                }
            }
        }
        for bias in &self.observational_bias {
            if !option_names.contains(bias.option.as_str()) {
                return Err(SimError::Spec(format!(
                    "observational bias on unknown option `{}`",
                    bias.option
                )));
            }
            if !latent_names.contains(bias.latent.as_str()) {
                return Err(SimError::Spec(format!(
                    "observational bias uses unknown latent `{}`",
                    bias.latent
                )));
            }
        }
        self.topological_order()?;
        // every objective must causally depend on at least one option
        let order = self.topological_order()?;
        let mut option_reach: BTreeMap<&str, bool> = BTreeMap::new();
        for node in &order {
            let eq = &self.equations[*node];
            let reached = eq.terms.iter().flat_map(|t| t.parents()).any(|p| {
                option_names.contains(p) || option_reach.get(p).copied().unwrap_or(false)
            });
            option_reach.insert(node, reached);
        }
        for obj in &self.space.objectives {
            if !option_reach.get(obj.as_str()).copied().unwrap_or(false) {
                return Err(SimError::Spec(format!(
                    "objective `{obj}` has no option ancestor"
                )));
            }
        }
        Ok(())
    }

    /// Derived nodes in dependency order.
    fn topological_order(&self) -> Result<Vec<&str>, SimError> {
        let mut order: Vec<&str> = Vec::new();
        let mut placed: BTreeSet<&str> = BTreeSet::new();
        let pending: Vec<&str> = self
            .space
            .events
            .iter()
            .chain(self.space.objectives.iter())
            .map(|s| s.as_str())
            .collect();
        let mut remaining: Vec<&str> = pending.clone();
        while !remaining.is_empty() {
            let mut progressed = false;
            let mut next_remaining = Vec::new();
            for node in remaining {
                let eq = &self.equations[node];
                let ready = eq.terms.iter().flat_map(|t| t.parents()).all(|p| {
                    placed.contains(p) || !self.equations.contains_key(p)
                });
                if ready {
                    placed.insert(node);
                    order.push(node);
                    progressed = true;
                } else {
                    next_remaining.push(node);
                }
            }
            if !progressed {
                return Err(SimError::Cycle(next_remaining.first().unwrap().to_string()));
            }
            remaining = next_remaining;
        }
        Ok(order)
    }

    fn node_noise(&self, noise_seed: u64, node: &str) -> f64 {
        let key = [noise_seed.to_le_bytes().as_slice(), node.as_bytes()].concat();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(fnv1a(&key));
        std_normal(&mut rng)
    }

    fn eval_internal(
        &self,
        cfg: &Configuration,
        noise_seed: Option<u64>,
        latent_values: Option<&BTreeMap<String, f64>>,
    ) -> Result<(BTreeMap<String, f64>, BTreeMap<String, f64>), SimError> {
        let violations = self.space.validate(cfg);
        if !violations.is_empty() {
            return Err(SimError::InvalidConfiguration(
                violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "),
            ));
        }
        let mut values: BTreeMap<String, f64> = BTreeMap::new();
        for opt in &self.space.options {
            let v = cfg.values.get(&opt.name).unwrap();
            values.insert(
                opt.name.clone(),
                self.space.numeric_embedding(&opt.name, v).unwrap_or(0.0),
            );
        }
        let own_latents: BTreeMap<String, f64>;
        let latents: &BTreeMap<String, f64> = match latent_values {
            Some(l) => l,
            None => {
                own_latents = self.draw_latents(noise_seed);
                &own_latents
            }
        };
        for (name, v) in latents {
            values.insert(name.clone(), *v);
        }
        let order = self.topological_order()?;
        for node in order {
            let eq = &self.equations[node];
            let lookup = |name: &str| values.get(name).copied().unwrap_or(0.0);
            let mut v = eq.intercept;
            for term in &eq.terms {
                v += term.eval(&lookup);
            }
            for latent in &self.latents {
                if let Some(coef) = latent.effects.get(node) {
                    v += coef * latents.get(&latent.name).copied().unwrap_or(0.0);
                }
            }
            if let Some(seed) = noise_seed {
                if eq.noise > 0.0 {
                    v += eq.noise * self.node_noise(seed, node);
                }
            }
            values.insert(node.to_string(), v);
        }
        let events = self
            .space
            .events
            .iter()
            .map(|e| (e.clone(), values[e]))
            .collect();
        let objectives = self
            .space
            .objectives
            .iter()
            .map(|o| (o.clone(), values[o]))
            .collect();
        Ok((events, objectives))
    }

    fn draw_latents(&self, noise_seed: Option<u64>) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for latent in &self.latents {
            let v = match noise_seed {
                None => 0.0,
                Some(seed) => latent.scale * self.node_noise(seed, &latent.name),
            };
            out.insert(latent.name.clone(), v);
        }
        out
    }

    /// Interventional measurement: the configuration is forced, noise drawn
    /// from the seed.
    pub fn evaluate(
        &self,
        cfg: &Configuration,
        noise_seed: u64,
    ) -> Result<MeasurementRecord, SimError> {
        let (events, objectives) = self.eval_internal(cfg, Some(noise_seed), None)?;
        Ok(MeasurementRecord {
            config: cfg.clone(),
            events,
            objectives,
            provenance: Provenance::Interventional(
                self.space.options.iter().map(|o| o.name.clone()).collect(),
            ),
            repeat_index: 0,
        })
    }

    /// Noise-free evaluation (latents at zero); the ground-truth response.
    pub fn evaluate_noise_free(
        &self,
        cfg: &Configuration,
    ) -> Result<BTreeMap<String, f64>, SimError> {
        let (_, objectives) = self.eval_internal(cfg, None, None)?;
        Ok(objectives)
    }

    /// Passive observation of `n` configurations. Options are drawn
    /// uniformly, then pushed along latents where an observational bias is
    /// declared, so observational data can carry spurious correlations.
    /// With `repeats > 1` every configuration is measured that many times
    /// and collapsed to componentwise lower medians.
    pub fn observe(&self, n: usize, repeats: usize, seed: u64) -> Result<Dataset, SimError> {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ self.seed);
        let mut raw = Dataset::new(self.space.clone(), &self.name);
        for i in 0..n {
            let draw_seed = rng.random::<u64>();
            let mut cfg = self.space.sample_uniform(1, draw_seed).remove(0);
            let latent_seed = rng.random::<u64>();
            let latents = self.draw_latents(Some(latent_seed));
            for bias in &self.observational_bias {
                let l = latents.get(&bias.latent).copied().unwrap_or(0.0);
                nudge_option(&self.space, &mut cfg, &bias.option, bias.coef * l);
            }
            let _ = i;
            for r in 0..repeats.max(1) {
                let noise_seed = rng.random::<u64>();
                let (events, objectives) =
                    self.eval_internal(&cfg, Some(noise_seed), Some(&latents))?;
                raw.push(MeasurementRecord {
                    config: cfg.clone(),
                    events,
                    objectives,
                    provenance: Provenance::Observational,
                    repeat_index: r as u32,
                })?;
            }
        }
        Ok(if repeats > 1 { raw.median_of_repeats() } else { raw })
    }

    /// Every configuration of the discretized space: enumerable domains in
    /// full, real domains on an evenly spaced grid of `real_grid` points.
    pub fn grid_configurations(&self, real_grid: usize) -> Result<Vec<Configuration>, SimError> {
        let grids: Vec<(String, Vec<Value>)> = self
            .space
            .options
            .iter()
            .map(|o| {
                let g = match o.level_count() {
                    Some(levels) => o.grid(levels),
                    None => o.grid(real_grid),
                };
                (o.name.clone(), g)
            })
            .collect();
        let total: usize = grids.iter().map(|(_, g)| g.len()).product();
        if total > 1_000_000 {
            return Err(SimError::SpaceTooLarge(total));
        }
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; grids.len()];
        loop {
            let mut cfg = Configuration::new();
            for (d, (name, values)) in grids.iter().enumerate() {
                cfg.set(name, values[idx[d]].clone());
            }
            out.push(cfg);
            let mut d = grids.len();
            loop {
                if d == 0 {
                    return Ok(out);
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < grids[d].1.len() {
                    break;
                }
                idx[d] = 0;
                if d == 0 {
                    return Ok(out);
                }
            }
        }
    }

    /// Exact minimizer of the noise-free objective over the discretized
    /// space. Ties keep the first configuration in enumeration order.
    pub fn ground_truth(
        &self,
        objective: &str,
        real_grid: usize,
    ) -> Result<(Configuration, f64), SimError> {
        if !self.space.objectives.iter().any(|o| o == objective) {
            return Err(SimError::UnknownObjective(objective.to_string()));
        }
        let configs = self.grid_configurations(real_grid)?;
        let mut best: Option<(Configuration, f64)> = None;
        for cfg in configs {
            let y = self.evaluate_noise_free(&cfg)?[objective];
            if best.as_ref().map(|(_, b)| y < *b).unwrap_or(true) {
                best = Some((cfg, y));
            }
        }
        Ok(best.expect("non-empty grid"))
    }

    /// Ground truth for spaces too large to enumerate: noise-free
    /// evaluations at a low-discrepancy sample, then discrete coordinate
    /// descent from the best starts (full level grids for enumerable
    /// options, a dense grid for real ones). Deterministic; exact for the
    /// additive-plus-pairwise response shapes used here.
    pub fn ground_truth_search(
        &self,
        objective: &str,
        samples: usize,
        starts: usize,
    ) -> Result<(Configuration, f64), SimError> {
        if !self.space.objectives.iter().any(|o| o == objective) {
            return Err(SimError::UnknownObjective(objective.to_string()));
        }
        let mut scored: Vec<(f64, Configuration)> = self
            .space
            .sample_uniform(samples.max(1), 0x6f07)
            .into_iter()
            .map(|cfg| {
                let y = self.evaluate_noise_free(&cfg).map(|o| o[objective]);
                y.map(|y| (y, cfg))
            })
            .collect::<Result<_, _>>()?;
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best: Option<(Configuration, f64)> = None;
        for (y0, start) in scored.into_iter().take(starts.max(1)) {
            let mut current = start;
            let mut current_y = y0;
            loop {
                let mut improved = false;
                for opt in &self.space.options {
                    let grid = match opt.level_count() {
                        Some(levels) => opt.grid(levels),
                        None => opt.grid(33),
                    };
                    for v in grid {
                        let mut cand = current.clone();
                        cand.set(&opt.name, v);
                        let y = self.evaluate_noise_free(&cand)?[objective];
                        if y < current_y - 1e-12 {
                            current = cand;
                            current_y = y;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
            if best.as_ref().map(|(_, b)| current_y < *b).unwrap_or(true) {
                best = Some((current, current_y));
            }
        }
        Ok(best.expect("at least one start"))
    }

    /// Ground truth by exhaustive enumeration when feasible, otherwise the
    /// search fallback.
    pub fn ground_truth_auto(
        &self,
        objective: &str,
        real_grid: usize,
    ) -> Result<(Configuration, f64), SimError> {
        match self.ground_truth(objective, real_grid) {
            Err(SimError::SpaceTooLarge(_)) => {
                self.ground_truth_search(objective, 50_000, 8)
            }
            other => other,
        }
    }

    /// The true causal graph over visible nodes: directed edges from the
    /// structural equations, bidirected edges between pairs of visible
    /// children of a shared latent. A pair already joined by a directed edge
    /// keeps the directed edge (one edge per pair).
    pub fn ground_truth_graph(&self) -> MixedGraph {
        let mut nodes: Vec<Node> = self
            .space
            .options
            .iter()
            .map(|o| Node { name: o.name.clone(), role: NodeRole::Option })
            .collect();
        nodes.extend(
            self.space.events.iter().map(|e| Node { name: e.clone(), role: NodeRole::Event }),
        );
        nodes.extend(
            self.space
                .objectives
                .iter()
                .map(|o| Node { name: o.clone(), role: NodeRole::Objective }),
        );
        let mut g = MixedGraph::new(nodes, Stage::Admg);
        for (node, eq) in &self.equations {
            let child = g.node_index(node).unwrap();
            for parent in eq.terms.iter().flat_map(|t| t.parents()) {
                if let Some(p) = g.node_index(parent) {
                    g.set_edge(p, child, Mark::Tail, Mark::Arrow);
                }
            }
        }
        for latent in &self.latents {
            let children: Vec<usize> = latent
                .effects
                .keys()
                .filter_map(|n| g.node_index(n))
                .collect();
            for i in 0..children.len() {
                for j in (i + 1)..children.len() {
                    if !g.has_edge(children[i], children[j]) {
                        g.set_edge(children[i], children[j], Mark::Arrow, Mark::Arrow);
                    }
                }
            }
        }
        g
    }

    /// Total count of editable units (equation terms plus latent links);
    /// severity caps are fractions of this.
    pub fn edit_units(&self) -> usize {
        let terms: usize = self.equations.values().map(|e| e.terms.len()).sum();
        let latent_links: usize = self.latents.iter().map(|l| l.effects.len()).sum();
        terms + latent_links
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }
}

/// Push an option's drawn value along a latent (observational bias): numeric
/// options shift within their domain, enumerable options shift by level.
fn nudge_option(space: &ConfigurationSpace, cfg: &mut Configuration, option: &str, delta: f64) {
    use cameo_core::space::DomainKind;
    let Some(domain) = space.option(option) else { return };
    let current = cfg.values.get(option).cloned();
    let Some(current) = current else { return };
    let embedded = space.numeric_embedding(option, &current).unwrap_or(0.5);
    let shifted = (embedded + delta).clamp(0.0, 1.0);
    let new_value = match &domain.kind {
        DomainKind::Real { min, max } => Value::Real(min + (max - min) * shifted),
        DomainKind::Integer { min, max, step } => {
            let levels = ((max - min) / step) as i64;
            let idx = (shifted * levels as f64).round() as i64;
            Value::Int(min + step * idx.clamp(0, levels))
        }
        DomainKind::Boolean => Value::Bool(shifted >= 0.5),
        DomainKind::Categorical { levels } => {
            let idx = ((shifted * (levels.len() - 1) as f64).round() as usize)
                .min(levels.len() - 1);
            Value::Level(levels[idx].clone())
        }
    };
    cfg.set(option, new_value);
}

/// Measurement protocol wrapper: every evaluation is repeated and collapsed
/// to componentwise lower medians, taming measurement noise the same way the
/// offline datasets are collected.
pub struct MedianRepeatEvaluator<'a> {
    env: &'a ScmEnvironment,
    repeats: usize,
}

impl<'a> MedianRepeatEvaluator<'a> {
    pub fn new(env: &'a ScmEnvironment, repeats: usize) -> Self {
        MedianRepeatEvaluator { env, repeats }
    }
}

impl Evaluator for MedianRepeatEvaluator<'_> {
    fn space(&self) -> &ConfigurationSpace {
        &self.env.space
    }

    fn evaluate(
        &self,
        cfg: &Configuration,
        noise_seed: u64,
    ) -> Result<MeasurementRecord, String> {
        use cameo_core::stats::lower_median;
        let mut records = Vec::with_capacity(self.repeats);
        for r in 0..self.repeats.max(1) {
            let seed = fnv1a(&[noise_seed.to_le_bytes(), (r as u64).to_le_bytes()].concat());
            records.push(self.env.evaluate(cfg, seed).map_err(|e| e.to_string())?);
        }
        let mut merged = records[0].clone();
        for name in merged.events.clone().keys() {
            let vals: Vec<f64> =
                records.iter().filter_map(|rec| rec.events.get(name).copied()).collect();
            merged.events.insert(name.clone(), lower_median(&vals));
        }
        for name in merged.objectives.clone().keys() {
            let vals: Vec<f64> =
                records.iter().filter_map(|rec| rec.objectives.get(name).copied()).collect();
            merged.objectives.insert(name.clone(), lower_median(&vals));
        }
        Ok(merged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "cameo")]
    Cameo,
    #[serde(rename = "cold-gp-ei")]
    ColdGpEi,
    #[serde(rename = "random")]
    Random,
}

impl Method {
    pub fn parse(text: &str) -> Result<Method, SimError> {
        match text {
            "cameo" => Ok(Method::Cameo),
            "cold-gp-ei" => Ok(Method::ColdGpEi),
            "random" => Ok(Method::Random),
            other => Err(SimError::Spec(format!("unknown method `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Cameo => "cameo",
            Method::ColdGpEi => "cold-gp-ei",
            Method::Random => "random",
        }
    }
}


impl Evaluator for ScmEnvironment {
    fn space(&self) -> &ConfigurationSpace {
        &self.space
    }

    fn evaluate(
        &self,
        cfg: &Configuration,
        noise_seed: u64,
    ) -> Result<MeasurementRecord, String> {
        ScmEnvironment::evaluate(self, cfg, noise_seed).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cameo_core::space::OptionDomain;

    fn tiny_env() -> ScmEnvironment {
        let space = ConfigurationSpace::new(
            vec![OptionDomain::real("x", 0.0, 1.0).unwrap()],
            vec!["e".into()],
            vec!["y".into()],
        )
        .unwrap();
        ScmEnvironment {
            name: "tiny".into(),
            space,
            latents: vec![],
            equations: BTreeMap::from([
                (
                    "e".to_string(),
                    Equation {
                        intercept: 0.0,
                        terms: vec![Term::Linear { of: "x".into(), coef: 1.0 }],
                        noise: 0.0,
                    },
                ),
                (
                    "y".to_string(),
                    Equation {
                        intercept: 1.0,
                        terms: vec![Term::Linear { of: "x".into(), coef: 2.0 }],
                        noise: 0.0,
                    },
                ),
            ]),
            observational_bias: vec![],
            seed: 0,
        }
    }

    #[test]
    fn linear_objective_arithmetic() {
        let env = tiny_env();
        let cfg = Configuration::new().with("x", Value::Real(0.5));
        let rec = env.evaluate(&cfg, 7).unwrap();
        assert!((rec.objectives["y"] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_draws_are_identical() {
        let env = tiny_env();
        let cfg = Configuration::new().with("x", Value::Real(0.3));
        let a = env.evaluate(&cfg, 1).unwrap();
        let b = env.evaluate(&cfg, 2).unwrap();
        assert_eq!(a.objectives, b.objectives);
    }

    #[test]
    fn same_seed_same_outputs() {
        let mut env = tiny_env();
        env.equations.get_mut("y").unwrap().noise = 0.5;
        let cfg = Configuration::new().with("x", Value::Real(0.3));
        let a = env.evaluate(&cfg, 42).unwrap();
        let b = env.evaluate(&cfg, 42).unwrap();
        assert_eq!(a.objectives, b.objectives);
        let c = env.evaluate(&cfg, 43).unwrap();
        assert_ne!(a.objectives, c.objectives);
    }

    #[test]
    fn option_with_equation_is_rejected() {
        let mut env = tiny_env();
        env.equations.insert(
            "x".to_string(),
            Equation { intercept: 0.0, terms: vec![], noise: 0.0 },
        );
        assert!(matches!(env.validate(), Err(SimError::OptionWithEquation(_))));
    }

    #[test]
    fn dangling_reference_is_rejected() {
        let mut env = tiny_env();
        env.equations.get_mut("y").unwrap().terms.push(Term::Linear {
            of: "ghost".into(),
            coef: 1.0,
        });
        assert!(matches!(env.validate(), Err(SimError::DanglingReference { .. })));
    }

    #[test]
    fn cycle_is_rejected() {
        let space = ConfigurationSpace::new(
            vec![OptionDomain::real("x", 0.0, 1.0).unwrap()],
            vec!["a".into(), "b".into()],
            vec!["y".into()],
        )
        .unwrap();
        let env = ScmEnvironment {
            name: "cyclic".into(),
            space,
            latents: vec![],
            equations: BTreeMap::from([
                (
                    "a".to_string(),
                    Equation {
                        intercept: 0.0,
                        terms: vec![Term::Linear { of: "b".into(), coef: 1.0 }],
                        noise: 0.0,
                    },
                ),
                (
                    "b".to_string(),
                    Equation {
                        intercept: 0.0,
                        terms: vec![Term::Linear { of: "a".into(), coef: 1.0 }],
                        noise: 0.0,
                    },
                ),
                (
                    "y".to_string(),
                    Equation {
                        intercept: 0.0,
                        terms: vec![Term::Linear { of: "x".into(), coef: 1.0 }],
                        noise: 0.0,
                    },
                ),
            ]),
            observational_bias: vec![],
            seed: 0,
        };
        assert!(matches!(env.validate(), Err(SimError::Cycle(_))));
    }

    #[test]
    fn ground_truth_linear() {
        // y = 1 + 2x over x ∈ {0, 0.5, 1} → (x = 0, y = 1)
        let env = tiny_env();
        let (cfg, y) = env.ground_truth("y", 3).unwrap();
        assert_eq!(cfg.get("x"), Some(&Value::Real(0.0)));
        assert!((y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ground_truth_symmetric_quadratic() {
        let mut env = tiny_env();
        env.equations.insert(
            "y".to_string(),
            Equation {
                intercept: 1.0,
                terms: vec![
                    Term::Linear { of: "x".into(), coef: -2.0 },
                    Term::Quadratic { of: "x".into(), coef: 2.0 },
                ],
                noise: 0.0,
            },
        );
        let (cfg, _) = env.ground_truth("y", 21).unwrap();
        match cfg.get("x") {
            Some(Value::Real(x)) => assert!((x - 0.5).abs() < 1e-9, "minimizer {x}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ground_truth_graph_has_structure_edges() {
        let env = tiny_env();
        let g = env.ground_truth_graph();
        let x = g.node_index("x").unwrap();
        let e = g.node_index("e").unwrap();
        let y = g.node_index("y").unwrap();
        assert_eq!(g.edge(x, e), Some((Mark::Tail, Mark::Arrow)));
        assert_eq!(g.edge(x, y), Some((Mark::Tail, Mark::Arrow)));
        assert!(g.edge(e, y).is_none());
    }

    #[test]
    fn observe_is_deterministic_and_valid() {
        let env = tiny_env();
        let a = env.observe(20, 1, 9).unwrap();
        let b = env.observe(20, 1, 9).unwrap();
        assert_eq!(a.records, b.records);
        for r in &a.records {
            assert!(env.space.is_valid(&r.config));
        }
    }

    #[test]
    fn median_of_repeats_reduces_noise() {
        use cameo_core::stats::variance;
        let mut env = tiny_env();
        env.equations.get_mut("y").unwrap().noise = 0.5;
        let single = env.observe(100, 1, 3).unwrap();
        let median5 = env.observe(100, 5, 3).unwrap();
        // Residual variance around the structural value 1 + 2x.
        let resid = |ds: &Dataset| -> f64 {
            let r: Vec<f64> = ds
                .records
                .iter()
                .map(|rec| {
                    let x = match rec.config.get("x") {
                        Some(Value::Real(x)) => *x,
                        _ => 0.0,
                    };
                    rec.objectives["y"] - (1.0 + 2.0 * x)
                })
                .collect();
            variance(&r)
        };
        assert!(resid(&median5) < resid(&single), "median-of-5 should denoise");
    }

    #[test]
    fn json_round_trip() {
        let env = tiny_env();
        let back = build_env_from_json(&env.to_json(), 0).unwrap();
        assert_eq!(env, back);
    }
}
