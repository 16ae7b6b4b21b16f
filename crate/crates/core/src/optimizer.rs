//! The budgeted optimization loop: query parsing, the epsilon-greedy
//! observe/intervene schedule, constraint handling, model refresh, and run
//! persistence.
//!
//! A run starts with a knowledge-extraction pass (structure learning on the
//! source data, effect ranking, Markov-blanket refinement, warm surrogate
//! priors), then iterates: compute the exploration coefficient from the
//! coverage of observed configurations, either observe a uniform sample or
//! intervene on the acquisition argmax, apply the constraint penalty, append
//! to the target dataset, refresh models on schedule, and advance the budget.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::acquisition::{self, AcquisitionError};
use crate::data::{DataError, Dataset, MeasurementRecord, Provenance};
use crate::discovery::{self, DiscoveryError};
use crate::effects::{self, AceTable, EffectsError};
use crate::graph::{GraphError, MixedGraph, Node, NodeRole, Stage};
use crate::hull::HullVolume;
use crate::space::{Configuration, ConfigurationSpace, SpaceError};
use crate::stats;
use crate::surrogate::{
    self, CausalGP, CgpOptions, CgpPriors, ExplorationSet, SurrogateError,
};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("query: unknown objective `{0}`")]
    UnknownObjective(String),
    #[error("query: malformed constraint `{0}` (expected <name><=|>=<float>)")]
    MalformedConstraint(String),
    #[error("query: no budget given (need --budget and/or --budget-seconds)")]
    NoBudget,
    #[error("query: unrecognized token `{0}`")]
    UnrecognizedToken(String),
    #[error("source dataset is empty")]
    EmptySource,
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("space error: {0}")]
    Space(#[from] SpaceError),
    #[error("discovery error: {0}")]
    Discovery(#[from] DiscoveryError),
    #[error("effects error: {0}")]
    Effects(#[from] EffectsError),
    #[error("surrogate error: {0}")]
    Surrogate(#[from] SurrogateError),
    #[error("acquisition error: {0}")]
    Acquisition(#[from] AcquisitionError),
    #[error("graph error: {0}")]
    Graph(#[from] GraphError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub objective: String,
    pub cmp: Comparator,
    pub bound: f64,
}

impl Constraint {
    pub fn satisfied(&self, objectives: &BTreeMap<String, f64>) -> bool {
        match objectives.get(&self.objective) {
            None => false,
            Some(v) if !v.is_finite() => false,
            Some(v) => match self.cmp {
                Comparator::Le => *v <= self.bound,
                Comparator::Ge => *v >= self.bound,
            },
        }
    }

    pub fn parse(text: &str, space: &ConfigurationSpace) -> Result<Constraint, OptimizerError> {
        let (name, cmp, rest) = if let Some(i) = text.find("<=") {
            (&text[..i], Comparator::Le, &text[i + 2..])
        } else if let Some(i) = text.find(">=") {
            (&text[..i], Comparator::Ge, &text[i + 2..])
        } else {
            return Err(OptimizerError::MalformedConstraint(text.to_string()));
        };
        let bound: f64 = rest
            .parse()
            .map_err(|_| OptimizerError::MalformedConstraint(text.to_string()))?;
        if !space.objectives.iter().any(|o| o == name) {
            return Err(OptimizerError::UnknownObjective(name.to_string()));
        }
        Ok(Constraint { objective: name.to_string(), cmp, bound })
    }
}

/// A translated user request: what to optimize, within which budget, under
/// which constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub objective: String,
    pub direction: Direction,
    pub budget_iterations: Option<u32>,
    pub budget_seconds: Option<f64>,
    pub constraints: Vec<Constraint>,
}

/// Keyword-directive grammar:
/// `minimize|maximize <objective> [--budget N] [--budget-seconds S]
///  [--constraint <name><=|>=<float>]...`
pub fn parse_query(text: &str, space: &ConfigurationSpace) -> Result<Query, OptimizerError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut direction = Direction::Minimize;
    let mut objective: Option<String> = None;
    let mut budget_iterations = None;
    let mut budget_seconds = None;
    let mut constraints = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        match tokens[i] {
            "minimize" | "maximize" => {
                direction =
                    if tokens[i] == "maximize" { Direction::Maximize } else { Direction::Minimize };
                i += 1;
                let name = tokens.get(i).copied().unwrap_or_default();
                if !space.objectives.iter().any(|o| o == name) {
                    return Err(OptimizerError::UnknownObjective(name.to_string()));
                }
                objective = Some(name.to_string());
            }
            "--budget" => {
                i += 1;
                let v = tokens.get(i).copied().unwrap_or_default();
                budget_iterations =
                    Some(v.parse().map_err(|_| OptimizerError::UnrecognizedToken(v.to_string()))?);
            }
            "--budget-seconds" => {
                i += 1;
                let v = tokens.get(i).copied().unwrap_or_default();
                budget_seconds =
                    Some(v.parse().map_err(|_| OptimizerError::UnrecognizedToken(v.to_string()))?);
            }
            "--constraint" => {
                i += 1;
                let v = tokens.get(i).copied().unwrap_or_default().trim_matches('"');
                constraints.push(Constraint::parse(v, space)?);
            }
            other => return Err(OptimizerError::UnrecognizedToken(other.to_string())),
        }
        i += 1;
    }
    let objective = objective.ok_or(OptimizerError::UnknownObjective(String::new()))?;
    if budget_iterations.is_none() && budget_seconds.is_none() {
        return Err(OptimizerError::NoBudget);
    }
    Ok(Query { objective, direction, budget_iterations, budget_seconds, constraints })
}

/// Coverage of the observed configurations: exact hull volume over the
/// numeric embedding times the fraction of categorical levels seen.
#[derive(Debug, Clone)]
pub struct CoverageTracker {
    space: ConfigurationSpace,
    numeric: Vec<String>,
    categorical: Vec<(String, usize, std::collections::BTreeSet<String>)>,
    hull: HullVolume,
    count: usize,
}

impl CoverageTracker {
    pub fn new(space: &ConfigurationSpace) -> Self {
        let numeric: Vec<String> = space
            .options
            .iter()
            .filter(|o| o.is_numeric())
            .map(|o| o.name.clone())
            .collect();
        let categorical = space
            .options
            .iter()
            .filter(|o| !o.is_numeric())
            .map(|o| (o.name.clone(), o.level_count().unwrap_or(2), Default::default()))
            .collect();
        CoverageTracker {
            space: space.clone(),
            hull: HullVolume::new(numeric.len()),
            numeric,
            categorical,
            count: 0,
        }
    }

    pub fn add(&mut self, cfg: &Configuration) {
        let point: Vec<f64> = self
            .numeric
            .iter()
            .map(|name| {
                cfg.values
                    .get(name)
                    .and_then(|v| self.space.numeric_embedding(name, v))
                    .unwrap_or(0.0)
            })
            .collect();
        self.hull.insert(point);
        for (name, _, seen) in &mut self.categorical {
            if let Some(v) = cfg.values.get(name) {
                seen.insert(v.to_string());
            }
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Volume ratio in [0,1]; zero until the numeric cloud spans all
    /// dimensions and some observation exists.
    pub fn ratio(&mut self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let mut ratio = self.hull.volume();
        for (_, total, seen) in &self.categorical {
            ratio *= seen.len() as f64 / *total as f64;
        }
        ratio.clamp(0.0, 1.0)
    }
}

/// The exploration coefficient: coverage ratio scaled by the share of the
/// observation allowance already used, clamped to [0,1].
pub fn epsilon(ratio: f64, n: usize, n_max: usize) -> f64 {
    if n_max == 0 {
        return 0.0;
    }
    (ratio * n as f64 / n_max as f64).clamp(0.0, 1.0)
}

/// One-shot form over a configuration list.
pub fn epsilon_of_configs(
    space: &ConfigurationSpace,
    configs: &[Configuration],
    n: usize,
    n_max: usize,
) -> f64 {
    let mut tracker = CoverageTracker::new(space);
    for cfg in configs {
        tracker.add(cfg);
    }
    epsilon(tracker.ratio(), n, n_max)
}

/// Anything that can measure a configuration.
pub trait Evaluator {
    fn space(&self) -> &ConfigurationSpace;
    fn evaluate(&self, cfg: &Configuration, noise_seed: u64)
        -> Result<MeasurementRecord, String>;
}

/// Loop configuration. Defaults match the reference protocol.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: u64,
    pub alpha: f64,
    /// Significance level for relearning the target model mid-run; the
    /// target dataset is small, so a stricter level than the source pass
    /// keeps false edges out. None inherits `alpha`.
    pub target_alpha: Option<f64>,
    pub max_depth: i32,
    pub l_alpha: f64,
    pub initial_samples: usize,
    pub exploration_cap: usize,
    pub n_max: Option<usize>,
    pub refine: bool,
    pub warm_enabled: bool,
    pub graph_refresh_every: usize,
    pub convergence_window: usize,
    pub convergence_rel_tol: f64,
    pub pool_batch: usize,
    pub cgp: CgpOptions,
    pub run_dir: Option<PathBuf>,
    /// Test/baseline hook: force the observe/intervene coefficient.
    pub epsilon_override: Option<f64>,
    /// Plain-surrogate mode: skip structure learning entirely and run the
    /// cold surrogate as a full-space GP only (the cold-start baseline).
    pub plain_surrogate: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 0,
            alpha: 0.05,
            target_alpha: Some(0.01),
            max_depth: -1,
            l_alpha: 0.1,
            initial_samples: 10,
            exploration_cap: 12,
            n_max: None,
            refine: true,
            warm_enabled: true,
            graph_refresh_every: 10,
            convergence_window: 30,
            convergence_rel_tol: 1e-6,
            pool_batch: 256,
            cgp: CgpOptions::default(),
            run_dir: None,
            epsilon_override: None,
            plain_surrogate: false,
        }
    }
}

/// One measured step of the run, on the raw (user-facing) objective scale.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: u32,
    pub config: Configuration,
    pub events: BTreeMap<String, f64>,
    pub objectives: BTreeMap<String, f64>,
    pub provenance: Provenance,
    pub feasible: bool,
    pub best_y: Option<f64>,
    pub epsilon: Option<f64>,
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct OptResult {
    pub best_config: Option<Configuration>,
    pub best_y: Option<f64>,
    pub history: Vec<IterationRecord>,
    pub source_graph_raw: Option<MixedGraph>,
    pub source_graph_refined: Option<MixedGraph>,
    pub target_graph: MixedGraph,
    pub target_graph_snapshots: Vec<(u32, MixedGraph)>,
    pub source_ace: Option<AceTable>,
    pub evaluations: usize,
    pub iterations_run: u32,
    pub converged_early: bool,
    pub warnings: Vec<String>,
}

impl OptResult {
    /// Best feasible objective after each loop iteration (raw scale).
    pub fn best_trajectory(&self) -> Vec<Option<f64>> {
        self.history
            .iter()
            .filter(|r| r.iteration > 0)
            .map(|r| r.best_y)
            .collect()
    }
}

/// Mutable state of an in-flight run.
pub struct OptimizerState {
    pub iteration: u32,
    pub budget_spent: u32,
    pub seconds_spent: f64,
    pub source_data: Option<Dataset>,
    pub target_data: Dataset,
    pub source_graph_refined: Option<MixedGraph>,
    pub target_graph: MixedGraph,
    pub best: Option<(Configuration, f64)>, // working scale
    pub observation_count: usize,
    pub intervention_count: usize,
    pub n_max: usize,
}

pub struct Optimizer<'a, E: Evaluator> {
    query: Query,
    options: RunOptions,
    evaluator: &'a E,
    rng: ChaCha12Rng,
    state: OptimizerState,
    coverage: CoverageTracker,
    warm_priors: Option<CgpPriors>,
    warm: Option<CausalGP>,
    cold_priors: CgpPriors,
    cold: CausalGP,
    source_graph_raw: Option<MixedGraph>,
    source_ace: Option<AceTable>,
    history: Vec<IterationRecord>,
    snapshots: Vec<(u32, MixedGraph)>,
    best_by_iteration: Vec<f64>,
    interventions_since_refresh: usize,
    warnings: Vec<String>,
    started: Instant,
    converged: bool,
}

fn empty_target_graph(space: &ConfigurationSpace) -> MixedGraph {
    let mut nodes: Vec<Node> = space
        .options
        .iter()
        .map(|o| Node { name: o.name.clone(), role: NodeRole::Option })
        .collect();
    nodes.extend(space.events.iter().map(|e| Node { name: e.clone(), role: NodeRole::Event }));
    nodes.extend(
        space.objectives.iter().map(|o| Node { name: o.clone(), role: NodeRole::Objective }),
    );
    MixedGraph::new(nodes, Stage::Admg)
}

impl<'a, E: Evaluator> Optimizer<'a, E> {
    /// Knowledge extraction: initial target samples, structure learning on
    /// both datasets, refinement, and surrogate priors.
    pub fn new(
        query: Query,
        source: &Dataset,
        evaluator: &'a E,
        options: RunOptions,
    ) -> Result<Self, OptimizerError> {
        if source.is_empty() {
            return Err(OptimizerError::EmptySource);
        }
        let space = evaluator.space().clone();
        let mut rng = ChaCha12Rng::seed_from_u64(options.seed);
        let mut warnings = Vec::new();

        if let Some(dir) = &options.run_dir {
            std::fs::create_dir_all(dir)?;
        }

        // Working copies carry the negated objective for maximization.
        let mut working_source = source.clone();
        if query.direction == Direction::Maximize {
            negate_objective(&mut working_source, &query.objective);
        }

        let mut coverage = CoverageTracker::new(&space);
        for record in working_source
            .records
            .iter()
            .filter(|r| r.provenance == Provenance::Observational)
        {
            coverage.add(&record.config);
        }

        // Initial target samples.
        let mut target_data = Dataset::new(space.clone(), "target");
        let mut history: Vec<IterationRecord> = Vec::new();
        let init_seed = rng.random::<u64>();
        let initial = space.sample_uniform(options.initial_samples.max(1), init_seed);
        let mut best: Option<(Configuration, f64)> = None;
        for cfg in initial {
            let noise_seed = rng.random::<u64>();
            let raw = evaluator.evaluate(&cfg, noise_seed);
            let record = ingest(
                &mut target_data,
                &query,
                cfg,
                raw,
                Provenance::Observational,
                0,
                None,
                &mut best,
            )?;
            coverage.add(&record.config);
            history.push(record);
        }

        // Source structure learning and refinement.
        let mut source_graph_raw = None;
        let mut source_graph_refined = None;
        let mut source_ace = None;
        let mut warm_priors = None;
        if options.warm_enabled {
            match discovery::learn_cpm_with_depth(&working_source, options.alpha, options.max_depth)
            {
                Ok(graph) => {
                    source_graph_raw = Some(graph.clone());
                    let refined = if options.refine {
                        match effects::refine_model_detailed(
                            &graph,
                            &working_source,
                            &query.objective,
                            options.cgp.grid_single,
                        ) {
                            Ok(r) => Some((r.graph, r.ace)),
                            Err(e) => {
                                warnings.push(format!(
                                    "source refinement failed ({e}); using unrefined model"
                                ));
                                None
                            }
                        }
                    } else {
                        None
                    };
                    // With refinement the pair pool is the selected top
                    // group; without it the whole source model transfers and
                    // every option is pair-eligible.
                    let (graph_for_warm, ace_for_warm, pair_pool) = match refined {
                        Some((g, a)) => {
                            let pool = match effects::select_top_k(&a) {
                                Ok((_, top)) => top,
                                Err(_) => Vec::new(),
                            };
                            (g, a, pool)
                        }
                        None => {
                            let ace = effects::build_ace_table(
                                &working_source,
                                &graph,
                                &query.objective,
                                options.cgp.grid_single,
                            )?;
                            let pool = space.option_names();
                            (graph.clone(), ace, pool)
                        }
                    };
                    match surrogate::extract_exploration_set_with_pairs(
                        &graph_for_warm,
                        &ace_for_warm,
                        &pair_pool,
                        &query.objective,
                        options.exploration_cap,
                    ) {
                        Ok(es) => {
                            match surrogate::build_priors(
                                &working_source,
                                &graph_for_warm,
                                &es,
                                &query.objective,
                                &options.cgp,
                            ) {
                                Ok(priors) => warm_priors = Some(priors),
                                Err(e) => warnings
                                    .push(format!("warm prior construction failed ({e})")),
                            }
                        }
                        Err(e) => {
                            warnings.push(format!("no warm exploration set ({e})"));
                        }
                    }
                    source_graph_refined = Some(graph_for_warm);
                    source_ace = Some(ace_for_warm);
                }
                Err(e) => {
                    warnings.push(format!(
                        "source structure discovery failed ({e}); running cold-only"
                    ));
                }
            }
        }

        // Initial target model and cold surrogate.
        let target_alpha = options.target_alpha.unwrap_or(options.alpha);
        let target_graph = if options.plain_surrogate {
            empty_target_graph(&space)
        } else {
            match discovery::learn_cpm_with_depth(&target_data, target_alpha, options.max_depth)
            {
                Ok(g) => g,
                Err(e) => {
                    warnings.push(format!("initial target discovery failed ({e})"));
                    empty_target_graph(&space)
                }
            }
        };
        let (cold_priors, cold) =
            build_cold(&target_data, &target_graph, &query.objective, &options, &mut warnings)?;

        let warm = match &warm_priors {
            Some(priors) => {
                Some(surrogate::fit_cgp_with_priors(priors, &target_data, &options.cgp)?)
            }
            None => None,
        };

        let budget = query.budget_iterations.unwrap_or(u32::MAX) as usize;
        let n_max = options.n_max.unwrap_or(options.initial_samples + budget.min(1 << 20));
        let snapshots = vec![(0u32, target_graph.clone())];

        let mut this = Optimizer {
            query,
            options,
            evaluator,
            rng,
            state: OptimizerState {
                iteration: 0,
                budget_spent: 0,
                seconds_spent: 0.0,
                source_data: Some(working_source),
                target_data,
                source_graph_refined: source_graph_refined.clone(),
                target_graph,
                best,
                observation_count: 0,
                intervention_count: 0,
                n_max,
            },
            coverage,
            warm_priors,
            warm,
            cold_priors,
            cold,
            source_graph_raw,
            source_ace,
            history,
            snapshots,
            best_by_iteration: Vec::new(),
            interventions_since_refresh: 0,
            warnings,
            started: Instant::now(),
            converged: false,
        };
        this.persist_init()?;
        Ok(this)
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    fn budget_remaining(&self) -> bool {
        if self.converged {
            return false;
        }
        if let Some(max_iter) = self.query.budget_iterations {
            if self.state.budget_spent >= max_iter {
                return false;
            }
        }
        if let Some(max_secs) = self.query.budget_seconds {
            if self.started.elapsed().as_secs_f64() >= max_secs {
                return false;
            }
        }
        true
    }

    /// One iteration: observe or intervene, ingest the measurement, refresh
    /// models, and advance the budget. Returns false when the budget is
    /// exhausted or convergence has been declared.
    pub fn step(&mut self) -> Result<bool, OptimizerError> {
        if !self.budget_remaining() {
            return Ok(false);
        }
        self.state.iteration += 1;
        let iteration = self.state.iteration;

        // Exploration coefficient from merged observational coverage; the
        // observation allowance counts target-environment observations.
        let ratio = self.coverage.ratio();
        let n_observational = self.options.initial_samples + self.state.observation_count;
        let eps = self
            .options
            .epsilon_override
            .unwrap_or_else(|| epsilon(ratio, n_observational, self.state.n_max));
        let u: f64 = self.rng.random();

        let (cfg, provenance) = if eps > u {
            let sample_seed = self.rng.random::<u64>();
            let cfg = self.evaluator.space().sample_uniform(1, sample_seed).remove(0);
            (cfg, Provenance::Observational)
        } else {
            let incumbent = self
                .state
                .best
                .as_ref()
                .map(|(c, _)| c.clone())
                .or_else(|| self.history.first().map(|r| r.config.clone()))
                .unwrap_or_else(|| {
                    self.evaluator.space().sample_uniform(1, self.options.seed).remove(0)
                });
            let warm_members: Vec<surrogate::InterventionSet> = match &self.warm {
                Some(w) => w.members().into_iter().cloned().collect(),
                None => Vec::new(),
            };
            let pool = acquisition::candidate_pool(
                self.evaluator.space(),
                &warm_members,
                &incumbent,
                self.options.pool_batch,
                iteration as u64,
            );
            let best_y = self.state.best.as_ref().map(|(_, y)| *y).unwrap_or(0.0);
            let (cfg, score, arm) = acquisition::select_candidate(
                self.warm.as_ref(),
                &self.cold,
                &pool,
                self.options.l_alpha,
                best_y,
            )?;
            self.append_trace(iteration, &score)?;
            (cfg, Provenance::Interventional(arm.member.options.clone()))
        };

        let noise_seed = self.rng.random::<u64>();
        let raw = self.evaluator.evaluate(&cfg, noise_seed);
        let is_observation = provenance == Provenance::Observational;
        let record = ingest(
            &mut self.state.target_data,
            &self.query,
            cfg,
            raw,
            provenance,
            iteration,
            Some(eps),
            &mut self.state.best,
        )?;
        if is_observation {
            self.coverage.add(&record.config);
            self.state.observation_count += 1;
        } else {
            self.state.intervention_count += 1;
            self.interventions_since_refresh += 1;
        }
        self.history.push(record);

        // Model refresh: target graph on schedule, surrogates every step.
        if !self.options.plain_surrogate
            && self.interventions_since_refresh >= self.options.graph_refresh_every
        {
            self.interventions_since_refresh = 0;
            let target_alpha = self.options.target_alpha.unwrap_or(self.options.alpha);
            match discovery::learn_cpm_with_depth(
                &self.state.target_data,
                target_alpha,
                self.options.max_depth,
            ) {
                Ok(graph) => {
                    self.state.target_graph = graph.clone();
                    self.snapshots.push((iteration, graph));
                    let (priors, cold) = build_cold(
                        &self.state.target_data,
                        &self.state.target_graph,
                        &self.query.objective,
                        &self.options,
                        &mut self.warnings,
                    )?;
                    self.cold_priors = priors;
                    self.cold = cold;
                }
                Err(e) => {
                    self.warnings.push(format!("target discovery failed at {iteration} ({e})"));
                }
            }
        } else {
            self.cold = surrogate::fit_cgp_with_priors(
                &self.cold_priors,
                &self.state.target_data,
                &cold_options(&self.options),
            )?;
        }
        if let Some(priors) = &self.warm_priors {
            self.warm = Some(surrogate::fit_cgp_with_priors(
                priors,
                &self.state.target_data,
                &self.options.cgp,
            )?);
        }

        self.state.budget_spent += 1;
        self.state.seconds_spent = self.started.elapsed().as_secs_f64();
        let best_working =
            self.state.best.as_ref().map(|(_, y)| *y).unwrap_or(f64::INFINITY);
        self.best_by_iteration.push(best_working);
        self.check_convergence();
        self.persist_step()?;
        Ok(true)
    }

    fn check_convergence(&mut self) {
        let w = self.options.convergence_window;
        let n = self.best_by_iteration.len();
        if w == 0 || n < w + 1 {
            return;
        }
        let then = self.best_by_iteration[n - 1 - w];
        let now = self.best_by_iteration[n - 1];
        if !then.is_finite() || !now.is_finite() {
            return;
        }
        let rel = (then - now) / then.abs().max(1e-12);
        if rel <= self.options.convergence_rel_tol {
            self.converged = true;
        }
    }

    /// Run to completion and assemble the result.
    pub fn run_to_end(mut self) -> Result<OptResult, OptimizerError> {
        while self.step()? {}
        self.finish()
    }

    pub fn finish(mut self) -> Result<OptResult, OptimizerError> {
        self.persist_final()?;
        let sign = match self.query.direction {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        };
        let best_config = self.state.best.as_ref().map(|(c, _)| c.clone());
        let best_y = self.state.best.as_ref().map(|(_, y)| sign * *y);
        Ok(OptResult {
            best_config,
            best_y,
            history: self.history,
            source_graph_raw: self.source_graph_raw,
            source_graph_refined: self.state.source_graph_refined,
            target_graph: self.state.target_graph,
            target_graph_snapshots: self.snapshots,
            source_ace: self.source_ace,
            evaluations: self.state.target_data.len(),
            iterations_run: self.state.budget_spent,
            converged_early: self.converged,
            warnings: self.warnings,
        })
    }

    // ------------------------------------------------------------------
    // Run-directory persistence
    // ------------------------------------------------------------------

    fn history_header(&self) -> String {
        let space = self.evaluator.space();
        let mut cols = vec!["iteration".to_string()];
        cols.extend(space.options.iter().map(|o| o.name.clone()));
        cols.extend(space.events.iter().cloned());
        cols.extend(space.objectives.iter().cloned());
        cols.push("provenance".into());
        cols.push("feasible".into());
        cols.push("best_y".into());
        cols.push("epsilon".into());
        cols.join(",")
    }

    fn history_row(&self, r: &IterationRecord) -> String {
        let space = self.evaluator.space();
        let mut cells = vec![r.iteration.to_string()];
        for opt in &space.options {
            cells.push(r.config.values.get(&opt.name).map(|v| v.to_string()).unwrap_or_default());
        }
        for name in &space.events {
            cells.push(r.events.get(name).map(|v| v.to_string()).unwrap_or_default());
        }
        for name in &space.objectives {
            cells.push(r.objectives.get(name).map(|v| v.to_string()).unwrap_or_default());
        }
        cells.push(r.provenance.to_string());
        cells.push(r.feasible.to_string());
        cells.push(r.best_y.map(|v| v.to_string()).unwrap_or_default());
        cells.push(r.epsilon.map(|v| v.to_string()).unwrap_or_default());
        cells.join(",")
    }

    fn persist_init(&mut self) -> Result<(), OptimizerError> {
        let Some(dir) = self.options.run_dir.clone() else { return Ok(()) };
        let mut out = String::new();
        out.push_str(&self.history_header());
        out.push('\n');
        for r in &self.history {
            out.push_str(&self.history_row(r));
            out.push('\n');
        }
        std::fs::write(dir.join("history.csv"), out)?;
        std::fs::write(
            dir.join("acquisition_trace.csv"),
            "iteration,candidate_hash,warm,cold,lambda,combined\n",
        )?;
        self.write_state(&dir)?;
        Ok(())
    }

    fn append_trace(
        &self,
        iteration: u32,
        score: &crate::acquisition::AcquisitionScore,
    ) -> Result<(), OptimizerError> {
        let Some(dir) = &self.options.run_dir else { return Ok(()) };
        let hash = stats::fnv1a(score.candidate.canonical_key().as_bytes());
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(dir.join("acquisition_trace.csv"))?;
        writeln!(
            f,
            "{},{:016x},{},{},{},{}",
            iteration, hash, score.warm, score.cold, score.lambda, score.combined
        )?;
        Ok(())
    }

    fn persist_step(&mut self) -> Result<(), OptimizerError> {
        let Some(dir) = self.options.run_dir.clone() else { return Ok(()) };
        if let Some(last) = self.history.last() {
            let mut f =
                std::fs::OpenOptions::new().append(true).open(dir.join("history.csv"))?;
            writeln!(f, "{}", self.history_row(last))?;
        }
        self.write_state(&dir)?;
        Ok(())
    }

    fn write_state(&self, dir: &std::path::Path) -> Result<(), OptimizerError> {
        #[derive(Serialize)]
        struct StateDoc<'a> {
            iteration: u32,
            seed: u64,
            budget_spent_iterations: u32,
            budget_spent_seconds: f64,
            observation_count: usize,
            intervention_count: usize,
            best_y: Option<f64>,
            best_config: Option<BTreeMap<String, String>>,
            warm_hyperparams: Option<(f64, f64)>,
            cold_hyperparams: (f64, f64),
            objective: &'a str,
        }
        let sign = match self.query.direction {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        };
        let doc = StateDoc {
            iteration: self.state.iteration,
            seed: self.options.seed,
            budget_spent_iterations: self.state.budget_spent,
            budget_spent_seconds: self.state.seconds_spent,
            observation_count: self.state.observation_count,
            intervention_count: self.state.intervention_count,
            best_y: self.state.best.as_ref().map(|(_, y)| sign * *y),
            best_config: self.state.best.as_ref().map(|(c, _)| {
                c.values.iter().map(|(k, v)| (k.clone(), v.to_string())).collect()
            }),
            warm_hyperparams: self.warm.as_ref().map(|w| (w.lengthscale, w.noise)),
            cold_hyperparams: (self.cold.lengthscale, self.cold.noise),
            objective: &self.query.objective,
        };
        std::fs::write(dir.join("state.json"), serde_json::to_string_pretty(&doc).unwrap())?;
        Ok(())
    }

    fn persist_final(&mut self) -> Result<(), OptimizerError> {
        let Some(dir) = self.options.run_dir.clone() else { return Ok(()) };
        if let Some(g) = &self.source_graph_raw {
            std::fs::write(dir.join("g_source_raw.json"), g.to_json())?;
        }
        if let Some(g) = &self.state.source_graph_refined {
            std::fs::write(dir.join("g_source_refined.json"), g.to_json())?;
        }
        std::fs::write(dir.join("g_target.json"), self.state.target_graph.to_json())?;
        if let Some(ace) = &self.source_ace {
            std::fs::write(dir.join("ace.json"), ace.to_json())?;
        }
        self.write_state(&dir)?;
        Ok(())
    }
}

fn cold_options(options: &RunOptions) -> CgpOptions {
    let mut cgp = options.cgp.clone();
    cgp.include_full_space = true;
    cgp
}

fn build_cold(
    target_data: &Dataset,
    target_graph: &MixedGraph,
    objective: &str,
    options: &RunOptions,
    warnings: &mut Vec<String>,
) -> Result<(CgpPriors, CausalGP), OptimizerError> {
    let cold_opts = cold_options(options);
    if options.plain_surrogate {
        let es = ExplorationSet { members: Vec::new() };
        let priors =
            surrogate::build_priors(target_data, target_graph, &es, objective, &cold_opts)?;
        let cold = surrogate::fit_cgp_with_priors(&priors, target_data, &cold_opts)?;
        return Ok((priors, cold));
    }
    // The cold exploration set comes from the current target model; when the
    // model supports no identifiable set the surrogate still covers the full
    // space through its full-space member.
    let es = match effects::build_ace_table(
        target_data,
        target_graph,
        objective,
        options.cgp.grid_single,
    ) {
        Ok(ace) => match surrogate::extract_exploration_set(
            target_graph,
            &ace,
            objective,
            options.exploration_cap,
        ) {
            Ok(es) => es,
            Err(_) => ExplorationSet { members: Vec::new() },
        },
        Err(e) => {
            warnings.push(format!("target effect ranking failed ({e})"));
            ExplorationSet { members: Vec::new() }
        }
    };
    let priors = surrogate::build_priors(target_data, target_graph, &es, objective, &cold_opts)?;
    let cold = surrogate::fit_cgp_with_priors(&priors, target_data, &cold_opts)?;
    Ok((priors, cold))
}

fn negate_objective(dataset: &mut Dataset, objective: &str) {
    for record in &mut dataset.records {
        if let Some(v) = record.objectives.get_mut(objective) {
            *v = -*v;
        }
    }
}

/// Turn one evaluation result into dataset + history records, applying the
/// constraint penalty and updating the incumbent best.
#[allow(clippy::too_many_arguments)]
fn ingest(
    target_data: &mut Dataset,
    query: &Query,
    cfg: Configuration,
    raw: Result<MeasurementRecord, String>,
    provenance: Provenance,
    iteration: u32,
    eps: Option<f64>,
    best: &mut Option<(Configuration, f64)>,
) -> Result<IterationRecord, OptimizerError> {
    let sign = match query.direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let (raw_events, raw_objectives, eval_ok) = match raw {
        Ok(rec) => (rec.events, rec.objectives, true),
        Err(_) => (BTreeMap::new(), BTreeMap::new(), false),
    };
    let feasible =
        eval_ok && query.constraints.iter().all(|c| c.satisfied(&raw_objectives));

    // Working record: optimization sign applied, penalty sentinel on
    // infeasible or failed measurements.
    let mut working_objectives: BTreeMap<String, f64> = raw_objectives.clone();
    if let Some(v) = working_objectives.get_mut(&query.objective) {
        *v *= sign;
    }
    if !feasible {
        working_objectives.insert(query.objective.clone(), f64::INFINITY);
    }
    target_data.push(MeasurementRecord {
        config: cfg.clone(),
        events: raw_events.clone(),
        objectives: working_objectives.clone(),
        provenance: provenance.clone(),
        repeat_index: 0,
    })?;

    if feasible {
        if let Some(y) = working_objectives.get(&query.objective) {
            if y.is_finite() && best.as_ref().map(|(_, b)| y < b).unwrap_or(true) {
                *best = Some((cfg.clone(), *y));
            }
        }
    }
    let best_y_raw = best.as_ref().map(|(_, y)| sign * *y);
    Ok(IterationRecord {
        iteration,
        config: cfg,
        events: raw_events,
        objectives: raw_objectives,
        provenance,
        feasible,
        best_y: best_y_raw,
        epsilon: eps,
    })
}

/// End-to-end run: knowledge extraction followed by the step loop until the
/// budget is exhausted or the incumbent stops improving.
pub fn run<E: Evaluator>(
    query: Query,
    source: &Dataset,
    evaluator: &E,
    options: RunOptions,
) -> Result<OptResult, OptimizerError> {
    Optimizer::new(query, source, evaluator, options)?.run_to_end()
}
