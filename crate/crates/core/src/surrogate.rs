//! Causal Gaussian processes over exploration sets.
//!
//! One latent function is kept per intervention set. Its prior mean and
//! prior uncertainty come from do-calculus estimates cached on a grid over
//! the set's options (linearly interpolated between grid points); the kernel
//! adds the product of the prior uncertainties to an RBF term, and a GP on
//! the residuals about the prior mean conditions on the interventional
//! measurements of that set. A surrogate covering the whole input space can
//! additionally carry a full-space member with a constant data-driven prior.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::data::{Dataset, Provenance};
use crate::effects::{
    self, estimate_do, AceTable, EffectsError, InterventionQuery,
};
use crate::graph::{MixedGraph, NodeRole};
use crate::space::{Configuration, NormalizedConfig, Value};
use crate::stats;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("{0}")]
    Effects(#[from] EffectsError),
    #[error("no identifiable intervention sets")]
    NoIdentifiableSets,
    #[error("unknown intervention set `{0}`")]
    UnknownInterventionSet(String),
    #[error("gram matrix singular even with maximal jitter")]
    SingularGram,
    #[error("objective `{0}` missing from graph or space")]
    UnknownObjective(String),
    #[error("space error: {0}")]
    Space(#[from] crate::space::SpaceError),
}

/// A set of options intervened on together. Options are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct InterventionSet {
    pub options: Vec<String>,
}

impl InterventionSet {
    pub fn new(mut options: Vec<String>) -> Self {
        options.sort();
        options.dedup();
        InterventionSet { options }
    }

    pub fn label(&self) -> String {
        self.options.join(";")
    }
}

/// The intervention sets a surrogate is allowed to explore; each member is
/// identifiable in the graph it was extracted from.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationSet {
    pub members: Vec<InterventionSet>,
}

/// Candidate sets are singletons over option-ancestors of the objective plus
/// pairs among the top-k effect-ranked options; non-identifiable sets are
/// dropped and the rest kept in descending max-member-ACE order up to `cap`.
pub fn extract_exploration_set(
    graph: &MixedGraph,
    ace: &AceTable,
    objective: &str,
    cap: usize,
) -> Result<ExplorationSet, SurrogateError> {
    let pair_pool: Vec<String> = match effects::select_top_k(ace) {
        Ok((_, top)) => top,
        Err(_) => Vec::new(),
    };
    extract_exploration_set_with_pairs(graph, ace, &pair_pool, objective, cap)
}

/// As [`extract_exploration_set`] but with the pair pool given explicitly;
/// an unrefined transfer passes every option here.
pub fn extract_exploration_set_with_pairs(
    graph: &MixedGraph,
    ace: &AceTable,
    pair_pool: &[String],
    objective: &str,
    cap: usize,
) -> Result<ExplorationSet, SurrogateError> {
    let obj_idx = graph
        .node_index(objective)
        .ok_or_else(|| SurrogateError::UnknownObjective(objective.to_string()))?;
    let ancestors = graph.ancestors(obj_idx);
    let ace_of = |name: &str| -> f64 {
        ace.scores.iter().find(|(n, _)| n == name).map(|(_, s)| *s).unwrap_or(0.0)
    };

    let mut candidates: Vec<InterventionSet> = Vec::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        if node.role == NodeRole::Option && ancestors.contains(&i) {
            candidates.push(InterventionSet::new(vec![node.name.clone()]));
        }
    }
    let in_graph: Vec<&String> =
        pair_pool.iter().filter(|n| graph.node_index(n).is_some()).collect();
    for i in 0..in_graph.len() {
        for j in (i + 1)..in_graph.len() {
            candidates.push(InterventionSet::new(vec![in_graph[i].clone(), in_graph[j].clone()]));
        }
    }
    candidates.sort();
    candidates.dedup();

    let mut identifiable: Vec<InterventionSet> = candidates
        .into_iter()
        .filter(|set| {
            set.options.iter().all(|o| effects::option_identifiable(graph, o, objective))
        })
        .collect();
    if identifiable.is_empty() {
        return Err(SurrogateError::NoIdentifiableSets);
    }
    identifiable.sort_by(|a, b| {
        let max_a = a.options.iter().map(|o| ace_of(o)).fold(f64::NEG_INFINITY, f64::max);
        let max_b = b.options.iter().map(|o| ace_of(o)).fold(f64::NEG_INFINITY, f64::max);
        max_b
            .total_cmp(&max_a)
            .then(a.options.len().cmp(&b.options.len()))
            .then_with(|| a.options.cmp(&b.options))
    });
    identifiable.truncate(cap.max(1));
    Ok(ExplorationSet { members: identifiable })
}

/// Kernel of the causal GP: an RBF over the normalized embedding plus the
/// product of the prior uncertainties at the two inputs.
pub fn kernel_eval(
    a: &NormalizedConfig,
    b: &NormalizedConfig,
    lengthscale: f64,
    sigma_a: f64,
    sigma_b: f64,
) -> f64 {
    assert!(lengthscale > 0.0, "lengthscale must be positive");
    let d2 = a.squared_distance(b);
    (-d2 / (2.0 * lengthscale * lengthscale)).exp() + sigma_a * sigma_b
}

/// Prior over one intervention set: either interpolated do-estimates on a
/// grid, or a constant (used by the full-space member).
#[derive(Debug, Clone)]
enum Prior {
    Table(PriorTable),
    Constant { mean: f64, std: f64 },
}

impl Prior {
    fn lookup(&self, coords: &[GridCoord]) -> (f64, f64) {
        match self {
            Prior::Constant { mean, std } => (*mean, *std),
            Prior::Table(table) => table.lookup(coords),
        }
    }
}

#[derive(Debug, Clone)]
enum TableDim {
    /// Ascending normalized coordinates of the grid values.
    Numeric(Vec<f64>),
    Levels(Vec<String>),
}

#[derive(Debug, Clone)]
enum GridCoord {
    Numeric(f64),
    Level(String),
}

/// Do-estimates cached on a product grid, multilinear over numeric dims.
#[derive(Debug, Clone)]
struct PriorTable {
    dims: Vec<TableDim>,
    strides: Vec<usize>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl PriorTable {
    fn lookup(&self, coords: &[GridCoord]) -> (f64, f64) {
        // Per dim: (lower index, fraction toward the next index).
        let mut anchors: Vec<(usize, f64)> = Vec::with_capacity(self.dims.len());
        for (dim, coord) in self.dims.iter().zip(coords) {
            match (dim, coord) {
                (TableDim::Levels(labels), GridCoord::Level(l)) => {
                    let idx = labels.iter().position(|x| x == l).unwrap_or(0);
                    anchors.push((idx, 0.0));
                }
                (TableDim::Numeric(grid), GridCoord::Numeric(x)) => {
                    if grid.len() == 1 {
                        anchors.push((0, 0.0));
                        continue;
                    }
                    let x = x.clamp(grid[0], *grid.last().unwrap());
                    let hi = grid.partition_point(|g| *g < x).min(grid.len() - 1).max(1);
                    let lo = hi - 1;
                    let span = grid[hi] - grid[lo];
                    let frac = if span > 0.0 { (x - grid[lo]) / span } else { 0.0 };
                    anchors.push((lo, frac));
                }
                _ => anchors.push((0, 0.0)),
            }
        }
        // Blend the 2^k corners of the interpolation cell.
        let fractional: Vec<usize> = (0..anchors.len()).filter(|&d| anchors[d].1 > 0.0).collect();
        let mut mean = 0.0;
        let mut std = 0.0;
        for corner in 0..(1usize << fractional.len()) {
            let mut weight = 1.0;
            let mut index = 0usize;
            for (d, &(lo, frac)) in anchors.iter().enumerate() {
                let pos = fractional.iter().position(|&fd| fd == d);
                let (idx, w) = match pos {
                    Some(bit) if corner >> bit & 1 == 1 => (lo + 1, frac),
                    Some(_) => (lo, 1.0 - frac),
                    None => (lo, 1.0),
                };
                weight *= w;
                index += idx * self.strides[d];
            }
            mean += weight * self.means[index];
            std += weight * self.stds[index];
        }
        (mean, std)
    }
}

/// One latent function of the surrogate.
#[derive(Debug, Clone)]
struct SubGp {
    member: InterventionSet,
    prior: Prior,
    train_inputs: Vec<NormalizedConfig>,
    train_sigmas: Vec<f64>,
    /// Lower Cholesky factor of K + σ_n² I.
    chol: Vec<f64>,
    /// (K + σ_n² I)⁻¹ residuals.
    alpha: Vec<f64>,
}

/// Fitting knobs; the defaults match the rest of the pipeline.
#[derive(Debug, Clone)]
pub struct CgpOptions {
    pub include_full_space: bool,
    pub grid_single: usize,
    pub grid_pair: usize,
    pub lengthscale_grid: Vec<f64>,
    pub noise_grid: Vec<f64>,
}

impl Default for CgpOptions {
    fn default() -> Self {
        CgpOptions {
            include_full_space: false,
            grid_single: 10,
            grid_pair: 5,
            lengthscale_grid: vec![0.1, 0.2, 0.5, 1.0],
            noise_grid: vec![1e-3, 1e-2, 1e-1],
        }
    }
}

/// A fitted causal Gaussian process.
#[derive(Debug, Clone)]
pub struct CausalGP {
    pub environment_id: String,
    pub exploration_set: ExplorationSet,
    pub objective: String,
    pub lengthscale: f64,
    pub noise: f64,
    sub_gps: Vec<SubGp>,
    space: crate::space::ConfigurationSpace,
}

/// Prior structures for one surrogate, built from the dataset that carries
/// the do-calculus information (the source data for a warm surrogate, the
/// target data for a cold one). Building is the expensive step; conditioning
/// on fresh measurements afterwards is cheap.
#[derive(Debug, Clone)]
pub struct CgpPriors {
    pub objective: String,
    members: Vec<InterventionSet>,
    priors: Vec<Prior>,
    full_space_index: Option<usize>,
    pub exploration_set: ExplorationSet,
}

pub fn build_priors(
    prior_data: &Dataset,
    graph: &MixedGraph,
    exploration_set: &ExplorationSet,
    objective: &str,
    options: &CgpOptions,
) -> Result<CgpPriors, SurrogateError> {
    if !prior_data.space.objectives.iter().any(|o| o == objective) {
        return Err(SurrogateError::UnknownObjective(objective.to_string()));
    }
    let feasible_y: Vec<f64> = prior_data
        .feasible_records()
        .iter()
        .filter_map(|r| r.objectives.get(objective).copied())
        .collect();
    let prior_mean_fallback = if feasible_y.is_empty() { 0.0 } else { stats::mean(&feasible_y) };
    let prior_std_fallback = stats::variance(&feasible_y).sqrt().max(1e-3);

    let mut members = exploration_set.members.clone();
    let mut full_space_index = None;
    if options.include_full_space {
        full_space_index = Some(members.len());
        members.push(InterventionSet::new(prior_data.space.option_names()));
    }
    let mut priors = Vec::with_capacity(members.len());
    for (mi, member) in members.iter().enumerate() {
        let prior = if Some(mi) == full_space_index {
            Prior::Constant { mean: prior_mean_fallback, std: prior_std_fallback }
        } else {
            Prior::Table(build_prior_table(prior_data, graph, member, objective, options)?)
        };
        priors.push(prior);
    }
    Ok(CgpPriors {
        objective: objective.to_string(),
        members,
        priors,
        full_space_index,
        exploration_set: exploration_set.clone(),
    })
}

/// Fit one causal GP: prior tables from do-estimates per member, residual GP
/// conditioning on that member's interventional measurements, and a grid
/// search over (lengthscale, noise) by summed log marginal likelihood.
pub fn fit_cgp(
    dataset: &Dataset,
    graph: &MixedGraph,
    exploration_set: &ExplorationSet,
    objective: &str,
    options: &CgpOptions,
) -> Result<CausalGP, SurrogateError> {
    let priors = build_priors(dataset, graph, exploration_set, objective, options)?;
    fit_cgp_with_priors(&priors, dataset, options)
}

/// Condition prebuilt priors on the training dataset's measurements.
pub fn fit_cgp_with_priors(
    priors: &CgpPriors,
    train_data: &Dataset,
    options: &CgpOptions,
) -> Result<CausalGP, SurrogateError> {
    let objective = &priors.objective;
    // Penalized records enter the GP with the worst feasible objective plus
    // three standard deviations instead of the infinite sentinel.
    let feasible_y: Vec<f64> = train_data
        .feasible_records()
        .iter()
        .filter_map(|r| r.objectives.get(objective).copied())
        .collect();
    let penalty_y = if feasible_y.is_empty() {
        None
    } else {
        let worst = feasible_y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(worst + 3.0 * stats::variance(&feasible_y).sqrt())
    };
    let effective_y = |record: &crate::data::MeasurementRecord| -> Option<f64> {
        if record.is_penalized() {
            penalty_y
        } else {
            record.objectives.get(objective).copied()
        }
    };

    let mut proto: Vec<(InterventionSet, Prior, Vec<NormalizedConfig>, Vec<f64>, Vec<f64>)> =
        Vec::new();
    for (mi, member) in priors.members.iter().enumerate() {
        let is_full_space = priors.full_space_index == Some(mi);
        let prior = priors.priors[mi].clone();

        // Training rows: interventional records for this exact member; the
        // full-space member conditions on every record.
        let mut inputs = Vec::new();
        let mut sigmas = Vec::new();
        let mut residuals = Vec::new();
        for record in &train_data.records {
            let matches = if is_full_space {
                true
            } else {
                match &record.provenance {
                    Provenance::Interventional(opts) => {
                        let mut sorted = opts.clone();
                        sorted.sort();
                        sorted == member.options
                    }
                    Provenance::Observational => false,
                }
            };
            if !matches {
                continue;
            }
            let Some(y) = effective_y(record) else { continue };
            let norm = train_data.space.normalize_subset(&record.config, &member.options)?;
            let coords = grid_coords(&train_data.space, &record.config, member);
            let (pm, ps) = prior.lookup(&coords);
            inputs.push(norm);
            sigmas.push(ps);
            residuals.push(y - pm);
        }
        proto.push((member.clone(), prior, inputs, sigmas, residuals));
    }

    // Hyperparameters by maximizing the summed log marginal likelihood.
    let mut best: Option<(f64, f64, f64)> = None; // (lml, lengthscale, noise)
    for &ls in &options.lengthscale_grid {
        for &noise in &options.noise_grid {
            let mut total = 0.0;
            let mut usable = false;
            for (_, _, inputs, sigmas, residuals) in &proto {
                if inputs.is_empty() {
                    continue;
                }
                if let Some(lml) = log_marginal(inputs, sigmas, residuals, ls, noise) {
                    total += lml;
                    usable = true;
                }
            }
            if usable && best.map(|(b, _, _)| total > b).unwrap_or(true) {
                best = Some((total, ls, noise));
            }
        }
    }
    let (lengthscale, noise) = match best {
        Some((_, ls, noise)) => (ls, noise),
        None => (0.5, 1e-2),
    };

    let mut sub_gps = Vec::with_capacity(proto.len());
    for (member, prior, inputs, sigmas, residuals) in proto {
        let n = inputs.len();
        let (chol, alpha) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            let l = gram_cholesky(&inputs, &sigmas, lengthscale, noise)
                .ok_or(SurrogateError::SingularGram)?;
            let alpha = stats::cholesky_solve(&l, n, &residuals);
            (l, alpha)
        };
        sub_gps.push(SubGp {
            member,
            prior,
            train_inputs: inputs,
            train_sigmas: sigmas,
            chol,
            alpha,
        });
    }

    Ok(CausalGP {
        environment_id: train_data.environment_id.clone(),
        exploration_set: priors.exploration_set.clone(),
        objective: objective.to_string(),
        lengthscale,
        noise,
        sub_gps,
        space: train_data.space.clone(),
    })
}

fn build_prior_table(
    dataset: &Dataset,
    graph: &MixedGraph,
    member: &InterventionSet,
    objective: &str,
    options: &CgpOptions,
) -> Result<PriorTable, SurrogateError> {
    let per_dim = if member.options.len() <= 1 { options.grid_single } else { options.grid_pair };
    let mut dims = Vec::new();
    let mut value_grids: Vec<Vec<Value>> = Vec::new();
    for name in &member.options {
        let domain = dataset
            .space
            .option(name)
            .ok_or_else(|| SurrogateError::UnknownObjective(name.clone()))?;
        let grid = domain.grid(per_dim);
        let dim = if domain.is_numeric() || matches!(domain.kind, crate::space::DomainKind::Boolean)
        {
            TableDim::Numeric(
                grid.iter()
                    .map(|v| dataset.space.numeric_embedding(name, v).unwrap_or(0.0))
                    .collect(),
            )
        } else {
            TableDim::Levels(
                grid.iter()
                    .map(|v| match v {
                        Value::Level(l) => l.clone(),
                        other => other.to_string(),
                    })
                    .collect(),
            )
        };
        dims.push(dim);
        value_grids.push(grid);
    }
    let sizes: Vec<usize> = value_grids.iter().map(|g| g.len()).collect();
    let total: usize = sizes.iter().product();
    let mut strides = vec![0usize; sizes.len()];
    let mut acc = 1usize;
    for d in (0..sizes.len()).rev() {
        strides[d] = acc;
        acc *= sizes[d];
    }
    let mut means = vec![0.0; total];
    let mut stds = vec![0.0; total];
    for flat in 0..total {
        let mut assignments = BTreeMap::new();
        for d in 0..sizes.len() {
            let idx = (flat / strides[d]) % sizes[d];
            assignments.insert(member.options[d].clone(), value_grids[d][idx].clone());
        }
        let query = InterventionQuery { assignments, target: objective.to_string() };
        let (mean, var) = estimate_do(dataset, graph, &query)?;
        means[flat] = mean;
        stds[flat] = var.sqrt();
    }
    Ok(PriorTable { dims, strides, means, stds })
}

fn grid_coords(
    space: &crate::space::ConfigurationSpace,
    cfg: &Configuration,
    member: &InterventionSet,
) -> Vec<GridCoord> {
    member
        .options
        .iter()
        .map(|name| match cfg.values.get(name) {
            Some(Value::Level(l)) => GridCoord::Level(l.clone()),
            Some(v) => GridCoord::Numeric(space.numeric_embedding(name, v).unwrap_or(0.0)),
            None => GridCoord::Numeric(0.0),
        })
        .collect()
}

fn gram_cholesky(
    inputs: &[NormalizedConfig],
    sigmas: &[f64],
    lengthscale: f64,
    noise: f64,
) -> Option<Vec<f64>> {
    let n = inputs.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = kernel_eval(&inputs[i], &inputs[j], lengthscale, sigmas[i], sigmas[j]);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }
    // Jitter escalation when the factorization fails numerically.
    let mut jitter = 0.0;
    loop {
        let mut m = gram.clone();
        for i in 0..n {
            m[i * n + i] += noise * noise + jitter;
        }
        if let Some(l) = stats::cholesky(&m, n) {
            return Some(l);
        }
        jitter = if jitter == 0.0 { 1e-8 } else { jitter * 10.0 };
        if jitter > 1e-4 {
            return None;
        }
    }
}

fn log_marginal(
    inputs: &[NormalizedConfig],
    sigmas: &[f64],
    residuals: &[f64],
    lengthscale: f64,
    noise: f64,
) -> Option<f64> {
    let n = inputs.len();
    let l = gram_cholesky(inputs, sigmas, lengthscale, noise)?;
    let alpha = stats::cholesky_solve(&l, n, residuals);
    let fit: f64 = residuals.iter().zip(&alpha).map(|(r, a)| r * a).sum();
    let logdet = stats::cholesky_log_det(&l, n);
    Some(-0.5 * fit - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

impl CausalGP {
    /// Member intervention sets, including the full-space member if fitted.
    pub fn members(&self) -> Vec<&InterventionSet> {
        self.sub_gps.iter().map(|s| &s.member).collect()
    }

    pub fn member_count(&self) -> usize {
        self.sub_gps.len()
    }

    /// Posterior at a configuration that assigns exactly the variables of
    /// one exploration-set member.
    pub fn posterior(&self, cfg: &Configuration) -> Result<(f64, f64), SurrogateError> {
        let assigned: Vec<String> = cfg.values.keys().cloned().collect();
        let target = InterventionSet::new(assigned);
        let idx = self
            .sub_gps
            .iter()
            .position(|s| s.member == target)
            .ok_or_else(|| SurrogateError::UnknownInterventionSet(target.label()))?;
        self.posterior_member(idx, cfg)
    }

    /// Posterior of member `idx` at a configuration covering at least that
    /// member's options (extra assignments are ignored).
    pub fn posterior_member(
        &self,
        idx: usize,
        cfg: &Configuration,
    ) -> Result<(f64, f64), SurrogateError> {
        let sub = &self.sub_gps[idx];
        let norm = self.space.normalize_subset(cfg, &sub.member.options)?;
        let coords = grid_coords(&self.space, cfg, &sub.member);
        let (prior_mean, prior_std) = sub.prior.lookup(&coords);
        let n = sub.train_inputs.len();
        if n == 0 {
            let var = kernel_eval(&norm, &norm, self.lengthscale, prior_std, prior_std);
            return Ok((prior_mean, var.sqrt()));
        }
        let k_star: Vec<f64> = sub
            .train_inputs
            .iter()
            .zip(&sub.train_sigmas)
            .map(|(x, s)| kernel_eval(&norm, x, self.lengthscale, prior_std, *s))
            .collect();
        let mean: f64 =
            prior_mean + k_star.iter().zip(&sub.alpha).map(|(k, a)| k * a).sum::<f64>();
        let v = stats::cholesky_solve(&sub.chol, n, &k_star);
        let k_self = kernel_eval(&norm, &norm, self.lengthscale, prior_std, prior_std);
        let var = (k_self - k_star.iter().zip(&v).map(|(k, x)| k * x).sum::<f64>()).max(0.0);
        Ok((mean, var.sqrt()))
    }

    /// Prior (mean, std) of a member at a configuration; used for reporting.
    pub fn prior_at(&self, idx: usize, cfg: &Configuration) -> (f64, f64) {
        let sub = &self.sub_gps[idx];
        let coords = grid_coords(&self.space, cfg, &sub.member);
        sub.prior.lookup(&coords)
    }

    pub fn training_count(&self, idx: usize) -> usize {
        self.sub_gps[idx].train_inputs.len()
    }
}
