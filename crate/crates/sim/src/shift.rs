//! Environment shifts: mechanism edits of graded severity.
//!
//! A shift never adds or removes variables; it rescales coefficients, alters
//! noise, and (at high severity) adds or removes equation terms including
//! changes to the objective equation. Severity caps the number of edited
//! units relative to the environment's term count.

use serde::{Deserialize, Serialize};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::env::{ScmEnvironment, SimError, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl Severity {
    /// Maximum edited units as a fraction of the environment's edit units.
    pub fn cap_fraction(&self) -> f64 {
        match self {
            Severity::Low => 0.10,
            Severity::Medium => 0.30,
            Severity::High => 0.60,
        }
    }

    pub fn cap(&self, units: usize) -> usize {
        let floor = (self.cap_fraction() * units as f64).floor() as usize;
        floor.max(match self {
            Severity::Low => 1,
            Severity::Medium => 2,
            Severity::High => 3,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "edit", rename_all = "snake_case")]
pub enum Edit {
    RescaleCoef { node: String, term: usize, factor: f64 },
    SetNoise { node: String, scale: f64 },
    AddTerm { node: String, term: Term },
    RemoveTerm { node: String, term: usize },
}

impl Edit {
    fn node(&self) -> &str {
        match self {
            Edit::RescaleCoef { node, .. }
            | Edit::SetNoise { node, .. }
            | Edit::AddTerm { node, .. }
            | Edit::RemoveTerm { node, .. } => node,
        }
    }

    fn is_structural(&self) -> bool {
        matches!(self, Edit::AddTerm { .. } | Edit::RemoveTerm { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub severity: Severity,
    pub edits: Vec<Edit>,
}

impl ShiftSpec {
    pub fn identity(severity: Severity) -> Self {
        ShiftSpec { severity, edits: Vec::new() }
    }
}

/// Apply a shift, enforcing the severity caps: total edits within the
/// severity fraction of the environment's edit units, and structural edits
/// to objective equations only at high severity.
pub fn shift_env(env: &ScmEnvironment, spec: &ShiftSpec) -> Result<ScmEnvironment, SimError> {
    let units = env.edit_units().max(1);
    let cap = spec.severity.cap(units);
    if spec.edits.len() > cap {
        return Err(SimError::ShiftCap(format!(
            "{} edits exceed the {:?} cap of {cap} (of {units} units)",
            spec.edits.len(),
            spec.severity
        )));
    }
    for edit in &spec.edits {
        let is_objective = env.space.objectives.iter().any(|o| o == edit.node());
        if is_objective && edit.is_structural() && spec.severity != Severity::High {
            return Err(SimError::ShiftCap(format!(
                "structural edit of objective `{}` requires high severity",
                edit.node()
            )));
        }
    }

    let mut shifted = env.clone();
    shifted.name = format!("{}_shifted", env.name);
    for edit in &spec.edits {
        let eq = shifted
            .equations
            .get_mut(edit.node())
            .ok_or_else(|| SimError::Spec(format!("edit names unknown node `{}`", edit.node())))?;
        match edit {
            Edit::RescaleCoef { term, factor, .. } => {
                let t = eq.terms.get_mut(*term).ok_or_else(|| {
                    SimError::Spec(format!("edit names missing term {term} of `{}`", edit.node()))
                })?;
                t.scale_coef(*factor);
            }
            Edit::SetNoise { scale, .. } => {
                eq.noise = *scale;
            }
            Edit::AddTerm { term, .. } => {
                eq.terms.push(term.clone());
            }
            Edit::RemoveTerm { term, .. } => {
                if *term >= eq.terms.len() {
                    return Err(SimError::Spec(format!(
                        "edit removes missing term {term} of `{}`",
                        edit.node()
                    )));
                }
                eq.terms.remove(*term);
            }
        }
    }
    shifted.validate()?;
    Ok(shifted)
}

/// Generate a shift of the given severity, deterministic in the seed.
/// Low rescales a few event-equation coefficients mildly; medium rescales
/// more of them with occasional sign flips, perturbs one noise scale, and
/// rescales an objective coefficient; high additionally restructures event
/// equations and changes the objective equation itself.
pub fn generate_shift(env: &ScmEnvironment, severity: Severity, seed: u64) -> ShiftSpec {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed_511f ^ env.seed);
    let units = env.edit_units().max(1);
    let cap = severity.cap(units);

    // Term pools, in deterministic name order.
    let mut event_terms: Vec<(String, usize)> = Vec::new();
    let mut objective_terms: Vec<(String, usize)> = Vec::new();
    for (node, eq) in &env.equations {
        let pool = if env.space.objectives.iter().any(|o| o == node) {
            &mut objective_terms
        } else {
            &mut event_terms
        };
        for t in 0..eq.terms.len() {
            pool.push((node.clone(), t));
        }
    }

    let mut edits: Vec<Edit> = Vec::new();
    let pick = |pool: &mut Vec<(String, usize)>, rng: &mut ChaCha12Rng| -> Option<(String, usize)> {
        if pool.is_empty() {
            None
        } else {
            Some(pool.remove(rng.random_range(0..pool.len())))
        }
    };

    match severity {
        Severity::Low => {
            let n = cap.min(((0.08 * units as f64) as usize).max(1));
            for _ in 0..n {
                if let Some((node, term)) = pick(&mut event_terms, &mut rng) {
                    let factor = 1.25 + 0.25 * rng.random::<f64>();
                    edits.push(Edit::RescaleCoef { node, term, factor });
                }
            }
        }
        Severity::Medium => {
            let n = ((0.20 * units as f64) as usize).max(1).min(cap.saturating_sub(2));
            for _ in 0..n {
                if let Some((node, term)) = pick(&mut event_terms, &mut rng) {
                    let mut factor = 1.8 + 0.8 * rng.random::<f64>();
                    if rng.random_bool(0.4) {
                        factor = -factor;
                    }
                    edits.push(Edit::RescaleCoef { node, term, factor });
                }
            }
            if let Some((node, term)) = pick(&mut objective_terms, &mut rng) {
                let mut factor = 1.4 + 0.4 * rng.random::<f64>();
                if rng.random_bool(0.3) {
                    factor = -factor;
                }
                edits.push(Edit::RescaleCoef { node, term, factor });
            }
            if let Some(event) = env.space.events.first() {
                let scale = env.equations[event].noise * 1.5 + 0.02;
                edits.push(Edit::SetNoise { node: event.clone(), scale });
            }
        }
        Severity::High => {
            let n = ((0.40 * units as f64) as usize).max(1).min(cap.saturating_sub(5));
            for _ in 0..n {
                if let Some((node, term)) = pick(&mut event_terms, &mut rng) {
                    let mut factor = 2.5 + 1.5 * rng.random::<f64>();
                    if rng.random_bool(0.5) {
                        factor = -factor;
                    }
                    edits.push(Edit::RescaleCoef { node, term, factor });
                }
            }
            let options: Vec<&str> =
                env.space.options.iter().map(|o| o.name.as_str()).collect();
            if let (Some(event), false) = (env.space.events.first(), options.is_empty()) {
                let a = options[rng.random_range(0..options.len())].to_string();
                let b = options[rng.random_range(0..options.len())].to_string();
                edits.push(Edit::AddTerm {
                    node: event.clone(),
                    term: Term::Interaction { a, b, coef: 0.8 + 0.6 * rng.random::<f64>() },
                });
            }
            if let Some((node, term)) = pick(&mut event_terms, &mut rng) {
                edits.push(Edit::RemoveTerm { node, term });
            }
            if let Some((node, term)) = pick(&mut objective_terms, &mut rng) {
                edits.push(Edit::RescaleCoef {
                    node,
                    term,
                    factor: -(1.0 + 0.5 * rng.random::<f64>()),
                });
            }
            if let (Some(objective), false) =
                (env.space.objectives.first(), options.is_empty())
            {
                let of = options[rng.random_range(0..options.len())].to_string();
                edits.push(Edit::AddTerm {
                    node: objective.clone(),
                    term: Term::Linear { of, coef: 0.5 + 0.5 * rng.random::<f64>() },
                });
            }
            if let Some(event) = env.space.events.first() {
                let scale = env.equations[event].noise * 2.0 + 0.04;
                edits.push(Edit::SetNoise { node: event.clone(), scale });
            }
        }
    }
    edits.truncate(cap);
    ShiftSpec { severity, edits }
}
