//! Typed configuration spaces and validated configurations.
//!
//! A space is an ordered list of option domains plus the names of the system
//! events and performance objectives measured alongside them. The option
//! order is stable and defines the vector layout used by kernels and the
//! simulator.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("invalid domain for option `{option}`: {reason}")]
    BadDomain { option: String, reason: String },
    #[error("duplicate name `{0}` across options, events, and objectives")]
    DuplicateName(String),
    #[error("configuration does not validate: {0:?}")]
    InvalidConfiguration(Vec<Violation>),
    #[error("unknown option `{0}`")]
    UnknownOption(String),
    #[error("schema parse error: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One violation found while validating a configuration against a space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Missing { option: String },
    Unknown { option: String },
    OutOfDomain { option: String, detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing { option } => write!(f, "{option} missing"),
            Violation::Unknown { option } => write!(f, "{option} is not an option"),
            Violation::OutOfDomain { option, detail } => write!(f, "{option} {detail}"),
        }
    }
}

/// The domain of a single configuration option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainKind {
    Boolean,
    Categorical { levels: Vec<String> },
    Integer { min: i64, max: i64, step: i64 },
    Real { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionDomain {
    pub name: String,
    #[serde(flatten)]
    pub kind: DomainKind,
}

impl OptionDomain {
    pub fn boolean(name: &str) -> Self {
        OptionDomain { name: name.into(), kind: DomainKind::Boolean }
    }

    pub fn real(name: &str, min: f64, max: f64) -> Result<Self, SpaceError> {
        if !(min < max) {
            return Err(SpaceError::BadDomain {
                option: name.into(),
                reason: format!("real domain needs min < max, got [{min}, {max}]"),
            });
        }
        Ok(OptionDomain { name: name.into(), kind: DomainKind::Real { min, max } })
    }

    pub fn integer(name: &str, min: i64, max: i64, step: i64) -> Result<Self, SpaceError> {
        if min >= max || step <= 0 || (max - min) % step != 0 {
            return Err(SpaceError::BadDomain {
                option: name.into(),
                reason: format!(
                    "integer domain needs min < max, step > 0, and (max-min) divisible by step; got [{min}, {max}] step {step}"
                ),
            });
        }
        Ok(OptionDomain { name: name.into(), kind: DomainKind::Integer { min, max, step } })
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Result<Self, SpaceError> {
        let mut seen = std::collections::BTreeSet::new();
        for l in levels {
            if !seen.insert(*l) {
                return Err(SpaceError::BadDomain {
                    option: name.into(),
                    reason: format!("duplicate level `{l}`"),
                });
            }
        }
        if levels.len() < 2 {
            return Err(SpaceError::BadDomain {
                option: name.into(),
                reason: "categorical domain needs at least 2 levels".into(),
            });
        }
        Ok(OptionDomain {
            name: name.into(),
            kind: DomainKind::Categorical { levels: levels.iter().map(|s| s.to_string()).collect() },
        })
    }

    /// Number of distinct values for enumerable kinds (None for real).
    pub fn level_count(&self) -> Option<usize> {
        match &self.kind {
            DomainKind::Boolean => Some(2),
            DomainKind::Categorical { levels } => Some(levels.len()),
            DomainKind::Integer { min, max, step } => Some(((max - min) / step) as usize + 1),
            DomainKind::Real { .. } => None,
        }
    }

    /// Whether this option enters the numeric part of the kernel embedding.
    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, DomainKind::Integer { .. } | DomainKind::Real { .. })
    }

    fn check(&self, value: &Value) -> Option<String> {
        match (&self.kind, value) {
            (DomainKind::Boolean, Value::Bool(_)) => None,
            (DomainKind::Real { min, max }, Value::Real(v)) => {
                if !v.is_finite() || v < min || v > max {
                    Some(format!("out of range [{min}, {max}]: {v}"))
                } else {
                    None
                }
            }
            (DomainKind::Integer { min, max, step }, Value::Int(v)) => {
                if v < min || v > max {
                    Some(format!("out of range [{min}, {max}]: {v}"))
                } else if (v - min) % step != 0 {
                    Some(format!("not on step grid (min {min}, step {step}): {v}"))
                } else {
                    None
                }
            }
            (DomainKind::Categorical { levels }, Value::Level(l)) => {
                if levels.iter().any(|x| x == l) {
                    None
                } else {
                    Some(format!("unknown level `{l}`"))
                }
            }
            (_, v) => Some(format!("wrong value type {v}")),
        }
    }

    /// Evenly spread grid over the domain. Enumerable kinds return all levels
    /// when they fit in `m`, otherwise `m` evenly spaced ones.
    pub fn grid(&self, m: usize) -> Vec<Value> {
        let m = m.max(2);
        match &self.kind {
            DomainKind::Boolean => vec![Value::Bool(false), Value::Bool(true)],
            DomainKind::Categorical { levels } => {
                levels.iter().map(|l| Value::Level(l.clone())).collect()
            }
            DomainKind::Integer { min, step, .. } => {
                let levels = self.level_count().unwrap();
                if levels <= m {
                    (0..levels).map(|i| Value::Int(min + step * i as i64)).collect()
                } else {
                    (0..m)
                        .map(|i| {
                            let idx = (i * (levels - 1)) / (m - 1);
                            Value::Int(min + step * idx as i64)
                        })
                        .collect()
                }
            }
            DomainKind::Real { min, max } => (0..m)
                .map(|i| Value::Real(min + (max - min) * i as f64 / (m - 1) as f64))
                .collect(),
        }
    }
}

/// A single option assignment value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Level(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Level(l) => write!(f, "{l}"),
        }
    }
}

impl Value {
    /// Parse a CSV cell for the given domain.
    pub fn parse_for(domain: &OptionDomain, cell: &str) -> Result<Value, String> {
        match &domain.kind {
            DomainKind::Boolean => cell
                .parse::<bool>()
                .map(Value::Bool)
                .map_err(|_| format!("expected boolean, got `{cell}`")),
            DomainKind::Integer { .. } => cell
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| format!("expected integer, got `{cell}`")),
            DomainKind::Real { .. } => cell
                .parse::<f64>()
                .map(Value::Real)
                .map_err(|_| format!("expected real, got `{cell}`")),
            DomainKind::Categorical { .. } => Ok(Value::Level(cell.to_string())),
        }
    }
}

/// A full assignment of values to options, keyed by option name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Configuration {
    pub values: BTreeMap<String, Value>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn set(&mut self, name: &str, value: Value) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    /// Deterministic text key; used for grouping repeats and hashing rows.
    pub fn canonical_key(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            s.push_str(k);
            s.push('=');
            s.push_str(&v.to_string());
            s.push(';');
        }
        s
    }

    /// The subset of this configuration over the given option names.
    pub fn restricted_to(&self, names: &[String]) -> Configuration {
        let mut out = Configuration::new();
        for n in names {
            if let Some(v) = self.values.get(n) {
                out.values.insert(n.clone(), v.clone());
            }
        }
        out
    }
}

/// The full typed space: options in a fixed order plus the measured
/// event and objective names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationSpace {
    pub options: Vec<OptionDomain>,
    #[serde(default)]
    pub events: Vec<String>,
    #[serde(default)]
    pub objectives: Vec<String>,
}

impl ConfigurationSpace {
    pub fn new(
        options: Vec<OptionDomain>,
        events: Vec<String>,
        objectives: Vec<String>,
    ) -> Result<Self, SpaceError> {
        let space = ConfigurationSpace { options, events, objectives };
        space.check_names()?;
        Ok(space)
    }

    fn check_names(&self) -> Result<(), SpaceError> {
        let mut seen = std::collections::BTreeSet::new();
        for name in self
            .options
            .iter()
            .map(|o| o.name.as_str())
            .chain(self.events.iter().map(|s| s.as_str()))
            .chain(self.objectives.iter().map(|s| s.as_str()))
        {
            if !seen.insert(name) {
                return Err(SpaceError::DuplicateName(name.into()));
            }
        }
        Ok(())
    }

    pub fn option(&self, name: &str) -> Option<&OptionDomain> {
        self.options.iter().find(|o| o.name == name)
    }

    pub fn option_names(&self) -> Vec<String> {
        self.options.iter().map(|o| o.name.clone()).collect()
    }

    /// Load the JSON schema file format.
    pub fn from_schema_file(path: &std::path::Path) -> Result<Self, SpaceError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_schema_json(&text)
    }

    pub fn from_schema_json(text: &str) -> Result<Self, SpaceError> {
        let space: ConfigurationSpace = serde_json::from_str(text)?;
        space.check_names()?;
        for opt in &space.options {
            // Re-run constructor checks on deserialized domains.
            match &opt.kind {
                DomainKind::Real { min, max } => {
                    OptionDomain::real(&opt.name, *min, *max)?;
                }
                DomainKind::Integer { min, max, step } => {
                    OptionDomain::integer(&opt.name, *min, *max, *step)?;
                }
                DomainKind::Categorical { levels } => {
                    let refs: Vec<&str> = levels.iter().map(|s| s.as_str()).collect();
                    OptionDomain::categorical(&opt.name, &refs)?;
                }
                DomainKind::Boolean => {}
            }
        }
        Ok(space)
    }

    pub fn to_schema_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// Validate a configuration; an empty list means it is well-formed.
    pub fn validate(&self, cfg: &Configuration) -> Vec<Violation> {
        let mut violations = Vec::new();
        for opt in &self.options {
            match cfg.values.get(&opt.name) {
                None => violations.push(Violation::Missing { option: opt.name.clone() }),
                Some(v) => {
                    if let Some(detail) = opt.check(v) {
                        violations.push(Violation::OutOfDomain { option: opt.name.clone(), detail });
                    }
                }
            }
        }
        for name in cfg.values.keys() {
            if self.option(name).is_none() {
                violations.push(Violation::Unknown { option: name.clone() });
            }
        }
        violations
    }

    pub fn is_valid(&self, cfg: &Configuration) -> bool {
        self.validate(cfg).is_empty()
    }

    /// Draw n configurations, each option independently uniform over its
    /// domain. Deterministic for a fixed seed.
    pub fn sample_uniform(&self, n: usize, seed: u64) -> Vec<Configuration> {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut cfg = Configuration::new();
            for opt in &self.options {
                let v = match &opt.kind {
                    DomainKind::Boolean => Value::Bool(rng.random_bool(0.5)),
                    DomainKind::Categorical { levels } => {
                        Value::Level(levels[rng.random_range(0..levels.len())].clone())
                    }
                    DomainKind::Integer { min, step, .. } => {
                        let levels = opt.level_count().unwrap();
                        Value::Int(min + step * rng.random_range(0..levels) as i64)
                    }
                    DomainKind::Real { min, max } => {
                        Value::Real(min + (max - min) * rng.random::<f64>())
                    }
                };
                cfg.set(&opt.name, v);
            }
            out.push(cfg);
        }
        out
    }

    /// Map a validated configuration into the kernel embedding: numeric
    /// options affinely to [0,1] (booleans to {0,1}), categorical levels kept
    /// as labels. Slot order follows option order.
    pub fn normalize(&self, cfg: &Configuration) -> Result<NormalizedConfig, SpaceError> {
        let violations = self.validate(cfg);
        if !violations.is_empty() {
            return Err(SpaceError::InvalidConfiguration(violations));
        }
        let slots = self
            .options
            .iter()
            .map(|opt| Self::slot_for(opt, cfg.values.get(&opt.name).unwrap()))
            .collect();
        Ok(NormalizedConfig { slots })
    }

    /// Normalize only the named options (in space order); values must be in
    /// domain. Used when scoring configurations restricted to an
    /// intervention set.
    pub fn normalize_subset(
        &self,
        cfg: &Configuration,
        names: &[String],
    ) -> Result<NormalizedConfig, SpaceError> {
        let mut slots = Vec::new();
        for opt in &self.options {
            if !names.contains(&opt.name) {
                continue;
            }
            let v = cfg
                .values
                .get(&opt.name)
                .ok_or_else(|| SpaceError::UnknownOption(opt.name.clone()))?;
            if let Some(detail) = opt.check(v) {
                return Err(SpaceError::InvalidConfiguration(vec![Violation::OutOfDomain {
                    option: opt.name.clone(),
                    detail,
                }]));
            }
            slots.push(Self::slot_for(opt, v));
        }
        Ok(NormalizedConfig { slots })
    }

    fn slot_for(opt: &OptionDomain, v: &Value) -> Slot {
        match (&opt.kind, v) {
            (DomainKind::Boolean, Value::Bool(b)) => Slot::Num(if *b { 1.0 } else { 0.0 }),
            (DomainKind::Real { min, max }, Value::Real(x)) => Slot::Num((x - min) / (max - min)),
            (DomainKind::Integer { min, step, .. }, Value::Int(x)) => {
                let levels = ((opt.level_count().unwrap()) - 1).max(1) as f64;
                Slot::Num(((x - min) / step) as f64 / levels)
            }
            (DomainKind::Categorical { .. }, Value::Level(l)) => Slot::Label(l.clone()),
            _ => unreachable!("validated configuration"),
        }
    }

    /// Numeric embedding of one option value in [0,1]; categorical levels map
    /// to their level index divided by (level count − 1). The simulator's
    /// structural equations consume this.
    pub fn numeric_embedding(&self, name: &str, v: &Value) -> Option<f64> {
        let opt = self.option(name)?;
        Some(match (&opt.kind, v) {
            (DomainKind::Boolean, Value::Bool(b)) => {
                if *b {
                    1.0
                } else {
                    0.0
                }
            }
            (DomainKind::Real { min, max }, Value::Real(x)) => (x - min) / (max - min),
            (DomainKind::Integer { min, step, .. }, Value::Int(x)) => {
                let levels = ((opt.level_count().unwrap()) - 1).max(1) as f64;
                ((x - min) / step) as f64 / levels
            }
            (DomainKind::Categorical { levels }, Value::Level(l)) => {
                let idx = levels.iter().position(|x| x == l)? as f64;
                idx / (levels.len() - 1).max(1) as f64
            }
            _ => return None,
        })
    }
}

/// Kernel-ready embedding of a configuration: one slot per option.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedConfig {
    pub slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    Num(f64),
    Label(String),
}

impl NormalizedConfig {
    /// Squared distance in the mixed embedding: numeric slots contribute
    /// squared differences, categorical slots contribute 1 per mismatch.
    pub fn squared_distance(&self, other: &NormalizedConfig) -> f64 {
        assert_eq!(self.slots.len(), other.slots.len(), "mismatched layouts");
        self.slots
            .iter()
            .zip(&other.slots)
            .map(|(a, b)| match (a, b) {
                (Slot::Num(x), Slot::Num(y)) => (x - y) * (x - y),
                (Slot::Label(x), Slot::Label(y)) => {
                    if x == y {
                        0.0
                    } else {
                        1.0
                    }
                }
                _ => panic!("mismatched slot kinds"),
            })
            .sum()
    }

    pub fn numeric_values(&self) -> Vec<f64> {
        self.slots
            .iter()
            .filter_map(|s| match s {
                Slot::Num(x) => Some(*x),
                Slot::Label(_) => None,
            })
            .collect()
    }
}
