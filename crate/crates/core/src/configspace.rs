//! Conditional mixed search spaces over (algorithm, hyperparameters).
//!
//! A [`ConfigSpace`] is an ordered list of hyperparameters whose first entry is
//! the unconditioned categorical algorithm selector. Every other
//! hyperparameter is either globally active or conditioned on a single
//! unconditioned categorical parent taking a given value.
//!
//! Configurations are encoded into a fixed-width feature vector: categorical
//! hyperparameters one-hot, numeric ones min-max normalized (on log scale when
//! flagged), and inactive hyperparameters as `-1` in every slot they own.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Encoded value of an inactive hyperparameter slot.
pub const INACTIVE: f64 = -1.0;

/// Number of best anchors used for local sampling.
pub const LOCAL_ANCHORS: usize = 10;

/// Standard deviation of local perturbations in normalized space.
pub const LOCAL_SIGMA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Domain {
    Continuous {
        lo: f64,
        hi: f64,
        #[serde(default)]
        log: bool,
    },
    Integer {
        lo: i64,
        hi: i64,
    },
    Categorical {
        choices: Vec<String>,
    },
}

impl Domain {
    fn width(&self) -> usize {
        match self {
            Domain::Categorical { choices } => choices.len(),
            _ => 1,
        }
    }

    fn is_categorical(&self) -> bool {
        matches!(self, Domain::Categorical { .. })
    }

    fn to_unit(&self, value: &Value) -> Option<f64> {
        match (self, value) {
            (Domain::Continuous { lo, hi, log }, v) => {
                let x = v.as_f64()?;
                Some(if *log {
                    (x.ln() - lo.ln()) / (hi.ln() - lo.ln())
                } else {
                    (x - lo) / (hi - lo)
                })
            }
            (Domain::Integer { lo, hi }, Value::Int(v)) => Some((v - lo) as f64 / (hi - lo) as f64),
            _ => None,
        }
    }

    /// Maps a point of `[0, 1]` back into the domain. Integers are rounded.
    fn from_unit(&self, u: f64) -> Value {
        let u = u.clamp(0.0, 1.0);
        match self {
            Domain::Continuous { lo, hi, log } => {
                let x = if *log {
                    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + u * (hi - lo)
                };
                Value::Float(x.clamp(*lo, *hi))
            }
            Domain::Integer { lo, hi } => {
                let v = *lo + (u * (hi - lo) as f64).round() as i64;
                Value::Int(v.clamp(*lo, *hi))
            }
            Domain::Categorical { .. } => unreachable!("categorical domains have no unit scale"),
        }
    }

    fn sample(&self, rng: &mut rng::Rng) -> Value {
        match self {
            Domain::Continuous { .. } => self.from_unit(rng.random::<f64>()),
            Domain::Integer { lo, hi } => Value::Int(rng.random_range(*lo..=*hi)),
            Domain::Categorical { choices } => {
                Value::Str(choices.choose(rng).expect("non-empty choices").clone())
            }
        }
    }
}

/// `parent == value` activation condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub parent: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterDef {
    pub name: String,
    #[serde(flatten)]
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
}

impl HyperparameterDef {
    pub fn continuous(name: &str, lo: f64, hi: f64, log: bool) -> Self {
        Self {
            name: name.to_string(),
            domain: Domain::Continuous { lo, hi, log },
            condition: None,
        }
    }

    pub fn integer(name: &str, lo: i64, hi: i64) -> Self {
        Self {
            name: name.to_string(),
            domain: Domain::Integer { lo, hi },
            condition: None,
        }
    }

    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            domain: Domain::Categorical {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
            condition: None,
        }
    }

    pub fn when(mut self, parent: &str, value: &str) -> Self {
        self.condition = Some(Condition {
            parent: parent.to_string(),
            value: value.to_string(),
        });
        self
    }
}

/// A hyperparameter value.
///
/// Untagged so that configurations serialize as plain JSON objects; integers
/// deserialize before floats, so `5` is an integer and `5.0` a float.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Float(v) => Some(*v),
            Value::Str(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

/// A joint (algorithm, hyperparameters) point holding exactly the active
/// hyperparameters of its algorithm choice.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    assignments: BTreeMap<String, Value>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.assignments.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.assignments.get(name)
    }

    pub fn get_f64(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(Value::as_f64)
    }

    pub fn get_i64(&self, name: &str) -> Option<i64> {
        self.get(name).and_then(Value::as_i64)
    }

    pub fn get_str(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(Value::as_str)
    }

    pub fn set(&mut self, name: &str, value: Value) {
        self.assignments.insert(name.to_string(), value);
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.assignments.remove(name)
    }

    pub fn assignments(&self) -> &BTreeMap<String, Value> {
        &self.assignments
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .assignments
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpaceFile {
    #[serde(rename = "hyperparameter")]
    hyperparameters: Vec<HyperparameterDef>,
}

/// Resolved activation condition: (parent index, required choice index).
type ResolvedCondition = Option<(usize, usize)>;

#[derive(Debug, Clone)]
pub struct ConfigSpace {
    params: Vec<HyperparameterDef>,
    index: HashMap<String, usize>,
    conditions: Vec<ResolvedCondition>,
    offsets: Vec<usize>,
    dim: usize,
}

impl ConfigSpace {
    /// Builds and validates a space. The first hyperparameter is the
    /// algorithm selector and must be an unconditioned categorical.
    pub fn new(params: Vec<HyperparameterDef>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidSpace(msg));
        let Some(root) = params.first() else {
            return bad("space has no hyperparameters".into());
        };
        if !root.domain.is_categorical() || root.condition.is_some() {
            return bad(format!(
                "algorithm selector `{}` must be an unconditioned categorical",
                root.name
            ));
        }

        let mut index = HashMap::new();
        let mut conditions = Vec::with_capacity(params.len());
        let mut offsets = Vec::with_capacity(params.len());
        let mut dim = 0;
        for (i, p) in params.iter().enumerate() {
            if p.name.is_empty() {
                return bad(format!("hyperparameter #{i} has an empty name"));
            }
            if index.insert(p.name.clone(), i).is_some() {
                return bad(format!("duplicate hyperparameter `{}`", p.name));
            }
            match &p.domain {
                Domain::Continuous { lo, hi, log } => {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return bad(format!("`{}`: need finite lo < hi", p.name));
                    }
                    if *log && *lo <= 0.0 {
                        return bad(format!("`{}`: log scale requires lo > 0", p.name));
                    }
                }
                Domain::Integer { lo, hi } => {
                    if lo >= hi {
                        return bad(format!("`{}`: need lo < hi", p.name));
                    }
                }
                Domain::Categorical { choices } => {
                    if choices.is_empty() {
                        return bad(format!("`{}`: empty choice list", p.name));
                    }
                    let mut seen = choices.clone();
                    seen.sort();
                    seen.dedup();
                    if seen.len() != choices.len() {
                        return bad(format!("`{}`: duplicate choices", p.name));
                    }
                }
            }
            let resolved = match &p.condition {
                None => None,
                Some(cond) => {
                    // Parents must be declared earlier, which keeps the
                    // condition graph acyclic.
                    let Some(&pi) = index.get(&cond.parent).filter(|&&pi| pi < i) else {
                        return bad(format!(
                            "`{}`: parent `{}` must be declared before it",
                            p.name, cond.parent
                        ));
                    };
                    let parent = &params[pi];
                    if parent.condition.is_some() {
                        return bad(format!(
                            "`{}`: conditions may only nest one level deep",
                            p.name
                        ));
                    }
                    let Domain::Categorical { choices } = &parent.domain else {
                        return bad(format!("`{}`: parent must be categorical", p.name));
                    };
                    let Some(ci) = choices.iter().position(|c| *c == cond.value) else {
                        return bad(format!(
                            "`{}`: `{}` is not a choice of `{}`",
                            p.name, cond.value, cond.parent
                        ));
                    };
                    Some((pi, ci))
                }
            };
            conditions.push(resolved);
            offsets.push(dim);
            dim += p.domain.width();
        }

        Ok(Self {
            params,
            index,
            conditions,
            offsets,
            dim,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SpaceFile = toml::from_str(text)?;
        Self::new(file.hyperparameters)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        let file = SpaceFile {
            hyperparameters: self.params.clone(),
        };
        toml::to_string(&file).expect("space definitions always serialize")
    }

    pub fn params(&self) -> &[HyperparameterDef] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&HyperparameterDef> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    /// The root categorical hyperparameter over algorithm names.
    pub fn algorithm_param(&self) -> &HyperparameterDef {
        &self.params[0]
    }

    pub fn algorithms(&self) -> &[String] {
        match &self.params[0].domain {
            Domain::Categorical { choices } => choices,
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn algorithm_of<'c>(&self, config: &'c Configuration) -> Option<&'c str> {
        config.get_str(&self.params[0].name)
    }

    /// Width of [`ConfigSpace::encode`] output.
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn choice_index(&self, i: usize, value: &Value) -> Option<usize> {
        match (&self.params[i].domain, value) {
            (Domain::Categorical { choices }, Value::Str(s)) => choices.iter().position(|c| c == s),
            _ => None,
        }
    }

    fn is_active(&self, i: usize, assignments: &BTreeMap<String, Value>) -> bool {
        match self.conditions[i] {
            None => true,
            Some((pi, ci)) => assignments
                .get(&self.params[pi].name)
                .and_then(|v| self.choice_index(pi, v))
                == Some(ci),
        }
    }

    /// Names of the hyperparameters active under `config`.
    pub fn active_names(&self, config: &Configuration) -> Vec<&str> {
        (0..self.params.len())
            .filter(|&i| self.is_active(i, &config.assignments))
            .map(|i| self.params[i].name.as_str())
            .collect()
    }

    pub fn validate(&self, config: &Configuration) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for name in config.assignments.keys() {
            if !self.index.contains_key(name) {
                return bad(format!("unknown hyperparameter `{name}`"));
            }
        }
        for (i, p) in self.params.iter().enumerate() {
            let active = self.is_active(i, &config.assignments);
            match (active, config.assignments.get(&p.name)) {
                (true, None) => return bad(format!("active `{}` is unassigned", p.name)),
                (false, Some(_)) => return bad(format!("inactive `{}` is assigned", p.name)),
                (false, None) => {}
                (true, Some(v)) => {
                    let ok = match &p.domain {
                        Domain::Continuous { lo, hi, .. } => {
                            v.as_f64().is_some_and(|x| x.is_finite() && x >= *lo && x <= *hi)
                        }
                        Domain::Integer { lo, hi } => v.as_i64().is_some_and(|x| x >= *lo && x <= *hi),
                        Domain::Categorical { .. } => self.choice_index(i, v).is_some(),
                    };
                    if !ok {
                        return bad(format!("`{}` = {v} is outside its domain", p.name));
                    }
                }
            }
        }
        Ok(())
    }

    /// Fixed-width numeric encoding of a valid configuration.
    pub fn encode(&self, config: &Configuration) -> Result<Vec<f64>> {
        self.validate(config)?;
        let mut out = vec![INACTIVE; self.dim];
        for (i, p) in self.params.iter().enumerate() {
            let Some(v) = config.assignments.get(&p.name) else {
                continue;
            };
            let off = self.offsets[i];
            match &p.domain {
                Domain::Categorical { choices } => {
                    let hot = self.choice_index(i, v).expect("validated");
                    for k in 0..choices.len() {
                        out[off + k] = if k == hot { 1.0 } else { 0.0 };
                    }
                }
                d => out[off] = d.to_unit(v).expect("validated").clamp(0.0, 1.0),
            }
        }
        Ok(out)
    }

    /// Samples every hyperparameter that becomes active under `config`
    /// but is still unassigned, in declaration order.
    fn fill_active(&self, config: &mut Configuration, rng: &mut rng::Rng) {
        for (i, p) in self.params.iter().enumerate() {
            if self.is_active(i, &config.assignments) && !config.assignments.contains_key(&p.name) {
                let v = p.domain.sample(rng);
                config.assignments.insert(p.name.clone(), v);
            }
        }
    }

    fn drop_inactive(&self, config: &mut Configuration) {
        for i in 0..self.params.len() {
            if !self.is_active(i, &config.assignments) {
                config.assignments.remove(&self.params[i].name);
            }
        }
    }

    /// Draws `n` configurations: the algorithm uniformly over its choices,
    /// then every active hyperparameter uniformly on its (log-)scale.
    pub fn sample_uniform(&self, n: usize, seed: u64) -> Vec<Configuration> {
        let mut rng = rng::seeded(seed);
        (0..n)
            .map(|_| {
                let mut c = Configuration::new();
                self.fill_active(&mut c, &mut rng);
                c
            })
            .collect()
    }

    /// Draws `n` one-exchange neighbours of the best anchors (lowest perf),
    /// round-robin over the top [`LOCAL_ANCHORS`].
    pub fn sample_local(
        &self,
        anchors: &[(Configuration, f64)],
        n: usize,
        seed: u64,
    ) -> Result<Vec<Configuration>> {
        if anchors.is_empty() {
            return Err(Error::Validation("local sampling needs at least one anchor".into()));
        }
        let mut order: Vec<usize> = (0..anchors.len()).collect();
        order.sort_by(|&a, &b| anchors[a].1.total_cmp(&anchors[b].1));
        order.truncate(LOCAL_ANCHORS);

        let mut rng = rng::seeded(seed);
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let anchor = &anchors[order[k % order.len()]].0;
            out.push(self.mutate(anchor, &mut rng));
        }
        Ok(out)
    }

    fn mutate(&self, anchor: &Configuration, rng: &mut rng::Rng) -> Configuration {
        let mut c = anchor.clone();
        let active: Vec<usize> = (0..self.params.len())
            .filter(|&i| c.assignments.contains_key(&self.params[i].name))
            .collect();
        let Some(&i) = active.choose(rng) else {
            return c;
        };
        let p = &self.params[i];
        let current = &c.assignments[&p.name];
        let next = match &p.domain {
            Domain::Categorical { choices } => {
                let others: Vec<&String> = choices
                    .iter()
                    .filter(|ch| Some(ch.as_str()) != current.as_str())
                    .collect();
                match others.choose(rng) {
                    Some(ch) => Value::Str((*ch).clone()),
                    None => current.clone(),
                }
            }
            d => {
                let u = d.to_unit(current).unwrap_or(0.5);
                let step = Normal::new(0.0, LOCAL_SIGMA).expect("positive sigma");
                d.from_unit(u + step.sample(rng))
            }
        };
        c.assignments.insert(p.name.clone(), next);
        if p.domain.is_categorical() {
            self.drop_inactive(&mut c);
            self.fill_active(&mut c, rng);
        }
        c
    }
}
