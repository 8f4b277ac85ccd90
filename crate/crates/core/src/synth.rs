//! Synthetic prediction logs with analytically known per-class error rates.
//!
//! Every example of class `c` draws two uniforms `(u, v)` and is predicted as
//! follows, with `a = base_accuracy` and `β = cannibalization`:
//!
//! * victim class: `u < a(1-β)` → `c`; `u < a` → aggressor `⌊v·|A|⌋`;
//!   otherwise a uniformly chosen wrong class `⌊v·(n-1)⌋` (skipping `c`);
//! * any other class: `u < a` → `c`; otherwise a uniformly chosen wrong class.
//!
//! Two draws are consumed per example regardless of the branch, so logs
//! generated from the same seed at different `β` are coupled example by
//! example.
//!
//! Randomness comes from ChaCha8 seeded with `seed` (via
//! `SeedableRng::seed_from_u64`); population member `i` uses ChaCha stream
//! `i`, and [`generate_log`] uses stream 0.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{PredictionLog, Record};
use crate::population::ModelPopulation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("class {class} has no examples")]
    EmptyScenario { class: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("a population needs at least one member")]
    NoMembers,
    #[error("flip reference does not match the scenario: {0}")]
    Misaligned(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasScenario {
    pub n_classes: usize,
    pub examples_per_class: Vec<usize>,
    pub base_accuracy: f64,
    pub victim_classes: BTreeSet<usize>,
    pub aggressor_classes: BTreeSet<usize>,
    /// Fraction of a victim's correct predictions redirected to aggressors.
    pub cannibalization: f64,
    pub seed: u64,
}

impl BiasScenario {
    /// Unbiased scenario with `per_class` examples in every class.
    pub fn balanced(n_classes: usize, per_class: usize, base_accuracy: f64, seed: u64) -> Self {
        Self {
            n_classes,
            examples_per_class: vec![per_class; n_classes],
            base_accuracy,
            victim_classes: BTreeSet::new(),
            aggressor_classes: BTreeSet::new(),
            cannibalization: 0.0,
            seed,
        }
    }

    pub fn with_bias(
        mut self,
        victims: impl IntoIterator<Item = usize>,
        aggressors: impl IntoIterator<Item = usize>,
        cannibalization: f64,
    ) -> Self {
        self.victim_classes = victims.into_iter().collect();
        self.aggressor_classes = aggressors.into_iter().collect();
        self.cannibalization = cannibalization;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn total_examples(&self) -> usize {
        self.examples_per_class.iter().sum()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |m: String| Err(SynthError::InvalidScenario(m));
        if self.n_classes < 2 {
            return invalid(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.examples_per_class.len() != self.n_classes {
            return invalid(format!(
                "{} example counts for {} classes",
                self.examples_per_class.len(),
                self.n_classes
            ));
        }
        if let Some(class) = self.examples_per_class.iter().position(|&n| n == 0) {
            return Err(SynthError::EmptyScenario { class });
        }
        if !(self.base_accuracy > 0.0 && self.base_accuracy <= 1.0) {
            return invalid(format!("base accuracy {} not in (0, 1]", self.base_accuracy));
        }
        if !(0.0..=1.0).contains(&self.cannibalization) {
            return invalid(format!("cannibalization {} not in [0, 1]", self.cannibalization));
        }
        if let Some(c) = self.victim_classes.iter().chain(&self.aggressor_classes).find(|&&c| c >= self.n_classes) {
            return invalid(format!("class {c} out of range"));
        }
        if let Some(c) = self.victim_classes.intersection(&self.aggressor_classes).next() {
            return invalid(format!("class {c} is both victim and aggressor"));
        }
        if !self.victim_classes.is_empty() && self.cannibalization > 0.0 && self.aggressor_classes.is_empty() {
            return invalid("cannibalization needs at least one aggressor class".into());
        }
        Ok(())
    }

    /// Example ids in generation order.
    pub fn example_ids(&self) -> Vec<String> {
        (0..self.total_examples()).map(example_id).collect()
    }
}

fn example_id(index: usize) -> String {
    format!("e{index:06}")
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn pick(v: f64, count: usize) -> usize {
    ((v * count as f64) as usize).min(count - 1)
}

fn generate_records(s: &BiasScenario, stream: u64) -> Vec<Record> {
    let mut rng = rng_for(s.seed, stream);
    let aggressors: Vec<usize> = s.aggressor_classes.iter().copied().collect();
    let a = s.base_accuracy;
    let kept = a * (1.0 - s.cannibalization);
    let mut records = Vec::with_capacity(s.total_examples());
    for (class, &count) in s.examples_per_class.iter().enumerate() {
        let victim = s.victim_classes.contains(&class);
        for _ in 0..count {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            let wrong = || {
                let k = pick(v, s.n_classes - 1);
                if k < class {
                    k
                } else {
                    k + 1
                }
            };
            let pred = if victim {
                if u < kept {
                    class
                } else if u < a && !aggressors.is_empty() {
                    aggressors[pick(v, aggressors.len())]
                } else if u < a {
                    class
                } else {
                    wrong()
                }
            } else if u < a {
                class
            } else {
                wrong()
            };
            records.push(Record::new(example_id(records.len()), class, pred));
        }
    }
    records
}

/// One log drawn from the scenario (stream 0).
pub fn generate_log(scenario: &BiasScenario) -> Result<PredictionLog, SynthError> {
    scenario.validate()?;
    Ok(PredictionLog {
        model_id: format!("synth-s{}", scenario.seed),
        n_classes: scenario.n_classes,
        records: generate_records(scenario, 0),
    })
}

/// Expected per-class error rates of the generating distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOracle {
    pub fpr: Vec<f64>,
    pub fnr: Vec<f64>,
}

/// Closed-form expected FPR and FNR per class.
///
/// FNR of class `j` is `1 - P(j | j)`; FPR is the expected number of other
/// classes' examples predicted as `j`, divided by the number of negatives.
pub fn oracle_rates(scenario: &BiasScenario) -> Result<ScenarioOracle, SynthError> {
    scenario.validate()?;
    let n = scenario.n_classes;
    let a = scenario.base_accuracy;
    let beta = scenario.cannibalization;
    let total = scenario.total_examples() as f64;
    let uniform_wrong = (1.0 - a) / (n - 1) as f64;
    let victim_mass: f64 = scenario.victim_classes.iter().map(|&c| scenario.examples_per_class[c] as f64).sum();
    let per_aggressor = if scenario.aggressor_classes.is_empty() {
        0.0
    } else {
        a * beta / scenario.aggressor_classes.len() as f64
    };

    let mut fpr = Vec::with_capacity(n);
    let mut fnr = Vec::with_capacity(n);
    for j in 0..n {
        let n_j = scenario.examples_per_class[j] as f64;
        let negatives = total - n_j;
        let mut false_pos = negatives * uniform_wrong;
        if scenario.aggressor_classes.contains(&j) {
            false_pos += victim_mass * per_aggressor;
        }
        fpr.push(false_pos / negatives);
        let correct = if scenario.victim_classes.contains(&j) && !scenario.aggressor_classes.is_empty() {
            a * (1.0 - beta)
        } else {
            a
        };
        fnr.push(1.0 - correct);
    }
    Ok(ScenarioOracle { fpr, fnr })
}

/// Reference population whose modal labels a generated population must
/// contradict on exactly `examples` and match everywhere else.
#[derive(Debug, Clone)]
pub struct FlipSpec<'a> {
    pub reference: &'a ModelPopulation,
    pub examples: BTreeSet<String>,
}

/// `n_members` logs from streams `0..n_members` of the scenario seed.
///
/// With `flips`, a strict majority of members is overwritten per example so
/// that the modal label equals the reference's modal label `r`, or
/// `(r + 1) mod n_classes` for flipped examples. Comparing the result to
/// the reference then yields exactly `flips.examples.len()` PIEs.
pub fn generate_population(
    scenario: &BiasScenario,
    n_members: usize,
    flips: Option<&FlipSpec<'_>>,
) -> Result<ModelPopulation, SynthError> {
    scenario.validate()?;
    if n_members == 0 {
        return Err(SynthError::NoMembers);
    }
    let mut logs: Vec<PredictionLog> = (0..n_members)
        .map(|i| PredictionLog {
            model_id: format!("synth-s{}-m{i:03}", scenario.seed),
            n_classes: scenario.n_classes,
            records: generate_records(scenario, i as u64),
        })
        .collect();

    if let Some(spec) = flips {
        let reference: &BTreeMap<String, usize> = &spec.reference.modal_labels;
        let ids = scenario.example_ids();
        if reference.len() != ids.len() || !ids.iter().all(|id| reference.contains_key(id)) {
            return Err(SynthError::Misaligned(format!(
                "reference population `{}` covers different examples",
                spec.reference.population_id
            )));
        }
        if let Some(unknown) = spec.examples.iter().find(|id| !reference.contains_key(*id)) {
            return Err(SynthError::Misaligned(format!("flip example `{unknown}` is not in the scenario")));
        }
        let majority = n_members / 2 + 1;
        for (row, id) in ids.iter().enumerate() {
            let r = reference[id];
            if r >= scenario.n_classes {
                return Err(SynthError::Misaligned(format!("reference label {r} out of range")));
            }
            let target = if spec.examples.contains(id) { (r + 1) % scenario.n_classes } else { r };
            for log in logs.iter_mut().take(majority) {
                log.records[row].pred_label = target;
            }
        }
    }

    ModelPopulation::new(format!("synth-s{}", scenario.seed), logs)
        .map_err(|e| SynthError::InvalidScenario(e.to_string()))
}
