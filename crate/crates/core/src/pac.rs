//! PAC machinery: example oracles, hypotheses as evaluable specification
//! strings, empirical risk, the repeated-trial (epsilon, delta) harness and
//! the delegating-hypothesis construction that folds a learner into its own
//! hypothesis class.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instrument::{self, CallCounts, Primitive};
use crate::seeds::{derive_seed, rng_from, stream};

/// `{-1, +1}` for the discrete-log class, `{0, 1}` for the cube-root class.
pub type Label = i8;

/// Domains up to this many points are scored by exact enumeration.
pub const EXACT_ENUMERATION_LIMIT: u64 = 1009;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PacError {
    #[error("sample budget exhausted: requested {requested}, remaining {remaining}")]
    BudgetExhausted { requested: usize, remaining: usize },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("empty example set")]
    EmptyExamples,
    #[error("hypothesis specification of {len} symbols exceeds cap {cap}")]
    SpecTooLarge { len: usize, cap: usize },
    #[error("invalid learner config: {0}")]
    InvalidConfig(String),
    #[error("malformed hypothesis spec {0:?}")]
    MalformedSpec(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("learner failed: {0}")]
    Learner(String),
}

pub type Result<T> = std::result::Result<T, PacError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    pub input: u64,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(input: u64, label: Label) -> Self {
        Self { input, label }
    }
}

/// `EX(c, D)`: a seeded sampler that counts its calls against a budget.
pub struct ExampleOracle<'a> {
    sampler: Box<dyn FnMut(&mut ChaCha8Rng) -> LabeledExample + 'a>,
    rng: ChaCha8Rng,
    call_count: usize,
    budget: usize,
    description: String,
    concept: Option<u64>,
}

impl<'a> ExampleOracle<'a> {
    pub fn new(
        description: impl Into<String>,
        seed: u64,
        sampler: impl FnMut(&mut ChaCha8Rng) -> LabeledExample + 'a,
    ) -> Self {
        Self {
            sampler: Box::new(sampler),
            rng: rng_from(seed),
            call_count: 0,
            budget: usize::MAX,
            description: description.into(),
            concept: None,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    /// Attach the index of the concept behind this oracle. Only cheating
    /// control learners look at it.
    pub fn with_concept(mut self, concept: u64) -> Self {
        self.concept = Some(concept);
        self
    }

    pub fn call(&mut self) -> Result<LabeledExample> {
        if self.remaining() == 0 {
            return Err(PacError::BudgetExhausted { requested: 1, remaining: 0 });
        }
        self.call_count += 1;
        Ok((self.sampler)(&mut self.rng))
    }

    pub fn call_count(&self) -> usize {
        self.call_count
    }

    pub fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.call_count)
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn concept(&self) -> Option<u64> {
        self.concept
    }
}

impl fmt::Debug for ExampleOracle<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExampleOracle")
            .field("description", &self.description)
            .field("call_count", &self.call_count)
            .field("budget", &self.budget)
            .finish()
    }
}

/// Draw `m` examples, failing up front if the budget cannot cover them.
pub fn draw_examples(oracle: &mut ExampleOracle<'_>, m: usize) -> Result<Vec<LabeledExample>> {
    if m > oracle.remaining() {
        return Err(PacError::BudgetExhausted { requested: m, remaining: oracle.remaining() });
    }
    (0..m).map(|_| oracle.call()).collect()
}

/// Specification strings use a `kind key=value ...` grammar.
pub fn format_spec(kind: &str, fields: &[(&str, String)]) -> String {
    let mut s = kind.to_string();
    for (k, v) in fields {
        s.push(' ');
        s.push_str(k);
        s.push('=');
        s.push_str(v);
    }
    s
}

pub fn parse_spec(spec: &str) -> Result<(&str, BTreeMap<&str, &str>)> {
    let mut parts = spec.split(' ');
    let kind = parts.next().filter(|k| !k.is_empty()).ok_or_else(|| PacError::MalformedSpec(spec.into()))?;
    let mut fields = BTreeMap::new();
    for part in parts {
        let (k, v) = part.split_once('=').ok_or_else(|| PacError::MalformedSpec(spec.into()))?;
        if fields.insert(k, v).is_some() {
            return Err(PacError::MalformedSpec(spec.into()));
        }
    }
    Ok((kind, fields))
}

/// Parse field `key` of an already-split spec.
pub fn spec_field<T: std::str::FromStr>(fields: &BTreeMap<&str, &str>, key: &str, spec: &str) -> Result<T> {
    fields
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| PacError::MalformedSpec(format!("{spec} (field {key})")))
}

/// Evaluation algorithm for one family of hypothesis specifications.
pub trait HypothesisEvaluator: Send + Sync {
    fn id(&self) -> &str;

    /// Every primitive this evaluator is allowed to invoke.
    fn primitives(&self) -> Vec<Primitive>;

    fn evaluate(&self, spec: &str, x: u64) -> Result<Label>;
}

/// A specification string bound to the evaluator that interprets it.
#[derive(Clone)]
pub struct Hypothesis {
    spec: String,
    evaluator: Arc<dyn HypothesisEvaluator>,
}

impl Hypothesis {
    pub fn new(spec: impl Into<String>, evaluator: Arc<dyn HypothesisEvaluator>) -> Self {
        Self { spec: spec.into(), evaluator }
    }

    pub fn spec(&self) -> &str {
        &self.spec
    }

    pub fn evaluator_id(&self) -> &str {
        self.evaluator.id()
    }

    pub fn size(&self) -> usize {
        self.spec.chars().count()
    }

    pub fn primitives(&self) -> Vec<Primitive> {
        self.evaluator.primitives()
    }

    /// Declared free of quantum surrogates and secret reads.
    pub fn is_classical(&self) -> bool {
        self.primitives().iter().all(|p| !p.is_quantum_surrogate())
    }

    pub fn eval(&self, x: u64) -> Result<Label> {
        self.evaluator.evaluate(&self.spec, x)
    }
}

impl fmt::Debug for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hypothesis").field("spec", &self.spec).field("evaluator", &self.evaluator_id()).finish()
    }
}

/// Always answers the label in its spec.
#[derive(Debug, Default)]
pub struct ConstantEvaluator;

impl HypothesisEvaluator for ConstantEvaluator {
    fn id(&self) -> &str {
        "constant"
    }

    fn primitives(&self) -> Vec<Primitive> {
        Vec::new()
    }

    fn evaluate(&self, spec: &str, _x: u64) -> Result<Label> {
        let (kind, fields) = parse_spec(spec)?;
        if kind != "constant" {
            return Err(PacError::MalformedSpec(spec.into()));
        }
        spec_field(&fields, "label", spec)
    }
}

pub fn constant_hypothesis(label: Label) -> Hypothesis {
    Hypothesis::new(format_spec("constant", &[("label", label.to_string())]), Arc::new(ConstantEvaluator))
}

/// Fraction of `test_set` on which `h` disagrees with the label. Evaluation
/// failures count as disagreements.
pub fn empirical_error(h: &Hypothesis, test_set: &[LabeledExample]) -> Result<f64> {
    if test_set.is_empty() {
        return Err(PacError::EmptyTestSet);
    }
    let wrong = test_set.iter().filter(|e| h.eval(e.input) != Ok(e.label)).count();
    Ok(wrong as f64 / test_set.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub sample_budget: usize,
    pub seed: u64,
}

impl LearnerConfig {
    pub fn new(epsilon: f64, delta: f64, sample_budget: usize, seed: u64) -> Result<Self> {
        let in_range = |v: f64| v > 0.0 && v < 0.5;
        if !in_range(epsilon) {
            return Err(PacError::InvalidConfig(format!("epsilon {epsilon} not in (0, 1/2)")));
        }
        if !in_range(delta) {
            return Err(PacError::InvalidConfig(format!("delta {delta} not in (0, 1/2)")));
        }
        Ok(Self { epsilon, delta, sample_budget, seed })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// `ceil((1/eps) (ln |C| + ln(1/delta)))`, the consistent-learner bound for a
/// finite class.
pub fn finite_class_sample_size(class_size: u64, epsilon: f64, delta: f64) -> usize {
    (((class_size.max(1) as f64).ln() + (1.0 / delta).ln()) / epsilon).ceil() as usize
}

pub trait Learner: Send + Sync {
    fn id(&self) -> &str;

    /// Number of examples `learn` draws for `config`.
    fn sample_size(&self, config: &LearnerConfig) -> usize;

    /// Primitives the evaluator of the returned hypotheses may use.
    fn hypothesis_primitives(&self) -> Vec<Primitive>;

    /// Produce a hypothesis from a fixed example set.
    fn fit(&self, examples: &[LabeledExample], seed: u64) -> Result<Hypothesis>;

    fn learn(&self, oracle: &mut ExampleOracle<'_>, config: &LearnerConfig) -> Result<Hypothesis> {
        let examples = draw_examples(oracle, self.sample_size(config))?;
        self.fit(&examples, config.seed)
    }
}

/// Ignores its data and returns a constant hypothesis.
#[derive(Debug, Clone)]
pub struct ConstantLearner {
    pub label: Label,
}

impl Learner for ConstantLearner {
    fn id(&self) -> &str {
        "constant"
    }

    fn sample_size(&self, _config: &LearnerConfig) -> usize {
        0
    }

    fn hypothesis_primitives(&self) -> Vec<Primitive> {
        Vec::new()
    }

    fn fit(&self, _examples: &[LabeledExample], _seed: u64) -> Result<Hypothesis> {
        Ok(constant_hypothesis(self.label))
    }
}

/// Control learner that reads the concept index off the oracle and returns
/// the true concept.
pub struct ConceptRevealingLearner {
    make: Box<dyn Fn(u64) -> Hypothesis + Send + Sync>,
    primitives: Vec<Primitive>,
}

impl ConceptRevealingLearner {
    pub fn new(primitives: Vec<Primitive>, make: impl Fn(u64) -> Hypothesis + Send + Sync + 'static) -> Self {
        Self { make: Box::new(make), primitives }
    }
}

impl Learner for ConceptRevealingLearner {
    fn id(&self) -> &str {
        "true-concept"
    }

    fn sample_size(&self, _config: &LearnerConfig) -> usize {
        0
    }

    fn hypothesis_primitives(&self) -> Vec<Primitive> {
        self.primitives.clone()
    }

    fn fit(&self, _examples: &[LabeledExample], _seed: u64) -> Result<Hypothesis> {
        Err(PacError::Learner("the true-concept learner needs an oracle that names its concept".into()))
    }

    fn learn(&self, oracle: &mut ExampleOracle<'_>, _config: &LearnerConfig) -> Result<Hypothesis> {
        let c = oracle.concept().ok_or_else(|| PacError::Learner("oracle carries no concept index".into()))?;
        Ok((self.make)(c))
    }
}

/// A concept paired with its input distribution.
pub trait LearningProblem: Send + Sync {
    fn description(&self) -> String;

    fn concept_id(&self) -> Option<u64> {
        None
    }

    /// One draw `(x, c(x))` with `x ~ D`.
    fn sample(&self, rng: &mut ChaCha8Rng) -> LabeledExample;

    /// The whole support with true labels, when `D` is uniform on it and it
    /// is small enough to enumerate.
    fn full_domain(&self) -> Option<Vec<LabeledExample>> {
        None
    }

    fn oracle(&self, seed: u64, budget: usize) -> ExampleOracle<'_> {
        let oracle = ExampleOracle::new(self.description(), seed, move |rng| self.sample(rng)).with_budget(budget);
        match self.concept_id() {
            Some(c) => oracle.with_concept(c),
            None => oracle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub seed: u64,
    pub samples_used: usize,
    /// `None` when the learner failed.
    pub empirical_error: Option<f64>,
    pub success: bool,
    /// Surrogate and trapdoor calls made while evaluating the hypothesis.
    #[serde(skip)]
    pub surrogate_calls: u64,
    #[serde(skip)]
    pub wall: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub records: Vec<TrialRecord>,
}

impl TrialSummary {
    pub fn success_frequency(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.success).count() as f64 / self.records.len() as f64
    }

    /// Mean over trials where the learner produced a hypothesis; failures
    /// count as error 1.
    pub fn mean_error(&self) -> f64 {
        if self.records.is_empty() {
            return 1.0;
        }
        self.records.iter().map(|r| r.empirical_error.unwrap_or(1.0)).sum::<f64>() / self.records.len() as f64
    }

    pub fn mean_samples(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.samples_used as f64).sum::<f64>() / self.records.len() as f64
    }
}

/// Run one independent learning trial.
pub fn run_trial(
    learner: &dyn Learner,
    problem: &dyn LearningProblem,
    config: &LearnerConfig,
    trial_id: usize,
    test_size: usize,
) -> TrialRecord {
    let started = Instant::now();
    let seed = derive_seed(config.seed, stream::TRIAL, trial_id as u64);
    let trial_config = config.with_seed(seed);
    let mut oracle = problem.oracle(derive_seed(seed, stream::TRAIN, 0), config.sample_budget);
    let mut eval_counts = CallCounts::default();
    let outcome = learner.learn(&mut oracle, &trial_config).and_then(|h| {
        let test = match problem.full_domain() {
            Some(all) => all,
            None => {
                let mut fresh = problem.oracle(derive_seed(seed, stream::TEST, 0), usize::MAX);
                draw_examples(&mut fresh, test_size)?
            }
        };
        let (err, counts) = instrument::measure(|| empirical_error(&h, &test));
        eval_counts = counts;
        err
    });
    let empirical_error = outcome.ok();
    TrialRecord {
        trial_id,
        seed,
        samples_used: oracle.call_count(),
        empirical_error,
        success: empirical_error.is_some_and(|e| e <= config.epsilon),
        surrogate_calls: eval_counts.surrogate_calls(),
        wall: started.elapsed(),
    }
}

/// Fraction of `trials` independent runs whose hypothesis has error at most
/// `config.epsilon`: exact on enumerable domains, otherwise on a fresh test
/// sample of `test_size`. Runs on the current rayon pool; records come back in
/// trial order.
pub fn pac_trial(
    learner: &dyn Learner,
    problem: &dyn LearningProblem,
    config: &LearnerConfig,
    trials: usize,
    test_size: usize,
) -> TrialSummary {
    let records = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(learner, problem, config, t, test_size.max(1)))
        .collect();
    TrialSummary { records }
}

/// Default cap on delegating-hypothesis specification length.
pub const DEFAULT_SPEC_CAP: usize = 1 << 20;

/// Evaluates `delegate` specs by re-running the wrapped learner on the
/// embedded examples.
pub struct DelegatingEvaluator {
    id: String,
    learner: Arc<dyn Learner>,
    cache: Mutex<Option<(String, Hypothesis)>>,
}

impl DelegatingEvaluator {
    pub fn new(learner: Arc<dyn Learner>) -> Self {
        Self { id: format!("delegate:{}", learner.id()), learner, cache: Mutex::new(None) }
    }

    fn inner(&self, spec: &str) -> Result<Hypothesis> {
        if let Some((cached, h)) = self.cache.lock().expect("cache lock").as_ref() {
            if cached == spec {
                return Ok(h.clone());
            }
        }
        let (kind, fields) = parse_spec(spec)?;
        if kind != "delegate" || fields.get("learner") != Some(&self.learner.id()) {
            return Err(PacError::MalformedSpec(spec.into()));
        }
        let seed: u64 = spec_field(&fields, "seed", spec)?;
        let examples = decode_examples(fields.get("examples").copied().unwrap_or(""))
            .ok_or_else(|| PacError::MalformedSpec(spec.into()))?;
        let h = self.learner.fit(&examples, seed)?;
        *self.cache.lock().expect("cache lock") = Some((spec.to_string(), h.clone()));
        Ok(h)
    }
}

impl HypothesisEvaluator for DelegatingEvaluator {
    fn id(&self) -> &str {
        &self.id
    }

    fn primitives(&self) -> Vec<Primitive> {
        self.learner.hypothesis_primitives()
    }

    fn evaluate(&self, spec: &str, x: u64) -> Result<Label> {
        self.inner(spec)?.eval(x)
    }
}

fn encode_examples(examples: &[LabeledExample]) -> String {
    examples.iter().map(|e| format!("{}:{}", e.input, e.label)).collect::<Vec<_>>().join(",")
}

fn decode_examples(s: &str) -> Option<Vec<LabeledExample>> {
    s.split(',')
        .map(|pair| {
            let (x, l) = pair.split_once(':')?;
            Some(LabeledExample::new(x.parse().ok()?, l.parse().ok()?))
        })
        .collect()
}

/// Wrap a learner and a training set into a single hypothesis whose
/// evaluation runs the learner on the embedded examples (with the embedded
/// seed) and evaluates the result.
pub fn delegate_learner_to_hypothesis(
    learner: Arc<dyn Learner>,
    examples: &[LabeledExample],
    seed: u64,
    spec_cap: usize,
) -> Result<Hypothesis> {
    if examples.is_empty() {
        return Err(PacError::EmptyExamples);
    }
    let spec = format_spec(
        "delegate",
        &[("learner", learner.id().to_string()), ("seed", seed.to_string()), ("examples", encode_examples(examples))],
    );
    let len = spec.chars().count();
    if len > spec_cap {
        return Err(PacError::SpecTooLarge { len, cap: spec_cap });
    }
    Ok(Hypothesis::new(spec, Arc::new(DelegatingEvaluator::new(learner))))
}
