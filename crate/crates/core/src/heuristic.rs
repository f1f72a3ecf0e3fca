//! Finite-scale measurement of heuristic and average-case success, the
//! "don't know" wrapper, and the learner-to-inverter reduction.

use std::collections::HashMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::{problem_for, Decomposition};
use crate::pac::{Hypothesis, Label, Learner, LearnerConfig, LearningProblem, PacError};
use crate::seeds::{derive_seed, rng_from, stream};

/// Number of runs whose majority decides a randomized algorithm's answer.
pub const MAJORITY_RUNS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("need at least one sample")]
    NoSamples,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// An algorithm's answer on one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Answer(u64),
    /// The `⊥` output.
    DontKnow,
}

pub type AlgorithmFn = dyn Fn(u64, &mut ChaCha8Rng) -> Result<Verdict, String> + Send + Sync;

/// A candidate solver. Deterministic algorithms may ignore the rng.
#[derive(Clone)]
pub struct Algorithm {
    run: Arc<AlgorithmFn>,
    randomized: bool,
}

impl Algorithm {
    pub fn deterministic(f: impl Fn(u64) -> Result<Verdict, String> + Send + Sync + 'static) -> Self {
        Self { run: Arc::new(move |x, _| f(x)), randomized: false }
    }

    pub fn randomized(f: impl Fn(u64, &mut ChaCha8Rng) -> Result<Verdict, String> + Send + Sync + 'static) -> Self {
        Self { run: Arc::new(f), randomized: true }
    }

    pub fn is_randomized(&self) -> bool {
        self.randomized
    }

    pub fn run(&self, x: u64, rng: &mut ChaCha8Rng) -> Result<Verdict, String> {
        (self.run)(x, rng)
    }
}

/// `(L, D_n)`: ground truth plus a seeded input distribution.
pub struct DistributionalProblem {
    ground_truth: Box<dyn Fn(u64) -> u64 + Send + Sync>,
    sampler: Box<dyn Fn(&mut ChaCha8Rng) -> u64 + Send + Sync>,
    pub domain_size: Option<u64>,
}

impl DistributionalProblem {
    pub fn new(
        ground_truth: impl Fn(u64) -> u64 + Send + Sync + 'static,
        sampler: impl Fn(&mut ChaCha8Rng) -> u64 + Send + Sync + 'static,
    ) -> Self {
        Self { ground_truth: Box::new(ground_truth), sampler: Box::new(sampler), domain_size: None }
    }

    pub fn with_domain_size(mut self, size: u64) -> Self {
        self.domain_size = Some(size);
        self
    }

    pub fn truth(&self, x: u64) -> u64 {
        (self.ground_truth)(x)
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        (self.sampler)(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicReport {
    pub samples: usize,
    pub correct: usize,
    pub errors: usize,
    pub dont_know: usize,
    /// Inputs on which the algorithm raised; already counted in `errors`.
    pub exceptions: usize,
    pub correct_rate: f64,
    pub error_rate: f64,
    pub dont_know_rate: f64,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    correct: usize,
    errors: usize,
    dont_know: usize,
    exceptions: usize,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            correct: self.correct + o.correct,
            errors: self.errors + o.errors,
            dont_know: self.dont_know + o.dont_know,
            exceptions: self.exceptions + o.exceptions,
        }
    }
}

enum Outcome {
    Verdict(Verdict),
    Raised,
}

// Majority over MAJORITY_RUNS runs; without a strict majority the answer
// counts as wrong.
fn decide(alg: &Algorithm, x: u64, seed: u64) -> Outcome {
    if !alg.is_randomized() {
        return match alg.run(x, &mut rng_from(seed)) {
            Ok(v) => Outcome::Verdict(v),
            Err(_) => Outcome::Raised,
        };
    }
    let mut votes: HashMap<Option<Verdict>, usize> = HashMap::new();
    for k in 0..MAJORITY_RUNS {
        let v = alg.run(x, &mut rng_from(derive_seed(seed, stream::TRIAL, k as u64))).ok();
        *votes.entry(v).or_default() += 1;
    }
    match votes.into_iter().find(|(_, n)| 2 * n > MAJORITY_RUNS) {
        Some((Some(v), _)) => Outcome::Verdict(v),
        Some((None, _)) => Outcome::Raised,
        None => Outcome::Verdict(Verdict::DontKnow),
    }
}

/// Estimate how often `alg` answers correctly, answers wrongly, or says
/// "don't know" on inputs drawn from `problem`.
pub fn heuristic_success_rate(
    alg: &Algorithm,
    problem: &DistributionalProblem,
    samples: usize,
    seed: u64,
) -> Result<HeuristicReport, HarnessError> {
    if samples == 0 {
        return Err(HarnessError::NoSamples);
    }
    let tally = (0..samples)
        .into_par_iter()
        .map(|k| {
            let x = problem.sample(&mut rng_from(derive_seed(seed, stream::TARGET, k as u64)));
            let mut t = Tally::default();
            match decide(alg, x, derive_seed(seed, stream::BLIND, k as u64)) {
                Outcome::Verdict(Verdict::DontKnow) => t.dont_know += 1,
                Outcome::Verdict(Verdict::Answer(y)) if y == problem.truth(x) => t.correct += 1,
                Outcome::Verdict(_) => t.errors += 1,
                Outcome::Raised => {
                    t.errors += 1;
                    t.exceptions += 1;
                }
            }
            t
        })
        .reduce(Tally::default, Tally::merge);
    let n = samples as f64;
    Ok(HeuristicReport {
        samples,
        correct: tally.correct,
        errors: tally.errors,
        dont_know: tally.dont_know,
        exceptions: tally.exceptions,
        correct_rate: tally.correct as f64 / n,
        error_rate: tally.errors as f64 / n,
        dont_know_rate: tally.dont_know as f64 / n,
    })
}

/// Check every answer with the forward map and replace anything that does
/// not verify (including raised errors) with "don't know".
pub fn wrap_err_to_dont_know(
    alg: Algorithm,
    forward_g: impl Fn(u64) -> Option<u64> + Send + Sync + 'static,
) -> Algorithm {
    let randomized = alg.is_randomized();
    let run = move |x: u64, rng: &mut ChaCha8Rng| match alg.run(x, rng) {
        Ok(Verdict::Answer(y)) if forward_g(y) == Some(x) => Ok(Verdict::Answer(y)),
        _ => Ok(Verdict::DontKnow),
    };
    Algorithm { run: Arc::new(run), randomized }
}

/// Settings for [`learner_to_inverter`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverterConfig {
    /// Target failure probability of one inversion attempt.
    pub epsilon: f64,
    pub delta: f64,
    /// Blinded attempts before giving up.
    pub attempts: usize,
    pub seed: u64,
}

impl InverterConfig {
    pub fn new(epsilon: f64, delta: f64, attempts: usize, seed: u64) -> Result<Self, HarnessError> {
        if !(epsilon > 0.0 && epsilon < 0.5 && delta > 0.0 && delta < 0.5) {
            return Err(HarnessError::InvalidArgument(format!("need 0 < epsilon, delta < 1/2, got {epsilon}, {delta}")));
        }
        if attempts == 0 {
            return Err(HarnessError::InvalidArgument("attempts must be at least 1".into()));
        }
        Ok(Self { epsilon, delta, attempts, seed })
    }

    /// Per-concept accuracy and confidence after the union bound over the
    /// `queries` concepts and the single evaluation point each one sees.
    pub fn per_concept(&self, queries: usize) -> LearnerConfig {
        let k = queries.max(1) as f64;
        LearnerConfig {
            epsilon: self.epsilon / k,
            delta: self.delta / k,
            sample_budget: usize::MAX,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    /// `g^{-1}(x)` when some attempt verified.
    pub value: Option<u64>,
    pub attempts: usize,
    pub concepts_trained: usize,
    pub examples_used: usize,
    /// Why the last failed attempt failed.
    pub last_failure: Option<String>,
}

/// Turn a learner into an inverter for `g`, following the reduction: learn
/// a hypothesis for each concept that `B` asks about, answer `B`'s queries
/// with those hypotheses, and check the result with `g`.
///
/// Each attempt first blinds the target, so the concepts queried and the
/// point they are evaluated at are fresh for every attempt. Hypotheses are
/// trained once per concept and reused across attempts.
pub fn learner_to_inverter(
    learner: &dyn Learner,
    decomposition: &Arc<dyn Decomposition>,
    x: u64,
    config: &InverterConfig,
) -> Inversion {
    let d = decomposition.as_ref();
    let per_concept = config.per_concept(d.query_budget());
    let mut trained: HashMap<u64, Result<Hypothesis, PacError>> = HashMap::new();
    let mut examples_used = 0usize;
    let mut last_failure = None;
    let mut blind_rng = rng_from(derive_seed(config.seed, stream::BLIND, x));
    for attempt in 0..config.attempts {
        let (x_blind, r) = match d.blind(x, &mut blind_rng) {
            Ok(b) => b,
            Err(e) => {
                last_failure = Some(e.to_string());
                break;
            }
        };
        let mut access = |concept: u64| -> Result<Label, crate::error::ConceptError> {
            let h = trained.entry(concept).or_insert_with(|| {
                let problem = problem_for(decomposition, concept);
                let seed = derive_seed(config.seed, stream::CONCEPT, concept);
                let mut oracle = problem.oracle(derive_seed(seed, stream::TRAIN, 0), per_concept.sample_budget);
                let h = learner.learn(&mut oracle, &per_concept.with_seed(seed));
                examples_used += oracle.call_count();
                h
            });
            match h {
                Ok(h) => Ok(h.eval(x_blind)?),
                Err(e) => Err(e.clone().into()),
            }
        };
        match d.reconstruct(x_blind, &mut access) {
            Ok(rec) => {
                let value = d.unblind(rec.value, r);
                if d.g_forward(value).ok() == Some(x) {
                    return Inversion {
                        value: Some(value),
                        attempts: attempt + 1,
                        concepts_trained: trained.len(),
                        examples_used,
                        last_failure: None,
                    };
                }
                last_failure = Some(format!("unblinded answer {value} does not map to {x}"));
            }
            Err(e) => last_failure = Some(e.to_string()),
        }
    }
    Inversion { value: None, attempts: config.attempts, concepts_trained: trained.len(), examples_used, last_failure }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub targets: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_attempts: f64,
    pub mean_examples: f64,
}

/// Run the reduction on `targets` random images `g(y)`, `y ~ D_n`, and
/// count the inversions that return the right preimage.
pub fn inversion_success_rate(
    learner: &dyn Learner,
    decomposition: &Arc<dyn Decomposition>,
    targets: usize,
    config: &InverterConfig,
) -> Result<InversionReport, HarnessError> {
    if targets == 0 {
        return Err(HarnessError::NoSamples);
    }
    let runs: Vec<(bool, usize, usize)> = (0..targets)
        .into_par_iter()
        .map(|t| {
            let y = decomposition.sample_preimage(&mut rng_from(derive_seed(config.seed, stream::TARGET, t as u64)));
            let Ok(x) = decomposition.g_forward(y) else {
                return (false, 0, 0);
            };
            let run_config = InverterConfig { seed: derive_seed(config.seed, stream::TRIAL, t as u64), ..*config };
            let inv = learner_to_inverter(learner, decomposition, x, &run_config);
            (inv.value == Some(y), inv.attempts, inv.examples_used)
        })
        .collect();
    let n = targets as f64;
    let successes = runs.iter().filter(|r| r.0).count();
    Ok(InversionReport {
        targets,
        successes,
        success_rate: successes as f64 / n,
        mean_attempts: runs.iter().map(|r| r.1 as f64).sum::<f64>() / n,
        mean_examples: runs.iter().map(|r| r.2 as f64).sum::<f64>() / n,
    })
}
