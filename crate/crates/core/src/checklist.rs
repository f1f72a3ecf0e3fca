//! Executable separation checklists.
//!
//! Each criterion of the two separation theorems becomes a check over a
//! [`Decomposition`]. Checks that can be run at finite scale end up
//! `Verified` or `Failed`; complexity assumptions are recorded as
//! `AssertedAssumption` and never tested. [`compile_report`] turns the
//! statuses into a claim (`CC/QC`, `CC/QQ` or `none`).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::decomposition::{problem_for, Decomposition};
use crate::instrument::Primitive;
use crate::pac::{pac_trial, Label, Learner, LearnerConfig};
use crate::seeds::{derive_seed, rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CriterionId {
    #[serde(rename = "T1.C1")]
    T1C1,
    #[serde(rename = "T1.C2.inversion-hardness")]
    T1C2InversionHardness,
    #[serde(rename = "T1.C2.reconstruction")]
    T1C2Reconstruction,
    #[serde(rename = "T1.C3.QQ")]
    T1C3QQ,
    #[serde(rename = "T1.C3.QC")]
    T1C3QC,
    #[serde(rename = "T2.C1")]
    T2C1,
    #[serde(rename = "T2.C2")]
    T2C2,
    #[serde(rename = "T2.C3")]
    T2C3,
}

impl CriterionId {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::T1C1 => "T1.C1",
            Self::T1C2InversionHardness => "T1.C2.inversion-hardness",
            Self::T1C2Reconstruction => "T1.C2.reconstruction",
            Self::T1C3QQ => "T1.C3.QQ",
            Self::T1C3QC => "T1.C3.QC",
            Self::T2C1 => "T2.C1",
            Self::T2C2 => "T2.C2",
            Self::T2C3 => "T2.C3",
        }
    }

    /// Complexity conjectures: only ever `AssertedAssumption`.
    pub fn is_assumption(self) -> bool {
        matches!(self, Self::T1C2InversionHardness | Self::T2C1)
    }

    pub fn theorem(self) -> Theorem {
        match self {
            Self::T2C1 | Self::T2C2 | Self::T2C3 => Theorem::Two,
            _ => Theorem::One,
        }
    }
}

impl std::fmt::Display for CriterionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Verified,
    AssertedAssumption,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionStatus {
    pub id: CriterionId,
    pub status: Status,
    pub evidence: Value,
}

impl CriterionStatus {
    fn new(id: CriterionId, ok: bool, evidence: Value) -> Self {
        Self { id, status: if ok { Status::Verified } else { Status::Failed }, evidence }
    }

    /// Same outcome filed under another criterion id.
    pub fn retagged(&self, id: CriterionId) -> Self {
        Self { id, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Separation {
    #[serde(rename = "CC/QC")]
    CcQc,
    #[serde(rename = "CC/QQ")]
    CcQq,
    #[serde(rename = "none")]
    None,
}

impl Separation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CcQc => "CC/QC",
            Self::CcQq => "CC/QQ",
            Self::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub problem: String,
    pub criteria: Vec<CriterionStatus>,
    pub claimed_separation: Separation,
    pub assumptions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Theorem {
    One,
    Two,
}

impl Theorem {
    pub fn required(self) -> &'static [CriterionId] {
        match self {
            Theorem::One => &[CriterionId::T1C1, CriterionId::T1C2InversionHardness, CriterionId::T1C2Reconstruction],
            Theorem::Two => &[CriterionId::T2C1, CriterionId::T2C2, CriterionId::T2C3],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChecklistError {
    #[error("report is missing criteria: {0}")]
    IncompleteReport(String),
    #[error("criterion {0} appears more than once")]
    Duplicate(CriterionId),
    #[error("{0} is a complexity assumption and cannot be {1:?}")]
    AssumptionChecked(CriterionId, Status),
    #[error("{0} must be an assumption or a check, not {1:?}")]
    MisfiledAssumption(CriterionId, Status),
}

/// Every sampled point must satisfy `c(g(y)) = f(y)`. Returns the first
/// counterexample.
pub fn decomposition_identity_gate(d: &dyn Decomposition, points: usize, seed: u64) -> Result<(), Value> {
    let mut rng = rng_from(derive_seed(seed, stream::CONCEPT, 0));
    for k in 0..points {
        let c = d.random_concept(&mut rng);
        let y = d.sample_preimage(&mut rng);
        let ok = d.g_forward(y).and_then(|x| Ok((x, d.concept_eval(c, x)?, d.f_eval(c, y)?)));
        match ok {
            Ok((_, lhs, rhs)) if lhs == rhs => {}
            Ok((x, lhs, rhs)) => {
                return Err(json!({"point": k, "concept": c, "y": y, "x": x, "concept_label": lhs, "f_label": rhs}))
            }
            Err(e) => return Err(json!({"point": k, "concept": c, "y": y, "error": e.to_string()})),
        }
    }
    Ok(())
}

/// Criterion 1: examples `(x, c(x))` come out of the generator quickly, with
/// correct labels, and (on enumerable domains) with exactly the push-forward
/// distribution `g(D_n)`.
pub fn check_example_generation(d: &dyn Decomposition, time_budget: Duration, samples: usize, seed: u64) -> CriterionStatus {
    let id = CriterionId::T1C1;
    let samples = samples.max(1);
    let mut rng = rng_from(derive_seed(seed, stream::CONCEPT, 1));
    let concept = d.random_concept(&mut rng);
    let mut gen_rng = rng_from(derive_seed(seed, stream::TRAIN, 1));
    let mut mismatches = 0usize;
    let mut first_mismatch = Value::Null;
    let mut generated = 0usize;
    // only generator time counts against the budget, not the label checks
    let mut spent = Duration::ZERO;
    let mut within_budget = true;
    for _ in 0..samples {
        let started = Instant::now();
        let e = d.gen_example(concept, &mut gen_rng);
        spent += started.elapsed();
        generated += 1;
        if spent > time_budget {
            within_budget = false;
            break;
        }
        if d.concept_eval(concept, e.input).ok() != Some(e.label) {
            mismatches += 1;
            if first_mismatch.is_null() {
                first_mismatch = json!({"input": e.input, "label": e.label});
            }
        }
    }
    let mut evidence = json!({
        "concept": concept,
        "samples_requested": samples,
        "samples_generated": generated,
        "label_mismatches": mismatches,
        "time_budget_ms": time_budget.as_millis() as u64,
        "within_time_budget": within_budget,
    });
    if !first_mismatch.is_null() {
        evidence["first_mismatch"] = first_mismatch;
    }
    let mut ok = within_budget && mismatches == 0;
    if ok {
        if let Some(ys) = d.preimage_domain() {
            let (tv, exact_mismatches, support) = exact_generator_check(d, concept, &ys);
            evidence["domain_size"] = json!(ys.len());
            evidence["push_forward_support"] = json!(support);
            evidence["tv_distance"] = json!(tv);
            evidence["exhaustive_label_mismatches"] = json!(exact_mismatches);
            ok = tv == 0.0 && exact_mismatches == 0;
        }
    }
    CriterionStatus::new(id, ok, evidence)
}

// Enumerate D_n: compare the generator's first-coordinate histogram with the
// push-forward of D_n under g, and every generated label with the concept.
fn exact_generator_check(d: &dyn Decomposition, concept: u64, ys: &[u64]) -> (f64, usize, usize) {
    let mut generated: HashMap<u64, i64> = HashMap::new();
    let mut pushed: HashMap<u64, i64> = HashMap::new();
    let mut mismatches = 0usize;
    for &y in ys {
        let e = d.example_from_preimage(concept, y);
        *generated.entry(e.input).or_default() += 1;
        match d.g_forward(y) {
            Ok(x) => *pushed.entry(x).or_default() += 1,
            Err(_) => mismatches += 1,
        }
        if d.concept_eval(concept, e.input).ok() != Some(e.label) {
            mismatches += 1;
        }
    }
    let keys: BTreeSet<u64> = generated.keys().chain(pushed.keys()).copied().collect();
    let l1: i64 = keys
        .iter()
        .map(|k| (generated.get(k).copied().unwrap_or(0) - pushed.get(k).copied().unwrap_or(0)).abs())
        .sum();
    (l1 as f64 / (2.0 * ys.len() as f64), mismatches, pushed.len())
}

/// Criterion 2 (second part): `B` inverts `g` from true concept labels
/// within its query budget. On domains no larger than `trials` every element
/// is a target.
pub fn check_reconstruction(d: &dyn Decomposition, trials: usize, seed: u64) -> CriterionStatus {
    let id = CriterionId::T1C2Reconstruction;
    let preimages: Vec<u64> = match d.preimage_domain() {
        Some(all) if all.len() <= trials => all,
        _ => {
            let mut rng = rng_from(derive_seed(seed, stream::TARGET, 0));
            (0..trials.max(1)).map(|_| d.sample_preimage(&mut rng)).collect()
        }
    };
    let budget = d.query_budget();
    let mut failures = 0usize;
    let mut max_queries = 0usize;
    let mut first_failure = Value::Null;
    for &y in &preimages {
        let outcome = d.g_forward(y).and_then(|x| {
            // true labels c_j(x) = f_j(g^{-1}(x)), inverting once per target
            let pre = d.g_inverse_surrogate(x)?;
            let mut access = |j: u64| -> Result<Label, _> { d.f_eval(j, pre) };
            let r = d.reconstruct(x, &mut access)?;
            Ok((x, r))
        });
        let verdict = match outcome {
            Ok((x, r)) => {
                max_queries = max_queries.max(r.queries);
                if d.g_forward(r.value).ok() != Some(x) {
                    Err(json!({"target": x, "returned": r.value, "expected": y}))
                } else if r.queries > budget {
                    Err(json!({"target": x, "queries": r.queries}))
                } else {
                    Ok(())
                }
            }
            Err(e) => Err(json!({"preimage": y, "error": e.to_string()})),
        };
        if let Err(ev) = verdict {
            failures += 1;
            if first_failure.is_null() {
                first_failure = ev;
            }
        }
    }
    let mut evidence = json!({
        "targets": preimages.len(),
        "failures": failures,
        "max_queries": max_queries,
        "query_budget": budget,
    });
    if !first_failure.is_null() {
        evidence["first_failure"] = first_failure;
    }
    CriterionStatus::new(id, failures == 0, evidence)
}

/// Two-sided 95% binomial slack for a success frequency estimated from
/// `trials` runs with target failure probability `delta`.
pub fn binomial_slack(delta: f64, trials: usize) -> f64 {
    1.96 * (delta * (1.0 - delta) / trials.max(1) as f64).sqrt()
}

/// Criterion 3: the learner PAC-learns a random concept. The outcome is
/// filed under `T1.C3.QC` when the returned hypotheses are declared and
/// observed to be classical, otherwise under `T1.C3.QQ`.
pub fn check_learnability(
    d: &Arc<dyn Decomposition>,
    learner: &dyn Learner,
    config: &LearnerConfig,
    trials: usize,
    test_size: usize,
) -> CriterionStatus {
    let trials = trials.max(1);
    let concept = d.random_concept(&mut rng_from(derive_seed(config.seed, stream::CONCEPT, 2)));
    let problem = problem_for(d, concept);
    let summary = pac_trial(learner, &problem, config, trials, test_size);
    let declared = learner.hypothesis_primitives();
    let declared_classical = declared.iter().all(|p| !p.is_quantum_surrogate());
    let observed: u64 = summary.records.iter().map(|r| r.surrogate_calls).sum();
    let frequency = summary.success_frequency();
    let threshold = 1.0 - config.delta - binomial_slack(config.delta, trials);
    let id = if declared_classical { CriterionId::T1C3QC } else { CriterionId::T1C3QQ };
    let honest = !declared_classical || observed == 0;
    let evidence = json!({
        "learner": learner.id(),
        "concept": concept,
        "epsilon": config.epsilon,
        "delta": config.delta,
        "trials": trials,
        "success_frequency": frequency,
        "threshold": threshold,
        "mean_error": summary.mean_error(),
        "mean_samples": summary.mean_samples(),
        "hypothesis_primitives": declared.iter().map(|p: &Primitive| json!(p)).collect::<Vec<_>>(),
        "evaluation_surrogate_calls": observed,
        "declaration_honored": honest,
    });
    CriterionStatus::new(id, honest && frequency >= threshold, evidence)
}

/// The complexity assumptions a theorem's claim rests on.
pub fn ledger_assumptions(d: &dyn Decomposition, theorem: Theorem) -> Vec<CriterionStatus> {
    let (id, text) = match theorem {
        Theorem::One => (CriterionId::T1C2InversionHardness, d.hardness_assumption()),
        Theorem::Two => (
            CriterionId::T2C1,
            format!(
                "Heuristic hardness: inverting g for {} {} lies in BQP but outside HeurP/poly",
                d.name(),
                d.instance()
            ),
        ),
    };
    vec![CriterionStatus { id, status: Status::AssertedAssumption, evidence: Value::String(text) }]
}

fn assumption_text(s: &CriterionStatus) -> String {
    match &s.evidence {
        Value::String(t) => t.clone(),
        other => other.to_string(),
    }
}

/// Assemble the report. The theorems covered are read off the criterion ids;
/// every required criterion of each must be present.
pub fn compile_report(problem: &str, statuses: &[CriterionStatus]) -> Result<SeparationReport, ChecklistError> {
    let mut by_id: BTreeMap<CriterionId, &CriterionStatus> = BTreeMap::new();
    for s in statuses {
        if by_id.insert(s.id, s).is_some() {
            return Err(ChecklistError::Duplicate(s.id));
        }
        match (s.id.is_assumption(), s.status) {
            (true, Status::AssertedAssumption) | (false, Status::Verified | Status::Failed) => {}
            (true, st) => return Err(ChecklistError::AssumptionChecked(s.id, st)),
            (false, st) => return Err(ChecklistError::MisfiledAssumption(s.id, st)),
        }
    }
    let theorems: BTreeSet<Theorem> = by_id.keys().map(|id| id.theorem()).collect();
    if theorems.is_empty() {
        return Err(ChecklistError::IncompleteReport("no criteria given".into()));
    }
    let mut missing: Vec<&str> = Vec::new();
    for t in &theorems {
        missing.extend(t.required().iter().filter(|id| !by_id.contains_key(id)).map(|id| id.as_str()));
    }
    if theorems.contains(&Theorem::One)
        && !by_id.contains_key(&CriterionId::T1C3QC)
        && !by_id.contains_key(&CriterionId::T1C3QQ)
    {
        missing.push("T1.C3.QC or T1.C3.QQ");
    }
    if !missing.is_empty() {
        return Err(ChecklistError::IncompleteReport(missing.join(", ")));
    }

    let is = |id: CriterionId, st: Status| by_id.get(&id).is_some_and(|s| s.status == st);
    let verified = |id| is(id, Status::Verified);
    let asserted = |id| is(id, Status::AssertedAssumption);
    let any_failed = by_id.values().any(|s| s.status == Status::Failed);
    let t1_base = verified(CriterionId::T1C1)
        && verified(CriterionId::T1C2Reconstruction)
        && asserted(CriterionId::T1C2InversionHardness);
    let t2_path = verified(CriterionId::T2C2) && verified(CriterionId::T2C3) && asserted(CriterionId::T2C1);
    let claimed_separation = if any_failed {
        Separation::None
    } else if t1_base && verified(CriterionId::T1C3QC) {
        Separation::CcQc
    } else if (t1_base && verified(CriterionId::T1C3QQ)) || t2_path {
        Separation::CcQq
    } else {
        Separation::None
    };
    let criteria: Vec<CriterionStatus> = by_id.values().map(|s| (*s).clone()).collect();
    let assumptions = criteria.iter().filter(|s| s.status == Status::AssertedAssumption).map(assumption_text).collect();
    Ok(SeparationReport { problem: problem.to_string(), criteria, claimed_separation, assumptions })
}

/// Knobs for a full checklist sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChecklistOptions {
    pub theorems: Vec<Theorem>,
    pub epsilon: f64,
    pub delta: f64,
    pub learn_trials: usize,
    pub test_size: usize,
    pub generation_samples: usize,
    pub generation_budget_ms: u64,
    pub reconstruction_trials: usize,
    pub identity_points: usize,
    pub seed: u64,
}

impl Default for ChecklistOptions {
    fn default() -> Self {
        Self {
            theorems: vec![Theorem::One],
            epsilon: 0.05,
            delta: 0.05,
            learn_trials: 50,
            test_size: 2000,
            generation_samples: 1000,
            generation_budget_ms: 2000,
            reconstruction_trials: 200,
            identity_points: 200,
            seed: 0,
        }
    }
}

/// Run every criterion for the requested theorems and compile the report.
/// If the decomposition identity fails on a sampled point, every checkable
/// criterion is marked failed with that counterexample.
pub fn run_checklist(
    d: &Arc<dyn Decomposition>,
    learner: &dyn Learner,
    options: &ChecklistOptions,
) -> Result<SeparationReport, ChecklistError> {
    let problem = format!("{} {}", d.name(), d.instance());
    let config = LearnerConfig::new(options.epsilon, options.delta, usize::MAX, options.seed)
        .map_err(|e| ChecklistError::IncompleteReport(e.to_string()))?;
    let gate = decomposition_identity_gate(d.as_ref(), options.identity_points, options.seed);
    let mut statuses = Vec::new();
    let (generation, reconstruction, learnability) = match gate {
        Ok(()) => (
            check_example_generation(
                d.as_ref(),
                Duration::from_millis(options.generation_budget_ms),
                options.generation_samples,
                options.seed,
            ),
            check_reconstruction(d.as_ref(), options.reconstruction_trials, options.seed),
            check_learnability(d, learner, &config, options.learn_trials, options.test_size),
        ),
        Err(counterexample) => {
            let ev = json!({"decomposition_identity": counterexample});
            let qc = learner.hypothesis_primitives().iter().all(|p| !p.is_quantum_surrogate());
            (
                CriterionStatus::new(CriterionId::T1C1, false, ev.clone()),
                CriterionStatus::new(CriterionId::T1C2Reconstruction, false, ev.clone()),
                CriterionStatus::new(if qc { CriterionId::T1C3QC } else { CriterionId::T1C3QQ }, false, ev),
            )
        }
    };
    for t in &options.theorems {
        statuses.extend(ledger_assumptions(d.as_ref(), *t));
        match t {
            Theorem::One => {
                statuses.push(generation.clone());
                statuses.push(reconstruction.clone());
                statuses.push(learnability.clone());
            }
            Theorem::Two => {
                statuses.push(learnability.retagged(CriterionId::T2C2));
                statuses.push(reconstruction.retagged(CriterionId::T2C3));
            }
        }
    }
    compile_report(&problem, &statuses)
}

/// Fixed-width text rendering for terminals.
pub fn render_table(report: &SeparationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "problem: {}", report.problem);
    let _ = writeln!(out, "{:<26} {:<20} evidence", "criterion", "status");
    for c in &report.criteria {
        let status = match c.status {
            Status::Verified => "Verified",
            Status::AssertedAssumption => "AssertedAssumption",
            Status::Failed => "Failed",
        };
        let evidence = match &c.evidence {
            Value::String(s) => s.clone(),
            v => v.to_string(),
        };
        let _ = writeln!(out, "{:<26} {:<20} {}", c.id.as_str(), status, evidence);
    }
    let _ = writeln!(out, "claimed separation: {}", report.claimed_separation.as_str());
    for a in &report.assumptions {
        let _ = writeln!(out, "assumes: {a}");
    }
    out
}
