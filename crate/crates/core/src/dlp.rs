//! Discrete-logarithm concept class.
//!
//! For a safe prime `p` and generator `a`, concept `c_i` labels `x` with `+1`
//! when `log_a x` lies in the half-circle `[i, i + (p-3)/2]` of exponents and
//! `-1` otherwise. Membership wraps modulo `p - 1`, so every concept labels
//! exactly half the domain positive.
//!
//! The class decomposes as `c_i = f_i ∘ g^{-1}` with `g(y) = a^y mod p` and
//! `f_i` the interval labeler on exponents. Examples are generated forward
//! (`y -> (g(y), f_i(y))`) without ever taking a logarithm.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConceptError;
use crate::instrument::Primitive;
use crate::numtheory::{self, mod_mul, mod_pow_unchecked, DlogSolver, PrimeModulus};
use crate::pac::{
    self, finite_class_sample_size, format_spec, parse_spec, spec_field, Hypothesis, HypothesisEvaluator, Label,
    LabeledExample, Learner, LearnerConfig, LearningProblem, PacError, EXACT_ENUMERATION_LIMIT,
};

type Result<T> = std::result::Result<T, ConceptError>;

/// Public parameters `(p, a)`. The discrete-log surrogate is built lazily and
/// shared between clones.
#[derive(Clone)]
pub struct DlpInstance {
    modulus: PrimeModulus,
    generator: u64,
    seed: Option<u64>,
    solver: Arc<OnceLock<DlogSolver>>,
}

impl std::fmt::Debug for DlpInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DlpInstance").field("p", &self.p()).field("a", &self.generator).finish()
    }
}

impl PartialEq for DlpInstance {
    fn eq(&self, other: &Self) -> bool {
        self.modulus == other.modulus && self.generator == other.generator
    }
}

/// On-disk form: `{p, a, bits, seed}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DlpInstanceFile {
    pub p: u64,
    pub a: u64,
    pub bits: u32,
    pub seed: Option<u64>,
}

impl DlpInstance {
    pub fn generate(bits: u32, seed: u64) -> Result<Self> {
        let (modulus, generator) = numtheory::generate_dlp_instance(bits, seed)?;
        Ok(Self { modulus, generator, seed: Some(seed), solver: Arc::default() })
    }

    pub fn new(p: u64, a: u64) -> Result<Self> {
        let modulus = PrimeModulus::new(p)?;
        if !modulus.is_generator(a) {
            return Err(numtheory::NumberTheoryError::NotGenerator { p, a }.into());
        }
        Ok(Self { modulus, generator: a, seed: None, solver: Arc::default() })
    }

    pub fn from_file(file: &DlpInstanceFile) -> Result<Self> {
        let mut inst = Self::new(file.p, file.a)?;
        if inst.bits() != file.bits {
            return Err(ConceptError::Inconsistent(format!("p = {} has {} bits, file says {}", file.p, inst.bits(), file.bits)));
        }
        inst.seed = file.seed;
        Ok(inst)
    }

    pub fn to_file(&self) -> DlpInstanceFile {
        DlpInstanceFile { p: self.p(), a: self.generator, bits: self.bits(), seed: self.seed }
    }

    pub fn p(&self) -> u64 {
        self.modulus.p()
    }

    pub fn generator(&self) -> u64 {
        self.generator
    }

    pub fn modulus(&self) -> &PrimeModulus {
        &self.modulus
    }

    pub fn bits(&self) -> u32 {
        self.modulus.bits()
    }

    /// Size of the exponent circle, `p - 1`.
    pub fn order(&self) -> u64 {
        self.modulus.order()
    }

    pub fn half_width(&self) -> u64 {
        (self.p() - 3) / 2
    }

    pub fn solver(&self) -> &DlogSolver {
        self.solver.get_or_init(|| DlogSolver::new(&self.modulus, self.generator).expect("generator validated at construction"))
    }

    /// Surrogate for the quantum discrete-log algorithm.
    pub fn log(&self, x: u64) -> Result<u64> {
        Ok(self.solver().log(x)?)
    }

    /// Number of concepts, `|C_n| = p - 1`.
    pub fn class_size(&self) -> u64 {
        self.order()
    }

    fn check_exponent(&self, y: u64) -> Result<()> {
        if y >= self.order() {
            return Err(ConceptError::Domain { value: y, domain: format!("exponents 0..={}", self.order() - 1) });
        }
        Ok(())
    }

    fn check_element(&self, x: u64) -> Result<()> {
        if x == 0 || x >= self.p() {
            return Err(ConceptError::Domain { value: x, domain: format!("Z_{}^*", self.p()) });
        }
        Ok(())
    }
}

/// Concept index `i` in `1..=p-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DlpConcept {
    i: u64,
}

impl DlpConcept {
    pub fn new(inst: &DlpInstance, i: u64) -> Result<Self> {
        if i == 0 || i >= inst.p() {
            return Err(ConceptError::Domain { value: i, domain: format!("concept indices 1..={}", inst.p() - 1) });
        }
        Ok(Self { i })
    }

    pub fn index(&self) -> u64 {
        self.i
    }
}

/// `f_i` on exponents: `+1` iff `(y - i) mod (p-1) <= (p-3)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalLabeler {
    i: u64,
    half_width: u64,
    order: u64,
}

impl IntervalLabeler {
    pub fn new(inst: &DlpInstance, i: u64) -> Self {
        Self { i: i % inst.order(), half_width: inst.half_width(), order: inst.order() }
    }

    pub fn half_width(&self) -> u64 {
        self.half_width
    }

    pub fn label(&self, y: u64) -> Result<Label> {
        if y >= self.order {
            return Err(ConceptError::Domain { value: y, domain: format!("exponents 0..={}", self.order - 1) });
        }
        Ok(self.label_unchecked(y))
    }

    #[inline]
    fn label_unchecked(&self, y: u64) -> Label {
        let offset = (y + self.order - self.i) % self.order;
        if offset <= self.half_width {
            1
        } else {
            -1
        }
    }
}

pub fn f_interval(labeler: &IntervalLabeler, y: u64) -> Result<Label> {
    labeler.label(y)
}

/// `g(y) = a^y mod p`.
pub fn g_forward(inst: &DlpInstance, y: u64) -> Result<u64> {
    inst.check_exponent(y)?;
    Ok(mod_pow_unchecked(inst.generator, y, inst.p()))
}

/// Ground truth `c_i(x) = f_i(log_a x)`, via the discrete-log surrogate.
pub fn concept_eval(inst: &DlpInstance, c: DlpConcept, x: u64) -> Result<Label> {
    inst.check_element(x)?;
    IntervalLabeler::new(inst, c.i).label(inst.log(x)?)
}

/// `(g(y), f_i(y))` for uniform `y`; never takes a logarithm.
pub fn gen_example(inst: &DlpInstance, c: DlpConcept, rng: &mut ChaCha8Rng) -> LabeledExample {
    let y = rng.gen_range(0..inst.order());
    let label = IntervalLabeler::new(inst, c.i).label_unchecked(y);
    LabeledExample::new(mod_pow_unchecked(inst.generator, y, inst.p()), label)
}

/// Concept index whose interval starts at exponent `s`.
pub fn index_for_start(inst: &DlpInstance, s: u64) -> u64 {
    if s.is_multiple_of(inst.order()) {
        inst.order()
    } else {
        s % inst.order()
    }
}

/// Result of the binary-search reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reconstruction {
    pub value: u64,
    pub queries: usize,
}

/// Upper bound on concept queries: `ceil(log2 p) + 2`.
pub fn reconstruction_query_budget(inst: &DlpInstance) -> usize {
    (64 - (inst.p() - 1).leading_zeros()) as usize + 2
}

/// Recover `log_a x` from concept labels at `x` by halving a window of
/// candidate exponents.
///
/// The first query (the interval starting at 0) places the logarithm in one
/// half of the exponent circle. Each later query uses the interval starting at
/// the window midpoint, whose left boundary splits the window and whose right
/// boundary lies outside it. The answer is checked with one forward
/// exponentiation.
pub fn reconstruct_log_via_concepts(
    inst: &DlpInstance,
    x: u64,
    mut eval_access: impl FnMut(u64) -> Result<Label>,
) -> Result<Reconstruction> {
    inst.check_element(x)?;
    let half = inst.order() / 2;
    let mut queries = 0usize;
    let mut ask = |start: u64| {
        queries += 1;
        eval_access(index_for_start(inst, start))
    };
    let (mut lo, mut width) = if ask(0)? > 0 { (0, half) } else { (half, half) };
    while width > 1 {
        let mid = lo + width / 2;
        if ask(mid)? > 0 {
            width = lo + width - mid;
            lo = mid;
        } else {
            width = mid - lo;
        }
    }
    if mod_pow_unchecked(inst.generator, lo, inst.p()) != x {
        return Err(ConceptError::Inconsistent(format!("answers point to exponent {lo}, but a^{lo} != {x} mod {}", inst.p())));
    }
    Ok(Reconstruction { value: lo, queries })
}

/// Evaluates `dlp-interval i=<i>` specs as `f_i(log_a x)`. Needs the
/// discrete-log surrogate, so these hypotheses are quantum-evaluatable only.
#[derive(Debug, Clone)]
pub struct DlpIntervalEvaluator {
    inst: DlpInstance,
}

impl DlpIntervalEvaluator {
    pub fn new(inst: DlpInstance) -> Self {
        Self { inst }
    }
}

impl HypothesisEvaluator for DlpIntervalEvaluator {
    fn id(&self) -> &str {
        "dlp-interval"
    }

    fn primitives(&self) -> Vec<Primitive> {
        vec![Primitive::ModularArithmetic, Primitive::DiscreteLogSurrogate]
    }

    fn evaluate(&self, spec: &str, x: u64) -> pac::Result<Label> {
        let (kind, fields) = parse_spec(spec)?;
        if kind != "dlp-interval" {
            return Err(PacError::MalformedSpec(spec.into()));
        }
        let i: u64 = spec_field(&fields, "i", spec)?;
        let c = DlpConcept::new(&self.inst, i)?;
        Ok(concept_eval(&self.inst, c, x)?)
    }
}

pub fn interval_hypothesis(evaluator: &Arc<DlpIntervalEvaluator>, i: u64) -> Hypothesis {
    Hypothesis::new(format_spec("dlp-interval", &[("i", i.to_string())]), evaluator.clone())
}

/// Quantum-surrogate learner: take the discrete log of every example, then
/// fit the half-circle interval with the fewest disagreements.
pub struct SurrogateDlpLearner {
    inst: DlpInstance,
    evaluator: Arc<DlpIntervalEvaluator>,
    sample_size: Option<usize>,
}

impl SurrogateDlpLearner {
    pub fn new(inst: DlpInstance) -> Self {
        let evaluator = Arc::new(DlpIntervalEvaluator::new(inst.clone()));
        Self { inst, evaluator, sample_size: None }
    }

    /// Fix `m` instead of using the finite-class bound.
    pub fn with_sample_size(mut self, m: usize) -> Self {
        self.sample_size = Some(m);
        self
    }

    /// Interval start minimizing disagreements on `(exponent, label)` pairs,
    /// ties broken toward the smallest concept index.
    pub fn fit_exponents(&self, labeled: &[(u64, Label)]) -> u64 {
        fit_interval_start(&self.inst, labeled)
    }
}

fn count_in_arc(sorted: &[u64], start: u64, len: u64, order: u64) -> usize {
    let count = |lo: u64, hi_incl: u64| sorted.partition_point(|&y| y <= hi_incl) - sorted.partition_point(|&y| y < lo);
    let end = start + len - 1;
    if end < order {
        count(start, end)
    } else {
        count(start, order - 1) + count(0, end - order)
    }
}

/// Largest circle the dense sweep will allocate for.
const DENSE_FIT_LIMIT: u64 = 1 << 22;

pub(crate) fn fit_interval_start(inst: &DlpInstance, labeled: &[(u64, Label)]) -> u64 {
    let order = inst.order();
    if order <= DENSE_FIT_LIMIT && order <= 8 * labeled.len() as u64 {
        fit_interval_start_dense(inst, labeled)
    } else {
        fit_interval_start_sparse(inst, labeled)
    }
}

// Sliding window over every start: err(s) = #positives + sum over the arc of
// (negatives - positives) at each exponent.
fn fit_interval_start_dense(inst: &DlpInstance, labeled: &[(u64, Label)]) -> u64 {
    let order = inst.order() as usize;
    let len = inst.half_width() as usize + 1;
    let mut w = vec![0i64; order];
    for &(y, l) in labeled {
        w[y as usize] += if l > 0 { -1 } else { 1 };
    }
    // start 0 is concept index p-1, the last in tie-break order
    let at_zero: i64 = w[..len].iter().sum();
    let mut window = at_zero;
    let mut best = (i64::MAX, 1u64);
    for s in 1..order {
        window += w[(s + len - 1) % order] - w[s - 1];
        if window < best.0 {
            best = (window, s as u64);
        }
    }
    if at_zero < best.0 {
        return order as u64;
    }
    best.1
}

fn fit_interval_start_sparse(inst: &DlpInstance, labeled: &[(u64, Label)]) -> u64 {
    let order = inst.order();
    let half = inst.half_width();
    let mut pos: Vec<u64> = labeled.iter().filter(|(_, l)| *l > 0).map(|(y, _)| *y).collect();
    let mut neg: Vec<u64> = labeled.iter().filter(|(_, l)| *l <= 0).map(|(y, _)| *y).collect();
    pos.sort_unstable();
    neg.sort_unstable();
    // The disagreement count is constant between breakpoints, where some
    // example enters (start = y - half) or leaves (start = y + 1) the arc.
    let mut candidates: Vec<u64> = Vec::with_capacity(2 * labeled.len() + 1);
    candidates.push(1);
    for &(y, _) in labeled {
        candidates.push(index_for_start(inst, y + order - half));
        candidates.push(index_for_start(inst, y + 1));
    }
    candidates.sort_unstable();
    candidates.dedup();
    let len = half + 1;
    candidates
        .into_iter()
        .map(|i| {
            let start = i % order;
            let err = (pos.len() - count_in_arc(&pos, start, len, order)) + count_in_arc(&neg, start, len, order);
            (err, i)
        })
        .min()
        .map(|(_, i)| i)
        .unwrap_or(1)
}

impl Learner for SurrogateDlpLearner {
    fn id(&self) -> &str {
        "dlp-surrogate"
    }

    fn sample_size(&self, config: &LearnerConfig) -> usize {
        self.sample_size
            .unwrap_or_else(|| finite_class_sample_size(self.inst.class_size(), config.epsilon, config.delta))
    }

    fn hypothesis_primitives(&self) -> Vec<Primitive> {
        self.evaluator.primitives()
    }

    fn fit(&self, examples: &[LabeledExample], _seed: u64) -> pac::Result<Hypothesis> {
        let labeled = examples
            .iter()
            .map(|e| Ok((self.inst.log(e.input)?, e.label)))
            .collect::<Result<Vec<_>>>()?;
        Ok(interval_hypothesis(&self.evaluator, self.fit_exponents(&labeled)))
    }
}

/// `EX(c_i, uniform push-forward)` for one concept.
#[derive(Debug, Clone)]
pub struct DlpProblem {
    pub inst: DlpInstance,
    pub concept: DlpConcept,
}

impl LearningProblem for DlpProblem {
    fn description(&self) -> String {
        format!("dlp p={} a={} i={}", self.inst.p(), self.inst.generator(), self.concept.i)
    }

    fn concept_id(&self) -> Option<u64> {
        Some(self.concept.i)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> LabeledExample {
        gen_example(&self.inst, self.concept, rng)
    }

    fn full_domain(&self) -> Option<Vec<LabeledExample>> {
        if self.inst.p() > EXACT_ENUMERATION_LIMIT {
            return None;
        }
        // walk the exponent circle instead of calling the surrogate per point
        let labeler = IntervalLabeler::new(&self.inst, self.concept.i);
        let mut out = Vec::with_capacity(self.inst.order() as usize);
        let mut x = 1u64;
        for y in 0..self.inst.order() {
            out.push(LabeledExample::new(x, labeler.label_unchecked(y)));
            x = mod_mul(x, self.inst.generator, self.inst.p());
        }
        out.sort_unstable_by_key(|e| e.input);
        Some(out)
    }
}
