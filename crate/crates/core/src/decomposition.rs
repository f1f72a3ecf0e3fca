//! Concept decompositions `c(x) = f(g^{-1}(x))`.
//!
//! A [`Decomposition`] bundles the forward map `g`, a surrogate inverse, the
//! labeler family `f`, the example generator and the reconstruction
//! algorithm `B` for one concept class instance. The checklist and the
//! learner-to-inverter reduction only talk to this trait, which lets tests
//! swap in deliberately broken variants through [`Sabotaged`].

use std::sync::{Arc, OnceLock};
use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cuberoot::{self, BitConcept, RsaInstance, RsaPublic};
use crate::dlp::{self, DlpConcept, DlpInstance, IntervalLabeler};
use crate::error::ConceptError;
use crate::instrument::Primitive;
use crate::numtheory::{self, mod_inverse, mod_mul, mod_pow_unchecked};
use crate::pac::{Hypothesis, Label, LabeledExample, LearningProblem};

type Result<T> = std::result::Result<T, ConceptError>;

/// Domains at or below this size are enumerated exactly.
pub const ENUMERATION_LIMIT: u64 = 10_000;

/// Output of `B`: the recovered preimage and the number of concept queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reconstruction {
    pub value: u64,
    pub queries: usize,
}

pub trait Decomposition: Send + Sync {
    /// Short problem name, `dlp` or `cuberoot`.
    fn name(&self) -> &str;

    /// Description of the instance parameters.
    fn instance(&self) -> String;

    /// The complexity assumption that makes `g` hard to invert classically.
    fn hardness_assumption(&self) -> String;

    fn class_size(&self) -> u64;

    fn random_concept(&self, rng: &mut ChaCha8Rng) -> u64;

    /// `y ~ D_n`.
    fn sample_preimage(&self, rng: &mut ChaCha8Rng) -> u64;

    /// Support of `D_n` (uniform on it) when small enough to enumerate.
    fn preimage_domain(&self) -> Option<Vec<u64>>;

    fn g_forward(&self, y: u64) -> Result<u64>;

    /// Stand-in for the quantum inverse.
    fn g_inverse_surrogate(&self, x: u64) -> Result<u64>;

    fn f_eval(&self, concept: u64, y: u64) -> Result<Label>;

    /// Ground-truth concept label, allowed to use the surrogate or trapdoor.
    fn concept_eval(&self, concept: u64, x: u64) -> Result<Label>;

    /// `(g(y), f(y))`, the deterministic core of the example generator.
    fn example_from_preimage(&self, concept: u64, y: u64) -> LabeledExample;

    fn gen_example(&self, concept: u64, rng: &mut ChaCha8Rng) -> LabeledExample {
        let y = self.sample_preimage(rng);
        self.example_from_preimage(concept, y)
    }

    /// Algorithm `B`: recover `g^{-1}(x)` from concept labels at `x`.
    fn reconstruct(&self, x: u64, access: &mut dyn FnMut(u64) -> Result<Label>) -> Result<Reconstruction>;

    /// Maximum number of concept queries `reconstruct` may make.
    fn query_budget(&self) -> usize;

    /// Random self-reduction: map `x` to a uniformly distributed `x'` plus
    /// the randomness needed to map `g^{-1}(x')` back to `g^{-1}(x)`.
    fn blind(&self, x: u64, rng: &mut ChaCha8Rng) -> Result<(u64, u64)>;

    fn unblind(&self, value: u64, r: u64) -> u64;

    /// The hypothesis that is exactly concept `concept`.
    fn concept_hypothesis(&self, concept: u64) -> Hypothesis;

    fn concept_hypothesis_primitives(&self) -> Vec<Primitive>;
}

/// `EX(c, g(D_n))` driven through a decomposition's own generator.
#[derive(Clone)]
pub struct DecompositionProblem {
    pub decomposition: Arc<dyn Decomposition>,
    pub concept: u64,
}

impl LearningProblem for DecompositionProblem {
    fn description(&self) -> String {
        format!("{} {} concept={}", self.decomposition.name(), self.decomposition.instance(), self.concept)
    }

    fn concept_id(&self) -> Option<u64> {
        Some(self.concept)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> LabeledExample {
        let y = self.decomposition.sample_preimage(rng);
        self.decomposition.example_from_preimage(self.concept, y)
    }

    fn full_domain(&self) -> Option<Vec<LabeledExample>> {
        let ys = self.decomposition.preimage_domain()?;
        if ys.len() as u64 > crate::pac::EXACT_ENUMERATION_LIMIT {
            return None;
        }
        let mut out: Vec<LabeledExample> =
            ys.into_iter().map(|y| self.decomposition.example_from_preimage(self.concept, y)).collect();
        out.sort_unstable_by_key(|e| e.input);
        Some(out)
    }
}

pub fn problem_for(d: &Arc<dyn Decomposition>, concept: u64) -> DecompositionProblem {
    DecompositionProblem { decomposition: d.clone(), concept }
}

/// Discrete-log decomposition: `g(y) = a^y mod p`, `f_i` the half-circle
/// labeler, `B` the binary search over interval starts.
#[derive(Debug, Clone)]
pub struct DlpDecomposition {
    inst: DlpInstance,
    evaluator: Arc<dlp::DlpIntervalEvaluator>,
}

impl DlpDecomposition {
    pub fn new(inst: DlpInstance) -> Self {
        let evaluator = Arc::new(dlp::DlpIntervalEvaluator::new(inst.clone()));
        Self { inst, evaluator }
    }

    pub fn instance_ref(&self) -> &DlpInstance {
        &self.inst
    }
}

impl Decomposition for DlpDecomposition {
    fn name(&self) -> &str {
        "dlp"
    }

    fn instance(&self) -> String {
        format!("p={} a={}", self.inst.p(), self.inst.generator())
    }

    fn hardness_assumption(&self) -> String {
        format!(
            "Discrete Logarithm Assumption: no classical polynomial-time algorithm computes log_{} x mod {} \
             on a 1/2 + 1/poly(n) fraction of inputs x",
            self.inst.generator(),
            self.inst.p()
        )
    }

    fn class_size(&self) -> u64 {
        self.inst.class_size()
    }

    fn random_concept(&self, rng: &mut ChaCha8Rng) -> u64 {
        rng.gen_range(1..self.inst.p())
    }

    fn sample_preimage(&self, rng: &mut ChaCha8Rng) -> u64 {
        rng.gen_range(0..self.inst.order())
    }

    fn preimage_domain(&self) -> Option<Vec<u64>> {
        (self.inst.order() <= ENUMERATION_LIMIT).then(|| (0..self.inst.order()).collect())
    }

    fn g_forward(&self, y: u64) -> Result<u64> {
        dlp::g_forward(&self.inst, y)
    }

    fn g_inverse_surrogate(&self, x: u64) -> Result<u64> {
        if x == 0 || x >= self.inst.p() {
            return Err(ConceptError::Domain { value: x, domain: format!("Z_{}^*", self.inst.p()) });
        }
        self.inst.log(x)
    }

    fn f_eval(&self, concept: u64, y: u64) -> Result<Label> {
        let c = DlpConcept::new(&self.inst, concept)?;
        IntervalLabeler::new(&self.inst, c.index()).label(y)
    }

    fn concept_eval(&self, concept: u64, x: u64) -> Result<Label> {
        dlp::concept_eval(&self.inst, DlpConcept::new(&self.inst, concept)?, x)
    }

    fn example_from_preimage(&self, concept: u64, y: u64) -> LabeledExample {
        let label = IntervalLabeler::new(&self.inst, concept).label(y).unwrap_or(0);
        LabeledExample::new(mod_pow_unchecked(self.inst.generator(), y, self.inst.p()), label)
    }

    fn reconstruct(&self, x: u64, access: &mut dyn FnMut(u64) -> Result<Label>) -> Result<Reconstruction> {
        let r = dlp::reconstruct_log_via_concepts(&self.inst, x, access)?;
        Ok(Reconstruction { value: r.value, queries: r.queries })
    }

    fn query_budget(&self) -> usize {
        dlp::reconstruction_query_budget(&self.inst)
    }

    fn blind(&self, x: u64, rng: &mut ChaCha8Rng) -> Result<(u64, u64)> {
        let r = rng.gen_range(0..self.inst.order());
        let x_blind = mod_mul(x, mod_pow_unchecked(self.inst.generator(), r, self.inst.p()), self.inst.p());
        Ok((x_blind, r))
    }

    fn unblind(&self, value: u64, r: u64) -> u64 {
        let order = self.inst.order();
        (value % order + order - r % order) % order
    }

    fn concept_hypothesis(&self, concept: u64) -> Hypothesis {
        dlp::interval_hypothesis(&self.evaluator, concept)
    }

    fn concept_hypothesis_primitives(&self) -> Vec<Primitive> {
        vec![Primitive::ModularArithmetic, Primitive::DiscreteLogSurrogate]
    }
}

/// Cube-root decomposition: `g(z) = z^3 mod N`, `f_i` the `i`-th bit, `B`
/// the bit-by-bit assembly.
#[derive(Debug, Clone)]
pub struct CubeRootDecomposition {
    inst: RsaInstance,
    public: RsaPublic,
    evaluator: Arc<cuberoot::RsaBitEvaluator>,
    // d* as recovered by the factoring surrogate
    surrogate_d: Arc<OnceLock<std::result::Result<u64, ConceptError>>>,
}

impl CubeRootDecomposition {
    pub fn new(inst: RsaInstance) -> Self {
        let public = inst.public();
        Self { inst, public, evaluator: Arc::new(cuberoot::RsaBitEvaluator::new(public)), surrogate_d: Arc::default() }
    }

    pub fn instance_ref(&self) -> &RsaInstance {
        &self.inst
    }

    fn units(&self) -> Vec<u64> {
        (1..self.public.n).filter(|&z| numtheory::gcd(z, self.public.n) == 1).collect()
    }
}

impl Decomposition for CubeRootDecomposition {
    fn name(&self) -> &str {
        "cuberoot"
    }

    fn instance(&self) -> String {
        format!("N={}", self.public.n)
    }

    fn hardness_assumption(&self) -> String {
        format!(
            "Discrete Cube Root Assumption: no classical polynomial-time algorithm computes x^(1/3) mod {} \
             on a 1/poly(n) fraction of inputs x without the factorization of N",
            self.public.n
        )
    }

    fn class_size(&self) -> u64 {
        self.public.bits as u64
    }

    fn random_concept(&self, rng: &mut ChaCha8Rng) -> u64 {
        rng.gen_range(1..=self.public.bits as u64)
    }

    fn sample_preimage(&self, rng: &mut ChaCha8Rng) -> u64 {
        cuberoot::sample_unit(&self.public, rng)
    }

    fn preimage_domain(&self) -> Option<Vec<u64>> {
        (self.public.n <= ENUMERATION_LIMIT).then(|| self.units())
    }

    fn g_forward(&self, y: u64) -> Result<u64> {
        cuberoot::g_forward(&self.public, y)
    }

    fn g_inverse_surrogate(&self, x: u64) -> Result<u64> {
        self.public.check_unit(x)?;
        let d = self
            .surrogate_d
            .get_or_init(|| {
                let (p, q) = numtheory::factor_semiprime(self.public.n)?;
                Ok(numtheory::rsa_private_exponent(p, q)?)
            })
            .clone()?;
        Ok(mod_pow_unchecked(x, d, self.public.n))
    }

    fn f_eval(&self, concept: u64, y: u64) -> Result<Label> {
        let c = BitConcept::new(&self.public, concept.min(u32::MAX as u64) as u32)?;
        self.public.check_unit(y)?;
        Ok(cuberoot::bit(y, c.index()))
    }

    fn concept_eval(&self, concept: u64, x: u64) -> Result<Label> {
        let c = BitConcept::new(&self.public, concept.min(u32::MAX as u64) as u32)?;
        cuberoot::concept_eval(&self.inst, c, x)
    }

    fn example_from_preimage(&self, concept: u64, y: u64) -> LabeledExample {
        let i = concept.clamp(1, 64) as u32;
        LabeledExample::new(mod_pow_unchecked(y, 3, self.public.n), cuberoot::bit(y, i))
    }

    fn reconstruct(&self, x: u64, access: &mut dyn FnMut(u64) -> Result<Label>) -> Result<Reconstruction> {
        let r = cuberoot::reconstruct_x_via_concepts(&self.public, x, |i| access(i as u64))?;
        Ok(Reconstruction { value: r.value, queries: r.queries })
    }

    fn query_budget(&self) -> usize {
        self.public.bits as usize
    }

    fn blind(&self, x: u64, rng: &mut ChaCha8Rng) -> Result<(u64, u64)> {
        self.public.check_unit(x)?;
        let s = cuberoot::sample_unit(&self.public, rng);
        Ok((mod_mul(x, mod_pow_unchecked(s, 3, self.public.n), self.public.n), s))
    }

    fn unblind(&self, value: u64, s: u64) -> u64 {
        match mod_inverse(s, self.public.n) {
            Ok(s_inv) => mod_mul(value, s_inv, self.public.n),
            Err(_) => 0,
        }
    }

    fn concept_hypothesis(&self, concept: u64) -> Hypothesis {
        let d = self.inst.d_star();
        Hypothesis::new(cuberoot::RsaHypothesis { d, i: concept as u32 }.spec(), self.evaluator.clone())
    }

    fn concept_hypothesis_primitives(&self) -> Vec<Primitive> {
        vec![Primitive::ModularArithmetic]
    }
}

/// Planted faults used to show that the checklist notices broken pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sabotage {
    #[default]
    None,
    /// `B` returns its answer plus one.
    OffByOneReconstruction,
    /// The generator flips the label of every preimage divisible by 7.
    LabelBug,
    /// `gen_example` sleeps before each example. Learning oracles build
    /// examples from preimages directly and are not slowed.
    SlowGenerator,
}

impl std::str::FromStr for Sabotage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "off-by-one-reconstruction" | "off-by-one" => Ok(Self::OffByOneReconstruction),
            "label-bug" => Ok(Self::LabelBug),
            "slow-generator" => Ok(Self::SlowGenerator),
            other => Err(format!(
                "unknown sabotage '{other}' (expected none, off-by-one-reconstruction, label-bug, slow-generator)"
            )),
        }
    }
}

/// Delay injected per example by [`Sabotage::SlowGenerator`].
pub const SLOW_GENERATOR_DELAY: Duration = Duration::from_millis(5);

/// A decomposition with one planted fault.
pub struct Sabotaged<D> {
    inner: D,
    sabotage: Sabotage,
}

impl<D: Decomposition> Sabotaged<D> {
    pub fn new(inner: D, sabotage: Sabotage) -> Self {
        Self { inner, sabotage }
    }
}

impl<D: Decomposition> Decomposition for Sabotaged<D> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn instance(&self) -> String {
        self.inner.instance()
    }
    fn hardness_assumption(&self) -> String {
        self.inner.hardness_assumption()
    }
    fn class_size(&self) -> u64 {
        self.inner.class_size()
    }
    fn random_concept(&self, rng: &mut ChaCha8Rng) -> u64 {
        self.inner.random_concept(rng)
    }
    fn sample_preimage(&self, rng: &mut ChaCha8Rng) -> u64 {
        self.inner.sample_preimage(rng)
    }
    fn preimage_domain(&self) -> Option<Vec<u64>> {
        self.inner.preimage_domain()
    }
    fn g_forward(&self, y: u64) -> Result<u64> {
        self.inner.g_forward(y)
    }
    fn g_inverse_surrogate(&self, x: u64) -> Result<u64> {
        self.inner.g_inverse_surrogate(x)
    }
    fn f_eval(&self, concept: u64, y: u64) -> Result<Label> {
        self.inner.f_eval(concept, y)
    }
    fn concept_eval(&self, concept: u64, x: u64) -> Result<Label> {
        self.inner.concept_eval(concept, x)
    }

    fn example_from_preimage(&self, concept: u64, y: u64) -> LabeledExample {
        let mut e = self.inner.example_from_preimage(concept, y);
        match self.sabotage {
            Sabotage::LabelBug if y.is_multiple_of(7) => {
                e.label = match e.label {
                    0 => 1,
                    1 if self.inner.name() == "cuberoot" => 0,
                    l => -l,
                };
            }
            _ => {}
        }
        e
    }

    fn gen_example(&self, concept: u64, rng: &mut ChaCha8Rng) -> LabeledExample {
        if self.sabotage == Sabotage::SlowGenerator {
            std::thread::sleep(SLOW_GENERATOR_DELAY);
        }
        let y = self.sample_preimage(rng);
        self.example_from_preimage(concept, y)
    }

    fn reconstruct(&self, x: u64, access: &mut dyn FnMut(u64) -> Result<Label>) -> Result<Reconstruction> {
        let mut r = self.inner.reconstruct(x, access)?;
        if self.sabotage == Sabotage::OffByOneReconstruction {
            r.value += 1;
        }
        Ok(r)
    }

    fn query_budget(&self) -> usize {
        self.inner.query_budget()
    }
    fn blind(&self, x: u64, rng: &mut ChaCha8Rng) -> Result<(u64, u64)> {
        self.inner.blind(x, rng)
    }
    fn unblind(&self, value: u64, r: u64) -> u64 {
        self.inner.unblind(value, r)
    }
    fn concept_hypothesis(&self, concept: u64) -> Hypothesis {
        self.inner.concept_hypothesis(concept)
    }
    fn concept_hypothesis_primitives(&self) -> Vec<Primitive> {
        self.inner.concept_hypothesis_primitives()
    }
}

/// Box a decomposition with an optional planted fault.
pub fn with_sabotage<D: Decomposition + 'static>(inner: D, sabotage: Sabotage) -> Arc<dyn Decomposition> {
    match sabotage {
        Sabotage::None => Arc::new(inner),
        s => Arc::new(Sabotaged::new(inner, s)),
    }
}
