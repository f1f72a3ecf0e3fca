//! Cube-root (RSA with `e = 3`) concept class.
//!
//! For `N = pq` with `gcd(3, phi(N)) = 1`, concept `c_i` labels `x` in
//! `Z_N^*` with the `i`-th least significant bit (counting from 1) of the
//! unique cube root `x^{d*} mod N`. Labels are bits, `0` or `1`.
//!
//! Examples are generated forward as `(z^3 mod N, bit_i(z))`. Knowing the
//! factors of `N` gives `d*`, after which every concept is evaluated by one
//! modular exponentiation, so the learned hypotheses are classical.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConceptError;
use crate::instrument::{self, Primitive};
use crate::numtheory::{self, gcd, mod_pow_unchecked, Semiprime};
use crate::pac::{
    self, finite_class_sample_size, format_spec, parse_spec, spec_field, Hypothesis, HypothesisEvaluator, Label,
    LabeledExample, Learner, LearnerConfig, LearningProblem, PacError, EXACT_ENUMERATION_LIMIT,
};

type Result<T> = std::result::Result<T, ConceptError>;

/// The public modulus. Everything a classical party is allowed to see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsaPublic {
    #[serde(rename = "N")]
    pub n: u64,
    pub bits: u32,
    pub seed: Option<u64>,
}

impl RsaPublic {
    pub fn new(n: u64) -> Result<Self> {
        if n < 6 {
            return Err(numtheory::NumberTheoryError::NotSemiprime(n).into());
        }
        Ok(Self { n, bits: 64 - n.leading_zeros(), seed: None })
    }

    pub fn check_unit(&self, x: u64) -> Result<()> {
        if x == 0 || x >= self.n {
            return Err(ConceptError::Domain { value: x, domain: format!("Z_{}^*", self.n) });
        }
        let g = gcd(x, self.n);
        if g != 1 {
            return Err(ConceptError::NonUnit { value: x, n: self.n, factor: g });
        }
        Ok(())
    }
}

/// Secret half of an instance, stored apart from the public file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsaSecretFile {
    pub p: u64,
    pub q: u64,
    pub d_star: u64,
}

/// `N` together with its factors and `d* = 3^{-1} mod phi(N)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsaInstance {
    public: RsaPublic,
    semiprime: Semiprime,
    d_star: u64,
}

impl RsaInstance {
    pub fn generate(bits: u32, seed: u64) -> Result<Self> {
        let semiprime = numtheory::generate_semiprime(bits, seed)?;
        let mut inst = Self::from_semiprime(semiprime)?;
        inst.public.seed = Some(seed);
        Ok(inst)
    }

    pub fn new(p: u64, q: u64) -> Result<Self> {
        Self::from_semiprime(Semiprime::new(p, q)?)
    }

    fn from_semiprime(semiprime: Semiprime) -> Result<Self> {
        let d_star = numtheory::rsa_private_exponent(semiprime.p(), semiprime.q())?;
        Ok(Self { public: RsaPublic::new(semiprime.n())?, semiprime, d_star })
    }

    pub fn from_files(public: &RsaPublic, secret: &RsaSecretFile) -> Result<Self> {
        let mut inst = Self::new(secret.p, secret.q)?;
        if inst.n() != public.n || inst.bits() != public.bits {
            return Err(ConceptError::Inconsistent(format!(
                "secret factors give N = {} ({} bits), public file says N = {} ({} bits)",
                inst.n(),
                inst.bits(),
                public.n,
                public.bits
            )));
        }
        if inst.d_star != secret.d_star {
            return Err(ConceptError::Inconsistent(format!("d_star = {} does not invert 3 mod phi", secret.d_star)));
        }
        inst.public.seed = public.seed;
        Ok(inst)
    }

    pub fn public(&self) -> RsaPublic {
        self.public
    }

    pub fn secret_file(&self) -> RsaSecretFile {
        RsaSecretFile { p: self.semiprime.p(), q: self.semiprime.q(), d_star: self.d_star }
    }

    pub fn n(&self) -> u64 {
        self.public.n
    }

    pub fn bits(&self) -> u32 {
        self.public.bits
    }

    /// Reading the secret exponent counts as a trapdoor access.
    pub fn d_star(&self) -> u64 {
        instrument::record(Primitive::TrapdoorSecret);
        self.d_star
    }

    /// Number of concepts, one per bit position.
    pub fn class_size(&self) -> u64 {
        self.bits() as u64
    }

    /// `|Z_N^*| = phi(N)`.
    pub fn unit_count(&self) -> u64 {
        instrument::record(Primitive::TrapdoorSecret);
        self.semiprime.phi()
    }
}

/// Bit position `i` in `1..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitConcept {
    i: u32,
}

impl BitConcept {
    pub fn new(public: &RsaPublic, i: u32) -> Result<Self> {
        if i == 0 || i > public.bits {
            return Err(ConceptError::Domain { value: i as u64, domain: format!("bit positions 1..={}", public.bits) });
        }
        Ok(Self { i })
    }

    pub fn index(&self) -> u32 {
        self.i
    }
}

/// `i`-th least significant bit, `i` from 1.
#[inline]
pub fn bit(value: u64, i: u32) -> Label {
    ((value >> (i - 1)) & 1) as Label
}

/// `g(x) = x^3 mod N`.
pub fn g_forward(public: &RsaPublic, x: u64) -> Result<u64> {
    public.check_unit(x)?;
    Ok(mod_pow_unchecked(x, 3, public.n))
}

/// `g^{-1}(y) = y^{d*} mod N`.
pub fn g_inverse_trapdoor(inst: &RsaInstance, y: u64) -> Result<u64> {
    inst.public.check_unit(y)?;
    Ok(mod_pow_unchecked(y, inst.d_star(), inst.n()))
}

/// Ground truth: bit `i` of the cube root of `x`.
pub fn concept_eval(inst: &RsaInstance, c: BitConcept, x: u64) -> Result<Label> {
    Ok(bit(g_inverse_trapdoor(inst, x)?, c.i))
}

/// Uniform unit of `Z_N^*` by rejection.
pub fn sample_unit(public: &RsaPublic, rng: &mut ChaCha8Rng) -> u64 {
    loop {
        let z = rng.gen_range(1..public.n);
        if gcd(z, public.n) == 1 {
            return z;
        }
    }
}

/// `(z^3 mod N, bit_i(z))` for uniform `z`; never touches `d*`.
pub fn gen_example(public: &RsaPublic, c: BitConcept, rng: &mut ChaCha8Rng) -> LabeledExample {
    let z = sample_unit(public, rng);
    LabeledExample::new(mod_pow_unchecked(z, 3, public.n), bit(z, c.i))
}

/// Result of bit-by-bit reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reconstruction {
    pub value: u64,
    pub queries: usize,
}

/// Assemble the cube root of `x_image` from the labels of all `n` bit
/// concepts, then check it by cubing.
pub fn reconstruct_x_via_concepts(
    public: &RsaPublic,
    x_image: u64,
    mut eval_access: impl FnMut(u32) -> Result<Label>,
) -> Result<Reconstruction> {
    public.check_unit(x_image)?;
    let mut value = 0u64;
    for i in 1..=public.bits {
        match eval_access(i)? {
            0 => {}
            1 => value |= 1 << (i - 1),
            other => return Err(ConceptError::Inconsistent(format!("bit {i} answered with label {other}"))),
        }
    }
    if value == 0 || value >= public.n || mod_pow_unchecked(value, 3, public.n) != x_image {
        return Err(ConceptError::Inconsistent(format!("assembled {value}, whose cube is not {x_image} mod {}", public.n)));
    }
    Ok(Reconstruction { value, queries: public.bits as usize })
}

/// `f_{d,i}(x) = bit_i(x^d mod N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsaHypothesis {
    pub d: u64,
    pub i: u32,
}

impl RsaHypothesis {
    pub fn spec(&self) -> String {
        format_spec("rsa-bit", &[("d", self.d.to_string()), ("i", self.i.to_string())])
    }
}

pub fn hypothesis_eval(h: &RsaHypothesis, public: &RsaPublic, x: u64) -> Result<Label> {
    public.check_unit(x)?;
    if h.i == 0 || h.i > 64 {
        return Err(ConceptError::Domain { value: h.i as u64, domain: "bit positions 1..=64".into() });
    }
    Ok(bit(mod_pow_unchecked(x, h.d, public.n), h.i))
}

/// Evaluates `rsa-bit d=<d> i=<i>` specs with nothing but `N`.
#[derive(Debug, Clone)]
pub struct RsaBitEvaluator {
    public: RsaPublic,
}

impl RsaBitEvaluator {
    pub fn new(public: RsaPublic) -> Self {
        Self { public }
    }
}

impl HypothesisEvaluator for RsaBitEvaluator {
    fn id(&self) -> &str {
        "rsa-bit"
    }

    fn primitives(&self) -> Vec<Primitive> {
        vec![Primitive::ModularArithmetic]
    }

    fn evaluate(&self, spec: &str, x: u64) -> pac::Result<Label> {
        let (kind, fields) = parse_spec(spec)?;
        if kind != "rsa-bit" {
            return Err(PacError::MalformedSpec(spec.into()));
        }
        let h = RsaHypothesis { d: spec_field(&fields, "d", spec)?, i: spec_field(&fields, "i", spec)? };
        Ok(hypothesis_eval(&h, &self.public, x)?)
    }
}

/// Factor `N` with the surrogate, derive `d*`, keep the bit positions that
/// agree with every example.
pub struct SurrogateCubeRootLearner {
    public: RsaPublic,
    evaluator: Arc<RsaBitEvaluator>,
    sample_size: Option<usize>,
}

impl SurrogateCubeRootLearner {
    pub fn new(public: RsaPublic) -> Self {
        Self { public, evaluator: Arc::new(RsaBitEvaluator::new(public)), sample_size: None }
    }

    pub fn with_sample_size(mut self, m: usize) -> Self {
        self.sample_size = Some(m);
        self
    }

    pub fn fit_rsa(&self, examples: &[LabeledExample]) -> Result<RsaHypothesis> {
        let (p, q) = numtheory::factor_semiprime(self.public.n)?;
        let d = numtheory::rsa_private_exponent(p, q)?;
        let mut alive: u64 = if self.public.bits >= 64 { u64::MAX } else { (1u64 << self.public.bits) - 1 };
        for e in examples {
            self.public.check_unit(e.input)?;
            let root = mod_pow_unchecked(e.input, d, self.public.n);
            let agree = match e.label {
                1 => root,
                0 => !root,
                _ => 0,
            };
            alive &= agree;
            if alive == 0 {
                break;
            }
        }
        if alive == 0 {
            return Err(ConceptError::InconsistentData(examples.len()));
        }
        Ok(RsaHypothesis { d, i: alive.trailing_zeros() + 1 })
    }

    pub fn hypothesis(&self, h: RsaHypothesis) -> Hypothesis {
        Hypothesis::new(h.spec(), self.evaluator.clone())
    }
}

impl Learner for SurrogateCubeRootLearner {
    fn id(&self) -> &str {
        "cuberoot-surrogate"
    }

    fn sample_size(&self, config: &LearnerConfig) -> usize {
        self.sample_size
            .unwrap_or_else(|| finite_class_sample_size(self.public.bits as u64, config.epsilon, config.delta))
    }

    fn hypothesis_primitives(&self) -> Vec<Primitive> {
        self.evaluator.primitives()
    }

    fn fit(&self, examples: &[LabeledExample], _seed: u64) -> pac::Result<Hypothesis> {
        Ok(self.hypothesis(self.fit_rsa(examples)?))
    }
}

/// `EX(c_i, D)` with `D` the cube of a uniform unit, i.e. uniform on `Z_N^*`.
#[derive(Debug, Clone)]
pub struct CubeRootProblem {
    pub inst: RsaInstance,
    pub concept: BitConcept,
}

impl LearningProblem for CubeRootProblem {
    fn description(&self) -> String {
        format!("cuberoot N={} i={}", self.inst.n(), self.concept.i)
    }

    fn concept_id(&self) -> Option<u64> {
        Some(self.concept.i as u64)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> LabeledExample {
        gen_example(&self.inst.public, self.concept, rng)
    }

    fn full_domain(&self) -> Option<Vec<LabeledExample>> {
        let n = self.inst.n();
        if n > EXACT_ENUMERATION_LIMIT {
            return None;
        }
        let mut out: Vec<LabeledExample> = (1..n)
            .filter(|&z| gcd(z, n) == 1)
            .map(|z| LabeledExample::new(mod_pow_unchecked(z, 3, n), bit(z, self.concept.i)))
            .collect();
        out.sort_unstable_by_key(|e| e.input);
        Some(out)
    }
}
