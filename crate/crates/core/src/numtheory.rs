//! Exact 64-bit modular arithmetic and the classical surrogates that stand in
//! for Shor's algorithm: baby-step/giant-step discrete log and Pollard rho
//! factoring. Moduli are capped at 62 bits so every product fits in a `u128`.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instrument::{self, Primitive};

/// Largest supported modulus bit length.
pub const MAX_BITS: u32 = 62;

/// Smallest bit length for which a safe prime `p = 2q + 1` with odd `q` exists.
pub const MIN_DLP_BITS: u32 = 3;

/// Smallest bit length at which [`generate_semiprime`] reliably finds a
/// balanced `N = pq` with `gcd(3, (p-1)(q-1)) = 1`.
pub const MIN_RSA_BITS: u32 = 10;

/// Moduli up to this size get a full lookup table in [`DlogSolver::new`].
pub const DLOG_TABLE_LIMIT: u64 = 1 << 21;

const MAX_BABY_STEPS: u64 = 1 << 20;
const SAFE_PRIME_ATTEMPTS: usize = 2_000_000;
const SEMIPRIME_ATTEMPTS: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumberTheoryError {
    #[error("invalid modulus {0}: must be at least 2")]
    InvalidModulus(u64),
    #[error("{a} is not invertible modulo {m} (gcd {gcd})")]
    NotInvertible { a: u64, m: u64, gcd: u64 },
    #[error("bit size {bits} outside supported range {min}..={max}")]
    InvalidBits { bits: u32, min: u32, max: u32 },
    #[error("no admissible {what} of {bits} bits found within {attempts} attempts")]
    GenerationTimeout { what: &'static str, bits: u32, attempts: usize },
    #[error("{value} is outside the domain {domain}")]
    Domain { value: u64, domain: String },
    #[error("{0} is not a product of two distinct primes")]
    NotSemiprime(u64),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("{a} does not generate Z_{p}^*")]
    NotGenerator { p: u64, a: u64 },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

pub type Result<T> = std::result::Result<T, NumberTheoryError>;

#[inline]
pub fn mod_mul(a: u64, b: u64, m: u64) -> u64 {
    if m <= u32::MAX as u64 {
        (a * b) % m
    } else {
        ((a as u128 * b as u128) % m as u128) as u64
    }
}

/// `base^exp mod modulus` by square-and-multiply.
pub fn mod_pow(base: u64, exp: u64, modulus: u64) -> Result<u64> {
    if modulus < 2 {
        return Err(NumberTheoryError::InvalidModulus(modulus));
    }
    Ok(mod_pow_unchecked(base % modulus, exp, modulus))
}

#[inline]
pub(crate) fn mod_pow_unchecked(mut base: u64, mut exp: u64, modulus: u64) -> u64 {
    let mut acc = 1 % modulus;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mod_mul(acc, base, modulus);
        }
        base = mod_mul(base, base, modulus);
        exp >>= 1;
    }
    acc
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Inverse of `a` modulo `m` via the extended Euclidean algorithm.
pub fn mod_inverse(a: u64, m: u64) -> Result<u64> {
    if m < 2 {
        return Err(NumberTheoryError::InvalidModulus(m));
    }
    let (mut old_r, mut r) = ((a % m) as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return Err(NumberTheoryError::NotInvertible { a, m, gcd: old_r as u64 });
    }
    Ok(old_s.rem_euclid(m as i128) as u64)
}

/// Deterministic Miller-Rabin. The first twelve primes as witnesses make the
/// test exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &WITNESSES {
        let mut x = mod_pow_unchecked(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mod_mul(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn bit_length(n: u64) -> u32 {
    64 - n.leading_zeros()
}

fn check_bits(bits: u32, min: u32) -> Result<()> {
    if bits < min || bits > MAX_BITS {
        return Err(NumberTheoryError::InvalidBits { bits, min, max: MAX_BITS });
    }
    Ok(())
}

// Brent's variant of Pollard rho with batched gcds. Returns a nontrivial
// divisor or `None` when the walk collapses or runs past `max_steps`.
fn rho_brent(n: u64, c: u64, x0: u64, max_steps: u64) -> Option<u64> {
    const BATCH: u64 = 128;
    let f = |v: u64| (mod_mul(v, v, n) + c) % n;
    let (mut y, mut x, mut ys) = (x0, x0, x0);
    let (mut r, mut q, mut g) = (1u64, 1u64, 1u64);
    let mut steps = 0u64;
    while g == 1 {
        x = y;
        for _ in 0..r {
            y = f(y);
        }
        let mut k = 0;
        while k < r && g == 1 {
            ys = y;
            for _ in 0..BATCH.min(r - k) {
                y = f(y);
                q = mod_mul(q, x.abs_diff(y), n);
            }
            g = gcd(q, n);
            k += BATCH;
        }
        steps += r;
        r *= 2;
        if steps > max_steps {
            return None;
        }
    }
    if g == n {
        loop {
            ys = f(ys);
            g = gcd(x.abs_diff(ys), n);
            if g > 1 {
                break;
            }
        }
    }
    (g != n).then_some(g)
}

fn find_divisor(n: u64) -> Option<u64> {
    if n.is_multiple_of(2) {
        return Some(2);
    }
    for p in (3..1000u64).step_by(2) {
        if p * p > n {
            return None;
        }
        if n.is_multiple_of(p) {
            return Some(p);
        }
    }
    for c in 1..32 {
        if let Some(d) = rho_brent(n, c, 2, 1 << 26) {
            return Some(d);
        }
    }
    // Trial division fallback; unreachable in practice for 62-bit inputs.
    let mut d = 1001u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return Some(d);
        }
        d += 2;
    }
    None
}

/// Full prime factorization as sorted `(prime, exponent)` pairs.
pub fn factorize(n: u64) -> Vec<(u64, u32)> {
    fn split(n: u64, out: &mut BTreeMap<u64, u32>) {
        if n == 1 {
            return;
        }
        if is_prime(n) {
            *out.entry(n).or_insert(0) += 1;
            return;
        }
        let d = find_divisor(n).expect("composite numbers have a divisor");
        split(d, out);
        split(n / d, out);
    }
    let mut out = BTreeMap::new();
    if n > 1 {
        split(n, &mut out);
    }
    out.into_iter().collect()
}

/// An odd prime modulus with the factorization of `p - 1` attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeModulus {
    p: u64,
    factorization: Vec<(u64, u32)>,
}

impl PrimeModulus {
    pub fn new(p: u64) -> Result<Self> {
        if bit_length(p) > MAX_BITS {
            return Err(NumberTheoryError::InvalidBits { bits: bit_length(p), min: 2, max: MAX_BITS });
        }
        if p < 3 || !is_prime(p) {
            return Err(NumberTheoryError::NotPrime(p));
        }
        Ok(Self { p, factorization: factorize(p - 1) })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    /// Order of `Z_p^*`.
    pub fn order(&self) -> u64 {
        self.p - 1
    }

    pub fn bits(&self) -> u32 {
        bit_length(self.p)
    }

    pub fn factorization(&self) -> &[(u64, u32)] {
        &self.factorization
    }

    /// `a` generates `Z_p^*` iff `a^((p-1)/r) != 1` for every prime `r | p-1`.
    pub fn is_generator(&self, a: u64) -> bool {
        if a == 0 || a >= self.p {
            return false;
        }
        self.factorization
            .iter()
            .all(|&(r, _)| mod_pow_unchecked(a, self.order() / r, self.p) != 1)
    }
}

/// Random safe prime `p = 2q + 1` (with `q` an odd prime) of exactly `bits`
/// bits, plus a random generator of `Z_p^*`. Deterministic in `seed`.
pub fn generate_dlp_instance(bits: u32, seed: u64) -> Result<(PrimeModulus, u64)> {
    check_bits(bits, MIN_DLP_BITS)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = 1u64 << (bits - 1);
    let hi = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
    for _ in 0..SAFE_PRIME_ATTEMPTS {
        // p = 3 mod 4 keeps q = (p-1)/2 odd.
        let p = rng.gen_range(lo..=hi) | 3;
        let q = (p - 1) / 2;
        if q > 2 && is_prime(q) && is_prime(p) {
            let modulus = PrimeModulus { p, factorization: vec![(2, 1), (q, 1)] };
            loop {
                let a = rng.gen_range(2..=p - 2);
                if modulus.is_generator(a) {
                    return Ok((modulus, a));
                }
            }
        }
    }
    Err(NumberTheoryError::GenerationTimeout { what: "safe prime", bits, attempts: SAFE_PRIME_ATTEMPTS })
}

enum Strategy {
    Table(Vec<u32>),
    BabyGiant { baby: HashMap<u64, u64>, step: u64, giant: u64 },
}

/// Reusable discrete-log solver for a fixed `(p, a)`.
///
/// Small moduli get a complete `x -> log x` table; larger ones use
/// baby-step/giant-step with at most 2^20 baby steps.
pub struct DlogSolver {
    p: u64,
    a: u64,
    strategy: Strategy,
}

impl std::fmt::Debug for DlogSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.strategy {
            Strategy::Table(_) => "table",
            Strategy::BabyGiant { .. } => "baby-step/giant-step",
        };
        f.debug_struct("DlogSolver").field("p", &self.p).field("a", &self.a).field("strategy", &kind).finish()
    }
}

impl DlogSolver {
    pub fn new(modulus: &PrimeModulus, a: u64) -> Result<Self> {
        if modulus.p() <= DLOG_TABLE_LIMIT {
            Self::table(modulus, a)
        } else {
            Self::baby_giant(modulus, a)
        }
    }

    pub fn table(modulus: &PrimeModulus, a: u64) -> Result<Self> {
        let p = modulus.p();
        if !modulus.is_generator(a) {
            return Err(NumberTheoryError::NotGenerator { p, a });
        }
        if p > u32::MAX as u64 {
            return Err(NumberTheoryError::InvalidInstance(format!("lookup table too large for p = {p}")));
        }
        let mut table = vec![0u32; p as usize];
        let mut v = 1u64;
        for k in 0..modulus.order() {
            table[v as usize] = k as u32;
            v = mod_mul(v, a, p);
        }
        Ok(Self { p, a, strategy: Strategy::Table(table) })
    }

    pub fn baby_giant(modulus: &PrimeModulus, a: u64) -> Result<Self> {
        let p = modulus.p();
        if !modulus.is_generator(a) {
            return Err(NumberTheoryError::NotGenerator { p, a });
        }
        let order = modulus.order();
        let step = ((order as f64).sqrt().ceil() as u64).clamp(1, MAX_BABY_STEPS);
        let mut baby = HashMap::with_capacity(step as usize);
        let mut v = 1u64;
        for j in 0..step {
            baby.entry(v).or_insert(j);
            v = mod_mul(v, a, p);
        }
        // a^{-step} = a^{order - step mod order}
        let giant = mod_pow_unchecked(a, (order - step % order) % order, p);
        Ok(Self { p, a, strategy: Strategy::BabyGiant { baby, step, giant } })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn generator(&self) -> u64 {
        self.a
    }

    /// The unique `l` in `{0, ..., p-2}` with `a^l = x mod p`.
    pub fn log(&self, x: u64) -> Result<u64> {
        if x == 0 || x >= self.p {
            return Err(NumberTheoryError::Domain { value: x, domain: format!("Z_{}^*", self.p) });
        }
        instrument::record(Primitive::DiscreteLogSurrogate);
        match &self.strategy {
            Strategy::Table(t) => Ok(t[x as usize] as u64),
            Strategy::BabyGiant { baby, step, giant } => {
                let order = self.p - 1;
                let mut gamma = x;
                let mut i = 0u64;
                while i * step < order {
                    if let Some(&j) = baby.get(&gamma) {
                        let l = i * step + j;
                        if l < order {
                            return Ok(l);
                        }
                    }
                    gamma = mod_mul(gamma, *giant, self.p);
                    i += 1;
                }
                unreachable!("a generator reaches every element of Z_p^*")
            }
        }
    }
}

/// One-off discrete log by baby-step/giant-step.
pub fn discrete_log(modulus: &PrimeModulus, a: u64, x: u64) -> Result<u64> {
    if x == 0 || x >= modulus.p() {
        return Err(NumberTheoryError::Domain { value: x, domain: format!("Z_{}^*", modulus.p()) });
    }
    DlogSolver::baby_giant(modulus, a)?.log(x)
}

/// Split a product of two distinct primes, returning `(p, q)` with `p < q`.
pub fn factor_semiprime(n: u64) -> Result<(u64, u64)> {
    instrument::record(Primitive::FactoringSurrogate);
    if n < 6 || is_prime(n) {
        return Err(NumberTheoryError::NotSemiprime(n));
    }
    let d = find_divisor(n).ok_or(NumberTheoryError::NotSemiprime(n))?;
    let (p, q) = (d.min(n / d), d.max(n / d));
    if p == q || !is_prime(p) || !is_prime(q) {
        return Err(NumberTheoryError::NotSemiprime(n));
    }
    Ok((p, q))
}

/// `d* = 3^{-1} mod (p-1)(q-1)`, the RSA decryption exponent for `e = 3`.
pub fn rsa_private_exponent(p: u64, q: u64) -> Result<u64> {
    let phi = (p as u128 - 1) * (q as u128 - 1);
    if phi > u64::MAX as u128 {
        return Err(NumberTheoryError::InvalidInstance(format!("phi({p}*{q}) overflows 64 bits")));
    }
    let phi = phi as u64;
    if gcd(3, phi) != 1 {
        return Err(NumberTheoryError::InvalidInstance(format!("gcd(3, {phi}) = 3; cubing is not a bijection")));
    }
    mod_inverse(3, phi)
}

/// `N = pq` with its secret factors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Semiprime {
    n: u64,
    p: u64,
    q: u64,
    phi: u64,
}

impl Semiprime {
    pub fn new(p: u64, q: u64) -> Result<Self> {
        let (p, q) = (p.min(q), p.max(q));
        if p == q {
            return Err(NumberTheoryError::InvalidInstance(format!("factors must be distinct, got {p} twice")));
        }
        for f in [p, q] {
            if !is_prime(f) {
                return Err(NumberTheoryError::NotPrime(f));
            }
        }
        let n = p
            .checked_mul(q)
            .filter(|n| bit_length(*n) <= MAX_BITS)
            .ok_or_else(|| NumberTheoryError::InvalidInstance(format!("{p}*{q} exceeds {MAX_BITS} bits")))?;
        let phi = (p - 1) * (q - 1);
        if gcd(3, phi) != 1 {
            return Err(NumberTheoryError::InvalidInstance(format!("gcd(3, {phi}) = 3; cubing is not a bijection")));
        }
        Ok(Self { n, p, q, phi })
    }

    pub fn n(&self) -> u64 {
        self.n
    }
    pub fn p(&self) -> u64 {
        self.p
    }
    pub fn q(&self) -> u64 {
        self.q
    }
    pub fn phi(&self) -> u64 {
        self.phi
    }
    pub fn bits(&self) -> u32 {
        bit_length(self.n)
    }
}

fn random_prime(rng: &mut ChaCha8Rng, bits: u32) -> u64 {
    let lo = 1u64 << (bits - 1);
    let hi = (1u64 << bits) - 1;
    loop {
        let c = rng.gen_range(lo..=hi) | 1;
        if is_prime(c) {
            return c;
        }
    }
}

/// Random `N = pq` of exactly `bits` bits with `floor(bits/2)`- and
/// `ceil(bits/2)`-bit prime factors and `gcd(3, phi) = 1`.
pub fn generate_semiprime(bits: u32, seed: u64) -> Result<Semiprime> {
    check_bits(bits, MIN_RSA_BITS)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p_bits, q_bits) = (bits / 2, bits - bits / 2);
    for _ in 0..SEMIPRIME_ATTEMPTS {
        let p = random_prime(&mut rng, p_bits);
        let q = random_prime(&mut rng, q_bits);
        if p == q || p % 3 == 1 || q % 3 == 1 {
            continue;
        }
        if bit_length(p * q) == bits {
            return Semiprime::new(p, q);
        }
    }
    Err(NumberTheoryError::GenerationTimeout { what: "semiprime", bits, attempts: SEMIPRIME_ATTEMPTS })
}
