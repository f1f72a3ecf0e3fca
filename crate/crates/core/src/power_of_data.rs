//! Single-parameter circuit expectation values and the models that fit them.
//!
//! A circuit with one free gate `exp(-i theta/2 A)`, `A^2 = I`, has an
//! expectation value of the form `alpha cos(theta - beta) + gamma`, so three
//! samples pin it down. The simulator here is a plain dense statevector.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const MAX_QUBITS: usize = 10;
/// Systems whose condition number exceeds this are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;
const INVOLUTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PowerOfDataError {
    #[error("{qubits} qubits exceeds the simulator cap of {max}")]
    TooLarge { qubits: usize, max: usize },
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("degenerate sample: condition number {condition:e} exceeds {CONDITION_LIMIT:e}")]
    DegenerateSample { condition: f64 },
    #[error("ill-conditioned design matrix: condition number {condition:e} exceeds {CONDITION_LIMIT:e}")]
    IllConditioned { condition: f64 },
    #[error("need at least {needed} points for cutoff K={k}, got {got}")]
    InsufficientPoints { k: usize, needed: usize, got: usize },
    #[error("invalid Pauli string {0:?}")]
    InvalidPauli(String),
}

type Result<T> = std::result::Result<T, PowerOfDataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// Tensor product of single-qubit Paulis; character `q` acts on qubit `q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(ops: Vec<Pauli>) -> Self {
        Self(ops)
    }

    /// `op` on `qubit`, identity elsewhere.
    pub fn single(qubits: usize, qubit: usize, op: Pauli) -> Self {
        let mut ops = vec![Pauli::I; qubits];
        ops[qubit] = op;
        Self(ops)
    }

    pub fn ops(&self) -> &[Pauli] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// (flip mask, sign mask, number of Y factors)
    fn masks(&self) -> (usize, usize, u32) {
        let (mut x, mut z, mut ny) = (0usize, 0usize, 0u32);
        for (q, op) in self.0.iter().enumerate() {
            match op {
                Pauli::I => {}
                Pauli::X => x |= 1 << q,
                Pauli::Z => z |= 1 << q,
                Pauli::Y => {
                    x |= 1 << q;
                    z |= 1 << q;
                    ny += 1;
                }
            }
        }
        (x, z, ny)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in &self.0 {
            f.write_str(match op {
                Pauli::I => "I",
                Pauli::X => "X",
                Pauli::Y => "Y",
                Pauli::Z => "Z",
            })?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = PowerOfDataError;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                _ => Err(PowerOfDataError::InvalidPauli(s.to_string())),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl TryFrom<String> for PauliString {
    type Error = PowerOfDataError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PauliString> for String {
    fn from(p: PauliString) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum Gate {
    H { q: usize },
    S { q: usize },
    T { q: usize },
    X { q: usize },
    Y { q: usize },
    Z { q: usize },
    Rx { q: usize, phi: f64 },
    Ry { q: usize, phi: f64 },
    Rz { q: usize, phi: f64 },
    Cnot { control: usize, target: usize },
    Cz { a: usize, b: usize },
    /// `exp(-i phi/2 P)` at a fixed angle.
    PauliRotation { generator: PauliString, phi: f64 },
    /// The free gate `exp(-i theta/2 A)`.
    Free { generator: PauliString },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub qubits: usize,
    pub gates: Vec<Gate>,
    pub observable: PauliString,
}

impl CircuitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.qubits > MAX_QUBITS {
            return Err(PowerOfDataError::TooLarge { qubits: self.qubits, max: MAX_QUBITS });
        }
        if self.qubits == 0 {
            return Err(PowerOfDataError::InvalidCircuit("zero qubits".into()));
        }
        let check_q = |q: usize| {
            if q < self.qubits {
                Ok(())
            } else {
                Err(PowerOfDataError::InvalidCircuit(format!("qubit {q} out of range")))
            }
        };
        let check_p = |p: &PauliString| {
            if p.len() == self.qubits {
                Ok(())
            } else {
                Err(PowerOfDataError::InvalidCircuit(format!("Pauli string {p} has wrong length")))
            }
        };
        check_p(&self.observable)?;
        let mut free = 0;
        for g in &self.gates {
            match g {
                Gate::H { q }
                | Gate::S { q }
                | Gate::T { q }
                | Gate::X { q }
                | Gate::Y { q }
                | Gate::Z { q }
                | Gate::Rx { q, .. }
                | Gate::Ry { q, .. }
                | Gate::Rz { q, .. } => check_q(*q)?,
                Gate::Cnot { control: a, target: b } | Gate::Cz { a, b } => {
                    check_q(*a)?;
                    check_q(*b)?;
                    if a == b {
                        return Err(PowerOfDataError::InvalidCircuit("two-qubit gate on one qubit".into()));
                    }
                }
                Gate::PauliRotation { generator, .. } => check_p(generator)?,
                Gate::Free { generator } => {
                    check_p(generator)?;
                    check_involution(generator)?;
                    free += 1;
                }
            }
        }
        if free != 1 {
            return Err(PowerOfDataError::InvalidCircuit(format!("expected exactly one free gate, found {free}")));
        }
        Ok(())
    }

    pub fn free_generator(&self) -> Option<&PauliString> {
        self.gates.iter().find_map(|g| match g {
            Gate::Free { generator } => Some(generator),
            _ => None,
        })
    }
}

/// Numerical `A^2 = I` check on a fixed dense probe state.
fn check_involution(a: &PauliString) -> Result<()> {
    let dim = 1usize << a.len();
    let probe: Vec<Complex64> =
        (0..dim).map(|k| Complex64::new(((k * 7 + 3) % 11) as f64 - 5.0, ((k * 5 + 1) % 13) as f64 - 6.0)).collect();
    let mut s = Statevector { amps: probe.clone() };
    s.apply_pauli(a);
    s.apply_pauli(a);
    let scale = probe.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let dev = s.amps.iter().zip(&probe).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
    if dev > INVOLUTION_TOL * scale.max(1.0) {
        return Err(PowerOfDataError::InvalidCircuit(format!("generator {a} is not involutory")));
    }
    Ok(())
}

/// Dense state over `n` qubits; qubit `q` is bit `q` of the basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    amps: Vec<Complex64>,
}

impl Statevector {
    pub fn zero(qubits: usize) -> Result<Self> {
        if qubits > MAX_QUBITS {
            return Err(PowerOfDataError::TooLarge { qubits, max: MAX_QUBITS });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    fn apply_1q(&mut self, q: usize, m: [[Complex64; 2]; 2]) {
        let bit = 1usize << q;
        for k in 0..self.amps.len() {
            if k & bit == 0 {
                let (a0, a1) = (self.amps[k], self.amps[k | bit]);
                self.amps[k] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[k | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn apply_pauli(&mut self, p: &PauliString) {
        let (x, z, ny) = p.masks();
        let global = Complex64::i().powu(ny);
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (k, a) in self.amps.iter().enumerate() {
            let sign = if (k & z).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            out[k ^ x] = global * a * sign;
        }
        self.amps = out;
    }

    /// `exp(-i phi/2 P) = cos(phi/2) I - i sin(phi/2) P`
    fn apply_pauli_rotation(&mut self, p: &PauliString, phi: f64) {
        let before = self.amps.clone();
        self.apply_pauli(p);
        let (c, s) = ((phi / 2.0).cos(), (phi / 2.0).sin());
        let mis = Complex64::new(0.0, -s);
        for (a, b) in self.amps.iter_mut().zip(before) {
            *a = b * c + *a * mis;
        }
    }

    pub fn apply(&mut self, gate: &Gate, theta: f64) {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match gate {
            Gate::H { q } => self.apply_1q(*q, [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]]),
            Gate::S { q } => self.apply_1q(*q, [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 1.0)]]),
            Gate::T { q } => {
                self.apply_1q(*q, [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), Complex64::from_polar(1.0, PI / 4.0)]])
            }
            Gate::X { q } => self.apply_1q(*q, [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]),
            Gate::Y { q } => self.apply_1q(*q, [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]]),
            Gate::Z { q } => self.apply_1q(*q, [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]]),
            Gate::Rx { q, phi } => {
                let (co, si) = ((phi / 2.0).cos(), (phi / 2.0).sin());
                self.apply_1q(*q, [[c(co, 0.0), c(0.0, -si)], [c(0.0, -si), c(co, 0.0)]])
            }
            Gate::Ry { q, phi } => {
                let (co, si) = ((phi / 2.0).cos(), (phi / 2.0).sin());
                self.apply_1q(*q, [[c(co, 0.0), c(-si, 0.0)], [c(si, 0.0), c(co, 0.0)]])
            }
            Gate::Rz { q, phi } => self.apply_1q(
                *q,
                [[Complex64::from_polar(1.0, -phi / 2.0), c(0.0, 0.0)], [c(0.0, 0.0), Complex64::from_polar(1.0, phi / 2.0)]],
            ),
            Gate::Cnot { control, target } => {
                let (cb, tb) = (1usize << control, 1usize << target);
                for k in 0..self.amps.len() {
                    if k & cb != 0 && k & tb == 0 {
                        self.amps.swap(k, k | tb);
                    }
                }
            }
            Gate::Cz { a, b } => {
                let m = (1usize << a) | (1usize << b);
                for (k, amp) in self.amps.iter_mut().enumerate() {
                    if k & m == m {
                        *amp = -*amp;
                    }
                }
            }
            Gate::PauliRotation { generator, phi } => self.apply_pauli_rotation(generator, *phi),
            Gate::Free { generator } => self.apply_pauli_rotation(generator, theta),
        }
    }

    /// `<psi| P |psi>`, real for Hermitian `P`.
    pub fn expectation(&self, p: &PauliString) -> f64 {
        let mut moved = self.clone();
        moved.apply_pauli(p);
        self.amps.iter().zip(&moved.amps).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

/// Final state of `spec` at `theta`.
pub fn simulate_state(spec: &CircuitSpec, theta: f64) -> Result<Statevector> {
    spec.validate()?;
    let mut s = Statevector::zero(spec.qubits)?;
    for g in &spec.gates {
        s.apply(g, theta);
    }
    Ok(s)
}

pub fn simulate_expectation(spec: &CircuitSpec, theta: f64) -> Result<f64> {
    Ok(simulate_state(spec, theta)?.expectation(&spec.observable))
}

pub trait PeriodicModel {
    fn predict(&self, theta: f64) -> f64;
}

pub fn predict(model: &impl PeriodicModel, theta: f64) -> f64 {
    model.predict(theta)
}

/// `alpha cos(theta - beta) + gamma`, canonical with `alpha >= 0`, `beta in [0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineModel {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl CosineModel {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }.canonical()
    }

    pub fn canonical(self) -> Self {
        let (alpha, beta) = if self.alpha < 0.0 { (-self.alpha, self.beta + PI) } else { (self.alpha, self.beta) };
        let mut beta = beta.rem_euclid(TAU);
        if beta >= TAU {
            beta = 0.0;
        }
        Self { alpha, beta, gamma: self.gamma }
    }
}

impl PeriodicModel for CosineModel {
    fn predict(&self, theta: f64) -> f64 {
        self.alpha * (theta - self.beta).cos() + self.gamma
    }
}

fn condition_number(singular: &[f64]) -> f64 {
    let max = singular.iter().cloned().fold(0.0, f64::max);
    let min = singular.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Exact cosine model through three samples.
pub fn fit_cosine(points: &[(f64, f64); 3]) -> Result<CosineModel> {
    let a = Matrix3::from_fn(|r, c| match c {
        0 => points[r].0.cos(),
        1 => points[r].0.sin(),
        _ => 1.0,
    });
    let y = Vector3::new(points[0].1, points[1].1, points[2].1);
    let svd = a.svd(true, true);
    let condition = condition_number(svd.singular_values.as_slice());
    if condition.is_nan() || condition > CONDITION_LIMIT {
        return Err(PowerOfDataError::DegenerateSample { condition });
    }
    let sol = svd.solve(&y, 0.0).map_err(|_| PowerOfDataError::DegenerateSample { condition })?;
    let (ac, as_, gamma) = (sol[0], sol[1], sol[2]);
    let alpha = ac.hypot(as_);
    let beta = if alpha == 0.0 { 0.0 } else { as_.atan2(ac) };
    Ok(CosineModel::new(alpha, beta, gamma))
}

/// `a_0 + sum_k a_k cos(k theta) + b_k sin(k theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierModel {
    pub k: usize,
    pub a0: f64,
    pub coefficients: Vec<(f64, f64)>,
}

impl FourierModel {
    pub fn zero(k: usize) -> Self {
        Self { k, a0: 0.0, coefficients: vec![(0.0, 0.0); k] }
    }
}

impl PeriodicModel for FourierModel {
    fn predict(&self, theta: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(j, (a, b))| {
                let w = (j + 1) as f64 * theta;
                a * w.cos() + b * w.sin()
            })
            .sum::<f64>()
            + self.a0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierFit {
    pub model: FourierModel,
    pub residual_rms: f64,
}

/// Least-squares Fourier fit with cutoff `k`.
pub fn fit_fourier(points: &[(f64, f64)], k: usize) -> Result<FourierFit> {
    let cols = 2 * k + 1;
    if points.len() < cols {
        return Err(PowerOfDataError::InsufficientPoints { k, needed: cols, got: points.len() });
    }
    let design = DMatrix::from_fn(points.len(), cols, |r, c| {
        let t = points[r].0;
        if c == 0 {
            1.0
        } else {
            let w = c.div_ceil(2) as f64 * t;
            if c % 2 == 1 {
                w.cos()
            } else {
                w.sin()
            }
        }
    });
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let svd = design.clone().svd(true, true);
    let condition = condition_number(svd.singular_values.as_slice());
    if condition.is_nan() || condition > CONDITION_LIMIT {
        return Err(PowerOfDataError::IllConditioned { condition });
    }
    let sol = svd.solve(&y, 0.0).map_err(|_| PowerOfDataError::IllConditioned { condition })?;
    let residual = &design * &sol - &y;
    let residual_rms = (residual.norm_squared() / points.len() as f64).sqrt();
    let model = FourierModel {
        k,
        a0: sol[0],
        coefficients: (0..k).map(|j| (sol[2 * j + 1], sol[2 * j + 2])).collect(),
    };
    Ok(FourierFit { model, residual_rms })
}

/// Random circuit with `depth` fixed layers around one free Pauli rotation.
pub fn random_circuit<R: Rng + ?Sized>(qubits: usize, depth: usize, rng: &mut R) -> Result<CircuitSpec> {
    if qubits > MAX_QUBITS {
        return Err(PowerOfDataError::TooLarge { qubits, max: MAX_QUBITS });
    }
    if qubits == 0 {
        return Err(PowerOfDataError::InvalidCircuit("zero qubits".into()));
    }
    let random_pauli = |rng: &mut R, allow_identity: bool| loop {
        let ops: Vec<Pauli> =
            (0..qubits).map(|_| [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][rng.gen_range(0..4)]).collect();
        if allow_identity || ops.iter().any(|&p| p != Pauli::I) {
            return PauliString(ops);
        }
    };
    let layer = |rng: &mut R, gates: &mut Vec<Gate>| {
        for _ in 0..depth {
            let q = rng.gen_range(0..qubits);
            let phi = rng.gen_range(0.0..TAU);
            let g = match rng.gen_range(0..if qubits > 1 { 11 } else { 9 }) {
                0 => Gate::H { q },
                1 => Gate::S { q },
                2 => Gate::T { q },
                3 => Gate::X { q },
                4 => Gate::Rx { q, phi },
                5 => Gate::Ry { q, phi },
                6 => Gate::Rz { q, phi },
                7 => Gate::Y { q },
                8 => Gate::PauliRotation { generator: random_pauli(rng, false), phi },
                n => {
                    let mut t = rng.gen_range(0..qubits - 1);
                    if t >= q {
                        t += 1;
                    }
                    if n == 9 {
                        Gate::Cnot { control: q, target: t }
                    } else {
                        Gate::Cz { a: q, b: t }
                    }
                }
            };
            gates.push(g);
        }
    };
    let mut gates = Vec::new();
    layer(rng, &mut gates);
    gates.push(Gate::Free { generator: random_pauli(rng, false) });
    layer(rng, &mut gates);
    let observable = random_pauli(rng, false);
    let spec = CircuitSpec { qubits, gates, observable };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub theta: f64,
    pub simulated: f64,
    pub predicted: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDemo {
    pub circuit: CircuitSpec,
    pub samples: [(f64, f64); 3],
    pub model: CosineModel,
    pub grid: Vec<GridRow>,
    pub max_abs_error: f64,
}

/// Fit from three samples at `sample_thetas`, then compare on `grid` evenly spaced points in `[0, 2pi)`.
pub fn run_demo(circuit: &CircuitSpec, sample_thetas: [f64; 3], grid: usize) -> Result<DataDemo> {
    let mut samples = [(0.0, 0.0); 3];
    for (s, &t) in samples.iter_mut().zip(&sample_thetas) {
        *s = (t, simulate_expectation(circuit, t)?);
    }
    let model = fit_cosine(&samples)?;
    let grid = (0..grid)
        .map(|j| {
            let theta = TAU * j as f64 / grid as f64;
            let simulated = simulate_expectation(circuit, theta)?;
            let predicted = model.predict(theta);
            Ok(GridRow { theta, simulated, predicted, abs_error: (simulated - predicted).abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_abs_error = grid.iter().map(|r| r.abs_error).fold(0.0, f64::max);
    Ok(DataDemo { circuit: circuit.clone(), samples, model, grid, max_abs_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from;

    fn rx_circuit() -> CircuitSpec {
        CircuitSpec {
            qubits: 1,
            gates: vec![Gate::Free { generator: "X".parse().unwrap() }],
            observable: "Z".parse().unwrap(),
        }
    }

    #[test]
    fn single_rotation_values() {
        let c = rx_circuit();
        assert!((simulate_expectation(&c, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((simulate_expectation(&c, PI).unwrap() + 1.0).abs() < 1e-15);
        assert!(simulate_expectation(&c, PI / 2.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn fixed_gates_match_hand_matrices() {
        let h = CircuitSpec {
            qubits: 1,
            gates: vec![Gate::H { q: 0 }, Gate::Free { generator: "Z".parse().unwrap() }],
            observable: "X".parse().unwrap(),
        };
        // Rz(theta)|+> has <X> = cos(theta)
        for t in [0.0, 0.4, 2.0] {
            assert!((simulate_expectation(&h, t).unwrap() - f64::cos(t)).abs() < 1e-12);
        }
        // Bell state: <ZZ> = 1, <XX> = 1, <ZI> = 0
        let bell = |obs: &str| CircuitSpec {
            qubits: 2,
            gates: vec![
                Gate::H { q: 0 },
                Gate::Cnot { control: 0, target: 1 },
                Gate::Free { generator: "II".parse().unwrap() },
            ],
            observable: obs.parse().unwrap(),
        };
        assert!((simulate_expectation(&bell("ZZ"), 0.3).unwrap() - 1.0).abs() < 1e-12);
        assert!((simulate_expectation(&bell("XX"), 0.3).unwrap() - 1.0).abs() < 1e-12);
        assert!((simulate_expectation(&bell("YY"), 0.3).unwrap() + 1.0).abs() < 1e-12);
        assert!(simulate_expectation(&bell("ZI"), 0.3).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pauli_rotation_matches_axis_rotation() {
        for (axis, p) in [("x", "X"), ("y", "Y"), ("z", "Z")] {
            let phi = 0.77;
            let gate = match axis {
                "x" => Gate::Rx { q: 0, phi },
                "y" => Gate::Ry { q: 0, phi },
                _ => Gate::Rz { q: 0, phi },
            };
            let mut a = Statevector::zero(1).unwrap();
            a.apply(&Gate::H { q: 0 }, 0.0);
            a.apply(&Gate::T { q: 0 }, 0.0);
            let mut b = a.clone();
            a.apply(&gate, 0.0);
            b.apply(&Gate::PauliRotation { generator: p.parse().unwrap(), phi }, 0.0);
            for (u, v) in a.amplitudes().iter().zip(b.amplitudes()) {
                assert!((u - v).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn validation_errors() {
        let mut c = rx_circuit();
        c.gates.push(Gate::Free { generator: "Z".parse().unwrap() });
        assert!(matches!(c.validate(), Err(PowerOfDataError::InvalidCircuit(_))));
        c.gates.clear();
        assert!(matches!(c.validate(), Err(PowerOfDataError::InvalidCircuit(_))));
        let big = CircuitSpec {
            qubits: 11,
            gates: vec![Gate::Free { generator: "X".repeat(11).parse().unwrap() }],
            observable: "Z".repeat(11).parse().unwrap(),
        };
        assert!(matches!(simulate_expectation(&big, 0.0), Err(PowerOfDataError::TooLarge { .. })));
        assert!("XQ".parse::<PauliString>().is_err());
    }

    #[test]
    fn fit_cosine_examples() {
        let pts = [0.0, PI / 2.0, PI].map(|t| (t, f64::cos(t)));
        let m = fit_cosine(&pts).unwrap();
        assert!((m.alpha - 1.0).abs() < 1e-12 && m.gamma.abs() < 1e-12);
        assert!(m.beta.abs() < 1e-12 || (m.beta - TAU).abs() < 1e-12);

        let truth = |t: f64| 0.3 * (t - 1.1).cos() + 0.2;
        let m = fit_cosine(&[0.1, 2.0, 4.0].map(|t| (t, truth(t)))).unwrap();
        assert!((m.alpha - 0.3).abs() < 1e-9);
        assert!((m.beta - 1.1).abs() < 1e-9);
        assert!((m.gamma - 0.2).abs() < 1e-9);

        let err = fit_cosine(&[0.0, TAU, 2.0 * TAU].map(|t| (t, 1.0))).unwrap_err();
        assert!(matches!(err, PowerOfDataError::DegenerateSample { .. }));
    }

    #[test]
    fn canonical_form() {
        let m = CosineModel::new(-0.5, 0.25, 0.1);
        assert!(m.alpha > 0.0 && (m.beta - (0.25 + PI)).abs() < 1e-15);
        let m = CosineModel::new(1.0, -0.5, 0.0);
        assert!((m.beta - (TAU - 0.5)).abs() < 1e-15);
        assert_eq!(predict(&CosineModel::new(1.0, 0.0, 0.0), 0.0), 1.0);
    }

    #[test]
    fn fourier_fits() {
        let thetas: Vec<f64> = (0..5).map(|j| TAU * j as f64 / 5.0).collect();
        let fit = fit_fourier(&thetas.iter().map(|&t| (t, t.cos())).collect::<Vec<_>>(), 1).unwrap();
        assert!((fit.model.coefficients[0].0 - 1.0).abs() < 1e-10);
        assert!(fit.model.a0.abs() < 1e-10 && fit.model.coefficients[0].1.abs() < 1e-10);

        let fit = fit_fourier(&[(0.0, 0.4), (1.0, 0.4), (3.0, 0.4)], 0).unwrap();
        assert!((fit.model.a0 - 0.4).abs() < 1e-12);

        let truth = FourierModel { k: 3, a0: 0.1, coefficients: vec![(0.2, -0.1), (0.05, 0.3), (0.25, 0.15)] };
        let pts: Vec<(f64, f64)> = (0..24).map(|j| TAU * j as f64 / 24.0).map(|t| (t, truth.predict(t))).collect();
        assert!(fit_fourier(&pts, 3).unwrap().residual_rms < 1e-12);
        assert!(fit_fourier(&pts, 2).unwrap().residual_rms > 0.1);

        assert!(matches!(fit_fourier(&pts[..4], 2), Err(PowerOfDataError::InsufficientPoints { .. })));
        let same: Vec<(f64, f64)> = (0..6).map(|_| (0.5, 1.0)).collect();
        assert!(matches!(fit_fourier(&same, 1), Err(PowerOfDataError::IllConditioned { .. })));
        assert_eq!(FourierModel::zero(3).predict(1.234), 0.0);
    }

    #[test]
    fn norm_preserved_after_every_gate() {
        let mut rng = rng_from(5);
        for _ in 0..10 {
            let c = random_circuit(4, 12, &mut rng).unwrap();
            let mut s = Statevector::zero(4).unwrap();
            for g in &c.gates {
                s.apply(g, 1.3);
                assert!((s.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn demo_reproduces_simulator() {
        let mut rng = rng_from(9);
        let c = random_circuit(3, 8, &mut rng).unwrap();
        let d = run_demo(&c, [0.3, 2.4, 4.5], 100).unwrap();
        assert!(d.max_abs_error <= 1e-8);
        assert_eq!(d.grid.len(), 100);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let mut rng = rng_from(1);
        let c = random_circuit(3, 6, &mut rng).unwrap();
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<CircuitSpec>(&j).unwrap(), c);
    }
}
