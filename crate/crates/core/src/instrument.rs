//! Primitive-operation registry and per-thread call counters.
//!
//! Every hypothesis evaluator declares which primitives it may invoke. The
//! surrogate algorithms (discrete log, factoring) and trapdoor reads bump a
//! thread-local counter each time they run, so a checker can both inspect the
//! declaration and observe what actually happened during an evaluation.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

/// Operations an evaluator may rely on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Primitive {
    /// Modular multiplication/exponentiation, gcd, bit extraction.
    ModularArithmetic,
    /// The classical stand-in for the quantum discrete-log algorithm.
    DiscreteLogSurrogate,
    /// The classical stand-in for the quantum factoring algorithm.
    FactoringSurrogate,
    /// Direct reads of instance secrets (p, q, d*).
    TrapdoorSecret,
}

impl Primitive {
    pub const ALL: [Primitive; 4] = [
        Primitive::ModularArithmetic,
        Primitive::DiscreteLogSurrogate,
        Primitive::FactoringSurrogate,
        Primitive::TrapdoorSecret,
    ];

    /// True for primitives that stand in for a quantum computation or that
    /// leak secrets a classical evaluator would not have.
    pub fn is_quantum_surrogate(self) -> bool {
        !matches!(self, Primitive::ModularArithmetic)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

thread_local! {
    static COUNTERS: [Cell<u64>; 4] = const { [Cell::new(0), Cell::new(0), Cell::new(0), Cell::new(0)] };
}

/// Record one invocation of `p` on the current thread.
pub fn record(p: Primitive) {
    COUNTERS.with(|c| {
        let cell = &c[p.slot()];
        cell.set(cell.get().wrapping_add(1));
    });
}

/// Snapshot of the current thread's counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallCounts([u64; 4]);

impl CallCounts {
    pub fn get(&self, p: Primitive) -> u64 {
        self.0[p.slot()]
    }

    /// Calls made between `earlier` and `self`.
    pub fn since(&self, earlier: &CallCounts) -> CallCounts {
        let mut out = [0u64; 4];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.0[i].wrapping_sub(earlier.0[i]);
        }
        CallCounts(out)
    }

    pub fn surrogate_calls(&self) -> u64 {
        Primitive::ALL
            .iter()
            .filter(|p| p.is_quantum_surrogate())
            .map(|p| self.get(*p))
            .sum()
    }
}

pub fn snapshot() -> CallCounts {
    COUNTERS.with(|c| {
        let mut out = [0u64; 4];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = c[i].get();
        }
        CallCounts(out)
    })
}

/// Run `f` and report the primitive calls it made on this thread.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, CallCounts) {
    let before = snapshot();
    let out = f();
    (out, snapshot().since(&before))
}
