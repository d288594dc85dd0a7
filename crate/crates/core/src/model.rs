//! Channel laws of the unit-battery energy-harvesting channel.
//!
//! The battery state `s` is 0 (empty) or 1 (charged). An input `x = 1` needs
//! a charged battery. After each channel use one unit of energy arrives with
//! probability `eta`; energy arriving into a full battery is lost.

use serde::{Deserialize, Serialize};

use crate::error::{BehcError, Result};
use crate::qgraph::BoundKind;

/// Bernoulli energy-arrival parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestParam {
    eta: f64,
}

impl HarvestParam {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) || eta.is_nan() {
            return Err(BehcError::InvalidParameter(format!(
                "eta={eta} is not a probability"
            )));
        }
        Ok(HarvestParam { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn eta_bar(&self) -> f64 {
        1.0 - self.eta
    }

    /// `eta_bar^k` by repeated multiplication.
    pub fn eta_bar_pow(&self, k: usize) -> f64 {
        let b = self.eta_bar();
        (0..k).fold(1.0, |acc, _| acc * b)
    }

    /// Law of the next battery state given `(x, s)`.
    ///
    /// Returns `P(s_plus | x, s)`; errors when `x > s`.
    pub fn noiseless_law(&self, s_plus: u8, x: u8, s: u8) -> Result<f64> {
        if x > s {
            return Err(BehcError::BatteryConstraint { x, s });
        }
        Ok(self.law_unchecked(s_plus, x, s))
    }

    pub(crate) fn law_unchecked(&self, s_plus: u8, x: u8, s: u8) -> f64 {
        let p_empty = if x == s { self.eta_bar() } else { 0.0 };
        if s_plus == 0 {
            p_empty
        } else {
            1.0 - p_empty
        }
    }

    /// Law of the boosted channel used by the upper bound on an `N+1`-node graph.
    ///
    /// A zero sent from node `N-1` or `N` lands on node `N`, where the battery is
    /// full with certainty. Everywhere else this is [`HarvestParam::noiseless_law`].
    pub fn modified_law(&self, n: usize, s_plus: u8, x: u8, s: u8, q: usize) -> Result<f64> {
        if x > s {
            return Err(BehcError::BatteryConstraint { x, s });
        }
        Ok(self.modified_law_unchecked(n, s_plus, x, s, q))
    }

    pub(crate) fn modified_law_unchecked(&self, n: usize, s_plus: u8, x: u8, s: u8, q: usize) -> f64 {
        if x == 0 && q + 1 >= n {
            return if s_plus == 1 { 1.0 } else { 0.0 };
        }
        self.law_unchecked(s_plus, x, s)
    }

    /// The state law used by programs of the given kind.
    pub(crate) fn kind_law(&self, kind: BoundKind, n: usize, s_plus: u8, x: u8, s: u8, q: usize) -> f64 {
        match kind {
            BoundKind::LowerBound => self.law_unchecked(s_plus, x, s),
            BoundKind::UpperBound => self.modified_law_unchecked(n, s_plus, x, s, q),
        }
    }

    /// Stationary probability of an empty battery given `(u, q)`.
    ///
    /// `eta_bar^(u+1)`, except at the last node of the upper-bound graph where
    /// the battery is always full.
    pub fn marginal_pi(&self, kind: BoundKind, n: usize, u: usize, q: usize) -> Result<f64> {
        if q > n || u > q {
            return Err(BehcError::AuxSet { u, q });
        }
        Ok(self.marginal_pi_unchecked(kind, n, u, q))
    }

    pub(crate) fn marginal_pi_unchecked(&self, kind: BoundKind, n: usize, u: usize, q: usize) -> f64 {
        if kind == BoundKind::UpperBound && q == n {
            0.0
        } else {
            self.eta_bar_pow(u + 1)
        }
    }
}

/// Battery update `min(s - x + e, 1)`.
pub fn state_evolution(s: u8, x: u8, e: u8) -> Result<u8> {
    if x > s {
        return Err(BehcError::BatteryConstraint { x, s });
    }
    Ok((s - x + e).min(1))
}

/// Input produced by auxiliary symbol `u_plus` in battery state `s`:
/// `u_plus = 0` attempts a one, anything else sends a zero.
pub fn strategy_f(u_plus: usize, s: u8) -> u8 {
    if u_plus == 0 {
        s
    } else {
        0
    }
}

/// Auxiliary alphabets of the two programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuxSets {
    pub kind: BoundKind,
    pub n: usize,
}

impl AuxSets {
    pub fn new(kind: BoundKind, n: usize) -> Self {
        AuxSets { kind, n }
    }

    /// Values of `u` at node `q`: `0..=q`.
    pub fn u_set(&self, q: usize) -> std::ops::RangeInclusive<usize> {
        0..=q
    }

    /// Allowed successors `u_plus` of `(u, q)`.
    pub fn uplus_set(&self, u: usize, q: usize) -> Vec<usize> {
        if q < self.n {
            vec![0, u + 1]
        } else {
            match self.kind {
                BoundKind::LowerBound => vec![0],
                BoundKind::UpperBound => vec![0, 1],
            }
        }
    }
}

/// A binary-input binary-output memoryless channel `P(y|x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dmc {
    table: [[f64; 2]; 2],
}

impl Dmc {
    pub fn new(table: [[f64; 2]; 2]) -> Result<Self> {
        for row in &table {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-12 {
                return Err(BehcError::InvalidParameter(format!(
                    "channel row {row:?} is not a distribution"
                )));
            }
        }
        Ok(Dmc { table })
    }

    /// Binary symmetric channel with crossover `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(BehcError::InvalidParameter(format!("crossover {p}")));
        }
        Dmc::new([[1.0 - p, p], [p, 1.0 - p]])
    }

    pub fn noiseless() -> Self {
        Dmc {
            table: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    /// `P(y | x)`.
    pub fn prob(&self, y: u8, x: u8) -> f64 {
        self.table[x as usize][y as usize]
    }
}

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }
}
