//! Finite-support type and supply distributions with explicit CDF conventions.

use crate::curves::UtilityCurve;
use crate::error::{MarketError, Result};

/// Tolerance for probability-mass bookkeeping.
pub const MASS_TOL: f64 = 1e-9;

/// One buyer type: a value for the good, a utility curve, and population mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeAtom {
    pub value: f64,
    pub curve: UtilityCurve,
    pub mass: f64,
}

/// Joint distribution over buyer types, sorted by value.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistribution {
    atoms: Vec<TypeAtom>,
}

impl TypeDistribution {
    /// Validates masses and merges duplicate (value, curve) atoms.
    pub fn new(atoms: Vec<TypeAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(MarketError::InvalidDistribution("no type atoms".into()));
        }
        for a in &atoms {
            if !a.value.is_finite() || a.value <= 0.0 {
                return Err(MarketError::InvalidDistribution(format!(
                    "type value must be positive and finite, got {}",
                    a.value
                )));
            }
            if !a.mass.is_finite() || a.mass <= 0.0 {
                return Err(MarketError::InvalidDistribution(format!(
                    "type mass must be positive, got {}",
                    a.mass
                )));
            }
        }
        let mut merged: Vec<TypeAtom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            if let Some(prev) = merged
                .iter_mut()
                .find(|m| m.value == a.value && m.curve == a.curve)
            {
                prev.mass += a.mass;
            } else {
                merged.push(a);
            }
        }
        merged.sort_by(|x, y| x.value.partial_cmp(&y.value).unwrap());
        let total: f64 = merged.iter().map(|a| a.mass).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(MarketError::InvalidDistribution(format!(
                "type masses must sum to 1, got {total}"
            )));
        }
        Ok(TypeDistribution { atoms: merged })
    }

    pub fn atoms(&self) -> &[TypeAtom] {
        &self.atoms
    }

    /// Pr[value <= p] (inclusive).
    pub fn value_cdf(&self, p: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|a| a.value <= p)
            .map(|a| a.mass)
            .sum()
    }

    /// Mass on values strictly above p.
    pub fn mass_above(&self, p: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.value > p)
            .map(|a| a.mass)
            .sum()
    }

    pub fn distinct_values(&self) -> Vec<f64> {
        let mut vs: Vec<f64> = self.atoms.iter().map(|a| a.value).collect();
        vs.dedup();
        vs
    }

    pub fn max_value(&self) -> f64 {
        self.atoms.last().map(|a| a.value).unwrap_or(0.0)
    }
}

/// One supply outcome: a fraction of the market that can be served, with its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupplyAtom {
    pub q: f64,
    pub prob: f64,
}

/// Finite distribution over realized supply, sorted by quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyDistribution {
    atoms: Vec<SupplyAtom>,
}

impl SupplyDistribution {
    pub fn new(atoms: Vec<SupplyAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(MarketError::InvalidDistribution("no supply atoms".into()));
        }
        for a in &atoms {
            if !a.q.is_finite() || !(0.0..=1.0).contains(&a.q) {
                return Err(MarketError::InvalidDistribution(format!(
                    "supply fraction must lie in [0, 1], got {}",
                    a.q
                )));
            }
            if !a.prob.is_finite() || a.prob <= 0.0 {
                return Err(MarketError::InvalidDistribution(format!(
                    "supply probability must be positive, got {}",
                    a.prob
                )));
            }
        }
        let mut merged: Vec<SupplyAtom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            if let Some(prev) = merged.iter_mut().find(|m| m.q == a.q) {
                prev.prob += a.prob;
            } else {
                merged.push(a);
            }
        }
        merged.sort_by(|x, y| x.q.partial_cmp(&y.q).unwrap());
        let total: f64 = merged.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(MarketError::InvalidDistribution(format!(
                "supply probabilities must sum to 1, got {total}"
            )));
        }
        Ok(SupplyDistribution { atoms: merged })
    }

    pub fn atoms(&self) -> &[SupplyAtom] {
        &self.atoms
    }

    /// Pr[q < x] (strict). This is the convention under which the fixed-point
    /// identity for the spot-price distribution is exact on atoms.
    pub fn strict_cdf(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|a| a.q < x)
            .map(|a| a.prob)
            .sum()
    }

    pub fn min_q(&self) -> f64 {
        self.atoms.first().map(|a| a.q).unwrap_or(0.0)
    }
}
