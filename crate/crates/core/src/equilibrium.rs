//! Subgame-perfect equilibrium of the reservation + spot mechanism.
//!
//! The equilibrium is pinned down by two coupled objects: T(p), the reserved
//! volume from types with value at most p, and S(p), the CDF of the spot price.
//! S(p) = 1 - Pr[q < 1 - F(p) + T(p)], and a type reserves exactly when the
//! certain reservation surplus beats the expected spot surplus. Because S below
//! a value v only depends on decisions of lower values, one ascending pass over
//! the distinct values computes the unique equilibrium for a fixed tie rule.

use crate::clearing::clear;
use crate::curves::UtilityCurve;
use crate::error::{MarketError, Result};
use crate::population::{SupplyDistribution, TypeAtom, TypeDistribution};

/// How indifferent buyers act.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TieBreak {
    Reserve,
    Spot,
    /// Reserve this fraction of the indifferent mass.
    Fraction(f64),
}

/// Tie rule plus the utility tolerance that counts as indifference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieBreakPolicy {
    pub mode: TieBreak,
    pub eps_tie: f64,
}

impl Default for TieBreakPolicy {
    fn default() -> Self {
        TieBreakPolicy {
            mode: TieBreak::Reserve,
            eps_tie: 1e-9,
        }
    }
}

impl TieBreakPolicy {
    pub fn reserve_fraction(&self) -> f64 {
        match self.mode {
            TieBreak::Reserve => 1.0,
            TieBreak::Spot => 0.0,
            TieBreak::Fraction(t) => t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_tie.is_nan() || self.eps_tie <= 0.0 {
            return Err(MarketError::scenario("eps_tie must be positive"));
        }
        if let TieBreak::Fraction(t) = self.mode {
            if !(0.0..=1.0).contains(&t) {
                return Err(MarketError::scenario("tie fraction must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// One atom of the spot-price distribution. `trades == false` carries the
/// probability that reservations exhaust supply and the spot stage never runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotAtom {
    pub price: f64,
    pub prob: f64,
    pub trades: bool,
}

/// Distribution of the equilibrium spot price; probabilities sum to 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpotDistribution {
    pub atoms: Vec<SpotAtom>,
}

impl SpotDistribution {
    /// Pr[price <= p and the spot stage trades].
    pub fn cdf(&self, p: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.trades && a.price <= p)
            .map(|a| a.prob)
            .sum()
    }

    /// Expected spot price over trading events, plus a flag for no-trade mass.
    pub fn expected_price(&self) -> (f64, bool) {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut no_trade = false;
        for a in &self.atoms {
            if a.trades {
                num += a.price * a.prob;
                den += a.prob;
            } else if a.prob > 0.0 {
                no_trade = true;
            }
        }
        if den > 0.0 {
            (num / den, no_trade)
        } else {
            (0.0, no_trade)
        }
    }
}

/// Expected utility of entering the spot market with the given value and curve:
/// events price below value pay out the curve at the surplus, everything else
/// (price at or above value, no-trade) pays zero.
pub fn expected_spot_utility(value: f64, curve: &UtilityCurve, spot: &SpotDistribution) -> f64 {
    spot_utility(value, curve, &spot.atoms)
}

fn spot_utility(value: f64, curve: &UtilityCurve, atoms: &[SpotAtom]) -> f64 {
    atoms
        .iter()
        .filter(|a| a.trades && a.price < value)
        .map(|a| a.prob * curve.eval_at(value - a.price))
        .sum()
}

/// Solved equilibrium: per-atom reserve fractions, the cumulative reserved
/// volume by value, and the induced spot-price distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub p_r: f64,
    pub tie: TieBreakPolicy,
    /// Reserve fraction per type atom, parallel to the distribution's atoms.
    pub reserve_fraction: Vec<f64>,
    /// (value, T(value)) at each distinct value, ascending.
    pub t_table: Vec<(f64, f64)>,
    pub spot: SpotDistribution,
}

impl Equilibrium {
    pub fn total_reserved(&self) -> f64 {
        self.t_table.last().map(|&(_, t)| t).unwrap_or(0.0)
    }

    /// T(p): reserved volume from values at most p.
    pub fn t_at(&self, p: f64) -> f64 {
        let mut t = 0.0;
        for &(v, tv) in &self.t_table {
            if v <= p {
                t = tv;
            } else {
                break;
            }
        }
        t
    }

    /// Residual (non-reserving) population, parallel to the type atoms.
    pub fn residual_atoms(&self, types: &TypeDistribution) -> Vec<TypeAtom> {
        types
            .atoms()
            .iter()
            .zip(&self.reserve_fraction)
            .map(|(a, &y)| TypeAtom {
                value: a.value,
                curve: a.curve.clone(),
                mass: a.mass * (1.0 - y),
            })
            .collect()
    }

    pub fn max_residual_value(&self, types: &TypeDistribution) -> Option<f64> {
        types
            .atoms()
            .iter()
            .zip(&self.reserve_fraction)
            .filter(|(a, &y)| a.mass * (1.0 - y) > 0.0)
            .map(|(a, _)| a.value)
            .fold(None, |acc, v| Some(acc.map_or(v, |m: f64| m.max(v))))
    }
}

/// Computes the unique equilibrium for the given reservation price and tie rule
/// by one ascending pass over the distinct values.
pub fn solve(
    types: &TypeDistribution,
    supply: &SupplyDistribution,
    p_r: f64,
    tie: &TieBreakPolicy,
) -> Result<Equilibrium> {
    if !p_r.is_finite() || p_r <= 0.0 {
        return Err(MarketError::scenario(format!(
            "reservation price must be positive, got {p_r}"
        )));
    }
    tie.validate()?;

    let atoms = types.atoms();
    let mut reserve_fraction = vec![0.0; atoms.len()];
    let mut spot_atoms: Vec<SpotAtom> = Vec::new();

    let cdf0 = 1.0 - supply.strict_cdf(1.0);
    if cdf0 > 0.0 {
        spot_atoms.push(SpotAtom {
            price: 0.0,
            prob: cdf0,
            trades: true,
        });
    }
    let mut prev_cdf = cdf0;
    let mut t_cum = 0.0;
    let mut mass_le = 0.0;
    let mut t_table: Vec<(f64, f64)> = Vec::new();

    let mut i = 0;
    while i < atoms.len() {
        let v = atoms[i].value;
        // decide every type at this value against spot prices strictly below it
        let mut j = i;
        while j < atoms.len() && atoms[j].value == v {
            let y = if v < p_r {
                0.0
            } else {
                let ru = atoms[j].curve.eval_at(v - p_r);
                let su = spot_utility(v, &atoms[j].curve, &spot_atoms);
                let d = ru - su;
                if d.abs() <= tie.eps_tie {
                    tie.reserve_fraction()
                } else if d > 0.0 {
                    1.0
                } else {
                    0.0
                }
            };
            reserve_fraction[j] = y;
            t_cum += y * atoms[j].mass;
            mass_le += atoms[j].mass;
            j += 1;
        }
        t_table.push((v, t_cum));

        let cdf = 1.0 - supply.strict_cdf(1.0 - mass_le + t_cum);
        let prob = cdf - prev_cdf;
        if prob > 0.0 {
            spot_atoms.push(SpotAtom {
                price: v,
                prob,
                trades: true,
            });
        }
        prev_cdf = cdf;
        i = j;
    }

    // remaining mass: supply short of the reserved volume, the spot stage never runs
    let no_trade = 1.0 - prev_cdf;
    if no_trade > 0.0 {
        let price = atoms
            .iter()
            .zip(&reserve_fraction)
            .filter(|(a, &y)| a.mass * (1.0 - y) > 0.0)
            .map(|(a, _)| a.value)
            .fold(types.max_value(), f64::max);
        spot_atoms.push(SpotAtom {
            price,
            prob: no_trade,
            trades: false,
        });
    }

    Ok(Equilibrium {
        p_r,
        tie: *tie,
        reserve_fraction,
        t_table,
        spot: SpotDistribution { atoms: spot_atoms },
    })
}

/// Residuals of the fixed-point characterization plus per-type deviation gains.
#[derive(Debug, Clone, Copy)]
pub struct VerifyReport {
    /// Worst gap between the stored/identity spot CDF and the CDF recomputed by
    /// actually clearing the residual market per supply atom.
    pub identity_residual: f64,
    /// Worst inconsistency inside the stored profile (T table vs reserve fractions).
    pub consistency_residual: f64,
    /// Largest raw utility gain any type could get by switching action.
    pub max_deviation_gain: f64,
    /// Overall residual: identity, consistency, and deviation gains beyond the
    /// tie tolerance.
    pub max_residual: f64,
}

/// Recomputes the spot stage from the profile by clearing each supply atom
/// against the residual population and checks the stored equilibrium against it.
pub fn verify_equilibrium(
    eq: &Equilibrium,
    types: &TypeDistribution,
    supply: &SupplyDistribution,
) -> VerifyReport {
    let atoms = types.atoms();
    let mut consistency: f64 = 0.0;

    // T table must match the reserve fractions, and fractions must be actions
    let mut t = 0.0;
    let mut k = 0;
    for &(v, tv) in &eq.t_table {
        while k < atoms.len() && atoms[k].value <= v {
            let y = eq.reserve_fraction[k];
            consistency = consistency.max((y - y.clamp(0.0, 1.0)).abs());
            if atoms[k].value < eq.p_r {
                consistency = consistency.max(y.abs());
            }
            t += y * atoms[k].mass;
            k += 1;
        }
        consistency = consistency.max((t - tv).abs());
    }

    let t_total = eq.total_reserved();
    let residual = eq.residual_atoms(types);

    // actual spot events per supply atom; the boundary q == T counts as a
    // cleared (priced) event so the strict-CDF identity stays exact
    struct Event {
        price: f64,
        prob: f64,
        trades: bool,
    }
    let events: Vec<Event> = supply
        .atoms()
        .iter()
        .map(|s| {
            let spot_supply = s.q - s.q.min(t_total);
            let r = clear(&residual, spot_supply);
            Event {
                price: if r.price.is_finite() { r.price } else { types.max_value() },
                prob: s.prob,
                trades: s.q >= t_total,
            }
        })
        .collect();

    let mut identity: f64 = 0.0;
    for v in std::iter::once(0.0).chain(types.distinct_values()) {
        let actual: f64 = events
            .iter()
            .filter(|e| e.trades && e.price <= v)
            .map(|e| e.prob)
            .sum();
        let formula = 1.0 - supply.strict_cdf(1.0 - types.value_cdf(v) + eq.t_at(v));
        let stored = eq.spot.cdf(v);
        identity = identity.max((actual - formula).abs()).max((stored - formula).abs());
    }

    // per-type best responses against the recomputed spot events
    let spot_atoms: Vec<SpotAtom> = events
        .iter()
        .map(|e| SpotAtom {
            price: e.price,
            prob: e.prob,
            trades: e.trades,
        })
        .collect();
    let mut max_gain = f64::NEG_INFINITY;
    for (a, &y) in atoms.iter().zip(&eq.reserve_fraction) {
        if a.value < eq.p_r {
            continue;
        }
        let ru = a.curve.eval_at(a.value - eq.p_r);
        let su = spot_utility(a.value, &a.curve, &spot_atoms);
        if y > 0.0 {
            max_gain = max_gain.max(su - ru);
        }
        if y < 1.0 {
            max_gain = max_gain.max(ru - su);
        }
    }
    if max_gain == f64::NEG_INFINITY {
        max_gain = 0.0;
    }

    VerifyReport {
        identity_residual: identity,
        consistency_residual: consistency,
        max_deviation_gain: max_gain,
        max_residual: identity
            .max(consistency)
            .max((max_gain - eq.tie.eps_tie).max(0.0)),
    }
}

/// Standing-assumption report: reservations never oversubscribed, and the
/// reservation price at or above the expected spot price.
#[derive(Debug, Clone, Copy)]
pub struct AssumptionReport {
    pub a1: bool,
    pub a2: bool,
    pub expected_spot_price: f64,
    /// Some probability mass never reaches the spot stage (q < T events).
    pub has_no_trade: bool,
}

pub fn validate_assumptions(eq: &Equilibrium, supply: &SupplyDistribution) -> AssumptionReport {
    let a1 = supply.strict_cdf(eq.total_reserved()) == 0.0;
    let (expected_spot_price, has_no_trade) = eq.spot.expected_price();
    AssumptionReport {
        a1,
        a2: eq.p_r >= expected_spot_price,
        expected_spot_price,
        has_no_trade,
    }
}
