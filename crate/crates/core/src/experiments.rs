//! Comparative statics: risk-aversion shifts, dominance checks, indifference
//! budgets, and reservation-price sweeps, plus the seeded scenario generator
//! used by the randomized property sweeps.

use crate::curves::{compare_risk_aversion, RiskOrder, UtilityCurve};
use crate::equilibrium::{
    expected_spot_utility, solve, validate_assumptions, Equilibrium, TieBreakPolicy,
};
use crate::error::{MarketError, Result};
use crate::mechanisms::run_dual;
use crate::population::{SupplyAtom, SupplyDistribution, TypeAtom, TypeDistribution};

/// Applies a pointwise risk transform: values and masses stay, curves map
/// through `g`, which must return a weakly more risk-averse curve per atom.
pub fn apply_risk_transform<G>(types: &TypeDistribution, g: G) -> Result<TypeDistribution>
where
    G: Fn(&TypeAtom) -> Result<UtilityCurve>,
{
    let mut atoms = Vec::with_capacity(types.atoms().len());
    for a in types.atoms() {
        let curve = g(a)?;
        match compare_risk_aversion(&curve, &a.curve) {
            RiskOrder::MoreAverse | RiskOrder::Equal => {}
            _ => return Err(MarketError::NotMoreAverse { value: a.value }),
        }
        atoms.push(TypeAtom {
            value: a.value,
            curve,
            mass: a.mass,
        });
    }
    TypeDistribution::new(atoms)
}

/// Pointwise comparison of two equilibria after a risk shift.
#[derive(Debug, Clone)]
pub struct StaticsReport {
    pub grid: Vec<f64>,
    pub reserved_base: Vec<f64>,
    pub reserved_shifted: Vec<f64>,
    pub spot_cdf_base: Vec<f64>,
    pub spot_cdf_shifted: Vec<f64>,
    pub revenue_base: f64,
    pub revenue_shifted: f64,
    /// Reserved volume weakly rises everywhere on the grid.
    pub reservations_monotone: bool,
    /// Spot prices weakly rise everywhere (CDF weakly falls).
    pub prices_monotone: bool,
    pub revenue_monotone: bool,
}

impl StaticsReport {
    pub fn all_hold(&self) -> bool {
        self.reservations_monotone && self.prices_monotone && self.revenue_monotone
    }
}

const STATICS_TOL: f64 = 1e-9;

/// Solves both markets and checks that increased risk aversion weakly raises
/// reservations and spot prices pointwise, and weakly raises revenue. Both
/// equilibria must satisfy the standing assumptions.
pub fn check_statics(
    base: &TypeDistribution,
    shifted: &TypeDistribution,
    supply: &SupplyDistribution,
    p_r: f64,
    tie: &TieBreakPolicy,
) -> Result<StaticsReport> {
    let eq_base = solve(base, supply, p_r, tie)?;
    let eq_shifted = solve(shifted, supply, p_r, tie)?;
    for (name, eq) in [("base", &eq_base), ("shifted", &eq_shifted)] {
        let a = validate_assumptions(eq, supply);
        if !(a.a1 && a.a2) {
            return Err(MarketError::AssumptionViolated(format!(
                "{name} market violates the standing assumptions (oversubscribed: {}, \
                 price below expected spot price: {})",
                !a.a1, !a.a2
            )));
        }
    }

    let mut grid: Vec<f64> = base
        .distinct_values()
        .into_iter()
        .chain(shifted.distinct_values())
        .collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let reserved_base: Vec<f64> = grid.iter().map(|&p| eq_base.t_at(p)).collect();
    let reserved_shifted: Vec<f64> = grid.iter().map(|&p| eq_shifted.t_at(p)).collect();
    let spot_cdf_base: Vec<f64> = grid.iter().map(|&p| eq_base.spot.cdf(p)).collect();
    let spot_cdf_shifted: Vec<f64> = grid.iter().map(|&p| eq_shifted.spot.cdf(p)).collect();

    let reservations_monotone = reserved_base
        .iter()
        .zip(&reserved_shifted)
        .all(|(b, s)| s - b >= -STATICS_TOL);
    let prices_monotone = spot_cdf_base
        .iter()
        .zip(&spot_cdf_shifted)
        .all(|(b, s)| b - s >= -STATICS_TOL);

    let revenue_base = run_dual(base, supply, &eq_base).revenue;
    let revenue_shifted = run_dual(shifted, supply, &eq_shifted).revenue;
    let revenue_monotone = revenue_shifted - revenue_base >= -STATICS_TOL;

    Ok(StaticsReport {
        grid,
        reserved_base,
        reserved_shifted,
        spot_cdf_base,
        spot_cdf_shifted,
        revenue_base,
        revenue_shifted,
        reservations_monotone,
        prices_monotone,
        revenue_monotone,
    })
}

/// For each value, the least soft budget at which a buyer weakly prefers
/// reserving under the given equilibrium's spot prices; None when no budget
/// below the value reserves.
pub fn indifference_budgets(
    eq: &Equilibrium,
    values: &[f64],
    delta: f64,
) -> Vec<(f64, Option<f64>)> {
    values
        .iter()
        .map(|&v| (v, indifference_budget(eq, v, delta)))
        .collect()
}

fn indifference_budget(eq: &Equilibrium, value: f64, delta: f64) -> Option<f64> {
    if value < eq.p_r {
        return None;
    }
    let prefers_reserve = |budget: f64| -> bool {
        match UtilityCurve::soft_budget(value, budget) {
            Ok(curve) => {
                let ru = curve.eval_at(value - eq.p_r);
                let su = expected_spot_utility(value, &curve, &eq.spot);
                ru >= su - 1e-12
            }
            Err(_) => false,
        }
    };
    if prefers_reserve(0.0) {
        return Some(0.0);
    }
    let hi0 = value - delta.min(value * 0.5);
    if !prefers_reserve(hi0) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, hi0);
    while hi - lo > delta {
        let mid = 0.5 * (lo + hi);
        if prefers_reserve(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub p_r: f64,
    pub revenue: f64,
    pub welfare: f64,
    pub efficiency: f64,
    pub total_reserved: f64,
    pub a1: bool,
    pub a2: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Index of the revenue-maximizing row among those satisfying both
    /// assumptions; ties break toward the lower price.
    pub best: usize,
}

/// Solves every grid price, reports dual metrics per row, and selects the
/// revenue argmax among assumption-satisfying rows.
pub fn sweep_reservation_price(
    types: &TypeDistribution,
    supply: &SupplyDistribution,
    grid: &[f64],
    tie: &TieBreakPolicy,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(MarketError::scenario("empty reservation price grid"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &p in grid {
        let eq = solve(types, supply, p, tie)?;
        let a = validate_assumptions(&eq, supply);
        let out = run_dual(types, supply, &eq);
        rows.push(SweepRow {
            p_r: p,
            revenue: out.revenue,
            welfare: out.welfare,
            efficiency: out.efficiency,
            total_reserved: eq.total_reserved(),
            a1: a.a1,
            a2: a.a2,
        });
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].p_r.partial_cmp(&rows[b].p_r).unwrap());
    let mut best: Option<usize> = None;
    for &i in &order {
        if !(rows[i].a1 && rows[i].a2) {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(j) if rows[i].revenue > rows[j].revenue => best = Some(i),
            _ => {}
        }
    }
    let best = best.ok_or(MarketError::NoValidPrice)?;
    Ok(SweepResult { rows, best })
}

/// Seeded scenario generator for the randomized property sweeps. Values come
/// from a small integer grid scaled into (0, 1], masses from a symmetric random
/// simplex, curves mix risk-neutral, soft-budget, and kinked shapes, and supply
/// stays strictly inside (0, 1) so some scarcity always has positive probability.
pub mod random {
    use super::*;
    use rand::Rng;

    pub fn scenario<R: Rng + ?Sized>(
        rng: &mut R,
        max_types: usize,
        max_supply: usize,
    ) -> (TypeDistribution, SupplyDistribution) {
        let n_types = rng.random_range(2..=max_types.max(2));
        let mut grid: Vec<u32> = (1..=20).collect();
        for i in 0..n_types {
            let j = rng.random_range(i..grid.len());
            grid.swap(i, j);
        }
        let mut masses: Vec<f64> = (0..n_types)
            .map(|_| 1e-6 - (1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = masses.iter().sum();
        for m in &mut masses {
            *m /= total;
        }
        let atoms: Vec<TypeAtom> = grid[..n_types]
            .iter()
            .zip(&masses)
            .map(|(&g, &mass)| {
                let value = g as f64 / 20.0;
                TypeAtom {
                    value,
                    curve: random_curve(rng, value),
                    mass,
                }
            })
            .collect();
        let types = TypeDistribution::new(atoms).unwrap();

        let n_supply = rng.random_range(1..=max_supply.max(1));
        let mut probs: Vec<f64> = (0..n_supply)
            .map(|_| 1e-6 - (1.0 - rng.random::<f64>()).ln())
            .collect();
        let pt: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= pt;
        }
        let supply_atoms: Vec<SupplyAtom> = probs
            .iter()
            .map(|&prob| SupplyAtom {
                q: rng.random_range(0.15..0.995),
                prob,
            })
            .collect();
        let supply = SupplyDistribution::new(supply_atoms).unwrap();
        (types, supply)
    }

    pub fn random_curve<R: Rng + ?Sized>(rng: &mut R, value: f64) -> UtilityCurve {
        let r: f64 = rng.random();
        if r < 0.35 {
            UtilityCurve::identity()
        } else if r < 0.8 {
            let budget = value * rng.random_range(0.05..0.95);
            UtilityCurve::soft_budget(value, budget).unwrap()
        } else {
            let z1 = value * rng.random_range(0.1..0.6);
            let s1 = rng.random_range(0.0..0.9);
            UtilityCurve::new(vec![(z1, z1)], s1).unwrap()
        }
    }

    /// A concave slope-1-at-zero transform suitable for composing onto any curve.
    pub fn concave_transform<R: Rng + ?Sized>(rng: &mut R) -> UtilityCurve {
        if rng.random_bool(0.6) {
            UtilityCurve::capped(rng.random_range(0.02..0.8)).unwrap()
        } else {
            let z1 = rng.random_range(0.02..0.5);
            let s1 = rng.random_range(0.0..0.9);
            UtilityCurve::new(vec![(z1, z1)], s1).unwrap()
        }
    }

    /// Candidate reservation prices around the value grid.
    pub fn price_candidates(types: &TypeDistribution) -> Vec<f64> {
        let vs = types.distinct_values();
        let mut out = Vec::with_capacity(vs.len() * 3 + 1);
        for (i, &v) in vs.iter().enumerate() {
            out.push(v * 0.999);
            out.push(v);
            if let Some(&next) = vs.get(i + 1) {
                out.push(0.5 * (v + next));
            }
        }
        out.push(types.max_value() * 1.01);
        out
    }

    /// Draws markets until one admits a reservation price satisfying both
    /// standing assumptions; prefers prices that put mass into the reservation
    /// stage. Always terminates: a price above every value is trivially valid.
    pub fn market_with_assumptions<R: Rng + ?Sized>(
        rng: &mut R,
        tie: &TieBreakPolicy,
    ) -> (TypeDistribution, SupplyDistribution, Equilibrium) {
        for _ in 0..60 {
            let (types, supply) = scenario(rng, 12, 6);
            let mut best: Option<Equilibrium> = None;
            for p in price_candidates(&types) {
                if p <= 0.0 {
                    continue;
                }
                let eq = solve(&types, &supply, p, tie).unwrap();
                let a = validate_assumptions(&eq, &supply);
                if a.a1 && a.a2 {
                    let better = match &best {
                        None => true,
                        Some(b) => eq.total_reserved() > b.total_reserved(),
                    };
                    if better {
                        best = Some(eq);
                    }
                }
            }
            if let Some(eq) = best {
                // keep a sprinkling of empty-reservation markets for edge coverage
                if eq.total_reserved() > 0.0 || rng.random_bool(0.15) {
                    return (types, supply, eq);
                }
            }
        }
        let (types, supply) = scenario(rng, 12, 6);
        let p = types.max_value() * 1.01;
        let eq = solve(&types, &supply, p, tie).unwrap();
        (types, supply, eq)
    }

    /// A market holding two curves at one shared value ordered strictly by risk
    /// aversion; returns the shared value and the (less, more) averse curves.
    pub fn scenario_with_ordered_pair<R: Rng + ?Sized>(
        rng: &mut R,
    ) -> (
        TypeDistribution,
        SupplyDistribution,
        f64,
        UtilityCurve,
        UtilityCurve,
    ) {
        loop {
            let (types, supply) = scenario(rng, 8, 5);
            let idx = rng.random_range(0..types.atoms().len());
            let pick = types.atoms()[idx].clone();
            let mut more = None;
            for _ in 0..10 {
                let t = concave_transform(rng);
                let candidate = match crate::curves::compose_concave(&pick.curve, &t) {
                    Ok(c) => c,
                    Err(_) => continue,
                };
                if compare_risk_aversion(&candidate, &pick.curve) == RiskOrder::MoreAverse {
                    more = Some(candidate);
                    break;
                }
            }
            let Some(more) = more else { continue };
            let mut atoms: Vec<TypeAtom> = types.atoms().to_vec();
            atoms[idx].mass = pick.mass * 0.5;
            atoms.push(TypeAtom {
                value: pick.value,
                curve: more.clone(),
                mass: pick.mass * 0.5,
            });
            let types = TypeDistribution::new(atoms).unwrap();
            return (types, supply, pick.value, pick.curve, more);
        }
    }
}
