//! Revenue, welfare, and efficiency of the three mechanisms, plus the
//! pay-the-spot-price welfare benchmark that sandwiches dual welfare between
//! itself and the spot-only market.

use crate::clearing::clear;
use crate::equilibrium::{validate_assumptions, Equilibrium, TieBreakPolicy};
use crate::error::{MarketError, Result};
use crate::population::{SupplyDistribution, TypeDistribution};

/// Outcome at one realized supply level.
///
/// `allocation` and `payment` are per unit of type mass, parallel to the type
/// atoms; `payment` is the expected payment (allocation times price paid).
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyOutcome {
    pub q: f64,
    pub prob: f64,
    pub price: f64,
    pub trades: bool,
    pub allocation: Vec<f64>,
    pub payment: Vec<f64>,
    pub revenue: f64,
    pub welfare: f64,
    pub efficiency: f64,
    pub buyer_utility: f64,
}

/// Expected mechanism metrics over the supply distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismOutcome {
    pub per_supply: Vec<SupplyOutcome>,
    pub revenue: f64,
    pub welfare: f64,
    pub efficiency: f64,
    pub buyer_utility: f64,
}

fn aggregate(per_supply: Vec<SupplyOutcome>) -> MechanismOutcome {
    let mut revenue = 0.0;
    let mut welfare = 0.0;
    let mut efficiency = 0.0;
    let mut buyer_utility = 0.0;
    for s in &per_supply {
        revenue += s.prob * s.revenue;
        welfare += s.prob * s.welfare;
        efficiency += s.prob * s.efficiency;
        buyer_utility += s.prob * s.buyer_utility;
    }
    MechanismOutcome {
        per_supply,
        revenue,
        welfare,
        efficiency,
        buyer_utility,
    }
}

/// Spot-only market: every supply level clears against the full population;
/// winners pay the clearing price.
pub fn run_spot_only(types: &TypeDistribution, supply: &SupplyDistribution) -> MechanismOutcome {
    let atoms = types.atoms();
    let per_supply = supply
        .atoms()
        .iter()
        .map(|s| {
            let r = clear(atoms, s.q);
            let revenue = if r.trades { r.price * r.sold_mass } else { 0.0 };
            let mut utility = 0.0;
            let mut efficiency = 0.0;
            let mut payment = Vec::with_capacity(atoms.len());
            for (a, &alloc) in atoms.iter().zip(&r.allocations) {
                if alloc > 0.0 {
                    utility += alloc * a.mass * a.curve.eval_at(a.value - r.price);
                    efficiency += alloc * a.mass * a.value;
                }
                payment.push(alloc * r.price);
            }
            SupplyOutcome {
                q: s.q,
                prob: s.prob,
                price: r.price,
                trades: r.trades,
                allocation: r.allocations,
                payment,
                revenue,
                welfare: revenue + utility,
                efficiency,
                buyer_utility: utility,
            }
        })
        .collect();
    aggregate(per_supply)
}

/// Reservation-only market at a fixed price: every type with positive surplus
/// buys (indifferent types follow the tie rule) and oversubscription is
/// resolved by a uniform lottery.
pub fn run_reservation_only(
    types: &TypeDistribution,
    supply: &SupplyDistribution,
    p_r: f64,
    tie: &TieBreakPolicy,
) -> Result<MechanismOutcome> {
    if !p_r.is_finite() || p_r <= 0.0 {
        return Err(MarketError::scenario(format!(
            "reservation price must be positive, got {p_r}"
        )));
    }
    tie.validate()?;

    let atoms = types.atoms();
    let buy: Vec<f64> = atoms
        .iter()
        .map(|a| {
            if a.value < p_r {
                0.0
            } else if a.curve.eval_at(a.value - p_r) <= tie.eps_tie {
                tie.reserve_fraction()
            } else {
                1.0
            }
        })
        .collect();
    let demand: f64 = atoms.iter().zip(&buy).map(|(a, &b)| b * a.mass).sum();

    let per_supply = supply
        .atoms()
        .iter()
        .map(|s| {
            let served = s.q.min(demand);
            let alloc_prob = if demand > 0.0 { served / demand } else { 0.0 };
            let revenue = p_r * served;
            let mut utility = 0.0;
            let mut efficiency = 0.0;
            let mut allocation = Vec::with_capacity(atoms.len());
            let mut payment = Vec::with_capacity(atoms.len());
            for (a, &b) in atoms.iter().zip(&buy) {
                let alloc = b * alloc_prob;
                if alloc > 0.0 {
                    utility += alloc * a.mass * a.curve.eval_at(a.value - p_r);
                    efficiency += alloc * a.mass * a.value;
                }
                allocation.push(alloc);
                payment.push(alloc * p_r);
            }
            SupplyOutcome {
                q: s.q,
                prob: s.prob,
                price: p_r,
                trades: demand > 0.0,
                allocation,
                payment,
                revenue,
                welfare: revenue + utility,
                efficiency,
                buyer_utility: utility,
            }
        })
        .collect();
    Ok(aggregate(per_supply))
}

/// Dual mechanism: reservations are honored first (rationed uniformly if supply
/// falls short), then the residual supply clears against the residual population.
pub fn run_dual(
    types: &TypeDistribution,
    supply: &SupplyDistribution,
    eq: &Equilibrium,
) -> MechanismOutcome {
    let atoms = types.atoms();
    let t_total = eq.total_reserved();
    let residual = eq.residual_atoms(types);

    let per_supply = supply
        .atoms()
        .iter()
        .map(|s| {
            let reserved_served = s.q.min(t_total);
            let reserve_alloc = if t_total > 0.0 { reserved_served / t_total } else { 0.0 };
            let spot = clear(&residual, s.q - reserved_served);
            let spot_revenue = if spot.trades { spot.price * spot.sold_mass } else { 0.0 };
            let revenue = eq.p_r * reserved_served + spot_revenue;

            let mut utility = 0.0;
            let mut efficiency = 0.0;
            let mut allocation = Vec::with_capacity(atoms.len());
            let mut payment = Vec::with_capacity(atoms.len());
            for (i, a) in atoms.iter().enumerate() {
                let y = eq.reserve_fraction[i];
                let res_part = y * reserve_alloc;
                let spot_part = (1.0 - y) * spot.allocations[i];
                if res_part > 0.0 {
                    utility += res_part * a.mass * a.curve.eval_at(a.value - eq.p_r);
                    efficiency += res_part * a.mass * a.value;
                }
                if spot_part > 0.0 {
                    utility += spot_part * a.mass * a.curve.eval_at(a.value - spot.price);
                    efficiency += spot_part * a.mass * a.value;
                }
                allocation.push(res_part + spot_part);
                payment.push(res_part * eq.p_r + spot_part * spot.price);
            }
            SupplyOutcome {
                q: s.q,
                prob: s.prob,
                price: spot.price,
                trades: spot.trades,
                allocation,
                payment,
                revenue,
                welfare: revenue + utility,
                efficiency,
                buyer_utility: utility,
            }
        })
        .collect();
    aggregate(per_supply)
}

/// Welfare of the accounting benchmark in which reservers pay the realized spot
/// price instead of the reservation price, at one supply level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkAtom {
    pub q: f64,
    pub prob: f64,
    /// Dual spot price at this supply level.
    pub price: f64,
    /// Contribution of reservers at values at or below the spot price: payment only.
    pub wel_minus: f64,
    /// Contribution of everyone above the price (all served, all pay the spot
    /// price) plus the rationed marginal mass, whose surplus is zero.
    pub wel_plus: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkWelfare {
    pub per_supply: Vec<BenchmarkAtom>,
    pub expected: f64,
}

/// Computes the benchmark welfare per supply atom. Requires that reservations
/// are never oversubscribed.
pub fn benchmark_welfare(
    types: &TypeDistribution,
    supply: &SupplyDistribution,
    eq: &Equilibrium,
) -> Result<BenchmarkWelfare> {
    if !validate_assumptions(eq, supply).a1 {
        return Err(MarketError::AssumptionViolated(
            "reservations can be oversubscribed (some supply falls below the reserved volume)".into(),
        ));
    }
    let atoms = types.atoms();
    let t_total = eq.total_reserved();
    let residual = eq.residual_atoms(types);

    let mut per_supply = Vec::with_capacity(supply.atoms().len());
    let mut expected = 0.0;
    for s in supply.atoms() {
        let spot = clear(&residual, s.q - s.q.min(t_total));
        let price = spot.price;
        let wel_minus = price * eq.t_at(price);
        let mut wel_plus = 0.0;
        for (i, a) in atoms.iter().enumerate() {
            if a.value > price {
                wel_plus += a.mass * (a.curve.eval_at(a.value - price) + price);
            } else if a.value == price {
                // rationed marginal spot mass pays the price at zero surplus
                let y = eq.reserve_fraction[i];
                wel_plus += (1.0 - y) * spot.allocations[i] * a.mass * price;
            }
        }
        expected += s.prob * (wel_minus + wel_plus);
        per_supply.push(BenchmarkAtom {
            q: s.q,
            prob: s.prob,
            price,
            wel_minus,
            wel_plus,
        });
    }
    Ok(BenchmarkWelfare { per_supply, expected })
}

/// Welfare-chain report: dual welfare dominates the benchmark in expectation,
/// the benchmark dominates spot-only welfare at every supply level, and dual
/// spot prices dominate spot-only prices pointwise.
#[derive(Debug, Clone, Copy)]
pub struct WelfareChain {
    pub dual_beats_benchmark: bool,
    pub benchmark_beats_spot_pointwise: bool,
    pub dual_beats_spot: bool,
    pub price_dominance: bool,
    pub dual_welfare: f64,
    pub benchmark_welfare: f64,
    pub spot_welfare: f64,
}

const CHAIN_TOL: f64 = 1e-9;

/// Checks the welfare chain. Requires both standing assumptions.
pub fn check_welfare_chain(
    types: &TypeDistribution,
    supply: &SupplyDistribution,
    eq: &Equilibrium,
) -> Result<WelfareChain> {
    let a = validate_assumptions(eq, supply);
    if !a.a1 {
        return Err(MarketError::AssumptionViolated(
            "reservations can be oversubscribed".into(),
        ));
    }
    if !a.a2 {
        return Err(MarketError::AssumptionViolated(format!(
            "reservation price {} is below the expected spot price {}",
            eq.p_r, a.expected_spot_price
        )));
    }

    let dual = run_dual(types, supply, eq);
    let spot = run_spot_only(types, supply);
    let bench = benchmark_welfare(types, supply, eq)?;

    let dual_beats_benchmark = dual.welfare >= bench.expected - CHAIN_TOL;
    let benchmark_beats_spot_pointwise = bench
        .per_supply
        .iter()
        .zip(spot.per_supply.iter())
        .all(|(b, s)| b.wel_minus + b.wel_plus >= s.welfare - CHAIN_TOL);
    let dual_beats_spot = dual.welfare >= spot.welfare - CHAIN_TOL;
    let price_dominance = dual
        .per_supply
        .iter()
        .zip(spot.per_supply.iter())
        .all(|(d, s)| d.price >= s.price - CHAIN_TOL);

    Ok(WelfareChain {
        dual_beats_benchmark,
        benchmark_beats_spot_pointwise,
        dual_beats_spot,
        price_dominance,
        dual_welfare: dual.welfare,
        benchmark_welfare: bench.expected,
        spot_welfare: spot.welfare,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::UtilityCurve;
    use crate::equilibrium::solve;
    use crate::population::{SupplyAtom, TypeAtom};

    fn ex_market() -> (TypeDistribution, SupplyDistribution) {
        let f = TypeDistribution::new(vec![
            TypeAtom {
                value: 5.0,
                curve: UtilityCurve::soft_budget(5.0, 0.0).unwrap(),
                mass: 0.49,
            },
            TypeAtom {
                value: 10.0,
                curve: UtilityCurve::soft_budget(10.0, 9.99).unwrap(),
                mass: 0.5,
            },
            TypeAtom {
                value: 20.0,
                curve: UtilityCurve::soft_budget(20.0, 0.0).unwrap(),
                mass: 0.01,
            },
        ])
        .unwrap();
        let q = SupplyDistribution::new(vec![
            SupplyAtom { q: 0.99, prob: 0.8 },
            SupplyAtom { q: 0.505, prob: 0.2 },
        ])
        .unwrap();
        (f, q)
    }

    #[test]
    fn spot_only_reference_values() {
        let (f, q) = ex_market();
        let out = run_spot_only(&f, &q);
        assert!((out.revenue - 4.97).abs() < 1e-9);
        assert!((out.welfare - 5.114).abs() < 1e-9);
        assert!((out.welfare - (out.buyer_utility + out.revenue)).abs() < 1e-12);
    }

    #[test]
    fn spot_only_with_certain_full_supply_gives_everything_away() {
        let (f, _) = ex_market();
        let q = SupplyDistribution::new(vec![SupplyAtom { q: 1.0, prob: 1.0 }]).unwrap();
        let out = run_spot_only(&f, &q);
        assert_eq!(out.revenue, 0.0);
        let ev: f64 = f.atoms().iter().map(|a| a.mass * a.value).sum();
        assert!((out.efficiency - ev).abs() < 1e-12);
    }

    #[test]
    fn reservation_only_reference_values() {
        let (f, q) = ex_market();
        let tie = TieBreakPolicy::default();
        let out = run_reservation_only(&f, &q, 10.0, &tie).unwrap();
        assert!((out.revenue - 5.09).abs() < 1e-9);

        let none = run_reservation_only(&f, &q, 30.0, &tie).unwrap();
        assert_eq!(none.revenue, 0.0);
        assert_eq!(none.welfare, 0.0);
        assert_eq!(none.efficiency, 0.0);

        // below every value the whole market buys
        let all = run_reservation_only(&f, &q, 2.0, &tie).unwrap();
        let eq_supply: f64 = q.atoms().iter().map(|a| a.prob * a.q).sum();
        assert!((all.revenue - 2.0 * eq_supply).abs() < 1e-12);
    }

    #[test]
    fn dual_reference_values() {
        let (f, q) = ex_market();
        let eq = solve(&f, &q, 9.99, &TieBreakPolicy::default()).unwrap();
        let out = run_dual(&f, &q, &eq);
        assert!((out.revenue - 6.975).abs() < 1e-9);
        assert!((out.welfare - 7.1).abs() < 1e-9);
        assert!((out.efficiency - 7.1).abs() < 1e-9);
        assert!((out.welfare - (out.buyer_utility + out.revenue)).abs() < 1e-12);
    }

    #[test]
    fn dual_with_empty_reservation_stage_equals_spot_only() {
        let (f, q) = ex_market();
        let eq = solve(&f, &q, 25.0, &TieBreakPolicy::default()).unwrap();
        assert_eq!(eq.total_reserved(), 0.0);
        let dual = run_dual(&f, &q, &eq);
        let spot = run_spot_only(&f, &q);
        assert_eq!(dual.revenue, spot.revenue);
        assert_eq!(dual.welfare, spot.welfare);
        assert_eq!(dual.efficiency, spot.efficiency);
    }

    #[test]
    fn benchmark_reference_values() {
        let (f, q) = ex_market();
        let eq = solve(&f, &q, 9.99, &TieBreakPolicy::default()).unwrap();
        let b = benchmark_welfare(&f, &q, &eq).unwrap();
        // supply atoms sorted ascending: index 0 is q = 0.505 (price 20)
        assert_eq!(b.per_supply[0].price, 20.0);
        assert!((b.per_supply[0].wel_minus - 10.0).abs() < 1e-12);
        assert_eq!(b.per_supply[1].price, 5.0);
        assert_eq!(b.per_supply[1].wel_minus, 0.0);
    }

    #[test]
    fn benchmark_with_no_reservers_matches_spot_welfare() {
        let (f, q) = ex_market();
        let eq = solve(&f, &q, 25.0, &TieBreakPolicy::default()).unwrap();
        let b = benchmark_welfare(&f, &q, &eq).unwrap();
        let spot = run_spot_only(&f, &q);
        for (ba, sa) in b.per_supply.iter().zip(spot.per_supply.iter()) {
            assert!((ba.wel_minus + ba.wel_plus - sa.welfare).abs() < 1e-12);
        }
    }

    #[test]
    fn welfare_chain_on_reference_market() {
        let (f, q) = ex_market();
        let eq = solve(&f, &q, 9.99, &TieBreakPolicy::default()).unwrap();
        let c = check_welfare_chain(&f, &q, &eq).unwrap();
        assert!(c.dual_beats_benchmark);
        assert!(c.benchmark_beats_spot_pointwise);
        assert!(c.dual_beats_spot);
        assert!(c.price_dominance);
        assert!((c.dual_welfare - 7.1).abs() < 1e-9);
        assert!((c.spot_welfare - 5.114).abs() < 1e-9);
    }

    #[test]
    fn welfare_chain_trivial_when_nothing_reserved() {
        let (f, q) = ex_market();
        let eq = solve(&f, &q, 25.0, &TieBreakPolicy::default()).unwrap();
        let c = check_welfare_chain(&f, &q, &eq).unwrap();
        assert!(c.dual_beats_benchmark && c.benchmark_beats_spot_pointwise && c.dual_beats_spot);
        assert!((c.dual_welfare - c.spot_welfare).abs() < 1e-12);
    }

    #[test]
    fn risk_neutral_welfare_equals_efficiency() {
        let f = TypeDistribution::new(vec![
            TypeAtom { value: 0.4, curve: UtilityCurve::identity(), mass: 0.5 },
            TypeAtom { value: 1.0, curve: UtilityCurve::identity(), mass: 0.5 },
        ])
        .unwrap();
        let q = SupplyDistribution::new(vec![
            SupplyAtom { q: 0.6, prob: 0.5 },
            SupplyAtom { q: 0.9, prob: 0.5 },
        ])
        .unwrap();
        let tie = TieBreakPolicy::default();
        let eq = solve(&f, &q, 0.8, &tie).unwrap();
        for out in [
            run_spot_only(&f, &q),
            run_reservation_only(&f, &q, 0.8, &tie).unwrap(),
            run_dual(&f, &q, &eq),
        ] {
            assert!((out.welfare - out.efficiency).abs() < 1e-12);
        }
    }
}
