//! Market-clearing prices and rationed allocations for a residual population.

use crate::population::{SupplyDistribution, TypeAtom};

/// Result of clearing one realized supply against a residual population.
///
/// `allocations` is parallel to the input atoms: 1 above the price, 0 below,
/// and the rationed fraction at the marginal value. `trades == false` marks the
/// no-trade outcome (zero supply against positive demand); the recorded price is
/// then the largest residual value so expectations stay finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearingResult {
    pub price: f64,
    pub sold_mass: f64,
    pub allocations: Vec<f64>,
    pub trades: bool,
}

/// Clears `supply` against the residual atoms at the lowest price where demand
/// strictly above the price fits within supply; the marginal atom is rationed
/// proportionally so exactly min(supply, demand) sells.
pub fn clear(residual: &[TypeAtom], supply: f64) -> ClearingResult {
    let total: f64 = residual.iter().map(|a| a.mass).sum();
    let mass_above = |p: f64| -> f64 {
        residual
            .iter()
            .filter(|a| a.mass > 0.0 && a.value > p)
            .map(|a| a.mass)
            .sum()
    };

    if total <= 0.0 {
        // no demand: the market clears trivially at zero
        return ClearingResult {
            price: 0.0,
            sold_mass: 0.0,
            allocations: vec![0.0; residual.len()],
            trades: true,
        };
    }
    if supply <= 0.0 {
        let max_value = residual
            .iter()
            .filter(|a| a.mass > 0.0)
            .map(|a| a.value)
            .fold(f64::NEG_INFINITY, f64::max);
        return ClearingResult {
            price: max_value,
            sold_mass: 0.0,
            allocations: vec![0.0; residual.len()],
            trades: false,
        };
    }

    let mut values: Vec<f64> = residual
        .iter()
        .filter(|a| a.mass > 0.0)
        .map(|a| a.value)
        .collect();
    values.sort_by(|x, y| x.partial_cmp(y).unwrap());
    values.dedup();

    let mut price = values[values.len() - 1];
    for p in std::iter::once(0.0).chain(values.iter().copied()) {
        if mass_above(p) <= supply {
            price = p;
            break;
        }
    }

    let above = mass_above(price);
    let at: f64 = residual
        .iter()
        .filter(|a| a.mass > 0.0 && a.value == price)
        .map(|a| a.mass)
        .sum();
    let ration = if at > 0.0 {
        ((supply - above) / at).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let allocations: Vec<f64> = residual
        .iter()
        .map(|a| {
            if a.value > price {
                1.0
            } else if a.value == price {
                ration
            } else {
                0.0
            }
        })
        .collect();

    ClearingResult {
        price,
        sold_mass: above + ration * at,
        allocations,
        trades: true,
    }
}

/// One supply atom mapped through the clearing rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePoint {
    pub q: f64,
    pub prob: f64,
    pub price: f64,
    pub sold_mass: f64,
    pub trades: bool,
}

/// Clearing-price distribution induced by the supply distribution.
pub fn clearing_price_distribution(
    residual: &[TypeAtom],
    supply: &SupplyDistribution,
) -> Vec<PricePoint> {
    supply
        .atoms()
        .iter()
        .map(|s| {
            let r = clear(residual, s.q);
            PricePoint {
                q: s.q,
                prob: s.prob,
                price: r.price,
                sold_mass: r.sold_mass,
                trades: r.trades,
            }
        })
        .collect()
}
