//! Acceptance suite: every release gate runs here, one pass/fail line per gate
//! (visible with `cargo test --test acceptance -- --nocapture`).

use dualmkt::curves::compose_concave;
use dualmkt::equilibrium::{
    solve, validate_assumptions, verify_equilibrium, Equilibrium, TieBreakPolicy,
};
use dualmkt::experiments::{apply_risk_transform, check_statics, random};
use dualmkt::mechanisms::{check_welfare_chain, run_dual, run_reservation_only, run_spot_only};
use dualmkt::oracle::{best_response_check, simulate, SimulationConfig};
use dualmkt::population::{SupplyAtom, SupplyDistribution, TypeAtom, TypeDistribution};
use dualmkt::UtilityCurve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

/// The worked reference market: three soft-budget types against two supply
/// levels, scale parameter 0.01.
fn reference_market() -> (TypeDistribution, SupplyDistribution) {
    let types = TypeDistribution::new(vec![
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
    let supply = SupplyDistribution::new(vec![
        SupplyAtom { q: 0.99, prob: 0.8 },
        SupplyAtom { q: 0.505, prob: 0.2 },
    ])
    .unwrap();
    (types, supply)
}

fn tie() -> TieBreakPolicy {
    TieBreakPolicy::default()
}

/// Markets satisfying both standing assumptions, shared by the dominance and
/// efficiency-ordering gates.
fn valid_markets(seed: u64, count: usize) -> Vec<(TypeDistribution, SupplyDistribution, Equilibrium)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| random::market_with_assumptions(&mut rng, &tie()))
        .collect()
}

#[test]
fn exact_example_revenues() {
    let (types, supply) = reference_market();
    let start = Instant::now();

    let spot = run_spot_only(&types, &supply);
    let reservation = run_reservation_only(&types, &supply, 10.0, &tie()).unwrap();
    let eq = solve(&types, &supply, 9.99, &tie()).unwrap();
    let dual = run_dual(&types, &supply, &eq);

    let elapsed = start.elapsed();
    assert!((spot.revenue - 4.97).abs() < 1e-9, "spot revenue {}", spot.revenue);
    assert!(
        (reservation.revenue - 5.09).abs() < 1e-9,
        "reservation revenue {}",
        reservation.revenue
    );
    assert!((dual.revenue - 6.975).abs() < 1e-9, "dual revenue {}", dual.revenue);
    assert_eq!(eq.reserve_fraction, vec![0.0, 1.0, 0.0], "reserve set");
    assert!(elapsed.as_millis() < 10, "took {elapsed:?}");
    println!(
        "PASS exact_example_revenues: spot {} reservation {} dual {} in {elapsed:?}",
        spot.revenue, reservation.revenue, dual.revenue
    );
}

#[test]
fn fixed_point_residuals_random() {
    let mut rng = ChaCha12Rng::seed_from_u64(41);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let (types, supply) = random::scenario(&mut rng, 12, 6);
        let candidates = random::price_candidates(&types);
        let p_r = candidates[rng.random_range(0..candidates.len())];
        let eq = solve(&types, &supply, p_r, &tie()).unwrap();
        let report = verify_equilibrium(&eq, &types, &supply);
        assert!(
            report.max_residual < 1e-9,
            "scenario {i}: residual {}",
            report.max_residual
        );
        worst = worst.max(report.max_residual);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("PASS fixed_point_residuals_random: 1000 scenarios, worst residual {worst:.3e} in {elapsed:?}");
}

#[test]
fn reserve_monotone_in_risk_aversion() {
    let mut rng = ChaCha12Rng::seed_from_u64(43);
    for i in 0..1000 {
        let (types, supply, value, less, more) = random::scenario_with_ordered_pair(&mut rng);
        let candidates = random::price_candidates(&types);
        let p_r = candidates[rng.random_range(0..candidates.len())];
        let eq = solve(&types, &supply, p_r, &tie()).unwrap();
        let find = |curve: &UtilityCurve| -> f64 {
            types
                .atoms()
                .iter()
                .zip(&eq.reserve_fraction)
                .find(|(a, _)| a.value == value && a.curve == *curve)
                .map(|(_, &y)| y)
                .unwrap()
        };
        let y_less = find(&less);
        let y_more = find(&more);
        assert!(
            y_more >= y_less,
            "scenario {i}: value {value}, less-averse reserves {y_less} but more-averse {y_more}"
        );
    }
    println!("PASS reserve_monotone_in_risk_aversion: 1000 ordered pairs, zero violations");
}

#[test]
fn risk_shift_raises_reservations_prices_revenue() {
    let mut rng = ChaCha12Rng::seed_from_u64(47);
    let mut collected = 0;
    let mut attempts = 0;
    while collected < 500 {
        attempts += 1;
        assert!(attempts < 50_000, "generator starved");
        let (types, supply, eq) = random::market_with_assumptions(&mut rng, &tie());
        let t = random::concave_transform(&mut rng);
        let shifted = match apply_risk_transform(&types, |a| compose_concave(&a.curve, &t)) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let eq_shifted = solve(&shifted, &supply, eq.p_r, &tie()).unwrap();
        let a = validate_assumptions(&eq_shifted, &supply);
        if !(a.a1 && a.a2) {
            continue;
        }
        let report = check_statics(&types, &shifted, &supply, eq.p_r, &tie()).unwrap();
        assert!(
            report.reservations_monotone,
            "pair {collected}: reserved volume fell under increased aversion"
        );
        assert!(
            report.prices_monotone,
            "pair {collected}: spot prices fell under increased aversion"
        );
        assert!(
            report.revenue_monotone,
            "pair {collected}: revenue fell ({} -> {})",
            report.revenue_base,
            report.revenue_shifted
        );
        collected += 1;
    }
    println!("PASS risk_shift_raises_reservations_prices_revenue: 500 transform pairs, zero violations");
}

#[test]
fn revenue_and_welfare_dominance_random() {
    const TOL: f64 = 1e-9;
    for (i, (types, supply, eq)) in valid_markets(53, 500).iter().enumerate() {
        let dual = run_dual(types, supply, eq);
        let spot = run_spot_only(types, supply);
        let reservation = run_reservation_only(types, supply, eq.p_r, &tie()).unwrap();

        assert!(
            dual.revenue >= spot.revenue - TOL,
            "market {i}: dual revenue {} below spot {}",
            dual.revenue,
            spot.revenue
        );
        assert!(
            dual.efficiency >= reservation.efficiency - TOL,
            "market {i}: dual efficiency {} below reservation {}",
            dual.efficiency,
            reservation.efficiency
        );
        let chain = check_welfare_chain(types, supply, eq).unwrap();
        assert!(chain.price_dominance, "market {i}: spot price dominance failed");
        assert!(
            chain.dual_beats_benchmark,
            "market {i}: dual welfare {} below benchmark {}",
            chain.dual_welfare,
            chain.benchmark_welfare
        );
        assert!(
            chain.benchmark_beats_spot_pointwise,
            "market {i}: benchmark below spot welfare at some supply level"
        );
        assert!(
            chain.dual_beats_spot,
            "market {i}: dual welfare {} below spot welfare {}",
            chain.dual_welfare,
            chain.spot_welfare
        );
    }
    println!("PASS revenue_and_welfare_dominance_random: 500 markets, zero violations");
}

#[test]
fn efficiency_ordering_random() {
    const TOL: f64 = 1e-9;
    for (i, (types, supply, eq)) in valid_markets(53, 500).iter().enumerate() {
        let dual = run_dual(types, supply, eq);
        let spot = run_spot_only(types, supply);
        let reservation = run_reservation_only(types, supply, eq.p_r, &tie()).unwrap();
        assert!(
            spot.efficiency >= dual.efficiency - TOL,
            "market {i}: spot efficiency {} below dual {}",
            spot.efficiency,
            dual.efficiency
        );
        assert!(
            dual.efficiency >= reservation.efficiency - TOL,
            "market {i}: dual efficiency {} below reservation {}",
            dual.efficiency,
            reservation.efficiency
        );

        let all_neutral = types.atoms().iter().all(|a| a.curve.is_identity());
        if all_neutral {
            for out in [&spot, &dual, &reservation] {
                assert!((out.welfare - out.efficiency).abs() < TOL);
            }
        }
    }

    // dedicated risk-neutral sweep for the welfare = efficiency identity
    let mut rng = ChaCha12Rng::seed_from_u64(59);
    for _ in 0..100 {
        let (types, supply) = random::scenario(&mut rng, 8, 5);
        let neutral = TypeDistribution::new(
            types
                .atoms()
                .iter()
                .map(|a| TypeAtom {
                    value: a.value,
                    curve: UtilityCurve::identity(),
                    mass: a.mass,
                })
                .collect(),
        )
        .unwrap();
        let p_r = neutral.max_value() * rng.random_range(0.3..1.2);
        let eq = solve(&neutral, &supply, p_r, &tie()).unwrap();
        for out in [
            run_spot_only(&neutral, &supply),
            run_dual(&neutral, &supply, &eq),
            run_reservation_only(&neutral, &supply, p_r, &tie()).unwrap(),
        ] {
            assert!((out.welfare - out.efficiency).abs() < TOL);
        }
    }
    println!("PASS efficiency_ordering_random: 500 markets ordered, welfare = efficiency when risk-neutral");
}

#[test]
fn monte_carlo_agreement() {
    let (types, supply) = reference_market();
    let eq = solve(&types, &supply, 9.99, &tie()).unwrap();
    let cfg = SimulationConfig {
        n_agents: 1_000_000,
        n_supply_draws: 10_000,
        seed: 20_240_817,
    };
    let start = Instant::now();
    let sim = simulate(&types, &supply, &eq, &cfg);
    let regret = best_response_check(&types, &supply, &eq, &cfg);
    let elapsed = start.elapsed();

    for row in &sim.rows {
        assert!(
            row.z_score.abs() <= 3.0,
            "{}: analytic {} empirical {} z {}",
            row.metric,
            row.analytic,
            row.empirical,
            row.z_score
        );
    }
    for t in &regret.per_type {
        assert!(
            t.regret <= 3.0 * t.std_err,
            "type at value {}: regret {} (se {})",
            t.value,
            t.regret,
            t.std_err
        );
    }
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "PASS monte_carlo_agreement: |z| <= 3 on all metrics, max regret {:.3e}, in {elapsed:?}",
        regret.max_regret
    );
}

#[test]
fn risk_neutral_population_degenerates_to_spot() {
    let mut rng = ChaCha12Rng::seed_from_u64(61);
    for i in 0..200 {
        let (raw, supply) = random::scenario(&mut rng, 10, 6);
        let types = TypeDistribution::new(
            raw.atoms()
                .iter()
                .map(|a| TypeAtom {
                    value: a.value,
                    curve: UtilityCurve::identity(),
                    mass: a.mass,
                })
                .collect(),
        )
        .unwrap();
        let spot = run_spot_only(&types, &supply);
        let expected_price: f64 = {
            let mut num = 0.0;
            let mut den = 0.0;
            for e in &spot.per_supply {
                if e.trades {
                    num += e.prob * e.price;
                    den += e.prob;
                }
            }
            num / den.max(1e-12)
        };
        let p_r = expected_price + 0.001 + rng.random_range(0.0..0.5);
        let eq = solve(&types, &supply, p_r, &tie()).unwrap();
        assert_eq!(eq.total_reserved(), 0.0, "scenario {i}: reserved volume not zero");
        let dual = run_dual(&types, &supply, &eq);
        assert_eq!(dual.revenue, spot.revenue, "scenario {i}");
        assert_eq!(dual.welfare, spot.welfare, "scenario {i}");
        assert_eq!(dual.efficiency, spot.efficiency, "scenario {i}");
    }
    println!("PASS risk_neutral_population_degenerates_to_spot: 200 scenarios bit-equal");
}
