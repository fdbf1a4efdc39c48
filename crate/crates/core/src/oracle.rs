//! Finite-agent Monte Carlo cross-validation of the analytic equilibrium.
//!
//! Agents are sampled i.i.d. from the type distribution and play the solved
//! strategy; each supply draw honors reservations first (uniform rationing when
//! oversubscribed) and then clears the residual bids at the order-statistic
//! boundary. Draw streams come from one named splittable generator so runs are
//! reproducible and parallelizable per draw.

use crate::equilibrium::Equilibrium;
use crate::mechanisms::run_dual;
use crate::population::{SupplyDistribution, TypeDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Identity of the pseudo-random generator recorded in output metadata.
pub const GENERATOR: &str = "chacha12";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub n_agents: usize,
    pub n_supply_draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub analytic: f64,
    pub empirical: f64,
    pub std_err: f64,
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub rows: Vec<MetricRow>,
    pub generator: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub struct TypeRegret {
    pub value: f64,
    pub atom_index: usize,
    /// Best estimated alternative utility minus the played action's utility.
    pub regret: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone)]
pub struct RegretReport {
    pub per_type: Vec<TypeRegret>,
    pub max_regret: f64,
    pub generator: &'static str,
}

/// Order-independent summation for the per-draw aggregates.
fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let devs: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&devs) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn z_score(empirical: f64, analytic: f64, se: f64) -> f64 {
    let gap = empirical - analytic;
    if se > 0.0 {
        gap / se
    } else if gap.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY * gap.signum()
    }
}

fn ln_factorial(n: u64) -> f64 {
    if n < 10 {
        (2..=n).map(|i| (i as f64).ln()).sum()
    } else {
        // Stirling series with two correction terms
        let x = n as f64;
        x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x * x * x)
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Hypergeometric draw: of `n_total` balls, `k_feature` marked, sample
/// `n_draws` without replacement and count marked ones. Inverse transform
/// expanding outward from the mode, stable for populations in the millions.
fn sample_hypergeometric<R: Rng + ?Sized>(
    rng: &mut R,
    n_total: u64,
    k_feature: u64,
    n_draws: u64,
) -> u64 {
    debug_assert!(k_feature <= n_total && n_draws <= n_total);
    let lo = n_draws.saturating_sub(n_total - k_feature);
    let hi = k_feature.min(n_draws);
    if lo == hi {
        return lo;
    }
    let ln_pmf = |x: u64| -> f64 {
        ln_choose(k_feature, x) + ln_choose(n_total - k_feature, n_draws - x)
            - ln_choose(n_total, n_draws)
    };
    let mode = ((((n_draws + 1) as f64) * ((k_feature + 1) as f64) / ((n_total + 2) as f64))
        .floor() as u64)
        .clamp(lo, hi);

    let u: f64 = rng.random();
    let p_mode = ln_pmf(mode).exp();
    let mut acc = p_mode;
    if u <= acc {
        return mode;
    }
    let (mut up_x, mut up_p) = (mode, p_mode);
    let (mut down_x, mut down_p) = (mode, p_mode);
    loop {
        let mut moved = false;
        if up_x < hi {
            let x = up_x;
            // x >= lo keeps (N - K) + x + 1 - n positive
            up_p *= (k_feature - x) as f64 * (n_draws - x) as f64
                / (((x + 1) as f64) * ((n_total - k_feature + x + 1 - n_draws) as f64));
            up_x += 1;
            acc += up_p;
            if u <= acc {
                return up_x;
            }
            moved = true;
        }
        if down_x > lo {
            let x = down_x;
            down_p *= (x as f64) * ((n_total - k_feature + x - n_draws) as f64)
                / (((k_feature - x + 1) as f64) * ((n_draws - x + 1) as f64));
            down_x -= 1;
            acc += down_p;
            if u <= acc {
                return down_x;
            }
            moved = true;
        }
        if !moved {
            // residual mass lost to rounding lands on the upper edge
            return up_x;
        }
    }
}

struct SampledPopulation {
    reserved: Vec<u64>,
    residual: Vec<u64>,
    total_reserved: u64,
}

fn sample_population(
    types: &TypeDistribution,
    eq: &Equilibrium,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> SampledPopulation {
    let atoms = types.atoms();
    let mut cum = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for a in atoms {
        acc += a.mass;
        cum.push(acc);
    }
    let mut reserved = vec![0u64; atoms.len()];
    let mut residual = vec![0u64; atoms.len()];
    for _ in 0..n {
        let u: f64 = rng.random();
        let idx = cum.partition_point(|&c| c < u).min(atoms.len() - 1);
        let y = eq.reserve_fraction[idx];
        let reserves = if y >= 1.0 {
            true
        } else if y <= 0.0 {
            false
        } else {
            rng.random_bool(y)
        };
        if reserves {
            reserved[idx] += 1;
        } else {
            residual[idx] += 1;
        }
    }
    let total_reserved = reserved.iter().sum();
    SampledPopulation {
        reserved,
        residual,
        total_reserved,
    }
}

/// Outcome of one supply draw, reduced to what the metrics and ghost-deviation
/// utilities need.
struct DrawRecord {
    price: f64,
    spot_active: bool,
    /// Probability that a reserver was served in this draw.
    reserve_win_prob: f64,
    revenue: f64,
    utility: f64,
    efficiency: f64,
}

fn run_draws(
    types: &TypeDistribution,
    supply: &SupplyDistribution,
    eq: &Equilibrium,
    cfg: &SimulationConfig,
) -> (SampledPopulation, Vec<DrawRecord>) {
    let atoms = types.atoms();
    let n = cfg.n_agents.max(1);
    let mut agent_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    agent_rng.set_stream(0);
    let pop = sample_population(types, eq, n, &mut agent_rng);

    let mut cum_q = Vec::with_capacity(supply.atoms().len());
    let mut acc = 0.0;
    for s in supply.atoms() {
        acc += s.prob;
        cum_q.push(acc);
    }

    let nf = n as f64;
    let mut records = Vec::with_capacity(cfg.n_supply_draws);
    for draw in 0..cfg.n_supply_draws {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1 + draw as u64);
        let u: f64 = rng.random();
        let q_idx = cum_q.partition_point(|&c| c < u).min(cum_q.len() - 1);
        let q = supply.atoms()[q_idx].q;
        let units = ((q * nf).floor() as u64).min(n as u64);

        // reservation stage
        let served_total = pop.total_reserved.min(units);
        let served: Vec<u64> = if served_total == pop.total_reserved {
            pop.reserved.clone()
        } else {
            // uniform rationing: multivariate hypergeometric split across types
            let mut out = vec![0u64; atoms.len()];
            let mut remaining_pop = pop.total_reserved;
            let mut remaining_draws = served_total;
            for (i, &k) in pop.reserved.iter().enumerate() {
                if remaining_draws == 0 || k == 0 {
                    remaining_pop -= k;
                    continue;
                }
                let x = if remaining_pop == k {
                    remaining_draws
                } else {
                    sample_hypergeometric(&mut rng, remaining_pop, k, remaining_draws)
                };
                out[i] = x;
                remaining_pop -= k;
                remaining_draws -= x;
            }
            out
        };
        let reserve_win_prob = if pop.total_reserved > 0 {
            served_total as f64 / pop.total_reserved as f64
        } else if units >= 1 {
            1.0
        } else {
            0.0
        };

        // spot stage: clear residual bids at the order-statistic boundary
        let spot_units = units - served_total;
        let count_above = |p: f64| -> u64 {
            atoms
                .iter()
                .zip(&pop.residual)
                .filter(|(a, _)| a.value > p)
                .map(|(_, &c)| c)
                .sum()
        };
        let (price, sold_above, marginal) = if spot_units == 0 {
            (0.0, 0, 0)
        } else if count_above(0.0) <= spot_units {
            (0.0, count_above(0.0), 0)
        } else {
            let mut price = atoms.last().unwrap().value;
            for a in atoms {
                if count_above(a.value) <= spot_units {
                    price = a.value;
                    break;
                }
            }
            let above = count_above(price);
            let at: u64 = atoms
                .iter()
                .zip(&pop.residual)
                .filter(|(a, _)| a.value == price)
                .map(|(_, &c)| c)
                .sum();
            (price, above, (spot_units - above).min(at))
        };
        let spot_sold = sold_above + marginal;
        let spot_active = spot_units > 0;

        let mut revenue = eq.p_r * served_total as f64;
        let mut utility = 0.0;
        let mut efficiency = 0.0;
        for (i, a) in atoms.iter().enumerate() {
            if served[i] > 0 {
                utility += served[i] as f64 * a.curve.eval_at(a.value - eq.p_r);
                efficiency += served[i] as f64 * a.value;
            }
            if spot_active && a.value > price && pop.residual[i] > 0 {
                utility += pop.residual[i] as f64 * a.curve.eval_at(a.value - price);
                efficiency += pop.residual[i] as f64 * a.value;
            }
        }
        if spot_active {
            revenue += price * spot_sold as f64;
            efficiency += price * marginal as f64;
        }

        records.push(DrawRecord {
            price,
            spot_active,
            reserve_win_prob,
            revenue: revenue / nf,
            utility: utility / nf,
            efficiency: efficiency / nf,
        });
    }
    (pop, records)
}

/// Samples the market and reports empirical revenue, welfare, and efficiency
/// against the analytic values, with standard errors over supply draws.
pub fn simulate(
    types: &TypeDistribution,
    supply: &SupplyDistribution,
    eq: &Equilibrium,
    cfg: &SimulationConfig,
) -> SimulationReport {
    let analytic = run_dual(types, supply, eq);
    let (_, records) = run_draws(types, supply, eq, cfg);

    let revenue: Vec<f64> = records.iter().map(|r| r.revenue).collect();
    let welfare: Vec<f64> = records.iter().map(|r| r.revenue + r.utility).collect();
    let efficiency: Vec<f64> = records.iter().map(|r| r.efficiency).collect();

    let mut rows = Vec::with_capacity(3);
    for (name, samples, target) in [
        ("revenue", &revenue, analytic.revenue),
        ("welfare", &welfare, analytic.welfare),
        ("efficiency", &efficiency, analytic.efficiency),
    ] {
        let (mean, se) = mean_and_se(samples);
        rows.push(MetricRow {
            metric: name.to_string(),
            analytic: target,
            empirical: mean,
            std_err: se,
            z_score: z_score(mean, target, se),
        });
    }
    SimulationReport {
        rows,
        generator: GENERATOR,
    }
}

/// Estimates per-type regret of the played action against the empirical spot
/// price distribution: positive regret means a profitable deviation.
pub fn best_response_check(
    types: &TypeDistribution,
    supply: &SupplyDistribution,
    eq: &Equilibrium,
    cfg: &SimulationConfig,
) -> RegretReport {
    let (_, records) = run_draws(types, supply, eq, cfg);
    let m = records.len();
    let atoms = types.atoms();

    let mut per_type = Vec::with_capacity(atoms.len());
    let mut max_regret = f64::NEG_INFINITY;
    for (i, a) in atoms.iter().enumerate() {
        let y = eq.reserve_fraction[i];
        let can_reserve = a.value >= eq.p_r;
        let ru_pay = if can_reserve {
            a.curve.eval_at(a.value - eq.p_r)
        } else {
            0.0
        };

        let mut u_res = vec![0.0; m];
        let mut u_spot = vec![0.0; m];
        for (d, r) in records.iter().enumerate() {
            if can_reserve {
                u_res[d] = r.reserve_win_prob * ru_pay;
            }
            if r.spot_active && a.value > r.price {
                u_spot[d] = a.curve.eval_at(a.value - r.price);
            }
        }
        let played: Vec<f64> = u_res
            .iter()
            .zip(&u_spot)
            .map(|(&res, &spot)| y * res + (1.0 - y) * spot)
            .collect();

        let (mean_spot, _) = mean_and_se(&u_spot);
        let (mean_res, _) = mean_and_se(&u_res);
        let best_is_reserve = can_reserve && mean_res > mean_spot;
        let best = if best_is_reserve { &u_res } else { &u_spot };
        let diffs: Vec<f64> = best.iter().zip(&played).map(|(b, p)| b - p).collect();
        let (regret, se) = mean_and_se(&diffs);

        per_type.push(TypeRegret {
            value: a.value,
            atom_index: i,
            regret,
            std_err: se,
        });
        max_regret = max_regret.max(regret);
    }

    RegretReport {
        per_type,
        max_regret,
        generator: GENERATOR,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::UtilityCurve;
    use crate::equilibrium::{solve, SpotDistribution, TieBreakPolicy};
    use crate::population::{SupplyAtom, TypeAtom};

    fn ref_market() -> (TypeDistribution, SupplyDistribution) {
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
    fn hypergeometric_sampler_matches_exact_pmf() {
        // small case against exact probabilities
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let (n_tot, k, n) = (10u64, 4u64, 5u64);
        let mut counts = [0u32; 5];
        let m = 40_000;
        for _ in 0..m {
            counts[sample_hypergeometric(&mut rng, n_tot, k, n) as usize] += 1;
        }
        let choose = |n: u64, k: u64| -> f64 {
            (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
        };
        for x in 0..=4u64 {
            let p = choose(k, x) * choose(n_tot - k, n - x) / choose(n_tot, n);
            let freq = counts[x as usize] as f64 / m as f64;
            let se = (p * (1.0 - p) / m as f64).sqrt();
            assert!((freq - p).abs() < 5.0 * se, "x={x}: {freq} vs {p}");
        }

        // large-population regime where naive factorial ratios overflow
        let (n_tot, k, n) = (51_000u64, 50_000u64, 50_500u64);
        let m = 4_000;
        let mean = (0..m)
            .map(|_| sample_hypergeometric(&mut rng, n_tot, k, n) as f64)
            .sum::<f64>()
            / m as f64;
        let p = k as f64 / n_tot as f64;
        let expect = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p) * ((n_tot - n) as f64 / (n_tot - 1) as f64)).sqrt();
        assert!((mean - expect).abs() < 5.0 * sd / (m as f64).sqrt());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (f, q) = ref_market();
        let eq = solve(&f, &q, 9.99, &TieBreakPolicy::default()).unwrap();
        let cfg = SimulationConfig { n_agents: 20_000, n_supply_draws: 300, seed: 42 };
        let a = simulate(&f, &q, &eq, &cfg);
        let b = simulate(&f, &q, &eq, &cfg);
        assert_eq!(a, b);
        let ra = best_response_check(&f, &q, &eq, &cfg);
        let rb = best_response_check(&f, &q, &eq, &cfg);
        assert_eq!(ra.max_regret, rb.max_regret);
    }

    #[test]
    fn degenerate_market_matches_exactly() {
        let f = TypeDistribution::new(vec![TypeAtom {
            value: 1.0,
            curve: UtilityCurve::identity(),
            mass: 1.0,
        }])
        .unwrap();
        let q = SupplyDistribution::new(vec![SupplyAtom { q: 1.0, prob: 1.0 }]).unwrap();
        let eq = solve(&f, &q, 2.0, &TieBreakPolicy::default()).unwrap();
        let cfg = SimulationConfig { n_agents: 5_000, n_supply_draws: 50, seed: 7 };
        let rep = simulate(&f, &q, &eq, &cfg);
        for row in &rep.rows {
            assert_eq!(row.empirical, row.analytic, "{}", row.metric);
            assert_eq!(row.std_err, 0.0);
            assert_eq!(row.z_score, 0.0);
        }
    }

    #[test]
    fn forced_reservation_shows_regret() {
        let (f, q) = ref_market();
        let mut eq = solve(&f, &q, 9.99, &TieBreakPolicy::default()).unwrap();
        // force the top type into the reservation stage; reservations are then
        // rationed at the low supply draw and the deviation to the spot market
        // is worth about 2.01
        eq.reserve_fraction[2] = 1.0;
        eq.t_table = vec![(5.0, 0.0), (10.0, 0.5), (20.0, 0.51)];
        eq.spot = SpotDistribution::default();
        let cfg = SimulationConfig { n_agents: 100_000, n_supply_draws: 2_000, seed: 3 };
        let rep = best_response_check(&f, &q, &eq, &cfg);
        let top = rep.per_type.iter().find(|t| t.value == 20.0).unwrap();
        assert!(
            (top.regret - 2.01).abs() < 0.5,
            "regret = {} se = {}",
            top.regret,
            top.std_err
        );
        assert!(top.regret - 3.0 * top.std_err > 0.0);
    }

    #[test]
    fn equilibrium_profile_has_no_significant_regret() {
        let (f, q) = ref_market();
        let eq = solve(&f, &q, 9.99, &TieBreakPolicy::default()).unwrap();
        let cfg = SimulationConfig { n_agents: 50_000, n_supply_draws: 800, seed: 5 };
        let rep = best_response_check(&f, &q, &eq, &cfg);
        for t in &rep.per_type {
            assert!(
                t.regret <= 3.0 * t.std_err,
                "type at value {} has regret {} (se {})",
                t.value,
                t.regret,
                t.std_err
            );
        }
    }

    #[test]
    fn risk_neutral_market_matches_spot_only() {
        // high price, linear curves: nothing reserves, and the sampled dual
        // market tracks the spot-only metrics
        let f = TypeDistribution::new(vec![
            TypeAtom { value: 0.4, curve: UtilityCurve::identity(), mass: 0.5 },
            TypeAtom { value: 1.0, curve: UtilityCurve::identity(), mass: 0.5 },
        ])
        .unwrap();
        let q = SupplyDistribution::new(vec![
            SupplyAtom { q: 0.7, prob: 0.5 },
            SupplyAtom { q: 0.95, prob: 0.5 },
        ])
        .unwrap();
        let eq = solve(&f, &q, 0.9, &TieBreakPolicy::default()).unwrap();
        assert_eq!(eq.total_reserved(), 0.0);
        let spot = crate::mechanisms::run_spot_only(&f, &q);
        let cfg = SimulationConfig { n_agents: 200_000, n_supply_draws: 1_000, seed: 11 };
        let rep = simulate(&f, &q, &eq, &cfg);
        assert_eq!(rep.rows[0].analytic, spot.revenue);
        for row in &rep.rows {
            assert!(row.z_score.abs() <= 4.0, "{}: z = {}", row.metric, row.z_score);
        }
        let regret = best_response_check(&f, &q, &eq, &cfg);
        for t in &regret.per_type {
            assert!(t.regret <= 3.0 * t.std_err);
        }
    }

    #[test]
    fn empirical_gap_tracks_sampling_error() {
        // grand-mean z-scores over independent replicates stay bounded as the
        // population grows, i.e. the gap shrinks with the sampling error
        let (f, q) = ref_market();
        let eq = solve(&f, &q, 9.99, &TieBreakPolicy::default()).unwrap();
        let analytic = run_dual(&f, &q, &eq);
        for n in [1_000usize, 10_000, 100_000, 1_000_000] {
            let mut reps: Vec<[f64; 3]> = Vec::new();
            for seed in 0..5u64 {
                let cfg = SimulationConfig { n_agents: n, n_supply_draws: 400, seed: 100 + seed };
                let rep = simulate(&f, &q, &eq, &cfg);
                reps.push([
                    rep.rows[0].empirical,
                    rep.rows[1].empirical,
                    rep.rows[2].empirical,
                ]);
            }
            for (k, target) in [analytic.revenue, analytic.welfare, analytic.efficiency]
                .into_iter()
                .enumerate()
            {
                let vals: Vec<f64> = reps.iter().map(|r| r[k]).collect();
                let (mean, se) = mean_and_se(&vals);
                let z = z_score(mean, target, se);
                assert!(
                    z.abs() <= 6.0,
                    "n = {n}, metric {k}: grand mean {mean} vs {target} (z = {z})"
                );
            }
        }
    }
}
