//! Batch front door: parse a scenario file, run the solver, mechanisms,
//! experiments, or the Monte Carlo oracle, and emit CSV.
//!
//! Exit codes: 0 on success, 2 on validation failures (malformed scenarios,
//! violated assumptions, no feasible price), 1 on I/O or internal errors.

use clap::{Parser, Subcommand};
use dualmkt::curves::{format_curve_literal, parse_curve_literal};
use dualmkt::equilibrium::{solve, validate_assumptions, verify_equilibrium};
use dualmkt::error::MarketError;
use dualmkt::experiments::{
    apply_risk_transform, check_statics, indifference_budgets, sweep_reservation_price,
};
use dualmkt::mechanisms::{run_dual, run_reservation_only, run_spot_only};
use dualmkt::numfmt::{bool_str, sig12};
use dualmkt::oracle::{best_response_check, simulate, SimulationConfig, GENERATOR};
use dualmkt::scenario::{parse_scenario, Scenario};
use dualmkt::{compose_concave, Equilibrium, TypeDistribution, UtilityCurve};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dualmkt", version, about = "Dual-market (reservation + spot) simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the equilibrium: per-type reserve decisions plus the T and S tables
    Solve {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all three mechanisms and print the metrics table
    Compare {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep reservation prices over a lo:hi:step grid
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the market against a risk-shifted population
    Statics {
        scenario: PathBuf,
        #[arg(long)]
        transform: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Indifference budgets per value (plot-ready)
    Curve {
        scenario: PathBuf,
        /// Value grid lo:hi:step; defaults to the scenario's value support
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo cross-validation of the solved equilibrium
    Mc {
        scenario: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        agents: usize,
        #[arg(long, default_value_t = 1_000)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the standing assumptions and the fixed-point residual
    Validate {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Market(MarketError),
    Io(std::io::Error),
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        CliError::Market(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Market(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(CliError::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        CliError::Market(e)
    })
}

fn write_output(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || {
        CliError::Market(MarketError::scenario(format!(
            "bad grid `{spec}` (expected lo:hi:step)"
        )))
    };
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let step: f64 = parts[2].parse().map_err(|_| bad())?;
    if step.is_nan() || step <= 0.0 || hi < lo {
        return Err(bad());
    }
    let mut grid = Vec::new();
    let mut k = 0u64;
    loop {
        let v = lo + step * k as f64;
        if v > hi + step * 1e-9 {
            break;
        }
        grid.push(v);
        k += 1;
    }
    Ok(grid)
}

fn csv_cell(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn solved(s: &Scenario) -> Result<Equilibrium, CliError> {
    let p_r = s.required_price()?;
    Ok(solve(&s.types, &s.supply, p_r, &s.tie)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Solve { scenario, out } => {
            let s = load_scenario(&scenario)?;
            let eq = solved(&s)?;
            let mut csv = String::from("value,mass,curve,y,T,S\n");
            for (a, &y) in s.types.atoms().iter().zip(&eq.reserve_fraction) {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    sig12(a.value),
                    sig12(a.mass),
                    csv_cell(&format_curve_literal(a.value, &a.curve)),
                    sig12(y),
                    sig12(eq.t_at(a.value)),
                    sig12(eq.spot.cdf(a.value)),
                ));
            }
            write_output(out.as_ref(), &csv)
        }
        Cmd::Compare { scenario, out } => {
            let s = load_scenario(&scenario)?;
            let p_r = s.required_price()?;
            let eq = solve(&s.types, &s.supply, p_r, &s.tie)?;
            let dual = run_dual(&s.types, &s.supply, &eq);
            let spot = run_spot_only(&s.types, &s.supply);
            let assumptions = validate_assumptions(&eq, &s.supply);

            // reservation-only at its revenue-best fixed price over the value
            // grid (plus the scenario price); revenue is piecewise in the price
            // with kinks only at support values
            let mut best: Option<(f64, dualmkt::MechanismOutcome)> = None;
            let mut candidates = s.types.distinct_values();
            candidates.push(p_r);
            candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for c in candidates {
                let outcome = run_reservation_only(&s.types, &s.supply, c, &s.tie)?;
                let better = match &best {
                    None => true,
                    Some((_, b)) => outcome.revenue > b.revenue,
                };
                if better {
                    best = Some((c, outcome));
                }
            }
            let (res_price, res) = best.expect("candidate list is never empty");
            let res_demand: f64 = s
                .types
                .atoms()
                .iter()
                .filter(|a| a.value >= res_price)
                .map(|a| a.mass)
                .sum();

            let spot_price_mean = {
                let mut num = 0.0;
                let mut den = 0.0;
                for e in &spot.per_supply {
                    if e.trades {
                        num += e.prob * e.price;
                        den += e.prob;
                    }
                }
                if den > 0.0 { num / den } else { 0.0 }
            };

            let mut csv = String::from("mechanism,p_r,revenue,welfare,efficiency,T,E_spot_price,A1,A2\n");
            csv.push_str(&format!(
                "spot,,{},{},{},0,{},true,\n",
                sig12(spot.revenue),
                sig12(spot.welfare),
                sig12(spot.efficiency),
                sig12(spot_price_mean),
            ));
            csv.push_str(&format!(
                "reservation,{},{},{},{},{},,{},\n",
                sig12(res_price),
                sig12(res.revenue),
                sig12(res.welfare),
                sig12(res.efficiency),
                sig12(res_demand),
                bool_str(s.supply.strict_cdf(res_demand) == 0.0),
            ));
            csv.push_str(&format!(
                "dual,{},{},{},{},{},{},{},{}\n",
                sig12(p_r),
                sig12(dual.revenue),
                sig12(dual.welfare),
                sig12(dual.efficiency),
                sig12(eq.total_reserved()),
                sig12(assumptions.expected_spot_price),
                bool_str(assumptions.a1),
                bool_str(assumptions.a2),
            ));
            write_output(out.as_ref(), &csv)
        }
        Cmd::Sweep { scenario, grid, out } => {
            let s = load_scenario(&scenario)?;
            let grid = parse_grid(&grid)?;
            let r = sweep_reservation_price(&s.types, &s.supply, &grid, &s.tie)?;
            let mut csv = String::from("p_r,revenue,welfare,efficiency,T,A1,A2\n");
            for row in &r.rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    sig12(row.p_r),
                    sig12(row.revenue),
                    sig12(row.welfare),
                    sig12(row.efficiency),
                    sig12(row.total_reserved),
                    bool_str(row.a1),
                    bool_str(row.a2),
                ));
            }
            let best = &r.rows[r.best];
            csv.push_str(&format!(
                "# best p_r={} revenue={}\n",
                sig12(best.p_r),
                sig12(best.revenue)
            ));
            write_output(out.as_ref(), &csv)
        }
        Cmd::Statics { scenario, transform, out } => {
            let s = load_scenario(&scenario)?;
            let p_r = s.required_price()?;
            let text = std::fs::read_to_string(&transform)?;
            let shifted = apply_transform_file(&s.types, &text)?;
            let report = check_statics(&s.types, &shifted, &s.supply, p_r, &s.tie)?;
            let mut csv = String::from("p,T,T_plus,S,S_plus\n");
            for (i, &p) in report.grid.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    sig12(p),
                    sig12(report.reserved_base[i]),
                    sig12(report.reserved_shifted[i]),
                    sig12(report.spot_cdf_base[i]),
                    sig12(report.spot_cdf_shifted[i]),
                ));
            }
            csv.push_str(&format!(
                "# revenue={} revenue_plus={} pass={}\n",
                sig12(report.revenue_base),
                sig12(report.revenue_shifted),
                bool_str(report.all_hold()),
            ));
            write_output(out.as_ref(), &csv)
        }
        Cmd::Curve { scenario, grid, out } => {
            let s = load_scenario(&scenario)?;
            let eq = solved(&s)?;
            let values = match grid {
                Some(g) => parse_grid(&g)?,
                None => s.types.distinct_values(),
            };
            let rows = indifference_budgets(&eq, &values, 1e-9);
            let mut csv = String::from("v,b_I\n");
            for (v, b) in rows {
                match b {
                    Some(b) => csv.push_str(&format!("{},{}\n", sig12(v), sig12(b))),
                    None => csv.push_str(&format!("{},none\n", sig12(v))),
                }
            }
            write_output(out.as_ref(), &csv)
        }
        Cmd::Mc { scenario, agents, draws, seed, out } => {
            let s = load_scenario(&scenario)?;
            let eq = solved(&s)?;
            let cfg = SimulationConfig {
                n_agents: agents,
                n_supply_draws: draws,
                seed,
            };
            let sim = simulate(&s.types, &s.supply, &eq, &cfg);
            let regret = best_response_check(&s.types, &s.supply, &eq, &cfg);
            let mut csv = String::from("metric,analytic,empirical,std_err,z_score\n");
            for row in &sim.rows {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    row.metric,
                    sig12(row.analytic),
                    sig12(row.empirical),
                    sig12(row.std_err),
                    sig12(row.z_score),
                ));
            }
            for t in &regret.per_type {
                let z = if t.std_err > 0.0 { t.regret / t.std_err } else { 0.0 };
                csv.push_str(&format!(
                    "regret_type{},0,{},{},{}\n",
                    t.atom_index,
                    sig12(t.regret),
                    sig12(t.std_err),
                    sig12(z),
                ));
            }
            csv.push_str(&format!("# generator={GENERATOR}\n"));
            write_output(out.as_ref(), &csv)
        }
        Cmd::Validate { scenario, out } => {
            let s = load_scenario(&scenario)?;
            let eq = solved(&s)?;
            let report = verify_equilibrium(&eq, &s.types, &s.supply);
            let assumptions = validate_assumptions(&eq, &s.supply);
            if assumptions.has_no_trade {
                eprintln!(
                    "warning: some supply draws cannot serve the reserved volume; \
                     the expected spot price conditions on trading events"
                );
            }
            let mut csv = String::from("A1,A2,E_spot_price,residual\n");
            csv.push_str(&format!(
                "{},{},{},{}\n",
                bool_str(assumptions.a1),
                bool_str(assumptions.a2),
                sig12(assumptions.expected_spot_price),
                sig12(report.max_residual),
            ));
            write_output(out.as_ref(), &csv)?;
            if report.max_residual > 1e-6 {
                return Err(CliError::Market(MarketError::AssumptionViolated(format!(
                    "fixed-point residual {} exceeds 1e-6",
                    report.max_residual
                ))));
            }
            Ok(())
        }
    }
}

/// Transform files: one rule per line, `#` comments.
///   compose curve=piecewise pts=...   compose a concave map onto every curve
///   set v=<num> curve=<literal>       replace the curve at one value
fn apply_transform_file(
    types: &TypeDistribution,
    text: &str,
) -> Result<TypeDistribution, CliError> {
    enum Rule {
        Compose(UtilityCurve),
        Set(f64, UtilityCurve),
    }
    let mut rules = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("compose ") {
            let lit = rest
                .trim()
                .strip_prefix("curve=")
                .ok_or_else(|| MarketError::scenario_at(line_no, "compose needs curve=<literal>"))?;
            if lit.trim_start().starts_with("soft_budget") {
                return Err(CliError::Market(MarketError::scenario_at(
                    line_no,
                    "compose transforms must use piecewise literals",
                )));
            }
            let curve = parse_curve_literal(f64::INFINITY, lit)
                .map_err(|e| MarketError::scenario_at(line_no, e.to_string()))?;
            rules.push(Rule::Compose(curve));
        } else if let Some(rest) = line.strip_prefix("set ") {
            let rest = rest.trim();
            let (vpart, cpart) = rest
                .split_once(' ')
                .ok_or_else(|| MarketError::scenario_at(line_no, "set needs v=<num> curve=<literal>"))?;
            let v: f64 = vpart
                .strip_prefix("v=")
                .and_then(|x| x.parse().ok())
                .ok_or_else(|| MarketError::scenario_at(line_no, "set needs v=<num>"))?;
            let lit = cpart
                .trim()
                .strip_prefix("curve=")
                .ok_or_else(|| MarketError::scenario_at(line_no, "set needs curve=<literal>"))?;
            let curve = parse_curve_literal(v, lit)
                .map_err(|e| MarketError::scenario_at(line_no, e.to_string()))?;
            rules.push(Rule::Set(v, curve));
        } else {
            return Err(CliError::Market(MarketError::scenario_at(
                line_no,
                format!("unknown transform rule `{line}`"),
            )));
        }
    }
    let shifted = apply_risk_transform(types, |atom| {
        let mut curve = atom.curve.clone();
        for rule in &rules {
            match rule {
                Rule::Compose(t) => curve = compose_concave(&curve, t)?,
                Rule::Set(v, c) => {
                    if atom.value == *v {
                        curve = c.clone();
                    }
                }
            }
        }
        Ok(curve)
    })?;
    Ok(shifted)
}
