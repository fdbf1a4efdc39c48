//! Line-oriented scenario files.
//!
//! ```text
//! # comment
//! market p_r=9.99 tie=reserve eps_tie=1e-9
//! type v=5 mass=0.49 curve=soft_budget b=0
//! type v=10 mass=0.5 curve=soft_budget b=9.99
//! type v=20 mass=0.01 curve=soft_budget b=0
//! supply q=0.99 prob=0.8
//! supply q=0.505 prob=0.2
//! ```
//!
//! Unknown keys are errors. The `curve=` key consumes the rest of the line;
//! curve literals are `soft_budget b=<num>` or `piecewise pts=z1:u1,...`.

use crate::curves::{format_curve_literal, parse_curve_literal};
use crate::equilibrium::{TieBreak, TieBreakPolicy};
use crate::error::{MarketError, Result};
use crate::population::{SupplyAtom, SupplyDistribution, TypeAtom, TypeDistribution};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub types: TypeDistribution,
    pub supply: SupplyDistribution,
    pub p_r: Option<f64>,
    pub tie: TieBreakPolicy,
}

impl Scenario {
    /// The reservation price, required by operations that price the reservation stage.
    pub fn required_price(&self) -> Result<f64> {
        self.p_r
            .ok_or_else(|| MarketError::scenario("scenario has no `market p_r=...` line"))
    }
}

fn parse_num(line_no: usize, key: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|_| MarketError::scenario_at(line_no, format!("bad number for {key}: `{raw}`")))
}

fn parse_tie(line_no: usize, raw: &str) -> Result<TieBreak> {
    match raw {
        "reserve" => Ok(TieBreak::Reserve),
        "spot" => Ok(TieBreak::Spot),
        other => {
            if let Some(frac) = other.strip_prefix("frac:") {
                let t = parse_num(line_no, "tie", frac)?;
                if !(0.0..=1.0).contains(&t) {
                    return Err(MarketError::scenario_at(
                        line_no,
                        format!("tie fraction must lie in [0, 1], got {t}"),
                    ));
                }
                Ok(TieBreak::Fraction(t))
            } else {
                Err(MarketError::scenario_at(
                    line_no,
                    format!("unknown tie rule `{other}` (expected reserve, spot, or frac:<x>)"),
                ))
            }
        }
    }
}

/// Splits `key=value` tokens; `curve=` takes the rest of the line verbatim.
fn key_values(line: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut rest = line.trim();
    while !rest.is_empty() {
        if let Some(cv) = rest.strip_prefix("curve=") {
            out.push(("curve".to_string(), cv.trim().to_string()));
            break;
        }
        let token_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let token = &rest[..token_end];
        match token.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => out.push((token.to_string(), String::new())),
        }
        rest = rest[token_end..].trim_start();
    }
    out
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut type_atoms: Vec<TypeAtom> = Vec::new();
    let mut supply_atoms: Vec<SupplyAtom> = Vec::new();
    let mut p_r: Option<f64> = None;
    let mut tie = TieBreakPolicy::default();
    let mut saw_market = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (keyword, rest) = match line.find(char::is_whitespace) {
            Some(pos) => (&line[..pos], line[pos..].trim_start()),
            None => (line, ""),
        };
        match keyword {
            "market" => {
                if saw_market {
                    return Err(MarketError::scenario_at(line_no, "duplicate market line"));
                }
                saw_market = true;
                for (k, v) in key_values(rest) {
                    match k.as_str() {
                        "p_r" => p_r = Some(parse_num(line_no, "p_r", &v)?),
                        "tie" => tie.mode = parse_tie(line_no, &v)?,
                        "eps_tie" => {
                            tie.eps_tie = parse_num(line_no, "eps_tie", &v)?;
                            if tie.eps_tie.is_nan() || tie.eps_tie <= 0.0 {
                                return Err(MarketError::scenario_at(
                                    line_no,
                                    "eps_tie must be positive",
                                ));
                            }
                        }
                        other => {
                            return Err(MarketError::scenario_at(
                                line_no,
                                format!("unknown market key `{other}`"),
                            ))
                        }
                    }
                }
            }
            "type" => {
                let mut value: Option<f64> = None;
                let mut mass: Option<f64> = None;
                let mut curve_literal: Option<String> = None;
                for (k, v) in key_values(rest) {
                    match k.as_str() {
                        "v" => value = Some(parse_num(line_no, "v", &v)?),
                        "mass" => mass = Some(parse_num(line_no, "mass", &v)?),
                        "curve" => curve_literal = Some(v),
                        other => {
                            return Err(MarketError::scenario_at(
                                line_no,
                                format!("unknown type key `{other}`"),
                            ))
                        }
                    }
                }
                let value = value
                    .ok_or_else(|| MarketError::scenario_at(line_no, "type line needs v=<num>"))?;
                let mass = mass
                    .ok_or_else(|| MarketError::scenario_at(line_no, "type line needs mass=<num>"))?;
                let literal = curve_literal
                    .ok_or_else(|| MarketError::scenario_at(line_no, "type line needs curve=<literal>"))?;
                let curve = parse_curve_literal(value, &literal).map_err(|e| {
                    MarketError::scenario_at(line_no, e.to_string())
                })?;
                type_atoms.push(TypeAtom { value, curve, mass });
            }
            "supply" => {
                let mut q: Option<f64> = None;
                let mut prob: Option<f64> = None;
                for (k, v) in key_values(rest) {
                    match k.as_str() {
                        "q" => q = Some(parse_num(line_no, "q", &v)?),
                        "prob" => prob = Some(parse_num(line_no, "prob", &v)?),
                        other => {
                            return Err(MarketError::scenario_at(
                                line_no,
                                format!("unknown supply key `{other}`"),
                            ))
                        }
                    }
                }
                let q = q
                    .ok_or_else(|| MarketError::scenario_at(line_no, "supply line needs q=<num>"))?;
                let prob = prob
                    .ok_or_else(|| MarketError::scenario_at(line_no, "supply line needs prob=<num>"))?;
                supply_atoms.push(SupplyAtom { q, prob });
            }
            other => {
                return Err(MarketError::scenario_at(
                    line_no,
                    format!("unknown directive `{other}`"),
                ));
            }
        }
    }

    if type_atoms.is_empty() {
        return Err(MarketError::scenario("no type atoms"));
    }
    if supply_atoms.is_empty() {
        return Err(MarketError::scenario("no supply atoms"));
    }
    Ok(Scenario {
        types: TypeDistribution::new(type_atoms)?,
        supply: SupplyDistribution::new(supply_atoms)?,
        p_r,
        tie,
    })
}

/// Canonical textual form; parses back to an equal scenario.
pub fn serialize_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    let tie = match s.tie.mode {
        TieBreak::Reserve => "reserve".to_string(),
        TieBreak::Spot => "spot".to_string(),
        TieBreak::Fraction(t) => format!("frac:{t}"),
    };
    match s.p_r {
        Some(p) => out.push_str(&format!("market p_r={p} tie={tie} eps_tie={}\n", s.tie.eps_tie)),
        None => out.push_str(&format!("market tie={tie} eps_tie={}\n", s.tie.eps_tie)),
    }
    for a in s.types.atoms() {
        out.push_str(&format!(
            "type v={} mass={} curve={}\n",
            a.value,
            a.mass,
            format_curve_literal(a.value, &a.curve)
        ));
    }
    for a in s.supply.atoms() {
        out.push_str(&format!("supply q={} prob={}\n", a.q, a.prob));
    }
    out
}
