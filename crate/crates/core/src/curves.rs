//! Piecewise-linear concave utility curves and the risk-aversion partial order.
//!
//! A curve maps realized surplus to utility. Slopes start at 1, never increase,
//! and never exceed 1, so utility is a concave, 1-Lipschitz function of surplus
//! with u(0) = 0. Risk attitudes are compared by asking whether one curve is a
//! concave non-decreasing transform of the other.

use crate::error::{MarketError, Result};

/// Absolute tolerance for slope comparisons and flat-segment detection.
pub const SLOPE_TOL: f64 = 1e-12;

/// Outcome of comparing two utility curves under the risk-aversion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskOrder {
    /// First curve is weakly more risk-averse than the second.
    MoreAverse,
    /// First curve is weakly less risk-averse than the second.
    LessAverse,
    Equal,
    Incomparable,
}

/// Normalized concave payoff map: u(0) = 0, first slope 1, slopes non-increasing in [0, 1].
///
/// Stored as breakpoints after the implicit origin; past the last breakpoint the
/// tail slope extends forever. Curves are immutable and cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityCurve {
    points: Vec<(f64, f64)>,
    tail_slope: f64,
}

impl UtilityCurve {
    /// Builds a curve from breakpoints `(z, u(z))` plus the slope past the last one.
    pub fn new(points: Vec<(f64, f64)>, tail_slope: f64) -> Result<Self> {
        let mut prev = (0.0, 0.0);
        for &(z, u) in &points {
            if !z.is_finite() || !u.is_finite() {
                return Err(MarketError::InvalidCurve("non-finite breakpoint".into()));
            }
            if z <= prev.0 {
                return Err(MarketError::InvalidCurve(format!(
                    "breakpoints must be strictly increasing in z (z = {z})"
                )));
            }
            if u < prev.1 - SLOPE_TOL {
                return Err(MarketError::InvalidCurve("utility must be non-decreasing".into()));
            }
            prev = (z, u);
        }
        if !tail_slope.is_finite() {
            return Err(MarketError::InvalidCurve("non-finite tail slope".into()));
        }

        let identically_zero =
            points.iter().all(|&(_, u)| u.abs() <= SLOPE_TOL) && tail_slope.abs() <= SLOPE_TOL;
        if identically_zero {
            return Err(MarketError::DegenerateCurve);
        }

        // Slopes recomputed from points carry rounding noise of order
        // eps * coordinate / width, which dwarfs SLOPE_TOL on narrow segments;
        // every slope check below is therefore width-aware.
        let slopes = segment_slopes(&points, tail_slope);
        let scale = points
            .iter()
            .fold(1.0f64, |m, &(z, u)| m.max(z).max(u));
        let noise: Vec<f64> = {
            let mut out = Vec::with_capacity(slopes.len());
            let mut prev_z = 0.0;
            for &(z, _) in &points {
                out.push(8.0 * f64::EPSILON * scale / (z - prev_z));
                prev_z = z;
            }
            out.push(0.0); // the tail slope is stored, not derived
            out
        };

        if (slopes[0] - 1.0).abs() > SLOPE_TOL + noise[0] {
            return Err(MarketError::InvalidCurve(format!(
                "first segment slope must be 1, got {}",
                slopes[0]
            )));
        }
        for i in 0..slopes.len() - 1 {
            if slopes[i + 1] > slopes[i] + SLOPE_TOL + noise[i] + noise[i + 1] {
                return Err(MarketError::InvalidCurve("slopes must be non-increasing".into()));
            }
        }
        for (&s, &n) in slopes.iter().zip(&noise) {
            if s < -(SLOPE_TOL + n) || s > 1.0 + SLOPE_TOL + n {
                return Err(MarketError::InvalidCurve(format!("slope {s} outside [0, 1]")));
            }
        }

        // Canonical form: drop breakpoints where the slope does not actually change,
        // so structurally equal curves compare equal.
        let mut kept = Vec::with_capacity(points.len());
        for (i, &pt) in points.iter().enumerate() {
            if (slopes[i + 1] - slopes[i]).abs() > SLOPE_TOL + noise[i] + noise[i + 1] {
                kept.push(pt);
            }
        }
        Ok(UtilityCurve {
            points: kept,
            tail_slope,
        })
    }

    /// The risk-neutral curve u(z) = z.
    pub fn identity() -> Self {
        UtilityCurve {
            points: Vec::new(),
            tail_slope: 1.0,
        }
    }

    /// The curve u(z) = min(z, cap).
    pub fn capped(cap: f64) -> Result<Self> {
        if !cap.is_finite() || cap < 0.0 {
            return Err(MarketError::InvalidCurve(format!("invalid cap {cap}")));
        }
        if cap <= 0.0 {
            return Err(MarketError::DegenerateCurve);
        }
        UtilityCurve::new(vec![(cap, cap)], 0.0)
    }

    /// Soft-budget curve u(z) = min(z, value - budget): spending below the budget
    /// is sunk, spending above it is linear.
    pub fn soft_budget(value: f64, budget: f64) -> Result<Self> {
        if budget.is_nan() || budget < 0.0 || budget > value || !value.is_finite() {
            return Err(MarketError::InvalidBudget { value, budget });
        }
        if budget == value {
            return Err(MarketError::DegenerateCurve);
        }
        UtilityCurve::capped(value - budget)
    }

    /// Builds a curve from breakpoints alone; the slope of the final segment extends.
    pub fn from_breakpoints(points: &[(f64, f64)]) -> Result<Self> {
        let last = points
            .last()
            .ok_or_else(|| MarketError::InvalidCurve("empty breakpoint list".into()))?;
        let prev = if points.len() >= 2 {
            points[points.len() - 2]
        } else {
            (0.0, 0.0)
        };
        if last.0 <= prev.0 {
            return Err(MarketError::InvalidCurve("breakpoints must be strictly increasing in z".into()));
        }
        let tail = (last.1 - prev.1) / (last.0 - prev.0);
        UtilityCurve::new(points.to_vec(), tail)
    }

    /// Evaluates the curve; surplus must be non-negative.
    pub fn eval(&self, z: f64) -> Result<f64> {
        if z < 0.0 || z.is_nan() {
            return Err(MarketError::NegativeArgument(z));
        }
        Ok(self.eval_at(z))
    }

    pub(crate) fn eval_at(&self, z: f64) -> f64 {
        debug_assert!(z >= 0.0);
        let mut prev = (0.0, 0.0);
        for &(bz, bu) in &self.points {
            if z <= bz {
                return prev.1 + (z - prev.0) * (bu - prev.1) / (bz - prev.0);
            }
            prev = (bz, bu);
        }
        prev.1 + (z - prev.0) * self.tail_slope
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    pub fn is_identity(&self) -> bool {
        self.points.is_empty() && (self.tail_slope - 1.0).abs() <= SLOPE_TOL
    }

    /// If the curve is exactly min(z, c), returns c.
    pub fn cap(&self) -> Option<f64> {
        match (self.points.as_slice(), self.tail_slope) {
            ([(z, u)], t) if t.abs() <= SLOPE_TOL && (z - u).abs() <= SLOPE_TOL * z.max(1.0) => {
                Some(*z)
            }
            _ => None,
        }
    }

    /// Slope of the segment containing z (right-continuous), together with the
    /// rounding-noise bound for that slope.
    fn slope_and_noise_after(&self, z: f64, scale: f64) -> (f64, f64) {
        let mut prev = (0.0, 0.0);
        for &(bz, bu) in &self.points {
            if z < bz {
                let width = bz - prev.0;
                return ((bu - prev.1) / width, 8.0 * f64::EPSILON * scale / width);
            }
            prev = (bz, bu);
        }
        (self.tail_slope, 0.0)
    }

    fn extent_scale(&self) -> f64 {
        self.points
            .iter()
            .fold(1.0f64, |m, &(z, u)| m.max(z).max(u))
    }
}

fn segment_slopes(points: &[(f64, f64)], tail_slope: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len() + 1);
    let mut prev = (0.0, 0.0);
    for &(z, u) in points {
        out.push((u - prev.1) / (z - prev.0));
        prev = (z, u);
    }
    out.push(tail_slope);
    out
}

/// Per-curve (slope, noise bound) pairs on the merged breakpoint grid; the
/// final entry is the joint tail.
fn merged_segment_slopes(a: &UtilityCurve, b: &UtilityCurve) -> Vec<((f64, f64), (f64, f64))> {
    let mut bounds: Vec<f64> = a
        .points
        .iter()
        .chain(b.points.iter())
        .map(|&(z, _)| z)
        .collect();
    bounds.sort_by(|x, y| x.partial_cmp(y).unwrap());
    bounds.dedup();

    let scale = a.extent_scale().max(b.extent_scale());
    let mut out = Vec::with_capacity(bounds.len() + 1);
    let mut left = 0.0;
    for &z in &bounds {
        out.push((a.slope_and_noise_after(left, scale), b.slope_and_noise_after(left, scale)));
        left = z;
    }
    out.push((a.slope_and_noise_after(left, scale), b.slope_and_noise_after(left, scale)));
    out
}

/// True when `a` is a concave non-decreasing transform of `b`, i.e. weakly more
/// risk-averse: checked as non-increasing ratios of segment slopes on the merged
/// grid, with flat segments of `b` forcing flat segments of `a`.
fn weakly_more_averse(a: &UtilityCurve, b: &UtilityCurve) -> bool {
    let mut last_ratio = f64::INFINITY;
    let mut last_tol = 0.0;
    for ((sa, na), (sb, nb)) in merged_segment_slopes(a, b) {
        if sb <= SLOPE_TOL + nb {
            if sa > SLOPE_TOL + na {
                return false;
            }
            continue;
        }
        let r = sa / sb;
        let tol = SLOPE_TOL + (na + r * nb) / sb;
        if r > last_ratio + tol + last_tol {
            return false;
        }
        if r < last_ratio {
            last_ratio = r;
            last_tol = tol;
        }
    }
    true
}

/// Decides the risk-aversion partial order between two curves.
pub fn compare_risk_aversion(a: &UtilityCurve, b: &UtilityCurve) -> RiskOrder {
    match (weakly_more_averse(a, b), weakly_more_averse(b, a)) {
        (true, true) => RiskOrder::Equal,
        (true, false) => RiskOrder::MoreAverse,
        (false, true) => RiskOrder::LessAverse,
        (false, false) => RiskOrder::Incomparable,
    }
}

/// Composes `transform` after `curve`; the result is weakly more risk-averse
/// than `curve` and satisfies all curve invariants.
pub fn compose_concave(curve: &UtilityCurve, transform: &UtilityCurve) -> Result<UtilityCurve> {
    // Breakpoints of the composition: the curve's own, plus preimages of the
    // transform's breakpoints under the curve.
    let mut zs: Vec<f64> = curve.points.iter().map(|&(z, _)| z).collect();
    for &(y, _) in &transform.points {
        if let Some(z) = preimage(curve, y) {
            zs.push(z);
        }
    }
    zs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let snap = 1e-12 * curve.extent_scale().max(transform.extent_scale());
    zs.dedup_by(|x, y| (*x - *y).abs() <= snap);
    zs.retain(|&z| z > snap);

    let points: Vec<(f64, f64)> = zs
        .iter()
        .map(|&z| (z, transform.eval_at(curve.eval_at(z))))
        .collect();
    let tail = if curve.tail_slope <= SLOPE_TOL {
        0.0
    } else {
        curve.tail_slope * transform.tail_slope
    };
    UtilityCurve::new(points, tail)
}

/// Leftmost z with curve(z) = y, if the curve attains y.
fn preimage(curve: &UtilityCurve, y: f64) -> Option<f64> {
    let mut prev = (0.0, 0.0);
    for &(bz, bu) in &curve.points {
        if y <= bu {
            let s = (bu - prev.1) / (bz - prev.0);
            if s <= SLOPE_TOL {
                return Some(prev.0);
            }
            return Some(prev.0 + (y - prev.1) / s);
        }
        prev = (bz, bu);
    }
    if curve.tail_slope > SLOPE_TOL {
        Some(prev.0 + (y - prev.1) / curve.tail_slope)
    } else if y <= prev.1 {
        Some(prev.0)
    } else {
        None
    }
}

/// Parses a curve literal: `soft_budget b=<num>` or `piecewise pts=z1:u1,z2:u2,...`.
/// The type's value is needed to resolve a soft budget into its cap.
pub fn parse_curve_literal(value: f64, literal: &str) -> Result<UtilityCurve> {
    let mut it = literal.split_whitespace();
    let kind = it
        .next()
        .ok_or_else(|| MarketError::InvalidCurve("empty curve literal".into()))?;
    match kind {
        "soft_budget" => {
            let arg = it
                .next()
                .ok_or_else(|| MarketError::InvalidCurve("soft_budget needs b=<num>".into()))?;
            let b = arg
                .strip_prefix("b=")
                .ok_or_else(|| MarketError::InvalidCurve(format!("unknown soft_budget key `{arg}`")))?;
            let budget: f64 = b
                .parse()
                .map_err(|_| MarketError::InvalidCurve(format!("bad number `{b}`")))?;
            if it.next().is_some() {
                return Err(MarketError::InvalidCurve("trailing tokens in curve literal".into()));
            }
            UtilityCurve::soft_budget(value, budget)
        }
        "piecewise" => {
            let arg = it
                .next()
                .ok_or_else(|| MarketError::InvalidCurve("piecewise needs pts=...".into()))?;
            let pts = arg
                .strip_prefix("pts=")
                .ok_or_else(|| MarketError::InvalidCurve(format!("unknown piecewise key `{arg}`")))?;
            if it.next().is_some() {
                return Err(MarketError::InvalidCurve("trailing tokens in curve literal".into()));
            }
            let mut bps = Vec::new();
            for pair in pts.split(',') {
                let (z, u) = pair
                    .split_once(':')
                    .ok_or_else(|| MarketError::InvalidCurve(format!("bad point `{pair}`")))?;
                let z: f64 = z
                    .parse()
                    .map_err(|_| MarketError::InvalidCurve(format!("bad number `{z}`")))?;
                let u: f64 = u
                    .parse()
                    .map_err(|_| MarketError::InvalidCurve(format!("bad number `{u}`")))?;
                bps.push((z, u));
            }
            UtilityCurve::from_breakpoints(&bps)
        }
        other => Err(MarketError::InvalidCurve(format!("unknown curve kind `{other}`"))),
    }
}

/// Formats a curve as a scenario literal that parses back to an equal curve.
pub fn format_curve_literal(value: f64, curve: &UtilityCurve) -> String {
    if let Some(c) = curve.cap() {
        if c <= value {
            return format!("soft_budget b={}", value - c);
        }
    }
    // Encode the tail slope with one synthetic collinear point; the constructor
    // drops it again.
    let (last_z, last_u) = curve.points.last().copied().unwrap_or((0.0, 0.0));
    let mut parts: Vec<String> = curve
        .points
        .iter()
        .map(|&(z, u)| format!("{z}:{u}"))
        .collect();
    parts.push(format!("{}:{}", last_z + 1.0, last_u + curve.tail_slope));
    format!("piecewise pts={}", parts.join(","))
}
