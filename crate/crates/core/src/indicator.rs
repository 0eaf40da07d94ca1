//! Indicator functions of generalized Gelfand–Shilov spaces, held as `ln b(s)`,
//! and grid checks of the regularity conditions placed on them.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{geomspace, log_add_exp};

/// Fraction of the grid (in decades, counted from the top) used by the
/// monotone-tail test.
pub const TAIL_DECADES: f64 = 3.0;
/// Largest admissible rise of a log gap over the tail.
pub const TAIL_RISE_TOL: f64 = 0.05;
/// Largest admissible relative rise of a graded ratio over the tail.
pub const GRADED_RISE_TOL: f64 = 0.1;
pub const DEFAULT_LAMBDAS: [f64; 4] = [2.0, 4.0, 8.0, 16.0];

/// Geometric grid from 1e-2 to 1e6 with 200 points.
pub fn default_grid() -> Vec<f64> {
    geomspace(1e-2, 1e6, 200)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndicatorError {
    #[error("s = {s} outside tabulated range [{lo}, {hi}]")]
    OutOfRange { s: f64, lo: f64, hi: f64 },
    #[error("invalid indicator key '{0}'")]
    Parse(String),
    #[error("invalid table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IndicatorFamily {
    /// b(s) = (1+s)^N
    Polynomial(u32),
    /// b(s) = e^s
    PureExp,
    /// ln b(s) = s^{1/β}, shifted near the origin when β > 1 to keep b convex
    GevreyExp(f64),
    /// ln b(s) = s (ln(1+s))^γ
    LogBoostExp(f64),
    /// ln b(s) = (ln(1+s))^α
    LogPowerExp(f64),
    /// (s, ln b) pairs, linearly interpolated
    Tabulated(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogIndicator {
    pub family: IndicatorFamily,
    /// Multiplier N of graded (intersection-type) families: ln b_N = N·ln b.
    pub grading: Option<u32>,
}

impl LogIndicator {
    pub fn new(family: IndicatorFamily) -> Self {
        LogIndicator { family, grading: None }
    }

    pub fn graded(family: IndicatorFamily, n: u32) -> Self {
        LogIndicator { family, grading: Some(n) }
    }

    pub fn polynomial(n: u32) -> Self {
        Self::new(IndicatorFamily::Polynomial(n))
    }

    pub fn pure_exp() -> Self {
        Self::new(IndicatorFamily::PureExp)
    }

    pub fn gevrey(beta: f64) -> Self {
        Self::new(IndicatorFamily::GevreyExp(beta))
    }

    pub fn log_boost(gamma: f64) -> Self {
        Self::new(IndicatorFamily::LogBoostExp(gamma))
    }

    pub fn log_power(alpha: f64) -> Self {
        Self::new(IndicatorFamily::LogPowerExp(alpha))
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self, IndicatorError> {
        if points.len() < 2 {
            return Err(IndicatorError::Table("need at least two points".into()));
        }
        if points[0] != (0.0, 0.0) {
            return Err(IndicatorError::Table("table must start at (0, 0)".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(IndicatorError::Table("s values must increase".into()));
            }
            if w[1].1 < w[0].1 || !w[1].1.is_finite() {
                return Err(IndicatorError::Table("ln b must be finite and nondecreasing".into()));
            }
        }
        Ok(Self::new(IndicatorFamily::Tabulated(points)))
    }

    pub fn is_graded(&self) -> bool {
        self.grading.is_some()
    }

    fn multiplier(&self) -> f64 {
        self.grading.unwrap_or(1) as f64
    }

    /// Same family with grading index `n`.
    pub fn with_grading(&self, n: u32) -> Self {
        LogIndicator { family: self.family.clone(), grading: Some(n) }
    }

    /// ln b(s) of the ungraded family.
    pub fn base_log_value(&self, s: f64) -> Result<f64, IndicatorError> {
        Ok(match &self.family {
            IndicatorFamily::Polynomial(n) => *n as f64 * s.ln_1p(),
            IndicatorFamily::PureExp => s,
            IndicatorFamily::GevreyExp(beta) => {
                let p = 1.0 / beta;
                if p >= 1.0 {
                    s.powf(p)
                } else {
                    let s0 = ((1.0 - p) / p).powf(1.0 / p);
                    (s + s0).powf(p) - s0.powf(p)
                }
            }
            IndicatorFamily::LogBoostExp(gamma) => {
                if s == 0.0 {
                    0.0
                } else {
                    s * s.ln_1p().powf(*gamma)
                }
            }
            IndicatorFamily::LogPowerExp(alpha) => s.ln_1p().powf(*alpha),
            IndicatorFamily::Tabulated(points) => interpolate(points, s)?,
        })
    }

    /// ln b(s), including the grading multiplier.
    pub fn log_value(&self, s: f64) -> Result<f64, IndicatorError> {
        Ok(self.multiplier() * self.base_log_value(s)?)
    }

    /// Text key: "poly:N", "exp", "gevrey:β", "logboost:γ", "logpow:α" or
    /// "table:<path>" (CSV of s, ln b).
    pub fn parse_key(key: &str) -> Result<Self, IndicatorError> {
        let bad = || IndicatorError::Parse(key.to_string());
        let (head, arg) = match key.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (key.trim(), None),
        };
        let num = |a: Option<&str>| -> Result<f64, IndicatorError> {
            let v: f64 = a.ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        match head {
            "poly" => {
                let n: u32 = arg.ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if n == 0 {
                    return Err(bad());
                }
                Ok(Self::polynomial(n))
            }
            "exp" if arg.is_none() => Ok(Self::pure_exp()),
            "gevrey" => Ok(Self::gevrey(num(arg)?)),
            "logboost" => Ok(Self::log_boost(num(arg)?)),
            "logpow" => Ok(Self::log_power(num(arg)?)),
            "table" => Self::from_csv(Path::new(arg.ok_or_else(bad)?)),
            _ => Err(bad()),
        }
    }

    pub fn from_csv(path: &Path) -> Result<Self, IndicatorError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| IndicatorError::Table(e.to_string()))?;
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| IndicatorError::Table(e.to_string()))?;
            let get = |i: usize| -> Result<f64, IndicatorError> {
                rec.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| IndicatorError::Table(format!("bad row {:?}", rec)))
            };
            points.push((get(0)?, get(1)?));
        }
        Self::tabulated(points)
    }
}

impl fmt::Display for LogIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            IndicatorFamily::Polynomial(n) => write!(f, "poly:{n}")?,
            IndicatorFamily::PureExp => write!(f, "exp")?,
            IndicatorFamily::GevreyExp(b) => write!(f, "gevrey:{b}")?,
            IndicatorFamily::LogBoostExp(g) => write!(f, "logboost:{g}")?,
            IndicatorFamily::LogPowerExp(a) => write!(f, "logpow:{a}")?,
            IndicatorFamily::Tabulated(p) => write!(f, "table[{} points]", p.len())?,
        }
        if let Some(n) = self.grading {
            write!(f, "#N={n}")?;
        }
        Ok(())
    }
}

fn interpolate(points: &[(f64, f64)], s: f64) -> Result<f64, IndicatorError> {
    let lo = points[0].0;
    let hi = points[points.len() - 1].0;
    if !(s >= lo && s <= hi) {
        return Err(IndicatorError::OutOfRange { s, lo, hi });
    }
    let idx = points.partition_point(|p| p.0 <= s);
    if idx >= points.len() {
        return Ok(points[points.len() - 1].1);
    }
    let (s0, v0) = points[idx - 1];
    let (s1, v1) = points[idx];
    Ok(v0 + (v1 - v0) * (s - s0) / (s1 - s0))
}

/// Evaluates ln b(s).
pub fn eval_log_indicator(ind: &LogIndicator, s: f64) -> Result<f64, IndicatorError> {
    ind.log_value(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub pass: bool,
    /// Largest value of (left side − right side) in log form over both
    /// inequalities; nonpositive when the check passes.
    pub worst_slack: f64,
    pub witness: Option<(f64, f64)>,
}

/// Checks b((s1+s2)/2) ≤ (b(s1)+b(s2))/2 ≤ b(s1)·b(s2) for all grid pairs.
pub fn check_midpoint_convexity(
    ind: &LogIndicator,
    grid: &[f64],
) -> Result<ConvexityReport, IndicatorError> {
    const TOL: f64 = 1e-12;
    let vals: Vec<f64> = grid.iter().map(|&s| ind.log_value(s)).collect::<Result<_, _>>()?;
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for i in 0..grid.len() {
        for j in i..grid.len() {
            let mid = ind.log_value(0.5 * (grid[i] + grid[j]))?;
            let mean = log_add_exp(vals[i], vals[j]) - std::f64::consts::LN_2;
            let prod = vals[i] + vals[j];
            let scale = 1.0 + mean.abs();
            let slack = ((mid - mean) / scale).max((mean - prod) / scale);
            if slack > worst {
                worst = slack;
                witness = Some((grid[i], grid[j]));
            }
        }
    }
    let pass = worst <= TOL;
    Ok(ConvexityReport { pass, worst_slack: worst, witness: if pass { None } else { witness } })
}

/// Largest increase `v_j − v_i` (i < j) over the points with `s ≥ s_max·10^{-3}`.
pub fn tail_rise(grid: &[f64], values: &[f64]) -> f64 {
    let s_max = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = s_max / 10f64.powf(TAIL_DECADES);
    let mut running_min = f64::INFINITY;
    let mut rise: f64 = 0.0;
    for (&s, &v) in grid.iter().zip(values) {
        if s < cut || v.is_nan() {
            continue;
        }
        if running_min.is_finite() && v.is_finite() {
            rise = rise.max(v - running_min);
        } else if v == f64::INFINITY {
            return f64::INFINITY;
        }
        running_min = running_min.min(v);
    }
    rise
}

fn bounded_gap(grid: &[f64], gaps: &[f64]) -> (bool, f64, f64) {
    let max_gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rise = tail_rise(grid, gaps);
    (max_gap.is_finite() && rise <= TAIL_RISE_TOL, max_gap, rise)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaTrial {
    pub lambda: f64,
    pub max_log_gap: f64,
    pub tail_rise: f64,
    pub bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatReport {
    pub holds: bool,
    /// (C, λ) for the smallest admissible λ.
    pub witness: Option<(f64, f64)>,
    /// Grid point with the largest gap for the last λ tried, when no λ works.
    pub failure_point: Option<f64>,
    pub trials: Vec<LambdaTrial>,
}

fn compat_search<F>(
    grid: &[f64],
    lambdas: &[f64],
    mut gap_at: F,
) -> Result<CompatReport, IndicatorError>
where
    F: FnMut(f64, f64) -> Result<f64, IndicatorError>,
{
    let mut sorted: Vec<f64> = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut trials = Vec::new();
    let mut failure_point = None;
    for &lambda in &sorted {
        let gaps: Vec<f64> = grid.iter().map(|&s| gap_at(s, lambda)).collect::<Result<_, _>>()?;
        let (bounded, max_gap, rise) = bounded_gap(grid, &gaps);
        trials.push(LambdaTrial { lambda, max_log_gap: max_gap, tail_rise: rise, bounded });
        if bounded {
            return Ok(CompatReport {
                holds: true,
                witness: Some((max_gap.exp(), lambda)),
                failure_point: None,
                trials,
            });
        }
        let worst = gaps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| grid[i]);
        failure_point = worst;
    }
    Ok(CompatReport { holds: false, witness: None, failure_point, trials })
}

/// Searches λ, C with s·b(s) ≤ C·b(λs); graded families compare b_N against b_{N+1}.
pub fn check_mul_compat(
    ind: &LogIndicator,
    lambdas: &[f64],
    grid: &[f64],
) -> Result<CompatReport, IndicatorError> {
    let right = match ind.grading {
        Some(n) => ind.with_grading(n + 1),
        None => ind.clone(),
    };
    compat_search(grid, lambdas, |s, lambda| {
        Ok(s.ln() + ind.log_value(s)? - right.log_value(lambda * s)?)
    })
}

/// Searches λ, C with b(s)² ≤ C·b(λs); graded families compare against b_{2N}.
pub fn check_square_compat(
    ind: &LogIndicator,
    lambdas: &[f64],
    grid: &[f64],
) -> Result<CompatReport, IndicatorError> {
    let right = match ind.grading {
        Some(n) => ind.with_grading(2 * n),
        None => ind.clone(),
    };
    compat_search(grid, lambdas, |s, lambda| Ok(2.0 * ind.log_value(s)? - right.log_value(lambda * s)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsResult {
    pub eps: f64,
    pub holds: bool,
    /// ln C_ε when the bound holds.
    pub log_c: Option<f64>,
    /// Grading index chosen for graded targets.
    pub grading: Option<u32>,
    /// Tail rise of the gap (log units) or, for graded targets, of the
    /// probe/indicator ratio relative to its final value.
    pub tail_rise: f64,
    pub failure_point: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub holds: bool,
    pub per_eps: Vec<EpsResult>,
}

/// Tests ln probe(s) ≤ ln C_ε + ln b(εs) on the grid for each ε.
///
/// Graded targets are tested through the ratio ln probe / ln b(εs), which
/// must stay bounded; the grading index is then the ceiling of its maximum
/// over the tail.
pub fn dominates(
    target: &LogIndicator,
    probe: &dyn Fn(f64) -> f64,
    eps_list: &[f64],
    grid: &[f64],
) -> Result<DominanceReport, IndicatorError> {
    let probe_vals: Vec<f64> = grid.iter().map(|&s| probe(s)).collect();
    dominates_values(target, grid, &probe_vals, eps_list)
}

/// [`dominates`] with the probe already evaluated on the grid.
pub fn dominates_values(
    target: &LogIndicator,
    grid: &[f64],
    probe_vals: &[f64],
    eps_list: &[f64],
) -> Result<DominanceReport, IndicatorError> {
    let mut per_eps = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let res = if target.is_graded() {
            graded_dominance(target, grid, probe_vals, eps)?
        } else {
            let gaps: Vec<f64> = grid
                .iter()
                .zip(probe_vals)
                .map(|(&s, &p)| Ok(p - target.log_value(eps * s)?))
                .collect::<Result<_, IndicatorError>>()?;
            let (holds, max_gap, rise) = bounded_gap(grid, &gaps);
            let failure_point = if holds { None } else { grid.last().copied() };
            EpsResult {
                eps,
                holds,
                log_c: holds.then_some(max_gap),
                grading: None,
                tail_rise: rise,
                failure_point,
            }
        };
        per_eps.push(res);
    }
    Ok(DominanceReport { holds: per_eps.iter().all(|r| r.holds), per_eps })
}

fn graded_dominance(
    target: &LogIndicator,
    grid: &[f64],
    probe_vals: &[f64],
    eps: f64,
) -> Result<EpsResult, IndicatorError> {
    let s_max = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = s_max / 10f64.powf(TAIL_DECADES);
    let mut ratios = Vec::new();
    let mut tail_grid = Vec::new();
    for (&s, &p) in grid.iter().zip(probe_vals) {
        if s < cut {
            continue;
        }
        let base = target.base_log_value(eps * s)?;
        if !p.is_finite() {
            return Ok(EpsResult {
                eps,
                holds: false,
                log_c: None,
                grading: None,
                tail_rise: f64::INFINITY,
                failure_point: Some(s),
            });
        }
        if base > 0.0 {
            ratios.push(p / base);
            tail_grid.push(s);
        }
    }
    let r_max = ratios.iter().copied().fold(0.0f64, f64::max);
    let rise = tail_rise(&tail_grid, &ratios);
    let rel_rise = if r_max > 0.0 { rise / r_max } else { 0.0 };
    let holds = rel_rise <= GRADED_RISE_TOL;
    if !holds {
        return Ok(EpsResult {
            eps,
            holds,
            log_c: None,
            grading: None,
            tail_rise: rel_rise,
            failure_point: tail_grid.last().copied(),
        });
    }
    let n = (r_max.ceil().max(1.0)).min(u32::MAX as f64) as u32;
    let graded = target.with_grading(n);
    let mut log_c = f64::NEG_INFINITY;
    for (&s, &p) in grid.iter().zip(probe_vals) {
        log_c = log_c.max(p - graded.log_value(eps * s)?);
    }
    Ok(EpsResult {
        eps,
        holds: log_c.is_finite(),
        log_c: Some(log_c),
        grading: Some(n),
        tail_rise: rel_rise,
        failure_point: None,
    })
}
