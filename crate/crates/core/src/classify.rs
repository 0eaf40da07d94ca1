//! Test-function space selection for Wick series of the implemented free
//! fields, and grid verification of the dominance criteria behind it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::fields::{envelope_of, EnvelopeKind, FieldError, FieldModel, MajorantEnvelope};
use crate::indicator::{dominates_values, tail_rise, IndicatorError, IndicatorFamily, LogIndicator, GRADED_RISE_TOL};
use crate::numeric::{geomspace, least_squares, linear_fit};
use crate::series::{
    check_localization, check_product_bound, envelope_inf, envelope_inf_by, exchanged_inf_series, fit_growth_order_values,
    full_series, sum_majorant_series, truncated_series, CoefficientFamily, Localization, ProductBound, EnvelopeInf,
    GrowthFit,
};

pub const DEFAULT_L: [f64; 3] = [1.0, 10.0, 100.0];
pub const DEFAULT_EPS: [f64; 3] = [1.0, 0.1, 0.01];
/// Coefficient fits with larger rms residual are refused.
pub const AMBIGUOUS_RESIDUAL: f64 = 0.1;
const LOCALIZATION_K: u64 = 10_000;
const PRODUCT_BOUND_K: u64 = 400;
const GROWTH_K: (f64, f64) = (1e3, 1e6);

/// Geometric grid over [1, 10⁶] with 40 points.
pub fn default_grid() -> Vec<f64> {
    geomspace(1.0, 1e6, 40)
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("precondition failed: {condition} ({detail})")]
    Precondition { condition: &'static str, detail: String },
    #[error("no realization: {0}")]
    NoRealization(String),
    #[error("ambiguous growth fit (rms residual {residual:.3})")]
    AmbiguousFit { residual: f64, k: Vec<f64>, a_k: Vec<f64> },
    #[error("no catalog space passes; tried {0:?}")]
    NoPassingSpace(Vec<String>),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid space descriptor '{0}'")]
    Parse(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
}

/// Rounds to four significant figures.
pub fn round_sig4(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(3 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

#[derive(Debug, Clone)]
pub enum SpaceDescriptor {
    SchwartzS,
    GelfandShilov { a: LogIndicator, b: LogIndicator },
    /// S^b
    FourierOnly(LogIndicator),
    /// S^β_α
    GevreyPair { alpha: f64, beta: f64 },
    /// S^β
    FourierGevrey(f64),
    /// 𝒫^β_α
    GradedP { alpha: f64, beta: f64 },
    /// 𝒫_2
    GradedP2,
    KClass(String),
}

impl SpaceDescriptor {
    pub fn graded_p(alpha: f64, beta: f64) -> Result<Self, ClassifyError> {
        if !(alpha >= 2.0 && beta >= 2.0) {
            return Err(ClassifyError::Domain(format!("graded P needs α, β ≥ 2 (got {alpha}, {beta})")));
        }
        Ok(SpaceDescriptor::GradedP { alpha: round_sig4(alpha), beta: round_sig4(beta) })
    }

    /// Coordinate-side and momentum-side indicators; `None` on the coordinate
    /// side for spaces restricting only the Fourier transform.
    pub fn indicators(&self) -> Result<(Option<LogIndicator>, LogIndicator), ClassifyError> {
        let graded = |f: IndicatorFamily| LogIndicator::new(f).with_grading(1);
        Ok(match self {
            Self::SchwartzS => (Some(graded(IndicatorFamily::Polynomial(1))), graded(IndicatorFamily::Polynomial(1))),
            Self::GradedP2 => (Some(graded(IndicatorFamily::LogPowerExp(2.0))), graded(IndicatorFamily::LogPowerExp(2.0))),
            Self::GradedP { alpha, beta } => {
                (Some(graded(IndicatorFamily::LogPowerExp(*alpha))), graded(IndicatorFamily::LogPowerExp(*beta)))
            }
            Self::GelfandShilov { a, b } => (Some(a.clone()), b.clone()),
            Self::FourierOnly(b) => (None, b.clone()),
            Self::FourierGevrey(beta) => {
                if *beta <= 0.0 {
                    return Err(ClassifyError::Domain("S⁰ has no finite indicator".into()));
                }
                (None, LogIndicator::gevrey(*beta))
            }
            Self::GevreyPair { alpha, beta } => (Some(LogIndicator::gevrey(*alpha)), LogIndicator::gevrey(*beta)),
            Self::KClass(desc) => return Err(ClassifyError::Domain(format!("K-class '{desc}' has no indicator pair"))),
        })
    }
}

fn indicator_key(ind: &LogIndicator) -> String {
    let mut plain = ind.clone();
    plain.grading = None;
    plain.to_string()
}

impl fmt::Display for SpaceDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SchwartzS => write!(f, "S"),
            Self::GradedP2 => write!(f, "P2"),
            Self::GradedP { alpha, beta } => write!(f, "P:a={},b={}", round_sig4(*alpha), round_sig4(*beta)),
            Self::FourierGevrey(beta) => write!(f, "Sb:gevrey:{}", round_sig4(*beta)),
            Self::FourierOnly(b) => match b.family {
                IndicatorFamily::GevreyExp(beta) => write!(f, "Sb:gevrey:{}", round_sig4(beta)),
                _ => write!(f, "Sb:{}", indicator_key(b)),
            },
            Self::GevreyPair { alpha, beta } => write!(f, "Sab:a={},b={}", round_sig4(*alpha), round_sig4(*beta)),
            Self::GelfandShilov { a, b } => write!(f, "Sba:{};{}", indicator_key(a), indicator_key(b)),
            Self::KClass(d) => write!(f, "K:{d}"),
        }
    }
}

impl PartialEq for SpaceDescriptor {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl Serialize for SpaceDescriptor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl FromStr for SpaceDescriptor {
    type Err = ClassifyError;

    fn from_str(key: &str) -> Result<Self, ClassifyError> {
        let bad = || ClassifyError::Parse(key.to_string());
        let key = key.trim();
        let pair = |rest: &str| -> Result<(f64, f64), ClassifyError> {
            let (a, b) = rest.split_once(',').ok_or_else(bad)?;
            let a = a.trim().strip_prefix("a=").ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let b = b.trim().strip_prefix("b=").ok_or_else(bad)?.parse().map_err(|_| bad())?;
            Ok((a, b))
        };
        let ind = |k: &str| LogIndicator::parse_key(k).map_err(|_| bad());
        match key {
            "S" => return Ok(Self::SchwartzS),
            "P2" => return Ok(Self::GradedP2),
            _ => {}
        }
        if let Some(rest) = key.strip_prefix("P:") {
            let (a, b) = pair(rest)?;
            return Self::graded_p(a, b);
        }
        if let Some(rest) = key.strip_prefix("Sab:") {
            let (alpha, beta) = pair(rest)?;
            if !(alpha > 0.0 && beta > 0.0) {
                return Err(bad());
            }
            return Ok(Self::GevreyPair { alpha, beta });
        }
        if let Some(rest) = key.strip_prefix("Sba:") {
            let (a, b) = rest.split_once(';').ok_or_else(bad)?;
            return Ok(Self::GelfandShilov { a: ind(a)?, b: ind(b)? });
        }
        if let Some(rest) = key.strip_prefix("Sb:") {
            let b = ind(rest)?;
            return Ok(match b.family {
                IndicatorFamily::GevreyExp(beta) => Self::FourierGevrey(beta),
                _ => Self::FourierOnly(b),
            });
        }
        if let Some(rest) = key.strip_prefix("K:") {
            return Ok(Self::KClass(rest.to_string()));
        }
        Err(bad())
    }
}

/// Closed-form space for the massless 2D field and d_k = (k!)^{−1/ρ}.
pub fn massless_space_table(rho: f64) -> Result<SpaceDescriptor, ClassifyError> {
    if !(rho > 0.0 && rho < 2.0) {
        return Err(ClassifyError::Domain(format!("ρ = {rho} outside (0, 2)")));
    }
    // Boundary values belong to the lower band.
    let at_most = |edge: f64| rho <= edge * (1.0 + 1e-12);
    let alpha = 2.0 * rho / (2.0 - rho);
    Ok(if at_most(2.0 / 3.0) {
        SpaceDescriptor::SchwartzS
    } else if at_most(1.0) {
        SpaceDescriptor::GradedP2
    } else if at_most(4.0 / 3.0) {
        SpaceDescriptor::graded_p(alpha, 2.0)?
    } else {
        SpaceDescriptor::graded_p(alpha, rho / (2.0 - rho))?
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub space: SpaceDescriptor,
    /// The result is sufficient, not shown to be optimal.
    pub provenance: String,
    pub notes: Vec<String>,
    pub localization: Option<Localization>,
    pub product_bound: Option<ProductBound>,
    pub coefficient_growth: Option<CoefficientGrowth>,
    pub evidence: Vec<CriterionReport>,
    pub uv_growth: Option<GrowthFit>,
}

impl Classification {
    fn bare(space: SpaceDescriptor, provenance: &str) -> Self {
        Classification {
            space,
            provenance: provenance.into(),
            notes: vec![],
            localization: None,
            product_bound: None,
            coefficient_growth: None,
            evidence: vec![],
            uv_growth: None,
        }
    }
}

/// Space for a field of mass m ≥ 0 in dim > 2 (any finite-order entire series
/// in the massive case).
pub fn dimensional_space(dim: u32, _rho: f64, massive: bool) -> Result<Classification, ClassifyError> {
    if dim <= 2 {
        return Err(ClassifyError::Domain(format!("dim = {dim} must exceed 2")));
    }
    let provenance = "sufficient space for the massive field, dimension bound";
    if massive {
        let mut c = Classification::bare(SpaceDescriptor::FourierOnly(LogIndicator::log_boost(2.0)), provenance);
        c.notes.push("any GevreyExp β<1 admissible; LogBoostExp γ>1 with γ=2 returned".into());
        return Ok(c);
    }
    let beta = 1.0 - 1.0 / (dim as f64 - 2.0);
    let mut c = Classification::bare(SpaceDescriptor::FourierGevrey(beta), provenance);
    if beta == 0.0 {
        c.notes.push("β = 0: the S⁰ edge case (Fourier transforms of compact support), flagged".into());
    }
    Ok(c)
}

/// Exponent σ in ln(k! d_{2k}) ≈ −σ k ln k, and μ = 1/σ, the order of
/// ln Σ k! d_{2k} w^k as a function of w.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientGrowth {
    pub sigma: f64,
    pub mu: f64,
    pub residual: f64,
}

/// Regresses a_k = ln(k! d_{2k})/k on [ln k, 1, ln k/k, 1/k], which carries
/// Stirling's expansion to O(1/k²).
pub fn coefficient_growth(d: &CoefficientFamily) -> Result<CoefficientGrowth, ClassifyError> {
    if let Some(n) = d.support_len() {
        if n < 2 * GROWTH_K.0 as u64 {
            return Ok(CoefficientGrowth { sigma: f64::INFINITY, mu: 0.0, residual: 0.0 });
        }
    }
    let top = d.support_len().map_or(GROWTH_K.1, |n| ((n / 2) as f64).min(GROWTH_K.1));
    let ks = geomspace(GROWTH_K.0, top.max(GROWTH_K.0 * 10.0), 40);
    let mut design = Vec::new();
    let mut a = Vec::new();
    for &kf in &ks {
        let k = kf.round() as u64;
        let v = (crate::numeric::ln_factorial(k as f64) + d.log_d(2 * k)) / k as f64;
        if !v.is_finite() {
            continue;
        }
        let lk = (k as f64).ln();
        design.push(vec![lk, 1.0, lk / k as f64, 1.0 / k as f64]);
        a.push(v);
    }
    if a.len() < 8 {
        return Ok(CoefficientGrowth { sigma: f64::INFINITY, mu: 0.0, residual: 0.0 });
    }
    let (beta, residual) = least_squares(&design, &a);
    if residual > AMBIGUOUS_RESIDUAL {
        return Err(ClassifyError::AmbiguousFit { residual, k: ks, a_k: a });
    }
    let sigma = -beta[0];
    Ok(CoefficientGrowth { sigma, mu: if sigma > 0.0 { 1.0 / sigma } else { f64::INFINITY }, residual })
}

/// Which inequality is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CriterionId {
    /// IR sum ≤ C a(εr) and UV envelope infimum ≤ C b(εs) for each L, ε.
    Coupled,
    /// As Coupled with ε = 1.
    Simplified,
    /// Σ_{k<s} k! d_{2k} (s/k)^{k(d−2)} ≤ C_ε b(εs).
    Truncated,
    /// The untruncated sum ≤ C_ε b(εs).
    Full,
}

impl FromStr for CriterionId {
    type Err = ClassifyError;
    fn from_str(s: &str) -> Result<Self, ClassifyError> {
        match s {
            "coupled" => Ok(Self::Coupled),
            "simplified" => Ok(Self::Simplified),
            "truncated" => Ok(Self::Truncated),
            "full" => Ok(Self::Full),
            _ => Err(ClassifyError::Parse(s.to_string())),
        }
    }
}

impl fmt::Display for CriterionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Coupled => "coupled",
            Self::Simplified => "simplified",
            Self::Truncated => "truncated",
            Self::Full => "full",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CriterionOptions {
    pub l_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
}

impl Default for CriterionOptions {
    fn default() -> Self {
        CriterionOptions { l_list: DEFAULT_L.to_vec(), eps_list: DEFAULT_EPS.to_vec(), r_grid: default_grid(), s_grid: default_grid() }
    }
}

impl CriterionOptions {
    /// Defaults, with the massive s-grid stretched to 10¹² where the UV gap
    /// at small ε has turned over.
    pub fn for_model(model: &FieldModel) -> Self {
        let s_grid = match model {
            FieldModel::Massless2D { .. } => default_grid(),
            FieldModel::Massive { .. } => geomspace(1.0, 1e12, 60),
        };
        CriterionOptions { s_grid, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    IR,
    UV,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionCell {
    pub side: Side,
    pub l: Option<f64>,
    pub eps: f64,
    pub holds: bool,
    pub log_c: Option<f64>,
    pub grading: Option<u32>,
    pub tail_rise: f64,
    pub failure_point: Option<f64>,
    /// Passed through the explicit bound at t = 1/s rather than the infimum.
    pub via_bound: bool,
}

/// Slope of ln ln F against ln ln(1+x) over the upper half of the grid.
#[derive(Debug, Clone, Serialize)]
pub struct ShapeFit {
    pub side: Side,
    pub l: Option<f64>,
    pub log_order: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub criterion: CriterionId,
    pub space: String,
    pub cells: Vec<CriterionCell>,
    pub r_range: (f64, f64),
    pub s_range: (f64, f64),
    pub pass: bool,
    pub shapes: Vec<ShapeFit>,
    pub notes: Vec<String>,
}

/// Left-hand sides of a criterion, ln F on the grid per L (or a single
/// column for Truncated/Full). `None` marks a divergent value.
#[derive(Debug, Clone)]
pub struct CriterionLhs {
    pub criterion: CriterionId,
    pub r_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub ir: Vec<(Option<f64>, Vec<Option<f64>>)>,
    pub uv: Vec<(Option<f64>, Vec<Option<f64>>)>,
    /// s·t + ln F(L w_UV(t)) at t = min(1, 1/s), an upper bound of the UV
    /// infimum; kept for log-type envelopes only.
    pub uv_bound: Vec<(Option<f64>, Vec<Option<f64>>)>,
}

fn uv_window(env: &MajorantEnvelope) -> (f64, f64) {
    match env.kind {
        EnvelopeKind::LogSquared => (0.0, 1.0),
        EnvelopeKind::Massive { .. } => (0.0, f64::INFINITY),
    }
}

fn log_w_ir(env: &MajorantEnvelope, r: f64) -> f64 {
    env.w_ir(r).ln()
}

/// Evaluates the left-hand sides of `criterion` on the grids.
pub fn criterion_lhs(
    model: &FieldModel,
    d: &CoefficientFamily,
    criterion: CriterionId,
    opts: &CriterionOptions,
) -> Result<CriterionLhs, ClassifyError> {
    let mut lhs = CriterionLhs { criterion, r_grid: opts.r_grid.clone(), s_grid: opts.s_grid.clone(), ir: vec![], uv: vec![], uv_bound: vec![] };
    match criterion {
        CriterionId::Coupled | CriterionId::Simplified => {
            let env = envelope_of(model)?;
            let window = uv_window(&env);
            for &l in &opts.l_list {
                let ir: Vec<Option<f64>> = opts
                    .r_grid
                    .par_iter()
                    .map(|&r| sum_majorant_series(l, d, log_w_ir(&env, r), 1e-15).log_value())
                    .collect();
                let uv: Vec<Option<f64>> = opts
                    .s_grid
                    .par_iter()
                    .map(|&s| envelope_inf(s, l, d, &|t| env.log_w_uv(t), window).log_value())
                    .collect();
                lhs.ir.push((Some(l), ir));
                lhs.uv.push((Some(l), uv));
                if env.kind == EnvelopeKind::LogSquared {
                    let bound: Vec<Option<f64>> = opts
                        .s_grid
                        .par_iter()
                        .map(|&s| {
                            let t = (1.0 / s).min(1.0);
                            sum_majorant_series(l, d, env.log_w_uv(t), 1e-15).log_value().map(|v| s * t + v)
                        })
                        .collect();
                    lhs.uv_bound.push((Some(l), bound));
                }
            }
        }
        CriterionId::Truncated | CriterionId::Full => {
            let dim = model.dim() as u32;
            if dim <= 2 {
                return Err(ClassifyError::Domain(format!("{criterion} needs dim > 2")));
            }
            let uv: Vec<Option<f64>> = opts
                .s_grid
                .par_iter()
                .map(|&s| match criterion {
                    CriterionId::Truncated => Some(truncated_series(s, d, dim)),
                    _ => full_series(s, d, dim).log_value(),
                })
                .collect();
            lhs.uv.push((None, uv));
        }
    }
    Ok(lhs)
}

fn shape_fit(side: Side, l: Option<f64>, grid: &[f64], vals: &[Option<f64>]) -> Option<ShapeFit> {
    let half = grid.len() / 2;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&x, v) in grid[half..].iter().zip(&vals[half..]) {
        match v {
            Some(v) if *v > 0.0 && v.is_finite() => {
                xs.push(x.ln_1p().ln());
                ys.push(v.ln());
            }
            _ => return None,
        }
    }
    if xs.len() < 3 {
        return None;
    }
    let (slope, _, residual) = linear_fit(&xs, &ys);
    Some(ShapeFit { side, l, log_order: slope, residual })
}

fn check_side(
    side: Side,
    l: Option<f64>,
    target: &LogIndicator,
    grid: &[f64],
    vals: &[Option<f64>],
    eps_list: &[f64],
) -> Result<Vec<CriterionCell>, ClassifyError> {
    if let Some(i) = vals.iter().position(Option::is_none) {
        return Ok(eps_list
            .iter()
            .map(|&eps| CriterionCell {
                side,
                l,
                eps,
                holds: false,
                log_c: None,
                grading: None,
                tail_rise: f64::INFINITY,
                failure_point: Some(grid[i]),
                via_bound: false,
            })
            .collect());
    }
    let probe: Vec<f64> = vals.iter().map(|v| v.unwrap()).collect();
    let rep = dominates_values(target, grid, &probe, eps_list)?;
    Ok(rep
        .per_eps
        .into_iter()
        .map(|e| CriterionCell {
            side,
            l,
            eps: e.eps,
            holds: e.holds,
            log_c: e.log_c,
            grading: e.grading,
            tail_rise: e.tail_rise,
            failure_point: e.failure_point,
            via_bound: false,
        })
        .collect())
}

/// Checks precomputed left-hand sides against the indicators of `space`.
pub fn check_lhs(lhs: &CriterionLhs, space: &SpaceDescriptor, eps_list: &[f64]) -> Result<CriterionReport, ClassifyError> {
    let (a, b) = space.indicators()?;
    let eps: Vec<f64> = match lhs.criterion {
        CriterionId::Simplified => vec![1.0],
        _ => eps_list.to_vec(),
    };
    // Without a coordinate-side indicator the IR side must stay bounded.
    let a = a.unwrap_or_else(|| LogIndicator::polynomial(0));
    let mut cells = Vec::new();
    let mut shapes = Vec::new();
    for (l, vals) in &lhs.ir {
        cells.extend(check_side(Side::IR, *l, &a, &lhs.r_grid, vals, &eps)?);
        shapes.extend(shape_fit(Side::IR, *l, &lhs.r_grid, vals));
    }
    for (i, (l, vals)) in lhs.uv.iter().enumerate() {
        let mut side = check_side(Side::UV, *l, &b, &lhs.s_grid, vals, &eps)?;
        if let Some((_, bound)) = lhs.uv_bound.get(i) {
            let alt = check_side(Side::UV, *l, &b, &lhs.s_grid, bound, &eps)?;
            for (cell, alt) in side.iter_mut().zip(alt) {
                if !cell.holds && alt.holds {
                    *cell = CriterionCell { via_bound: true, ..alt };
                }
            }
        }
        cells.extend(side);
        shapes.extend(shape_fit(Side::UV, *l, &lhs.s_grid, vals));
    }
    let range = |g: &[f64]| (g.first().copied().unwrap_or(0.0), g.last().copied().unwrap_or(0.0));
    let mut notes = vec![];
    if lhs.criterion == CriterionId::Simplified {
        notes.push("ε fixed to 1".into());
    }
    Ok(CriterionReport {
        criterion: lhs.criterion,
        space: space.to_string(),
        pass: cells.iter().all(|c| c.holds),
        cells,
        r_range: range(&lhs.r_grid),
        s_range: range(&lhs.s_grid),
        shapes,
        notes,
    })
}

/// Computes the criterion's left-hand sides and checks them against `space`.
pub fn verify_criterion(
    model: &FieldModel,
    d: &CoefficientFamily,
    space: &SpaceDescriptor,
    criterion: CriterionId,
    opts: &CriterionOptions,
) -> Result<CriterionReport, ClassifyError> {
    let lhs = criterion_lhs(model, d, criterion, opts)?;
    check_lhs(&lhs, space, &opts.eps_list)
}

fn require_product_bound(d: &CoefficientFamily) -> Result<ProductBound, ClassifyError> {
    let prod = check_product_bound(d, PRODUCT_BOUND_K);
    match prod {
        ProductBound::Holds { .. } => Ok(prod),
        ProductBound::Violation { k, l } => Err(ClassifyError::Precondition {
            condition: "product bound",
            detail: format!("d_{k} d_{l} > 0 = d_{}", k + l),
        }),
        ProductBound::Unbounded => Err(ClassifyError::Precondition {
            condition: "product bound",
            detail: "no h ≤ 16 gives a stable constant".into(),
        }),
    }
}

/// Chooses a test-function space for the Wick series with coefficients `d`
/// of the field `model`.
pub fn classify(model: &FieldModel, d: &CoefficientFamily) -> Result<Classification, ClassifyError> {
    classify_with(model, d, &CriterionOptions::for_model(model))
}

pub fn classify_with(
    model: &FieldModel,
    d: &CoefficientFamily,
    opts: &CriterionOptions,
) -> Result<Classification, ClassifyError> {
    match model {
        FieldModel::Massless2D { .. } => classify_massless(model, d, opts),
        FieldModel::Massive { .. } => classify_massive(model, d, opts),
    }
}

fn massless_catalog(growth: &CoefficientGrowth) -> Result<Vec<SpaceDescriptor>, ClassifyError> {
    let mut out = vec![SpaceDescriptor::SchwartzS, SpaceDescriptor::GradedP2];
    let alpha = round_sig4(2.0 * growth.mu);
    let beta = round_sig4(growth.mu);
    if alpha > 2.0 || beta > 2.0 {
        out.push(SpaceDescriptor::graded_p(alpha.max(2.0), beta.max(2.0))?);
    }
    Ok(out)
}

fn classify_massless(model: &FieldModel, d: &CoefficientFamily, opts: &CriterionOptions) -> Result<Classification, ClassifyError> {
    let loc = check_localization(d, LOCALIZATION_K);
    if !loc.pass {
        return Err(ClassifyError::Precondition {
            condition: "localization",
            detail: format!("a_k ends at {:.4}, decreasing: {}", loc.limit_estimate, loc.decreasing),
        });
    }
    let prod = require_product_bound(d)?;
    let growth = coefficient_growth(d)?;
    let lhs = criterion_lhs(model, d, CriterionId::Coupled, opts)?;
    let all_divergent = lhs.ir.iter().chain(&lhs.uv).all(|(_, v)| v.iter().any(Option::is_none));
    if all_divergent {
        return Err(ClassifyError::NoRealization("the majorant series diverges at every L".into()));
    }
    let mut tried = Vec::new();
    let mut evidence = Vec::new();
    for space in massless_catalog(&growth)? {
        let report = check_lhs(&lhs, &space, &opts.eps_list)?;
        let pass = report.pass;
        tried.push(space.to_string());
        evidence.push(report);
        if pass {
            let mut c = Classification::bare(space, "sufficient space, coordinate and momentum bounds checked");
            c.localization = Some(loc);
            c.product_bound = Some(prod);
            c.coefficient_growth = Some(growth);
            c.evidence = evidence;
            if c.space == SpaceDescriptor::GradedP2 && growth.mu < 1.0 {
                c.notes.push("S_a with a = e^{(ln(1+r))²} also admissible in this band".into());
            }
            return Ok(c);
        }
    }
    Err(ClassifyError::NoPassingSpace(tried))
}

/// ln F(s) / (s ln(1+s)) stays bounded over the tail of the grid; then
/// ln F(s) − ε s (ln(1+s))^γ is bounded above for every ε > 0 and γ > 1.
#[derive(Debug, Clone, Serialize)]
pub struct BoundedRatio {
    pub max_ratio: f64,
    pub relative_rise: f64,
    pub holds: bool,
}

fn bounded_ratio(grid: &[f64], vals: &[Option<f64>]) -> BoundedRatio {
    let mut ratios = Vec::new();
    for (&s, v) in grid.iter().zip(vals) {
        match v {
            Some(v) => ratios.push(v / (s * s.ln_1p())),
            None => return BoundedRatio { max_ratio: f64::INFINITY, relative_rise: f64::INFINITY, holds: false },
        }
    }
    let max_ratio = ratios.iter().copied().fold(0.0f64, f64::max);
    let rise = tail_rise(grid, &ratios);
    let relative_rise = if max_ratio > 0.0 { rise / max_ratio } else { 0.0 };
    BoundedRatio { max_ratio, relative_rise, holds: max_ratio.is_finite() && relative_rise <= GRADED_RISE_TOL }
}

fn classify_massive(model: &FieldModel, d: &CoefficientFamily, opts: &CriterionOptions) -> Result<Classification, ClassifyError> {
    let FieldModel::Massive { dim, .. } = model else { unreachable!() };
    let prod = require_product_bound(d)?;
    let lhs = criterion_lhs(model, d, CriterionId::Truncated, opts)?;
    let ratio = bounded_ratio(&lhs.s_grid, &lhs.uv[0].1);
    if !ratio.holds {
        return Err(ClassifyError::NoPassingSpace(vec![format!("Sb:logboost:2 (ratio rise {:.3})", ratio.relative_rise)]));
    }
    let mut c = dimensional_space(*dim, f64::NAN, true)?;
    c.product_bound = Some(prod);
    c.localization = Some(check_localization(d, LOCALIZATION_K));
    c.notes.push(format!(
        "truncated sum: ln F(s)/(s ln(1+s)) ≤ {:.4} with relative tail rise {:.4}",
        ratio.max_ratio, ratio.relative_rise
    ));
    let m_prime = model.reduced_mass().unwrap();
    let ex: Vec<f64> = opts.s_grid.iter().map(|&s| exchanged_inf_series(s, 1.0, d, *dim, m_prime).log_value().unwrap_or(f64::NAN)).collect();
    c.uv_growth = fit_growth_order_values(&opts.s_grid, &ex).ok();
    Ok(c)
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalExpReport {
    pub ir_indicator: String,
    pub uv_indicator: String,
    pub space: SpaceDescriptor,
    /// max |ln inf − L ln(es/L)| over s > L, where that closed form applies.
    pub uv_closed_form_error: Option<f64>,
    pub cells: Vec<CriterionCell>,
}

fn ir_catalog() -> Vec<LogIndicator> {
    vec![
        LogIndicator::polynomial(0),
        LogIndicator::polynomial(1).with_grading(1),
        LogIndicator::log_power(2.0).with_grading(1),
    ]
}

fn uv_catalog() -> Vec<LogIndicator> {
    vec![
        LogIndicator::polynomial(1).with_grading(1),
        LogIndicator::log_power(2.0).with_grading(1),
        LogIndicator::log_boost(2.0),
        LogIndicator::gevrey(0.9),
        LogIndicator::gevrey(0.5),
    ]
}

/// The specialization of the simplified criterion to :exp igφ:, where the
/// series sum to exp{L w}: exp{L w_IR(r)} ≤ C a(r), inf_t exp{st + L w_UV(t)} ≤ C b(s).
pub fn normal_exponential_conditions(model: &FieldModel, opts: &CriterionOptions) -> Result<NormalExpReport, ClassifyError> {
    let env = envelope_of(model)?;
    let window = uv_window(&env);
    let mut ir_cols = Vec::new();
    let mut uv_cols = Vec::new();
    let mut closed_err: Option<f64> = None;
    for &l in &opts.l_list {
        ir_cols.push(opts.r_grid.iter().map(|&r| l * env.w_ir(r)).collect::<Vec<f64>>());
        let uv: Vec<f64> = opts
            .s_grid
            .iter()
            .map(|&s| {
                let v = envelope_inf_by(s, window, &|t| Some(l * env.w_uv(t)));
                match v {
                    EnvelopeInf::Finite { log_inf, .. } => log_inf,
                    EnvelopeInf::Divergent => f64::INFINITY,
                }
            })
            .collect();
        if env.kind == EnvelopeKind::LogSquared {
            for (&s, &v) in opts.s_grid.iter().zip(&uv) {
                if s > l {
                    let exact = l * (std::f64::consts::E * s / l).ln();
                    let e = (v - exact).abs();
                    closed_err = Some(closed_err.map_or(e, |m: f64| m.max(e)));
                }
            }
        }
        uv_cols.push(uv);
    }
    let first_passing = |cat: Vec<LogIndicator>, grid: &[f64], cols: &[Vec<f64>]| -> Result<(LogIndicator, Vec<CriterionCell>), ClassifyError> {
        for ind in &cat {
            let mut cells = Vec::new();
            for (col, &l) in cols.iter().zip(&opts.l_list) {
                let rep = dominates_values(ind, grid, col, &[1.0])?;
                cells.extend(rep.per_eps.into_iter().map(|e| CriterionCell {
                    side: Side::IR,
                    l: Some(l),
                    eps: e.eps,
                    holds: e.holds,
                    log_c: e.log_c,
                    grading: e.grading,
                    tail_rise: e.tail_rise,
                    failure_point: e.failure_point,
                    via_bound: false,
                }));
            }
            if cells.iter().all(|c| c.holds) {
                return Ok((ind.clone(), cells));
            }
        }
        Err(ClassifyError::NoPassingSpace(cat.iter().map(indicator_key).collect()))
    };
    let (a, ir_cells) = first_passing(ir_catalog(), &opts.r_grid, &ir_cols)?;
    let (b, mut uv_cells) = first_passing(uv_catalog(), &opts.s_grid, &uv_cols)?;
    for c in &mut uv_cells {
        c.side = Side::UV;
    }
    let level = |ind: &LogIndicator| match ind.family {
        IndicatorFamily::Polynomial(0) => 0,
        IndicatorFamily::Polynomial(_) => 1,
        IndicatorFamily::LogPowerExp(_) => 2,
        _ => 3,
    };
    let space = match (level(&a), level(&b)) {
        (0..=1, 1) => SpaceDescriptor::SchwartzS,
        (0..=2, 1..=2) => SpaceDescriptor::GradedP2,
        (0, _) => SpaceDescriptor::FourierOnly(b.clone()),
        _ => SpaceDescriptor::GelfandShilov { a: a.clone(), b: b.clone() },
    };
    let mut cells = ir_cells;
    cells.extend(uv_cells);
    Ok(NormalExpReport { ir_indicator: indicator_key(&a), uv_indicator: indicator_key(&b), space, uv_closed_form_error: closed_err, cells })
}
