//! Free-field two-point functions on the tube, their positive majorants,
//! monotone envelopes, and grid verification of the majorant bounds.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{golden_section, integrate_adaptive, ln_gamma, GaussLegendre};
use crate::series::CoefficientFamily;
use crate::wick::{kappa, ContractionMultiIndex};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Steepness A of the Fourier-side bump exp(A − A/(1−q²)).
pub const SMOOTHING_STEEPNESS: f64 = 4.0;
/// Fourier-side radius of the smoothing bump.
pub const SMOOTHING_RADIUS: f64 = 1.0;
/// Relative size below which the smoothing function is truncated.
const SMOOTHING_CUT: f64 = 1e-13;
pub const DEFAULT_EPS_SPLIT: f64 = 0.5;
const MASSIVE_REL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature did not reach {target:e} relative accuracy (last change {achieved:e})")]
    Accuracy { target: f64, achieved: f64 },
    #[error("invalid model: {0}")]
    Model(String),
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Band-limited even smoothing function on the line, G with Ĝ(q) = exp(A − A/(1−q²))
/// on |q| < 1, dilated by `scale`. The 2D smoothing is h(x) = 2 G(x₀−x₁) G(x₀+x₁).
#[derive(Debug, Clone)]
pub struct Smoothing {
    pub steepness: f64,
    /// ∫∫ G(u) G(u′) ln|u − u′| at unit scale.
    pub log_moment: f64,
    pub scale: f64,
    /// |G(s)| < 1e-13·G(0) for |s| beyond this (unit scale).
    pub reach: f64,
    /// (q, w·Ĝ(q)/π) on [0, 1].
    q_rule: Vec<(f64, f64)>,
    /// σ nodes and weights covering [−reach·scale, reach·scale].
    sigma: Vec<(f64, f64)>,
    /// G_scale(σ + i·scale) at the σ nodes.
    shifted: Vec<Complex64>,
}

fn bump(a: f64, q: f64) -> f64 {
    if q.abs() >= 1.0 {
        0.0
    } else {
        (a - a / (1.0 - q * q)).exp()
    }
}

impl Smoothing {
    /// Smoothing dilated so that ⟨h, h⟩ = 0 for the scale parameter κ.
    pub fn for_kappa(kappa: f64) -> Self {
        let a = SMOOTHING_STEEPNESS;
        let gl = GaussLegendre::new(512);
        let q_rule: Vec<(f64, f64)> = gl.on(0.0, SMOOTHING_RADIUS).map(|(q, w)| (q, w * bump(a, q) / PI)).collect();
        let log_moment = Self::log_moment_fourier(a);
        let scale = (-log_moment).exp() / kappa;
        let mut s = Smoothing { steepness: a, log_moment, scale, reach: 0.0, q_rule, sigma: vec![], shifted: vec![] };
        let g0 = s.g_unit(c(0.0, 0.0)).re;
        let mut reach = 0.0;
        let mut x = 0.0;
        while x <= 300.0 {
            if s.g_unit(c(x, 0.0)).norm() >= SMOOTHING_CUT * g0 {
                reach = x;
            }
            x += 0.25;
        }
        s.reach = reach + 1.0;
        let half = s.reach * scale;
        let panels = (4.0 * s.reach).ceil() as usize;
        let gl8 = GaussLegendre::new(8);
        let h = 2.0 * half / panels as f64;
        for p in 0..panels {
            let lo = -half + p as f64 * h;
            s.sigma.extend(gl8.on(lo, lo + h));
        }
        s.shifted = s.sigma.iter().map(|&(x, _)| s.g(c(x, scale))).collect();
        s
    }

    /// ∫ K ln|r| dr with K̂ = Ĝ², from the Fourier pairing of ln|r|:
    /// −γ − ∫₀¹ (K̂(q) − 1)/q dq.
    pub fn log_moment_fourier(a: f64) -> f64 {
        let gl = GaussLegendre::new(200);
        let integral = gl.integrate(0.0, 1.0, |q| {
            if q >= 1.0 {
                -1.0 / q
            } else {
                (2.0 * a * (1.0 - 1.0 / (1.0 - q * q))).exp_m1() / q
            }
        });
        -EULER_GAMMA - integral
    }

    /// G at unit scale, complex argument.
    pub fn g_unit(&self, s: Complex64) -> Complex64 {
        self.q_rule.iter().map(|&(q, w)| (s * q).cos() * w).sum()
    }

    /// G dilated to the model scale: G(s/λ)/λ.
    pub fn g(&self, s: Complex64) -> Complex64 {
        self.g_unit(s / self.scale) / self.scale
    }

    /// ∫ G(σ) Log(i(a − σ)) dσ continued to all a via the contour σ → σ + ic.
    pub fn log_convolution(&self, a: Complex64) -> Complex64 {
        if a.im <= 0.0 {
            let shift = c(0.0, self.scale);
            self.sigma
                .iter()
                .zip(&self.shifted)
                .map(|(&(x, w), g)| g * (Complex64::i() * (a - x - shift)).ln() * w)
                .sum()
        } else {
            // Above the real axis the contour is lowered further; G grows like e^{c/λ}.
            let shift = c(0.0, a.im + self.scale);
            self.sigma
                .iter()
                .map(|&(x, w)| self.g(x + shift) * (Complex64::i() * (a - x - shift)).ln() * w)
                .sum()
        }
    }

    pub fn sigma_nodes(&self) -> &[(f64, f64)] {
        &self.sigma
    }
}

#[derive(Debug, Clone)]
pub enum FieldModel {
    /// Free field of mass m in `dim` spacetime dimensions; m′ = m√(1−ε²).
    Massive { m: f64, dim: u32, eps: f64 },
    /// Massless field in two dimensions, w(z) = −(1/4π) ln(−κ²z²).
    Massless2D { kappa: f64, smoothing: Box<Smoothing> },
}

impl FieldModel {
    pub fn massive(m: f64, dim: u32, eps: f64) -> Result<Self, FieldError> {
        if !(m > 0.0 && m.is_finite()) || dim <= 2 || !(eps > 0.0 && eps < 1.0) {
            return Err(FieldError::Model(format!("need m > 0, dim > 2, 0 < ε < 1 (m={m}, dim={dim}, ε={eps})")));
        }
        Ok(FieldModel::Massive { m, dim, eps })
    }

    pub fn massless_2d(kappa: f64) -> Result<Self, FieldError> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(FieldError::Model(format!("κ must be positive, got {kappa}")));
        }
        Ok(FieldModel::Massless2D { kappa, smoothing: Box::new(Smoothing::for_kappa(kappa)) })
    }

    /// "massive:m=<v>,dim=<n>,eps=<v>" or "massless2d:kappa=<v>".
    pub fn parse_key(key: &str) -> Result<Self, FieldError> {
        let bad = |why: &str| FieldError::Model(format!("'{key}': {why}"));
        let (head, args) = key.split_once(':').unwrap_or((key, ""));
        let mut m = None;
        let mut dim = None;
        let mut eps = None;
        let mut kappa = None;
        for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let num: f64 = v.trim().parse().map_err(|_| bad("bad number"))?;
            match k.trim() {
                "m" => m = Some(num),
                "dim" => dim = Some(num),
                "eps" => eps = Some(num),
                "kappa" => kappa = Some(num),
                _ => return Err(bad("unknown parameter")),
            }
        }
        match head.trim() {
            "massive" => {
                let dim = dim.unwrap_or(4.0);
                if dim.fract() != 0.0 {
                    return Err(bad("dim must be an integer"));
                }
                Self::massive(m.unwrap_or(1.0), dim as u32, eps.unwrap_or(DEFAULT_EPS_SPLIT))
            }
            "massless2d" => Self::massless_2d(kappa.unwrap_or(1.0)),
            _ => Err(bad("unknown model")),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FieldModel::Massive { dim, .. } => *dim as usize,
            FieldModel::Massless2D { .. } => 2,
        }
    }

    /// m′ for the massive model.
    pub fn reduced_mass(&self) -> Option<f64> {
        match self {
            FieldModel::Massive { m, eps, .. } => Some(m * (1.0 - eps * eps).sqrt()),
            FieldModel::Massless2D { .. } => None,
        }
    }
}

impl fmt::Display for FieldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldModel::Massive { m, dim, eps } => write!(f, "massive:m={m},dim={dim},eps={eps}"),
            FieldModel::Massless2D { kappa, .. } => write!(f, "massless2d:kappa={kappa}"),
        }
    }
}

fn check_dim(model: &FieldModel, z: &[Complex64]) -> Result<(), FieldError> {
    if z.len() != model.dim() {
        return Err(FieldError::Domain(format!("expected a {}-vector, got {}", model.dim(), z.len())));
    }
    Ok(())
}

/// Im z in the open backward cone.
fn in_backward_tube(z: &[Complex64]) -> bool {
    let spatial: f64 = z[1..].iter().map(|v| v.im * v.im).sum::<f64>().sqrt();
    z[0].im < -spatial
}

/// Light-cone coordinates (z₀ − z₁, z₀ + z₁).
fn light_cone(z: &[Complex64]) -> (Complex64, Complex64) {
    (z[0] - z[1], z[0] + z[1])
}

/// Two-point function at z with Im z in the backward tube.
pub fn eval_w(model: &FieldModel, z: &[Complex64]) -> Result<Complex64, FieldError> {
    check_dim(model, z)?;
    if !in_backward_tube(z) {
        return Err(FieldError::Domain("Im z is not in the backward cone".into()));
    }
    match model {
        FieldModel::Massless2D { kappa, .. } => {
            let (al, be) = light_cone(z);
            // Each factor stays in the right half-plane, so the sum of logs is
            // the continuation of ln(−z²) through timelike directions.
            let (la, lb) = ((Complex64::i() * al).ln(), (Complex64::i() * be).ln());
            Ok(-(2.0 * kappa.ln() + la + lb) / (4.0 * PI))
        }
        FieldModel::Massive { m, dim, .. } => {
            let z2 = z[0] * z[0] - z[1..].iter().map(|v| v * v).sum::<Complex64>();
            massive_delta(*m, *dim, (-z2).sqrt())
        }
    }
}

/// Δ⁺ as a function of ζ = √(−z²), Re ζ > 0:
/// (2π)^{−n} |S^{n−1}| ∫₀^∞ p^{n−1} e^{−ωζ}/(2ω) dp with n = dim − 1.
pub fn massive_delta(m: f64, dim: u32, zeta: Complex64) -> Result<Complex64, FieldError> {
    if zeta.re <= 0.0 {
        return Err(FieldError::Domain(format!("ζ = {zeta} has no positive real part")));
    }
    let n = (dim - 1) as f64;
    let sphere = 2.0 * PI.powf(n / 2.0) / ln_gamma(n / 2.0).exp();
    let pref = sphere / (2.0 * PI).powf(n);
    // p^{n−1} dp/(2ω) = ½ (ω² − m²)^{(n−2)/2} dω, on the ray ω = m + u/ζ where
    // ωζ − mζ = u is real; both factors keep Re > 0 so principal powers apply.
    let power = (n - 2.0) / 2.0;
    let integrand = |u: f64| {
        let v = u / zeta;
        let weight = if power == 0.0 { c(1.0, 0.0) } else { v.powf(power) * (2.0 * m + v).powf(power) };
        (-u).exp() * 0.5 * weight / zeta
    };
    let top = 60.0 + 5.0 * n;
    let v = integrate_adaptive(integrand, 0.0, top, MASSIVE_REL_TOL, 0.0)
        .ok_or(FieldError::Accuracy { target: MASSIVE_REL_TOL, achieved: f64::NAN })?;
    Ok(v * (-(zeta * m)).exp() * pref)
}

/// w_h = w ∗ h, entire: −(1/4π)[2 ln κ + Lg(z₀−z₁) + Lg(z₀+z₁)].
pub fn eval_wh(model: &FieldModel, z: &[Complex64]) -> Result<Complex64, FieldError> {
    check_dim(model, z)?;
    match model {
        FieldModel::Massless2D { kappa, smoothing } => {
            let (al, be) = light_cone(z);
            Ok(-(2.0 * kappa.ln() + smoothing.log_convolution(al) + smoothing.log_convolution(be)) / (4.0 * PI))
        }
        FieldModel::Massive { .. } => Err(FieldError::Model("smoothed two-point function is defined for massless2d".into())),
    }
}

/// Majorant kernel at (z, z′), Im z ∈ V₋, Im z′ ∈ V₊. Massive: w(z − z′).
/// Massless2D: w(z − z′) + (w_h(z) − 1)(w_h(−z′) − 1).
pub fn eval_w_maj(model: &FieldModel, z: &[Complex64], zp: &[Complex64]) -> Result<Complex64, FieldError> {
    check_dim(model, z)?;
    check_dim(model, zp)?;
    let diff: Vec<Complex64> = z.iter().zip(zp).map(|(a, b)| a - b).collect();
    let w = eval_w(model, &diff)?;
    match model {
        FieldModel::Massive { .. } => Ok(w),
        FieldModel::Massless2D { .. } => {
            let neg: Vec<Complex64> = zp.iter().map(|v| -v).collect();
            Ok(w + (eval_wh(model, z)? - 1.0) * (eval_wh(model, &neg)? - 1.0))
        }
    }
}

/// Monotone envelope pair (w_IR, w_UV) with its bound constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnvelopeKind {
    /// w_IR ≡ 0, w_UV(t) = e^{−m′t}/t^{dim−2}
    Massive { m_prime: f64, dim: u32 },
    /// w_IR(r) = (ln(1+r))², w_UV(t) = ln⁺(1/t)
    LogSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MajorantEnvelope {
    pub kind: EnvelopeKind,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl MajorantEnvelope {
    pub fn w_ir(&self, r: f64) -> f64 {
        match self.kind {
            EnvelopeKind::Massive { .. } => 0.0,
            EnvelopeKind::LogSquared => r.ln_1p().powi(2),
        }
    }

    pub fn w_uv(&self, t: f64) -> f64 {
        match self.kind {
            EnvelopeKind::Massive { m_prime, dim } => (-m_prime * t).exp() / t.powi(dim as i32 - 2),
            EnvelopeKind::LogSquared => (1.0 / t).ln().max(0.0),
        }
    }

    /// ln w_UV(t); −∞ where w_UV vanishes.
    pub fn log_w_uv(&self, t: f64) -> f64 {
        match self.kind {
            EnvelopeKind::Massive { m_prime, dim } => -m_prime * t - (dim as f64 - 2.0) * t.ln(),
            EnvelopeKind::LogSquared => self.w_uv(t).ln(),
        }
    }

    pub fn bound(&self, r: f64, t: f64) -> f64 {
        self.c0 + self.c1 * self.w_ir(r) + self.c2 * self.w_uv(t)
    }
}

fn envelope_kind(model: &FieldModel) -> EnvelopeKind {
    match model {
        FieldModel::Massive { dim, .. } => EnvelopeKind::Massive { m_prime: model.reduced_mass().unwrap(), dim: *dim },
        FieldModel::Massless2D { .. } => EnvelopeKind::LogSquared,
    }
}

/// Envelope pair of the model with constants fitted on its default grid.
pub fn envelope_of(model: &FieldModel) -> Result<MajorantEnvelope, FieldError> {
    let report = verify_envelope_bound(model, &default_bound_grid(model), None)?;
    Ok(report.envelope)
}

/// A pair of tube points (z with Im z ∈ V₋, z′ with Im z′ ∈ V₊).
pub type PointPair = (Vec<Complex64>, Vec<Complex64>);

fn real_norm(z: &[Complex64]) -> f64 {
    z.iter().map(|v| v.re * v.re).sum::<f64>().sqrt()
}

fn imag_norm(z: &[Complex64]) -> f64 {
    z.iter().map(|v| v.im * v.im).sum::<f64>().sqrt()
}

/// Grid of (x − it e₀, x′ + it e₀) pairs: r ∈ [0, 10³], t ∈ [10⁻³, 1] for the
/// massless model, r ∈ [0, 10], t ∈ [0.025, 5] for the massive one.
pub fn default_bound_grid(model: &FieldModel) -> Vec<PointPair> {
    let dim = model.dim();
    let (radii, ts): (Vec<f64>, Vec<f64>) = match model {
        FieldModel::Massless2D { .. } => {
            let mut r = vec![0.0];
            r.extend(crate::numeric::geomspace(0.1, 1e3, 9));
            (r, crate::numeric::geomspace(1e-3, 1.0, 7))
        }
        FieldModel::Massive { .. } => (vec![0.0, 0.5, 2.0, 10.0], crate::numeric::geomspace(0.025, 5.0, 8)),
    };
    let dirs: [(f64, f64); 4] = [(1.0, 0.0), (0.0, 1.0), (0.6, -0.8), (-0.6, 0.8)];
    let mut out = Vec::new();
    for &r in &radii {
        for &t in &ts {
            for (i, &(a, b)) in dirs.iter().enumerate() {
                if r == 0.0 && i > 0 {
                    break;
                }
                let mut z = vec![c(0.0, 0.0); dim];
                let mut zp = vec![c(0.0, 0.0); dim];
                z[0] = c(r * a, -t);
                z[1] = c(r * b, 0.0);
                zp[0] = c(-r * b * 0.5, t);
                zp[1] = c(r * a * 0.5, 0.0);
                out.push((z, zp));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub r: f64,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub envelope: MajorantEnvelope,
    /// max (lhs − rhs)/rhs over the grid; ≤ 0 means the bound holds.
    pub max_violation: f64,
    pub holds: bool,
    pub rows: Vec<BoundRow>,
}

/// Minimal (C0, C1, C2) ≥ 0 with v_i ≤ C0 + C1 a_i + C2 b_i, minimizing
/// C0 + C1·mean(a) + C2·mean(b) by nested golden section on the convex cost.
fn fit_three_term(v: &[f64], a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let c0_of = |c1: f64, c2: f64| {
        v.iter().zip(a).zip(b).map(|((v, a), b)| v - c1 * a - c2 * b).fold(0.0f64, f64::max)
    };
    let cap = |x: &[f64]| v.iter().zip(x).filter(|(_, x)| **x > 0.0).map(|(v, x)| v / x).fold(0.0f64, f64::max);
    let (c1_max, c2_max) = (cap(a), cap(b));
    let inner = |c1: f64| -> (f64, f64) {
        if c2_max == 0.0 {
            return (0.0, c0_of(c1, 0.0) + c1 * ma);
        }
        let (c2, cost) = golden_section(|c2| c0_of(c1, c2) + c1 * ma + c2 * mb, 0.0, c2_max, 1e-12);
        let at_zero = c0_of(c1, 0.0) + c1 * ma;
        if at_zero <= cost {
            (0.0, at_zero)
        } else {
            (c2, cost)
        }
    };
    let c1 = if c1_max == 0.0 {
        0.0
    } else {
        let (c1, cost) = golden_section(|c1| inner(c1).1, 0.0, c1_max, 1e-12);
        if inner(0.0).1 <= cost {
            0.0
        } else {
            c1
        }
    };
    let c2 = inner(c1).0;
    (c0_of(c1, c2), c1, c2)
}

/// Checks |w_maj(z, z′)| ≤ C0 + C1 w_IR(|x|+|x′|) + C2 w_UV(|y|+|y′|) on the grid.
/// With `frozen` constants they are checked; otherwise minimal ones are fitted.
pub fn verify_envelope_bound(
    model: &FieldModel,
    grid: &[PointPair],
    frozen: Option<(f64, f64, f64)>,
) -> Result<BoundReport, FieldError> {
    let kind = envelope_kind(model);
    let probe = MajorantEnvelope { kind, c0: 0.0, c1: 0.0, c2: 0.0 };
    let values: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .map(|(z, zp)| {
            let v = eval_w_maj(model, z, zp)?.norm();
            Ok((real_norm(z) + real_norm(zp), imag_norm(z) + imag_norm(zp), v))
        })
        .collect::<Result<_, FieldError>>()?;
    let (c0, c1, c2) = frozen.unwrap_or_else(|| {
        let v: Vec<f64> = values.iter().map(|p| p.2).collect();
        let a: Vec<f64> = values.iter().map(|p| probe.w_ir(p.0)).collect();
        let b: Vec<f64> = values.iter().map(|p| probe.w_uv(p.1)).collect();
        fit_three_term(&v, &a, &b)
    });
    let envelope = MajorantEnvelope { kind, c0, c1, c2 };
    let rows: Vec<BoundRow> = values
        .iter()
        .map(|&(r, t, lhs)| {
            let rhs = envelope.bound(r, t);
            BoundRow { r, t, lhs, rhs, ratio: if rhs > 0.0 { lhs / rhs } else { f64::INFINITY } }
        })
        .collect();
    let max_violation = rows
        .iter()
        .map(|row| if row.rhs > 0.0 { (row.lhs - row.rhs) / row.rhs } else if row.lhs > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(f64::NEG_INFINITY, f64::max);
    let finite = c0.is_finite() && c1.is_finite() && c2.is_finite();
    Ok(BoundReport { envelope, max_violation, holds: finite && max_violation <= 1e-9, rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct SchwarzRow {
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub y: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchwarzReport {
    pub worst_ratio: f64,
    pub holds: bool,
    pub rows: Vec<SchwarzRow>,
}

/// Checks |w(x − x′ − 2iy)|² ≤ |w_maj(x−iy, x+iy)|·|w_maj(x′−iy, x′+iy)|.
pub fn verify_cauchy_schwarz(
    model: &FieldModel,
    grid: &[(Vec<f64>, Vec<f64>, Vec<f64>)],
) -> Result<SchwarzReport, FieldError> {
    let rows: Vec<SchwarzRow> = grid
        .par_iter()
        .map(|(x, xp, y)| {
            let shifted = |p: &[f64], sign: f64| -> Vec<Complex64> { p.iter().zip(y).map(|(a, b)| c(*a, sign * b)).collect() };
            let diff: Vec<Complex64> = x.iter().zip(xp).zip(y).map(|((a, b), y)| c(a - b, -2.0 * y)).collect();
            let lhs = eval_w(model, &diff)?.norm_sqr();
            let dx = eval_w_maj(model, &shifted(x, -1.0), &shifted(x, 1.0))?.norm();
            let dxp = eval_w_maj(model, &shifted(xp, -1.0), &shifted(xp, 1.0))?.norm();
            let rhs = dx * dxp;
            Ok(SchwarzRow { x: x.clone(), x_prime: xp.clone(), y: y.clone(), lhs, rhs, ratio: lhs / rhs })
        })
        .collect::<Result<_, FieldError>>()?;
    let worst_ratio = rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max);
    Ok(SchwarzReport { worst_ratio, holds: worst_ratio <= 1.0 + 1e-9, rows })
}

/// Grid of (x, x′, y = t e₀) with |x|, |x′| ≤ `extent`, t on a geometric range.
pub fn default_schwarz_grid(dim: usize, extent: f64, t_range: (f64, f64)) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let coords = [-extent, -extent / 10.0, -1.0, 0.0, 0.5, extent / 3.0, extent];
    let ts = crate::numeric::geomspace(t_range.0, t_range.1, 4);
    let mut out = Vec::new();
    for &a in &coords {
        for &b in &coords {
            for &t in &ts {
                let mut x = vec![0.0; dim];
                let mut xp = vec![0.0; dim];
                x[0] = a;
                x[1] = b / 2.0;
                xp[0] = b;
                xp[1] = -a / 3.0;
                let mut y = vec![0.0; dim];
                y[0] = t;
                out.push((x, xp, y));
            }
        }
    }
    out
}

/// Constant C with 4π|w(z)| ≤ C + 2 ln(1+|z|) + 2 ln⁺(1/t) for the massless
/// field, t = −Im z₀ − |Im z₁|.
pub fn massless_log_bound_constant(kappa: f64) -> f64 {
    2.0 * kappa.ln().abs() + PI + 2f64.ln()
}

#[derive(Debug, Clone, Serialize)]
pub struct LogBoundReport {
    pub constant: f64,
    pub worst_ratio: f64,
    pub holds: bool,
    pub rows: Vec<BoundRow>,
}

/// Checks the logarithmic bound on w over the given tube points.
pub fn verify_massless_log_bound(model: &FieldModel, c: f64, points: &[Vec<Complex64>]) -> Result<LogBoundReport, FieldError> {
    if !matches!(model, FieldModel::Massless2D { .. }) {
        return Err(FieldError::Model("the logarithmic bound is stated for massless2d".into()));
    }
    let rows: Vec<BoundRow> = points
        .iter()
        .map(|z| {
            let lhs = eval_w(model, z)?.norm();
            let t = -z[0].im - z[1].im.abs();
            let size = z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let rhs = (c + 2.0 * size.ln_1p() + 2.0 * (1.0 / t).ln().max(0.0)) / (4.0 * PI);
            Ok(BoundRow { r: size, t, lhs, rhs, ratio: lhs / rhs })
        })
        .collect::<Result<_, FieldError>>()?;
    let worst_ratio = rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max);
    Ok(LogBoundReport { constant: c, worst_ratio, holds: worst_ratio <= 1.0, rows })
}

/// Tube points x − iy with |x| up to 10⁶ in several directions, y₀ from 10⁻⁶
/// to 10 and |y₁| < y₀.
pub fn default_log_bound_grid() -> Vec<Vec<Complex64>> {
    let mut out = Vec::new();
    let mut radii = vec![0.0];
    radii.extend(crate::numeric::geomspace(1e-3, 1e6, 10));
    for &r in &radii {
        for &y0 in &crate::numeric::geomspace(1e-6, 10.0, 8) {
            for &(a, b) in &[(1.0, 0.0), (0.0, 1.0), (0.6, 0.8), (0.7071, -0.7071)] {
                for &tilt in &[0.0, 0.5, -0.9] {
                    out.push(vec![c(r * a, -y0), c(r * b, -tilt * y0)]);
                }
            }
        }
    }
    out
}

/// Gaussian packet (ν/√π)^dim exp(−ν² Σ (z_μ − c_μ)²), unit integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticTestFunction {
    pub nu: f64,
    pub center: Vec<Complex64>,
}

impl AnalyticTestFunction {
    pub fn centered(nu: f64, dim: usize) -> Self {
        AnalyticTestFunction { nu, center: vec![c(0.0, 0.0); dim] }
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let dim = self.center.len();
        let sq: Complex64 = z.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        (-(sq * self.nu * self.nu)).exp() * (self.nu / PI.sqrt()).powi(dim as i32)
    }
}

/// Node-doubling schedule for tensor Gauss–Legendre rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub n_start: usize,
    pub n_max: usize,
    pub rel_tol: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { n_start: 32, n_max: 256, rel_tol: 1e-4 }
    }
}

/// Gauss–Legendre nodes on [lo, hi], split at `cut` when it lies inside.
fn split_rule(gl: &GaussLegendre, lo: f64, hi: f64, cut: f64) -> Vec<(f64, f64)> {
    if cut > lo && cut < hi {
        gl.on(lo, cut).chain(gl.on(cut, hi)).collect()
    } else {
        gl.on(lo, hi).collect()
    }
}

fn doubled<F: FnMut(usize) -> Result<Complex64, FieldError>>(quad: &QuadSpec, mut at: F) -> Result<Complex64, FieldError> {
    let mut n = quad.n_start;
    let mut prev = at(n)?;
    let mut change = f64::INFINITY;
    while n * 2 <= quad.n_max {
        n *= 2;
        let cur = at(n)?;
        change = (cur - prev).norm() / cur.norm().max(1e-300);
        if change <= quad.rel_tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(FieldError::Accuracy { target: quad.rel_tol, achieved: change })
}

/// ∫∫ W^K(x₁ − iy, x₂ + iy) f₁(x₁ − iy) f₂(x₂ + iy) dx₁ dx₂ for two points in
/// dim 2, with W^K = w(z₁ − z₂)^{k₁₂}. The integral over x₂ at fixed
/// x₁ − x₂ is a Gaussian done in closed form; the remaining 2D integral runs in
/// light-cone coordinates with node doubling.
pub fn boundary_value_pairing(
    model: &FieldModel,
    k: &ContractionMultiIndex,
    f: &[AnalyticTestFunction; 2],
    y: [f64; 2],
    quad: &QuadSpec,
) -> Result<Complex64, FieldError> {
    let FieldModel::Massless2D { kappa, .. } = model else {
        return Err(FieldError::Model("the pairing is implemented for massless2d".into()));
    };
    if k.n_points() != 2 {
        return Err(FieldError::Domain("the pairing takes two points".into()));
    }
    if !(y[0] > y[1].abs()) {
        return Err(FieldError::Domain("y must lie in the forward cone".into()));
    }
    if f.iter().any(|g| g.center.len() != 2) {
        return Err(FieldError::Domain("test functions must be two-dimensional".into()));
    }
    let power = kappa_power(k);
    let (a, b) = (f[0].nu * f[0].nu, f[1].nu * f[1].nu);
    // ∫ f₁(Y + X − iy) f₂(Y + iy) dY = pref · exp(−s (ζ·ζ)), ζ = X − 2iy − (c₁ − c₂).
    let s = a * b / (a + b);
    let pref = a * b / (PI * (a + b));
    let dc: Vec<Complex64> = f[0].center.iter().zip(&f[1].center).map(|(p, q)| p - q).collect();
    // Light-cone components: ζ·ζ = (ζ_u² + ζ_v²)/2.
    let shift_u = c(dc[0].re - dc[1].re, dc[0].im - dc[1].im) + c(0.0, 2.0 * (y[0] - y[1]));
    let shift_v = c(dc[0].re + dc[1].re, dc[0].im + dc[1].im) + c(0.0, 2.0 * (y[0] + y[1]));
    let (tu, tv) = (2.0 * (y[0] - y[1]), 2.0 * (y[0] + y[1]));
    let reach = |sh: Complex64| ((32.3 / (0.5 * s)) + sh.im * sh.im).sqrt() + 1.0;
    let (ru, rv) = (reach(shift_u), reach(shift_v));
    let log_kappa = 2.0 * kappa.ln();
    doubled(quad, |n| {
        let gl = GaussLegendre::new(n);
        let nodes_u = split_rule(&gl, shift_u.re - ru, shift_u.re + ru, 0.0);
        let nodes_v = split_rule(&gl, shift_v.re - rv, shift_v.re + rv, 0.0);
        let lu: Vec<(Complex64, Complex64)> = nodes_u
            .iter()
            .map(|&(u, w)| {
                let zeta = u - shift_u;
                ((Complex64::i() * c(u, -tu)).ln(), (-(zeta * zeta) * (0.5 * s)).exp() * w)
            })
            .collect();
        let lv: Vec<(Complex64, Complex64)> = nodes_v
            .iter()
            .map(|&(v, w)| {
                let zeta = v - shift_v;
                ((Complex64::i() * c(v, -tv)).ln(), (-(zeta * zeta) * (0.5 * s)).exp() * w)
            })
            .collect();
        let total: Complex64 = lu
            .par_iter()
            .map(|&(log_u, gu)| {
                lv.iter()
                    .map(|&(log_v, gv)| {
                        let w = -(log_kappa + log_u + log_v) / (4.0 * PI);
                        w.powu(power) * gu * gv
                    })
                    .sum::<Complex64>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        // dX = du dv / 2.
        Ok(total * pref * 0.5)
    })
}

fn kappa_power(k: &ContractionMultiIndex) -> u32 {
    kappa(k)[0]
}

/// Partial sums S_N = Σ_{k≤N} k! d_k² I_k of the vacuum norm with
/// I_k = ∫∫ w_maj(x − iy, x′ + iy)^k f̄(x − iy) f(x′ + iy) dx dx′.
#[derive(Debug, Clone, Serialize)]
pub struct VacuumNorm {
    pub integrals: Vec<Complex64>,
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// |term_k / term_{k−1}| for k ≥ 1.
    pub ratios: Vec<f64>,
    pub nodes: usize,
}

/// The majorant moments I_0..=I_N by 4D tensor quadrature in light-cone
/// coordinates, y = t e₀, with node doubling.
pub fn majorant_moments(
    model: &FieldModel,
    f: &AnalyticTestFunction,
    t: f64,
    n_max_power: usize,
    quad: &QuadSpec,
) -> Result<(Vec<Complex64>, usize), FieldError> {
    let FieldModel::Massless2D { kappa, smoothing } = model else {
        return Err(FieldError::Model("the vacuum norm is implemented for massless2d".into()));
    };
    if f.center.len() != 2 || f.center.iter().any(|v| v.im != 0.0) {
        return Err(FieldError::Domain("need a real-centered two-dimensional test function".into()));
    }
    if t <= 0.0 {
        return Err(FieldError::Domain("t must be positive".into()));
    }
    let nu2 = f.nu * f.nu;
    let cu = f.center[0].re - f.center[1].re;
    let cv = f.center[0].re + f.center[1].re;
    // |f| along the contour: exp(−ν²(Re² − t²)/2) per light-cone variable.
    let reach = ((2.0 * 32.3 / nu2) + t * t).sqrt() + 0.5;
    let log_kappa = 2.0 * kappa.ln();
    let mut n_used = 0;
    let mut result = Vec::new();
    let mut n = quad.n_start;
    let mut prev: Option<Vec<Complex64>> = None;
    let mut change = f64::INFINITY;
    while n <= quad.n_max {
        let gl = GaussLegendre::new(n);
        let us: Vec<(f64, f64)> = gl.on(cu - reach, cu + reach).collect();
        let vs: Vec<(f64, f64)> = gl.on(cv - reach, cv + reach).collect();
        // One-dimensional factors: f(z) = (ν²/π) e^{−ν²(α²+β²)/2}, dx = du dv / 2.
        let fac = |x: f64, centre: f64, sign: f64| (-(c(x - centre, -sign * t).powu(2)) * (0.5 * nu2)).exp();
        let fa: Vec<Complex64> = us.iter().map(|&(u, w)| fac(u, cu, 1.0) * w).collect();
        let fb: Vec<Complex64> = vs.iter().map(|&(v, w)| fac(v, cv, 1.0) * w).collect();
        let fap: Vec<Complex64> = us.iter().map(|&(u, w)| fac(u, cu, -1.0) * w).collect();
        let fbp: Vec<Complex64> = vs.iter().map(|&(v, w)| fac(v, cv, -1.0) * w).collect();
        // w_h(z) with z = x − it e₀: light-cone arguments u − it, v − it.
        let lg_u: Vec<Complex64> = us.iter().map(|&(u, _)| smoothing.log_convolution(c(u, -t))).collect();
        let lg_v: Vec<Complex64> = vs.iter().map(|&(v, _)| smoothing.log_convolution(c(v, -t))).collect();
        // w_h(−z′) with z′ = x′ + it e₀: arguments −u′ − it, −v′ − it.
        let lg_up: Vec<Complex64> = us.iter().map(|&(u, _)| smoothing.log_convolution(c(-u, -t))).collect();
        let lg_vp: Vec<Complex64> = vs.iter().map(|&(v, _)| smoothing.log_convolution(c(-v, -t))).collect();
        // w(z − z′): light-cone differences u − u′ − 2it.
        let log_du: Vec<Vec<Complex64>> = us
            .iter()
            .map(|&(u, _)| us.iter().map(|&(up, _)| (Complex64::i() * c(u - up, -2.0 * t)).ln()).collect())
            .collect();
        let log_dv: Vec<Vec<Complex64>> = vs
            .iter()
            .map(|&(v, _)| vs.iter().map(|&(vp, _)| (Complex64::i() * c(v - vp, -2.0 * t)).ln()).collect())
            .collect();
        let quarter = 1.0 / (4.0 * PI);
        let moments: Vec<Complex64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![c(0.0, 0.0); n_max_power + 1];
                for j in 0..n {
                    let p = -(log_kappa + lg_u[i] + lg_v[j]) * quarter - 1.0;
                    let wz = fa[i] * fb[j];
                    for k in 0..n {
                        for l in 0..n {
                            let q = -(log_kappa + lg_up[k] + lg_vp[l]) * quarter - 1.0;
                            let w = -(log_kappa + log_du[i][k] + log_dv[j][l]) * quarter;
                            let m = w + p * q;
                            let weight = wz * fap[k] * fbp[l];
                            let mut pw = weight;
                            for slot in acc.iter_mut() {
                                *slot += pw;
                                pw *= m;
                            }
                        }
                    }
                }
                acc
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(vec![c(0.0, 0.0); n_max_power + 1], |mut tot, part| {
                for (a, b) in tot.iter_mut().zip(part) {
                    *a += b;
                }
                tot
            });
        let norm = (nu2 / PI).powi(2) * 0.25;
        let cur: Vec<Complex64> = moments.into_iter().map(|v| v * norm).collect();
        if let Some(p) = &prev {
            change = cur.iter().zip(p).map(|(a, b)| (a - b).norm() / a.norm().max(1e-300)).fold(0.0, f64::max);
            if change <= quad.rel_tol {
                n_used = n;
                result = cur;
                break;
            }
        }
        prev = Some(cur);
        n *= 2;
    }
    if n_used == 0 {
        return Err(FieldError::Accuracy { target: quad.rel_tol, achieved: change });
    }
    Ok((result, n_used))
}

/// Vacuum-norm partial sums with consecutive term ratios.
pub fn vacuum_norm_partial_sum(
    model: &FieldModel,
    d: &CoefficientFamily,
    f: &AnalyticTestFunction,
    n_terms: usize,
    t: f64,
    quad: &QuadSpec,
) -> Result<VacuumNorm, FieldError> {
    let (integrals, nodes) = majorant_moments(model, f, t, n_terms, quad)?;
    Ok(vacuum_norm_from_moments(d, integrals, nodes))
}

pub fn vacuum_norm_from_moments(d: &CoefficientFamily, integrals: Vec<Complex64>, nodes: usize) -> VacuumNorm {
    let terms: Vec<f64> = integrals
        .iter()
        .enumerate()
        .map(|(k, i)| {
            let log_coef = crate::numeric::ln_factorial(k as f64) + 2.0 * d.log_d(k as u64);
            log_coef.exp() * i.re
        })
        .collect();
    let mut partial_sums = Vec::with_capacity(terms.len());
    let mut acc = 0.0;
    for t in &terms {
        acc += t;
        partial_sums.push(acc);
    }
    let ratios = terms.windows(2).map(|w| (w[1] / w[0]).abs()).collect();
    VacuumNorm { integrals, terms, partial_sums, ratios, nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::geomspace;

    fn massless() -> FieldModel {
        FieldModel::massless_2d(1.0).unwrap()
    }

    fn z2(a: f64, b: f64, c0: f64, c1: f64) -> Vec<Complex64> {
        vec![c(a, b), c(c0, c1)]
    }

    #[test]
    fn massless_w_examples() {
        let m = massless();
        assert!(eval_w(&m, &z2(0.0, -1.0, 0.0, 0.0)).unwrap().norm() < 1e-15);
        let v = eval_w(&m, &z2(0.0, -2.0, 0.0, 0.0)).unwrap();
        assert!((v - c(-(4f64).ln() / (4.0 * PI), 0.0)).norm() < 1e-15);
        assert!(eval_w(&m, &z2(0.0, 1.0, 0.0, 0.0)).is_err());
        assert!(eval_w(&m, &z2(0.0, -1.0, 0.0, 2.0)).is_err());
    }

    #[test]
    fn massless_branch_matches_log_of_product() {
        let m = massless();
        // Timelike real part: ln(−z²) continued across the negative axis.
        let z = z2(2.0, -1e-9, 1.0, 0.0);
        let v = eval_w(&m, &z).unwrap();
        assert!((v - c(-3f64.ln(), -PI) / (4.0 * PI)).norm() < 1e-8);
        for &(x0, x1, t) in &[(3.0, 1.0, 0.1), (-2.0, 5.0, 0.01), (0.5, -0.4, 2.0), (100.0, 99.0, 1e-3)] {
            let z = z2(x0, -t, x1, 0.0);
            let sq = z[0] * z[0] - z[1] * z[1];
            let direct = -(-sq).ln() / (4.0 * PI);
            assert!((eval_w(&m, &z).unwrap() - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn log_moment_matches_direct_autocorrelation() {
        // J = 2∫₀^∞ K(r) ln r dr with K(r) = (1/π)∫₀¹ Ĝ(q)² cos(qr) dq, r = L v³.
        let a = SMOOTHING_STEEPNESS;
        let gq = GaussLegendre::new(600);
        let q: Vec<(f64, f64)> = gq.on(0.0, 1.0).map(|(q, w)| (q, w * bump(a, q).powi(2) / PI)).collect();
        let big_l = 200.0;
        let gv = GaussLegendre::new(3000);
        let j: f64 = gv
            .on(0.0, 1.0)
            .map(|(v, w)| {
                let r = big_l * v * v * v;
                let k: f64 = q.iter().map(|&(q, wq)| wq * (q * r).cos()).sum();
                2.0 * k * r.ln() * w * 3.0 * big_l * v * v
            })
            .sum();
        assert!((j - Smoothing::log_moment_fourier(a)).abs() < 1e-8, "{j}");
        // Frozen value for A = 4.
        assert!((Smoothing::log_moment_fourier(4.0) - 0.807_f64).abs() < 5e-3);
    }

    #[test]
    fn smoothing_has_unit_mass_and_null_norm() {
        for &kappa in &[1.0, 0.3, 5.0] {
            let s = Smoothing::for_kappa(kappa);
            let mass: f64 = s.sigma_nodes().iter().map(|&(x, w)| s.g(c(x, 0.0)).re * w).sum();
            assert!((mass - 1.0).abs() < 1e-10);
            let shifted: Complex64 = s.sigma_nodes().iter().zip(&s.shifted).map(|(&(_, w), g)| g * w).sum();
            assert!((shifted - 1.0).norm() < 1e-10);
            // ⟨h,h⟩ = −(1/4π)[2 ln κ + 2∫G Re Lg] = 0.
            let j: f64 = s
                .sigma_nodes()
                .iter()
                .step_by(3)
                .map(|&(x, w)| 3.0 * w * s.g(c(x, 0.0)).re * s.log_convolution(c(x, 0.0)).re)
                .sum();
            assert!((2.0 * kappa.ln() + 2.0 * j).abs() < 1e-3, "κ={kappa}: {}", 2.0 * kappa.ln() + 2.0 * j);
        }
    }

    #[test]
    fn wh_is_real_at_origin_and_reflects() {
        // h is real and even, so w_h(−z) = conj w_h(z̄).
        let m = massless();
        let v = eval_wh(&m, &z2(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(v.im.abs() < 1e-10 * v.norm());
        let a = eval_wh(&m, &z2(1.5, -0.3, 0.7, 0.1)).unwrap().conj();
        let b = eval_wh(&m, &z2(-1.5, -0.3, -0.7, 0.1)).unwrap();
        assert!((a - b).norm() < 1e-9 * a.norm());
    }

    #[test]
    fn wh_matches_direct_convolution() {
        // ∫∫ h(ξ + iδe₀) w(z − ξ − iδe₀) dξ with h = 2G(u)G(v), on a light-cone
        // tensor grid; w from the principal log of the Minkowski square.
        let m = massless();
        let FieldModel::Massless2D { smoothing: s, .. } = &m else { unreachable!() };
        let delta = s.scale;
        let half = s.reach * s.scale;
        let gl = GaussLegendre::new(10);
        let panels = 600;
        let h = 2.0 * half / panels as f64;
        let mut nodes = Vec::new();
        for p in 0..panels {
            let lo = -half + p as f64 * h;
            nodes.extend(gl.on(lo, lo + h));
        }
        let gvals: Vec<Complex64> = nodes.iter().map(|&(x, w)| s.g(c(x, delta)) * w).collect();
        for z in [z2(0.0, 0.0, 10.0, 0.0), z2(3.0, -0.2, -1.0, 0.0)] {
            let (al, be) = light_cone(&z);
            let total: Complex64 = nodes
                .par_iter()
                .zip(&gvals)
                .map(|(&(u, _), gu)| {
                    let mut acc = c(0.0, 0.0);
                    for (&(v, _), gv) in nodes.iter().zip(&gvals) {
                        let a = al - c(u, delta);
                        let b = be - c(v, delta);
                        acc += gv * (-(a * b)).ln();
                    }
                    acc * gu
                })
                .sum();
            let direct = -total / (4.0 * PI);
            let fast = eval_wh(&m, &z).unwrap();
            assert!((fast - direct).norm() < 1e-4 * direct.norm(), "{fast} vs {direct}");
        }
    }

    #[test]
    fn wh_grows_logarithmically_on_the_real_line() {
        let m = massless();
        let xs = geomspace(1.0, 1e4, 9);
        let mut worst = 0.0f64;
        for &x in &xs {
            let v = eval_wh(&m, &z2(x, 0.0, 0.3 * x, 0.0)).unwrap().norm();
            worst = worst.max(v / (1.0 + (1.0 + x).ln()));
        }
        assert!(worst.is_finite() && worst < 1.0);
    }

    #[test]
    fn massive_matches_three_dimensional_closed_form() {
        for &zeta in &[c(0.3, 0.0), c(2.0, 0.0), c(1.0, 0.8), c(0.5, -2.0), c(1e-3, 150.0), c(2e-4, -40.0)] {
            let got = massive_delta(1.3, 3, zeta).unwrap();
            let expect = (-(zeta * 1.3)).exp() / (zeta * 4.0 * PI);
            assert!((got - expect).norm() < 1e-8 * expect.norm(), "{zeta}: {got} vs {expect}");
        }
    }

    #[test]
    fn massive_four_dimensional_matches_bessel_representation() {
        // Δ⁺ = m K₁(mζ)/(4π²ζ), K₁(x) = ∫₀^∞ e^{−x cosh u} cosh u du.
        let gl = GaussLegendre::new(200);
        for &zeta in &[0.2, 1.0, 3.0] {
            let k1 = gl.integrate(0.0, 12.0, |u| (-zeta * u.cosh()).exp() * u.cosh());
            let expect = k1 / (4.0 * PI * PI * zeta);
            let got = massive_delta(1.0, 4, c(zeta, 0.0)).unwrap();
            assert!((got.re - expect).abs() < 1e-8 * expect && got.im.abs() < 1e-12);
        }
    }

    #[test]
    fn massive_decay_is_bounded_by_envelope() {
        for dim in [3u32, 4] {
            let m = FieldModel::massive(1.0, dim, 0.5).unwrap();
            let mp = m.reduced_mass().unwrap();
            let mut worst = 0.0f64;
            for t in geomspace(0.05, 20.0, 30) {
                let mut z = vec![c(0.0, 0.0); dim as usize];
                z[0] = c(0.0, -t);
                let v = eval_w(&m, &z).unwrap().norm();
                worst = worst.max(v * t.powi(dim as i32 - 2) * (mp * t).exp());
            }
            assert!(worst < 1.0, "dim {dim}: {worst}");
        }
    }

    #[test]
    fn envelope_examples() {
        let m = FieldModel::massive(1.0, 4, 0.5).unwrap();
        let e = envelope_of(&m).unwrap();
        assert_eq!(e.w_ir(123.0), 0.0);
        let mp = 0.75f64.sqrt();
        assert!((e.w_uv(2.0) - (-mp * 2.0).exp() / 4.0).abs() < 1e-15);
        assert!(e.w_uv(1e3) < 1e-300);
        let e = envelope_of(&massless()).unwrap();
        assert!((e.w_ir(1.0) - 2f64.ln().powi(2)).abs() < 1e-15);
        assert_eq!(e.w_uv(2.0), 0.0);
        assert!((e.w_uv(0.01) - 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn three_term_fit_single_point() {
        let (c0, c1, c2) = fit_three_term(&[2.5], &[0.0], &[0.0]);
        assert_eq!((c0, c1, c2), (2.5, 0.0, 0.0));
    }

    #[test]
    fn three_term_fit_recovers_exact_constants() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64).collect();
        let v: Vec<f64> = a.iter().zip(&b).map(|(a, b)| 1.0 + 0.5 * a + 2.0 * b).collect();
        let (c0, c1, c2) = fit_three_term(&v, &a, &b);
        assert!((c0 - 1.0).abs() < 1e-6 && (c1 - 0.5).abs() < 1e-6 && (c2 - 2.0).abs() < 1e-6, "{c0} {c1} {c2}");
    }

    #[test]
    fn parse_model_keys() {
        let m = FieldModel::parse_key("massive:m=2,dim=3,eps=0.25").unwrap();
        assert_eq!(m.to_string(), "massive:m=2,dim=3,eps=0.25");
        assert!(FieldModel::parse_key("massive:m=1,dim=2").is_err());
        assert!(FieldModel::parse_key("massless2d:kappa=-1").is_err());
        assert_eq!(FieldModel::parse_key("massless2d:kappa=2").unwrap().to_string(), "massless2d:kappa=2");
    }

    #[test]
    fn log_bound_holds_on_grid() {
        for kappa in [1.0, 0.2, 7.0] {
            let m = FieldModel::massless_2d(kappa).unwrap();
            let rep = verify_massless_log_bound(&m, massless_log_bound_constant(kappa), &default_log_bound_grid()).unwrap();
            assert!(rep.holds, "κ={kappa}: {}", rep.worst_ratio);
            assert!(rep.worst_ratio > 0.3);
        }
    }

    #[test]
    fn test_function_normalized() {
        let f = AnalyticTestFunction::centered(1.7, 2);
        let gl = GaussLegendre::new(60);
        let mut total = 0.0;
        for (x, wx) in gl.on(-6.0, 6.0) {
            for (y, wy) in gl.on(-6.0, 6.0) {
                total += f.eval(&[c(x, 0.0), c(y, 0.0)]).re * wx * wy;
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
        // |f(x + iy)| ≤ (ν/√π)^dim e^{ν²|y|²}
        let v = f.eval(&[c(0.3, 0.4), c(-1.0, -0.2)]).norm();
        assert!(v <= (1.7 / PI.sqrt()).powi(2) * (1.7f64.powi(2) * 0.2).exp());
    }

    #[test]
    fn pairing_zero_index_is_one() {
        let m = massless();
        let k = ContractionMultiIndex::zero(2).unwrap();
        let f = [AnalyticTestFunction::centered(1.0, 2), AnalyticTestFunction::centered(1.3, 2)];
        let v = boundary_value_pairing(&m, &k, &f, [0.3, 0.0], &QuadSpec::default()).unwrap();
        assert!((v - 1.0).norm() < 1e-6);
    }

    #[test]
    fn pairing_is_contour_independent() {
        let m = massless();
        let f = [
            AnalyticTestFunction { nu: 1.0, center: vec![c(0.5, 0.0), c(-0.2, 0.0)] },
            AnalyticTestFunction { nu: 0.8, center: vec![c(-0.3, 0.0), c(0.4, 0.0)] },
        ];
        for kk in 1..=3 {
            let k = ContractionMultiIndex::new(2, vec![kk]).unwrap();
            let a = boundary_value_pairing(&m, &k, &f, [0.2, 0.05], &QuadSpec::default()).unwrap();
            let b = boundary_value_pairing(&m, &k, &f, [0.6, -0.1], &QuadSpec::default()).unwrap();
            assert!((a - b).norm() < 1e-4 * a.norm(), "k={kk}: {a} vs {b}");
        }
    }

    #[test]
    fn pairing_matches_four_dimensional_quadrature() {
        let m = massless();
        let f = [AnalyticTestFunction::centered(1.0, 2), AnalyticTestFunction { nu: 1.0, center: vec![c(0.7, 0.0), c(0.0, 0.0)] }];
        let k = ContractionMultiIndex::new(2, vec![1]).unwrap();
        let t = 0.4;
        let fast = boundary_value_pairing(&m, &k, &f, [t, 0.0], &QuadSpec::default()).unwrap();
        let gl = GaussLegendre::new(40);
        let nodes: Vec<(f64, f64)> = gl.on(-6.0, 0.0).chain(gl.on(0.0, 6.5)).collect();
        let total: Complex64 = nodes
            .par_iter()
            .map(|&(a0, w0)| {
                let mut acc = c(0.0, 0.0);
                for &(a1, w1) in &nodes {
                    let z1 = [c(a0, -t), c(a1, 0.0)];
                    let f1 = f[0].eval(&z1);
                    for &(b0, v0) in &nodes {
                        for &(b1, v1) in &nodes {
                            let z2 = [c(b0, t), c(b1, 0.0)];
                            let w = eval_w(&m, &[z1[0] - z2[0], z1[1] - z2[1]]).unwrap();
                            acc += f1 * f[1].eval(&z2) * w * (w1 * v0 * v1);
                        }
                    }
                }
                acc * w0
            })
            .sum();
        assert!((fast - total).norm() < 1e-3 * total.norm(), "{fast} vs {total}");
    }

    #[test]
    fn vacuum_norm_trivial_and_hermitian() {
        let m = massless();
        let f = AnalyticTestFunction::centered(1.0, 2);
        let quad = QuadSpec { n_start: 24, n_max: 96, rel_tol: 1e-3 };
        let only = CoefficientFamily::tabulated(vec![0.0]).unwrap();
        let r = vacuum_norm_partial_sum(&m, &only, &f, 8, 0.5, &quad).unwrap();
        assert!(r.partial_sums.iter().all(|s| (s - 1.0).abs() < 1e-9));
        for (k, i) in r.integrals.iter().enumerate() {
            assert!(i.im.abs() < 1e-6 * i.norm(), "I_{k} = {i}");
        }
    }
}
