//! Log-domain evaluation of the coefficient series behind the convergence
//! criteria: majorant sums, envelope infima, truncated and exchanged series,
//! growth-order fits and the coefficient conditions.

use std::f64::consts::LN_2;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{
    bisect, digamma, geomspace, golden_section, least_squares, ln_factorial, ln_gamma, trigamma, LogSum,
    GaussLegendre, LN_2PI,
};

/// Index at which a tabulated series that has not converged is declared divergent.
pub const K_CAP: u64 = 100_000;
/// Upper end of the real-k range searched for a peak.
pub const FAR_K: f64 = 1e300;
/// Largest s·t at which an envelope minimizer is trusted.
pub const RESOLUTION_LIMIT: f64 = 1_125_899_906_842_624.0;
/// Peaks with more integers than this in their mass region are integrated.
const DIRECT_LIMIT: f64 = 2e5;
/// Log drop from the peak that bounds the mass region.
const MASS_DROP: f64 = 60.0;
/// Past this index the log-terms lose absolute precision; Laplace only.
const LAPLACE_ONLY: f64 = 1e12;
/// Increase over the running maximum (in log) that marks renewed growth.
const REGROWTH: f64 = 1e3;
/// Stability tolerance (in log) for suprema compared over k_max and k_max/2.
pub const SUP_STABILITY_TOL: f64 = 0.05;
pub const LOCALIZATION_MARGIN: f64 = -1.0;
pub const PRODUCT_BOUND_HS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("invalid coefficients: {0}")]
    Family(String),
    #[error("invalid coefficient key '{0}'")]
    Parse(String),
    #[error("growth fit: {0}")]
    Fit(String),
}

/// Wick series coefficients d_k, accessed as ln d_k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoefficientFamily {
    /// d_k = k!^{−1/ρ}
    FactorialPower(f64),
    /// d_k = |g|^k / k!
    NormalExp(f64),
    /// ln d_k for k = 0..n; d_k = 0 past the table
    Tabulated(Vec<f64>),
}

impl CoefficientFamily {
    pub fn factorial_power(rho: f64) -> Result<Self, SeriesError> {
        if rho.is_finite() && rho > 0.0 {
            Ok(Self::FactorialPower(rho))
        } else {
            Err(SeriesError::Family(format!("ρ must be positive, got {rho}")))
        }
    }

    pub fn normal_exp(g: f64) -> Result<Self, SeriesError> {
        if g.is_finite() {
            Ok(Self::NormalExp(g))
        } else {
            Err(SeriesError::Family(format!("g must be finite, got {g}")))
        }
    }

    pub fn tabulated(log_d: Vec<f64>) -> Result<Self, SeriesError> {
        if log_d.is_empty() {
            return Err(SeriesError::Family("empty table".into()));
        }
        if log_d[0].abs() > 1e-12 {
            return Err(SeriesError::Family(format!("d_0 must be 1, got e^{}", log_d[0])));
        }
        if let Some(k) = log_d.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(SeriesError::Family(format!("ln d_{k} is not finite or −∞")));
        }
        let mut log_d = log_d;
        log_d[0] = 0.0;
        Ok(Self::Tabulated(log_d))
    }

    /// Table of d_k values (not logs).
    pub fn from_values(d: &[f64]) -> Result<Self, SeriesError> {
        if let Some(k) = d.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SeriesError::Family(format!("d_{k} = {} is not a finite nonnegative number", d[k])));
        }
        Self::tabulated(d.iter().map(|v| v.ln()).collect())
    }

    /// CSV rows `k, d_k` with k = 0, 1, 2, ... in order.
    pub fn from_csv(path: &Path) -> Result<Self, SeriesError> {
        let err = |e: String| SeriesError::Family(format!("{}: {e}", path.display()));
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| err(e.to_string()))?;
        let mut d = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let k: usize = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| err(format!("bad row {rec:?}")))?;
            let v: f64 = rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| err(format!("bad row {rec:?}")))?;
            if k != d.len() {
                return Err(err(format!("expected k = {}, found {k}", d.len())));
            }
            d.push(v);
        }
        Self::from_values(&d)
    }

    /// Text key: "factpow:ρ", "normexp:g" or "table:<path>".
    pub fn parse_key(key: &str) -> Result<Self, SeriesError> {
        let bad = || SeriesError::Parse(key.to_string());
        let (head, arg) = key.split_once(':').ok_or_else(bad)?;
        let arg = arg.trim();
        match head.trim() {
            "factpow" => Self::factorial_power(arg.parse().map_err(|_| bad())?),
            "normexp" => Self::normal_exp(arg.parse().map_err(|_| bad())?),
            "table" => Self::from_csv(Path::new(arg)),
            _ => Err(bad()),
        }
    }

    pub fn log_d(&self, k: u64) -> f64 {
        match self {
            Self::FactorialPower(rho) => -ln_factorial(k as f64) / rho,
            Self::NormalExp(g) => {
                if k == 0 {
                    0.0
                } else if *g == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    k as f64 * g.abs().ln() - ln_factorial(k as f64)
                }
            }
            Self::Tabulated(t) => t.get(k as usize).copied().unwrap_or(f64::NEG_INFINITY),
        }
    }

    /// Number of leading entries that may be nonzero; `None` for infinite support.
    pub fn support_len(&self) -> Option<u64> {
        match self {
            Self::NormalExp(g) if *g == 0.0 => Some(1),
            Self::Tabulated(t) => Some(t.iter().rposition(|v| *v > f64::NEG_INFINITY).map_or(0, |i| i + 1) as u64),
            _ => None,
        }
    }

    pub fn is_closed_form(&self) -> bool {
        self.support_len().is_none()
    }

    /// ln d at real argument with first and second derivatives (closed forms only).
    fn log_d_real(&self, x: f64) -> (f64, f64, f64) {
        match self {
            Self::FactorialPower(rho) => {
                (-ln_gamma(x + 1.0) / rho, -digamma(x + 1.0) / rho, -trigamma(x + 1.0) / rho)
            }
            Self::NormalExp(g) => {
                let lg = g.abs().ln();
                (x * lg - ln_gamma(x + 1.0), lg - digamma(x + 1.0), -trigamma(x + 1.0))
            }
            Self::Tabulated(_) => unreachable!("tabulated families have no real extension"),
        }
    }
}

impl fmt::Display for CoefficientFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FactorialPower(rho) => write!(f, "factpow:{rho}"),
            Self::NormalExp(g) => write!(f, "normexp:{g}"),
            Self::Tabulated(t) => write!(f, "table[{}]", t.len()),
        }
    }
}

/// Result of a series summation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SeriesSum {
    Finite { log_sum: f64, peak_k: f64 },
    Divergent { at_k: f64 },
}

impl SeriesSum {
    pub fn log_value(&self) -> Option<f64> {
        match self {
            Self::Finite { log_sum, .. } => Some(*log_sum),
            Self::Divergent { .. } => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, Self::Divergent { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    pub rel_tol: f64,
    pub k_cap: u64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions { rel_tol: 1e-15, k_cap: K_CAP }
    }
}

/// Per-term weight `lin·k + a·k·ln(λ(s/k − m))`, the second part absent when a = 0.
#[derive(Debug, Clone, Copy)]
struct Weight {
    lin: f64,
    a: f64,
    s: f64,
    m: f64,
    ln_lambda: f64,
}

impl Weight {
    fn linear(lin: f64) -> Self {
        Weight { lin, a: 0.0, s: 1.0, m: 0.0, ln_lambda: 0.0 }
    }

    fn at(&self, k: f64) -> (f64, f64, f64) {
        if self.a == 0.0 {
            return (self.lin * k, self.lin, 0.0);
        }
        let rest = self.s - k * self.m;
        let log_part = self.ln_lambda + rest.ln() - k.ln();
        let v = if k == 0.0 { 0.0 } else { self.lin * k + self.a * k * log_part };
        let d1 = self.lin + self.a * log_part - self.a * self.s / rest;
        let d2 = -self.a * self.s / (k * rest) - self.a * self.s * self.m / (rest * rest);
        (v, d1, d2)
    }
}

struct Terms<'a> {
    d: &'a CoefficientFamily,
    w: Weight,
    /// Largest admissible k (inclusive); may be infinite.
    hi: f64,
}

impl Terms<'_> {
    fn at_int(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let ld = self.d.log_d(2 * k);
        if ld == f64::NEG_INFINITY {
            return ld;
        }
        ln_factorial(k as f64) + ld + self.w.at(k as f64).0
    }

    fn at_real(&self, x: f64) -> (f64, f64, f64) {
        let (ld, ld1, ld2) = self.d.log_d_real(2.0 * x);
        let (w, w1, w2) = self.w.at(x);
        let v = if x == 0.0 { 0.0 } else { ln_gamma(x + 1.0) + ld + w };
        (v, digamma(x + 1.0) + 2.0 * ld1 + w1, trigamma(x + 1.0) + 4.0 * ld2 + w2)
    }

    fn value(&self, x: f64) -> f64 {
        self.at_real(x).0
    }

    fn slope(&self, x: f64) -> f64 {
        self.at_real(x).1
    }

    fn sum(&self, opts: &SeriesOptions) -> SeriesSum {
        if self.hi < 1.0 {
            return SeriesSum::Finite { log_sum: 0.0, peak_k: 0.0 };
        }
        if self.d.is_closed_form() {
            if let Some(r) = self.sum_unimodal() {
                return r;
            }
        }
        self.sum_iterative(opts)
    }

    /// Slope of the log-term as k → ∞ in the form `A·ln k + B` (closed forms,
    /// massless weight).
    fn asymptotic_slope(&self) -> (f64, f64) {
        let (ad, bd) = match self.d {
            CoefficientFamily::FactorialPower(rho) => (-2.0 / rho, -2.0 / rho * LN_2),
            CoefficientFamily::NormalExp(g) => (-2.0, 2.0 * g.abs().ln() - 2.0 * LN_2),
            CoefficientFamily::Tabulated(_) => unreachable!(),
        };
        let w = &self.w;
        let (aw, bw) = if w.a == 0.0 { (0.0, w.lin) } else { (-w.a, w.lin + w.a * (w.ln_lambda + w.s.ln() - 1.0)) };
        (1.0 + ad + aw, bd + bw)
    }

    /// Peak-based summation for closed forms whose log-term is unimodal in k.
    /// Returns `None` when unimodality cannot be established from samples.
    fn sum_unimodal(&self) -> Option<SeriesSum> {
        if self.hi.is_infinite() {
            let (a, b) = self.asymptotic_slope();
            if a > 0.0 || (a == 0.0 && b > 0.0) {
                return Some(SeriesSum::Divergent { at_k: f64::INFINITY });
            }
            if a < 0.0 && -b / a > FAR_K.ln() {
                // Peak beyond f64 indices: T(k*) ≈ −A·k*, possibly +∞ in f64.
                let k_peak = (-b / a).exp();
                return Some(SeriesSum::Finite { log_sum: -a * k_peak, peak_k: k_peak });
            }
        }
        let top = self.hi.min(FAR_K);
        let xs = geomspace(1e-6, top, 600);
        let slopes: Vec<f64> = xs.iter().map(|&x| self.slope(x)).collect();
        let mut down = None;
        for i in 1..xs.len() {
            if slopes[i - 1] > 0.0 && slopes[i] <= 0.0 {
                if down.is_some() {
                    return None;
                }
                down = Some(i);
            } else if slopes[i - 1] <= 0.0 && slopes[i] > 0.0 {
                return None;
            }
        }
        let x_peak = match down {
            Some(i) => {
                let (a, b) = (xs[i - 1].ln(), xs[i].ln());
                bisect(|u| self.slope(u.exp()), a, b, 200).exp()
            }
            None if slopes[0] <= 0.0 => 0.0,
            None => top,
        };
        Some(self.sum_around(x_peak))
    }

    fn sum_around(&self, x_peak: f64) -> SeriesSum {
        let (t_peak, slope_peak, curv_peak) = self.at_real(x_peak);
        if x_peak > LAPLACE_ONLY {
            let log_sum = if x_peak < self.hi && curv_peak < 0.0 {
                t_peak + 0.5 * (LN_2PI - (-curv_peak).ln())
            } else {
                // Boundary peak: terms fall geometrically away from k = hi.
                let t = self.value(self.hi);
                t - (-(-slope_peak.max(1e-300)).exp_m1()).ln()
            };
            return SeriesSum::Finite { log_sum, peak_k: x_peak };
        }
        let floor = t_peak - MASS_DROP;
        let left = if x_peak == 0.0 || self.value(0.0) >= floor {
            0.0
        } else {
            bisect(|x| self.value(x) - floor, 0.0, x_peak, 200)
        };
        let right = if self.hi.is_finite() && self.value(self.hi) >= floor {
            self.hi
        } else {
            let mut b = (2.0 * x_peak).max(x_peak + 1.0);
            while self.value(b.min(self.hi)) >= floor {
                b *= 2.0;
            }
            bisect(|x| self.value(x) - floor, x_peak, b.min(self.hi), 200)
        };
        let (k0, k1) = (left.ceil(), right.floor());
        if k1 - k0 + 1.0 <= DIRECT_LIMIT {
            let mut acc = LogSum::new();
            let mut k = k0 as u64;
            while k as f64 <= k1 {
                acc.push(self.at_int(k));
                k += 1;
            }
            return SeriesSum::Finite { log_sum: acc.value(), peak_k: x_peak };
        }
        // Euler–Maclaurin: integral of the smooth extension plus half endpoints.
        let gl = GaussLegendre::new(16);
        let panels = 256;
        let h = (right - left) / panels as f64;
        let mut integral = 0.0;
        for p in 0..panels {
            let a = left + p as f64 * h;
            integral += gl.integrate(a, a + h, |x| (self.value(x) - t_peak).exp());
        }
        let ends = 0.5 * ((self.value(left) - t_peak).exp() + (self.value(right) - t_peak).exp());
        SeriesSum::Finite { log_sum: t_peak + (integral + ends).ln(), peak_k: x_peak }
    }

    fn sum_iterative(&self, opts: &SeriesOptions) -> SeriesSum {
        let end = match self.d.support_len() {
            Some(n) if n == 0 => 0.0,
            Some(n) => self.hi.min(((n - 1) / 2) as f64),
            None => self.hi,
        };
        let ln_tol = opts.rel_tol.ln();
        let mut acc = LogSum::new();
        let mut prev: Option<f64> = None;
        let mut running_max = f64::NEG_INFINITY;
        let mut decaying = false;
        let mut rises = 0;
        let mut peak_k = 0u64;
        let mut k = 0u64;
        while (k as f64) <= end {
            if k > opts.k_cap {
                return SeriesSum::Divergent { at_k: k as f64 };
            }
            let t = self.at_int(k);
            if t > f64::NEG_INFINITY {
                acc.push(t);
                if let Some(p) = prev {
                    if t < p {
                        decaying = true;
                        rises = 0;
                        let r = t - p;
                        // Geometric bound on the remaining tail.
                        let tail = t + r - (-r.exp_m1()).ln();
                        if t - acc.value() < ln_tol && tail - acc.value() < ln_tol {
                            return SeriesSum::Finite { log_sum: acc.value(), peak_k: peak_k as f64 };
                        }
                    } else if decaying && t > p {
                        rises += 1;
                        if rises >= 3 && t > running_max + REGROWTH {
                            return SeriesSum::Divergent { at_k: k as f64 };
                        }
                    }
                }
                if t > running_max {
                    running_max = t;
                    peak_k = k;
                }
                prev = Some(t);
            }
            k += 1;
        }
        SeriesSum::Finite { log_sum: acc.value(), peak_k: peak_k as f64 }
    }
}

/// ln of one majorant term `L^k k! d_{2k} w^k`.
pub fn log_term(k: u64, l: f64, d: &CoefficientFamily, log_w: f64) -> f64 {
    Terms { d, w: Weight::linear(l.ln() + log_w), hi: f64::INFINITY }.at_int(k)
}

/// ln Σ_k L^k k! d_{2k} w^k.
pub fn sum_majorant_series(l: f64, d: &CoefficientFamily, log_w: f64, rel_tol: f64) -> SeriesSum {
    sum_majorant_series_with(l, d, log_w, &SeriesOptions { rel_tol, ..Default::default() })
}

pub fn sum_majorant_series_with(l: f64, d: &CoefficientFamily, log_w: f64, opts: &SeriesOptions) -> SeriesSum {
    if log_w == f64::NEG_INFINITY {
        return SeriesSum::Finite { log_sum: 0.0, peak_k: 0.0 };
    }
    Terms { d, w: Weight::linear(l.ln() + log_w), hi: f64::INFINITY }.sum(opts)
}

/// Infimum over t of `s·t + ln G(t)` and its location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnvelopeInf {
    Finite { log_inf: f64, argmin_t: f64 },
    Divergent,
}

impl EnvelopeInf {
    pub fn log_value(&self) -> Option<f64> {
        match self {
            Self::Finite { log_inf, .. } => Some(*log_inf),
            Self::Divergent => None,
        }
    }
}

/// Minimizes `s·t + log_g(t)` over the window; `log_g` returns `None` where
/// the inner quantity diverges.
pub fn envelope_inf_by(s: f64, window: (f64, f64), log_g: &dyn Fn(f64) -> Option<f64>) -> EnvelopeInf {
    let u_lo = if window.0 > 0.0 { window.0.ln().max(-690.0) } else { -690.0 };
    let u_hi = window.1.ln().min(700.0);
    let objective = |u: f64| -> f64 {
        let t = u.exp();
        match log_g(t) {
            Some(g) => s * t + g,
            None => f64::INFINITY,
        }
    };
    let n = 64;
    let us: Vec<f64> = (0..n).map(|i| u_lo + (u_hi - u_lo) * i as f64 / (n - 1) as f64).collect();
    let vals: Vec<f64> = us.iter().map(|&u| objective(u)).collect();
    let (best, best_val) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    if best_val == f64::INFINITY {
        return EnvelopeInf::Divergent;
    }
    if best_val == f64::NEG_INFINITY {
        return EnvelopeInf::Finite { log_inf: f64::NEG_INFINITY, argmin_t: us[best].exp() };
    }
    if best == n - 1 && window.1.is_infinite() && vals[n - 1] < vals[n - 2] - 1.0 {
        return EnvelopeInf::Finite { log_inf: f64::NEG_INFINITY, argmin_t: f64::INFINITY };
    }
    let a = us[best.saturating_sub(1)];
    let b = us[(best + 1).min(n - 1)];
    let (u, v) = golden_section(objective, a, b, 1e-13);
    // Past s·t ≈ 2^50 the objective no longer resolves ln-size terms next to
    // s·t; a minimizer there means it was still falling when precision ran out.
    if window.1.is_infinite() && s * u.exp().max(us[best].exp()) > RESOLUTION_LIMIT {
        return EnvelopeInf::Finite { log_inf: f64::NEG_INFINITY, argmin_t: f64::INFINITY };
    }
    if v <= best_val {
        EnvelopeInf::Finite { log_inf: v, argmin_t: u.exp() }
    } else {
        EnvelopeInf::Finite { log_inf: best_val, argmin_t: us[best].exp() }
    }
}

/// inf over t in the window of `s·t + ln Σ_k L^k k! d_{2k} w_UV(t)^k`, with
/// `log_w_uv(t) = ln w_UV(t)`.
pub fn envelope_inf(
    s: f64,
    l: f64,
    d: &CoefficientFamily,
    log_w_uv: &dyn Fn(f64) -> f64,
    window: (f64, f64),
) -> EnvelopeInf {
    let opts = SeriesOptions::default();
    envelope_inf_by(s, window, &|t| sum_majorant_series_with(l, d, log_w_uv(t), &opts).log_value())
}

/// ln inf_t e^{st} e^{−k m′ t} t^{−a}, a = k(dim−2): −∞ when k·m′ ≥ s, else
/// a·ln(λ(s/k − m′)) with λ = e/(dim−2).
pub fn single_term_inf_closed_form(s: f64, k: u64, dim: u32, m_prime: f64) -> f64 {
    let kf = k as f64;
    if kf * m_prime >= s {
        return f64::NEG_INFINITY;
    }
    let a = kf * (dim as f64 - 2.0);
    let lambda = std::f64::consts::E / (dim as f64 - 2.0);
    a * (lambda * (s / kf - m_prime)).ln()
}

fn power_weight(s: f64, dim: u32, lin: f64, m: f64, ln_lambda: f64) -> Weight {
    Weight { lin, a: dim as f64 - 2.0, s, m, ln_lambda }
}

/// ln Σ_{0 ≤ k < s} k! d_{2k} (s/k)^{k(dim−2)}.
pub fn truncated_series(s: f64, d: &CoefficientFamily, dim: u32) -> f64 {
    if s <= 1.0 {
        return 0.0;
    }
    let terms = Terms { d, w: power_weight(s, dim, 0.0, 0.0, 0.0), hi: s.ceil() - 1.0 };
    terms.sum(&SeriesOptions::default()).log_value().expect("finite sum")
}

/// ln Σ_{k ≥ 0} k! d_{2k} (s/k)^{k(dim−2)}.
pub fn full_series(s: f64, d: &CoefficientFamily, dim: u32) -> SeriesSum {
    if s <= 0.0 {
        return SeriesSum::Finite { log_sum: 0.0, peak_k: 0.0 };
    }
    Terms { d, w: power_weight(s, dim, 0.0, 0.0, 0.0), hi: f64::INFINITY }.sum(&SeriesOptions::default())
}

/// ln Σ_k L^k k! d_{2k} inf_t e^{st} e^{−k m′ t} t^{−k(dim−2)}: the infimum
/// taken term by term, so terms with k ≥ s/m′ vanish.
pub fn exchanged_inf_series(s: f64, l: f64, d: &CoefficientFamily, dim: u32, m_prime: f64) -> SeriesSum {
    if s <= 0.0 {
        return SeriesSum::Finite { log_sum: 0.0, peak_k: 0.0 };
    }
    let hi = if m_prime > 0.0 { (s / m_prime).ceil() - 1.0 } else { f64::INFINITY };
    let ln_lambda = 1.0 - (dim as f64 - 2.0).ln();
    Terms { d, w: power_weight(s, dim, l.ln(), m_prime, ln_lambda), hi }.sum(&SeriesOptions::default())
}

/// Fit of ln ln F(s) ≈ order·ln s + log_type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub order: f64,
    pub log_type: f64,
    pub residual: f64,
    pub sample_range: (f64, f64),
}

/// Fits the order of growth of `ln F` (given as `log_f`) over the top two
/// decades of a geometric grid spanning at least three.
pub fn fit_growth_order(log_f: &dyn Fn(f64) -> f64, s_grid: &[f64]) -> Result<GrowthFit, SeriesError> {
    let values: Vec<f64> = s_grid.iter().map(|&s| log_f(s)).collect();
    fit_growth_order_values(s_grid, &values)
}

pub fn fit_growth_order_values(s_grid: &[f64], log_f: &[f64]) -> Result<GrowthFit, SeriesError> {
    let (lo, hi) = match (s_grid.first(), s_grid.last()) {
        (Some(&a), Some(&b)) if a > 0.0 => (a, b),
        _ => return Err(SeriesError::Fit("empty or nonpositive grid".into())),
    };
    if hi / lo < 1e3 * (1.0 - 1e-9) {
        return Err(SeriesError::Fit(format!("grid spans {:.2} decades, need 3", (hi / lo).log10())));
    }
    let cut = hi / 100.0 * (1.0 - 1e-12);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&s, &v) in s_grid.iter().zip(log_f) {
        if s < cut {
            continue;
        }
        if !(v.is_finite() && v > 0.0) {
            return Err(SeriesError::Fit(format!("ln F({s}) = {v}; F must exceed 1 in the fit window")));
        }
        xs.push(vec![s.ln(), 1.0]);
        ys.push(v.ln());
    }
    if xs.len() < 3 {
        return Err(SeriesError::Fit("fewer than 3 points in the fit window".into()));
    }
    let (beta, residual) = least_squares(&xs, &ys);
    Ok(GrowthFit { order: beta[0].max(0.0), log_type: beta[1], residual, sample_range: (xs[0][0].exp(), hi) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    /// a_{k_max} = ln(k_max! d_{2k_max}) / k_max
    pub limit_estimate: f64,
    pub decreasing: bool,
    pub pass: bool,
}

/// (k! d_{2k})^{1/k} → 0, judged from a_k = (ln k! + ln d_{2k})/k: strictly
/// decreasing over the second half of 1..=k_max and a_{k_max} ≤ −1.
pub fn check_localization(d: &CoefficientFamily, k_max: u64) -> Localization {
    let k_max = k_max.max(2);
    let a = |k: u64| (ln_factorial(k as f64) + d.log_d(2 * k)) / k as f64;
    let last = a(k_max);
    if last == f64::NEG_INFINITY {
        return Localization { limit_estimate: last, decreasing: true, pass: true };
    }
    let mut decreasing = true;
    let mut prev = a(k_max / 2);
    for k in k_max / 2 + 1..=k_max {
        let v = a(k);
        if v == f64::NEG_INFINITY {
            continue;
        }
        if !(v < prev) {
            decreasing = false;
            break;
        }
        prev = v;
    }
    Localization { limit_estimate: last, decreasing, pass: decreasing && last <= LOCALIZATION_MARGIN }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProductBound {
    /// d_k d_l ≤ C h^{k+l} d_{k+l}
    Holds { log_c: f64, h: f64 },
    /// d_k d_l > 0 = d_{k+l}
    Violation { k: u64, l: u64 },
    /// No h on the grid gives a stable supremum.
    Unbounded,
}

fn product_bound_sup(d: &CoefficientFamily, h: f64, n_max: u64) -> Result<f64, (u64, u64)> {
    let lh = h.ln();
    let mut sup = f64::NEG_INFINITY;
    for n in 0..=n_max {
        let ln_n = d.log_d(n);
        for k in 0..=n / 2 {
            let lhs = d.log_d(k) + d.log_d(n - k);
            if lhs == f64::NEG_INFINITY {
                continue;
            }
            if ln_n == f64::NEG_INFINITY {
                return Err((k, n - k));
            }
            sup = sup.max(lhs - n as f64 * lh - ln_n);
        }
    }
    Ok(sup)
}

/// Smallest h on `PRODUCT_BOUND_HS` with sup_{k+l ≤ k_max} ln(d_k d_l / (h^{k+l} d_{k+l}))
/// equal (within tolerance) to the same supremum over k+l ≤ k_max/2.
pub fn check_product_bound(d: &CoefficientFamily, k_max: u64) -> ProductBound {
    for &h in &PRODUCT_BOUND_HS {
        let full = match product_bound_sup(d, h, k_max) {
            Ok(v) => v,
            Err((k, l)) => return ProductBound::Violation { k, l },
        };
        let half = product_bound_sup(d, h, k_max / 2).unwrap_or(f64::NEG_INFINITY);
        if full - half <= SUP_STABILITY_TOL {
            return ProductBound::Holds { log_c: full, h };
        }
    }
    ProductBound::Unbounded
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subordination {
    pub subordinate: bool,
    /// ln sup_k d′_k / d_k over k ≤ k_max
    pub log_c: f64,
}

/// d′ ◁ d: sup_k d′_k/d_k finite and stable between k_max/2 and k_max.
pub fn is_subordinate(d_prime: &CoefficientFamily, d: &CoefficientFamily, k_max: u64) -> Subordination {
    let mut sup = f64::NEG_INFINITY;
    let mut half_sup = f64::NEG_INFINITY;
    for k in 0..=k_max {
        let num = d_prime.log_d(k);
        if num == f64::NEG_INFINITY {
            continue;
        }
        let den = d.log_d(k);
        if den == f64::NEG_INFINITY {
            return Subordination { subordinate: false, log_c: f64::INFINITY };
        }
        sup = sup.max(num - den);
        if k <= k_max / 2 {
            half_sup = sup;
        }
    }
    Subordination { subordinate: sup - half_sup <= SUP_STABILITY_TOL, log_c: sup }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn fp(rho: f64) -> CoefficientFamily {
        CoefficientFamily::factorial_power(rho).unwrap()
    }

    fn ne(g: f64) -> CoefficientFamily {
        CoefficientFamily::normal_exp(g).unwrap()
    }

    /// 1/⌈k/2⌉!, so that k!·d_{2k} = 1.
    fn flat_table(n: usize) -> CoefficientFamily {
        CoefficientFamily::tabulated((0..n).map(|k| -ln_factorial(((k + 1) / 2) as f64)).collect()).unwrap()
    }

    #[test]
    fn construction_rejects_bad_tables() {
        assert!(CoefficientFamily::tabulated(vec![]).is_err());
        assert!(CoefficientFamily::tabulated(vec![0.5, 0.0]).is_err());
        assert!(CoefficientFamily::from_values(&[1.0, -0.5]).is_err());
        assert!(CoefficientFamily::tabulated(vec![0.0, f64::NAN]).is_err());
        assert!(CoefficientFamily::factorial_power(0.0).is_err());
        let t = CoefficientFamily::from_values(&[1.0, 0.0, 2.0, 0.0]).unwrap();
        assert_eq!(t.support_len(), Some(3));
        assert_eq!(t.log_d(7), f64::NEG_INFINITY);
    }

    #[test]
    fn keys_round_trip() {
        for key in ["factpow:1.5", "normexp:0.5"] {
            assert_eq!(CoefficientFamily::parse_key(key).unwrap().to_string(), key);
        }
        assert!(CoefficientFamily::parse_key("factpow:-1").is_err());
        assert!(CoefficientFamily::parse_key("bogus:1").is_err());
    }

    #[test]
    fn log_term_examples() {
        assert_eq!(log_term(0, 3.0, &fp(1.0), 5.0), 0.0);
        assert!((log_term(1, 1.0, &fp(1.0), 0.0) + LN_2).abs() < 1e-14);
        let expect = 4.0 + LN_2 - 24f64.ln();
        assert!((log_term(2, E, &ne(1.0), 1.0) - expect).abs() < 1e-14);
    }

    #[test]
    fn majorant_single_term_and_flat_divergence() {
        let only_d0 = CoefficientFamily::tabulated(vec![0.0]).unwrap();
        assert_eq!(sum_majorant_series(1.0, &only_d0, 10.0, 1e-12).log_value(), Some(0.0));
        let r = sum_majorant_series(1.0, &flat_table(2 * K_CAP as usize + 10), 0.0, 1e-12);
        assert!(r.is_divergent(), "{r:?}");
    }

    #[test]
    fn majorant_matches_direct_summation() {
        // Σ k!/(2k)! · 0.5^k, 64 terms by running products.
        let mut term = 1.0f64;
        let mut direct = 1.0;
        for k in 1..64 {
            term *= k as f64 / ((2 * k - 1) as f64 * (2 * k) as f64) * 0.5;
            direct += term;
        }
        let got = sum_majorant_series(1.0, &ne(1.0), 0.5f64.ln(), 1e-15).log_value().unwrap();
        assert!((got - direct.ln()).abs() < 1e-14, "{got} vs {}", direct.ln());
        // Same series via the tabulated path.
        let table = CoefficientFamily::tabulated((0..200).map(|k| -ln_factorial(k as f64)).collect()).unwrap();
        let got = sum_majorant_series(1.0, &table, 0.5f64.ln(), 1e-15).log_value().unwrap();
        assert!((got - direct.ln()).abs() < 1e-14);
    }

    #[test]
    fn majorant_divergence_tracks_rho() {
        assert!(sum_majorant_series(1.0, &fp(2.5), -50.0, 1e-12).is_divergent());
        assert!(!sum_majorant_series(1e6, &fp(1.9), 10.0, 1e-12).is_divergent());
        // ρ = 2: terms behave like (Lw/2)^k.
        assert!(!sum_majorant_series(1.0, &fp(2.0), 1.9f64.ln(), 1e-12).is_divergent());
        assert!(sum_majorant_series(1.0, &fp(2.0), 2.1f64.ln(), 1e-12).is_divergent());
    }

    #[test]
    fn closed_form_peak_sum_matches_tabulated_sum() {
        let table = CoefficientFamily::tabulated((0..200_000).map(|k| -ln_factorial(k as f64)).collect()).unwrap();
        for &lw in &[-3.0, 5.0, 10.0, 12.0] {
            let fast = sum_majorant_series(1.0, &ne(1.0), lw, 1e-15).log_value().unwrap();
            let slow = sum_majorant_series(1.0, &table, lw, 1e-15).log_value().unwrap();
            assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1.0), "lw={lw}: {fast} vs {slow}");
        }
    }

    #[test]
    fn integral_and_laplace_paths_are_continuous() {
        // Peaks straddling the direct / integral / Laplace thresholds.
        let d = fp(1.0);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..60 {
            let lw = 2.0 + i as f64;
            let v = sum_majorant_series(1.0, &d, lw, 1e-15).log_value().unwrap();
            assert!(v > prev);
            prev = v;
        }
        // Peak near e^{lw}/4: direct at 16, integrated at 20 and 26.
        for &lw in &[16.0, 20.0, 26.0] {
            let terms = Terms { d: &d, w: Weight::linear(lw), hi: f64::INFINITY };
            let x = bisect(|u| terms.slope(u.exp()), 0.0, 100.0, 300).exp();
            let (t, _, c) = terms.at_real(x);
            let laplace = t + 0.5 * (LN_2PI - (-c).ln());
            let got = terms.sum(&SeriesOptions::default()).log_value().unwrap();
            assert!((got - laplace).abs() < 1e-3, "lw={lw}: {got} vs {laplace}");
        }
    }

    #[test]
    fn envelope_examples() {
        let only_d0 = CoefficientFamily::tabulated(vec![0.0]).unwrap();
        let r = envelope_inf(3.0, 1.0, &only_d0, &|t: f64| -t.ln(), (0.0, f64::INFINITY));
        assert!(r.log_value().unwrap().abs() < 1e-200);

        // inf e^{4t}/t² by dense grid minimization.
        let dense = (1..200_000)
            .map(|i| {
                let t = i as f64 * 1e-5;
                4.0 * t - 2.0 * t.ln()
            })
            .fold(f64::INFINITY, f64::min);
        let single = |t: f64| Some(-2.0 * t.ln());
        let EnvelopeInf::Finite { log_inf, argmin_t } = envelope_inf_by(4.0, (0.0, f64::INFINITY), &single) else {
            panic!()
        };
        assert!((log_inf - (4.0 * E * E).ln()).abs() < 1e-10);
        assert!((log_inf - dense).abs() < 1e-6);
        assert!((argmin_t - 0.5).abs() < 1e-6);
    }

    #[test]
    fn envelope_reports_unbounded_below_and_divergent() {
        let decreasing = |t: f64| Some(-3.0 * t - 2.0 * t.ln());
        let r = envelope_inf_by(1.0, (0.0, f64::INFINITY), &decreasing);
        assert_eq!(r.log_value(), Some(f64::NEG_INFINITY));
        assert_eq!(envelope_inf_by(1.0, (1e-3, 1.0), &|_| None), EnvelopeInf::Divergent);
    }

    #[test]
    fn single_term_closed_form_examples() {
        assert_eq!(single_term_inf_closed_form(1.0, 2, 4, 1.0), f64::NEG_INFINITY);
        assert!((single_term_inf_closed_form(6.0, 1, 4, 0.0) - 2.0 * (3.0 * E).ln()).abs() < 1e-14);
        assert!((single_term_inf_closed_form(2.0 * E, 1, 3, 0.0) - (2.0 * E * E).ln()).abs() < 1e-14);
        // Massive single term against grid minimization of e^{(s − k m′)t}/t^a.
        let (s, k, m) = (7.0, 2u64, 1.5);
        let a = 4.0;
        let grid_min = (1..400_000)
            .map(|i| {
                let t = i as f64 * 1e-5;
                (s - k as f64 * m) * t - a * t.ln()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((single_term_inf_closed_form(s, k, 4, m) - grid_min).abs() < 1e-6);
    }

    #[test]
    fn truncated_series_examples() {
        let d = fp(1.0);
        let expect = (1.0 + 0.5 * 1.5f64.powi(2)).ln();
        assert!((truncated_series(1.5, &d, 4) - expect).abs() < 1e-14);
        // Term-by-term with exact factorial ratios for s = 10.
        let mut direct = 1.0f64;
        let mut kf = 1.0f64;
        let mut k2f = 1.0f64;
        for k in 1..10u32 {
            kf *= k as f64;
            k2f *= ((2 * k - 1) * 2 * k) as f64;
            direct += kf / k2f * (10.0 / k as f64).powi(2 * k as i32);
        }
        assert!((truncated_series(10.0, &d, 4) - direct.ln()).abs() < 1e-13);
        let mut direct = LogSum::new();
        for k in 0..50u64 {
            let kf = k as f64;
            let w = if k == 0 { 0.0 } else { 2.0 * kf * (50.0 / kf).ln() };
            direct.push(ln_factorial(kf) - ln_factorial(2.0 * kf) / 4.0 + w);
        }
        assert!((truncated_series(50.0, &fp(4.0), 4) - direct.value()).abs() < 1e-12);
    }

    #[test]
    fn full_series_examples() {
        let d = fp(1.0);
        let full = full_series(10.0, &d, 4).log_value().unwrap();
        let mut direct = LogSum::new();
        for k in 0..400u64 {
            let kf = k as f64;
            let w = if k == 0 { 0.0 } else { 2.0 * kf * (10.0 / kf).ln() };
            direct.push(ln_factorial(kf) - ln_factorial(2.0 * kf) + w);
        }
        assert!((full - direct.value()).abs() < 1e-13, "{full} vs {}", direct.value());
        assert!(full >= truncated_series(10.0, &d, 4));
        assert_eq!(full_series(0.0, &d, 4).log_value(), Some(0.0));
        // k! d_{2k} = k^k.
        let n = 2 * K_CAP as usize + 10;
        let log_d: Vec<f64> = (0..n)
            .map(|j| match j {
                0 => 0.0,
                j if j % 2 == 0 => {
                    let k = (j / 2) as f64;
                    k * k.ln() - ln_factorial(k)
                }
                _ => f64::NEG_INFINITY,
            })
            .collect();
        let d = CoefficientFamily::tabulated(log_d).unwrap();
        assert!(full_series(2.0, &d, 3).is_divergent());
    }

    #[test]
    fn exchanged_series_respects_mass_cutoff() {
        let d = fp(1.0);
        let (s, m) = (5.0, 2.0);
        let mut direct = LogSum::new();
        direct.push(0.0);
        for k in 1..3u64 {
            direct.push(ln_factorial(k as f64) + d.log_d(2 * k) + single_term_inf_closed_form(s, k, 4, m));
        }
        let got = exchanged_inf_series(s, 1.0, &d, 4, m).log_value().unwrap();
        assert!((got - direct.value()).abs() < 1e-13);
        // Exactly at the cutoff k·m′ = s the term is dropped.
        let at = exchanged_inf_series(4.0, 1.0, &d, 4, 2.0).log_value().unwrap();
        let one = (1.0 + 0.5 * E * E).ln();
        assert!((at - one).abs() < 1e-13, "{at} vs {one}");
    }

    #[test]
    fn growth_fit_exact_power_law() {
        let grid = geomspace(1e2, 1e6, 30);
        let fit = fit_growth_order(&|s: f64| s.powf(2.0 / 3.0), &grid).unwrap();
        assert!((fit.order - 2.0 / 3.0).abs() < 1e-10 && fit.log_type.abs() < 1e-8 && fit.residual < 1e-10);
        assert!(fit_growth_order(&|s: f64| s, &geomspace(1.0, 100.0, 10)).is_err());
        assert!(fit_growth_order(&|_| -1.0, &grid).is_err());
    }

    #[test]
    fn full_series_order_matches_formula() {
        let grid = geomspace(1e2, 1e5, 16);
        let fit = fit_growth_order(&|s| full_series(s, &fp(1.0), 4).log_value().unwrap(), &grid).unwrap();
        assert!((fit.order / (2.0 / 3.0) - 1.0).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn localization_examples() {
        assert!(check_localization(&fp(1.0), 200).pass);
        assert!(check_localization(&ne(2.0), 200).pass);
        let r = check_localization(&flat_table(500), 200);
        assert!(!r.pass && r.limit_estimate.abs() < 1e-12);
        // ρ = 2 decreases toward −ln 2, above the margin.
        let r = check_localization(&fp(2.0), 10_000);
        assert!(r.decreasing && !r.pass && (r.limit_estimate + LN_2).abs() < 1e-3);
        assert!(check_localization(&fp(1.9), 10_000).pass);
        assert!(!check_localization(&fp(2.5), 1000).pass);
    }

    #[test]
    fn product_bound_examples() {
        for &rho in &[0.5, 2.0 / 3.0, 0.9, 1.0, 1.2, 4.0 / 3.0, 1.5, 1.9, 4.0] {
            match check_product_bound(&fp(rho), 200) {
                ProductBound::Holds { h, log_c } => {
                    // Binomial bound: d_k d_l / d_{k+l} = C(k+l,k)^{1/ρ} ≤ 2^{(k+l)/ρ}.
                    assert!(h >= 2f64.powf(1.0 / rho) / 2.0 && h <= 2.0 * 2f64.powf(1.0 / rho).max(1.0));
                    assert!(log_c.abs() < 1e-12);
                }
                other => panic!("ρ={rho}: {other:?}"),
            }
        }
        for &g in &[0.1, 1.0, 2.0, 30.0] {
            assert!(matches!(check_product_bound(&ne(g), 200), ProductBound::Holds { h, .. } if h == 2.0));
        }
        let d = CoefficientFamily::from_values(&[1.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(check_product_bound(&d, 10), ProductBound::Violation { k: 2, l: 2 });
    }

    #[test]
    fn subordination_examples() {
        let s = is_subordinate(&fp(1.3), &fp(1.3), 100);
        assert!(s.subordinate && s.log_c == 0.0);
        let s = is_subordinate(&ne(1.0), &ne(2.0), 100);
        assert!(s.subordinate && s.log_c == 0.0);
        assert!(!is_subordinate(&fp(2.0), &fp(1.0), 100).subordinate);
        let sparse = CoefficientFamily::from_values(&[1.0, 0.0, 1.0]).unwrap();
        assert!(!is_subordinate(&ne(1.0), &sparse, 10).subordinate);
        assert!(is_subordinate(&sparse, &ne(1.0), 10).subordinate);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn majorant_monotone_in_w(rho in 0.3f64..1.95, lw in -5.0f64..30.0, dw in 0.0f64..3.0) {
            let d = fp(rho);
            let a = sum_majorant_series(1.0, &d, lw, 1e-14).log_value().unwrap();
            let b = sum_majorant_series(1.0, &d, lw + dw, 1e-14).log_value().unwrap();
            prop_assert!(b == a || b >= a - 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn envelope_single_term_matches_closed_form(ls in 0.0f64..3.0, k in 1u64..=20, dim in 3u32..=4) {
            let s = 10f64.powf(ls);
            let a = (k * (dim as u64 - 2)) as f64;
            let r = envelope_inf_by(s, (0.0, f64::INFINITY), &|t: f64| Some(-a * t.ln()));
            let closed = single_term_inf_closed_form(s, k, dim, 0.0);
            prop_assert!((r.log_value().unwrap() - closed).abs() < 1e-6);
        }

        #[test]
        fn envelope_nondecreasing_in_s(rho in 0.5f64..1.9, s in 1.0f64..200.0, ds in 0.0f64..50.0) {
            let d = fp(rho);
            let w = |t: f64| -2.0 * t.ln();
            let a = envelope_inf(s, 1.0, &d, &w, (0.0, f64::INFINITY)).log_value().unwrap();
            let b = envelope_inf(s + ds, 1.0, &d, &w, (0.0, f64::INFINITY)).log_value().unwrap();
            prop_assert!(b >= a - 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn truncated_below_full(rho in 0.3f64..1.95, s in 1.0f64..500.0, dim in 3u32..=5) {
            let d = fp(rho);
            let full = full_series(s, &d, dim).log_value().unwrap();
            prop_assert!(truncated_series(s, &d, dim) <= full + 1e-12 * full.abs().max(1.0));
        }

        #[test]
        fn product_bound_holds_for_normal_exp(g in 0.01f64..50.0) {
            let holds = matches!(check_product_bound(&ne(g), 60), ProductBound::Holds { .. });
            prop_assert!(holds);
        }
    }

    #[test]
    fn truncated_and_full_orders_agree_below_rho_two() {
        let grid = geomspace(1e2, 1e5, 16);
        for &rho in &[0.5, 1.0, 1.5] {
            let d = fp(rho);
            let t = fit_growth_order(&|s| truncated_series(s, &d, 4), &grid).unwrap();
            let f = fit_growth_order(&|s| full_series(s, &d, 4).log_value().unwrap(), &grid).unwrap();
            assert!((t.order / f.order - 1.0).abs() < 0.05, "ρ={rho}: {t:?} {f:?}");
        }
    }
}
