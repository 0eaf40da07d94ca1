//! Numerical building blocks shared by the analytic modules: log-domain
//! accumulation, Gauss quadrature, one-dimensional minimization and small
//! least-squares fits.

use num_complex::Complex64;
use statrs::function::gamma;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(e^a + e^b)` without overflow; `-inf` is the additive identity.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ e^{x_i}`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// Streaming log-sum-exp accumulator with a rescaling running maximum.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSum {
    pub fn new() -> Self {
        LogSum { max: f64::NEG_INFINITY, scaled: 0.0 }
    }

    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x > 1e7 {
        // Stirling series; the next correction is below 1e-35 here.
        let inv = 1.0 / x;
        return (x - 0.5) * x.ln() - x + 0.5 * LN_2PI + inv / 12.0 - inv * inv * inv / 360.0;
    }
    gamma::ln_gamma(x)
}

/// `ln k!` for real `k ≥ 0`.
pub fn ln_factorial(k: f64) -> f64 {
    if k == 0.0 || k == 1.0 {
        0.0
    } else {
        ln_gamma(k + 1.0)
    }
}

pub fn digamma(x: f64) -> f64 {
    if x > 1e7 {
        let inv = 1.0 / x;
        return x.ln() - 0.5 * inv - inv * inv / 12.0;
    }
    gamma::digamma(x)
}

/// ψ'(x) by upward recurrence to x ≥ 16 followed by the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 16.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + 0.5 * inv2
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
}

/// `n` geometrically spaced points from `lo` to `hi` inclusive.
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes and weights mapped to [a, b].
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule over `panels` equal subintervals of [a, b].
    pub fn composite<F: FnMut(f64) -> Complex64>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: F,
    ) -> Complex64 {
        let h = (b - a) / panels as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for p in 0..panels {
            let lo = a + h * p as f64;
            for (x, w) in self.on(lo, lo + h) {
                acc += f(x) * w;
            }
        }
        acc
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * GK_WK[7];
    let mut g = fc * GK_WG[3];
    for i in 0..7 {
        let dx = h * GK_X[i];
        let s = f(c - dx) + f(c + dx);
        k += s * GK_WK[i];
        if i % 2 == 1 {
            g += s * GK_WG[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive Gauss–Kronrod (7/15) integration of a complex integrand.
/// Returns `None` when the error target is not met within the interval budget.
pub fn integrate_adaptive<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Option<Complex64> {
    let mut intervals = vec![(a, b, gk15(&mut f, a, b))];
    for _ in 0..4000 {
        let total: Complex64 = intervals.iter().map(|iv| iv.2 .0).sum();
        let err: f64 = intervals.iter().map(|iv| iv.2 .1).sum();
        if err <= abs_tol.max(rel_tol * total.norm()) {
            return Some(total);
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("nonempty");
        let (lo, hi, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        intervals.push((lo, mid, gk15(&mut f, lo, mid)));
        intervals.push((mid, hi, gk15(&mut f, mid, hi)));
    }
    None
}

/// Golden-section minimization of `f` on `[a, b]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a).abs() <= tol * (1.0 + c.abs().min(d.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Root of a monotone function on `[a, b]` by bisection; `f(a)` and `f(b)`
/// must differ in sign.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let mut fa = f(a);
    for _ in 0..iters {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Least-squares solution of `X β ≈ y` (columns of `X` given as rows of
/// `design`, one row per observation) via modified Gram–Schmidt.
/// Returns the coefficients and the RMS residual.
pub fn least_squares(design: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let n = design.len();
    assert_eq!(n, y.len());
    let p = design[0].len();
    assert!(n >= p);
    let mut q: Vec<Vec<f64>> = (0..p).map(|j| design.iter().map(|row| row[j]).collect()).collect();
    let mut r = vec![vec![0.0; p]; p];
    for j in 0..p {
        for i in 0..j {
            let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = dot;
            let qi = q[i].clone();
            for (v, u) in q[j].iter_mut().zip(&qi) {
                *v -= dot * u;
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        r[j][j] = norm;
        if norm > 0.0 {
            for v in q[j].iter_mut() {
                *v /= norm;
            }
        }
    }
    let qty: Vec<f64> = (0..p).map(|j| q[j].iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    let mut beta = vec![0.0; p];
    for j in (0..p).rev() {
        let mut acc = qty[j];
        for k in j + 1..p {
            acc -= r[j][k] * beta[k];
        }
        beta[j] = if r[j][j] != 0.0 { acc / r[j][j] } else { 0.0 };
    }
    let rss: f64 = design
        .iter()
        .zip(y)
        .map(|(row, yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yi - fit).powi(2)
        })
        .sum();
    (beta, (rss / n as f64).sqrt())
}

/// Simple linear regression `y ≈ a + b x`; returns (slope, intercept, rms).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let design: Vec<Vec<f64>> = x.iter().map(|&xi| vec![xi, 1.0]).collect();
    let (beta, rms) = least_squares(&design, y);
    (beta[0], beta[1], rms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(10);
        let v = gl.integrate(0.0, 2.0, |x| x.powi(19));
        assert!((v - 2f64.powi(20) / 20.0).abs() < 1e-9);
        let w: f64 = gl.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn high_order_nodes_are_accurate() {
        let gl = GaussLegendre::new(400);
        let v = gl.integrate(0.0, std::f64::consts::PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let v = integrate_adaptive(|x| Complex64::new(x.sqrt().ln(), 0.0), 0.0, 1.0, 1e-10, 1e-14).unwrap();
        assert!((v.re + 0.5).abs() < 1e-8);
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let (x, fx) = golden_section(|x| (x - 1.3).powi(2) + 2.0, -5.0, 5.0, 1e-12);
        assert!((x - 1.3).abs() < 1e-6);
        assert!((fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ln_gamma_matches_factorials_and_stirling_branch() {
        assert_eq!(ln_factorial(0.0), 0.0);
        assert!((ln_factorial(10.0) - 3628800f64.ln()).abs() < 1e-12);
        let x = 1e7;
        let below = gamma::ln_gamma(x);
        assert!(((ln_gamma(x * 1.000_000_1) - below) / below).abs() < 1e-6);
        let big = 2e7;
        assert!(((ln_gamma(big) - gamma::ln_gamma(big)) / ln_gamma(big)).abs() < 1e-14);
    }

    #[test]
    fn trigamma_against_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((trigamma(1.0) - pi2_6).abs() < 1e-12);
        assert!((trigamma(2.0) - (pi2_6 - 1.0)).abs() < 1e-12);
        assert!((trigamma(1000.0) - 0.001_000_500_166_666_6).abs() < 1e-12);
    }

    #[test]
    fn least_squares_recovers_exact_model() {
        let xs = geomspace(100.0, 1e4, 30);
        let design: Vec<Vec<f64>> = xs.iter().map(|&s| vec![s * s.ln(), s, 1.0]).collect();
        let y: Vec<f64> = xs.iter().map(|&s| 0.5 * s * s.ln() - 0.85 * s + 3.0).collect();
        let (b, rms) = least_squares(&design, &y);
        assert!((b[0] - 0.5).abs() < 1e-9 && (b[1] + 0.85).abs() < 1e-8 && rms < 1e-6);
    }

    #[test]
    fn log_sum_matches_direct() {
        let xs = [-1.0, 0.5, 2.0, -700.0];
        let direct = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        let mut acc = LogSum::new();
        xs.iter().for_each(|&x| acc.push(x));
        assert!((acc.value() - direct).abs() < 1e-14);
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn log_add_exp_is_symmetric_and_dominates(a in -800.0..800.0f64, b in -800.0..800.0f64) {
            let l = log_add_exp(a, b);
            prop_assert!((l - log_add_exp(b, a)).abs() < 1e-12);
            prop_assert!(l >= a.max(b));
            prop_assert!(l <= a.max(b) + std::f64::consts::LN_2 + 1e-12);
        }

        #[test]
        fn streaming_sum_is_order_independent(xs in proptest::collection::vec(-50.0..50.0f64, 1..40)) {
            let mut fwd = LogSum::new();
            xs.iter().for_each(|&x| fwd.push(x));
            let mut rev = LogSum::new();
            xs.iter().rev().for_each(|&x| rev.push(x));
            prop_assert!((fwd.value() - rev.value()).abs() < 1e-10);
        }
    }
}
