//! RB decay fits, Ramsey and Rabi calibration fits, and array aggregation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutMode {
    Destructive,
    Ndro,
}

/// One measured point of an RB curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbPoint {
    pub n: u32,
    pub p: f64,
    pub stderr: f64,
    pub shots: u64,
}

impl RbPoint {
    /// Point from `k` successes out of `shots`, with binomial standard error.
    pub fn from_counts(n: u32, k: u64, shots: u64) -> Self {
        if shots == 0 {
            return Self { n, p: 0.0, stderr: 0.0, shots };
        }
        let p = k as f64 / shots as f64;
        Self { n, p, stderr: (p * (1.0 - p) / shots as f64).sqrt(), shots }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbCurve {
    pub mode: ReadoutMode,
    pub points: Vec<RbPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub d: f64,
    pub d_spam: f64,
    pub d_se: f64,
    pub d_spam_se: f64,
    /// Covariance of `(d, d_SPAM)`.
    pub covariance: [[f64; 2]; 2],
    /// Average gate fidelity `F² = 1 − d/2`.
    pub fidelity: f64,
    pub fidelity_se: f64,
    pub chi2: f64,
    pub dof: usize,
    pub survival_scale: f64,
    pub iterations: usize,
}

/// `scale·(1/2 + (1/2)(1 − d_SPAM)(1 − d)^N)`.
pub fn rb_model<T: Real>(n: u32, d: T, d_spam: T, scale: T) -> T {
    let half = T::lit(0.5);
    scale * (half + half * (T::one() - d_spam) * (T::one() - d).powi(n as i32))
}

/// Gradient of [`rb_model`] with respect to `(d, d_SPAM)`.
pub fn rb_jacobian<T: Real>(n: u32, d: T, d_spam: T, scale: T) -> [T; 2] {
    let half = T::lit(0.5);
    let q = T::one() - d;
    let dd = if n == 0 {
        T::zero()
    } else {
        -scale * half * (T::one() - d_spam) * T::from_u32(n).unwrap() * q.powi(n as i32 - 1)
    };
    [dd, -scale * half * q.powi(n as i32)]
}

fn effective_sigma(pt: &RbPoint) -> f64 {
    pt.stderr.max(0.5 / pt.shots as f64)
}

/// Log-linear initial guess from `ln(2(P/scale − 1/2))` against `N`.
fn rb_initial_guess(points: &[&RbPoint], scale: f64) -> (f64, f64) {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for pt in points {
        let y = 2.0 * (pt.p / scale - 0.5);
        if y <= 1e-6 {
            continue;
        }
        // δ(ln y) ≈ 2σ/(scale·y)
        let w = (scale * y / (2.0 * effective_sigma(pt))).powi(2);
        let x = pt.n as f64;
        sw += w;
        sx += w * x;
        sy += w * y.ln();
        sxx += w * x * x;
        sxy += w * x * y.ln();
    }
    let det = sw * sxx - sx * sx;
    if sw == 0.0 || det.abs() < 1e-300 {
        return (1e-3, 0.1);
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / sw;
    let d = (1.0 - slope.exp()).clamp(0.0, 0.5);
    let d_spam = (1.0 - intercept.exp()).clamp(0.0, 0.99);
    (d, d_spam)
}

/// Weighted two-parameter fit of [`rb_model`] with a fixed survival scale.
pub fn fit_rb(curve: &RbCurve, survival_scale: f64) -> Result<FitResult> {
    if !(survival_scale > 0.0 && survival_scale <= 1.0) {
        return Err(Error::InvalidParameter(format!("survival scale {survival_scale} outside (0, 1]")));
    }
    let pts: Vec<&RbPoint> = curve.points.iter().filter(|p| p.shots > 0).collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("{} usable points, need 3", pts.len())));
    }
    let mut ns: Vec<u32> = pts.iter().map(|p| p.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() == 1 {
        return Err(Error::Singular);
    }
    if ns.len() < 3 {
        return Err(Error::InsufficientData(format!("{} distinct lengths, need 3", ns.len())));
    }
    let sigma: Vec<f64> = pts.iter().map(|p| effective_sigma(p)).collect();
    let eval = |q: &[f64]| {
        let m = pts.len();
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, 2);
        for (i, pt) in pts.iter().enumerate() {
            r[i] = (pt.p - rb_model(pt.n, q[0], q[1], survival_scale)) / sigma[i];
            let g = rb_jacobian(pt.n, q[0], q[1], survival_scale);
            j[(i, 0)] = -g[0] / sigma[i];
            j[(i, 1)] = -g[1] / sigma[i];
        }
        (r, j)
    };
    let (d0, s0) = rb_initial_guess(&pts, survival_scale);
    let sol = levenberg_marquardt(eval, &[d0, s0], &[(0.0, 1.0), (0.0, 1.0)], &LmOptions::default())?;
    let c = &sol.covariance;
    let (d, d_spam) = (sol.params[0], sol.params[1]);
    let d_se = c[(0, 0)].max(0.0).sqrt();
    Ok(FitResult {
        d,
        d_spam,
        d_se,
        d_spam_se: c[(1, 1)].max(0.0).sqrt(),
        covariance: [[c[(0, 0)], c[(0, 1)]], [c[(1, 0)], c[(1, 1)]]],
        fidelity: 1.0 - d / 2.0,
        fidelity_se: d_se / 2.0,
        chi2: sol.chi2,
        dof: pts.len() - 2,
        survival_scale,
        iterations: sol.iterations,
    })
}

/// Binomially sampled RB curve: `strings` points per length, `shots` each.
pub fn synthetic_curve<R: Rng + ?Sized>(
    lengths: &[u32],
    strings: usize,
    shots: u64,
    d: f64,
    d_spam: f64,
    scale: f64,
    rng: &mut R,
) -> RbCurve {
    let mut points = Vec::with_capacity(lengths.len() * strings);
    for &n in lengths {
        let p = rb_model(n, d, d_spam, scale);
        for _ in 0..strings {
            let k = Binomial::new(shots, p).expect("probability in [0, 1]").sample(rng);
            points.push(RbPoint::from_counts(n, k, shots));
        }
    }
    RbCurve { mode: ReadoutMode::Destructive, points }
}

/// Ramsey fringe `1/2 + (α(t, T₂*) − 1/2)·cos(2πft + φ₀)` with `γ = 1/T₂*`.
pub fn ramsey_model(t: f64, gamma: f64, freq: f64, phase: f64) -> f64 {
    let env = (1.0 + 0.95 * (t * gamma).powi(2)).powf(-1.5);
    0.5 + 0.5 * env * (std::f64::consts::TAU * freq * t + phase).cos()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyFit {
    /// Fitted T₂* (s); infinite when no decay is resolved.
    pub t2star: f64,
    pub t2star_se: f64,
    pub frequency: f64,
    pub phase: f64,
    pub chi2: f64,
}

/// Fits T₂*, fringe frequency and phase to `(t, P, σ)` triples. A zero `σ`
/// makes the fit unweighted.
pub fn fit_ramsey(data: &[(f64, f64, f64)], detuning_hint: f64) -> Result<RamseyFit> {
    if data.len() < 6 {
        return Err(Error::InsufficientData(format!("{} Ramsey points, need 6", data.len())));
    }
    if !(detuning_hint > 0.0) {
        return Err(Error::InvalidParameter("detuning hint must be positive".into()));
    }
    let t_min = data.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
    let t_max = data.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    if (t_max - t_min) * detuning_hint < 1.0 {
        return Err(Error::InsufficientData("Ramsey data span less than one fringe".into()));
    }
    let sig: Vec<f64> = data.iter().map(|d| if d.2 > 0.0 { d.2 } else { 1.0 }).collect();
    let eval = |q: &[f64]| {
        let (g, f, ph) = (q[0], q[1], q[2]);
        let mut r = DVector::zeros(data.len());
        let mut j = DMatrix::zeros(data.len(), 3);
        for (i, &(t, p, _)) in data.iter().enumerate() {
            let base = 1.0 + 0.95 * (t * g).powi(2);
            let env = base.powf(-1.5);
            let psi = std::f64::consts::TAU * f * t + ph;
            let (s, c) = psi.sin_cos();
            r[i] = (p - 0.5 - 0.5 * env * c) / sig[i];
            let denv = -1.5 * base.powf(-2.5) * 1.9 * t * t * g;
            j[(i, 0)] = -0.5 * denv * c / sig[i];
            j[(i, 1)] = 0.5 * env * s * std::f64::consts::TAU * t / sig[i];
            j[(i, 2)] = 0.5 * env * s / sig[i];
        }
        (r, j)
    };
    let cost = |q: &[f64]| eval(q).0.norm_squared();
    let span = t_max.max(1e-12);
    let mut best = ([0.0, detuning_hint, 0.0], f64::INFINITY);
    for gk in [0.0, 0.3, 1.0, 3.0] {
        for pk in 0..16 {
            let q = [gk / span, detuning_hint, -std::f64::consts::PI + pk as f64 * std::f64::consts::PI / 8.0];
            let c = cost(&q);
            if c < best.1 {
                best = (q, c);
            }
        }
    }
    let pi = std::f64::consts::PI;
    let bounds = [(0.0, 1e3 / span), (0.5 * detuning_hint, 1.5 * detuning_hint), (-4.0 * pi, 4.0 * pi)];
    let sol = levenberg_marquardt(eval, &best.0, &bounds, &LmOptions::default())?;
    let g = sol.params[0];
    let g_se = sol.covariance[(0, 0)].max(0.0).sqrt();
    let (t2star, t2star_se) = if g > 0.0 { (1.0 / g, g_se / (g * g)) } else { (f64::INFINITY, f64::INFINITY) };
    Ok(RamseyFit { t2star, t2star_se, frequency: sol.params[1], phase: sol.params[2], chi2: sol.chi2 })
}

/// Damped Rabi flop `a − b·exp(−κt²)·cos(Ωt)`.
pub fn rabi_model(t: f64, a: f64, b: f64, rabi: f64, kappa: f64) -> f64 {
    a - b * (-kappa * t * t).exp() * (rabi * t).cos()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiFit {
    pub offset: f64,
    pub amplitude: f64,
    /// Rabi frequency (rad/s).
    pub rabi: f64,
    pub rabi_se: f64,
    /// Gaussian damping rate κ (1/s²).
    pub damping: f64,
    pub chi2: f64,
}

/// Fits a damped Rabi flop to `(t, P, σ)` triples, starting at `rabi_hint` (rad/s).
pub fn fit_rabi(data: &[(f64, f64, f64)], rabi_hint: f64) -> Result<RabiFit> {
    if data.len() < 6 {
        return Err(Error::InsufficientData(format!("{} Rabi points, need 6", data.len())));
    }
    let sig: Vec<f64> = data.iter().map(|d| if d.2 > 0.0 { d.2 } else { 1.0 }).collect();
    let eval = |q: &[f64]| {
        let (a, b, w, k) = (q[0], q[1], q[2], q[3]);
        let mut r = DVector::zeros(data.len());
        let mut j = DMatrix::zeros(data.len(), 4);
        for (i, &(t, p, _)) in data.iter().enumerate() {
            let g = (-k * t * t).exp();
            let (s, c) = (w * t).sin_cos();
            r[i] = (p - (a - b * g * c)) / sig[i];
            j[(i, 0)] = -1.0 / sig[i];
            j[(i, 1)] = g * c / sig[i];
            j[(i, 2)] = -b * g * s * t / sig[i];
            j[(i, 3)] = -b * g * c * t * t / sig[i];
        }
        (r, j)
    };
    let t_max = data.iter().map(|d| d.0).fold(0.0, f64::max).max(1e-12);
    let bounds = [(-1.0, 2.0), (0.0, 2.0), (0.5 * rabi_hint, 1.5 * rabi_hint), (0.0, 1e3 / (t_max * t_max))];
    let sol = levenberg_marquardt(eval, &[0.5, 0.5, rabi_hint, 0.0], &bounds, &LmOptions::default())?;
    Ok(RabiFit {
        offset: sol.params[0],
        amplitude: sol.params[1],
        rabi: sol.params[2],
        rabi_se: sol.covariance[(2, 2)].max(0.0).sqrt(),
        damping: sol.params[3],
        chi2: sol.chi2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    /// Standard error of the mean.
    pub sem: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        Self {
            mean,
            std,
            sem: std / n.sqrt(),
            min: xs.iter().cloned().fold(f64::INFINITY, f64::min),
            max: xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width bins spanning the data; a degenerate range gives one bin.
pub fn histogram(xs: &[f64], bins: usize) -> Vec<HistogramBin> {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if xs.is_empty() || bins == 0 {
        return Vec::new();
    }
    if hi <= lo {
        return vec![HistogramBin { lo, hi, count: xs.len() }];
    }
    let w = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> =
        (0..bins).map(|k| HistogramBin { lo: lo + k as f64 * w, hi: lo + (k + 1) as f64 * w, count: 0 }).collect();
    for &x in xs {
        let k = (((x - lo) / w) as usize).min(bins - 1);
        out[k].count += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteFit {
    pub site: usize,
    pub row: usize,
    pub col: usize,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySummary {
    pub sites: usize,
    pub fidelity: Stats,
    pub d: Stats,
    pub d_spam: Stats,
    pub fidelity_histogram: Vec<HistogramBin>,
    pub spam_histogram: Vec<HistogramBin>,
}

pub const HISTOGRAM_BINS: usize = 20;

pub fn aggregate_array(results: &[SiteFit]) -> Result<ArraySummary> {
    if results.is_empty() {
        return Err(Error::InsufficientData("no site fits to aggregate".into()));
    }
    let f: Vec<f64> = results.iter().map(|r| r.fit.fidelity).collect();
    let d: Vec<f64> = results.iter().map(|r| r.fit.d).collect();
    let s: Vec<f64> = results.iter().map(|r| r.fit.d_spam).collect();
    Ok(ArraySummary {
        sites: results.len(),
        fidelity: Stats::of(&f),
        d: Stats::of(&d),
        d_spam: Stats::of(&s),
        fidelity_histogram: histogram(&f, HISTOGRAM_BINS),
        spam_histogram: histogram(&s, HISTOGRAM_BINS),
    })
}
