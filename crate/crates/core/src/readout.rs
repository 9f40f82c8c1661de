//! Measurement back-ends: destructive blow-away imaging and non-destructive
//! fluorescence readout (NDRO) with loss, leakage and post-selection.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::QubitState;
use crate::su2::Basis;

/// What the readout reports for one site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detection {
    Zero,
    One,
    /// Atom absent in the verification image (NDRO only).
    Lost,
}

/// Born-rule projection onto the computational basis.
pub fn projective_outcome<R: Rng + ?Sized>(state: &QubitState, rng: &mut R) -> Basis {
    if rng.random::<f64>() < state.p0() {
        Basis::Zero
    } else {
        Basis::One
    }
}

/// Imaging errors of the blow-away readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DestructiveParams {
    /// Probability that an F=3 atom is not seen.
    pub miss_f3: f64,
    /// Probability that an F=4 atom survives the push-out and is seen.
    pub false_bright_f4: f64,
}

impl DestructiveParams {
    pub fn paper_defaults() -> Self {
        Self { miss_f3: 0.010, false_bright_f4: 0.005 }
    }

    pub fn ideal() -> Self {
        Self { miss_f3: 0.0, false_bright_f4: 0.0 }
    }
}

/// Blow-away readout: only F=3 atoms remain to be imaged, so `|1⟩`,
/// spectators and lost atoms all read as [`Detection::One`].
pub fn destructive_readout<R: Rng + ?Sized>(
    outcome: Basis,
    spectator: bool,
    survived: bool,
    p: &DestructiveParams,
    rng: &mut R,
) -> Detection {
    let u: f64 = rng.random();
    if !survived || spectator {
        return Detection::One;
    }
    let seen = match outcome {
        Basis::Zero => u >= p.miss_f3,
        Basis::One => u < p.false_bright_f4,
    };
    if seen {
        Detection::Zero
    } else {
        Detection::One
    }
}

/// NDRO imaging parameters. Frequencies and rates in SI units (rad/s, 1/s, s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdroParams {
    /// Excited-state linewidth Γ (rad/s).
    pub linewidth: f64,
    pub saturation: f64,
    /// Laser detuning in units of Γ.
    pub detuning: f64,
    /// Overall photon detection efficiency.
    pub efficiency: f64,
    /// Background counts per second.
    pub background_rate: f64,
    pub duration: f64,
    /// Trap depth in mK.
    pub trap_depth: f64,
    /// Loss hazard of a scattering atom at `loss_ref_depth` (1/s).
    pub loss_rate_ref: f64,
    pub loss_ref_depth: f64,
    /// Depth scale (mK) of the exponential loss-vs-depth law.
    pub loss_depth_scale: f64,
    /// Probability per scattered photon of decaying to F=3.
    pub leak_per_photon: f64,
    /// Probability of pumping an F=4 atom into the stretched state.
    pub transfer_efficiency: f64,
}

impl NdroParams {
    /// Paper parameters with loss and leakage solved so that `|1⟩` atoms
    /// survive 10 ms at 13.3 mK with probability 0.900 and leak with 0.041.
    pub fn paper_defaults() -> Self {
        Self {
            linewidth: std::f64::consts::TAU * 5.2e6,
            saturation: 1.0,
            detuning: -0.75,
            efficiency: 5.2e-4,
            background_rate: 180.0,
            duration: 10e-3,
            trap_depth: 13.3,
            loss_rate_ref: 0.0,
            loss_ref_depth: 13.3,
            loss_depth_scale: 5.0,
            leak_per_photon: 0.0,
            transfer_efficiency: 0.98,
        }
        .calibrated(0.900, 0.041)
        .expect("paper targets are attainable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.linewidth > 0.0 && self.saturation > 0.0 && self.detuning.is_finite()) {
            return bad("linewidth and saturation must be positive, detuning finite");
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad("detection efficiency must lie in (0, 1]");
        }
        if !(self.background_rate >= 0.0 && self.duration >= 0.0 && self.loss_rate_ref >= 0.0) {
            return bad("background, duration and loss rate must be non-negative");
        }
        if !(self.trap_depth > 0.0 && self.loss_ref_depth > 0.0 && self.loss_depth_scale > 0.0) {
            return bad("trap depths and depth scale must be positive");
        }
        if !(0.0..=1.0).contains(&self.leak_per_photon) || !(0.0..=1.0).contains(&self.transfer_efficiency) {
            return bad("probabilities must lie in [0, 1]");
        }
        Ok(())
    }

    /// Photon scattering rate `(Γ/2)·s/(1 + s + (2Δ/Γ)²)`.
    pub fn scattering_rate(&self) -> f64 {
        let d = 2.0 * self.detuning;
        self.linewidth / 2.0 * self.saturation / (1.0 + self.saturation + d * d)
    }

    /// Loss hazard of a scattering atom at the configured trap depth.
    pub fn loss_rate(&self) -> f64 {
        self.loss_rate_ref * (-(self.trap_depth - self.loss_ref_depth) / self.loss_depth_scale).exp()
    }

    /// Hazard of decaying to the dark state while scattering.
    pub fn leak_rate(&self) -> f64 {
        self.leak_per_photon * self.scattering_rate()
    }

    pub fn with_duration(&self, duration: f64) -> Self {
        Self { duration, ..self.clone() }
    }

    pub fn with_depth(&self, trap_depth: f64) -> Self {
        Self { trap_depth, ..self.clone() }
    }

    /// Solves the loss hazard at the current depth and the leak probability
    /// per photon so that `|1⟩`-prepared atoms reach the given survival and
    /// leaked fractions after `duration`.
    ///
    /// Loss and leakage are competing exponential risks; transfer failures
    /// neither scatter nor leave.
    pub fn calibrated(&self, survival: f64, leakage: f64) -> Result<Self> {
        let tr = self.transfer_efficiency;
        let (lost, leaked) = ((1.0 - survival) / tr, leakage / tr);
        let u = lost + leaked;
        if !(lost >= 0.0 && leaked >= 0.0 && u < 1.0 && tr > 0.0 && self.duration > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "survival {survival} and leakage {leakage} unreachable with transfer efficiency {tr}"
            )));
        }
        let total = -(1.0 - u).ln() / self.duration;
        let (lambda, kappa) = if u > 0.0 { (total * lost / u, total * leaked / u) } else { (0.0, 0.0) };
        let scale = (-(self.trap_depth - self.loss_ref_depth) / self.loss_depth_scale).exp();
        Ok(Self {
            loss_rate_ref: lambda / scale,
            leak_per_photon: kappa / self.scattering_rate(),
            ..self.clone()
        })
    }
}

/// State of the atom when the NDRO pulse sequence starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NdroInput {
    /// F=3: never scatters.
    Dark,
    /// F=4 outside the cycling transition: must be pumped to the stretched state first.
    Upper,
    /// Already in the stretched state.
    Stretched,
}

impl NdroInput {
    pub fn from_qubit(outcome: Basis, spectator: bool) -> Self {
        match (outcome, spectator) {
            (_, true) | (Basis::One, false) => NdroInput::Upper,
            (Basis::Zero, false) => NdroInput::Dark,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotOutcome {
    pub present: bool,
    pub outcome: Option<Basis>,
    pub count: u64,
    pub survived: bool,
    pub leaked: bool,
    pub detected: Detection,
}

/// Inverse-CDF Poisson draw: the count is non-decreasing in `mean` for a fixed
/// `u`, which keeps sweeps over duration and depth coupled shot by shot.
pub fn poisson_quantile(mean: f64, u: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > 700.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(u.to_bits());
        return Poisson::new(mean).expect("finite mean").sample(&mut rng) as u64;
    }
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u64;
    let cap = (mean + 40.0 * mean.sqrt() + 100.0) as u64;
    while u > cdf && k < cap {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

/// Scattering history of one atom: photon count, survival and leakage.
pub fn ndro_physics<R: Rng + ?Sized>(input: NdroInput, p: &NdroParams, rng: &mut R) -> (u64, bool, bool) {
    // fixed draw order keeps streams aligned across parameter changes
    let u_transfer: f64 = rng.random();
    let u_leak: f64 = rng.random();
    let u_loss: f64 = rng.random();
    let u_sig: f64 = rng.random();
    let u_bg: f64 = rng.random();
    let t = p.duration;
    let bright = match input {
        NdroInput::Dark => false,
        NdroInput::Upper => u_transfer < p.transfer_efficiency,
        NdroInput::Stretched => true,
    };
    let (t_bright, survived, leaked) = if bright {
        let exp_time = |u: f64, rate: f64| if rate > 0.0 { -(1.0 - u).ln() / rate } else { f64::INFINITY };
        let t_leak = exp_time(u_leak, p.leak_rate());
        let t_loss = exp_time(u_loss, p.loss_rate());
        let t_end = t_leak.min(t_loss).min(t);
        (t_end, !(t_loss < t_leak && t_loss < t), t_leak < t_loss && t_leak < t)
    } else {
        (0.0, true, false)
    };
    let signal = poisson_quantile(p.efficiency * p.scattering_rate() * t_bright, u_sig);
    let background = poisson_quantile(p.background_rate * t, u_bg);
    (signal + background, survived, leaked)
}

/// NDRO of one qubit: counts at or above `threshold` read as `|1⟩`; an atom
/// missing from the verification image reads as lost.
pub fn ndro_shot<R: Rng + ?Sized>(
    outcome: Basis,
    spectator: bool,
    p: &NdroParams,
    threshold: u64,
    rng: &mut R,
) -> ShotOutcome {
    let (count, survived, leaked) = ndro_physics(NdroInput::from_qubit(outcome, spectator), p, rng);
    let detected = if !survived {
        Detection::Lost
    } else if count >= threshold {
        Detection::One
    } else {
        Detection::Zero
    };
    ShotOutcome { present: true, outcome: Some(outcome), count, survived, leaked, detected }
}

/// Photon-count histograms of the bright and dark reference populations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub bright: Vec<f64>,
    pub dark: Vec<f64>,
}

impl CountHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    fn bump(v: &mut Vec<f64>, k: u64, w: f64) {
        let k = k as usize;
        if v.len() <= k {
            v.resize(k + 1, 0.0);
        }
        v[k] += w;
    }

    pub fn add_bright(&mut self, count: u64) {
        Self::bump(&mut self.bright, count, 1.0);
    }

    pub fn add_dark(&mut self, count: u64) {
        Self::bump(&mut self.dark, count, 1.0);
    }

    /// Builds a histogram from explicit bin weights.
    pub fn from_weights(bright: Vec<f64>, dark: Vec<f64>) -> Self {
        Self { bright, dark }
    }

    pub fn merge(mut self, other: &Self) -> Self {
        for (k, &w) in other.bright.iter().enumerate() {
            Self::bump(&mut self.bright, k as u64, w);
        }
        for (k, &w) in other.dark.iter().enumerate() {
            Self::bump(&mut self.dark, k as u64, w);
        }
        self
    }

    pub fn bright_total(&self) -> f64 {
        self.bright.iter().sum()
    }

    pub fn dark_total(&self) -> f64 {
        self.dark.iter().sum()
    }

    pub fn bins(&self) -> usize {
        self.bright.len().max(self.dark.len())
    }

    /// `count,bright_freq,dark_freq` rows with frequencies normalized per population.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let (nb, nd) = (self.bright_total().max(1.0), self.dark_total().max(1.0));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["count", "bright_freq", "dark_freq"])?;
        for k in 0..self.bins() {
            let b = self.bright.get(k).copied().unwrap_or(0.0) / nb;
            let d = self.dark.get(k).copied().unwrap_or(0.0) / nd;
            w.write_record([k.to_string(), format!("{b:.9}"), format!("{d:.9}")])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Discrimination threshold maximizing `1 − (P_fp + P_fn)/2`, scanning every
/// integer cut; ties go to the lowest threshold.
pub fn optimize_threshold(h: &CountHistogram) -> Result<(u64, f64)> {
    let (nb, nd) = (h.bright_total(), h.dark_total());
    if !(nb > 0.0 && nd > 0.0) {
        return Err(Error::InsufficientData("both histogram populations must be non-empty".into()));
    }
    let bins = h.bins();
    let at = |v: &Vec<f64>, k: usize| v.get(k).copied().unwrap_or(0.0);
    // tails summed from the small end so far-tail probabilities keep precision
    let mut dark_tail = vec![0.0; bins + 1];
    for k in (0..bins).rev() {
        dark_tail[k] = dark_tail[k + 1] + at(&h.dark, k);
    }
    let mut bright_head = 0.0;
    // threshold k: dark ≥ k is a false positive, bright < k a false negative
    let mut best = (0u64, dark_tail[0] * nb);
    for (k, tail) in dark_tail.iter().enumerate().skip(1) {
        bright_head += at(&h.bright, k - 1);
        let err = tail * nb + bright_head * nd;
        if err < best.1 * (1.0 - 1e-13) {
            best = (k as u64, err);
        }
    }
    let fidelity = 1.0 - best.1 / (nb * nd) / 2.0;
    Ok((best.0, fidelity))
}

/// Discrimination fidelity at a fixed threshold.
pub fn threshold_fidelity(h: &CountHistogram, threshold: u64) -> f64 {
    let (nb, nd) = (h.bright_total(), h.dark_total());
    let k = threshold as usize;
    let fp: f64 = h.dark.iter().skip(k).sum();
    let fn_: f64 = h.bright.iter().take(k).sum();
    1.0 - (fp / nd + fn_ / nb) / 2.0
}

/// Integer tallies of one NDRO characterization point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NdroTally {
    pub histogram: CountHistogram,
    /// `|1⟩`-prepared shots and their outcomes.
    pub upper_shots: u64,
    pub upper_survived: u64,
    pub upper_leaked: u64,
    /// Counts of each `|1⟩`-prepared survivor, for thresholding afterwards.
    pub upper_counts: Vec<u64>,
    /// Counts of each `|0⟩`-prepared atom (all survive).
    pub lower_counts: Vec<u64>,
}

impl NdroTally {
    fn merge(mut self, o: Self) -> Self {
        self.histogram = self.histogram.merge(&o.histogram);
        self.upper_shots += o.upper_shots;
        self.upper_survived += o.upper_survived;
        self.upper_leaked += o.upper_leaked;
        self.upper_counts.extend(o.upper_counts);
        self.lower_counts.extend(o.lower_counts);
        self
    }
}

/// Simulates `shots` atoms of each reference population. Shot `i` of a
/// population always uses the same stream, whatever the parameters.
pub fn ndro_tally(p: &NdroParams, shots: u64, seed: u64, pool: Option<&rayon::ThreadPool>) -> NdroTally {
    let chunk = 4096u64;
    let chunks: Vec<u64> = (0..shots.div_ceil(chunk)).collect();
    let run = |c: &u64| {
        let mut t = NdroTally::default();
        for i in c * chunk..((c + 1) * chunk).min(shots) {
            let mut rng = stream(seed, Domain::NdroShot, &[0, i]);
            let (count, survived, _) = ndro_physics(NdroInput::Stretched, p, &mut rng);
            if survived {
                t.histogram.add_bright(count);
            }
            let mut rng = stream(seed, Domain::NdroShot, &[1, i]);
            let (count, _, _) = ndro_physics(NdroInput::Dark, p, &mut rng);
            t.histogram.add_dark(count);
            t.lower_counts.push(count);
            let mut rng = stream(seed, Domain::NdroShot, &[2, i]);
            let (count, survived, leaked) = ndro_physics(NdroInput::Upper, p, &mut rng);
            t.upper_shots += 1;
            if survived {
                t.upper_survived += 1;
                t.upper_counts.push(count);
            }
            if leaked {
                t.upper_leaked += 1;
            }
        }
        t
    };
    let parts: Vec<NdroTally> = match pool {
        Some(pool) => pool.install(|| chunks.par_iter().map(run).collect()),
        None => chunks.iter().map(run).collect(),
    };
    parts.into_iter().fold(NdroTally::default(), NdroTally::merge)
}

/// One row of an NDRO duration or depth sweep, with binomial standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdroPoint {
    pub duration_ms: f64,
    pub depth_mk: f64,
    pub threshold: u64,
    pub fidelity: f64,
    pub survival: f64,
    pub survival_se: f64,
    pub p_det_conditional: f64,
    pub p_det_se: f64,
    pub leakage: f64,
    pub leakage_se: f64,
    /// `|0⟩`-prepared atoms read as `|1⟩` at the threshold (all survive).
    pub false_bright: f64,
    pub mean_bright_counts: f64,
    pub mean_dark_counts: f64,
}

fn binomial(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let p = k as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

fn mean_of(h: &[f64]) -> f64 {
    let n: f64 = h.iter().sum();
    if n == 0.0 {
        return 0.0;
    }
    h.iter().enumerate().map(|(k, w)| k as f64 * w).sum::<f64>() / n
}

/// Characterizes one parameter point: threshold and fidelity from the
/// reference histograms, plus survival, leakage and loss-corrected detection
/// of `|1⟩`-prepared atoms.
pub fn ndro_point(p: &NdroParams, shots: u64, seed: u64, pool: Option<&rayon::ThreadPool>) -> Result<(NdroPoint, NdroTally)> {
    if shots == 0 {
        return Err(Error::InvalidParameter("at least one shot per point".into()));
    }
    let tally = ndro_tally(p, shots, seed, pool);
    let (threshold, fidelity) = optimize_threshold(&tally.histogram)?;
    let detected = tally.upper_counts.iter().filter(|&&c| c >= threshold).count() as u64;
    let false_bright = tally.lower_counts.iter().filter(|&&c| c >= threshold).count() as f64 / shots as f64;
    let (survival, survival_se) = binomial(tally.upper_survived, tally.upper_shots);
    let (p_det, p_det_se) = binomial(detected, tally.upper_survived);
    let (leakage, leakage_se) = binomial(tally.upper_leaked, tally.upper_shots);
    let point = NdroPoint {
        duration_ms: p.duration * 1e3,
        depth_mk: p.trap_depth,
        threshold,
        fidelity,
        survival,
        survival_se,
        p_det_conditional: p_det,
        p_det_se,
        leakage,
        leakage_se,
        false_bright,
        mean_bright_counts: mean_of(&tally.histogram.bright),
        mean_dark_counts: mean_of(&tally.histogram.dark),
    };
    Ok((point, tally))
}

pub fn ndro_sweep(durations: &[f64], p: &NdroParams, shots: u64, seed: u64, pool: Option<&rayon::ThreadPool>) -> Result<Vec<NdroPoint>> {
    durations
        .iter()
        .map(|&t| ndro_point(&p.with_duration(t), shots, seed, pool).map(|r| r.0))
        .collect()
}

pub fn depth_sweep(depths: &[f64], p: &NdroParams, shots: u64, seed: u64, pool: Option<&rayon::ThreadPool>) -> Result<Vec<NdroPoint>> {
    if let Some(d) = depths.iter().find(|&&d| !(d > 0.0)) {
        return Err(Error::InvalidParameter(format!("trap depth {d} mK must be positive")));
    }
    depths
        .iter()
        .map(|&u| ndro_point(&p.with_depth(u), shots, seed, pool).map(|r| r.0))
        .collect()
}

pub fn write_points_csv<W: Write>(rows: &[NdroPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
