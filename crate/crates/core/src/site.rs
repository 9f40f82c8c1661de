//! Per-site physical parameters and the stochastic processes that act on a
//! single atom: loading, preparation, quasi-static detuning and slow loss.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::{free_evolution, simulate_pulse, PhysicalPulse, PulseNoise};
use crate::rng::{stream, Domain};
use crate::scalar::Real;
use crate::su2::{apply, rotation, QubitState};

/// Array geometry and parameter distributions, in SI units (rad/s, s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing_um: f64,
    /// Mean Rabi frequency (rad/s).
    pub rabi: f64,
    /// Peak-to-peak relative Rabi variation, `max/min − 1`.
    pub rabi_spread: f64,
    pub t2star: f64,
    /// Site-to-site standard deviation of T₂*.
    pub t2star_spread: f64,
    /// Mean static detuning offset (rad/s).
    pub stark_offset: f64,
    /// Site-to-site standard deviation of the offset (rad/s).
    pub stark_spread: f64,
    pub load_prob: f64,
    pub prep_fidelity: f64,
    pub trap_lifetime: f64,
    pub sequence_survival: f64,
    pub seed: u64,
}

impl ArrayConfig {
    /// Large-array defaults: 15×15 sites at 8 µm, 9.6 kHz Rabi frequency with
    /// 3% variation, T₂* = 14.09(0.8) ms, loading 0.55, preparation 0.971,
    /// lifetime 9.7 s, sequence survival 0.93.
    pub fn paper_defaults(seed: u64) -> Self {
        Self {
            rows: 15,
            cols: 15,
            spacing_um: 8.0,
            rabi: std::f64::consts::TAU * 9600.0,
            rabi_spread: 0.03,
            t2star: 14.09e-3,
            t2star_spread: 0.8e-3,
            stark_offset: 0.0,
            stark_spread: 0.0,
            load_prob: 0.55,
            prep_fidelity: 0.971,
            trap_lifetime: 9.7,
            sequence_survival: 0.93,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.rows == 0 || self.cols == 0 {
            return bad("array needs at least one row and one column");
        }
        if !(self.rabi > 0.0 && self.rabi.is_finite()) {
            return bad("rabi frequency must be positive");
        }
        if !(self.rabi_spread >= 0.0 && self.rabi_spread < 1.0) {
            return bad("rabi spread must lie in [0, 1)");
        }
        if !(self.t2star > 0.0) || !(self.t2star_spread >= 0.0) {
            return bad("T2* must be positive with non-negative spread");
        }
        if !self.stark_offset.is_finite() || !(self.stark_spread >= 0.0) {
            return bad("stark offset must be finite with non-negative spread");
        }
        for (name, p) in [
            ("load probability", self.load_prob),
            ("preparation fidelity", self.prep_fidelity),
            ("sequence survival", self.sequence_survival),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.trap_lifetime > 0.0) {
            return bad("trap lifetime must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteModel {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub rabi: f64,
    pub t2star: f64,
    /// Static detuning offset δ₀ (rad/s).
    pub stark_offset: f64,
    pub load_prob: f64,
    pub prep_fidelity: f64,
    pub trap_lifetime: f64,
    pub sequence_survival: f64,
}

impl SiteModel {
    /// Relative amplitude error of pulses calibrated to the array mean.
    pub fn amplitude_error(&self, nominal_rabi: f64) -> f64 {
        self.rabi / nominal_rabi - 1.0
    }

    /// Quasi-static detuning for one shot: static offset plus a dephasing draw.
    pub fn shot_detuning<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.stark_offset + sample_detuning(self.t2star, rng)
    }
}

/// Smooth quadratic profile over normalized coordinates, rescaled so the
/// peak-to-peak ratio is exactly `1 + spread` and the mean is exactly `mean`.
fn rabi_profile(cfg: &ArrayConfig) -> Vec<f64> {
    let n = cfg.rows * cfg.cols;
    let mut rng = stream(cfg.seed, Domain::Array, &[0]);
    let coef: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = |k: usize, len: usize| if len > 1 { 2.0 * k as f64 / (len - 1) as f64 - 1.0 } else { 0.0 };
    let v: Vec<f64> = (0..n)
        .map(|i| {
            let (x, y) = (norm(i % cfg.cols, cfg.cols), norm(i / cfg.cols, cfg.rows));
            coef[0] * x + coef[1] * y + coef[2] * x * x + coef[3] * x * y + coef[4] * y * y
        })
        .collect();
    let m = v.iter().sum::<f64>() / n as f64;
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - m;
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - m;
    let s = cfg.rabi_spread;
    if s == 0.0 || hi - lo < 1e-12 {
        return vec![cfg.rabi; n];
    }
    // (1 + c·hi) = (1 + s)(1 + c·lo)
    let c = s / (hi - (1.0 + s) * lo);
    v.iter().map(|x| cfg.rabi * (1.0 + c * (x - m))).collect()
}

pub fn build_array(cfg: &ArrayConfig) -> Result<Vec<SiteModel>> {
    cfg.validate()?;
    let rabi = rabi_profile(cfg);
    let sites = (0..cfg.rows * cfg.cols)
        .map(|i| {
            let t2star = if cfg.t2star_spread > 0.0 {
                let mut rng = stream(cfg.seed, Domain::Array, &[1, i as u64]);
                let d = Normal::new(cfg.t2star, cfg.t2star_spread).expect("finite spread");
                loop {
                    let x = d.sample(&mut rng);
                    if x > 0.0 {
                        break x;
                    }
                }
            } else {
                cfg.t2star
            };
            let stark_offset = if cfg.stark_spread > 0.0 {
                let mut rng = stream(cfg.seed, Domain::Array, &[2, i as u64]);
                Normal::new(cfg.stark_offset, cfg.stark_spread).expect("finite spread").sample(&mut rng)
            } else {
                cfg.stark_offset
            };
            SiteModel {
                index: i,
                row: i / cfg.cols,
                col: i % cfg.cols,
                rabi: rabi[i],
                t2star,
                stark_offset,
                load_prob: cfg.load_prob,
                prep_fidelity: cfg.prep_fidelity,
                trap_lifetime: cfg.trap_lifetime,
                sequence_survival: cfg.sequence_survival,
            }
        })
        .collect();
    Ok(sites)
}

/// Ramsey coherence `0.5 + 0.5·[1 + 0.95(t/T₂*)²]^{−3/2}`.
pub fn coherence_alpha<T: Real>(t: T, t2: T) -> T {
    let half = T::lit(0.5);
    let x = t / t2;
    half + half * (T::one() + T::lit(0.95) * x * x).powf(T::lit(-1.5))
}

/// Per-gate error `[1 − α(⟨θ⟩/Ω, T₂*)]/2`.
pub fn predicted_gate_error<T: Real>(rabi: T, t2: T, avg_area: T) -> T {
    (T::one() - coherence_alpha(avg_area / rabi, t2)) / T::lit(2.0)
}

/// Quasi-static detuning whose characteristic function is exactly
/// `[1 + 0.95(t/T₂*)²]^{−3/2}`: the difference of two Gamma(3/2) variables
/// scaled by `√0.95/T₂*`.
pub fn sample_detuning<R: Rng + ?Sized>(t2: f64, rng: &mut R) -> f64 {
    if !t2.is_finite() {
        return 0.0;
    }
    let g = Gamma::new(1.5, 1.0).expect("valid shape");
    let s = 0.95f64.sqrt() / t2;
    s * (g.sample(rng) - g.sample(rng))
}

/// Occupation of a site after loading and optical pumping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Atom {
    Empty,
    /// Coherent qubit prepared in `|1⟩`.
    Qubit,
    /// Mis-pumped F=4 atom outside the qubit subspace: gate-inert.
    Spectator,
}

pub fn prepare_atom<R: Rng + ?Sized>(site: &SiteModel, rng: &mut R) -> Atom {
    if !rng.random_bool(site.load_prob) {
        Atom::Empty
    } else if rng.random_bool(site.prep_fidelity) {
        Atom::Qubit
    } else {
        Atom::Spectator
    }
}

/// Whether the atom survives the fixed-length gate window.
pub fn sequence_survival<R: Rng + ?Sized>(site: &SiteModel, rng: &mut R) -> bool {
    rng.random_bool(site.sequence_survival)
}

/// Upper-state population after a Ramsey sequence started in `|1⟩`: two π/2
/// pulses around a free evolution of `t` seconds at detuning `delta`. With
/// `rabi = None` the pulses are instantaneous.
pub fn ramsey_flip_probability(delta: f64, t: f64, rabi: Option<f64>) -> f64 {
    let half = std::f64::consts::FRAC_PI_2;
    let pulse = match rabi {
        Some(r) => simulate_pulse(&PhysicalPulse::new(0.0, half, r), &PulseNoise::new(0.0, delta)),
        None => rotation(0.0, half),
    };
    let u = pulse * free_evolution(delta, t) * pulse;
    apply(&u, &QubitState::one()).p0()
}

/// Population transferred out of `|0⟩` after driving for `t` seconds.
pub fn rabi_transfer_probability(site: &SiteModel, nominal_rabi: f64, delta: f64, t: f64) -> f64 {
    let p = PhysicalPulse::new(0.0, nominal_rabi * t, nominal_rabi);
    let u = simulate_pulse(&p, &PulseNoise::new(site.amplitude_error(nominal_rabi), delta));
    apply(&u, &QubitState::zero()).p1()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{PI, TAU};

    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn site(cfg: &ArrayConfig) -> SiteModel {
        build_array(cfg).unwrap().remove(0)
    }

    fn single(seed: u64) -> ArrayConfig {
        ArrayConfig { rows: 1, cols: 1, ..ArrayConfig::paper_defaults(seed) }
    }

    #[test]
    fn single_site_zero_spread_has_means() {
        let cfg = ArrayConfig { rabi_spread: 0.0, t2star_spread: 0.0, ..single(1) };
        let s = site(&cfg);
        assert_eq!((s.rabi, s.t2star, s.stark_offset), (cfg.rabi, cfg.t2star, 0.0));
        // a 1×1 array has no spatial variation even with a configured spread
        let s = site(&ArrayConfig { t2star_spread: 0.0, ..single(1) });
        assert_eq!(s.rabi, cfg.rabi);
    }

    #[test]
    fn rabi_spread_is_exact_and_mean_preserved() {
        let cfg = ArrayConfig::paper_defaults(42);
        let sites = build_array(&cfg).unwrap();
        assert_eq!(sites.len(), 225);
        let max = sites.iter().map(|s| s.rabi).fold(0.0, f64::max);
        let min = sites.iter().map(|s| s.rabi).fold(f64::INFINITY, f64::min);
        assert!(max / min - 1.0 <= 0.03 + 1e-9);
        assert!((max / min - 1.0 - 0.03).abs() < 1e-9);
        let mean = sites.iter().map(|s| s.rabi).sum::<f64>() / 225.0;
        assert!((mean / cfg.rabi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rabi_profile_is_smooth() {
        let sites = build_array(&ArrayConfig::paper_defaults(9)).unwrap();
        // neighbouring sites differ by far less than the full spread
        for s in &sites {
            if s.col + 1 < 15 {
                let n = &sites[s.index + 1];
                assert!((n.rabi / s.rabi - 1.0).abs() < 0.01);
            }
        }
    }

    #[test]
    fn t2_distribution_statistics() {
        let cfg = ArrayConfig { rows: 40, cols: 40, ..ArrayConfig::paper_defaults(4) };
        let t2: Vec<f64> = build_array(&cfg).unwrap().iter().map(|s| s.t2star).collect();
        let n = t2.len() as f64;
        let mean = t2.iter().sum::<f64>() / n;
        let sd = (t2.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - 14.09e-3).abs() < 5.0 * 0.8e-3 / n.sqrt());
        assert!((sd / 0.8e-3 - 1.0).abs() < 0.1);
    }

    #[test]
    fn build_is_deterministic_and_validated() {
        let cfg = ArrayConfig::paper_defaults(5);
        assert_eq!(build_array(&cfg).unwrap(), build_array(&cfg).unwrap());
        assert_ne!(build_array(&cfg).unwrap(), build_array(&ArrayConfig::paper_defaults(6)).unwrap());
        let bad = ArrayConfig { rows: 0, ..cfg.clone() };
        assert!(matches!(build_array(&bad), Err(Error::InvalidParameter(_))));
        let bad = ArrayConfig { load_prob: 1.5, ..cfg };
        assert!(build_array(&bad).is_err());
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(coherence_alpha(0.0f64, 0.014), 1.0);
        let a = coherence_alpha(0.014f64, 0.014);
        assert!((a - (0.5 + 0.5 * 1.95f64.powf(-1.5))).abs() < 1e-15);
        assert!((a - 0.6836).abs() < 1e-4);
        assert!((coherence_alpha(1e6f64, 0.014) - 0.5).abs() < 1e-12);
        assert!((coherence_alpha(0.01f32, 0.014f32) - coherence_alpha(0.01, 0.014) as f32).abs() < 1e-6);
    }

    #[test]
    fn predicted_error_examples() {
        let e = predicted_gate_error(TAU * 9600.0, 14.09e-3, 2.95 * PI);
        assert!((3.8e-5..=4.6e-5).contains(&e), "{e}");
        assert!(e > 4.1e-5 && e < 4.35e-5);
        assert_eq!(predicted_gate_error(TAU * 9600.0, f64::INFINITY, 2.95 * PI), 0.0);
        let doubled = predicted_gate_error(TAU * 9600.0, 14.09e-3, 5.9 * PI);
        assert!(doubled > e && (doubled / e - 4.0).abs() < 0.01);
    }

    #[test]
    fn detuning_characteristic_function() {
        let t2 = 14e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 1_000_000;
        let (mut sum, mut sq, mut cos) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let d = sample_detuning(t2, &mut rng);
            sum += d;
            sq += d * d;
            cos += (d * t2).cos();
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = sq / nf - mean * mean;
        // variance of the difference of two Gamma(3/2) is 3
        assert!((var / (3.0 * 0.95 / (t2 * t2)) - 1.0).abs() < 0.01);
        assert!(mean.abs() < 5.0 * (var / nf).sqrt());
        let expect = 2.0 * coherence_alpha(t2, t2) - 1.0;
        assert!((expect - 0.3672).abs() < 1e-4);
        assert!((cos / nf - expect).abs() < 0.01, "{}", cos / nf);
        assert_eq!(sample_detuning(f64::INFINITY, &mut rng), 0.0);
    }

    #[test]
    fn preparation_statistics() {
        let s = site(&single(3));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let draws: Vec<Atom> = (0..n).map(|_| prepare_atom(&s, &mut rng)).collect();
        let occupied = draws.iter().filter(|a| **a != Atom::Empty).count();
        let spectators = draws.iter().filter(|a| **a == Atom::Spectator).count();
        assert!((occupied as f64 / n as f64 - 0.55).abs() < 0.005);
        assert!((spectators as f64 / occupied as f64 - 0.029).abs() < 0.002);
        let perfect = SiteModel { load_prob: 1.0, prep_fidelity: 1.0, ..s };
        assert!((0..1000).all(|_| prepare_atom(&perfect, &mut rng) == Atom::Qubit));
    }

    #[test]
    fn survival_statistics() {
        let s = site(&single(3));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 100_000;
        let k = (0..n).filter(|_| sequence_survival(&s, &mut rng)).count();
        assert!((k as f64 / n as f64 - 0.93).abs() < 0.003);
        let sure = SiteModel { sequence_survival: 1.0, ..s.clone() };
        assert!((0..1000).all(|_| sequence_survival(&sure, &mut rng)));
        // lifetime alone would allow more survival than measured
        assert!((-0.375f64 / 9.7).exp() >= s.sequence_survival);
        assert!(((-0.375f64 / 9.7).exp() - 0.962).abs() < 1e-3);
    }

    #[test]
    fn ramsey_single_shot_limits() {
        assert!((ramsey_flip_probability(0.0, 0.0, None) - 1.0).abs() < 1e-15);
        let d = 1000.0;
        let t = 1e-3;
        assert!((ramsey_flip_probability(d, t, None) - 0.5 * (1.0 + (d * t).cos())).abs() < 1e-12);
        // finite pulses shift the fringe but keep full contrast
        let p = ramsey_flip_probability(0.0, t, Some(TAU * 9600.0));
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rabi_transfer_undamped_on_perfect_site() {
        let cfg = ArrayConfig { rabi_spread: 0.0, ..single(1) };
        let s = site(&cfg);
        let t = PI / cfg.rabi;
        assert!((rabi_transfer_probability(&s, cfg.rabi, 0.0, t) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn alpha_decreasing_and_bounded(t in 0.0..0.1f64, dt in 1e-6..0.1f64, t2 in 1e-3..0.1f64) {
            let a = coherence_alpha(t, t2);
            prop_assert!(a > 0.5 && a <= 1.0);
            prop_assert!(coherence_alpha(t + dt, t2) < a);
        }
    }
}
