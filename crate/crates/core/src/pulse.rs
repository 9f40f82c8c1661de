//! BB1 composite-pulse expansion and rotating-frame evolution of resonant
//! microwave pulses under amplitude error and quasi-static detuning.
//!
//! A pulse's `phase` is the synthesizer (DDS) phase; the rotation axis sits at
//! `−phase` on the Bloch-sphere equator. With that convention the Clifford
//! recipes reproduce their reference unitaries and a virtual z-rotation by `α`
//! is a `+α` shift of every later DDS phase.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::su2::{rotation, rotation_z, Unitary2};

/// A drive pulse independent of the Rabi frequency: DDS phase and area (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse<T> {
    pub area: T,
    pub phase: T,
}

impl<T: Real> Pulse<T> {
    pub fn new(area: T, phase: T) -> Self {
        Self { area, phase }
    }

    /// Ideal rotation implemented by this pulse.
    pub fn ideal(&self) -> Unitary2<T> {
        rotation(-self.phase, self.area)
    }

    pub fn at_rabi(self, rabi: T) -> PhysicalPulse<T> {
        PhysicalPulse { phase: self.phase, area: self.area, rabi }
    }
}

/// A resonant rotation driven at nominal Rabi frequency `rabi` (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalPulse<T> {
    pub phase: T,
    pub area: T,
    pub rabi: T,
}

impl<T: Real> PhysicalPulse<T> {
    pub fn new(phase: T, area: T, rabi: T) -> Self {
        Self { phase, area, rabi }
    }

    /// Nominal duration `θ/Ω`.
    pub fn duration(&self) -> T {
        self.area / self.rabi
    }

    pub fn spec(&self) -> Pulse<T> {
        Pulse::new(self.area, self.phase)
    }
}

/// Static error seen by every pulse of one shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseNoise<T> {
    /// Relative amplitude error: the actual Rabi frequency is `Ω(1+ε)`.
    pub amplitude_error: T,
    /// Drive detuning δ in rad/s.
    pub detuning: T,
}

impl<T: Real> PulseNoise<T> {
    pub fn new(amplitude_error: T, detuning: T) -> Self {
        Self { amplitude_error, detuning }
    }

    pub fn none() -> Self {
        Self { amplitude_error: T::zero(), detuning: T::zero() }
    }
}

impl<T: Real> Default for PulseNoise<T> {
    fn default() -> Self {
        Self::none()
    }
}

/// BB1 correction angle `arccos(−θ/4π)`.
pub fn bb1_beta<T: Real>(area: T) -> T {
    (-area / (T::lit(4.0) * T::PI())).acos()
}

/// Replaces one rotation by the four-pulse BB1 train, base pulse first:
/// `θ_φ`, `π_{φ+β}`, `2π_{φ+3β}`, `π_{φ+β}`. A zero-area pulse expands to nothing.
pub fn bb1_expand<T: Real>(p: &PhysicalPulse<T>) -> Result<Vec<PhysicalPulse<T>>> {
    let four_pi = T::lit(4.0) * T::PI();
    if !p.area.is_finite() || p.area < T::zero() || p.area > four_pi {
        return Err(Error::Bb1Area(p.area.to_f64().unwrap_or(f64::NAN)));
    }
    if p.area == T::zero() {
        return Ok(Vec::new());
    }
    let beta = bb1_beta(p.area);
    let pi = T::PI();
    let three = T::lit(3.0);
    Ok(vec![
        *p,
        PhysicalPulse::new(p.phase + beta, pi, p.rabi),
        PhysicalPulse::new(p.phase + three * beta, pi + pi, p.rabi),
        PhysicalPulse::new(p.phase + beta, pi, p.rabi),
    ])
}

/// Constant-drive two-level evolution for the pulse's nominal duration.
pub fn simulate_pulse<T: Real>(p: &PhysicalPulse<T>, n: &PulseNoise<T>) -> Unitary2<T> {
    if n.amplitude_error == T::zero() && n.detuning == T::zero() {
        return rotation(-p.phase, p.area);
    }
    let t = p.duration();
    let drive = p.rabi * (T::one() + n.amplitude_error);
    let gen = drive.hypot(n.detuning);
    if gen == T::zero() {
        return Unitary2::identity();
    }
    let (s, c) = (gen * t / T::lit(2.0)).sin_cos();
    let axis = -p.phase;
    let (nx, ny, nz) = (drive / gen * axis.cos(), drive / gen * axis.sin(), n.detuning / gen);
    // cos·I − i·sin·(n·σ)
    Unitary2::new(
        Complex::new(c, -s * nz),
        Complex::new(-s * ny, -s * nx),
        Complex::new(s * ny, -s * nx),
        Complex::new(c, s * nz),
    )
}

/// Free precession at detuning `δ` for `duration` seconds (`exp(−iδt σz/2)`).
pub fn free_evolution<T: Real>(detuning: T, duration: T) -> Unitary2<T> {
    rotation_z(detuning * duration)
}

/// Time-ordered product of the pulse train, optionally BB1-expanded per pulse.
/// The detuning is held fixed across the whole train.
pub fn simulate_sequence<T: Real>(pulses: &[PhysicalPulse<T>], n: &PulseNoise<T>, bb1: bool) -> Result<Unitary2<T>> {
    let mut u = Unitary2::identity();
    for p in pulses {
        if bb1 {
            for q in bb1_expand(p)? {
                u = simulate_pulse(&q, n) * u;
            }
        } else {
            u = simulate_pulse(p, n) * u;
        }
    }
    Ok(u)
}

/// Total area (rad) of a pulse after optional BB1 expansion.
pub fn expanded_area<T: Real>(area: T, bb1: bool) -> T {
    if bb1 && area > T::zero() {
        area + T::lit(4.0) * T::PI()
    } else {
        area
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use proptest::prelude::*;

    use super::*;
    use crate::su2::{apply, equal_up_to_global_phase, phase_aligned_distance, QubitState};

    const RABI: f64 = 2.0 * PI * 9600.0;

    /// Independent oracle: scaling-and-squaring Taylor exponential of −iHt.
    fn expm_oracle(h: [[Complex<f64>; 2]; 2], t: f64) -> Unitary2<f64> {
        let a = h.map(|row| row.map(|x| x * Complex::new(0.0, -t)));
        let norm: f64 = a.iter().flatten().map(|x| x.norm()).sum();
        let k = (norm.log2().ceil().max(0.0) as i32) + 4;
        let scale = 0.5f64.powi(k);
        let m = Unitary2::new(a[0][0] * scale, a[0][1] * scale, a[1][0] * scale, a[1][1] * scale);
        let mut term = Unitary2::identity();
        let mut sum = Unitary2::identity();
        for n in 1..30 {
            term = (term * m).scale(Complex::new(1.0 / n as f64, 0.0));
            for i in 0..4 {
                sum.m[i] += term.m[i];
            }
        }
        for _ in 0..k {
            sum = sum * sum;
        }
        sum
    }

    fn transfer_error_bb1(eps: f64, phase: f64) -> f64 {
        let p = PhysicalPulse::new(phase, PI, RABI);
        let u = simulate_sequence(&[p], &PulseNoise::new(eps, 0.0), true).unwrap();
        apply(&u, &QubitState::zero()).c0.norm_sqr()
    }

    fn transfer_error_bare(eps: f64) -> f64 {
        let u = simulate_pulse(&PhysicalPulse::new(0.0, PI, RABI), &PulseNoise::new(eps, 0.0));
        apply(&u, &QubitState::zero()).c0.norm_sqr()
    }

    fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
        let n = lx.len() as f64;
        let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
        let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn bb1_angles_for_pi() {
        let p = PhysicalPulse::new(0.0, PI, RABI);
        let v = bb1_expand(&p).unwrap();
        let beta = (-0.25f64).acos();
        assert!((beta - 1.823_476_581_936_975).abs() < 1e-12);
        let expect = [(0.0, PI), (beta, PI), (3.0 * beta, 2.0 * PI), (beta, PI)];
        for (q, (ph, a)) in v.iter().zip(expect) {
            assert!((q.phase - ph).abs() < 1e-15 && (q.area - a).abs() < 1e-15);
        }
        let net = simulate_sequence(&[p], &PulseNoise::none(), true).unwrap();
        assert!(equal_up_to_global_phase(&net, &rotation(0.0, PI), 1e-10));
    }

    #[test]
    fn bb1_angle_for_half_pi_and_zero_area() {
        let v = bb1_expand(&PhysicalPulse::new(0.0, FRAC_PI_2, RABI)).unwrap();
        assert!((v[1].phase - 1.696_124_157_962_962_2).abs() < 1e-12);
        assert!(bb1_expand(&PhysicalPulse::new(0.3, 0.0, RABI)).unwrap().is_empty());
        assert!(matches!(bb1_expand(&PhysicalPulse::new(0.0, 4.5 * PI, RABI)), Err(Error::Bb1Area(_))));
    }

    #[test]
    fn noiseless_pulse_is_ideal_rotation() {
        let p = PhysicalPulse::new(0.7, 1.3, RABI);
        assert_eq!(simulate_pulse(&p, &PulseNoise::none()), rotation(-0.7, 1.3));
    }

    #[test]
    fn bare_amplitude_error_population() {
        let err = transfer_error_bare(0.1);
        let expect = (0.05 * PI).sin().powi(2);
        assert!((err - expect).abs() < 1e-14);
        assert!((expect - 0.024_471_741_852_423).abs() < 1e-12);
    }

    #[test]
    fn detuned_pi_pulse_matches_matrix_exponential() {
        let delta = RABI;
        let p = PhysicalPulse::new(0.0, PI, RABI);
        let u = simulate_pulse(&p, &PulseNoise::new(0.0, delta));
        // H = (Ω σx + δ σz)/2 with the axis at φ=0
        let h = [
            [Complex::new(delta / 2.0, 0.0), Complex::new(RABI / 2.0, 0.0)],
            [Complex::new(RABI / 2.0, 0.0), Complex::new(-delta / 2.0, 0.0)],
        ];
        let oracle = expm_oracle(h, p.duration());
        assert!(u.max_abs_diff(&oracle) < 1e-12);
        let transfer = apply(&u, &QubitState::zero()).p1();
        let expect = 0.5 * (PI / 2.0f64.sqrt()).sin().powi(2);
        assert!((transfer - expect).abs() < 1e-12);
    }

    #[test]
    fn general_axis_matches_matrix_exponential() {
        let (phase, eps, delta) = (0.9, -0.04, 850.0);
        let p = PhysicalPulse::new(phase, 2.2, RABI);
        let drive = RABI * (1.0 + eps);
        let axis = -phase;
        let h = [
            [Complex::new(delta / 2.0, 0.0), Complex::from_polar(drive / 2.0, -axis)],
            [Complex::from_polar(drive / 2.0, axis), Complex::new(-delta / 2.0, 0.0)],
        ];
        let u = simulate_pulse(&p, &PulseNoise::new(eps, delta));
        assert!(u.max_abs_diff(&expm_oracle(h, p.duration())) < 1e-12);
    }

    #[test]
    fn empty_sequence_is_identity() {
        let u = simulate_sequence::<f64>(&[], &PulseNoise::new(0.1, 40.0), true).unwrap();
        assert_eq!(u, Unitary2::identity());
    }

    #[test]
    fn bb1_suppresses_ten_percent_amplitude_error() {
        let err = transfer_error_bb1(0.1, 0.0);
        assert!(err < 1e-4, "bb1 error {err}");
        assert!(transfer_error_bare(0.1) > 0.024);
    }

    #[test]
    fn bb1_error_is_sixth_order() {
        let eps: Vec<f64> = (0..=10).map(|k| 1e-3 * 10f64.powf(k as f64 / 10.0)).collect();
        for phase in [0.0, 0.8, -2.1] {
            let errs: Vec<f64> = eps.iter().map(|&e| transfer_error_bb1(e, phase)).collect();
            let slope = loglog_slope(&eps, &errs);
            assert!((slope - 6.0).abs() <= 0.3, "phase {phase}: slope {slope}");
            assert!(transfer_error_bb1(0.1, phase) < 2e-4);
        }
        let bare: Vec<f64> = eps.iter().map(|&e| transfer_error_bare(e)).collect();
        let slope = loglog_slope(&eps, &bare);
        assert!((slope - 2.0).abs() <= 0.1, "bare slope {slope}");
    }

    #[test]
    fn literal_three_phi_plus_beta_loses_suppression() {
        // A 2π pulse is −I at any phase, so the alternative reading R_{3φ+β}(2π)
        // only shows up once the amplitude is wrong.
        let (phi, eps): (f64, f64) = (0.8, 1e-2);
        let beta = bb1_beta(PI);
        let p = |ph: f64, a: f64| PhysicalPulse::new(ph, a, RABI);
        let alt = [p(phi, PI), p(phi + beta, PI), p(3.0 * phi + beta, 2.0 * PI), p(phi + beta, PI)];
        let u = simulate_sequence(&alt, &PulseNoise::new(eps, 0.0), false).unwrap();
        let alt_err = apply(&u, &QubitState::zero()).c0.norm_sqr();
        assert!(alt_err > 1e3 * transfer_error_bb1(eps, phi), "alt {alt_err}");
    }

    proptest! {
        #[test]
        fn bb1_is_exact_without_noise(phase in -4.0..4.0f64, half_turns in 0usize..2) {
            let area = if half_turns == 0 { FRAC_PI_2 } else { PI };
            let p = PhysicalPulse::new(phase, area, RABI);
            let u = simulate_sequence(&[p], &PulseNoise::none(), true).unwrap();
            prop_assert!(phase_aligned_distance(&u, &rotation(-phase, area)) < 1e-10);
        }

        #[test]
        fn phase_covariance(phase in -4.0..4.0f64, chi in -4.0..4.0f64, area in 0.1..6.3f64, eps in -0.1..0.1f64) {
            let n = PulseNoise::new(eps, 0.0);
            let shifted = simulate_pulse(&PhysicalPulse::new(phase + chi, area, RABI), &n);
            let base = simulate_pulse(&PhysicalPulse::new(phase, area, RABI), &n);
            // axis = −phase, so a DDS shift of χ is a frame rotation by −χ
            prop_assert!(equal_up_to_global_phase(&shifted, &base.conjugate_by_z(-chi), 1e-12));
            prop_assert!(equal_up_to_global_phase(&shifted, &(rotation_z(-chi) * base * rotation_z(chi)), 1e-12));
        }

        #[test]
        fn simulated_pulses_are_unitary(phase in -4.0..4.0f64, area in 0.0..12.0f64, eps in -0.5..0.5f64, delta in -5e4..5e4f64) {
            let u = simulate_pulse(&PhysicalPulse::new(phase, area, RABI), &PulseNoise::new(eps, delta));
            prop_assert!(u.is_unitary(1e-12));
        }
    }
}
