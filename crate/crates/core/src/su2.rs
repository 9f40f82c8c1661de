//! Complex 2×2 linear algebra for a single qubit.
//!
//! Conventions: `|0⟩` is the lower clock state (F=3), `|1⟩` the upper one (F=4).
//! A resonant rotation about the equatorial axis at angle `φ` by area `θ` is
//! `exp(−i θ/2 (cos φ σx + sin φ σy))`; z-rotations are `exp(−i θ/2 σz)`.

use std::ops::Mul;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Row-major complex 2×2 matrix; every constructor in this crate yields an SU(2)
/// element up to a global phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Unitary2<T> {
    pub m: [Complex<T>; 4],
}

impl<T: Real> Unitary2<T> {
    pub fn new(a: Complex<T>, b: Complex<T>, c: Complex<T>, d: Complex<T>) -> Self {
        Self { m: [a, b, c, d] }
    }

    pub fn identity() -> Self {
        let (o, z) = (Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero()));
        Self::new(o, z, z, o)
    }

    pub fn pauli_x() -> Self {
        let (o, z) = (Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero()));
        Self::new(z, o, o, z)
    }

    pub fn pauli_y() -> Self {
        let z = Complex::new(T::zero(), T::zero());
        Self::new(z, Complex::new(T::zero(), -T::one()), Complex::new(T::zero(), T::one()), z)
    }

    pub fn pauli_z() -> Self {
        let (o, z) = (Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero()));
        Self::new(o, z, z, -o)
    }

    /// Multiply every entry by a complex scalar.
    pub fn scale(&self, k: Complex<T>) -> Self {
        Self { m: self.m.map(|x| x * k) }
    }

    pub fn dagger(&self) -> Self {
        let [a, b, c, d] = self.m;
        Self::new(a.conj(), c.conj(), b.conj(), d.conj())
    }

    pub fn trace(&self) -> Complex<T> {
        self.m[0] + self.m[3]
    }

    pub fn det(&self) -> Complex<T> {
        self.m[0] * self.m[3] - self.m[1] * self.m[2]
    }

    /// Largest entry-wise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| (*a - *b).norm())
            .fold(T::zero(), T::max)
    }

    /// Checks `U†U = I` entry-wise and `|det U| = 1`, both within `tol`.
    pub fn is_unitary(&self, tol: T) -> bool {
        let g = self.dagger() * *self;
        g.max_abs_diff(&Self::identity()) <= tol && (self.det().norm() - T::one()).abs() <= tol
    }

    /// `Rz(χ)·U·Rz(−χ)`: the effect of shifting the drive phase frame by `χ`.
    pub fn conjugate_by_z(&self, chi: T) -> Self {
        let [a, b, c, d] = self.m;
        let w = Complex::from_polar(T::one(), chi);
        Self::new(a, b * w.conj(), c * w, d)
    }
}

impl<T: Real> Mul for Unitary2<T> {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        let [a, b, c, d] = self.m;
        let [e, f, g, h] = rhs.m;
        Self::new(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)
    }
}

/// Pure single-qubit state `c0|0⟩ + c1|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitState<T> {
    pub c0: Complex<T>,
    pub c1: Complex<T>,
}

impl<T: Real> QubitState<T> {
    /// Builds a state from raw amplitudes, normalizing them.
    ///
    /// Panics if both amplitudes vanish.
    pub fn new(c0: Complex<T>, c1: Complex<T>) -> Self {
        let n = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        assert!(n > T::zero(), "zero state vector");
        Self { c0: c0 / n, c1: c1 / n }
    }

    pub fn zero() -> Self {
        Self { c0: Complex::new(T::one(), T::zero()), c1: Complex::new(T::zero(), T::zero()) }
    }

    pub fn one() -> Self {
        Self { c0: Complex::new(T::zero(), T::zero()), c1: Complex::new(T::one(), T::zero()) }
    }

    pub fn basis(b: Basis) -> Self {
        match b {
            Basis::Zero => Self::zero(),
            Basis::One => Self::one(),
        }
    }

    pub fn norm_sqr(&self) -> T {
        self.c0.norm_sqr() + self.c1.norm_sqr()
    }

    /// Population of `|0⟩`.
    pub fn p0(&self) -> T {
        self.c0.norm_sqr()
    }

    pub fn p1(&self) -> T {
        self.c1.norm_sqr()
    }

    /// Population of the given basis state.
    pub fn population(&self, b: Basis) -> T {
        match b {
            Basis::Zero => self.p0(),
            Basis::One => self.p1(),
        }
    }
}

/// Computational basis label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Zero,
    One,
}

impl Basis {
    pub fn flipped(self) -> Self {
        match self {
            Basis::Zero => Basis::One,
            Basis::One => Basis::Zero,
        }
    }
}

/// `exp(−i θ/2 (cos φ σx + sin φ σy))`.
pub fn rotation<T: Real>(phi: T, theta: T) -> Unitary2<T> {
    let half = theta / T::lit(2.0);
    let (s, c) = half.sin_cos();
    let cc = Complex::new(c, T::zero());
    // −i·s·e^{∓iφ}
    let off = |sign: T| Complex::new(T::zero(), -s) * Complex::from_polar(T::one(), sign * phi);
    Unitary2::new(cc, off(-T::one()), off(T::one()), cc)
}

/// `exp(−i θ/2 σz) = e^{−iθ/2}·diag(1, e^{iθ})`.
pub fn rotation_z<T: Real>(theta: T) -> Unitary2<T> {
    let half = theta / T::lit(2.0);
    let z = Complex::new(T::zero(), T::zero());
    Unitary2::new(Complex::from_polar(T::one(), -half), z, z, Complex::from_polar(T::one(), half))
}

pub fn apply<T: Real>(u: &Unitary2<T>, s: &QubitState<T>) -> QubitState<T> {
    let [a, b, c, d] = u.m;
    QubitState { c0: a * s.c0 + b * s.c1, c1: c * s.c0 + d * s.c1 }
}

/// Distance between `u` and `v` after removing the relative global phase.
///
/// The phase is aligned to `arg Tr(V†U)`; when that trace vanishes the
/// matrices cannot coincide up to phase and no alignment is applied.
pub fn phase_aligned_distance<T: Real>(u: &Unitary2<T>, v: &Unitary2<T>) -> T {
    let tr = (v.dagger() * *u).trace();
    let n = tr.norm();
    let lambda = if n > T::epsilon() { tr / n } else { Complex::new(T::one(), T::zero()) };
    u.max_abs_diff(&v.scale(lambda))
}

pub fn equal_up_to_global_phase<T: Real>(u: &Unitary2<T>, v: &Unitary2<T>, tol: T) -> bool {
    phase_aligned_distance(u, v) <= tol
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn zero_area_is_identity() {
        let u = rotation(0.0, 0.0);
        assert!(u.max_abs_diff(&Unitary2::identity()) < 1e-15);
    }

    #[test]
    fn pi_pulse_about_x_is_gate_8_exactly() {
        // −i·σx
        let expect = Unitary2::new(c(0., 0.), c(0., -1.), c(0., -1.), c(0., 0.));
        assert!(rotation(0.0, PI).max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn half_pi_about_y_matches_gate_4() {
        let r = FRAC_1_SQRT_2;
        let expect = Unitary2::new(c(r, 0.), c(-r, 0.), c(r, 0.), c(r, 0.));
        assert!(equal_up_to_global_phase(&rotation(FRAC_PI_2, FRAC_PI_2), &expect, 1e-12));
    }

    #[test]
    fn z_rotation_examples() {
        assert!(rotation_z(0.0).max_abs_diff(&Unitary2::identity()) < 1e-15);
        let e = C::from_polar(1.0, -FRAC_PI_4);
        let g1 = Unitary2::new(e, c(0., 0.), c(0., 0.), e * c(0., 1.));
        assert!(rotation_z(FRAC_PI_2).max_abs_diff(&g1) < 1e-15);
        let g2 = Unitary2::new(c(0., -1.), c(0., 0.), c(0., 0.), c(0., 1.));
        assert!(rotation_z(PI).max_abs_diff(&g2) < 1e-15);
    }

    #[test]
    fn apply_examples() {
        let s0 = QubitState::<f64>::zero();
        assert_eq!(apply(&Unitary2::identity(), &s0), s0);
        let flipped = apply(&rotation(0.0, PI), &s0);
        assert!(flipped.p0() < 1e-30);
        assert!((flipped.p1() - 1.0).abs() < 1e-15);
        let half = apply(&rotation(0.0, FRAC_PI_2), &s0);
        assert!((half.p0() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn global_phase_comparison() {
        let u = rotation(0.3, 1.1) * rotation_z(0.7);
        let v = u.scale(C::from_polar(1.0, FRAC_PI_4));
        assert!(equal_up_to_global_phase(&u, &v, 1e-9));
        assert!(!equal_up_to_global_phase(&Unitary2::identity(), &Unitary2::pauli_x(), 1e-9));
    }

    #[test]
    fn generic_over_f32() {
        let u: Unitary2<f32> = rotation(0.4f32, 2.0f32);
        assert!(u.is_unitary(1e-6));
        let back = u * rotation(0.4f32, -2.0f32);
        assert!(back.max_abs_diff(&Unitary2::identity()) < 1e-6);
    }

    #[test]
    fn apply_preserves_norm_over_many_random_applications() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0.0f64;
        for _ in 0..1_000_000 {
            let u = rotation(rng.random_range(-PI..PI), rng.random_range(-4.0 * PI..4.0 * PI))
                * rotation_z(rng.random_range(-PI..PI));
            let s = QubitState::new(
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            );
            worst = worst.max((apply(&u, &s).norm_sqr() - 1.0).abs());
        }
        assert!(worst < 1e-12, "worst norm deviation {worst}");
    }

    proptest! {
        #[test]
        fn inverse_rotation(phi in -10.0..10.0f64, theta in -20.0..20.0f64) {
            let p = rotation(phi, theta) * rotation(phi, -theta);
            prop_assert!(p.max_abs_diff(&Unitary2::identity()) < 1e-10);
        }

        #[test]
        fn same_axis_additivity(phi in -10.0..10.0f64, a in -10.0..10.0f64, b in -10.0..10.0f64) {
            let lhs = rotation(phi, a) * rotation(phi, b);
            prop_assert!(lhs.max_abs_diff(&rotation(phi, a + b)) < 1e-10);
        }

        #[test]
        fn z_rotation_from_two_pi_pulses(theta in -10.0..10.0f64) {
            // two π pulses whose axes differ by θ/2 compose to a z-rotation by θ
            let composed = rotation(FRAC_PI_2, PI) * rotation(FRAC_PI_2 - theta / 2.0, PI);
            prop_assert!(equal_up_to_global_phase(&rotation_z(theta), &composed, 1e-9));
        }

        #[test]
        fn rotations_are_unitary(phi in -10.0..10.0f64, theta in -20.0..20.0f64) {
            prop_assert!(rotation(phi, theta).is_unitary(1e-12));
            prop_assert!(rotation_z(theta).is_unitary(1e-12));
        }

        #[test]
        fn frame_conjugation_matches_explicit_product(phi in -4.0..4.0f64, theta in 0.0..7.0f64, chi in -4.0..4.0f64) {
            let u = rotation(phi, theta);
            let explicit = rotation_z(chi) * u * rotation_z(-chi);
            prop_assert!(u.conjugate_by_z(chi).max_abs_diff(&explicit) < 1e-12);
            prop_assert!(rotation(phi + chi, theta).max_abs_diff(&explicit) < 1e-12);
        }
    }
}
