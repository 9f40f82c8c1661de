//! The 24-element single-qubit Clifford group as executed on hardware: ten
//! basic gates (virtual z-rotations and single π/2 or π pulses) and fourteen
//! composites built from two or three basic gates.

use std::path::Path;

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::{expanded_area, Pulse};
use crate::scalar::Real;
use crate::su2::{apply, equal_up_to_global_phase, rotation_z, Basis, QubitState, Unitary2};

pub const NUM_GATES: usize = 24;

/// Basic-gate sequences of the composite gates 10..24, in time order.
pub const COMPOSITES: [&[usize]; 14] = [
    &[1, 5],
    &[1, 8],
    &[4, 8],
    &[1, 7],
    &[1, 5, 7],
    &[6, 8],
    &[1, 9],
    &[1, 5, 9],
    &[6, 9],
    &[4, 9],
    &[5, 9],
    &[6, 7],
    &[5, 7],
    &[4, 7],
];

/// Accumulated virtual z-rotation, kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseFrame<T> {
    pub angle: T,
}

impl<T: Real> PhaseFrame<T> {
    pub fn new(angle: T) -> Self {
        let tau = T::TAU();
        let mut a = angle % tau;
        if a < T::zero() {
            a = a + tau;
        }
        if a >= tau {
            a = a - tau;
        }
        Self { angle: a }
    }

    pub fn zero() -> Self {
        Self { angle: T::zero() }
    }

    pub fn advanced(self, by: T) -> Self {
        Self::new(self.angle + by)
    }
}

impl<T: Real> Default for PhaseFrame<T> {
    fn default() -> Self {
        Self::zero()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliffordGate<T> {
    pub index: usize,
    /// Reference matrix including its tabulated global phase.
    pub unitary: Unitary2<T>,
    /// Physical pulses in time order, phases relative to the frame at gate start.
    pub pulses: Vec<Pulse<T>>,
    /// Virtual z-rotation added to the frame after the pulses.
    pub offset: T,
}

impl<T: Real> CliffordGate<T> {
    pub fn area(&self) -> T {
        self.pulses.iter().fold(T::zero(), |a, p| a + p.area)
    }

    /// Area after BB1 expansion of every pulse when `bb1` is set.
    pub fn expanded_area(&self, bb1: bool) -> T {
        self.pulses.iter().fold(T::zero(), |a, p| a + expanded_area(p.area, bb1))
    }

    /// Noiseless recipe unitary: ideal pulses followed by the trailing z-rotation.
    pub fn recipe_unitary(&self) -> Unitary2<T> {
        let body = self.pulses.iter().fold(Unitary2::identity(), |u, p| p.ideal() * u);
        rotation_z(self.offset) * body
    }
}

/// Tabulated matrix of Clifford `index`.
pub fn gate_unitary<T: Real>(index: usize) -> Result<Unitary2<T>> {
    if index >= NUM_GATES {
        return Err(Error::GateIndex(index));
    }
    let c = |re: f64, im: f64| Complex::new(T::lit(re), T::lit(im));
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    let m = |a, b, cc, d| Unitary2::new(a, b, cc, d);
    let s2 = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let ph = |k: f64| Complex::from_polar(T::one(), T::lit(k * std::f64::consts::FRAC_PI_4));
    let u = match index {
        0 => m(o, z, z, o),
        1 => m(o, z, z, i).scale(ph(-1.0)),
        2 => m(o, z, z, -o).scale(-i),
        3 => m(o, z, z, -i).scale(ph(1.0)),
        4 => m(o, -o, o, o).scale(s2),
        5 => m(z, o, -o, z).scale(-o),
        6 => m(o, o, -o, o).scale(s2),
        7 => m(o, -i, -i, o).scale(s2),
        8 => m(z, o, o, z).scale(-i),
        9 => m(o, i, i, o).scale(s2),
        10 => m(z, o, i, z).scale(-ph(1.0)),
        11 => m(z, o, -i, z).scale(ph(1.0)),
        12 => m(o, o, o, -o).scale(-i * s2),
        13 => m(o, o, -i, i).scale(ph(-1.0) * s2),
        14 => m(o, o, i, -i).scale(-ph(1.0) * s2),
        15 => m(o, -o, -o, -o).scale(i * s2),
        16 => m(o, -o, i, i).scale(ph(-1.0) * s2),
        17 => m(o, -o, -i, -i).scale(ph(1.0) * s2),
        18 => m(o, i, -o, i).scale(ph(-1.0) * s2),
        19 => m(o, i, o, -i).scale(ph(1.0) * s2),
        20 => m(o, i, -i, -o).scale(i * s2),
        21 => m(o, -i, -o, -i).scale(ph(1.0) * s2),
        22 => m(o, -i, i, -o).scale(-i * s2),
        _ => m(o, -i, o, i).scale(ph(-1.0) * s2),
    };
    Ok(u)
}

/// Recipe of basic gate `index` (< 10): pulses as (area, DDS phase) and z-offset.
fn basic_recipe<T: Real>(index: usize) -> (Vec<Pulse<T>>, T) {
    let pi = T::PI();
    let half = pi / T::lit(2.0);
    let p = |area, phase| vec![Pulse::new(area, phase)];
    match index {
        0 => (vec![], T::zero()),
        1 => (vec![], half),
        2 => (vec![], pi),
        3 => (vec![], -half),
        4 => (p(half, -half), T::zero()),
        5 => (p(pi, -half), T::zero()),
        6 => (p(half, half), T::zero()),
        7 => (p(half, T::zero()), T::zero()),
        8 => (p(pi, T::zero()), T::zero()),
        9 => (p(half, pi), T::zero()),
        _ => unreachable!("basic gates are 0..10"),
    }
}

/// Immutable gate table shared by all workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliffordTable<T> {
    gates: Vec<CliffordGate<T>>,
}

impl<T: Real> CliffordTable<T> {
    /// The hardware decomposition: basic recipes plus composites obtained by
    /// running their basic-gate sequences through the frame compiler.
    pub fn standard() -> Self {
        let mut gates: Vec<CliffordGate<T>> = (0..10)
            .map(|k| {
                let (pulses, offset) = basic_recipe(k);
                CliffordGate { index: k, unitary: gate_unitary(k).unwrap(), pulses, offset }
            })
            .collect();
        for (j, seq) in COMPOSITES.iter().enumerate() {
            let basic = Self { gates: gates[..10].to_vec() };
            let (pulses, frame) = basic.compile_sequence(seq.iter().copied(), PhaseFrame::zero()).unwrap();
            let index = 10 + j;
            // offsets of the basic gates are multiples of π/2 and sum to at most π
            let mut offset = frame.angle;
            if offset > T::PI() {
                offset = offset - T::TAU();
            }
            gates.push(CliffordGate { index, unitary: gate_unitary(index).unwrap(), pulses, offset });
        }
        Self { gates }
    }

    /// Replaces one gate's recipe; used to inject faults into audits.
    pub fn with_recipe(mut self, index: usize, pulses: Vec<Pulse<T>>, offset: T) -> Result<Self> {
        let g = self.gates.get_mut(index).ok_or(Error::GateIndex(index))?;
        g.pulses = pulses;
        g.offset = offset;
        Ok(self)
    }

    pub fn gates(&self) -> &[CliffordGate<T>] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gate(&self, index: usize) -> Result<&CliffordGate<T>> {
        self.gates.get(index).ok_or(Error::GateIndex(index))
    }

    /// Emits the gate's pulses shifted into the current frame and advances the frame.
    pub fn compile(&self, index: usize, frame: PhaseFrame<T>) -> Result<(Vec<Pulse<T>>, PhaseFrame<T>)> {
        let g = self.gate(index)?;
        let pulses = g.pulses.iter().map(|p| Pulse::new(p.area, p.phase + frame.angle)).collect();
        Ok((pulses, frame.advanced(g.offset)))
    }

    pub fn compile_sequence(
        &self,
        indices: impl IntoIterator<Item = usize>,
        mut frame: PhaseFrame<T>,
    ) -> Result<(Vec<Pulse<T>>, PhaseFrame<T>)> {
        let mut out = Vec::new();
        for k in indices {
            let (ps, f) = self.compile(k, frame)?;
            out.extend(ps);
            frame = f;
        }
        Ok((out, frame))
    }

    /// Product of the reference matrices, first element applied first.
    pub fn sequence_unitary(&self, indices: &[usize]) -> Result<Unitary2<T>> {
        indices
            .iter()
            .try_fold(Unitary2::identity(), |u, &k| Ok(self.gate(k)?.unitary * u))
    }

    /// Gate returning the state reached from `initial` by `u` to `target`; the
    /// cheapest by physical area wins, ties to the lowest index.
    pub fn recovery_for(&self, u: &Unitary2<T>, initial: Basis, target: Basis) -> usize {
        let start = apply(u, &QubitState::basis(initial));
        let tol = T::lit(1e-9);
        let mut best: Option<(usize, T)> = None;
        for g in &self.gates {
            let p = apply(&g.unitary, &start).population(target);
            if p < T::one() - tol {
                continue;
            }
            let a = g.area();
            match best {
                Some((_, ba)) if a >= ba - tol => {}
                _ => best = Some((g.index, a)),
            }
        }
        best.expect("the group inverse always restores the target").0
    }

    /// Recovery gate for a string started in `initial` and read out against `target`.
    pub fn recovery_gate_between(&self, indices: &[usize], initial: Basis, target: Basis) -> Result<usize> {
        Ok(self.recovery_for(&self.sequence_unitary(indices)?, initial, target))
    }

    /// Recovery gate returning `|0⟩` to `|0⟩`.
    pub fn recovery_gate(&self, indices: &[usize]) -> Result<usize> {
        self.recovery_gate_between(indices, Basis::Zero, Basis::Zero)
    }

    /// Mean total pulse area per gate over the group.
    pub fn average_gate_area(&self, bb1: bool) -> T {
        let total = self.gates.iter().fold(T::zero(), |a, g| a + g.expanded_area(bb1));
        total / T::from_usize(self.gates.len()).unwrap()
    }

    /// Index of the table matrix equal to `u` up to global phase.
    pub fn identify(&self, u: &Unitary2<T>, tol: T) -> Option<usize> {
        self.gates
            .iter()
            .find(|g| equal_up_to_global_phase(u, &g.unitary, tol))
            .map(|g| g.index)
    }

    /// Pairs `(i, j)` whose product `G_i·G_j` is not in the table.
    pub fn closure_failures(&self) -> Vec<(usize, usize)> {
        let tol = T::lit(1e-9);
        let mut bad = Vec::new();
        for a in &self.gates {
            for b in &self.gates {
                if self.identify(&(a.unitary * b.unitary), tol).is_none() {
                    bad.push((a.index, b.index));
                }
            }
        }
        bad
    }

    /// Gates whose noiseless recipe does not reproduce the reference matrix.
    pub fn recipe_failures(&self) -> Vec<usize> {
        let tol = T::lit(1e-9);
        self.gates
            .iter()
            .filter(|g| !equal_up_to_global_phase(&g.recipe_unitary(), &g.unitary, tol))
            .map(|g| g.index)
            .collect()
    }
}

impl CliffordTable<f64> {
    pub fn to_json(&self) -> Result<String> {
        let records: Vec<GateRecord> = self
            .gates
            .iter()
            .map(|g| GateRecord {
                index: g.index,
                pulses: g.pulses.clone(),
                offset: g.offset,
                matrix: g.unitary.m.map(|z| [z.re, z.im]),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&records)?)
    }
}

/// Audit form of one gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub index: usize,
    pub pulses: Vec<Pulse<f64>>,
    pub offset: f64,
    /// Row-major entries as `[re, im]`.
    pub matrix: [[f64; 2]; 4],
}

/// I.i.d. uniform draws from the 24 gates.
pub fn random_string<R: Rng + ?Sized>(length: usize, rng: &mut R) -> Vec<usize> {
    (0..length).map(|_| rng.random_range(0..NUM_GATES)).collect()
}

pub fn save_strings(path: impl AsRef<Path>, strings: &[Vec<usize>]) -> Result<()> {
    let text = serde_json::to_string(strings)?;
    std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn load_strings(path: impl AsRef<Path>) -> Result<Vec<Vec<usize>>> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let strings: Vec<Vec<usize>> = serde_json::from_str(&text)?;
    if let Some(&bad) = strings.iter().flatten().find(|&&k| k >= NUM_GATES) {
        return Err(Error::GateIndex(bad));
    }
    Ok(strings)
}
