//! Experiment configuration: one JSON document with the unit in every
//! dimensional field name. Conversion to the SI types used by the simulator
//! happens here and nowhere else.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fit::ReadoutMode;
use crate::readout::{DestructiveParams, NdroParams};
use crate::site::ArrayConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Default output directory; the command line may override it.
    pub output_dir: String,
    pub array: ArrayBlock,
    pub pulse: PulseBlock,
    pub rb: RbBlock,
    pub readout: ReadoutBlock,
    pub fit: FitBlock,
    pub ndro: NdroSweepBlock,
    pub calibration: CalibrationBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayBlock {
    pub rows: usize,
    pub cols: usize,
    pub spacing_um: f64,
    /// Peak-to-peak relative Rabi variation across the array.
    pub rabi_spread: f64,
    pub t2star_ms: f64,
    pub t2star_spread_ms: f64,
    pub stark_offset_hz: f64,
    pub stark_spread_hz: f64,
    pub load_prob: f64,
    pub prep_fidelity: f64,
    pub trap_lifetime_s: f64,
    /// Probability of keeping the atom through the fixed hold window.
    pub sequence_survival: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseBlock {
    pub rabi_khz: f64,
    pub bb1: bool,
    /// Mean Clifford rotation angle fed to the analytic error estimate.
    pub avg_area_pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbBlock {
    pub strings: usize,
    pub max_length: u32,
    pub lengths: Vec<u32>,
    /// Repetitions per (site, string, length); empty traps are discarded.
    pub shots: u64,
    pub hold_time_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSelection {
    Destructive,
    Ndro,
    /// Both readouts on the same strings.
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<ReadoutMode> {
        match self {
            ModeSelection::Destructive => vec![ReadoutMode::Destructive],
            ModeSelection::Ndro => vec![ReadoutMode::Ndro],
            ModeSelection::Both => vec![ReadoutMode::Destructive, ReadoutMode::Ndro],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutBlock {
    pub mode: ModeSelection,
    pub destructive_miss_f3: f64,
    pub destructive_false_bright_f4: f64,
    pub ndro: NdroBlock,
    /// Fixed NDRO count threshold; `null` derives it from a characterization run.
    pub threshold: Option<u64>,
    pub threshold_shots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NdroBlock {
    pub linewidth_mhz: f64,
    pub saturation: f64,
    pub detuning_linewidths: f64,
    pub efficiency: f64,
    pub background_cps: f64,
    pub duration_ms: f64,
    pub trap_depth_mk: f64,
    pub loss_rate_ref_per_s: f64,
    pub loss_ref_depth_mk: f64,
    pub loss_depth_scale_mk: f64,
    pub leak_per_photon: f64,
    pub transfer_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    /// Survival scale for destructive curves; NDRO curves always use 1.
    pub survival_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NdroSweepBlock {
    pub shots: u64,
    pub durations_ms: Vec<f64>,
    pub depths_mk: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationBlock {
    pub rabi_max_us: f64,
    pub rabi_points: usize,
    pub rabi_shots: u64,
    pub ramsey_detuning_hz: f64,
    pub ramsey_max_ms: f64,
    pub ramsey_points: usize,
    pub ramsey_shots: u64,
}

pub const PRESETS: [&str; 5] = ["fig2", "desk", "fig4", "ndro", "calibration"];

impl NdroBlock {
    pub fn from_params(p: &NdroParams) -> Self {
        Self {
            linewidth_mhz: p.linewidth / TAU * 1e-6,
            saturation: p.saturation,
            detuning_linewidths: p.detuning,
            efficiency: p.efficiency,
            background_cps: p.background_rate,
            duration_ms: p.duration * 1e3,
            trap_depth_mk: p.trap_depth,
            loss_rate_ref_per_s: p.loss_rate_ref,
            loss_ref_depth_mk: p.loss_ref_depth,
            loss_depth_scale_mk: p.loss_depth_scale,
            leak_per_photon: p.leak_per_photon,
            transfer_efficiency: p.transfer_efficiency,
        }
    }

    pub fn params(&self) -> NdroParams {
        NdroParams {
            linewidth: TAU * self.linewidth_mhz * 1e6,
            saturation: self.saturation,
            detuning: self.detuning_linewidths,
            efficiency: self.efficiency,
            background_rate: self.background_cps,
            duration: self.duration_ms * 1e-3,
            trap_depth: self.trap_depth_mk,
            loss_rate_ref: self.loss_rate_ref_per_s,
            loss_ref_depth: self.loss_ref_depth_mk,
            loss_depth_scale: self.loss_depth_scale_mk,
            leak_per_photon: self.leak_per_photon,
            transfer_efficiency: self.transfer_efficiency,
        }
    }
}

impl ExperimentConfig {
    /// Full 15×15 destructive-readout benchmark.
    pub fn fig2(seed: u64) -> Self {
        Self {
            name: "fig2".into(),
            seed,
            output_dir: "out/fig2".into(),
            array: ArrayBlock {
                rows: 15,
                cols: 15,
                spacing_um: 8.0,
                rabi_spread: 0.03,
                t2star_ms: 14.09,
                t2star_spread_ms: 0.8,
                stark_offset_hz: 39.0,
                stark_spread_hz: 0.0,
                load_prob: 0.55,
                prep_fidelity: 0.971,
                trap_lifetime_s: 9.7,
                sequence_survival: 0.93,
            },
            pulse: PulseBlock { rabi_khz: 9.6, bb1: true, avg_area_pi: 2.95 },
            rb: RbBlock {
                strings: 8,
                max_length: 1000,
                lengths: vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 700, 1000],
                shots: 150,
                hold_time_ms: 375.0,
            },
            readout: ReadoutBlock {
                mode: ModeSelection::Destructive,
                destructive_miss_f3: 0.010,
                destructive_false_bright_f4: 0.005,
                ndro: NdroBlock::from_params(&NdroParams::paper_defaults()),
                threshold: None,
                threshold_shots: 20_000,
            },
            fit: FitBlock { survival_scale: 0.93 },
            ndro: NdroSweepBlock {
                shots: 20_000,
                durations_ms: vec![0.0, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 15.0, 20.0],
                depths_mk: vec![6.0, 8.0, 10.0, 13.3, 16.0, 20.0],
            },
            calibration: CalibrationBlock {
                rabi_max_us: 500.0,
                rabi_points: 51,
                rabi_shots: 100,
                ramsey_detuning_hz: 400.0,
                ramsey_max_ms: 30.0,
                ramsey_points: 61,
                ramsey_shots: 1000,
            },
        }
    }

    /// 5×5 destructive run with the large-array noise model.
    pub fn desk(seed: u64) -> Self {
        let mut c = Self::fig2(seed);
        c.name = "desk".into();
        c.output_dir = "out/desk".into();
        c.array.rows = 5;
        c.array.cols = 5;
        c
    }

    /// 7×7 array read out both ways on the same strings.
    pub fn fig4(seed: u64) -> Self {
        let mut c = Self::fig2(seed);
        c.name = "fig4".into();
        c.output_dir = "out/fig4".into();
        c.array.rows = 7;
        c.array.cols = 7;
        c.array.t2star_ms = 12.0;
        c.array.stark_offset_hz = 211.0;
        c.array.sequence_survival = 0.95;
        c.readout.mode = ModeSelection::Both;
        c.fit.survival_scale = 0.95;
        c
    }

    pub fn ndro(seed: u64) -> Self {
        let mut c = Self::fig4(seed);
        c.name = "ndro".into();
        c.output_dir = "out/ndro".into();
        c.readout.mode = ModeSelection::Ndro;
        c.fit.survival_scale = 1.0;
        c.ndro.shots = 100_000;
        c
    }

    pub fn calibration(seed: u64) -> Self {
        let mut c = Self::fig2(seed);
        c.name = "calibration".into();
        c.output_dir = "out/calibration".into();
        c.array.stark_offset_hz = 0.0;
        c
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "fig2" => Ok(Self::fig2(seed)),
            "desk" => Ok(Self::desk(seed)),
            "fig4" => Ok(Self::fig4(seed)),
            "ndro" => Ok(Self::ndro(seed)),
            "calibration" => Ok(Self::calibration(seed)),
            _ => Err(Error::Config(format!("unknown preset {name:?}; known: {}", PRESETS.join(", ")))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the serialized config with the output directory blanked,
    /// so the same experiment hashes the same wherever it is written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir.clear();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn array_config(&self) -> ArrayConfig {
        let a = &self.array;
        ArrayConfig {
            rows: a.rows,
            cols: a.cols,
            spacing_um: a.spacing_um,
            rabi: self.rabi(),
            rabi_spread: a.rabi_spread,
            t2star: a.t2star_ms * 1e-3,
            t2star_spread: a.t2star_spread_ms * 1e-3,
            stark_offset: TAU * a.stark_offset_hz,
            stark_spread: TAU * a.stark_spread_hz,
            load_prob: a.load_prob,
            prep_fidelity: a.prep_fidelity,
            trap_lifetime: a.trap_lifetime_s,
            sequence_survival: a.sequence_survival,
            seed: self.seed,
        }
    }

    /// Nominal Rabi frequency (rad/s).
    pub fn rabi(&self) -> f64 {
        TAU * self.pulse.rabi_khz * 1e3
    }

    pub fn avg_area(&self) -> f64 {
        self.pulse.avg_area_pi * PI
    }

    pub fn destructive_params(&self) -> DestructiveParams {
        DestructiveParams {
            miss_f3: self.readout.destructive_miss_f3,
            false_bright_f4: self.readout.destructive_false_bright_f4,
        }
    }

    pub fn ndro_params(&self) -> NdroParams {
        self.readout.ndro.params()
    }

    pub fn survival_scale(&self, mode: ReadoutMode) -> f64 {
        match mode {
            ReadoutMode::Destructive => self.fit.survival_scale,
            ReadoutMode::Ndro => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.array_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.ndro_params().validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.pulse.rabi_khz > 0.0 && self.pulse.rabi_khz.is_finite()) {
            return bad("pulse.rabi_khz must be positive".into());
        }
        if !(self.pulse.avg_area_pi > 0.0) {
            return bad("pulse.avg_area_pi must be positive".into());
        }
        let rb = &self.rb;
        if rb.strings == 0 || rb.shots == 0 {
            return bad("rb.strings and rb.shots must be positive".into());
        }
        if rb.lengths.is_empty() || rb.lengths.windows(2).any(|w| w[0] >= w[1]) {
            return bad("rb.lengths must be non-empty and strictly increasing".into());
        }
        if rb.lengths.iter().any(|&n| n == 0 || n > rb.max_length) {
            return bad(format!("rb.lengths must lie in 1..={}", rb.max_length));
        }
        if !(rb.hold_time_ms >= 0.0) {
            return bad("rb.hold_time_ms must be non-negative".into());
        }
        for (name, p) in [
            ("readout.destructive_miss_f3", self.readout.destructive_miss_f3),
            ("readout.destructive_false_bright_f4", self.readout.destructive_false_bright_f4),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.readout.threshold.is_none() && self.readout.threshold_shots == 0 {
            return bad("readout.threshold_shots must be positive when no threshold is fixed".into());
        }
        if !(self.fit.survival_scale > 0.0 && self.fit.survival_scale <= 1.0) {
            return bad("fit.survival_scale must lie in (0, 1]".into());
        }
        let n = &self.ndro;
        if n.shots == 0 {
            return bad("ndro.shots must be positive".into());
        }
        if n.durations_ms.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return bad("ndro.durations_ms must be finite and non-negative".into());
        }
        if n.depths_mk.iter().any(|&u| !(u > 0.0 && u.is_finite())) {
            return bad("ndro.depths_mk must be positive".into());
        }
        let c = &self.calibration;
        if !(c.rabi_max_us > 0.0 && c.ramsey_max_ms > 0.0 && c.ramsey_detuning_hz > 0.0) {
            return bad("calibration time spans and detuning must be positive".into());
        }
        if c.rabi_points < 6 || c.ramsey_points < 6 || c.rabi_shots == 0 || c.ramsey_shots == 0 {
            return bad("calibration needs at least 6 points and one shot per point".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let c = ExperimentConfig::preset(name, 11).unwrap();
            c.validate().unwrap();
            let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_json(), c.to_json());
        }
    }

    #[test]
    fn unit_conversion() {
        let c = ExperimentConfig::fig2(0);
        let a = c.array_config();
        assert!((a.rabi - TAU * 9600.0).abs() < 1e-9);
        assert!((a.t2star - 14.09e-3).abs() < 1e-15);
        assert!((a.stark_offset - TAU * 39.0).abs() < 1e-12);
        let p = c.ndro_params();
        let q = NdroParams::paper_defaults();
        assert!((p.linewidth / q.linewidth - 1.0).abs() < 1e-14);
        assert!((p.loss_rate_ref / q.loss_rate_ref - 1.0).abs() < 1e-14);
        assert!((p.duration - q.duration).abs() < 1e-15);
    }

    #[test]
    fn unknown_fields_and_missing_blocks_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&ExperimentConfig::desk(1).to_json()).unwrap();
        v["array"]["rabi_hz"] = 1.0.into();
        assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(Error::Config(_))));
        let mut v: serde_json::Value = serde_json::from_str(&ExperimentConfig::desk(1).to_json()).unwrap();
        v.as_object_mut().unwrap().remove("seed");
        assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(Error::Config(_))));
        v = serde_json::from_str(&ExperimentConfig::desk(1).to_json()).unwrap();
        v.as_object_mut().unwrap().remove("fit");
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = ExperimentConfig::desk(1);
        c.rb.lengths = vec![1, 5, 5];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::desk(1);
        c.rb.lengths.push(2000);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::desk(1);
        c.fit.survival_scale = 0.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::desk(1);
        c.array.prep_fidelity = 1.5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::desk(3);
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
