//! Experiment orchestration: RB on a simulated array, NDRO characterization,
//! microwave calibration and the gate-table audit. Every run writes its data
//! files plus a manifest of content hashes into one output directory.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clifford::{random_string, NUM_GATES};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fit::{
    aggregate_array, fit_rabi, fit_ramsey, fit_rb, histogram, ArraySummary, HistogramBin, RabiFit, RamseyFit,
    ReadoutMode, RbCurve, RbPoint, SiteFit, Stats, HISTOGRAM_BINS,
};
use crate::pulse::simulate_sequence;
use crate::readout::{
    depth_sweep, destructive_readout, ndro_point, ndro_shot, ndro_sweep, projective_outcome, write_points_csv,
    Detection, NdroPoint,
};
use crate::rng::{stream, Domain};
use crate::site::{
    build_array, predicted_gate_error, prepare_atom, rabi_transfer_probability, ramsey_flip_probability,
    sequence_survival, Atom, SiteModel,
};
use crate::su2::{apply, equal_up_to_global_phase, phase_aligned_distance};
use crate::{Basis, CliffordTable, PhaseFrame, PhysicalPulse, PulseNoise, QubitState, Unitary2};

/// Where and how a run executes. Neither field affects the data written.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Record wall-clock time in the manifest (off by default so that
    /// manifests compare byte for byte).
    pub record_timing: bool,
}

impl RunContext {
    pub fn new(out_dir: impl Into<PathBuf>, workers: usize) -> Self {
        Self { out_dir: out_dir.into(), workers, record_timing: false }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        if self.workers == 0 {
            return Err(Error::InvalidParameter("need at least one worker".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::io(&self.out_dir, std::io::Error::other(e)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_name: Option<String>,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub software_version: String,
    pub files: Vec<FileEntry>,
    pub elapsed_s: Option<f64>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Collects output files and their hashes, then writes the manifest last.
struct Outputs {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(data)),
            bytes: data.len() as u64,
        });
        Ok(())
    }

    fn json<S: Serialize + ?Sized>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.bytes(name, &text)
    }

    fn csv<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let data = w.into_inner().map_err(|e| Error::io(name, e.into_error()))?;
        self.bytes(name, &data)
    }

    fn finish(self, command: &str, cfg: Option<&ExperimentConfig>, started: Instant, ctx: &RunContext) -> Result<RunManifest> {
        let m = RunManifest {
            command: command.to_string(),
            config_name: cfg.map(|c| c.name.clone()),
            config_hash: cfg.map(|c| c.hash()),
            seed: cfg.map(|c| c.seed),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            files: self.files,
            elapsed_s: ctx.record_timing.then(|| started.elapsed().as_secs_f64()),
        };
        let mut text = serde_json::to_vec_pretty(&m)?;
        text.push(b'\n');
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(m)
    }
}

/// Gate strings for a run: `count` strings of `max_length`; shorter lengths
/// use prefixes.
pub fn rb_strings(seed: u64, count: usize, max_length: u32) -> Vec<Vec<usize>> {
    (0..count)
        .map(|s| random_string(max_length as usize, &mut stream(seed, Domain::Strings, &[s as u64])))
        .collect()
}

/// Per-shot gate cache: the frame-zero noisy unitary of each gate, computed on
/// first use.
struct NoisyGates<'a> {
    table: &'a CliffordTable,
    rabi: f64,
    noise: PulseNoise,
    bb1: bool,
    cache: [Option<Unitary2>; NUM_GATES],
}

impl<'a> NoisyGates<'a> {
    fn new(table: &'a CliffordTable, rabi: f64, noise: PulseNoise, bb1: bool) -> Self {
        Self { table, rabi, noise, bb1, cache: [None; NUM_GATES] }
    }

    fn at_frame(&mut self, g: usize, frame: f64) -> Result<Unitary2> {
        let u = match self.cache[g] {
            Some(u) => u,
            None => {
                let pulses: Vec<PhysicalPulse> =
                    self.table.gate(g)?.pulses.iter().map(|p| p.at_rabi(self.rabi)).collect();
                let u = simulate_sequence(&pulses, &self.noise, self.bb1)?;
                self.cache[g] = Some(u);
                u
            }
        };
        // a pulse of phase φ+F rotates about −(φ+F)
        Ok(u.conjugate_by_z(-frame))
    }
}

/// Virtual-Z frame in force before each gate of a string, plus the final frame.
fn frames(table: &CliffordTable, string: &[usize]) -> Result<Vec<f64>> {
    let mut f = PhaseFrame::zero();
    let mut out = Vec::with_capacity(string.len() + 1);
    out.push(f.angle);
    for &g in string {
        f = f.advanced(table.gate(g)?.offset);
        out.push(f.angle);
    }
    Ok(out)
}

struct RbJob<'a> {
    cfg: &'a ExperimentConfig,
    table: &'a CliffordTable,
    mode: ReadoutMode,
    threshold: u64,
}

impl RbJob<'_> {
    fn target(&self) -> Basis {
        match self.mode {
            ReadoutMode::Destructive => Basis::Zero,
            ReadoutMode::Ndro => Basis::One,
        }
    }

    /// Runs every repetition of one (site, string, length) point and returns
    /// `(counted shots, successes)`.
    fn point(&self, site: &SiteModel, s: usize, li: usize, string: &[usize], frames: &[f64], recovery: usize) -> Result<(u64, u64)> {
        let mode_key = self.mode as u64;
        let (mut counted, mut success) = (0, 0);
        for shot in 0..self.cfg.rb.shots {
            let mut rng = stream(self.cfg.seed, Domain::RbShot, &[mode_key, site.index as u64, s as u64, li as u64, shot]);
            if let Some(ok) = self.shot(site, string, frames, recovery, &mut rng)? {
                counted += 1;
                success += ok as u64;
            }
        }
        Ok((counted, success))
    }

    /// One experimental repetition; `None` when the shot is discarded (empty
    /// trap, or an atom missing from the NDRO verification image).
    fn shot<R: Rng + ?Sized>(&self, site: &SiteModel, string: &[usize], frames: &[f64], recovery: usize, rng: &mut R) -> Result<Option<bool>> {
        let atom = prepare_atom(site, rng);
        if atom == Atom::Empty {
            return Ok(None);
        }
        let nominal = self.cfg.rabi();
        let noise = PulseNoise::new(site.amplitude_error(nominal), site.shot_detuning(rng));
        let survived = sequence_survival(site, rng);
        let spectator = atom == Atom::Spectator;
        let outcome = if spectator {
            Basis::One
        } else {
            let mut gates = NoisyGates::new(self.table, nominal, noise, self.cfg.pulse.bb1);
            let mut psi = QubitState::one();
            for (k, &g) in string.iter().enumerate() {
                psi = apply(&gates.at_frame(g, frames[k])?, &psi);
            }
            psi = apply(&gates.at_frame(recovery, frames[string.len()])?, &psi);
            projective_outcome(&psi, rng)
        };
        Ok(match self.mode {
            ReadoutMode::Destructive => {
                let d = destructive_readout(outcome, spectator, survived, &self.cfg.destructive_params(), rng);
                Some(d == Detection::Zero)
            }
            ReadoutMode::Ndro => {
                if !survived {
                    return Ok(None);
                }
                let r = ndro_shot(outcome, spectator, &self.cfg.ndro_params(), self.threshold, rng);
                match r.detected {
                    Detection::Lost => None,
                    d => Some(d == Detection::One),
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub site: usize,
    pub row: usize,
    pub col: usize,
    pub string: usize,
    pub length: u32,
    pub recovery: usize,
    pub shots: u64,
    pub successes: u64,
    pub p: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub site: usize,
    pub row: usize,
    pub col: usize,
    pub d: f64,
    pub d_se: f64,
    pub d_spam: f64,
    pub d_spam_se: f64,
    pub fidelity: f64,
    pub fidelity_se: f64,
    pub chi2: f64,
    pub dof: usize,
}

impl From<&SiteFit> for FitRow {
    fn from(s: &SiteFit) -> Self {
        let f = &s.fit;
        Self {
            site: s.site,
            row: s.row,
            col: s.col,
            d: f.d,
            d_se: f.d_se,
            d_spam: f.d_spam,
            d_spam_se: f.d_spam_se,
            fidelity: f.fidelity,
            fidelity_se: f.fidelity_se,
            chi2: f.chi2,
            dof: f.dof,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: ReadoutMode,
    pub survival_scale: f64,
    /// NDRO count threshold used (absent for destructive readout).
    pub threshold: Option<u64>,
    pub summary: ArraySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbSummary {
    pub sites: usize,
    pub strings: usize,
    pub lengths: Vec<u32>,
    pub modes: Vec<ModeResult>,
    /// Destructive over NDRO mean SPAM error, when both were run.
    pub spam_ratio: Option<f64>,
    /// Analytic error estimate `[1 − α(⟨θ⟩/Ω, T₂*)]/2` and its fidelity.
    pub predicted_error: f64,
    pub predicted_fidelity: f64,
    /// Enumerated mean gate area in units of π, bare and BB1-expanded.
    pub gate_area_pi: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct RbRun {
    pub manifest: RunManifest,
    pub summary: RbSummary,
    pub fits: Vec<(ReadoutMode, Vec<SiteFit>)>,
}

/// NDRO count threshold: fixed in the config or optimized on a characterization run.
pub fn rb_threshold(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<u64> {
    if let Some(t) = cfg.readout.threshold {
        return Ok(t);
    }
    let seed: u64 = stream(cfg.seed, Domain::Threshold, &[]).random();
    Ok(ndro_point(&cfg.ndro_params(), cfg.readout.threshold_shots, seed, Some(pool))?.0.threshold)
}

pub fn run_rb(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<RbRun> {
    let started = Instant::now();
    cfg.validate()?;
    let pool = ctx.pool()?;
    let sites = build_array(&cfg.array_config())?;
    let table = CliffordTable::standard();
    let strings = rb_strings(cfg.seed, cfg.rb.strings, cfg.rb.max_length);
    let string_frames = strings.iter().map(|s| frames(&table, s)).collect::<Result<Vec<_>>>()?;
    let lengths = &cfg.rb.lengths;

    let mut out = Outputs::create(&ctx.out_dir)?;
    out.json("config.json", cfg)?;
    out.json("array.json", &sites)?;
    out.json("strings.json", &strings)?;

    let mut modes = Vec::new();
    let mut all_fits = Vec::new();
    for mode in cfg.readout.mode.modes() {
        let threshold = match mode {
            ReadoutMode::Ndro => Some(rb_threshold(cfg, &pool)?),
            ReadoutMode::Destructive => None,
        };
        let job = RbJob { cfg, table: &table, mode, threshold: threshold.unwrap_or(0) };
        let recovery: Vec<Vec<usize>> = strings
            .iter()
            .map(|s| {
                lengths
                    .iter()
                    .map(|&n| table.recovery_gate_between(&s[..n as usize], Basis::One, job.target()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let items: Vec<(usize, usize, usize)> = (0..sites.len())
            .flat_map(|i| (0..strings.len()).flat_map(move |s| (0..lengths.len()).map(move |l| (i, s, l))))
            .collect();
        let tallies: Vec<(u64, u64)> = pool.install(|| {
            items
                .par_iter()
                .map(|&(i, s, l)| {
                    let n = lengths[l] as usize;
                    job.point(&sites[i], s, l, &strings[s][..n], &string_frames[s][..=n], recovery[s][l])
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let rows: Vec<CurveRow> = items
            .iter()
            .zip(&tallies)
            .map(|(&(i, s, l), &(shots, k))| {
                let pt = RbPoint::from_counts(lengths[l], k, shots);
                CurveRow {
                    site: i,
                    row: sites[i].row,
                    col: sites[i].col,
                    string: s,
                    length: lengths[l],
                    recovery: recovery[s][l],
                    shots,
                    successes: k,
                    p: pt.p,
                    stderr: pt.stderr,
                }
            })
            .collect();
        let per_site = strings.len() * lengths.len();
        let scale = cfg.survival_scale(mode);
        let fits: Vec<SiteFit> = pool.install(|| {
            rows.par_chunks(per_site)
                .zip(sites.par_iter())
                .map(|(chunk, site)| {
                    let points = chunk.iter().map(|r| RbPoint::from_counts(r.length, r.successes, r.shots)).collect();
                    let fit = fit_rb(&RbCurve { mode, points }, scale)?;
                    Ok(SiteFit { site: site.index, row: site.row, col: site.col, fit })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let summary = aggregate_array(&fits)?;
        let tag = mode_tag(mode);
        out.csv(&format!("rb_curves_{tag}.csv"), &rows)?;
        out.csv(&format!("rb_fits_{tag}.csv"), &fits.iter().map(FitRow::from).collect::<Vec<_>>())?;
        out.json(&format!("rb_fits_{tag}.json"), &fits)?;
        out.csv(&format!("rb_fidelity_histogram_{tag}.csv"), &summary.fidelity_histogram)?;
        out.csv(&format!("rb_spam_histogram_{tag}.csv"), &summary.spam_histogram)?;
        modes.push(ModeResult { mode, survival_scale: scale, threshold, summary });
        all_fits.push((mode, fits));
    }

    let spam = |m: ReadoutMode| modes.iter().find(|r| r.mode == m).map(|r| r.summary.d_spam.mean);
    let spam_ratio = match (spam(ReadoutMode::Destructive), spam(ReadoutMode::Ndro)) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    let ac = cfg.array_config();
    let predicted_error = predicted_gate_error(ac.rabi, ac.t2star, cfg.avg_area());
    let pi = std::f64::consts::PI;
    let summary = RbSummary {
        sites: sites.len(),
        strings: strings.len(),
        lengths: lengths.clone(),
        modes,
        spam_ratio,
        predicted_error,
        predicted_fidelity: 1.0 - predicted_error,
        gate_area_pi: [table.average_gate_area(false) / pi, table.average_gate_area(true) / pi],
    };
    out.json("rb_summary.json", &summary)?;
    let manifest = out.finish("rb", Some(cfg), started, ctx)?;
    Ok(RbRun { manifest, summary, fits: all_fits })
}

fn mode_tag(mode: ReadoutMode) -> &'static str {
    match mode {
        ReadoutMode::Destructive => "destructive",
        ReadoutMode::Ndro => "ndro",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdroSummary {
    /// Characterization at the configured duration and depth.
    pub point: NdroPoint,
    pub durations: Vec<NdroPoint>,
    pub depths: Vec<NdroPoint>,
}

#[derive(Debug, Clone)]
pub struct NdroRun {
    pub manifest: RunManifest,
    pub summary: NdroSummary,
}

pub fn run_ndro_characterization(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<NdroRun> {
    let started = Instant::now();
    cfg.validate()?;
    let pool = ctx.pool()?;
    let p = cfg.ndro_params();
    let shots = cfg.ndro.shots;
    let (point, tally) = ndro_point(&p, shots, cfg.seed, Some(&pool))?;
    let durations: Vec<f64> = cfg.ndro.durations_ms.iter().map(|t| t * 1e-3).collect();
    let durations = ndro_sweep(&durations, &p, shots, cfg.seed, Some(&pool))?;
    let depths = depth_sweep(&cfg.ndro.depths_mk, &p, shots, cfg.seed, Some(&pool))?;

    let mut out = Outputs::create(&ctx.out_dir)?;
    out.json("config.json", cfg)?;
    let mut hist = Vec::new();
    tally.histogram.write_csv(&mut hist)?;
    out.bytes("ndro_histogram.csv", &hist)?;
    for (name, rows) in [("ndro_duration_sweep.csv", &durations), ("ndro_depth_sweep.csv", &depths)] {
        let mut buf = Vec::new();
        write_points_csv(rows, &mut buf)?;
        out.bytes(name, &buf)?;
    }
    let summary = NdroSummary { point, durations, depths };
    out.json("ndro_summary.json", &summary)?;
    let manifest = out.finish("ndro", Some(cfg), started, ctx)?;
    Ok(NdroRun { manifest, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopRow {
    pub time_us: f64,
    pub shots: u64,
    pub p: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyRow {
    pub site: usize,
    pub row: usize,
    pub col: usize,
    pub t2star_ms: f64,
    pub t2star_se_ms: f64,
    pub t2star_true_ms: f64,
    pub frequency_hz: f64,
    pub chi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub rabi: RabiFit,
    pub rabi_khz: f64,
    pub rabi_khz_se: f64,
    /// Fitted T₂* across sites (ms), finite fits only; absent if none resolved decay.
    pub t2star_ms: Option<Stats>,
    pub t2star_histogram: Vec<HistogramBin>,
    pub unresolved_sites: usize,
}

#[derive(Debug, Clone)]
pub struct CalibrationRun {
    pub manifest: RunManifest,
    pub summary: CalibrationSummary,
    pub ramsey: Vec<RamseyFit>,
}

fn binomial_point(k: u64, n: u64) -> (f64, f64) {
    let p = k as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt().max(0.5 / n as f64))
}

pub fn run_calibration(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<CalibrationRun> {
    let started = Instant::now();
    cfg.validate()?;
    let pool = ctx.pool()?;
    let sites = build_array(&cfg.array_config())?;
    let c = &cfg.calibration;
    let nominal = cfg.rabi();

    // array-averaged Rabi flop
    let flop_times: Vec<f64> = (0..c.rabi_points).map(|k| k as f64 * c.rabi_max_us * 1e-6 / (c.rabi_points - 1) as f64).collect();
    let flop_counts: Vec<u64> = pool.install(|| {
        flop_times
            .par_iter()
            .enumerate()
            .map(|(k, &t)| {
                sites
                    .iter()
                    .map(|site| {
                        let mut rng = stream(cfg.seed, Domain::Rabi, &[site.index as u64, k as u64]);
                        (0..c.rabi_shots)
                            .filter(|_| {
                                let p = rabi_transfer_probability(site, nominal, site.shot_detuning(&mut rng), t);
                                rng.random::<f64>() < p
                            })
                            .count() as u64
                    })
                    .sum()
            })
            .collect()
    });
    let flop_shots = c.rabi_shots * sites.len() as u64;
    let flop: Vec<FlopRow> = flop_times
        .iter()
        .zip(&flop_counts)
        .map(|(&t, &k)| {
            let (p, stderr) = binomial_point(k, flop_shots);
            FlopRow { time_us: t * 1e6, shots: flop_shots, p, stderr }
        })
        .collect();
    let data: Vec<(f64, f64, f64)> = flop.iter().map(|r| (r.time_us * 1e-6, r.p, r.stderr)).collect();
    let rabi = fit_rabi(&data, nominal)?;

    // per-site Ramsey
    let ramsey_times: Vec<f64> =
        (0..c.ramsey_points).map(|k| k as f64 * c.ramsey_max_ms * 1e-3 / (c.ramsey_points - 1) as f64).collect();
    let drive = TAU * c.ramsey_detuning_hz;
    let hint = c.ramsey_detuning_hz + cfg.array.stark_offset_hz;
    let ramsey: Vec<RamseyFit> = pool.install(|| {
        sites
            .par_iter()
            .map(|site| {
                let data: Vec<(f64, f64, f64)> = ramsey_times
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| {
                        let mut rng = stream(cfg.seed, Domain::Ramsey, &[site.index as u64, k as u64]);
                        let hits = (0..c.ramsey_shots)
                            .filter(|_| {
                                let delta = drive + site.shot_detuning(&mut rng);
                                let p = ramsey_flip_probability(delta, t, Some(site.rabi));
                                rng.random::<f64>() < p
                            })
                            .count() as u64;
                        let (p, se) = binomial_point(hits, c.ramsey_shots);
                        (t, p, se)
                    })
                    .collect();
                fit_ramsey(&data, hint.abs())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<RamseyRow> = sites
        .iter()
        .zip(&ramsey)
        .map(|(s, f)| RamseyRow {
            site: s.index,
            row: s.row,
            col: s.col,
            t2star_ms: f.t2star * 1e3,
            t2star_se_ms: f.t2star_se * 1e3,
            t2star_true_ms: s.t2star * 1e3,
            frequency_hz: f.frequency,
            chi2: f.chi2,
        })
        .collect();
    let t2: Vec<f64> = rows.iter().map(|r| r.t2star_ms).filter(|x| x.is_finite()).collect();
    let summary = CalibrationSummary {
        rabi_khz: rabi.rabi / TAU * 1e-3,
        rabi_khz_se: rabi.rabi_se / TAU * 1e-3,
        rabi,
        t2star_ms: (!t2.is_empty()).then(|| Stats::of(&t2)),
        t2star_histogram: histogram(&t2, HISTOGRAM_BINS),
        unresolved_sites: rows.len() - t2.len(),
    };

    let mut out = Outputs::create(&ctx.out_dir)?;
    out.json("config.json", cfg)?;
    out.json("array.json", &sites)?;
    out.csv("rabi_flop.csv", &flop)?;
    out.csv("ramsey_fits.csv", &rows)?;
    out.csv("t2star_histogram.csv", &summary.t2star_histogram)?;
    out.json("calibration_summary.json", &summary)?;
    let manifest = out.finish("calibrate", Some(cfg), started, ctx)?;
    Ok(CalibrationRun { manifest, summary, ramsey })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub recipe_checks: usize,
    pub recipe_failures: Vec<usize>,
    pub closure_checks: usize,
    pub closure_failures: Vec<(usize, usize)>,
    /// Per gate: BB1 train matches the bare recipe without noise, and beats it
    /// by at least 100× at 1% amplitude error.
    pub bb1_checks: usize,
    pub bb1_failures: Vec<usize>,
    pub gate_area_pi: f64,
    pub gate_area_bb1_pi: f64,
    pub passed: bool,
}

/// Amplitude error used by the BB1 audit.
pub const BB1_AUDIT_EPSILON: f64 = 0.01;

pub fn audit_table(table: &CliffordTable) -> Result<TableReport> {
    let recipe_failures = table.recipe_failures();
    let closure_failures = table.closure_failures();
    let noisy = PulseNoise::new(BB1_AUDIT_EPSILON, 0.0);
    let mut bb1_failures = Vec::new();
    for g in table.gates() {
        let pulses: Vec<PhysicalPulse> = g.pulses.iter().map(|p| p.at_rabi(1.0)).collect();
        let bare = simulate_sequence(&pulses, &PulseNoise::none(), false)?;
        let robust = simulate_sequence(&pulses, &PulseNoise::none(), true)?;
        let same = equal_up_to_global_phase(&bare, &robust, 1e-9);
        let e_bare = phase_aligned_distance(&simulate_sequence(&pulses, &noisy, false)?, &bare);
        let e_bb1 = phase_aligned_distance(&simulate_sequence(&pulses, &noisy, true)?, &bare);
        let suppressed = pulses.is_empty() || e_bb1 * 100.0 <= e_bare;
        if !(same && suppressed) {
            bb1_failures.push(g.index);
        }
    }
    let pi = std::f64::consts::PI;
    let n = table.len();
    let passed = recipe_failures.is_empty() && closure_failures.is_empty() && bb1_failures.is_empty();
    Ok(TableReport {
        recipe_checks: n,
        recipe_failures,
        closure_checks: n * n,
        closure_failures,
        bb1_checks: n,
        bb1_failures,
        gate_area_pi: table.average_gate_area(false) / pi,
        gate_area_bb1_pi: table.average_gate_area(true) / pi,
        passed,
    })
}

#[derive(Debug, Clone)]
pub struct VerifyRun {
    pub manifest: RunManifest,
    pub report: TableReport,
}

/// Audits `table` and writes the report and the table itself.
pub fn verify_table(table: &CliffordTable, cfg: Option<&ExperimentConfig>, ctx: &RunContext) -> Result<VerifyRun> {
    let started = Instant::now();
    let report = audit_table(table)?;
    let mut out = Outputs::create(&ctx.out_dir)?;
    let mut text = table.to_json()?.into_bytes();
    text.push(b'\n');
    out.bytes("clifford_table.json", &text)?;
    out.json("verify_tables.json", &report)?;
    let manifest = out.finish("verify-tables", cfg, started, ctx)?;
    Ok(VerifyRun { manifest, report })
}

pub fn verify_tables(cfg: Option<&ExperimentConfig>, ctx: &RunContext) -> Result<VerifyRun> {
    verify_table(&CliffordTable::standard(), cfg, ctx)
}
