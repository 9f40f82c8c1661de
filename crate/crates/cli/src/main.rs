use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tweezer_rb::harness::{run_calibration, run_ndro_characterization, run_rb, verify_tables};
use tweezer_rb::{Error, ExperimentConfig, RunContext};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

#[derive(Parser)]
#[command(name = "tweezer-rb", version, about = "Randomized benchmarking simulator for tweezer-array qubits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Randomized benchmarking over the array, per the configured readout mode(s).
    Rb(RunArgs),
    /// NDRO histograms, duration sweep and trap-depth sweep.
    Ndro(RunArgs),
    /// Rabi flop and per-site Ramsey T2* calibration.
    Calibrate(RunArgs),
    /// Audit the Clifford tables: recipes, group closure and BB1 behaviour.
    VerifyTables(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall-clock time in the manifest.
    #[arg(long)]
    timing: bool,
}

impl RunArgs {
    fn config(&self) -> Result<Option<ExperimentConfig>, Error> {
        let Some(path) = &self.config else { return Ok(None) };
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(Some(cfg))
    }

    fn required_config(&self) -> Result<ExperimentConfig, Error> {
        self.config()?.ok_or_else(|| Error::Config("--config is required for this command".into()))
    }

    fn context(&self, default_out: &str) -> RunContext {
        let workers = self
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(default_out));
        let mut ctx = RunContext::new(out, workers);
        ctx.record_timing = self.timing;
        ctx
    }
}

enum Outcome {
    Done,
    VerificationFailed,
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    match cli.command {
        Command::Rb(a) => {
            let cfg = a.required_config()?;
            let ctx = a.context(&cfg.output_dir);
            let r = run_rb(&cfg, &ctx)?;
            for m in &r.summary.modes {
                let s = &m.summary;
                println!(
                    "{:?}: mean F2 = {:.6} ± {:.6} (sem), mean SPAM = {:.4}, sites = {}",
                    m.mode, s.fidelity.mean, s.fidelity.sem, s.d_spam.mean, s.sites
                );
            }
            if let Some(ratio) = r.summary.spam_ratio {
                println!("SPAM ratio destructive/NDRO = {ratio:.3}");
            }
            println!("predicted F2 = {:.6}", r.summary.predicted_fidelity);
            println!("wrote {} files to {}", r.manifest.files.len(), ctx.out_dir.display());
        }
        Command::Ndro(a) => {
            let cfg = a.required_config()?;
            let ctx = a.context(&cfg.output_dir);
            let r = run_ndro_characterization(&cfg, &ctx)?;
            let p = &r.summary.point;
            println!(
                "t = {} ms, U = {} mK: threshold {}, fidelity {:.4}, survival {:.4}, leakage {:.4}, P_det {:.4}",
                p.duration_ms, p.depth_mk, p.threshold, p.fidelity, p.survival, p.leakage, p.p_det_conditional
            );
            println!("wrote {} files to {}", r.manifest.files.len(), ctx.out_dir.display());
        }
        Command::Calibrate(a) => {
            let cfg = a.required_config()?;
            let ctx = a.context(&cfg.output_dir);
            let r = run_calibration(&cfg, &ctx)?;
            let s = &r.summary;
            println!("Rabi frequency {:.4} ± {:.4} kHz", s.rabi_khz, s.rabi_khz_se);
            match &s.t2star_ms {
                Some(t) => println!("T2* {:.3} ms mean, {:.3} ms std over {} sites", t.mean, t.std, r.ramsey.len()),
                None => println!("no site resolved a finite T2*"),
            }
            println!("wrote {} files to {}", r.manifest.files.len(), ctx.out_dir.display());
        }
        Command::VerifyTables(a) => {
            let cfg = a.config()?;
            let ctx = a.context("out/verify-tables");
            let r = verify_tables(cfg.as_ref(), &ctx)?;
            let t = &r.report;
            println!("recipes: {}/{} ok", t.recipe_checks - t.recipe_failures.len(), t.recipe_checks);
            println!("closure: {}/{} ok", t.closure_checks - t.closure_failures.len(), t.closure_checks);
            println!("bb1: {}/{} ok", t.bb1_checks - t.bb1_failures.len(), t.bb1_checks);
            println!("mean gate area: {:.4}π bare, {:.4}π with BB1", t.gate_area_pi, t.gate_area_bb1_pi);
            if !t.passed {
                return Ok(Outcome::VerificationFailed);
            }
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => {
            eprintln!("table verification failed");
            ExitCode::from(EXIT_VERIFICATION)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}
