//! `bisac`: threshold calibration, Monte-Carlo sweeps, oracle check and raw
//! sample dumps driven by a TOML experiment file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use bisac_core::detector::{sweep_hypotheses, CalibrationCache, CalibrationStatistic};
use bisac_core::harness::{
    aoa_csv, ratio_thresholds, rmse_csv, run_aoa_study, run_oracle_check, run_ratio_sweep, run_rmse_sweep, tags,
    threshold_for, ExperimentConfig, NoiseLevel, PointSetup,
};
use bisac_core::Error;

#[derive(Parser)]
#[command(name = "bisac", version, about = "Bistatic OFDM sensing beyond the cyclic prefix")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML); defaults to the reference setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Trial count override for the chosen subcommand.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate and cache the thresholds used by the sweeps.
    Calibrate,
    /// Range and velocity RMSE against SNR (Scenario I).
    SweepSnr,
    /// NLOS RMSE against the NLOS-to-LOS power ratio (Scenario II).
    SweepRatio,
    /// Velocity RMSE under receive-pointing errors.
    AoaStudy,
    /// Compare pipeline estimates with a brute-force matched filter on noiseless scenes.
    OracleCheck {
        /// Pilot pattern `n_p,m_p`.
        #[arg(long, value_parser = parse_pattern, default_value = "2,1")]
        pattern: (usize, usize),
    },
    /// Write one trial's received samples and the delay-Doppler map of its echo block.
    DumpSamples {
        #[arg(long, value_parser = parse_pattern, default_value = "2,1")]
        pattern: (usize, usize),
        /// SNR in dB; omit for a noiseless stream.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
        /// Trial index within the point.
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Scenario II geometry with this NLOS-to-LOS ratio in dB.
        #[arg(long, allow_hyphen_values = true)]
        ratio: Option<f64>,
    },
}

fn parse_pattern(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected n_p,m_p")?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn load_config(c: &Common, command: &Command) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output.dir = o.clone();
    }
    if let Some(n) = c.trials {
        match command {
            Command::Calibrate => cfg.detection.calibration_trials = n,
            Command::SweepSnr => cfg.snr_sweep.trials = n,
            Command::SweepRatio => cfg.ratio_sweep.trials = n,
            Command::AoaStudy => cfg.aoa_study.trials = n,
            Command::OracleCheck { .. } | Command::DumpSamples { .. } => {}
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_cache(cfg: &ExperimentConfig) -> Result<CalibrationCache> {
    Ok(match cfg.calibration_cache_path() {
        Some(p) => CalibrationCache::load(&p)?,
        None => CalibrationCache::default(),
    })
}

fn save_cache(cfg: &ExperimentConfig, cache: &CalibrationCache) -> Result<()> {
    if let Some(p) = cfg.calibration_cache_path() {
        cache.save(&p).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn calibrate(cfg: &ExperimentConfig) -> Result<()> {
    let mut cache = load_cache(cfg)?;
    let mut out = String::from("study,pattern,snr_db,statistic,kappa_relative\n");
    let snrs: Vec<Option<f64>> = match cfg.detection.statistic {
        CalibrationStatistic::NoiseOnly => vec![None],
        CalibrationStatistic::ExclusionWindow => cfg.snr_sweep.snr_db.iter().map(|&s| Some(s)).collect(),
    };
    for &pattern in &cfg.snr_sweep.patterns {
        for &snr in &snrs {
            let noise = snr.map(NoiseLevel::Snr).unwrap_or(NoiseLevel::Variance(1.0));
            let setup = PointSetup::scenario_one(cfg, pattern, noise, tags::SNR_SWEEP)?;
            let k = threshold_for(cfg, &setup, &mut cache)?;
            let snr = snr.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(out, "snr_sweep,{}x{},{snr},{},{k:e}", pattern.0, pattern.1, cfg.detection.statistic.name());
        }
        save_cache(cfg, &cache)?;
    }
    for &pattern in &cfg.ratio_sweep.patterns {
        let th = ratio_thresholds(cfg, pattern, &mut cache)?;
        let _ = writeln!(out, "ratio_sweep,{}x{},,noise_only_sweep,{:e}", pattern.0, pattern.1, th.los_sweep);
        let _ = writeln!(out, "ratio_sweep,{}x{},,noise_only_window,{:e}", pattern.0, pattern.1, th.nlos_window);
        save_cache(cfg, &cache)?;
    }
    write(&cfg.output.dir, "thresholds.csv", &out)?;
    Ok(())
}

fn oracle_check(cfg: &ExperimentConfig, pattern: (usize, usize), trials: usize) -> Result<()> {
    let setup = PointSetup::scenario_one(cfg, pattern, NoiseLevel::Noiseless, tags::EVALUATION)?;
    let rows = run_oracle_check(&setup, None, trials)?;
    let mut out = String::from("seed,true_delay_s,true_doppler_hz,pipeline_delay_s,pipeline_doppler_hz,oracle_delay_s,oracle_doppler_hz,oracle_on_boundary\n");
    let mut worst = (0.0f64, 0.0f64);
    let mut missed = 0;
    for r in &rows {
        let (pd, pf) = r.pipeline.map(|(d, f)| (d.to_string(), f.to_string())).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{pd},{pf},{},{},{}",
            r.seed, r.truth.delay, r.truth.doppler, r.oracle.delay, r.oracle.doppler, r.oracle.on_boundary
        );
        match r.disagreement() {
            Some((d, f)) => worst = (worst.0.max(d), worst.1.max(f)),
            None => missed += 1,
        }
    }
    write(&cfg.output.dir, "oracle_check.csv", &out)?;
    println!(
        "scenes={} missed={missed} max_delay_diff_ns={:.4} max_doppler_diff_hz={:.4}",
        rows.len(),
        worst.0 * 1e9,
        worst.1
    );
    Ok(())
}

fn dump_samples(cfg: &ExperimentConfig, pattern: (usize, usize), snr: Option<f64>, index: u64, ratio: Option<f64>) -> Result<()> {
    let setup = match ratio {
        Some(r) => PointSetup::scenario_two(cfg, pattern, r)?,
        None => PointSetup::scenario_one(cfg, pattern, snr.map(NoiseLevel::Snr).unwrap_or(NoiseLevel::Noiseless), tags::EVALUATION)?,
    };
    let seed = setup.trial_seed(tags::EVALUATION, index);
    let t = setup.synthesize(seed)?;
    let raw = cfg.output.dir.join(format!("samples_{index}.iq"));
    t.stream.write_raw(&raw).with_context(|| format!("writing {}", raw.display()))?;
    println!("wrote {} (+ .txt sidecar)", raw.display());
    let mut rx = setup.receiver();
    let sweep = sweep_hypotheses(&mut rx, &t.stream.samples, setup.max_range)?;
    let block = t.prop.nlos_block(&setup.cfg);
    let mut metrics = String::from("block,offset,eta\n");
    for (l, eta) in sweep.metrics().iter().enumerate() {
        let _ = writeln!(metrics, "{},{},{eta:e}", l + 1, (l + 1) * setup.cfg.cp_samples());
    }
    write(&cfg.output.dir, &format!("metrics_{index}.csv"), &metrics)?;
    let grid = rx.ls_grid(&t.stream.samples, block * setup.cfg.cp_samples())?;
    write(&cfg.output.dir, &format!("periodogram_{index}_block{block}.csv"), &rx.map(&grid).to_csv())?;
    println!(
        "true: R_bis={:.3} m v_bis={:.4} m/s delay={:.4e} s doppler={:.3} Hz block={block}",
        t.prop.bistatic_range, t.prop.bistatic_velocity, t.prop.delay_nlos, t.prop.doppler
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let cfg = load_config(&cli.common, &cli.command)?;
    std::fs::create_dir_all(&cfg.output.dir).with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    match cli.command {
        Command::Calibrate => calibrate(&cfg)?,
        Command::SweepSnr => {
            let mut cache = load_cache(&cfg)?;
            let points = run_rmse_sweep(&cfg, &mut cache)?;
            save_cache(&cfg, &cache)?;
            write(&cfg.output.dir, "rmse_snr.csv", &rmse_csv(&points))?;
        }
        Command::SweepRatio => {
            let mut cache = load_cache(&cfg)?;
            let points = run_ratio_sweep(&cfg, &mut cache)?;
            save_cache(&cfg, &cache)?;
            write(&cfg.output.dir, "rmse_ratio.csv", &rmse_csv(&points))?;
        }
        Command::AoaStudy => {
            let mut cache = load_cache(&cfg)?;
            let rows = run_aoa_study(&cfg, &mut cache)?;
            save_cache(&cfg, &cache)?;
            write(&cfg.output.dir, "aoa_study.csv", &aoa_csv(&rows))?;
        }
        Command::OracleCheck { pattern } => oracle_check(&cfg, pattern, cli.common.trials.unwrap_or(20))?,
        Command::DumpSamples {
            pattern,
            snr,
            index,
            ratio,
        } => dump_samples(&cfg, pattern, snr, index, ratio)?,
    }
    Ok(())
}

fn error_code(e: &anyhow::Error) -> &'static str {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::InvalidFrame(_)) => "invalid_frame",
        Some(Error::InvalidScene(_)) => "invalid_scene",
        Some(Error::InvalidConfig(_)) => "invalid_config",
        Some(Error::InsufficientSamples { .. }) => "insufficient_samples",
        Some(Error::TooFewTrials { .. }) => "too_few_trials",
        Some(Error::Parse(_)) => "parse",
        Some(Error::Io(_)) => "io",
        None if e.chain().any(|c| c.is::<std::io::Error>()) => "io",
        None => "other",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('"', "'");
            eprintln!("error code={} message=\"{msg}\"", error_code(&e));
            ExitCode::FAILURE
        }
    }
}
