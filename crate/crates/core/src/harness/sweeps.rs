use rayon::prelude::*;

use crate::channel::{noise_stream, set_snr, synthesize_rx, NoiseModel, SampleStream};
use crate::detector::{
    calibration_key, calibration_statistic, detect_and_cancel_los, detect_and_localize, estimate_geometry,
    hypothesis_count, sweep_hypotheses, CalibrationCache, CalibrationStatistic, GeometryInput, LosGainMode,
    LosThresholds, ThresholdCalibration,
};
use crate::error::{Error, Result};
use crate::receiver::{PeakSearch, SensingReceiver};
use crate::scene::{derive_propagation, Propagation, Scene};
use crate::waveform::{generate_frame, FrameConfig};

use super::config::ExperimentConfig;
use super::oracle::{brute_force_oracle, uniform_grid, OracleResult};
use super::scenes::{draw_scene, ScenePrior};
use super::{derive_seed, pattern_key, tags, RmsePoint, SquaredErrors, TrialRecord};

/// Ground truth of a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub bistatic_range: f64,
    pub bistatic_velocity: f64,
    pub delay: f64,
    pub doppler: f64,
    /// Hypothesis block `l0` holding the echo.
    pub block: usize,
}

impl Truth {
    fn of(prop: &Propagation, cfg: &FrameConfig) -> Self {
        Self {
            bistatic_range: prop.bistatic_range,
            bistatic_velocity: prop.bistatic_velocity,
            delay: prop.delay_nlos,
            doppler: prop.doppler,
            block: prop.nlos_block(cfg),
        }
    }
}

/// How a trial's noise level is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    /// `|alpha_NLOS|^2 / sigma^2` in dB.
    Snr(f64),
    /// Fixed variance in W.
    Variance(f64),
    Noiseless,
}

/// Everything shared by the trials of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSetup {
    pub cfg: FrameConfig,
    pub prior: ScenePrior,
    pub noise: NoiseLevel,
    /// Overrides `|alpha_NLOS|^2 / |alpha_LOS|^2`, dB.
    pub nlos_to_los_db: Option<f64>,
    pub window: usize,
    pub max_range: f64,
    pub m_per: usize,
    pub n_per: usize,
    pub search: PeakSearch,
    pub pilot_seed: u64,
    /// Root of all per-trial seeds of this point.
    pub point_seed: u64,
}

/// One synthesized trial.
#[derive(Debug, Clone)]
pub struct TrialStream {
    pub seed: u64,
    pub scene: Scene,
    pub prop: Propagation,
    pub stream: SampleStream,
    /// Power that thresholds are expressed relative to.
    pub reference_power: f64,
}

impl PointSetup {
    /// Scenario I point of the configured study.
    pub fn scenario_one(config: &ExperimentConfig, pattern: (usize, usize), noise: NoiseLevel, study: u64) -> Result<Self> {
        let x_key = match noise {
            NoiseLevel::Snr(s) => s.to_bits(),
            NoiseLevel::Variance(v) => v.to_bits() ^ 1,
            NoiseLevel::Noiseless => u64::MAX,
        };
        Ok(Self {
            cfg: config.frame_for(pattern)?,
            prior: config.scene,
            noise,
            nlos_to_los_db: None,
            window: config.detection.window,
            max_range: config.detection.max_range,
            m_per: config.detection.m_per,
            n_per: config.detection.n_per,
            search: config.detection.search.to_search(),
            pilot_seed: derive_seed(config.seed, &[tags::PILOTS, pattern_key(pattern)]),
            point_seed: derive_seed(config.seed, &[study, pattern_key(pattern), x_key]),
        })
    }

    /// Scenario II point at a power ratio, noise from the receiver PSD.
    pub fn scenario_two(config: &ExperimentConfig, pattern: (usize, usize), ratio_db: f64) -> Result<Self> {
        let cfg = config.frame_for(pattern)?;
        let noise = NoiseModel::from_psd(config.noise.n0_dbm_per_hz, config.noise.noise_figure_db, &cfg);
        Ok(Self {
            cfg,
            prior: config.ratio_sweep.scene,
            noise: NoiseLevel::Variance(noise.variance),
            nlos_to_los_db: Some(ratio_db),
            window: config.detection.window,
            max_range: config.ratio_sweep.max_range,
            m_per: config.detection.m_per,
            n_per: config.detection.n_per,
            search: config.detection.search.to_search(),
            pilot_seed: derive_seed(config.seed, &[tags::PILOTS, pattern_key(pattern)]),
            point_seed: derive_seed(config.seed, &[tags::RATIO_SWEEP, pattern_key(pattern), ratio_db.to_bits()]),
        })
    }

    pub fn pattern(&self) -> (usize, usize) {
        (self.cfg.pilot_spacing_freq(), self.cfg.pilot_spacing_time())
    }

    pub fn receiver(&self) -> SensingReceiver {
        let x = generate_frame(&self.cfg, self.pilot_seed, 0);
        SensingReceiver::with_search(&self.cfg, &x, self.m_per, self.n_per, self.search)
    }

    pub fn trial_seed(&self, domain: u64, index: u64) -> u64 {
        derive_seed(self.point_seed, &[domain, index])
    }

    pub fn hypotheses(&self) -> usize {
        hypothesis_count(&self.cfg, self.max_range)
    }

    /// Scene, propagation and received stream of trial `seed`.
    pub fn synthesize(&self, seed: u64) -> Result<TrialStream> {
        let scene = draw_scene(&self.prior, derive_seed(seed, &[tags::SCENE]))?;
        let mut prop = derive_propagation(&scene, &self.cfg)?;
        if let Some(ratio_db) = self.nlos_to_los_db {
            prop = prop.with_nlos_magnitude(prop.gain_los.norm() * 10f64.powf(ratio_db / 20.0));
        }
        let noise = match self.noise {
            NoiseLevel::Snr(s) => set_snr(&prop, &NoiseModel::noiseless(), s),
            NoiseLevel::Variance(v) => NoiseModel::with_variance(v),
            NoiseLevel::Noiseless => NoiseModel::noiseless(),
        };
        let frame = generate_frame(&self.cfg, self.pilot_seed, derive_seed(seed, &[tags::DATA]));
        let stream = synthesize_rx(&self.cfg, &frame, &prop, &noise, derive_seed(seed, &[tags::NOISE]));
        let reference_power = if noise.variance > 0.0 {
            noise.variance
        } else {
            prop.gain_nlos.norm_sqr()
        };
        Ok(TrialStream {
            seed,
            scene,
            prop,
            stream,
            reference_power,
        })
    }
}

/// Runs `f` for trials `0..n` in parallel chunks, one receiver per chunk.
/// Output order follows the trial index.
pub(crate) fn run_trials<T, F>(setup: &PointSetup, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut SensingReceiver, u64) -> Result<T> + Sync,
{
    let chunks = (rayon::current_num_threads() * 4).max(1);
    let size = n.div_ceil(chunks).max(1);
    let starts: Vec<usize> = (0..n).step_by(size).collect();
    let parts = starts
        .into_par_iter()
        .map(|start| {
            let mut rx = setup.receiver();
            (start..(start + size).min(n))
                .map(|i| f(&mut rx, i as u64))
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Exclusion-window threshold: target-bearing trials, maximum metric over
/// blocks away from the true block, relative to the reference power.
pub fn calibrate_with_targets(setup: &PointSetup, p_f: f64, trials: usize) -> Result<(ThresholdCalibration, Vec<f64>)> {
    let stats = run_trials(setup, trials, |rx, i| {
        let t = setup.synthesize(setup.trial_seed(tags::CALIBRATION, i))?;
        let sweep = sweep_hypotheses(rx, &t.stream.samples, setup.max_range)?;
        let block = t.prop.nlos_block(&setup.cfg);
        Ok(calibration_statistic(&sweep, Some(block), setup.window) / t.reference_power)
    })?;
    let cal = crate::detector::threshold_from_statistics(&stats, p_f, CalibrationStatistic::ExclusionWindow)?;
    Ok((cal, stats))
}

/// Noise-only thresholds relative to the noise variance: the block-sweep
/// maximum, and the peak of a single window.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCalibration {
    pub sweep: ThresholdCalibration,
    pub window: ThresholdCalibration,
    pub sweep_statistics: Vec<f64>,
}

pub fn calibrate_noise_only(setup: &PointSetup, p_f: f64, trials: usize) -> Result<NoiseCalibration> {
    let pairs = run_trials(setup, trials, |rx, i| {
        let stream = noise_stream(
            &setup.cfg,
            &NoiseModel::with_variance(1.0),
            derive_seed(setup.trial_seed(tags::CALIBRATION, i), &[tags::NOISE]),
        );
        let sweep = sweep_hypotheses(rx, &stream.samples, setup.max_range)?;
        Ok((calibration_statistic(&sweep, None, setup.window), sweep.metric(1)))
    })?;
    let (sweep_stats, window_stats): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(NoiseCalibration {
        sweep: crate::detector::threshold_from_statistics(&sweep_stats, p_f, CalibrationStatistic::NoiseOnly)?,
        window: crate::detector::threshold_from_statistics(&window_stats, p_f, CalibrationStatistic::NoiseOnly)?,
        sweep_statistics: sweep_stats,
    })
}

fn snr_of(noise: NoiseLevel) -> Option<f64> {
    match noise {
        NoiseLevel::Snr(s) => Some(s),
        NoiseLevel::Variance(v) => Some(-10.0 * v.log10()),
        NoiseLevel::Noiseless => None,
    }
}

/// Relative Scenario I threshold for a point, from the cache or freshly
/// calibrated.
pub fn threshold_for(config: &ExperimentConfig, setup: &PointSetup, cache: &mut CalibrationCache) -> Result<f64> {
    let d = &config.detection;
    let statistic = d.statistic;
    if statistic == CalibrationStatistic::NoiseOnly && setup.noise == NoiseLevel::Noiseless {
        return Err(Error::InvalidConfig("noise-only calibration needs a noisy stream".into()));
    }
    let snr_key = match statistic {
        CalibrationStatistic::NoiseOnly => None,
        CalibrationStatistic::ExclusionWindow => Some(snr_of(setup.noise).unwrap_or(f64::INFINITY)),
    };
    let key = calibration_key(
        &setup.cfg,
        setup.hypotheses(),
        setup.m_per,
        setup.n_per,
        statistic,
        snr_key,
        d.p_f,
        d.calibration_trials,
        config.seed,
    );
    if let Some(k) = cache.get(&key) {
        return Ok(k);
    }
    let cal_setup = PointSetup {
        point_seed: derive_seed(config.seed, &[tags::CALIBRATION, pattern_key(setup.pattern()), snr_key.unwrap_or(0.0).to_bits()]),
        ..setup.clone()
    };
    let kappa = match statistic {
        CalibrationStatistic::ExclusionWindow => calibrate_with_targets(&cal_setup, d.p_f, d.calibration_trials)?.0.kappa,
        CalibrationStatistic::NoiseOnly => calibrate_noise_only(&cal_setup, d.p_f, d.calibration_trials)?.sweep.kappa,
    };
    cache.insert(key, kappa);
    Ok(kappa)
}

/// Sweep, first crossing, fine search and geometry for one Scenario I trial.
pub fn scenario_one_trial(setup: &PointSetup, rx: &mut SensingReceiver, kappa: f64, seed: u64) -> Result<TrialRecord> {
    let t = setup.synthesize(seed)?;
    let sweep = sweep_hypotheses(rx, &t.stream.samples, setup.max_range)?;
    let geometry = GeometryInput {
        baseline: t.scene.baseline(),
        aoa_pointing: t.scene.aoa_pointing(),
    };
    let estimate = detect_and_localize(
        rx,
        &t.stream.samples,
        &sweep,
        kappa * t.reference_power,
        setup.window,
        &geometry,
    )?;
    let truth = Truth::of(&t.prop, &setup.cfg);
    let range_error = estimate.map(|e| e.geometry.bistatic_range - truth.bistatic_range);
    let velocity_error = estimate
        .and_then(|e| e.geometry.bistatic_velocity)
        .map(|v| v - truth.bistatic_velocity);
    Ok(TrialRecord {
        seed,
        scene: t.scene,
        truth,
        estimate,
        range_error,
        velocity_error,
    })
}

fn point_from_records(x: f64, pattern: (usize, usize), records: &[TrialRecord]) -> RmsePoint {
    RmsePoint::from_errors(
        x,
        pattern,
        records.len(),
        records.iter().map(|r| (r.range_error, r.velocity_error)),
    )
}

/// Scenario I range and velocity RMSE against SNR for every pilot pattern.
pub fn run_rmse_sweep(config: &ExperimentConfig, cache: &mut CalibrationCache) -> Result<Vec<RmsePoint>> {
    config.validate()?;
    let mut points = Vec::new();
    for &pattern in &config.snr_sweep.patterns {
        for &snr in &config.snr_sweep.snr_db {
            let setup = PointSetup::scenario_one(config, pattern, NoiseLevel::Snr(snr), tags::SNR_SWEEP)?;
            let kappa = threshold_for(config, &setup, cache)?;
            let records = run_trials(&setup, config.snr_sweep.trials, |rx, i| {
                scenario_one_trial(&setup, rx, kappa, setup.trial_seed(tags::EVALUATION, i))
            })?;
            points.push(point_from_records(snr, pattern, &records));
        }
    }
    Ok(points)
}

/// Velocity RMSE for one (SNR, AoA error) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AoaRow {
    pub snr_db: f64,
    pub aoa_error_deg: f64,
    pub pattern: (usize, usize),
    pub n_trials: usize,
    pub n_detected: usize,
    pub rmse_velocity: Option<f64>,
}

/// Re-solves the geometry of every detected trial with the receive pointing
/// offset by each AoA error. Detection is shared across errors.
pub fn aoa_rows(snr_db: f64, pattern: (usize, usize), fc: f64, records: &[TrialRecord], errors_deg: &[f64]) -> Vec<AoaRow> {
    errors_deg
        .iter()
        .map(|&err| {
            let mut acc = SquaredErrors::default();
            for r in records {
                let Some(e) = r.estimate else { continue };
                let input = GeometryInput {
                    baseline: r.scene.baseline(),
                    aoa_pointing: r.scene.aoa() + err.to_radians(),
                };
                let g = estimate_geometry(e.window.delay, e.window.doppler, &input, fc);
                if let Some(v) = g.bistatic_velocity {
                    acc.push(v - r.truth.bistatic_velocity);
                }
            }
            AoaRow {
                snr_db,
                aoa_error_deg: err,
                pattern,
                n_trials: records.len(),
                n_detected: records.iter().filter(|r| r.detected()).count(),
                rmse_velocity: acc.rmse(),
            }
        })
        .collect()
}

pub fn run_aoa_study(config: &ExperimentConfig, cache: &mut CalibrationCache) -> Result<Vec<AoaRow>> {
    config.validate()?;
    let study = &config.aoa_study;
    let mut rows = Vec::new();
    for &snr in &study.snr_db {
        let setup = PointSetup::scenario_one(config, study.pattern, NoiseLevel::Snr(snr), tags::AOA_STUDY)?;
        let kappa = threshold_for(config, &setup, cache)?;
        let records = run_trials(&setup, study.trials, |rx, i| {
            scenario_one_trial(&setup, rx, kappa, setup.trial_seed(tags::EVALUATION, i))
        })?;
        rows.extend(aoa_rows(snr, study.pattern, setup.cfg.carrier_frequency(), &records, &study.aoa_error_deg));
    }
    Ok(rows)
}

/// One Scenario II trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioTrial {
    pub seed: u64,
    pub truth: Truth,
    pub los_detected: bool,
    pub fell_back: bool,
    pub residual_db: Option<f64>,
    pub range_error: Option<f64>,
    pub velocity_error: Option<f64>,
}

pub fn ratio_trial(
    setup: &PointSetup,
    rx: &mut SensingReceiver,
    thresholds: &LosThresholds,
    gain: super::config::LosGainChoice,
    seed: u64,
) -> Result<RatioTrial> {
    let t = setup.synthesize(seed)?;
    let geometry = GeometryInput {
        baseline: t.scene.baseline(),
        aoa_pointing: t.scene.aoa_pointing(),
    };
    let scaled = LosThresholds {
        los_sweep: thresholds.los_sweep * t.reference_power,
        nlos_window: thresholds.nlos_window * t.reference_power,
    };
    let mode: LosGainMode = gain.to_mode(t.prop.gain_los);
    let out = detect_and_cancel_los(rx, &t.stream.samples, setup.max_range, &scaled, setup.window, &geometry, mode)?;
    let truth = Truth::of(&t.prop, &setup.cfg);
    Ok(RatioTrial {
        seed,
        truth,
        los_detected: out.los.is_some(),
        fell_back: out.fell_back,
        residual_db: out.residual_db,
        range_error: out.nlos.map(|e| e.geometry.bistatic_range - truth.bistatic_range),
        velocity_error: out
            .nlos
            .and_then(|e| e.geometry.bistatic_velocity)
            .map(|v| v - truth.bistatic_velocity),
    })
}

/// Noise-only Scenario II thresholds relative to the noise variance.
pub fn ratio_thresholds(config: &ExperimentConfig, pattern: (usize, usize), cache: &mut CalibrationCache) -> Result<LosThresholds> {
    let setup = PointSetup::scenario_two(config, pattern, 0.0)?;
    let trials = config.detection.calibration_trials;
    let p_f = config.ratio_sweep.p_f;
    let key = |stat: &str| {
        format!(
            "{};scenario=two;{stat}",
            calibration_key(
                &setup.cfg,
                setup.hypotheses(),
                setup.m_per,
                setup.n_per,
                CalibrationStatistic::NoiseOnly,
                None,
                p_f,
                trials,
                config.seed
            )
        )
    };
    if let (Some(a), Some(b)) = (cache.get(&key("sweep")), cache.get(&key("window"))) {
        return Ok(LosThresholds {
            los_sweep: a,
            nlos_window: b,
        });
    }
    let cal_setup = PointSetup {
        point_seed: derive_seed(config.seed, &[tags::CALIBRATION, tags::RATIO_SWEEP, pattern_key(pattern)]),
        ..setup
    };
    let cal = calibrate_noise_only(&cal_setup, p_f, trials)?;
    cache.insert(key("sweep"), cal.sweep.kappa);
    cache.insert(key("window"), cal.window.kappa);
    Ok(LosThresholds {
        los_sweep: cal.sweep.kappa,
        nlos_window: cal.window.kappa,
    })
}

/// Scenario II NLOS RMSE against the NLOS-to-LOS power ratio.
pub fn run_ratio_sweep(config: &ExperimentConfig, cache: &mut CalibrationCache) -> Result<Vec<RmsePoint>> {
    config.validate()?;
    let sweep = &config.ratio_sweep;
    let mut points = Vec::new();
    for &pattern in &sweep.patterns {
        let thresholds = ratio_thresholds(config, pattern, cache)?;
        for &ratio in &sweep.ratio_db {
            let setup = PointSetup::scenario_two(config, pattern, ratio)?;
            let trials = run_trials(&setup, sweep.trials, |rx, i| {
                ratio_trial(&setup, rx, &thresholds, sweep.los_gain, setup.trial_seed(tags::EVALUATION, i))
            })?;
            points.push(RmsePoint::from_errors(
                ratio,
                pattern,
                trials.len(),
                trials.iter().map(|t| (t.range_error, t.velocity_error)),
            ));
        }
    }
    Ok(points)
}

/// Pipeline estimate next to the brute-force matched-filter maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub seed: u64,
    pub truth: Truth,
    /// `None` when the pipeline missed the target.
    pub pipeline: Option<(f64, f64)>,
    pub oracle: OracleResult,
}

impl OracleComparison {
    /// `(|delay difference|, |Doppler difference|)` between pipeline and oracle.
    pub fn disagreement(&self) -> Option<(f64, f64)> {
        self.pipeline
            .map(|(d, f)| ((d - self.oracle.delay).abs(), (f - self.oracle.doppler).abs()))
    }
}

/// Oracle grid: +-3 ns in 0.25 ns steps and +-20 Hz in 1 Hz steps around the truth.
pub const ORACLE_DELAY_GRID: (f64, f64) = (3e-9, 0.25e-9);
pub const ORACLE_DOPPLER_GRID: (f64, f64) = (20.0, 1.0);

/// `kappa` is relative to the reference power; `None` puts the threshold at
/// half the largest block metric of the trial, meant for noiseless streams.
pub fn compare_with_oracle(setup: &PointSetup, rx: &mut SensingReceiver, kappa: Option<f64>, seed: u64) -> Result<OracleComparison> {
    let t = setup.synthesize(seed)?;
    let sweep = sweep_hypotheses(rx, &t.stream.samples, setup.max_range)?;
    let kappa = kappa.map_or(0.5 * sweep.max_metric(), |k| k * t.reference_power);
    let window = crate::detector::detect_window(rx, &t.stream.samples, &sweep, kappa, setup.window)?;
    let truth = Truth::of(&t.prop, &setup.cfg);
    let frame = generate_frame(&setup.cfg, setup.pilot_seed, derive_seed(seed, &[tags::DATA]));
    let delays = uniform_grid(truth.delay, ORACLE_DELAY_GRID.0, ORACLE_DELAY_GRID.1);
    let dopplers = uniform_grid(truth.doppler, ORACLE_DOPPLER_GRID.0, ORACLE_DOPPLER_GRID.1);
    let oracle = brute_force_oracle(&t.stream.samples, &frame, &setup.cfg, &delays, &dopplers);
    Ok(OracleComparison {
        seed,
        truth,
        pipeline: window.map(|w| (w.delay, w.doppler)),
        oracle,
    })
}

/// Oracle comparison over `n` trials of a point.
pub fn run_oracle_check(setup: &PointSetup, kappa: Option<f64>, n: usize) -> Result<Vec<OracleComparison>> {
    run_trials(setup, n, |rx, i| compare_with_oracle(setup, rx, kappa, setup.trial_seed(tags::EVALUATION, i)))
}
