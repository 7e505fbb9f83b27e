//! Sliding-window target detection beyond the cyclic prefix.
//!
//! A sweep evaluates the periodogram peak at every CP-length block offset
//! `l N_cp`, `1 <= l <= L`. The first block whose metric reaches the
//! threshold opens a fine search over `W N_cp` per-sample offsets; the best
//! window gives the delay and Doppler estimates, which the bistatic geometry
//! solver turns into range and velocity.
//!
//! Sample index `k` denotes the hypothesis "delay in `[k T_s, k T_s + T_cp)`",
//! which is served by the demodulation window at offset `k + N_cp`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::receiver::{LsGrid, Peak, SensingReceiver};
use crate::waveform::FrameConfig;
use crate::SPEED_OF_LIGHT;

/// `L = ceil(R_max / (c T_cp))`, at least one block.
pub fn hypothesis_count(cfg: &FrameConfig, max_range: f64) -> usize {
    let blocks = max_range / (SPEED_OF_LIGHT * cfg.cp_duration());
    // absorb rounding noise such as 3000 / 300 = 10.000000000000002
    ((blocks - 1e-9).ceil() as usize).max(1)
}

/// Sample indices of the fine search opened by first crossing `h`.
pub fn fine_search_indices(h: usize, window: usize, cp_samples: usize) -> Range<usize> {
    (h - 1) * cp_samples..(h + window - 1) * cp_samples
}

/// Per-block decision metrics of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSweep {
    /// `peaks[l - 1]` belongs to hypothesis `l`.
    pub peaks: Vec<Peak>,
    pub cp_samples: usize,
}

impl HypothesisSweep {
    pub fn hypotheses(&self) -> usize {
        self.peaks.len()
    }

    /// `eta_l` for `l` in `1..=L`.
    pub fn metric(&self, l: usize) -> f64 {
        self.peaks[l - 1].eta
    }

    pub fn metrics(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.eta).collect()
    }

    /// Smallest `l` with `eta_l >= kappa`.
    pub fn first_crossing(&self, kappa: f64) -> Option<usize> {
        self.peaks.iter().position(|p| p.eta >= kappa).map(|i| i + 1)
    }

    /// Block with the largest metric, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.peaks.iter().enumerate() {
            if p.eta > self.peaks[best].eta {
                best = i;
            }
        }
        best + 1
    }

    /// Largest metric over blocks outside `{l0 - floor(W/2), ..., l0 + floor((W+1)/2)}`;
    /// 0 when every block is excluded.
    pub fn max_outside(&self, true_block: usize, window: usize) -> f64 {
        let lo = true_block.saturating_sub(window / 2);
        let hi = true_block + (window + 1) / 2;
        self.peaks
            .iter()
            .enumerate()
            .filter(|(i, _)| !(lo..=hi).contains(&(i + 1)))
            .map(|(_, p)| p.eta)
            .fold(0.0, f64::max)
    }

    pub fn max_metric(&self) -> f64 {
        self.peaks.iter().map(|p| p.eta).fold(0.0, f64::max)
    }
}

pub fn sweep_hypotheses(rx: &mut SensingReceiver, samples: &[Complex64], max_range: f64) -> Result<HypothesisSweep> {
    if !(max_range > 0.0) {
        return Err(Error::InvalidConfig(format!("maximum range must be positive, got {max_range}")));
    }
    let cfg = *rx.config();
    let cp = cfg.cp_samples();
    let peaks = (1..=hypothesis_count(&cfg, max_range))
        .map(|l| rx.metric_at(samples, l * cp))
        .collect::<Result<Vec<_>>>()?;
    Ok(HypothesisSweep { peaks, cp_samples: cp })
}

/// Delay and Doppler of the winning window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowEstimate {
    /// First block whose metric reached the threshold.
    pub first_crossing: usize,
    /// Winning sample index `k_hat`.
    pub sample_index: usize,
    pub delay: f64,
    pub doppler: f64,
    pub peak: Peak,
}

impl WindowEstimate {
    pub fn window_offset(&self, cfg: &FrameConfig) -> usize {
        self.sample_index + cfg.cp_samples()
    }
}

/// Range, distances, bistatic angle and velocity recovered from delay,
/// Doppler, the baseline and the receive pointing angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub bistatic_range: f64,
    pub d_tx: f64,
    pub d_rx: f64,
    pub bistatic_angle: f64,
    /// `None` when `cos(beta/2)` is too small to divide by.
    pub bistatic_velocity: Option<f64>,
    /// The `d_rx` denominator vanished; distances and angle are unreliable.
    pub unstable: bool,
}

/// Final Scenario I output for a detected target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEstimate {
    pub window: WindowEstimate,
    pub geometry: Geometry,
}

/// Known receiver-side geometry: baseline length and receive pointing angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryInput {
    pub baseline: f64,
    pub aoa_pointing: f64,
}

pub fn estimate_geometry(delay: f64, doppler: f64, input: &GeometryInput, carrier_frequency: f64) -> Geometry {
    let range = SPEED_OF_LIGHT * delay;
    let d = input.baseline;
    let denom = 2.0 * (range - d * input.aoa_pointing.cos());
    let unstable = denom.abs() <= 1e-9 * range.abs().max(d);
    let d_rx = if unstable { range / 2.0 } else { (range * range - d * d) / denom };
    let d_tx = range - d_rx;
    let cos_beta = (d_tx * d_tx + d_rx * d_rx - d * d) / (2.0 * d_tx * d_rx);
    let bistatic_angle = if cos_beta.is_finite() { cos_beta.clamp(-1.0, 1.0).acos() } else { PI };
    let half = (bistatic_angle / 2.0).cos();
    let bistatic_velocity =
        (half >= 1e-6).then(|| doppler * SPEED_OF_LIGHT / (2.0 * carrier_frequency * half));
    Geometry {
        bistatic_range: range,
        d_tx,
        d_rx,
        bistatic_angle,
        bistatic_velocity,
        unstable: unstable || !cos_beta.is_finite(),
    }
}

/// First crossing and fine search. Returns `None` under the null hypothesis.
pub fn detect_window(
    rx: &mut SensingReceiver,
    samples: &[Complex64],
    sweep: &HypothesisSweep,
    kappa: f64,
    window: usize,
) -> Result<Option<WindowEstimate>> {
    if window == 0 {
        return Err(Error::InvalidConfig("fine-search window must be at least 1".into()));
    }
    let Some(h) = sweep.first_crossing(kappa) else {
        return Ok(None);
    };
    let cfg = *rx.config();
    let cp = cfg.cp_samples();
    let mut best: Option<(usize, Peak)> = None;
    for k in fine_search_indices(h, window, cp) {
        let offset = k + cp;
        // block offsets were already evaluated by the sweep
        let peak = if offset % cp == 0 && offset / cp <= sweep.hypotheses() {
            sweep.peaks[offset / cp - 1]
        } else {
            match rx.metric_at(samples, offset) {
                Ok(p) => p,
                Err(Error::InsufficientSamples { .. }) => break,
                Err(e) => return Err(e),
            }
        };
        if best.map_or(true, |(_, b)| peak.eta > b.eta) {
            best = Some((k, peak));
        }
    }
    let Some((k, peak)) = best else {
        return Ok(None);
    };
    let scale = rx.scale();
    Ok(Some(WindowEstimate {
        first_crossing: h,
        sample_index: k,
        delay: scale.delay(k + cp, peak.delay_frac),
        doppler: scale.doppler(peak.doppler_frac),
        peak,
    }))
}

pub fn detect_and_localize(
    rx: &mut SensingReceiver,
    samples: &[Complex64],
    sweep: &HypothesisSweep,
    kappa: f64,
    window: usize,
    geometry: &GeometryInput,
) -> Result<Option<TargetEstimate>> {
    let fc = rx.config().carrier_frequency();
    Ok(detect_window(rx, samples, sweep, kappa, window)?.map(|w| TargetEstimate {
        window: w,
        geometry: estimate_geometry(w.delay, w.doppler, geometry, fc),
    }))
}

/// Which per-trial maximum a threshold is the quantile of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationStatistic {
    /// Target-free streams, maximum over all blocks.
    NoiseOnly,
    /// Target present, maximum over blocks outside the true block's
    /// neighbourhood.
    ExclusionWindow,
}

impl CalibrationStatistic {
    pub fn name(&self) -> &'static str {
        match self {
            CalibrationStatistic::NoiseOnly => "noise_only",
            CalibrationStatistic::ExclusionWindow => "exclusion_window",
        }
    }
}

/// Empirical threshold with its provenance. `kappa` is relative to a
/// reference power (the noise variance, or the echo power when noiseless),
/// so it transfers to any stream with the same reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCalibration {
    pub p_f: f64,
    pub kappa: f64,
    pub trials: usize,
    pub statistic: CalibrationStatistic,
    /// Index of `kappa` in the sorted statistics.
    pub quantile_index: usize,
    pub max_statistic: f64,
}

impl ThresholdCalibration {
    pub fn threshold(&self, reference_power: f64) -> f64 {
        self.kappa * reference_power
    }

    /// Share of `statistics` at or above `kappa`.
    pub fn exceedance(&self, statistics: &[f64]) -> f64 {
        statistics.iter().filter(|&&s| s >= self.kappa).count() as f64 / statistics.len() as f64
    }
}

/// Smallest trial count accepted for a target `p_f`: ten expected exceedances.
pub fn min_trials(p_f: f64) -> usize {
    (10.0 / p_f).ceil() as usize
}

/// `kappa` = the `floor((1 - P_f) n)`-th smallest statistic, so that a share
/// of about `P_f` of the trials reaches it.
pub fn threshold_from_statistics(
    statistics: &[f64],
    p_f: f64,
    statistic: CalibrationStatistic,
) -> Result<ThresholdCalibration> {
    if !(p_f > 0.0 && p_f < 1.0) {
        return Err(Error::InvalidConfig(format!("false-alarm probability must lie in (0, 1), got {p_f}")));
    }
    let required = min_trials(p_f);
    if statistics.len() < required {
        return Err(Error::TooFewTrials {
            p_f,
            required,
            got: statistics.len(),
        });
    }
    if statistics.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidConfig("calibration statistics must be finite and nonnegative".into()));
    }
    let mut sorted = statistics.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let index = (((1.0 - p_f) * n as f64).floor() as usize).min(n - 1);
    let kappa = sorted[index];
    if !(kappa > 0.0) {
        return Err(Error::InvalidConfig("calibrated threshold is zero".into()));
    }
    Ok(ThresholdCalibration {
        p_f,
        kappa,
        trials: n,
        statistic,
        quantile_index: index,
        max_statistic: sorted[n - 1],
    })
}

/// Per-trial calibration statistic of one stream.
pub fn calibration_statistic(sweep: &HypothesisSweep, true_block: Option<usize>, window: usize) -> f64 {
    match true_block {
        Some(l0) => sweep.max_outside(l0, window),
        None => sweep.max_metric(),
    }
}

/// Text cache of calibrated thresholds, one `key = value` line per entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationCache {
    entries: BTreeMap<String, f64>,
}

impl CalibrationCache {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .rsplit_once('=')
                .ok_or_else(|| Error::Parse(format!("calibration cache line {}: missing '='", i + 1)))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("calibration cache line {}: {e}", i + 1)))?;
            entries.insert(key.trim().to_string(), value);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.get(key).copied()
    }

    pub fn insert(&mut self, key: String, kappa: f64) {
        self.entries.insert(key, kappa);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# calibrated thresholds relative to the reference power\n");
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v:e}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Fingerprint of everything a calibrated threshold depends on.
#[allow(clippy::too_many_arguments)]
pub fn calibration_key(
    cfg: &FrameConfig,
    hypotheses: usize,
    m_per: usize,
    n_per: usize,
    statistic: CalibrationStatistic,
    snr_db: Option<f64>,
    p_f: f64,
    trials: usize,
    seed: u64,
) -> String {
    let p = cfg.params();
    let snr = snr_db.map_or("none".to_string(), |s| format!("{s}"));
    format!(
        "fc={};df={};tcp={};nsc={};msym={};np={};mp={};L={hypotheses};mper={m_per};nper={n_per};stat={};snr={snr};pf={p_f};trials={trials};seed={seed}",
        p.carrier_frequency,
        p.subcarrier_spacing,
        p.cp_duration,
        p.num_subcarriers,
        p.num_symbols,
        p.pilot_spacing_freq,
        p.pilot_spacing_time,
        statistic.name(),
    )
}

/// How the direct-path gain is formed before subtraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LosGainMode {
    /// `exp(-j 2 pi f_c tau) lambda / (4 pi tau c)`.
    FreeSpace,
    /// `exp(-j 2 pi f_c tau) lambda / (pi tau c)`.
    FreeSpaceLiteralPi,
    /// Least-squares complex gain of the synthesized direct-path template on
    /// the pilot lattice.
    Fitted,
    /// Known true gain.
    Oracle(Complex64),
}

/// Unit-gain direct-path contribution to the lattice of a window at demod
/// `offset`.
pub fn los_template(cfg: &FrameConfig, rows: usize, cols: usize, offset: usize, delay: f64) -> Vec<Complex64> {
    let reference = (offset + cfg.cp_samples()) as f64 * cfg.sample_period();
    let step = cfg.pilot_spacing_freq() as f64 * cfg.subcarrier_spacing() * (delay - reference);
    let row: Vec<Complex64> = (0..cols)
        .map(|nu| Complex64::from_polar(1.0, -2.0 * PI * (nu as f64 * step).fract()))
        .collect();
    (0..rows).flat_map(|_| row.iter().copied()).collect()
}

pub fn los_gain(mode: LosGainMode, cfg: &FrameConfig, delay: f64, grid: &LsGrid, template: &[Complex64]) -> Complex64 {
    let carrier = Complex64::from_polar(1.0, -2.0 * PI * (cfg.carrier_frequency() * delay).fract());
    let path = SPEED_OF_LIGHT * delay;
    match mode {
        LosGainMode::FreeSpace => carrier * (cfg.wavelength() / (4.0 * PI * path)),
        LosGainMode::FreeSpaceLiteralPi => carrier * (cfg.wavelength() / (PI * path)),
        LosGainMode::Fitted => {
            let num: Complex64 = grid.values.iter().zip(template).map(|(h, t)| h * t.conj()).sum();
            let den: f64 = template.iter().map(|t| t.norm_sqr()).sum();
            num / den
        }
        LosGainMode::Oracle(alpha) => alpha,
    }
}

/// Scenario II thresholds: the block sweep for the direct path, and a single
/// window test on the cleaned lattice for the echo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosThresholds {
    pub los_sweep: f64,
    pub nlos_window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LosCancellation {
    /// Direct-path detection; `None` triggers the Scenario I fallback.
    pub los: Option<WindowEstimate>,
    pub los_gain: Option<Complex64>,
    /// Sample index `w` of the shared window.
    pub window_sample: Option<usize>,
    /// Lattice energy after subtraction over energy before, dB.
    pub residual_db: Option<f64>,
    pub cleaned: Option<LsGrid>,
    pub nlos: Option<TargetEstimate>,
    pub fell_back: bool,
}

/// Detects the direct path, subtracts its synthesized contribution in the
/// window starting at `w = floor(tau_LOS_hat / T_s)` and estimates the echo
/// from the cleaned lattice.
#[allow(clippy::too_many_arguments)]
pub fn detect_and_cancel_los(
    rx: &mut SensingReceiver,
    samples: &[Complex64],
    max_range: f64,
    thresholds: &LosThresholds,
    window: usize,
    geometry: &GeometryInput,
    mode: LosGainMode,
) -> Result<LosCancellation> {
    let cfg = *rx.config();
    let sweep = sweep_hypotheses(rx, samples, max_range)?;
    let Some(los) = detect_window(rx, samples, &sweep, thresholds.los_sweep, window)? else {
        let nlos = detect_and_localize(rx, samples, &sweep, thresholds.los_sweep, window, geometry)?;
        return Ok(LosCancellation {
            los: None,
            los_gain: None,
            window_sample: None,
            residual_db: None,
            cleaned: None,
            nlos,
            fell_back: true,
        });
    };
    let w = (los.delay / cfg.sample_period()).floor().max(0.0) as usize;
    let offset = w + cfg.cp_samples();
    let raw = rx.ls_grid(samples, offset)?;
    let template = los_template(&cfg, raw.rows, raw.cols, offset, los.delay);
    let alpha = los_gain(mode, &cfg, los.delay, &raw, &template);
    let cleaned = LsGrid {
        values: raw.values.iter().zip(&template).map(|(h, t)| h - alpha * t).collect(),
        ..raw.clone()
    };
    let before = raw.energy();
    let residual_db = (before > 0.0).then(|| 10.0 * (cleaned.energy() / before).log10());
    let peak = rx.peak(&cleaned);
    let nlos = (peak.eta >= thresholds.nlos_window).then(|| {
        let scale = rx.scale();
        let delay = scale.delay(offset, peak.delay_frac);
        let doppler = scale.doppler(peak.doppler_frac);
        TargetEstimate {
            window: WindowEstimate {
                first_crossing: los.first_crossing,
                sample_index: w,
                delay,
                doppler,
                peak,
            },
            geometry: estimate_geometry(delay, doppler, geometry, cfg.carrier_frequency()),
        }
    });
    Ok(LosCancellation {
        los: Some(los),
        los_gain: Some(alpha),
        window_sample: Some(w),
        residual_db,
        cleaned: Some(cleaned),
        nlos,
        fell_back: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{noise_stream, synthesize_rx, NoiseModel};
    use crate::scene::{derive_propagation, Scenario, Scene};
    use crate::waveform::{generate_frame, FrameParams};
    use proptest::prelude::*;

    fn reference() -> (FrameConfig, crate::waveform::FrameSymbols) {
        let cfg = FrameConfig::reference();
        let x = generate_frame(&cfg, 7, 8);
        (cfg, x)
    }

    fn geometry_of(scene: &Scene) -> GeometryInput {
        GeometryInput {
            baseline: scene.baseline(),
            aoa_pointing: scene.aoa_pointing(),
        }
    }

    #[test]
    fn hypothesis_counts() {
        let cfg = FrameConfig::reference();
        assert_eq!(hypothesis_count(&cfg, 3000.0), 10);
        assert_eq!(hypothesis_count(&cfg, 300.0), 1);
        assert_eq!(hypothesis_count(&cfg, 301.0), 2);
        assert_eq!(hypothesis_count(&cfg, 1.0), 1);
    }

    #[test]
    fn fine_search_set() {
        let set = fine_search_indices(7, 2, 14);
        assert_eq!(set.len(), 28);
        assert_eq!((set.start, set.end - 1), (84, 111));
        assert_eq!(fine_search_indices(3, 1, 14).len(), 14);
    }

    #[test]
    fn crossing_argmax_and_exclusion() {
        let pk = |eta| Peak {
            eta,
            doppler_bin: 0,
            delay_bin: 0,
            doppler_frac: 0.0,
            delay_frac: 0.0,
            degenerate: false,
        };
        let sweep = HypothesisSweep {
            peaks: [1.0, 3.0, 5.0, 9.0, 9.0, 2.0].iter().map(|&e| pk(e)).collect(),
            cp_samples: 14,
        };
        assert_eq!(sweep.first_crossing(4.0), Some(3));
        assert_eq!(sweep.first_crossing(10.0), None);
        assert_eq!(sweep.argmax(), 4);
        // W = 2 around l0 = 4 excludes blocks 3, 4, 5
        assert_eq!(sweep.max_outside(4, 2), 3.0);
        assert_eq!(sweep.max_outside(1, 2), 9.0);
        assert_eq!(sweep.max_metric(), 9.0);
    }

    #[test]
    fn symmetric_geometry() {
        let g = estimate_geometry(
            2.0 * 1000.0 * 2f64.sqrt() / SPEED_OF_LIGHT,
            0.0,
            &GeometryInput {
                baseline: 2000.0,
                aoa_pointing: PI / 4.0,
            },
            30e9,
        );
        assert!((g.d_rx - 1414.2136).abs() < 1e-4);
        assert!((g.d_tx - 1414.2136).abs() < 1e-4);
        assert!((g.bistatic_angle.to_degrees() - 90.0).abs() < 1e-9);
        assert_eq!(g.bistatic_velocity, Some(0.0));
        assert!(!g.unstable);
    }

    #[test]
    fn collinear_target_is_flagged() {
        // target on the extension of the baseline behind the receiver
        let g = estimate_geometry(
            2400.0 / SPEED_OF_LIGHT,
            100.0,
            &GeometryInput {
                baseline: 2000.0,
                aoa_pointing: PI,
            },
            30e9,
        );
        assert!((g.d_rx - 200.0).abs() < 1e-6);
        assert!(g.bistatic_angle.abs() < 1e-6);
        assert!((g.bistatic_velocity.unwrap() - 100.0 * SPEED_OF_LIGHT / 60e9).abs() < 1e-9);
        // target on the baseline segment: beta = pi
        let g = estimate_geometry(
            2000.0 / SPEED_OF_LIGHT,
            0.0,
            &GeometryInput {
                baseline: 2000.0,
                aoa_pointing: 0.0,
            },
            30e9,
        );
        assert!(g.unstable);
        assert!(g.bistatic_velocity.is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn geometry_inverts_exact_scenes(x in -1000.0f64..1000.0, y in -1000.0f64..-50.0, speed in 0.0f64..30.0, phi in -0.5f64..0.5) {
            let cfg = FrameConfig::reference();
            let scene = Scene::new([-1000.0, 0.0], [1000.0, 0.0], [x, y]).with_motion(speed, phi);
            let prop = derive_propagation(&scene, &cfg).unwrap();
            let g = estimate_geometry(prop.delay_nlos, prop.doppler, &geometry_of(&scene), cfg.carrier_frequency());
            prop_assert!((g.d_tx + g.d_rx - g.bistatic_range).abs() <= 1e-9 * g.bistatic_range);
            prop_assert!((g.d_rx - prop.d_rx).abs() < 1e-6);
            prop_assert!((g.bistatic_angle - prop.bistatic_angle).abs() < 1e-9);
            prop_assert!((g.bistatic_velocity.unwrap() - prop.bistatic_velocity).abs() < 1e-9);
        }
    }

    #[test]
    fn threshold_quantiles() {
        let stats: Vec<f64> = (1..=101).map(f64::from).collect();
        let c = threshold_from_statistics(&stats, 0.5, CalibrationStatistic::NoiseOnly).unwrap();
        assert_eq!(c.kappa, 51.0);
        let stats: Vec<f64> = (1..=1000).map(f64::from).collect();
        let c = threshold_from_statistics(&stats, 0.01, CalibrationStatistic::NoiseOnly).unwrap();
        assert_eq!(c.kappa, 991.0);
        assert!((c.exceedance(&stats) - 0.01).abs() < 1e-12);
        assert!(matches!(
            threshold_from_statistics(&stats[..999], 0.01, CalibrationStatistic::NoiseOnly),
            Err(Error::TooFewTrials { required: 1000, got: 999, .. })
        ));
        assert!(threshold_from_statistics(&stats, 0.0, CalibrationStatistic::NoiseOnly).is_err());
        assert!(threshold_from_statistics(&vec![0.0; 100], 0.5, CalibrationStatistic::NoiseOnly).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let cfg = FrameConfig::reference();
        let key = calibration_key(&cfg, 10, 1024, 1024, CalibrationStatistic::NoiseOnly, None, 0.01, 10000, 3);
        let mut cache = CalibrationCache::default();
        cache.insert(key.clone(), 12.375);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kappa.txt");
        cache.save(&path).unwrap();
        let back = CalibrationCache::load(&path).unwrap();
        assert_eq!(back.get(&key), Some(12.375));
        assert_eq!(back, cache);
        assert!(CalibrationCache::load(&dir.path().join("missing")).unwrap().is_empty());
        assert!(CalibrationCache::parse("no equals sign").is_err());
    }

    #[test]
    fn noiseless_target_localized() {
        let (cfg, x) = reference();
        let scene = Scene::new([-1000.0, 0.0], [1000.0, 0.0], [137.0, -812.0]).with_motion(17.0, 0.05);
        let prop = derive_propagation(&scene, &cfg).unwrap();
        let r = synthesize_rx(&cfg, &x, &prop, &NoiseModel::noiseless(), 0);
        let mut rx = SensingReceiver::new(&cfg, &x, 1024, 1024);
        let sweep = sweep_hypotheses(&mut rx, &r.samples, 3000.0).unwrap();
        let l0 = prop.nlos_block(&cfg);
        assert!((l0 - 1..=l0 + 1).contains(&sweep.argmax()), "argmax {} vs {l0}", sweep.argmax());
        let kappa = 0.5 * sweep.metric(sweep.argmax());
        let est = detect_and_localize(&mut rx, &r.samples, &sweep, kappa, 2, &geometry_of(&scene))
            .unwrap()
            .unwrap();
        let k = est.window.sample_index as f64 * cfg.sample_period();
        let ts = cfg.sample_period();
        assert!(prop.delay_nlos >= k - ts && prop.delay_nlos < k + cfg.cp_duration() + ts);
        assert!((est.geometry.bistatic_range - prop.bistatic_range).abs() < 0.05);
        assert!((est.geometry.bistatic_velocity.unwrap() - prop.bistatic_velocity).abs() < 0.02);
    }

    #[test]
    fn scaling_and_rotation_preserve_decisions() {
        let (cfg, x) = reference();
        let scene = Scene::new([-1000.0, 0.0], [1000.0, 0.0], [-400.0, -700.0]).with_motion(10.0, 0.0);
        let prop = derive_propagation(&scene, &cfg).unwrap();
        let noise = crate::channel::set_snr(&prop, &NoiseModel::noiseless(), 0.0);
        let r = synthesize_rx(&cfg, &x, &prop, &noise, 5);
        let mut rx = SensingReceiver::new(&cfg, &x, 1024, 1024);
        let base = sweep_hypotheses(&mut rx, &r.samples, 3000.0).unwrap();
        let c = Complex64::from_polar(3.0, 1.1);
        let scaled: Vec<Complex64> = r.samples.iter().map(|s| s * c).collect();
        let other = sweep_hypotheses(&mut rx, &scaled, 3000.0).unwrap();
        for l in 1..=base.hypotheses() {
            assert!((other.metric(l) - 9.0 * base.metric(l)).abs() <= 1e-9 * other.metric(l));
        }
        assert_eq!(other.argmax(), base.argmax());
        let kappa = 0.5 * base.metric(base.argmax());
        let g = geometry_of(&scene);
        let a = detect_and_localize(&mut rx, &r.samples, &base, kappa, 2, &g).unwrap().unwrap();
        let b = detect_and_localize(&mut rx, &scaled, &other, 9.0 * kappa, 2, &g).unwrap().unwrap();
        assert_eq!(a.window.sample_index, b.window.sample_index);
        assert_eq!(a.window.first_crossing, b.window.first_crossing);
    }

    #[test]
    fn null_hypothesis_when_all_below() {
        let (cfg, x) = reference();
        let r = noise_stream(&cfg, &NoiseModel::with_variance(1.0), 4);
        let mut rx = SensingReceiver::new(&cfg, &x, 1024, 1024);
        let sweep = sweep_hypotheses(&mut rx, &r.samples, 3000.0).unwrap();
        let kappa = 1.01 * sweep.max_metric();
        let g = GeometryInput {
            baseline: 2000.0,
            aoa_pointing: 1.0,
        };
        assert!(detect_and_localize(&mut rx, &r.samples, &sweep, kappa, 2, &g).unwrap().is_none());
        assert!(sweep_hypotheses(&mut rx, &r.samples, 0.0).is_err());
    }

    fn scenario_two(nlos_mag: f64) -> (FrameConfig, crate::waveform::FrameSymbols, Scene, crate::scene::Propagation) {
        let (cfg, x) = reference();
        let scene = Scene::new([-200.0, 0.0], [200.0, 0.0], [60.0, -150.0])
            .with_motion(12.0, 0.1)
            .with_scenario(Scenario::LosPresent);
        let mut prop = derive_propagation(&scene, &cfg).unwrap().with_nlos_magnitude(nlos_mag);
        // direct path on the sample grid
        let ts = cfg.sample_period();
        prop.delay_los = (prop.delay_los / ts).round() * ts;
        (cfg, x, scene, prop)
    }

    #[test]
    fn oracle_cancellation_residual() {
        let (cfg, x, scene, prop) = scenario_two(0.0);
        let r = synthesize_rx(&cfg, &x, &prop, &NoiseModel::noiseless(), 0);
        let mut rx = SensingReceiver::new(&cfg, &x, 1024, 1024);
        let sweep = sweep_hypotheses(&mut rx, &r.samples, 900.0).unwrap();
        let th = LosThresholds {
            los_sweep: 0.5 * sweep.max_metric(),
            nlos_window: 1e-3 * sweep.max_metric(),
        };
        let out = detect_and_cancel_los(
            &mut rx,
            &r.samples,
            900.0,
            &th,
            2,
            &geometry_of(&scene),
            LosGainMode::Oracle(prop.gain_los),
        )
        .unwrap();
        assert!(!out.fell_back);
        let los = out.los.unwrap();
        assert!((los.delay - prop.delay_los).abs() < 0.2e-9);
        assert!(out.residual_db.unwrap() <= -40.0, "{:?}", out.residual_db);
        // nothing but residue left
        assert!(out.nlos.is_none());
    }

    #[test]
    fn fitted_cancellation_exposes_echo() {
        let (cfg, x, scene, prop) = scenario_two(0.0);
        let prop = prop.with_nlos_magnitude(0.3 * prop.gain_los.norm());
        let r = synthesize_rx(&cfg, &x, &prop, &NoiseModel::noiseless(), 0);
        let mut rx = SensingReceiver::new(&cfg, &x, 1024, 1024);
        let sweep = sweep_hypotheses(&mut rx, &r.samples, 900.0).unwrap();
        let th = LosThresholds {
            los_sweep: 0.5 * sweep.max_metric(),
            nlos_window: 1e-3 * sweep.max_metric(),
        };
        let out = detect_and_cancel_los(&mut rx, &r.samples, 900.0, &th, 2, &geometry_of(&scene), LosGainMode::Fitted)
            .unwrap();
        let est = out.nlos.expect("echo detected after cancellation");
        assert!((est.geometry.bistatic_range - prop.bistatic_range).abs() < 1.0, "{:?}", est.geometry);
    }

    #[test]
    fn free_space_gain_forms() {
        let cfg = FrameConfig::new(FrameParams::reference()).unwrap();
        let tau = 400.0 / SPEED_OF_LIGHT;
        let grid = LsGrid {
            offset: 0,
            rows: 1,
            cols: 1,
            values: vec![Complex64::new(1.0, 0.0)],
        };
        let t = [Complex64::new(1.0, 0.0)];
        let a = los_gain(LosGainMode::FreeSpace, &cfg, tau, &grid, &t);
        let b = los_gain(LosGainMode::FreeSpaceLiteralPi, &cfg, tau, &grid, &t);
        assert!((a.norm() - 0.01 / (4.0 * PI * 400.0)).abs() < 1e-15);
        assert!((b.norm() / a.norm() - 4.0).abs() < 1e-12);
        assert_eq!(los_gain(LosGainMode::Fitted, &cfg, tau, &grid, &t), Complex64::new(1.0, 0.0));
    }
}
