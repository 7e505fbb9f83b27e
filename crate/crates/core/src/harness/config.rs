use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::{hypothesis_count, CalibrationStatistic, LosGainMode};
use crate::error::{Error, Result};
use crate::receiver::PeakSearch;
use crate::waveform::{build_pilot_pattern, FrameConfig, FrameParams};

use super::scenes::ScenePrior;

/// Full experiment description; every field has the reference default, so a
/// config file only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub frame: FrameParams,
    pub noise: NoiseParams,
    pub scene: ScenePrior,
    pub detection: DetectionParams,
    pub snr_sweep: SnrSweepParams,
    pub aoa_study: AoaStudyParams,
    pub ratio_sweep: RatioSweepParams,
    pub output: OutputParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub n0_dbm_per_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            n0_dbm_per_hz: -174.0,
            noise_figure_db: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchChoice {
    Exhaustive,
    Pruned,
}

impl SearchChoice {
    pub fn to_search(self) -> PeakSearch {
        match self {
            SearchChoice::Exhaustive => PeakSearch::Exhaustive,
            SearchChoice::Pruned => PeakSearch::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionParams {
    pub p_f: f64,
    pub window: usize,
    /// m
    pub max_range: f64,
    pub m_per: usize,
    pub n_per: usize,
    pub calibration_trials: usize,
    pub statistic: CalibrationStatistic,
    pub search: SearchChoice,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            p_f: 1e-3,
            window: 2,
            max_range: 3000.0,
            m_per: 1024,
            n_per: 1024,
            calibration_trials: 10_000,
            statistic: CalibrationStatistic::ExclusionWindow,
            search: SearchChoice::Pruned,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrSweepParams {
    pub patterns: Vec<(usize, usize)>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
}

impl Default for SnrSweepParams {
    fn default() -> Self {
        Self {
            patterns: vec![(2, 4), (2, 2), (2, 1)],
            snr_db: vec![-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoaStudyParams {
    pub pattern: (usize, usize),
    pub snr_db: Vec<f64>,
    pub aoa_error_deg: Vec<f64>,
    pub trials: usize,
}

impl Default for AoaStudyParams {
    fn default() -> Self {
        Self {
            pattern: (2, 1),
            snr_db: vec![0.0, 10.0],
            aoa_error_deg: vec![0.0, 1.0, 5.0],
            trials: 600,
        }
    }
}

/// Direct-path gain used for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LosGainChoice {
    FreeSpace,
    FreeSpaceLiteralPi,
    Fitted,
    Oracle,
}

impl LosGainChoice {
    /// `truth` is only read by the oracle choice.
    pub fn to_mode(self, truth: num_complex::Complex64) -> LosGainMode {
        match self {
            LosGainChoice::FreeSpace => LosGainMode::FreeSpace,
            LosGainChoice::FreeSpaceLiteralPi => LosGainMode::FreeSpaceLiteralPi,
            LosGainChoice::Fitted => LosGainMode::Fitted,
            LosGainChoice::Oracle => LosGainMode::Oracle(truth),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioSweepParams {
    pub scene: ScenePrior,
    pub patterns: Vec<(usize, usize)>,
    /// `|alpha_NLOS|^2 / |alpha_LOS|^2` in dB.
    pub ratio_db: Vec<f64>,
    pub trials: usize,
    pub max_range: f64,
    pub p_f: f64,
    pub los_gain: LosGainChoice,
}

impl Default for RatioSweepParams {
    fn default() -> Self {
        Self {
            scene: ScenePrior::scenario_two(),
            patterns: vec![(2, 1), (2, 2)],
            ratio_db: vec![-40.0, -30.0, -20.0, -10.0, 0.0, 10.0, 20.0],
            trials: 300,
            max_range: 900.0,
            p_f: 1e-2,
            los_gain: LosGainChoice::Fitted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputParams {
    pub dir: PathBuf,
    /// Threshold cache file, relative to `dir` unless absolute.
    pub calibration_cache: Option<PathBuf>,
}

impl Default for OutputParams {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            calibration_cache: Some(PathBuf::from("thresholds.txt")),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            frame: FrameParams::reference(),
            noise: NoiseParams::default(),
            scene: ScenePrior::scenario_one(),
            detection: DetectionParams::default(),
            snr_sweep: SnrSweepParams::default(),
            aoa_study: AoaStudyParams::default(),
            ratio_sweep: RatioSweepParams::default(),
            output: OutputParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// Frame numerology for a pilot pattern.
    pub fn frame_for(&self, pattern: (usize, usize)) -> Result<FrameConfig> {
        FrameConfig::new(self.frame.with_pilot_spacing(pattern.0, pattern.1))
    }

    pub fn calibration_cache_path(&self) -> Option<PathBuf> {
        self.output.calibration_cache.as_ref().map(|p| self.output.dir.join(p))
    }

    fn check_pattern(&self, pattern: (usize, usize), prior: &ScenePrior) -> Result<()> {
        let cfg = self.frame_for(pattern)?;
        cfg.check_sensing_spans(prior.max_doppler(cfg.wavelength()))?;
        let lattice = build_pilot_pattern(&cfg);
        let d = &self.detection;
        if lattice.rows_within(cfg.num_symbols()) > d.m_per || lattice.cols() > d.n_per {
            return Err(Error::InvalidConfig(format!(
                "pilot lattice of pattern {pattern:?} exceeds the {}x{} transform",
                d.m_per, d.n_per
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        FrameConfig::new(self.frame)?;
        self.scene.validate()?;
        self.ratio_sweep.scene.validate()?;
        let d = &self.detection;
        for (name, p) in [("detection.p_f", d.p_f), ("ratio_sweep.p_f", self.ratio_sweep.p_f)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {p}")));
            }
        }
        if d.window == 0 {
            return Err(Error::InvalidConfig("detection.window must be at least 1".into()));
        }
        if !(d.max_range > 0.0) || !(self.ratio_sweep.max_range > 0.0) {
            return Err(Error::InvalidConfig("max_range must be positive".into()));
        }
        for (name, n) in [("m_per", d.m_per), ("n_per", d.n_per)] {
            if !n.is_power_of_two() || n < 2 {
                return Err(Error::InvalidConfig(format!("detection.{name} must be a power of two, got {n}")));
            }
        }
        if d.calibration_trials == 0
            || self.snr_sweep.trials == 0
            || self.aoa_study.trials == 0
            || self.ratio_sweep.trials == 0
        {
            return Err(Error::InvalidConfig("trial counts must be at least 1".into()));
        }
        for &p in self.snr_sweep.patterns.iter().chain(std::iter::once(&self.aoa_study.pattern)) {
            self.check_pattern(p, &self.scene)?;
        }
        for &p in &self.ratio_sweep.patterns {
            self.check_pattern(p, &self.ratio_sweep.scene)?;
        }
        let frame = FrameConfig::new(self.frame)?;
        let needed = hypothesis_count(&frame, d.max_range) + d.window;
        if needed * frame.cp_samples() + frame.num_subcarriers() > frame.frame_samples() {
            return Err(Error::InvalidConfig("max_range reaches past the end of the frame".into()));
        }
        // the fine search after a crossing in block L still covers W - 1 more blocks
        let block_range = crate::SPEED_OF_LIGHT * frame.cp_duration();
        for (prior, max_range) in [(&self.scene, d.max_range), (&self.ratio_sweep.scene, self.ratio_sweep.max_range)] {
            let reach = (hypothesis_count(&frame, max_range) + d.window - 1) as f64 * block_range;
            if prior.max_bistatic_range() > reach {
                return Err(Error::InvalidConfig(format!(
                    "scene prior reaches {:.1} m, beyond the {reach:.1} m searched for max_range {max_range}",
                    prior.max_bistatic_range(),
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_reference_values() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.frame, FrameParams::reference());
        assert_eq!((c.detection.m_per, c.detection.n_per), (1024, 1024));
        assert_eq!(c.detection.window, 2);
        assert_eq!(c.detection.max_range, 3000.0);
        assert_eq!(c.scene.speed, [0.0, 30.0]);
        assert_eq!(c.scene.velocity_angle_deg, [-5.0, 5.0]);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let partial = ExperimentConfig::from_toml("seed = 9\n[detection]\np_f = 0.01\n[snr_sweep]\nsnr_db = [0.0]\n").unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.detection.p_f, 0.01);
        assert_eq!(partial.detection.window, 2);
        assert_eq!(partial.snr_sweep.snr_db, vec![0.0]);
    }

    #[test]
    fn invalid_files_are_rejected() {
        for text in [
            "[detection]\np_f = 1.5\n",
            "[detection]\nwindow = 0\n",
            "[detection]\nm_per = 1000\n",
            "[scene]\nx = [5.0, -5.0]\n",
            "[snr_sweep]\ntrials = 0\n",
            "[snr_sweep]\npatterns = [[6, 1]]\n",
            "[detection]\nmax_range = 1000.0\n",
            "unknown_key = 1\n",
            "seed = \"x\"\n",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }
}
