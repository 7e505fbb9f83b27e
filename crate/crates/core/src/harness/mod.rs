//! Monte-Carlo experiment harness: configuration, scene draws, SNR, AoA and
//! power-ratio studies, the brute-force oracle and CSV output.

mod config;
mod oracle;
mod scenes;
mod sweeps;

pub use config::{
    AoaStudyParams, DetectionParams, ExperimentConfig, LosGainChoice, NoiseParams, OutputParams, RatioSweepParams,
    SearchChoice, SnrSweepParams,
};
pub use oracle::{brute_force_oracle, brute_force_oracle_with, pilot_only_grid, uniform_grid, OracleResult, OracleSpan};
pub use scenes::{draw_scene, ScenePrior};
pub use sweeps::{
    compare_with_oracle, run_oracle_check, OracleComparison, ORACLE_DELAY_GRID, ORACLE_DOPPLER_GRID,
    aoa_rows, calibrate_noise_only, calibrate_with_targets, ratio_thresholds, ratio_trial, run_aoa_study,
    run_ratio_sweep, run_rmse_sweep, scenario_one_trial, threshold_for, AoaRow, NoiseCalibration, NoiseLevel,
    PointSetup, RatioTrial, TrialStream, Truth,
};

use std::fmt::Write as _;

use crate::detector::TargetEstimate;
use crate::scene::Scene;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed: a pure function of the root seed and a key path, so
/// adding keys never shifts other draws.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(root), |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Domain tags for [`derive_seed`] paths.
pub mod tags {
    pub const PILOTS: u64 = 1;
    pub const SCENE: u64 = 2;
    pub const DATA: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const CALIBRATION: u64 = 5;
    pub const EVALUATION: u64 = 6;
    pub const SNR_SWEEP: u64 = 7;
    pub const AOA_STUDY: u64 = 8;
    pub const RATIO_SWEEP: u64 = 9;
}

/// Key for a pilot pattern in seed paths.
pub fn pattern_key(pattern: (usize, usize)) -> u64 {
    ((pattern.0 as u64) << 32) | pattern.1 as u64
}

/// One Monte-Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub scene: Scene,
    pub truth: Truth,
    pub estimate: Option<TargetEstimate>,
    pub range_error: Option<f64>,
    pub velocity_error: Option<f64>,
}

impl TrialRecord {
    pub fn detected(&self) -> bool {
        self.estimate.is_some()
    }
}

/// Neumaier-compensated sum of squares.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SquaredErrors {
    sum: f64,
    comp: f64,
    count: usize,
}

impl SquaredErrors {
    pub fn push(&mut self, err: f64) {
        let v = err * err;
        let t = self.sum + v;
        if self.sum.abs() >= v {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn rmse(&self) -> Option<f64> {
        (self.count > 0).then(|| ((self.sum + self.comp) / self.count as f64).sqrt())
    }
}

/// Aggregate of one sweep point, over detected trials only.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsePoint {
    pub x: f64,
    pub pattern: (usize, usize),
    pub n_trials: usize,
    pub n_detected: usize,
    pub rmse_range: Option<f64>,
    pub rmse_velocity: Option<f64>,
}

impl RmsePoint {
    pub fn from_errors(
        x: f64,
        pattern: (usize, usize),
        n_trials: usize,
        errors: impl IntoIterator<Item = (Option<f64>, Option<f64>)>,
    ) -> Self {
        let mut range = SquaredErrors::default();
        let mut velocity = SquaredErrors::default();
        let mut detected = 0;
        for (r, v) in errors {
            if let Some(r) = r {
                detected += 1;
                range.push(r);
            }
            if let Some(v) = v {
                velocity.push(v);
            }
        }
        Self {
            x,
            pattern,
            n_trials,
            n_detected: detected,
            rmse_range: range.rmse(),
            rmse_velocity: velocity.rmse(),
        }
    }

    pub fn detection_rate(&self) -> f64 {
        self.n_detected as f64 / self.n_trials.max(1) as f64
    }
}

pub fn pattern_label(pattern: (usize, usize)) -> String {
    format!("{}x{}", pattern.0, pattern.1)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6e}")).unwrap_or_default()
}

pub const RMSE_CSV_HEADER: &str = "x,pattern,n_trials,n_detected,rmse_range_m,rmse_velocity_mps";

pub fn rmse_csv(points: &[RmsePoint]) -> String {
    let mut out = format!("{RMSE_CSV_HEADER}\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.x,
            pattern_label(p.pattern),
            p.n_trials,
            p.n_detected,
            opt(p.rmse_range),
            opt(p.rmse_velocity)
        );
    }
    out
}

pub fn aoa_csv(rows: &[AoaRow]) -> String {
    let mut out = String::from("snr_db,aoa_error_deg,pattern,n_trials,n_detected,rmse_velocity_mps\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.snr_db,
            r.aoa_error_deg,
            pattern_label(r.pattern),
            r.n_trials,
            r.n_detected,
            opt(r.rmse_velocity)
        );
    }
    out
}
