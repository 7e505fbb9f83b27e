//! Received sample synthesis for the blocked-LOS and LOS-present scenarios.
//!
//! Delays are applied by evaluating the analytic baseband at `k T_s - tau`,
//! so fractional delays carry no interpolation error.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scene::{Propagation, Scenario};
use crate::waveform::{eval_baseband, FrameConfig, FrameSymbols};

/// Receiver noise; `variance` is the per-sample complex noise power in W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub variance: f64,
}

impl NoiseModel {
    /// `sigma^2 = N_0 * N_sc * df * NF` from a PSD in dBm/Hz and a noise
    /// figure in dB.
    pub fn from_psd(n0_dbm_per_hz: f64, noise_figure_db: f64, cfg: &FrameConfig) -> Self {
        let n0_watt = 10f64.powf((n0_dbm_per_hz - 30.0) / 10.0);
        let bandwidth = cfg.num_subcarriers() as f64 * cfg.subcarrier_spacing();
        Self {
            variance: n0_watt * bandwidth * 10f64.powf(noise_figure_db / 10.0),
        }
    }

    pub fn with_variance(variance: f64) -> Self {
        Self { variance }
    }

    pub fn noiseless() -> Self {
        Self { variance: 0.0 }
    }

    pub fn variance_dbm(&self) -> f64 {
        10.0 * self.variance.log10() + 30.0
    }

    /// `|alpha_NLOS|^2 / sigma^2` in dB.
    pub fn snr_db(&self, prop: &Propagation) -> f64 {
        10.0 * (prop.gain_nlos.norm_sqr() / self.variance).log10()
    }
}

/// Noise level giving `|alpha_NLOS|^2 / sigma^2 = target_snr_db`.
pub fn set_snr(prop: &Propagation, _noise: &NoiseModel, target_snr_db: f64) -> NoiseModel {
    NoiseModel {
        variance: prop.gain_nlos.norm_sqr() / 10f64.powf(target_snr_db / 10.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub samples: Vec<Complex64>,
    pub sample_period: f64,
    pub noise_variance: f64,
    pub scenario: Scenario,
    pub seed: u64,
    /// The echo starts after the end of the frame; the stream is noise (and
    /// LOS) only.
    pub echo_outside_frame: bool,
}

impl SampleStream {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Little-endian interleaved f64 I/Q plus a `key = value` sidecar next
    /// to it (`<path>.txt`).
    pub fn write_raw(&self, path: &Path) -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for s in &self.samples {
            out.write_all(&s.re.to_le_bytes())?;
            out.write_all(&s.im.to_le_bytes())?;
        }
        out.flush()?;
        let mut side = path.as_os_str().to_owned();
        side.push(".txt");
        let mut meta = BufWriter::new(File::create(Path::new(&side))?);
        writeln!(meta, "format = \"f64le-iq\"")?;
        writeln!(meta, "samples = {}", self.samples.len())?;
        writeln!(meta, "sample_rate_hz = {:.17e}", 1.0 / self.sample_period)?;
        writeln!(meta, "noise_variance_w = {:.17e}", self.noise_variance)?;
        let scenario = match self.scenario {
            Scenario::LosBlocked => "los_blocked",
            Scenario::LosPresent => "los_present",
        };
        writeln!(meta, "scenario = \"{scenario}\"")?;
        writeln!(meta, "seed = {}", self.seed)?;
        meta.flush()
    }

    pub fn read_raw(path: &Path) -> std::io::Result<Vec<Complex64>> {
        let bytes = std::fs::read(path)?;
        if bytes.len() % 16 != 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "raw I/Q file length is not a multiple of 16 bytes",
            ));
        }
        Ok(bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect())
    }
}

/// `r[k] = alpha_NLOS s(kT_s - tau_NLOS) e^{j 2 pi f_D k T_s}
///        [+ alpha_LOS s(kT_s - tau_LOS)] + z[k]`.
///
/// The noise draw depends only on `seed` and the stream length, so the two
/// scenarios share it sample for sample.
pub fn synthesize_rx(
    cfg: &FrameConfig,
    symbols: &FrameSymbols,
    prop: &Propagation,
    noise: &NoiseModel,
    seed: u64,
) -> SampleStream {
    let len = cfg.frame_samples();
    let ts = cfg.sample_period();
    let with_los = prop.scenario == Scenario::LosPresent;
    let echo_outside_frame = prop.delay_nlos >= cfg.frame_duration();
    let mut samples = Vec::with_capacity(len);
    for k in 0..len {
        let t = k as f64 * ts;
        let mut r = Complex64::new(0.0, 0.0);
        if !echo_outside_frame && prop.gain_nlos != Complex64::new(0.0, 0.0) {
            let doppler = Complex64::from_polar(1.0, 2.0 * PI * (prop.doppler * t).fract());
            r += prop.gain_nlos * eval_baseband(cfg, symbols, t - prop.delay_nlos) * doppler;
        }
        if with_los {
            r += prop.gain_los * eval_baseband(cfg, symbols, t - prop.delay_los);
        }
        samples.push(r);
    }
    add_noise(&mut samples, noise.variance, seed);
    SampleStream {
        samples,
        sample_period: ts,
        noise_variance: noise.variance,
        scenario: prop.scenario,
        seed,
        echo_outside_frame,
    }
}

/// Noise-only stream of one frame.
pub fn noise_stream(cfg: &FrameConfig, noise: &NoiseModel, seed: u64) -> SampleStream {
    let mut samples = vec![Complex64::new(0.0, 0.0); cfg.frame_samples()];
    add_noise(&mut samples, noise.variance, seed);
    SampleStream {
        samples,
        sample_period: cfg.sample_period(),
        noise_variance: noise.variance,
        scenario: Scenario::LosBlocked,
        seed,
        echo_outside_frame: true,
    }
}

fn add_noise(samples: &mut [Complex64], variance: f64, seed: u64) {
    if variance <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (variance / 2.0).sqrt();
    for s in samples.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *s += Complex64::new(re * scale, im * scale);
    }
}
