//! C ABI over `bisac-core`: frames, channel synthesis, the sensing receiver,
//! detection/localization and threshold calibration.
//!
//! Every fallible call returns a [`BisacStatus`]; the message of the last
//! failure on the calling thread is available from
//! [`bisac_last_error_message`]. Handles are opaque and released with their
//! `_free` function. Complex samples cross the boundary as interleaved
//! `re, im` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;

use bisac_core::channel::{synthesize_rx, NoiseModel};
use bisac_core::detector::{
    detect_and_localize, estimate_geometry, sweep_hypotheses, threshold_from_statistics, CalibrationStatistic,
    GeometryInput,
};
use bisac_core::receiver::SensingReceiver;
use bisac_core::scene::{derive_propagation, Scenario, Scene};
use bisac_core::waveform::{generate_frame, FrameConfig, FrameParams, FrameSymbols};
use bisac_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BisacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidFrame = 3,
    InvalidScene = 4,
    InvalidConfig = 5,
    InsufficientSamples = 6,
    TooFewTrials = 7,
    Parse = 8,
    Io = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: BisacStatus, msg: impl Into<String>) -> BisacStatus {
    set_error(msg.into());
    status
}

fn from_core(e: Error) -> BisacStatus {
    let status = match &e {
        Error::InvalidFrame(_) => BisacStatus::InvalidFrame,
        Error::InvalidScene(_) => BisacStatus::InvalidScene,
        Error::InvalidConfig(_) => BisacStatus::InvalidConfig,
        Error::InsufficientSamples { .. } => BisacStatus::InsufficientSamples,
        Error::TooFewTrials { .. } => BisacStatus::TooFewTrials,
        Error::Parse(_) => BisacStatus::Parse,
        Error::Io(_) => BisacStatus::Io,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into [`BisacStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), BisacStatus>) -> BisacStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BisacStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(BisacStatus::Panic, msg)
        }
    }
}

fn core<T>(r: bisac_core::Result<T>) -> Result<T, BisacStatus> {
    r.map_err(from_core)
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), BisacStatus> {
    if p.is_null() {
        Err(fail(BisacStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bisac_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// OFDM numerology; mirrors the core frame parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisacFrameParams {
    pub carrier_frequency: f64,
    pub subcarrier_spacing: f64,
    pub cp_duration: f64,
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub pilot_spacing_freq: usize,
    pub pilot_spacing_time: usize,
}

impl From<FrameParams> for BisacFrameParams {
    fn from(p: FrameParams) -> Self {
        Self {
            carrier_frequency: p.carrier_frequency,
            subcarrier_spacing: p.subcarrier_spacing,
            cp_duration: p.cp_duration,
            num_subcarriers: p.num_subcarriers,
            num_symbols: p.num_symbols,
            pilot_spacing_freq: p.pilot_spacing_freq,
            pilot_spacing_time: p.pilot_spacing_time,
        }
    }
}

impl From<BisacFrameParams> for FrameParams {
    fn from(p: BisacFrameParams) -> Self {
        FrameParams {
            carrier_frequency: p.carrier_frequency,
            subcarrier_spacing: p.subcarrier_spacing,
            cp_duration: p.cp_duration,
            num_subcarriers: p.num_subcarriers,
            num_symbols: p.num_symbols,
            pilot_spacing_freq: p.pilot_spacing_freq,
            pilot_spacing_time: p.pilot_spacing_time,
        }
    }
}

/// Opaque numerology plus one frame of transmitted symbols.
pub struct BisacFrame {
    cfg: FrameConfig,
    symbols: FrameSymbols,
}

/// Opaque sensing receiver bound to a frame's pilots.
pub struct BisacReceiver {
    rx: SensingReceiver,
}

/// Planar scene. Angles in radians, speed in m/s, RCS in m^2.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisacScene {
    pub tx: [f64; 2],
    pub rx: [f64; 2],
    pub target: [f64; 2],
    pub speed: f64,
    pub velocity_angle: f64,
    pub rcs: f64,
    /// Nonzero adds the direct path.
    pub los_present: u8,
}

/// Ground truth of a scene.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BisacTruth {
    pub bistatic_range: f64,
    pub bistatic_velocity: f64,
    pub delay_nlos: f64,
    pub delay_los: f64,
    pub doppler: f64,
    pub aoa: f64,
    pub baseline: f64,
}

/// Solved bistatic geometry. `bistatic_velocity` is NaN when it cannot be
/// resolved.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BisacGeometry {
    pub bistatic_range: f64,
    pub d_tx: f64,
    pub d_rx: f64,
    pub bistatic_angle: f64,
    pub bistatic_velocity: f64,
    pub unstable: u8,
}

/// Detection outcome; the remaining fields are only meaningful when
/// `detected` is nonzero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BisacEstimate {
    pub detected: u8,
    pub first_crossing: usize,
    pub sample_index: usize,
    pub delay: f64,
    pub doppler: f64,
    pub eta: f64,
    pub geometry: BisacGeometry,
}

fn geometry_out(g: bisac_core::detector::Geometry) -> BisacGeometry {
    BisacGeometry {
        bistatic_range: g.bistatic_range,
        d_tx: g.d_tx,
        d_rx: g.d_rx,
        bistatic_angle: g.bistatic_angle,
        bistatic_velocity: g.bistatic_velocity.unwrap_or(f64::NAN),
        unstable: g.unstable as u8,
    }
}

fn scene_in(s: &BisacScene) -> Scene {
    let scenario = if s.los_present != 0 {
        Scenario::LosPresent
    } else {
        Scenario::LosBlocked
    };
    let mut scene = Scene::new(s.tx, s.rx, s.target)
        .with_motion(s.speed, s.velocity_angle)
        .with_scenario(scenario);
    scene.rcs = s.rcs;
    scene
}

/// Complex samples from interleaved doubles.
///
/// # Safety
/// `iq` must point to `2 * n` readable doubles.
unsafe fn samples_in(iq: *const f64, n: usize) -> Vec<Complex64> {
    std::slice::from_raw_parts(iq, 2 * n)
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect()
}

/// Writes the reference numerology (30 GHz, 200 kHz, 1 us CP, 70 x 100,
/// pilots every 2nd subcarrier of every symbol).
///
/// # Safety
/// `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bisac_frame_params_reference(out: *mut BisacFrameParams) -> BisacStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = FrameParams::reference().into();
        Ok(())
    })
}

/// Validates `params` and draws one frame of unit-modulus symbols.
///
/// # Safety
/// `params` must be null or readable; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn bisac_frame_new(
    params: *const BisacFrameParams,
    pilot_seed: u64,
    data_seed: u64,
    out: *mut *mut BisacFrame,
) -> BisacStatus {
    guard(|| {
        non_null(params, "params")?;
        non_null(out, "out")?;
        let cfg = core(FrameConfig::new((*params).into()))?;
        let symbols = generate_frame(&cfg, pilot_seed, data_seed);
        *out = Box::into_raw(Box::new(BisacFrame { cfg, symbols }));
        Ok(())
    })
}

/// # Safety
/// `frame` must be null or a handle from [`bisac_frame_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bisac_frame_free(frame: *mut BisacFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// Samples in one received frame; 0 for a null handle.
///
/// # Safety
/// `frame` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bisac_frame_sample_count(frame: *const BisacFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.cfg.frame_samples())
}

/// Cyclic-prefix length in samples; 0 for a null handle.
///
/// # Safety
/// `frame` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bisac_frame_cp_samples(frame: *const BisacFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.cfg.cp_samples())
}

/// Ground truth of `scene` under the frame's numerology.
///
/// # Safety
/// Pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn bisac_scene_truth(
    frame: *const BisacFrame,
    scene: *const BisacScene,
    out: *mut BisacTruth,
) -> BisacStatus {
    guard(|| {
        non_null(frame, "frame")?;
        non_null(scene, "scene")?;
        non_null(out, "out")?;
        let f = &*frame;
        let s = scene_in(&*scene);
        let p = core(derive_propagation(&s, &f.cfg))?;
        *out = BisacTruth {
            bistatic_range: p.bistatic_range,
            bistatic_velocity: p.bistatic_velocity,
            delay_nlos: p.delay_nlos,
            delay_los: p.delay_los,
            doppler: p.doppler,
            aoa: s.aoa(),
            baseline: s.baseline(),
        };
        Ok(())
    })
}

/// Received samples of one frame for `scene` with complex white noise of
/// `noise_variance` (0 for noiseless). Writes `2 * capacity` doubles at most
/// and the sample count to `out_len`; fails with `BufferTooSmall` (and the
/// required count in `out_len`) when `capacity` is short.
///
/// # Safety
/// `out_iq` must be writable for `2 * capacity` doubles; other pointers null
/// or valid.
#[no_mangle]
pub unsafe extern "C" fn bisac_synthesize(
    frame: *const BisacFrame,
    scene: *const BisacScene,
    noise_variance: f64,
    seed: u64,
    out_iq: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> BisacStatus {
    guard(|| {
        non_null(frame, "frame")?;
        non_null(scene, "scene")?;
        non_null(out_len, "out_len")?;
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(fail(BisacStatus::InvalidArgument, format!("noise variance {noise_variance} is invalid")));
        }
        let f = &*frame;
        let prop = core(derive_propagation(&scene_in(&*scene), &f.cfg))?;
        let noise = if noise_variance > 0.0 {
            NoiseModel::with_variance(noise_variance)
        } else {
            NoiseModel::noiseless()
        };
        let stream = synthesize_rx(&f.cfg, &f.symbols, &prop, &noise, seed);
        *out_len = stream.len();
        if capacity < stream.len() {
            return Err(fail(
                BisacStatus::BufferTooSmall,
                format!("need {} samples, buffer holds {capacity}", stream.len()),
            ));
        }
        non_null(out_iq, "out_iq")?;
        let out = std::slice::from_raw_parts_mut(out_iq, 2 * stream.len());
        for (o, s) in out.chunks_exact_mut(2).zip(&stream.samples) {
            o[0] = s.re;
            o[1] = s.im;
        }
        Ok(())
    })
}

/// Receiver for the frame's pilots with an `m_per x n_per` periodogram
/// (powers of two).
///
/// # Safety
/// `frame` must be null or live; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn bisac_receiver_new(
    frame: *const BisacFrame,
    m_per: usize,
    n_per: usize,
    out: *mut *mut BisacReceiver,
) -> BisacStatus {
    guard(|| {
        non_null(frame, "frame")?;
        non_null(out, "out")?;
        if !m_per.is_power_of_two() || !n_per.is_power_of_two() || m_per < 2 || n_per < 2 {
            return Err(fail(
                BisacStatus::InvalidArgument,
                format!("periodogram size {m_per}x{n_per} must be powers of two"),
            ));
        }
        let f = &*frame;
        *out = Box::into_raw(Box::new(BisacReceiver {
            rx: SensingReceiver::new(&f.cfg, &f.symbols, m_per, n_per),
        }));
        Ok(())
    })
}

/// # Safety
/// `receiver` must be null or a handle from [`bisac_receiver_new`] not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn bisac_receiver_free(receiver: *mut BisacReceiver) {
    if !receiver.is_null() {
        drop(Box::from_raw(receiver));
    }
}

/// Peak metric of every hypothesis block up to `max_range`. Writes at most
/// `capacity` values and the block count to `out_len`.
///
/// # Safety
/// `iq` readable for `2 * n_samples` doubles, `out_metrics` writable for
/// `capacity` doubles; other pointers null or valid.
#[no_mangle]
pub unsafe extern "C" fn bisac_sweep(
    receiver: *mut BisacReceiver,
    iq: *const f64,
    n_samples: usize,
    max_range: f64,
    out_metrics: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> BisacStatus {
    guard(|| {
        non_null(receiver, "receiver")?;
        non_null(iq, "iq")?;
        non_null(out_len, "out_len")?;
        if !(max_range > 0.0) {
            return Err(fail(BisacStatus::InvalidArgument, "max_range must be positive"));
        }
        let samples = samples_in(iq, n_samples);
        let sweep = core(sweep_hypotheses(&mut (*receiver).rx, &samples, max_range))?;
        let metrics = sweep.metrics();
        *out_len = metrics.len();
        if capacity < metrics.len() {
            return Err(fail(
                BisacStatus::BufferTooSmall,
                format!("need {} metrics, buffer holds {capacity}", metrics.len()),
            ));
        }
        non_null(out_metrics, "out_metrics")?;
        std::slice::from_raw_parts_mut(out_metrics, metrics.len()).copy_from_slice(&metrics);
        Ok(())
    })
}

/// Sliding-window detection and localization: block sweep up to
/// `max_range`, first crossing of `kappa` (absolute), fine search over
/// `window` blocks, geometry from the baseline and receive pointing angle.
///
/// # Safety
/// `iq` readable for `2 * n_samples` doubles; other pointers null or valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn bisac_detect(
    receiver: *mut BisacReceiver,
    iq: *const f64,
    n_samples: usize,
    max_range: f64,
    kappa: f64,
    window: usize,
    baseline: f64,
    aoa_pointing: f64,
    out: *mut BisacEstimate,
) -> BisacStatus {
    guard(|| {
        non_null(receiver, "receiver")?;
        non_null(iq, "iq")?;
        non_null(out, "out")?;
        if !(max_range > 0.0) || window == 0 || !(kappa >= 0.0) {
            return Err(fail(BisacStatus::InvalidArgument, "need max_range > 0, window >= 1, kappa >= 0"));
        }
        let samples = samples_in(iq, n_samples);
        let rx = &mut (*receiver).rx;
        let sweep = core(sweep_hypotheses(rx, &samples, max_range))?;
        let input = GeometryInput {
            baseline,
            aoa_pointing,
        };
        let est = core(detect_and_localize(rx, &samples, &sweep, kappa, window, &input))?;
        *out = match est {
            None => BisacEstimate::default(),
            Some(e) => BisacEstimate {
                detected: 1,
                first_crossing: e.window.first_crossing,
                sample_index: e.window.sample_index,
                delay: e.window.delay,
                doppler: e.window.doppler,
                eta: e.window.peak.eta,
                geometry: geometry_out(e.geometry),
            },
        };
        Ok(())
    })
}

/// Bistatic range, distances, angle and velocity from a delay/Doppler pair.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn bisac_estimate_geometry(
    delay: f64,
    doppler: f64,
    baseline: f64,
    aoa_pointing: f64,
    carrier_frequency: f64,
    out: *mut BisacGeometry,
) -> BisacStatus {
    guard(|| {
        non_null(out, "out")?;
        let input = GeometryInput {
            baseline,
            aoa_pointing,
        };
        *out = geometry_out(estimate_geometry(delay, doppler, &input, carrier_frequency));
        Ok(())
    })
}

/// Threshold at the empirical `1 - p_f` quantile of `n` calibration
/// statistics (at least `ceil(10 / p_f)` of them).
///
/// # Safety
/// `statistics` readable for `n` doubles; `out_kappa` null or writable.
#[no_mangle]
pub unsafe extern "C" fn bisac_threshold_from_statistics(
    statistics: *const f64,
    n: usize,
    p_f: f64,
    out_kappa: *mut f64,
) -> BisacStatus {
    guard(|| {
        non_null(statistics, "statistics")?;
        non_null(out_kappa, "out_kappa")?;
        let stats = std::slice::from_raw_parts(statistics, n);
        let cal = core(threshold_from_statistics(stats, p_f, CalibrationStatistic::NoiseOnly))?;
        *out_kappa = cal.kappa;
        Ok(())
    })
}
