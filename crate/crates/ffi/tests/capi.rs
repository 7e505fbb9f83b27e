use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use bisac_ffi::*;

fn reference_frame(n_p: usize, m_p: usize) -> *mut BisacFrame {
    let mut p = BisacFrameParams {
        carrier_frequency: 0.0,
        subcarrier_spacing: 0.0,
        cp_duration: 0.0,
        num_subcarriers: 0,
        num_symbols: 0,
        pilot_spacing_freq: 0,
        pilot_spacing_time: 0,
    };
    let mut frame = ptr::null_mut();
    unsafe {
        assert_eq!(bisac_frame_params_reference(&mut p), BisacStatus::Ok);
        p.pilot_spacing_freq = n_p;
        p.pilot_spacing_time = m_p;
        assert_eq!(bisac_frame_new(&p, 1, 2, &mut frame), BisacStatus::Ok);
    }
    frame
}

fn last_error() -> String {
    let p = bisac_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scene() -> BisacScene {
    BisacScene {
        tx: [-1000.0, 0.0],
        rx: [1000.0, 0.0],
        target: [150.0, -720.0],
        speed: 22.0,
        velocity_angle: 0.03,
        rcs: 1.0,
        los_present: 0,
    }
}

#[test]
fn reference_numerology_counts() {
    let frame = reference_frame(2, 1);
    unsafe {
        assert_eq!(bisac_frame_sample_count(frame), 8400);
        assert_eq!(bisac_frame_cp_samples(frame), 14);
        assert_eq!(bisac_frame_sample_count(ptr::null()), 0);
        bisac_frame_free(frame);
        bisac_frame_free(ptr::null_mut());
    }
}

#[test]
fn noiseless_detection_through_the_c_abi() {
    let frame = reference_frame(2, 1);
    let s = scene();
    let mut truth = BisacTruth::default();
    let mut len = 0usize;
    unsafe {
        assert_eq!(bisac_scene_truth(frame, &s, &mut truth), BisacStatus::Ok);
        // size query, then the real call
        assert_eq!(
            bisac_synthesize(frame, &s, 0.0, 7, ptr::null_mut(), 0, &mut len),
            BisacStatus::BufferTooSmall
        );
        assert_eq!(len, 8400);
        let mut iq = vec![0.0; 2 * len];
        assert_eq!(bisac_synthesize(frame, &s, 0.0, 7, iq.as_mut_ptr(), len, &mut len), BisacStatus::Ok);

        let mut rx = ptr::null_mut();
        assert_eq!(bisac_receiver_new(frame, 1024, 1024, &mut rx), BisacStatus::Ok);
        let mut metrics = [0.0; 16];
        let mut blocks = 0;
        assert_eq!(
            bisac_sweep(rx, iq.as_ptr(), len, 3000.0, metrics.as_mut_ptr(), metrics.len(), &mut blocks),
            BisacStatus::Ok
        );
        assert_eq!(blocks, 10);
        let max = metrics[..blocks].iter().cloned().fold(0.0, f64::max);

        let mut est = BisacEstimate::default();
        let status = bisac_detect(rx, iq.as_ptr(), len, 3000.0, 0.5 * max, 2, truth.baseline, truth.aoa, &mut est);
        assert_eq!(status, BisacStatus::Ok);
        assert_eq!(est.detected, 1);
        assert!((est.geometry.bistatic_range - truth.bistatic_range).abs() < 0.05, "{est:?} {truth:?}");
        assert!((est.geometry.bistatic_velocity - truth.bistatic_velocity).abs() < 0.02);

        // nothing crosses an unreachable threshold
        let status = bisac_detect(rx, iq.as_ptr(), len, 3000.0, 10.0 * max, 2, truth.baseline, truth.aoa, &mut est);
        assert_eq!(status, BisacStatus::Ok);
        assert_eq!(est.detected, 0);

        bisac_receiver_free(rx);
        bisac_frame_free(frame);
    }
}

#[test]
fn errors_map_to_codes_and_messages() {
    unsafe {
        assert_eq!(bisac_frame_params_reference(ptr::null_mut()), BisacStatus::NullPointer);
        assert!(last_error().contains("out"));

        let mut p = BisacFrameParams {
            carrier_frequency: 30e9,
            subcarrier_spacing: -1.0,
            cp_duration: 1e-6,
            num_subcarriers: 70,
            num_symbols: 100,
            pilot_spacing_freq: 2,
            pilot_spacing_time: 1,
        };
        let mut frame = ptr::null_mut();
        assert_eq!(bisac_frame_new(&p, 1, 2, &mut frame), BisacStatus::InvalidFrame);
        assert!(frame.is_null());
        assert!(last_error().contains("subcarrier spacing"));
        p.subcarrier_spacing = 200e3;
        assert_eq!(bisac_frame_new(&p, 1, 2, &mut frame), BisacStatus::Ok);

        let mut rx = ptr::null_mut();
        assert_eq!(bisac_receiver_new(frame, 1000, 1024, &mut rx), BisacStatus::InvalidArgument);

        let mut bad = scene();
        bad.target = bad.rx;
        let mut truth = BisacTruth::default();
        assert_eq!(bisac_scene_truth(frame, &bad, &mut truth), BisacStatus::InvalidScene);

        let mut len = 0;
        let mut iq = vec![0.0; 2];
        assert_eq!(
            bisac_synthesize(frame, &scene(), -1.0, 0, iq.as_mut_ptr(), 1, &mut len),
            BisacStatus::InvalidArgument
        );

        // too short to demodulate a single window
        assert_eq!(bisac_receiver_new(frame, 1024, 1024, &mut rx), BisacStatus::Ok);
        let short = vec![0.0; 2 * 40];
        let mut est = BisacEstimate::default();
        assert_eq!(
            bisac_detect(rx, short.as_ptr(), 40, 3000.0, 1.0, 2, 2000.0, 1.0, &mut est),
            BisacStatus::InsufficientSamples
        );
        bisac_receiver_free(rx);
        bisac_frame_free(frame);
    }
}

#[test]
fn threshold_and_geometry_helpers() {
    let stats: Vec<f64> = (1..=1000).map(f64::from).collect();
    let mut kappa = 0.0;
    unsafe {
        assert_eq!(bisac_threshold_from_statistics(stats.as_ptr(), 1000, 0.5, &mut kappa), BisacStatus::Ok);
        assert_eq!(kappa, 501.0);
        assert_eq!(
            bisac_threshold_from_statistics(stats.as_ptr(), 100, 1e-2, &mut kappa),
            BisacStatus::TooFewTrials
        );
        let mut g = BisacGeometry::default();
        // target on the perpendicular bisector at 1000 m depth: both legs sqrt(2) km
        let r = 2.0 * 2f64.sqrt() * 1000.0;
        let status = bisac_estimate_geometry(r / 3e8, 0.0, 2000.0, std::f64::consts::FRAC_PI_4, 30e9, &mut g);
        assert_eq!(status, BisacStatus::Ok);
        assert!((g.d_rx - 2f64.sqrt() * 1000.0).abs() < 1e-6, "{g:?}");
        assert!((g.bistatic_angle - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }
}

/// The generated header compiles as C and links against the static library.
#[test]
fn c_program_links_against_the_header() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libbisac_ffi.a");
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "bisac.h"
int main(void) {
    BisacFrameParams p;
    BisacFrame *f = NULL;
    if (bisac_frame_params_reference(&p) != BISAC_STATUS_OK) return 1;
    if (bisac_frame_new(&p, 1, 2, &f) != BISAC_STATUS_OK) return 2;
    if (bisac_frame_sample_count(f) != 8400) return 3;
    p.num_subcarriers = 0;
    BisacFrame *g = NULL;
    if (bisac_frame_new(&p, 1, 2, &g) != BISAC_STATUS_INVALID_FRAME) return 4;
    if (bisac_last_error_message() == NULL) return 5;
    BisacGeometry geo;
    if (bisac_estimate_geometry(1e-5, 100.0, 2000.0, 1.0, 30e9, &geo) != BISAC_STATUS_OK) return 6;
    if (fabs(geo.bistatic_range - 3000.0) > 1e-6) return 7;
    bisac_frame_free(f);
    puts("ok");
    return 0;
}
"#,
    )
    .unwrap();
    let include = crate_dir.join("include");
    let check = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(check.success(), "header does not compile as C99");
    if !lib.exists() {
        eprintln!("{} not built; header checked only", lib.display());
        return;
    }
    let bin = tmp.path().join("smoke");
    let link = Command::new(&cc)
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(link.success(), "linking the static library failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke program exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
