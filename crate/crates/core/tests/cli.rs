use std::process::Command;

fn bisac() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bisac"))
}

#[test]
fn invalid_config_reports_code_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[detection]\nmax_range = -5.0\n").unwrap();
    let out = bisac().arg("--config").arg(&cfg).arg("calibrate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error code=invalid_config"), "{err}");
    assert!(err.contains("max_range"), "{err}");
}

#[test]
fn unknown_config_key_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.toml");
    std::fs::write(&cfg, "[detection]\nmax_rnage = 100.0\n").unwrap();
    let out = bisac().arg("--config").arg(&cfg).arg("calibrate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error code="), "{err}");
    assert!(err.contains("max_rnage"), "{err}");
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bisac()
        .arg("--config")
        .arg(dir.path().join("absent.toml"))
        .arg("sweep-snr")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error code=io"));
}

#[test]
fn dump_samples_writes_stream_and_maps() {
    let dir = tempfile::tempdir().unwrap();
    let status = bisac()
        .arg("--out")
        .arg(dir.path())
        .args(["dump-samples", "--pattern", "2,1", "--index", "3"])
        .status()
        .unwrap();
    assert!(status.success());
    let raw = std::fs::metadata(dir.path().join("samples_3.iq")).unwrap();
    // 8400 complex samples, two f64 each
    assert_eq!(raw.len(), 8400 * 16);
    let metrics = std::fs::read_to_string(dir.path().join("metrics_3.csv")).unwrap();
    assert!(metrics.lines().count() > 1);
    let maps: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("periodogram_3_block"))
        .collect();
    assert_eq!(maps.len(), 1);
}

#[test]
fn dump_samples_is_reproducible_for_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let status = bisac()
            .args(["--seed", "11", "--out"])
            .arg(d.path())
            .args(["dump-samples", "--snr", "0"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let x = std::fs::read(a.path().join("samples_0.iq")).unwrap();
    let y = std::fs::read(b.path().join("samples_0.iq")).unwrap();
    assert_eq!(x, y);
}
