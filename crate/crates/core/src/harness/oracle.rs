use std::f64::consts::PI;

use num_complex::Complex64;

use crate::waveform::{eval_grid, FrameConfig, FrameSymbols};

/// Matched-filter maximum over a delay-Doppler grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub delay: f64,
    pub doppler: f64,
    /// `|sum_k r[k] conj(s_p(k T_s - tau) e^{j 2 pi f_D k T_s})|`
    pub value: f64,
    /// The maximum sits on the edge of a grid axis with more than one point.
    pub on_boundary: bool,
}

/// Frame grid with data resource elements zeroed.
pub fn pilot_only_grid(symbols: &FrameSymbols) -> Vec<Complex64> {
    let pattern = symbols.pattern();
    let mut grid = vec![Complex64::new(0.0, 0.0); symbols.grid().len()];
    let cols = symbols.symbol(0).len();
    for &(m, n) in pattern.positions() {
        grid[m * cols + n] = symbols.get(m, n);
    }
    grid
}

/// `center - half_width, ..., center + half_width` in steps of `step`.
pub fn uniform_grid(center: f64, half_width: f64, step: f64) -> Vec<f64> {
    let n = (half_width / step).round() as i64;
    (-n..=n).map(|i| center + i as f64 * step).collect()
}

/// Which received samples enter the matched-filter sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OracleSpan {
    /// Every sample of the stream.
    Full,
    /// Only samples whose replica time falls in the useful (post-CP) part of
    /// a symbol, where pilot and data subcarriers are orthogonal.
    #[default]
    UsefulPart,
}

/// Exhaustive matched filter with a pilot-only replica over the useful part
/// of each symbol.
pub fn brute_force_oracle(
    samples: &[Complex64],
    symbols: &FrameSymbols,
    cfg: &FrameConfig,
    delays: &[f64],
    dopplers: &[f64],
) -> OracleResult {
    brute_force_oracle_with(samples, symbols, cfg, delays, dopplers, OracleSpan::default())
}

/// Exhaustive matched filter evaluated directly on the samples. Ties keep the
/// first grid point.
pub fn brute_force_oracle_with(
    samples: &[Complex64],
    symbols: &FrameSymbols,
    cfg: &FrameConfig,
    delays: &[f64],
    dopplers: &[f64],
    span: OracleSpan,
) -> OracleResult {
    assert!(!delays.is_empty() && !dopplers.is_empty(), "oracle grids must be nonempty");
    let pilots = pilot_only_grid(symbols);
    let ts = cfg.sample_period();
    let t_sym = cfg.symbol_duration();
    let t_cp = cfg.cp_duration();
    let gate = |t: f64| match span {
        OracleSpan::Full => true,
        OracleSpan::UsefulPart => {
            let u = t - (t / t_sym).floor() * t_sym;
            // rounding guard so an on-grid CP boundary sample is kept
            u >= t_cp - 1e-6 * ts
        }
    };
    // r[k] conj(s_p(k T_s - tau)) once per delay, then a direct Doppler sum
    let mut product = vec![Complex64::new(0.0, 0.0); samples.len()];
    let rotators: Vec<Vec<Complex64>> = dopplers
        .iter()
        .map(|&f| {
            (0..samples.len())
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * (f * k as f64 * ts).fract()))
                .collect()
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for (i, &tau) in delays.iter().enumerate() {
        for (k, (p, r)) in product.iter_mut().zip(samples).enumerate() {
            let t = k as f64 * ts - tau;
            *p = if gate(t) {
                r * eval_grid(cfg, &pilots, t).conj()
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        for (j, rot) in rotators.iter().enumerate() {
            let v: Complex64 = product.iter().zip(rot).map(|(p, e)| p * e).sum();
            let v = v.norm();
            if v > best.0 {
                best = (v, i, j);
            }
        }
    }
    let edge = |idx: usize, len: usize| len > 1 && (idx == 0 || idx == len - 1);
    OracleResult {
        delay: delays[best.1],
        doppler: dopplers[best.2],
        value: best.0,
        on_boundary: edge(best.1, delays.len()) || edge(best.2, dopplers.len()),
    }
}
