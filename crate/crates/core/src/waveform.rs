//! OFDM frame numerology, periodic pilot lattice and the analytic baseband
//! signal.
//!
//! The transmit signal uses globally continuous subcarrier phases,
//! `s(t) = N_sc^{-1/2} sum_m sum_n X[m,n] exp(j 2 pi n df t) u(t - m T_sym)`,
//! with a rectangular symbol window of length `T_sym = T_cp + T_d`. Because
//! every subcarrier is `T_d`-periodic, the first `T_cp` of each symbol repeats
//! its tail, which is the cyclic prefix.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SPEED_OF_LIGHT;

/// User-facing numerology, as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameParams {
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
    /// Subcarrier spacing in Hz.
    pub subcarrier_spacing: f64,
    /// Cyclic prefix duration in seconds.
    pub cp_duration: f64,
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    /// Pilot period along frequency (subcarriers).
    pub pilot_spacing_freq: usize,
    /// Pilot period along time (symbols).
    pub pilot_spacing_time: usize,
}

impl FrameParams {
    /// 30 GHz, 200 kHz spacing, 1 us CP, 70 x 100 grid, (n_p, m_p) = (2, 1).
    pub fn reference() -> Self {
        Self {
            carrier_frequency: 30e9,
            subcarrier_spacing: 200e3,
            cp_duration: 1e-6,
            num_subcarriers: 70,
            num_symbols: 100,
            pilot_spacing_freq: 2,
            pilot_spacing_time: 1,
        }
    }

    pub fn with_pilot_spacing(mut self, freq: usize, time: usize) -> Self {
        self.pilot_spacing_freq = freq;
        self.pilot_spacing_time = time;
        self
    }
}

impl Default for FrameParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Validated numerology with the derived timing quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    params: FrameParams,
    data_duration: f64,
    symbol_duration: f64,
    sample_period: f64,
    cp_samples: usize,
}

impl FrameConfig {
    pub fn new(params: FrameParams) -> Result<Self> {
        let p = &params;
        let bad = |msg: String| Err(Error::InvalidFrame(msg));
        if !(p.carrier_frequency.is_finite() && p.carrier_frequency > 0.0) {
            return bad(format!("carrier frequency must be positive, got {}", p.carrier_frequency));
        }
        if !(p.subcarrier_spacing.is_finite() && p.subcarrier_spacing > 0.0) {
            return bad(format!("subcarrier spacing must be positive, got {}", p.subcarrier_spacing));
        }
        if !(p.cp_duration.is_finite() && p.cp_duration >= 0.0) {
            return bad(format!("cp duration must be non-negative, got {}", p.cp_duration));
        }
        if p.num_subcarriers == 0 || p.num_symbols == 0 {
            return bad("frame needs at least one subcarrier and one symbol".into());
        }
        if p.pilot_spacing_freq == 0 || p.pilot_spacing_freq > p.num_subcarriers {
            return bad(format!(
                "pilot spacing in frequency must lie in 1..={}, got {}",
                p.num_subcarriers, p.pilot_spacing_freq
            ));
        }
        if p.pilot_spacing_time == 0 || p.pilot_spacing_time > p.num_symbols {
            return bad(format!(
                "pilot spacing in time must lie in 1..={}, got {}",
                p.num_symbols, p.pilot_spacing_time
            ));
        }
        let data_duration = 1.0 / p.subcarrier_spacing;
        let symbol_duration = p.cp_duration + data_duration;
        let sample_period = data_duration / p.num_subcarriers as f64;
        // round half away from zero
        let cp_samples = (p.cp_duration / sample_period).round() as usize;
        if cp_samples == 0 {
            return bad("cyclic prefix rounds to zero samples".into());
        }
        Ok(Self {
            params,
            data_duration,
            symbol_duration,
            sample_period,
            cp_samples,
        })
    }

    pub fn reference() -> Self {
        Self::new(FrameParams::reference()).expect("reference numerology is valid")
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }
    pub fn carrier_frequency(&self) -> f64 {
        self.params.carrier_frequency
    }
    pub fn subcarrier_spacing(&self) -> f64 {
        self.params.subcarrier_spacing
    }
    pub fn cp_duration(&self) -> f64 {
        self.params.cp_duration
    }
    pub fn num_subcarriers(&self) -> usize {
        self.params.num_subcarriers
    }
    pub fn num_symbols(&self) -> usize {
        self.params.num_symbols
    }
    pub fn pilot_spacing_freq(&self) -> usize {
        self.params.pilot_spacing_freq
    }
    pub fn pilot_spacing_time(&self) -> usize {
        self.params.pilot_spacing_time
    }
    /// `T_d = 1 / df`.
    pub fn data_duration(&self) -> f64 {
        self.data_duration
    }
    /// `T_sym = T_cp + T_d`.
    pub fn symbol_duration(&self) -> f64 {
        self.symbol_duration
    }
    /// `T_s = T_d / N_sc`.
    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }
    pub fn cp_samples(&self) -> usize {
        self.cp_samples
    }
    /// `N_sam = N_sc + N_cp`.
    pub fn samples_per_symbol(&self) -> usize {
        self.params.num_subcarriers + self.cp_samples
    }
    /// Length of one received frame in samples.
    pub fn frame_samples(&self) -> usize {
        self.params.num_symbols * self.samples_per_symbol()
    }
    pub fn frame_duration(&self) -> f64 {
        self.params.num_symbols as f64 * self.symbol_duration
    }
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.params.carrier_frequency
    }
    /// Largest monostatic target range a single CP absorbs, `c T_cp / 2`.
    pub fn cp_limited_monostatic_range(&self) -> f64 {
        SPEED_OF_LIGHT * self.params.cp_duration / 2.0
    }
    /// Largest bistatic path length a single CP absorbs, `c T_cp`.
    pub fn cp_limited_bistatic_range(&self) -> f64 {
        SPEED_OF_LIGHT * self.params.cp_duration
    }

    /// Delay span that pilot spacing `n_p` can represent without aliasing,
    /// `1 / (n_p df)`.
    pub fn unambiguous_delay(&self) -> f64 {
        1.0 / (self.params.pilot_spacing_freq as f64 * self.params.subcarrier_spacing)
    }

    /// Doppler span of the pilot lattice, `1 / (m_p T_sym)`.
    pub fn unambiguous_doppler(&self) -> f64 {
        1.0 / (self.params.pilot_spacing_time as f64 * self.symbol_duration)
    }

    /// Rejects numerologies whose pilot lattice cannot resolve a window's
    /// worth of delay or the requested Doppler without aliasing.
    pub fn check_sensing_spans(&self, max_doppler: f64) -> Result<()> {
        let window = self.params.cp_duration + self.sample_period;
        if self.unambiguous_delay() <= window {
            return Err(Error::InvalidFrame(format!(
                "pilot delay span {:.3e} s does not exceed the window span {:.3e} s",
                self.unambiguous_delay(),
                window
            )));
        }
        if 2.0 * max_doppler.abs() >= self.unambiguous_doppler() {
            return Err(Error::InvalidFrame(format!(
                "max Doppler {:.1} Hz outside the pilot Doppler span +/-{:.1} Hz",
                max_doppler,
                self.unambiguous_doppler() / 2.0
            )));
        }
        Ok(())
    }
}

/// Periodic pilot lattice: `(m, n)` is a pilot iff `m % m_p == 0` and
/// `n % n_p == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern {
    spacing_time: usize,
    spacing_freq: usize,
    num_symbols: usize,
    num_subcarriers: usize,
    positions: Vec<(usize, usize)>,
}

impl PilotPattern {
    pub fn is_pilot(&self, m: usize, n: usize) -> bool {
        m < self.num_symbols
            && n < self.num_subcarriers
            && m % self.spacing_time == 0
            && n % self.spacing_freq == 0
    }

    /// Pilot positions in (symbol, subcarrier) row-major order.
    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn count(&self) -> usize {
        self.positions.len()
    }

    /// Fraction of time-frequency resources carrying pilots.
    pub fn overhead(&self) -> f64 {
        self.count() as f64 / (self.num_symbols * self.num_subcarriers) as f64
    }

    /// Pilot rows among the first `symbols` symbols.
    pub fn rows_within(&self, symbols: usize) -> usize {
        if symbols == 0 {
            0
        } else {
            (symbols - 1) / self.spacing_time + 1
        }
    }

    pub fn cols(&self) -> usize {
        (self.num_subcarriers - 1) / self.spacing_freq + 1
    }
}

pub fn build_pilot_pattern(cfg: &FrameConfig) -> PilotPattern {
    let (m_p, n_p) = (cfg.pilot_spacing_time(), cfg.pilot_spacing_freq());
    let positions = (0..cfg.num_symbols())
        .step_by(m_p)
        .flat_map(|m| (0..cfg.num_subcarriers()).step_by(n_p).map(move |n| (m, n)))
        .collect();
    PilotPattern {
        spacing_time: m_p,
        spacing_freq: n_p,
        num_symbols: cfg.num_symbols(),
        num_subcarriers: cfg.num_subcarriers(),
        positions,
    }
}

const QPSK: [Complex64; 4] = [
    Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    Complex64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

/// Modulation grid `X[m, n]`, row-major by symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSymbols {
    num_symbols: usize,
    num_subcarriers: usize,
    grid: Vec<Complex64>,
    pattern: PilotPattern,
}

impl FrameSymbols {
    /// Wraps an explicit grid; every entry must have unit modulus.
    pub fn from_grid(cfg: &FrameConfig, grid: Vec<Complex64>) -> Result<Self> {
        if grid.len() != cfg.num_symbols() * cfg.num_subcarriers() {
            return Err(Error::InvalidFrame(format!(
                "grid has {} entries, expected {}",
                grid.len(),
                cfg.num_symbols() * cfg.num_subcarriers()
            )));
        }
        if let Some(x) = grid.iter().find(|x| (x.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidFrame(format!("symbol {x} is not unit modulus")));
        }
        Ok(Self {
            num_symbols: cfg.num_symbols(),
            num_subcarriers: cfg.num_subcarriers(),
            grid,
            pattern: build_pilot_pattern(cfg),
        })
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.grid[m * self.num_subcarriers + n]
    }

    pub fn symbol(&self, m: usize) -> &[Complex64] {
        let n = self.num_subcarriers;
        &self.grid[m * n..(m + 1) * n]
    }

    pub fn grid(&self) -> &[Complex64] {
        &self.grid
    }

    pub fn pattern(&self) -> &PilotPattern {
        &self.pattern
    }

    /// Copy of the grid with every data position zeroed.
    pub fn pilots_only(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for &(m, n) in self.pattern.positions() {
            let i = m * self.num_subcarriers + n;
            out[i] = self.grid[i];
        }
        out
    }
}

/// QPSK frame; pilots come from `pilot_seed` and data from `data_seed`, so
/// the pilot values do not depend on the data draw.
pub fn generate_frame(cfg: &FrameConfig, pilot_seed: u64, data_seed: u64) -> FrameSymbols {
    let pattern = build_pilot_pattern(cfg);
    let mut pilot_rng = ChaCha8Rng::seed_from_u64(pilot_seed);
    let mut data_rng = ChaCha8Rng::seed_from_u64(data_seed);
    let (ms, ns) = (cfg.num_symbols(), cfg.num_subcarriers());
    let mut grid = Vec::with_capacity(ms * ns);
    for m in 0..ms {
        for n in 0..ns {
            let rng = if pattern.is_pilot(m, n) {
                &mut pilot_rng
            } else {
                &mut data_rng
            };
            grid.push(QPSK[rng.gen_range(0..4)]);
        }
    }
    FrameSymbols {
        num_symbols: ms,
        num_subcarriers: ns,
        grid,
        pattern,
    }
}

/// Exact evaluation of `s(t)`; zero outside `[0, M_sym T_sym)`.
pub fn eval_baseband(cfg: &FrameConfig, symbols: &FrameSymbols, t: f64) -> Complex64 {
    eval_grid(cfg, &symbols.grid, t)
}

/// Same as [`eval_baseband`] for a raw row-major grid (e.g. pilots only).
pub fn eval_grid(cfg: &FrameConfig, grid: &[Complex64], t: f64) -> Complex64 {
    let zero = Complex64::new(0.0, 0.0);
    if !(t >= 0.0) {
        return zero;
    }
    let m = (t / cfg.symbol_duration()).floor();
    if m >= cfg.num_symbols() as f64 {
        return zero;
    }
    let m = m as usize;
    let ns = cfg.num_subcarriers();
    let row = &grid[m * ns..(m + 1) * ns];
    // Horner in w = exp(j 2 pi df t); the phase is reduced mod 1 first
    let cycles = (cfg.subcarrier_spacing() * t).fract();
    let w = Complex64::from_polar(1.0, 2.0 * PI * cycles);
    let acc = row.iter().rev().fold(zero, |acc, &x| acc * w + x);
    acc / (ns as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg(n_sc: usize, m_sym: usize, n_p: usize, m_p: usize) -> FrameConfig {
        // keep at least one CP sample for very narrow grids
        let ts = 5e-6 / n_sc as f64;
        FrameConfig::new(FrameParams {
            num_subcarriers: n_sc,
            num_symbols: m_sym,
            pilot_spacing_freq: n_p,
            pilot_spacing_time: m_p,
            cp_duration: f64::max(1e-6, ts),
            ..FrameParams::reference()
        })
        .unwrap()
    }

    #[test]
    fn reference_numerology() {
        let c = FrameConfig::reference();
        assert_eq!(c.cp_samples(), 14);
        assert_eq!(c.samples_per_symbol(), 84);
        assert_eq!(c.frame_samples(), 8400);
        assert!((c.sample_period() - 5e-6 / 70.0).abs() < 1e-20);
        assert!((c.symbol_duration() - 6e-6).abs() < 1e-18);
        assert!((c.wavelength() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn pilot_counts() {
        let p = build_pilot_pattern(&cfg(70, 100, 2, 4));
        assert_eq!(p.count(), 875);
        assert_eq!(p.overhead(), 0.125);
        let p = build_pilot_pattern(&cfg(70, 100, 2, 1));
        assert_eq!(p.count(), 3500);
        assert_eq!(p.overhead(), 0.5);
        let p = build_pilot_pattern(&cfg(70, 100, 2, 2));
        assert_eq!(p.overhead(), 0.25);
    }

    #[test]
    fn degenerate_all_pilot_grid() {
        let c = cfg(1, 1, 1, 1);
        let p = build_pilot_pattern(&c);
        assert_eq!(p.count(), 1);
        assert_eq!(p.overhead(), 1.0);
    }

    #[test]
    fn rejects_zero_cp_and_bad_spacing() {
        let zero_cp = FrameParams {
            cp_duration: 0.0,
            ..FrameParams::reference()
        };
        assert!(FrameConfig::new(zero_cp).is_err());
        let tiny_cp = FrameParams {
            cp_duration: 0.4 * 5e-6 / 70.0,
            ..FrameParams::reference()
        };
        assert!(FrameConfig::new(tiny_cp).is_err());
        assert!(FrameConfig::new(FrameParams::reference().with_pilot_spacing(0, 1)).is_err());
        assert!(FrameConfig::new(FrameParams::reference().with_pilot_spacing(2, 101)).is_err());
    }

    #[test]
    fn cp_rounding_is_half_away_from_zero() {
        let ts = 5e-6 / 70.0;
        let c = FrameConfig::new(FrameParams {
            cp_duration: 2.5 * ts,
            ..FrameParams::reference()
        })
        .unwrap();
        assert_eq!(c.cp_samples(), 3);
    }

    #[test]
    fn sensing_spans() {
        let c = FrameConfig::reference();
        assert!((c.unambiguous_delay() - 2.5e-6).abs() < 1e-18);
        c.check_sensing_spans(6000.0).unwrap();
        assert!(c.check_sensing_spans(90e3).is_err());
        let wide = FrameConfig::new(FrameParams::reference().with_pilot_spacing(6, 1)).unwrap();
        assert!(wide.check_sensing_spans(0.0).is_err());
    }

    #[test]
    fn frame_determinism_and_seed_separation() {
        let c = FrameConfig::reference();
        let a = generate_frame(&c, 1, 2);
        let b = generate_frame(&c, 1, 2);
        assert_eq!(a, b);
        let d = generate_frame(&c, 1, 3);
        let mut data_differs = false;
        for m in 0..c.num_symbols() {
            for n in 0..c.num_subcarriers() {
                if a.pattern().is_pilot(m, n) {
                    assert_eq!(a.get(m, n), d.get(m, n));
                } else if a.get(m, n) != d.get(m, n) {
                    data_differs = true;
                }
            }
        }
        assert!(data_differs);
        let worst = a.grid().iter().map(|x| (x.norm() - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-15);
    }

    #[test]
    fn baseband_support_and_single_tone() {
        let c = cfg(1, 1, 1, 1);
        let x = FrameSymbols::from_grid(&c, vec![Complex64::new(1.0, 0.0)]).unwrap();
        assert_eq!(eval_baseband(&c, &x, -1e-9), Complex64::new(0.0, 0.0));
        let v = eval_baseband(&c, &x, 0.3 * c.symbol_duration());
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(eval_baseband(&c, &x, c.frame_duration()), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn horner_matches_direct_sum() {
        let c = FrameConfig::reference();
        let x = generate_frame(&c, 5, 6);
        let ns = c.num_subcarriers();
        for &t in &[0.0, 1.234e-6, 3.3e-4, 5.99e-4] {
            let m = (t / c.symbol_duration()).floor() as usize;
            let direct: Complex64 = (0..ns)
                .map(|n| {
                    x.get(m, n)
                        * Complex64::from_polar(1.0, 2.0 * PI * n as f64 * c.subcarrier_spacing() * t)
                })
                .sum::<Complex64>()
                / (ns as f64).sqrt();
            assert!((direct - eval_baseband(&c, &x, t)).norm() < 1e-10);
        }
    }

    #[test]
    fn cyclic_prefix_replicates_tail() {
        let c = FrameConfig::reference();
        let x = generate_frame(&c, 11, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let m = rng.gen_range(0..c.num_symbols());
            let t = m as f64 * c.symbol_duration() + rng.gen::<f64>() * c.cp_duration() * 0.999;
            let a = eval_baseband(&c, &x, t);
            let b = eval_baseband(&c, &x, t + c.data_duration());
            assert!((a - b).norm() <= 1e-9 * a.norm().max(1e-3), "t={t}");
        }
    }

    #[test]
    fn unit_energy_per_useful_sample() {
        let c = FrameConfig::reference();
        let x = generate_frame(&c, 3, 4);
        for m in [0, 17, 99] {
            let start = m * c.samples_per_symbol() + c.cp_samples();
            let mean: f64 = (0..c.num_subcarriers())
                .map(|k| eval_baseband(&c, &x, (start + k) as f64 * c.sample_period()).norm_sqr())
                .sum::<f64>()
                / c.num_subcarriers() as f64;
            assert!((mean - 1.0).abs() < 1e-6, "symbol {m}: {mean}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn pilot_count_matches_enumeration(
            n_sc in 1usize..90, m_sym in 1usize..60, np_raw in 1usize..90, mp_raw in 1usize..60
        ) {
            let n_p = 1 + (np_raw - 1) % n_sc;
            let m_p = 1 + (mp_raw - 1) % m_sym;
            let p = build_pilot_pattern(&cfg(n_sc, m_sym, n_p, m_p));
            let brute = (0..m_sym)
                .flat_map(|m| (0..n_sc).map(move |n| (m, n)))
                .filter(|&(m, n)| m % m_p == 0 && n % n_p == 0)
                .count();
            let formula = ((n_sc - 1) / n_p + 1) * ((m_sym - 1) / m_p + 1);
            prop_assert_eq!(p.count(), brute);
            prop_assert_eq!(p.count(), formula);
            prop_assert!((p.overhead() - brute as f64 / (n_sc * m_sym) as f64).abs() < 1e-15);
        }
    }
}
