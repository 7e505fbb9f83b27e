//! Pilot-based sensing DSP: windowed CP removal and DFT at an arbitrary
//! sample offset, least-squares estimates on the pilot lattice, the
//! zero-padded delay-Doppler periodogram and sub-bin peak interpolation.
//!
//! Index conventions follow the periodogram definition: the Doppler axis `p`
//! runs over `-M_per/2 .. M_per/2 - 1` (forward kernel along symbols), the
//! delay axis `q` over `0 .. N_per - 1` (inverse kernel along subcarriers).
//!
//! The transmitter uses continuous subcarrier phases across symbols, which
//! leaves a deterministic `exp(j 2 pi n df m T_sym)` ramp on every demodulated
//! symbol. The LS stage removes it so that the lattice is separable in delay
//! and Doppler.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::waveform::{FrameConfig, FrameSymbols};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Number of whole symbols a window starting at `offset` can demodulate
/// from a stream of `len` samples. Equals `floor((M_sym T_sym - (l - 1) T_cp)
/// / T_sym)` at `offset = l N_cp`.
pub fn usable_symbols(cfg: &FrameConfig, len: usize, offset: usize) -> usize {
    let need = offset + cfg.num_subcarriers();
    if len < need {
        0
    } else {
        (len - need) / cfg.samples_per_symbol() + 1
    }
}

/// CP-removed DFT outputs `R[m, n]` for a window starting at `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDemod {
    pub offset: usize,
    pub symbols: usize,
    pub subcarriers: usize,
    /// Row-major `symbols x subcarriers`.
    pub grid: Vec<Complex64>,
}

impl WindowedDemod {
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.grid[m * self.subcarriers + n]
    }
}

fn window_phase(n: usize, cp: usize, ns: usize) -> Complex64 {
    // exp(+j 2 pi N_cp n / N_sc), reduced exactly in integers
    Complex64::from_polar(1.0, 2.0 * PI * ((n * cp) % ns) as f64 / ns as f64)
}

/// `R[m,n] = N_sc^{-1/2} sum_k r[m N_sam + offset + k] exp(-j 2 pi (k - N_cp) n / N_sc)`.
pub fn demod_window(samples: &[Complex64], cfg: &FrameConfig, offset: usize) -> Result<WindowedDemod> {
    let ns = cfg.num_subcarriers();
    let symbols = usable_symbols(cfg, samples.len(), offset);
    if symbols == 0 {
        return Err(Error::InsufficientSamples {
            offset,
            needed: offset + ns,
            available: samples.len(),
        });
    }
    let fft = FftPlanner::new().plan_fft_forward(ns);
    let scale = 1.0 / (ns as f64).sqrt();
    let phases: Vec<Complex64> = (0..ns)
        .map(|n| window_phase(n, cfg.cp_samples(), ns) * scale)
        .collect();
    let mut grid = Vec::with_capacity(symbols * ns);
    for m in 0..symbols {
        let start = m * cfg.samples_per_symbol() + offset;
        let mut buf = samples[start..start + ns].to_vec();
        fft.process(&mut buf);
        grid.extend(buf.iter().zip(&phases).map(|(v, ph)| v * ph));
    }
    Ok(WindowedDemod {
        offset,
        symbols,
        subcarriers: ns,
        grid,
    })
}

/// LS estimates on the pilot lattice, `h[mu, nu] = H[mu m_p, nu n_p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsGrid {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub values: Vec<Complex64>,
}

impl LsGrid {
    pub fn get(&self, mu: usize, nu: usize) -> Complex64 {
        self.values[mu * self.cols + nu]
    }

    pub fn lattice_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Deterministic `exp(-j 2 pi n df m T_sym)` correction for the continuous
/// subcarrier phase of the transmitter.
pub fn phase_ramp_correction(cfg: &FrameConfig, m: usize, n: usize) -> Complex64 {
    let cycles = (n as f64 * cfg.subcarrier_spacing() * m as f64 * cfg.symbol_duration()).fract();
    Complex64::from_polar(1.0, -2.0 * PI * cycles)
}

pub fn ls_estimates(demod: &WindowedDemod, symbols: &FrameSymbols, cfg: &FrameConfig) -> LsGrid {
    let pattern = symbols.pattern();
    let (m_p, n_p) = (cfg.pilot_spacing_time(), cfg.pilot_spacing_freq());
    let rows = pattern.rows_within(demod.symbols);
    let cols = pattern.cols();
    let mut values = Vec::with_capacity(rows * cols);
    for mu in 0..rows {
        for nu in 0..cols {
            let (m, n) = (mu * m_p, nu * n_p);
            values.push(demod.get(m, n) * symbols.get(m, n).conj() * phase_ramp_correction(cfg, m, n));
        }
    }
    LsGrid {
        offset: demod.offset,
        rows,
        cols,
        values,
    }
}

/// Integer and interpolated location of the periodogram maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Peak value of the periodogram, the decision metric.
    pub eta: f64,
    pub doppler_bin: i64,
    pub delay_bin: usize,
    pub doppler_frac: f64,
    pub delay_frac: f64,
    /// At least one axis had a flat neighbourhood and was not refined.
    pub degenerate: bool,
}

/// Full delay-Doppler periodogram with its peak.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerMap {
    pub m_per: usize,
    pub n_per: usize,
    /// Rows indexed by `p mod M_per`, columns by `q`.
    power: Vec<f64>,
    pub peak: Peak,
}

impl DelayDopplerMap {
    pub fn power(&self, p: i64, q: usize) -> f64 {
        let row = p.rem_euclid(self.m_per as i64) as usize;
        self.power[row * self.n_per + q % self.n_per]
    }

    pub fn eta(&self) -> f64 {
        self.peak.eta
    }

    pub fn doppler_range(&self) -> std::ops::Range<i64> {
        let half = (self.m_per / 2) as i64;
        -half..half
    }

    /// `p,q,P` rows with a header, Doppler index signed.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.m_per * self.n_per * 24);
        out.push_str("p,q,P\n");
        for p in self.doppler_range() {
            for q in 0..self.n_per {
                let _ = writeln!(out, "{p},{q},{:e}", self.power(p, q));
            }
        }
        out
    }
}

/// Vertex offset of the parabola through `(-1, minus), (0, center), (1, plus)`.
/// Returns `(0, true)` when the three values do not bend downward.
pub fn parabolic_offset(minus: f64, center: f64, plus: f64) -> (f64, bool) {
    let denom = 2.0 * (2.0 * center - plus - minus);
    if !(denom > 0.0) || !denom.is_finite() {
        return (0.0, true);
    }
    let delta = (plus - minus) / denom;
    if delta.abs() > 0.5 {
        (delta.clamp(-0.5, 0.5), false)
    } else {
        (delta, false)
    }
}

/// Zero-padded 2D transform engine. Holds FFT plans and scratch buffers so a
/// sweep can reuse them across windows.
pub struct PeriodogramPlan {
    m_per: usize,
    n_per: usize,
    fft_m: Arc<dyn Fft<f64>>,
    ifft_n: Arc<dyn Fft<f64>>,
    /// Column spectra, `cols x M_per`.
    columns: Vec<Complex64>,
    cols: usize,
    row: Vec<Complex64>,
    scratch: Vec<Complex64>,
    search: PeakSearch,
    coarse: Option<Box<PeriodogramPlan>>,
    coarse_power: Vec<f64>,
}

/// How [`PeriodogramPlan::peak`] locates the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakSearch {
    /// Every bin of the `M_per x N_per` grid.
    Exhaustive,
    /// Exact map on every `decimation`-th bin, then every fine bin within
    /// `decimation` of the strongest `candidates` coarse local maxima. Used
    /// only while the coarse grid still oversamples the lattice twice per
    /// axis; otherwise the search is exhaustive.
    Pruned { decimation: usize, candidates: usize },
}

impl Default for PeakSearch {
    fn default() -> Self {
        PeakSearch::Pruned {
            decimation: 4,
            candidates: 8,
        }
    }
}

impl std::fmt::Debug for PeriodogramPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodogramPlan")
            .field("m_per", &self.m_per)
            .field("n_per", &self.n_per)
            .finish()
    }
}

impl PeriodogramPlan {
    pub fn new(m_per: usize, n_per: usize) -> Self {
        Self::with_search(m_per, n_per, PeakSearch::Exhaustive)
    }

    /// Falls back to exhaustive search when the decimation does not divide
    /// both sizes.
    pub fn with_search(m_per: usize, n_per: usize, search: PeakSearch) -> Self {
        assert!(m_per >= 2 && n_per >= 2, "transform sizes must be at least 2");
        let (search, coarse) = match search {
            PeakSearch::Pruned { decimation: d, candidates }
                if d >= 2 && candidates >= 1 && m_per % d == 0 && n_per % d == 0 && m_per / d >= 2 && n_per / d >= 2 =>
            {
                (search, Some(Box::new(Self::new(m_per / d, n_per / d))))
            }
            _ => (PeakSearch::Exhaustive, None),
        };
        let mut planner = FftPlanner::new();
        let fft_m = planner.plan_fft_forward(m_per);
        let ifft_n = planner.plan_fft_inverse(n_per);
        let scratch_len = fft_m
            .get_inplace_scratch_len()
            .max(ifft_n.get_inplace_scratch_len());
        Self {
            m_per,
            n_per,
            fft_m,
            ifft_n,
            columns: Vec::new(),
            cols: 0,
            row: vec![ZERO; n_per],
            scratch: vec![ZERO; scratch_len],
            search,
            coarse,
            coarse_power: Vec::new(),
        }
    }

    pub fn sizes(&self) -> (usize, usize) {
        (self.m_per, self.n_per)
    }

    pub fn search(&self) -> PeakSearch {
        self.search
    }

    fn check(&self, ls: &LsGrid) {
        assert!(
            ls.rows <= self.m_per && ls.cols <= self.n_per,
            "lattice {}x{} exceeds transform size {}x{}",
            ls.rows,
            ls.cols,
            self.m_per,
            self.n_per
        );
    }

    /// Transforms every lattice column along the symbol axis.
    fn load(&mut self, ls: &LsGrid) {
        self.check(ls);
        let m = self.m_per;
        self.cols = ls.cols;
        self.columns.clear();
        self.columns.resize(ls.cols * m, ZERO);
        for nu in 0..ls.cols {
            let col = &mut self.columns[nu * m..(nu + 1) * m];
            for mu in 0..ls.rows {
                col[mu] = ls.values[mu * ls.cols + nu];
            }
            self.fft_m.process_with_scratch(col, &mut self.scratch);
        }
    }

    /// Delay-axis transform of Doppler row `row_idx` (`p mod M_per`) into `self.row`.
    fn row(&mut self, row_idx: usize) {
        let m = self.m_per;
        for nu in 0..self.cols {
            self.row[nu] = self.columns[nu * m + row_idx];
        }
        for v in &mut self.row[self.cols..] {
            *v = ZERO;
        }
        self.ifft_n.process_with_scratch(&mut self.row, &mut self.scratch);
    }

    fn row_indices(&self) -> impl Iterator<Item = (i64, usize)> {
        let half = (self.m_per / 2) as i64;
        let m = self.m_per as i64;
        (-half..m - half).map(move |p| (p, p.rem_euclid(m) as usize))
    }

    fn refine(&mut self, eta: f64, p_hat: i64, q_hat: usize) -> Peak {
        let n = self.n_per;
        let m = self.m_per as i64;
        let center_row = p_hat.rem_euclid(m) as usize;
        self.row(center_row);
        let q_minus = self.row[(q_hat + n - 1) % n].norm_sqr();
        let q_plus = self.row[(q_hat + 1) % n].norm_sqr();
        self.row((p_hat - 1).rem_euclid(m) as usize);
        let p_minus = self.row[q_hat].norm_sqr();
        self.row((p_hat + 1).rem_euclid(m) as usize);
        let p_plus = self.row[q_hat].norm_sqr();
        let (dp, flat_p) = parabolic_offset(p_minus, eta, p_plus);
        let (dq, flat_q) = parabolic_offset(q_minus, eta, q_plus);
        Peak {
            eta,
            doppler_bin: p_hat,
            delay_bin: q_hat,
            doppler_frac: p_hat as f64 + dp,
            delay_frac: q_hat as f64 + dq,
            degenerate: flat_p || flat_q,
        }
    }

    /// Peak metric and interpolated location without materialising the map.
    pub fn peak(&mut self, ls: &LsGrid) -> Peak {
        match self.search {
            PeakSearch::Pruned { decimation, candidates }
                if 2 * ls.rows <= self.m_per / decimation && 2 * ls.cols <= self.n_per / decimation =>
            {
                self.peak_pruned(ls, decimation, candidates)
            }
            _ => self.peak_exhaustive(ls),
        }
    }

    fn peak_pruned(&mut self, ls: &LsGrid, d: usize, k: usize) -> Peak {
        let coarse = self.coarse.as_mut().expect("pruned search keeps a coarse plan");
        let (mc, nc) = coarse.sizes();
        let mut power = std::mem::take(&mut self.coarse_power);
        power.resize(mc * nc, 0.0);
        coarse.fill_power(ls, &mut power);

        // coarse local maxima in signed (p, q) order
        let half = (mc / 2) as i64;
        let mut cands: Vec<(f64, i64, usize)> = Vec::new();
        for p in -half..mc as i64 - half {
            let r = p.rem_euclid(mc as i64) as usize;
            let up = (p - 1).rem_euclid(mc as i64) as usize;
            let dn = (p + 1).rem_euclid(mc as i64) as usize;
            for q in 0..nc {
                let v = power[r * nc + q];
                let ql = (q + nc - 1) % nc;
                let qr = (q + 1) % nc;
                let is_max = [up, r, dn]
                    .iter()
                    .all(|&rr| v >= power[rr * nc + ql] && v >= power[rr * nc + q] && v >= power[rr * nc + qr]);
                if is_max {
                    cands.push((v, p, q));
                }
            }
        }
        self.coarse_power = power;
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(k);

        self.load(ls);
        let (m, n) = (self.m_per as i64, self.n_per as i64);
        let reach = d as i64;
        let mut best = (-1.0f64, 0i64, 0usize);
        for &(_, pc, qc) in &cands {
            for p in pc * reach - reach..=pc * reach + reach {
                // keep p in the signed range
                let p = (p + m / 2).rem_euclid(m) - m / 2;
                self.row(p.rem_euclid(m) as usize);
                for q in qc as i64 * reach - reach..=qc as i64 * reach + reach {
                    let q = q.rem_euclid(n) as usize;
                    let pw = self.row[q].norm_sqr();
                    if pw > best.0 || (pw == best.0 && (p, q) < (best.1, best.2)) {
                        best = (pw, p, q);
                    }
                }
            }
        }
        self.refine(best.0, best.1, best.2)
    }

    fn fill_power(&mut self, ls: &LsGrid, power: &mut [f64]) {
        self.load(ls);
        let n = self.n_per;
        for idx in 0..self.m_per {
            self.row(idx);
            for (d, v) in power[idx * n..(idx + 1) * n].iter_mut().zip(&self.row) {
                *d = v.norm_sqr();
            }
        }
    }

    fn peak_exhaustive(&mut self, ls: &LsGrid) -> Peak {
        self.load(ls);
        let mut best = (-1.0f64, 0i64, 0usize);
        let rows: Vec<(i64, usize)> = self.row_indices().collect();
        for (p, idx) in rows {
            self.row(idx);
            for (q, v) in self.row.iter().enumerate() {
                let pw = v.norm_sqr();
                if pw > best.0 {
                    best = (pw, p, q);
                }
            }
        }
        self.refine(best.0, best.1, best.2)
    }

    pub fn map(&mut self, ls: &LsGrid) -> DelayDopplerMap {
        self.load(ls);
        let (m, n) = (self.m_per, self.n_per);
        let mut power = vec![0.0; m * n];
        let mut best = (-1.0f64, 0i64, 0usize);
        let rows: Vec<(i64, usize)> = self.row_indices().collect();
        for (p, idx) in rows {
            self.row(idx);
            let dst = &mut power[idx * n..(idx + 1) * n];
            for (q, (v, d)) in self.row.iter().zip(dst.iter_mut()).enumerate() {
                *d = v.norm_sqr();
                if *d > best.0 {
                    best = (*d, p, q);
                }
            }
        }
        let peak = interpolate_from_power(&power, m, n, best.0, best.1, best.2);
        DelayDopplerMap {
            m_per: m,
            n_per: n,
            power,
            peak,
        }
    }
}

fn interpolate_from_power(power: &[f64], m: usize, n: usize, eta: f64, p_hat: i64, q_hat: usize) -> Peak {
    let at = |p: i64, q: usize| power[p.rem_euclid(m as i64) as usize * n + q % n];
    let (dp, flat_p) = parabolic_offset(at(p_hat - 1, q_hat), eta, at(p_hat + 1, q_hat));
    let (dq, flat_q) = parabolic_offset(at(p_hat, q_hat + n - 1), eta, at(p_hat, q_hat + 1));
    Peak {
        eta,
        doppler_bin: p_hat,
        delay_bin: q_hat,
        doppler_frac: p_hat as f64 + dp,
        delay_frac: q_hat as f64 + dq,
        degenerate: flat_p || flat_q,
    }
}

/// `P(p,q) = |sum_nu (sum_mu h[mu,nu] e^{-j2pi mu p/M_per}) e^{+j2pi nu q/N_per}|^2`.
pub fn periodogram(ls: &LsGrid, m_per: usize, n_per: usize) -> DelayDopplerMap {
    PeriodogramPlan::new(m_per, n_per).map(ls)
}

/// Re-runs the per-axis parabolic fit around the map's integer peak.
pub fn interpolate_peak(map: &DelayDopplerMap) -> (f64, f64, bool) {
    let pk = interpolate_from_power(
        &map.power,
        map.m_per,
        map.n_per,
        map.peak.eta,
        map.peak.doppler_bin,
        map.peak.delay_bin,
    );
    (pk.doppler_frac, pk.delay_frac, pk.degenerate)
}

/// Maps periodogram coordinates of a window back to physical delay and
/// Doppler.
#[derive(Debug, Clone, Copy)]
pub struct BinScale {
    cp_samples: usize,
    sample_period: f64,
    delay_period: f64,
    delay_bin: f64,
    doppler_bin: f64,
}

impl BinScale {
    pub fn new(cfg: &FrameConfig, m_per: usize, n_per: usize) -> Self {
        let delay_period = cfg.unambiguous_delay();
        Self {
            cp_samples: cfg.cp_samples(),
            sample_period: cfg.sample_period(),
            delay_period,
            delay_bin: delay_period / n_per as f64,
            doppler_bin: cfg.unambiguous_doppler() / m_per as f64,
        }
    }

    /// Delay width of one periodogram bin, `1 / (n_p df N_per)`.
    pub fn delay_bin(&self) -> f64 {
        self.delay_bin
    }

    /// Doppler width of one bin, `1 / (m_p T_sym M_per)`.
    pub fn doppler_bin(&self) -> f64 {
        self.doppler_bin
    }

    /// Absolute delay for a window at demod `offset` and fractional delay
    /// bin. The lattice phase is referenced to `(offset + N_cp) T_s`; the
    /// alias is resolved towards the window's ISI-free span
    /// `[(offset - N_cp) T_s, offset T_s)`.
    pub fn delay(&self, offset: usize, delay_frac: f64) -> f64 {
        let reference = (offset + self.cp_samples) as f64 * self.sample_period;
        let center = (offset as f64 - self.cp_samples as f64 / 2.0) * self.sample_period;
        let raw = reference + delay_frac * self.delay_bin;
        raw - ((raw - center) / self.delay_period).round() * self.delay_period
    }

    pub fn doppler(&self, doppler_frac: f64) -> f64 {
        doppler_frac * self.doppler_bin
    }
}

/// Pilot-domain receiver for one known frame. Caches pilot conjugates,
/// phase corrections and FFT plans; not `Sync`, one per worker.
pub struct SensingReceiver {
    cfg: FrameConfig,
    dft: Arc<dyn Fft<f64>>,
    /// `conj(X) * ramp correction * window phase / sqrt(N_sc)` for every
    /// lattice point of the full frame.
    weights: Vec<Complex64>,
    rows_full: usize,
    cols: usize,
    plan: PeriodogramPlan,
    scale: BinScale,
    buf: Vec<Complex64>,
    dft_scratch: Vec<Complex64>,
}

impl SensingReceiver {
    pub fn new(cfg: &FrameConfig, symbols: &FrameSymbols, m_per: usize, n_per: usize) -> Self {
        Self::with_search(cfg, symbols, m_per, n_per, PeakSearch::default())
    }

    pub fn with_search(
        cfg: &FrameConfig,
        symbols: &FrameSymbols,
        m_per: usize,
        n_per: usize,
        search: PeakSearch,
    ) -> Self {
        let pattern = symbols.pattern();
        let (m_p, n_p) = (cfg.pilot_spacing_time(), cfg.pilot_spacing_freq());
        let ns = cfg.num_subcarriers();
        let rows_full = pattern.rows_within(cfg.num_symbols());
        let cols = pattern.cols();
        let scale = 1.0 / (ns as f64).sqrt();
        let mut weights = Vec::with_capacity(rows_full * cols);
        for mu in 0..rows_full {
            for nu in 0..cols {
                let (m, n) = (mu * m_p, nu * n_p);
                weights.push(
                    symbols.get(m, n).conj()
                        * phase_ramp_correction(cfg, m, n)
                        * window_phase(n, cfg.cp_samples(), ns)
                        * scale,
                );
            }
        }
        let dft = FftPlanner::new().plan_fft_forward(ns);
        let dft_scratch = vec![ZERO; dft.get_inplace_scratch_len()];
        Self {
            cfg: *cfg,
            dft,
            weights,
            rows_full,
            cols,
            plan: PeriodogramPlan::with_search(m_per, n_per, search),
            scale: BinScale::new(cfg, m_per, n_per),
            buf: vec![ZERO; ns],
            dft_scratch,
        }
    }

    pub fn config(&self) -> &FrameConfig {
        &self.cfg
    }

    pub fn scale(&self) -> &BinScale {
        &self.scale
    }

    /// Lattice estimates for the window at demod `offset`; only pilot
    /// symbols are transformed.
    pub fn ls_grid(&mut self, samples: &[Complex64], offset: usize) -> Result<LsGrid> {
        let cfg = &self.cfg;
        let ns = cfg.num_subcarriers();
        let symbols = usable_symbols(cfg, samples.len(), offset);
        if symbols == 0 {
            return Err(Error::InsufficientSamples {
                offset,
                needed: offset + ns,
                available: samples.len(),
            });
        }
        let (m_p, n_p) = (cfg.pilot_spacing_time(), cfg.pilot_spacing_freq());
        let rows = ((symbols - 1) / m_p + 1).min(self.rows_full);
        let mut values = Vec::with_capacity(rows * self.cols);
        for mu in 0..rows {
            let start = mu * m_p * cfg.samples_per_symbol() + offset;
            self.buf.copy_from_slice(&samples[start..start + ns]);
            self.dft.process_with_scratch(&mut self.buf, &mut self.dft_scratch);
            let w = &self.weights[mu * self.cols..(mu + 1) * self.cols];
            values.extend((0..self.cols).map(|nu| self.buf[nu * n_p] * w[nu]));
        }
        Ok(LsGrid {
            offset,
            rows,
            cols: self.cols,
            values,
        })
    }

    pub fn peak(&mut self, grid: &LsGrid) -> Peak {
        self.plan.peak(grid)
    }

    pub fn map(&mut self, grid: &LsGrid) -> DelayDopplerMap {
        self.plan.map(grid)
    }

    /// Decision metric and peak for the window at demod `offset`.
    pub fn metric_at(&mut self, samples: &[Complex64], offset: usize) -> Result<Peak> {
        let grid = self.ls_grid(samples, offset)?;
        Ok(self.plan.peak(&grid))
    }
}
