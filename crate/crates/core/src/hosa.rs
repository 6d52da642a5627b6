//! Higher-order spectral analysis: DFT, segmentation and the bicoherence
//! estimator with its scalar objectives.
//!
//! For `K` realizations `F_k` of a length-`N` signal the estimator is
//!
//! ```text
//!              | (1/K) sum_k F_k(w1) F_k(w2) F_k*(w1 + w2) |
//! b(w1, w2) = ---------------------------------------------------------------
//!             sqrt( (1/K) sum_k |F_k(w1) F_k(w2)|^2 * (1/K) sum_k |F_k(w1 + w2)|^2 )
//! ```
//!
//! with bifrequency indices taken modulo `N`. By Cauchy-Schwarz every value
//! lies in `[0, 1]`, and a single realization gives exactly 1 wherever the
//! denominator is nonzero.

use std::io::Write;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bins whose denominator falls below this fraction of the grid's largest
/// denominator are flagged undefined.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

/// Forward DFT of a real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Vec<Complex64>,
}

impl Spectrum {
    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Bin at a signed frequency index, wrapped modulo the length.
    pub fn at(&self, omega: isize) -> Complex64 {
        let n = self.bins.len() as isize;
        self.bins[omega.rem_euclid(n) as usize]
    }
}

/// Unnormalized forward transform `F(w) = sum_k f(k) exp(-2 pi i w k / N)`.
pub fn dft(signal: &[f64]) -> Result<Spectrum> {
    if signal.len() < 2 {
        return Err(Error::Domain(format!("dft needs at least 2 samples, got {}", signal.len())));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("dft input contains non-finite samples".into()));
    }
    let mut bins: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(bins.len()).process(&mut bins);
    Ok(Spectrum { bins })
}

/// Inverse of [`dft`], returning the real part.
pub fn idft(spectrum: &Spectrum) -> Vec<f64> {
    let n = spectrum.len();
    let mut buf = spectrum.bins.clone();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    Hann,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// How a long signal is cut into realizations for the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentPolicy {
    /// Segment length `N`; must be a power of two.
    pub length: usize,
    /// Start-to-start distance between consecutive segments.
    pub hop: usize,
    pub window: Window,
    /// Subtract the (window-weighted) mean before windowing, which zeroes
    /// the DC bin of every segment.
    pub remove_mean: bool,
}

impl Default for SegmentPolicy {
    fn default() -> Self {
        Self::with_length(64)
    }
}

impl SegmentPolicy {
    /// 50% overlap, rectangular window, mean removal.
    pub fn with_length(length: usize) -> Self {
        Self {
            length,
            hop: (length / 2).max(1),
            window: Window::Rectangular,
            remove_mean: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_power_of_two(self.length)?;
        if self.hop == 0 {
            return Err(Error::Domain("segment hop must be positive".into()));
        }
        Ok(())
    }
}

fn check_power_of_two(n: usize) -> Result<()> {
    if n >= 2 && n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::Domain(format!("segment length {n} is not a power of two >= 2")))
    }
}

/// Cuts `signal` into overlapping, windowed, mean-removed segments.
pub fn segment(signal: &[f64], policy: &SegmentPolicy) -> Result<Vec<Vec<f64>>> {
    policy.validate()?;
    let n = policy.length;
    if signal.len() < n {
        return Err(Error::Domain(format!(
            "signal of length {} is shorter than one segment ({n})",
            signal.len()
        )));
    }
    let window = policy.window.coefficients(n);
    let weight: f64 = window.iter().sum();
    let mut out = Vec::with_capacity((signal.len() - n) / policy.hop + 1);
    let mut start = 0;
    while start + n <= signal.len() {
        let chunk = &signal[start..start + n];
        let mean = if policy.remove_mean {
            chunk.iter().zip(&window).map(|(x, w)| x * w).sum::<f64>() / weight
        } else {
            0.0
        };
        let mut seg: Vec<f64> = chunk.iter().zip(&window).map(|(x, w)| (x - mean) * w).collect();
        // A chunk that is constant up to rounding carries no signal; zero it
        // exactly so that it cannot produce spurious coherence.
        let scale = chunk.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if policy.remove_mean && seg.iter().all(|v| v.abs() <= 1e-12 * scale) {
            seg.iter_mut().for_each(|v| *v = 0.0);
        }
        out.push(seg);
        start += policy.hop;
    }
    Ok(out)
}

/// Bicoherence values over the full bifrequency square `[-N/2, N/2]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BicoherenceGrid {
    n: usize,
    values: Vec<f64>,
    defined: Vec<bool>,
}

impl BicoherenceGrid {
    /// Assembles a grid from row-major values over `[-N/2, N/2]^2`
    /// (`(N + 1)^2` entries, `w1` major). Undefined entries are stored as 0.
    pub fn from_parts(n: usize, values: Vec<f64>, defined: Vec<bool>) -> Result<Self> {
        check_power_of_two(n)?;
        let side = n + 1;
        if values.len() != side * side || defined.len() != side * side {
            return Err(Error::Domain(format!("grid for N={n} needs {} entries", side * side)));
        }
        let values = values
            .into_iter()
            .zip(&defined)
            .map(|(v, &d)| if d { v } else { 0.0 })
            .collect();
        Ok(Self { n, values, defined })
    }

    /// Segment length `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    fn half(&self) -> isize {
        (self.n / 2) as isize
    }

    fn index(&self, w1: isize, w2: isize) -> Option<usize> {
        let h = self.half();
        if w1 < -h || w1 > h || w2 < -h || w2 > h {
            return None;
        }
        Some(((w1 + h) as usize) * (self.n + 1) + (w2 + h) as usize)
    }

    /// The estimate at `(w1, w2)`, or `None` if undefined or out of range.
    pub fn value(&self, w1: isize, w2: isize) -> Option<f64> {
        let i = self.index(w1, w2)?;
        self.defined[i].then_some(self.values[i])
    }

    pub fn is_defined(&self, w1: isize, w2: isize) -> bool {
        self.index(w1, w2).is_some_and(|i| self.defined[i])
    }

    /// `(w1, w2, value, defined)` for every entry, `w1` major.
    pub fn entries(&self) -> impl Iterator<Item = (isize, isize, f64, bool)> + '_ {
        let h = self.half();
        let side = self.n + 1;
        (0..side * side).map(move |i| {
            let w1 = (i / side) as isize - h;
            let w2 = (i % side) as isize - h;
            (w1, w2, self.values[i], self.defined[i])
        })
    }

    pub fn defined_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.defined)
            .filter_map(|(&v, &d)| d.then_some(v))
    }

    pub fn defined_count(&self) -> usize {
        self.defined.iter().filter(|&&d| d).count()
    }

    /// Writes `w1,w2,value,defined` rows.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "w1,w2,value,defined")?;
        for (w1, w2, v, d) in self.entries() {
            writeln!(out, "{w1},{w2},{v:.17e},{}", u8::from(d))?;
        }
        Ok(())
    }
}

/// Estimates the bicoherence from equal-length realizations.
pub fn bicoherence(segments: &[Vec<f64>], n: usize) -> Result<BicoherenceGrid> {
    check_power_of_two(n)?;
    if segments.is_empty() {
        return Err(Error::Domain("bicoherence needs at least one segment".into()));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut spectra = Vec::with_capacity(segments.len());
    for (k, seg) in segments.iter().enumerate() {
        if seg.len() != n {
            return Err(Error::Domain(format!(
                "segment {k} has length {}, expected {n}",
                seg.len()
            )));
        }
        if seg.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("segment {k} contains non-finite samples")));
        }
        let mut buf: Vec<Complex64> = seg.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.process(&mut buf);
        spectra.push(buf);
    }
    Ok(bicoherence_from_spectra(&spectra, n))
}

fn bicoherence_from_spectra(spectra: &[Vec<Complex64>], n: usize) -> BicoherenceGrid {
    // Accumulate over the upper triangle of the mod-N square; the lower one
    // is its mirror image.
    let mut num = vec![Complex64::new(0.0, 0.0); n * n];
    let mut pair_power = vec![0.0f64; n * n];
    let mut sum_power = vec![0.0f64; n * n];
    for f in spectra {
        for i in 0..n {
            let fi = f[i];
            let row = i * n;
            for j in i..n {
                let fij = fi * f[j];
                let fs = f[(i + j) % n];
                num[row + j] += fij * fs.conj();
                pair_power[row + j] += fij.norm_sqr();
                sum_power[row + j] += fs.norm_sqr();
            }
        }
    }
    let k = spectra.len() as f64;
    let mut modular = vec![0.0f64; n * n];
    let mut denom = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let idx = i * n + j;
            let d = ((pair_power[idx] / k) * (sum_power[idx] / k)).sqrt();
            let v = num[idx].norm() / k;
            denom[idx] = d;
            denom[j * n + i] = d;
            modular[idx] = v;
            modular[j * n + i] = v;
        }
    }
    let max_denom = denom.iter().cloned().fold(0.0, f64::max);
    let threshold = DENOMINATOR_GUARD * max_denom;

    let side = n + 1;
    let h = (n / 2) as isize;
    let mut values = vec![0.0; side * side];
    let mut defined = vec![false; side * side];
    for a in 0..side {
        let i = (a as isize - h).rem_euclid(n as isize) as usize;
        for b in 0..side {
            let j = (b as isize - h).rem_euclid(n as isize) as usize;
            let idx = i * n + j;
            if max_denom > 0.0 && denom[idx] > threshold {
                values[a * side + b] = modular[idx] / denom[idx];
                defined[a * side + b] = true;
            }
        }
    }
    BicoherenceGrid { n, values, defined }
}

/// `J = max b / (n1 n2)` over defined bins, for an `n1 x n2` source image.
pub fn objective_max(grid: &BicoherenceGrid, n1: usize, n2: usize) -> Result<f64> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Domain("image dimensions must be positive".into()));
    }
    let max = grid
        .defined_values()
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .ok_or_else(|| Error::Degenerate("bicoherence grid has no defined bins".into()))?;
    Ok(max / (n1 as f64 * n2 as f64))
}

/// `(1/N^2) * sum b` over all defined entries of the square grid.
pub fn objective_mean(grid: &BicoherenceGrid) -> Result<f64> {
    if grid.defined_count() == 0 {
        return Err(Error::Degenerate("bicoherence grid has no defined bins".into()));
    }
    let n = grid.n() as f64;
    Ok(grid.defined_values().sum::<f64>() / (n * n))
}
