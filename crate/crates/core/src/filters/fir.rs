//! Linear-phase FIR filters: Kaiser-windowed sinc designs, the exact
//! bandpass/bandstop complement, and the decimation filter.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{arg, Result};
use crate::signal::{Processor, SampleStream};

/// Stopband attenuation (dB) used for the complementary pair.
pub const PAIR_ATTENUATION_DB: f64 = 60.0;
/// Stopband attenuation (dB) used for decimation filters.
pub const DECIMATION_ATTENUATION_DB: f64 = 80.0;

/// Direct-form FIR with a double-length history buffer so every output is
/// a single contiguous dot product.
#[derive(Clone, Debug)]
pub struct FirFilter {
    taps: Vec<f64>,
    reversed: Vec<f64>,
    history: Vec<f64>,
    pos: usize,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return arg("FIR filter needs at least one tap");
        }
        let n = taps.len();
        let reversed = taps.iter().rev().copied().collect();
        Ok(Self {
            taps,
            reversed,
            history: vec![0.0; 2 * n],
            pos: 0,
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Integer group delay of a symmetric design, `(len − 1) / 2`.
    pub fn group_delay_samples(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.taps.len();
        (0..n / 2).all(|i| self.taps[i] == self.taps[n - 1 - i])
    }

    /// Frequency response at normalized frequency `f`.
    pub fn response(&self, f: f64) -> Complex64 {
        self.taps
            .iter()
            .enumerate()
            .map(|(k, &h)| h * Complex64::from_polar(1.0, -2.0 * PI * f * k as f64))
            .sum()
    }

    pub fn magnitude_db(&self, f: f64) -> f64 {
        20.0 * self.response(f).norm().log10()
    }

    #[inline]
    fn push(&mut self, x: f64) {
        let n = self.taps.len();
        self.pos += 1;
        if self.pos == n {
            self.pos = 0;
        }
        self.history[self.pos] = x;
        self.history[self.pos + n] = x;
    }

    #[inline]
    fn current(&self) -> f64 {
        let n = self.taps.len();
        dot(&self.history[self.pos + 1..self.pos + 1 + n], &self.reversed)
    }
}

impl Processor for FirFilter {
    #[inline]
    fn process_sample(&mut self, x: f64) -> f64 {
        self.push(x);
        self.current()
    }

    fn reset(&mut self) {
        self.history.iter_mut().for_each(|v| *v = 0.0);
        self.pos = 0;
    }
}

/// Four-lane dot product; fixed summation order keeps results reproducible.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let y = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        term *= y / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser shape parameter for a target stopband attenuation in dB.
pub fn kaiser_beta(attenuation_db: f64) -> f64 {
    let a = attenuation_db;
    if a > 50.0 {
        0.1102 * (a - 8.7)
    } else if a >= 21.0 {
        0.5842 * (a - 21.0).powf(0.4) + 0.07886 * (a - 21.0)
    } else {
        0.0
    }
}

/// Kaiser window of `n` points.
pub fn kaiser_window(n: usize, beta: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let m = (n - 1) as f64;
    let norm = bessel_i0(beta);
    mirrored(n, |k| {
        let r = 2.0 * k as f64 / m - 1.0;
        bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm
    })
}

/// Evaluates the first half and mirrors it so the result is bit-symmetric.
fn mirrored(n: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n.div_ceil(2)).map(f).collect();
    let tail: Vec<f64> = v[..n / 2].iter().rev().copied().collect();
    v.extend(tail);
    v
}

/// Tap count (odd) a Kaiser design needs for the given transition width
/// (fraction of sample rate).
pub fn kaiser_length(attenuation_db: f64, transition: f64) -> usize {
    let n = ((attenuation_db - 7.95) / (14.36 * transition)).ceil() as usize + 1;
    n | 1
}

fn sinc_lowpass(cutoff: f64, n: usize) -> Vec<f64> {
    let mid = (n - 1) as f64 / 2.0;
    mirrored(n, |k| {
        let t = k as f64 - mid;
        if t == 0.0 {
            2.0 * cutoff
        } else {
            (2.0 * PI * cutoff * t).sin() / (PI * t)
        }
    })
}

/// Kaiser-windowed sinc lowpass, `cutoff` as a fraction of sample rate.
pub fn windowed_lowpass(cutoff: f64, num_taps: usize, attenuation_db: f64) -> Vec<f64> {
    let w = kaiser_window(num_taps, kaiser_beta(attenuation_db));
    sinc_lowpass(cutoff, num_taps)
        .into_iter()
        .zip(w)
        .map(|(h, w)| h * w)
        .collect()
}

/// Linear-phase bandpass and its exact bandstop complement
/// `δ[n − Δ] − w[n]`.
#[derive(Clone, Debug)]
pub struct ComplementaryPair {
    pub bandpass: FirFilter,
    pub bandstop: FirFilter,
    /// Band edges in Hz.
    pub band: (f64, f64),
    pub sample_rate: f64,
}

impl ComplementaryPair {
    /// Shared group delay Δt of both branches, in samples.
    pub fn group_delay_samples(&self) -> usize {
        self.bandpass.group_delay_samples()
    }
}

/// Default pair length: `8·fs/f_lo` rounded up to odd.
pub fn default_pair_taps(sample_rate: f64, f_lo: f64) -> usize {
    ((8.0 * sample_rate / f_lo).ceil() as usize) | 1
}

/// Designs the complementary pair for band `[f_lo, f_hi]` (Hz).
pub fn design_complementary_pair(
    sample_rate: f64,
    f_lo: f64,
    f_hi: f64,
    num_taps: usize,
) -> Result<ComplementaryPair> {
    if num_taps.is_multiple_of(2) {
        return arg(format!("complementary pair needs an odd tap count, got {num_taps}"));
    }
    if !(f_lo > 0.0 && f_lo < f_hi && f_hi < 0.5 * sample_rate) {
        return arg(format!(
            "band edges must satisfy 0 < f_lo < f_hi < fs/2 (got {f_lo}, {f_hi}, fs {sample_rate})"
        ));
    }
    let hi = windowed_lowpass(f_hi / sample_rate, num_taps, PAIR_ATTENUATION_DB);
    let lo = windowed_lowpass(f_lo / sample_rate, num_taps, PAIR_ATTENUATION_DB);
    let bp: Vec<f64> = hi.iter().zip(&lo).map(|(h, l)| h - l).collect();
    let centre = (num_taps - 1) / 2;
    let bs: Vec<f64> = bp
        .iter()
        .enumerate()
        .map(|(k, &w)| if k == centre { 1.0 - w } else { -w })
        .collect();
    Ok(ComplementaryPair {
        bandpass: FirFilter::new(bp)?,
        bandstop: FirFilter::new(bs)?,
        band: (f_lo, f_hi),
        sample_rate,
    })
}

/// Anti-alias lowpass followed by keeping every `factor`-th sample.
/// Only retained outputs are computed.
#[derive(Clone, Debug)]
pub struct Decimator {
    fir: Option<FirFilter>,
    factor: usize,
    phase: usize,
}

impl Decimator {
    /// `protect_band` and `sample_rate` in Hz; the passband extends to
    /// `protect_band`, the stopband starts at the output Nyquist rate.
    pub fn new(sample_rate: f64, factor: usize, protect_band: f64) -> Result<Self> {
        if factor == 0 {
            return arg("decimation factor must be at least 1");
        }
        let out_nyquist = 0.5 * sample_rate / factor as f64;
        if !(protect_band > 0.0 && protect_band < out_nyquist) {
            return arg(format!(
                "protect band {protect_band} must lie below the output Nyquist rate {out_nyquist}"
            ));
        }
        let fir = if factor == 1 {
            None
        } else {
            let transition = (out_nyquist - protect_band) / sample_rate;
            let cutoff = 0.5 * (out_nyquist + protect_band) / sample_rate;
            let n = kaiser_length(DECIMATION_ATTENUATION_DB, transition);
            Some(FirFilter::new(windowed_lowpass(
                cutoff,
                n,
                DECIMATION_ATTENUATION_DB,
            ))?)
        };
        Ok(Self {
            fir,
            factor,
            phase: 0,
        })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn filter(&self) -> Option<&FirFilter> {
        self.fir.as_ref()
    }

    /// Group delay in input-rate samples.
    pub fn group_delay_samples(&self) -> usize {
        self.fir.as_ref().map_or(0, FirFilter::group_delay_samples)
    }

    /// Feeds one input sample; returns an output sample on retained phases.
    #[inline]
    pub fn push(&mut self, x: f64) -> Option<f64> {
        let keep = self.phase == 0;
        self.phase += 1;
        if self.phase == self.factor {
            self.phase = 0;
        }
        match &mut self.fir {
            None => Some(x),
            Some(f) => {
                f.push(x);
                keep.then(|| f.current())
            }
        }
    }

    pub fn process(&mut self, input: &[f64], out: &mut Vec<f64>) {
        out.extend(input.iter().filter_map(|&x| self.push(x)));
    }

    pub fn reset(&mut self) {
        self.phase = 0;
        if let Some(f) = &mut self.fir {
            f.reset();
        }
    }
}

/// One-shot decimation of a whole stream.
pub fn decimate(s: &SampleStream, factor: usize, protect_band: f64) -> Result<SampleStream> {
    let mut d = Decimator::new(s.sample_rate(), factor, protect_band)?;
    let mut out = Vec::with_capacity(s.len() / factor + 1);
    d.process(s.samples(), &mut out);
    SampleStream::new(out, s.sample_rate() / factor as f64)
}
