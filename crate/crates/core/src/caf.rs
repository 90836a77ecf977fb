//! The feedback analog differential clipper (ADiC) and the complementary
//! ADiC filter (CAF) built around it.
//!
//! The ADiC output is `y = χ + τχ̇` with `τχ̇ = B(x − χ)`, where `B` blanks
//! differences outside the fences `[α₋, α₊]`. In range this collapses to
//! `y = x` while `χ` follows a first-order lowpass of the input; on an
//! outlier `χ` freezes and is emitted in place of the input.
//!
//! The CAF splits its input with a linear-phase complementary pair, runs
//! the ADiC on the bandstop branch only, and adds back the bandpass branch.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::filters::{design_complementary_pair, ComplementaryPair, FirFilter};
use crate::robust::{in_range, symmetric_fence, Qtf, QtfConfig};
use crate::signal::{DelayLine, Processor, SampleStream};

/// Where the blanking range comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FenceSource {
    /// Constant fences. `(-inf, inf)` turns the ADiC into an identity.
    Fixed { minus: f64, plus: f64 },
    /// `±(1 + 2β)·⟨Q*⟩` from a QTF on `|x − χ|`.
    QtfAdaptive { qtf: QtfConfig, beta: f64 },
}

impl FenceSource {
    pub const OPEN: FenceSource = FenceSource::Fixed {
        minus: f64::NEG_INFINITY,
        plus: f64::INFINITY,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdicConfig {
    /// Time constant τ of the differential clipping level, seconds.
    pub tau: f64,
    pub fences: FenceSource,
    /// Adaptive fences never get narrower than ±`fence_floor`.
    pub fence_floor: f64,
}

/// Feedback ADiC state.
#[derive(Clone, Debug)]
pub struct Adic {
    config: AdicConfig,
    chi: f64,
    /// `1 − exp(−dt/τ)`: exact pole mapping of the in-range lowpass.
    coeff: f64,
    fences: (f64, f64),
    qtf: Option<(Qtf, f64)>,
    blanking: bool,
    started: bool,
}

impl Adic {
    pub fn new(config: AdicConfig, sample_rate: f64) -> Result<Self> {
        if !(config.tau > 0.0) || !(sample_rate > 0.0) {
            return arg("ADiC needs tau > 0 and a positive sample rate");
        }
        if config.fence_floor < 0.0 {
            return arg("fence floor cannot be negative");
        }
        let dt = 1.0 / sample_rate;
        let (fences, qtf) = match config.fences {
            FenceSource::Fixed { minus, plus } => {
                if minus > plus {
                    return arg(format!("inverted fences [{minus}, {plus}]"));
                }
                ((minus, plus), None)
            }
            FenceSource::QtfAdaptive { qtf, beta } => {
                if !(beta > 0.0) {
                    return arg("fence multiplier must be positive");
                }
                let f = config.fence_floor;
                ((-f, f), Some((Qtf::new(qtf, sample_rate)?, beta)))
            }
        };
        Ok(Self {
            coeff: -(-dt / config.tau).exp_m1(),
            config,
            chi: 0.0,
            fences,
            qtf,
            blanking: false,
            started: false,
        })
    }

    /// Differential clipping level χ.
    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn fences(&self) -> (f64, f64) {
        self.fences
    }

    /// Whether the most recent sample was blanked.
    pub fn blanking(&self) -> bool {
        self.blanking
    }

    pub fn config(&self) -> &AdicConfig {
        &self.config
    }

    /// Sets the fences to `±(1 + 2β)·window_avg`, floored.
    pub fn update_fences(&mut self, window_avg: f64, beta: f64) {
        let alpha = symmetric_fence(window_avg.max(0.0), beta)
            .unwrap_or(0.0)
            .max(self.config.fence_floor);
        self.fences = (-alpha, alpha);
    }

    /// Output from the current χ and fences, then χ (and adaptive fences)
    /// advance. In range the output is the input itself, bit for bit.
    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        if !self.started {
            self.chi = x;
            self.started = true;
        }
        let d = x - self.chi;
        self.blanking = !in_range(d, self.fences.0, self.fences.1);
        let y = if self.blanking { self.chi } else { x };
        if !self.blanking {
            self.chi += self.coeff * d;
        }
        if let Some((qtf, beta)) = &mut self.qtf {
            qtf.step(d.abs());
            let (avg, beta) = (qtf.window_avg(), *beta);
            self.update_fences(avg, beta);
        }
        y
    }
}

impl Processor for Adic {
    fn process_sample(&mut self, x: f64) -> f64 {
        self.step(x)
    }

    fn reset(&mut self) {
        self.chi = 0.0;
        self.started = false;
        self.blanking = false;
        if let Some((qtf, _)) = &mut self.qtf {
            qtf.reset();
            let f = self.config.fence_floor;
            self.fences = (-f, f);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CafConfig {
    /// Bandpass edges in Hz.
    pub f_lo: f64,
    pub f_hi: f64,
    /// Odd FIR length of the complementary pair.
    pub num_taps: usize,
    pub adic: AdicConfig,
}

/// Per-sample view of the CAF signals: input, bandpass, bandstop, ADiC
/// output, CAF output, blanking flag.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CafSample {
    pub input: f64,
    pub bandpass: f64,
    pub bandstop: f64,
    pub adic_out: f64,
    pub output: f64,
    pub blanking: bool,
}

impl CafSample {
    pub const CSV_HEADER: &'static str = "input,bandpass,bandstop,adic_out,caf_out,blanking_flag";

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{}",
            self.input,
            self.bandpass,
            self.bandstop,
            self.adic_out,
            self.output,
            self.blanking as u8
        )
    }
}

/// Complementary ADiC filter.
#[derive(Clone, Debug)]
pub struct Caf {
    bandpass: FirFilter,
    delay: DelayLine,
    adic: Adic,
    pair: ComplementaryPair,
    blanked: u64,
    processed: u64,
}

impl Caf {
    pub fn new(config: CafConfig, sample_rate: f64) -> Result<Self> {
        let pair = design_complementary_pair(sample_rate, config.f_lo, config.f_hi, config.num_taps)?;
        Self::from_pair(pair, config.adic)
    }

    pub fn from_pair(pair: ComplementaryPair, adic: AdicConfig) -> Result<Self> {
        let adic = Adic::new(adic, pair.sample_rate)?;
        Ok(Self {
            bandpass: pair.bandpass.clone(),
            delay: DelayLine::new(pair.group_delay_samples()),
            adic,
            pair,
            blanked: 0,
            processed: 0,
        })
    }

    /// Δt in samples, shared by both branches and the delay line.
    pub fn group_delay_samples(&self) -> usize {
        self.delay.len()
    }

    pub fn pair(&self) -> &ComplementaryPair {
        &self.pair
    }

    pub fn adic(&self) -> &Adic {
        &self.adic
    }

    /// Fraction of processed samples that were blanked.
    pub fn blanking_duty(&self) -> f64 {
        if self.processed == 0 {
            0.0
        } else {
            self.blanked as f64 / self.processed as f64
        }
    }

    /// One sample through the full graph. The bandstop branch is formed as
    /// `x(t − Δt) − bandpass(x)`, which is what its `δ − w` taps compute.
    #[inline]
    pub fn step_traced(&mut self, x: f64) -> CafSample {
        let bp = self.bandpass.process_sample(x);
        let delayed = self.delay.process_sample(x);
        let bs = delayed - bp;
        let adic_out = self.adic.step(bs);
        let blanking = self.adic.blanking();
        self.processed += 1;
        self.blanked += blanking as u64;
        CafSample {
            input: x,
            bandpass: bp,
            bandstop: bs,
            adic_out,
            output: bp + adic_out,
            blanking,
        }
    }

    /// Runs a stream and keeps the per-sample trace.
    pub fn run_traced(&mut self, s: &SampleStream) -> Vec<CafSample> {
        s.samples().iter().map(|&x| self.step_traced(x)).collect()
    }
}

impl Processor for Caf {
    #[inline]
    fn process_sample(&mut self, x: f64) -> f64 {
        self.step_traced(x).output
    }

    fn reset(&mut self) {
        self.bandpass.reset();
        self.delay.reset();
        self.adic.reset();
        self.blanked = 0;
        self.processed = 0;
    }
}

/// Output of the Hampel reference filter.
#[derive(Clone, Debug)]
pub struct HampelOutput {
    pub filtered: SampleStream,
    pub outliers: Vec<usize>,
}

/// MAD to standard deviation for Gaussian data.
const MAD_SCALE: f64 = 1.4826;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Classic centered Hampel filter, used as a cross-check for outlier
/// localization on small problems. Windows shrink at the stream edges.
pub fn hampel_oracle(s: &SampleStream, window: usize, nsigma: f64) -> Result<HampelOutput> {
    if window.is_multiple_of(2) {
        return arg(format!("Hampel window must be odd, got {window}"));
    }
    let half = window / 2;
    let x = s.samples();
    let mut out = x.to_vec();
    let mut outliers = Vec::new();
    let mut buf = Vec::with_capacity(window);
    for k in 0..x.len() {
        let lo = k.saturating_sub(half);
        let hi = (k + half + 1).min(x.len());
        buf.clear();
        buf.extend_from_slice(&x[lo..hi]);
        let med = median(&mut buf);
        buf.iter_mut().for_each(|v| *v = (*v - med).abs());
        let sigma = MAD_SCALE * median(&mut buf);
        if (x[k] - med).abs() > nsigma * sigma {
            out[k] = med;
            outliers.push(k);
        }
    }
    Ok(HampelOutput {
        filtered: s.with_samples(out),
        outliers,
    })
}
