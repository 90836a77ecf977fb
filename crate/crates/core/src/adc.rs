//! Outlier-resilient ADC front end: VGA with robust AGC and clipper,
//! optional 1-bit ΔΣ modulator, wideband IIR, CAF, and decimation.
//!
//! The analog antialias filter is modeled upstream of [`AdcChain`] by
//! [`AdcChainConfig::analog_front_end`]: a 1st-order highpass at `fc/75`
//! followed by the lower-Q pole pair of a 4th-order Bessel lowpass at
//! `4·fc`. The higher-Q pole pair runs digitally as the wideband IIR, so
//! that the two together form the full Bessel response ahead of the CAF.

use serde::{Deserialize, Serialize};

use crate::caf::{Caf, CafConfig};
use crate::error::{arg, Error, Result};
use crate::filters::{
    design_codesigned_pair, design_highpass1, Decimator, FilterCascade, FilterDescriptor,
};
use crate::robust::{Agc, AgcConfig};
use crate::signal::{DelayLine, Processor, SampleStream};

/// Integrator magnitude (in quantizer full-scale units) treated as
/// loop divergence.
pub const DSM_OVERFLOW: f64 = 10.0;

/// Second-order 1-bit ΔΣ modulator with NTF `(1 − z⁻¹)²` and STF `z⁻¹`.
#[derive(Clone, Debug)]
pub struct Dsm {
    full_scale: f64,
    u1: f64,
    u2: f64,
}

impl Dsm {
    /// `full_scale` is the quantizer level; the output is always exactly
    /// `±full_scale`.
    pub fn new(full_scale: f64) -> Result<Self> {
        if !(full_scale > 0.0) || !full_scale.is_finite() {
            return arg(format!("quantizer level must be positive, got {full_scale}"));
        }
        Ok(Self {
            full_scale,
            u1: 0.0,
            u2: 0.0,
        })
    }

    pub fn full_scale(&self) -> f64 {
        self.full_scale
    }

    pub fn integrators(&self) -> (f64, f64) {
        (self.u1, self.u2)
    }

    /// Quantizes the second integrator, then updates both integrators with
    /// the input minus the fed-back bit.
    #[inline]
    pub fn step(&mut self, x: f64) -> Result<f64> {
        let v = if self.u2 >= 0.0 {
            self.full_scale
        } else {
            -self.full_scale
        };
        self.u1 += x - v;
        self.u2 += self.u1 - v;
        let limit = DSM_OVERFLOW * self.full_scale;
        if self.u1.abs() > limit || self.u2.abs() > limit {
            return Err(Error::Instability(format!(
                "modulator integrators ({:.3}, {:.3}) exceed {limit}",
                self.u1, self.u2
            )));
        }
        Ok(v)
    }

    pub fn reset(&mut self) {
        self.u1 = 0.0;
        self.u2 = 0.0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ModulatorMode {
    /// Full-precision samples pass straight through.
    Bypass,
    /// 1-bit ΔΣ with the given quantizer level.
    DeltaSigma { full_scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdcChainConfig {
    /// Signal center frequency; front-end corners scale with it.
    pub fc: f64,
    /// Modulator (oversampled) rate.
    pub sample_rate: f64,
    /// Ratio of the modulator rate to the output rate.
    pub decimation: usize,
    /// Upper edge of the band kept alias-free by the decimation filter.
    pub protect_band: f64,
    /// Corner of the co-designed 4th-order Bessel lowpass.
    pub lowpass_corner: f64,
    pub highpass_corner: f64,
    pub modulator: ModulatorMode,
    pub clipper: bool,
    pub agc: AgcConfig,
    /// `None` disables the CAF.
    pub caf: Option<CafConfig>,
}

impl AdcChainConfig {
    /// Oversampling ratio relative to the output Nyquist rate.
    pub fn oversampling(&self) -> usize {
        self.decimation
    }

    pub fn output_rate(&self) -> f64 {
        self.sample_rate / self.decimation as f64
    }

    fn split(&self) -> Result<(FilterCascade, FilterCascade)> {
        let ((analog, _), (wideband, _)) =
            design_codesigned_pair(self.lowpass_corner / self.sample_rate)?;
        Ok((analog, wideband))
    }

    /// Highpass plus lower-Q pole pair: the analog part that precedes the
    /// clipper.
    pub fn analog_front_end(&self) -> Result<FilterCascade> {
        let hp = design_highpass1(self.highpass_corner / self.sample_rate)?;
        Ok(hp.then(&self.split()?.0))
    }

    /// Higher-Q pole pair run digitally after the modulator.
    pub fn wideband_iir(&self) -> Result<FilterCascade> {
        Ok(self.split()?.1)
    }

    /// Full linear response from the chain input to the CAF input.
    pub fn full_front_end(&self) -> Result<FilterCascade> {
        Ok(self.analog_front_end()?.then(&self.wideband_iir()?))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fc > 0.0) || !(self.sample_rate > 0.0) {
            return Err(Error::Config("fc and sample rate must be positive".into()));
        }
        if self.decimation == 0 {
            return Err(Error::Config("decimation factor must be at least 1".into()));
        }
        if !(self.highpass_corner > 0.0 && self.highpass_corner < self.lowpass_corner) {
            return Err(Error::Config("highpass corner must sit below the lowpass corner".into()));
        }
        if self.lowpass_corner >= 0.5 * self.sample_rate {
            return Err(Error::Config("lowpass corner must be below Nyquist".into()));
        }
        if let Some(caf) = &self.caf {
            if caf.f_hi >= 0.5 * self.output_rate() {
                return Err(Error::Config(format!(
                    "CAF band edge {} is not alias-safe at output rate {}",
                    caf.f_hi,
                    self.output_rate()
                )));
            }
        }
        Ok(())
    }
}

/// Per-stage signals at the modulator rate, kept when tracing.
#[derive(Clone, Debug, Default)]
pub struct ChainTrace {
    pub input: Vec<f64>,
    pub clipped: Vec<f64>,
    pub modulated: Vec<f64>,
    pub wideband: Vec<f64>,
    pub caf_out: Vec<f64>,
}

impl ChainTrace {
    pub const CSV_HEADER: &'static str = "input,clipped,modulated,wideband,caf_out";

    pub fn rows(&self) -> impl Iterator<Item = String> + '_ {
        (0..self.input.len()).map(move |k| {
            format!(
                "{:e},{:e},{:e},{:e},{:e}",
                self.input[k], self.clipped[k], self.modulated[k], self.wideband[k], self.caf_out[k]
            )
        })
    }
}

#[derive(Clone, Debug)]
pub struct ChainOutput {
    /// Decimated output.
    pub output: SampleStream,
    /// VGA gain applied to each input sample (1 with the clipper off).
    pub gains: Vec<f64>,
    /// Input indices where the amplified sample exceeded the clip level.
    pub clip_events: Vec<usize>,
    /// Fraction of samples blanked by the CAF.
    pub blanking_duty: f64,
    pub trace: Option<ChainTrace>,
}

/// One stateful chain instance.
#[derive(Clone, Debug)]
pub struct AdcChain {
    config: AdcChainConfig,
    agc: Agc,
    dsm: Option<Dsm>,
    wideband: FilterCascade,
    caf: Option<Caf>,
    decimator: Decimator,
}

impl AdcChain {
    pub fn new(config: AdcChainConfig) -> Result<Self> {
        config.validate()?;
        let dsm = match config.modulator {
            ModulatorMode::Bypass => None,
            ModulatorMode::DeltaSigma { full_scale } => {
                if full_scale <= config.agc.clip_level {
                    return Err(Error::Config(
                        "quantizer level must exceed the clip level".into(),
                    ));
                }
                Some(Dsm::new(full_scale)?)
            }
        };
        Ok(Self {
            agc: Agc::new(config.agc, config.sample_rate)?,
            dsm,
            wideband: config.wideband_iir()?,
            caf: config.caf.map(|c| Caf::new(c, config.sample_rate)).transpose()?,
            decimator: Decimator::new(config.sample_rate, config.decimation, config.protect_band)?,
            config,
        })
    }

    pub fn config(&self) -> &AdcChainConfig {
        &self.config
    }

    /// Δt of the CAF in modulator-rate samples (0 when disabled).
    pub fn caf_delay(&self) -> usize {
        self.caf.as_ref().map_or(0, Caf::group_delay_samples)
    }

    pub fn caf(&self) -> Option<&Caf> {
        self.caf.as_ref()
    }

    /// Digital filter descriptors for run manifests.
    pub fn describe_filters(&self) -> Result<Vec<FilterDescriptor>> {
        let mut out = vec![
            self.config.analog_front_end()?.describe(),
            self.wideband.describe(),
        ];
        if let Some(caf) = &self.caf {
            out.push(caf.pair().bandpass.describe("caf-bandpass"));
            out.push(caf.pair().bandstop.describe("caf-bandstop"));
        }
        if let Some(fir) = self.decimator.filter() {
            out.push(fir.describe("decimation"));
        }
        Ok(out)
    }

    /// Runs a stream sampled at the modulator rate (already through the
    /// analog front end).
    pub fn process(&mut self, s: &SampleStream, trace: bool) -> Result<ChainOutput> {
        if s.sample_rate() != self.config.sample_rate {
            return arg(format!(
                "chain runs at {} but the input is at {}",
                self.config.sample_rate,
                s.sample_rate()
            ));
        }
        let n = s.len();
        let vc = self.config.agc.clip_level;
        let mut gains = Vec::with_capacity(n);
        let mut clip_events = Vec::new();
        let mut out = Vec::with_capacity(n / self.config.decimation + 1);
        let mut tr = trace.then(ChainTrace::default);
        for (k, &x) in s.samples().iter().enumerate() {
            let (clipped, g) = if self.config.clipper {
                let (c, g) = self.agc.step(x);
                if (g * x).abs() > vc {
                    clip_events.push(k);
                }
                (c, g)
            } else {
                (x, 1.0)
            };
            gains.push(g);
            let modulated = match &mut self.dsm {
                Some(d) => d.step(clipped)?,
                None => clipped,
            };
            let wide = self.wideband.process_sample(modulated);
            let y = match &mut self.caf {
                Some(c) => c.process_sample(wide),
                None => wide,
            };
            if let Some(v) = self.decimator.push(y) {
                out.push(v);
            }
            if let Some(t) = &mut tr {
                t.input.push(x);
                t.clipped.push(clipped);
                t.modulated.push(modulated);
                t.wideband.push(wide);
                t.caf_out.push(y);
            }
        }
        Ok(ChainOutput {
            output: SampleStream::new(out, self.config.output_rate())?,
            gains,
            clip_events,
            blanking_duty: self.caf.as_ref().map_or(0.0, Caf::blanking_duty),
            trace: tr,
        })
    }

    /// All-linear counterpart for SNR references: the clean input scaled
    /// by the recorded gain trajectory, no clipping, the modulator and the
    /// CAF replaced by their signal delays, then the same wideband IIR and
    /// decimation filter.
    pub fn reference(&self, clean: &SampleStream, gains: &[f64]) -> Result<SampleStream> {
        if clean.len() != gains.len() {
            return arg("gain trajectory length differs from the clean stream");
        }
        let mut wideband = self.config.wideband_iir()?;
        let mut delay = DelayLine::new(self.caf_delay() + self.dsm.is_some() as usize);
        let mut decimator =
            Decimator::new(self.config.sample_rate, self.config.decimation, self.config.protect_band)?;
        let mut out = Vec::with_capacity(clean.len() / self.config.decimation + 1);
        for (&x, &g) in clean.samples().iter().zip(gains) {
            let y = delay.process_sample(wideband.process_sample(g * x));
            if let Some(v) = decimator.push(y) {
                out.push(v);
            }
        }
        SampleStream::new(out, self.config.output_rate())
    }
}
