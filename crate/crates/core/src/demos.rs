//! Stand-alone demonstrations: a CAF cleaning outlier noise off a linear
//! chirp, and one impulse train morphed by simple filters into visibly
//! impulsive and effectively Gaussian interference.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::caf::{AdicConfig, Caf, CafConfig, CafSample, FenceSource};
use crate::error::{arg, Result};
use crate::filters::{design_bessel_lowpass, design_front_end, DesignMeta, FilterCascade, Sos};
use crate::metrics::{cascade_pileup_threshold, excess_kurtosis_of, passband_snr};
use crate::robust::{QtfConfig, OFDM_BETA};
use crate::scenarios::{
    calibrate_mix, gen_chirp, gen_poisson_impulses, gen_thermal, OutlierKind, OutlierNoiseSpec,
};
use crate::signal::{Processor, RngSpec, SampleStream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChirpDemoConfig {
    /// Top chirp frequency; also the upper CAF band edge reference.
    pub fc: f64,
    pub sample_rate_fc: f64,
    /// Chirp start frequency in units of `fc`.
    pub f0_fc: f64,
    /// Duration in units of `1/fc`.
    pub duration_fc: f64,
    /// CAF bandpass edges in units of `fc`.
    pub band_lo_fc: f64,
    pub band_hi_fc: f64,
    pub num_taps: usize,
    /// Impulse rate as a fraction of the front-end pileup threshold.
    pub rate_rel: f64,
    /// Thermal SNR in the chirp band, dB.
    pub thermal_snr_db: f64,
    /// Outlier power relative to thermal noise in the chirp band, dB;
    /// −∞ (or any value ≤ −300) gives a thermal-only run.
    pub outlier_rel_db: f64,
    /// Disable all noise.
    pub clean: bool,
    /// Force the ADiC fences to ±∞.
    pub fences_open: bool,
    /// Fixed ±fence instead of the adaptive QTF fences when positive.
    pub fixed_fence: f64,
    /// Slew rate and averaging window of the fence QTF, in units of `fc`
    /// and `1/fc`.
    pub qtf_mu_fc: f64,
    pub qtf_window_fc: f64,
    pub seed: u64,
}

impl Default for ChirpDemoConfig {
    fn default() -> Self {
        Self {
            fc: 1.0,
            sample_rate_fc: 20.0,
            f0_fc: 0.05,
            duration_fc: 2000.0,
            band_lo_fc: 0.2,
            band_hi_fc: 1.2,
            num_taps: 801,
            rate_rel: 0.01,
            thermal_snr_db: 30.0,
            outlier_rel_db: 20.0,
            clean: false,
            fences_open: false,
            fixed_fence: 0.0,
            qtf_mu_fc: 1.0,
            qtf_window_fc: 0.5,
            seed: 1,
        }
    }
}

impl ChirpDemoConfig {
    pub fn sample_rate(&self) -> f64 {
        self.sample_rate_fc * self.fc
    }

    /// Chirp band `[f0, fc]`.
    pub fn signal_band(&self) -> (f64, f64) {
        (self.f0_fc * self.fc, self.fc)
    }

    pub fn adic(&self) -> AdicConfig {
        let window = self.qtf_window_fc / self.fc;
        let fences = if self.fences_open {
            FenceSource::OPEN
        } else if self.fixed_fence > 0.0 {
            FenceSource::Fixed {
                minus: -self.fixed_fence,
                plus: self.fixed_fence,
            }
        } else {
            FenceSource::QtfAdaptive {
                qtf: QtfConfig {
                    q: 0.5,
                    mu: self.qtf_mu_fc * self.fc,
                    window,
                    initial: 0.1,
                },
                beta: OFDM_BETA,
            }
        };
        AdicConfig {
            tau: 1.0 / (2.0 * PI * 4.0 * self.fc),
            fences,
            fence_floor: 1e-9,
        }
    }

    pub fn caf(&self) -> CafConfig {
        CafConfig {
            f_lo: self.band_lo_fc * self.fc,
            f_hi: self.band_hi_fc * self.fc,
            num_taps: self.num_taps,
            adic: self.adic(),
        }
    }
}

/// Signals I–V of the CAF, the two error traces, and the resulting SNRs.
#[derive(Clone, Debug)]
pub struct ChirpDemoResult {
    /// Clean chirp after the front end.
    pub clean: Vec<f64>,
    pub trace: Vec<CafSample>,
    /// Front-end output minus the clean chirp.
    pub delta_linear: Vec<f64>,
    /// CAF output minus the clean chirp delayed by Δt.
    pub delta_caf: Vec<f64>,
    pub group_delay: usize,
    pub snr_linear_db: f64,
    pub snr_caf_db: f64,
    pub blanking_duty: f64,
}

impl ChirpDemoResult {
    pub const CSV_HEADER: &'static str =
        "clean,I_front_end,II_bandpass,III_bandstop,IV_adic,V_caf,blanking_flag,delta_linear,delta_caf";

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.trace.iter().enumerate().map(|(k, s)| {
            format!(
                "{:e},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e}",
                self.clean[k],
                s.input,
                s.bandpass,
                s.bandstop,
                s.adic_out,
                s.output,
                s.blanking as u8,
                self.delta_linear[k],
                self.delta_caf[k]
            )
        })
    }
}

/// Runs the chirp through the front end, adds thermal noise and Poisson
/// impulses, and compares the linear and CAF outcomes in the chirp band.
pub fn run_chirp_demo(cfg: &ChirpDemoConfig) -> Result<ChirpDemoResult> {
    let fs = cfg.sample_rate();
    let (f0, f1) = cfg.signal_band();
    let chirp = gen_chirp(f0, f1, cfg.duration_fc / cfg.fc, fs)?;
    let n = chirp.len();
    let front = design_front_end(fs, cfg.fc)?;
    let through = |s: &SampleStream| front.clone().run(s);
    let clean = through(&chirp);
    let noisy = if cfg.clean {
        clean.clone()
    } else {
        let rate = cfg.rate_rel * cascade_pileup_threshold(&front, fs)?;
        let spec = OutlierNoiseSpec {
            kind: OutlierKind::PoissonNormal,
            rate,
            duty_cycle: 1.0,
            power_db_rel_thermal: cfg.outlier_rel_db,
            rng: RngSpec::new(cfg.seed, 2),
        };
        let thermal = through(&gen_thermal(n, fs, RngSpec::new(cfg.seed, 1))?);
        let outliers = through(&gen_poisson_impulses(&spec, n, fs)?.stream);
        let rel = if cfg.outlier_rel_db <= -300.0 {
            f64::NEG_INFINITY
        } else {
            cfg.outlier_rel_db
        };
        calibrate_mix(&clean, &thermal, &outliers, cfg.thermal_snr_db, rel, (f0, f1))?.total
    };
    let mut caf = Caf::new(cfg.caf(), fs)?;
    let dt = caf.group_delay_samples();
    if n <= 2 * dt {
        return arg("chirp is too short for the CAF delay");
    }
    let trace = caf.run_traced(&noisy);
    let c = clean.samples();
    let delta_linear: Vec<f64> = noisy.samples().iter().zip(c).map(|(y, x)| y - x).collect();
    let delta_caf: Vec<f64> = trace
        .iter()
        .enumerate()
        .map(|(k, s)| s.output - if k >= dt { c[k - dt] } else { 0.0 })
        .collect();
    // compare both paths over the same stretch of the clean chirp
    let aligned = |v: &[f64]| noisy.with_samples(v.to_vec());
    let out: Vec<f64> = trace[dt..].iter().map(|s| s.output).collect();
    let reference = aligned(&c[..n - dt]);
    Ok(ChirpDemoResult {
        snr_linear_db: passband_snr(&aligned(&noisy.samples()[..n - dt]), &reference, (f0, f1), 0)?,
        snr_caf_db: passband_snr(&aligned(&out), &reference, (f0, f1), 0)?,
        blanking_duty: caf.blanking_duty(),
        clean: c.to_vec(),
        trace,
        delta_linear,
        delta_caf,
        group_delay: dt,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphDemoConfig {
    pub sample_rate: f64,
    pub samples: usize,
    /// Impulse events per unit time.
    pub event_rate: f64,
    /// 2nd-order bandpass that keeps impulses distinct.
    pub visible_f0: f64,
    pub visible_q: f64,
    /// Narrow 2nd-order resonator.
    pub resonant_f0: f64,
    pub resonant_q: f64,
    /// 1st-order lowpass far below the event rate.
    pub pileup_corner: f64,
    /// Band-limited multitone signal: band and number of tones.
    pub signal_lo: f64,
    pub signal_hi: f64,
    pub signal_tones: usize,
    pub seed: u64,
}

impl Default for MorphDemoConfig {
    fn default() -> Self {
        Self {
            sample_rate: 20.0,
            samples: 1 << 18,
            event_rate: 0.5,
            visible_f0: 2.0,
            visible_q: 0.7,
            resonant_f0: 1.0,
            resonant_q: 20.0,
            pileup_corner: 0.02,
            signal_lo: 0.8,
            signal_hi: 1.2,
            signal_tones: 64,
            seed: 1,
        }
    }
}

/// Constant-peak-gain 2nd-order bandpass at `f0` (fraction of the sample
/// rate) with quality factor `q`.
pub fn resonator(f0: f64, q: f64) -> Result<FilterCascade> {
    if !(f0 > 0.0 && f0 < 0.5) || !(q > 0.0) {
        return arg(format!("resonator needs 0 < f0 < 0.5 and q > 0, got {f0}, {q}"));
    }
    let w = 2.0 * PI * f0;
    let alpha = w.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    FilterCascade::new(
        vec![Sos {
            b0: alpha / a0,
            b1: 0.0,
            b2: -alpha / a0,
            a1: -2.0 * w.cos() / a0,
            a2: (1.0 - alpha) / a0,
        }],
        DesignMeta {
            family: "resonator".into(),
            order: 2,
            corners: vec![f0],
        },
    )
}

/// Interference traces and the signal counterpart, equal lengths.
#[derive(Clone, Debug)]
pub struct MorphDemoResult {
    pub visible: Vec<f64>,
    pub resonant: Vec<f64>,
    pub pileup: Vec<f64>,
    /// Band-limited signal after the outlier-preserving filter.
    pub signal: Vec<f64>,
    /// Excess kurtosis of the three interference traces.
    pub kurtosis: [f64; 3],
    /// Excess kurtosis of the signal after each of the three filters.
    pub signal_kurtosis: [f64; 3],
}

impl MorphDemoResult {
    pub const CSV_HEADER: &'static str = "visible,resonant,pileup,signal";

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        (0..self.visible.len()).map(move |k| {
            format!(
                "{:e},{:e},{:e},{:e}",
                self.visible[k], self.resonant[k], self.pileup[k], self.signal[k]
            )
        })
    }
}

pub fn run_morph_demo(cfg: &MorphDemoConfig) -> Result<MorphDemoResult> {
    let fs = cfg.sample_rate;
    if cfg.signal_tones == 0 || !(cfg.signal_lo > 0.0 && cfg.signal_lo < cfg.signal_hi) {
        return arg("multitone needs tones and a valid band");
    }
    let spec = OutlierNoiseSpec {
        kind: OutlierKind::PoissonNormal,
        rate: cfg.event_rate,
        duty_cycle: 1.0,
        power_db_rel_thermal: 0.0,
        rng: RngSpec::new(cfg.seed, 3),
    };
    let events = gen_poisson_impulses(&spec, cfg.samples, fs)?.stream;
    let filters = [
        resonator(cfg.visible_f0 / fs, cfg.visible_q)?,
        resonator(cfg.resonant_f0 / fs, cfg.resonant_q)?,
        design_bessel_lowpass(1, cfg.pileup_corner / fs)?,
    ];
    let mut rng = RngSpec::new(cfg.seed, 4).rng();
    let tones: Vec<(f64, f64)> = (0..cfg.signal_tones)
        .map(|k| {
            use rand::Rng;
            let f = cfg.signal_lo
                + (cfg.signal_hi - cfg.signal_lo) * (k as f64 + 0.5) / cfg.signal_tones as f64;
            (f, rng.random::<f64>() * 2.0 * PI)
        })
        .collect();
    let signal = SampleStream::new(
        (0..cfg.samples)
            .map(|i| {
                let t = i as f64 / fs;
                tones.iter().map(|(f, p)| (2.0 * PI * f * t + p).cos()).sum::<f64>()
            })
            .collect(),
        fs,
    )?;
    // skip the filter start-up transient when measuring
    let skip = cfg.samples / 8;
    let mut interference = Vec::new();
    let mut kurtosis = [0.0; 3];
    let mut signal_kurtosis = [0.0; 3];
    let mut signal_visible = Vec::new();
    for (i, f) in filters.iter().enumerate() {
        let y = f.clone().run(&events).into_samples();
        kurtosis[i] = excess_kurtosis_of(&y[skip..])?;
        let s = f.clone().run(&signal).into_samples();
        signal_kurtosis[i] = excess_kurtosis_of(&s[skip..])?;
        if i == 0 {
            signal_visible = s;
        }
        interference.push(y);
    }
    let pileup = interference.pop().unwrap_or_default();
    let resonant = interference.pop().unwrap_or_default();
    let visible = interference.pop().unwrap_or_default();
    Ok(MorphDemoResult {
        visible,
        resonant,
        pileup,
        signal: signal_visible,
        kurtosis,
        signal_kurtosis,
    })
}
