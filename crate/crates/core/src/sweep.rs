//! Comparison experiments: OFDM plus thermal and outlier noise through the
//! linear, clipper-only and clipper+CAF variants of the ADC chain, swept
//! over outlier power, rate and duty cycle.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adc::{AdcChain, AdcChainConfig, ModulatorMode};
use crate::caf::{AdicConfig, CafConfig, FenceSource};
use crate::error::{Error, Result};
use crate::filters::{default_pair_taps, FilterCascade, FilterDescriptor};
use crate::metrics::{
    capacity_proxy, cascade_pileup_threshold, excess_kurtosis_of, passband_snr, Band,
};
use crate::robust::{AgcConfig, QtfConfig, OFDM_BETA};
use crate::scenarios::{
    calibrate_mix, gen_gaussian_bursts, gen_ofdm, gen_poisson_impulses, gen_thermal, OfdmConfig,
    OutlierKind, OutlierNoiseSpec,
};
use crate::signal::{Processor, RngSpec, SampleStream};

/// Chain variant under comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Linear,
    Clipper,
    #[serde(rename = "clipper+caf")]
    ClipperCaf,
    /// Clipper+CAF with the ADiC fences forced to ±∞.
    #[serde(rename = "clipper+caf-open")]
    ClipperCafOpen,
}

impl Variant {
    pub const COMPARED: [Variant; 3] = [Variant::Linear, Variant::Clipper, Variant::ClipperCaf];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Linear => "linear",
            Variant::Clipper => "clipper",
            Variant::ClipperCaf => "clipper+caf",
            Variant::ClipperCafOpen => "clipper+caf-open",
        }
    }
}

/// Parameters that stay fixed across every point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// OFDM center frequency.
    pub fc: f64,
    /// Modulator rate, in units of `fc`.
    pub sample_rate_fc: f64,
    pub decimation: usize,
    /// Samples per run at the modulator rate.
    pub samples: usize,
    /// Leading OFDM frame periods excluded from measurement.
    pub warmup_periods: f64,
    pub clip_level: f64,
    /// Quantizer level in units of the clip level; 0 bypasses the
    /// modulator.
    pub quantizer_ratio: f64,
    /// CAF bandpass edges in units of `fc`.
    pub caf_lo_fc: f64,
    pub caf_hi_fc: f64,
    /// 0 selects the default pair length.
    pub caf_taps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            fc: 1.0,
            sample_rate_fc: 20.0,
            decimation: 5,
            samples: 1 << 20,
            warmup_periods: 3.0,
            clip_level: 1.0,
            quantizer_ratio: 0.0,
            caf_lo_fc: 0.6,
            caf_hi_fc: 1.4,
            caf_taps: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn sample_rate(&self) -> f64 {
        self.sample_rate_fc * self.fc
    }

    pub fn ofdm(&self, rng: RngSpec) -> OfdmConfig {
        OfdmConfig::new(self.fc, rng)
    }

    pub fn band(&self) -> Band {
        self.ofdm(RngSpec::new(0, 0)).band()
    }

    fn frame_period(&self) -> f64 {
        let o = self.ofdm(RngSpec::new(0, 0));
        o.symbol_duration() + o.guard_duration()
    }

    pub fn agc(&self) -> Result<AgcConfig> {
        let o = self.ofdm(RngSpec::new(0, 0));
        let mut agc =
            AgcConfig::for_bursts(self.clip_level, o.symbol_duration(), o.guard_duration(), 1.0)?;
        // unit-RMS symbols: the in-symbol median of |x| is ≈ 0.674
        agc.initial_gain = agc.target() / 0.674_489_75;
        Ok(agc)
    }

    pub fn adic(&self, fences_open: bool) -> AdicConfig {
        let period = self.frame_period();
        AdicConfig {
            tau: 1.0 / (2.0 * PI * 4.0 * self.fc),
            fences: if fences_open {
                FenceSource::OPEN
            } else {
                FenceSource::QtfAdaptive {
                    qtf: QtfConfig {
                        q: 0.5,
                        mu: 0.1 * self.clip_level / period,
                        window: period,
                        initial: 0.0,
                    },
                    beta: OFDM_BETA,
                }
            },
            fence_floor: 1e-9 * self.clip_level,
        }
    }

    pub fn caf(&self, fences_open: bool) -> CafConfig {
        let f_lo = self.caf_lo_fc * self.fc;
        CafConfig {
            f_lo,
            f_hi: self.caf_hi_fc * self.fc,
            num_taps: if self.caf_taps == 0 {
                default_pair_taps(self.sample_rate(), f_lo)
            } else {
                self.caf_taps
            },
            adic: self.adic(fences_open),
        }
    }

    pub fn chain(&self, variant: Variant) -> Result<AdcChainConfig> {
        let modulator = if self.quantizer_ratio > 0.0 {
            ModulatorMode::DeltaSigma {
                full_scale: self.quantizer_ratio * self.clip_level,
            }
        } else {
            ModulatorMode::Bypass
        };
        let cfg = AdcChainConfig {
            fc: self.fc,
            sample_rate: self.sample_rate(),
            decimation: self.decimation,
            protect_band: self.band().1,
            lowpass_corner: 4.0 * self.fc,
            highpass_corner: self.fc / 75.0,
            modulator,
            clipper: variant != Variant::Linear,
            agc: self.agc()?,
            caf: match variant {
                Variant::Linear | Variant::Clipper => None,
                Variant::ClipperCaf => Some(self.caf(false)),
                Variant::ClipperCafOpen => Some(self.caf(true)),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn analog_front_end(&self) -> Result<FilterCascade> {
        self.chain(Variant::Linear)?.analog_front_end()
    }

    /// Pileup threshold of the complete front-end response.
    pub fn pileup_threshold(&self) -> Result<f64> {
        let full = self.chain(Variant::Linear)?.full_front_end()?;
        cascade_pileup_threshold(&full, self.sample_rate())
    }

    pub fn warmup_output_samples(&self) -> usize {
        (self.warmup_periods * self.frame_period() * self.sample_rate() / self.decimation as f64)
            .ceil() as usize
    }

    /// Filter descriptors of every variant's digital filters.
    pub fn filter_digests(&self) -> Result<Vec<FilterDescriptor>> {
        AdcChain::new(self.chain(Variant::ClipperCaf)?)?.describe_filters()
    }
}

/// One grid point (without the variant axis).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSpec {
    pub kind: OutlierKind,
    /// Outlier rate as a fraction of the pileup threshold.
    pub rate_rel: f64,
    pub duty_cycle: f64,
    pub outlier_rel_db: f64,
    pub thermal_snr_db: f64,
    pub replicate: u32,
    pub seed: u64,
}

impl PointSpec {
    fn rng(&self, stream: u64) -> RngSpec {
        RngSpec::new(self.seed, u64::from(self.replicate) * 16 + stream)
    }
}

/// Full cross product of the sweep axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub scenario: String,
    pub kind: OutlierKind,
    pub rates: Vec<f64>,
    pub duty_cycles: Vec<f64>,
    pub outlier_rel_db: Vec<f64>,
    pub thermal_snr_db: Vec<f64>,
    pub replicates: u32,
    pub seed: u64,
    /// Also run clipper+CAF with open fences and check it against the
    /// clipper-only variant.
    #[serde(default)]
    pub no_harm_check: bool,
}

impl SweepGrid {
    pub fn points(&self) -> Vec<PointSpec> {
        let mut out = Vec::new();
        for &thermal_snr_db in &self.thermal_snr_db {
            for &rate_rel in &self.rates {
                for &duty_cycle in &self.duty_cycles {
                    for &outlier_rel_db in &self.outlier_rel_db {
                        for replicate in 0..self.replicates {
                            out.push(PointSpec {
                                kind: self.kind,
                                rate_rel,
                                duty_cycle,
                                outlier_rel_db,
                                thermal_snr_db,
                                replicate,
                                seed: self.seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.rates.is_empty()
            || self.duty_cycles.is_empty()
            || self.outlier_rel_db.is_empty()
            || self.thermal_snr_db.is_empty()
            || self.replicates == 0
        {
            return bad("every sweep axis needs at least one value");
        }
        if self.rates.iter().any(|r| !(*r > 0.0)) {
            return bad("rates must be positive");
        }
        if self.duty_cycles.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return bad("duty cycles must lie in (0, 1]");
        }
        Ok(())
    }
}

/// One row of sweep output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: String,
    pub rate_rel: f64,
    pub duty_cycle: f64,
    pub outlier_rel_db: f64,
    pub thermal_snr_db: f64,
    pub variant: Variant,
    pub passband_snr_db: f64,
    pub capacity_proxy: f64,
    pub excess_kurtosis: f64,
    pub blanking_duty: f64,
    pub replicate: u32,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "scenario,rate_rel,duty_cycle,outlier_rel_db,thermal_snr_db,variant,\
passband_snr_db,capacity_proxy_bits_s_hz,excess_kurtosis,blanking_duty,replicate,seed";

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.rate_rel,
            self.duty_cycle,
            self.outlier_rel_db,
            self.thermal_snr_db,
            self.variant.name(),
            self.passband_snr_db,
            self.capacity_proxy,
            self.excess_kurtosis,
            self.blanking_duty,
            self.replicate,
            self.seed
        )
    }
}

/// Clean signal and noisy mixture at the chain input (after the analog
/// front end).
#[derive(Clone, Debug)]
pub struct PointInput {
    pub clean: SampleStream,
    pub noisy: SampleStream,
}

/// Builds the scenario for one point: OFDM, thermal noise and outliers,
/// each through the analog front end, then power-calibrated in the OFDM
/// band.
pub fn point_input(exp: &ExperimentConfig, p: &PointSpec) -> Result<PointInput> {
    let fs = exp.sample_rate();
    let n = exp.samples;
    let ofdm = exp.ofdm(p.rng(0));
    let (ts, tg) = ofdm.frame(fs)?;
    let mut clean = gen_ofdm(&ofdm, n.div_ceil(ts + tg), fs)?.into_samples();
    clean.truncate(n);
    let clean = SampleStream::new(clean, fs)?;
    let thermal = gen_thermal(n, fs, p.rng(1))?;
    let spec = OutlierNoiseSpec {
        kind: p.kind,
        rate: p.rate_rel * exp.pileup_threshold()?,
        duty_cycle: p.duty_cycle,
        power_db_rel_thermal: p.outlier_rel_db,
        rng: p.rng(2),
    };
    let outlier = match p.kind {
        OutlierKind::PoissonNormal => gen_poisson_impulses(&spec, n, fs)?.stream,
        OutlierKind::PeriodicGaussianBurst => gen_gaussian_bursts(&spec, n, fs)?,
    };
    let front = exp.analog_front_end()?;
    let through = |s: &SampleStream| front.clone().run(s);
    let (clean, thermal, outlier) = (through(&clean), through(&thermal), through(&outlier));
    let mix = calibrate_mix(
        &clean,
        &thermal,
        &outlier,
        p.thermal_snr_db,
        p.outlier_rel_db,
        exp.band(),
    )?;
    Ok(PointInput {
        clean,
        noisy: mix.total,
    })
}

/// Measurements of one variant on a prepared input.
#[derive(Clone, Debug)]
pub struct VariantResult {
    pub passband_snr_db: f64,
    pub excess_kurtosis: f64,
    pub blanking_duty: f64,
    pub clip_events: usize,
}

pub fn run_variant(exp: &ExperimentConfig, input: &PointInput, v: Variant) -> Result<VariantResult> {
    let mut chain = AdcChain::new(exp.chain(v)?)?;
    let out = chain.process(&input.noisy, false)?;
    let reference = chain.reference(&input.clean, &out.gains)?;
    let skip = exp.warmup_output_samples();
    let (y, r) = (out.output.skip(skip), reference.skip(skip));
    let snr = passband_snr(&y, &r, exp.band(), 0)?;
    let err: Vec<f64> = y.samples().iter().zip(r.samples()).map(|(a, b)| a - b).collect();
    Ok(VariantResult {
        passband_snr_db: snr,
        excess_kurtosis: excess_kurtosis_of(&err).unwrap_or(f64::NAN),
        blanking_duty: out.blanking_duty,
        clip_events: out.clip_events.len(),
    })
}

/// All variants for one point, in fixed order.
pub fn run_point(
    exp: &ExperimentConfig,
    scenario: &str,
    p: &PointSpec,
    variants: &[Variant],
) -> Result<Vec<MetricsRecord>> {
    let input = point_input(exp, p)?;
    variants
        .iter()
        .map(|&v| {
            let r = run_variant(exp, &input, v)?;
            Ok(MetricsRecord {
                scenario: scenario.to_string(),
                rate_rel: p.rate_rel,
                duty_cycle: p.duty_cycle,
                outlier_rel_db: p.outlier_rel_db,
                thermal_snr_db: p.thermal_snr_db,
                variant: v,
                passband_snr_db: r.passband_snr_db,
                capacity_proxy: capacity_proxy(r.passband_snr_db),
                excess_kurtosis: r.excess_kurtosis,
                blanking_duty: r.blanking_duty,
                replicate: p.replicate,
                seed: p.seed,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub point: PointSpec,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    /// Grid order, variants in fixed order within each point.
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<PointFailure>,
}

/// Tolerance of the no-harm comparison, dB.
pub const NO_HARM_TOLERANCE_DB: f64 = 0.1;

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    /// Mean and spread (sample standard deviation) of the SNR over
    /// replicates, one row per (point, variant).
    pub fn summary_csv(&self) -> String {
        let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
        for r in &self.records {
            let key = format!(
                "{},{},{},{},{},{}",
                r.scenario,
                r.rate_rel,
                r.duty_cycle,
                r.outlier_rel_db,
                r.thermal_snr_db,
                r.variant.name()
            );
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(r.passband_snr_db),
                None => groups.push((key, vec![r.passband_snr_db])),
            }
        }
        let mut s = String::from(
            "scenario,rate_rel,duty_cycle,outlier_rel_db,thermal_snr_db,variant,\
snr_mean_db,snr_spread_db,capacity_mean_bits_s_hz,replicates\n",
        );
        for (key, v) in groups {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let spread = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let cap = v.iter().map(|&x| capacity_proxy(x)).sum::<f64>() / n;
            let _ = writeln!(s, "{key},{mean},{spread},{cap},{}", v.len());
        }
        s
    }

    /// Records of `variant` matching a point, by grid coordinates.
    pub fn find(&self, p: &PointSpec, variant: Variant) -> Option<&MetricsRecord> {
        self.records.iter().find(|r| {
            r.variant == variant
                && r.rate_rel == p.rate_rel
                && r.duty_cycle == p.duty_cycle
                && r.outlier_rel_db == p.outlier_rel_db
                && r.thermal_snr_db == p.thermal_snr_db
                && r.replicate == p.replicate
        })
    }

    /// Invariant violations: open-fence CAF rows worse than the matching
    /// clipper-only rows by more than the tolerance.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for open in self.records.iter().filter(|r| r.variant == Variant::ClipperCafOpen) {
            let base = self.records.iter().find(|r| {
                r.variant == Variant::Clipper
                    && r.rate_rel == open.rate_rel
                    && r.duty_cycle == open.duty_cycle
                    && r.outlier_rel_db == open.outlier_rel_db
                    && r.thermal_snr_db == open.thermal_snr_db
                    && r.replicate == open.replicate
            });
            if let Some(base) = base {
                if open.passband_snr_db < base.passband_snr_db - NO_HARM_TOLERANCE_DB {
                    out.push(format!(
                        "no-harm violated at rate {} duty {} outlier {} dB thermal {} dB replicate {}: \
                         open-fence CAF {:.3} dB vs clipper {:.3} dB",
                        open.rate_rel,
                        open.duty_cycle,
                        open.outlier_rel_db,
                        open.thermal_snr_db,
                        open.replicate,
                        open.passband_snr_db,
                        base.passband_snr_db
                    ));
                }
            }
        }
        out
    }
}

/// Runs every grid point on a pool of `workers` threads. Output order
/// follows the grid, independent of scheduling.
pub fn run_sweep(exp: &ExperimentConfig, grid: &SweepGrid, workers: usize) -> Result<SweepResult> {
    grid.validate()?;
    exp.chain(Variant::ClipperCaf)?;
    let mut variants = Variant::COMPARED.to_vec();
    if grid.no_harm_check {
        variants.push(Variant::ClipperCafOpen);
    }
    let points = grid.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<Vec<MetricsRecord>>> = pool.install(|| {
        points
            .par_iter()
            .map(|p| run_point(exp, &grid.scenario, p, &variants))
            .collect()
    });
    let mut result = SweepResult::default();
    for (p, o) in points.into_iter().zip(outcomes) {
        match o {
            Ok(records) => result.records.extend(records),
            Err(e) => result.failures.push(PointFailure {
                point: p,
                message: e.to_string(),
            }),
        }
    }
    Ok(result)
}
