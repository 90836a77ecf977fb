//! Test signals and interference: linear chirp, passband QPSK-OFDM with
//! zero guard intervals, thermal noise, Poisson impulses, periodic Gaussian
//! bursts, and power-calibrated mixing.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::metrics::{band_power, Band};
use crate::signal::{RngSpec, SampleStream};

/// Unit-amplitude linear chirp whose instantaneous frequency runs from `f0`
/// to `f1` over `duration`.
pub fn gen_chirp(f0: f64, f1: f64, duration: f64, sample_rate: f64) -> Result<SampleStream> {
    if !(f0 > 0.0 && f0 <= f1 && f1 < 0.5 * sample_rate) {
        return arg(format!(
            "chirp needs 0 < f0 <= f1 < fs/2, got {f0}..{f1} at fs {sample_rate}"
        ));
    }
    if !(duration > 0.0) {
        return arg("chirp duration must be positive");
    }
    let n = (duration * sample_rate).round() as usize;
    let k = (f1 - f0) / duration;
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            (2.0 * PI * (f0 * t + 0.5 * k * t * t)).sin()
        })
        .collect();
    SampleStream::new(x, sample_rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    /// Center frequency.
    pub fc: f64,
    pub n_subcarriers: usize,
    /// Occupied bandwidth as a fraction of `fc`.
    pub bandwidth_ratio: f64,
    /// Guard duration as a fraction of the symbol duration.
    pub guard_ratio: f64,
    pub rng: RngSpec,
}

impl OfdmConfig {
    pub fn new(fc: f64, rng: RngSpec) -> Self {
        Self {
            fc,
            n_subcarriers: 256,
            bandwidth_ratio: 1.0 / 3.0,
            guard_ratio: 0.46,
            rng,
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.fc * self.bandwidth_ratio
    }

    pub fn spacing(&self) -> f64 {
        self.bandwidth() / self.n_subcarriers as f64
    }

    /// Symbol duration `Ts = 1/spacing`.
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.spacing()
    }

    pub fn guard_duration(&self) -> f64 {
        self.guard_ratio * self.symbol_duration()
    }

    /// `[fc − B/2, fc + B/2]`.
    pub fn band(&self) -> Band {
        let half = 0.5 * self.bandwidth();
        (self.fc - half, self.fc + half)
    }

    /// Symbol and guard lengths in samples at `sample_rate`.
    pub fn frame(&self, sample_rate: f64) -> Result<(usize, usize)> {
        let ts = self.symbol_duration() * sample_rate;
        let n = ts.round();
        if (ts - n).abs() > 1e-6 * ts {
            return arg(format!(
                "symbol duration must be a whole number of samples, got {ts}"
            ));
        }
        Ok((n as usize, (self.guard_ratio * n).round() as usize))
    }
}

/// Real passband OFDM: random QPSK on `n_subcarriers` adjacent IFFT bins
/// centered on `fc`, unit RMS inside every symbol, zero guards in between.
pub fn gen_ofdm(cfg: &OfdmConfig, n_symbols: usize, sample_rate: f64) -> Result<SampleStream> {
    if sample_rate < 16.0 * cfg.fc {
        return arg(format!(
            "OFDM needs a sample rate of at least 16·fc, got {sample_rate}"
        ));
    }
    if cfg.n_subcarriers == 0 || !(cfg.guard_ratio >= 0.0) {
        return arg("OFDM needs subcarriers and a non-negative guard");
    }
    let (n, guard) = cfg.frame(sample_rate)?;
    let center = (cfg.fc * cfg.symbol_duration()).round() as usize;
    let first = center - cfg.n_subcarriers / 2;
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let mut rng = cfg.rng.rng();
    let qpsk = std::f64::consts::FRAC_1_SQRT_2;
    // Parseval: each unit-magnitude carrier contributes 2/n² to the power
    // of the real part after the unnormalized inverse transform.
    let scale = (n as f64) / (2.0 * cfg.n_subcarriers as f64).sqrt();
    let mut out = Vec::with_capacity(n_symbols * (n + guard));
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..n_symbols {
        spectrum.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for bin in &mut spectrum[first..first + cfg.n_subcarriers] {
            let re = if rng.random::<bool>() { qpsk } else { -qpsk };
            let im = if rng.random::<bool>() { qpsk } else { -qpsk };
            *bin = Complex64::new(re, im);
        }
        ifft.process(&mut spectrum);
        out.extend(spectrum.iter().map(|c| 2.0 * c.re * scale / n as f64));
        out.extend(std::iter::repeat_n(0.0, guard));
    }
    SampleStream::new(out, sample_rate)
}

/// White Gaussian noise of unit variance.
pub fn gen_thermal(len: usize, sample_rate: f64, rng: RngSpec) -> Result<SampleStream> {
    let mut r = rng.rng();
    SampleStream::new((0..len).map(|_| StandardNormal.sample(&mut r)).collect(), sample_rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutlierKind {
    PoissonNormal,
    PeriodicGaussianBurst,
}

/// Outlier interference. Amplitudes are unit-scale; the in-band power
/// relative to thermal noise (`power_db_rel_thermal`) is applied by
/// [`calibrate_mix`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierNoiseSpec {
    pub kind: OutlierKind,
    /// Events (impulses or bursts) per second.
    pub rate: f64,
    pub duty_cycle: f64,
    pub power_db_rel_thermal: f64,
    pub rng: RngSpec,
}

/// Impulse stream plus the ground truth of where events landed.
#[derive(Clone, Debug)]
pub struct ImpulseTrain {
    pub stream: SampleStream,
    /// Number of Poisson events (several may share one sample).
    pub events: u64,
    /// Sample indices holding at least one event, ascending.
    pub positions: Vec<usize>,
}

/// Single-sample impulses at Poisson arrival times with i.i.d. standard
/// normal amplitudes. Events sharing a sample add.
pub fn gen_poisson_impulses(
    spec: &OutlierNoiseSpec,
    len: usize,
    sample_rate: f64,
) -> Result<ImpulseTrain> {
    if spec.kind != OutlierKind::PoissonNormal {
        return arg("spec is not a Poisson impulse process");
    }
    if !(spec.rate > 0.0) || !spec.rate.is_finite() {
        return arg(format!("impulse rate must be positive, got {}", spec.rate));
    }
    let per_sample = Poisson::new(spec.rate / sample_rate)
        .map_err(|e| crate::Error::Argument(e.to_string()))?;
    let mut rng = spec.rng.rng();
    let mut x = vec![0.0; len];
    let mut events = 0u64;
    let mut positions = Vec::new();
    for (k, v) in x.iter_mut().enumerate() {
        let count = per_sample.sample(&mut rng) as u64;
        if count > 0 {
            // sum of `count` standard normals
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z * (count as f64).sqrt();
            events += count;
            positions.push(k);
        }
    }
    Ok(ImpulseTrain {
        stream: SampleStream::new(x, sample_rate)?,
        events,
        positions,
    })
}

/// Periodic gating at `rate` with a random start phase; inside each burst
/// of length `duty_cycle/rate` the samples are white standard normal.
pub fn gen_gaussian_bursts(
    spec: &OutlierNoiseSpec,
    len: usize,
    sample_rate: f64,
) -> Result<SampleStream> {
    if spec.kind != OutlierKind::PeriodicGaussianBurst {
        return arg("spec is not a burst process");
    }
    if !(spec.duty_cycle > 0.0 && spec.duty_cycle <= 1.0) {
        return arg(format!("duty cycle must be in (0, 1], got {}", spec.duty_cycle));
    }
    if !(spec.rate > 0.0) || !spec.rate.is_finite() {
        return arg(format!("burst rate must be positive, got {}", spec.rate));
    }
    let mut rng = spec.rng.rng();
    let phase: f64 = rng.random();
    let cycles_per_sample = spec.rate / sample_rate;
    let x = (0..len)
        .map(|k| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let on = (phase + k as f64 * cycles_per_sample).fract() < spec.duty_cycle;
            if on {
                z
            } else {
                0.0
            }
        })
        .collect();
    SampleStream::new(x, sample_rate)
}

/// Either outlier process as a plain stream.
pub fn gen_outliers(spec: &OutlierNoiseSpec, len: usize, sample_rate: f64) -> Result<SampleStream> {
    match spec.kind {
        OutlierKind::PoissonNormal => Ok(gen_poisson_impulses(spec, len, sample_rate)?.stream),
        OutlierKind::PeriodicGaussianBurst => gen_gaussian_bursts(spec, len, sample_rate),
    }
}

/// Calibrated mixture and the gains applied to each noise component.
#[derive(Clone, Debug)]
pub struct Mixture {
    pub total: SampleStream,
    pub thermal_gain: f64,
    pub outlier_gain: f64,
}

/// Scales `thermal` so that the in-band SNR is `snr_thermal_db` and the
/// outlier so that its in-band power is `outlier_rel_db` above the scaled
/// thermal noise, then sums. An `outlier_rel_db` of −∞ omits the outlier.
pub fn calibrate_mix(
    signal: &SampleStream,
    thermal: &SampleStream,
    outlier: &SampleStream,
    snr_thermal_db: f64,
    outlier_rel_db: f64,
    band: Band,
) -> Result<Mixture> {
    let n = signal.len();
    if thermal.len() != n || outlier.len() != n {
        return arg("mixture components must have equal lengths");
    }
    if thermal.sample_rate() != signal.sample_rate() || outlier.sample_rate() != signal.sample_rate() {
        return arg("mixture components must have equal rates");
    }
    let p_signal = band_power(signal, band)?;
    let p_thermal = band_power(thermal, band)?;
    if !(p_signal > 0.0 && p_thermal > 0.0) {
        return arg("signal and thermal noise need power in band");
    }
    let thermal_gain = (p_signal / p_thermal * 10f64.powf(-snr_thermal_db / 10.0)).sqrt();
    let outlier_gain = if outlier_rel_db == f64::NEG_INFINITY {
        0.0
    } else {
        let p_outlier = band_power(outlier, band)?;
        if !(p_outlier > 0.0) {
            return arg("outlier interference has no power in band");
        }
        let target = p_thermal * thermal_gain * thermal_gain * 10f64.powf(outlier_rel_db / 10.0);
        (target / p_outlier).sqrt()
    };
    let total = signal
        .samples()
        .iter()
        .zip(thermal.samples())
        .zip(outlier.samples())
        .map(|((s, t), o)| s + thermal_gain * t + outlier_gain * o)
        .collect();
    Ok(Mixture {
        total: signal.with_samples(total),
        thermal_gain,
        outlier_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{design_complementary_pair, design_front_end};
    use crate::metrics::{excess_kurtosis, pileup_threshold};
    use crate::signal::Processor;

    const FS: f64 = 20.0;

    fn ofdm_cfg(seed: u64) -> OfdmConfig {
        OfdmConfig::new(1.0, RngSpec::new(seed, 0))
    }

    fn zero_crossings(x: &[f64]) -> Vec<f64> {
        x.windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] <= 0.0 && w[1] > 0.0 || w[0] >= 0.0 && w[1] < 0.0)
            .map(|(i, w)| i as f64 + w[0] / (w[0] - w[1]))
            .collect()
    }

    #[test]
    fn chirp_degenerates_to_tone() {
        let s = gen_chirp(0.5, 0.5, 100.0, FS).unwrap();
        for (i, v) in s.samples().iter().enumerate() {
            let t = i as f64 / FS;
            assert!((v - (2.0 * PI * 0.5 * t).sin()).abs() < 1e-9);
        }
        assert!(gen_chirp(0.5, 0.4, 1.0, FS).is_err());
        assert!(gen_chirp(0.5, 10.0, 1.0, FS).is_err());
    }

    #[test]
    fn chirp_midpoint_frequency() {
        let (f0, f1, d) = (0.05, 1.0, 2000.0);
        let s = gen_chirp(f0, f1, d, FS).unwrap();
        let z = zero_crossings(s.samples());
        let mid = d * FS / 2.0;
        let near: Vec<f64> = z.iter().copied().filter(|t| (t - mid).abs() < 200.0).collect();
        let spacing = (near[near.len() - 1] - near[0]) / (near.len() - 1) as f64;
        let f = FS / (2.0 * spacing);
        assert!((f / (0.5 * (f0 + f1)) - 1.0).abs() < 1e-3, "{f}");
    }

    #[test]
    fn bandstop_cuts_chirp_slew_rate_by_an_order_of_magnitude() {
        let s = gen_chirp(0.05, 1.0, 4000.0, FS).unwrap();
        let pair = design_complementary_pair(FS, 0.2, 1.0, 801).unwrap();
        let mut bs = pair.bandstop.clone();
        let y = bs.run(&s);
        let skip = pair.bandstop.len();
        let rms_slew = |x: &[f64]| {
            let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
            (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt()
        };
        let ratio = rms_slew(&s.samples()[skip..]) / rms_slew(&y.samples()[skip..]);
        assert!((7.0..=13.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn ofdm_structure() {
        let cfg = ofdm_cfg(1);
        assert!((cfg.symbol_duration() - 768.0).abs() < 1e-9);
        let (n, g) = cfg.frame(FS).unwrap();
        assert_eq!((n, g), (15360, 7066));
        let s = gen_ofdm(&cfg, 4, FS).unwrap();
        assert_eq!(s.len(), 4 * (n + g));
        for sym in 0..4 {
            let start = sym * (n + g);
            let body = &s.samples()[start..start + n];
            let rms = (body.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            assert!((rms - 1.0).abs() < 1e-9, "{rms}");
            assert!(s.samples()[start + n..start + n + g].iter().all(|&v| v == 0.0));
        }
        assert!(gen_ofdm(&cfg, 1, 10.0).is_err());
    }

    #[test]
    fn ofdm_spectral_occupancy() {
        let cfg = ofdm_cfg(2);
        let s = gen_ofdm(&cfg, 6, FS).unwrap();
        let inband = band_power(&s, cfg.band()).unwrap();
        let total = band_power(&s, (0.0, FS / 2.0)).unwrap();
        assert!(inband >= 0.99 * total, "{}", inband / total);
    }

    #[test]
    fn ofdm_crest_factor() {
        let cfg = ofdm_cfg(3);
        let s = gen_ofdm(&cfg, 100, FS).unwrap();
        let peak = s.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let (n, g) = cfg.frame(FS).unwrap();
        let rms_in_symbol = (s.power() * (n + g) as f64 / n as f64).sqrt();
        assert!(peak / rms_in_symbol > 3.0);
    }

    #[test]
    fn generators_are_deterministic() {
        let cfg = ofdm_cfg(4);
        assert_eq!(gen_ofdm(&cfg, 2, FS).unwrap(), gen_ofdm(&cfg, 2, FS).unwrap());
        let spec = poisson(0.5, 9);
        assert_eq!(
            gen_poisson_impulses(&spec, 10_000, FS).unwrap().stream,
            gen_poisson_impulses(&spec, 10_000, FS).unwrap().stream
        );
    }

    fn poisson(rate: f64, seed: u64) -> OutlierNoiseSpec {
        OutlierNoiseSpec {
            kind: OutlierKind::PoissonNormal,
            rate,
            duty_cycle: 1.0,
            power_db_rel_thermal: 0.0,
            rng: RngSpec::new(seed, 7),
        }
    }

    fn bursts(rate: f64, duty: f64, seed: u64) -> OutlierNoiseSpec {
        OutlierNoiseSpec {
            kind: OutlierKind::PeriodicGaussianBurst,
            rate,
            duty_cycle: duty,
            power_db_rel_thermal: 0.0,
            rng: RngSpec::new(seed, 8),
        }
    }

    #[test]
    fn poisson_event_count() {
        for seed in 0..20 {
            let t = gen_poisson_impulses(&poisson(0.01, seed), 200_000, FS).unwrap();
            assert!((70..=130).contains(&t.events), "{}", t.events);
            assert_eq!(t.positions.len() as u64, t.events);
        }
        assert!(gen_poisson_impulses(&poisson(0.0, 0), 10, FS).is_err());
        assert!(gen_poisson_impulses(&bursts(1.0, 0.5, 0), 10, FS).is_err());
    }

    #[test]
    fn pileup_through_front_end() {
        let front = design_front_end(FS, 1.0).unwrap();
        let lc = pileup_threshold(3.987).unwrap();
        let n = 1 << 20;
        let mut f = front.clone();
        let dense = f.run(&gen_poisson_impulses(&poisson(20.0 * lc, 5), n, FS).unwrap().stream);
        let k_dense = excess_kurtosis(&dense.skip(5000)).unwrap();
        assert!(k_dense.abs() < 0.3, "{k_dense}");
        let mut f = front.clone();
        let sparse = f.run(&gen_poisson_impulses(&poisson(lc / 100.0, 6), n, FS).unwrap().stream);
        let k_sparse = excess_kurtosis(&sparse.skip(5000)).unwrap();
        assert!(k_sparse > 10.0, "{k_sparse}");
    }

    #[test]
    fn burst_gating() {
        let full = gen_gaussian_bursts(&bursts(0.01, 1.0, 1), 100_000, FS).unwrap();
        assert!(full.samples().iter().all(|&v| v != 0.0));
        let s = gen_gaussian_bursts(&bursts(0.45, 0.1, 2), 200_000, FS).unwrap();
        let duty = s.samples().iter().filter(|&&v| v != 0.0).count() as f64 / s.len() as f64;
        assert!((duty - 0.1).abs() < 0.01, "{duty}");
        assert!(gen_gaussian_bursts(&bursts(0.45, 0.0, 2), 10, FS).is_err());
        assert!(gen_gaussian_bursts(&bursts(0.45, 1.5, 2), 10, FS).is_err());
    }

    fn mix_parts(n: usize) -> (SampleStream, SampleStream, SampleStream, Band) {
        let cfg = ofdm_cfg(10);
        let mut sig = gen_ofdm(&cfg, 1 + n / 22426, FS).unwrap().into_samples();
        sig.truncate(n);
        let sig = SampleStream::new(sig, FS).unwrap();
        let th = gen_thermal(n, FS, RngSpec::new(11, 0)).unwrap();
        let out = gen_outliers(&poisson(0.1, 12), n, FS).unwrap();
        (sig, th, out, cfg.band())
    }

    #[test]
    fn calibration_closes_the_loop() {
        let n = 1 << 17;
        let (sig, th, out, band) = mix_parts(n);
        let p_sig = band_power(&sig, band).unwrap();
        let only = calibrate_mix(&sig, &th, &out, 30.0, f64::NEG_INFINITY, band).unwrap();
        assert_eq!(only.outlier_gain, 0.0);
        let noise = mix_noise(&only.total, &sig);
        let snr = 10.0 * (p_sig / band_power(&noise, band).unwrap()).log10();
        assert!((snr - 30.0).abs() < 0.1, "{snr}");

        for (snr_db, rel, want) in [(30.0, 0.0, 30.0 - 3.0103), (10.0, 30.0, -20.0)] {
            let m = calibrate_mix(&sig, &th, &out, snr_db, rel, band).unwrap();
            let p_th = band_power(&th.scaled(m.thermal_gain), band).unwrap();
            let p_out = band_power(&out.scaled(m.outlier_gain), band).unwrap();
            assert!((10.0 * (p_sig / p_th).log10() - snr_db).abs() < 0.2);
            assert!((10.0 * (p_out / p_th).log10() - rel).abs() < 0.2);
            let sinr = 10.0 * (p_sig / band_power(&mix_noise(&m.total, &sig), band).unwrap()).log10();
            assert!((sinr - want).abs() < 0.2, "{sinr} vs {want}");
        }
    }

    fn mix_noise(total: &SampleStream, sig: &SampleStream) -> SampleStream {
        total.with_samples(
            total
                .samples()
                .iter()
                .zip(sig.samples())
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    #[test]
    fn calibration_rejects_bad_input() {
        let (sig, th, out, band) = mix_parts(1 << 14);
        let zero = SampleStream::zeros(sig.len(), FS).unwrap();
        assert!(calibrate_mix(&sig, &zero, &out, 30.0, 0.0, band).is_err());
        assert!(calibrate_mix(&sig, &th, &zero, 30.0, 0.0, band).is_err());
        assert!(calibrate_mix(&sig, &th, &out.skip(1), 30.0, 0.0, band).is_err());
    }
}
