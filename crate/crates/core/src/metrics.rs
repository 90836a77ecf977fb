//! Measurements: in-band power, passband SNR against a clean reference,
//! Shannon capacity proxy, pileup threshold, and excess kurtosis.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{arg, Error, Result};
use crate::filters::{three_db_bandwidth, FilterCascade, GAUSSIAN_TIME_BANDWIDTH};
use crate::signal::{delay, SampleStream};

/// SNR reported for an exactly zero error signal.
pub const SNR_CAP_DB: f64 = 200.0;

/// Minimum stream length for a kurtosis estimate.
pub const MIN_KURTOSIS_LEN: usize = 10_000;

/// Frequency band `[lo, hi]` in Hz.
pub type Band = (f64, f64);

// Five-term flat-top window (SRS coefficients).
const FLAT_TOP: [f64; 5] = [
    0.215_578_95,
    0.416_631_58,
    0.277_263_158,
    0.083_578_947,
    0.006_947_368,
];

fn flat_top(n: usize) -> Vec<f64> {
    let step = 2.0 * std::f64::consts::PI / n as f64;
    (0..n)
        .map(|k| {
            let phi = step * k as f64;
            FLAT_TOP[0] - FLAT_TOP[1] * phi.cos() + FLAT_TOP[2] * (2.0 * phi).cos()
                - FLAT_TOP[3] * (3.0 * phi).cos()
                + FLAT_TOP[4] * (4.0 * phi).cos()
        })
        .collect()
}

/// Power inside `band` from a flat-top windowed FFT, normalized so that a
/// sinusoid of amplitude `A` in band reads `A²/2` and white noise of
/// variance `σ²` reads `2σ²·(hi − lo)/fs`.
pub fn band_power(s: &SampleStream, band: Band) -> Result<f64> {
    let (lo, hi) = band;
    let fs = s.sample_rate();
    if !(0.0..hi).contains(&lo) || hi > 0.5 * fs {
        return arg(format!("band [{lo}, {hi}] outside [0, fs/2]"));
    }
    let n = s.len();
    if n < 16 {
        return arg("band power needs at least 16 samples");
    }
    let w = flat_top(n);
    let mut buf: Vec<Complex64> = s
        .samples()
        .iter()
        .zip(&w)
        .map(|(&x, &w)| Complex64::new(x * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let k_lo = (lo * n as f64 / fs).ceil() as usize;
    let k_hi = ((hi * n as f64 / fs).floor() as usize).min(n / 2);
    let sum: f64 = buf[k_lo..=k_hi].iter().map(|c| c.norm_sqr()).sum();
    let norm: f64 = w.iter().map(|v| v * v).sum::<f64>() * n as f64;
    Ok(2.0 * sum / norm)
}

/// `10·log₁₀(P_ref / P_err)` inside `band`, where the error is the output
/// minus the reference delayed by `align_delay` samples. Zero error reads
/// as [`SNR_CAP_DB`].
pub fn passband_snr(
    output: &SampleStream,
    reference: &SampleStream,
    band: Band,
    align_delay: usize,
) -> Result<f64> {
    if output.len() != reference.len() || output.sample_rate() != reference.sample_rate() {
        return arg("output and reference must have equal length and rate");
    }
    let aligned = delay(reference, align_delay as i64)?;
    let p_ref = band_power(&aligned, band)?;
    if !(p_ref > 0.0) {
        return Err(Error::Measurement("reference has no power in band".into()));
    }
    let err: Vec<f64> = output
        .samples()
        .iter()
        .zip(aligned.samples())
        .map(|(y, r)| y - r)
        .collect();
    let p_err = band_power(&output.with_samples(err), band)?;
    Ok(snr_db(p_ref, p_err))
}

/// Power ratio in dB, capped at [`SNR_CAP_DB`].
pub fn snr_db(p_signal: f64, p_noise: f64) -> f64 {
    if p_noise <= 0.0 {
        SNR_CAP_DB
    } else {
        (10.0 * (p_signal / p_noise).log10()).min(SNR_CAP_DB)
    }
}

/// Shannon capacity per unit bandwidth, `log₂(1 + SNR)`.
pub fn capacity_proxy(snr_db: f64) -> f64 {
    (10f64.powf(snr_db / 10.0)).ln_1p() / std::f64::consts::LN_2
}

/// Rate above which impulses through a filter of 3 dB bandwidth `b0`
/// overlap into effectively Gaussian noise: the inverse of the Gaussian
/// time-bandwidth product, `π/(2 ln 2) ≈ 2.27` per unit bandwidth.
pub fn pileup_threshold(b0: f64) -> Result<f64> {
    if !(b0 > 0.0) {
        return arg(format!("bandwidth must be positive, got {b0}"));
    }
    Ok(b0 / GAUSSIAN_TIME_BANDWIDTH)
}

/// Pileup threshold of a designed cascade running at `sample_rate`, from
/// its measured 3 dB bandwidth.
pub fn cascade_pileup_threshold(f: &FilterCascade, sample_rate: f64) -> Result<f64> {
    pileup_threshold(three_db_bandwidth(f) * sample_rate)
}

/// Sample kurtosis minus 3.
pub fn excess_kurtosis(s: &SampleStream) -> Result<f64> {
    excess_kurtosis_of(s.samples())
}

pub fn excess_kurtosis_of(x: &[f64]) -> Result<f64> {
    if x.len() < MIN_KURTOSIS_LEN {
        return arg(format!(
            "kurtosis needs at least {MIN_KURTOSIS_LEN} samples, got {}",
            x.len()
        ));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (m2, m4) = x.iter().fold((0.0, 0.0), |(m2, m4), &v| {
        let d2 = (v - mean) * (v - mean);
        (m2 + d2, m4 + d2 * d2)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if !(m2 > 0.0) {
        return Err(Error::Measurement("constant stream has no kurtosis".into()));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::design_bessel_lowpass;
    use crate::signal::RngSpec;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngSpec::new(seed, 0).rng();
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn band_power_of_a_tone() {
        let fs = 100.0;
        let x: Vec<f64> = (0..50_000)
            .map(|k| 3.0 * (2.0 * std::f64::consts::PI * 10.3 * k as f64 / fs).cos())
            .collect();
        let s = SampleStream::new(x, fs).unwrap();
        let p = band_power(&s, (9.0, 11.0)).unwrap();
        assert!((p - 4.5).abs() < 4.5 * 1e-3, "{p}");
        assert!(band_power(&s, (20.0, 30.0)).unwrap() < 1e-8);
        assert!(band_power(&s, (20.0, 60.0)).is_err());
    }

    #[test]
    fn band_power_of_white_noise() {
        let s = SampleStream::new(noise(1 << 18, 1), 1.0).unwrap();
        let p = band_power(&s, (0.1, 0.2)).unwrap();
        assert!((p - 0.2).abs() < 0.2 * 0.02, "{p}");
    }

    #[test]
    fn snr_examples() {
        let r = SampleStream::new(noise(1 << 16, 2), 1.0).unwrap();
        let out = delay(&r, 7).unwrap();
        assert_eq!(passband_snr(&out, &r, (0.1, 0.3), 7).unwrap(), SNR_CAP_DB);

        let n = noise(1 << 16, 3);
        let noisy: Vec<f64> = r.samples().iter().zip(&n).map(|(a, b)| a + b).collect();
        let snr = passband_snr(&r.with_samples(noisy), &r, (0.1, 0.3), 0).unwrap();
        assert!(snr.abs() < 0.2, "{snr}");

        let zero = SampleStream::zeros(1 << 16, 1.0).unwrap();
        assert!(passband_snr(&r, &zero, (0.1, 0.3), 0).is_err());
    }

    #[test]
    fn capacity_examples() {
        assert!((capacity_proxy(0.0) - 1.0).abs() < 1e-12);
        assert_eq!(capacity_proxy(f64::NEG_INFINITY), 0.0);
        assert!((capacity_proxy(30.0) - 9.967).abs() < 1e-3);
        let mut last = -1.0;
        for k in -100..100 {
            let c = capacity_proxy(k as f64);
            assert!(c > last);
            last = c;
        }
    }

    #[test]
    fn pileup_examples() {
        assert!((pileup_threshold(1.0).unwrap() - 2.27).abs() < 0.01);
        assert_eq!(
            pileup_threshold(2.0).unwrap(),
            2.0 * pileup_threshold(1.0).unwrap()
        );
        assert!(pileup_threshold(0.0).is_err());
        let lp = design_bessel_lowpass(4, 0.01).unwrap();
        let lc = cascade_pileup_threshold(&lp, 100.0).unwrap();
        assert!((lc / 2.27 - 1.0).abs() < 0.05, "{lc}");
    }

    #[test]
    fn kurtosis_examples() {
        let g = SampleStream::new(noise(1_000_000, 4), 1.0).unwrap();
        assert!(excess_kurtosis(&g).unwrap().abs() < 0.1);
        let sq: Vec<f64> = (0..20_000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((excess_kurtosis_of(&sq).unwrap() + 2.0).abs() < 1e-12);
        assert!(excess_kurtosis_of(&[1.0; 20_000]).is_err());
        assert!(excess_kurtosis_of(&[1.0; 100]).is_err());
    }
}
