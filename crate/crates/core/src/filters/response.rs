//! Response measurements: 3 dB band edges and the time-bandwidth product.

use std::f64::consts::{LN_2, PI};

use super::fir::FirFilter;
use super::iir::FilterCascade;
use crate::error::{Error, Result};

/// Time-bandwidth product of a Gaussian response, `2·ln 2 / π`.
pub const GAUSSIAN_TIME_BANDWIDTH: f64 = 2.0 * LN_2 / PI;

/// Lower and upper 3 dB edges (fractions of sample rate) of a magnitude
/// response, relative to its peak. A lowpass returns a lower edge of 0.
pub fn three_db_band(magnitude: impl Fn(f64) -> f64) -> (f64, f64) {
    const GRID: usize = 20_000;
    let grid: Vec<f64> = (0..=GRID).map(|k| 0.5 * k as f64 / GRID as f64).collect();
    let (peak_idx, peak) = grid
        .iter()
        .map(|&f| magnitude(f))
        .enumerate()
        .fold((0, f64::MIN), |a, (i, m)| if m > a.1 { (i, m) } else { a });
    let level = peak * std::f64::consts::FRAC_1_SQRT_2;
    let refine = |mut inside: f64, mut outside: f64| {
        for _ in 0..100 {
            let mid = 0.5 * (inside + outside);
            if magnitude(mid) >= level {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        0.5 * (inside + outside)
    };
    let lower = (0..peak_idx)
        .rev()
        .find(|&i| magnitude(grid[i]) < level)
        .map_or(0.0, |i| refine(grid[peak_idx.min(i + 1)], grid[i]));
    let upper = (peak_idx..=GRID)
        .find(|&i| magnitude(grid[i]) < level)
        .map_or(0.5, |i| refine(grid[i - 1], grid[i]));
    (lower, upper)
}

/// Width of the 3 dB band of a cascade, in fractions of the sample rate.
pub fn three_db_bandwidth(f: &FilterCascade) -> f64 {
    let (lo, hi) = three_db_band(|fr| f.magnitude(fr));
    hi - lo
}

/// Time-bandwidth product of a lowpass-like impulse response.
///
/// Duration is the rms width of `|h|²` scaled to a full-width at half
/// maximum (`2·√(2 ln 2)·σ`), bandwidth is the full two-sided 3 dB width
/// `2·B₀`. A Gaussian response gives exactly [`GAUSSIAN_TIME_BANDWIDTH`].
pub fn time_bandwidth_of_taps(h: &[f64], bandwidth_3db: f64) -> Result<f64> {
    let energy: f64 = h.iter().map(|v| v * v).sum();
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::Measurement("impulse response has no finite energy".into()));
    }
    let mean = h
        .iter()
        .enumerate()
        .map(|(k, v)| k as f64 * v * v)
        .sum::<f64>()
        / energy;
    let var = h
        .iter()
        .enumerate()
        .map(|(k, v)| (k as f64 - mean).powi(2) * v * v)
        .sum::<f64>()
        / energy;
    let duration = 2.0 * (2.0 * LN_2).sqrt() * var.sqrt();
    Ok(duration * 2.0 * bandwidth_3db)
}

/// Time-bandwidth product of a cascade; fails for responses that do not
/// decay within ten million samples.
pub fn measure_time_bandwidth(f: &FilterCascade) -> Result<f64> {
    let mut len = 1 << 12;
    loop {
        let h = f.impulse_response(len);
        let total: f64 = h.iter().map(|v| v * v).sum();
        let tail: f64 = h[len * 3 / 4..].iter().map(|v| v * v).sum();
        if total > 0.0 && tail <= 1e-14 * total {
            let (_, b0) = three_db_band(|fr| f.magnitude(fr));
            return time_bandwidth_of_taps(&h, b0);
        }
        if len >= 10_000_000 {
            return Err(Error::Measurement(
                "impulse response does not decay; not lowpass-like".into(),
            ));
        }
        len *= 4;
    }
}

/// Time-bandwidth product of a lowpass FIR.
pub fn measure_time_bandwidth_fir(f: &FirFilter) -> Result<f64> {
    let (_, b0) = three_db_band(|fr| f.response(fr).norm());
    time_bandwidth_of_taps(f.taps(), b0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::bessel::design_bessel_lowpass;
    use crate::filters::iir::{DesignMeta, Sos};

    #[test]
    fn gaussian_fir_hits_gaussian_product() {
        let sigma = 40.0;
        let n = 801;
        let taps: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 - 400.0;
                (-t * t / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let tb = measure_time_bandwidth_fir(&FirFilter::new(taps).unwrap()).unwrap();
        assert!((tb / GAUSSIAN_TIME_BANDWIDTH - 1.0).abs() < 0.02, "{tb}");
        assert!((GAUSSIAN_TIME_BANDWIDTH - 0.4413).abs() < 1e-4);
    }

    #[test]
    fn fourth_order_bessel_is_near_gaussian() {
        let tb = measure_time_bandwidth(&design_bessel_lowpass(4, 0.005).unwrap()).unwrap();
        assert!((tb / GAUSSIAN_TIME_BANDWIDTH - 1.0).abs() < 0.10, "{tb}");
    }

    #[test]
    fn truncated_sinc_exceeds_gaussian() {
        let taps = super::super::fir::windowed_lowpass(0.02, 2001, 0.0);
        let tb = measure_time_bandwidth_fir(&FirFilter::new(taps).unwrap()).unwrap();
        assert!(tb > GAUSSIAN_TIME_BANDWIDTH, "{tb}");
    }

    #[test]
    fn non_decaying_response_is_an_error() {
        // pole at 1 - 1e-9: effectively an integrator
        let f = FilterCascade::new(
            vec![Sos {
                b0: 1.0,
                b1: 0.0,
                b2: 0.0,
                a1: -(1.0 - 1e-9),
                a2: 0.0,
            }],
            DesignMeta {
                family: "leaky".into(),
                order: 1,
                corners: vec![],
            },
        )
        .unwrap();
        assert!(measure_time_bandwidth(&f).is_err());
    }

    #[test]
    fn three_db_edges_of_lowpass() {
        let f = design_bessel_lowpass(4, 0.03).unwrap();
        let (lo, hi) = three_db_band(|fr| f.magnitude(fr));
        assert_eq!(lo, 0.0);
        assert!((hi - 0.03).abs() < 1e-6);
    }
}
