//! Bessel-Thomson designs mapped to discrete time by the bilinear
//! transform, pre-warped at the 3 dB corner.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::iir::{DesignMeta, FilterCascade, Sos};
use crate::error::{arg, Error, Result};

/// Highest supported prototype order.
pub const MAX_ORDER: usize = 8;

/// Poles of the analog Bessel lowpass, scaled so that |H(jω)| = 1/√2 at
/// ω = 1 rad/s. Conjugate pairs are listed with positive imaginary part
/// only; a real pole (odd orders) comes last.
pub fn analog_poles(order: usize) -> Result<Vec<Complex64>> {
    if !(1..=MAX_ORDER).contains(&order) {
        return arg(format!("Bessel order must be in 1..={MAX_ORDER}, got {order}"));
    }
    let roots = reverse_bessel_roots(order);
    let w3 = three_db_frequency(&roots);
    let mut upper: Vec<Complex64> = roots
        .iter()
        .filter(|p| p.im > 1e-9)
        .map(|p| p / w3)
        .collect();
    upper.sort_by(|a, b| b.im.total_cmp(&a.im));
    if order % 2 == 1 {
        let real = roots
            .iter()
            .min_by(|a, b| a.im.abs().total_cmp(&b.im.abs()))
            .expect("odd order has a real root");
        upper.push(Complex64::new(real.re / w3, 0.0));
    }
    Ok(upper)
}

/// Roots of the reverse Bessel polynomial (unit group delay at DC).
fn reverse_bessel_roots(n: usize) -> Vec<Complex64> {
    // coefficient of s^k: (2n-k)! / (2^(n-k) k! (n-k)!)
    let fact = |m: usize| (1..=m).fold(1.0f64, |a, b| a * b as f64);
    let coeffs: Vec<f64> = (0..=n)
        .map(|k| fact(2 * n - k) / (2f64.powi((n - k) as i32) * fact(k) * fact(n - k)))
        .collect();
    let eval = |z: Complex64| {
        coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    };
    // Durand-Kerner on the monic polynomial
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n).map(|i| seed.powu(i as u32) * 2.0).collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let denom = (0..n)
                .filter(|&j| j != i)
                .fold(Complex64::new(1.0, 0.0), |acc, j| acc * (z[i] - z[j]));
            let step = eval(z[i]) / denom;
            z[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    z
}

fn analog_magnitude(poles: &[Complex64], w: f64) -> f64 {
    let jw = Complex64::new(0.0, w);
    poles.iter().map(|p| p.norm() / (jw - p).norm()).product()
}

fn three_db_frequency(poles: &[Complex64]) -> f64 {
    let target = std::f64::consts::FRAC_1_SQRT_2;
    let (mut lo, mut hi) = (1e-3f64, 1e3f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if analog_magnitude(poles, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Analog second-order section parameters (ω₀ in rad/s, quality factor).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalogSection {
    pub f0: f64,
    pub q: f64,
}

/// Maps one analog pole (already scaled to rad/s) to a unity-DC-gain
/// lowpass section. `fs2` is twice the sample rate.
fn lowpass_section(p: Complex64, fs2: f64) -> Sos {
    let zp = (fs2 + p) / (fs2 - p);
    if p.im == 0.0 {
        let a1 = -zp.re;
        let k = (1.0 + a1) / 2.0;
        Sos {
            b0: k,
            b1: k,
            b2: 0.0,
            a1,
            a2: 0.0,
        }
    } else {
        let a1 = -2.0 * zp.re;
        let a2 = zp.norm_sqr();
        let k = (1.0 + a1 + a2) / 4.0;
        Sos {
            b0: k,
            b1: 2.0 * k,
            b2: k,
            a1,
            a2,
        }
    }
}

fn prewarp(f3db: f64) -> f64 {
    // analog corner (rad/s, unit sample rate) that lands on f3db
    2.0 * (PI * f3db).tan()
}

fn check_corner(f3db: f64) -> Result<()> {
    if !(f3db > 0.0 && f3db < 0.5) {
        return arg(format!("corner must be in (0, 0.5) of the sample rate, got {f3db}"));
    }
    Ok(())
}

/// Discrete Bessel lowpass with its −3 dB point at `f3db` (fraction of
/// the sample rate).
pub fn design_bessel_lowpass(order: usize, f3db: f64) -> Result<FilterCascade> {
    check_corner(f3db)?;
    let wa = prewarp(f3db);
    let sections = analog_poles(order)?
        .into_iter()
        .map(|p| lowpass_section(p * wa, 2.0))
        .collect();
    FilterCascade::new(
        sections,
        DesignMeta {
            family: "bessel-lowpass".into(),
            order,
            corners: vec![f3db],
        },
    )
}

/// First-order highpass with its −3 dB point at `f3db`.
pub fn design_highpass1(f3db: f64) -> Result<FilterCascade> {
    check_corner(f3db)?;
    let wa = prewarp(f3db);
    let zp = (2.0 - wa) / (2.0 + wa);
    let k = (1.0 + zp) / 2.0;
    FilterCascade::new(
        vec![Sos {
            b0: k,
            b1: -k,
            b2: 0.0,
            a1: -zp,
            a2: 0.0,
        }],
        DesignMeta {
            family: "highpass1".into(),
            order: 1,
            corners: vec![f3db],
        },
    )
}

/// Wideband front end: 4th-order Bessel lowpass at `4·fc` cascaded with a
/// 1st-order highpass at `fc/75`. Frequencies in Hz.
pub fn design_front_end(sample_rate: f64, fc: f64) -> Result<FilterCascade> {
    if !(fc > 0.0) || sample_rate < 16.0 * fc {
        return Err(Error::Config(format!(
            "front end needs sample rate >= 16 fc (fs = {sample_rate}, fc = {fc})"
        )));
    }
    let hp = design_highpass1(fc / 75.0 / sample_rate)?;
    let lp = design_bessel_lowpass(4, 4.0 * fc / sample_rate)?;
    Ok(hp.then(&lp))
}

/// Two 2nd-order lowpass sections whose cascade is the 4th-order Bessel
/// lowpass with corner `f_target` (fraction of sample rate). The first is
/// the lower-Q pole pair (analog antialias model), the second the
/// higher-Q pair (wideband digital IIR).
pub fn design_codesigned_pair(
    f_target: f64,
) -> Result<((FilterCascade, AnalogSection), (FilterCascade, AnalogSection))> {
    if !(f_target > 0.0 && f_target <= 0.25) {
        return arg(format!(
            "co-designed pair needs an oversampled corner <= fs/4, got {f_target}"
        ));
    }
    let wa = prewarp(f_target);
    let mut poles = analog_poles(4)?;
    // lower Q first
    poles.sort_by(|a, b| (a.im / a.re).abs().total_cmp(&(b.im / b.re).abs()));
    let mut out = poles.into_iter().map(|p| {
        let p = p * wa;
        let section = AnalogSection {
            f0: p.norm() / (2.0 * PI),
            q: p.norm() / (-2.0 * p.re),
        };
        let cascade = FilterCascade::new(
            vec![lowpass_section(p, 2.0)],
            DesignMeta {
                family: "bessel4-split".into(),
                order: 2,
                corners: vec![section.f0],
            },
        )
        .expect("bilinear sections are stable");
        (cascade, section)
    });
    let first = out.next().expect("two pole pairs");
    let second = out.next().expect("two pole pairs");
    Ok((first, second))
}
