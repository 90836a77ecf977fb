//! Second-order-section cascades and their analytic responses.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::signal::Processor;

/// Normalized biquad coefficients, `a0 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sos {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Sos {
    pub const IDENTITY: Sos = Sos {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    pub fn as_array(&self) -> [f64; 5] {
        [self.b0, self.b1, self.b2, self.a1, self.a2]
    }

    /// Both poles strictly inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    fn poly(c: [f64; 3], z1: Complex64) -> Complex64 {
        c[0] + z1 * (c[1] + z1 * c[2])
    }

    /// Response at normalized frequency `f` (cycles per sample).
    pub fn response(&self, f: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f);
        Self::poly([self.b0, self.b1, self.b2], z1) / Self::poly([1.0, self.a1, self.a2], z1)
    }

    /// Group delay in samples at normalized frequency `f`.
    pub fn group_delay(&self, f: f64) -> f64 {
        fn gd(c: [f64; 3], f: f64) -> f64 {
            let z1 = Complex64::from_polar(1.0, -2.0 * PI * f);
            let p = Sos::poly(c, z1);
            let dp = z1 * (c[1] + 2.0 * c[2] * z1);
            if p.norm_sqr() == 0.0 {
                return 0.0;
            }
            (dp / p).re
        }
        gd([self.b0, self.b1, self.b2], f) - gd([1.0, self.a1, self.a2], f)
    }
}

/// Design metadata of a filter, carried into run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignMeta {
    pub family: String,
    pub order: usize,
    /// Corner frequencies as fractions of the sample rate.
    pub corners: Vec<f64>,
}

/// A cascade of biquads run in transposed direct form II.
#[derive(Clone, Debug)]
pub struct FilterCascade {
    sections: Vec<Sos>,
    state: Vec<[f64; 2]>,
    meta: DesignMeta,
}

impl FilterCascade {
    /// Builds a cascade, rejecting any unstable section.
    pub fn new(sections: Vec<Sos>, meta: DesignMeta) -> Result<Self> {
        if let Some((i, s)) = sections.iter().enumerate().find(|(_, s)| !s.is_stable()) {
            return Err(Error::Config(format!(
                "section {i} is unstable: a1={}, a2={}",
                s.a1, s.a2
            )));
        }
        if sections.iter().flat_map(|s| s.as_array()).any(|c| !c.is_finite()) {
            return arg("non-finite filter coefficient");
        }
        let state = vec![[0.0; 2]; sections.len()];
        Ok(Self {
            sections,
            state,
            meta,
        })
    }

    /// A single unity section.
    pub fn identity() -> Self {
        Self::new(
            vec![Sos::IDENTITY],
            DesignMeta {
                family: "identity".into(),
                order: 0,
                corners: vec![],
            },
        )
        .expect("identity is stable")
    }

    pub fn sections(&self) -> &[Sos] {
        &self.sections
    }

    pub fn meta(&self) -> &DesignMeta {
        &self.meta
    }

    /// Series connection of `self` followed by `other`.
    pub fn then(&self, other: &FilterCascade) -> FilterCascade {
        let mut sections = self.sections.clone();
        sections.extend_from_slice(&other.sections);
        let mut corners = self.meta.corners.clone();
        corners.extend_from_slice(&other.meta.corners);
        FilterCascade::new(
            sections,
            DesignMeta {
                family: format!("{}+{}", self.meta.family, other.meta.family),
                order: self.meta.order + other.meta.order,
                corners,
            },
        )
        .expect("sections already validated")
    }

    pub fn response(&self, f: f64) -> Complex64 {
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |h, s| h * s.response(f))
    }

    pub fn magnitude(&self, f: f64) -> f64 {
        self.response(f).norm()
    }

    pub fn magnitude_db(&self, f: f64) -> f64 {
        20.0 * self.magnitude(f).log10()
    }

    pub fn group_delay(&self, f: f64) -> f64 {
        self.sections.iter().map(|s| s.group_delay(f)).sum()
    }

    /// First `n` samples of the impulse response, from zero state.
    pub fn impulse_response(&self, n: usize) -> Vec<f64> {
        let mut fresh = self.clone();
        fresh.reset();
        (0..n)
            .map(|k| fresh.process_sample(if k == 0 { 1.0 } else { 0.0 }))
            .collect()
    }
}

impl Processor for FilterCascade {
    #[inline]
    fn process_sample(&mut self, x: f64) -> f64 {
        let mut v = x;
        for (s, z) in self.sections.iter().zip(self.state.iter_mut()) {
            let y = s.b0 * v + z[0];
            z[0] = s.b1 * v - s.a1 * y + z[1];
            z[1] = s.b2 * v - s.a2 * y;
            v = y;
        }
        v
    }

    fn reset(&mut self) {
        self.state.iter_mut().for_each(|z| *z = [0.0; 2]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SampleStream;
    use proptest::prelude::*;

    fn resonator() -> FilterCascade {
        FilterCascade::new(
            vec![
                Sos {
                    b0: 0.2,
                    b1: 0.1,
                    b2: -0.05,
                    a1: -1.2,
                    a2: 0.5,
                },
                Sos {
                    b0: 1.0,
                    b1: 0.5,
                    b2: 0.0,
                    a1: 0.3,
                    a2: 0.0,
                },
            ],
            DesignMeta {
                family: "test".into(),
                order: 3,
                corners: vec![],
            },
        )
        .unwrap()
    }

    #[test]
    fn identity_passes_input() {
        let x = SampleStream::new((0..50).map(|i| (i as f64).cos()).collect(), 1.0).unwrap();
        assert_eq!(FilterCascade::identity().run(&x), x);
    }

    #[test]
    fn rejects_unstable_sections() {
        let bad = Sos {
            a1: -2.1,
            a2: 1.05,
            ..Sos::IDENTITY
        };
        assert!(FilterCascade::new(vec![bad], resonator().meta().clone()).is_err());
    }

    #[test]
    fn impulse_run_reproduces_impulse_response() {
        let mut f = resonator();
        let h = f.impulse_response(256);
        let out = f.run(&SampleStream::impulse(256, 0, 1.0).unwrap());
        for (a, b) in h.iter().zip(out.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn state_carries_across_blocks() {
        let x: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 113) as f64 - 56.0).collect();
        let whole = resonator().run(&SampleStream::new(x.clone(), 1.0).unwrap());
        let mut f = resonator();
        let mut pieces = Vec::new();
        for chunk in x.chunks(37) {
            let mut out = vec![0.0; chunk.len()];
            f.process_block(chunk, &mut out);
            pieces.extend(out);
        }
        assert_eq!(whole.samples(), &pieces[..]);
    }

    #[test]
    fn response_matches_dft_of_impulse_response() {
        let f = resonator();
        let h = f.impulse_response(4000);
        for &freq in &[0.0, 0.05, 0.21, 0.4] {
            let dft: Complex64 = h
                .iter()
                .enumerate()
                .map(|(k, v)| v * Complex64::from_polar(1.0, -2.0 * PI * freq * k as f64))
                .sum();
            assert!((dft - f.response(freq)).norm() < 1e-9);
        }
    }

    #[test]
    fn group_delay_matches_phase_derivative() {
        let f = resonator();
        for &freq in &[0.01, 0.1, 0.3] {
            let df = 1e-6;
            let dphi = (f.response(freq + df) / f.response(freq - df)).arg();
            let numeric = -dphi / (2.0 * PI * 2.0 * df);
            assert!((numeric - f.group_delay(freq)).abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn run_is_linear(
            pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..300),
            g in -3.0f64..3.0,
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let sa = SampleStream::new(a.clone(), 1.0).unwrap();
            let sb = SampleStream::new(b.clone(), 1.0).unwrap();
            let sum = crate::signal::mix(&sa, &sb, g).unwrap();
            let ya = resonator().run(&sa);
            let yb = resonator().run(&sb);
            let ysum = resonator().run(&sum);
            let scale = ysum.samples().iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for k in 0..a.len() {
                let lin = ya.samples()[k] + g * yb.samples()[k];
                prop_assert!((lin - ysum.samples()[k]).abs() <= 1e-10 * scale);
            }
        }
    }
}
