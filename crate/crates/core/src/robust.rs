//! Streaming robust statistics: the blanking function, Tukey fences,
//! quantile tracking filters (QTF) and the QTF-driven AGC that sets the
//! front-end clipper gain.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

/// Tukey's customary fence multiplier.
pub const TUKEY_BETA: f64 = 1.5;
/// Fence multiplier for high crest factor signals such as OFDM.
pub const OFDM_BETA: f64 = 3.0;

/// Blanking function: `x` inside `[alpha_minus, alpha_plus]`, zero outside.
pub fn blank(x: f64, alpha_minus: f64, alpha_plus: f64) -> Result<f64> {
    if alpha_minus > alpha_plus {
        return arg(format!("inverted fences [{alpha_minus}, {alpha_plus}]"));
    }
    Ok(if in_range(x, alpha_minus, alpha_plus) { x } else { 0.0 })
}

/// Closed-interval membership used by every blanking decision.
#[inline]
pub fn in_range(x: f64, alpha_minus: f64, alpha_plus: f64) -> bool {
    alpha_minus <= x && x <= alpha_plus
}

/// Tukey's fences `[q1 − β·IQR, q3 + β·IQR]`.
pub fn tukey_fences(q1: f64, q3: f64, beta: f64) -> Result<(f64, f64)> {
    if q1 > q3 {
        return arg(format!("first quartile {q1} exceeds third quartile {q3}"));
    }
    if !(beta > 0.0) {
        return arg(format!("fence multiplier must be positive, got {beta}"));
    }
    let iqr = q3 - q1;
    Ok((q1 - beta * iqr, q3 + beta * iqr))
}

/// Half-width `(1 + 2β)·Q*` of the symmetric range built from the median
/// of the absolute value.
pub fn symmetric_fence(q2_abs: f64, beta: f64) -> Result<f64> {
    if q2_abs < 0.0 {
        return arg(format!("median of |x| cannot be negative, got {q2_abs}"));
    }
    if !(beta > 0.0) {
        return arg(format!("fence multiplier must be positive, got {beta}"));
    }
    Ok((1.0 + 2.0 * beta) * q2_abs)
}

/// Quantile that tracks the in-symbol median of `|x|` for bursts of
/// length `ts` separated by silent gaps of length `tg`.
pub fn ofdm_quantile(ts: f64, tg: f64) -> Result<f64> {
    if !(ts > 0.0) || tg < 0.0 {
        return arg(format!("need ts > 0 and tg >= 0, got ts={ts}, tg={tg}"));
    }
    Ok(0.5 * (ts + 2.0 * tg) / (ts + tg))
}

#[inline]
fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Quantile tracking filter configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QtfConfig {
    /// Tracked quantile, strictly between 0 and 1.
    pub q: f64,
    /// Slew rate A/T, amplitude per second.
    pub mu: f64,
    /// Averaging window of the output, seconds.
    pub window: f64,
    pub initial: f64,
}

/// Slew-rate limited tracker of the `q`-th quantile of its input,
/// integrated with forward Euler, plus a moving average of its output.
#[derive(Clone, Debug)]
pub struct Qtf {
    config: QtfConfig,
    estimate: f64,
    step_size: f64,
    dt: f64,
    history: VecDeque<f64>,
    window_len: usize,
    sum: f64,
}

impl Qtf {
    pub fn new(config: QtfConfig, sample_rate: f64) -> Result<Self> {
        if !(config.q > 0.0 && config.q < 1.0) {
            return arg(format!("quantile must be in (0, 1), got {}", config.q));
        }
        if !(config.mu > 0.0) || !(sample_rate > 0.0) {
            return arg("QTF slew rate and sample rate must be positive");
        }
        let dt = 1.0 / sample_rate;
        let window_len = ((config.window * sample_rate).round() as usize).max(1);
        Ok(Self {
            config,
            estimate: config.initial,
            step_size: config.mu * dt,
            dt,
            history: VecDeque::with_capacity(window_len + 1),
            window_len,
            sum: 0.0,
        })
    }

    pub fn config(&self) -> &QtfConfig {
        &self.config
    }

    pub fn estimate(&self) -> f64 {
        self.estimate
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Moving average of the estimate over the configured window (or
    /// over all steps so far while the window is still filling).
    pub fn window_avg(&self) -> f64 {
        if self.history.is_empty() {
            self.estimate
        } else {
            self.sum / self.history.len() as f64
        }
    }

    /// One Euler step: `Q ← Q + μ·dt·[sgn(y − Q) + 2q − 1]`.
    #[inline]
    pub fn step(&mut self, y: f64) -> f64 {
        let drive = sgn(y - self.estimate) + 2.0 * self.config.q - 1.0;
        self.estimate += self.step_size * drive;
        self.history.push_back(self.estimate);
        self.sum += self.estimate;
        if self.history.len() > self.window_len {
            let old = self.history.pop_front().unwrap_or(0.0);
            self.sum -= old;
        }
        self.estimate
    }

    pub fn reset(&mut self) {
        self.estimate = self.config.initial;
        self.history.clear();
        self.sum = 0.0;
    }
}

/// Robust AGC and clipper configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgcConfig {
    /// Clip level V_c.
    pub clip_level: f64,
    /// Fence multiplier applied to the tracked median of |clipped|.
    pub beta: f64,
    /// Ratio of V_c to the symmetric fence at equilibrium.
    pub headroom: f64,
    /// QTF on |clipped|.
    pub qtf: QtfConfig,
    /// Loop adaptation rate, 1/second.
    pub rate: f64,
    pub initial_gain: f64,
}

impl AgcConfig {
    /// Defaults for bursts of length `ts` with gaps `tg`: β = 3, 25%
    /// headroom, μ = V_c/(10·(ts+tg)), one-period averaging window and
    /// adaptation rate 1/(ts+tg). The QTF starts at its equilibrium value.
    pub fn for_bursts(clip_level: f64, ts: f64, tg: f64, initial_gain: f64) -> Result<Self> {
        let period = ts + tg;
        let mut cfg = Self {
            clip_level,
            beta: OFDM_BETA,
            headroom: 1.25,
            qtf: QtfConfig {
                q: ofdm_quantile(ts, tg)?,
                mu: 0.1 * clip_level / period,
                window: period,
                initial: 0.0,
            },
            rate: 1.0 / period,
            initial_gain,
        };
        cfg.qtf.initial = cfg.target();
        Ok(cfg)
    }

    /// Equilibrium value of the tracked |clipped| quantile.
    pub fn target(&self) -> f64 {
        self.clip_level / ((1.0 + 2.0 * self.beta) * self.headroom)
    }
}

/// Variable-gain amplifier, hard clipper at ±V_c and the QTF loop that
/// sets the gain.
#[derive(Clone, Debug)]
pub struct Agc {
    config: AgcConfig,
    gain: f64,
    qtf: Qtf,
    log_step: f64,
    target: f64,
}

/// Lower bound on the averaged QTF output in the gain update.
const AVG_FLOOR: f64 = 1e-12;

impl Agc {
    pub fn new(config: AgcConfig, sample_rate: f64) -> Result<Self> {
        if !(config.clip_level > 0.0) || !(config.initial_gain > 0.0) {
            return arg("clip level and initial gain must be positive");
        }
        if !(config.headroom > 0.0) || !(config.beta > 0.0) || config.rate < 0.0 {
            return arg("AGC headroom, beta must be positive and rate non-negative");
        }
        let qtf = Qtf::new(config.qtf, sample_rate)?;
        Ok(Self {
            log_step: config.rate / sample_rate,
            target: config.target(),
            gain: config.initial_gain,
            qtf,
            config,
        })
    }

    pub fn config(&self) -> &AgcConfig {
        &self.config
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn qtf(&self) -> &Qtf {
        &self.qtf
    }

    /// Amplify, clip, update the QTF with `|clipped|`, then move the gain
    /// multiplicatively toward `target / window_avg`. Returns the clipped
    /// sample and the gain that was applied to it.
    #[inline]
    pub fn step(&mut self, x: f64) -> (f64, f64) {
        let vc = self.config.clip_level;
        let applied = self.gain;
        let clipped = (applied * x).clamp(-vc, vc);
        self.qtf.step(clipped.abs());
        let avg = self.qtf.window_avg().max(AVG_FLOOR);
        self.gain *= (self.log_step * (self.target / avg).ln()).exp();
        (clipped, applied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::RngSpec;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngSpec::new(seed, 0).rng();
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn blank_examples() {
        assert_eq!(blank(0.5, -1.0, 1.0).unwrap(), 0.5);
        assert_eq!(blank(2.0, -1.0, 1.0).unwrap(), 0.0);
        assert_eq!(blank(1.0, -1.0, 1.0).unwrap(), 1.0);
        assert_eq!(blank(-1.0, -1.0, 1.0).unwrap(), -1.0);
        assert!(blank(0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn tukey_examples() {
        assert_eq!(tukey_fences(0.0, 0.0, 1.5).unwrap(), (0.0, 0.0));
        assert_eq!(tukey_fences(-1.0, 1.0, 1.5).unwrap(), (-4.0, 4.0));
        assert!(tukey_fences(1.0, -1.0, 1.5).is_err());
        assert!(tukey_fences(-1.0, 1.0, 0.0).is_err());
        assert_eq!(TUKEY_BETA, 1.5);
    }

    #[test]
    fn symmetric_fence_examples() {
        assert_eq!(symmetric_fence(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(symmetric_fence(1.0, 3.0).unwrap(), 7.0);
        assert_eq!(symmetric_fence(0.5, 1.5).unwrap(), 2.0);
        assert!(symmetric_fence(-0.1, 3.0).is_err());
    }

    #[test]
    fn ofdm_quantile_examples() {
        assert_eq!(ofdm_quantile(1.0, 0.0).unwrap(), 0.5);
        let q = ofdm_quantile(1.0, 0.46).unwrap();
        assert!((q - 1.92 / 2.92).abs() < 1e-15);
        assert!((q - 0.6575).abs() < 1e-4);
        let q_big = ofdm_quantile(1.0, 1e12).unwrap();
        assert!(q_big < 1.0 && q_big > 0.999_999);
        assert!(ofdm_quantile(0.0, 1.0).is_err());
        assert!(ofdm_quantile(1.0, -1.0).is_err());
    }

    fn qtf(q: f64, mu: f64, initial: f64) -> Qtf {
        Qtf::new(
            QtfConfig {
                q,
                mu,
                window: 100.0,
                initial,
            },
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn qtf_step_examples() {
        let mut f = qtf(0.5, 0.01, 0.3);
        assert_eq!(f.step(0.3), 0.3);
        let mut f = qtf(0.5, 0.01, 0.3);
        assert!((f.step(5.0) - 0.31).abs() < 1e-15);
        assert!(Qtf::new(
            QtfConfig {
                q: 1.0,
                mu: 1.0,
                window: 1.0,
                initial: 0.0
            },
            1.0
        )
        .is_err());
    }

    #[test]
    fn qtf_tracks_gaussian_quartile() {
        let x = gaussian(400_000, 11);
        let mut f = qtf(0.75, 0.002, 0.0);
        let mut acc = 0.0;
        let mut n = 0;
        for (k, &v) in x.iter().enumerate() {
            f.step(v);
            if k >= 50_000 {
                acc += f.estimate();
                n += 1;
            }
        }
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        let oracle = sorted[(0.75 * sorted.len() as f64) as usize];
        let mean = acc / n as f64;
        assert!((mean - oracle).abs() < 0.05, "{mean} vs {oracle}");
        assert!((oracle - 0.674).abs() < 0.01);
    }

    #[test]
    fn qtf_converges_from_several_starts() {
        let x = gaussian(200_000, 12);
        for init in [0.0, 0.5, -0.5, 1.0, -1.0] {
            let mut f = qtf(0.5, 0.002, init);
            x.iter().for_each(|&v| {
                f.step(v);
            });
            assert!(f.window_avg().abs() < 0.05, "start {init}");
        }
    }

    #[test]
    fn qtf_bounded_influence_of_sparse_outliers() {
        let clean = gaussian(300_000, 13);
        let mut dirty = clean.clone();
        for k in (0..dirty.len()).step_by(150) {
            dirty[k] = 1e6;
        }
        let mu = 0.002;
        let run = |x: &[f64]| {
            let mut f = qtf(0.5, mu, 0.0);
            let mut acc = 0.0;
            for (k, &v) in x.iter().enumerate() {
                f.step(v);
                if k >= 100_000 {
                    acc += f.estimate();
                }
            }
            acc / (x.len() - 100_000) as f64
        };
        // each outlier can move the estimate by at most 2·μ·dt; with ≤1%
        // contamination the median shifts by about the 0.5%-quantile offset
        let shift = (run(&dirty) - run(&clean)).abs();
        assert!(shift < 0.03, "{shift}");
    }

    proptest! {
        #[test]
        fn qtf_slew_is_bounded(ys in prop::collection::vec(-1e6f64..1e6, 1..200), q in 0.01f64..0.99) {
            let mu = 0.37;
            let mut f = qtf(q, mu, 0.0);
            let mut prev = f.estimate();
            for y in ys {
                let next = f.step(y);
                prop_assert!((next - prev).abs() <= 2.0 * mu + 1e-12);
                prev = next;
            }
        }

        #[test]
        fn window_avg_within_window_extrema(ys in prop::collection::vec(-10f64..10.0, 1..400)) {
            let mut f = Qtf::new(QtfConfig { q: 0.3, mu: 0.5, window: 17.0, initial: 0.0 }, 1.0).unwrap();
            let mut trace = Vec::new();
            for y in ys {
                trace.push(f.step(y));
                let w = &trace[trace.len().saturating_sub(17)..];
                let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(f.window_avg() >= lo - 1e-9 && f.window_avg() <= hi + 1e-9);
            }
        }

        #[test]
        fn blank_is_odd_for_symmetric_fences(x in -100f64..100.0, a in 0f64..50.0) {
            prop_assert_eq!(blank(-x, -a, a).unwrap(), -blank(x, -a, a).unwrap());
        }
    }

    #[test]
    fn qtf_exceedance_matches_quantile() {
        let x = gaussian(300_000, 14);
        for q in [0.5, 0.6575, 0.75] {
            let mut f = qtf(q, 0.002, 0.0);
            let mut above = 0usize;
            let mut n = 0usize;
            for (k, &v) in x.iter().enumerate() {
                if k >= 100_000 {
                    above += (v > f.estimate()) as usize;
                    n += 1;
                }
                f.step(v);
            }
            let frac = above as f64 / n as f64;
            assert!((frac - (1.0 - q)).abs() < 0.03, "q={q}: {frac}");
        }
    }

    fn agc(rate: f64) -> Agc {
        Agc::new(
            AgcConfig {
                clip_level: 1.0,
                beta: 3.0,
                headroom: 1.25,
                qtf: QtfConfig {
                    q: 0.5,
                    mu: 1e-3,
                    window: 200.0,
                    initial: 0.0,
                },
                rate,
                initial_gain: 0.2,
            },
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn agc_in_range_passes_scaled_input() {
        let mut a = agc(0.0);
        for x in [0.1, -0.5, 2.0, -4.9] {
            let (y, g) = a.step(x);
            assert_eq!(g, 0.2);
            assert_eq!(y, 0.2 * x);
        }
    }

    #[test]
    fn agc_hard_limits() {
        let mut a = agc(1e-3);
        for _ in 0..1000 {
            let (y, _) = a.step(1e9);
            assert_eq!(y, 1.0);
            let (y, _) = a.step(-1e9);
            assert_eq!(y, -1.0);
        }
    }

    #[test]
    fn agc_converges_to_target_median() {
        let x = gaussian(400_000, 15);
        let mut a = agc(2e-3);
        let mut out = Vec::new();
        for &v in &x {
            out.push(a.step(v).0.abs());
        }
        let tail = &mut out[200_000..];
        tail.sort_by(f64::total_cmp);
        let median = tail[tail.len() / 2];
        let target = a.config().target();
        assert!((median / target - 1.0).abs() < 0.05, "{median} vs {target}");
        // β = 3 with 25% headroom leaves Gaussian input essentially unclipped
        assert!(tail.iter().filter(|&&v| v >= 1.0).count() <= 2);
    }

    #[test]
    fn agc_is_scale_equivariant() {
        let x = gaussian(400_000, 16);
        let run = |c: f64| {
            let mut a = agc(2e-3);
            let y: Vec<f64> = x.iter().map(|&v| a.step(c * v).0).collect();
            (a.gain(), y)
        };
        let (g1, y1) = run(1.0);
        let (g2, y2) = run(8.0);
        assert!((g2 * 8.0 / g1 - 1.0).abs() < 0.01);
        let tail = 300_000;
        let err: f64 = y1[tail..].iter().zip(&y2[tail..]).map(|(a, b)| (a - b).powi(2)).sum();
        let pow: f64 = y1[tail..].iter().map(|a| a * a).sum();
        assert!((err / pow).sqrt() < 0.01);
    }
}
