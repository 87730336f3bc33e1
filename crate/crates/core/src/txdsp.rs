//! Transmitter DSP: root-raised-cosine Nyquist shaping and rational
//! resampling onto the DAC grid.
//!
//! The shaped waveform is one period of the cyclically replayed frame, so
//! shaping is circular and sample 0 sits on the centre of symbol 0.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::signal::{integer_hz, RateRatio, SampledWaveform};

pub const MIN_RRC_SPAN: usize = 8;

/// Root-raised-cosine impulse response at `t` symbol periods, unit symbol
/// period, not normalized. `t = 0` and `|t| = 1/(4 beta)` use their limits.
pub fn rrc_impulse(t: f64, beta: f64) -> f64 {
    if t == 0.0 {
        return 1.0 + beta * (4.0 / PI - 1.0);
    }
    let x = 4.0 * beta * t;
    if (1.0 - x * x).abs() < 1e-10 {
        let a = PI / (4.0 * beta);
        return beta * FRAC_1_SQRT_2 * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + x * (PI * t * (1.0 + beta)).cos();
    num / (PI * t * (1.0 - x * x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrcFilter {
    pub rolloff: f64,
    /// Filter length in symbols.
    pub span: usize,
    pub sps: usize,
    /// `span * sps + 1` taps, unit energy.
    pub taps: Vec<f64>,
}

impl RrcFilter {
    pub fn center(&self) -> usize {
        (self.taps.len() - 1) / 2
    }
}

pub fn rrc_taps(rolloff: f64, sps: usize, span: usize) -> Result<RrcFilter> {
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::invalid(format!("roll-off {rolloff} outside (0, 1]")));
    }
    if sps == 0 {
        return Err(Error::invalid("samples per symbol must be >= 1"));
    }
    if span < MIN_RRC_SPAN {
        return Err(Error::invalid(format!(
            "span {span} symbols cannot hold the RRC main lobe (need >= {MIN_RRC_SPAN})"
        )));
    }
    let c = (span * sps / 2) as i64;
    let mut taps: Vec<f64> = (-c..=c).map(|n| rrc_impulse(n as f64 / sps as f64, rolloff)).collect();
    let norm = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
    for h in &mut taps {
        *h /= norm;
    }
    Ok(RrcFilter {
        rolloff,
        span,
        sps,
        taps,
    })
}

/// Zero-insertion by `up` followed by circular RRC filtering; output rate is
/// `baud * up`. This materializes the full intermediate grid and is meant for
/// analysis; [`shape_to_rate`] is the production path.
pub fn upsample_and_shape(levels: &[f64], baud: f64, up: usize, rrc: &RrcFilter) -> Result<SampledWaveform> {
    if rrc.sps != up {
        return Err(Error::invalid(format!(
            "RRC built for {} sps but up-sampling by {up}",
            rrc.sps
        )));
    }
    let mut grid = vec![0.0; levels.len() * up];
    for (k, &s) in levels.iter().enumerate() {
        grid[k * up] = s;
    }
    let samples = if grid.len() >= rrc.taps.len() {
        dsp::circular_convolve_centered(&grid, &rrc.taps)?
    } else {
        circular_small(&grid, &rrc.taps)
    };
    SampledWaveform::new(samples, baud * up as f64)
}

// Kernel longer than the period: fold it onto the circle directly.
fn circular_small(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len() as i64;
    let c = ((h.len() - 1) / 2) as i64;
    let mut y = vec![0.0; x.len()];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (j, &hj) in h.iter().enumerate() {
            let idx = (i as i64 + j as i64 - c).rem_euclid(n) as usize;
            y[idx] += xi * hj;
        }
    }
    y
}

/// Keeps every `down`-th sample. Fails if a signal occupying
/// `baud * (1 + rolloff) / 2` would alias at the reduced rate.
pub fn downsample(wave: &SampledWaveform, down: usize, baud: f64, rolloff: f64) -> Result<SampledWaveform> {
    if down == 0 {
        return Err(Error::invalid("decimation factor must be >= 1"));
    }
    let new_rate = wave.sample_rate / down as f64;
    check_occupancy(baud, rolloff, new_rate)?;
    let samples = wave.samples.iter().step_by(down).copied().collect();
    SampledWaveform::new(samples, new_rate)
}

fn check_occupancy(baud: f64, rolloff: f64, rate: f64) -> Result<()> {
    let occupied = baud * (1.0 + rolloff) / 2.0;
    if occupied > rate / 2.0 {
        return Err(Error::Aliasing {
            occupied_hz: occupied,
            nyquist_hz: rate / 2.0,
        });
    }
    Ok(())
}

/// Polyphase rational shaper: equivalent to up-sampling the symbols by `up`,
/// RRC filtering at `up` samples per symbol and keeping every `down`-th
/// sample, where `up / down = out_rate / baud` in lowest terms. Only the kept
/// samples are computed.
#[derive(Debug, Clone)]
pub struct RationalShaper {
    pub ratio: RateRatio,
    pub rrc: RrcFilter,
    baud: f64,
    out_rate: f64,
}

impl RationalShaper {
    pub fn new(baud: f64, out_rate: f64, rolloff: f64, span: usize) -> Result<Self> {
        let ratio = RateRatio::between(baud, out_rate)?;
        check_occupancy(baud, rolloff, out_rate)?;
        let rrc = rrc_taps(rolloff, ratio.up as usize, span)?;
        integer_hz(baud)?;
        Ok(Self {
            ratio,
            rrc,
            baud,
            out_rate,
        })
    }

    /// Number of output samples produced for `n_symbols`, if integral.
    pub fn output_len(&self, n_symbols: usize) -> Option<usize> {
        let num = n_symbols * self.ratio.up as usize;
        num.is_multiple_of(self.ratio.down as usize)
            .then(|| num / self.ratio.down as usize)
    }

    /// Shapes one period of `levels`; the result is one period on the output grid.
    pub fn shape(&self, levels: &[f64]) -> Result<SampledWaveform> {
        let n = levels.len();
        let out_len = self.output_len(n).ok_or_else(|| {
            Error::invalid(format!(
                "{n} symbols do not map to a whole number of samples at ratio {}/{}",
                self.ratio.up, self.ratio.down
            ))
        })?;
        let up = self.ratio.up as i64;
        let down = self.ratio.down as i64;
        let taps = &self.rrc.taps;
        let c = ((taps.len() - 1) / 2) as i64;
        let period = n as i64;
        let mut out = Vec::with_capacity(out_len);
        for m in 0..out_len as i64 {
            let t = m * down;
            let k_lo = (t - c).div_euclid(up) + i64::from((t - c).rem_euclid(up) != 0);
            let k_hi = (t + c).div_euclid(up);
            let mut acc = 0.0;
            let mut idx = k_lo.rem_euclid(period) as usize;
            let mut tap = (c + t - k_lo * up) as usize;
            for _ in k_lo..=k_hi {
                acc += levels[idx] * taps[tap];
                idx += 1;
                if idx == n {
                    idx = 0;
                }
                tap = tap.wrapping_sub(up as usize);
            }
            out.push(acc);
        }
        SampledWaveform::new(out, self.out_rate)
    }

    pub fn baud(&self) -> f64 {
        self.baud
    }
}

/// Shapes `levels` at `baud` onto a grid at `out_rate`.
pub fn shape_to_rate(levels: &[f64], baud: f64, out_rate: f64, rolloff: f64, span: usize) -> Result<SampledWaveform> {
    RationalShaper::new(baud, out_rate, rolloff, span)?.shape(levels)
}

/// AWG amplitude model. The default configuration is a bit-exact passthrough.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DacConfig {
    /// Clip level as a fraction of the waveform peak.
    pub clip_ratio: f64,
    /// Quantizer resolution; `None` disables quantization.
    pub n_bits: Option<u32>,
}

impl Default for DacConfig {
    fn default() -> Self {
        Self {
            clip_ratio: 1.0,
            n_bits: None,
        }
    }
}

impl DacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_ratio > 0.0 && self.clip_ratio <= 1.0) {
            return Err(Error::invalid(format!("clip ratio {} outside (0, 1]", self.clip_ratio)));
        }
        if let Some(b) = self.n_bits {
            if !(4..=10).contains(&b) {
                return Err(Error::invalid(format!("DAC resolution {b} bits outside [4, 10]")));
            }
        }
        Ok(())
    }

    pub fn is_passthrough(&self) -> bool {
        self.clip_ratio == 1.0 && self.n_bits.is_none()
    }
}

/// Clips to `clip_ratio * peak` and applies a mid-rise uniform quantizer with
/// `2^n_bits` levels spanning the clip range.
pub fn dac_model(wave: &SampledWaveform, cfg: &DacConfig) -> Result<SampledWaveform> {
    cfg.validate()?;
    if cfg.is_passthrough() {
        return Ok(wave.clone());
    }
    let peak = wave.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return Ok(wave.clone());
    }
    let full_scale = cfg.clip_ratio * peak;
    let samples = wave
        .samples
        .iter()
        .map(|&s| {
            let clipped = s.clamp(-full_scale, full_scale);
            match cfg.n_bits {
                None => clipped,
                Some(bits) => {
                    let levels = (1u64 << bits) as f64;
                    let step = 2.0 * full_scale / levels;
                    let idx = (clipped / step).floor().clamp(-levels / 2.0, levels / 2.0 - 1.0);
                    (idx + 0.5) * step
                }
            }
        })
        .collect();
    SampledWaveform::new(samples, wave.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Matched-pair response sampled at symbol instants, by direct
    /// self-convolution of the taps.
    fn symbol_spaced_isi(rrc: &RrcFilter) -> (f64, f64) {
        let g = dsp::convolve(&rrc.taps, &rrc.taps);
        let c = (g.len() - 1) / 2;
        let mut worst = 0.0f64;
        let mut k = rrc.sps;
        while k <= c {
            worst = worst.max(g[c + k].abs()).max(g[c - k].abs());
            k += rrc.sps;
        }
        (g[c], worst)
    }

    #[test]
    fn nyquist_pair_meets_tolerance_at_default_span() {
        for sps in [2, 23] {
            let rrc = rrc_taps(0.01, sps, 256).unwrap();
            let (center, isi) = symbol_spaced_isi(&rrc);
            assert!((center - 1.0).abs() < 1e-12);
            assert!(isi < 1e-3, "sps {sps}: {isi}");
        }
    }

    #[test]
    fn truncation_isi_at_span_64_is_about_one_percent() {
        // A closed-form RRC with beta = 0.01 cut to 64 symbols leaves
        // ~1.3e-2 symbol-instant ISI in the matched pair.
        let rrc = rrc_taps(0.01, 2, 64).unwrap();
        let (_, isi) = symbol_spaced_isi(&rrc);
        assert!(isi > 1e-2 && isi < 1.5e-2, "{isi}");
    }

    #[test]
    fn singular_point_matches_limit() {
        let beta = 1.0;
        let ts = 1.0 / (4.0 * beta);
        let analytic = rrc_impulse(ts, beta);
        for eps in [1e-4, 1e-5] {
            let limit = 0.5 * (rrc_impulse(ts + eps, beta) + rrc_impulse(ts - eps, beta));
            assert!((analytic - limit).abs() < 1e-6, "{analytic} vs {limit}");
        }
        // The sampled filter at sps = 4 lands exactly on t = 1/4.
        let rrc = rrc_taps(beta, 4, 8).unwrap();
        let c = rrc.center();
        let scale = rrc.taps[c] / rrc_impulse(0.0, beta);
        assert!((rrc.taps[c + 1] / scale - analytic).abs() < 1e-12);
        assert!((rrc.taps[c - 1] / scale - analytic).abs() < 1e-12);
    }

    #[test]
    fn taps_symmetric_and_odd() {
        let rrc = rrc_taps(0.01, 23, 64).unwrap();
        assert_eq!(rrc.taps.len() % 2, 1);
        let rev: Vec<f64> = rrc.taps.iter().rev().copied().collect();
        assert_eq!(rev, rrc.taps);
        let energy: f64 = rrc.taps.iter().map(|h| h * h).sum();
        assert!((energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_rrc_arguments() {
        assert!(rrc_taps(0.0, 2, 64).is_err());
        assert!(rrc_taps(1.5, 2, 64).is_err());
        assert!(rrc_taps(0.5, 2, 7).is_err());
        assert!(rrc_taps(0.5, 0, 64).is_err());
    }

    #[test]
    fn single_symbol_gives_impulse_response() {
        let rrc = rrc_taps(0.25, 4, 8).unwrap();
        // Symbol +1 followed by enough silence to hold the whole response.
        let mut levels = vec![0.0; 16];
        levels[0] = 1.0;
        let w = upsample_and_shape(&levels, 1e9, 4, &rrc).unwrap();
        let n = w.len() as i64;
        let c = rrc.center() as i64;
        for (j, &h) in rrc.taps.iter().enumerate() {
            let idx = (j as i64 - c).rem_euclid(n) as usize;
            assert!((w.samples[idx] - h).abs() < 1e-12);
        }
        assert_eq!(w.sample_rate, 4e9);
    }

    #[test]
    fn shaped_energy_matches_symbol_energy() {
        let levels: Vec<f64> = (0..4000)
            .map(|i| [-3.0, -1.0, 1.0, 3.0][((i * 2654435761usize) >> 7) % 4])
            .collect();
        let rrc = rrc_taps(0.01, 23, 64).unwrap();
        let w = upsample_and_shape(&levels, 80e9, 23, &rrc).unwrap();
        let e_wave: f64 = w.samples.iter().map(|s| s * s).sum();
        let e_sym: f64 = levels.iter().map(|s| s * s).sum();
        assert!((e_wave / e_sym - 1.0).abs() < 0.01, "{}", e_wave / e_sym);
    }

    #[test]
    fn polyphase_equals_upsample_then_decimate() {
        let levels: Vec<f64> = (0..400).map(|i| [-3.0, -1.0, 1.0, 3.0][(i * 7 + i / 3) % 4]).collect();
        let shaper = RationalShaper::new(80e9, 92e9, 0.01, 64).unwrap();
        assert_eq!(shaper.ratio, RateRatio { up: 23, down: 20 });
        let fast = shaper.shape(&levels).unwrap();
        let full = upsample_and_shape(&levels, 80e9, 23, &shaper.rrc).unwrap();
        assert!((full.sample_rate - 1840e9).abs() < 1.0);
        let slow = downsample(&full, 20, 80e9, 0.01).unwrap();
        assert_eq!(fast.sample_rate, 92e9);
        assert_eq!(slow.sample_rate, 92e9);
        assert_eq!(fast.len(), slow.len());
        let err = fast
            .samples
            .iter()
            .zip(&slow.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn rate_84g_uses_23_over_21() {
        let shaper = RationalShaper::new(84e9, 92e9, 0.01, 64).unwrap();
        assert_eq!(shaper.ratio, RateRatio { up: 23, down: 21 });
        assert_eq!(shaper.output_len(21), Some(23));
        assert_eq!(shaper.output_len(20), None);
    }

    #[test]
    fn decimation_aliasing_rejected() {
        let w = SampledWaveform::new(vec![0.0; 100], 160e9).unwrap();
        assert!(matches!(downsample(&w, 2, 80e9, 0.01), Err(Error::Aliasing { .. })));
        let same = downsample(&w, 1, 80e9, 0.01).unwrap();
        assert_eq!(same, w);
    }

    #[test]
    fn dac_passthrough_and_sqnr() {
        let n = 4096;
        let w = SampledWaveform::new(
            (0..n).map(|i| (2.0 * PI * 61.0 * i as f64 / n as f64).sin()).collect(),
            92e9,
        )
        .unwrap();
        assert_eq!(dac_model(&w, &DacConfig::default()).unwrap(), w);
        let q = dac_model(
            &w,
            &DacConfig {
                clip_ratio: 1.0,
                n_bits: Some(8),
            },
        )
        .unwrap();
        let sig: f64 = w.samples.iter().map(|s| s * s).sum();
        let noise: f64 = w.samples.iter().zip(&q.samples).map(|(a, b)| (a - b).powi(2)).sum();
        let sqnr = 10.0 * (sig / noise).log10();
        let ideal = 6.02 * 8.0 + 1.76;
        assert!((sqnr - ideal).abs() < 3.0, "{sqnr} vs {ideal}");
        assert!(dac_model(
            &w,
            &DacConfig {
                clip_ratio: 1.0,
                n_bits: Some(12)
            }
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn shaping_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0usize..1000) {
            let x: Vec<f64> = (0..60).map(|i| ((i * 31 + seed) % 7) as f64 - 3.0).collect();
            let y: Vec<f64> = (0..60).map(|i| ((i * 17 + seed * 3) % 5) as f64 - 2.0).collect();
            let shaper = RationalShaper::new(80e9, 92e9, 0.01, 16).unwrap();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = shaper.shape(&mix).unwrap();
            let sx = shaper.shape(&x).unwrap();
            let sy = shaper.shape(&y).unwrap();
            for i in 0..lhs.len() {
                let rhs = a * sx.samples[i] + b * sy.samples[i];
                prop_assert!((lhs.samples[i] - rhs).abs() < 1e-10);
            }
        }
    }
}
