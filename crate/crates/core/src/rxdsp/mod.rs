//! Receiver DSP: 2-SPS front end, synchronization, equalization and detection.

pub mod equalizer;
pub mod mlsd;
pub mod sync;

use serde::{Deserialize, Serialize};

use crate::channel::resample_to_rate;
use crate::dsp;
use crate::error::{Error, Result};
use crate::framing::{FrameLayout, Pam4Symbol, Preamble};
use crate::signal::SampledWaveform;
use crate::txdsp::{rrc_taps, DacConfig, RrcFilter};

pub use equalizer::{dd_rls_track, equalize, rls_train, DdOutput, DdParams, EqualizerState, RlsParams};
pub use mlsd::{mlsd_viterbi, post_filter, slice, slice_and_demap, MlsdOutput};
pub use sync::{synchronize, SyncResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualizerMode {
    /// RLS-trained fractionally spaced FFE.
    Rls,
    /// Single least-squares gain fitted on the training symbols.
    None,
}

/// Transmitter and receiver DSP settings shared by both ends of the link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub layout: FrameLayout,
    pub preamble_seed: u64,
    pub rolloff: f64,
    /// RRC length in symbols, used on both ends.
    pub rrc_span: usize,
    pub dac: DacConfig,
    pub equalizer: EqualizerMode,
    pub ffe_taps: usize,
    pub ffe_forgetting: f64,
    pub ffe_delta: f64,
    pub dd_rls: bool,
    pub dd_taps: usize,
    pub dd_forgetting: f64,
    /// `None` starts the tracker in steady state.
    pub dd_delta: Option<f64>,
    pub dd_window: usize,
    /// Post filter + MLSD stage.
    pub mlsd: bool,
    pub alpha: f64,
    pub psr_threshold: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            layout: FrameLayout::default(),
            preamble_seed: 0x5eed,
            rolloff: 0.01,
            rrc_span: 256,
            dac: DacConfig::default(),
            equalizer: EqualizerMode::Rls,
            ffe_taps: 61,
            ffe_forgetting: 0.999,
            ffe_delta: 0.01,
            dd_rls: true,
            dd_taps: 11,
            dd_forgetting: 0.9999,
            dd_delta: None,
            dd_window: 500,
            mlsd: true,
            alpha: 0.5,
            psr_threshold: sync::DEFAULT_PSR_THRESHOLD,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.dac.validate()?;
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return Err(Error::Config(format!("rolloff {} outside (0, 1]", self.rolloff)));
        }
        if self.ffe_taps.is_multiple_of(2) || self.dd_taps.is_multiple_of(2) {
            return Err(Error::Config("equalizer tap counts must be odd".into()));
        }
        if self.layout.train_len() < 2 * self.ffe_taps {
            return Err(Error::Config(format!(
                "{} training symbols cannot train {} taps",
                self.layout.train_len(),
                self.ffe_taps
            )));
        }
        for (name, l) in [
            ("ffe_forgetting", self.ffe_forgetting),
            ("dd_forgetting", self.dd_forgetting),
        ] {
            if !(l > 0.9 && l <= 1.0) {
                return Err(Error::Config(format!("{name} {l} outside (0.9, 1]")));
            }
        }
        if !(self.ffe_delta > 0.0 && self.dd_delta.is_none_or(|d| d > 0.0)) {
            return Err(Error::Config("RLS delta must be positive".into()));
        }
        if self.dd_window == 0 {
            return Err(Error::Config("dd_window must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.psr_threshold > 0.0) {
            return Err(Error::Config("psr_threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn ffe_params(&self) -> RlsParams {
        RlsParams {
            taps: self.ffe_taps,
            forgetting: self.ffe_forgetting,
            delta: self.ffe_delta,
        }
    }

    pub fn dd_params(&self) -> DdParams {
        DdParams {
            taps: self.dd_taps,
            forgetting: self.dd_forgetting,
            delta: self.dd_delta,
            window: self.dd_window,
        }
    }
}

/// Band-limited resampling to exactly `2 * baud`.
pub fn resample_to_2sps(wave: &SampledWaveform, baud: f64, rolloff: f64) -> Result<SampledWaveform> {
    let needed = baud * (1.0 + rolloff);
    if wave.sample_rate < needed {
        return Err(Error::Aliasing {
            occupied_hz: needed / 2.0,
            nyquist_hz: wave.sample_rate / 2.0,
        });
    }
    resample_to_rate(wave, 2.0 * baud)
}

/// Circular correlation with the (symmetric) RRC taps.
pub fn matched_filter(wave: &SampledWaveform, rrc: &RrcFilter) -> Result<SampledWaveform> {
    SampledWaveform::new(
        dsp::circular_convolve_centered(&wave.samples, &rrc.taps)?,
        wave.sample_rate,
    )
}

/// Payload decisions from each enabled detection stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RxOutput {
    pub sync: SyncResult,
    /// In-training MSE of the FFE, dB re mean symbol energy; NaN without FFE.
    pub training_mse_db: f64,
    pub ffe_taps: Vec<f64>,
    pub dd_taps: Option<Vec<f64>>,
    pub dd_frozen_at: Option<usize>,
    pub ffe: Vec<Pam4Symbol>,
    pub dd: Option<Vec<Pam4Symbol>>,
    pub mlsd: Option<Vec<Pam4Symbol>>,
}

impl RxOutput {
    /// Output of the last enabled stage.
    pub fn decisions(&self) -> &[Pam4Symbol] {
        self.mlsd.as_deref().or(self.dd.as_deref()).unwrap_or(&self.ffe)
    }
}

#[derive(Debug, Clone)]
pub struct Receiver {
    cfg: DspConfig,
    baud: f64,
    rrc: RrcFilter,
    preamble: Preamble,
}

impl Receiver {
    pub fn new(cfg: DspConfig, baud: f64) -> Result<Self> {
        cfg.validate()?;
        let rrc = rrc_taps(cfg.rolloff, 2, cfg.rrc_span)?;
        let preamble = Preamble::generate(&cfg.layout, cfg.preamble_seed)?;
        Ok(Self {
            cfg,
            baud,
            rrc,
            preamble,
        })
    }

    pub fn config(&self) -> &DspConfig {
        &self.cfg
    }

    /// Matched-filtered 2-SPS waveform, AC coupled and scaled to the mean
    /// PAM-4 symbol energy.
    pub fn front_end(&self, capture: &SampledWaveform) -> Result<Vec<f64>> {
        let mean = capture.samples.iter().sum::<f64>() / capture.len() as f64;
        let ac = SampledWaveform::new(capture.samples.iter().map(|v| v - mean).collect(), capture.sample_rate)?;
        let two = resample_to_2sps(&ac, self.baud, self.cfg.rolloff)?;
        let mut x = matched_filter(&two, &self.rrc)?.samples;
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        if !(rms > 0.0 && rms.is_finite()) {
            return Err(Error::invalid("captured waveform has no AC content"));
        }
        let scale = equalizer::PAM4_SYMBOL_ENERGY.sqrt() / rms;
        x.iter_mut().for_each(|v| *v *= scale);
        Ok(x)
    }

    /// Processes one captured frame period.
    pub fn process(&self, capture: &SampledWaveform) -> Result<RxOutput> {
        let layout = &self.cfg.layout;
        let x = self.front_end(capture)?;
        let n_sym = x.len() / 2;
        if n_sym < layout.total_len() {
            return Err(Error::LengthMismatch {
                expected: 2 * layout.total_len(),
                actual: x.len(),
            });
        }
        let reference = self.preamble.symbols();
        let sync = synchronize(&x, &reference, self.cfg.psr_threshold)?;

        let margin = self.cfg.ffe_taps.max(self.cfg.dd_taps) + 1;
        let polarity = sync.polarity();
        let mut lin = sync::linearize(&x, sync.offset, margin, 2 * layout.total_len() + 2 * margin);
        lin.iter_mut().for_each(|v| *v *= polarity);

        let training: Vec<f64> = self.preamble.training.iter().map(|s| s.amplitude()).collect();
        let train_center = margin + 2 * layout.sync_len();
        let payload_center = margin + 2 * layout.preamble_len();
        let n_payload = layout.payload_len;

        let (soft, training_mse_db, ffe_taps) = match self.cfg.equalizer {
            EqualizerMode::Rls => {
                let eq = rls_train(&lin, train_center, &training, self.cfg.ffe_params())?;
                (
                    equalize(&lin, payload_center, n_payload, &eq)?,
                    eq.training_mse_db,
                    eq.taps,
                )
            }
            EqualizerMode::None => {
                let centers: Vec<f64> = (0..training.len()).map(|k| lin[train_center + 2 * k]).collect();
                let num: f64 = centers.iter().zip(&training).map(|(a, b)| a * b).sum();
                let den: f64 = centers.iter().map(|a| a * a).sum();
                let g = if den > 0.0 { num / den } else { 1.0 };
                let soft = (0..n_payload).map(|k| g * lin[payload_center + 2 * k]).collect();
                (soft, f64::NAN, vec![g])
            }
        };
        let ffe = slice(&soft);

        let (tracked, dd, dd_taps, dd_frozen_at) = if self.cfg.dd_rls {
            let out = dd_rls_track(&soft, self.cfg.dd_params())?;
            if let Some(k) = out.frozen_at {
                log::warn!("DD-RLS adaptation frozen at payload symbol {k}");
            }
            let decisions = slice(&out.symbols);
            (out.symbols, Some(decisions), Some(out.taps), out.frozen_at)
        } else {
            (soft, None, None, None)
        };

        let mlsd = self.cfg.mlsd.then(|| {
            let colored = post_filter(&tracked, self.cfg.alpha);
            mlsd_viterbi(&colored, self.cfg.alpha).symbols
        });

        Ok(RxOutput {
            sync,
            training_mse_db,
            ffe_taps,
            dd_taps,
            dd_frozen_at,
            ffe,
            dd,
            mlsd,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::RateRatio;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn tone(n: usize, rate: f64, f: f64) -> SampledWaveform {
        let s = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / rate).cos())
            .collect();
        SampledWaveform::new(s, rate).unwrap()
    }

    /// Frequency of the largest positive-frequency FFT bin.
    fn peak_frequency(x: &[f64], rate: f64) -> f64 {
        let spec = dsp::fft_real(x);
        let half = x.len() / 2;
        let k = (1..half)
            .max_by(|&a, &b| spec[a].norm().total_cmp(&spec[b].norm()))
            .unwrap();
        k as f64 * rate / x.len() as f64
    }

    #[test]
    fn ratios_for_paper_rates() {
        assert!(RateRatio::between(160e9, 160e9).unwrap().is_identity());
        let r = RateRatio::between(160e9, 168e9).unwrap();
        assert_eq!((r.up, r.down), (21, 20));
    }

    #[test]
    fn resampling_preserves_tone() {
        // 20 GHz on a 10 MHz grid at 160 GSa/s.
        let w = tone(16000, 160e9, 20e9);
        let out = resample_to_2sps(&w, 84e9, 0.01).unwrap();
        assert_eq!(out.sample_rate, 168e9);
        assert_eq!(out.len(), 16800);
        let f = peak_frequency(&out.samples, out.sample_rate);
        assert!((f / 20e9 - 1.0).abs() < 1e-9, "{f}");
        let expected = tone(16800, 168e9, 20e9);
        let err = out
            .samples
            .iter()
            .zip(&expected.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn resampling_rejects_low_rate() {
        let w = tone(1000, 80e9, 1e9);
        assert!(matches!(resample_to_2sps(&w, 80e9, 0.01), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn matched_filter_zero_in_zero_out() {
        let rrc = rrc_taps(0.01, 2, 64).unwrap();
        let w = SampledWaveform::new(vec![0.0; 1024], 160e9).unwrap();
        assert!(matched_filter(&w, &rrc).unwrap().samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matched_filter_shapes_white_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rrc = rrc_taps(0.25, 2, 32).unwrap();
        let n = 4096;
        let trials = 200;
        let mut p_in = vec![0.0; n];
        let mut p_out = vec![0.0; n];
        for _ in 0..trials {
            let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let w = SampledWaveform::new(x.clone(), 2.0).unwrap();
            let y = matched_filter(&w, &rrc).unwrap().samples;
            for (a, v) in p_in.iter_mut().zip(dsp::fft_real(&x)) {
                *a += v.norm_sqr();
            }
            for (a, v) in p_out.iter_mut().zip(dsp::fft_real(&y)) {
                *a += v.norm_sqr();
            }
        }
        let h = dsp::centered_kernel_spectrum(&rrc.taps, n).unwrap();
        // Passband bins only, averaged over 64-bin groups.
        for start in (0..n / 8).step_by(64) {
            let r =
                (start..start + 64).map(|k| p_out[k]).sum::<f64>() / (start..start + 64).map(|k| p_in[k]).sum::<f64>();
            let e = (start..start + 64).map(|k| h[k].norm_sqr()).sum::<f64>() / 64.0;
            assert!((r / e - 1.0).abs() < 0.05, "bins {start}: {r} vs {e}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(DspConfig::default().validate().is_ok());
        let bad = [
            DspConfig {
                ffe_taps: 60,
                ..Default::default()
            },
            DspConfig {
                alpha: 1.5,
                ..Default::default()
            },
            DspConfig {
                ffe_forgetting: 0.5,
                ..Default::default()
            },
            DspConfig {
                ffe_taps: 301,
                ..Default::default()
            },
            DspConfig {
                dd_window: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn config_json_defaults() {
        let c: DspConfig = serde_json::from_str(r#"{"alpha": 0.7, "mlsd": false}"#).unwrap();
        assert_eq!(c.alpha, 0.7);
        assert!(!c.mlsd);
        assert_eq!(c.ffe_taps, 61);
        assert!(serde_json::from_str::<DspConfig>(r#"{"alfa": 0.7}"#).is_err());
    }
}
