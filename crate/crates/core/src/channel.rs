//! Analog link model: electro-optic response, quadrature-biased push-pull
//! MZM, fiber chromatic dispersion, ASE loading, square-law detection and
//! ADC capture.
//!
//! Everything between the DAC and the ADC runs on an internal grid at twice
//! the faster of the two converter rates. Waveforms are periodic, so all
//! filters are applied exactly in the frequency domain.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::signal::{integer_hz, lcm, OpticalField, RateRatio, SampledWaveform};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// OSNR reference bandwidth: 0.1 nm at 1550 nm.
pub const OSNR_REF_BANDWIDTH: f64 = 12.5e9;

/// 1 ps/(nm km) in s/m^2.
pub const PS_PER_NM_KM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Symbol rate, Hz.
    pub baud: f64,
    pub dac_rate: f64,
    pub adc_rate: f64,
    /// 3-dB bandwidth of the driver + modulator electro-optic response.
    pub eo_3db_bandwidth: f64,
    pub eo_order: u32,
    /// 3-dB bandwidth of the photodiode + electrical amplifier.
    pub rx_3db_bandwidth: f64,
    pub rx_order: u32,
    /// Push-pull half-wave voltage, V.
    pub vpi: f64,
    /// Peak drive voltage at AWG full scale, V.
    pub drive_swing: f64,
    /// Optical power entering the modulator, W.
    pub laser_power: f64,
    /// Fiber length, m.
    pub fiber_length: f64,
    /// Dispersion parameter D, s/m^2.
    pub dispersion: f64,
    /// Carrier wavelength, m.
    pub wavelength: f64,
    /// OSNR in 0.1 nm; `None` disables ASE loading.
    pub osnr_db: Option<f64>,
    /// Photodiode responsivity, A/W.
    pub responsivity: f64,
    /// Mixed into the channel-noise stream of every frame.
    pub rng_seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            baud: 80e9,
            dac_rate: 92e9,
            adc_rate: 160e9,
            eo_3db_bandwidth: 21e9,
            eo_order: 2,
            rx_3db_bandwidth: 50e9,
            rx_order: 2,
            vpi: 3.5,
            drive_swing: 1.0,
            laser_power: 1e-3,
            fiber_length: 0.0,
            dispersion: 17.0 * PS_PER_NM_KM,
            wavelength: 1545.72e-9,
            osnr_db: None,
            responsivity: 0.8,
            rng_seed: 1,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("baud", self.baud),
            ("dac_rate", self.dac_rate),
            ("adc_rate", self.adc_rate),
            ("eo_3db_bandwidth", self.eo_3db_bandwidth),
            ("rx_3db_bandwidth", self.rx_3db_bandwidth),
            ("vpi", self.vpi),
            ("drive_swing", self.drive_swing),
            ("laser_power", self.laser_power),
            ("wavelength", self.wavelength),
            ("responsivity", self.responsivity),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("baud", self.baud),
            ("dac_rate", self.dac_rate),
            ("adc_rate", self.adc_rate),
        ] {
            integer_hz(v).map_err(|_| Error::Config(format!("{name} must be a whole number of Hz, got {v}")))?;
        }
        if !(self.fiber_length >= 0.0 && self.fiber_length.is_finite()) {
            return Err(Error::Config(format!(
                "fiber_length must be >= 0, got {}",
                self.fiber_length
            )));
        }
        if !self.dispersion.is_finite() {
            return Err(Error::Config("dispersion must be finite".into()));
        }
        if self.drive_swing >= 2.0 * self.vpi {
            return Err(Error::Config(format!(
                "drive_swing {} V must stay below 2 Vpi = {} V",
                self.drive_swing,
                2.0 * self.vpi
            )));
        }
        if self.eo_order == 0 || self.rx_order == 0 {
            return Err(Error::Config("filter orders must be >= 1".into()));
        }
        if let Some(o) = self.osnr_db {
            if !o.is_finite() {
                return Err(Error::Config("osnr_db must be finite or null".into()));
            }
        }
        Ok(())
    }

    /// Rate of the internal analog grid.
    pub fn grid_rate(&self) -> f64 {
        2.0 * self.dac_rate.max(self.adc_rate)
    }

    /// Smallest symbol count `m` such that `k * m` symbols land on a whole
    /// number of samples at the DAC, grid and ADC rates for every integer `k`.
    pub fn symbol_period_multiple(&self) -> Result<usize> {
        let baud = integer_hz(self.baud)?;
        let mut m = 1u64;
        for rate in [self.dac_rate, self.grid_rate(), self.adc_rate] {
            let r = RateRatio::new(integer_hz(rate)?, baud)?;
            m = lcm(m, r.down);
        }
        Ok(m as usize)
    }
}

/// Butterworth-shaped magnitude `1/sqrt(1 + (f/f3db)^(2 order))`.
pub fn butterworth_gain(f: f64, f3db: f64, order: u32) -> f64 {
    1.0 / (1.0 + (f / f3db).powi(2 * order as i32)).sqrt()
}

/// Lowpass electro-optic response applied to the drive waveform, zero phase.
pub fn eo_response(wave: &SampledWaveform, f3db: f64, order: u32) -> Result<SampledWaveform> {
    if !(f3db > 0.0) || order == 0 {
        return Err(Error::invalid("EO response needs f3db > 0 and order >= 1"));
    }
    let samples = dsp::apply_zero_phase(&wave.samples, wave.sample_rate, |f| butterworth_gain(f, f3db, order));
    SampledWaveform::new(samples, wave.sample_rate)
}

/// True when the drive leaves the monotonic region of one transfer period
/// (peak-to-peak above 2 Vpi).
pub fn is_overmodulated(drive: &SampledWaveform, vpi: f64) -> bool {
    let (lo, hi) = drive
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo > 2.0 * vpi
}

/// Push-pull MZM at quadrature: `E = sqrt(P) cos(pi/4 + pi v / (2 Vpi))`.
/// The field is real (chirp-free).
pub fn mzm_modulate(drive: &SampledWaveform, cfg: &LinkConfig) -> Result<OpticalField> {
    if is_overmodulated(drive, cfg.vpi) {
        log::warn!("MZM drive exceeds a 2 Vpi span; the transfer folds over");
    }
    let e0 = cfg.laser_power.sqrt();
    let k = PI / (2.0 * cfg.vpi);
    let samples = drive
        .samples
        .iter()
        .map(|&v| Complex64::new(e0 * (PI / 4.0 + k * v).cos(), 0.0))
        .collect();
    OpticalField::new(samples, drive.sample_rate, cfg.wavelength)
}

/// Dispersion phase `pi lambda^2 D L f^2 / c` at baseband offset `f`.
pub fn dispersion_phase(f: f64, length: f64, dispersion: f64, wavelength: f64) -> f64 {
    PI * wavelength * wavelength * dispersion * length * f * f / SPEED_OF_LIGHT
}

/// All-pass chromatic dispersion `H(f) = exp(+j pi lambda^2 D L f^2 / c)`.
/// Negative lengths undo a positive one.
pub fn fiber_cd(field: &OpticalField, length: f64, dispersion: f64, wavelength: f64) -> Result<OpticalField> {
    if length == 0.0 || dispersion == 0.0 || field.is_empty() {
        return Ok(field.clone());
    }
    let n = field.len();
    let freqs = dsp::fft_frequencies(n, field.sample_rate);
    let mut buf = field.samples.clone();
    dsp::fft(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let phi = dispersion_phase(freqs[k], length, dispersion, wavelength);
        *v *= Complex64::from_polar(1.0, phi);
    }
    dsp::ifft(&mut buf);
    OpticalField::new(buf, field.sample_rate, field.wavelength)
}

/// Noise variance (total, complex) giving `osnr_db` in the 0.1 nm reference
/// bandwidth for a field of mean power `signal_power` sampled at `sample_rate`.
pub fn ase_variance(signal_power: f64, osnr_db: f64, sample_rate: f64) -> f64 {
    let osnr = 10f64.powf(osnr_db / 10.0);
    signal_power * sample_rate / (OSNR_REF_BANDWIDTH * osnr)
}

/// Adds circular complex Gaussian ASE so that signal power over noise power
/// in 12.5 GHz equals the requested OSNR. `None` is a passthrough.
pub fn load_ase_noise<R: Rng + ?Sized>(
    field: &OpticalField,
    osnr_db: Option<f64>,
    rng: &mut R,
) -> Result<OpticalField> {
    let Some(osnr_db) = osnr_db else {
        return Ok(field.clone());
    };
    if !osnr_db.is_finite() {
        return Err(Error::invalid("OSNR must be finite"));
    }
    let var = ase_variance(field.mean_power(), osnr_db, field.sample_rate);
    let sigma = (var / 2.0).sqrt();
    let samples = field
        .samples
        .iter()
        .map(|&e| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            e + Complex64::new(sigma * re, sigma * im)
        })
        .collect();
    OpticalField::new(samples, field.sample_rate, field.wavelength)
}

/// Unfiltered square-law photocurrent `R |E|^2`.
pub fn square_law(field: &OpticalField, responsivity: f64) -> Result<SampledWaveform> {
    let samples = field.samples.iter().map(|e| responsivity * e.norm_sqr()).collect();
    SampledWaveform::new(samples, field.sample_rate)
}

/// PIN photodiode followed by the receiver electrical lowpass.
pub fn photodiode(field: &OpticalField, responsivity: f64, rx_f3db: f64, order: u32) -> Result<SampledWaveform> {
    let current = square_law(field, responsivity)?;
    eo_response(&current, rx_f3db, order)
}

/// Band-limited rational resampling of the periodic analog-grid waveform to
/// the ADC rate. Inputs whose length does not map onto a whole number of
/// output samples are zero-padded first, which breaks periodicity at the seam.
pub fn adc_model(wave: &SampledWaveform, adc_rate: f64, baud: f64) -> Result<SampledWaveform> {
    if adc_rate < baud {
        return Err(Error::Aliasing {
            occupied_hz: baud / 2.0,
            nyquist_hz: adc_rate / 2.0,
        });
    }
    resample_to_rate(wave, adc_rate)
}

pub(crate) fn resample_to_rate(wave: &SampledWaveform, rate: f64) -> Result<SampledWaveform> {
    let ratio = RateRatio::between(wave.sample_rate, rate)?;
    if ratio.is_identity() {
        return Ok(wave.clone());
    }
    let padded = dsp::padded_len_for_ratio(wave.len(), ratio);
    let samples = if padded != wave.len() {
        log::debug!("zero-padding {} -> {} samples before resampling", wave.len(), padded);
        let mut s = wave.samples.clone();
        s.resize(padded, 0.0);
        dsp::resample_periodic(&s, ratio)?
    } else {
        dsp::resample_periodic(&wave.samples, ratio)?
    };
    SampledWaveform::new(samples, rate)
}

/// First frequency at which small-signal IM/DD power fading reaches 3 dB.
pub fn fading_3db_frequency(length: f64, dispersion: f64, wavelength: f64) -> f64 {
    (SPEED_OF_LIGHT / (4.0 * wavelength * wavelength * dispersion * length)).sqrt()
}

/// The whole analog path for one waveform period.
#[derive(Debug, Clone)]
pub struct Channel {
    pub cfg: LinkConfig,
}

impl Channel {
    pub fn new(cfg: LinkConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    /// Drive waveform on the DAC grid in normalized units: scaled so its
    /// peak maps onto `drive_swing` volts.
    pub fn drive_volts(&self, dac: &SampledWaveform) -> Result<SampledWaveform> {
        let grid = resample_to_rate(dac, self.cfg.grid_rate())?;
        let shaped = eo_response(&grid, self.cfg.eo_3db_bandwidth, self.cfg.eo_order)?;
        let peak = dac.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let scale = if peak > 0.0 { self.cfg.drive_swing / peak } else { 0.0 };
        SampledWaveform::new(shaped.samples.iter().map(|s| s * scale).collect(), shaped.sample_rate)
    }

    /// Optical field at the receiver input, before ASE loading.
    pub fn optical(&self, dac: &SampledWaveform) -> Result<OpticalField> {
        let drive = self.drive_volts(dac)?;
        let field = mzm_modulate(&drive, &self.cfg)?;
        fiber_cd(&field, self.cfg.fiber_length, self.cfg.dispersion, self.cfg.wavelength)
    }

    /// DAC output period in, ADC capture period out.
    pub fn transmit<R: Rng + ?Sized>(&self, dac: &SampledWaveform, rng: &mut R) -> Result<SampledWaveform> {
        let field = self.optical(dac)?;
        let noisy = load_ase_noise(&field, self.cfg.osnr_db, rng)?;
        let current = photodiode(
            &noisy,
            self.cfg.responsivity,
            self.cfg.rx_3db_bandwidth,
            self.cfg.rx_order,
        )?;
        adc_model(&current, self.cfg.adc_rate, self.cfg.baud)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tone(n: usize, fs: f64, f: f64, amp: f64) -> SampledWaveform {
        SampledWaveform::new((0..n).map(|i| amp * (2.0 * PI * f * i as f64 / fs).cos()).collect(), fs).unwrap()
    }

    /// Amplitude of the component at bin `k` of a real periodic signal.
    fn bin_amplitude(x: &[f64], k: usize) -> f64 {
        let spec = dsp::fft_real(x);
        2.0 * spec[k].norm() / x.len() as f64
    }

    fn field(n: usize, seed: u64) -> OpticalField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..n)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        OpticalField::new(s, 320e9, 1545.72e-9).unwrap()
    }

    #[test]
    fn eo_three_db_point() {
        let fs = 320e9;
        let n = 3200;
        let dc = SampledWaveform::new(vec![1.0; n], fs).unwrap();
        let out = eo_response(&dc, 21e9, 2).unwrap();
        assert!(out.samples.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let at_f3 = eo_response(&tone(n, fs, 21e9, 1.0), 21e9, 2).unwrap();
        let db = 20.0 * bin_amplitude(&at_f3.samples, 210).log10();
        assert!((db + 3.0).abs() < 0.1, "{db}");

        let at_2f3 = eo_response(&tone(n, fs, 42e9, 1.0), 21e9, 2).unwrap();
        let db = 20.0 * bin_amplitude(&at_2f3.samples, 420).log10();
        // 1/(1 + 2^4) in power.
        assert!((db + 12.0).abs() < 1.0, "{db}");
        assert!((db - 10.0 * (1.0f64 / 17.0).log10()).abs() < 1e-9);
    }

    #[test]
    fn mzm_transfer_points() {
        let cfg = LinkConfig::default();
        let p_in = cfg.laser_power;
        let zero = SampledWaveform::new(vec![0.0; 4], 1e9).unwrap();
        let f = mzm_modulate(&zero, &cfg).unwrap();
        assert!((f.mean_power() / p_in - 0.5).abs() < 1e-15);
        let full = SampledWaveform::new(vec![-cfg.vpi / 2.0], 1e9).unwrap();
        let f = mzm_modulate(&full, &cfg).unwrap();
        assert!((f.mean_power() / p_in - 1.0).abs() < 1e-15);
    }

    fn mzm_power(v: f64, cfg: &LinkConfig) -> f64 {
        let w = SampledWaveform::new(vec![v], 1e9).unwrap();
        mzm_modulate(&w, cfg).unwrap().mean_power()
    }

    #[test]
    fn mzm_small_signal_slope_and_inflection() {
        let cfg = LinkConfig::default();
        let h = 1e-4 * cfg.vpi;
        let slope = (mzm_power(h, &cfg) - mzm_power(-h, &cfg)) / (2.0 * h);
        let curvature = (mzm_power(h, &cfg) - 2.0 * mzm_power(0.0, &cfg) + mzm_power(-h, &cfg)) / (h * h);
        assert!(curvature.abs() < 1e-6 * slope.abs() / h, "curvature {curvature}");

        // Ripple of a small sine drive follows the linear slope.
        let eps = 0.01 * cfg.vpi;
        let n = 1000;
        let drive = tone(n, 1e12, 1e10, eps);
        let p: Vec<f64> = mzm_modulate(&drive, &cfg)
            .unwrap()
            .samples
            .iter()
            .map(|e| e.norm_sqr())
            .collect();
        let ripple = bin_amplitude(&p, 10);
        let predicted = slope.abs() * eps;
        assert!((ripple / predicted - 1.0).abs() < 0.01, "{ripple} vs {predicted}");
    }

    #[test]
    fn cd_identity_unitary_invertible() {
        let f = field(4096, 3);
        assert_eq!(fiber_cd(&f, 0.0, 17e-6, 1545.72e-9).unwrap(), f);
        let g = fiber_cd(&f, 2000.0, 17e-6, 1545.72e-9).unwrap();
        assert!((g.energy() / f.energy() - 1.0).abs() < 1e-12);
        let back = fiber_cd(&g, -2000.0, 17e-6, 1545.72e-9).unwrap();
        let err = f
            .samples
            .iter()
            .zip(&back.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn fading_3db_closed_form() {
        let d = 17.0 * PS_PER_NM_KM;
        let f1 = fading_3db_frequency(1000.0, d, 1545.72e-9);
        let f2 = fading_3db_frequency(2000.0, d, 1545.72e-9);
        assert!((f1 / 1e9 - 43.0).abs() < 0.5, "{f1}");
        assert!((f2 / 1e9 - 30.4).abs() < 0.5, "{f2}");
        assert!((f1 / f2 - 2f64.sqrt()).abs() < 1e-12);
        assert!((dispersion_phase(f1, 1000.0, d, 1545.72e-9) - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn ase_hits_requested_osnr() {
        let n = 1_000_000;
        let clean = OpticalField::new(vec![Complex64::new(1e-2, 0.0); n], 320e9, 1545.72e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noisy = load_ase_noise(&clean, Some(30.0), &mut rng).unwrap();
        let noise_power = noisy
            .samples
            .iter()
            .zip(&clean.samples)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / n as f64;
        let in_ref = noise_power * OSNR_REF_BANDWIDTH / clean.sample_rate;
        let measured = 10.0 * (clean.mean_power() / in_ref).log10();
        assert!((measured - 30.0).abs() < 0.1, "{measured}");

        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let small = field(256, 1);
        assert_eq!(
            load_ase_noise(&small, Some(20.0), &mut a).unwrap(),
            load_ase_noise(&small, Some(20.0), &mut b).unwrap()
        );
        assert_eq!(load_ase_noise(&small, None, &mut a).unwrap(), small);
    }

    #[test]
    fn square_law_properties() {
        let a = 0.03;
        let f = OpticalField::new(vec![Complex64::from_polar(a, 0.7); 16], 1e9, 1.55e-6).unwrap();
        let i = square_law(&f, 0.8).unwrap();
        assert!(i.samples.iter().all(|v| (v - 0.8 * a * a).abs() < 1e-15));
        assert!(square_law(&field(1000, 4), 0.8)
            .unwrap()
            .samples
            .iter()
            .all(|&v| v >= 0.0));
    }

    #[test]
    fn two_tone_beat() {
        let fs = 320e9;
        let n = 3200;
        let (k1, k2) = (100usize, 130usize);
        let s = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                Complex64::from_polar(1.0, 2.0 * PI * k1 as f64 * t)
                    + Complex64::from_polar(0.5, 2.0 * PI * k2 as f64 * t)
            })
            .collect();
        let f = OpticalField::new(s, fs, 1.55e-6).unwrap();
        let i = square_law(&f, 1.0).unwrap();
        // |a e^{jw1 t} + b e^{jw2 t}|^2 = a^2 + b^2 + 2ab cos((w2 - w1) t)
        assert!((bin_amplitude(&i.samples, k2 - k1) - 1.0).abs() < 1e-9);
        assert!(bin_amplitude(&i.samples, 7) < 1e-9);
    }

    #[test]
    fn adc_identity_and_tone_frequency() {
        let w = tone(1600, 160e9, 10e9, 1.0);
        assert_eq!(adc_model(&w, 160e9, 80e9).unwrap(), w);
        assert!(matches!(adc_model(&w, 60e9, 80e9), Err(Error::Aliasing { .. })));

        let n = 2300;
        let f0 = 37.0 * 92e9 / n as f64;
        let x = tone(n, 92e9, f0, 1.0);
        let y = adc_model(&x, 160e9, 80e9).unwrap();
        assert_eq!(y.len(), 4000);
        // Peak bin of the resampled tone sits at the same physical frequency.
        let spec = dsp::fft_real(&y.samples);
        let k = (1..y.len() / 2)
            .max_by(|&a, &b| spec[a].norm().total_cmp(&spec[b].norm()))
            .unwrap();
        let f_est = k as f64 * y.sample_rate / y.len() as f64;
        assert!(((f_est - f0) / f0).abs() < 1e-9);
        let back = resample_to_rate(&y, 92e9).unwrap();
        let err = back
            .samples
            .iter()
            .zip(&x.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn period_multiples() {
        let mut cfg = LinkConfig::default();
        assert_eq!(cfg.symbol_period_multiple().unwrap(), 20);
        cfg.baud = 84e9;
        assert_eq!(cfg.symbol_period_multiple().unwrap(), 21);
    }

    #[test]
    fn config_validation() {
        let mut cfg = LinkConfig::default();
        cfg.validate().unwrap();
        cfg.drive_swing = 2.0 * cfg.vpi;
        assert!(cfg.validate().is_err());
        let cfg = LinkConfig {
            fiber_length: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = LinkConfig {
            baud: 80.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
