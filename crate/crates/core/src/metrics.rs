//! BER accounting, FEC verdicts, net rate, optical spectrum and CD fading.

use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::SPEED_OF_LIGHT;
use crate::dsp;
use crate::error::{Error, Result};
use crate::framing::FrameLayout;
use crate::signal::OpticalField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FecThreshold {
    Kp4,
    Hd7,
    Hd20,
}

impl FecThreshold {
    pub const ALL: [FecThreshold; 3] = [FecThreshold::Kp4, FecThreshold::Hd7, FecThreshold::Hd20];

    /// Pre-FEC BER limit.
    pub fn ber(self) -> f64 {
        match self {
            FecThreshold::Kp4 => 2.2e-4,
            FecThreshold::Hd7 => 3.8e-3,
            FecThreshold::Hd20 => 1.5e-2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FecThreshold::Kp4 => "kp4",
            FecThreshold::Hd7 => "hd7",
            FecThreshold::Hd20 => "hd20",
        }
    }

    /// A BER equal to the limit passes.
    pub fn passes(self, ber: f64) -> bool {
        ber <= self.ber()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub kp4: bool,
    pub hd7: bool,
    pub hd20: bool,
}

impl Verdicts {
    pub fn for_ber(ber: f64) -> Self {
        Self {
            kp4: FecThreshold::Kp4.passes(ber),
            hd7: FecThreshold::Hd7.passes(ber),
            hd20: FecThreshold::Hd20.passes(ber),
        }
    }

    pub fn get(&self, t: FecThreshold) -> bool {
        match t {
            FecThreshold::Kp4 => self.kp4,
            FecThreshold::Hd7 => self.hd7,
            FecThreshold::Hd20 => self.hd20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerReport {
    pub bits_compared: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub verdicts: Verdicts,
    /// Net information rate of the configuration, bit/s, when known.
    pub net_rate: Option<f64>,
}

impl BerReport {
    pub fn from_counts(bit_errors: u64, bits_compared: u64) -> Result<Self> {
        if bits_compared == 0 {
            return Err(Error::invalid("no bits compared"));
        }
        if bit_errors > bits_compared {
            return Err(Error::invalid(format!("{bit_errors} errors in {bits_compared} bits")));
        }
        let ber = bit_errors as f64 / bits_compared as f64;
        Ok(Self {
            bits_compared,
            bit_errors,
            ber,
            verdicts: Verdicts::for_ber(ber),
            net_rate: None,
        })
    }

    /// Pools the counts of several reports.
    pub fn merge(reports: &[BerReport]) -> Result<Self> {
        let errors = reports.iter().map(|r| r.bit_errors).sum();
        let bits = reports.iter().map(|r| r.bits_compared).sum();
        let mut out = Self::from_counts(errors, bits)?;
        out.net_rate = reports.first().and_then(|r| r.net_rate);
        Ok(out)
    }
}

pub fn count_ber(tx_bits: &[u8], rx_bits: &[u8]) -> Result<BerReport> {
    if tx_bits.len() != rx_bits.len() {
        return Err(Error::LengthMismatch {
            expected: tx_bits.len(),
            actual: rx_bits.len(),
        });
    }
    let errors = tx_bits.iter().zip(rx_bits).filter(|(a, b)| a != b).count();
    BerReport::from_counts(errors as u64, tx_bits.len() as u64)
}

/// `baud * bits_per_symbol / overhead * payload / frame`.
pub fn net_rate(baud: f64, bits_per_symbol: u32, fec_overhead: f64, layout: &FrameLayout) -> Result<f64> {
    if !(fec_overhead >= 1.0) {
        return Err(Error::invalid(format!("FEC overhead ratio {fec_overhead} below 1")));
    }
    if layout.total_len() == 0 {
        return Err(Error::invalid("empty frame"));
    }
    Ok(baud * bits_per_symbol as f64 / fec_overhead * layout.payload_len as f64 / layout.total_len() as f64)
}

/// Net rate of the standard configuration: PAM-4 with 20% FEC overhead.
pub fn default_net_rate(baud: f64, layout: &FrameLayout) -> f64 {
    net_rate(baud, 2, 1.2, layout).expect("constant overhead is valid")
}

/// Resolution bandwidth equivalent to `nm` of wavelength at `wavelength`.
pub fn nm_to_hz(nm: f64, wavelength: f64) -> f64 {
    SPEED_OF_LIGHT * nm * 1e-9 / (wavelength * wavelength)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub frequency_hz: f64,
    pub value_db: f64,
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate of the optical power spectrum, as dBm per resolution
/// bandwidth against the offset from the carrier. Hann segments of
/// `ceil(1.5 fs / rbw)` samples (equivalent noise bandwidth = `rbw`) with 50%
/// overlap, taken circularly over the field period.
pub fn optical_spectrum(field: &OpticalField, resolution_bw: f64) -> Result<Vec<CurvePoint>> {
    if !(resolution_bw > 0.0 && resolution_bw.is_finite()) {
        return Err(Error::invalid(format!(
            "resolution bandwidth {resolution_bw} must be positive"
        )));
    }
    let fs = field.sample_rate;
    let seg = (1.5 * fs / resolution_bw).ceil() as usize;
    let n = field.len();
    if seg < 4 || seg > n {
        return Err(Error::invalid(format!(
            "{n} samples cannot resolve {resolution_bw:.3e} Hz (segment of {seg} samples needed)"
        )));
    }
    let w = hann(seg);
    let w_energy: f64 = w.iter().map(|v| v * v).sum();
    let hop = (seg / 2).max(1);
    let n_segments = n.div_ceil(hop);
    let mut psd = vec![0.0; seg];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    for s in 0..n_segments {
        let start = s * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = field.samples[(start + i) % n] * w[i];
        }
        dsp::fft(&mut buf);
        for (p, b) in psd.iter_mut().zip(&buf) {
            *p += b.norm_sqr();
        }
    }
    // W/Hz, then power in the resolution bandwidth.
    let scale = 1.0 / (n_segments as f64 * fs * w_energy);
    let freqs = dsp::fft_frequencies(seg, fs);
    let mut points: Vec<CurvePoint> = psd
        .iter()
        .zip(freqs)
        .map(|(&p, f)| CurvePoint {
            frequency_hz: f,
            value_db: 10.0 * (p * scale * resolution_bw / 1e-3).max(1e-30).log10(),
        })
        .collect();
    points.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    Ok(points)
}

/// Total power (W) represented by a spectrum from [`optical_spectrum`].
pub fn integrated_power(points: &[CurvePoint], resolution_bw: f64) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let df = points[1].frequency_hz - points[0].frequency_hz;
    points.iter().map(|p| 1e-3 * 10f64.powf(p.value_db / 10.0)).sum::<f64>() * df / resolution_bw
}

/// Floor applied at fading nulls.
pub const FADING_FLOOR_DB: f64 = -100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingProfile {
    pub points: Vec<CurvePoint>,
    /// First frequency with 3 dB of fading; infinite without dispersion.
    pub first_3db_hz: f64,
}

/// Small-signal IM/DD power fading `20 log10 |cos(pi lambda^2 D L f^2 / c)|`.
pub fn fading_profile(length: f64, dispersion: f64, wavelength: f64, f_grid: &[f64]) -> FadingProfile {
    let k = std::f64::consts::PI * wavelength * wavelength * dispersion * length / SPEED_OF_LIGHT;
    let points = f_grid
        .iter()
        .map(|&f| CurvePoint {
            frequency_hz: f,
            value_db: (20.0 * (k * f * f).cos().abs().log10()).max(FADING_FLOOR_DB),
        })
        .collect();
    let first_3db_hz = if length * dispersion == 0.0 {
        f64::INFINITY
    } else {
        crate::channel::fading_3db_frequency(length, dispersion.abs(), wavelength)
    };
    FadingProfile { points, first_3db_hz }
}

/// Writes `frequency_hz,value_db` rows.
pub fn write_curve_csv(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["frequency_hz", "value_db"]).map_err(csv_err)?;
    for p in points {
        w.write_record([p.frequency_hz.to_string(), p.value_db.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
