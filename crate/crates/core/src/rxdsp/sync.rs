//! Frame synchronization by circular normalized cross-correlation.

use rustfft::num_complex::Complex64;

use crate::dsp;
use crate::error::{Error, Result};
use crate::framing::Pam4Symbol;

/// Lags within this many samples of the peak are not counted as sidelobes.
pub const PEAK_EXCLUSION: usize = 3;

/// Minimum accepted peak-to-sidelobe ratio.
pub const DEFAULT_PSR_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncResult {
    /// Sample index (2 SPS) of the first reference symbol's centre.
    pub offset: usize,
    /// Signed normalized correlation at the peak; negative for an inverted signal.
    pub peak: f64,
    pub psr: f64,
}

impl SyncResult {
    pub fn polarity(&self) -> f64 {
        if self.peak < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

/// Normalized correlation `rho[d] = sum r[n] x[n+d] / (|r| sqrt(sum_{r[n]!=0} x[n+d]^2))`
/// of one waveform period `x` (2 SPS) against the reference symbols placed on
/// every other sample. Computed for all circular lags.
pub fn normalized_correlation(x: &[f64], reference: &[Pam4Symbol]) -> Result<Vec<f64>> {
    let n = x.len();
    let span = 2 * reference.len();
    if reference.is_empty() {
        return Err(Error::invalid("empty sync reference"));
    }
    if span > n {
        return Err(Error::invalid(format!(
            "waveform of {n} samples is shorter than the {span}-sample sync reference"
        )));
    }
    let mut r = vec![Complex64::new(0.0, 0.0); n];
    let mut mask = vec![Complex64::new(0.0, 0.0); n];
    for (k, s) in reference.iter().enumerate() {
        r[2 * k].re = s.amplitude();
        mask[2 * k].re = 1.0;
    }
    let r_norm = reference.iter().map(|s| s.amplitude().powi(2)).sum::<f64>().sqrt();
    dsp::fft(&mut r);
    dsp::fft(&mut mask);
    let mut xs: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut x2: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v * v, 0.0)).collect();
    dsp::fft(&mut xs);
    dsp::fft(&mut x2);
    // Circular cross-correlation: IFFT(X * conj(R)).
    for (a, b) in xs.iter_mut().zip(&r) {
        *a *= b.conj();
    }
    for (a, b) in x2.iter_mut().zip(&mask) {
        *a *= b.conj();
    }
    dsp::ifft(&mut xs);
    dsp::ifft(&mut x2);
    Ok(xs
        .iter()
        .zip(&x2)
        .map(|(c, e)| {
            let energy = e.re.max(0.0);
            if energy > 0.0 {
                c.re / (r_norm * energy.sqrt())
            } else {
                0.0
            }
        })
        .collect())
}

/// Locates the reference in one waveform period. The peak is the lag of
/// largest `|rho|`; the sidelobe level is the largest `|rho|` more than
/// [`PEAK_EXCLUSION`] samples (circularly) from it.
pub fn synchronize(x: &[f64], reference: &[Pam4Symbol], psr_threshold: f64) -> Result<SyncResult> {
    let rho = normalized_correlation(x, reference)?;
    let n = rho.len();
    let (offset, peak) = rho.iter().enumerate().fold(
        (0, 0.0f64),
        |(bi, bv), (i, &v)| if v.abs() > bv.abs() { (i, v) } else { (bi, bv) },
    );
    let sidelobe = rho
        .iter()
        .enumerate()
        .filter(|&(i, _)| {
            let d = i.abs_diff(offset);
            d.min(n - d) > PEAK_EXCLUSION
        })
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    let psr = if sidelobe > 0.0 {
        peak.abs() / sidelobe
    } else {
        f64::INFINITY
    };
    if !(psr >= psr_threshold) {
        return Err(Error::SyncFailure {
            psr,
            threshold: psr_threshold,
        });
    }
    Ok(SyncResult { offset, peak, psr })
}

/// Unrolls a periodic buffer so that sample `offset - margin` comes first and
/// `len` samples follow.
pub fn linearize(x: &[f64], offset: usize, margin: usize, len: usize) -> Vec<f64> {
    let n = x.len();
    let start = (offset + n - margin % n) % n;
    (0..len).map(|i| x[(start + i) % n]).collect()
}
