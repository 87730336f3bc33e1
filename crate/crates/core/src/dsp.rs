//! FFT-backed convolution and band-limited periodic resampling.
//!
//! Waveforms flowing through the link are one period of a cyclically
//! repeated frame (the AWG replays its memory), so most filtering here is
//! circular and exact. Linear convolution is kept for finite sequences.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::RateRatio;

/// Inputs shorter than this are convolved directly.
pub const DIRECT_CONV_LIMIT: usize = 1 << 12;

thread_local! {
    // Plans are costly to build for the awkward lengths a frame period has;
    // the planner caches them per thread.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn fft(data: &mut [Complex64]) {
    if data.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(data.len()));
    plan.process(data);
}

/// Inverse FFT including the 1/N scale.
pub fn ifft(data: &mut [Complex64]) {
    if data.is_empty() {
        return;
    }
    let n = data.len();
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    plan.process(data);
    let scale = 1.0 / n as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft(&mut buf);
    buf
}

pub fn ifft_real(mut spectrum: Vec<Complex64>) -> Vec<f64> {
    ifft(&mut spectrum);
    spectrum.into_iter().map(|c| c.re).collect()
}

/// Signed frequency of each FFT bin, in Hz.
pub fn fft_frequencies(n: usize, sample_rate: f64) -> Vec<f64> {
    let df = sample_rate / n as f64;
    (0..n)
        .map(|k| {
            if k <= (n - 1) / 2 {
                k as f64 * df
            } else {
                (k as f64 - n as f64) * df
            }
        })
        .collect()
}

/// Full linear convolution, `x.len() + h.len() - 1` samples.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    if x.len().max(h.len()) < DIRECT_CONV_LIMIT {
        let mut y = vec![0.0; out_len];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, &hj) in h.iter().enumerate() {
                y[i + j] += xi * hj;
            }
        }
        return y;
    }
    let n = out_len.next_power_of_two();
    let mut a = vec![Complex64::new(0.0, 0.0); n];
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    for (dst, &v) in a.iter_mut().zip(x) {
        dst.re = v;
    }
    for (dst, &v) in b.iter_mut().zip(h) {
        dst.re = v;
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    planner.plan_fft_inverse(n).process(&mut a);
    let scale = 1.0 / n as f64;
    a.truncate(out_len);
    a.into_iter().map(|c| c.re * scale).collect()
}

/// Spectrum of an odd-length, centre-referenced kernel placed on a circular
/// grid of `n` points (tap `c = (len-1)/2` lands on index 0).
pub fn centered_kernel_spectrum(h: &[f64], n: usize) -> Result<Vec<Complex64>> {
    if h.len().is_multiple_of(2) {
        return Err(Error::invalid("centred kernels need an odd tap count"));
    }
    let c = (h.len() - 1) / 2;
    let mut k = vec![Complex64::new(0.0, 0.0); n];
    for (j, &v) in h.iter().enumerate() {
        let idx = (j as i64 - c as i64).rem_euclid(n as i64) as usize;
        k[idx].re += v;
    }
    fft(&mut k);
    Ok(k)
}

/// Circular convolution with a centred odd-length kernel. Output sample `n`
/// is aligned with input sample `n` (zero group delay).
pub fn circular_convolve_centered(x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let kernel = centered_kernel_spectrum(h, x.len())?;
    let mut spec = fft_real(x);
    for (s, k) in spec.iter_mut().zip(&kernel) {
        *s *= k;
    }
    Ok(ifft_real(spec))
}

/// Applies a real, even frequency response `gain(f)` (zero phase) to a
/// periodic real signal.
pub fn apply_zero_phase<F: Fn(f64) -> f64>(x: &[f64], sample_rate: f64, gain: F) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let freqs = fft_frequencies(x.len(), sample_rate);
    let mut spec = fft_real(x);
    let n = x.len();
    for (k, s) in spec.iter_mut().enumerate() {
        // The Nyquist bin of an even-length grid is shared by +fs/2 and -fs/2.
        let f = if n.is_multiple_of(2) && k == n / 2 {
            sample_rate / 2.0
        } else {
            freqs[k]
        };
        *s *= gain(f.abs());
    }
    ifft_real(spec)
}

/// Length the input must be padded to so that `len * up / down` is integral.
pub fn padded_len_for_ratio(len: usize, ratio: RateRatio) -> usize {
    let down = ratio.down as usize;
    len.div_ceil(down) * down
}

/// Band-limited resampling of one period of a periodic real signal by an exact
/// rational ratio, done by truncating or zero-extending its DFT.
///
/// The input length must make `len * up / down` an integer.
pub fn resample_periodic(x: &[f64], ratio: RateRatio) -> Result<Vec<f64>> {
    let n_in = x.len();
    if ratio.is_identity() {
        return Ok(x.to_vec());
    }
    if n_in == 0 {
        return Ok(Vec::new());
    }
    let num = n_in as u128 * ratio.up as u128;
    if !num.is_multiple_of(ratio.down as u128) {
        return Err(Error::invalid(format!(
            "length {n_in} is not compatible with ratio {}/{}",
            ratio.up, ratio.down
        )));
    }
    let n_out = (num / ratio.down as u128) as usize;
    let spec = fft_real(x);
    let mut out = vec![Complex64::new(0.0, 0.0); n_out];
    let n = n_in.min(n_out);
    let half = n / 2;
    // Positive frequencies below the shared Nyquist bin.
    let pos = if n.is_multiple_of(2) { half } else { half + 1 };
    out[..pos].copy_from_slice(&spec[..pos]);
    // Negative frequencies.
    for k in 1..=(n - 1) / 2 {
        out[n_out - k] = spec[n_in - k];
    }
    if n.is_multiple_of(2) && n > 0 {
        if n_out < n_in {
            out[half] = spec[half] + spec[n_in - half];
        } else {
            let v = spec[half] * 0.5;
            out[half] += v;
            out[n_out - half] += v;
        }
    }
    let scale = n_out as f64 / n_in as f64;
    let mut y = ifft_real(out);
    for v in &mut y {
        *v *= scale;
    }
    Ok(y)
}
