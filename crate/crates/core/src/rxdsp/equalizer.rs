//! RLS-trained fractionally spaced FFE and the decision-directed RLS tracker.

use crate::error::{Error, Result};
use crate::framing::Pam4Symbol;

/// Mean energy of equiprobable PAM-4 levels; MSE figures are relative to it.
pub const PAM4_SYMBOL_ENERGY: f64 = 5.0;

/// Exponentially weighted RLS over a real regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerState {
    pub taps: Vec<f64>,
    /// Inverse correlation matrix, row-major `T x T`.
    pub p: Vec<f64>,
    pub forgetting: f64,
    pub delta: f64,
    pub updates: usize,
    /// MSE over the training block with the final taps, dB re symbol energy.
    pub training_mse_db: f64,
}

impl EqualizerState {
    /// Taps start at `initial`; `P = I / delta`.
    pub fn new(initial: Vec<f64>, forgetting: f64, delta: f64) -> Result<Self> {
        let t = initial.len();
        if t == 0 || t.is_multiple_of(2) {
            return Err(Error::invalid(format!("tap count must be odd, got {t}")));
        }
        if !(forgetting > 0.9 && forgetting <= 1.0) {
            return Err(Error::invalid(format!(
                "forgetting factor {forgetting} outside (0.9, 1]"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("RLS delta must be positive, got {delta}")));
        }
        let mut p = vec![0.0; t * t];
        for i in 0..t {
            p[i * t + i] = 1.0 / delta;
        }
        Ok(Self {
            taps: initial,
            p,
            forgetting,
            delta,
            updates: 0,
            training_mse_db: f64::NAN,
        })
    }

    pub fn delta_taps(n: usize) -> Vec<f64> {
        let mut w = vec![0.0; n];
        w[n / 2] = 1.0;
        w
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn output(&self, u: &[f64]) -> f64 {
        self.taps.iter().zip(u).map(|(w, x)| w * x).sum()
    }

    /// One RLS step toward `desired`; returns the a-priori error.
    pub fn update(&mut self, u: &[f64], desired: f64, scratch: &mut Vec<f64>) -> Result<f64> {
        let t = self.taps.len();
        let lambda = self.forgetting;
        scratch.clear();
        scratch.resize(t, 0.0);
        // pi = P u
        for (i, pi) in scratch.iter_mut().enumerate() {
            let row = &self.p[i * t..(i + 1) * t];
            *pi = row.iter().zip(u).map(|(a, b)| a * b).sum();
        }
        let denom = lambda + u.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum::<f64>();
        let err = desired - self.output(u);
        if !(denom.is_finite() && denom > 0.0 && err.is_finite()) {
            return Err(Error::Divergence {
                stage: "rls",
                updates: self.updates,
                detail: format!("gain denominator {denom:.3e}, a-priori error {err:.3e}"),
            });
        }
        let inv = 1.0 / denom;
        for (w, pi) in self.taps.iter_mut().zip(scratch.iter()) {
            *w += pi * inv * err;
        }
        // P <- (P - k pi^T) / lambda with k = pi / denom, kept symmetric.
        let inv_lambda = 1.0 / lambda;
        for i in 0..t {
            let ki = scratch[i] * inv;
            for j in i..t {
                let v = (self.p[i * t + j] - ki * scratch[j]) * inv_lambda;
                self.p[i * t + j] = v;
                self.p[j * t + i] = v;
            }
        }
        self.updates += 1;
        Ok(err)
    }
}

/// Regressor for symbol `k` of a 2-samples-per-symbol stream whose symbol
/// centres sit at `first_center + 2k`: `u[i] = x[centre + h - i]`.
fn fse_regressor<'a>(x: &[f64], center: usize, taps: usize, out: &'a mut Vec<f64>) -> &'a [f64] {
    let h = taps / 2;
    out.clear();
    out.extend((0..taps).map(|i| x[center + h - i]));
    out
}

fn check_span(x: &[f64], first_center: usize, n_symbols: usize, taps: usize) -> Result<()> {
    let h = taps / 2;
    if n_symbols == 0 {
        return Ok(());
    }
    let last = first_center + 2 * (n_symbols - 1) + h;
    if first_center < h || last >= x.len() {
        return Err(Error::invalid(format!(
            "equalizer window needs samples [{}, {last}] but the buffer has {}",
            first_center as i64 - h as i64,
            x.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlsParams {
    pub taps: usize,
    pub forgetting: f64,
    pub delta: f64,
}

/// Trains a `T`-tap, T/2-spaced FFE against known symbols with RLS.
pub fn rls_train(x: &[f64], first_center: usize, training: &[f64], params: RlsParams) -> Result<EqualizerState> {
    if training.len() < 2 * params.taps {
        return Err(Error::invalid(format!(
            "{} training symbols cannot train {} taps (need >= {})",
            training.len(),
            params.taps,
            2 * params.taps
        )));
    }
    let mut eq = EqualizerState::new(EqualizerState::delta_taps(params.taps), params.forgetting, params.delta)?;
    check_span(x, first_center, training.len(), params.taps)?;
    let mut u = Vec::with_capacity(params.taps);
    let mut scratch = Vec::with_capacity(params.taps);
    for (k, &d) in training.iter().enumerate() {
        let reg = fse_regressor(x, first_center + 2 * k, params.taps, &mut u).to_vec();
        eq.update(&reg, d, &mut scratch)?;
    }
    if eq.taps.iter().any(|w| !w.is_finite()) {
        return Err(Error::Divergence {
            stage: "rls",
            updates: eq.updates,
            detail: "non-finite taps after training".into(),
        });
    }
    let out = equalize(x, first_center, training.len(), &eq)?;
    let mse = out.iter().zip(training).map(|(y, d)| (y - d).powi(2)).sum::<f64>() / training.len() as f64;
    eq.training_mse_db = 10.0 * (mse / PAM4_SYMBOL_ENERGY).log10();
    Ok(eq)
}

/// Applies the FFE and decimates to one output per symbol.
pub fn equalize(x: &[f64], first_center: usize, n_symbols: usize, eq: &EqualizerState) -> Result<Vec<f64>> {
    check_span(x, first_center, n_symbols, eq.len())?;
    let h = eq.len() / 2;
    Ok((0..n_symbols)
        .map(|k| {
            let c = first_center + 2 * k;
            eq.taps.iter().enumerate().map(|(i, w)| w * x[c + h - i]).sum()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdParams {
    pub taps: usize,
    pub forgetting: f64,
    /// `P = I / delta` at start. `None` starts in steady state:
    /// `delta = E[x^2] / (1 - forgetting)`, as if the delta taps had already
    /// been tracked over one memory length of white input.
    pub delta: Option<f64>,
    /// Symbols per block of the divergence monitor.
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdOutput {
    pub symbols: Vec<f64>,
    pub taps: Vec<f64>,
    /// Symbol index at which adaptation was frozen, if the monitor tripped.
    pub frozen_at: Option<usize>,
}

/// Symbol-spaced decision-directed RLS. Taps start as a delta; the reference
/// is the sliced a-priori output. If the mean |error| of a monitor block
/// exceeds twice that of the first block, the taps revert to the last good
/// block and adaptation stops.
pub fn dd_rls_track(soft: &[f64], params: DdParams) -> Result<DdOutput> {
    let t = params.taps;
    let delta = match params.delta {
        Some(d) => d,
        None => {
            let power = soft.iter().map(|v| v * v).sum::<f64>() / soft.len().max(1) as f64;
            let memory = if params.forgetting < 1.0 {
                1.0 / (1.0 - params.forgetting)
            } else {
                soft.len().max(1) as f64
            };
            (power * memory).max(f64::MIN_POSITIVE)
        }
    };
    let mut eq = EqualizerState::new(EqualizerState::delta_taps(t), params.forgetting, delta)?;
    if params.window == 0 {
        return Err(Error::invalid("divergence window must be >= 1"));
    }
    let h = (t / 2) as i64;
    let n = soft.len() as i64;
    let mut u = vec![0.0; t];
    let mut scratch = Vec::with_capacity(t);
    let mut out = Vec::with_capacity(soft.len());
    let mut reference_err: Option<f64> = None;
    let mut block_err = 0.0;
    let mut block_len = 0usize;
    let mut good_taps = eq.taps.clone();
    let mut frozen_at = None;
    for k in 0..n {
        for (i, ui) in u.iter_mut().enumerate() {
            let idx = k + h - i as i64;
            *ui = if (0..n).contains(&idx) { soft[idx as usize] } else { 0.0 };
        }
        let y = eq.output(&u);
        out.push(y);
        if frozen_at.is_some() {
            continue;
        }
        let decision = Pam4Symbol::slice(y).amplitude();
        let err = match eq.update(&u, decision, &mut scratch) {
            Ok(e) => e,
            Err(_) => {
                eq.taps.clone_from(&good_taps);
                frozen_at = Some(k as usize);
                continue;
            }
        };
        block_err += err.abs();
        block_len += 1;
        if block_len == params.window {
            let mean = block_err / block_len as f64;
            match reference_err {
                None => reference_err = Some(mean),
                Some(r) if mean > 2.0 * r + 1e-12 => {
                    eq.taps.clone_from(&good_taps);
                    frozen_at = Some(k as usize);
                    log::debug!("DD-RLS frozen at symbol {k}: block error {mean:.4} vs {r:.4}");
                }
                Some(_) => {}
            }
            if frozen_at.is_none() {
                good_taps.clone_from(&eq.taps);
            }
            block_err = 0.0;
            block_len = 0;
        }
    }
    Ok(DdOutput {
        symbols: out,
        taps: eq.taps,
        frozen_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn symbols(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| [-3.0, -1.0, 1.0, 3.0][rng.random_range(0..4)]).collect()
    }

    /// Zero-inserted symbols through a T/2-spaced channel plus white noise.
    fn fse_channel(d: &[f64], channel: &[f64], snr_db: f64, margin: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut z = vec![0.0; 2 * d.len() + 2 * margin];
        for (k, &s) in d.iter().enumerate() {
            z[margin + 2 * k] = s;
        }
        let mut y = vec![0.0; z.len()];
        for n in 0..z.len() {
            for (j, &c) in channel.iter().enumerate() {
                if n >= j {
                    y[n] += c * z[n - j];
                }
            }
        }
        let p = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        let sigma = (p / 10f64.powf(snr_db / 10.0)).sqrt();
        y.iter()
            .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Solves the normal equations by Gaussian elimination with partial pivoting.
    fn least_squares(rows: &[Vec<f64>], d: &[f64]) -> Vec<f64> {
        let t = rows[0].len();
        let mut a = vec![vec![0.0; t + 1]; t];
        for (r, &dv) in rows.iter().zip(d) {
            for i in 0..t {
                for j in 0..t {
                    a[i][j] += r[i] * r[j];
                }
                a[i][t] += r[i] * dv;
            }
        }
        for col in 0..t {
            let piv = (col..t)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for row in 0..t {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..=t {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        (0..t).map(|i| a[i][t] / a[i][i]).collect()
    }

    const TRAIN: RlsParams = RlsParams {
        taps: 11,
        forgetting: 0.999,
        delta: 0.01,
    };

    #[test]
    fn identity_channel_gives_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = symbols(512, &mut rng);
        let x = fse_channel(&d, &[1.0], 300.0, 8, &mut rng);
        let eq = rls_train(&x, 8, &d, TRAIN).unwrap();
        assert!((eq.taps[5] - 1.0).abs() < 1e-3);
        for (i, w) in eq.taps.iter().enumerate() {
            if i != 5 {
                assert!(w.abs() < 1e-3, "tap {i} = {w}");
            }
        }
        let y = equalize(&x, 8, d.len(), &eq).unwrap();
        assert!(y.iter().zip(&d).all(|(a, b)| (a - b).abs() < 1e-3));
    }

    #[test]
    fn three_tap_channel_converges_and_generalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = symbols(512 + 4000, &mut rng);
        let x = fse_channel(&d, &[0.9, 0.4, 0.2], 30.0, 8, &mut rng);
        let eq = rls_train(&x, 8, &d[..512], TRAIN).unwrap();
        assert!(eq.training_mse_db <= -20.0, "{}", eq.training_mse_db);
        let y = equalize(&x, 8 + 2 * 512, 4000, &eq).unwrap();
        let mse = y.iter().zip(&d[512..]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 4000.0;
        let test_db = 10.0 * (mse / PAM4_SYMBOL_ENERGY).log10();
        assert!(
            (test_db - eq.training_mse_db).abs() < 2.0,
            "{test_db} vs {}",
            eq.training_mse_db
        );
    }

    #[test]
    fn unit_forgetting_matches_batch_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = symbols(6000, &mut rng);
        let x = fse_channel(&d, &[0.9, 0.4, 0.2], 30.0, 8, &mut rng);
        let params = RlsParams {
            forgetting: 1.0,
            ..TRAIN
        };
        let eq = rls_train(&x, 8, &d, params).unwrap();
        let mut u = Vec::new();
        let rows: Vec<Vec<f64>> = (0..d.len())
            .map(|k| fse_regressor(&x, 8 + 2 * k, 11, &mut u).to_vec())
            .collect();
        let ls = least_squares(&rows, &d);
        let err = eq.taps.iter().zip(&ls).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn short_training_rejected() {
        let x = vec![0.0; 100];
        assert!(rls_train(&x, 8, &[1.0; 10], TRAIN).is_err());
        assert!(EqualizerState::new(vec![0.0; 4], 0.99, 0.01).is_err());
        assert!(EqualizerState::new(vec![0.0; 5], 0.5, 0.01).is_err());
    }

    #[test]
    fn window_bounds_checked() {
        let x = vec![0.0; 40];
        let eq = EqualizerState::new(EqualizerState::delta_taps(11), 0.99, 0.01).unwrap();
        assert!(equalize(&x, 2, 4, &eq).is_err());
        assert!(equalize(&x, 5, 16, &eq).is_err());
        assert!(equalize(&x, 5, 15, &eq).is_ok());
    }

    const DD: DdParams = DdParams {
        taps: 11,
        forgetting: 0.9999,
        delta: None,
        window: 500,
    };

    fn isi(d: &[f64], taps: &dyn Fn(usize) -> f64, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..d.len())
            .map(|k| {
                let prev = if k > 0 { d[k - 1] } else { 0.0 };
                d[k] + taps(k) * prev + sigma * rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }

    fn mse(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn dd_reduces_residual_isi() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = symbols(20000, &mut rng);
        let soft = isi(&d, &|_| 0.1, 0.15, &mut rng);
        let out = dd_rls_track(&soft, DD).unwrap();
        assert!(out.frozen_at.is_none());
        let skip = 1000;
        assert!(mse(&out.symbols[skip..], &d[skip..]) < mse(&soft[skip..], &d[skip..]));
    }

    #[test]
    fn dd_clean_input_stays_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = symbols(5000, &mut rng);
        let out = dd_rls_track(&d, DD).unwrap();
        assert!(out.symbols.iter().zip(&d).all(|(a, b)| (a - b).abs() < 1e-3));
        assert!((out.taps[5] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn dd_tracks_slow_drift_near_block_retrained_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 20000;
        let d = symbols(n, &mut rng);
        let drift = |k: usize| 0.1 + 0.1 * k as f64 / n as f64;
        let soft = isi(&d, &drift, 0.2, &mut rng);
        let out = dd_rls_track(&soft, DD).unwrap();

        // Oracle: per-block least squares with the true symbols.
        let block = 1000;
        let mut oracle_err = 0.0;
        let mut track_err = 0.0;
        for b in 1..n / block {
            let range = b * block..(b + 1) * block;
            let rows: Vec<Vec<f64>> = range
                .clone()
                .map(|k| {
                    (0..11)
                        .map(|i| {
                            let idx = k as i64 + 5 - i as i64;
                            if (0..n as i64).contains(&idx) {
                                soft[idx as usize]
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            let w = least_squares(&rows, &d[range.clone()]);
            for (r, k) in rows.iter().zip(range) {
                let y: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
                oracle_err += (y - d[k]).powi(2);
                track_err += (out.symbols[k] - d[k]).powi(2);
            }
        }
        let gap_db = 10.0 * (track_err / oracle_err).log10();
        assert!(gap_db < 3.0, "{gap_db}");
    }

    #[test]
    fn dd_does_not_amplify_isolated_errors() {
        // About 1e-3 symbol errors at the input; a cold start with P = 100 I
        // turns these into error bursts.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = symbols(20000, &mut rng);
        let soft = isi(&d, &|_| 0.0, 0.3, &mut rng);
        let ser = |x: &[f64]| {
            x.iter()
                .zip(&d)
                .filter(|(a, b)| Pam4Symbol::slice(**a).amplitude() != **b)
                .count()
        };
        let warm = dd_rls_track(&soft, DD).unwrap();
        assert!(
            ser(&warm.symbols) <= ser(&soft) + 5,
            "{} vs {}",
            ser(&warm.symbols),
            ser(&soft)
        );
        let cold = dd_rls_track(
            &soft,
            DdParams {
                delta: Some(0.01),
                ..DD
            },
        )
        .unwrap();
        assert!(ser(&cold.symbols) > 10 * ser(&soft));
    }

    #[test]
    fn dd_freezes_on_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = symbols(6000, &mut rng);
        let mut soft = isi(&d, &|_| 0.05, 0.1, &mut rng);
        // Channel collapses halfway: decisions become garbage.
        for v in soft.iter_mut().skip(3000) {
            *v = 4.0 * rng.sample::<f64, _>(StandardNormal);
        }
        let out = dd_rls_track(&soft, DD).unwrap();
        let at = out.frozen_at.expect("monitor should trip");
        assert!(at >= 3000, "{at}");
    }
}
