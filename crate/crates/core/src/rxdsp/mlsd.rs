//! Two-tap post filter and the matching memory-1 Viterbi detector.

use crate::framing::{demap_pam4, Pam4Symbol};

/// `y[n] = x[n] + alpha x[n-1]`, zero history before the first sample.
pub fn post_filter(x: &[f64], alpha: f64) -> Vec<f64> {
    let mut prev = 0.0;
    x.iter()
        .map(|&v| {
            let y = v + alpha * prev;
            prev = v;
            y
        })
        .collect()
}

/// Squared-error metric of a hypothesised symbol sequence through `[1, alpha]`.
pub fn path_metric(y: &[f64], symbols: &[Pam4Symbol], alpha: f64) -> f64 {
    let mut prev = 0.0;
    y.iter()
        .zip(symbols)
        .map(|(&yn, s)| {
            let a = s.amplitude();
            let d = yn - (a + alpha * prev);
            prev = a;
            d * d
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlsdOutput {
    pub symbols: Vec<Pam4Symbol>,
    pub metric: f64,
}

/// Viterbi search over the 4-state trellis whose state is the previous
/// symbol, with full-sequence traceback. Ties prefer the higher level, which
/// matches the slicer at `alpha = 0`.
pub fn mlsd_viterbi(y: &[f64], alpha: f64) -> MlsdOutput {
    if y.is_empty() {
        return MlsdOutput {
            symbols: Vec::new(),
            metric: 0.0,
        };
    }
    let levels = Pam4Symbol::ALL.map(|s| s.amplitude());
    let mut metric = [0.0f64; 4];
    for (s, m) in metric.iter_mut().enumerate() {
        let d = y[0] - levels[s];
        *m = d * d;
    }
    let mut back: Vec<[u8; 4]> = Vec::with_capacity(y.len());
    back.push([0; 4]);
    for &yn in &y[1..] {
        let mut next = [f64::INFINITY; 4];
        let mut from = [0u8; 4];
        for s in 0..4 {
            for p in 0..4 {
                let d = yn - (levels[s] + alpha * levels[p]);
                let m = metric[p] + d * d;
                if m <= next[s] {
                    next[s] = m;
                    from[s] = p as u8;
                }
            }
        }
        metric = next;
        back.push(from);
    }
    let mut state = 0usize;
    for s in 1..4 {
        if metric[s] <= metric[state] {
            state = s;
        }
    }
    let total = metric[state];
    let mut symbols = vec![Pam4Symbol::M3; y.len()];
    for n in (0..y.len()).rev() {
        symbols[n] = Pam4Symbol::ALL[state];
        state = back[n][state] as usize;
    }
    MlsdOutput { symbols, metric: total }
}

pub fn slice(x: &[f64]) -> Vec<Pam4Symbol> {
    x.iter().map(|&v| Pam4Symbol::slice(v)).collect()
}

/// Nearest-level decisions (thresholds -2, 0, +2; ties upward) then Gray demap.
pub fn slice_and_demap(x: &[f64]) -> Vec<u8> {
    demap_pam4(&slice(x))
}
