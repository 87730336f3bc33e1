//! PAM-4 symbols, M-sequence preambles and frame assembly.
//!
//! A frame is `[sync x2 | train x4 | payload]`. Sync sequences are binary
//! antipodal (levels -3/+3) for a clean correlation peak; training sequences
//! use all four levels so the equalizer sees the full constellation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One PAM-4 symbol. Gray mapping: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pam4Symbol {
    M3,
    M1,
    P1,
    P3,
}

impl Pam4Symbol {
    pub const ALL: [Pam4Symbol; 4] = [Pam4Symbol::M3, Pam4Symbol::M1, Pam4Symbol::P1, Pam4Symbol::P3];

    pub fn level(self) -> i8 {
        match self {
            Pam4Symbol::M3 => -3,
            Pam4Symbol::M1 => -1,
            Pam4Symbol::P1 => 1,
            Pam4Symbol::P3 => 3,
        }
    }

    pub fn amplitude(self) -> f64 {
        self.level() as f64
    }

    pub fn from_level(level: i8) -> Option<Self> {
        match level {
            -3 => Some(Pam4Symbol::M3),
            -1 => Some(Pam4Symbol::M1),
            1 => Some(Pam4Symbol::P1),
            3 => Some(Pam4Symbol::P3),
            _ => None,
        }
    }

    /// Gray-coded bit pair, most significant bit first.
    pub fn bits(self) -> [u8; 2] {
        match self {
            Pam4Symbol::M3 => [0, 0],
            Pam4Symbol::M1 => [0, 1],
            Pam4Symbol::P1 => [1, 1],
            Pam4Symbol::P3 => [1, 0],
        }
    }

    pub fn from_bits(msb: u8, lsb: u8) -> Self {
        match (msb & 1, lsb & 1) {
            (0, 0) => Pam4Symbol::M3,
            (0, 1) => Pam4Symbol::M1,
            (1, 1) => Pam4Symbol::P1,
            _ => Pam4Symbol::P3,
        }
    }

    /// Nearest level with thresholds at -2, 0 and +2. A value exactly on a
    /// threshold resolves to the level above it.
    pub fn slice(x: f64) -> Self {
        if x >= 2.0 {
            Pam4Symbol::P3
        } else if x >= 0.0 {
            Pam4Symbol::P1
        } else if x >= -2.0 {
            Pam4Symbol::M1
        } else {
            Pam4Symbol::M3
        }
    }
}

/// Frame geometry in symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameLayout {
    pub sync_seq_len: usize,
    pub sync_seq_count: usize,
    pub train_seq_len: usize,
    pub train_seq_count: usize,
    pub payload_len: usize,
}

impl Default for FrameLayout {
    fn default() -> Self {
        Self {
            sync_seq_len: 64,
            sync_seq_count: 2,
            train_seq_len: 128,
            train_seq_count: 4,
            payload_len: 20000,
        }
    }
}

impl FrameLayout {
    pub fn validate(&self) -> Result<()> {
        if self.sync_seq_len == 0 || self.sync_seq_count == 0 || self.train_seq_len == 0 || self.train_seq_count == 0 {
            return Err(Error::invalid("preamble sequence lengths and counts must be >= 1"));
        }
        for len in [self.sync_seq_len, self.train_seq_len] {
            if len > 1 << MAX_ORDER {
                return Err(Error::invalid(format!(
                    "preamble sequence of {len} symbols exceeds the longest M-sequence"
                )));
            }
        }
        Ok(())
    }

    pub fn sync_len(&self) -> usize {
        self.sync_seq_len * self.sync_seq_count
    }

    pub fn train_len(&self) -> usize {
        self.train_seq_len * self.train_seq_count
    }

    pub fn preamble_len(&self) -> usize {
        self.sync_len() + self.train_len()
    }

    pub fn total_len(&self) -> usize {
        self.preamble_len() + self.payload_len
    }

    pub fn payload_bits(&self) -> usize {
        2 * self.payload_len
    }
}

pub const MIN_ORDER: u32 = 3;
pub const MAX_ORDER: u32 = 16;

/// Feedback exponents of the default primitive polynomial for each register
/// order: `x^n + sum(x^t) + 1`.
fn primitive_taps(order: u32) -> &'static [u32] {
    match order {
        3 => &[3, 2],
        4 => &[4, 3],
        5 => &[5, 3],
        6 => &[6, 5],
        7 => &[7, 6],
        8 => &[8, 6, 5, 4],
        9 => &[9, 5],
        10 => &[10, 7],
        11 => &[11, 9],
        12 => &[12, 6, 4, 1],
        13 => &[13, 4, 3, 1],
        14 => &[14, 5, 3, 1],
        15 => &[15, 14],
        16 => &[16, 15, 13, 4],
        _ => unreachable!("order checked by caller"),
    }
}

fn check_order(order: u32, seed_state: u32) -> Result<()> {
    if !(MIN_ORDER..=MAX_ORDER).contains(&order) {
        return Err(Error::invalid(format!(
            "register order {order} outside [{MIN_ORDER}, {MAX_ORDER}]"
        )));
    }
    if seed_state == 0 {
        return Err(Error::invalid("LFSR seed state must be nonzero"));
    }
    if seed_state >> order != 0 {
        return Err(Error::invalid(format!(
            "seed state {seed_state:#x} wider than {order} bits"
        )));
    }
    Ok(())
}

/// Maximal-length LFSR output bits, period `2^order - 1`, cyclically
/// extended to `out_len`. Recurrence `a[k+n] = a[k] ^ xor(a[k+t])` over the
/// non-leading polynomial exponents; the seed holds `a[0..n]`, LSB first.
pub fn msequence_bits(order: u32, seed_state: u32, out_len: usize) -> Result<Vec<u8>> {
    check_order(order, seed_state)?;
    let period = (1usize << order) - 1;
    let taps = primitive_taps(order);
    let mut state = seed_state;
    let mut one_period = Vec::with_capacity(period);
    for _ in 0..period {
        one_period.push((state & 1) as u8);
        let mut fb = state & 1;
        for &t in &taps[1..] {
            fb ^= (state >> t) & 1;
        }
        state = (state >> 1) | (fb << (order - 1));
    }
    Ok((0..out_len).map(|i| one_period[i % period]).collect())
}

/// Binary antipodal M-sequence: bit 1 -> +3, bit 0 -> -3.
pub fn generate_msequence(order: u32, seed_state: u32, out_len: usize) -> Result<Vec<Pam4Symbol>> {
    if out_len == 0 {
        return Err(Error::invalid("out_len must be >= 1"));
    }
    Ok(msequence_bits(order, seed_state, out_len)?
        .into_iter()
        .map(|b| if b == 1 { Pam4Symbol::P3 } else { Pam4Symbol::M3 })
        .collect())
}

/// Four-level training sequence: symbol `k` Gray-maps the LFSR bit pair
/// `(a[2k], a[2k+1])` taken modulo the period, so the symbol stream keeps the
/// period `2^order - 1` and extends cyclically.
pub fn training_sequence(order: u32, seed_state: u32, out_len: usize) -> Result<Vec<Pam4Symbol>> {
    if out_len == 0 {
        return Err(Error::invalid("out_len must be >= 1"));
    }
    let period = (1usize << order) - 1;
    let bits = msequence_bits(order, seed_state, period)?;
    Ok((0..out_len)
        .map(|k| Pam4Symbol::from_bits(bits[(2 * k) % period], bits[(2 * k + 1) % period]))
        .collect())
}

/// Smallest register order whose period covers `len - 1` symbols.
pub fn order_for_len(len: usize) -> u32 {
    let mut order = MIN_ORDER;
    while (1usize << order) < len && order < MAX_ORDER {
        order += 1;
    }
    order
}

pub fn map_bits_to_pam4(bits: &[u8]) -> Result<Vec<Pam4Symbol>> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::invalid(format!("odd bit count {}", bits.len())));
    }
    if let Some(i) = bits.iter().position(|&b| b > 1) {
        return Err(Error::invalid(format!("bit {i} is {} (expected 0 or 1)", bits[i])));
    }
    Ok(bits
        .chunks_exact(2)
        .map(|p| Pam4Symbol::from_bits(p[0], p[1]))
        .collect())
}

pub fn demap_pam4(symbols: &[Pam4Symbol]) -> Vec<u8> {
    symbols.iter().flat_map(|s| s.bits()).collect()
}

pub fn random_bits<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u8> {
    (0..n).map(|_| rng.random::<bool>() as u8).collect()
}

/// Known preamble shared by transmitter and receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preamble {
    pub sync: Vec<Pam4Symbol>,
    pub training: Vec<Pam4Symbol>,
}

impl Preamble {
    /// Deterministic in `(layout, seed)`. Each sequence uses a distinct LFSR
    /// start state so that no two preamble segments are identical.
    pub fn generate(layout: &FrameLayout, seed: u64) -> Result<Self> {
        layout.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sync = segments(layout.sync_seq_len, layout.sync_seq_count, &mut rng, generate_msequence)?;
        let training = segments(
            layout.train_seq_len,
            layout.train_seq_count,
            &mut rng,
            training_sequence,
        )?;
        Ok(Self { sync, training })
    }

    /// Sync followed by training, i.e. every symbol ahead of the payload.
    pub fn symbols(&self) -> Vec<Pam4Symbol> {
        self.sync.iter().chain(&self.training).copied().collect()
    }
}

fn segments(
    len: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
    gen: fn(u32, u32, usize) -> Result<Vec<Pam4Symbol>>,
) -> Result<Vec<Pam4Symbol>> {
    let order = order_for_len(len);
    let max_state = (1u32 << order) - 1;
    let mut used = Vec::with_capacity(count);
    let mut out = Vec::with_capacity(len * count);
    while used.len() < count {
        let state = rng.random_range(1..=max_state);
        // Distinct states only yield distinct sequences while count < period.
        if used.contains(&state) && used.len() < max_state as usize {
            continue;
        }
        used.push(state);
        out.extend(gen(order, state, len)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolFrame {
    pub layout: FrameLayout,
    pub symbols: Vec<Pam4Symbol>,
    /// Ground-truth payload bits.
    pub payload_bits: Vec<u8>,
}

impl SymbolFrame {
    pub fn levels(&self) -> Vec<f64> {
        self.symbols.iter().map(|s| s.amplitude()).collect()
    }

    pub fn payload(&self) -> &[Pam4Symbol] {
        &self.symbols[self.layout.preamble_len()..]
    }
}

pub fn build_frame(layout: FrameLayout, payload_bits: &[u8], preamble_seed: u64) -> Result<SymbolFrame> {
    layout.validate()?;
    if payload_bits.len() != layout.payload_bits() {
        return Err(Error::LengthMismatch {
            expected: layout.payload_bits(),
            actual: payload_bits.len(),
        });
    }
    let preamble = Preamble::generate(&layout, preamble_seed)?;
    let mut symbols = preamble.symbols();
    symbols.extend(map_bits_to_pam4(payload_bits)?);
    debug_assert_eq!(symbols.len(), layout.total_len());
    Ok(SymbolFrame {
        layout,
        symbols,
        payload_bits: payload_bits.to_vec(),
    })
}
