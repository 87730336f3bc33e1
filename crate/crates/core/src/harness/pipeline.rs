//! End-to-end run: framing -> txdsp -> channel -> rxdsp -> metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, SimConfig};
use crate::channel::{Channel, LinkConfig};
use crate::error::Result;
use crate::framing::{build_frame, demap_pam4, random_bits, Pam4Symbol, SymbolFrame};
use crate::metrics::{count_ber, default_net_rate, BerReport};
use crate::rxdsp::{DspConfig, Receiver, RxOutput};
use crate::signal::SampledWaveform;
use crate::txdsp::{dac_model, RationalShaper};

/// Builds frames and the DAC waveform for one frame period.
#[derive(Debug, Clone)]
pub struct Transmitter {
    dsp: DspConfig,
    shaper: RationalShaper,
    period_symbols: usize,
}

impl Transmitter {
    pub fn new(link: &LinkConfig, dsp: &DspConfig) -> Result<Self> {
        let shaper = RationalShaper::new(link.baud, link.dac_rate, dsp.rolloff, dsp.rrc_span)?;
        let m = link.symbol_period_multiple()?;
        let period_symbols = dsp.layout.total_len().div_ceil(m) * m;
        Ok(Self {
            dsp: dsp.clone(),
            shaper,
            period_symbols,
        })
    }

    /// Symbols per waveform period: the frame plus zero-level padding up to a
    /// length every sample grid divides.
    pub fn period_symbols(&self) -> usize {
        self.period_symbols
    }

    pub fn random_frame(&self, rng: &mut ChaCha8Rng) -> Result<SymbolFrame> {
        let bits = random_bits(self.dsp.layout.payload_bits(), rng);
        build_frame(self.dsp.layout, &bits, self.dsp.preamble_seed)
    }

    pub fn modulate(&self, frame: &SymbolFrame) -> Result<SampledWaveform> {
        let mut levels = frame.levels();
        levels.resize(self.period_symbols, 0.0);
        dac_model(&self.shaper.shape(&levels)?, &self.dsp.dac)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub sync_offset: usize,
    pub sync_peak: f64,
    pub sync_psr: f64,
    pub training_mse_db: f64,
    pub dd_frozen_at: Option<usize>,
    pub ffe_taps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    /// Result of the last enabled detection stage.
    pub ber: BerReport,
    pub ffe: BerReport,
    pub dd: Option<BerReport>,
    pub mlsd: Option<BerReport>,
    pub frames: Vec<FrameDiagnostics>,
}

fn stage_ber(tx_bits: &[u8], decisions: &[Pam4Symbol]) -> Result<BerReport> {
    count_ber(tx_bits, &demap_pam4(decisions))
}

/// Seed of frame `index` within a run.
pub fn frame_seed(run_seed: u64, index: usize) -> u64 {
    derive_seed(run_seed, u64::MAX, index as u64)
}

/// Simulates `cfg.frames` independent frames. Frame `i` draws payload bits
/// from ChaCha8 seeded by [`frame_seed`] and channel noise from a second
/// stream that also mixes in `link.rng_seed`.
pub fn run_single(cfg: &SimConfig, seed: u64) -> Result<RunReport> {
    cfg.validate()?;
    let tx = Transmitter::new(&cfg.link, &cfg.dsp)?;
    let channel = Channel::new(cfg.link.clone())?;
    let rx = Receiver::new(cfg.dsp.clone(), cfg.link.baud)?;
    let mut ffe = Vec::with_capacity(cfg.frames);
    let mut dd = Vec::new();
    let mut mlsd = Vec::new();
    let mut frames = Vec::with_capacity(cfg.frames);
    for i in 0..cfg.frames {
        let fs = frame_seed(seed, i);
        let mut bits_rng = ChaCha8Rng::seed_from_u64(fs);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(fs, cfg.link.rng_seed, 1));
        let frame = tx.random_frame(&mut bits_rng)?;
        let capture = channel.transmit(&tx.modulate(&frame)?, &mut noise_rng)?;
        let out: RxOutput = rx.process(&capture)?;
        ffe.push(stage_ber(&frame.payload_bits, &out.ffe)?);
        if let Some(d) = &out.dd {
            dd.push(stage_ber(&frame.payload_bits, d)?);
        }
        if let Some(m) = &out.mlsd {
            mlsd.push(stage_ber(&frame.payload_bits, m)?);
        }
        frames.push(FrameDiagnostics {
            sync_offset: out.sync.offset,
            sync_peak: out.sync.peak,
            sync_psr: out.sync.psr,
            training_mse_db: out.training_mse_db,
            dd_frozen_at: out.dd_frozen_at,
            ffe_taps: out.ffe_taps,
        });
    }
    let net = default_net_rate(cfg.link.baud, &cfg.dsp.layout);
    let pool = |r: &[BerReport]| -> Result<Option<BerReport>> {
        if r.is_empty() {
            return Ok(None);
        }
        let mut m = BerReport::merge(r)?;
        m.net_rate = Some(net);
        Ok(Some(m))
    };
    let ffe = pool(&ffe)?.expect("at least one frame");
    let dd = pool(&dd)?;
    let mlsd = pool(&mlsd)?;
    let ber = mlsd.clone().or_else(|| dd.clone()).unwrap_or_else(|| ffe.clone());
    Ok(RunReport {
        seed,
        ber,
        ffe,
        dd,
        mlsd,
        frames,
    })
}
