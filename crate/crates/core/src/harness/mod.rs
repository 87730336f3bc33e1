//! Configuration, presets, single runs and Monte-Carlo sweeps.

pub mod pipeline;
pub mod sweep;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::LinkConfig;
use crate::error::{Error, Result};
use crate::rxdsp::{DspConfig, EqualizerMode};

pub use pipeline::{run_single, FrameDiagnostics, RunReport, Transmitter};
pub use sweep::{emit_csv, parse_csv, run_sweep, write_dat, CsvRow, SweepCell, SweepPoint, SweepResult, SweepSpec};

/// Emulated received power maps onto OSNR as `osnr_db = rop_dbm + offset`.
/// The default puts 0 dBm at the preset operating point.
pub const DEFAULT_ROP_OSNR_OFFSET_DB: f64 = PRESET_OSNR_DB;

/// Everything needed to run one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub link: LinkConfig,
    pub dsp: DspConfig,
    /// Frames per run; each adds `2 * payload_len` compared bits.
    pub frames: usize,
    pub master_seed: u64,
    pub rop_osnr_offset_db: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            link: LinkConfig::default(),
            dsp: DspConfig::default(),
            frames: 5,
            master_seed: 1,
            rop_osnr_offset_db: DEFAULT_ROP_OSNR_OFFSET_DB,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.dsp.validate()?;
        if self.frames == 0 {
            return Err(Error::Config("frames must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Emulated received optical power, when the OSNR was set through it.
    pub fn rop_dbm(&self) -> Option<f64> {
        self.link.osnr_db.map(|o| o - self.rop_osnr_offset_db)
    }

    pub fn set_rop_dbm(&mut self, rop_dbm: f64) {
        self.link.osnr_db = Some(rop_dbm + self.rop_osnr_offset_db);
    }

    /// Sets a sweep parameter. Accepts every numeric or boolean field of
    /// `link` and `dsp` by name (`dsp.layout.*` and `dsp.dac.*` included, with
    /// an optional `link.`/`dsp.` prefix), `frames`, plus the derived axes
    /// `rop_dbm`, `bit_rate` (PAM-4 line rate in bit/s, sets `baud`) and
    /// `fiber_length_km`.
    pub fn apply_param(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Config(format!("{name}: non-finite value {value}")));
        }
        match name {
            "rop_dbm" => {
                self.set_rop_dbm(value);
                return Ok(());
            }
            "bit_rate" => return self.apply_param("baud", value / 2.0),
            "fiber_length_km" => return self.apply_param("fiber_length", value * 1e3),
            "frames" => {
                self.frames = as_count(name, value)? as usize;
                return Ok(());
            }
            _ => {}
        }
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let path: Vec<&str> = name.split('.').collect();
        let slot = find_field(&mut tree, &path).ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))?;
        *slot = match slot {
            serde_json::Value::Bool(_) => serde_json::Value::Bool(value != 0.0),
            serde_json::Value::Number(n) if n.is_u64() || n.is_i64() => serde_json::Value::from(as_count(name, value)?),
            serde_json::Value::Number(_) | serde_json::Value::Null => serde_json::Value::from(value),
            _ => return Err(Error::Config(format!("parameter '{name}' is not numeric"))),
        };
        let updated: Self = serde_json::from_value(tree).map_err(|e| Error::Config(format!("{name}: {e}")))?;
        *self = updated;
        Ok(())
    }
}

fn as_count(name: &str, value: f64) -> Result<u64> {
    if value < 0.0 || value.fract() != 0.0 {
        return Err(Error::Config(format!(
            "{name} needs a non-negative integer, got {value}"
        )));
    }
    Ok(value as u64)
}

fn find_field<'a>(tree: &'a mut serde_json::Value, path: &[&str]) -> Option<&'a mut serde_json::Value> {
    let path = match path {
        ["link" | "dsp", ..] if path.len() > 1 => return descend(tree, path),
        _ => path,
    };
    // Unqualified names: link fields first, then dsp, then nested dsp groups.
    for root in [&["link"][..], &["dsp"], &["dsp", "layout"], &["dsp", "dac"]] {
        let full: Vec<&str> = root.iter().chain(path).copied().collect();
        if descend(tree, &full).is_some() {
            return descend(tree, &full);
        }
    }
    None
}

fn descend<'a>(tree: &'a mut serde_json::Value, path: &[&str]) -> Option<&'a mut serde_json::Value> {
    let mut node = tree;
    for key in path {
        node = node.as_object_mut()?.get_mut(*key)?;
    }
    if node.is_object() || node.is_array() {
        return None;
    }
    Some(node)
}

/// Stable 64-bit cell seed from `(master, point, trial)`: each word is folded
/// in with a SplitMix64 finalizer.
pub fn derive_seed(master: u64, point: u64, trial: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut h = mix(master.wrapping_add(GOLDEN));
    h = mix(h ^ point.wrapping_add(GOLDEN.wrapping_mul(2)));
    mix(h ^ trial.wrapping_add(GOLDEN.wrapping_mul(3)))
}

/// OSNR used by the link presets. The drive peak sits well inside the MZM
/// transfer, so the modulation depth is small and error rates only become
/// informative in the mid-40s; at this point the back-to-back link runs
/// near 1e-6 with a good post filter and 2 km near 1e-4.
pub const PRESET_OSNR_DB: f64 = 46.0;

const PRESETS: &[(&str, &str)] = &[
    ("loopback", "80 GBd, no fiber, no noise, unlimited analog bandwidth"),
    ("80g-btb", "80 GBd back-to-back, 21 GHz modulator"),
    ("80g-1km", "80 GBd over 1 km"),
    ("80g-2km", "80 GBd over 2 km"),
    ("84g-btb", "84 GBd back-to-back, 21 GHz modulator"),
    ("84g-1km", "84 GBd over 1 km"),
    ("84g-2km", "84 GBd over 2 km"),
];

pub fn preset_names() -> impl Iterator<Item = (&'static str, &'static str)> {
    PRESETS.iter().copied()
}

/// Unlimited analog bandwidth for loopback runs.
pub const WIDEBAND_HZ: f64 = 1e15;

pub fn preset(name: &str) -> Result<SimConfig> {
    let mut cfg = SimConfig::default();
    if name == "loopback" {
        cfg.link.eo_3db_bandwidth = WIDEBAND_HZ;
        cfg.link.rx_3db_bandwidth = WIDEBAND_HZ;
        cfg.link.osnr_db = None;
        cfg.dsp.mlsd = false;
        return Ok(cfg);
    }
    let (rate, reach) = name
        .split_once('-')
        .ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?;
    cfg.link.baud = match rate {
        "80g" => 80e9,
        "84g" => 84e9,
        _ => return Err(Error::Config(format!("unknown preset '{name}'"))),
    };
    cfg.link.fiber_length = match reach {
        "btb" => 0.0,
        "1km" => 1e3,
        "2km" => 2e3,
        _ => return Err(Error::Config(format!("unknown preset '{name}'"))),
    };
    cfg.link.osnr_db = Some(PRESET_OSNR_DB);
    cfg.validate()?;
    Ok(cfg)
}

/// Sweep presets: `alpha-<sim preset>`, `rate-<reach>[-nomlsd]` and
/// `rop-<sim preset>`.
pub fn sweep_preset(name: &str) -> Result<SweepSpec> {
    let unknown = || Error::Config(format!("unknown sweep preset '{name}'"));
    let (kind, rest) = name.split_once('-').ok_or_else(unknown)?;
    match kind {
        "alpha" => Ok(SweepSpec {
            base: preset(rest)?,
            param: "alpha".into(),
            values: (0..=10).map(|i| i as f64 / 10.0).collect(),
            trials: 20,
        }),
        "rate" => {
            let (reach, mlsd) = match rest.strip_suffix("-nomlsd") {
                Some(r) => (r, false),
                None => (rest, true),
            };
            let mut base = preset(&format!("80g-{reach}")).map_err(|_| unknown())?;
            base.dsp.mlsd = mlsd;
            base.dsp.alpha = 0.6;
            Ok(SweepSpec {
                base,
                param: "bit_rate".into(),
                values: [100e9, 112e9, 128e9, 144e9, 150e9, 160e9, 168e9].to_vec(),
                trials: 10,
            })
        }
        "rop" => {
            let mut base = preset(rest)?;
            let long = base.link.fiber_length >= 2e3;
            base.dsp.alpha = match (base.link.baud >= 84e9, long) {
                (false, false) => 0.6,
                (false, true) => 0.8,
                (true, false) => 0.5,
                (true, true) => 0.9,
            };
            Ok(SweepSpec {
                base,
                param: "rop_dbm".into(),
                values: (0..=14).map(|i| -14.0 + i as f64).collect(),
                trials: 5,
            })
        }
        _ => Err(unknown()),
    }
}

/// Receiver configuration without any equalization, for ISI-limited baselines.
pub fn without_equalization(mut cfg: SimConfig) -> SimConfig {
    cfg.dsp.equalizer = EqualizerMode::None;
    cfg.dsp.dd_rls = false;
    cfg.dsp.mlsd = false;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        // Pinned values: changing the derivation breaks recorded sweeps.
        let golden = [
            (derive_seed(1, 0, 0), 0xda09_09b7_e125_1b72),
            (derive_seed(1, 0, 1), 0x3650_54b3_3798_6efc),
            (derive_seed(1, 1, 0), 0x9e9c_f9b7_8f56_f49c),
            (derive_seed(2, 0, 0), 0xd069_7b9c_7367_7c9d),
        ];
        for (got, want) in golden {
            assert_eq!(got, want, "{got:#x}");
        }
        let mut sorted: Vec<u64> = golden.iter().map(|g| g.0).collect();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 4);
        assert_ne!(derive_seed(0, 1, 2), derive_seed(0, 2, 1));
    }

    #[test]
    fn apply_param_paths() {
        let mut c = SimConfig::default();
        c.apply_param("alpha", 0.7).unwrap();
        assert_eq!(c.dsp.alpha, 0.7);
        c.apply_param("fiber_length_km", 2.0).unwrap();
        assert_eq!(c.link.fiber_length, 2e3);
        c.apply_param("bit_rate", 168e9).unwrap();
        assert_eq!(c.link.baud, 84e9);
        c.apply_param("rop_dbm", -5.0).unwrap();
        assert_eq!(c.link.osnr_db, Some(-5.0 + DEFAULT_ROP_OSNR_OFFSET_DB));
        assert_eq!(c.rop_dbm(), Some(-5.0));
        c.apply_param("mlsd", 0.0).unwrap();
        assert!(!c.dsp.mlsd);
        c.apply_param("ffe_taps", 31.0).unwrap();
        assert_eq!(c.dsp.ffe_taps, 31);
        c.apply_param("payload_len", 4000.0).unwrap();
        assert_eq!(c.dsp.layout.payload_len, 4000);
        c.apply_param("dsp.dac.clip_ratio", 0.9).unwrap();
        assert_eq!(c.dsp.dac.clip_ratio, 0.9);
        c.apply_param("link.vpi", 4.0).unwrap();
        assert_eq!(c.link.vpi, 4.0);
        c.apply_param("frames", 2.0).unwrap();
        assert_eq!(c.frames, 2);
    }

    #[test]
    fn apply_param_rejects() {
        let mut c = SimConfig::default();
        assert!(c.apply_param("no_such_field", 1.0).is_err());
        assert!(c.apply_param("ffe_taps", 30.5).is_err());
        assert!(c.apply_param("layout", 1.0).is_err());
        assert!(c.apply_param("equalizer", 1.0).is_err());
        assert!(c.apply_param("alpha", f64::NAN).is_err());
        assert_eq!(c, SimConfig::default());
    }

    #[test]
    fn presets_resolve() {
        for (name, _) in preset_names() {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(preset("96g-btb").is_err());
        assert_eq!(preset("84g-1km").unwrap().link.fiber_length, 1e3);
        for name in ["alpha-80g-2km", "rate-btb", "rate-btb-nomlsd", "rop-80g-1km"] {
            let s = sweep_preset(name).unwrap();
            s.validate().unwrap();
        }
        assert!(!sweep_preset("rate-btb-nomlsd").unwrap().base.dsp.mlsd);
        assert!(sweep_preset("gamma-80g-btb").is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = preset("80g-2km").unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(SimConfig::from_json(&text).unwrap(), c);
        assert!(SimConfig::from_json(r#"{"frames": 0}"#).is_err());
        assert!(SimConfig::from_json(r#"{"link": {"bogus": 1}}"#).is_err());
        assert_eq!(SimConfig::from_json("{}").unwrap(), SimConfig::default());
    }
}
