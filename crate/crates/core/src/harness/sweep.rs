//! Monte-Carlo parameter sweeps and their CSV / gnuplot output.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{run_single, RunReport};
use super::{derive_seed, SimConfig};
use crate::error::{Error, Result};
use crate::metrics::{FecThreshold, Verdicts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub base: SimConfig,
    pub param: String,
    pub values: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_trials() -> usize {
    1
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep value list is empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        for &v in &self.values {
            self.config_at(v)?;
        }
        Ok(())
    }

    pub fn config_at(&self, value: f64) -> Result<SimConfig> {
        let mut cfg = self.base.clone();
        cfg.apply_param(&self.param, value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for RunFailure {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub point: usize,
    pub trial: usize,
    pub value: f64,
    pub seed: u64,
    pub outcome: std::result::Result<RunReport, RunFailure>,
}

impl SweepCell {
    /// BER of the final stage; NaN for failed cells.
    pub fn ber(&self) -> f64 {
        self.outcome.as_ref().map_or(f64::NAN, |r| r.ber.ber)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub mean_ber: f64,
    pub min_ber: f64,
    pub max_ber: f64,
    pub ok: usize,
    pub failed: usize,
    pub verdicts: Verdicts,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub param: String,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Per-point aggregates over successful trials, in value-list order.
    pub fn points(&self) -> Vec<SweepPoint> {
        let n_points = self.cells.iter().map(|c| c.point + 1).max().unwrap_or(0);
        (0..n_points)
            .map(|p| {
                let cells: Vec<&SweepCell> = self.cells.iter().filter(|c| c.point == p).collect();
                let bers: Vec<f64> = cells.iter().map(|c| c.ber()).filter(|b| !b.is_nan()).collect();
                let mean = if bers.is_empty() {
                    f64::NAN
                } else {
                    bers.iter().sum::<f64>() / bers.len() as f64
                };
                SweepPoint {
                    value: cells.first().map_or(f64::NAN, |c| c.value),
                    mean_ber: mean,
                    min_ber: bers.iter().cloned().reduce(f64::min).unwrap_or(f64::NAN),
                    max_ber: bers.iter().cloned().reduce(f64::max).unwrap_or(f64::NAN),
                    ok: bers.len(),
                    failed: cells.len() - bers.len(),
                    verdicts: Verdicts::for_ber(mean),
                    seeds: cells.iter().map(|c| c.seed).collect(),
                }
            })
            .collect()
    }

    pub fn rows(&self) -> Vec<CsvRow> {
        self.cells
            .iter()
            .map(|c| {
                let ber = c.ber();
                let v = Verdicts::for_ber(ber);
                CsvRow {
                    param: c.value,
                    trial_seed: c.seed,
                    ber,
                    kp4: v.kp4,
                    hd7: v.hd7,
                    hd20: v.hd20,
                }
            })
            .collect()
    }
}

/// Runs every `(point, trial)` cell with seed
/// `derive_seed(master_seed, point, trial)` on a pool of `jobs` workers
/// (0 = all cores). Cell results do not depend on scheduling.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    spec.validate()?;
    let configs: Vec<SimConfig> = spec.values.iter().map(|&v| spec.config_at(v)).collect::<Result<_>>()?;
    let master = spec.base.master_seed;
    let jobs_list: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|p| (0..spec.trials).map(move |t| (p, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let cells = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(p, t)| {
                let seed = derive_seed(master, p as u64, t as u64);
                let outcome = run_single(&configs[p], seed).map_err(|e| {
                    log::warn!("{}={} trial {t}: {e}", spec.param, spec.values[p]);
                    RunFailure::from(&e)
                });
                SweepCell {
                    point: p,
                    trial: t,
                    value: spec.values[p],
                    seed,
                    outcome,
                }
            })
            .collect()
    });
    Ok(SweepResult {
        param: spec.param.clone(),
        cells,
    })
}

/// One CSV row per sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub param: f64,
    pub trial_seed: u64,
    pub ber: f64,
    #[serde(with = "verdict")]
    pub kp4: bool,
    #[serde(with = "verdict")]
    pub hd7: bool,
    #[serde(with = "verdict")]
    pub hd20: bool,
}

mod verdict {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(if *v { "pass" } else { "fail" })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.as_str() {
            "pass" => Ok(true),
            "fail" => Ok(false),
            other => Err(de::Error::custom(format!("verdict '{other}' is neither pass nor fail"))),
        }
    }
}

pub const CSV_HEADER: [&str; 6] = ["param", "trial_seed", "ber", "kp4", "hd7", "hd20"];

/// Writes the cell rows as CSV to any writer.
pub fn write_csv<W: Write>(result: &SweepResult, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in result.rows() {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(result, std::io::BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!(
            "{}: unexpected header {:?}",
            path.display(),
            header
        )));
    }
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}

/// Gnuplot-friendly aggregate table, one line per point.
pub fn write_dat(result: &SweepResult, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "# {} mean_ber min_ber max_ber ok failed", result.param).map_err(io)?;
    for p in result.points() {
        writeln!(
            f,
            "{} {:e} {:e} {:e} {} {}",
            p.value, p.mean_ber, p.min_ber, p.max_ber, p.ok, p.failed
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Smallest swept value whose mean BER is at or below `threshold`, linearly
/// interpolated in `log10(BER)` between neighbouring points. Assumes BER
/// falls as the value rises.
pub fn crossing(points: &[SweepPoint], threshold: FecThreshold) -> Option<f64> {
    let target = threshold.ber().log10();
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.mean_ber.is_finite())
        .map(|p| (p.value, p.mean_ber.max(1e-12).log10()))
        .collect();
    if usable.first()?.1 <= target {
        return Some(usable[0].0);
    }
    usable.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        (y0 > target && y1 <= target).then(|| x0 + (target - y0) * (x1 - x0) / (y1 - y0))
    })
}
