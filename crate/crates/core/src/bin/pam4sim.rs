use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pam4_link::channel::{load_ase_noise, Channel};
use pam4_link::harness::{
    self, emit_csv, pipeline::frame_seed, run_single, run_sweep, write_dat, SimConfig, SweepSpec, Transmitter,
};
use pam4_link::metrics::{fading_profile, nm_to_hz, optical_spectrum, write_curve_csv, CurvePoint};
use pam4_link::{Error, Result};

#[derive(Parser)]
#[command(name = "pam4sim", version, about = "PAM-4 IM/DD optical link simulator")]
struct Cli {
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// JSON configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset (see `pam4sim presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Master seed; overrides the configured one.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and print its report as JSON.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Frames to simulate; overrides the configured count.
        #[arg(long)]
        frames: Option<usize>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep and write one CSV row per (point, trial).
    Sweep {
        #[command(flatten)]
        source: Source,
        /// Trials per point; overrides the sweep's count.
        #[arg(long)]
        trials: Option<usize>,
        /// Swept parameter; overrides the sweep's.
        #[arg(long, requires = "values")]
        param: Option<String>,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',', requires = "param")]
        values: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-point aggregates in gnuplot format.
        #[arg(long)]
        dat: Option<PathBuf>,
    },
    /// Export the small-signal CD fading curve.
    Fading {
        #[command(flatten)]
        source: Source,
        /// Fiber length in km; overrides the configured length.
        #[arg(long)]
        length_km: Option<f64>,
        #[arg(long, default_value_t = 60e9)]
        f_max: f64,
        #[arg(long, default_value_t = 0.1e9)]
        f_step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the optical spectrum of one transmitted frame.
    Spectrum {
        #[command(flatten)]
        source: Source,
        /// Resolution bandwidth in nm.
        #[arg(long, default_value_t = 0.02)]
        rbw_nm: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// List simulation and sweep presets.
    Presets,
}

fn sim_config(source: &Source) -> Result<SimConfig> {
    let mut cfg = match (&source.config, &source.preset) {
        (Some(path), _) => SimConfig::load(path)?,
        (None, Some(name)) => harness::preset(name)?,
        (None, None) => SimConfig::default(),
    };
    if let Some(seed) = source.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn sweep_spec(source: &Source) -> Result<SweepSpec> {
    let mut spec = match (&source.config, &source.preset) {
        (Some(path), _) => SweepSpec::load(path)?,
        (None, Some(name)) => harness::sweep_preset(name)?,
        (None, None) => return Err(Error::Config("sweep needs --config or --preset".into())),
    };
    if let Some(seed) = source.seed {
        spec.base.master_seed = seed;
    }
    Ok(spec)
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { source, frames, out } => {
            let mut cfg = sim_config(&source)?;
            if let Some(f) = frames {
                cfg.frames = f;
            }
            let report = run_single(&cfg, cfg.master_seed)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            write_text(out.as_deref(), &text)
        }
        Command::Sweep {
            source,
            trials,
            param,
            values,
            out,
            dat,
        } => {
            let mut spec = sweep_spec(&source)?;
            if let Some(t) = trials {
                spec.trials = t;
            }
            if let (Some(p), Some(v)) = (param, values) {
                spec.param = p;
                spec.values = v;
            }
            let result = run_sweep(&spec, cli.jobs)?;
            emit_csv(&result, &out)?;
            if let Some(dat) = dat {
                write_dat(&result, &dat)?;
            }
            let failed = result.cells.iter().filter(|c| c.outcome.is_err()).count();
            log::info!("{} cells, {failed} failed", result.cells.len());
            Ok(())
        }
        Command::Fading {
            source,
            length_km,
            f_max,
            f_step,
            out,
        } => {
            let cfg = sim_config(&source)?;
            if !(f_step > 0.0 && f_max > 0.0) {
                return Err(Error::Config("f_max and f_step must be positive".into()));
            }
            let length = length_km.map_or(cfg.link.fiber_length, |l| l * 1e3);
            let grid: Vec<f64> = (0..=(f_max / f_step).round() as usize)
                .map(|i| i as f64 * f_step)
                .collect();
            let profile = fading_profile(length, cfg.link.dispersion, cfg.link.wavelength, &grid);
            log::info!("first 3-dB frequency {:.3} GHz", profile.first_3db_hz / 1e9);
            write_curve_csv(&out, &profile.points)
        }
        Command::Spectrum { source, rbw_nm, out } => {
            let cfg = sim_config(&source)?;
            cfg.validate()?;
            let tx = Transmitter::new(&cfg.link, &cfg.dsp)?;
            let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(cfg.master_seed, 0));
            let frame = tx.random_frame(&mut rng)?;
            let channel = Channel::new(cfg.link.clone())?;
            let field = channel.optical(&tx.modulate(&frame)?)?;
            let field = load_ase_noise(&field, cfg.link.osnr_db, &mut rng)?;
            let points: Vec<CurvePoint> = optical_spectrum(&field, nm_to_hz(rbw_nm, cfg.link.wavelength))?;
            write_curve_csv(&out, &points)
        }
        Command::Presets => {
            let mut lines: Vec<String> = harness::preset_names().map(|(n, d)| format!("{n:12} {d}")).collect();
            lines.push(String::new());
            lines.push("sweeps: alpha-<preset>, rate-<btb|1km|2km>[-nomlsd], rop-<preset>".into());
            write_text(None, &lines.join("\n"))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
