//! C ABI for the `pam4_link` simulator.
//!
//! Simulations and sweep results live behind opaque handles that the caller
//! frees. Every fallible entry point returns a [`Pam4Status`]; on failure the
//! message is available from [`pam4_last_error_message`] on the same thread.
//! Panics never cross the boundary: they are caught and reported as
//! [`Pam4Status::Panic`].
//!
//! The C header `include/pam4link.h` is generated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pam4_link::framing::FrameLayout;
use pam4_link::harness::{self, emit_csv, run_single, run_sweep, SimConfig, SweepResult, SweepSpec};
use pam4_link::metrics::{self, BerReport};
use pam4_link::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pam4Status {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    LengthMismatch = 4,
    Aliasing = 5,
    SyncFailure = 6,
    Divergence = 7,
    Config = 8,
    Io = 9,
    Csv = 10,
    OutOfRange = 11,
    Panic = 12,
}

impl From<&Error> for Pam4Status {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Pam4Status::InvalidArgument,
            Error::LengthMismatch { .. } => Pam4Status::LengthMismatch,
            Error::Aliasing { .. } => Pam4Status::Aliasing,
            Error::SyncFailure { .. } => Pam4Status::SyncFailure,
            Error::Divergence { .. } => Pam4Status::Divergence,
            Error::Config(_) => Pam4Status::Config,
            Error::Io { .. } => Pam4Status::Io,
            Error::Csv { .. } => Pam4Status::Csv,
        }
    }
}

/// A simulation configuration. Create with one of the `pam4_simulator_*`
/// constructors and release with [`pam4_simulator_free`].
pub struct Pam4Simulator {
    cfg: SimConfig,
}

/// The cells of a finished sweep. Release with [`pam4_sweep_free`].
pub struct Pam4Sweep {
    result: SweepResult,
}

/// BER of one detection stage.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pam4StageBer {
    /// False when the stage was disabled; the other fields are then zero.
    pub present: bool,
    pub bits_compared: u64,
    pub bit_errors: u64,
    pub ber: f64,
}

/// Summary of one run. `ber` is the last enabled stage.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pam4BerReport {
    pub seed: u64,
    pub bits_compared: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub net_rate: f64,
    pub passes_kp4: bool,
    pub passes_hd7: bool,
    pub passes_hd20: bool,
    pub ffe: Pam4StageBer,
    pub dd: Pam4StageBer,
    pub mlsd: Pam4StageBer,
}

/// One `(point, trial)` cell of a sweep. `status` is `Ok` for successful
/// runs; failed runs report their error category and a NaN `ber`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pam4SweepCell {
    pub point: usize,
    pub trial: usize,
    pub value: f64,
    pub seed: u64,
    pub ber: f64,
    pub status: Pam4Status,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(Pam4Status, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(Pam4Status::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(Pam4Status::NullPointer, format!("{what} is NULL"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> Pam4Status {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => Pam4Status::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            Pam4Status::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(Pam4Status::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn stage(r: Option<&BerReport>) -> Pam4StageBer {
    match r {
        Some(r) => Pam4StageBer {
            present: true,
            bits_compared: r.bits_compared,
            bit_errors: r.bit_errors,
            ber: r.ber,
        },
        None => Pam4StageBer {
            present: false,
            bits_compared: 0,
            bit_errors: 0,
            ber: 0.0,
        },
    }
}

fn boxed_simulator(cfg: SimConfig, out: *mut *mut Pam4Simulator) -> Result<(), Failure> {
    cfg.validate()?;
    let out = unsafe { out_arg(out, "out")? };
    *out = Box::into_raw(Box::new(Pam4Simulator { cfg }));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn pam4_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pam4_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a simulator with the default configuration.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pam4_simulator_new(out: *mut *mut Pam4Simulator) -> Pam4Status {
    guard(|| boxed_simulator(SimConfig::default(), out))
}

/// Creates a simulator from a named preset.
///
/// # Safety
/// `name` must be NULL or a NUL-terminated string; `out` must be NULL or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pam4_simulator_from_preset(name: *const c_char, out: *mut *mut Pam4Simulator) -> Pam4Status {
    guard(|| boxed_simulator(harness::preset(str_arg(name, "name")?)?, out))
}

/// Creates a simulator from a JSON configuration document.
///
/// # Safety
/// `json` must be NULL or a NUL-terminated string; `out` must be NULL or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pam4_simulator_from_json(json: *const c_char, out: *mut *mut Pam4Simulator) -> Pam4Status {
    guard(|| boxed_simulator(SimConfig::from_json(str_arg(json, "json")?)?, out))
}

/// Releases a simulator. NULL is ignored.
///
/// # Safety
/// `sim` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pam4_simulator_free(sim: *mut Pam4Simulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Sets one configuration parameter by name, with the same names a sweep
/// accepts (`alpha`, `rop_dbm`, `fiber_length_km`, `link.osnr_db`, ...).
/// The configuration is left unchanged on failure.
///
/// # Safety
/// `sim` must be NULL or a live handle; `name` must be NULL or a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pam4_simulator_set_param(
    sim: *mut Pam4Simulator,
    name: *const c_char,
    value: f64,
) -> Pam4Status {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(|| null("sim"))?;
        let name = str_arg(name, "name")?;
        let mut cfg = sim.cfg.clone();
        cfg.apply_param(name, value)?;
        cfg.validate()?;
        sim.cfg = cfg;
        Ok(())
    })
}

/// Runs the configured number of frames with `seed`.
///
/// # Safety
/// `sim` must be NULL or a live handle; `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pam4_simulator_run(
    sim: *const Pam4Simulator,
    seed: u64,
    out: *mut Pam4BerReport,
) -> Pam4Status {
    guard(|| {
        let sim = handle(sim, "sim")?;
        let out = out_arg(out, "out")?;
        let r = run_single(&sim.cfg, seed)?;
        *out = Pam4BerReport {
            seed: r.seed,
            bits_compared: r.ber.bits_compared,
            bit_errors: r.ber.bit_errors,
            ber: r.ber.ber,
            net_rate: r.ber.net_rate.unwrap_or(f64::NAN),
            passes_kp4: r.ber.verdicts.kp4,
            passes_hd7: r.ber.verdicts.hd7,
            passes_hd20: r.ber.verdicts.hd20,
            ffe: stage(Some(&r.ffe)),
            dd: stage(r.dd.as_ref()),
            mlsd: stage(r.mlsd.as_ref()),
        };
        Ok(())
    })
}

/// Net information rate in bit/s of a PAM-4 link at `baud` with the
/// default frame layout and 20% FEC overhead.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pam4_net_rate(baud: f64, out: *mut f64) -> Pam4Status {
    guard(|| {
        let out = out_arg(out, "out")?;
        if !(baud > 0.0 && baud.is_finite()) {
            return Err(Failure(
                Pam4Status::InvalidArgument,
                format!("baud {baud} must be positive"),
            ));
        }
        *out = metrics::net_rate(baud, 2, 1.2, &FrameLayout::default())?;
        Ok(())
    })
}

/// Small-signal CD fading `20 log10|cos(...)|` in dB at `n` frequencies, for
/// `length` m of fiber with `dispersion` s/m^2 at `wavelength` m. The first
/// 3-dB frequency is written to `first_3db_hz` when it is not NULL.
///
/// # Safety
/// `freqs_hz` must be valid for `n` reads and `out_db` for `n` writes;
/// `first_3db_hz` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pam4_fading_profile(
    length: f64,
    dispersion: f64,
    wavelength: f64,
    freqs_hz: *const f64,
    n: usize,
    out_db: *mut f64,
    first_3db_hz: *mut f64,
) -> Pam4Status {
    guard(|| {
        if n > 0 && (freqs_hz.is_null() || out_db.is_null()) {
            return Err(null("frequency or output buffer"));
        }
        let grid = if n == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(freqs_hz, n)
        };
        let profile = metrics::fading_profile(length, dispersion, wavelength, grid);
        if n > 0 {
            let out = std::slice::from_raw_parts_mut(out_db, n);
            for (o, p) in out.iter_mut().zip(&profile.points) {
                *o = p.value_db;
            }
        }
        if let Some(f) = first_3db_hz.as_mut() {
            *f = profile.first_3db_hz;
        }
        Ok(())
    })
}

fn boxed_sweep(spec: &SweepSpec, jobs: usize, out: *mut *mut Pam4Sweep) -> Result<(), Failure> {
    let out = unsafe { out_arg(out, "out")? };
    let result = run_sweep(spec, jobs)?;
    *out = Box::into_raw(Box::new(Pam4Sweep { result }));
    Ok(())
}

/// Runs a sweep described by a JSON document on `jobs` worker threads
/// (0 = all cores).
///
/// # Safety
/// `json` must be NULL or a NUL-terminated string; `out` must be NULL or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pam4_sweep_run_json(json: *const c_char, jobs: usize, out: *mut *mut Pam4Sweep) -> Pam4Status {
    guard(|| {
        let spec = SweepSpec::from_json(str_arg(json, "json")?)?;
        boxed_sweep(&spec, jobs, out)
    })
}

/// Sweeps one parameter of a simulator's configuration over `n` values with
/// `trials` seeds per value, derived from `master_seed`.
///
/// # Safety
/// `sim` must be NULL or a live handle; `param` must be NULL or a
/// NUL-terminated string; `values` must be valid for `n` reads; `out` must be
/// NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pam4_sweep_run(
    sim: *const Pam4Simulator,
    param: *const c_char,
    values: *const f64,
    n: usize,
    trials: usize,
    master_seed: u64,
    jobs: usize,
    out: *mut *mut Pam4Sweep,
) -> Pam4Status {
    guard(|| {
        let sim = handle(sim, "sim")?;
        let param = str_arg(param, "param")?;
        if n > 0 && values.is_null() {
            return Err(null("values"));
        }
        let values = if n == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(values, n).to_vec()
        };
        let mut base = sim.cfg.clone();
        base.master_seed = master_seed;
        let spec = SweepSpec {
            base,
            param: param.to_string(),
            values,
            trials,
        };
        boxed_sweep(&spec, jobs, out)
    })
}

/// Number of cells in a sweep, or 0 for NULL.
///
/// # Safety
/// `sweep` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pam4_sweep_len(sweep: *const Pam4Sweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.result.cells.len())
}

/// Copies cell `index` (point-major, trial-minor order).
///
/// # Safety
/// `sweep` must be NULL or a live handle; `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pam4_sweep_cell(sweep: *const Pam4Sweep, index: usize, out: *mut Pam4SweepCell) -> Pam4Status {
    guard(|| {
        let sweep = handle(sweep, "sweep")?;
        let out = out_arg(out, "out")?;
        let cell = sweep.result.cells.get(index).ok_or_else(|| {
            Failure(
                Pam4Status::OutOfRange,
                format!("cell {index} out of range ({} cells)", sweep.result.cells.len()),
            )
        })?;
        let status = match &cell.outcome {
            Ok(_) => Pam4Status::Ok,
            Err(f) => status_for_kind(&f.kind),
        };
        *out = Pam4SweepCell {
            point: cell.point,
            trial: cell.trial,
            value: cell.value,
            seed: cell.seed,
            ber: cell.ber(),
            status,
        };
        Ok(())
    })
}

fn status_for_kind(kind: &str) -> Pam4Status {
    match kind {
        "invalid_argument" => Pam4Status::InvalidArgument,
        "length_mismatch" => Pam4Status::LengthMismatch,
        "aliasing" => Pam4Status::Aliasing,
        "sync_failure" => Pam4Status::SyncFailure,
        "divergence" => Pam4Status::Divergence,
        "io" => Pam4Status::Io,
        "csv" => Pam4Status::Csv,
        _ => Pam4Status::Config,
    }
}

/// Writes the sweep in the CLI's CSV format.
///
/// # Safety
/// `sweep` must be NULL or a live handle; `path` must be NULL or a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pam4_sweep_write_csv(sweep: *const Pam4Sweep, path: *const c_char) -> Pam4Status {
    guard(|| {
        let sweep = handle(sweep, "sweep")?;
        let path = str_arg(path, "path")?;
        emit_csv(&sweep.result, Path::new(path))?;
        Ok(())
    })
}

/// Releases a sweep. NULL is ignored.
///
/// # Safety
/// `sweep` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pam4_sweep_free(sweep: *mut Pam4Sweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_error_kind_maps_to_a_distinct_status() {
        let kinds = [
            "invalid_argument",
            "length_mismatch",
            "aliasing",
            "sync_failure",
            "divergence",
            "config",
            "io",
            "csv",
        ];
        let mut codes: Vec<i32> = kinds.iter().map(|k| status_for_kind(k) as i32).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), kinds.len());
    }

    #[test]
    fn panics_become_a_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, Pam4Status::Panic);
        let msg = unsafe { CStr::from_ptr(pam4_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("boom"));
        assert_eq!(guard(|| Ok(())), Pam4Status::Ok);
        assert!(pam4_last_error_message().is_null());
    }
}
