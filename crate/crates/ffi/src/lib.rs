//! C ABI over `mops-core`.
//!
//! Every fallible entry point returns a [`MopsStatus`] and writes results through out
//! pointers. On failure the message is kept in a thread-local slot readable with
//! [`mops_last_error`]. Handles are opaque and must be released with their `_free`
//! function; strings returned by the library are released with [`mops_string_free`].
//! Panics never cross the boundary: they surface as `MOPS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mops_core::analysis::simulation_lemma_check;
use mops_core::commands::cmd_check;
use mops_core::config::ExperimentConfig;
use mops_core::divergences::{hellinger_sq, kl, omega, tv};
use mops_core::driver::{run_mops, RunOutput, RunSettings};
use mops_core::env::TabularEnv;
use mops_core::generators::{Generator, GeneratorKind};
use mops_core::instance::InstanceFile;
use mops_core::posterior::{Hyperparams, ModelClass, TabularClass};
use mops_core::{seeded_rng, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MopsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Parse = 4,
    Io = 5,
    Computation = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MopsGenerator {
    QType = 0,
    VTypeUniform = 1,
    VTypeDouble = 2,
    VTypeDesign = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MopsDivergence {
    /// `Σ (√p − √q)²`.
    HellingerSq = 0,
    Kl = 1,
    Tv = 2,
}

/// Run parameters. A `gamma` of zero or below selects `min(0.5, √(ln|𝓜|/T))`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MopsRunParams {
    pub generator: MopsGenerator,
    pub eta: f64,
    pub eta_prime: f64,
    pub gamma: f64,
    pub rounds: usize,
    pub full_horizon: bool,
    pub seed: u64,
}

/// A loaded tabular or mixture instance.
pub struct MopsInstance {
    env: TabularEnv,
    class: TabularClass,
}

/// The output of one MOPS run.
pub struct MopsRun {
    output: RunOutput,
    true_index: Option<usize>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(MopsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config { .. } | Error::Json(_) | Error::Csv(_) => MopsStatus::Parse,
            Error::Io { .. } => MopsStatus::Io,
            Error::DegeneratePosterior { .. } | Error::Numerical(_) => MopsStatus::Computation,
            _ => MopsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MopsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MopsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MopsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MopsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(MopsStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| Failure(MopsStatus::Computation, e.to_string()))
}

/// Message of the last failure on this thread, or NULL. Valid until the next failing call
/// on the same thread.
#[no_mangle]
pub extern "C" fn mops_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mops_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mops_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Divergence between two distributions of length `len`.
///
/// # Safety
/// `p` and `q` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mops_divergence(kind: MopsDivergence, p: *const f64, q: *const f64, len: usize, out: *mut f64) -> MopsStatus {
    guard(|| {
        let (p, q) = (slice_arg(p, len, "p")?, slice_arg(q, len, "q")?);
        let check = |v: &[f64], name: &str| {
            mops_core::divergences::DiscreteDist::new(v.to_vec())
                .map(|_| ())
                .map_err(|e| Failure(MopsStatus::InvalidArgument, format!("{name}: {e}")))
        };
        check(p, "p")?;
        check(q, "q")?;
        let value = match kind {
            MopsDivergence::HellingerSq => hellinger_sq(p, q),
            MopsDivergence::Kl => kl(p, q),
            MopsDivergence::Tv => tv(p, q),
        };
        write_out(out, value, "out")
    })
}

/// `ω(α, p₀)` for per-model radii and log prior weights. `out_epsilon` may be NULL.
///
/// # Safety
/// `radii` and `log_prior` must point to `len` doubles; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mops_omega(
    radii: *const f64,
    log_prior: *const f64,
    len: usize,
    alpha: f64,
    out_value: *mut f64,
    out_epsilon: *mut f64,
) -> MopsStatus {
    guard(|| {
        let w = omega(slice_arg(radii, len, "radii")?, slice_arg(log_prior, len, "log_prior")?, alpha)?;
        write_out(out_value, w.value, "out_value")?;
        if !out_epsilon.is_null() {
            out_epsilon.write(w.epsilon);
        }
        Ok(())
    })
}

/// Loads an instance file written by `mops gen`. KNR instances are rejected.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mops_instance_load(path: *const c_char, out: *mut *mut MopsInstance) -> MopsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let file = InstanceFile::load(Path::new(path))?;
        let inst = MopsInstance {
            env: file.instance.tabular_env()?,
            class: file.instance.tabular_class()?,
        };
        write_out(out, Box::into_raw(Box::new(inst)), "out")
    })
}

/// Parses an instance from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mops_instance_from_json(json: *const c_char, out: *mut *mut MopsInstance) -> MopsStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| Failure(MopsStatus::Parse, e.to_string()))?;
        file.instance.validate()?;
        let inst = MopsInstance {
            env: file.instance.tabular_env()?,
            class: file.instance.tabular_class()?,
        };
        write_out(out, Box::into_raw(Box::new(inst)), "out")
    })
}

/// # Safety
/// `inst` must come from `mops_instance_load`/`mops_instance_from_json` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mops_instance_free(inst: *mut MopsInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Number of models in the class.
///
/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mops_instance_class_size(inst: *const MopsInstance, out: *mut usize) -> MopsStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(|| null("instance"))?;
        write_out(out, inst.class.len(), "out")
    })
}

/// Index of the true model, or -1 when the class excludes it.
///
/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mops_instance_true_index(inst: *const MopsInstance, out: *mut i64) -> MopsStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(|| null("instance"))?;
        write_out(out, inst.class.true_index().map_or(-1, |i| i as i64), "out")
    })
}

/// Largest context residual of the simulation-lemma identity at the posterior `p`.
///
/// # Safety
/// `inst` must be a live handle; `p` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mops_simulation_lemma_residual(inst: *const MopsInstance, p: *const f64, len: usize, out: *mut f64) -> MopsStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(|| null("instance"))?;
        let check = simulation_lemma_check(&inst.env, &inst.class, slice_arg(p, len, "p")?)?;
        write_out(out, check.residual, "out")
    })
}

/// Runs MOPS on a tabular instance with a single seed.
///
/// # Safety
/// `inst` must be a live handle; `params` must be readable; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mops_run(inst: *const MopsInstance, params: *const MopsRunParams, out: *mut *mut MopsRun) -> MopsStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(|| null("instance"))?;
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let kind = match p.generator {
            MopsGenerator::QType => GeneratorKind::QType,
            MopsGenerator::VTypeUniform => GeneratorKind::VTypeUniform,
            MopsGenerator::VTypeDouble => GeneratorKind::VTypeDouble,
            MopsGenerator::VTypeDesign => GeneratorKind::VTypeDesign,
        };
        if p.rounds == 0 {
            return Err(Failure(MopsStatus::InvalidArgument, "rounds must be >= 1".into()));
        }
        let mut hyper = Hyperparams::tuned(inst.class.len(), p.rounds);
        hyper.eta = p.eta;
        hyper.eta_prime = p.eta_prime;
        if p.gamma > 0.0 {
            hyper.gamma = p.gamma;
        }
        let generator = match kind {
            GeneratorKind::VTypeDesign => {
                Generator::with_design(&mops_core::generators::DesignFeatures::one_hot(inst.env.dims()))?
            }
            k => Generator::new(k)?,
        };
        let mut settings = RunSettings::new(hyper, p.rounds);
        settings.full_horizon = p.full_horizon;
        let output = run_mops(&inst.env, &inst.class, &generator, &settings, &mut seeded_rng(p.seed))?;
        let run = MopsRun {
            output,
            true_index: inst.class.true_index(),
        };
        write_out(out, Box::into_raw(Box::new(run)), "out")
    })
}

/// # Safety
/// `run` must come from `mops_run` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mops_run_free(run: *mut MopsRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of rounds recorded.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mops_run_rounds(run: *const MopsRun, out: *mut usize) -> MopsStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        write_out(out, run.output.ledger.len(), "out")
    })
}

/// Copies per-round realized regret into `buf`, which must hold exactly the round count.
///
/// # Safety
/// `run` must be a live handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mops_run_realized_regret(run: *const MopsRun, buf: *mut f64, len: usize) -> MopsStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let entries = &run.output.ledger.entries;
        if len != entries.len() {
            return Err(Failure(MopsStatus::InvalidArgument, format!("buffer holds {len} values, run has {} rounds", entries.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        for (i, e) in entries.iter().enumerate() {
            buf.add(i).write(e.realized_regret);
        }
        Ok(())
    })
}

/// Copies the final posterior weights into `buf`, which must hold exactly the class size.
///
/// # Safety
/// `run` must be a live handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mops_run_final_weights(run: *const MopsRun, buf: *mut f64, len: usize) -> MopsStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let w = run.output.final_posterior.weights();
        if len != w.len() {
            return Err(Failure(MopsStatus::InvalidArgument, format!("buffer holds {len} values, class has {}", w.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(w.as_ptr(), buf, len);
        Ok(())
    })
}

/// Final posterior mass on the true model (NaN when the class excludes it).
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mops_run_final_mass_true(run: *const MopsRun, out: *mut f64) -> MopsStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let mass = run.true_index.map_or(f64::NAN, |t| run.output.final_posterior.weight(t));
        write_out(out, mass, "out")
    })
}

/// Runs the verification battery for a config file. `out_json` receives the report (free
/// with `mops_string_free`); `out_pass` whether every check passed.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mops_check_config(config_path: *const c_char, out_json: *mut *mut c_char, out_pass: *mut bool) -> MopsStatus {
    guard(|| {
        let path = str_arg(config_path, "config_path")?;
        if out_json.is_null() || out_pass.is_null() {
            return Err(null("output pointer"));
        }
        let cfg = ExperimentConfig::load(Path::new(path))?;
        let report = cmd_check(&cfg)?;
        let text = serde_json::to_string(&report).map_err(|e| Failure(MopsStatus::Computation, e.to_string()))?;
        out_json.write(into_c_string(text)?);
        out_pass.write(report.pass);
        Ok(())
    })
}
