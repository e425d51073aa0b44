//! C ABI for the `icgt` simulator.
//!
//! Conventions:
//! - Every fallible function returns an [`IcgtStatus`]; results go through
//!   out-pointers that are written only on success.
//! - Objects cross the boundary as opaque handles created by `*_new`/`*_parse`
//!   functions and released by the matching `*_free`. Passing NULL to a free
//!   function is a no-op.
//! - After a non-OK status, [`icgt_last_error_message`] returns a description
//!   of the failure on the calling thread.
//! - Panics never unwind into C; they surface as `ICGT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use icgt::algorithm::{self, BoundInputs};
use icgt::channel::{ChannelKind, ChannelModel};
use icgt::graph::{build_topology, metropolis_weights, MixingMatrix, TopologyKind};
use icgt::harness::{self, CheckGrid, ExperimentConfig, RunRecord, RunStatus};
use icgt::rng::StreamTag;
use icgt::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcgtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Step size, attenuation weight or horizon outside its admissible range.
    ParameterViolation = 3,
    ConfigError = 4,
    IoError = 5,
    /// The iterates became non-finite.
    Diverged = 6,
    /// The caller's buffer is too small; the error message names the required size.
    BufferTooSmall = 7,
    /// The simulator failed for another reason (solver, data format, ...).
    Internal = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcgtTopology {
    Ring = 0,
    Star = 1,
    Complete = 2,
    ErdosRenyi = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcgtChannelKind {
    Exact = 0,
    Awgn = 1,
    Quantizer = 2,
}

/// Channel description; fields not used by `kind` are ignored.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct IcgtChannelSpec {
    pub kind: IcgtChannelKind,
    /// AWGN per-coordinate noise deviation.
    pub sigma_c: f64,
    /// AWGN channel gain.
    pub h: f64,
    /// Quantizer levels per unit.
    pub delta_p: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct IcgtSpectrum {
    pub lambda2: f64,
    pub lambda_n: f64,
    pub spectral_gap: f64,
}

/// Inputs of the closed-form convergence bound. Noise levels are per-vector
/// standard deviations.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct IcgtBoundInputs {
    pub dist0: f64,
    pub deviation0_norm_sq: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub tau: u64,
    pub l: f64,
    pub mu: f64,
    pub n: usize,
    pub sigma_g: f64,
    pub sigma_c: f64,
    pub iterations: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct IcgtBoundReport {
    pub total: f64,
    pub geometric: f64,
    pub gradient_noise: f64,
    pub communication_noise: f64,
    /// Nonzero when the inputs satisfy the bound's admissibility conditions.
    pub domain_ok: u8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcgtRunStatus {
    Converged = 0,
    BudgetExhausted = 1,
    Diverged = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct IcgtRunSummary {
    pub alpha: f64,
    pub gamma: f64,
    pub final_opt_err: f64,
    pub final_consensus: f64,
    pub status: IcgtRunStatus,
    /// Iteration of convergence or divergence; 0 when the budget ran out.
    pub status_iteration: usize,
    pub rows: usize,
}

/// One logged metric row. `psi_norm_sq` is NaN for non-tracking algorithms.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct IcgtMetricRow {
    pub iter: usize,
    pub opt_err: f64,
    pub avg_consensus: f64,
    pub stacked_consensus: f64,
    pub psi_norm_sq: f64,
}

/// Opaque mixing matrix handle.
pub struct IcgtMixing(MixingMatrix);
/// Opaque communication channel handle.
pub struct IcgtChannel(ChannelModel);
/// Opaque experiment configuration handle.
pub struct IcgtConfig(ExperimentConfig);
/// Opaque finished-run handle.
pub struct IcgtRun(RunRecord);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(IcgtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidSize(_)
            | Error::InvalidInput(_)
            | Error::InvalidMatrix(_)
            | Error::DimensionMismatch(_)
            | Error::EmptyInput(_)
            | Error::InsufficientSamples { .. }
            | Error::PreconditionViolation(_) => IcgtStatus::InvalidArgument,
            Error::ParameterViolation(_) | Error::DomainRestricted(_) => IcgtStatus::ParameterViolation,
            Error::ConfigParse { .. } | Error::ConfigValue { .. } => IcgtStatus::ConfigError,
            Error::Io { .. } => IcgtStatus::IoError,
            Error::Diverged { .. } => IcgtStatus::Diverged,
            _ => IcgtStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

fn fail<T>(status: IcgtStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> IcgtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            IcgtStatus::Ok
        }
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
            IcgtStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut()
        .map_or_else(|| fail(IcgtStatus::NullPointer, format!("`{name}` is NULL")), Ok)
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .map_or_else(|| fail(IcgtStatus::NullPointer, format!("`{name}` is NULL")), Ok)
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(IcgtStatus::NullPointer, format!("`{name}` is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(IcgtStatus::InvalidArgument, format!("`{name}` is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(IcgtStatus::NullPointer, format!("`{name}` is NULL"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(IcgtStatus::NullPointer, format!("`{name}` is NULL"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn icgt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL, so
/// callers can size a buffer with `icgt_last_error_message(NULL, 0)`.
///
/// # Safety
/// `buf` must be NULL or point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn icgt_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Contraction horizon τ for attenuation `gamma`, second eigenvalue `lambda2`
/// and target `delta` (use 0.0625 for the default).
///
/// # Safety
/// `out_tau` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn icgt_compute_tau(gamma: f64, lambda2: f64, delta: f64, out_tau: *mut u64) -> IcgtStatus {
    guard(|| {
        let dst = out(out_tau, "out_tau")?;
        *dst = algorithm::compute_tau(gamma, lambda2, delta)?;
        Ok(())
    })
}

/// Largest step size admitted by the convergence bound.
#[no_mangle]
pub extern "C" fn icgt_max_step_size(tau: u64, l: f64) -> f64 {
    algorithm::max_step_size(tau, l)
}

/// Attenuation weight `min(alpha ln T, 0.2499)`.
#[no_mangle]
pub extern "C" fn icgt_gamma_schedule(alpha: f64, iterations: usize) -> f64 {
    algorithm::gamma_schedule(alpha, iterations)
}

/// Evaluates the closed-form bound on the expected squared distance of the
/// average iterate to the optimum.
///
/// # Safety
/// `inputs` and `report` must be NULL or valid pointers.
#[no_mangle]
pub unsafe extern "C" fn icgt_bound(inputs: *const IcgtBoundInputs, report: *mut IcgtBoundReport) -> IcgtStatus {
    guard(|| {
        let i = *handle(inputs, "inputs")?;
        let dst = out(report, "report")?;
        let r = algorithm::convergence_bound(&BoundInputs {
            dist0: i.dist0,
            deviation0_norm_sq: i.deviation0_norm_sq,
            alpha: i.alpha,
            gamma: i.gamma,
            tau: i.tau,
            l: i.l,
            mu: i.mu,
            n: i.n,
            sigma_g: i.sigma_g,
            sigma_c: i.sigma_c,
            t: i.iterations,
        });
        *dst = IcgtBoundReport {
            total: r.total,
            geometric: r.geometric,
            gradient_noise: r.gradient_noise,
            communication_noise: r.communication_noise,
            domain_ok: r.domain_ok as u8,
        };
        Ok(())
    })
}

/// Builds Metropolis weights on a `topology` graph of `n` nodes. `er_prob` is
/// the edge probability for Erdős–Rényi graphs and ignored otherwise.
///
/// # Safety
/// `out_mixing` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn icgt_mixing_new(
    topology: IcgtTopology,
    n: usize,
    er_prob: f64,
    seed: u64,
    out_mixing: *mut *mut IcgtMixing,
) -> IcgtStatus {
    guard(|| {
        let dst = out(out_mixing, "out_mixing")?;
        let kind = match topology {
            IcgtTopology::Ring => TopologyKind::Ring,
            IcgtTopology::Star => TopologyKind::Star,
            IcgtTopology::Complete => TopologyKind::Complete,
            IcgtTopology::ErdosRenyi => TopologyKind::ErdosRenyi,
        };
        let p = (kind == TopologyKind::ErdosRenyi).then_some(er_prob);
        let w = metropolis_weights(&build_topology(kind, n, p, seed)?)?;
        *dst = boxed(IcgtMixing(w));
        Ok(())
    })
}

/// Wraps a caller-supplied row-major `n × n` matrix after validating it.
///
/// # Safety
/// `weights` must point to `n * n` doubles; `out_mixing` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn icgt_mixing_from_weights(
    weights: *const f64,
    n: usize,
    out_mixing: *mut *mut IcgtMixing,
) -> IcgtStatus {
    guard(|| {
        let dst = out(out_mixing, "out_mixing")?;
        let data = slice(weights, n * n, "weights")?;
        let w = MixingMatrix::from_matrix(nalgebra::DMatrix::from_row_slice(n, n, data))?;
        w.require_valid()?;
        *dst = boxed(IcgtMixing(w));
        Ok(())
    })
}

/// # Safety
/// `mixing` must be NULL or a handle from `icgt_mixing_new`/`icgt_mixing_from_weights`.
#[no_mangle]
pub unsafe extern "C" fn icgt_mixing_free(mixing: *mut IcgtMixing) {
    free(mixing);
}

/// Number of nodes, or 0 for a NULL handle.
///
/// # Safety
/// `mixing` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn icgt_mixing_size(mixing: *const IcgtMixing) -> usize {
    mixing.as_ref().map_or(0, |m| m.0.n())
}

/// # Safety
/// `mixing` must be a live handle; `spectrum` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn icgt_mixing_spectrum(mixing: *const IcgtMixing, spectrum: *mut IcgtSpectrum) -> IcgtStatus {
    guard(|| {
        let m = &handle(mixing, "mixing")?.0;
        *out(spectrum, "spectrum")? = IcgtSpectrum {
            lambda2: m.lambda2(),
            lambda_n: m.lambda_n(),
            spectral_gap: m.spectral_gap(),
        };
        Ok(())
    })
}

/// Copies the weights row-major into `buf`, which must hold `n * n` values.
///
/// # Safety
/// `mixing` must be a live handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn icgt_mixing_weights(mixing: *const IcgtMixing, buf: *mut f64, len: usize) -> IcgtStatus {
    guard(|| {
        let m = &handle(mixing, "mixing")?.0;
        let n = m.n();
        if len < n * n {
            return fail(IcgtStatus::BufferTooSmall, format!("need {} values, got {len}", n * n));
        }
        let dst = slice_mut(buf, len, "buf")?;
        for i in 0..n {
            for j in 0..n {
                dst[i * n + j] = m.get(i, j);
            }
        }
        Ok(())
    })
}

/// Creates a channel whose noise is drawn from substreams of `seed`.
///
/// # Safety
/// `spec` must be valid for reads; `out_channel` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn icgt_channel_new(
    spec: *const IcgtChannelSpec,
    seed: u64,
    out_channel: *mut *mut IcgtChannel,
) -> IcgtStatus {
    guard(|| {
        let s = *handle(spec, "spec")?;
        let dst = out(out_channel, "out_channel")?;
        let kind = match s.kind {
            IcgtChannelKind::Exact => ChannelKind::Exact,
            IcgtChannelKind::Awgn => ChannelKind::Awgn {
                sigma_c: s.sigma_c,
                h: s.h,
            },
            IcgtChannelKind::Quantizer => ChannelKind::ProbQuant { delta_p: s.delta_p },
        };
        let ch = ChannelModel::new(kind)?.with_stream(seed, StreamTag::ChannelX);
        *dst = boxed(IcgtChannel(ch));
        Ok(())
    })
}

/// # Safety
/// `channel` must be NULL or a handle from `icgt_channel_new`.
#[no_mangle]
pub unsafe extern "C" fn icgt_channel_free(channel: *mut IcgtChannel) {
    free(channel);
}

/// Per-coordinate bound on the received-value variance, or NaN for NULL.
///
/// # Safety
/// `channel` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn icgt_channel_variance_bound(channel: *const IcgtChannel) -> f64 {
    channel.as_ref().map_or(f64::NAN, |c| c.0.variance_bound())
}

/// Transmits `len` values as `sender` at `iteration`, writing what the
/// receivers see into `received`. Identical arguments give identical output.
///
/// # Safety
/// `x` and `received` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn icgt_channel_transmit(
    channel: *const IcgtChannel,
    x: *const f64,
    len: usize,
    sender: usize,
    iteration: usize,
    received: *mut f64,
) -> IcgtStatus {
    guard(|| {
        let ch = &handle(channel, "channel")?.0;
        let input = slice(x, len, "x")?;
        let dst = slice_mut(received, len, "received")?;
        let t = ch.transmit_from(input, sender, iteration, 0)?;
        dst.copy_from_slice(&t.received);
        Ok(())
    })
}

/// Parses configuration text (`key = value` lines).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out_config` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn icgt_config_parse(text: *const c_char, out_config: *mut *mut IcgtConfig) -> IcgtStatus {
    guard(|| {
        let t = c_str(text, "text")?;
        let dst = out(out_config, "out_config")?;
        *dst = boxed(IcgtConfig(harness::parse_config(t)?));
        Ok(())
    })
}

/// Reads and parses a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_config` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn icgt_config_load(path: *const c_char, out_config: *mut *mut IcgtConfig) -> IcgtStatus {
    guard(|| {
        let p = PathBuf::from(c_str(path, "path")?);
        let dst = out(out_config, "out_config")?;
        *dst = boxed(IcgtConfig(harness::load_config(&p)?));
        Ok(())
    })
}

/// Replaces the master seed.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn icgt_config_set_seed(config: *mut IcgtConfig, seed: u64) -> IcgtStatus {
    guard(|| {
        out(config, "config")?.0.seed = seed;
        Ok(())
    })
}

/// Sets the iteration budget.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn icgt_config_set_iterations(config: *mut IcgtConfig, iterations: usize) -> IcgtStatus {
    guard(|| {
        let c = &mut out(config, "config")?.0;
        c.iterations = iterations;
        c.validate()?;
        Ok(())
    })
}

/// # Safety
/// `config` must be NULL or a handle from `icgt_config_parse`/`icgt_config_load`.
#[no_mangle]
pub unsafe extern "C" fn icgt_config_free(config: *mut IcgtConfig) {
    free(config);
}

/// Runs the configured experiment (including any step-size search) and
/// returns the selected run. The config's `output` key is ignored; use
/// `icgt_run_write_csv`.
///
/// # Safety
/// `config` must be a live handle; `out_run` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn icgt_run(config: *const IcgtConfig, out_run: *mut *mut IcgtRun) -> IcgtStatus {
    guard(|| {
        let mut cfg = handle(config, "config")?.0.clone();
        let dst = out(out_run, "out_run")?;
        cfg.output = None;
        let problem = harness::build_problem(&cfg)?;
        let record = harness::run_on_problem(&problem, &cfg)?;
        *dst = boxed(IcgtRun(record));
        Ok(())
    })
}

/// # Safety
/// `run` must be NULL or a handle from `icgt_run`.
#[no_mangle]
pub unsafe extern "C" fn icgt_run_free(run: *mut IcgtRun) {
    free(run);
}

/// # Safety
/// `run` must be a live handle; `summary` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn icgt_run_summary(run: *const IcgtRun, summary: *mut IcgtRunSummary) -> IcgtStatus {
    guard(|| {
        let r = &handle(run, "run")?.0;
        let (status, status_iteration) = match r.status {
            RunStatus::Converged { iteration } => (IcgtRunStatus::Converged, iteration),
            RunStatus::BudgetExhausted => (IcgtRunStatus::BudgetExhausted, 0),
            RunStatus::Diverged { iteration } => (IcgtRunStatus::Diverged, iteration),
        };
        *out(summary, "summary")? = IcgtRunSummary {
            alpha: r.alpha,
            gamma: r.gamma,
            final_opt_err: r.final_opt_err(),
            final_consensus: r.final_consensus(),
            status,
            status_iteration,
            rows: r.rows.len(),
        };
        Ok(())
    })
}

/// Copies logged row `index`.
///
/// # Safety
/// `run` must be a live handle; `row` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn icgt_run_row(run: *const IcgtRun, index: usize, row: *mut IcgtMetricRow) -> IcgtStatus {
    guard(|| {
        let r = &handle(run, "run")?.0;
        let dst = out(row, "row")?;
        let Some(m) = r.rows.get(index) else {
            return fail(
                IcgtStatus::InvalidArgument,
                format!("row {index} out of range ({} rows)", r.rows.len()),
            );
        };
        *dst = IcgtMetricRow {
            iter: m.iter,
            opt_err: m.opt_err,
            avg_consensus: m.avg_consensus,
            stacked_consensus: m.stacked_consensus,
            psi_norm_sq: m.psi_norm_sq.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Writes the run's metric CSV to `path`.
///
/// # Safety
/// `run` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn icgt_run_write_csv(run: *const IcgtRun, path: *const c_char) -> IcgtStatus {
    guard(|| {
        let r = &handle(run, "run")?.0;
        let p = PathBuf::from(c_str(path, "path")?);
        r.write_csv(&p)?;
        Ok(())
    })
}

/// Runs the numerical verification grid (`full` nonzero for the large grid)
/// and reports how many checks passed out of how many ran.
///
/// # Safety
/// `passed` and `total` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn icgt_run_checks(full: u8, passed: *mut usize, total: *mut usize) -> IcgtStatus {
    guard(|| {
        let p = out(passed, "passed")?;
        let t = out(total, "total")?;
        let grid = if full != 0 { CheckGrid::Full } else { CheckGrid::Small };
        let report = harness::run_checks(grid)?;
        *p = report.rows.iter().filter(|r| r.pass).count();
        *t = report.rows.len();
        Ok(())
    })
}
