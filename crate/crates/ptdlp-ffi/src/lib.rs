//! C ABI over the ptdlp toolkit. All functions are `extern "C"`, all state
//! lives behind opaque handles, and every fallible call returns a
//! [`PtdlpStatus`]. The most recent error message per thread is available
//! through [`ptdlp_last_error_message`].

use ptdlp::energy::{EnergyModel, RbmModel};
use ptdlp::harness::{rerun_from_manifest, run_experiment, ExperimentConfig};
use ptdlp::space::StateVector;
use ptdlp::tempering::{ReplicaEnsemble, SwapCriterion};
use ptdlp::tuning::Schedule;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

/// Result codes mirroring the CLI's exit-code convention.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtdlpStatus {
    Ok = 0,
    NullPointer = 1,
    ValidationError = 2,
    RuntimeError = 3,
    InvalidUtf8 = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &ptdlp::Error) -> PtdlpStatus {
    set_last_error(&err.to_string());
    match err.exit_code() {
        2 => PtdlpStatus::ValidationError,
        _ => PtdlpStatus::RuntimeError,
    }
}

fn guarded(body: impl FnOnce() -> PtdlpStatus) -> PtdlpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic");
            PtdlpStatus::Panic
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, PtdlpStatus> {
    if ptr.is_null() {
        set_last_error("null pointer argument");
        return Err(PtdlpStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("argument is not valid UTF-8");
        PtdlpStatus::InvalidUtf8
    })
}

/// Message describing the most recent error on this thread. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ptdlp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ptdlp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Runs the experiment described by a TOML config file into `out_dir`.
/// `seed_override < 0` keeps the config's seed list.
///
/// # Safety
/// `config_path` and `out_dir` must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ptdlp_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
    seed_override: i64,
) -> PtdlpStatus {
    guarded(|| {
        let config_path = match cstr_arg(config_path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let out_dir = match cstr_arg(out_dir) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let mut config = match ExperimentConfig::load(Path::new(config_path)) {
            Ok(c) => c,
            Err(e) => return status_of(&e),
        };
        if seed_override >= 0 {
            config.run.seeds = vec![seed_override as u64];
        }
        match run_experiment(&config, Path::new(out_dir)) {
            Ok(_) => PtdlpStatus::Ok,
            Err(e) => status_of(&e),
        }
    })
}

/// Replays a manifest into `out_dir`.
///
/// # Safety
/// Both arguments must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ptdlp_rerun_manifest(
    manifest_path: *const c_char,
    out_dir: *const c_char,
) -> PtdlpStatus {
    guarded(|| {
        let manifest_path = match cstr_arg(manifest_path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let out_dir = match cstr_arg(out_dir) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match rerun_from_manifest(Path::new(manifest_path), Path::new(out_dir)) {
            Ok(_) => PtdlpStatus::Ok,
            Err(e) => status_of(&e),
        }
    })
}

/// Opaque RBM energy model.
pub struct PtdlpRbm {
    model: RbmModel,
}

/// Loads an RBM parameter file (JSON with `n_hidden`, `n_visible`, row-major
/// `w`, `a`, `b`). Returns NULL on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string. The returned handle must be
/// released with [`ptdlp_rbm_free`].
#[no_mangle]
pub unsafe extern "C" fn ptdlp_rbm_load(path: *const c_char) -> *mut PtdlpRbm {
    let Ok(path) = cstr_arg(path) else {
        return ptr::null_mut();
    };
    match RbmModel::load(Path::new(path)) {
        Ok(model) => Box::into_raw(Box::new(PtdlpRbm { model })),
        Err(e) => {
            set_last_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `rbm` must come from [`ptdlp_rbm_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ptdlp_rbm_free(rbm: *mut PtdlpRbm) {
    if !rbm.is_null() {
        drop(Box::from_raw(rbm));
    }
}

/// Number of visible units.
///
/// # Safety
/// `rbm` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ptdlp_rbm_visible_units(rbm: *const PtdlpRbm) -> usize {
    if rbm.is_null() {
        return 0;
    }
    (*rbm).model.n_visible
}

/// Energy `U(θ)` of a binary state given as one byte per coordinate.
///
/// # Safety
/// `rbm` must be a live handle; `state` must point to `len` readable bytes;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptdlp_rbm_energy(
    rbm: *const PtdlpRbm,
    state: *const u8,
    len: usize,
    out: *mut f64,
) -> PtdlpStatus {
    guarded(|| {
        if rbm.is_null() || state.is_null() || out.is_null() {
            set_last_error("null pointer argument");
            return PtdlpStatus::NullPointer;
        }
        let model = &(*rbm).model;
        if len != model.n_visible {
            set_last_error("state length does not match the visible layer");
            return PtdlpStatus::ValidationError;
        }
        let bytes = std::slice::from_raw_parts(state, len);
        if bytes.iter().any(|b| *b > 1) {
            set_last_error("state bytes must be 0 or 1");
            return PtdlpStatus::ValidationError;
        }
        let values: Vec<u32> = bytes.iter().map(|&b| b as u32).collect();
        match StateVector::new(values, model.space()) {
            Ok(s) => {
                *out = model.energy(&s);
                PtdlpStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Opaque tempered sampler over an RBM target.
pub struct PtdlpSampler {
    model: RbmModel,
    ensemble: ReplicaEnsemble,
}

/// Creates a PT-DMALA sampler with a geometric schedule of `n_chains`
/// inverse temperatures from 1 down to `beta_min`, shared step size `alpha`,
/// full swap intensity, and the reversible standard swap. All chains start
/// from a seed-derived random state. Returns NULL on failure.
///
/// # Safety
/// `rbm` must be a live handle. The returned handle must be released with
/// [`ptdlp_sampler_free`].
#[no_mangle]
pub unsafe extern "C" fn ptdlp_sampler_new(
    rbm: *const PtdlpRbm,
    n_chains: usize,
    beta_min: f64,
    alpha: f64,
    seed: u64,
) -> *mut PtdlpSampler {
    if rbm.is_null() {
        set_last_error("null pointer argument");
        return ptr::null_mut();
    }
    let model = (*rbm).model.clone();
    let build = || -> ptdlp::Result<PtdlpSampler> {
        let betas = if n_chains <= 1 {
            vec![1.0]
        } else {
            Schedule::geometric(n_chains, beta_min)?.betas().to_vec()
        };
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x517cc1b727220a95);
        let space = model.space();
        let init = (0..betas.len())
            .map(|_| space.uniform_state(&mut rng))
            .collect();
        let ensemble = ReplicaEnsemble::new(
            &model,
            init,
            betas,
            &[alpha],
            2.0,
            1.0,
            SwapCriterion::Standard,
            seed,
        )?;
        Ok(PtdlpSampler { model, ensemble })
    };
    match build() {
        Ok(sampler) => Box::into_raw(Box::new(sampler)),
        Err(e) => {
            set_last_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `sampler` must come from [`ptdlp_sampler_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ptdlp_sampler_free(sampler: *mut PtdlpSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// Advances the ensemble by `n_steps` Metropolis-adjusted steps.
///
/// # Safety
/// `sampler` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ptdlp_sampler_step(
    sampler: *mut PtdlpSampler,
    n_steps: usize,
) -> PtdlpStatus {
    guarded(|| {
        if sampler.is_null() {
            set_last_error("null pointer argument");
            return PtdlpStatus::NullPointer;
        }
        let s = &mut *sampler;
        for _ in 0..n_steps {
            if let Err(e) = s.ensemble.step(&s.model, true) {
                return status_of(&e);
            }
        }
        PtdlpStatus::Ok
    })
}

/// Copies the β = 1 chain's state into `out` (one byte per coordinate).
///
/// # Safety
/// `sampler` must be a live handle; `out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ptdlp_sampler_cold_state(
    sampler: *const PtdlpSampler,
    out: *mut u8,
    len: usize,
) -> PtdlpStatus {
    guarded(|| {
        if sampler.is_null() || out.is_null() {
            set_last_error("null pointer argument");
            return PtdlpStatus::NullPointer;
        }
        let s = &*sampler;
        let state = s.ensemble.cold_state();
        if len != state.dim() {
            set_last_error("buffer length does not match the state dimension");
            return PtdlpStatus::ValidationError;
        }
        let buf = std::slice::from_raw_parts_mut(out, len);
        for (slot, &v) in buf.iter_mut().zip(state.values()) {
            *slot = v as u8;
        }
        PtdlpStatus::Ok
    })
}

/// Energy of the β = 1 chain's current state.
///
/// # Safety
/// `sampler` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptdlp_sampler_cold_energy(
    sampler: *const PtdlpSampler,
    out: *mut f64,
) -> PtdlpStatus {
    guarded(|| {
        if sampler.is_null() || out.is_null() {
            set_last_error("null pointer argument");
            return PtdlpStatus::NullPointer;
        }
        *out = (*sampler).ensemble.cold_energy();
        PtdlpStatus::Ok
    })
}
