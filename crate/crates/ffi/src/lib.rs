//! C ABI for the oposim workbench.
//!
//! Every fallible function returns an [`OposimStatus`]; on failure the
//! message is available from [`oposim_last_error_message`] on the same
//! thread. Objects are opaque and must be released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use oposim::cavity::{detected_noise_correlated, AnalysisCavitySpec};
use oposim::linear::{
    analytic_sp_minus, analytic_sq_plus, duan_sum, output_spectra, scan_sigma, PumpNoiseSpec,
    QuadratureSpectra,
};
use oposim::model::PhysicalParams;
use oposim::sde::{map_ensemble, EnsembleConfig, Mode, Scheme};
use oposim::spectrum::{aggregate, trajectory_periodogram, Combination, SpectrumEstimate};
use oposim::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OposimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NoOscillation = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OposimCombination {
    PMinus = 0,
    QMinus = 1,
    PPlus = 2,
    QPlus = 3,
    P0 = 4,
    Q0 = 5,
}

impl From<OposimCombination> for Combination {
    fn from(c: OposimCombination) -> Self {
        match c {
            OposimCombination::PMinus => Combination::PMinus,
            OposimCombination::QMinus => Combination::QMinus,
            OposimCombination::PPlus => Combination::PPlus,
            OposimCombination::QPlus => Combination::QPlus,
            OposimCombination::P0 => Combination::P0,
            OposimCombination::Q0 => Combination::Q0,
        }
    }
}

/// Laboratory cavity parameters, per roundtrip.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OposimPhysicalParams {
    pub gamma: f64,
    pub gamma0: f64,
    pub gamma_total: f64,
    pub gamma_total0: f64,
    pub delta: f64,
    pub delta0: f64,
    pub tau: f64,
    pub chi: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OposimPumpNoise {
    pub s_p0: f64,
    pub s_q0: f64,
}

/// Output spectra at one analysis frequency, shot noise = 1.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OposimSpectra {
    pub sigma: f64,
    pub omega: f64,
    pub s_p_minus: f64,
    pub s_q_minus: f64,
    pub s_p_plus: f64,
    pub s_q_plus: f64,
    pub s_p0_ref: f64,
    pub s_q0_ref: f64,
    pub duan_sum: f64,
}

impl OposimSpectra {
    fn from_core(sigma: f64, s: &QuadratureSpectra) -> Self {
        OposimSpectra {
            sigma,
            omega: s.omega,
            s_p_minus: s.s_p_minus,
            s_q_minus: s.s_q_minus,
            s_p_plus: s.s_p_plus,
            s_q_plus: s.s_q_plus,
            s_p0_ref: s.s_p0_ref,
            s_q0_ref: s.s_q0_ref,
            duan_sum: s.duan().value,
        }
    }
}

/// Stochastic ensemble settings; `scheme` 0 is Euler-Maruyama, 1 the
/// semi-implicit midpoint rule.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OposimEnsembleConfig {
    pub dt: f64,
    pub duration: f64,
    pub transient: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub g: f64,
    pub gamma_r: f64,
    pub sigma: f64,
    pub sample_every: usize,
    pub scheme: c_int,
}

/// Linear model: cavity parameters and pump noise.
pub struct OposimModel {
    params: PhysicalParams,
    pump: PumpNoiseSpec,
}

/// Shot-noise-normalized stochastic spectrum estimate.
pub struct OposimSpectrum {
    estimate: SpectrumEstimate,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: OposimStatus, msg: impl Into<String>) -> OposimStatus {
    set_error(msg);
    status
}

fn from_core(e: Error) -> OposimStatus {
    let status = match e {
        Error::NoOscillation { .. } => OposimStatus::NoOscillation,
        Error::InvalidParameter { .. }
        | Error::TooShort { .. }
        | Error::InconsistentLengths { .. }
        | Error::EmptyEnsemble => OposimStatus::InvalidArgument,
        _ => OposimStatus::Numerical,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> OposimStatus) -> OposimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(OposimStatus::Panic, "internal panic"),
    }
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `cap`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn oposim_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn oposim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// # Safety
/// `params` and `pump` must be null or point to valid structs; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oposim_model_new(
    params: *const OposimPhysicalParams,
    pump: *const OposimPumpNoise,
    out: *mut *mut OposimModel,
) -> OposimStatus {
    guard(|| {
        if params.is_null() || out.is_null() {
            return fail(OposimStatus::NullPointer, "params and out must not be null");
        }
        let p = &*params;
        let params = PhysicalParams {
            gamma: p.gamma,
            gamma0: p.gamma0,
            gamma_total: p.gamma_total,
            gamma_total0: p.gamma_total0,
            delta: p.delta,
            delta0: p.delta0,
            tau: p.tau,
            chi: p.chi,
            sigma: 1.0,
        };
        if let Err(e) = params.validate() {
            return from_core(e);
        }
        let pump = if pump.is_null() {
            PumpNoiseSpec::SHOT_NOISE
        } else {
            match PumpNoiseSpec::new((*pump).s_p0, (*pump).s_q0) {
                Ok(s) => s,
                Err(e) => return from_core(e),
            }
        };
        *out = Box::into_raw(Box::new(OposimModel { params, pump }));
        OposimStatus::Ok
    })
}

/// # Safety
/// `model` must be null or a pointer from [`oposim_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oposim_model_free(model: *mut OposimModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Linearized spectra at pump parameter `sigma` and frequency `omega`
/// (units of the cavity damping rate).
///
/// # Safety
/// `model` must be a live model and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oposim_model_spectra(
    model: *const OposimModel,
    sigma: f64,
    omega: f64,
    out: *mut OposimSpectra,
) -> OposimStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return fail(OposimStatus::NullPointer, "model and out must not be null");
        }
        let m = &*model;
        match output_spectra(&m.params.with_sigma(sigma), &m.pump, omega) {
            Ok(s) => {
                *out = OposimSpectra::from_core(sigma, &s);
                OposimStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Scans `n` strictly increasing sigma values, writing one row per value.
/// `crossing` receives the sigma where `S_q+` crosses 1, or NaN.
///
/// # Safety
/// `sigmas` must hold `n` values and `rows` room for `n` rows; `crossing`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn oposim_model_scan(
    model: *const OposimModel,
    sigmas: *const f64,
    n: usize,
    omega: f64,
    efficiency: f64,
    rows: *mut OposimSpectra,
    crossing: *mut f64,
) -> OposimStatus {
    guard(|| {
        if model.is_null() || sigmas.is_null() || rows.is_null() {
            return fail(OposimStatus::NullPointer, "model, sigmas and rows must not be null");
        }
        let m = &*model;
        let grid = std::slice::from_raw_parts(sigmas, n);
        match scan_sigma(&m.params, &m.pump, grid, omega, efficiency) {
            Ok(t) => {
                let out = std::slice::from_raw_parts_mut(rows, n);
                for (o, r) in out.iter_mut().zip(&t.rows) {
                    *o = OposimSpectra::from_core(r.sigma, &r.spectra);
                }
                if !crossing.is_null() {
                    *crossing = t.crossing.unwrap_or(f64::NAN);
                }
                OposimStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Closed-form `S_p-` at a lossless resonant operating point.
#[no_mangle]
pub extern "C" fn oposim_analytic_sp_minus(omega: f64) -> f64 {
    analytic_sp_minus(omega)
}

/// Closed-form `S_q+` at a lossless resonant operating point.
#[no_mangle]
pub extern "C" fn oposim_analytic_sq_plus(omega: f64, sigma: f64, gamma_r: f64) -> f64 {
    analytic_sq_plus(omega, sigma, gamma_r)
}

/// Inseparability sum; `entangled` (may be null) is set to 1 below the bound.
///
/// # Safety
/// `entangled` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn oposim_duan_sum(s_p_minus: f64, s_q_plus: f64, entangled: *mut c_int) -> f64 {
    let d = duan_sum(s_p_minus, s_q_plus);
    if !entangled.is_null() {
        *entangled = d.entangled as c_int;
    }
    d.value
}

/// Amplitude noise detected after reflection off the analysis cavity at
/// `detuning` (units of the bandwidth).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oposim_cavity_detected_noise(
    bandwidth_hz: f64,
    analysis_frequency_hz: f64,
    mirror_loss: f64,
    s_p: f64,
    s_q: f64,
    correlation: f64,
    detuning: f64,
    out: *mut f64,
) -> OposimStatus {
    guard(|| {
        if out.is_null() {
            return fail(OposimStatus::NullPointer, "out must not be null");
        }
        let spec = AnalysisCavitySpec {
            bandwidth_hz,
            detuning_grid: Vec::new(),
            analysis_frequency_hz,
            mirror_loss,
        };
        if let Err(e) = spec.validate() {
            return from_core(e);
        }
        if !(s_p >= 0.0) || !(s_q >= 0.0) {
            return fail(OposimStatus::InvalidArgument, "s_p and s_q must be >= 0");
        }
        *out = detected_noise_correlated(&spec, s_p, s_q, correlation, detuning);
        OposimStatus::Ok
    })
}

/// Runs a stochastic ensemble and estimates the normalized spectrum of one
/// combination up to `max_frequency` (`<= 0` keeps every bin).
///
/// # Safety
/// `cfg` must be valid and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oposim_stochastic_spectrum(
    cfg: *const OposimEnsembleConfig,
    first_order: c_int,
    combination: OposimCombination,
    max_frequency: f64,
    out: *mut *mut OposimSpectrum,
) -> OposimStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            return fail(OposimStatus::NullPointer, "cfg and out must not be null");
        }
        let c = &*cfg;
        let scheme = match c.scheme {
            0 => Scheme::EulerMaruyama,
            1 => Scheme::SemiImplicitMidpoint,
            other => return fail(OposimStatus::InvalidArgument, format!("unknown scheme {other}")),
        };
        let ens = EnsembleConfig {
            dt: c.dt,
            duration: c.duration,
            transient: c.transient,
            n_traj: c.n_traj,
            seed: c.seed,
            g: c.g,
            gamma_r: c.gamma_r,
            sigma: c.sigma,
            sample_every: c.sample_every,
            scheme,
        };
        let mode = if first_order != 0 { Mode::FirstOrder } else { Mode::FullNonlinear };
        let comb: Combination = combination.into();
        let result = map_ensemble(&ens, mode, |t| trajectory_periodogram(&t, comb))
            .and_then(|o| aggregate(&o.values, comb, serde_json::Value::Null));
        match result {
            Ok(est) => {
                let mut est = est.normalize(ens.g);
                if max_frequency > 0.0 {
                    est = est.band(max_frequency);
                }
                *out = Box::into_raw(Box::new(OposimSpectrum { estimate: est }));
                OposimStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Number of frequency bins in `spectrum` (0 for null).
///
/// # Safety
/// `spectrum` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn oposim_spectrum_len(spectrum: *const OposimSpectrum) -> usize {
    if spectrum.is_null() {
        0
    } else {
        (*spectrum).estimate.frequencies.len()
    }
}

/// Number of trajectories that contributed to `spectrum`.
///
/// # Safety
/// `spectrum` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn oposim_spectrum_n_traj(spectrum: *const OposimSpectrum) -> usize {
    if spectrum.is_null() {
        0
    } else {
        (*spectrum).estimate.n_traj
    }
}

/// Copies frequencies, values and standard errors into arrays of capacity
/// `cap`. Any of the output arrays may be null.
///
/// # Safety
/// Non-null arrays must have room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn oposim_spectrum_copy(
    spectrum: *const OposimSpectrum,
    frequencies: *mut f64,
    values: *mut f64,
    stderr: *mut f64,
    cap: usize,
) -> OposimStatus {
    guard(|| {
        if spectrum.is_null() {
            return fail(OposimStatus::NullPointer, "spectrum must not be null");
        }
        let e = &(*spectrum).estimate;
        let n = e.frequencies.len();
        if cap < n {
            return fail(OposimStatus::BufferTooSmall, format!("need {n} slots, got {cap}"));
        }
        for (dst, src) in [(frequencies, &e.frequencies), (values, &e.values), (stderr, &e.stderr)] {
            if !dst.is_null() {
                ptr::copy_nonoverlapping(src.as_ptr(), dst, n);
            }
        }
        OposimStatus::Ok
    })
}

/// # Safety
/// `spectrum` must be null or a pointer from [`oposim_stochastic_spectrum`]
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oposim_spectrum_free(spectrum: *mut OposimSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}
