use std::io::{self, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::{noise_amplitudes, NoiseCoefficients, NoiseIncrement};
use super::state::{drift, drift_jacobian, PhaseSpaceState, COMPONENT_NAMES};
use crate::csvout::sig12;
use crate::error::{Error, Result};
use crate::model::{steady_state_with, BelowThreshold, DimensionlessParams};

/// Magnitude beyond which a trajectory counts as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e6;
/// Largest fraction of diverged trajectories an ensemble may contain.
pub const MAX_DIVERGED_FRACTION: f64 = 0.01;
pub const MAX_DT: f64 = 1e-2;
const MIDPOINT_ITERATIONS: usize = 3;
const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    EulerMaruyama,
    #[default]
    SemiImplicitMidpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// The full nonlinear equations.
    #[default]
    FullNonlinear,
    /// Linearized about the classical steady state; samples are reported as
    /// `steady state + g * fluctuation`.
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Total integrated time, transient included, in units of `T`.
    pub duration: f64,
    #[serde(default)]
    pub transient: f64,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
    pub g: f64,
    pub gamma_r: f64,
    pub sigma: f64,
    /// Keep one state every `sample_every` steps.
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default)]
    pub scheme: Scheme,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_n_traj() -> usize {
    2000
}

fn default_sample_every() -> usize {
    1
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.dt > MAX_DT {
            return Err(Error::invalid("dt", format!("must lie in (0, {MAX_DT}], got {}", self.dt)));
        }
        if !(self.transient >= 0.0) || !self.transient.is_finite() {
            return Err(Error::invalid("transient", "must be finite and >= 0"));
        }
        if !(self.duration > self.transient) || !self.duration.is_finite() {
            return Err(Error::invalid("duration", "must be finite and exceed the transient"));
        }
        if self.n_traj == 0 {
            return Err(Error::invalid("n_traj", "must be >= 1"));
        }
        if self.sample_every == 0 {
            return Err(Error::invalid("sample_every", "must be >= 1"));
        }
        if self.n_steps() < self.n_transient_steps() + self.sample_every {
            return Err(Error::invalid("duration", "window after the transient holds fewer than two samples"));
        }
        self.params().validate()
    }

    pub fn params(&self) -> DimensionlessParams {
        DimensionlessParams {
            g: self.g,
            gamma_r: self.gamma_r,
            sigma: self.sigma,
            gamma_d: 1.0,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn n_transient_steps(&self) -> usize {
        (self.transient / self.dt).round() as usize
    }

    pub fn sample_dt(&self) -> f64 {
        self.dt * self.sample_every as f64
    }

    /// Number of states kept per trajectory.
    pub fn n_samples(&self) -> usize {
        (self.n_steps() - self.n_transient_steps()) / self.sample_every + 1
    }

    /// Classical state the ensemble starts from.
    pub fn initial_state(&self) -> Result<PhaseSpaceState> {
        let ss = steady_state_with(&self.params(), 0.0, 0.0, BelowThreshold::Trivial)?;
        Ok(PhaseSpaceState::from_steady_state(&ss))
    }
}

/// Independent seed of trajectory `index`.
pub fn trajectory_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add((index as u64).wrapping_add(1).wrapping_mul(SEED_STRIDE));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub index: usize,
    pub seed: u64,
    pub t_start: f64,
    pub sample_dt: f64,
    pub samples: Vec<PhaseSpaceState>,
}

impl Trajectory {
    pub fn component(&self, k: usize) -> Vec<Complex64> {
        self.samples.iter().map(|s| s.to_array()[k]).collect()
    }

    /// Dumps the samples with a commented header echoing the run settings.
    pub fn write_csv<W: Write>(&self, mut w: W, cfg: &EnsembleConfig, mode: Mode) -> io::Result<()> {
        writeln!(w, "# trajectory {} seed {}", self.index, self.seed)?;
        writeln!(w, "# mode {:?}", mode)?;
        writeln!(w, "# config {}", serde_json::to_string(cfg).map_err(io::Error::other)?)?;
        let mut header = vec!["t".to_string()];
        for name in COMPONENT_NAMES {
            header.push(format!("{name}_re"));
            header.push(format!("{name}_im"));
        }
        writeln!(w, "{}", header.join(","))?;
        for (k, s) in self.samples.iter().enumerate() {
            let mut cells = vec![sig12(self.t_start + k as f64 * self.sample_dt)];
            for c in s.to_array() {
                cells.push(sig12(c.re));
                cells.push(sig12(c.im));
            }
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

type Vec6 = [Complex64; 6];

fn add_scaled(x: &Vec6, y: &Vec6, s: f64) -> Vec6 {
    std::array::from_fn(|k| x[k] + y[k] * s)
}

/// Right-hand side increment over one step for a given noise draw.
trait Increment {
    fn increment(&self, x: &Vec6, dw: &NoiseIncrement, dt: f64) -> Vec6;
}

struct Nonlinear {
    dp: DimensionlessParams,
}

impl Increment for Nonlinear {
    fn increment(&self, x: &Vec6, dw: &NoiseIncrement, dt: f64) -> Vec6 {
        let s = PhaseSpaceState::from_array(*x);
        let a = drift(&s, &self.dp).to_array();
        let b = noise_amplitudes(&s, self.dp.g).apply(dw).to_array();
        std::array::from_fn(|k| a[k] * dt + b[k])
    }
}

/// Fluctuation equations with constant Jacobian and unit-coupling noise.
struct Linearized {
    jacobian: [[Complex64; 6]; 6],
    noise: NoiseCoefficients,
}

impl Increment for Linearized {
    fn increment(&self, x: &Vec6, dw: &NoiseIncrement, dt: f64) -> Vec6 {
        let b = self.noise.apply(dw).to_array();
        std::array::from_fn(|r| {
            let row = &self.jacobian[r];
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..6 {
                acc += row[c] * x[c];
            }
            acc * dt + b[r]
        })
    }
}

fn step(f: &impl Increment, scheme: Scheme, x: &Vec6, dw: &NoiseIncrement, dt: f64) -> Vec6 {
    match scheme {
        Scheme::EulerMaruyama => add_scaled(x, &f.increment(x, dw, dt), 1.0),
        Scheme::SemiImplicitMidpoint => {
            let mut mid = *x;
            for _ in 0..MIDPOINT_ITERATIONS {
                mid = add_scaled(x, &f.increment(&mid, dw, dt), 0.5);
            }
            std::array::from_fn(|k| mid[k] * 2.0 - x[k])
        }
    }
}

fn check(x: &Vec6, t: f64) -> Result<()> {
    let s = PhaseSpaceState::from_array(*x);
    if !s.is_finite() {
        return Err(Error::NonFinite { time: t });
    }
    if s.max_abs() > DIVERGENCE_BOUND {
        return Err(Error::Diverged { time: t });
    }
    Ok(())
}

fn run_path(
    f: &impl Increment,
    cfg: &EnsembleConfig,
    start: Vec6,
    report: impl Fn(&Vec6) -> PhaseSpaceState,
    mut noise: impl FnMut() -> NoiseIncrement,
) -> Result<Vec<PhaseSpaceState>> {
    let n_steps = cfg.n_steps();
    let n_tr = cfg.n_transient_steps();
    let mut out = Vec::with_capacity(cfg.n_samples());
    let mut x = start;
    if n_tr == 0 {
        out.push(report(&x));
    }
    for k in 1..=n_steps {
        let dw = noise();
        x = step(f, cfg.scheme, &x, &dw, cfg.dt);
        check(&x, k as f64 * cfg.dt)?;
        if k >= n_tr && (k - n_tr) % cfg.sample_every == 0 {
            out.push(report(&x));
        }
    }
    Ok(out)
}

/// Integrates one path from `init` with increments supplied by `noise`.
pub fn integrate_with_noise(
    cfg: &EnsembleConfig,
    mode: Mode,
    init: &PhaseSpaceState,
    noise: impl FnMut() -> NoiseIncrement,
) -> Result<Vec<PhaseSpaceState>> {
    cfg.validate()?;
    let dp = cfg.params();
    match mode {
        Mode::FullNonlinear => run_path(&Nonlinear { dp }, cfg, init.to_array(), |x| PhaseSpaceState::from_array(*x), noise),
        Mode::FirstOrder => {
            let ss = cfg.initial_state()?;
            let f = Linearized {
                jacobian: drift_jacobian(&ss, &dp),
                noise: noise_amplitudes(&ss, 1.0),
            };
            let ssa = ss.to_array();
            let start: Vec6 = if cfg.g > 0.0 {
                let ia = init.to_array();
                std::array::from_fn(|k| (ia[k] - ssa[k]) / cfg.g)
            } else {
                [Complex64::new(0.0, 0.0); 6]
            };
            let g = cfg.g;
            run_path(&f, cfg, start, |x| PhaseSpaceState::from_array(add_scaled(&ssa, x, g)), noise)
        }
    }
}

/// Integrates trajectory `index` of the ensemble described by `cfg`.
pub fn integrate_trajectory(
    cfg: &EnsembleConfig,
    mode: Mode,
    init: &PhaseSpaceState,
    index: usize,
) -> Result<Trajectory> {
    let seed = trajectory_seed(cfg.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = cfg.dt;
    let samples = integrate_with_noise(cfg, mode, init, || NoiseIncrement::sample(&mut rng, dt))?;
    Ok(Trajectory {
        index,
        seed,
        t_start: cfg.n_transient_steps() as f64 * cfg.dt,
        sample_dt: cfg.sample_dt(),
        samples,
    })
}

#[derive(Debug)]
pub struct EnsembleOutput<T> {
    /// Per-trajectory results in index order, diverged paths skipped.
    pub values: Vec<T>,
    pub failures: Vec<(usize, Error)>,
}

/// Runs every trajectory in parallel and reduces each one with `reduce`
/// as soon as it finishes, so whole paths are never held together.
pub fn map_ensemble<T, F>(cfg: &EnsembleConfig, mode: Mode, reduce: F) -> Result<EnsembleOutput<T>>
where
    T: Send,
    F: Fn(Trajectory) -> Result<T> + Sync,
{
    cfg.validate()?;
    let init = cfg.initial_state()?;
    let results: Vec<(usize, Result<T>)> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| (i, integrate_trajectory(cfg, mode, &init, i).and_then(&reduce)))
        .collect();
    let mut values = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results {
        match r {
            Ok(v) => values.push(v),
            Err(e @ (Error::Diverged { .. } | Error::NonFinite { .. })) => {
                log::warn!("trajectory {i} dropped: {e}");
                failures.push((i, e));
            }
            Err(e) => return Err(e),
        }
    }
    if failures.len() as f64 > MAX_DIVERGED_FRACTION * cfg.n_traj as f64 {
        return Err(Error::DivergenceRate {
            diverged: failures.len(),
            total: cfg.n_traj,
        });
    }
    Ok(EnsembleOutput { values, failures })
}

/// Runs the ensemble and keeps every path.
pub fn run_ensemble(cfg: &EnsembleConfig, mode: Mode) -> Result<EnsembleOutput<Trajectory>> {
    map_ensemble(cfg, mode, Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> EnsembleConfig {
        EnsembleConfig {
            dt: 1e-3,
            duration: 2.0,
            transient: 0.5,
            n_traj: 4,
            seed: 42,
            g: 0.05,
            gamma_r: 0.25,
            sigma: 2.0,
            sample_every: 10,
            scheme: Scheme::SemiImplicitMidpoint,
        }
    }

    #[test]
    fn validation() {
        assert!(cfg().validate().is_ok());
        for bad in [
            EnsembleConfig { dt: 0.0, ..cfg() },
            EnsembleConfig { dt: 0.05, ..cfg() },
            EnsembleConfig { duration: 0.5, ..cfg() },
            EnsembleConfig { transient: -1.0, ..cfg() },
            EnsembleConfig { n_traj: 0, ..cfg() },
            EnsembleConfig { sample_every: 0, ..cfg() },
            EnsembleConfig { g: -0.1, ..cfg() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn sample_count_and_times() {
        let c = cfg();
        let t = integrate_trajectory(&c, Mode::FullNonlinear, &c.initial_state().unwrap(), 0).unwrap();
        assert_eq!(t.samples.len(), c.n_samples());
        assert_eq!(t.samples.len(), 151);
        assert!((t.t_start - 0.5).abs() < 1e-12);
        assert!((t.sample_dt - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_coupling_stays_on_the_steady_state() {
        for mode in [Mode::FullNonlinear, Mode::FirstOrder] {
            let c = EnsembleConfig { g: 0.0, ..cfg() };
            let init = c.initial_state().unwrap();
            let t = integrate_trajectory(&c, mode, &init, 1).unwrap();
            for s in &t.samples {
                for (a, b) in s.to_array().iter().zip(init.to_array().iter()) {
                    assert!((a - b).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let c = cfg();
        let init = c.initial_state().unwrap();
        let a = integrate_trajectory(&c, Mode::FullNonlinear, &init, 2).unwrap();
        let b = integrate_trajectory(&c, Mode::FullNonlinear, &init, 2).unwrap();
        let d = integrate_trajectory(&c, Mode::FullNonlinear, &init, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples, d.samples);
        assert_ne!(trajectory_seed(0, 0), trajectory_seed(1, 0));
    }

    #[test]
    fn ensemble_order_is_independent_of_scheduling() {
        let c = cfg();
        let out = run_ensemble(&c, Mode::FullNonlinear).unwrap();
        assert!(out.failures.is_empty());
        let init = c.initial_state().unwrap();
        for (i, t) in out.values.iter().enumerate() {
            assert_eq!(t.index, i);
            assert_eq!(*t, integrate_trajectory(&c, Mode::FullNonlinear, &init, i).unwrap());
        }
    }

    #[test]
    fn first_order_tracks_nonlinear_at_small_coupling() {
        let c = EnsembleConfig { g: 1e-4, ..cfg() };
        let init = c.initial_state().unwrap();
        let a = integrate_trajectory(&c, Mode::FullNonlinear, &init, 0).unwrap();
        let b = integrate_trajectory(&c, Mode::FirstOrder, &init, 0).unwrap();
        for (x, y) in a.samples.iter().zip(b.samples.iter()) {
            for (p, q) in x.to_array().iter().zip(y.to_array().iter()) {
                assert!((p - q).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        let c = cfg();
        let mut init = c.initial_state().unwrap();
        init.x_plus = Complex64::new(5e5, 0.0);
        let r = integrate_with_noise(&c, Mode::FullNonlinear, &init, NoiseIncrement::default);
        assert!(matches!(r, Err(Error::Diverged { .. }) | Err(Error::NonFinite { .. })));
    }

    #[test]
    fn relaxes_to_steady_state_without_noise() {
        let c = EnsembleConfig { duration: 400.0, transient: 0.0, g: 0.0, sample_every: 1000, ..cfg() };
        let mut init = c.initial_state().unwrap();
        let target = init;
        init.x_plus += 0.3;
        init.y0 += 0.2;
        let path = integrate_with_noise(&c, Mode::FullNonlinear, &init, NoiseIncrement::default).unwrap();
        let last = path.last().unwrap().to_array();
        for (a, b) in last.iter().zip(target.to_array().iter()) {
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn trajectory_csv_layout() {
        let c = EnsembleConfig { duration: 0.6, ..cfg() };
        let t = integrate_trajectory(&c, Mode::FullNonlinear, &c.initial_state().unwrap(), 0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &c, Mode::FullNonlinear).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# trajectory 0 seed "));
        assert!(lines[3].starts_with("t,x0_re,x0_im,y0_re"));
        assert_eq!(lines.len(), 4 + t.samples.len());
        assert_eq!(lines[4].split(',').count(), 13);
    }
}
