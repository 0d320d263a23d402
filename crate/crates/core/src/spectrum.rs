//! Welch spectra of positive-P ensembles, normalized to the shot-noise level.
//!
//! Periodograms use the two-sided density convention: a white sequence of
//! variance `v` sampled at step `dt` has density `v * dt`. For the complex
//! phase-space series the estimator is `Re[Z(w) Z(-w)]`, which averages to the
//! normally ordered fluctuation spectrum.
//!
//! Output normalization follows from the scaling of the stochastic variables.
//! The EPR combinations carry a factor `g / sqrt(2)` relative to the
//! intracavity quadrature fluctuations and the pump quadratures a factor
//! `g sqrt(2 gamma_r)`; combined with the output coupling and the time unit
//! `T` this gives
//!
//! ```text
//! S(Omega') = 1 + (2 / g^2) P_T(2 Omega')   for x-, y-, x+, y+
//! S(Omega') = 1 + (1 / g^2) P_T(2 Omega')   for x0, y0
//! ```
//!
//! where `P_T` is the density in units of `T` (so `gamma_r` cancels). For the
//! first-order `x-` fluctuation `P_T(w) = -2 g^2 / (4 + w^2)`, giving
//! `S = 1 - 1 / (1 + Omega'^2)`.

use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::csvout;
use crate::error::{Error, Result};
use crate::sde::Trajectory;

/// Number of overlapping segments used when the series is long enough.
pub const WELCH_SEGMENTS: usize = 8;
/// Shortest segment for which the series is split.
pub const MIN_SEGMENT_LEN: usize = 64;
/// Per-bin agreement threshold in combined standard errors.
pub const AGREEMENT_SIGMAS: f64 = 3.0;
/// Fraction of bins that must agree for two spectra to be consistent.
pub const AGREEMENT_FRACTION: f64 = 0.95;

/// Per-segment periodograms of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    /// Angular frequencies in inverse units of the sampling step, DC dropped.
    pub omega: Vec<f64>,
    pub segments: Vec<Vec<f64>>,
}

impl Periodogram {
    pub fn mean(&self) -> Vec<f64> {
        let k = self.segments.len() as f64;
        (0..self.omega.len())
            .map(|i| kahan_sum(self.segments.iter().map(|s| s[i])) / k)
            .collect()
    }
}

/// Segment length and hop for a series of `n` samples.
pub fn segment_layout(n: usize) -> (usize, usize, usize) {
    let len = 2 * n / (WELCH_SEGMENTS + 1);
    if len >= MIN_SEGMENT_LEN {
        (len, len / 2, WELCH_SEGMENTS)
    } else {
        (n, n, 1)
    }
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()))
        .collect()
}

fn welch(series: &[Complex64], dt: f64, real_input: bool) -> Result<Periodogram> {
    if series.len() < 2 {
        return Err(Error::TooShort { len: series.len() });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let (len, hop, count) = segment_layout(series.len());
    let window = hann(len);
    let scale = dt / window.iter().map(|w| w * w).sum::<f64>();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(len);
    let n_bins = len / 2;
    let omega = (1..=n_bins)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / (len as f64 * dt))
        .collect();

    // One mean for the whole series: per-segment means notch the lowest bin.
    let mean = series.iter().sum::<Complex64>() / series.len() as f64;
    let mut segments = Vec::with_capacity(count);
    let mut buf = vec![Complex64::default(); len];
    for s in 0..count {
        let seg = &series[s * hop..s * hop + len];
        for (b, (x, w)) in buf.iter_mut().zip(seg.iter().zip(window.iter())) {
            *b = (x - mean) * w;
        }
        fft.process(&mut buf);
        let row = (1..=n_bins)
            .map(|k| {
                let zk = buf[k];
                if real_input {
                    zk.norm_sqr() * scale
                } else {
                    (zk * buf[(len - k) % len]).re * scale
                }
            })
            .collect();
        segments.push(row);
    }
    Ok(Periodogram { omega, segments })
}

/// Hann-windowed Welch periodogram of a real series.
pub fn periodogram(series: &[f64], dt: f64) -> Result<Periodogram> {
    let c: Vec<Complex64> = series.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    welch(&c, dt, true)
}

/// Welch estimate of `Re[Z(w) Z(-w)]` for a complex phase-space series.
pub fn complex_periodogram(series: &[Complex64], dt: f64) -> Result<Periodogram> {
    welch(series, dt, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combination {
    /// `p-`, carried by `x-`.
    PMinus,
    /// `q-`, carried by `y-`.
    QMinus,
    /// `p+`, carried by `x+`.
    PPlus,
    /// `q+`, carried by `y+`.
    QPlus,
    P0,
    Q0,
}

impl Combination {
    pub const ALL: [Combination; 6] = [
        Combination::PMinus,
        Combination::QMinus,
        Combination::PPlus,
        Combination::QPlus,
        Combination::P0,
        Combination::Q0,
    ];

    /// Index into `PhaseSpaceState::to_array`.
    pub fn component(self) -> usize {
        match self {
            Combination::P0 => 0,
            Combination::Q0 => 1,
            Combination::PPlus => 2,
            Combination::QPlus => 3,
            Combination::PMinus => 4,
            Combination::QMinus => 5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Combination::PMinus => "p_minus",
            Combination::QMinus => "q_minus",
            Combination::PPlus => "p_plus",
            Combination::QPlus => "q_plus",
            Combination::P0 => "p0",
            Combination::Q0 => "q0",
        }
    }
}

/// Factor mapping the `T`-unit density of a combination onto its output
/// spectrum in shot-noise units, `S = 1 + c P_T`. `None` for `g = 0`, where
/// every output is vacuum.
pub fn output_normalization(combination: Combination, g: f64) -> Option<f64> {
    if g == 0.0 {
        return None;
    }
    let sql = match combination {
        Combination::P0 | Combination::Q0 => 1.0,
        _ => 2.0,
    };
    Some(sql / (g * g))
}

/// Converts `T`-unit angular frequency to the `Omega'` grid.
pub fn omega_prime(omega_t: f64) -> f64 {
    0.5 * omega_t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub combination: Combination,
    /// `Omega'`, in units of the cavity damping rate.
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_traj: usize,
    pub normalized: bool,
    pub meta: serde_json::Value,
}

pub const SPECTRUM_HEADER: [&str; 4] = ["frequency", "value", "stderr", "nTraj"];

impl SpectrumEstimate {
    /// Maps the raw density onto shot-noise units. Already normalized
    /// estimates are returned unchanged.
    pub fn normalize(mut self, g: f64) -> Self {
        if self.normalized {
            return self;
        }
        match output_normalization(self.combination, g) {
            Some(c) => {
                for v in &mut self.values {
                    *v = 1.0 + c * *v;
                }
                for e in &mut self.stderr {
                    *e *= c;
                }
            }
            None => {
                self.values.iter_mut().for_each(|v| *v = 1.0);
                self.stderr.iter_mut().for_each(|e| *e = 0.0);
            }
        }
        self.normalized = true;
        self
    }

    /// Keeps the bins with `frequency <= max`.
    pub fn band(mut self, max: f64) -> Self {
        let n = self.frequencies.iter().take_while(|&&f| f <= max).count();
        self.frequencies.truncate(n);
        self.values.truncate(n);
        self.stderr.truncate(n);
        self
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let n = self.n_traj as f64;
        let rows: Vec<Vec<f64>> = (0..self.frequencies.len())
            .map(|i| vec![self.frequencies[i], self.values[i], self.stderr[i], n])
            .collect();
        csvout::write_table(w, &SPECTRUM_HEADER, &rows)
    }
}

/// Neumaier-compensated sum.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Welch periodogram of one trajectory's combination.
pub fn trajectory_periodogram(traj: &Trajectory, combination: Combination) -> Result<Periodogram> {
    complex_periodogram(&traj.component(combination.component()), traj.sample_dt)
}

/// Averages per-trajectory periodograms given in trajectory order into a raw
/// estimate on the `Omega'` grid.
pub fn aggregate(
    per_traj: &[Periodogram],
    combination: Combination,
    meta: serde_json::Value,
) -> Result<SpectrumEstimate> {
    let first = per_traj.first().ok_or(Error::EmptyEnsemble)?;
    let bins = first.omega.len();
    for p in per_traj {
        if p.omega.len() != bins || p.segments.len() != first.segments.len() {
            return Err(Error::InconsistentLengths {
                expected: bins,
                found: p.omega.len(),
            });
        }
    }
    let (values, stderr) = if per_traj.len() == 1 {
        let segs: Vec<Vec<f64>> = first.segments.clone();
        mean_and_stderr(&segs, bins)
    } else {
        let means: Vec<Vec<f64>> = per_traj.iter().map(Periodogram::mean).collect();
        mean_and_stderr(&means, bins)
    };
    Ok(SpectrumEstimate {
        combination,
        frequencies: first.omega.iter().map(|&w| omega_prime(w)).collect(),
        values,
        stderr,
        n_traj: per_traj.len(),
        normalized: false,
        meta,
    })
}

/// Sample mean per bin and its standard error. A single sample gets the
/// chi-square(2) spread of one periodogram ordinate.
fn mean_and_stderr(samples: &[Vec<f64>], bins: usize) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let mut values = Vec::with_capacity(bins);
    let mut stderr = Vec::with_capacity(bins);
    for i in 0..bins {
        let m = kahan_sum(samples.iter().map(|s| s[i])) / n;
        let se = if samples.len() > 1 {
            let ss = kahan_sum(samples.iter().map(|s| (s[i] - m) * (s[i] - m)));
            (ss / (n - 1.0) / n).sqrt()
        } else {
            m.abs()
        };
        values.push(m);
        stderr.push(se);
    }
    (values, stderr)
}

/// Raw ensemble spectrum of one combination.
pub fn ensemble_spectrum(
    ensemble: &[Trajectory],
    combination: Combination,
    meta: serde_json::Value,
) -> Result<SpectrumEstimate> {
    let first = ensemble.first().ok_or(Error::EmptyEnsemble)?;
    for t in ensemble {
        if t.samples.len() != first.samples.len() {
            return Err(Error::InconsistentLengths {
                expected: first.samples.len(),
                found: t.samples.len(),
            });
        }
    }
    let per: Vec<Periodogram> = ensemble
        .iter()
        .map(|t| trajectory_periodogram(t, combination))
        .collect::<Result<_>>()?;
    aggregate(&per, combination, meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub bins: usize,
    pub passing: usize,
    pub fraction: f64,
    pub pass: bool,
}

/// Bin-wise comparison of two estimates on the same grid, using their
/// combined standard errors.
pub fn compare_estimates(a: &SpectrumEstimate, b: &SpectrumEstimate) -> Result<Agreement> {
    if a.frequencies.len() != b.frequencies.len() {
        return Err(Error::InconsistentLengths {
            expected: a.frequencies.len(),
            found: b.frequencies.len(),
        });
    }
    let passing = (0..a.values.len())
        .filter(|&i| {
            let tol = AGREEMENT_SIGMAS * a.stderr[i].hypot(b.stderr[i]);
            (a.values[i] - b.values[i]).abs() <= tol
        })
        .count();
    Ok(agreement(a.values.len(), passing))
}

/// Bin-wise comparison of an estimate against an exact curve.
pub fn compare_to_curve(a: &SpectrumEstimate, curve: impl Fn(f64) -> f64) -> Agreement {
    let passing = (0..a.values.len())
        .filter(|&i| (a.values[i] - curve(a.frequencies[i])).abs() <= AGREEMENT_SIGMAS * a.stderr[i])
        .count();
    agreement(a.values.len(), passing)
}

fn agreement(bins: usize, passing: usize) -> Agreement {
    let fraction = if bins == 0 { 0.0 } else { passing as f64 / bins as f64 };
    Agreement {
        bins,
        passing,
        fraction,
        pass: bins > 0 && fraction >= AGREEMENT_FRACTION,
    }
}

/// Periodograms of the first and second half of a trajectory's window.
pub fn half_periodograms(traj: &Trajectory, combination: Combination) -> Result<(Periodogram, Periodogram)> {
    let s = traj.component(combination.component());
    let h = s.len() / 2;
    Ok((
        complex_periodogram(&s[..h], traj.sample_dt)?,
        complex_periodogram(&s[h..2 * h], traj.sample_dt)?,
    ))
}

/// Compares the ensemble spectra of the two window halves; logs a warning
/// when they disagree.
pub fn stationarity_from(
    first: &[Periodogram],
    second: &[Periodogram],
    combination: Combination,
) -> Result<Agreement> {
    let a = aggregate(first, combination, serde_json::Value::Null)?;
    let b = aggregate(second, combination, serde_json::Value::Null)?;
    let report = compare_estimates(&a, &b)?;
    if !report.pass {
        log::warn!(
            "{} spectrum looks non-stationary: {}/{} bins agree between window halves",
            combination.label(),
            report.passing,
            report.bins
        );
    }
    Ok(report)
}

pub fn stationarity_check(ensemble: &[Trajectory], combination: Combination) -> Result<Agreement> {
    let (first, second): (Vec<_>, Vec<_>) = ensemble
        .iter()
        .map(|t| half_periodograms(t, combination))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    stationarity_from(&first, &second, combination)
}
