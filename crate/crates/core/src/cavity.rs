//! Readout of quadrature noise by reflection off a detuned empty cavity.
//!
//! The cavity is a one-port with total half-width normalized to 1. A
//! frequency `delta` (in half-widths) from resonance is reflected with
//!
//! ```text
//! r(delta) = (k_loss - k_in + i delta) / (1 + i delta),   k_in + k_loss = 1
//! ```
//!
//! The carrier and both sidebands at `±Omega` are reflected separately and
//! the amplitude quadrature is taken relative to the reflected carrier.

use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::csvout;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisCavitySpec {
    /// Full width at half maximum, Hz.
    pub bandwidth_hz: f64,
    /// Carrier detunings in units of the bandwidth.
    pub detuning_grid: Vec<f64>,
    pub analysis_frequency_hz: f64,
    /// Fraction of the cavity decay rate lost through spurious losses.
    #[serde(default)]
    pub mirror_loss: f64,
}

impl AnalysisCavitySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) || !self.bandwidth_hz.is_finite() {
            return Err(Error::invalid("bandwidth_hz", "must be positive"));
        }
        if !(self.analysis_frequency_hz > 0.0) || !self.analysis_frequency_hz.is_finite() {
            return Err(Error::invalid("analysis_frequency_hz", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.mirror_loss) {
            return Err(Error::invalid("mirror_loss", "must lie in [0, 1)"));
        }
        if self.detuning_grid.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("detuning_grid", "values must be finite"));
        }
        Ok(())
    }

    /// Whether phase noise is fully rotated into amplitude noise at
    /// half-bandwidth detuning.
    pub fn full_conversion(&self) -> bool {
        self.analysis_frequency_hz > self.bandwidth_hz
    }

    /// Logs a warning outside the full-conversion regime.
    pub fn check_regime(&self) -> bool {
        let ok = self.full_conversion();
        if !ok {
            log::warn!(
                "analysis frequency {} Hz below cavity bandwidth {} Hz: incomplete phase conversion",
                self.analysis_frequency_hz,
                self.bandwidth_hz
            );
        }
        ok
    }

    fn sideband(&self) -> f64 {
        self.analysis_frequency_hz / self.bandwidth_hz
    }
}

/// Reflection coefficient at carrier `detuning` plus `sideband_offset`, both
/// in units of the bandwidth.
pub fn reflection_coefficient(spec: &AnalysisCavitySpec, detuning: f64, sideband_offset: f64) -> Complex64 {
    let delta = 2.0 * (detuning + sideband_offset);
    if !delta.is_finite() {
        return Complex64::new(1.0, 0.0);
    }
    let k_loss = spec.mirror_loss;
    let k_in = 1.0 - k_loss;
    Complex64::new(k_loss - k_in, delta) / Complex64::new(1.0, delta)
}

/// Weights of the input quadrature spectra in the detected amplitude noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutWeights {
    pub amplitude: f64,
    pub phase: f64,
    pub cross: f64,
    pub loss_vacuum: f64,
}

pub fn readout_weights(spec: &AnalysisCavitySpec, detuning: f64) -> ReadoutWeights {
    let w = spec.sideband();
    let r0 = reflection_coefficient(spec, detuning, 0.0);
    let rp = reflection_coefficient(spec, detuning, w);
    let rm = reflection_coefficient(spec, detuning, -w);
    let rot = if r0.norm() > 0.0 { (r0 / r0.norm()).conj() } else { Complex64::new(1.0, 0.0) };
    let up = rot * rp;
    let lo = rot.conj() * rm.conj();
    let gp = (up + lo) * 0.5;
    let gq = Complex64::new(0.0, 0.5) * (up - lo);
    ReadoutWeights {
        amplitude: gp.norm_sqr(),
        phase: gq.norm_sqr(),
        cross: 2.0 * (gp * gq.conj()).re,
        loss_vacuum: 0.5 * ((1.0 - rp.norm_sqr()) + (1.0 - rm.norm_sqr())),
    }
}

/// Detected amplitude noise of the reflected beam for input spectra `s_p`,
/// `s_q` and symmetrized cross-spectrum `correlation`.
pub fn detected_noise_correlated(
    spec: &AnalysisCavitySpec,
    s_p: f64,
    s_q: f64,
    correlation: f64,
    detuning: f64,
) -> f64 {
    let w = readout_weights(spec, detuning);
    w.amplitude * s_p + w.phase * s_q + w.cross * correlation + w.loss_vacuum
}

pub fn detected_noise(spec: &AnalysisCavitySpec, s_p: f64, s_q: f64, detuning: f64) -> f64 {
    detected_noise_correlated(spec, s_p, s_q, 0.0, detuning)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub detuning: f64,
    pub detected_noise: f64,
}

pub fn detuning_sweep(spec: &AnalysisCavitySpec, s_p: f64, s_q: f64) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    if !(s_p >= 0.0) || !(s_q >= 0.0) {
        return Err(Error::invalid("s_p/s_q", "spectra must be non-negative"));
    }
    spec.check_regime();
    Ok(spec
        .detuning_grid
        .iter()
        .map(|&d| SweepPoint {
            detuning: d,
            detected_noise: detected_noise(spec, s_p, s_q, d),
        })
        .collect())
}

pub fn write_sweep_csv<W: Write>(w: W, sweep: &[SweepPoint]) -> io::Result<()> {
    let rows: Vec<Vec<f64>> = sweep.iter().map(|p| vec![p.detuning, p.detected_noise]).collect();
    csvout::write_table(w, &["detuning", "detected_noise"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(loss: f64) -> AnalysisCavitySpec {
        AnalysisCavitySpec {
            bandwidth_hz: 14e6,
            detuning_grid: (-40..=40).map(|k| k as f64 * 0.05).collect(),
            analysis_frequency_hz: 27e6,
            mirror_loss: loss,
        }
    }

    #[test]
    fn reflection_limits() {
        let s = spec(0.0);
        assert!((reflection_coefficient(&s, 1e9, 0.0) - 1.0).norm() < 1e-8);
        assert!((reflection_coefficient(&s, f64::INFINITY, 0.0) - 1.0).norm() == 0.0);
        for d in [-3.0, -0.5, 0.0, 0.2, 7.0] {
            assert!((reflection_coefficient(&s, d, 0.3).norm() - 1.0).abs() < 1e-15);
        }
        assert!(reflection_coefficient(&spec(0.5), 0.0, 0.0).norm() < 1e-15);
        assert!(reflection_coefficient(&spec(0.2), 0.1, 0.0).norm() < 1.0);
    }

    #[test]
    fn off_resonance_reads_amplitude() {
        let s = spec(0.0);
        assert!((detected_noise(&s, 0.5, 0.73, 1e4) - 0.5).abs() < 1e-6);
        assert!((detected_noise(&s, 3.0, 0.2, -1e4) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn half_bandwidth_reads_phase() {
        let s = spec(0.0);
        for (p, q) in [(0.5, 0.73), (0.59, 0.82), (1.0, 4.0)] {
            for d in [0.5, -0.5] {
                let v = detected_noise(&s, p, q, d);
                assert!((v - q).abs() < 0.02 * q, "{p} {q} {d}: {v}");
            }
        }
    }

    #[test]
    fn weights_at_measurement_point() {
        let w = readout_weights(&spec(0.0), 0.5);
        assert!(w.phase > 0.98 && w.amplitude < 0.02);
        assert!((w.amplitude + w.phase - 1.0).abs() < 1e-12);
        assert!(w.loss_vacuum.abs() < 1e-15);
    }

    #[test]
    fn measured_pair_extremes() {
        let s = AnalysisCavitySpec {
            detuning_grid: (-160..=160).map(|k| k as f64 * 0.05).collect(),
            ..spec(0.0)
        };
        let sweep = detuning_sweep(&s, 0.50, 0.73).unwrap();
        let lo = sweep.iter().map(|p| p.detected_noise).fold(f64::INFINITY, f64::min);
        let hi = sweep.iter().map(|p| p.detected_noise).fold(0.0, f64::max);
        assert!((sweep[0].detected_noise - 0.5).abs() < 0.01);
        assert!((lo - 0.5).abs() < 0.01 && hi <= 0.73 + 1e-12 && hi > 0.72);
    }

    #[test]
    fn large_phase_noise_swing_is_monotone_towards_resonance() {
        let s = spec(0.0);
        let v: Vec<f64> = (0..=50).map(|k| detected_noise(&s, 0.0, 1e6, 2.5 - 0.04 * k as f64)).collect();
        // Rotation grows from far off resonance down to the half-bandwidth point.
        let up_to_half = &v[..=50];
        let peak = up_to_half.iter().cloned().fold(0.0, f64::max);
        assert!(peak > 0.98e6);
        let ipeak = up_to_half.iter().position(|&x| x == peak).unwrap();
        assert!(up_to_half[..=ipeak].windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn regime_flag() {
        let mut s = spec(0.0);
        assert!(s.full_conversion());
        s.analysis_frequency_hz = 5e6;
        assert!(!s.check_regime());
        assert!(detuning_sweep(&s, 1.0, 1.0).is_ok());
    }

    #[test]
    fn validation() {
        assert!(spec(1.0).validate().is_err());
        assert!(AnalysisCavitySpec { bandwidth_hz: 0.0, ..spec(0.0) }.validate().is_err());
        assert!(AnalysisCavitySpec { analysis_frequency_hz: -1.0, ..spec(0.0) }.validate().is_err());
        assert!(detuning_sweep(&spec(0.0), -0.1, 1.0).is_err());
    }

    #[test]
    fn csv() {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &[SweepPoint { detuning: 0.5, detected_noise: 0.73 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "detuning,detected_noise\n0.5,0.73\n");
    }

    proptest! {
        #[test]
        fn vacuum_is_invariant(d in -5.0f64..5.0, loss in 0.0f64..0.9, ratio in 0.1f64..5.0) {
            let s = AnalysisCavitySpec { analysis_frequency_hz: ratio * 14e6, ..spec(loss) };
            prop_assert!((detected_noise(&s, 1.0, 1.0, d) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn lossless_readout_is_bounded(d in -5.0f64..5.0, p in 0.0f64..3.0, q in 0.0f64..3.0) {
            let v = detected_noise(&spec(0.0), p, q, d);
            prop_assert!(v >= p.min(q) - 1e-12 && v <= p.max(q) + 1e-12);
        }

        #[test]
        fn symmetric_under_detuning_flip(d in 0.0f64..5.0, p in 0.0f64..3.0, q in 0.0f64..3.0) {
            let s = spec(0.1);
            prop_assert!((detected_noise(&s, p, q, d) - detected_noise(&s, p, q, -d)).abs() < 1e-12);
        }
    }
}
