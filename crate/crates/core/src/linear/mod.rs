//! Linearized quadrature-noise spectra of the above-threshold OPO.
//!
//! The fluctuation system `tau d/dt dx = M dx + N dxi` is solved in Fourier
//! space and mapped to the transmitted fields with the one-port relation
//! `out = sqrt(2 gamma) dx - in` on the output mirror. Spurious-loss ports are
//! traced out as vacuum. Spectra are symmetric and normalized so that vacuum
//! is 1.
//!
//! Frequencies are in units of the damping rate `gamma_d = 2 gamma / tau`,
//! i.e. `Omega tau = 2 gamma Omega'`. With this convention the resonant,
//! lossless results coincide with [`analytic_sp_minus`] and
//! [`analytic_sq_plus`].

mod analytic;
mod drift;
mod scan;

pub use analytic::{analytic_sp_minus, analytic_sq_plus, duan_sum, DuanOutcome, SEPARABILITY_BOUND};
pub use drift::*;
pub use scan::{scan_sigma, ScanRow, ScanTable, CROSSING_RESOLUTION};

use nalgebra::{DMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PhysicalParams;

/// Frequency-flat noise of the pump beam entering the OPO, in SQL units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpNoiseSpec {
    pub s_p0: f64,
    pub s_q0: f64,
}

impl Default for PumpNoiseSpec {
    fn default() -> Self {
        Self::SHOT_NOISE
    }
}

impl PumpNoiseSpec {
    pub const SHOT_NOISE: PumpNoiseSpec = PumpNoiseSpec { s_p0: 1.0, s_q0: 1.0 };

    pub fn new(s_p0: f64, s_q0: f64) -> Result<Self> {
        let spec = PumpNoiseSpec { s_p0, s_q0 };
        spec.validate()?;
        Ok(spec)
    }

    /// Rejects negative spectra; warns when the uncertainty product is below 1.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("s_p0", self.s_p0), ("s_q0", self.s_q0)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        if !self.satisfies_uncertainty() {
            log::warn!(
                "pump noise ({}, {}) violates the uncertainty product S_p0 S_q0 >= 1",
                self.s_p0,
                self.s_q0
            );
        }
        Ok(())
    }

    pub fn satisfies_uncertainty(&self) -> bool {
        self.s_p0 * self.s_q0 >= 1.0
    }
}

/// Output noise spectra at one analysis frequency, SQL = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpectra {
    pub s_p_minus: f64,
    pub s_q_minus: f64,
    pub s_p_plus: f64,
    pub s_q_plus: f64,
    /// Reflected pump amplitude noise.
    pub s_p0_ref: f64,
    /// Reflected pump phase noise.
    pub s_q0_ref: f64,
    /// Analysis frequency in units of `gamma_d`.
    pub omega: f64,
}

impl QuadratureSpectra {
    /// Mixes each spectrum with vacuum for a detector of efficiency `eta`.
    pub fn with_detection_efficiency(self, eta: f64) -> Self {
        let mix = |s: f64| eta * s + (1.0 - eta);
        QuadratureSpectra {
            s_p_minus: mix(self.s_p_minus),
            s_q_minus: mix(self.s_q_minus),
            s_p_plus: mix(self.s_p_plus),
            s_q_plus: mix(self.s_q_plus),
            s_p0_ref: mix(self.s_p0_ref),
            s_q0_ref: mix(self.s_q0_ref),
            omega: self.omega,
        }
    }

    /// Inseparability sum `S_p- + S_q+`.
    pub fn duan(&self) -> DuanOutcome {
        duan_criterion(self)
    }

    pub fn as_array(&self) -> [f64; N_STATE] {
        [
            self.s_p_minus,
            self.s_q_minus,
            self.s_p_plus,
            self.s_q_plus,
            self.s_p0_ref,
            self.s_q0_ref,
        ]
    }
}

pub fn duan_criterion(spectra: &QuadratureSpectra) -> DuanOutcome {
    duan_sum(spectra.s_p_minus, spectra.s_q_plus)
}

/// Validates a detection efficiency in `[0, 1]`.
pub fn check_efficiency(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::invalid("efficiency", format!("must lie in [0, 1], got {eta}")))
    }
}

pub fn output_spectra(
    params: &PhysicalParams,
    pump: &PumpNoiseSpec,
    omega: f64,
) -> Result<QuadratureSpectra> {
    params.validate()?;
    pump.validate()?;
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::invalid("omega", format!("must be > 0, got {omega}")));
    }
    if params.sigma < 1.0 {
        return Err(Error::NoOscillation {
            sigma: params.sigma,
            threshold: 1.0,
        });
    }
    let ss = params.operating_point()?;
    let m = build_drift_matrix(params, &ss);
    spectra_from_drift(&m, pump, params.gamma, omega)
}

/// Spectra of a prebuilt fluctuation system; `gamma` sets the frequency unit.
pub fn spectra_from_drift(
    m: &DriftMatrix,
    pump: &PumpNoiseSpec,
    gamma: f64,
    omega: f64,
) -> Result<QuadratureSpectra> {
    let nu = 2.0 * gamma * omega;
    let mut inputs = [1.0; N_INPUT];
    inputs[P0_IN] = pump.s_p0;
    inputs[Q0_IN] = pump.s_q0;

    let mut out = [0.0; N_STATE];
    for block in [&SUBTRACTION_BLOCK[..], &SUM_PUMP_BLOCK[..]] {
        let s = block_spectra(m, block, nu, &inputs).ok_or(Error::SingularResponse { omega })?;
        for (k, &row) in block.iter().enumerate() {
            out[row] = s[k];
        }
    }
    Ok(QuadratureSpectra {
        s_p_minus: out[P_MINUS],
        s_q_minus: out[Q_MINUS],
        s_p_plus: out[P_PLUS],
        s_q_plus: out[Q_PLUS],
        s_p0_ref: out[P0],
        s_q0_ref: out[Q0],
        omega,
    })
}

/// Relative pivot size below which the response is declared singular.
const SINGULAR_PIVOT: f64 = 1e-13;

/// Output spectra of the fields in `block`, solving only that block.
fn block_spectra(
    m: &DriftMatrix,
    block: &[usize],
    nu: f64,
    inputs: &[f64; N_INPUT],
) -> Option<Vec<f64>> {
    let n = block.len();
    let a = DMatrix::<Complex64>::from_fn(n, n, |r, c| {
        let diag = if r == c { Complex64::new(0.0, nu) } else { Complex64::new(0.0, 0.0) };
        diag - m.drift[(block[r], block[c])]
    });
    let b = DMatrix::<Complex64>::from_fn(n, N_INPUT, |r, c| {
        Complex64::new(m.input_couplings[(block[r], c)], 0.0)
    });
    let lu = a.lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..n).map(|i| u[(i, i)].norm()).collect();
    let largest = pivots.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 || pivots.iter().any(|&p| p <= SINGULAR_PIVOT * largest) {
        return None;
    }
    let response = lu.solve(&b)?;
    let couplings: SVector<f64, N_STATE> = m.output_couplings;
    let mut spectra = Vec::with_capacity(n);
    for (k, &row) in block.iter().enumerate() {
        let mut s = 0.0;
        for (j, &sj) in inputs.iter().enumerate() {
            let mut t = response[(k, j)] * couplings[row];
            if j == m.direct_inputs[row] {
                t -= 1.0;
            }
            s += t.norm_sqr() * sj;
        }
        if !s.is_finite() {
            return None;
        }
        spectra.push(s);
    }
    Some(spectra)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal(sigma: f64, gamma_r: f64) -> PhysicalParams {
        let gamma = 0.02;
        PhysicalParams {
            gamma,
            gamma0: gamma_r * gamma,
            gamma_total: gamma,
            gamma_total0: gamma_r * gamma,
            delta: 0.0,
            delta0: 0.0,
            tau: 1e-9,
            chi: 1.0,
            sigma,
        }
    }

    #[test]
    fn ideal_matches_closed_forms() {
        for sigma in [1.0, 1.3, 2.0, 4.0] {
            for gr in [0.25, 1.0, 1.75] {
                for w in [0.05, 0.3, 1.0, 3.0] {
                    let s = output_spectra(&ideal(sigma, gr), &PumpNoiseSpec::SHOT_NOISE, w).unwrap();
                    assert!((s.s_p_minus - analytic_sp_minus(w)).abs() < 1e-10);
                    assert!((s.s_q_plus - analytic_sq_plus(w, sigma, gr)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn minimum_uncertainty_without_spurious_loss() {
        let mut p = ideal(2.0, 1.0);
        for w in [0.1, 1.0, 10.0] {
            let s = output_spectra(&p, &PumpNoiseSpec::SHOT_NOISE, w).unwrap();
            assert!((s.s_p_minus * s.s_q_minus - 1.0).abs() < 1e-10);
        }
        p.gamma_total = 0.025;
        let s = output_spectra(&p, &PumpNoiseSpec::SHOT_NOISE, 0.5).unwrap();
        assert!(s.s_p_minus * s.s_q_minus > 1.0);
        // detuning feeds amplitude noise into the phase difference
        let mut d = ideal(2.0, 1.0);
        d.delta = 0.4;
        let s = output_spectra(&d, &PumpNoiseSpec::SHOT_NOISE, 0.5).unwrap();
        assert!(s.s_p_minus * s.s_q_minus > 1.0 + 1e-6);
    }

    #[test]
    fn excess_pump_noise_destroys_phase_sum_squeezing() {
        let pump = PumpNoiseSpec::new(1.5, 5.5).unwrap();
        let s = output_spectra(&ideal(2.0, 1.75), &pump, 0.25).unwrap();
        assert!(s.s_q_plus > 1.0);
    }

    #[test]
    fn decoupled_block_is_bitwise_stable() {
        let pumps = [PumpNoiseSpec::SHOT_NOISE, PumpNoiseSpec::new(1.5, 5.5).unwrap()];
        let mut p = ideal(1.1, 1.75);
        p.delta = 0.2;
        p.delta0 = 0.1;
        p.gamma_total = 0.024;
        let reference = output_spectra(&p, &pumps[0], 0.7).unwrap();
        for sigma in [1.5, 2.2, 3.0] {
            for pump in &pumps {
                let s = output_spectra(&p.with_sigma(sigma), pump, 0.7).unwrap();
                assert_eq!(s.s_p_minus.to_bits(), reference.s_p_minus.to_bits());
                assert_eq!(s.s_q_minus.to_bits(), reference.s_q_minus.to_bits());
            }
        }
    }

    #[test]
    fn threshold_pump_reflection_is_vacuum() {
        for w in [0.1, 1.0, 5.0] {
            let s = output_spectra(&ideal(1.0, 1.3), &PumpNoiseSpec::SHOT_NOISE, w).unwrap();
            assert!((s.s_p0_ref - 1.0).abs() < 1e-12);
            assert!((s.s_q0_ref - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn efficiency_mixing() {
        let s = output_spectra(&ideal(2.0, 1.0), &PumpNoiseSpec::SHOT_NOISE, 1.0).unwrap();
        let d = s.with_detection_efficiency(0.8);
        assert!((d.s_p_minus - (0.8 * 0.5 + 0.2)).abs() < 1e-12);
        assert_eq!(s.with_detection_efficiency(1.0), s);
        assert!(check_efficiency(1.2).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = ideal(2.0, 1.0);
        assert!(output_spectra(&p, &PumpNoiseSpec::SHOT_NOISE, 0.0).is_err());
        assert!(output_spectra(&p, &PumpNoiseSpec { s_p0: -1.0, s_q0: 1.0 }, 1.0).is_err());
        assert!(matches!(
            output_spectra(&p.with_sigma(0.9), &PumpNoiseSpec::SHOT_NOISE, 1.0),
            Err(Error::NoOscillation { .. })
        ));
    }

    #[test]
    fn singular_response_is_flagged() {
        // At sigma = 1 and zero detuning p+ is undamped: the sum block is
        // singular at vanishing frequency.
        let p = ideal(1.0, 1.0);
        let r = output_spectra(&p, &PumpNoiseSpec::SHOT_NOISE, 1e-300);
        assert!(matches!(r, Err(Error::SingularResponse { .. })));
    }

    #[test]
    fn all_spectra_nonnegative() {
        let mut p = ideal(1.7, 0.8);
        p.delta = -0.6;
        p.delta0 = 0.9;
        p.gamma_total = 0.03;
        p.gamma_total0 = 0.02;
        p.sigma = 3.0;
        for w in [0.01, 0.2, 1.0, 8.0] {
            let s = output_spectra(&p, &PumpNoiseSpec::new(2.0, 3.0).unwrap(), w).unwrap();
            assert!(s.as_array().iter().all(|&v| v >= 0.0));
        }
    }
}
