use nalgebra::{SMatrix, SVector};

use crate::model::{PhysicalParams, SteadyState};

/// State ordering of the linearized fluctuation system.
pub const P_MINUS: usize = 0;
pub const Q_MINUS: usize = 1;
pub const P_PLUS: usize = 2;
pub const Q_PLUS: usize = 3;
pub const P0: usize = 4;
pub const Q0: usize = 5;

/// Input noise ordering: output-mirror vacua `u`, spurious-loss vacua `v`,
/// then the pump input and the pump spurious-loss vacua.
pub const U_P_MINUS: usize = 0;
pub const U_Q_MINUS: usize = 1;
pub const U_P_PLUS: usize = 2;
pub const U_Q_PLUS: usize = 3;
pub const V_P_MINUS: usize = 4;
pub const V_Q_MINUS: usize = 5;
pub const V_P_PLUS: usize = 6;
pub const V_Q_PLUS: usize = 7;
pub const P0_IN: usize = 8;
pub const Q0_IN: usize = 9;
pub const V_P0: usize = 10;
pub const V_Q0: usize = 11;

pub const N_STATE: usize = 6;
pub const N_INPUT: usize = 12;

/// State indices of the signal-idler subtraction block and of the coupled
/// sum/pump block.
pub const SUBTRACTION_BLOCK: [usize; 2] = [P_MINUS, Q_MINUS];
pub const SUM_PUMP_BLOCK: [usize; 4] = [P_PLUS, Q_PLUS, P0, Q0];

/// Coefficients of `tau d/dt dx = M dx + N dxi` for the EPR and pump
/// quadrature fluctuations.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftMatrix {
    pub drift: SMatrix<f64, N_STATE, N_STATE>,
    pub input_couplings: SMatrix<f64, N_STATE, N_INPUT>,
    /// Output-mirror amplitude couplings `sqrt(2 gamma)` / `sqrt(2 gamma0)`.
    pub output_couplings: SVector<f64, N_STATE>,
    /// Input channel reflected directly into each output.
    pub direct_inputs: [usize; N_STATE],
}

pub fn build_drift_matrix(params: &PhysicalParams, ss: &SteadyState) -> DriftMatrix {
    let gt = params.gamma_total;
    let gt0 = params.gamma_total0;
    let d = params.delta;
    let d0 = params.delta0;
    let b = std::f64::consts::SQRT_2 * gt * ss.beta;

    let mut m = SMatrix::<f64, N_STATE, N_STATE>::zeros();
    m[(P_MINUS, P_MINUS)] = -2.0 * gt;
    m[(Q_MINUS, P_MINUS)] = 2.0 * d * gt;

    m[(P_PLUS, Q_PLUS)] = -2.0 * d * gt;
    m[(P_PLUS, P0)] = b;
    m[(P_PLUS, Q0)] = d * b;

    m[(Q_PLUS, Q_PLUS)] = -2.0 * gt;
    m[(Q_PLUS, P0)] = -d * b;
    m[(Q_PLUS, Q0)] = b;

    m[(P0, P_PLUS)] = -b;
    m[(P0, Q_PLUS)] = d * b;
    m[(P0, P0)] = -gt0;
    m[(P0, Q0)] = -d0 * gt0;

    m[(Q0, P_PLUS)] = -d * b;
    m[(Q0, Q_PLUS)] = -b;
    m[(Q0, P0)] = d0 * gt0;
    m[(Q0, Q0)] = -gt0;

    let mirror = (2.0 * params.gamma).sqrt();
    let spurious = (2.0 * params.spurious_loss()).sqrt();
    let mirror0 = (2.0 * params.gamma0).sqrt();
    let spurious0 = (2.0 * params.spurious_loss0()).sqrt();

    let mut n = SMatrix::<f64, N_STATE, N_INPUT>::zeros();
    for (row, u, v) in [
        (P_MINUS, U_P_MINUS, V_P_MINUS),
        (Q_MINUS, U_Q_MINUS, V_Q_MINUS),
        (P_PLUS, U_P_PLUS, V_P_PLUS),
        (Q_PLUS, U_Q_PLUS, V_Q_PLUS),
    ] {
        n[(row, u)] = mirror;
        n[(row, v)] = spurious;
    }
    n[(P0, P0_IN)] = mirror0;
    n[(P0, V_P0)] = spurious0;
    n[(Q0, Q0_IN)] = mirror0;
    n[(Q0, V_Q0)] = spurious0;

    DriftMatrix {
        drift: m,
        input_couplings: n,
        output_couplings: SVector::from([mirror, mirror, mirror, mirror, mirror0, mirror0]),
        direct_inputs: [U_P_MINUS, U_Q_MINUS, U_P_PLUS, U_Q_PLUS, P0_IN, Q0_IN],
    }
}

impl DriftMatrix {
    /// True when no coefficient links the subtraction block to the rest.
    pub fn is_block_decoupled(&self) -> bool {
        SUBTRACTION_BLOCK.iter().all(|&r| {
            SUM_PUMP_BLOCK
                .iter()
                .all(|&c| self.drift[(r, c)] == 0.0 && self.drift[(c, r)] == 0.0)
        })
    }

    pub fn is_finite(&self) -> bool {
        self.drift.iter().all(|v| v.is_finite())
            && self.input_couplings.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SteadyState;

    fn params(delta: f64, delta0: f64) -> PhysicalParams {
        PhysicalParams {
            gamma: 0.02,
            gamma0: 0.035,
            gamma_total: 0.025,
            gamma_total0: 0.04,
            delta,
            delta0,
            tau: 1e-9,
            chi: 1.0,
            sigma: 2.0,
        }
    }

    #[test]
    fn named_entries() {
        let p = params(0.3, 0.2);
        let ss = p.operating_point().unwrap();
        let m = build_drift_matrix(&p, &ss);
        assert_eq!(m.drift[(P_MINUS, P_MINUS)], -2.0 * 0.025);
        assert_eq!(m.drift[(P_PLUS, Q_PLUS)], -2.0 * 0.3 * 0.025);
        assert_eq!(m.drift[(P0, P_PLUS)], -(2f64.sqrt()) * 0.025 * ss.beta);
        assert!(m.is_block_decoupled());
        assert!(m.is_finite());
    }

    #[test]
    fn resonant_phase_difference_is_pure_noise() {
        let p = params(0.0, 0.0);
        let m = build_drift_matrix(&p, &p.operating_point().unwrap());
        assert!(m.drift.row(Q_MINUS).iter().all(|&v| v == 0.0));
        assert!(m.input_couplings[(Q_MINUS, U_Q_MINUS)] > 0.0);
    }

    #[test]
    fn subtraction_rows_ignore_pump() {
        for d in [0.0, 0.5, -1.0] {
            let p = params(d, 0.4).with_sigma(4.0);
            let m = build_drift_matrix(&p, &p.operating_point().unwrap());
            for r in SUBTRACTION_BLOCK {
                for c in SUM_PUMP_BLOCK {
                    assert_eq!(m.drift[(r, c)], 0.0);
                }
                assert_eq!(m.input_couplings[(r, P0_IN)], 0.0);
                assert_eq!(m.input_couplings[(r, Q0_IN)], 0.0);
            }
        }
    }

    #[test]
    fn threshold_pump_rows_are_an_empty_cavity() {
        let p = params(0.0, 0.3).with_sigma(1.0);
        let ss = SteadyState::resonant(1.0, 1.6);
        assert_eq!(ss.beta, 0.0);
        let m = build_drift_matrix(&p, &ss);
        for r in [P0, Q0] {
            for c in [P_PLUS, Q_PLUS] {
                assert_eq!(m.drift[(r, c)], 0.0);
                assert_eq!(m.drift[(c, r)], 0.0);
            }
        }
        assert_eq!(m.drift[(P0, P0)], -0.04);
        assert_eq!(m.drift[(P0, Q0)], -0.3 * 0.04);
    }
}
