//! Closed-form squeezing spectra of the ideal (resonant, lossless,
//! shot-noise-pumped) OPO and the inseparability sum.
//!
//! Frequencies are `Omega' = Omega / gamma_d`, the analysis frequency in units
//! of the cavity bandwidth.

/// Amplitude-difference noise `S_p-(Omega') = 1 - 1 / (Omega'^2 + 1)`.
pub fn analytic_sp_minus(omega_prime: f64) -> f64 {
    1.0 - 1.0 / (omega_prime * omega_prime + 1.0)
}

/// Phase-sum noise `S_q+(Omega')` for pump ratio `sigma` and `gamma_r`.
pub fn analytic_sq_plus(omega_prime: f64, sigma: f64, gamma_r: f64) -> f64 {
    if !omega_prime.is_finite() {
        return 1.0;
    }
    let w2 = 4.0 * omega_prime * omega_prime;
    let gr2 = gamma_r * gamma_r;
    let excess = sigma.sqrt() - 1.0;
    let num = (w2 + gr2).powi(2);
    let a = w2 + gr2 - 2.0 * gamma_r * excess;
    let b = w2 + gr2 * sigma.sqrt();
    1.0 - num / (omega_prime * omega_prime * a * a + b * b)
}

/// Separability bound of the EPR variance sum.
pub const SEPARABILITY_BOUND: f64 = 2.0;

/// Result of the inseparability test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuanOutcome {
    pub value: f64,
    pub entangled: bool,
}

/// Sum of the two EPR variances, with quadratures normalized so that
/// `[p, q] = 2i` and vacuum noise is 1. Values below 2 certify entanglement.
pub fn duan_sum(first: f64, second: f64) -> DuanOutcome {
    let value = first + second;
    DuanOutcome {
        value,
        entangled: value < SEPARABILITY_BOUND,
    }
}
