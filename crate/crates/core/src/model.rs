//! Physical and dimensionless OPO parameters and the classical operating point.
//!
//! The scaled quadratures follow the positive-P convention: the pump pair is
//! `x0 = g sqrt(2 gamma_r) p0`, `y0 = g sqrt(2 gamma_r) q0`, and the signal/idler
//! EPR pairs are `x± = g p±`, `y± = g q±`. Time is measured in units of the
//! signal/idler amplitude decay, so the pump amplitude decays at `gamma_r`.
//!
//! `sigma` is always the pump power relative to the threshold of the
//! *resonant* cavity; with detunings the oscillation threshold rises to
//! `(1 + delta^2)(1 + delta0^2)`.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cavity parameters in laboratory form (per roundtrip).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Half transmission of the output mirror for signal and idler.
    pub gamma: f64,
    /// Half transmission of the pump coupling mirror.
    pub gamma0: f64,
    /// Total signal/idler intracavity loss `gamma'`.
    pub gamma_total: f64,
    /// Total pump intracavity loss `gamma'_0`.
    pub gamma_total0: f64,
    /// Signal/idler detuning in units of `gamma'`.
    pub delta: f64,
    /// Pump detuning in units of `gamma'_0`.
    pub delta0: f64,
    /// Roundtrip time in seconds.
    pub tau: f64,
    /// Effective second-order nonlinearity.
    pub chi: f64,
    /// Pump power relative to threshold.
    pub sigma: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        positive("gamma", self.gamma)?;
        positive("gamma0", self.gamma0)?;
        positive("tau", self.tau)?;
        positive("chi", self.chi)?;
        positive("sigma", self.sigma)?;
        finite("delta", self.delta)?;
        finite("delta0", self.delta0)?;
        if !(self.gamma_total >= self.gamma) || !self.gamma_total.is_finite() {
            return Err(Error::invalid(
                "gamma_total",
                format!("must be >= gamma ({}), got {}", self.gamma, self.gamma_total),
            ));
        }
        if !(self.gamma_total0 >= self.gamma0) || !self.gamma_total0.is_finite() {
            return Err(Error::invalid(
                "gamma_total0",
                format!(
                    "must be >= gamma0 ({}), got {}",
                    self.gamma0, self.gamma_total0
                ),
            ));
        }
        Ok(())
    }

    /// Spurious signal/idler loss `mu = gamma' - gamma`.
    pub fn spurious_loss(&self) -> f64 {
        self.gamma_total - self.gamma
    }

    /// Spurious pump loss `mu0 = gamma'_0 - gamma_0`.
    pub fn spurious_loss0(&self) -> f64 {
        self.gamma_total0 - self.gamma0
    }

    /// Cavity damping rate `2 gamma / tau` in s^-1.
    pub fn damping_rate(&self) -> f64 {
        2.0 * self.gamma / self.tau
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// Classical operating point including spurious losses.
    ///
    /// The mean fields are set by the total damping, so the pump-to-signal
    /// ratio entering the steady state is `gamma'_0 / gamma'`.
    pub fn operating_point(&self) -> Result<SteadyState> {
        self.validate()?;
        let dp = DimensionlessParams {
            g: 1.0,
            gamma_r: self.gamma_total0 / self.gamma_total,
            sigma: self.sigma,
            gamma_d: self.damping_rate(),
        };
        steady_state(&dp, self.delta, self.delta0)
    }

    /// Lossless, resonant physical parameters reproducing `dp`.
    ///
    /// Only ratios matter for the spectra, so the output-mirror value is an
    /// arbitrary nominal `gamma = 0.01`.
    pub fn nominal_from(dp: &DimensionlessParams) -> Self {
        let gamma = 0.01;
        let gamma0 = dp.gamma_r * gamma;
        PhysicalParams {
            gamma,
            gamma0,
            gamma_total: gamma,
            gamma_total0: gamma0,
            delta: 0.0,
            delta0: 0.0,
            tau: 2.0 * gamma / dp.gamma_d,
            chi: dp.chi(),
            sigma: dp.sigma,
        }
    }
}

/// Parameters of the scaled stochastic equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    /// Normalized coupling constant, the perturbation parameter.
    pub g: f64,
    /// `gamma0 / gamma`.
    pub gamma_r: f64,
    pub sigma: f64,
    /// Cavity damping rate `2 gamma / tau` in s^-1.
    pub gamma_d: f64,
}

impl DimensionlessParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g >= 0.0) || !self.g.is_finite() {
            return Err(Error::invalid("g", format!("must be >= 0, got {}", self.g)));
        }
        positive("gamma_r", self.gamma_r)?;
        positive("sigma", self.sigma)?;
        positive("gamma_d", self.gamma_d)?;
        Ok(())
    }

    /// Nonlinearity reconstructed from `g`: `chi = g gamma_d sqrt(2 gamma_r)`.
    pub fn chi(&self) -> f64 {
        self.g * self.gamma_d * (2.0 * self.gamma_r).sqrt()
    }

    /// Pump quadrature scale factor `g sqrt(2 gamma_r)`.
    fn pump_scale(&self) -> f64 {
        self.g * (2.0 * self.gamma_r).sqrt()
    }

    pub fn scale(&self, q: &Quadratures) -> ScaledQuadratures {
        let s0 = self.pump_scale();
        ScaledQuadratures {
            x0: s0 * q.p0,
            y0: s0 * q.q0,
            x_plus: self.g * q.p_plus,
            y_plus: self.g * q.q_plus,
            x_minus: self.g * q.p_minus,
            y_minus: self.g * q.q_minus,
        }
    }

    pub fn unscale(&self, s: &ScaledQuadratures) -> Quadratures {
        let s0 = self.pump_scale();
        Quadratures {
            p0: s.x0 / s0,
            q0: s.y0 / s0,
            p_plus: s.x_plus / self.g,
            q_plus: s.y_plus / self.g,
            p_minus: s.x_minus / self.g,
            q_minus: s.y_minus / self.g,
        }
    }
}

/// Unscaled quadrature amplitudes of pump and EPR combinations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quadratures {
    pub p0: f64,
    pub q0: f64,
    pub p_plus: f64,
    pub q_plus: f64,
    pub p_minus: f64,
    pub q_minus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScaledQuadratures {
    pub x0: f64,
    pub y0: f64,
    pub x_plus: f64,
    pub y_plus: f64,
    pub x_minus: f64,
    pub y_minus: f64,
}

pub fn derive_dimensionless(params: &PhysicalParams) -> Result<DimensionlessParams> {
    positive("tau", params.tau)?;
    positive("gamma", params.gamma)?;
    positive("gamma0", params.gamma0)?;
    let gamma_d = 2.0 * params.gamma / params.tau;
    let gamma_r = params.gamma0 / params.gamma;
    let g = params.chi / (gamma_d * (2.0 * gamma_r).sqrt());
    Ok(DimensionlessParams {
        g,
        gamma_r,
        sigma: params.sigma,
        gamma_d,
    })
}

/// Classical operating point in scaled quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub x0s: f64,
    pub y0s: f64,
    pub x_plus_s: f64,
    pub y_plus_s: f64,
    pub x_minus_s: f64,
    pub y_minus_s: f64,
    /// Ratio of intracavity signal to pump amplitude.
    pub beta: f64,
}

impl SteadyState {
    /// Closed form at triple resonance.
    pub fn resonant(sigma: f64, gamma_r: f64) -> Self {
        let mut ss = SteadyState {
            x0s: 2.0,
            y0s: 0.0,
            x_plus_s: 2.0 * (sigma.sqrt() - 1.0).max(0.0).sqrt(),
            y_plus_s: 0.0,
            x_minus_s: 0.0,
            y_minus_s: 0.0,
            beta: 0.0,
        };
        ss.beta = beta_from(&ss, gamma_r);
        ss
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.x0s,
            self.y0s,
            self.x_plus_s,
            self.y_plus_s,
            self.x_minus_s,
            self.y_minus_s,
        ]
    }
}

/// Which solution to return below the oscillation threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BelowThreshold {
    /// Fail with [`Error::NoOscillation`].
    #[default]
    Reject,
    /// Return the non-oscillating branch.
    Trivial,
}

/// Oscillation threshold in units of the resonant threshold.
pub fn effective_threshold(delta: f64, delta0: f64) -> f64 {
    (1.0 + delta * delta) * (1.0 + delta0 * delta0)
}

/// Drift-norm tolerance of the detuned fixed-point solver.
pub const STEADY_STATE_TOLERANCE: f64 = 1e-12;
const MAX_NEWTON_ITERATIONS: usize = 100;
const CONTINUATION_STEP: f64 = 0.1;

pub fn steady_state(dp: &DimensionlessParams, delta: f64, delta0: f64) -> Result<SteadyState> {
    steady_state_with(dp, delta, delta0, BelowThreshold::Reject)
}

pub fn steady_state_with(
    dp: &DimensionlessParams,
    delta: f64,
    delta0: f64,
    below: BelowThreshold,
) -> Result<SteadyState> {
    positive("sigma", dp.sigma)?;
    positive("gamma_r", dp.gamma_r)?;
    finite("delta", delta)?;
    finite("delta0", delta0)?;

    let threshold = effective_threshold(delta, delta0);
    if dp.sigma < threshold {
        return match below {
            BelowThreshold::Reject => Err(Error::NoOscillation {
                sigma: dp.sigma,
                threshold,
            }),
            BelowThreshold::Trivial => Ok(trivial_branch(dp.sigma, delta0)),
        };
    }
    if delta == 0.0 && delta0 == 0.0 {
        return Ok(SteadyState::resonant(dp.sigma, dp.gamma_r));
    }

    // Continuation from the resonant solution: thresholds grow along the
    // ray, so every intermediate point oscillates.
    let steps = ((delta.abs().max(delta0.abs())) / CONTINUATION_STEP).ceil().max(1.0) as usize;
    let r = SteadyState::resonant(dp.sigma, dp.gamma_r);
    let mut u = Vector4::new(r.x0s, r.y0s, r.x_plus_s, r.y_plus_s);
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        u = solve_fixed_point(dp.sigma, t * delta, t * delta0, u)?;
    }
    if u[2] < 0.0 {
        u[2] = -u[2];
        u[3] = -u[3];
    }
    let mut ss = SteadyState {
        x0s: u[0],
        y0s: u[1],
        x_plus_s: u[2],
        y_plus_s: u[3],
        x_minus_s: 0.0,
        y_minus_s: 0.0,
        beta: 0.0,
    };
    ss.beta = beta_from(&ss, dp.gamma_r);
    Ok(ss)
}

fn trivial_branch(sigma: f64, delta0: f64) -> SteadyState {
    let n = 1.0 + delta0 * delta0;
    SteadyState {
        x0s: 2.0 * sigma.sqrt() / n,
        y0s: 2.0 * sigma.sqrt() * delta0 / n,
        x_plus_s: 0.0,
        y_plus_s: 0.0,
        x_minus_s: 0.0,
        y_minus_s: 0.0,
        beta: 0.0,
    }
}

/// Mean-field drift with detunings, restricted to the symmetric subspace
/// `x- = y- = 0` (which fixes the signal/idler phase freedom).
///
/// Unknowns are `(x0, y0, x+, y+)`; the pump rows are divided by `gamma_r`.
pub fn classical_residual(sigma: f64, delta: f64, delta0: f64, u: &Vector4<f64>) -> Vector4<f64> {
    let (x0, y0, xp, yp) = (u[0], u[1], u[2], u[3]);
    Vector4::new(
        x0 + delta0 * y0 - 2.0 * sigma.sqrt() + 0.5 * (xp * xp - yp * yp),
        y0 - delta0 * x0 + xp * yp,
        -xp - delta * yp + 0.5 * (x0 * xp + y0 * yp),
        -yp + delta * xp + 0.5 * (y0 * xp - x0 * yp),
    )
}

fn classical_jacobian(delta: f64, delta0: f64, u: &Vector4<f64>) -> Matrix4<f64> {
    let (x0, y0, xp, yp) = (u[0], u[1], u[2], u[3]);
    Matrix4::new(
        1.0, delta0, xp, -yp, //
        -delta0, 1.0, yp, xp, //
        0.5 * xp, 0.5 * yp, -1.0 + 0.5 * x0, -delta + 0.5 * y0, //
        -0.5 * yp, 0.5 * xp, delta + 0.5 * y0, -1.0 - 0.5 * x0,
    )
}

/// Damped Newton iteration on [`classical_residual`] from `start`.
pub fn solve_fixed_point(
    sigma: f64,
    delta: f64,
    delta0: f64,
    start: Vector4<f64>,
) -> Result<Vector4<f64>> {
    let mut u = start;
    let mut res = classical_residual(sigma, delta, delta0, &u);
    let mut norm = res.norm();
    for it in 0..MAX_NEWTON_ITERATIONS {
        if norm < STEADY_STATE_TOLERANCE {
            return Ok(u);
        }
        let step = classical_jacobian(delta, delta0, &u)
            .lu()
            .solve(&res)
            .ok_or(Error::NonConvergence {
                iterations: it,
                residual: norm,
            })?;
        let mut lambda = 1.0;
        loop {
            let trial = u - step * lambda;
            let trial_res = classical_residual(sigma, delta, delta0, &trial);
            let trial_norm = trial_res.norm();
            if trial_norm < norm || lambda < 1e-6 {
                u = trial;
                res = trial_res;
                norm = trial_norm;
                break;
            }
            lambda *= 0.5;
        }
    }
    if norm < STEADY_STATE_TOLERANCE {
        Ok(u)
    } else {
        Err(Error::NonConvergence {
            iterations: MAX_NEWTON_ITERATIONS,
            residual: norm,
        })
    }
}

/// `beta = p / p0` recovered by unscaling the steady state.
pub fn beta_of_sigma(dp: &DimensionlessParams, ss: &SteadyState) -> f64 {
    beta_from(ss, dp.gamma_r)
}

fn beta_from(ss: &SteadyState, gamma_r: f64) -> f64 {
    // p = |p+| / sqrt(2) with p+ = x+ / g, p0 = |x0| / (g sqrt(2 gamma_r)).
    let signal = ss.x_plus_s.hypot(ss.y_plus_s) / std::f64::consts::SQRT_2;
    let pump = ss.x0s.hypot(ss.y0s);
    if pump == 0.0 {
        return 0.0;
    }
    signal * (2.0 * gamma_r).sqrt() / pump
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be > 0, got {v}")))
    }
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dp(sigma: f64, gamma_r: f64) -> DimensionlessParams {
        DimensionlessParams {
            g: 0.01,
            gamma_r,
            sigma,
            gamma_d: 4e7,
        }
    }

    fn lab() -> PhysicalParams {
        PhysicalParams {
            gamma: 0.02,
            gamma0: 0.035,
            gamma_total: 0.02,
            gamma_total0: 0.035,
            delta: 0.0,
            delta0: 0.0,
            tau: 1e-9,
            chi: 1.0,
            sigma: 2.0,
        }
    }

    #[test]
    fn damping_rate_by_hand() {
        let d = derive_dimensionless(&lab()).unwrap();
        assert_relative_eq!(d.gamma_d, 4e7, max_relative = 1e-15);
        assert_relative_eq!(d.gamma_r, 1.75, max_relative = 1e-15);
    }

    #[test]
    fn unit_coupling_and_equal_mirrors() {
        let mut p = lab();
        p.gamma0 = p.gamma;
        p.gamma_total0 = p.gamma;
        p.chi = p.damping_rate() * 2f64.sqrt();
        let d = derive_dimensionless(&p).unwrap();
        assert_eq!(d.gamma_r, 1.0);
        assert_relative_eq!(d.g, 1.0, max_relative = 1e-15);
        assert_relative_eq!(d.chi(), p.chi, max_relative = 1e-15);
    }

    #[test]
    fn rejects_bad_physical_inputs() {
        for f in [
            |p: &mut PhysicalParams| p.tau = 0.0,
            |p: &mut PhysicalParams| p.gamma = -1.0,
            |p: &mut PhysicalParams| p.gamma0 = 0.0,
        ] {
            let mut p = lab();
            f(&mut p);
            assert!(matches!(
                derive_dimensionless(&p),
                Err(Error::InvalidParameter { .. })
            ));
        }
        let mut p = lab();
        p.gamma_total = 0.01;
        assert!(p.validate().is_err());
    }

    #[test]
    fn resonant_closed_form_values() {
        let s1 = steady_state(&dp(1.0, 1.0), 0.0, 0.0).unwrap();
        assert_eq!((s1.x0s, s1.x_plus_s, s1.beta), (2.0, 0.0, 0.0));
        let s4 = steady_state(&dp(4.0, 1.0), 0.0, 0.0).unwrap();
        assert_eq!((s4.x0s, s4.x_plus_s), (2.0, 2.0));
        assert_relative_eq!(s4.beta, 1.0, max_relative = 1e-15);
        let s = steady_state(&dp(2.25, 1.0), 0.0, 0.0).unwrap();
        assert_relative_eq!(s.x_plus_s, 2.0 * 0.5f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn below_threshold_branches() {
        assert!(matches!(
            steady_state(&dp(0.5, 1.0), 0.0, 0.0),
            Err(Error::NoOscillation { .. })
        ));
        let t = steady_state_with(&dp(0.81, 1.0), 0.0, 0.0, BelowThreshold::Trivial).unwrap();
        assert_relative_eq!(t.x0s, 1.8, max_relative = 1e-15);
        assert_eq!(t.x_plus_s, 0.0);
        // detuning raises the threshold
        assert!(matches!(
            steady_state(&dp(1.5, 1.0), 1.0, 0.0),
            Err(Error::NoOscillation { threshold, .. }) if threshold == 2.0
        ));
    }

    /// Independent closed form for the symmetric detuned solution:
    /// n = |A1|^2 = -2(1 - d d0) + 2 sqrt(sigma - (d + d0)^2), |A0| = 2 sqrt(1 + d^2).
    fn detuned_oracle(sigma: f64, d: f64, d0: f64) -> (f64, f64) {
        let n = -2.0 * (1.0 - d * d0) + 2.0 * (sigma - (d + d0).powi(2)).sqrt();
        (2.0 * n, 4.0 * (1.0 + d * d))
    }

    #[test]
    fn detuned_solver_matches_intensity_oracle() {
        for &(sigma, d, d0) in &[(2.0, 0.3, 0.0), (3.0, -0.5, 0.4), (5.0, 1.2, -0.7), (2.5, 0.0, 0.9)] {
            let ss = steady_state(&dp(sigma, 0.5), d, d0).unwrap();
            let (plus2, pump2) = detuned_oracle(sigma, d, d0);
            assert_relative_eq!(ss.x_plus_s.powi(2) + ss.y_plus_s.powi(2), plus2, max_relative = 1e-10);
            assert_relative_eq!(ss.x0s.powi(2) + ss.y0s.powi(2), pump2, max_relative = 1e-10);
            assert!(ss.x_plus_s > 0.0);
            let u = Vector4::new(ss.x0s, ss.y0s, ss.x_plus_s, ss.y_plus_s);
            assert!(classical_residual(sigma, d, d0, &u).norm() < STEADY_STATE_TOLERANCE);
        }
    }

    #[test]
    fn solver_recovers_resonant_closed_form_from_offset_start() {
        for sigma in [1.2, 2.0, 4.0] {
            let r = SteadyState::resonant(sigma, 1.0);
            let start = Vector4::new(r.x0s + 0.2, 0.1, r.x_plus_s + 0.3, -0.1);
            let u = solve_fixed_point(sigma, 0.0, 0.0, start).unwrap();
            assert!((u[0] - r.x0s).abs() < 1e-10);
            assert!((u[2].abs() - r.x_plus_s).abs() < 1e-10);
            assert!(u[1].abs() < 1e-10 && u[3].abs() < 1e-10);
        }
    }

    #[test]
    fn beta_monotone_in_sigma() {
        let mut prev = -1.0;
        for k in 0..=120 {
            let sigma = 1.0 + 0.01 * k as f64;
            let d = dp(sigma, 1.75);
            let b = beta_of_sigma(&d, &steady_state(&d, 0.0, 0.0).unwrap());
            assert!(b > prev || (k == 0 && b == 0.0));
            prev = b;
        }
    }

    #[test]
    fn threshold_rate() {
        // x+ / (sqrt(sigma) - 1)^(1/2) stays exactly 2 approaching threshold
        for eps in [1e-2, 1e-4, 1e-8] {
            let ss = SteadyState::resonant(1.0 + eps, 1.0);
            let rate = ((1.0 + eps).sqrt() - 1.0).sqrt();
            assert_relative_eq!(ss.x_plus_s / rate, 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn operating_point_uses_total_losses() {
        let mut p = lab();
        p.gamma_total = 0.025;
        let ss = p.operating_point().unwrap();
        let expect = ((p.gamma_total0 / p.gamma_total) * (2f64.sqrt() - 1.0)).sqrt();
        assert_relative_eq!(ss.beta, expect, max_relative = 1e-14);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scaling_round_trip(
                g in 1e-4f64..1.0, gr in 0.05f64..20.0,
                v in prop::array::uniform6(-10.0f64..10.0),
            ) {
                let d = DimensionlessParams { g, gamma_r: gr, sigma: 2.0, gamma_d: 1e8 };
                let q = Quadratures { p0: v[0], q0: v[1], p_plus: v[2], q_plus: v[3], p_minus: v[4], q_minus: v[5] };
                let back = d.unscale(&d.scale(&q));
                for (a, b) in [(q.p0, back.p0), (q.q0, back.q0), (q.p_plus, back.p_plus),
                               (q.q_plus, back.q_plus), (q.p_minus, back.p_minus), (q.q_minus, back.q_minus)] {
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                }
            }

            #[test]
            fn chi_round_trip(gamma in 1e-3f64..0.2, ratio in 0.1f64..10.0, tau in 1e-10f64..1e-7, chi in 1e-3f64..1e9) {
                let p = PhysicalParams { gamma, gamma0: ratio * gamma, gamma_total: gamma,
                    gamma_total0: ratio * gamma, delta: 0.0, delta0: 0.0, tau, chi, sigma: 1.5 };
                let d = derive_dimensionless(&p).unwrap();
                prop_assert!((d.chi() - chi).abs() <= 1e-13 * chi);
            }
        }
    }
}
