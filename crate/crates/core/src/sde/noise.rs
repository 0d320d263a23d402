use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::state::PhaseSpaceState;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Real Gaussian increments for one step, each with variance `dt`.
///
/// `xi+` and `xi+^+` are used as they are; `xi-` and `xi-^+` are `i` times the
/// real increments, which gives them the negative autocorrelation
/// `<xi- xi-> = -dt`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseIncrement {
    pub plus: f64,
    pub plus_conj: f64,
    pub minus: f64,
    pub minus_conj: f64,
}

impl NoiseIncrement {
    /// Draws the four increments in a fixed order.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, dt: f64) -> Self {
        let s = dt.sqrt();
        let mut draw = || -> f64 { rng.sample::<f64, _>(StandardNormal) * s };
        NoiseIncrement {
            plus: draw(),
            plus_conj: draw(),
            minus: draw(),
            minus_conj: draw(),
        }
    }

    /// Langevin increments `(xi+, xi+^+, xi-, xi-^+)`.
    pub fn xi(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.plus, 0.0),
            Complex64::new(self.plus_conj, 0.0),
            I * self.minus,
            I * self.minus_conj,
        ]
    }

    pub fn add(&self, other: &NoiseIncrement) -> NoiseIncrement {
        NoiseIncrement {
            plus: self.plus + other.plus,
            plus_conj: self.plus_conj + other.plus_conj,
            minus: self.minus + other.minus,
            minus_conj: self.minus_conj + other.minus_conj,
        }
    }
}

/// Multiplicative noise prefactors `g/sqrt(2) sqrt(x0 ± i y0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCoefficients {
    /// Multiplies `xi` channels: `g/sqrt(2) sqrt(x0 + i y0)`.
    pub direct: Complex64,
    /// Multiplies `xi^+` channels: `g/sqrt(2) sqrt(x0 - i y0)`.
    pub conjugate: Complex64,
}

pub fn noise_amplitudes(state: &PhaseSpaceState, g: f64) -> NoiseCoefficients {
    let k = g / std::f64::consts::SQRT_2;
    let iy = I * state.y0;
    NoiseCoefficients {
        direct: (state.x0 + iy).sqrt() * k,
        conjugate: (state.x0 - iy).sqrt() * k,
    }
}

impl NoiseCoefficients {
    /// Coefficient of each `(xi+, xi+^+, xi-, xi-^+)` channel in each equation,
    /// rows in `PhaseSpaceState::to_array` order.
    pub fn matrix(&self) -> [[Complex64; 4]; 6] {
        let (a, b) = (self.direct, self.conjugate);
        let z = Complex64::new(0.0, 0.0);
        [
            [z; 4],
            [z; 4],
            [a, b, z, z],
            [-I * a, I * b, z, z],
            [z, z, a, b],
            [z, z, -I * a, I * b],
        ]
    }

    /// Stochastic increment of the state for one step.
    pub fn apply(&self, dw: &NoiseIncrement) -> PhaseSpaceState {
        let [xp, xpc, xm, xmc] = dw.xi();
        let (a, b) = (self.direct, self.conjugate);
        let plus_sum = a * xp + b * xpc;
        let plus_diff = a * xp - b * xpc;
        let minus_sum = a * xm + b * xmc;
        let minus_diff = a * xm - b * xmc;
        PhaseSpaceState {
            x0: Complex64::new(0.0, 0.0),
            y0: Complex64::new(0.0, 0.0),
            x_plus: plus_sum,
            y_plus: -I * plus_diff,
            x_minus: minus_sum,
            y_minus: -I * minus_diff,
        }
    }
}
