use num_complex::Complex64;

use crate::model::{DimensionlessParams, SteadyState};

/// Doubled phase-space point of the scaled positive-P variables.
///
/// Each quadrature is complex: the physical moments are ensemble averages
/// whose imaginary parts vanish only statistically.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseSpaceState {
    pub x0: Complex64,
    pub y0: Complex64,
    pub x_plus: Complex64,
    pub y_plus: Complex64,
    pub x_minus: Complex64,
    pub y_minus: Complex64,
}

pub const COMPONENT_NAMES: [&str; 6] = ["x0", "y0", "x_plus", "y_plus", "x_minus", "y_minus"];

impl PhaseSpaceState {
    pub fn from_array(a: [Complex64; 6]) -> Self {
        PhaseSpaceState {
            x0: a[0],
            y0: a[1],
            x_plus: a[2],
            y_plus: a[3],
            x_minus: a[4],
            y_minus: a[5],
        }
    }

    pub fn to_array(&self) -> [Complex64; 6] {
        [
            self.x0,
            self.y0,
            self.x_plus,
            self.y_plus,
            self.x_minus,
            self.y_minus,
        ]
    }

    pub fn from_real(a: [f64; 6]) -> Self {
        Self::from_array(a.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn from_steady_state(ss: &SteadyState) -> Self {
        Self::from_real(ss.as_array())
    }

    /// The symmetry `x- <-> y+`, `x+ <-> -y-` of the stochastic equations.
    pub fn exchange_symmetry(&self) -> Self {
        PhaseSpaceState {
            x0: self.x0,
            y0: self.y0,
            x_plus: -self.y_minus,
            y_plus: self.x_minus,
            x_minus: self.y_plus,
            y_minus: -self.x_plus,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest real or imaginary magnitude over all components.
    pub fn max_abs(&self) -> f64 {
        self.to_array()
            .iter()
            .fold(0.0, |m, c| m.max(c.re.abs()).max(c.im.abs()))
    }
}

/// Deterministic part of the scaled positive-P equations at triple resonance.
///
/// Terms are grouped so that [`PhaseSpaceState::exchange_symmetry`] commutes
/// with this function bit for bit.
pub fn drift(s: &PhaseSpaceState, dp: &DimensionlessParams) -> PhaseSpaceState {
    let gr = dp.gamma_r;
    let drive = 2.0 * dp.sigma.sqrt();
    let PhaseSpaceState {
        x0,
        y0,
        x_plus: xp,
        y_plus: yp,
        x_minus: xm,
        y_minus: ym,
    } = *s;
    let quad = (xp * xp + ym * ym) - (xm * xm + yp * yp);
    PhaseSpaceState {
        x0: -(x0 - drive + quad * 0.5) * gr,
        y0: -(y0 + (xp * yp - xm * ym)) * gr,
        x_plus: -xp + (x0 * xp + y0 * yp) * 0.5,
        y_plus: -yp + (y0 * xp - x0 * yp) * 0.5,
        x_minus: -xm - (x0 * xm + y0 * ym) * 0.5,
        y_minus: -ym + (x0 * ym - y0 * xm) * 0.5,
    }
}

/// Jacobian of [`drift`], rows and columns in `to_array` order.
pub fn drift_jacobian(s: &PhaseSpaceState, dp: &DimensionlessParams) -> [[Complex64; 6]; 6] {
    let gr = dp.gamma_r;
    let [x0, y0, xp, yp, xm, ym] = s.to_array();
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    [
        [-one * gr, z, -xp * gr, yp * gr, xm * gr, -ym * gr],
        [z, -one * gr, -yp * gr, -xp * gr, ym * gr, xm * gr],
        [xp * 0.5, yp * 0.5, -one + x0 * 0.5, y0 * 0.5, z, z],
        [-yp * 0.5, xp * 0.5, y0 * 0.5, -one - x0 * 0.5, z, z],
        [-xm * 0.5, -ym * 0.5, z, z, -one - x0 * 0.5, -y0 * 0.5],
        [ym * 0.5, -xm * 0.5, z, z, -y0 * 0.5, -one + x0 * 0.5],
    ]
}
