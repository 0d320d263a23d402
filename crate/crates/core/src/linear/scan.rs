use std::io::{self, Write};

use rayon::prelude::*;

use super::{check_efficiency, output_spectra, DuanOutcome, PumpNoiseSpec, QuadratureSpectra};
use crate::csvout;
use crate::error::{Error, Result};
use crate::model::PhysicalParams;

/// Largest sigma spacing used when locating the SQL crossing of `S_q+`.
pub const CROSSING_RESOLUTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub sigma: f64,
    pub spectra: QuadratureSpectra,
    pub duan: DuanOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
    /// Sigma where `S_q+` first crosses the shot-noise level.
    pub crossing: Option<f64>,
}

pub const SCAN_HEADER: [&str; 9] = [
    "sigma", "S_pminus", "S_qminus", "S_pplus", "S_qplus", "S_p0ref", "S_q0ref", "duan_sum",
    "entangled",
];

impl ScanTable {
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| {
                let s = &r.spectra;
                vec![
                    r.sigma,
                    s.s_p_minus,
                    s.s_q_minus,
                    s.s_p_plus,
                    s.s_q_plus,
                    s.s_p0_ref,
                    s.s_q0_ref,
                    r.duan.value,
                    if r.duan.entangled { 1.0 } else { 0.0 },
                ]
            })
            .collect();
        csvout::write_table(w, &SCAN_HEADER, &rows)
    }
}

/// Spectra over a sorted sigma grid at fixed analysis frequency `omega`,
/// after mixing with detector efficiency `efficiency`.
pub fn scan_sigma(
    template: &PhysicalParams,
    pump: &PumpNoiseSpec,
    sigma_grid: &[f64],
    omega: f64,
    efficiency: f64,
) -> Result<ScanTable> {
    if sigma_grid.is_empty() {
        return Err(Error::invalid("sigma_grid", "must not be empty"));
    }
    if sigma_grid.iter().any(|s| !(*s >= 1.0) || !s.is_finite()) {
        return Err(Error::invalid("sigma_grid", "all values must be >= 1"));
    }
    if sigma_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("sigma_grid", "must be strictly increasing"));
    }
    check_efficiency(efficiency)?;

    let eval = |sigma: f64| -> Result<ScanRow> {
        let spectra = output_spectra(&template.with_sigma(sigma), pump, omega)?
            .with_detection_efficiency(efficiency);
        Ok(ScanRow {
            sigma,
            spectra,
            duan: spectra.duan(),
        })
    };
    let rows: Vec<ScanRow> = sigma_grid
        .par_iter()
        .map(|&s| eval(s))
        .collect::<Result<_>>()?;

    let mut crossing = None;
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if !crosses(a, b) {
            continue;
        }
        crossing = Some(if b.sigma - a.sigma <= CROSSING_RESOLUTION {
            interpolate(a, b)
        } else {
            refine(a, b, &eval)?
        });
        break;
    }
    Ok(ScanTable { rows, crossing })
}

fn crosses(a: &ScanRow, b: &ScanRow) -> bool {
    (a.spectra.s_q_plus - 1.0).signum() != (b.spectra.s_q_plus - 1.0).signum()
}

fn interpolate(a: &ScanRow, b: &ScanRow) -> f64 {
    let fa = a.spectra.s_q_plus - 1.0;
    let fb = b.spectra.s_q_plus - 1.0;
    a.sigma + (b.sigma - a.sigma) * fa / (fa - fb)
}

/// Re-samples a coarse bracketing interval at the crossing resolution.
fn refine(a: &ScanRow, b: &ScanRow, eval: &impl Fn(f64) -> Result<ScanRow>) -> Result<f64> {
    let n = ((b.sigma - a.sigma) / CROSSING_RESOLUTION).ceil() as usize;
    let mut prev = *a;
    for k in 1..=n {
        let next = if k == n {
            *b
        } else {
            eval(a.sigma + (b.sigma - a.sigma) * k as f64 / n as f64)?
        };
        if crosses(&prev, &next) {
            return Ok(interpolate(&prev, &next));
        }
        prev = next;
    }
    Ok(interpolate(a, b))
}
