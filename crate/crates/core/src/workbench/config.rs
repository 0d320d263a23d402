//! TOML run configuration.
//!
//! ```toml
//! out_dir = "out/scan"        # optional, --out wins
//! seed = 7                    # optional, --seed wins
//!
//! [physical]                  # or [dimensionless], never both
//! gamma = 0.02
//! gamma0 = 0.035
//! gamma_total = 0.02          # default gamma
//! gamma_total0 = 0.035        # default gamma0
//! delta = 0.0
//! delta0 = 0.0
//! tau = 1e-9
//! chi = 1.0
//! sigma = 1.5                 # default 1
//!
//! [dimensionless]
//! g = 0.01
//! gamma_r = 0.25
//! sigma = 2.0
//! gamma_d = 1.0               # default 1
//!
//! [pump_noise]                # default shot noise
//! s_p0 = 1.5
//! s_q0 = 5.5
//!
//! [scan]
//! sigma = [1.0, 1.1]          # or sigma_min / sigma_max / sigma_step
//! omega = 0.25                # Omega' in units of gamma_d
//! efficiency = 1.0
//!
//! [ensemble]
//! dt = 1e-3
//! duration = 220.0            # transient included
//! transient = 20.0
//! n_traj = 2000
//! sample_every = 10
//! scheme = "semi-implicit-midpoint"
//!
//! [compare]
//! max_frequency = 5.0
//!
//! [cavity]
//! bandwidth_hz = 14e6
//! analysis_frequency_hz = 27e6
//! mirror_loss = 0.0
//! detuning_min = -8.0         # or detuning_grid = [...]
//! detuning_max = 8.0
//! detuning_step = 0.02
//! s_p = 0.50                  # omit both to take S_p-, S_q+ from the linear model
//! s_q = 0.73
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cavity::AnalysisCavitySpec;
use crate::linear::{check_efficiency, PumpNoiseSpec};
use crate::model::{derive_dimensionless, DimensionlessParams, PhysicalParams};
use crate::sde::{EnsembleConfig, Scheme};
use crate::Error;

/// A configuration problem, with the 1-based line it refers to when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub physical: Option<PhysicalSection>,
    pub dimensionless: Option<DimensionlessSection>,
    pub pump_noise: Option<PumpNoiseSpec>,
    pub scan: Option<ScanSection>,
    pub ensemble: Option<EnsembleSection>,
    pub compare: Option<CompareSection>,
    pub cavity: Option<CavitySection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSection {
    pub gamma: f64,
    pub gamma0: f64,
    pub gamma_total: Option<f64>,
    pub gamma_total0: Option<f64>,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub delta0: f64,
    pub tau: f64,
    pub chi: f64,
    #[serde(default = "one")]
    pub sigma: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionlessSection {
    pub g: f64,
    pub gamma_r: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "one")]
    pub gamma_d: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub sigma: Option<Vec<f64>>,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub sigma_step: Option<f64>,
    pub omega: f64,
    #[serde(default = "one")]
    pub efficiency: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub dt: Option<f64>,
    pub duration: f64,
    #[serde(default)]
    pub transient: f64,
    pub n_traj: Option<usize>,
    pub sample_every: Option<usize>,
    #[serde(default)]
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    #[serde(default = "default_max_frequency")]
    pub max_frequency: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub bandwidth_hz: f64,
    pub analysis_frequency_hz: f64,
    #[serde(default)]
    pub mirror_loss: f64,
    pub detuning_grid: Option<Vec<f64>>,
    pub detuning_min: Option<f64>,
    pub detuning_max: Option<f64>,
    pub detuning_step: Option<f64>,
    pub s_p: Option<f64>,
    pub s_q: Option<f64>,
    #[serde(default)]
    pub correlation: f64,
}

fn one() -> f64 {
    1.0
}

fn default_max_frequency() -> f64 {
    5.0
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub traj: Option<usize>,
    pub dt: Option<f64>,
}

/// Where the spectra fed to the analysis cavity come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CavitySource {
    Literal,
    LinearModel,
}

#[derive(Debug, Clone, Serialize)]
pub struct CavityPlan {
    pub spec: AnalysisCavitySpec,
    pub s_p: f64,
    pub s_q: f64,
    pub correlation: f64,
    pub source: CavitySource,
}

/// Fully validated run description.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    pub physical: PhysicalParams,
    pub dimensionless: DimensionlessParams,
    /// Whether the model came from a `[physical]` block.
    pub from_physical: bool,
    pub pump_noise: PumpNoiseSpec,
    pub sigma_grid: Option<Vec<f64>>,
    pub omega: Option<f64>,
    pub efficiency: f64,
    pub ensemble: Option<EnsembleConfig>,
    pub max_frequency: f64,
    pub cavity: Option<CavityPlan>,
}

/// Locates the definition of `key` inside `[section]` (or at top level).
fn find_line(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut section_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            if Some(name.trim()) == section {
                section_line = Some(i + 1);
            }
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if k.trim() == key {
                return Some(i + 1);
            }
        }
    }
    section_line
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, section: Option<&str>, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: find_line(self.text, section, key),
            message: message.into(),
        }
    }

    /// Attributes a module validation error to its key in `section`.
    fn module(&self, section: Option<&str>, e: Error) -> ConfigError {
        let key = match &e {
            Error::InvalidParameter { name, .. } => *name,
            _ => "",
        };
        let scope = section.map(|s| format!("[{s}] ")).unwrap_or_default();
        self.err(section, key, format!("{scope}{e}"))
    }
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().to_string(),
    })
}

fn range_grid(
    ctx: &Ctx,
    section: &str,
    list: &Option<Vec<f64>>,
    min: Option<f64>,
    max: Option<f64>,
    step: Option<f64>,
    what: &str,
) -> Result<Vec<f64>, ConfigError> {
    match (list, min, max, step) {
        (Some(v), None, None, None) => Ok(v.clone()),
        (None, Some(lo), Some(hi), Some(h)) => {
            if !(h > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(ctx.err(
                    Some(section),
                    &format!("{what}_step"),
                    format!("[{section}] {what} range needs min <= max and step > 0"),
                ));
            }
            let n = ((hi - lo) / h + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| lo + h * k as f64).collect())
        }
        _ => Err(ctx.err(
            Some(section),
            what,
            format!("[{section}] give either `{what}` as a list or all of `{what}_min`, `{what}_max`, `{what}_step`"),
        )),
    }
}

/// Validates every section present and applies the overrides.
pub fn resolve(cfg: &RunConfig, text: &str, ov: &Overrides) -> Result<Resolved, ConfigError> {
    let ctx = Ctx { text };
    let (physical, dimensionless, from_physical) = match (&cfg.physical, &cfg.dimensionless) {
        (Some(p), None) => {
            let phys = PhysicalParams {
                gamma: p.gamma,
                gamma0: p.gamma0,
                gamma_total: p.gamma_total.unwrap_or(p.gamma),
                gamma_total0: p.gamma_total0.unwrap_or(p.gamma0),
                delta: p.delta,
                delta0: p.delta0,
                tau: p.tau,
                chi: p.chi,
                sigma: p.sigma,
            };
            phys.validate().map_err(|e| ctx.module(Some("physical"), e))?;
            let dp = derive_dimensionless(&phys).map_err(|e| ctx.module(Some("physical"), e))?;
            (phys, dp, true)
        }
        (None, Some(d)) => {
            let dp = DimensionlessParams {
                g: d.g,
                gamma_r: d.gamma_r,
                sigma: d.sigma,
                gamma_d: d.gamma_d,
            };
            dp.validate().map_err(|e| ctx.module(Some("dimensionless"), e))?;
            (PhysicalParams::nominal_from(&dp), dp, false)
        }
        (Some(_), Some(_)) => {
            return Err(ctx.err(
                Some("dimensionless"),
                "",
                "give exactly one of [physical] and [dimensionless], not both",
            ))
        }
        (None, None) => {
            return Err(ConfigError {
                line: None,
                message: "missing model block: give exactly one of [physical] and [dimensionless]".into(),
            })
        }
    };

    let pump_noise = cfg.pump_noise.unwrap_or_default();
    pump_noise.validate().map_err(|e| ctx.module(Some("pump_noise"), e))?;

    let (sigma_grid, omega, efficiency) = match &cfg.scan {
        Some(s) => {
            let grid = range_grid(&ctx, "scan", &s.sigma, s.sigma_min, s.sigma_max, s.sigma_step, "sigma")?;
            if grid.is_empty() {
                return Err(ctx.err(Some("scan"), "sigma", "[scan] sigma grid must not be empty"));
            }
            if grid.iter().any(|v| !(*v >= 1.0) || !v.is_finite()) {
                let key = if s.sigma.is_some() { "sigma" } else { "sigma_min" };
                return Err(ctx.err(Some("scan"), key, "[scan] sigma values must be >= 1"));
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ctx.err(Some("scan"), "sigma", "[scan] sigma grid must be strictly increasing"));
            }
            if !(s.omega >= 0.0) || !s.omega.is_finite() {
                return Err(ctx.err(Some("scan"), "omega", "[scan] omega must be finite and >= 0"));
            }
            check_efficiency(s.efficiency).map_err(|e| ctx.module(Some("scan"), e))?;
            (Some(grid), Some(s.omega), s.efficiency)
        }
        None => (None, None, 1.0),
    };

    let seed = ov.seed.or(cfg.seed).unwrap_or(0);
    let ensemble = match &cfg.ensemble {
        Some(e) => {
            if physical.delta != 0.0 || physical.delta0 != 0.0 {
                return Err(ctx.err(
                    Some("physical"),
                    "delta",
                    "stochastic runs integrate the resonant equations: delta and delta0 must be 0",
                ));
            }
            if physical.spurious_loss() != 0.0 || physical.spurious_loss0() != 0.0 {
                return Err(ctx.err(
                    Some("physical"),
                    "gamma_total",
                    "stochastic runs integrate the lossless equations: gamma_total must equal gamma",
                ));
            }
            let c = EnsembleConfig {
                dt: ov.dt.or(e.dt).unwrap_or(1e-3),
                duration: e.duration,
                transient: e.transient,
                n_traj: ov.traj.or(e.n_traj).unwrap_or(2000),
                seed,
                g: dimensionless.g,
                gamma_r: dimensionless.gamma_r,
                sigma: dimensionless.sigma,
                sample_every: e.sample_every.unwrap_or(1),
                scheme: e.scheme,
            };
            c.validate().map_err(|e| ctx.module(Some("ensemble"), e))?;
            Some(c)
        }
        None => None,
    };

    let max_frequency = cfg.compare.as_ref().map_or(default_max_frequency(), |c| c.max_frequency);
    if !(max_frequency > 0.0) || !max_frequency.is_finite() {
        return Err(ctx.err(Some("compare"), "max_frequency", "[compare] max_frequency must be positive"));
    }

    let cavity = match &cfg.cavity {
        Some(c) => {
            let grid = range_grid(
                &ctx,
                "cavity",
                &c.detuning_grid,
                c.detuning_min,
                c.detuning_max,
                c.detuning_step,
                "detuning",
            )?;
            if grid.is_empty() {
                return Err(ctx.err(Some("cavity"), "detuning_grid", "[cavity] detuning grid must not be empty"));
            }
            let spec = AnalysisCavitySpec {
                bandwidth_hz: c.bandwidth_hz,
                detuning_grid: grid,
                analysis_frequency_hz: c.analysis_frequency_hz,
                mirror_loss: c.mirror_loss,
            };
            spec.validate().map_err(|e| ctx.module(Some("cavity"), e))?;
            let (s_p, s_q, source) = match (c.s_p, c.s_q) {
                (Some(p), Some(q)) => (p, q, CavitySource::Literal),
                (None, None) => {
                    let omega = 2.0 * std::f64::consts::PI * c.analysis_frequency_hz / dimensionless.gamma_d;
                    let s = crate::linear::output_spectra(&physical, &pump_noise, omega)
                        .map_err(|e| ctx.module(Some("physical"), e))?;
                    (s.s_p_minus, s.s_q_plus, CavitySource::LinearModel)
                }
                _ => {
                    return Err(ctx.err(Some("cavity"), "s_p", "[cavity] give both s_p and s_q, or neither"));
                }
            };
            for (k, v) in [("s_p", s_p), ("s_q", s_q)] {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(ctx.err(Some("cavity"), k, format!("[cavity] {k} must be >= 0")));
                }
            }
            if !c.correlation.is_finite() || c.correlation.abs() > (s_p * s_q).sqrt() {
                return Err(ctx.err(
                    Some("cavity"),
                    "correlation",
                    "[cavity] correlation must satisfy |c| <= sqrt(s_p s_q)",
                ));
            }
            Some(CavityPlan {
                spec,
                s_p,
                s_q,
                correlation: c.correlation,
                source,
            })
        }
        None => None,
    };

    Ok(Resolved {
        out_dir: ov.out.clone().or_else(|| cfg.out_dir.clone()),
        physical,
        dimensionless,
        from_physical,
        pump_noise,
        sigma_grid,
        omega,
        efficiency,
        ensemble,
        max_frequency,
        cavity,
    })
}

pub fn load(text: &str, ov: &Overrides) -> Result<Resolved, ConfigError> {
    resolve(&parse(text)?, text, ov)
}
