use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{load, ConfigError, Overrides, Resolved};
use crate::cavity::{detected_noise_correlated, readout_weights, write_sweep_csv, SweepPoint};
use crate::linear::{analytic_sp_minus, analytic_sq_plus, output_spectra, scan_sigma, PumpNoiseSpec};
use crate::model::PhysicalParams;
use crate::sde::{map_ensemble, EnsembleConfig, Mode};
use crate::spectrum::{
    aggregate, compare_estimates, compare_to_curve, half_periodograms, stationarity_from,
    trajectory_periodogram, Agreement, Combination, Periodogram, SpectrumEstimate,
};
use crate::Error;

pub const SUMMARY_FILE: &str = "summary.json";
pub const DEFAULT_OUT_DIR: &str = "out";
/// Detuning (in bandwidths) standing in for "far off resonance".
const OFF_RESONANCE: f64 = 1e6;
const PHASE_READOUT_TOLERANCE: f64 = 0.02;
const AMPLITUDE_READOUT_TOLERANCE: f64 = 1e-6;
const COMPARED: [Combination; 2] = [Combination::PMinus, Combination::QPlus];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    LinearScan,
    StochasticCompare,
    CavitySweep,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::LinearScan => "linear-scan",
            Command::StochasticCompare => "stochastic-compare",
            Command::CavitySweep => "cavity-sweep",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: FailureKind,
    pub message: String,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Validation => 2,
            FailureKind::Numerical => 3,
            FailureKind::Io => 1,
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        CliError {
            kind: FailureKind::Validation,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError {
            kind: FailureKind::Io,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::InvalidParameter { .. }
            | Error::NoOscillation { .. }
            | Error::TooShort { .. }
            | Error::InconsistentLengths { .. }
            | Error::EmptyEnsemble => FailureKind::Validation,
            Error::NonConvergence { .. }
            | Error::SingularResponse { .. }
            | Error::Diverged { .. }
            | Error::NonFinite { .. }
            | Error::DivergenceRate { .. } => FailureKind::Numerical,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

/// Files written by a command and its run summary.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: Option<PathBuf>,
    pub files: Vec<String>,
    pub summary: Value,
}

impl RunReport {
    /// Whether every recorded check holds.
    pub fn all_checks_hold(&self) -> bool {
        self.summary["checks"]
            .as_array()
            .map_or(true, |c| c.iter().all(|x| x["holds"] != Value::Bool(false)))
    }
}

struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    checks: Vec<Value>,
    results: Value,
}

impl Artifacts {
    fn new() -> Self {
        Artifacts {
            files: Vec::new(),
            checks: Vec::new(),
            results: json!({}),
        }
    }

    fn file(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) {
        let mut buf = Vec::new();
        write(&mut buf).expect("writing to memory");
        self.files.push((name.to_string(), buf));
    }

    fn check(&mut self, name: &str, holds: Option<bool>, detail: Value) {
        self.checks.push(json!({ "name": name, "holds": holds, "detail": detail }));
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `command` on configuration text. Everything is validated and
/// computed before the output directory is touched.
pub fn run(command: Command, config_text: &str, ov: &Overrides) -> Result<RunReport, CliError> {
    let resolved = load(config_text, ov)?;
    let art = match command {
        Command::Validate => return Ok(validate_report(&resolved)),
        Command::LinearScan => linear_scan(&resolved)?,
        Command::StochasticCompare => stochastic_compare(&resolved)?,
        Command::CavitySweep => cavity_sweep(&resolved)?,
    };

    let out = resolved.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let outputs: Vec<Value> = art
        .files
        .iter()
        .map(|(name, bytes)| json!({ "file": name, "sha256": sha256_hex(bytes) }))
        .collect();
    let summary = json!({
        "command": command.name(),
        "config": resolved,
        "outputs": outputs,
        "checks": art.checks,
        "results": art.results,
    });

    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut files = Vec::new();
    for (name, bytes) in &art.files {
        let path = out.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        files.push(name.clone());
    }
    let mut text = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    text.push(b'\n');
    let path = out.join(SUMMARY_FILE);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    files.push(SUMMARY_FILE.to_string());
    Ok(RunReport {
        out_dir: Some(out),
        files,
        summary,
    })
}

fn validate_report(r: &Resolved) -> RunReport {
    let runnable: Vec<&str> = [
        (r.sigma_grid.is_some(), Command::LinearScan),
        (r.ensemble.is_some(), Command::StochasticCompare),
        (r.cavity.is_some(), Command::CavitySweep),
    ]
    .iter()
    .filter(|(ok, _)| *ok)
    .map(|(_, c)| c.name())
    .collect();
    RunReport {
        out_dir: None,
        files: Vec::new(),
        summary: json!({ "command": "validate", "config": r, "runnable": runnable }),
    }
}

fn require<T>(v: &Option<T>, section: &str, command: Command) -> Result<(), CliError> {
    if v.is_none() {
        return Err(CliError::validation(format!(
            "{} needs a [{section}] section",
            command.name()
        )));
    }
    Ok(())
}

fn linear_scan(r: &Resolved) -> Result<Artifacts, CliError> {
    require(&r.sigma_grid, "scan", Command::LinearScan)?;
    let grid = r.sigma_grid.as_ref().expect("checked");
    let omega = r.omega.expect("scan omega");
    let table = scan_sigma(&r.physical, &r.pump_noise, grid, omega, r.efficiency)?;

    let mut art = Artifacts::new();
    art.file("scan.csv", |w| table.write_csv(w));
    let sq: Vec<f64> = table.rows.iter().map(|row| row.spectra.s_q_plus).collect();
    let duan_max = table.rows.iter().map(|row| row.duan.value).fold(f64::NEG_INFINITY, f64::max);
    let argmin = (0..sq.len()).min_by(|&a, &b| sq[a].total_cmp(&sq[b])).unwrap_or(0);
    art.check(
        "entangled_at_all_sigma",
        Some(table.rows.iter().all(|row| row.duan.entangled)),
        json!({ "max_duan_sum": duan_max }),
    );
    art.check(
        "s_q_plus_non_decreasing",
        Some(sq.windows(2).all(|w| w[1] >= w[0])),
        Value::Null,
    );
    art.check(
        "s_q_plus_minimal_at_lowest_sigma",
        Some(argmin == 0),
        json!({ "sigma_at_minimum": grid[argmin] }),
    );
    art.check(
        "s_q_plus_crosses_sql",
        Some(table.crossing.is_some()),
        json!({ "sigma": table.crossing }),
    );
    art.results = json!({
        "rows": table.rows.len(),
        "omega": omega,
        "crossing_sigma": table.crossing,
        "min_s_q_plus": sq[argmin],
    });
    Ok(art)
}

struct PerTrajectory {
    full: Vec<Periodogram>,
    first: Vec<Periodogram>,
    second: Vec<Periodogram>,
}

struct ModeSpectra {
    estimates: Vec<SpectrumEstimate>,
    stationarity: Vec<Agreement>,
    failures: usize,
}

fn ensemble_spectra(cfg: &EnsembleConfig, mode: Mode, max_frequency: f64) -> Result<ModeSpectra, CliError> {
    let out = map_ensemble(cfg, mode, |t| {
        let mut per = PerTrajectory {
            full: Vec::new(),
            first: Vec::new(),
            second: Vec::new(),
        };
        for c in COMPARED {
            per.full.push(trajectory_periodogram(&t, c)?);
            let (a, b) = half_periodograms(&t, c)?;
            per.first.push(a);
            per.second.push(b);
        }
        Ok(per)
    })?;
    let mut estimates = Vec::new();
    let mut stationarity = Vec::new();
    for (k, c) in COMPARED.into_iter().enumerate() {
        let pick = |f: fn(&PerTrajectory) -> &Vec<Periodogram>| -> Vec<Periodogram> {
            out.values.iter().map(|p| f(p)[k].clone()).collect()
        };
        let meta = json!({ "mode": mode, "ensemble": cfg, "combination": c });
        let est = aggregate(&pick(|p| &p.full), c, meta)?.normalize(cfg.g).band(max_frequency);
        estimates.push(est);
        stationarity.push(stationarity_from(&pick(|p| &p.first), &pick(|p| &p.second), c)?);
    }
    Ok(ModeSpectra {
        estimates,
        stationarity,
        failures: out.failures.len(),
    })
}

fn mode_label(mode: Mode) -> &'static str {
    match mode {
        Mode::FirstOrder => "first_order",
        Mode::FullNonlinear => "nonlinear",
    }
}

fn agreement_json(a: &Agreement) -> Value {
    json!({ "bins": a.bins, "passing": a.passing, "fraction": a.fraction, "pass": a.pass })
}

fn stochastic_compare(r: &Resolved) -> Result<Artifacts, CliError> {
    require(&r.ensemble, "ensemble", Command::StochasticCompare)?;
    let cfg = r.ensemble.expect("checked");
    if r.pump_noise != PumpNoiseSpec::SHOT_NOISE {
        log::warn!("stochastic runs drive the cavity with a coherent pump; [pump_noise] is ignored");
    }
    let modes = [Mode::FirstOrder, Mode::FullNonlinear];
    let spectra: Vec<ModeSpectra> = modes
        .iter()
        .map(|&m| ensemble_spectra(&cfg, m, r.max_frequency))
        .collect::<Result<_, _>>()?;

    let mut art = Artifacts::new();
    for (mode, s) in modes.iter().zip(&spectra) {
        for est in &s.estimates {
            let name = format!("spectrum_{}_{}.csv", mode_label(*mode), est.combination.label());
            art.file(&name, |w| est.write_csv(w));
        }
    }

    let linear_template = PhysicalParams::nominal_from(&cfg.params());
    let (sigma, gamma_r) = (cfg.sigma, cfg.gamma_r);
    let vacuum_only = cfg.g == 0.0;
    let mut rows: Vec<(String, Combination, Option<Agreement>)> = Vec::new();
    for (k, c) in COMPARED.into_iter().enumerate() {
        let (fo, nl) = (&spectra[0].estimates[k], &spectra[1].estimates[k]);
        rows.push(("first_order_vs_nonlinear".into(), c, Some(compare_estimates(fo, nl)?)));
        let analytic = move |w: f64| match c {
            Combination::PMinus => analytic_sp_minus(w),
            _ => analytic_sq_plus(w, sigma, gamma_r),
        };
        let linear = |w: f64| -> f64 {
            output_spectra(&linear_template, &PumpNoiseSpec::SHOT_NOISE, w)
                .map(|s| match c {
                    Combination::PMinus => s.s_p_minus,
                    _ => s.s_q_plus,
                })
                .unwrap_or(f64::NAN)
        };
        for (mode, est) in modes.iter().zip([fo, nl]) {
            let (a, l) = if vacuum_only {
                (None, None)
            } else {
                (Some(compare_to_curve(est, analytic)), Some(compare_to_curve(est, linear)))
            };
            rows.push((format!("{}_vs_analytic", mode_label(*mode)), c, a));
            rows.push((format!("{}_vs_linear", mode_label(*mode)), c, l));
        }
    }
    if vacuum_only {
        log::warn!("g = 0: spectra are pure vacuum, oracle comparisons skipped");
    }

    art.file("agreement.csv", |w| {
        use std::io::Write;
        writeln!(w, "comparison,combination,bins,passing,fraction,pass")?;
        for (name, c, a) in &rows {
            match a {
                Some(a) => writeln!(
                    w,
                    "{name},{},{},{},{},{}",
                    c.label(),
                    a.bins,
                    a.passing,
                    crate::csvout::sig12(a.fraction),
                    a.pass
                )?,
                None => writeln!(w, "{name},{},,,,skipped", c.label())?,
            }
        }
        Ok(())
    });

    let mut report = serde_json::Map::new();
    for (name, c, a) in &rows {
        report.insert(
            format!("{name}/{}", c.label()),
            a.as_ref().map_or(Value::String("skipped".into()), agreement_json),
        );
    }
    let all_pass = rows.iter().all(|(_, _, a)| a.map_or(true, |a| a.pass));
    art.check("agreement", Some(all_pass), Value::Object(report));

    let mut stat = serde_json::Map::new();
    for (mode, s) in modes.iter().zip(&spectra) {
        for (c, a) in COMPARED.iter().zip(&s.stationarity) {
            stat.insert(format!("{}/{}", mode_label(*mode), c.label()), agreement_json(a));
        }
    }
    let stationary = spectra.iter().all(|s| s.stationarity.iter().all(|a| a.pass));
    art.check("stationary", Some(stationary), Value::Object(stat));

    art.results = json!({
        "diverged": {
            "first_order": spectra[0].failures,
            "nonlinear": spectra[1].failures,
        },
        "n_traj": cfg.n_traj,
        "bins": spectra[0].estimates[0].frequencies.len(),
    });
    Ok(art)
}

fn cavity_sweep(r: &Resolved) -> Result<Artifacts, CliError> {
    require(&r.cavity, "cavity", Command::CavitySweep)?;
    let plan = r.cavity.as_ref().expect("checked");
    let spec = &plan.spec;
    let full = spec.check_regime();
    let eval = |d: f64| detected_noise_correlated(spec, plan.s_p, plan.s_q, plan.correlation, d);
    let sweep: Vec<SweepPoint> = spec
        .detuning_grid
        .iter()
        .map(|&d| SweepPoint {
            detuning: d,
            detected_noise: eval(d),
        })
        .collect();

    let mut art = Artifacts::new();
    art.file("cavity_sweep.csv", |w| write_sweep_csv(w, &sweep));

    let off = eval(OFF_RESONANCE);
    let half: Vec<Value> = [-0.5, 0.5]
        .iter()
        .map(|&d| {
            let w = readout_weights(spec, d);
            json!({ "detuning": d, "detected_noise": eval(d), "phase_weight": w.phase })
        })
        .collect();
    let phase_ok = [-0.5, 0.5]
        .iter()
        .all(|&d| (eval(d) - plan.s_q).abs() <= PHASE_READOUT_TOLERANCE * plan.s_q);
    art.check(
        "amplitude_readout_off_resonance",
        Some((off - plan.s_p).abs() < AMPLITUDE_READOUT_TOLERANCE),
        json!({ "detected_noise": off, "s_p": plan.s_p }),
    );
    art.check(
        "phase_readout_at_half_bandwidth",
        Some(phase_ok),
        json!({ "points": half, "s_q": plan.s_q }),
    );
    art.check(
        "full_conversion_regime",
        Some(full),
        json!({ "analysis_over_bandwidth": spec.analysis_frequency_hz / spec.bandwidth_hz }),
    );
    let (lo, hi) = sweep
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.detected_noise), hi.max(p.detected_noise))
        });
    art.results = json!({
        "source": plan.source,
        "s_p": plan.s_p,
        "s_q": plan.s_q,
        "min_detected": lo,
        "max_detected": hi,
        "half_bandwidth_points": half,
    });
    Ok(art)
}
