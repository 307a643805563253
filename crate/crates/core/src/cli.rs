//! Command-line front end.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "detector": { "arm_length": 4000, "circulating_power": 8e5, "srm_power_reflectivity": 0.8 },
//!   "medium": { "eta": 0.5, "xi": 0.3, "root": "larger" },
//!   "response": { "omega_min": -3, "omega_max": 3, "points": 601 },
//!   "sweep": { "grid_points": 20, "srm_power_reflectivities": [0.5, 0.8] },
//!   "noise_model": "local",
//!   "rate_unit": "inverse_tau",
//!   "output_dir": "out"
//! }
//! ```
//!
//! Tables are written as CSV with a header row and 17 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::interferometer::IfoParams;
use crate::medium::{self, MediumParams, NoiseModel};
use crate::stability::{self, StabilityClass, StabilityOptions, StabilityReport};
use crate::survey::{self, CellClass, RootChoice, SweepGrid, SweepSpec};

pub const EXIT_STABLE: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_UNSTABLE: i32 = 2;
pub const EXIT_MEDIUM: i32 = 3;
pub const EXIT_MARGINAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "wlc", version, about = "White-light-cavity interferometer noise and stability tool")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Output directory; overrides the scenario's `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps, 0 picks automatically.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Non-stationarity threshold factor.
    #[arg(long, global = true)]
    pub margin: Option<f64>,
    /// Nyquist range as a multiple of the largest rate.
    #[arg(long = "omega-max-mult", global = true)]
    pub omega_max_mult: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Medium response table over a frequency list.
    Response,
    /// Nyquist contour and stability report.
    Nyquist,
    /// (eta, xi) survey tables and summary.
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateUnit {
    /// Rates and frequencies in rad/s.
    #[default]
    RadPerS,
    /// Rates and frequencies in units of 1/τ.
    InverseTau,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorBlock {
    pub arm_length: Option<f64>,
    pub circulating_power: Option<f64>,
    pub carrier_angular_frequency: Option<f64>,
    pub carrier_wavelength: Option<f64>,
    pub srm_amplitude_reflectivity: Option<f64>,
    pub srm_power_reflectivity: Option<f64>,
    pub homodyne_angle: Option<f64>,
    pub include_additional_noise: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumBlock {
    pub gamma12: Option<f64>,
    pub gamma_opt_total: Option<f64>,
    pub delta0: Option<f64>,
    pub eta: Option<f64>,
    pub xi: Option<f64>,
    pub root: Option<RootChoice>,
    pub atom_count: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseBlock {
    pub omegas: Option<Vec<f64>>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub eta_grid: Option<Vec<f64>>,
    pub xi_grid: Option<Vec<f64>>,
    pub grid_points: Option<usize>,
    pub grid_range: Option<[f64; 2]>,
    pub srm_power_reflectivities: Option<Vec<f64>>,
    pub root_choice: Option<RootChoice>,
    pub include_additional_noise: Option<bool>,
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub detector: DetectorBlock,
    pub medium: Option<MediumBlock>,
    pub response: Option<ResponseBlock>,
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub noise_model: NoiseModel,
    #[serde(default)]
    pub rate_unit: RateUnit,
    pub output_dir: Option<PathBuf>,
}

/// Failure of a CLI command, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Marginal(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Marginal(m) => f.write_str(m),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Marginal(_) => EXIT_MARGINAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::MarginalStability(_) => CliError::Marginal(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    serde_json::from_str(text).map_err(|e| usage(format!("scenario parse error: {e}")))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

impl Scenario {
    pub fn ifo(&self) -> Result<IfoParams, CliError> {
        let d = &self.detector;
        let mut ifo = IfoParams::default();
        if let Some(v) = d.arm_length {
            ifo.arm_length = v;
        }
        if let Some(v) = d.circulating_power {
            ifo.circulating_power = v;
        }
        match (d.carrier_angular_frequency, d.carrier_wavelength) {
            (Some(_), Some(_)) => {
                return Err(usage("detector: give carrier_angular_frequency or carrier_wavelength, not both"))
            }
            (Some(w), None) => ifo.carrier_angular_frequency = w,
            (None, Some(lambda)) => {
                if !(lambda > 0.0) {
                    return Err(usage("detector.carrier_wavelength must be positive"));
                }
                ifo.carrier_angular_frequency = 2.0 * std::f64::consts::PI * crate::SPEED_OF_LIGHT / lambda
            }
            (None, None) => {}
        }
        match (d.srm_amplitude_reflectivity, d.srm_power_reflectivity) {
            (Some(_), Some(_)) => {
                return Err(usage("detector: give srm_amplitude_reflectivity or srm_power_reflectivity, not both"))
            }
            (Some(r), None) => ifo.srm_amplitude_reflectivity = r,
            (None, Some(r2)) => {
                if !(0.0..1.0).contains(&r2) {
                    return Err(usage(format!("detector.srm_power_reflectivity must lie in [0, 1), got {r2}")));
                }
                ifo = ifo.with_srm_power_reflectivity(r2)
            }
            (None, None) => {}
        }
        if let Some(v) = d.homodyne_angle {
            ifo.homodyne_angle = v;
        }
        if let Some(v) = d.include_additional_noise {
            ifo.include_additional_noise = v;
        }
        ifo.validate().map_err(|e| usage(format!("detector: {e}")))?;
        Ok(ifo)
    }

    /// Conversion factor from scenario rate units to rad/s.
    pub fn rate_scale(&self, ifo: &IfoParams) -> f64 {
        match self.rate_unit {
            RateUnit::RadPerS => 1.0,
            RateUnit::InverseTau => 1.0 / ifo.tau(),
        }
    }

    /// Medium in rad/s. An (η, ξ) medium with no delay-cancelling detuning
    /// is a usage error.
    pub fn medium(&self, ifo: &IfoParams) -> Result<MediumParams, CliError> {
        let m = self.medium.as_ref().ok_or_else(|| usage("scenario has no medium block"))?;
        let raw = m.gamma12.is_some() || m.gamma_opt_total.is_some() || m.delta0.is_some();
        let reduced = m.eta.is_some() || m.xi.is_some() || m.root.is_some();
        let atom_count = m.atom_count.unwrap_or(1);
        let scale = self.rate_scale(ifo);
        let med = match (raw, reduced) {
            (true, true) => return Err(usage("medium: give either gamma12/gamma_opt_total/delta0 or eta/xi/root")),
            (false, false) => return Err(usage("medium: no parameters given")),
            (true, false) => {
                let get = |v: Option<f64>, name: &str| v.ok_or_else(|| usage(format!("medium.{name} is missing")));
                MediumParams {
                    gamma12: get(m.gamma12, "gamma12")? * scale,
                    gamma_opt_total: get(m.gamma_opt_total, "gamma_opt_total")? * scale,
                    delta0: get(m.delta0, "delta0")? * scale,
                    atom_count,
                }
            }
            (false, true) => {
                let eta = m.eta.ok_or_else(|| usage("medium.eta is missing"))?;
                let xi = m.xi.ok_or_else(|| usage("medium.xi is missing"))?;
                let tau = ifo.tau();
                let (g12, gm) = medium::map_eta_xi(eta, xi, tau).map_err(|e| usage(format!("medium: {e}")))?;
                let roots = medium::solve_detuning(g12, gm, tau);
                let d0 = match m.root.unwrap_or(RootChoice::Larger) {
                    RootChoice::Smaller => roots.first(),
                    RootChoice::Larger => roots.last(),
                    RootChoice::Both => return Err(usage("medium.root must be \"smaller\" or \"larger\"")),
                };
                let d0 = *d0.ok_or_else(|| {
                    usage(format!("medium: eta = {eta}, xi = {xi} admits no phase-cancelling detuning (needs xi <= eta)"))
                })?;
                MediumParams { gamma12: g12, gamma_opt_total: gm, delta0: d0, atom_count }
            }
        };
        med.validate().map_err(|e| usage(format!("medium: {e}")))?;
        Ok(med)
    }

    /// Frequencies for the response table, in scenario rate units.
    pub fn response_omegas(&self) -> Result<Vec<f64>, CliError> {
        let Some(r) = &self.response else {
            return Ok(vec![]);
        };
        if let Some(list) = &r.omegas {
            if r.omega_min.is_some() || r.omega_max.is_some() || r.points.is_some() {
                return Err(usage("response: give omegas or omega_min/omega_max/points, not both"));
            }
            return Ok(list.clone());
        }
        match (r.omega_min, r.omega_max, r.points) {
            (None, None, None) => Ok(vec![]),
            (Some(lo), Some(hi), Some(n)) => Ok(survey::linspace(lo, hi, n)),
            _ => Err(usage("response: omega_min, omega_max and points go together")),
        }
    }

    pub fn sweep_spec(&self, common: &CommonArgs) -> Result<SweepSpec, CliError> {
        let b = self.sweep.clone().unwrap_or_default();
        let mut spec = SweepSpec { noise_model: self.noise_model, ..SweepSpec::default() };
        if b.grid_points.is_some() || b.grid_range.is_some() {
            let n = b.grid_points.unwrap_or(spec.eta_grid.len());
            let [lo, hi] = b.grid_range.unwrap_or([0.02, 0.98]);
            spec = spec.with_uniform_grid(n, lo, hi);
        }
        if let Some(g) = b.eta_grid {
            spec.eta_grid = g;
        }
        if let Some(g) = b.xi_grid {
            spec.xi_grid = g;
        }
        if let Some(v) = b.srm_power_reflectivities {
            spec.srm_power_reflectivities = v;
        }
        if let Some(v) = b.root_choice {
            spec.root_choice = v;
        }
        if let Some(v) = b.include_additional_noise.or(self.detector.include_additional_noise) {
            spec.include_additional_noise = v;
        }
        if let Some(v) = b.rel_tol {
            spec.rel_tol = v;
        }
        if let Some(v) = common.margin {
            spec.margin = v;
        }
        if let Some(v) = common.omega_max_mult {
            spec.omega_max_mult = v;
        }
        spec.validate().map_err(|e| usage(format!("sweep: {e}")))?;
        Ok(spec)
    }
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    usage(format!("cannot write {}: {e}", path.display()))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn output_dir(scenario: &Scenario, common: &CommonArgs) -> Result<PathBuf, CliError> {
    let dir = common.out.clone().or_else(|| scenario.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

pub const RESPONSE_HEADER: [&str; 8] =
    ["omega", "re_chi", "im_chi", "abs_m", "arg_m", "abs_n_plus", "abs_n_minus", "validity_margin"];

/// Response rows; frequencies are reported in the scenario's unit.
pub fn response_table(
    med: &MediumParams,
    model: NoiseModel,
    omegas: &[f64],
    scale: f64,
) -> Vec<Vec<String>> {
    omegas
        .iter()
        .map(|&w| {
            let omega = w * scale;
            let nan = Complex64::new(f64::NAN, f64::NAN);
            let chi = medium::susceptibility(med, omega).unwrap_or(nan);
            let m = medium::probe_transfer(med, omega).unwrap_or(nan);
            let (np, nm) = medium::noise_coefficients(med, omega, model).unwrap_or((nan, nan));
            vec![
                fmt_f64(w),
                fmt_f64(chi.re),
                fmt_f64(chi.im),
                fmt_f64(m.norm()),
                fmt_f64(m.arg()),
                fmt_f64(np.norm()),
                fmt_f64(nm.norm()),
                fmt_f64(medium::validity_margin(med, omega)),
            ]
        })
        .collect()
}

pub fn cmd_response(scenario: &Scenario, common: &CommonArgs) -> Result<PathBuf, CliError> {
    let ifo = scenario.ifo()?;
    let med = scenario.medium(&ifo)?;
    let omegas = scenario.response_omegas()?;
    let rows = response_table(&med, scenario.noise_model, &omegas, scenario.rate_scale(&ifo));
    let path = output_dir(scenario, common)?.join("response.csv");
    write_csv(&path, &RESPONSE_HEADER, &rows)?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
struct NyquistSummary<'a> {
    report: &'a StabilityReport,
    srm_amplitude_reflectivity: f64,
    medium: &'a MediumParams,
    contour_file: Option<String>,
}

pub fn exit_code_for(class: StabilityClass) -> i32 {
    match class {
        StabilityClass::Stable => EXIT_STABLE,
        StabilityClass::OpticalInstability => EXIT_UNSTABLE,
        StabilityClass::AtomicInstability | StabilityClass::NonStationary => EXIT_MEDIUM,
    }
}

/// Writes the contour and report; returns the exit code.
pub fn cmd_nyquist(scenario: &Scenario, common: &CommonArgs) -> Result<i32, CliError> {
    let ifo = scenario.ifo()?;
    let med = scenario.medium(&ifo)?;
    let mut opts = StabilityOptions::default();
    if let Some(m) = common.margin {
        opts.margin = m;
    }
    if let Some(k) = common.omega_max_mult {
        opts.omega_max_mult = k;
    }
    let (report, contour) = stability::classify_with_contour(&ifo, &med, &opts)?;
    let dir = output_dir(scenario, common)?;
    let mut contour_file = None;
    if let Some(c) = &contour {
        let scale = scenario.rate_scale(&ifo);
        let rows: Vec<Vec<String>> = c
            .omegas
            .iter()
            .zip(&c.values)
            .map(|(&w, z)| vec![fmt_f64(w / scale), fmt_f64(z.re), fmt_f64(z.im)])
            .collect();
        let path = dir.join("nyquist_contour.csv");
        write_csv(&path, &["omega", "re", "im"], &rows)?;
        contour_file = Some("nyquist_contour.csv".to_string());
    }
    let summary = NyquistSummary {
        report: &report,
        srm_amplitude_reflectivity: ifo.srm_amplitude_reflectivity,
        medium: &med,
        contour_file,
    };
    write_json(&dir.join("nyquist_report.json"), &summary)?;
    println!(
        "classification={} winding={} min_distance={} marginal={}",
        report.classification.as_str(),
        report.winding,
        report.min_distance_to_critical.map(|d| format!("{d:e}")).unwrap_or_else(|| "-".into()),
        report.marginal
    );
    if report.marginal {
        return Ok(EXIT_MARGINAL);
    }
    Ok(exit_code_for(report.classification))
}

pub const SWEEP_HEADER: [&str; 6] = ["eta", "xi", "classification", "delta0", "rho_r", "note"];

/// Rows of one (r_s², root) table. Δ₀ is reported in the scenario's unit.
pub fn sweep_table(grid: &SweepGrid, root: RootChoice, scale: f64) -> Vec<Vec<String>> {
    grid.cells
        .iter()
        .map(|cell| {
            let (class, delta0, rho, note) = match cell.outcome(root) {
                Some(o) => (o.class, Some(o.delta0 / scale), o.rho_r, o.note.clone()),
                None if cell.note.is_some() => (CellClass::Error, None, None, cell.note.clone()),
                None => (CellClass::Infeasible, None, None, None),
            };
            vec![
                fmt_f64(cell.eta),
                fmt_f64(cell.xi),
                class.as_str().to_string(),
                fmt_opt(delta0),
                fmt_opt(rho),
                note.unwrap_or_default(),
            ]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTableSummary {
    pub srm_power_reflectivity: f64,
    pub root: RootChoice,
    pub file: String,
    pub stable_count: usize,
    pub max_rho_r: Option<f64>,
    pub error_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub include_additional_noise: bool,
    pub noise_model: NoiseModel,
    pub eta_points: usize,
    pub xi_points: usize,
    pub tables: Vec<SweepTableSummary>,
}

pub fn cmd_sweep(scenario: &Scenario, common: &CommonArgs) -> Result<SweepSummary, CliError> {
    let ifo = scenario.ifo()?;
    let spec = scenario.sweep_spec(common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| usage(format!("cannot start worker pool: {e}")))?;
    let grids = pool.install(|| survey::run_sweep(&spec, &ifo))?;

    let dir = output_dir(scenario, common)?;
    let scale = scenario.rate_scale(&ifo);
    let roots: &[RootChoice] = match spec.root_choice {
        RootChoice::Both => &[RootChoice::Smaller, RootChoice::Larger],
        RootChoice::Smaller => &[RootChoice::Smaller],
        RootChoice::Larger => &[RootChoice::Larger],
    };
    let mut tables = Vec::new();
    for grid in &grids {
        for &root in roots {
            let name = format!(
                "sweep_r2_{}_{}.csv",
                grid.srm_power_reflectivity,
                if root == RootChoice::Smaller { "smaller" } else { "larger" }
            );
            write_csv(&dir.join(&name), &SWEEP_HEADER, &sweep_table(grid, root, scale))?;
            let errors = grid
                .cells
                .iter()
                .filter(|c| c.outcome(root).map_or(c.note.is_some(), |o| o.class == CellClass::Error))
                .count();
            tables.push(SweepTableSummary {
                srm_power_reflectivity: grid.srm_power_reflectivity,
                root,
                file: name,
                stable_count: grid.stable_count(root),
                max_rho_r: grid.max_rho(root),
                error_count: errors,
            });
        }
    }
    let summary = SweepSummary {
        include_additional_noise: spec.include_additional_noise,
        noise_model: spec.noise_model,
        eta_points: spec.eta_grid.len(),
        xi_points: spec.xi_grid.len(),
        tables,
    };
    write_json(&dir.join("sweep_summary.json"), &summary)?;
    Ok(summary)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = (|| -> Result<i32, CliError> {
        let path = cli.common.scenario.as_deref().ok_or_else(|| usage("--scenario <path> is required"))?;
        let scenario = load_scenario(path)?;
        match cli.command {
            Command::Response => {
                let out = cmd_response(&scenario, &cli.common)?;
                println!("wrote {}", out.display());
                Ok(EXIT_STABLE)
            }
            Command::Nyquist => cmd_nyquist(&scenario, &cli.common),
            Command::Sweep => {
                let summary = cmd_sweep(&scenario, &cli.common)?;
                for t in &summary.tables {
                    println!(
                        "r2={} root={:?} stable={} max_rho_r={} errors={} -> {}",
                        t.srm_power_reflectivity,
                        t.root,
                        t.stable_count,
                        t.max_rho_r.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
                        t.error_count,
                        t.file
                    );
                }
                Ok(EXIT_STABLE)
            }
        }
    })();
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("wlc: {e}");
            e.exit_code()
        }
    }
}
