//! (η, ξ) parameter surveys and the integrated sensitivity improvement
//! factor ρ_r.
//!
//! Each survey cell maps (η, ξ) to rates, solves for the delay-cancelling
//! detunings, classifies every resulting system and, for stable ones,
//! integrates the inverse strain PSD over one free spectral range.

use std::cell::RefCell;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometer::{self, IfoParams};
use crate::medium::{self, MediumParams, NoiseModel};
use crate::numerics;
use crate::stability::{self, StabilityClass, StabilityOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RootChoice {
    Smaller,
    Larger,
    #[default]
    Both,
}

impl RootChoice {
    fn includes(self, is_smaller: bool, is_larger: bool) -> bool {
        match self {
            RootChoice::Smaller => is_smaller,
            RootChoice::Larger => is_larger,
            RootChoice::Both => true,
        }
    }
}

/// `n` points evenly spaced over `[lo, hi]`; a single point sits at the midpoint.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub eta_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    pub srm_power_reflectivities: Vec<f64>,
    pub root_choice: RootChoice,
    pub include_additional_noise: bool,
    pub noise_model: NoiseModel,
    /// Relative tolerance of the ρ_r quadrature.
    pub rel_tol: f64,
    pub margin: f64,
    pub omega_max_mult: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            eta_grid: linspace(0.02, 0.98, 50),
            xi_grid: linspace(0.02, 0.98, 50),
            srm_power_reflectivities: vec![0.5, 0.8, 0.9],
            root_choice: RootChoice::Both,
            include_additional_noise: true,
            noise_model: NoiseModel::Local,
            rel_tol: 1e-4,
            margin: 1.0,
            omega_max_mult: 50.0,
        }
    }
}

impl SweepSpec {
    /// Square grid of `n × n` points uniform over `[lo, hi]²`.
    pub fn with_uniform_grid(mut self, n: usize, lo: f64, hi: f64) -> Self {
        self.eta_grid = linspace(lo, hi, n);
        self.xi_grid = linspace(lo, hi, n);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [("eta_grid", &self.eta_grid), ("xi_grid", &self.xi_grid)] {
            if grid.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::InvalidParameter(format!("{name} values must lie strictly inside (0, 1)")));
            }
            if grid.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidParameter(format!("{name} must be strictly ascending")));
            }
        }
        if self.srm_power_reflectivities.iter().any(|&r2| !(0.0..1.0).contains(&r2)) {
            return Err(Error::InvalidParameter("SRM power reflectivities must lie in [0, 1)".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidParameter(format!("margin must be positive, got {}", self.margin)));
        }
        if !(self.omega_max_mult >= stability::MIN_OMEGA_MAX_MULT) {
            return Err(Error::InvalidParameter(format!(
                "omega_max_mult must be at least {}, got {}",
                stability::MIN_OMEGA_MAX_MULT,
                self.omega_max_mult
            )));
        }
        Ok(())
    }

    fn stability_options(&self) -> StabilityOptions {
        StabilityOptions { margin: self.margin, omega_max_mult: self.omega_max_mult, ..StabilityOptions::default() }
    }
}

/// Classification of one (cell, root) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Infeasible,
    AtomicInstability,
    NonStationary,
    OpticalInstability,
    Stable,
    Error,
}

impl CellClass {
    pub fn as_str(self) -> &'static str {
        match self {
            CellClass::Infeasible => "infeasible",
            CellClass::AtomicInstability => "atomic_instability",
            CellClass::NonStationary => "non_stationary",
            CellClass::OpticalInstability => "optical_instability",
            CellClass::Stable => "stable",
            CellClass::Error => "error",
        }
    }
}

impl From<StabilityClass> for CellClass {
    fn from(c: StabilityClass) -> Self {
        match c {
            StabilityClass::Stable => CellClass::Stable,
            StabilityClass::AtomicInstability => CellClass::AtomicInstability,
            StabilityClass::OpticalInstability => CellClass::OpticalInstability,
            StabilityClass::NonStationary => CellClass::NonStationary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootOutcome {
    pub delta0: f64,
    pub is_smaller: bool,
    pub is_larger: bool,
    pub class: CellClass,
    pub winding: Option<i64>,
    /// Present only for stable systems.
    pub rho_r: Option<f64>,
    /// The Nyquist contour came close enough to 1 + 0i to be treated as unstable.
    pub marginal: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub eta: f64,
    pub xi: f64,
    pub gamma12: f64,
    pub gamma_opt_total: f64,
    pub delta0_roots: Vec<f64>,
    /// One entry per selected root, ascending in Δ₀.
    pub outcomes: Vec<RootOutcome>,
    /// Set when the cell could not be evaluated at all.
    pub note: Option<String>,
}

impl SweepCell {
    pub fn is_feasible(&self) -> bool {
        !self.delta0_roots.is_empty()
    }

    /// Outcome for the smaller or larger root. `Both` yields the larger one.
    pub fn outcome(&self, root: RootChoice) -> Option<&RootOutcome> {
        match root {
            RootChoice::Smaller => self.outcomes.iter().find(|o| o.is_smaller),
            RootChoice::Larger | RootChoice::Both => self.outcomes.iter().rev().find(|o| o.is_larger),
        }
    }

    pub fn any_stable(&self) -> bool {
        self.outcomes.iter().any(|o| o.class == CellClass::Stable)
    }
}

/// Survey result at one SRM reflectivity, cells row-major with η outer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub srm_power_reflectivity: f64,
    pub eta_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, eta_index: usize, xi_index: usize) -> &SweepCell {
        &self.cells[eta_index * self.xi_grid.len() + xi_index]
    }

    fn selected<'a>(&'a self, root: RootChoice) -> impl Iterator<Item = &'a RootOutcome> + 'a {
        self.cells
            .iter()
            .flat_map(|c| c.outcomes.iter())
            .filter(move |o| root.includes(o.is_smaller, o.is_larger))
    }

    /// Number of stable (cell, root) pairs for the chosen root(s).
    pub fn stable_count(&self, root: RootChoice) -> usize {
        self.selected(root).filter(|o| o.class == CellClass::Stable).count()
    }

    /// Number of cells with at least one stable root.
    pub fn stable_cell_count(&self) -> usize {
        self.cells.iter().filter(|c| c.any_stable()).count()
    }

    pub fn max_rho(&self, root: RootChoice) -> Option<f64> {
        self.selected(root).filter_map(|o| o.rho_r).fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    pub fn error_count(&self) -> usize {
        self.cells
            .iter()
            .map(|c| c.outcomes.iter().filter(|o| o.class == CellClass::Error).count() + c.note.is_some() as usize)
            .sum()
    }
}

/// Breakpoints in θ = Ωτ ∈ [0, π] that bracket the gain peaks and the
/// white-light band.
fn theta_breaks(med: &MediumParams, tau: f64) -> Vec<f64> {
    let g = med.net_damping().abs() * tau;
    let d = med.delta0 * tau;
    let mut pts = vec![0.0, PI];
    for k in [0.5, 1.0, 2.0, 4.0, 10.0] {
        pts.push(k * g);
        pts.push(d - k * g);
        pts.push(d + k * g);
    }
    pts.push(d);
    pts.push(0.5 * d);
    pts.retain(|&t| (0.0..=PI).contains(&t) && t.is_finite());
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * PI);
    pts
}

/// ∫₀^{π/τ} dΩ/S_hh divided by the conventional value 2πK/τ, without
/// checking stability first.
pub fn integrated_sensitivity_ratio(ifo: &IfoParams, med: &MediumParams, model: NoiseModel, rel_tol: f64) -> Result<f64> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let integrand = |theta: f64| match interferometer::normalized_inverse_psd(ifo, med, model, theta) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let result = numerics::integrate_piecewise(integrand, &theta_breaks(med, ifo.tau()), rel_tol, 0.0);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(result?.value / PI)
}

/// Integrated shot-noise sensitivity improvement factor ρ_r of a stable
/// configuration.
pub fn improvement_factor(ifo: &IfoParams, med: &MediumParams, model: NoiseModel) -> Result<f64> {
    improvement_factor_with(ifo, med, model, &StabilityOptions::default(), 1e-4)
}

pub fn improvement_factor_with(
    ifo: &IfoParams,
    med: &MediumParams,
    model: NoiseModel,
    opts: &StabilityOptions,
    rel_tol: f64,
) -> Result<f64> {
    let report = stability::classify_system(ifo, med, opts)?;
    if report.classification != StabilityClass::Stable || report.marginal {
        return Err(Error::Precondition(format!(
            "improvement factor needs a stable configuration, got {}",
            report.classification.as_str()
        )));
    }
    integrated_sensitivity_ratio(ifo, med, model, rel_tol)
}

fn evaluate_root(ifo: &IfoParams, med: &MediumParams, spec: &SweepSpec, is_smaller: bool, is_larger: bool) -> RootOutcome {
    let mut out = RootOutcome {
        delta0: med.delta0,
        is_smaller,
        is_larger,
        class: CellClass::Error,
        winding: None,
        rho_r: None,
        marginal: false,
        note: None,
    };
    match stability::classify_system(ifo, med, &spec.stability_options()) {
        Ok(report) => {
            out.winding = report.min_distance_to_critical.map(|_| report.winding);
            out.marginal = report.marginal;
            out.class = report.classification.into();
            if report.marginal {
                out.class = CellClass::OpticalInstability;
                out.note = Some(format!(
                    "marginal: contour within {:e} of 1+0i",
                    report.min_distance_to_critical.unwrap_or(0.0)
                ));
            }
        }
        Err(Error::MarginalStability(msg)) => {
            out.class = CellClass::OpticalInstability;
            out.marginal = true;
            out.note = Some(format!("marginal: {msg}"));
        }
        Err(e) => {
            out.note = Some(e.to_string());
            return out;
        }
    }
    if out.class == CellClass::Stable {
        match integrated_sensitivity_ratio(ifo, med, spec.noise_model, spec.rel_tol) {
            Ok(rho) => out.rho_r = Some(rho),
            Err(e) => {
                out.class = CellClass::Error;
                out.note = Some(e.to_string());
            }
        }
    }
    out
}

/// Evaluates one (η, ξ) cell at a fixed interferometer.
pub fn evaluate_cell(ifo: &IfoParams, spec: &SweepSpec, eta: f64, xi: f64) -> SweepCell {
    let tau = ifo.tau();
    let (gamma12, gamma_opt_total) = match medium::map_eta_xi(eta, xi, tau) {
        Ok(r) => r,
        Err(e) => {
            return SweepCell {
                eta,
                xi,
                gamma12: f64::NAN,
                gamma_opt_total: f64::NAN,
                delta0_roots: vec![],
                outcomes: vec![],
                note: Some(e.to_string()),
            }
        }
    };
    let roots = medium::solve_detuning(gamma12, gamma_opt_total, tau);
    let n = roots.len();
    let outcomes = roots
        .iter()
        .enumerate()
        .filter(|&(k, _)| spec.root_choice.includes(k == 0, k + 1 == n))
        .map(|(k, &d0)| {
            let med = MediumParams { gamma12, gamma_opt_total, delta0: d0, atom_count: 1 };
            evaluate_root(ifo, &med, spec, k == 0, k + 1 == n)
        })
        .collect();
    SweepCell { eta, xi, gamma12, gamma_opt_total, delta0_roots: roots, outcomes, note: None }
}

/// Runs the survey, one grid per SRM reflectivity in `spec`. Cells are
/// evaluated in parallel on the current rayon pool; the output order is
/// fixed.
pub fn run_sweep(spec: &SweepSpec, ifo: &IfoParams) -> Result<Vec<SweepGrid>> {
    spec.validate()?;
    ifo.validate()?;
    let base = ifo.with_additional_noise(spec.include_additional_noise);
    let ifos: Vec<IfoParams> =
        spec.srm_power_reflectivities.iter().map(|&r2| base.with_srm_power_reflectivity(r2)).collect();

    let nx = spec.xi_grid.len();
    let per_grid = spec.eta_grid.len() * nx;
    let cells: Vec<SweepCell> = (0..ifos.len() * per_grid)
        .into_par_iter()
        .map(|idx| {
            let (g, rest) = (idx / per_grid, idx % per_grid);
            evaluate_cell(&ifos[g], spec, spec.eta_grid[rest / nx], spec.xi_grid[rest % nx])
        })
        .collect();

    let mut grids = Vec::with_capacity(ifos.len());
    let mut it = cells.into_iter();
    for &r2 in &spec.srm_power_reflectivities {
        grids.push(SweepGrid {
            srm_power_reflectivity: r2,
            eta_grid: spec.eta_grid.clone(),
            xi_grid: spec.xi_grid.clone(),
            cells: it.by_ref().take(per_grid).collect(),
        });
    }
    Ok(grids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_endpoints() {
        let v = linspace(0.02, 0.98, 50);
        assert_eq!(v.len(), 50);
        assert_eq!(v[0], 0.02);
        assert!((v[49] - 0.98).abs() < 1e-15);
        assert_eq!(linspace(0.0, 1.0, 1), vec![0.5]);
    }

    #[test]
    fn spec_validation() {
        assert!(SweepSpec::default().validate().is_ok());
        let bad = SweepSpec { eta_grid: vec![0.0, 0.5], ..SweepSpec::default() };
        assert!(bad.validate().is_err());
        let unsorted = SweepSpec { xi_grid: vec![0.5, 0.2], ..SweepSpec::default() };
        assert!(unsorted.validate().is_err());
    }

    #[test]
    fn infeasible_cell_has_no_roots() {
        let ifo = IfoParams::default().with_srm_power_reflectivity(0.5);
        let cell = evaluate_cell(&ifo, &SweepSpec::default(), 0.2, 0.6);
        assert!(!cell.is_feasible());
        assert!(cell.outcomes.is_empty());
    }

    #[test]
    fn transparent_medium_gives_unit_ratio() {
        let ifo = IfoParams::default().with_srm_power_reflectivity(0.8);
        let rho = improvement_factor(&ifo, &MediumParams::transparent(), NoiseModel::Local).unwrap();
        assert!((rho - 1.0).abs() < 1e-4, "rho = {rho}");
    }

    #[test]
    fn weak_medium_is_stable_near_unity() {
        // Peak gain is about 1 + η/(1 − η), so small η keeps r_s|G_o| < 1.
        let ifo = IfoParams::default().with_srm_power_reflectivity(0.5);
        let spec = SweepSpec::default();
        let cell = evaluate_cell(&ifo, &spec, 0.05, 0.02);
        let o = cell.outcome(RootChoice::Smaller).unwrap();
        assert_eq!(o.class, CellClass::Stable);
        let rho = o.rho_r.unwrap();
        assert!(rho > 0.0 && (rho - 1.0).abs() < 0.2, "rho = {rho}");
    }

    #[test]
    fn unstable_input_is_rejected() {
        let ifo = IfoParams::default().with_srm_power_reflectivity(0.9);
        let tau = ifo.tau();
        let med = MediumParams { gamma12: 1.0 / tau, gamma_opt_total: 2.0 / tau, delta0: 1.0 / tau, atom_count: 1 };
        assert!(matches!(improvement_factor(&ifo, &med, NoiseModel::Local), Err(Error::Precondition(_))));
    }

    #[test]
    fn single_cell_grid() {
        let spec = SweepSpec {
            eta_grid: vec![0.5],
            xi_grid: vec![0.1],
            srm_power_reflectivities: vec![0.5],
            ..SweepSpec::default()
        };
        let grids = run_sweep(&spec, &IfoParams::default()).unwrap();
        assert_eq!(grids.len(), 1);
        assert_eq!(grids[0].cells.len(), 1);
        assert_eq!(grids[0].cell(0, 0).delta0_roots.len(), 2);
    }
}
