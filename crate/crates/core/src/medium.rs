//! Closed-form response of the double-pumped gain medium.
//!
//! Rates and frequencies share one unit (rad/s in SI, or 1/τ when the
//! caller works in arm-delay units). The ensemble anti-damping rate
//! `gamma_opt_total` = N·γ_opt enters every response formula directly; the
//! atom count only matters for the noise-bath bookkeeping.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::solve_quadratic;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Parameters of the (symmetrically) double-pumped gain medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    /// Effective |2⟩→|1⟩ decay rate γ₁₂.
    pub gamma12: f64,
    /// Ensemble pump-mediated anti-damping rate Γ_opt.
    pub gamma_opt_total: f64,
    /// Half the frequency splitting of the two control fields, Δ₀.
    pub delta0: f64,
    /// Number of atoms N.
    pub atom_count: u64,
}

impl MediumParams {
    pub fn new(gamma12: f64, gamma_opt_total: f64, delta0: f64, atom_count: u64) -> Result<Self> {
        let p = Self { gamma12, gamma_opt_total, delta0, atom_count };
        p.validate()?;
        Ok(p)
    }

    /// A medium with no pumping; it transmits the probe unchanged.
    pub fn transparent() -> Self {
        Self { gamma12: 1.0, gamma_opt_total: 0.0, delta0: 0.0, atom_count: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma12.is_finite() && self.gamma12 > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma12 must be positive, got {}", self.gamma12)));
        }
        if !(self.gamma_opt_total.is_finite() && self.gamma_opt_total >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma_opt_total must be non-negative, got {}",
                self.gamma_opt_total
            )));
        }
        if !(self.delta0.is_finite() && self.delta0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("delta0 must be non-negative, got {}", self.delta0)));
        }
        if self.atom_count == 0 {
            return Err(Error::InvalidParameter("atom_count must be at least 1".into()));
        }
        Ok(())
    }

    /// Net damping g = γ₁₂ − Γ_opt of the |1⟩–|2⟩ coherence.
    pub fn net_damping(&self) -> f64 {
        self.gamma12 - self.gamma_opt_total
    }

    /// Single-atom anti-damping rate γ_opt = Γ_opt / N.
    pub fn gamma_opt_per_atom(&self) -> f64 {
        self.gamma_opt_total / self.atom_count as f64
    }

    pub fn with_delta0(mut self, delta0: f64) -> Self {
        self.delta0 = delta0;
        self
    }

    /// Largest of the medium's rate and frequency scales.
    pub fn max_rate(&self) -> f64 {
        self.gamma12.max(self.gamma_opt_total).max(self.delta0)
    }
}

/// Medium-only dynamical classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MediumClass {
    Stationary,
    /// Population inversion: the medium lases on its own (γ₁₂ < Γ_opt).
    AtomicInstability,
    /// The two pumps beat strongly enough that no stationary input-output
    /// relation exists.
    NonStationary,
}

/// How the decoherence noise baths couple to the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// One bath per atom, each coupled with the single-atom rate.
    #[default]
    Local,
    /// A single bath coupled to the whole ensemble.
    Collective,
}

impl NoiseModel {
    /// Number of independent bath channels sharing the coefficients
    /// returned by [`noise_coefficients`].
    pub fn bath_count(self, atom_count: u64) -> f64 {
        match self {
            NoiseModel::Local => atom_count as f64,
            NoiseModel::Collective => 1.0,
        }
    }
}

/// The two resonance denominators `i(Ω ± Δ₀) − g` at complex frequency.
fn denominators(p: &MediumParams, omega: Complex64) -> (Complex64, Complex64) {
    let g = p.net_damping();
    (I * (omega + p.delta0) - g, I * (omega - p.delta0) - g)
}

fn checked_denominators(p: &MediumParams, omega: f64) -> Result<(Complex64, Complex64)> {
    let (dp, dm) = denominators(p, Complex64::new(omega, 0.0));
    if dp.norm() == 0.0 || dm.norm() == 0.0 {
        return Err(Error::Pole { omega });
    }
    Ok((dp, dm))
}

/// Susceptibility χ(Ω) of the double-pumped medium.
pub fn susceptibility(p: &MediumParams, omega: f64) -> Result<Complex64> {
    let (dp, dm) = checked_denominators(p, omega)?;
    let num = 2.0 * I * p.gamma_opt_total;
    Ok(num / dp + num / dm)
}

/// Probe transfer coefficient M(Ω) = 1 + iχ(Ω)/2.
pub fn probe_transfer(p: &MediumParams, omega: f64) -> Result<Complex64> {
    checked_denominators(p, omega)?;
    Ok(probe_transfer_at(p, Complex64::new(omega, 0.0)))
}

/// M(Ω) continued to complex frequency. Poles sit at Ω = ∓Δ₀ − i·g.
pub fn probe_transfer_at(p: &MediumParams, omega: Complex64) -> Complex64 {
    let (dp, dm) = denominators(p, omega);
    let gm = p.gamma_opt_total;
    1.0 - gm / dp - gm / dm
}

/// dM/dΩ at complex frequency.
pub fn probe_transfer_derivative_at(p: &MediumParams, omega: Complex64) -> Complex64 {
    let (dp, dm) = denominators(p, omega);
    let gm = p.gamma_opt_total;
    I * gm / (dp * dp) + I * gm / (dm * dm)
}

/// Weak-coupling transfer e^{iχ(Ω)/2}: phase Re χ/2, amplitude e^{−Im χ/2}.
pub fn weak_coupling_transfer(p: &MediumParams, omega: f64) -> Result<Complex64> {
    Ok((I * susceptibility(p, omega)? / 2.0).exp())
}

/// Additional-noise coefficients (𝒩₊, 𝒩₋) at sideband frequency Ω.
///
/// For [`NoiseModel::Local`] the coefficients belong to each of N baths and
/// carry the single-atom rate; for [`NoiseModel::Collective`] there is one
/// bath with the ensemble rate.
pub fn noise_coefficients(p: &MediumParams, omega: f64, model: NoiseModel) -> Result<(Complex64, Complex64)> {
    let g = p.net_damping();
    let coupling = match model {
        NoiseModel::Local => p.gamma_opt_per_atom(),
        NoiseModel::Collective => p.gamma_opt_total,
    };
    let amp = (2.0 * p.gamma12 * coupling).sqrt();
    let d_plus = I * (p.delta0 - omega) + g;
    let d_minus = I * (-p.delta0 - omega) + g;
    if d_plus.norm() == 0.0 || d_minus.norm() == 0.0 {
        return Err(Error::Pole { omega });
    }
    Ok((amp / d_plus, amp / d_minus))
}

/// Total added-noise power `baths · (|𝒩₊|² + |𝒩₋|²)`; independent of the model.
pub fn added_noise_power(p: &MediumParams, omega: f64, model: NoiseModel) -> Result<f64> {
    let (np, nm) = noise_coefficients(p, omega, model)?;
    Ok(model.bath_count(p.atom_count) * (np.norm_sqr() + nm.norm_sqr()))
}

/// Atomic instability first, then the stationarity test
/// `Δ₀² + g² ≥ margin · Γ_opt² / 4`.
pub fn classify_medium(p: &MediumParams, margin: f64) -> MediumClass {
    if p.gamma12 < p.gamma_opt_total {
        return MediumClass::AtomicInstability;
    }
    let g = p.net_damping();
    let lhs = p.delta0 * p.delta0 + g * g;
    if lhs < margin * p.gamma_opt_total * p.gamma_opt_total / 4.0 {
        MediumClass::NonStationary
    } else {
        MediumClass::Stationary
    }
}

/// `max_± |f±(Ω) − 1|²` with `f±(Ω) − 1 = ½ Γ_opt / (g + i(Ω ± Δ₀))`.
/// Small values certify the weak-coupling input-output relation.
pub fn validity_margin(p: &MediumParams, omega: f64) -> f64 {
    let g = p.net_damping();
    let half = 0.5 * p.gamma_opt_total;
    [omega + p.delta0, omega - p.delta0]
        .iter()
        .map(|&w| {
            let d = Complex64::new(g, w);
            if d.norm() == 0.0 {
                if half == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                (half / d).norm_sqr()
            }
        })
        .fold(0.0, f64::max)
}

/// `Γ_opt (g² − Δ₀²) / (g² + Δ₀²)²`: half the low-frequency slope of Re χ.
/// Phase cancellation requires this to equal −τ.
pub fn dispersion_slope(gamma12: f64, gamma_opt_total: f64, delta0: f64) -> f64 {
    let g2 = (gamma12 - gamma_opt_total).powi(2);
    let x = delta0 * delta0;
    gamma_opt_total * (g2 - x) / ((g2 + x) * (g2 + x))
}

/// Detunings Δ₀ > 0 that cancel the arm round-trip phase slope 2τ.
///
/// Solves `τ x² + (2g²τ − Γ_opt) x + (g⁴τ + Γ_opt g²) = 0` for x = Δ₀² and
/// returns √x for every strictly positive root, ascending. An empty list
/// means no detuning cancels the delay.
pub fn solve_detuning(gamma12: f64, gamma_opt_total: f64, tau: f64) -> Vec<f64> {
    let g2 = (gamma12 - gamma_opt_total).powi(2);
    let a = tau;
    let b = 2.0 * g2 * tau - gamma_opt_total;
    let c = g2 * g2 * tau + gamma_opt_total * g2;
    match solve_quadratic(a, b, c) {
        Ok(r) => r.roots.into_iter().filter(|&x| x > 0.0).map(f64::sqrt).collect(),
        Err(_) => vec![],
    }
}

/// Rates (γ₁₂, Γ_opt) from the survey coordinates
/// η = Γ_opt/γ₁₂ and ξ = 8(γ₁₂ − Γ_opt)²τ/γ₁₂.
pub fn map_eta_xi(eta: f64, xi: f64, tau: f64) -> Result<(f64, f64)> {
    if eta == 1.0 {
        return Err(Error::SingularParametrization("eta = 1 puts g = 0 out of reach of the (eta, xi) map".into()));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("eta must lie in (0, 1), got {eta}")));
    }
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::InvalidParameter(format!("xi must lie in (0, 1], got {xi}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let gamma12 = xi / (8.0 * tau * (1.0 - eta).powi(2));
    Ok((gamma12, eta * gamma12))
}

/// Inverse of [`map_eta_xi`].
pub fn eta_xi_from_rates(gamma12: f64, gamma_opt_total: f64, tau: f64) -> (f64, f64) {
    let g = gamma12 - gamma_opt_total;
    (gamma_opt_total / gamma12, 8.0 * g * g * tau / gamma12)
}
