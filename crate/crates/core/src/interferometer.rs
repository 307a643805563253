//! Two-photon quadrature model of the signal-recycled detector with the
//! gain medium inside the signal recycling cavity.
//!
//! Radiation pressure is ignored (infinitely heavy test masses) and the
//! arm cavities are treated as a plain delay of τ = L/c per pass, the
//! compound input mirror being impedance matched away.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{self, MediumParams, NoiseModel};
use crate::numerics::Complex2x2;
use crate::{HBAR, SPEED_OF_LIGHT};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Quadrature-domain transfer block at a single sideband frequency.
pub type QuadratureMatrix = Complex2x2;

/// Detector configuration in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IfoParams {
    /// Arm length, m.
    pub arm_length: f64,
    /// Circulating arm power, W.
    pub circulating_power: f64,
    /// Carrier angular frequency ω₀, rad/s.
    pub carrier_angular_frequency: f64,
    /// Signal recycling mirror amplitude reflectivity r_s ∈ [0, 1).
    pub srm_amplitude_reflectivity: f64,
    /// Homodyne readout angle ζ; 0 reads the phase quadrature.
    pub homodyne_angle: f64,
    pub include_additional_noise: bool,
}

impl Default for IfoParams {
    /// 4 km arms, 800 kW, 1064 nm carrier, no signal recycling.
    fn default() -> Self {
        Self {
            arm_length: 4000.0,
            circulating_power: 800e3,
            carrier_angular_frequency: 2.0 * PI * SPEED_OF_LIGHT / 1064e-9,
            srm_amplitude_reflectivity: 0.0,
            homodyne_angle: 0.0,
            include_additional_noise: true,
        }
    }
}

impl IfoParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("arm_length", self.arm_length)?;
        positive("circulating_power", self.circulating_power)?;
        positive("carrier_angular_frequency", self.carrier_angular_frequency)?;
        let r = self.srm_amplitude_reflectivity;
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidParameter(format!("srm_amplitude_reflectivity must lie in [0, 1), got {r}")));
        }
        if !self.homodyne_angle.is_finite() {
            return Err(Error::InvalidParameter("homodyne_angle must be finite".into()));
        }
        Ok(())
    }

    pub fn with_srm_power_reflectivity(mut self, r2: f64) -> Self {
        self.srm_amplitude_reflectivity = r2.sqrt();
        self
    }

    pub fn with_additional_noise(mut self, on: bool) -> Self {
        self.include_additional_noise = on;
        self
    }

    /// One-way arm delay τ = L/c.
    pub fn tau(&self) -> f64 {
        self.arm_length / SPEED_OF_LIGHT
    }

    /// Optomechanical coupling 𝒦 = P_c ω₀ L² / (ħ c²).
    pub fn coupling_k(&self) -> f64 {
        self.circulating_power * self.carrier_angular_frequency * self.arm_length.powi(2)
            / (HBAR * SPEED_OF_LIGHT * SPEED_OF_LIGHT)
    }

    /// t_s = √(1 − r_s²).
    pub fn srm_transmissivity(&self) -> f64 {
        (1.0 - self.srm_amplitude_reflectivity.powi(2)).sqrt()
    }

    /// Integration range for the integrated sensitivity, π/τ.
    pub fn free_spectral_range(&self) -> f64 {
        PI / self.tau()
    }

    /// ∫₀^{π/τ} dΩ / S_hh of the conventional detector: 2π L P_c ω₀ / (ħ c).
    pub fn baseline_integrated_sensitivity(&self) -> f64 {
        2.0 * PI * self.arm_length * self.circulating_power * self.carrier_angular_frequency
            / (HBAR * SPEED_OF_LIGHT)
    }
}

/// All transfer blocks of the closed loop at one sideband frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopBlocks {
    pub omega: f64,
    /// Arm round trip e^{2iΩτ}·I.
    pub m0: QuadratureMatrix,
    /// Medium followed by the arm.
    pub m_tot: QuadratureMatrix,
    /// (I − r_s M_tot)⁻¹.
    pub m_c: QuadratureMatrix,
    /// Vacuum transfer from the dark-port input to the output.
    pub m_k: QuadratureMatrix,
    /// Signal drive e^{iΩτ}(0, √(2𝒦)).
    pub d_vec: [Complex64; 2],
    pub n_plus: QuadratureMatrix,
    pub n_minus: QuadratureMatrix,
    /// Number of independent baths each noise block stands for.
    pub bath_count: f64,
}

fn qs() -> Complex2x2 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex2x2::new(Complex64::new(s, 0.0), Complex64::new(s, 0.0), Complex64::new(0.0, -s), Complex64::new(0.0, s))
}

fn qs_inv() -> Complex2x2 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex2x2::new(Complex64::new(s, 0.0), Complex64::new(0.0, s), Complex64::new(s, 0.0), Complex64::new(0.0, -s))
}

/// Quadrature block of a sideband process with coefficient `upper` on the
/// +Ω sideband and `lower_conj` on the conjugated −Ω sideband.
pub fn quad_from_sideband(upper: Complex64, lower_conj: Complex64) -> QuadratureMatrix {
    qs() * Complex2x2::diag(upper, lower_conj) * qs_inv()
}

/// Smallest |det(I − r_s M_tot)| accepted before the loop counts as marginal.
pub const MARGINAL_DET: f64 = 1e-12;

/// Assembles the closed-loop blocks at sideband frequency `omega`.
pub fn build_loop(ifo: &IfoParams, med: &MediumParams, model: NoiseModel, omega: f64) -> Result<LoopBlocks> {
    let tau = ifo.tau();
    let r = ifo.srm_amplitude_reflectivity;
    let t2 = 1.0 - r * r;

    let m0 = Complex2x2::scalar((2.0 * I * omega * tau).exp());
    let upper = medium::probe_transfer(med, omega)?;
    let lower = medium::probe_transfer(med, -omega)?;
    let medium_block = quad_from_sideband(upper, lower.conj());
    let m_tot = medium_block * m0;

    let open = Complex2x2::identity() - m_tot * r;
    if open.det().norm() < MARGINAL_DET {
        return Err(Error::MarginalStability(format!(
            "closed loop singular at omega = {omega} (|det| = {:e})",
            open.det().norm()
        )));
    }
    let m_c = open.inverse()?;
    let m_k = Complex2x2::scalar(Complex64::new(-r, 0.0)) + m_c * m_tot * t2;

    let d_vec = [Complex64::new(0.0, 0.0), (I * omega * tau).exp() * (2.0 * ifo.coupling_k()).sqrt()];

    let (n_p, n_m) = medium::noise_coefficients(med, omega, model)?;
    Ok(LoopBlocks {
        omega,
        m0,
        m_tot,
        m_c,
        m_k,
        d_vec,
        n_plus: quad_from_sideband(n_p, n_m),
        n_minus: quad_from_sideband(n_m, n_p),
        bath_count: model.bath_count(med.atom_count),
    })
}

fn row_norm_sqr(v: [Complex64; 2]) -> f64 {
    v[0].norm_sqr() + v[1].norm_sqr()
}

/// Shot-noise limited strain PSD S_hh(Ω) (strain² per unit angular frequency).
///
/// Both the vacuum and the added-noise contributions are propagated through
/// the full loop, and both are referred to strain through the same signal
/// transfer `t_s v_h M_c D`.
pub fn strain_psd(ifo: &IfoParams, med: &MediumParams, model: NoiseModel, omega: f64) -> Result<f64> {
    let b = build_loop(ifo, med, model, omega)?;
    let t = ifo.srm_transmissivity();
    let (s, c) = ifo.homodyne_angle.sin_cos();
    let v = [Complex64::new(s, 0.0), Complex64::new(c, 0.0)];

    let to_out = b.m_c.left_mul(v);
    let signal = t * (to_out[0] * b.d_vec[0] + to_out[1] * b.d_vec[1]);
    let drive_scale = t * row_norm_sqr(b.m_c.apply(b.d_vec)).sqrt();
    if signal.norm() <= 1e-14 * drive_scale || signal.norm() == 0.0 {
        return Err(Error::ZeroSignal { omega });
    }

    let vacuum = row_norm_sqr(b.m_k.left_mul(v));
    let added = if ifo.include_additional_noise {
        let path = (b.m_c * b.m0).scale(Complex64::new(t, 0.0));
        b.bath_count
            * (row_norm_sqr((path * b.n_plus).left_mul(v)) + row_norm_sqr((path * b.n_minus).left_mul(v)))
    } else {
        0.0
    };
    Ok((vacuum + added) / signal.norm_sqr())
}

/// `1 / (2𝒦 S_hh(θ/τ))` at dimensionless frequency θ = Ωτ.
///
/// Its mean over θ ∈ [0, π] is the ratio of the integrated sensitivity to
/// the conventional-detector value.
pub fn normalized_inverse_psd(ifo: &IfoParams, med: &MediumParams, model: NoiseModel, theta: f64) -> Result<f64> {
    let s = strain_psd(ifo, med, model, theta / ifo.tau())?;
    Ok(1.0 / (2.0 * ifo.coupling_k() * s))
}

/// Open-loop gain G_o(Ω) = e^{2iΩτ} M(Ω).
pub fn open_loop_gain(ifo: &IfoParams, med: &MediumParams, omega: f64) -> Result<Complex64> {
    Ok((2.0 * I * omega * ifo.tau()).exp() * medium::probe_transfer(med, omega)?)
}

/// G_o continued to complex frequency.
pub fn open_loop_gain_at(ifo: &IfoParams, med: &MediumParams, omega: Complex64) -> Complex64 {
    (2.0 * I * omega * ifo.tau()).exp() * medium::probe_transfer_at(med, omega)
}

/// dG_o/dΩ at complex frequency.
pub fn open_loop_gain_derivative_at(ifo: &IfoParams, med: &MediumParams, omega: Complex64) -> Complex64 {
    let tau = ifo.tau();
    let delay = (2.0 * I * omega * tau).exp();
    delay * (2.0 * I * tau * medium::probe_transfer_at(med, omega) + medium::probe_transfer_derivative_at(med, omega))
}

/// Closed-loop gain G_c = 1 / (1 − r_s G_o).
pub fn closed_loop_gain(ifo: &IfoParams, med: &MediumParams, omega: f64) -> Result<Complex64> {
    let den = 1.0 - ifo.srm_amplitude_reflectivity * open_loop_gain(ifo, med, omega)?;
    if den.norm() == 0.0 {
        return Err(Error::MarginalStability(format!("closed loop singular at omega = {omega}")));
    }
    Ok(den.inv())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ifo(r2: f64) -> IfoParams {
        IfoParams::default().with_srm_power_reflectivity(r2)
    }

    #[test]
    fn sideband_identity() {
        let m = quad_from_sideband(c(1.0, 0.0), c(1.0, 0.0));
        assert!((m - Complex2x2::identity()).max_norm() < 1e-15);
    }

    #[test]
    fn sideband_quarter_turn() {
        // a₁ → (i a₊ − i a₋†)/√2 = −a₂ and a₂ → a₁.
        let m = quad_from_sideband(c(0.0, 1.0), c(0.0, -1.0));
        let expect = Complex2x2::new(c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        assert!((m - expect).max_norm() < 1e-15, "{m:?}");
    }

    #[test]
    fn bare_arm() {
        let i = ifo(0.0);
        let med = MediumParams::transparent();
        let w = 1234.5;
        let b = build_loop(&i, &med, NoiseModel::Local, w).unwrap();
        let delay = (2.0 * I * w * i.tau()).exp();
        assert!((b.m_k - Complex2x2::scalar(delay)).max_norm() < 1e-14);
        assert_eq!(b.n_plus.max_norm(), 0.0);
        assert_eq!(b.n_minus.max_norm(), 0.0);
    }

    #[test]
    fn lossless_src_is_all_pass() {
        let i = ifo(0.8);
        let med = MediumParams::transparent();
        for k in 0..200 {
            let w = k as f64 * 0.37 / i.tau();
            let b = build_loop(&i, &med, NoiseModel::Local, w).unwrap();
            assert!((b.m_k.a11.norm() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn closed_loop_inverse() {
        let i = ifo(0.5);
        let tau = i.tau();
        let med = MediumParams { gamma12: 0.3 / tau, gamma_opt_total: 0.05 / tau, delta0: 0.4 / tau, atom_count: 100 };
        for w in [0.0, 0.1 / tau, 0.4 / tau, 2.0 / tau] {
            let b = build_loop(&i, &med, NoiseModel::Local, w).unwrap();
            let p = b.m_c * (Complex2x2::identity() - b.m_tot * i.srm_amplitude_reflectivity);
            assert!((p - Complex2x2::identity()).max_norm() < 1e-12);
        }
    }

    #[test]
    fn conventional_psd_closed_form() {
        let i = ifo(0.8);
        let med = MediumParams::transparent();
        let r = i.srm_amplitude_reflectivity;
        let t2 = 1.0 - r * r;
        for k in 1..50 {
            let w = k as f64 * 0.061 / i.tau();
            let s = strain_psd(&i, &med, NoiseModel::Local, w).unwrap();
            let closed = (1.0 - r * (2.0 * I * w * i.tau()).exp()).norm_sqr() / (2.0 * i.coupling_k() * t2);
            assert_relative_eq!(s, closed, max_relative = 1e-12);
        }
    }

    #[test]
    fn added_noise_only_raises_psd() {
        let i = ifo(0.5);
        let tau = i.tau();
        let med = MediumParams { gamma12: 0.3 / tau, gamma_opt_total: 0.05 / tau, delta0: 0.4 / tau, atom_count: 10 };
        for k in 0..40 {
            let w = k as f64 * 0.05 / tau;
            let on = strain_psd(&i, &med, NoiseModel::Local, w).unwrap();
            let off = strain_psd(&i.with_additional_noise(false), &med, NoiseModel::Local, w).unwrap();
            assert!(on >= off);
        }
    }

    #[test]
    fn amplitude_readout_sees_no_signal() {
        let mut i = ifo(0.0);
        i.homodyne_angle = std::f64::consts::FRAC_PI_2;
        let r = strain_psd(&i, &MediumParams::transparent(), NoiseModel::Local, 100.0);
        assert!(matches!(r, Err(Error::ZeroSignal { .. })));
    }

    #[test]
    fn open_loop_examples() {
        let i = ifo(0.5);
        let tau = i.tau();
        let g = open_loop_gain(&i, &MediumParams::transparent(), 0.77 / tau).unwrap();
        assert_relative_eq!(g.norm(), 1.0, max_relative = 1e-15);
        let med = MediumParams { gamma12: 0.3 / tau, gamma_opt_total: 0.05 / tau, delta0: 0.4 / tau, atom_count: 1 };
        let g0 = open_loop_gain(&i, &med, 0.0).unwrap();
        assert!(g0.im.abs() < 1e-15 && g0.re > 1.0);
        let w = 0.23 / tau;
        let a = open_loop_gain(&i, &med, w).unwrap();
        let b = open_loop_gain(&i, &med, -w).unwrap();
        assert!((a - b.conj()).norm() < 1e-14);
    }

    #[test]
    fn marginal_loop_is_reported() {
        // r_s M(0) = 1 exactly: pick r_s and scale Γ so that M(0) = 1/r_s.
        let i = ifo(0.25);
        let tau = i.tau();
        let (g12, d0) = (1.0 / tau, 0.0);
        // M(0) = 1 + 2Γ/(γ₁₂ − Γ) at Δ₀ = 0; solve 1 + 2Γ/(γ₁₂ − Γ) = 2.
        let gm = g12 / 3.0;
        let med = MediumParams { gamma12: g12, gamma_opt_total: gm, delta0: d0, atom_count: 1 };
        let m0 = medium::probe_transfer(&med, 0.0).unwrap();
        assert!((m0.re - 2.0).abs() < 1e-14);
        assert!(matches!(build_loop(&i, &med, NoiseModel::Local, 0.0), Err(Error::MarginalStability(_))));
    }
}
