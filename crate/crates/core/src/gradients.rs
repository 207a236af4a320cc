//! Closed-form gradients of the secrecy rates, sensing rates and augmented
//! Lagrangian.
//!
//! Gradients follow the conjugate-coordinate convention: for a real objective
//! `f` and a perturbation `ΔX`, `f(X + ΔX) ≈ f(X) + Re⟨∇, ΔX⟩` for a Hermitian
//! covariance, and `f(θ + Δθ) ≈ f(θ) + 2 Re⟨∇, Δθ⟩` for the metasurface
//! coefficients (∇ is `∂f/∂θ*`). Ascent steps are `X + μ∇` in both cases.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};
use crate::model::{self, echo_powers, Penalty, ReceiveBeamformers, SensingSpec, StarRisProfile, TransmitCovariances};
use crate::scenario::{ChannelSet, RisSide};

/// Gradient with respect to every covariance, aligned with
/// [`TransmitCovariances`] ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariancesGradient {
    pub mats: Vec<CMat>,
}

impl CovariancesGradient {
    pub fn frobenius_norm(&self) -> f64 {
        self.mats.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn real_inner(&self, other: &[CMat]) -> f64 {
        self.mats.iter().zip(other).map(|(a, b)| linalg::real_inner(a, b)).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.mats.iter().map(linalg::max_asymmetry).fold(0.0, f64::max)
    }
}

/// Gradient with respect to `[θ_R; θ_T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileGradient {
    pub grad_r: CVec,
    pub grad_t: CVec,
}

impl ProfileGradient {
    pub fn stacked(&self) -> CVec {
        StarRisProfile {
            theta_r: self.grad_r.clone(),
            theta_t: self.grad_t.clone(),
        }
        .stacked()
    }

    pub fn norm(&self) -> f64 {
        (self.grad_r.norm_squared() + self.grad_t.norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grad_r
            .iter()
            .chain(self.grad_t.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Inverses applied to one user's effective channel.
struct UserSolves {
    /// `C_k^{-1} Z_k` with `C_k = I + Z_k Σ Z_k^H`.
    c_inv_z: CMat,
    /// `A_kk^{-1} Z_k` with `A_kk = I + Z_k Σ_ck Z_k^H`.
    a_inv_z: CMat,
    /// `V_T^H B_k^{-1} V_T` with `B_k = I + V_T Σ_ck V_T^H`.
    vt_b_vt: CMat,
}

fn user_solves(z: &CMat, v_t: &CMat, sigma: &CMat, sigma_ck: &CMat) -> Result<UserSolves> {
    let n_u = z.nrows();
    let c = linalg::identity(n_u) + z * sigma * z.adjoint();
    let a = linalg::identity(n_u) + z * sigma_ck * z.adjoint();
    let b = linalg::identity(v_t.nrows()) + v_t * sigma_ck * v_t.adjoint();
    Ok(UserSolves {
        c_inv_z: linalg::hpd_solve(&c, z, "C_k")?,
        a_inv_z: linalg::hpd_solve(&a, z, "A_kk")?,
        vt_b_vt: linalg::sandwich_inverse(&b, v_t, "B_k")?,
    })
}

/// `V_T^H D^{-1} V_T` with `D = I + V_T Σ V_T^H`.
fn eavesdropper_total(v_t: &CMat, sigma: &CMat) -> Result<CMat> {
    let d = linalg::identity(v_t.nrows()) + v_t * sigma * v_t.adjoint();
    linalg::sandwich_inverse(&d, v_t, "D")
}

/// `∂R_ck / ∂J̄_ϖ`.
pub fn grad_secrecy_wrt_j(
    channels: &ChannelSet,
    j: &TransmitCovariances,
    theta: &StarRisProfile,
    k: usize,
    varpi: usize,
) -> Result<CMat> {
    if varpi >= j.len() {
        return Err(Error::Index {
            what: "covariance",
            index: varpi,
            len: j.len(),
        });
    }
    let z = model::effective_channel(channels, theta, k)?;
    let sigma = j.total();
    let sigma_ck = j.interference_for(k);
    let solves = user_solves(&z, &channels.v_t, &sigma, &sigma_ck)?;
    let d_term = eavesdropper_total(&channels.v_t, &sigma)?;
    let own = z.adjoint() * &solves.c_inv_z - &d_term;
    let grad = if varpi == k {
        own
    } else {
        own - (z.adjoint() * &solves.a_inv_z - &solves.vt_b_vt)
    };
    Ok(linalg::hermitian_part(&grad))
}

pub(crate) fn grad_sensing_with(channels: &ChannelSet, sigma: &CMat, phi: &CVec, l: usize, mean_rcs: f64) -> CMat {
    let echo = echo_powers(channels, sigma, phi);
    let w = channels.g_si.adjoint() * phi;
    let si_mat = &w * w.adjoint();
    let mut all = si_mat.clone();
    let mut others = si_mat;
    for target in 0..channels.n_targets() {
        // V_Rj^H φ = v_T,j^H (v_R,j^H φ)
        let gain = channels.v_r[target].dotc(phi);
        let u: CVec = channels.v_t.row(target).adjoint() * gain;
        let term = (&u * u.adjoint()).scale(mean_rcs);
        if target != l {
            others += &term;
        }
        all += term;
    }
    let (num, den) = echo.sinr_parts(l, mean_rcs);
    let den_all = num + den;
    linalg::hermitian_part(&(all.unscale(den_all) - others.unscale(den)))
}

/// `∂R_sl / ∂J̄_ϖ`; identical for every `ϖ` since `R_sl` depends on `Σ` only.
pub fn grad_sensing_wrt_j(
    channels: &ChannelSet,
    j: &TransmitCovariances,
    phi: &CVec,
    l: usize,
    spec: &SensingSpec,
) -> Result<CMat> {
    if l >= channels.n_targets() {
        return Err(Error::Index {
            what: "target",
            index: l,
            len: channels.n_targets(),
        });
    }
    Ok(grad_sensing_with(channels, &j.total(), phi, l, spec.mean_rcs))
}

/// Gradient of `Σ_k R_ck` with respect to every covariance, given the
/// effective channels.
pub(crate) fn grad_sum_secrecy_with(
    zs: &[CMat],
    v_t: &CMat,
    j: &TransmitCovariances,
    sigma: &CMat,
) -> Result<Vec<CMat>> {
    let n_t = sigma.nrows();
    let n_users = j.n_users();
    let d_term = eavesdropper_total(v_t, sigma)?;
    let mut own = Vec::with_capacity(n_users);
    let mut cross = Vec::with_capacity(n_users);
    for (k, z) in zs.iter().enumerate() {
        let sigma_ck = sigma - j.comm(k);
        let s = user_solves(z, v_t, sigma, &sigma_ck)?;
        own.push(z.adjoint() * &s.c_inv_z - &d_term);
        cross.push(z.adjoint() * &s.a_inv_z - &s.vt_b_vt);
    }
    let own_sum = own.iter().fold(CMat::zeros(n_t, n_t), |acc, m| acc + m);
    let cross_sum = cross.iter().fold(CMat::zeros(n_t, n_t), |acc, m| acc + m);
    let sensing = &own_sum - &cross_sum;
    let mut grads: Vec<CMat> = cross.iter().map(|c| &sensing + c).collect();
    grads.resize(j.len(), sensing);
    Ok(grads)
}

/// Penalty weights `ν_l + G_l / ρ` multiplying each sensing-rate gradient.
pub(crate) fn sensing_weights(residuals: &[f64], penalty: &Penalty) -> Vec<f64> {
    residuals
        .iter()
        .zip(&penalty.nu)
        .map(|(g, nu)| nu + g / penalty.rho)
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn grad_augmented_wrt_j_with(
    channels: &ChannelSet,
    zs: &[CMat],
    j: &TransmitCovariances,
    tau: &[f64],
    penalty: &Penalty,
    phis: &ReceiveBeamformers,
    spec: &SensingSpec,
) -> Result<CovariancesGradient> {
    penalty.check()?;
    let sigma = j.total();
    let mut mats = grad_sum_secrecy_with(zs, &channels.v_t, j, &sigma)?;
    let residuals = model::residuals_with(channels, &sigma, phis, spec, tau);
    let weights = sensing_weights(&residuals, penalty);
    let n_t = sigma.nrows();
    let mut sensing = CMat::zeros(n_t, n_t);
    for (l, (phi, w)) in phis.phis.iter().zip(&weights).enumerate() {
        if *w != 0.0 {
            sensing += grad_sensing_with(channels, &sigma, phi, l, spec.mean_rcs).scale(*w);
        }
    }
    for m in &mut mats {
        *m = linalg::hermitian_part(&(&*m + &sensing));
    }
    Ok(CovariancesGradient { mats })
}

/// `∇_J R_{ν,ρ}` for all `K + L` covariances.
#[allow(clippy::too_many_arguments)]
pub fn grad_augmented_wrt_j(
    channels: &ChannelSet,
    j: &TransmitCovariances,
    theta: &StarRisProfile,
    tau: &[f64],
    penalty: &Penalty,
    phis: &ReceiveBeamformers,
    spec: &SensingSpec,
) -> Result<CovariancesGradient> {
    let zs = model::effective_channels(channels, theta)?;
    grad_augmented_wrt_j_with(channels, &zs, j, tau, penalty, phis, spec)
}

pub(crate) fn grad_theta_with(channels: &ChannelSet, zs: &[CMat], j: &TransmitCovariances) -> Result<ProfileGradient> {
    let n_s = channels.n_ris_elements();
    let sigma = j.total();
    let mut grad_r = CVec::zeros(n_s);
    let mut grad_t = CVec::zeros(n_s);
    let h_bs_adj = channels.h_bs.adjoint();
    for (k, z) in zs.iter().enumerate() {
        let h_sk = &channels.h_sk[k];
        let sigma_ck = &sigma - j.comm(k);
        let n_u = z.nrows();
        let c = linalg::identity(n_u) + z * &sigma * z.adjoint();
        let a = linalg::identity(n_u) + z * &sigma_ck * z.adjoint();
        let w = linalg::hpd_solve(&c, z, "C_k")? * &sigma - linalg::hpd_solve(&a, z, "A_kk")? * &sigma_ck;
        // diag(H_Sk^H W H_BS^H) without forming the N_S x N_S product
        let t = w * &h_bs_adj;
        let target = match channels.user_sides[k] {
            RisSide::Reflection => &mut grad_r,
            RisSide::Transmission => &mut grad_t,
        };
        for m in 0..n_s {
            let mut acc = C64::new(0.0, 0.0);
            for u in 0..n_u {
                acc += h_sk[(u, m)].conj() * t[(u, m)];
            }
            target[m] += acc;
        }
    }
    Ok(ProfileGradient { grad_r, grad_t })
}

/// `∇_θ R_{ν,ρ}`; the sensing residual does not depend on `θ`, so only the
/// secrecy rates contribute and users on the other side give zero.
pub fn grad_augmented_wrt_theta(
    channels: &ChannelSet,
    j: &TransmitCovariances,
    theta: &StarRisProfile,
) -> Result<ProfileGradient> {
    let zs = model::effective_channels(channels, theta)?;
    grad_theta_with(channels, &zs, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::scalar_channels;

    #[test]
    fn zero_power_secrecy_gradient() {
        let ch = scalar_channels(2.0, 1.5, 0.0);
        let theta = StarRisProfile::equal_split(1);
        let j = TransmitCovariances::zeros(1, 1, 1);
        let g = grad_secrecy_wrt_j(&ch, &j, &theta, 0, 0).unwrap();
        assert!((g[(0, 0)].re - (4.0 - 2.25)).abs() < 1e-12);
        assert!(grad_secrecy_wrt_j(&ch, &j, &theta, 0, 2).is_err());
    }

    #[test]
    fn zero_power_sensing_gradient() {
        let mut ch = scalar_channels(1.0, 1.3, 0.4);
        ch.v_r = vec![CVec::from_element(1, C64::new(0.9, 0.0))];
        let spec = SensingSpec {
            thresholds: vec![1.0],
            mean_rcs: 0.5,
        };
        let phi = CVec::from_element(1, C64::new(1.0, 0.0));
        let j = TransmitCovariances::zeros(1, 1, 1);
        let g = grad_sensing_wrt_j(&ch, &j, &phi, 0, &spec).unwrap();
        let expected = 0.5 * (0.9f64 * 1.3).powi(2);
        assert!((g[(0, 0)].re - expected).abs() < 1e-12);
    }

    #[test]
    fn theta_gradient_vanishes_without_ris() {
        let ch = scalar_channels(1.0, 1.0, 0.0);
        let j =
            TransmitCovariances::from_mats(vec![CMat::from_element(1, 1, C64::new(0.5, 0.0)), CMat::zeros(1, 1)], 1)
                .unwrap();
        let g = grad_augmented_wrt_theta(&ch, &j, &StarRisProfile::equal_split(1)).unwrap();
        assert_eq!(g.norm(), 0.0);
    }
}
