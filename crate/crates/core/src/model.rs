//! Objective and constraint quantities: effective channels, per-user secrecy
//! rates, echo SINR and sensing rate, the sensing residual and the augmented
//! Lagrangian. Rates are in nats.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};
use crate::scenario::{ChannelSet, RisSide};

/// The `K + L` transmit covariances: communication matrices first, then the
/// sensing matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmitCovariances {
    mats: Vec<CMat>,
    n_users: usize,
}

impl TransmitCovariances {
    pub fn zeros(n_users: usize, n_targets: usize, n_tx: usize) -> Self {
        Self {
            mats: vec![CMat::zeros(n_tx, n_tx); n_users + n_targets],
            n_users,
        }
    }

    pub fn from_mats(mats: Vec<CMat>, n_users: usize) -> Result<Self> {
        if n_users > mats.len() {
            return Err(Error::Contract(format!(
                "{n_users} users but only {} covariance matrices",
                mats.len()
            )));
        }
        if let Some(first) = mats.first() {
            let n = first.nrows();
            if mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
                return Err(Error::Contract("covariances must share one square size".into()));
            }
        }
        Ok(Self { mats, n_users })
    }

    pub fn mats(&self) -> &[CMat] {
        &self.mats
    }

    pub fn into_mats(self) -> Vec<CMat> {
        self.mats
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_targets(&self) -> usize {
        self.mats.len() - self.n_users
    }

    pub fn n_tx(&self) -> usize {
        self.mats.first().map_or(0, |m| m.nrows())
    }

    pub fn comm(&self, k: usize) -> &CMat {
        &self.mats[k]
    }

    pub fn sensing(&self, l: usize) -> &CMat {
        &self.mats[self.n_users + l]
    }

    /// `Σ`, the sum of all covariances.
    pub fn total(&self) -> CMat {
        let n = self.n_tx();
        self.mats.iter().fold(CMat::zeros(n, n), |acc, m| acc + m)
    }

    /// `Σ_ck = Σ - J_ck`.
    pub fn interference_for(&self, k: usize) -> CMat {
        self.total() - &self.mats[k]
    }

    pub fn total_trace(&self) -> f64 {
        self.mats.iter().map(linalg::trace_re).sum()
    }

    /// Largest asymmetry and smallest eigenvalue over all matrices.
    pub fn hermitian_psd_violation(&self) -> (f64, f64) {
        let asym = self.mats.iter().map(linalg::max_asymmetry).fold(0.0, f64::max);
        let min_eig = self
            .mats
            .iter()
            .map(linalg::min_eigenvalue)
            .fold(f64::INFINITY, f64::min);
        (asym, min_eig)
    }

    pub fn is_feasible(&self, p_max: f64) -> bool {
        let (asym, min_eig) = self.hermitian_psd_violation();
        asym <= 1e-10 && min_eig >= -1e-9 && self.total_trace() <= p_max + 1e-9
    }

    /// `Σ_i c_i X_i` over covariance sets of equal shape.
    pub fn combine(terms: &[(f64, &TransmitCovariances)]) -> Self {
        let first = terms[0].1;
        let mats = (0..first.len())
            .map(|i| {
                let n = first.n_tx();
                terms
                    .iter()
                    .fold(CMat::zeros(n, n), |acc, (c, x)| acc + x.mats[i].scale(*c))
            })
            .collect();
        Self {
            mats,
            n_users: first.n_users,
        }
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        self.mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

/// Reflection and transmission coefficients of the metasurface.
#[derive(Clone, Debug, PartialEq)]
pub struct StarRisProfile {
    pub theta_r: CVec,
    pub theta_t: CVec,
}

impl StarRisProfile {
    /// Equal power split, `√0.5` on both sides.
    pub fn equal_split(n: usize) -> Self {
        let v = CVec::from_element(n, C64::new(0.5f64.sqrt(), 0.0));
        Self {
            theta_r: v.clone(),
            theta_t: v,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            theta_r: CVec::zeros(n),
            theta_t: CVec::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.theta_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_r.is_empty()
    }

    pub fn side(&self, side: RisSide) -> &CVec {
        match side {
            RisSide::Reflection => &self.theta_r,
            RisSide::Transmission => &self.theta_t,
        }
    }

    /// `[θ_R; θ_T]`.
    pub fn stacked(&self) -> CVec {
        let n = self.len();
        CVec::from_fn(2 * n, |i, _| if i < n { self.theta_r[i] } else { self.theta_t[i - n] })
    }

    pub fn from_stacked(v: &CVec) -> Result<Self> {
        if !v.len().is_multiple_of(2) {
            return Err(Error::Contract(format!("stacked profile length {} is odd", v.len())));
        }
        let n = v.len() / 2;
        Ok(Self {
            theta_r: v.rows(0, n).into_owned(),
            theta_t: v.rows(n, n).into_owned(),
        })
    }

    /// Largest deviation of `|θ_mR|² + |θ_mT|²` from one.
    pub fn max_split_violation(&self) -> f64 {
        self.theta_r
            .iter()
            .zip(self.theta_t.iter())
            .map(|(r, t)| (r.norm_sqr() + t.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn combine(terms: &[(f64, &StarRisProfile)]) -> Self {
        let n = terms[0].1.len();
        let mut out = Self::zeros(n);
        for (c, p) in terms {
            out.theta_r += p.theta_r.scale(*c);
            out.theta_t += p.theta_t.scale(*c);
        }
        out
    }
}

/// Unit-norm receive combiners, one per target.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceiveBeamformers {
    pub phis: Vec<CVec>,
}

impl ReceiveBeamformers {
    pub fn random<R: Rng>(n_rx: usize, n_targets: usize, rng: &mut R) -> Self {
        let phis = (0..n_targets)
            .map(|_| {
                let v = CVec::from_fn(n_rx, |_, _| {
                    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                });
                let norm = v.norm();
                v.unscale(norm)
            })
            .collect();
        Self { phis }
    }

    pub fn max_norm_violation(&self) -> f64 {
        self.phis
            .iter()
            .map(|p| (p.norm_squared() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-target sensing-rate thresholds `Δ_sl` (nats) and mean RCS.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingSpec {
    pub thresholds: Vec<f64>,
    pub mean_rcs: f64,
}

/// Lagrange multipliers `ν` and penalty parameter `ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Penalty {
    pub nu: Vec<f64>,
    pub rho: f64,
}

impl Penalty {
    pub fn new(n_targets: usize, rho: f64) -> Self {
        Self {
            nu: vec![0.0; n_targets],
            rho,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::Domain(format!("penalty ρ must be positive, got {}", self.rho)));
        }
        Ok(())
    }
}

fn check_user(channels: &ChannelSet, k: usize) -> Result<()> {
    if k >= channels.n_users() {
        return Err(Error::Index {
            what: "user",
            index: k,
            len: channels.n_users(),
        });
    }
    Ok(())
}

fn check_target(channels: &ChannelSet, l: usize) -> Result<()> {
    if l >= channels.n_targets() {
        return Err(Error::Index {
            what: "target",
            index: l,
            len: channels.n_targets(),
        });
    }
    Ok(())
}

/// `Z_k = H_Bk + H_Sk diag(θ_k) H_BS`, with `θ_k` chosen by the user's side.
pub fn effective_channel(channels: &ChannelSet, theta: &StarRisProfile, k: usize) -> Result<CMat> {
    check_user(channels, k)?;
    let theta_k = theta.side(channels.user_sides[k]);
    if theta_k.len() != channels.n_ris_elements() {
        return Err(Error::Contract(format!(
            "profile has {} elements, channels have {}",
            theta_k.len(),
            channels.n_ris_elements()
        )));
    }
    let mut scaled = channels.h_sk[k].clone();
    for (m, mut col) in scaled.column_iter_mut().enumerate() {
        col *= theta_k[m];
    }
    Ok(&channels.h_bk[k] + scaled * &channels.h_bs)
}

pub fn effective_channels(channels: &ChannelSet, theta: &StarRisProfile) -> Result<Vec<CMat>> {
    (0..channels.n_users())
        .map(|k| effective_channel(channels, theta, k))
        .collect()
}

/// Secrecy rate of user `k` given its effective channel.
pub fn secrecy_rate_with(z_k: &CMat, v_t: &CMat, j: &TransmitCovariances, k: usize) -> Result<f64> {
    let j_ck = j.comm(k);
    let sigma_ck = j.interference_for(k);
    let n_u = z_k.nrows();
    let n_l = v_t.nrows();
    let a_kk = linalg::identity(n_u) + z_k * &sigma_ck * z_k.adjoint();
    let b_k = linalg::identity(n_l) + v_t * &sigma_ck * v_t.adjoint();
    let legit = linalg::log_det_ratio(&(z_k * j_ck * z_k.adjoint()), &a_kk, "user rate")?;
    let eaves = linalg::log_det_ratio(&(v_t * j_ck * v_t.adjoint()), &b_k, "eavesdropper rate")?;
    let rate = legit - eaves;
    if !rate.is_finite() {
        return Err(Error::NonFinite("secrecy rate"));
    }
    Ok(rate)
}

/// `R_ck`, not clamped at zero.
pub fn secrecy_rate(channels: &ChannelSet, j: &TransmitCovariances, theta: &StarRisProfile, k: usize) -> Result<f64> {
    let z = effective_channel(channels, theta, k)?;
    secrecy_rate_with(&z, &channels.v_t, j, k)
}

/// `Σ_k R_ck` as differences of `ln det(I + H Σ H^H)` terms, sharing the
/// eavesdropper's full-covariance term across users.
pub fn sum_secrecy_rate_with(zs: &[CMat], v_t: &CMat, j: &TransmitCovariances) -> Result<f64> {
    let sigma = j.total();
    let log_det_at =
        |h: &CMat, cov: &CMat, ctx| linalg::log_det_hpd(&(linalg::identity(h.nrows()) + h * cov * h.adjoint()), ctx);
    let eaves_total = log_det_at(v_t, &sigma, "eavesdropper rate")?;
    let mut sum = 0.0;
    for (k, z) in zs.iter().enumerate() {
        let sigma_ck = &sigma - j.comm(k);
        let legit = log_det_at(z, &sigma, "user rate")? - log_det_at(z, &sigma_ck, "user rate")?;
        let eaves = eaves_total - log_det_at(v_t, &sigma_ck, "eavesdropper rate")?;
        sum += legit - eaves;
    }
    if !sum.is_finite() {
        return Err(Error::NonFinite("secrecy rate"));
    }
    Ok(sum)
}

pub fn sum_secrecy_rate(channels: &ChannelSet, j: &TransmitCovariances, theta: &StarRisProfile) -> Result<f64> {
    let zs = effective_channels(channels, theta)?;
    sum_secrecy_rate_with(&zs, &channels.v_t, j)
}

/// Echo quantities seen through combiner `φ`: per-target echo powers
/// `φ^H V_Rj Σ V_Rj^H φ`, the self-interference power and `‖φ‖²`.
pub(crate) struct EchoPowers {
    pub per_target: Vec<f64>,
    pub self_interference: f64,
    pub phi_norm_sq: f64,
}

pub(crate) fn echo_powers(channels: &ChannelSet, sigma: &CMat, phi: &CVec) -> EchoPowers {
    let per_target = (0..channels.n_targets())
        .map(|j| {
            let gain = phi.dotc(&channels.v_r[j]).norm_sqr();
            let row = channels.v_t.row(j);
            let tx = (row * sigma * row.adjoint())[(0, 0)].re;
            gain * tx
        })
        .collect();
    let g_phi = channels.g_si.adjoint() * phi;
    EchoPowers {
        per_target,
        self_interference: linalg::quad_form(&g_phi, sigma),
        phi_norm_sq: phi.norm_squared(),
    }
}

impl EchoPowers {
    /// Numerator and denominator of the echo SINR of target `l`.
    pub fn sinr_parts(&self, l: usize, mean_rcs: f64) -> (f64, f64) {
        let others: f64 = self
            .per_target
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != l)
            .map(|(_, p)| p)
            .sum();
        let num = mean_rcs * self.per_target[l];
        let den = mean_rcs * others + self.self_interference + self.phi_norm_sq;
        (num, den)
    }
}

pub(crate) fn sensing_sinr_with(channels: &ChannelSet, sigma: &CMat, phi: &CVec, l: usize, mean_rcs: f64) -> f64 {
    let (num, den) = echo_powers(channels, sigma, phi).sinr_parts(l, mean_rcs);
    (num / den).max(0.0)
}

/// Post-combining echo SINR `γ_sl`.
pub fn sensing_sinr(
    channels: &ChannelSet,
    j: &TransmitCovariances,
    phi: &CVec,
    l: usize,
    spec: &SensingSpec,
) -> Result<f64> {
    check_target(channels, l)?;
    Ok(sensing_sinr_with(channels, &j.total(), phi, l, spec.mean_rcs))
}

/// `R_sl = ln(1 + γ_sl)`.
pub fn sensing_rate(
    channels: &ChannelSet,
    j: &TransmitCovariances,
    phi: &CVec,
    l: usize,
    spec: &SensingSpec,
) -> Result<f64> {
    sensing_sinr(channels, j, phi, l, spec).map(f64::ln_1p)
}

pub fn sensing_rates_with(channels: &ChannelSet, sigma: &CMat, phis: &ReceiveBeamformers, mean_rcs: f64) -> Vec<f64> {
    phis.phis
        .iter()
        .enumerate()
        .map(|(l, phi)| sensing_sinr_with(channels, sigma, phi, l, mean_rcs).ln_1p())
        .collect()
}

/// `Δ_sl + τ_l - R_sl`.
pub fn residual_from_rate(sensing_rate: f64, threshold: f64, tau: f64) -> f64 {
    threshold + tau - sensing_rate
}

pub fn constraint_residual(
    channels: &ChannelSet,
    j: &TransmitCovariances,
    phi: &CVec,
    l: usize,
    spec: &SensingSpec,
    tau: f64,
) -> Result<f64> {
    if tau < 0.0 {
        return Err(Error::Domain(format!("slack τ must be nonnegative, got {tau}")));
    }
    let rate = sensing_rate(channels, j, phi, l, spec)?;
    Ok(residual_from_rate(rate, spec.thresholds[l], tau))
}

/// `Σ_k R_ck - Σ_l [ν_l G_l + G_l² / (2ρ)]`.
pub fn augmented_from_parts(sum_rate: f64, residuals: &[f64], penalty: &Penalty) -> Result<f64> {
    penalty.check()?;
    let penalty_sum: f64 = residuals
        .iter()
        .zip(&penalty.nu)
        .map(|(g, nu)| nu * g + 0.5 * g * g / penalty.rho)
        .sum();
    Ok(sum_rate - penalty_sum)
}

pub fn residuals_with(
    channels: &ChannelSet,
    sigma: &CMat,
    phis: &ReceiveBeamformers,
    spec: &SensingSpec,
    tau: &[f64],
) -> Vec<f64> {
    sensing_rates_with(channels, sigma, phis, spec.mean_rcs)
        .into_iter()
        .enumerate()
        .map(|(l, r)| residual_from_rate(r, spec.thresholds[l], tau[l]))
        .collect()
}

/// The augmented Lagrangian `R_{ν,ρ}(J, θ, τ)`.
#[allow(clippy::too_many_arguments)]
pub fn augmented_objective(
    channels: &ChannelSet,
    j: &TransmitCovariances,
    theta: &StarRisProfile,
    tau: &[f64],
    penalty: &Penalty,
    phis: &ReceiveBeamformers,
    spec: &SensingSpec,
) -> Result<f64> {
    penalty.check()?;
    if tau.iter().any(|&t| t < 0.0) {
        return Err(Error::Domain("slacks τ must be nonnegative".into()));
    }
    let sum_rate = sum_secrecy_rate(channels, j, theta)?;
    let residuals = residuals_with(channels, &j.total(), phis, spec, tau);
    augmented_from_parts(sum_rate, &residuals, penalty)
}
