//! Feasibility operators: water-filling projection of the covariances, the
//! per-element power-splitting projection of the metasurface profile and the
//! sensing-SINR-optimal receive combiner.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};
use crate::model::{SensingSpec, StarRisProfile, TransmitCovariances};
use crate::scenario::{ChannelSet, SystemVariant};

/// Inputs whose asymmetry exceeds this (relative to their largest entry) are
/// rejected rather than silently symmetrized.
const HERMITIAN_TOLERANCE: f64 = 1e-8;

/// Smallest water level `μ ≥ 0` with `Σ max(λ_i - μ, 0) ≤ budget`.
pub fn water_level(eigenvalues: &[f64], budget: f64) -> f64 {
    let positive: f64 = eigenvalues.iter().filter(|&&v| v > 0.0).sum();
    if positive <= budget {
        return 0.0;
    }
    let mut sorted: Vec<f64> = eigenvalues.iter().copied().filter(|&v| v > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // With the top `n` eigenvalues active, μ = (Σ_top - budget) / n; it is the
    // answer once it falls between the n-th and (n+1)-th eigenvalue.
    let mut prefix = 0.0;
    for n in 1..=sorted.len() {
        prefix += sorted[n - 1];
        let mu = (prefix - budget) / n as f64;
        let next = sorted.get(n).copied().unwrap_or(0.0);
        if mu >= next && mu <= sorted[n - 1] {
            return mu.max(0.0);
        }
    }
    ((prefix - budget) / sorted.len() as f64).max(0.0)
}

/// Euclidean projection onto `{J̄_ϖ ⪰ 0, Σ_ϖ tr J̄_ϖ ≤ P_max}`.
pub fn project_covariances(raw: &[CMat], n_users: usize, p_max: f64) -> Result<TransmitCovariances> {
    let mut decomps = Vec::with_capacity(raw.len());
    for (i, m) in raw.iter().enumerate() {
        if !linalg::is_finite(m) {
            return Err(Error::NonFinite("covariance projection input"));
        }
        let scale = linalg::max_abs(m).max(1.0);
        if linalg::max_asymmetry(m) > HERMITIAN_TOLERANCE * scale {
            return Err(Error::Contract(format!(
                "covariance {i} is not Hermitian (asymmetry {:.3e})",
                linalg::max_asymmetry(m)
            )));
        }
        decomps.push(linalg::hermitian_eigen(m));
    }
    let all: Vec<f64> = decomps.iter().flat_map(|(v, _)| v.iter().copied()).collect();
    let mu = water_level(&all, p_max);
    let mats = decomps
        .iter()
        .map(|(values, vectors)| {
            let clipped: Vec<f64> = values.iter().map(|&v| (v - mu).max(0.0)).collect();
            linalg::from_eigen(&clipped, vectors)
        })
        .collect();
    TransmitCovariances::from_mats(mats, n_users)
}

fn random_unit_pair<R: Rng>(rng: &mut R) -> (C64, C64) {
    let split: f64 = rng.random::<f64>().sqrt();
    let a = C64::from_polar(split, rng.random::<f64>() * std::f64::consts::TAU);
    let b = C64::from_polar(
        (1.0 - split * split).max(0.0).sqrt(),
        rng.random::<f64>() * std::f64::consts::TAU,
    );
    (a, b)
}

fn random_phase<R: Rng>(rng: &mut R) -> C64 {
    C64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
}

/// Per-element projection onto `|θ_mR|² + |θ_mT|² = 1`; an all-zero pair is
/// replaced by a random point of the unit sphere in `C²`.
pub fn project_star_profile<R: Rng>(raw: &StarRisProfile, rng: &mut R) -> StarRisProfile {
    let n = raw.len();
    let mut out = StarRisProfile::zeros(n);
    for m in 0..n {
        let (r, t) = (raw.theta_r[m], raw.theta_t[m]);
        let norm = (r.norm_sqr() + t.norm_sqr()).sqrt();
        let (r, t) = if norm > 0.0 {
            (r / norm, t / norm)
        } else {
            random_unit_pair(rng)
        };
        // renormalize so the pair sits on the sphere to rounding
        let fix = (r.norm_sqr() + t.norm_sqr()).sqrt();
        out.theta_r[m] = r / fix;
        out.theta_t[m] = t / fix;
    }
    out
}

pub fn project_stacked<R: Rng>(raw: &CVec, rng: &mut R) -> Result<StarRisProfile> {
    Ok(project_star_profile(&StarRisProfile::from_stacked(raw)?, rng))
}

/// Number of reflection-only elements under the conventional-RIS split; the
/// rest are transmission-only.
pub fn cris_reflection_count(n_elements: usize) -> usize {
    n_elements / 2
}

/// Projection for the conventional-RIS benchmark: the first half of the
/// elements reflect only, the second half transmit only, each with unit
/// modulus.
pub fn crirs_project_profile<R: Rng>(
    raw: &StarRisProfile,
    variant: SystemVariant,
    rng: &mut R,
) -> Result<StarRisProfile> {
    if variant != SystemVariant::Cris {
        return Err(Error::Contract(format!(
            "conventional-RIS projection called for the {variant} variant"
        )));
    }
    let n = raw.len();
    let split = cris_reflection_count(n);
    let mut out = StarRisProfile::zeros(n);
    let unit = |z: C64, rng: &mut R| {
        let mag = z.norm();
        if mag > 0.0 {
            z / mag
        } else {
            random_phase(rng)
        }
    };
    for m in 0..n {
        if m < split {
            out.theta_r[m] = unit(raw.theta_r[m], rng);
        } else {
            out.theta_t[m] = unit(raw.theta_t[m], rng);
        }
    }
    Ok(out)
}

/// Dispatches the metasurface projection for a system variant. Without a
/// metasurface the profile is returned unchanged.
pub fn project_profile<R: Rng>(raw: &StarRisProfile, variant: SystemVariant, rng: &mut R) -> StarRisProfile {
    match variant {
        SystemVariant::Star => project_star_profile(raw, rng),
        SystemVariant::Cris => crirs_project_profile(raw, variant, rng).expect("variant checked"),
        SystemVariant::NoRis => raw.clone(),
    }
}

/// Numerator `ᾱ V_Rl Σ V_Rl^H` and denominator
/// `I + ᾱ Σ_{j≠l} V_Rj Σ V_Rj^H + G Σ G^H` of the echo-SINR Rayleigh quotient.
pub fn beamformer_quotient_matrices(channels: &ChannelSet, sigma: &CMat, l: usize, mean_rcs: f64) -> (CMat, CMat) {
    let n_r = channels.n_rx();
    let mut numerator = CMat::zeros(n_r, n_r);
    let mut denominator = linalg::identity(n_r) + &channels.g_si * sigma * channels.g_si.adjoint();
    for target in 0..channels.n_targets() {
        let row = channels.v_t.row(target);
        let tx_power = (row * sigma * row.adjoint())[(0, 0)].re;
        let v = &channels.v_r[target];
        let term = (v * v.adjoint()).scale(mean_rcs * tx_power);
        if target == l {
            numerator = term;
        } else {
            denominator += term;
        }
    }
    (linalg::hermitian_part(&numerator), linalg::hermitian_part(&denominator))
}

/// Unit-norm maximizer of the echo SINR of target `l`: the principal
/// generalized eigenvector of (numerator, denominator), found by reducing the
/// positive definite denominator with its Cholesky factor. The global phase is
/// fixed so the largest entry is real and nonnegative.
pub fn optimal_receive_beamformer(
    channels: &ChannelSet,
    j: &TransmitCovariances,
    l: usize,
    spec: &SensingSpec,
) -> Result<CVec> {
    if l >= channels.n_targets() {
        return Err(Error::Index {
            what: "target",
            index: l,
            len: channels.n_targets(),
        });
    }
    optimal_receive_beamformer_with(channels, &j.total(), l, spec.mean_rcs)
}

pub(crate) fn optimal_receive_beamformer_with(
    channels: &ChannelSet,
    sigma: &CMat,
    l: usize,
    mean_rcs: f64,
) -> Result<CVec> {
    let n_r = channels.n_rx();
    let (numerator, denominator) = beamformer_quotient_matrices(channels, sigma, l, mean_rcs);
    let mut canonical = CVec::zeros(n_r);
    canonical[0] = C64::new(1.0, 0.0);
    if linalg::max_abs(&numerator) == 0.0 {
        return Ok(canonical);
    }
    let chol = linalg::cholesky(&denominator, "beamformer denominator")?;
    let lower = chol.l();
    let half = lower
        .solve_lower_triangular(&numerator)
        .ok_or(Error::NotPositiveDefinite("beamformer denominator"))?;
    let reduced = lower
        .solve_lower_triangular(&half.adjoint())
        .ok_or(Error::NotPositiveDefinite("beamformer denominator"))?;
    let (values, vectors) = linalg::hermitian_eigen(&reduced);
    if !(values[0] > 0.0) {
        return Ok(canonical);
    }
    let y = vectors.column(0).into_owned();
    let mut phi = lower
        .adjoint()
        .solve_upper_triangular(&y)
        .ok_or(Error::NotPositiveDefinite("beamformer denominator"))?;
    let norm = phi.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::NonFinite("receive beamformer"));
    }
    phi.unscale_mut(norm);
    linalg::fix_global_phase(&mut phi);
    let norm = phi.norm();
    phi.unscale_mut(norm);
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> CMat {
        CMat::from_element(1, 1, C64::new(v, 0.0))
    }

    #[test]
    fn water_filling_examples() {
        let out = project_covariances(&[scalar(5.0)], 1, 2.0).unwrap();
        assert!((out.mats()[0][(0, 0)].re - 2.0).abs() < 1e-12);
        let out = project_covariances(&[scalar(-1.0)], 1, 3.0).unwrap();
        assert_eq!(out.mats()[0][(0, 0)].re, 0.0);
        let out = project_covariances(&[scalar(3.0), scalar(1.0)], 1, 2.0).unwrap();
        assert!((out.mats()[0][(0, 0)].re - 2.0).abs() < 1e-12);
        assert!(out.mats()[1][(0, 0)].re.abs() < 1e-12);
        assert_eq!(water_level(&[3.0, 1.0], 2.0), 1.0);
        assert_eq!(water_level(&[0.5, 0.25], 2.0), 0.0);
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
            ],
        );
        assert!(matches!(project_covariances(&[m], 1, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn star_profile_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let raw = StarRisProfile {
            theta_r: CVec::from_vec(vec![C64::new(3.0, 0.0), C64::new(0.0, 0.0)]),
            theta_t: CVec::from_vec(vec![C64::new(4.0, 0.0), C64::new(0.0, 0.0)]),
        };
        let out = project_star_profile(&raw, &mut rng);
        assert!((out.theta_r[0] - C64::new(0.6, 0.0)).norm() < 1e-15);
        assert!((out.theta_t[0] - C64::new(0.8, 0.0)).norm() < 1e-15);
        assert!(out.max_split_violation() < 1e-12);
        let again = project_star_profile(&out, &mut rng);
        assert!((again.stacked() - out.stacked()).norm() < 1e-15);

        let mut rng_a = ChaCha8Rng::seed_from_u64(9);
        let mut rng_b = ChaCha8Rng::seed_from_u64(9);
        let zero = StarRisProfile::zeros(1);
        let a = project_star_profile(&zero, &mut rng_a);
        let b = project_star_profile(&zero, &mut rng_b);
        assert_eq!(a, b);
        assert!(a.max_split_violation() < 1e-12);
    }

    #[test]
    fn cris_projection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw = StarRisProfile {
            theta_r: CVec::from_vec(vec![
                C64::new(2.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.3, 0.1),
                C64::new(1.0, 1.0),
            ]),
            theta_t: CVec::from_vec(vec![
                C64::new(0.5, 0.5),
                C64::new(0.0, 0.0),
                C64::new(0.0, 2.0),
                C64::new(0.0, 0.0),
            ]),
        };
        let out = crirs_project_profile(&raw, SystemVariant::Cris, &mut rng).unwrap();
        assert!((out.theta_r[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(out.theta_t[0], C64::new(0.0, 0.0));
        assert!((out.theta_r[1].norm() - 1.0).abs() < 1e-15);
        assert!((out.theta_t[2] - C64::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(out.theta_r[2], C64::new(0.0, 0.0));
        assert!((out.theta_t[3].norm() - 1.0).abs() < 1e-15);
        assert!(out.max_split_violation() < 1e-12);
        assert!(crirs_project_profile(&raw, SystemVariant::Star, &mut rng).is_err());
    }

    #[test]
    fn zero_power_beamformer_is_canonical() {
        let ch = crate::model::tests::scalar_channels(1.0, 1.0, 0.2);
        let j = TransmitCovariances::zeros(1, 1, 1);
        let spec = SensingSpec {
            thresholds: vec![1.0],
            mean_rcs: 0.5,
        };
        let phi = optimal_receive_beamformer(&ch, &j, 0, &spec).unwrap();
        assert_eq!(phi[0], C64::new(1.0, 0.0));
    }
}
