//! Independent reference computations used by the `check` command and the
//! test suites: central finite differences for every gradient, a Dykstra
//! alternating-projection solver for the covariance projection, random
//! sampling for the receive combiner, a 1-D scan for the slack update and an
//! exhaustive grid search on the all-scalar instance.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::gradients;
use crate::linalg::{self, CMat, CVec, C64};
use crate::model::{self, Penalty, ReceiveBeamformers, SensingSpec, StarRisProfile, TransmitCovariances};
use crate::optimizer::{self, SolverOptions};
use crate::projections;
use crate::scenario::{ChannelSet, RisSide, ScenarioConfig, SystemVariant};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InstanceDims {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_user_antennas: usize,
    pub n_ris_elements: usize,
    pub n_users: usize,
    pub n_targets: usize,
}

impl InstanceDims {
    /// Uniform draw with `N_T, N_U, N_R ≤ 4`, `N_S ≤ 8`, `K, L ≤ 2`.
    pub fn random_small<R: Rng>(rng: &mut R) -> Self {
        Self {
            n_tx: rng.random_range(1..=4),
            n_rx: rng.random_range(1..=4),
            n_user_antennas: rng.random_range(1..=4),
            n_ris_elements: rng.random_range(1..=8),
            n_users: rng.random_range(1..=2),
            n_targets: rng.random_range(1..=2),
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> CMat {
    let s = std * 0.5f64.sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        C64::new(
            rng.sample::<f64, _>(StandardNormal) * s,
            rng.sample::<f64, _>(StandardNormal) * s,
        )
    })
}

fn unit_vector<R: Rng>(rng: &mut R, n: usize) -> CVec {
    let v = gaussian(rng, n, 1, 1.0).column(0).into_owned();
    let norm = v.norm();
    v.unscale(norm)
}

/// Unit-variance Gaussian channels of the given size; users alternate between
/// the reflection and transmission sides.
pub fn random_channels<R: Rng>(dims: InstanceDims, rng: &mut R) -> ChannelSet {
    let user_sides = (0..dims.n_users)
        .map(|k| {
            if k % 2 == 0 {
                RisSide::Reflection
            } else {
                RisSide::Transmission
            }
        })
        .collect();
    ChannelSet {
        h_bs: gaussian(rng, dims.n_ris_elements, dims.n_tx, 1.0),
        h_bk: (0..dims.n_users)
            .map(|_| gaussian(rng, dims.n_user_antennas, dims.n_tx, 1.0))
            .collect(),
        h_sk: (0..dims.n_users)
            .map(|_| gaussian(rng, dims.n_user_antennas, dims.n_ris_elements, 1.0))
            .collect(),
        v_t: gaussian(rng, dims.n_targets, dims.n_tx, 1.0),
        v_r: (0..dims.n_targets)
            .map(|_| gaussian(rng, dims.n_rx, 1, 1.0).column(0).into_owned())
            .collect(),
        g_si: gaussian(rng, dims.n_rx, dims.n_tx, 0.3),
        user_sides,
    }
}

/// Random PSD covariances with total trace `total`.
pub fn random_covariances<R: Rng>(
    n_users: usize,
    n_targets: usize,
    n_tx: usize,
    total: f64,
    rng: &mut R,
) -> TransmitCovariances {
    let mats: Vec<CMat> = (0..n_users + n_targets)
        .map(|_| {
            let b = gaussian(rng, n_tx, n_tx, 1.0);
            &b * b.adjoint()
        })
        .collect();
    let trace: f64 = mats.iter().map(linalg::trace_re).sum();
    let scaled = mats.into_iter().map(|m| m.scale(total / trace)).collect();
    TransmitCovariances::from_mats(scaled, n_users).expect("consistent sizes")
}

pub fn random_profile<R: Rng>(n: usize, rng: &mut R) -> StarRisProfile {
    let raw = StarRisProfile {
        theta_r: gaussian(rng, n, 1, 1.0).column(0).into_owned(),
        theta_t: gaussian(rng, n, 1, 1.0).column(0).into_owned(),
    };
    projections::project_star_profile(&raw, rng)
}

pub fn random_beamformers<R: Rng>(n_rx: usize, n_targets: usize, rng: &mut R) -> ReceiveBeamformers {
    ReceiveBeamformers {
        phis: (0..n_targets).map(|_| unit_vector(rng, n_rx)).collect(),
    }
}

/// One random point at which every gradient is evaluated.
#[derive(Clone, Debug)]
pub struct GradientInstance {
    pub channels: ChannelSet,
    pub covariances: TransmitCovariances,
    pub profile: StarRisProfile,
    pub beamformers: ReceiveBeamformers,
    pub tau: Vec<f64>,
    pub penalty: Penalty,
    pub spec: SensingSpec,
}

impl GradientInstance {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let dims = InstanceDims::random_small(rng);
        let channels = random_channels(dims, rng);
        let covariances = random_covariances(dims.n_users, dims.n_targets, dims.n_tx, rng.random_range(0.5..2.0), rng);
        let profile = random_profile(dims.n_ris_elements, rng);
        let beamformers = random_beamformers(dims.n_rx, dims.n_targets, rng);
        let tau = (0..dims.n_targets).map(|_| rng.random_range(0.0..0.5)).collect();
        let penalty = Penalty {
            nu: (0..dims.n_targets).map(|_| rng.random_range(-1.0..1.0)).collect(),
            rho: rng.random_range(0.5..5.0),
        };
        let spec = SensingSpec {
            thresholds: (0..dims.n_targets).map(|_| rng.random_range(0.5..2.0)).collect(),
            mean_rcs: 0.5,
        };
        Self {
            channels,
            covariances,
            profile,
            beamformers,
            tau,
            penalty,
            spec,
        }
    }
}

/// Perturbation directions spanning the Hermitian matrices, with the complex
/// coefficient each directional derivative contributes to the gradient.
fn hermitian_basis(n: usize) -> Vec<(CMat, usize, usize, C64)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            if i == j {
                let mut e = CMat::zeros(n, n);
                e[(i, i)] = C64::new(1.0, 0.0);
                out.push((e, i, i, C64::new(1.0, 0.0)));
            } else {
                let mut e = CMat::zeros(n, n);
                e[(i, j)] = C64::new(1.0, 0.0);
                e[(j, i)] = C64::new(1.0, 0.0);
                out.push((e, i, j, C64::new(0.5, 0.0)));
                let mut e = CMat::zeros(n, n);
                e[(i, j)] = C64::new(0.0, 1.0);
                e[(j, i)] = C64::new(0.0, -1.0);
                out.push((e, i, j, C64::new(0.0, 0.5)));
            }
        }
    }
    out
}

/// Central-difference gradient of `f` with respect to the Hermitian matrix
/// `x`, in the convention `df = Re⟨∇, dX⟩`.
pub fn fd_hermitian_gradient(x: &CMat, h: f64, mut f: impl FnMut(&CMat) -> f64) -> CMat {
    let n = x.nrows();
    let mut grad = CMat::zeros(n, n);
    for (dir, i, j, coeff) in hermitian_basis(n) {
        let plus = f(&(x + dir.scale(h)));
        let minus = f(&(x - dir.scale(h)));
        let d = (plus - minus) / (2.0 * h);
        grad[(i, j)] += coeff * d;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            grad[(j, i)] = grad[(i, j)].conj();
        }
    }
    grad
}

/// Central-difference Wirtinger gradient `∂f/∂x*` of a real function of a
/// complex vector.
pub fn fd_wirtinger_gradient(x: &CVec, h: f64, mut f: impl FnMut(&CVec) -> f64) -> CVec {
    let mut grad = CVec::zeros(x.len());
    for m in 0..x.len() {
        let mut d = [0.0; 2];
        for (slot, dir) in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)].into_iter().enumerate() {
            let mut plus = x.clone();
            plus[m] += dir * h;
            let mut minus = x.clone();
            minus[m] -= dir * h;
            d[slot] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        grad[m] = C64::new(d[0], d[1]) * 0.5;
    }
    grad
}

fn relative_error(analytic: &[CMat], reference: &[CMat]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    let scale: f64 = reference.iter().map(|m| m.norm_squared()).sum();
    if scale == 0.0 {
        diff.sqrt()
    } else {
        (diff / scale).sqrt()
    }
}

fn with_replaced(j: &TransmitCovariances, varpi: usize, m: &CMat) -> TransmitCovariances {
    let mut mats = j.mats().to_vec();
    mats[varpi] = m.clone();
    TransmitCovariances::from_mats(mats, j.n_users()).expect("same shapes")
}

/// Worst relative errors of each closed-form gradient against finite
/// differences at one instance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientErrors {
    pub secrecy: f64,
    pub sensing: f64,
    pub augmented: f64,
    pub theta: f64,
}

impl GradientErrors {
    pub fn worst(&self) -> f64 {
        self.secrecy.max(self.sensing).max(self.augmented).max(self.theta)
    }
}

pub fn check_gradients(inst: &GradientInstance, h: f64) -> Result<GradientErrors> {
    let ch = &inst.channels;
    let j = &inst.covariances;
    let theta = &inst.profile;
    let mut errors = GradientErrors::default();

    // per-user secrecy rate, every covariance
    for k in 0..ch.n_users() {
        let mut analytic = Vec::new();
        let mut reference = Vec::new();
        for varpi in 0..j.len() {
            analytic.push(gradients::grad_secrecy_wrt_j(ch, j, theta, k, varpi)?);
            reference.push(fd_hermitian_gradient(&j.mats()[varpi], h, |m| {
                model::secrecy_rate(ch, &with_replaced(j, varpi, m), theta, k).unwrap_or(f64::NAN)
            }));
        }
        errors.secrecy = errors.secrecy.max(relative_error(&analytic, &reference));
    }

    // per-target sensing rate; depends on Σ only, so perturb the first matrix
    for l in 0..ch.n_targets() {
        let phi = &inst.beamformers.phis[l];
        let analytic = vec![gradients::grad_sensing_wrt_j(ch, j, phi, l, &inst.spec)?];
        let reference = vec![fd_hermitian_gradient(&j.mats()[0], h, |m| {
            model::sensing_rate(ch, &with_replaced(j, 0, m), phi, l, &inst.spec).unwrap_or(f64::NAN)
        })];
        errors.sensing = errors.sensing.max(relative_error(&analytic, &reference));
    }

    let analytic =
        gradients::grad_augmented_wrt_j(ch, j, theta, &inst.tau, &inst.penalty, &inst.beamformers, &inst.spec)?;
    let reference: Vec<CMat> = (0..j.len())
        .map(|varpi| {
            fd_hermitian_gradient(&j.mats()[varpi], h, |m| {
                model::augmented_objective(
                    ch,
                    &with_replaced(j, varpi, m),
                    theta,
                    &inst.tau,
                    &inst.penalty,
                    &inst.beamformers,
                    &inst.spec,
                )
                .unwrap_or(f64::NAN)
            })
        })
        .collect();
    errors.augmented = relative_error(&analytic.mats, &reference);

    let analytic = gradients::grad_augmented_wrt_theta(ch, j, theta)?.stacked();
    let reference = fd_wirtinger_gradient(&theta.stacked(), h, |v| {
        let p = StarRisProfile::from_stacked(v).expect("even length");
        model::augmented_objective(ch, j, &p, &inst.tau, &inst.penalty, &inst.beamformers, &inst.spec)
            .unwrap_or(f64::NAN)
    });
    let diff = (&analytic - &reference).norm();
    let scale = reference.norm();
    errors.theta = if scale == 0.0 { diff } else { diff / scale };
    Ok(errors)
}

/// Dykstra's alternating projection between the product of PSD cones and the
/// halfspace `Σ tr ≤ P`; converges to the Euclidean projection onto their
/// intersection.
pub fn dykstra_projection(raw: &[CMat], p_max: f64, max_iterations: usize, tolerance: f64) -> Vec<CMat> {
    let m = raw.len();
    let n = raw.first().map_or(0, |x| x.nrows());
    let mut x: Vec<CMat> = raw.iter().map(linalg::hermitian_part).collect();
    let mut p: Vec<CMat> = vec![CMat::zeros(n, n); m];
    let mut q: Vec<CMat> = vec![CMat::zeros(n, n); m];
    let count = (m * n) as f64;
    for _ in 0..max_iterations {
        // PSD cone
        let y: Vec<CMat> = x
            .iter()
            .zip(&p)
            .map(|(xi, pi)| {
                let (values, vectors) = linalg::hermitian_eigen(&(xi + pi));
                let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
                linalg::from_eigen(&clipped, &vectors)
            })
            .collect();
        for i in 0..m {
            p[i] = &x[i] + &p[i] - &y[i];
        }
        // trace halfspace
        let shifted: Vec<CMat> = y.iter().zip(&q).map(|(yi, qi)| yi + qi).collect();
        let excess: f64 = shifted.iter().map(linalg::trace_re).sum::<f64>() - p_max;
        let shift = excess.max(0.0) / count;
        let next: Vec<CMat> = shifted.iter().map(|s| s - linalg::identity(n).scale(shift)).collect();
        for i in 0..m {
            q[i] = &shifted[i] - &next[i];
        }
        let change: f64 = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt();
        x = next;
        if change < tolerance {
            break;
        }
    }
    x
}

/// Water-filling projection against the Dykstra reference on one random
/// instance; returns the Frobenius distance between the two answers.
pub fn check_projection_instance<R: Rng>(rng: &mut R) -> Result<f64> {
    let m = rng.random_range(1..=4);
    let n = rng.random_range(1..=4);
    let p_max = rng.random_range(0.1..3.0);
    let raw: Vec<CMat> = (0..m)
        .map(|_| {
            let g = gaussian(rng, n, n, 1.0);
            linalg::hermitian_part(&g)
        })
        .collect();
    let fast = projections::project_covariances(&raw, 1, p_max)?;
    let reference = dykstra_projection(&raw, p_max, 200_000, 1e-14);
    Ok(fast
        .mats()
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        .sqrt())
}

/// Echo SINR of the optimal combiner and the best of `samples` random unit
/// combiners on one random instance.
pub fn check_beamformer_instance<R: Rng>(rng: &mut R, samples: usize) -> Result<(f64, f64, f64)> {
    let dims = InstanceDims::random_small(rng);
    let channels = random_channels(dims, rng);
    let j = random_covariances(dims.n_users, dims.n_targets, dims.n_tx, 1.0, rng);
    let spec = SensingSpec {
        thresholds: vec![1.0; dims.n_targets],
        mean_rcs: 0.5,
    };
    let l = rng.random_range(0..dims.n_targets);
    let phi = projections::optimal_receive_beamformer(&channels, &j, l, &spec)?;
    let best = model::sensing_sinr(&channels, &j, &phi, l, &spec)?;
    let mut sampled = f64::NEG_INFINITY;
    for _ in 0..samples {
        let v = unit_vector(rng, dims.n_rx);
        sampled = sampled.max(model::sensing_sinr(&channels, &j, &v, l, &spec)?);
    }
    Ok((best, sampled, (phi.norm() - 1.0).abs()))
}

/// Maximizer of the augmented objective's τ-section,
/// `-(ν G + G² / 2ρ)` with `G = Δ + τ - r`, by scanning `[0, r + 10]`.
pub fn tau_scan(r: f64, delta: f64, nu: f64, rho: f64, resolution: f64) -> f64 {
    let upper = (r + 10.0).max(0.0);
    let steps = (upper / resolution).ceil() as usize;
    let section = |tau: f64| {
        let g = delta + tau - r;
        -(nu * g + 0.5 * g * g / rho)
    };
    let mut best = (0.0, section(0.0));
    for i in 1..=steps {
        let tau = (i as f64 * resolution).min(upper);
        let v = section(tau);
        if v > best.1 {
            best = (tau, v);
        }
    }
    best.0
}

/// The all-scalar instance: one single-antenna user on the reflection side,
/// one target, one metasurface element, noise-normalized gains of order one.
pub fn toy_channels() -> ChannelSet {
    let c = |re: f64, im: f64| CMat::from_element(1, 1, C64::new(re, im));
    ChannelSet {
        h_bs: c(0.9, 0.3),
        h_bk: vec![c(0.6, -0.2)],
        h_sk: vec![c(0.5, 0.7)],
        v_t: c(0.8, 0.0),
        v_r: vec![CVec::from_element(1, C64::new(1.0, 0.0))],
        g_si: c(0.1, 0.0),
        user_sides: vec![RisSide::Reflection],
    }
}

/// Scenario record matching [`toy_channels`].
pub fn toy_config() -> ScenarioConfig {
    ScenarioConfig {
        n_tx: 1,
        n_rx: 1,
        n_user_antennas: 1,
        n_ris_elements: 1,
        n_users: 1,
        n_targets: 1,
        p_max: 2.0,
        sensing_sinr_threshold: 0.5,
        mean_rcs: 0.5,
        reflection_user_indices: vec![0],
        system_variant: SystemVariant::Star,
        ..ScenarioConfig::default()
    }
}

/// Best feasible point found by the grid search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyOptimum {
    pub value: f64,
    pub j_c: f64,
    pub j_s: f64,
    pub theta_r_magnitude: f64,
    pub theta_r_phase: f64,
}

fn toy_objective(ch: &ChannelSet, spec: &SensingSpec, x: [f64; 4]) -> Option<f64> {
    let [j_c, j_s, mag, phase] = x;
    let j = TransmitCovariances::from_mats(
        vec![
            CMat::from_element(1, 1, C64::new(j_c, 0.0)),
            CMat::from_element(1, 1, C64::new(j_s, 0.0)),
        ],
        1,
    )
    .ok()?;
    let profile = StarRisProfile {
        theta_r: CVec::from_element(1, C64::from_polar(mag, phase)),
        theta_t: CVec::from_element(1, C64::new((1.0 - mag * mag).max(0.0).sqrt(), 0.0)),
    };
    let phi = CVec::from_element(1, C64::new(1.0, 0.0));
    let rate = model::sensing_rate(ch, &j, &phi, 0, spec).ok()?;
    if rate < spec.thresholds[0] {
        return None;
    }
    model::sum_secrecy_rate(ch, &j, &profile).ok()
}

/// Coarse-to-fine exhaustive search over `(J_c, J_s, |θ_R|, ∠θ_R)` with
/// `J_c + J_s ≤ P_max` and the sensing constraint enforced exactly.
pub fn toy_grid_oracle(ch: &ChannelSet, p_max: f64, spec: &SensingSpec) -> Option<ToyOptimum> {
    let tau = std::f64::consts::TAU;
    let mut lo = [0.0, 0.0, 0.0, 0.0];
    let mut hi = [p_max, p_max, 1.0, tau];
    let per_axis = 24usize;
    let mut best: Option<([f64; 4], f64)> = None;
    for _round in 0..8 {
        let axis = |d: usize, i: usize| lo[d] + (hi[d] - lo[d]) * i as f64 / (per_axis - 1) as f64;
        for a in 0..per_axis {
            for b in 0..per_axis {
                let (j_c, j_s) = (axis(0, a), axis(1, b));
                if j_c + j_s > p_max || j_c < 0.0 || j_s < 0.0 {
                    continue;
                }
                for c in 0..per_axis {
                    let mag = axis(2, c);
                    if !(0.0..=1.0).contains(&mag) {
                        continue;
                    }
                    for d in 0..per_axis {
                        let x = [j_c, j_s, mag, axis(3, d)];
                        if let Some(v) = toy_objective(ch, spec, x) {
                            if best.is_none_or(|(_, bv)| v > bv) {
                                best = Some((x, v));
                            }
                        }
                    }
                }
            }
        }
        let (x, _) = best?;
        for d in 0..4 {
            let width = (hi[d] - lo[d]) / (per_axis - 1) as f64 * 2.0;
            lo[d] = x[d] - width;
            hi[d] = x[d] + width;
        }
        lo[0] = lo[0].max(0.0);
        lo[1] = lo[1].max(0.0);
        lo[2] = lo[2].max(0.0);
        hi[2] = hi[2].min(1.0);
    }
    best.map(|(x, value)| ToyOptimum {
        value,
        j_c: x[0],
        j_s: x[1],
        theta_r_magnitude: x[2],
        theta_r_phase: x[3],
    })
}

/// Outcome of one named check suite.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn gradient_suite(rng: &mut ChaCha8Rng, instances: usize, tolerance: f64) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = GradientInstance::random(rng);
        worst = worst.max(check_gradients(&inst, 1e-6)?.worst());
    }
    Ok(CheckOutcome {
        name: "gradients",
        passed: worst < tolerance,
        detail: format!("{instances} instances, worst relative error {worst:.3e}"),
    })
}

pub fn projection_suite(rng: &mut ChaCha8Rng, instances: usize, tolerance: f64) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    let mut split = 0.0f64;
    let mut idempotence = 0.0f64;
    for _ in 0..instances {
        worst = worst.max(check_projection_instance(rng)?);
        let n = rng.random_range(1..=8);
        let raw = StarRisProfile {
            theta_r: gaussian(rng, n, 1, 1.0).column(0).into_owned(),
            theta_t: gaussian(rng, n, 1, 1.0).column(0).into_owned(),
        };
        let once = projections::project_star_profile(&raw, rng);
        let twice = projections::project_star_profile(&once, rng);
        split = split.max(once.max_split_violation());
        idempotence = idempotence.max((once.stacked() - twice.stacked()).norm());
    }
    Ok(CheckOutcome {
        name: "projections",
        passed: worst <= tolerance && split <= 1e-12 && idempotence <= 1e-12,
        detail: format!(
            "{instances} instances, covariance distance {worst:.3e}, split violation {split:.3e}, idempotence {idempotence:.3e}"
        ),
    })
}

pub fn beamformer_suite(rng: &mut ChaCha8Rng, instances: usize, samples: usize) -> Result<CheckOutcome> {
    let mut worst_margin = f64::INFINITY;
    let mut worst_norm = 0.0f64;
    for _ in 0..instances {
        let (best, sampled, norm_err) = check_beamformer_instance(rng, samples)?;
        // relative to the optimum so round-off in the quotient is not a loss
        worst_margin = worst_margin.min((best - sampled) / best.abs().max(f64::MIN_POSITIVE));
        worst_norm = worst_norm.max(norm_err);
    }
    Ok(CheckOutcome {
        name: "beamformer",
        passed: worst_margin >= -1e-12 && worst_norm <= 1e-12,
        detail: format!(
            "{instances} instances x {samples} samples, min((γ_opt - γ_sampled)/γ_opt) {worst_margin:.3e}, norm error {worst_norm:.1e}"
        ),
    })
}

pub fn tau_suite(rng: &mut ChaCha8Rng, tuples: usize, resolution: f64, tolerance: f64) -> CheckOutcome {
    let mut worst = 0.0f64;
    for _ in 0..tuples {
        let r = rng.random_range(0.0..5.0);
        let delta = rng.random_range(0.0..3.0);
        let nu = rng.random_range(-2.0..2.0);
        // keeps the maximizer r - Δ - νρ inside the scan window
        let rho = rng.random_range(0.01..2.0);
        let exact = optimizer::update_tau(r, delta, nu, rho);
        worst = worst.max((exact - tau_scan(r, delta, nu, rho, resolution)).abs());
    }
    CheckOutcome {
        name: "tau",
        passed: worst <= tolerance,
        detail: format!("{tuples} tuples, worst deviation {worst:.3e}"),
    }
}

/// Solver on the all-scalar instance against the grid oracle.
pub fn toy_suite(tolerance: f64) -> Result<CheckOutcome> {
    let ch = toy_channels();
    let config = toy_config();
    let spec = config.sensing_spec();
    let oracle = toy_grid_oracle(&ch, config.p_max, &spec);
    let solution = optimizer::run_pdd(&ch, &config, &SolverOptions::default())?;
    let (passed, detail) = match oracle {
        Some(o) => {
            let gap = (solution.sum_secrecy_rate - o.value).abs();
            (
                gap <= tolerance,
                format!(
                    "solver {:.6}, grid {:.6} (J_c {:.4}, J_s {:.4}, |θ_R| {:.4}), gap {gap:.2e}",
                    solution.sum_secrecy_rate, o.value, o.j_c, o.j_s, o.theta_r_magnitude
                ),
            )
        }
        None => (false, "grid search found no feasible point".to_string()),
    };
    Ok(CheckOutcome {
        name: "toy-oracle",
        passed,
        detail,
    })
}

/// Every quick suite, in a fixed order.
pub fn run_all_checks(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = optimizer::solver_rng(seed);
    Ok(vec![
        gradient_suite(&mut rng, 20, 1e-5)?,
        projection_suite(&mut rng, 50, 1e-6)?,
        beamformer_suite(&mut rng, 20, 10_000)?,
        tau_suite(&mut rng, 100, 1e-4, 2e-4),
        toy_suite(1e-3)?,
    ])
}
