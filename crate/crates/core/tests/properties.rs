use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use star_isac::experiment::{self, ExperimentPlan, SweepAxis};
use star_isac::model::{self, Penalty, ReceiveBeamformers, SensingSpec, StarRisProfile, TransmitCovariances};
use star_isac::scenario::{self, ScenarioConfig};
use star_isac::verify::{self, GradientInstance, InstanceDims};
use star_isac::{gradients, linalg, optimizer, projections, SolverOptions, SystemVariant};

type CMat = DMatrix<C64>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        C64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        )
    })
}

fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    gaussian(rng, n, n).qr().q()
}

fn small_config(n_ris: usize) -> ScenarioConfig {
    ScenarioConfig {
        n_tx: 3,
        n_rx: 3,
        n_user_antennas: 2,
        n_ris_elements: n_ris,
        ..ScenarioConfig::desk_scale()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>()) {
        let inst = GradientInstance::random(&mut rng(seed));
        let errors = verify::check_gradients(&inst, 1e-6).unwrap();
        prop_assert!(errors.worst() < 1e-5, "{errors:?}");
    }

    #[test]
    fn covariance_gradient_is_hermitian(seed in any::<u64>()) {
        let inst = GradientInstance::random(&mut rng(seed));
        let g = gradients::grad_augmented_wrt_j(
            &inst.channels, &inst.covariances, &inst.profile, &inst.tau, &inst.penalty, &inst.beamformers, &inst.spec,
        )
        .unwrap();
        for m in &g.mats {
            prop_assert!(linalg::max_asymmetry(m) < 1e-10 * linalg::max_abs(m).max(1.0));
        }
    }

    #[test]
    fn projected_gradient_is_an_ascent_direction(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = GradientInstance::random(&mut r);
        let p_max = 2.0 * inst.covariances.total_trace().max(1e-3);
        let f = |j: &TransmitCovariances| {
            model::augmented_objective(&inst.channels, j, &inst.profile, &inst.tau, &inst.penalty, &inst.beamformers, &inst.spec)
                .unwrap()
        };
        let g = gradients::grad_augmented_wrt_j(
            &inst.channels, &inst.covariances, &inst.profile, &inst.tau, &inst.penalty, &inst.beamformers, &inst.spec,
        )
        .unwrap();
        let norm = g.frobenius_norm();
        prop_assume!(norm > 1e-8);
        let base = f(&inst.covariances);
        let mu = 1e-6 * p_max / norm;
        let raw: Vec<CMat> = inst.covariances.mats().iter().zip(&g.mats).map(|(x, d)| x + d.scale(mu)).collect();
        let stepped = projections::project_covariances(&raw, inst.covariances.n_users(), p_max).unwrap();
        prop_assert!(f(&stepped) >= base);
    }

    #[test]
    fn covariance_projection_is_feasible_idempotent_and_nearest(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n_tx = r.random_range(1..=4);
        let count = r.random_range(2..=4);
        let p_max = r.random_range(0.1..5.0);
        let raw: Vec<CMat> = (0..count).map(|_| linalg::hermitian_part(&gaussian(&mut r, n_tx, n_tx))).collect();
        let out = projections::project_covariances(&raw, 1, p_max).unwrap();
        prop_assert!(out.total_trace() <= p_max + 1e-9);
        for m in out.mats() {
            prop_assert!(linalg::min_eigenvalue(m) >= -1e-9);
        }
        let again = projections::project_covariances(out.mats(), 1, p_max).unwrap();
        prop_assert!(again.frobenius_distance(&out) < 1e-9);

        let distance = |mats: &[CMat]| -> f64 {
            mats.iter().zip(&raw).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt()
        };
        let best = distance(out.mats());
        for _ in 0..1000 {
            let sample = verify::random_covariances(count - 1, 1, n_tx, p_max * r.random_range(0.0..1.0), &mut r);
            prop_assert!(best <= distance(sample.mats()) + 1e-12);
        }
    }

    #[test]
    fn covariance_projection_matches_dykstra(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n_tx = r.random_range(1..=3);
        let count = r.random_range(1..=3);
        let p_max = r.random_range(0.1..3.0);
        let raw: Vec<CMat> = (0..count).map(|_| linalg::hermitian_part(&gaussian(&mut r, n_tx, n_tx))).collect();
        let fast = projections::project_covariances(&raw, 1, p_max).unwrap();
        let slow = verify::dykstra_projection(&raw, p_max, 200_000, 1e-14);
        for (a, b) in fast.mats().iter().zip(&slow) {
            prop_assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn star_projection_is_unit_idempotent_and_nearest(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=8);
        let raw = verify::random_profile(n, &mut r);
        let raw = StarRisProfile::combine(&[(r.random_range(0.1..3.0), &raw)]);
        let once = projections::project_star_profile(&raw, &mut r);
        prop_assert!(once.max_split_violation() <= 1e-12);
        let twice = projections::project_star_profile(&once, &mut r);
        prop_assert!((once.stacked() - twice.stacked()).norm() <= 1e-12);
        for m in 0..n {
            let d = |a: C64, b: C64| (a - raw.theta_r[m]).norm_sqr() + (b - raw.theta_t[m]).norm_sqr();
            let best = d(once.theta_r[m], once.theta_t[m]);
            for _ in 0..200 {
                let v = verify::random_profile(1, &mut r);
                prop_assert!(best <= d(v.theta_r[0], v.theta_t[0]) + 1e-12);
            }
        }
    }

    #[test]
    fn secrecy_rate_is_invariant_under_joint_rotation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = InstanceDims { n_tx: 2, n_rx: 2, n_user_antennas: 2, n_ris_elements: 2, n_users: 1, n_targets: 1 };
        let ch = verify::random_channels(dims, &mut r);
        let theta = verify::random_profile(2, &mut r);
        let j = verify::random_covariances(1, 1, 2, 1.5, &mut r);
        let z = model::effective_channels(&ch, &theta).unwrap().remove(0);
        let u = random_unitary(&mut r, 2);
        let rotated = TransmitCovariances::from_mats(j.mats().iter().map(|m| &u * m * u.adjoint()).collect(), 1).unwrap();
        let a = model::secrecy_rate_with(&z, &ch.v_t, &j, 0).unwrap();
        let b = model::secrecy_rate_with(&(&z * u.adjoint()), &(&ch.v_t * u.adjoint()), &rotated, 0).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn sensing_sinr_ignores_combiner_phase(seed in any::<u64>(), phase in -3.2f64..3.2) {
        let mut r = rng(seed);
        let inst = GradientInstance::random(&mut r);
        let phi = &inst.beamformers.phis[0];
        let spun = phi.map(|z| z * C64::from_polar(1.0, phase));
        let a = model::sensing_sinr(&inst.channels, &inst.covariances, phi, 0, &inst.spec).unwrap();
        let b = model::sensing_sinr(&inst.channels, &inst.covariances, &spun, 0, &inst.spec).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
    }

    #[test]
    fn augmented_equals_true_objective_without_residual(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = GradientInstance::random(&mut r);
        let rates: Vec<f64> = inst
            .beamformers
            .phis
            .iter()
            .enumerate()
            .map(|(l, phi)| model::sensing_rate(&inst.channels, &inst.covariances, phi, l, &inst.spec).unwrap())
            .collect();
        // thresholds at half the rate and slack making every residual zero
        let spec = SensingSpec { thresholds: rates.iter().map(|x| 0.5 * x).collect(), mean_rcs: inst.spec.mean_rcs };
        let tau: Vec<f64> = rates.iter().map(|x| 0.5 * x).collect();
        let penalty = Penalty { nu: vec![0.7; rates.len()], rho: 0.3 };
        let aug = model::augmented_objective(&inst.channels, &inst.covariances, &inst.profile, &tau, &penalty, &inst.beamformers, &spec).unwrap();
        let truth = model::sum_secrecy_rate(&inst.channels, &inst.covariances, &inst.profile).unwrap();
        prop_assert!((aug - truth).abs() <= 1e-12 * truth.abs().max(1e-12));
    }

    #[test]
    fn optimal_beamformer_beats_sampled_combiners(seed in any::<u64>()) {
        let (best, sampled, norm_err) = verify::check_beamformer_instance(&mut rng(seed), 500).unwrap();
        prop_assert!(best >= sampled * (1.0 - 1e-12));
        prop_assert!(norm_err <= 1e-12);
    }

    #[test]
    fn tau_update_maximizes_its_section(r in 0.0f64..5.0, delta in 0.0f64..3.0, nu in -2.0f64..2.0, rho in 0.01f64..2.0) {
        let exact = optimizer::update_tau(r, delta, nu, rho);
        prop_assert!(exact >= 0.0);
        prop_assert!((exact - verify::tau_scan(r, delta, nu, rho, 1e-3)).abs() <= 2e-3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn solutions_are_feasible(seed in 1u64..1000, variant in prop::sample::select(SystemVariant::ALL.to_vec())) {
        let mut config = small_config(6);
        config.system_variant = variant;
        let (_, ch) = scenario::realize(&config, seed).unwrap();
        let sol = optimizer::solve_variant(&ch, &config, &SolverOptions { solver_seed: seed, ..SolverOptions::default() }).unwrap();
        prop_assert!(sol.covariances.total_trace() <= config.p_max + 1e-9);
        prop_assert!(sol.covariances.is_feasible(config.p_max * (1.0 + 1e-9)));
        prop_assert!(sol.profile.max_split_violation() <= 1e-10);
        for phi in &sol.beamformers.phis {
            prop_assert!((phi.norm() - 1.0).abs() <= 1e-10);
        }
        prop_assert!(sol.trace.worst_substep_decrease() >= -1e-10);
        let clamped: f64 = sol.secrecy_rates.iter().map(|r| r.max(0.0)).sum();
        prop_assert!((sol.clamped_sum_secrecy_rate - clamped).abs() < 1e-15);
        prop_assert!(sol.clamped_sum_secrecy_rate >= sol.sum_secrecy_rate - 1e-12);
    }
}

#[test]
fn identical_inputs_give_identical_traces() {
    let config = small_config(6);
    let (_, ch) = scenario::realize(&config, 4).unwrap();
    let opts = SolverOptions {
        solver_seed: 4,
        ..SolverOptions::default()
    };
    let csv = || {
        let sol = optimizer::run_pdd(&ch, &config, &opts).unwrap();
        let mut buf = Vec::new();
        sol.trace.write_csv(&mut buf).unwrap();
        buf
    };
    let first = csv();
    assert!(first.len() > optimizer::TRACE_HEADER.len());
    assert_eq!(first, csv());
}

#[test]
fn noris_rows_do_not_depend_on_metasurface_size() {
    let plan = ExperimentPlan {
        sweep_axis: SweepAxis::NRisElements,
        sweep_values: vec![16.0, 64.0],
        n_realizations: 1,
        variants: vec![SystemVariant::NoRis],
        base: experiment::desk_scale_file(),
        base_seed: 1,
        solver: SolverOptions::default(),
        output_path: None,
    };
    let rows = experiment::run_experiment(&plan).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.error.is_none()));
    assert!((rows[0].assr_nats - rows[1].assr_nats).abs() <= 1e-9);
}

#[test]
fn variants_share_channels_within_a_realization() {
    let mut star = ScenarioConfig::desk_scale();
    star.system_variant = SystemVariant::Star;
    let mut cris = star.clone();
    cris.system_variant = SystemVariant::Cris;
    let (_, a) = scenario::realize(&star, 9).unwrap();
    let (_, b) = scenario::realize(&cris, 9).unwrap();
    assert_eq!(a.h_bk, b.h_bk);
    assert_eq!(a.v_t, b.v_t);
    assert_eq!(a.g_si, b.g_si);
}

fn sweep_csv(plan: &ExperimentPlan) -> (Vec<experiment::ResultRow>, String) {
    let rows = experiment::run_experiment(plan).unwrap();
    let mut buf = Vec::new();
    experiment::write_results_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let stripped = text
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect::<Vec<_>>()
        .join("\n");
    (rows, stripped)
}

#[test]
fn sweeps_are_reproducible_and_report_bits() {
    let plan = ExperimentPlan {
        sweep_axis: SweepAxis::PMaxDbm,
        sweep_values: vec![0.0, 10.0],
        n_realizations: 2,
        variants: SystemVariant::ALL.to_vec(),
        base: {
            let mut f = experiment::desk_scale_file();
            f.n_ris_elements = 8;
            f
        },
        base_seed: 2,
        solver: SolverOptions::default(),
        output_path: None,
    };
    let (rows, first) = sweep_csv(&plan);
    let (_, second) = sweep_csv(&plan);
    assert_eq!(first, second);
    assert_eq!(rows.len(), 12);
    for r in &rows {
        assert!((r.assr_bits - r.assr_nats / std::f64::consts::LN_2).abs() <= 1e-12 * r.assr_nats.abs().max(1.0));
        assert_eq!(r.sensing_rates.len(), 1);
        assert_eq!(r.min_sensing_rate, r.sensing_rates[0]);
    }
    let summary = experiment::summarize(&rows);
    assert_eq!(summary.groups.len(), 6);
    assert_eq!(summary.paired_dominance.len(), 4);
    for g in &summary.groups {
        let members: Vec<f64> = rows
            .iter()
            .filter(|r| r.variant == g.variant && r.sweep_value == g.sweep_value)
            .map(|r| r.assr_nats)
            .collect();
        let mean = members.iter().sum::<f64>() / members.len() as f64;
        assert!((g.mean_assr_nats - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    }
}

#[test]
fn emitted_files_have_expected_headers() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(4);
    let (_, ch) = scenario::realize(&config, 3).unwrap();
    let sol = optimizer::run_pdd(&ch, &config, &SolverOptions::default()).unwrap();
    let written = experiment::emit_results(&[], Some(&sol.trace), dir.path()).unwrap();
    assert_eq!(written.len(), 3);
    let results = std::fs::read_to_string(dir.path().join(experiment::RESULTS_FILE)).unwrap();
    assert_eq!(results, format!("{}\n", experiment::RESULTS_HEADER));
    let trace = std::fs::read_to_string(dir.path().join(experiment::TRACE_FILE)).unwrap();
    assert_eq!(trace.lines().next().unwrap(), optimizer::TRACE_HEADER);
    assert_eq!(trace.lines().count(), sol.trace.records.len() + 1);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(experiment::SUMMARY_FILE)).unwrap()).unwrap();
    assert!(summary["groups"].as_array().unwrap().is_empty());
}

#[test]
fn emit_reports_unwritable_paths() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = experiment::emit_results(&[], None, &blocker.join("sub")).unwrap_err();
    assert!(err.to_string().contains("file"));
}

#[test]
fn initial_beamformers_are_unit_norm() {
    let phis = ReceiveBeamformers::random(4, 3, &mut rng(1));
    for phi in &phis.phis {
        assert!((phi.norm() - 1.0).abs() < 1e-12);
    }
}
