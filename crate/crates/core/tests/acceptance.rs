//! Acceptance run: one line per criterion. Exits non-zero on a failure only
//! when `ACCEPTANCE_STRICT` is set, so the report is always printed in full.

use std::time::Instant;

use star_isac::experiment::{self, ExperimentPlan, SweepAxis};
use star_isac::scenario::{self, ScenarioConfig};
use star_isac::verify;
use star_isac::{optimizer, SolverOptions, SystemVariant};

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, passed: bool, started: Instant, detail: impl AsRef<str>) {
        println!(
            "criterion {id:>2} [{}] {name} ({:.1} s): {}",
            if passed { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            detail.as_ref()
        );
        self.failed += usize::from(!passed);
    }
}

fn plan(axis: SweepAxis, values: Vec<f64>, realizations: usize, variants: Vec<SystemVariant>) -> ExperimentPlan {
    ExperimentPlan {
        sweep_axis: axis,
        sweep_values: values,
        n_realizations: realizations,
        variants,
        base: experiment::desk_scale_file(),
        base_seed: 1,
        solver: SolverOptions::default(),
        output_path: None,
    }
}

fn means(plan: &ExperimentPlan, variant: SystemVariant) -> Vec<(f64, f64)> {
    let rows = experiment::run_experiment(plan).expect("valid plan");
    let summary = experiment::summarize(&rows);
    plan.points()
        .iter()
        .map(|&v| {
            let g = summary
                .groups
                .iter()
                .find(|g| g.variant == variant && g.sweep_value == v)
                .expect("group present");
            assert_eq!(g.failures, 0, "solver failure in sweep");
            (v, g.mean_assr_nats)
        })
        .collect()
}

fn main() {
    let mut report = Report { failed: 0 };

    let t = Instant::now();
    let mut rng = optimizer::solver_rng(101);
    let o = verify::gradient_suite(&mut rng, 20, 1e-5).unwrap();
    report.line(1, "gradients match central differences", o.passed, t, o.detail);

    let t = Instant::now();
    let mut rng = optimizer::solver_rng(102);
    let o = verify::projection_suite(&mut rng, 50, 1e-6).unwrap();
    report.line(2, "projections match oracle", o.passed, t, o.detail);

    let t = Instant::now();
    let mut rng = optimizer::solver_rng(103);
    let o = verify::beamformer_suite(&mut rng, 20, 10_000).unwrap();
    report.line(3, "receive beamformer optimal", o.passed, t, o.detail);

    let t = Instant::now();
    let mut rng = optimizer::solver_rng(104);
    let o = verify::tau_suite(&mut rng, 100, 1e-4, 2e-4);
    report.line(4, "tau update optimal", o.passed, t, o.detail);

    let t = Instant::now();
    let config = ScenarioConfig::desk_scale();
    let (_, channels) = scenario::realize(&config, 1).unwrap();
    let sol = optimizer::run_pdd(&channels, &config, &SolverOptions::default()).unwrap();
    let gap = sol.relative_gap();
    let threshold = config.sensing_rate_threshold();
    let worst_rate = sol.sensing_rates.iter().copied().fold(f64::INFINITY, f64::min);
    let power = sol.covariances.total_trace();
    let drops = sol.trace.outer_drops();
    let checks = [
        gap <= 1e-5,
        worst_rate >= threshold - 1e-3,
        power <= config.p_max + 1e-9,
        drops >= 1,
    ];
    report.line(
        5,
        "convergence certificate",
        checks.iter().all(|&c| c),
        t,
        format!(
            "gap {gap:.2e} [{}], min sensing rate {worst_rate:.4} vs {threshold:.4} [{}], power {power:.6e} vs {:.6e} [{}], outer drops {drops} [{}], {} inner / {} outer",
            ok(checks[0]),
            ok(checks[1]),
            config.p_max,
            ok(checks[2]),
            ok(checks[3]),
            sol.inner_iterations,
            sol.outer_iterations
        ),
    );

    let t = Instant::now();
    let worst = sol.trace.worst_substep_decrease();
    report.line(
        6,
        "inner sub-steps monotone",
        worst >= -1e-10,
        t,
        format!(
            "worst sub-step change {worst:.3e} over {} iterations",
            sol.trace.records.len()
        ),
    );

    let t = Instant::now();
    let p = plan(SweepAxis::None, vec![], 10, SystemVariant::ALL.to_vec());
    let star = means(&p, SystemVariant::Star)[0].1;
    let cris = means(&p, SystemVariant::Cris)[0].1;
    let noris = means(&p, SystemVariant::NoRis)[0].1;
    let gain = star / noris - 1.0;
    let ordered = star > cris && cris > noris;
    report.line(
        7,
        "benchmark ordering",
        ordered && gain >= 0.2,
        t,
        format!(
            "mean ASSR star {star:.4}, cris {cris:.4}, noris {noris:.4} nats; ordering [{}], star over noris {:.1}% vs 20% [{}]",
            ok(ordered),
            100.0 * gain,
            ok(gain >= 0.2)
        ),
    );

    let t = Instant::now();
    let trends = [
        (SweepAxis::NRisElements, vec![8.0, 16.0, 32.0], true),
        (SweepAxis::PMaxDbm, vec![0.0, 10.0, 20.0], true),
        (SweepAxis::SensingSinrDb, vec![0.0, 5.0, 10.0], false),
        (SweepAxis::NTargets, vec![1.0, 2.0], false),
    ];
    let mut all = true;
    let mut parts = Vec::new();
    for (axis, values, increasing) in trends {
        let m = means(&plan(axis, values, 5, vec![SystemVariant::Star]), SystemVariant::Star);
        let good = m
            .windows(2)
            .all(|w| if increasing { w[1].1 >= w[0].1 } else { w[1].1 <= w[0].1 });
        all &= good;
        let series: Vec<String> = m.iter().map(|(v, a)| format!("{v}:{a:.4}")).collect();
        parts.push(format!("{} {} [{}]", axis.as_str(), series.join(" "), ok(good)));
    }
    report.line(8, "monotone trends", all, t, parts.join("; "));

    let t = Instant::now();
    let table = experiment::timing_probe(&experiment::bench_scale_file(), &[128, 256, 512, 1024], 40, 1).unwrap();
    let slope = table.slope.unwrap_or(f64::NAN);
    let times: Vec<String> = table
        .points
        .iter()
        .map(|p| format!("{}:{:.0}us", p.n_ris_elements, p.median_ns / 1e3))
        .collect();
    report.line(
        9,
        "per-iteration cost linear in metasurface size",
        (0.8..=1.3).contains(&slope),
        t,
        format!("slope {slope:.3} over {}", times.join(" ")),
    );

    let t = Instant::now();
    let o = verify::toy_suite(1e-3).unwrap();
    report.line(10, "toy instance matches grid search", o.passed, t, o.detail);

    println!("{} of 10 criteria failed", report.failed);
    if report.failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "miss"
    }
}
