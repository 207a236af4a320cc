//! Monitored accelerated projected gradient ascent over the covariances and
//! the metasurface profile (inner loop), wrapped in a penalty dual
//! decomposition that drives the sensing residuals to zero (outer loop).

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gradients::{self, CovariancesGradient, ProfileGradient};
use crate::linalg::{self, CMat};
use crate::model::{self, Penalty, ReceiveBeamformers, SensingSpec, StarRisProfile, TransmitCovariances};
use crate::projections;
use crate::scenario::{ChannelSet, ScenarioConfig, SystemVariant};

/// RNG stream used for the solver's own randomness (initial combiners and
/// degenerate projections).
pub const STREAM_SOLVER: u64 = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct ArmijoOptions {
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_increase: f64,
    pub max_backtracks: usize,
    /// Scale the first trial step so that `s·‖∇‖` equals the block's natural
    /// size (`P_max` for the covariances, `‖θ‖` for the profile).
    pub normalize_initial_step: bool,
}

impl Default for ArmijoOptions {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_increase: 1e-4,
            max_backtracks: 30,
            normalize_initial_step: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub max_inner_iterations: usize,
    pub max_outer_iterations: usize,
    pub inner_tolerance: f64,
    pub outer_tolerance: f64,
    pub window: usize,
    pub initial_rho: f64,
    pub zeta: f64,
    pub rho_floor: f64,
    pub armijo: ArmijoOptions,
    pub solver_seed: u64,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_inner_iterations: 2000,
            max_outer_iterations: 30,
            inner_tolerance: 1e-5,
            outer_tolerance: 1e-5,
            window: 5,
            initial_rho: 10.0,
            zeta: 0.1,
            rho_floor: 1e-12,
            armijo: ArmijoOptions::default(),
            solver_seed: 0,
            record_trace: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.max_inner_iterations == 0 || self.max_outer_iterations == 0 {
            return bad("iteration caps must be at least 1");
        }
        if self.window == 0 {
            return bad("convergence window must be at least 1");
        }
        if !(self.initial_rho > 0.0) {
            return bad("initial ρ must be positive");
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return bad("ζ must lie in (0, 1]");
        }
        if !(self.rho_floor > 0.0) {
            return bad("ρ floor must be positive");
        }
        let a = &self.armijo;
        if !(a.initial_step > 0.0) || !(a.shrink > 0.0 && a.shrink < 1.0) || !(a.sufficient_increase >= 0.0) {
            return bad("line-search constants out of range");
        }
        Ok(())
    }
}

/// Multipliers, penalty, slacks and the penalty shrink factor.
#[derive(Clone, Debug, PartialEq)]
pub struct PddState {
    pub nu: Vec<f64>,
    pub rho: f64,
    pub tau: Vec<f64>,
    pub zeta: f64,
}

impl PddState {
    pub fn new(n_targets: usize, rho: f64, zeta: f64) -> Self {
        Self {
            nu: vec![0.0; n_targets],
            rho,
            tau: vec![0.0; n_targets],
            zeta,
        }
    }

    pub fn initial(n_targets: usize) -> Self {
        Self::new(n_targets, 10.0, 0.1)
    }

    pub fn penalty(&self) -> Penalty {
        Penalty {
            nu: self.nu.clone(),
            rho: self.rho,
        }
    }
}

/// Momentum bookkeeping of the accelerated iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct ApgState {
    pub j_current: TransmitCovariances,
    pub j_previous: TransmitCovariances,
    pub m_extrapolation: TransmitCovariances,
    pub theta_current: StarRisProfile,
    pub theta_previous: StarRisProfile,
    pub xi_extrapolation: StarRisProfile,
    pub t_current: f64,
    pub t_previous: f64,
    pub phis: ReceiveBeamformers,
}

impl ApgState {
    pub fn new(j: TransmitCovariances, theta: StarRisProfile, phis: ReceiveBeamformers) -> Self {
        Self {
            j_previous: j.clone(),
            m_extrapolation: j.clone(),
            j_current: j,
            theta_previous: theta.clone(),
            xi_extrapolation: theta.clone(),
            theta_current: theta,
            t_current: 1.0,
            t_previous: 0.0,
            phis,
        }
    }

    /// Weights `(t_prev / t, (t_prev - 1) / t)` of the extrapolation.
    pub fn momentum_weights(&self) -> (f64, f64) {
        (
            self.t_previous / self.t_current,
            (self.t_previous - 1.0) / self.t_current,
        )
    }

    pub fn advance_momentum(&mut self) {
        let next = next_momentum(self.t_current);
        self.t_previous = self.t_current;
        self.t_current = next;
    }
}

/// `t ← (1 + sqrt(1 + 4t²)) / 2`.
pub fn next_momentum(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

/// Which candidate the monitor kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// The extrapolated (momentum) candidate, `M` or `ξ`.
    Momentum,
    /// The plain projected-gradient candidate, `U` or `℘`.
    Gradient,
    /// Block not updated (no metasurface).
    Skipped,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Momentum => "M",
            Branch::Gradient => "U",
            Branch::Skipped => "-",
        }
    }
}

/// One inner iteration. Augmented values are recorded after each sub-step
/// with the multipliers of the current outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub outer: usize,
    pub augmented_start: f64,
    pub augmented_after_j: f64,
    pub augmented_after_theta: f64,
    pub augmented_after_tau: f64,
    pub augmented: f64,
    pub true_objective: f64,
    pub sensing_rates: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `min_l (R_sl - Δ_sl)`; nonnegative when every sensing constraint holds.
    pub sensing_margin: f64,
    pub branch_j: Branch,
    pub branch_theta: Branch,
    pub step_j: f64,
    pub step_theta: f64,
    pub line_search_failures: usize,
    pub rho: f64,
    pub wall_ns: u128,
}

/// Augmented objective at the same iterate before and after a multiplier
/// update.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterUpdate {
    pub outer: usize,
    pub after_iteration: usize,
    pub augmented_before: f64,
    pub augmented_after: f64,
    pub rho: f64,
    pub nu: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<IterationRecord>,
    pub outer_updates: Vec<OuterUpdate>,
}

pub const TRACE_HEADER: &str = "iter,augmented,true,min_residual,branch_J,branch_theta,rho,outer";

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: IterationRecord) {
        self.records.push(record);
    }

    /// Largest decrease across an accepted J, θ or τ sub-step.
    pub fn worst_substep_decrease(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| {
                [
                    r.augmented_start - r.augmented_after_j,
                    r.augmented_after_j - r.augmented_after_theta,
                    r.augmented_after_theta - r.augmented_after_tau,
                ]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Number of multiplier updates that lowered the augmented objective.
    pub fn outer_drops(&self) -> usize {
        self.outer_updates
            .iter()
            .filter(|u| u.augmented_after < u.augmented_before)
            .count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{},{},{:e},{}",
                r.iteration,
                r.augmented,
                r.true_objective,
                r.sensing_margin,
                r.branch_j.as_str(),
                r.branch_theta.as_str(),
                r.rho,
                r.outer
            )?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Result of a backtracking search; `point` is `None` when every trial failed.
#[derive(Clone, Debug)]
pub struct LineSearch<T> {
    pub step: f64,
    pub value: f64,
    pub point: Option<T>,
    pub backtracks: usize,
}

/// Backtracking over `s₀ β^i`. `trial(s)` returns the projected point, its
/// objective value and the sufficient-increase term `Re⟨∇, Π(x + s∇) − x⟩`;
/// a trial is accepted when `value ≥ base + c·max(term, 0)`. A zero
/// directional derivative accepts step 0 immediately.
pub fn armijo_step<T, F>(
    mut trial: F,
    base_value: f64,
    directional_derivative: f64,
    initial_step: f64,
    opts: &ArmijoOptions,
) -> LineSearch<T>
where
    F: FnMut(f64) -> Option<(T, f64, f64)>,
{
    if directional_derivative == 0.0 || !initial_step.is_finite() {
        return LineSearch {
            step: 0.0,
            value: base_value,
            point: None,
            backtracks: 0,
        };
    }
    let mut step = initial_step;
    for i in 0..=opts.max_backtracks {
        if let Some((point, value, term)) = trial(step) {
            if value.is_finite() && value >= base_value + opts.sufficient_increase * term.max(0.0) {
                return LineSearch {
                    step,
                    value,
                    point: Some(point),
                    backtracks: i,
                };
            }
        }
        step *= opts.shrink;
    }
    LineSearch {
        step: 0.0,
        value: base_value,
        point: None,
        backtracks: opts.max_backtracks,
    }
}

/// Exact maximizer of the augmented objective over `τ_l ≥ 0`.
pub fn update_tau(r_sl: f64, delta_sl: f64, nu_l: f64, rho: f64) -> f64 {
    (r_sl - delta_sl - nu_l * rho).max(0.0)
}

/// What the inner loop optimizes over: the per-variant block layout and
/// feasible sets.
#[derive(Clone, Debug)]
pub struct Problem<'a> {
    pub channels: &'a ChannelSet,
    pub spec: SensingSpec,
    pub p_max: f64,
    pub variant: SystemVariant,
}

impl<'a> Problem<'a> {
    pub fn new(channels: &'a ChannelSet, config: &ScenarioConfig) -> Self {
        Self {
            channels,
            spec: config.sensing_spec(),
            p_max: config.p_max,
            variant: config.system_variant,
        }
    }

    fn optimizes_profile(&self) -> bool {
        self.variant.has_ris() && self.channels.has_ris_links()
    }

    fn penalty_term(
        &self,
        sigma: &CMat,
        phis: &ReceiveBeamformers,
        tau: &[f64],
        penalty: &Penalty,
    ) -> (f64, Vec<f64>, Vec<f64>) {
        let rates = model::sensing_rates_with(self.channels, sigma, phis, self.spec.mean_rcs);
        let residuals: Vec<f64> = rates
            .iter()
            .enumerate()
            .map(|(l, &r)| model::residual_from_rate(r, self.spec.thresholds[l], tau[l]))
            .collect();
        let term = residuals
            .iter()
            .zip(&penalty.nu)
            .map(|(g, nu)| nu * g + 0.5 * g * g / penalty.rho)
            .sum();
        (term, rates, residuals)
    }

    fn augmented(
        &self,
        zs: &[CMat],
        j: &TransmitCovariances,
        phis: &ReceiveBeamformers,
        tau: &[f64],
        penalty: &Penalty,
    ) -> Result<f64> {
        let rate = model::sum_secrecy_rate_with(zs, &self.channels.v_t, j)?;
        let (term, _, _) = self.penalty_term(&j.total(), phis, tau, penalty);
        Ok(rate - term)
    }

    fn project_j(&self, raw: &[CMat], n_users: usize) -> Result<TransmitCovariances> {
        projections::project_covariances(raw, n_users, self.p_max)
    }

    fn project_theta(&self, raw: &StarRisProfile, rng: &mut ChaCha8Rng) -> StarRisProfile {
        projections::project_profile(raw, self.variant, rng)
    }

    /// Projected-gradient search for the covariance block from `base`.
    #[allow(clippy::too_many_arguments)]
    fn search_j(
        &self,
        base: &TransmitCovariances,
        base_value: f64,
        grad: &CovariancesGradient,
        zs: &[CMat],
        phis: &ReceiveBeamformers,
        tau: &[f64],
        penalty: &Penalty,
        opts: &ArmijoOptions,
    ) -> LineSearch<TransmitCovariances> {
        let norm = grad.frobenius_norm();
        let s0 = initial_step(opts, norm, self.p_max);
        let n_users = base.n_users();
        armijo_step(
            |s| {
                let raw: Vec<CMat> = base
                    .mats()
                    .iter()
                    .zip(&grad.mats)
                    .map(|(x, g)| x + g.scale(s))
                    .collect();
                let point = self.project_j(&raw, n_users).ok()?;
                let value = self.augmented(zs, &point, phis, tau, penalty).ok()?;
                let displacement: Vec<CMat> = point.mats().iter().zip(base.mats()).map(|(p, x)| p - x).collect();
                Some((point, value, grad.real_inner(&displacement)))
            },
            base_value,
            norm,
            s0,
            opts,
        )
    }

    /// Projected-gradient search for the profile block from `base`;
    /// `offset` is the θ-independent part of the augmented objective.
    #[allow(clippy::too_many_arguments)]
    fn search_theta(
        &self,
        base: &StarRisProfile,
        base_value: f64,
        grad: &ProfileGradient,
        j: &TransmitCovariances,
        offset: f64,
        opts: &ArmijoOptions,
        rng: &mut ChaCha8Rng,
    ) -> LineSearch<StarRisProfile> {
        let norm = grad.norm();
        let scale = base.stacked().norm().max((base.len() as f64).sqrt());
        let s0 = initial_step(opts, norm, scale);
        let direction = StarRisProfile {
            theta_r: grad.grad_r.clone(),
            theta_t: grad.grad_t.clone(),
        };
        armijo_step(
            |s| {
                let raw = StarRisProfile::combine(&[(1.0, base), (s, &direction)]);
                let point = self.project_theta(&raw, rng);
                let value = self.theta_value(&point, j, offset).ok()?;
                let disp = (point.stacked() - base.stacked()).scale(2.0);
                Some((point, value, linalg::real_inner(&direction.stacked(), &disp)))
            },
            base_value,
            norm,
            s0,
            opts,
        )
    }

    fn theta_value(&self, theta: &StarRisProfile, j: &TransmitCovariances, offset: f64) -> Result<f64> {
        let zs = model::effective_channels(self.channels, theta)?;
        Ok(model::sum_secrecy_rate_with(&zs, &self.channels.v_t, j)? - offset)
    }

    fn beamformers(&self, j: &TransmitCovariances) -> Result<ReceiveBeamformers> {
        let sigma = j.total();
        let phis = (0..self.channels.n_targets())
            .map(|l| projections::optimal_receive_beamformer_with(self.channels, &sigma, l, self.spec.mean_rcs))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReceiveBeamformers { phis })
    }
}

fn initial_step(opts: &ArmijoOptions, grad_norm: f64, scale: f64) -> f64 {
    if opts.normalize_initial_step {
        if grad_norm > 0.0 {
            opts.initial_step * scale / grad_norm
        } else {
            0.0
        }
    } else {
        opts.initial_step
    }
}

/// Final iterates of one inner solve.
#[derive(Clone, Debug)]
pub struct InnerResult {
    pub covariances: TransmitCovariances,
    pub profile: StarRisProfile,
    pub beamformers: ReceiveBeamformers,
    pub tau: Vec<f64>,
    pub augmented: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: ConvergenceTrace,
}

/// Relative change of the last entry of `history` against the entry
/// `window` places earlier; `None` until enough entries exist.
fn relative_change(history: &[f64], window: usize) -> Option<f64> {
    if history.len() <= window {
        return None;
    }
    let now = history[history.len() - 1];
    let then = history[history.len() - 1 - window];
    let diff = (now - then).abs();
    Some(if then == 0.0 { diff } else { diff / then.abs() })
}

struct InnerContext<'p, 'a> {
    problem: &'p Problem<'a>,
    opts: &'p SolverOptions,
    outer: usize,
    first_iteration: usize,
}

/// Algorithm 1 with the multipliers held fixed. `pdd.tau` is the starting
/// slack; the returned slack is the last update.
pub fn run_inner(
    problem: &Problem<'_>,
    init_j: TransmitCovariances,
    init_theta: StarRisProfile,
    init_phis: ReceiveBeamformers,
    pdd: &PddState,
    opts: &SolverOptions,
    rng: &mut ChaCha8Rng,
) -> Result<InnerResult> {
    let ctx = InnerContext {
        problem,
        opts,
        outer: 0,
        first_iteration: 0,
    };
    inner_loop(&ctx, init_j, init_theta, init_phis, pdd, rng)
}

fn inner_loop(
    ctx: &InnerContext<'_, '_>,
    init_j: TransmitCovariances,
    init_theta: StarRisProfile,
    init_phis: ReceiveBeamformers,
    pdd: &PddState,
    rng: &mut ChaCha8Rng,
) -> Result<InnerResult> {
    let problem = ctx.problem;
    let opts = ctx.opts;
    let channels = problem.channels;
    let spec = &problem.spec;
    let penalty = pdd.penalty();
    penalty.check()?;
    if pdd.tau.len() != channels.n_targets() || pdd.nu.len() != channels.n_targets() {
        return Err(Error::Contract(
            "multiplier and slack lengths must equal the target count".into(),
        ));
    }
    if !init_j.is_feasible(problem.p_max * (1.0 + 1e-12)) {
        return Err(Error::Domain("initial covariances are infeasible".into()));
    }
    let update_theta = problem.optimizes_profile();

    let mut state = ApgState::new(init_j, init_theta, init_phis);
    let mut tau = pdd.tau.clone();
    let mut zs = model::effective_channels(channels, &state.theta_current)?;
    let mut value = problem.augmented(&zs, &state.j_current, &state.phis, &tau, &penalty)?;
    let mut history = vec![value];
    let mut trace = ConvergenceTrace::default();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_inner_iterations {
        let started = Instant::now();
        let augmented_start = value;
        let mut failures = 0;
        let (w_m, w_prev) = state.momentum_weights();

        // covariance block
        let j = &state.j_current;
        let q = TransmitCovariances::combine(&[
            (1.0 - w_m + w_prev, j),
            (w_m, &state.m_extrapolation),
            (-w_prev, &state.j_previous),
        ]);
        let grad_j = gradients::grad_augmented_wrt_j_with(channels, &zs, j, &tau, &penalty, &state.phis, spec)?;
        let u_search = problem.search_j(j, value, &grad_j, &zs, &state.phis, &tau, &penalty, &opts.armijo);
        if u_search.point.is_none() && grad_j.frobenius_norm() > 0.0 {
            failures += 1;
        }
        let (u, u_value) = match u_search.point {
            Some(p) => (p, u_search.value),
            None => (j.clone(), value),
        };
        let momentum = if q.frobenius_distance(j) == 0.0 {
            Some((u.clone(), u_value, u_search.step))
        } else {
            momentum_candidate_j(
                problem,
                &q,
                &zs,
                &state.phis,
                &tau,
                &penalty,
                &opts.armijo,
                &mut failures,
            )
        };
        let (j_new, value_j, branch_j, step_j) = match momentum {
            Some((m, m_value, step)) if m_value >= u_value => {
                state.m_extrapolation = m.clone();
                (m, m_value, Branch::Momentum, step)
            }
            Some((m, _, _)) => {
                state.m_extrapolation = m;
                (u, u_value, Branch::Gradient, u_search.step)
            }
            None => {
                state.m_extrapolation = u.clone();
                (u, u_value, Branch::Gradient, u_search.step)
            }
        };
        state.j_previous = std::mem::replace(&mut state.j_current, j_new);
        value = value_j;
        let augmented_after_j = value;

        // profile block
        let (branch_theta, step_theta) = if update_theta {
            let j = &state.j_current;
            let sigma = j.total();
            let (offset, _, _) = problem.penalty_term(&sigma, &state.phis, &tau, &penalty);
            let theta = &state.theta_current;
            let xi_q = StarRisProfile::combine(&[
                (1.0 - w_m + w_prev, theta),
                (w_m, &state.xi_extrapolation),
                (-w_prev, &state.theta_previous),
            ]);
            let grad = gradients::grad_theta_with(channels, &zs, j)?;
            let p_search = problem.search_theta(theta, value, &grad, j, offset, &opts.armijo, rng);
            if p_search.point.is_none() && grad.norm() > 0.0 {
                failures += 1;
            }
            let (p, p_value) = match p_search.point {
                Some(p) => (p, p_search.value),
                None => (theta.clone(), value),
            };
            let same = (xi_q.stacked() - theta.stacked()).norm() == 0.0;
            let momentum = if same {
                Some((p.clone(), p_value, p_search.step))
            } else {
                momentum_candidate_theta(problem, &xi_q, j, offset, &opts.armijo, rng, &mut failures)?
            };
            let (theta_new, theta_value, branch, step) = match momentum {
                Some((xi, xi_value, step)) if xi_value >= p_value => {
                    state.xi_extrapolation = xi.clone();
                    (xi, xi_value, Branch::Momentum, step)
                }
                Some((xi, _, _)) => {
                    state.xi_extrapolation = xi;
                    (p, p_value, Branch::Gradient, p_search.step)
                }
                None => {
                    state.xi_extrapolation = p.clone();
                    (p, p_value, Branch::Gradient, p_search.step)
                }
            };
            state.theta_previous = std::mem::replace(&mut state.theta_current, theta_new);
            zs = model::effective_channels(channels, &state.theta_current)?;
            value = theta_value;
            (branch, step)
        } else {
            (Branch::Skipped, 0.0)
        };
        let augmented_after_theta = value;

        // slack update at the current combiners
        let sigma = state.j_current.total();
        let rates_old = model::sensing_rates_with(channels, &sigma, &state.phis, spec.mean_rcs);
        for l in 0..tau.len() {
            tau[l] = update_tau(rates_old[l], spec.thresholds[l], penalty.nu[l], penalty.rho);
        }
        let true_before_phi = model::sum_secrecy_rate_with(&zs, &channels.v_t, &state.j_current)?;
        let (term, _, _) = problem.penalty_term(&sigma, &state.phis, &tau, &penalty);
        let augmented_after_tau = true_before_phi - term;

        // combiner refresh
        state.phis = problem.beamformers(&state.j_current)?;
        let (term, rates, residuals) = problem.penalty_term(&sigma, &state.phis, &tau, &penalty);
        value = true_before_phi - term;

        state.advance_momentum();
        iterations += 1;
        history.push(value);

        if opts.record_trace {
            let sensing_margin = rates
                .iter()
                .zip(&spec.thresholds)
                .map(|(r, d)| r - d)
                .fold(f64::INFINITY, f64::min);
            trace.push(IterationRecord {
                iteration: ctx.first_iteration + iterations,
                outer: ctx.outer,
                augmented_start,
                augmented_after_j,
                augmented_after_theta,
                augmented_after_tau,
                augmented: value,
                true_objective: true_before_phi,
                sensing_rates: rates,
                residuals,
                sensing_margin,
                branch_j,
                branch_theta,
                step_j,
                step_theta,
                line_search_failures: failures,
                rho: penalty.rho,
                wall_ns: started.elapsed().as_nanos(),
            });
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("augmented objective"));
        }
        if relative_change(&history, opts.window).is_some_and(|c| c <= opts.inner_tolerance) {
            converged = true;
            break;
        }
    }

    Ok(InnerResult {
        covariances: state.j_current,
        profile: state.theta_current,
        beamformers: state.phis,
        tau,
        augmented: value,
        iterations,
        converged,
        trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn momentum_candidate_j(
    problem: &Problem<'_>,
    q: &TransmitCovariances,
    zs: &[CMat],
    phis: &ReceiveBeamformers,
    tau: &[f64],
    penalty: &Penalty,
    opts: &ArmijoOptions,
    failures: &mut usize,
) -> Option<(TransmitCovariances, f64, f64)> {
    let channels = problem.channels;
    // the extrapolated point can leave the feasible set; if the objective is
    // undefined there, only the plain gradient candidate is used
    let q_value = problem.augmented(zs, q, phis, tau, penalty).ok()?;
    let grad = gradients::grad_augmented_wrt_j_with(channels, zs, q, tau, penalty, phis, &problem.spec).ok()?;
    let search = problem.search_j(q, q_value, &grad, zs, phis, tau, penalty, opts);
    match search.point {
        Some(m) => Some((m, search.value, search.step)),
        None => {
            if grad.frobenius_norm() > 0.0 {
                *failures += 1;
            }
            let m = problem.project_j(q.mats(), q.n_users()).ok()?;
            let value = problem.augmented(zs, &m, phis, tau, penalty).ok()?;
            Some((m, value, 0.0))
        }
    }
}

fn momentum_candidate_theta(
    problem: &Problem<'_>,
    xi_q: &StarRisProfile,
    j: &TransmitCovariances,
    offset: f64,
    opts: &ArmijoOptions,
    rng: &mut ChaCha8Rng,
    failures: &mut usize,
) -> Result<Option<(StarRisProfile, f64, f64)>> {
    let channels = problem.channels;
    let zs = model::effective_channels(channels, xi_q)?;
    let q_value = match model::sum_secrecy_rate_with(&zs, &channels.v_t, j) {
        Ok(v) => v - offset,
        Err(_) => return Ok(None),
    };
    let grad = gradients::grad_theta_with(channels, &zs, j)?;
    let search = problem.search_theta(xi_q, q_value, &grad, j, offset, opts, rng);
    Ok(match search.point {
        Some(xi) => Some((xi, search.value, search.step)),
        None => {
            if grad.norm() > 0.0 {
                *failures += 1;
            }
            let xi = problem.project_theta(xi_q, rng);
            let value = problem.theta_value(&xi, j, offset)?;
            Some((xi, value, 0.0))
        }
    })
}

/// Output of the full solver.
#[derive(Clone, Debug)]
pub struct Solution {
    pub variant: SystemVariant,
    pub covariances: TransmitCovariances,
    pub profile: StarRisProfile,
    pub beamformers: ReceiveBeamformers,
    pub pdd: PddState,
    /// Unclamped `Σ_k R_ck`, the optimized objective.
    pub sum_secrecy_rate: f64,
    /// Per-user `R_ck` at the returned point.
    pub secrecy_rates: Vec<f64>,
    /// `Σ_k max(R_ck, 0)`, for reporting only.
    pub clamped_sum_secrecy_rate: f64,
    pub augmented: f64,
    pub sensing_rates: Vec<f64>,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub trace: ConvergenceTrace,
}

impl Solution {
    /// `|augmented − true| / |augmented|`.
    pub fn relative_gap(&self) -> f64 {
        relative_gap(self.augmented, self.sum_secrecy_rate)
    }
}

fn relative_gap(augmented: f64, true_objective: f64) -> f64 {
    let diff = (augmented - true_objective).abs();
    if augmented == 0.0 {
        diff
    } else {
        diff / augmented.abs()
    }
}

/// Initial profile of a variant.
pub fn initial_profile(variant: SystemVariant, n_elements: usize, rng: &mut ChaCha8Rng) -> StarRisProfile {
    let split = StarRisProfile::equal_split(n_elements);
    projections::project_profile(&split, variant, rng)
}

pub fn solver_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SOLVER);
    rng
}

/// Algorithm 2 on the given channels, using `config.system_variant` for the
/// profile projection.
pub fn run_pdd(channels: &ChannelSet, config: &ScenarioConfig, opts: &SolverOptions) -> Result<Solution> {
    opts.validate()?;
    let problem = Problem::new(channels, config);
    let n_targets = channels.n_targets();
    let mut rng = solver_rng(opts.solver_seed);
    let mut j = TransmitCovariances::zeros(channels.n_users(), n_targets, channels.n_tx());
    let mut theta = initial_profile(config.system_variant, channels.n_ris_elements(), &mut rng);
    let mut phis = ReceiveBeamformers::random(channels.n_rx(), n_targets, &mut rng);
    let mut pdd = PddState::new(n_targets, opts.initial_rho, opts.zeta);
    let mut trace = ConvergenceTrace::default();
    let mut inner_iterations = 0;
    let mut converged = false;
    let mut outer = 0;
    let mut last_augmented;
    let mut last_true;

    loop {
        let ctx = InnerContext {
            problem: &problem,
            opts,
            outer,
            first_iteration: inner_iterations,
        };
        let inner = inner_loop(&ctx, j, theta, phis, &pdd, &mut rng)?;
        inner_iterations += inner.iterations;
        j = inner.covariances;
        theta = inner.profile;
        phis = inner.beamformers;
        pdd.tau = inner.tau;
        last_augmented = inner.augmented;
        let zs = model::effective_channels(channels, &theta)?;
        last_true = model::sum_secrecy_rate_with(&zs, &channels.v_t, &j)?;

        let gaps: Vec<f64> = inner
            .trace
            .records
            .iter()
            .rev()
            .take(opts.window)
            .map(|r| relative_gap(r.augmented, r.true_objective))
            .collect();
        let window_gap = if gaps.is_empty() {
            relative_gap(last_augmented, last_true)
        } else {
            gaps.iter().copied().fold(0.0, f64::max)
        };
        trace.records.extend(inner.trace.records);
        outer += 1;

        // multiplier and penalty update, performed before the convergence
        // test as in a repeat-until loop
        let sigma = j.total();
        let (_, _, residuals) = problem.penalty_term(&sigma, &phis, &pdd.tau, &pdd.penalty());
        for (nu, g) in pdd.nu.iter_mut().zip(&residuals) {
            *nu += g / pdd.rho;
        }
        pdd.rho = (pdd.zeta * pdd.rho).max(opts.rho_floor);
        let (term, _, _) = problem.penalty_term(&sigma, &phis, &pdd.tau, &pdd.penalty());
        let augmented_after = last_true - term;
        if opts.record_trace {
            trace.outer_updates.push(OuterUpdate {
                outer,
                after_iteration: inner_iterations,
                augmented_before: last_augmented,
                augmented_after,
                rho: pdd.rho,
                nu: pdd.nu.clone(),
            });
        }
        if window_gap <= opts.outer_tolerance && inner.converged {
            converged = true;
            break;
        }
        if outer >= opts.max_outer_iterations {
            break;
        }
    }

    let sigma = j.total();
    let (_, sensing_rates, residuals) = problem.penalty_term(&sigma, &phis, &pdd.tau, &pdd.penalty());
    let zs = model::effective_channels(channels, &theta)?;
    let secrecy_rates = zs
        .iter()
        .enumerate()
        .map(|(k, z)| model::secrecy_rate_with(z, &channels.v_t, &j, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(Solution {
        variant: config.system_variant,
        covariances: j,
        profile: theta,
        beamformers: phis,
        pdd,
        sum_secrecy_rate: last_true,
        clamped_sum_secrecy_rate: secrecy_rates.iter().map(|r| r.max(0.0)).sum(),
        secrecy_rates,
        augmented: last_augmented,
        sensing_rates,
        residuals,
        converged,
        inner_iterations,
        outer_iterations: outer,
        trace,
    })
}

/// Solves one benchmark: the metasurface links are removed for the
/// no-metasurface variant, and the profile projection follows the variant.
pub fn solve_variant(channels: &ChannelSet, config: &ScenarioConfig, opts: &SolverOptions) -> Result<Solution> {
    match config.system_variant {
        SystemVariant::NoRis => run_pdd(&channels.without_ris(), config, opts),
        SystemVariant::Star | SystemVariant::Cris => run_pdd(channels, config, opts),
    }
}
