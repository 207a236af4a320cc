//! Monte-Carlo sweeps over scenario parameters with paired seeds, the
//! per-iteration timing probe, and CSV/JSON result output.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ReceiveBeamformers, TransmitCovariances};
use crate::optimizer::{self, ConvergenceTrace, Problem, SolverOptions};
use crate::scenario::{self, ScenarioConfigFile, SystemVariant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NRisElements,
    PMaxDbm,
    SensingSinrDb,
    NUserAntennas,
    NTargets,
    None,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::NRisElements => "n_ris_elements",
            SweepAxis::PMaxDbm => "p_max_dbm",
            SweepAxis::SensingSinrDb => "sensing_sinr_db",
            SweepAxis::NUserAntennas => "n_user_antennas",
            SweepAxis::NTargets => "n_targets",
            SweepAxis::None => "none",
        }
    }

    fn apply(self, base: &ScenarioConfigFile, value: f64) -> Result<ScenarioConfigFile> {
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!(
                    "{} must be a positive integer, got {value}",
                    self.as_str()
                )))
            }
        };
        let mut out = base.clone();
        match self {
            SweepAxis::NRisElements => out.n_ris_elements = count()?,
            SweepAxis::PMaxDbm => out.p_max_dbm = value,
            SweepAxis::SensingSinrDb => out.sensing_sinr_threshold_db = value,
            SweepAxis::NUserAntennas => out.n_user_antennas = count()?,
            SweepAxis::NTargets => out.n_targets = count()?,
            SweepAxis::None => {}
        }
        Ok(out)
    }
}

/// Realization seed scheme shared by every sweep.
pub fn realization_seed(base_seed: u64, index: usize) -> u64 {
    base_seed * 1_000_000 + index as u64
}

/// Solver settings that may appear in a plan file; anything omitted keeps the
/// solver default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_inner_iterations: Option<usize>,
    pub max_outer_iterations: Option<usize>,
    pub inner_tolerance: Option<f64>,
    pub outer_tolerance: Option<f64>,
    pub initial_rho: Option<f64>,
    pub zeta: Option<f64>,
    pub armijo_shrink: Option<f64>,
    pub armijo_sufficient_increase: Option<f64>,
    pub armijo_max_backtracks: Option<usize>,
    pub armijo_normalize_initial_step: Option<bool>,
}

impl SolverSettings {
    pub fn apply(&self, mut opts: SolverOptions) -> SolverOptions {
        macro_rules! set {
            ($field:ident => $($target:ident).+) => {
                if let Some(v) = self.$field {
                    opts.$($target).+ = v;
                }
            };
        }
        set!(max_inner_iterations => max_inner_iterations);
        set!(max_outer_iterations => max_outer_iterations);
        set!(inner_tolerance => inner_tolerance);
        set!(outer_tolerance => outer_tolerance);
        set!(initial_rho => initial_rho);
        set!(zeta => zeta);
        set!(armijo_shrink => armijo.shrink);
        set!(armijo_sufficient_increase => armijo.sufficient_increase);
        set!(armijo_max_backtracks => armijo.max_backtracks);
        set!(armijo_normalize_initial_step => armijo.normalize_initial_step);
        opts
    }
}

/// Plan file as written by users; `base` overrides the desk-scale (or, with
/// `paper_scale`, the full-scale) scenario field by field.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlanFile {
    pub sweep_axis: SweepAxis,
    #[serde(default)]
    pub sweep_values: Vec<f64>,
    #[serde(default)]
    pub n_realizations: Option<usize>,
    pub variants: Vec<SystemVariant>,
    #[serde(default)]
    pub base: serde_json::Map<String, serde_json::Value>,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

fn default_base_seed() -> u64 {
    1
}

/// Desk-scale scenario in file form.
pub fn desk_scale_file() -> ScenarioConfigFile {
    ScenarioConfigFile {
        n_tx: 4,
        n_rx: 4,
        n_user_antennas: 2,
        n_ris_elements: 16,
        n_users: 2,
        n_targets: 1,
        ..ScenarioConfigFile::default()
    }
}

/// Scenario used by the timing probe; only `n_ris_elements` varies.
pub fn bench_scale_file() -> ScenarioConfigFile {
    desk_scale_file()
}

pub const DESK_REALIZATIONS: usize = 5;
pub const PAPER_REALIZATIONS: usize = 100;

/// A validated sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub n_realizations: usize,
    pub variants: Vec<SystemVariant>,
    pub base: ScenarioConfigFile,
    pub base_seed: u64,
    pub solver: SolverOptions,
    pub output_path: Option<PathBuf>,
}

impl ExperimentPlanFile {
    pub fn from_json_str(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn resolve(self, paper_scale: bool) -> Result<ExperimentPlan> {
        let defaults = if paper_scale {
            ScenarioConfigFile::default()
        } else {
            desk_scale_file()
        };
        let mut merged = serde_json::to_value(defaults).map_err(|e| Error::Config(e.to_string()))?;
        let obj = merged.as_object_mut().expect("struct serializes to an object");
        for (k, v) in self.base {
            obj.insert(k, v);
        }
        let base: ScenarioConfigFile =
            serde_json::from_value(merged).map_err(|e| Error::Config(format!("plan base: {e}")))?;
        let plan = ExperimentPlan {
            sweep_axis: self.sweep_axis,
            sweep_values: self.sweep_values,
            n_realizations: self.n_realizations.unwrap_or(if paper_scale {
                PAPER_REALIZATIONS
            } else {
                DESK_REALIZATIONS
            }),
            variants: self.variants,
            base,
            base_seed: self.base_seed,
            solver: self.solver.apply(SolverOptions::default()),
            output_path: self.output_path,
        };
        plan.validate()?;
        Ok(plan)
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(Error::Config("n_realizations must be at least 1".into()));
        }
        if self.sweep_axis != SweepAxis::None && self.sweep_values.is_empty() {
            return Err(Error::Config("sweep_values must be non-empty for a sweep axis".into()));
        }
        if self.sweep_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        for &value in &self.points() {
            self.sweep_axis.apply(&self.base, value)?.into_config().validate()?;
        }
        self.solver.validate()
    }

    /// Sweep values actually visited; a plan without an axis has one point.
    pub fn points(&self) -> Vec<f64> {
        if self.sweep_axis == SweepAxis::None {
            vec![0.0]
        } else {
            self.sweep_values.clone()
        }
    }
}

/// One solve of one variant on one realization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub variant: SystemVariant,
    pub sweep_axis: SweepAxis,
    pub sweep_value: f64,
    pub seed: u64,
    pub assr_nats: f64,
    pub assr_bits: f64,
    pub sensing_rates: Vec<f64>,
    pub min_sensing_rate: f64,
    pub converged: bool,
    pub iterations: usize,
    pub wall_ms: f64,
    pub error: Option<String>,
}

fn variant_order(v: SystemVariant) -> usize {
    SystemVariant::ALL.iter().position(|&x| x == v).unwrap_or(usize::MAX)
}

fn solve_row(
    plan: &ExperimentPlan,
    value: f64,
    variant: SystemVariant,
    seed: u64,
    channels: &std::result::Result<scenario::ChannelSet, String>,
) -> ResultRow {
    let started = Instant::now();
    let outcome = channels.clone().and_then(|ch| {
        let mut config = plan
            .sweep_axis
            .apply(&plan.base, value)
            .map_err(|e| e.to_string())?
            .into_config();
        config.system_variant = variant;
        let mut opts = plan.solver.clone();
        opts.solver_seed = seed;
        opts.record_trace = true;
        optimizer::solve_variant(&ch, &config, &opts).map_err(|e| e.to_string())
    });
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(sol) => ResultRow {
            variant,
            sweep_axis: plan.sweep_axis,
            sweep_value: value,
            seed,
            assr_nats: sol.sum_secrecy_rate,
            assr_bits: sol.sum_secrecy_rate / std::f64::consts::LN_2,
            min_sensing_rate: sol.sensing_rates.iter().copied().fold(f64::INFINITY, f64::min),
            sensing_rates: sol.sensing_rates,
            converged: sol.converged,
            iterations: sol.inner_iterations,
            wall_ms,
            error: None,
        },
        Err(e) => ResultRow {
            variant,
            sweep_axis: plan.sweep_axis,
            sweep_value: value,
            seed,
            assr_nats: f64::NAN,
            assr_bits: f64::NAN,
            sensing_rates: Vec::new(),
            min_sensing_rate: f64::NAN,
            converged: false,
            iterations: 0,
            wall_ms,
            error: Some(e),
        },
    }
}

/// Runs every (sweep value, realization) job; variants of one job share the
/// same channel draw. Rows are sorted by (variant, sweep value, seed).
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    plan.validate()?;
    if plan.variants.is_empty() {
        return Ok(Vec::new());
    }
    let points = plan.points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..plan.n_realizations).map(move |r| (p, r)))
        .collect();
    let mut rows: Vec<ResultRow> = jobs
        .par_iter()
        .flat_map_iter(|&(p, r)| {
            let value = points[p];
            let seed = realization_seed(plan.base_seed, r);
            // channels are drawn with every link present so the variants see
            // identical direct, target and self-interference channels
            let channels = plan
                .sweep_axis
                .apply(&plan.base, value)
                .map(|f| {
                    let mut config = f.into_config();
                    config.system_variant = SystemVariant::Star;
                    config
                })
                .and_then(|config| scenario::realize(&config, seed).map(|(_, ch)| ch))
                .map_err(|e| e.to_string());
            plan.variants
                .iter()
                .map(|&variant| solve_row(plan, value, variant, seed, &channels))
                .collect::<Vec<_>>()
        })
        .collect();
    rows.sort_by(|a, b| {
        variant_order(a.variant)
            .cmp(&variant_order(b.variant))
            .then(a.sweep_value.total_cmp(&b.sweep_value))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

/// Runs a plan on a dedicated pool of `workers` threads.
pub fn run_experiment_with_workers(plan: &ExperimentPlan, workers: usize) -> Result<Vec<ResultRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| run_experiment(plan))
}

pub const RESULTS_HEADER: &str =
    "variant,sweep_axis,sweep_value,seed,assr_nats,assr_bits,min_sensing_rate,converged,iterations,wall_ms";

pub fn write_results_csv<W: Write>(rows: &[ResultRow], w: W) -> std::result::Result<(), csv::Error> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    writer.write_record(RESULTS_HEADER.split(','))?;
    for r in rows {
        writer.write_record([
            r.variant.as_str().to_string(),
            r.sweep_axis.as_str().to_string(),
            format!("{}", r.sweep_value),
            r.seed.to_string(),
            format!("{:e}", r.assr_nats),
            format!("{:e}", r.assr_bits),
            format!("{:e}", r.min_sensing_rate),
            r.converged.to_string(),
            r.iterations.to_string(),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Mean and standard error of one (variant, sweep value) group.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryEntry {
    pub variant: SystemVariant,
    pub sweep_value: f64,
    pub n: usize,
    pub failures: usize,
    pub mean_assr_nats: f64,
    pub stderr_assr_nats: f64,
    pub mean_assr_bits: f64,
    pub stderr_assr_bits: f64,
    pub converged_fraction: f64,
}

/// Fraction of paired draws where STAR is at least as good as a benchmark.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedDominance {
    pub sweep_value: f64,
    pub benchmark: SystemVariant,
    pub pairs: usize,
    pub star_at_least_benchmark: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub sweep_axis: SweepAxis,
    pub groups: Vec<SummaryEntry>,
    pub paired_dominance: Vec<PairedDominance>,
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn summarize(rows: &[ResultRow]) -> Summary {
    let sweep_axis = rows.first().map_or(SweepAxis::None, |r| r.sweep_axis);
    let mut keys: Vec<(SystemVariant, f64)> = Vec::new();
    for r in rows {
        if !keys
            .iter()
            .any(|&(v, s)| v == r.variant && s.total_cmp(&r.sweep_value).is_eq())
        {
            keys.push((r.variant, r.sweep_value));
        }
    }
    let groups = keys
        .iter()
        .map(|&(variant, sweep_value)| {
            let members: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.variant == variant && r.sweep_value.total_cmp(&sweep_value).is_eq())
                .collect();
            let ok: Vec<&&ResultRow> = members.iter().filter(|r| r.error.is_none()).collect();
            let nats: Vec<f64> = ok.iter().map(|r| r.assr_nats).collect();
            let bits: Vec<f64> = ok.iter().map(|r| r.assr_bits).collect();
            let (mean_assr_nats, stderr_assr_nats) = mean_and_stderr(&nats);
            let (mean_assr_bits, stderr_assr_bits) = mean_and_stderr(&bits);
            SummaryEntry {
                variant,
                sweep_value,
                n: ok.len(),
                failures: members.len() - ok.len(),
                mean_assr_nats,
                stderr_assr_nats,
                mean_assr_bits,
                stderr_assr_bits,
                converged_fraction: members.iter().filter(|r| r.converged).count() as f64 / members.len().max(1) as f64,
            }
        })
        .collect();

    let mut paired_dominance = Vec::new();
    let mut values: Vec<f64> = keys.iter().map(|&(_, s)| s).collect();
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| a.total_cmp(b).is_eq());
    for &value in &values {
        for benchmark in [SystemVariant::Cris, SystemVariant::NoRis] {
            let mut pairs = 0;
            let mut wins = 0;
            for star in rows.iter().filter(|r| {
                r.variant == SystemVariant::Star && r.sweep_value.total_cmp(&value).is_eq() && r.error.is_none()
            }) {
                if let Some(other) = rows.iter().find(|r| {
                    r.variant == benchmark
                        && r.seed == star.seed
                        && r.sweep_value.total_cmp(&value).is_eq()
                        && r.error.is_none()
                }) {
                    pairs += 1;
                    if star.assr_nats >= other.assr_nats {
                        wins += 1;
                    }
                }
            }
            if pairs > 0 {
                paired_dominance.push(PairedDominance {
                    sweep_value: value,
                    benchmark,
                    pairs,
                    star_at_least_benchmark: wins as f64 / pairs as f64,
                });
            }
        }
    }
    Summary {
        sweep_axis,
        groups,
        paired_dominance,
    }
}

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_FILE: &str = "trace.csv";

/// Writes `results.csv`, `summary.json` and, when given, `trace.csv` into
/// `dir`, creating it if needed. Returns the written paths.
pub fn emit_results(rows: &[ResultRow], trace: Option<&ConvergenceTrace>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join(RESULTS_FILE);
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_results_csv(rows, std::io::BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.clone(),
        source,
    })?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summarize(rows)).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    written.push(path);

    if let Some(trace) = trace {
        let path = dir.join(TRACE_FILE);
        trace.write_csv_file(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Median per-inner-iteration wall time at one metasurface size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingPoint {
    pub n_ris_elements: usize,
    pub iterations: usize,
    pub median_ns: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingTable {
    pub points: Vec<TimingPoint>,
    /// Least-squares slope of log(time) against log(N_S); absent with fewer
    /// than two distinct sizes.
    pub slope: Option<f64>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if points.len() < 2 || sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Times `iterations` inner iterations (no early stop) for each metasurface
/// size on channels drawn from `base`.
pub fn timing_probe(base: &ScenarioConfigFile, sizes: &[usize], iterations: usize, seed: u64) -> Result<TimingTable> {
    let mut points = Vec::with_capacity(sizes.len());
    for &n_s in sizes {
        let mut file = base.clone();
        file.n_ris_elements = n_s;
        let config = file.into_config();
        let (_, channels) = scenario::realize(&config, seed)?;
        let problem = Problem::new(&channels, &config);
        let mut opts = SolverOptions {
            max_inner_iterations: iterations.max(1),
            inner_tolerance: f64::NEG_INFINITY,
            record_trace: true,
            ..SolverOptions::default()
        };
        // one trial per line search so every timed iteration does equal work
        opts.armijo.max_backtracks = 0;
        let mut rng = optimizer::solver_rng(seed);
        let theta = optimizer::initial_profile(config.system_variant, n_s, &mut rng);
        let phis = ReceiveBeamformers::random(config.n_rx, config.n_targets, &mut rng);
        let j = TransmitCovariances::zeros(config.n_users, config.n_targets, config.n_tx);
        let pdd = optimizer::PddState::new(config.n_targets, opts.initial_rho, opts.zeta);
        let inner = optimizer::run_inner(&problem, j, theta, phis, &pdd, &opts, &mut rng)?;
        let mut times: Vec<f64> = inner.trace.records.iter().map(|r| r.wall_ns as f64).collect();
        points.push(TimingPoint {
            n_ris_elements: n_s,
            iterations: times.len(),
            median_ns: median(&mut times),
        });
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.n_ris_elements as f64, p.median_ns)).collect();
    let slope = log_log_slope(&pairs);
    Ok(TimingTable { points, slope })
}
