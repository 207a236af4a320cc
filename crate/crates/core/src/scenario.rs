//! Scenario configuration, node geometry and seeded channel generation.
//!
//! All channels are stored already divided by the noise standard deviation
//! (`H_BS`, `H_Bk`, the BS-target steering rows and the self-interference
//! link), so downstream code works with unit-variance noise throughout.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::model::SensingSpec;

const BS_POSITION: [f64; 3] = [0.0, 0.0, 5.0];
const RIS_POSITION: [f64; 3] = [70.0, 10.0, 10.0];
const REFLECTION_CENTER: [f64; 3] = [150.0, -20.0, 2.0];
const TRANSMISSION_CENTER: [f64; 3] = [150.0, 40.0, 2.0];
const USER_DISK_RADIUS: f64 = 10.0;

// Independent RNG streams so that, for a fixed seed, links that do not
// involve the metasurface are identical whatever N_S or the variant is.
const STREAM_GEOMETRY: u64 = 0;
const STREAM_DIRECT: u64 = 1;
const STREAM_SELF_INTERFERENCE: u64 = 2;
const STREAM_BS_RIS: u64 = 3;
const STREAM_RIS_USER: u64 = 4;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

/// Noise power in watts for a PSD in dBm/Hz over `bandwidth_hz`.
pub fn noise_power_watts(psd_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watts(psd_dbm_hz + linear_to_db(bandwidth_hz))
}

/// Large-scale path loss `-30 - 10 ε log10(d)` in dB.
pub fn path_loss_db(distance_m: f64, exponent: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::Domain(format!(
            "path loss needs a positive distance, got {distance_m}"
        )));
    }
    Ok(-30.0 - 10.0 * exponent * distance_m.log10())
}

pub fn path_loss_linear(distance_m: f64, exponent: f64) -> Result<f64> {
    path_loss_db(distance_m, exponent).map(db_to_linear)
}

/// Half-wavelength ULA response: element `m` is `exp(j π m sin(azimuth))`.
pub fn steering_vector(azimuth: f64, n: usize) -> CVec {
    let s = azimuth.sin();
    CVec::from_fn(n, |m, _| C64::from_polar(1.0, PI * m as f64 * s))
}

/// Which side of the STAR-RIS a user is served from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RisSide {
    Reflection,
    Transmission,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SystemVariant {
    #[serde(rename = "star", alias = "STAR", alias = "Star")]
    Star,
    #[serde(rename = "cris", alias = "cRIS", alias = "CRIS", alias = "Cris")]
    Cris,
    #[serde(rename = "noris", alias = "NoRIS", alias = "NORIS", alias = "NoRis")]
    NoRis,
}

impl SystemVariant {
    pub const ALL: [SystemVariant; 3] = [SystemVariant::Star, SystemVariant::Cris, SystemVariant::NoRis];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemVariant::Star => "star",
            SystemVariant::Cris => "cris",
            SystemVariant::NoRis => "noris",
        }
    }

    pub fn has_ris(self) -> bool {
        !matches!(self, SystemVariant::NoRis)
    }
}

impl std::str::FromStr for SystemVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "star" | "star-ris" => Ok(SystemVariant::Star),
            "cris" => Ok(SystemVariant::Cris),
            "noris" | "none" | "no-ris" => Ok(SystemVariant::NoRis),
            other => Err(Error::Config(format!("unknown system variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for SystemVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossExponents {
    pub direct: f64,
    pub bs_ris: f64,
    pub ris_user: f64,
    pub bs_target: f64,
}

impl Default for PathLossExponents {
    fn default() -> Self {
        Self {
            direct: 3.6,
            bs_ris: 2.2,
            ris_user: 2.4,
            bs_target: 2.2,
        }
    }
}

/// Dimensional and physical parameters of one scenario, in linear units.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_user_antennas: usize,
    pub n_ris_elements: usize,
    pub n_users: usize,
    pub n_targets: usize,
    /// Watts.
    pub p_max: f64,
    /// Linear SINR threshold Γ_s.
    pub sensing_sinr_threshold: f64,
    pub mean_rcs: f64,
    /// Watts.
    pub noise_power: f64,
    /// Linear Rician K-factor.
    pub rician_factor: f64,
    pub path_loss_exponents: PathLossExponents,
    /// 0-based indices of the users served on the reflection side.
    pub reflection_user_indices: Vec<usize>,
    pub rng_seed: u64,
    pub system_variant: SystemVariant,
    /// Overrides the default `10 + 5 l` metre target ranges.
    pub target_distances: Option<Vec<f64>>,
    /// Overrides the default `20 l` degree target azimuths (radians here).
    pub target_azimuths: Option<Vec<f64>>,
    /// Draw user positions from `rng_seed` instead of the realization seed.
    pub freeze_positions: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_tx: 6,
            n_rx: 4,
            n_user_antennas: 2,
            n_ris_elements: 100,
            n_users: 4,
            n_targets: 2,
            p_max: dbm_to_watts(10.0),
            sensing_sinr_threshold: db_to_linear(5.0),
            mean_rcs: 0.5,
            noise_power: noise_power_watts(-174.0, 10e6),
            rician_factor: db_to_linear(3.0),
            path_loss_exponents: PathLossExponents::default(),
            reflection_user_indices: vec![0, 1],
            rng_seed: 1,
            system_variant: SystemVariant::Star,
            target_distances: None,
            target_azimuths: None,
            freeze_positions: false,
        }
    }
}

fn half_split(n_users: usize) -> Vec<usize> {
    (0..n_users.div_ceil(2)).collect()
}

impl ScenarioConfig {
    /// Reduced-size scenario used for quick runs and CI.
    pub fn desk_scale() -> Self {
        Self {
            n_tx: 4,
            n_rx: 4,
            n_user_antennas: 2,
            n_ris_elements: 16,
            n_users: 2,
            n_targets: 1,
            reflection_user_indices: half_split(2),
            ..Self::default()
        }
    }

    /// Resets the reflection set to the first half of the users.
    pub fn with_users(mut self, n_users: usize) -> Self {
        self.n_users = n_users;
        self.reflection_user_indices = half_split(n_users);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_user_antennas", self.n_user_antennas),
            ("n_users", self.n_users),
            ("n_targets", self.n_targets),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.n_ris_elements == 0 && self.system_variant.has_ris() {
            return Err(Error::Config(
                "n_ris_elements may be 0 only for the noris variant".into(),
            ));
        }
        if self.system_variant == SystemVariant::Cris && self.n_ris_elements < 2 {
            return Err(Error::Config(
                "the cris variant needs at least two elements to split".into(),
            ));
        }
        for (name, v) in [
            ("p_max", self.p_max),
            ("mean_rcs", self.mean_rcs),
            ("noise_power", self.noise_power),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sensing_sinr_threshold >= 0.0) {
            return Err(Error::Config("sensing_sinr_threshold must be nonnegative".into()));
        }
        if !(self.rician_factor >= 0.0) {
            return Err(Error::Config("rician_factor must be nonnegative".into()));
        }
        let mut seen = vec![false; self.n_users];
        for &k in &self.reflection_user_indices {
            if k >= self.n_users {
                return Err(Error::Config(format!(
                    "reflection user index {k} out of range for {} users",
                    self.n_users
                )));
            }
            if seen[k] {
                return Err(Error::Config(format!("reflection user index {k} repeated")));
            }
            seen[k] = true;
        }
        for (name, v) in [
            ("target_distances", &self.target_distances),
            ("target_azimuths", &self.target_azimuths),
        ] {
            if let Some(v) = v {
                if v.len() != self.n_targets {
                    return Err(Error::Config(format!(
                        "{name} has {} entries for {} targets",
                        v.len(),
                        self.n_targets
                    )));
                }
            }
        }
        if let Some(d) = &self.target_distances {
            if d.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::Config("target distances must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn user_sides(&self) -> Vec<RisSide> {
        let mut sides = vec![RisSide::Transmission; self.n_users];
        for &k in &self.reflection_user_indices {
            if k < self.n_users {
                sides[k] = RisSide::Reflection;
            }
        }
        sides
    }

    /// Sensing-rate threshold `ln(1 + Γ_s)` in nats.
    pub fn sensing_rate_threshold(&self) -> f64 {
        self.sensing_sinr_threshold.ln_1p()
    }

    pub fn sensing_spec(&self) -> SensingSpec {
        SensingSpec {
            thresholds: vec![self.sensing_rate_threshold(); self.n_targets],
            mean_rcs: self.mean_rcs,
        }
    }

    pub fn target_distances(&self) -> Vec<f64> {
        self.target_distances
            .clone()
            .unwrap_or_else(|| (1..=self.n_targets).map(|l| 10.0 + 5.0 * l as f64).collect())
    }

    pub fn target_azimuths(&self) -> Vec<f64> {
        self.target_azimuths
            .clone()
            .unwrap_or_else(|| (1..=self.n_targets).map(|l| (20.0 * l as f64).to_radians()).collect())
    }

    pub fn from_json_str(text: &str) -> std::result::Result<Self, String> {
        let file: ScenarioConfigFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Ok(file.into_config())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ScenarioConfigFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let config = file.into_config();
        config.validate()?;
        Ok(config)
    }
}

/// On-disk form of [`ScenarioConfig`]: logarithmic units where the field name
/// says so, angles in degrees. Missing fields take the default scenario values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfigFile {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_user_antennas: usize,
    pub n_ris_elements: usize,
    pub n_users: usize,
    pub n_targets: usize,
    pub p_max_dbm: f64,
    pub sensing_sinr_threshold_db: f64,
    pub mean_rcs: f64,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub rician_factor_db: f64,
    pub path_loss_exponents: PathLossExponents,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reflection_user_indices: Option<Vec<usize>>,
    pub rng_seed: u64,
    pub system_variant: SystemVariant,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_distances_m: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_azimuths_deg: Option<Vec<f64>>,
    pub freeze_positions: bool,
}

impl Default for ScenarioConfigFile {
    fn default() -> Self {
        Self {
            n_tx: 6,
            n_rx: 4,
            n_user_antennas: 2,
            n_ris_elements: 100,
            n_users: 4,
            n_targets: 2,
            p_max_dbm: 10.0,
            sensing_sinr_threshold_db: 5.0,
            mean_rcs: 0.5,
            noise_psd_dbm_hz: -174.0,
            bandwidth_hz: 10e6,
            rician_factor_db: 3.0,
            path_loss_exponents: PathLossExponents::default(),
            reflection_user_indices: None,
            rng_seed: 1,
            system_variant: SystemVariant::Star,
            target_distances_m: None,
            target_azimuths_deg: None,
            freeze_positions: false,
        }
    }
}

impl ScenarioConfigFile {
    pub fn into_config(self) -> ScenarioConfig {
        ScenarioConfig {
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            n_user_antennas: self.n_user_antennas,
            n_ris_elements: self.n_ris_elements,
            n_users: self.n_users,
            n_targets: self.n_targets,
            p_max: dbm_to_watts(self.p_max_dbm),
            sensing_sinr_threshold: db_to_linear(self.sensing_sinr_threshold_db),
            mean_rcs: self.mean_rcs,
            noise_power: noise_power_watts(self.noise_psd_dbm_hz, self.bandwidth_hz),
            rician_factor: db_to_linear(self.rician_factor_db),
            path_loss_exponents: self.path_loss_exponents,
            reflection_user_indices: self.reflection_user_indices.unwrap_or_else(|| half_split(self.n_users)),
            rng_seed: self.rng_seed,
            system_variant: self.system_variant,
            target_distances: self.target_distances_m,
            target_azimuths: self
                .target_azimuths_deg
                .map(|v| v.into_iter().map(f64::to_radians).collect()),
            freeze_positions: self.freeze_positions,
        }
    }
}

/// Node positions for one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioGeometry {
    pub bs_position: [f64; 3],
    pub ris_position: [f64; 3],
    pub user_positions: Vec<[f64; 3]>,
    pub target_distances: Vec<f64>,
    pub target_azimuths: Vec<f64>,
}

fn sample_disk(rng: &mut ChaCha8Rng, center: [f64; 3]) -> [f64; 3] {
    let r = USER_DISK_RADIUS * rng.random::<f64>().sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    [center[0] + r * phi.cos(), center[1] + r * phi.sin(), center[2]]
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Azimuth of `to` as seen from `from`, in the horizontal plane.
fn azimuth(from: [f64; 3], to: [f64; 3]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl ScenarioGeometry {
    /// Users are placed uniformly in the 10 m disk of their side.
    pub fn sample(config: &ScenarioConfig, seed: u64) -> Self {
        let mut rng = stream_rng(seed, STREAM_GEOMETRY);
        let user_positions = config
            .user_sides()
            .into_iter()
            .map(|side| match side {
                RisSide::Reflection => sample_disk(&mut rng, REFLECTION_CENTER),
                RisSide::Transmission => sample_disk(&mut rng, TRANSMISSION_CENTER),
            })
            .collect();
        Self {
            bs_position: BS_POSITION,
            ris_position: RIS_POSITION,
            user_positions,
            target_distances: config.target_distances(),
            target_azimuths: config.target_azimuths(),
        }
    }
}

/// All (noise-normalized) channels of one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// `N_S x N_T`, BS to metasurface.
    pub h_bs: CMat,
    /// `K` matrices `N_U x N_T`, direct BS to user links.
    pub h_bk: Vec<CMat>,
    /// `K` matrices `N_U x N_S`, metasurface to user links.
    pub h_sk: Vec<CMat>,
    /// `L x N_T`, row `l` is the BS-to-target steering row.
    pub v_t: CMat,
    /// `L` receive steering vectors of length `N_R`.
    pub v_r: Vec<CVec>,
    /// `N_R x N_T` self-interference.
    pub g_si: CMat,
    pub user_sides: Vec<RisSide>,
}

fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, variance: f64) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = complex_gaussian(rng, variance);
        }
    }
    m
}

fn rician_matrix(rng: &mut ChaCha8Rng, los: CMat, path_gain: f64, rician_factor: f64) -> CMat {
    let nlos = gaussian_matrix(rng, los.nrows(), los.ncols(), 1.0);
    let los_w = (rician_factor / (1.0 + rician_factor)).sqrt();
    let nlos_w = (1.0 / (1.0 + rician_factor)).sqrt();
    (los.scale(los_w) + nlos.scale(nlos_w)).scale(path_gain.sqrt())
}

/// Draws every channel of one realization. Deterministic in `seed`.
pub fn generate_channels(config: &ScenarioConfig, geometry: &ScenarioGeometry, seed: u64) -> Result<ChannelSet> {
    config.validate()?;
    let (nt, nr, nu, ns, k_users, l_targets) = (
        config.n_tx,
        config.n_rx,
        config.n_user_antennas,
        config.n_ris_elements,
        config.n_users,
        config.n_targets,
    );
    let sigma = config.noise_power.sqrt();
    let ple = config.path_loss_exponents;
    let bs = geometry.bs_position;
    let ris = geometry.ris_position;

    let mut direct_rng = stream_rng(seed, STREAM_DIRECT);
    let mut h_bk = Vec::with_capacity(k_users);
    for &pos in &geometry.user_positions {
        let gain = path_loss_linear(distance(bs, pos), ple.direct)?;
        h_bk.push(gaussian_matrix(&mut direct_rng, nu, nt, gain).unscale(sigma));
    }

    // Rayleigh with variance σ² before normalization, so unit variance after.
    let mut si_rng = stream_rng(seed, STREAM_SELF_INTERFERENCE);
    let g_si = gaussian_matrix(&mut si_rng, nr, nt, config.noise_power).unscale(sigma);

    let distances = &geometry.target_distances;
    let azimuths = &geometry.target_azimuths;
    let mut v_t = CMat::zeros(l_targets, nt);
    let mut v_r = Vec::with_capacity(l_targets);
    for l in 0..l_targets {
        let gain = path_loss_linear(distances[l], ple.bs_target)?;
        let a_t = steering_vector(azimuths[l], nt);
        for m in 0..nt {
            v_t[(l, m)] = a_t[m].conj() * (gain.sqrt() / sigma);
        }
        v_r.push(steering_vector(azimuths[l], nr));
    }

    let (h_bs, h_sk) = if config.system_variant.has_ris() {
        let mut bs_ris_rng = stream_rng(seed, STREAM_BS_RIS);
        let a_ris = steering_vector(azimuth(ris, bs), ns);
        let a_bs = steering_vector(azimuth(bs, ris), nt);
        let los = &a_ris * a_bs.adjoint();
        let gain = path_loss_linear(distance(bs, ris), ple.bs_ris)?;
        let h_bs = rician_matrix(&mut bs_ris_rng, los, gain, config.rician_factor).unscale(sigma);

        let mut ris_user_rng = stream_rng(seed, STREAM_RIS_USER);
        let mut h_sk = Vec::with_capacity(k_users);
        for &pos in &geometry.user_positions {
            let a_user = steering_vector(azimuth(pos, ris), nu);
            let a_ris = steering_vector(azimuth(ris, pos), ns);
            let los = &a_user * a_ris.adjoint();
            let gain = path_loss_linear(distance(ris, pos), ple.ris_user)?;
            h_sk.push(rician_matrix(&mut ris_user_rng, los, gain, config.rician_factor));
        }
        (h_bs, h_sk)
    } else {
        (CMat::zeros(ns, nt), (0..k_users).map(|_| CMat::zeros(nu, ns)).collect())
    };

    Ok(ChannelSet {
        h_bs,
        h_bk,
        h_sk,
        v_t,
        v_r,
        g_si,
        user_sides: config.user_sides(),
    })
}

/// Samples the geometry and channels of realization `seed`.
pub fn realize(config: &ScenarioConfig, seed: u64) -> Result<(ScenarioGeometry, ChannelSet)> {
    let geometry_seed = if config.freeze_positions { config.rng_seed } else { seed };
    let geometry = ScenarioGeometry::sample(config, geometry_seed);
    let channels = generate_channels(config, &geometry, seed)?;
    Ok((geometry, channels))
}

const DUMP_MAGIC: &[u8; 8] = b"STARCH01";

impl ChannelSet {
    pub fn n_tx(&self) -> usize {
        self.h_bs.ncols().max(self.v_t.ncols())
    }

    pub fn n_rx(&self) -> usize {
        self.g_si.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.h_bk.len()
    }

    pub fn n_targets(&self) -> usize {
        self.v_r.len()
    }

    pub fn n_ris_elements(&self) -> usize {
        self.h_bs.nrows()
    }

    pub fn n_user_antennas(&self) -> usize {
        self.h_bk.first().map_or(0, |m| m.nrows())
    }

    /// `V_Rl = v_R(φ_l) v_T(φ_l)`, an `N_R x N_T` rank-one matrix.
    pub fn v_rl(&self, l: usize) -> CMat {
        &self.v_r[l] * self.v_t.row(l)
    }

    pub fn has_ris_links(&self) -> bool {
        self.h_bs.iter().any(|z| z.norm_sqr() > 0.0) && self.h_sk.iter().any(|m| m.iter().any(|z| z.norm_sqr() > 0.0))
    }

    pub fn without_ris(&self) -> Self {
        let mut out = self.clone();
        out.h_bs.fill(C64::new(0.0, 0.0));
        for m in &mut out.h_sk {
            m.fill(C64::new(0.0, 0.0));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        crate::linalg::is_finite(&self.h_bs)
            && self.h_bk.iter().all(crate::linalg::is_finite)
            && self.h_sk.iter().all(crate::linalg::is_finite)
            && crate::linalg::is_finite(&self.v_t)
            && crate::linalg::is_finite(&self.g_si)
    }

    /// Little-endian dump: magic, six `u32` dimensions
    /// `(N_T, N_R, N_U, N_S, K, L)`, one side byte per user (0 reflection,
    /// 1 transmission), then `H_BS`, every `H_Bk`, every `H_Sk`, `V_T`, every
    /// `v_R`, and `G`, each row-major as `(f32 re, f32 im)` pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        let dims = [
            self.n_tx(),
            self.n_rx(),
            self.n_user_antennas(),
            self.n_ris_elements(),
            self.n_users(),
            self.n_targets(),
        ];
        for d in dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for side in &self.user_sides {
            w.write_all(&[matches!(side, RisSide::Transmission) as u8])?;
        }
        let mut put = |m: &CMat| -> std::io::Result<()> {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    let z = m[(r, c)];
                    w.write_all(&(z.re as f32).to_le_bytes())?;
                    w.write_all(&(z.im as f32).to_le_bytes())?;
                }
            }
            Ok(())
        };
        put(&self.h_bs)?;
        for m in &self.h_bk {
            put(m)?;
        }
        for m in &self.h_sk {
            put(m)?;
        }
        put(&self.v_t)?;
        for v in &self.v_r {
            put(&CMat::from_column_slice(v.len(), 1, v.as_slice()))?;
        }
        put(&self.g_si)
    }

    pub fn read_binary<R: Read>(mut r: R) -> std::io::Result<Self> {
        use std::io::{Error as IoError, ErrorKind};
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(IoError::new(ErrorKind::InvalidData, "bad channel dump magic"));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let [nt, nr, nu, ns, k, l] = dims;
        let mut user_sides = Vec::with_capacity(k);
        for _ in 0..k {
            let mut b = [0u8; 1];
            r.read_exact(&mut b)?;
            user_sides.push(if b[0] == 0 {
                RisSide::Reflection
            } else {
                RisSide::Transmission
            });
        }
        let mut get = |rows: usize, cols: usize| -> std::io::Result<CMat> {
            let mut m = CMat::zeros(rows, cols);
            let mut buf = [0u8; 8];
            for rr in 0..rows {
                for cc in 0..cols {
                    r.read_exact(&mut buf)?;
                    let re = f32::from_le_bytes(buf[..4].try_into().unwrap());
                    let im = f32::from_le_bytes(buf[4..].try_into().unwrap());
                    m[(rr, cc)] = C64::new(re as f64, im as f64);
                }
            }
            Ok(m)
        };
        let h_bs = get(ns, nt)?;
        let h_bk = (0..k).map(|_| get(nu, nt)).collect::<std::io::Result<Vec<_>>>()?;
        let h_sk = (0..k).map(|_| get(nu, ns)).collect::<std::io::Result<Vec<_>>>()?;
        let v_t = get(l, nt)?;
        let v_r = (0..l)
            .map(|_| get(nr, 1).map(|m| m.column(0).into_owned()))
            .collect::<std::io::Result<Vec<_>>>()?;
        let g_si = get(nr, nt)?;
        Ok(Self {
            h_bs,
            h_bk,
            h_sk,
            v_t,
            v_r,
            g_si,
            user_sides,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_loss_reference_values() {
        assert!((path_loss_db(1.0, 3.6).unwrap() + 30.0).abs() < 1e-12);
        assert!((path_loss_db(10.0, 2.0).unwrap() + 50.0).abs() < 1e-12);
        assert!((path_loss_db(100.0, 3.6).unwrap() + 102.0).abs() < 1e-12);
        assert!(path_loss_db(0.0, 2.0).is_err());
        assert!(path_loss_db(-3.0, 2.0).is_err());
    }

    #[test]
    fn steering_vector_examples() {
        let v = steering_vector(0.0, 4);
        assert!(v.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
        let single = steering_vector(1.234, 1);
        assert_eq!(single.len(), 1);
        assert!((single[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        let half = steering_vector(PI / 2.0, 2);
        assert!((half[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn default_config_has_scenario_values() {
        let c = ScenarioConfig::default();
        assert_eq!((c.n_tx, c.n_rx, c.n_user_antennas, c.n_ris_elements), (6, 4, 2, 100));
        assert_eq!((c.n_users, c.n_targets), (4, 2));
        assert!((c.p_max - 0.01).abs() < 1e-15);
        assert!((c.sensing_sinr_threshold - 10f64.powf(0.5)).abs() < 1e-12);
        assert!((watts_to_dbm(c.noise_power) + 104.0).abs() < 1e-9);
        assert_eq!(c.reflection_user_indices, vec![0, 1]);
        c.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_inputs() {
        let mut c = ScenarioConfig::desk_scale();
        c.reflection_user_indices = vec![0, 0];
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::desk_scale();
        c.n_ris_elements = 0;
        assert!(c.validate().is_err());
        c.system_variant = SystemVariant::NoRis;
        c.validate().unwrap();
        let mut c = ScenarioConfig::desk_scale();
        c.p_max = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn geometry_follows_layout() {
        let c = ScenarioConfig::default();
        let g = ScenarioGeometry::sample(&c, 7);
        assert_eq!(g.target_distances, vec![15.0, 20.0]);
        assert!((g.target_azimuths[1] - 40f64.to_radians()).abs() < 1e-15);
        for (k, p) in g.user_positions.iter().enumerate() {
            let center = if k < 2 { REFLECTION_CENTER } else { TRANSMISSION_CENTER };
            assert!(distance(*p, center) <= USER_DISK_RADIUS + 1e-12);
            assert_eq!(p[2], 2.0);
        }
    }

    #[test]
    fn channels_are_deterministic_and_shaped() {
        let c = ScenarioConfig::desk_scale();
        let (_, a) = realize(&c, 11).unwrap();
        let (_, b) = realize(&c, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.h_bs.shape(), (16, 4));
        assert_eq!(a.h_sk[0].shape(), (2, 16));
        assert_eq!(a.v_t.shape(), (1, 4));
        let (_, other) = realize(&c, 12).unwrap();
        assert_ne!(a.h_bk[0], other.h_bk[0]);
    }

    #[test]
    fn noris_zeroes_metasurface_links_only() {
        let mut c = ScenarioConfig::desk_scale();
        let (_, star) = realize(&c, 3).unwrap();
        c.system_variant = SystemVariant::NoRis;
        let (_, none) = realize(&c, 3).unwrap();
        assert!(none.h_bs.iter().all(|z| z.norm() == 0.0));
        assert!(none.h_sk.iter().all(|m| m.iter().all(|z| z.norm() == 0.0)));
        assert_eq!(star.h_bk, none.h_bk);
        assert_eq!(star.v_t, none.v_t);
        assert_eq!(star.g_si, none.g_si);
    }

    #[test]
    fn direct_links_do_not_depend_on_metasurface_size() {
        let mut c = ScenarioConfig::desk_scale();
        let (_, small) = realize(&c, 5).unwrap();
        c.n_ris_elements = 64;
        let (_, large) = realize(&c, 5).unwrap();
        assert_eq!(small.h_bk, large.h_bk);
        assert_eq!(small.g_si, large.g_si);
    }

    #[test]
    fn self_interference_has_unit_variance_after_normalization() {
        let mut c = ScenarioConfig::desk_scale();
        c.n_rx = 100;
        c.n_tx = 1000;
        c.system_variant = SystemVariant::NoRis;
        let (_, ch) = realize(&c, 99).unwrap();
        let n = ch.g_si.len() as f64;
        let var = ch.g_si.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn rician_power_matches_path_loss() {
        let mut c = ScenarioConfig::desk_scale();
        c.n_ris_elements = 1000;
        c.n_tx = 100;
        let (g, ch) = realize(&c, 4).unwrap();
        let gain = path_loss_linear(distance(g.bs_position, g.ris_position), 2.2).unwrap();
        let mean = ch.h_bs.iter().map(|z| z.norm_sqr()).sum::<f64>() / ch.h_bs.len() as f64 * c.noise_power;
        assert!((mean / gain - 1.0).abs() < 0.03, "ratio {}", mean / gain);
    }

    #[test]
    fn receive_steering_norm_and_rank_one() {
        let c = ScenarioConfig::default();
        let (_, ch) = realize(&c, 1).unwrap();
        for l in 0..2 {
            assert!((ch.v_r[l].norm_squared() - 4.0).abs() < 1e-12);
            let (values, _) = crate::linalg::hermitian_eigen(&(ch.v_rl(l).adjoint() * ch.v_rl(l)));
            assert!(values[1].abs() < 1e-9 * values[0]);
        }
    }

    #[test]
    fn binary_dump_roundtrip_to_f32_precision() {
        let c = ScenarioConfig::desk_scale();
        let (_, ch) = realize(&c, 2).unwrap();
        let mut buf = Vec::new();
        ch.write_binary(&mut buf).unwrap();
        let back = ChannelSet::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.user_sides, ch.user_sides);
        let rel = (&back.v_t - &ch.v_t).norm() / ch.v_t.norm();
        assert!(rel < 1e-6);
        assert_eq!(back.h_sk[1].shape(), ch.h_sk[1].shape());
    }

    #[test]
    fn config_file_uses_log_units_and_degrees() {
        let c = ScenarioConfig::from_json_str(
            r#"{"n_ris_elements": 8, "p_max_dbm": 20, "target_azimuths_deg": [30, 60],
                "system_variant": "cRIS"}"#,
        )
        .unwrap();
        assert_eq!(c.n_ris_elements, 8);
        assert!((c.p_max - 0.1).abs() < 1e-15);
        assert!((c.target_azimuths.unwrap()[0] - PI / 6.0).abs() < 1e-15);
        assert_eq!(c.system_variant, SystemVariant::Cris);
        assert!(ScenarioConfig::from_json_str(r#"{"bogus": 1}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn path_loss_decreases_with_distance_and_exponent(
                d in 1.001f64..1e4, extra in 0.01f64..100.0, eps in 0.5f64..5.0, deps in 0.01f64..2.0,
            ) {
                let base = path_loss_db(d, eps).unwrap();
                prop_assert!(path_loss_db(d + extra, eps).unwrap() < base);
                prop_assert!(path_loss_db(d, eps + deps).unwrap() < base);
            }

            #[test]
            fn steering_entries_are_unit_modulus(az in -PI..PI, n in 1usize..64) {
                let v = steering_vector(az, n);
                prop_assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
                prop_assert!((v.norm_squared() - n as f64).abs() < 1e-9);
            }
        }
    }
}
