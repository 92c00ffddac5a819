//! Problem instances: topology, slices, user pairs and Rayleigh channel draws.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Links shorter than this are clamped so path loss stays bounded.
pub const MIN_LINK_DISTANCE_M: f64 = 10.0;

/// Attempts at placing RRHs before giving up on the separation rule.
const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: String, message: String },
}

/// Transmission direction. Uplink is index 0 and downlink index 1 in every tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Uplink, Direction::Downlink];

    pub fn index(self) -> usize {
        match self {
            Direction::Uplink => 0,
            Direction::Downlink => 1,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// Delay and reliability knobs as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QosConfig {
    pub theta_rrh: f64,
    pub theta_bbu: f64,
    pub theta_user: f64,
    pub delay_budget_ms: f64,
    pub delta_rrh: f64,
    pub delta_bbu: f64,
    pub delta_user: f64,
    pub error_threshold: f64,
    pub eta_rrh: f64,
    pub eta_bbu: f64,
    pub eta_user: f64,
    /// Size of one arrival in the queue model. Arrival rates and the
    /// rate thresholds of the delay constraints are counted in these units.
    pub traffic_unit_bits: f64,
}

impl Default for QosConfig {
    fn default() -> Self {
        QosConfig {
            theta_rrh: 10.0,
            theta_bbu: 10.0,
            theta_user: 10.0,
            delay_budget_ms: 1.0,
            delta_rrh: 1e-3,
            delta_bbu: 1e-3,
            delta_user: 1e-3,
            error_threshold: 1e-7,
            eta_rrh: 1.0,
            eta_bbu: 1.0,
            eta_user: 1.0,
            traffic_unit_bits: 1e6,
        }
    }
}

/// Everything needed to generate a [`Scenario`]. Powers are in dBm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Seed for placement and pairing.
    pub seed: u64,
    pub num_rrh: usize,
    /// Number of user pairs in each slice; the slice count is the length.
    pub pairs_per_slice: Vec<usize>,
    pub access_subcarriers: usize,
    pub fronthaul_subcarriers: usize,
    pub access_subcarrier_bandwidth_hz: f64,
    pub fronthaul_subcarrier_bandwidth_hz: f64,
    pub time_unit_ms: f64,
    pub packet_bits: f64,
    pub rrh_dl_power_dbm: f64,
    pub rrh_ul_power_dbm: f64,
    pub bbu_dl_power_dbm: f64,
    pub user_ul_power_dbm: f64,
    pub noise_psd_dbm_per_hz: f64,
    /// Reserved rate per slice and direction relative to the access band
    /// (`access_subcarriers * access_subcarrier_bandwidth_hz`).
    pub reservation_bps_per_hz: f64,
    pub area_km2: f64,
    pub bbu_rrh_distance_m: f64,
    pub min_rrh_separation_m: f64,
    pub pathloss_access: f64,
    pub pathloss_fronthaul: f64,
    pub qos: QosConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            num_rrh: 3,
            pairs_per_slice: vec![2, 1],
            access_subcarriers: 8,
            fronthaul_subcarriers: 8,
            access_subcarrier_bandwidth_hz: 2e6,
            fronthaul_subcarrier_bandwidth_hz: 2e6,
            time_unit_ms: 1.0,
            packet_bits: 160.0,
            rrh_dl_power_dbm: 43.0,
            rrh_ul_power_dbm: 43.0,
            bbu_dl_power_dbm: 46.0,
            user_ul_power_dbm: 23.0,
            noise_psd_dbm_per_hz: -174.0,
            reservation_bps_per_hz: 0.0,
            area_km2: 10.0,
            bbu_rrh_distance_m: 1000.0,
            min_rrh_separation_m: 200.0,
            pathloss_access: 3.0,
            pathloss_fronthaul: 3.0,
            qos: QosConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Full-bandwidth setting: 100 MHz access and fronthaul in 2 MHz subcarriers.
    pub fn full_scale() -> Self {
        ScenarioConfig {
            access_subcarriers: 50,
            fronthaul_subcarriers: 50,
            ..ScenarioConfig::default()
        }
    }

    /// Reads a JSON file (`.json`) or TOML file (anything else).
    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| ScenarioError::Parse {
            path: path.display().to_string(),
            message,
        })
    }

    fn check(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::InvalidConfig(m.to_string()));
        if self.num_rrh == 0 {
            return bad("num_rrh must be at least 1");
        }
        if self.pairs_per_slice.is_empty() {
            return bad("at least one slice is required");
        }
        if self.pairs_per_slice.iter().any(|&p| p == 0) {
            return bad("every slice needs at least one user pair");
        }
        if self.access_subcarriers == 0 || self.fronthaul_subcarriers == 0 {
            return bad("subcarrier counts must be at least 1");
        }
        let positive = [
            (
                "access_subcarrier_bandwidth_hz",
                self.access_subcarrier_bandwidth_hz,
            ),
            (
                "fronthaul_subcarrier_bandwidth_hz",
                self.fronthaul_subcarrier_bandwidth_hz,
            ),
            ("time_unit_ms", self.time_unit_ms),
            ("packet_bits", self.packet_bits),
            ("area_km2", self.area_km2),
            ("bbu_rrh_distance_m", self.bbu_rrh_distance_m),
            ("pathloss_access", self.pathloss_access),
            ("pathloss_fronthaul", self.pathloss_fronthaul),
            ("qos.delay_budget_ms", self.qos.delay_budget_ms),
            ("qos.traffic_unit_bits", self.qos.traffic_unit_bits),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.reservation_bps_per_hz >= 0.0) || self.min_rrh_separation_m < 0.0 {
            return bad("reservation rate and RRH separation must be non-negative");
        }
        let half_side = self.area_km2.sqrt() * 1000.0 / 2.0;
        if self.bbu_rrh_distance_m > half_side {
            return bad("RRH ring does not fit inside the coverage area");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudgets {
    pub rrh_dl_w: f64,
    pub rrh_ul_w: f64,
    pub bbu_dl_w: f64,
    pub user_ul_w: f64,
}

/// QoS parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosParams {
    pub theta_rrh: f64,
    pub theta_bbu: f64,
    pub theta_user: f64,
    pub delay_budget_s: f64,
    pub delta_rrh: f64,
    pub delta_bbu: f64,
    pub delta_user: f64,
    pub error_threshold: f64,
    pub eta_rrh: f64,
    pub eta_bbu: f64,
    pub eta_user: f64,
    pub traffic_unit_bits: f64,
}

impl From<&QosConfig> for QosParams {
    fn from(c: &QosConfig) -> Self {
        QosParams {
            theta_rrh: c.theta_rrh,
            theta_bbu: c.theta_bbu,
            theta_user: c.theta_user,
            delay_budget_s: c.delay_budget_ms * 1e-3,
            delta_rrh: c.delta_rrh,
            delta_bbu: c.delta_bbu,
            delta_user: c.delta_user,
            error_threshold: c.error_threshold,
            eta_rrh: c.eta_rrh,
            eta_bbu: c.eta_bbu,
            eta_user: c.eta_user,
            traffic_unit_bits: c.traffic_unit_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    /// Index in the originally generated user list; survives [`Scenario::restrict_users`].
    pub id: usize,
    pub slice: usize,
    /// Original id of the paired user.
    pub partner: usize,
    /// Serving (closest) RRH.
    pub rrh: usize,
    pub position: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub num_rrh: usize,
    pub num_slices: usize,
    pub pairs_per_slice: Vec<usize>,
    pub users: Vec<User>,
    pub access_subcarriers: usize,
    pub fronthaul_subcarriers: usize,
    pub access_bandwidth_hz: f64,
    pub fronthaul_bandwidth_hz: f64,
    pub time_unit_s: f64,
    pub packet_bits: f64,
    pub budgets: PowerBudgets,
    pub noise_psd_w_per_hz: f64,
    pub qos: QosParams,
    /// Reserved aggregate rate in bit/s, indexed `[slice][direction]`.
    pub reservation_bps: Vec<[f64; 2]>,
    pub area_km2: f64,
    pub bbu_rrh_distance_m: f64,
    pub pathloss_access: f64,
    pub pathloss_fronthaul: f64,
    pub rrh_positions: Vec<(f64, f64)>,
    pub bbu_position: (f64, f64),
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn access_noise_w(&self) -> f64 {
        self.noise_psd_w_per_hz * self.access_bandwidth_hz
    }

    pub fn fronthaul_noise_w(&self) -> f64 {
        self.noise_psd_w_per_hz * self.fronthaul_bandwidth_hz
    }

    pub fn access_blocklength(&self) -> f64 {
        self.access_bandwidth_hz * self.time_unit_s
    }

    pub fn fronthaul_blocklength(&self) -> f64 {
        self.fronthaul_bandwidth_hz * self.time_unit_s
    }

    pub fn users_at_rrh(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.users
            .iter()
            .enumerate()
            .filter(move |(_, u)| u.rrh == j)
            .map(|(i, _)| i)
    }

    pub fn users_in_slice(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.users
            .iter()
            .enumerate()
            .filter(move |(_, u)| u.slice == s)
            .map(|(i, _)| i)
    }

    pub fn total_budget_w(&self) -> f64 {
        let b = &self.budgets;
        self.num_rrh as f64 * (b.rrh_dl_w + b.rrh_ul_w)
            + b.bbu_dl_w
            + self.num_users() as f64 * b.user_ul_w
    }

    /// Keeps only the listed users (indices into the current list), preserving order.
    pub fn restrict_users(&self, keep: &[usize]) -> Scenario {
        let mut out = self.clone();
        out.users = keep.iter().map(|&i| self.users[i].clone()).collect();
        out
    }
}

pub fn pathloss_gain(fading: f64, distance_m: f64, exponent: f64) -> f64 {
    fading * distance_m.max(MIN_LINK_DISTANCE_M).powf(-exponent)
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Places the BBU at the centre of a square area, the RRHs on a circle of radius
/// `bbu_rrh_distance_m` around it, and users uniformly in the square.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let side = config.area_km2.sqrt() * 1000.0;
    let centre = (side / 2.0, side / 2.0);
    let radius = config.bbu_rrh_distance_m;

    let mut rrh_positions = Vec::new();
    let mut placed = false;
    for _ in 0..PLACEMENT_ATTEMPTS {
        rrh_positions = (0..config.num_rrh)
            .map(|_| {
                let a = rng.gen_range(0.0..2.0 * PI);
                (centre.0 + radius * a.cos(), centre.1 + radius * a.sin())
            })
            .collect();
        let separated = (0..config.num_rrh).all(|a| {
            (a + 1..config.num_rrh).all(|b| {
                distance(rrh_positions[a], rrh_positions[b]) >= config.min_rrh_separation_m
            })
        });
        if separated {
            placed = true;
            break;
        }
    }
    if !placed {
        return Err(ScenarioError::InvalidConfig(format!(
            "cannot place {} RRHs at least {} m apart",
            config.num_rrh, config.min_rrh_separation_m
        )));
    }

    let mut users = Vec::new();
    for (s, &pairs) in config.pairs_per_slice.iter().enumerate() {
        let first = users.len();
        for _ in 0..2 * pairs {
            let position = (rng.gen_range(0.0..side), rng.gen_range(0.0..side));
            let rrh = (0..config.num_rrh)
                .min_by(|&a, &b| {
                    distance(position, rrh_positions[a])
                        .total_cmp(&distance(position, rrh_positions[b]))
                })
                .expect("num_rrh >= 1");
            let id = users.len();
            users.push(User {
                id,
                slice: s,
                partner: id,
                rrh,
                position,
            });
        }
        let mut order: Vec<usize> = (first..users.len()).collect();
        order.shuffle(&mut rng);
        for pair in order.chunks(2) {
            users[pair[0]].partner = pair[1];
            users[pair[1]].partner = pair[0];
        }
    }

    let reserved = config.reservation_bps_per_hz
        * config.access_subcarriers as f64
        * config.access_subcarrier_bandwidth_hz;
    Ok(Scenario {
        num_rrh: config.num_rrh,
        num_slices: config.pairs_per_slice.len(),
        pairs_per_slice: config.pairs_per_slice.clone(),
        users,
        access_subcarriers: config.access_subcarriers,
        fronthaul_subcarriers: config.fronthaul_subcarriers,
        access_bandwidth_hz: config.access_subcarrier_bandwidth_hz,
        fronthaul_bandwidth_hz: config.fronthaul_subcarrier_bandwidth_hz,
        time_unit_s: config.time_unit_ms * 1e-3,
        packet_bits: config.packet_bits,
        budgets: PowerBudgets {
            rrh_dl_w: dbm_to_watts(config.rrh_dl_power_dbm),
            rrh_ul_w: dbm_to_watts(config.rrh_ul_power_dbm),
            bbu_dl_w: dbm_to_watts(config.bbu_dl_power_dbm),
            user_ul_w: dbm_to_watts(config.user_ul_power_dbm),
        },
        noise_psd_w_per_hz: dbm_to_watts(config.noise_psd_dbm_per_hz),
        qos: QosParams::from(&config.qos),
        reservation_bps: vec![[reserved; 2]; config.pairs_per_slice.len()],
        area_km2: config.area_km2,
        bbu_rrh_distance_m: config.bbu_rrh_distance_m,
        pathloss_access: config.pathloss_access,
        pathloss_fronthaul: config.pathloss_fronthaul,
        rrh_positions,
        bbu_position: centre,
    })
}

/// Linear power gains for one realization.
///
/// `access` is laid out `[user][rrh][k1][direction]` and `fronthaul` as
/// `[rrh][k2][direction]`; the accessors hide the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub num_users: usize,
    pub num_rrh: usize,
    pub access_subcarriers: usize,
    pub fronthaul_subcarriers: usize,
    pub access: Vec<f64>,
    pub fronthaul: Vec<f64>,
    pub seed: u64,
}

impl ChannelRealization {
    fn access_index(&self, user: usize, rrh: usize, k: usize, q: Direction) -> usize {
        ((user * self.num_rrh + rrh) * self.access_subcarriers + k) * 2 + q.index()
    }

    /// Gain between `user` and `rrh` on access subcarrier `k`.
    pub fn access_gain(&self, user: usize, rrh: usize, k: usize, q: Direction) -> f64 {
        self.access[self.access_index(user, rrh, k, q)]
    }

    pub fn fronthaul_gain(&self, rrh: usize, k: usize, q: Direction) -> f64 {
        self.fronthaul[(rrh * self.fronthaul_subcarriers + k) * 2 + q.index()]
    }

    pub fn matches(&self, scenario: &Scenario) -> bool {
        self.num_users == scenario.num_users()
            && self.num_rrh == scenario.num_rrh
            && self.access_subcarriers == scenario.access_subcarriers
            && self.fronthaul_subcarriers == scenario.fronthaul_subcarriers
    }

    /// Counterpart of [`Scenario::restrict_users`].
    pub fn restrict_users(&self, keep: &[usize]) -> ChannelRealization {
        let block = self.num_rrh * self.access_subcarriers * 2;
        let mut access = Vec::with_capacity(keep.len() * block);
        for &u in keep {
            access.extend_from_slice(&self.access[u * block..(u + 1) * block]);
        }
        ChannelRealization {
            num_users: keep.len(),
            access,
            ..self.clone()
        }
    }
}

/// Draws unit-mean exponential fading for every link and applies distance path loss.
pub fn draw_channels(scenario: &Scenario, seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (n, j_count, k1, k2) = (
        scenario.num_users(),
        scenario.num_rrh,
        scenario.access_subcarriers,
        scenario.fronthaul_subcarriers,
    );
    let mut access = Vec::with_capacity(n * j_count * k1 * 2);
    for user in &scenario.users {
        for rrh in &scenario.rrh_positions {
            let d = distance(user.position, *rrh);
            for _ in 0..k1 * 2 {
                let fading: f64 = rng.sample(Exp1);
                access.push(pathloss_gain(fading, d, scenario.pathloss_access));
            }
        }
    }
    let mut fronthaul = Vec::with_capacity(j_count * k2 * 2);
    for rrh in &scenario.rrh_positions {
        let d = distance(*rrh, scenario.bbu_position);
        for _ in 0..k2 * 2 {
            let fading: f64 = rng.sample(Exp1);
            fronthaul.push(pathloss_gain(fading, d, scenario.pathloss_fronthaul));
        }
    }
    ChannelRealization {
        num_users: n,
        num_rrh: j_count,
        access_subcarriers: k1,
        fronthaul_subcarriers: k2,
        access,
        fronthaul,
        seed,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoRrh,
    NoSubcarriers,
    NonPositiveBudget(&'static str),
    BlocklengthBelowOne { access: f64, fronthaul: f64 },
    NonPositivePacket,
    NonPositiveNoise,
    NonPositiveTheta(&'static str),
    DeltaOutOfRange(&'static str),
    ErrorThresholdOutOfRange(f64),
    EtaOutOfRange(&'static str),
    NonPositiveDelayBudget,
    NegativeReservation,
    BadUserIndex(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoRrh => write!(f, "at least one RRH is required"),
            Violation::NoSubcarriers => write!(f, "subcarrier sets must be non-empty"),
            Violation::NonPositiveBudget(n) => write!(f, "power budget {n} must be positive"),
            Violation::BlocklengthBelowOne { access, fronthaul } => write!(
                f,
                "blocklength below one channel use (access {access}, fronthaul {fronthaul})"
            ),
            Violation::NonPositivePacket => write!(f, "packet size must be positive"),
            Violation::NonPositiveNoise => write!(f, "noise PSD must be positive"),
            Violation::NonPositiveTheta(n) => write!(f, "QoS exponent {n} must be positive"),
            Violation::DeltaOutOfRange(n) => write!(f, "delay violation {n} out of (0,1)"),
            Violation::ErrorThresholdOutOfRange(v) => {
                write!(f, "error_threshold out of (0,1): {v}")
            }
            Violation::EtaOutOfRange(n) => write!(f, "buffer occupancy {n} out of (0,1]"),
            Violation::NonPositiveDelayBudget => write!(f, "delay budget must be positive"),
            Violation::NegativeReservation => write!(f, "reservation rates must be non-negative"),
            Violation::BadUserIndex(i) => write!(f, "user {i} refers to a missing RRH or slice"),
        }
    }
}

/// Lists every violated instance invariant; empty means valid.
pub fn validate(s: &Scenario) -> Vec<Violation> {
    let mut v = Vec::new();
    let open_unit = |x: f64| x > 0.0 && x < 1.0;
    if s.num_rrh == 0 {
        v.push(Violation::NoRrh);
    }
    if s.access_subcarriers == 0 || s.fronthaul_subcarriers == 0 {
        v.push(Violation::NoSubcarriers);
    }
    let b = &s.budgets;
    for (name, w) in [
        ("rrh_dl", b.rrh_dl_w),
        ("rrh_ul", b.rrh_ul_w),
        ("bbu_dl", b.bbu_dl_w),
        ("user_ul", b.user_ul_w),
    ] {
        if !(w > 0.0) {
            v.push(Violation::NonPositiveBudget(name));
        }
    }
    if !(s.access_blocklength() >= 1.0 && s.fronthaul_blocklength() >= 1.0) {
        v.push(Violation::BlocklengthBelowOne {
            access: s.access_blocklength(),
            fronthaul: s.fronthaul_blocklength(),
        });
    }
    if !(s.packet_bits > 0.0) {
        v.push(Violation::NonPositivePacket);
    }
    if !(s.noise_psd_w_per_hz > 0.0) {
        v.push(Violation::NonPositiveNoise);
    }
    let q = &s.qos;
    for (name, t) in [
        ("rrh", q.theta_rrh),
        ("bbu", q.theta_bbu),
        ("user", q.theta_user),
    ] {
        if !(t > 0.0) {
            v.push(Violation::NonPositiveTheta(name));
        }
    }
    for (name, d) in [
        ("rrh", q.delta_rrh),
        ("bbu", q.delta_bbu),
        ("user", q.delta_user),
    ] {
        if !open_unit(d) {
            v.push(Violation::DeltaOutOfRange(name));
        }
    }
    if !open_unit(q.error_threshold) {
        v.push(Violation::ErrorThresholdOutOfRange(q.error_threshold));
    }
    for (name, e) in [("rrh", q.eta_rrh), ("bbu", q.eta_bbu), ("user", q.eta_user)] {
        if !(e > 0.0 && e <= 1.0) {
            v.push(Violation::EtaOutOfRange(name));
        }
    }
    if !(q.delay_budget_s > 0.0) {
        v.push(Violation::NonPositiveDelayBudget);
    }
    if s.reservation_bps.iter().flatten().any(|&r| !(r >= 0.0)) {
        v.push(Violation::NegativeReservation);
    }
    for (i, u) in s.users.iter().enumerate() {
        if u.rrh >= s.num_rrh || u.slice >= s.num_slices {
            v.push(Violation::BadUserIndex(i));
        }
    }
    v
}
