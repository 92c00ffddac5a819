#![allow(dead_code)]

pub mod dc;
pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactile_cran::dc_solver::Allocation;
use tactile_cran::scenario::{
    draw_channels, generate_scenario, ChannelRealization, Direction, Scenario, ScenarioConfig,
};

/// `Qinv(1e-7)`, from standard normal tables.
pub const QINV_1E_7: f64 = 5.199_337_582_192_818;

pub fn instance(seed: u64, config: ScenarioConfig) -> (Scenario, ChannelRealization) {
    let s = generate_scenario(&ScenarioConfig { seed, ..config }).unwrap();
    let c = draw_channels(&s, seed);
    (s, c)
}

pub fn small_config() -> ScenarioConfig {
    ScenarioConfig {
        access_subcarriers: 2,
        fronthaul_subcarriers: 2,
        ..ScenarioConfig::default()
    }
}

/// Random shares in [0.1, 1] and powers giving interference-free SINRs between 0.1 and 100.
pub fn random_allocation(s: &Scenario, c: &ChannelRealization, seed: u64) -> Allocation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Allocation::zeros(s);
    for q in Direction::ALL {
        for u in 0..s.num_users() {
            for k in 0..s.access_subcarriers {
                let i = a.access_index(q, u, k);
                a.access_share[i] = rng.gen_range(0.1..1.0);
                let g = 10f64.powf(rng.gen_range(-1.0..2.0));
                a.access_power[i] = g * s.access_noise_w() / c.access_gain(u, s.users[u].rrh, k, q);
            }
        }
        for j in 0..s.num_rrh {
            for k in 0..s.fronthaul_subcarriers {
                let i = a.fronthaul_index(q, j, k);
                a.fronthaul_share[i] = rng.gen_range(0.1..1.0);
                let g = 10f64.powf(rng.gen_range(-1.0..2.0));
                a.fronthaul_power[i] = g * s.fronthaul_noise_w() / c.fronthaul_gain(j, k, q);
            }
        }
    }
    a
}

/// Normal-approximation rate written out directly, without clamping.
pub fn reference_rate(gamma: f64, w: f64, t: f64, qinv: f64) -> f64 {
    let v = 1.0 - 1.0 / (1.0 + gamma).powi(2);
    w / std::f64::consts::LN_2 * ((1.0 + gamma).ln() - (v / (w * t)).sqrt() * qinv)
}

/// SINR of an access link computed from the raw gains.
pub fn reference_access_sinr(
    a: &Allocation,
    s: &Scenario,
    c: &ChannelRealization,
    q: Direction,
    u: usize,
    k: usize,
) -> f64 {
    let j = s.users[u].rrh;
    let mut interference = 0.0;
    for v in 0..s.num_users() {
        let jv = s.users[v].rrh;
        if jv == j {
            continue;
        }
        let g = match q {
            Direction::Downlink => c.access_gain(u, jv, k, q),
            Direction::Uplink => c.access_gain(v, j, k, q),
        };
        interference += a.access_share(q, v, k) * a.access_power(q, v, k) * g;
    }
    a.access_power(q, u, k) * c.access_gain(u, j, k, q) / (s.access_noise_w() + interference)
}
