//! Exhaustive search on a one-RRH, two-user instance with two subcarriers per band.
//!
//! With a single RRH there is no access interference, so for a fixed delay split the
//! uplink and downlink decouple. Each direction is searched over binary subcarrier
//! assignments and a geometric SINR grid per link, and the delay split over a grid.

use super::{reference_rate, QINV_1E_7};
use tactile_cran::phy_rates::BandModel;
use tactile_cran::scenario::{ChannelRealization, Direction, Scenario, ScenarioConfig};

const DELAY_GRID: usize = 24;

pub fn tiny() -> ScenarioConfig {
    ScenarioConfig {
        num_rrh: 1,
        pairs_per_slice: vec![1],
        access_subcarriers: 2,
        fronthaul_subcarriers: 2,
        ..ScenarioConfig::default()
    }
}

fn c_bits(s: &Scenario) -> f64 {
    let q = &s.qos;
    q.traffic_unit_bits * (1.0 / q.delta_user).ln() / q.theta_user.exp_m1()
}

struct Grid {
    sinr: Vec<f64>,
    access_rate: Vec<f64>,
    fronthaul_rate: Vec<f64>,
}

fn grid(s: &Scenario, levels: usize) -> Grid {
    let floor = BandModel::access(s)
        .sinr_floor
        .max(BandModel::fronthaul(s).sinr_floor)
        * (1.0 + 1e-5);
    let top: f64 = 1e4;
    let sinr: Vec<f64> = (0..levels)
        .map(|i| floor * (top / floor).powf(i as f64 / (levels - 1) as f64))
        .collect();
    let rate = |w: f64, g: f64| reference_rate(g, w, s.time_unit_s, QINV_1E_7).max(0.0);
    Grid {
        access_rate: sinr
            .iter()
            .map(|&g| rate(s.access_bandwidth_hz, g))
            .collect(),
        fronthaul_rate: sinr
            .iter()
            .map(|&g| rate(s.fronthaul_bandwidth_hz, g))
            .collect(),
        sinr,
    }
}

/// All (rate, power) pairs of one transmitter over a subset of subcarriers.
fn options(
    subset: &[usize],
    unit: &dyn Fn(usize) -> f64,
    g: &Grid,
    rates: &[f64],
) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0)];
    for &k in subset {
        let mut next = Vec::with_capacity(out.len() * g.sinr.len());
        for &(r, p) in &out {
            for l in 0..g.sinr.len() {
                next.push((r + rates[l], p + g.sinr[l] * unit(k)));
            }
        }
        out = next;
    }
    out
}

/// Cheapest power with rate at least `t` and power within `cap`.
fn cheapest(opts: &[(f64, f64)], t: f64, cap: f64) -> f64 {
    opts.iter()
        .filter(|o| o.0 >= t && o.1 <= cap)
        .map(|o| o.1)
        .fold(f64::INFINITY, f64::min)
}

const SUBSETS: [&[usize]; 4] = [&[], &[0], &[1], &[0, 1]];

fn disjoint(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|k| !b.contains(k))
}

/// Exhaustive minimum total power with `levels` SINR values per link.
pub fn exhaustive_power(s: &Scenario, c: &ChannelRealization, levels: usize) -> f64 {
    let g = grid(s, levels);
    let b = &s.budgets;
    let unit_ac =
        |q: Direction, u: usize| move |k: usize| s.access_noise_w() / c.access_gain(u, 0, k, q);
    let unit_fh = |q: Direction| move |k: usize| s.fronthaul_noise_w() / c.fronthaul_gain(0, k, q);
    let cb = c_bits(s);
    let budget = s.qos.delay_budget_s;

    // Downlink: per-user subsets; the fronthaul downlink is left idle, which only loosens C14.
    let dl_opts: Vec<Vec<Vec<(f64, f64)>>> = (0..2)
        .map(|u| {
            SUBSETS
                .iter()
                .map(|sub| options(sub, &unit_ac(Direction::Downlink, u), &g, &g.access_rate))
                .collect()
        })
        .collect();
    let dl_cost = |d_user: f64| -> f64 {
        let t = cb / d_user;
        let mut best = f64::INFINITY;
        for (i0, s0) in SUBSETS.iter().enumerate() {
            for (i1, s1) in SUBSETS.iter().enumerate() {
                if !disjoint(s0, s1) {
                    continue;
                }
                let p = cheapest(&dl_opts[0][i0], t, b.rrh_dl_w)
                    + cheapest(&dl_opts[1][i1], t, b.rrh_dl_w);
                if p <= b.rrh_dl_w {
                    best = best.min(p);
                }
            }
        }
        best
    };

    // Uplink access: (total rate, total power) over disjoint subsets, each user within its budget.
    let ul_user: Vec<Vec<Vec<(f64, f64)>>> = (0..2)
        .map(|u| {
            SUBSETS
                .iter()
                .map(|sub| {
                    options(sub, &unit_ac(Direction::Uplink, u), &g, &g.access_rate)
                        .into_iter()
                        .filter(|o| o.1 <= b.user_ul_w)
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut ul_access: Vec<(f64, f64)> = Vec::new();
    for (i0, s0) in SUBSETS.iter().enumerate() {
        for (i1, s1) in SUBSETS.iter().enumerate() {
            if !disjoint(s0, s1) {
                continue;
            }
            for a in &ul_user[0][i0] {
                for bb in &ul_user[1][i1] {
                    ul_access.push((a.0 + bb.0, a.1 + bb.1));
                }
            }
        }
    }
    let mut ul_fh: Vec<(f64, f64)> = SUBSETS
        .iter()
        .flat_map(|sub| options(sub, &unit_fh(Direction::Uplink), &g, &g.fronthaul_rate))
        .filter(|o| o.1 <= b.rrh_ul_w)
        .collect();
    ul_fh.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut suffix_min = vec![f64::INFINITY; ul_fh.len() + 1];
    for i in (0..ul_fh.len()).rev() {
        suffix_min[i] = suffix_min[i + 1].min(ul_fh[i].1);
    }
    let fh_at_least = |r: f64| suffix_min[ul_fh.partition_point(|o| o.0 < r)];
    let ul_cost = |d_rrh: f64, d_bbu: f64| -> f64 {
        let (tr, tb) = (cb / d_rrh, cb / d_bbu);
        ul_access
            .iter()
            .filter(|o| o.0 >= tr)
            .map(|o| o.1 + fh_at_least(o.0.max(tb)))
            .fold(f64::INFINITY, f64::min)
    };

    let mut best = f64::INFINITY;
    let step = budget / DELAY_GRID as f64;
    for ar in 1..DELAY_GRID {
        for ab in 1..(DELAY_GRID - ar) {
            let (dr, db) = (step * ar as f64, step * ab as f64);
            let du = budget - dr - db;
            best = best.min(ul_cost(dr, db) + dl_cost(du));
        }
    }
    best
}
