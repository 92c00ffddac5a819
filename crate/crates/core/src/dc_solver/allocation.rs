use serde::{Deserialize, Serialize};

use crate::qos_delay::DelaySplit;
use crate::scenario::{Direction, Scenario};

/// Decision state of one instance.
///
/// Access tensors are laid out `[q][user][k1]`: each user is served by a single RRH, so
/// the RRH index is implied. Fronthaul tensors are `[q][rrh][k2]`. `alpha` is the
/// rate slack `[user][k1]` in bit/s; `alpha_reliability` is the error-probability
/// slack of each access link's reliability constraint, laid out like the access tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub num_users: usize,
    pub num_rrh: usize,
    pub access_subcarriers: usize,
    pub fronthaul_subcarriers: usize,
    pub access_power: Vec<f64>,
    pub access_share: Vec<f64>,
    pub fronthaul_power: Vec<f64>,
    pub fronthaul_share: Vec<f64>,
    pub delay: DelaySplit,
    pub alpha: Vec<f64>,
    pub alpha_reliability: Vec<f64>,
}

impl Allocation {
    /// All powers, shares and slacks zero; delay split into thirds.
    pub fn zeros(scenario: &Scenario) -> Self {
        let (n, j, k1, k2) = (
            scenario.num_users(),
            scenario.num_rrh,
            scenario.access_subcarriers,
            scenario.fronthaul_subcarriers,
        );
        Allocation {
            num_users: n,
            num_rrh: j,
            access_subcarriers: k1,
            fronthaul_subcarriers: k2,
            access_power: vec![0.0; 2 * n * k1],
            access_share: vec![0.0; 2 * n * k1],
            fronthaul_power: vec![0.0; 2 * j * k2],
            fronthaul_share: vec![0.0; 2 * j * k2],
            delay: DelaySplit::thirds(scenario),
            alpha: vec![0.0; n * k1],
            alpha_reliability: vec![0.0; 2 * n * k1],
        }
    }

    pub fn matches(&self, scenario: &Scenario) -> bool {
        self.num_users == scenario.num_users()
            && self.num_rrh == scenario.num_rrh
            && self.access_subcarriers == scenario.access_subcarriers
            && self.fronthaul_subcarriers == scenario.fronthaul_subcarriers
            && self.access_power.len() == 2 * self.num_users * self.access_subcarriers
            && self.access_share.len() == self.access_power.len()
            && self.fronthaul_power.len() == 2 * self.num_rrh * self.fronthaul_subcarriers
            && self.fronthaul_share.len() == self.fronthaul_power.len()
            && self.alpha.len() == self.num_users * self.access_subcarriers
            && self.alpha_reliability.len() == self.access_power.len()
            && self.delay.d_ul_rrh.len() == self.num_rrh
            && self.delay.d_dl_user.len() == self.num_users
    }

    pub fn access_index(&self, q: Direction, user: usize, k: usize) -> usize {
        (q.index() * self.num_users + user) * self.access_subcarriers + k
    }

    pub fn fronthaul_index(&self, q: Direction, rrh: usize, k: usize) -> usize {
        (q.index() * self.num_rrh + rrh) * self.fronthaul_subcarriers + k
    }

    pub fn access_power(&self, q: Direction, user: usize, k: usize) -> f64 {
        self.access_power[self.access_index(q, user, k)]
    }

    pub fn access_share(&self, q: Direction, user: usize, k: usize) -> f64 {
        self.access_share[self.access_index(q, user, k)]
    }

    pub fn fronthaul_power(&self, q: Direction, rrh: usize, k: usize) -> f64 {
        self.fronthaul_power[self.fronthaul_index(q, rrh, k)]
    }

    pub fn fronthaul_share(&self, q: Direction, rrh: usize, k: usize) -> f64 {
        self.fronthaul_share[self.fronthaul_index(q, rrh, k)]
    }

    /// Time-shared power `τ·p` of an access link.
    pub fn access_energy(&self, q: Direction, user: usize, k: usize) -> f64 {
        let i = self.access_index(q, user, k);
        self.access_share[i] * self.access_power[i]
    }

    pub fn fronthaul_energy(&self, q: Direction, rrh: usize, k: usize) -> f64 {
        let i = self.fronthaul_index(q, rrh, k);
        self.fronthaul_share[i] * self.fronthaul_power[i]
    }

    /// `Σ x·p + Σ τ·p` in watts.
    pub fn total_power(&self) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        dot(&self.access_share, &self.access_power)
            + dot(&self.fronthaul_share, &self.fronthaul_power)
    }

    /// Slack in normalized units: rate slack divided by `rate_scale` (bit/s) plus
    /// reliability slack.
    pub fn alpha_total(&self, rate_scale: f64) -> f64 {
        self.alpha.iter().sum::<f64>() / rate_scale + self.alpha_reliability.iter().sum::<f64>()
    }

    /// Largest normalized slack attached to each user over its subcarriers.
    pub fn alpha_per_user(&self, rate_scale: f64) -> Vec<f64> {
        let k1 = self.access_subcarriers;
        (0..self.num_users)
            .map(|u| {
                (0..k1).fold(0.0, |m: f64, k| {
                    let rel = Direction::ALL
                        .iter()
                        .map(|&q| self.alpha_reliability[self.access_index(q, u, k)])
                        .fold(0.0, f64::max);
                    m.max(self.alpha[u * k1 + k] / rate_scale).max(rel)
                })
            })
            .collect()
    }

    pub fn restrict_users(&self, keep: &[usize]) -> Self {
        let k1 = self.access_subcarriers;
        let pick = |v: &[f64], per_q: bool| -> Vec<f64> {
            let blocks = if per_q { 2 } else { 1 };
            let mut out = Vec::with_capacity(blocks * keep.len() * k1);
            for b in 0..blocks {
                for &u in keep {
                    let start = (b * self.num_users + u) * k1;
                    out.extend_from_slice(&v[start..start + k1]);
                }
            }
            out
        };
        Allocation {
            num_users: keep.len(),
            access_power: pick(&self.access_power, true),
            access_share: pick(&self.access_share, true),
            alpha: pick(&self.alpha, false),
            alpha_reliability: pick(&self.alpha_reliability, true),
            delay: self.delay.restrict_users(keep),
            ..self.clone()
        }
    }

    /// Every access and fronthaul power, in tensor order. Used for the convergence norm.
    pub fn power_vector(&self) -> Vec<f64> {
        self.access_power
            .iter()
            .chain(&self.fronthaul_power)
            .copied()
            .collect()
    }
}
