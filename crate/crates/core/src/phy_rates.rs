//! Finite-blocklength link rates, error probabilities and power-budget arithmetic.

use std::f64::consts::{LN_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dc_solver::Allocation;
use crate::scenario::{ChannelRealization, Direction, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("noise power must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("zero SINR: error probability is 1 by convention")]
    DegenerateSnr,
    #[error("allocation does not match the scenario dimensions")]
    IndexMismatch,
}

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Inverse of [`q_function`] by bisection, accurate to 1e-12 in the argument.
pub fn q_inverse(eps: f64) -> f64 {
    assert!(
        eps > 0.0 && eps < 1.0,
        "q_inverse needs eps in (0,1), got {eps}"
    );
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if q_function(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Channel dispersion `1 - 1/(1+γ)²`; exactly zero at γ = 0.
pub fn dispersion(gamma: f64) -> f64 {
    if gamma <= 0.0 {
        0.0
    } else {
        1.0 - 1.0 / ((1.0 + gamma) * (1.0 + gamma))
    }
}

pub fn sinr_access(power: f64, gain: f64, noise: f64, interference: f64) -> Result<f64, PhyError> {
    if !(noise > 0.0) {
        return Err(PhyError::NonPositiveNoise(noise));
    }
    Ok(power * gain / (noise + interference))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkRateInputs {
    pub power: f64,
    pub gain: f64,
    pub noise: f64,
    pub interference: f64,
    pub bandwidth: f64,
    pub time_unit: f64,
    pub packet_bits: f64,
    pub error_prob: f64,
}

/// Normal-approximation rate in bit/s, clamped at zero.
pub fn fbl_rate(inputs: &LinkRateInputs) -> f64 {
    let gamma = inputs.power * inputs.gain / (inputs.noise + inputs.interference);
    fbl_rate_from_sinr(gamma, inputs.bandwidth, inputs.time_unit, inputs.error_prob)
}

pub fn fbl_rate_from_sinr(gamma: f64, bandwidth: f64, time_unit: f64, eps: f64) -> f64 {
    let penalty = (dispersion(gamma) / (time_unit * bandwidth)).sqrt() * q_inverse(eps);
    (bandwidth / LN_2 * ((1.0 + gamma).ln() - penalty)).max(0.0)
}

/// Exact error probability of a packet of `packet_bits` bits sent in one time unit.
pub fn error_prob(
    gamma: f64,
    bandwidth: f64,
    time_unit: f64,
    packet_bits: f64,
) -> Result<f64, PhyError> {
    if !(gamma > 0.0) {
        return Err(PhyError::DegenerateSnr);
    }
    let n = bandwidth * time_unit;
    let arg = (n / dispersion(gamma)).sqrt() * ((1.0 + gamma).ln() - packet_bits * LN_2 / n);
    Ok(q_function(arg))
}

/// Constants of the three-piece linear surrogate of the error probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QApproxParams {
    pub a: f64,
    pub b: f64,
    pub halfwidth: f64,
}

impl QApproxParams {
    pub fn new(packet_bits: f64, blocklength: f64) -> Self {
        let a = 1.0 / (2.0 * PI * (2f64.powf(2.0 * packet_bits / blocklength) - 1.0).sqrt());
        let b = 2f64.powf(packet_bits / blocklength) - 1.0;
        QApproxParams {
            a,
            b,
            halfwidth: 1.0 / (2.0 * a * blocklength.sqrt()),
        }
    }

    /// Smallest SINR whose surrogate error probability is at most `xi`.
    pub fn sinr_floor(&self, blocklength: f64, xi: f64) -> f64 {
        let xi = xi.clamp(0.0, 1.0);
        self.b + (0.5 - xi) / (self.a * blocklength.sqrt())
    }
}

pub fn q_approx(gamma: f64, params: &QApproxParams, blocklength: f64) -> f64 {
    if gamma <= params.b - params.halfwidth {
        1.0
    } else if gamma >= params.b + params.halfwidth {
        0.0
    } else {
        (0.5 - params.a * blocklength.sqrt() * (gamma - params.b)).clamp(0.0, 1.0)
    }
}

/// Per-band constants for evaluating rates at the target reliability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandModel {
    pub bandwidth: f64,
    pub blocklength: f64,
    pub noise: f64,
    /// `Qinv(ξ)/sqrt(wφ)`, the dispersion coefficient.
    pub dispersion_coef: f64,
    pub surrogate: QApproxParams,
    pub sinr_floor: f64,
}

impl BandModel {
    fn new(bandwidth: f64, scenario: &Scenario, noise: f64) -> Self {
        let blocklength = bandwidth * scenario.time_unit_s;
        let xi = scenario.qos.error_threshold;
        let surrogate = QApproxParams::new(scenario.packet_bits, blocklength);
        BandModel {
            bandwidth,
            blocklength,
            noise,
            dispersion_coef: q_inverse(xi) / blocklength.sqrt(),
            surrogate,
            sinr_floor: surrogate.sinr_floor(blocklength, xi),
        }
    }

    pub fn access(scenario: &Scenario) -> Self {
        Self::new(
            scenario.access_bandwidth_hz,
            scenario,
            scenario.access_noise_w(),
        )
    }

    pub fn fronthaul(scenario: &Scenario) -> Self {
        Self::new(
            scenario.fronthaul_bandwidth_hz,
            scenario,
            scenario.fronthaul_noise_w(),
        )
    }

    /// Rate in bit/s at SINR `gamma` and the target error probability.
    pub fn rate(&self, gamma: f64) -> f64 {
        (self.bandwidth / LN_2
            * ((1.0 + gamma).ln() - self.dispersion_coef * dispersion(gamma).sqrt()))
        .max(0.0)
    }

    pub fn surrogate_error(&self, gamma: f64) -> f64 {
        q_approx(gamma, &self.surrogate, self.blocklength)
    }
}

/// Gain from the transmitter of interferer `v`'s link into the receiver of `victim`'s
/// link on access subcarrier `k`. Zero for users served by the same RRH.
pub fn cross_gain(
    chan: &ChannelRealization,
    scenario: &Scenario,
    q: Direction,
    victim: usize,
    interferer: usize,
    k: usize,
) -> f64 {
    let (jv, ju) = (scenario.users[interferer].rrh, scenario.users[victim].rrh);
    if jv == ju {
        return 0.0;
    }
    match q {
        Direction::Downlink => chan.access_gain(victim, jv, k, q),
        Direction::Uplink => chan.access_gain(interferer, ju, k, q),
    }
}

/// Inter-cell interference seen by access link (`user`, `k`, `q`).
pub fn access_interference(
    alloc: &Allocation,
    chan: &ChannelRealization,
    scenario: &Scenario,
    q: Direction,
    user: usize,
    k: usize,
) -> f64 {
    (0..scenario.num_users())
        .map(|v| {
            let share = alloc.access_share(q, v, k);
            if share == 0.0 {
                0.0
            } else {
                share * alloc.access_power(q, v, k) * cross_gain(chan, scenario, q, user, v, k)
            }
        })
        .sum()
}

/// Link-level SINRs and rates plus every aggregate the constraints need.
///
/// Per-link vectors use the allocation layouts (`[q][user][k1]` and `[q][rrh][k2]`);
/// link rates are not weighted by the time share, aggregates are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub access_sinr: Vec<f64>,
    pub access_rate: Vec<f64>,
    pub fronthaul_sinr: Vec<f64>,
    pub fronthaul_rate: Vec<f64>,
    /// `[rrh][q]`: Σ τ·r over the RRH's users and access subcarriers.
    pub rrh_rate: Vec<[f64; 2]>,
    /// `[q]`: Σ x·r over RRHs and fronthaul subcarriers.
    pub bbu_rate: [f64; 2],
    pub user_rate: Vec<[f64; 2]>,
    pub slice_rate: Vec<[f64; 2]>,
}

pub fn aggregate_rates(
    alloc: &Allocation,
    chan: &ChannelRealization,
    scenario: &Scenario,
) -> Result<RateSummary, PhyError> {
    if !alloc.matches(scenario) || !chan.matches(scenario) {
        return Err(PhyError::IndexMismatch);
    }
    let ac = BandModel::access(scenario);
    let fh = BandModel::fronthaul(scenario);
    let (n, k1, k2) = (
        scenario.num_users(),
        scenario.access_subcarriers,
        scenario.fronthaul_subcarriers,
    );
    let mut out = RateSummary {
        access_sinr: vec![0.0; 2 * n * k1],
        access_rate: vec![0.0; 2 * n * k1],
        fronthaul_sinr: vec![0.0; 2 * scenario.num_rrh * k2],
        fronthaul_rate: vec![0.0; 2 * scenario.num_rrh * k2],
        rrh_rate: vec![[0.0; 2]; scenario.num_rrh],
        bbu_rate: [0.0; 2],
        user_rate: vec![[0.0; 2]; n],
        slice_rate: vec![[0.0; 2]; scenario.num_slices],
    };
    for q in Direction::ALL {
        let qi = q.index();
        for u in 0..n {
            let user = &scenario.users[u];
            for k in 0..k1 {
                let i = alloc.access_index(q, u, k);
                let interference = access_interference(alloc, chan, scenario, q, u, k);
                let gamma = sinr_access(
                    alloc.access_power[i],
                    chan.access_gain(u, user.rrh, k, q),
                    ac.noise,
                    interference,
                )?;
                let r = ac.rate(gamma);
                out.access_sinr[i] = gamma;
                out.access_rate[i] = r;
                let w = alloc.access_share[i] * r;
                out.rrh_rate[user.rrh][qi] += w;
                out.user_rate[u][qi] += w;
                out.slice_rate[user.slice][qi] += w;
            }
        }
        for j in 0..scenario.num_rrh {
            for k in 0..k2 {
                let i = alloc.fronthaul_index(q, j, k);
                let gamma = alloc.fronthaul_power[i] * chan.fronthaul_gain(j, k, q) / fh.noise;
                let r = fh.rate(gamma);
                out.fronthaul_sinr[i] = gamma;
                out.fronthaul_rate[i] = r;
                out.bbu_rate[qi] += alloc.fronthaul_share[i] * r;
            }
        }
    }
    Ok(out)
}

/// Remaining power (budget minus time-shared consumption) for each budget constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetResiduals {
    /// C3: RRH downlink access, per RRH.
    pub rrh_dl: Vec<f64>,
    /// C4: user uplink, per user.
    pub user_ul: Vec<f64>,
    /// C7: RRH uplink fronthaul, per RRH.
    pub rrh_ul: Vec<f64>,
    /// C8: BBU downlink fronthaul.
    pub bbu_dl: f64,
}

impl BudgetResiduals {
    pub fn min(&self) -> f64 {
        self.rrh_dl
            .iter()
            .chain(&self.user_ul)
            .chain(&self.rrh_ul)
            .fold(self.bbu_dl, |m, &v| m.min(v))
    }
}

pub fn power_budget_check(alloc: &Allocation, scenario: &Scenario) -> BudgetResiduals {
    let b = &scenario.budgets;
    let mut r = BudgetResiduals {
        rrh_dl: vec![b.rrh_dl_w; scenario.num_rrh],
        user_ul: vec![b.user_ul_w; scenario.num_users()],
        rrh_ul: vec![b.rrh_ul_w; scenario.num_rrh],
        bbu_dl: b.bbu_dl_w,
    };
    for (u, user) in scenario.users.iter().enumerate() {
        for k in 0..scenario.access_subcarriers {
            r.rrh_dl[user.rrh] -= alloc.access_energy(Direction::Downlink, u, k);
            r.user_ul[u] -= alloc.access_energy(Direction::Uplink, u, k);
        }
    }
    for j in 0..scenario.num_rrh {
        for k in 0..scenario.fronthaul_subcarriers {
            r.rrh_ul[j] -= alloc.fronthaul_energy(Direction::Uplink, j, k);
            r.bbu_dl -= alloc.fronthaul_energy(Direction::Downlink, j, k);
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_inverse_reference_values() {
        assert!((q_inverse(1e-7) - 5.199_337_582).abs() < 1e-8);
        assert!(q_inverse(0.5).abs() < 1e-12);
        assert!((q_inverse(0.975) + 1.959_963_985).abs() < 1e-8);
    }

    #[test]
    fn sinr_examples() {
        assert_eq!(sinr_access(1.0, 1.0, 0.5, 0.5).unwrap(), 1.0);
        assert_eq!(sinr_access(0.0, 1.0, 0.5, 0.5).unwrap(), 0.0);
        assert!(matches!(
            sinr_access(1.0, 1.0, 0.0, 1.0),
            Err(PhyError::NonPositiveNoise(_))
        ));
    }

    #[test]
    fn rate_examples() {
        let base = LinkRateInputs {
            power: 1.0,
            gain: 1.0,
            noise: 1.0,
            interference: 0.0,
            bandwidth: 2e6,
            time_unit: 1e-3,
            packet_bits: 160.0,
            error_prob: 1e-7,
        };
        let r = fbl_rate(&base);
        let expected = 2e6 / LN_2 * (2f64.ln() - (0.75f64 / 2000.0).sqrt() * 5.199_337_582);
        assert!((r - expected).abs() / expected < 1e-9);
        assert!((r - 1.71e6).abs() < 0.01e6);
        assert_eq!(fbl_rate(&LinkRateInputs { power: 0.0, ..base }), 0.0);
        let half = fbl_rate(&LinkRateInputs {
            error_prob: 0.5,
            ..base
        });
        assert!((half - 2e6).abs() < 1e-3);
    }

    #[test]
    fn surrogate_constants() {
        let p = QApproxParams::new(160.0, 2000.0);
        assert!((p.a - 0.4648).abs() < 1e-4);
        assert!((p.b - 0.05702).abs() < 1e-5);
        assert!((p.halfwidth - 0.02406).abs() < 1e-4);
        assert_eq!(q_approx(0.0, &p, 2000.0), 1.0);
        assert!((q_approx(p.b, &p, 2000.0) - 0.5).abs() < 1e-15);
        let edge = p.b + p.halfwidth;
        assert_eq!(q_approx(edge, &p, 2000.0), 0.0);
        let linear = 0.5 - p.a * 2000f64.sqrt() * (edge - p.b);
        assert!(linear.abs() < 1e-12);
        let floor = p.sinr_floor(2000.0, 1e-7);
        assert!((floor - 0.081).abs() < 1e-3);
        assert!(q_approx(floor, &p, 2000.0) <= 1e-7 + 1e-15);
    }

    #[test]
    fn error_prob_at_capacity_point_is_half() {
        let n = 2000.0;
        let gamma = (160.0 * LN_2 / n).exp() - 1.0;
        assert!((error_prob(gamma, 2e6, 1e-3, 160.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(
            error_prob(0.0, 2e6, 1e-3, 160.0),
            Err(PhyError::DegenerateSnr)
        );
    }
}
