//! Effective-bandwidth delay model for the RRH uplink, BBU and per-user downlink queues.
//!
//! The pure formulas take arrival rates in arrivals per second. Rates coming from the
//! physical layer are in bit/s and are divided by `traffic_unit_bits` first.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phy_rates::RateSummary;
use crate::scenario::{Direction, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QosError {
    #[error("QoS exponent must be positive, got {0}")]
    NonPositiveTheta(f64),
}

/// `λ(e^θ − 1)/θ`.
pub fn effective_bandwidth(lambda: f64, theta: f64) -> Result<f64, QosError> {
    if !(theta > 0.0) {
        return Err(QosError::NonPositiveTheta(theta));
    }
    Ok(lambda * theta.exp_m1() / theta)
}

/// `η·exp(−λ(e^θ − 1)D)`.
pub fn delay_violation_prob(lambda: f64, theta: f64, delay: f64, eta: f64) -> f64 {
    eta * (-lambda * theta.exp_m1() * delay).exp()
}

/// Smallest arrival rate whose violation bound stays below `delta`.
pub fn min_rate_threshold(delta: f64, theta: f64, delay: f64) -> f64 {
    (1.0 / delta).ln() / (theta.exp_m1() * delay)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Queue {
    /// Uplink queue at an RRH.
    Rrh,
    Bbu,
    /// Downlink queue of one user at its RRH.
    User,
}

/// Bits `c` such that the queue's rate threshold in bit/s is `c / D`.
pub fn threshold_coefficient(scenario: &Scenario, queue: Queue) -> f64 {
    let q = &scenario.qos;
    let (delta, theta) = match queue {
        Queue::Rrh => (q.delta_rrh, q.theta_rrh),
        Queue::Bbu => (q.delta_bbu, q.theta_bbu),
        Queue::User => (q.delta_user, q.theta_user),
    };
    q.traffic_unit_bits * min_rate_threshold(delta, theta, 1.0)
}

pub fn rate_threshold_bps(scenario: &Scenario, queue: Queue, delay: f64) -> f64 {
    threshold_coefficient(scenario, queue) / delay
}

/// Per-queue delay budgets in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySplit {
    pub d_ul_rrh: Vec<f64>,
    pub d_bbu: f64,
    pub d_dl_user: Vec<f64>,
}

impl DelaySplit {
    /// Every component at a third of the end-to-end budget.
    pub fn thirds(scenario: &Scenario) -> Self {
        let d = scenario.qos.delay_budget_s / 3.0;
        DelaySplit {
            d_ul_rrh: vec![d; scenario.num_rrh],
            d_bbu: d,
            d_dl_user: vec![d; scenario.num_users()],
        }
    }

    pub fn restrict_users(&self, keep: &[usize]) -> Self {
        DelaySplit {
            d_ul_rrh: self.d_ul_rrh.clone(),
            d_bbu: self.d_bbu,
            d_dl_user: keep.iter().map(|&i| self.d_dl_user[i]).collect(),
        }
    }

    /// End-to-end delay of user `i` served by RRH `j`.
    pub fn total(&self, i: usize, j: usize) -> f64 {
        self.d_ul_rrh[j] + self.d_bbu + self.d_dl_user[i]
    }
}

/// Arrival rates in bit/s of the three queue types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalRates {
    pub lambda_rrh: Vec<f64>,
    pub lambda_bbu: f64,
    pub lambda_user: Vec<f64>,
}

impl ArrivalRates {
    pub fn from_rates(rates: &RateSummary) -> Self {
        let ul = Direction::Uplink.index();
        ArrivalRates {
            lambda_rrh: rates.rrh_rate.iter().map(|r| r[ul]).collect(),
            lambda_bbu: rates.bbu_rate[ul],
            lambda_user: rates
                .user_rate
                .iter()
                .map(|r| r[Direction::Downlink.index()])
                .collect(),
        }
    }

    /// Violation bounds `(rrh, bbu, user)` for the given split.
    pub fn violation_probs(
        &self,
        split: &DelaySplit,
        scenario: &Scenario,
    ) -> (Vec<f64>, f64, Vec<f64>) {
        let q = &scenario.qos;
        let unit = q.traffic_unit_bits;
        let rrh = self
            .lambda_rrh
            .iter()
            .zip(&split.d_ul_rrh)
            .map(|(l, d)| delay_violation_prob(l / unit, q.theta_rrh, *d, q.eta_rrh))
            .collect();
        let bbu = delay_violation_prob(self.lambda_bbu / unit, q.theta_bbu, split.d_bbu, q.eta_bbu);
        let user = self
            .lambda_user
            .iter()
            .zip(&split.d_dl_user)
            .map(|(l, d)| delay_violation_prob(l / unit, q.theta_user, *d, q.eta_user))
            .collect();
        (rrh, bbu, user)
    }
}

/// Residuals of C9 (seconds) and C10–C12 (bit/s). `None` marks queues without users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayResiduals {
    pub c9: Vec<f64>,
    pub c10: Vec<Option<f64>>,
    pub c11: Option<f64>,
    pub c12: Vec<f64>,
}

impl DelayResiduals {
    pub fn min(&self) -> f64 {
        self.c9
            .iter()
            .chain(self.c10.iter().flatten())
            .chain(self.c11.iter())
            .chain(&self.c12)
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

pub fn check_delay_chain(
    split: &DelaySplit,
    rates: &RateSummary,
    scenario: &Scenario,
) -> DelayResiduals {
    let ul = Direction::Uplink.index();
    let budget = scenario.qos.delay_budget_s;
    let c9 = scenario
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| budget - split.total(i, u.rrh))
        .collect();
    let c10 = (0..scenario.num_rrh)
        .map(|j| {
            scenario.users_at_rrh(j).next().map(|_| {
                rates.rrh_rate[j][ul] - rate_threshold_bps(scenario, Queue::Rrh, split.d_ul_rrh[j])
            })
        })
        .collect();
    let c11 = (scenario.num_users() > 0)
        .then(|| rates.bbu_rate[ul] - rate_threshold_bps(scenario, Queue::Bbu, split.d_bbu));
    let c12 = (0..scenario.num_users())
        .map(|i| {
            rates.user_rate[i][Direction::Downlink.index()]
                - rate_threshold_bps(scenario, Queue::User, split.d_dl_user[i])
        })
        .collect();
    DelayResiduals { c9, c10, c11, c12 }
}

/// `(C13, C14)`: fronthaul uplink minus access uplink, access downlink minus fronthaul downlink.
pub fn flow_conservation_check(rates: &RateSummary) -> (f64, f64) {
    let (ul, dl) = (Direction::Uplink.index(), Direction::Downlink.index());
    let access_ul: f64 = rates.rrh_rate.iter().map(|r| r[ul]).sum();
    let access_dl: f64 = rates.rrh_rate.iter().map(|r| r[dl]).sum();
    (
        rates.bbu_rate[ul] - access_ul,
        access_dl - rates.bbu_rate[dl],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_bandwidth_examples() {
        let e = effective_bandwidth(1000.0, 10.0).unwrap();
        assert!((e - 2.202_546_579_48e6).abs() < 1.0);
        let small = effective_bandwidth(3.0, 1e-8).unwrap();
        assert!((small - 3.0).abs() / 3.0 < 1e-6);
        assert_eq!(effective_bandwidth(0.0, 10.0).unwrap(), 0.0);
        assert!(effective_bandwidth(1.0, 0.0).is_err());
    }

    #[test]
    fn threshold_examples() {
        let d = 1e-3 / 3.0;
        let lam = min_rate_threshold(1e-3, 10.0, d);
        assert!((lam - 0.941).abs() < 1e-3);
        assert!((delay_violation_prob(lam, 10.0, d, 1.0) - 1e-3).abs() < 1e-15);
        assert!(min_rate_threshold(1.0 - 1e-12, 10.0, d) < 1e-10);
        assert!((min_rate_threshold(1e-3, 10.0, d / 2.0) / lam - 2.0).abs() < 1e-12);
        assert_eq!(delay_violation_prob(0.0, 10.0, d, 0.7), 0.7);
        let x = (1000f64).ln() / (10f64.exp_m1() * d);
        assert!((delay_violation_prob(x, 10.0, d, 1.0) - 1e-3).abs() < 1e-15);
    }
}
