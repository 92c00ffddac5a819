//! Alternating subcarrier/power/delay/slack iterations with admission control, and the
//! fixed-split and no-admission-control baselines.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dc_solver::subproblems::{energy_efficient_sinr, Formulation, Thresholds};
use crate::dc_solver::{
    assemble_power_subproblem, assemble_subcarrier_subproblem, cover_starved_users,
    round_timesharing, solve_alpha_lp, solve_delay_lp, Allocation, SolveOptions, SolverError,
};
use crate::phy_rates::{aggregate_rates, power_budget_check, BandModel, RateSummary};
use crate::qos_delay::{check_delay_chain, flow_conservation_check};
use crate::scenario::{ChannelRealization, Direction, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrchestratorError {
    #[error("admission control rejected every user (in order {rejected:?})")]
    NoUsersLeft { rejected: Vec<usize> },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("channel realization does not match the scenario")]
    ChannelMismatch,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMode {
    Dynamic,
    FixedThirds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Relative power-change threshold of the stopping rule.
    pub eps_th: f64,
    /// Maximum outer iterations per admission round.
    pub z_th: usize,
    pub ac_enabled: bool,
    pub delay_mode: DelayMode,
    pub solver: SolveOptions,
    /// Re-linearizations inside one power step.
    pub inner_iterations: usize,
    /// Normalized slack below which a user counts as served.
    pub alpha_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            eps_th: 1e-4,
            z_th: 100,
            ac_enabled: true,
            delay_mode: DelayMode::Dynamic,
            solver: SolveOptions::default(),
            inner_iterations: 8,
            alpha_tol: 1e-6,
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> Result<(), OrchestratorError> {
        if !(self.eps_th > 0.0) {
            return Err(OrchestratorError::InvalidConfig(format!(
                "eps_th must be positive, got {}",
                self.eps_th
            )));
        }
        if self.z_th < 1 {
            return Err(OrchestratorError::InvalidConfig(
                "z_th must be at least 1".into(),
            ));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(OrchestratorError::InvalidConfig(
                "solver tolerance and iteration cap must be positive".into(),
            ));
        }
        if !(self.alpha_tol >= 0.0) {
            return Err(OrchestratorError::InvalidConfig(
                "alpha_tol must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Converged,
    IterLimit,
}

/// State after one outer iteration, with the incumbent that the iteration kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Admission round, starting at 0.
    pub round: usize,
    /// Outer iteration within the round, starting at 1.
    pub iteration: usize,
    pub total_power_w: f64,
    /// Normalized elastic slack.
    pub penalty: f64,
    /// `total_power_w + M·penalty`.
    pub objective: f64,
    /// Relative change of the time-shared power vector.
    pub power_change: f64,
}

/// One named constraint residual, normalized so that it is non-negative iff the
/// constraint holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub tag: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub residuals: Vec<Residual>,
}

impl FeasibilityReport {
    /// Most negative residual (zero if none is negative).
    pub fn worst(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m: f64, r| m.min(r.value))
    }

    /// Most negative residual among constraints whose family tag (before `[`) is not listed.
    pub fn worst_excluding(&self, families: &[&str]) -> f64 {
        self.residuals
            .iter()
            .filter(|r| !families.contains(&r.tag.split('[').next().unwrap_or("")))
            .fold(0.0, |m: f64, r| m.min(r.value))
    }

    pub fn violations(&self, tol: f64) -> Vec<&Residual> {
        self.residuals.iter().filter(|r| r.value < -tol).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Final allocation over the admitted users, in admitted order.
    pub allocation: Allocation,
    /// Original user indices that were served.
    pub admitted: Vec<usize>,
    /// Original user indices in rejection order.
    pub rejected: Vec<usize>,
    pub objective_trace: Vec<TraceRecord>,
    pub status: RunStatus,
    /// Outer iterations summed over admission rounds.
    pub iterations: usize,
    pub total_power_w: f64,
    pub feasibility: FeasibilityReport,
}

impl RunResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run results serialize")
    }
}

/// Weight of the normalized slack in the penalized objective.
pub fn penalty_weight(scenario: &Scenario) -> f64 {
    1e3 * scenario.total_budget_w().max(f64::MIN_POSITIVE)
}

/// Normalized infeasibility per user: rate slack in bit/s/Hz of one access subcarrier,
/// or reliability excess relative to the target error probability, whichever is larger.
pub fn user_infeasibility(alloc: &Allocation, scenario: &Scenario) -> Vec<f64> {
    let k1 = alloc.access_subcarriers;
    let rs = scenario.access_bandwidth_hz;
    let xi = scenario.qos.error_threshold;
    (0..alloc.num_users)
        .map(|u| {
            let mut m: f64 = 0.0;
            for k in 0..k1 {
                m = m.max(alloc.alpha[u * k1 + k] / rs);
                for q in Direction::ALL {
                    m = m.max(alloc.alpha_reliability[alloc.access_index(q, u, k)] / xi);
                }
            }
            m
        })
        .collect()
}

fn penalty(alloc: &Allocation, scenario: &Scenario) -> f64 {
    alloc.alpha.iter().sum::<f64>() / scenario.access_bandwidth_hz
        + alloc.alpha_reliability.iter().sum::<f64>() / scenario.qos.error_threshold
}

fn objective(alloc: &Allocation, scenario: &Scenario) -> f64 {
    alloc.total_power() + penalty_weight(scenario) * penalty(alloc, scenario)
}

/// User with the largest slack above `tol`; ties go to the lowest index.
pub fn admission_reject(alpha_per_user: &[f64], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (u, &a) in alpha_per_user.iter().enumerate() {
        if a > tol && best.map_or(true, |(_, b)| a > b) {
            best = Some((u, a));
        }
    }
    best.map(|(u, _)| u)
}

fn effective_powers(alloc: &Allocation) -> Vec<f64> {
    alloc
        .access_share
        .iter()
        .zip(&alloc.access_power)
        .chain(alloc.fronthaul_share.iter().zip(&alloc.fronthaul_power))
        .map(|(t, p)| t * p)
        .collect()
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff = new
        .iter()
        .zip(old)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = new.iter().map(|a| a * a).sum::<f64>().sqrt();
    if diff == 0.0 {
        0.0
    } else if norm > 0.0 {
        diff / norm
    } else {
        f64::INFINITY
    }
}

/// Power scalings tried when the iterates stall with slack left.
const ESCAPE_FACTORS: [f64; 2] = [10.0, 100.0];
const MAX_ESCAPES: usize = 3;

struct Context<'a> {
    scenario: &'a Scenario,
    chan: &'a ChannelRealization,
    config: RunConfig,
    formulation: Formulation,
}

impl Context<'_> {
    fn rates(&self, alloc: &Allocation) -> Result<RateSummary, SolverError> {
        Ok(aggregate_rates(alloc, self.chan, self.scenario)?)
    }

    /// Recomputes the slack for the point's powers, shares and delays.
    fn settle(&self, alloc: &Allocation) -> Result<(Allocation, f64), SolverError> {
        let rates = self.rates(alloc)?;
        let out = solve_alpha_lp(alloc, &rates, self.chan, self.scenario)?;
        let j = objective(&out, self.scenario);
        Ok((out, j))
    }

    fn formulation(&self, dynamic: bool) -> Formulation {
        Formulation {
            joint_delay: self.formulation.joint_delay && dynamic,
            ..self.formulation
        }
    }

    /// Successive power re-linearizations from `start`, keeping only improving steps.
    fn power_step(
        &self,
        start: &Allocation,
        dynamic: bool,
    ) -> Result<(Allocation, f64), SolverError> {
        let (mut cur, mut cur_j) = self.settle(start)?;
        for _ in 0..self.config.inner_iterations.max(1) {
            let sub = match assemble_power_subproblem(
                &cur,
                self.chan,
                self.scenario,
                self.formulation(dynamic),
            ) {
                Ok(s) => s,
                Err(SolverError::DegeneratePoint(_)) => break,
                Err(e) => return Err(e),
            };
            let cand = match sub.solve(&cur, &self.config.solver) {
                Ok((c, _)) => c,
                Err(SolverError::NotConvex(t)) => return Err(SolverError::NotConvex(t)),
                Err(_) => break,
            };
            let (cand, j) = self.settle(&cand)?;
            if !(j <= cur_j) {
                break;
            }
            let gain = (cur_j - j) / cur_j.abs().max(f64::MIN_POSITIVE);
            cur = cand;
            cur_j = j;
            if gain < 1e-5 {
                break;
            }
        }
        Ok((cur, cur_j))
    }

    /// Subcarrier step, rounding, power step, then the delay split.
    fn alternating_step(
        &self,
        point: &Allocation,
        dynamic: bool,
    ) -> Result<(Allocation, f64), SolverError> {
        let sub =
            assemble_subcarrier_subproblem(point, self.chan, self.scenario, self.formulation)?;
        let (relaxed, _) = sub.solve(&self.config.solver)?;
        let user_rrh: Vec<usize> = self.scenario.users.iter().map(|u| u.rrh).collect();
        let rounded = round_timesharing(&relaxed, &user_rrh);
        let plain = self.power_step(&rounded, dynamic);
        let (mut next, mut j) = match cover_starved_users(&relaxed, &rounded, &user_rrh)
            .and_then(|covered| self.power_step(&covered, dynamic).ok())
        {
            Some((cand, cj)) if plain.as_ref().map_or(true, |(_, pj)| cj < *pj) => (cand, cj),
            _ => plain?,
        };
        if dynamic {
            let rates = self.rates(&next)?;
            if let Ok(split) = solve_delay_lp(&next, &rates, self.scenario) {
                let mut cand = next.clone();
                cand.delay = split;
                let (cand, cj) = self.settle(&cand)?;
                if cj <= j {
                    next = cand;
                    j = cj;
                }
            }
        }
        Ok((next, j))
    }

    /// Tries to leave a stalled infeasible point, first by separating the infeasible
    /// users onto clean subcarriers, then by scaling all powers up, re-optimizing from
    /// each start.
    fn escape(&self, point: &Allocation, dynamic: bool, best_j: f64) -> Option<(Allocation, f64)> {
        if let Some((cand, j)) = self.separate(point).and_then(|start| self.power_step(&start, dynamic).ok()) {
            if j < best_j {
                return Some((cand, j));
            }
        }
        for factor in ESCAPE_FACTORS {
            let mut start = point.clone();
            start.access_power.iter_mut().for_each(|p| *p *= factor);
            start.fronthaul_power.iter_mut().for_each(|p| *p *= factor);
            let cand = match self.alternating_step(&start, dynamic) {
                Ok(c) => Some(c),
                Err(_) => self.power_step(&start, dynamic).ok(),
            };
            if let Some((cand, j)) = cand {
                if j < best_j {
                    return Some((cand, j));
                }
            }
        }
        None
    }

    /// Moves every infeasible user off the access links that miss the reliability floor
    /// and onto one subcarrier no RRH uses in that direction, and gives an RRH without
    /// fronthaul share its best unused fronthaul subcarrier. New links start at the
    /// band's energy-efficient SINR.
    fn separate(&self, point: &Allocation) -> Option<Allocation> {
        let s = self.scenario;
        let (ac, fh) = (BandModel::access(s), BandModel::fronthaul(s));
        let (ac_target, fh_target) = (energy_efficient_sinr(&ac), energy_efficient_sinr(&fh));
        let (k1, k2) = (s.access_subcarriers, s.fronthaul_subcarriers);
        let infeasible: Vec<usize> = user_infeasibility(point, s)
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > self.config.alpha_tol)
            .map(|(u, _)| u)
            .collect();
        if infeasible.is_empty() {
            return None;
        }
        let mut out = point.clone();
        for q in Direction::ALL {
            for &u in &infeasible {
                for k in 0..k1 {
                    let i = out.access_index(q, u, k);
                    if out.alpha_reliability[i] > 0.0 {
                        out.access_share[i] = 0.0;
                    }
                }
                let used = |a: &Allocation, k: usize| (0..s.num_users()).any(|v| a.access_share(q, v, k) > 0.0);
                let rrh = s.users[u].rrh;
                let best = (0..k1)
                    .filter(|&k| !used(&out, k))
                    .max_by(|&a, &b| self.chan.access_gain(u, rrh, a, q).total_cmp(&self.chan.access_gain(u, rrh, b, q)));
                if let Some(k) = best {
                    let i = out.access_index(q, u, k);
                    out.access_share[i] = 1.0;
                    out.access_power[i] = ac_target * ac.noise / self.chan.access_gain(u, rrh, k, q);
                }
            }
            for j in 0..s.num_rrh {
                let has_users = s.users_at_rrh(j).next().is_some();
                if !has_users || (0..k2).any(|k| out.fronthaul_share(q, j, k) > 0.0) {
                    continue;
                }
                let used = |a: &Allocation, k: usize| (0..s.num_rrh).any(|f| a.fronthaul_share(q, f, k) > 0.0);
                let best = (0..k2)
                    .filter(|&k| !used(&out, k))
                    .max_by(|&a, &b| self.chan.fronthaul_gain(j, a, q).total_cmp(&self.chan.fronthaul_gain(j, b, q)));
                if let Some(k) = best {
                    let i = out.fronthaul_index(q, j, k);
                    out.fronthaul_share[i] = 1.0;
                    out.fronthaul_power[i] = fh_target * fh.noise / self.chan.fronthaul_gain(j, k, q);
                }
            }
        }
        Some(out)
    }

    fn initial_point(&self) -> Allocation {
        let s = self.scenario;
        let mut point = Allocation::zeros(s);
        let large = 10.0 * Thresholds::new(s, &point.delay).max();
        for u in 0..s.num_users() {
            point.alpha[u * s.access_subcarriers] = large;
        }
        point
    }

    fn run_round(
        &self,
        round: usize,
        trace: &mut Vec<TraceRecord>,
    ) -> Result<(Allocation, RunStatus, usize), SolverError> {
        let mut point = self.initial_point();
        let mut best_j = objective(&point, self.scenario);
        let mut status = RunStatus::IterLimit;
        let mut iterations = 0;
        // In dynamic mode the split stays at its initial value until the iterates are
        // feasible or settle, and is optimized from then on.
        let want_dynamic = self.config.delay_mode == DelayMode::Dynamic;
        let mut dynamic = false;
        let mut escapes = 0;
        for z in 1..=self.config.z_th {
            iterations = z;
            let before = effective_powers(&point);
            let improved = match self.alternating_step(&point, dynamic) {
                Ok((cand, j)) if j <= best_j => Some((cand, j)),
                Ok(_)
                | Err(SolverError::Infeasible(_))
                | Err(SolverError::Numerical(_))
                | Err(SolverError::IterLimit(_)) => None,
                Err(e) => return Err(e),
            };
            let improved = match improved {
                Some(v) => Some(v),
                // Keep the assignment and only re-optimize the powers.
                None if z > 1 => match self.power_step(&point, dynamic) {
                    Ok((cand, j)) if j <= best_j => Some((cand, j)),
                    _ => None,
                },
                None => None,
            };
            if let Some((cand, j)) = improved {
                point = cand;
                best_j = j;
            }
            let change = relative_change(&effective_powers(&point), &before);
            trace.push(TraceRecord {
                round,
                iteration: z,
                total_power_w: point.total_power(),
                penalty: penalty(&point, self.scenario),
                objective: best_j,
                power_change: change,
            });
            if want_dynamic
                && !dynamic
                && (change <= self.config.eps_th || penalty(&point, self.scenario) == 0.0)
            {
                dynamic = true;
                continue;
            }
            if change <= self.config.eps_th
                && penalty(&point, self.scenario) > 0.0
                && escapes < MAX_ESCAPES
            {
                escapes += 1;
                if let Some((cand, j)) = self.escape(&point, dynamic, best_j) {
                    point = cand;
                    best_j = j;
                    continue;
                }
            }
            if change <= self.config.eps_th {
                status = RunStatus::Converged;
                break;
            }
        }
        // Repair: one more power solve at the final assignment.
        if let Ok((cand, j)) = self.power_step(&point, dynamic) {
            if j <= best_j {
                point = cand;
            }
        }
        Ok((point, status, iterations))
    }
}

fn run(
    scenario: &Scenario,
    chan: &ChannelRealization,
    config: &RunConfig,
    formulation: Formulation,
) -> Result<RunResult, OrchestratorError> {
    config.check()?;
    if !chan.matches(scenario) {
        return Err(OrchestratorError::ChannelMismatch);
    }
    let mut remaining: Vec<usize> = (0..scenario.num_users()).collect();
    let mut rejected = Vec::new();
    let mut trace = Vec::new();
    let mut total_iterations = 0;
    for round in 0.. {
        let sub_scenario = scenario.restrict_users(&remaining);
        let sub_chan = chan.restrict_users(&remaining);
        let ctx = Context {
            scenario: &sub_scenario,
            chan: &sub_chan,
            config: *config,
            formulation,
        };
        let (alloc, status, iterations) = ctx.run_round(round, &mut trace)?;
        total_iterations += iterations;
        if config.ac_enabled {
            if let Some(u) =
                admission_reject(&user_infeasibility(&alloc, &sub_scenario), config.alpha_tol)
            {
                rejected.push(remaining.remove(u));
                if remaining.is_empty() {
                    return Err(OrchestratorError::NoUsersLeft { rejected });
                }
                continue;
            }
        }
        let feasibility = feasibility_report(&alloc, &sub_chan, &sub_scenario)?;
        return Ok(RunResult {
            total_power_w: alloc.total_power(),
            allocation: alloc,
            admitted: remaining,
            rejected,
            objective_trace: trace,
            status,
            iterations: total_iterations,
            feasibility,
        });
    }
    unreachable!()
}

/// The full algorithm: dynamic delay split and admission control as configured.
pub fn run_algorithm1(
    scenario: &Scenario,
    chan: &ChannelRealization,
    config: &RunConfig,
) -> Result<RunResult, OrchestratorError> {
    let formulation = Formulation {
        power_budgets: true,
        joint_delay: config.delay_mode == DelayMode::Dynamic,
    };
    run(scenario, chan, config, formulation)
}

/// Delay split frozen at thirds of the end-to-end budget.
pub fn run_baseline_fixed(
    scenario: &Scenario,
    chan: &ChannelRealization,
    config: &RunConfig,
) -> Result<RunResult, OrchestratorError> {
    let config = RunConfig {
        delay_mode: DelayMode::FixedThirds,
        ..*config
    };
    run(
        scenario,
        chan,
        &config,
        Formulation {
            power_budgets: true,
            joint_delay: false,
        },
    )
}

/// No admission control: the user, fronthaul and BBU budgets and fronthaul
/// exclusivity in the relaxation are dropped, nobody is rejected, and the resulting
/// power is reported even where it exceeds the budgets.
pub fn run_baseline_noac(
    scenario: &Scenario,
    chan: &ChannelRealization,
    config: &RunConfig,
) -> Result<RunResult, OrchestratorError> {
    let config = RunConfig {
        ac_enabled: false,
        ..*config
    };
    let formulation = Formulation {
        power_budgets: false,
        joint_delay: config.delay_mode == DelayMode::Dynamic,
    };
    run(scenario, chan, &config, formulation)
}

fn rel(value: f64, scale: f64) -> f64 {
    value / scale.abs().max(f64::MIN_POSITIVE)
}

/// Normalized residuals of C1–C15 at an allocation.
pub fn feasibility_report(
    alloc: &Allocation,
    chan: &ChannelRealization,
    scenario: &Scenario,
) -> Result<FeasibilityReport, SolverError> {
    let rates = aggregate_rates(alloc, chan, scenario)?;
    let ac = BandModel::access(scenario);
    let fh = BandModel::fronthaul(scenario);
    let xi = scenario.qos.error_threshold;
    let rs = scenario.access_bandwidth_hz;
    let mut out = Vec::new();
    let mut push = |tag: String, value: f64| out.push(Residual { tag, value });

    for q in Direction::ALL {
        let qi = q.index();
        for j in 0..scenario.num_rrh {
            for k in 0..scenario.access_subcarriers {
                let used: f64 = scenario
                    .users_at_rrh(j)
                    .map(|u| alloc.access_share(q, u, k))
                    .sum();
                push(format!("C1[{j},{k},{qi}]"), 1.0 - used);
            }
        }
        for u in 0..scenario.num_users() {
            for k in 0..scenario.access_subcarriers {
                let i = alloc.access_index(q, u, k);
                if alloc.access_share[i] > 0.0 {
                    push(
                        format!("C2[{qi},{u},{k}]"),
                        rel(xi - ac.surrogate_error(rates.access_sinr[i]), xi),
                    );
                }
            }
        }
        for k in 0..scenario.fronthaul_subcarriers {
            let used: f64 = (0..scenario.num_rrh)
                .map(|j| alloc.fronthaul_share(q, j, k))
                .sum();
            push(format!("C5[{k},{qi}]"), 1.0 - used);
            for j in 0..scenario.num_rrh {
                let i = alloc.fronthaul_index(q, j, k);
                if alloc.fronthaul_share[i] > 0.0 {
                    push(
                        format!("C6[{qi},{j},{k}]"),
                        rel(xi - fh.surrogate_error(rates.fronthaul_sinr[i]), xi),
                    );
                }
            }
        }
    }
    let b = power_budget_check(alloc, scenario);
    let budgets = &scenario.budgets;
    for (j, r) in b.rrh_dl.iter().enumerate() {
        push(format!("C3[{j}]"), rel(*r, budgets.rrh_dl_w));
    }
    for (u, r) in b.user_ul.iter().enumerate() {
        push(format!("C4[{u}]"), rel(*r, budgets.user_ul_w));
    }
    for (j, r) in b.rrh_ul.iter().enumerate() {
        push(format!("C7[{j}]"), rel(*r, budgets.rrh_ul_w));
    }
    push("C8".into(), rel(b.bbu_dl, budgets.bbu_dl_w));

    let d = check_delay_chain(&alloc.delay, &rates, scenario);
    let th = Thresholds::new(scenario, &alloc.delay);
    for (u, r) in d.c9.iter().enumerate() {
        push(format!("C9[{u}]"), rel(*r, scenario.qos.delay_budget_s));
    }
    for (j, r) in d.c10.iter().enumerate() {
        if let (Some(r), Some(t)) = (r, th.rrh[j]) {
            push(format!("C10[{j}]"), rel(*r, t));
        }
    }
    if let (Some(r), Some(t)) = (d.c11, th.bbu) {
        push("C11".into(), rel(r, t));
    }
    for (u, r) in d.c12.iter().enumerate() {
        push(format!("C12[{u}]"), rel(*r, th.user[u]));
    }
    let (c13, c14) = flow_conservation_check(&rates);
    let (ul, dl) = (Direction::Uplink.index(), Direction::Downlink.index());
    push("C13".into(), rel(c13, rates.bbu_rate[ul].max(rs)));
    let access_dl: f64 = rates.rrh_rate.iter().map(|r| r[dl]).sum();
    push("C14".into(), rel(c14, access_dl.max(rs)));
    for s in 0..scenario.num_slices {
        for q in Direction::ALL {
            if let Some(r) = th.slice[s][q.index()] {
                push(
                    format!("C15[{s},{}]", q.index()),
                    rel(rates.slice_rate[s][q.index()] - r, r.max(rs)),
                );
            }
        }
    }
    Ok(FeasibilityReport { residuals: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reject_picks_largest_then_lowest_index() {
        assert_eq!(admission_reject(&[0.0, 0.5, 0.2], 1e-9), Some(1));
        assert_eq!(admission_reject(&[0.0, 0.0, 0.0], 1e-9), None);
        assert_eq!(admission_reject(&[0.3, 0.1, 0.3], 1e-9), Some(0));
        assert_eq!(admission_reject(&[1e-12], 1e-9), None);
    }

    #[test]
    fn config_checks() {
        assert!(RunConfig::default().check().is_ok());
        assert!(RunConfig {
            eps_th: 0.0,
            ..RunConfig::default()
        }
        .check()
        .is_err());
        assert!(RunConfig {
            z_th: 0,
            ..RunConfig::default()
        }
        .check()
        .is_err());
    }

    #[test]
    fn relative_change_cases() {
        assert_eq!(relative_change(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(relative_change(&[0.0], &[1.0]), f64::INFINITY);
        assert!((relative_change(&[3.0, 4.0], &[3.0, 3.0]) - 0.2).abs() < 1e-15);
    }
}
