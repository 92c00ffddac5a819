//! Assembly of the subcarrier, power, delay and slack subproblems of one alternating
//! iteration.
//!
//! Rates enter every constraint divided by the access subcarrier bandwidth, so all
//! rate rows are in bit/s/Hz of one subcarrier. Powers are expressed in units of the
//! link's interference-free unit-SINR power `σ/h`, which keeps the conic programs well
//! scaled even though physical powers span many decades.

use std::collections::HashMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::convex::{
    solve_convex, ConvexSolution, ConvexSubproblem, Expr, LogAtom, Sense, SolveOptions,
};
use super::pieces::{
    dc_decompose_access, dc_decompose_fronthaul, AccessLink, Block, DcPieces, FronthaulLink, VarKey,
};
use super::{Allocation, SolverError};
use crate::phy_rates::{access_interference, cross_gain, BandModel, RateSummary};
use crate::qos_delay::{rate_threshold_bps, threshold_coefficient, DelaySplit, Queue};
use crate::scenario::{ChannelRealization, Direction, Scenario};

/// Relative tightening of rate thresholds and SINR floors so that solutions remain
/// feasible after the solver's own tolerance.
pub const CONSTRAINT_MARGIN: f64 = 1e-7;

/// Relative tightening of the reliability SINR floors. The surrogate error falls from
/// `ξ` to zero over a tiny SINR interval above the floor, so the floor has to clear the
/// solver's feasibility tolerance.
pub const SINR_MARGIN: f64 = 1e-6;

/// Smallest interference-free SINR of an assigned access link, keeping the power-block
/// gradients finite at the next expansion point.
const MIN_ACCESS_SINR: f64 = 1e-6;

/// Smallest queue delay budget the joint power/delay program may choose, in ms.
const MIN_DELAY_MS: f64 = 1e-6;

/// Which constraints and variables the subproblems contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formulation {
    /// Keep the user, fronthaul and BBU budgets (C4, C7, C8) and fronthaul
    /// exclusivity (C5). The RRH downlink budget (C3) is always kept.
    pub power_budgets: bool,
    /// Optimize the delay split together with the powers in the power subproblem.
    pub joint_delay: bool,
}

impl Default for Formulation {
    fn default() -> Self {
        Formulation {
            power_budgets: true,
            joint_delay: true,
        }
    }
}

/// Rate thresholds of the elastic constraints in bit/s; `None` where a constraint has
/// no users behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub rrh: Vec<Option<f64>>,
    pub bbu: Option<f64>,
    pub user: Vec<f64>,
    pub slice: Vec<[Option<f64>; 2]>,
}

impl Thresholds {
    pub fn new(scenario: &Scenario, split: &DelaySplit) -> Self {
        let rrh = (0..scenario.num_rrh)
            .map(|j| {
                scenario
                    .users_at_rrh(j)
                    .next()
                    .map(|_| rate_threshold_bps(scenario, Queue::Rrh, split.d_ul_rrh[j]))
            })
            .collect();
        let bbu = (scenario.num_users() > 0)
            .then(|| rate_threshold_bps(scenario, Queue::Bbu, split.d_bbu));
        let user = (0..scenario.num_users())
            .map(|i| rate_threshold_bps(scenario, Queue::User, split.d_dl_user[i]))
            .collect();
        let slice = (0..scenario.num_slices)
            .map(|s| {
                let has = scenario.users_in_slice(s).next().is_some();
                [0, 1].map(|q| has.then(|| scenario.reservation_bps[s][q]))
            })
            .collect();
        Thresholds {
            rrh,
            bbu,
            user,
            slice,
        }
    }

    /// Largest threshold in bit/s.
    pub fn max(&self) -> f64 {
        self.rrh
            .iter()
            .flatten()
            .chain(self.bbu.iter())
            .chain(&self.user)
            .chain(self.slice.iter().flatten().flatten())
            .fold(0.0, |m: f64, &v| m.max(v))
    }
}

/// SINR maximizing rate per unit SINR on a band, used as the nominal operating point
/// of links that are not yet assigned.
pub fn energy_efficient_sinr(band: &BandModel) -> f64 {
    let eff = |g: f64| band.rate(g) / g;
    let (mut lo, mut hi) = (band.sinr_floor.max(1e-6), 1e3);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if eff(a) >= eff(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

/// An affine function of the subproblem variables.
#[derive(Debug, Clone, Default)]
struct Lin {
    constant: f64,
    coefs: Vec<(usize, f64)>,
}

impl Lin {
    fn into_expr(self) -> Expr {
        Expr {
            constant: self.constant,
            linear: self.coefs,
            ..Expr::default()
        }
    }
}

fn accumulate(target: &mut Expr, src: &Expr, scale: f64) {
    target.constant += scale * src.constant;
    target
        .linear
        .extend(src.linear.iter().map(|&(i, c)| (i, scale * c)));
    target
        .logs
        .extend(src.logs.iter().map(|&(i, c)| (i, scale * c)));
    target
        .inverses
        .extend(src.inverses.iter().map(|&(i, c)| (i, scale * c)));
}

/// First-order model `value + Σ ∂·unit·(v − v₀)` of a piece over the mapped variables.
fn linear_model(
    value: f64,
    grad: &[(VarKey, f64)],
    vars: &HashMap<VarKey, (usize, f64)>,
    start: &[f64],
    scale: f64,
) -> Lin {
    let mut out = Lin {
        constant: value / scale,
        coefs: Vec::new(),
    };
    for &(key, d) in grad {
        if let Some(&(var, unit)) = vars.get(&key) {
            let c = d * unit / scale;
            out.constant -= c * start[var];
            out.coefs.push((var, c));
        }
    }
    out
}

fn sum_pieces(parts: &[(&[(VarKey, f64)], f64)]) -> Vec<(VarKey, f64)> {
    parts
        .iter()
        .flat_map(|(g, s)| g.iter().map(move |&(k, v)| (k, s * v)))
        .collect()
}

/// Slack variables of one subproblem and their weights in the phase-one objective.
#[derive(Debug, Clone, Default)]
struct Elastic {
    user_rate: Vec<usize>,
    weights: Vec<(usize, f64)>,
}

/// Rows shared by the subcarrier and power subproblems: the elastic delay, flow and
/// slicing constraints, given per-link rate expressions.
struct RateRows<'a> {
    scenario: &'a Scenario,
    /// Per access link: expression used where the rate must be at least something,
    /// and an upper model used where it must be at most something.
    access: Vec<(AccessLink, Expr, Expr)>,
    fronthaul: Vec<(FronthaulLink, Expr, Expr)>,
}

/// Delay-threshold terms: constants in bit/s/Hz, or `−c/D` with `D` a variable in ms.
enum ThresholdTerms {
    Fixed(Thresholds),
    Joint {
        rrh: Vec<Option<usize>>,
        bbu: usize,
        user: Vec<usize>,
    },
}

impl RateRows<'_> {
    fn emit(
        &self,
        sub: &mut ConvexSubproblem,
        elastic: &Elastic,
        thresholds: &ThresholdTerms,
        rate_scale: f64,
    ) {
        let s = self.scenario;
        let tighten = 1.0 + CONSTRAINT_MARGIN;
        let coef_ms = |queue: Queue| threshold_coefficient(s, queue) * 1e3 / rate_scale * tighten;
        let all_alpha: Vec<(usize, f64)> = elastic.user_rate.iter().map(|&v| (v, 1.0)).collect();
        let add_threshold =
            |e: &mut Expr, queue: Queue, idx: Option<usize>, fixed: Option<f64>| match thresholds {
                ThresholdTerms::Fixed(_) => e.constant -= fixed.unwrap() / rate_scale * tighten,
                ThresholdTerms::Joint { .. } => e.inverses.push((idx.unwrap(), -coef_ms(queue))),
            };

        for j in 0..s.num_rrh {
            let fixed = match thresholds {
                ThresholdTerms::Fixed(t) => t.rrh[j],
                ThresholdTerms::Joint { rrh, .. } => rrh[j].map(|_| 0.0),
            };
            if fixed.is_none() {
                continue;
            }
            let mut e = Expr::default();
            for (link, lower, _) in &self.access {
                if link.q == Direction::Uplink && s.users[link.user].rrh == j {
                    accumulate(&mut e, lower, 1.0);
                }
            }
            for u in s.users_at_rrh(j) {
                e.linear.push((elastic.user_rate[u], 1.0));
            }
            let idx = match thresholds {
                ThresholdTerms::Joint { rrh, .. } => rrh[j],
                _ => None,
            };
            add_threshold(&mut e, Queue::Rrh, idx, fixed);
            sub.push(format!("C10[{j}]"), e, Sense::Ge, 0.0);
        }

        if s.num_users() > 0 {
            let mut e = Expr::default();
            for (link, lower, _) in &self.fronthaul {
                if link.q == Direction::Uplink {
                    accumulate(&mut e, lower, 1.0);
                }
            }
            e.linear.extend(&all_alpha);
            let (idx, fixed) = match thresholds {
                ThresholdTerms::Fixed(t) => (None, t.bbu),
                ThresholdTerms::Joint { bbu, .. } => (Some(*bbu), None),
            };
            add_threshold(&mut e, Queue::Bbu, idx, fixed);
            sub.push("C11", e, Sense::Ge, 0.0);
        }

        for u in 0..s.num_users() {
            let mut e = Expr::default();
            for (link, lower, _) in &self.access {
                if link.q == Direction::Downlink && link.user == u {
                    accumulate(&mut e, lower, 1.0);
                }
            }
            e.linear.push((elastic.user_rate[u], 1.0));
            let (idx, fixed) = match thresholds {
                ThresholdTerms::Fixed(t) => (None, Some(t.user[u])),
                ThresholdTerms::Joint { user, .. } => (Some(user[u]), None),
            };
            add_threshold(&mut e, Queue::User, idx, fixed);
            sub.push(format!("C12[{u}]"), e, Sense::Ge, 0.0);
        }

        if s.num_users() > 0 {
            let mut e = Expr::default();
            for (link, lower, _) in &self.fronthaul {
                if link.q == Direction::Uplink {
                    accumulate(&mut e, lower, 1.0);
                }
            }
            for (link, _, upper) in &self.access {
                if link.q == Direction::Uplink {
                    accumulate(&mut e, upper, -1.0);
                }
            }
            e.linear.extend(&all_alpha);
            sub.push("C13", e, Sense::Ge, 0.0);

            let mut e = Expr::default();
            for (link, lower, _) in &self.access {
                if link.q == Direction::Downlink {
                    accumulate(&mut e, lower, 1.0);
                }
            }
            for (link, _, upper) in &self.fronthaul {
                if link.q == Direction::Downlink {
                    accumulate(&mut e, upper, -1.0);
                }
            }
            e.linear.extend(&all_alpha);
            sub.push("C14", e, Sense::Ge, 0.0);
        }

        for sl in 0..s.num_slices {
            if s.users_in_slice(sl).next().is_none() {
                continue;
            }
            for q in Direction::ALL {
                let reserved = s.reservation_bps[sl][q.index()];
                let mut e = Expr::default();
                for (link, lower, _) in &self.access {
                    if link.q == q && s.users[link.user].slice == sl {
                        accumulate(&mut e, lower, 1.0);
                    }
                }
                for u in s.users_in_slice(sl) {
                    e.linear.push((elastic.user_rate[u], 1.0));
                }
                e.constant -= reserved / rate_scale * tighten;
                sub.push(format!("C15[{sl},{}]", q.index()), e, Sense::Ge, 0.0);
            }
        }
    }
}

/// Solves with all slack fixed at zero; if that is infeasible, minimizes the weighted
/// slack first and then the objective with the slack capped at its minimum.
fn solve_elastic(
    sub: &ConvexSubproblem,
    slack: &[(usize, f64)],
    opts: &SolveOptions,
) -> Result<ConvexSolution, SolverError> {
    match solve_convex(&without_slack(sub, slack), opts) {
        Ok(s) => return Ok(s),
        Err(SolverError::Infeasible(_))
        | Err(SolverError::Numerical(_))
        | Err(SolverError::IterLimit(_)) => {}
        Err(e) => return Err(e),
    }
    let mut phase1 = sub.clone();
    phase1.objective = vec![0.0; sub.num_vars];
    phase1.objective_constant = 0.0;
    for &(v, w) in slack {
        phase1.objective[v] = w;
    }
    let first = solve_convex(&phase1, opts)?;
    let cap = first.objective * (1.0 + 1e-6) + 1e-8;
    let mut phase2 = sub.clone();
    phase2.push(
        "elastic-cap",
        Expr {
            linear: slack.to_vec(),
            ..Expr::default()
        },
        Sense::Le,
        cap,
    );
    match solve_convex(&phase2, opts) {
        Ok(s) => Ok(s),
        Err(SolverError::Infeasible(_)) | Err(SolverError::Numerical(_)) => Ok(first),
        Err(e) => Err(e),
    }
}

fn without_slack(sub: &ConvexSubproblem, slack: &[(usize, f64)]) -> ConvexSubproblem {
    let mut strict = sub.clone();
    for &(v, _) in slack {
        strict.upper[v] = 0.0;
    }
    strict
}

fn budget_row(sub: &mut ConvexSubproblem, tag: String, terms: Vec<(usize, f64)>, budget: f64) {
    if terms.is_empty() {
        return;
    }
    let e = Expr {
        linear: terms.into_iter().map(|(v, c)| (v, c / budget)).collect(),
        ..Expr::default()
    };
    sub.push(tag, e, Sense::Le, 1.0);
}

/// Power subproblem at a fixed assignment with its decoding information.
#[derive(Debug, Clone)]
pub struct PowerSubproblem {
    pub sub: ConvexSubproblem,
    access: Vec<(usize, usize, f64)>,
    fronthaul: Vec<(usize, usize, f64)>,
    elastic: Vec<(usize, f64)>,
    delay: Option<(Vec<Option<usize>>, usize, Vec<usize>)>,
}

impl PowerSubproblem {
    /// The subproblem with every elastic variable fixed at zero.
    pub fn strict(&self) -> ConvexSubproblem {
        without_slack(&self.sub, &self.elastic)
    }

    /// Solves and writes powers (and the delay split in joint mode) into a copy of `point`.
    pub fn solve(
        &self,
        point: &Allocation,
        opts: &SolveOptions,
    ) -> Result<(Allocation, ConvexSolution), SolverError> {
        let sol = solve_elastic(&self.sub, &self.elastic, opts)?;
        Ok((self.decode(point, &sol.x), sol))
    }

    pub fn decode(&self, point: &Allocation, x: &[f64]) -> Allocation {
        let mut out = point.clone();
        for &(i, v, unit) in &self.access {
            out.access_power[i] = x[v].max(0.0) * unit;
        }
        for &(i, v, unit) in &self.fronthaul {
            out.fronthaul_power[i] = x[v].max(0.0) * unit;
        }
        if let Some((rrh, bbu, user)) = &self.delay {
            for (j, v) in rrh.iter().enumerate() {
                if let Some(v) = v {
                    out.delay.d_ul_rrh[j] = x[*v] * 1e-3;
                }
            }
            out.delay.d_bbu = x[*bbu] * 1e-3;
            for (u, &v) in user.iter().enumerate() {
                out.delay.d_dl_user[u] = x[v] * 1e-3;
            }
        }
        out
    }
}

/// The power subproblem at fixed time shares. Logarithms of the received
/// signal-plus-interference are kept exactly where they help feasibility; the
/// subtracted concave pieces are replaced by their tangents at `point`.
pub fn assemble_power_subproblem(
    point: &Allocation,
    chan: &ChannelRealization,
    scenario: &Scenario,
    formulation: Formulation,
) -> Result<PowerSubproblem, SolverError> {
    if !point.matches(scenario) || !chan.matches(scenario) {
        return Err(SolverError::Phy(crate::phy_rates::PhyError::IndexMismatch));
    }
    let ac = BandModel::access(scenario);
    let fh = BandModel::fronthaul(scenario);
    let rate_scale = scenario.access_bandwidth_hz;
    let mut sub = ConvexSubproblem::new(0);
    sub.block = Some(Block::Power);

    let mut vars: HashMap<VarKey, (usize, f64)> = HashMap::new();
    let mut access_links = Vec::new();
    let mut fronthaul_links = Vec::new();
    let mut decode_access = Vec::new();
    let mut decode_fronthaul = Vec::new();
    let mut power_scale = 0.0;

    for q in Direction::ALL {
        for u in 0..scenario.num_users() {
            for k in 0..scenario.access_subcarriers {
                let i = point.access_index(q, u, k);
                if point.access_share[i] > 0.0 {
                    let h = chan.access_gain(u, scenario.users[u].rrh, k, q);
                    let unit = ac.noise / h;
                    power_scale += point.access_share[i] * unit;
                    access_links.push(AccessLink { q, user: u, k });
                    vars.insert(
                        VarKey::Access(AccessLink { q, user: u, k }),
                        (usize::MAX, unit),
                    );
                }
            }
        }
        for j in 0..scenario.num_rrh {
            for k in 0..scenario.fronthaul_subcarriers {
                let i = point.fronthaul_index(q, j, k);
                if point.fronthaul_share[i] > 0.0 {
                    let unit = fh.noise / chan.fronthaul_gain(j, k, q);
                    power_scale += point.fronthaul_share[i] * unit;
                    fronthaul_links.push(FronthaulLink { q, rrh: j, k });
                    vars.insert(
                        VarKey::Fronthaul(FronthaulLink { q, rrh: j, k }),
                        (usize::MAX, unit),
                    );
                }
            }
        }
    }
    let power_scale = if power_scale > 0.0 { power_scale } else { 1.0 };

    for link in &access_links {
        let key = VarKey::Access(*link);
        let unit = vars[&key].1;
        let i = point.access_index(link.q, link.user, link.k);
        let cost = point.access_share[i] * unit / power_scale;
        let v = sub.add_var(
            MIN_ACCESS_SINR,
            f64::INFINITY,
            cost,
            point.access_power[i] / unit,
        );
        vars.insert(key, (v, unit));
        decode_access.push((i, v, unit));
    }
    for link in &fronthaul_links {
        let key = VarKey::Fronthaul(*link);
        let unit = vars[&key].1;
        let i = point.fronthaul_index(link.q, link.rrh, link.k);
        let cost = point.fronthaul_share[i] * unit / power_scale;
        let floor = fh.sinr_floor * (1.0 + SINR_MARGIN);
        let v = sub.add_var(floor, f64::INFINITY, cost, point.fronthaul_power[i] / unit);
        vars.insert(key, (v, unit));
        decode_fronthaul.push((i, v, unit));
    }

    let mut elastic = Elastic::default();
    for _ in 0..scenario.num_users() {
        let v = sub.add_var(0.0, f64::INFINITY, 0.0, 0.0);
        elastic.user_rate.push(v);
        elastic.weights.push((v, 1.0));
    }
    let reliability_weight = ac.surrogate.a * ac.blocklength.sqrt();

    let start = sub.expansion_point.clone();
    let kappa_ac = ac.bandwidth / LN_2;
    let kappa_fh = fh.bandwidth / LN_2;
    let mut rows = RateRows {
        scenario,
        access: Vec::new(),
        fronthaul: Vec::new(),
    };

    for link in &access_links {
        let pieces = dc_decompose_access(point, *link, chan, scenario, Block::Power)?;
        let tau = point.access_share(link.q, link.user, link.k);
        let own = vars[&VarKey::Access(*link)].0;
        // Interferers with a variable: a_m = τ_m g_m (σ/h_m) / σ.
        let mut signal = vec![(own, 1.0)];
        let mut interference = Vec::new();
        for v in 0..scenario.num_users() {
            let key = VarKey::Access(AccessLink {
                q: link.q,
                user: v,
                k: link.k,
            });
            if let Some(&(var, unit)) = vars.get(&key) {
                let g = cross_gain(chan, scenario, link.q, link.user, v, link.k);
                if g > 0.0 && var != own {
                    let a = point.access_share(link.q, v, link.k) * g * unit / ac.noise;
                    signal.push((var, a));
                    interference.push((var, a));
                }
            }
        }
        let w = tau * kappa_ac / rate_scale;
        let ln_noise = ac.noise.ln();
        let atom_f = sub.add_atom(LogAtom {
            offset: 1.0,
            affine: signal,
        });
        let gy = sum_pieces(&[(&pieces.grad_g, 1.0), (&pieces.grad_y, 1.0)]);
        let sub_model = linear_model(pieces.g + pieces.y, &gy, &vars, &start, rate_scale);
        let mut lower = Expr::constant(w * ln_noise);
        lower.logs.push((atom_f, w));
        accumulate(&mut lower, &sub_model.into_expr(), -1.0);

        // Upper model `f̂ − g`: the dispersion term is dropped because no convex
        // model bounds it from below.
        let mut upper =
            linear_model(pieces.f, &pieces.grad_f, &vars, &start, rate_scale).into_expr();
        upper.constant -= w * ln_noise;
        if !interference.is_empty() {
            let atom_g = sub.add_atom(LogAtom {
                offset: 1.0,
                affine: interference.clone(),
            });
            upper.logs.push((atom_g, -w));
        }
        rows.access.push((*link, lower, upper));

        // Reliability via the SINR floor: π − γ_min(1 + Σ a π) + β ≥ 0.
        let beta = sub.add_var(0.0, f64::INFINITY, 0.0, 0.0);
        elastic.weights.push((beta, reliability_weight));
        let floor = ac.sinr_floor * (1.0 + SINR_MARGIN);
        let mut e = Expr::constant(-floor);
        e.linear.push((own, 1.0));
        for &(var, a) in &interference {
            e.linear.push((var, -floor * a));
        }
        e.linear.push((beta, 1.0));
        sub.push(
            format!("C2[{},{},{}]", link.q.index(), link.user, link.k),
            e,
            Sense::Ge,
            0.0,
        );
    }

    for link in &fronthaul_links {
        let pieces = dc_decompose_fronthaul(point, *link, chan, scenario, Block::Power)?;
        let x = point.fronthaul_share(link.q, link.rrh, link.k);
        let own = vars[&VarKey::Fronthaul(*link)].0;
        let w = x * kappa_fh / rate_scale;
        let atom = sub.add_atom(LogAtom {
            offset: 1.0,
            affine: vec![(own, 1.0)],
        });
        let g_model = linear_model(pieces.g, &pieces.grad_g, &vars, &start, rate_scale);
        let mut lower = Expr::default();
        lower.logs.push((atom, w));
        accumulate(&mut lower, &g_model.into_expr(), -1.0);
        let upper = linear_model(pieces.f, &pieces.grad_f, &vars, &start, rate_scale).into_expr();
        rows.fronthaul.push((*link, lower, upper));
    }

    let thresholds = if formulation.joint_delay {
        let d = &point.delay;
        let mut rrh = Vec::new();
        for j in 0..scenario.num_rrh {
            rrh.push(
                scenario
                    .users_at_rrh(j)
                    .next()
                    .map(|_| sub.add_var(MIN_DELAY_MS, f64::INFINITY, 0.0, d.d_ul_rrh[j] * 1e3)),
            );
        }
        let bbu = sub.add_var(MIN_DELAY_MS, f64::INFINITY, 0.0, d.d_bbu * 1e3);
        let user: Vec<usize> = (0..scenario.num_users())
            .map(|u| sub.add_var(MIN_DELAY_MS, f64::INFINITY, 0.0, d.d_dl_user[u] * 1e3))
            .collect();
        let budget_ms = scenario.qos.delay_budget_s * 1e3;
        for (u, usr) in scenario.users.iter().enumerate() {
            let mut e = Expr::default();
            e.linear.push((rrh[usr.rrh].unwrap(), 1.0));
            e.linear.push((bbu, 1.0));
            e.linear.push((user[u], 1.0));
            sub.push(format!("C9[{u}]"), e, Sense::Le, budget_ms);
        }
        ThresholdTerms::Joint { rrh, bbu, user }
    } else {
        ThresholdTerms::Fixed(Thresholds::new(scenario, &point.delay))
    };
    rows.emit(&mut sub, &elastic, &thresholds, rate_scale);

    let b = &scenario.budgets;
    for j in 0..scenario.num_rrh {
        let terms: Vec<_> = decode_access
            .iter()
            .zip(&access_links)
            .filter(|(_, l)| l.q == Direction::Downlink && scenario.users[l.user].rrh == j)
            .map(|(&(i, v, unit), _)| (v, point.access_share[i] * unit))
            .collect();
        budget_row(&mut sub, format!("C3[{j}]"), terms, b.rrh_dl_w);
    }
    if formulation.power_budgets {
        for u in 0..scenario.num_users() {
            let terms: Vec<_> = decode_access
                .iter()
                .zip(&access_links)
                .filter(|(_, l)| l.q == Direction::Uplink && l.user == u)
                .map(|(&(i, v, unit), _)| (v, point.access_share[i] * unit))
                .collect();
            budget_row(&mut sub, format!("C4[{u}]"), terms, b.user_ul_w);
        }
        for j in 0..scenario.num_rrh {
            let terms: Vec<_> = decode_fronthaul
                .iter()
                .zip(&fronthaul_links)
                .filter(|(_, l)| l.q == Direction::Uplink && l.rrh == j)
                .map(|(&(i, v, unit), _)| (v, point.fronthaul_share[i] * unit))
                .collect();
            budget_row(&mut sub, format!("C7[{j}]"), terms, b.rrh_ul_w);
        }
        let terms: Vec<_> = decode_fronthaul
            .iter()
            .zip(&fronthaul_links)
            .filter(|(_, l)| l.q == Direction::Downlink)
            .map(|(&(i, v, unit), _)| (v, point.fronthaul_share[i] * unit))
            .collect();
        budget_row(&mut sub, "C8".into(), terms, b.bbu_dl_w);
    }

    let delay = match thresholds {
        ThresholdTerms::Joint { rrh, bbu, user } => Some((rrh, bbu, user)),
        ThresholdTerms::Fixed(_) => None,
    };
    Ok(PowerSubproblem {
        sub,
        access: decode_access,
        fronthaul: decode_fronthaul,
        elastic: elastic.weights,
        delay,
    })
}

/// Subcarrier subproblem with its decoding information.
#[derive(Debug, Clone)]
pub struct SubcarrierSubproblem {
    pub sub: ConvexSubproblem,
    /// The expansion point with nominal powers filled in for unassigned links.
    pub expansion: Allocation,
    access: Vec<(usize, usize)>,
    fronthaul: Vec<(usize, usize)>,
    elastic: Vec<(usize, f64)>,
}

impl SubcarrierSubproblem {
    /// The subproblem with every elastic variable fixed at zero.
    pub fn strict(&self) -> ConvexSubproblem {
        without_slack(&self.sub, &self.elastic)
    }

    /// Variable of an access link's share, if the link is eligible.
    pub fn access_var(&self, alloc_index: usize) -> Option<usize> {
        self.access
            .iter()
            .find(|&&(i, _)| i == alloc_index)
            .map(|&(_, v)| v)
    }

    pub fn fronthaul_var(&self, alloc_index: usize) -> Option<usize> {
        self.fronthaul
            .iter()
            .find(|&&(i, _)| i == alloc_index)
            .map(|&(_, v)| v)
    }

    /// Solves and returns the relaxed shares on top of the expansion point's powers.
    pub fn solve(&self, opts: &SolveOptions) -> Result<(Allocation, ConvexSolution), SolverError> {
        let sol = solve_elastic(&self.sub, &self.elastic, opts)?;
        Ok((self.decode(&sol.x), sol))
    }

    pub fn decode(&self, x: &[f64]) -> Allocation {
        let mut out = self.expansion.clone();
        out.access_share.iter_mut().for_each(|t| *t = 0.0);
        out.fronthaul_share.iter_mut().for_each(|t| *t = 0.0);
        for &(i, v) in &self.access {
            out.access_share[i] = x[v].clamp(0.0, 1.0);
        }
        for &(i, v) in &self.fronthaul {
            out.fronthaul_share[i] = x[v].clamp(0.0, 1.0);
        }
        out
    }
}

/// Nominal power bringing a link to `target` SINR at noise-plus-interference `n`,
/// capped at `cap`.
fn nominal_power(target: f64, n: f64, gain: f64, cap: f64) -> f64 {
    (target * n / gain).min(cap)
}

/// The linear program over relaxed time shares at fixed powers and delay split.
///
/// Links that are currently unassigned are priced at the power that gives them the
/// band's energy-efficient SINR under the current interference. Links that cannot
/// reach the reliability floor within their budget are excluded.
pub fn assemble_subcarrier_subproblem(
    point: &Allocation,
    chan: &ChannelRealization,
    scenario: &Scenario,
    formulation: Formulation,
) -> Result<SubcarrierSubproblem, SolverError> {
    if !point.matches(scenario) || !chan.matches(scenario) {
        return Err(SolverError::Phy(crate::phy_rates::PhyError::IndexMismatch));
    }
    let ac = BandModel::access(scenario);
    let fh = BandModel::fronthaul(scenario);
    let rate_scale = scenario.access_bandwidth_hz;
    let b = &scenario.budgets;
    let (ac_target, fh_target) = (energy_efficient_sinr(&ac), energy_efficient_sinr(&fh));

    let mut expansion = point.clone();
    let mut eligible_access = Vec::new();
    for q in Direction::ALL {
        let cap = match q {
            Direction::Uplink if formulation.power_budgets => b.user_ul_w,
            Direction::Uplink => f64::INFINITY,
            Direction::Downlink => b.rrh_dl_w,
        };
        for u in 0..scenario.num_users() {
            for k in 0..scenario.access_subcarriers {
                let i = point.access_index(q, u, k);
                let h = chan.access_gain(u, scenario.users[u].rrh, k, q);
                let n = ac.noise + access_interference(point, chan, scenario, q, u, k);
                if point.access_share[i] > 0.0 && point.access_power[i] > 0.0 {
                    eligible_access.push(AccessLink { q, user: u, k });
                    continue;
                }
                let p = nominal_power(ac_target, n, h, cap);
                expansion.access_power[i] = p;
                if p * h / n >= ac.sinr_floor * (1.0 + 1e-6) {
                    eligible_access.push(AccessLink { q, user: u, k });
                }
            }
        }
    }
    let mut eligible_fronthaul = Vec::new();
    for q in Direction::ALL {
        let cap = match q {
            Direction::Uplink if formulation.power_budgets => b.rrh_ul_w,
            Direction::Downlink if formulation.power_budgets => b.bbu_dl_w,
            _ => f64::INFINITY,
        };
        for j in 0..scenario.num_rrh {
            for k in 0..scenario.fronthaul_subcarriers {
                let i = point.fronthaul_index(q, j, k);
                let h = chan.fronthaul_gain(j, k, q);
                if point.fronthaul_share[i] > 0.0 && point.fronthaul_power[i] > 0.0 {
                    eligible_fronthaul.push(FronthaulLink { q, rrh: j, k });
                    continue;
                }
                let p = nominal_power(fh_target, fh.noise, h, cap);
                expansion.fronthaul_power[i] = p;
                if p * h / fh.noise >= fh.sinr_floor * (1.0 + 1e-6) {
                    eligible_fronthaul.push(FronthaulLink { q, rrh: j, k });
                }
            }
        }
    }

    let mut sub = ConvexSubproblem::new(0);
    sub.block = Some(Block::Subcarrier);
    let mut vars: HashMap<VarKey, (usize, f64)> = HashMap::new();
    let mut decode_access = Vec::new();
    let mut decode_fronthaul = Vec::new();
    let mean_power = {
        let ps: Vec<f64> = eligible_access
            .iter()
            .map(|l| expansion.access_power(l.q, l.user, l.k))
            .collect();
        let m = ps.iter().sum::<f64>() / ps.len().max(1) as f64;
        if m > 0.0 {
            m
        } else {
            1.0
        }
    };
    for link in &eligible_access {
        let i = expansion.access_index(link.q, link.user, link.k);
        let v = sub.add_var(
            0.0,
            1.0,
            expansion.access_power[i] / mean_power,
            expansion.access_share[i],
        );
        vars.insert(VarKey::Access(*link), (v, 1.0));
        decode_access.push((i, v));
    }
    for link in &eligible_fronthaul {
        let i = expansion.fronthaul_index(link.q, link.rrh, link.k);
        let v = sub.add_var(
            0.0,
            1.0,
            expansion.fronthaul_power[i] / mean_power,
            expansion.fronthaul_share[i],
        );
        vars.insert(VarKey::Fronthaul(*link), (v, 1.0));
        decode_fronthaul.push((i, v));
    }
    let mut elastic = Elastic::default();
    for _ in 0..scenario.num_users() {
        let v = sub.add_var(0.0, f64::INFINITY, 0.0, 0.0);
        elastic.user_rate.push(v);
        elastic.weights.push((v, 1.0));
    }
    let start = sub.expansion_point.clone();

    let linear_rate = |p: &DcPieces| {
        let grad = sum_pieces(&[(&p.grad_f, 1.0), (&p.grad_g, -1.0), (&p.grad_y, -1.0)]);
        linear_model(p.rate(), &grad, &vars, &start, rate_scale).into_expr()
    };
    let mut rows = RateRows {
        scenario,
        access: Vec::new(),
        fronthaul: Vec::new(),
    };
    for link in &eligible_access {
        let pieces = dc_decompose_access(&expansion, *link, chan, scenario, Block::Subcarrier)?;
        let e = linear_rate(&pieces);
        rows.access.push((*link, e.clone(), e));
    }
    for link in &eligible_fronthaul {
        let pieces = dc_decompose_fronthaul(&expansion, *link, chan, scenario, Block::Subcarrier)?;
        let e = linear_rate(&pieces);
        rows.fronthaul.push((*link, e.clone(), e));
    }
    rows.emit(
        &mut sub,
        &elastic,
        &ThresholdTerms::Fixed(Thresholds::new(scenario, &point.delay)),
        rate_scale,
    );

    for q in Direction::ALL {
        for j in 0..scenario.num_rrh {
            for k in 0..scenario.access_subcarriers {
                let terms: Vec<_> = eligible_access
                    .iter()
                    .zip(&decode_access)
                    .filter(|(l, _)| l.q == q && l.k == k && scenario.users[l.user].rrh == j)
                    .map(|(_, &(_, v))| (v, 1.0))
                    .collect();
                if terms.len() > 1 {
                    sub.push(
                        format!("C1[{j},{k},{}]", q.index()),
                        Lin {
                            constant: 0.0,
                            coefs: terms,
                        }
                        .into_expr(),
                        Sense::Le,
                        1.0,
                    );
                }
            }
        }
        if formulation.power_budgets {
            for k in 0..scenario.fronthaul_subcarriers {
                let terms: Vec<_> = eligible_fronthaul
                    .iter()
                    .zip(&decode_fronthaul)
                    .filter(|(l, _)| l.q == q && l.k == k)
                    .map(|(_, &(_, v))| (v, 1.0))
                    .collect();
                if terms.len() > 1 {
                    sub.push(
                        format!("C5[{k},{}]", q.index()),
                        Lin {
                            constant: 0.0,
                            coefs: terms,
                        }
                        .into_expr(),
                        Sense::Le,
                        1.0,
                    );
                }
            }
        }
    }

    let access_terms = |pred: &dyn Fn(&AccessLink) -> bool| -> Vec<(usize, f64)> {
        eligible_access
            .iter()
            .zip(&decode_access)
            .filter(|(l, _)| pred(l))
            .map(|(_, &(i, v))| (v, expansion.access_power[i]))
            .collect()
    };
    let fronthaul_terms = |pred: &dyn Fn(&FronthaulLink) -> bool| -> Vec<(usize, f64)> {
        eligible_fronthaul
            .iter()
            .zip(&decode_fronthaul)
            .filter(|(l, _)| pred(l))
            .map(|(_, &(i, v))| (v, expansion.fronthaul_power[i]))
            .collect()
    };
    for j in 0..scenario.num_rrh {
        let t = access_terms(&|l| l.q == Direction::Downlink && scenario.users[l.user].rrh == j);
        budget_row(&mut sub, format!("C3[{j}]"), t, b.rrh_dl_w);
    }
    if formulation.power_budgets {
        for u in 0..scenario.num_users() {
            let t = access_terms(&|l| l.q == Direction::Uplink && l.user == u);
            budget_row(&mut sub, format!("C4[{u}]"), t, b.user_ul_w);
        }
        for j in 0..scenario.num_rrh {
            let t = fronthaul_terms(&|l| l.q == Direction::Uplink && l.rrh == j);
            budget_row(&mut sub, format!("C7[{j}]"), t, b.rrh_ul_w);
        }
        let t = fronthaul_terms(&|l| l.q == Direction::Downlink);
        budget_row(&mut sub, "C8".into(), t, b.bbu_dl_w);
    }

    Ok(SubcarrierSubproblem {
        sub,
        expansion,
        access: decode_access,
        fronthaul: decode_fronthaul,
        elastic: elastic.weights,
    })
}

/// Chooses the delay split at fixed rates.
///
/// Each queue needs `D_q ≥ c_q / R_q`, where `R_q` is the queue's service rate plus the
/// rate slack currently granted to it. Among splits meeting every end-to-end budget,
/// the one maximizing the queues' relative slack lexicographically (smallest first) is
/// returned; it is found by progressive filling.
pub fn solve_delay_lp(
    point: &Allocation,
    rates: &RateSummary,
    scenario: &Scenario,
) -> Result<DelaySplit, SolverError> {
    let n = scenario.num_users();
    let ul = Direction::Uplink.index();
    let dl = Direction::Downlink.index();
    let slack = point
        .alpha
        .chunks(scenario.access_subcarriers.max(1))
        .map(|c| c.iter().sum::<f64>())
        .collect::<Vec<_>>();
    let total_slack: f64 = slack.iter().sum();
    let need = |queue: Queue, rate: f64| -> Result<f64, SolverError> {
        if rate > 0.0 {
            Ok(threshold_coefficient(scenario, queue) / rate)
        } else {
            Err(SolverError::Infeasible(format!(
                "{queue:?} queue has zero service rate"
            )))
        }
    };
    // Queue order: RRHs, BBU, users.
    let j_count = scenario.num_rrh;
    let mut lower = vec![0.0; j_count + 1 + n];
    let mut present = vec![false; j_count + 1 + n];
    for j in 0..j_count {
        if scenario.users_at_rrh(j).next().is_some() {
            let extra: f64 = scenario.users_at_rrh(j).map(|u| slack[u]).sum();
            lower[j] = need(Queue::Rrh, rates.rrh_rate[j][ul] + extra)?;
            present[j] = true;
        }
    }
    if n > 0 {
        lower[j_count] = need(Queue::Bbu, rates.bbu_rate[ul] + total_slack)?;
        present[j_count] = true;
    }
    for u in 0..n {
        lower[j_count + 1 + u] = need(Queue::User, rates.user_rate[u][dl] + slack[u])?;
        present[j_count + 1 + u] = true;
    }
    let budget = scenario.qos.delay_budget_s;
    let chains: Vec<[usize; 3]> = scenario
        .users
        .iter()
        .enumerate()
        .map(|(u, usr)| [usr.rrh, j_count, j_count + 1 + u])
        .collect();
    for c in &chains {
        let s: f64 = c.iter().map(|&q| lower[q]).sum();
        if s > budget * (1.0 + 1e-12) {
            return Err(SolverError::Infeasible(format!(
                "end-to-end delay needs {s:.3e} s but the budget is {budget:.3e} s"
            )));
        }
    }

    let mut value = vec![f64::NAN; lower.len()];
    let mut frozen = vec![false; lower.len()];
    while chains.iter().any(|c| c.iter().any(|&q| !frozen[q])) {
        let mut best: Option<(f64, usize)> = None;
        for (ci, c) in chains.iter().enumerate() {
            if c.iter().all(|&q| frozen[q]) {
                continue;
            }
            let free: f64 = c.iter().filter(|&&q| !frozen[q]).map(|&q| lower[q]).sum();
            let fixed: f64 = c.iter().filter(|&&q| frozen[q]).map(|&q| value[q]).sum();
            let t = if free > 0.0 {
                (budget - fixed - free) / free
            } else {
                f64::INFINITY
            };
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, ci));
            }
        }
        let (t, ci) = best.expect("an unfrozen chain exists");
        let t = if t.is_finite() { t.max(0.0) } else { 0.0 };
        for &q in &chains[ci] {
            if !frozen[q] {
                value[q] = lower[q] * (1.0 + t);
                frozen[q] = true;
            }
        }
    }
    let third = budget / 3.0;
    let pick = |q: usize| {
        if present[q] && value[q].is_finite() {
            value[q]
        } else {
            third
        }
    };
    Ok(DelaySplit {
        d_ul_rrh: (0..j_count).map(pick).collect(),
        d_bbu: pick(j_count),
        d_dl_user: (0..n).map(|u| pick(j_count + 1 + u)).collect(),
    })
}

/// Minimum elastic slack at a fixed point.
///
/// Writes the per-user rate slack (bit/s) onto each user's first access subcarrier and
/// the reliability slack `max(0, Ξ(γ) − ξ)` onto every assigned access link. Among
/// slack vectors of minimum total, the one placing slack on users with the weakest
/// channels is chosen.
pub fn solve_alpha_lp(
    point: &Allocation,
    rates: &RateSummary,
    chan: &ChannelRealization,
    scenario: &Scenario,
) -> Result<Allocation, SolverError> {
    let n = scenario.num_users();
    let rate_scale = scenario.access_bandwidth_hz;
    let ac = BandModel::access(scenario);
    let xi = scenario.qos.error_threshold;
    let mut out = point.clone();
    out.alpha.iter_mut().for_each(|a| *a = 0.0);
    for i in 0..out.alpha_reliability.len() {
        out.alpha_reliability[i] = if point.access_share[i] > 0.0 {
            (ac.surrogate_error(rates.access_sinr[i]) - xi).max(0.0)
        } else {
            0.0
        };
    }
    if n == 0 {
        return Ok(out);
    }

    let th = Thresholds::new(scenario, &point.delay);
    let (ul, dl) = (Direction::Uplink.index(), Direction::Downlink.index());
    // Rows: (users involved, deficit in bit/s/Hz).
    let mut rows: Vec<(Vec<usize>, f64)> = Vec::new();
    let everyone: Vec<usize> = (0..n).collect();
    for j in 0..scenario.num_rrh {
        if let Some(t) = th.rrh[j] {
            rows.push((
                scenario.users_at_rrh(j).collect(),
                (t - rates.rrh_rate[j][ul]) / rate_scale,
            ));
        }
    }
    if let Some(t) = th.bbu {
        rows.push((everyone.clone(), (t - rates.bbu_rate[ul]) / rate_scale));
    }
    for u in 0..n {
        rows.push((vec![u], (th.user[u] - rates.user_rate[u][dl]) / rate_scale));
    }
    let access_ul: f64 = rates.rrh_rate.iter().map(|r| r[ul]).sum();
    let access_dl: f64 = rates.rrh_rate.iter().map(|r| r[dl]).sum();
    rows.push((
        everyone.clone(),
        (access_ul - rates.bbu_rate[ul]) / rate_scale,
    ));
    rows.push((
        everyone.clone(),
        (rates.bbu_rate[dl] - access_dl) / rate_scale,
    ));
    for s in 0..scenario.num_slices {
        for q in 0..2 {
            if let Some(r) = th.slice[s][q] {
                rows.push((
                    scenario.users_in_slice(s).collect(),
                    (r - rates.slice_rate[s][q]) / rate_scale,
                ));
            }
        }
    }
    let tol = 1e-12;
    let rows: Vec<_> = rows.into_iter().filter(|(_, d)| *d > tol).collect();
    if rows.is_empty() {
        return Ok(out);
    }

    let mut sub = ConvexSubproblem::new(n);
    sub.lower = vec![0.0; n];
    for (users, deficit) in &rows {
        let e = Expr {
            linear: users.iter().map(|&u| (u, 1.0)).collect(),
            ..Expr::default()
        };
        sub.push("deficit", e, Sense::Ge, *deficit);
    }
    sub.objective = vec![1.0; n];
    let opts = SolveOptions {
        tol: 1e-10,
        max_iter: 200,
    };
    let first = solve_convex(&sub, &opts)?;

    // Weaker users get cheaper slack in the tie-break.
    let strength: Vec<f64> = (0..n)
        .map(|u| {
            let j = scenario.users[u].rrh;
            let mut s = 0.0;
            for k in 0..scenario.access_subcarriers {
                for q in Direction::ALL {
                    s += chan.access_gain(u, j, k, q);
                }
            }
            s
        })
        .collect();
    let strongest = strength.iter().fold(0.0, |m: f64, &v| m.max(v));
    let mut tie = sub.clone();
    tie.objective = strength
        .iter()
        .map(|s| 1.0 + s / strongest.max(f64::MIN_POSITIVE))
        .collect();
    tie.push(
        "minimum-total",
        Expr {
            linear: (0..n).map(|u| (u, 1.0)).collect(),
            ..Expr::default()
        },
        Sense::Le,
        first.objective * (1.0 + 1e-9) + 1e-12,
    );
    let x = match solve_convex(&tie, &opts) {
        Ok(s) => s.x,
        Err(_) => first.x,
    };
    for u in 0..n {
        let a = x[u].max(0.0);
        out.alpha[u * scenario.access_subcarriers] = if a > 1e-11 { a * rate_scale } else { 0.0 };
    }
    Ok(out)
}
