//! Difference-of-concave split of the access and fronthaul rates with gradients.
//!
//! Access: `τ·r = f − g − y` with `f = τκ ln(N + S)`, `g = τκ ln N` and
//! `y = τκc·ψ/Γ`, where `S = p h`, `N = σ + I`, `ψ = sqrt(S(S + 2N))`, `Γ = N + S`,
//! `κ = w/ln2` and `c = Qinv(ξ)/sqrt(wφ)`. `ψ/Γ` is the square root of the dispersion.
//! Fronthaul: `x·r = f − g` with `f = xκ ln(1 + γ)` and `g = xκc·ψ/Γ` at `N = σ`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::{Allocation, SolverError};
use crate::phy_rates::{cross_gain, BandModel};
use crate::scenario::{ChannelRealization, Direction, Scenario};

/// Noise-plus-interference floor inside the logarithms.
pub const NOISE_FLOOR_W: f64 = 1e-30;

/// Which variables the gradients are taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    /// Time shares `τ` and `x`.
    Subcarrier,
    /// Powers.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccessLink {
    pub q: Direction,
    pub user: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FronthaulLink {
    pub q: Direction,
    pub rrh: usize,
    pub k: usize,
}

/// A variable of the allocation tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKey {
    Access(AccessLink),
    Fronthaul(FronthaulLink),
}

/// Values of the three pieces at a point and their sparse gradients in one block.
/// Fronthaul pieces have `y = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DcPieces {
    pub f: f64,
    pub g: f64,
    pub y: f64,
    pub grad_f: Vec<(VarKey, f64)>,
    pub grad_g: Vec<(VarKey, f64)>,
    pub grad_y: Vec<(VarKey, f64)>,
}

fn partial(grad: &[(VarKey, f64)], key: VarKey) -> f64 {
    grad.iter().filter(|(k, _)| *k == key).map(|(_, v)| v).sum()
}

impl DcPieces {
    /// `f − g − y`.
    pub fn rate(&self) -> f64 {
        self.f - self.g - self.y
    }

    pub fn df(&self, key: VarKey) -> f64 {
        partial(&self.grad_f, key)
    }

    pub fn dg(&self, key: VarKey) -> f64 {
        partial(&self.grad_g, key)
    }

    pub fn dy(&self, key: VarKey) -> f64 {
        partial(&self.grad_y, key)
    }
}

/// `ψ/Γ` and its partial derivatives in `S` and `N`.
fn root_dispersion(s: f64, n: f64) -> (f64, f64, f64) {
    let gamma = n + s;
    let psi = (s * (s + 2.0 * n)).sqrt();
    if psi <= 0.0 {
        return (0.0, f64::INFINITY, 0.0);
    }
    let v = psi / gamma;
    let d_s = ((s + n) / psi * gamma - psi) / (gamma * gamma);
    let d_n = (s / psi * gamma - psi) / (gamma * gamma);
    (v, d_s, d_n)
}

pub fn dc_decompose_access(
    point: &Allocation,
    link: AccessLink,
    chan: &ChannelRealization,
    scenario: &Scenario,
    block: Block,
) -> Result<DcPieces, SolverError> {
    let band = BandModel::access(scenario);
    let kappa = band.bandwidth / LN_2;
    let c = band.dispersion_coef;
    let AccessLink { q, user, k } = link;
    let tau = point.access_share(q, user, k);
    let p = point.access_power(q, user, k);
    let h = chan.access_gain(user, scenario.users[user].rrh, k, q);

    let mut interferers = Vec::new();
    let mut interference = 0.0;
    for v in 0..scenario.num_users() {
        let g = cross_gain(chan, scenario, q, user, v, k);
        if g > 0.0 {
            let key = VarKey::Access(AccessLink { q, user: v, k });
            let (tv, pv) = (point.access_share(q, v, k), point.access_power(q, v, k));
            interference += tv * pv * g;
            interferers.push((key, tv, pv, g));
        }
    }
    let raw = band.noise + interference;
    if !(raw > 0.0) {
        return Err(SolverError::DegeneratePoint(format!(
            "noise plus interference {raw} at {link:?}"
        )));
    }
    let n = raw.max(NOISE_FLOOR_W);
    let s = p * h;
    let (v, dv_ds, dv_dn) = root_dispersion(s, n);
    let own = VarKey::Access(link);

    let mut out = DcPieces {
        f: tau * kappa * (n + s).ln(),
        g: tau * kappa * n.ln(),
        y: tau * kappa * c * v,
        grad_f: Vec::new(),
        grad_g: Vec::new(),
        grad_y: Vec::new(),
    };
    match block {
        Block::Subcarrier => {
            out.grad_f.push((own, kappa * (n + s).ln()));
            out.grad_g.push((own, kappa * n.ln()));
            out.grad_y.push((own, kappa * c * v));
            for &(key, _, pv, g) in &interferers {
                let a = pv * g;
                out.grad_f.push((key, tau * kappa * a / (n + s)));
                out.grad_g.push((key, tau * kappa * a / n));
                out.grad_y.push((key, tau * kappa * c * dv_dn * a));
            }
        }
        Block::Power => {
            if s <= 0.0 && tau > 0.0 {
                return Err(SolverError::DegeneratePoint(format!(
                    "dispersion gradient unbounded at zero received power on {link:?}"
                )));
            }
            out.grad_f.push((own, tau * kappa * h / (n + s)));
            out.grad_g.push((own, 0.0));
            out.grad_y.push((
                own,
                if tau > 0.0 {
                    tau * kappa * c * dv_ds * h
                } else {
                    0.0
                },
            ));
            for &(key, tv, _, g) in &interferers {
                let b = tv * g;
                out.grad_f.push((key, tau * kappa * b / (n + s)));
                out.grad_g.push((key, tau * kappa * b / n));
                out.grad_y.push((key, tau * kappa * c * dv_dn * b));
            }
        }
    }
    Ok(out)
}

pub fn dc_decompose_fronthaul(
    point: &Allocation,
    link: FronthaulLink,
    chan: &ChannelRealization,
    scenario: &Scenario,
    block: Block,
) -> Result<DcPieces, SolverError> {
    let band = BandModel::fronthaul(scenario);
    let kappa = band.bandwidth / LN_2;
    let c = band.dispersion_coef;
    let FronthaulLink { q, rrh, k } = link;
    let x = point.fronthaul_share(q, rrh, k);
    let p = point.fronthaul_power(q, rrh, k);
    let h = chan.fronthaul_gain(rrh, k, q);
    if !(band.noise > 0.0) {
        return Err(SolverError::DegeneratePoint(format!(
            "fronthaul noise {}",
            band.noise
        )));
    }
    let n = band.noise.max(NOISE_FLOOR_W);
    let s = p * h;
    let (v, dv_ds, _) = root_dispersion(s, n);
    let own = VarKey::Fronthaul(link);
    let log_term = (s / n).ln_1p();
    let mut out = DcPieces {
        f: x * kappa * log_term,
        g: x * kappa * c * v,
        y: 0.0,
        grad_f: Vec::new(),
        grad_g: Vec::new(),
        grad_y: Vec::new(),
    };
    match block {
        Block::Subcarrier => {
            out.grad_f.push((own, kappa * log_term));
            out.grad_g.push((own, kappa * c * v));
        }
        Block::Power => {
            if s <= 0.0 && x > 0.0 {
                return Err(SolverError::DegeneratePoint(format!(
                    "dispersion gradient unbounded at zero received power on {link:?}"
                )));
            }
            out.grad_f.push((own, x * kappa * h / (n + s)));
            out.grad_g.push((
                own,
                if x > 0.0 {
                    x * kappa * c * dv_ds * h
                } else {
                    0.0
                },
            ));
        }
    }
    Ok(out)
}

/// First-order expansion `g(x₀) + ∇g(x₀)·(x − x₀)`.
pub fn linearize_concave(
    g_value: f64,
    g_gradient: &[f64],
    expansion: &[f64],
    query: &[f64],
) -> f64 {
    g_value
        + g_gradient
            .iter()
            .zip(expansion.iter().zip(query))
            .map(|(d, (x0, x))| d * (x - x0))
            .sum::<f64>()
}
