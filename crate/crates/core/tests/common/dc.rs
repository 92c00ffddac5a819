//! Finite-difference checks of the DC pieces.

use tactile_cran::dc_solver::*;
use tactile_cran::scenario::{Direction, Scenario};

pub fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(scale)
}

pub fn access_links(s: &Scenario) -> Vec<AccessLink> {
    let mut v = Vec::new();
    for q in Direction::ALL {
        for user in 0..s.num_users() {
            for k in 0..s.access_subcarriers {
                v.push(AccessLink { q, user, k });
            }
        }
    }
    v
}

pub fn fronthaul_links(s: &Scenario) -> Vec<FronthaulLink> {
    let mut v = Vec::new();
    for q in Direction::ALL {
        for rrh in 0..s.num_rrh {
            for k in 0..s.fronthaul_subcarriers {
                v.push(FronthaulLink { q, rrh, k });
            }
        }
    }
    v
}

pub fn perturbed(a: &Allocation, key: VarKey, block: Block, h: f64) -> Allocation {
    let mut b = a.clone();
    match (key, block) {
        (VarKey::Access(l), Block::Subcarrier) => {
            b.access_share[a.access_index(l.q, l.user, l.k)] += h
        }
        (VarKey::Access(l), Block::Power) => b.access_power[a.access_index(l.q, l.user, l.k)] += h,
        (VarKey::Fronthaul(l), Block::Subcarrier) => {
            b.fronthaul_share[a.fronthaul_index(l.q, l.rrh, l.k)] += h
        }
        (VarKey::Fronthaul(l), Block::Power) => {
            b.fronthaul_power[a.fronthaul_index(l.q, l.rrh, l.k)] += h
        }
    }
    b
}

pub fn value_of(a: &Allocation, key: VarKey, block: Block) -> f64 {
    match (key, block) {
        (VarKey::Access(l), Block::Subcarrier) => a.access_share(l.q, l.user, l.k),
        (VarKey::Access(l), Block::Power) => a.access_power(l.q, l.user, l.k),
        (VarKey::Fronthaul(l), Block::Subcarrier) => a.fronthaul_share(l.q, l.rrh, l.k),
        (VarKey::Fronthaul(l), Block::Power) => a.fronthaul_power(l.q, l.rrh, l.k),
    }
}

/// Checks every reported partial of the three pieces against central differences,
/// and that unreported variables have zero finite-difference derivative.
pub fn check_gradients<F>(
    a: &Allocation,
    pieces: &DcPieces,
    keys: &[VarKey],
    block: Block,
    eval: F,
) -> Result<(), String>
where
    F: Fn(&Allocation) -> DcPieces,
{
    let scale = pieces.f.abs().max(pieces.g.abs()).max(pieces.y.abs());
    for &key in keys {
        let x = value_of(a, key, block);
        let h = 1e-6 * x.abs().max(1e-12);
        let up = eval(&perturbed(a, key, block, h));
        let dn = eval(&perturbed(a, key, block, -h));
        let fd = |sel: fn(&DcPieces) -> f64| (sel(&up) - sel(&dn)) / (2.0 * h);
        for (name, analytic, numeric) in [
            ("f", pieces.df(key), fd(|p| p.f)),
            ("g", pieces.dg(key), fd(|p| p.g)),
            ("y", pieces.dy(key), fd(|p| p.y)),
        ] {
            // Compare in units of the piece's change over a relative step.
            let e = (analytic - numeric).abs() * x.abs() / scale.max(1e-300);
            let r = rel_err(analytic, numeric, 1e-6 * scale / x.abs().max(1e-300));
            if e > 1e-8 && r > 1e-4 {
                return Err(format!(
                    "{name} wrt {key:?}: analytic {analytic:e} numeric {numeric:e}"
                ));
            }
        }
    }
    Ok(())
}

pub fn all_keys(s: &Scenario) -> Vec<VarKey> {
    access_links(s)
        .into_iter()
        .map(VarKey::Access)
        .chain(fronthaul_links(s).into_iter().map(VarKey::Fronthaul))
        .collect()
}
