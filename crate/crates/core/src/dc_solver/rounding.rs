use super::Allocation;
use crate::scenario::Direction;

/// Shares at or below this value leave a subcarrier unassigned.
pub const ROUNDING_THRESHOLD: f64 = 1e-3;

/// Gives each (RRH, access subcarrier, direction) to the user with the largest share
/// and each (fronthaul subcarrier, direction) to the RRH with the largest share.
/// Ties go to the lowest index. Serving RRHs come from `user_rrh`.
pub fn round_timesharing(relaxed: &Allocation, user_rrh: &[usize]) -> Allocation {
    let mut out = relaxed.clone();
    for q in Direction::ALL {
        for j in 0..relaxed.num_rrh {
            for k in 0..relaxed.access_subcarriers {
                let mut best: Option<(usize, f64)> = None;
                for u in (0..relaxed.num_users).filter(|&u| user_rrh[u] == j) {
                    let t = relaxed.access_share(q, u, k);
                    if best.map_or(true, |(_, b)| t > b) {
                        best = Some((u, t));
                    }
                }
                for u in (0..relaxed.num_users).filter(|&u| user_rrh[u] == j) {
                    let i = out.access_index(q, u, k);
                    out.access_share[i] = match best {
                        Some((w, t)) if w == u && t > ROUNDING_THRESHOLD => 1.0,
                        _ => 0.0,
                    };
                }
            }
        }
        for k in 0..relaxed.fronthaul_subcarriers {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..relaxed.num_rrh {
                let x = relaxed.fronthaul_share(q, j, k);
                if best.map_or(true, |(_, b)| x > b) {
                    best = Some((j, x));
                }
            }
            for j in 0..relaxed.num_rrh {
                let i = out.fronthaul_index(q, j, k);
                out.fronthaul_share[i] = match best {
                    Some((w, x)) if w == j && x > ROUNDING_THRESHOLD => 1.0,
                    _ => 0.0,
                };
            }
        }
    }
    out
}

/// After [`round_timesharing`], gives one access subcarrier back to every user that
/// held time share in `relaxed` but holds none in `rounded` for some direction.
///
/// The subcarrier is the one with the user's largest relaxed share among those left
/// unassigned at its RRH. If none is free, it is taken from a user at the same RRH
/// holding at least two. Only subcarriers with a positive power in `relaxed` are
/// candidates. Returns `None` when nothing changed.
pub fn cover_starved_users(
    relaxed: &Allocation,
    rounded: &Allocation,
    user_rrh: &[usize],
) -> Option<Allocation> {
    let mut out = rounded.clone();
    let k1 = relaxed.access_subcarriers;
    let mut changed = false;
    for q in Direction::ALL {
        for u in 0..relaxed.num_users {
            let j = user_rrh[u];
            let held = |a: &Allocation, v: usize| {
                (0..k1).filter(|&k| a.access_share(q, v, k) > 0.0).count()
            };
            let wanted: f64 = (0..k1).map(|k| relaxed.access_share(q, u, k)).sum();
            if wanted <= ROUNDING_THRESHOLD || held(&out, u) > 0 {
                continue;
            }
            let peers: Vec<usize> = (0..relaxed.num_users)
                .filter(|&v| v != u && user_rrh[v] == j)
                .collect();
            let owner = |a: &Allocation, k: usize| {
                peers
                    .iter()
                    .copied()
                    .find(|&v| a.access_share(q, v, k) > 0.0)
            };
            let pick = |candidates: &mut dyn Iterator<Item = usize>| {
                candidates.fold(None, |best: Option<(usize, f64)>, k| {
                    let t = relaxed.access_share(q, u, k);
                    if best.map_or(true, |(_, b)| t > b) {
                        Some((k, t))
                    } else {
                        best
                    }
                })
            };
            let powered = |k: usize| relaxed.access_power[relaxed.access_index(q, u, k)] > 0.0;
            let free = pick(&mut (0..k1).filter(|&k| powered(k) && owner(&out, k).is_none()));
            let chosen = free.or_else(|| {
                pick(&mut (0..k1).filter(|&k| {
                    powered(k) && owner(&out, k).map_or(false, |v| held(&out, v) >= 2)
                }))
            });
            if let Some((k, _)) = chosen {
                if let Some(v) = owner(&out, k) {
                    let i = out.access_index(q, v, k);
                    out.access_share[i] = 0.0;
                }
                let i = out.access_index(q, u, k);
                out.access_share[i] = 1.0;
                changed = true;
            }
        }
    }
    changed.then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_users(shares: [[f64; 2]; 2]) -> Allocation {
        let mut a = Allocation {
            num_users: 2,
            num_rrh: 1,
            access_subcarriers: 2,
            fronthaul_subcarriers: 1,
            access_power: vec![1.0; 8],
            access_share: vec![0.0; 8],
            fronthaul_power: vec![0.0; 2],
            fronthaul_share: vec![0.0; 2],
            delay: crate::qos_delay::DelaySplit { d_ul_rrh: vec![1e-3], d_bbu: 1e-3, d_dl_user: vec![1e-3; 2] },
            alpha: vec![0.0; 4],
            alpha_reliability: vec![0.0; 8],
        };
        for (u, row) in shares.iter().enumerate() {
            for (k, &t) in row.iter().enumerate() {
                let i = a.access_index(Direction::Downlink, u, k);
                a.access_share[i] = t;
            }
        }
        a
    }

    #[test]
    fn starved_user_takes_a_free_subcarrier_then_a_spare_one() {
        let dl = Direction::Downlink;
        // User 1 loses subcarrier 0 to user 0; subcarrier 1 is free.
        let relaxed = two_users([[0.8, 0.0], [0.2, 0.0]]);
        let rounded = round_timesharing(&relaxed, &[0, 0]);
        assert_eq!(rounded.access_share(dl, 1, 0), 0.0);
        let covered = cover_starved_users(&relaxed, &rounded, &[0, 0]).unwrap();
        assert_eq!((covered.access_share(dl, 0, 0), covered.access_share(dl, 1, 1)), (1.0, 1.0));

        // Nothing free: user 0 holds both and gives up the one user 1 wanted more.
        let relaxed = two_users([[0.9, 0.7], [0.1, 0.3]]);
        let rounded = round_timesharing(&relaxed, &[0, 0]);
        let covered = cover_starved_users(&relaxed, &rounded, &[0, 0]).unwrap();
        assert_eq!((covered.access_share(dl, 0, 0), covered.access_share(dl, 1, 1)), (1.0, 1.0));
        assert_eq!(covered.access_share(dl, 0, 1), 0.0);

        let binary = two_users([[1.0, 0.0], [0.0, 1.0]]);
        assert!(cover_starved_users(&binary, &round_timesharing(&binary, &[0, 0]), &[0, 0]).is_none());
    }
}
