mod common;

use common::*;
use tactile_cran::orchestrator::*;
use tactile_cran::phy_rates::{aggregate_rates, power_budget_check};
use tactile_cran::qos_delay::check_delay_chain;
use tactile_cran::scenario::{QosConfig, ScenarioConfig};

/// The shipped profile whose user, fronthaul and BBU budgets bind.
fn tight() -> ScenarioConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/tight.toml");
    ScenarioConfig::from_path(&path).unwrap()
}

fn tight_with_delay(ms: f64) -> ScenarioConfig {
    let t = tight();
    ScenarioConfig {
        qos: QosConfig {
            delay_budget_ms: ms,
            ..t.qos.clone()
        },
        reservation_bps_per_hz: 0.0,
        ..t
    }
}

fn with_delay(ms: f64) -> ScenarioConfig {
    ScenarioConfig {
        qos: QosConfig {
            delay_budget_ms: ms,
            ..QosConfig::default()
        },
        ..ScenarioConfig::default()
    }
}

#[test]
fn slack_instance_converges_without_rejections() {
    for seed in [1, 2] {
        let (s, c) = instance(seed, ScenarioConfig::default());
        let run = run_algorithm1(&s, &c, &RunConfig::default()).unwrap();
        assert!(run.rejected.is_empty());
        assert_eq!(run.admitted.len(), s.num_users());
        assert_eq!(run.status, RunStatus::Converged);
        assert!(
            run.feasibility.worst() >= -1e-6,
            "{:?}",
            run.feasibility.violations(1e-6)
        );
        assert!(run.total_power_w > 0.0);

        // Independent checks of delays and budgets on the returned allocation.
        let rates = aggregate_rates(&run.allocation, &c, &s).unwrap();
        assert!(check_delay_chain(&run.allocation.delay, &rates, &s).min() >= -1e-9);
        assert!(power_budget_check(&run.allocation, &s).min() >= 0.0);
    }
}

#[test]
fn impossible_deadline_rejects_everyone() {
    let cfg = ScenarioConfig {
        rrh_dl_power_dbm: -30.0,
        rrh_ul_power_dbm: -30.0,
        bbu_dl_power_dbm: -30.0,
        user_ul_power_dbm: -30.0,
        ..with_delay(0.01)
    };
    let (s, c) = instance(3, cfg);
    match run_algorithm1(&s, &c, &RunConfig::default()) {
        Err(OrchestratorError::NoUsersLeft { rejected }) => {
            let mut r = rejected.clone();
            r.sort();
            assert_eq!(r, (0..s.num_users()).collect::<Vec<_>>());
        }
        other => panic!("expected NoUsersLeft, got {other:?}"),
    }
}

#[test]
fn no_users_without_admission_control_costs_nothing() {
    let (s, c) = instance(1, ScenarioConfig::default());
    let (s, c) = (s.restrict_users(&[]), c.restrict_users(&[]));
    let run = run_baseline_noac(&s, &c, &RunConfig::default()).unwrap();
    assert_eq!(run.total_power_w, 0.0);
    assert!(run.admitted.is_empty());
}

#[test]
fn runs_are_deterministic() {
    let (s, c) = instance(5, ScenarioConfig::default());
    let a = run_algorithm1(&s, &c, &RunConfig::default()).unwrap();
    let b = run_algorithm1(&s, &c, &RunConfig::default()).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn objective_never_increases_within_a_round() {
    for (seed, cfg) in [(1, ScenarioConfig::default()), (2, with_delay(0.25))] {
        let (s, c) = instance(seed, cfg);
        let run = run_algorithm1(&s, &c, &RunConfig::default()).unwrap();
        for w in run.objective_trace.windows(2) {
            if w[0].round == w[1].round {
                assert!(
                    w[1].objective <= w[0].objective,
                    "{:?} then {:?}",
                    w[0],
                    w[1]
                );
            }
        }
    }
}

#[test]
fn dynamic_split_needs_no_more_power_than_thirds() {
    for seed in 0..4 {
        let (s, c) = instance(seed, with_delay(0.5));
        let d = run_algorithm1(&s, &c, &RunConfig::default()).unwrap();
        let f = run_baseline_fixed(&s, &c, &RunConfig::default()).unwrap();
        assert!(d.rejected.is_empty() && f.rejected.is_empty());
        assert!(
            d.total_power_w <= f.total_power_w,
            "seed {seed}: {} vs {}",
            d.total_power_w,
            f.total_power_w
        );
    }
}

#[test]
fn thirds_reject_at_least_as_many_users_under_tight_deadlines() {
    let cases = [
        (0, tight_with_delay(0.05)),
        (0, tight_with_delay(0.1)),
        (4, tight_with_delay(0.05)),
    ];
    let mut strictly = 0;
    for (seed, cfg) in cases {
        let (s, c) = instance(seed, cfg);
        let d = run_algorithm1(&s, &c, &RunConfig::default()).unwrap();
        let f = run_baseline_fixed(&s, &c, &RunConfig::default()).unwrap();
        assert!(
            f.rejected.len() >= d.rejected.len(),
            "seed {seed}: fixed {:?} dynamic {:?}",
            f.rejected,
            d.rejected
        );
        if f.rejected.len() > d.rejected.len() {
            strictly += 1;
        }
    }
    assert!(strictly >= 1);
}

#[test]
fn larger_reservations_admit_no_more_users() {
    let mut admitted = Vec::new();
    for rsv in [0.0, 1.0, 2.0] {
        let mut total = 0;
        for seed in 0..4 {
            let (s, c) = instance(
                seed,
                ScenarioConfig {
                    reservation_bps_per_hz: rsv,
                    ..tight()
                },
            );
            match run_algorithm1(&s, &c, &RunConfig::default()) {
                Ok(run) => {
                    assert!(run.feasibility.worst() >= -1e-6);
                    total += run.admitted.len();
                }
                Err(OrchestratorError::NoUsersLeft { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
        admitted.push(total);
    }
    assert!(admitted.windows(2).all(|w| w[1] <= w[0]), "{admitted:?}");
    assert!(admitted[2] < admitted[0], "{admitted:?}");
}

#[test]
fn no_ac_keeps_every_user() {
    let (s, c) = instance(
        2,
        ScenarioConfig {
            reservation_bps_per_hz: 2.0,
            ..ScenarioConfig::default()
        },
    );
    let run = run_baseline_noac(&s, &c, &RunConfig::default()).unwrap();
    assert!(run.rejected.is_empty());
    assert_eq!(run.admitted.len(), s.num_users());
}

#[test]
fn mismatched_channels_are_refused() {
    let (s, _) = instance(1, ScenarioConfig::default());
    let (_, c) = instance(1, small_config());
    assert!(matches!(
        run_algorithm1(&s, &c, &RunConfig::default()),
        Err(OrchestratorError::ChannelMismatch)
    ));
}
