mod common;

use common::instance;
use common::oracle::{exhaustive_power, tiny};
use tactile_cran::orchestrator::{run_algorithm1, RunConfig};

#[test]
fn algorithm_is_within_a_factor_of_the_exhaustive_optimum() {
    let config = RunConfig::default();
    let mut good = 0;
    let mut report = Vec::new();
    for seed in 0..20u64 {
        let (s, c) = instance(seed, tiny());
        let best = exhaustive_power(&s, &c, 120);
        let run = run_algorithm1(&s, &c, &config).unwrap();
        let feasible = run.rejected.is_empty() && run.feasibility.worst() >= -1e-6;
        let ratio = run.total_power_w / best;
        report.push(format!("seed {seed}: ratio {ratio:.4} feasible {feasible}"));
        if feasible && ratio <= 1.5 {
            good += 1;
        }
    }
    assert!(good >= 18, "{}", report.join("\n"));
}
