use std::sync::Arc;

use sesched::agents::{train_se_ddpg, train_se_dqn, SeDdpgConfig, SeDqnConfig, StageLengths};
use sesched::env::{generate_random_system, EnvConfig, Environment, System, SystemGenSpec};
use sesched::estimation::{ProcessSpec, RewardKind};
use sesched::mdp::{
    evaluate_policy, read_solution_csv, solve, write_solution_csv, SolutionMeta, SolverOptions, TabularPolicy,
};
use sesched::structure::run_applicable_checks;

fn system(seed: u64) -> Arc<System> {
    Arc::new(generate_random_system(2, 1, &SystemGenSpec::default(), seed).unwrap())
}

#[test]
fn solution_survives_disk_and_rechecks_identically() {
    let sys = system(5);
    let opts = SolverOptions::default();
    let sol = solve(&sys, 8, RewardKind::SumMse, &opts).unwrap();
    let meta = SolutionMeta {
        sensors: 2,
        channels: 1,
        tau_max: 8,
        reward: RewardKind::SumMse,
        gamma: opts.gamma,
        tol: sol.values.tol,
        tie_tol: sol.tie_tol,
        residual: sol.values.residual,
        iterations: sol.values.iterations,
        channel: sys.channel.clone(),
        processes: sys.processes.iter().map(ProcessSpec::from).collect(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    write_solution_csv(&path, &meta, &sol.values.values, &sol.policy).unwrap();
    let back = read_solution_csv(&path).unwrap();

    assert_eq!(back.values, sol.values.values);
    assert_eq!(back.policy.actions(), sol.policy.actions());
    let space = back.meta.space().unwrap();
    assert_eq!(space.len(), sol.space.len());

    let slack = 10.0 * sol.values.tol;
    let before = run_applicable_checks(&sol.values.values, &sol.policy, &sol.space, &sys.channel, slack).unwrap();
    let after = run_applicable_checks(&back.values, &back.policy, &space, &back.meta.channel, slack).unwrap();
    assert_eq!(before.len(), after.len());
    for (a, b) in before.iter().zip(&after) {
        assert_eq!(a.to_string(), b.to_string());
    }
}

#[test]
fn optimal_policy_beats_round_robin() {
    let sys = system(9);
    let sol = solve(&sys, 16, RewardKind::SumMse, &SolverOptions::default()).unwrap();
    let tab = TabularPolicy::new(sol.space.clone(), sol.actions.clone(), sol.policy.clone()).unwrap();
    let mut env = Environment::new(sys.clone(), EnvConfig::default(), 11).unwrap();
    let vi = evaluate_policy(&mut env, |s| tab.action(s), 5000).unwrap();

    let mut env = Environment::new(sys.clone(), EnvConfig::default(), 11).unwrap();
    let mut t = 0usize;
    let rr = evaluate_policy(
        &mut env,
        |_| {
            t += 1;
            let mut a = vec![0; 2];
            a[t % 2] = 1;
            Ok(sesched::channel::ScheduleAction(a))
        },
        5000,
    )
    .unwrap();
    assert!(!vi.diverged);
    assert!(vi.avg_mse <= rr.avg_mse, "VI {} vs round robin {}", vi.avg_mse, rr.avg_mse);
}

fn small_stages() -> StageLengths {
    StageLengths {
        loose: 1,
        tight: 1,
        conventional: 1,
    }
}

#[test]
fn dqn_training_is_reproducible_per_seed() {
    let mut cfg = SeDqnConfig::default();
    cfg.common.stages = small_stages();
    cfg.common.steps_per_episode = 60;
    cfg.common.batch_size = 16;
    cfg.common.hidden = vec![16];
    let a = train_se_dqn(system(1), &cfg, 4).unwrap().report;
    let b = train_se_dqn(system(1), &cfg, 4).unwrap().report;
    let c = train_se_dqn(system(1), &cfg, 5).unwrap().report;
    assert_eq!(a.metrics, b.metrics);
    assert_ne!(a.metrics, c.metrics);
    assert_eq!(a.metrics.len(), 3);
    assert_eq!(a.counters.checked_actions, 180);
}

#[test]
fn ddpg_training_is_reproducible_per_seed() {
    let mut cfg = SeDdpgConfig::default();
    cfg.common.stages = small_stages();
    cfg.common.steps_per_episode = 60;
    cfg.common.batch_size = 16;
    cfg.common.hidden = vec![16];
    let a = train_se_ddpg(system(2), &cfg, 4).unwrap().report;
    let b = train_se_ddpg(system(2), &cfg, 4).unwrap().report;
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.counters.checked_actions, 180);
}
