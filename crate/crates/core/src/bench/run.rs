use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AgentEntry, AgentSpec, Algorithm, EvalBlock, ExperimentConfig};
use crate::agents::{random_action, train_ddpg, train_dqn, train_se_ddpg, train_se_dqn, write_metrics_csv};
use crate::channel::{ScheduleAction, SysState};
use crate::env::{EnvConfig, Environment, System};
use crate::error::{Error, Result};
use crate::estimation::{ProcessSpec, RewardKind};
use crate::mdp::{
    action_count, evaluate_policy_with, write_solution_csv, EvalResult, SolutionMeta, Solution, TabularPolicy,
};
use crate::structure::{run_applicable_checks, write_reports_csv, ViolationReport};

/// Offset between training and evaluation streams of the same seed.
const EVAL_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Evaluation outcome of one agent on one system under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub system: String,
    pub seed: u64,
    pub agent: String,
    pub algorithm: Algorithm,
    pub avg_sum_mse: Option<f64>,
    pub avg_sum_aoi: Option<f64>,
    pub diverged: bool,
    /// Why the cell has no number (divergence criterion, rejection or error).
    pub note: Option<String>,
    /// Per-step evaluation log, relative to the results directory.
    pub eval_log: Option<String>,
    pub metrics: Option<String>,
}

impl EvalRecord {
    pub fn converged(&self) -> bool {
        self.avg_sum_mse.is_some() && !self.diverged
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureRecord {
    pub system: String,
    pub check: String,
    pub passed: bool,
    pub violations: usize,
    pub checked_pairs: usize,
    pub tie_excluded: usize,
    pub skipped: usize,
    pub asymptotic: bool,
}

impl StructureRecord {
    fn new(system: &str, r: &ViolationReport) -> Self {
        StructureRecord {
            system: system.to_string(),
            check: r.kind.name().to_string(),
            passed: r.passed(),
            violations: r.violations(),
            checked_pairs: r.checked_pairs,
            tie_excluded: r.tie_excluded,
            skipped: r.skipped,
            asymptotic: r.asymptotic,
        }
    }
}

/// Machine-readable record of a finished experiment (`summary.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub reward: RewardKind,
    pub eval: EvalBlock,
    pub systems: Vec<String>,
    pub seeds: Vec<u64>,
    pub agents: Vec<String>,
    pub results: Vec<EvalRecord>,
    pub structure: Vec<StructureRecord>,
}

impl Summary {
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join("summary.json") } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config {
            path: file,
            message: e.to_string(),
        })
    }
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub summary: Summary,
}

/// Solved instance plus its structure reports.
#[derive(Debug)]
pub struct SolvedSystem {
    pub name: String,
    pub solution: Solution,
    pub reports: Vec<ViolationReport>,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::validation(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn system_json(system: &System) -> serde_json::Value {
    serde_json::json!({
        "processes": system.processes.iter().map(ProcessSpec::from).collect::<Vec<_>>(),
        "channel": system.channel,
    })
}

/// Solves one system by value iteration, writes `solutions/<name>.csv` (plus
/// sidecar) and `structure/<name>.csv`.
pub fn solve_system(name: &str, system: &System, tau_max: u32, cfg: &ExperimentConfig, out: &Path) -> Result<SolvedSystem> {
    let opts = cfg.solver.options();
    let solution = crate::mdp::solve(system, tau_max, cfg.reward, &opts)?;
    let slack = 10.0 * solution.values.tol;
    let reports = run_applicable_checks(
        &solution.values.values,
        &solution.policy,
        &solution.space,
        &system.channel,
        slack,
    )?;
    let meta = SolutionMeta {
        sensors: system.sensors(),
        channels: system.channels(),
        tau_max,
        reward: cfg.reward,
        gamma: opts.gamma,
        tol: solution.values.tol,
        tie_tol: solution.tie_tol,
        residual: solution.values.residual,
        iterations: solution.values.iterations,
        channel: system.channel.clone(),
        processes: system.processes.iter().map(ProcessSpec::from).collect(),
    };
    create_dir(&out.join("solutions"))?;
    create_dir(&out.join("structure"))?;
    write_solution_csv(&out.join("solutions").join(format!("{name}.csv")), &meta, &solution.values.values, &solution.policy)?;
    write_reports_csv(&out.join("structure").join(format!("{name}.csv")), &reports)?;
    Ok(SolvedSystem {
        name: name.to_string(),
        solution,
        reports,
    })
}

/// Schedules the `M` oldest sensors, each on its best remaining channel.
pub fn greedy_aoi_action(state: &SysState, channels: usize) -> ScheduleAction {
    let n = state.tau.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| state.tau[b].cmp(&state.tau[a]));
    let mut a = vec![0u8; n];
    let mut free: Vec<u8> = (1..=channels as u8).collect();
    for &s in order.iter().take(channels) {
        let (pos, _) = free
            .iter()
            .enumerate()
            .max_by(|(_, &x), (_, &y)| {
                state
                    .level(s, x as usize - 1)
                    .cmp(&state.level(s, y as usize - 1))
                    .then(y.cmp(&x))
            })
            .expect("a free channel per scheduled sensor");
        a[s] = free.remove(pos);
    }
    ScheduleAction(a)
}

fn write_eval_log(path: &Path, res: &EvalResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "sum_mse", "sum_aoi"])?;
    for (i, (m, a)) in res.mse_trace.iter().zip(&res.aoi_trace).enumerate() {
        w.write_record([i.to_string(), m.to_string(), a.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Job<'a> {
    system_name: &'a str,
    system: &'a Arc<System>,
    solved: Option<&'a std::result::Result<SolvedSystem, String>>,
    seed: u64,
    agent: &'a AgentEntry,
}

fn run_job(job: &Job<'_>, cfg: &ExperimentConfig, out: &Path) -> EvalRecord {
    let stem = format!("{}__{}__seed{}", job.system_name, job.agent.name, job.seed);
    let mut record = EvalRecord {
        system: job.system_name.to_string(),
        seed: job.seed,
        agent: job.agent.name.clone(),
        algorithm: job.agent.spec.algorithm(),
        avg_sum_mse: None,
        avg_sum_aoi: None,
        diverged: false,
        note: None,
        eval_log: None,
        metrics: None,
    };
    match evaluate_job(job, cfg, out, &stem, &mut record) {
        Ok(()) => {}
        Err(Error::Diverged(msg)) => {
            record.diverged = true;
            record.note = Some(format!("training diverged: {msg}"));
        }
        Err(e) => record.note = Some(format!("failed: {e}")),
    }
    record
}

fn evaluate_job(job: &Job<'_>, cfg: &ExperimentConfig, out: &Path, stem: &str, record: &mut EvalRecord) -> Result<()> {
    let system = job.system;
    let (n, m) = (system.sensors(), system.channels());
    if job.agent.spec.algorithm().enumerates_actions() {
        let count = action_count(n, m).unwrap_or(usize::MAX);
        if count > cfg.max_q_outputs {
            record.note = Some(format!(
                "rejected: {count} actions exceed the output cap of {}",
                cfg.max_q_outputs
            ));
            return Ok(());
        }
    }
    let metrics_path = |rel: &mut Option<String>| {
        let r = format!("metrics/{stem}.csv");
        *rel = Some(r.clone());
        out.join(r)
    };
    let seed = job.seed;
    let env_cfg = EnvConfig {
        reward: cfg.reward,
        tau_cap: None,
        init_tau: None,
    };
    let mut env = Environment::new(system.clone(), env_cfg, seed ^ EVAL_STREAM)?;
    let steps = cfg.eval.steps;
    let limits = &cfg.eval.divergence();
    let result = match &job.agent.spec {
        AgentSpec::Vi => {
            let solved = job
                .solved
                .ok_or_else(|| Error::validation("value iteration was not run"))?
                .as_ref()
                .map_err(|e| Error::validation(format!("value iteration failed: {e}")))?;
            let sol = &solved.solution;
            let tab = TabularPolicy::new(sol.space.clone(), sol.actions.clone(), sol.policy.clone())?;
            evaluate_policy_with(&mut env, |s| tab.action(s), steps, limits)?
        }
        AgentSpec::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            evaluate_policy_with(&mut env, |_| Ok(random_action(n, m, &mut rng)), steps, limits)?
        }
        AgentSpec::GreedyAoi => evaluate_policy_with(&mut env, |s| Ok(greedy_aoi_action(s, m)), steps, limits)?,
        AgentSpec::Dqn(c) | AgentSpec::SeDqn(c) => {
            let mut c = c.clone();
            c.common.reward = cfg.reward;
            let trained = if matches!(job.agent.spec, AgentSpec::Dqn(_)) {
                train_dqn(system.clone(), &c, seed)?
            } else {
                train_se_dqn(system.clone(), &c, seed)?
            };
            write_metrics_csv(&metrics_path(&mut record.metrics), &trained.report.metrics)?;
            evaluate_policy_with(&mut env, |s| trained.policy.action(s), steps, limits)?
        }
        AgentSpec::Ddpg(c) | AgentSpec::SeDdpg(c) => {
            let mut c = c.clone();
            c.common.reward = cfg.reward;
            let trained = if matches!(job.agent.spec, AgentSpec::Ddpg(_)) {
                train_ddpg(system.clone(), &c, seed)?
            } else {
                train_se_ddpg(system.clone(), &c, seed)?
            };
            write_metrics_csv(&metrics_path(&mut record.metrics), &trained.report.metrics)?;
            evaluate_policy_with(&mut env, |s| trained.policy.action(s), steps, limits)?
        }
    };
    let rel = format!("eval/{stem}.csv");
    write_eval_log(&out.join(&rel), &result)?;
    record.eval_log = Some(rel);
    record.avg_sum_mse = Some(result.avg_mse);
    record.avg_sum_aoi = Some(result.avg_aoi);
    if result.diverged {
        record.diverged = true;
        let limits = cfg.eval.divergence();
        record.note = Some(if result.mse_trace.len() < steps {
            format!(
                "diverged: AoI above {} or non-finite MSE after {} steps",
                limits.max_aoi,
                result.mse_trace.len()
            )
        } else {
            format!(
                "diverged: average sum MSE {} above {}",
                crate::fmt::sig6(result.avg_mse),
                crate::fmt::sig6(limits.max_avg_mse)
            )
        });
    }
    Ok(())
}

fn build_systems(cfg: &ExperimentConfig) -> Result<Vec<(String, Arc<System>)>> {
    cfg.systems
        .iter()
        .enumerate()
        .map(|(i, block)| {
            let name = cfg.system_name(i);
            let sys = block
                .build()
                .map_err(|e| Error::validation(format!("system {name:?}: {e}")))?;
            Ok((name, Arc::new(sys)))
        })
        .collect()
}

/// Solves every system of the config and writes solutions and structure
/// reports below `out`.
pub fn solve_all(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SolvedSystem>> {
    create_dir(out)?;
    build_systems(cfg)?
        .iter()
        .zip(&cfg.systems)
        .map(|((name, sys), block)| solve_system(name, sys, block.tau_max, cfg, out))
        .collect()
}

/// Runs every (system, seed, agent) combination of `cfg` and writes all
/// artifacts below `out`.
pub fn run_experiment_config(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutput> {
    cfg.validate()?;
    for sub in ["", "systems", "metrics", "eval"] {
        create_dir(&out.join(sub))?;
    }
    let systems = build_systems(cfg)?;
    for (name, sys) in &systems {
        write_json(&out.join("systems").join(format!("{name}.json")), &system_json(sys))?;
    }
    let wants_vi = cfg.agents.iter().any(|a| a.spec == AgentSpec::Vi);
    let solved: Vec<Option<std::result::Result<SolvedSystem, String>>> = systems
        .iter()
        .zip(&cfg.systems)
        .map(|((name, sys), block)| {
            wants_vi.then(|| solve_system(name, sys, block.tau_max, cfg, out).map_err(|e| e.to_string()))
        })
        .collect();
    let mut jobs = Vec::new();
    for (si, (name, sys)) in systems.iter().enumerate() {
        for &seed in &cfg.seeds {
            for agent in &cfg.agents {
                jobs.push(Job {
                    system_name: name,
                    system: sys,
                    solved: solved[si].as_ref(),
                    seed,
                    agent,
                });
            }
        }
    }
    let results = run_jobs(&jobs, cfg, out);
    let mut structure = Vec::new();
    for s in solved.iter().flatten().flatten() {
        structure.extend(s.reports.iter().map(|r| StructureRecord::new(&s.name, r)));
    }
    let summary = Summary {
        name: cfg.name.clone(),
        reward: cfg.reward,
        eval: cfg.eval.clone(),
        systems: systems.iter().map(|(n, _)| n.clone()).collect(),
        seeds: cfg.seeds.clone(),
        agents: cfg.agents.iter().map(|a| a.name.clone()).collect(),
        results,
        structure,
    };
    write_json(&out.join("summary.json"), &summary)?;
    let table = super::table::compare_table(std::slice::from_ref(&summary))?;
    table.write_csv(&out.join("comparison.csv"))?;
    Ok(ExperimentOutput {
        dir: out.to_path_buf(),
        summary,
    })
}

fn run_jobs(jobs: &[Job<'_>], cfg: &ExperimentConfig, out: &Path) -> Vec<EvalRecord> {
    let workers = cfg.jobs.min(jobs.len()).max(1);
    if workers == 1 {
        return jobs.iter().map(|j| run_job(j, cfg, out)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<EvalRecord>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let rec = run_job(job, cfg, out);
                slots.lock().expect("result slots")[i] = Some(rec);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Loads `config_path`, runs it and returns the results directory.
pub fn run_experiment(config_path: &Path) -> Result<ExperimentOutput> {
    let cfg = ExperimentConfig::load(config_path)?;
    let out = cfg.output_dir.clone();
    run_experiment_config(&cfg, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_aoi_picks_oldest_on_best_links() {
        // sensors 2 and 0 are oldest; sensor 2 takes its best channel 1 first
        let s = SysState::new(vec![5, 1, 7], vec![2, 3, 1, 1, 4, 2]);
        assert_eq!(greedy_aoi_action(&s, 2), ScheduleAction(vec![2, 0, 1]));
        let s = SysState::new(vec![3, 3], vec![2, 2]);
        assert_eq!(greedy_aoi_action(&s, 1), ScheduleAction(vec![1, 0]));
        // equal levels go to the lower channel index
        let s = SysState::new(vec![1, 2], vec![1, 1, 3, 3]);
        assert_eq!(greedy_aoi_action(&s, 2), ScheduleAction(vec![2, 1]));
    }
}
