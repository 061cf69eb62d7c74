//! Experiment configuration file.
//!
//! ```toml
//! name = "desk"
//! reward = "sum_mse"
//! seeds = [0, 1, 2]
//! jobs = 1
//! max_q_outputs = 10000
//!
//! [solver]
//! gamma = 0.95
//! tol = 1e-8
//!
//! [eval]
//! steps = 10000
//! max_avg_mse = 1e6
//! max_aoi = 10000
//!
//! [[systems]]
//! name = "two_by_one"
//! sensors = 2
//! channels = 1
//! tau_max = 16
//! seed = 3
//!
//! [[agents]]
//! algorithm = "vi"
//!
//! [[agents]]
//! algorithm = "se_dqn"
//! hidden = [64, 64]
//! [agents.stages]
//! loose = 5
//! tight = 10
//! conventional = 15
//! ```
//!
//! A system is either generated (`sensors`, `channels`, `seed` and the
//! optional `drop_prob`, `state_dim`, `meas_dim`, `radius_range`) or given
//! explicitly through `processes` and `channel` tables. Agent tables accept
//! every training setting as an override of the defaults.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{SeDdpgConfig, SeDqnConfig};
use crate::channel::ChannelModel;
use crate::env::{generate_random_system, System, SystemGenSpec};
use crate::error::{Error, Result};
use crate::estimation::{ProcessSpec, RewardKind};
use crate::mdp::{Divergence, SolverOptions};

pub const DEFAULT_MAX_Q_OUTPUTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Vi,
    Dqn,
    SeDqn,
    Ddpg,
    SeDdpg,
    Random,
    GreedyAoi,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Vi,
        Algorithm::Dqn,
        Algorithm::SeDqn,
        Algorithm::Ddpg,
        Algorithm::SeDdpg,
        Algorithm::Random,
        Algorithm::GreedyAoi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Vi => "vi",
            Algorithm::Dqn => "dqn",
            Algorithm::SeDqn => "se_dqn",
            Algorithm::Ddpg => "ddpg",
            Algorithm::SeDdpg => "se_ddpg",
            Algorithm::Random => "random",
            Algorithm::GreedyAoi => "greedy_aoi",
        }
    }

    /// Agents with one network output per enumerated action.
    pub fn enumerates_actions(self) -> bool {
        matches!(self, Algorithm::Dqn | Algorithm::SeDqn)
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentSpec {
    Vi,
    Random,
    GreedyAoi,
    Dqn(SeDqnConfig),
    SeDqn(SeDqnConfig),
    Ddpg(SeDdpgConfig),
    SeDdpg(SeDdpgConfig),
}

impl AgentSpec {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            AgentSpec::Vi => Algorithm::Vi,
            AgentSpec::Random => Algorithm::Random,
            AgentSpec::GreedyAoi => Algorithm::GreedyAoi,
            AgentSpec::Dqn(_) => Algorithm::Dqn,
            AgentSpec::SeDqn(_) => Algorithm::SeDqn,
            AgentSpec::Ddpg(_) => Algorithm::Ddpg,
            AgentSpec::SeDdpg(_) => Algorithm::SeDdpg,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentEntry {
    /// Column label; defaults to the algorithm name.
    pub name: String,
    pub spec: AgentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub name: Option<String>,
    pub sensors: Option<usize>,
    pub channels: Option<usize>,
    #[serde(default = "default_tau_max")]
    pub tau_max: u32,
    #[serde(default)]
    pub seed: u64,
    pub drop_prob: Option<Vec<f64>>,
    pub state_dim: Option<usize>,
    pub meas_dim: Option<usize>,
    pub radius_range: Option<(f64, f64)>,
    pub processes: Option<Vec<ProcessSpec>>,
    pub channel: Option<ChannelModel>,
}

fn default_tau_max() -> u32 {
    16
}

impl SystemBlock {
    pub fn build(&self) -> Result<System> {
        match (&self.processes, &self.channel) {
            (Some(procs), Some(channel)) => {
                let generated = [
                    self.drop_prob.is_some(),
                    self.state_dim.is_some(),
                    self.meas_dim.is_some(),
                    self.radius_range.is_some(),
                ];
                if generated.contains(&true) {
                    return Err(Error::validation(
                        "explicit systems take no generation settings (drop_prob, state_dim, meas_dim, radius_range)",
                    ));
                }
                let processes = procs.iter().map(ProcessSpec::build).collect::<Result<Vec<_>>>()?;
                for (what, given, actual) in [
                    ("sensors", self.sensors, channel.sensors()),
                    ("channels", self.channels, channel.channels()),
                ] {
                    if given.is_some_and(|g| g != actual) {
                        return Err(Error::validation(format!("{what} disagrees with the explicit channel model")));
                    }
                }
                System::new(processes, channel.clone())
            }
            (None, None) => {
                let (Some(n), Some(m)) = (self.sensors, self.channels) else {
                    return Err(Error::validation("generated systems need sensors and channels"));
                };
                if m == 0 || m > n {
                    return Err(Error::validation(format!("need 1 <= channels <= sensors, got {m} > {n}")));
                }
                let mut spec = SystemGenSpec::default();
                if let Some(d) = &self.drop_prob {
                    spec.drop_prob = d.clone();
                }
                if let Some(d) = self.state_dim {
                    spec.state_dim = d;
                }
                if let Some(d) = self.meas_dim {
                    spec.meas_dim = d;
                }
                if let Some(r) = self.radius_range {
                    spec.radius_range = r;
                }
                generate_random_system(n, m, &spec, self.seed)
            }
            _ => Err(Error::validation("explicit systems need both processes and channel")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalBlock {
    pub steps: usize,
    pub max_avg_mse: f64,
    pub max_aoi: u32,
}

impl Default for EvalBlock {
    fn default() -> Self {
        let d = Divergence::default();
        EvalBlock {
            steps: 10_000,
            max_avg_mse: d.max_avg_mse,
            max_aoi: d.max_aoi,
        }
    }
}

impl EvalBlock {
    pub fn divergence(&self) -> Divergence {
        Divergence {
            max_avg_mse: self.max_avg_mse,
            max_aoi: self.max_aoi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverBlock {
            gamma: d.gamma,
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

impl SolverBlock {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            gamma: self.gamma,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    output_dir: Option<PathBuf>,
    reward: Option<RewardKind>,
    seeds: Option<Vec<u64>>,
    jobs: Option<usize>,
    max_q_outputs: Option<usize>,
    #[serde(default)]
    solver: SolverBlock,
    #[serde(default)]
    eval: EvalBlock,
    systems: Vec<SystemBlock>,
    agents: Vec<toml::Table>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    /// Where results go; relative paths resolve against the config file.
    pub output_dir: PathBuf,
    pub reward: RewardKind,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub max_q_outputs: usize,
    pub solver: SolverBlock,
    pub eval: EvalBlock,
    pub systems: Vec<SystemBlock>,
    pub agents: Vec<AgentEntry>,
}

fn parse_agent(index: usize, mut table: toml::Table) -> Result<AgentEntry> {
    let at = |msg: String| Error::validation(format!("agents[{index}]: {msg}"));
    let algorithm = match table.remove("algorithm") {
        Some(toml::Value::String(s)) => Algorithm::parse(&s).ok_or_else(|| {
            let known: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
            at(format!("unknown algorithm {s:?} (expected one of {})", known.join(", ")))
        })?,
        Some(_) => return Err(at("algorithm must be a string".into())),
        None => return Err(at("missing field `algorithm`".into())),
    };
    let name = match table.remove("name") {
        Some(toml::Value::String(s)) if !s.is_empty() => s,
        Some(_) => return Err(at("name must be a non-empty string".into())),
        None => algorithm.name().to_string(),
    };
    let dqn = |t: toml::Table| -> Result<SeDqnConfig> {
        let c: SeDqnConfig = t.try_into().map_err(|e: toml::de::Error| at(e.message().to_string()))?;
        c.validate().map_err(|e| at(e.to_string()))?;
        Ok(c)
    };
    let ddpg = |t: toml::Table| -> Result<SeDdpgConfig> {
        let c: SeDdpgConfig = t.try_into().map_err(|e: toml::de::Error| at(e.message().to_string()))?;
        c.validate().map_err(|e| at(e.to_string()))?;
        Ok(c)
    };
    let plain = |t: &toml::Table| -> Result<()> {
        match t.keys().next() {
            Some(k) => Err(at(format!("{} takes no setting {k:?}", algorithm.name()))),
            None => Ok(()),
        }
    };
    let spec = match algorithm {
        Algorithm::Vi => plain(&table).map(|_| AgentSpec::Vi)?,
        Algorithm::Random => plain(&table).map(|_| AgentSpec::Random)?,
        Algorithm::GreedyAoi => plain(&table).map(|_| AgentSpec::GreedyAoi)?,
        Algorithm::Dqn => AgentSpec::Dqn(dqn(table)?),
        Algorithm::SeDqn => AgentSpec::SeDqn(dqn(table)?),
        Algorithm::Ddpg => AgentSpec::Ddpg(ddpg(table)?),
        Algorithm::SeDdpg => AgentSpec::SeDdpg(ddpg(table)?),
    };
    Ok(AgentEntry { name, spec })
}

fn valid_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::validation(e.to_string()))?;
        let name = raw.name.unwrap_or_else(|| "experiment".into());
        let agents = raw
            .agents
            .into_iter()
            .enumerate()
            .map(|(i, t)| parse_agent(i, t))
            .collect::<Result<Vec<_>>>()?;
        let output_dir = raw.output_dir.unwrap_or_else(|| PathBuf::from("results").join(&name));
        let cfg = ExperimentConfig {
            output_dir: base_dir.join(output_dir),
            name,
            reward: raw.reward.unwrap_or(RewardKind::SumMse),
            seeds: raw.seeds.unwrap_or_else(|| vec![0]),
            jobs: raw.jobs.unwrap_or(1),
            max_q_outputs: raw.max_q_outputs.unwrap_or(DEFAULT_MAX_Q_OUTPUTS),
            solver: raw.solver,
            eval: raw.eval,
            systems: raw.systems,
            agents,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Validation(message) => Error::Config {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::validation("at least one agent is required"));
        }
        if self.systems.is_empty() {
            return Err(Error::validation("at least one system is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds must not be empty"));
        }
        if self.jobs == 0 {
            return Err(Error::validation("jobs must be positive"));
        }
        if self.eval.steps == 0 {
            return Err(Error::validation("eval.steps must be positive"));
        }
        self.solver.options().validate()?;
        let mut names = BTreeSet::new();
        for a in &self.agents {
            if !valid_label(&a.name) {
                return Err(Error::validation(format!("agent name {:?} must be alphanumeric, '_' or '-'", a.name)));
            }
            if !names.insert(&a.name) {
                return Err(Error::validation(format!("duplicate agent name {:?}", a.name)));
            }
        }
        let mut names = BTreeSet::new();
        for (i, _) in self.systems.iter().enumerate() {
            let label = self.system_name(i);
            if !valid_label(&label) {
                return Err(Error::validation(format!("system name {label:?} must be alphanumeric, '_' or '-'")));
            }
            if !names.insert(label.clone()) {
                return Err(Error::validation(format!("duplicate system name {label:?}")));
            }
        }
        let seeds: BTreeSet<_> = self.seeds.iter().collect();
        if seeds.len() != self.seeds.len() {
            return Err(Error::validation("seeds must be distinct"));
        }
        Ok(())
    }

    pub fn system_name(&self, index: usize) -> String {
        self.systems[index].name.clone().unwrap_or_else(|| format!("system{index}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
name = "t"
seeds = [1, 2]
[[systems]]
sensors = 2
channels = 1
[[agents]]
algorithm = "vi"
[[agents]]
algorithm = "se_dqn"
name = "se"
lr = 0.001
[agents.stages]
loose = 1
tight = 1
conventional = 1
"#;

    #[test]
    fn parses_defaults_and_overrides() {
        let c = ExperimentConfig::from_toml(BASIC, Path::new("/tmp/x")).unwrap();
        assert_eq!(c.output_dir, PathBuf::from("/tmp/x/results/t"));
        assert_eq!(c.eval.steps, 10_000);
        assert_eq!(c.eval.max_avg_mse, 1e6);
        assert_eq!(c.system_name(0), "system0");
        assert_eq!(c.agents[0].spec, AgentSpec::Vi);
        let AgentSpec::SeDqn(d) = &c.agents[1].spec else { panic!() };
        assert_eq!(d.lr, 0.001);
        assert_eq!(d.common.stages.total(), 3);
        assert_eq!(d.common.batch_size, 128);
        assert_eq!(c.systems[0].build().unwrap().sensors(), 2);
    }

    #[test]
    fn unknown_algorithm_names_the_field() {
        let text = BASIC.replace("algorithm = \"vi\"", "algorithm = \"ppo\"");
        let err = ExperimentConfig::from_toml(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("agents[0]") && err.contains("ppo"), "{err}");
    }

    #[test]
    fn rejects_bad_settings() {
        let text = BASIC.replace("lr = 0.001", "learning_rate = 0.001");
        let err = ExperimentConfig::from_toml(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("learning_rate"), "{err}");
        let text = BASIC.replace("algorithm = \"vi\"", "algorithm = \"vi\"\nlr = 1.0");
        assert!(ExperimentConfig::from_toml(&text, Path::new(".")).is_err());
        let text = BASIC.replace("seeds = [1, 2]", "seeds = [1, 1]");
        assert!(ExperimentConfig::from_toml(&text, Path::new(".")).is_err());
        let text = BASIC.replace("channels = 1", "channels = 3");
        let c = ExperimentConfig::from_toml(&text, Path::new(".")).unwrap();
        assert!(c.systems[0].build().is_err());
        let text = format!("bogus = 1\n{BASIC}");
        let err = ExperimentConfig::from_toml(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn explicit_system() {
        let text = r#"
[[systems]]
name = "explicit"
[[systems.processes]]
a = [[1.2]]
c = [[1.0]]
w = [[1.0]]
v = [[1.0]]
[[systems.processes]]
a = [[1.1]]
c = [[1.0]]
w = [[1.0]]
v = [[1.0]]
[systems.channel]
sensors = 2
channels = 1
drop_prob = [0.3, 0.1]
dist = [[0.5, 0.5], [0.2, 0.8]]
[[agents]]
algorithm = "random"
"#;
        let c = ExperimentConfig::from_toml(text, Path::new(".")).unwrap();
        let sys = c.systems[0].build().unwrap();
        assert_eq!(sys.channels(), 1);
        assert_eq!(sys.channel.levels(), 2);
    }
}
