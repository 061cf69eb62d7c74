//! Structure-enhanced DQN and DDPG agents with their vanilla baselines.

mod config;
mod ddpg;
mod dqn;
mod features;
mod metrics;
mod select;
mod trainer;
mod virtual_action;

pub use features::Featurizer;
pub use select::{
    epsilon_greedy_action, fill_channels, loose_se_action, random_action, tight_se_action, ActionOracle,
    SelectionOutcome, SelectionParams, Stage,
};
pub use virtual_action::{encode_action, map_virtual_action};
pub use config::{DecaySchedule, SeDdpgConfig, SeDqnConfig, StageLengths, TrainingConfig};
pub use metrics::{
    read_metrics_csv, write_metrics, write_metrics_csv, EpisodeMetrics, RunCounters, TrainingReport, METRICS_HEADER,
};
pub use dqn::{se_dqn_loss, se_transition_loss, train_dqn, train_se_dqn, DqnOutcome, DqnTransition, QPolicy};
pub use trainer::default_reward_scale;
pub use ddpg::{
    actor_ascent_direction, se_ddpg_actor_loss, se_ddpg_critic_loss, train_ddpg, train_se_ddpg, ActorPolicy, DdpgOutcome,
    DdpgTransition,
};
