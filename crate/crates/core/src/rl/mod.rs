//! Deep Q-learning of the graph scorer from episodic rollouts.

mod replay;
mod train;

pub use replay::{Experience, ReplayBuffer};
pub use train::{
    dqn_update, epsilon_at, fit_norm_suite, greedy_rollout, rollout_episode, td_grads, td_target,
    train, EpisodeRecord, RolloutOutcome, TrainConfig, TrainLog,
};
