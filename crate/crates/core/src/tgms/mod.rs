//! Adaptive measurement selection: a permutation-equivariant encoder over the
//! measurement family, a history decoder, masked sampling and sliding-window training.

mod env;
mod episode;
mod policy;
mod train;

pub use env::{EpisodeEnv, FisherEnv, PredictorEnv};
pub use episode::{
    argmax, entropy, run_episode, sample_index, sample_without_replacement, sequence_probabilities, state_acquirer, Mode,
    Step, Summary, Trajectory,
};
pub use policy::{selection_from_scores, PolicyConfig, PolicyModel, Prepared, POLICY_FORMAT};
pub use train::{
    collect_batch, surrogate, train_selector, validation_loss, BranchStep, EpisodeBatch, EpisodeSample, LossMode,
    SelectorEpochLog, SelectorTrainConfig, SurrogateOutput, Window,
};
