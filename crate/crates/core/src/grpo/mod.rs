//! Toy-scale GRPO for a grid grounding policy.
//!
//! The policy picks one of `G²` screen cells and clicks its centre. Each
//! input gets `N` sampled clicks; a click earns 1 when it lands inside the
//! target box. Rewards are Z-scored within the group and the policy
//! follows the clipped importance-ratio surrogate. No KL term is used.

pub mod gradcheck;
pub mod objective;
pub mod policy;
pub mod trainer;

use thiserror::Error;

pub use gradcheck::{finite_diff_check, GradCheckReport, RolloutFixture};
pub use objective::{click_reward, group_loss_and_grad, normalize_advantages, surrogate_term, Group};
pub use policy::{sample_responses, GridPolicy, Sample};
pub use trainer::{
    greedy_accuracy, load_training_fixture, moving_average, train, train_from, Checkpoint, IterationMetrics, Optimizer,
    TrainConfig, TrainExample, TrainOutcome,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("{what} has length {got}, expected {expected}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Diverged { iteration: usize, loss: f64 },
    #[error("bad fixture: {0}")]
    Fixture(String),
    #[error("{0}")]
    Io(String),
}
