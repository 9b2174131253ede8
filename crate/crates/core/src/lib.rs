//! Desk-scale reinforcement learning for tag-formatted reasoning policies.
//!
//! The crate implements a complete, exactly-differentiable GRPO training
//! engine around a tabular softmax policy, the staged output-length schedule
//! that suppresses early overthinking, verifiable tag/answer reward
//! functions, synthetic reasoning environments, and the modality-bridging
//! data pipeline that builds cold-start chain-of-thought datasets from
//! recorded (or live) chat-completions backends.
//!
//! ## Start with the examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --release -p thinkrl --example reward_functions       # tag parsing + rewards
//! cargo run --release -p thinkrl --example gradient_check         # objective vs finite differences
//! cargo run --release -p thinkrl --example zero_training          # RL from a primed uniform policy
//! cargo run --release -p thinkrl --example ptst_training          # staged length-cap schedule
//! cargo run --release -p thinkrl --example overthinking_dynamics  # staged vs fixed-long comparison
//! cargo run --release -p thinkrl --example cot_pipeline           # modality-bridging data pipeline
//! cargo run --release -p thinkrl --example marker_stats           # self-reflection marker counts
//! ```
//!
//! ## Module map
//!
//! - [`reward`]: the `<think>…</think><answer>…</answer>` grammar, parse
//!   violations as values, and the soft/hard composite rewards.
//! - [`policy`]: the tabular Markov softmax policy with exact sequence
//!   log-probabilities and gradients, plus checkpoint IO and the cold-start
//!   and format-primed initializers.
//! - [`mod@env`]: ARITH and ORACLE question sources and the length-profile
//!   correctness oracle.
//! - [`grpo`]: advantages, clipped surrogate, KL penalty, analytic objective
//!   gradient, and the trainer.
//! - [`ptst`]: stage schedules, the question source, and the run driver.
//! - [`pipeline`]: pseudo-draft/description/reasoning generation against
//!   replay or remote backends, filtering, rewrites, dataset assembly, and
//!   marker statistics.
//! - [`config`] / [`mod@run`]: the declarative run file and the mode drivers
//!   the CLI calls into.
//!
//! Determinism is a contract throughout: every random draw comes from a
//! stream keyed by what the draw is for, so a (config, seed) pair reproduces
//! every artifact byte for byte at any worker count.

pub mod config;
pub mod env;
pub mod grpo;
pub mod pipeline;
pub mod policy;
pub mod ptst;
pub mod reward;
pub mod rngs;
pub mod run;
mod util;
pub mod vocab;

pub use config::{ArtifactHeader, Mode, RunConfig};
pub use env::{gen_questions, oracle_correct, question_pool, think_length, EnvSpec, OracleProfile, Question};
pub use grpo::{
    clipped_term, compute_advantages, group_objective, importance_ratio, kl_value,
    objective_gradient, GrpoHyperParams, Rollout, RolloutGroup, StepMetrics, Trainer,
};
pub use policy::{cold_start, format_primed, ColdStartStyle, TabularPolicy};
pub use ptst::{
    default_schedule, default_schedule_with_third, run_ptst, zero_schedule, QuestionSource,
    Schedule, StageConfig,
};
pub use reward::{
    format_reward, parse_tagged, result_reward, reward_hfrrf, reward_zero, AnswerMatchRule,
    FormatViolation, RewardMode, RewardSpec, TaggedOutput,
};
pub use run::{
    dynamics_experiment, evaluate_accuracy, measure_format_fraction, run, RunError, RunOutcome,
    SYSTEM_PROMPT,
};
pub use vocab::{TokenId, Vocabulary};
