//! Group Relative Policy Optimization.
//!
//! For each question a group of G rollouts is sampled from the frozen
//! old policy, their rewards are standardized within the group into
//! advantages, and the policy maximizes
//!
//! ```text
//! J = (1/G) sum_i min(ratio_i * A_i, clip(ratio_i, 1-eps, 1+eps) * A_i)
//!     - beta * (1/G) sum_i [ ref_ratio_i - log(ref_ratio_i) - 1 ]
//! ```
//!
//! with sequence-level ratios `ratio_i = pi_theta(o_i|q) / pi_old(o_i|q)` and
//! `ref_ratio_i = pi_ref(o_i|q) / pi_theta(o_i|q)`. There is no value critic:
//! the group mean is the baseline. Gradients are exact (the tabular policy
//! supplies analytic `grad log pi`), with the min-branch subgradient at clip
//! kinks and ties broken toward the unclipped branch.
//!
//! Ratios are computed in log space and the log ratio is clamped before
//! exponentiation; inside the clamped region the contribution is treated as
//! constant.

use crate::env::{judge_result, think_length, EnvSpec, Question, RolloutId};
use crate::policy::{PolicyError, TabularPolicy};
use crate::ptst::StageConfig;
use crate::reward::{parse_tagged, RewardMode, RewardSpec};
use crate::rngs::{domain, stream};
use crate::vocab::{TokenId, Vocabulary};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum GrpoError {
    #[error("rollout group must contain at least 2 rollouts, got {size}")]
    GroupTooSmall { size: usize },
    #[error("training batch must contain at least one question")]
    EmptyBatch,
    #[error("non-finite intermediate in {context}")]
    NonFinite { context: String },
    #[error("invalid hyperparameters: {0}")]
    BadHyperParams(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// GRPO hyperparameters. Defaults: eps = 0.2, beta = 1e-2, one inner update
/// per sampled batch, plain gradient ascent at a constant learning rate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrpoHyperParams {
    #[serde(default = "defaults::clip_epsilon")]
    pub clip_epsilon: f64,
    #[serde(default = "defaults::kl_beta")]
    pub kl_beta: f64,
    #[serde(default = "defaults::inner_updates")]
    pub inner_updates: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::ratio_log_clamp")]
    pub ratio_log_clamp: f64,
}

mod defaults {
    pub fn clip_epsilon() -> f64 {
        0.2
    }
    pub fn kl_beta() -> f64 {
        1e-2
    }
    pub fn inner_updates() -> usize {
        1
    }
    // Tabular logits take nat-scale steps; group-normalized advantages keep
    // coefficients O(1/G), so this is a modest per-row step size.
    pub fn learning_rate() -> f64 {
        1.0
    }
    pub fn ratio_log_clamp() -> f64 {
        20.0
    }
}

impl Default for GrpoHyperParams {
    fn default() -> Self {
        Self {
            clip_epsilon: defaults::clip_epsilon(),
            kl_beta: defaults::kl_beta(),
            inner_updates: defaults::inner_updates(),
            learning_rate: defaults::learning_rate(),
            ratio_log_clamp: defaults::ratio_log_clamp(),
        }
    }
}

impl GrpoHyperParams {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |msg: &str| Err(GrpoError::BadHyperParams(msg.to_string()));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if self.kl_beta < 0.0 {
            return bad("kl_beta must be non-negative");
        }
        if self.inner_updates == 0 {
            return bad("inner_updates must be positive");
        }
        if self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if self.ratio_log_clamp <= 0.0 {
            return bad("ratio_log_clamp must be positive");
        }
        Ok(())
    }
}

/// One sampled output sequence with its reward and cached log-probabilities
/// under the old and reference policies.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub reward: f64,
    pub logp_old: f64,
    pub logp_ref: f64,
    /// Think length in tokens, when the output parsed.
    pub think_len: Option<usize>,
}

/// The G rollouts for one question plus their normalized advantages.
#[derive(Clone, Debug)]
pub struct RolloutGroup {
    pub question: Question,
    pub rollouts: Vec<Rollout>,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    pub fn new(question: Question, rollouts: Vec<Rollout>) -> Result<Self, GrpoError> {
        let rewards: Vec<f64> = rollouts.iter().map(|r| r.reward).collect();
        let advantages = compute_advantages(&rewards)?;
        Ok(Self {
            question,
            rollouts,
            advantages,
        })
    }
}

const SIGMA_FLOOR: f64 = 1e-8;

/// Standardize rewards within a group: `A_i = (r_i - mean) / pop_std`. A
/// group whose rewards are all equal carries no preference signal and yields
/// exactly zero advantages; otherwise the standard deviation is floored at
/// 1e-8 to guard near-degenerate groups.
pub fn compute_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    let g = rewards.len();
    if g < 2 {
        return Err(GrpoError::GroupTooSmall { size: g });
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; g]);
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|&r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    let std = var.sqrt().max(SIGMA_FLOOR);
    Ok(rewards.iter().map(|&r| (r - mean) / std).collect())
}

/// Per-rollout KL penalty term `ratio - log(ratio) - 1` with
/// `ratio = pi_ref / pi_theta`, computed in log space. Non-negative for all
/// finite inputs and zero exactly when the log-probabilities agree.
pub fn kl_value(logp_theta: f64, logp_ref: f64, ratio_log_clamp: f64) -> f64 {
    let d = (logp_ref - logp_theta).clamp(-ratio_log_clamp, ratio_log_clamp);
    // exp_m1 keeps the small-|d| regime accurate: e^d - 1 - d >= 0.
    (d.exp_m1() - d).max(0.0)
}

/// Sequence-level importance ratio `pi_theta / pi_old`, clamped in log space.
pub fn importance_ratio(logp_theta: f64, logp_old: f64, ratio_log_clamp: f64) -> f64 {
    (logp_theta - logp_old)
        .clamp(-ratio_log_clamp, ratio_log_clamp)
        .exp()
}

/// The clipped surrogate for one rollout:
/// `min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)`.
pub fn clipped_term(ratio: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Objective value and mean KL for one group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupEval {
    pub objective: f64,
    pub mean_kl: f64,
}

fn rollout_eval(
    group: &RolloutGroup,
    policy: &TabularPolicy,
    hp: &GrpoHyperParams,
    mut per_rollout: impl FnMut(usize, f64, &Rollout) -> Result<(), GrpoError>,
) -> Result<GroupEval, GrpoError> {
    let g = group.rollouts.len();
    if g < 2 {
        return Err(GrpoError::GroupTooSmall { size: g });
    }
    let mut surrogate_sum = 0.0;
    let mut kl_sum = 0.0;
    for (i, rollout) in group.rollouts.iter().enumerate() {
        let logp_theta = policy.seq_logprob(group.question.key, &rollout.tokens)?;
        per_rollout(i, logp_theta, rollout)?;
        let ratio = importance_ratio(logp_theta, rollout.logp_old, hp.ratio_log_clamp);
        surrogate_sum += clipped_term(ratio, group.advantages[i], hp.clip_epsilon);
        kl_sum += kl_value(logp_theta, rollout.logp_ref, hp.ratio_log_clamp);
    }
    let objective = surrogate_sum / g as f64 - hp.kl_beta * kl_sum / g as f64;
    let mean_kl = kl_sum / g as f64;
    if !objective.is_finite() || !mean_kl.is_finite() {
        return Err(GrpoError::NonFinite {
            context: format!("group objective for question key {}", group.question.key),
        });
    }
    Ok(GroupEval { objective, mean_kl })
}

/// Evaluate the GRPO objective for one group under the current policy.
pub fn group_objective(
    group: &RolloutGroup,
    policy: &TabularPolicy,
    hp: &GrpoHyperParams,
) -> Result<GroupEval, GrpoError> {
    rollout_eval(group, policy, hp, |_, _, _| Ok(()))
}

/// Accumulate the exact gradient of [`group_objective`] with respect to the
/// current policy's logits into `acc` (same layout and length as the logits
/// table). Sampled rollouts, the old policy, and the reference are treated as
/// constants. Returns the objective evaluated at the current policy.
pub fn objective_gradient(
    group: &RolloutGroup,
    policy: &TabularPolicy,
    hp: &GrpoHyperParams,
    acc: &mut [f64],
) -> Result<GroupEval, GrpoError> {
    debug_assert_eq!(acc.len(), policy.num_params());
    let g = group.rollouts.len() as f64;
    let vocab_size = policy.vocab_size();
    let key = group.question.key;
    let clamp = hp.ratio_log_clamp;
    // Immutable borrow juggling: collect per-rollout coefficients first, then
    // walk each rollout's sparse grad-log-prob into the accumulator.
    let mut coeffs: Vec<f64> = Vec::with_capacity(group.rollouts.len());
    let eval = rollout_eval(group, policy, hp, |i, logp_theta, rollout| {
        let advantage = group.advantages[i];
        let log_ratio_raw = logp_theta - rollout.logp_old;
        let ratio = importance_ratio(logp_theta, rollout.logp_old, clamp);
        let unclipped = ratio * advantage;
        let clipped = ratio.clamp(1.0 - hp.clip_epsilon, 1.0 + hp.clip_epsilon) * advantage;
        // Min branch: ties go to the unclipped branch, whose derivative wrt
        // logp_theta is ratio * A (zero when the log-ratio clamp is active).
        // A strictly smaller clipped branch is saturated, hence constant.
        let surrogate_coeff = if unclipped <= clipped && log_ratio_raw.abs() < clamp {
            unclipped
        } else {
            0.0
        };
        let kl_delta_raw = rollout.logp_ref - logp_theta;
        let kl_partial = if kl_delta_raw.abs() < clamp {
            1.0 - kl_delta_raw.exp()
        } else {
            0.0
        };
        let coeff = surrogate_coeff / g - hp.kl_beta * kl_partial / g;
        if !coeff.is_finite() {
            return Err(GrpoError::NonFinite {
                context: format!("gradient coefficient for rollout {i}"),
            });
        }
        coeffs.push(coeff);
        Ok(())
    })?;
    for (rollout, &coeff) in group.rollouts.iter().zip(coeffs.iter()) {
        if coeff == 0.0 {
            continue;
        }
        let grad = policy.seq_logprob_grad(key, &rollout.tokens)?;
        for (row_id, row) in &grad.rows {
            let base = row_id * vocab_size;
            for (j, g_val) in row.iter().enumerate() {
                acc[base + j] += coeff * g_val;
            }
        }
    }
    Ok(eval)
}

/// Per-step training metrics, appended as one JSON object per line to the
/// metrics log. Field order is part of the format.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub stage: usize,
    pub mean_reward: f64,
    pub mean_len: f64,
    pub mean_think_len: f64,
    pub objective: f64,
    pub kl: f64,
}

struct Scored {
    tokens: Vec<TokenId>,
    text: String,
    reward: f64,
    logp_old: f64,
    logp_ref: f64,
    think_len: Option<usize>,
}

use crate::util::parallel_map;

/// GRPO trainer: owns the current policy and the reference snapshot (frozen
/// at construction for the whole run, across all schedule stages). The old
/// policy is refreshed from the current one at the top of every step.
pub struct Trainer {
    policy: TabularPolicy,
    reference: TabularPolicy,
    vocab: Vocabulary,
    env: EnvSpec,
    reward: RewardSpec,
    hp: GrpoHyperParams,
    seed: u64,
    workers: usize,
    step: usize,
}

impl Trainer {
    pub fn new(
        policy: TabularPolicy,
        vocab: Vocabulary,
        env: EnvSpec,
        reward: RewardSpec,
        hp: GrpoHyperParams,
        seed: u64,
        workers: usize,
    ) -> Result<Self, GrpoError> {
        hp.validate()?;
        reward.validate().map_err(GrpoError::BadHyperParams)?;
        let reference = policy.snapshot();
        Ok(Self {
            policy,
            reference,
            vocab,
            env,
            reward,
            hp,
            seed,
            workers: workers.max(1),
            step: 0,
        })
    }

    pub fn policy(&self) -> &TabularPolicy {
        &self.policy
    }

    pub fn reference(&self) -> &TabularPolicy {
        &self.reference
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn env(&self) -> &EnvSpec {
        &self.env
    }

    pub fn hyperparams(&self) -> &GrpoHyperParams {
        &self.hp
    }

    pub fn global_step(&self) -> usize {
        self.step
    }

    pub fn into_policy(self) -> TabularPolicy {
        self.policy
    }

    fn score_rollout(
        &self,
        old: &TabularPolicy,
        question: &Question,
        step: u64,
        question_index: usize,
        rollout_index: usize,
        max_len: usize,
    ) -> Result<Scored, GrpoError> {
        let mut rng = stream(
            self.seed,
            domain::ROLLOUT,
            &[step, question_index as u64, rollout_index as u64],
        );
        let tokens = old.sample(question.key, max_len, &mut rng);
        let text = self.vocab.detokenize(&tokens);
        let id = RolloutId {
            step,
            question_index: question_index as u64,
            rollout_index: rollout_index as u64,
        };
        let (format_bit, result_bit, think_len) = match parse_tagged(&text) {
            Ok(parsed) => {
                let tl = think_length(&parsed, &self.vocab);
                let ok = judge_result(&self.env, question, &parsed.answer_text, Some(tl), id);
                (1.0, if ok { 1.0 } else { 0.0 }, Some(tl))
            }
            Err(_) => {
                let result = match self.reward.mode {
                    // Zero mode still grades the trailing token of malformed
                    // output; the hard reward does not.
                    RewardMode::ZeroComposite => {
                        let tail = text.split_whitespace().last().unwrap_or("");
                        judge_result(&self.env, question, tail, None, id)
                    }
                    RewardMode::Hfrrf => false,
                };
                (0.0, if result { 1.0 } else { 0.0 }, None)
            }
        };
        let reward = self.reward.combine(format_bit, result_bit);
        let logp_old = old.seq_logprob(question.key, &tokens)?;
        let logp_ref = self.reference.seq_logprob(question.key, &tokens)?;
        Ok(Scored {
            tokens,
            text,
            reward,
            logp_old,
            logp_ref,
            think_len,
        })
    }

    /// One GRPO step: snapshot the old policy, sample and score G rollouts
    /// per question (lengths hard-capped at the stage limit), normalize
    /// advantages per group, apply the inner gradient-ascent updates, and
    /// report metrics with the objective and KL evaluated at the updated
    /// policy.
    pub fn train_step(
        &mut self,
        questions: &[Question],
        stage: &StageConfig,
    ) -> Result<StepMetrics, GrpoError> {
        if questions.is_empty() {
            return Err(GrpoError::EmptyBatch);
        }
        let group_size = stage.group_size;
        let step = self.step as u64;
        let old = self.policy.snapshot();

        let n_jobs = questions.len() * group_size;
        let results = parallel_map(self.workers, n_jobs, |job| {
            let qi = job / group_size;
            let ri = job % group_size;
            self.score_rollout(&old, &questions[qi], step, qi, ri, stage.max_len)
        });

        let mut scored = Vec::with_capacity(n_jobs);
        for r in results {
            scored.push(r?);
        }

        let total = scored.len() as f64;
        let mean_reward = scored.iter().map(|s| s.reward).sum::<f64>() / total;
        let mean_len = scored.iter().map(|s| s.tokens.len() as f64).sum::<f64>() / total;
        let think_count = scored.iter().filter(|s| s.think_len.is_some()).count();
        let mean_think_len = if think_count > 0 {
            scored
                .iter()
                .filter_map(|s| s.think_len)
                .map(|l| l as f64)
                .sum::<f64>()
                / think_count as f64
        } else {
            0.0
        };

        let mut groups = Vec::with_capacity(questions.len());
        let mut iter = scored.into_iter();
        for question in questions {
            let rollouts: Vec<Rollout> = iter
                .by_ref()
                .take(group_size)
                .map(|s| Rollout {
                    tokens: s.tokens,
                    text: s.text,
                    reward: s.reward,
                    logp_old: s.logp_old,
                    logp_ref: s.logp_ref,
                    think_len: s.think_len,
                })
                .collect();
            groups.push(RolloutGroup::new(question.clone(), rollouts)?);
        }

        let batch_scale = self.hp.learning_rate / questions.len() as f64;
        for _ in 0..self.hp.inner_updates {
            let mut acc = vec![0.0; self.policy.num_params()];
            for group in &groups {
                objective_gradient(group, &self.policy, &self.hp, &mut acc)?;
            }
            self.policy.nudge(&acc, batch_scale);
        }

        let mut objective_sum = 0.0;
        let mut kl_sum = 0.0;
        for group in &groups {
            let eval = group_objective(group, &self.policy, &self.hp)?;
            objective_sum += eval.objective;
            kl_sum += eval.mean_kl;
        }
        let q = questions.len() as f64;

        let metrics = StepMetrics {
            step: self.step,
            stage: stage.index,
            mean_reward,
            mean_len,
            mean_think_len,
            objective: objective_sum / q,
            kl: kl_sum / q,
        };
        self.step += 1;
        Ok(metrics)
    }
}
