//! Progressive thinking suppression: the staged training driver.
//!
//! A schedule is an ordered list of stages, each with its own output-length
//! cap `L_s`, group size `G_s`, and step budget. Early stages cap output
//! tightly to force short, correct reasoning; later stages relax the cap
//! (nondecreasing `L_s`) while shrinking the group. The default schedule is
//! the two-stage 4K x 16 then 8K x 8 recipe divided down by a desk-scale
//! divisor, with an optional third 16K x 4 stage that is off by default.
//!
//! Nothing is refreshed at a stage boundary except the (L_s, G_s) limits:
//! the reference policy stays frozen for the whole run and the stateless
//! optimizer carries no state to reset.

use crate::env::{question_pool, EnvSpec, Question};
use crate::grpo::{GrpoError, StepMetrics, Trainer};
use crate::rngs::{domain, stream};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ScheduleError {
    #[error("scale divisor {0} must divide 4096")]
    InvalidDivisor(usize),
    #[error("schedule must contain at least one stage")]
    Empty,
    #[error("invalid stage {index}: {reason}")]
    BadStage { index: usize, reason: String },
    #[error("step {step} is past the end of the schedule ({total} steps): run complete")]
    Exhausted { step: usize, total: usize },
}

/// One stage: 1-based index, token cap, group size, and step budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub index: usize,
    pub max_len: usize,
    pub group_size: usize,
    pub steps: usize,
}

/// An ordered, validated list of stages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    stages: Vec<StageConfig>,
}

impl Schedule {
    /// Validate and wrap stages. Indices must run 1..=S, caps must be
    /// nondecreasing, groups must have at least two rollouts, and every cap
    /// must leave room for the four tags plus an answer.
    pub fn new(stages: Vec<StageConfig>) -> Result<Self, ScheduleError> {
        if stages.is_empty() {
            return Err(ScheduleError::Empty);
        }
        let mut prev_len = 0;
        for (i, stage) in stages.iter().enumerate() {
            let fail = |reason: &str| {
                Err(ScheduleError::BadStage {
                    index: i + 1,
                    reason: reason.to_string(),
                })
            };
            if stage.index != i + 1 {
                return fail(&format!("index must be {} (consecutive from 1)", i + 1));
            }
            if stage.group_size < 2 {
                return fail("group_size must be at least 2");
            }
            if stage.max_len < 8 {
                return fail("max_len must be at least 8");
            }
            if stage.steps == 0 {
                return fail("steps must be positive");
            }
            if stage.max_len < prev_len {
                return fail("max_len must be nondecreasing across stages");
            }
            prev_len = stage.max_len;
        }
        Ok(Self { stages })
    }

    /// Build from (max_len, group_size, steps) triples, assigning indices.
    pub fn from_triples(triples: &[(usize, usize, usize)]) -> Result<Self, ScheduleError> {
        Self::new(
            triples
                .iter()
                .enumerate()
                .map(|(i, &(max_len, group_size, steps))| StageConfig {
                    index: i + 1,
                    max_len,
                    group_size,
                    steps,
                })
                .collect(),
        )
    }

    pub fn stages(&self) -> &[StageConfig] {
        &self.stages
    }

    pub fn total_steps(&self) -> usize {
        self.stages.iter().map(|s| s.steps).sum()
    }

    /// The stage whose cumulative step interval contains `global_step`
    /// (0-indexed; boundaries at cumulative sums).
    pub fn stage_at(&self, global_step: usize) -> Result<&StageConfig, ScheduleError> {
        let mut start = 0;
        for stage in &self.stages {
            if global_step < start + stage.steps {
                return Ok(stage);
            }
            start += stage.steps;
        }
        Err(ScheduleError::Exhausted {
            step: global_step,
            total: self.total_steps(),
        })
    }

    /// Global step at which `stage_index` (1-based) begins.
    pub fn stage_start(&self, stage_index: usize) -> usize {
        self.stages
            .iter()
            .take_while(|s| s.index < stage_index)
            .map(|s| s.steps)
            .sum()
    }
}

fn check_divisor(divisor: usize) -> Result<(), ScheduleError> {
    if divisor == 0 || 4096 % divisor != 0 || 4096 / divisor < 8 {
        return Err(ScheduleError::InvalidDivisor(divisor));
    }
    Ok(())
}

/// The two-stage default schedule scaled down by `divisor`:
/// (4096/d x 16, 100 steps) then (8192/d x 8, 100 steps).
pub fn default_schedule(divisor: usize) -> Result<Schedule, ScheduleError> {
    check_divisor(divisor)?;
    Schedule::from_triples(&[(4096 / divisor, 16, 100), (8192 / divisor, 8, 100)])
}

/// The default schedule with the optional third stage (16384/d x 4, 100
/// steps) appended.
pub fn default_schedule_with_third(divisor: usize) -> Result<Schedule, ScheduleError> {
    check_divisor(divisor)?;
    Schedule::from_triples(&[
        (4096 / divisor, 16, 100),
        (8192 / divisor, 8, 100),
        (16384 / divisor, 4, 100),
    ])
}

/// Single-stage schedule matching the zero-mode run configuration:
/// 4096/d tokens, 16 rollouts per group, 300 steps.
pub fn zero_schedule(divisor: usize) -> Result<Schedule, ScheduleError> {
    check_divisor(divisor)?;
    Schedule::from_triples(&[(4096 / divisor, 16, 300)])
}

/// Draws per-step training batches from the environment's question pool,
/// deterministically in (seed, step). Batches contain distinct questions;
/// a batch size at or above the pool size trains on the whole pool.
#[derive(Clone, Debug)]
pub struct QuestionSource {
    pool: Vec<Question>,
    batch_size: usize,
    seed: u64,
}

impl QuestionSource {
    pub fn from_env(env: &EnvSpec, batch_size: usize, seed: u64) -> Self {
        Self::from_pool(question_pool(env), batch_size, seed)
    }

    /// Use an explicit pool, e.g. questions decorated with a system prompt.
    pub fn from_pool(pool: Vec<Question>, batch_size: usize, seed: u64) -> Self {
        Self {
            pool,
            batch_size: batch_size.max(1),
            seed,
        }
    }

    pub fn pool(&self) -> &[Question] {
        &self.pool
    }

    pub fn batch(&self, step: usize) -> Vec<Question> {
        if self.batch_size >= self.pool.len() {
            return self.pool.clone();
        }
        let mut rng = stream(self.seed, domain::BATCH, &[step as u64]);
        let mut indices: Vec<usize> = (0..self.pool.len()).collect();
        for i in 0..self.batch_size {
            let j = rng.gen_range(i..indices.len());
            indices.swap(i, j);
        }
        indices[..self.batch_size]
            .iter()
            .map(|&i| self.pool[i].clone())
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PtstError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error("metrics sink: {0}")]
    Sink(#[from] std::io::Error),
}

/// Drive the trainer through every step of the schedule, delivering each
/// step's metrics to the sink. The trainer's current policy at return is the
/// final-stage-end policy; its reference is untouched.
pub fn run_ptst<F>(
    trainer: &mut Trainer,
    schedule: &Schedule,
    source: &QuestionSource,
    mut on_step: F,
) -> Result<(), PtstError>
where
    F: FnMut(&StepMetrics) -> std::io::Result<()>,
{
    let start = trainer.global_step();
    for step in start..schedule.total_steps() {
        let stage = schedule.stage_at(step)?;
        let batch = source.batch(step);
        let metrics = trainer.train_step(&batch, stage)?;
        on_step(&metrics)?;
    }
    Ok(())
}
