//! Run orchestration: turns a validated [`RunConfig`] into artifacts.
//!
//! Modes:
//! - `zero`: single-stage RL from a format-primed uniform policy with the
//!   soft composite reward and the tag-format system prompt attached to every
//!   question.
//! - `ptst`: the staged schedule from a cold-start policy with the hard
//!   formatting result reward and no system prompt.
//! - `dynamics`: paired runs (staged vs fixed-long caps at matched token
//!   budget) over several seeds, summarized as CSV.
//! - `pipeline` / `stats`: drive the data pipeline and marker statistics.
//!
//! Every artifact embeds an [`ArtifactHeader`] carrying the config digest,
//! seed, and tool version; re-running the same resolved config reproduces
//! every artifact byte for byte regardless of worker count.

use crate::config::{ArtifactHeader, ConfigError, InitSource, Mode, RunConfig};
use crate::env::{judge_result, question_pool, think_length, EnvSpec, RolloutId};
use crate::grpo::{GrpoError, StepMetrics, Trainer};
use crate::pipeline::rules::{default_rewrites, parse_filters, parse_rewrites, RuleError};
use crate::pipeline::{assemble_dataset, run_pipeline, PipelineContext, VqaSample};
use crate::policy::{cold_start, format_primed, CheckpointMeta, PolicyError, TabularPolicy};
use crate::ptst::{run_ptst, PtstError, QuestionSource, Schedule, ScheduleError};
use crate::reward::{parse_tagged, RewardSpec};
use crate::rngs::{derive_seed, domain, stream};
use crate::vocab::Vocabulary;
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};

/// The conversation preamble attached to every question in zero mode. It
/// dictates the think/answer tag format; staged runs rely on the cold start
/// instead and attach nothing.
pub const SYSTEM_PROMPT: &str = "A conversation between User and Assistant. The User asks a \
question, and the Assistant solves it. The Assistant first thinks about the reasoning process \
in the mind and then provides the User with the answer. The reasoning process and answer are \
enclosed within <think> </think> and <answer> </answer> tags, respectively, i.e., <think> \
reasoning process here </think> <answer> answer here </answer>.";

/// Step offset separating evaluation draws from training draws in the
/// oracle's keyed streams.
const EVAL_STEP_BASE: u64 = 1 << 40;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Data {
        path: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
    #[error(transparent)]
    Ptst(#[from] PtstError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Rules(#[from] RuleError),
}

impl RunError {
    /// CLI exit code: 1 for configuration problems, 2 for runtime faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::ConfigFile(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// What a run produced, as a JSON echo for the caller to print or inspect.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub echo: serde_json::Value,
}

/// Validate, resolve, and execute a run.
pub fn run(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let resolved = config.resolved();
    resolved.validate().map_err(RunError::Config)?;
    match resolved.mode {
        Mode::Zero | Mode::Ptst => run_train(&resolved),
        Mode::Dynamics => run_dynamics(&resolved),
        Mode::Pipeline => run_pipeline_mode(&resolved),
        Mode::Stats => run_stats(&resolved),
    }
}

/// Build the starting policy named by the config.
pub fn build_initial_policy(
    config: &RunConfig,
    env: &EnvSpec,
    vocab: &Vocabulary,
) -> Result<TabularPolicy, RunError> {
    let num_keys = env.num_keys();
    let policy = match &config.train.init {
        InitSource::Uniform => TabularPolicy::new(num_keys, vocab.size(), vocab.eos()),
        InitSource::Primed | InitSource::ModeDefault if config.mode == Mode::Zero => {
            format_primed(num_keys, vocab, config.train.format_bias)
        }
        InitSource::Primed => format_primed(num_keys, vocab, config.train.format_bias),
        InitSource::Cold | InitSource::ModeDefault => {
            cold_start(num_keys, vocab, config.train.cold_start.style())
        }
        InitSource::Checkpoint(path) => {
            let path = PathBuf::from(path);
            let (policy, _meta) = TabularPolicy::load(&path)?;
            if policy.num_keys() != num_keys || policy.vocab_size() != vocab.size() {
                return Err(RunError::Data {
                    path: path.display().to_string(),
                    line: 0,
                    reason: format!(
                        "checkpoint shape ({} keys, vocab {}) does not match the run \
                         ({num_keys} keys, vocab {})",
                        policy.num_keys(),
                        policy.vocab_size(),
                        vocab.size()
                    ),
                });
            }
            policy
        }
    };
    Ok(policy)
}

/// Fraction of sampled outputs that parse against the tag grammar, over the
/// whole question pool with evaluation-keyed streams.
pub fn measure_format_fraction(
    policy: &TabularPolicy,
    vocab: &Vocabulary,
    env: &EnvSpec,
    max_len: usize,
    rollouts_per_question: usize,
    eval_seed: u64,
) -> f64 {
    let pool = question_pool(env);
    let mut valid = 0usize;
    let mut total = 0usize;
    for (qi, question) in pool.iter().enumerate() {
        for r in 0..rollouts_per_question {
            let mut rng = stream(eval_seed, domain::EVAL, &[qi as u64, r as u64]);
            let tokens = policy.sample(question.key, max_len, &mut rng);
            if parse_tagged(&vocab.detokenize(&tokens)).is_ok() {
                valid += 1;
            }
            total += 1;
        }
    }
    valid as f64 / total.max(1) as f64
}

/// Mean hard-reward accuracy (format valid AND answer judged correct) over
/// the question pool, sampling `rollouts_per_question` outputs per question.
pub fn evaluate_accuracy(
    policy: &TabularPolicy,
    vocab: &Vocabulary,
    env: &EnvSpec,
    max_len: usize,
    rollouts_per_question: usize,
    eval_seed: u64,
) -> f64 {
    let pool = question_pool(env);
    let mut correct = 0usize;
    let mut total = 0usize;
    for (qi, question) in pool.iter().enumerate() {
        for r in 0..rollouts_per_question {
            let mut rng = stream(eval_seed, domain::EVAL, &[qi as u64, r as u64]);
            let tokens = policy.sample(question.key, max_len, &mut rng);
            let text = vocab.detokenize(&tokens);
            if let Ok(parsed) = parse_tagged(&text) {
                let tl = think_length(&parsed, vocab);
                let id = RolloutId {
                    step: EVAL_STEP_BASE + r as u64,
                    question_index: qi as u64,
                    rollout_index: r as u64,
                };
                if judge_result(env, question, &parsed.answer_text, Some(tl), id) {
                    correct += 1;
                }
            }
            total += 1;
        }
    }
    correct as f64 / total.max(1) as f64
}

fn create_parent(path: &Path) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    Ok(())
}

struct TrainArtifacts {
    metrics: Vec<StepMetrics>,
    final_policy_path: PathBuf,
    metrics_path: PathBuf,
}

fn run_train(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let env = config.env.clone().expect("resolved env");
    let vocab = Vocabulary::new(config.train.num_fillers);
    let schedule = Schedule::from_triples(
        &config
            .schedule
            .as_ref()
            .expect("resolved schedule")
            .triples(),
    )?;
    let policy = build_initial_policy(config, &env, &vocab)?;
    let initial_format = measure_format_fraction(
        &policy,
        &vocab,
        &env,
        schedule.stages()[0].max_len,
        16,
        derive_seed(config.seed, domain::EVAL, &[0xF0]),
    );

    let reward = config.reward.expect("resolved reward");
    let mut trainer = Trainer::new(
        policy,
        vocab.clone(),
        env.clone(),
        reward,
        config.effective_hyperparams(),
        config.seed,
        config.workers,
    )?;

    let mut pool = question_pool(&env);
    if config.mode == Mode::Zero {
        for q in &mut pool {
            q.prompt_text = format!("{SYSTEM_PROMPT}\n\n{}", q.prompt_text);
        }
    }
    let source = QuestionSource::from_pool(pool, config.train.questions_per_step, config.seed);

    let metrics_path = config.paths.metrics_out.clone().expect("resolved path");
    create_parent(&metrics_path)?;
    let file = std::fs::File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut writer = std::io::BufWriter::new(file);
    writeln!(writer, "{}", ArtifactHeader::new("metrics", config).to_line())
        .map_err(io_err(&metrics_path))?;

    let mut history: Vec<StepMetrics> = Vec::with_capacity(schedule.total_steps());
    run_ptst(&mut trainer, &schedule, &source, |metrics| {
        history.push(*metrics);
        let line = serde_json::to_string(metrics).map_err(std::io::Error::other)?;
        writeln!(writer, "{line}")
    })?;
    writer.flush().map_err(io_err(&metrics_path))?;

    let checkpoint_path = config.paths.checkpoint_out.clone().expect("resolved path");
    create_parent(&checkpoint_path)?;
    trainer.policy().save(
        &checkpoint_path,
        CheckpointMeta {
            seed: config.seed,
            config_digest: config.digest(),
        },
    )?;

    let final_cap = schedule.stages().last().expect("nonempty").max_len;
    let final_format = measure_format_fraction(
        trainer.policy(),
        &vocab,
        &env,
        final_cap,
        16,
        derive_seed(config.seed, domain::EVAL, &[0xF1]),
    );
    let final_accuracy = evaluate_accuracy(
        trainer.policy(),
        &vocab,
        &env,
        final_cap,
        16,
        derive_seed(config.seed, domain::EVAL, &[0xF2]),
    );
    let window = 10.min(history.len());
    let tail_mean = |f: fn(&StepMetrics) -> f64| {
        history[history.len() - window..].iter().map(f).sum::<f64>() / window.max(1) as f64
    };
    let tail_mean_reward = tail_mean(|m| m.mean_reward);
    let tail_mean_len = tail_mean(|m| m.mean_len);

    let artifacts = TrainArtifacts {
        metrics: history,
        final_policy_path: checkpoint_path,
        metrics_path,
    };
    let echo = json!({
        "mode": config.mode.to_string(),
        "config_digest": config.digest_hex(),
        "seed": config.seed,
        "system_prompt": if config.mode == Mode::Zero { Some(SYSTEM_PROMPT) } else { None },
        "config": serde_json::to_value(config).expect("config serializes"),
        "artifacts": {
            "metrics": artifacts.metrics_path.display().to_string(),
            "checkpoint": artifacts.final_policy_path.display().to_string(),
        },
        "summary": {
            "steps": artifacts.metrics.len(),
            "initial_format_fraction": initial_format,
            "final_format_fraction": final_format,
            "final_accuracy": final_accuracy,
            "tail_mean_reward": tail_mean_reward,
            "tail_mean_len": tail_mean_len,
        },
    });
    Ok(RunOutcome { echo })
}

/// Result of one dynamics seed: accuracies of both arms plus the staged
/// arm's mean output length on each side of the stage boundary.
#[derive(Clone, Copy, Debug)]
pub struct DynamicsSeed {
    pub seed_index: usize,
    pub run_seed: u64,
    pub ptst_accuracy: f64,
    pub long_accuracy: f64,
    pub len_before_boundary: f64,
    pub len_after_boundary: f64,
}

/// Aggregated paired-run experiment output.
#[derive(Clone, Debug)]
pub struct DynamicsSummary {
    pub per_seed: Vec<DynamicsSeed>,
    pub ptst_mean_accuracy: f64,
    pub long_mean_accuracy: f64,
    pub margin: f64,
    pub mean_len_before: f64,
    pub mean_len_after: f64,
    pub ptst_metrics_first_seed: Vec<StepMetrics>,
}

/// Run the paired staged-vs-fixed-long experiment. Both arms start from the
/// same cold-start policy, train with the hard reward at matched per-step
/// token budget, and are evaluated at the same cap with shared evaluation
/// streams.
pub fn dynamics_experiment(config: &RunConfig) -> Result<DynamicsSummary, RunError> {
    let env = config.env.clone().expect("resolved env");
    let vocab = Vocabulary::new(config.train.num_fillers);
    let ptst_schedule = Schedule::from_triples(
        &config
            .schedule
            .as_ref()
            .expect("resolved schedule")
            .triples(),
    )?;
    if ptst_schedule.stages().len() < 2 {
        return Err(RunError::Config(vec![
            "dynamics mode needs a schedule with at least two stages".into(),
        ]));
    }
    let total_steps = ptst_schedule.total_steps();
    let long_cap = 16384 / config.train.scale_divisor;
    let long_schedule = Schedule::from_triples(&[(long_cap, 4, total_steps)])?;
    let boundary = ptst_schedule.stage_start(2);
    let window = config
        .dynamics
        .boundary_window
        .min(boundary)
        .min(total_steps - boundary)
        .max(1);

    let mut per_seed = Vec::with_capacity(config.dynamics.seeds);
    let mut first_seed_metrics = Vec::new();
    for seed_index in 0..config.dynamics.seeds {
        let run_seed = derive_seed(config.seed, domain::SEED_SPLIT, &[seed_index as u64]);
        let cold = cold_start(env.num_keys(), &vocab, config.train.cold_start.style());

        let run_arm = |arm_id: u64, schedule: &Schedule| -> Result<(TabularPolicy, Vec<StepMetrics>), RunError> {
            let trainer_seed = derive_seed(run_seed, domain::SEED_SPLIT, &[arm_id]);
            let mut trainer = Trainer::new(
                cold.clone(),
                vocab.clone(),
                env.clone(),
                RewardSpec::hfrrf(),
                config.effective_hyperparams(),
                trainer_seed,
                config.workers,
            )?;
            let source =
                QuestionSource::from_env(&env, config.train.questions_per_step, trainer_seed);
            let mut metrics = Vec::with_capacity(schedule.total_steps());
            run_ptst(&mut trainer, schedule, &source, |m| {
                metrics.push(*m);
                Ok(())
            })?;
            Ok((trainer.into_policy(), metrics))
        };

        let (ptst_policy, ptst_metrics) = run_arm(1, &ptst_schedule)?;
        let (long_policy, _) = run_arm(2, &long_schedule)?;

        let eval_seed = derive_seed(run_seed, domain::EVAL, &[]);
        let rollouts = config.dynamics.eval_rollouts_per_question;
        let ptst_accuracy =
            evaluate_accuracy(&ptst_policy, &vocab, &env, long_cap, rollouts, eval_seed);
        let long_accuracy =
            evaluate_accuracy(&long_policy, &vocab, &env, long_cap, rollouts, eval_seed);

        let mean_len = |range: std::ops::Range<usize>| {
            ptst_metrics[range.clone()]
                .iter()
                .map(|m| m.mean_len)
                .sum::<f64>()
                / range.len() as f64
        };
        let len_before = mean_len(boundary - window..boundary);
        let len_after = mean_len(boundary..boundary + window);

        if seed_index == 0 {
            first_seed_metrics = ptst_metrics;
        }
        per_seed.push(DynamicsSeed {
            seed_index,
            run_seed,
            ptst_accuracy,
            long_accuracy,
            len_before_boundary: len_before,
            len_after_boundary: len_after,
        });
    }

    let n = per_seed.len() as f64;
    let ptst_mean_accuracy = per_seed.iter().map(|s| s.ptst_accuracy).sum::<f64>() / n;
    let long_mean_accuracy = per_seed.iter().map(|s| s.long_accuracy).sum::<f64>() / n;
    let mean_len_before = per_seed.iter().map(|s| s.len_before_boundary).sum::<f64>() / n;
    let mean_len_after = per_seed.iter().map(|s| s.len_after_boundary).sum::<f64>() / n;
    Ok(DynamicsSummary {
        per_seed,
        ptst_mean_accuracy,
        long_mean_accuracy,
        margin: ptst_mean_accuracy - long_mean_accuracy,
        mean_len_before,
        mean_len_after,
        ptst_metrics_first_seed: first_seed_metrics,
    })
}

fn run_dynamics(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let summary = dynamics_experiment(config)?;
    let summary_path = config.paths.summary_out.clone().expect("resolved path");
    create_parent(&summary_path)?;
    let mut csv = String::new();
    csv.push_str(&format!(
        "# {}\n",
        ArtifactHeader::new("dynamics_summary", config).to_line()
    ));
    csv.push_str(
        "seed_index,run_seed,ptst_final_accuracy,long_final_accuracy,\
         ptst_len_before_boundary,ptst_len_after_boundary\n",
    );
    for s in &summary.per_seed {
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            s.seed_index,
            s.run_seed,
            s.ptst_accuracy,
            s.long_accuracy,
            s.len_before_boundary,
            s.len_after_boundary
        ));
    }
    csv.push_str(&format!(
        "mean,,{:.6},{:.6},{:.6},{:.6}\n",
        summary.ptst_mean_accuracy,
        summary.long_mean_accuracy,
        summary.mean_len_before,
        summary.mean_len_after
    ));
    std::fs::write(&summary_path, csv).map_err(io_err(&summary_path))?;

    let echo = json!({
        "mode": "dynamics",
        "config_digest": config.digest_hex(),
        "seed": config.seed,
        "artifacts": { "summary": summary_path.display().to_string() },
        "summary": {
            "seeds": summary.per_seed.len(),
            "ptst_mean_accuracy": summary.ptst_mean_accuracy,
            "long_mean_accuracy": summary.long_mean_accuracy,
            "margin": summary.margin,
            "mean_len_before_boundary": summary.mean_len_before,
            "mean_len_after_boundary": summary.mean_len_after,
            "per_seed": summary.per_seed.iter().map(|s| json!({
                "seed_index": s.seed_index,
                "ptst_accuracy": s.ptst_accuracy,
                "long_accuracy": s.long_accuracy,
                "len_before": s.len_before_boundary,
                "len_after": s.len_after_boundary,
            })).collect::<Vec<_>>(),
        },
    });
    Ok(RunOutcome { echo })
}

/// Read a JSONL file of [`VqaSample`]s.
pub fn read_samples(path: &Path) -> Result<Vec<VqaSample>, RunError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample: VqaSample =
            serde_json::from_str(line).map_err(|e| RunError::Data {
                path: path.display().to_string(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        sample.validate().map_err(|reason| RunError::Data {
            path: path.display().to_string(),
            line: i + 1,
            reason,
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

fn run_pipeline_mode(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let dataset_in = config.paths.dataset_in.clone().expect("validated");
    let dataset_out = config.paths.dataset_out.clone().expect("resolved");
    let samples = read_samples(&dataset_in)?;
    let rewrites = match &config.paths.rewrites_file {
        Some(path) => parse_rewrites(path)?,
        None => default_rewrites(),
    };
    let filters = match &config.paths.filters_file {
        Some(path) => parse_filters(path)?,
        None => Default::default(),
    };
    let mut errors = Vec::new();
    let fallback = config.paths.fixture_dir.clone();
    let mllm = config
        .pipeline
        .mllm
        .build("mllm", fallback.as_deref(), &mut errors);
    let reasoning = config
        .pipeline
        .reasoning
        .build("reasoning", fallback.as_deref(), &mut errors);
    let (Some(mllm), Some(reasoning)) = (mllm, reasoning) else {
        return Err(RunError::Config(errors));
    };
    let ctx = PipelineContext {
        mllm,
        reasoning,
        rewrites,
        filters,
        temperature: config.pipeline.temperature,
        timestamp: config.pipeline.timestamp.clone(),
        max_in_flight: config.pipeline.max_in_flight,
    };
    let records = run_pipeline(&ctx, &samples);
    create_parent(&dataset_out)?;
    let header = ArtifactHeader::new("cold_start_dataset", config);
    let manifest =
        assemble_dataset(&records, &dataset_out, Some(&header)).map_err(io_err(&dataset_out))?;

    let echo = json!({
        "mode": "pipeline",
        "config_digest": config.digest_hex(),
        "seed": config.seed,
        "artifacts": {
            "dataset": dataset_out.display().to_string(),
            "manifest": crate::pipeline::manifest_path(&dataset_out).display().to_string(),
        },
        "manifest": serde_json::to_value(&manifest).expect("manifest serializes"),
    });
    Ok(RunOutcome { echo })
}

/// Pull the marker-countable text out of one dataset line: a record's
/// think_text when the line is a record, the raw line otherwise. Artifact
/// header lines are skipped.
fn stats_doc(line: &str) -> Option<String> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return None;
    }
    if trimmed.starts_with('{') {
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(trimmed) {
            if let Some(think) = value.get("think_text").and_then(|v| v.as_str()) {
                return Some(think.to_string());
            }
            if value.get("artifact").is_some() {
                return None;
            }
        }
    }
    Some(trimmed.to_string())
}

fn run_stats(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let input = config.paths.dataset_in.clone().expect("validated");
    let text = std::fs::read_to_string(&input).map_err(io_err(&input))?;
    let docs: Vec<String> = text.lines().filter_map(stats_doc).collect();
    let counts = crate::pipeline::markers::marker_stats(
        docs.iter().map(String::as_str),
        &config.stats.markers,
    );

    let summary_path = config.paths.summary_out.clone().expect("resolved path");
    create_parent(&summary_path)?;
    let mut csv = String::new();
    csv.push_str(&format!(
        "# {}\n",
        ArtifactHeader::new("marker_stats", config).to_line()
    ));
    csv.push_str("marker,count\n");
    for marker in &config.stats.markers {
        csv.push_str(&format!("{},{}\n", marker, counts[marker]));
    }
    std::fs::write(&summary_path, csv).map_err(io_err(&summary_path))?;

    let echo = json!({
        "mode": "stats",
        "config_digest": config.digest_hex(),
        "seed": config.seed,
        "artifacts": { "summary": summary_path.display().to_string() },
        "documents": docs.len(),
        "counts": counts,
    });
    Ok(RunOutcome { echo })
}
