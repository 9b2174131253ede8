//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measurements (run with `-- --nocapture` to see them). Tolerances and
//! budgets are pinned in the assertions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};
use thinkrl::config::{Mode, RunConfig, StageTable};
use thinkrl::env::{question_pool, EnvSpec};
use thinkrl::grpo::{
    compute_advantages, group_objective, kl_value, objective_gradient, GrpoHyperParams, Rollout,
    RolloutGroup, Trainer,
};
use thinkrl::pipeline::backend::{ChatMessage, ChatRequest, GenBackend, ReplayBackend, RequestRole};
use thinkrl::pipeline::markers::{marker_stats, DEFAULT_MARKERS};
use thinkrl::pipeline::rules::{default_rewrites, FilterConfig};
use thinkrl::pipeline::{assemble_dataset, prompts, run_pipeline, PipelineContext, VqaSample};
use thinkrl::policy::TabularPolicy;
use thinkrl::ptst::{QuestionSource, Schedule};
use thinkrl::reward::{
    format_reward, parse_tagged, result_reward, reward_hfrrf, reward_zero, AnswerMatchRule,
};
use thinkrl::rngs::{domain, stream};
use thinkrl::run::{
    build_initial_policy, dynamics_experiment, measure_format_fraction, run, SYSTEM_PROMPT,
};
use thinkrl::{Question, Vocabulary};

fn budget(elapsed: Duration, limit: Duration, what: &str) {
    assert!(
        elapsed <= limit,
        "{what} exceeded its runtime budget: {elapsed:?} > {limit:?}"
    );
}

#[test]
fn acceptance_01_advantage_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAD01);
    let mut max_mean: f64 = 0.0;
    let mut max_std_err: f64 = 0.0;
    for _ in 0..1000 {
        let g = rng.gen_range(2..=64);
        let rewards: Vec<f64> = (0..g).map(|_| rng.gen_range(0.0..1.0)).collect();
        let advantages = compute_advantages(&rewards).unwrap();
        let mean = advantages.iter().sum::<f64>() / g as f64;
        let std =
            (advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / g as f64).sqrt();
        max_mean = max_mean.max(mean.abs());
        max_std_err = max_std_err.max((std - 1.0).abs());
        assert!(mean.abs() < 1e-9, "mean(A) = {mean}");
        assert!((std - 1.0).abs() < 1e-9, "pop_std(A) = {std}");

        // Shift and positive-scale invariance, to 1e-9.
        let shift: f64 = rng.gen_range(-5.0..5.0);
        let scale: f64 = rng.gen_range(0.1..10.0);
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let scaled: Vec<f64> = rewards.iter().map(|r| r * scale).collect();
        for (a, b) in advantages.iter().zip(compute_advantages(&shifted).unwrap()) {
            assert!((a - b).abs() < 1e-9, "shift changed advantages");
        }
        for (a, b) in advantages.iter().zip(compute_advantages(&scaled).unwrap()) {
            assert!((a - b).abs() < 1e-9, "scale changed advantages");
        }
    }
    // All-equal groups yield exactly zero advantages.
    for g in [2usize, 5, 64] {
        let level: f64 = rng.gen_range(0.0..1.0);
        let advantages = compute_advantages(&vec![level; g]).unwrap();
        assert!(advantages.iter().all(|&a| a == 0.0));
    }
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(1), "advantage suite");
    println!(
        "acceptance 01 (advantage suite): PASS: 1000 vectors, max |mean| {max_mean:.2e}, \
         max |std-1| {max_std_err:.2e}, {elapsed:?}"
    );
}

#[test]
fn acceptance_02_kl_estimator_suite() {
    let start = Instant::now();
    let clamp = GrpoHyperParams::default().ratio_log_clamp;
    let mut rng = ChaCha8Rng::seed_from_u64(0xAD02);
    let mut positive: Vec<(f64, f64)> = Vec::new();
    let mut negative: Vec<(f64, f64)> = Vec::new();
    for _ in 0..10_000 {
        let log_ratio: f64 = rng.gen_range(-13.0..13.0);
        // kl_value takes (logp_theta, logp_ref); log ratio = logp_ref - logp_theta.
        let v = kl_value(-2.0 - log_ratio, -2.0, clamp);
        assert!(v >= 0.0, "kl must be non-negative, got {v} at {log_ratio}");
        assert_eq!(
            v < 1e-12,
            log_ratio.abs() < 1e-7,
            "kl < 1e-12 must hold exactly when |log ratio| < 1e-7 (log ratio {log_ratio}, kl {v})"
        );
        if log_ratio > 0.0 {
            positive.push((log_ratio, v));
        } else {
            negative.push((-log_ratio, v));
        }
    }
    // Zero and near-zero witnesses for the small-ratio direction.
    assert_eq!(kl_value(-3.0, -3.0, clamp), 0.0);
    assert!(kl_value(-3.0 - 5e-8, -3.0, clamp) < 1e-12);
    // Monotone in |log ratio| on each side of zero.
    positive.sort_by(|a, b| a.0.total_cmp(&b.0));
    negative.sort_by(|a, b| a.0.total_cmp(&b.0));
    for series in [&positive, &negative] {
        for pair in series.windows(2) {
            assert!(
                pair[1].1 > pair[0].1,
                "kl must increase with |log ratio| on each side of 0"
            );
        }
    }
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(1), "kl estimator suite");
    println!(
        "acceptance 02 (kl estimator suite): PASS: 10000 log-ratios in [-13, 13], \
         {} positive / {} negative, {elapsed:?}",
        positive.len(),
        negative.len()
    );
}

fn random_policy(num_keys: usize, vocab_size: usize, seed: u64, span: f64) -> TabularPolicy {
    let mut policy = TabularPolicy::new(num_keys, vocab_size, vocab_size - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..policy.num_params() {
        *policy.logit_mut(i) = rng.gen_range(-span..span);
    }
    policy
}

#[test]
fn acceptance_03_gradient_check() {
    let start = Instant::now();
    let hp = GrpoHyperParams::default();
    let mut checked_pairs = 0;
    let mut worst: f64 = 0.0;
    let mut trial = 0u64;
    while checked_pairs < 20 {
        trial += 1;
        let num_keys = 2 + (trial as usize % 15); // K <= 16
        let vocab_size = 6 + (trial as usize % 14); // V <= 19
        let old = random_policy(num_keys, vocab_size, 0x300 + trial, 0.8);
        let reference = random_policy(num_keys, vocab_size, 0x400 + trial, 0.8);
        let mut theta = random_policy(num_keys, vocab_size, 0x500 + trial, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(0x600 + trial);
        let key = rng.gen_range(0..num_keys);
        let group_size = rng.gen_range(4..=12);
        let rollouts: Vec<Rollout> = (0..group_size)
            .map(|_| {
                let tokens = old.sample(key, 10, &mut rng);
                Rollout {
                    logp_old: old.seq_logprob(key, &tokens).unwrap(),
                    logp_ref: reference.seq_logprob(key, &tokens).unwrap(),
                    text: String::new(),
                    reward: rng.gen_range(0.0..1.0),
                    think_len: None,
                    tokens,
                }
            })
            .collect();
        let group = RolloutGroup::new(
            Question {
                key,
                prompt_text: String::new(),
                ground_truth: "0".into(),
            },
            rollouts,
        )
        .unwrap();
        // Finite differences are ill-posed within h of a clip kink; skip such
        // parameter points (they have measure zero but fixed seeds can land
        // near them).
        let near_kink = group.rollouts.iter().any(|r| {
            let lr = theta.seq_logprob(key, &r.tokens).unwrap() - r.logp_old;
            (lr.exp() - (1.0 - hp.clip_epsilon)).abs() < 1e-3
                || (lr.exp() - (1.0 + hp.clip_epsilon)).abs() < 1e-3
        });
        if near_kink {
            continue;
        }
        checked_pairs += 1;

        let mut analytic = vec![0.0; theta.num_params()];
        objective_gradient(&group, &theta, &hp, &mut analytic).unwrap();
        let h = 1e-5;
        for (idx, &a) in analytic.iter().enumerate() {
            let orig = theta.logits()[idx];
            *theta.logit_mut(idx) = orig + h;
            let up = group_objective(&group, &theta, &hp).unwrap().objective;
            *theta.logit_mut(idx) = orig - h;
            let down = group_objective(&group, &theta, &hp).unwrap().objective;
            *theta.logit_mut(idx) = orig;
            let fd = (up - down) / (2.0 * h);
            let err = if a.abs() < 1e-8 {
                (fd - a).abs()
            } else {
                (fd - a).abs() / a.abs()
            };
            worst = worst.max(err);
            assert!(
                err < 1e-4,
                "pair {checked_pairs} param {idx}: analytic {a} vs fd {fd} (err {err:.2e})"
            );
        }
    }
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(30), "gradient check");
    println!(
        "acceptance 03 (gradient check): PASS: {checked_pairs} (group, parameter) pairs, \
         worst error {worst:.2e} < 1e-4, {elapsed:?}"
    );
}

#[test]
fn acceptance_04_reward_conformance() {
    let start = Instant::now();
    let rule = AnswerMatchRule::ExactTrimmed;
    // Truth table: (format, result) -> hfrrf.
    let cases = [
        ("<think>t</think><answer>5</answer>", "5", 1.0), // valid + correct
        ("<think>t</think><answer>6</answer>", "5", 0.0), // valid + wrong
        ("the answer is 5", "5", 0.0),                    // malformed + correct text
        ("garbage", "5", 0.0),                            // malformed + wrong
    ];
    for (raw, truth, expected) in cases {
        assert_eq!(reward_hfrrf(raw, truth, &rule), expected, "truth table case {raw:?}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xAD04);
    let pieces = [
        "<think>", "</think>", "<answer>", "</answer>", "5", "6", "hmm", "wait", " ", "\n",
    ];
    let contents = ["", "5", "6", "hmm wait", " 5 ", "so 6 then"];
    let mut valid_seen = 0u32;
    for i in 0..20_000 {
        // Alternate raw tag soup with near-valid strings carrying one random
        // mutation, so both reward branches get heavy coverage.
        let raw = if i % 2 == 0 {
            let n = rng.gen_range(0..10);
            let mut raw = String::new();
            for _ in 0..n {
                raw.push_str(pieces[rng.gen_range(0..pieces.len())]);
                if rng.gen_bool(0.4) {
                    raw.push(' ');
                }
            }
            raw
        } else {
            let think = contents[rng.gen_range(0..contents.len())];
            let answer = contents[rng.gen_range(0..contents.len())];
            let mut raw = format!("<think>{think}</think> <answer>{answer}</answer>");
            match rng.gen_range(0..6) {
                0 => raw = raw.replacen("</think>", "", 1),
                1 => raw = format!("stray {raw}"),
                2 => raw = format!("<answer>{answer}</answer><think>{think}</think>"),
                3 => raw.push_str(" trailing"),
                4 => raw = format!("<think>{think}</think>{raw}"),
                _ => {}
            }
            raw
        };
        let f = format_reward(&raw);
        let r = match parse_tagged(&raw) {
            Ok(parsed) => {
                valid_seen += 1;
                result_reward(&parsed.answer_text, "5", &rule)
            }
            Err(_) => 0.0,
        };
        assert_eq!(
            reward_hfrrf(&raw, "5", &rule),
            f * r,
            "hfrrf must equal format AND result for {raw:?}"
        );
        let z = reward_zero(&raw, "5", &rule);
        assert!(
            z == 0.0 || z == 0.5 || z == 1.0,
            "reward_zero must lie in {{0, 0.5, 1}}, got {z}"
        );
    }
    assert!(valid_seen > 1000, "generator must exercise valid strings");
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(5), "reward conformance");
    println!(
        "acceptance 04 (reward conformance): PASS: truth table exact, 20000 generated strings \
         ({valid_seen} format-valid), {elapsed:?}"
    );
}

#[test]
fn acceptance_05_ptst_cap_soundness() {
    let start = Instant::now();
    let config = RunConfig::default_for(Mode::Ptst).resolved();
    let env = config.env.clone().unwrap();
    let vocab = Vocabulary::new(config.train.num_fillers);
    let schedule = Schedule::from_triples(&config.schedule.as_ref().unwrap().triples()).unwrap();
    assert_eq!(schedule.total_steps(), 200);
    let policy = build_initial_policy(&config, &env, &vocab).unwrap();
    let mut trainer = Trainer::new(
        policy,
        vocab.clone(),
        env.clone(),
        config.reward.unwrap(),
        config.effective_hyperparams(),
        config.seed,
        config.workers,
    )
    .unwrap();
    let source = QuestionSource::from_env(&env, config.train.questions_per_step, config.seed);

    let mut rollouts_seen = 0usize;
    let mut max_len_by_stage = [0usize; 2];
    let mut first_stage2_step = None;
    for step in 0..schedule.total_steps() {
        let stage = *schedule.stage_at(step).unwrap();
        let batch = source.batch(step);
        // Observer: re-derive every rollout this step will sample from its
        // keyed stream against the pre-step policy, and measure its length.
        let old = trainer.policy().snapshot();
        for (qi, question) in batch.iter().enumerate() {
            for ri in 0..stage.group_size {
                let mut rng = stream(
                    config.seed,
                    domain::ROLLOUT,
                    &[step as u64, qi as u64, ri as u64],
                );
                let tokens = old.sample(question.key, stage.max_len, &mut rng);
                assert!(
                    tokens.len() <= stage.max_len,
                    "rollout of {} tokens exceeds stage cap {}",
                    tokens.len(),
                    stage.max_len
                );
                max_len_by_stage[stage.index - 1] =
                    max_len_by_stage[stage.index - 1].max(tokens.len());
                rollouts_seen += 1;
            }
        }
        let metrics = trainer.train_step(&batch, &stage).unwrap();
        assert_eq!(metrics.stage, stage.index);
        assert!(metrics.mean_len <= stage.max_len as f64);
        if metrics.stage == 2 && first_stage2_step.is_none() {
            first_stage2_step = Some(step);
        }
    }
    assert!(rollouts_seen >= 10_000, "only {rollouts_seen} rollouts sampled");
    assert_eq!(first_stage2_step, Some(100), "stage transition must land on step 100");
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(300), "ptst cap soundness");
    println!(
        "acceptance 05 (ptst cap soundness): PASS: {rollouts_seen} rollouts, stage caps 64/128 \
         (observed maxima {}/{}), transition at step 100, {elapsed:?}",
        max_len_by_stage[0], max_len_by_stage[1]
    );
}

#[test]
fn acceptance_06_dynamics_reproduction() {
    let start = Instant::now();
    let config = RunConfig::default_for(Mode::Dynamics).resolved();
    assert_eq!(config.dynamics.seeds, 5);
    let summary = dynamics_experiment(&config).unwrap();
    assert!(
        summary.margin >= 0.05,
        "staged arm must beat the fixed-long arm by >= 0.05 absolute: staged {:.3}, long {:.3}",
        summary.ptst_mean_accuracy,
        summary.long_mean_accuracy
    );
    assert!(
        summary.mean_len_after >= summary.mean_len_before,
        "mean output length must be nondecreasing across the stage boundary: {:.2} -> {:.2}",
        summary.mean_len_before,
        summary.mean_len_after
    );
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(600), "dynamics reproduction");
    println!(
        "acceptance 06 (dynamics reproduction): PASS: 5 seeds, staged {:.3} vs long {:.3} \
         (margin {:+.3} >= 0.05), boundary length {:.1} -> {:.1}, {elapsed:?}",
        summary.ptst_mean_accuracy,
        summary.long_mean_accuracy,
        summary.margin,
        summary.mean_len_before,
        summary.mean_len_after
    );
}

#[test]
fn acceptance_07_zero_mode_format_learning() {
    let start = Instant::now();
    let mut initial_sum = 0.0;
    let mut final_sum = 0.0;
    let seeds = 5;
    let mut per_seed = Vec::new();
    for s in 0..seeds {
        let mut config = RunConfig::default_for(Mode::Zero);
        config.seed = 7 + s;
        let config = config.resolved();
        let env = config.env.clone().unwrap();
        assert!(matches!(env, EnvSpec::Arith { .. }));
        let vocab = Vocabulary::new(config.train.num_fillers);
        let schedule =
            Schedule::from_triples(&config.schedule.as_ref().unwrap().triples()).unwrap();
        assert_eq!(schedule.total_steps(), 300);
        assert_eq!(schedule.stages()[0].max_len, 64);
        assert_eq!(schedule.stages()[0].group_size, 16);
        let cap = schedule.stages()[0].max_len;

        let policy = build_initial_policy(&config, &env, &vocab).unwrap();
        let initial = measure_format_fraction(&policy, &vocab, &env, cap, 16, config.seed);
        let mut trainer = Trainer::new(
            policy,
            vocab.clone(),
            env.clone(),
            config.reward.unwrap(),
            config.effective_hyperparams(),
            config.seed,
            1,
        )
        .unwrap();
        let mut pool = question_pool(&env);
        for q in &mut pool {
            q.prompt_text = format!("{SYSTEM_PROMPT}\n\n{}", q.prompt_text);
        }
        let source =
            QuestionSource::from_pool(pool, config.train.questions_per_step, config.seed);
        for step in 0..schedule.total_steps() {
            let stage = schedule.stage_at(step).unwrap();
            trainer.train_step(&source.batch(step), stage).unwrap();
        }
        let final_fraction =
            measure_format_fraction(trainer.policy(), &vocab, &env, cap, 16, 1000 + config.seed);
        per_seed.push((initial, final_fraction));
        initial_sum += initial;
        final_sum += final_fraction;
    }
    let initial_mean = initial_sum / seeds as f64;
    let final_mean = final_sum / seeds as f64;
    assert!(
        initial_mean < 0.1,
        "initial format fraction must be below 0.1, measured {initial_mean:.4}"
    );
    assert!(
        final_mean > 0.9,
        "final format fraction must exceed 0.9, measured {final_mean:.4} ({per_seed:?})"
    );
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(600), "zero-mode format learning");
    println!(
        "acceptance 07 (zero-mode format learning): PASS: 5-seed mean fraction \
         {initial_mean:.3} -> {final_mean:.3}, {elapsed:?}"
    );
}

/// Record the three fixture responses one sample needs.
fn record_chain(
    mllm: &ReplayBackend,
    reasoning: &ReplayBackend,
    sample: &VqaSample,
    trace: &str,
) {
    let draft = format!("draft for {}", sample.question);
    let description = format!("detailed description for {}", sample.question);
    let request = |model: &str, text: String, image: Option<&str>| ChatRequest {
        model: model.to_string(),
        messages: vec![match image {
            Some(image_ref) => ChatMessage::user_with_image(text, image_ref),
            None => ChatMessage::user_text(text),
        }],
        temperature: 0.0,
    };
    mllm.record(
        RequestRole::PseudoCot,
        &request(
            &mllm.model,
            prompts::render_pseudo_cot(&sample.question, &sample.ground_truth),
            Some(&sample.image_ref),
        ),
        &draft,
    )
    .unwrap();
    mllm.record(
        RequestRole::Description,
        &request(
            &mllm.model,
            prompts::render_description(&sample.question, &draft),
            Some(&sample.image_ref),
        ),
        &description,
    )
    .unwrap();
    reasoning
        .record(
            RequestRole::Reasoning,
            &request(
                &reasoning.model,
                prompts::render_reasoning(&description, &sample.question),
                None,
            ),
            trace,
        )
        .unwrap();
}

#[test]
fn acceptance_08_pipeline_determinism_and_retention() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mllm = ReplayBackend::new(dir.path().join("mllm"), "vision-replay");
    let reasoning = ReplayBackend::new(dir.path().join("reason"), "reason-replay");

    // Five candidates: exactly three answer-matching, well-formed reasonings.
    let samples: Vec<VqaSample> = (0..5)
        .map(|i| VqaSample {
            image_ref: format!("img://{i}"),
            question: format!("question {i}"),
            ground_truth: format!("{}", i + 1),
            source_tag: "fixture".into(),
        })
        .collect();
    let traces = [
        "<think>count gives 1</think><answer>1</answer>", // kept
        "<think>clearly 2</think><answer>7</answer>",     // answer mismatch
        "<think>hmm, 3 it is</think><answer>3</answer>",  // kept
        "no tags in sight: 4",                            // malformed
        "<think>so 5</think><answer>5</answer>",          // kept
    ];
    for (sample, trace) in samples.iter().zip(traces) {
        record_chain(&mllm, &reasoning, sample, trace);
    }

    let ctx = PipelineContext {
        mllm: GenBackend::Replay(mllm),
        reasoning: GenBackend::Replay(reasoning),
        rewrites: default_rewrites(),
        filters: FilterConfig::default(),
        temperature: 0.0,
        timestamp: "1970-01-01T00:00:00Z".into(),
        max_in_flight: 4,
    };
    let out_a = dir.path().join("a.jsonl");
    let out_b = dir.path().join("b.jsonl");
    let records_a = run_pipeline(&ctx, &samples);
    let manifest_a = assemble_dataset(&records_a, &out_a, None).unwrap();
    let records_b = run_pipeline(&ctx, &samples);
    let manifest_b = assemble_dataset(&records_b, &out_b, None).unwrap();

    assert_eq!(manifest_a.kept, 3, "manifest: {manifest_a:?}");
    assert_eq!(manifest_a.dropped, 2, "manifest: {manifest_a:?}");
    assert_eq!(manifest_a, manifest_b);
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap(),
        "two pipeline runs must be byte-identical"
    );
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(1), "pipeline determinism");
    println!(
        "acceptance 08 (pipeline determinism and retention): PASS: manifest {{kept: 3, \
         dropped: 2}}, byte-identical reruns, {elapsed:?}"
    );
}

#[test]
fn acceptance_09_marker_statistics() {
    let start = Instant::now();
    // Hand-counted corpus. Per document: Wait, Hmm, Mistake, Alternatively, Check.
    let doc_a = "Wait, wait. Hmm, that step hides a mistake. Check the diagram again."; // 2,1,1,0,1
    let doc_b = "Alternatively, verify each case. No mistakes... checked and double-checked."; // 0,0,0,1,0
    let doc_c = "HMM. WAIT: is the base angle right? Alternatively check the other triangle."; // 1,1,0,1,1
    let counts = marker_stats([doc_a, doc_b, doc_c], &DEFAULT_MARKERS);
    assert_eq!(counts["Wait"], 3);
    assert_eq!(counts["Hmm"], 2);
    assert_eq!(counts["Mistake"], 1, "plural/inflected forms must not count");
    assert_eq!(counts["Alternatively"], 2);
    assert_eq!(counts["Check"], 2, "'checked' must not count");

    // Additivity over corpus splits, exactly.
    let joint = marker_stats([doc_a, doc_b, doc_c], &DEFAULT_MARKERS);
    let left = marker_stats([doc_a], &DEFAULT_MARKERS);
    let right = marker_stats([doc_b, doc_c], &DEFAULT_MARKERS);
    for marker in DEFAULT_MARKERS {
        assert_eq!(joint[marker], left[marker] + right[marker]);
    }

    // Reflective reasoning dominates step-list phrasing in total marker mass.
    let step_list = [
        "Step 1: read the chart. Step 2: compare bars. Step 3: report the tallest.",
        "Step 1: apply the formula. Step 2: substitute. Step 3: simplify.",
    ];
    let reflective_total: usize = counts.values().sum();
    let step_total: usize = marker_stats(step_list.iter().copied(), &DEFAULT_MARKERS)
        .values()
        .sum();
    assert!(reflective_total > step_total);
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(1), "marker statistics");
    println!(
        "acceptance 09 (marker statistics): PASS: exact hand counts, additive over splits, \
         reflective {reflective_total} > step-list {step_total}, {elapsed:?}"
    );
}

#[test]
fn acceptance_10_determinism_umbrella() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);
    let read = |p: &std::path::Path| std::fs::read(p).unwrap();

    // Short schedules keep this criterion quick; determinism is independent
    // of run length.
    let mut compared = Vec::new();
    for (label, make) in [
        (
            "zero",
            Box::new(|| {
                let mut c = RunConfig::default_for(Mode::Zero);
                c.schedule = Some(thinkrl::config::ScheduleSection {
                    stages: vec![StageTable {
                        max_len: 64,
                        group_size: 16,
                        steps: 12,
                    }],
                });
                c
            }) as Box<dyn Fn() -> RunConfig>,
        ),
        (
            "ptst",
            Box::new(|| {
                let mut c = RunConfig::default_for(Mode::Ptst);
                c.schedule = Some(thinkrl::config::ScheduleSection {
                    stages: vec![
                        StageTable {
                            max_len: 24,
                            group_size: 6,
                            steps: 8,
                        },
                        StageTable {
                            max_len: 48,
                            group_size: 4,
                            steps: 8,
                        },
                    ],
                });
                c
            }),
        ),
    ] {
        // Identical config both times; only the worker count differs, and the
        // artifacts are written to the same paths and compared as bytes.
        let mut artifacts = Vec::new();
        for workers in [1usize, 3usize] {
            let mut config = make();
            config.workers = workers;
            config.paths.metrics_out = Some(path(&format!("{label}_metrics.jsonl")));
            config.paths.checkpoint_out = Some(path(&format!("{label}_policy.ckpt")));
            run(&config).unwrap();
            artifacts.push((
                read(&path(&format!("{label}_metrics.jsonl"))),
                read(&path(&format!("{label}_policy.ckpt"))),
            ));
        }
        assert_eq!(
            artifacts[0].0, artifacts[1].0,
            "{label}: metrics must be byte-identical across worker counts"
        );
        assert_eq!(
            artifacts[0].1, artifacts[1].1,
            "{label}: checkpoints must be byte-identical across worker counts"
        );
        compared.push(label);
    }

    // Dynamics: one seed, tiny stages.
    {
        let mut outputs = Vec::new();
        for workers in [1usize, 2usize] {
            let mut config = RunConfig::default_for(Mode::Dynamics);
            config.workers = workers;
            config.dynamics.seeds = 1;
            config.dynamics.eval_rollouts_per_question = 4;
            config.dynamics.boundary_window = 3;
            config.schedule = Some(thinkrl::config::ScheduleSection {
                stages: vec![
                    StageTable {
                        max_len: 24,
                        group_size: 8,
                        steps: 6,
                    },
                    StageTable {
                        max_len: 48,
                        group_size: 4,
                        steps: 6,
                    },
                ],
            });
            config.paths.summary_out = Some(path("dyn_summary.csv"));
            run(&config).unwrap();
            outputs.push(read(&path("dyn_summary.csv")));
        }
        assert_eq!(outputs[0], outputs[1], "dynamics summaries must be byte-identical");
        compared.push("dynamics");
    }

    // Pipeline: replay fixtures, two worker counts.
    {
        let fixtures_mllm = ReplayBackend::new(path("fixtures/mllm"), "replay-model");
        let fixtures_reason = ReplayBackend::new(path("fixtures/reason"), "replay-model");
        let samples: Vec<VqaSample> = (0..4)
            .map(|i| VqaSample {
                image_ref: format!("img://{i}"),
                question: format!("q{i}"),
                ground_truth: "1".into(),
                source_tag: "t".into(),
            })
            .collect();
        for sample in &samples {
            record_chain(
                &fixtures_mllm,
                &fixtures_reason,
                sample,
                "<think>ok</think><answer>1</answer>",
            );
        }
        let input = path("samples.jsonl");
        let lines: Vec<String> = samples
            .iter()
            .map(|s| serde_json::to_string(s).unwrap())
            .collect();
        std::fs::write(&input, lines.join("\n") + "\n").unwrap();

        let mut outputs = Vec::new();
        for workers in [1usize, 4usize] {
            let mut config = RunConfig::default_for(Mode::Pipeline);
            config.pipeline.max_in_flight = workers;
            config.pipeline.mllm.fixture_dir = Some(path("fixtures/mllm"));
            config.pipeline.reasoning.fixture_dir = Some(path("fixtures/reason"));
            config.paths.dataset_in = Some(input.clone());
            config.paths.dataset_out = Some(path("dataset.jsonl"));
            run(&config).unwrap();
            outputs.push((
                read(&path("dataset.jsonl")),
                read(&thinkrl::pipeline::manifest_path(&path("dataset.jsonl"))),
            ));
        }
        assert_eq!(outputs[0].0, outputs[1].0, "datasets must be byte-identical");
        assert_eq!(outputs[0].1, outputs[1].1, "manifests must be byte-identical");
        compared.push("pipeline");
    }

    // Stats: same input twice.
    {
        let input = path("corpus.txt");
        std::fs::write(&input, "Wait, hmm.\ncheck Check CHECK\n").unwrap();
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let mut config = RunConfig::default_for(Mode::Stats);
            config.paths.dataset_in = Some(input.clone());
            config.paths.summary_out = Some(path("stats.csv"));
            run(&config).unwrap();
            outputs.push(read(&path("stats.csv")));
        }
        assert_eq!(outputs[0], outputs[1], "stats summaries must be byte-identical");
        compared.push("stats");
    }

    println!(
        "acceptance 10 (determinism umbrella): PASS: byte-identical artifacts across reruns \
         and worker counts for modes {compared:?}"
    );
}
