//! RL from a (format-primed) uniform policy on single-digit addition with the
//! soft composite reward: watch tag formatting and answer accuracy emerge.
//!
//! ```bash
//! cargo run --release -p thinkrl --example zero_training
//! ```

use thinkrl::config::{Mode, RunConfig};
use thinkrl::env::question_pool;
use thinkrl::grpo::Trainer;
use thinkrl::ptst::{zero_schedule, QuestionSource};
use thinkrl::run::{build_initial_policy, measure_format_fraction, SYSTEM_PROMPT};
use thinkrl::Vocabulary;

fn main() {
    let config = RunConfig::default_for(Mode::Zero).resolved();
    let env = config.env.clone().unwrap();
    let vocab = Vocabulary::new(config.train.num_fillers);
    let schedule = zero_schedule(config.train.scale_divisor).unwrap();
    let cap = schedule.stages()[0].max_len;

    let policy = build_initial_policy(&config, &env, &vocab).unwrap();
    let initial = measure_format_fraction(&policy, &vocab, &env, cap, 16, 1);
    println!("system prompt attached to every question:\n  {SYSTEM_PROMPT}\n");
    println!("initial format-valid fraction (primed uniform policy): {initial:.4}\n");

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

    let mut pool = question_pool(&env);
    for q in &mut pool {
        q.prompt_text = format!("{SYSTEM_PROMPT}\n\n{}", q.prompt_text);
    }
    let source = QuestionSource::from_pool(pool, config.train.questions_per_step, config.seed);

    println!("step  mean_reward  mean_len  format_fraction");
    for step in 0..schedule.total_steps() {
        let stage = schedule.stage_at(step).unwrap();
        let batch = source.batch(step);
        let metrics = trainer.train_step(&batch, stage).unwrap();
        if (step + 1) % 25 == 0 {
            let fraction =
                measure_format_fraction(trainer.policy(), &vocab, &env, cap, 4, step as u64);
            println!(
                "{:>4}  {:>11.3}  {:>8.1}  {:>15.3}",
                step + 1,
                metrics.mean_reward,
                metrics.mean_len,
                fraction
            );
        }
    }

    let final_fraction = measure_format_fraction(trainer.policy(), &vocab, &env, cap, 32, 2);
    println!("\nfinal format-valid fraction: {final_fraction:.4}");
}
