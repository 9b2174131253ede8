//! Staged length-cap training from a cold-start policy on the length-profile
//! oracle, with checkpoint save/load at the end.
//!
//! ```bash
//! cargo run --release -p thinkrl --example ptst_training
//! ```

use thinkrl::config::{Mode, RunConfig};
use thinkrl::grpo::Trainer;
use thinkrl::policy::{CheckpointMeta, TabularPolicy};
use thinkrl::ptst::{default_schedule, QuestionSource};
use thinkrl::run::{build_initial_policy, evaluate_accuracy};
use thinkrl::{run_ptst, Vocabulary};

fn main() {
    let config = RunConfig::default_for(Mode::Ptst).resolved();
    let env = config.env.clone().unwrap();
    let vocab = Vocabulary::new(config.train.num_fillers);
    let schedule = default_schedule(config.train.scale_divisor).unwrap();
    for stage in schedule.stages() {
        println!(
            "stage {}: cap {} tokens, groups of {}, {} steps",
            stage.index, stage.max_len, stage.group_size, stage.steps
        );
    }

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

    println!("\nstep  stage  mean_reward  mean_len  mean_think_len  kl");
    run_ptst(&mut trainer, &schedule, &source, |m| {
        if (m.step + 1) % 20 == 0 || m.step == 0 {
            println!(
                "{:>4}  {:>5}  {:>11.3}  {:>8.1}  {:>14.1}  {:.4}",
                m.step + 1,
                m.stage,
                m.mean_reward,
                m.mean_len,
                m.mean_think_len,
                m.kl
            );
        }
        Ok(())
    })
    .unwrap();

    let final_cap = schedule.stages().last().unwrap().max_len;
    let accuracy = evaluate_accuracy(trainer.policy(), &vocab, &env, final_cap, 32, 99);
    println!("\nfinal accuracy at cap {final_cap}: {accuracy:.3}");

    // Round-trip the trained policy through the checkpoint format.
    let dir = std::env::temp_dir().join("thinkrl_ptst_example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("policy.ckpt");
    trainer
        .policy()
        .save(&path, CheckpointMeta { seed: config.seed, config_digest: config.digest() })
        .unwrap();
    let (reloaded, meta) = TabularPolicy::load(&path).unwrap();
    assert_eq!(reloaded.logits(), trainer.policy().logits());
    println!("checkpoint round trip ok ({} bytes, seed {})", std::fs::metadata(&path).unwrap().len(), meta.seed);
}
