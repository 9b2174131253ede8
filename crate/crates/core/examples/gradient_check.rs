//! Verify the analytic objective gradient against central finite differences
//! on random rollout groups and parameter points.
//!
//! ```bash
//! cargo run --release -p thinkrl --example gradient_check
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thinkrl::grpo::{group_objective, objective_gradient, GrpoHyperParams, Rollout, RolloutGroup};
use thinkrl::policy::TabularPolicy;
use thinkrl::Question;

fn random_policy(num_keys: usize, vocab_size: usize, seed: u64) -> TabularPolicy {
    let mut policy = TabularPolicy::new(num_keys, vocab_size, vocab_size - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..policy.num_params() {
        *policy.logit_mut(i) = rng.gen_range(-0.8..0.8);
    }
    policy
}

fn main() {
    let hp = GrpoHyperParams::default();
    let mut worst: f64 = 0.0;
    for trial in 0..10u64 {
        let old = random_policy(3, 8, 10 + trial);
        let reference = random_policy(3, 8, 20 + trial);
        let mut theta = random_policy(3, 8, 30 + trial);
        let mut rng = ChaCha8Rng::seed_from_u64(40 + trial);
        let key = (trial % 3) as usize;
        let rollouts: Vec<Rollout> = (0..6)
            .map(|_| {
                let tokens = old.sample(key, 12, &mut rng);
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
                prompt_text: format!("q{key}"),
                ground_truth: "0".into(),
            },
            rollouts,
        )
        .unwrap();

        let mut analytic = vec![0.0; theta.num_params()];
        objective_gradient(&group, &theta, &hp, &mut analytic).unwrap();

        let h = 1e-5;
        let mut max_err: f64 = 0.0;
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
            max_err = max_err.max(err);
        }
        println!("trial {trial}: {} params checked, max error {max_err:.3e}", theta.num_params());
        worst = worst.max(max_err);
    }
    println!("\nworst error across trials: {worst:.3e} (tolerance 1e-4)");
    assert!(worst < 1e-4);
    println!("analytic gradient matches finite differences.");
}
