//! Tag parsing and the three reward functions on a handful of outputs.
//!
//! ```bash
//! cargo run --release -p thinkrl --example reward_functions
//! ```

use thinkrl::reward::{
    format_reward, parse_tagged, reward_hfrrf, reward_zero, AnswerMatchRule,
};

fn main() {
    let ground_truth = "5";
    let rule = AnswerMatchRule::default_for(ground_truth);
    let outputs = [
        "<think> 2 + 3 makes 5 </think> <answer> 5 </answer>",
        "<think> hmm wait </think> <answer> 6 </answer>",
        "the answer is 5",
        "<answer>5</answer><think>backwards</think>",
        "<think> truncated mid-tag </thin",
        "  <think>with leading space</think>\n<answer>5.0000001</answer> ",
    ];

    println!("ground truth: {ground_truth}  (match rule: {rule:?})\n");
    for raw in outputs {
        let parse = match parse_tagged(raw) {
            Ok(t) => format!("ok  think={:?} answer={:?}", t.think_text.trim(), t.answer_text.trim()),
            Err(v) => format!("violation: {v}"),
        };
        println!("output : {raw:?}");
        println!("parse  : {parse}");
        println!(
            "rewards: format={} zero={} hfrrf={}\n",
            format_reward(raw),
            reward_zero(raw, ground_truth, &rule),
            reward_hfrrf(raw, ground_truth, &rule),
        );
    }
}
