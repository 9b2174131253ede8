//! Paired comparison: staged length caps versus a fixed long cap at matched
//! per-step token budget, from the same overthinking cold start.
//!
//! The staged arm compresses thought length early (truncation pressure plus
//! the oracle's short-length preference), then relaxes the cap; realized
//! output length steps up at the boundary while accuracy keeps climbing. The
//! fixed-long arm never gets the compression phase and learns far more
//! slowly from its small groups.
//!
//! ```bash
//! cargo run --release -p thinkrl --example overthinking_dynamics
//! ```

use thinkrl::config::{Mode, RunConfig};
use thinkrl::run::dynamics_experiment;

fn main() {
    let mut config = RunConfig::default_for(Mode::Dynamics);
    config.dynamics.seeds = 2; // the acceptance suite runs the full 5-seed version
    let config = config.resolved();

    println!(
        "paired arms: staged 64x16 -> 128x8 (100+100 steps) vs fixed 256x4 (200 steps)\n\
         environment: length-profile oracle, hard formatting result reward\n"
    );
    let summary = dynamics_experiment(&config).unwrap();

    println!("seed  staged_acc  long_acc  len_before  len_after");
    for s in &summary.per_seed {
        println!(
            "{:>4}  {:>10.3}  {:>8.3}  {:>10.1}  {:>9.1}",
            s.seed_index, s.ptst_accuracy, s.long_accuracy, s.len_before_boundary, s.len_after_boundary
        );
    }
    println!(
        "\nmeans: staged {:.3} vs long {:.3} (margin {:+.3})",
        summary.ptst_mean_accuracy, summary.long_mean_accuracy, summary.margin
    );
    println!(
        "staged-arm mean output length across the stage boundary: {:.1} -> {:.1}",
        summary.mean_len_before, summary.mean_len_after
    );

    println!("\nstaged-arm trajectory (seed 0), every 20 steps:");
    println!("step  stage  mean_reward  mean_len  mean_think_len");
    for m in summary
        .ptst_metrics_first_seed
        .iter()
        .filter(|m| (m.step + 1) % 20 == 0 || m.step == 0)
    {
        println!(
            "{:>4}  {:>5}  {:>11.3}  {:>8.1}  {:>14.1}",
            m.step + 1,
            m.stage,
            m.mean_reward,
            m.mean_len,
            m.mean_think_len
        );
    }
}
