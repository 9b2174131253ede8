//! Self-reflection marker counts over two small corpora: one with natural
//! questioning/reflection phrasing, one written as a flat step list.
//!
//! ```bash
//! cargo run --release -p thinkrl --example marker_stats
//! ```

use thinkrl::pipeline::markers::{marker_stats, DEFAULT_MARKERS};

fn main() {
    let reflective = [
        "Hmm, the angle looks obtuse. Wait, the square marker means 90 degrees. \
         Let me check the other corner. Alternatively, use the angle sum. \
         That earlier guess was a mistake.",
        "So x = 12? Wait, check the units first. Hmm, the figure is in centimeters. \
         Alternatively, convert at the end. Check: 12 cm matches.",
    ];
    let step_list = [
        "Step 1: identify the triangle. Step 2: apply the angle sum. \
         Step 3: subtract from 180. Step 4: report the result.",
        "Step 1: read the axes. Step 2: locate the bar for 2019. Step 3: report its height.",
    ];

    println!("marker          reflective  step-list");
    let reflective_counts = marker_stats(reflective.iter().copied(), &DEFAULT_MARKERS);
    let step_counts = marker_stats(step_list.iter().copied(), &DEFAULT_MARKERS);
    let mut totals = (0usize, 0usize);
    for marker in DEFAULT_MARKERS {
        let (r, s) = (reflective_counts[marker], step_counts[marker]);
        totals.0 += r;
        totals.1 += s;
        println!("{marker:<14}  {r:>10}  {s:>9}");
    }
    println!("{:<14}  {:>10}  {:>9}", "total", totals.0, totals.1);
    assert!(totals.0 > totals.1, "reflective corpus must dominate");
    println!("\nreflective reasoning carries far more self-reflection markers.");
}
