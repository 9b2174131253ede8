//! The modality-bridging data pipeline end to end against replay fixtures:
//! pseudo-draft, description, reasoning, filtering, and dataset assembly.
//!
//! ```bash
//! cargo run --release -p thinkrl --example cot_pipeline
//! ```

use thinkrl::pipeline::backend::{ChatMessage, ChatRequest, GenBackend, ReplayBackend, RequestRole};
use thinkrl::pipeline::rules::{default_rewrites, FilterConfig};
use thinkrl::pipeline::{assemble_dataset, prompts, run_pipeline, PipelineContext, VqaSample};

/// Record the three fixture responses one sample needs.
fn record_chain(
    mllm: &ReplayBackend,
    reasoning: &ReplayBackend,
    sample: &VqaSample,
    draft: &str,
    description: &str,
    trace: &str,
) {
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
        draft,
    )
    .unwrap();
    mllm.record(
        RequestRole::Description,
        &request(
            &mllm.model,
            prompts::render_description(&sample.question, draft),
            Some(&sample.image_ref),
        ),
        description,
    )
    .unwrap();
    reasoning
        .record(
            RequestRole::Reasoning,
            &request(
                &reasoning.model,
                prompts::render_reasoning(description, &sample.question),
                None,
            ),
            trace,
        )
        .unwrap();
}

fn main() {
    let dir = std::env::temp_dir().join("thinkrl_pipeline_example");
    let _ = std::fs::remove_dir_all(&dir);
    let mllm = ReplayBackend::new(dir.join("fixtures/mllm"), "vision-replay");
    let reasoning = ReplayBackend::new(dir.join("fixtures/reasoning"), "reasoning-replay");

    let samples = vec![
        VqaSample {
            image_ref: "img://triangle".into(),
            question: "How many sides does the shape have?".into(),
            ground_truth: "3".into(),
            source_tag: "demo".into(),
        },
        VqaSample {
            image_ref: "img://dice".into(),
            question: "What is the total of the two dice?".into(),
            ground_truth: "9".into(),
            source_tag: "demo".into(),
        },
        VqaSample {
            image_ref: "img://clock".into(),
            question: "What hour does the clock show?".into(),
            ground_truth: "4".into(),
            source_tag: "demo".into(),
        },
    ];

    record_chain(
        &mllm,
        &reasoning,
        &samples[0],
        "The image shows a closed shape with three straight edges. Count: 1, 2, 3.",
        "A single triangle drawn in black outline on white; three straight sides, three vertices.",
        "<think>The image shows a triangle. Wait, let me check: the description says three straight \
         sides. So the count is 3. The answer is 3.</think><answer>3</answer>",
    );
    record_chain(
        &mllm,
        &reasoning,
        &samples[1],
        "Two dice: one shows 4, one shows 5. Sum is 9.",
        "Two white dice on a table, the left showing four pips and the right showing five pips.",
        "<think>Hmm, 4 + 5... that is 9. The answer is 8.</think><answer>9</answer>",
    );
    record_chain(
        &mllm,
        &reasoning,
        &samples[2],
        "An analog clock pointing at four.",
        "An analog clock whose hour hand points at 4 and minute hand at 12.",
        "<think>The hour hand is at 4, so it is 4 o'clock.</think><answer>5</answer>",
    );

    let ctx = PipelineContext {
        mllm: GenBackend::Replay(mllm),
        reasoning: GenBackend::Replay(reasoning),
        rewrites: default_rewrites(),
        filters: FilterConfig::default(),
        temperature: 0.0,
        timestamp: "1970-01-01T00:00:00Z".into(),
        max_in_flight: 4,
    };

    let records = run_pipeline(&ctx, &samples);
    for record in &records {
        println!(
            "{:<14} kept={} reason={:?}",
            record.image_ref,
            record.kept,
            record.drop_reason.map(|r| r.as_str())
        );
    }

    let out = dir.join("cold_start.jsonl");
    let manifest = assemble_dataset(&records, &out, None).unwrap();
    println!("\nmanifest: kept={} dropped={} by_reason={:?}", manifest.kept, manifest.dropped, manifest.dropped_by_reason);

    let kept_line = std::fs::read_to_string(&out).unwrap();
    println!("\nkept record (note the rewritten think text):\n{}", kept_line.lines().next().unwrap());
}
