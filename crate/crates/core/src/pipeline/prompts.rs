//! Prompt templates for the three pipeline generation calls. Slots are
//! literal `{...}` placeholders filled by exact string substitution.

/// First pass: ask a vision model for a draft that surfaces both the image
/// content and a step-level reasoning sketch.
pub const PSEUDO_COT_TEMPLATE: &str = "Given the image, the question:{question} and its ground truth answer:{ground truth}, produce a first-pass draft that includes a description of the image and a step-by-step reasoning process leading to the answer.";

/// Second pass: turn the draft into a detailed, self-contained description.
pub const DESCRIPTION_TEMPLATE: &str = "Given a image, a question:{question} and a thinking process:{thinking process}, provide a detailed description containing all the necessary details of the image to answer the question correctly.";

/// Third pass: hand the description to a text-only reasoning model.
pub const REASONING_TEMPLATE: &str = "Image description: {description}\n\nQuestion: {question}\n\nSolve the problem. Put your full reasoning inside <think> </think> tags and the final answer inside <answer> </answer> tags.";

pub fn render_pseudo_cot(question: &str, ground_truth: &str) -> String {
    PSEUDO_COT_TEMPLATE
        .replace("{question}", question)
        .replace("{ground truth}", ground_truth)
}

pub fn render_description(question: &str, thinking_process: &str) -> String {
    DESCRIPTION_TEMPLATE
        .replace("{question}", question)
        .replace("{thinking process}", thinking_process)
}

pub fn render_reasoning(description: &str, question: &str) -> String {
    REASONING_TEMPLATE
        .replace("{description}", description)
        .replace("{question}", question)
}
