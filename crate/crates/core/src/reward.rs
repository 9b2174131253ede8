//! Tag parsing and verifiable reward functions.
//!
//! Model outputs are expected to follow the grammar
//! `<think> ... </think> <answer> ... </answer>`: exactly one occurrence of
//! each tag, think block before answer block, and nothing but whitespace
//! outside and between the blocks. Three reward functions are built on that
//! parse:
//!
//! - [`format_reward`]: 1 iff the output parses.
//! - [`result_reward`]: 1 iff the answer matches the ground truth under an
//!   [`AnswerMatchRule`].
//! - [`reward_hfrrf`]: the hard composite, 1 only when *both* the format
//!   and the answer are right, 0 otherwise.
//! - [`reward_zero`]: the soft composite, an equally weighted sum of the
//!   format and result bits, so partial credit lands on 0.5.
//!
//! A parse failure is data, not a fault: it is reported as a
//! [`FormatViolation`] value naming the first violated rule.

use serde::{Deserialize, Serialize};

/// The four tag literals, in grammar order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tag {
    ThinkOpen,
    ThinkClose,
    AnswerOpen,
    AnswerClose,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::ThinkOpen, Tag::ThinkClose, Tag::AnswerOpen, Tag::AnswerClose];

    pub fn literal(self) -> &'static str {
        match self {
            Tag::ThinkOpen => crate::vocab::THINK_OPEN,
            Tag::ThinkClose => crate::vocab::THINK_CLOSE,
            Tag::AnswerOpen => crate::vocab::ANSWER_OPEN,
            Tag::AnswerClose => crate::vocab::ANSWER_CLOSE,
        }
    }
}

/// Where stray (non-whitespace) text was found.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    BeforeThink,
    BetweenBlocks,
    AfterAnswer,
}

/// First violated formatting rule. This is a value, not an error type: it
/// signals format reward 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FormatViolation {
    MissingTag(Tag),
    DuplicateTag(Tag),
    WrongOrder,
    StrayText(Segment),
}

impl std::fmt::Display for FormatViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FormatViolation::MissingTag(t) => write!(f, "missing tag {}", t.literal()),
            FormatViolation::DuplicateTag(t) => write!(f, "duplicate tag {}", t.literal()),
            FormatViolation::WrongOrder => write!(f, "tags out of order"),
            FormatViolation::StrayText(Segment::BeforeThink) => {
                write!(f, "stray text before think block")
            }
            FormatViolation::StrayText(Segment::BetweenBlocks) => {
                write!(f, "stray text between think and answer blocks")
            }
            FormatViolation::StrayText(Segment::AfterAnswer) => {
                write!(f, "stray text after answer block")
            }
        }
    }
}

/// A successfully parsed output. `think_text` and `answer_text` are exact
/// substrings of `raw`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedOutput {
    pub think_text: String,
    pub answer_text: String,
    pub raw: String,
}

fn find_all(haystack: &str, needle: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut start = 0;
    while let Some(pos) = haystack[start..].find(needle) {
        out.push(start + pos);
        start += pos + needle.len();
    }
    out
}

/// Parse an arbitrary string against the tag grammar. Total: never panics on
/// any input, including outputs truncated mid-tag by a length cap.
pub fn parse_tagged(raw: &str) -> Result<TaggedOutput, FormatViolation> {
    let mut positions = [0usize; 4];
    for (i, tag) in Tag::ALL.iter().enumerate() {
        let found = find_all(raw, tag.literal());
        match found.len() {
            0 => return Err(FormatViolation::MissingTag(*tag)),
            1 => positions[i] = found[0],
            _ => return Err(FormatViolation::DuplicateTag(*tag)),
        }
    }
    let [to, tc, ao, ac] = positions;
    if !(to < tc && tc < ao && ao < ac) {
        return Err(FormatViolation::WrongOrder);
    }
    let to_end = to + Tag::ThinkOpen.literal().len();
    let tc_end = tc + Tag::ThinkClose.literal().len();
    let ac_end = ac + Tag::AnswerClose.literal().len();
    if !raw[..to].trim().is_empty() {
        return Err(FormatViolation::StrayText(Segment::BeforeThink));
    }
    if !raw[tc_end..ao].trim().is_empty() {
        return Err(FormatViolation::StrayText(Segment::BetweenBlocks));
    }
    if !raw[ac_end..].trim().is_empty() {
        return Err(FormatViolation::StrayText(Segment::AfterAnswer));
    }
    Ok(TaggedOutput {
        think_text: raw[to_end..tc].to_string(),
        answer_text: raw[ao + Tag::AnswerOpen.literal().len()..ac].to_string(),
        raw: raw.to_string(),
    })
}

/// How answers are compared to ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AnswerMatchRule {
    ExactTrimmed,
    CaseFoldTrimmed,
    NumericTolerant { abs_tol: f64 },
}

/// Outcome of an answer comparison. `numeric_fallback` notes that a
/// NumericTolerant rule met non-numeric input and fell back to case-folded
/// comparison; it is informational, not a fault.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchOutcome {
    pub matched: bool,
    pub numeric_fallback: bool,
}

impl AnswerMatchRule {
    /// Default rule: numeric with 1e-6 tolerance when the ground truth is
    /// numeric, case-folded comparison otherwise.
    pub fn default_for(ground_truth: &str) -> Self {
        if ground_truth.trim().parse::<f64>().is_ok() {
            AnswerMatchRule::NumericTolerant { abs_tol: 1e-6 }
        } else {
            AnswerMatchRule::CaseFoldTrimmed
        }
    }

    pub fn check(&self, answer: &str, ground_truth: &str) -> MatchOutcome {
        let a = answer.trim();
        let g = ground_truth.trim();
        match self {
            AnswerMatchRule::ExactTrimmed => MatchOutcome {
                matched: a == g,
                numeric_fallback: false,
            },
            AnswerMatchRule::CaseFoldTrimmed => MatchOutcome {
                matched: a.to_lowercase() == g.to_lowercase(),
                numeric_fallback: false,
            },
            AnswerMatchRule::NumericTolerant { abs_tol } => {
                match (a.parse::<f64>(), g.parse::<f64>()) {
                    (Ok(x), Ok(y)) => MatchOutcome {
                        matched: (x - y).abs() <= *abs_tol,
                        numeric_fallback: false,
                    },
                    _ => MatchOutcome {
                        matched: a.to_lowercase() == g.to_lowercase(),
                        numeric_fallback: true,
                    },
                }
            }
        }
    }
}

/// 1.0 iff the raw output parses against the tag grammar.
pub fn format_reward(raw: &str) -> f64 {
    if parse_tagged(raw).is_ok() {
        1.0
    } else {
        0.0
    }
}

/// 1.0 iff the answer matches the ground truth under the rule.
pub fn result_reward(answer_text: &str, ground_truth: &str, rule: &AnswerMatchRule) -> f64 {
    if rule.check(answer_text, ground_truth).matched {
        1.0
    } else {
        0.0
    }
}

fn last_whitespace_token(raw: &str) -> &str {
    raw.split_whitespace().last().unwrap_or("")
}

/// Soft composite reward: 0.5 * format + 0.5 * result, always in {0, 0.5, 1}.
///
/// When the format is invalid there is no parsed answer, so the result half
/// is scored against the last whitespace-delimited token of the raw output,
/// giving partial credit a fair chance.
pub fn reward_zero(raw: &str, ground_truth: &str, rule: &AnswerMatchRule) -> f64 {
    match parse_tagged(raw) {
        Ok(parsed) => 0.5 + 0.5 * result_reward(&parsed.answer_text, ground_truth, rule),
        Err(_) => 0.5 * result_reward(last_whitespace_token(raw), ground_truth, rule),
    }
}

/// Hard formatting result reward: 1 only when the format is valid and the
/// parsed answer matches the ground truth; 0 otherwise.
pub fn reward_hfrrf(raw: &str, ground_truth: &str, rule: &AnswerMatchRule) -> f64 {
    match parse_tagged(raw) {
        Ok(parsed) => result_reward(&parsed.answer_text, ground_truth, rule),
        Err(_) => 0.0,
    }
}

/// Which reward function a run scores rollouts with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    ZeroComposite,
    Hfrrf,
}

/// Reward configuration. The weights apply only in `ZeroComposite` mode and
/// must sum to 1; `Hfrrf` ignores them.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub mode: RewardMode,
    #[serde(default = "half")]
    pub format_weight: f64,
    #[serde(default = "half")]
    pub result_weight: f64,
}

fn half() -> f64 {
    0.5
}

impl RewardSpec {
    pub fn zero() -> Self {
        Self {
            mode: RewardMode::ZeroComposite,
            format_weight: 0.5,
            result_weight: 0.5,
        }
    }

    pub fn hfrrf() -> Self {
        Self {
            mode: RewardMode::Hfrrf,
            format_weight: 0.5,
            result_weight: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.format_weight) || !(0.0..=1.0).contains(&self.result_weight)
        {
            return Err("reward weights must lie in [0, 1]".to_string());
        }
        if self.mode == RewardMode::ZeroComposite
            && (self.format_weight + self.result_weight - 1.0).abs() > 1e-12
        {
            return Err("zero-composite reward weights must sum to 1".to_string());
        }
        Ok(())
    }

    /// Combine precomputed format and result bits under this spec.
    pub fn combine(&self, format_bit: f64, result_bit: f64) -> f64 {
        match self.mode {
            RewardMode::ZeroComposite => {
                self.format_weight * format_bit + self.result_weight * result_bit
            }
            RewardMode::Hfrrf => {
                if format_bit == 1.0 && result_bit == 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn exact() -> AnswerMatchRule {
        AnswerMatchRule::ExactTrimmed
    }

    #[test]
    fn parse_minimal_well_formed() {
        let t = parse_tagged("<think>2+3</think><answer>5</answer>").unwrap();
        assert_eq!(t.think_text, "2+3");
        assert_eq!(t.answer_text, "5");
    }

    #[test]
    fn parse_rejects_wrong_order() {
        assert_eq!(
            parse_tagged("<answer>5</answer><think>x</think>"),
            Err(FormatViolation::WrongOrder)
        );
    }

    #[test]
    fn parse_rejects_truncated_tag() {
        assert_eq!(
            parse_tagged("<think>abc</thin"),
            Err(FormatViolation::MissingTag(Tag::ThinkClose))
        );
    }

    #[test]
    fn parse_rejects_duplicates_and_stray_text() {
        assert_eq!(
            parse_tagged("<think>a</think><think>b</think><answer>c</answer>"),
            Err(FormatViolation::DuplicateTag(Tag::ThinkOpen))
        );
        assert_eq!(
            parse_tagged("x <think>a</think><answer>b</answer>"),
            Err(FormatViolation::StrayText(Segment::BeforeThink))
        );
        assert_eq!(
            parse_tagged("<think>a</think> y <answer>b</answer>"),
            Err(FormatViolation::StrayText(Segment::BetweenBlocks))
        );
        assert_eq!(
            parse_tagged("<think>a</think><answer>b</answer> z"),
            Err(FormatViolation::StrayText(Segment::AfterAnswer))
        );
    }

    #[test]
    fn parse_allows_whitespace_between_blocks() {
        assert_eq!(format_reward("<think>a</think><answer>b</answer>"), 1.0);
        assert_eq!(format_reward("answer: b"), 0.0);
        assert_eq!(format_reward("  <think>a</think>\n<answer>b</answer> "), 1.0);
    }

    #[test]
    fn result_reward_rules() {
        assert_eq!(result_reward(" 5 ", "5", &exact()), 1.0);
        assert_eq!(
            result_reward("5.0001", "5", &AnswerMatchRule::NumericTolerant { abs_tol: 1e-3 }),
            1.0
        );
        assert_eq!(result_reward("6", "5", &exact()), 0.0);
    }

    #[test]
    fn numeric_rule_falls_back_to_casefold() {
        let rule = AnswerMatchRule::NumericTolerant { abs_tol: 1e-6 };
        let outcome = rule.check(" Paris ", "paris");
        assert!(outcome.matched);
        assert!(outcome.numeric_fallback);
        assert!(!rule.check("5.0", "5").numeric_fallback);
    }

    #[test]
    fn default_rule_selection() {
        assert_eq!(
            AnswerMatchRule::default_for("7"),
            AnswerMatchRule::NumericTolerant { abs_tol: 1e-6 }
        );
        assert_eq!(AnswerMatchRule::default_for("blue"), AnswerMatchRule::CaseFoldTrimmed);
    }

    #[test]
    fn reward_zero_levels() {
        let rule = exact();
        assert_eq!(reward_zero("<think>t</think><answer>5</answer>", "5", &rule), 1.0);
        assert_eq!(reward_zero("<think>t</think><answer>6</answer>", "5", &rule), 0.5);
        assert_eq!(reward_zero("garbage output", "5", &rule), 0.0);
        // Malformed output ending in the right token earns the result half.
        assert_eq!(reward_zero("no tags but 5", "5", &rule), 0.5);
    }

    #[test]
    fn reward_hfrrf_levels() {
        let rule = exact();
        assert_eq!(reward_hfrrf("<think>t</think><answer>5</answer>", "5", &rule), 1.0);
        assert_eq!(reward_hfrrf("the answer is 5", "5", &rule), 0.0);
        assert_eq!(reward_hfrrf("<think>t</think><answer>6</answer>", "5", &rule), 0.0);
    }

    #[test]
    fn reward_spec_validation() {
        assert!(RewardSpec::zero().validate().is_ok());
        assert!(RewardSpec::hfrrf().validate().is_ok());
        let bad = RewardSpec {
            mode: RewardMode::ZeroComposite,
            format_weight: 0.7,
            result_weight: 0.7,
        };
        assert!(bad.validate().is_err());
    }

    /// Random tag-soup generator used by the property tests below.
    fn random_soup(rng: &mut impl Rng) -> String {
        let pieces = [
            "<think>", "</think>", "<answer>", "</answer>", "5", "6", "hmm", " ", "\n", "é", "∂",
        ];
        let n = rng.gen_range(0..12);
        let mut s = String::new();
        for _ in 0..n {
            s.push_str(pieces[rng.gen_range(0..pieces.len())]);
            if rng.gen_bool(0.5) {
                s.push(' ');
            }
        }
        s
    }

    #[test]
    fn hfrrf_equals_format_and_result_on_generated_strings() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let rule = exact();
        let mut saw_valid = 0u32;
        for _ in 0..5000 {
            let raw = random_soup(&mut rng);
            let f = format_reward(&raw);
            let r = match parse_tagged(&raw) {
                Ok(p) => {
                    saw_valid += 1;
                    result_reward(&p.answer_text, "5", &rule)
                }
                Err(_) => 0.0,
            };
            let h = reward_hfrrf(&raw, "5", &rule);
            assert_eq!(h, f * r, "hfrrf must equal format AND result for {raw:?}");
            let z = reward_zero(&raw, "5", &rule);
            assert!(z == 0.0 || z == 0.5 || z == 1.0);
            // Pointwise bounds tying the hard and soft rewards together.
            assert!(h <= z + 0.5 + 1e-15);
            assert!(h >= 2.0 * z - 1.0 - 1e-15);
        }
        assert!(saw_valid > 0, "generator should produce some valid strings");
    }

    #[test]
    fn parse_is_total_on_arbitrary_strings() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let len = rng.gen_range(0..64);
            let s: String = (0..len)
                .map(|_| char::from_u32(rng.gen_range(1..0x2FF)).unwrap_or('x'))
                .collect();
            let _ = parse_tagged(&s);
        }
    }

    #[test]
    fn round_trip_for_tag_free_contents() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let words = ["hmm", "so", "3", "x y", "", " padded "];
        for _ in 0..200 {
            let t = words[rng.gen_range(0..words.len())];
            let a = words[rng.gen_range(0..words.len())];
            let raw = format!("<think>{t}</think><answer>{a}</answer>");
            let parsed = parse_tagged(&raw).unwrap();
            assert_eq!(parsed.think_text, t);
            assert_eq!(parsed.answer_text, a);
        }
    }
}
