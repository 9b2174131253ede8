//! Synthetic question sources and correctness oracles.
//!
//! Two built-in environments:
//!
//! - `ARITH`: single-digit addition mod 10. Correctness is deterministic, so
//!   it demonstrates genuine learning (the tabular policy can memorize the
//!   key-to-digit map).
//! - `ORACLE`: content-free questions whose acceptance probability decays
//!   with think length. It encodes the premise that correct reasoning
//!   concentrates on shorter thought chains, which makes the benefit of a
//!   staged length schedule observable at desk scale.

use crate::reward::{AnswerMatchRule, TaggedOutput};
use crate::rngs::{domain, stream};
use crate::vocab::Vocabulary;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("unknown environment name {0:?} (expected \"arith\" or \"oracle\")")]
    UnknownEnv(String),
    #[error("invalid oracle profile: {0}")]
    BadProfile(String),
}

/// One question: a prompt with a canonical ground-truth answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub key: usize,
    pub prompt_text: String,
    pub ground_truth: String,
}

/// Length-dependent acceptance profile for the ORACLE environment: a correct
/// answer is accepted with probability `p_short` while the think length sits
/// inside the short band, decaying linearly to `p_long` at `ramp_end` and
/// staying there beyond it.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleProfile {
    #[serde(default = "profile_defaults::short_band")]
    pub short_band: (usize, usize),
    #[serde(default = "profile_defaults::p_short")]
    pub p_short: f64,
    #[serde(default = "profile_defaults::p_long")]
    pub p_long: f64,
    #[serde(default = "profile_defaults::ramp_end")]
    pub ramp_end: usize,
}

mod profile_defaults {
    pub fn short_band() -> (usize, usize) {
        (0, 16)
    }
    pub fn p_short() -> f64 {
        0.8
    }
    pub fn p_long() -> f64 {
        0.2
    }
    pub fn ramp_end() -> usize {
        48
    }
}

impl Default for OracleProfile {
    fn default() -> Self {
        Self {
            short_band: profile_defaults::short_band(),
            p_short: profile_defaults::p_short(),
            p_long: profile_defaults::p_long(),
            ramp_end: profile_defaults::ramp_end(),
        }
    }
}

impl OracleProfile {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(0.0..=1.0).contains(&self.p_short) || !(0.0..=1.0).contains(&self.p_long) {
            return Err(EnvError::BadProfile("probabilities must lie in [0, 1]".into()));
        }
        if self.p_long >= self.p_short {
            return Err(EnvError::BadProfile("p_long must be < p_short".into()));
        }
        if self.short_band.0 > self.short_band.1 {
            return Err(EnvError::BadProfile("short band must be a valid interval".into()));
        }
        if self.short_band.1 >= self.ramp_end {
            return Err(EnvError::BadProfile("ramp must extend past the short band".into()));
        }
        Ok(())
    }

    /// Acceptance probability at a given think length.
    pub fn acceptance(&self, think_len: usize) -> f64 {
        let (_, band_hi) = self.short_band;
        if think_len <= band_hi {
            self.p_short
        } else if think_len < self.ramp_end {
            let t = (think_len - band_hi) as f64 / (self.ramp_end - band_hi) as f64;
            self.p_short + t * (self.p_long - self.p_short)
        } else {
            self.p_long
        }
    }
}

fn default_env_seed() -> u64 {
    11
}

fn default_oracle_keys() -> usize {
    8
}

fn default_digit_hi() -> u8 {
    9
}

/// Environment specification, loadable from the run config.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvSpec {
    Arith {
        #[serde(default = "default_env_seed")]
        seed: u64,
        /// Inclusive digit range for the operands.
        #[serde(default)]
        digit_lo: u8,
        #[serde(default = "default_digit_hi")]
        digit_hi: u8,
    },
    Oracle {
        #[serde(default = "default_oracle_keys")]
        keys: usize,
        #[serde(default = "default_env_seed")]
        seed: u64,
        #[serde(default)]
        profile: OracleProfile,
    },
}

impl EnvSpec {
    /// ARITH over the full single-digit range.
    pub fn arith(seed: u64) -> Self {
        EnvSpec::Arith {
            seed,
            digit_lo: 0,
            digit_hi: default_digit_hi(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            EnvSpec::Arith { seed, .. } => *seed,
            EnvSpec::Oracle { seed, .. } => *seed,
        }
    }

    /// Number of distinct question keys, i.e. the policy's key cardinality.
    /// ARITH keys are always laid out as 10a + b over the full digit grid so
    /// checkpoints stay compatible across digit ranges.
    pub fn num_keys(&self) -> usize {
        match self {
            EnvSpec::Arith { .. } => 100,
            EnvSpec::Oracle { keys, .. } => *keys,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            EnvSpec::Arith { digit_lo, digit_hi, .. } => {
                if digit_lo > digit_hi || *digit_hi > 9 {
                    return Err(EnvError::BadProfile(format!(
                        "digit range {digit_lo}..={digit_hi} must satisfy lo <= hi <= 9"
                    )));
                }
                Ok(())
            }
            EnvSpec::Oracle { keys, profile, .. } => {
                if *keys == 0 {
                    return Err(EnvError::BadProfile("oracle needs at least one key".into()));
                }
                profile.validate()
            }
        }
    }
}

fn oracle_truth(seed: u64, key: usize) -> String {
    let mut rng = stream(seed, domain::QGEN, &[key as u64]);
    rng.gen_range(0..10u8).to_string()
}

/// Generate `n` questions, deterministically in the environment spec.
///
/// ARITH draws (a, b) digit pairs per index; key = 10a + b and the ground
/// truth is (a + b) mod 10. ORACLE cycles keys 0..K-1, each with a fixed
/// digit answer derived from the environment seed.
pub fn gen_questions(spec: &EnvSpec, n: usize) -> Vec<Question> {
    match spec {
        EnvSpec::Arith {
            seed,
            digit_lo,
            digit_hi,
        } => (0..n)
            .map(|i| {
                let mut rng = stream(*seed, domain::QGEN, &[i as u64]);
                let a: u8 = rng.gen_range(*digit_lo..=*digit_hi);
                let b: u8 = rng.gen_range(*digit_lo..=*digit_hi);
                Question {
                    key: 10 * a as usize + b as usize,
                    prompt_text: format!("{a}+{b}=?"),
                    ground_truth: ((a + b) % 10).to_string(),
                }
            })
            .collect(),
        EnvSpec::Oracle { keys, seed, .. } => (0..n)
            .map(|i| {
                let key = i % keys;
                Question {
                    key,
                    prompt_text: format!("question {key}"),
                    ground_truth: oracle_truth(*seed, key),
                }
            })
            .collect(),
    }
}

/// Every distinct question the environment can pose, one per key.
pub fn question_pool(spec: &EnvSpec) -> Vec<Question> {
    match spec {
        EnvSpec::Arith {
            digit_lo, digit_hi, ..
        } => (*digit_lo..=*digit_hi)
            .flat_map(|a| {
                (*digit_lo..=*digit_hi).map(move |b| Question {
                    key: 10 * a as usize + b as usize,
                    prompt_text: format!("{a}+{b}=?"),
                    ground_truth: ((a + b) % 10).to_string(),
                })
            })
            .collect(),
        EnvSpec::Oracle { keys, seed, .. } => (0..*keys)
            .map(|key| Question {
                key,
                prompt_text: format!("question {key}"),
                ground_truth: oracle_truth(*seed, key),
            })
            .collect(),
    }
}

/// Number of vocabulary tokens in the think text of a parsed output.
pub fn think_length(parsed: &TaggedOutput, vocab: &Vocabulary) -> usize {
    vocab.tokenize(&parsed.think_text).len()
}

/// Direct-form oracle check: answer must match the ground truth, then a
/// Bernoulli draw at the profile's acceptance probability for the observed
/// think length decides acceptance.
pub fn oracle_correct(
    profile: &OracleProfile,
    question: &Question,
    parsed: &TaggedOutput,
    vocab: &Vocabulary,
    rng: &mut impl Rng,
) -> bool {
    let rule = AnswerMatchRule::default_for(&question.ground_truth);
    if !rule.check(&parsed.answer_text, &question.ground_truth).matched {
        return false;
    }
    let len = think_length(parsed, vocab);
    rng.gen::<f64>() < profile.acceptance(len)
}

/// Identifies one rollout so oracle draws can be keyed by what the rollout
/// *is* rather than when it is scored.
#[derive(Clone, Copy, Debug)]
pub struct RolloutId {
    pub step: u64,
    pub question_index: u64,
    pub rollout_index: u64,
}

/// Result-correctness judgement used by the trainer.
///
/// `think_len` is `None` when the output had no parsable think block (the
/// zero-composite fallback path); the ORACLE environment then applies its
/// floor probability `p_long`, since there is no reasoning to accept.
pub fn judge_result(
    spec: &EnvSpec,
    question: &Question,
    answer_text: &str,
    think_len: Option<usize>,
    id: RolloutId,
) -> bool {
    let rule = AnswerMatchRule::default_for(&question.ground_truth);
    let matched = rule.check(answer_text, &question.ground_truth).matched;
    match spec {
        EnvSpec::Arith { .. } => matched,
        EnvSpec::Oracle { seed, profile, .. } => {
            if !matched {
                return false;
            }
            let p = match think_len {
                Some(len) => profile.acceptance(len),
                None => profile.p_long,
            };
            let mut rng = stream(
                *seed,
                domain::ORACLE,
                &[question.key as u64, id.step, id.question_index, id.rollout_index],
            );
            rng.gen::<f64>() < p
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::parse_tagged;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn arith_questions_are_deterministic() {
        let spec = EnvSpec::arith(3);
        let a = gen_questions(&spec, 3);
        let b = gen_questions(&spec, 3);
        assert_eq!(a, b);
        for q in &a {
            let (ta, tb) = (q.key / 10, q.key % 10);
            assert_eq!(q.prompt_text, format!("{ta}+{tb}=?"));
            assert_eq!(q.ground_truth, ((ta + tb) % 10).to_string());
        }
    }

    #[test]
    fn arith_seven_plus_five() {
        let spec = EnvSpec::arith(0);
        let q = question_pool(&spec)
            .into_iter()
            .find(|q| q.key == 75)
            .unwrap();
        assert_eq!(q.ground_truth, "2");
    }

    #[test]
    fn oracle_pool_has_fixed_digit_answers() {
        let spec = EnvSpec::Oracle {
            keys: 4,
            seed: 11,
            profile: OracleProfile::default(),
        };
        let pool = question_pool(&spec);
        assert_eq!(pool.len(), 4);
        for (i, q) in pool.iter().enumerate() {
            assert_eq!(q.key, i);
            assert!(q.ground_truth.len() == 1 && q.ground_truth.chars().all(|c| c.is_ascii_digit()));
        }
        // Ground truths are stable regardless of how many questions are drawn.
        let many = gen_questions(&spec, 40);
        for q in &many {
            assert_eq!(q.ground_truth, pool[q.key].ground_truth);
        }
    }

    #[test]
    fn unknown_env_name_is_rejected() {
        let parsed: Result<EnvSpec, _> = toml::from_str("name = \"maze\"\nseed = 1");
        assert!(parsed.is_err());
    }

    #[test]
    fn arith_digit_range_restricts_the_pool() {
        let spec: EnvSpec = toml::from_str("name = \"arith\"\ndigit_lo = 2\ndigit_hi = 4").unwrap();
        spec.validate().unwrap();
        let pool = question_pool(&spec);
        assert_eq!(pool.len(), 9);
        assert!(pool.iter().all(|q| (20..=44).contains(&q.key)));
        for q in gen_questions(&spec, 50) {
            let (a, b) = (q.key / 10, q.key % 10);
            assert!((2..=4).contains(&a) && (2..=4).contains(&b));
        }
        let bad: EnvSpec = toml::from_str("name = \"arith\"\ndigit_lo = 5\ndigit_hi = 2").unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn think_length_counts_tokens() {
        let vocab = Vocabulary::standard();
        let parsed = parse_tagged("<think></think><answer>5</answer>").unwrap();
        assert_eq!(think_length(&parsed, &vocab), 0);
        let parsed = parse_tagged("<think> hmm so thus wait hmm </think><answer>5</answer>").unwrap();
        assert_eq!(think_length(&parsed, &vocab), 5);
    }

    #[test]
    fn profile_shape() {
        let p = OracleProfile::default();
        p.validate().unwrap();
        assert_eq!(p.acceptance(0), 0.8);
        assert_eq!(p.acceptance(16), 0.8);
        assert!((p.acceptance(32) - 0.5).abs() < 1e-12);
        assert_eq!(p.acceptance(48), 0.2);
        assert_eq!(p.acceptance(500), 0.2);
        let mut bad = p;
        bad.p_long = 0.9;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn oracle_rejects_wrong_answers_always() {
        let profile = OracleProfile::default();
        let vocab = Vocabulary::standard();
        let q = Question {
            key: 0,
            prompt_text: "question 0".into(),
            ground_truth: "5".into(),
        };
        let parsed = parse_tagged("<think> hmm </think><answer>6</answer>").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(!oracle_correct(&profile, &q, &parsed, &vocab, &mut rng));
        }
    }

    #[test]
    fn degenerate_profile_always_accepts_short_correct() {
        let profile = OracleProfile {
            p_short: 1.0,
            p_long: 0.0,
            ..OracleProfile::default()
        };
        let vocab = Vocabulary::standard();
        let q = Question {
            key: 0,
            prompt_text: String::new(),
            ground_truth: "5".into(),
        };
        let parsed = parse_tagged("<think> hmm </think><answer>5</answer>").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            assert!(oracle_correct(&profile, &q, &parsed, &vocab, &mut rng));
        }
    }

    #[test]
    fn oracle_acceptance_monte_carlo() {
        // Empirical acceptance at think length 8 must match p_short = 0.8
        // within +/- 0.01 over 1e5 trials.
        let profile = OracleProfile::default();
        let vocab = Vocabulary::standard();
        let q = Question {
            key: 3,
            prompt_text: String::new(),
            ground_truth: "7".into(),
        };
        let raw = format!("<think> {} </think><answer>7</answer>", "hmm ".repeat(8).trim_end());
        let parsed = parse_tagged(&raw).unwrap();
        assert_eq!(think_length(&parsed, &vocab), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let n = 100_000;
        let mut accepted = 0;
        for _ in 0..n {
            if oracle_correct(&profile, &q, &parsed, &vocab, &mut rng) {
                accepted += 1;
            }
        }
        let freq = accepted as f64 / n as f64;
        assert!((freq - 0.8).abs() < 0.01, "acceptance {freq}");
    }

    #[test]
    fn oracle_acceptance_nonincreasing_in_length() {
        let profile = OracleProfile::default();
        let vocab = Vocabulary::standard();
        let q = Question {
            key: 1,
            prompt_text: String::new(),
            ground_truth: "4".into(),
        };
        let lengths = [0usize, 8, 20, 32, 44, 60, 120];
        let mut prev = f64::INFINITY;
        for &len in &lengths {
            let think = "so ".repeat(len);
            let raw = format!("<think> {} </think><answer>4</answer>", think.trim_end());
            let parsed = parse_tagged(&raw).unwrap();
            assert_eq!(think_length(&parsed, &vocab), len);
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let n = 100_000;
            let mut acc = 0;
            for _ in 0..n {
                if oracle_correct(&profile, &q, &parsed, &vocab, &mut rng) {
                    acc += 1;
                }
            }
            let freq = acc as f64 / n as f64;
            assert!(
                freq <= prev + 0.01,
                "acceptance must be nonincreasing: {freq} after {prev} at len {len}"
            );
            prev = freq;
        }
    }

    #[test]
    fn judge_result_is_keyed_not_scheduled() {
        let spec = EnvSpec::Oracle {
            keys: 2,
            seed: 5,
            profile: OracleProfile::default(),
        };
        let q = &question_pool(&spec)[1];
        let id = RolloutId {
            step: 12,
            question_index: 0,
            rollout_index: 3,
        };
        let a = judge_result(&spec, q, &q.ground_truth, Some(30), id);
        let b = judge_result(&spec, q, &q.ground_truth, Some(30), id);
        assert_eq!(a, b);
    }
}
