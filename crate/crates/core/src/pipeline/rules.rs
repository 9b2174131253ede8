//! Rewrite and filter rules for pipeline post-processing.
//!
//! Rewrites are literal, order-sensitive replacements applied left to right
//! in file order; they clean up description-leakage phrasing in kept records.
//! Filters are conjunctive named predicates; the first failing filter names
//! the drop reason.
//!
//! Rule files are plain text. Rewrites use one `pattern => replacement` line
//! per rule; filters use `name: value` toggles. Lines starting with `#` are
//! comments.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("cannot read rule file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
}

/// One literal rewrite: `pattern => replacement`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewriteRule {
    pub pattern: String,
    pub replacement: String,
}

/// Default rewrites: map phrases that leak the intermediate description step
/// back into image-grounded phrasing.
pub fn default_rewrites() -> Vec<RewriteRule> {
    [
        ("the description says", "the image shows"),
        ("the description states", "the image shows"),
        ("the description mentions", "the image shows"),
        ("based on the description", "based on the image"),
        ("according to the description", "according to the image"),
    ]
    .into_iter()
    .map(|(pattern, replacement)| RewriteRule {
        pattern: pattern.to_string(),
        replacement: replacement.to_string(),
    })
    .collect()
}

/// Apply rewrites left to right, in rule order. Idempotent as long as no
/// replacement reintroduces an earlier pattern.
pub fn apply_rewrites(text: &str, rules: &[RewriteRule]) -> String {
    let mut out = text.to_string();
    for rule in rules {
        out = out.replace(&rule.pattern, &rule.replacement);
    }
    out
}

/// Conjunctive filter predicates applied to candidate reasoning. Tag
/// well-formedness and answer matching are structural checks that always run
/// before these.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    /// Case-insensitive phrases that disqualify a reasoning trace.
    pub banned_phrases: Vec<String>,
    /// Maximum think length in whitespace-delimited words.
    pub max_think_words: usize,
    /// Reject records whose think text ends with a "the answer is X" claim
    /// that contradicts the tagged answer.
    pub contradiction_check: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            banned_phrases: vec!["as an AI".to_string(), "cannot see the image".to_string()],
            max_think_words: 8192,
            contradiction_check: true,
        }
    }
}

impl FilterConfig {
    pub fn banned_phrase_in(&self, text: &str) -> Option<&str> {
        let lower = text.to_lowercase();
        self.banned_phrases
            .iter()
            .find(|p| lower.contains(&p.to_lowercase()))
            .map(|p| p.as_str())
    }

    /// The trailing claim "the answer is X" (last occurrence, case
    /// insensitive), if present: returns X trimmed of closing punctuation.
    pub fn trailing_claim<'a>(&self, think_text: &'a str) -> Option<&'a str> {
        const PHRASE: &str = "the answer is";
        let lower = think_text.to_lowercase();
        let start = lower.rfind(PHRASE)? + PHRASE.len();
        let rest = &think_text[start..];
        let end = rest.find(['.', '\n', ',', ';']).unwrap_or(rest.len());
        let claim = rest[..end].trim();
        if claim.is_empty() {
            None
        } else {
            Some(claim)
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Parse a rewrites file: one `pattern => replacement` per line.
pub fn parse_rewrites(path: &Path) -> Result<Vec<RewriteRule>, RuleError> {
    let text = std::fs::read_to_string(path).map_err(|source| RuleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let Some((pattern, replacement)) = line.split_once("=>") else {
            return Err(RuleError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                reason: "expected `pattern => replacement`".into(),
            });
        };
        let pattern = pattern.trim();
        if pattern.is_empty() {
            return Err(RuleError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                reason: "empty pattern".into(),
            });
        }
        rules.push(RewriteRule {
            pattern: pattern.to_string(),
            replacement: replacement.trim().to_string(),
        });
    }
    Ok(rules)
}

/// Parse a filters file of `name: value` toggles. Recognized names:
/// `banned_phrase` (repeatable), `max_think_words`, `contradiction_check`.
/// The defaults apply for anything not mentioned; the first `banned_phrase`
/// line replaces the default ban list.
pub fn parse_filters(path: &Path) -> Result<FilterConfig, RuleError> {
    let text = std::fs::read_to_string(path).map_err(|source| RuleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut config = FilterConfig::default();
    let mut saw_banned = false;
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |reason: String| RuleError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            reason,
        };
        let Some((name, value)) = line.split_once(':') else {
            return Err(parse_err("expected `name: value`".into()));
        };
        let value = value.trim();
        match name.trim() {
            "banned_phrase" => {
                if !saw_banned {
                    config.banned_phrases.clear();
                    saw_banned = true;
                }
                config.banned_phrases.push(value.to_string());
            }
            "max_think_words" => {
                config.max_think_words = value
                    .parse()
                    .map_err(|e| parse_err(format!("bad max_think_words: {e}")))?;
            }
            "contradiction_check" => {
                config.contradiction_check = match value {
                    "on" | "true" => true,
                    "off" | "false" => false,
                    other => return Err(parse_err(format!("bad toggle {other:?}"))),
                };
            }
            other => return Err(parse_err(format!("unknown filter {other:?}"))),
        }
    }
    Ok(config)
}
