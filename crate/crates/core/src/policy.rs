//! Tabular Markov softmax policy.
//!
//! The policy is a logits table over (question key, previous token) states:
//! `K x (V+1) x V`, where the extra previous-token state is begin-of-sequence.
//! Sampling is autoregressive and stops at the end-of-sequence token or at a
//! hard length cap. Because the table is small and the softmax is explicit,
//! sequence log-probabilities and their gradients are exact, which is what
//! makes finite-difference verification of the training objective possible.
//!
//! Truncation emits no implicit eos: a naturally terminated sample ends with
//! the eos token and its log-probability counts that final draw, while a
//! capped sample contains content tokens only. Both the sampling policy and
//! any scoring policy therefore account for exactly the same token set.

use crate::vocab::{TokenId, Vocabulary};
use rand::Rng;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("question key {key} out of range (policy has {num_keys} keys)")]
    KeyOutOfRange { key: usize, num_keys: usize },
    #[error("token id {id} out of range (vocabulary size {vocab_size})")]
    UnknownToken { id: usize, vocab_size: usize },
    #[error("sequence must contain at least one token")]
    EmptySequence,
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    BadCheckpoint(String),
}

/// Sparse gradient of a sequence log-probability: one dense row per visited
/// (key, previous-token) state, keyed by flat row index `key * (V+1) + state`.
/// Rows are sorted by index and repeated visits accumulate into one row.
#[derive(Clone, Debug)]
pub struct SparseGrad {
    pub vocab_size: usize,
    pub rows: Vec<(usize, Vec<f64>)>,
}

/// Metadata embedded in checkpoint files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub config_digest: u64,
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"TPOL";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct TabularPolicy {
    num_keys: usize,
    vocab_size: usize,
    eos: TokenId,
    logits: Vec<f64>,
}

impl TabularPolicy {
    /// All-zero logits: the uniform policy. Deterministic and maximally
    /// exploratory.
    pub fn new(num_keys: usize, vocab_size: usize, eos: TokenId) -> Self {
        assert!(num_keys >= 1 && vocab_size >= 2 && eos < vocab_size);
        Self {
            num_keys,
            vocab_size,
            eos,
            logits: vec![0.0; num_keys * (vocab_size + 1) * vocab_size],
        }
    }

    pub fn num_keys(&self) -> usize {
        self.num_keys
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn num_params(&self) -> usize {
        self.logits.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_keys * (self.vocab_size + 1)
    }

    /// Begin-of-sequence previous-token state index.
    pub fn bos_state(&self) -> usize {
        self.vocab_size
    }

    fn state_of(&self, prev: Option<TokenId>) -> usize {
        prev.map_or(self.vocab_size, |t| t)
    }

    pub fn row_index(&self, key: usize, state: usize) -> usize {
        key * (self.vocab_size + 1) + state
    }

    pub fn row(&self, key: usize, state: usize) -> &[f64] {
        let base = self.row_index(key, state) * self.vocab_size;
        &self.logits[base..base + self.vocab_size]
    }

    pub fn row_mut(&mut self, key: usize, state: usize) -> &mut [f64] {
        let base = self.row_index(key, state) * self.vocab_size;
        &mut self.logits[base..base + self.vocab_size]
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logit_mut(&mut self, flat_index: usize) -> &mut f64 {
        &mut self.logits[flat_index]
    }

    fn check_key(&self, key: usize) -> Result<(), PolicyError> {
        if key >= self.num_keys {
            return Err(PolicyError::KeyOutOfRange {
                key,
                num_keys: self.num_keys,
            });
        }
        Ok(())
    }

    /// Softmax probabilities for one state row.
    pub fn probs(&self, key: usize, prev: Option<TokenId>) -> Vec<f64> {
        let row = self.row(key, self.state_of(prev));
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<f64> = row.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = out.iter().sum();
        for p in &mut out {
            *p /= sum;
        }
        out
    }

    fn log_softmax_pick(&self, key: usize, state: usize, token: TokenId) -> f64 {
        let row = self.row(key, state);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
        row[token] - lse
    }

    /// Autoregressive categorical sampling, capped at `max_len` tokens. The
    /// returned sequence includes the eos token when termination was natural
    /// and is exactly `max_len` content tokens when truncated.
    pub fn sample(&self, key: usize, max_len: usize, rng: &mut impl Rng) -> Vec<TokenId> {
        debug_assert!(key < self.num_keys);
        let mut tokens = Vec::with_capacity(max_len.min(64));
        let mut prev: Option<TokenId> = None;
        while tokens.len() < max_len {
            let probs = self.probs(key, prev);
            let draw: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = self.vocab_size - 1;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if draw < acc {
                    chosen = i;
                    break;
                }
            }
            tokens.push(chosen);
            if chosen == self.eos {
                break;
            }
            prev = Some(chosen);
        }
        tokens
    }

    /// Sum of per-token log-softmax picks along the sequence.
    pub fn seq_logprob(&self, key: usize, tokens: &[TokenId]) -> Result<f64, PolicyError> {
        self.check_key(key)?;
        if tokens.is_empty() {
            return Err(PolicyError::EmptySequence);
        }
        let mut total = 0.0;
        let mut prev: Option<TokenId> = None;
        for &t in tokens {
            if t >= self.vocab_size {
                return Err(PolicyError::UnknownToken {
                    id: t,
                    vocab_size: self.vocab_size,
                });
            }
            total += self.log_softmax_pick(key, self.state_of(prev), t);
            prev = Some(t);
        }
        Ok(total)
    }

    /// Exact gradient of [`Self::seq_logprob`] with respect to the logits.
    /// For each visited state the row gradient is
    /// `onehot(chosen) - softmax(row)`; unvisited states are exactly zero.
    pub fn seq_logprob_grad(&self, key: usize, tokens: &[TokenId]) -> Result<SparseGrad, PolicyError> {
        self.check_key(key)?;
        if tokens.is_empty() {
            return Err(PolicyError::EmptySequence);
        }
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut prev: Option<TokenId> = None;
        for &t in tokens {
            if t >= self.vocab_size {
                return Err(PolicyError::UnknownToken {
                    id: t,
                    vocab_size: self.vocab_size,
                });
            }
            let state = self.state_of(prev);
            let row_id = self.row_index(key, state);
            let probs = self.probs(key, prev);
            let entry = match rows.binary_search_by_key(&row_id, |(id, _)| *id) {
                Ok(i) => &mut rows[i].1,
                Err(i) => {
                    rows.insert(i, (row_id, vec![0.0; self.vocab_size]));
                    &mut rows[i].1
                }
            };
            for (g, p) in entry.iter_mut().zip(probs.iter()) {
                *g -= p;
            }
            entry[t] += 1.0;
            prev = Some(t);
        }
        Ok(SparseGrad {
            vocab_size: self.vocab_size,
            rows,
        })
    }

    /// Value-independent frozen copy, usable as an old-policy or reference
    /// snapshot. Later updates to `self` do not affect it.
    pub fn snapshot(&self) -> TabularPolicy {
        self.clone()
    }

    /// Add `scale * delta` to the logits table. `delta` must have the same
    /// length as the table.
    pub fn nudge(&mut self, delta: &[f64], scale: f64) {
        debug_assert_eq!(delta.len(), self.logits.len());
        for (l, d) in self.logits.iter_mut().zip(delta.iter()) {
            *l += scale * d;
        }
    }

    /// Serialize to the flat binary checkpoint format: magic `TPOL`, version,
    /// K, V, eos, seed, config digest, then the logits table in row order as
    /// little-endian f64.
    pub fn save(&self, path: &Path, meta: CheckpointMeta) -> Result<(), PolicyError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.num_keys as u64).to_le_bytes())?;
        w.write_all(&(self.vocab_size as u64).to_le_bytes())?;
        w.write_all(&(self.eos as u64).to_le_bytes())?;
        w.write_all(&meta.seed.to_le_bytes())?;
        w.write_all(&meta.config_digest.to_le_bytes())?;
        for &l in &self.logits {
            w.write_all(&l.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(TabularPolicy, CheckpointMeta), PolicyError> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(PolicyError::BadCheckpoint("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != CHECKPOINT_VERSION {
            return Err(PolicyError::BadCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |r: &mut std::io::BufReader<std::fs::File>| -> Result<u64, PolicyError> {
            r.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let num_keys = read_u64(&mut r)? as usize;
        let vocab_size = read_u64(&mut r)? as usize;
        let eos = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let config_digest = read_u64(&mut r)?;
        if num_keys == 0 || vocab_size < 2 || eos >= vocab_size {
            return Err(PolicyError::BadCheckpoint("inconsistent header".into()));
        }
        let n = num_keys * (vocab_size + 1) * vocab_size;
        let mut logits = Vec::with_capacity(n);
        let mut f64buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut f64buf)?;
            let v = f64::from_le_bytes(f64buf);
            if !v.is_finite() {
                return Err(PolicyError::BadCheckpoint("non-finite logit".into()));
            }
            logits.push(v);
        }
        Ok((
            TabularPolicy {
                num_keys,
                vocab_size,
                eos,
                logits,
            },
            CheckpointMeta {
                seed,
                config_digest,
            },
        ))
    }
}

/// Shape of a cold-start initialization: a policy that already formats
/// reliably but overthinks on a fraction of question keys.
#[derive(Clone, Copy, Debug)]
pub struct ColdStartStyle {
    /// Fraction of keys whose cold-start thought runs are long.
    pub long_fraction: f64,
    /// Mean think length (tokens) for short-thinking keys.
    pub short_mean_think: f64,
    /// Mean think length (tokens) for long-thinking keys.
    pub long_mean_think: f64,
}

impl Default for ColdStartStyle {
    fn default() -> Self {
        Self {
            long_fraction: 0.5,
            short_mean_think: 8.0,
            long_mean_think: 110.0,
        }
    }
}

fn set_row_from_probs(policy: &mut TabularPolicy, key: usize, state: usize, probs: &[f64]) {
    let sum: f64 = probs.iter().sum();
    let row = policy.row_mut(key, state);
    for (l, &p) in row.iter_mut().zip(probs.iter()) {
        *l = (p / sum).max(1e-12).ln();
    }
}

/// Build a cold-start policy over the given vocabulary: the think/answer
/// scaffold is near-deterministic, answer digits are uniform (unlearned), and
/// each key's think-continuation probability is set from its target mean so
/// that a `long_fraction` of keys produce prolonged thought runs.
pub fn cold_start(num_keys: usize, vocab: &Vocabulary, style: ColdStartStyle) -> TabularPolicy {
    let v = vocab.size();
    let mut policy = TabularPolicy::new(num_keys, v, vocab.eos());
    let fillers: Vec<TokenId> = vocab.filler_ids().collect();
    let digits: Vec<TokenId> = vocab.digit_ids().collect();
    let eps = 2e-4; // leak mass per off-script token
    for key in 0..num_keys {
        let is_long = ((key + 1) as f64 * style.long_fraction).floor()
            > (key as f64 * style.long_fraction).floor();
        let mean = if is_long {
            style.long_mean_think
        } else {
            style.short_mean_think
        };
        let close_p = (1.0 / mean.max(1.0)).clamp(0.004, 0.5);

        // Begin-of-sequence: open the think block.
        let bos_state = policy.bos_state();
        let mut bos = vec![eps; v];
        bos[vocab.think_open()] = 1.0;
        set_row_from_probs(&mut policy, key, bos_state, &bos);

        // Think content states: keep writing fillers, close at the key's rate.
        let mut think = vec![eps; v];
        let cont = 1.0 - close_p;
        for &f in &fillers {
            think[f] = cont / fillers.len() as f64;
        }
        think[vocab.think_close()] = close_p;
        let think_states: Vec<usize> = std::iter::once(vocab.think_open())
            .chain(fillers.iter().copied())
            .collect();
        for s in think_states {
            set_row_from_probs(&mut policy, key, s, &think);
        }

        // After the think block: open the answer, emit one digit, close, stop.
        let mut after_think = vec![eps; v];
        after_think[vocab.answer_open()] = 1.0;
        set_row_from_probs(&mut policy, key, vocab.think_close(), &after_think);

        let mut answer = vec![eps; v];
        for &d in &digits {
            answer[d] = 1.0 / digits.len() as f64;
        }
        set_row_from_probs(&mut policy, key, vocab.answer_open(), &answer);

        let mut digit_row = vec![eps; v];
        digit_row[vocab.answer_close()] = 1.0;
        for s in &digits {
            set_row_from_probs(&mut policy, key, *s, &digit_row);
        }

        let mut finish = vec![eps; v];
        finish[vocab.eos()] = 1.0;
        set_row_from_probs(&mut policy, key, vocab.answer_close(), &finish);
    }
    policy
}

/// Uniform policy plus a structural logit bias along the tag scaffold. This
/// stands in for the pull a format-instructing system prompt exerts on a
/// pretrained model: tagged outputs become occasional instead of
/// astronomically rare, while the distribution stays highly exploratory.
pub fn format_primed(num_keys: usize, vocab: &Vocabulary, bias: f64) -> TabularPolicy {
    let v = vocab.size();
    let mut policy = TabularPolicy::new(num_keys, v, vocab.eos());
    for key in 0..num_keys {
        let bos = policy.bos_state();
        policy.row_mut(key, bos)[vocab.think_open()] += bias;
        policy.row_mut(key, vocab.think_open())[vocab.think_close()] += bias;
        for f in vocab.filler_ids() {
            policy.row_mut(key, f)[vocab.think_close()] += bias;
        }
        policy.row_mut(key, vocab.think_close())[vocab.answer_open()] += bias;
        for d in vocab.digit_ids() {
            policy.row_mut(key, vocab.answer_open())[d] += bias;
            policy.row_mut(key, d)[vocab.answer_close()] += bias;
        }
        policy.row_mut(key, vocab.answer_close())[vocab.eos()] += bias;
    }
    policy
}
