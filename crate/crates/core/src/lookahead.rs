//! Lookahead for the synthesizer.
//!
//! The synthesizer may see future words beyond the ones it currently emits.
//! Real lookahead means waiting for the next tokens. Pseudo lookahead runs the
//! upstream decoder a few extra greedy steps from a snapshot of its state and
//! then restores that snapshot, so the real translation is unaffected.

use std::any::Any;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::emission::Utterance;
use crate::error::{read_file, Error, Result};
use crate::timeline::{TimePoint, TimeSpan};

/// Sentence end marker used by decoders and beyond-the-trace lookahead.
pub const END_MARKER: &str = "</s>";
/// Left padding for n-gram histories at sentence start.
pub const START_MARKER: &str = "<s>";

/// Default extra time for one pseudo-lookahead decoding pass.
pub const DEFAULT_PSEUDO_OVERHEAD: TimeSpan = TimeSpan::from_millis(10);

/// Opaque saved decoder state.
pub struct DecoderState(Box<dyn Any + Send>);

impl DecoderState {
    pub fn new<T: Any + Send>(inner: T) -> Self {
        DecoderState(Box::new(inner))
    }

    pub fn downcast<T: Any>(self) -> Option<T> {
        self.0.downcast::<T>().ok().map(|b| *b)
    }
}

impl fmt::Debug for DecoderState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DecoderState(..)")
    }
}

/// A left-to-right decoder that can be checkpointed.
///
/// `restore(snapshot())` must leave every future output unchanged.
pub trait IncrementalDecoder {
    /// Consumes one real token.
    fn step(&mut self, token: &str);
    /// Greedy next token for the current state, without advancing.
    fn best_next(&self) -> String;
    fn snapshot(&self) -> DecoderState;
    /// Panics if `state` did not come from a decoder of the same type.
    fn restore(&mut self, state: DecoderState);
    fn end_marker(&self) -> &str {
        END_MARKER
    }
    /// Tokens the decoder can produce, end marker included, sorted.
    fn vocabulary(&self) -> Vec<String>;
}

/// Greedy continuation of length `depth`, stopping after the end marker.
/// The decoder is returned to its prior state.
pub fn generate_pseudo(decoder: &mut dyn IncrementalDecoder, depth: usize) -> Vec<String> {
    let saved = decoder.snapshot();
    let mut out = Vec::with_capacity(depth);
    for _ in 0..depth {
        let next = decoder.best_next();
        let done = next == decoder.end_marker();
        out.push(next);
        if done {
            break;
        }
        decoder.step(out.last().unwrap());
    }
    decoder.restore(saved);
    out
}

/// Desk-scale n-gram decoder with backoff and ranked successors.
#[derive(Debug, Clone)]
pub struct ToyDecoder {
    order: usize,
    /// History window (oldest first) → successors ranked by count, then lexically.
    table: HashMap<Vec<String>, Vec<(String, u64)>>,
    vocabulary: Vec<String>,
    history: Vec<String>,
}

impl ToyDecoder {
    /// Builds a decoder from raw `(history, next, count)` rows.
    pub fn from_counts<I>(order: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<String>, String, u64)>,
    {
        if !(1..=3).contains(&order) {
            return Err(Error::Configuration(format!(
                "n-gram order must be 1..=3, got {order}"
            )));
        }
        let mut merged: HashMap<Vec<String>, HashMap<String, u64>> = HashMap::new();
        let mut vocab: BTreeSet<String> = BTreeSet::new();
        vocab.insert(END_MARKER.to_string());
        for (history, next, count) in rows {
            if history.len() >= order {
                return Err(Error::Configuration(format!(
                    "history {history:?} is too long for an order-{order} model"
                )));
            }
            vocab.extend(history.iter().filter(|w| *w != START_MARKER).cloned());
            vocab.insert(next.clone());
            *merged.entry(history).or_default().entry(next).or_default() += count;
        }
        let table = merged
            .into_iter()
            .map(|(h, succ)| {
                let mut ranked: Vec<(String, u64)> = succ.into_iter().collect();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                (h, ranked)
            })
            .collect();
        Ok(ToyDecoder {
            order,
            table,
            vocabulary: vocab.into_iter().collect(),
            history: vec![START_MARKER.to_string(); order.saturating_sub(1)],
        })
    }

    /// Counts n-grams (all orders up to `order`) over sentences padded with
    /// start markers and terminated by the end marker.
    pub fn train<S: AsRef<str>>(order: usize, sentences: &[Vec<S>]) -> Result<Self> {
        let mut rows = Vec::new();
        for sentence in sentences {
            let mut padded: Vec<String> = vec![START_MARKER.to_string(); order.saturating_sub(1)];
            padded.extend(sentence.iter().map(|w| w.as_ref().to_string()));
            padded.push(END_MARKER.to_string());
            let start = order.saturating_sub(1);
            for pos in start..padded.len() {
                for hist_len in 0..order {
                    let h = padded[pos - hist_len..pos].to_vec();
                    rows.push((h, padded[pos].clone(), 1));
                }
            }
        }
        Self::from_counts(order, rows)
    }

    /// Trains on the words of a trace corpus.
    pub fn train_on_corpus(order: usize, corpus: &[Utterance]) -> Result<Self> {
        let sentences: Vec<Vec<&str>> = corpus.iter().map(|u| u.words().collect()).collect();
        Self::train(order, &sentences)
    }

    /// Loads `history_tokens <TAB> next_token <TAB> count` rows. History tokens
    /// are space separated; an empty history is a unigram row.
    pub fn load_counts(path: impl AsRef<Path>, order: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = read_file(path)?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    path,
                    i + 1,
                    "expected history <TAB> next <TAB> count",
                ));
            }
            let history: Vec<String> = fields[0].split_whitespace().map(str::to_string).collect();
            let next = fields[1].trim();
            if next.is_empty() {
                return Err(Error::parse(path, i + 1, "empty next token"));
            }
            let count: u64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad count {:?}", fields[2])))?;
            rows.push((history, next.to_string(), count));
        }
        Self::from_counts(order, rows).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Back to the sentence-start state.
    pub fn reset(&mut self) {
        self.history = vec![START_MARKER.to_string(); self.order.saturating_sub(1)];
    }

    /// Ranked successors of the current state, after backoff.
    pub fn ranked_successors(&self) -> &[(String, u64)] {
        let window = self.order.saturating_sub(1).min(self.history.len());
        let recent = &self.history[self.history.len() - window..];
        for skip in 0..=recent.len() {
            if let Some(ranked) = self.table.get(&recent[skip..]) {
                if !ranked.is_empty() {
                    return ranked;
                }
            }
        }
        &[]
    }
}

impl IncrementalDecoder for ToyDecoder {
    fn step(&mut self, token: &str) {
        self.history.push(token.to_string());
        let keep = self.order.saturating_sub(1);
        if self.history.len() > keep {
            self.history.drain(..self.history.len() - keep);
        }
    }

    fn best_next(&self) -> String {
        self.ranked_successors()
            .first()
            .map(|(w, _)| w.clone())
            .unwrap_or_else(|| END_MARKER.to_string())
    }

    fn snapshot(&self) -> DecoderState {
        DecoderState::new(self.history.clone())
    }

    fn restore(&mut self, state: DecoderState) {
        self.history = state
            .downcast::<Vec<String>>()
            .expect("state was not produced by a ToyDecoder");
    }

    fn vocabulary(&self) -> Vec<String> {
        self.vocabulary.clone()
    }
}

/// How the synthesizer obtains lookahead words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LookaheadStrategy {
    /// Synthesize each word as soon as it arrives.
    None,
    /// Wait for the next `depth` real tokens.
    GroundTruth { depth: usize },
    /// Predict the next `depth` tokens with the upstream decoder.
    Pseudo {
        depth: usize,
        per_step_overhead: TimeSpan,
    },
    /// Lookahead sampled uniformly from the vocabulary.
    Random { depth: usize, seed: u64 },
    /// Correct with probability `accuracy`, otherwise a uniformly drawn wrong token.
    Stochastic {
        accuracy: f64,
        depth: usize,
        seed: u64,
    },
}

impl LookaheadStrategy {
    pub fn pseudo(depth: usize) -> Self {
        LookaheadStrategy::Pseudo {
            depth,
            per_step_overhead: DEFAULT_PSEUDO_OVERHEAD,
        }
    }

    pub fn depth(&self) -> usize {
        match *self {
            LookaheadStrategy::None => 0,
            LookaheadStrategy::GroundTruth { depth }
            | LookaheadStrategy::Pseudo { depth, .. }
            | LookaheadStrategy::Random { depth, .. }
            | LookaheadStrategy::Stochastic { depth, .. } => depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self, LookaheadStrategy::None) && self.depth() == 0 {
            return Err(Error::Configuration(format!(
                "{self}: lookahead depth must be at least 1"
            )));
        }
        if let LookaheadStrategy::Stochastic { accuracy, .. } = *self {
            if !(0.0..=1.0).contains(&accuracy) {
                return Err(Error::Configuration(format!(
                    "stochastic accuracy must lie in [0, 1], got {accuracy}"
                )));
            }
        }
        Ok(())
    }

    /// Same strategy with its seed replaced (no-op for deterministic variants).
    pub fn with_seed(&self, new_seed: u64) -> Self {
        let mut s = self.clone();
        match &mut s {
            LookaheadStrategy::Random { seed, .. } | LookaheadStrategy::Stochastic { seed, .. } => {
                *seed = new_seed
            }
            _ => {}
        }
        s
    }
}

/// Short label, also accepted by [`FromStr`]:
/// `none`, `gt:K`, `pseudo:K[:OVERHEAD]`, `random:K[:SEED]`, `stochastic:P:K[:SEED]`.
impl fmt::Display for LookaheadStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LookaheadStrategy::None => write!(f, "none"),
            LookaheadStrategy::GroundTruth { depth } => write!(f, "gt:{depth}"),
            LookaheadStrategy::Pseudo {
                depth,
                per_step_overhead,
            } => write!(f, "pseudo:{depth}:{}", per_step_overhead.secs()),
            LookaheadStrategy::Random { depth, seed } => write!(f, "random:{depth}:{seed}"),
            LookaheadStrategy::Stochastic {
                accuracy,
                depth,
                seed,
            } => write!(f, "stochastic:{accuracy}:{depth}:{seed}"),
        }
    }
}

impl FromStr for LookaheadStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::Configuration(format!("unrecognized lookahead strategy {s:?}"));
        let int = |i: usize| -> Result<usize> {
            parts.get(i).ok_or_else(bad)?.parse().map_err(|_| bad())
        };
        let seed = |i: usize| -> Result<u64> {
            parts.get(i).map_or(Ok(0), |p| p.parse().map_err(|_| bad()))
        };
        let strategy = match parts[0].to_ascii_lowercase().as_str() {
            "none" if parts.len() == 1 => LookaheadStrategy::None,
            "gt" | "ground-truth" if parts.len() == 2 => {
                LookaheadStrategy::GroundTruth { depth: int(1)? }
            }
            "pseudo" if (2..=3).contains(&parts.len()) => LookaheadStrategy::Pseudo {
                depth: int(1)?,
                per_step_overhead: match parts.get(2) {
                    Some(v) => v
                        .parse::<f64>()
                        .ok()
                        .and_then(|x| TimeSpan::new(x).ok())
                        .ok_or_else(bad)?,
                    None => DEFAULT_PSEUDO_OVERHEAD,
                },
            },
            "random" if (2..=3).contains(&parts.len()) => LookaheadStrategy::Random {
                depth: int(1)?,
                seed: seed(2)?,
            },
            "stochastic" if (3..=4).contains(&parts.len()) => LookaheadStrategy::Stochastic {
                accuracy: parts[1].parse().map_err(|_| bad())?,
                depth: int(2)?,
                seed: seed(3)?,
            },
            _ => return Err(bad()),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

impl TryFrom<String> for LookaheadStrategy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LookaheadStrategy> for String {
    fn from(s: LookaheadStrategy) -> String {
        s.to_string()
    }
}

/// Lookahead seen by the synthesizer at one token step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadStep {
    pub token_index: usize,
    /// Up to `depth` predicted tokens; may end early at the end marker.
    pub predicted: Vec<String>,
    /// Per predicted position: matches the real continuation.
    pub correct: Vec<bool>,
    /// When the word and its lookahead were all available.
    pub ready_time: TimePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadAnnotation {
    pub utterance_id: String,
    pub strategy: LookaheadStrategy,
    pub steps: Vec<LookaheadStep>,
}

impl LookaheadAnnotation {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn tokens_match(a: &str, b: &str) -> bool {
    a == b || a.to_lowercase() == b.to_lowercase()
}

/// The real token at `pos`, or the end marker past the end of the trace.
fn actual_at(utt: &Utterance, pos: usize) -> &str {
    utt.tokens.get(pos).map_or(END_MARKER, |t| t.text.as_str())
}

/// FNV-1a, stable across platforms and runs.
fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn utterance_rng(seed: u64, utterance_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stable_hash(utterance_id))
}

/// Computes per-step lookahead and ready times for one utterance.
///
/// `decoder` is required for [`LookaheadStrategy::Pseudo`]; it is stepped
/// through the utterance and left in the state it was handed over in.
/// Random and stochastic strategies sample from `vocabulary`, falling back to
/// the decoder's vocabulary and then to the utterance's own tokens.
pub fn annotate(
    utterance: &Utterance,
    strategy: &LookaheadStrategy,
    decoder: Option<&mut dyn IncrementalDecoder>,
    vocabulary: Option<&[String]>,
) -> Result<LookaheadAnnotation> {
    strategy.validate()?;
    if utterance.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    let n = utterance.len();
    let emit = |i: usize| utterance.tokens[i.min(n - 1)].emit_time;
    let depth = strategy.depth();

    let fallback_vocab = |decoder: &Option<&mut dyn IncrementalDecoder>| -> Vec<String> {
        if let Some(v) = vocabulary {
            return v.to_vec();
        }
        if let Some(d) = decoder {
            return d.vocabulary();
        }
        let mut set: BTreeSet<String> = utterance.words().map(str::to_string).collect();
        set.insert(END_MARKER.to_string());
        set.into_iter().collect()
    };

    let truth = |t: usize| -> Vec<String> {
        let mut out = Vec::with_capacity(depth);
        for j in 0..depth {
            let tok = actual_at(utterance, t + 1 + j);
            out.push(tok.to_string());
            if tok == END_MARKER {
                break;
            }
        }
        out
    };
    let flags = |t: usize, predicted: &[String]| -> Vec<bool> {
        predicted
            .iter()
            .enumerate()
            .map(|(j, p)| tokens_match(p, actual_at(utterance, t + 1 + j)))
            .collect()
    };
    let gt_ready = |t: usize| emit(t + depth);

    let steps = match *strategy {
        LookaheadStrategy::None => (0..n)
            .map(|t| LookaheadStep {
                token_index: t,
                predicted: Vec::new(),
                correct: Vec::new(),
                ready_time: emit(t),
            })
            .collect(),
        LookaheadStrategy::GroundTruth { .. } => (0..n)
            .map(|t| {
                let predicted = truth(t);
                let correct = vec![true; predicted.len()];
                LookaheadStep {
                    token_index: t,
                    predicted,
                    correct,
                    ready_time: gt_ready(t),
                }
            })
            .collect(),
        LookaheadStrategy::Pseudo {
            per_step_overhead, ..
        } => {
            let decoder = decoder.ok_or_else(|| {
                Error::Configuration("pseudo lookahead requires a decoder".into())
            })?;
            let initial = decoder.snapshot();
            let mut steps = Vec::with_capacity(n);
            for (t, tok) in utterance.tokens.iter().enumerate() {
                decoder.step(&tok.text);
                let predicted = generate_pseudo(decoder, depth);
                let correct = flags(t, &predicted);
                // Never later than simply waiting for the real continuation.
                let ready_time = (tok.emit_time + per_step_overhead).min(gt_ready(t));
                steps.push(LookaheadStep {
                    token_index: t,
                    predicted,
                    correct,
                    ready_time,
                });
            }
            decoder.restore(initial);
            steps
        }
        LookaheadStrategy::Random { seed, .. } => {
            let vocab = fallback_vocab(&decoder);
            let mut rng = utterance_rng(seed, &utterance.utterance_id);
            (0..n)
                .map(|t| {
                    let predicted: Vec<String> = (0..depth)
                        .map(|_| {
                            vocab
                                .choose(&mut rng)
                                .cloned()
                                .unwrap_or_else(|| END_MARKER.into())
                        })
                        .collect();
                    let correct = flags(t, &predicted);
                    LookaheadStep {
                        token_index: t,
                        predicted,
                        correct,
                        ready_time: emit(t),
                    }
                })
                .collect()
        }
        LookaheadStrategy::Stochastic { accuracy, seed, .. } => {
            let vocab = fallback_vocab(&decoder);
            let mut rng = utterance_rng(seed, &utterance.utterance_id);
            (0..n)
                .map(|t| {
                    let predicted: Vec<String> = (0..depth)
                        .map(|j| {
                            let actual = actual_at(utterance, t + 1 + j);
                            if rng.gen_bool(accuracy) {
                                actual.to_string()
                            } else {
                                draw_wrong(&vocab, actual, &mut rng)
                            }
                        })
                        .collect();
                    let correct = flags(t, &predicted);
                    LookaheadStep {
                        token_index: t,
                        predicted,
                        correct,
                        ready_time: emit(t),
                    }
                })
                .collect()
        }
    };

    Ok(LookaheadAnnotation {
        utterance_id: utterance.utterance_id.clone(),
        strategy: strategy.clone(),
        steps,
    })
}

/// Uniform over the vocabulary minus the correct token.
fn draw_wrong(vocab: &[String], actual: &str, rng: &mut ChaCha8Rng) -> String {
    let wrong: Vec<&String> = vocab.iter().filter(|w| !tokens_match(w, actual)).collect();
    match wrong.choose(rng) {
        Some(w) => (*w).clone(),
        None => "<unk>".to_string(),
    }
}

/// Fraction of steps whose first predicted token matches the real next token.
pub fn lookahead_accuracy(annotation: &LookaheadAnnotation) -> Result<f64> {
    let firsts: Vec<bool> = annotation
        .steps
        .iter()
        .filter_map(|s| s.correct.first().copied())
        .collect();
    if firsts.is_empty() {
        return Err(Error::EmptyInput(format!(
            "annotation for {} has no predictions",
            annotation.utterance_id
        )));
    }
    Ok(firsts.iter().filter(|&&c| c).count() as f64 / firsts.len() as f64)
}

/// Pooled accuracy over several annotations (each step weighs equally).
pub fn pooled_accuracy<'a, I>(annotations: I) -> Option<f64>
where
    I: IntoIterator<Item = &'a LookaheadAnnotation>,
{
    let (mut hits, mut total) = (0usize, 0usize);
    for a in annotations {
        for s in &a.steps {
            if let Some(&c) = s.correct.first() {
                total += 1;
                hits += usize::from(c);
            }
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}
