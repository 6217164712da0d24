//! When translation tokens reach the synthesizer.
//!
//! Tokens either come from a wait-k schedule over a fixed pre-decision window
//! or from an externally timestamped trace file:
//!
//! ```text
//! # comment
//! @source_duration <TAB> utt1 <TAB> 2.400000
//! utt1 <TAB> 0 <TAB> hello <TAB> 0.280000 <TAB> 0
//! utt1 <TAB> 1 <TAB> world <TAB> 0.560000 <TAB> 1
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};
use crate::timeline::{TimePoint, TimeSpan, TIME_EPSILON};

/// Minimum gap between consecutive emit times in a trace.
pub const MIN_EMIT_GAP: TimeSpan = TimeSpan::from_micros(1);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaitKConfig {
    pub k: u32,
    /// Encoder states grouped into one read decision.
    pub pre_decision_segments: u32,
    /// Audio covered by one encoder state.
    pub segment: TimeSpan,
    /// Translation compute added to each emitted token.
    pub st_compute_per_token: TimeSpan,
}

impl Default for WaitKConfig {
    fn default() -> Self {
        WaitKConfig {
            k: 3,
            pre_decision_segments: 7,
            segment: TimeSpan::from_secs(0.04),
            st_compute_per_token: TimeSpan::ZERO,
        }
    }
}

impl WaitKConfig {
    pub fn with_k(k: u32) -> Self {
        WaitKConfig {
            k,
            ..Self::default()
        }
    }

    /// Source audio consumed per read step (0.28 s with the defaults).
    pub fn token_period(&self) -> TimeSpan {
        self.segment * self.pre_decision_segments as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Configuration("wait-k requires k >= 1".into()));
        }
        if self.pre_decision_segments == 0 {
            return Err(Error::Configuration(
                "pre-decision window must hold at least one segment".into(),
            ));
        }
        if self.segment.secs() <= 0.0 {
            return Err(Error::Configuration(
                "segment length must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Emit times of `n_tokens` tokens under wait-k.
///
/// Token `t` (1-based) may be produced once `k + t - 1` read steps of source
/// are available, capped at the source length; production then costs
/// `st_compute_per_token` and cannot precede the previous token.
pub fn waitk_emit_times(
    n_tokens: usize,
    cfg: &WaitKConfig,
    source_duration: TimeSpan,
) -> Result<Vec<TimePoint>> {
    if n_tokens == 0 {
        return Err(Error::EmptyUtterance);
    }
    cfg.validate()?;
    let period = cfg.token_period().secs();
    let mut prev = TimePoint::ZERO;
    let mut out = Vec::with_capacity(n_tokens);
    for t in 1..=n_tokens {
        let read = ((cfg.k as usize + t - 1) as f64 * period).min(source_duration.secs());
        let emit = TimePoint::from_secs(read).max(prev) + cfg.st_compute_per_token;
        out.push(emit);
        prev = emit;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEvent {
    pub index: usize,
    pub text: String,
    pub emit_time: TimePoint,
    pub is_eos: bool,
}

/// One utterance's token trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub utterance_id: String,
    pub tokens: Vec<TokenEvent>,
    pub source_duration: Option<TimeSpan>,
}

impl Utterance {
    /// Builds an utterance and checks the trace invariants.
    pub fn new(
        utterance_id: impl Into<String>,
        tokens: Vec<TokenEvent>,
        source_duration: Option<TimeSpan>,
    ) -> Result<Self> {
        let utt = Utterance {
            utterance_id: utterance_id.into(),
            tokens,
            source_duration,
        };
        utt.validate()?;
        Ok(utt)
    }

    /// Builds an utterance from words and emit times, nudging ties forward by
    /// 1 µs so the result is strictly increasing. The last token is EOS-flagged
    /// when `final_eos` is set.
    pub fn from_timed_words<S: AsRef<str>>(
        utterance_id: impl Into<String>,
        words: &[S],
        emit_times: &[TimePoint],
        final_eos: bool,
        source_duration: Option<TimeSpan>,
    ) -> Result<Self> {
        let utterance_id = utterance_id.into();
        if words.len() != emit_times.len() {
            return Err(Error::MalformedInput(format!(
                "utterance {utterance_id}: {} words but {} emit times",
                words.len(),
                emit_times.len()
            )));
        }
        let times = strictly_increasing(emit_times);
        let n = words.len();
        let tokens = words
            .iter()
            .zip(times)
            .enumerate()
            .map(|(index, (w, emit_time))| TokenEvent {
                index,
                text: w.as_ref().to_string(),
                emit_time,
                is_eos: final_eos && index + 1 == n,
            })
            .collect();
        Utterance::new(utterance_id, tokens, source_duration)
    }

    /// A wait-k trace over `words` for a source of the given length.
    pub fn waitk<S: AsRef<str>>(
        utterance_id: impl Into<String>,
        words: &[S],
        cfg: &WaitKConfig,
        source_duration: TimeSpan,
    ) -> Result<Self> {
        let times = waitk_emit_times(words.len(), cfg, source_duration)?;
        Utterance::from_timed_words(utterance_id, words, &times, true, Some(source_duration))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn last_emit(&self) -> Option<TimePoint> {
        self.tokens.last().map(|t| t.emit_time)
    }

    pub fn is_final(&self) -> bool {
        self.tokens.last().is_some_and(|t| t.is_eos)
    }

    /// Same words re-timed to a constant gap: token `t` (0-based) at `(t + 1) × gap`.
    pub fn retimed(&self, gap: TimeSpan) -> Result<Utterance> {
        if gap.secs() < MIN_EMIT_GAP.secs() - 1e-12 {
            return Err(Error::Configuration(format!(
                "token gap must be at least 1 µs, got {gap}"
            )));
        }
        let mut tokens = self.tokens.clone();
        for (i, tok) in tokens.iter_mut().enumerate() {
            tok.emit_time = (TimePoint::ZERO + gap * (i + 1) as f64).quantized();
        }
        let end = tokens.last().map(|t| t.emit_time - TimePoint::ZERO);
        Utterance::new(self.utterance_id.clone(), tokens, end)
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.utterance_id;
        if id.is_empty() || id.contains(['\t', '\n']) {
            return Err(Error::MalformedInput(format!(
                "invalid utterance id {id:?}"
            )));
        }
        for (pos, tok) in self.tokens.iter().enumerate() {
            if tok.index != pos {
                return Err(Error::MalformedInput(format!(
                    "utterance {id}: token at position {pos} has index {}",
                    tok.index
                )));
            }
            if tok.text.is_empty() || tok.text.contains(['\t', '\n']) {
                return Err(Error::MalformedInput(format!(
                    "utterance {id}: token {pos} has empty or invalid text"
                )));
            }
            if tok.is_eos && pos + 1 != self.tokens.len() {
                return Err(Error::MalformedInput(format!(
                    "utterance {id}: end-of-sentence flag on token {pos} before the last token"
                )));
            }
            if pos > 0 {
                let prev = self.tokens[pos - 1].emit_time;
                if tok.emit_time.secs() < prev.secs() + MIN_EMIT_GAP.secs() - TIME_EPSILON / 100.0 {
                    return Err(Error::MalformedInput(format!(
                        "utterance {id}: emit time of token {pos} ({}) does not increase past token {} ({})",
                        tok.emit_time,
                        pos - 1,
                        prev
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Forces strict increase by at least 1 µs, on a whole-microsecond grid.
pub(crate) fn strictly_increasing(times: &[TimePoint]) -> Vec<TimePoint> {
    let mut out: Vec<TimePoint> = Vec::with_capacity(times.len());
    for &t in times {
        let mut t = t.quantized();
        if let Some(&prev) = out.last() {
            if t.secs() < prev.secs() + MIN_EMIT_GAP.secs() - 1e-9 {
                t = (prev + MIN_EMIT_GAP).quantized();
            }
        }
        out.push(t);
    }
    out
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let path = path.as_ref();
    parse_trace(&read_file(path)?, path)
}

/// Parses trace text; `origin` is only used in error messages.
pub fn parse_trace(text: &str, origin: &Path) -> Result<Vec<Utterance>> {
    let mut order: Vec<String> = Vec::new();
    let mut tokens: HashMap<String, Vec<TokenEvent>> = HashMap::new();
    let mut sources: HashMap<String, TimeSpan> = HashMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields[0] == "@source_duration" {
            if fields.len() != 3 {
                return Err(Error::parse(
                    origin,
                    line_no,
                    "expected @source_duration <id> <seconds>",
                ));
            }
            let secs = parse_seconds(fields[2]).map_err(|m| Error::parse(origin, line_no, m))?;
            sources.insert(fields[1].to_string(), TimeSpan::from_secs(secs));
            continue;
        }
        if fields.len() != 5 {
            return Err(Error::parse(
                origin,
                line_no,
                format!("expected 5 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(Error::parse(origin, line_no, "empty utterance id"));
        }
        let index: usize = fields[1].parse().map_err(|_| {
            Error::parse(origin, line_no, format!("bad token index {:?}", fields[1]))
        })?;
        let text = fields[2];
        if text.is_empty() {
            return Err(Error::parse(origin, line_no, "empty token text"));
        }
        let emit = parse_seconds(fields[3]).map_err(|m| Error::parse(origin, line_no, m))?;
        let is_eos = match fields[4] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("eos flag must be 0 or 1, got {other:?}"),
                ))
            }
        };
        let entry = tokens.entry(id.to_string()).or_insert_with(|| {
            order.push(id.to_string());
            Vec::new()
        });
        entry.push(TokenEvent {
            index,
            text: text.to_string(),
            emit_time: TimePoint::from_secs(emit),
            is_eos,
        });
    }

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let toks = tokens.remove(&id).unwrap_or_default();
        let source = sources.remove(&id);
        out.push(Utterance::new(id, toks, source)?);
    }
    if let Some(id) = sources.keys().min() {
        return Err(Error::MalformedInput(format!(
            "utterance {id}: source duration declared but no tokens"
        )));
    }
    Ok(out)
}

fn parse_seconds(field: &str) -> std::result::Result<f64, String> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("bad seconds value {field:?}"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!(
            "seconds must be finite and non-negative, got {field}"
        ));
    }
    Ok(v)
}

/// Serializes utterances in the trace format with 6-decimal seconds.
pub fn format_trace(utterances: &[Utterance]) -> String {
    let mut out = String::new();
    for utt in utterances {
        if let Some(src) = utt.source_duration {
            let _ = writeln!(
                out,
                "@source_duration\t{}\t{:.6}",
                utt.utterance_id,
                src.secs()
            );
        }
        for tok in &utt.tokens {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{}",
                utt.utterance_id,
                tok.index,
                tok.text,
                tok.emit_time.secs(),
                u8::from(tok.is_eos)
            );
        }
    }
    out
}

pub fn write_trace(path: impl AsRef<Path>, utterances: &[Utterance]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_trace(utterances)).map_err(|e| Error::io(path, e))
}
