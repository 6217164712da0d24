//! Incremental synthesizer model.
//!
//! Words are turned into phonemes, phonemes into frame counts by a duration
//! table adjusted for context, and each token step into one audio chunk. A
//! chunk synthesizes the committed word together with its lookahead words but
//! only emits the frames of the committed word; the lookahead frames are
//! discarded and cost compute only.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::emission::Utterance;
use crate::error::{read_file, Error, Result};
use crate::lookahead::{LookaheadAnnotation, LookaheadStrategy, END_MARKER};
use crate::timeline::{SynthesisChunk, TimeSpan, DEFAULT_FRAME_HOP};

/// Word to phoneme mapping with a grapheme fallback for unknown words.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: HashMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert<S: Into<String>>(&mut self, word: &str, phonemes: Vec<S>) -> Result<()> {
        let phonemes: Vec<String> = phonemes.into_iter().map(Into::into).collect();
        if phonemes.is_empty() || phonemes.iter().any(|p| p.is_empty()) {
            return Err(Error::MalformedInput(format!(
                "lexicon entry {word:?} needs a non-empty phoneme sequence"
            )));
        }
        self.entries.insert(word.to_lowercase(), phonemes);
        Ok(())
    }

    /// Phonemes of `word` (case-insensitive). Unknown words map to one
    /// pseudo-phoneme per character.
    pub fn phonemes(&self, word: &str) -> Vec<String> {
        let key = word.to_lowercase();
        match self.entries.get(&key) {
            Some(p) => p.clone(),
            None => key.chars().map(|c| c.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `word <TAB> phoneme phoneme ...` per line, `#` comments.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut lex = Lexicon::new();
        for (line_no, fields) in tab_records(&read_file(path)?) {
            if fields.len() != 2 || fields[0].trim().is_empty() {
                return Err(Error::parse(path, line_no, "expected word <TAB> phonemes"));
            }
            let phonemes: Vec<&str> = fields[1].split_whitespace().collect();
            lex.insert(fields[0].trim(), phonemes)
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        }
        Ok(lex)
    }
}

/// Per-phoneme base durations in frames.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationTable {
    base: HashMap<String, u32>,
    /// Used for phonemes missing from the table, grapheme fallbacks included.
    pub default_frames: u32,
    pub frame_hop: TimeSpan,
}

impl Default for DurationTable {
    fn default() -> Self {
        DurationTable {
            base: HashMap::new(),
            default_frames: 6,
            frame_hop: DEFAULT_FRAME_HOP,
        }
    }
}

impl DurationTable {
    pub fn new(default_frames: u32, frame_hop: TimeSpan) -> Result<Self> {
        if default_frames == 0 {
            return Err(Error::Configuration(
                "default phoneme duration must be >= 1 frame".into(),
            ));
        }
        if frame_hop.secs() <= 0.0 {
            return Err(Error::Configuration("frame hop must be positive".into()));
        }
        Ok(DurationTable {
            base: HashMap::new(),
            default_frames,
            frame_hop,
        })
    }

    pub fn insert(&mut self, phoneme: &str, frames: u32) -> Result<()> {
        if frames == 0 {
            return Err(Error::MalformedInput(format!(
                "phoneme {phoneme:?} must last at least one frame"
            )));
        }
        self.base.insert(phoneme.to_string(), frames);
        Ok(())
    }

    pub fn base_frames(&self, phoneme: &str) -> u32 {
        self.base
            .get(phoneme)
            .copied()
            .unwrap_or(self.default_frames)
    }

    /// `phoneme <TAB> base_frames` per line, `#` comments.
    pub fn load(path: impl AsRef<Path>, frame_hop: TimeSpan) -> Result<Self> {
        let path = path.as_ref();
        let mut table = DurationTable {
            frame_hop,
            ..Default::default()
        };
        for (line_no, fields) in tab_records(&read_file(path)?) {
            if fields.len() != 2 || fields[0].trim().is_empty() {
                return Err(Error::parse(
                    path,
                    line_no,
                    "expected phoneme <TAB> base_frames",
                ));
            }
            let frames: u32 = fields[1].trim().parse().map_err(|_| {
                Error::parse(path, line_no, format!("bad frame count {:?}", fields[1]))
            })?;
            table
                .insert(fields[0].trim(), frames)
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        }
        Ok(table)
    }
}

fn tab_records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

/// Multiplicative duration adjustments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextModifiers {
    /// Global speed control, in (0, 1.5].
    pub scale: f64,
    /// Sentence-final lengthening of the last word of a complete input.
    pub eos_stretch: f64,
    /// Lengthening of words synthesized without any lookahead.
    pub no_lookahead_stretch: f64,
}

impl Default for ContextModifiers {
    fn default() -> Self {
        ContextModifiers {
            scale: 1.0,
            eos_stretch: 1.15,
            no_lookahead_stretch: 1.30,
        }
    }
}

impl ContextModifiers {
    /// No stretching at all, scale 1.
    pub fn neutral() -> Self {
        ContextModifiers {
            scale: 1.0,
            eos_stretch: 1.0,
            no_lookahead_stretch: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_scale(self.scale)?;
        if !(self.eos_stretch.is_finite() && self.eos_stretch >= 1.0) {
            return Err(Error::Configuration(format!(
                "eos stretch must be >= 1, got {}",
                self.eos_stretch
            )));
        }
        if !(self.no_lookahead_stretch.is_finite() && self.no_lookahead_stretch >= 1.0) {
            return Err(Error::Configuration(format!(
                "no-lookahead stretch must be >= 1, got {}",
                self.no_lookahead_stretch
            )));
        }
        Ok(())
    }
}

pub fn validate_scale(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.5) {
        return Err(Error::Configuration(format!(
            "duration scale must lie in (0, 1.5], got {alpha}"
        )));
    }
    Ok(())
}

/// What the synthesizer knows at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthContext {
    /// The end-of-sentence token is part of the available input.
    pub is_final_input: bool,
    /// At least one lookahead word (real or predicted) accompanies the input.
    pub has_lookahead: bool,
}

/// Rounds half away from zero after removing float noise below 1e-9.
fn round_frames(x: f64) -> u32 {
    let cleaned = (x * 1e9).round() / 1e9;
    cleaned.round().max(1.0) as u32
}

/// Frame count of one word from its phoneme base durations.
fn word_frames(bases: &[u32], factor: f64) -> u32 {
    bases.iter().map(|&b| round_frames(b as f64 * factor)).sum()
}

/// Per-word factor: scale, times the EOS stretch for the final word of a final
/// input, times the no-lookahead stretch when nothing follows a non-final input.
fn word_factor(m: &ContextModifiers, ctx: SynthContext, is_last_word: bool) -> f64 {
    let mut f = m.scale;
    if ctx.is_final_input && is_last_word {
        f *= m.eos_stretch;
    }
    if !ctx.has_lookahead && !ctx.is_final_input {
        f *= m.no_lookahead_stretch;
    }
    f
}

fn base_durations(word: &str, lexicon: &Lexicon, table: &DurationTable) -> Vec<u32> {
    lexicon
        .phonemes(word)
        .iter()
        .map(|p| table.base_frames(p))
        .collect()
}

/// Frame count of every word in `words` synthesized together under `context`.
pub fn predict_durations<S: AsRef<str>>(
    words: &[S],
    lexicon: &Lexicon,
    table: &DurationTable,
    modifiers: &ContextModifiers,
    context: SynthContext,
) -> Vec<u32> {
    let bases: Vec<Vec<u32>> = words
        .iter()
        .map(|w| base_durations(w.as_ref(), lexicon, table))
        .collect();
    frames_for(&bases, modifiers, context)
}

fn frames_for(bases: &[Vec<u32>], modifiers: &ContextModifiers, context: SynthContext) -> Vec<u32> {
    let n = bases.len();
    bases
        .iter()
        .enumerate()
        .map(|(i, b)| word_frames(b, word_factor(modifiers, context, i + 1 == n)))
        .collect()
}

/// Synthesis cost model: `fixed_overhead + per_frame_cost × frames_synthesized`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeModel {
    pub fixed_overhead: TimeSpan,
    pub per_frame_cost: TimeSpan,
}

impl Default for ComputeModel {
    fn default() -> Self {
        ComputeModel {
            fixed_overhead: TimeSpan::from_secs(0.02),
            per_frame_cost: TimeSpan::from_secs(0.0005),
        }
    }
}

impl ComputeModel {
    pub fn free() -> Self {
        ComputeModel {
            fixed_overhead: TimeSpan::ZERO,
            per_frame_cost: TimeSpan::ZERO,
        }
    }

    pub fn compute_time(&self, frames_synthesized: u32) -> TimeSpan {
        self.fixed_overhead + self.per_frame_cost * frames_synthesized as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    /// Merge consecutive steps whose inputs become ready at the same instant
    /// into a single chunk.
    pub merge_coincident: bool,
}

/// One planned chunk with the bookkeeping needed to re-derive its frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedChunk {
    pub chunk: SynthesisChunk,
    /// Word indices emitted by this chunk.
    pub committed: Range<usize>,
    /// Lookahead words synthesized and then discarded.
    pub lookahead: Vec<String>,
    pub context: SynthContext,
    pub frames_synthesized: u32,
    pub frames_emitted: u32,
    /// Emitted frames of each committed word.
    pub word_frames: Vec<u32>,
    committed_bases: Vec<Vec<u32>>,
    lookahead_bases: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub utterance_id: String,
    pub chunks: Vec<PlannedChunk>,
    pub modifiers: ContextModifiers,
    pub compute: ComputeModel,
    pub frame_hop: TimeSpan,
}

impl ChunkPlan {
    pub fn synthesis_chunks(&self) -> Vec<SynthesisChunk> {
        self.chunks.iter().map(|c| c.chunk.clone()).collect()
    }

    pub fn total_frames_emitted(&self) -> u32 {
        self.chunks.iter().map(|c| c.frames_emitted).sum()
    }

    pub fn total_frames_synthesized(&self) -> u32 {
        self.chunks.iter().map(|c| c.frames_synthesized).sum()
    }

    pub fn output_duration(&self) -> TimeSpan {
        self.chunks.iter().map(|c| c.chunk.play_duration).sum()
    }

    /// Emitted frames of every word, in order.
    pub fn per_word_frames(&self) -> Vec<u32> {
        self.chunks
            .iter()
            .flat_map(|c| c.word_frames.iter().copied())
            .collect()
    }
}

/// Builds one chunk per token step of `utterance`.
///
/// The step for word `t` synthesizes word `t` plus the annotated lookahead
/// words (end markers dropped) and emits only word `t`. A step whose input
/// already contains the EOS-flagged token is final and the sentence's last
/// word takes the EOS stretch; the step for that last word has no lookahead.
pub fn plan_chunks(
    utterance: &Utterance,
    annotation: &LookaheadAnnotation,
    lexicon: &Lexicon,
    table: &DurationTable,
    modifiers: &ContextModifiers,
    compute: &ComputeModel,
    options: &PlanOptions,
) -> Result<ChunkPlan> {
    modifiers.validate()?;
    if utterance.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    if annotation.steps.len() != utterance.len()
        || annotation.utterance_id != utterance.utterance_id
    {
        return Err(Error::MalformedInput(format!(
            "annotation for {} has {} steps but utterance {} has {} tokens",
            annotation.utterance_id,
            annotation.steps.len(),
            utterance.utterance_id,
            utterance.len()
        )));
    }
    let n = utterance.len();
    let eos_at = utterance.is_final().then_some(n - 1);
    let real_depth = match annotation.strategy {
        LookaheadStrategy::GroundTruth { depth } => depth,
        _ => 0,
    };

    // (committed word range, lookahead words, context, ready time)
    let mut steps: Vec<(
        Range<usize>,
        Vec<String>,
        SynthContext,
        crate::timeline::TimePoint,
    )> = Vec::with_capacity(n);
    for (t, step) in annotation.steps.iter().enumerate() {
        if step.token_index != t {
            return Err(Error::MalformedInput(format!(
                "annotation step {t} refers to token {}",
                step.token_index
            )));
        }
        let is_final_input = eos_at.is_some_and(|e| t + real_depth >= e);
        // Nothing follows the last word of a complete sentence.
        let lookahead: Vec<String> = if is_final_input && t + 1 == n {
            Vec::new()
        } else {
            step.predicted
                .iter()
                .take_while(|w| w.as_str() != END_MARKER)
                .cloned()
                .collect()
        };
        let context = SynthContext {
            is_final_input,
            has_lookahead: !lookahead.is_empty(),
        };
        let merge = options.merge_coincident
            && steps
                .last()
                .is_some_and(|(_, _, _, ready)| ready.approx_eq(step.ready_time));
        if merge {
            let last = steps.last_mut().unwrap();
            last.0.end = t + 1;
            last.1 = lookahead;
            last.2 = context;
        } else {
            steps.push((t..t + 1, lookahead, context, step.ready_time));
        }
    }

    let words: Vec<&str> = utterance.words().collect();
    let chunks = steps
        .into_iter()
        .enumerate()
        .map(|(i, (committed, lookahead, context, ready))| {
            let committed_bases: Vec<Vec<u32>> = words[committed.clone()]
                .iter()
                .map(|w| base_durations(w, lexicon, table))
                .collect();
            let lookahead_bases: Vec<Vec<u32>> = lookahead
                .iter()
                .map(|w| base_durations(w, lexicon, table))
                .collect();
            let mut chunk = PlannedChunk {
                chunk: SynthesisChunk::from_frames(
                    i,
                    words[committed.clone()]
                        .iter()
                        .map(|w| w.to_string())
                        .collect(),
                    ready,
                    TimeSpan::ZERO,
                    0,
                    table.frame_hop,
                ),
                committed,
                lookahead,
                context,
                frames_synthesized: 0,
                frames_emitted: 0,
                word_frames: Vec::new(),
                committed_bases,
                lookahead_bases,
            };
            derive_frames(&mut chunk, modifiers, compute, table.frame_hop);
            chunk
        })
        .collect();

    Ok(ChunkPlan {
        utterance_id: utterance.utterance_id.clone(),
        chunks,
        modifiers: modifiers.clone(),
        compute: compute.clone(),
        frame_hop: table.frame_hop,
    })
}

/// (Re)computes frame counts, compute time and duration of a planned chunk.
fn derive_frames(
    chunk: &mut PlannedChunk,
    modifiers: &ContextModifiers,
    compute: &ComputeModel,
    frame_hop: TimeSpan,
) {
    let span: Vec<Vec<u32>> = chunk
        .committed_bases
        .iter()
        .chain(&chunk.lookahead_bases)
        .cloned()
        .collect();
    let frames = frames_for(&span, modifiers, chunk.context);
    let emitted = &frames[..chunk.committed_bases.len()];
    chunk.word_frames = emitted.to_vec();
    chunk.frames_emitted = emitted.iter().sum();
    chunk.frames_synthesized = frames.iter().sum();
    chunk.chunk.frame_count = chunk.frames_emitted;
    chunk.chunk.play_duration = frame_hop * chunk.frames_emitted as f64;
    chunk.chunk.compute_time = compute.compute_time(chunk.frames_synthesized);
}

/// Re-derives every frame count of `plan` with duration scale `alpha`.
pub fn scale_plan(plan: &ChunkPlan, alpha: f64) -> Result<ChunkPlan> {
    validate_scale(alpha)?;
    let mut out = plan.clone();
    out.modifiers.scale = alpha;
    for chunk in &mut out.chunks {
        derive_frames(chunk, &out.modifiers, &out.compute, out.frame_hop);
    }
    Ok(out)
}
