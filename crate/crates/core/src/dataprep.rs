//! Corpus preparation: prefix-augmented training manifests and conversion of
//! word alignments into token traces.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::emission::{strictly_increasing, Utterance};
use crate::error::{read_file, Error, Result};
use crate::timeline::{TimePoint, TimeSpan, TIME_EPSILON};

/// Marker closing complete sentences in a manifest.
pub const EOS_MARKER: &str = "<EOS>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sentence_id: String,
    pub words: Vec<String>,
    /// Complete sentence, written with a trailing EOS marker.
    pub is_full: bool,
}

impl ManifestEntry {
    pub fn full(sentence_id: impl Into<String>, words: Vec<String>) -> Self {
        ManifestEntry {
            sentence_id: sentence_id.into(),
            words,
            is_full: true,
        }
    }

    pub fn to_line(&self) -> String {
        let mut line = format!("{}\t{}", self.sentence_id, self.words.join(" "));
        if self.is_full {
            line.push(' ');
            line.push_str(EOS_MARKER);
        }
        line
    }
}

/// Adds one untagged prefix per sentence next to the full sentence.
///
/// The prefix covers `ceil(L/3)` or `ceil(2L/3)` words, chosen with equal
/// probability from a seeded generator. A draw that would cover the whole
/// sentence yields no prefix.
pub fn augment_prefixes(manifest: &[ManifestEntry], seed: u64) -> Result<Vec<ManifestEntry>> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("manifest has no sentences".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(manifest.len() * 2);
    for entry in manifest {
        if !entry.is_full || entry.words.is_empty() {
            return Err(Error::MalformedInput(format!(
                "sentence {} must be a complete, non-empty sentence",
                entry.sentence_id
            )));
        }
        let len = entry.words.len();
        let prefix_len = if rng.gen_bool(0.5) {
            len.div_ceil(3)
        } else {
            (2 * len).div_ceil(3)
        };
        out.push(entry.clone());
        if prefix_len < len {
            out.push(ManifestEntry {
                sentence_id: format!("{}.prefix{}", entry.sentence_id, prefix_len),
                words: entry.words[..prefix_len].to_vec(),
                is_full: false,
            });
        }
    }
    Ok(out)
}

/// Parses `sentence_id <TAB> word word ... [<EOS>]` lines; entries are full
/// exactly when they end with the EOS marker.
pub fn parse_manifest(text: &str, origin: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected sentence_id <TAB> words"))?;
        if id.is_empty() {
            return Err(Error::parse(origin, i + 1, "empty sentence id"));
        }
        let mut words: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
        let is_full = words.last().is_some_and(|w| w == EOS_MARKER);
        if is_full {
            words.pop();
        }
        if words.iter().any(|w| w == EOS_MARKER) {
            return Err(Error::parse(
                origin,
                i + 1,
                "EOS marker before the end of the sentence",
            ));
        }
        out.push(ManifestEntry {
            sentence_id: id.to_string(),
            words,
            is_full,
        });
    }
    Ok(out)
}

/// Reads a sentence corpus for augmentation: every line is a complete
/// sentence, with or without a trailing EOS marker. Lines without a
/// `sentence_id <TAB>` prefix are named `line<N>` after their line number.
pub fn load_sentences(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text: String = read_file(path)?
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let bare = !line.contains('\t') && !line.trim().is_empty() && !line.starts_with('#');
            if bare {
                format!("line{}\t{line}\n", i + 1)
            } else {
                format!("{line}\n")
            }
        })
        .collect();
    let mut entries = parse_manifest(&text, path)?;
    for e in &mut entries {
        e.is_full = true;
    }
    Ok(entries)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    entries.iter().fold(String::new(), |mut s, e| {
        let _ = writeln!(s, "{}", e.to_line());
        s
    })
}

/// One aligned word: `utterance_id <TAB> word <TAB> start_s <TAB> end_s`.
/// Rows with an empty word mark silence.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedWord {
    pub utterance_id: String,
    pub word: String,
    pub start: TimePoint,
    pub end: TimePoint,
}

pub fn parse_alignment(text: &str, origin: &Path) -> Result<Vec<AlignedWord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 || fields[0].is_empty() {
            return Err(Error::parse(
                origin,
                i + 1,
                "expected utterance_id <TAB> word <TAB> start_s <TAB> end_s",
            ));
        }
        let time = |f: &str| {
            f.trim()
                .parse::<f64>()
                .ok()
                .and_then(|v| TimePoint::new(v).ok())
                .ok_or_else(|| Error::parse(origin, i + 1, format!("bad timestamp {f:?}")))
        };
        let start = time(fields[2])?;
        let end = time(fields[3])?;
        if end.before(start) {
            return Err(Error::parse(origin, i + 1, "word ends before it starts"));
        }
        out.push(AlignedWord {
            utterance_id: fields[0].to_string(),
            word: fields[1].trim().to_string(),
            start,
            end,
        });
    }
    Ok(out)
}

/// Turns word alignments into token traces.
///
/// Each word is emitted at its end time; ties are pushed forward by 1 µs and
/// the last word carries the EOS flag. The source duration is the latest
/// aligned end time, silences included. Utterances without words are skipped
/// with a warning.
pub fn alignment_to_trace(rows: &[AlignedWord]) -> Result<Vec<Utterance>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&AlignedWord>> = HashMap::new();
    for row in rows {
        groups
            .entry(row.utterance_id.as_str())
            .or_insert_with(|| {
                order.push(row.utterance_id.as_str());
                Vec::new()
            })
            .push(row);
    }

    let mut out = Vec::new();
    for id in order {
        let group = &groups[id];
        let words: Vec<&AlignedWord> = group
            .iter()
            .copied()
            .filter(|w| !w.word.is_empty())
            .collect();
        if words.is_empty() {
            warn!("utterance {id} has no words; skipped");
            continue;
        }
        for pair in words.windows(2) {
            if pair[1].end.secs() < pair[0].end.secs() - TIME_EPSILON {
                return Err(Error::MalformedInput(format!(
                    "utterance {id}: word {:?} ends at {} before the previous word ({})",
                    pair[1].word, pair[1].end, pair[0].end
                )));
            }
        }
        let ends: Vec<TimePoint> = words.iter().map(|w| w.end).collect();
        let times = strictly_increasing(&ends);
        let source_end = group
            .iter()
            .map(|w| w.end)
            .fold(TimePoint::ZERO, TimePoint::max)
            .max(*times.last().unwrap());
        let texts: Vec<&str> = words.iter().map(|w| w.word.as_str()).collect();
        out.push(Utterance::from_timed_words(
            id,
            &texts,
            &times,
            true,
            Some(TimeSpan::from_secs(source_end.quantized().secs())),
        )?);
    }
    Ok(out)
}

/// Reads an alignment file and writes the equivalent trace file.
pub fn convert_alignment_file(
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
) -> Result<Vec<Utterance>> {
    let input = input.as_ref();
    let rows = parse_alignment(&read_file(input)?, input)?;
    let utts = alignment_to_trace(&rows)?;
    crate::emission::write_trace(output, &utts)?;
    Ok(utts)
}
