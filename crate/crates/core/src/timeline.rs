//! Time types, the playback scheduler and the end-to-end latency metric.
//!
//! Audio chunks are played on a single output device: a chunk can start only
//! once its inputs have arrived and it has been synthesized, and only after the
//! previous chunk has finished playing. Latency is measured between the end of
//! the input stream and the end of the played output.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for every time comparison (1 µs).
pub const TIME_EPSILON: f64 = 1e-6;

/// Default spectrogram frame hop: 11.6 ms.
pub const DEFAULT_FRAME_HOP: TimeSpan = TimeSpan(0.0116);

fn check_time(seconds: f64, what: &str) -> Result<f64> {
    if !seconds.is_finite() || seconds < 0.0 {
        return Err(Error::MalformedInput(format!(
            "{what} must be finite and non-negative, got {seconds}"
        )));
    }
    Ok(seconds)
}

/// An instant on the utterance time axis, in seconds from the utterance origin.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TimePoint(f64);

/// A non-negative length of time in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TimeSpan(f64);

impl TimePoint {
    pub const ZERO: TimePoint = TimePoint(0.0);

    pub fn new(seconds: f64) -> Result<Self> {
        check_time(seconds, "time point").map(TimePoint)
    }

    /// Panics on negative or non-finite input, like `Duration::from_secs_f64`.
    pub fn from_secs(seconds: f64) -> Self {
        Self::new(seconds).expect("invalid time point")
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    /// Signed difference `self - earlier` in seconds.
    pub fn signed_since(self, earlier: TimePoint) -> f64 {
        self.0 - earlier.0
    }

    /// Span from `earlier` to `self`, clamped at zero.
    pub fn saturating_since(self, earlier: TimePoint) -> TimeSpan {
        TimeSpan((self.0 - earlier.0).max(0.0))
    }

    pub fn max(self, other: TimePoint) -> TimePoint {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: TimePoint) -> TimePoint {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    pub fn approx_eq(self, other: TimePoint) -> bool {
        (self.0 - other.0).abs() <= TIME_EPSILON
    }

    /// `self < other` beyond the comparison tolerance.
    pub fn before(self, other: TimePoint) -> bool {
        self.0 < other.0 - TIME_EPSILON
    }

    /// Rounded to the nearest whole microsecond.
    pub fn quantized(self) -> TimePoint {
        TimePoint((self.0 * 1e6).round() / 1e6)
    }
}

impl TimeSpan {
    pub const ZERO: TimeSpan = TimeSpan(0.0);

    pub fn new(seconds: f64) -> Result<Self> {
        check_time(seconds, "time span").map(TimeSpan)
    }

    pub fn from_secs(seconds: f64) -> Self {
        Self::new(seconds).expect("invalid time span")
    }

    pub const fn from_millis(ms: u64) -> Self {
        TimeSpan(ms as f64 / 1e3)
    }

    pub const fn from_micros(us: u64) -> Self {
        TimeSpan(us as f64 / 1e6)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn approx_eq(self, other: TimeSpan) -> bool {
        (self.0 - other.0).abs() <= TIME_EPSILON
    }
}

impl TryFrom<f64> for TimePoint {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        TimePoint::new(v)
    }
}

impl From<TimePoint> for f64 {
    fn from(t: TimePoint) -> f64 {
        t.0
    }
}

impl TryFrom<f64> for TimeSpan {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        TimeSpan::new(v)
    }
}

impl From<TimeSpan> for f64 {
    fn from(t: TimeSpan) -> f64 {
        t.0
    }
}

impl Add<TimeSpan> for TimePoint {
    type Output = TimePoint;
    fn add(self, rhs: TimeSpan) -> TimePoint {
        TimePoint(self.0 + rhs.0)
    }
}

impl AddAssign<TimeSpan> for TimePoint {
    fn add_assign(&mut self, rhs: TimeSpan) {
        self.0 += rhs.0;
    }
}

impl Add for TimeSpan {
    type Output = TimeSpan;
    fn add(self, rhs: TimeSpan) -> TimeSpan {
        TimeSpan(self.0 + rhs.0)
    }
}

impl AddAssign for TimeSpan {
    fn add_assign(&mut self, rhs: TimeSpan) {
        self.0 += rhs.0;
    }
}

impl Sub for TimePoint {
    type Output = TimeSpan;
    /// Saturating difference; use [`TimePoint::signed_since`] when the sign matters.
    fn sub(self, rhs: TimePoint) -> TimeSpan {
        self.saturating_since(rhs)
    }
}

impl Mul<f64> for TimeSpan {
    type Output = TimeSpan;
    fn mul(self, factor: f64) -> TimeSpan {
        assert!(
            factor.is_finite() && factor >= 0.0,
            "time spans scale by non-negative factors only"
        );
        TimeSpan(self.0 * factor)
    }
}

impl std::iter::Sum for TimeSpan {
    fn sum<I: Iterator<Item = TimeSpan>>(iter: I) -> TimeSpan {
        iter.fold(TimeSpan::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.0)
    }
}

impl fmt::Display for TimeSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.0)
    }
}

/// One synthesized audio segment handed to the playback device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisChunk {
    pub chunk_index: usize,
    pub words: Vec<String>,
    /// When every input this chunk depends on (lookahead included) was available.
    pub ready_time: TimePoint,
    pub compute_time: TimeSpan,
    pub play_duration: TimeSpan,
    pub frame_count: u32,
}

impl SynthesisChunk {
    /// A chunk described by its frame count; `play_duration = frames × frame_hop`.
    pub fn from_frames(
        chunk_index: usize,
        words: Vec<String>,
        ready_time: TimePoint,
        compute_time: TimeSpan,
        frame_count: u32,
        frame_hop: TimeSpan,
    ) -> Self {
        SynthesisChunk {
            chunk_index,
            words,
            ready_time,
            compute_time,
            play_duration: frame_hop * frame_count as f64,
            frame_count,
        }
    }

    /// A timing-only chunk. The frame count is derived from the duration at
    /// the default frame hop.
    pub fn timed(
        chunk_index: usize,
        ready_time: TimePoint,
        compute_time: TimeSpan,
        play_duration: TimeSpan,
    ) -> Self {
        SynthesisChunk {
            chunk_index,
            words: Vec::new(),
            ready_time,
            compute_time,
            play_duration,
            frame_count: (play_duration.secs() / DEFAULT_FRAME_HOP.secs()).round() as u32,
        }
    }

    /// Earliest instant the chunk could start playing on an idle device.
    pub fn available_at(&self) -> TimePoint {
        self.ready_time + self.compute_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaybackEntry {
    pub chunk_index: usize,
    pub play_start: TimePoint,
    pub play_end: TimePoint,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlaybackSchedule {
    pub entries: Vec<PlaybackEntry>,
}

impl PlaybackSchedule {
    pub fn output_end(&self) -> Option<TimePoint> {
        self.entries.last().map(|e| e.play_end)
    }

    pub fn output_start(&self) -> Option<TimePoint> {
        self.entries.first().map(|e| e.play_start)
    }
}

/// Latency numbers for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub input_end: TimePoint,
    pub output_end: TimePoint,
    /// Play start of the first chunk, measured from the utterance origin.
    pub start_latency: TimeSpan,
    /// `output_end - input_end`, signed. Negative only for degenerate traces.
    pub final_latency: f64,
    /// Set when the output finished before the input did.
    pub output_precedes_input: bool,
    /// Time each chunk spent synthesized but waiting for the device.
    pub per_chunk_queue_wait: Vec<TimeSpan>,
}

impl LatencyReport {
    pub fn total_queue_wait(&self) -> TimeSpan {
        self.per_chunk_queue_wait.iter().copied().sum()
    }
}

/// Plays chunks back to back under causality and non-overlap.
///
/// `play_start(i) = max(ready(i) + compute(i), play_end(i-1))` with
/// `play_end(-1) = 0`, and `play_end(i) = play_start(i) + duration(i)`.
pub fn schedule_playback(
    chunks: &[SynthesisChunk],
    input_end: TimePoint,
) -> Result<(PlaybackSchedule, LatencyReport)> {
    if chunks.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    if let Some(w) = chunks
        .windows(2)
        .find(|w| w[1].chunk_index <= w[0].chunk_index)
    {
        return Err(Error::MalformedInput(format!(
            "chunk index {} follows {}; chunk indices must increase",
            w[1].chunk_index, w[0].chunk_index
        )));
    }

    let mut entries = Vec::with_capacity(chunks.len());
    let mut queue_wait = Vec::with_capacity(chunks.len());
    let mut device_free = TimePoint::ZERO;
    for chunk in chunks {
        let available = chunk.available_at();
        let play_start = available.max(device_free);
        let play_end = play_start + chunk.play_duration;
        queue_wait.push(play_start - available);
        entries.push(PlaybackEntry {
            chunk_index: chunk.chunk_index,
            play_start,
            play_end,
        });
        device_free = play_end;
    }

    let output_end = device_free;
    let final_latency = output_end.signed_since(input_end);
    let report = LatencyReport {
        input_end,
        output_end,
        start_latency: entries[0].play_start - TimePoint::ZERO,
        final_latency,
        output_precedes_input: final_latency < -TIME_EPSILON,
        per_chunk_queue_wait: queue_wait,
    };
    Ok((PlaybackSchedule { entries }, report))
}

/// The first broken schedule invariant, if any.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleViolation {
    LengthMismatch {
        entries: usize,
        chunks: usize,
    },
    /// Entry index order differs from the chunk list, or start after end.
    Ordering {
        index: usize,
    },
    /// Playback begins before the previous chunk has finished.
    Overlap {
        index: usize,
    },
    /// Playback begins before the chunk's inputs and synthesis are done.
    Causality {
        index: usize,
    },
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleViolation::LengthMismatch { entries, chunks } => {
                write!(f, "schedule has {entries} entries for {chunks} chunks")
            }
            ScheduleViolation::Ordering { index } => {
                write!(f, "ordering violated at entry {index}")
            }
            ScheduleViolation::Overlap { index } => write!(f, "overlap at entry {index}"),
            ScheduleViolation::Causality { index } => {
                write!(f, "causality violated at entry {index}")
            }
        }
    }
}

pub fn validate_schedule(
    schedule: &PlaybackSchedule,
    chunks: &[SynthesisChunk],
) -> std::result::Result<(), ScheduleViolation> {
    if schedule.entries.len() != chunks.len() {
        return Err(ScheduleViolation::LengthMismatch {
            entries: schedule.entries.len(),
            chunks: chunks.len(),
        });
    }
    for (i, (entry, chunk)) in schedule.entries.iter().zip(chunks).enumerate() {
        if entry.chunk_index != chunk.chunk_index || entry.play_end.before(entry.play_start) {
            return Err(ScheduleViolation::Ordering { index: i });
        }
        if i > 0 {
            let prev = &schedule.entries[i - 1];
            if entry.chunk_index <= prev.chunk_index {
                return Err(ScheduleViolation::Ordering { index: i });
            }
            if entry.play_start.before(prev.play_end) {
                return Err(ScheduleViolation::Overlap { index: i });
            }
        }
        if entry.play_start.before(chunk.available_at()) {
            return Err(ScheduleViolation::Causality { index: i });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: f64) -> TimePoint {
        TimePoint::from_secs(s)
    }

    fn d(s: f64) -> TimeSpan {
        TimeSpan::from_secs(s)
    }

    #[test]
    fn single_chunk_ends_with_input() {
        let chunks = [SynthesisChunk::timed(0, t(0.0), d(0.0), d(2.0))];
        let (_, report) = schedule_playback(&chunks, t(2.0)).unwrap();
        assert!(report.final_latency.abs() < 1e-12);
        assert!(!report.output_precedes_input);
    }

    #[test]
    fn three_chunks_queue_behind_each_other() {
        let chunks: Vec<_> = [0.28, 0.56, 0.84]
            .iter()
            .enumerate()
            .map(|(i, &r)| SynthesisChunk::timed(i, t(r), d(0.0), d(1.0)))
            .collect();
        let (schedule, report) = schedule_playback(&chunks, t(0.84)).unwrap();
        let ends: Vec<f64> = schedule.entries.iter().map(|e| e.play_end.secs()).collect();
        for (got, want) in ends.iter().zip([1.28, 2.28, 3.28]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!((report.final_latency - 2.44).abs() < 1e-9);
        assert!((report.per_chunk_queue_wait[1].secs() - 0.72).abs() < 1e-9);
        assert!((report.per_chunk_queue_wait[2].secs() - 1.44).abs() < 1e-9);
    }

    #[test]
    fn congestion_costs_for_faster_tokens() {
        let run = |r: f64| {
            let chunks: Vec<_> = (0..20)
                .map(|i| SynthesisChunk::timed(i, t(r * (i + 1) as f64), d(0.0), d(0.28)))
                .collect();
            schedule_playback(&chunks, t(r * 20.0)).unwrap().1
        };
        let fast = run(0.22);
        let slow = run(0.28);
        assert!((fast.output_end.secs() - 5.82).abs() < 1e-9);
        assert!((fast.final_latency - 1.42).abs() < 1e-9);
        assert!((slow.final_latency - 0.28).abs() < 1e-9);
        assert!((fast.final_latency - slow.final_latency - 1.14).abs() < 1e-9);
    }

    #[test]
    fn negative_latency_is_flagged_not_clamped() {
        let chunks = [SynthesisChunk::timed(0, t(0.0), d(0.0), d(0.5))];
        let (_, report) = schedule_playback(&chunks, t(2.0)).unwrap();
        assert!((report.final_latency + 1.5).abs() < 1e-12);
        assert!(report.output_precedes_input);
    }

    #[test]
    fn empty_and_unordered_inputs_are_rejected() {
        assert!(matches!(
            schedule_playback(&[], t(0.0)),
            Err(Error::EmptyUtterance)
        ));
        let chunks = [
            SynthesisChunk::timed(1, t(0.0), d(0.0), d(0.5)),
            SynthesisChunk::timed(0, t(0.1), d(0.0), d(0.5)),
        ];
        assert!(matches!(
            schedule_playback(&chunks, t(0.0)),
            Err(Error::MalformedInput(_))
        ));
    }

    #[test]
    fn validation_reports_first_violation() {
        let chunks: Vec<_> = (0..3)
            .map(|i| SynthesisChunk::timed(i, t(0.1 * i as f64), d(0.01), d(0.5)))
            .collect();
        let (schedule, _) = schedule_playback(&chunks, t(0.3)).unwrap();
        assert_eq!(validate_schedule(&schedule, &chunks), Ok(()));

        let mut overlapping = schedule.clone();
        overlapping.entries[2].play_start = t(overlapping.entries[1].play_end.secs() - 0.1);
        assert_eq!(
            validate_schedule(&overlapping, &chunks),
            Err(ScheduleViolation::Overlap { index: 2 })
        );

        let mut early = schedule.clone();
        early.entries[0].play_start = t(0.0);
        assert_eq!(
            validate_schedule(&early, &chunks),
            Err(ScheduleViolation::Causality { index: 0 })
        );

        let mut swapped = schedule.clone();
        swapped.entries.swap(0, 1);
        assert_eq!(
            validate_schedule(&swapped, &chunks),
            Err(ScheduleViolation::Ordering { index: 0 })
        );

        assert!(matches!(
            validate_schedule(&schedule, &chunks[..2]),
            Err(ScheduleViolation::LengthMismatch { .. })
        ));
    }

    #[test]
    fn time_types_reject_invalid_values() {
        assert!(TimePoint::new(-0.1).is_err());
        assert!(TimeSpan::new(f64::NAN).is_err());
        assert!(TimeSpan::new(f64::INFINITY).is_err());
        assert_eq!(t(1.0) - t(2.0), TimeSpan::ZERO);
        assert!((t(1.0).signed_since(t(2.0)) + 1.0).abs() < 1e-12);
        assert_eq!(t(0.1234564).quantized(), t(0.123456));
    }

    #[test]
    fn serde_rejects_negative_times() {
        assert!(serde_json::from_str::<TimePoint>("-1.0").is_err());
        let p: TimeSpan = serde_json::from_str("0.25").unwrap();
        assert_eq!(p, d(0.25));
    }
}
