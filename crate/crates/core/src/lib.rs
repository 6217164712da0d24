//! Latency simulation for simultaneous speech-to-speech translation.
//!
//! A translation model emits timestamped tokens ([`emission`]); an incremental
//! synthesizer turns each token step into an audio chunk, optionally using
//! real or predicted lookahead words ([`lookahead`], [`synth`]); chunks are
//! played back to back on one device and the end-to-end latency is measured
//! ([`timeline`]). [`experiment`] drives strategy comparisons and sweeps over
//! token rate and duration scale; [`dataprep`] prepares training manifests and
//! traces from word alignments.

pub mod dataprep;
pub mod emission;
pub mod error;
pub mod experiment;
pub mod lookahead;
pub mod synth;
pub mod timeline;

pub use emission::{load_trace, waitk_emit_times, TokenEvent, Utterance, WaitKConfig};
pub use error::{Error, Result};
pub use lookahead::{
    annotate, generate_pseudo, lookahead_accuracy, IncrementalDecoder, LookaheadAnnotation,
    LookaheadStrategy, ToyDecoder,
};
pub use synth::{
    plan_chunks, predict_durations, scale_plan, ChunkPlan, ComputeModel, ContextModifiers,
    DurationTable, Lexicon,
};
pub use timeline::{
    schedule_playback, validate_schedule, LatencyReport, PlaybackSchedule, SynthesisChunk,
    TimePoint, TimeSpan,
};
