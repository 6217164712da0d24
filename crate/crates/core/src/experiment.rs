//! Experiment driver: strategy comparisons, token-rate sweeps and
//! duration-scale sweeps over a trace corpus, plus report writers.
//!
//! Every utterance is evaluated independently (annotate, plan, schedule) and
//! results are merged in utterance-id order, so reports are byte-stable for a
//! fixed configuration and seed.
//!
//! `report.csv` columns, in order:
//! `strategy, sweep, utterances, mean_start_latency_s, median_start_latency_s,
//! mean_final_latency_s, median_final_latency_s, mean_output_duration_s,
//! mean_lookahead_accuracy` (empty when the strategy makes no predictions).
//!
//! `curve.csv` columns, in order:
//! `sweep, value, strategy, utterances, mean_start_latency_s,
//! mean_final_latency_s, median_final_latency_s, mean_output_duration_s`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emission::{load_trace, Utterance, WaitKConfig};
use crate::error::{read_file, Error, Result};
use crate::lookahead::{annotate, lookahead_accuracy, LookaheadStrategy, ToyDecoder, END_MARKER};
use crate::synth::{
    plan_chunks, scale_plan, validate_scale, ChunkPlan, ComputeModel, ContextModifiers,
    DurationTable, Lexicon, PlanOptions,
};
use crate::timeline::{
    schedule_playback, validate_schedule, LatencyReport, PlaybackSchedule, TimePoint, TimeSpan,
    DEFAULT_FRAME_HOP,
};

/// Where the input of an utterance ends.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputEndMode {
    /// End of the source speech; falls back to the last token when unknown.
    #[default]
    Source,
    /// Emit time of the last token.
    LastToken,
}

impl FromStr for InputEndMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(InputEndMode::Source),
            "last-token" => Ok(InputEndMode::LastToken),
            other => Err(Error::Configuration(format!(
                "input end must be 'source' or 'last-token', got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for InputEndMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputEndMode::Source => "source",
            InputEndMode::LastToken => "last-token",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub traces: Vec<PathBuf>,
    pub strategies: Vec<LookaheadStrategy>,
    /// Re-time every trace with wait-k emission over its source duration.
    pub waitk: Option<WaitKConfig>,
    pub modifiers: ContextModifiers,
    pub compute: ComputeModel,
    pub plan: PlanOptions,
    pub lexicon: Option<PathBuf>,
    pub durations: Option<PathBuf>,
    pub frame_hop: TimeSpan,
    /// Frames for phonemes missing from the duration table.
    pub default_phoneme_frames: u32,
    /// n-gram count file for pseudo lookahead; trained on the corpus when absent.
    pub decoder: Option<PathBuf>,
    pub decoder_order: usize,
    pub input_end: InputEndMode,
    /// Token gaps in seconds for `rate-sweep`.
    pub rates: Vec<f64>,
    /// Duration scales for `scale-sweep`.
    pub alphas: Vec<f64>,
    /// Token gap applied before a scale sweep, if any.
    pub scale_sweep_rate: Option<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            traces: Vec::new(),
            strategies: vec![
                LookaheadStrategy::GroundTruth { depth: 1 },
                LookaheadStrategy::None,
                LookaheadStrategy::pseudo(1),
            ],
            waitk: None,
            modifiers: ContextModifiers::default(),
            compute: ComputeModel::default(),
            plan: PlanOptions::default(),
            lexicon: None,
            durations: None,
            frame_hop: DEFAULT_FRAME_HOP,
            default_phoneme_frames: DurationTable::default().default_frames,
            decoder: None,
            decoder_order: 2,
            input_end: InputEndMode::Source,
            rates: vec![0.28, 0.22],
            alphas: vec![1.0, 0.95, 0.9],
            scale_sweep_rate: None,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML config. Relative paths inside it resolve against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: ExperimentConfig = toml::from_str(&read_file(path)?)
            .map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.traces.iter_mut().for_each(fix);
        cfg.lexicon.iter_mut().for_each(fix);
        cfg.durations.iter_mut().for_each(fix);
        cfg.decoder.iter_mut().for_each(fix);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Configuration(
                "at least one strategy is required".into(),
            ));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        if let Some(w) = &self.waitk {
            w.validate()?;
        }
        self.modifiers.validate()?;
        if self.frame_hop.secs() <= 0.0 {
            return Err(Error::Configuration("frame hop must be positive".into()));
        }
        if self.default_phoneme_frames == 0 {
            return Err(Error::Configuration(
                "default phoneme duration must be >= 1 frame".into(),
            ));
        }
        Ok(())
    }

    /// Effective seed of a randomized strategy: its own seed offset by the run seed.
    fn seeded(&self, strategy: &LookaheadStrategy) -> LookaheadStrategy {
        match strategy {
            LookaheadStrategy::Random { seed, .. } | LookaheadStrategy::Stochastic { seed, .. } => {
                strategy.with_seed(seed.wrapping_add(self.seed))
            }
            other => other.clone(),
        }
    }
}

/// Loaded tables and decoder shared by every utterance of a run.
#[derive(Debug, Clone)]
pub struct Resources {
    pub lexicon: Lexicon,
    pub table: DurationTable,
    pub decoder: Option<ToyDecoder>,
    pub vocabulary: Vec<String>,
}

impl Resources {
    pub fn load(config: &ExperimentConfig, corpus: &[Utterance]) -> Result<Self> {
        let lexicon = match &config.lexicon {
            Some(p) => Lexicon::load(p)?,
            None => Lexicon::new(),
        };
        let mut table = match &config.durations {
            Some(p) => DurationTable::load(p, config.frame_hop)?,
            None => DurationTable::new(config.default_phoneme_frames, config.frame_hop)?,
        };
        table.default_frames = config.default_phoneme_frames;
        let needs_decoder = config
            .strategies
            .iter()
            .any(|s| matches!(s, LookaheadStrategy::Pseudo { .. }));
        let decoder = match (&config.decoder, needs_decoder) {
            (Some(p), _) => Some(ToyDecoder::load_counts(p, config.decoder_order)?),
            (None, true) => {
                warn!(
                    "no decoder given; training an order-{} toy decoder on the evaluated corpus",
                    config.decoder_order
                );
                Some(ToyDecoder::train_on_corpus(config.decoder_order, corpus)?)
            }
            (None, false) => None,
        };
        let mut vocab: BTreeSet<String> = corpus
            .iter()
            .flat_map(|u| u.words().map(str::to_string))
            .collect();
        vocab.insert(END_MARKER.to_string());
        Ok(Resources {
            lexicon,
            table,
            decoder,
            vocabulary: vocab.into_iter().collect(),
        })
    }
}

/// Loads every trace of the config, re-timed with wait-k when configured,
/// sorted by utterance id.
pub fn load_corpus(config: &ExperimentConfig) -> Result<Vec<Utterance>> {
    if config.traces.is_empty() {
        return Err(Error::Configuration("no trace files given".into()));
    }
    let mut corpus = Vec::new();
    for path in &config.traces {
        corpus.extend(load_trace(path)?);
    }
    if let Some(w) = &config.waitk {
        corpus = corpus
            .iter()
            .map(|u| {
                let src = u
                    .source_duration
                    .unwrap_or_else(|| u.last_emit().unwrap_or_default() - TimePoint::ZERO);
                let words: Vec<&str> = u.words().collect();
                let mut re = Utterance::waitk(u.utterance_id.clone(), &words, w, src)?;
                if !u.is_final() {
                    re.tokens.last_mut().unwrap().is_eos = false;
                }
                Ok(re)
            })
            .collect::<Result<Vec<_>>>()?;
    }
    prepare_corpus(corpus)
}

/// Sorts by utterance id and rejects duplicates and empty utterances.
pub fn prepare_corpus(mut corpus: Vec<Utterance>) -> Result<Vec<Utterance>> {
    corpus.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    let mut seen = HashSet::new();
    for u in &corpus {
        if u.is_empty() {
            return Err(Error::EmptyUtterance.context(format!("utterance {}", u.utterance_id)));
        }
        if !seen.insert(u.utterance_id.as_str()) {
            return Err(Error::MalformedInput(format!(
                "duplicate utterance id {}",
                u.utterance_id
            )));
        }
    }
    Ok(corpus)
}

fn round6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Per-utterance outcome, as written to `per_utterance.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub strategy: String,
    /// Sweep point label, `-` outside sweeps.
    pub sweep: String,
    pub tokens: usize,
    pub chunks: usize,
    pub input_end_s: f64,
    pub output_end_s: f64,
    pub start_latency_s: f64,
    pub final_latency_s: f64,
    pub output_precedes_input: bool,
    pub output_duration_s: f64,
    pub queue_wait_s: f64,
    pub frames_emitted: u32,
    pub frames_synthesized: u32,
    pub lookahead_accuracy: Option<f64>,
}

/// Everything computed for one utterance under one strategy.
#[derive(Debug, Clone)]
pub struct UtteranceOutcome {
    pub record: UtteranceRecord,
    pub plan: ChunkPlan,
    pub schedule: PlaybackSchedule,
    pub report: LatencyReport,
}

/// Settings for evaluating one utterance.
#[derive(Debug, Clone)]
pub struct EvalSettings<'a> {
    pub strategy: &'a LookaheadStrategy,
    pub modifiers: &'a ContextModifiers,
    pub compute: &'a ComputeModel,
    pub plan: &'a PlanOptions,
    pub input_end: InputEndMode,
    /// Duration scale applied to the finished plan.
    pub alpha: Option<f64>,
    pub sweep: &'a str,
}

pub fn input_end_of(utt: &Utterance, mode: InputEndMode) -> TimePoint {
    let last = utt.last_emit().unwrap_or_default();
    match (mode, utt.source_duration) {
        (InputEndMode::Source, Some(src)) => TimePoint::ZERO + src,
        _ => last,
    }
}

/// annotate → plan → (scale) → schedule → validate for one utterance.
pub fn evaluate_utterance(
    utt: &Utterance,
    resources: &Resources,
    settings: &EvalSettings<'_>,
) -> Result<UtteranceOutcome> {
    let ctx = |e: Error| e.context(format!("utterance {}", utt.utterance_id));
    let mut decoder = resources.decoder.clone();
    let annotation = annotate(
        utt,
        settings.strategy,
        decoder
            .as_mut()
            .map(|d| d as &mut dyn crate::lookahead::IncrementalDecoder),
        Some(&resources.vocabulary),
    )
    .map_err(ctx)?;
    let mut plan = plan_chunks(
        utt,
        &annotation,
        &resources.lexicon,
        &resources.table,
        settings.modifiers,
        settings.compute,
        settings.plan,
    )
    .map_err(ctx)?;
    if let Some(alpha) = settings.alpha {
        plan = scale_plan(&plan, alpha).map_err(ctx)?;
    }
    let chunks = plan.synthesis_chunks();
    let input_end = input_end_of(utt, settings.input_end);
    let (schedule, report) = schedule_playback(&chunks, input_end).map_err(ctx)?;
    if let Err(v) = validate_schedule(&schedule, &chunks) {
        return Err(ctx(Error::Invariant(format!(
            "emitted schedule is invalid: {v}"
        ))));
    }
    let accuracy = lookahead_accuracy(&annotation).ok();
    let record = UtteranceRecord {
        utterance_id: utt.utterance_id.clone(),
        strategy: settings.strategy.to_string(),
        sweep: settings.sweep.to_string(),
        tokens: utt.len(),
        chunks: chunks.len(),
        input_end_s: round6(report.input_end.secs()),
        output_end_s: round6(report.output_end.secs()),
        start_latency_s: round6(report.start_latency.secs()),
        final_latency_s: round6(report.final_latency),
        output_precedes_input: report.output_precedes_input,
        output_duration_s: round6(plan.output_duration().secs()),
        queue_wait_s: round6(report.total_queue_wait().secs()),
        frames_emitted: plan.total_frames_emitted(),
        frames_synthesized: plan.total_frames_synthesized(),
        lookahead_accuracy: accuracy.map(round6),
    };
    Ok(UtteranceOutcome {
        record,
        plan,
        schedule,
        report,
    })
}

/// Evaluates a corpus in parallel; outcomes come back in utterance-id order.
pub fn evaluate_corpus(
    corpus: &[Utterance],
    resources: &Resources,
    settings: &EvalSettings<'_>,
) -> Result<Vec<UtteranceOutcome>> {
    let mut outcomes = corpus
        .par_iter()
        .map(|u| evaluate_utterance(u, resources, settings))
        .collect::<Result<Vec<_>>>()?;
    outcomes.sort_by(|a, b| a.record.utterance_id.cmp(&b.record.utterance_id));
    Ok(outcomes)
}

/// Aggregate over one (strategy, sweep point) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub strategy: String,
    pub sweep: String,
    pub utterances: usize,
    pub mean_start_latency_s: f64,
    pub median_start_latency_s: f64,
    pub mean_final_latency_s: f64,
    pub median_final_latency_s: f64,
    pub mean_output_duration_s: f64,
    pub mean_lookahead_accuracy: Option<f64>,
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Aggregates records that share a strategy and sweep label.
pub fn aggregate(records: &[UtteranceRecord]) -> AggregateRow {
    let col = |f: fn(&UtteranceRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let starts = col(|r| r.start_latency_s);
    let finals = col(|r| r.final_latency_s);
    let accs: Vec<f64> = records
        .iter()
        .filter_map(|r| r.lookahead_accuracy)
        .collect();
    AggregateRow {
        strategy: records
            .first()
            .map(|r| r.strategy.clone())
            .unwrap_or_default(),
        sweep: records.first().map(|r| r.sweep.clone()).unwrap_or_default(),
        utterances: records.len(),
        mean_start_latency_s: mean(&starts),
        median_start_latency_s: median(&starts),
        mean_final_latency_s: mean(&finals),
        median_final_latency_s: median(&finals),
        mean_output_duration_s: mean(&col(|r| r.output_duration_s)),
        mean_lookahead_accuracy: (!accs.is_empty()).then(|| mean(&accs)),
    }
}

/// Aggregate table plus the per-utterance records it was computed from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<AggregateRow>,
    pub records: Vec<UtteranceRecord>,
}

impl ComparisonReport {
    pub fn row(&self, strategy: &LookaheadStrategy) -> Option<&AggregateRow> {
        let label = strategy.to_string();
        self.rows.iter().find(|r| r.strategy == label)
    }
}

/// Runs every configured strategy over the corpus.
pub fn run_comparison(config: &ExperimentConfig, corpus: &[Utterance]) -> Result<ComparisonReport> {
    config.validate()?;
    let resources = Resources::load(config, corpus)?;
    run_with(config, corpus, &resources, None, "-")
}

fn run_with(
    config: &ExperimentConfig,
    corpus: &[Utterance],
    resources: &Resources,
    alpha: Option<f64>,
    sweep: &str,
) -> Result<ComparisonReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus has no utterances".into()));
    }
    let mut report = ComparisonReport::default();
    for strategy in &config.strategies {
        let strategy = config.seeded(strategy);
        let settings = EvalSettings {
            strategy: &strategy,
            modifiers: &config.modifiers,
            compute: &config.compute,
            plan: &config.plan,
            input_end: config.input_end,
            alpha,
            sweep,
        };
        let records: Vec<UtteranceRecord> = evaluate_corpus(corpus, resources, &settings)?
            .into_iter()
            .map(|o| o.record)
            .collect();
        info!("{strategy} [{sweep}]: {} utterances", records.len());
        report.rows.push(aggregate(&records));
        report.records.extend(records);
    }
    Ok(report)
}

/// One point of a sweep curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// `rate` or `alpha`.
    pub sweep: String,
    pub value: f64,
    pub strategy: String,
    pub utterances: usize,
    pub mean_start_latency_s: f64,
    pub mean_final_latency_s: f64,
    pub median_final_latency_s: f64,
    pub mean_output_duration_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub points: Vec<CurvePoint>,
    pub records: Vec<UtteranceRecord>,
}

impl SweepReport {
    pub fn point(&self, strategy: &LookaheadStrategy, value: f64) -> Option<&CurvePoint> {
        let label = strategy.to_string();
        self.points
            .iter()
            .find(|p| p.strategy == label && (p.value - value).abs() < 1e-12)
    }
}

/// Sorted descending and deduplicated, so the curve does not depend on the
/// order the points were given in.
fn sweep_values(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Configuration(format!("{what} list is empty")));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    Ok(v)
}

fn curve_points(kind: &str, value: f64, report: &ComparisonReport) -> Vec<CurvePoint> {
    report
        .rows
        .iter()
        .map(|row| CurvePoint {
            sweep: kind.to_string(),
            value,
            strategy: row.strategy.clone(),
            utterances: row.utterances,
            mean_start_latency_s: row.mean_start_latency_s,
            mean_final_latency_s: row.mean_final_latency_s,
            median_final_latency_s: row.median_final_latency_s,
            mean_output_duration_s: row.mean_output_duration_s,
        })
        .collect()
}

fn retime_corpus(corpus: &[Utterance], gap: f64) -> Result<Vec<Utterance>> {
    let gap = TimeSpan::new(gap)
        .ok()
        .filter(|g| g.secs() > 0.0)
        .ok_or_else(|| Error::Configuration(format!("token rate must be positive, got {gap}")))?;
    corpus.iter().map(|u| u.retimed(gap)).collect()
}

/// Re-times the corpus to each constant token gap and measures latency.
/// Input end is the last token in every case.
pub fn rate_sweep(
    config: &ExperimentConfig,
    corpus: &[Utterance],
    rates: &[f64],
) -> Result<SweepReport> {
    config.validate()?;
    let rates = sweep_values(rates, "rate")?;
    let resources = Resources::load(config, corpus)?;
    let cfg = ExperimentConfig {
        input_end: InputEndMode::LastToken,
        ..config.clone()
    };
    let mut out = SweepReport::default();
    for rate in rates {
        let retimed = retime_corpus(corpus, rate)?;
        let label = format!("rate={rate}");
        let report = run_with(&cfg, &retimed, &resources, None, &label)?;
        out.points.extend(curve_points("rate", rate, &report));
        out.records.extend(report.records);
    }
    Ok(out)
}

/// Rescales every plan's durations by each α and measures latency and output length.
pub fn scale_sweep(
    config: &ExperimentConfig,
    corpus: &[Utterance],
    alphas: &[f64],
) -> Result<SweepReport> {
    config.validate()?;
    let alphas = sweep_values(alphas, "alpha")?;
    for &a in &alphas {
        validate_scale(a)?;
    }
    let resources = Resources::load(config, corpus)?;
    let (corpus, cfg) = match config.scale_sweep_rate {
        Some(rate) => (
            retime_corpus(corpus, rate)?,
            ExperimentConfig {
                input_end: InputEndMode::LastToken,
                ..config.clone()
            },
        ),
        None => (corpus.to_vec(), config.clone()),
    };
    let mut out = SweepReport::default();
    for alpha in alphas {
        let label = format!("alpha={alpha}");
        let report = run_with(&cfg, &corpus, &resources, Some(alpha), &label)?;
        out.points.extend(curve_points("alpha", alpha, &report));
        out.records.extend(report.records);
    }
    Ok(out)
}

fn fmt6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const REPORT_HEADER: &str = "strategy,sweep,utterances,mean_start_latency_s,median_start_latency_s,mean_final_latency_s,median_final_latency_s,mean_output_duration_s,mean_lookahead_accuracy";
pub const CURVE_HEADER: &str = "sweep,value,strategy,utterances,mean_start_latency_s,mean_final_latency_s,median_final_latency_s,mean_output_duration_s";

pub fn format_report_csv(rows: &[AggregateRow]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(&r.strategy),
            csv_field(&r.sweep),
            r.utterances,
            fmt6(r.mean_start_latency_s),
            fmt6(r.median_start_latency_s),
            fmt6(r.mean_final_latency_s),
            fmt6(r.median_final_latency_s),
            fmt6(r.mean_output_duration_s),
            r.mean_lookahead_accuracy.map(fmt6).unwrap_or_default(),
        );
    }
    out
}

pub fn format_curve_csv(points: &[CurvePoint]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.sweep,
            fmt6(p.value),
            csv_field(&p.strategy),
            p.utterances,
            fmt6(p.mean_start_latency_s),
            fmt6(p.mean_final_latency_s),
            fmt6(p.median_final_latency_s),
            fmt6(p.mean_output_duration_s),
        );
    }
    out
}

pub fn format_records_jsonl(records: &[UtteranceRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::Invariant(format!("record serialization failed: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn write_report_csv(dir: &Path, rows: &[AggregateRow]) -> Result<PathBuf> {
    write_out(dir, "report.csv", &format_report_csv(rows))
}

pub fn write_curve_csv(dir: &Path, points: &[CurvePoint]) -> Result<PathBuf> {
    write_out(dir, "curve.csv", &format_curve_csv(points))
}

pub fn write_records(dir: &Path, records: &[UtteranceRecord]) -> Result<PathBuf> {
    write_out(dir, "per_utterance.jsonl", &format_records_jsonl(records)?)
}
