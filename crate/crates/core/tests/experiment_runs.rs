use std::path::Path;

use s2s_latency::emission::Utterance;
use s2s_latency::experiment::{
    evaluate_corpus, format_curve_csv, format_records_jsonl, format_report_csv, prepare_corpus,
    rate_sweep, run_comparison, scale_sweep, write_records, EvalSettings, ExperimentConfig,
    InputEndMode, Resources,
};
use s2s_latency::lookahead::LookaheadStrategy;
use s2s_latency::synth::{ComputeModel, ContextModifiers};
use s2s_latency::timeline::{validate_schedule, TimePoint, TimeSpan};
use tempfile::TempDir;

const HOP: f64 = 0.0116;

/// Every word is two phonemes of 16 + 8 frames, 24 frames = 0.2784 s.
fn setup(words: &[&str]) -> (TempDir, ExperimentConfig) {
    let dir = tempfile::tempdir().unwrap();
    let lex: String = words.iter().map(|w| format!("{w}\tA{w} B{w}\n")).collect();
    let dur: String = words
        .iter()
        .map(|w| format!("A{w}\t16\nB{w}\t8\n"))
        .collect();
    std::fs::write(dir.path().join("lex.tsv"), lex).unwrap();
    std::fs::write(dir.path().join("dur.tsv"), dur).unwrap();
    let cfg = ExperimentConfig {
        lexicon: Some(dir.path().join("lex.tsv")),
        durations: Some(dir.path().join("dur.tsv")),
        ..Default::default()
    };
    (dir, cfg)
}

const WORDS: [&str; 8] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
];

fn corpus(sizes: &[usize], gap: f64) -> Vec<Utterance> {
    let mut out = Vec::new();
    for (u, &n) in sizes.iter().enumerate() {
        let words: Vec<&str> = (0..n).map(|i| WORDS[(i * 3 + u) % WORDS.len()]).collect();
        let times: Vec<TimePoint> = (1..=n)
            .map(|i| TimePoint::from_secs(i as f64 * gap))
            .collect();
        let src = TimeSpan::from_secs(n as f64 * gap + 0.1);
        out.push(
            Utterance::from_timed_words(format!("u{u:02}"), &words, &times, true, Some(src))
                .unwrap(),
        );
    }
    prepare_corpus(out).unwrap()
}

fn approx(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn aggregates_recompute_from_records() {
    let (_d, cfg) = setup(&WORDS);
    let corpus = corpus(&[3, 8, 1, 12, 5, 6], 0.25);
    let report = run_comparison(&cfg, &corpus).unwrap();
    assert_eq!(report.rows.len(), cfg.strategies.len());
    for row in &report.rows {
        let recs: Vec<_> = report
            .records
            .iter()
            .filter(|r| r.strategy == row.strategy)
            .collect();
        assert_eq!(row.utterances, corpus.len());
        assert_eq!(recs.len(), corpus.len());
        let finals: Vec<f64> = recs.iter().map(|r| r.final_latency_s).collect();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        assert!(approx(row.mean_final_latency_s, mean, 1e-12));
        let mut sorted = finals.clone();
        sorted.sort_by(f64::total_cmp);
        let median = (sorted[2] + sorted[3]) / 2.0;
        assert!(approx(row.median_final_latency_s, median, 1e-12));
        let start: f64 = recs.iter().map(|r| r.start_latency_s).sum::<f64>() / recs.len() as f64;
        assert!(approx(row.mean_start_latency_s, start, 1e-12));
        let dur: f64 = recs.iter().map(|r| r.output_duration_s).sum::<f64>() / recs.len() as f64;
        assert!(approx(row.mean_output_duration_s, dur, 1e-12));
    }
}

#[test]
fn every_schedule_validates() {
    let (_d, cfg) = setup(&WORDS);
    let corpus = corpus(&[1, 2, 7, 20, 4], 0.22);
    let resources = Resources::load(&cfg, &corpus).unwrap();
    let strategies = [
        LookaheadStrategy::None,
        LookaheadStrategy::GroundTruth { depth: 2 },
        LookaheadStrategy::pseudo(1),
        LookaheadStrategy::Random { depth: 1, seed: 3 },
        LookaheadStrategy::Stochastic {
            accuracy: 0.4,
            depth: 3,
            seed: 5,
        },
    ];
    for s in &strategies {
        let settings = EvalSettings {
            strategy: s,
            modifiers: &cfg.modifiers,
            compute: &cfg.compute,
            plan: &cfg.plan,
            input_end: InputEndMode::Source,
            alpha: Some(0.9),
            sweep: "-",
        };
        let outcomes = evaluate_corpus(&corpus, &resources, &settings).unwrap();
        let ids: Vec<&str> = outcomes
            .iter()
            .map(|o| o.record.utterance_id.as_str())
            .collect();
        assert_eq!(ids, ["u00", "u01", "u02", "u03", "u04"]);
        for o in &outcomes {
            validate_schedule(&o.schedule, &o.plan.synthesis_chunks()).unwrap();
        }
    }
}

#[test]
fn runs_are_deterministic_and_order_independent() {
    let (_d, mut cfg) = setup(&WORDS);
    cfg.strategies.push(LookaheadStrategy::Stochastic {
        accuracy: 0.5,
        depth: 1,
        seed: 0,
    });
    cfg.seed = 11;
    let c = corpus(&[4, 9, 2, 6, 6, 3, 10], 0.2);
    let mut shuffled = c.clone();
    shuffled.reverse();
    let shuffled = prepare_corpus(shuffled).unwrap();
    let a = run_comparison(&cfg, &c).unwrap();
    let b = run_comparison(&cfg, &shuffled).unwrap();
    assert_eq!(format_report_csv(&a.rows), format_report_csv(&b.rows));
    assert_eq!(
        format_records_jsonl(&a.records).unwrap(),
        format_records_jsonl(&b.records).unwrap()
    );

    let dir = tempfile::tempdir().unwrap();
    let p1 = write_records(dir.path(), &a.records).unwrap();
    let first = std::fs::read(&p1).unwrap();
    write_records(dir.path(), &b.records).unwrap();
    assert_eq!(first, std::fs::read(&p1).unwrap());

    cfg.seed = 12;
    let c2 = run_comparison(&cfg, &c).unwrap();
    let acc = |r: &s2s_latency::experiment::ComparisonReport| {
        r.rows
            .iter()
            .find(|x| x.strategy.starts_with("stochastic"))
            .unwrap()
            .mean_lookahead_accuracy
    };
    assert_ne!(acc(&a), acc(&c2));
}

#[test]
fn single_utterance_aggregate_is_the_record() {
    let (_d, mut cfg) = setup(&WORDS);
    cfg.strategies = vec![LookaheadStrategy::GroundTruth { depth: 1 }];
    let report = run_comparison(&cfg, &corpus(&[5], 0.3)).unwrap();
    let (row, rec) = (&report.rows[0], &report.records[0]);
    assert_eq!(row.utterances, 1);
    assert_eq!(row.mean_final_latency_s, rec.final_latency_s);
    assert_eq!(row.median_final_latency_s, rec.final_latency_s);
    assert_eq!(row.mean_start_latency_s, rec.start_latency_s);
    assert_eq!(row.mean_output_duration_s, rec.output_duration_s);
}

#[test]
fn rate_sweep_follows_the_queue_closed_form() {
    let (_d, mut cfg) = setup(&WORDS);
    cfg.strategies = vec![LookaheadStrategy::GroundTruth { depth: 1 }];
    cfg.modifiers = ContextModifiers::neutral();
    cfg.compute = ComputeModel::free();
    let n = 20;
    let c = corpus(&[n], 0.5);
    let sweep = rate_sweep(&cfg, &c, &[0.22, 0.28]).unwrap();
    let d = 24.0 * HOP;
    let nf = n as f64;
    // Chunk t waits for token t+1, the last two chunks share a ready time.
    let congested = 2.0 * 0.22 + nf * (d - 0.22);
    let relaxed = 2.0 * d;
    let gt = LookaheadStrategy::GroundTruth { depth: 1 };
    let at = |r: f64| sweep.point(&gt, r).unwrap().mean_final_latency_s;
    assert!(
        approx(at(0.22), congested, 1e-6),
        "{} vs {congested}",
        at(0.22)
    );
    assert!(approx(at(0.28), relaxed, 1e-6), "{} vs {relaxed}", at(0.28));
    assert_eq!(sweep.points[0].value, 0.28);
}

#[test]
fn rate_sweep_without_queueing_is_flat() {
    let (_d, mut cfg) = setup(&WORDS);
    cfg.strategies = vec![LookaheadStrategy::None];
    cfg.compute = ComputeModel::free();
    let c = corpus(&[6, 3, 11], 0.4);
    let sweep = rate_sweep(&cfg, &c, &[0.5, 0.8, 1.3]).unwrap();
    assert_eq!(sweep.points.len(), 3);
    for rec in &sweep.records {
        // The final word gets the end-of-input stretch and nothing else.
        let last = (16.0 * 1.15f64).round() + (8.0 * 1.15f64).round();
        assert!(approx(rec.final_latency_s, last * HOP, 1e-6), "{rec:?}");
    }
    let single = rate_sweep(&cfg, &c, &[0.5]).unwrap();
    assert_eq!(single.points.len(), 1);
}

#[test]
fn scale_sweep_is_monotone_and_order_independent() {
    let (_d, mut cfg) = setup(&WORDS);
    cfg.strategies = vec![
        LookaheadStrategy::GroundTruth { depth: 1 },
        LookaheadStrategy::None,
    ];
    cfg.scale_sweep_rate = Some(0.22);
    let c = corpus(&[20, 20, 20], 0.3);
    let a = scale_sweep(&cfg, &c, &[1.0, 0.95, 0.9]).unwrap();
    let b = scale_sweep(&cfg, &c, &[0.9, 1.0, 0.95, 0.9]).unwrap();
    assert_eq!(format_curve_csv(&a.points), format_curve_csv(&b.points));
    for s in &cfg.strategies {
        let v: Vec<f64> = [1.0, 0.95, 0.9]
            .iter()
            .map(|&x| a.point(s, x).unwrap().mean_final_latency_s)
            .collect();
        assert!(v[0] > v[1] && v[1] > v[2], "{s}: {v:?}");
    }
}

#[test]
fn unit_scale_matches_the_comparison() {
    let (_d, cfg) = setup(&WORDS);
    let c = corpus(&[4, 7, 2], 0.25);
    let cmp = run_comparison(&cfg, &c).unwrap();
    let sweep = scale_sweep(&cfg, &c, &[1.0]).unwrap();
    for row in &cmp.rows {
        let p = sweep
            .points
            .iter()
            .find(|p| p.strategy == row.strategy)
            .unwrap();
        assert_eq!(p.mean_final_latency_s, row.mean_final_latency_s);
        assert_eq!(p.mean_start_latency_s, row.mean_start_latency_s);
        assert_eq!(p.mean_output_duration_s, row.mean_output_duration_s);
    }
}

#[test]
fn config_files_resolve_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("data")).unwrap();
    std::fs::write(dir.path().join("data/t.tsv"), "u\t0\thi\t0.3\t1\n").unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        "traces = [\"data/t.tsv\"]\nstrategies = [\"none\", \"gt:2\"]\nseed = 4\n\n[compute]\nfixed_overhead = 0.0\nper_frame_cost = 0.0\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.traces, vec![dir.path().join("data/t.tsv")]);
    assert_eq!(
        cfg.strategies[1],
        LookaheadStrategy::GroundTruth { depth: 2 }
    );
    let corpus = s2s_latency::experiment::load_corpus(&cfg).unwrap();
    assert_eq!(corpus.len(), 1);

    std::fs::write(&cfg_path, "strategiez = []\n").unwrap();
    assert!(ExperimentConfig::load(&cfg_path).is_err());
    assert!(ExperimentConfig::load(Path::new("/nonexistent/cfg.toml")).is_err());
}
