use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use s2s_latency::dataprep::{
    augment_prefixes, convert_alignment_file, format_manifest, load_sentences,
};
use s2s_latency::emission::{load_trace, WaitKConfig};
use s2s_latency::experiment::{
    format_report_csv, load_corpus, prepare_corpus, rate_sweep, run_comparison, scale_sweep,
    write_curve_csv, write_records, write_report_csv, ExperimentConfig, InputEndMode,
};
use s2s_latency::lookahead::LookaheadStrategy;

/// Latency simulator for simultaneous speech-to-speech translation pipelines.
#[derive(Parser)]
#[command(name = "s2s-latency", version)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every strategy and write report.csv and per_utterance.jsonl.
    Simulate(RunArgs),
    /// Print the strategy comparison table and write report.csv.
    Compare(RunArgs),
    /// Re-time the corpus to constant token gaps and write curve.csv.
    RateSweep {
        #[command(flatten)]
        run: RunArgs,
        /// Token gaps in seconds, e.g. 0.28,0.22.
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
    },
    /// Rescale synthesized durations and write curve.csv.
    ScaleSweep {
        #[command(flatten)]
        run: RunArgs,
        /// Duration scales, e.g. 1.0,0.95,0.9.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        /// Re-time the corpus to this token gap before scaling.
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Write a prefix-augmented training manifest.
    Augment {
        /// One sentence per line, optionally `id<TAB>words`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convert word alignments (`utt word start end`) into a token trace.
    Align2trace {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Check trace files and print a summary.
    Validate {
        #[arg(long = "trace", required = true)]
        traces: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace files; replace the ones listed in the config.
    #[arg(long = "trace")]
    traces: Vec<PathBuf>,
    /// Strategy labels (none, gt:K, pseudo:K, random:K, stochastic:P:K); replace the config's.
    #[arg(long = "strategy", value_delimiter = ',')]
    strategies: Vec<LookaheadStrategy>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    input_end: Option<InputEndMode>,
    /// Re-time traces with a wait-k policy of this k.
    #[arg(long)]
    wait_k: Option<u32>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    durations: Option<PathBuf>,
    /// Decoder counts file (`history<TAB>next<TAB>count`).
    #[arg(long)]
    decoder: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)
                .with_context(|| format!("loading config {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if !self.traces.is_empty() {
            cfg.traces = self.traces.clone();
        }
        if !self.strategies.is_empty() {
            cfg.strategies = self.strategies.clone();
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.input_end {
            cfg.input_end = m;
        }
        if let Some(k) = self.wait_k {
            cfg.waitk = Some(WaitKConfig {
                k,
                ..cfg.waitk.unwrap_or_default()
            });
        }
        cfg.lexicon = self.lexicon.clone().or(cfg.lexicon);
        cfg.durations = self.durations.clone().or(cfg.durations);
        cfg.decoder = self.decoder.clone().or(cfg.decoder);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;
    Ok(&cfg.out_dir)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.config()?;
            let corpus = load_corpus(&cfg)?;
            let report = run_comparison(&cfg, &corpus)?;
            let dir = out_dir(&cfg)?;
            let r = write_report_csv(dir, &report.rows)?;
            let p = write_records(dir, &report.records)?;
            info!("wrote {} and {}", r.display(), p.display());
        }
        Command::Compare(args) => {
            let cfg = args.config()?;
            let corpus = load_corpus(&cfg)?;
            let report = run_comparison(&cfg, &corpus)?;
            print!("{}", format_report_csv(&report.rows));
            let r = write_report_csv(out_dir(&cfg)?, &report.rows)?;
            info!("wrote {}", r.display());
        }
        Command::RateSweep { run, rates } => {
            let cfg = run.config()?;
            let rates = if rates.is_empty() {
                cfg.rates.clone()
            } else {
                rates
            };
            let corpus = load_corpus(&cfg)?;
            let sweep = rate_sweep(&cfg, &corpus, &rates)?;
            let dir = out_dir(&cfg)?;
            let c = write_curve_csv(dir, &sweep.points)?;
            write_records(dir, &sweep.records)?;
            info!("wrote {}", c.display());
        }
        Command::ScaleSweep { run, alphas, rate } => {
            let mut cfg = run.config()?;
            if rate.is_some() {
                cfg.scale_sweep_rate = rate;
            }
            let alphas = if alphas.is_empty() {
                cfg.alphas.clone()
            } else {
                alphas
            };
            let corpus = load_corpus(&cfg)?;
            let sweep = scale_sweep(&cfg, &corpus, &alphas)?;
            let dir = out_dir(&cfg)?;
            let c = write_curve_csv(dir, &sweep.points)?;
            write_records(dir, &sweep.records)?;
            info!("wrote {}", c.display());
        }
        Command::Augment {
            input,
            output,
            seed,
        } => {
            let sentences = load_sentences(&input)?;
            let manifest = augment_prefixes(&sentences, seed)?;
            fs::write(&output, format_manifest(&manifest))
                .with_context(|| format!("writing {}", output.display()))?;
            let prefixes = manifest.iter().filter(|e| !e.is_full).count();
            println!("{} sentences, {prefixes} prefixes", sentences.len());
        }
        Command::Align2trace { input, output } => {
            let utts = convert_alignment_file(&input, &output)?;
            println!("{} utterances written to {}", utts.len(), output.display());
        }
        Command::Validate { traces } => {
            let mut all = Vec::new();
            for path in &traces {
                let utts = load_trace(path)?;
                let tokens: usize = utts.iter().map(|u| u.len()).sum();
                let open = utts.iter().filter(|u| !u.is_final()).count();
                println!(
                    "{}: {} utterances, {tokens} tokens, {open} without EOS",
                    path.display(),
                    utts.len()
                );
                all.extend(utts);
            }
            let n = prepare_corpus(all)?.len();
            println!("ok: {n} utterances");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let internal = e
                .chain()
                .filter_map(|c| c.downcast_ref::<s2s_latency::Error>())
                .any(|c| c.is_internal());
            ExitCode::from(if internal { 2 } else { 1 })
        }
    }
}
