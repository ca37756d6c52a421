//! `lateral` command-line experiment runner.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lateral_core::checkpoint;
use lateral_core::harness::{
    self, aggregate_regressions, checkpoint_name, comparison_tsv, compare_heads, config, evaluate, train_lm,
    Decoder, ExperimentConfig, RunReport,
};
use lateral_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_REGRESSION: u8 = 3;

#[derive(Parser)]
#[command(name = "lateral", version, about = "Train and evaluate FF and lateral-inhibition CTC heads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated head kinds, e.g. ff,li.
    #[arg(long)]
    heads: Option<String>,
    /// Comma-separated subsets, e.g. s,m,l,xl,xxl.
    #[arg(long)]
    subsets: Option<String>,
    /// greedy or beam.
    #[arg(long)]
    decode: Option<String>,
    #[arg(long = "beam-width")]
    beam_width: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and write one dump per subset.
    Gen(Overrides),
    /// Train every configured (subset, head) pair and write the run report.
    Train(Overrides),
    /// Re-evaluate a checkpoint on the held-out test set.
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Recompute averaged relative improvements from the FF/LI results table.
    #[command(name = "paper-aggregates")]
    Aggregates {
        /// Results table; defaults to the embedded copy.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-subset FF vs LI comparison table from a run report.
    Compare {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    Regression(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn resolve(o: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &o.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(p) = &o.out {
        cfg.out = p.clone();
    }
    if let Some(h) = &o.heads {
        cfg.heads = config::parse_heads(h)?;
    }
    if let Some(s) = &o.subsets {
        cfg.subsets = config::parse_subsets(s)?;
    }
    if let Some(d) = &o.decode {
        cfg.decode = config::DecodeMode::parse(d)?;
    }
    if let Some(w) = o.beam_width {
        cfg.beam.beam_width = w;
    }
    if let Some(a) = o.alpha {
        cfg.beam.alpha = a;
    }
    if let Some(b) = o.beta {
        cfg.beam.beta = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_out(dir: &Path, name: &str, text: &str) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(name);
    std::fs::write(&p, text)?;
    Ok(p)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen(o) => {
            let cfg = resolve(&o)?;
            for p in harness::write_corpus(&cfg, &cfg.out)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Train(o) => {
            let cfg = resolve(&o)?;
            let (report, models) = harness::run_experiment(&cfg)?;
            std::fs::create_dir_all(&cfg.out)?;
            for m in &models {
                let path = cfg.out.join(checkpoint_name(m.subset, m.head().kind));
                checkpoint::save(&path, m.head(), Some(m.optim()))?;
            }
            write_out(&cfg.out, "config.txt", &cfg.to_text())?;
            let path = write_out(&cfg.out, "report.json", &report.to_json()?)?;
            print!("{}", report.to_table());
            println!("report: {}", path.display());
        }
        Command::Eval { overrides, checkpoint: ckpt } => {
            let cfg = resolve(&overrides)?;
            let (head, _) = checkpoint::load(&ckpt)?;
            if head.input_dim() != cfg.d || head.output_dim() != cfg.alphabet.size() {
                return Err(Failure::Config(format!(
                    "checkpoint shape {}x{} does not match config d={} V={}",
                    head.input_dim(),
                    head.output_dim(),
                    cfg.d,
                    cfg.alphabet.size()
                )));
            }
            let (generator, plan) = harness::corpus_for(&cfg)?;
            let test = generator.materialize(&plan.test)?;
            let lm = match cfg.decode {
                config::DecodeMode::Beam => {
                    let subset = cfg.subsets[0];
                    let train = generator.materialize(plan.subset_ids(subset).expect("planned"))?;
                    Some(train_lm(&cfg, &train)?)
                }
                config::DecodeMode::Greedy => None,
            };
            let decoder = Decoder::from_mode(cfg.decode, lm.as_ref(), cfg.beam);
            let scores = evaluate(&head, &test, &cfg.alphabet, &decoder)?;
            let line = serde_json::json!({
                "checkpoint": ckpt.display().to_string(),
                "head": head.kind.as_str(),
                "decode": cfg.decode.as_str(),
                "test_wer": scores.wer,
                "test_cer": scores.cer,
            });
            println!("{line}");
        }
        Command::Aggregates { table, out } => {
            let report = harness::published_aggregates(table.as_deref())?;
            let tsv = report.to_tsv();
            print!("{tsv}");
            if let Some(dir) = out {
                write_out(&dir, "aggregates.tsv", &tsv)?;
            }
            let misses = aggregate_regressions(&report);
            if !misses.is_empty() {
                let lines: Vec<String> = misses
                    .iter()
                    .map(|(c, m, q, g)| format!("{c} {m}: expected {q}, got {g:?}"))
                    .collect();
                return Err(Failure::Regression(lines.join("; ")));
            }
        }
        Command::Compare { report, out } => {
            let text = std::fs::read_to_string(&report)?;
            let report = RunReport::from_json(&text)?;
            let tsv = comparison_tsv(&compare_heads(&report)?);
            print!("{tsv}");
            if let Some(dir) = out {
                write_out(&dir, "comparison.tsv", &tsv)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Regression(m)) => {
            eprintln!("regression: {m}");
            ExitCode::from(EXIT_REGRESSION)
        }
    }
}
