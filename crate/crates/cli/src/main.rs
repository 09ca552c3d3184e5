use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use duanzai_core::corpus::{generate_synthetic, parse_instances, parse_pairs, parse_templates};
use duanzai_core::crf::{tag_text, train_with_report, CrfModel, TrainConfig};
use duanzai_core::eval::{aggregate_scores, read_score_records, render_report, run_per_benchmark, score_rows, ReportValue};
use duanzai_core::pinyin::{load_lexicon, FuzzyCostTable, PinyinLexicon};
use duanzai_core::retrieval::{retrieve_original, train_bigram_lm, BigramLm, RetrievalConfig};
use duanzai_service::config::ModelPaths;
use duanzai_service::{Config, Resources};

#[derive(Parser)]
#[command(name = "duanzai", version, about = "Homophonic pun tooling and the chat server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill every template with every pair and write the corpus as JSONL.
    GenCorpus {
        #[arg(long)]
        templates: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the punchline tagger on a JSONL corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        l2: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Print the BIO tags and punchline spans for one sentence.
    Tag {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Train the character bigram LM on a text file, one sentence per line.
    TrainLm {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        k: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print original-phrase candidates as JSON. With --model the text is
    /// tagged first and the full analysis is printed; without it the text is
    /// taken to be the punchline itself.
    Analyze {
        #[arg(long)]
        text: String,
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.3)]
        tau: f64,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Score the tagger on a JSONL corpus and print the metrics table.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Aggregate rater scores (CSV rater_id,instance_id,approach,score).
    Scores {
        #[arg(long)]
        csv: PathBuf,
    },
    /// Run the HTTP chat service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn lexicon(path: Option<&Path>) -> Result<PinyinLexicon> {
    match path {
        Some(p) => load_lexicon(open(p)?).with_context(|| format!("loading lexicon {}", p.display())),
        None => Ok(PinyinLexicon::bundled().clone()),
    }
}

fn load_model(path: &Path) -> Result<CrfModel> {
    CrfModel::read_json(open(path)?).with_context(|| format!("loading model {}", path.display()))
}

fn load_corpus(path: &Path) -> Result<duanzai_core::Corpus> {
    parse_instances(open(path)?).with_context(|| format!("loading corpus {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus { templates, pairs, seed, out } => {
            let templates = parse_templates(&read(&templates)?);
            let pairs = parse_pairs(&read(&pairs)?)?;
            let corpus = generate_synthetic(&templates, &pairs, seed)?;
            let mut w = create(&out)?;
            corpus.write_jsonl(&mut w)?;
            w.flush()?;
            eprintln!("wrote {} instances to {}", corpus.len(), out.display());
        }
        Command::Train { corpus, out, l2, iters, seed, lexicon: lex } => {
            let corpus = load_corpus(&corpus)?;
            let lex = lexicon(lex.as_deref())?;
            let mut config = TrainConfig::default();
            if let Some(l2) = l2 {
                config.l2_lambda = l2;
            }
            if let Some(n) = iters {
                config.max_iterations = n;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            let (model, report) = train_with_report(&corpus, &lex, &config)?;
            let mut w = create(&out)?;
            model.write_json(&mut w)?;
            w.flush()?;
            eprintln!(
                "trained on {} instances, {} steps, final loss {:.4}{}",
                corpus.len(),
                report.losses.len().saturating_sub(1),
                report.losses.last().copied().unwrap_or(f64::NAN),
                if report.converged { "" } else { " (iteration limit)" }
            );
        }
        Command::Tag { model, text, lexicon: lex } => {
            let model = load_model(&model)?;
            let lex = lexicon(lex.as_deref())?;
            let tags = tag_text(&model, &text, &lex);
            let spans: Vec<_> = tags
                .spans()
                .into_iter()
                .map(|s| serde_json::json!({"start": s.start, "end": s.end, "surface": s.slice(&text)}))
                .collect();
            let labels: Vec<String> = tags.iter().map(|l| format!("{l:?}")).collect();
            println!("{}", serde_json::json!({"tags": labels, "spans": spans}));
        }
        Command::TrainLm { corpus, k, out } => {
            let text = read(&corpus)?;
            let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            let lm = train_bigram_lm(&lines, k)?;
            let mut w = create(&out)?;
            lm.write(&mut w)?;
            w.flush()?;
            eprintln!("trained on {} lines, vocabulary {}", lines.len(), lm.vocab_size());
        }
        Command::Analyze { text, lm, model, lexicon: lex, beta, tau, k } => {
            let retrieval = RetrievalConfig { tau, beta, k };
            if model.is_some() {
                let paths = ModelPaths {
                    crf_model: model,
                    lexicon: lex,
                    lm,
                    templates: None,
                };
                let resources = Resources::load(&paths, retrieval)?;
                let analysis = duanzai_service::analyze(&text, &resources);
                println!("{}", serde_json::to_string_pretty(&analysis)?);
            } else {
                let lex = lexicon(lex.as_deref())?;
                let lm = match lm {
                    Some(p) => BigramLm::read(open(&p)?).with_context(|| format!("loading LM {}", p.display()))?,
                    None => train_bigram_lm(&duanzai_core::fixtures::lm_corpus(), 0.1)?,
                };
                let candidates = retrieve_original(&text, &lex, &lm, &FuzzyCostTable::default(), &retrieval)?;
                println!("{}", serde_json::to_string_pretty(&candidates)?);
            }
        }
        Command::Eval { model, corpus, trace, lexicon: lex } => {
            let model = load_model(&model)?;
            let corpus = load_corpus(&corpus)?;
            let lex = lexicon(lex.as_deref())?;
            let report = match &trace {
                Some(p) => {
                    let mut w = create(p)?;
                    let r = run_per_benchmark(&model, &corpus, &lex, Some(&mut w))?;
                    w.flush()?;
                    r
                }
                None => run_per_benchmark(&model, &corpus, &lex, None)?,
            };
            print!("{}", render_report(&[("CRF".to_string(), ReportValue::Metrics(report))]));
        }
        Command::Scores { csv } => {
            let records = read_score_records(open(&csv)?)?;
            let summary = aggregate_scores(&records)?;
            print!("{}", render_report(&score_rows(&summary)));
        }
        Command::Serve { config, port } => {
            let mut config = match config {
                Some(p) => Config::load(&p)?,
                None => Config::default(),
            };
            if let Some(port) = port {
                config.server.port = port;
            }
            config.validate()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(duanzai_service::serve(config))?;
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info,tower_http=debug".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
