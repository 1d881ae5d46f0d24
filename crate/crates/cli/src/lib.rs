//! The `famphrase` command line: one subcommand per pipeline stage plus
//! `report`, which runs them all from a manifest.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use famphrase_core::corpus::{Corpus, CorpusRegistry};
use famphrase_core::generator::SamplingParams;
use famphrase_core::guesswork::{entropy_bits, resists_online_attack, slot_entropy_bits};
use famphrase_core::similarity::HashedNgramProvider;
use famphrase_core::study::{metrics_report, typo_report, Condition, EventLog, StudyConfig};
use famphrase_service::{Clock, ScaledClock, ServiceConfig, SystemClock};

pub mod error;
pub mod pipeline;
pub mod stages;

pub use error::{CliError, ErrorKind};
pub use pipeline::{run_pipeline, PipelineManifest, PipelineReport};

use error::{fail, invalid};
use stages::Sidecar;

#[derive(Debug, Parser)]
#[command(name = "famphrase", version, about = "Familiar-vocabulary passphrase pipeline")]
pub struct Cli {
    /// Pipeline manifest (report) or service config (serve, metrics, typo-report).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every randomized stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print a machine-readable summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Directory holding one sub-directory per corpus.
    #[arg(long, global = true, default_value = "corpora")]
    pub corpora: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize a corpus and print its statistics.
    Ingest(CorpusArg),
    /// Sample text from an n-gram model of a corpus.
    Generate(GenerateArgs),
    /// Import externally generated text.
    Import(ImportArgs),
    /// Extract candidate passphrases from generated text.
    Extract(ExtractArgs),
    /// Histogram of tag-rule search spaces.
    TagRules(TagRulesArgs),
    /// Drop candidates whose tag sequence is guessable.
    FilterCandidates(FilterArgs),
    /// Score and rank candidates, least probable first.
    Rank(RankArgs),
    /// Pairwise cosine matrix of ranked passphrases.
    Simmatrix(SimmatrixArgs),
    /// Marginal guesswork curves over n-gram models.
    Guesswork(GuessworkArgs),
    /// Brute-force entropy of a uniform passphrase space.
    Entropy(EntropyArgs),
    /// Assign pairwise-dissimilar passphrases from a ranked pool.
    Assign(AssignArgs),
    /// Run the study service.
    Serve(ServeArgs),
    /// Study metrics from an event log.
    Metrics(MetricsArgs),
    /// Bucketed incorrect attempts from an event log.
    TypoReport(LogArgs),
    /// Run the whole pipeline from the manifest given by --config.
    Report,
}

#[derive(Debug, Args)]
pub struct CorpusArg {
    #[arg(long)]
    pub corpus: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub corpus: String,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value_t = 0.7)]
    pub temperature: f64,
    #[arg(long, default_value_t = 40)]
    pub top_k: usize,
    #[arg(long, default_value_t = 0.9)]
    pub top_p: f64,
    #[arg(long, default_value_t = 300)]
    pub min_tokens: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub corpus: String,
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub corpus: String,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TagRulesArgs {
    #[arg(long)]
    pub corpus: String,
    /// Rule lengths, e.g. `5..7` (inclusive) or `7`.
    #[arg(long, default_value = "5..7")]
    pub n: stages::Lengths,
    #[arg(long)]
    pub report: PathBuf,
    /// Extra `word<TAB>tag` lexicon.
    #[arg(long)]
    pub tags: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub corpus: String,
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub removed: Option<PathBuf>,
    #[arg(long)]
    pub tags: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub corpus: String,
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub keep_fraction: f64,
}

#[derive(Debug, Args)]
pub struct SimmatrixArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GuessworkArgs {
    #[arg(long)]
    pub corpus: String,
    #[arg(long, default_value = "2..5")]
    pub n: stages::Lengths,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[arg(long, required_unless_present = "slots")]
    pub vocab: Option<u64>,
    #[arg(long, default_value_t = 5)]
    pub k: u32,
    /// Per-slot dictionary sizes instead of `--vocab`, e.g. `181,181,181,181`.
    #[arg(long, value_delimiter = ',', conflicts_with = "vocab")]
    pub slots: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub ranked: PathBuf,
    #[arg(long)]
    pub story: String,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = famphrase_core::similarity::DEFAULT_THETA)]
    pub theta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Run the study clock this many times faster than real time.
    #[arg(long)]
    pub time_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub condition: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LogArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a command produced: a human line and a JSON summary.
#[derive(Debug)]
pub struct Outcome {
    pub text: String,
    pub summary: Value,
}

impl Outcome {
    fn new(text: impl Into<String>, summary: Value) -> Self {
        Self {
            text: text.into(),
            summary,
        }
    }
}

fn seed_or_zero(cli: &Cli) -> u64 {
    cli.seed.unwrap_or(0)
}

fn load(registry: &CorpusRegistry, id: &str) -> Result<Corpus, CliError> {
    stages::ingest(registry, id).map(|(c, _)| c)
}

fn study_config(cli: &Cli, stage: &'static str) -> Result<StudyConfig, CliError> {
    match &cli.config {
        Some(path) => ServiceConfig::from_file(path).map_err(invalid(stage))?.study_config().map_err(invalid(stage)),
        None => Ok(StudyConfig::default()),
    }
}

fn emit(stage: &'static str, out: Option<&Path>, body: &str) -> Result<String, CliError> {
    match out {
        Some(p) => {
            stages::write_output(stage, p, body)?;
            Ok(format!("wrote {}", p.display()))
        }
        None => Ok(body.trim_end().to_string()),
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let registry = CorpusRegistry::new(&cli.corpora);
    let root = Some(cli.corpora.as_path());
    match &cli.command {
        Command::Ingest(a) => {
            let (_, stats) = stages::ingest(&registry, &a.corpus)?;
            let summary = stages::summary_json(&stats);
            if let Some(out) = &a.out {
                stages::write_output("ingest", out, &(serde_json::to_string_pretty(&summary).unwrap() + "\n"))?;
            }
            Ok(Outcome::new(
                format!(
                    "{}: {} tokens, {} distinct ({} case-folded)",
                    stats.id, stats.tokens, stats.vocabulary, stats.folded_vocabulary
                ),
                summary,
            ))
        }
        Command::Generate(a) => {
            let corpus = load(&registry, &a.corpus)?;
            let params = SamplingParams {
                temperature: a.temperature,
                top_k: a.top_k,
                top_p: a.top_p,
                min_tokens: a.min_tokens,
                seed: seed_or_zero(cli),
            };
            let text = stages::generate(&corpus, a.order, &params)?;
            stages::write_output("generate", &a.out, &text.text)?;
            let tokens = text.text.split_whitespace().count();
            Sidecar::new("generate", Some(&a.corpus), Some(params.seed), json!({ "order": a.order, "sampling": params }))
                .input(&registry.text_path(&a.corpus), root)?
                .records(tokens)
                .write_for(&a.out)?;
            Ok(Outcome::new(
                format!("generated {tokens} tokens into {}", a.out.display()),
                json!({ "stage": "generate", "tokens": tokens, "seed": params.seed }),
            ))
        }
        Command::Import(a) => {
            let text = stages::import(&a.file, &a.corpus)?;
            stages::write_output("import", &a.out, &text.text)?;
            Sidecar::new("import", Some(&a.corpus), None, json!({}))
                .input(&a.file, None)?
                .write_for(&a.out)?;
            Ok(Outcome::new(
                format!("imported {} into {}", a.file.display(), a.out.display()),
                json!({ "stage": "import", "bytes": text.text.len() }),
            ))
        }
        Command::Extract(a) => {
            let corpus = load(&registry, &a.corpus)?;
            let text = stages::import(&a.input, &a.corpus).map_err(|e| CliError { stage: "extract", ..e })?;
            let seed = seed_or_zero(cli);
            let cands = stages::extract(&text, &corpus, seed)?;
            stages::write_output("extract", &a.out, &stages::candidates_tsv(&cands))?;
            Sidecar::new("extract", Some(&a.corpus), Some(seed), json!({}))
                .input(&a.input, None)?
                .input(&registry.text_path(&a.corpus), root)?
                .records(cands.len())
                .write_for(&a.out)?;
            Ok(Outcome::new(
                format!("{} candidates written to {}", cands.len(), a.out.display()),
                json!({ "stage": "extract", "candidates": cands.len(), "seed": seed }),
            ))
        }
        Command::TagRules(a) => {
            let corpus = load(&registry, &a.corpus)?;
            let tagger = stages::tagger_for(&corpus, "tag-rules", a.tags.as_deref())?;
            let (csv, summary) = stages::tag_rules(&corpus, &tagger, &a.n.0)?;
            stages::write_output("tag-rules", &a.report, &csv)?;
            Sidecar::new("tag-rules", Some(&a.corpus), None, json!({ "n": a.n.0 }))
                .input(&registry.text_path(&a.corpus), root)?
                .write_for(&a.report)?;
            let text = summary
                .iter()
                .map(|s| format!("n={}: {} rules, {:.2}% below 2.8 bits", s.n, s.rules, s.percent_below_2_8_bits))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Outcome::new(text, json!({ "stage": "tag-rules", "lengths": summary })))
        }
        Command::FilterCandidates(a) => {
            let corpus = load(&registry, &a.corpus)?;
            let tagger = stages::tagger_for(&corpus, "filter-candidates", a.tags.as_deref())?;
            let cands = stages::read_candidates("filter-candidates", &a.candidates, &a.corpus)?;
            let outcome = stages::filter(&corpus, &tagger, &cands)?;
            stages::write_output("filter-candidates", &a.out, &stages::candidates_tsv(&outcome.kept))?;
            let mut outputs = vec![(&a.out, outcome.kept.len())];
            if let Some(removed) = &a.removed {
                stages::write_output("filter-candidates", removed, &stages::removed_tsv(&outcome))?;
                outputs.push((removed, outcome.removed.len()));
            }
            for (p, n) in outputs {
                Sidecar::new("filter-candidates", Some(&a.corpus), None, json!({}))
                    .input(&a.candidates, None)?
                    .input(&registry.text_path(&a.corpus), root)?
                    .records(n)
                    .write_for(p)?;
            }
            Ok(Outcome::new(
                format!("kept {} of {} candidates", outcome.kept.len(), cands.len()),
                json!({ "stage": "filter-candidates", "input": cands.len(), "kept": outcome.kept.len(), "removed": outcome.removed.len() }),
            ))
        }
        Command::Rank(a) => {
            let corpus = load(&registry, &a.corpus)?;
            let cands = stages::read_candidates("rank", &a.candidates, &a.corpus)?;
            let ranked = stages::rank(&corpus, &cands, a.keep_fraction)?;
            stages::write_output("rank", &a.out, &stages::ranked_tsv(&ranked))?;
            Sidecar::new("rank", Some(&a.corpus), None, json!({ "keep_fraction": a.keep_fraction }))
                .input(&a.candidates, None)?
                .input(&registry.text_path(&a.corpus), root)?
                .records(ranked.len())
                .write_for(&a.out)?;
            Ok(Outcome::new(
                format!("ranked {} candidates, kept {}", cands.len(), ranked.len()),
                json!({ "stage": "rank", "input": cands.len(), "kept": ranked.len() }),
            ))
        }
        Command::Simmatrix(a) => {
            let phrases = stages::read_ranked("simmatrix", &a.input)?;
            stages::write_output("simmatrix", &a.out, &stages::simmatrix(&phrases)?)?;
            Sidecar::new("simmatrix", None, None, json!({ "provider": "hashed-ngram" }))
                .input(&a.input, None)?
                .records(phrases.len())
                .write_for(&a.out)?;
            Ok(Outcome::new(
                format!("{0}x{0} matrix written to {1}", phrases.len(), a.out.display()),
                json!({ "stage": "simmatrix", "size": phrases.len() }),
            ))
        }
        Command::Guesswork(a) => {
            let corpus = load(&registry, &a.corpus)?;
            let (csv, summary) = stages::guesswork(&corpus, &a.n.0)?;
            stages::write_output("guesswork", &a.out, &csv)?;
            Sidecar::new("guesswork", Some(&a.corpus), None, json!({ "n": a.n.0 }))
                .input(&registry.text_path(&a.corpus), root)?
                .write_for(&a.out)?;
            let text = summary
                .iter()
                .map(|s| format!("n={}: {:.1} bits at alpha=1", s.n, s.alpha_one_bits))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Outcome::new(text, json!({ "stage": "guesswork", "orders": summary })))
        }
        Command::Entropy(a) => {
            let bits = match (&a.slots, a.vocab) {
                (Some(slots), _) => {
                    if slots.is_empty() || slots.contains(&0) {
                        return Err(CliError::validation("entropy", "slot sizes must be positive"));
                    }
                    slot_entropy_bits(slots)
                }
                (None, Some(v)) => {
                    if v == 0 || a.k == 0 {
                        return Err(CliError::validation("entropy", "vocab and k must be positive"));
                    }
                    entropy_bits(v, a.k)
                }
                (None, None) => return Err(CliError::validation("entropy", "give --vocab or --slots")),
            };
            // a uniform space of 2^bits needs 2^(bits-1) guesses on average
            let expected = bits - 1.0;
            Ok(Outcome::new(
                format!("{bits:.4} bits (floor {})", bits.floor()),
                json!({
                    "stage": "entropy",
                    "bits": bits,
                    "floor_bits": bits.floor(),
                    "expected_guesses_log2": expected,
                    "resists_online_attack": resists_online_attack(expected),
                }),
            ))
        }
        Command::Assign(a) => {
            let pool = stages::read_ranked("assign", &a.ranked)?;
            let picked = stages::assign(&a.story, &pool, a.theta, a.count)?;
            let lines: String = picked.iter().map(|&i| format!("{i}\t{}\n", pool[i].join("\t"))).collect();
            stages::write_output("assign", &a.out, &lines)?;
            Sidecar::new("assign", Some(&a.story), None, json!({ "theta": a.theta, "count": a.count }))
                .input(&a.ranked, None)?
                .records(picked.len())
                .write_for(&a.out)?;
            Ok(Outcome::new(
                format!("assigned {} of {} pool entries", picked.len(), pool.len()),
                json!({ "stage": "assign", "pool": pool.len(), "assigned": picked.len() }),
            ))
        }
        Command::Serve(a) => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| CliError::validation("serve", "--config <service.toml> is required"))?;
            let config = ServiceConfig::from_file(path).map_err(invalid("serve"))?;
            let clock: Arc<dyn Clock> = match a.time_scale {
                Some(f) if f > 0.0 && f.is_finite() => Arc::new(ScaledClock::from_now(f)),
                Some(f) => return Err(CliError::validation("serve", format!("time scale must be positive, got {f}"))),
                None => Arc::new(SystemClock),
            };
            let listen = config.listen;
            let rt = tokio::runtime::Runtime::new().map_err(fail("serve"))?;
            eprintln!("listening on {listen}");
            rt.block_on(famphrase_service::serve(config, clock)).map_err(fail("serve"))?;
            Ok(Outcome::new("service stopped", json!({ "stage": "serve", "listen": listen.to_string() })))
        }
        Command::Metrics(a) => {
            let config = study_config(cli, "metrics")?;
            let only = a
                .condition
                .as_deref()
                .map(str::parse::<Condition>)
                .transpose()
                .map_err(invalid("metrics"))?;
            let (_, events) = EventLog::open(&a.log).map_err(fail("metrics"))?;
            let report = metrics_report(&events, &config, only).map_err(fail("metrics"))?;
            let summary = stages::summary_json(&report);
            let body = serde_json::to_string_pretty(&summary).unwrap() + "\n";
            Ok(Outcome::new(emit("metrics", a.out.as_deref(), &body)?, summary))
        }
        Command::TypoReport(a) => {
            let (_, events) = EventLog::open(&a.log).map_err(fail("typo-report"))?;
            let report = typo_report(&events, &HashedNgramProvider::default()).map_err(fail("typo-report"))?;
            let summary = stages::summary_json(&report);
            let body = serde_json::to_string_pretty(&summary).unwrap() + "\n";
            Ok(Outcome::new(emit("typo-report", a.out.as_deref(), &body)?, summary))
        }
        Command::Report => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| CliError::validation("manifest", "--config <manifest.toml> is required"))?;
            let manifest = PipelineManifest::from_file(path)?;
            let report = run_pipeline(&manifest, cli.seed)?;
            let mut lines = Vec::new();
            for c in &report.corpora {
                let c5 = c.guesswork.iter().find(|g| g.n == 5).map(|g| g.alpha_one_bits);
                lines.push(format!(
                    "{}: {} candidates, {} kept, {} ranked, {} assignable; V={} ({:.1} bits for 5 words){}",
                    c.id,
                    c.counts.candidates,
                    c.counts.kept,
                    c.counts.ranked,
                    c.counts.assignable,
                    c.vocabulary,
                    c.entropy_bits_5_words,
                    c5.map_or(String::new(), |b| format!(", 5-gram guesswork {b:.1} bits")),
                ));
            }
            lines.push(format!("report written to {}", manifest.out_dir.join("report.json").display()));
            Ok(Outcome::new(lines.join("\n"), stages::summary_json(&report)))
        }
    }
}
