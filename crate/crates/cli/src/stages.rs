//! Stage implementations shared by the subcommands and the pipeline.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use famphrase_core::corpus::{Corpus, CorpusRegistry};
use famphrase_core::extractor::{self, CandidatePassphrase};
use famphrase_core::generator::{import_generated, sample_text, GeneratedText, SamplingParams};
use famphrase_core::grammar::{
    extract_tag_rules, filter_by_tag_rules, percent_below, search_space_histogram, CorpusRules, FilterOutcome,
    Tagger, DEFAULT_BUCKET_EDGES,
};
use famphrase_core::guesswork::{default_alpha_grid, guesswork_curve, CurvePoint};
use famphrase_core::ngram::NGramModel;
use famphrase_core::ranker::{self, blacklist_guessable, score_and_rank, ScoredPassphrase, ScoringModels};
use famphrase_core::similarity::{matrix_to_csv, similarity_matrix, HashedNgramProvider};
use famphrase_core::study::assign_familiar_passphrase;

use crate::error::{fail, invalid, CliError};

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Writes `content` to `path`, creating parent directories.
pub fn write_output(stage: &'static str, path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::stage(stage, format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, content).map_err(|e| CliError::stage(stage, format!("{}: {e}", path.display())))
}

fn read_input(stage: &'static str, path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::stage(stage, format!("{}: {e}", path.display())))
}

/// Provenance written next to every output as `<output>.meta.json`.
#[derive(Debug, Serialize)]
pub struct Sidecar {
    pub stage: &'static str,
    pub corpus: Option<String>,
    pub seed: Option<u64>,
    pub params: Value,
    pub inputs: Vec<InputRecord>,
    pub records: usize,
}

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

impl Sidecar {
    pub fn new(stage: &'static str, corpus: Option<&str>, seed: Option<u64>, params: Value) -> Self {
        Self {
            stage,
            corpus: corpus.map(str::to_string),
            seed,
            params,
            inputs: Vec::new(),
            records: 0,
        }
    }

    /// Records an input file by content hash. `base` shortens the stored path.
    pub fn input(mut self, path: &Path, base: Option<&Path>) -> Result<Self, CliError> {
        let sha256 = sha256_file(path).map_err(|e| CliError::stage(self.stage, format!("{}: {e}", path.display())))?;
        let shown = base.and_then(|b| path.strip_prefix(b).ok()).unwrap_or(path);
        self.inputs.push(InputRecord {
            path: shown.to_string_lossy().replace('\\', "/"),
            sha256,
        });
        Ok(self)
    }

    pub fn records(mut self, n: usize) -> Self {
        self.records = n;
        self
    }

    pub fn write_for(&self, output: &Path) -> Result<(), CliError> {
        let mut name = output.as_os_str().to_owned();
        name.push(".meta.json");
        let body = serde_json::to_string_pretty(self).expect("sidecar serializes") + "\n";
        write_output(self.stage, &PathBuf::from(name), &body)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusStats {
    pub id: String,
    pub title: String,
    pub tokens: usize,
    pub vocabulary: usize,
    pub folded_vocabulary: usize,
    pub characters: Vec<String>,
}

pub fn ingest(registry: &CorpusRegistry, id: &str) -> Result<(Corpus, CorpusStats), CliError> {
    let dir = registry.corpus_dir(id);
    if !dir.is_dir() {
        return Err(CliError::stage("ingest", format!("corpus directory {} does not exist", dir.display())));
    }
    let corpus = registry.load(id).map_err(fail("ingest"))?;
    let stats = CorpusStats {
        id: corpus.id.clone(),
        title: corpus.title.clone(),
        tokens: corpus.tokens.len(),
        vocabulary: corpus.vocab_size(),
        folded_vocabulary: corpus.folded_vocab_size(),
        characters: corpus.character_names.clone(),
    };
    Ok((corpus, stats))
}

pub fn generate(corpus: &Corpus, order: usize, params: &SamplingParams) -> Result<GeneratedText, CliError> {
    params.validate().map_err(invalid("generate"))?;
    if !(1..=famphrase_core::ngram::MAX_ORDER).contains(&order) {
        return Err(CliError::validation("generate", format!("order must be in 1..=5, got {order}")));
    }
    sample_text(corpus, order, params).map_err(fail("generate"))
}

pub fn import(path: &Path, corpus_id: &str) -> Result<GeneratedText, CliError> {
    import_generated(path, corpus_id).map_err(fail("import"))
}

pub fn extract(text: &GeneratedText, corpus: &Corpus, seed: u64) -> Result<Vec<CandidatePassphrase>, CliError> {
    extractor::extract_candidates(text, corpus, seed).map_err(fail("extract"))
}

pub fn candidates_tsv(cands: &[CandidatePassphrase]) -> String {
    cands.iter().map(|c| extractor::to_tsv_line(c) + "\n").collect()
}

pub fn read_candidates(stage: &'static str, path: &Path, corpus_id: &str) -> Result<Vec<CandidatePassphrase>, CliError> {
    read_input(stage, path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            extractor::from_tsv_line(l, corpus_id)
                .ok_or_else(|| CliError::stage(stage, format!("{}:{}: malformed candidate line", path.display(), i + 1)))
        })
        .collect()
}

/// The default tagger with the corpus' character names as proper nouns,
/// optionally extended from a `word<TAB>tag` file.
pub fn tagger_for(corpus: &Corpus, stage: &'static str, external: Option<&Path>) -> Result<Tagger, CliError> {
    let mut tagger = Tagger::english();
    tagger.add_proper_nouns(&corpus.character_names);
    if let Some(path) = external {
        tagger.extend_from_tsv(&read_input(stage, path)?).map_err(fail(stage))?;
    }
    Ok(tagger)
}

#[derive(Debug, Clone, Serialize)]
pub struct TagRuleSummary {
    pub n: usize,
    pub rules: usize,
    pub percent_below_2_8_bits: f64,
}

/// Histogram CSV over rule lengths `ns` plus a summary per length.
pub fn tag_rules(corpus: &Corpus, tagger: &Tagger, ns: &[usize]) -> Result<(String, Vec<TagRuleSummary>), CliError> {
    let mut csv = String::from("n,bucket,lower,upper,count,percentage\n");
    let mut summary = Vec::new();
    for &n in ns {
        let rules = extract_tag_rules(corpus, tagger, n).map_err(fail("tag-rules"))?;
        for b in search_space_histogram(&rules, &DEFAULT_BUCKET_EDGES).map_err(fail("tag-rules"))? {
            let upper = b.upper.map_or("inf".to_string(), |u| u.to_string());
            csv.push_str(&format!("{n},\"{}\",{},{upper},{},{:.4}\n", b.label(), b.lower, b.count, b.percentage));
        }
        summary.push(TagRuleSummary {
            n,
            rules: rules.len(),
            percent_below_2_8_bits: percent_below(&rules, 2.8),
        });
    }
    Ok((csv, summary))
}

pub fn filter(corpus: &Corpus, tagger: &Tagger, cands: &[CandidatePassphrase]) -> Result<FilterOutcome, CliError> {
    if cands.is_empty() {
        return Ok(FilterOutcome::default());
    }
    let mut lengths: Vec<usize> = cands.iter().map(|c| c.tokens().len()).collect();
    lengths.sort_unstable();
    lengths.dedup();
    let rules = CorpusRules::build(corpus, tagger, &lengths).map_err(fail("filter-candidates"))?;
    filter_by_tag_rules(cands, &rules, tagger).map_err(fail("filter-candidates"))
}

/// `reasons<TAB>tags<TAB>candidate line`.
pub fn removed_tsv(outcome: &FilterOutcome) -> String {
    outcome
        .removed
        .iter()
        .map(|r| {
            let reasons: Vec<String> = r.reasons.iter().map(ToString::to_string).collect();
            format!(
                "{}\t{}\t{}\n",
                reasons.join(","),
                famphrase_core::grammar::format_tags(&r.tags),
                extractor::to_tsv_line(&r.candidate)
            )
        })
        .collect()
}

pub fn rank(corpus: &Corpus, cands: &[CandidatePassphrase], keep_fraction: f64) -> Result<Vec<ScoredPassphrase>, CliError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(CliError::validation("rank", format!("keep fraction must be in (0, 1], got {keep_fraction}")));
    }
    if cands.is_empty() {
        return Err(CliError::stage("rank", "no candidates to rank"));
    }
    let models = ScoringModels::build(corpus).map_err(fail("rank"))?;
    let ranked = score_and_rank(&models, cands).map_err(fail("rank"))?;
    blacklist_guessable(&ranked, keep_fraction).map_err(fail("rank"))
}

pub fn ranked_tsv(ranked: &[ScoredPassphrase]) -> String {
    ranked.iter().map(|s| ranker::to_tsv_line(s) + "\n").collect()
}

pub fn read_ranked(stage: &'static str, path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    read_input(stage, path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            ranker::words_from_tsv_line(l)
                .ok_or_else(|| CliError::stage(stage, format!("{}:{}: malformed ranked line", path.display(), i + 1)))
        })
        .collect()
}

pub fn simmatrix(phrases: &[Vec<String>]) -> Result<String, CliError> {
    let labels: Vec<String> = phrases.iter().map(|w| w.join(" ")).collect();
    let m = similarity_matrix(&labels, &HashedNgramProvider::default()).map_err(fail("simmatrix"))?;
    Ok(matrix_to_csv(&labels, &m))
}

/// Assigns pool entries best-first until `count` are assigned or the pool
/// runs out. Returns the assigned pool indices.
pub fn assign(story: &str, pool: &[Vec<String>], theta: f64, count: Option<usize>) -> Result<Vec<usize>, CliError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(CliError::validation("assign", format!("theta must be in (0, 1], got {theta}")));
    }
    let provider = HashedNgramProvider::default();
    let mut consumed = HashSet::new();
    let mut assigned: Vec<String> = Vec::new();
    let mut picked = Vec::new();
    while count.is_none_or(|c| picked.len() < c) {
        match assign_familiar_passphrase(story, pool, &consumed, &assigned, theta, &provider) {
            Ok(i) => {
                consumed.insert(i);
                assigned.push(pool[i].join(" "));
                picked.push(i);
            }
            Err(famphrase_core::study::StudyError::PoolExhausted(_)) if count.is_none() => break,
            Err(e) => {
                return Err(CliError::stage(
                    "assign",
                    format!("{e} (assigned {} of {})", picked.len(), count.unwrap_or(0)),
                ))
            }
        }
    }
    Ok(picked)
}

#[derive(Debug, Clone, Serialize)]
pub struct GuessworkSummary {
    pub n: usize,
    pub alpha_one_bits: f64,
}

/// Curve CSV with columns `n,alpha,guesswork_bits`.
pub fn guesswork(corpus: &Corpus, ns: &[usize]) -> Result<(String, Vec<GuessworkSummary>), CliError> {
    let grid = default_alpha_grid();
    let mut csv = String::from("n,alpha,guesswork_bits\n");
    let mut summary = Vec::new();
    for &n in ns {
        let model = NGramModel::build(corpus, n).map_err(fail("guesswork"))?;
        let curve: Vec<CurvePoint> = guesswork_curve(&model, &grid).map_err(fail("guesswork"))?;
        for p in &curve {
            csv.push_str(&format!("{n},{:.2},{:.6}\n", p.alpha, p.bits));
        }
        let last = curve.last().expect("grid is non-empty");
        summary.push(GuessworkSummary {
            n,
            alpha_one_bits: last.bits,
        });
    }
    Ok((csv, summary))
}

/// Inclusive list of lengths parsed from `5..7`, `5..=7` or `5`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lengths(pub Vec<usize>);

impl std::str::FromStr for Lengths {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_range(s).map(Lengths)
    }
}

pub fn parse_range(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("invalid number `{t}` in `{s}`"));
    let (lo, hi) = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?, num(b)?)
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?, num(b)?)
    } else {
        let v = num(s)?;
        (v, v)
    };
    if lo == 0 || lo > hi {
        return Err(format!("empty or invalid range `{s}`"));
    }
    Ok((lo..=hi).collect())
}

pub fn summary_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or_else(|e| json!({ "error": e.to_string() }))
}
