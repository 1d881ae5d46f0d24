//! Manifest-driven end-to-end run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use famphrase_core::corpus::CorpusRegistry;
use famphrase_core::generator::SamplingParams;
use famphrase_core::guesswork::{entropy_bits, slot_entropy_bits};
use famphrase_core::rng::derive_seed;
use famphrase_core::similarity::DEFAULT_THETA;
use famphrase_core::study::{metrics_report, EventLog, MetricsReport, RandomDictionaries, StudyConfig};

use crate::error::{invalid, CliError};
use crate::stages::{self, GuessworkSummary, Sidecar, TagRuleSummary};

fn default_order() -> usize {
    3
}

fn default_keep() -> f64 {
    1.0
}

fn default_tag_lengths() -> Vec<usize> {
    vec![5, 6, 7]
}

fn default_guesswork_orders() -> Vec<usize> {
    vec![2, 3, 4, 5]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineManifest {
    pub corpora_root: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_keep")]
    pub keep_fraction: f64,
    #[serde(default = "default_tag_lengths")]
    pub tag_rule_lengths: Vec<usize>,
    #[serde(default = "default_guesswork_orders")]
    pub guesswork_orders: Vec<usize>,
    /// Optional study log to summarize in the report.
    #[serde(default)]
    pub event_log: Option<PathBuf>,
    /// Study settings used to read `event_log`.
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(rename = "corpus")]
    pub corpora: Vec<CorpusEntry>,
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub order: usize,
    pub temperature: f64,
    pub top_k: usize,
    pub top_p: f64,
    pub min_tokens: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let p = SamplingParams::default();
        Self {
            order: default_order(),
            temperature: p.temperature,
            top_k: p.top_k,
            top_p: p.top_p,
            min_tokens: p.min_tokens,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub id: String,
    /// Externally generated text to import instead of sampling.
    #[serde(default)]
    pub generated: Option<PathBuf>,
    /// Overrides the seed derived from the manifest seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub outputs: StageOutputs,
}

/// File names per stage, relative to `<out_dir>/<corpus id>/`.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageOutputs {
    pub generated: PathBuf,
    pub candidates: PathBuf,
    pub tag_rules: PathBuf,
    pub kept: PathBuf,
    pub removed: PathBuf,
    pub ranked: PathBuf,
    pub assignable: PathBuf,
    pub matrix: PathBuf,
    pub guesswork: PathBuf,
}

impl Default for StageOutputs {
    fn default() -> Self {
        Self {
            generated: "generated.txt".into(),
            candidates: "candidates.tsv".into(),
            tag_rules: "tag_rules.csv".into(),
            kept: "kept.tsv".into(),
            removed: "removed.tsv".into(),
            ranked: "ranked.tsv".into(),
            assignable: "assignable.tsv".into(),
            matrix: "matrix.csv".into(),
            guesswork: "guesswork.csv".into(),
        }
    }
}

impl PipelineManifest {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation("manifest", format!("{}: {e}", path.display())))?;
        let mut m: Self = toml::from_str(&text).map_err(|e| CliError::validation("manifest", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut m.corpora_root);
        fix(&mut m.out_dir);
        if let Some(p) = &mut m.event_log {
            fix(p);
        }
        for c in &mut m.corpora {
            if let Some(p) = &mut c.generated {
                fix(p);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::validation("manifest", m));
        if self.corpora.is_empty() {
            return bad("at least one [[corpus]] entry is required".into());
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must be in (0, 1], got {}", self.theta));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return bad(format!("keep_fraction must be in (0, 1], got {}", self.keep_fraction));
        }
        if self.tag_rule_lengths.contains(&0) {
            return bad("tag_rule_lengths must be positive".into());
        }
        if self.guesswork_orders.iter().any(|n| !(1..=5).contains(n)) {
            return bad("guesswork_orders must be in 1..=5".into());
        }
        self.sampling_params(0).validate().map_err(invalid("manifest"))?;
        let mut ids: Vec<&str> = self.corpora.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("corpus ids must be unique".into());
        }
        Ok(())
    }

    fn sampling_params(&self, seed: u64) -> SamplingParams {
        SamplingParams {
            temperature: self.sampling.temperature,
            top_k: self.sampling.top_k,
            top_p: self.sampling.top_p,
            min_tokens: self.sampling.min_tokens,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageCounts {
    pub candidates: usize,
    pub kept: usize,
    pub removed: usize,
    pub ranked: usize,
    pub assignable: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusReport {
    pub id: String,
    pub source: &'static str,
    pub generate_seed: Option<u64>,
    pub extract_seed: u64,
    pub tokens: usize,
    pub vocabulary: usize,
    pub entropy_bits_5_words: f64,
    pub counts: StageCounts,
    pub tag_rules: Vec<TagRuleSummary>,
    pub guesswork: Vec<GuessworkSummary>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub theta: f64,
    pub keep_fraction: f64,
    pub random_condition_entropy_bits: f64,
    pub corpora: Vec<CorpusReport>,
    pub metrics: Option<MetricsReport>,
}

fn rel(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// Runs every stage for every corpus and writes `report.json` to `out_dir`.
/// `seed_override` replaces the manifest seed.
pub fn run_pipeline(manifest: &PipelineManifest, seed_override: Option<u64>) -> Result<PipelineReport, CliError> {
    let seed = seed_override.unwrap_or(manifest.seed);
    let registry = CorpusRegistry::new(&manifest.corpora_root);
    let out_base = &manifest.out_dir;
    let mut corpora = Vec::new();
    for (index, entry) in manifest.corpora.iter().enumerate() {
        let corpus_seed = entry.seed.unwrap_or_else(|| derive_seed(seed, index as u64));
        let generate_seed = derive_seed(corpus_seed, 1);
        let extract_seed = derive_seed(corpus_seed, 2);
        let dir = out_base.join(&entry.id);
        let o = &entry.outputs;
        let path = |p: &PathBuf| dir.join(p);
        let corpus_text = registry.text_path(&entry.id);
        let root = manifest.corpora_root.as_path();

        let (corpus, stats) = stages::ingest(&registry, &entry.id)?;

        let generated_path = path(&o.generated);
        let (text, source, gen_seed) = match &entry.generated {
            Some(file) => {
                let text = stages::import(file, &entry.id)?;
                Sidecar::new("import", Some(&entry.id), None, json!({}))
                    .input(file, file.parent())?
                    .write_for(&generated_path)?;
                (text, "imported", None)
            }
            None => {
                let params = manifest.sampling_params(generate_seed);
                let text = stages::generate(&corpus, manifest.sampling.order, &params)?;
                Sidecar::new(
                    "generate",
                    Some(&entry.id),
                    Some(generate_seed),
                    json!({ "order": manifest.sampling.order, "sampling": params }),
                )
                .input(&corpus_text, Some(root))?
                .write_for(&generated_path)?;
                (text, "builtin-sampler", Some(generate_seed))
            }
        };
        stages::write_output("generate", &generated_path, &text.text)?;

        let cands = stages::extract(&text, &corpus, extract_seed)?;
        let cand_path = path(&o.candidates);
        stages::write_output("extract", &cand_path, &stages::candidates_tsv(&cands))?;
        Sidecar::new("extract", Some(&entry.id), Some(extract_seed), json!({}))
            .input(&generated_path, Some(out_base))?
            .input(&corpus_text, Some(root))?
            .records(cands.len())
            .write_for(&cand_path)?;

        let tagger = stages::tagger_for(&corpus, "tag-rules", None)?;
        let (hist, tag_rules) = stages::tag_rules(&corpus, &tagger, &manifest.tag_rule_lengths)?;
        let hist_path = path(&o.tag_rules);
        stages::write_output("tag-rules", &hist_path, &hist)?;
        Sidecar::new("tag-rules", Some(&entry.id), None, json!({ "n": manifest.tag_rule_lengths }))
            .input(&corpus_text, Some(root))?
            .write_for(&hist_path)?;

        let outcome = stages::filter(&corpus, &tagger, &cands)?;
        let kept_path = path(&o.kept);
        let removed_path = path(&o.removed);
        stages::write_output("filter-candidates", &kept_path, &stages::candidates_tsv(&outcome.kept))?;
        stages::write_output("filter-candidates", &removed_path, &stages::removed_tsv(&outcome))?;
        for (p, n) in [(&kept_path, outcome.kept.len()), (&removed_path, outcome.removed.len())] {
            Sidecar::new("filter-candidates", Some(&entry.id), None, json!({}))
                .input(&cand_path, Some(out_base))?
                .input(&corpus_text, Some(root))?
                .records(n)
                .write_for(p)?;
        }

        let ranked = stages::rank(&corpus, &outcome.kept, manifest.keep_fraction)?;
        let ranked_path = path(&o.ranked);
        stages::write_output("rank", &ranked_path, &stages::ranked_tsv(&ranked))?;
        Sidecar::new("rank", Some(&entry.id), None, json!({ "keep_fraction": manifest.keep_fraction }))
            .input(&kept_path, Some(out_base))?
            .input(&corpus_text, Some(root))?
            .records(ranked.len())
            .write_for(&ranked_path)?;

        let pool: Vec<Vec<String>> = ranked.iter().map(|s| s.candidate.words.clone()).collect();
        let picked = stages::assign(&entry.id, &pool, manifest.theta, None).map_err(|e| CliError { stage: "dedup", ..e })?;
        let assignable: Vec<_> = picked.iter().map(|&i| ranked[i].clone()).collect();
        let assignable_path = path(&o.assignable);
        stages::write_output("dedup", &assignable_path, &stages::ranked_tsv(&assignable))?;
        Sidecar::new("dedup", Some(&entry.id), None, json!({ "theta": manifest.theta }))
            .input(&ranked_path, Some(out_base))?
            .records(assignable.len())
            .write_for(&assignable_path)?;

        let matrix_path = path(&o.matrix);
        stages::write_output("simmatrix", &matrix_path, &stages::simmatrix(&pool)?)?;
        Sidecar::new("simmatrix", Some(&entry.id), None, json!({ "provider": "hashed-ngram" }))
            .input(&ranked_path, Some(out_base))?
            .records(pool.len())
            .write_for(&matrix_path)?;

        let (curve, guesswork) = stages::guesswork(&corpus, &manifest.guesswork_orders)?;
        let curve_path = path(&o.guesswork);
        stages::write_output("guesswork", &curve_path, &curve)?;
        Sidecar::new("guesswork", Some(&entry.id), None, json!({ "n": manifest.guesswork_orders }))
            .input(&corpus_text, Some(root))?
            .write_for(&curve_path)?;

        let outputs = [
            &generated_path,
            &cand_path,
            &hist_path,
            &kept_path,
            &removed_path,
            &ranked_path,
            &assignable_path,
            &matrix_path,
            &curve_path,
        ]
        .iter()
        .map(|p| rel(out_base, p))
        .collect();
        corpora.push(CorpusReport {
            id: entry.id.clone(),
            source,
            generate_seed: gen_seed,
            extract_seed,
            tokens: stats.tokens,
            vocabulary: stats.vocabulary,
            entropy_bits_5_words: entropy_bits(stats.vocabulary as u64, 5),
            counts: StageCounts {
                candidates: cands.len(),
                kept: outcome.kept.len(),
                removed: outcome.removed.len(),
                ranked: ranked.len(),
                assignable: assignable.len(),
            },
            tag_rules,
            guesswork,
            outputs,
        });
    }

    let metrics = match &manifest.event_log {
        Some(log) => {
            let (_, events) = EventLog::open(log).map_err(|e| CliError::stage("metrics", e))?;
            Some(metrics_report(&events, &manifest.study, None).map_err(|e| CliError::stage("metrics", e))?)
        }
        None => None,
    };

    let dicts = RandomDictionaries::default();
    let sizes = [dicts.nouns.len(), dicts.verbs.len(), dicts.adjectives.len(), dicts.nouns.len()].map(|n| n as u64);
    let report = PipelineReport {
        seed,
        theta: manifest.theta,
        keep_fraction: manifest.keep_fraction,
        random_condition_entropy_bits: slot_entropy_bits(&sizes),
        corpora,
        metrics,
    };
    let body = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    stages::write_output("report", &out_base.join("report.json"), &body)?;
    Ok(report)
}
