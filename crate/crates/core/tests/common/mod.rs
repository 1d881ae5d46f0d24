#![allow(dead_code)]

pub mod criteria;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde_json::json;

use famphrase_core::corpus::{Corpus, CorpusRegistry};
use famphrase_core::extractor::CandidatePassphrase;
use famphrase_core::grammar::Tag;
use famphrase_core::rng::SplitMix64;
use famphrase_core::study::{EventKind, StudyEvent};

// shared by test targets in several crates, all at crates/<name>
fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpora_root() -> PathBuf {
    workspace_root().join("corpora")
}

pub fn load_corpus(id: &str) -> Result<Corpus, String> {
    CorpusRegistry::new(corpora_root())
        .load(id)
        .map_err(|e| e.to_string())
}

pub fn fixture(name: &str) -> String {
    let path = workspace_root().join("crates/core/tests/fixtures").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Expected passphrases, one pattern per line, `*` for a replaced slot.
pub fn expected_patterns() -> Vec<Vec<String>> {
    fixture("alice_expected.txt")
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect()
}

/// A `*` matches exactly one replaced slot; other words must be verbatim and
/// must not be replacements.
pub fn matches_pattern(c: &CandidatePassphrase, pattern: &[String]) -> bool {
    if c.words.len() != pattern.len() {
        return false;
    }
    let replaced: BTreeSet<usize> = c.replaced_slots.iter().map(|s| s.position).collect();
    pattern.iter().enumerate().all(|(i, p)| {
        if p == "*" {
            replaced.contains(&i)
        } else {
            !replaced.contains(&i) && c.words[i] == *p
        }
    })
}

/// Patterns without a matching candidate, and candidates without a pattern.
pub fn unmatched(cands: &[CandidatePassphrase], patterns: &[Vec<String>]) -> (Vec<String>, Vec<String>) {
    let mut used = vec![false; cands.len()];
    let mut missing = Vec::new();
    for p in patterns {
        match (0..cands.len()).find(|&i| !used[i] && matches_pattern(&cands[i], p)) {
            Some(i) => used[i] = true,
            None => missing.push(p.join(" ")),
        }
    }
    let extra = cands
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(c, _)| c.text())
        .collect();
    (missing, extra)
}

// ---------------------------------------------------------------- synthetic corpora

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "nu", "pe", "ra", "so", "ti", "vu", "we", "xa", "yo", "zi", "bo", "cu", "da", "fe", "gi", "ho",
    "ju",
];

pub struct Synthetic {
    pub alphabet: Vec<String>,
    pub tokens: Vec<String>,
}

/// A random corpus of at most `max_tokens` tokens over at most 20 words.
pub fn synthetic_corpus(seed: u64, max_tokens: usize) -> Synthetic {
    let mut rng = SplitMix64::new(seed);
    let size = 2 + rng.index(19);
    let alphabet: Vec<String> = SYLLABLES[..size].iter().map(|s| s.to_string()).collect();
    let len = 10 + rng.index(max_tokens - 9);
    // skewed draws so some windows repeat
    let tokens = (0..len)
        .map(|_| {
            let a = rng.index(size);
            let b = rng.index(size);
            alphabet[a.min(b)].clone()
        })
        .collect();
    Synthetic { alphabet, tokens }
}

pub fn random_sequence(rng: &mut SplitMix64, alphabet: &[String], len: usize) -> Vec<String> {
    (0..len)
        .map(|_| {
            if rng.index(10) == 0 {
                "unseen".to_string()
            } else {
                alphabet[rng.index(alphabet.len())].clone()
            }
        })
        .collect()
}

pub fn candidate(words: Vec<String>) -> CandidatePassphrase {
    CandidatePassphrase {
        words,
        corpus_id: "synthetic".into(),
        source_segment: String::new(),
        replaced_slots: Vec::new(),
    }
}

// ---------------------------------------------------------------- brute-force oracles

fn occurrences(tokens: &[String], pattern: &[String]) -> u64 {
    if pattern.len() > tokens.len() {
        return 0;
    }
    (0..=tokens.len() - pattern.len())
        .filter(|&j| tokens[j..j + pattern.len()] == *pattern)
        .count() as u64
}

/// Windows of length `k` whose first `k-1` tokens equal `context`.
fn context_occurrences(tokens: &[String], context: &[String]) -> u64 {
    let k = context.len() + 1;
    if k > tokens.len() {
        return 0;
    }
    (0..=tokens.len() - k)
        .filter(|&j| tokens[j..j + context.len()] == *context)
        .count() as u64
}

/// Chain-rule Laplace joint probability by direct scanning.
pub fn oracle_joint(tokens: &[String], vocab: usize, order: usize, seq: &[String]) -> f64 {
    let mut p = 1.0;
    for i in 0..seq.len() {
        let ctx = &seq[i.saturating_sub(order - 1)..i];
        let mut full = ctx.to_vec();
        full.push(seq[i].clone());
        let c = occurrences(tokens, &full);
        let d = context_occurrences(tokens, ctx);
        p *= (c as f64 + 1.0) / (d as f64 + vocab as f64);
    }
    p
}

/// Tag-rules by enumerating every window and grouping naively.
pub fn oracle_tag_rules(tokens: &[String], tags: &[Tag], n: usize) -> Vec<(Vec<Tag>, Vec<Vec<String>>)> {
    let mut rules: Vec<(Vec<Tag>, Vec<Vec<String>>)> = Vec::new();
    for j in 0..=tokens.len() - n {
        let key = tags[j..j + n].to_vec();
        let words = tokens[j..j + n].to_vec();
        match rules.iter_mut().find(|(k, _)| *k == key) {
            Some((_, seqs)) => {
                if !seqs.contains(&words) {
                    seqs.push(words);
                }
            }
            None => rules.push((key, vec![words])),
        }
    }
    rules
}

/// Smallest k with `sum of top k counts >= num/den * total`, exactly.
pub fn oracle_guesswork(counts: &[u64], num: u64, den: u64) -> usize {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let total: u64 = sorted.iter().sum();
    let mut acc = 0u64;
    for (i, c) in sorted.iter().enumerate() {
        acc += c;
        if acc * den >= num * total {
            return i + 1;
        }
    }
    sorted.len()
}

pub fn window_counts(tokens: &[String], n: usize) -> Vec<u64> {
    let mut m: BTreeMap<&[String], u64> = BTreeMap::new();
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m.into_values().collect()
}

// ---------------------------------------------------------------- synthetic study logs

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 3, 1, 9, 0, 0).unwrap()
}

/// One participant: recall outcomes for rounds 1, 2, ... in order.
#[derive(Debug, Clone)]
pub struct History {
    pub id: String,
    pub condition: &'static str,
    pub story: Option<&'static str>,
    pub excluded: bool,
    pub rounds: Vec<bool>,
}

impl History {
    fn new(id: String, condition: &'static str, story: Option<&'static str>) -> Self {
        Self {
            id,
            condition,
            story,
            excluded: false,
            rounds: Vec::new(),
        }
    }
}

pub fn events_for(histories: &[History]) -> Vec<StudyEvent> {
    let mut out = Vec::new();
    for (n, h) in histories.iter().enumerate() {
        let mut at = t0() + Duration::seconds(n as i64);
        let mut push = |kind, round, payload| {
            out.push(StudyEvent::new(at, &h.id, kind, round, payload));
            at += Duration::minutes(1);
        };
        push(EventKind::Enrolled, 0, json!({ "condition": h.condition }));
        if let Some(s) = h.story {
            push(EventKind::StoryChosen, 0, json!({ "story": s }));
        }
        push(EventKind::RoundOpened, 0, json!({}));
        push(EventKind::RoundPassed, 0, json!({ "incorrect": 0 }));
        for (i, &passed) in h.rounds.iter().enumerate() {
            let round = i as u32 + 1;
            push(EventKind::RoundOpened, round, json!({}));
            if passed {
                push(EventKind::RoundPassed, round, json!({ "incorrect": n % 3 }));
            } else {
                push(EventKind::RoundFailed, round, json!({ "incorrect": 3 }));
            }
            if round == 1 && h.story.is_some() {
                push(EventKind::Survey, 1, json!({ "answers": { "read_or_watched": !h.excluded } }));
            }
        }
    }
    out
}

/// Participants where round `i` is a subset of round `i - 1`. Each row is
/// (participants, remembered, successful-after-failure).
pub fn nested_histories(
    prefix: &str,
    condition: &'static str,
    story: Option<&'static str>,
    enrolled: usize,
    rows: &[(usize, usize, Option<usize>)],
) -> Result<Vec<History>, String> {
    let mut people: Vec<History> = (0..enrolled)
        .map(|k| History::new(format!("{prefix}-{k}"), condition, story))
        .collect();
    let (p1, r1, _) = rows[0];
    if p1 > enrolled || r1 > p1 {
        return Err("round 1 does not fit".into());
    }
    for (k, h) in people.iter_mut().take(p1).enumerate() {
        h.rounds.push(k < r1);
    }
    let mut remembered: Vec<usize> = (0..r1).collect();
    let mut failed: Vec<usize> = (r1..p1).collect();
    for (i, &(p, r, s)) in rows.iter().enumerate().skip(1) {
        let s = s.unwrap_or(0);
        let cf = s.max(p.saturating_sub(remembered.len()));
        if cf > failed.len() || p < cf || p - cf > remembered.len() || p - cf + s < r || r < s {
            return Err(format!("round {} does not fit", i + 1));
        }
        let (mut rem, mut fail) = (Vec::new(), Vec::new());
        for (k, &idx) in failed.iter().take(cf).enumerate() {
            let pass = k < s;
            people[idx].rounds.push(pass);
            if pass { rem.push(idx) } else { fail.push(idx) }
        }
        for (k, &idx) in remembered.iter().take(p - cf).enumerate() {
            let pass = k < r - s;
            people[idx].rounds.push(pass);
            if pass { rem.push(idx) } else { fail.push(idx) }
        }
        remembered = rem;
        failed = fail;
    }
    Ok(people)
}

/// Participants reproducing (returned, survived) per round where "returned"
/// means remembered the previous round and opened this one.
pub fn survival_histories(prefix: &str, condition: &'static str, rows: &[(usize, usize)]) -> Result<Vec<History>, String> {
    let (sr1, sv1) = rows[0];
    let mut people: Vec<History> = (0..sr1)
        .map(|k| {
            let mut h = History::new(format!("{prefix}-{k}"), condition, None);
            h.rounds.push(k < sv1);
            h
        })
        .collect();
    let mut remembered: Vec<usize> = (0..sv1).collect();
    let mut failed: Vec<usize> = (sv1..sr1).collect();
    for i in 1..rows.len() {
        let (sr, sv) = rows[i];
        let recovered = rows.get(i + 1).map_or(0, |&(next, _)| next.saturating_sub(sv));
        if sr > remembered.len() || recovered > failed.len() || sv > sr {
            return Err(format!("round {} does not fit", i + 1));
        }
        let (mut rem, mut fail) = (Vec::new(), Vec::new());
        for (k, &idx) in remembered.iter().take(sr).enumerate() {
            let pass = k < sv;
            people[idx].rounds.push(pass);
            if pass { rem.push(idx) } else { fail.push(idx) }
        }
        // earlier failures keep coming back; some recover to feed the next round
        for (k, &idx) in failed.iter().enumerate() {
            let pass = k < recovered;
            people[idx].rounds.push(pass);
            if pass { rem.push(idx) } else { fail.push(idx) }
        }
        remembered = rem;
        failed = fail;
    }
    Ok(people)
}

/// Remembered count from a printed rate, as the tables only give rates.
pub fn from_rate(participants: usize, rate: f64) -> usize {
    (rate * participants as f64 / 100.0).round() as usize
}

/// participants, remembered, failed, success %, failure %, dropout, NumSuccessful
pub type RoundRow = (usize, usize, usize, f64, f64, usize, Option<usize>);

pub const RANDOM_ROUNDS: [RoundRow; 6] = [
    (148, 94, 54, 63.51, 36.49, 102, None),
    (136, 101, 35, 74.26, 25.74, 12, Some(14)),
    (130, 106, 24, 81.54, 18.46, 6, Some(11)),
    (122, 110, 12, 90.16, 9.84, 8, Some(10)),
    (119, 102, 17, 85.71, 14.29, 3, Some(2)),
    (106, 98, 8, 92.45, 7.55, 13, Some(7)),
];

pub const FAMILIAR_ROUNDS: [RoundRow; 6] = [
    (162, 105, 57, 64.81, 35.19, 88, None),
    (146, 113, 33, 77.40, 22.60, 16, Some(26)),
    (124, 104, 20, 83.87, 16.13, 22, Some(12)),
    (119, 104, 15, 87.39, 12.61, 5, Some(8)),
    (110, 103, 7, 93.64, 6.36, 9, Some(5)),
    (94, 87, 7, 92.55, 7.45, 16, Some(2)),
];

/// (participants, success %, failure %, dropout, NumSuccessful); the first
/// row's dropout is not printed.
pub type StoryRow = (usize, f64, f64, Option<usize>, Option<usize>);

pub const ALICE_STORY_ROUNDS: [StoryRow; 6] = [
    (110, 66.36, 33.64, None, None),
    (98, 77.55, 22.45, Some(12), Some(18)),
    (82, 84.15, 15.85, Some(16), Some(9)),
    (79, 87.34, 12.66, Some(3), Some(5)),
    (76, 92.10, 7.89, Some(3), Some(4)),
    (68, 89.70, 10.29, Some(8), Some(1)),
];

pub const PRIDE_STORY_ROUNDS: [StoryRow; 6] = [
    (17, 82.35, 17.65, None, None),
    (16, 87.5, 12.5, Some(1), Some(2)),
    (14, 92.86, 7.14, Some(2), Some(1)),
    (14, 100.0, 0.0, Some(0), Some(1)),
    (11, 100.0, 0.0, Some(3), None),
    (8, 100.0, 0.0, Some(3), None),
];

pub const SHERLOCK_STORY_ROUNDS: [StoryRow; 6] = [
    (35, 51.43, 48.57, None, None),
    (32, 71.88, 28.12, Some(3), Some(6)),
    (28, 78.57, 21.43, Some(4), Some(2)),
    (26, 80.77, 19.23, Some(2), Some(2)),
    (23, 95.65, 4.35, Some(3), Some(1)),
    (18, 100.0, 0.0, Some(5), Some(1)),
];

/// (returned, survived, survival %) for rounds 1..=6.
pub const RANDOM_SURVIVAL: [(usize, usize, f64); 6] = [
    (148, 94, 63.51),
    (89, 87, 97.75),
    (96, 82, 85.42),
    (101, 77, 76.24),
    (107, 74, 69.16),
    (92, 67, 72.83),
];

pub const FAMILIAR_SURVIVAL: [(usize, usize, f64); 6] = [
    (162, 105, 64.81),
    (94, 87, 92.55),
    (96, 70, 72.92),
    (99, 65, 65.66),
    (98, 61, 62.24),
    (88, 52, 59.09),
];

pub const ENROLLED_PER_CONDITION: usize = 250;
pub const EXCLUDED_FAMILIAR: usize = 22;

/// The printed tables truncate to two decimals.
pub fn close(actual: Option<f64>, printed: f64) -> bool {
    actual.is_some_and(|a| (a - printed).abs() < 0.01)
}

pub fn story_histories(story: &'static str, rows: &[StoryRow], extra_enrolled: usize) -> Result<Vec<History>, String> {
    let spec: Vec<(usize, usize, Option<usize>)> = rows
        .iter()
        .map(|&(p, rate, _, _, s)| (p, from_rate(p, rate), s))
        .collect();
    nested_histories(story, "familiar", Some(story), rows[0].0 + extra_enrolled, &spec)
}

/// All familiar participants: three stories plus the excluded and the
/// round-1 no-shows (filed under alice).
pub fn familiar_log() -> Result<Vec<History>, String> {
    let openers: usize = [ALICE_STORY_ROUNDS[0].0, PRIDE_STORY_ROUNDS[0].0, SHERLOCK_STORY_ROUNDS[0].0].iter().sum();
    let no_show = ENROLLED_PER_CONDITION - openers - EXCLUDED_FAMILIAR;
    let mut all = story_histories("alice", &ALICE_STORY_ROUNDS, no_show)?;
    all.extend(story_histories("pride", &PRIDE_STORY_ROUNDS, 0)?);
    all.extend(story_histories("sherlock", &SHERLOCK_STORY_ROUNDS, 0)?);
    for k in 0..EXCLUDED_FAMILIAR {
        let mut h = History::new(format!("unfamiliar-{k}"), "familiar", Some("sherlock"));
        h.excluded = true;
        h.rounds.push(true);
        all.push(h);
    }
    Ok(all)
}

pub fn random_log() -> Result<Vec<History>, String> {
    let spec: Vec<(usize, usize, Option<usize>)> = RANDOM_ROUNDS.iter().map(|r| (r.0, r.1, r.6)).collect();
    nested_histories("random", "random", None, ENROLLED_PER_CONDITION, &spec)
}
