//! Per-round recall metrics computed from raw events.
//!
//! For round `i >= 1`, with every count restricted to participants matching
//! the filter and not excluded for unfamiliarity:
//!
//! * participants(i): opened round i
//! * remembered(i): passed round i with fewer than `attempts_per_login`
//!   incorrect attempts
//! * dropout(i): in round i-1 (round 0 is everyone enrolled) but never opened i
//! * successful(i): failed round i-1 and passed round i
//! * successful_returned(i): remembered round i-1 and opened round i (round 1:
//!   everyone who opened it); survived(i): of those, remembered round i
//! * strict_returned / strict_survived: the same, requiring every earlier
//!   round to be remembered

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{Condition, StudyConfig};
use super::events::{EventKind, StudyEvent};
use super::StudyError;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsFilter {
    pub condition: Option<Condition>,
    pub story: Option<String>,
}

impl MetricsFilter {
    pub fn condition(c: Condition) -> Self {
        Self {
            condition: Some(c),
            story: None,
        }
    }

    pub fn story(s: &str) -> Self {
        Self {
            condition: Some(Condition::Familiar),
            story: Some(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u32,
    pub participants: usize,
    pub num_remembered: usize,
    pub failed: usize,
    pub success_rate: Option<f64>,
    pub failure_rate: Option<f64>,
    pub dropout: usize,
    /// `None` for round 1 and whenever nobody failed the previous round.
    pub num_successful: Option<usize>,
    pub num_successful_returned: usize,
    pub num_survived: usize,
    pub conditional_survival: Option<f64>,
    pub strict_successful_returned: usize,
    pub strict_survived: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub filter: MetricsFilter,
    /// Round 0: everyone enrolled that matches the filter.
    pub enrolled: usize,
    pub excluded: usize,
    pub rounds: Vec<RoundMetrics>,
}

#[derive(Debug, Default)]
struct Record {
    condition: Option<Condition>,
    story: Option<String>,
    excluded: bool,
    opened: BTreeSet<u32>,
    remembered: BTreeSet<u32>,
    terminal: BTreeSet<u32>,
}

impl Record {
    fn opened(&self, i: u32) -> bool {
        self.opened.contains(&i)
    }

    fn remembered(&self, i: u32) -> bool {
        self.remembered.contains(&i)
    }
}

fn percent(n: usize, d: usize) -> Option<f64> {
    (d > 0).then(|| n as f64 * 100.0 / d as f64)
}

fn records(events: &[StudyEvent], attempts_per_login: u32) -> Result<BTreeMap<&str, Record>, StudyError> {
    let mut out: BTreeMap<&str, Record> = BTreeMap::new();
    for (index, ev) in events.iter().enumerate() {
        let bad = |m: &str| StudyError::MalformedLog {
            index,
            message: m.to_string(),
        };
        if ev.kind == EventKind::Enrolled {
            let condition = ev
                .str_field("condition")
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| bad("enrollment without a valid condition"))?;
            if out.contains_key(ev.participant.as_str()) {
                return Err(bad("participant enrolled twice"));
            }
            out.insert(
                &ev.participant,
                Record {
                    condition: Some(condition),
                    ..Record::default()
                },
            );
            continue;
        }
        let r = out
            .get_mut(ev.participant.as_str())
            .ok_or_else(|| bad("event for a participant that never enrolled"))?;
        match ev.kind {
            EventKind::StoryChosen => r.story = ev.str_field("story").map(str::to_string),
            EventKind::RoundOpened => {
                r.opened.insert(ev.round);
            }
            EventKind::RoundPassed | EventKind::RoundFailed => {
                if !r.terminal.insert(ev.round) {
                    return Err(bad("second terminal event in one round"));
                }
                if !r.opened.contains(&ev.round) {
                    return Err(bad("terminal event for a round that was never opened"));
                }
                let incorrect = ev.u64_field("incorrect").unwrap_or(0);
                if ev.kind == EventKind::RoundPassed && incorrect < u64::from(attempts_per_login) {
                    r.remembered.insert(ev.round);
                }
            }
            EventKind::Survey => {
                let read = ev
                    .payload
                    .get("answers")
                    .and_then(|a| a.get("read_or_watched"))
                    .and_then(Value::as_bool);
                r.excluded = read == Some(false);
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Metrics for the participants selected by `filter` over rounds
/// `1..=rounds`.
pub fn compute_metrics(
    events: &[StudyEvent],
    filter: &MetricsFilter,
    attempts_per_login: u32,
    rounds: u32,
) -> Result<MetricsTable, StudyError> {
    let all = records(events, attempts_per_login)?;
    let selected: Vec<&Record> = all
        .values()
        .filter(|r| filter.condition.is_none() || r.condition == filter.condition)
        .filter(|r| filter.story.is_none() || r.story == filter.story)
        .collect();
    let counted: Vec<&Record> = selected.iter().copied().filter(|r| !r.excluded).collect();

    let mut table = MetricsTable {
        filter: filter.clone(),
        enrolled: selected.len(),
        excluded: selected.len() - counted.len(),
        rounds: Vec::new(),
    };
    let count = |pred: &dyn Fn(&Record) -> bool| counted.iter().filter(|r| pred(r)).count();
    for i in 1..=rounds {
        let participants = count(&|r| r.opened(i));
        let num_remembered = count(&|r| r.remembered(i));
        let failed = participants - num_remembered;
        let dropout = if i == 1 {
            selected.len() - participants
        } else {
            count(&|r| r.opened(i - 1) && !r.opened(i))
        };
        let failed_before = |r: &Record| r.opened(i - 1) && !r.remembered(i - 1);
        let num_successful = (i > 1 && count(&failed_before) > 0)
            .then(|| count(&|r| failed_before(r) && r.remembered(i)));
        let returned = |r: &Record| r.opened(i) && (i == 1 || r.remembered(i - 1));
        let strict = |r: &Record| r.opened(i) && (1..i).all(|j| r.remembered(j));
        let num_successful_returned = count(&returned);
        let num_survived = count(&|r| returned(r) && r.remembered(i));

        let success_rate = percent(num_remembered, participants);
        table.rounds.push(RoundMetrics {
            round: i,
            participants,
            num_remembered,
            failed,
            success_rate,
            failure_rate: success_rate.map(|s| 100.0 - s),
            dropout,
            num_successful,
            num_successful_returned,
            num_survived,
            conditional_survival: percent(num_survived, num_successful_returned),
            strict_successful_returned: count(&strict),
            strict_survived: count(&|r| strict(r) && r.remembered(i)),
        });
    }
    Ok(table)
}

/// Everything the admin view shows: per-condition tables, per-story tables
/// for the familiar condition, and survey answer counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub conditions: BTreeMap<String, MetricsTable>,
    pub stories: BTreeMap<String, MetricsTable>,
    pub survey: BTreeMap<String, BTreeMap<String, BTreeMap<String, usize>>>,
}

pub fn metrics_report(
    events: &[StudyEvent],
    config: &StudyConfig,
    only: Option<Condition>,
) -> Result<MetricsReport, StudyError> {
    let limit = config.attempts_per_login;
    let rounds = config.recall_rounds();
    let mut report = MetricsReport {
        conditions: BTreeMap::new(),
        stories: BTreeMap::new(),
        survey: survey_summary(events),
    };
    for &c in config.conditions.iter().filter(|c| only.is_none_or(|o| o == **c)) {
        let table = compute_metrics(events, &MetricsFilter::condition(c), limit, rounds)?;
        report.conditions.insert(c.as_str().to_string(), table);
        if c == Condition::Familiar {
            for story in &config.stories {
                let table = compute_metrics(events, &MetricsFilter::story(story), limit, rounds)?;
                report.stories.insert(story.clone(), table);
            }
        }
    }
    if let Some(o) = only {
        report.survey.retain(|k, _| k == o.as_str());
    }
    Ok(report)
}

/// Counts of each answer per survey question, per condition.
pub fn survey_summary(events: &[StudyEvent]) -> BTreeMap<String, BTreeMap<String, BTreeMap<String, usize>>> {
    let conditions: BTreeMap<&str, &str> = events
        .iter()
        .filter(|e| e.kind == EventKind::Enrolled)
        .filter_map(|e| Some((e.participant.as_str(), e.str_field("condition")?)))
        .collect();
    let mut out: BTreeMap<String, BTreeMap<String, BTreeMap<String, usize>>> = BTreeMap::new();
    for ev in events.iter().filter(|e| e.kind == EventKind::Survey) {
        let condition = conditions.get(ev.participant.as_str()).copied().unwrap_or("unknown");
        let Some(answers) = ev.payload.get("answers").and_then(Value::as_object) else {
            continue;
        };
        for (question, answer) in answers {
            *out.entry(condition.to_string())
                .or_default()
                .entry(question.clone())
                .or_default()
                .entry(answer.to_string())
                .or_insert(0) += 1;
        }
    }
    out
}
