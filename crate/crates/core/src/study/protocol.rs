//! Participant state rebuilt from events, and the operations that produce new
//! events. Every operation is split into a `plan_*` step that validates and
//! returns the events to append, and [`Study::execute`] which applies them.
//! A service appends the planned events to its log before executing them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::assign::{assign_familiar_passphrase, generate_random_passphrase};
use super::config::{AssignmentPolicy, Condition, StudyConfig};
use super::events::{EventKind, StudyEvent};
use super::StudyError;
use crate::rng::derive_seed;
use crate::similarity::{EmbeddingProvider, HashedNgramProvider};

/// Ranked passphrases per story, best (rank 1) first.
pub type Pools = BTreeMap<String, Vec<Vec<String>>>;

pub const SURVEY_LIKERT_KEYS: [&str; 3] = ["annoying", "difficult", "fun"];
pub const SURVEY_STORY_KEYS: [&str; 3] = ["read_or_watched", "imagined_scene", "scene_related_to_story"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundWindow {
    pub round: u32,
    pub opens_at: DateTime<Utc>,
    pub closes_at: DateTime<Utc>,
}

fn chrono_duration(d: std::time::Duration) -> Duration {
    Duration::from_std(d).expect("configured durations fit")
}

/// Recall windows measured from `anchor`, the end of memorization.
pub fn schedule(anchor: DateTime<Utc>, config: &StudyConfig) -> Vec<RoundWindow> {
    let window = chrono_duration(config.round_window);
    config
        .schedule_offsets
        .iter()
        .enumerate()
        .map(|(i, off)| {
            let opens_at = anchor + chrono_duration(*off);
            RoundWindow {
                round: i as u32 + 1,
                opens_at,
                closes_at: opens_at + window,
            }
        })
        .collect()
}

/// Case-sensitive word-by-word comparison after whitespace normalization.
pub fn verify_attempt<S: AsRef<str>>(assigned: &[S], input: &str) -> bool {
    let expected = assigned.iter().flat_map(|w| w.as_ref().split_whitespace());
    input.split_whitespace().eq(expected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Familiarity {
    ReadOrWatched,
    Neither,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundOutcome {
    Passed,
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub opened_at: Option<DateTime<Utc>>,
    pub attempts: u32,
    pub incorrect: u32,
    pub outcome: Option<RoundOutcome>,
    pub finished_at: Option<DateTime<Utc>>,
}

impl RoundState {
    pub fn is_terminal(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn remembered(&self, attempts_per_login: u32) -> bool {
        self.outcome == Some(RoundOutcome::Passed) && self.incorrect < attempts_per_login
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub ordinal: usize,
    pub condition: Condition,
    pub story: Option<String>,
    pub assignment: Option<Vec<String>>,
    pub pool_index: Option<usize>,
    pub enrolled_at: DateTime<Utc>,
    pub assigned_at: Option<DateTime<Utc>>,
    pub familiarity: Familiarity,
    pub token_sha256: Option<String>,
    pub rounds: BTreeMap<u32, RoundState>,
    pub survey: Option<Map<String, Value>>,
    last_event_at: DateTime<Utc>,
}

impl Participant {
    pub fn excluded(&self) -> bool {
        self.familiarity == Familiarity::Neither
    }

    pub fn round(&self, i: u32) -> Option<&RoundState> {
        self.rounds.get(&i)
    }

    /// When memorization (round 0) finished.
    pub fn memorized_at(&self) -> Option<DateTime<Utc>> {
        self.rounds.get(&0).and_then(|r| r.finished_at)
    }
}

/// Result of one login attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum AttemptOutcome {
    Passed { incorrect: u32 },
    Retry { remaining: u32 },
    Failed { revealed: String },
}

/// Per-round view for clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStatus {
    pub round: u32,
    pub opens_at: Option<DateTime<Utc>>,
    pub closes_at: Option<DateTime<Utc>>,
    pub status: &'static str,
    pub attempts_remaining: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnrollPolicy {
    Random,
    Familiar,
    Auto,
}

pub struct Study {
    config: StudyConfig,
    pools: Pools,
    provider: Arc<dyn EmbeddingProvider>,
    participants: BTreeMap<String, Participant>,
    consumed: HashMap<String, HashSet<usize>>,
    requests: HashMap<(String, String), AttemptOutcome>,
    events: Vec<StudyEvent>,
}

impl std::fmt::Debug for Study {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Study")
            .field("participants", &self.participants.len())
            .field("events", &self.events.len())
            .field("provider", &self.provider.name())
            .finish()
    }
}

fn malformed(index: usize, message: impl Into<String>) -> StudyError {
    StudyError::MalformedLog {
        index,
        message: message.into(),
    }
}

impl Study {
    pub fn new(config: StudyConfig, pools: Pools) -> Result<Self, StudyError> {
        Self::with_provider(config, pools, Arc::new(HashedNgramProvider::default()))
    }

    pub fn with_provider(
        config: StudyConfig,
        pools: Pools,
        provider: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, StudyError> {
        config.validate()?;
        Ok(Self {
            config,
            pools,
            provider,
            participants: BTreeMap::new(),
            consumed: HashMap::new(),
            requests: HashMap::new(),
            events: Vec::new(),
        })
    }

    /// Rebuilds state from a log.
    pub fn replay(
        config: StudyConfig,
        pools: Pools,
        provider: Arc<dyn EmbeddingProvider>,
        events: Vec<StudyEvent>,
    ) -> Result<Self, StudyError> {
        let mut study = Self::with_provider(config, pools, provider)?;
        study.execute(events)?;
        Ok(study)
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    pub fn events(&self) -> &[StudyEvent] {
        &self.events
    }

    pub fn participants(&self) -> impl Iterator<Item = &Participant> {
        self.participants.values()
    }

    pub fn participant(&self, id: &str) -> Result<&Participant, StudyError> {
        self.participants
            .get(id)
            .ok_or_else(|| StudyError::UnknownParticipant(id.to_string()))
    }

    /// Participant whose enrollment recorded this token hash.
    pub fn participant_by_token_hash(&self, hash: &str) -> Option<&Participant> {
        self.participants
            .values()
            .find(|p| p.token_sha256.as_deref() == Some(hash))
    }

    /// Applies events in order, validating each against current state.
    pub fn execute(&mut self, events: Vec<StudyEvent>) -> Result<(), StudyError> {
        for ev in events {
            self.apply(ev)?;
        }
        Ok(())
    }

    fn apply(&mut self, ev: StudyEvent) -> Result<(), StudyError> {
        let index = self.events.len();
        let limit = self.config.attempts_per_login;
        let rounds = self.config.recall_rounds();
        if ev.round > rounds {
            return Err(malformed(index, format!("round {} out of range", ev.round)));
        }
        if ev.kind == EventKind::Enrolled {
            if self.participants.contains_key(&ev.participant) {
                return Err(malformed(index, format!("`{}` enrolled twice", ev.participant)));
            }
            let condition: Condition = ev
                .str_field("condition")
                .ok_or_else(|| malformed(index, "enrollment without condition"))?
                .parse()
                .map_err(|_| malformed(index, "unknown condition"))?;
            let p = Participant {
                id: ev.participant.clone(),
                ordinal: self.participants.len(),
                condition,
                story: None,
                assignment: None,
                pool_index: None,
                enrolled_at: ev.at,
                assigned_at: None,
                familiarity: Familiarity::Unknown,
                token_sha256: ev.str_field("token_sha256").map(str::to_string),
                rounds: BTreeMap::new(),
                survey: None,
                last_event_at: ev.at,
            };
            self.participants.insert(p.id.clone(), p);
            self.events.push(ev);
            return Ok(());
        }

        let p = self
            .participants
            .get_mut(&ev.participant)
            .ok_or_else(|| malformed(index, format!("event for unknown participant `{}`", ev.participant)))?;
        if ev.at < p.last_event_at {
            return Err(malformed(index, "events out of time order"));
        }
        p.last_event_at = ev.at;

        match ev.kind {
            EventKind::Enrolled => unreachable!(),
            EventKind::StoryChosen => {
                let story = ev
                    .str_field("story")
                    .ok_or_else(|| malformed(index, "story-chosen without story"))?;
                if p.story.is_some() {
                    return Err(malformed(index, "story chosen twice"));
                }
                p.story = Some(story.to_string());
            }
            EventKind::Assigned => {
                if p.assignment.is_some() {
                    return Err(malformed(index, "assigned twice"));
                }
                let words = ev
                    .words_field("words")
                    .filter(|w| !w.is_empty())
                    .ok_or_else(|| malformed(index, "assignment without words"))?;
                p.assignment = Some(words);
                p.assigned_at = Some(ev.at);
                if let Some(i) = ev.u64_field("pool_index") {
                    p.pool_index = Some(i as usize);
                    if let Some(story) = &p.story {
                        self.consumed.entry(story.clone()).or_default().insert(i as usize);
                    }
                }
            }
            EventKind::RoundOpened => {
                let r = p.rounds.entry(ev.round).or_default();
                if r.opened_at.is_some() {
                    return Err(malformed(index, format!("round {} opened twice", ev.round)));
                }
                r.opened_at = Some(ev.at);
            }
            EventKind::Attempt => {
                let r = p
                    .rounds
                    .get_mut(&ev.round)
                    .filter(|r| r.opened_at.is_some())
                    .ok_or_else(|| malformed(index, "attempt in a round that was never opened"))?;
                if r.is_terminal() {
                    return Err(malformed(index, "attempt after the round finished"));
                }
                if r.attempts >= limit {
                    return Err(malformed(index, "too many attempts"));
                }
                let correct = ev
                    .bool_field("correct")
                    .ok_or_else(|| malformed(index, "attempt without correctness"))?;
                r.attempts += 1;
                if !correct {
                    r.incorrect += 1;
                }
                let outcome = if correct {
                    AttemptOutcome::Passed { incorrect: r.incorrect }
                } else if r.incorrect >= limit {
                    AttemptOutcome::Failed {
                        revealed: p.assignment.as_ref().map(|w| w.join(" ")).unwrap_or_default(),
                    }
                } else {
                    AttemptOutcome::Retry {
                        remaining: limit - r.incorrect,
                    }
                };
                if let Some(req) = ev.str_field("request_id") {
                    self.requests.insert((ev.participant.clone(), req.to_string()), outcome);
                }
            }
            EventKind::RoundPassed | EventKind::RoundFailed => {
                let r = p
                    .rounds
                    .get_mut(&ev.round)
                    .ok_or_else(|| malformed(index, "terminal event for unopened round"))?;
                if r.is_terminal() {
                    return Err(malformed(index, format!("second terminal event for round {}", ev.round)));
                }
                r.outcome = Some(if ev.kind == EventKind::RoundPassed {
                    RoundOutcome::Passed
                } else {
                    RoundOutcome::Failed
                });
                r.finished_at = Some(ev.at);
            }
            EventKind::Revealed | EventKind::Invited => {}
            EventKind::Survey => {
                if p.survey.is_some() {
                    return Err(malformed(index, "survey submitted twice"));
                }
                let answers = ev
                    .payload
                    .get("answers")
                    .and_then(Value::as_object)
                    .cloned()
                    .ok_or_else(|| malformed(index, "survey without answers"))?;
                if let Some(read) = answers.get("read_or_watched").and_then(Value::as_bool) {
                    p.familiarity = if read {
                        Familiarity::ReadOrWatched
                    } else {
                        Familiarity::Neither
                    };
                }
                p.survey = Some(answers);
            }
        }
        self.events.push(ev);
        Ok(())
    }

    fn count_condition(&self, c: Condition) -> usize {
        self.participants.values().filter(|p| p.condition == c).count()
    }

    /// Picks the condition with fewer enrollments; ties go to the first
    /// configured condition.
    fn auto_condition(&self) -> Condition {
        *self
            .config
            .conditions
            .iter()
            .min_by_key(|c| self.count_condition(**c))
            .expect("validated non-empty")
    }

    pub fn plan_enroll(
        &self,
        id: &str,
        policy: EnrollPolicy,
        token_sha256: Option<&str>,
        at: DateTime<Utc>,
    ) -> Result<Vec<StudyEvent>, StudyError> {
        if id.trim().is_empty() {
            return Err(StudyError::Validation("participant id must not be empty".into()));
        }
        if self.participants.contains_key(id) {
            return Err(StudyError::DuplicateParticipant(id.to_string()));
        }
        let condition = match policy {
            EnrollPolicy::Random => Condition::Random,
            EnrollPolicy::Familiar => Condition::Familiar,
            EnrollPolicy::Auto => self.auto_condition(),
        };
        if !self.config.conditions.contains(&condition) {
            return Err(StudyError::Validation(format!(
                "condition `{}` is not part of this study",
                condition.as_str()
            )));
        }
        let mut payload = json!({ "condition": condition.as_str() });
        if let Some(h) = token_sha256 {
            payload["token_sha256"] = json!(h);
        }
        let mut events = vec![StudyEvent::new(at, id, EventKind::Enrolled, 0, payload)];
        if condition == Condition::Random {
            let seed = derive_seed(self.config.seed, self.participants.len() as u64);
            let words = generate_random_passphrase(&self.config.random_dictionaries, seed)?;
            events.push(StudyEvent::new(at, id, EventKind::Assigned, 0, json!({ "words": words })));
        }
        Ok(events)
    }

    pub fn plan_choose_story(&self, id: &str, story: &str, at: DateTime<Utc>) -> Result<Vec<StudyEvent>, StudyError> {
        let p = self.participant(id)?;
        if p.condition != Condition::Familiar {
            return Err(StudyError::Conflict("only familiar-condition participants choose a story".into()));
        }
        if p.story.is_some() {
            return Err(StudyError::Conflict("story already chosen".into()));
        }
        if !self.config.stories.iter().any(|s| s == story) {
            return Err(StudyError::Validation(format!("unknown story `{story}`")));
        }
        let pool = self
            .pools
            .get(story)
            .ok_or_else(|| StudyError::PoolExhausted(story.to_string()))?;
        let index = match self.config.assignment_policy {
            AssignmentPolicy::FixedPerStory if !pool.is_empty() => 0,
            AssignmentPolicy::FixedPerStory => return Err(StudyError::PoolExhausted(story.to_string())),
            AssignmentPolicy::Distinct => {
                let assigned: Vec<String> = self
                    .participants
                    .values()
                    .filter(|q| q.story.as_deref() == Some(story))
                    .filter_map(|q| q.assignment.as_ref().map(|w| w.join(" ")))
                    .collect();
                let empty = HashSet::new();
                let consumed = self.consumed.get(story).unwrap_or(&empty);
                assign_familiar_passphrase(
                    story,
                    pool,
                    consumed,
                    &assigned,
                    self.config.dedup_threshold,
                    self.provider.as_ref(),
                )?
            }
        };
        Ok(vec![
            StudyEvent::new(at, id, EventKind::StoryChosen, 0, json!({ "story": story })),
            StudyEvent::new(
                at,
                id,
                EventKind::Assigned,
                0,
                json!({ "words": pool[index], "story": story, "pool_index": index }),
            ),
        ])
    }

    /// The recall window of round `i >= 1`, known once memorization is done.
    pub fn window(&self, p: &Participant, round: u32) -> Option<RoundWindow> {
        let anchor = p.memorized_at()?;
        schedule(anchor, &self.config)
            .into_iter()
            .find(|w| w.round == round)
    }

    pub fn plan_attempt(
        &self,
        id: &str,
        round: u32,
        text: &str,
        request_id: Option<&str>,
        at: DateTime<Utc>,
    ) -> Result<(AttemptOutcome, Vec<StudyEvent>), StudyError> {
        if let Some(req) = request_id {
            if let Some(prev) = self.requests.get(&(id.to_string(), req.to_string())) {
                return Ok((prev.clone(), Vec::new()));
            }
        }
        let p = self.participant(id)?;
        let assignment = p
            .assignment
            .as_ref()
            .ok_or_else(|| StudyError::Conflict("no passphrase assigned yet".into()))?;
        if round > self.config.recall_rounds() {
            return Err(StudyError::Validation(format!("round {round} does not exist")));
        }
        let state = p.rounds.get(&round).cloned().unwrap_or_default();
        if state.is_terminal() {
            return Err(StudyError::RoundAlreadyTerminal(round));
        }
        let mut window = None;
        if round > 0 {
            let prev_done = p.round(round - 1).is_some_and(RoundState::is_terminal);
            if !prev_done {
                return Err(StudyError::PreviousRoundIncomplete(round));
            }
            let w = self.window(p, round).expect("memorization finished");
            if at < w.opens_at {
                return Err(StudyError::RoundNotOpen {
                    round,
                    opens_at: w.opens_at,
                });
            }
            if at > w.closes_at {
                return Err(StudyError::RoundClosed(round));
            }
            window = Some(w);
        }

        let limit = self.config.attempts_per_login;
        let mut events = Vec::new();
        if state.opened_at.is_none() {
            let payload = match window {
                Some(w) => json!({ "opens_at": w.opens_at, "closes_at": w.closes_at }),
                None => json!({}),
            };
            events.push(StudyEvent::new(at, id, EventKind::RoundOpened, round, payload));
        }
        let correct = verify_attempt(assignment, text);
        let mut payload = json!({
            "text": text,
            "correct": correct,
            "attempt": state.attempts + 1,
        });
        if let Some(req) = request_id {
            payload["request_id"] = json!(req);
        }
        events.push(StudyEvent::new(at, id, EventKind::Attempt, round, payload));

        let incorrect = state.incorrect + u32::from(!correct);
        let outcome = if correct {
            events.push(StudyEvent::new(
                at,
                id,
                EventKind::RoundPassed,
                round,
                json!({ "incorrect": incorrect }),
            ));
            AttemptOutcome::Passed { incorrect }
        } else if incorrect >= limit {
            let revealed = assignment.join(" ");
            events.push(StudyEvent::new(
                at,
                id,
                EventKind::RoundFailed,
                round,
                json!({ "incorrect": incorrect }),
            ));
            events.push(StudyEvent::new(
                at,
                id,
                EventKind::Revealed,
                round,
                json!({ "passphrase": revealed }),
            ));
            AttemptOutcome::Failed { revealed }
        } else {
            AttemptOutcome::Retry {
                remaining: limit - incorrect,
            }
        };

        let finished = !matches!(outcome, AttemptOutcome::Retry { .. });
        if finished && round < self.config.recall_rounds() {
            let anchor = if round == 0 { at } else { p.memorized_at().expect("round > 0") };
            let next = schedule(anchor, &self.config)[round as usize];
            events.push(StudyEvent::new(
                at,
                id,
                EventKind::Invited,
                next.round,
                json!({ "opens_at": next.opens_at, "closes_at": next.closes_at }),
            ));
        }
        Ok((outcome, events))
    }

    pub fn plan_survey(
        &self,
        id: &str,
        answers: &Map<String, Value>,
        at: DateTime<Utc>,
    ) -> Result<Vec<StudyEvent>, StudyError> {
        let p = self.participant(id)?;
        if p.survey.is_some() {
            return Err(StudyError::Conflict("survey already submitted".into()));
        }
        if p.round(1).and_then(|r| r.opened_at).is_none() {
            return Err(StudyError::Conflict("the survey opens with the first recall round".into()));
        }
        for key in SURVEY_LIKERT_KEYS {
            match answers.get(key).and_then(Value::as_u64) {
                Some(1..=5) => {}
                _ => return Err(StudyError::Validation(format!("`{key}` must be an integer 1..5"))),
            }
        }
        if p.condition == Condition::Familiar {
            for key in SURVEY_STORY_KEYS {
                if !answers.get(key).is_some_and(Value::is_boolean) {
                    return Err(StudyError::Validation(format!("`{key}` must be true or false")));
                }
            }
        }
        let allowed: HashSet<&str> = SURVEY_LIKERT_KEYS.iter().chain(&SURVEY_STORY_KEYS).copied().collect();
        if let Some(k) = answers.keys().find(|k| !allowed.contains(k.as_str())) {
            return Err(StudyError::Validation(format!("unknown survey key `{k}`")));
        }
        Ok(vec![StudyEvent::new(
            at,
            id,
            EventKind::Survey,
            1,
            json!({ "answers": answers }),
        )])
    }

    /// The passphrase, visible only until memorization ends.
    pub fn assignment_view(&self, id: &str) -> Result<Vec<String>, StudyError> {
        let p = self.participant(id)?;
        let words = p
            .assignment
            .clone()
            .ok_or_else(|| StudyError::Conflict("no passphrase assigned yet".into()))?;
        if p.round(0).is_some_and(RoundState::is_terminal) {
            return Err(StudyError::Forbidden("memorization is over".into()));
        }
        Ok(words)
    }

    pub fn rounds_view(&self, id: &str, now: DateTime<Utc>) -> Result<Vec<RoundStatus>, StudyError> {
        let p = self.participant(id)?;
        let limit = self.config.attempts_per_login;
        let mut out = Vec::new();
        for round in 0..=self.config.recall_rounds() {
            let state = p.round(round).cloned().unwrap_or_default();
            let window = if round == 0 { None } else { self.window(p, round) };
            let status = match state.outcome {
                Some(RoundOutcome::Passed) => "passed",
                Some(RoundOutcome::Failed) => "failed",
                None => match (round, window) {
                    (0, _) if p.assignment.is_some() => "open",
                    (0, _) => "pending",
                    (_, None) => "pending",
                    (_, Some(w)) if now < w.opens_at => "scheduled",
                    (_, Some(w)) if now > w.closes_at => "missed",
                    (_, Some(_)) if !p.round(round - 1).is_some_and(RoundState::is_terminal) => "missed",
                    _ => "open",
                },
            };
            out.push(RoundStatus {
                round,
                opens_at: window.map(|w| w.opens_at),
                closes_at: window.map(|w| w.closes_at),
                status,
                attempts_remaining: if state.is_terminal() { 0 } else { limit - state.incorrect },
            });
        }
        Ok(out)
    }

    pub fn enroll(&mut self, id: &str, policy: EnrollPolicy, at: DateTime<Utc>) -> Result<Condition, StudyError> {
        let events = self.plan_enroll(id, policy, None, at)?;
        self.execute(events)?;
        Ok(self.participant(id)?.condition)
    }

    pub fn choose_story(&mut self, id: &str, story: &str, at: DateTime<Utc>) -> Result<Vec<String>, StudyError> {
        let events = self.plan_choose_story(id, story, at)?;
        self.execute(events)?;
        Ok(self.participant(id)?.assignment.clone().expect("just assigned"))
    }

    pub fn attempt(
        &mut self,
        id: &str,
        round: u32,
        text: &str,
        request_id: Option<&str>,
        at: DateTime<Utc>,
    ) -> Result<AttemptOutcome, StudyError> {
        let (outcome, events) = self.plan_attempt(id, round, text, request_id, at)?;
        self.execute(events)?;
        Ok(outcome)
    }

    pub fn survey(&mut self, id: &str, answers: &Map<String, Value>, at: DateTime<Utc>) -> Result<(), StudyError> {
        let events = self.plan_survey(id, answers, at)?;
        self.execute(events)
    }
}
