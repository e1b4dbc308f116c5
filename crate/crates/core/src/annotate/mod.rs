//! Survey-style annotation of social-media users through a chat-completion
//! endpoint: prompt construction, transport with retries, reply parsing and
//! conversion into survey rows for the application schema.

mod parse;
mod prompts;

pub use parse::{parse_demo_answer, parse_location_answer, DemoAnswer, MappedFields, StateResult};
pub use prompts::{
    block_index, block_of_identifier, block_order, build_demo_prompt, build_location_prompt, CategoryBlock, BLOCKS,
};

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{DroppedRow, FrameError, Respondent, Schema, SurveyDataset};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("user {user} has {have} posts, context needs {need}")]
    InsufficientContext { user: String, have: usize, need: usize },
    #[error("no category block could be parsed")]
    NoBlocks,
    #[error("invalid annotation config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {msg}")]
    BadUser { line: usize, msg: String },
    #[error("duplicate user id '{0}'")]
    DuplicateUser(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// One user to annotate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRecord {
    pub id: String,
    pub location: String,
    pub bio: String,
    pub tweets: Vec<String>,
    pub post_count: usize,
    /// 0-based campaign day, when known.
    pub day: Option<u32>,
}

#[derive(Deserialize)]
struct UserRow {
    id: String,
    #[serde(default)]
    location: String,
    #[serde(default)]
    bio: String,
    tweets: String,
    #[serde(default)]
    post_count: Option<usize>,
    /// 1-based, like the survey table.
    #[serde(default)]
    day: Option<u32>,
}

/// Reads `users.csv`: id, location, bio, tweets (a JSON array of strings)
/// and optional post_count and day columns. A missing post_count defaults to
/// the number of tweets.
pub fn load_users(path: &Path) -> Result<Vec<UserRecord>, AnnotateError> {
    let io = |e: csv::Error| AnnotateError::Io(format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(io)?;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, rec) in rdr.deserialize::<UserRow>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| AnnotateError::BadUser { line, msg: e.to_string() })?;
        let tweets: Vec<String> = serde_json::from_str(&row.tweets)
            .map_err(|e| AnnotateError::BadUser { line, msg: format!("tweets is not a JSON string array: {e}") })?;
        if row.day == Some(0) {
            return Err(AnnotateError::BadUser { line, msg: "day is 1-based".into() });
        }
        if !seen.insert(row.id.clone()) {
            return Err(AnnotateError::DuplicateUser(row.id));
        }
        out.push(UserRecord {
            post_count: row.post_count.unwrap_or(tweets.len()),
            id: row.id,
            location: row.location,
            bio: row.bio,
            tweets,
            day: row.day.map(|d| d - 1),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Location,
    Demographics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub user_id: String,
    pub kind: RequestKind,
    pub prompt: String,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    /// Worth retrying: timeouts, rate limits, 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("permanent: {0}")]
    Permanent(String),
}

/// A chat-completion endpoint. Implementations must be callable from
/// several threads at once.
pub trait Transport: Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// Canned replies keyed by user and request kind. Unknown keys fail
/// permanently.
#[derive(Debug, Clone, Default)]
pub struct FixtureTransport {
    replies: HashMap<(String, RequestKind), String>,
}

#[derive(Deserialize)]
struct FixtureRow {
    user_id: String,
    kind: RequestKind,
    reply: String,
}

impl FixtureTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, user: &str, kind: RequestKind, reply: &str) {
        self.replies.insert((user.to_string(), kind), reply.to_string());
    }

    /// Reads a CSV with user_id, kind (location or demographics), reply.
    pub fn load(path: &Path) -> Result<Self, AnnotateError> {
        let io = |e: csv::Error| AnnotateError::Io(format!("{}: {e}", path.display()));
        let mut rdr = csv::Reader::from_path(path).map_err(io)?;
        let mut t = Self::new();
        for rec in rdr.deserialize::<FixtureRow>() {
            let r = rec.map_err(io)?;
            t.replies.insert((r.user_id, r.kind), r.reply);
        }
        Ok(t)
    }
}

impl Transport for FixtureTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        self.replies
            .get(&(request.user_id.clone(), request.kind))
            .cloned()
            .ok_or_else(|| TransportError::Permanent(format!("no fixture for {} {:?}", request.user_id, request.kind)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateConfig {
    /// Posts included in the demographic prompt (5 or 10 in practice).
    pub context: usize,
    pub concurrency: usize,
    /// Attempts per request, the first included.
    pub max_attempts: usize,
    /// Delay before the first retry; doubles after each failure.
    pub backoff: Duration,
    pub seed: u64,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        AnnotateConfig { context: 10, concurrency: 8, max_attempts: 4, backoff: Duration::from_millis(500), seed: 1 }
    }
}

impl AnnotateConfig {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if self.context == 0 {
            return Err(AnnotateError::Config("context must be positive".into()));
        }
        if self.concurrency == 0 || self.max_attempts == 0 {
            return Err(AnnotateError::Config("concurrency and max_attempts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Outcome {
    Success,
    /// The demographic reply had no usable block.
    ParseFailure,
    TransportFailure(String),
    /// Not sent, e.g. too few posts.
    Skipped(String),
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::ParseFailure => "parse-failure",
            Outcome::TransportFailure(_) => "transport-failure",
            Outcome::Skipped(_) => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Annotation {
    pub user_id: String,
    pub outcome: Outcome,
    pub state: Option<StateResult>,
    pub demo: Option<DemoAnswer>,
    pub day: Option<u32>,
    pub location_reply: Option<String>,
    pub demo_reply: Option<String>,
    /// Requests sent, retries included.
    pub attempts: usize,
}

/// Stable 64-bit FNV-1a, so per-user seeds survive toolchain upgrades.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seed for the block order of one user's prompt.
pub fn user_seed(seed: u64, user: &str) -> u64 {
    crate::simstudy::derive_seed(seed, &[fnv1a(user)])
}

fn send(
    transport: &dyn Transport,
    req: &ChatRequest,
    cfg: &AnnotateConfig,
    attempts: &mut usize,
) -> Result<String, String> {
    let mut delay = cfg.backoff;
    for k in 0..cfg.max_attempts {
        *attempts += 1;
        match transport.complete(req) {
            Ok(r) => return Ok(r),
            Err(TransportError::Permanent(m)) => return Err(m),
            Err(TransportError::Transient(m)) => {
                if k + 1 == cfg.max_attempts {
                    return Err(format!("{m} after {} attempts", cfg.max_attempts));
                }
                log::debug!("{} {:?}: retrying after {m}", req.user_id, req.kind);
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
    }
    unreachable!("max_attempts is positive")
}

/// Location first, then demographics. The demographic request is sent even
/// when the state is unresolved; the row is dropped later.
pub fn annotate_user(user: &UserRecord, transport: &dyn Transport, cfg: &AnnotateConfig) -> Annotation {
    let mut a = Annotation {
        user_id: user.id.clone(),
        outcome: Outcome::Success,
        state: None,
        demo: None,
        day: user.day,
        location_reply: None,
        demo_reply: None,
        attempts: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(user_seed(cfg.seed, &user.id));
    let demo_prompt = match build_demo_prompt(user, cfg.context, &mut rng) {
        Ok(p) => p,
        Err(e) => {
            a.outcome = Outcome::Skipped(e.to_string());
            return a;
        }
    };
    let request = |kind, prompt| ChatRequest { user_id: user.id.clone(), kind, prompt, temperature: 0.0 };
    let loc = request(RequestKind::Location, build_location_prompt(user));
    match send(transport, &loc, cfg, &mut a.attempts) {
        Ok(r) => {
            a.state = Some(parse_location_answer(&r));
            a.location_reply = Some(r);
        }
        Err(m) => {
            a.outcome = Outcome::TransportFailure(m);
            return a;
        }
    }
    let demo = request(RequestKind::Demographics, demo_prompt);
    match send(transport, &demo, cfg, &mut a.attempts) {
        Ok(r) => {
            match parse_demo_answer(&r) {
                Ok(d) => a.demo = Some(d),
                Err(_) => a.outcome = Outcome::ParseFailure,
            }
            a.demo_reply = Some(r);
        }
        Err(m) => a.outcome = Outcome::TransportFailure(m),
    }
    a
}

/// Annotates every user with at most `concurrency` requests in flight.
/// Results come back in input order and do not depend on the concurrency.
pub fn annotate_batch(
    users: &[UserRecord],
    transport: &dyn Transport,
    cfg: &AnnotateConfig,
) -> Result<Vec<Annotation>, AnnotateError> {
    cfg.validate()?;
    Ok(crate::par::with_threads(cfg.concurrency, || crate::par::map_slice(users, |u| annotate_user(u, transport, cfg))))
}

#[derive(Serialize)]
struct AnnotationRow<'a> {
    user_id: &'a str,
    outcome: &'static str,
    detail: String,
    state: String,
    gender: Option<u32>,
    ethnicity: Option<u32>,
    age: Option<u32>,
    college_degree: Option<u32>,
    household_income: Option<u32>,
    vote2016: Option<u32>,
    choice: Option<usize>,
    excluded: Option<&'a str>,
    day: Option<u32>,
    ethnicity_id: Option<&'a str>,
    age_id: Option<&'a str>,
    sex_id: Option<&'a str>,
    marital_id: Option<&'a str>,
    education_id: Option<&'a str>,
    income_id: Option<&'a str>,
    registration_id: Option<&'a str>,
    vote2016_id: Option<&'a str>,
    vote2018_id: Option<&'a str>,
    vote2020_id: Option<&'a str>,
    attempts: usize,
}

/// `annotations.csv`: one row per user with the mapped model fields
/// (0-based levels, day 1-based) and the raw identifier of every block.
pub fn write_annotations(path: &Path, annotations: &[Annotation]) -> Result<(), AnnotateError> {
    let io = |e: csv::Error| AnnotateError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let none = MappedFields::default();
    for a in annotations {
        let m = a.demo.as_ref().map_or(&none, |d| &d.mapped);
        let id = |key: &str| a.demo.as_ref().and_then(|d| d.get(key));
        let detail = match &a.outcome {
            Outcome::TransportFailure(s) | Outcome::Skipped(s) => s.clone(),
            _ => String::new(),
        };
        w.serialize(AnnotationRow {
            user_id: &a.user_id,
            outcome: a.outcome.name(),
            detail,
            state: a.state.map(|s| s.label()).unwrap_or_default(),
            gender: m.gender,
            ethnicity: m.ethnicity,
            age: m.age,
            college_degree: m.college_degree,
            household_income: m.household_income,
            vote2016: m.vote2016,
            choice: m.choice,
            excluded: m.excluded.as_deref(),
            day: a.day.map(|d| d + 1),
            ethnicity_id: id("ethnicity"),
            age_id: id("age"),
            sex_id: id("sex"),
            marital_id: id("marital"),
            education_id: id("education"),
            income_id: id("income"),
            registration_id: id("registration"),
            vote2016_id: id("vote2016"),
            vote2018_id: id("vote2018"),
            vote2020_id: id("vote2020"),
            attempts: a.attempts,
        })
        .map_err(io)?;
    }
    w.flush().map_err(|e| AnnotateError::Io(format!("{}: {e}", path.display())))
}

fn respondent(a: &Annotation, schema: &Schema) -> Result<Respondent, String> {
    if a.outcome != Outcome::Success {
        return Err(a.outcome.name().to_string());
    }
    let state = match a.state {
        Some(StateResult::State(s)) => s,
        Some(StateResult::NotFromUs) => return Err("not from US".into()),
        _ => return Err("unresolved state".into()),
    };
    let m = &a.demo.as_ref().expect("success carries a parse").mapped;
    if let Some(why) = &m.excluded {
        return Err(why.clone());
    }
    let need = |v: Option<u32>, name: &str| v.ok_or_else(|| format!("missing {name}"));
    let levels = vec![
        state,
        need(m.gender, "gender")?,
        need(m.ethnicity, "ethnicity")?,
        need(m.age, "age")?,
        need(m.college_degree, "college_degree")?,
        need(m.household_income, "household_income")?,
        need(m.vote2016, "vote2016")?,
    ];
    let choice = m.choice.ok_or("missing choice")?;
    let day = match &schema.day {
        Some(d) => match a.day {
            Some(x) if (x as usize) < d.count => Some(x),
            Some(_) => return Err("day out of range".into()),
            None => return Err("missing day".into()),
        },
        None => None,
    };
    Ok(Respondent { choice, levels, day })
}

/// Survey rows for the application schema. Anything short of a complete
/// record is dropped with a reason; `line` is the 1-based annotation index.
pub fn to_survey(annotations: &[Annotation], schema: &Schema) -> Result<SurveyDataset, AnnotateError> {
    let reference = Schema::election_2020();
    if schema
        .attributes
        .iter()
        .map(|a| (&a.name, a.cardinality))
        .ne(reference.attributes.iter().map(|a| (&a.name, a.cardinality)))
        || schema.choices.len() != reference.choices.len()
    {
        return Err(AnnotateError::Config("annotations map onto the election schema only".into()));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, a) in annotations.iter().enumerate() {
        match respondent(a, schema) {
            Ok(r) => kept.push(r),
            Err(reason) => dropped.push(DroppedRow { line: i + 1, reason: format!("{}: {reason}", a.user_id) }),
        }
    }
    let mut s = SurveyDataset::new(kept)?;
    s.dropped = dropped;
    Ok(s)
}
