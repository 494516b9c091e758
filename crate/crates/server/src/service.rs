use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast;
use vpsim_core::adapters::{AdapterSet, GenerationParams, PCM16_MONO_16K};
use vpsim_core::analytics::{session_report, AnalyticsError, SessionLog, SessionReport};
use vpsim_core::clock::{Clock, TokioClock};
use vpsim_core::knowledge_base::{demo_knowledge_base, KbError, KnowledgeBase, ScenarioSpec};
use vpsim_core::pipeline::{
    Conversation, PipelineError, PipelineEvent, PipelineOptions, SentimentRecord, Turn, TurnFailure, TurnInput,
    TurnState,
};
use vpsim_core::scenario::{
    ConversationMemory, PersonaOverrides, PersonaProfile, ScenarioError, SessionPlan,
};
use vpsim_core::sentiment::{ModelClassifier, RuleBasedClassifier, SentimentClassifier};

use crate::config::{AdapterMode, ServiceConfig};
use crate::remote::{RemoteEndpoint, RemoteLanguageModel, RemoteSynthesizer, RemoteTranscriber};
use crate::store::{LogRecord, SessionHeader, SessionStore, StoreError, StoredSession, SESSION_SCHEMA};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error("session {0} is still active")]
    SessionActive(String),
    #[error("a turn is already in flight for session {0}")]
    TurnInFlight(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported codec `{0}` (expected {PCM16_MONO_16K})")]
    UnsupportedCodec(String),
    #[error("invalid persona overrides: {0}")]
    InvalidOverrides(String),
    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,
    #[error("session {0} has no successful turns")]
    EmptySession(String),
    #[error("session {0} is unavailable after a storage failure")]
    Unavailable(String),
    #[error("knowledge base: {0}")]
    Kb(#[from] KbError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Internal(String),
}

/// Wire form of events on a session stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerEvent {
    /// Position in the session's stream, from 1.
    pub seq: u64,
    pub session_id: String,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    State { turn_id: u64, from: TurnState, to: TurnState },
    TurnFailed { turn_id: u64, failure: TurnFailure },
    TurnCompleted { turn: Turn },
    SentimentAttached { sentiment: SentimentRecord },
    SessionClosed,
}

impl From<PipelineEvent> for EventBody {
    fn from(e: PipelineEvent) -> Self {
        match e {
            PipelineEvent::State { turn_id, from, to } => EventBody::State { turn_id, from, to },
            PipelineEvent::Failed { turn_id, failure } => EventBody::TurnFailed { turn_id, failure },
        }
    }
}

/// Numbers and fans out events. Publishing never waits on consumers.
pub struct EventHub {
    session_id: String,
    seq: Mutex<u64>,
    tx: broadcast::Sender<ServerEvent>,
}

impl EventHub {
    fn new(session_id: &str, capacity: usize) -> Self {
        let (tx, _) = broadcast::channel(capacity);
        EventHub {
            session_id: session_id.to_string(),
            seq: Mutex::new(0),
            tx,
        }
    }

    pub fn publish(&self, body: EventBody) {
        let mut seq = self.seq.lock().expect("event lock");
        *seq += 1;
        let _ = self.tx.send(ServerEvent {
            seq: *seq,
            session_id: self.session_id.clone(),
            body,
        });
    }

    pub fn subscribe(&self) -> broadcast::Receiver<ServerEvent> {
        self.tx.subscribe()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Closed,
}

/// What the trainee may see. Carries no syndrome or symptom data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: SessionStatus,
    pub created_at: DateTime<Utc>,
    pub persona: PersonaProfile,
    pub turn_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub session_id: String,
    pub status: SessionStatus,
    pub turns: Vec<Turn>,
}

struct SessionData {
    turns: Vec<Turn>,
    closed_at: Option<DateTime<Utc>>,
    /// Set when a record could not be persisted; the log may now lag memory.
    broken: bool,
}

pub struct Session {
    pub id: String,
    pub created_at: DateTime<Utc>,
    scenario: ScenarioSpec,
    persona: PersonaProfile,
    conversation: tokio::sync::Mutex<Conversation>,
    data: Mutex<SessionData>,
    events: Arc<EventHub>,
}

impl Session {
    pub fn events(&self) -> &EventHub {
        &self.events
    }

    pub fn scenario(&self) -> &ScenarioSpec {
        &self.scenario
    }

    fn status(&self) -> SessionStatus {
        if self.data.lock().expect("session lock").closed_at.is_some() {
            SessionStatus::Closed
        } else {
            SessionStatus::Active
        }
    }

    pub fn view(&self) -> SessionView {
        let d = self.data.lock().expect("session lock");
        SessionView {
            session_id: self.id.clone(),
            status: if d.closed_at.is_some() { SessionStatus::Closed } else { SessionStatus::Active },
            created_at: self.created_at,
            persona: self.persona.clone(),
            turn_count: d.turns.len(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub seed: Option<u64>,
    pub persona_overrides: Option<PersonaOverrides>,
}

#[derive(Debug)]
pub struct TurnResult {
    pub turn: Turn,
}

pub struct App {
    config: ServiceConfig,
    kb: Arc<KnowledgeBase>,
    adapters: AdapterSet,
    classifier: Option<Arc<dyn SentimentClassifier>>,
    clock: Arc<dyn Clock>,
    store: SessionStore,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

pub fn load_knowledge_base(config: &ServiceConfig) -> Result<KnowledgeBase, ServiceError> {
    match &config.kb_path {
        None => Ok(demo_knowledge_base()),
        Some(path) => {
            let f = File::open(path).map_err(|e| ServiceError::Kb(KbError::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))))?;
            Ok(KnowledgeBase::read_snapshot(BufReader::new(f))?)
        }
    }
}

/// Adapters and sentiment classifier described by `config`.
pub fn build_adapters(
    config: &ServiceConfig,
    clock: Arc<dyn Clock>,
) -> Result<(AdapterSet, Option<Arc<dyn SentimentClassifier>>), ServiceError> {
    let client = reqwest::Client::builder()
        .build()
        .map_err(|e| ServiceError::Internal(format!("http client: {e}")))?;
    let endpoint = |url: &Option<String>| RemoteEndpoint::new(client.clone(), url.clone().unwrap_or_default());
    let a = &config.adapter;
    let mut adapters = match a.mode {
        AdapterMode::Mock => AdapterSet::mock(clock, a.mock_delays()),
        AdapterMode::Remote => AdapterSet::new(
            Arc::new(RemoteTranscriber(endpoint(&a.transcriber_url))),
            Arc::new(RemoteLanguageModel(endpoint(&a.patient_model_url))),
            Arc::new(RemoteSynthesizer(endpoint(&a.synthesizer_url))),
        ),
    }
    .with_timeouts(a.timeouts())
    .map_err(|e| ServiceError::Internal(e.to_string()))?;
    adapters.generation = GenerationParams {
        temperature: a.temperature as f32,
        ..GenerationParams::default()
    };

    let s = &config.sentiment;
    let classifier: Arc<dyn SentimentClassifier> = if s.model == "rule" {
        Arc::new(RuleBasedClassifier::default())
    } else {
        let model = Arc::new(RemoteLanguageModel(endpoint(&s.url)));
        Arc::new(
            ModelClassifier::new(s.model.clone(), model)
                .with_timeout(Duration::from_secs_f64(s.timeout_s))
                .with_max_in_flight(s.max_in_flight),
        )
    };
    Ok((adapters, Some(classifier)))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, StoreError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .map_err(ServiceError::from)
}

impl App {
    /// Builds the service from configuration and recovers persisted sessions.
    pub fn from_config(config: ServiceConfig) -> Result<Arc<Self>, ServiceError> {
        let clock: Arc<dyn Clock> = Arc::new(TokioClock::new());
        let kb = load_knowledge_base(&config)?;
        let (adapters, classifier) = build_adapters(&config, clock.clone())?;
        Self::with_parts(config, kb, adapters, classifier, clock)
    }

    pub fn with_parts(
        config: ServiceConfig,
        kb: KnowledgeBase,
        adapters: AdapterSet,
        classifier: Option<Arc<dyn SentimentClassifier>>,
        clock: Arc<dyn Clock>,
    ) -> Result<Arc<Self>, ServiceError> {
        let store = SessionStore::open(&config.data_dir)?;
        let app = App {
            config,
            kb: Arc::new(kb),
            adapters,
            classifier,
            clock,
            store,
            sessions: RwLock::new(HashMap::new()),
        };
        let recovered = app.store.load_all()?;
        let n = recovered.len();
        for stored in recovered {
            let session = app.restore(stored)?;
            app.sessions
                .write()
                .expect("sessions lock")
                .insert(session.id.clone(), session);
        }
        if n > 0 {
            tracing::info!(sessions = n, "recovered sessions from log");
        }
        Ok(Arc::new(app))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("sessions lock").len()
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn conversation(
        &self,
        plan: SessionPlan,
        window: usize,
        char_budget: usize,
        events: &Arc<EventHub>,
    ) -> Result<Conversation, ServiceError> {
        let memory = ConversationMemory::new(window, char_budget).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let hub = events.clone();
        let mut conv = Conversation::new(plan.prompt, memory)
            .with_options(PipelineOptions {
                sentiment_blocking: self.config.sentiment.blocking,
            })
            .with_event_sink(Arc::new(move |e| hub.publish(e.into())));
        if let Some(c) = &self.classifier {
            conv = conv.with_classifier(c.clone());
        }
        Ok(conv)
    }

    fn restore(&self, stored: StoredSession) -> Result<Arc<Session>, ServiceError> {
        let h = stored.header;
        let plan = SessionPlan::from_parts(h.scenario.clone(), h.persona.clone(), &h.policy)
            .map_err(|e| ServiceError::Internal(format!("session {}: {e}", h.session_id)))?;
        let events = Arc::new(EventHub::new(&h.session_id, self.config.event_buffer));
        let conv = self
            .conversation(plan, h.memory_window, h.memory_char_budget, &events)?
            .resume(&stored.turns)
            .map_err(|e| ServiceError::Internal(format!("session {}: {e}", h.session_id)))?;
        Ok(Arc::new(Session {
            id: h.session_id,
            created_at: h.created_at,
            scenario: h.scenario,
            persona: h.persona,
            conversation: tokio::sync::Mutex::new(conv),
            data: Mutex::new(SessionData {
                turns: stored.turns,
                closed_at: stored.closed_at,
                broken: false,
            }),
            events,
        }))
    }

    pub async fn create_session(&self, req: CreateSession) -> Result<SessionView, ServiceError> {
        if self.kb.is_empty() {
            return Err(ServiceError::EmptyKnowledgeBase);
        }
        let seed = req.seed.unwrap_or_else(rand::random);
        let plan = SessionPlan::sample(&self.kb, seed, &self.config.prompt, req.persona_overrides.as_ref())
            .map_err(|e| match e {
                ScenarioError::Kb(KbError::Empty) => ServiceError::EmptyKnowledgeBase,
                ScenarioError::InvalidPersona(m) => ServiceError::InvalidOverrides(m),
                other => ServiceError::Internal(other.to_string()),
            })?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let header = SessionHeader {
            schema: SESSION_SCHEMA.into(),
            session_id: id.clone(),
            created_at: Utc::now(),
            seed,
            scenario: plan.scenario.clone(),
            persona: plan.persona.clone(),
            policy: self.config.prompt.clone(),
            memory_window: self.config.memory.window,
            memory_char_budget: self.config.memory.char_budget,
        };
        let store = self.store.clone();
        let h = header.clone();
        blocking(move || store.create(&h)).await?;

        let events = Arc::new(EventHub::new(&id, self.config.event_buffer));
        let conv = self.conversation(plan, header.memory_window, header.memory_char_budget, &events)?;
        let session = Arc::new(Session {
            id: id.clone(),
            created_at: header.created_at,
            scenario: header.scenario,
            persona: header.persona,
            conversation: tokio::sync::Mutex::new(conv),
            data: Mutex::new(SessionData {
                turns: Vec::new(),
                closed_at: None,
                broken: false,
            }),
            events,
        });
        let view = session.view();
        self.sessions.write().expect("sessions lock").insert(id, session);
        Ok(view)
    }

    /// Runs one turn and persists it before returning. Failed turns are
    /// persisted and returned too; callers check `turn.status`.
    pub async fn post_turn(&self, id: &str, input: TurnInput) -> Result<TurnResult, ServiceError> {
        let session = self.session(id)?;
        let mut conv = session
            .conversation
            .try_lock()
            .map_err(|_| ServiceError::TurnInFlight(id.to_string()))?;
        {
            let d = session.data.lock().expect("session lock");
            if d.closed_at.is_some() {
                return Err(ServiceError::SessionClosed(id.to_string()));
            }
            if d.broken {
                return Err(ServiceError::Unavailable(id.to_string()));
            }
        }
        if let TurnInput::Audio(a) = &input {
            if a.codec != PCM16_MONO_16K {
                return Err(ServiceError::UnsupportedCodec(a.codec.clone()));
            }
        }
        let outcome = conv
            .run_turn(input, &self.adapters, self.clock.clone())
            .await
            .map_err(|e| match e {
                PipelineError::EmptyInput => ServiceError::InvalidInput("utterance is empty".into()),
                other => ServiceError::Internal(other.to_string()),
            })?;
        let turn = outcome.turn;

        let store = self.store.clone();
        let sid = session.id.clone();
        let rec = LogRecord::Turn { turn: turn.clone() };
        if let Err(e) = blocking(move || store.append(&sid, &rec)).await {
            session.data.lock().expect("session lock").broken = true;
            if let Some(p) = outcome.sentiment {
                drop(p);
            }
            return Err(e);
        }
        session.data.lock().expect("session lock").turns.push(turn.clone());
        session.events.publish(EventBody::TurnCompleted { turn: turn.clone() });

        if let Some(pending) = outcome.sentiment {
            let session = session.clone();
            let store = self.store.clone();
            tokio::spawn(async move {
                let rec = pending.wait().await;
                let sid = session.id.clone();
                let line = LogRecord::Sentiment { sentiment: rec.clone() };
                if let Err(e) = blocking(move || store.append(&sid, &line)).await {
                    tracing::error!(session = %session.id, error = %e, "could not persist sentiment");
                    return;
                }
                {
                    let mut d = session.data.lock().expect("session lock");
                    if let Some(t) = d.turns.iter_mut().find(|t| t.turn_id == rec.turn_id) {
                        t.attach_sentiment(&rec);
                    }
                }
                session.events.publish(EventBody::SentimentAttached { sentiment: rec });
            });
        }
        Ok(TurnResult { turn })
    }

    pub async fn close_session(&self, id: &str) -> Result<SessionView, ServiceError> {
        let session = self.session(id)?;
        let _turn_guard = session.conversation.lock().await;
        if session.status() == SessionStatus::Closed {
            return Ok(session.view());
        }
        let at = Utc::now();
        let store = self.store.clone();
        let sid = session.id.clone();
        blocking(move || store.append(&sid, &LogRecord::Closed { at })).await?;
        session.data.lock().expect("session lock").closed_at = Some(at);
        session.events.publish(EventBody::SessionClosed);
        Ok(session.view())
    }

    pub fn transcript(&self, id: &str) -> Result<Transcript, ServiceError> {
        let session = self.session(id)?;
        let status = session.status();
        let turns = session.data.lock().expect("session lock").turns.clone();
        Ok(Transcript {
            session_id: session.id.clone(),
            status,
            turns,
        })
    }

    pub fn report(&self, id: &str) -> Result<SessionReport, ServiceError> {
        let session = self.session(id)?;
        let (turns, closed) = {
            let d = session.data.lock().expect("session lock");
            (d.turns.clone(), d.closed_at.is_some())
        };
        if !closed {
            return Err(ServiceError::SessionActive(id.to_string()));
        }
        let log = SessionLog {
            session_id: session.id.clone(),
            scenario: session.scenario.clone(),
            persona: session.persona.clone(),
            turns,
            closed,
            budget_s: self.config.latency_budget_s,
        };
        session_report(&log).map_err(|e| match e {
            AnalyticsError::EmptySession(s) => ServiceError::EmptySession(s),
            other => ServiceError::Internal(other.to_string()),
        })
    }
}
