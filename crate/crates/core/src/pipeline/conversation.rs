use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::task::JoinHandle;

use super::state::{TurnEvent, TurnState};
use super::turn::{FailureKind, SentimentRecord, Stage, StageTimings, Turn, TurnFailure, TurnStatus};
use super::PipelineError;
use crate::adapters::{AdapterError, AdapterSet, AudioClip};
use crate::clock::Clock;
use crate::scenario::{render_context, ConversationMemory, Speaker, SystemPrompt};
use crate::sentiment::SentimentClassifier;

/// What the trainee sent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnInput {
    Text(String),
    Audio(AudioClip),
}

impl TurnInput {
    fn is_empty(&self) -> bool {
        match self {
            TurnInput::Text(t) => t.trim().is_empty(),
            TurnInput::Audio(a) => a.data.is_empty(),
        }
    }
}

/// Progress notifications emitted while a turn runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PipelineEvent {
    State {
        turn_id: u64,
        from: TurnState,
        to: TurnState,
    },
    Failed {
        turn_id: u64,
        failure: TurnFailure,
    },
}

pub type EventSink = Arc<dyn Fn(PipelineEvent) + Send + Sync>;

/// Sentiment classification still running for a completed turn.
#[derive(Debug)]
pub struct PendingSentiment {
    turn_id: u64,
    handle: JoinHandle<SentimentRecord>,
}

impl PendingSentiment {
    pub fn turn_id(&self) -> u64 {
        self.turn_id
    }

    pub async fn wait(self) -> SentimentRecord {
        let turn_id = self.turn_id;
        self.handle.await.unwrap_or_else(|e| SentimentRecord {
            turn_id,
            label: None,
            unparsed: false,
            error: Some(format!("sentiment task failed: {e}")),
            sentiment_s: 0.0,
        })
    }

    fn abort(self) {
        self.handle.abort();
    }
}

pub struct TurnOutcome {
    pub turn: Turn,
    pub audio: Option<AudioClip>,
    /// Present when classification runs off the critical path.
    pub sentiment: Option<PendingSentiment>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Wait for sentiment before delivering the reply.
    pub sentiment_blocking: bool,
}

/// Per-session pipeline state. `run_turn` takes `&mut self`, so a session
/// can have at most one turn in flight.
pub struct Conversation {
    prompt: SystemPrompt,
    memory: ConversationMemory,
    next_turn_id: u64,
    state: TurnState,
    classifier: Option<Arc<dyn SentimentClassifier>>,
    options: PipelineOptions,
    sink: Option<EventSink>,
}

impl Conversation {
    pub fn new(prompt: SystemPrompt, memory: ConversationMemory) -> Self {
        Conversation {
            prompt,
            memory,
            next_turn_id: 1,
            state: TurnState::Idle,
            classifier: None,
            options: PipelineOptions::default(),
            sink: None,
        }
    }

    pub fn with_classifier(mut self, classifier: Arc<dyn SentimentClassifier>) -> Self {
        self.classifier = Some(classifier);
        self
    }

    pub fn with_options(mut self, options: PipelineOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_event_sink(mut self, sink: EventSink) -> Self {
        self.sink = Some(sink);
        self
    }

    /// Rebuilds memory and the turn counter from previously logged turns.
    pub fn resume(mut self, turns: &[Turn]) -> Result<Self, PipelineError> {
        for t in turns {
            if t.turn_id < self.next_turn_id {
                return Err(PipelineError::NonMonotoneTurnId(t.turn_id));
            }
            self.next_turn_id = t.turn_id + 1;
            if let (TurnStatus::Ok, Some(reply)) = (t.status, &t.patient_text) {
                self.memory.push(Speaker::Doctor, &t.doctor_text)?;
                self.memory.push(Speaker::Patient, reply)?;
            }
        }
        Ok(self)
    }

    pub fn state(&self) -> TurnState {
        self.state
    }

    pub fn memory(&self) -> &ConversationMemory {
        &self.memory
    }

    pub fn prompt(&self) -> &SystemPrompt {
        &self.prompt
    }

    pub fn next_turn_id(&self) -> u64 {
        self.next_turn_id
    }

    fn emit(&self, event: PipelineEvent) {
        if let Some(sink) = &self.sink {
            sink(event);
        }
    }

    fn step(&mut self, turn_id: u64, event: TurnEvent) {
        let from = self.state;
        let to = from
            .transition(event)
            .expect("run_turn only issues legal transitions");
        self.state = to;
        self.emit(PipelineEvent::State { turn_id, from, to });
    }

    /// Runs transcription (audio only), generation and synthesis in order.
    ///
    /// Stage failures produce an `Ok` outcome holding a failed turn; only
    /// invalid input is an `Err`.
    pub async fn run_turn(
        &mut self,
        input: TurnInput,
        adapters: &AdapterSet,
        clock: Arc<dyn Clock>,
    ) -> Result<TurnOutcome, PipelineError> {
        if input.is_empty() {
            return Err(PipelineError::EmptyInput);
        }
        if self.state != TurnState::Idle {
            // A previous turn future was dropped mid-flight.
            let id = self.next_turn_id.saturating_sub(1);
            self.step(id, TurnEvent::Error);
        }
        let turn_id = self.next_turn_id;
        self.next_turn_id += 1;

        let started = clock.now();
        let mut timings = StageTimings::default();
        self.step(turn_id, TurnEvent::UserBeganInput);
        self.step(turn_id, TurnEvent::InputCaptured);

        let doctor_text = match input {
            TurnInput::Text(t) => t.trim().to_string(),
            TurnInput::Audio(audio) => {
                let t0 = clock.now();
                let r = stage(adapters.timeouts.transcriber, adapters.transcriber.transcribe(&audio)).await;
                timings.stt_s = secs(clock.now() - t0);
                match r.and_then(|t| non_empty(t, "empty transcript")) {
                    Ok(t) => t,
                    Err(e) => {
                        return Ok(self.fail(turn_id, String::new(), Stage::Transcription, e, timings, started, &clock));
                    }
                }
            }
        };

        let pending = self.dispatch_sentiment(turn_id, &doctor_text, clock.clone());

        let messages = render_context(&self.prompt, &self.memory, &doctor_text)?;
        let t0 = clock.now();
        let r = stage(
            adapters.timeouts.patient_model,
            adapters.patient_model.complete(&messages, &adapters.generation),
        )
        .await;
        timings.llm_s = secs(clock.now() - t0);
        let reply = match r.and_then(|t| non_empty(t, "empty reply")) {
            Ok(t) => t,
            Err(e) => {
                if let Some(p) = pending {
                    p.abort();
                }
                return Ok(self.fail(turn_id, doctor_text, Stage::Generation, e, timings, started, &clock));
            }
        };

        self.step(turn_id, TurnEvent::ReplyReady);
        let t0 = clock.now();
        let r = stage(adapters.timeouts.synthesizer, adapters.synthesizer.synthesize(&reply)).await;
        timings.tts_s = secs(clock.now() - t0);
        let audio = match r {
            Ok(a) => a,
            Err(e) => {
                if let Some(p) = pending {
                    p.abort();
                }
                return Ok(self.fail(turn_id, doctor_text, Stage::Synthesis, e, timings, started, &clock));
            }
        };

        let mut turn = Turn {
            turn_id,
            doctor_text,
            patient_text: Some(reply),
            audio_ref: Some(audio.content_ref()),
            timings,
            doctor_sentiment: None,
            sentiment_unparsed: false,
            sentiment_error: None,
            status: TurnStatus::Ok,
            error: None,
        };

        let mut pending = pending;
        if self.options.sentiment_blocking {
            if let Some(p) = pending.take() {
                let rec = p.wait().await;
                turn.attach_sentiment(&rec);
            }
        }
        turn.timings.total_s = secs(clock.now() - started);

        self.memory.push(Speaker::Doctor, &turn.doctor_text)?;
        self.memory
            .push(Speaker::Patient, turn.patient_text.as_deref().expect("ok turn has reply"))?;
        self.step(turn_id, TurnEvent::PlaybackDone);

        Ok(TurnOutcome {
            turn,
            audio: Some(audio),
            sentiment: pending,
        })
    }

    fn dispatch_sentiment(&self, turn_id: u64, text: &str, clock: Arc<dyn Clock>) -> Option<PendingSentiment> {
        let classifier = self.classifier.clone()?;
        let text = text.to_string();
        let handle = tokio::spawn(async move {
            let t0 = clock.now();
            let r = classifier.classify(&text).await;
            let sentiment_s = secs(clock.now() - t0);
            match r {
                Ok(out) => SentimentRecord {
                    turn_id,
                    label: Some(out.label),
                    unparsed: out.unparsed,
                    error: None,
                    sentiment_s,
                },
                Err(e) => SentimentRecord {
                    turn_id,
                    label: None,
                    unparsed: false,
                    error: Some(e.to_string()),
                    sentiment_s,
                },
            }
        });
        Some(PendingSentiment { turn_id, handle })
    }

    #[allow(clippy::too_many_arguments)]
    fn fail(
        &mut self,
        turn_id: u64,
        doctor_text: String,
        stage: Stage,
        err: AdapterError,
        mut timings: StageTimings,
        started: Duration,
        clock: &Arc<dyn Clock>,
    ) -> TurnOutcome {
        timings.total_s = secs(clock.now() - started);
        let kind = match err {
            AdapterError::Timeout(_) => FailureKind::Timeout,
            AdapterError::Transport(_) => FailureKind::Transport,
            AdapterError::Protocol(_) | AdapterError::UnsupportedCodec(_) => FailureKind::Protocol,
        };
        let failure = TurnFailure {
            stage,
            kind,
            cause: err.to_string(),
        };
        tracing::warn!(turn_id, %failure, "turn failed");
        self.emit(PipelineEvent::Failed {
            turn_id,
            failure: failure.clone(),
        });
        self.step(turn_id, TurnEvent::Error);
        TurnOutcome {
            turn: Turn {
                turn_id,
                doctor_text,
                patient_text: None,
                audio_ref: None,
                timings,
                doctor_sentiment: None,
                sentiment_unparsed: false,
                sentiment_error: None,
                status: TurnStatus::Failed,
                error: Some(failure),
            },
            audio: None,
            sentiment: None,
        }
    }
}

async fn stage<T>(
    limit: Duration,
    fut: impl Future<Output = Result<T, AdapterError>>,
) -> Result<T, AdapterError> {
    match tokio::time::timeout(limit, fut).await {
        Ok(r) => r,
        Err(_) => Err(AdapterError::Timeout(limit)),
    }
}

fn non_empty(text: String, what: &str) -> Result<String, AdapterError> {
    let t = text.trim();
    if t.is_empty() {
        Err(AdapterError::Protocol(what.to_string()))
    } else {
        Ok(t.to_string())
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}
