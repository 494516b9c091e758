//! Contracts for the external services a turn passes through, plus
//! deterministic mock implementations.
//!
//! Remote (HTTP) implementations live in the server crate; everything here is
//! transport-agnostic.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::Clock;
use crate::scenario::{ChatMessage, Role};

/// Codec tag accepted by v1 transcribers: 16 kHz mono signed 16-bit PCM.
pub const PCM16_MONO_16K: &str = "pcm_s16le;rate=16000;channels=1";

/// Opaque audio payload with a declared codec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioClip {
    pub codec: String,
    #[serde(with = "base64_bytes")]
    pub data: Vec<u8>,
}

impl AudioClip {
    pub fn new(codec: impl Into<String>, data: Vec<u8>) -> Self {
        AudioClip {
            codec: codec.into(),
            data,
        }
    }

    /// Content-derived handle used as `audio_ref` in logs.
    pub fn content_ref(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.codec.as_bytes());
        h.update([0]);
        h.update(&self.data);
        format!("sha256:{}", &hex::encode(h.finalize())[..16])
    }
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("unsupported codec `{0}`")]
    UnsupportedCodec(String),
    #[error("transport error: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f32,
    pub max_tokens: Option<u32>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.7,
            max_tokens: None,
        }
    }
}

#[async_trait]
pub trait Transcriber: Send + Sync {
    async fn transcribe(&self, audio: &AudioClip) -> Result<String, AdapterError>;
}

/// Message list in, text out. Backs both the patient model and
/// model-based sentiment classification.
#[async_trait]
pub trait LanguageModel: Send + Sync {
    async fn complete(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
    ) -> Result<String, AdapterError>;
}

#[async_trait]
pub trait Synthesizer: Send + Sync {
    async fn synthesize(&self, text: &str) -> Result<AudioClip, AdapterError>;
}

pub const DEFAULT_TRANSCRIBER_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_PATIENT_MODEL_TIMEOUT: Duration = Duration::from_secs(20);
pub const DEFAULT_SYNTHESIZER_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimeouts {
    pub transcriber: Duration,
    pub patient_model: Duration,
    pub synthesizer: Duration,
}

impl Default for StageTimeouts {
    fn default() -> Self {
        StageTimeouts {
            transcriber: DEFAULT_TRANSCRIBER_TIMEOUT,
            patient_model: DEFAULT_PATIENT_MODEL_TIMEOUT,
            synthesizer: DEFAULT_SYNTHESIZER_TIMEOUT,
        }
    }
}

/// The three stage adapters of a turn. Shared across sessions.
#[derive(Clone)]
pub struct AdapterSet {
    pub transcriber: Arc<dyn Transcriber>,
    pub patient_model: Arc<dyn LanguageModel>,
    pub synthesizer: Arc<dyn Synthesizer>,
    pub timeouts: StageTimeouts,
    pub generation: GenerationParams,
}

impl AdapterSet {
    pub fn new(
        transcriber: Arc<dyn Transcriber>,
        patient_model: Arc<dyn LanguageModel>,
        synthesizer: Arc<dyn Synthesizer>,
    ) -> Self {
        AdapterSet {
            transcriber,
            patient_model,
            synthesizer,
            timeouts: StageTimeouts::default(),
            generation: GenerationParams::default(),
        }
    }

    pub fn with_timeouts(mut self, timeouts: StageTimeouts) -> Result<Self, AdapterError> {
        for t in [timeouts.transcriber, timeouts.patient_model, timeouts.synthesizer] {
            if t.is_zero() {
                return Err(AdapterError::Protocol("adapter timeouts must be positive".into()));
            }
        }
        self.timeouts = timeouts;
        Ok(self)
    }

    /// All-mock adapters with the given per-stage delays.
    pub fn mock(clock: Arc<dyn Clock>, delays: MockDelays) -> Self {
        AdapterSet::new(
            Arc::new(MockTranscriber::new(clock.clone()).with_delay(delays.stt)),
            Arc::new(MockPatientModel::new(clock.clone()).with_delay(delays.llm)),
            Arc::new(MockSynthesizer::new(clock).with_delay(delays.tts)),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MockDelays {
    pub stt: Duration,
    pub llm: Duration,
    pub tts: Duration,
}

impl MockDelays {
    pub fn from_secs(stt: f64, llm: f64, tts: f64) -> Self {
        MockDelays {
            stt: Duration::from_secs_f64(stt),
            llm: Duration::from_secs_f64(llm),
            tts: Duration::from_secs_f64(tts),
        }
    }
}

/// How a mock adapter misbehaves.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum MockFailure {
    #[default]
    None,
    /// Never answers; the caller's timeout fires.
    Hang,
    Protocol(String),
}

async fn mock_behave(clock: &dyn Clock, delay: Duration, failure: &MockFailure) -> Result<(), AdapterError> {
    match failure {
        MockFailure::Hang => std::future::pending().await,
        MockFailure::Protocol(msg) => Err(AdapterError::Protocol(msg.clone())),
        MockFailure::None => {
            clock.sleep(delay).await;
            Ok(())
        }
    }
}

/// Treats the audio payload as UTF-8 text.
pub struct MockTranscriber {
    clock: Arc<dyn Clock>,
    delay: Duration,
    failure: MockFailure,
}

impl MockTranscriber {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        MockTranscriber {
            clock,
            delay: Duration::ZERO,
            failure: MockFailure::None,
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_failure(mut self, failure: MockFailure) -> Self {
        self.failure = failure;
        self
    }
}

#[async_trait]
impl Transcriber for MockTranscriber {
    async fn transcribe(&self, audio: &AudioClip) -> Result<String, AdapterError> {
        if audio.codec != PCM16_MONO_16K {
            return Err(AdapterError::UnsupportedCodec(audio.codec.clone()));
        }
        mock_behave(self.clock.as_ref(), self.delay, &self.failure).await?;
        String::from_utf8(audio.data.clone())
            .map(|s| s.trim().to_string())
            .map_err(|_| AdapterError::Protocol("mock transcriber expects UTF-8 payload".into()))
    }
}

/// Deterministic patient: either replays a script or composes a reply from
/// the symptom list in the system prompt, chosen by a hash of the messages.
pub struct MockPatientModel {
    clock: Arc<dyn Clock>,
    delay: Duration,
    failure: MockFailure,
    script: Option<Vec<String>>,
    calls: std::sync::atomic::AtomicUsize,
}

impl MockPatientModel {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        MockPatientModel {
            clock,
            delay: Duration::ZERO,
            failure: MockFailure::None,
            script: None,
            calls: Default::default(),
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_failure(mut self, failure: MockFailure) -> Self {
        self.failure = failure;
        self
    }

    /// Replies cycle through `lines` in call order.
    pub fn scripted<I: IntoIterator<Item = S>, S: Into<String>>(mut self, lines: I) -> Self {
        self.script = Some(lines.into_iter().map(Into::into).collect());
        self
    }

    fn compose(messages: &[ChatMessage]) -> String {
        let mut h = Sha256::new();
        for m in messages {
            h.update(m.content.as_bytes());
            h.update([0xff]);
        }
        let digest = h.finalize();
        let pick = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));

        let symptoms: Vec<&str> = messages
            .iter()
            .filter(|m| m.role == Role::System)
            .flat_map(|m| m.content.lines())
            .filter_map(|l| l.strip_prefix("- "))
            .collect();
        const OPENERS: [&str; 4] = [
            "Well, I've mostly noticed",
            "The main thing bothering me is",
            "Honestly, it's been",
            "I keep getting",
        ];
        const CLOSERS: [&str; 3] = [
            "It started a few days ago.",
            "It's been getting worse.",
            "I'm not sure what's going on.",
        ];
        let opener = OPENERS[(pick % OPENERS.len() as u64) as usize];
        let closer = CLOSERS[((pick >> 8) % CLOSERS.len() as u64) as usize];
        match symptoms.len() {
            0 => format!("{opener} feeling unwell. {closer}"),
            n => {
                let s = symptoms[((pick >> 16) % n as u64) as usize];
                format!("{opener} {s}. {closer}")
            }
        }
    }
}

#[async_trait]
impl LanguageModel for MockPatientModel {
    async fn complete(
        &self,
        messages: &[ChatMessage],
        _params: &GenerationParams,
    ) -> Result<String, AdapterError> {
        mock_behave(self.clock.as_ref(), self.delay, &self.failure).await?;
        if let Some(script) = &self.script {
            let i = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            if script.is_empty() {
                return Err(AdapterError::Protocol("empty script".into()));
            }
            return Ok(script[i % script.len()].clone());
        }
        Ok(Self::compose(messages))
    }
}

/// Returns the reply text as the audio payload.
pub struct MockSynthesizer {
    clock: Arc<dyn Clock>,
    delay: Duration,
    failure: MockFailure,
}

impl MockSynthesizer {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        MockSynthesizer {
            clock,
            delay: Duration::ZERO,
            failure: MockFailure::None,
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_failure(mut self, failure: MockFailure) -> Self {
        self.failure = failure;
        self
    }
}

#[async_trait]
impl Synthesizer for MockSynthesizer {
    async fn synthesize(&self, text: &str) -> Result<AudioClip, AdapterError> {
        mock_behave(self.clock.as_ref(), self.delay, &self.failure).await?;
        Ok(AudioClip::new("text/plain;mock", text.as_bytes().to_vec()))
    }
}

/// A language model that always returns the same reply (or cycles through a
/// fixed list). Handy for driving model-based sentiment classification.
pub struct FixedReplyModel {
    replies: Vec<String>,
    calls: std::sync::atomic::AtomicUsize,
}

impl FixedReplyModel {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(replies: I) -> Self {
        FixedReplyModel {
            replies: replies.into_iter().map(Into::into).collect(),
            calls: Default::default(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}

#[async_trait]
impl LanguageModel for FixedReplyModel {
    async fn complete(&self, _: &[ChatMessage], _: &GenerationParams) -> Result<String, AdapterError> {
        let i = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.replies
            .get(i.min(self.replies.len().saturating_sub(1)))
            .cloned()
            .ok_or_else(|| AdapterError::Protocol("no replies configured".into()))
    }
}
