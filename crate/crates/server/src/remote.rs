//! HTTP adapters. Every endpoint takes `{"input": ..., "parameters": {...}}`
//! and answers `{"output": ...}`.

use std::time::Duration;

use async_trait::async_trait;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use vpsim_core::adapters::{
    AdapterError, AudioClip, GenerationParams, LanguageModel, Synthesizer, Transcriber, PCM16_MONO_16K,
};
use vpsim_core::scenario::ChatMessage;

#[derive(Debug, Serialize)]
struct Request<'a, I: Serialize> {
    input: &'a I,
    parameters: Value,
}

#[derive(Debug, Deserialize)]
struct Response<O> {
    output: O,
}

#[derive(Debug, Clone)]
pub struct RemoteEndpoint {
    client: reqwest::Client,
    url: String,
}

impl RemoteEndpoint {
    pub fn new(client: reqwest::Client, url: impl Into<String>) -> Self {
        RemoteEndpoint { client, url: url.into() }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    async fn call<I: Serialize + Sync, O: DeserializeOwned>(
        &self,
        input: &I,
        parameters: Value,
    ) -> Result<O, AdapterError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&Request { input, parameters })
            .send()
            .await
            .map_err(map_reqwest)?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(AdapterError::Transport(format!("{} returned {status}", self.url)));
        }
        if !status.is_success() {
            return Err(AdapterError::Protocol(format!("{} returned {status}", self.url)));
        }
        let body: Response<O> = resp
            .json()
            .await
            .map_err(|e| AdapterError::Protocol(format!("{}: malformed response: {e}", self.url)))?;
        Ok(body.output)
    }
}

fn map_reqwest(e: reqwest::Error) -> AdapterError {
    if e.is_timeout() {
        AdapterError::Timeout(Duration::ZERO)
    } else {
        AdapterError::Transport(e.to_string())
    }
}

pub struct RemoteTranscriber(pub RemoteEndpoint);

#[async_trait]
impl Transcriber for RemoteTranscriber {
    async fn transcribe(&self, audio: &AudioClip) -> Result<String, AdapterError> {
        if audio.codec != PCM16_MONO_16K {
            return Err(AdapterError::UnsupportedCodec(audio.codec.clone()));
        }
        self.0.call(audio, json!({})).await
    }
}

pub struct RemoteLanguageModel(pub RemoteEndpoint);

#[async_trait]
impl LanguageModel for RemoteLanguageModel {
    async fn complete(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<String, AdapterError> {
        let parameters = serde_json::to_value(params).map_err(|e| AdapterError::Protocol(e.to_string()))?;
        self.0.call(&messages, parameters).await
    }
}

pub struct RemoteSynthesizer(pub RemoteEndpoint);

#[async_trait]
impl Synthesizer for RemoteSynthesizer {
    async fn synthesize(&self, text: &str) -> Result<AudioClip, AdapterError> {
        self.0.call(&text, json!({ "codec": PCM16_MONO_16K })).await
    }
}
