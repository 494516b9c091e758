use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use super::SentimentLabel;
use crate::adapters::{AdapterError, GenerationParams, LanguageModel};
use crate::clock::Clock;
use crate::scenario::{ChatMessage, Role, Template};

/// Result of classifying one utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentOutcome {
    pub label: SentimentLabel,
    /// The model's reply could not be parsed and `label` is the Neutral fallback.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unparsed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("classifier timed out after {0:?}")]
    Timeout(Duration),
    #[error("classifier adapter failed: {0}")]
    Adapter(AdapterError),
}

#[async_trait]
pub trait SentimentClassifier: Send + Sync {
    fn id(&self) -> &str;

    async fn classify(&self, text: &str) -> Result<SentimentOutcome, ClassifyError>;
}

/// Positive and negative cue words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub version: String,
    positive: HashSet<String>,
    negative: HashSet<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::parse(include_str!("../../assets/sentiment_lexicon.txt"))
    }
}

impl Lexicon {
    /// Parses the `[positive]` / `[negative]` section format. A
    /// `# version: X` comment sets the version.
    pub fn parse(text: &str) -> Self {
        let mut lex = Lexicon {
            version: "unversioned".into(),
            positive: HashSet::new(),
            negative: HashSet::new(),
        };
        let mut section = None;
        for line in text.lines().map(str::trim) {
            if let Some(v) = line.strip_prefix("# version:") {
                lex.version = v.trim().to_string();
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[positive]" => section = Some(true),
                "[negative]" => section = Some(false),
                cue => match section {
                    Some(true) => {
                        lex.positive.insert(cue.to_lowercase());
                    }
                    Some(false) => {
                        lex.negative.insert(cue.to_lowercase());
                    }
                    None => {}
                },
            }
        }
        lex
    }

    pub fn is_positive(&self, word: &str) -> bool {
        self.positive.contains(word)
    }

    pub fn is_negative(&self, word: &str) -> bool {
        self.negative.contains(word)
    }

    /// `(positive hits, negative hits)` over whole words.
    pub fn count_cues(&self, text: &str) -> (usize, usize) {
        let lower = text.to_lowercase();
        let mut pos = 0;
        let mut neg = 0;
        for word in lower
            .split(|c: char| !(c.is_alphanumeric() || c == '\''))
            .map(|w| w.trim_matches('\''))
            .filter(|w| !w.is_empty())
        {
            if self.positive.contains(word) {
                pos += 1;
            }
            if self.negative.contains(word) {
                neg += 1;
            }
        }
        (pos, neg)
    }

    pub fn classify(&self, text: &str) -> SentimentLabel {
        let (pos, neg) = self.count_cues(text);
        match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => SentimentLabel::Positive,
            std::cmp::Ordering::Less => SentimentLabel::Negative,
            std::cmp::Ordering::Equal => SentimentLabel::Neutral,
        }
    }
}

fn default_lexicon() -> &'static Lexicon {
    static LEXICON: OnceLock<Lexicon> = OnceLock::new();
    LEXICON.get_or_init(Lexicon::default)
}

/// Lexicon baseline using the bundled cue list.
pub fn classify_rule_based(text: &str) -> SentimentLabel {
    default_lexicon().classify(text)
}

#[derive(Debug, Clone)]
pub struct RuleBasedClassifier {
    lexicon: Arc<Lexicon>,
}

impl Default for RuleBasedClassifier {
    fn default() -> Self {
        RuleBasedClassifier {
            lexicon: Arc::new(default_lexicon().clone()),
        }
    }
}

impl RuleBasedClassifier {
    pub fn new(lexicon: Lexicon) -> Self {
        RuleBasedClassifier {
            lexicon: Arc::new(lexicon),
        }
    }
}

#[async_trait]
impl SentimentClassifier for RuleBasedClassifier {
    fn id(&self) -> &str {
        "rule"
    }

    async fn classify(&self, text: &str) -> Result<SentimentOutcome, ClassifyError> {
        Ok(SentimentOutcome {
            label: self.lexicon.classify(text),
            unparsed: false,
        })
    }
}

/// Maps a model reply to a label. Case and surrounding punctuation are
/// ignored; otherwise the reply must mention exactly one label word.
pub fn parse_label(reply: &str) -> Option<SentimentLabel> {
    let cleaned = reply
        .trim()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    if let Ok(label) = cleaned.parse() {
        return Some(label);
    }
    let mentioned: HashSet<SentimentLabel> = cleaned
        .split(|c: char| !c.is_alphanumeric())
        .filter_map(|w| match w {
            "negative" => Some(SentimentLabel::Negative),
            "neutral" => Some(SentimentLabel::Neutral),
            "positive" => Some(SentimentLabel::Positive),
            _ => None,
        })
        .collect();
    if mentioned.len() == 1 {
        mentioned.into_iter().next()
    } else {
        None
    }
}

/// Instruction template with an `{{utterance}}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationPrompt(Template);

impl Default for ClassificationPrompt {
    fn default() -> Self {
        ClassificationPrompt(Template::new(include_str!("../../assets/classification_prompt.txt")))
    }
}

impl ClassificationPrompt {
    pub fn new(template: Template) -> Result<Self, String> {
        if !template.placeholders().contains(&"utterance") {
            return Err("classification template must contain {{utterance}}".into());
        }
        Ok(ClassificationPrompt(template))
    }

    pub fn render(&self, utterance: &str) -> String {
        let mut values = BTreeMap::new();
        values.insert("utterance", utterance.to_string());
        self.0
            .render(&values)
            .expect("only the utterance placeholder is allowed")
    }
}

/// Prompts a language model to label the utterance.
pub struct ModelClassifier {
    id: String,
    model: Arc<dyn LanguageModel>,
    prompt: ClassificationPrompt,
    timeout: Duration,
    in_flight: Semaphore,
}

impl ModelClassifier {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
    pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

    pub fn new(id: impl Into<String>, model: Arc<dyn LanguageModel>) -> Self {
        ModelClassifier {
            id: id.into(),
            model,
            prompt: ClassificationPrompt::default(),
            timeout: Self::DEFAULT_TIMEOUT,
            in_flight: Semaphore::new(Self::DEFAULT_MAX_IN_FLIGHT),
        }
    }

    pub fn with_prompt(mut self, prompt: ClassificationPrompt) -> Self {
        self.prompt = prompt;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.in_flight = Semaphore::new(n.max(1));
        self
    }

    async fn ask(&self, messages: &[ChatMessage]) -> Result<String, ClassifyError> {
        let params = GenerationParams {
            temperature: 0.0,
            max_tokens: Some(4),
        };
        let _permit = self.in_flight.acquire().await.expect("semaphore never closed");
        match tokio::time::timeout(self.timeout, self.model.complete(messages, &params)).await {
            Err(_) => Err(ClassifyError::Timeout(self.timeout)),
            Ok(Err(AdapterError::Timeout(d))) => Err(ClassifyError::Timeout(d)),
            Ok(Err(e)) => Err(ClassifyError::Adapter(e)),
            Ok(Ok(reply)) => Ok(reply),
        }
    }
}

#[async_trait]
impl SentimentClassifier for ModelClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    /// One retry on an unparseable reply, then Neutral flagged `unparsed`.
    async fn classify(&self, text: &str) -> Result<SentimentOutcome, ClassifyError> {
        let messages = [ChatMessage::new(Role::User, self.prompt.render(text))];
        for _ in 0..2 {
            let reply = self.ask(&messages).await?;
            if let Some(label) = parse_label(&reply) {
                return Ok(SentimentOutcome {
                    label,
                    unparsed: false,
                });
            }
            tracing::debug!(classifier = %self.id, %reply, "unparseable sentiment reply");
        }
        Ok(SentimentOutcome {
            label: SentimentLabel::Neutral,
            unparsed: true,
        })
    }
}

/// Wraps a classifier with a fixed extra latency, for profiling and tests.
pub struct DelayedClassifier {
    inner: Arc<dyn SentimentClassifier>,
    clock: Arc<dyn Clock>,
    delay: Duration,
}

impl DelayedClassifier {
    pub fn new(inner: Arc<dyn SentimentClassifier>, clock: Arc<dyn Clock>, delay: Duration) -> Self {
        DelayedClassifier { inner, clock, delay }
    }
}

#[async_trait]
impl SentimentClassifier for DelayedClassifier {
    fn id(&self) -> &str {
        self.inner.id()
    }

    async fn classify(&self, text: &str) -> Result<SentimentOutcome, ClassifyError> {
        self.clock.sleep(self.delay).await;
        self.inner.classify(text).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::FixedReplyModel;
    use SentimentLabel::*;

    #[test]
    fn lexicon_baseline_cases() {
        assert_eq!(classify_rule_based(""), Neutral);
        assert_eq!(classify_rule_based("I'm glad your recovery is going well"), Positive);
        assert_eq!(classify_rule_based("Glad to hear it, but this is a problem."), Neutral);
        assert_eq!(classify_rule_based("You are overreacting."), Negative);
        assert_eq!(classify_rule_based("How long have you had the cough?"), Neutral);
    }

    #[test]
    fn lexicon_asset_contains_cues() {
        let lex = Lexicon::default();
        assert_eq!(lex.version, "1");
        assert!(lex.is_positive("glad"));
        assert!(!lex.is_negative("glad"));
        for w in ["recovery", "going", "your", "is"] {
            assert!(!lex.is_positive(w) && !lex.is_negative(w), "{w}");
        }
    }

    #[test]
    fn classifier_is_pure_across_threads() {
        let text = "Thank you, I understand this is a terrible time.";
        let expected = classify_rule_based(text);
        let handles: Vec<_> = (0..8)
            .map(|_| std::thread::spawn(move || classify_rule_based(text)))
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), expected);
        }
    }

    #[test]
    fn reply_parsing() {
        assert_eq!(parse_label("Positive"), Some(Positive));
        assert_eq!(parse_label("negative."), Some(Negative));
        assert_eq!(parse_label("  NEUTRAL\n"), Some(Neutral));
        assert_eq!(parse_label("Label: positive"), Some(Positive));
        assert_eq!(parse_label("the vibe is fine"), None);
        assert_eq!(parse_label("positive or negative"), None);
    }

    #[test]
    fn prompt_mentions_focus_and_utterance() {
        let p = ClassificationPrompt::default().render("How are you feeling?");
        assert!(p.contains("focusing strictly on tone, empathy, and reassurance"));
        assert!(p.contains("How are you feeling?"));
        assert!(ClassificationPrompt::new(Template::new("no placeholder")).is_err());
    }

    #[tokio::test]
    async fn model_classifier_parses_reply() {
        let c = ModelClassifier::new("m", Arc::new(FixedReplyModel::new(["Positive"])));
        assert_eq!(c.classify("hi").await.unwrap(), SentimentOutcome { label: Positive, unparsed: false });
        let c = ModelClassifier::new("m", Arc::new(FixedReplyModel::new(["negative."])));
        assert_eq!(c.classify("hi").await.unwrap().label, Negative);
    }

    #[tokio::test]
    async fn model_classifier_retries_once_then_falls_back() {
        let model = Arc::new(FixedReplyModel::new(["the vibe is fine", "the vibe is fine"]));
        let c = ModelClassifier::new("m", model.clone());
        let out = c.classify("hello").await.unwrap();
        assert_eq!(out, SentimentOutcome { label: Neutral, unparsed: true });
        assert_eq!(model.calls(), 2);

        let model = Arc::new(FixedReplyModel::new(["hmm", "Negative"]));
        let c = ModelClassifier::new("m", model.clone());
        assert_eq!(c.classify("hello").await.unwrap(), SentimentOutcome { label: Negative, unparsed: false });
    }

    struct Hanging;

    #[async_trait]
    impl LanguageModel for Hanging {
        async fn complete(&self, _: &[ChatMessage], _: &GenerationParams) -> Result<String, AdapterError> {
            std::future::pending().await
        }
    }

    #[tokio::test(start_paused = true)]
    async fn model_classifier_timeout_is_an_error() {
        let c = ModelClassifier::new("m", Arc::new(Hanging)).with_timeout(Duration::from_secs(2));
        assert_eq!(c.classify("x").await, Err(ClassifyError::Timeout(Duration::from_secs(2))));
    }
}
