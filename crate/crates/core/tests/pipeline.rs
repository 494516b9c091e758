use std::sync::{Arc, Mutex};
use std::time::Duration;

use proptest::prelude::*;
use vpsim_core::adapters::{
    AdapterSet, AudioClip, MockDelays, MockFailure, MockPatientModel, MockSynthesizer, MockTranscriber,
    StageTimeouts, PCM16_MONO_16K,
};
use vpsim_core::clock::{Clock, TokioClock};
use vpsim_core::knowledge_base::demo_knowledge_base;
use vpsim_core::pipeline::{
    is_legal_path, Conversation, FailureKind, PipelineError, PipelineEvent, PipelineOptions, Stage, TurnInput,
    TurnState, TurnStatus,
};
use vpsim_core::scenario::{ConversationMemory, PromptPolicy, SessionPlan};
use vpsim_core::sentiment::{DelayedClassifier, RuleBasedClassifier, SentimentLabel};

fn plan(seed: u64) -> SessionPlan {
    SessionPlan::sample(&demo_knowledge_base(), seed, &PromptPolicy::default(), None).unwrap()
}

fn conversation(seed: u64) -> Conversation {
    Conversation::new(plan(seed).prompt, ConversationMemory::default())
}

fn recorder(conv: Conversation) -> (Conversation, Arc<Mutex<Vec<PipelineEvent>>>) {
    let events = Arc::new(Mutex::new(Vec::new()));
    let sink = events.clone();
    let conv = conv.with_event_sink(Arc::new(move |e| sink.lock().unwrap().push(e)));
    (conv, events)
}

fn state_path(events: &[PipelineEvent]) -> Vec<TurnState> {
    let mut path = vec![TurnState::Idle];
    for e in events {
        if let PipelineEvent::State { to, .. } = e {
            path.push(*to);
        }
    }
    path
}

fn clock() -> Arc<dyn Clock> {
    Arc::new(TokioClock::new())
}

fn audio(text: &str) -> TurnInput {
    TurnInput::Audio(AudioClip::new(PCM16_MONO_16K, text.as_bytes().to_vec()))
}

fn scripted(clock: &Arc<dyn Clock>, line: &str) -> AdapterSet {
    AdapterSet::new(
        Arc::new(MockTranscriber::new(clock.clone())),
        Arc::new(MockPatientModel::new(clock.clone()).scripted([line])),
        Arc::new(MockSynthesizer::new(clock.clone())),
    )
}

#[tokio::test(start_paused = true)]
async fn text_turn_passes_reply_through() {
    let clock = clock();
    let adapters = scripted(&clock, "my chest hurts");
    let (mut conv, events) = recorder(conversation(1));
    let out = conv
        .run_turn(TurnInput::Text("What brings you in?".into()), &adapters, clock)
        .await
        .unwrap();
    assert_eq!(out.turn.status, TurnStatus::Ok);
    assert_eq!(out.turn.patient_text.as_deref(), Some("my chest hurts"));
    assert_eq!(out.turn.timings.stt_s, 0.0);
    assert!(out.turn.audio_ref.is_some());
    assert_eq!(conv.state(), TurnState::Idle);
    assert_eq!(
        state_path(&events.lock().unwrap()),
        vec![TurnState::Idle, TurnState::Listening, TurnState::Thinking, TurnState::Speaking, TurnState::Idle]
    );
    assert_eq!(conv.memory().len(), 2);
}

#[tokio::test(start_paused = true)]
async fn fake_clock_timings_are_exact() {
    let clock = clock();
    let adapters = AdapterSet::mock(clock.clone(), MockDelays::from_secs(0.14, 0.56, 0.24));
    let mut conv = conversation(2);
    let t = conv.run_turn(audio("Does it hurt when you breathe?"), &adapters, clock).await.unwrap().turn;
    assert!(t.is_ok());
    assert_eq!(t.doctor_text, "Does it hurt when you breathe?");
    assert!((t.timings.stt_s - 0.14).abs() <= 1e-3, "{:?}", t.timings);
    assert!((t.timings.llm_s - 0.56).abs() <= 1e-3, "{:?}", t.timings);
    assert!((t.timings.tts_s - 0.24).abs() <= 1e-3, "{:?}", t.timings);
    assert!(t.timings.total_s >= 0.94 - 1e-9);
    assert!(t.timings.is_valid());
}

#[tokio::test(start_paused = true)]
async fn hanging_model_times_out_to_idle() {
    let clock = clock();
    let adapters = AdapterSet::new(
        Arc::new(MockTranscriber::new(clock.clone())),
        Arc::new(MockPatientModel::new(clock.clone()).with_failure(MockFailure::Hang)),
        Arc::new(MockSynthesizer::new(clock.clone())),
    );
    let (mut conv, events) = recorder(conversation(3));
    let t = conv.run_turn(TurnInput::Text("hello".into()), &adapters, clock).await.unwrap().turn;
    assert_eq!(t.status, TurnStatus::Failed);
    assert!(t.patient_text.is_none());
    let err = t.error.unwrap();
    assert_eq!((err.stage, err.kind), (Stage::Generation, FailureKind::Timeout));
    assert!((t.timings.llm_s - 20.0).abs() < 1e-3);
    assert_eq!(conv.state(), TurnState::Idle);
    let events = events.lock().unwrap();
    assert!(events.iter().any(|e| matches!(e, PipelineEvent::Failed { .. })));
    let path = state_path(&events);
    assert!(is_legal_path(&path), "{path:?}");
    assert_eq!(conv.memory().len(), 0);
}

#[tokio::test(start_paused = true)]
async fn protocol_error_and_codec_mismatch_fail_the_turn() {
    let clock = clock();
    let adapters = AdapterSet::new(
        Arc::new(MockTranscriber::new(clock.clone())),
        Arc::new(MockPatientModel::new(clock.clone())),
        Arc::new(MockSynthesizer::new(clock.clone()).with_failure(MockFailure::Protocol("bad voice".into()))),
    );
    let mut conv = conversation(4);
    let t = conv.run_turn(TurnInput::Text("hi".into()), &adapters, clock.clone()).await.unwrap().turn;
    let err = t.error.unwrap();
    assert_eq!((err.stage, err.kind), (Stage::Synthesis, FailureKind::Protocol));
    assert!(err.cause.contains("bad voice"));

    let wav = TurnInput::Audio(AudioClip::new("audio/wav", vec![1, 2, 3]));
    let t = conv.run_turn(wav, &adapters, clock).await.unwrap().turn;
    assert_eq!(t.error.unwrap().stage, Stage::Transcription);
    assert_eq!(t.turn_id, 2);
    assert_eq!(conv.state(), TurnState::Idle);
}

#[tokio::test(start_paused = true)]
async fn empty_input_is_rejected() {
    let clock = clock();
    let adapters = AdapterSet::mock(clock.clone(), MockDelays::default());
    let mut conv = conversation(5);
    assert!(matches!(
        conv.run_turn(TurnInput::Text("   ".into()), &adapters, clock).await,
        Err(PipelineError::EmptyInput)
    ));
    assert_eq!(conv.next_turn_id(), 1);
}

#[tokio::test(start_paused = true)]
async fn sentiment_stays_off_the_reply_path() {
    let clock = clock();
    let adapters = AdapterSet::mock(clock.clone(), MockDelays::default());
    let slow = Arc::new(DelayedClassifier::new(
        Arc::new(RuleBasedClassifier::default()),
        clock.clone(),
        Duration::from_millis(500),
    ));

    let mut plain = conversation(6);
    let base = plain
        .run_turn(TurnInput::Text("I'm glad you came in".into()), &adapters, clock.clone())
        .await
        .unwrap();

    let mut with = conversation(6).with_classifier(slow);
    let out = with
        .run_turn(TurnInput::Text("I'm glad you came in".into()), &adapters, clock.clone())
        .await
        .unwrap();
    assert!((out.turn.timings.total_s - base.turn.timings.total_s).abs() < 0.010);
    assert_eq!(out.turn.doctor_sentiment, None);

    let rec = out.sentiment.expect("classification pending").wait().await;
    assert_eq!(rec.turn_id, 1);
    assert_eq!(rec.label, Some(SentimentLabel::Positive));
    assert!((rec.sentiment_s - 0.5).abs() < 1e-3);

    let mut turn = out.turn;
    turn.attach_sentiment(&rec);
    assert_eq!(turn.doctor_sentiment, Some(SentimentLabel::Positive));
    assert!(turn.timings.is_valid());
}

#[tokio::test(start_paused = true)]
async fn blocking_sentiment_is_attached_before_delivery() {
    let clock = clock();
    let adapters = AdapterSet::mock(clock.clone(), MockDelays::from_secs(0.0, 0.1, 0.1));
    let slow = Arc::new(DelayedClassifier::new(
        Arc::new(RuleBasedClassifier::default()),
        clock.clone(),
        Duration::from_millis(500),
    ));
    let mut conv = conversation(7)
        .with_classifier(slow)
        .with_options(PipelineOptions { sentiment_blocking: true });
    let out = conv
        .run_turn(TurnInput::Text("this is terrible".into()), &adapters, clock)
        .await
        .unwrap();
    assert!(out.sentiment.is_none());
    assert_eq!(out.turn.doctor_sentiment, Some(SentimentLabel::Negative));
    // Sentiment starts with generation, so it overlaps the 0.2 s of model and synthesis.
    assert!((out.turn.timings.total_s - 0.5).abs() < 1e-3, "{:?}", out.turn.timings);
}

async fn run_session(seed: u64, questions: &[&str]) -> Vec<String> {
    let clock = clock();
    let adapters = AdapterSet::mock(clock.clone(), MockDelays::from_secs(0.01, 0.02, 0.01));
    let mut conv = conversation(seed);
    let mut replies = Vec::new();
    for q in questions {
        let t = conv.run_turn(TurnInput::Text(q.to_string()), &adapters, clock.clone()).await.unwrap().turn;
        replies.push(t.patient_text.unwrap());
    }
    replies
}

#[tokio::test(start_paused = true)]
async fn replay_with_mocks_is_deterministic() {
    let qs = ["Hello, what brings you in?", "How long has this been going on?", "Anything else?"];
    let a = run_session(42, &qs).await;
    let b = run_session(42, &qs).await;
    assert_eq!(a, b);
    assert!(a.iter().all(|r| !r.is_empty()));
}

#[tokio::test(start_paused = true)]
async fn resume_continues_turn_ids_and_memory() {
    let clock = clock();
    let adapters = AdapterSet::mock(clock.clone(), MockDelays::default());
    let mut conv = conversation(8);
    let mut turns = Vec::new();
    for q in ["one", "two"] {
        turns.push(conv.run_turn(TurnInput::Text(q.into()), &adapters, clock.clone()).await.unwrap().turn);
    }
    let mut resumed = conversation(8).resume(&turns).unwrap();
    assert_eq!(resumed.next_turn_id(), 3);
    assert_eq!(resumed.memory(), conv.memory());
    let a = conv.run_turn(TurnInput::Text("three".into()), &adapters, clock.clone()).await.unwrap().turn;
    let b = resumed.run_turn(TurnInput::Text("three".into()), &adapters, clock).await.unwrap().turn;
    assert_eq!(a.patient_text, b.patient_text);
    assert_eq!(b.turn_id, 3);

    let mut reversed = turns.clone();
    reversed.reverse();
    assert!(matches!(conversation(8).resume(&reversed), Err(PipelineError::NonMonotoneTurnId(1))));
}

#[test]
fn zero_timeouts_are_rejected() {
    let clock = Arc::new(vpsim_core::clock::ManualClock::default());
    let adapters = AdapterSet::mock(clock, MockDelays::default());
    let t = StageTimeouts {
        patient_model: Duration::ZERO,
        ..StageTimeouts::default()
    };
    assert!(adapters.with_timeouts(t).is_err());
}

fn failure_strategy() -> impl Strategy<Value = MockFailure> {
    prop_oneof![
        6 => Just(MockFailure::None),
        1 => Just(MockFailure::Hang),
        1 => Just(MockFailure::Protocol("broken".into())),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_turn_walks_a_legal_path(
        inputs in prop::collection::vec(("[a-z ]{1,30}", any::<bool>()), 1..6),
        fails in prop::collection::vec((failure_strategy(), failure_strategy(), failure_strategy()), 6),
        delays in (0u64..300, 0u64..900, 0u64..300),
    ) {
        let rt = tokio::runtime::Builder::new_current_thread().enable_time().start_paused(true).build().unwrap();
        rt.block_on(async {
            let clock = clock();
            let (mut conv, events) = recorder(conversation(9));
            for (i, (text, spoken)) in inputs.iter().enumerate() {
                let text = format!("q {text}");
                let (f_stt, f_llm, f_tts) = fails[i].clone();
                let adapters = AdapterSet::new(
                    Arc::new(MockTranscriber::new(clock.clone()).with_delay(Duration::from_millis(delays.0)).with_failure(f_stt)),
                    Arc::new(MockPatientModel::new(clock.clone()).with_delay(Duration::from_millis(delays.1)).with_failure(f_llm)),
                    Arc::new(MockSynthesizer::new(clock.clone()).with_delay(Duration::from_millis(delays.2)).with_failure(f_tts)),
                );
                let input = if *spoken { audio(&text) } else { TurnInput::Text(text) };
                let before = events.lock().unwrap().len();
                let t = conv.run_turn(input, &adapters, clock.clone()).await.unwrap().turn;
                prop_assert_eq!(conv.state(), TurnState::Idle);
                prop_assert_eq!(t.turn_id, i as u64 + 1);
                prop_assert_eq!(t.is_ok(), t.patient_text.is_some());
                prop_assert_eq!(t.is_ok(), t.error.is_none());
                prop_assert!(t.timings.is_valid(), "{:?}", t.timings);
                let path = state_path(&events.lock().unwrap()[before..]);
                prop_assert!(is_legal_path(&path), "{:?}", path);
            }
            Ok(())
        })?;
    }
}
