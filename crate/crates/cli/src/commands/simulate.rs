use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use vpsim_core::adapters::{AudioClip, PCM16_MONO_16K};
use vpsim_core::analytics::{fmt_f, Table};
use vpsim_core::clock::{Clock, TokioClock};
use vpsim_core::pipeline::{latency_report, transcript_digest, Conversation, PipelineOptions, Turn, TurnInput};
use vpsim_core::scenario::{ConversationMemory, SessionPlan};
use vpsim_core::sentiment::{DelayedClassifier, SentimentClassifier};
use vpsim_server::service::{build_adapters, load_knowledge_base};
use vpsim_server::{AdapterMode, ServiceConfig};

use super::open;
use crate::args::{AdapterChoice, SimulateArgs};
use crate::output::{num, Output};

/// Script lines starting with this prefix are sent as audio through the
/// transcriber instead of as typed text.
const AUDIO_PREFIX: &str = "audio:";

pub fn run(args: SimulateArgs, machine: bool) -> Result<Output> {
    let mut config = ServiceConfig::load(args.config.as_deref())?;
    if let Some(kb) = &args.kb {
        config.kb_path = Some(kb.clone());
    }
    if let Some(a) = args.adapters {
        config.adapter.mode = match a {
            AdapterChoice::Mock => AdapterMode::Mock,
            AdapterChoice::Remote => AdapterMode::Remote,
        };
    }
    if let Some(b) = args.budget_s {
        config.latency_budget_s = b;
    }
    if let Some((stt, llm, tts)) = args.mock_delays {
        config.adapter.mock_stt_s = stt;
        config.adapter.mock_llm_s = llm;
        config.adapter.mock_tts_s = tts;
    }
    config.validate()?;

    let mut text = String::new();
    open(&args.script)?
        .read_to_string(&mut text)
        .with_context(|| format!("reading {}", args.script.display()))?;
    let inputs = parse_script(&text);
    if inputs.is_empty() {
        bail!("{} has no utterances", args.script.display());
    }

    let virtual_time = config.adapter.mode == AdapterMode::Mock && !args.real_time;
    let rt = if virtual_time {
        tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .start_paused(true)
            .build()?
    } else {
        tokio::runtime::Runtime::new()?
    };
    let (plan, turns) = rt.block_on(simulate(&config, args.seed, args.sentiment_delay_s, inputs))?;

    if let Some(path) = &args.out {
        let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(f);
        for t in &turns {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }

    render(&config, &plan, &turns, args.seed, machine)
}

fn parse_script(text: &str) -> Vec<TurnInput> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| match l.strip_prefix(AUDIO_PREFIX) {
            Some(rest) => TurnInput::Audio(AudioClip::new(PCM16_MONO_16K, rest.trim().as_bytes().to_vec())),
            None => TurnInput::Text(l.to_string()),
        })
        .collect()
}

async fn simulate(
    config: &ServiceConfig,
    seed: u64,
    sentiment_delay_s: Option<f64>,
    inputs: Vec<TurnInput>,
) -> Result<(SessionPlan, Vec<Turn>)> {
    let clock: Arc<dyn Clock> = Arc::new(TokioClock::new());
    let kb = load_knowledge_base(config)?;
    let (adapters, classifier) = build_adapters(config, clock.clone())?;
    let plan = SessionPlan::sample(&kb, seed, &config.prompt, None)?;
    let memory = ConversationMemory::new(config.memory.window, config.memory.char_budget)?;
    let mut conv = Conversation::new(plan.prompt.clone(), memory).with_options(PipelineOptions {
        sentiment_blocking: config.sentiment.blocking,
    });
    if let Some(c) = classifier {
        let c: Arc<dyn SentimentClassifier> = match sentiment_delay_s {
            Some(d) if d > 0.0 => Arc::new(DelayedClassifier::new(c, clock.clone(), Duration::from_secs_f64(d))),
            _ => c,
        };
        conv = conv.with_classifier(c);
    }

    let mut turns = Vec::with_capacity(inputs.len());
    for input in inputs {
        let outcome = conv.run_turn(input, &adapters, clock.clone()).await?;
        let mut turn = outcome.turn;
        if let Some(pending) = outcome.sentiment {
            turn.attach_sentiment(&pending.wait().await);
        }
        turns.push(turn);
    }
    Ok((plan, turns))
}

fn render(config: &ServiceConfig, plan: &SessionPlan, turns: &[Turn], seed: u64, machine: bool) -> Result<Output> {
    let mut out = Output::default();

    let mut case = Table::new(["field", "value"]);
    case.push(["seed".to_string(), seed.to_string()]);
    case.push(["syndrome".to_string(), plan.scenario.syndrome_name.clone()]);
    let p = &plan.persona;
    case.push(["persona".to_string(), format!("{} {}, {}", p.age_band, p.gender_descriptor, p.affect_tone)]);
    out.section("case", &case, machine);

    let mut t = Table::new(["turn", "status", "stt_s", "llm_s", "tts_s", "total_s", "sentiment", "doctor", "patient"]);
    for turn in turns {
        let status = match &turn.error {
            Some(f) => format!("failed ({f})"),
            None => "ok".to_string(),
        };
        let sentiment = match (&turn.doctor_sentiment, &turn.sentiment_error) {
            (Some(l), _) => l.to_string(),
            (None, Some(_)) => "error".to_string(),
            (None, None) => "-".to_string(),
        };
        t.push([
            turn.turn_id.to_string(),
            status,
            num(turn.timings.stt_s, machine),
            num(turn.timings.llm_s, machine),
            num(turn.timings.tts_s, machine),
            num(turn.timings.total_s, machine),
            sentiment,
            turn.doctor_text.clone(),
            turn.patient_text.clone().unwrap_or_default(),
        ]);
    }
    out.section("turns", &t, machine);

    let failed = turns.iter().filter(|t| !t.is_ok()).count();
    match latency_report(turns, config.latency_budget_s) {
        Ok(report) => {
            let mut lt = Table::new(["stage", "mean_s", "median_s", "p95_s"]);
            for (name, s) in [
                ("stt", &report.stt),
                ("llm", &report.llm),
                ("tts", &report.tts),
                ("sentiment", &report.sentiment),
                ("total", &report.total),
            ] {
                lt.push([name.to_string(), num(s.mean_s, machine), num(s.median_s, machine), num(s.p95_s, machine)]);
            }
            out.section("latency", &lt, machine);
            let mut summary = Table::new(["metric", "value"]);
            summary.push(["budget_s".to_string(), fmt_f(report.budget_s, 3)]);
            summary.push(["budget_met".to_string(), report.budget_met.to_string()]);
            summary.push(["failed_turns".to_string(), failed.to_string()]);
            summary.push(["transcript_sha256".to_string(), transcript_digest(turns)]);
            out.section("summary", &summary, machine);
        }
        Err(_) => {
            let mut summary = Table::new(["metric", "value"]);
            summary.push(["failed_turns".to_string(), failed.to_string()]);
            summary.push(["transcript_sha256".to_string(), transcript_digest(turns)]);
            out.section("summary", &summary, machine);
        }
    }
    out.failed = failed > 0;
    Ok(out)
}
