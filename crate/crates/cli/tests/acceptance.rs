//! End-to-end acceptance checks. Prints one PASS/FAIL/SKIP line per
//! criterion and exits non-zero if any criterion fails.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpsim_core::adapters::{AdapterSet, AudioClip, MockDelays, PCM16_MONO_16K};
use vpsim_core::analytics::{wilcoxon_signed_rank, Alternative, LikertVector, PMethod};
use vpsim_core::clock::{Clock, TokioClock};
use vpsim_core::knowledge_base::{demo_knowledge_base, ingest_dataset, FormatDescriptor, KnowledgeBase};
use vpsim_core::pipeline::{
    is_legal_path, latency_report, transcript_digest, Conversation, PipelineEvent, Turn, TurnInput, TurnState,
    DEFAULT_BUDGET_S,
};
use vpsim_core::scenario::{ConversationMemory, PromptPolicy, SessionPlan};
use vpsim_core::sentiment::{
    cohen_kappa, entropy, evaluate, ClassDistribution, DelayedClassifier, Kappa, RuleBasedClassifier,
    SentimentClassifier, SentimentLabel,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("entropy reproduction", || verdict(entropy_rows())),
        ("knowledge-base counts", kb_counts),
        ("wilcoxon oracle equivalence", || verdict(wilcoxon_oracle())),
        ("metrics identity", || verdict(metrics_identity())),
        ("kappa properties", || verdict(kappa_properties())),
        ("pipeline contract", || verdict(pipeline_contract())),
        ("crash recovery", || verdict(crash_recovery())),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let v = check();
        let ms = started.elapsed().as_millis();
        match v {
            Verdict::Pass(d) => println!("PASS  {name}: {d} ({ms} ms)"),
            Verdict::Skip(d) => println!("SKIP  {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} ({ms} ms)");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn verdict(c: Check) -> Verdict {
    match c {
        Ok(d) => Verdict::Pass(d),
        Err(e) => Verdict::Fail(e),
    }
}

// Entropy of the seven published class distributions.

fn entropy_rows() -> Check {
    let rows = [
        ("bert-base", [0.042, 0.815, 0.143], 0.834),
        ("distilbert-base", [0.040, 0.822, 0.138], 0.812),
        ("roberta-base", [0.035, 0.852, 0.112], 0.720),
        ("mistral", [0.012, 0.822, 0.166], 0.740),
        ("gemma3n", [0.035, 0.896, 0.068], 0.576),
        ("gemma3", [0.030, 0.920, 0.049], 0.477),
        ("gpt-4o-mini", [0.002, 0.930, 0.068], 0.382),
    ];
    let mut worst: f64 = 0.0;
    for (model, dist, published) in rows {
        let d = ClassDistribution::from_rounded(dist, 3).map_err(|e| format!("{model}: {e}"))?;
        let h = entropy(&d);
        // Independent oracle: direct sum over the published (rounded) values.
        let oracle: f64 = dist.iter().filter(|p| **p > 0.0).map(|p| -p * p.log2()).sum();
        ensure((h - oracle).abs() < 1e-9, || format!("{model}: {h} vs oracle {oracle}"))?;
        ensure((h - published).abs() <= 0.01, || format!("{model}: {h:.4} vs {published}"))?;
        worst = worst.max((h - published).abs());
    }
    Ok(format!("7/7 rows within 0.01 bits (max deviation {worst:.4})"))
}

// Knowledge-base counting.

fn kb_counts() -> Verdict {
    if let Err(e) = kb_fixtures() {
        return Verdict::Fail(e);
    }
    let fixture = "200 random fixture merges: raw additive, pair_count matches brute force";
    match upstream_sources() {
        None => Verdict::Skip(format!(
            "{fixture}; full-source 5,095 check needs VPSIM_MENDELEY_PATH/FORMAT and VPSIM_COLUMBIA_PATH/FORMAT"
        )),
        Some(Err(e)) => Verdict::Fail(e),
        Some(Ok(kb)) if kb.raw_pair_count() == 5_095 => {
            Verdict::Pass(format!("{fixture}; upstream sources give raw 5095, distinct {}", kb.pair_count()))
        }
        Some(Ok(kb)) => Verdict::Fail(format!("upstream sources give raw {}, expected 5095", kb.raw_pair_count())),
    }
}

fn kb_fixtures() -> Result<(), String> {
    let names = ["Flu", "cold", "  Asthma", "MIGRAINE", "gout"];
    let symptoms = ["fever", "Cough", "wheezing ", "headache", "joint  pain", "fatigue", "nausea"];
    let fmt: FormatDescriptor = "delim=pipe,syndrome=0,symptoms=1,split=;"
        .parse()
        .map_err(|e| format!("{e}"))?;
    let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..200 {
        let mut raw_rows = Vec::new();
        let mut datasets = Vec::new();
        for _ in 0..2 {
            let mut text = String::new();
            let mut rows = Vec::new();
            for _ in 0..rng.random_range(0..8) {
                let name = names[rng.random_range(0..names.len())];
                let syms: Vec<&str> = (0..rng.random_range(1..4))
                    .map(|_| symptoms[rng.random_range(0..symptoms.len())])
                    .collect();
                text.push_str(&format!("{name}|{}\n", syms.join(";")));
                rows.push((name, syms));
            }
            datasets.push(ingest_dataset(text.as_bytes(), &fmt).map_err(|e| format!("case {case}: {e}"))?);
            raw_rows.push(rows);
        }
        let (a, b) = (datasets[0].raw_pair_count, datasets[1].raw_pair_count);
        let kb = KnowledgeBase::from_datasets(datasets);
        let raw_oracle: usize = raw_rows.iter().flatten().map(|(_, s)| s.len()).sum();
        let distinct: HashSet<(String, String)> = raw_rows
            .iter()
            .flatten()
            .flat_map(|(n, ss)| ss.iter().map(move |s| (norm(n), norm(s))))
            .collect();
        ensure(kb.raw_pair_count() == a + b, || format!("case {case}: raw not additive"))?;
        ensure(kb.raw_pair_count() == raw_oracle, || {
            format!("case {case}: raw {} vs {raw_oracle}", kb.raw_pair_count())
        })?;
        ensure(kb.pair_count() == distinct.len(), || {
            format!("case {case}: pair_count {} vs brute force {}", kb.pair_count(), distinct.len())
        })?;
    }
    Ok(())
}

fn upstream_sources() -> Option<Result<KnowledgeBase, String>> {
    let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
    let m = var("VPSIM_MENDELEY_PATH")?;
    let c = var("VPSIM_COLUMBIA_PATH")?;
    let load = |path: &str, fmt_var: &str| -> Result<_, String> {
        let fmt: FormatDescriptor = var(fmt_var)
            .ok_or_else(|| format!("{fmt_var} is not set"))?
            .parse()
            .map_err(|e| format!("{fmt_var}: {e}"))?;
        let f = std::fs::File::open(path).map_err(|e| format!("{path}: {e}"))?;
        ingest_dataset(BufReader::new(f), &fmt).map_err(|e| format!("{path}: {e}"))
    };
    let merged = load(&m, "VPSIM_MENDELEY_FORMAT")
        .and_then(|a| Ok(KnowledgeBase::from_datasets([a, load(&c, "VPSIM_COLUMBIA_FORMAT")?])));
    Some(merged)
}

// Wilcoxon signed-rank against full sign enumeration.

fn oracle_wilcoxon(values: &[u8], mu0: f64, alt: Alternative) -> (f64, f64) {
    let d: Vec<f64> = values.iter().map(|&v| v as f64 - mu0).filter(|d| *d != 0.0).collect();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks: Vec<f64> = abs
        .iter()
        .map(|a| {
            let less = abs.iter().filter(|b| *b < a).count() as f64;
            let eq = abs.iter().filter(|b| *b == a).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect();
    let w: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        ge += u64::from(s >= w - 1e-9);
        le += u64::from(s <= w + 1e-9);
    }
    let total = (1u64 << n) as f64;
    let (pg, pl) = (ge as f64 / total, le as f64 / total);
    let p = match alt {
        Alternative::Greater => pg,
        Alternative::Less => pl,
        Alternative::TwoSided => (2.0 * pg.min(pl)).min(1.0),
    };
    (w, p)
}

fn wilcoxon_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let alts = [Alternative::Greater, Alternative::Less, Alternative::TwoSided];
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 500 {
        let n = rng.random_range(1..=12);
        let values: Vec<u8> = (0..n).map(|_| rng.random_range(1..=5)).collect();
        if values.iter().all(|&v| v == 3) {
            continue;
        }
        let alt = alts[checked % 3];
        let v = LikertVector::new("q", values.clone()).map_err(|e| e.to_string())?;
        let r = wilcoxon_signed_rank(&v, 3.0, alt).map_err(|e| format!("{values:?}: {e}"))?;
        let (w, p) = oracle_wilcoxon(&values, 3.0, alt);
        ensure(r.method == PMethod::Exact, || format!("{values:?}: not exact"))?;
        ensure((r.w - w).abs() < 1e-9, || format!("{values:?}: W {} vs {w}", r.w))?;
        ensure((r.p - p).abs() < 1e-9, || format!("{values:?} {alt}: p {} vs {p}", r.p))?;
        worst = worst.max((r.p - p).abs());
        checked += 1;
    }
    for (values, w, p) in [(vec![4u8, 4, 4, 4, 4], 15.0, 0.03125), (vec![2, 4], 1.5, 0.75)] {
        let v = LikertVector::new("q", values.clone()).map_err(|e| e.to_string())?;
        let r = wilcoxon_signed_rank(&v, 3.0, Alternative::Greater).map_err(|e| e.to_string())?;
        ensure(r.w == w && r.p == p, || format!("{values:?}: W {} p {}", r.w, r.p))?;
    }
    Ok(format!("500 vectors match enumeration (max |dp| {worst:.1e}); hand cases exact"))
}

// Weighted metrics.

fn metrics_identity() -> Check {
    use SentimentLabel::*;
    let mut rng = ChaCha8Rng::seed_from_u64(0x3E7);
    for i in 0..1000 {
        let n = rng.random_range(1..60);
        let pick = |rng: &mut ChaCha8Rng| SentimentLabel::ALL[rng.random_range(0..3)];
        let golds: Vec<SentimentLabel> = (0..n).map(|_| pick(&mut rng)).collect();
        let preds: Vec<SentimentLabel> = (0..n).map(|_| pick(&mut rng)).collect();
        let m = evaluate(&golds, &preds).map_err(|e| e.to_string())?;
        // Recall from per-class counts, independent of the library.
        let mut recall = 0.0;
        for l in SentimentLabel::ALL {
            let support = golds.iter().filter(|g| **g == l).count();
            if support > 0 {
                let tp = golds.iter().zip(&preds).filter(|(g, p)| **g == l && **p == l).count();
                recall += support as f64 / n as f64 * (tp as f64 / support as f64);
            }
        }
        let acc = golds.iter().zip(&preds).filter(|(g, p)| g == p).count() as f64 / n as f64;
        ensure((m.recall - acc).abs() < 1e-12 && (recall - acc).abs() < 1e-12, || {
            format!("pair {i}: recall {} oracle {recall} accuracy {acc}", m.recall)
        })?;
    }
    let m = evaluate(&[Negative, Negative, Positive], &[Negative, Positive, Positive]).map_err(|e| e.to_string())?;
    let r3 = |x: f64| (x * 1000.0).round() / 1000.0;
    ensure(
        r3(m.accuracy) == 0.667 && r3(m.precision) == 0.833 && r3(m.recall) == 0.667 && r3(m.f1) == 0.667,
        || format!("hand case gave {:.3}/{:.3}/{:.3}/{:.3}", m.accuracy, m.precision, m.recall, m.f1),
    )?;
    Ok("weighted recall == accuracy on 1000 random pairs; hand case 0.667/0.833/0.667/0.667".into())
}

// Cohen's kappa.

fn kappa_properties() -> Check {
    use SentimentLabel::*;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6A);
    let pick = |rng: &mut ChaCha8Rng| SentimentLabel::ALL[rng.random_range(0..3)];
    for _ in 0..200 {
        let n = rng.random_range(2..50);
        let a: Vec<SentimentLabel> = (0..n).map(|_| pick(&mut rng)).collect();
        if a.iter().all(|x| *x == a[0]) {
            continue;
        }
        ensure(cohen_kappa(&a, &a) == Ok(Kappa::Value(1.0)), || format!("kappa(a, a) != 1 for {a:?}"))?;
    }
    let a: Vec<SentimentLabel> = (0..10_000).map(|_| pick(&mut rng)).collect();
    let b: Vec<SentimentLabel> = (0..10_000).map(|_| pick(&mut rng)).collect();
    let k = cohen_kappa(&a, &b)
        .map_err(|e| e.to_string())?
        .value()
        .ok_or("undefined for random sequences")?;
    ensure(k.abs() < 0.05, || format!("independent sequences gave {k}"))?;
    ensure(
        cohen_kappa(&[Positive, Negative], &[Negative, Positive]) == Ok(Kappa::Value(-1.0)),
        || "hand case did not give -1".into(),
    )?;
    let c = vec![Neutral; 8];
    ensure(cohen_kappa(&c, &c).map(|k| k.is_undefined()) == Ok(true), || {
        "constant pair not undefined".into()
    })?;
    Ok(format!(
        "self-agreement 1, independent |kappa| = {:.4}, hand case -1, constant pair undefined",
        k.abs()
    ))
}

// Turn pipeline on mock adapters under virtual time.

struct Run {
    turns: Vec<Turn>,
    paths: BTreeMap<u64, Vec<TurnState>>,
}

fn run_session(turns: usize, sentiment_delay: Option<Duration>) -> Run {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .start_paused(true)
        .build()
        .expect("runtime");
    rt.block_on(async move {
        let clock: Arc<dyn Clock> = Arc::new(TokioClock::new());
        let adapters = AdapterSet::mock(clock.clone(), MockDelays::from_secs(0.14, 0.56, 0.24));
        let plan = SessionPlan::sample(&demo_knowledge_base(), 42, &PromptPolicy::default(), None).expect("plan");
        let paths: Arc<Mutex<BTreeMap<u64, Vec<TurnState>>>> = Arc::default();
        let sink_paths = paths.clone();
        let mut classifier: Arc<dyn SentimentClassifier> = Arc::new(RuleBasedClassifier::default());
        if let Some(d) = sentiment_delay {
            classifier = Arc::new(DelayedClassifier::new(classifier, clock.clone(), d));
        }
        let mut conv = Conversation::new(plan.prompt, ConversationMemory::new(12, 8_000).expect("memory"))
            .with_classifier(classifier)
            .with_event_sink(Arc::new(move |e| {
                if let PipelineEvent::State { turn_id, from, to } = e {
                    let mut p = sink_paths.lock().unwrap();
                    p.entry(turn_id).or_insert_with(|| vec![from]).push(to);
                }
            }));
        let lines = ["my chest hurts", "when did it start", "any fever", "thank you, that helps"];
        let mut out = Vec::new();
        for i in 0..turns {
            let text = lines[i % lines.len()];
            let input = TurnInput::Audio(AudioClip::new(PCM16_MONO_16K, text.as_bytes().to_vec()));
            let outcome = conv.run_turn(input, &adapters, clock.clone()).await.expect("turn");
            let mut turn = outcome.turn;
            if let Some(p) = outcome.sentiment {
                turn.attach_sentiment(&p.wait().await);
            }
            out.push(turn);
        }
        let paths = paths.lock().unwrap().clone();
        Run { turns: out, paths }
    })
}

fn pipeline_contract() -> Check {
    let a = run_session(100, None);
    let b = run_session(100, None);
    ensure(a.turns.iter().all(Turn::is_ok), || "a turn failed".into())?;
    for t in &a.turns {
        for (stage, got, want) in [
            ("stt", t.timings.stt_s, 0.14),
            ("llm", t.timings.llm_s, 0.56),
            ("tts", t.timings.tts_s, 0.24),
        ] {
            ensure((got - want).abs() <= 1e-3, || format!("turn {} {stage}: {got} vs {want}", t.turn_id))?;
        }
    }
    let report = latency_report(&a.turns, DEFAULT_BUDGET_S).map_err(|e| e.to_string())?;
    ensure(report.budget_met && report.total.mean_s <= 1.5, || {
        format!("mean total {}", report.total.mean_s)
    })?;
    ensure(a.paths.len() == 100, || format!("{} turns emitted state events", a.paths.len()))?;
    for (id, path) in &a.paths {
        ensure(is_legal_path(path), || format!("turn {id}: illegal path {path:?}"))?;
        ensure(
            path.first() == Some(&TurnState::Idle) && path.last() == Some(&TurnState::Idle),
            || format!("turn {id}: path {path:?} does not start and end Idle"),
        )?;
    }
    let (ha, hb) = (transcript_digest(&a.turns), transcript_digest(&b.turns));
    ensure(ha == hb, || format!("transcript hashes differ: {ha} vs {hb}"))?;

    let slow = run_session(100, Some(Duration::from_millis(500)));
    let slow_report = latency_report(&slow.turns, DEFAULT_BUDGET_S).map_err(|e| e.to_string())?;
    let delta = (slow_report.total.mean_s - report.total.mean_s).abs();
    ensure(delta < 0.010, || format!("sentiment delay moved reply latency by {delta} s"))?;
    ensure(slow_report.sentiment.mean_s >= 0.5, || "sentiment delay was not applied".into())?;
    Ok(format!(
        "100 turns at 0.14/0.56/0.24 s (+-1 ms), mean total {:.3} s <= 1.5 s, legal paths, \
         stable hash {}, 500 ms sentiment delay moves latency {:.1} ms",
        report.total.mean_s,
        &ha[..12],
        delta * 1000.0
    ))
}

// Crash recovery through the real binary.

struct Server {
    child: Child,
    base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_server(data_dir: &Path) -> Result<Server, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vpsim"));
    for (k, _) in std::env::vars() {
        if k.starts_with("VPSIM_") {
            cmd.env_remove(k);
        }
    }
    let mut child = cmd
        .args(["serve", "--listen", "127.0.0.1:0", "--adapters", "mock", "--data-dir"])
        .arg(data_dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| format!("spawn: {e}"))?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().expect("stdout"))
        .read_line(&mut line)
        .map_err(|e| format!("read: {e}"))?;
    let base = line
        .trim()
        .strip_prefix("listening on ")
        .ok_or_else(|| format!("unexpected banner `{}`", line.trim()))?
        .to_string();
    Ok(Server { child, base })
}

fn crash_recovery() -> Check {
    const N: usize = 7;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let http = reqwest::Client::new();

    let mut server = start_server(dir.path())?;
    let (id, sent) = rt.block_on(async {
        let v: serde_json::Value = http
            .post(format!("{}/v1/sessions", server.base))
            .json(&serde_json::json!({ "seed": 9 }))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .json()
            .await
            .map_err(|e| e.to_string())?;
        let id = v["session_id"].as_str().ok_or("no session id")?.to_string();
        let mut sent = Vec::new();
        for i in 0..N {
            let text = format!("question number {i}");
            let r = http
                .post(format!("{}/v1/sessions/{id}/turns", server.base))
                .json(&serde_json::json!({ "text": text }))
                .send()
                .await
                .map_err(|e| e.to_string())?;
            ensure(r.status().is_success(), || format!("turn {i}: HTTP {}", r.status()))?;
            sent.push(text);
        }
        Ok::<_, String>((id, sent))
    })?;
    // SIGKILL, so nothing is flushed beyond what each acknowledgement covered.
    server.child.kill().map_err(|e| e.to_string())?;
    server.child.wait().map_err(|e| e.to_string())?;

    let log = std::fs::read_to_string(dir.path().join("sessions").join(format!("{id}.jsonl")))
        .map_err(|e| format!("session log: {e}"))?;
    let logged = log.lines().filter(|l| l.contains("\"record\":\"turn\"")).count();
    ensure(logged == N, || format!("log holds {logged} turns, expected {N}"))?;

    let server = start_server(dir.path())?;
    let transcript: serde_json::Value = rt.block_on(async {
        http.get(format!("{}/v1/sessions/{id}/transcript", server.base))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .json()
            .await
            .map_err(|e| e.to_string())
    })?;
    let turns = transcript["turns"].as_array().ok_or("no turns in transcript")?;
    ensure(turns.len() == N, || format!("transcript has {} turns after restart", turns.len()))?;
    for (i, (t, text)) in turns.iter().zip(&sent).enumerate() {
        ensure(
            t["turn_id"] == (i + 1) as u64 && t["doctor_text"] == text.as_str(),
            || format!("turn {i} out of order: {t}"),
        )?;
    }
    Ok(format!("{N} acknowledged turns survive SIGKILL and replay in order"))
}
