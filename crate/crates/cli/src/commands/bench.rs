use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use futures_util::{stream, StreamExt};
use vpsim_core::analytics::Table;
use vpsim_core::sentiment::{evaluate, ModelClassifier, RuleBasedClassifier, SentimentClassifier, SentimentLabel};
use vpsim_server::remote::{RemoteEndpoint, RemoteLanguageModel};

use super::open;
use crate::args::BenchArgs;
use crate::output::{num, Output};

struct Example {
    id: String,
    text: String,
    gold: SentimentLabel,
}

pub fn run(args: BenchArgs, machine: bool) -> Result<Output> {
    if args.workers == 0 {
        bail!("--workers must be at least 1");
    }
    if !(args.timeout_s.is_finite() && args.timeout_s > 0.0) {
        bail!("--timeout-s must be positive");
    }
    let corpus = read_corpus(&args.corpus)?;
    let classifiers = args
        .classifiers
        .iter()
        .map(|id| build_classifier(id, &args))
        .collect::<Result<Vec<_>>>()?;

    let rt = tokio::runtime::Runtime::new()?;
    let mut t = Table::new(["classifier", "n", "accuracy", "precision", "recall", "f1", "unparsed", "errors"]);
    let mut out = Output::default();
    for c in classifiers {
        let results = rt.block_on(
            stream::iter(corpus.iter())
                .map(|ex| {
                    let c = c.clone();
                    async move { c.classify(&ex.text).await }
                })
                .buffered(args.workers)
                .collect::<Vec<_>>(),
        );
        let (mut golds, mut preds, mut unparsed, mut errors) = (Vec::new(), Vec::new(), 0, 0);
        let mut dump = String::from("id,label\n");
        for (ex, r) in corpus.iter().zip(results) {
            match r {
                Ok(o) => {
                    golds.push(ex.gold);
                    preds.push(o.label);
                    unparsed += usize::from(o.unparsed);
                    dump.push_str(&format!("{},{}\n", csv_field(&ex.id), o.label));
                }
                Err(e) => {
                    errors += 1;
                    tracing::warn!(classifier = c.id(), id = %ex.id, "classification failed: {e}");
                }
            }
        }
        if let Some(dir) = &args.dump {
            let path = dir.join(format!("{}.csv", sanitize(c.id())));
            std::fs::write(&path, dump).with_context(|| format!("cannot write {}", path.display()))?;
        }
        out.failed |= errors > 0;
        let cells = match evaluate(&golds, &preds) {
            Ok(m) => [m.accuracy, m.precision, m.recall, m.f1].map(|v| num(v, machine)),
            Err(_) => ["-", "-", "-", "-"].map(String::from),
        };
        let mut row = vec![c.id().to_string(), golds.len().to_string()];
        row.extend(cells);
        row.extend([unparsed.to_string(), errors.to_string()]);
        t.push(row);
    }
    out.section("sentiment benchmark (weighted averages)", &t, machine);
    Ok(out)
}

fn build_classifier(id: &str, args: &BenchArgs) -> Result<Arc<dyn SentimentClassifier>> {
    if id == "rule" {
        return Ok(Arc::new(RuleBasedClassifier::default()));
    }
    let url = args
        .sentiment_url
        .as_deref()
        .ok_or_else(|| anyhow!("classifier `{id}` needs --sentiment-url (only `rule` runs locally)"))?;
    let client = reqwest::Client::new();
    let model = Arc::new(RemoteLanguageModel(RemoteEndpoint::new(client, url)));
    Ok(Arc::new(
        ModelClassifier::new(id, model)
            .with_timeout(Duration::from_secs_f64(args.timeout_s))
            .with_max_in_flight(args.workers),
    ))
}

/// Reads a corpus with `text` and `label` columns and an optional `id`
/// column (row number otherwise).
fn read_corpus(path: &Path) -> Result<Vec<Example>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = reader.headers().with_context(|| format!("reading {}", path.display()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let text_col = col("text").ok_or_else(|| anyhow!("{}: missing `text` column", path.display()))?;
    let label_col = col("label").ok_or_else(|| anyhow!("{}: missing `label` column", path.display()))?;
    let id_col = col("id");
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("{}: row {line}", path.display()))?;
        let gold = rec
            .get(label_col)
            .unwrap_or_default()
            .parse()
            .with_context(|| format!("{}: row {line}", path.display()))?;
        let text = rec.get(text_col).unwrap_or_default().to_string();
        if text.is_empty() {
            bail!("{}: row {line}: empty text", path.display());
        }
        let id = id_col
            .and_then(|c| rec.get(c))
            .map(str::to_string)
            .unwrap_or_else(|| (i + 1).to_string());
        out.push(Example { id, text, gold });
    }
    if out.is_empty() {
        bail!("{}: corpus is empty", path.display());
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}
