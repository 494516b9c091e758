use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use vpsim_core::analytics::{agreement_matrix, entropy_table, Table};
use vpsim_core::sentiment::{cohen_kappa, Kappa, SentimentLabel};

use super::open;
use crate::args::AnalyzeArgs;
use crate::output::{num, Output};

pub fn run(args: AnalyzeArgs, machine: bool) -> Result<Output> {
    let mut dumps: Vec<(String, Vec<(String, SentimentLabel)>)> = Vec::new();
    for arg in &args.dumps {
        let (model, path) = split_dump_arg(arg);
        if dumps.iter().any(|(m, _)| *m == model) {
            bail!("model `{model}` given twice");
        }
        let rows = read_dump(&path)?;
        dumps.push((model, rows));
    }
    let preds = align(&dumps)?;

    let mut out = Output::default();
    let mut et = Table::new(["model", "n", "p_negative", "p_neutral", "p_positive", "entropy_bits"]);
    for row in entropy_table(&preds)? {
        let [neg, neu, pos] = row.distribution.as_array();
        et.push([
            row.model_id,
            row.n.to_string(),
            num(neg, machine),
            num(neu, machine),
            num(pos, machine),
            num(row.entropy_bits, machine),
        ]);
    }
    out.section("label entropy", &et, machine);

    let (ids, kappa): (Vec<String>, Vec<Vec<Kappa>>) = if preds.len() == 1 {
        let (id, p) = preds.iter().next().expect("one model");
        (vec![id.clone()], vec![vec![cohen_kappa(p, p)?]])
    } else {
        let m = agreement_matrix(&preds)?;
        (m.model_ids, m.kappa)
    };
    let mut kt = Table::new(std::iter::once("model".to_string()).chain(ids.iter().cloned()));
    for (id, row) in ids.iter().zip(&kappa) {
        kt.push(std::iter::once(id.clone()).chain(row.iter().map(|k| match k.value() {
            Some(v) => num(v, machine),
            None => "undefined".to_string(),
        })));
    }
    out.section("cohen's kappa", &kt, machine);
    Ok(out)
}

fn split_dump_arg(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((m, p)) if !m.is_empty() && !p.is_empty() => (m.to_string(), PathBuf::from(p)),
        _ => {
            let path = PathBuf::from(arg);
            let model = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_string());
            (model, path)
        }
    }
}

/// Reads `id,label` rows; extra columns are ignored.
fn read_dump(path: &Path) -> Result<Vec<(String, SentimentLabel)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = reader.headers().with_context(|| format!("reading {}", path.display()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| anyhow!("{}: missing `{name}` column", path.display()))
    };
    let (id_col, label_col) = (col("id")?, col("label")?);
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("{}: row {line}", path.display()))?;
        let id = rec.get(id_col).unwrap_or_default().to_string();
        let label: SentimentLabel = rec
            .get(label_col)
            .unwrap_or_default()
            .parse()
            .with_context(|| format!("{}: row {line}", path.display()))?;
        if !seen.insert(id.clone()) {
            bail!("{}: row {line}: duplicate id `{id}`", path.display());
        }
        rows.push((id, label));
    }
    if rows.is_empty() {
        bail!("{}: no predictions", path.display());
    }
    Ok(rows)
}

/// Orders every model's labels by the first dump's ids. All dumps must
/// cover exactly the same ids.
fn align(dumps: &[(String, Vec<(String, SentimentLabel)>)]) -> Result<BTreeMap<String, Vec<SentimentLabel>>> {
    let (first_model, first) = &dumps[0];
    let mut out = BTreeMap::new();
    for (model, rows) in dumps {
        let by_id: BTreeMap<&str, SentimentLabel> = rows.iter().map(|(id, l)| (id.as_str(), *l)).collect();
        if rows.len() != first.len() {
            bail!(
                "`{model}` has {} predictions but `{first_model}` has {}",
                rows.len(),
                first.len()
            );
        }
        let labels = first
            .iter()
            .map(|(id, _)| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| anyhow!("`{model}` has no prediction for id `{id}`"))
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(model.clone(), labels);
    }
    Ok(out)
}
