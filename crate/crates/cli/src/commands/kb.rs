use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use anyhow::{bail, Context, Result};
use vpsim_core::analytics::Table;
use vpsim_core::knowledge_base::{ingest_dataset, Dataset, FormatDescriptor, KnowledgeBase};

use super::open;
use crate::args::{IngestArgs, KbCommand};
use crate::output::Output;

pub fn run(cmd: KbCommand, machine: bool) -> Result<Output> {
    match cmd {
        KbCommand::Ingest(args) => {
            if args.files.len() != 1 {
                bail!("`kb ingest` takes one file; use `kb merge` for several");
            }
            build(args, machine)
        }
        KbCommand::Merge(args) => build(args, machine),
        KbCommand::Stats { kb } => {
            let kb = KnowledgeBase::read_snapshot(BufReader::new(open(&kb)?))
                .with_context(|| format!("reading {}", kb.display()))?;
            let mut out = Output::default();
            out.section("knowledge base", &totals(&kb), machine);
            Ok(out)
        }
    }
}

fn build(args: IngestArgs, machine: bool) -> Result<Output> {
    let formats: Vec<FormatDescriptor> = args
        .formats
        .iter()
        .map(|f| f.parse().with_context(|| format!("format `{f}`")))
        .collect::<Result<_>>()?;
    if formats.len() != 1 && formats.len() != args.files.len() {
        bail!(
            "got {} --format values for {} files; give one or one per file",
            formats.len(),
            args.files.len()
        );
    }

    let mut per_file = Table::new(["file", "source", "syndromes", "pairs"]);
    let mut datasets: Vec<Dataset> = Vec::new();
    for (i, path) in args.files.iter().enumerate() {
        let fmt = &formats[if formats.len() == 1 { 0 } else { i }];
        let ds = ingest_dataset(BufReader::new(open(path)?), fmt)
            .with_context(|| format!("ingesting {}", path.display()))?;
        per_file.push([
            path.display().to_string(),
            fmt.source.to_string(),
            ds.records.len().to_string(),
            ds.raw_pair_count.to_string(),
        ]);
        datasets.push(ds);
    }
    let kb = KnowledgeBase::from_datasets(datasets);

    if let Some(path) = &args.out {
        let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(f);
        kb.write_snapshot(&mut w)?;
        w.flush()?;
    }

    let mut out = Output::default();
    out.section("sources", &per_file, machine);
    out.section("knowledge base", &totals(&kb), machine);
    if let Some(path) = &args.out {
        out.line(&format!("\nsnapshot written to {}", path.display()));
    }
    Ok(out)
}

fn totals(kb: &KnowledgeBase) -> Table {
    let mut t = Table::new(["metric", "value"]);
    t.push(["syndromes".to_string(), kb.len().to_string()]);
    t.push(["raw_pair_count".to_string(), kb.raw_pair_count().to_string()]);
    t.push(["pair_count".to_string(), kb.pair_count().to_string()]);
    t.push([
        "duplicates".to_string(),
        (kb.raw_pair_count() - kb.pair_count()).to_string(),
    ]);
    t
}
