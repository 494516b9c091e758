//! Syndrome–symptom knowledge base.
//!
//! Source datasets are column-mapped at ingest through a [`FormatDescriptor`],
//! normalized, unioned per syndrome and merged into an immutable
//! [`KnowledgeBase`]. Two pair counts are kept: `raw_pair_count` (every pair
//! ingested, additive across sources) and `pair_count` (distinct pairs after
//! the union).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowercase, trim and collapse internal whitespace. Idempotent.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Mendeley,
    Columbia,
    Other,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Mendeley => "mendeley",
            Source::Columbia => "columbia",
            Source::Other => "other",
        })
    }
}

impl FromStr for Source {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize(s).as_str() {
            "mendeley" => Ok(Source::Mendeley),
            "columbia" => Ok(Source::Columbia),
            "other" => Ok(Source::Other),
            other => Err(KbError::Format(format!("unknown source `{other}`"))),
        }
    }
}

/// One syndrome with its normalized, ordered, duplicate-free symptom set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyndromeRecord {
    #[serde(rename = "syndrome")]
    name: String,
    source: Source,
    symptoms: Vec<String>,
}

impl SyndromeRecord {
    /// Builds a record from raw strings. Names and symptoms are normalized,
    /// empty symptoms dropped and duplicates removed keeping first occurrence.
    pub fn new<I, S>(name: &str, symptoms: I, source: Source) -> Result<Self, KbError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let name = normalize(name);
        if name.is_empty() {
            return Err(KbError::EmptySyndrome);
        }
        let mut record = SyndromeRecord {
            name,
            source,
            symptoms: Vec::new(),
        };
        for s in symptoms {
            record.add_symptom(s.as_ref());
        }
        if record.symptoms.is_empty() {
            return Err(KbError::NoSymptoms(record.name));
        }
        Ok(record)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn symptoms(&self) -> &[String] {
        &self.symptoms
    }

    fn add_symptom(&mut self, raw: &str) -> bool {
        let s = normalize(raw);
        if s.is_empty() || self.symptoms.contains(&s) {
            return false;
        }
        self.symptoms.push(s);
        true
    }

    fn union(&mut self, other: &SyndromeRecord) {
        for s in &other.symptoms {
            self.add_symptom(s);
        }
    }
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("empty syndrome name")]
    EmptySyndrome,
    #[error("syndrome `{0}` has no symptoms after normalization")]
    NoSymptoms(String),
    #[error("{}", format_row_errors(.0))]
    Rows(Vec<RowError>),
    #[error("invalid format descriptor: {0}")]
    Format(String),
    #[error("knowledge base is empty")]
    Empty,
    #[error("snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_row_errors(rows: &[RowError]) -> String {
    let mut out = format!("{} malformed row(s)", rows.len());
    for r in rows.iter().take(20) {
        out.push_str(&format!("\n  {r}"));
    }
    if rows.len() > 20 {
        out.push_str(&format!("\n  ... and {} more", rows.len() - 20));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("row {row}: {kind}")]
pub struct RowError {
    /// 1-based line number in the source stream, header included.
    pub row: usize,
    pub kind: RowErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RowErrorKind {
    #[error("expected {expected} columns, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("empty syndrome name")]
    EmptySyndrome,
    #[error("no symptoms after normalization")]
    NoSymptoms,
    #[error("unreadable row: {0}")]
    Parse(String),
}

/// Column mapping for one upstream dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatDescriptor {
    pub delimiter: u8,
    pub has_header: bool,
    pub syndrome_column: usize,
    pub symptom_columns: Vec<usize>,
    /// Splits a single symptom cell into several symptoms.
    pub symptom_delimiter: Option<char>,
    /// Exact column count required per row. When `None` a row only needs to
    /// reach the highest mapped column.
    pub columns: Option<usize>,
    pub source: Source,
}

impl Default for FormatDescriptor {
    fn default() -> Self {
        FormatDescriptor {
            delimiter: b',',
            has_header: false,
            syndrome_column: 0,
            symptom_columns: vec![1],
            symptom_delimiter: None,
            columns: None,
            source: Source::Other,
        }
    }
}

impl FormatDescriptor {
    fn min_columns(&self) -> usize {
        self.symptom_columns
            .iter()
            .copied()
            .chain(std::iter::once(self.syndrome_column))
            .max()
            .unwrap_or(0)
            + 1
    }
}

/// Parses `key=value` pairs separated by commas, e.g.
/// `delim=|,header=false,syndrome=0,symptoms=1,split=;,source=mendeley`.
///
/// `symptoms` takes a `+`-separated column list where each item is a single
/// index or an inclusive range (`1-17`). Delimiters that clash with the
/// descriptor syntax are spelled out: `tab`, `comma`, `pipe`, `semicolon`.
impl FromStr for FormatDescriptor {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut fmt = FormatDescriptor::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| KbError::Format(format!("expected key=value, got `{part}`")))?;
            let bad = |what: &str| KbError::Format(format!("bad {what} `{value}`"));
            match key.trim() {
                "delim" | "delimiter" => {
                    fmt.delimiter = match value {
                        "tab" | "\\t" => b'\t',
                        "comma" => b',',
                        "pipe" => b'|',
                        "semicolon" => b';',
                        v if v.len() == 1 => v.as_bytes()[0],
                        _ => return Err(bad("delimiter")),
                    }
                }
                "header" => fmt.has_header = value.parse().map_err(|_| bad("header flag"))?,
                "syndrome" => fmt.syndrome_column = value.parse().map_err(|_| bad("column"))?,
                "symptoms" => {
                    fmt.symptom_columns = parse_columns(value).ok_or_else(|| bad("columns"))?;
                }
                "split" | "symptom_delim" => {
                    fmt.symptom_delimiter = match value {
                        "none" => None,
                        "semicolon" => Some(';'),
                        "pipe" => Some('|'),
                        "comma" => Some(','),
                        v if v.chars().count() == 1 => v.chars().next(),
                        _ => return Err(bad("symptom delimiter")),
                    }
                }
                "columns" => fmt.columns = Some(value.parse().map_err(|_| bad("column count"))?),
                "source" => fmt.source = value.parse()?,
                other => return Err(KbError::Format(format!("unknown key `{other}`"))),
            }
        }
        if fmt.symptom_columns.is_empty() {
            return Err(KbError::Format("no symptom columns".into()));
        }
        if let Some(n) = fmt.columns {
            if n < fmt.min_columns() {
                return Err(KbError::Format(format!(
                    "columns={n} but mapping needs {}",
                    fmt.min_columns()
                )));
            }
        }
        Ok(fmt)
    }
}

fn parse_columns(value: &str) -> Option<Vec<usize>> {
    let mut cols = Vec::new();
    for piece in value.split('+') {
        if let Some((lo, hi)) = piece.split_once('-') {
            let (lo, hi): (usize, usize) = (lo.parse().ok()?, hi.parse().ok()?);
            if lo > hi {
                return None;
            }
            cols.extend(lo..=hi);
        } else {
            cols.push(piece.parse().ok()?);
        }
    }
    Some(cols)
}

/// Records from one ingested source plus the number of pairs read from it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<SyndromeRecord>,
    pub raw_pair_count: usize,
}

impl From<Vec<SyndromeRecord>> for Dataset {
    fn from(records: Vec<SyndromeRecord>) -> Self {
        let raw_pair_count = records.iter().map(|r| r.symptoms.len()).sum();
        Dataset {
            records,
            raw_pair_count,
        }
    }
}

/// Reads delimited rows into records, unioning rows of the same syndrome.
///
/// Every malformed row is collected; if any exist the whole ingest fails with
/// [`KbError::Rows`].
pub fn ingest_dataset<R: Read>(stream: R, format: &FormatDescriptor) -> Result<Dataset, KbError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(stream);

    let mut errors = Vec::new();
    let mut by_name: BTreeMap<String, SyndromeRecord> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut raw_pair_count = 0usize;
    let mut expected = format.columns;

    for (idx, row) in reader.records().enumerate() {
        let line = row
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map(|p| p.line() as usize)
            .unwrap_or(idx + 1);
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError {
                    row: line,
                    kind: RowErrorKind::Parse(e.to_string()),
                });
                continue;
            }
        };
        if idx == 0 && format.has_header {
            if expected.is_none() {
                expected = Some(row.len());
            }
            continue;
        }
        let arity_ok = match expected {
            Some(n) => row.len() == n,
            None => row.len() >= format.min_columns(),
        };
        if !arity_ok {
            errors.push(RowError {
                row: line,
                kind: RowErrorKind::Arity {
                    expected: expected.unwrap_or_else(|| format.min_columns()),
                    found: row.len(),
                },
            });
            continue;
        }
        let name = normalize(&row[format.syndrome_column]);
        if name.is_empty() {
            errors.push(RowError {
                row: line,
                kind: RowErrorKind::EmptySyndrome,
            });
            continue;
        }
        let mut symptoms: Vec<String> = Vec::new();
        for &col in &format.symptom_columns {
            let cell = &row[col];
            let pieces: Vec<&str> = match format.symptom_delimiter {
                Some(d) => cell.split(d).collect(),
                None => vec![cell],
            };
            symptoms.extend(pieces.into_iter().map(normalize).filter(|s| !s.is_empty()));
        }
        if symptoms.is_empty() {
            errors.push(RowError {
                row: line,
                kind: RowErrorKind::NoSymptoms,
            });
            continue;
        }
        raw_pair_count += symptoms.len();
        let record = SyndromeRecord::new(&name, &symptoms, format.source)
            .expect("name and symptoms already validated");
        match by_name.get_mut(&name) {
            Some(existing) => existing.union(&record),
            None => {
                order.push(name.clone());
                by_name.insert(name, record);
            }
        }
    }

    if !errors.is_empty() {
        return Err(KbError::Rows(errors));
    }
    let records = order
        .into_iter()
        .map(|n| by_name.remove(&n).expect("present"))
        .collect();
    Ok(Dataset {
        records,
        raw_pair_count,
    })
}

/// Immutable merged knowledge base. Records are sorted by syndrome name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    records: Vec<SyndromeRecord>,
    raw_pair_count: usize,
    pair_count: usize,
}

impl KnowledgeBase {
    pub fn records(&self) -> &[SyndromeRecord] {
        &self.records
    }

    pub fn raw_pair_count(&self) -> usize {
        self.raw_pair_count
    }

    pub fn pair_count(&self) -> usize {
        self.pair_count
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, syndrome: &str) -> Option<&SyndromeRecord> {
        let key = normalize(syndrome);
        self.records
            .binary_search_by(|r| r.name.as_str().cmp(&key))
            .ok()
            .map(|i| &self.records[i])
    }

    /// Merges any number of datasets. A syndrome seen in several inputs keeps
    /// the source tag of its first occurrence.
    pub fn from_datasets<I>(datasets: I) -> Self
    where
        I: IntoIterator<Item = Dataset>,
    {
        let mut by_name: BTreeMap<String, SyndromeRecord> = BTreeMap::new();
        let mut raw_pair_count = 0;
        for ds in datasets {
            raw_pair_count += ds.raw_pair_count;
            for record in ds.records {
                match by_name.get_mut(&record.name) {
                    Some(existing) => existing.union(&record),
                    None => {
                        by_name.insert(record.name.clone(), record);
                    }
                }
            }
        }
        let records: Vec<SyndromeRecord> = by_name.into_values().collect();
        let pair_count = records.iter().map(|r| r.symptoms.len()).sum();
        KnowledgeBase {
            records,
            raw_pair_count,
            pair_count,
        }
    }

    /// Writes one JSON record per line: `syndrome`, `source`, `symptoms`.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<(), KbError> {
        writeln!(
            out,
            "{}",
            serde_json::json!({
                "schema": SNAPSHOT_SCHEMA,
                "raw_pair_count": self.raw_pair_count,
                "pair_count": self.pair_count,
                "syndromes": self.records.len(),
            })
        )?;
        for r in &self.records {
            let line = serde_json::to_string(r).expect("record serializes");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads a snapshot written by [`KnowledgeBase::write_snapshot`]. The
    /// header line is optional so hand-written record files load too.
    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self, KbError> {
        let mut records = Vec::new();
        let mut header_raw = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| KbError::Snapshot {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if value.get("schema").is_some() {
                if value["schema"] != SNAPSHOT_SCHEMA {
                    return Err(KbError::Snapshot {
                        line: line_no,
                        message: format!("unsupported schema {}", value["schema"]),
                    });
                }
                header_raw = value["raw_pair_count"].as_u64().map(|v| v as usize);
                continue;
            }
            let rec: SyndromeRecord =
                serde_json::from_value(value).map_err(|e| KbError::Snapshot {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let rec = SyndromeRecord::new(&rec.name, &rec.symptoms, rec.source).map_err(|e| {
                KbError::Snapshot {
                    line: line_no,
                    message: e.to_string(),
                }
            })?;
            records.push(rec);
        }
        let ds = Dataset::from(records);
        let mut kb = KnowledgeBase::from_datasets([ds]);
        if let Some(raw) = header_raw {
            kb.raw_pair_count = raw.max(kb.pair_count);
        }
        Ok(kb)
    }
}

pub const SNAPSHOT_SCHEMA: &str = "vpsim.kb.v1";

/// Merges two datasets into a knowledge base.
pub fn merge(a: Dataset, b: Dataset) -> KnowledgeBase {
    KnowledgeBase::from_datasets([a, b])
}

/// Small built-in knowledge base for demos and tests.
pub fn demo_knowledge_base() -> KnowledgeBase {
    KnowledgeBase::read_snapshot(include_str!("../assets/demo_kb.jsonl").as_bytes())
        .expect("bundled demo knowledge base is valid")
}

/// One session's sampled syndrome and its full symptom set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub syndrome_name: String,
    pub symptoms: Vec<String>,
    pub seed: u64,
}

/// Picks one syndrome uniformly (not weighted by symptom count).
pub fn sample_scenario(kb: &KnowledgeBase, seed: u64) -> Result<ScenarioSpec, KbError> {
    if kb.is_empty() {
        return Err(KbError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let record = &kb.records[rng.random_range(0..kb.records.len())];
    Ok(ScenarioSpec {
        syndrome_name: record.name.clone(),
        symptoms: record.symptoms.clone(),
        seed,
    })
}

/// Counts pairs that appear more than once across the inputs
/// (`raw_pair_count - pair_count` after a merge).
pub fn duplicate_pair_count(datasets: &[Dataset]) -> usize {
    let mut seen = HashSet::new();
    let mut total = 0;
    for ds in datasets {
        for r in &ds.records {
            for s in &r.symptoms {
                total += 1;
                seen.insert((r.name.as_str(), s.as_str()));
            }
        }
    }
    total - seen.len()
}
