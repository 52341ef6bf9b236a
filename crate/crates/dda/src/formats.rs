//! Versioned on-disk formats.
//!
//! Tables are comma-separated with a `# <format> v<version>` first line and a
//! header row. Documents are pretty-printed JSON objects
//! `{"format": .., "version": .., "data": ..}`. Floats are written in the
//! shortest decimal form that parses back to the same bits.

use std::path::{Path, PathBuf};

use dda_core::optimize::{AlternationRecord, Phase, StepRecord, TrainingTrace};
use dda_core::{Matrix, PlayerDataset};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::{hash_f64s, read_string, write_atomic};

pub const DATASET: &str = "dda-dataset";
pub const DATASET_META: &str = "dda-dataset-meta";
pub const WEIGHTS: &str = "dda-weights";
pub const ASSIGNMENT: &str = "dda-assignment";
pub const NORMALIZER: &str = "dda-normalizer";
pub const POLICY: &str = "dda-policy";
pub const MANIFEST: &str = "dda-manifest";
pub const COMPARISON: &str = "dda-comparison";
pub const TRACE: &str = "dda-trace";
pub const ALTERNATIONS: &str = "dda-alternations";
pub const HISTOGRAM: &str = "dda-histogram";
pub const CURVES: &str = "dda-curves";
pub const PROP1: &str = "dda-prop1";

/// Every format is at version 1.
pub const VERSION: u32 = 1;

pub fn float(v: f64) -> String {
    format!("{v:?}")
}

fn tag_line(format: &str) -> String {
    format!("# {format} v{VERSION}\n")
}

/// Splits off and checks the tag line of a table.
fn strip_tag<'a>(path: &Path, text: &'a str, format: &str) -> Result<&'a str> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let first = first.trim_end_matches('\r');
    let Some(tag) = first.strip_prefix("# ") else {
        return Err(Error::format(path, format!("missing `# {format} v{VERSION}` tag line")));
    };
    match tag.split_once(" v") {
        Some((name, version)) if name == format => {
            if version != VERSION.to_string() {
                return Err(Error::format(
                    path,
                    format!("{format} version {version} is not supported (expected {VERSION})"),
                ));
            }
            Ok(rest)
        }
        _ => Err(Error::format(
            path,
            format!("expected a {format} file, found `{first}`"),
        )),
    }
}

/// Table writer that produces the tag line, the header and the rows.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(format: &str, header: &[&str]) -> Self {
        let mut buf = tag_line(format).into_bytes();
        buf.reserve(1 << 16);
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(buf);
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }

    pub fn write(self, path: &Path) -> Result<()> {
        write_atomic(path, &self.into_bytes())
    }
}

/// Reads a tagged table: header plus string records.
fn read_table(path: &Path, format: &str) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let text = read_string(path)?;
    let body = strip_tag(path, &text, format)?;
    let mut reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let rows = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((header, rows))
}

fn parse_field<T: std::str::FromStr>(path: &Path, row: usize, name: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(path, format!("row {row}: bad {name} `{s}`")))
}

fn expect_header(path: &Path, found: &[String], expected: &[&str]) -> Result<()> {
    if found.len() < expected.len() || found.iter().zip(expected).any(|(f, e)| f != e) {
        return Err(Error::format(
            path,
            format!(
                "header must start with `{}`, found `{}`",
                expected.join(","),
                found.join(",")
            ),
        ));
    }
    Ok(())
}

// ---- dataset ----

pub fn dataset_bytes(d: &PlayerDataset) -> Vec<u8> {
    let z = d.feature_dim();
    let mut header = vec!["player_id".to_string()];
    header.extend((0..z).map(|j| format!("f{j}")));
    header.push("difficulty".into());
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(DATASET, &refs);
    let mut fields = Vec::with_capacity(z + 2);
    for (i, (row, diff)) in d.features().iter_rows().zip(d.difficulty()).enumerate() {
        fields.clear();
        fields.push(i.to_string());
        fields.extend(row.iter().map(|v| float(*v)));
        fields.push(float(*diff));
        t.row(&fields);
    }
    t.into_bytes()
}

pub fn write_dataset(path: &Path, d: &PlayerDataset) -> Result<()> {
    write_atomic(path, &dataset_bytes(d))
}

pub fn read_dataset(path: &Path) -> Result<PlayerDataset> {
    let (header, rows) = read_table(path, DATASET)?;
    let z = header.len().saturating_sub(2);
    let ok = header.len() >= 3
        && header[0] == "player_id"
        && header[header.len() - 1] == "difficulty"
        && header[1..=z].iter().enumerate().all(|(j, h)| *h == format!("f{j}"));
    if !ok {
        return Err(Error::format(
            path,
            "header must be `player_id,f0,..,f{Z-1},difficulty`",
        ));
    }
    let mut data = Vec::with_capacity(rows.len() * z);
    let mut difficulty = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if r.len() != z + 2 {
            return Err(Error::format(
                path,
                format!("row {i}: expected {} fields, found {}", z + 2, r.len()),
            ));
        }
        let id: usize = parse_field(path, i, "player_id", &r[0])?;
        if id != i {
            return Err(Error::format(path, format!("row {i}: player_id {id} out of order")));
        }
        for j in 0..z {
            data.push(parse_field::<f64>(path, i, "feature", &r[j + 1])?);
        }
        difficulty.push(parse_field::<f64>(path, i, "difficulty", &r[z + 1])?);
    }
    let features = Matrix::new(rows.len(), z, data)?;
    Ok(PlayerDataset::new(features, difficulty)?)
}

/// Sidecar path next to a dataset: `data.csv` -> `data.meta.json`.
pub fn sidecar_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("meta.json")
}

/// Content hash of a dataset, independent of its file layout.
pub fn dataset_fingerprint(d: &PlayerDataset) -> String {
    hash_f64s(
        &[d.players() as u64, d.feature_dim() as u64],
        [d.features().as_slice(), d.difficulty()],
    )
}

// ---- documents ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document<T> {
    pub format: String,
    pub version: u32,
    pub data: T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

pub fn document_bytes<T: Serialize>(format: &str, data: &T) -> Vec<u8> {
    let doc = Document {
        format: format.to_string(),
        version: VERSION,
        data,
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("serializable document");
    out.push(b'\n');
    out
}

pub fn write_document<T: Serialize>(path: &Path, format: &str, data: &T) -> Result<()> {
    write_atomic(path, &document_bytes(format, data))
}

pub fn read_document<T: DeserializeOwned>(path: &Path, format: &str) -> Result<T> {
    let text = read_string(path)?;
    let header: Header =
        serde_json::from_str(&text).map_err(|e| Error::format(path, format!("not a {format} document: {e}")))?;
    if header.format != format {
        return Err(Error::format(
            path,
            format!("expected a {format} document, found {}", header.format),
        ));
    }
    if header.version != VERSION {
        return Err(Error::format(
            path,
            format!(
                "{format} version {} is not supported (expected {VERSION})",
                header.version
            ),
        ));
    }
    let doc: Document<T> = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(doc.data)
}

// ---- traces ----

pub const TRACE_HEADER: [&str; 5] = ["step", "phase", "ux_loss", "completion_abs_err", "batch_id"];
pub const ALTERNATION_HEADER: [&str; 6] = [
    "cycle",
    "dist_M_to_C",
    "dist_M_to_nextC",
    "ux_epochs",
    "proj_iterations",
    "satisfied",
];

pub fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Ux => "UX",
        Phase::Projection => "PROJECTION",
    }
}

fn parse_phase(path: &Path, row: usize, s: &str) -> Result<Phase> {
    match s.trim() {
        "UX" => Ok(Phase::Ux),
        "PROJECTION" => Ok(Phase::Projection),
        other => Err(Error::format(path, format!("row {row}: unknown phase `{other}`"))),
    }
}

pub fn steps_table(steps: &[StepRecord]) -> Table {
    let mut t = Table::new(TRACE, &TRACE_HEADER);
    for s in steps {
        t.row([
            s.step.to_string(),
            phase_name(s.phase).to_string(),
            float(s.ux_loss),
            float(s.completion_abs_err),
            s.batch_id.map(|b| b.to_string()).unwrap_or_default(),
        ]);
    }
    t
}

pub fn alternations_table(records: &[AlternationRecord]) -> Table {
    let mut t = Table::new(ALTERNATIONS, &ALTERNATION_HEADER);
    for a in records {
        t.row([
            a.cycle.to_string(),
            float(a.dist_m_to_c),
            float(a.dist_m_to_next_c),
            a.ux_epochs.to_string(),
            a.proj_iterations.to_string(),
            a.satisfied.to_string(),
        ]);
    }
    t
}

pub fn read_steps(path: &Path) -> Result<Vec<StepRecord>> {
    let (header, rows) = read_table(path, TRACE)?;
    expect_header(path, &header, &TRACE_HEADER)?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() < TRACE_HEADER.len() {
                return Err(Error::format(path, format!("row {i}: too few fields")));
            }
            let batch = r[4].trim();
            Ok(StepRecord {
                step: parse_field(path, i, "step", &r[0])?,
                phase: parse_phase(path, i, &r[1])?,
                ux_loss: parse_field(path, i, "ux_loss", &r[2])?,
                completion_abs_err: parse_field(path, i, "completion_abs_err", &r[3])?,
                batch_id: if batch.is_empty() {
                    None
                } else {
                    Some(parse_field(path, i, "batch_id", batch)?)
                },
            })
        })
        .collect()
}

/// Reads an alternation table; only the first three columns are required.
pub fn read_alternations(path: &Path) -> Result<Vec<AlternationRecord>> {
    let (header, rows) = read_table(path, ALTERNATIONS)?;
    expect_header(path, &header, &ALTERNATION_HEADER[..3])?;
    let full = header.len() >= ALTERNATION_HEADER.len();
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() < 3 {
                return Err(Error::format(path, format!("row {i}: too few fields")));
            }
            let rec = AlternationRecord {
                cycle: parse_field(path, i, "cycle", &r[0])?,
                dist_m_to_c: parse_field(path, i, "dist_M_to_C", &r[1])?,
                dist_m_to_next_c: parse_field(path, i, "dist_M_to_nextC", &r[2])?,
                ux_epochs: if full {
                    parse_field(path, i, "ux_epochs", &r[3])?
                } else {
                    0
                },
                proj_iterations: if full {
                    parse_field(path, i, "proj_iterations", &r[4])?
                } else {
                    0
                },
                satisfied: if full {
                    parse_field(path, i, "satisfied", &r[5])?
                } else {
                    false
                },
            };
            if rec.dist_m_to_c < 0.0 || rec.dist_m_to_next_c < 0.0 {
                return Err(Error::format(path, format!("row {i}: negative distance")));
            }
            Ok(rec)
        })
        .collect()
}

/// `cluster_007.steps.csv` -> `cluster_007.alternations.csv`.
pub fn alternations_path_for(steps: &Path) -> PathBuf {
    let name = steps
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name
        .strip_suffix(".steps.csv")
        .unwrap_or_else(|| name.trim_end_matches(".csv"));
    steps.with_file_name(format!("{stem}.alternations.csv"))
}

pub fn read_trace(steps: &Path, alternations: Option<&Path>) -> Result<TrainingTrace> {
    let s = read_steps(steps)?;
    let a = match alternations {
        Some(p) => read_alternations(p)?,
        None => Vec::new(),
    };
    Ok(TrainingTrace::from_records(s, a))
}
