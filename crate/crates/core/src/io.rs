//! File formats: signal traces, manifests, feature and sample matrices,
//! confusion matrices and triplet lists.
//!
//! CSV artefacts may start with `#` comment lines carrying provenance; readers
//! skip them.

use crate::data::{normalize_confusion, ConfusionMatrix, MarginClass, Sample, SignalId, Triplet};
use crate::error::{Error, Result};
use crate::features::SignalRecord;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Where an artefact came from: tool version, seed and a hash of the config.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        Self {
            tool: "percept".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_hash: config_hash.into(),
        }
    }

    pub fn comment(&self) -> String {
        format!(
            "# {} {} seed={} config={}",
            self.tool, self.version, self.seed, self.config_hash
        )
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_writer(path: &Path, provenance: Option<&Provenance>) -> Result<csv::Writer<BufWriter<File>>> {
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(p) = provenance {
        writeln!(out, "{}", p.comment())?;
    }
    Ok(csv::Writer::from_writer(out))
}

fn parse_f64(field: &str, what: &str, path: &Path, row: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::Input(format!(
            "{}: row {row}: {what} `{field}` is not a number",
            path.display()
        ))
    })
}

fn parse_u32(field: &str, what: &str, path: &Path, row: usize) -> Result<u32> {
    field.parse::<u32>().map_err(|_| {
        Error::Input(format!(
            "{}: row {row}: {what} `{field}` is not a non-negative integer",
            path.display()
        ))
    })
}

/// Reads a `t,ax,ay,az` trace. Without an explicit rate, it is inferred from
/// the mean spacing of `t`.
pub fn read_signal_csv(path: &Path, id: SignalId, sample_rate: Option<f64>) -> Result<SignalRecord> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != ["t", "ax", "ay", "az"] {
        return Err(Error::Input(format!(
            "{}: expected header `t,ax,ay,az`, found `{}`",
            path.display(),
            names.join(",")
        )));
    }
    let mut t = Vec::new();
    let mut axes: [Vec<f64>; 3] = Default::default();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let row = row + 1;
        t.push(parse_f64(&record[0], "t", path, row)?);
        for (a, axis) in axes.iter_mut().enumerate() {
            axis.push(parse_f64(&record[a + 1], "acceleration", path, row)?);
        }
    }
    let rate = match sample_rate {
        Some(r) => r,
        None => {
            if t.len() < 2 {
                return Err(Error::Input(format!(
                    "{}: cannot infer a sample rate from {} rows",
                    path.display(),
                    t.len()
                )));
            }
            let span = t[t.len() - 1] - t[0];
            (t.len() - 1) as f64 / span
        }
    };
    SignalRecord::new(id, rate, axes)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub class_id: u32,
    pub sample_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
}

/// List of signal files; relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalManifest {
    pub signals: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SignalManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read manifest {}: {e}", path.display())))?;
        let mut manifest: SignalManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Input(format!("manifest {}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut seen = HashMap::new();
        for (n, e) in manifest.signals.iter().enumerate() {
            let id = SignalId::new(e.class_id, e.sample_index);
            if let Some(first) = seen.insert(id, n) {
                return Err(Error::Input(format!(
                    "manifest {}: signal {id} listed twice (entries {first} and {n})",
                    path.display()
                )));
            }
        }
        Ok(manifest)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }
}

/// Writes samples as `class_id,sample_index,{prefix}0..` rows.
pub fn write_samples_csv(
    path: &Path,
    samples: &[Sample],
    prefix: &str,
    dim: usize,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let mut w = csv_writer(path, provenance)?;
    let mut header = vec!["class_id".to_string(), "sample_index".to_string()];
    header.extend((0..dim).map(|i| format!("{prefix}{i}")));
    w.write_record(&header)?;
    for s in samples {
        if s.values.len() != dim {
            return Err(Error::Input(format!(
                "signal {} has {} values, expected {dim}",
                s.id,
                s.values.len()
            )));
        }
        let mut row = vec![s.id.class_id.to_string(), s.id.sample_index.to_string()];
        row.extend(s.values.iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sample matrix written by [`write_samples_csv`] (any value prefix).
pub fn read_samples_csv(path: &Path) -> Result<Vec<Sample>> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "class_id" || &headers[1] != "sample_index" {
        return Err(Error::Input(format!(
            "{}: expected header `class_id,sample_index,<values>`",
            path.display()
        )));
    }
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let row = row + 1;
        let id = SignalId::new(
            parse_u32(&record[0], "class_id", path, row)?,
            parse_u32(&record[1], "sample_index", path, row)?,
        );
        if seen.insert(id, row).is_some() {
            return Err(Error::Input(format!("{}: signal {id} appears twice", path.display())));
        }
        let values = record
            .iter()
            .skip(2)
            .map(|f| parse_f64(f, "value", path, row))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "{}: signal {id} has non-finite value {v}",
                path.display()
            )));
        }
        out.push(Sample::new(id, values));
    }
    Ok(out)
}

/// Writes `size` on the first line, then `size` rows of `size` values.
pub fn write_confusion_csv(path: &Path, matrix: &ConfusionMatrix, provenance: Option<&Provenance>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(p) = provenance {
        writeln!(out, "{}", p.comment())?;
    }
    let n = matrix.size();
    writeln!(out, "{n}")?;
    for r in 0..n {
        let row: Vec<String> = (0..n).map(|c| format!("{:?}", matrix.get(r, c))).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a raw confusion table and normalises it (symmetrised, min-max scaled).
pub fn read_confusion_csv(path: &Path) -> Result<ConfusionMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let size: usize = lines
        .next()
        .and_then(|l| l.trim_matches(',').parse().ok())
        .ok_or_else(|| Error::Input(format!("{}: first line must be the matrix size", path.display())))?;
    let mut raw = Vec::with_capacity(size * size);
    for (r, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|f| parse_f64(f.trim(), "entry", path, r + 1))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != size {
            return Err(Error::Input(format!(
                "{}: row {} has {} entries, expected {size}",
                path.display(),
                r + 1,
                row.len()
            )));
        }
        raw.extend(row);
    }
    if raw.len() != size * size {
        return Err(Error::Input(format!(
            "{}: expected {size} rows, found {}",
            path.display(),
            raw.len() / size.max(1)
        )));
    }
    normalize_confusion(size, &raw)
}

const TRIPLET_HEADER: [&str; 7] = [
    "base_class",
    "base_idx",
    "near_class",
    "near_idx",
    "far_class",
    "far_idx",
    "margin_class",
];

pub fn write_triplets_csv(
    path: &Path,
    samples: &[Sample],
    triplets: &[Triplet],
    provenance: Option<&Provenance>,
) -> Result<()> {
    let mut w = csv_writer(path, provenance)?;
    w.write_record(TRIPLET_HEADER)?;
    for t in triplets {
        let mut row = Vec::with_capacity(7);
        for i in [t.base, t.near, t.far] {
            let id = samples
                .get(i)
                .ok_or_else(|| Error::Input(format!("triplet refers to missing signal {i}")))?
                .id;
            row.push(id.class_id.to_string());
            row.push(id.sample_index.to_string());
        }
        row.push(t.margin.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads triplets and resolves their signal ids against `samples`.
pub fn read_triplets_csv(path: &Path, samples: &[Sample]) -> Result<Vec<Triplet>> {
    let index: HashMap<SignalId, usize> = samples.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    let mut reader = csv_reader(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != TRIPLET_HEADER {
        return Err(Error::Input(format!(
            "{}: expected header `{}`",
            path.display(),
            TRIPLET_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let row = row + 1;
        let mut idx = [0usize; 3];
        for (m, slot) in idx.iter_mut().enumerate() {
            let id = SignalId::new(
                parse_u32(&record[2 * m], "class", path, row)?,
                parse_u32(&record[2 * m + 1], "index", path, row)?,
            );
            *slot = *index.get(&id).ok_or_else(|| {
                Error::Input(format!("{}: row {row}: unknown signal {id}", path.display()))
            })?;
        }
        let margin: MarginClass = record[6]
            .parse()
            .map_err(|e| Error::Input(format!("{}: row {row}: {e}", path.display())))?;
        out.push(Triplet {
            base: idx[0],
            near: idx[1],
            far: idx[2],
            margin,
        });
    }
    Ok(out)
}

/// Writes a serialisable value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

/// Writes a plain CSV table with an optional provenance comment.
pub fn write_table_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let mut w = csv_writer(path, provenance)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
