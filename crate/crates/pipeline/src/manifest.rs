//! Dataset manifests and CSV ingestion.
//!
//! A manifest is a JSON file listing one CSV per subject. Each CSV has the
//! header `ch0,..,chN,label,repetition` and one row per sample; the sample
//! rate lives in the manifest, not the file. Relative CSV paths resolve
//! against the manifest's directory.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use srnr_core::signal::RawRecording;

use crate::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DatasetManifest {
    pub subjects: Vec<SubjectEntry>,
    /// When present, any row whose label is not in this set is a data error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_labels: Option<Vec<u16>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SubjectEntry {
    pub subject_id: u32,
    pub csv_path: PathBuf,
    pub sample_rate_hz: f64,
    pub channels: usize,
}

/// One loaded subject plus its label census.
#[derive(Debug, Clone)]
pub struct IngestedSubject {
    pub recording: RawRecording,
    /// Per-gesture-class sample counts.
    pub class_sample_counts: BTreeMap<u16, usize>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            PipelineError::Data(format!("cannot read manifest {}: {e}", path.display()))
        })?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Data(format!("bad manifest {}: {e}", path.display())))?;
        if manifest.subjects.is_empty() {
            return Err(PipelineError::Data(format!(
                "manifest {} lists no subjects",
                path.display()
            )));
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| {
            PipelineError::Data(format!("cannot write manifest {}: {e}", path.display()))
        })
    }
}

/// Loads and validates every subject in the manifest. `base_dir` anchors
/// relative CSV paths (normally the manifest's parent directory).
pub fn ingest_dataset(
    manifest: &DatasetManifest,
    base_dir: &Path,
) -> Result<Vec<IngestedSubject>, PipelineError> {
    manifest
        .subjects
        .iter()
        .map(|entry| {
            let path = if entry.csv_path.is_absolute() {
                entry.csv_path.clone()
            } else {
                base_dir.join(&entry.csv_path)
            };
            load_subject_csv(&path, entry, manifest.allowed_labels.as_deref())
        })
        .collect()
}

fn load_subject_csv(
    path: &Path,
    entry: &SubjectEntry,
    allowed_labels: Option<&[u16]>,
) -> Result<IngestedSubject, PipelineError> {
    let file = path.display();
    if entry.sample_rate_hz <= 0.0 {
        return Err(PipelineError::Data(format!(
            "{file}: sample rate must be positive, got {}",
            entry.sample_rate_hz
        )));
    }
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| PipelineError::Data(format!("cannot open {file}: {e}")))?;

    // Validate the header: ch0..chN, label, repetition.
    let headers = reader
        .headers()
        .map_err(|e| PipelineError::Data(format!("{file}: {e}")))?
        .clone();
    let expected: Vec<String> = (0..entry.channels)
        .map(|c| format!("ch{c}"))
        .chain(["label".into(), "repetition".into()])
        .collect();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        let missing = expected
            .iter()
            .find(|col| !got.contains(&col.as_str()))
            .cloned()
            .unwrap_or_else(|| format!("{} unexpected columns", got.len()));
        return Err(PipelineError::Data(format!(
            "{file}: header mismatch (expected {} channel columns then label,repetition; problem near column '{missing}')",
            entry.channels
        )));
    }

    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); entry.channels];
    let mut gesture_label = Vec::new();
    let mut repetition_id = Vec::new();
    let mut bad_label_rows: Vec<usize> = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| PipelineError::Data(format!("{file} row {}: {e}", row_idx + 2)))?;
        let parse_f64 = |col: usize, name: &str| -> Result<f64, PipelineError> {
            record[col].trim().parse::<f64>().map_err(|e| {
                PipelineError::Data(format!("{file} row {} column '{name}': {e}", row_idx + 2))
            })
        };
        for (c, channel) in samples.iter_mut().enumerate() {
            channel.push(parse_f64(c, &format!("ch{c}"))?);
        }
        let label = record[entry.channels].trim().parse::<u16>().map_err(|e| {
            PipelineError::Data(format!("{file} row {} column 'label': {e}", row_idx + 2))
        })?;
        let rep = record[entry.channels + 1]
            .trim()
            .parse::<u16>()
            .map_err(|e| {
                PipelineError::Data(format!(
                    "{file} row {} column 'repetition': {e}",
                    row_idx + 2
                ))
            })?;
        if let Some(allowed) = allowed_labels {
            if !allowed.contains(&label) && bad_label_rows.len() < 20 {
                bad_label_rows.push(row_idx + 2);
            }
        }
        gesture_label.push(label);
        repetition_id.push(rep);
    }

    if gesture_label.is_empty() {
        return Err(PipelineError::Data(format!("{file}: no sample rows")));
    }
    if !bad_label_rows.is_empty() {
        return Err(PipelineError::Data(format!(
            "{file}: unknown class ids at rows {bad_label_rows:?}"
        )));
    }

    let mut class_sample_counts = BTreeMap::new();
    for &label in &gesture_label {
        *class_sample_counts.entry(label).or_insert(0) += 1;
    }

    let recording = RawRecording::new(
        samples,
        entry.sample_rate_hz,
        gesture_label,
        repetition_id,
        entry.subject_id,
    )
    .map_err(|e| PipelineError::Data(format!("{file}: {e}")))?;

    Ok(IngestedSubject {
        recording,
        class_sample_counts,
    })
}

/// Writes a recording in the manifest CSV format.
pub fn write_subject_csv(recording: &RawRecording, path: &Path) -> Result<(), PipelineError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| PipelineError::Data(format!("cannot write {}: {e}", path.display())))?;
    let header: Vec<String> = (0..recording.num_channels())
        .map(|c| format!("ch{c}"))
        .chain(["label".into(), "repetition".into()])
        .collect();
    writer
        .write_record(&header)
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    for t in 0..recording.len() {
        let mut row: Vec<String> = recording
            .samples
            .iter()
            .map(|ch| format!("{:.6}", ch[t]))
            .collect();
        row.push(recording.gesture_label[t].to_string());
        row.push(recording.repetition_id[t].to_string());
        writer
            .write_record(&row)
            .map_err(|e| PipelineError::Data(e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| PipelineError::Data(e.to_string()))
}
