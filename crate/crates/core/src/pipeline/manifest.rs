//! The run manifest: configuration snapshot, per-stage trace and the
//! selected summary, persisted as one JSON document.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::StageKind;
use crate::corpus::{Medium, NarrativeDocument};

use super::{PipelineConfig, PipelineError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    /// The compression input was already at or under θ; no compressor call.
    InitialBelowTheta,
    /// `S_i` fell under θ, so `S_{i-1}` is the result.
    BelowThetaPreviousReturned,
    /// `S_i` was no shorter than `S_{i-1}`.
    Stalled,
    MaxIterations,
    /// The compressor returned nothing; `S_{i-1}` is the result.
    EmptyOutput,
}

impl fmt::Display for HaltReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HaltReason::InitialBelowTheta => "initial_below_theta",
            HaltReason::BelowThetaPreviousReturned => "below_theta_previous_returned",
            HaltReason::Stalled => "stalled",
            HaltReason::MaxIterations => "max_iterations",
            HaltReason::EmptyOutput => "empty_output",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: StageKind,
    /// Compression iteration (1-based); 0 for the other stages.
    pub iteration: usize,
    pub chunk_count: usize,
    pub per_chunk_outputs: Vec<String>,
    pub output_text: String,
    pub output_word_count: usize,
    pub calls_made: usize,
    pub wall_time_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentInfo {
    pub id: String,
    pub medium: Medium,
    pub content_hash: String,
    pub word_count: usize,
    pub scene_count: usize,
}

impl DocumentInfo {
    pub fn of(doc: &NarrativeDocument) -> Self {
        Self {
            id: doc.id.clone(),
            medium: doc.medium,
            content_hash: doc.content_hash(),
            word_count: doc.word_count(),
            scene_count: doc.scenes.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed { error: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub calls: usize,
    pub wall_time_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub run_id: String,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub document: DocumentInfo,
    pub status: RunStatus,
    pub records: Vec<StageRecord>,
    /// Index into `records` of the output chosen as the final summary.
    pub selected_record: Option<usize>,
    pub final_summary: Option<String>,
    /// Set when compression ran.
    pub halt_reason: Option<HaltReason>,
    pub iterations_used: usize,
    pub totals: Totals,
}

impl RunManifest {
    pub fn new(config: &PipelineConfig, doc: &NarrativeDocument) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            run_id: uuid::Uuid::new_v4().to_string(),
            config_hash: config.hash(),
            config: config.clone(),
            document: DocumentInfo::of(doc),
            status: RunStatus::Running,
            records: Vec::new(),
            selected_record: None,
            final_summary: None,
            halt_reason: None,
            iterations_used: 0,
            totals: Totals::default(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    pub fn final_word_count(&self) -> Option<usize> {
        self.final_summary.as_deref().map(crate::corpus::word_count)
    }

    /// Records of one stage group, e.g. every compression iteration.
    pub fn records_of(&self, pred: impl Fn(StageKind) -> bool) -> impl Iterator<Item = &StageRecord> {
        self.records.iter().filter(move |r| pred(r.stage))
    }

    pub(crate) fn recompute_totals(&mut self) {
        self.totals = Totals {
            calls: self.records.iter().map(|r| r.calls_made).sum(),
            wall_time_us: self.records.iter().map(|r| r.wall_time_us).sum(),
        };
    }

    /// Copy with run id and timings cleared, for comparing two runs.
    pub fn without_run_specifics(&self) -> Self {
        let mut m = self.clone();
        m.run_id.clear();
        m.totals.wall_time_us = 0;
        for r in &mut m.records {
            r.wall_time_us = 0;
        }
        m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest always serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| PipelineError::Manifest(e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            found => {
                return Err(PipelineError::SchemaMismatch {
                    expected: SCHEMA_VERSION,
                    found: found.map(|v| v.to_string()).unwrap_or_else(|| "none".into()),
                })
            }
        }
        serde_json::from_value(value).map_err(|e| PipelineError::Manifest(e.to_string()))
    }
}

/// Writes the manifest through a temporary sibling file and a rename, so a
/// reader never sees a half-written manifest.
pub fn persist_manifest(manifest: &RunManifest, path: &Path) -> Result<(), PipelineError> {
    let io = |e: std::io::Error| PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = PathBuf::from(path);
    tmp.set_extension(format!("tmp-{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(manifest.to_json().as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    RunManifest::from_json(&text)
}
