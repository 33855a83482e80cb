use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{BackendDescriptor, GenerationParams, StageConfig, StageKind};
use crate::chunker::ChunkSize;
use crate::hashing::canonical_hash;

use super::PipelineError;

fn default_scenes_per_chunk() -> usize {
    8
}

fn default_max_iterations() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_delta() -> ChunkSize {
    ChunkSize::Words(300)
}

fn default_stages() -> Vec<StageConfig> {
    [StageKind::Preprocess, StageKind::Summarize, StageKind::Compress]
        .map(StageConfig::new)
        .to_vec()
}

/// Everything that determines a run's output. Its canonical hash guards
/// resumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_scenes_per_chunk")]
    pub scenes_per_chunk: usize,
    /// Word budget per compression chunk.
    #[serde(default = "default_delta")]
    pub delta: ChunkSize,
    /// Lower bound on summary length; 0 disables it.
    #[serde(default)]
    pub theta: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_stages")]
    pub stages: Vec<StageConfig>,
    #[serde(default = "BackendDescriptor::mock_identity")]
    pub backend: BackendDescriptor,
    #[serde(default)]
    pub params: GenerationParams,
    #[serde(default = "default_true")]
    pub early_stop_on_stall: bool,
    /// Summarize the whole (preprocessed) text in one call instead of in
    /// scene chunks. This is the zero-shot baseline.
    #[serde(default)]
    pub single_chunk_summary: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scenes_per_chunk: default_scenes_per_chunk(),
            delta: default_delta(),
            theta: 0,
            max_iterations: default_max_iterations(),
            stages: default_stages(),
            backend: BackendDescriptor::mock_identity(),
            params: GenerationParams::default(),
            early_stop_on_stall: true,
            single_chunk_summary: false,
        }
    }
}

impl PipelineConfig {
    pub fn with_backend(mut self, backend: BackendDescriptor) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_stages<I, S>(mut self, stages: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<StageConfig>,
    {
        self.stages = stages.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_delta(mut self, delta: ChunkSize) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_theta(mut self, theta: usize) -> Self {
        self.theta = theta;
        self
    }

    pub fn hash(&self) -> String {
        canonical_hash(self)
    }

    pub fn stage(&self, kind: StageKind) -> Option<&StageConfig> {
        self.stages.iter().find(|s| s.stage == kind)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Config(m));
        if self.stages.is_empty() {
            return fail("at least one stage is required".into());
        }
        if self.scenes_per_chunk == 0 {
            return fail("scenes_per_chunk must be at least 1".into());
        }
        if self.max_iterations == 0 {
            return fail("max_iterations must be at least 1".into());
        }
        for pair in self.stages.windows(2) {
            if pair[0].stage.group() >= pair[1].stage.group() {
                return fail(format!(
                    "stage {} cannot follow {}; order is P, S, C, R with at most one of each",
                    pair[1].stage, pair[0].stage
                ));
            }
        }
        for stage in &self.stages {
            stage.validate().map_err(PipelineError::Config)?;
        }
        self.params.validate().map_err(PipelineError::Config)?;
        self.backend.validate().map_err(PipelineError::Config)?;
        Ok(())
    }
}

/// Benchmark presets for chunk size and length bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    BookSum,
    MovieSum,
    Mensa,
    SummScreenFd,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::BookSum, Preset::MovieSum, Preset::Mensa, Preset::SummScreenFd];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BookSum => "booksum",
            Preset::MovieSum => "moviesum",
            Preset::Mensa => "mensa",
            Preset::SummScreenFd => "summscreenfd",
        }
    }

    pub fn delta(self) -> ChunkSize {
        match self {
            Preset::SummScreenFd => ChunkSize::Unbounded,
            _ => ChunkSize::Words(300),
        }
    }

    pub fn theta(self) -> usize {
        match self {
            Preset::BookSum => 1300,
            Preset::MovieSum | Preset::Mensa => 900,
            Preset::SummScreenFd => 0,
        }
    }

    pub fn stages(self) -> Vec<StageConfig> {
        match self {
            // Few-shot stages need user-supplied exemplars before they validate.
            Preset::SummScreenFd => [StageKind::PreprocessCot, StageKind::SummarizeFewshot, StageKind::CompressFewshot]
                .map(StageConfig::new)
                .to_vec(),
            _ => default_stages(),
        }
    }

    pub fn config(self) -> PipelineConfig {
        PipelineConfig {
            delta: self.delta(),
            theta: self.theta(),
            stages: self.stages(),
            ..PipelineConfig::default()
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == lower)
            .ok_or_else(|| format!("unknown preset {s:?}; expected booksum, moviesum, mensa or summscreenfd"))
    }
}

/// Stage subsets used to measure each component's contribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    /// One summarization call over the whole document.
    ZeroShot,
    /// Preprocess, then one summarization call over the result.
    PreprocessZeroShot,
    PreprocessSummarize,
    SummarizeCompress,
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::ZeroShot,
        Ablation::PreprocessZeroShot,
        Ablation::PreprocessSummarize,
        Ablation::SummarizeCompress,
        Ablation::Full,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::ZeroShot => "Zero-Shot",
            Ablation::PreprocessZeroShot => "P + Zero-Shot",
            Ablation::PreprocessSummarize => "P + S",
            Ablation::SummarizeCompress => "S + C",
            Ablation::Full => "P + S + C",
        }
    }

    /// Rewrites `base` to run only this subset.
    pub fn apply(self, base: &PipelineConfig) -> PipelineConfig {
        use StageKind::*;
        let (stages, single): (&[StageKind], bool) = match self {
            Ablation::ZeroShot => (&[Summarize], true),
            Ablation::PreprocessZeroShot => (&[Preprocess, Summarize], true),
            Ablation::PreprocessSummarize => (&[Preprocess, Summarize], false),
            Ablation::SummarizeCompress => (&[Summarize, Compress], false),
            Ablation::Full => (&[Preprocess, Summarize, Compress], false),
        };
        PipelineConfig {
            stages: stages.iter().map(|&k| StageConfig::new(k)).collect(),
            single_chunk_summary: single,
            ..base.clone()
        }
    }
}
