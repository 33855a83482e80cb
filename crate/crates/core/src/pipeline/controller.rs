//! Stage orchestration and the length-controlled compression loop.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::agents::{run_stage, Backend, GenerationParams, StageConfig, StageGroup, StageKind, StageOutput};
use crate::chunker::{chunk_by_scenes, chunk_by_sentences, ChunkSize};
use crate::corpus::{word_count, NarrativeDocument};

use super::manifest::{persist_manifest, HaltReason, RunManifest, RunStatus, StageRecord};
use super::{PipelineConfig, PipelineError, RunError};

/// Knobs of the compression loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressionSettings {
    pub delta: ChunkSize,
    pub theta: usize,
    pub max_iterations: usize,
    pub early_stop_on_stall: bool,
}

impl From<&PipelineConfig> for CompressionSettings {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            delta: c.delta,
            theta: c.theta,
            max_iterations: c.max_iterations,
            early_stop_on_stall: c.early_stop_on_stall,
        }
    }
}

/// Where the loop stopped. `selected` indexes the iterates (0 is `S_1`);
/// `None` means the input itself was kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaltDecision {
    pub selected: Option<usize>,
    pub iterations_used: usize,
    pub halt_reason: HaltReason,
}

/// Runs the halting rule over iterates produced by `step(i, S_{i-1})`.
fn compress_loop<E>(
    s0: &str,
    settings: &CompressionSettings,
    mut step: impl FnMut(usize, &str) -> Result<String, E>,
) -> Result<HaltDecision, E> {
    let theta = settings.theta;
    let mut prev_wc = word_count(s0);
    if theta > 0 && prev_wc <= theta {
        return Ok(HaltDecision {
            selected: None,
            iterations_used: 0,
            halt_reason: HaltReason::InitialBelowTheta,
        });
    }
    let mut prev = s0.to_string();
    let mut selected = None;
    for i in 1..=settings.max_iterations {
        let out = step(i, &prev)?;
        let wc = word_count(&out);
        let halt = |selected, halt_reason| {
            Ok(HaltDecision {
                selected,
                iterations_used: i,
                halt_reason,
            })
        };
        if wc == 0 {
            return halt(selected, HaltReason::EmptyOutput);
        }
        if wc < theta {
            return halt(selected, HaltReason::BelowThetaPreviousReturned);
        }
        selected = Some(i - 1);
        if settings.early_stop_on_stall && wc >= prev_wc {
            return halt(selected, HaltReason::Stalled);
        }
        prev = out;
        prev_wc = wc;
    }
    Ok(HaltDecision {
        selected,
        iterations_used: settings.max_iterations,
        halt_reason: HaltReason::MaxIterations,
    })
}

fn sentence_chunks(text: &str, delta: ChunkSize) -> Vec<String> {
    chunk_by_sentences(text, delta).iter().map(|c| c.text()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressionOutcome {
    pub final_summary: String,
    pub iterations_used: usize,
    pub halt_reason: HaltReason,
    /// Every iterate, including one discarded by the θ rule.
    pub iterates: Vec<StageOutput>,
}

/// Compresses `s0` repeatedly: each iterate re-chunks the previous one by
/// sentences under `delta` and runs the compressor over the chunks.
pub fn iterative_compress(
    s0: &str,
    settings: &CompressionSettings,
    cfg: &StageConfig,
    backend: &dyn Backend,
    params: &GenerationParams,
) -> Result<CompressionOutcome, PipelineError> {
    if settings.max_iterations == 0 {
        return Err(PipelineError::Config("max_iterations must be at least 1".into()));
    }
    if s0.trim().is_empty() {
        return Err(PipelineError::EmptyOutput { stage: cfg.stage });
    }
    let mut iterates = Vec::new();
    let decision = compress_loop(s0, settings, |iteration, input| {
        let out = run_stage(&sentence_chunks(input, settings.delta), cfg, backend, params).map_err(|source| {
            PipelineError::Stage {
                stage: cfg.stage,
                iteration,
                source,
            }
        })?;
        let text = out.output_text.clone();
        iterates.push(out);
        Ok::<_, PipelineError>(text)
    })?;
    let final_summary = match decision.selected {
        Some(i) => iterates[i].output_text.clone(),
        None => s0.to_string(),
    };
    Ok(CompressionOutcome {
        final_summary,
        iterations_used: decision.iterations_used,
        halt_reason: decision.halt_reason,
        iterates,
    })
}

/// Runs a configuration against a backend, optionally persisting the
/// manifest after every stage.
pub struct Pipeline<'a> {
    config: &'a PipelineConfig,
    backend: &'a dyn Backend,
    manifest_path: Option<PathBuf>,
}

impl<'a> Pipeline<'a> {
    /// Uses `backend` for every call; `config.backend` is only recorded.
    pub fn new(config: &'a PipelineConfig, backend: &'a dyn Backend) -> Self {
        Self {
            config,
            backend,
            manifest_path: None,
        }
    }

    pub fn persist_to(mut self, path: impl AsRef<Path>) -> Self {
        self.manifest_path = Some(path.as_ref().to_path_buf());
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        self.config
    }

    pub fn run(&self, doc: &NarrativeDocument) -> Result<RunManifest, RunError> {
        self.config.validate()?;
        self.drive(doc, RunManifest::new(self.config, doc))
    }

    /// Continues `manifest`, reusing its records instead of calling the
    /// backend again. Records must match what this config would produce.
    pub(crate) fn drive(&self, doc: &NarrativeDocument, mut m: RunManifest) -> Result<RunManifest, RunError> {
        m.status = RunStatus::Running;
        m.selected_record = None;
        m.final_summary = None;
        m.halt_reason = None;
        m.iterations_used = 0;
        match self.execute(doc, &mut m) {
            Ok(()) => {
                m.status = RunStatus::Complete;
                m.recompute_totals();
                match self.save(&m) {
                    Ok(()) => Ok(m),
                    Err(error) => Err(RunError {
                        error,
                        manifest: Some(Box::new(m)),
                    }),
                }
            }
            Err(error) => {
                m.status = RunStatus::Failed {
                    error: error.to_string(),
                };
                m.recompute_totals();
                // The original failure matters more than a failed save.
                let _ = self.save(&m);
                Err(RunError {
                    error,
                    manifest: Some(Box::new(m)),
                })
            }
        }
    }

    fn save(&self, m: &RunManifest) -> Result<(), PipelineError> {
        match &self.manifest_path {
            Some(path) => persist_manifest(m, path),
            None => Ok(()),
        }
    }

    /// Replays the record at `*cursor` if there is one, otherwise runs the
    /// stage and appends a record. Returns the record index.
    fn step(
        &self,
        m: &mut RunManifest,
        cursor: &mut usize,
        cfg: &StageConfig,
        iteration: usize,
        chunks: Vec<String>,
    ) -> Result<usize, PipelineError> {
        let index = *cursor;
        *cursor += 1;
        if let Some(existing) = m.records.get(index) {
            if existing.stage != cfg.stage || existing.iteration != iteration {
                return Err(PipelineError::Manifest(format!(
                    "record {index} is {} iteration {}, expected {} iteration {iteration}",
                    existing.stage, existing.iteration, cfg.stage
                )));
            }
            return Ok(index);
        }
        let started = Instant::now();
        let out = run_stage(&chunks, cfg, self.backend, &self.config.params).map_err(|source| {
            PipelineError::Stage {
                stage: cfg.stage,
                iteration,
                source,
            }
        })?;
        let wall_time_us = started.elapsed().as_micros().min(u128::from(u64::MAX)) as u64;
        m.records.push(StageRecord {
            stage: cfg.stage,
            iteration,
            chunk_count: chunks.len(),
            output_word_count: word_count(&out.output_text),
            output_text: out.output_text,
            per_chunk_outputs: out.per_chunk_outputs,
            calls_made: out.calls_made,
            wall_time_us,
        });
        m.recompute_totals();
        self.save(m)?;
        Ok(index)
    }

    fn execute(&self, doc: &NarrativeDocument, m: &mut RunManifest) -> Result<(), PipelineError> {
        let config = self.config;
        let stage_of = |g: StageGroup| config.stages.iter().find(|s| s.stage.group() == g);
        let mut cursor = 0;
        // Scene-structured input for the next scene-chunked stage.
        let mut scene_doc = doc.clone();
        let mut selected: Option<usize> = None;

        if let Some(cfg) = stage_of(StageGroup::Preprocess) {
            let chunks = scene_texts(&scene_doc, config.scenes_per_chunk)?;
            let idx = self.step(m, &mut cursor, cfg, 0, chunks)?;
            scene_doc = reingest(&m.records[idx].output_text, doc, cfg.stage)?;
            selected = Some(idx);
        }
        if let Some(cfg) = stage_of(StageGroup::Summarize) {
            let chunks = if config.single_chunk_summary {
                vec![scene_doc.body().to_string()]
            } else {
                scene_texts(&scene_doc, config.scenes_per_chunk)?
            };
            let idx = self.step(m, &mut cursor, cfg, 0, chunks)?;
            selected = Some(idx);
        }
        let text_of = |m: &RunManifest, sel: Option<usize>| match sel {
            Some(i) => m.records[i].output_text.clone(),
            None => doc.body().to_string(),
        };
        if let Some(cfg) = stage_of(StageGroup::Compress) {
            let s0 = text_of(m, selected);
            if s0.trim().is_empty() {
                return Err(PipelineError::EmptyOutput {
                    stage: m.records[selected.unwrap_or(0)].stage,
                });
            }
            let settings = CompressionSettings::from(config);
            let mut iterate_records = Vec::new();
            let decision = compress_loop(&s0, &settings, |iteration, input| {
                let idx = self.step(m, &mut cursor, cfg, iteration, sentence_chunks(input, settings.delta))?;
                iterate_records.push(idx);
                Ok::<_, PipelineError>(m.records[idx].output_text.clone())
            })?;
            if let Some(i) = decision.selected {
                selected = Some(iterate_records[i]);
            }
            m.halt_reason = Some(decision.halt_reason);
            m.iterations_used = decision.iterations_used;
        }
        if let Some(cfg) = stage_of(StageGroup::Reflect) {
            let summary = text_of(m, selected);
            if summary.trim().is_empty() {
                return Err(PipelineError::EmptyOutput { stage: cfg.stage });
            }
            selected = Some(self.step(m, &mut cursor, cfg, 0, vec![summary])?);
        }
        if cursor != m.records.len() {
            return Err(PipelineError::Manifest(format!(
                "manifest has {} records but the run produced {cursor}",
                m.records.len()
            )));
        }
        m.selected_record = selected;
        m.final_summary = Some(text_of(m, selected));
        Ok(())
    }
}

fn scene_texts(doc: &NarrativeDocument, scenes_per_chunk: usize) -> Result<Vec<String>, PipelineError> {
    Ok(chunk_by_scenes(doc, scenes_per_chunk)?
        .into_iter()
        .map(|c| c.text)
        .collect())
}

/// Segments a stage output into scenes again, keeping the source's id and
/// medium.
fn reingest(text: &str, source: &NarrativeDocument, stage: StageKind) -> Result<NarrativeDocument, PipelineError> {
    NarrativeDocument::ingest(text, source.medium)
        .map(|d| d.with_id(source.id.clone()))
        .map_err(|_| PipelineError::EmptyOutput { stage })
}

/// Runs `config` with the backend its descriptor names.
pub fn run_pipeline(doc: &NarrativeDocument, config: &PipelineConfig) -> Result<RunManifest, RunError> {
    config.validate()?;
    let backend = config.backend.build().map_err(PipelineError::Backend)?;
    Pipeline::new(config, backend.as_ref()).run(doc)
}
