//! Preset < config file < flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::agents::{BackendDescriptor, BackendKind, GenerationParams, StageConfig, StageKind};
use crate::chunker::ChunkSize;
use crate::corpus::Medium;
use crate::pipeline::{PipelineConfig, Preset};

use super::{read_text, CliError, PipelineFlags};

/// The JSON config file: pipeline fields plus input, medium and output
/// directory. Credentials appear only as an environment variable name
/// inside `backend.api_key_env`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub input: Option<PathBuf>,
    pub medium: Option<Medium>,
    pub out: Option<PathBuf>,
    pub scenes_per_chunk: Option<usize>,
    pub delta: Option<ChunkSize>,
    pub theta: Option<usize>,
    pub max_iterations: Option<usize>,
    pub stages: Option<Vec<StageConfig>>,
    pub backend: Option<BackendDescriptor>,
    pub params: Option<GenerationParams>,
    pub early_stop_on_stall: Option<bool>,
    pub single_chunk_summary: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path).map_err(|e| CliError::config(e.message))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: PipelineConfig,
    pub input: Option<PathBuf>,
    pub medium: Medium,
    pub out: Option<PathBuf>,
}

/// Layers the preset, the config file named by `flags.config` and the
/// flags themselves.
pub fn resolve(flags: &PipelineFlags) -> Result<Resolved, CliError> {
    let file = match &flags.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    resolve_with(flags, &file)
}

pub fn resolve_with(flags: &PipelineFlags, file: &ConfigFile) -> Result<Resolved, CliError> {
    let file_preset = file
        .preset
        .as_deref()
        .map(str::parse::<Preset>)
        .transpose()
        .map_err(CliError::config)?;
    let mut c = flags
        .preset
        .or(file_preset)
        .map(Preset::config)
        .unwrap_or_default();

    macro_rules! layer {
        ($($field:ident),*) => {$(
            if let Some(v) = file.$field.clone() { c.$field = v; }
            if let Some(v) = flags.$field.clone() { c.$field = v; }
        )*};
    }
    layer!(scenes_per_chunk, delta, theta, max_iterations, early_stop_on_stall, single_chunk_summary);

    if let Some(stages) = &file.stages {
        c.stages = stages.clone();
    }
    if let Some(kinds) = &flags.stages {
        c.stages = kinds.iter().map(|&k| StageConfig::new(k)).collect();
    }
    if let Some(path) = &flags.fewshot {
        apply_fewshot(&mut c.stages, path)?;
    }

    if let Some(p) = file.params {
        c.params = p;
    }
    if let Some(v) = flags.temperature {
        c.params.temperature = v;
    }
    if let Some(v) = flags.top_p {
        c.params.top_p = v;
    }
    if let Some(v) = flags.seed {
        c.params.seed = v;
    }
    if let Some(v) = flags.max_output_tokens {
        c.params.max_output_tokens = v;
    }

    if let Some(b) = &file.backend {
        c.backend = b.clone();
    }
    if let Some(spec) = &flags.backend {
        let retry = c.backend.retry;
        c.backend = BackendDescriptor::parse_short(spec).map_err(CliError::config)?;
        c.backend.retry = retry;
    }
    apply_http_flags(&mut c.backend, flags)?;
    if let Some(n) = flags.max_in_flight {
        c.backend.max_in_flight = n;
    }

    Ok(Resolved {
        config: c,
        input: flags.input.clone().or_else(|| file.input.clone()),
        medium: flags.medium.or(file.medium).unwrap_or_default(),
        out: flags.out.clone().or_else(|| file.out.clone()),
    })
}

fn apply_http_flags(backend: &mut BackendDescriptor, flags: &PipelineFlags) -> Result<(), CliError> {
    let any = flags.endpoint.is_some() || flags.model.is_some() || flags.api_key_env.is_some();
    match &mut backend.kind {
        BackendKind::Http {
            endpoint,
            model,
            api_key_env,
        } => {
            if let Some(v) = &flags.endpoint {
                *endpoint = v.clone();
            }
            if let Some(v) = &flags.model {
                *model = v.clone();
            }
            if let Some(v) = &flags.api_key_env {
                *api_key_env = Some(v.clone());
            }
            Ok(())
        }
        _ if any => Err(CliError::config("--endpoint, --model and --api-key-env need the http backend")),
        _ => Ok(()),
    }
}

fn apply_fewshot(stages: &mut [StageConfig], path: &Path) -> Result<(), CliError> {
    let text = read_text(path).map_err(|e| CliError::config(e.message))?;
    let examples: BTreeMap<StageKind, Vec<String>> =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    for (kind, list) in examples {
        let stage = stages
            .iter_mut()
            .find(|s| s.stage == kind)
            .ok_or_else(|| CliError::config(format!("{}: stage {kind} is not in the pipeline", path.display())))?;
        stage.fewshot_examples = list;
    }
    Ok(())
}
