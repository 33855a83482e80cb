use crate::agents::Backend;
use crate::corpus::NarrativeDocument;

use super::manifest::{RunManifest, SCHEMA_VERSION};
use super::{Pipeline, PipelineConfig, PipelineError, RunError};

/// Checks that `manifest` was produced from this config and document.
pub fn check_resumable(
    manifest: &RunManifest,
    doc: &NarrativeDocument,
    config: &PipelineConfig,
) -> Result<(), PipelineError> {
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(PipelineError::SchemaMismatch {
            expected: SCHEMA_VERSION,
            found: manifest.schema_version.to_string(),
        });
    }
    let config_hash = config.hash();
    if manifest.config_hash != config_hash || manifest.config.hash() != config_hash {
        return Err(PipelineError::ConfigDrift {
            what: "config",
            recorded: manifest.config_hash.clone(),
            current: config_hash,
        });
    }
    let doc_hash = doc.content_hash();
    if manifest.document.content_hash != doc_hash {
        return Err(PipelineError::ConfigDrift {
            what: "document",
            recorded: manifest.document.content_hash.clone(),
            current: doc_hash,
        });
    }
    Ok(())
}

impl Pipeline<'_> {
    /// Continues an interrupted run. Completed records are reused without
    /// calling the backend; the run id is kept.
    pub fn resume(&self, manifest: RunManifest, doc: &NarrativeDocument) -> Result<RunManifest, RunError> {
        self.config().validate()?;
        check_resumable(&manifest, doc, self.config())?;
        if manifest.is_complete() {
            return Ok(manifest);
        }
        self.drive(doc, manifest)
    }
}

/// [`Pipeline::resume`] with the backend named by the config.
pub fn resume(
    manifest: RunManifest,
    doc: &NarrativeDocument,
    config: &PipelineConfig,
) -> Result<RunManifest, RunError> {
    config.validate()?;
    check_resumable(&manifest, doc, config)?;
    let backend: Box<dyn Backend> = config.backend.build().map_err(PipelineError::Backend)?;
    Pipeline::new(config, backend.as_ref()).resume(manifest, doc)
}
