//! Stage executors: one model call (two for the chain-of-thought
//! preprocessor) per chunk, outputs concatenated in chunk order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::backend::{Backend, BackendError, CompletionRequest, GenerationParams};
use super::template::{PromptTemplate, TemplateError};

/// Separator between per-chunk outputs.
pub const CHUNK_JOINER: &str = "\n\n";

/// The slot every builtin template uses for the chunk text.
pub const INPUT_SLOT: &str = "input";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StageKind {
    Preprocess,
    PreprocessCot,
    Summarize,
    SummarizeFewshot,
    Compress,
    CompressFewshot,
    Reflect,
}

/// Position in the fixed P → S → C → R order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageGroup {
    Preprocess,
    Summarize,
    Compress,
    Reflect,
}

impl StageKind {
    pub const ALL: [StageKind; 7] = [
        StageKind::Preprocess,
        StageKind::PreprocessCot,
        StageKind::Summarize,
        StageKind::SummarizeFewshot,
        StageKind::Compress,
        StageKind::CompressFewshot,
        StageKind::Reflect,
    ];

    pub fn code(self) -> &'static str {
        match self {
            StageKind::Preprocess => "P",
            StageKind::PreprocessCot => "P_cot",
            StageKind::Summarize => "S",
            StageKind::SummarizeFewshot => "S_fewshot",
            StageKind::Compress => "C",
            StageKind::CompressFewshot => "C_fewshot",
            StageKind::Reflect => "R",
        }
    }

    pub fn group(self) -> StageGroup {
        match self {
            StageKind::Preprocess | StageKind::PreprocessCot => StageGroup::Preprocess,
            StageKind::Summarize | StageKind::SummarizeFewshot => StageGroup::Summarize,
            StageKind::Compress | StageKind::CompressFewshot => StageGroup::Compress,
            StageKind::Reflect => StageGroup::Reflect,
        }
    }

    pub fn is_fewshot(self) -> bool {
        matches!(self, StageKind::SummarizeFewshot | StageKind::CompressFewshot)
    }

    pub fn builtin_template(self) -> PromptTemplate {
        let (name, source) = match self {
            StageKind::Preprocess => ("preprocess", include_str!("../../templates/preprocess.txt")),
            StageKind::PreprocessCot => ("preprocess_cot", include_str!("../../templates/preprocess_cot.txt")),
            StageKind::Summarize => ("summarize", include_str!("../../templates/summarize.txt")),
            StageKind::SummarizeFewshot => {
                ("summarize_fewshot", include_str!("../../templates/summarize_fewshot.txt"))
            }
            StageKind::Compress => ("compress", include_str!("../../templates/compress.txt")),
            StageKind::CompressFewshot => ("compress_fewshot", include_str!("../../templates/compress_fewshot.txt")),
            StageKind::Reflect => ("reflect", include_str!("../../templates/reflect.txt")),
        };
        let template = PromptTemplate::parse(name, source).expect("builtin templates are well-formed");
        if self == StageKind::PreprocessCot {
            template.with_carry(["strategy"])
        } else {
            template
        }
    }

    /// Heading the output format asks the model to print first; removed
    /// from responses so it does not count toward summary length.
    fn output_heading(self) -> Option<&'static str> {
        match self.group() {
            StageGroup::Summarize => Some("# Summary"),
            StageGroup::Compress => Some("### Meta Summary"),
            _ => None,
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for StageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim();
        StageKind::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| format!("unknown stage {s:?} (expected one of P, P_cot, S, S_fewshot, C, C_fewshot, R)"))
    }
}

impl Serialize for StageKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for StageKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A stage plus its prompt. `template` overrides the builtin one.
///
/// Few-shot stages take their exemplars in `fewshot_examples`: for
/// `S_fewshot` one summary per example slot; for `C_fewshot` alternating
/// previous-summary / meta-summary pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StageConfigRepr")]
pub struct StageConfig {
    pub stage: StageKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<PromptTemplate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fewshot_examples: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StageConfigRepr {
    Code(StageKind),
    Full {
        stage: StageKind,
        #[serde(default)]
        template: Option<PromptTemplate>,
        #[serde(default)]
        fewshot_examples: Vec<String>,
    },
}

impl TryFrom<StageConfigRepr> for StageConfig {
    type Error = String;

    fn try_from(r: StageConfigRepr) -> Result<Self, Self::Error> {
        Ok(match r {
            StageConfigRepr::Code(stage) => StageConfig::new(stage),
            StageConfigRepr::Full {
                stage,
                template,
                fewshot_examples,
            } => StageConfig {
                stage,
                template,
                fewshot_examples,
            },
        })
    }
}

impl From<StageKind> for StageConfig {
    fn from(stage: StageKind) -> Self {
        StageConfig::new(stage)
    }
}

impl StageConfig {
    pub fn new(stage: StageKind) -> Self {
        Self {
            stage,
            template: None,
            fewshot_examples: Vec::new(),
        }
    }

    pub fn with_examples<I, S>(mut self, examples: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.fewshot_examples = examples.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = Some(template);
        self
    }

    pub fn template(&self) -> PromptTemplate {
        self.template.clone().unwrap_or_else(|| self.stage.builtin_template())
    }

    fn fewshot_bindings(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        match self.stage {
            StageKind::SummarizeFewshot => {
                for (i, ex) in self.fewshot_examples.iter().enumerate() {
                    out.insert(format!("example_output_{}", i + 1), ex.clone());
                }
            }
            StageKind::CompressFewshot => {
                for (i, pair) in self.fewshot_examples.chunks(2).enumerate() {
                    out.insert(format!("example_input_{}", i + 1), pair[0].clone());
                    if let Some(output) = pair.get(1) {
                        out.insert(format!("example_output_{}", i + 1), output.clone());
                    }
                }
            }
            _ => {}
        }
        out
    }

    /// Checks the exemplar rule and that every call of the template
    /// renders with the bindings this stage will supply.
    pub fn validate(&self) -> Result<(), String> {
        let fewshot = self.stage.is_fewshot();
        if fewshot && self.fewshot_examples.is_empty() {
            return Err(format!("stage {} needs few-shot examples", self.stage));
        }
        if !fewshot && !self.fewshot_examples.is_empty() {
            return Err(format!("stage {} does not take few-shot examples", self.stage));
        }
        if self.stage == StageKind::CompressFewshot && !self.fewshot_examples.len().is_multiple_of(2) {
            return Err("C_fewshot examples must come in input/output pairs".into());
        }
        let template = self.template();
        let mut bindings = self.fewshot_bindings();
        bindings.insert(INPUT_SLOT.to_string(), String::new());
        for name in template.carry() {
            bindings.insert(name.clone(), String::new());
        }
        let template_slots = template.required_placeholders();
        if let Some(extra) = bindings.keys().find(|k| !template_slots.contains(*k)) {
            return Err(format!(
                "stage {}: template {} has no slot for {extra:?}",
                self.stage,
                template.name()
            ));
        }
        if let Some(missing) = template_slots.iter().find(|k| !bindings.contains_key(*k)) {
            return Err(format!(
                "stage {}: nothing binds slot {{{{{missing}}}}} of template {}",
                self.stage,
                template.name()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error("stage received no chunks")]
    EmptyInput,
    #[error("invalid stage configuration: {0}")]
    InvalidConfig(String),
    #[error("template error in chunk {chunk_index}: {source}")]
    Template {
        chunk_index: usize,
        #[source]
        source: TemplateErrorBox,
    },
    #[error("chunk {chunk_index}, call {call_index}: {source}")]
    Backend {
        chunk_index: usize,
        call_index: usize,
        #[source]
        source: BackendError,
    },
}

/// `TemplateError` wrapper so `StageError` stays `Clone`.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct TemplateErrorBox(pub String);

impl From<TemplateError> for TemplateErrorBox {
    fn from(e: TemplateError) -> Self {
        TemplateErrorBox(e.to_string())
    }
}

impl StageError {
    pub fn backend_error(&self) -> Option<&BackendError> {
        match self {
            StageError::Backend { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutput {
    pub output_text: String,
    pub per_chunk_outputs: Vec<String>,
    pub calls_made: usize,
}

/// Runs `cfg` over every chunk and joins the outputs with a blank line.
///
/// Chunks fan out over up to `backend.max_in_flight()` worker threads; the
/// output order is always chunk order. Any failed chunk fails the stage;
/// the reported error is the failing chunk with the lowest index.
pub fn run_stage(
    chunks: &[String],
    cfg: &StageConfig,
    backend: &dyn Backend,
    params: &GenerationParams,
) -> Result<StageOutput, StageError> {
    if chunks.is_empty() {
        return Err(StageError::EmptyInput);
    }
    cfg.validate().map_err(StageError::InvalidConfig)?;
    let template = cfg.template();
    let base_bindings = cfg.fewshot_bindings();

    let workers = backend.max_in_flight().clamp(1, chunks.len());
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    type Slot = Mutex<Option<Result<(String, usize), StageError>>>;
    let results: Vec<Slot> = chunks.iter().map(|_| Mutex::new(None)).collect();

    let work = || loop {
        if abort.load(Ordering::SeqCst) {
            break;
        }
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= chunks.len() {
            break;
        }
        let result = run_chunk(i, &chunks[i], cfg.stage, &template, &base_bindings, backend, params);
        if result.is_err() {
            abort.store(true, Ordering::SeqCst);
        }
        *results[i].lock().expect("result slot poisoned") = Some(result);
    };

    if workers == 1 {
        work();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(work);
            }
        });
    }

    let mut per_chunk_outputs = Vec::with_capacity(chunks.len());
    let mut calls_made = 0;
    let mut first_error = None;
    for slot in results {
        match slot.into_inner().expect("result slot poisoned") {
            Some(Ok((text, calls))) => {
                per_chunk_outputs.push(text);
                calls_made += calls;
            }
            Some(Err(e)) => {
                first_error = Some(e);
                break;
            }
            None => {}
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    debug_assert_eq!(per_chunk_outputs.len(), chunks.len());
    Ok(StageOutput {
        output_text: per_chunk_outputs.join(CHUNK_JOINER),
        per_chunk_outputs,
        calls_made,
    })
}

fn run_chunk(
    chunk_index: usize,
    chunk: &str,
    stage: StageKind,
    template: &PromptTemplate,
    base_bindings: &BTreeMap<String, String>,
    backend: &dyn Backend,
    params: &GenerationParams,
) -> Result<(String, usize), StageError> {
    let mut available = base_bindings.clone();
    available.insert(INPUT_SLOT.to_string(), chunk.to_string());

    let calls = template.call_count();
    let mut output = String::new();
    for call_index in 0..calls {
        if call_index > 0 {
            if let Some(slot) = template.carry().get(call_index - 1) {
                available.insert(slot.clone(), output.clone());
            }
        }
        let slots = template
            .call_placeholders(call_index)
            .map_err(|e| StageError::Template { chunk_index, source: e.into() })?;
        let bindings: BTreeMap<String, String> = available
            .iter()
            .filter(|(k, _)| slots.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let messages = template
            .render_call(call_index, &bindings)
            .map_err(|e| StageError::Template { chunk_index, source: e.into() })?;
        let request = CompletionRequest::new(messages, *params).with_payload(chunk);
        output = backend.complete(&request).map_err(|source| StageError::Backend {
            chunk_index,
            call_index,
            source,
        })?;
    }
    Ok((clean_output(stage, &output), calls))
}

fn clean_output(stage: StageKind, raw: &str) -> String {
    let text = raw.trim();
    if let Some(heading) = stage.output_heading() {
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        if first.trim() == heading {
            return rest.trim().to_string();
        }
    }
    text.to_string()
}

/// Rewrites a finished summary in one call with the builtin reflection
/// prompt.
pub fn run_reflection(
    summary: &str,
    backend: &dyn Backend,
    params: &GenerationParams,
) -> Result<String, StageError> {
    run_reflection_with(summary, &StageConfig::new(StageKind::Reflect), backend, params)
}

pub fn run_reflection_with(
    summary: &str,
    cfg: &StageConfig,
    backend: &dyn Backend,
    params: &GenerationParams,
) -> Result<String, StageError> {
    if summary.trim().is_empty() {
        return Err(StageError::EmptyInput);
    }
    let out = run_stage(&[summary.to_string()], cfg, backend, params)?;
    Ok(out.output_text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::backend::MockBackend;
    use crate::corpus::word_count;

    fn words(prefix: &str, n: usize) -> String {
        (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn identity_stage_rejoins_chunks() {
        let chunks = vec![words("a", 5), words("b", 7), words("c", 3)];
        let out = run_stage(
            &chunks,
            &StageConfig::new(StageKind::Preprocess),
            &MockBackend::identity(),
            &GenerationParams::default(),
        )
        .unwrap();
        assert_eq!(out.output_text, chunks.join("\n\n"));
        assert_eq!(out.calls_made, 3);
    }

    #[test]
    fn cot_makes_two_calls_per_chunk() {
        let out = run_stage(
            &[words("x", 10)],
            &StageConfig::new(StageKind::PreprocessCot),
            &MockBackend::identity(),
            &GenerationParams::default(),
        )
        .unwrap();
        assert_eq!(out.calls_made, 2);
        assert_eq!(out.output_text, words("x", 10));
    }

    #[test]
    fn halving_per_chunk() {
        let out = run_stage(
            &[words("a", 40), words("b", 60)],
            &StageConfig::new(StageKind::Compress),
            &MockBackend::halve(),
            &GenerationParams::default(),
        )
        .unwrap();
        assert_eq!(word_count(&out.output_text), 50);
        assert_eq!(out.per_chunk_outputs[0], words("a", 20));
    }

    #[test]
    fn empty_chunk_list() {
        let err = run_stage(
            &[],
            &StageConfig::new(StageKind::Summarize),
            &MockBackend::identity(),
            &GenerationParams::default(),
        )
        .unwrap_err();
        assert_eq!(err, StageError::EmptyInput);
    }

    #[test]
    fn fewshot_rules() {
        assert!(StageConfig::new(StageKind::SummarizeFewshot).validate().is_err());
        assert!(StageConfig::new(StageKind::Summarize).with_examples(["x"]).validate().is_err());
        assert!(StageConfig::new(StageKind::SummarizeFewshot)
            .with_examples(["a", "b", "c"])
            .validate()
            .is_ok());
        // The builtin S_fewshot prompt has exactly three example slots.
        assert!(StageConfig::new(StageKind::SummarizeFewshot)
            .with_examples(["a", "b"])
            .validate()
            .is_err());
        assert!(StageConfig::new(StageKind::CompressFewshot)
            .with_examples(["i1", "o1", "i2", "o2", "i3"])
            .validate()
            .is_err());
        assert!(StageConfig::new(StageKind::CompressFewshot)
            .with_examples(["i1", "o1", "i2", "o2", "i3", "o3"])
            .validate()
            .is_ok());
    }

    #[test]
    fn builtin_templates_are_consistent() {
        for kind in StageKind::ALL {
            let t = kind.builtin_template();
            assert!(t.required_placeholders().contains(INPUT_SLOT), "{kind}");
            let expected_calls = if kind == StageKind::PreprocessCot { 2 } else { 1 };
            assert_eq!(t.call_count(), expected_calls, "{kind}");
        }
        let p = StageKind::Preprocess.builtin_template();
        assert!(p.turns()[0].body.starts_with("You are an expert script-to-narrative converter."));
    }

    #[test]
    fn format_heading_is_stripped() {
        assert_eq!(clean_output(StageKind::Summarize, "# Summary\nThe plot.\n"), "The plot.");
        assert_eq!(clean_output(StageKind::Compress, "### Meta Summary\n\nShort."), "Short.");
        assert_eq!(clean_output(StageKind::Preprocess, "# Summary\nx"), "# Summary\nx");
    }

    #[test]
    fn stage_codes_round_trip() {
        for kind in StageKind::ALL {
            assert_eq!(kind.code().parse::<StageKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(serde_json::from_str::<StageKind>(&json).unwrap(), kind);
        }
        let cfg: StageConfig = serde_json::from_str("\"C\"").unwrap();
        assert_eq!(cfg, StageConfig::new(StageKind::Compress));
        let cfg: StageConfig =
            serde_json::from_str(r#"{"stage":"S_fewshot","fewshot_examples":["a","b","c"]}"#).unwrap();
        assert_eq!(cfg.fewshot_examples.len(), 3);
    }

    #[test]
    fn reflection() {
        let summary = words("s", 100);
        let p = GenerationParams::default();
        assert_eq!(run_reflection(&summary, &MockBackend::identity(), &p).unwrap(), summary);
        let short = run_reflection(&summary, &MockBackend::truncate(0.4), &p).unwrap();
        assert_eq!(word_count(&short), 40);
        assert_eq!(run_reflection(" ", &MockBackend::identity(), &p), Err(StageError::EmptyInput));
    }
}
