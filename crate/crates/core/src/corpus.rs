//! Narrative ingestion: scene segmentation, sentence splitting, word counts.
//!
//! A [`NarrativeDocument`] keeps the exact bytes it was built from. Scenes
//! are trimmed slices of the raw text and every whitespace gap between them
//! is kept as that scene's `separator`, so
//! `leading + Σ (scene.text + scene.separator) == raw_text` holds exactly.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;

/// Trimmed-line prefixes that open a screenplay scene.
pub const SCENE_HEADING_PREFIXES: [&str; 2] = ["INT.", "EXT."];

/// Period-terminated tokens that never end a sentence.
pub const ABBREVIATIONS: [&str; 8] = ["mr.", "mrs.", "dr.", "st.", "vs.", "e.g.", "i.e.", "etc."];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("input is empty or whitespace-only")]
    EmptyInput,
    #[error("input is not valid UTF-8 (first invalid byte at offset {offset})")]
    EncodingError { offset: usize },
    #[error("unknown medium {0:?} (expected screenplay, prose or transcript)")]
    UnknownMedium(String),
}

/// How the raw text is structured; selects the scene segmentation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Medium {
    #[default]
    Screenplay,
    Prose,
    Transcript,
}

impl fmt::Display for Medium {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Medium::Screenplay => "screenplay",
            Medium::Prose => "prose",
            Medium::Transcript => "transcript",
        })
    }
}

impl std::str::FromStr for Medium {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "screenplay" => Ok(Medium::Screenplay),
            "prose" => Ok(Medium::Prose),
            "transcript" => Ok(Medium::Transcript),
            _ => Err(CorpusError::UnknownMedium(s.to_string())),
        }
    }
}

/// One scene (or pseudo-scene for prose) of a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scene {
    pub index: usize,
    /// The trimmed heading line, when the scene opens with one.
    pub heading: Option<String>,
    /// Everything after the heading line, trimmed.
    pub body: String,
    pub word_count: usize,
    /// The exact trimmed slice of the raw text this scene covers.
    pub text: String,
    /// Whitespace between this scene and the next (or the end of input).
    pub separator: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub word_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NarrativeDocument {
    pub id: String,
    pub medium: Medium,
    pub raw_text: String,
    /// Whitespace preceding the first scene.
    pub leading: String,
    pub scenes: Vec<Scene>,
}

impl NarrativeDocument {
    /// Segments `raw` into scenes. The id defaults to a prefix of the
    /// content hash; see [`NarrativeDocument::with_id`].
    pub fn ingest(raw: &str, medium: Medium) -> Result<Self, CorpusError> {
        let (leading, scenes) = segment(raw, medium)?;
        let content_hash = sha256_hex(raw.as_bytes());
        Ok(Self {
            id: content_hash[..12].to_string(),
            medium,
            raw_text: raw.to_string(),
            leading,
            scenes,
        })
    }

    pub fn ingest_bytes(raw: &[u8], medium: Medium) -> Result<Self, CorpusError> {
        let text = std::str::from_utf8(raw).map_err(|e| CorpusError::EncodingError {
            offset: e.valid_up_to(),
        })?;
        Self::ingest(text, medium)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(self.raw_text.as_bytes())
    }

    pub fn word_count(&self) -> usize {
        word_count(&self.raw_text)
    }

    /// The raw text without surrounding whitespace.
    pub fn body(&self) -> &str {
        self.raw_text.trim()
    }

    /// Rebuilds the raw text from the leading gap, scenes and separators.
    pub fn reconstruct(&self) -> String {
        let mut out = self.leading.clone();
        for scene in &self.scenes {
            out.push_str(&scene.text);
            out.push_str(&scene.separator);
        }
        out
    }
}

/// Number of maximal non-whitespace runs.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Splits `text` into scenes according to `medium`.
///
/// Screenplay: a scene starts at every line whose trimmed form begins with
/// `INT.` or `EXT.`; non-blank text before the first heading is scene 0 with
/// no heading. Prose and transcript: blank-line separated blocks.
pub fn segment_scenes(text: &str, medium: Medium) -> Result<Vec<Scene>, CorpusError> {
    segment(text, medium).map(|(_, scenes)| scenes)
}

pub fn is_scene_heading(line: &str) -> bool {
    let trimmed = line.trim();
    SCENE_HEADING_PREFIXES.iter().any(|p| trimmed.starts_with(p))
}

fn segment(text: &str, medium: Medium) -> Result<(String, Vec<Scene>), CorpusError> {
    if text.trim().is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let spans = match medium {
        Medium::Screenplay => heading_spans(text),
        Medium::Prose | Medium::Transcript => paragraph_spans(text),
    };
    debug_assert!(!spans.is_empty());

    let leading = text[..spans[0].0].to_string();
    let mut scenes = Vec::with_capacity(spans.len());
    for (i, &(start, end)) in spans.iter().enumerate() {
        let next = spans.get(i + 1).map_or(text.len(), |s| s.0);
        let slice = &text[start..end];
        let (heading, body) = match medium {
            Medium::Screenplay => {
                let (first, rest) = slice.split_once('\n').unwrap_or((slice, ""));
                if is_scene_heading(first) {
                    (Some(first.trim().to_string()), rest.trim().to_string())
                } else {
                    (None, slice.to_string())
                }
            }
            _ => (None, slice.to_string()),
        };
        scenes.push(Scene {
            index: i,
            heading,
            body,
            word_count: word_count(slice),
            text: slice.to_string(),
            separator: text[end..next].to_string(),
        });
    }
    Ok((leading, scenes))
}

/// Byte offsets of each line start together with the line (newline included).
fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_inclusive('\n').scan(0usize, |offset, line| {
        let start = *offset;
        *offset += line.len();
        Some((start, line))
    })
}

/// Trims a raw block to its non-whitespace content; `None` if blank.
fn trim_span(text: &str, start: usize, end: usize) -> Option<(usize, usize)> {
    let block = &text[start..end];
    let trimmed_start = block.len() - block.trim_start().len();
    let trimmed = block.trim();
    if trimmed.is_empty() {
        return None;
    }
    let s = start + trimmed_start;
    Some((s, s + trimmed.len()))
}

fn heading_spans(text: &str) -> Vec<(usize, usize)> {
    let mut starts: Vec<usize> = lines_with_offsets(text)
        .filter(|(_, line)| is_scene_heading(line))
        .map(|(offset, _)| offset)
        .collect();
    if starts.first() != Some(&0) {
        starts.insert(0, 0);
    }
    let mut spans = Vec::with_capacity(starts.len());
    for (i, &start) in starts.iter().enumerate() {
        let end = starts.get(i + 1).copied().unwrap_or(text.len());
        if let Some(span) = trim_span(text, start, end) {
            spans.push(span);
        }
    }
    spans
}

fn paragraph_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut block: Option<(usize, usize)> = None;
    for (offset, line) in lines_with_offsets(text) {
        if line.trim().is_empty() {
            if let Some((s, e)) = block.take() {
                spans.extend(trim_span(text, s, e));
            }
        } else {
            let end = offset + line.len();
            block = Some(block.map_or((offset, end), |(s, _)| (s, end)));
        }
    }
    if let Some((s, e)) = block {
        spans.extend(trim_span(text, s, e));
    }
    spans
}

const CLOSERS: [char; 6] = ['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
const OPENERS: [char; 4] = ['"', '\'', '\u{201c}', '\u{2018}'];

/// Rule-based sentence splitter.
///
/// A boundary follows `.`, `!` or `?` (plus any closing quotes or brackets)
/// when whitespace comes next and the following character is uppercase, a
/// digit or an opening quote. A period ending one of [`ABBREVIATIONS`]
/// (case-insensitive) never splits. Trailing text without terminal
/// punctuation becomes the last sentence.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    while i < chars.len() {
        let (_, c) = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        if k == j || k == chars.len() {
            i = j.max(i + 1);
            continue;
        }
        let next = chars[k].1;
        let opens = next.is_uppercase() || next.is_ascii_digit() || OPENERS.contains(&next);
        let end_byte = chars.get(j).map_or(text.len(), |&(b, _)| b);
        if opens && !(c == '.' && ends_with_abbreviation(&text[start..chars[i].0 + 1])) {
            push_sentence(&mut sentences, &text[start..end_byte]);
            start = chars[k].0;
        }
        i = k;
    }
    push_sentence(&mut sentences, &text[start.min(text.len())..]);
    sentences
}

fn ends_with_abbreviation(prefix: &str) -> bool {
    let last = prefix.rsplit(char::is_whitespace).next().unwrap_or("");
    let token = last.trim_start_matches(|c: char| OPENERS.contains(&c) || c == '(' || c == '[');
    let lower = token.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

fn push_sentence(out: &mut Vec<Sentence>, raw: &str) {
    let text = raw.trim();
    if !text.is_empty() {
        out.push(Sentence {
            text: text.to_string(),
            word_count: word_count(text),
        });
    }
}
