//! Scene-based and sentence-based chunking.
//!
//! Preprocessing and summarization feed the model fixed groups of
//! consecutive scenes; compression feeds it greedy packs of sentences no
//! larger than a word budget.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{split_sentences, word_count, NarrativeDocument, Sentence};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("document has no scenes")]
    EmptyDocument,
    #[error("scenes_per_chunk must be at least 1")]
    ZeroScenesPerChunk,
}

/// Word budget for a sentence chunk. `Unbounded` packs everything into one
/// chunk. Serialized as a number or the string `"max"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChunkSize {
    Words(usize),
    Unbounded,
}

impl ChunkSize {
    pub fn fits(self, words: usize) -> bool {
        match self {
            ChunkSize::Words(limit) => words <= limit,
            ChunkSize::Unbounded => true,
        }
    }
}

impl fmt::Display for ChunkSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkSize::Words(n) => write!(f, "{n}"),
            ChunkSize::Unbounded => f.write_str("max"),
        }
    }
}

impl FromStr for ChunkSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("max") || s.eq_ignore_ascii_case("unbounded") {
            return Ok(ChunkSize::Unbounded);
        }
        match s.parse::<usize>() {
            Ok(0) => Err("chunk size must be at least 1 word".into()),
            Ok(n) => Ok(ChunkSize::Words(n)),
            Err(_) => Err(format!("invalid chunk size {s:?} (expected a word count or \"max\")")),
        }
    }
}

impl Serialize for ChunkSize {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ChunkSize::Words(n) => serializer.serialize_u64(*n as u64),
            ChunkSize::Unbounded => serializer.serialize_str("max"),
        }
    }
}

impl<'de> Deserialize<'de> for ChunkSize {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(0) => Err(serde::de::Error::custom("chunk size must be at least 1 word")),
            Repr::Num(n) => Ok(ChunkSize::Words(n as usize)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneChunk {
    pub chunk_index: usize,
    pub scene_indices: Range<usize>,
    /// Raw text from the first scene's start to the last scene's end,
    /// inner separators included verbatim.
    pub text: String,
    pub word_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceChunk {
    pub chunk_index: usize,
    pub sentences: Vec<Sentence>,
    pub word_count: usize,
}

impl SentenceChunk {
    /// Sentences joined by single spaces.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sentences.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&s.text);
        }
        out
    }
}

/// Groups consecutive scenes, `scenes_per_chunk` at a time. The last chunk
/// takes the remainder, so there are `ceil(scenes / scenes_per_chunk)` chunks.
pub fn chunk_by_scenes(
    doc: &NarrativeDocument,
    scenes_per_chunk: usize,
) -> Result<Vec<SceneChunk>, ChunkError> {
    if scenes_per_chunk == 0 {
        return Err(ChunkError::ZeroScenesPerChunk);
    }
    if doc.scenes.is_empty() {
        return Err(ChunkError::EmptyDocument);
    }
    let n = doc.scenes.len();
    let chunks = (0..n.div_ceil(scenes_per_chunk))
        .map(|chunk_index| {
            let start = chunk_index * scenes_per_chunk;
            let end = (start + scenes_per_chunk).min(n);
            let mut text = String::new();
            for (i, scene) in doc.scenes[start..end].iter().enumerate() {
                text.push_str(&scene.text);
                if start + i + 1 < end {
                    text.push_str(&scene.separator);
                }
            }
            let word_count = doc.scenes[start..end].iter().map(|s| s.word_count).sum();
            SceneChunk {
                chunk_index,
                scene_indices: start..end,
                text,
                word_count,
            }
        })
        .collect();
    Ok(chunks)
}

/// Greedy first-fit packing of sentences under a word budget.
///
/// A sentence joins the current chunk while the chunk stays within `delta`;
/// otherwise it opens a new chunk. A sentence longer than `delta` sits alone
/// in an oversized chunk.
pub fn chunk_by_sentences(text: &str, delta: ChunkSize) -> Vec<SentenceChunk> {
    chunk_by_sentences_with(text, delta, word_count)
}

/// [`chunk_by_sentences`] with a caller-supplied length measure, e.g. a
/// model tokenizer. `Sentence::word_count` stays whitespace-based; the chunk
/// `word_count` field holds the supplied measure.
pub fn chunk_by_sentences_with<F>(text: &str, delta: ChunkSize, measure: F) -> Vec<SentenceChunk>
where
    F: Fn(&str) -> usize,
{
    let mut chunks: Vec<SentenceChunk> = Vec::new();
    let mut current: Vec<Sentence> = Vec::new();
    let mut current_len = 0usize;

    for sentence in split_sentences(text) {
        let len = measure(&sentence.text);
        if !current.is_empty() && !delta.fits(current_len + len) {
            chunks.push(SentenceChunk {
                chunk_index: chunks.len(),
                sentences: std::mem::take(&mut current),
                word_count: current_len,
            });
            current_len = 0;
        }
        current_len += len;
        current.push(sentence);
    }
    if !current.is_empty() {
        chunks.push(SentenceChunk {
            chunk_index: chunks.len(),
            sentences: current,
            word_count: current_len,
        });
    }
    chunks
}
