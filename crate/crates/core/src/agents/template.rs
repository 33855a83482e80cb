//! Prompt templates with `{{name}}` slots.
//!
//! File format: turns separated by a line `---ROLE: system---` or
//! `---ROLE: user---`. Each user turn closes one model call; the turns since
//! the previous call form that call's messages. For multi-call templates,
//! `carry` names the placeholder in call `i + 1` that receives the output of
//! call `i`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("missing binding for placeholder {{{{{0}}}}}")]
    MissingPlaceholder(String),
    #[error("binding {0:?} does not match any placeholder")]
    UnknownPlaceholder(String),
    #[error("template {name}, line {line}: {message}")]
    Parse {
        name: String,
        line: usize,
        message: String,
    },
    #[error("template {0} must end with a user turn")]
    NoFinalUserTurn(String),
    #[error("template {name} has {calls} call(s); call {index} requested")]
    CallOutOfRange {
        name: String,
        calls: usize,
        index: usize,
    },
    #[error("reading template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateTurn {
    pub role: Role,
    pub body: String,
}

/// A rendered chat message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TemplateRepr", into = "TemplateRepr")]
pub struct PromptTemplate {
    name: String,
    turns: Vec<TemplateTurn>,
    required_placeholders: BTreeSet<String>,
    carry: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateRepr {
    name: String,
    turns: Vec<TemplateTurn>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    carry: Vec<String>,
}

impl TryFrom<TemplateRepr> for PromptTemplate {
    type Error = TemplateError;

    fn try_from(repr: TemplateRepr) -> Result<Self, Self::Error> {
        Ok(PromptTemplate::from_turns(repr.name, repr.turns)?.with_carry(repr.carry))
    }
}

impl From<PromptTemplate> for TemplateRepr {
    fn from(t: PromptTemplate) -> Self {
        TemplateRepr {
            name: t.name,
            turns: t.turns,
            carry: t.carry,
        }
    }
}

const ROLE_PREFIX: &str = "---ROLE:";
const ROLE_SUFFIX: &str = "---";

impl PromptTemplate {
    pub fn from_turns(name: impl Into<String>, turns: Vec<TemplateTurn>) -> Result<Self, TemplateError> {
        let name = name.into();
        if turns.last().map(|t| t.role) != Some(Role::User) {
            return Err(TemplateError::NoFinalUserTurn(name));
        }
        let required_placeholders = turns.iter().flat_map(|t| placeholders(&t.body)).collect();
        Ok(Self {
            name,
            turns,
            required_placeholders,
            carry: Vec::new(),
        })
    }

    /// Parses the `---ROLE: ...---` file format.
    pub fn parse(name: impl Into<String>, source: &str) -> Result<Self, TemplateError> {
        let name = name.into();
        let mut turns: Vec<TemplateTurn> = Vec::new();
        let mut current: Option<(Role, Vec<&str>)> = None;

        for (lineno, line) in source.lines().enumerate() {
            let trimmed = line.trim_end();
            if let Some(role) = parse_role_line(trimmed) {
                let role = role.map_err(|message| TemplateError::Parse {
                    name: name.clone(),
                    line: lineno + 1,
                    message,
                })?;
                if let Some((r, lines)) = current.take() {
                    turns.push(finish_turn(r, &lines));
                }
                current = Some((role, Vec::new()));
                continue;
            }
            match current.as_mut() {
                Some((_, lines)) => lines.push(line),
                None if trimmed.is_empty() => {}
                None => {
                    return Err(TemplateError::Parse {
                        name,
                        line: lineno + 1,
                        message: "text before the first ---ROLE: ...--- line".into(),
                    })
                }
            }
        }
        if let Some((r, lines)) = current.take() {
            turns.push(finish_turn(r, &lines));
        }
        Self::from_turns(name, turns)
    }

    pub fn from_file(path: &Path) -> Result<Self, TemplateError> {
        let source = std::fs::read_to_string(path).map_err(|e| TemplateError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let name = path
            .file_stem()
            .map_or_else(|| "template".to_string(), |s| s.to_string_lossy().into_owned());
        Self::parse(name, &source)
    }

    pub fn with_carry<I, S>(mut self, carry: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.carry = carry.into_iter().map(Into::into).collect();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn turns(&self) -> &[TemplateTurn] {
        &self.turns
    }

    pub fn required_placeholders(&self) -> &BTreeSet<String> {
        &self.required_placeholders
    }

    pub fn carry(&self) -> &[String] {
        &self.carry
    }

    /// Number of model calls, i.e. user turns.
    pub fn call_count(&self) -> usize {
        self.turns.iter().filter(|t| t.role == Role::User).count()
    }

    /// Turns that make up call `index`.
    pub fn call_turns(&self, index: usize) -> Result<&[TemplateTurn], TemplateError> {
        let mut start = 0;
        let mut call = 0;
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.role == Role::User {
                if call == index {
                    return Ok(&self.turns[start..=i]);
                }
                call += 1;
                start = i + 1;
            }
        }
        Err(TemplateError::CallOutOfRange {
            name: self.name.clone(),
            calls: call,
            index,
        })
    }

    /// Placeholders used by call `index`.
    pub fn call_placeholders(&self, index: usize) -> Result<BTreeSet<String>, TemplateError> {
        Ok(self
            .call_turns(index)?
            .iter()
            .flat_map(|t| placeholders(&t.body))
            .collect())
    }

    /// Renders every turn.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<Vec<Message>, TemplateError> {
        render_turns(&self.turns, &self.required_placeholders, bindings)
    }

    /// Renders only the turns of call `index`; bindings are checked against
    /// that call's placeholders.
    pub fn render_call(
        &self,
        index: usize,
        bindings: &BTreeMap<String, String>,
    ) -> Result<Vec<Message>, TemplateError> {
        let turns = self.call_turns(index)?;
        let required = self.call_placeholders(index)?;
        render_turns(turns, &required, bindings)
    }
}

fn parse_role_line(line: &str) -> Option<Result<Role, String>> {
    let inner = line.strip_prefix(ROLE_PREFIX)?.strip_suffix(ROLE_SUFFIX)?;
    Some(match inner.trim() {
        "system" => Ok(Role::System),
        "user" => Ok(Role::User),
        other => Err(format!("unknown role {other:?}")),
    })
}

fn finish_turn(role: Role, lines: &[&str]) -> TemplateTurn {
    let mut body = lines.join("\n");
    while body.ends_with('\n') {
        body.pop();
    }
    TemplateTurn { role, body }
}

fn render_turns(
    turns: &[TemplateTurn],
    required: &BTreeSet<String>,
    bindings: &BTreeMap<String, String>,
) -> Result<Vec<Message>, TemplateError> {
    if let Some(unknown) = bindings.keys().find(|k| !required.contains(*k)) {
        return Err(TemplateError::UnknownPlaceholder(unknown.clone()));
    }
    if let Some(missing) = required.iter().find(|k| !bindings.contains_key(*k)) {
        return Err(TemplateError::MissingPlaceholder(missing.clone()));
    }
    Ok(turns
        .iter()
        .map(|t| Message {
            role: t.role,
            content: substitute(&t.body, bindings),
        })
        .collect())
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Finds `{{name}}` slots as (byte range, name).
fn slots(body: &str) -> Vec<(usize, usize, &str)> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(rel) = body[from..].find("{{") {
        let open = from + rel;
        let name_start = open + 2;
        let name_len = body[name_start..]
            .find(|c: char| !is_name_char(c))
            .unwrap_or(body.len() - name_start);
        let name_end = name_start + name_len;
        if name_len > 0 && body[name_end..].starts_with("}}") {
            out.push((open, name_end + 2, &body[name_start..name_end]));
            from = name_end + 2;
        } else {
            from = open + 1;
        }
    }
    out
}

/// Placeholder names appearing in `body`.
pub fn placeholders(body: &str) -> BTreeSet<String> {
    slots(body).into_iter().map(|(_, _, n)| n.to_string()).collect()
}

/// Single pass over the template body; bound values are inserted verbatim
/// and never rescanned.
fn substitute(body: &str, bindings: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(body.len());
    let mut last = 0;
    for (start, end, name) in slots(body) {
        out.push_str(&body[last..start]);
        out.push_str(&bindings[name]);
        last = end;
    }
    out.push_str(&body[last..]);
    out
}
