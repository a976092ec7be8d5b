//! Indented scene descriptions.
//!
//! ```text
//! canvas w=40 h=12
//! window main x=2 y=1 w=30 h=8 label="Main window" layout=row
//!   button ok label=OK receptor=click
//!   button ok2 label=OK receptor=click
//! ```
//!
//! Each element line is `<kind> <name> key=value...`; indentation (spaces)
//! nests it under the nearest less-indented element. `receptor=<name>` may
//! repeat and creates an empty event receptor. An optional first `canvas`
//! line sets attributes on the scene root. Values may be double-quoted with
//! `\"`, `\\` and `\n` escapes.

use super::{ElementKind, SceneError, ATTRIBUTES};
use crate::merklefs::{FsError, ImportEntry, MerkleFs, TreeHandle};

/// One parsed element line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneLine {
    /// Slash-separated path from the scene root; empty for the canvas.
    pub path: String,
    /// Attribute files in line order.
    pub attrs: Vec<(String, String)>,
    pub receptors: Vec<String>,
}

fn tokens(line: usize, s: &str) -> Result<Vec<String>, SceneError> {
    let err = |msg: &str| SceneError::Parse {
        line,
        msg: msg.to_string(),
    };
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            return Ok(out);
        }
        let mut tok = String::new();
        while let Some(&c) = chars.peek() {
            if c.is_whitespace() {
                break;
            }
            chars.next();
            if c != '"' {
                tok.push(c);
                continue;
            }
            loop {
                match chars.next() {
                    None => return Err(err("unterminated quote")),
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some('n') => tok.push('\n'),
                        Some(e @ ('"' | '\\')) => tok.push(e),
                        _ => return Err(err("bad escape")),
                    },
                    Some(c) => tok.push(c),
                }
            }
        }
        out.push(tok);
    }
}

/// Parses a scene description into element lines, parents before children.
pub fn parse_scene(text: &str) -> Result<Vec<SceneLine>, SceneError> {
    let mut out: Vec<SceneLine> = Vec::new();
    // (indent, path) of open elements.
    let mut stack: Vec<(usize, String)> = Vec::new();
    let mut seen_element = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: String| SceneError::Parse { line, msg };
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if raw.starts_with('\t') {
            return Err(err("indent with spaces, not tabs".into()));
        }
        let indent = raw.len() - trimmed.len();
        let toks = tokens(line, trimmed)?;
        let (head, rest) = toks.split_first().expect("non-empty line");
        let (path, kv) = if head == "canvas" {
            if seen_element || indent != 0 {
                return Err(err("canvas must be the first line".into()));
            }
            (String::new(), rest.to_vec())
        } else {
            let kind = ElementKind::parse(head).ok_or_else(|| err(format!("unknown element kind {head:?}")))?;
            let (name, kv) = rest.split_first().ok_or_else(|| err("missing element name".into()))?;
            if name.is_empty() || name.contains('=') || name.contains('/') || name.starts_with('.') || ATTRIBUTES.contains(&name.as_str()) {
                return Err(err(format!("bad element name {name:?}")));
            }
            while stack.last().is_some_and(|(d, _)| *d >= indent) {
                stack.pop();
            }
            let path = match stack.last() {
                Some((_, parent)) => format!("{parent}/{name}"),
                None => name.clone(),
            };
            if out.iter().any(|l| l.path == path) {
                return Err(err(format!("duplicate element {path:?}")));
            }
            stack.push((indent, path.clone()));
            let mut all = vec![format!("kind={}", kind.as_str())];
            all.extend_from_slice(kv);
            (path, all)
        };
        seen_element = true;
        let mut l = SceneLine {
            path,
            attrs: Vec::new(),
            receptors: Vec::new(),
        };
        fill(&mut l, &kv).map_err(err)?;
        out.push(l);
    }
    Ok(out)
}

fn fill(l: &mut SceneLine, kv: &[String]) -> Result<(), String> {
    for t in kv {
        let (k, v) = t.split_once('=').ok_or_else(|| format!("expected key=value, got {t:?}"))?;
        if k.is_empty() || k.contains('/') || k.starts_with('.') {
            return Err(format!("bad attribute name {k:?}"));
        }
        let dup = l.attrs.iter().any(|(a, _)| a == k) || l.receptors.iter().any(|r| r == k);
        if k == "receptor" {
            if v.is_empty()
                || v.contains('/')
                || v.starts_with('.')
                || l.attrs.iter().any(|(a, _)| a == v)
                || l.receptors.iter().any(|r| r == v)
            {
                return Err(format!("bad receptor name {v:?}"));
            }
            l.receptors.push(v.to_string());
        } else if dup {
            return Err(format!("attribute {k:?} given twice"));
        } else {
            l.attrs.push((k.to_string(), v.to_string()));
        }
    }
    Ok(())
}

/// Builds a fresh scene tree (no history) from a description.
pub fn import_scene(fs: &MerkleFs<'_>, text: &str) -> Result<TreeHandle, SceneError> {
    let lines = parse_scene(text)?;
    let mut files: Vec<(String, ImportEntry)> = Vec::new();
    for l in &lines {
        let at = |name: &str| {
            if l.path.is_empty() {
                name.to_string()
            } else {
                format!("{}/{name}", l.path)
            }
        };
        for (k, v) in &l.attrs {
            files.push((at(k), ImportEntry::File(v.clone().into_bytes())));
        }
        for r in &l.receptors {
            files.push((at(r), ImportEntry::Receptor(Vec::new())));
        }
    }
    if files.is_empty() {
        return Ok(fs.empty_root()?);
    }
    fs.import(files.iter().map(|(p, e)| (p.as_str(), e.clone())))
        .map_err(|e: FsError| match e {
            FsError::Type { path, expected } => SceneError::Attr {
                path,
                msg: format!("name clash, expected {expected}"),
            },
            other => other.into(),
        })
}
