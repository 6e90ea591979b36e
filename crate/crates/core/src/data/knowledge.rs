use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::kernel::tensor::l2_norm;

/// An external fact with its embedding in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeEntry {
    pub id: String,
    pub text: String,
    pub embedding: Vec<f64>,
}

/// Immutable once loaded; entries keep file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeBase {
    entries: Vec<KnowledgeEntry>,
    dim: usize,
}

impl KnowledgeBase {
    pub fn new(entries: Vec<KnowledgeEntry>) -> Result<Self> {
        let dim = entries.first().map_or(0, |e| e.embedding.len());
        for (i, e) in entries.iter().enumerate() {
            validate_entry(e, dim).map_err(|m| Error::schema(format!("entry {i} ({}): {m}", e.id)))?;
        }
        Ok(KnowledgeBase { entries, dim })
    }

    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Embedding width; 0 for an empty base.
    pub fn dim(&self) -> usize {
        self.dim
    }
}

fn validate_entry(e: &KnowledgeEntry, dim: usize) -> std::result::Result<(), String> {
    if e.embedding.len() != dim {
        return Err(format!(
            "embedding has {} values, expected {dim}",
            e.embedding.len()
        ));
    }
    if e.embedding.iter().any(|v| !v.is_finite()) {
        return Err("embedding contains non-finite values".into());
    }
    if l2_norm(&e.embedding) == 0.0 {
        return Err("embedding has zero norm".into());
    }
    Ok(())
}

/// Loads knowledge JSONL. When `d_model` is given every embedding must match it.
pub fn load_knowledge_base(path: impl AsRef<Path>, d_model: Option<usize>) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_knowledge_base(&text, path, d_model)
}

pub fn parse_knowledge_base(text: &str, origin: &Path, d_model: Option<usize>) -> Result<KnowledgeBase> {
    let mut entries = Vec::new();
    let mut dim = d_model;
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = i + 1;
        let entry: KnowledgeEntry = serde_json::from_str(raw).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let expected = *dim.get_or_insert(entry.embedding.len());
        validate_entry(&entry, expected)
            .map_err(|m| Error::schema(format!("{}:{line}: {m}", origin.display())))?;
        entries.push(entry);
    }
    KnowledgeBase::new(entries)
}

pub fn write_knowledge_base(path: impl AsRef<Path>, kb: &KnowledgeBase) -> Result<()> {
    let mut out = String::new();
    for e in kb.entries() {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    write_atomic(path.as_ref(), out.as_bytes())
}
