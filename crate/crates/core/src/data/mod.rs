//! Dataset and knowledge-base ingestion, the encoder stand-ins, and the
//! synthetic data generator.

mod dataset;
mod embed;
mod knowledge;
mod synth;

use std::io::Write;
use std::path::Path;

pub use dataset::{dataset_to_jsonl, load_dataset, parse_dataset, write_dataset};
pub use embed::{embed_text_stub, project_image, project_text};
pub use knowledge::{
    load_knowledge_base, parse_knowledge_base, write_knowledge_base, KnowledgeBase, KnowledgeEntry,
};
pub use synth::{class_band, generate_synthetic, SynthConfig, SyntheticData};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the word-embedding stand-in.
pub const TEXT_DIM: usize = 300;
/// Width of a ViT-B/16 pooled image feature.
pub const VIT_DIM: usize = 768;
/// Questions are truncated or padded to this many tokens.
pub const MAX_TOKENS: usize = 50;
pub const PAD_TOKEN: u32 = 0;
pub const DEFAULT_D_MODEL: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureLayout {
    /// 768-wide ViT features, projected by a `d_model × 768` map.
    Vit,
    /// Features already `d_model` wide.
    Precomputed,
}

impl FeatureLayout {
    pub fn image_dim(self, d_model: usize) -> usize {
        match self {
            FeatureLayout::Vit => VIT_DIM,
            FeatureLayout::Precomputed => d_model,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Question {
    /// Exactly [`MAX_TOKENS`] ids, padded with [`PAD_TOKEN`].
    Tokens(Vec<u32>),
    /// A [`TEXT_DIM`]-wide embedding.
    Features(Vec<f64>),
}

impl Question {
    /// The 300-d text vector fed to the text projection.
    pub fn text_features(&self) -> Vec<f64> {
        match self {
            Question::Tokens(t) => embed_text_stub(t),
            Question::Features(f) => f.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image_id: String,
    pub image_features: Vec<f64>,
    pub question: Question,
    pub answer_class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub samples: Vec<Sample>,
    pub classes: usize,
    pub d_model: usize,
    pub layout: FeatureLayout,
    /// Per-sample fold, if the file carried one.
    pub folds: Option<Vec<usize>>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn image_dim(&self) -> usize {
        self.layout.image_dim(self.d_model)
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for s in &self.samples {
            counts[s.answer_class] += 1;
        }
        counts
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
