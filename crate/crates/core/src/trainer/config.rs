use serde::{Deserialize, Serialize};

use crate::data::DatasetManifest;
use crate::error::{Error, Result};
use crate::head::{FusionMode, DEFAULT_DROPOUT, DEFAULT_HIDDEN};
use crate::model::{ContrastiveSpace, ModelConfig, ModelOptions, ProjectionInit};
use crate::quantum::Similarity;

/// The rows of the component ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    NoFrequency,
    NoRetrieval,
    NoContrastive,
    SpatialOnly,
    CosineSimilarity,
    NoCoSelection,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::NoFrequency,
        Variant::NoRetrieval,
        Variant::NoContrastive,
        Variant::SpatialOnly,
        Variant::CosineSimilarity,
        Variant::NoCoSelection,
    ];

    /// Row label in the ablation table.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "Q-FSRU (Full)",
            Variant::NoFrequency => "w/o Frequency Processing",
            Variant::NoRetrieval => "w/o Quantum Retrieval",
            Variant::NoContrastive => "w/o Contrastive Learning",
            Variant::SpatialOnly => "Spatial-only Fusion",
            Variant::CosineSimilarity => "Cosine Similarity",
            Variant::NoCoSelection => "w/o Cross-Modal Co-selection",
        }
    }

    /// Identifier used on the command line and in config files.
    pub fn key(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoFrequency => "no_frequency",
            Variant::NoRetrieval => "no_retrieval",
            Variant::NoContrastive => "no_contrastive",
            Variant::SpatialOnly => "spatial_only",
            Variant::CosineSimilarity => "cosine_similarity",
            Variant::NoCoSelection => "no_co_selection",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.key() == s)
            .ok_or_else(|| Error::config(format!("unknown variant {s:?}")))
    }

    pub fn options(self) -> ModelOptions {
        let full = ModelOptions {
            frequency: true,
            co_selection: true,
            retrieval: true,
            similarity: Similarity::Fidelity,
            fusion_mode: FusionMode::FreqPlusKnowledge,
            contrastive: true,
            ..ModelOptions::default()
        };
        match self {
            Variant::Full => full,
            Variant::NoFrequency => ModelOptions {
                frequency: false,
                ..full
            },
            Variant::NoRetrieval => ModelOptions {
                retrieval: false,
                fusion_mode: FusionMode::FreqOnly,
                ..full
            },
            Variant::NoContrastive => ModelOptions {
                contrastive: false,
                ..full
            },
            Variant::SpatialOnly => ModelOptions {
                frequency: false,
                co_selection: false,
                ..full
            },
            Variant::CosineSimilarity => ModelOptions {
                similarity: Similarity::Cosine,
                ..full
            },
            Variant::NoCoSelection => ModelOptions {
                co_selection: false,
                ..full
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Multiplier applied every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub patience: usize,
    pub folds: usize,
    pub seed: u64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub variant: Variant,
    /// Replaces the variant's fusion mode when set.
    pub fusion_mode: Option<FusionMode>,
    pub contrastive_space: ContrastiveSpace,
    pub hidden: [usize; 2],
    pub dropout: f64,
    pub filters: usize,
    pub tie_filters: bool,
    pub projection_init: ProjectionInit,
    /// Train only these folds; all when empty.
    pub only_folds: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-5,
            weight_decay: 1e-5,
            batch_size: 32,
            max_epochs: 50,
            lr_decay: 0.98,
            lr_decay_every: 5,
            patience: 10,
            folds: 5,
            seed: 1,
            clip_norm: Some(5.0),
            variant: Variant::Full,
            fusion_mode: None,
            contrastive_space: ContrastiveSpace::Projected,
            hidden: DEFAULT_HIDDEN,
            dropout: DEFAULT_DROPOUT,
            filters: crate::fusion::DEFAULT_FILTERS,
            tie_filters: false,
            projection_init: ProjectionInit::Eye,
            only_folds: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::config("lr must be > 0 and weight_decay ≥ 0"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.lr_decay_every == 0 {
            return Err(Error::config("batch_size, max_epochs and lr_decay_every must be positive"));
        }
        if !(self.lr_decay > 0.0) {
            return Err(Error::config("lr_decay must be > 0"));
        }
        if self.folds < 2 {
            return Err(Error::config(format!("{} folds; need at least 2", self.folds)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::config("clip_norm must be > 0"));
            }
        }
        if let Some(&f) = self.only_folds.iter().find(|&&f| f >= self.folds) {
            return Err(Error::config(format!("fold {f} out of range for {} folds", self.folds)));
        }
        Ok(())
    }

    pub fn model_config(&self, m: &DatasetManifest) -> ModelConfig {
        let mut options = self.variant.options();
        if let Some(mode) = self.fusion_mode {
            options.fusion_mode = mode;
        }
        options.contrastive_space = self.contrastive_space;
        ModelConfig {
            filters: self.filters,
            tie_filters: self.tie_filters,
            hidden: self.hidden,
            dropout: self.dropout,
            projection_init: self.projection_init,
            options,
            ..ModelConfig::for_manifest(m)
        }
    }

    /// Folds to train, in order.
    pub fn fold_list(&self) -> Vec<usize> {
        if self.only_folds.is_empty() {
            (0..self.folds).collect()
        } else {
            self.only_folds.clone()
        }
    }
}
