//! Synthetic two-modality data whose class signal lives in the spectrum.
//!
//! Class `c` owns a band of frequency bins. A sample is the sum of one
//! sinusoid per bin of its class band, each with an independent uniformly
//! random phase, shared by an image and its questions, plus i.i.d. Gaussian
//! noise. Random phases make every class mean zero in feature space and
//! spread the class signal over a `2·width`-dimensional subspace, while the
//! magnitude spectrum is flat over the band regardless of phase.

use std::f64::consts::PI;
use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    DatasetManifest, FeatureLayout, KnowledgeBase, KnowledgeEntry, Question, Sample, TEXT_DIM,
};
use crate::error::{Error, Result};
use crate::kernel::dft_magnitude;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub d_model: usize,
    /// Standard deviation of the additive noise.
    pub noise: f64,
    pub amplitude: f64,
    pub questions_per_image: usize,
    /// Knowledge entries that match no class.
    pub distractors: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 4,
            per_class: 500,
            d_model: 256,
            noise: 0.3,
            amplitude: 0.25,
            questions_per_image: 2,
            distractors: 8,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub manifest: DatasetManifest,
    pub knowledge: KnowledgeBase,
}

/// Frequency bins owned by class `c`: bands start evenly spaced over
/// `1..=d_model/2` and cover half the spacing (at least one bin).
pub fn class_band(class: usize, classes: usize, d_model: usize) -> Range<usize> {
    let spacing = (d_model / 2) / classes;
    let start = 1 + class * spacing;
    start..start + (spacing / 2).max(1)
}

/// `Σ_k amplitude·sin(2π·k·n/period + φ_k)` over `bins`, `n < len`.
fn band_signal(len: usize, bins: Range<usize>, period: usize, phases: &[f64], amplitude: f64) -> Vec<f64> {
    (0..len)
        .map(|n| {
            bins.clone()
                .zip(phases)
                .map(|(k, p)| amplitude * (2.0 * PI * (k * n % period) as f64 / period as f64 + p).sin())
                .sum()
        })
        .collect()
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    let d = cfg.d_model;
    if cfg.classes < 2 {
        return Err(Error::config("synthetic data needs at least 2 classes"));
    }
    if !d.is_power_of_two() || d < 4 {
        return Err(Error::config(format!("d_model {d} must be a power of two ≥ 4")));
    }
    if cfg.classes > d / 2 {
        return Err(Error::config(format!(
            "{} classes need more than d_model/2 = {} distinct frequency bands",
            cfg.classes,
            d / 2
        )));
    }
    if cfg.per_class == 0 || cfg.questions_per_image == 0 {
        return Err(Error::config("per_class and questions_per_image must be positive"));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) || !(cfg.amplitude > 0.0) {
        return Err(Error::config("noise must be ≥ 0 and amplitude > 0"));
    }

    let mut rng = stream(cfg.seed, Stream::Synth);
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let draw = |len: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        if cfg.noise == 0.0 {
            vec![0.0; len]
        } else {
            (0..len).map(|_| noise.sample(rng)).collect()
        }
    };

    let mut samples = Vec::with_capacity(cfg.classes * cfg.per_class);
    let mut image_index = 0usize;
    for class in 0..cfg.classes {
        let band = class_band(class, cfg.classes, d);
        // Equal total power for every band width.
        let amp = cfg.amplitude / (band.len() as f64).sqrt();
        let mut produced = 0;
        while produced < cfg.per_class {
            let phases: Vec<f64> = band.clone().map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let image_id = format!("img{image_index:05}");
            image_index += 1;
            let mut image = band_signal(d, band.clone(), d, &phases, amp);
            for (v, n) in image.iter_mut().zip(draw(d, &mut rng)) {
                *v += n;
            }
            let n_questions = cfg.questions_per_image.min(cfg.per_class - produced);
            for _ in 0..n_questions {
                let mut text = band_signal(TEXT_DIM, band.clone(), d, &phases, amp);
                for (v, n) in text.iter_mut().zip(draw(TEXT_DIM, &mut rng)) {
                    *v += n;
                }
                samples.push(Sample {
                    id: format!("s{:06}", samples.len()),
                    image_id: image_id.clone(),
                    image_features: image.clone(),
                    question: Question::Features(text),
                    answer_class: class,
                });
                produced += 1;
            }
        }
    }

    let mut entries = Vec::with_capacity(cfg.classes + cfg.distractors);
    for class in 0..cfg.classes {
        let band = class_band(class, cfg.classes, d);
        let amp = cfg.amplitude / (band.len() as f64).sqrt();
        let clean = band_signal(d, band.clone(), d, &vec![0.0; band.len()], amp);
        entries.push(KnowledgeEntry {
            id: format!("proto-{class}"),
            text: format!("class {class}: spectral band {}..{}", band.start, band.end),
            embedding: dft_magnitude(&clean),
        });
    }
    let unit = Normal::new(0.0, cfg.amplitude).expect("amplitude > 0");
    for i in 0..cfg.distractors {
        let raw: Vec<f64> = (0..d).map(|_| unit.sample(&mut rng)).collect();
        entries.push(KnowledgeEntry {
            id: format!("distractor-{i}"),
            text: "broadband noise spectrum".into(),
            embedding: dft_magnitude(&raw),
        });
    }

    Ok(SyntheticData {
        manifest: DatasetManifest {
            samples,
            classes: cfg.classes,
            d_model: d,
            layout: FeatureLayout::Precomputed,
            folds: None,
        },
        knowledge: KnowledgeBase::new(entries)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::dataset_to_jsonl;

    fn small(noise: f64) -> SynthConfig {
        SynthConfig {
            classes: 4,
            per_class: 25,
            d_model: 32,
            noise,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let a = generate_synthetic(&small(0.3)).unwrap();
        let b = generate_synthetic(&small(0.3)).unwrap();
        assert_eq!(
            dataset_to_jsonl(&a.manifest).unwrap(),
            dataset_to_jsonl(&b.manifest).unwrap()
        );
        assert_eq!(a.knowledge, b.knowledge);
        let c = generate_synthetic(&SynthConfig { seed: 2, ..small(0.3) }).unwrap();
        assert_ne!(a.manifest, c.manifest);
    }

    #[test]
    fn classes_are_balanced() {
        let cfg = SynthConfig {
            per_class: 7,
            questions_per_image: 3,
            ..small(0.3)
        };
        let data = generate_synthetic(&cfg).unwrap();
        assert_eq!(data.manifest.class_counts(), vec![7; 4]);
        assert_eq!(data.knowledge.len(), 4 + cfg.distractors);
    }

    #[test]
    fn noiseless_nearest_prototype_is_perfect() {
        let data = generate_synthetic(&small(0.0)).unwrap();
        let protos = &data.knowledge.entries()[..4];
        for s in &data.manifest.samples {
            for features in [s.image_features.clone(), s.question.text_features()[..32].to_vec()] {
                let spec = dft_magnitude(&features);
                let best = protos
                    .iter()
                    .enumerate()
                    .map(|(c, p)| {
                        let dist: f64 = p.embedding.iter().zip(&spec).map(|(a, b)| (a - b).powi(2)).sum();
                        (c, dist)
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap()
                    .0;
                assert_eq!(best, s.answer_class);
            }
        }
    }

    #[test]
    fn too_many_classes_is_config_error() {
        let cfg = SynthConfig {
            classes: 17,
            d_model: 32,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        let cfg = SynthConfig {
            classes: 16,
            d_model: 32,
            per_class: 1,
            ..SynthConfig::default()
        };
        assert!(generate_synthetic(&cfg).is_ok());
        assert!(generate_synthetic(&SynthConfig { d_model: 48, ..small(0.1) }).is_err());
    }

    #[test]
    fn questions_share_their_image() {
        let data = generate_synthetic(&small(0.3)).unwrap();
        let s = &data.manifest.samples;
        assert_eq!(s[0].image_id, s[1].image_id);
        assert_eq!(s[0].image_features, s[1].image_features);
        assert_ne!(s[0].question, s[1].question);
        assert_ne!(s[1].image_id, s[2].image_id);
    }
}
