//! The assembled network, its batched forward pass and checkpoints.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{write_atomic, DatasetManifest, FeatureLayout, TEXT_DIM};
use crate::error::{Error, Result};
use crate::fusion::{record_fusion, FusionFlags, FusionParams, FusionVars, DEFAULT_FILTERS};
use crate::head::{
    record_classifier, ClassifierParams, ClassifierVars, DenseLayer, FusionMode, DEFAULT_DROPOUT,
    DEFAULT_HIDDEN,
};
use crate::kernel::{GradTape, Tensor, Var};
use crate::objectives::{
    record_augment, record_cross_entropy, record_info_nce, total_loss, LossBreakdown, AUGMENT_SIGMA,
    CROSS_WEIGHT, INTRA_WEIGHT, TAU_CROSS, TAU_INTRA,
};
use crate::quantum::{form_query, Retriever, Similarity, DEFAULT_TOP_K, RETRIEVAL_TEMPERATURE};
use crate::rng::{stream, Stream};

pub const CHECKPOINT_FORMAT: &str = "qfsru-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Initialization of the text and image projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionInit {
    /// Identity on the leading `d_model` input coordinates, zero bias.
    #[default]
    Eye,
    /// `U(±1/√fan_in)`.
    Uniform,
}

/// Where the contrastive terms look.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastiveSpace {
    /// Projected features before the spectrum.
    #[default]
    Projected,
    /// Magnitude spectra.
    Spectral,
}

/// Switches for the components that the ablations remove.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub frequency: bool,
    pub co_selection: bool,
    pub retrieval: bool,
    pub similarity: Similarity,
    pub fusion_mode: FusionMode,
    pub contrastive: bool,
    pub contrastive_space: ContrastiveSpace,
    pub top_k: usize,
    pub retrieval_temperature: f64,
    pub augment_sigma: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            frequency: true,
            co_selection: true,
            retrieval: false,
            similarity: Similarity::Fidelity,
            fusion_mode: FusionMode::FreqOnly,
            contrastive: true,
            contrastive_space: ContrastiveSpace::Projected,
            top_k: DEFAULT_TOP_K,
            retrieval_temperature: RETRIEVAL_TEMPERATURE,
            augment_sigma: AUGMENT_SIGMA,
        }
    }
}

impl ModelOptions {
    pub fn fusion_flags(&self) -> FusionFlags {
        FusionFlags {
            frequency: self.frequency,
            co_selection: self.co_selection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub classes: usize,
    pub layout: FeatureLayout,
    #[serde(default = "default_filters")]
    pub filters: usize,
    #[serde(default)]
    pub tie_filters: bool,
    #[serde(default = "default_hidden")]
    pub hidden: [usize; 2],
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub projection_init: ProjectionInit,
    #[serde(default)]
    pub options: ModelOptions,
}

fn default_filters() -> usize {
    DEFAULT_FILTERS
}

fn default_hidden() -> [usize; 2] {
    DEFAULT_HIDDEN
}

fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

impl ModelConfig {
    pub fn new(d_model: usize, classes: usize, layout: FeatureLayout) -> Self {
        ModelConfig {
            d_model,
            classes,
            layout,
            filters: DEFAULT_FILTERS,
            tie_filters: false,
            hidden: DEFAULT_HIDDEN,
            dropout: DEFAULT_DROPOUT,
            projection_init: ProjectionInit::Eye,
            options: ModelOptions::default(),
        }
    }

    pub fn for_manifest(m: &DatasetManifest) -> Self {
        ModelConfig::new(m.d_model, m.classes, m.layout)
    }

    pub fn image_dim(&self) -> usize {
        self.layout.image_dim(self.d_model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.filters == 0 || self.hidden.contains(&0) {
            return Err(Error::config("d_model, filters and hidden widths must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::config(format!("{} classes; need at least 2", self.classes)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        let o = &self.options;
        if o.fusion_mode == FusionMode::FreqPlusKnowledge && !o.retrieval {
            return Err(Error::config("freq_plus_knowledge fusion needs retrieval enabled"));
        }
        if o.top_k == 0 || !(o.retrieval_temperature > 0.0) || !(o.augment_sigma >= 0.0) {
            return Err(Error::config("top_k, retrieval temperature must be positive; augment sigma ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub text_proj: DenseLayer,
    pub image_proj: DenseLayer,
    pub fusion: FusionParams,
    pub head: ClassifierParams,
}

fn projection<R: Rng + ?Sized>(rng: &mut R, init: ProjectionInit, d_model: usize, fan_in: usize) -> DenseLayer {
    match init {
        ProjectionInit::Eye => DenseLayer {
            w: Tensor::eye(d_model, fan_in),
            b: Tensor::zeros(&[d_model]),
        },
        ProjectionInit::Uniform => DenseLayer::init(rng, fan_in, d_model),
    }
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let text_proj = projection(rng, cfg.projection_init, cfg.d_model, TEXT_DIM);
        let image_proj = projection(rng, cfg.projection_init, cfg.d_model, cfg.image_dim());
        let fusion = FusionParams::init(rng, cfg.d_model, cfg.filters, cfg.tie_filters);
        let head = ClassifierParams::init(
            rng,
            cfg.options.fusion_mode.input_dim(cfg.d_model),
            cfg.hidden,
            cfg.classes,
        );
        ModelParams {
            text_proj,
            image_proj,
            fusion,
            head,
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("proj.text.w".to_string(), &self.text_proj.w),
            ("proj.text.b".to_string(), &self.text_proj.b),
            ("proj.image.w".to_string(), &self.image_proj.w),
            ("proj.image.b".to_string(), &self.image_proj.b),
        ];
        out.extend(self.fusion.named_tensors());
        out.extend(self.head.named_tensors());
        out
    }

    /// Same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.text_proj.w,
            &mut self.text_proj.b,
            &mut self.image_proj.w,
            &mut self.image_proj.b,
        ];
        out.extend(self.fusion.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn bind(&self, tape: &mut GradTape) -> Result<ModelVars> {
        let text_proj = (tape.param(self.text_proj.w.clone())?, tape.param(self.text_proj.b.clone())?);
        let image_proj = (tape.param(self.image_proj.w.clone())?, tape.param(self.image_proj.b.clone())?);
        let fusion = self.fusion.bind(tape)?;
        let head = self.head.bind(tape)?;
        Ok(ModelVars {
            text_proj,
            image_proj,
            fusion,
            head,
        })
    }
}

struct ModelVars {
    text_proj: (Var, Var),
    image_proj: (Var, Var),
    fusion: FusionVars,
    head: ClassifierVars,
}

impl ModelVars {
    /// Same order as [`ModelParams::named_tensors`].
    fn list(&self) -> Vec<Var> {
        let mut out = vec![self.text_proj.0, self.text_proj.1, self.image_proj.0, self.image_proj.1];
        out.extend(self.fusion.list());
        out.extend_from_slice(self.head.list());
        out
    }
}

/// Encoded inputs of a batch.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B×300]`
    pub text: Tensor,
    /// `[B×image_dim]`
    pub image: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_manifest(m: &DatasetManifest, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::dim("empty batch"));
        }
        let text: Vec<Vec<f64>> = indices.iter().map(|&i| m.samples[i].question.text_features()).collect();
        let image: Vec<&[f64]> = indices.iter().map(|&i| m.samples[i].image_features.as_slice()).collect();
        Ok(Batch {
            text: Tensor::from_rows(&text)?,
            image: Tensor::from_rows(&image)?,
            labels: indices.iter().map(|&i| m.samples[i].answer_class).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Random streams consumed by a training step.
pub struct TrainRngs<'a, R: Rng + ?Sized> {
    pub dropout: &'a mut R,
    pub augment: &'a mut R,
}

/// Outcome of one training forward/backward pass.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: LossBreakdown,
    /// In [`ModelParams::named_tensors`] order.
    pub grads: Vec<Tensor>,
    pub logits: Tensor,
}

struct Forward {
    vars: ModelVars,
    t: Var,
    v: Var,
    t_freq: Var,
    v_freq: Var,
    logits: Var,
}

#[derive(Debug, Clone)]
pub struct QfsruModel {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl QfsruModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        QfsruModel::with_rng(config, &mut stream(seed, Stream::Init))
    }

    pub fn with_rng<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, rng);
        Ok(QfsruModel { config, params })
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.text.cols() != TEXT_DIM || batch.image.cols() != self.config.image_dim() {
            return Err(Error::dim(format!(
                "batch text {:?} / image {:?}, model wants {TEXT_DIM} / {}",
                batch.text.shape(),
                batch.image.shape(),
                self.config.image_dim()
            )));
        }
        if let Some(&bad) = batch.labels.iter().find(|&&y| y >= self.config.classes) {
            return Err(Error::schema(format!("label {bad} ≥ C = {}", self.config.classes)));
        }
        Ok(())
    }

    fn record<R: Rng + ?Sized>(
        &self,
        tape: &mut GradTape,
        batch: &Batch,
        retriever: Option<&Retriever<'_>>,
        dropout_rng: Option<&mut R>,
    ) -> Result<Forward> {
        self.check_batch(batch)?;
        let o = &self.config.options;
        let vars = self.params.bind(tape)?;
        let text = tape.constant(batch.text.clone())?;
        let image = tape.constant(batch.image.clone())?;
        let t = tape.linear(text, vars.text_proj.0, vars.text_proj.1)?;
        let v = tape.linear(image, vars.image_proj.0, vars.image_proj.1)?;
        let fused = record_fusion(tape, t, v, &vars.fusion, o.fusion_flags())?;
        let mut parts = vec![fused.t_enhanced, fused.v_enhanced];
        if o.fusion_mode == FusionMode::FreqPlusKnowledge {
            let retriever =
                retriever.ok_or_else(|| Error::Retrieval("knowledge fusion needs a knowledge base".into()))?;
            let k = knowledge_rows(
                retriever,
                tape.value(fused.t_enhanced),
                tape.value(fused.v_enhanced),
            )?;
            parts.push(tape.constant(k)?);
        }
        let z = tape.concat(&parts)?;
        let logits = record_classifier(tape, z, &vars.head, self.config.dropout, dropout_rng)?;
        Ok(Forward {
            vars,
            t,
            v,
            t_freq: fused.t_freq,
            v_freq: fused.v_freq,
            logits,
        })
    }

    /// Loss and parameter gradients for one training batch.
    pub fn train_step<R: Rng + ?Sized>(
        &self,
        batch: &Batch,
        retriever: Option<&Retriever<'_>>,
        rngs: TrainRngs<'_, R>,
    ) -> Result<StepOutput> {
        let o = self.config.options;
        let mut tape = GradTape::new();
        let f = self.record(&mut tape, batch, retriever, Some(&mut *rngs.dropout))?;
        let ce = record_cross_entropy(&mut tape, f.logits, &batch.labels)?;
        let (loss_var, breakdown) = if o.contrastive {
            let (ct, cv) = match o.contrastive_space {
                ContrastiveSpace::Projected => (f.t, f.v),
                ContrastiveSpace::Spectral => (f.t_freq, f.v_freq),
            };
            let t_aug = record_augment(&mut tape, ct, o.augment_sigma, &mut *rngs.augment)?;
            let v_aug = record_augment(&mut tape, cv, o.augment_sigma, &mut *rngs.augment)?;
            let it = record_info_nce(&mut tape, ct, t_aug, TAU_INTRA)?;
            let iv = record_info_nce(&mut tape, cv, v_aug, TAU_INTRA)?;
            let cross = record_info_nce(&mut tape, ct, cv, TAU_CROSS)?;
            let scalar = |tape: &GradTape, v: Var| tape.value(v).data()[0];
            let breakdown = total_loss(
                scalar(&tape, ce),
                scalar(&tape, it),
                scalar(&tape, iv),
                scalar(&tape, cross),
            );
            let intra = tape.add(it, iv)?;
            let intra = tape.scale(intra, INTRA_WEIGHT / 2.0)?;
            let cross = tape.scale(cross, CROSS_WEIGHT)?;
            let extra = tape.add(intra, cross)?;
            (tape.add(ce, extra)?, breakdown)
        } else {
            (ce, total_loss(tape.value(ce).data()[0], 0.0, 0.0, 0.0))
        };
        let mut grads = tape.backward(loss_var)?;
        let grads = f
            .vars
            .list()
            .into_iter()
            .zip(self.params.named_tensors())
            .map(|(var, (_, t))| grads.take(var).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        Ok(StepOutput {
            loss: breakdown,
            grads,
            logits: tape.value(f.logits).clone(),
        })
    }

    /// Eval-mode logits `[B×C]`.
    pub fn predict(&self, batch: &Batch, retriever: Option<&Retriever<'_>>) -> Result<Tensor> {
        let mut tape = GradTape::new();
        let f = self.record::<rand_chacha::ChaCha8Rng>(&mut tape, batch, retriever, None)?;
        Ok(tape.value(f.logits).clone())
    }

    /// Eval-mode logits for every sample of a manifest, in chunks.
    pub fn predict_all(&self, m: &DatasetManifest, indices: &[usize], retriever: Option<&Retriever<'_>>) -> Result<Tensor> {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(indices.len());
        for chunk in indices.chunks(256) {
            let logits = self.predict(&Batch::from_manifest(m, chunk)?, retriever)?;
            rows.extend((0..logits.rows()).map(|r| logits.row(r).to_vec()));
        }
        Tensor::from_rows(&rows)
    }

    /// Projected features and their spectra, eval mode.
    pub fn spectra(&self, batch: &Batch) -> Result<(Tensor, Tensor)> {
        let mut tape = GradTape::new();
        let vars = self.params.bind(&mut tape)?;
        let text = tape.constant(batch.text.clone())?;
        let image = tape.constant(batch.image.clone())?;
        let t = tape.linear(text, vars.text_proj.0, vars.text_proj.1)?;
        let v = tape.linear(image, vars.image_proj.0, vars.image_proj.1)?;
        let tf = tape.dft_magnitude(t)?;
        let vf = tape.dft_magnitude(v)?;
        Ok((tape.value(tf).clone(), tape.value(vf).clone()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            tensors: self
                .params
                .named_tensors()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        write_atomic(path.as_ref(), &serde_json::to_vec(&file)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CheckpointFile = serde_json::from_str(&text)?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(Error::schema(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                file.format,
                file.version
            )));
        }
        let mut model = QfsruModel::new(file.config, 0)?;
        let names: Vec<String> = model.params.named_tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != file.tensors.len() {
            return Err(Error::schema(format!(
                "checkpoint has {} tensors, model has {}",
                file.tensors.len(),
                names.len()
            )));
        }
        for ((slot, name), saved) in model.params.tensors_mut().into_iter().zip(&names).zip(file.tensors) {
            if &saved.name != name || saved.shape != slot.shape() {
                return Err(Error::schema(format!(
                    "checkpoint tensor {} {:?} where {} {:?} was expected",
                    saved.name,
                    saved.shape,
                    name,
                    slot.shape()
                )));
            }
            *slot = Tensor::new(saved.shape, saved.data)?.ensure_finite("checkpoint")?;
        }
        Ok(model)
    }
}

/// Aggregated knowledge for each row, from the detached enhanced features.
fn knowledge_rows(retriever: &Retriever<'_>, t: &Tensor, v: &Tensor) -> Result<Tensor> {
    let rows = (0..t.rows())
        .map(|r| {
            let q = form_query(t.row(r), v.row(r))?;
            Ok(retriever.retrieve(&q)?.k_agg)
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    tensors: Vec<NamedTensor>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_config() -> ModelConfig {
        let mut c = ModelConfig::new(8, 3, FeatureLayout::Precomputed);
        c.hidden = [6, 5];
        c.projection_init = ProjectionInit::Uniform;
        c
    }

    fn toy_batch(rng: &mut ChaCha8Rng) -> Batch {
        let text: Vec<Vec<f64>> = (0..3).map(|_| (0..TEXT_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let image: Vec<Vec<f64>> = (0..3).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        Batch {
            text: Tensor::from_rows(&text).unwrap(),
            image: Tensor::from_rows(&image).unwrap(),
            labels: vec![0, 2, 1],
        }
    }

    #[test]
    fn names_and_tensors_line_up() {
        let m = QfsruModel::new(toy_config(), 1).unwrap();
        let mut p = m.params.clone();
        let shapes: Vec<Vec<usize>> = p.tensors_mut().iter().map(|t| t.shape().to_vec()).collect();
        let named: Vec<Vec<usize>> = m.params.named_tensors().iter().map(|(_, t)| t.shape().to_vec()).collect();
        assert_eq!(shapes, named);
        let mut tape = GradTape::new();
        assert_eq!(m.params.bind(&mut tape).unwrap().list().len(), named.len());
    }

    #[test]
    fn knowledge_fusion_requires_retrieval() {
        let mut c = toy_config();
        c.options.fusion_mode = FusionMode::FreqPlusKnowledge;
        assert!(matches!(QfsruModel::new(c.clone(), 0), Err(Error::Config(_))));
        c.options.retrieval = true;
        let m = QfsruModel::new(c, 0).unwrap();
        assert_eq!(m.params.head.in_dim(), 24);
    }

    #[test]
    fn without_contrastive_total_is_ce() {
        let mut c = toy_config();
        c.options.contrastive = false;
        let m = QfsruModel::new(c, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = toy_batch(&mut rng);
        let (mut d, mut a) = (ChaCha8Rng::seed_from_u64(0), ChaCha8Rng::seed_from_u64(1));
        let out = m
            .train_step(&b, None, TrainRngs { dropout: &mut d, augment: &mut a })
            .unwrap();
        assert_eq!(out.loss.total, out.loss.ce);
    }

    #[test]
    fn whole_model_gradient_matches_finite_differences() {
        let m = QfsruModel::new(toy_config(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = toy_batch(&mut rng);
        let (mut d, mut a) = (ChaCha8Rng::seed_from_u64(5), ChaCha8Rng::seed_from_u64(6));
        let out = m
            .train_step(&b, None, TrainRngs { dropout: &mut d, augment: &mut a })
            .unwrap();
        // Three coordinates of every tensor, same dropout and augmentation draws.
        let loss_at = |params: &ModelParams| -> f64 {
            let model = QfsruModel {
                config: m.config.clone(),
                params: params.clone(),
            };
            let (mut d, mut a) = (ChaCha8Rng::seed_from_u64(5), ChaCha8Rng::seed_from_u64(6));
            model
                .train_step(&b, None, TrainRngs { dropout: &mut d, augment: &mut a })
                .unwrap()
                .loss
                .total
        };
        let h = 1e-5;
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        let count = m.params.named_tensors().len();
        for ti in 0..count {
            let len = m.params.named_tensors()[ti].1.len();
            for k in [0, len / 2, len - 1] {
                let mut p = m.params.clone();
                p.tensors_mut()[ti].data_mut()[k] += h;
                let plus = loss_at(&p);
                p.tensors_mut()[ti].data_mut()[k] -= 2.0 * h;
                let minus = loss_at(&p);
                numeric.push((plus - minus) / (2.0 * h));
                analytic.push(out.grads[ti].data()[k]);
            }
        }
        let err = crate::gradcheck::relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "relative error {err:e}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut c = toy_config();
        c.options.retrieval = true;
        c.options.fusion_mode = FusionMode::FreqPlusKnowledge;
        let m = QfsruModel::new(c, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        let back = QfsruModel::load(&path).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.config, m.config);
        std::fs::write(&path, "{\"format\":\"other\"}").unwrap();
        assert!(QfsruModel::load(&path).is_err());
    }

    #[test]
    fn eye_projection_passes_synthetic_signal() {
        let cfg = SynthConfig {
            per_class: 2,
            d_model: 16,
            noise: 0.0,
            ..SynthConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        let m = QfsruModel::new(ModelConfig::for_manifest(&data.manifest), 0).unwrap();
        let b = Batch::from_manifest(&data.manifest, &[0, 1]).unwrap();
        let (tf, vf) = m.spectra(&b).unwrap();
        // Class 0 owns bin 1 alone; a sinusoid of amplitude a has |X| = a·d/2.
        let peak = cfg.amplitude * 8.0;
        assert!((tf.row(0)[1] - peak).abs() < 1e-9);
        assert!((vf.row(0)[1] - peak).abs() < 1e-9);
    }
}
