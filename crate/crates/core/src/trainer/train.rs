use log::info;
use rand::seq::SliceRandom;
use serde::Serialize;

use super::config::{TrainConfig, Variant};
use super::folds::{fold_split, resolve_folds};
use super::metrics::{compute_metrics, Metrics, MetricsSummary};
use crate::data::{DatasetManifest, KnowledgeBase};
use crate::error::{Error, Result};
use crate::kernel::{adam_step, AdamConfig, AdamState, Tensor};
use crate::model::{Batch, QfsruModel, TrainRngs};
use crate::objectives::LossBreakdown;
use crate::quantum::Retriever;
use crate::rng::{substream, Stream};

/// Learning rate for 0-based `epoch`: `lr·decay^⌊epoch/every⌋`.
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr * cfg.lr_decay.powi((epoch / cfg.lr_decay_every) as i32)
}

/// Counts consecutive epochs without a strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::NEG_INFINITY,
            stale: 0,
        }
    }

    /// Returns `(improved, stop)`.
    pub fn observe(&mut self, metric: f64) -> (bool, bool) {
        if metric > self.best {
            self.best = metric;
            self.stale = 0;
            (true, false)
        } else {
            self.stale += 1;
            (false, self.stale >= self.patience)
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted means over the epoch's batches.
    pub train_loss: LossBreakdown,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    /// Parameters from the best validation epoch.
    pub model: QfsruModel,
    pub best_epoch: usize,
    pub metrics: Metrics,
    pub history: Vec<EpochRecord>,
    pub train_images: Vec<String>,
    pub val_images: Vec<String>,
}

fn make_retriever<'a>(model: &QfsruModel, kb: Option<&'a KnowledgeBase>) -> Result<Option<Retriever<'a>>> {
    let o = &model.config.options;
    if !o.retrieval {
        return Ok(None);
    }
    let kb = kb.ok_or_else(|| Error::Retrieval("this configuration needs a knowledge base".into()))?;
    if kb.dim() != model.config.d_model {
        return Err(Error::dim(format!(
            "knowledge width {} differs from d_model {}",
            kb.dim(),
            model.config.d_model
        )));
    }
    Ok(Some(Retriever::new(kb, o.top_k, o.retrieval_temperature, o.similarity)?))
}

fn evaluate_with(
    model: &QfsruModel,
    m: &DatasetManifest,
    indices: &[usize],
    retriever: Option<&Retriever<'_>>,
) -> Result<Metrics> {
    if indices.is_empty() {
        return Err(Error::config("evaluation split is empty"));
    }
    let logits = model.predict_all(m, indices, retriever)?;
    let labels: Vec<usize> = indices.iter().map(|&i| m.samples[i].answer_class).collect();
    Ok(compute_metrics(&logits, &labels, model.config.classes))
}

/// Eval-mode metrics of `model` on the samples at `indices`.
pub fn evaluate(
    model: &QfsruModel,
    m: &DatasetManifest,
    indices: &[usize],
    kb: Option<&KnowledgeBase>,
) -> Result<Metrics> {
    if m.classes != model.config.classes || m.image_dim() != model.config.image_dim() {
        return Err(Error::schema(format!(
            "checkpoint expects C = {} and image width {}; data has C = {} and width {}",
            model.config.classes,
            model.config.image_dim(),
            m.classes,
            m.image_dim()
        )));
    }
    let retriever = make_retriever(model, kb)?;
    evaluate_with(model, m, indices, retriever.as_ref())
}

fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) {
    let total: f64 = grads.iter().map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum();
    let norm = total.sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn images_of(m: &DatasetManifest, idx: &[usize]) -> Vec<String> {
    let mut ids: Vec<String> = idx.iter().map(|&i| m.samples[i].image_id.clone()).collect();
    ids.sort();
    ids.dedup();
    ids
}

/// Trains one fold and returns the best-validation parameters.
pub fn train_fold(
    m: &DatasetManifest,
    kb: Option<&KnowledgeBase>,
    cfg: &TrainConfig,
    fold: usize,
    train: &[usize],
    val: &[usize],
) -> Result<FoldResult> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::config(format!("fold {fold} has an empty train or validation split")));
    }
    let mut init = substream(cfg.seed, Stream::Init, fold as u64);
    let mut model = QfsruModel::with_rng(cfg.model_config(m), &mut init)?;
    let retriever = make_retriever(&model, kb)?;
    let mut shuffle = substream(cfg.seed, Stream::Shuffle, fold as u64);
    let mut dropout = substream(cfg.seed, Stream::Dropout, fold as u64);
    let mut augment = substream(cfg.seed, Stream::Augment, fold as u64);

    let adam = AdamConfig::default();
    let mut states: Vec<AdamState> = model
        .params
        .named_tensors()
        .iter()
        .map(|(_, t)| AdamState::new(t.len()))
        .collect();
    let mut step = 0u64;
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = (model.clone(), 0usize, Metrics::default());
    let mut history = Vec::new();
    let mut order = train.to_vec();

    for epoch in 0..cfg.max_epochs {
        let lr = lr_at(cfg, epoch);
        order.shuffle(&mut shuffle);
        let mut sums = [0.0; 5];
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::from_manifest(m, chunk)?;
            let diverged = |loss: f64| Error::Diverged {
                epoch,
                batch: b,
                loss,
            };
            let out = model
                .train_step(
                    &batch,
                    retriever.as_ref(),
                    TrainRngs {
                        dropout: &mut dropout,
                        augment: &mut augment,
                    },
                )
                .map_err(|e| match e {
                    Error::NonFinite(_) => diverged(f64::NAN),
                    other => other,
                })?;
            if !out.loss.total.is_finite() {
                return Err(diverged(out.loss.total));
            }
            let l = out.loss;
            let w = chunk.len() as f64;
            for (s, v) in sums.iter_mut().zip([l.ce, l.intra_text, l.intra_image, l.cross, l.total]) {
                *s += w * v;
            }
            let mut grads = out.grads;
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            step += 1;
            for ((p, g), s) in model.params.tensors_mut().into_iter().zip(&grads).zip(&mut states) {
                adam_step(p.data_mut(), g.data(), s, &adam, lr, cfg.weight_decay, step);
            }
        }
        let n = order.len() as f64;
        let train_loss = LossBreakdown {
            ce: sums[0] / n,
            intra_text: sums[1] / n,
            intra_image: sums[2] / n,
            cross: sums[3] / n,
            total: sums[4] / n,
        };
        let metrics = evaluate_with(&model, m, val, retriever.as_ref())?;
        info!(
            "{} fold {fold} epoch {epoch}: lr {lr:.3e} loss {:.5} val acc {:.4}",
            cfg.variant.key(),
            train_loss.total,
            metrics.accuracy
        );
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_accuracy: metrics.accuracy,
        });
        let (improved, stop) = stopper.observe(metrics.accuracy);
        if improved {
            best = (model.clone(), epoch, metrics);
        }
        if stop {
            break;
        }
    }
    Ok(FoldResult {
        fold,
        model: best.0,
        best_epoch: best.1,
        metrics: best.2,
        history,
        train_images: images_of(m, train),
        val_images: images_of(m, val),
    })
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub variant: Variant,
    pub folds: Vec<FoldResult>,
    pub summary: MetricsSummary,
}

/// Trains every requested fold; `workers > 1` runs folds on parallel threads.
pub fn run_cross_validation(
    m: &DatasetManifest,
    kb: Option<&KnowledgeBase>,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<CvReport> {
    cfg.validate()?;
    let assignment = resolve_folds(m, cfg.folds, cfg.seed)?;
    let folds = cfg.fold_list();
    let run = |fold: usize| -> Result<FoldResult> {
        let (train, val) = fold_split(&assignment, fold);
        train_fold(m, kb, cfg, fold, &train, &val)
    };
    let workers = workers.max(1).min(folds.len());
    let mut results: Vec<FoldResult> = if workers == 1 {
        folds.iter().map(|&f| run(f)).collect::<Result<_>>()?
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let mine: Vec<usize> = folds.iter().copied().skip(w).step_by(workers).collect();
                    let run = &run;
                    s.spawn(move || mine.into_iter().map(run).collect::<Result<Vec<_>>>())
                })
                .collect();
            let mut all = Vec::new();
            for h in handles {
                all.extend(h.join().expect("fold worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    results.sort_by_key(|r| r.fold);
    let summary = MetricsSummary::from_folds(&results.iter().map(|r| r.metrics).collect::<Vec<_>>());
    Ok(CvReport {
        variant: cfg.variant,
        folds: results,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};

    #[test]
    fn schedule_is_step_decay() {
        let cfg = TrainConfig::default();
        for e in 0..50 {
            assert_eq!(lr_at(&cfg, e), 5e-5 * 0.98f64.powi((e / 5) as i32));
        }
        assert_eq!(lr_at(&cfg, 4), 5e-5);
        assert_eq!(lr_at(&cfg, 5), 5e-5 * 0.98);
    }

    #[test]
    fn patience_counts_consecutive_misses() {
        let mut es = EarlyStopping::new(0);
        assert_eq!(es.observe(0.5), (true, false));
        assert_eq!(es.observe(0.5), (false, true));
        let mut es = EarlyStopping::new(2);
        es.observe(0.5);
        assert_eq!(es.observe(0.4), (false, false));
        assert_eq!(es.observe(0.6), (true, false));
        assert_eq!(es.observe(0.6), (false, false));
        assert_eq!(es.observe(0.1), (false, true));
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut g = vec![Tensor::vector(vec![3.0, 0.0]), Tensor::vector(vec![4.0])];
        clip_global_norm(&mut g, 1.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
        assert!((g[1].data()[0] - 0.8).abs() < 1e-15);
    }

    fn small_data(noise: f64) -> crate::data::SyntheticData {
        generate_synthetic(&SynthConfig {
            classes: 3,
            per_class: 40,
            d_model: 16,
            noise,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            lr: 1e-3,
            hidden: [32, 16],
            max_epochs: 5,
            only_folds: vec![0],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn noiseless_data_is_learned_within_five_epochs() {
        let data = small_data(0.0);
        let r = run_cross_validation(&data.manifest, Some(&data.knowledge), &small_cfg(), 1).unwrap();
        assert_eq!(r.folds[0].metrics.accuracy, 1.0);
    }

    #[test]
    fn zero_patience_stops_at_first_miss() {
        let data = small_data(0.0);
        let cfg = TrainConfig {
            patience: 0,
            max_epochs: 20,
            ..small_cfg()
        };
        let r = run_cross_validation(&data.manifest, Some(&data.knowledge), &cfg, 1).unwrap();
        let h = &r.folds[0].history;
        let acc: Vec<f64> = h.iter().map(|e| e.val_accuracy).collect();
        let last = acc.len() - 1;
        assert!(acc[..last].windows(2).all(|w| w[1] > w[0]));
        assert!(last == 19 || acc[last] <= acc[last - 1]);
    }

    #[test]
    fn identical_seeds_identical_curves() {
        let data = small_data(0.3);
        let cfg = TrainConfig {
            max_epochs: 3,
            ..small_cfg()
        };
        let a = run_cross_validation(&data.manifest, Some(&data.knowledge), &cfg, 1).unwrap();
        let b = run_cross_validation(&data.manifest, Some(&data.knowledge), &cfg, 1).unwrap();
        let curve = |r: &CvReport| -> Vec<u64> {
            r.folds[0].history.iter().map(|e| e.train_loss.total.to_bits()).collect()
        };
        assert_eq!(curve(&a), curve(&b));
        assert_eq!(a.folds[0].model.params, b.folds[0].model.params);
    }

    #[test]
    fn parallel_folds_match_sequential() {
        let data = small_data(0.3);
        let cfg = TrainConfig {
            max_epochs: 1,
            only_folds: vec![0, 1, 2],
            ..small_cfg()
        };
        let a = run_cross_validation(&data.manifest, Some(&data.knowledge), &cfg, 1).unwrap();
        let b = run_cross_validation(&data.manifest, Some(&data.knowledge), &cfg, 3).unwrap();
        for (x, y) in a.folds.iter().zip(&b.folds) {
            assert_eq!(x.fold, y.fold);
            assert_eq!(x.metrics, y.metrics);
        }
    }

    #[test]
    fn retrieval_without_knowledge_is_an_error() {
        let data = small_data(0.0);
        assert!(matches!(
            run_cross_validation(&data.manifest, None, &small_cfg(), 1),
            Err(Error::Retrieval(_))
        ));
    }
}
