//! Glue between the benchmark, the model and the evaluator: run
//! configuration, tensor conversion, the training loop and k-shot evaluation.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{OptimizerState, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::eval::{evaluate, max_prob, EvalItem, EvalOptions, EvalReport, Mask, ProbMap};
use crate::kv;
use crate::model::{train::train_step, train::Sample, LogoNet, ModelConfig};
use crate::synth::{DatasetFile, GenParams, Layout, SceneParams, Triplet, Variation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Train and test share classes; records are split 90/10.
    Traditional,
    /// Test classes are disjoint from training classes.
    OneShot,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Traditional => "traditional",
            Regime::OneShot => "one_shot",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traditional" => Ok(Regime::Traditional),
            "one_shot" => Ok(Regime::OneShot),
            _ => Err(Error::Config(format!("unknown regime {s:?}"))),
        }
    }
}

/// Every setting of a run: the model plus data, optimization and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub seed: u64,
    pub batch_size: usize,
    pub iterations: u64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub checkpoint_every: u64,
    pub threshold: f64,
    pub iou_threshold: f64,
    pub global_box: bool,
    pub k: usize,
    pub regime: Regime,
    pub classes: usize,
    pub per_class: usize,
    pub train_classes: usize,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub clutter: u32,
    pub palette_jitter: u8,
    pub dropout: f64,
    /// Recolours each training pair by a random channel permutation and
    /// optional inversion, applied identically to query and target.
    pub color_augment: bool,
}

impl RunConfig {
    /// Small-scale settings that train in minutes on one core.
    pub fn desk() -> Self {
        RunConfig {
            model: ModelConfig::desk(),
            seed: 0,
            batch_size: 8,
            iterations: 3000,
            learning_rate: 0.005,
            momentum: 0.9,
            weight_decay: 0.0005,
            checkpoint_every: 500,
            threshold: 0.5,
            iou_threshold: 0.5,
            global_box: false,
            k: 1,
            regime: Regime::OneShot,
            classes: 16,
            per_class: 6,
            train_classes: 12,
            scale_lo: 0.25,
            scale_hi: 0.6,
            clutter: 1,
            palette_jitter: 12,
            dropout: 0.2,
            color_augment: true,
        }
    }

    /// Full-scale settings: paper network and optimizer, 32 classes with 70
    /// images each.
    pub fn paper() -> Self {
        RunConfig {
            model: ModelConfig::paper(),
            batch_size: 32,
            iterations: 100_000,
            learning_rate: crate::autodiff::optim::PAPER_LEARNING_RATE,
            momentum: crate::autodiff::optim::PAPER_MOMENTUM,
            weight_decay: crate::autodiff::optim::PAPER_WEIGHT_DECAY,
            regime: Regime::Traditional,
            classes: 32,
            per_class: 70,
            train_classes: 20,
            scale_lo: 0.1,
            scale_hi: 0.6,
            color_augment: false,
            ..RunConfig::desk()
        }
    }

    pub fn gen_params(&self) -> GenParams {
        GenParams {
            query_size: self.model.query_size,
            scene: SceneParams::new(self.model.target_size, self.scale_lo, self.scale_hi, self.clutter),
            variation: Variation {
                palette_jitter: self.palette_jitter,
                dropout: self.dropout,
            },
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            threshold: self.threshold,
            iou_threshold: self.iou_threshold,
            global_box: self.global_box,
        }
    }

    pub fn optimizer<T: Scalar>(&self, net: &LogoNet<T>) -> Result<OptimizerState<T>> {
        OptimizerState::new(self.learning_rate, self.momentum, self.weight_decay, net.params.tensors())
    }

    /// Applies one setting; model keys are forwarded to the model config.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        if self.model.apply(key, value)? {
            return Ok(());
        }
        match key {
            "preset" => {
                let model_only = match value {
                    "desk" => RunConfig::desk(),
                    "paper" => RunConfig::paper(),
                    _ => return Err(Error::Config(format!("unknown preset {value:?}"))),
                };
                *self = model_only;
            }
            "seed" => self.seed = kv::parse_value(key, value)?,
            "batch_size" => self.batch_size = kv::parse_value(key, value)?,
            "iterations" => self.iterations = kv::parse_value(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = kv::parse_value(key, value)?,
            "momentum" => self.momentum = kv::parse_value(key, value)?,
            "weight_decay" => self.weight_decay = kv::parse_value(key, value)?,
            "lr_schedule" => {
                if value != "constant" {
                    return Err(Error::Config(format!("only a constant lr_schedule is supported, got {value:?}")));
                }
            }
            "checkpoint_every" => self.checkpoint_every = kv::parse_value(key, value)?,
            "threshold" => self.threshold = kv::parse_value(key, value)?,
            "iou_threshold" => self.iou_threshold = kv::parse_value(key, value)?,
            "global_box" => self.global_box = kv::parse_value(key, value)?,
            "k" => self.k = kv::parse_value(key, value)?,
            "regime" => self.regime = value.parse()?,
            "classes" => self.classes = kv::parse_value(key, value)?,
            "per_class" => self.per_class = kv::parse_value(key, value)?,
            "train_classes" => self.train_classes = kv::parse_value(key, value)?,
            "scale_lo" => self.scale_lo = kv::parse_value(key, value)?,
            "scale_hi" => self.scale_hi = kv::parse_value(key, value)?,
            "clutter" => self.clutter = kv::parse_value(key, value)?,
            "palette_jitter" => self.palette_jitter = kv::parse_value(key, value)?,
            "dropout" => self.dropout = kv::parse_value(key, value)?,
            "color_augment" => self.color_augment = kv::parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.threshold) || !(0.0..1.0).contains(&self.iou_threshold) {
            return Err(Error::Config("thresholds must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = self.model.to_pairs();
        let run = [
            ("seed", self.seed.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("iterations", self.iterations.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("momentum", self.momentum.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("lr_schedule", "constant".to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("threshold", self.threshold.to_string()),
            ("iou_threshold", self.iou_threshold.to_string()),
            ("global_box", self.global_box.to_string()),
            ("k", self.k.to_string()),
            ("regime", self.regime.to_string()),
            ("classes", self.classes.to_string()),
            ("per_class", self.per_class.to_string()),
            ("train_classes", self.train_classes.to_string()),
            ("scale_lo", self.scale_lo.to_string()),
            ("scale_hi", self.scale_hi.to_string()),
            ("clutter", self.clutter.to_string()),
            ("palette_jitter", self.palette_jitter.to_string()),
            ("dropout", self.dropout.to_string()),
            ("color_augment", self.color_augment.to_string()),
        ];
        out.extend(run.into_iter().map(|(k, v)| (k.to_string(), v)));
        out.retain(|(k, _)| k != "num_stages");
        out
    }
}

/// Bytes in `[0, 255]` to an `H x W x C` tensor in `[0, 1]`.
pub fn image_tensor<T: Scalar>(bytes: &[u8], side: usize, channels: usize) -> Result<Tensor<T>> {
    Tensor::new(
        vec![side, side, channels],
        bytes.iter().map(|&b| T::lit(b as f64 / 255.0)).collect(),
    )
}

/// Network-ready sample from a dataset record.
pub fn to_sample<T: Scalar>(t: &Triplet, layout: Layout) -> Result<Sample<T>> {
    let side = layout.target_size;
    Ok(Sample {
        query: image_tensor(&t.query, layout.query_size, 3)?,
        target: image_tensor(&t.target, side, 3)?,
        mask: Tensor::new(
            vec![side, side],
            t.mask.iter().map(|&m| if m != 0 { T::one() } else { T::zero() }).collect(),
        )?,
    })
}

pub fn to_samples<T: Scalar>(data: &DatasetFile) -> Result<Vec<Sample<T>>> {
    data.records.iter().map(|t| to_sample(t, data.layout())).collect()
}

/// Checks that dataset image sizes match the model.
pub fn check_layout(model: &ModelConfig, layout: Layout) -> Result<()> {
    if layout.query_size != model.query_size || layout.target_size != model.target_size {
        return Err(Error::ShapeMismatch {
            op: "dataset",
            expected: vec![model.query_size, model.target_size],
            actual: vec![layout.query_size, layout.target_size],
        });
    }
    Ok(())
}

/// Batch indices for `iteration`, drawn with replacement from a stream keyed by
/// `(seed, iteration)` so interrupted runs resume on the same batches.
pub fn batch_indices(seed: u64, iteration: u64, batch_size: usize, n: usize) -> Vec<usize> {
    if n <= batch_size {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::synth::instance_seed(seed, 0xBA7C, iteration as usize));
    (0..batch_size).map(|_| rng.random_range(0..n)).collect()
}

const CHANNEL_ORDERS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Recolours an `H x W x 3` image: output channel `c` takes input channel
/// `order[c]`, then optionally `x -> 1 - x`.
pub fn recolor<T: Scalar>(image: &Tensor<T>, order: [usize; 3], invert: bool) -> Result<Tensor<T>> {
    let data = image
        .data()
        .chunks_exact(3)
        .flat_map(|px| order.map(|c| if invert { T::one() - px[c] } else { px[c] }))
        .collect();
    Tensor::new(image.shape().to_vec(), data)
}

/// Training batch for `iteration`; with `color_augment` every sample gets its
/// own recolouring, drawn from a stream keyed by `(seed, iteration)`.
pub fn training_batch<T: Scalar>(samples: &[Sample<T>], cfg: &RunConfig, iteration: u64) -> Result<Vec<Sample<T>>> {
    let indices = batch_indices(cfg.seed, iteration, cfg.batch_size, samples.len());
    if !cfg.color_augment {
        return Ok(indices.into_iter().map(|i| samples[i].clone()).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::synth::instance_seed(cfg.seed, 0xC010, iteration as usize));
    indices
        .into_iter()
        .map(|i| {
            let order = CHANNEL_ORDERS[rng.random_range(0..CHANNEL_ORDERS.len())];
            let invert = rng.random_bool(0.5);
            let s = &samples[i];
            Ok(Sample {
                query: recolor(&s.query, order, invert)?,
                target: recolor(&s.target, order, invert)?,
                mask: s.mask.clone(),
            })
        })
        .collect()
}

/// SGD loop from `start` to `end` (exclusive). `on_step` sees each
/// `(iteration, loss)` and the current network; returning an error aborts.
pub fn train_range<T: Scalar>(
    net: &mut LogoNet<T>,
    opt: &mut OptimizerState<T>,
    samples: &[Sample<T>],
    cfg: &RunConfig,
    start: u64,
    end: u64,
    mut on_step: impl FnMut(u64, f64, &LogoNet<T>, &OptimizerState<T>) -> Result<()>,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    for it in start..end {
        let batch = training_batch(samples, cfg, it)?;
        let loss = train_step(net, opt, &batch)?;
        on_step(it, loss.to_f64().unwrap_or(f64::NAN), net, opt)?;
    }
    Ok(())
}

/// Trains a fresh network for `cfg.iterations` and returns it with the loss
/// trace.
pub fn train_fresh(cfg: &RunConfig, samples: &[Sample<f32>]) -> Result<(LogoNet<f32>, Vec<f64>)> {
    cfg.validate()?;
    let mut net = LogoNet::new(cfg.model.clone(), cfg.seed)?;
    let mut opt = cfg.optimizer(&net)?;
    let mut losses = Vec::with_capacity(cfg.iterations as usize);
    train_range(&mut net, &mut opt, samples, cfg, 0, cfg.iterations, |_, l, _, _| {
        losses.push(l);
        Ok(())
    })?;
    Ok((net, losses))
}

/// Probability map for every record.
pub fn predict_all<T: Scalar>(net: &LogoNet<T>, data: &DatasetFile) -> Result<Vec<ProbMap>> {
    check_layout(&net.config, data.layout())?;
    data.records
        .iter()
        .map(|r| {
            let s: Sample<T> = to_sample(r, data.layout())?;
            ProbMap::from_tensor(&net.predict_mask(&s.query, &s.target)?)
        })
        .collect()
}

/// For each record, the indices of the `k` records whose queries are combined
/// for it: itself, then the following records that share its target scene,
/// cyclically. `k = 1` is plain single-query evaluation.
pub fn kshot_groups(data: &DatasetFile, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let mut by_target: HashMap<(u32, u64), Vec<usize>> = HashMap::new();
    for (i, r) in data.records.iter().enumerate() {
        by_target.entry((r.class_id, r.scene_seed)).or_default().push(i);
    }
    data.records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let group = &by_target[&(r.class_id, r.scene_seed)];
            if k > group.len() {
                return Err(Error::invalid(format!(
                    "k = {k} exceeds the {} query samples available for class {}",
                    group.len(),
                    r.class_id
                )));
            }
            let pos = group.iter().position(|&j| j == i).expect("record is in its own group");
            Ok((0..k).map(|o| group[(pos + o) % group.len()]).collect())
        })
        .collect()
}

/// Evaluation items for k-shot: the combined map of each record's group.
pub fn kshot_items(data: &DatasetFile, probs: &[ProbMap], k: usize) -> Result<Vec<EvalItem>> {
    let t = data.target_size;
    kshot_groups(data, k)?
        .into_iter()
        .zip(&data.records)
        .map(|(group, r)| {
            let maps: Vec<ProbMap> = group.iter().map(|&j| probs[j].clone()).collect();
            Ok(EvalItem {
                class_id: r.class_id,
                prob: max_prob(&maps)?,
                gt: Mask::from_bytes(t, t, &r.mask)?,
            })
        })
        .collect()
}

pub fn class_ids(data: &DatasetFile) -> Vec<u32> {
    data.classes.iter().map(|c| c.class_id).collect()
}

/// Evaluates `net` on `data` with `k`-shot query combination.
pub fn evaluate_dataset<T: Scalar>(net: &LogoNet<T>, data: &DatasetFile, k: usize, opts: &EvalOptions) -> Result<EvalReport> {
    let probs = predict_all(net, data)?;
    evaluate(&kshot_items(data, &probs, k)?, &class_ids(data), opts)
}

/// Baseline that marks every pixel as foreground.
pub fn all_foreground_report(data: &DatasetFile, opts: &EvalOptions) -> Result<EvalReport> {
    let t = data.target_size;
    let items = data
        .records
        .iter()
        .map(|r| {
            Ok(EvalItem {
                class_id: r.class_id,
                prob: ProbMap::new(t, t, vec![1.0; t * t])?,
                gt: Mask::from_bytes(t, t, &r.mask)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate(&items, &class_ids(data), opts)
}
