use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Scalar, Tensor};
use crate::error::Result;
use crate::model::{FusionMode, InitMode, ModelConfig};
use crate::nn::ConvParams;

/// Standard deviation of the Gaussian initializer.
pub const PAPER_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStage<T> {
    /// 2x2 conv applied after nearest-neighbour upsampling.
    pub up: ConvParams<T>,
    pub convs: Vec<ConvParams<T>>,
}

/// All learnable weights. Conditioning network first, then the segmentation
/// encoder, fusion layers, decoder and output head.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    pub cond_net: Vec<Vec<ConvParams<T>>>,
    pub seg_encoder: Vec<Vec<ConvParams<T>>>,
    /// One entry per encoder stage plus a final bottleneck entry. For
    /// `cosine_tanh` these are the 1x1 code projections.
    pub fusion: Vec<Option<ConvParams<T>>>,
    pub seg_decoder: Vec<DecoderStage<T>>,
    pub head: ConvParams<T>,
}

impl<T: Scalar> Parameters<T> {
    /// Zero-filled parameters laid out for `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut cond_net = Vec::new();
        let mut in_ch = 3;
        for (&n, &c) in cfg.cond_convs_per_stage.iter().zip(&cfg.cond_channels) {
            let mut stage = Vec::new();
            for _ in 0..n {
                stage.push(ConvParams::zeros(3, in_ch, c)?);
                in_ch = c;
            }
            cond_net.push(stage);
        }

        let mut seg_encoder = Vec::new();
        let mut in_ch = 3;
        for &c in &cfg.stage_channels {
            let mut stage = Vec::new();
            for _ in 0..cfg.seg_convs_per_stage {
                stage.push(ConvParams::zeros(3, in_ch, c)?);
                in_ch = c;
            }
            seg_encoder.push(stage);
        }

        let d = cfg.latent_dim;
        let fusion_layer = |c: usize| match cfg.fusion_mode {
            FusionMode::CosineTanh => ConvParams::zeros(1, d, c),
            _ => ConvParams::zeros(1, c + d, c),
        };
        let mut fusion = Vec::new();
        for (s, &c) in cfg.stage_channels.iter().enumerate() {
            fusion.push(if cfg.fuses_stage(s) { Some(fusion_layer(c)?) } else { None });
        }
        let deepest = *cfg.stage_channels.last().expect("validated");
        fusion.push(if cfg.fuses_bottleneck() {
            Some(fusion_layer(deepest)?)
        } else {
            None
        });

        let mut seg_decoder = Vec::new();
        let mut in_ch = deepest;
        for &c in cfg.stage_channels.iter().rev() {
            let up = ConvParams::zeros(2, in_ch, c)?;
            let mut convs = Vec::new();
            let mut conv_in = 2 * c;
            for _ in 0..cfg.seg_convs_per_stage {
                convs.push(ConvParams::zeros(3, conv_in, c)?);
                conv_in = c;
            }
            seg_decoder.push(DecoderStage { up, convs });
            in_ch = c;
        }
        let head = ConvParams::zeros(1, cfg.stage_channels[0], 1)?;

        Ok(Parameters {
            cond_net,
            seg_encoder,
            fusion,
            seg_decoder,
            head,
        })
    }

    /// Freshly initialized parameters; deterministic in `seed`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, PAPER_INIT_STD).expect("valid std");
        for (_, layer) in p.layers_mut() {
            let fan_in = layer.kernel() * layer.kernel() * layer.in_ch();
            let bound = (6.0 / fan_in as f64).sqrt();
            for w in layer.weight.data_mut() {
                let v = match cfg.init_mode {
                    InitMode::PaperGaussian => normal.sample(&mut rng),
                    InitMode::FanInScaled => rng.random_range(-bound..bound),
                };
                *w = T::lit(v);
            }
        }
        Ok(p)
    }

    /// Every conv layer with its dotted name, in canonical order.
    pub fn layers(&self) -> Vec<(String, &ConvParams<T>)> {
        let mut out = Vec::new();
        for (s, stage) in self.cond_net.iter().enumerate() {
            for (j, c) in stage.iter().enumerate() {
                out.push((format!("cond.stage{}.conv{}", s + 1, j + 1), c));
            }
        }
        for (s, stage) in self.seg_encoder.iter().enumerate() {
            for (j, c) in stage.iter().enumerate() {
                out.push((format!("seg.enc.stage{}.conv{}", s + 1, j + 1), c));
            }
        }
        let last = self.fusion.len() - 1;
        for (s, f) in self.fusion.iter().enumerate() {
            if let Some(f) = f {
                let name = if s == last {
                    "seg.fuse.bottleneck".to_string()
                } else {
                    format!("seg.fuse.stage{}", s + 1)
                };
                out.push((name, f));
            }
        }
        let n = self.seg_decoder.len();
        for (i, d) in self.seg_decoder.iter().enumerate() {
            let s = n - i;
            out.push((format!("seg.dec.stage{s}.up"), &d.up));
            for (j, c) in d.convs.iter().enumerate() {
                out.push((format!("seg.dec.stage{s}.conv{}", j + 1), c));
            }
        }
        out.push(("seg.head".to_string(), &self.head));
        out
    }

    pub fn layers_mut(&mut self) -> Vec<(String, &mut ConvParams<T>)> {
        let names: Vec<String> = self.layers().into_iter().map(|(n, _)| n).collect();
        let mut refs: Vec<&mut ConvParams<T>> = Vec::new();
        refs.extend(self.cond_net.iter_mut().flatten());
        refs.extend(self.seg_encoder.iter_mut().flatten());
        refs.extend(self.fusion.iter_mut().flatten());
        for d in self.seg_decoder.iter_mut() {
            refs.push(&mut d.up);
            refs.extend(d.convs.iter_mut());
        }
        refs.push(&mut self.head);
        names.into_iter().zip(refs).collect()
    }

    /// Every parameter tensor with its unique dotted name
    /// (e.g. `cond.stage3.conv1.weight`).
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers()
            .into_iter()
            .flat_map(|(n, l)| [(format!("{n}.weight"), &l.weight), (format!("{n}.bias"), &l.bias)])
            .collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers_mut()
            .into_iter()
            .flat_map(|(_, l)| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in self.tensors_mut() {
            t.zero_grad();
        }
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        let conv = |c: &ConvParams<T>| ConvParams {
            weight: c.weight.cast(),
            bias: c.bias.cast(),
            stride: c.stride,
            padding: c.padding,
        };
        Parameters {
            cond_net: self.cond_net.iter().map(|s| s.iter().map(conv).collect()).collect(),
            seg_encoder: self.seg_encoder.iter().map(|s| s.iter().map(conv).collect()).collect(),
            fusion: self.fusion.iter().map(|f| f.as_ref().map(conv)).collect(),
            seg_decoder: self
                .seg_decoder
                .iter()
                .map(|d| DecoderStage {
                    up: conv(&d.up),
                    convs: d.convs.iter().map(conv).collect(),
                })
                .collect(),
            head: conv(&self.head),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn names_are_unique_and_ordered() {
        for mode in [FusionMode::MultiScale, FusionMode::BottleneckOnly, FusionMode::CosineTanh] {
            let mut cfg = ModelConfig::desk();
            cfg.fusion_mode = mode;
            let p = Parameters::<f32>::zeros(&cfg).unwrap();
            let names: Vec<String> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
            let unique: HashSet<&String> = names.iter().collect();
            assert_eq!(unique.len(), names.len());
            assert_eq!(names[0], "cond.stage1.conv1.weight");
            assert_eq!(names.last().unwrap(), "seg.head.bias");
            let mut p2 = p.clone();
            assert_eq!(p2.tensors_mut().len(), names.len());
        }
    }

    #[test]
    fn variants_share_encoder_decoder_shapes() {
        let mut a = ModelConfig::desk();
        a.fusion_mode = FusionMode::MultiScale;
        let mut b = a.clone();
        b.fusion_mode = FusionMode::BottleneckOnly;
        let shapes = |cfg: &ModelConfig| -> Vec<(String, Vec<usize>)> {
            Parameters::<f32>::zeros(cfg)
                .unwrap()
                .named_tensors()
                .into_iter()
                .filter(|(n, _)| !n.starts_with("seg.fuse.stage"))
                .map(|(n, t)| (n, t.shape().to_vec()))
                .collect()
        };
        assert_eq!(shapes(&a), shapes(&b));
        let pb = Parameters::<f32>::zeros(&b).unwrap();
        assert!(pb.named_tensors().iter().any(|(n, _)| n.starts_with("seg.fuse.bottleneck")));
        assert!(!pb.named_tensors().iter().any(|(n, _)| n.starts_with("seg.fuse.stage")));
    }

    #[test]
    fn paper_fusion_widths() {
        let p = Parameters::<f32>::zeros(&ModelConfig::paper()).unwrap();
        let f1 = p.fusion[0].as_ref().unwrap();
        assert_eq!(f1.weight.shape(), &[1, 1, 576, 64]);
        assert_eq!(p.cond_net.iter().map(Vec::len).sum::<usize>(), 13);
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = ModelConfig::desk();
        let a = Parameters::<f32>::init(&cfg, 3).unwrap();
        let b = Parameters::<f32>::init(&cfg, 3).unwrap();
        let c = Parameters::<f32>::init(&cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_init_std() {
        let mut cfg = ModelConfig::desk();
        cfg.init_mode = InitMode::PaperGaussian;
        let p = Parameters::<f64>::init(&cfg, 11).unwrap();
        let mut checked = 0;
        for (name, layer) in p.layers() {
            let w = layer.weight.data();
            if w.len() < 10_000 {
                continue;
            }
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
            let std = var.sqrt();
            assert!((std - 0.01).abs() < 0.002, "{name}: std {std}");
            checked += 1;
        }
        assert!(checked > 0);
    }
}
