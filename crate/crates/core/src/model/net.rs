use crate::autodiff::{Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{FusionMode, ModelConfig, Parameters};
use crate::nn::{ConvParams, Padding};

/// A conv layer's parameters as recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundConv {
    pub weight: Var,
    pub bias: Var,
    stride: usize,
    padding: Padding,
}

/// Parameters recorded on one tape, mirroring [`Parameters`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub cond_net: Vec<Vec<BoundConv>>,
    pub seg_encoder: Vec<Vec<BoundConv>>,
    pub fusion: Vec<Option<BoundConv>>,
    pub seg_decoder: Vec<(BoundConv, Vec<BoundConv>)>,
    pub head: BoundConv,
}

impl BoundParams {
    /// Weight and bias vars in the canonical parameter order.
    pub fn vars(&self) -> Vec<Var> {
        let mut convs: Vec<&BoundConv> = Vec::new();
        convs.extend(self.cond_net.iter().flatten());
        convs.extend(self.seg_encoder.iter().flatten());
        convs.extend(self.fusion.iter().flatten());
        for (up, cs) in &self.seg_decoder {
            convs.push(up);
            convs.extend(cs.iter());
        }
        convs.push(&self.head);
        convs.into_iter().flat_map(|c| [c.weight, c.bias]).collect()
    }
}

impl BoundParams {
    /// Rebinds parameter vars (canonical order, as from [`BoundParams::vars`])
    /// onto the layer structure of `layout`.
    pub fn from_vars<T: Scalar>(layout: &Parameters<T>, vars: &[Var]) -> Result<BoundParams> {
        let expected = 2 * layout.layers().len();
        if vars.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} parameter vars, got {}",
                vars.len()
            )));
        }
        let mut it = vars.chunks_exact(2);
        let mut next = |c: &ConvParams<T>| {
            let pair = it.next().expect("length checked above");
            BoundConv {
                weight: pair[0],
                bias: pair[1],
                stride: c.stride,
                padding: c.padding,
            }
        };
        let cond_net = layout.cond_net.iter().map(|s| s.iter().map(&mut next).collect()).collect();
        let seg_encoder = layout.seg_encoder.iter().map(|s| s.iter().map(&mut next).collect()).collect();
        let fusion = layout.fusion.iter().map(|f| f.as_ref().map(&mut next)).collect();
        let seg_decoder = layout
            .seg_decoder
            .iter()
            .map(|d| {
                let up = next(&d.up);
                (up, d.convs.iter().map(&mut next).collect())
            })
            .collect();
        let head = next(&layout.head);
        Ok(BoundParams {
            cond_net,
            seg_encoder,
            fusion,
            seg_decoder,
            head,
        })
    }
}

/// Pre-pool features of every encoder stage plus the pooled bottleneck.
#[derive(Debug, Clone)]
pub struct StageFeatures {
    pub stages: Vec<Var>,
    pub bottleneck: Var,
}

/// Query-conditioned mask predictor: conditioning network, segmentation
/// encoder, per-stage fusion and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct LogoNet<T> {
    pub config: ModelConfig,
    pub params: Parameters<T>,
}

fn bind_conv<T: Scalar>(tape: &mut Tape<T>, c: &ConvParams<T>, trainable: bool) -> Result<BoundConv> {
    let (weight, bias) = if trainable {
        (tape.param(&c.weight)?, tape.param(&c.bias)?)
    } else {
        (
            tape.constant(Tensor::new(c.weight.shape().to_vec(), c.weight.data().to_vec())?)?,
            tape.constant(Tensor::new(c.bias.shape().to_vec(), c.bias.data().to_vec())?)?,
        )
    };
    Ok(BoundConv {
        weight,
        bias,
        stride: c.stride,
        padding: c.padding,
    })
}

fn conv<T: Scalar>(tape: &mut Tape<T>, x: Var, c: &BoundConv) -> Result<Var> {
    tape.conv2d(x, c.weight, c.bias, c.stride, c.padding)
}

fn conv_relu<T: Scalar>(tape: &mut Tape<T>, x: Var, c: &BoundConv) -> Result<Var> {
    let y = conv(tape, x, c)?;
    tape.relu(y)
}

impl<T: Scalar> LogoNet<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = Parameters::init(&config, seed)?;
        Ok(LogoNet { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Parameters<T>) -> Result<Self> {
        let layout = Parameters::<T>::zeros(&config)?;
        let expected: Vec<(String, Vec<usize>)> = layout
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        let actual: Vec<(String, Vec<usize>)> = params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected != actual {
            return Err(Error::Config("parameters do not match model config".into()));
        }
        Ok(LogoNet { config, params })
    }

    /// Records every parameter on `tape`. Trainable bindings receive gradients.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Result<BoundParams> {
        let p = &self.params;
        let stages = |list: &Vec<Vec<ConvParams<T>>>, tape: &mut Tape<T>| {
            list.iter()
                .map(|s| s.iter().map(|c| bind_conv(tape, c, trainable)).collect())
                .collect::<Result<Vec<Vec<_>>>>()
        };
        let cond_net = stages(&p.cond_net, tape)?;
        let seg_encoder = stages(&p.seg_encoder, tape)?;
        let fusion = p
            .fusion
            .iter()
            .map(|f| f.as_ref().map(|c| bind_conv(tape, c, trainable)).transpose())
            .collect::<Result<Vec<_>>>()?;
        let seg_decoder = p
            .seg_decoder
            .iter()
            .map(|d| {
                let up = bind_conv(tape, &d.up, trainable)?;
                let convs = d
                    .convs
                    .iter()
                    .map(|c| bind_conv(tape, c, trainable))
                    .collect::<Result<Vec<_>>>()?;
                Ok((up, convs))
            })
            .collect::<Result<Vec<_>>>()?;
        let head = bind_conv(tape, &p.head, trainable)?;
        Ok(BoundParams {
            cond_net,
            seg_encoder,
            fusion,
            seg_decoder,
            head,
        })
    }

    fn check_image(&self, tape: &Tape<T>, x: Var, side: usize, what: &'static str) -> Result<()> {
        let shape = tape.try_value(x)?.shape();
        if shape != [side, side, 3] {
            return Err(Error::ShapeMismatch {
                op: what,
                expected: vec![side, side, 3],
                actual: shape.to_vec(),
            });
        }
        Ok(())
    }

    /// Conditioning network: conv+relu layers with a 2x2 pool closing each
    /// stage, collapsing the query to a `1 x 1 x D` code.
    pub fn encode_query(&self, tape: &mut Tape<T>, bound: &BoundParams, query: Var) -> Result<Var> {
        self.check_image(tape, query, self.config.query_size, "encode_query")?;
        let mut x = query;
        for stage in &bound.cond_net {
            for c in stage {
                x = conv_relu(tape, x, c)?;
            }
            x = tape.maxpool2x2(x)?;
        }
        Ok(x)
    }

    /// Segmentation encoder: per stage, conv+relu layers (feature recorded
    /// before pooling) then a 2x2 pool.
    pub fn encode_target(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        target: Var,
    ) -> Result<StageFeatures> {
        self.check_image(tape, target, self.config.target_size, "encode_target")?;
        let mut x = target;
        let mut stages = Vec::with_capacity(bound.seg_encoder.len());
        for stage in &bound.seg_encoder {
            for c in stage {
                x = conv_relu(tape, x, c)?;
            }
            stages.push(x);
            x = tape.maxpool2x2(x)?;
        }
        Ok(StageFeatures {
            stages,
            bottleneck: x,
        })
    }

    /// Tile the code over the feature grid, concatenate, then 1x1 conv + relu.
    pub fn fuse_stage(
        &self,
        tape: &mut Tape<T>,
        feature: Var,
        code: Var,
        fusion: &BoundConv,
    ) -> Result<Var> {
        let (h, w, c) = tape
            .try_value(feature)?
            .hwc()
            .ok_or_else(|| Error::invalid("fuse_stage expects HxWxC features"))?;
        let d = tape.try_value(code)?.len();
        let wshape = tape.try_value(fusion.weight)?.shape().to_vec();
        if wshape[2] != c + d {
            return Err(Error::ChannelMismatch {
                op: "fuse_stage",
                expected: wshape[2],
                actual: c + d,
            });
        }
        let tiled = tape.tile_spatial(code, h, w)?;
        let joined = tape.concat_channels(feature, tiled)?;
        conv_relu(tape, joined, fusion)
    }

    /// Cosine-similarity alternative: `f * tanh(cos(f_mn, proj(z)))`.
    pub fn fuse_stage_cosine(
        &self,
        tape: &mut Tape<T>,
        feature: Var,
        code: Var,
        projection: &BoundConv,
    ) -> Result<Var> {
        let c = tape
            .try_value(feature)?
            .hwc()
            .ok_or_else(|| Error::invalid("fuse_stage_cosine expects HxWxC features"))?
            .2;
        let out_ch = tape.try_value(projection.weight)?.shape()[3];
        if out_ch != c {
            return Err(Error::ChannelMismatch {
                op: "fuse_stage_cosine",
                expected: out_ch,
                actual: c,
            });
        }
        let proj = conv(tape, code, projection)?;
        let sim = tape.cosine_map(feature, proj)?;
        let gate = tape.tanh(sim)?;
        tape.scale_channels(feature, gate)
    }

    fn fuse(&self, tape: &mut Tape<T>, feature: Var, code: Var, layer: Option<&BoundConv>) -> Result<Var> {
        match (layer, self.config.fusion_mode) {
            (None, _) => Ok(feature),
            (Some(l), FusionMode::CosineTanh) => self.fuse_stage_cosine(tape, feature, code, l),
            (Some(l), _) => self.fuse_stage(tape, feature, code, l),
        }
    }

    /// Applies the configured fusion to every stage and the bottleneck.
    pub fn fuse_all(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        feats: &StageFeatures,
        code: Var,
    ) -> Result<StageFeatures> {
        let n = feats.stages.len();
        let stages = feats
            .stages
            .iter()
            .enumerate()
            .map(|(s, &f)| self.fuse(tape, f, code, bound.fusion[s].as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let bottleneck = self.fuse(tape, feats.bottleneck, code, bound.fusion[n].as_ref())?;
        Ok(StageFeatures { stages, bottleneck })
    }

    /// Decoder: per stage, upsample + 2x2 conv, concat with the fused skip,
    /// conv+relu layers; a final 1x1 conv gives one logit per pixel.
    pub fn decode(&self, tape: &mut Tape<T>, bound: &BoundParams, fused: &StageFeatures) -> Result<Var> {
        if fused.stages.len() != bound.seg_decoder.len() {
            return Err(Error::invalid(format!(
                "decoder needs {} fused stages, got {}",
                bound.seg_decoder.len(),
                fused.stages.len()
            )));
        }
        let mut x = fused.bottleneck;
        for ((up, convs), &skip) in bound.seg_decoder.iter().zip(fused.stages.iter().rev()) {
            let u = tape.upsample_nearest2x(x)?;
            let u = conv_relu(tape, u, up)?;
            x = tape.concat_channels(u, skip)?;
            for c in convs {
                x = conv_relu(tape, x, c)?;
            }
        }
        conv(tape, x, &bound.head)
    }

    /// Full forward pass; returns the `T x T x 1` logits.
    pub fn forward(&self, tape: &mut Tape<T>, bound: &BoundParams, query: Var, target: Var) -> Result<Var> {
        let code = self.encode_query(tape, bound, query)?;
        let feats = self.encode_target(tape, bound, target)?;
        let fused = self.fuse_all(tape, bound, &feats, code)?;
        self.decode(tape, bound, &fused)
    }

    /// Per-pixel logo probability map (`T x T`) for a query/target pair.
    pub fn predict_mask(&self, query: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false)?;
        let q = tape.constant(query.clone())?;
        let t = tape.constant(target.clone())?;
        let logits = self.forward(&mut tape, &bound, q, t)?;
        let prob = tape.sigmoid(logits)?;
        let side = self.config.target_size;
        tape.value(prob).clone().reshape(vec![side, side])
    }

    /// BCE loss of one triplet and the gradient of every parameter tensor, in
    /// canonical order.
    pub fn loss_and_grads(
        &self,
        query: &Tensor<T>,
        target: &Tensor<T>,
        mask: &Tensor<T>,
    ) -> Result<(T, Vec<Vec<T>>)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, true)?;
        let q = tape.constant(query.clone())?;
        let t = tape.constant(target.clone())?;
        let logits = self.forward(&mut tape, &bound, q, t)?;
        let prob = tape.sigmoid(logits)?;
        let loss = tape.bce_loss(prob, mask)?;
        tape.backward(loss)?;
        let grads = bound
            .vars()
            .into_iter()
            .map(|v| {
                tape.grad(v)
                    .map(<[T]>::to_vec)
                    .unwrap_or_else(|| vec![T::zero(); tape.value(v).len()])
            })
            .collect();
        Ok((tape.value(loss).data()[0], grads))
    }
}
