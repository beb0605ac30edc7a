//! Finite-difference checks of every differentiable op and of a tiny
//! end-to-end network, at double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{grad_check, Tape, Tensor, Var};
use crate::error::Result;
use crate::model::{BoundParams, FusionMode, InitMode, LogoNet, ModelConfig, Precision};
use crate::nn::Padding;

/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;
/// Finite-difference step.
pub const EPS: f64 = 1e-6;
/// Seeds per check in the standard suite.
pub const SEEDS: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Worst relative error over all seeds.
    pub max_rel_err: f64,
    pub seeds: u64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

type OpFn = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

/// One check instance: the op and its random inputs for a seed.
pub struct Case {
    pub op: OpFn,
    pub inputs: Vec<Tensor<f64>>,
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape/product agree")
}

/// Normal samples kept at least `gap` away from zero (away from ReLU's kink).
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    let mut t = normal(rng, shape);
    for v in t.data_mut() {
        if v.abs() < gap {
            *v = gap.copysign(*v) + *v;
        }
    }
    t
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape/product agree")
}

/// Reduces `out` with fixed random weights so every output element carries a
/// distinct cotangent.
fn weighted(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let w = tape.constant(uniform(&mut rng, &shape, 0.5, 1.5))?;
    let y = tape.mul(out, w)?;
    tape.sum(y)
}

fn conv_case(seed: u64, k: usize, stride: usize, padding: Padding, hw: (usize, usize)) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cin, cout) = (3, 4);
    Case {
        inputs: vec![
            normal(&mut rng, &[hw.0, hw.1, cin]),
            normal(&mut rng, &[k, k, cin, cout]),
            normal(&mut rng, &[cout]),
        ],
        op: Box::new(move |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], stride, padding)?;
            weighted(t, y, seed)
        }),
    }
}

/// Configuration of the tiny end-to-end network used by the composite check.
pub fn tiny_config(mode: FusionMode) -> ModelConfig {
    ModelConfig {
        query_size: 4,
        target_size: 16,
        stage_channels: vec![4, 8],
        latent_dim: 8,
        cond_convs_per_stage: vec![1, 1],
        cond_channels: vec![4, 8],
        seg_convs_per_stage: 1,
        fusion_mode: mode,
        fuse_bottleneck: true,
        init_mode: InitMode::FanInScaled,
        precision: Precision::Double,
    }
}

/// Whole network plus sigmoid and BCE; inputs are query, target and every
/// parameter tensor.
pub fn composite_case(seed: u64, mode: FusionMode) -> Result<Case> {
    let cfg = tiny_config(mode);
    let net = LogoNet::<f64>::new(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
    let mut params = net.params.clone();
    // Nonzero biases keep pre-activations off the ReLU kink at zero inputs.
    for t in params.tensors_mut() {
        if t.shape().len() == 1 {
            for v in t.data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    let q = cfg.query_size;
    let s = cfg.target_size;
    let mask_data: Vec<f64> = (0..s * s)
        .map(|i| ((i / s) >= 4 && (i / s) < 11 && (i % s) >= 3 && (i % s) < 12) as u8 as f64)
        .collect();
    let mask = Tensor::new(vec![s, s], mask_data)?;
    let mut inputs = vec![uniform(&mut rng, &[q, q, 3], 0.0, 1.0), uniform(&mut rng, &[s, s, 3], 0.0, 1.0)];
    inputs.extend(params.tensors().into_iter().cloned());
    let layout = params;
    let net = LogoNet::from_parts(cfg, layout.clone())?;
    Ok(Case {
        inputs,
        op: Box::new(move |t, v| {
            let bound = BoundParams::from_vars(&layout, &v[2..])?;
            let logits = net.forward(t, &bound, v[0], v[1])?;
            let prob = t.sigmoid(logits)?;
            t.bce_loss(prob, &mask)
        }),
    })
}

/// Names of every check in the suite, in run order.
pub fn check_names() -> Vec<&'static str> {
    vec![
        "add",
        "mul",
        "sum",
        "relu",
        "sigmoid",
        "tanh",
        "conv2d_3x3_same",
        "conv2d_2x2_same",
        "conv2d_1x1",
        "conv2d_3x3_stride2_valid",
        "maxpool2x2",
        "upsample_nearest2x",
        "tile_spatial",
        "concat_channels",
        "cosine_map",
        "scale_channels",
        "bce_loss",
        "composite_multi_scale",
        "composite_bottleneck_only",
        "composite_cosine_tanh",
    ]
}

/// Builds the inputs and op of check `name` for `seed`.
pub fn build_case(name: &str, seed: u64) -> Result<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unary = |f: fn(&mut Tape<f64>, Var) -> Result<Var>, x: Tensor<f64>| Case {
        inputs: vec![x],
        op: Box::new(move |t, v| {
            let y = f(t, v[0])?;
            weighted(t, y, seed)
        }),
    };
    Ok(match name {
        "add" | "mul" => {
            let is_add = name == "add";
            Case {
                inputs: vec![normal(&mut rng, &[3, 4, 2]), normal(&mut rng, &[3, 4, 2])],
                op: Box::new(move |t, v| {
                    let y = if is_add { t.add(v[0], v[1])? } else { t.mul(v[0], v[1])? };
                    weighted(t, y, seed)
                }),
            }
        }
        "sum" => Case {
            inputs: vec![normal(&mut rng, &[4, 3, 2])],
            op: Box::new(|t, v| {
                let s = t.sum(v[0])?;
                t.mul(s, s)
            }),
        },
        "relu" => unary(Tape::relu, off_zero(&mut rng, &[4, 4, 3], 1e-3)),
        "sigmoid" => unary(Tape::sigmoid, normal(&mut rng, &[4, 4, 3])),
        "tanh" => unary(Tape::tanh, normal(&mut rng, &[4, 4, 3])),
        "conv2d_3x3_same" => conv_case(seed, 3, 1, Padding::Same, (5, 6)),
        "conv2d_2x2_same" => conv_case(seed, 2, 1, Padding::Same, (5, 4)),
        "conv2d_1x1" => conv_case(seed, 1, 1, Padding::Same, (4, 4)),
        "conv2d_3x3_stride2_valid" => conv_case(seed, 3, 2, Padding::Valid, (7, 6)),
        "maxpool2x2" => unary(Tape::maxpool2x2, normal(&mut rng, &[6, 4, 3])),
        "upsample_nearest2x" => unary(Tape::upsample_nearest2x, normal(&mut rng, &[3, 2, 3])),
        "tile_spatial" => Case {
            inputs: vec![normal(&mut rng, &[1, 1, 4])],
            op: Box::new(move |t, v| {
                let y = t.tile_spatial(v[0], 3, 2)?;
                weighted(t, y, seed)
            }),
        },
        "concat_channels" => Case {
            inputs: vec![normal(&mut rng, &[3, 3, 2]), normal(&mut rng, &[3, 3, 3])],
            op: Box::new(move |t, v| {
                let y = t.concat_channels(v[0], v[1])?;
                weighted(t, y, seed)
            }),
        },
        "cosine_map" => Case {
            inputs: vec![normal(&mut rng, &[4, 3, 5]), normal(&mut rng, &[1, 1, 5])],
            op: Box::new(move |t, v| {
                let y = t.cosine_map(v[0], v[1])?;
                weighted(t, y, seed)
            }),
        },
        "scale_channels" => Case {
            inputs: vec![normal(&mut rng, &[4, 3, 5]), normal(&mut rng, &[4, 3, 1])],
            op: Box::new(move |t, v| {
                let y = t.scale_channels(v[0], v[1])?;
                weighted(t, y, seed)
            }),
        },
        "bce_loss" => {
            let target = Tensor::new(
                vec![4, 4],
                (0..16).map(|_| rng.random_range(0..2u8) as f64).collect(),
            )?;
            Case {
                inputs: vec![uniform(&mut rng, &[4, 4, 1], 0.05, 0.95)],
                op: Box::new(move |t, v| t.bce_loss(v[0], &target)),
            }
        }
        "composite_multi_scale" => composite_case(seed, FusionMode::MultiScale)?,
        "composite_bottleneck_only" => composite_case(seed, FusionMode::BottleneckOnly)?,
        "composite_cosine_tanh" => composite_case(seed, FusionMode::CosineTanh)?,
        other => return Err(crate::Error::invalid(format!("unknown gradient check {other:?}"))),
    })
}

/// Runs check `name` over `seeds` seeds; optionally corrupts the backward
/// pass of one op to demonstrate detection.
pub fn run_check(name: &str, seeds: u64, corrupt: Option<&'static str>) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let case = build_case(name, seed)?;
        let op = &case.op;
        let err = grad_check(
            |t, v| {
                if let Some(target) = corrupt {
                    t.corrupt_backward(target);
                }
                op(t, v)
            },
            &case.inputs,
            EPS,
        )?;
        worst = worst.max(err);
    }
    Ok(CheckResult {
        name: name.to_string(),
        max_rel_err: worst,
        seeds,
    })
}

/// Full suite with the standard number of seeds.
pub fn run_suite() -> Result<Vec<CheckResult>> {
    check_names().into_iter().map(|n| run_check(n, SEEDS, None)).collect()
}
