use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv;

/// How the query code enters the segmentation network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Concat + 1x1 conv at every encoder stage (and optionally the bottleneck).
    MultiScale,
    /// Concat + 1x1 conv at the bottleneck only; skips carry raw encoder features.
    BottleneckOnly,
    /// Cosine similarity against a 1x1-projected code, squashed by tanh,
    /// multiplied onto the stage features.
    CosineTanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Weights ~ N(0, 0.01^2).
    PaperGaussian,
    /// Weights ~ U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
    FanInScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " {:?}"), other
                    ))),
                }
            }
        }
    };
}

text_enum!(FusionMode {
    MultiScale => "multi_scale",
    BottleneckOnly => "bottleneck_only",
    CosineTanh => "cosine_tanh",
});
text_enum!(InitMode {
    PaperGaussian => "paper_gaussian",
    FanInScaled => "fan_in_scaled",
});
text_enum!(Precision {
    Single => "single",
    Double => "double",
});

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub query_size: usize,
    pub target_size: usize,
    /// Channels of each segmentation encoder stage; its length is the stage count.
    pub stage_channels: Vec<usize>,
    pub latent_dim: usize,
    /// Conv layers per conditioning stage; every stage ends in a 2x2 pool.
    pub cond_convs_per_stage: Vec<usize>,
    pub cond_channels: Vec<usize>,
    pub seg_convs_per_stage: usize,
    pub fusion_mode: FusionMode,
    pub fuse_bottleneck: bool,
    pub init_mode: InitMode,
    pub precision: Precision,
}

impl ModelConfig {
    /// Full-size network: 64px queries, 256px targets, five encoder stages.
    pub fn paper() -> Self {
        ModelConfig {
            query_size: 64,
            target_size: 256,
            stage_channels: vec![64, 128, 256, 512, 512],
            latent_dim: 512,
            cond_convs_per_stage: vec![2, 2, 3, 3, 2, 1],
            cond_channels: vec![64, 128, 256, 512, 512, 512],
            seg_convs_per_stage: 2,
            fusion_mode: FusionMode::MultiScale,
            fuse_bottleneck: true,
            init_mode: InitMode::PaperGaussian,
            precision: Precision::Single,
        }
    }

    /// Small network that trains in minutes on one CPU core.
    pub fn desk() -> Self {
        ModelConfig {
            query_size: 16,
            target_size: 64,
            stage_channels: vec![8, 16, 32, 64],
            latent_dim: 64,
            cond_convs_per_stage: vec![1, 1, 1, 1],
            cond_channels: vec![8, 16, 32, 64],
            seg_convs_per_stage: 2,
            fusion_mode: FusionMode::MultiScale,
            fuse_bottleneck: true,
            init_mode: InitMode::FanInScaled,
            precision: Precision::Single,
        }
    }

    pub fn num_stages(&self) -> usize {
        self.stage_channels.len()
    }

    pub fn cond_stages(&self) -> usize {
        self.cond_convs_per_stage.len()
    }

    /// Spatial side of the pre-pool feature of 1-based stage `s`.
    pub fn stage_side(&self, s: usize) -> usize {
        self.target_size >> (s - 1)
    }

    pub fn bottleneck_side(&self) -> usize {
        self.target_size >> self.num_stages()
    }

    /// Whether encoder stage `s` (0-based) gets a fusion layer.
    pub fn fuses_stage(&self, s: usize) -> bool {
        s < self.num_stages() && self.fusion_mode != FusionMode::BottleneckOnly
    }

    pub fn fuses_bottleneck(&self) -> bool {
        self.fuse_bottleneck || self.fusion_mode == FusionMode::BottleneckOnly
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.num_stages();
        if s == 0 {
            return Err(Error::Config("stage_channels must not be empty".into()));
        }
        if self.stage_channels.contains(&0) || self.cond_channels.contains(&0) {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.target_size == 0 || !self.target_size.is_multiple_of(1 << s) {
            return Err(Error::Config(format!(
                "target_size {} must be divisible by 2^{s}",
                self.target_size
            )));
        }
        let cs = self.cond_stages();
        if cs == 0 || self.cond_channels.len() != cs {
            return Err(Error::Config(
                "cond_convs_per_stage and cond_channels must be non-empty and equally long".into(),
            ));
        }
        if self.cond_convs_per_stage.contains(&0) {
            return Err(Error::Config("every conditioning stage needs a conv".into()));
        }
        if self.query_size != 1 << cs {
            return Err(Error::Config(format!(
                "query_size {} does not pool to 1x1 after {cs} stages",
                self.query_size
            )));
        }
        if self.cond_channels[cs - 1] != self.latent_dim {
            return Err(Error::Config(format!(
                "last conditioning stage has {} channels, latent_dim is {}",
                self.cond_channels[cs - 1],
                self.latent_dim
            )));
        }
        if self.seg_convs_per_stage == 0 {
            return Err(Error::Config("seg_convs_per_stage must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("query_size".into(), self.query_size.to_string()),
            ("target_size".into(), self.target_size.to_string()),
            ("num_stages".into(), self.num_stages().to_string()),
            ("stage_channels".into(), kv::render_list(&self.stage_channels)),
            ("latent_dim".into(), self.latent_dim.to_string()),
            ("cond_convs_per_stage".into(), kv::render_list(&self.cond_convs_per_stage)),
            ("cond_channels".into(), kv::render_list(&self.cond_channels)),
            ("seg_convs_per_stage".into(), self.seg_convs_per_stage.to_string()),
            ("fusion_mode".into(), self.fusion_mode.to_string()),
            ("fuse_bottleneck".into(), self.fuse_bottleneck.to_string()),
            ("init_mode".into(), self.init_mode.to_string()),
            ("precision".into(), self.precision.to_string()),
        ]
    }

    /// Applies one `key = value` setting. Returns `false` for keys that are
    /// not model keys.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "query_size" => self.query_size = kv::parse_value(key, value)?,
            "target_size" => self.target_size = kv::parse_value(key, value)?,
            "num_stages" => {
                let n: usize = kv::parse_value(key, value)?;
                if n != self.num_stages() {
                    self.stage_channels.resize(n, *self.stage_channels.last().unwrap_or(&8));
                }
            }
            "stage_channels" => self.stage_channels = kv::parse_list(key, value)?,
            "latent_dim" => self.latent_dim = kv::parse_value(key, value)?,
            "cond_convs_per_stage" => self.cond_convs_per_stage = kv::parse_list(key, value)?,
            "cond_channels" => self.cond_channels = kv::parse_list(key, value)?,
            "seg_convs_per_stage" => self.seg_convs_per_stage = kv::parse_value(key, value)?,
            "fusion_mode" | "variant" => self.fusion_mode = value.parse()?,
            "fuse_bottleneck" => self.fuse_bottleneck = kv::parse_value(key, value)?,
            "init_mode" => self.init_mode = value.parse()?,
            "precision" => self.precision = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = ModelConfig::desk();
        let mut declared_stages = None;
        for (k, v) in pairs {
            if k == "num_stages" {
                declared_stages = Some(kv::parse_value::<usize>(k, v)?);
                continue;
            }
            if !cfg.apply(k, v)? {
                return Err(Error::Config(format!("unknown model key {k:?}")));
            }
        }
        if let Some(n) = declared_stages {
            if n != cfg.num_stages() {
                return Err(Error::Config(format!(
                    "num_stages = {n} but stage_channels has {} entries",
                    cfg.num_stages()
                )));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        ModelConfig::paper().validate().unwrap();
        ModelConfig::desk().validate().unwrap();
        let p = ModelConfig::paper();
        assert_eq!(p.cond_convs_per_stage.iter().sum::<usize>(), 13);
        assert_eq!(p.cond_stages(), 6);
        assert_eq!(p.bottleneck_side(), 8);
    }

    #[test]
    fn pairs_round_trip() {
        for mut cfg in [ModelConfig::paper(), ModelConfig::desk()] {
            cfg.fusion_mode = FusionMode::CosineTanh;
            let back = ModelConfig::from_pairs(&cfg.to_pairs()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn rejects_inconsistent_sizes() {
        let mut c = ModelConfig::desk();
        c.target_size = 60;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.query_size = 32;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.latent_dim = 32;
        assert!(c.validate().is_err());
    }

    #[test]
    fn stage_sides_halve() {
        let p = ModelConfig::paper();
        let sides: Vec<usize> = (1..=5).map(|s| p.stage_side(s)).collect();
        assert_eq!(sides, vec![256, 128, 64, 32, 16]);
    }
}
