//! Scene compositing: one logo instance pasted over seeded clutter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::synth::glyph::{color_distance, LogoClass, Rgb};

/// Minimum logo side, in pixels, at the lower end of the scale range.
pub const MIN_LOGO_SIDE: usize = 4;
/// Clutter colours keep at least this distance from every class colour.
const CLUTTER_SEPARATION: u8 = 48;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub target_size: usize,
    /// Long side of the logo as a fraction of the target side.
    pub scale_lo: f64,
    pub scale_hi: f64,
    /// 0 = flat background; each level adds four shapes and pixel noise.
    pub clutter_level: u32,
}

impl SceneParams {
    pub fn new(target_size: usize, scale_lo: f64, scale_hi: f64, clutter_level: u32) -> Self {
        SceneParams {
            target_size,
            scale_lo,
            scale_hi,
            clutter_level,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale_lo > 0.0 && self.scale_lo <= self.scale_hi && self.scale_hi <= 0.9) {
            return Err(Error::invalid(format!(
                "scale range [{}, {}] must satisfy 0 < lo <= hi <= 0.9",
                self.scale_lo, self.scale_hi
            )));
        }
        let min_side = (self.scale_lo * self.target_size as f64).round() as usize;
        if min_side < MIN_LOGO_SIDE {
            return Err(Error::invalid(format!(
                "logo at minimum scale is {min_side} px; need at least {MIN_LOGO_SIDE}"
            )));
        }
        Ok(())
    }
}

/// Rendered scene: RGB target, mask (0 or 255) and the placed logo box.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub target: Vec<u8>,
    pub mask: Vec<u8>,
    pub scale: f64,
    /// `(x, y, width, height)` of the glyph box.
    pub placement: (usize, usize, usize, usize),
}

impl Scene {
    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0).count()
    }
}

fn clutter_color(rng: &mut impl Rng, class: &LogoClass) -> Rgb {
    loop {
        let c: Rgb = [rng.random(), rng.random(), rng.random()];
        if class
            .palette
            .iter()
            .all(|&p| color_distance(p, c) >= CLUTTER_SEPARATION)
        {
            return c;
        }
    }
}

/// Renders `class` (used as-is; apply `variant` beforehand) into a cluttered
/// scene. Deterministic in `(class, scene_seed, params)`.
pub fn render_scene(class: &LogoClass, scene_seed: u64, params: &SceneParams) -> Result<Scene> {
    params.validate()?;
    let t = params.target_size;
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);

    let bg = clutter_color(&mut rng, class);
    let mut target = Vec::with_capacity(t * t * 3);
    for _ in 0..t * t {
        target.extend_from_slice(&bg);
    }

    for _ in 0..4 * params.clutter_level {
        let color = clutter_color(&mut rng, class);
        let w = rng.random_range(t / 16 + 1..=t / 3 + 1);
        let h = rng.random_range(t / 16 + 1..=t / 3 + 1);
        let x0 = rng.random_range(0..t);
        let y0 = rng.random_range(0..t);
        let ellipse = rng.random_bool(0.5);
        for y in y0..(y0 + h).min(t) {
            for x in x0..(x0 + w).min(t) {
                if ellipse {
                    let a = (x - x0) as f64 + 0.5 - w as f64 / 2.0;
                    let b = (y - y0) as f64 + 0.5 - h as f64 / 2.0;
                    if (a / w as f64).powi(2) + (b / h as f64).powi(2) > 0.25 {
                        continue;
                    }
                }
                let o = (y * t + x) * 3;
                target[o..o + 3].copy_from_slice(&color);
            }
        }
    }
    if params.clutter_level > 0 {
        let amp = (6 * params.clutter_level).min(30) as i32;
        for v in target.iter_mut() {
            *v = (*v as i32 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8;
        }
    }

    let scale = if params.scale_hi > params.scale_lo {
        rng.random_range(params.scale_lo..=params.scale_hi)
    } else {
        params.scale_lo
    };
    let long = ((scale * t as f64).round() as usize).clamp(1, t);
    let (w, h) = class.fit(long);
    let x = rng.random_range(0..=t - w);
    let y = rng.random_range(0..=t - h);

    let glyph = class.render_glyph(w, h);
    let mut mask = vec![0u8; t * t];
    for gy in 0..h {
        for gx in 0..w {
            if let Some(ci) = glyph.cells[gy * w + gx] {
                let p = (y + gy) * t + x + gx;
                mask[p] = 255;
                target[p * 3..p * 3 + 3].copy_from_slice(&class.palette[ci as usize]);
            }
        }
    }
    Ok(Scene {
        target,
        mask,
        scale,
        placement: (x, y, w, h),
    })
}
