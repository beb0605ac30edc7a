//! Procedural logo classes: a few primitives (disc, triangle, bar, ring,
//! block letter) laid out in a unit box, with a small colour palette.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{connected_components, Mask};
use crate::synth::font;

/// Upper bound on distinct classes the sampler is asked for.
pub const MAX_CLASSES: usize = 10_000;
/// Minimum glyph fill (support / box area) accepted at class creation.
const MIN_FILL: f64 = 0.25;
/// Glyph long sides at which a class must render as one component.
const CONNECTIVITY_SIDES: [usize; 3] = [16, 32, 64];
/// Colour distance (max channel difference) separating palette entries.
pub const PALETTE_SEPARATION: u8 = 60;

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrimitiveKind {
    Disc,
    Triangle,
    Bar,
    Ring,
    Letter(u8),
}

impl PrimitiveKind {
    fn code(self) -> (u8, u8) {
        match self {
            PrimitiveKind::Disc => (0, 0),
            PrimitiveKind::Triangle => (1, 0),
            PrimitiveKind::Bar => (2, 0),
            PrimitiveKind::Ring => (3, 0),
            PrimitiveKind::Letter(l) => (4, l),
        }
    }

    fn from_code(kind: u8, arg: u8) -> Option<Self> {
        Some(match kind {
            0 => PrimitiveKind::Disc,
            1 => PrimitiveKind::Triangle,
            2 => PrimitiveKind::Bar,
            3 => PrimitiveKind::Ring,
            4 if (arg as usize) < font::LETTERS => PrimitiveKind::Letter(arg),
            _ => return None,
        })
    }
}

/// One shape inscribed in `rect = [x0, y0, x1, y1]`, in 1/255 units of the
/// glyph box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub color: u8,
    pub rect: [u8; 4],
}

impl Primitive {
    fn covers(&self, u: f64, v: f64) -> bool {
        let [x0, y0, x1, y1] = self.rect.map(|c| c as f64 / 255.0);
        if u < x0 || u > x1 || v < y0 || v > y1 {
            return false;
        }
        let a = if x1 > x0 { (u - x0) / (x1 - x0) } else { 0.5 };
        let b = if y1 > y0 { (v - y0) / (y1 - y0) } else { 0.5 };
        let r2 = (a - 0.5).powi(2) + (b - 0.5).powi(2);
        match self.kind {
            PrimitiveKind::Bar => true,
            PrimitiveKind::Disc => r2 <= 0.25,
            PrimitiveKind::Ring => (0.09..=0.25).contains(&r2),
            PrimitiveKind::Triangle => (a - 0.5).abs() <= b / 2.0 + 0.02,
            PrimitiveKind::Letter(l) => font::sample(l, a, b),
        }
    }
}

/// A logo class: glyph layout, foreground palette, query background and base
/// aspect ratio (width / height, in hundredths).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LogoClass {
    pub class_id: u32,
    pub primitives: Vec<Primitive>,
    pub palette: Vec<Rgb>,
    pub background: Rgb,
    pub aspect: u16,
}

/// Rasterized glyph: per pixel, the palette index of the covering primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphRaster {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Option<u8>>,
}

impl GlyphRaster {
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn support(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.cells.iter().map(Option::is_some).collect(),
        }
    }

    pub fn is_connected(&self) -> bool {
        connected_components(&self.support()).len() == 1
    }
}

/// Intra-class variation applied per image instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variation {
    /// Max per-channel palette shift.
    pub palette_jitter: u8,
    /// Probability of dropping one primitive (only with three or more).
    pub dropout: f64,
}

impl Default for Variation {
    fn default() -> Self {
        Variation {
            palette_jitter: 12,
            dropout: 0.2,
        }
    }
}

impl Variation {
    pub fn none() -> Self {
        Variation {
            palette_jitter: 0,
            dropout: 0.0,
        }
    }
}

pub(crate) fn color_distance(a: Rgb, b: Rgb) -> u8 {
    (0..3).map(|i| a[i].abs_diff(b[i])).max().unwrap_or(0)
}

fn random_color(rng: &mut impl Rng, avoid: &[Rgb], min_dist: u8) -> Rgb {
    loop {
        let c = [rng.random(), rng.random(), rng.random()];
        if avoid.iter().all(|&a| color_distance(a, c) >= min_dist) {
            return c;
        }
    }
}

/// Rescales rects so their union spans the whole glyph box.
fn normalize(rects: &[[f64; 4]]) -> Vec<[u8; 4]> {
    let x0 = rects.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min);
    let y0 = rects.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min);
    let x1 = rects.iter().map(|r| r[2]).fold(f64::NEG_INFINITY, f64::max);
    let y1 = rects.iter().map(|r| r[3]).fold(f64::NEG_INFINITY, f64::max);
    let q = |v: f64, lo: f64, hi: f64| ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8;
    rects
        .iter()
        .map(|r| [q(r[0], x0, x1), q(r[1], y0, y1), q(r[2], x0, x1), q(r[3], y0, y1)])
        .collect()
}

fn renormalize(prims: &mut [Primitive]) {
    let rects: Vec<[f64; 4]> = prims.iter().map(|p| p.rect.map(|c| c as f64)).collect();
    for (p, r) in prims.iter_mut().zip(normalize(&rects)) {
        p.rect = r;
    }
}

fn sample_class(rng: &mut impl Rng, class_id: u32) -> LogoClass {
    let n_colors = rng.random_range(2..=3);
    let mut palette: Vec<Rgb> = Vec::new();
    for _ in 0..n_colors {
        let c = random_color(rng, &palette, PALETTE_SEPARATION);
        palette.push(c);
    }
    let background = random_color(rng, &palette, 80);

    let n_prims = rng.random_range(2..=4);
    let mut kinds = Vec::new();
    let mut rects = Vec::new();
    for _ in 0..n_prims {
        let kind = match rng.random_range(0..5) {
            0 => PrimitiveKind::Disc,
            1 => PrimitiveKind::Triangle,
            2 => PrimitiveKind::Bar,
            3 => PrimitiveKind::Ring,
            _ => PrimitiveKind::Letter(rng.random_range(0..font::LETTERS as u8)),
        };
        let (w, h) = match kind {
            PrimitiveKind::Bar if rng.random_bool(0.5) => {
                (rng.random_range(0.6..1.0), rng.random_range(0.15..0.25))
            }
            PrimitiveKind::Bar => (rng.random_range(0.15..0.25), rng.random_range(0.6..1.0)),
            _ => (rng.random_range(0.4..0.9), rng.random_range(0.4..0.9)),
        };
        let x0 = rng.random_range(0.0..=(1.0 - w));
        let y0 = rng.random_range(0.0..=(1.0 - h));
        kinds.push(kind);
        rects.push([x0, y0, x0 + w, y0 + h]);
    }
    let primitives = kinds
        .into_iter()
        .zip(normalize(&rects))
        .map(|(kind, rect)| Primitive {
            kind,
            color: rng.random_range(0..n_colors as u8),
            rect,
        })
        .collect();
    let aspect = rng.random_range(60..=170);
    LogoClass {
        class_id,
        primitives,
        palette,
        background,
        aspect,
    }
}

impl LogoClass {
    pub fn aspect_ratio(&self) -> f64 {
        self.aspect as f64 / 100.0
    }

    /// Key identifying the glyph layout (shapes, placement, aspect).
    pub fn glyph_key(&self) -> Vec<u8> {
        let mut k = self.aspect.to_le_bytes().to_vec();
        for p in &self.primitives {
            let (kind, arg) = p.kind.code();
            k.extend_from_slice(&[kind, arg]);
            k.extend_from_slice(&p.rect);
        }
        k
    }

    /// Rasterizes the glyph into a `width x height` box, sampling pixel centres.
    pub fn render_glyph(&self, width: usize, height: usize) -> GlyphRaster {
        let mut cells = vec![None; width * height];
        for y in 0..height {
            let v = (y as f64 + 0.5) / height as f64;
            for x in 0..width {
                let u = (x as f64 + 0.5) / width as f64;
                for p in &self.primitives {
                    if p.covers(u, v) {
                        cells[y * width + x] = Some(p.color);
                    }
                }
            }
        }
        GlyphRaster {
            width,
            height,
            cells,
        }
    }

    /// Glyph box fitted to a `side x side` canvas, keeping the aspect ratio.
    pub fn fit(&self, side: usize) -> (usize, usize) {
        let a = self.aspect_ratio();
        if a >= 1.0 {
            (side, ((side as f64 / a).round() as usize).clamp(1, side))
        } else {
            (((side as f64 * a).round() as usize).clamp(1, side), side)
        }
    }

    /// Clean centred render on the class background: RGB bytes, `side^2 * 3`.
    pub fn render_query(&self, side: usize) -> Vec<u8> {
        let (w, h) = self.fit(side);
        let glyph = self.render_glyph(w, h);
        let (ox, oy) = ((side - w) / 2, (side - h) / 2);
        let mut img = Vec::with_capacity(side * side * 3);
        for _ in 0..side * side {
            img.extend_from_slice(&self.background);
        }
        for y in 0..h {
            for x in 0..w {
                if let Some(ci) = glyph.cells[y * w + x] {
                    let o = ((oy + y) * side + ox + x) * 3;
                    img[o..o + 3].copy_from_slice(&self.palette[ci as usize]);
                }
            }
        }
        img
    }

    /// Whether the glyph forms a single 4-connected instance at the sizes
    /// used for scenes.
    pub fn is_connected(&self) -> bool {
        CONNECTIVITY_SIDES.iter().all(|&side| {
            let (w, h) = self.fit(side);
            self.render_glyph(w, h).is_connected()
        })
    }

    /// Fraction of a `side x side` query render covered by the glyph.
    pub fn query_coverage(&self, side: usize) -> f64 {
        let (w, h) = self.fit(side);
        self.render_glyph(w, h).count() as f64 / (side * side) as f64
    }

    /// Instance of this class with jittered palette and optional primitive
    /// dropout; deterministic in `seed`.
    pub fn variant(&self, seed: u64, variation: &Variation) -> LogoClass {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        let j = variation.palette_jitter as i32;
        if j > 0 {
            for c in out.palette.iter_mut() {
                for ch in c.iter_mut() {
                    *ch = (*ch as i32 + rng.random_range(-j..=j)).clamp(0, 255) as u8;
                }
            }
        }
        if out.primitives.len() >= 3 && variation.dropout > 0.0 && rng.random_bool(variation.dropout) {
            let drop = rng.random_range(0..out.primitives.len());
            let mut prims = out.primitives.clone();
            prims.remove(drop);
            renormalize(&mut prims);
            let candidate = LogoClass {
                primitives: prims,
                ..out.clone()
            };
            if candidate.query_coverage(32) >= 0.15 && candidate.is_connected() {
                out = candidate;
            }
        }
        out
    }

    pub(crate) fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.class_id.to_le_bytes());
        out.extend_from_slice(&self.aspect.to_le_bytes());
        out.push(self.primitives.len() as u8);
        out.push(self.palette.len() as u8);
        for i in 0..4 {
            match self.primitives.get(i) {
                Some(p) => {
                    let (kind, arg) = p.kind.code();
                    out.extend_from_slice(&[kind, arg, p.color]);
                    out.extend_from_slice(&p.rect);
                }
                None => out.extend_from_slice(&[0; 7]),
            }
        }
        for i in 0..3 {
            out.extend_from_slice(&self.palette.get(i).copied().unwrap_or([0; 3]));
        }
        out.extend_from_slice(&self.background);
    }

    pub(crate) fn decode(b: &[u8]) -> Result<LogoClass> {
        if b.len() < CLASS_ENTRY_SIZE {
            return Err(Error::format("truncated class entry"));
        }
        let class_id = u32::from_le_bytes(b[0..4].try_into().unwrap());
        let aspect = u16::from_le_bytes(b[4..6].try_into().unwrap());
        let (n_prims, n_colors) = (b[6] as usize, b[7] as usize);
        if !(1..=4).contains(&n_prims) || !(1..=3).contains(&n_colors) {
            return Err(Error::format(format!("class {class_id}: bad primitive/colour counts")));
        }
        let mut primitives = Vec::new();
        for i in 0..n_prims {
            let e = &b[8 + 7 * i..8 + 7 * (i + 1)];
            let kind = PrimitiveKind::from_code(e[0], e[1])
                .ok_or_else(|| Error::format(format!("class {class_id}: bad primitive kind")))?;
            if e[2] as usize >= n_colors {
                return Err(Error::format(format!("class {class_id}: colour index out of range")));
            }
            primitives.push(Primitive {
                kind,
                color: e[2],
                rect: [e[3], e[4], e[5], e[6]],
            });
        }
        let palette = (0..n_colors)
            .map(|i| {
                let o = 36 + 3 * i;
                [b[o], b[o + 1], b[o + 2]]
            })
            .collect();
        Ok(LogoClass {
            class_id,
            primitives,
            palette,
            background: [b[45], b[46], b[47]],
            aspect,
        })
    }
}

/// Bytes per class-table entry in dataset files.
pub const CLASS_ENTRY_SIZE: usize = 48;

/// Deterministic class table with pairwise-distinct glyph layouts.
pub fn make_classes(seed: u64, n_classes: usize) -> Result<Vec<LogoClass>> {
    if n_classes == 0 {
        return Err(Error::invalid("n_classes must be >= 1"));
    }
    if n_classes > MAX_CLASSES {
        return Err(Error::invalid(format!(
            "n_classes {n_classes} exceeds glyph-space capacity {MAX_CLASSES}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut classes = Vec::with_capacity(n_classes);
    while classes.len() < n_classes {
        let c = sample_class(&mut rng, classes.len() as u32);
        let (w, h) = (32, 32);
        let fill = c.render_glyph(w, h).count() as f64 / (w * h) as f64;
        if fill < MIN_FILL || !c.is_connected() || !seen.insert(c.glyph_key()) {
            continue;
        }
        classes.push(c);
    }
    Ok(classes)
}
