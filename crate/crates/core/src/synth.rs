//! Procedural toy scenes and their derived condition maps.
//!
//! Every artifact here is a pure function of `(seed, config)`: a scene spec
//! is generated from a seed, the 32x32 grayscale render is a deterministic
//! rasterization of the spec, and the four condition maps (edge, depth,
//! sketch, keypoint) are deterministic functions of the render or the spec.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CANVAS: usize = 32;
pub const TEXT_TOKENS: usize = 4;

/// The four heterogeneous visual condition channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConditionKind {
    Edge,
    Depth,
    Sketch,
    Keypoint,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 4] = [
        ConditionKind::Edge,
        ConditionKind::Depth,
        ConditionKind::Sketch,
        ConditionKind::Keypoint,
    ];

    pub fn id(self) -> usize {
        match self {
            ConditionKind::Edge => 0,
            ConditionKind::Depth => 1,
            ConditionKind::Sketch => 2,
            ConditionKind::Keypoint => 3,
        }
    }

    pub fn from_id(id: usize) -> Option<ConditionKind> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ConditionKind::Edge => "edge",
            ConditionKind::Depth => "depth",
            ConditionKind::Sketch => "sketch",
            ConditionKind::Keypoint => "keypoint",
        }
    }

    /// Trace colormap table: edge red, depth green, sketch yellow,
    /// keypoint blue.
    pub fn color(self) -> [u8; 3] {
        match self {
            ConditionKind::Edge => [255, 0, 0],
            ConditionKind::Depth => [0, 200, 0],
            ConditionKind::Sketch => [255, 220, 0],
            ConditionKind::Keypoint => [0, 80, 255],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Circle,
    Rectangle,
    Triangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Circle, ShapeKind::Rectangle, ShapeKind::Triangle];

    pub fn id(self) -> usize {
        match self {
            ShapeKind::Circle => 0,
            ShapeKind::Rectangle => 1,
            ShapeKind::Triangle => 2,
        }
    }

    pub fn from_id(id: usize) -> Option<ShapeKind> {
        Self::ALL.get(id).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub kind: ShapeKind,
    pub cx: f64,
    pub cy: f64,
    pub size: f64,
    pub layer: usize,
    pub gray: f64,
}

impl SceneObject {
    fn covers(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        match self.kind {
            ShapeKind::Circle => dx * dx + dy * dy <= self.size * self.size,
            ShapeKind::Rectangle => {
                let half_h = (self.size * 0.7).max(2.0);
                dx.abs() <= self.size && dy.abs() <= half_h
            }
            ShapeKind::Triangle => {
                // isoceles, apex up
                let s = self.size;
                let (ax, ay) = (self.cx, self.cy - s);
                let (bx, by) = (self.cx - s, self.cy + s);
                let (cx2, cy2) = (self.cx + s, self.cy + s);
                let sign = |x1: f64, y1: f64, x2: f64, y2: f64| (x - x2) * (y1 - y2) - (x1 - x2) * (y - y2);
                let d1 = sign(ax, ay, bx, by);
                let d2 = sign(bx, by, cx2, cy2);
                let d3 = sign(cx2, cy2, ax, ay);
                let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
                let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
                !(has_neg && has_pos)
            }
        }
    }

    /// Centroid plus shape-specific anchors, used for the keypoint map.
    fn anchors(&self) -> Vec<(f64, f64)> {
        let s = self.size;
        let mut pts = vec![(self.cx, self.cy)];
        match self.kind {
            ShapeKind::Circle => {
                pts.push((self.cx + s, self.cy));
                pts.push((self.cx - s, self.cy));
                pts.push((self.cx, self.cy + s));
                pts.push((self.cx, self.cy - s));
            }
            ShapeKind::Rectangle => {
                let half_h = (s * 0.7).max(2.0);
                pts.push((self.cx - s, self.cy - half_h));
                pts.push((self.cx + s, self.cy - half_h));
                pts.push((self.cx - s, self.cy + half_h));
                pts.push((self.cx + s, self.cy + half_h));
            }
            ShapeKind::Triangle => {
                pts.push((self.cx, self.cy - s));
                pts.push((self.cx - s, self.cy + s));
                pts.push((self.cx + s, self.cy + s));
            }
        }
        pts
    }
}

/// Fully determined by its seed; objects never touch the canvas border and
/// layer indices are unique.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub objects: Vec<SceneObject>,
}

impl SceneSpec {
    pub fn generate(seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = rng.gen_range(1..=3usize);
        let mut objects = Vec::with_capacity(count);
        for layer in 0..count {
            let kind = ShapeKind::ALL[rng.gen_range(0..3)];
            let size = rng.gen_range(3.0..7.0f64);
            let margin = size + 1.5;
            let cx = rng.gen_range(margin..(CANVAS as f64 - 1.0 - margin));
            let cy = rng.gen_range(margin..(CANVAS as f64 - 1.0 - margin));
            let gray = rng.gen_range(0.3..1.0f64);
            objects.push(SceneObject {
                kind,
                cx,
                cy,
                size,
                layer,
                gray,
            });
        }
        SceneSpec { seed, objects }
    }

    pub fn empty() -> SceneSpec {
        SceneSpec {
            seed: 0,
            objects: Vec::new(),
        }
    }
}

/// Deterministic rasterization; higher layer index occludes lower.
pub fn render_scene(spec: &SceneSpec) -> Vec<f64> {
    let mut img = vec![0.0; CANVAS * CANVAS];
    for y in 0..CANVAS {
        for x in 0..CANVAS {
            let mut best: Option<&SceneObject> = None;
            for obj in &spec.objects {
                if obj.covers(x as f64, y as f64)
                    && best.map_or(true, |b| obj.layer > b.layer)
                {
                    best = Some(obj);
                }
            }
            if let Some(obj) = best {
                img[y * CANVAS + x] = obj.gray;
            }
        }
    }
    img
}

fn gradient_magnitude(img: &[f64], side: usize) -> Vec<f64> {
    let mut out = vec![0.0; side * side];
    let at = |x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, side as isize - 1) as usize;
        let yc = y.clamp(0, side as isize - 1) as usize;
        img[yc * side + xc]
    };
    for y in 0..side as isize {
        for x in 0..side as isize {
            let gx = at(x + 1, y) - at(x - 1, y);
            let gy = at(x, y + 1) - at(x, y - 1);
            out[y as usize * side + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

const EDGE_THRESHOLD: f64 = 0.15;

/// Binary high-frequency map: thresholded gradient magnitude of the render.
pub fn derive_edge(image: &[f64]) -> Vec<f64> {
    gradient_magnitude(image, CANVAS)
        .into_iter()
        .map(|g| if g > EDGE_THRESHOLD { 1.0 } else { 0.0 })
        .collect()
}

/// Low-frequency map: normalized layer index of the topmost object at each
/// pixel, zero on background.
pub fn derive_depth(spec: &SceneSpec) -> Vec<f64> {
    let n = spec.objects.len().max(1) as f64;
    let mut out = vec![0.0; CANVAS * CANVAS];
    for y in 0..CANVAS {
        for x in 0..CANVAS {
            let mut best: Option<usize> = None;
            for obj in &spec.objects {
                if obj.covers(x as f64, y as f64)
                    && best.map_or(true, |l| obj.layer > l)
                {
                    best = Some(obj.layer);
                }
            }
            if let Some(l) = best {
                out[y * CANVAS + x] = (l + 1) as f64 / n;
            }
        }
    }
    out
}

/// Mid-frequency map: edges of a blurred, 2x-downsampled render, upsampled
/// back to canvas resolution.
pub fn derive_sketch(image: &[f64]) -> Vec<f64> {
    // 3x3 box blur
    let mut blurred = vec![0.0; CANVAS * CANVAS];
    for y in 0..CANVAS as isize {
        for x in 0..CANVAS as isize {
            let mut acc = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let xc = (x + dx).clamp(0, CANVAS as isize - 1) as usize;
                    let yc = (y + dy).clamp(0, CANVAS as isize - 1) as usize;
                    acc += image[yc * CANVAS + xc];
                }
            }
            blurred[y as usize * CANVAS + x as usize] = acc / 9.0;
        }
    }
    // 2x downsample by 2x2 mean
    let half = CANVAS / 2;
    let mut small = vec![0.0; half * half];
    for y in 0..half {
        for x in 0..half {
            small[y * half + x] = 0.25
                * (blurred[(2 * y) * CANVAS + 2 * x]
                    + blurred[(2 * y) * CANVAS + 2 * x + 1]
                    + blurred[(2 * y + 1) * CANVAS + 2 * x]
                    + blurred[(2 * y + 1) * CANVAS + 2 * x + 1]);
        }
    }
    let small_edges: Vec<f64> = gradient_magnitude(&small, half)
        .into_iter()
        .map(|g| if g > EDGE_THRESHOLD * 0.5 { 1.0 } else { 0.0 })
        .collect();
    // nearest-neighbor upsample
    let mut out = vec![0.0; CANVAS * CANVAS];
    for y in 0..CANVAS {
        for x in 0..CANVAS {
            out[y * CANVAS + x] = small_edges[(y / 2) * half + x / 2];
        }
    }
    out
}

/// Sparse map: dots at object centroids and shape-specific anchor points.
pub fn derive_keypoints(spec: &SceneSpec) -> Vec<f64> {
    let mut out = vec![0.0; CANVAS * CANVAS];
    for obj in &spec.objects {
        for (px, py) in obj.anchors() {
            let x = px.round().clamp(0.0, CANVAS as f64 - 1.0) as usize;
            let y = py.round().clamp(0.0, CANVAS as f64 - 1.0) as usize;
            out[y * CANVAS + x] = 1.0;
        }
    }
    out
}

pub fn derive_condition(kind: ConditionKind, image: &[f64], spec: &SceneSpec) -> Vec<f64> {
    match kind {
        ConditionKind::Edge => derive_edge(image),
        ConditionKind::Depth => derive_depth(spec),
        ConditionKind::Sketch => derive_sketch(image),
        ConditionKind::Keypoint => derive_keypoints(spec),
    }
}

// ── patch grid ────────────────────────────────────────────────────────

/// Splits a square map into row-major `p x p` patches: `[m, p*p]` tokens.
pub fn patchify(map: &[f64], side: usize, patch: usize) -> Result<Tensor> {
    if patch == 0 || side % patch != 0 {
        return Err(Error::IndivisibleExtent { extent: side, patch });
    }
    assert_eq!(map.len(), side * side, "patchify: map length mismatch");
    let grid = side / patch;
    let mut data = Vec::with_capacity(side * side);
    for gy in 0..grid {
        for gx in 0..grid {
            for py in 0..patch {
                for px in 0..patch {
                    data.push(map[(gy * patch + py) * side + gx * patch + px]);
                }
            }
        }
    }
    Ok(Tensor::from_vec(vec![grid * grid, patch * patch], data))
}

/// Exact inverse of [`patchify`].
pub fn unpatchify(tokens: &[f64], side: usize, patch: usize) -> Result<Vec<f64>> {
    if patch == 0 || side % patch != 0 {
        return Err(Error::IndivisibleExtent { extent: side, patch });
    }
    assert_eq!(tokens.len(), side * side, "unpatchify: token length mismatch");
    let grid = side / patch;
    let mut out = vec![0.0; side * side];
    let mut it = tokens.iter();
    for gy in 0..grid {
        for gx in 0..grid {
            for py in 0..patch {
                for px in 0..patch {
                    out[(gy * patch + py) * side + gx * patch + px] = *it.next().unwrap();
                }
            }
        }
    }
    Ok(out)
}

// ── text tokens ───────────────────────────────────────────────────────

const TEXT_EMBED_SEED: u64 = 0x7a3d_91c4_55e1_20b7;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Splittable per-sample seed derivation.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

fn text_embed_row(vocab_id: u64, dim: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(TEXT_EMBED_SEED ^ vocab_id));
    let scale = 1.0 / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect()
}

/// Fixed (frozen) embedding of the scene's discrete attributes: object
/// count, the set of shape kinds present, a gray-level bucket, and a
/// constant marker token. Shared across the whole system; not trained.
pub fn text_tokens(spec: &SceneSpec, dim: usize) -> Tensor {
    let count = spec.objects.len() as u64;
    let mut mask = 0u64;
    for obj in &spec.objects {
        mask |= 1 << obj.kind.id();
    }
    let mean_gray = if spec.objects.is_empty() {
        0.0
    } else {
        spec.objects.iter().map(|o| o.gray).sum::<f64>() / spec.objects.len() as f64
    };
    let bucket = ((mean_gray * 4.0) as u64).min(3);
    let ids = [count, 16 + mask, 32 + bucket, 48];
    let mut data = Vec::with_capacity(TEXT_TOKENS * dim);
    for id in ids {
        data.extend(text_embed_row(id, dim));
    }
    Tensor::from_vec(vec![TEXT_TOKENS, dim], data)
}

// ── samples and datasets ──────────────────────────────────────────────

/// A rendered scene with its four condition maps and text tokens.
#[derive(Clone, Debug)]
pub struct ImageSample {
    pub image: Vec<f64>,
    pub conditions: [Vec<f64>; 4],
    pub text: Tensor,
    pub spec: SceneSpec,
}

impl ImageSample {
    pub fn from_spec(spec: SceneSpec, text_dim: usize) -> ImageSample {
        let image = render_scene(&spec);
        let conditions = [
            derive_edge(&image),
            derive_depth(&spec),
            derive_sketch(&image),
            derive_keypoints(&spec),
        ];
        let text = text_tokens(&spec, text_dim);
        ImageSample {
            image,
            conditions,
            text,
            spec,
        }
    }

    pub fn condition(&self, kind: ConditionKind) -> &[f64] {
        &self.conditions[kind.id()]
    }
}

/// Deterministic i.i.d. dataset from a seeded generator.
pub fn make_dataset(seed: u64, count: usize, text_dim: usize) -> Vec<ImageSample> {
    (0..count)
        .map(|i| ImageSample::from_spec(SceneSpec::generate(derive_seed(seed, i as u64)), text_dim))
        .collect()
}

// ── manifest export ───────────────────────────────────────────────────

pub const MANIFEST_VERSION: &str = "patchflow-manifest v1";

/// One line per sample:
/// `sample <idx> <seed> <nobj> {<kind> <cx> <cy> <size> <layer> <gray>}*`
pub fn write_manifest<W: std::io::Write>(w: &mut W, samples: &[ImageSample]) -> Result<()> {
    writeln!(w, "{MANIFEST_VERSION}")?;
    writeln!(w, "count {}", samples.len())?;
    for (i, s) in samples.iter().enumerate() {
        write!(w, "sample {} {} {}", i, s.spec.seed, s.spec.objects.len())?;
        for o in &s.spec.objects {
            write!(
                w,
                " {} {} {} {} {} {}",
                o.kind.id(),
                o.cx,
                o.cy,
                o.size,
                o.layer,
                o.gray
            )?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_manifest<R: std::io::BufRead>(r: R, text_dim: usize) -> Result<Vec<ImageSample>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty manifest".into()))??;
    if header != MANIFEST_VERSION {
        return Err(Error::Parse(format!("unexpected manifest header: {header}")));
    }
    let count_line = lines
        .next()
        .ok_or_else(|| Error::Parse("missing count line".into()))??;
    let count: usize = count_line
        .strip_prefix("count ")
        .ok_or_else(|| Error::Parse("missing count".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad count: {e}")))?;
    let mut samples = Vec::with_capacity(count);
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        if tok.next() != Some("sample") {
            return Err(Error::Parse(format!("bad manifest line: {line}")));
        }
        let mut next = || -> Result<&str> {
            tok.next()
                .ok_or_else(|| Error::Parse("truncated manifest line".into()))
        };
        fn parse<T: std::str::FromStr>(s: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            s.parse()
                .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
        }
        let _idx: usize = parse(next()?)?;
        let seed: u64 = parse(next()?)?;
        let nobj: usize = parse(next()?)?;
        let mut objects = Vec::with_capacity(nobj);
        for _ in 0..nobj {
            let kind = ShapeKind::from_id(parse(next()?)?)
                .ok_or_else(|| Error::Parse("bad shape kind".into()))?;
            objects.push(SceneObject {
                kind,
                cx: parse(next()?)?,
                cy: parse(next()?)?,
                size: parse(next()?)?,
                layer: parse(next()?)?,
                gray: parse(next()?)?,
            });
        }
        samples.push(ImageSample::from_spec(SceneSpec { seed, objects }, text_dim));
    }
    if samples.len() != count {
        return Err(Error::Parse(format!(
            "manifest declares {count} samples, found {}",
            samples.len()
        )));
    }
    Ok(samples)
}

/// Raw image + condition blobs (f32 little-endian, one record per sample).
pub fn write_blobs<W: std::io::Write>(w: &mut W, samples: &[ImageSample]) -> Result<()> {
    for s in samples {
        for &v in &s.image {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        for cond in &s.conditions {
            for &v in cond {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_scene_renders_background() {
        let img = render_scene(&SceneSpec::empty());
        assert!(img.iter().all(|v| *v == 0.0));
        assert!(derive_edge(&img).iter().all(|v| *v == 0.0));
        assert!(derive_sketch(&img).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = render_scene(&SceneSpec::generate(99));
        let b = render_scene(&SceneSpec::generate(99));
        assert_eq!(a, b);
        let d1 = make_dataset(7, 10, 8);
        let d2 = make_dataset(7, 10, 8);
        for (x, y) in d1.iter().zip(&d2) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.spec, y.spec);
            assert_eq!(x.text.data(), y.text.data());
        }
    }

    #[test]
    fn centered_circle_is_rotation_symmetric() {
        let spec = SceneSpec {
            seed: 0,
            objects: vec![SceneObject {
                kind: ShapeKind::Circle,
                cx: 15.5,
                cy: 15.5,
                size: 6.0,
                layer: 0,
                gray: 0.8,
            }],
        };
        let img = render_scene(&spec);
        // rotate 90 degrees about the canvas center and compare
        for y in 0..CANVAS {
            for x in 0..CANVAS {
                let (rx, ry) = (CANVAS - 1 - y, x);
                assert_eq!(img[y * CANVAS + x], img[ry * CANVAS + rx]);
            }
        }
    }

    #[test]
    fn single_object_depth_is_constant_on_support() {
        let spec = SceneSpec {
            seed: 0,
            objects: vec![SceneObject {
                kind: ShapeKind::Rectangle,
                cx: 16.0,
                cy: 16.0,
                size: 5.0,
                layer: 0,
                gray: 0.5,
            }],
        };
        let depth = derive_depth(&spec);
        let img = render_scene(&spec);
        for i in 0..CANVAS * CANVAS {
            if img[i] > 0.0 {
                assert_eq!(depth[i], 1.0);
            } else {
                assert_eq!(depth[i], 0.0);
            }
        }
    }

    #[test]
    fn keypoint_count_matches_spec_anchors() {
        let spec = SceneSpec::generate(5);
        let kp = derive_keypoints(&spec);
        let mut expected: std::collections::HashSet<(usize, usize)> = Default::default();
        for obj in &spec.objects {
            for (px, py) in obj.anchors() {
                expected.insert((
                    px.round().clamp(0.0, 31.0) as usize,
                    py.round().clamp(0.0, 31.0) as usize,
                ));
            }
        }
        let nonzero = kp.iter().filter(|v| **v > 0.0).count();
        assert_eq!(nonzero, expected.len());
    }

    #[test]
    fn patch_grid_sizes() {
        let img = render_scene(&SceneSpec::generate(1));
        let t2 = patchify(&img, CANVAS, 2).unwrap();
        assert_eq!(t2.shape(), &[256, 4]);
        let t4 = patchify(&img, CANVAS, 4).unwrap();
        assert_eq!(t4.shape(), &[64, 16]);
        assert!(patchify(&img, CANVAS, 5).is_err());
    }

    proptest! {
        #[test]
        fn patchify_round_trips(seed in 0u64..1000, patch in prop::sample::select(vec![1usize, 2, 4, 8, 16, 32])) {
            let img = render_scene(&SceneSpec::generate(seed));
            let tokens = patchify(&img, CANVAS, patch).unwrap();
            let back = unpatchify(tokens.data(), CANVAS, patch).unwrap();
            prop_assert_eq!(back, img);
        }
    }

    #[test]
    fn shape_kinds_roughly_uniform_at_3000() {
        let data = make_dataset(123, 3000, 8);
        let mut counts = [0usize; 3];
        let mut total = 0usize;
        for s in &data {
            for o in &s.spec.objects {
                counts[o.kind.id()] += 1;
                total += 1;
            }
        }
        for &c in &counts {
            let frac = c as f64 / total as f64;
            assert!((frac - 1.0 / 3.0).abs() < 0.1 / 3.0 + 0.033, "frac = {frac}");
        }
    }

    #[test]
    fn edge_maps_carry_more_high_band_energy_than_depth() {
        use crate::fft::high_band_energy_fraction;
        let cutoff = CANVAS as f64 / 2.0 / 4.0; // Nyquist/4
        let (mut edge_sum, mut depth_sum) = (0.0, 0.0);
        for i in 0..100 {
            let s = ImageSample::from_spec(SceneSpec::generate(derive_seed(42, i)), 8);
            edge_sum +=
                high_band_energy_fraction(s.condition(ConditionKind::Edge), CANVAS, CANVAS, cutoff)
                    .unwrap();
            depth_sum +=
                high_band_energy_fraction(s.condition(ConditionKind::Depth), CANVAS, CANVAS, cutoff)
                    .unwrap();
        }
        assert!(
            edge_sum / 100.0 > depth_sum / 100.0,
            "edge {} <= depth {}",
            edge_sum / 100.0,
            depth_sum / 100.0
        );
    }

    #[test]
    fn manifest_round_trips() {
        let data = make_dataset(7, 5, 8);
        let mut buf = Vec::new();
        write_manifest(&mut buf, &data).unwrap();
        let loaded = read_manifest(buf.as_slice(), 8).unwrap();
        assert_eq!(loaded.len(), 5);
        for (a, b) in data.iter().zip(&loaded) {
            assert_eq!(a.spec, b.spec);
            assert_eq!(a.image, b.image);
        }
    }
}
