use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::raster::{GrayImage, LabelImage, BACKGROUND};
use crate::rpn::downscale_to;

use super::homography::{sample_bilinear, solve_homography, Homography};
use super::render::{render, RenderParams};
use super::symbology::{SymbologyKind, SymbologyRegistry};
use super::SynthError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub uhr_size: (usize, usize),
    pub lr_size: (usize, usize),
    /// Poisson mean of the barcode count.
    pub lambda: f64,
    pub max_count: usize,
    /// Inclusive range of pixels per module.
    pub module_px: (usize, usize),
    /// Extra module scale for 2-D symbols.
    pub matrix_module_scale: usize,
    /// Maximum corner jitter as a fraction of the symbol extent.
    pub warp_intensity: f64,
    /// Inclusive range of distractor blob counts.
    pub distractors: (usize, usize),
    /// Distractor radius range as fractions of the shorter canvas side.
    pub distractor_radius: (f64, f64),
    /// Minimum background gap between placed objects, in pixels.
    pub gap_px: usize,
    pub max_attempts: usize,
    pub render: RenderParams,
    pub kinds: Vec<SymbologyKind>,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            uhr_size: (4096, 4096),
            lr_size: (256, 256),
            lambda: 3.0,
            max_count: 10,
            module_px: (2, 4),
            matrix_module_scale: 3,
            warp_intensity: 0.1,
            distractors: (0, 4),
            distractor_radius: (0.005, 0.03),
            gap_px: 3,
            max_attempts: 100,
            render: RenderParams::default(),
            kinds: SymbologyKind::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        if self.max_count == 0 || self.max_count > 255 {
            return bad("max_count must lie in 1..=255 (8-bit instance labels)");
        }
        if !(0.0..=0.3).contains(&self.warp_intensity) {
            return bad("warp intensity must lie in [0, 0.3]");
        }
        if self.module_px.0 == 0 || self.module_px.0 > self.module_px.1 {
            return bad("module_px must be a non-empty range of positive sizes");
        }
        if self.distractors.0 > self.distractors.1
            || !(self.distractor_radius.0 > 0.0
                && self.distractor_radius.0 <= self.distractor_radius.1)
        {
            return bad("distractor ranges must be ordered and positive");
        }
        if self.uhr_size.0 == 0
            || self.uhr_size.1 == 0
            || self.lr_size.0 == 0
            || self.lr_size.1 == 0
        {
            return bad("canvas extents must be positive");
        }
        if self.kinds.is_empty() {
            return bad("at least one symbology kind is required");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: u32,
    pub bbox: BBox,
    pub symbology: SymbologyKind,
    pub payload: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub id: u64,
    pub uhr: GrayImage,
    pub lr: GrayImage,
    /// Instance id per pixel, 0 for background and distractors.
    pub mask: LabelImage,
    pub instances: Vec<Instance>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of scene `id`, independent of generation order.
pub fn scene_seed(global_seed: u64, id: u64) -> u64 {
    splitmix64(global_seed ^ splitmix64(id))
}

/// Barcode count: Poisson(lambda) clamped to `[1, max_count]`.
pub fn sample_count(lambda: f64, max_count: usize, rng: &mut ChaCha8Rng) -> usize {
    let n = if lambda > 0.0 {
        Poisson::new(lambda).expect("positive mean").sample(rng) as usize
    } else {
        0
    };
    n.clamp(1, max_count)
}

/// Inclusive pixel extents `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Span {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Span {
    fn separated(&self, other: &Span, gap: i64) -> bool {
        self.x0 > other.x1 + gap
            || other.x0 > self.x1 + gap
            || self.y0 > other.y1 + gap
            || other.y0 > self.y1 + gap
    }
}

fn convex(q: &[(f64, f64); 4]) -> bool {
    let mut sign = 0.0;
    for i in 0..4 {
        let (a, b, c) = (q[i], q[(i + 1) % 4], q[(i + 2) % 4]);
        let cross = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0);
        if cross.abs() < 1e-9 || (sign != 0.0 && cross.signum() != sign) {
            return false;
        }
        sign = cross.signum();
    }
    true
}

struct Placed {
    span: Span,
}

fn free(span: &Span, placed: &[Placed], gap: i64) -> bool {
    placed.iter().all(|p| span.separated(&p.span, gap))
}

/// Paints a warped symbol; returns the painted pixel hull.
fn paint_symbol(
    canvas: &mut GrayImage,
    mask: &mut LabelImage,
    img: &GrayImage,
    tight: &BBox,
    h: &Homography,
    span: &Span,
    label: u8,
) -> Option<BBox> {
    let inv = h.inverse()?;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
    for y in span.y0.max(0)..=span.y1.min(canvas.height() as i64 - 1) {
        for x in span.x0.max(0)..=span.x1.min(canvas.width() as i64 - 1) {
            let Some((sx, sy)) = inv.apply(x as f64 + 0.5, y as f64 + 0.5) else {
                continue;
            };
            if sx < tight.x || sx >= tight.right() || sy < tight.y || sy >= tight.bottom() {
                continue;
            }
            let (ux, uy) = (x as usize, y as usize);
            canvas.set(
                ux,
                uy,
                sample_bilinear(img, sx - 0.5, sy - 0.5)
                    .round()
                    .clamp(0.0, 255.0) as u8,
            );
            mask.set(ux, uy, label);
            x0 = x0.min(ux);
            y0 = y0.min(uy);
            x1 = x1.max(ux);
            y1 = y1.max(uy);
        }
    }
    (x1 >= x0 && y1 >= y0 && x0 != usize::MAX).then(|| BBox::from_pixel_span(x0, y0, x1, y1))
}

fn point_in_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Paints one dark ellipse or star-shaped polygon inside `span`.
fn paint_distractor(canvas: &mut GrayImage, span: &Span, rng: &mut ChaCha8Rng) {
    let (cx, cy) = (
        (span.x0 + span.x1) as f64 / 2.0 + 0.5,
        (span.y0 + span.y1) as f64 / 2.0 + 0.5,
    );
    let (rx, ry) = (
        (span.x1 - span.x0 + 1) as f64 / 2.0,
        (span.y1 - span.y0 + 1) as f64 / 2.0,
    );
    let shade: u8 = rng.random_range(0..=60);
    let inside: Box<dyn Fn(f64, f64) -> bool> = if rng.random_bool(0.5) {
        Box::new(move |x, y| ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0)
    } else {
        let k = rng.random_range(3..=7);
        let mut angles: Vec<f64> = (0..k)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        angles.sort_by(f64::total_cmp);
        let poly: Vec<(f64, f64)> = angles
            .iter()
            .map(|&a| {
                let r = rng.random_range(0.4..=1.0);
                (cx + r * rx * a.cos(), cy + r * ry * a.sin())
            })
            .collect();
        Box::new(move |x, y| point_in_polygon(&poly, x, y))
    };
    for y in span.y0.max(0)..=span.y1.min(canvas.height() as i64 - 1) {
        for x in span.x0.max(0)..=span.x1.min(canvas.width() as i64 - 1) {
            if inside(x as f64 + 0.5, y as f64 + 0.5) {
                canvas.set(x as usize, y as usize, shade);
            }
        }
    }
}

/// Symbols drawn per barcode before giving up on a placement.
const SYMBOL_REDRAWS: usize = 8;

/// Composes one synthetic scene. Deterministic in `(cfg, id)`.
pub fn compose_scene(cfg: &SceneConfig, id: u64) -> Result<Scene, SynthError> {
    cfg.validate()?;
    let registry = SymbologyRegistry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(cfg.seed, id));
    let (w, h) = cfg.uhr_size;
    let mut canvas = GrayImage::filled(w, h, BACKGROUND);
    let mut mask = LabelImage::filled(w, h, 0);
    let gap = cfg.gap_px as i64;
    let count = sample_count(cfg.lambda, cfg.max_count, &mut rng);
    let mut placed: Vec<Placed> = Vec::new();
    let mut instances = Vec::new();

    for _ in 0..count {
        'draw: for _ in 0..SYMBOL_REDRAWS {
            let kind = cfg.kinds[rng.random_range(0..cfg.kinds.len())];
            let encoder = registry.get(kind.name())?;
            let payload = encoder.random_payload(&mut rng);
            let pattern = encoder.encode(&payload)?;
            let mut module = rng.random_range(cfg.module_px.0..=cfg.module_px.1);
            if !kind.is_linear() {
                module *= cfg.matrix_module_scale.max(1);
            }
            let (img, tight) = render(&pattern, module, &cfg.render);
            let src = [
                (tight.x, tight.y),
                (tight.right(), tight.y),
                (tight.right(), tight.bottom()),
                (tight.x, tight.bottom()),
            ];
            let j = cfg.warp_intensity;
            let local = {
                let mut q;
                let mut tries = 0;
                loop {
                    q = src.map(|(x, y)| {
                        let dx = if j > 0.0 {
                            rng.random_range(-j..=j) * tight.w
                        } else {
                            0.0
                        };
                        let dy = if j > 0.0 {
                            rng.random_range(-j..=j) * tight.h
                        } else {
                            0.0
                        };
                        (x - tight.x + dx, y - tight.y + dy)
                    });
                    tries += 1;
                    if convex(&q) || tries >= 20 {
                        break;
                    }
                }
                if !convex(&q) {
                    q = src.map(|(x, y)| (x - tight.x, y - tight.y));
                }
                q
            };
            let min_x = local
                .iter()
                .map(|p| p.0)
                .fold(f64::INFINITY, f64::min)
                .floor() as i64;
            let max_x = local
                .iter()
                .map(|p| p.0)
                .fold(f64::NEG_INFINITY, f64::max)
                .ceil() as i64;
            let min_y = local
                .iter()
                .map(|p| p.1)
                .fold(f64::INFINITY, f64::min)
                .floor() as i64;
            let max_y = local
                .iter()
                .map(|p| p.1)
                .fold(f64::NEG_INFINITY, f64::max)
                .ceil() as i64;
            let (qw, qh) = (max_x - min_x, max_y - min_y);
            if qw >= w as i64 || qh >= h as i64 {
                continue;
            }
            for _ in 0..cfg.max_attempts {
                let ox = rng.random_range(0..(w as i64 - qw)) - min_x;
                let oy = rng.random_range(0..(h as i64 - qh)) - min_y;
                let span = Span {
                    x0: min_x + ox,
                    y0: min_y + oy,
                    x1: max_x + ox - 1,
                    y1: max_y + oy - 1,
                };
                if !free(&span, &placed, gap) {
                    continue;
                }
                let dst = local.map(|(x, y)| (x + ox as f64, y + oy as f64));
                let hom = solve_homography(&src, &dst)?;
                let label = (instances.len() + 1) as u8;
                if let Some(bbox) =
                    paint_symbol(&mut canvas, &mut mask, &img, &tight, &hom, &span, label)
                {
                    instances.push(Instance {
                        instance_id: label as u32,
                        bbox,
                        symbology: kind,
                        payload: payload.clone(),
                    });
                    placed.push(Placed { span });
                }
                break 'draw;
            }
        }
    }
    if instances.is_empty() {
        return Err(SynthError::CanvasTooSmall {
            width: w,
            height: h,
        });
    }

    let n_blobs = rng.random_range(cfg.distractors.0..=cfg.distractors.1);
    let short = w.min(h) as f64;
    for _ in 0..n_blobs {
        let rx = (rng.random_range(cfg.distractor_radius.0..=cfg.distractor_radius.1) * short)
            .max(1.0) as i64;
        let ry = (rng.random_range(cfg.distractor_radius.0..=cfg.distractor_radius.1) * short)
            .max(1.0) as i64;
        if 2 * rx >= w as i64 || 2 * ry >= h as i64 {
            continue;
        }
        for _ in 0..cfg.max_attempts {
            let x0 = rng.random_range(0..(w as i64 - 2 * rx));
            let y0 = rng.random_range(0..(h as i64 - 2 * ry));
            let span = Span {
                x0,
                y0,
                x1: x0 + 2 * rx - 1,
                y1: y0 + 2 * ry - 1,
            };
            if free(&span, &placed, gap) {
                paint_distractor(&mut canvas, &span, &mut rng);
                break;
            }
        }
    }

    let (lr, _) = downscale_to(&canvas, cfg.lr_size.0, cfg.lr_size.1);
    Ok(Scene {
        id,
        uhr: canvas,
        lr,
        mask,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneConfig {
        SceneConfig {
            uhr_size: (768, 768),
            module_px: (1, 2),
            ..SceneConfig::default()
        }
    }

    #[test]
    fn lambda_zero_gives_one_barcode() {
        let cfg = SceneConfig {
            lambda: 0.0,
            ..small()
        };
        for id in 0..5 {
            assert_eq!(compose_scene(&cfg, id).unwrap().instances.len(), 1);
        }
    }

    #[test]
    fn unwarped_box_matches_render() {
        let cfg = SceneConfig {
            warp_intensity: 0.0,
            lambda: 0.0,
            kinds: vec![SymbologyKind::EAN13],
            module_px: (2, 2),
            ..small()
        };
        let s = compose_scene(&cfg, 3).unwrap();
        let b = s.instances[0].bbox;
        assert_eq!((b.w, b.h), (190.0, 57.0));
    }

    #[test]
    fn deterministic_per_id() {
        let cfg = small();
        assert_eq!(
            compose_scene(&cfg, 7).unwrap(),
            compose_scene(&cfg, 7).unwrap()
        );
        assert_ne!(
            compose_scene(&cfg, 7).unwrap().uhr,
            compose_scene(&cfg, 8).unwrap().uhr
        );
    }

    #[test]
    fn tiny_canvas_rejected() {
        let cfg = SceneConfig {
            uhr_size: (30, 30),
            lr_size: (16, 16),
            ..small()
        };
        assert!(matches!(
            compose_scene(&cfg, 0),
            Err(SynthError::CanvasTooSmall { .. })
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(SceneConfig {
            warp_intensity: 0.5,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SceneConfig {
            max_count: 0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SceneConfig {
            lambda: -1.0,
            ..small()
        }
        .validate()
        .is_err());
    }
}
