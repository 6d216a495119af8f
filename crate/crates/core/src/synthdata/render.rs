use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::spec::{Shape, Texture, CENTER_JITTER};
use super::{SynthError, SynthSpec};
use crate::autodiff::Tensor;
use crate::pnm::Raster;
use crate::rng::{derive_seed, stream};

/// Intensity of the dimmed rows of a striped fill.
pub const STRIPE_LEVEL: f64 = 0.6;
const MAX_REJITTER: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    /// `3×H×W`, values in `[0, 1]` on the 8-bit grid `k/255`.
    pub image: Tensor,
    pub class: usize,
    pub axis_labels: Vec<usize>,
}

/// Half extents `(left, right, top, bottom)` of a shape drawn with radius `r`.
fn extents(shape: Shape, r: f64) -> [f64; 4] {
    match shape {
        Shape::Circle => [r; 4],
        Shape::Square => [square_half_side(r); 4],
        Shape::Triangle => {
            let half_base = r * 3f64.sqrt() / 2.0;
            [half_base, half_base, r, r / 2.0]
        }
    }
}

/// Half side of the square with the same area as a circle of radius `r`.
fn square_half_side(r: f64) -> f64 {
    r * std::f64::consts::PI.sqrt() / 2.0
}

/// Whether the offset `(dx, dy)` from the center lies inside the shape.
/// The triangle is equilateral, apex up, inscribed in the circle of radius `r`.
fn inside(shape: Shape, r: f64, dx: f64, dy: f64) -> bool {
    match shape {
        Shape::Circle => dx * dx + dy * dy <= r * r,
        Shape::Square => {
            let a = square_half_side(r);
            dx.abs() <= a && dy.abs() <= a
        }
        Shape::Triangle => dy >= -r && dy <= r / 2.0 && dx.abs() <= (dy + r) / 3f64.sqrt(),
    }
}

/// Renders one sample. Deterministic in `(spec, class, sample_seed)`.
pub fn render_sample(spec: &SynthSpec, class: usize, sample_seed: u64) -> Result<SyntheticSample, SynthError> {
    let binding = spec
        .classes
        .get(class)
        .ok_or_else(|| SynthError::InvalidSpec(format!("class {class} out of range for {} classes", spec.classes.len())))?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = stream(derive_seed(sample_seed, &[class as u64]));

    let mut r = binding.size.radius();
    let (mut cx, mut cy) = (w as f64 / 2.0, h as f64 / 2.0);
    if spec.jitter {
        r += rng.random_range(-1.0..=1.0);
        let [left, right, top, bottom] = extents(binding.shape, r);
        // Keep a one-pixel background margin around the shape.
        let fits = |x: f64, y: f64| x - left >= 1.0 && x + right <= w as f64 - 1.0 && y - top >= 1.0 && y + bottom <= h as f64 - 1.0;
        let placed = (0..=MAX_REJITTER).find_map(|_| {
            let x = cx + rng.random_range(-CENTER_JITTER..=CENTER_JITTER);
            let y = cy + rng.random_range(-CENTER_JITTER..=CENTER_JITTER);
            fits(x, y).then_some((x, y))
        });
        if let Some((x, y)) = placed {
            (cx, cy) = (x, y);
        }
    }

    let rgb = binding.color.rgb();
    let plane = h * w;
    let mut data = vec![0.0; 3 * plane];
    for y in 0..h {
        let row_level = match binding.texture {
            Texture::Striped if y % 2 == 1 => STRIPE_LEVEL,
            _ => 1.0,
        };
        for x in 0..w {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if inside(binding.shape, r, dx, dy) {
                for (c, &level) in rgb.iter().enumerate() {
                    data[c * plane + y * w + x] = level * row_level;
                }
            }
        }
    }
    for v in &mut data {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = quantize((*v + spec.noise_std * z).clamp(0.0, 1.0));
    }
    Ok(SyntheticSample {
        id: String::new(),
        image: Tensor::new(vec![3, h, w], data).expect("3×H×W values"),
        class,
        axis_labels: spec.axis_labels(class),
    })
}

fn quantize(v: f64) -> f64 {
    (v * 255.0).round() / 255.0
}

/// Interleaved 8-bit RGB raster of a `3×H×W` image in `[0, 1]`.
pub fn image_to_raster(image: &Tensor) -> Raster {
    let [c, h, w] = <[usize; 3]>::try_from(image.shape()).expect("3-D image");
    assert_eq!(c, 3, "RGB image");
    let plane = h * w;
    let mut pixels = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        for ch in 0..3 {
            pixels.push((image.data()[ch * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Raster { width: w, height: h, pixels }
}

/// Inverse of [`image_to_raster`].
pub fn raster_to_image(raster: &Raster) -> Tensor {
    let plane = raster.width * raster.height;
    Tensor::from_fn(&[3, raster.height, raster.width], |i| {
        let (ch, p) = (i / plane, i % plane);
        f64::from(raster.pixels[p * 3 + ch]) / 255.0
    })
}
