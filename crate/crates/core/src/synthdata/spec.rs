use serde::{Deserialize, Serialize};

use super::SynthError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Texture {
    Solid,
    Striped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Size {
    Small,
    Large,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::Red, Color::Green, Color::Blue];

    /// Criteria text describing this option.
    pub fn phrase(self) -> &'static str {
        match self {
            Color::Red => "uniform red region",
            Color::Green => "uniform green region",
            Color::Blue => "uniform blue region",
        }
    }

    pub fn rgb(self) -> [f64; 3] {
        match self {
            Color::Red => [1.0, 0.0, 0.0],
            Color::Green => [0.0, 1.0, 0.0],
            Color::Blue => [0.0, 0.0, 1.0],
        }
    }
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Circle, Shape::Square, Shape::Triangle];

    pub fn phrase(self) -> &'static str {
        match self {
            Shape::Circle => "circular boundary",
            Shape::Square => "square boundary with straight edges",
            Shape::Triangle => "triangular boundary with a pointed apex",
        }
    }
}

impl Texture {
    pub const ALL: [Texture; 2] = [Texture::Solid, Texture::Striped];

    pub fn phrase(self) -> &'static str {
        match self {
            Texture::Solid => "solid homogeneous fill",
            Texture::Striped => "striped fill with alternating bands",
        }
    }
}

impl Size {
    pub const ALL: [Size; 2] = [Size::Small, Size::Large];

    pub fn phrase(self) -> &'static str {
        match self {
            Size::Small => "small compact lesion",
            Size::Large => "large extended lesion",
        }
    }

    /// Nominal radius in pixels.
    pub fn radius(self) -> f64 {
        match self {
            Size::Small => 6.0,
            Size::Large => 12.0,
        }
    }
}

/// One class of the synthetic task: a fixed option on every axis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassBinding {
    pub name: String,
    pub color: Color,
    pub shape: Shape,
    pub texture: Texture,
    pub size: Size,
}

impl ClassBinding {
    pub fn new(color: Color, shape: Shape, texture: Texture, size: Size) -> Self {
        let name = format!("{color:?}-{shape:?}-{texture:?}-{size:?}").to_lowercase();
        Self { name, color, shape, texture, size }
    }
}

/// Generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub classes: Vec<ClassBinding>,
    pub noise_std: f64,
    /// Seeds the per-sample rendering streams.
    pub seed: u64,
    /// Radius and center jitter; off renders every shape at its nominal size
    /// in the exact center.
    pub jitter: bool,
}

/// Largest radius any shape can be drawn with, including size jitter.
pub(crate) const MAX_RADIUS: f64 = 13.0;
/// Center jitter, in pixels along each axis.
pub(crate) const CENTER_JITTER: f64 = 3.0;

impl SynthSpec {
    pub const CHANNELS: usize = 3;

    /// The default eight-class table.
    pub fn default_classes() -> Vec<ClassBinding> {
        use Color::*;
        use Shape::*;
        use Size::*;
        use Texture::*;
        vec![
            ClassBinding::new(Red, Circle, Solid, Small),
            ClassBinding::new(Red, Square, Striped, Large),
            ClassBinding::new(Red, Triangle, Solid, Large),
            ClassBinding::new(Green, Circle, Striped, Large),
            ClassBinding::new(Green, Square, Solid, Small),
            ClassBinding::new(Green, Triangle, Striped, Small),
            ClassBinding::new(Blue, Circle, Solid, Large),
            ClassBinding::new(Blue, Square, Striped, Small),
        ]
    }

    pub fn with_seed(seed: u64) -> Self {
        Self { height: 32, width: 32, classes: Self::default_classes(), noise_std: 0.05, seed, jitter: true }
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [Self::CHANNELS, self.height, self.width]
    }

    /// Per-axis option indices of `class`, in axis order color, shape,
    /// texture, size. Indices count only the options some class uses.
    pub fn axis_labels(&self, class: usize) -> Vec<usize> {
        let b = &self.classes[class];
        let used = self.used_options();
        vec![
            used.0.iter().position(|&c| c == b.color).expect("used"),
            used.1.iter().position(|&s| s == b.shape).expect("used"),
            used.2.iter().position(|&t| t == b.texture).expect("used"),
            used.3.iter().position(|&s| s == b.size).expect("used"),
        ]
    }

    /// Options appearing in the class table, per axis, in declaration order.
    pub fn used_options(&self) -> (Vec<Color>, Vec<Shape>, Vec<Texture>, Vec<Size>) {
        fn used<T: Copy + PartialEq>(all: &[T], pick: impl Fn(&ClassBinding) -> T, classes: &[ClassBinding]) -> Vec<T> {
            all.iter().copied().filter(|o| classes.iter().any(|c| pick(c) == *o)).collect()
        }
        (
            used(&Color::ALL, |c| c.color, &self.classes),
            used(&Shape::ALL, |c| c.shape, &self.classes),
            used(&Texture::ALL, |c| c.texture, &self.classes),
            used(&Size::ALL, |c| c.size, &self.classes),
        )
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |reason: String| Err(SynthError::InvalidSpec(reason));
        let min_side = (2.0 * (MAX_RADIUS + 1.0)) as usize;
        if self.height < min_side || self.width < min_side {
            return bad(format!("image {}×{} is smaller than {min_side}×{min_side}", self.height, self.width));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad(format!("noise std must be finite and non-negative, got {}", self.noise_std));
        }
        if self.classes.len() < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes.len()));
        }
        for (i, a) in self.classes.iter().enumerate() {
            for b in &self.classes[..i] {
                if a.name == b.name {
                    return bad(format!("duplicate class name `{}`", a.name));
                }
                if (a.color, a.shape, a.texture, a.size) == (b.color, b.shape, b.texture, b.size) {
                    return bad(format!("classes `{}` and `{}` have identical bindings", b.name, a.name));
                }
            }
        }
        let (c, s, t, z) = self.used_options();
        for (axis, n) in [("color", c.len()), ("shape", s.len()), ("texture", t.len()), ("size", z.len())] {
            if n < 2 {
                return bad(format!("axis {axis} uses {n} option; every axis needs at least 2"));
            }
        }
        Ok(())
    }
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::with_seed(0)
    }
}
