//! Pixel-space geometry: points, axis-aligned boxes, IoU, and the
//! resize-to-multiple rule applied to screens before grounding.
//!
//! Coordinates are real-valued. Areas use continuous semantics, so a
//! box `(0,0,10,10)` has area 100 and a zero-width box has area 0.
//! Containment is inclusive on every edge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("coordinate {name}={value} is not finite and non-negative")]
    BadCoordinate { name: &'static str, value: f64 },
    #[error("box is inverted: {axis}_min {min} > {axis}_max {max}")]
    Inverted { axis: &'static str, min: f64, max: f64 },
    #[error("resolution must be at least 1x1, got {width}x{height}")]
    EmptyResolution { width: u32, height: u32 },
    #[error("scale factors must be positive and finite, got ({sx}, {sy})")]
    BadScale { sx: f64, sy: f64 },
}

fn check_coord(name: &'static str, value: f64) -> Result<f64, GeometryError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(GeometryError::BadCoordinate { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Result<Self, GeometryError> {
        Ok(Self { x: check_coord("x", x)?, y: check_coord("y", y)? })
    }

    pub fn scale(self, sx: f64, sy: f64) -> Self {
        Self { x: self.x * sx, y: self.y * sy }
    }

    /// Inclusive bounds check against `[0, width] x [0, height]`.
    pub fn within(&self, res: Resolution) -> bool {
        self.x <= f64::from(res.width) && self.y <= f64::from(res.height)
    }
}

impl TryFrom<[f64; 2]> for Point {
    type Error = GeometryError;
    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned rectangle `(x_min, y_min, x_max, y_max)`.
///
/// Serialized as a 4-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let x_min = check_coord("x_min", x_min)?;
        let y_min = check_coord("y_min", y_min)?;
        let x_max = check_coord("x_max", x_max)?;
        let y_max = check_coord("y_max", y_max)?;
        if x_min > x_max {
            return Err(GeometryError::Inverted { axis: "x", min: x_min, max: x_max });
        }
        if y_min > y_max {
            return Err(GeometryError::Inverted { axis: "y", min: y_min, max: y_max });
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point { x: 0.5 * (self.x_min + self.x_max), y: 0.5 * (self.y_min + self.y_max) }
    }

    /// True when the box lies inside `[0, width] x [0, height]`.
    pub fn within(&self, res: Resolution) -> bool {
        self.x_max <= f64::from(res.width) && self.y_max <= f64::from(res.height)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GeometryError;
    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawResolution")]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

#[derive(Deserialize)]
struct RawResolution {
    width: u32,
    height: u32,
}

impl TryFrom<RawResolution> for Resolution {
    type Error = GeometryError;
    fn try_from(r: RawResolution) -> Result<Self, Self::Error> {
        Resolution::new(r.width, r.height)
    }
}

impl Resolution {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyResolution { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn bounds(&self) -> BoundingBox {
        BoundingBox { x_min: 0.0, y_min: 0.0, x_max: f64::from(self.width), y_max: f64::from(self.height) }
    }
}

/// Inclusive on all four edges.
pub fn contains(b: &BoundingBox, p: Point) -> bool {
    b.x_min <= p.x && p.x <= b.x_max && b.y_min <= p.y && p.y <= b.y_max
}

pub fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

/// Intersection over union. Returns 0 when the union has zero area.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resized {
    pub resolution: Resolution,
    pub scale_x: f64,
    pub scale_y: f64,
}

fn nearest_multiple(dim: u32, multiple: u32) -> u32 {
    // round(dim / multiple) with ties rounding up, never below one multiple
    let (d, m) = (u64::from(dim), u64::from(multiple));
    let q = ((2 * d + m) / (2 * m)).max(1);
    u32::try_from(q * m).unwrap_or(u32::MAX - (u32::MAX % multiple))
}

/// Snaps each dimension to the nearest positive multiple of `multiple`
/// (ties round up) and reports the per-axis new/old scale factors.
///
/// # Panics
/// If `multiple` is zero.
pub fn smart_resize(res: Resolution, multiple: u32) -> Resized {
    assert!(multiple >= 1, "resize multiple must be positive");
    let width = nearest_multiple(res.width, multiple);
    let height = nearest_multiple(res.height, multiple);
    Resized {
        resolution: Resolution { width, height },
        scale_x: f64::from(width) / f64::from(res.width),
        scale_y: f64::from(height) / f64::from(res.height),
    }
}

pub fn rescale_box(b: &BoundingBox, sx: f64, sy: f64) -> Result<BoundingBox, GeometryError> {
    if !(sx.is_finite() && sy.is_finite() && sx > 0.0 && sy > 0.0) {
        return Err(GeometryError::BadScale { sx, sy });
    }
    Ok(BoundingBox { x_min: b.x_min * sx, y_min: b.y_min * sy, x_max: b.x_max * sx, y_max: b.y_max * sy })
}
