//! Axis-aligned region boxes in image pixel coordinates.
//!
//! Boxes are continuous; a pixel `(u, v)` belongs to a box when its center
//! `(u + 0.5, v + 0.5)` lies in the half-open rectangle `[x1, x2) × [y1, y2)`.
//! For integer boxes this is exactly the pixel range `x1..x2 × y1..y2`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of quantization bins per image axis.
pub const QUANT_BINS: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl RegionBox {
    /// Builds a box, rejecting non-finite coordinates and empty extents.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = RegionBox { x1, y1, x2, y2 };
        if ![x1, y1, x2, y2].iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidScene(format!("non-finite box {b}")));
        }
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::InvalidScene(format!("empty box {b}")));
        }
        Ok(b)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height
    }

    pub fn intersection_area(&self, other: &RegionBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn intersects(&self, other: &RegionBox) -> bool {
        self.intersection_area(other) > 0.0
    }

    /// Grows every side by `margin` pixels.
    pub fn expanded(&self, margin: f64) -> RegionBox {
        RegionBox {
            x1: self.x1 - margin,
            y1: self.y1 - margin,
            x2: self.x2 + margin,
            y2: self.y2 + margin,
        }
    }

    /// Clamps to the image frame, keeping at least one pixel of extent.
    pub fn clamped(&self, width: f64, height: f64) -> RegionBox {
        let x1 = self.x1.clamp(0.0, width - 1.0);
        let y1 = self.y1.clamp(0.0, height - 1.0);
        let x2 = self.x2.clamp(x1 + 1.0, width);
        let y2 = self.y2.clamp(y1 + 1.0, height);
        RegionBox { x1, y1, x2, y2 }
    }

    pub fn contains_pixel(&self, u: u32, v: u32) -> bool {
        let (cx, cy) = (u as f64 + 0.5, v as f64 + 0.5);
        self.x1 <= cx && cx < self.x2 && self.y1 <= cy && cy < self.y2
    }

    /// Inclusive-exclusive pixel index ranges covered by the box.
    pub fn pixel_range(&self, width: u32, height: u32) -> (std::ops::Range<u32>, std::ops::Range<u32>) {
        let lo = |c: f64, dim: u32| ((c - 0.5).ceil().max(0.0) as u32).min(dim);
        (lo(self.x1, width)..lo(self.x2, width), lo(self.y1, height)..lo(self.y2, height))
    }
}

impl fmt::Display for RegionBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.2}, {:.2}, {:.2}, {:.2}]", self.x1, self.y1, self.x2, self.y2)
    }
}

impl Serialize for RegionBox {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RegionBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[f64; 4]>::deserialize(d)?;
        RegionBox::new(x1, y1, x2, y2).map_err(serde::de::Error::custom)
    }
}

/// Intersection over union of two axis-aligned boxes; 0 when disjoint.
pub fn iou(a: &RegionBox, b: &RegionBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Maps a coordinate over a dimension of `dim` pixels onto the 0..=999 grid.
pub fn quantize_coord(v: f64, dim: f64) -> u16 {
    let bin = (v / dim * QUANT_BINS as f64).floor();
    bin.clamp(0.0, (QUANT_BINS - 1) as f64) as u16
}

/// Center of a quantization bin, in pixels.
pub fn dequantize_coord(q: u16, dim: f64) -> f64 {
    (q as f64 + 0.5) * dim / QUANT_BINS as f64
}

pub fn quantize_box(b: &RegionBox, width: f64, height: f64) -> [u16; 4] {
    [
        quantize_coord(b.x1, width),
        quantize_coord(b.y1, height),
        quantize_coord(b.x2, width),
        quantize_coord(b.y2, height),
    ]
}

pub fn dequantize_box(q: [u16; 4], width: f64, height: f64) -> [f64; 4] {
    [
        dequantize_coord(q[0], width),
        dequantize_coord(q[1], height),
        dequantize_coord(q[2], width),
        dequantize_coord(q[3], height),
    ]
}
