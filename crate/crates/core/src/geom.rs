//! Planar geometry and Euclidean feature-space helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A 2-d location. `x` is latitude (or the abstract horizontal axis), `y`
/// longitude.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned rectangle with inclusive boundaries.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::invalid("rect corners must be finite"));
        }
        if min.x > max.x || min.y > max.y {
            return Err(Error::invalid(format!(
                "rect min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    /// Degenerate rectangle covering a single point.
    pub const fn point(p: Point) -> Self {
        Self { min: p, max: p }
    }

    pub fn from_coords(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        Self::new(Point::new(min_x, min_y), Point::new(max_x, max_y))
    }

    /// Rectangle of the given side lengths centred on `center`.
    pub fn centered(center: Point, width: f64, height: f64) -> Result<Self> {
        if !(width >= 0.0 && height >= 0.0) {
            return Err(Error::invalid("rect sides must be nonnegative"));
        }
        Self::new(
            Point::new(center.x - width / 2.0, center.y - height / 2.0),
            Point::new(center.x + width / 2.0, center.y + height / 2.0),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        rect_contains(self, p)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            min: Point::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            max: Point::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        }
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    /// Half perimeter, the R*-tree "margin".
    pub fn margin(&self) -> f64 {
        (self.max.x - self.min.x) + (self.max.y - self.min.y)
    }

    pub fn overlap_area(&self, other: &Rect) -> f64 {
        let w = self.max.x.min(other.max.x) - self.min.x.max(other.min.x);
        let h = self.max.y.min(other.max.y) - self.min.y.max(other.min.y);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.min.x + self.max.x) / 2.0,
            (self.min.y + self.max.y) / 2.0,
        )
    }

    /// Smallest rectangle enclosing every point; `None` for an empty input.
    pub fn bounding<I: IntoIterator<Item = Point>>(points: I) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = it.next()?;
        Some(it.fold(Rect::point(first), |r, p| r.union(&Rect::point(p))))
    }
}

/// Inclusive point-in-rectangle test.
pub fn rect_contains(r: &Rect, p: Point) -> bool {
    r.min.x <= p.x && p.x <= r.max.x && r.min.y <= p.y && p.y <= r.max.y
}

/// Grows `r` about its centre so each side is `(1 + ratio)` times longer.
///
/// The result always encloses `r`, even where rounding would otherwise
/// shave an ulp off a corner.
pub fn expand_rect(r: &Rect, ratio: f64) -> Result<Rect> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(Error::invalid(format!(
            "exploration ratio must be finite and >= 0, got {ratio}"
        )));
    }
    if ratio == 0.0 {
        return Ok(*r);
    }
    let c = r.center();
    let hw = (r.max.x - r.min.x) / 2.0 * (1.0 + ratio);
    let hh = (r.max.y - r.min.y) / 2.0 * (1.0 + ratio);
    Ok(Rect {
        min: Point::new((c.x - hw).min(r.min.x), (c.y - hh).min(r.min.y)),
        max: Point::new((c.x + hw).max(r.max.x), (c.y + hh).max(r.max.y)),
    })
}

/// Euclidean (L2) distance between two feature vectors.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(squared_distance(a, b).sqrt())
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Draws `count` vectors uniformly from the closed ball of `radius` around
/// `center`.
///
/// Vectors are produced from a single ChaCha stream in order, so the output
/// for `count = k` is always a prefix of the output for `count = k + 1`.
pub fn sample_in_ball(center: &[f64], radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = center.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    if d == 0 {
        out.resize(count, Vec::new());
        return out;
    }
    let radius = radius.max(0.0);
    for _ in 0..count {
        let dir = loop {
            let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                break g.into_iter().map(|x| x / norm).collect::<Vec<f64>>();
            }
        };
        let u: f64 = rng.random();
        let mut r = radius * u.powf(1.0 / d as f64);
        loop {
            let v: Vec<f64> = center.iter().zip(&dir).map(|(c, g)| c + g * r).collect();
            if squared_distance(&v, center).sqrt() <= radius {
                out.push(v);
                break;
            }
            r *= 1.0 - 1e-12;
        }
    }
    out
}
