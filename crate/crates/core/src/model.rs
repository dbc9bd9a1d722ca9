use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};

/// Opaque, dataset-unique image identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ImageId(pub u64);

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A geo-tagged image: camera location plus visual feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoImage {
    pub id: ImageId,
    pub location: Point,
    pub features: Vec<f64>,
}

impl GeoImage {
    pub fn new(id: u64, location: Point, features: Vec<f64>) -> Self {
        Self {
            id: ImageId(id),
            location,
            features,
        }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// A validated collection of images sharing one visual dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    images: Vec<GeoImage>,
}

impl Dataset {
    pub fn new(dim: usize, images: Vec<GeoImage>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("visual dimension must be >= 1"));
        }
        let mut seen = HashSet::with_capacity(images.len());
        for img in &images {
            if img.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: img.dim(),
                });
            }
            if !img.location.is_finite() || img.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "image {} has non-finite values",
                    img.id
                )));
            }
            if !seen.insert(img.id) {
                return Err(Error::invalid(format!("duplicate image id {}", img.id)));
            }
        }
        Ok(Self { dim, images })
    }

    /// Infers the dimension from the first image.
    pub fn from_images(images: Vec<GeoImage>) -> Result<Self> {
        let dim = images
            .first()
            .map(GeoImage::dim)
            .ok_or_else(|| Error::invalid("cannot infer dimension of an empty dataset"))?;
        Self::new(dim, images)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn images(&self) -> &[GeoImage] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, id: ImageId) -> Option<&GeoImage> {
        self.images.iter().find(|i| i.id == id)
    }
}

/// Rectangle plus visual range, with optional exploration ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialVisualRangeQuery {
    pub spatial: Rect,
    pub query_vector: Vec<f64>,
    pub sigma: f64,
    /// Fractional side growth of the rectangle for spatial exploration.
    pub explore_spatial: f64,
    /// Number of random in-ball probe vectors for visual exploration.
    pub explore_visual: usize,
    /// Seed for probe-vector sampling.
    pub seed: u64,
}

impl SpatialVisualRangeQuery {
    pub fn new(spatial: Rect, query_vector: Vec<f64>, sigma: f64) -> Result<Self> {
        if sigma.is_nan() || sigma < 0.0 {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self {
            spatial,
            query_vector,
            sigma,
            explore_spatial: 0.0,
            explore_visual: 0,
            seed: 0,
        })
    }

    pub fn with_exploration(mut self, spatial_ratio: f64, visual_probes: usize) -> Result<Self> {
        if !(spatial_ratio.is_finite() && spatial_ratio >= 0.0) {
            return Err(Error::invalid(format!(
                "spatial exploration ratio must be >= 0, got {spatial_ratio}"
            )));
        }
        self.explore_spatial = spatial_ratio;
        self.explore_visual = visual_probes;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.query_vector.len()
    }
}

/// Classes of relevant images for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResultClass {
    /// Inside the rectangle and reachable through LSH.
    SVMatchRel,
    /// Visually relevant but located outside the rectangle.
    SUnmatchRel,
    /// Inside the rectangle and relevant, but missed by LSH.
    VUnmatchRel,
}

impl fmt::Display for ResultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResultClass::SVMatchRel => "SV-Match-Rel",
            ResultClass::SUnmatchRel => "S-UNMatch-Rel",
            ResultClass::VUnmatchRel => "V-UNMatch-Rel",
        })
    }
}
