//! Disk-resident index structures for spatial-visual range queries over
//! geo-tagged feature vectors.
//!
//! All structures read through a simulated paged disk ([`pagestore`]), so a
//! query's I/O cost is the number of distinct pages it touched.

pub mod datafile;
pub mod error;
pub mod evalkit;
pub mod geom;
pub mod indexes;
pub mod lsh;
pub mod model;
pub mod pagestore;
pub mod rstar;
pub mod trace;
pub mod workbench;

pub use error::{Error, Result};
pub use geom::{euclidean_distance, expand_rect, rect_contains, sample_in_ball, Point, Rect};
pub use indexes::{IndexConfig, IndexKind, IndexStructure, QueryOutcome, QueryStats, VfiTrees};
pub use lsh::{HashFamily, LshParams};
pub use model::{Dataset, GeoImage, ImageId, ResultClass, SpatialVisualRangeQuery};
pub use pagestore::{PageStore, PageStoreConfig};
pub use rstar::RTreeParams;
