//! Synthetic datasets, query workloads, the running example and the
//! benchmark driver.
//!
//! Text formats (comma separated, floats printed with shortest round-trip
//! precision):
//!
//! ```text
//! dataset:  svx-dataset,v1,<n>,<d>
//!           id,x,y,v0,...,v{d-1}
//! workload: svx-workload,v1
//!           qid,min_x,min_y,max_x,max_y,sigma,e_s,e_v,seed,v0,...,v{d-1}
//! report:   qid,structure,pages_rtree,pages_lsh,pages_data,sim_time,result_count,recall,precision,sv_match,s_unmatch,v_unmatch
//! ```
//!
//! An undefined recall (empty ground truth) is written as `NA`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{
    class_counts, effective_rect, oracle_query, precision, recall, ClassCounts, EvaluationReport,
    GroundTruth, QueryRow,
};
use crate::geom::{squared_distance, Point, Rect};
use crate::indexes::{IndexConfig, IndexKind, IndexStructure, VfiTrees};
use crate::lsh::{HashFamily, HashFunction, LshParams};
use crate::model::{Dataset, GeoImage, ImageId, SpatialVisualRangeQuery};
use crate::pagestore::PageStoreConfig;
use crate::rstar::RTreeParams;

/// One Gaussian component of a mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: Vec<f64>,
    pub spread: f64,
    pub weight: f64,
}

impl Cluster {
    pub fn new(center: Vec<f64>, spread: f64, weight: f64) -> Self {
        Self {
            center,
            spread,
            weight,
        }
    }
}

fn default_dim() -> usize {
    150
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n: usize,
    #[serde(default = "default_dim")]
    pub d: usize,
    pub spatial_clusters: Vec<Cluster>,
    pub visual_clusters: Vec<Cluster>,
    /// Fraction of images whose visual cluster index equals their spatial
    /// one (modulo the number of visual clusters).
    #[serde(default)]
    pub coupling: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetSpec {
    /// A mixture whose clusters have deliberately different spreads, so
    /// local density varies independently in both spaces.
    pub fn standard(n: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_DA7A);
        let spreads_s = [0.6, 1.0, 1.5, 2.5, 4.0, 6.0, 9.0, 14.0];
        let spreads_v = [0.02, 0.03, 0.045, 0.06, 0.08, 0.1, 0.13, 0.17];
        let spatial_clusters = spreads_s
            .iter()
            .map(|s| {
                let c = vec![rng.random_range(10.0..90.0), rng.random_range(10.0..90.0)];
                Cluster::new(c, *s, 1.0 / spreads_s.len() as f64)
            })
            .collect();
        let visual_clusters = spreads_v
            .iter()
            .map(|s| {
                let c = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                Cluster::new(c, *s, 1.0 / spreads_v.len() as f64)
            })
            .collect();
        Self {
            n,
            d,
            spatial_clusters,
            visual_clusters,
            coupling: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("visual dimension must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::invalid(format!(
                "coupling {} outside [0, 1]",
                self.coupling
            )));
        }
        for (what, clusters, dim) in [
            ("spatial", &self.spatial_clusters, 2),
            ("visual", &self.visual_clusters, self.d),
        ] {
            if clusters.is_empty() {
                return Err(Error::invalid(format!("no {what} clusters")));
            }
            let total: f64 = clusters.iter().map(|c| c.weight).sum();
            if (total - 1.0).abs() > 1e-9
                || clusters.iter().any(|c| c.weight.is_nan() || c.weight < 0.0)
            {
                return Err(Error::invalid(format!(
                    "{what} weights sum to {total}, not 1"
                )));
            }
            for c in clusters {
                if c.spread.is_nan() || c.spread <= 0.0 {
                    return Err(Error::invalid(format!("{what} spread must be > 0")));
                }
                if c.center.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        actual: c.center.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Samples `spec.n` images from the spec's mixtures.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pick = |cs: &[Cluster]| {
        WeightedIndex::new(cs.iter().map(|c| c.weight)).map_err(|e| Error::invalid(e.to_string()))
    };
    let (ps, pv) = (pick(&spec.spatial_clusters)?, pick(&spec.visual_clusters)?);
    let mut images = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let si = ps.sample(&mut rng);
        let vi = if rng.random::<f64>() < spec.coupling {
            si % spec.visual_clusters.len()
        } else {
            pv.sample(&mut rng)
        };
        let mut around = |c: &Cluster| -> Vec<f64> {
            c.center
                .iter()
                .map(|m| m + c.spread * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let s = around(&spec.spatial_clusters[si]);
        let v = around(&spec.visual_clusters[vi]);
        images.push(GeoImage::new(i as u64, Point::new(s[0], s[1]), v));
    }
    Dataset::new(spec.d, images)
}

fn join_floats(out: &mut String, vals: &[f64]) {
    use std::fmt::Write as _;
    for v in vals {
        let _ = write!(out, ",{v}");
    }
}

pub fn write_dataset<W: Write>(ds: &Dataset, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "svx-dataset,v1,{},{}", ds.len(), ds.dim())?;
    let mut line = String::new();
    for img in ds.images() {
        line.clear();
        line.push_str(&img.id.0.to_string());
        join_floats(&mut line, &[img.location.x, img.location.y]);
        join_floats(&mut line, &img.features);
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(what: &'static str, line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(what, line, format!("bad number {s:?}")))
}

fn parse_u64(what: &'static str, line: usize, s: &str) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(what, line, format!("bad integer {s:?}")))
}

pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    const WHAT: &str = "dataset";
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::format(WHAT, 1, "missing header"))?;
    let h: Vec<&str> = header.trim().split(',').collect();
    if h.len() != 4 || h[0] != "svx-dataset" || h[1] != "v1" {
        return Err(Error::format(WHAT, 1, format!("bad header {header:?}")));
    }
    let n = parse_u64(WHAT, 1, h[2])? as usize;
    let d = parse_u64(WHAT, 1, h[3])? as usize;
    let mut images = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 3 + d {
            return Err(Error::format(
                WHAT,
                no,
                format!("expected {} fields, got {}", 3 + d, f.len()),
            ));
        }
        let id = parse_u64(WHAT, no, f[0])?;
        let x = parse_f64(WHAT, no, f[1])?;
        let y = parse_f64(WHAT, no, f[2])?;
        let v = f[3..]
            .iter()
            .map(|s| parse_f64(WHAT, no, s))
            .collect::<Result<_>>()?;
        images.push(GeoImage::new(id, Point::new(x, y), v));
    }
    if images.len() != n {
        return Err(Error::format(
            WHAT,
            1,
            format!("header says {n} images, found {}", images.len()),
        ));
    }
    Dataset::new(d, images)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_dataset(ds, fs::File::create(path)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(fs::File::open(path)?)
}

/// A query with its workload id.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadQuery {
    pub qid: u64,
    pub query: SpatialVisualRangeQuery,
}

pub fn write_workload<W: Write>(queries: &[WorkloadQuery], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "svx-workload,v1")?;
    let mut line = String::new();
    for wq in queries {
        let q = &wq.query;
        line.clear();
        line.push_str(&wq.qid.to_string());
        let r = q.spatial;
        join_floats(
            &mut line,
            &[
                r.min.x,
                r.min.y,
                r.max.x,
                r.max.y,
                q.sigma,
                q.explore_spatial,
            ],
        );
        line.push_str(&format!(",{},{}", q.explore_visual, q.seed));
        join_floats(&mut line, &q.query_vector);
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_workload<R: Read>(r: R) -> Result<Vec<WorkloadQuery>> {
    const WHAT: &str = "workload";
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "svx-workload,v1" {
        return Err(Error::format(WHAT, 1, format!("bad header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() < 10 {
            return Err(Error::format(WHAT, no, "too few fields"));
        }
        let num = |k: usize| parse_f64(WHAT, no, f[k]);
        let rect = Rect::from_coords(num(1)?, num(2)?, num(3)?, num(4)?)
            .map_err(|e| Error::format(WHAT, no, e.to_string()))?;
        let v = f[9..]
            .iter()
            .map(|s| parse_f64(WHAT, no, s))
            .collect::<Result<_>>()?;
        let query = SpatialVisualRangeQuery::new(rect, v, num(5)?)
            .and_then(|q| q.with_exploration(num(6)?, parse_u64(WHAT, no, f[7])? as usize))
            .map_err(|e| Error::format(WHAT, no, e.to_string()))?
            .with_seed(parse_u64(WHAT, no, f[8])?);
        out.push(WorkloadQuery {
            qid: parse_u64(WHAT, no, f[0])?,
            query,
        });
    }
    Ok(out)
}

pub fn save_workload(queries: &[WorkloadQuery], path: &Path) -> Result<()> {
    write_workload(queries, fs::File::create(path)?)
}

pub fn load_workload(path: &Path) -> Result<Vec<WorkloadQuery>> {
    read_workload(fs::File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SelectivityGroup {
    #[serde(rename = "SD-VD")]
    SdVd,
    #[serde(rename = "SD-VS")]
    SdVs,
    #[serde(rename = "SS-VD")]
    SsVd,
    #[serde(rename = "SS-VS")]
    SsVs,
    #[serde(rename = "SU-VU")]
    SuVu,
}

impl SelectivityGroup {
    pub const ALL: [SelectivityGroup; 5] = [
        SelectivityGroup::SdVd,
        SelectivityGroup::SdVs,
        SelectivityGroup::SsVd,
        SelectivityGroup::SsVs,
        SelectivityGroup::SuVu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectivityGroup::SdVd => "SD-VD",
            SelectivityGroup::SdVs => "SD-VS",
            SelectivityGroup::SsVd => "SS-VD",
            SelectivityGroup::SsVs => "SS-VS",
            SelectivityGroup::SuVu => "SU-VU",
        }
    }

    /// Required (spatial, visual) density.
    pub fn densities(self) -> (Density, Density) {
        use Density::*;
        match self {
            SelectivityGroup::SdVd => (Dense, Dense),
            SelectivityGroup::SdVs => (Dense, Sparse),
            SelectivityGroup::SsVd => (Sparse, Dense),
            SelectivityGroup::SsVs => (Sparse, Sparse),
            SelectivityGroup::SuVu => (Uniform, Uniform),
        }
    }
}

impl fmt::Display for SelectivityGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SelectivityGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SelectivityGroup::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown selectivity group {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Density {
    Dense,
    Uniform,
    Sparse,
}

pub const DENSITY_K: usize = 10;

/// Distance from each point to its k-th nearest other point.
pub fn knn_distances(points: &[&[f64]], k: usize) -> Vec<f64> {
    let n = points.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let k = k.clamp(1, n - 1);
    let mut buf = Vec::with_capacity(n - 1);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            buf.clear();
            buf.extend(
                points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, o)| squared_distance(p, o)),
            );
            let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
            kth.sqrt()
        })
        .collect()
}

/// Rank terciles: the third with the smallest k-NN distance is dense.
pub fn terciles(knn: &[f64]) -> Vec<Density> {
    let n = knn.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| knn[*a].total_cmp(&knn[*b]).then(a.cmp(b)));
    let mut out = vec![Density::Uniform; n];
    for (rank, i) in order.into_iter().enumerate() {
        out[i] = if 3 * rank < n {
            Density::Dense
        } else if 3 * rank < 2 * n {
            Density::Uniform
        } else {
            Density::Sparse
        };
    }
    out
}

/// Local density class of every image, per space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub spatial_knn: Vec<f64>,
    pub visual_knn: Vec<f64>,
    pub spatial: Vec<Density>,
    pub visual: Vec<Density>,
}

pub fn density_profile(ds: &Dataset) -> DensityProfile {
    let locs: Vec<[f64; 2]> = ds
        .images()
        .iter()
        .map(|i| [i.location.x, i.location.y])
        .collect();
    let sp: Vec<&[f64]> = locs.iter().map(|l| &l[..]).collect();
    let vp: Vec<&[f64]> = ds.images().iter().map(|i| &i.features[..]).collect();
    let spatial_knn = knn_distances(&sp, DENSITY_K);
    let visual_knn = knn_distances(&vp, DENSITY_K);
    DensityProfile {
        spatial: terciles(&spatial_knn),
        visual: terciles(&visual_knn),
        spatial_knn,
        visual_knn,
    }
}

/// Rectangle size, visual threshold and exploration of generated queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryShape {
    pub side: f64,
    pub sigma: f64,
    pub explore_spatial: f64,
    pub explore_visual: usize,
}

/// Picks `count` query images from `group` and turns each into a query
/// centered on its location, numbered from `first_qid`.
pub fn select_queries(
    ds: &Dataset,
    profile: &DensityProfile,
    group: SelectivityGroup,
    count: usize,
    seed: u64,
    shape: &QueryShape,
    first_qid: u64,
) -> Result<Vec<WorkloadQuery>> {
    let (sd, vd) = group.densities();
    let pool: Vec<usize> = (0..ds.len())
        .filter(|&i| profile.spatial[i] == sd && profile.visual[i] == vd)
        .collect();
    if count == 0 {
        return Ok(Vec::new());
    }
    if pool.is_empty() {
        return Err(Error::EmptyGroup(group.name().to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if count <= pool.len() {
        sample(&mut rng, pool.len(), count)
            .into_iter()
            .map(|k| pool[k])
            .collect()
    } else {
        (0..count)
            .map(|_| pool[rng.random_range(0..pool.len())])
            .collect()
    };
    picks
        .into_iter()
        .enumerate()
        .map(|(j, i)| {
            let img = &ds.images()[i];
            let qid = first_qid + j as u64;
            let q = SpatialVisualRangeQuery::new(
                Rect::centered(img.location, shape.side, shape.side)?,
                img.features.clone(),
                shape.sigma,
            )?
            .with_exploration(shape.explore_spatial, shape.explore_visual)?
            .with_seed(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ qid);
            Ok(WorkloadQuery { qid, query: q })
        })
        .collect()
}

/// Pairwise visual distances over a sample of at most `max_sample` images,
/// sorted ascending.
pub fn sampled_pairwise_distances(ds: &Dataset, max_sample: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = if ds.len() <= max_sample {
        (0..ds.len()).collect()
    } else {
        sample(&mut rng, ds.len(), max_sample).into_vec()
    };
    let mut d = Vec::with_capacity(idx.len() * idx.len().saturating_sub(1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            d.push(squared_distance(&ds.images()[i].features, &ds.images()[j].features).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    d
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = (q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[pos]
}

/// Median sampled pairwise distance divided by 4.
pub fn default_width(ds: &Dataset, seed: u64) -> f64 {
    let w = quantile(&sampled_pairwise_distances(ds, 500, seed), 0.5) / 4.0;
    if w > 0.0 {
        w
    } else {
        1.0
    }
}

/// The `q`-quantile of sampled pairwise visual distances.
pub fn sigma_at_quantile(ds: &Dataset, q: f64, seed: u64) -> f64 {
    quantile(&sampled_pairwise_distances(ds, 500, seed), q)
}

/// The nine-image example: data, hash family, configuration and query.
#[derive(Debug, Clone)]
pub struct RunningExample {
    pub dataset: Dataset,
    pub family: HashFamily,
    pub config: IndexConfig,
    pub query: SpatialVisualRangeQuery,
}

impl RunningExample {
    pub fn id(k: u64) -> ImageId {
        ImageId(k)
    }
}

/// Builds the nine-image example. Image `Ik` has id `k`.
///
/// Visual vectors are 2-d with the query vector at (0.9, 0.9) and the
/// distances of the example table. Table 0 hashes by (floor x, floor y),
/// table 1 by floor((y + 0.2) / 0.6), which yields four and three buckets
/// with the query landing in {I3, I4, I5, I8} and {I3, ..., I8}.
///
/// Locations and insertion order are chosen so that a fan-out 3 R*-tree
/// has a root, two internal nodes and six leaves, and the query rectangle
/// (30, -116)-(34, -104) overlaps exactly the leaves {I3, I7, I8} and
/// {I4, I9}.
pub fn running_example() -> RunningExample {
    let r = 1.5 / 2f64.sqrt();
    type Row = (u64, (f64, f64), (f64, f64));
    let table: [Row; 9] = [
        (3, (31.0, -115.0), (0.8, 0.9)),
        (4, (31.0, -106.0), (0.6, 0.9)),
        (6, (29.0, -97.0), (1.7, 0.9)),
        (2, (50.0, -102.0), (1.26, 1.38)),
        (9, (33.0, -105.0), (0.9, 1.3)),
        (5, (16.0, -114.0), (0.7, 0.9)),
        (7, (33.0, -113.0), (1.38, 0.54)),
        (1, (48.0, -118.0), (0.9 + r, 0.9 + r)),
        (8, (37.0, -114.0), (0.5, 0.9)),
    ];
    let images = table
        .iter()
        .map(|(k, s, v)| GeoImage::new(*k, Point::new(s.0, s.1), vec![v.0, v.1]))
        .collect();
    let dataset = Dataset::new(2, images).expect("valid fixture");
    let h = |a: [f64; 2], b: f64| HashFunction { a: a.to_vec(), b };
    // table 0: W = 1, b = 0; table 1 scaled to W = 1: floor((y + 0.2) / 0.6)
    let family = HashFamily::from_functions(
        0.6,
        vec![
            vec![h([0.6, 0.0], 0.0), h([0.0, 0.6], 0.0)],
            vec![h([0.0, 1.0], 0.2)],
        ],
    )
    .expect("valid fixture family");
    let config = IndexConfig {
        page: PageStoreConfig::default(),
        rtree: RTreeParams {
            fan_out: 3,
            min_fill: 1,
        },
        ..IndexConfig::default()
    };
    let query = SpatialVisualRangeQuery::new(
        Rect::from_coords(30.0, -116.0, 34.0, -104.0).expect("valid rect"),
        vec![0.9, 0.9],
        0.5,
    )
    .expect("valid query");
    RunningExample {
        dataset,
        family,
        config,
        query,
    }
}

/// Structure variants evaluated by the benchmark: every kind as built,
/// plus the explorative AugSFI-E / AugVFI-E, which reuse the AugSFI /
/// AugVFI structures with the query's exploration ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub kind: IndexKind,
    pub explore: bool,
}

impl Variant {
    pub fn label(&self) -> String {
        if self.explore {
            format!("{}-E", self.kind)
        } else {
            self.kind.to_string()
        }
    }

    /// `q` as this variant runs it; non-explorative variants drop the
    /// exploration ratios.
    pub fn adapt(&self, q: &SpatialVisualRangeQuery) -> SpatialVisualRangeQuery {
        let mut q = q.clone();
        if !self.explore {
            q.explore_spatial = 0.0;
            q.explore_visual = 0;
        }
        q
    }
}

pub fn variants(kinds: &[IndexKind]) -> Vec<Variant> {
    let mut out = Vec::new();
    for &kind in kinds {
        out.push(Variant {
            kind,
            explore: false,
        });
        if matches!(kind, IndexKind::AugSFI | IndexKind::AugVFI) {
            out.push(Variant {
                kind,
                explore: true,
            });
        }
    }
    out
}

/// Structures built over one dataset with one shared hash family.
pub struct Harness {
    pub dataset: Dataset,
    pub structures: BTreeMap<IndexKind, IndexStructure>,
    /// Spatial exploration ratio used for extended ground truth.
    pub explore_max: f64,
}

impl Harness {
    pub fn build(
        dataset: Dataset,
        family: &HashFamily,
        cfg: &IndexConfig,
        kinds: &[IndexKind],
        explore_max: f64,
    ) -> Result<Self> {
        let structures = kinds
            .iter()
            .map(|&k| Ok((k, IndexStructure::build(k, &dataset, cfg, family)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            dataset,
            structures,
            explore_max,
        })
    }

    pub fn variants(&self) -> Vec<Variant> {
        variants(&self.structures.keys().copied().collect::<Vec<_>>())
    }

    pub fn truth(&self, q: &SpatialVisualRangeQuery) -> Result<GroundTruth> {
        oracle_query(&self.dataset, q, self.explore_max.max(q.explore_spatial))
    }

    /// Runs one variant on one query and scores the answer.
    pub fn evaluate(
        &self,
        variant: Variant,
        wq: &WorkloadQuery,
        truth: &GroundTruth,
    ) -> Result<QueryRow> {
        let idx = self
            .structures
            .get(&variant.kind)
            .ok_or_else(|| Error::invalid(format!("{} was not built", variant.kind)))?;
        let q = variant.adapt(&wq.query);
        let out = idx.query(&q)?;
        let rect = effective_rect(variant.kind, &q)?;
        let classes: ClassCounts = class_counts(&self.dataset, idx.family(), &q, truth, &out.ids)?;
        Ok(QueryRow {
            qid: wq.qid,
            structure: variant.label(),
            pages_rtree: out.stats.pages_rtree,
            pages_lsh: out.stats.pages_lsh,
            pages_data: out.stats.pages_data,
            sim_time: out.stats.simulated_time,
            result_count: out.ids.len(),
            recall: recall(&truth.extended, &out.ids),
            precision: precision(&self.dataset, &q, &rect, &out.ids),
            classes,
            ids: out.ids,
        })
    }

    /// Every variant on every query; rows grouped by variant.
    pub fn run(&self, workload: &[WorkloadQuery]) -> Result<EvaluationReport> {
        self.run_variants(&self.variants(), workload)
    }

    pub fn run_variants(
        &self,
        variants: &[Variant],
        workload: &[WorkloadQuery],
    ) -> Result<EvaluationReport> {
        let truths = workload
            .iter()
            .map(|wq| self.truth(&wq.query))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::with_capacity(variants.len() * workload.len());
        for v in variants {
            for (wq, t) in workload.iter().zip(&truths) {
                rows.push(self.evaluate(*v, wq, t)?);
            }
        }
        EvaluationReport::from_rows(rows)
    }
}

pub const REPORT_HEADER: &str =
    "qid,structure,pages_rtree,pages_lsh,pages_data,sim_time,result_count,recall,precision,sv_match,s_unmatch,v_unmatch";

pub fn write_report<W: Write>(rows: &[QueryRow], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        let recall = r.recall.map_or("NA".to_string(), |x| x.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.qid,
            r.structure,
            r.pages_rtree,
            r.pages_lsh,
            r.pages_data,
            r.sim_time,
            r.result_count,
            recall,
            r.precision,
            r.classes.sv_match,
            r.classes.s_unmatch,
            r.classes.v_unmatch
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads report rows; result ids are not part of the report and stay empty.
pub fn read_report<R: Read>(r: R) -> Result<Vec<QueryRow>> {
    const WHAT: &str = "report";
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let no = i + 1;
        if no == 1 && line.trim() == REPORT_HEADER {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 12 {
            return Err(Error::format(
                WHAT,
                no,
                format!("expected 12 fields, got {}", f.len()),
            ));
        }
        let int = |k: usize| parse_u64(WHAT, no, f[k]).map(|v| v as usize);
        out.push(QueryRow {
            qid: parse_u64(WHAT, no, f[0])?,
            structure: f[1].to_string(),
            pages_rtree: int(2)?,
            pages_lsh: int(3)?,
            pages_data: int(4)?,
            sim_time: parse_f64(WHAT, no, f[5])?,
            result_count: int(6)?,
            recall: if f[7] == "NA" {
                None
            } else {
                Some(parse_f64(WHAT, no, f[7])?)
            },
            precision: parse_f64(WHAT, no, f[8])?,
            classes: ClassCounts {
                sv_match: int(9)?,
                s_unmatch: int(10)?,
                v_unmatch: int(11)?,
            },
            ids: Vec::new(),
        });
    }
    Ok(out)
}

/// `qid,structure,id;id;...` — the result sets behind a report.
pub fn write_results<W: Write>(rows: &[QueryRow], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "qid,structure,ids")?;
    for r in rows {
        let ids: Vec<String> = r.ids.iter().map(|i| i.0.to_string()).collect();
        writeln!(w, "{},{},{}", r.qid, r.structure, ids.join(";"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(report: &EvaluationReport, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(
        w,
        "structure,queries,mean_pages,mean_pages_rtree,mean_pages_lsh,mean_pages_data,mean_recall,mean_precision"
    )?;
    for s in &report.summaries {
        let rec = s.mean_recall.map_or("NA".to_string(), |x| x.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.structure,
            s.queries,
            s.mean_pages,
            s.mean_pages_rtree,
            s.mean_pages_lsh,
            s.mean_pages_data,
            rec,
            s.mean_precision
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_lemmas<W: Write>(report: &EvaluationReport, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(
        w,
        "lemma,left,right,scope,satisfied,queries,mean_left,mean_right,holds"
    )?;
    for l in &report.lemmas {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            l.lemma,
            l.left,
            l.right,
            if l.per_query { "per-query" } else { "mean" },
            l.satisfied,
            l.queries,
            l.mean_left,
            l.mean_right,
            l.holds
        )?;
    }
    w.flush()?;
    Ok(())
}

fn default_structures() -> Vec<IndexKind> {
    IndexKind::ALL.to_vec()
}
fn default_groups() -> Vec<SelectivityGroup> {
    vec![SelectivityGroup::SuVu]
}
fn default_queries() -> usize {
    100
}
fn default_ranges() -> Vec<f64> {
    vec![1.25, 3.7, 6.18, 8.1]
}
fn default_range_index() -> usize {
    2
}
fn default_one() -> f64 {
    1.0
}
fn default_sigma_quantiles() -> Vec<f64> {
    vec![0.02, 0.035, 0.05, 0.07]
}
fn default_sigma_index() -> usize {
    2
}
fn default_e_s() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7]
}
fn default_e_s_value() -> f64 {
    0.5
}
fn default_e_v() -> Vec<usize> {
    vec![9, 15, 21, 27]
}
fn default_e_v_value() -> usize {
    15
}
fn default_seed() -> u64 {
    42
}
fn default_out() -> PathBuf {
    PathBuf::from("svx-out")
}
fn default_tables() -> usize {
    3
}
fn default_functions() -> usize {
    7
}
fn default_page_size() -> usize {
    4096
}
fn default_t_disk() -> f64 {
    0.01
}
fn default_fan_out() -> usize {
    85
}
fn default_vfi_trees() -> VfiTrees {
    VfiTrees::PerTable
}
fn default_timing_runs() -> usize {
    5
}
fn default_true() -> bool {
    true
}

/// Everything `run_benchmark` needs. Every field has a default, so a config
/// file may set any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Dataset file; when absent `spec` (or the standard spec) is generated.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub spec: Option<DatasetSpec>,
    /// Workload file; when absent queries are selected per group.
    #[serde(default)]
    pub workload: Option<PathBuf>,
    #[serde(default = "default_structures")]
    pub structures: Vec<IndexKind>,
    #[serde(default = "default_groups")]
    pub groups: Vec<SelectivityGroup>,
    #[serde(default = "default_queries")]
    pub queries_per_group: usize,
    /// Query rectangle side lengths, before scaling.
    #[serde(default = "default_ranges")]
    pub spatial_ranges: Vec<f64>,
    #[serde(default = "default_range_index")]
    pub spatial_range_index: usize,
    /// Plane units per spatial-range unit.
    #[serde(default = "default_one")]
    pub range_scale: f64,
    /// Explicit sigma values; when absent they come from `sigma_quantiles`.
    #[serde(default)]
    pub sigmas: Option<Vec<f64>>,
    #[serde(default = "default_sigma_quantiles")]
    pub sigma_quantiles: Vec<f64>,
    #[serde(default = "default_sigma_index")]
    pub sigma_index: usize,
    #[serde(default = "default_e_s")]
    pub e_s: Vec<f64>,
    #[serde(default = "default_e_s_value")]
    pub default_e_s: f64,
    #[serde(default = "default_e_v")]
    pub e_v: Vec<usize>,
    #[serde(default = "default_e_v_value")]
    pub default_e_v: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_tables")]
    pub tables: usize,
    #[serde(default = "default_functions")]
    pub functions: usize,
    /// LSH bucket width; defaults to a quarter of the median pairwise distance.
    #[serde(default)]
    pub width: Option<f64>,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    #[serde(default = "default_t_disk")]
    pub t_disk: f64,
    #[serde(default = "default_fan_out")]
    pub fan_out: usize,
    #[serde(default = "default_vfi_trees")]
    pub vfi_trees: VfiTrees,
    #[serde(default = "default_timing_runs")]
    pub timing_runs: usize,
    /// Write the sweep series files.
    #[serde(default = "default_true")]
    pub series: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        toml_defaults()
    }
}

fn toml_defaults() -> BenchmarkConfig {
    BenchmarkConfig {
        dataset: None,
        spec: None,
        workload: None,
        structures: default_structures(),
        groups: default_groups(),
        queries_per_group: default_queries(),
        spatial_ranges: default_ranges(),
        spatial_range_index: default_range_index(),
        range_scale: 1.0,
        sigmas: None,
        sigma_quantiles: default_sigma_quantiles(),
        sigma_index: default_sigma_index(),
        e_s: default_e_s(),
        default_e_s: default_e_s_value(),
        e_v: default_e_v(),
        default_e_v: default_e_v_value(),
        seed: default_seed(),
        out_dir: default_out(),
        tables: default_tables(),
        functions: default_functions(),
        width: None,
        page_size: default_page_size(),
        t_disk: default_t_disk(),
        fan_out: default_fan_out(),
        vfi_trees: VfiTrees::PerTable,
        timing_runs: default_timing_runs(),
        series: true,
    }
}

impl BenchmarkConfig {
    pub fn index_config(&self) -> IndexConfig {
        IndexConfig {
            page: PageStoreConfig {
                page_size: self.page_size,
                t_disk: self.t_disk,
            },
            rtree: RTreeParams::with_fan_out(self.fan_out),
            vfi_trees: self.vfi_trees,
        }
    }

    pub fn load_or_generate_dataset(&self) -> Result<Dataset> {
        match (&self.dataset, &self.spec) {
            (Some(p), _) => load_dataset(p),
            (None, Some(spec)) => generate_dataset(spec),
            (None, None) => generate_dataset(&DatasetSpec::standard(2000, 32, self.seed)),
        }
    }

    pub fn sigma_values(&self, ds: &Dataset) -> Vec<f64> {
        match &self.sigmas {
            Some(s) => s.clone(),
            None => {
                let d = sampled_pairwise_distances(ds, 500, self.seed);
                self.sigma_quantiles
                    .iter()
                    .map(|q| quantile(&d, *q))
                    .collect()
            }
        }
    }

    pub fn family(&self, ds: &Dataset) -> Result<HashFamily> {
        let width = self.width.unwrap_or_else(|| default_width(ds, self.seed));
        HashFamily::generate(&LshParams {
            tables: self.tables,
            functions_per_table: self.functions,
            width,
            dim: ds.dim(),
            seed: self.seed,
        })
    }

    fn pick<T: Copy>(list: &[T], i: usize, what: &str) -> Result<T> {
        list.get(i)
            .copied()
            .or_else(|| list.last().copied())
            .ok_or_else(|| Error::invalid(format!("no {what} values configured")))
    }

    /// Default query shape: the configured range, sigma and exploration.
    pub fn shape(&self, ds: &Dataset) -> Result<QueryShape> {
        Ok(QueryShape {
            side: Self::pick(
                &self.spatial_ranges,
                self.spatial_range_index,
                "spatial range",
            )? * self.range_scale,
            sigma: Self::pick(&self.sigma_values(ds), self.sigma_index, "sigma")?,
            explore_spatial: self.default_e_s,
            explore_visual: self.default_e_v,
        })
    }

    /// Queries from `workload` or from the configured groups.
    pub fn workload(&self, ds: &Dataset) -> Result<Vec<WorkloadQuery>> {
        if let Some(p) = &self.workload {
            return load_workload(p);
        }
        let shape = self.shape(ds)?;
        let profile = density_profile(ds);
        let mut out = Vec::new();
        for (gi, g) in self.groups.iter().enumerate() {
            let seed = self.seed.wrapping_add(gi as u64 + 1);
            out.extend(select_queries(
                ds,
                &profile,
                *g,
                self.queries_per_group,
                seed,
                &shape,
                out.len() as u64,
            )?);
        }
        Ok(out)
    }

    /// Largest spatial exploration ratio in play; bounds the extended truth.
    pub fn explore_max(&self) -> f64 {
        self.e_s.iter().copied().fold(self.default_e_s, f64::max)
    }
}

/// Files written by [`run_benchmark`].
#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub report: EvaluationReport,
    pub files: Vec<PathBuf>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("NA".to_string(), |v| v.to_string())
}

fn map_queries(
    workload: &[WorkloadQuery],
    f: impl Fn(&SpatialVisualRangeQuery) -> Result<SpatialVisualRangeQuery>,
) -> Result<Vec<WorkloadQuery>> {
    workload
        .iter()
        .map(|wq| {
            Ok(WorkloadQuery {
                qid: wq.qid,
                query: f(&wq.query)?,
            })
        })
        .collect()
}

/// Builds every configured structure, runs the workload, and writes
/// `report.csv`, `results.csv`, `summary.csv`, `lemmas.csv`, `timing.csv`
/// and (unless disabled) the `series_*.csv` sweeps into `cfg.out_dir`.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkOutput> {
    let ds = cfg.load_or_generate_dataset()?;
    let family = cfg.family(&ds)?;
    let workload = cfg.workload(&ds)?;
    let harness = Harness::build(
        ds,
        &family,
        &cfg.index_config(),
        &cfg.structures,
        cfg.explore_max(),
    )?;
    let report = harness.run(&workload)?;

    fs::create_dir_all(&cfg.out_dir)?;
    let mut files = Vec::new();
    let mut create = |name: &str| -> Result<fs::File> {
        let p = cfg.out_dir.join(name);
        files.push(p.clone());
        Ok(fs::File::create(p)?)
    };
    write_report(&report.rows, create("report.csv")?)?;
    write_results(&report.rows, create("results.csv")?)?;
    write_summary(&report, create("summary.csv")?)?;
    write_lemmas(&report, create("lemmas.csv")?)?;

    // wall time: each query run `timing_runs` times, fastest and slowest dropped
    let mut timing = BufWriter::new(create("timing.csv")?);
    writeln!(timing, "qid,structure,wall_seconds")?;
    for v in harness.variants() {
        let idx = &harness.structures[&v.kind];
        for wq in &workload {
            let q = v.adapt(&wq.query);
            let mut times = Vec::with_capacity(cfg.timing_runs);
            for _ in 0..cfg.timing_runs.max(1) {
                let t = Instant::now();
                idx.query(&q)?;
                times.push(t.elapsed().as_secs_f64());
            }
            times.sort_by(f64::total_cmp);
            let kept = if times.len() > 2 {
                &times[1..times.len() - 1]
            } else {
                &times[..]
            };
            let wall = mean(kept.iter().copied()).unwrap_or(0.0);
            writeln!(timing, "{},{},{}", wq.qid, v.label(), wall)?;
        }
    }
    timing.flush()?;
    drop(timing);

    if cfg.series {
        let mut w = BufWriter::new(create("series_pages_by_structure.csv")?);
        writeln!(
            w,
            "structure,mean_pages,mean_pages_rtree,mean_pages_lsh,mean_pages_data"
        )?;
        for s in &report.summaries {
            writeln!(
                w,
                "{},{},{},{},{}",
                s.structure, s.mean_pages, s.mean_pages_rtree, s.mean_pages_lsh, s.mean_pages_data
            )?;
        }
        w.flush()?;
        drop(w);

        if harness.structures.contains_key(&IndexKind::AugSFI) {
            let v = [Variant {
                kind: IndexKind::AugSFI,
                explore: true,
            }];
            let mut w = BufWriter::new(create("series_recall_vs_ev.csv")?);
            writeln!(w, "e_v,mean_recall")?;
            for ev in std::iter::once(0).chain(cfg.e_v.iter().copied()) {
                let wl = map_queries(&workload, |q| {
                    q.clone().with_exploration(q.explore_spatial, ev)
                })?;
                let r = harness.run_variants(&v, &wl)?;
                writeln!(
                    w,
                    "{ev},{}",
                    fmt_opt(r.summaries.first().and_then(|s| s.mean_recall))
                )?;
            }
            w.flush()?;
        }
        if harness.structures.contains_key(&IndexKind::AugVFI) {
            let v = [Variant {
                kind: IndexKind::AugVFI,
                explore: true,
            }];
            let mut w = BufWriter::new(create("series_recall_vs_es.csv")?);
            writeln!(w, "e_s,mean_recall,mean_s_unmatch")?;
            for es in std::iter::once(0.0).chain(cfg.e_s.iter().copied()) {
                let wl = map_queries(&workload, |q| {
                    q.clone().with_exploration(es, q.explore_visual)
                })?;
                let r = harness.run_variants(&v, &wl)?;
                let su = mean(r.rows.iter().map(|x| x.classes.s_unmatch as f64));
                writeln!(
                    w,
                    "{es},{},{}",
                    fmt_opt(r.summaries.first().and_then(|s| s.mean_recall)),
                    fmt_opt(su)
                )?;
            }
            w.flush()?;
        }

        let variants = harness.variants();
        let mut w = BufWriter::new(create("series_recall_vs_sigma.csv")?);
        writeln!(w, "sigma,structure,mean_recall,mean_pages")?;
        for sigma in cfg.sigma_values(&harness.dataset) {
            let wl = map_queries(&workload, |q| {
                let mut q = q.clone();
                q.sigma = sigma;
                Ok(q)
            })?;
            let r = harness.run_variants(&variants, &wl)?;
            for s in &r.summaries {
                writeln!(
                    w,
                    "{sigma},{},{},{}",
                    s.structure,
                    fmt_opt(s.mean_recall),
                    s.mean_pages
                )?;
            }
        }
        w.flush()?;
        drop(w);

        let mut w = BufWriter::new(create("series_pages_vs_range.csv")?);
        writeln!(w, "side,structure,mean_pages,mean_recall")?;
        for side in cfg.spatial_ranges.iter().map(|s| s * cfg.range_scale) {
            let wl = map_queries(&workload, |q| {
                let mut q = q.clone();
                q.spatial = Rect::centered(q.spatial.center(), side, side)?;
                Ok(q)
            })?;
            let r = harness.run_variants(&variants, &wl)?;
            for s in &r.summaries {
                writeln!(
                    w,
                    "{side},{},{},{}",
                    s.structure,
                    s.mean_pages,
                    fmt_opt(s.mean_recall)
                )?;
            }
        }
        w.flush()?;
    }

    Ok(BenchmarkOutput { report, files })
}

/// Recomputes summaries and lemma verdicts from a report file.
pub fn report_from_file(path: &Path) -> Result<EvaluationReport> {
    EvaluationReport::from_rows(read_report(fs::File::open(path)?)?)
}

/// Result ids per (qid, structure) from a `results.csv` file.
pub fn read_results<R: Read>(r: R) -> Result<BTreeMap<(u64, String), BTreeSet<ImageId>>> {
    const WHAT: &str = "results";
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(r).lines().enumerate().skip(1) {
        let line = line?;
        let no = i + 1;
        let f: Vec<&str> = line.trim().splitn(3, ',').collect();
        if f.len() != 3 {
            return Err(Error::format(WHAT, no, "expected 3 fields"));
        }
        let ids = f[2]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| parse_u64(WHAT, no, s).map(ImageId))
            .collect::<Result<_>>()?;
        out.insert((parse_u64(WHAT, no, f[0])?, f[1].to_string()), ids);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_file_has_header() {
        let mut spec = DatasetSpec::standard(0, 4, 1);
        spec.n = 0;
        let ds = generate_dataset(&spec).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "svx-dataset,v1,0,4\n"
        );
        assert_eq!(read_dataset(&buf[..]).unwrap().len(), 0);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = DatasetSpec::standard(200, 8, 7);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_dataset(&generate_dataset(&spec).unwrap(), &mut a).unwrap();
        write_dataset(&generate_dataset(&spec).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_specs_rejected() {
        let mut spec = DatasetSpec::standard(10, 4, 1);
        spec.coupling = 1.5;
        assert!(generate_dataset(&spec).is_err());
        let mut spec = DatasetSpec::standard(10, 4, 1);
        spec.spatial_clusters[0].weight = 0.9;
        assert!(generate_dataset(&spec).is_err());
        let mut spec = DatasetSpec::standard(10, 4, 1);
        spec.visual_clusters[0].spread = 0.0;
        assert!(generate_dataset(&spec).is_err());
    }

    #[test]
    fn tight_cluster_is_denser() {
        let spec = DatasetSpec {
            n: 1000,
            d: 2,
            spatial_clusters: vec![
                Cluster::new(vec![0.0, 0.0], 0.01, 0.5),
                Cluster::new(vec![100.0, 100.0], 10.0, 0.5),
            ],
            visual_clusters: vec![Cluster::new(vec![0.0, 0.0], 1.0, 1.0)],
            coupling: 0.0,
            seed: 3,
        };
        let ds = generate_dataset(&spec).unwrap();
        let count = |c: Point| {
            let r = Rect::centered(c, 0.1, 0.1).unwrap();
            ds.images()
                .iter()
                .filter(|i| r.contains(i.location))
                .count()
        };
        assert!(count(Point::new(0.0, 0.0)) > 10 * count(Point::new(100.0, 100.0)).max(1));
    }

    #[test]
    fn workload_round_trip() {
        let ds = generate_dataset(&DatasetSpec::standard(300, 4, 2)).unwrap();
        let profile = density_profile(&ds);
        let shape = QueryShape {
            side: 3.0,
            sigma: 0.4,
            explore_spatial: 0.5,
            explore_visual: 15,
        };
        let w = select_queries(&ds, &profile, SelectivityGroup::SuVu, 20, 9, &shape, 5).unwrap();
        assert_eq!(w.len(), 20);
        assert_eq!(w[0].qid, 5);
        let mut buf = Vec::new();
        write_workload(&w, &mut buf).unwrap();
        assert_eq!(read_workload(&buf[..]).unwrap(), w);
        assert!(
            select_queries(&ds, &profile, SelectivityGroup::SdVd, 0, 9, &shape, 0)
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn empty_group_is_named() {
        let ds = Dataset::new(1, vec![GeoImage::new(1, Point::new(0.0, 0.0), vec![0.0])]).unwrap();
        let profile = density_profile(&ds);
        let shape = QueryShape {
            side: 1.0,
            sigma: 0.1,
            explore_spatial: 0.0,
            explore_visual: 0,
        };
        match select_queries(&ds, &profile, SelectivityGroup::SsVs, 3, 1, &shape, 0) {
            Err(Error::EmptyGroup(g)) => assert_eq!(g, "SS-VS"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn terciles_split_by_rank() {
        let t = terciles(&[5.0, 1.0, 3.0, 2.0, 6.0, 4.0]);
        use Density::*;
        assert_eq!(t, vec![Sparse, Dense, Uniform, Dense, Sparse, Uniform]);
    }

    #[test]
    fn config_defaults_mirror_query_settings() {
        let cfg: BenchmarkConfig = toml_defaults();
        assert_eq!(cfg.groups, vec![SelectivityGroup::SuVu]);
        assert_eq!(cfg.spatial_ranges[cfg.spatial_range_index], 6.18);
        assert_eq!(cfg.default_e_s, 0.5);
        assert_eq!(cfg.default_e_v, 15);
    }
}
