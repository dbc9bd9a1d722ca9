//! Euclidean (p-stable) locality-sensitive hashing.
//!
//! A [`HashFamily`] holds `T` tables of `F` functions
//! `h(o) = floor((a . o + b) / W)`. The concatenated values of one table form
//! a [`BucketKey`]. Buckets are written to a page-aligned bucket file, so
//! loading bucket `b` costs exactly `ceil(C(b) / page_size)` pages.
//!
//! Bucket record layout (little-endian):
//!
//! ```text
//! table u16 | F u16 | count u32 | key: F x i64 | entries
//! entry: id u64 | visual ptr (10 B) | [spatial ptr (10 B)] | [x f64 | y f64]
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::datafile::decode_visual;
use crate::error::{Error, Result};
use crate::geom::{squared_distance, Point};
use crate::model::ImageId;
use crate::pagestore::{FileId, PageStore, RecordPointer};
use crate::rstar::DataFiles;
use crate::trace::{Access, QueryIo};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LshParams {
    pub tables: usize,
    pub functions_per_table: usize,
    pub width: f64,
    pub dim: usize,
    pub seed: u64,
}

impl LshParams {
    pub fn new(dim: usize, width: f64, seed: u64) -> Self {
        Self {
            tables: 3,
            functions_per_table: 7,
            width,
            dim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tables == 0 || self.functions_per_table == 0 {
            return Err(Error::invalid(
                "LSH needs at least one table and one function",
            ));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::invalid(format!(
                "bucket width must be > 0, got {}",
                self.width
            )));
        }
        if self.dim == 0 {
            return Err(Error::invalid("LSH dimension must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HashFunction {
    pub a: Vec<f64>,
    pub b: f64,
}

impl HashFunction {
    fn apply(&self, o: &[f64], width: f64) -> i64 {
        let dot: f64 = self.a.iter().zip(o).map(|(a, x)| a * x).sum();
        ((dot + self.b) / width).floor() as i64
    }
}

/// Concatenated hash values of one table.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
pub struct BucketKey(pub Vec<i64>);

impl fmt::Display for BucketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(i64::to_string).collect();
        f.write_str(&parts.join(":"))
    }
}

impl std::str::FromStr for BucketKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(':')
            .map(|p| {
                p.parse::<i64>()
                    .map_err(|e| Error::invalid(format!("bad bucket key {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(BucketKey)
    }
}

/// The hash functions of every table, shared by all LSH instances built for
/// one dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HashFamily {
    width: f64,
    dim: usize,
    tables: Vec<Vec<HashFunction>>,
}

impl HashFamily {
    /// Draws `a` from N(0, 1)^d and `b` from U[0, W) for every slot.
    pub fn generate(params: &LshParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let tables = (0..params.tables)
            .map(|_| {
                (0..params.functions_per_table)
                    .map(|_| {
                        let a = (0..params.dim)
                            .map(|_| rng.sample(StandardNormal))
                            .collect();
                        let b = rng.random_range(0.0..params.width);
                        HashFunction { a, b }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            width: params.width,
            dim: params.dim,
            tables,
        })
    }

    /// Builds a family from explicit functions. Tables may differ in length.
    pub fn from_functions(width: f64, tables: Vec<Vec<HashFunction>>) -> Result<Self> {
        let dim = tables
            .first()
            .and_then(|t| t.first())
            .map(|h| h.a.len())
            .ok_or_else(|| Error::invalid("hash family needs at least one function"))?;
        if width.is_nan() || width <= 0.0 {
            return Err(Error::invalid("bucket width must be > 0"));
        }
        for t in &tables {
            if t.is_empty() {
                return Err(Error::invalid("every table needs at least one function"));
            }
            for h in t {
                if h.a.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        actual: h.a.len(),
                    });
                }
                if !(0.0..width).contains(&h.b) {
                    return Err(Error::invalid(format!(
                        "shift {} outside [0, {width})",
                        h.b
                    )));
                }
            }
        }
        Ok(Self { width, dim, tables })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn functions(&self, table: usize) -> &[HashFunction] {
        &self.tables[table]
    }

    pub fn hash_vector(&self, table: usize, o: &[f64]) -> Result<BucketKey> {
        if o.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: o.len(),
            });
        }
        let fns = self
            .tables
            .get(table)
            .ok_or_else(|| Error::invalid(format!("no hash table {table}")))?;
        Ok(BucketKey(
            fns.iter().map(|h| h.apply(o, self.width)).collect(),
        ))
    }

    /// One key per table.
    pub fn hash_all(&self, o: &[f64]) -> Result<Vec<BucketKey>> {
        (0..self.tables.len())
            .map(|t| self.hash_vector(t, o))
            .collect()
    }
}

/// What a bucket entry carries besides the id and visual pointer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BucketFormat {
    Plain,
    /// Adds a pointer to the spatial record.
    SpatialPointer,
    /// Adds the spatial pointer and the location itself.
    SpatialInline,
}

impl BucketFormat {
    pub fn entry_len(self) -> usize {
        let base = 8 + RecordPointer::ENCODED_LEN;
        match self {
            BucketFormat::Plain => base,
            BucketFormat::SpatialPointer => base + RecordPointer::ENCODED_LEN,
            BucketFormat::SpatialInline => base + RecordPointer::ENCODED_LEN + 16,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            BucketFormat::Plain => "plain",
            BucketFormat::SpatialPointer => "spatial-pointer",
            BucketFormat::SpatialInline => "spatial-inline",
        }
    }
}

impl fmt::Display for BucketFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for BucketFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            BucketFormat::Plain,
            BucketFormat::SpatialPointer,
            BucketFormat::SpatialInline,
        ]
        .into_iter()
        .find(|f| f.tag() == s)
        .ok_or_else(|| Error::invalid(format!("unknown bucket format {s:?}")))
    }
}

/// Header bytes of a bucket record with `functions` hash values per key.
pub fn bucket_header_len(functions: usize) -> usize {
    8 + 8 * functions
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketEntry {
    pub id: ImageId,
    pub visual: RecordPointer,
    pub spatial: Option<RecordPointer>,
    pub point: Option<Point>,
}

/// Directory slot for one persisted bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BucketInfo {
    pub ptr: RecordPointer,
    pub entries: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LshRole {
    Primary,
    Secondary,
}

impl LshRole {
    fn access(self) -> Access {
        match self {
            LshRole::Primary => Access::PrimaryBucket,
            LshRole::Secondary => Access::SecondaryBucket,
        }
    }
}

/// In-memory LSH index under construction.
#[derive(Debug, Clone)]
pub struct LshBuilder<'f> {
    family: &'f HashFamily,
    format: BucketFormat,
    tables: Vec<BTreeMap<BucketKey, Vec<BucketEntry>>>,
}

impl<'f> LshBuilder<'f> {
    pub fn new(family: &'f HashFamily, format: BucketFormat) -> Self {
        Self {
            family,
            format,
            tables: vec![BTreeMap::new(); family.table_count()],
        }
    }

    /// Appends `entry` to one bucket per table, keyed by `features`.
    pub fn insert(&mut self, features: &[f64], entry: BucketEntry) -> Result<()> {
        let wants_spatial = self.format != BucketFormat::Plain;
        let wants_point = self.format == BucketFormat::SpatialInline;
        if entry.spatial.is_some() != wants_spatial || entry.point.is_some() != wants_point {
            return Err(Error::invalid("bucket entry does not match bucket format"));
        }
        for (t, key) in self.family.hash_all(features)?.into_iter().enumerate() {
            self.tables[t].entry(key).or_default().push(entry.clone());
        }
        Ok(())
    }

    pub fn buckets(&self, table: usize) -> &BTreeMap<BucketKey, Vec<BucketEntry>> {
        &self.tables[table]
    }

    /// Writes every bucket, table by table in key order.
    pub fn persist(
        &self,
        store: &mut PageStore,
        file: FileId,
        data: DataFiles,
        role: LshRole,
    ) -> Result<DiskLsh> {
        let mut directory = Vec::with_capacity(self.tables.len());
        for (t, table) in self.tables.iter().enumerate() {
            let mut dir = BTreeMap::new();
            for (key, entries) in table {
                let f = key.0.len();
                let mut buf = Vec::with_capacity(
                    bucket_header_len(f) + entries.len() * self.format.entry_len(),
                );
                buf.extend_from_slice(&(t as u16).to_le_bytes());
                buf.extend_from_slice(&(f as u16).to_le_bytes());
                buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
                for k in &key.0 {
                    buf.extend_from_slice(&k.to_le_bytes());
                }
                for e in entries {
                    buf.extend_from_slice(&e.id.0.to_le_bytes());
                    e.visual.encode_into(&mut buf);
                    if let Some(s) = &e.spatial {
                        s.encode_into(&mut buf);
                    }
                    if let Some(p) = &e.point {
                        buf.extend_from_slice(&p.x.to_le_bytes());
                        buf.extend_from_slice(&p.y.to_le_bytes());
                    }
                }
                let ptr = store.append_record(file, &buf)?;
                dir.insert(
                    key.clone(),
                    BucketInfo {
                        ptr,
                        entries: entries.len() as u32,
                    },
                );
            }
            directory.push(dir);
        }
        Ok(DiskLsh {
            file,
            format: self.format,
            data,
            role,
            directory,
        })
    }
}

/// A persisted LSH index: bucket file plus in-memory bucket directory.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiskLsh {
    pub file: FileId,
    pub format: BucketFormat,
    pub data: DataFiles,
    pub role: LshRole,
    /// Per table, key to bucket location.
    #[serde(with = "keyed_tables")]
    pub directory: Vec<BTreeMap<BucketKey, BucketInfo>>,
}

/// Result of a similarity query.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityResult {
    /// Candidates whose visual distance is within the threshold.
    pub matches: Vec<(BucketEntry, Vec<f64>)>,
    pub candidates: usize,
}

impl DiskLsh {
    pub fn bucket_count(&self) -> usize {
        self.directory.iter().map(BTreeMap::len).sum()
    }

    pub fn bucket(&self, table: usize, key: &BucketKey) -> Option<&BucketInfo> {
        self.directory.get(table).and_then(|d| d.get(key))
    }

    fn decode_bucket(&self, bytes: &[u8]) -> Result<Vec<BucketEntry>> {
        let corrupt = || Error::Read("corrupt bucket".into());
        if bytes.len() < 8 {
            return Err(corrupt());
        }
        let f = u16::from_le_bytes([bytes[2], bytes[3]]) as usize;
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let width = self.format.entry_len();
        let body = bytes.get(bucket_header_len(f)..).ok_or_else(corrupt)?;
        if body.len() != count * width {
            return Err(corrupt());
        }
        let ptr_len = RecordPointer::ENCODED_LEN;
        Ok(body
            .chunks_exact(width)
            .map(|e| {
                let mut o = 8 + ptr_len;
                let spatial = (self.format != BucketFormat::Plain).then(|| {
                    let p = RecordPointer::decode(self.data.spatial, &e[o..o + ptr_len]);
                    o += ptr_len;
                    p
                });
                let point = (self.format == BucketFormat::SpatialInline).then(|| {
                    let x = f64::from_le_bytes(e[o..o + 8].try_into().unwrap());
                    let y = f64::from_le_bytes(e[o + 8..o + 16].try_into().unwrap());
                    Point::new(x, y)
                });
                BucketEntry {
                    id: ImageId(u64::from_le_bytes(e[0..8].try_into().unwrap())),
                    visual: RecordPointer::decode(self.data.visual, &e[8..8 + ptr_len]),
                    spatial,
                    point,
                }
            })
            .collect())
    }

    /// Loads the bucket for `key` in `table`, if it exists.
    pub fn load_bucket(
        &self,
        io: &mut QueryIo<'_>,
        table: usize,
        key: &BucketKey,
    ) -> Result<Option<Vec<BucketEntry>>> {
        match self.bucket(table, key) {
            None => Ok(None),
            Some(info) => {
                let bytes = io.read(self.role.access(), &info.ptr)?;
                self.decode_bucket(bytes).map(Some)
            }
        }
    }

    /// Union of the buckets addressed by `keys` (one list per table),
    /// deduplicated by id in first-seen order.
    pub fn candidates_for_keys(
        &self,
        io: &mut QueryIo<'_>,
        keys: &[Vec<BucketKey>],
    ) -> Result<Vec<BucketEntry>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (t, table_keys) in keys.iter().enumerate() {
            let mut probed = HashSet::new();
            for key in table_keys {
                if !probed.insert(key) {
                    continue;
                }
                if let Some(entries) = self.load_bucket(io, t, key)? {
                    out.extend(entries.into_iter().filter(|e| seen.insert(e.id)));
                }
            }
        }
        Ok(out)
    }

    /// Candidates from the buckets `q` hashes to in each table.
    pub fn candidate_set(
        &self,
        io: &mut QueryIo<'_>,
        family: &HashFamily,
        q: &[f64],
    ) -> Result<Vec<BucketEntry>> {
        let keys: Vec<Vec<BucketKey>> = family.hash_all(q)?.into_iter().map(|k| vec![k]).collect();
        self.candidates_for_keys(io, &keys)
    }

    /// Loads the visual record of every candidate and keeps those within
    /// `sigma` of `q`.
    pub fn filter_by_distance(
        io: &mut QueryIo<'_>,
        candidates: Vec<BucketEntry>,
        q: &[f64],
        sigma: f64,
    ) -> Result<Vec<(BucketEntry, Vec<f64>)>> {
        let mut out = Vec::new();
        for e in candidates {
            let (_, v) = decode_visual(io.read(Access::VisualRecord, &e.visual)?, q.len())?;
            if squared_distance(&v, q).sqrt() <= sigma {
                out.push((e, v));
            }
        }
        Ok(out)
    }

    pub fn similarity_query(
        &self,
        io: &mut QueryIo<'_>,
        family: &HashFamily,
        q: &[f64],
        sigma: f64,
    ) -> Result<SimilarityResult> {
        if sigma.is_nan() || sigma < 0.0 {
            return Err(Error::invalid("sigma must be >= 0"));
        }
        let candidates = self.candidate_set(io, family, q)?;
        let n = candidates.len();
        Ok(SimilarityResult {
            matches: Self::filter_by_distance(io, candidates, q, sigma)?,
            candidates: n,
        })
    }
}

// JSON maps need string keys; each table is stored as a list of pairs.
pub(crate) mod keyed_tables {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::BucketKey;

    pub fn serialize<S: Serializer, V: Serialize>(
        d: &[BTreeMap<BucketKey, V>],
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<Vec<(&BucketKey, &V)>> = d.iter().map(|t| t.iter().collect()).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, V: Deserialize<'de>>(
        d: D,
    ) -> std::result::Result<Vec<BTreeMap<BucketKey, V>>, D::Error> {
        let pairs: Vec<Vec<(BucketKey, V)>> = Vec::deserialize(d)?;
        Ok(pairs.into_iter().map(|t| t.into_iter().collect()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datafile::DataLayout;
    use crate::geom::euclidean_distance;
    use crate::model::{Dataset, GeoImage};
    use crate::pagestore::{FileRole, PageStoreConfig, Placement};

    #[test]
    fn zero_shift_zero_vector_hashes_to_zero() {
        let fam = HashFamily::from_functions(
            4.0,
            vec![vec![
                HashFunction {
                    a: vec![0.3, -1.2, 2.0],
                    b: 0.0,
                };
                5
            ]],
        )
        .unwrap();
        assert_eq!(
            fam.hash_vector(0, &[0.0; 3]).unwrap(),
            BucketKey(vec![0; 5])
        );
    }

    #[test]
    fn hand_computed_hash() {
        let fam = HashFamily::from_functions(
            10.0,
            vec![vec![HashFunction {
                a: vec![2.0],
                b: 3.0,
            }]],
        )
        .unwrap();
        // floor((2 * 4 + 3) / 10) = 1
        assert_eq!(fam.hash_vector(0, &[4.0]).unwrap(), BucketKey(vec![1]));
        assert_eq!(fam.hash_vector(0, &[-4.0]).unwrap(), BucketKey(vec![-1]));
    }

    #[test]
    fn seeded_family_is_deterministic() {
        let p = LshParams::new(6, 2.5, 77);
        let a = HashFamily::generate(&p).unwrap();
        let b = HashFamily::generate(&p).unwrap();
        assert_eq!(a, b);
        let o = [0.1, 0.2, -0.3, 4.0, 5.0, -6.0];
        assert_eq!(a.hash_all(&o).unwrap(), b.hash_all(&o).unwrap());
        assert!(a.tables.iter().flatten().all(|h| (0.0..2.5).contains(&h.b)));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let fam = HashFamily::generate(&LshParams::new(4, 1.0, 1)).unwrap();
        assert!(matches!(
            fam.hash_vector(0, &[1.0; 3]),
            Err(Error::Dimension {
                expected: 4,
                actual: 3
            })
        ));
    }

    #[test]
    fn shift_outside_width_rejected() {
        let t = vec![vec![HashFunction {
            a: vec![1.0],
            b: 2.0,
        }]];
        assert!(HashFamily::from_functions(2.0, t).is_err());
    }

    #[test]
    fn key_text_round_trip() {
        let k = BucketKey(vec![-3, 0, 17]);
        assert_eq!(k.to_string().parse::<BucketKey>().unwrap(), k);
    }

    fn build(n: usize, dim: usize) -> (PageStore, Dataset, HashFamily, DiskLsh) {
        let images = (0..n)
            .map(|i| {
                let v = (0..dim)
                    .map(|j| ((i * 31 + j * 7) % 13) as f64 * 0.25)
                    .collect();
                GeoImage::new(i as u64, Point::new(i as f64, 0.0), v)
            })
            .collect();
        let ds = Dataset::new(dim, images).unwrap();
        let fam = HashFamily::generate(&LshParams::new(dim, 1.5, 9)).unwrap();
        let mut store = PageStore::new(PageStoreConfig::default()).unwrap();
        let layout = DataLayout::write(&mut store, &ds).unwrap();
        let file = store.create_file("buckets", FileRole::Index, Placement::PageAligned);
        let mut b = LshBuilder::new(&fam, BucketFormat::Plain);
        for (i, img) in ds.images().iter().enumerate() {
            let e = BucketEntry {
                id: img.id,
                visual: layout.visual[i],
                spatial: None,
                point: None,
            };
            b.insert(&img.features, e).unwrap();
        }
        let lsh = b
            .persist(&mut store, file, layout.files, LshRole::Primary)
            .unwrap();
        (store, ds, fam, lsh)
    }

    #[test]
    fn one_bucket_per_table_per_image() {
        let (_, _, _, lsh) = build(1, 4);
        assert_eq!(lsh.bucket_count(), 3);
        let (_, _, _, lsh) = build(1000, 4);
        let table0: u32 = lsh.directory[0].values().map(|b| b.entries).sum();
        assert_eq!(table0, 1000);
    }

    #[test]
    fn bucket_pages_match_size() {
        let (store, ds, fam, lsh) = build(1000, 4);
        let q = &ds.images()[0].features;
        let mut io = QueryIo::new(&store);
        lsh.candidate_set(&mut io, &fam, q).unwrap();
        let expected: usize = fam
            .hash_all(q)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(t, k)| lsh.bucket(t, k).unwrap().ptr.length as usize)
            .map(|len| len.div_ceil(4096))
            .sum();
        assert_eq!(io.ledger.pages_index(), expected);
    }

    #[test]
    fn absent_buckets_cost_nothing() {
        let (store, _, fam, lsh) = build(50, 4);
        let mut io = QueryIo::new(&store);
        let far = vec![1e6; 4];
        let c = lsh.candidate_set(&mut io, &fam, &far).unwrap();
        assert!(c.is_empty());
        assert_eq!(io.ledger.total_pages(), 0);
    }

    #[test]
    fn similarity_query_has_no_false_positives() {
        let (store, ds, fam, lsh) = build(300, 4);
        for probe in ds.images().iter().step_by(17) {
            for sigma in [0.0, 0.3, 1.0, 2.5] {
                let mut io = QueryIo::new(&store);
                let res = lsh
                    .similarity_query(&mut io, &fam, &probe.features, sigma)
                    .unwrap();
                let truth: HashSet<ImageId> = ds
                    .images()
                    .iter()
                    .filter(|i| euclidean_distance(&i.features, &probe.features).unwrap() <= sigma)
                    .map(|i| i.id)
                    .collect();
                for (e, _) in &res.matches {
                    assert!(truth.contains(&e.id));
                }
                assert!(res.matches.iter().any(|(e, _)| e.id == probe.id));
            }
        }
    }
}
