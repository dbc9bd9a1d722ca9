//! The seven spatial-visual index structures behind one interface.
//!
//! Every structure owns a [`PageStore`] holding the two data files
//! (`spatial`, `visual`) plus its index files (`rtree` for node pages, `lsh`
//! for buckets). Queries run against the persisted form only, so the page
//! counts in [`QueryStats`] are what a disk-resident implementation would pay.
//!
//! | kind     | primary          | secondary                 |
//! |----------|------------------|---------------------------|
//! | DI       | R*-tree + LSH    | -                         |
//! | AugRTree | R*-tree, leaves carry visual pointers | -    |
//! | AugLSH   | LSH, entries carry spatial pointers | -      |
//! | SFI      | R*-tree          | one LSH per leaf          |
//! | AugSFI   | R*-tree          | one LSH per leaf, entries carry the location |
//! | VFI      | LSH              | one R*-tree per bucket    |
//! | AugVFI   | LSH (stubs only) | one R*-tree per bucket, leaves carry visual pointers |

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datafile::{decode_spatial, decode_visual, DataLayout};
use crate::error::{Error, Result};
use crate::geom::{expand_rect, sample_in_ball, squared_distance, Rect};
use crate::lsh::{
    bucket_header_len, keyed_tables, BucketEntry, BucketFormat, BucketKey, DiskLsh, HashFamily,
    LshBuilder, LshRole,
};
use crate::model::{Dataset, ImageId, SpatialVisualRangeQuery};
use crate::pagestore::{query_cost, FileId, FileRole, PageStore, PageStoreConfig, Placement};
use crate::rstar::{
    DataFiles, DiskRTree, LeafEntry, LeafFormat, RTreeBuilder, RTreeParams, TreeRole,
};
use crate::trace::{Access, QueryIo, QueryTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IndexKind {
    DI,
    AugRTree,
    AugLSH,
    SFI,
    VFI,
    AugSFI,
    AugVFI,
}

impl IndexKind {
    pub const ALL: [IndexKind; 7] = [
        IndexKind::DI,
        IndexKind::AugRTree,
        IndexKind::AugLSH,
        IndexKind::SFI,
        IndexKind::VFI,
        IndexKind::AugSFI,
        IndexKind::AugVFI,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::DI => "DI",
            IndexKind::AugRTree => "AugRTree",
            IndexKind::AugLSH => "AugLSH",
            IndexKind::SFI => "SFI",
            IndexKind::VFI => "VFI",
            IndexKind::AugSFI => "AugSFI",
            IndexKind::AugVFI => "AugVFI",
        }
    }

    /// DI, AugRTree and AugLSH.
    pub fn is_baseline(self) -> bool {
        matches!(
            self,
            IndexKind::DI | IndexKind::AugRTree | IndexKind::AugLSH
        )
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IndexKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown index kind {s:?}")))
    }
}

/// Which LSH tables get secondary R*-trees in VFI / AugVFI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VfiTrees {
    /// One tree per bucket of every table.
    PerTable,
    /// Trees for table-0 buckets only. VFI routes each visual match to the
    /// tree of its table-0 bucket; AugVFI can then only probe the query's
    /// table-0 tree and may lose candidates found through other tables.
    FirstTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub page: PageStoreConfig,
    pub rtree: RTreeParams,
    pub vfi_trees: VfiTrees,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            page: PageStoreConfig::default(),
            rtree: RTreeParams::default(),
            vfi_trees: VfiTrees::PerTable,
        }
    }
}

/// Page counts of one query, split by where the pages live.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryStats {
    /// R*-tree node pages.
    pub pages_rtree: usize,
    /// LSH bucket pages.
    pub pages_lsh: usize,
    pub pages_data: usize,
    /// `t_disk` times the total page count.
    pub simulated_time: f64,
    /// Sizes of intermediate results, in the order they were produced.
    pub intermediate: Vec<(&'static str, usize)>,
}

impl QueryStats {
    pub fn total_pages(&self) -> usize {
        self.pages_rtree + self.pages_lsh + self.pages_data
    }

    pub fn intermediate(&self, name: &str) -> Option<usize> {
        self.intermediate
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, c)| *c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    /// Result ids, ascending.
    pub ids: Vec<ImageId>,
    pub stats: QueryStats,
    pub trace: QueryTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Parts {
    Di {
        tree: DiskRTree,
        lsh: DiskLsh,
    },
    AugRTree {
        tree: DiskRTree,
    },
    AugLsh {
        lsh: DiskLsh,
    },
    /// SFI and AugSFI: secondary LSH keyed by leaf page.
    Sfi {
        tree: DiskRTree,
        leaves: BTreeMap<u32, DiskLsh>,
    },
    /// VFI and AugVFI. `lsh` is absent for AugVFI, which keeps only stubs.
    Vfi {
        lsh: Option<DiskLsh>,
        stubs: usize,
        #[serde(with = "keyed_tables")]
        trees: Vec<BTreeMap<BucketKey, DiskRTree>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    kind: IndexKind,
    cfg: IndexConfig,
    dim: usize,
    len: usize,
    family: HashFamily,
    data: DataFiles,
    node_file: Option<FileId>,
    bucket_file: Option<FileId>,
    files: Vec<String>,
    parts: Parts,
}

/// A built, disk-resident index over one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexStructure {
    meta: Meta,
    store: PageStore,
}

const MANIFEST: &str = "manifest.json";

/// Bytes of one AugVFI bucket stub: `table u16 | F u16 | count u32 | key |
/// tree root u32 | root MBR 4 x f64`.
pub fn stub_len(functions: usize) -> usize {
    bucket_header_len(functions) + 4 + 32
}

fn mix_seed(a: u64, b: u64) -> u64 {
    // splitmix64 finaliser over the combined words
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).rotate_left(29);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the probe vectors AugSFI-E uses in leaf `leaf` for a query seeded
/// with `query_seed`.
pub fn probe_seed(query_seed: u64, leaf: u32) -> u64 {
    mix_seed(query_seed, leaf as u64)
}

struct Builder<'a> {
    dataset: &'a Dataset,
    layout: DataLayout,
    family: &'a HashFamily,
    by_id: HashMap<ImageId, usize>,
}

impl Builder<'_> {
    fn leaf_entry(&self, i: usize, format: LeafFormat) -> LeafEntry {
        let img = &self.dataset.images()[i];
        LeafEntry {
            id: img.id,
            point: img.location,
            spatial: self.layout.spatial[i],
            visual: (format == LeafFormat::Augmented).then_some(self.layout.visual[i]),
        }
    }

    fn bucket_entry(&self, i: usize, format: BucketFormat) -> BucketEntry {
        let img = &self.dataset.images()[i];
        BucketEntry {
            id: img.id,
            visual: self.layout.visual[i],
            spatial: (format != BucketFormat::Plain).then_some(self.layout.spatial[i]),
            point: (format == BucketFormat::SpatialInline).then_some(img.location),
        }
    }

    fn tree(
        &self,
        store: &mut PageStore,
        file: FileId,
        params: RTreeParams,
        format: LeafFormat,
        role: TreeRole,
        members: impl IntoIterator<Item = usize>,
    ) -> Result<DiskRTree> {
        let mut b = RTreeBuilder::new(params, format)?;
        for i in members {
            b.insert(self.leaf_entry(i, format))?;
        }
        b.persist(store, file, self.layout.files, role)
    }

    fn lsh_builder(
        &self,
        format: BucketFormat,
        members: impl IntoIterator<Item = usize>,
    ) -> Result<LshBuilder<'_>> {
        let mut b = LshBuilder::new(self.family, format);
        for i in members {
            b.insert(
                &self.dataset.images()[i].features,
                self.bucket_entry(i, format),
            )?;
        }
        Ok(b)
    }
}

impl IndexStructure {
    /// Builds and persists a structure of `kind` over `dataset`. Every
    /// structure built from the same `family` hashes identically.
    pub fn build(
        kind: IndexKind,
        dataset: &Dataset,
        cfg: &IndexConfig,
        family: &HashFamily,
    ) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Build("dataset is empty".into()));
        }
        if family.dim() != dataset.dim() {
            return Err(Error::Dimension {
                expected: dataset.dim(),
                actual: family.dim(),
            });
        }
        cfg.rtree.validate()?;
        let mut store = PageStore::new(cfg.page)?;
        let layout = DataLayout::write(&mut store, dataset)?;
        let data = layout.files;
        let b = Builder {
            dataset,
            layout,
            family,
            by_id: dataset
                .images()
                .iter()
                .enumerate()
                .map(|(i, im)| (im.id, i))
                .collect(),
        };
        let all = 0..dataset.len();
        let nodes =
            |s: &mut PageStore| s.create_file("rtree", FileRole::Index, Placement::PageAligned);
        let buckets =
            |s: &mut PageStore| s.create_file("lsh", FileRole::Index, Placement::PageAligned);

        let (parts, node_file, bucket_file) = match kind {
            IndexKind::DI => {
                let nf = nodes(&mut store);
                let bf = buckets(&mut store);
                let tree = b.tree(
                    &mut store,
                    nf,
                    cfg.rtree,
                    LeafFormat::Plain,
                    TreeRole::Primary,
                    all.clone(),
                )?;
                let lsh = b.lsh_builder(BucketFormat::Plain, all)?.persist(
                    &mut store,
                    bf,
                    data,
                    LshRole::Primary,
                )?;
                (Parts::Di { tree, lsh }, Some(nf), Some(bf))
            }
            IndexKind::AugRTree => {
                let nf = nodes(&mut store);
                let tree = b.tree(
                    &mut store,
                    nf,
                    cfg.rtree,
                    LeafFormat::Augmented,
                    TreeRole::Primary,
                    all,
                )?;
                (Parts::AugRTree { tree }, Some(nf), None)
            }
            IndexKind::AugLSH => {
                let bf = buckets(&mut store);
                let lsh = b.lsh_builder(BucketFormat::SpatialPointer, all)?.persist(
                    &mut store,
                    bf,
                    data,
                    LshRole::Primary,
                )?;
                (Parts::AugLsh { lsh }, None, Some(bf))
            }
            IndexKind::SFI | IndexKind::AugSFI => {
                let format = if kind == IndexKind::SFI {
                    BucketFormat::Plain
                } else {
                    BucketFormat::SpatialInline
                };
                let nf = nodes(&mut store);
                let bf = buckets(&mut store);
                let tree = b.tree(
                    &mut store,
                    nf,
                    cfg.rtree,
                    LeafFormat::Plain,
                    TreeRole::Primary,
                    all,
                )?;
                let mut leaves = BTreeMap::new();
                for (page, entries) in tree.leaf_iterate(&store)? {
                    let members = entries.iter().map(|e| b.by_id[&e.id]);
                    let lsh = b.lsh_builder(format, members)?.persist(
                        &mut store,
                        bf,
                        data,
                        LshRole::Secondary,
                    )?;
                    leaves.insert(page, lsh);
                }
                (Parts::Sfi { tree, leaves }, Some(nf), Some(bf))
            }
            IndexKind::VFI | IndexKind::AugVFI => {
                let aug = kind == IndexKind::AugVFI;
                let membership = b.lsh_builder(BucketFormat::Plain, all)?;
                let bf = if aug {
                    store.create_file("lsh", FileRole::Index, Placement::Packed)
                } else {
                    buckets(&mut store)
                };
                let nf = nodes(&mut store);
                let lsh = if aug {
                    None
                } else {
                    Some(membership.persist(&mut store, bf, data, LshRole::Primary)?)
                };
                let leaf_format = if aug {
                    LeafFormat::Augmented
                } else {
                    LeafFormat::Plain
                };
                let with_trees = match cfg.vfi_trees {
                    VfiTrees::PerTable => family.table_count(),
                    VfiTrees::FirstTable => 1,
                };
                let mut trees = Vec::with_capacity(with_trees);
                let mut stubs = 0;
                for t in 0..with_trees {
                    let mut table = BTreeMap::new();
                    for (key, entries) in membership.buckets(t) {
                        let members = entries.iter().map(|e| b.by_id[&e.id]);
                        let tree = b.tree(
                            &mut store,
                            nf,
                            cfg.rtree,
                            leaf_format,
                            TreeRole::Secondary,
                            members,
                        )?;
                        if aug {
                            let mbr = tree.root_mbr.expect("bucket trees are non-empty");
                            let mut rec = Vec::with_capacity(stub_len(key.0.len()));
                            rec.extend_from_slice(&(t as u16).to_le_bytes());
                            rec.extend_from_slice(&(key.0.len() as u16).to_le_bytes());
                            rec.extend_from_slice(&(entries.len() as u32).to_le_bytes());
                            for k in &key.0 {
                                rec.extend_from_slice(&k.to_le_bytes());
                            }
                            rec.extend_from_slice(&tree.root.to_le_bytes());
                            for v in [mbr.min.x, mbr.min.y, mbr.max.x, mbr.max.y] {
                                rec.extend_from_slice(&v.to_le_bytes());
                            }
                            store.append_record(bf, &rec)?;
                            stubs += 1;
                        }
                        table.insert(key.clone(), tree);
                    }
                    trees.push(table);
                }
                (Parts::Vfi { lsh, stubs, trees }, Some(nf), Some(bf))
            }
        };

        let files = store.files().map(|(_, f)| f.name().to_string()).collect();
        Ok(Self {
            meta: Meta {
                kind,
                cfg: *cfg,
                dim: dataset.dim(),
                len: dataset.len(),
                family: family.clone(),
                data,
                node_file,
                bucket_file,
                files,
                parts,
            },
            store,
        })
    }

    pub fn kind(&self) -> IndexKind {
        self.meta.kind
    }

    pub fn config(&self) -> &IndexConfig {
        &self.meta.cfg
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn len(&self) -> usize {
        self.meta.len
    }

    pub fn is_empty(&self) -> bool {
        self.meta.len == 0
    }

    pub fn family(&self) -> &HashFamily {
        &self.meta.family
    }

    pub fn store(&self) -> &PageStore {
        &self.store
    }

    pub fn data_files(&self) -> DataFiles {
        self.meta.data
    }

    /// File holding R*-tree nodes, if the structure has one.
    pub fn node_file(&self) -> Option<FileId> {
        self.meta.node_file
    }

    /// File holding LSH buckets (or AugVFI stubs).
    pub fn bucket_file(&self) -> Option<FileId> {
        self.meta.bucket_file
    }

    /// Every persisted R*-tree, primary first.
    pub fn trees(&self) -> Vec<&DiskRTree> {
        match &self.meta.parts {
            Parts::Di { tree, .. } | Parts::AugRTree { tree } | Parts::Sfi { tree, .. } => {
                vec![tree]
            }
            Parts::AugLsh { .. } => vec![],
            Parts::Vfi { trees, .. } => trees.iter().flat_map(|t| t.values()).collect(),
        }
    }

    /// Every persisted LSH with page-aligned buckets, primary first.
    pub fn lsh_indexes(&self) -> Vec<&DiskLsh> {
        match &self.meta.parts {
            Parts::Di { lsh, .. } | Parts::AugLsh { lsh } => vec![lsh],
            Parts::AugRTree { .. } => vec![],
            Parts::Sfi { leaves, .. } => leaves.values().collect(),
            Parts::Vfi { lsh, .. } => lsh.iter().collect(),
        }
    }

    /// Number of bucket stubs (AugVFI only).
    pub fn stub_count(&self) -> Option<usize> {
        match &self.meta.parts {
            Parts::Vfi {
                lsh: None, stubs, ..
            } => Some(*stubs),
            _ => None,
        }
    }

    /// Secondary R*-trees of VFI / AugVFI as `(table, key, tree)`, in the
    /// order they were written.
    pub fn secondary_trees(&self) -> Vec<(usize, &BucketKey, &DiskRTree)> {
        match &self.meta.parts {
            Parts::Vfi { trees, .. } => trees
                .iter()
                .enumerate()
                .flat_map(|(t, m)| m.iter().map(move |(k, tree)| (t, k, tree)))
                .collect(),
            _ => vec![],
        }
    }

    /// Secondary LSH attached to leaf page `leaf` (SFI, AugSFI).
    pub fn leaf_lsh(&self, leaf: u32) -> Option<&DiskLsh> {
        match &self.meta.parts {
            Parts::Sfi { leaves, .. } => leaves.get(&leaf),
            _ => None,
        }
    }

    /// Secondary R*-tree of bucket `key` in `table` (VFI, AugVFI).
    pub fn bucket_tree(&self, table: usize, key: &BucketKey) -> Option<&DiskRTree> {
        match &self.meta.parts {
            Parts::Vfi { trees, .. } => trees.get(table).and_then(|t| t.get(key)),
            _ => None,
        }
    }

    /// Writes the store files and a manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.store.save(dir)?;
        let json = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| Error::Write(format!("manifest: {e}")))?;
        fs::write(dir.join(MANIFEST), json + "\n")?;
        Ok(())
    }

    /// Reopens a structure written by [`IndexStructure::save`].
    pub fn open(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        let meta: Meta =
            serde_json::from_str(&text).map_err(|e| Error::Read(format!("manifest: {e}")))?;
        let store = PageStore::load(meta.cfg.page, dir, &meta.files)?;
        Ok(Self { meta, store })
    }

    /// Answers `q`, charging every page read to a fresh ledger.
    pub fn query(&self, q: &SpatialVisualRangeQuery) -> Result<QueryOutcome> {
        if q.dim() != self.meta.dim {
            return Err(Error::Dimension {
                expected: self.meta.dim,
                actual: q.dim(),
            });
        }
        if q.sigma.is_nan() || q.sigma < 0.0 {
            return Err(Error::invalid("sigma must be >= 0"));
        }
        let mut io = QueryIo::new(&self.store);
        let (ids, intermediate) = match (&self.meta.parts, self.meta.kind) {
            (Parts::Di { tree, lsh }, _) => self.query_di(&mut io, tree, lsh, q)?,
            (Parts::AugRTree { tree }, _) => self.query_aug_rtree(&mut io, tree, q)?,
            (Parts::AugLsh { lsh }, _) => self.query_aug_lsh(&mut io, lsh, q)?,
            (Parts::Sfi { tree, leaves }, IndexKind::SFI) => {
                self.query_sfi(&mut io, tree, leaves, q)?
            }
            (Parts::Sfi { tree, leaves }, _) => self.query_aug_sfi(&mut io, tree, leaves, q)?,
            (
                Parts::Vfi {
                    lsh: Some(lsh),
                    trees,
                    ..
                },
                _,
            ) => self.query_vfi(&mut io, lsh, trees, q)?,
            (
                Parts::Vfi {
                    lsh: None, trees, ..
                },
                _,
            ) => self.query_aug_vfi(&mut io, trees, q)?,
        };
        let pages_rtree = io
            .ledger
            .index_pages()
            .iter()
            .filter(|(f, _)| Some(*f) == self.meta.node_file)
            .count();
        let stats = QueryStats {
            pages_rtree,
            pages_lsh: io.ledger.pages_index() - pages_rtree,
            pages_data: io.ledger.pages_data(),
            simulated_time: query_cost(&io.ledger, self.store.config()),
            intermediate,
        };
        Ok(QueryOutcome {
            ids: ids.into_iter().collect(),
            stats,
            trace: io.trace,
        })
    }

    fn within(&self, v: &[f64], q: &SpatialVisualRangeQuery) -> bool {
        squared_distance(v, &q.query_vector).sqrt() <= q.sigma
    }

    fn query_di(
        &self,
        io: &mut QueryIo<'_>,
        tree: &DiskRTree,
        lsh: &DiskLsh,
        q: &SpatialVisualRangeQuery,
    ) -> Result<Phases> {
        let (spatial, _) = tree.range_query(io, &q.spatial)?;
        let visual = lsh.similarity_query(io, &self.meta.family, &q.query_vector, q.sigma)?;
        let s: BTreeSet<ImageId> = spatial.iter().map(|e| e.id).collect();
        let ids = visual
            .matches
            .iter()
            .map(|(e, _)| e.id)
            .filter(|id| s.contains(id))
            .collect();
        Ok((
            ids,
            vec![
                ("spatial", s.len()),
                ("candidates", visual.candidates),
                ("visual", visual.matches.len()),
            ],
        ))
    }

    fn query_aug_rtree(
        &self,
        io: &mut QueryIo<'_>,
        tree: &DiskRTree,
        q: &SpatialVisualRangeQuery,
    ) -> Result<Phases> {
        let (spatial, _) = tree.range_query(io, &q.spatial)?;
        let mut ids = BTreeSet::new();
        for e in &spatial {
            let ptr = e.visual.expect("augmented leaf");
            let (_, v) = decode_visual(io.read(Access::VisualRecord, &ptr)?, self.meta.dim)?;
            if self.within(&v, q) {
                ids.insert(e.id);
            }
        }
        Ok((ids, vec![("spatial", spatial.len())]))
    }

    fn query_aug_lsh(
        &self,
        io: &mut QueryIo<'_>,
        lsh: &DiskLsh,
        q: &SpatialVisualRangeQuery,
    ) -> Result<Phases> {
        let visual = lsh.similarity_query(io, &self.meta.family, &q.query_vector, q.sigma)?;
        let mut ids = BTreeSet::new();
        for (e, _) in &visual.matches {
            let ptr = e.spatial.expect("augmented bucket");
            let (_, p) = decode_spatial(io.read(Access::SpatialRecord, &ptr)?)?;
            if q.spatial.contains(p) {
                ids.insert(e.id);
            }
        }
        Ok((
            ids,
            vec![
                ("candidates", visual.candidates),
                ("visual", visual.matches.len()),
            ],
        ))
    }

    fn query_sfi(
        &self,
        io: &mut QueryIo<'_>,
        tree: &DiskRTree,
        leaves: &BTreeMap<u32, DiskLsh>,
        q: &SpatialVisualRangeQuery,
    ) -> Result<Phases> {
        let per_leaf = tree.range_query_by_leaf(io, &q.spatial)?;
        let spatial: BTreeSet<ImageId> = per_leaf
            .iter()
            .flat_map(|(_, e)| e.iter().map(|e| e.id))
            .collect();
        let mut visual = BTreeSet::new();
        let mut candidates = 0;
        for (page, _) in &per_leaf {
            let lsh = &leaves[page];
            let res = lsh.similarity_query(io, &self.meta.family, &q.query_vector, q.sigma)?;
            candidates += res.candidates;
            visual.extend(res.matches.into_iter().map(|(e, _)| e.id));
        }
        let ids = spatial.intersection(&visual).copied().collect();
        Ok((
            ids,
            vec![
                ("leaves", per_leaf.len()),
                ("spatial", spatial.len()),
                ("candidates", candidates),
                ("visual", visual.len()),
            ],
        ))
    }

    fn query_aug_sfi(
        &self,
        io: &mut QueryIo<'_>,
        tree: &DiskRTree,
        leaves: &BTreeMap<u32, DiskLsh>,
        q: &SpatialVisualRangeQuery,
    ) -> Result<Phases> {
        let family = &self.meta.family;
        let hits = tree.overlapping_leaves(io, &q.spatial)?;
        let base = family.hash_all(&q.query_vector)?;
        let mut ids = BTreeSet::new();
        let (mut candidates, mut spatial) = (0, 0);
        for (page, _) in &hits {
            let lsh = &leaves[page];
            let mut keys: Vec<Vec<BucketKey>> = base.iter().map(|k| vec![k.clone()]).collect();
            let seed = probe_seed(q.seed, *page);
            for probe in sample_in_ball(&q.query_vector, q.sigma, q.explore_visual, seed) {
                for (t, k) in family.hash_all(&probe)?.into_iter().enumerate() {
                    keys[t].push(k);
                }
            }
            let cands = lsh.candidates_for_keys(io, &keys)?;
            candidates += cands.len();
            let inside: Vec<BucketEntry> = cands
                .into_iter()
                .filter(|e| q.spatial.contains(e.point.expect("inline location")))
                .collect();
            spatial += inside.len();
            let matches = DiskLsh::filter_by_distance(io, inside, &q.query_vector, q.sigma)?;
            ids.extend(matches.into_iter().map(|(e, _)| e.id));
        }
        Ok((
            ids,
            vec![
                ("leaves", hits.len()),
                ("candidates", candidates),
                ("spatial", spatial),
            ],
        ))
    }

    fn query_vfi(
        &self,
        io: &mut QueryIo<'_>,
        lsh: &DiskLsh,
        trees: &[BTreeMap<BucketKey, DiskRTree>],
        q: &SpatialVisualRangeQuery,
    ) -> Result<Phases> {
        let family = &self.meta.family;
        let visual = lsh.similarity_query(io, family, &q.query_vector, q.sigma)?;
        let probes: Vec<(usize, BucketKey)> = match self.meta.cfg.vfi_trees {
            VfiTrees::PerTable => {
                // A match lives in the tree of every probed bucket it hashes to; search
                // a greedy cover of those trees. A match held by a tree whose MBR misses
                // the rect is already rejected.
                let keys = family.hash_all(&q.query_vector)?;
                let mut open: Vec<BTreeSet<usize>> = Vec::new();
                for (_, v) in &visual.matches {
                    let mut holders = BTreeSet::new();
                    let mut rejected = false;
                    for (t, key) in keys.iter().enumerate() {
                        if family.hash_vector(t, v)? != *key {
                            continue;
                        }
                        match trees[t].get(key) {
                            Some(tree)
                                if tree.root_mbr.is_some_and(|r| r.intersects(&q.spatial)) =>
                            {
                                holders.insert(t);
                            }
                            _ => rejected = true,
                        }
                    }
                    if !rejected && !holders.is_empty() {
                        open.push(holders);
                    }
                }
                let mut chosen = Vec::new();
                while !open.is_empty() {
                    let best = (0..keys.len())
                        .max_by_key(|t| {
                            (
                                open.iter().filter(|h| h.contains(t)).count(),
                                std::cmp::Reverse(*t),
                            )
                        })
                        .expect("at least one table");
                    open.retain(|h| !h.contains(&best));
                    chosen.push((best, keys[best].clone()));
                }
                chosen
            }
            VfiTrees::FirstTable => {
                let keys: BTreeSet<BucketKey> = visual
                    .matches
                    .iter()
                    .map(|(_, v)| family.hash_vector(0, v))
                    .collect::<Result<_>>()?;
                keys.into_iter().map(|k| (0, k)).collect()
            }
        };
        let mut spatial = BTreeSet::new();
        let mut probed = 0;
        for (t, key) in probes {
            let Some(tree) = trees[t].get(&key) else {
                continue;
            };
            if !tree.root_mbr.is_some_and(|r| r.intersects(&q.spatial)) {
                continue;
            }
            probed += 1;
            let (hits, _) = tree.range_query(io, &q.spatial)?;
            spatial.extend(hits.into_iter().map(|e| e.id));
        }
        let ids = visual
            .matches
            .iter()
            .map(|(e, _)| e.id)
            .filter(|id| spatial.contains(id))
            .collect();
        Ok((
            ids,
            vec![
                ("candidates", visual.candidates),
                ("visual", visual.matches.len()),
                ("trees", probed),
                ("spatial", spatial.len()),
            ],
        ))
    }

    fn query_aug_vfi(
        &self,
        io: &mut QueryIo<'_>,
        trees: &[BTreeMap<BucketKey, DiskRTree>],
        q: &SpatialVisualRangeQuery,
    ) -> Result<Phases> {
        let rect: Rect = expand_rect(&q.spatial, q.explore_spatial)?;
        let keys = self.meta.family.hash_all(&q.query_vector)?;
        let mut seen = HashSet::new();
        let mut spatial = Vec::new();
        let mut probed = 0;
        for (t, key) in keys.iter().enumerate().take(trees.len()) {
            let Some(tree) = trees[t].get(key) else {
                continue;
            };
            if !tree.root_mbr.is_some_and(|r| r.intersects(&rect)) {
                continue;
            }
            probed += 1;
            let (hits, _) = tree.range_query(io, &rect)?;
            spatial.extend(hits.into_iter().filter(|e| seen.insert(e.id)));
        }
        let mut ids = BTreeSet::new();
        for e in &spatial {
            let ptr = e.visual.expect("augmented leaf");
            let (_, v) = decode_visual(io.read(Access::VisualRecord, &ptr)?, self.meta.dim)?;
            if self.within(&v, q) {
                ids.insert(e.id);
            }
        }
        Ok((ids, vec![("trees", probed), ("spatial", spatial.len())]))
    }
}

type Phases = (BTreeSet<ImageId>, Vec<(&'static str, usize)>);
