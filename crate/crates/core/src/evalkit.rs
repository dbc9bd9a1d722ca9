//! Ground truth, result classification, accuracy metrics, analytic cost
//! models and lemma checks.

use std::collections::{BTreeMap, BTreeSet};

use crate::datafile::{visual_record_len, SPATIAL_RECORD_LEN};
use crate::error::{Error, Result};
use crate::geom::{expand_rect, squared_distance, Rect};
use crate::indexes::{stub_len, IndexKind, IndexStructure, QueryStats};
use crate::lsh::{bucket_header_len, HashFamily};
use crate::model::{Dataset, GeoImage, ImageId, ResultClass, SpatialVisualRangeQuery};
use crate::pagestore::FileId;
use crate::trace::{Access, QueryTrace};

/// Exact answers of one query.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    /// Inside `Q.s` and within `sigma`.
    pub strict: BTreeSet<ImageId>,
    /// Inside `expand_rect(Q.s, explore_max)` and within `sigma`.
    pub extended: BTreeSet<ImageId>,
}

/// Linear scan with exact distances.
pub fn oracle_query(
    dataset: &Dataset,
    q: &SpatialVisualRangeQuery,
    explore_max: f64,
) -> Result<GroundTruth> {
    if q.dim() != dataset.dim() {
        return Err(Error::Dimension {
            expected: dataset.dim(),
            actual: q.dim(),
        });
    }
    let wide = expand_rect(&q.spatial, explore_max)?;
    let mut truth = GroundTruth::default();
    for img in dataset.images() {
        if squared_distance(&img.features, &q.query_vector).sqrt() > q.sigma {
            continue;
        }
        if wide.contains(img.location) {
            truth.extended.insert(img.id);
        }
        if q.spatial.contains(img.location) {
            truth.strict.insert(img.id);
        }
    }
    Ok(truth)
}

/// Whether `features` shares a bucket with the query vector in any table.
pub fn lsh_visible(
    family: &HashFamily,
    features: &[f64],
    q: &SpatialVisualRangeQuery,
) -> Result<bool> {
    for t in 0..family.table_count() {
        if family.hash_vector(t, features)? == family.hash_vector(t, &q.query_vector)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Class of a relevant image.
pub fn classify(
    image: &GeoImage,
    q: &SpatialVisualRangeQuery,
    truth: &GroundTruth,
    lsh_visible: bool,
) -> Result<ResultClass> {
    if !truth.extended.contains(&image.id) {
        return Err(Error::Contract(format!(
            "image {} is not relevant",
            image.id
        )));
    }
    Ok(match (q.spatial.contains(image.location), lsh_visible) {
        (false, _) => ResultClass::SUnmatchRel,
        (true, true) => ResultClass::SVMatchRel,
        (true, false) => ResultClass::VUnmatchRel,
    })
}

/// Returned images per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub sv_match: usize,
    pub s_unmatch: usize,
    pub v_unmatch: usize,
}

/// Classifies every returned id that is relevant under the extended truth.
pub fn class_counts(
    dataset: &Dataset,
    family: &HashFamily,
    q: &SpatialVisualRangeQuery,
    truth: &GroundTruth,
    ids: &[ImageId],
) -> Result<ClassCounts> {
    let mut c = ClassCounts::default();
    for id in ids.iter().filter(|id| truth.extended.contains(id)) {
        let img = dataset
            .get(*id)
            .ok_or_else(|| Error::Contract(format!("unknown image {id}")))?;
        match classify(img, q, truth, lsh_visible(family, &img.features, q)?)? {
            ResultClass::SVMatchRel => c.sv_match += 1,
            ResultClass::SUnmatchRel => c.s_unmatch += 1,
            ResultClass::VUnmatchRel => c.v_unmatch += 1,
        }
    }
    Ok(c)
}

/// Rectangle a structure's answers are judged against: the expanded one
/// for AugVFI, `Q.s` otherwise.
pub fn effective_rect(kind: IndexKind, q: &SpatialVisualRangeQuery) -> Result<Rect> {
    if kind == IndexKind::AugVFI {
        expand_rect(&q.spatial, q.explore_spatial)
    } else {
        Ok(q.spatial)
    }
}

/// `|ids ∩ truth| / |truth|`, or `None` when the truth is empty.
pub fn recall(truth: &BTreeSet<ImageId>, ids: &[ImageId]) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let hit = ids.iter().filter(|id| truth.contains(id)).count();
    Some(hit as f64 / truth.len() as f64)
}

/// Fraction of `ids` inside `rect` and within `sigma`; 1 for an empty answer.
pub fn precision(
    dataset: &Dataset,
    q: &SpatialVisualRangeQuery,
    rect: &Rect,
    ids: &[ImageId],
) -> f64 {
    if ids.is_empty() {
        return 1.0;
    }
    let good = ids
        .iter()
        .filter_map(|id| dataset.get(*id))
        .filter(|img| {
            rect.contains(img.location)
                && squared_distance(&img.features, &q.query_vector).sqrt() <= q.sigma
        })
        .count();
    good as f64 / ids.len() as f64
}

/// Page counts of the three storage components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SpaceCost {
    pub s_r: usize,
    pub s_lsh: usize,
    pub s_data: usize,
}

impl SpaceCost {
    pub fn total(&self) -> usize {
        self.s_r + self.s_lsh + self.s_data
    }
}

fn packed_pages(records: usize, len: usize, page_size: usize) -> usize {
    if records == 0 {
        return 0;
    }
    if len > page_size {
        return records * len.div_ceil(page_size);
    }
    records.div_ceil(page_size / len)
}

/// Evaluates the space model from the structure's description: one page per
/// R*-tree node, `ceil(C(b) / P)` per bucket, packed fixed-length records for
/// data files and AugVFI stubs.
pub fn analytic_space_cost(idx: &IndexStructure) -> SpaceCost {
    let p = idx.store().page_size();
    let s_r = idx.trees().iter().map(|t| t.node_count).sum();
    let mut s_lsh: usize = idx
        .lsh_indexes()
        .iter()
        .flat_map(|l| {
            let entry = l.format.entry_len();
            l.directory.iter().flat_map(move |d| {
                d.iter()
                    .map(move |(k, b)| bucket_header_len(k.0.len()) + b.entries as usize * entry)
            })
        })
        .map(|bytes| bytes.div_ceil(p))
        .sum();
    if idx.stub_count().is_some() {
        let mut per_len: BTreeMap<usize, usize> = BTreeMap::new();
        for (_, key, _) in idx.secondary_trees() {
            *per_len.entry(stub_len(key.0.len())).or_default() += 1;
        }
        s_lsh += per_len
            .iter()
            .map(|(len, n)| packed_pages(*n, *len, p))
            .sum::<usize>();
    }
    let n = idx.len();
    let s_data =
        packed_pages(n, SPATIAL_RECORD_LEN, p) + packed_pages(n, visual_record_len(idx.dim()), p);
    SpaceCost { s_r, s_lsh, s_data }
}

/// Actual page counts of the structure's files.
pub fn measured_space_cost(idx: &IndexStructure) -> SpaceCost {
    let store = idx.store();
    let pages = |f: Option<FileId>| f.map_or(0, |f| store.file(f).page_count());
    let data = idx.data_files();
    SpaceCost {
        s_r: pages(idx.node_file()),
        s_lsh: pages(idx.bucket_file()),
        s_data: pages(Some(data.spatial)) + pages(Some(data.visual)),
    }
}

/// Page counts of one query, per cost component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PageCost {
    pub t_r: usize,
    pub t_lsh: usize,
    pub t_data: usize,
}

impl PageCost {
    pub fn total(&self) -> usize {
        self.t_r + self.t_lsh + self.t_data
    }
}

impl From<&QueryStats> for PageCost {
    fn from(s: &QueryStats) -> Self {
        PageCost {
            t_r: s.pages_rtree,
            t_lsh: s.pages_lsh,
            t_data: s.pages_data,
        }
    }
}

#[derive(Clone, Copy)]
enum Component {
    R,
    Lsh,
    Data,
}

/// Which cost component each kind of read belongs to, per structure. Reads
/// outside a structure's row are not part of its query plan.
fn component(kind: IndexKind, access: Access) -> Option<Component> {
    use Access::*;
    use Component::*;
    use IndexKind::*;
    match (kind, access) {
        (_, VisualRecord) => Some(Data),
        (DI | AugRTree | SFI | AugSFI, PrimaryNode) => Some(R),
        (VFI | AugVFI, SecondaryNode) => Some(R),
        (DI | AugLSH | VFI, PrimaryBucket) => Some(Lsh),
        (SFI | AugSFI, SecondaryBucket) => Some(Lsh),
        (AugLSH, SpatialRecord) => Some(Data),
        _ => None,
    }
}

/// Evaluates the query cost model over a trace: distinct pages covered by
/// the logged reads, per component.
pub fn analytic_query_cost(
    kind: IndexKind,
    trace: &QueryTrace,
    page_size: usize,
) -> Result<PageCost> {
    let mut sets: [BTreeSet<(FileId, u32)>; 3] = Default::default();
    for (access, ptr) in &trace.reads {
        let c = component(kind, *access).ok_or_else(|| Error::TraceMismatch {
            kind,
            reason: format!("{access} read is not part of the plan"),
        })?;
        for page in ptr.pages(page_size) {
            sets[c as usize].insert((ptr.file, page));
        }
    }
    Ok(PageCost {
        t_r: sets[Component::R as usize].len(),
        t_lsh: sets[Component::Lsh as usize].len(),
        t_data: sets[Component::Data as usize].len(),
    })
}

/// `(lemma, left, right, per_query)`: left is expected to cost no more pages
/// than right. Per-query lemmas must hold on every query, the rest on the
/// workload mean.
pub const LEMMAS: [(u8, &str, &str, bool); 8] = [
    (1, "SFI", "AugRTree", false),
    (2, "SFI", "DI", false),
    (3, "VFI", "AugLSH", false),
    (4, "VFI", "DI", false),
    (5, "AugSFI", "SFI", true),
    (6, "AugSFI-E", "AugRTree", false),
    (7, "AugVFI", "VFI", true),
    (8, "AugVFI-E", "AugLSH", false),
];

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaVerdict {
    pub lemma: u8,
    pub left: &'static str,
    pub right: &'static str,
    pub per_query: bool,
    /// Queries where `pages(left) <= pages(right)`.
    pub satisfied: usize,
    pub queries: usize,
    pub mean_left: f64,
    pub mean_right: f64,
    pub holds: bool,
}

impl LemmaVerdict {
    pub fn rate(&self) -> f64 {
        if self.queries == 0 {
            1.0
        } else {
            self.satisfied as f64 / self.queries as f64
        }
    }
}

/// Lemma verdicts over per-structure `(qid, pages)` lists. Lemmas whose
/// structures are absent are skipped.
pub fn lemma_report(runs: &BTreeMap<String, Vec<(u64, usize)>>) -> Result<Vec<LemmaVerdict>> {
    if runs.len() < 2 {
        return Err(Error::Incomparable(format!(
            "need at least two structures, got {}",
            runs.len()
        )));
    }
    let mut qids = runs
        .values()
        .map(|r| r.iter().map(|(q, _)| *q).collect::<Vec<_>>());
    let first = qids.next().unwrap_or_default();
    if qids.any(|q| q != first) {
        return Err(Error::Incomparable(
            "structures ran different queries".into(),
        ));
    }
    let mean = |v: &[(u64, usize)]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().map(|(_, p)| *p as f64).sum::<f64>() / v.len() as f64
        }
    };
    let mut out = Vec::new();
    for (lemma, left, right, per_query) in LEMMAS {
        let (Some(l), Some(r)) = (runs.get(left), runs.get(right)) else {
            continue;
        };
        let satisfied = l.iter().zip(r).filter(|(a, b)| a.1 <= b.1).count();
        let (mean_left, mean_right) = (mean(l), mean(r));
        let holds = if per_query {
            satisfied == l.len()
        } else {
            mean_left <= mean_right
        };
        out.push(LemmaVerdict {
            lemma,
            left,
            right,
            per_query,
            satisfied,
            queries: l.len(),
            mean_left,
            mean_right,
            holds,
        });
    }
    Ok(out)
}

/// One structure's answer to one query, with everything the report needs.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRow {
    pub qid: u64,
    pub structure: String,
    pub pages_rtree: usize,
    pub pages_lsh: usize,
    pub pages_data: usize,
    pub sim_time: f64,
    pub result_count: usize,
    pub recall: Option<f64>,
    pub precision: f64,
    pub classes: ClassCounts,
    pub ids: Vec<ImageId>,
}

impl QueryRow {
    pub fn total_pages(&self) -> usize {
        self.pages_rtree + self.pages_lsh + self.pages_data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureSummary {
    pub structure: String,
    pub queries: usize,
    pub mean_pages: f64,
    pub mean_pages_rtree: f64,
    pub mean_pages_lsh: f64,
    pub mean_pages_data: f64,
    /// Over queries with non-empty truth; `None` if there are none.
    pub mean_recall: Option<f64>,
    pub mean_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationReport {
    pub rows: Vec<QueryRow>,
    pub summaries: Vec<StructureSummary>,
    pub lemmas: Vec<LemmaVerdict>,
}

impl EvaluationReport {
    /// Summaries per structure (first-seen order) and, when at least two
    /// structures are present, lemma verdicts.
    pub fn from_rows(rows: Vec<QueryRow>) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<&QueryRow>> = BTreeMap::new();
        for r in &rows {
            if !groups.contains_key(&r.structure) {
                order.push(r.structure.clone());
            }
            groups.entry(r.structure.clone()).or_default().push(r);
        }
        let summaries = order
            .iter()
            .map(|s| {
                let g = &groups[s];
                let n = g.len().max(1) as f64;
                let m = |f: &dyn Fn(&QueryRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / n;
                let recalls: Vec<f64> = g.iter().filter_map(|r| r.recall).collect();
                StructureSummary {
                    structure: s.clone(),
                    queries: g.len(),
                    mean_pages: m(&|r| r.total_pages() as f64),
                    mean_pages_rtree: m(&|r| r.pages_rtree as f64),
                    mean_pages_lsh: m(&|r| r.pages_lsh as f64),
                    mean_pages_data: m(&|r| r.pages_data as f64),
                    mean_recall: (!recalls.is_empty())
                        .then(|| recalls.iter().sum::<f64>() / recalls.len() as f64),
                    mean_precision: if g.is_empty() {
                        1.0
                    } else {
                        m(&|r| r.precision)
                    },
                }
            })
            .collect();
        let lemmas = if groups.len() >= 2 {
            let runs = groups
                .iter()
                .map(|(s, g)| {
                    (
                        s.clone(),
                        g.iter().map(|r| (r.qid, r.total_pages())).collect(),
                    )
                })
                .collect();
            lemma_report(&runs)?
        } else {
            Vec::new()
        };
        Ok(Self {
            rows,
            summaries,
            lemmas,
        })
    }

    pub fn summary(&self, structure: &str) -> Option<&StructureSummary> {
        self.summaries.iter().find(|s| s.structure == structure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;

    fn q(rect: (f64, f64, f64, f64), v: Vec<f64>, sigma: f64) -> SpatialVisualRangeQuery {
        SpatialVisualRangeQuery::new(
            Rect::from_coords(rect.0, rect.1, rect.2, rect.3).unwrap(),
            v,
            sigma,
        )
        .unwrap()
    }

    #[test]
    fn oracle_without_exploration_has_equal_sets() {
        let ds = Dataset::new(
            1,
            vec![
                GeoImage::new(1, Point::new(0.5, 0.5), vec![0.0]),
                GeoImage::new(2, Point::new(1.5, 0.5), vec![0.0]),
            ],
        )
        .unwrap();
        let query = q((0.0, 0.0, 1.0, 1.0), vec![0.1], 0.2);
        let t = oracle_query(&ds, &query, 0.0).unwrap();
        assert_eq!(t.strict, t.extended);
        assert_eq!(t.strict.len(), 1);
        let wide = oracle_query(&ds, &query, 2.0).unwrap();
        assert!(wide.strict.is_subset(&wide.extended));
        assert_eq!(wide.extended.len(), 2);
    }

    #[test]
    fn sigma_zero_without_exact_match_is_empty() {
        let ds = Dataset::new(1, vec![GeoImage::new(1, Point::new(0.5, 0.5), vec![0.0])]).unwrap();
        let t = oracle_query(&ds, &q((0.0, 0.0, 1.0, 1.0), vec![0.3], 0.0), 0.0).unwrap();
        assert!(t.strict.is_empty());
    }

    #[test]
    fn classifying_an_irrelevant_image_is_a_contract_error() {
        let img = GeoImage::new(1, Point::new(5.0, 5.0), vec![9.0]);
        let query = q((0.0, 0.0, 1.0, 1.0), vec![0.0], 0.5);
        let truth = GroundTruth::default();
        assert!(matches!(
            classify(&img, &query, &truth, true),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn recall_skips_empty_truth() {
        assert_eq!(recall(&BTreeSet::new(), &[ImageId(1)]), None);
        let t: BTreeSet<ImageId> = [ImageId(1), ImageId(2)].into();
        assert_eq!(recall(&t, &[ImageId(2), ImageId(9)]), Some(0.5));
    }

    #[test]
    fn packing_rule() {
        assert_eq!(packed_pages(0, 24, 4096), 0);
        assert_eq!(packed_pages(170, 24, 4096), 1);
        assert_eq!(packed_pages(171, 24, 4096), 2);
        assert_eq!(packed_pages(3, 5000, 4096), 6);
    }

    #[test]
    fn single_structure_is_incomparable() {
        let mut runs = BTreeMap::new();
        runs.insert("DI".to_string(), vec![(0, 3)]);
        assert!(matches!(lemma_report(&runs), Err(Error::Incomparable(_))));
        runs.insert("SFI".to_string(), vec![(1, 3)]);
        assert!(matches!(lemma_report(&runs), Err(Error::Incomparable(_))));
    }

    #[test]
    fn lemma_verdicts() {
        let mut runs = BTreeMap::new();
        runs.insert("SFI".to_string(), vec![(0, 3), (1, 9)]);
        runs.insert("DI".to_string(), vec![(0, 4), (1, 8)]);
        runs.insert("AugSFI".to_string(), vec![(0, 2), (1, 10)]);
        let v = lemma_report(&runs).unwrap();
        let l2 = v.iter().find(|l| l.lemma == 2).unwrap();
        assert!(l2.holds);
        assert_eq!(l2.satisfied, 1);
        let l5 = v.iter().find(|l| l.lemma == 5).unwrap();
        assert!(!l5.holds);
        assert_eq!(v.len(), 2);
    }
}
