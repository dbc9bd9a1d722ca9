//! R*-tree over 2-d points.
//!
//! Trees are grown in memory with [`RTreeBuilder`] and then written into a
//! page-aligned node file, one node per page, as a [`DiskRTree`]. Queries only
//! ever see the disk form, so every node visit is a page access.
//!
//! Node page layout (little-endian):
//!
//! ```text
//! [kind: u8 (0 leaf, 1 internal)] [format: u8 (0 plain, 1 augmented)] [count: u16]
//! leaf entry:     id u64 | x f64 | y f64 | spatial ptr (10 B) | [visual ptr (10 B)]
//! internal entry: min_x f64 | min_y f64 | max_x f64 | max_y f64 | child page u32
//! ```
//!
//! Record pointers inside entries are `page u32 | offset u16 | length u32`;
//! the file they point into is fixed per tree.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::model::ImageId;
use crate::pagestore::{FileId, PageStore, RecordPointer};
use crate::trace::{Access, QueryIo};

const NODE_HEADER: usize = 4;
const INTERNAL_ENTRY: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RTreeParams {
    pub fan_out: usize,
    pub min_fill: usize,
}

impl Default for RTreeParams {
    fn default() -> Self {
        Self::with_fan_out(85)
    }
}

impl RTreeParams {
    /// `min_fill` defaults to 40% of the fan-out.
    pub fn with_fan_out(fan_out: usize) -> Self {
        Self {
            fan_out,
            min_fill: (fan_out * 2 / 5).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fan_out < 2 {
            return Err(Error::invalid("fan-out must be >= 2"));
        }
        if self.min_fill < 1 || 2 * self.min_fill > self.fan_out + 1 {
            return Err(Error::invalid(format!(
                "min_fill {} incompatible with fan-out {}",
                self.min_fill, self.fan_out
            )));
        }
        Ok(())
    }
}

/// Whether leaf entries carry a visual-record pointer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LeafFormat {
    Plain,
    Augmented,
}

impl LeafFormat {
    pub fn entry_len(self) -> usize {
        let base = 8 + 16 + RecordPointer::ENCODED_LEN;
        match self {
            LeafFormat::Plain => base,
            LeafFormat::Augmented => base + RecordPointer::ENCODED_LEN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TreeRole {
    Primary,
    Secondary,
}

impl TreeRole {
    fn access(self) -> Access {
        match self {
            TreeRole::Primary => Access::PrimaryNode,
            TreeRole::Secondary => Access::SecondaryNode,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafEntry {
    pub id: ImageId,
    pub point: Point,
    pub spatial: RecordPointer,
    pub visual: Option<RecordPointer>,
}

#[derive(Debug, Clone)]
enum Slot {
    Leaf(Vec<LeafEntry>),
    Internal(Vec<(Rect, usize)>),
}

impl Slot {
    fn len(&self) -> usize {
        match self {
            Slot::Leaf(e) => e.len(),
            Slot::Internal(c) => c.len(),
        }
    }

    fn rects(&self) -> Vec<Rect> {
        match self {
            Slot::Leaf(e) => e.iter().map(|e| Rect::point(e.point)).collect(),
            Slot::Internal(c) => c.iter().map(|(r, _)| *r).collect(),
        }
    }

    fn mbr(&self) -> Option<Rect> {
        self.rects().into_iter().reduce(|a, b| a.union(&b))
    }
}

/// Summary returned by [`RTreeBuilder::audit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeShape {
    pub height: usize,
    pub nodes: usize,
    pub leaves: usize,
    pub entries: usize,
}

/// In-memory R*-tree under construction.
#[derive(Debug, Clone)]
pub struct RTreeBuilder {
    params: RTreeParams,
    format: LeafFormat,
    nodes: Vec<Slot>,
    root: usize,
    height: usize,
    len: usize,
}

impl RTreeBuilder {
    pub fn new(params: RTreeParams, format: LeafFormat) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            format,
            nodes: vec![Slot::Leaf(Vec::new())],
            root: 0,
            height: 1,
            len: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn format(&self) -> LeafFormat {
        self.format
    }

    pub fn insert(&mut self, entry: LeafEntry) -> Result<()> {
        if !entry.point.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite point for image {}",
                entry.id
            )));
        }
        if entry.visual.is_some() != (self.format == LeafFormat::Augmented) {
            return Err(Error::invalid("leaf entry does not match tree format"));
        }
        let target = Rect::point(entry.point);
        let mut path = Vec::with_capacity(self.height);
        let mut node = self.root;
        for level in (1..self.height).rev() {
            let pos = self.choose_subtree(node, &target, level == 1);
            path.push((node, pos));
            node = match &self.nodes[node] {
                Slot::Internal(c) => c[pos].1,
                Slot::Leaf(_) => unreachable!("leaf above level 0"),
            };
        }
        match &mut self.nodes[node] {
            Slot::Leaf(e) => e.push(entry),
            Slot::Internal(_) => unreachable!("internal node at level 0"),
        }
        self.len += 1;

        let mut sibling = self.split_if_full(node);
        let mut child = node;
        for (parent, pos) in path.into_iter().rev() {
            let child_mbr = self.nodes[child].mbr().expect("non-empty child");
            let Slot::Internal(c) = &mut self.nodes[parent] else {
                unreachable!()
            };
            c[pos].0 = child_mbr;
            if let Some(s) = sibling {
                c.push(s);
            }
            sibling = self.split_if_full(parent);
            child = parent;
        }
        if let Some(s) = sibling {
            let old = self.root;
            let old_mbr = self.nodes[old].mbr().expect("non-empty root");
            self.nodes.push(Slot::Internal(vec![(old_mbr, old), s]));
            self.root = self.nodes.len() - 1;
            self.height += 1;
        }
        Ok(())
    }

    /// Least overlap enlargement just above the leaves, least area
    /// enlargement elsewhere; ties by area then position.
    fn choose_subtree(&self, node: usize, target: &Rect, leaf_parent: bool) -> usize {
        let Slot::Internal(children) = &self.nodes[node] else {
            unreachable!()
        };
        let score = |i: usize| -> (f64, f64, f64) {
            let r = children[i].0;
            let grown = r.union(target);
            let area_enl = grown.area() - r.area();
            let overlap_enl = if leaf_parent {
                children
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, (o, _))| grown.overlap_area(o) - r.overlap_area(o))
                    .sum()
            } else {
                0.0
            };
            (overlap_enl, area_enl, r.area())
        };
        (0..children.len())
            .map(|i| (score(i), i))
            .min_by(|(a, i), (b, j)| {
                a.0.total_cmp(&b.0)
                    .then(a.1.total_cmp(&b.1))
                    .then(a.2.total_cmp(&b.2))
                    .then(i.cmp(j))
            })
            .map(|(_, i)| i)
            .expect("internal node has children")
    }

    fn split_if_full(&mut self, node: usize) -> Option<(Rect, usize)> {
        if self.nodes[node].len() <= self.params.fan_out {
            return None;
        }
        let rects = self.nodes[node].rects();
        let (keep, moved) = rstar_split(&rects, self.params.min_fill);
        let new_slot = match &mut self.nodes[node] {
            Slot::Leaf(entries) => {
                let all = std::mem::take(entries);
                let (a, b) = partition(all, &keep, &moved);
                *entries = a;
                Slot::Leaf(b)
            }
            Slot::Internal(children) => {
                let all = std::mem::take(children);
                let (a, b) = partition(all, &keep, &moved);
                *children = a;
                Slot::Internal(b)
            }
        };
        let mbr = new_slot.mbr().expect("split group non-empty");
        self.nodes.push(new_slot);
        Some((mbr, self.nodes.len() - 1))
    }

    /// Checks MBR minimality and occupancy of every node.
    pub fn audit(&self) -> Result<TreeShape> {
        let mut shape = TreeShape {
            height: self.height,
            nodes: 0,
            leaves: 0,
            entries: 0,
        };
        self.audit_node(self.root, self.height - 1, true, &mut shape)?;
        if shape.entries != self.len {
            return Err(Error::Contract(format!(
                "tree holds {} entries, expected {}",
                shape.entries, self.len
            )));
        }
        Ok(shape)
    }

    fn audit_node(
        &self,
        node: usize,
        level: usize,
        is_root: bool,
        shape: &mut TreeShape,
    ) -> Result<Option<Rect>> {
        let slot = &self.nodes[node];
        shape.nodes += 1;
        if !is_root && (slot.len() < self.params.min_fill || slot.len() > self.params.fan_out) {
            return Err(Error::Contract(format!(
                "node {node} holds {} entries outside [{}, {}]",
                slot.len(),
                self.params.min_fill,
                self.params.fan_out
            )));
        }
        match slot {
            Slot::Leaf(e) => {
                if level != 0 {
                    return Err(Error::Contract(format!("leaf {node} at level {level}")));
                }
                shape.leaves += 1;
                shape.entries += e.len();
                Ok(Rect::bounding(e.iter().map(|e| e.point)))
            }
            Slot::Internal(children) => {
                if level == 0 {
                    return Err(Error::Contract(format!(
                        "internal node {node} at leaf level"
                    )));
                }
                let mut acc: Option<Rect> = None;
                for (stored, child) in children {
                    let actual = self
                        .audit_node(*child, level - 1, false, shape)?
                        .ok_or_else(|| Error::Contract(format!("empty child {child}")))?;
                    if actual != *stored {
                        return Err(Error::Contract(format!(
                            "stale MBR for node {child}: stored {stored:?}, actual {actual:?}"
                        )));
                    }
                    acc = Some(acc.map_or(actual, |a| a.union(&actual)));
                }
                Ok(acc)
            }
        }
    }

    /// Writes the tree into `file`, one node per page, root first.
    pub fn persist(
        &self,
        store: &mut PageStore,
        file: FileId,
        data: DataFiles,
        role: TreeRole,
    ) -> Result<DiskRTree> {
        let page_size = store.page_size();
        let leaf_bytes = NODE_HEADER + self.params.fan_out * self.format.entry_len();
        let internal_bytes = NODE_HEADER + self.params.fan_out * INTERNAL_ENTRY;
        if leaf_bytes.max(internal_bytes) > page_size {
            return Err(Error::Build(format!(
                "fan-out {} does not fit a {page_size}-byte page",
                self.params.fan_out
            )));
        }

        let mut order = vec![self.root];
        let mut i = 0;
        while i < order.len() {
            if let Slot::Internal(c) = &self.nodes[order[i]] {
                order.extend(c.iter().map(|(_, n)| *n));
            }
            i += 1;
        }
        let base = store.file(file).page_count() as u32;
        let mut page_of = vec![0u32; self.nodes.len()];
        for (k, n) in order.iter().enumerate() {
            page_of[*n] = base + k as u32;
        }

        let mut leaves = 0;
        for (k, &n) in order.iter().enumerate() {
            let mut buf = Vec::with_capacity(page_size);
            match &self.nodes[n] {
                Slot::Leaf(entries) => {
                    leaves += 1;
                    buf.push(0);
                    buf.push(match self.format {
                        LeafFormat::Plain => 0,
                        LeafFormat::Augmented => 1,
                    });
                    buf.extend_from_slice(&(entries.len() as u16).to_le_bytes());
                    for e in entries {
                        buf.extend_from_slice(&e.id.0.to_le_bytes());
                        buf.extend_from_slice(&e.point.x.to_le_bytes());
                        buf.extend_from_slice(&e.point.y.to_le_bytes());
                        e.spatial.encode_into(&mut buf);
                        if let Some(v) = &e.visual {
                            v.encode_into(&mut buf);
                        }
                    }
                }
                Slot::Internal(children) => {
                    buf.extend_from_slice(&[1, 0]);
                    buf.extend_from_slice(&(children.len() as u16).to_le_bytes());
                    for (r, c) in children {
                        for v in [r.min.x, r.min.y, r.max.x, r.max.y] {
                            buf.extend_from_slice(&v.to_le_bytes());
                        }
                        buf.extend_from_slice(&page_of[*c].to_le_bytes());
                    }
                }
            }
            buf.resize(page_size, 0);
            let ptr = store.append_record(file, &buf)?;
            debug_assert_eq!(ptr.page, base + k as u32);
        }

        Ok(DiskRTree {
            file,
            root: base,
            root_mbr: self.nodes[self.root].mbr(),
            height: self.height,
            node_count: order.len(),
            leaf_count: leaves,
            format: self.format,
            data,
            role,
        })
    }
}

fn partition<T>(all: Vec<T>, keep: &[usize], moved: &[usize]) -> (Vec<T>, Vec<T>) {
    let mut slots: Vec<Option<T>> = all.into_iter().map(Some).collect();
    let a = keep.iter().map(|&i| slots[i].take().unwrap()).collect();
    let b = moved.iter().map(|&i| slots[i].take().unwrap()).collect();
    (a, b)
}

/// R*-tree split of an overflowing node. Picks the axis with the smallest
/// margin sum, then the distribution with least overlap, then least total
/// area, then the earliest candidate.
fn rstar_split(rects: &[Rect], min_fill: usize) -> (Vec<usize>, Vec<usize>) {
    let n = rects.len();
    let distributions = n - 2 * min_fill + 1;

    let sorted = |axis: usize, by_upper: bool| -> Vec<usize> {
        let key = |r: &Rect| -> (f64, f64) {
            let (lo, hi) = if axis == 0 {
                (r.min.x, r.max.x)
            } else {
                (r.min.y, r.max.y)
            };
            if by_upper {
                (hi, lo)
            } else {
                (lo, hi)
            }
        };
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| {
            let (ka, kb) = (key(&rects[a]), key(&rects[b]));
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(a.cmp(&b))
        });
        idx
    };

    // (first-group bbox, second-group bbox) for each split point of one ordering.
    let groups = |order: &[usize]| -> Vec<(Rect, Rect)> {
        let mut prefix = Vec::with_capacity(n);
        let mut acc = rects[order[0]];
        for &i in order {
            acc = acc.union(&rects[i]);
            prefix.push(acc);
        }
        let mut suffix = vec![rects[order[n - 1]]; n];
        let mut acc = rects[order[n - 1]];
        for k in (0..n).rev() {
            acc = acc.union(&rects[order[k]]);
            suffix[k] = acc;
        }
        (0..distributions)
            .map(|k| {
                let split = min_fill + k;
                (prefix[split - 1], suffix[split])
            })
            .collect()
    };

    let mut best_axis = 0;
    let mut best_margin = f64::INFINITY;
    let mut per_axis = Vec::with_capacity(2);
    for axis in 0..2 {
        let orders = [sorted(axis, false), sorted(axis, true)];
        let margin: f64 = orders
            .iter()
            .flat_map(|o| groups(o))
            .map(|(a, b)| a.margin() + b.margin())
            .sum();
        if margin < best_margin {
            best_margin = margin;
            best_axis = axis;
        }
        per_axis.push(orders);
    }

    let orders = &per_axis[best_axis];
    let mut best: Option<((f64, f64), usize, usize)> = None;
    let mut candidate = 0;
    for (o, order) in orders.iter().enumerate() {
        for (k, (a, b)) in groups(order).into_iter().enumerate() {
            let score = (a.overlap_area(&b), a.area() + b.area());
            let better = match &best {
                None => true,
                Some((s, _, _)) => match score.0.total_cmp(&s.0) {
                    Ordering::Less => true,
                    Ordering::Equal => score.1 < s.1,
                    Ordering::Greater => false,
                },
            };
            if better {
                best = Some((score, o, k));
            }
            candidate += 1;
        }
    }
    debug_assert!(candidate > 0);
    let (_, o, k) = best.expect("at least one distribution");
    let order = &orders[o];
    let split = min_fill + k;
    (order[..split].to_vec(), order[split..].to_vec())
}

/// The data files that leaf-entry pointers refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DataFiles {
    pub spatial: FileId,
    pub visual: FileId,
}

/// A persisted R*-tree.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiskRTree {
    pub file: FileId,
    pub root: u32,
    /// `None` when the tree is empty.
    pub root_mbr: Option<Rect>,
    pub height: usize,
    pub node_count: usize,
    pub leaf_count: usize,
    pub format: LeafFormat,
    pub data: DataFiles,
    pub role: TreeRole,
}

enum DiskNode {
    Leaf(Vec<LeafEntry>),
    Internal(Vec<(Rect, u32)>),
}

impl DiskRTree {
    fn node_ptr(&self, page: u32, page_size: usize) -> RecordPointer {
        RecordPointer {
            file: self.file,
            page,
            offset: 0,
            length: page_size as u32,
        }
    }

    fn decode(&self, bytes: &[u8]) -> Result<DiskNode> {
        let corrupt = || Error::Read("corrupt R*-tree node".into());
        if bytes.len() < NODE_HEADER {
            return Err(corrupt());
        }
        let count = u16::from_le_bytes([bytes[2], bytes[3]]) as usize;
        let body = &bytes[NODE_HEADER..];
        let f64_at = |b: &[u8], o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        match bytes[0] {
            0 => {
                let augmented = bytes[1] == 1;
                let width = if augmented {
                    LeafFormat::Augmented.entry_len()
                } else {
                    LeafFormat::Plain.entry_len()
                };
                if body.len() < count * width {
                    return Err(corrupt());
                }
                let entries = (0..count)
                    .map(|i| {
                        let e = &body[i * width..(i + 1) * width];
                        LeafEntry {
                            id: ImageId(u64::from_le_bytes(e[0..8].try_into().unwrap())),
                            point: Point::new(f64_at(e, 8), f64_at(e, 16)),
                            spatial: RecordPointer::decode(self.data.spatial, &e[24..34]),
                            visual: augmented
                                .then(|| RecordPointer::decode(self.data.visual, &e[34..44])),
                        }
                    })
                    .collect();
                Ok(DiskNode::Leaf(entries))
            }
            1 => {
                if body.len() < count * INTERNAL_ENTRY {
                    return Err(corrupt());
                }
                let children = (0..count)
                    .map(|i| {
                        let e = &body[i * INTERNAL_ENTRY..(i + 1) * INTERNAL_ENTRY];
                        let r = Rect {
                            min: Point::new(f64_at(e, 0), f64_at(e, 8)),
                            max: Point::new(f64_at(e, 16), f64_at(e, 24)),
                        };
                        (r, u32::from_le_bytes(e[32..36].try_into().unwrap()))
                    })
                    .collect();
                Ok(DiskNode::Internal(children))
            }
            _ => Err(corrupt()),
        }
    }

    fn load(&self, io: &mut QueryIo<'_>, page: u32) -> Result<DiskNode> {
        let ptr = self.node_ptr(page, io.store().page_size());
        let bytes = io.read(self.role.access(), &ptr)?;
        self.decode(bytes)
    }

    fn peek(&self, store: &PageStore, page: u32) -> Result<DiskNode> {
        let ptr = self.node_ptr(page, store.page_size());
        self.decode(store.peek_record(&ptr)?)
    }

    /// Entries whose points lie in `rect`, plus the number of leaves visited.
    pub fn range_query(
        &self,
        io: &mut QueryIo<'_>,
        rect: &Rect,
    ) -> Result<(Vec<LeafEntry>, usize)> {
        let per_leaf = self.range_query_by_leaf(io, rect)?;
        let leaves = per_leaf.len();
        Ok((per_leaf.into_iter().flat_map(|(_, e)| e).collect(), leaves))
    }

    /// Like [`DiskRTree::range_query`], grouped by visited leaf page. Leaves
    /// with no matching entry are still listed.
    pub fn range_query_by_leaf(
        &self,
        io: &mut QueryIo<'_>,
        rect: &Rect,
    ) -> Result<Vec<(u32, Vec<LeafEntry>)>> {
        let mut out = Vec::new();
        if self.root_mbr.is_none() {
            return Ok(out);
        }
        let mut stack = vec![self.root];
        while let Some(page) = stack.pop() {
            match self.load(io, page)? {
                DiskNode::Leaf(entries) => {
                    out.push((
                        page,
                        entries
                            .into_iter()
                            .filter(|e| rect.contains(e.point))
                            .collect(),
                    ));
                }
                DiskNode::Internal(children) => {
                    // reversed so pages are visited in entry order
                    stack.extend(
                        children
                            .iter()
                            .rev()
                            .filter(|(r, _)| r.intersects(rect))
                            .map(|(_, c)| *c),
                    );
                }
            }
        }
        Ok(out)
    }

    /// Pages and MBRs of the leaves overlapping `rect`, found by loading
    /// internal nodes only.
    pub fn overlapping_leaves(
        &self,
        io: &mut QueryIo<'_>,
        rect: &Rect,
    ) -> Result<Vec<(u32, Rect)>> {
        let mut out = Vec::new();
        if self.height == 1 {
            if let Some(r) = self.root_mbr.filter(|r| r.intersects(rect)) {
                out.push((self.root, r));
            }
            return Ok(out);
        }
        let mut stack = vec![(self.root, self.height - 1)];
        while let Some((page, level)) = stack.pop() {
            let DiskNode::Internal(children) = self.load(io, page)? else {
                return Err(Error::Read(format!(
                    "expected internal node at page {page}"
                )));
            };
            for (r, c) in children
                .into_iter()
                .rev()
                .filter(|(r, _)| r.intersects(rect))
            {
                if level == 1 {
                    out.push((c, r));
                } else {
                    stack.push((c, level - 1));
                }
            }
        }
        out.reverse();
        Ok(out)
    }

    /// Every leaf with its entries, in left-to-right order.
    pub fn leaf_iterate(&self, store: &PageStore) -> Result<Vec<(u32, Vec<LeafEntry>)>> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(page) = stack.pop() {
            match self.peek(store, page)? {
                DiskNode::Leaf(entries) => out.push((page, entries)),
                DiskNode::Internal(children) => {
                    stack.extend(children.iter().rev().map(|(_, c)| *c));
                }
            }
        }
        Ok(out)
    }

    /// Pages of every internal node, ascending.
    pub fn internal_pages(&self, store: &PageStore) -> Result<Vec<u32>> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(page) = stack.pop() {
            if let DiskNode::Internal(children) = self.peek(store, page)? {
                out.push(page);
                stack.extend(children.iter().map(|(_, c)| *c));
            }
        }
        out.sort_unstable();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pagestore::{FileRole, PageStoreConfig, Placement};

    fn entry(id: u64, x: f64, y: f64) -> LeafEntry {
        LeafEntry {
            id: ImageId(id),
            point: Point::new(x, y),
            spatial: RecordPointer {
                file: FileId(0),
                page: 0,
                offset: 0,
                length: 24,
            },
            visual: None,
        }
    }

    fn persisted(b: &RTreeBuilder) -> (PageStore, DiskRTree) {
        let mut store = PageStore::new(PageStoreConfig::default()).unwrap();
        let spatial = store.create_file("spatial", FileRole::Data, Placement::Packed);
        let visual = store.create_file("visual", FileRole::Data, Placement::Packed);
        let nodes = store.create_file("nodes", FileRole::Index, Placement::PageAligned);
        let t = b
            .persist(
                &mut store,
                nodes,
                DataFiles { spatial, visual },
                TreeRole::Primary,
            )
            .unwrap();
        (store, t)
    }

    #[test]
    fn single_entry_tree() {
        let mut b = RTreeBuilder::new(RTreeParams::default(), LeafFormat::Plain).unwrap();
        b.insert(entry(1, 3.0, 4.0)).unwrap();
        let shape = b.audit().unwrap();
        assert_eq!((shape.height, shape.leaves, shape.entries), (1, 1, 1));
    }

    #[test]
    fn overflow_splits_root_into_two_minimal_leaves() {
        let params = RTreeParams::with_fan_out(4);
        let mut b = RTreeBuilder::new(params, LeafFormat::Plain).unwrap();
        let pts = [
            (0.0, 0.0),
            (1.0, 0.5),
            (10.0, 10.0),
            (11.0, 9.0),
            (0.5, 1.0),
        ];
        for (i, (x, y)) in pts.iter().enumerate() {
            b.insert(entry(i as u64, *x, *y)).unwrap();
        }
        let shape = b.audit().unwrap();
        assert_eq!((shape.height, shape.leaves), (2, 2));

        let (store, t) = persisted(&b);
        let leaves = t.leaf_iterate(&store).unwrap();
        let mut groups: Vec<Vec<u64>> = leaves
            .iter()
            .map(|(_, e)| {
                let mut ids: Vec<u64> = e.iter().map(|e| e.id.0).collect();
                ids.sort();
                ids
            })
            .collect();
        groups.sort();
        assert_eq!(groups, vec![vec![0, 1, 4], vec![2, 3]]);
    }

    #[test]
    fn thousand_points_two_levels() {
        let mut b = RTreeBuilder::new(RTreeParams::default(), LeafFormat::Plain).unwrap();
        let mut state = 12345u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for i in 0..1000 {
            b.insert(entry(i, next() * 100.0, next() * 100.0)).unwrap();
        }
        let shape = b.audit().unwrap();
        assert_eq!(shape.height, 2);
        assert_eq!(shape.entries, 1000);

        let (store, t) = persisted(&b);
        let total: usize = t
            .leaf_iterate(&store)
            .unwrap()
            .iter()
            .map(|(_, e)| e.len())
            .sum();
        assert_eq!(total, 1000);
        assert_eq!(t.node_count, shape.nodes);
        assert_eq!(store.file(t.file).page_count(), shape.nodes);
    }

    #[test]
    fn disjoint_query_touches_only_root() {
        let mut b = RTreeBuilder::new(RTreeParams::with_fan_out(4), LeafFormat::Plain).unwrap();
        for i in 0..40 {
            b.insert(entry(i, (i % 7) as f64, (i / 7) as f64)).unwrap();
        }
        let (store, t) = persisted(&b);
        let mut io = QueryIo::new(&store);
        let far = Rect::from_coords(100.0, 100.0, 101.0, 101.0).unwrap();
        let (hits, leaves) = t.range_query(&mut io, &far).unwrap();
        assert!(hits.is_empty());
        assert_eq!(leaves, 0);
        assert_eq!(io.ledger.pages_index(), 1);
    }

    #[test]
    fn augmented_entries_round_trip() {
        let mut b = RTreeBuilder::new(RTreeParams::default(), LeafFormat::Augmented).unwrap();
        let mut e = entry(9, 1.0, 2.0);
        assert!(b.insert(e.clone()).is_err());
        e.visual = Some(RecordPointer {
            file: FileId(1),
            page: 3,
            offset: 40,
            length: 264,
        });
        b.insert(e.clone()).unwrap();
        let (store, t) = persisted(&b);
        let leaves = t.leaf_iterate(&store).unwrap();
        assert_eq!(leaves[0].1, vec![e]);
    }

    #[test]
    fn oversized_fan_out_rejected_at_persist() {
        let b = RTreeBuilder::new(RTreeParams::with_fan_out(200), LeafFormat::Augmented).unwrap();
        let mut store = PageStore::new(PageStoreConfig::default()).unwrap();
        let nodes = store.create_file("nodes", FileRole::Index, Placement::PageAligned);
        let files = DataFiles {
            spatial: FileId(0),
            visual: FileId(0),
        };
        assert!(matches!(
            b.persist(&mut store, nodes, files, TreeRole::Primary),
            Err(Error::Build(_))
        ));
    }
}
