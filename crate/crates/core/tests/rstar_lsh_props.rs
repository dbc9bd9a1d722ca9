use std::collections::BTreeSet;

use proptest::prelude::*;
use svx_core::datafile::DataLayout;
use svx_core::lsh::{BucketEntry, BucketFormat, LshBuilder, LshRole};
use svx_core::pagestore::{FileRole, Placement};
use svx_core::rstar::{LeafEntry, LeafFormat, RTreeBuilder, TreeRole};
use svx_core::trace::QueryIo;
use svx_core::*;

fn points(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0f64..100.0, 0f64..100.0), 1..max)
}

fn dataset(pts: &[(f64, f64)], d: usize) -> Dataset {
    let images = pts
        .iter()
        .enumerate()
        .map(|(i, (x, y))| {
            let v = (0..d)
                .map(|k| ((i * 31 + k * 7) % 17) as f64 * 0.1 + x * 0.01)
                .collect();
            GeoImage::new(i as u64, Point::new(*x, *y), v)
        })
        .collect();
    Dataset::new(d, images).unwrap()
}

fn build_tree(
    ds: &Dataset,
    fan_out: usize,
) -> (PageStore, RTreeBuilder, svx_core::rstar::DiskRTree) {
    let mut store = PageStore::new(PageStoreConfig::default()).unwrap();
    let layout = DataLayout::write(&mut store, ds).unwrap();
    let mut b = RTreeBuilder::new(RTreeParams::with_fan_out(fan_out), LeafFormat::Plain).unwrap();
    for (img, sp) in ds.images().iter().zip(&layout.spatial) {
        b.insert(LeafEntry {
            id: img.id,
            point: img.location,
            spatial: *sp,
            visual: None,
        })
        .unwrap();
    }
    let nodes = store.create_file("rtree", FileRole::Index, Placement::PageAligned);
    let t = b
        .persist(&mut store, nodes, layout.files, TreeRole::Primary)
        .unwrap();
    (store, b, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn range_query_matches_brute_force(pts in points(2000), fan_out in 3usize..90, rects in prop::collection::vec((0f64..100.0, 0f64..100.0, 0f64..40.0, 0f64..40.0), 1..8)) {
        let ds = dataset(&pts, 2);
        let (store, b, tree) = build_tree(&ds, fan_out);
        let shape = b.audit().unwrap();
        prop_assert_eq!(shape.entries, pts.len());
        for (x, y, w, h) in rects {
            let r = Rect::from_coords(x, y, x + w, y + h).unwrap();
            let mut io = QueryIo::new(&store);
            let (hits, leaves) = tree.range_query(&mut io, &r).unwrap();
            prop_assert!(leaves <= tree.leaf_count);
            let got: BTreeSet<u64> = hits.iter().map(|e| e.id.0).collect();
            let want: BTreeSet<u64> = ds.images().iter().filter(|i| r.contains(i.location)).map(|i| i.id.0).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn disjoint_query_touches_only_the_root(pts in points(500), fan_out in 3usize..20) {
        let ds = dataset(&pts, 2);
        let (store, _, tree) = build_tree(&ds, fan_out);
        let mut io = QueryIo::new(&store);
        let (hits, _) = tree.range_query(&mut io, &Rect::from_coords(200.0, 200.0, 300.0, 300.0).unwrap()).unwrap();
        prop_assert!(hits.is_empty());
        prop_assert_eq!(io.ledger.pages_index(), 1);
    }

    #[test]
    fn leaves_partition_the_entries(pts in points(1200), fan_out in 3usize..30) {
        let ds = dataset(&pts, 2);
        let (store, _, tree) = build_tree(&ds, fan_out);
        let leaves = tree.leaf_iterate(&store).unwrap();
        prop_assert_eq!(leaves.len(), tree.leaf_count);
        let ids: BTreeSet<u64> = leaves.iter().flat_map(|(_, es)| es.iter().map(|e| e.id.0)).collect();
        prop_assert_eq!(ids.len(), pts.len());
        prop_assert_eq!(leaves.iter().map(|(_, es)| es.len()).sum::<usize>(), pts.len());
    }

    #[test]
    fn lsh_never_reports_false_positives(pts in points(400), seed: u64, width in 0.05f64..2.0, sigma in 0f64..1.5, qi in any::<prop::sample::Index>()) {
        let ds = dataset(&pts, 6);
        let family = HashFamily::generate(&LshParams::new(6, width, seed)).unwrap();
        let mut store = PageStore::new(PageStoreConfig::default()).unwrap();
        let layout = DataLayout::write(&mut store, &ds).unwrap();
        let mut b = LshBuilder::new(&family, BucketFormat::Plain);
        for (img, vp) in ds.images().iter().zip(&layout.visual) {
            b.insert(&img.features, BucketEntry { id: img.id, visual: *vp, spatial: None, point: None }).unwrap();
        }
        let f = store.create_file("lsh", FileRole::Index, Placement::PageAligned);
        let lsh = b.persist(&mut store, f, layout.files, LshRole::Primary).unwrap();
        let q = &ds.images()[qi.index(ds.len())].features;
        let mut io = QueryIo::new(&store);
        let res = lsh.similarity_query(&mut io, &family, q, sigma).unwrap();
        // the query vector's own image always collides with it
        prop_assert!(res.matches.iter().any(|(e, _)| e.id == ds.images()[qi.index(ds.len())].id));
        for (e, v) in &res.matches {
            prop_assert!(euclidean_distance(v, q).unwrap() <= sigma);
            prop_assert_eq!(&ds.get(e.id).unwrap().features, v);
        }
    }
}

fn persist_lsh(ds: &Dataset, family: &HashFamily) -> Vec<u8> {
    let mut store = PageStore::new(PageStoreConfig::default()).unwrap();
    let layout = DataLayout::write(&mut store, ds).unwrap();
    let mut b = LshBuilder::new(family, BucketFormat::SpatialInline);
    for ((img, vp), sp) in ds.images().iter().zip(&layout.visual).zip(&layout.spatial) {
        b.insert(
            &img.features,
            BucketEntry {
                id: img.id,
                visual: *vp,
                spatial: Some(*sp),
                point: Some(img.location),
            },
        )
        .unwrap();
    }
    let f = store.create_file("lsh", FileRole::Index, Placement::PageAligned);
    b.persist(&mut store, f, layout.files, LshRole::Secondary)
        .unwrap();
    let mut out = Vec::new();
    store.file(f).write_to(&mut out).unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bucket_files_are_deterministic(pts in points(600), seed: u64, width in 0.1f64..2.0) {
        let ds = dataset(&pts, 8);
        let a = persist_lsh(&ds, &HashFamily::generate(&LshParams::new(8, width, seed)).unwrap());
        let b = persist_lsh(&ds, &HashFamily::generate(&LshParams::new(8, width, seed)).unwrap());
        prop_assert_eq!(a, b);
    }

    /// Families that share their first T tables: candidates with T tables
    /// are a subset of those with T + 1, so recall cannot drop.
    #[test]
    fn recall_is_non_decreasing_in_tables(pts in points(300), seed: u64, width in 0.05f64..0.6, sigma in 0.1f64..1.0) {
        let ds = dataset(&pts, 6);
        let full = HashFamily::generate(&LshParams { tables: 5, functions_per_table: 4, width, dim: 6, seed }).unwrap();
        let mut last = 0.0;
        for t in 1..=5 {
            let fam = HashFamily::from_functions(width, (0..t).map(|k| full.functions(k).to_vec()).collect()).unwrap();
            let mut hits = 0usize;
            let mut total = 0usize;
            for q in ds.images().iter().take(20) {
                let keys = fam.hash_all(&q.features).unwrap();
                for img in ds.images() {
                    if euclidean_distance(&img.features, &q.features).unwrap() <= sigma {
                        total += 1;
                        let visible = (0..t).any(|k| fam.hash_vector(k, &img.features).unwrap() == keys[k]);
                        hits += usize::from(visible);
                    }
                }
            }
            let recall = hits as f64 / total as f64;
            prop_assert!(recall >= last);
            last = recall;
        }
    }
}
