use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use svx_core::evalkit::{effective_rect, oracle_query, precision, recall};
use svx_core::workbench::*;
use svx_core::*;

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #[test]
    fn dataset_file_round_trip(
        d in 1usize..6,
        rows in prop::collection::vec((any::<u64>(), finite(), finite(), prop::collection::vec(finite(), 6)), 0..20),
    ) {
        let mut seen = std::collections::HashSet::new();
        let images: Vec<GeoImage> = rows
            .into_iter()
            .filter(|r| seen.insert(r.0))
            .map(|(id, x, y, v)| GeoImage::new(id, Point::new(x, y), v[..d].to_vec()))
            .collect();
        let ds = Dataset::new(d, images).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(&buf[..]).unwrap();
        prop_assert_eq!(back.images(), ds.images());
    }
}

#[test]
fn malformed_files_report_their_line() {
    let bad = "svx-dataset,v1,2,2\n1,0,0,1,2\n2,0,zero,1,2\n";
    match read_dataset(bad.as_bytes()) {
        Err(Error::Format { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(read_dataset("svx-dataset,v1,3,2\n1,0,0,1,2\n".as_bytes()).is_err());
    assert!(read_workload("svx-workload,v2\n".as_bytes()).is_err());
}

#[test]
fn group_selection_respects_terciles() {
    let ds = generate_dataset(&DatasetSpec::standard(900, 8, 11)).unwrap();
    let profile = density_profile(&ds);
    let shape = QueryShape {
        side: 4.0,
        sigma: 0.3,
        explore_spatial: 0.5,
        explore_visual: 15,
    };
    let mut sorted = profile.spatial_knn.clone();
    sorted.sort_by(f64::total_cmp);
    let dense_cut = sorted[ds.len() / 3];
    for g in SelectivityGroup::ALL {
        let w = select_queries(&ds, &profile, g, 50, 4, &shape, 0).unwrap();
        assert_eq!(w.len(), 50);
        let (sd, vd) = g.densities();
        for wq in &w {
            let i = ds
                .images()
                .iter()
                .position(|img| img.features == wq.query.query_vector)
                .unwrap();
            let c = wq.query.spatial.center();
            assert!(
                (c.x - ds.images()[i].location.x).abs() < 1e-9
                    && (c.y - ds.images()[i].location.y).abs() < 1e-9
            );
            assert_eq!((profile.spatial[i], profile.visual[i]), (sd, vd), "{g}");
            if sd == Density::Dense {
                assert!(profile.spatial_knn[i] <= dense_cut);
            }
        }
    }
}

fn small_config(out: &Path) -> BenchmarkConfig {
    BenchmarkConfig {
        spec: Some(DatasetSpec::standard(500, 8, 3)),
        queries_per_group: 12,
        groups: vec![SelectivityGroup::SuVu, SelectivityGroup::SdVd],
        out_dir: out.to_path_buf(),
        timing_runs: 3,
        seed: 3,
        ..BenchmarkConfig::default()
    }
}

fn deterministic_files(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.csv")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn benchmark_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = run_benchmark(&small_config(a.path())).unwrap();
    run_benchmark(&small_config(b.path())).unwrap();
    let (fa, fb) = (deterministic_files(a.path()), deterministic_files(b.path()));
    assert!(fa.contains_key("report.csv") && fa.contains_key("series_recall_vs_sigma.csv"));
    assert_eq!(fa, fb);
    assert_eq!(out.report.rows.len(), 24 * 9);
    let timing = fs::read_to_string(a.path().join("timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 1 + 24 * 9);
}

#[test]
fn report_recomputes_from_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    run_benchmark(&cfg).unwrap();
    let ds = cfg.load_or_generate_dataset().unwrap();
    let workload: BTreeMap<u64, SpatialVisualRangeQuery> = cfg
        .workload(&ds)
        .unwrap()
        .into_iter()
        .map(|w| (w.qid, w.query))
        .collect();
    let rows = read_report(fs::File::open(dir.path().join("report.csv")).unwrap()).unwrap();
    let results = read_results(fs::File::open(dir.path().join("results.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), results.len());
    for r in &rows {
        let ids: Vec<ImageId> = results[&(r.qid, r.structure.clone())]
            .iter()
            .copied()
            .collect();
        assert_eq!(ids.len(), r.result_count);
        let variant = variants(&IndexKind::ALL)
            .into_iter()
            .find(|v| v.label() == r.structure)
            .unwrap();
        let q = variant.adapt(&workload[&r.qid]);
        let truth = oracle_query(&ds, &q, cfg.explore_max()).unwrap();
        assert_eq!(recall(&truth.extended, &ids), r.recall);
        let rect = effective_rect(variant.kind, &q).unwrap();
        assert_eq!(precision(&ds, &q, &rect, &ids), r.precision);
    }
    let again = report_from_file(&dir.path().join("report.csv")).unwrap();
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut buf = Vec::new();
    write_summary(&again, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), summary);
}

#[test]
fn empty_workload_gives_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let wl = dir.path().join("empty.csv");
    save_workload(&[], &wl).unwrap();
    let cfg = BenchmarkConfig {
        workload: Some(wl),
        ..small_config(&dir.path().join("out"))
    };
    let out = run_benchmark(&cfg).unwrap();
    assert!(out.report.rows.is_empty());
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert_eq!(report.trim(), REPORT_HEADER);
}

#[test]
fn running_example_through_the_harness() {
    let ex = running_example();
    let h = Harness::build(
        ex.dataset.clone(),
        &ex.family,
        &ex.config,
        &IndexKind::ALL,
        0.5,
    )
    .unwrap();
    let wl = [WorkloadQuery {
        qid: 0,
        query: ex.query.clone(),
    }];
    let report = h.run(&wl).unwrap();
    let got: BTreeMap<&str, Vec<u64>> = report
        .rows
        .iter()
        .map(|r| (r.structure.as_str(), r.ids.iter().map(|i| i.0).collect()))
        .collect();
    assert_eq!(got["DI"], vec![3, 4]);
    assert_eq!(got["AugRTree"], vec![3, 4, 9]);
    assert_eq!(got["AugLSH"], vec![3, 4]);
    assert_eq!(got["SFI"], vec![3, 4]);
    assert_eq!(got["VFI"], vec![3, 4]);
    assert_eq!(got["AugSFI"], vec![3, 4]);
    assert_eq!(got["AugVFI"], vec![3, 4]);
}
