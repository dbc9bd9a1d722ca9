use proptest::prelude::*;
use svx_core::pagestore::{query_cost, AccessLedger, FileRole, Placement};
use svx_core::{PageStore, PageStoreConfig};

const PAGE: usize = 256;

fn store() -> PageStore {
    PageStore::new(PageStoreConfig {
        page_size: PAGE,
        t_disk: 0.001,
    })
    .unwrap()
}

/// Bytes a packed file occupies after appending records of these lengths.
fn padded_len(lens: &[usize], placement: Placement) -> usize {
    let mut used = 0;
    for &l in lens {
        let in_page = used % PAGE;
        let pad = in_page != 0
            && match placement {
                Placement::PageAligned => true,
                Placement::Packed => l > PAGE || in_page + l > PAGE,
            };
        if pad {
            used += PAGE - in_page;
        }
        used += l;
    }
    used
}

proptest! {
    #[test]
    fn records_round_trip(
        payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 1..10 * PAGE), 1..12),
        aligned: bool,
    ) {
        let placement = if aligned { Placement::PageAligned } else { Placement::Packed };
        let mut s = store();
        let f = s.create_file("f", FileRole::Data, placement);
        let ptrs: Vec<_> = payloads.iter().map(|p| s.append_record(f, p).unwrap()).collect();
        let mut ledger = AccessLedger::new();
        for (p, ptr) in payloads.iter().zip(&ptrs) {
            prop_assert_eq!(s.read_record(ptr, &mut ledger).unwrap(), &p[..]);
        }
        let lens: Vec<usize> = payloads.iter().map(Vec::len).collect();
        prop_assert_eq!(s.file(f).page_count(), padded_len(&lens, placement).div_ceil(PAGE));
    }

    #[test]
    fn rereads_do_not_change_the_ledger(lens in prop::collection::vec(1usize..3 * PAGE, 1..20), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..30)) {
        let mut s = store();
        let f = s.create_file("f", FileRole::Index, Placement::Packed);
        let ptrs: Vec<_> = lens.iter().map(|l| s.append_record(f, &vec![7u8; *l]).unwrap()).collect();
        let mut ledger = AccessLedger::new();
        for i in &picks {
            s.read_record(&ptrs[i.index(ptrs.len())], &mut ledger).unwrap();
        }
        let before = (ledger.pages_index(), ledger.pages_data());
        for i in &picks {
            s.read_record(&ptrs[i.index(ptrs.len())], &mut ledger).unwrap();
        }
        prop_assert_eq!(before, (ledger.pages_index(), ledger.pages_data()));
        prop_assert_eq!(ledger.pages_data(), 0);
    }
}

#[test]
fn ledger_cost_is_linear_in_pages() {
    let cfg = PageStoreConfig {
        page_size: 4096,
        t_disk: 0.001,
    };
    let mut ledger = AccessLedger::new();
    assert_eq!(query_cost(&ledger, &cfg), 0.0);
    for p in 0..10 {
        ledger.touch(FileRole::Index, svx_core::pagestore::FileId(0), p);
    }
    for p in 0..5 {
        ledger.touch(FileRole::Data, svx_core::pagestore::FileId(1), p);
    }
    assert!((query_cost(&ledger, &cfg) - 0.015).abs() < 1e-12);
}

#[test]
fn save_and_load_preserve_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = store();
    let f = s.create_file("data", FileRole::Data, Placement::Packed);
    let ptrs: Vec<_> = (1..50u8)
        .map(|i| s.append_record(f, &vec![i; i as usize * 9]).unwrap())
        .collect();
    s.save(dir.path()).unwrap();
    let back = PageStore::load(*s.config(), dir.path(), &["data".to_string()]).unwrap();
    for (i, p) in (1..50u8).zip(&ptrs) {
        assert_eq!(back.peek_record(p).unwrap(), &vec![i; i as usize * 9][..]);
    }
}
