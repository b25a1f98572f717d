//! Store tests: versioned extents, tiering, checksum verification, punch
//! reclamation, crash-restart replay, and the flat-array linearizability
//! oracle.

use std::fs::OpenOptions;
use std::os::unix::fs::FileExt;

use ros2::store::{tier_place, Oid, PoolConfig, Store};
use ros2_core::crc32c::crc32c;
use ros2_core::rng::SplitMix64;
use ros2_core::rpc::EPOCH_LATEST;

fn pool(dir: &tempfile::TempDir, nvme_mib: u64) -> PoolConfig {
    PoolConfig {
        pool_id: 1,
        scm_capacity: 64 << 20,
        nvme_path: dir.path().join("pool0.img"),
        nvme_capacity: nvme_mib << 20,
    }
}

const OID: Oid = Oid { hi: 7, lo: 9 };

#[test]
fn create_pool_block_count() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(&pool(&dir, 256)).unwrap();
    // 256 MiB / 4 KiB
    assert_eq!(store.info().total_blocks, 65536);
    assert_eq!(store.allocated_blocks(), 1, "header block only");
    let meta = std::fs::metadata(dir.path().join("pool0.img")).unwrap();
    assert_eq!(meta.len(), 256 << 20, "file size equals capacity");
}

#[test]
fn unaligned_capacity_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = pool(&dir, 1);
    cfg.nvme_capacity = 4095;
    assert!(matches!(
        Store::create(&cfg),
        Err(ros2::error::StoreError::Unaligned)
    ));
}

#[test]
fn containers_are_distinct_and_start_at_epoch_zero() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(&pool(&dir, 16)).unwrap();
    let a = store.create_container(1).unwrap();
    let b = store.create_container(1).unwrap();
    assert_ne!(a, b);
    assert_eq!(store.container_info(a).unwrap().0, 0);
    assert_eq!(store.container_info(b).unwrap().0, 0);
}

#[test]
fn update_fetch_roundtrip_and_tiering() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(&pool(&dir, 16)).unwrap();
    let cont = store.create_container(1).unwrap();

    // 4096 bytes -> SCM
    assert_eq!(tier_place(4096), "scm");
    assert_eq!(tier_place(4097), "nvme");
    assert_eq!(tier_place(1 << 20), "nvme");

    let small = vec![0xAA; 4096];
    let e1 = store.update(cont, OID, 0, &small, crc32c(&small)).unwrap();
    assert_eq!(e1, 1);
    assert_eq!(store.allocated_blocks(), 1, "scm write takes no blocks");
    assert_eq!(store.scm_used(), 4096);

    let big = vec![0xBB; 10_000];
    let e2 = store.update(cont, OID, 8192, &big, crc32c(&big)).unwrap();
    assert_eq!(e2, 2);
    assert_eq!(store.allocated_blocks(), 1 + 3, "10000 bytes = 3 blocks");

    let got = store.fetch(cont, OID, 0, 4096, EPOCH_LATEST, false).unwrap();
    assert_eq!(got.bytes, small);
    let got = store.fetch(cont, OID, 8192, 10_000, EPOCH_LATEST, false).unwrap();
    assert_eq!(got.bytes, big);
}

#[test]
fn last_writer_wins_across_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(&pool(&dir, 16)).unwrap();
    let cont = store.create_container(1).unwrap();
    let a = vec![1u8; 4096];
    let b = vec![2u8; 4096];
    store.update(cont, OID, 0, &a, crc32c(&a)).unwrap();
    store.update(cont, OID, 2048, &b, crc32c(&b)).unwrap();
    let got = store.fetch(cont, OID, 0, 6144, EPOCH_LATEST, false).unwrap();
    assert!(got.bytes[..2048].iter().all(|&x| x == 1));
    assert!(got.bytes[2048..].iter().all(|&x| x == 2));
}

#[test]
fn historical_epoch_fetch_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(&pool(&dir, 16)).unwrap();
    let cont = store.create_container(1).unwrap();
    let a = vec![1u8; 100];
    let b = vec![2u8; 100];
    let e1 = store.update(cont, OID, 0, &a, crc32c(&a)).unwrap();
    let snapshot = store.fetch(cont, OID, 0, 100, e1, false).unwrap().bytes;
    let _e2 = store.update(cont, OID, 0, &b, crc32c(&b)).unwrap();
    assert_eq!(store.fetch(cont, OID, 0, 100, e1, false).unwrap().bytes, snapshot);
    assert_eq!(store.fetch(cont, OID, 0, 100, EPOCH_LATEST, false).unwrap().bytes, b);
}

#[test]
fn unwritten_range_reads_zeros_with_known_crc() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(&pool(&dir, 16)).unwrap();
    let cont = store.create_container(1).unwrap();
    let got = store.fetch(cont, OID, 0, 4096, EPOCH_LATEST, false).unwrap();
    assert_eq!(got.bytes, vec![0u8; 4096]);
    // CRC32C of 4 KiB of zeros, frozen from the reference oracle
    assert_eq!(crc32c(&got.bytes), 0x98F9_4189);
    // strict mode flags the never-written object instead
    assert!(matches!(
        store.fetch(cont, OID, 0, 4096, EPOCH_LATEST, true),
        Err(ros2::error::StoreError::UnknownObject)
    ));
}

#[test]
fn wire_checksum_mismatch_rejected_store_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(&pool(&dir, 16)).unwrap();
    let cont = store.create_container(1).unwrap();
    let data = vec![5u8; 4096];
    let bad_crc = crc32c(&data) ^ 1;
    assert!(matches!(
        store.update(cont, OID, 0, &data, bad_crc),
        Err(ros2::error::StoreError::ChecksumMismatch)
    ));
    assert_eq!(store.container_info(cont).unwrap().0, 0, "no epoch consumed");
    assert_eq!(store.scm_used(), 0);
}

#[test]
fn media_corruption_detected_on_both_tiers() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(&pool(&dir, 16)).unwrap();
    let cont = store.create_container(1).unwrap();

    // SCM tier
    let small = vec![3u8; 1000];
    let e1 = store.update(cont, OID, 0, &small, crc32c(&small)).unwrap();
    assert!(store.debug_corrupt_scm(cont, OID, e1, 500, 0x10));
    assert!(matches!(
        store.fetch(cont, OID, 0, 1000, EPOCH_LATEST, false),
        Err(ros2::error::StoreError::MediaCorruption)
    ));
    // restore
    assert!(store.debug_corrupt_scm(cont, OID, e1, 500, 0x10));
    assert!(store.fetch(cont, OID, 0, 1000, EPOCH_LATEST, false).is_ok());

    // NVMe tier: flip one byte in the backing file
    let big = vec![4u8; 8192];
    let e2 = store.update(cont, OID, 16384, &big, crc32c(&big)).unwrap();
    store.flush().unwrap();
    let blocks = store.debug_nvme_blocks(cont, OID, e2).unwrap();
    let file = OpenOptions::new()
        .read(true)
        .write(true)
        .open(dir.path().join("pool0.img"))
        .unwrap();
    let target = blocks[0] as u64 * 4096 + 17;
    let mut byte = [0u8; 1];
    file.read_exact_at(&mut byte, target).unwrap();
    file.write_all_at(&[byte[0] ^ 0x80], target).unwrap();
    assert!(matches!(
        store.fetch(cont, OID, 16384, 8192, EPOCH_LATEST, false),
        Err(ros2::error::StoreError::MediaCorruption)
    ));
    // unaffected ranges still fetch
    assert!(store.fetch(cont, OID, 0, 1000, EPOCH_LATEST, false).is_ok());
}

#[test]
fn punch_zeroes_frees_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(&pool(&dir, 16)).unwrap();
    let cont = store.create_container(1).unwrap();
    let big = vec![6u8; 12_288];
    store.update(cont, OID, 0, &big, crc32c(&big)).unwrap();
    assert_eq!(store.allocated_blocks(), 4);

    store.punch(cont, OID, 0, 12_288).unwrap();
    assert_eq!(store.allocated_blocks(), 1, "blocks reclaimed");
    let got = store.fetch(cont, OID, 0, 12_288, EPOCH_LATEST, false).unwrap();
    assert!(got.bytes.iter().all(|&b| b == 0));

    // punch twice: identical image
    store.punch(cont, OID, 0, 12_288).unwrap();
    let again = store.fetch(cont, OID, 0, 12_288, EPOCH_LATEST, false).unwrap();
    assert_eq!(again.bytes, got.bytes);

    // partial punch: extent not fully covered is retained
    let data = vec![7u8; 8192];
    store.update(cont, OID, 0, &data, crc32c(&data)).unwrap();
    assert_eq!(store.allocated_blocks(), 3);
    store.punch(cont, OID, 0, 4096).unwrap();
    assert_eq!(store.allocated_blocks(), 3, "partially covered extent kept");
    let got = store.fetch(cont, OID, 0, 8192, EPOCH_LATEST, false).unwrap();
    assert!(got.bytes[..4096].iter().all(|&b| b == 0));
    assert!(got.bytes[4096..].iter().all(|&b| b == 7));
}

#[test]
fn block_accounting_no_leaks_after_random_ops() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(&pool(&dir, 64)).unwrap();
    let cont = store.create_container(1).unwrap();
    let mut rng = SplitMix64::new(0xACC7);
    for step in 0..300 {
        let oid = Oid {
            hi: 1,
            lo: rng.next_below(4),
        };
        let off = rng.next_below(1 << 20);
        if rng.next_u64() % 4 == 0 {
            store.punch(cont, oid, off, 1 + rng.next_below(256 << 10)).unwrap();
        } else {
            let len = 1 + rng.next_below(128 << 10) as usize;
            let data: Vec<u8> = (0..len).map(|i| (i + step) as u8).collect();
            store.update(cont, oid, off, &data, crc32c(&data)).unwrap();
        }
        assert_eq!(
            store.allocated_blocks(),
            store.nvme_extent_blocks(),
            "allocated equals live extent footprint after step {}",
            step
        );
    }
}

#[test]
fn enospc_on_scm_and_nvme_and_reclaim_recovers() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = pool(&dir, 1); // 1 MiB nvme = 256 blocks, 255 usable
    cfg.scm_capacity = 8 << 10;
    let store = Store::create(&cfg).unwrap();
    let cont = store.create_container(1).unwrap();

    // SCM: 2 x 4 KiB fills it
    let blob = vec![1u8; 4096];
    store.update(cont, Oid { hi: 0, lo: 1 }, 0, &blob, crc32c(&blob)).unwrap();
    store.update(cont, Oid { hi: 0, lo: 2 }, 0, &blob, crc32c(&blob)).unwrap();
    assert!(matches!(
        store.update(cont, Oid { hi: 0, lo: 3 }, 0, &blob, crc32c(&blob)),
        Err(ros2::error::StoreError::NoSpace("scm"))
    ));

    // NVMe: 255 usable blocks
    let big = vec![2u8; 255 * 4096];
    let e = store
        .update(cont, Oid { hi: 1, lo: 1 }, 0, &big, crc32c(&big))
        .unwrap();
    let huge = vec![3u8; 8192];
    assert!(matches!(
        store.update(cont, Oid { hi: 1, lo: 2 }, 0, &huge, crc32c(&huge)),
        Err(ros2::error::StoreError::NoSpace("nvme"))
    ));
    // punch the big extent and space returns
    store.punch(cont, Oid { hi: 1, lo: 1 }, 0, 255 * 4096).unwrap();
    let _ = e;
    store
        .update(cont, Oid { hi: 1, lo: 2 }, 0, &huge, crc32c(&huge))
        .unwrap();
}

#[test]
fn restart_replays_committed_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = pool(&dir, 16);
    let (cont, e_small, e_big);
    let small = vec![9u8; 2048];
    let big = vec![8u8; 100_000];
    {
        let store = Store::create(&cfg).unwrap();
        cont = store.create_container(42).unwrap();
        e_small = store.update(cont, OID, 0, &small, crc32c(&small)).unwrap();
        e_big = store.update(cont, OID, 4096, &big, crc32c(&big)).unwrap();
        store.punch(cont, OID, 0, 1024).unwrap();
        store.flush().unwrap();
        // dropped without clean shutdown
    }
    let store = Store::open(&cfg.nvme_path).unwrap();
    assert_eq!(store.container_info(cont).unwrap(), (3, 42));
    let got = store.fetch(cont, OID, 0, 2048, EPOCH_LATEST, false).unwrap();
    assert!(got.bytes[..1024].iter().all(|&b| b == 0), "punch replayed");
    assert!(got.bytes[1024..].iter().all(|&b| b == 9));
    let got = store.fetch(cont, OID, 4096, 100_000, EPOCH_LATEST, false).unwrap();
    assert_eq!(got.bytes, big);
    // historical view survives restart too
    let got = store.fetch(cont, OID, 1024, 1024, e_small, false).unwrap();
    assert!(got.bytes.iter().all(|&b| b == 9));
    let _ = e_big;
    // epochs continue monotonically
    let next = store.update(cont, OID, 0, &small, crc32c(&small)).unwrap();
    assert_eq!(next, 4);
}

#[test]
fn open_or_create_rejects_mismatched_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = pool(&dir, 16);
    drop(Store::create(&cfg).unwrap());
    let mut other = cfg.clone();
    other.nvme_capacity = 32 << 20;
    assert!(Store::open_or_create(&other).is_err());
    assert!(Store::open_or_create(&cfg).is_ok());
}

// Randomized per-object linearizability against a flat byte-array oracle:
// serialized updates and fetches through the store must match a plain
// array applying the same writes in commit order.
#[test]
fn random_history_matches_flat_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(&pool(&dir, 64)).unwrap();
    let cont = store.create_container(1).unwrap();
    let mut rng = SplitMix64::new(0x0AC1E);
    const SIZE: u64 = 1 << 20;
    let mut oracle = vec![0u8; SIZE as usize];
    for _ in 0..200 {
        let off = rng.next_below(SIZE - 1);
        let len = 1 + rng.next_below((SIZE - off).min(64 << 10));
        if rng.next_u64() % 5 == 0 {
            store.punch(cont, OID, off, len).unwrap();
            oracle[off as usize..(off + len) as usize].fill(0);
        } else {
            let fill = (rng.next_u64() & 0xFF) as u8;
            let data = vec![fill; len as usize];
            store.update(cont, OID, off, &data, crc32c(&data)).unwrap();
            oracle[off as usize..(off + len) as usize].fill(fill);
        }
        let roff = rng.next_below(SIZE - 1);
        let rlen = 1 + rng.next_below(SIZE - roff);
        let got = store.fetch(cont, OID, roff, rlen, EPOCH_LATEST, false).unwrap();
        assert_eq!(got.bytes, &oracle[roff as usize..(roff + rlen) as usize]);
    }
}
