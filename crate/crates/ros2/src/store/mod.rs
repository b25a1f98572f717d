//! The storage-engine core: one pool of versioned, checksummed extent
//! objects spread across a byte-addressable SCM-analog tier (in-memory
//! heap, payloads journaled in the manifest) and a block NVMe-analog tier
//! (a preallocated backing file with a 4 KiB-block bitmap allocator).
//!
//! Every update commits a new extent at a fresh container epoch;
//! last-writer-wins resolution and hole-as-zero semantics live in
//! `ros2_core::extent`. Stored checksums are re-verified against the
//! stored bytes on every fetch, so any single-bit corruption of the media
//! surfaces as `MediaCorruption`.
//!
//! Durability: an update is in the manifest (buffered) before the call
//! returns; `flush` is the barrier that makes everything before it
//! crash-proof. Commit order equals manifest order, so replay rebuilds an
//! identical index.

mod manifest;

pub use manifest::{replay, Manifest, Record, Tier};

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};

use ros2_core::blockmap::{blocks_for, BlockMap, BLOCK_SIZE};
use ros2_core::codec::{Reader, Writer};
use ros2_core::crc32c::crc32c;
use ros2_core::extent::{fully_covered, resolve, ExtentRecord, Location, SegmentSource};

use crate::error::StoreError;

pub const POOL_MAGIC: [u8; 8] = *b"ROS2POOL";
pub const POOL_VERSION: u8 = 1;

/// Extents at or below this many bytes land on the SCM tier.
pub const SCM_TIER_MAX: u64 = 4096;

#[derive(Debug, Clone)]
pub struct PoolConfig {
    pub pool_id: u64,
    pub scm_capacity: u64,
    pub nvme_path: PathBuf,
    pub nvme_capacity: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolInfo {
    pub pool_id: u64,
    pub scm_capacity: u64,
    pub nvme_capacity: u64,
    pub block_size: u32,
    pub total_blocks: u32,
}

/// Which tier a payload of `len` bytes goes to.
pub fn tier_place(len: u64) -> &'static str {
    if len <= SCM_TIER_MAX {
        "scm"
    } else {
        "nvme"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Oid {
    pub hi: u64,
    pub lo: u64,
}

struct ContainerState {
    epoch: u64,
    owner_tenant: u64,
    objects: HashMap<Oid, Vec<ExtentRecord>>,
}

struct StoreCore {
    blockmap: BlockMap,
    containers: HashMap<u64, ContainerState>,
    scm: HashMap<u64, Vec<u8>>,
    scm_used: u64,
    next_scm: u64,
    next_container: u64,
}

pub struct FetchResult {
    pub bytes: Vec<u8>,
    /// Epoch the returned image corresponds to.
    pub epoch: u64,
    /// (object offset, length, stored crc) of each contributing extent.
    pub extents: Vec<(u64, u64, u32)>,
}

pub struct Store {
    info: PoolInfo,
    file: File,
    core: RwLock<StoreCore>,
    manifest: Mutex<Manifest>,
}

fn manifest_path(nvme_path: &Path) -> PathBuf {
    let mut os = nvme_path.as_os_str().to_owned();
    os.push(".manifest");
    PathBuf::from(os)
}

fn encode_header(info: &PoolInfo) -> Vec<u8> {
    let mut w = Writer::with_capacity(BLOCK_SIZE as usize);
    w.put_bytes(&POOL_MAGIC)
        .put_u8(POOL_VERSION)
        .put_u32(info.block_size)
        .put_u64(info.nvme_capacity)
        .put_u64(info.scm_capacity)
        .put_u64(info.pool_id);
    let mut block = w.into_vec();
    block.resize(BLOCK_SIZE as usize, 0);
    block
}

fn decode_header(block: &[u8]) -> Result<PoolInfo, StoreError> {
    let mut r = Reader::new(block);
    let magic = r.get_bytes(8).map_err(|_| corrupt("short header"))?;
    if magic != POOL_MAGIC {
        return Err(corrupt("bad pool magic"));
    }
    let version = r.get_u8().map_err(|_| corrupt("short header"))?;
    if version != POOL_VERSION {
        return Err(corrupt("unsupported pool version"));
    }
    let block_size = r.get_u32().map_err(|_| corrupt("short header"))?;
    if block_size as u64 != BLOCK_SIZE {
        return Err(corrupt("unexpected block size"));
    }
    let nvme_capacity = r.get_u64().map_err(|_| corrupt("short header"))?;
    let scm_capacity = r.get_u64().map_err(|_| corrupt("short header"))?;
    let pool_id = r.get_u64().map_err(|_| corrupt("short header"))?;
    Ok(PoolInfo {
        pool_id,
        scm_capacity,
        nvme_capacity,
        block_size,
        total_blocks: (nvme_capacity / BLOCK_SIZE) as u32,
    })
}

fn corrupt(msg: &str) -> StoreError {
    StoreError::Corrupt(msg.to_string())
}

impl Store {
    /// Formats a fresh pool: backing file sized exactly `nvme_capacity`
    /// with the header in block 0, and a manifest seeded with the
    /// pool-create record.
    pub fn create(cfg: &PoolConfig) -> Result<Self, StoreError> {
        if cfg.scm_capacity == 0 || cfg.nvme_capacity == 0 {
            return Err(StoreError::Unaligned);
        }
        if cfg.nvme_capacity % BLOCK_SIZE != 0 {
            return Err(StoreError::Unaligned);
        }
        let total_blocks = (cfg.nvme_capacity / BLOCK_SIZE) as u32;
        if total_blocks < 2 {
            return Err(StoreError::Unaligned);
        }
        let info = PoolInfo {
            pool_id: cfg.pool_id,
            scm_capacity: cfg.scm_capacity,
            nvme_capacity: cfg.nvme_capacity,
            block_size: BLOCK_SIZE as u32,
            total_blocks,
        };
        let mut man = Manifest::create(&manifest_path(&cfg.nvme_path))?;
        let file = OpenOptions::new()
            .create_new(true)
            .read(true)
            .write(true)
            .open(&cfg.nvme_path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    StoreError::Exists
                } else {
                    StoreError::Io(e)
                }
            })?;
        file.set_len(cfg.nvme_capacity)?;
        file.write_all_at(&encode_header(&info), 0)?;
        man.append(&Record::PoolCreate {
            pool_id: info.pool_id,
            scm_capacity: info.scm_capacity,
            nvme_capacity: info.nvme_capacity,
            block_size: info.block_size,
        })?;
        man.sync()?;
        file.sync_data()?;

        let mut blockmap = BlockMap::new(total_blocks);
        blockmap.mark_allocated(0).expect("header block");
        Ok(Self {
            info,
            file,
            core: RwLock::new(StoreCore {
                blockmap,
                containers: HashMap::new(),
                scm: HashMap::new(),
                scm_used: 0,
                next_scm: 1,
                next_container: 1,
            }),
            manifest: Mutex::new(man),
        })
    }

    /// Opens an existing pool, replaying the manifest to rebuild the
    /// extent index, SCM heap, and block allocations.
    pub fn open(nvme_path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new().read(true).write(true).open(nvme_path)?;
        let mut header = vec![0u8; BLOCK_SIZE as usize];
        file.read_exact_at(&mut header, 0)?;
        let info = decode_header(&header)?;
        let meta = file.metadata()?;
        if meta.len() != info.nvme_capacity {
            return Err(corrupt("backing file size does not match header"));
        }

        let (records, man) = replay(&manifest_path(nvme_path))?;
        let mut blockmap = BlockMap::new(info.total_blocks);
        blockmap.mark_allocated(0).expect("header block");
        let mut core = StoreCore {
            blockmap,
            containers: HashMap::new(),
            scm: HashMap::new(),
            scm_used: 0,
            next_scm: 1,
            next_container: 1,
        };

        let mut records = records.into_iter();
        match records.next() {
            Some(Record::PoolCreate {
                pool_id,
                scm_capacity,
                nvme_capacity,
                block_size,
            }) if pool_id == info.pool_id
                && scm_capacity == info.scm_capacity
                && nvme_capacity == info.nvme_capacity
                && block_size == info.block_size => {}
            _ => return Err(corrupt("manifest does not match this pool")),
        }

        for record in records {
            match record {
                Record::PoolCreate { .. } => return Err(corrupt("duplicate pool record")),
                Record::ContCreate {
                    container_id,
                    owner_tenant,
                } => {
                    core.containers.insert(
                        container_id,
                        ContainerState {
                            epoch: 0,
                            owner_tenant,
                            objects: HashMap::new(),
                        },
                    );
                    core.next_container = core.next_container.max(container_id + 1);
                }
                Record::Update {
                    container_id,
                    hi,
                    lo,
                    offset,
                    len,
                    epoch,
                    crc,
                    tier,
                } => {
                    let cont = core
                        .containers
                        .get_mut(&container_id)
                        .ok_or_else(|| corrupt("update before container create"))?;
                    let location = match tier {
                        Tier::Scm(payload) => {
                            let handle = core.next_scm;
                            core.next_scm += 1;
                            core.scm_used += payload.len() as u64;
                            core.scm.insert(handle, payload);
                            Location::Scm { handle }
                        }
                        Tier::Nvme(blocks) => {
                            for &b in &blocks {
                                core.blockmap
                                    .mark_allocated(b)
                                    .map_err(|_| corrupt("block allocated twice"))?;
                            }
                            Location::Nvme { blocks }
                        }
                    };
                    cont.epoch = cont.epoch.max(epoch);
                    cont.objects
                        .entry(Oid { hi, lo })
                        .or_default()
                        .push(ExtentRecord {
                            offset,
                            len,
                            epoch,
                            crc,
                            location,
                        });
                }
                Record::Punch {
                    container_id,
                    hi,
                    lo,
                    offset,
                    len,
                    epoch,
                } => {
                    let cont = core
                        .containers
                        .get_mut(&container_id)
                        .ok_or_else(|| corrupt("punch before container create"))?;
                    cont.epoch = cont.epoch.max(epoch);
                    let extents = cont.objects.entry(Oid { hi, lo }).or_default();
                    reclaim_covered(extents, offset, len, &mut core.blockmap, &mut core.scm, &mut core.scm_used);
                    extents.push(ExtentRecord {
                        offset,
                        len,
                        epoch,
                        crc: 0,
                        location: Location::Punched,
                    });
                }
            }
        }
        // manifest order equals commit order, but keep the invariant
        // explicit for the resolver
        for cont in core.containers.values_mut() {
            for extents in cont.objects.values_mut() {
                extents.sort_by_key(|e| e.epoch);
            }
        }

        Ok(Self {
            info,
            file,
            core: RwLock::new(core),
            manifest: Mutex::new(man),
        })
    }

    /// Opens the pool at `cfg.nvme_path` if it exists, otherwise formats
    /// it.
    pub fn open_or_create(cfg: &PoolConfig) -> Result<Self, StoreError> {
        if manifest_path(&cfg.nvme_path).exists() {
            let store = Self::open(&cfg.nvme_path)?;
            if store.info.nvme_capacity != cfg.nvme_capacity
                || store.info.scm_capacity != cfg.scm_capacity
            {
                return Err(corrupt("existing pool does not match configuration"));
            }
            Ok(store)
        } else {
            Self::create(cfg)
        }
    }

    pub fn info(&self) -> PoolInfo {
        self.info
    }

    pub fn create_container(&self, owner_tenant: u64) -> Result<u64, StoreError> {
        let mut man = self.manifest.lock();
        let mut core = self.core.write();
        let container_id = core.next_container;
        core.next_container += 1;
        core.containers.insert(
            container_id,
            ContainerState {
                epoch: 0,
                owner_tenant,
                objects: HashMap::new(),
            },
        );
        man.append(&Record::ContCreate {
            container_id,
            owner_tenant,
        })?;
        Ok(container_id)
    }

    /// Returns (epoch, owner tenant).
    pub fn container_info(&self, container_id: u64) -> Result<(u64, u64), StoreError> {
        let core = self.core.read();
        let cont = core
            .containers
            .get(&container_id)
            .ok_or(StoreError::UnknownContainer)?;
        Ok((cont.epoch, cont.owner_tenant))
    }

    /// Commits `payload` at `[offset, offset+len)` of the object,
    /// returning the fresh epoch. The payload's CRC32C is verified against
    /// `client_crc` before anything is written (end-to-end wire check).
    pub fn update(
        &self,
        container_id: u64,
        oid: Oid,
        offset: u64,
        payload: &[u8],
        client_crc: u32,
    ) -> Result<u64, StoreError> {
        if payload.is_empty() {
            return Err(StoreError::EmptyPayload);
        }
        let crc = crc32c(payload);
        if crc != client_crc {
            return Err(StoreError::ChecksumMismatch);
        }
        let len = payload.len() as u64;

        if len <= SCM_TIER_MAX {
            let mut man = self.manifest.lock();
            let mut core = self.core.write();
            let scm_capacity = self.info.scm_capacity;
            if !core.containers.contains_key(&container_id) {
                return Err(StoreError::UnknownContainer);
            }
            if core.scm_used + len > scm_capacity {
                return Err(StoreError::NoSpace("scm"));
            }
            let handle = core.next_scm;
            core.next_scm += 1;
            core.scm.insert(handle, payload.to_vec());
            core.scm_used += len;
            let cont = core.containers.get_mut(&container_id).unwrap();
            cont.epoch += 1;
            let epoch = cont.epoch;
            cont.objects.entry(oid).or_default().push(ExtentRecord {
                offset,
                len,
                epoch,
                crc,
                location: Location::Scm { handle },
            });
            man.append(&Record::Update {
                container_id,
                hi: oid.hi,
                lo: oid.lo,
                offset,
                len,
                epoch,
                crc,
                tier: Tier::Scm(payload.to_vec()),
            })?;
            return Ok(epoch);
        }

        // NVMe tier: reserve blocks, write payload outside the index lock,
        // then commit.
        let blocks = {
            let mut core = self.core.write();
            if !core.containers.contains_key(&container_id) {
                return Err(StoreError::UnknownContainer);
            }
            core.blockmap
                .alloc(blocks_for(len))
                .ok_or(StoreError::NoSpace("nvme"))?
        };
        if let Err(e) = self.write_blocks(&blocks, payload) {
            self.core.write().blockmap.free(&blocks).ok();
            return Err(e);
        }

        let mut man = self.manifest.lock();
        let mut core = self.core.write();
        let cont = core.containers.get_mut(&container_id).unwrap();
        cont.epoch += 1;
        let epoch = cont.epoch;
        cont.objects.entry(oid).or_default().push(ExtentRecord {
            offset,
            len,
            epoch,
            crc,
            location: Location::Nvme {
                blocks: blocks.clone(),
            },
        });
        man.append(&Record::Update {
            container_id,
            hi: oid.hi,
            lo: oid.lo,
            offset,
            len,
            epoch,
            crc,
            tier: Tier::Nvme(blocks),
        })?;
        Ok(epoch)
    }

    fn write_blocks(&self, blocks: &[u32], payload: &[u8]) -> Result<(), StoreError> {
        for (i, &block) in blocks.iter().enumerate() {
            let start = i * BLOCK_SIZE as usize;
            let end = (start + BLOCK_SIZE as usize).min(payload.len());
            self.file
                .write_all_at(&payload[start..end], block as u64 * BLOCK_SIZE)?;
        }
        Ok(())
    }

    fn read_extent_payload(&self, core: &StoreCore, ext: &ExtentRecord) -> Result<Vec<u8>, StoreError> {
        match &ext.location {
            Location::Scm { handle } => core
                .scm
                .get(handle)
                .cloned()
                .ok_or_else(|| corrupt("dangling scm handle")),
            Location::Nvme { blocks } => {
                let mut payload = vec![0u8; ext.len as usize];
                for (i, &block) in blocks.iter().enumerate() {
                    let start = i * BLOCK_SIZE as usize;
                    let end = (start + BLOCK_SIZE as usize).min(payload.len());
                    self.file
                        .read_exact_at(&mut payload[start..end], block as u64 * BLOCK_SIZE)?;
                }
                Ok(payload)
            }
            Location::Punched => Ok(vec![0u8; ext.len as usize]),
        }
    }

    /// Reads the byte image of `[offset, offset+len)` as of `at_epoch`
    /// (`u64::MAX` = latest). Unwritten ranges come back as zeros. Every
    /// contributing extent's stored bytes are re-verified against its
    /// stored CRC before a single byte is returned.
    pub fn fetch(
        &self,
        container_id: u64,
        oid: Oid,
        offset: u64,
        len: u64,
        at_epoch: u64,
        strict: bool,
    ) -> Result<FetchResult, StoreError> {
        if len == 0 {
            return Err(StoreError::EmptyPayload);
        }
        let core = self.core.read();
        let cont = core
            .containers
            .get(&container_id)
            .ok_or(StoreError::UnknownContainer)?;
        let extents: &[ExtentRecord] = match cont.objects.get(&oid) {
            Some(list) => list,
            None if strict => return Err(StoreError::UnknownObject),
            None => &[],
        };
        let mut bytes = vec![0u8; len as usize];
        let mut touched: Vec<(u64, u64, u32)> = Vec::new();
        for seg in resolve(extents, offset, len, at_epoch) {
            if let SegmentSource::Extent {
                index,
                inner_offset,
            } = seg.source
            {
                let ext = &extents[index];
                let payload = self.read_extent_payload(&core, ext)?;
                if crc32c(&payload) != ext.crc {
                    return Err(StoreError::MediaCorruption);
                }
                let dst = (seg.start - offset) as usize;
                let src = inner_offset as usize;
                bytes[dst..dst + seg.len as usize]
                    .copy_from_slice(&payload[src..src + seg.len as usize]);
                touched.push((ext.offset, ext.len, ext.crc));
            }
        }
        Ok(FetchResult {
            bytes,
            epoch: at_epoch.min(cont.epoch),
            extents: touched,
        })
    }

    /// Logically zeroes the range at a fresh epoch and reclaims the blocks
    /// and heap bytes of data extents wholly inside it. Reclaimed extents
    /// disappear from every epoch, so snapshot reads of punched history
    /// return zeros.
    pub fn punch(
        &self,
        container_id: u64,
        oid: Oid,
        offset: u64,
        len: u64,
    ) -> Result<u64, StoreError> {
        let mut man = self.manifest.lock();
        let mut core = self.core.write();
        let core = &mut *core;
        let cont = core
            .containers
            .get_mut(&container_id)
            .ok_or(StoreError::UnknownContainer)?;
        let extents = cont.objects.entry(oid).or_default();
        reclaim_covered(
            extents,
            offset,
            len,
            &mut core.blockmap,
            &mut core.scm,
            &mut core.scm_used,
        );
        cont.epoch += 1;
        let epoch = cont.epoch;
        extents.push(ExtentRecord {
            offset,
            len,
            epoch,
            crc: 0,
            location: Location::Punched,
        });
        man.append(&Record::Punch {
            container_id,
            hi: oid.hi,
            lo: oid.lo,
            offset,
            len,
            epoch,
        })?;
        Ok(epoch)
    }

    /// Durability barrier: everything committed before this call survives
    /// a crash once it returns.
    pub fn flush(&self) -> Result<(), StoreError> {
        self.file.sync_data()?;
        self.manifest.lock().sync()?;
        Ok(())
    }

    pub fn allocated_blocks(&self) -> u32 {
        self.core.read().blockmap.allocated()
    }

    pub fn scm_used(&self) -> u64 {
        self.core.read().scm_used
    }

    /// Sum of live NVMe extent footprints in blocks, plus the header
    /// block. Must equal [`Store::allocated_blocks`] at all times.
    pub fn nvme_extent_blocks(&self) -> u32 {
        let core = self.core.read();
        let mut total = 1u32; // header
        for cont in core.containers.values() {
            for extents in cont.objects.values() {
                for ext in extents {
                    if let Location::Nvme { blocks } = &ext.location {
                        total += blocks.len() as u32;
                    }
                }
            }
        }
        total
    }

    /// Fault injection for tests: XORs a byte of a stored SCM payload.
    pub fn debug_corrupt_scm(
        &self,
        container_id: u64,
        oid: Oid,
        epoch: u64,
        byte_index: usize,
        xor_mask: u8,
    ) -> bool {
        let mut core = self.core.write();
        let core = &mut *core;
        let Some(cont) = core.containers.get(&container_id) else {
            return false;
        };
        let Some(extents) = cont.objects.get(&oid) else {
            return false;
        };
        let Some(ext) = extents.iter().find(|e| e.epoch == epoch) else {
            return false;
        };
        let Location::Scm { handle } = ext.location else {
            return false;
        };
        match core.scm.get_mut(&handle) {
            Some(payload) if byte_index < payload.len() => {
                payload[byte_index] ^= xor_mask;
                true
            }
            _ => false,
        }
    }

    /// The backing-file byte range of an NVMe extent, for file-level fault
    /// injection: returns the block list of the extent at `epoch`.
    pub fn debug_nvme_blocks(&self, container_id: u64, oid: Oid, epoch: u64) -> Option<Vec<u32>> {
        let core = self.core.read();
        let extents = core.containers.get(&container_id)?.objects.get(&oid)?;
        let ext = extents.iter().find(|e| e.epoch == epoch)?;
        match &ext.location {
            Location::Nvme { blocks } => Some(blocks.clone()),
            _ => None,
        }
    }
}

fn reclaim_covered(
    extents: &mut Vec<ExtentRecord>,
    offset: u64,
    len: u64,
    blockmap: &mut BlockMap,
    scm: &mut HashMap<u64, Vec<u8>>,
    scm_used: &mut u64,
) {
    let doomed = fully_covered(extents, offset, len);
    for &i in doomed.iter().rev() {
        let ext = extents.remove(i);
        match ext.location {
            Location::Nvme { blocks } => {
                blockmap.free(&blocks).expect("double free in reclaim");
            }
            Location::Scm { handle } => {
                if let Some(payload) = scm.remove(&handle) {
                    *scm_used -= payload.len() as u64;
                }
            }
            Location::Punched => {}
        }
    }
}
