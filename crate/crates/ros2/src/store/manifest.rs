//! Append-only pool manifest enabling crash-restart reconstruction.
//!
//! Record framing: `body_len u32`, body, `crc u32` (CRC32C of the body).
//! Replay stops at the first torn or corrupt record and truncates the log
//! there, so a crash mid-append can never poison later appends.
//!
//! Bodies (`record_type u8` first):
//!
//! - 0x01 pool-create: pool_id u64, scm_capacity u64, nvme_capacity u64,
//!   block_size u32
//! - 0x02 container-create: container_id u64, owner_tenant u64
//! - 0x03 update: container u64, oid hi/lo u64, offset u64, len u64,
//!   epoch u64, crc u32, tier u8, then tier payload (SCM: the bytes;
//!   NVMe: block count u32 + u32 indices)
//! - 0x04 punch: container u64, oid hi/lo u64, offset u64, len u64,
//!   epoch u64

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use ros2_core::codec::{Reader, Writer};
use ros2_core::crc32c::crc32c;

use crate::error::StoreError;

const REC_POOL_CREATE: u8 = 0x01;
const REC_CONT_CREATE: u8 = 0x02;
const REC_UPDATE: u8 = 0x03;
const REC_PUNCH: u8 = 0x04;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    PoolCreate {
        pool_id: u64,
        scm_capacity: u64,
        nvme_capacity: u64,
        block_size: u32,
    },
    ContCreate {
        container_id: u64,
        owner_tenant: u64,
    },
    Update {
        container_id: u64,
        hi: u64,
        lo: u64,
        offset: u64,
        len: u64,
        epoch: u64,
        crc: u32,
        tier: Tier,
    },
    Punch {
        container_id: u64,
        hi: u64,
        lo: u64,
        offset: u64,
        len: u64,
        epoch: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tier {
    /// Payload carried inline in the record; replay rebuilds the heap.
    Scm(Vec<u8>),
    /// Payload lives in these backing-file blocks.
    Nvme(Vec<u32>),
}

impl Record {
    fn encode_body(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Record::PoolCreate {
                pool_id,
                scm_capacity,
                nvme_capacity,
                block_size,
            } => {
                w.put_u8(REC_POOL_CREATE)
                    .put_u64(*pool_id)
                    .put_u64(*scm_capacity)
                    .put_u64(*nvme_capacity)
                    .put_u32(*block_size);
            }
            Record::ContCreate {
                container_id,
                owner_tenant,
            } => {
                w.put_u8(REC_CONT_CREATE)
                    .put_u64(*container_id)
                    .put_u64(*owner_tenant);
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
                w.put_u8(REC_UPDATE)
                    .put_u64(*container_id)
                    .put_u64(*hi)
                    .put_u64(*lo)
                    .put_u64(*offset)
                    .put_u64(*len)
                    .put_u64(*epoch)
                    .put_u32(*crc);
                match tier {
                    Tier::Scm(payload) => {
                        w.put_u8(0).put_bytes(payload);
                    }
                    Tier::Nvme(blocks) => {
                        w.put_u8(1).put_u32(blocks.len() as u32);
                        for b in blocks {
                            w.put_u32(*b);
                        }
                    }
                }
            }
            Record::Punch {
                container_id,
                hi,
                lo,
                offset,
                len,
                epoch,
            } => {
                w.put_u8(REC_PUNCH)
                    .put_u64(*container_id)
                    .put_u64(*hi)
                    .put_u64(*lo)
                    .put_u64(*offset)
                    .put_u64(*len)
                    .put_u64(*epoch);
            }
        }
        w.into_vec()
    }

    fn decode_body(body: &[u8]) -> Option<Record> {
        let mut r = Reader::new(body);
        match r.get_u8().ok()? {
            REC_POOL_CREATE => Some(Record::PoolCreate {
                pool_id: r.get_u64().ok()?,
                scm_capacity: r.get_u64().ok()?,
                nvme_capacity: r.get_u64().ok()?,
                block_size: r.get_u32().ok()?,
            }),
            REC_CONT_CREATE => Some(Record::ContCreate {
                container_id: r.get_u64().ok()?,
                owner_tenant: r.get_u64().ok()?,
            }),
            REC_UPDATE => {
                let container_id = r.get_u64().ok()?;
                let hi = r.get_u64().ok()?;
                let lo = r.get_u64().ok()?;
                let offset = r.get_u64().ok()?;
                let len = r.get_u64().ok()?;
                let epoch = r.get_u64().ok()?;
                let crc = r.get_u32().ok()?;
                let tier = match r.get_u8().ok()? {
                    0 => Tier::Scm(r.rest().to_vec()),
                    1 => {
                        let count = r.get_u32().ok()? as usize;
                        let mut blocks = Vec::with_capacity(count);
                        for _ in 0..count {
                            blocks.push(r.get_u32().ok()?);
                        }
                        Tier::Nvme(blocks)
                    }
                    _ => return None,
                };
                if matches!(&tier, Tier::Scm(p) if p.len() as u64 != len) {
                    return None;
                }
                Some(Record::Update {
                    container_id,
                    hi,
                    lo,
                    offset,
                    len,
                    epoch,
                    crc,
                    tier,
                })
            }
            REC_PUNCH => Some(Record::Punch {
                container_id: r.get_u64().ok()?,
                hi: r.get_u64().ok()?,
                lo: r.get_u64().ok()?,
                offset: r.get_u64().ok()?,
                len: r.get_u64().ok()?,
                epoch: r.get_u64().ok()?,
            }),
            _ => None,
        }
    }
}

/// Buffered appender. Appends become durable at [`Manifest::sync`].
pub struct Manifest {
    writer: BufWriter<File>,
}

impl Manifest {
    pub fn create(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new()
            .create_new(true)
            .write(true)
            .open(path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    StoreError::Exists
                } else {
                    StoreError::Io(e)
                }
            })?;
        Ok(Self {
            writer: BufWriter::new(file),
        })
    }

    fn open_for_append(path: &Path, valid_len: u64) -> Result<Self, StoreError> {
        let file = OpenOptions::new().write(true).open(path)?;
        // drop any torn tail so future appends start at a clean boundary
        file.set_len(valid_len)?;
        let mut file = file;
        file.seek(SeekFrom::Start(valid_len))?;
        Ok(Self {
            writer: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, record: &Record) -> Result<(), StoreError> {
        let body = record.encode_body();
        self.writer.write_all(&(body.len() as u32).to_le_bytes())?;
        self.writer.write_all(&body)?;
        self.writer.write_all(&crc32c(&body).to_le_bytes())?;
        Ok(())
    }

    /// Durability barrier: flush buffered appends and fsync.
    pub fn sync(&mut self) -> Result<(), StoreError> {
        self.writer.flush()?;
        self.writer.get_ref().sync_data()?;
        Ok(())
    }
}

/// Reads every intact record; returns them plus an appender positioned at
/// the end of the valid prefix.
pub fn replay(path: &Path) -> Result<(Vec<Record>, Manifest), StoreError> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    let mut records = Vec::new();
    let mut pos = 0usize;
    let mut valid_end = 0usize;
    while raw.len() - pos >= 8 {
        let body_len = u32::from_le_bytes(raw[pos..pos + 4].try_into().unwrap()) as usize;
        if raw.len() - pos < 4 + body_len + 4 {
            break; // torn tail
        }
        let body = &raw[pos + 4..pos + 4 + body_len];
        let stored_crc =
            u32::from_le_bytes(raw[pos + 4 + body_len..pos + 8 + body_len].try_into().unwrap());
        if crc32c(body) != stored_crc {
            break; // corrupt record: stop at the last good prefix
        }
        match Record::decode_body(body) {
            Some(rec) => records.push(rec),
            None => break,
        }
        pos += 8 + body_len;
        valid_end = pos;
    }
    let manifest = Manifest::open_for_append(path, valid_end as u64)?;
    Ok((records, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn sample_records() -> Vec<Record> {
        vec![
            Record::PoolCreate {
                pool_id: 1,
                scm_capacity: 1 << 20,
                nvme_capacity: 1 << 22,
                block_size: 4096,
            },
            Record::ContCreate {
                container_id: 1,
                owner_tenant: 9,
            },
            Record::Update {
                container_id: 1,
                hi: 2,
                lo: 3,
                offset: 0,
                len: 5,
                epoch: 1,
                crc: 0xAABB_CCDD,
                tier: Tier::Scm(vec![1, 2, 3, 4, 5]),
            },
            Record::Update {
                container_id: 1,
                hi: 2,
                lo: 3,
                offset: 8192,
                len: 9000,
                epoch: 2,
                crc: 7,
                tier: Tier::Nvme(vec![4, 9, 11]),
            },
            Record::Punch {
                container_id: 1,
                hi: 2,
                lo: 3,
                offset: 0,
                len: 4096,
                epoch: 3,
            },
        ]
    }

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.log");
        let mut m = Manifest::create(&path).unwrap();
        for r in sample_records() {
            m.append(&r).unwrap();
        }
        m.sync().unwrap();
        drop(m);
        let (records, _) = replay(&path).unwrap();
        assert_eq!(records, sample_records());
    }

    #[test]
    fn torn_tail_is_dropped_and_appends_continue() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.log");
        let mut m = Manifest::create(&path).unwrap();
        for r in sample_records() {
            m.append(&r).unwrap();
        }
        m.sync().unwrap();
        drop(m);
        // simulate a crash mid-append
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(&[42u8; 7]).unwrap();
        drop(f);

        let (records, mut m) = replay(&path).unwrap();
        assert_eq!(records.len(), sample_records().len());
        m.append(&Record::ContCreate {
            container_id: 2,
            owner_tenant: 9,
        })
        .unwrap();
        m.sync().unwrap();
        drop(m);
        let (records, _) = replay(&path).unwrap();
        assert_eq!(records.len(), sample_records().len() + 1);
    }

    #[test]
    fn corrupt_record_truncates_suffix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.log");
        let mut m = Manifest::create(&path).unwrap();
        for r in sample_records() {
            m.append(&r).unwrap();
        }
        m.sync().unwrap();
        drop(m);
        // flip one byte in the middle of the third record's body
        let mut raw = std::fs::read(&path).unwrap();
        let flip_at = raw.len() / 2;
        raw[flip_at] ^= 0x01;
        std::fs::write(&path, &raw).unwrap();
        let (records, _) = replay(&path).unwrap();
        assert!(records.len() < sample_records().len());
    }

    #[test]
    fn create_refuses_existing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.log");
        Manifest::create(&path).unwrap();
        assert!(matches!(Manifest::create(&path), Err(StoreError::Exists)));
    }
}
