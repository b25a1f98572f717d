//! Directory objects: a directory is one object whose payload is a
//! length-prefixed list of entry records, rewritten at a fresh epoch on
//! every mutation and kept sorted by name so listing order is total and
//! stable across restarts.
//!
//! Payload layout: `count u32`, then per entry: `name (u16 len + bytes)`,
//! `oid_hi u64`, `oid_lo u64`, `kind u8`, `mode u32`, `mtime u64`,
//! `size u64`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::codec::{Reader, ShortRecord, Writer};
use crate::pathnorm::valid_name;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    File = 0,
    Dir = 1,
}

impl EntryKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::File),
            1 => Some(Self::Dir),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirEntry {
    pub name: String,
    pub oid_hi: u64,
    pub oid_lo: u64,
    pub kind: EntryKind,
    pub mode: u32,
    pub mtime: u64,
    pub size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirError {
    Corrupt,
    BadName,
    Exists,
    NotFound,
}

impl From<ShortRecord> for DirError {
    fn from(_: ShortRecord) -> Self {
        Self::Corrupt
    }
}

/// In-memory view of one directory object's entries.
#[derive(Debug, Clone, Default)]
pub struct Directory {
    entries: Vec<DirEntry>, // sorted by name
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DirEntry] {
        &self.entries
    }

    pub fn lookup(&self, name: &str) -> Option<&DirEntry> {
        self.entries
            .binary_search_by(|e| e.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn insert(&mut self, entry: DirEntry) -> Result<(), DirError> {
        if !valid_name(&entry.name) {
            return Err(DirError::BadName);
        }
        match self
            .entries
            .binary_search_by(|e| e.name.as_str().cmp(&entry.name))
        {
            Ok(_) => Err(DirError::Exists),
            Err(pos) => {
                self.entries.insert(pos, entry);
                Ok(())
            }
        }
    }

    pub fn update(&mut self, entry: DirEntry) -> Result<(), DirError> {
        match self
            .entries
            .binary_search_by(|e| e.name.as_str().cmp(&entry.name))
        {
            Ok(pos) => {
                self.entries[pos] = entry;
                Ok(())
            }
            Err(_) => Err(DirError::NotFound),
        }
    }

    pub fn remove(&mut self, name: &str) -> Result<DirEntry, DirError> {
        match self.entries.binary_search_by(|e| e.name.as_str().cmp(name)) {
            Ok(pos) => Ok(self.entries.remove(pos)),
            Err(_) => Err(DirError::NotFound),
        }
    }

    /// Serialized payload written back to the directory object. A leading
    /// u32 length makes the object self-describing, so readers never need
    /// to know the directory's size in advance.
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Writer::new();
        body.put_u32(self.entries.len() as u32);
        for e in &self.entries {
            body.put_str(&e.name);
            body.put_u64(e.oid_hi);
            body.put_u64(e.oid_lo);
            body.put_u8(e.kind as u8);
            body.put_u32(e.mode);
            body.put_u64(e.mtime);
            body.put_u64(e.size);
        }
        let mut out = Writer::with_capacity(body.len() + 4);
        out.put_u32(body.len() as u32);
        out.put_bytes(body.as_slice());
        out.into_vec()
    }

    /// Parses a directory object image. `raw` may extend past the encoded
    /// payload (objects read back in block-sized units); an all-zero image
    /// is an empty directory.
    pub fn decode(raw: &[u8]) -> Result<Self, DirError> {
        let mut r = Reader::new(raw);
        let body_len = match r.get_u32() {
            Ok(n) => n as usize,
            Err(_) => return Ok(Self::new()), // shorter than the prefix: empty
        };
        if body_len == 0 {
            return Ok(Self::new());
        }
        let body = r.get_bytes(body_len)?;
        let mut r = Reader::new(body);
        let count = r.get_u32()?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name = r.get_string()?;
            let oid_hi = r.get_u64()?;
            let oid_lo = r.get_u64()?;
            let kind = EntryKind::from_u8(r.get_u8()?).ok_or(DirError::Corrupt)?;
            let mode = r.get_u32()?;
            let mtime = r.get_u64()?;
            let size = r.get_u64()?;
            entries.push(DirEntry {
                name,
                oid_hi,
                oid_lo,
                kind,
                mode,
                mtime,
                size,
            });
        }
        let dir = Self { entries };
        // listing order is part of the format
        if !dir
            .entries
            .windows(2)
            .all(|w| w[0].name.as_str() < w[1].name.as_str())
        {
            return Err(DirError::Corrupt);
        }
        Ok(dir)
    }

    /// Encoded size of the payload produced by [`Directory::encode`].
    pub fn encoded_len(&self) -> usize {
        8 + self
            .entries
            .iter()
            .map(|e| 2 + e.name.len() + 8 + 8 + 1 + 4 + 8 + 8)
            .sum::<usize>()
    }
}
