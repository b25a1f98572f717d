//! Bitmap allocator over the fixed-size blocks of the NVMe-analog backing
//! file. Block 0 holds the pool header and is pre-allocated at format time.

use alloc::vec;
use alloc::vec::Vec;

pub const BLOCK_SIZE: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockMapError {
    OutOfRange(u32),
    DoubleFree(u32),
    DoubleAlloc(u32),
}

#[derive(Debug, Clone)]
pub struct BlockMap {
    words: Vec<u64>,
    total: u32,
    allocated: u32,
    /// Next-fit scan position; purely a performance hint.
    cursor: u32,
}

impl BlockMap {
    pub fn new(total_blocks: u32) -> Self {
        Self {
            words: vec![0u64; (total_blocks as usize).div_ceil(64)],
            total: total_blocks,
            allocated: 0,
            cursor: 0,
        }
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn allocated(&self) -> u32 {
        self.allocated
    }

    pub fn free_blocks(&self) -> u32 {
        self.total - self.allocated
    }

    pub fn is_allocated(&self, block: u32) -> bool {
        block < self.total && self.words[(block / 64) as usize] & (1u64 << (block % 64)) != 0
    }

    fn set(&mut self, block: u32) {
        self.words[(block / 64) as usize] |= 1u64 << (block % 64);
    }

    fn clear(&mut self, block: u32) {
        self.words[(block / 64) as usize] &= !(1u64 << (block % 64));
    }

    /// Allocate `n` blocks (not necessarily contiguous). Returns block
    /// indices in payload order, or None when the map cannot satisfy the
    /// request; never allocates partially.
    pub fn alloc(&mut self, n: u32) -> Option<Vec<u32>> {
        if n > self.free_blocks() {
            return None;
        }
        let mut out = Vec::with_capacity(n as usize);
        let mut scanned = 0u32;
        let mut pos = self.cursor;
        while (out.len() as u32) < n && scanned <= self.total {
            if pos >= self.total {
                pos = 0;
            }
            if !self.is_allocated(pos) {
                self.set(pos);
                out.push(pos);
            }
            pos += 1;
            scanned += 1;
        }
        if (out.len() as u32) != n {
            // cannot happen while `allocated` is accurate; back out anyway
            for &b in &out {
                self.clear(b);
            }
            return None;
        }
        self.cursor = pos;
        self.allocated += n;
        Some(out)
    }

    /// Mark a specific block allocated (manifest replay path).
    pub fn mark_allocated(&mut self, block: u32) -> Result<(), BlockMapError> {
        if block >= self.total {
            return Err(BlockMapError::OutOfRange(block));
        }
        if self.is_allocated(block) {
            return Err(BlockMapError::DoubleAlloc(block));
        }
        self.set(block);
        self.allocated += 1;
        Ok(())
    }

    pub fn free(&mut self, blocks: &[u32]) -> Result<(), BlockMapError> {
        for &b in blocks {
            if b >= self.total {
                return Err(BlockMapError::OutOfRange(b));
            }
            if !self.is_allocated(b) {
                return Err(BlockMapError::DoubleFree(b));
            }
        }
        for &b in blocks {
            self.clear(b);
        }
        self.allocated -= blocks.len() as u32;
        Ok(())
    }
}

/// Blocks needed to hold `len` payload bytes.
pub fn blocks_for(len: u64) -> u32 {
    len.div_ceil(BLOCK_SIZE) as u32
}
