//! Workload shapes for the benchmark driver: deterministic per-job offset
//! sequences over a file, plus the job-spec fields shared between the
//! in-process runner and the proxy's RUNJOB command.

use crate::codec::{Reader, ShortRecord, Writer};
use crate::rng::SplitMix64;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Read,
    Write,
    RandRead,
    RandWrite,
}

impl Pattern {
    pub fn is_write(self) -> bool {
        matches!(self, Pattern::Write | Pattern::RandWrite)
    }

    pub fn is_random(self) -> bool {
        matches!(self, Pattern::RandRead | Pattern::RandWrite)
    }

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Read => "read",
            Pattern::Write => "write",
            Pattern::RandRead => "randread",
            Pattern::RandWrite => "randwrite",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "read" => Pattern::Read,
            "write" => Pattern::Write,
            "randread" => Pattern::RandRead,
            "randwrite" => Pattern::RandWrite,
            _ => return None,
        })
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Pattern::Read,
            1 => Pattern::Write,
            2 => Pattern::RandRead,
            3 => Pattern::RandWrite,
            _ => return None,
        })
    }
}

/// Deterministic block-aligned offset sequence for one job.
///
/// Sequential patterns advance linearly and wrap at the file size; random
/// patterns draw uniformly (with replacement) over aligned positions from
/// the job's seed. `file_size` must be a multiple of `block_size`.
#[derive(Debug, Clone)]
pub struct OffsetSeq {
    block_size: u64,
    blocks: u64,
    random: bool,
    next_seq: u64,
    rng: SplitMix64,
}

impl OffsetSeq {
    pub fn new(pattern: Pattern, block_size: u64, file_size: u64, job_seed: u64) -> Self {
        debug_assert!(block_size > 0 && file_size % block_size == 0 && file_size > 0);
        Self {
            block_size,
            blocks: file_size / block_size,
            random: pattern.is_random(),
            next_seq: 0,
            rng: SplitMix64::new(job_seed),
        }
    }

    pub fn next_offset(&mut self) -> u64 {
        if self.random {
            self.rng.next_below(self.blocks) * self.block_size
        } else {
            let off = self.next_seq * self.block_size;
            self.next_seq = (self.next_seq + 1) % self.blocks;
            off
        }
    }
}

/// The job description exchanged with the proxy and expanded by the
/// runner. One spec describes all jobs; job `i` derives its offsets from
/// `seed + i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobSpec {
    pub pattern: Pattern,
    pub block_size: u64,
    pub jobs: u32,
    pub file_size: u64,
    pub op_count: u64,
    pub seed: u64,
    /// In-flight requests per job; 1 = strictly serial.
    pub depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecError {
    BlockNotDividingFile,
    ZeroField,
}

impl JobSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.block_size == 0
            || self.file_size == 0
            || self.jobs == 0
            || self.op_count == 0
            || self.depth == 0
        {
            return Err(SpecError::ZeroField);
        }
        if self.file_size % self.block_size != 0 {
            return Err(SpecError::BlockNotDividingFile);
        }
        Ok(())
    }

    pub fn job_seed(&self, job_index: u32) -> u64 {
        self.seed.wrapping_add(job_index as u64)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(self.pattern as u8)
            .put_u64(self.block_size)
            .put_u32(self.jobs)
            .put_u64(self.file_size)
            .put_u64(self.op_count)
            .put_u64(self.seed)
            .put_u32(self.depth);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        let pattern = Pattern::from_u8(r.get_u8()?).ok_or(ShortRecord)?;
        Ok(Self {
            pattern,
            block_size: r.get_u64()?,
            jobs: r.get_u32()?,
            file_size: r.get_u64()?,
            op_count: r.get_u64()?,
            seed: r.get_u64()?,
            depth: r.get_u32()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn sequential_wraps() {
        let mut s = OffsetSeq::new(Pattern::Read, 4096, 3 * 4096, 0);
        let offs: Vec<u64> = (0..7).map(|_| s.next_offset()).collect();
        assert_eq!(offs, [0, 4096, 8192, 0, 4096, 8192, 0]);
    }

    #[test]
    fn random_is_aligned_in_range_and_deterministic() {
        let file = 64 * 4096;
        let mut a = OffsetSeq::new(Pattern::RandRead, 4096, file, 42);
        let mut b = OffsetSeq::new(Pattern::RandRead, 4096, file, 42);
        for _ in 0..10_000 {
            let off = a.next_offset();
            assert_eq!(off % 4096, 0);
            assert!(off < file);
            assert_eq!(off, b.next_offset());
        }
        let mut c = OffsetSeq::new(Pattern::RandRead, 4096, file, 43);
        let same: Vec<u64> = (0..16).map(|_| c.next_offset()).collect();
        let mut a2 = OffsetSeq::new(Pattern::RandRead, 4096, file, 42);
        let orig: Vec<u64> = (0..16).map(|_| a2.next_offset()).collect();
        assert_ne!(same, orig, "different seed must give a different trace");
    }

    #[test]
    fn spec_validation() {
        let mut spec = JobSpec {
            pattern: Pattern::Write,
            block_size: 4096,
            jobs: 2,
            file_size: 1 << 20,
            op_count: 100,
            seed: 1,
            depth: 1,
        };
        assert!(spec.validate().is_ok());
        spec.file_size = 4097;
        assert_eq!(
            spec.validate().unwrap_err(),
            SpecError::BlockNotDividingFile
        );
        spec.file_size = 0;
        assert_eq!(spec.validate().unwrap_err(), SpecError::ZeroField);
    }

    #[test]
    fn spec_codec_roundtrip() {
        let spec = JobSpec {
            pattern: Pattern::RandWrite,
            block_size: 1 << 20,
            jobs: 16,
            file_size: 64 << 20,
            op_count: 1000,
            seed: 0xABCD,
            depth: 4,
        };
        assert_eq!(JobSpec::decode(&spec.encode()).unwrap(), spec);
    }
}
