//! Core primitives for the ros2 storage stack.
//!
//! Everything in this crate is pure logic over byte slices and integers:
//! the wire frame codec, CRC32C, the remote-key security kernel, token-bucket
//! admission, versioned extent resolution, the block bitmap allocator, path
//! and directory-entry handling, and the benchmark math. No sockets, no
//! files, no clocks — callers inject timestamps (monotonic nanoseconds) and
//! key entropy, which keeps every check deterministic and testable.
//!
//! The crate is `no_std` with `alloc` so the same kernel can back an
//! in-process client, the engine daemon, or the offload proxy.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod blockmap;
pub mod codec;
pub mod crc32c;
pub mod dirent;
pub mod extent;
pub mod pathnorm;
pub mod pattern;
pub mod qos;
pub mod rng;
pub mod rpc;
pub mod security;
pub mod stats;
pub mod wire;
pub mod workload;

pub use crc32c::{crc32c, crc32c_append, crc32c_combine};
pub use security::{AccessKind, Decision, DenyReason, SecurityKernel};
pub use wire::{FrameHeader, FrameType, FRAME_HEADER_LEN, FRAME_MAGIC};
