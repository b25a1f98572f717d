//! ros2: an RDMA-style object storage stack at desk scale.
//!
//! The pieces, bottom up:
//!
//! - [`transport`] — the data plane: endpoints, registered memory regions,
//!   queue pairs, one-sided read/write with remote-key validation, two-sided
//!   messaging, and the eager/rendezvous transfer protocol. Two providers
//!   implement the same contract: `stream` (a TCP-analog that buffers and
//!   copies at the target) and `rdmasim` (an RDMA-analog that places bytes
//!   directly into registered buffers).
//! - [`tenancy`] — tenants, shared secrets, capability issuance, and
//!   per-tenant token-bucket rate limiting.
//! - [`store`] — the storage engine core: pools, containers, versioned
//!   checksummed extents across an in-memory SCM tier and a file-backed
//!   NVMe tier, with an append-only manifest for crash recovery.
//! - [`engine`] — the `ros2d` daemon: authenticated RPC sessions on a
//!   control listener, bulk data movement over the data listener.
//! - [`dfs`] — the POSIX-style file layer mapping files and directories
//!   onto objects, with chunk-aligned batched I/O.
//! - [`proxy`] — the offload proxy: a separate process hosting the full
//!   client stack, driven by the host over a payload-free command channel.
//! - [`bench`] — the FIO-style workload driver and CSV reporter.

pub mod auth;
pub mod bench;
pub mod client;
pub mod clock;
pub mod config;
pub mod dfs;
pub mod engine;
pub mod error;
pub mod proxy;
pub mod store;
pub mod tenancy;
pub mod transport;
