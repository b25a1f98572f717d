//! The data plane: endpoints owning registered memory and a security
//! kernel, queue pairs carrying one-sided and two-sided traffic, and the
//! eager/rendezvous transfer protocol.
//!
//! Addressing is region-relative: a remote peer presents `(key, offset)`
//! and never a virtual address. Every one-sided operation is validated by
//! the target endpoint's security kernel before any byte moves, under the
//! tenant of the queue pair it arrived on.
//!
//! When both ends of an rdmasim queue pair live in one process, one-sided
//! data moves buffer-to-buffer without touching the socket; across
//! processes, payloads are placed into the registered buffer straight from
//! the wire requiring a single copy. The stream provider always moves
//! framed request/response pairs and stages payloads through scratch
//! buffers at the target.

mod io;
mod qp;

pub use io::{FrameReceiver, FrameSender, IoCounters, RecvError, Tap, TapDir, TapRecord};
pub use qp::{DataListener, PendingQp, QueuePair, QpState};

/// Splits a connected stream into provider-flavored framed halves.
pub fn split_stream(
    stream: std::net::TcpStream,
    provider: ProviderKind,
) -> std::io::Result<(FrameSender, FrameReceiver)> {
    io::split(stream, provider)
}

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock, Weak};

use parking_lot::{Mutex, RwLock};

use ros2_core::rng::KeySource;
use ros2_core::rpc::{ProviderKind, WireStatus};
use ros2_core::security::{
    AccessKind, Decision, DenyReason, IssueError, Perms, RegionMeta, RegisterError,
    SecurityKernel, TokenMeta,
};

use crate::clock::Clock;
use crate::error::TransportError;

/// Eager/rendezvous switch. Payloads strictly below the threshold ride
/// inline; at or above it they move via one-sided placement.
#[derive(Debug, Clone, Copy)]
pub struct TransferPolicy {
    pub eager_threshold: u32,
    pub provider: ProviderKind,
}

pub const DEFAULT_EAGER_THRESHOLD: u32 = 16 * 1024;

impl TransferPolicy {
    pub fn new(provider: ProviderKind) -> Self {
        Self {
            eager_threshold: DEFAULT_EAGER_THRESHOLD,
            provider,
        }
    }

    pub fn is_eager(&self, len: u64) -> bool {
        len < self.eager_threshold as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Read,
    Write,
    Send,
    Recv,
}

/// Spec-level completion status; `detail` on [`Completion`] keeps the
/// precise wire reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompletionStatus {
    Ok,
    RemoteAccess,
    Expired,
    OutOfBounds,
    Perm,
    Network,
}

pub fn completion_status(ws: WireStatus) -> CompletionStatus {
    match ws {
        WireStatus::Ok => CompletionStatus::Ok,
        WireStatus::DenyUnknownKey | WireStatus::DenyRevoked => CompletionStatus::RemoteAccess,
        WireStatus::DenyExpired => CompletionStatus::Expired,
        WireStatus::DenyOutOfBounds => CompletionStatus::OutOfBounds,
        WireStatus::DenyPerm => CompletionStatus::Perm,
        _ => CompletionStatus::Network,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completion {
    pub op: OpKind,
    pub status: CompletionStatus,
    pub detail: WireStatus,
    pub bytes: u64,
    pub checksum: Option<u32>,
}

impl Completion {
    pub fn ok(op: OpKind, bytes: u64, checksum: Option<u32>) -> Self {
        Self {
            op,
            status: CompletionStatus::Ok,
            detail: WireStatus::Ok,
            bytes,
            checksum,
        }
    }

    /// Failed completions never report partial byte counts.
    pub fn fail(op: OpKind, detail: WireStatus) -> Self {
        Self {
            op,
            status: completion_status(detail),
            detail,
            bytes: 0,
            checksum: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == CompletionStatus::Ok
    }
}

/// Registered buffer payload. Separate from the kernel's metadata so
/// concurrent operations on distinct regions never contend.
pub struct RegionBuffer {
    pub bytes: RwLock<Vec<u8>>,
}

/// Handle to a registered region: metadata plus the live buffer. Local
/// access goes through the handle; remote access arrives via the keys.
#[derive(Clone)]
pub struct MemoryRegion {
    pub meta: RegionMeta,
    buffer: Arc<RegionBuffer>,
}

impl MemoryRegion {
    pub fn len(&self) -> u64 {
        self.meta.length
    }

    pub fn is_empty(&self) -> bool {
        self.meta.length == 0
    }

    pub fn write_local(&self, offset: u64, data: &[u8]) -> Result<(), TransportError> {
        let end = offset
            .checked_add(data.len() as u64)
            .filter(|&e| e <= self.meta.length)
            .ok_or(TransportError::Mismatch)?;
        let mut guard = self.buffer.bytes.write();
        guard[offset as usize..end as usize].copy_from_slice(data);
        Ok(())
    }

    pub fn read_local(&self, offset: u64, len: u64) -> Result<Vec<u8>, TransportError> {
        let end = offset
            .checked_add(len)
            .filter(|&e| e <= self.meta.length)
            .ok_or(TransportError::Mismatch)?;
        let guard = self.buffer.bytes.read();
        Ok(guard[offset as usize..end as usize].to_vec())
    }

    pub fn crc_local(&self, offset: u64, len: u64) -> Result<u32, TransportError> {
        let end = offset
            .checked_add(len)
            .filter(|&e| e <= self.meta.length)
            .ok_or(TransportError::Mismatch)?;
        let guard = self.buffer.bytes.read();
        Ok(ros2_core::crc32c(&guard[offset as usize..end as usize]))
    }

    /// Snapshot of the whole buffer, for all-or-nothing checks in tests.
    pub fn snapshot(&self) -> Vec<u8> {
        self.buffer.bytes.read().clone()
    }

    pub(crate) fn buffer(&self) -> &Arc<RegionBuffer> {
        &self.buffer
    }
}

// ---------------------------------------------------------------------------
// Endpoint
// ---------------------------------------------------------------------------

pub(crate) struct EndpointInner {
    pub instance: u64,
    pub clock: Clock,
    kernel: Mutex<SecurityKernel>,
    buffers: Mutex<HashMap<u64, Arc<RegionBuffer>>>,
    keys: Mutex<Box<dyn KeySource + Send>>,
    pub(crate) qps: Mutex<HashMap<u64, Weak<qp::QpInner>>>,
    pub(crate) next_qp: AtomicU64,
}

/// A process-local data-plane endpoint: registered memory, its security
/// kernel, and the queue pairs rooted here.
#[derive(Clone)]
pub struct Endpoint {
    pub(crate) inner: Arc<EndpointInner>,
}

impl Endpoint {
    pub fn new(clock: Clock) -> Self {
        Self::with_key_source(clock, Box::new(|| rand::random::<u64>()))
    }

    /// Deterministic key source for tests and differential runs.
    pub fn with_key_source(clock: Clock, keys: Box<dyn KeySource + Send>) -> Self {
        let inner = Arc::new(EndpointInner {
            instance: rand::random::<u64>() | 1,
            clock,
            kernel: Mutex::new(SecurityKernel::new()),
            buffers: Mutex::new(HashMap::new()),
            keys: Mutex::new(keys),
            qps: Mutex::new(HashMap::new()),
            next_qp: AtomicU64::new(1),
        });
        registry().lock().insert(inner.instance, Arc::downgrade(&inner));
        Self { inner }
    }

    pub fn instance(&self) -> u64 {
        self.inner.instance
    }

    pub fn now_ns(&self) -> u64 {
        self.inner.clock.now_ns()
    }

    pub fn create_pd(&self, tenant_id: u64) -> u64 {
        self.inner.kernel.lock().create_pd(tenant_id)
    }

    pub fn register(
        &self,
        pd_id: u64,
        length: u64,
        perms: Perms,
        ttl_ns: u64,
    ) -> Result<MemoryRegion, RegisterError> {
        let meta = {
            let mut kernel = self.inner.kernel.lock();
            let mut keys = self.inner.keys.lock();
            kernel.register_region(
                pd_id,
                length,
                perms,
                ttl_ns,
                self.inner.clock.now_ns(),
                keys.as_mut(),
            )?
        };
        let buffer = Arc::new(RegionBuffer {
            bytes: RwLock::new(vec![0u8; length as usize]),
        });
        self.inner.buffers.lock().insert(meta.mr_id, buffer.clone());
        Ok(MemoryRegion { meta, buffer })
    }

    /// Invalidates the region's keys forever. Existing local handles stay
    /// readable until dropped; remote access denies from now on.
    pub fn deregister(&self, mr_id: u64) -> Result<(), TransportError> {
        self.inner
            .kernel
            .lock()
            .deregister_region(mr_id)
            .map_err(|_| TransportError::Protocol("unknown region".into()))?;
        self.inner.buffers.lock().remove(&mr_id);
        Ok(())
    }

    pub fn issue_token(
        &self,
        tenant_id: u64,
        mr_id: u64,
        start: u64,
        end: u64,
        perms: Perms,
        ttl_ns: u64,
    ) -> Result<TokenMeta, IssueError> {
        let mut kernel = self.inner.kernel.lock();
        let mut keys = self.inner.keys.lock();
        kernel.issue_token(
            tenant_id,
            mr_id,
            start,
            end,
            perms,
            ttl_ns,
            self.inner.clock.now_ns(),
            keys.as_mut(),
        )
    }

    pub fn revoke_token(&self, token_id: u64) -> bool {
        self.inner.kernel.lock().revoke_token(token_id).is_ok()
    }

    /// Revocation gated on token ownership; unknown and foreign tokens
    /// report identically so existence is not leaked.
    pub fn revoke_token_owned(&self, token_id: u64, tenant: u64) -> bool {
        let mut kernel = self.inner.kernel.lock();
        match kernel.token(token_id) {
            Some(t) if t.tenant_id == tenant => kernel.revoke_token(token_id).is_ok(),
            _ => false,
        }
    }

    /// The kernel's decision function, exposed for direct probing.
    pub fn validate(
        &self,
        key: u64,
        offset: u64,
        len: u64,
        kind: AccessKind,
        requester_tenant: Option<u64>,
    ) -> Decision {
        self.inner
            .kernel
            .lock()
            .validate(key, offset, len, kind, requester_tenant, self.inner.clock.now_ns())
    }

    pub fn issued_key_count(&self) -> u64 {
        self.inner.kernel.lock().issued_key_count()
    }
}

impl EndpointInner {
    pub fn now_ns(&self) -> u64 {
        self.clock.now_ns()
    }

    /// Validate and hand back the target buffer in one step.
    pub(crate) fn validate_with_buffer(
        &self,
        key: u64,
        offset: u64,
        len: u64,
        kind: AccessKind,
        requester_tenant: Option<u64>,
    ) -> Result<(u64, Arc<RegionBuffer>), DenyReason> {
        let decision =
            self.kernel
                .lock()
                .validate(key, offset, len, kind, requester_tenant, self.now_ns());
        match decision {
            Decision::Allow { mr_id } => match self.buffers.lock().get(&mr_id) {
                Some(buf) => Ok((mr_id, buf.clone())),
                // deregistered between validation and lookup
                None => Err(DenyReason::Revoked),
            },
            Decision::Deny(reason) => Err(reason),
        }
    }

    /// In-process one-sided write: validate at this (target) endpoint and
    /// place the source bytes. Lock order across distinct buffers follows
    /// the buffer address, so symmetric cross-endpoint storms cannot
    /// deadlock.
    pub(crate) fn serve_local_write(
        self: &Arc<Self>,
        key: u64,
        offset: u64,
        src: &MemoryRegion,
        src_offset: u64,
        len: u64,
        requester_tenant: Option<u64>,
    ) -> Result<u32, DenyReason> {
        let (_, dst_buf) =
            self.validate_with_buffer(key, offset, len, AccessKind::Write, requester_tenant)?;
        Ok(copy_between(
            src.buffer(),
            src_offset as usize,
            &dst_buf,
            offset as usize,
            len as usize,
        ))
    }

    /// In-process one-sided read: validate at this (source) endpoint and
    /// copy out into the initiator's buffer.
    pub(crate) fn serve_local_read(
        self: &Arc<Self>,
        key: u64,
        offset: u64,
        dst: &MemoryRegion,
        dst_offset: u64,
        len: u64,
        requester_tenant: Option<u64>,
    ) -> Result<u32, DenyReason> {
        let (_, src_buf) =
            self.validate_with_buffer(key, offset, len, AccessKind::Read, requester_tenant)?;
        Ok(copy_between(
            &src_buf,
            offset as usize,
            dst.buffer(),
            dst_offset as usize,
            len as usize,
        ))
    }

    pub(crate) fn lookup_qp(&self, qp_id: u64) -> Option<Arc<qp::QpInner>> {
        self.qps.lock().get(&qp_id).and_then(|w| w.upgrade())
    }
}

impl Drop for EndpointInner {
    fn drop(&mut self) {
        registry().lock().remove(&self.instance);
    }
}

/// Copies `len` bytes between registered buffers, returning the CRC32C of
/// the destination slice. Buffer locks are acquired in address order;
/// overlapping self-copies use `copy_within`.
fn copy_between(
    src: &Arc<RegionBuffer>,
    src_off: usize,
    dst: &Arc<RegionBuffer>,
    dst_off: usize,
    len: usize,
) -> u32 {
    if Arc::ptr_eq(src, dst) {
        let mut guard = dst.bytes.write();
        guard.copy_within(src_off..src_off + len, dst_off);
        return ros2_core::crc32c(&guard[dst_off..dst_off + len]);
    }
    let src_addr = Arc::as_ptr(src) as usize;
    let dst_addr = Arc::as_ptr(dst) as usize;
    if src_addr < dst_addr {
        let sg = src.bytes.read();
        let mut dg = dst.bytes.write();
        dg[dst_off..dst_off + len].copy_from_slice(&sg[src_off..src_off + len]);
        ros2_core::crc32c(&dg[dst_off..dst_off + len])
    } else {
        let mut dg = dst.bytes.write();
        let sg = src.bytes.read();
        dg[dst_off..dst_off + len].copy_from_slice(&sg[src_off..src_off + len]);
        ros2_core::crc32c(&dg[dst_off..dst_off + len])
    }
}

// ---------------------------------------------------------------------------
// Process-global endpoint registry (in-process rdmasim path)
// ---------------------------------------------------------------------------

fn registry() -> &'static Mutex<HashMap<u64, Weak<EndpointInner>>> {
    static REGISTRY: OnceLock<Mutex<HashMap<u64, Weak<EndpointInner>>>> = OnceLock::new();
    REGISTRY.get_or_init(|| Mutex::new(HashMap::new()))
}

pub(crate) fn find_endpoint(instance: u64) -> Option<Arc<EndpointInner>> {
    registry().lock().get(&instance).and_then(|w| w.upgrade())
}
