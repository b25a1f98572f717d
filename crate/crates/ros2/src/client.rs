//! Client-side engine session: the control-plane RPC channel (pipelined,
//! responses demultiplexed by request id) plus the data-plane queue pair
//! and a pool of registered buffers for rendezvous transfers.
//!
//! Object fetches at or above the eager threshold hand the engine a
//! short-lived write-scoped capability over a pool buffer and verify the
//! returned checksum against the placed bytes; updates hand out a
//! read-scoped capability and the engine pulls the payload. Tokens are
//! revoked as soon as the operation completes, win or lose.

use std::collections::HashMap;
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use parking_lot::{Condvar, Mutex};

use ros2_core::crc32c::crc32c;
use ros2_core::rpc::{
    self, Hello, HelloAck, ObjFetchReq, ObjFetchResp, ObjId, ObjPunchReq, ObjUpdateReq, OpCode,
    Plane, ProviderKind, UpdateSource, WireStatus,
};
use ros2_core::security::Perms;
use ros2_core::wire::FrameType;

use crate::auth::{connect_proof, Secret};
use crate::clock::Clock;
use crate::error::TransportError;
use crate::transport::{Endpoint, FrameSender, MemoryRegion, QueuePair, Tap};

const RPC_TIMEOUT: Duration = Duration::from_secs(30);
/// Transfer capabilities are short-lived by design.
const TRANSFER_TOKEN_TTL_NS: u64 = 30_000_000_000;

pub struct ClientConfig {
    pub ctrl_addr: String,
    pub data_addr: String,
    pub provider: ProviderKind,
    pub tenant_id: u64,
    pub secret: Secret,
    /// Rendezvous buffer size; the largest single transfer this session
    /// will do (the DFS chunk size).
    pub buffer_len: u64,
    /// Number of rendezvous buffers (bounds transfer concurrency).
    pub buffer_count: usize,
}

type RespSlot = mpsc::SyncSender<(WireStatus, Vec<u8>)>;
type PendingMap = Arc<Mutex<HashMap<u64, RespSlot>>>;

pub struct ClientSession {
    pub tenant_id: u64,
    pub session_id: u64,
    pub provider: ProviderKind,
    pub eager_threshold: u32,
    /// Engine-side staging region granted at CONNECT: (mr_id, rkey, len).
    pub staging: (u64, u64, u64),
    sender: Arc<FrameSender>,
    pending: PendingMap,
    next_req: AtomicU64,
    endpoint: Endpoint,
    pd: u64,
    qp: QueuePair,
    pool: BufferPool,
    op_counts: Mutex<HashMap<u8, u64>>,
}

impl ClientSession {
    /// Connects both planes and authenticates.
    pub fn connect(cfg: &ClientConfig, clock: Clock) -> Result<Arc<Self>, TransportError> {
        let endpoint = Endpoint::new(clock);
        Self::connect_with_endpoint(cfg, endpoint)
    }

    pub fn connect_with_endpoint(
        cfg: &ClientConfig,
        endpoint: Endpoint,
    ) -> Result<Arc<Self>, TransportError> {
        let stream = TcpStream::connect(&cfg.ctrl_addr)?;
        let (sender, mut receiver) = crate::transport::split_stream(stream, cfg.provider)?;
        let hello = Hello {
            plane: Plane::Control,
            provider: cfg.provider,
            instance: endpoint.instance(),
            id: cfg.tenant_id,
            attach_key: 0,
            qp_id: 0,
        };
        sender.send(FrameType::Hello, 0, &[&hello.encode()])?;
        let (header, payload) = receiver
            .recv_owned()
            .map_err(|e| TransportError::Protocol(format!("hello ack: {}", e)))?;
        if header.frame_type != FrameType::HelloAck {
            return Err(TransportError::Protocol("expected HELLO_ACK".into()));
        }
        let ack = HelloAck::decode(&payload)
            .map_err(|_| TransportError::Protocol("bad HELLO_ACK".into()))?;
        let session_id = ack.id;

        let pending: PendingMap = Arc::new(Mutex::new(HashMap::new()));
        let sender = Arc::new(sender);

        // response demultiplexer
        {
            let pending = pending.clone();
            std::thread::Builder::new()
                .name("rpc-demux".into())
                .spawn(move || loop {
                    let (header, payload) = match receiver.recv_owned() {
                        Ok(f) => f,
                        Err(_) => break,
                    };
                    match header.frame_type {
                        FrameType::RpcResp => {
                            if let Ok(resp) = rpc::decode_resp(&payload) {
                                let slot = pending.lock().remove(&resp.request_id);
                                if let Some(tx) = slot {
                                    let _ = tx.try_send((resp.status, resp.body.to_vec()));
                                }
                            }
                        }
                        FrameType::Error => {
                            if let Ok(body) = rpc::ErrorBody::decode(&payload) {
                                if body.request_id != 0 {
                                    let slot = pending.lock().remove(&body.request_id);
                                    if let Some(tx) = slot {
                                        let _ = tx.try_send((body.code, Vec::new()));
                                    }
                                    continue;
                                }
                            }
                            break;
                        }
                        _ => break,
                    }
                })
                .expect("spawn rpc demux");
        }

        // authenticate
        let next_req = AtomicU64::new(1);
        let proof = connect_proof(&cfg.secret, &ack.nonce, cfg.tenant_id, session_id);
        let connect_body = rpc::ConnectReq {
            tenant_id: cfg.tenant_id,
            proof,
        }
        .encode();
        let (status, body) = call_on(&sender, &pending, &next_req, OpCode::Connect, &connect_body, &[])?;
        if !status.is_ok() {
            return Err(TransportError::Remote(status));
        }
        let connect = rpc::ConnectResp::decode(&body)
            .map_err(|_| TransportError::Protocol("bad CONNECT response".into()))?;

        let pd = endpoint.create_pd(cfg.tenant_id);
        let qp = endpoint.connect_qp(
            &cfg.data_addr,
            cfg.provider,
            session_id,
            connect.data_attach_key,
            pd,
            cfg.tenant_id,
        )?;

        let pool = BufferPool::new(
            endpoint.clone(),
            pd,
            cfg.buffer_len.max(1),
            cfg.buffer_count.max(1),
        );

        Ok(Arc::new(Self {
            tenant_id: cfg.tenant_id,
            session_id,
            provider: cfg.provider,
            eager_threshold: ack.eager_threshold,
            staging: (
                connect.staging_mr_id,
                connect.staging_rkey,
                connect.staging_len,
            ),
            sender,
            pending,
            next_req,
            endpoint,
            pd,
            qp,
            pool,
            op_counts: Mutex::new(HashMap::new()),
        }))
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn qp(&self) -> &QueuePair {
        &self.qp
    }

    pub fn pd(&self) -> u64 {
        self.pd
    }

    pub fn pool(&self) -> &BufferPool {
        &self.pool
    }

    /// Requests issued so far, by op code (diagnostics and tests).
    pub fn op_count(&self, op: OpCode) -> u64 {
        *self.op_counts.lock().get(&(op as u8)).unwrap_or(&0)
    }

    pub fn set_ctrl_tap(&self, tap: Option<Tap>) {
        self.sender.set_tap(tap);
    }

    pub fn ctrl_counters(&self) -> (u64, u64, u64, u64) {
        self.sender.counters.snapshot()
    }

    pub fn close(&self) {
        let head = rpc::encode_req_head(OpCode::Close, self.next_req.fetch_add(1, Ordering::Relaxed));
        let _ = self.sender.send(FrameType::RpcReq, 0, &[head.as_slice()]);
        self.qp.close();
        self.sender.shutdown();
    }

    /// Issues a request and waits for its response.
    pub fn call(
        &self,
        op: OpCode,
        body: &[u8],
        payload: &[u8],
    ) -> Result<(WireStatus, Vec<u8>), TransportError> {
        *self.op_counts.lock().entry(op as u8).or_insert(0) += 1;
        call_on(&self.sender, &self.pending, &self.next_req, op, body, payload)
    }

    /// Pipelined issue; the response is claimed later via [`PendingCall`].
    pub fn call_async(
        &self,
        op: OpCode,
        body: &[u8],
        payload: &[u8],
    ) -> Result<PendingCall, TransportError> {
        *self.op_counts.lock().entry(op as u8).or_insert(0) += 1;
        let request_id = self.next_req.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::sync_channel(1);
        self.pending.lock().insert(request_id, tx);
        let mut head = rpc::encode_req_head(op, request_id);
        head.put_bytes(body);
        if let Err(e) = self
            .sender
            .send(FrameType::RpcReq, 0, &[head.as_slice(), payload])
        {
            self.pending.lock().remove(&request_id);
            return Err(e.into());
        }
        Ok(PendingCall {
            request_id,
            rx,
            pending: self.pending.clone(),
        })
    }

    // -- typed helpers ------------------------------------------------------

    pub fn ping(&self, flush: bool) -> Result<(), TransportError> {
        let echo = rand::random::<u64>();
        let (status, body) = self.call(OpCode::Ping, &rpc::PingReq { echo, flush }.encode(), &[])?;
        if !status.is_ok() {
            return Err(TransportError::Remote(status));
        }
        let back = rpc::PingReq::decode(&body)
            .map(|p| p.echo)
            .map_err(|_| TransportError::Protocol("bad PONG".into()))?;
        if back != echo {
            return Err(TransportError::Protocol("PONG echo mismatch".into()));
        }
        Ok(())
    }

    pub fn pool_connect(&self) -> Result<rpc::PoolConnectResp, TransportError> {
        let (status, body) = self.call(OpCode::PoolConnect, &0u64.to_le_bytes(), &[])?;
        if !status.is_ok() {
            return Err(TransportError::Remote(status));
        }
        rpc::PoolConnectResp::decode(&body)
            .map_err(|_| TransportError::Protocol("bad POOL_CONNECT response".into()))
    }

    /// Returns (container_id, epoch).
    pub fn cont_open(&self, container_id: u64, create: bool) -> Result<(u64, u64), TransportError> {
        let req = rpc::ContOpenReq {
            container_id,
            create,
        };
        let (status, body) = self.call(OpCode::ContOpen, &req.encode(), &[])?;
        if !status.is_ok() {
            return Err(TransportError::Remote(status));
        }
        let resp = rpc::ContOpenResp::decode(&body)
            .map_err(|_| TransportError::Protocol("bad CONT_OPEN response".into()))?;
        Ok((resp.container_id, resp.epoch))
    }

    pub fn cap_issue(
        &self,
        mr_id: u64,
        start: u64,
        end: u64,
        perms: u8,
        ttl_ns: u64,
    ) -> Result<rpc::TokenRecord, TransportError> {
        let req = rpc::CapIssueReq {
            mr_id,
            start,
            end,
            perms,
            ttl_ns,
        };
        let (status, body) = self.call(OpCode::CapIssue, &req.encode(), &[])?;
        if !status.is_ok() {
            return Err(TransportError::Remote(status));
        }
        rpc::TokenRecord::decode(&body)
            .map_err(|_| TransportError::Protocol("bad CAP_ISSUE response".into()))
    }

    pub fn cap_revoke(&self, token_id: u64) -> Result<(), TransportError> {
        let req = rpc::CapRevokeReq { token_id };
        let (status, _) = self.call(OpCode::CapRevoke, &req.encode(), &[])?;
        if !status.is_ok() {
            return Err(TransportError::Remote(status));
        }
        Ok(())
    }

    /// Commits one extent, returning its epoch. Below the eager threshold
    /// the payload rides in the request; otherwise the engine pulls it
    /// from a pool buffer via a read-scoped capability.
    pub fn obj_update(&self, oid: ObjId, offset: u64, payload: &[u8]) -> Result<u64, TransportError> {
        self.obj_update_async(oid, offset, payload)?.wait()
    }

    /// Pipelined variant of [`ClientSession::obj_update`].
    pub fn obj_update_async(
        &self,
        oid: ObjId,
        offset: u64,
        payload: &[u8],
    ) -> Result<PendingUpdate, TransportError> {
        let len = payload.len() as u64;
        let checksum = crc32c(payload);
        if len < self.eager_threshold as u64 {
            let req = ObjUpdateReq {
                oid,
                offset,
                len,
                checksum,
                source: UpdateSource::Inline,
            };
            let call = self.call_async(OpCode::ObjUpdate, &req.encode(), payload)?;
            Ok(PendingUpdate { call, guard: None })
        } else {
            let buf = self.pool.checkout();
            buf.region().write_local(0, payload)?;
            let token = self
                .endpoint
                .issue_token(
                    self.tenant_id,
                    buf.region().meta.mr_id,
                    0,
                    len,
                    Perms::READ,
                    TRANSFER_TOKEN_TTL_NS,
                )
                .map_err(|e| TransportError::Protocol(format!("token: {:?}", e)))?;
            let guard = TokenGuard::new(self.endpoint.clone(), token.token_id, buf);
            let req = ObjUpdateReq {
                oid,
                offset,
                len,
                checksum,
                source: UpdateSource::Rendezvous {
                    source_key: token.nonce,
                    source_offset: 0,
                },
            };
            let call = self.call_async(OpCode::ObjUpdate, &req.encode(), &[])?;
            Ok(PendingUpdate {
                call,
                guard: Some(guard),
            })
        }
    }

    /// Reads `[offset, offset+len)` of the object as of `at_epoch`
    /// (`EPOCH_LATEST` for the newest image), verifying the engine's
    /// checksum end-to-end. Returns the bytes and the image epoch.
    pub fn obj_fetch(
        &self,
        oid: ObjId,
        offset: u64,
        len: u64,
        at_epoch: u64,
    ) -> Result<(Vec<u8>, u64), TransportError> {
        self.obj_fetch_async(oid, offset, len, at_epoch)?.wait()
    }

    /// Like fetch but returns only (crc, epoch); rendezvous payloads are
    /// verified in place without a copy out of the pool buffer.
    pub fn obj_fetch_digest(
        &self,
        oid: ObjId,
        offset: u64,
        len: u64,
        at_epoch: u64,
    ) -> Result<(u32, u64), TransportError> {
        self.obj_fetch_async(oid, offset, len, at_epoch)?.wait_digest()
    }

    pub fn obj_fetch_async(
        &self,
        oid: ObjId,
        offset: u64,
        len: u64,
        at_epoch: u64,
    ) -> Result<PendingFetch, TransportError> {
        if len >= self.eager_threshold as u64 {
            let buf = self.pool.checkout();
            let token = self
                .endpoint
                .issue_token(
                    self.tenant_id,
                    buf.region().meta.mr_id,
                    0,
                    len,
                    Perms::WRITE,
                    TRANSFER_TOKEN_TTL_NS,
                )
                .map_err(|e| TransportError::Protocol(format!("token: {:?}", e)))?;
            let guard = TokenGuard::new(self.endpoint.clone(), token.token_id, buf);
            let req = ObjFetchReq {
                oid,
                offset,
                len,
                at_epoch,
                sink: Some((token.nonce, 0)),
            };
            let call = self.call_async(OpCode::ObjFetch, &req.encode(), &[])?;
            Ok(PendingFetch {
                call,
                len,
                guard: Some(guard),
            })
        } else {
            let req = ObjFetchReq {
                oid,
                offset,
                len,
                at_epoch,
                sink: None,
            };
            let call = self.call_async(OpCode::ObjFetch, &req.encode(), &[])?;
            Ok(PendingFetch {
                call,
                len,
                guard: None,
            })
        }
    }

    pub fn obj_punch(&self, oid: ObjId, offset: u64, len: u64) -> Result<u64, TransportError> {
        let req = ObjPunchReq { oid, offset, len };
        let (status, body) = self.call(OpCode::ObjPunch, &req.encode(), &[])?;
        if !status.is_ok() {
            return Err(TransportError::Remote(status));
        }
        rpc::EpochResp::decode(&body)
            .map(|r| r.epoch)
            .map_err(|_| TransportError::Protocol("bad PUNCH response".into()))
    }
}

fn call_on(
    sender: &Arc<FrameSender>,
    pending: &PendingMap,
    next_req: &AtomicU64,
    op: OpCode,
    body: &[u8],
    payload: &[u8],
) -> Result<(WireStatus, Vec<u8>), TransportError> {
    let request_id = next_req.fetch_add(1, Ordering::Relaxed);
    let (tx, rx) = mpsc::sync_channel(1);
    pending.lock().insert(request_id, tx);
    let mut head = rpc::encode_req_head(op, request_id);
    head.put_bytes(body);
    if let Err(e) = sender.send(FrameType::RpcReq, 0, &[head.as_slice(), payload]) {
        pending.lock().remove(&request_id);
        return Err(e.into());
    }
    match rx.recv_timeout(RPC_TIMEOUT) {
        Ok(resp) => Ok(resp),
        Err(_) => {
            pending.lock().remove(&request_id);
            Err(TransportError::Timeout)
        }
    }
}

/// An issued request whose response has not been claimed yet.
pub struct PendingCall {
    request_id: u64,
    rx: mpsc::Receiver<(WireStatus, Vec<u8>)>,
    pending: PendingMap,
}

impl PendingCall {
    pub fn wait(self) -> Result<(WireStatus, Vec<u8>), TransportError> {
        match self.rx.recv_timeout(RPC_TIMEOUT) {
            Ok(resp) => Ok(resp),
            Err(_) => {
                self.pending.lock().remove(&self.request_id);
                Err(TransportError::Timeout)
            }
        }
    }
}

/// Pool buffer plus the capability scoping it; revokes on drop and then
/// returns the buffer to the pool.
struct TokenGuard {
    endpoint: Endpoint,
    token_id: u64,
    buf: PoolBuf,
}

impl TokenGuard {
    fn new(endpoint: Endpoint, token_id: u64, buf: PoolBuf) -> Self {
        Self {
            endpoint,
            token_id,
            buf,
        }
    }

    fn region(&self) -> &MemoryRegion {
        self.buf.region()
    }
}

impl Drop for TokenGuard {
    fn drop(&mut self) {
        self.endpoint.revoke_token(self.token_id);
    }
}

pub struct PendingUpdate {
    call: PendingCall,
    guard: Option<TokenGuard>,
}

impl PendingUpdate {
    pub fn wait(self) -> Result<u64, TransportError> {
        let (status, body) = self.call.wait()?;
        drop(self.guard); // revoke promptly, before error mapping
        if !status.is_ok() {
            return Err(TransportError::Remote(status));
        }
        rpc::EpochResp::decode(&body)
            .map(|r| r.epoch)
            .map_err(|_| TransportError::Protocol("bad UPDATE response".into()))
    }
}

pub struct PendingFetch {
    call: PendingCall,
    len: u64,
    guard: Option<TokenGuard>,
}

impl PendingFetch {
    /// Waits and verifies the end-to-end checksum. `consume` sees either
    /// the validated pool buffer (rendezvous) or the inline bytes.
    fn finish<T>(
        mut self,
        consume: impl FnOnce(Result<&TokenGuard, &[u8]>, &ObjFetchResp) -> Result<T, TransportError>,
    ) -> Result<T, TransportError> {
        let (status, body) = self.call.wait()?;
        if !status.is_ok() {
            return Err(TransportError::Remote(status));
        }
        let (resp, inline) = ObjFetchResp::decode(&body)
            .map_err(|_| TransportError::Protocol("bad FETCH response".into()))?;
        if resp.onesided_len > 0 {
            let guard = self.guard.take().expect("rendezvous fetch without sink");
            if resp.onesided_len != self.len {
                return Err(TransportError::Mismatch);
            }
            let placed_crc = guard.region().crc_local(0, self.len)?;
            if placed_crc != resp.checksum {
                return Err(TransportError::Remote(WireStatus::ChecksumMismatch));
            }
            consume(Ok(&guard), &resp)
        } else {
            if inline.len() as u64 != self.len {
                return Err(TransportError::Mismatch);
            }
            if crc32c(inline) != resp.checksum {
                return Err(TransportError::Remote(WireStatus::ChecksumMismatch));
            }
            consume(Err(inline), &resp)
        }
    }

    pub fn wait(self) -> Result<(Vec<u8>, u64), TransportError> {
        let len = self.len;
        self.finish(|payload, resp| {
            let bytes = match payload {
                Ok(guard) => guard.region().read_local(0, len)?,
                Err(inline) => inline.to_vec(),
            };
            Ok((bytes, resp.epoch))
        })
    }

    /// Digest-only: no copy out of the pool buffer.
    pub fn wait_digest(self) -> Result<(u32, u64), TransportError> {
        self.finish(|_, resp| Ok((resp.checksum, resp.epoch)))
    }
}

// ---------------------------------------------------------------------------
// Registered buffer pool
// ---------------------------------------------------------------------------

struct PoolShared {
    endpoint: Endpoint,
    pd: u64,
    buf_len: u64,
    max: usize,
    state: Mutex<PoolState>,
    cv: Condvar,
}

struct PoolState {
    free: Vec<MemoryRegion>,
    registered: usize,
}

/// Fixed-budget pool of registered rendezvous buffers.
#[derive(Clone)]
pub struct BufferPool {
    shared: Arc<PoolShared>,
}

impl BufferPool {
    pub fn new(endpoint: Endpoint, pd: u64, buf_len: u64, max: usize) -> Self {
        Self {
            shared: Arc::new(PoolShared {
                endpoint,
                pd,
                buf_len,
                max,
                state: Mutex::new(PoolState {
                    free: Vec::new(),
                    registered: 0,
                }),
                cv: Condvar::new(),
            }),
        }
    }

    pub fn buf_len(&self) -> u64 {
        self.shared.buf_len
    }

    /// Blocks until a buffer is available (backpressure on transfer
    /// concurrency).
    pub fn checkout(&self) -> PoolBuf {
        let mut state = self.shared.state.lock();
        loop {
            if let Some(region) = state.free.pop() {
                return PoolBuf {
                    shared: self.shared.clone(),
                    region: Some(region),
                };
            }
            if state.registered < self.shared.max {
                state.registered += 1;
                drop(state);
                let region = self
                    .shared
                    .endpoint
                    .register(self.shared.pd, self.shared.buf_len, Perms::READ_WRITE, 0)
                    .expect("register pool buffer");
                return PoolBuf {
                    shared: self.shared.clone(),
                    region: Some(region),
                };
            }
            self.shared.cv.wait(&mut state);
        }
    }
}

pub struct PoolBuf {
    shared: Arc<PoolShared>,
    region: Option<MemoryRegion>,
}

impl PoolBuf {
    pub fn region(&self) -> &MemoryRegion {
        self.region.as_ref().expect("live pool buffer")
    }
}

impl Drop for PoolBuf {
    fn drop(&mut self) {
        if let Some(region) = self.region.take() {
            let mut state = self.shared.state.lock();
            state.free.push(region);
            self.shared.cv.notify_one();
        }
    }
}
