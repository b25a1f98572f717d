//! Queue pairs: the bidirectional endpoints carrying one-sided operations,
//! two-sided messages, and transfer-protocol frames over one connection.
//!
//! Each side runs a reader thread that services incoming one-sided
//! requests against the local endpoint's security kernel, routes
//! completions back to waiting initiators, and queues messages and
//! transfer notifications. Per-QP FIFO comes from the underlying byte
//! stream plus per-queue ordering here.

use std::collections::{HashMap, VecDeque};
use std::io::Read;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};
use std::sync::{mpsc, Arc, Weak};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

use ros2_core::codec::Reader;
use ros2_core::rpc::{
    Hello, HelloAck, OnesidedCompletion, OnesidedReq, Plane, ProviderKind, RdvNotify, WireStatus,
    XferEager, NONCE_LEN,
};
use ros2_core::security::AccessKind;
use ros2_core::wire::{flags, FrameHeader, FrameType, FRAME_HEADER_LEN};

use super::io::{self, FrameReceiver, FrameSender, IoCounters, Tap};
use super::{
    completion_status, find_endpoint, Completion, CompletionStatus, EndpointInner, MemoryRegion,
    OpKind, TransferPolicy,
};
use crate::error::TransportError;

/// How long an initiator waits for a one-sided completion.
const OP_TIMEOUT: Duration = Duration::from_secs(30);
const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);

const COMPLETION_LEN: usize = 21; // op_id u64 + status u8 + bytes u64 + crc u32
const XFER_HDR_LEN: usize = 36; // xfer_id + sink_key + sink_offset + len + crc

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum QpState {
    Init = 0,
    Ready = 1,
    Error = 2,
}

struct PendingOp {
    tx: mpsc::SyncSender<OnesidedCompletion>,
    /// Destination for a one-sided read's payload.
    read_dst: Option<(Arc<super::RegionBuffer>, u64, u64)>,
}

pub(crate) struct QpInner {
    pub qp_id: u64,
    pub pd_id: u64,
    pub tenant_id: u64,
    pub provider: ProviderKind,
    pub endpoint: Weak<EndpointInner>,
    pub peer_instance: u64,
    pub peer_qp_id: u64,
    state: AtomicU8,
    sender: FrameSender,
    pending: Mutex<HashMap<u64, PendingOp>>,
    pub(crate) recv_q: Mutex<VecDeque<Vec<u8>>>,
    pub(crate) recv_cv: Condvar,
    pub(crate) notify_q: Mutex<VecDeque<RdvNotify>>,
    pub(crate) notify_cv: Condvar,
    next_op: AtomicU64,
    writes_initiated: AtomicU64,
    reads_initiated: AtomicU64,
    eager_dropped: AtomicU64,
}

impl QpInner {
    fn state(&self) -> QpState {
        match self.state.load(Ordering::Acquire) {
            0 => QpState::Init,
            1 => QpState::Ready,
            _ => QpState::Error,
        }
    }

    fn mark_error(&self) {
        self.state.store(QpState::Error as u8, Ordering::Release);
        // fail anyone still waiting
        let mut pending = self.pending.lock();
        for (_, op) in pending.drain() {
            let _ = op.tx.try_send(OnesidedCompletion {
                op_id: 0,
                status: WireStatus::Network,
                bytes: 0,
                crc: 0,
            });
        }
        drop(pending);
        self.recv_cv.notify_all();
        self.notify_cv.notify_all();
    }

    pub(crate) fn push_message(&self, msg: Vec<u8>) {
        self.recv_q.lock().push_back(msg);
        self.recv_cv.notify_one();
    }

    pub(crate) fn push_notify(&self, n: RdvNotify) {
        self.notify_q.lock().push_back(n);
        self.notify_cv.notify_one();
    }
}

/// One side of an established data-plane connection.
#[derive(Clone)]
pub struct QueuePair {
    inner: Arc<QpInner>,
}

impl QueuePair {
    pub fn qp_id(&self) -> u64 {
        self.inner.qp_id
    }

    pub fn tenant_id(&self) -> u64 {
        self.inner.tenant_id
    }

    pub fn provider(&self) -> ProviderKind {
        self.inner.provider
    }

    pub fn state(&self) -> QpState {
        self.inner.state()
    }

    pub fn counters(&self) -> &Arc<IoCounters> {
        &self.inner.sender.counters
    }

    /// One-sided operations initiated from this side, by direction.
    pub fn onesided_counts(&self) -> (u64, u64) {
        (
            self.inner.writes_initiated.load(Ordering::Relaxed),
            self.inner.reads_initiated.load(Ordering::Relaxed),
        )
    }

    pub fn set_tap(&self, tap: Option<Tap>) {
        self.inner.sender.set_tap(tap);
    }

    pub fn close(&self) {
        self.inner.mark_error();
        self.inner.sender.shutdown();
    }

    fn next_op_id(&self) -> u64 {
        self.inner.next_op.fetch_add(1, Ordering::Relaxed)
    }

    fn in_process_peer(&self) -> Option<Arc<EndpointInner>> {
        if self.inner.provider != ProviderKind::RdmaSim {
            return None;
        }
        find_endpoint(self.inner.peer_instance)
    }

    /// Writes `len` bytes from the local region into the remote region
    /// named by `(key, remote_offset)`. All-or-nothing: a denied operation
    /// leaves the target untouched and reports zero bytes.
    pub fn one_sided_write(
        &self,
        src: &MemoryRegion,
        src_offset: u64,
        key: u64,
        remote_offset: u64,
        len: u64,
    ) -> Completion {
        if self.inner.state() != QpState::Ready {
            return Completion::fail(OpKind::Write, WireStatus::Network);
        }
        if src_offset.checked_add(len).map_or(true, |e| e > src.meta.length) {
            return Completion::fail(OpKind::Write, WireStatus::DenyOutOfBounds);
        }
        self.inner.writes_initiated.fetch_add(1, Ordering::Relaxed);

        if let Some(peer) = self.in_process_peer() {
            return match peer.serve_local_write(
                key,
                remote_offset,
                src,
                src_offset,
                len,
                Some(self.inner.tenant_id),
            ) {
                Ok(crc) => Completion::ok(OpKind::Write, len, Some(crc)),
                Err(reason) => Completion::fail(OpKind::Write, reason.into()),
            };
        }

        let op_id = self.next_op_id();
        let (tx, rx) = mpsc::sync_channel(1);
        self.inner.pending.lock().insert(op_id, PendingOp { tx, read_dst: None });
        let req = OnesidedReq {
            op_id,
            key,
            offset: remote_offset,
            len,
        };
        let sent = {
            let guard = src.buffer().bytes.read();
            let payload = &guard[src_offset as usize..(src_offset + len) as usize];
            self.inner
                .sender
                .send(FrameType::OnesidedData, flags::WRITE, &[&req.encode(), payload])
        };
        if sent.is_err() {
            self.inner.pending.lock().remove(&op_id);
            self.inner.mark_error();
            return Completion::fail(OpKind::Write, WireStatus::Network);
        }
        self.await_completion(op_id, rx, OpKind::Write)
    }

    /// Reads `len` bytes from the remote region named by `(key,
    /// remote_offset)` into the local region.
    pub fn one_sided_read(
        &self,
        dst: &MemoryRegion,
        dst_offset: u64,
        key: u64,
        remote_offset: u64,
        len: u64,
    ) -> Completion {
        if self.inner.state() != QpState::Ready {
            return Completion::fail(OpKind::Read, WireStatus::Network);
        }
        if dst_offset.checked_add(len).map_or(true, |e| e > dst.meta.length) {
            return Completion::fail(OpKind::Read, WireStatus::DenyOutOfBounds);
        }
        self.inner.reads_initiated.fetch_add(1, Ordering::Relaxed);

        if let Some(peer) = self.in_process_peer() {
            return match peer.serve_local_read(
                key,
                remote_offset,
                dst,
                dst_offset,
                len,
                Some(self.inner.tenant_id),
            ) {
                Ok(crc) => Completion::ok(OpKind::Read, len, Some(crc)),
                Err(reason) => Completion::fail(OpKind::Read, reason.into()),
            };
        }

        let op_id = self.next_op_id();
        let (tx, rx) = mpsc::sync_channel(1);
        self.inner.pending.lock().insert(
            op_id,
            PendingOp {
                tx,
                read_dst: Some((dst.buffer().clone(), dst_offset, len)),
            },
        );
        let req = OnesidedReq {
            op_id,
            key,
            offset: remote_offset,
            len,
        };
        if self
            .inner
            .sender
            .send(FrameType::OnesidedReadReq, 0, &[&req.encode()])
            .is_err()
        {
            self.inner.pending.lock().remove(&op_id);
            self.inner.mark_error();
            return Completion::fail(OpKind::Read, WireStatus::Network);
        }
        self.await_completion(op_id, rx, OpKind::Read)
    }

    fn await_completion(
        &self,
        op_id: u64,
        rx: mpsc::Receiver<OnesidedCompletion>,
        op: OpKind,
    ) -> Completion {
        match rx.recv_timeout(OP_TIMEOUT) {
            Ok(c) => Completion::from_wire(op, &c),
            Err(_) => {
                self.inner.pending.lock().remove(&op_id);
                Completion::fail(op, WireStatus::Network)
            }
        }
    }

    /// Two-sided send. FIFO per queue pair; delivered intact or not at all.
    pub fn post_send(&self, msg: &[u8]) -> Completion {
        if self.inner.state() != QpState::Ready {
            return Completion::fail(OpKind::Send, WireStatus::Network);
        }
        if let Some(peer) = self.in_process_peer() {
            if let Some(peer_qp) = peer.lookup_qp(self.inner.peer_qp_id) {
                peer_qp.push_message(msg.to_vec());
                return Completion::ok(OpKind::Send, msg.len() as u64, None);
            }
        }
        match self.inner.sender.send(FrameType::EagerData, 0, &[msg]) {
            Ok(()) => Completion::ok(OpKind::Send, msg.len() as u64, None),
            Err(_) => {
                self.inner.mark_error();
                Completion::fail(OpKind::Send, WireStatus::Network)
            }
        }
    }

    /// Blocking two-sided receive.
    pub fn post_recv(&self, timeout: Duration) -> Result<Vec<u8>, TransportError> {
        let deadline = Instant::now() + timeout;
        let mut q = self.inner.recv_q.lock();
        loop {
            if let Some(msg) = q.pop_front() {
                return Ok(msg);
            }
            if self.inner.state() == QpState::Error {
                return Err(TransportError::Closed);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(TransportError::Timeout);
            }
            self.inner.recv_cv.wait_for(&mut q, deadline - now);
        }
    }

    /// Eager/rendezvous transfer into a previously conveyed sink
    /// descriptor `(key, offset, len)`.
    ///
    /// Below the policy threshold the payload rides inline in exactly one
    /// framed message and the target copies it into the sink; otherwise
    /// one one-sided write places it and a zero-payload notification
    /// carries the checksum.
    pub fn transfer(
        &self,
        policy: &TransferPolicy,
        src: &MemoryRegion,
        src_offset: u64,
        len: u64,
        sink: (u64, u64, u64),
    ) -> Result<Completion, TransportError> {
        let (sink_key, sink_offset, sink_len) = sink;
        if sink_len != len {
            return Err(TransportError::Mismatch);
        }
        if self.inner.state() != QpState::Ready {
            return Ok(Completion::fail(OpKind::Write, WireStatus::Network));
        }
        if src_offset.checked_add(len).map_or(true, |e| e > src.meta.length) {
            return Ok(Completion::fail(OpKind::Write, WireStatus::DenyOutOfBounds));
        }

        let xfer_id = self.next_op_id();
        if policy.is_eager(len) {
            let crc = src.crc_local(src_offset, len).unwrap();
            let hdr = XferEager {
                xfer_id,
                sink_key,
                sink_offset,
                len,
                crc,
            };
            if let Some(peer) = self.in_process_peer() {
                // placement still validated at the peer; eager delivery is
                // fire-and-forget so a deny only drops the payload
                match peer.serve_local_write(
                    sink_key,
                    sink_offset,
                    src,
                    src_offset,
                    len,
                    Some(self.inner.tenant_id),
                ) {
                    Ok(_) => {
                        if let Some(peer_qp) = peer.lookup_qp(self.inner.peer_qp_id) {
                            peer_qp.push_notify(RdvNotify { xfer_id, len, crc });
                        }
                    }
                    Err(_) => {
                        self.inner.eager_dropped.fetch_add(1, Ordering::Relaxed);
                    }
                }
                return Ok(Completion::ok(OpKind::Write, len, Some(crc)));
            }
            let guard = src.buffer().bytes.read();
            let payload = &guard[src_offset as usize..(src_offset + len) as usize];
            match self
                .inner
                .sender
                .send(FrameType::EagerData, flags::XFER, &[&hdr.encode(), payload])
            {
                Ok(()) => Ok(Completion::ok(OpKind::Write, len, Some(crc))),
                Err(_) => {
                    self.inner.mark_error();
                    Ok(Completion::fail(OpKind::Write, WireStatus::Network))
                }
            }
        } else {
            let completion = self.one_sided_write(src, src_offset, sink_key, sink_offset, len);
            if completion.is_ok() {
                let notify = RdvNotify {
                    xfer_id,
                    len,
                    crc: completion.checksum.unwrap_or_default(),
                };
                if let Some(peer) = self.in_process_peer() {
                    if let Some(peer_qp) = peer.lookup_qp(self.inner.peer_qp_id) {
                        peer_qp.push_notify(notify);
                    }
                } else if self
                    .inner
                    .sender
                    .send(FrameType::RdvNotify, 0, &[&notify.encode()])
                    .is_err()
                {
                    self.inner.mark_error();
                    return Ok(Completion::fail(OpKind::Write, WireStatus::Network));
                }
            }
            Ok(completion)
        }
    }

    /// Blocks for the next transfer arrival notification (eager or
    /// rendezvous).
    pub fn recv_transfer_notify(&self, timeout: Duration) -> Result<RdvNotify, TransportError> {
        let deadline = Instant::now() + timeout;
        let mut q = self.inner.notify_q.lock();
        loop {
            if let Some(n) = q.pop_front() {
                return Ok(n);
            }
            if self.inner.state() == QpState::Error {
                return Err(TransportError::Closed);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(TransportError::Timeout);
            }
            self.inner.notify_cv.wait_for(&mut q, deadline - now);
        }
    }
}

// ---------------------------------------------------------------------------
// Connection setup
// ---------------------------------------------------------------------------

fn read_frame_raw(stream: &mut TcpStream) -> Result<(FrameHeader, Vec<u8>), TransportError> {
    let mut raw = [0u8; FRAME_HEADER_LEN];
    stream.read_exact(&mut raw)?;
    let header = FrameHeader::decode(&raw)
        .map_err(|e| TransportError::Protocol(format!("handshake: {}", e)))?;
    let mut payload = vec![0u8; header.payload_len as usize];
    stream.read_exact(&mut payload)?;
    Ok((header, payload))
}

fn build_qp(
    endpoint: &Arc<EndpointInner>,
    provider: ProviderKind,
    pd_id: u64,
    tenant_id: u64,
    peer_instance: u64,
    peer_qp_id: u64,
    qp_id: u64,
    sender: FrameSender,
    receiver: FrameReceiver,
) -> QueuePair {
    let inner = Arc::new(QpInner {
        qp_id,
        pd_id,
        tenant_id,
        provider,
        endpoint: Arc::downgrade(endpoint),
        peer_instance,
        peer_qp_id,
        state: AtomicU8::new(QpState::Ready as u8),
        sender,
        pending: Mutex::new(HashMap::new()),
        recv_q: Mutex::new(VecDeque::new()),
        recv_cv: Condvar::new(),
        notify_q: Mutex::new(VecDeque::new()),
        notify_cv: Condvar::new(),
        next_op: AtomicU64::new(1),
        writes_initiated: AtomicU64::new(0),
        reads_initiated: AtomicU64::new(0),
        eager_dropped: AtomicU64::new(0),
    });
    endpoint.qps.lock().insert(qp_id, Arc::downgrade(&inner));
    let reader_qp = inner.clone();
    std::thread::Builder::new()
        .name(format!("qp{}-rx", qp_id))
        .spawn(move || reader_loop(reader_qp, receiver))
        .expect("spawn qp reader");
    QueuePair { inner }
}

/// Listening side of the data plane.
pub struct DataListener {
    listener: TcpListener,
    endpoint: Arc<EndpointInner>,
}

/// An accepted connection whose HELLO has been read but not yet answered.
/// The owner decides whether it becomes a queue pair.
pub struct PendingQp {
    pub hello: Hello,
    stream: TcpStream,
    endpoint: Arc<EndpointInner>,
}

impl DataListener {
    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.listener.local_addr().expect("listener addr")
    }

    /// Polls for an incoming connection; None on timeout.
    pub fn accept_timeout(&self, timeout: Duration) -> Result<Option<PendingQp>, TransportError> {
        let deadline = Instant::now() + timeout;
        loop {
            match self.listener.accept() {
                Ok((mut stream, _)) => {
                    stream.set_nonblocking(false)?;
                    stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT))?;
                    let (header, payload) = read_frame_raw(&mut stream)?;
                    if header.frame_type != FrameType::Hello {
                        return Err(TransportError::Protocol("expected HELLO".into()));
                    }
                    let hello = Hello::decode(&payload)
                        .map_err(|_| TransportError::Protocol("bad HELLO".into()))?;
                    stream.set_read_timeout(None)?;
                    return Ok(Some(PendingQp {
                        hello,
                        stream,
                        endpoint: self.endpoint.clone(),
                    }));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Ok(None);
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

impl PendingQp {
    /// Completes the handshake and brings up a READY queue pair bound to
    /// `tenant_id`'s protection domain.
    pub fn accept(self, pd_id: u64, tenant_id: u64) -> Result<QueuePair, TransportError> {
        let provider = self.hello.provider;
        let endpoint = self.endpoint;
        let qp_id = endpoint.next_qp.fetch_add(1, Ordering::Relaxed);
        let (sender, receiver) = io::split(self.stream, provider)?;
        let ack = HelloAck {
            instance: endpoint.instance,
            id: qp_id,
            nonce: [0u8; NONCE_LEN],
            eager_threshold: 0,
        };
        sender.send(FrameType::HelloAck, 0, &[&ack.encode()])?;
        Ok(build_qp(
            &endpoint,
            provider,
            pd_id,
            tenant_id,
            self.hello.instance,
            self.hello.qp_id,
            qp_id,
            sender,
            receiver,
        ))
    }

    /// Declines the connection with an ERROR frame.
    pub fn reject(self, code: WireStatus, message: &str) {
        if let Ok((sender, _)) = io::split(self.stream, self.hello.provider) {
            let body = ros2_core::rpc::ErrorBody {
                code,
                request_id: 0,
                message: message.to_string(),
            };
            let _ = sender.send(FrameType::Error, 0, &[&body.encode()]);
        }
    }
}

impl super::Endpoint {
    /// Binds a data-plane listener on this endpoint.
    pub fn listen(&self, addr: &str) -> Result<DataListener, TransportError> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(DataListener {
            listener,
            endpoint: self.inner.clone(),
        })
    }

    /// Connects a queue pair to a listening peer. `session_id` and
    /// `attach_key` bind the connection to an authenticated control
    /// session; the peer verifies them before accepting.
    pub fn connect_qp(
        &self,
        addr: &str,
        provider: ProviderKind,
        session_id: u64,
        attach_key: u64,
        pd_id: u64,
        tenant_id: u64,
    ) -> Result<QueuePair, TransportError> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT))?;
        let qp_id = self.inner.next_qp.fetch_add(1, Ordering::Relaxed);
        let hello = Hello {
            plane: Plane::Data,
            provider,
            instance: self.inner.instance,
            id: session_id,
            attach_key,
            qp_id,
        };
        {
            // handshake is raw frame IO; provider flavor starts after
            let header = FrameHeader::new(FrameType::Hello, 0, hello.encode().len() as u32);
            use std::io::Write;
            stream.write_all(&header.encode())?;
            stream.write_all(&hello.encode())?;
        }
        let (header, payload) = read_frame_raw(&mut stream)?;
        match header.frame_type {
            FrameType::HelloAck => {}
            FrameType::Error => {
                let body = ros2_core::rpc::ErrorBody::decode(&payload)
                    .map_err(|_| TransportError::Protocol("bad ERROR frame".into()))?;
                return Err(TransportError::Remote(body.code));
            }
            _ => return Err(TransportError::Protocol("expected HELLO_ACK".into())),
        }
        let ack = HelloAck::decode(&payload)
            .map_err(|_| TransportError::Protocol("bad HELLO_ACK".into()))?;
        stream.set_read_timeout(None)?;
        let (sender, receiver) = io::split(stream, provider)?;
        Ok(build_qp(
            &self.inner,
            provider,
            pd_id,
            tenant_id,
            ack.instance,
            ack.id,
            qp_id,
            sender,
            receiver,
        ))
    }
}

// ---------------------------------------------------------------------------
// Reader loop
// ---------------------------------------------------------------------------

fn reader_loop(qp: Arc<QpInner>, mut rx: FrameReceiver) {
    loop {
        let header = match rx.read_header() {
            Ok(h) => h,
            Err(_) => break,
        };
        let result = handle_frame(&qp, &mut rx, header);
        match result {
            Ok(true) => continue,
            _ => break,
        }
    }
    qp.mark_error();
}

/// Returns Ok(true) to continue, Ok(false) or Err to tear down.
fn handle_frame(
    qp: &Arc<QpInner>,
    rx: &mut FrameReceiver,
    header: FrameHeader,
) -> Result<bool, TransportError> {
    let payload_len = header.payload_len as usize;
    match header.frame_type {
        // incoming one-sided write request
        FrameType::OnesidedData if header.flags & flags::COMPLETION == 0 => {
            if payload_len < OnesidedReq::ENCODED_LEN {
                return Ok(false);
            }
            let mut reqbuf = [0u8; OnesidedReq::ENCODED_LEN];
            rx.read_exact(&mut reqbuf)?;
            let req = OnesidedReq::decode(&reqbuf).map_err(|_| TransportError::Closed)?;
            let data_len = payload_len - OnesidedReq::ENCODED_LEN;
            let endpoint = match qp.endpoint.upgrade() {
                Some(ep) => ep,
                None => return Ok(false),
            };
            if data_len as u64 != req.len {
                rx.discard(data_len)?;
                reply_completion(qp, req.op_id, WireStatus::Mismatch, 0, 0)?;
                return Ok(true);
            }
            match endpoint.validate_with_buffer(
                req.key,
                req.offset,
                req.len,
                AccessKind::Write,
                Some(qp.tenant_id),
            ) {
                Ok((_, buf)) => {
                    let crc = match qp.provider {
                        ProviderKind::Stream => {
                            // TCP analog: payload staged in scratch, then
                            // copied into the registered region
                            let data = rx.read_vec(data_len)?;
                            rx.tap_rx(&header, &data);
                            let mut guard = buf.bytes.write();
                            guard[req.offset as usize..(req.offset + req.len) as usize]
                                .copy_from_slice(&data);
                            ros2_core::crc32c(&data)
                        }
                        ProviderKind::RdmaSim => {
                            // RDMA analog: placed straight into the region
                            let mut guard = buf.bytes.write();
                            let dst =
                                &mut guard[req.offset as usize..(req.offset + req.len) as usize];
                            rx.read_exact(dst)?;
                            ros2_core::crc32c(dst)
                        }
                    };
                    reply_completion(qp, req.op_id, WireStatus::Ok, req.len, crc)?;
                }
                Err(reason) => {
                    rx.discard(data_len)?;
                    reply_completion(qp, req.op_id, WireStatus::from(reason), 0, 0)?;
                }
            }
            Ok(true)
        }
        // incoming one-sided read request
        FrameType::OnesidedReadReq => {
            if payload_len != OnesidedReq::ENCODED_LEN {
                return Ok(false);
            }
            let mut reqbuf = [0u8; OnesidedReq::ENCODED_LEN];
            rx.read_exact(&mut reqbuf)?;
            let req = OnesidedReq::decode(&reqbuf).map_err(|_| TransportError::Closed)?;
            let endpoint = match qp.endpoint.upgrade() {
                Some(ep) => ep,
                None => return Ok(false),
            };
            match endpoint.validate_with_buffer(
                req.key,
                req.offset,
                req.len,
                AccessKind::Read,
                Some(qp.tenant_id),
            ) {
                Ok((_, buf)) => {
                    let guard = buf.bytes.read();
                    let data = &guard[req.offset as usize..(req.offset + req.len) as usize];
                    let completion = OnesidedCompletion {
                        op_id: req.op_id,
                        status: WireStatus::Ok,
                        bytes: req.len,
                        crc: ros2_core::crc32c(data),
                    };
                    qp.sender.send(
                        FrameType::OnesidedData,
                        flags::COMPLETION,
                        &[&completion.encode(), data],
                    )?;
                }
                Err(reason) => {
                    reply_completion(qp, req.op_id, WireStatus::from(reason), 0, 0)?;
                }
            }
            Ok(true)
        }
        // completion for an operation we initiated
        FrameType::OnesidedData => {
            if payload_len < COMPLETION_LEN {
                return Ok(false);
            }
            let mut cbuf = [0u8; COMPLETION_LEN];
            rx.read_exact(&mut cbuf)?;
            let mut r = Reader::new(&cbuf);
            let completion = OnesidedCompletion {
                op_id: r.get_u64().unwrap(),
                status: WireStatus::from_u8(r.get_u8().unwrap()).unwrap_or(WireStatus::Network),
                bytes: r.get_u64().unwrap(),
                crc: r.get_u32().unwrap(),
            };
            let data_len = payload_len - COMPLETION_LEN;
            let pending = qp.pending.lock().remove(&completion.op_id);
            match pending {
                Some(op) => {
                    if let Some((buf, dst_off, want)) = op.read_dst {
                        if completion.status.is_ok() && data_len as u64 == want {
                            let mut guard = buf.bytes.write();
                            let dst = &mut guard[dst_off as usize..(dst_off + want) as usize];
                            rx.read_exact(dst)?;
                        } else {
                            rx.discard(data_len)?;
                        }
                    } else {
                        rx.discard(data_len)?;
                    }
                    let _ = op.tx.try_send(completion);
                }
                None => {
                    // late completion after initiator timeout
                    rx.discard(data_len)?;
                }
            }
            Ok(true)
        }
        // raw two-sided message
        FrameType::EagerData if header.flags & flags::XFER == 0 => {
            let msg = rx.read_vec(payload_len)?;
            rx.tap_rx(&header, &msg);
            qp.push_message(msg);
            Ok(true)
        }
        // eager transfer: place into the sink, notify locally, no reply
        FrameType::EagerData => {
            if payload_len < XFER_HDR_LEN {
                return Ok(false);
            }
            let mut hbuf = [0u8; XFER_HDR_LEN];
            rx.read_exact(&mut hbuf)?;
            let (xfer, _) = XferEager::decode(&hbuf).map_err(|_| TransportError::Closed)?;
            let data_len = payload_len - XFER_HDR_LEN;
            let endpoint = match qp.endpoint.upgrade() {
                Some(ep) => ep,
                None => return Ok(false),
            };
            if data_len as u64 != xfer.len {
                rx.discard(data_len)?;
                return Ok(true);
            }
            match endpoint.validate_with_buffer(
                xfer.sink_key,
                xfer.sink_offset,
                xfer.len,
                AccessKind::Write,
                Some(qp.tenant_id),
            ) {
                Ok((_, buf)) => {
                    match qp.provider {
                        ProviderKind::Stream => {
                            let data = rx.read_vec(data_len)?;
                            let mut guard = buf.bytes.write();
                            guard[xfer.sink_offset as usize..(xfer.sink_offset + xfer.len) as usize]
                                .copy_from_slice(&data);
                        }
                        ProviderKind::RdmaSim => {
                            let mut guard = buf.bytes.write();
                            let dst = &mut guard
                                [xfer.sink_offset as usize..(xfer.sink_offset + xfer.len) as usize];
                            rx.read_exact(dst)?;
                        }
                    }
                    qp.push_notify(RdvNotify {
                        xfer_id: xfer.xfer_id,
                        len: xfer.len,
                        crc: xfer.crc,
                    });
                }
                Err(_) => {
                    qp.eager_dropped.fetch_add(1, Ordering::Relaxed);
                    rx.discard(data_len)?;
                }
            }
            Ok(true)
        }
        FrameType::RdvNotify => {
            let raw = rx.read_vec(payload_len)?;
            let notify = RdvNotify::decode(&raw).map_err(|_| TransportError::Closed)?;
            qp.push_notify(notify);
            Ok(true)
        }
        FrameType::Error => {
            let raw = rx.read_vec(payload_len)?;
            if let Ok(body) = ros2_core::rpc::ErrorBody::decode(&raw) {
                log::warn!("qp{}: peer error {:?}: {}", qp.qp_id, body.code, body.message);
            }
            Ok(true)
        }
        // control/shim frames do not belong on the data plane
        _ => Ok(false),
    }
}

fn reply_completion(
    qp: &Arc<QpInner>,
    op_id: u64,
    status: WireStatus,
    bytes: u64,
    crc: u32,
) -> Result<(), TransportError> {
    let completion = OnesidedCompletion {
        op_id,
        status,
        bytes,
        crc,
    };
    qp.sender
        .send(FrameType::OnesidedData, flags::COMPLETION, &[&completion.encode()])?;
    Ok(())
}

impl From<CompletionStatus> for WireStatus {
    fn from(s: CompletionStatus) -> Self {
        match s {
            CompletionStatus::Ok => WireStatus::Ok,
            CompletionStatus::RemoteAccess => WireStatus::DenyRevoked,
            CompletionStatus::Expired => WireStatus::DenyExpired,
            CompletionStatus::OutOfBounds => WireStatus::DenyOutOfBounds,
            CompletionStatus::Perm => WireStatus::DenyPerm,
            CompletionStatus::Network => WireStatus::Network,
        }
    }
}

impl Completion {
    /// Re-derives spec status fields from a wire completion.
    pub(crate) fn from_wire(op: OpKind, c: &OnesidedCompletion) -> Self {
        if c.status.is_ok() {
            Completion::ok(op, c.bytes, Some(c.crc))
        } else {
            Completion {
                op,
                status: completion_status(c.status),
                detail: c.status,
                bytes: 0,
                checksum: None,
            }
        }
    }
}
