//! The storage-server daemon: a control listener speaking the framed RPC
//! protocol and a data listener carrying one-sided bulk traffic.
//!
//! Session flow: HELLO/HELLO_ACK hands out a session id and an auth nonce;
//! CONNECT proves the tenant secret (HMAC over nonce, tenant, session) and
//! unlocks the object RPCs plus a data-plane attach key. Object payloads
//! below the eager threshold ride inline in RPC frames; larger transfers
//! move via one-sided operations against capability-scoped client buffers,
//! so control frames never carry bulk payload bytes.
//!
//! Metadata RPCs are answered in arrival order by the session thread;
//! object RPCs run on a small per-session worker pool and may complete out
//! of order (responses carry request ids).

use std::collections::HashMap;
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use parking_lot::Mutex;

use ros2_core::qos::{Admission, QosBucket, QosError};
use ros2_core::rpc::{
    self, Hello, HelloAck, ObjId as WireOid, OpCode, Plane, ProviderKind, UpdateSource,
    WireStatus, NONCE_LEN,
};
use ros2_core::security::{IssueError, Perms};
use ros2_core::wire::{FrameType, MAX_FRAME_PAYLOAD};

use crate::auth::verify_proof;
use crate::clock::Clock;
use crate::config::{ConfigError, KvFile};
use crate::error::{StoreError, TransportError};
use crate::store::{Oid, PoolConfig, Store};
use crate::tenancy::TenantRegistry;
use crate::transport::{
    split_stream, Completion, DataListener, Endpoint, FrameSender, MemoryRegion, QueuePair,
};

pub const DEFAULT_EAGER_THRESHOLD: u32 = 16 * 1024;
const STAGING_LEN: u64 = 1 << 20;
const ACCEPT_POLL: Duration = Duration::from_millis(50);

/// Largest single object I/O the engine accepts (guards allocation).
pub const MAX_IO_LEN: u64 = 8 << 20;

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub listen_ctrl: String,
    pub listen_data: String,
    pub scm_bytes: u64,
    pub nvme_path: PathBuf,
    pub nvme_bytes: u64,
    pub providers: Vec<ProviderKind>,
    pub eager_threshold: u32,
    pub session_workers: usize,
}

impl EngineConfig {
    /// Parses the `key = value` daemon config; returns the engine config
    /// and the tenant registry it references.
    pub fn from_kv(kv: &KvFile) -> Result<(Self, TenantRegistry), ConfigError> {
        let providers = kv
            .get("provider")
            .unwrap_or("stream,rdmasim")
            .split(',')
            .map(|s| {
                ProviderKind::parse(s.trim()).ok_or(ConfigError {
                    message: format!("unknown provider '{}'", s),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let tenants = match kv.get("tenants") {
            Some(path) => TenantRegistry::load(std::path::Path::new(path))?,
            None => TenantRegistry::new(),
        };
        Ok((
            Self {
                listen_ctrl: kv.require("listen_ctrl")?.to_string(),
                listen_data: kv.require("listen_data")?.to_string(),
                scm_bytes: kv.get_u64("pool.scm_bytes")?.unwrap_or(64 << 20),
                nvme_path: PathBuf::from(kv.require("pool.nvme_path")?),
                nvme_bytes: kv.get_u64("pool.nvme_bytes")?.unwrap_or(256 << 20),
                eager_threshold: kv.get_u64("eager_threshold")?.unwrap_or(DEFAULT_EAGER_THRESHOLD as u64)
                    as u32,
                session_workers: kv.get_usize("session_workers")?.unwrap_or(4),
                providers,
            },
            tenants,
        ))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("bind failure: {0}")]
    Bind(std::io::Error),
    #[error("pool: {0}")]
    Pool(#[from] StoreError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

struct Session {
    id: u64,
    provider: ProviderKind,
    nonce: [u8; NONCE_LEN],
    tenant_id: AtomicU64,
    authed: AtomicBool,
    attach_key: AtomicU64,
    qp: Mutex<Option<QueuePair>>,
    sender: Arc<FrameSender>,
}

impl Session {
    fn tenant(&self) -> u64 {
        self.tenant_id.load(Ordering::Acquire)
    }

    fn is_authed(&self) -> bool {
        self.authed.load(Ordering::Acquire)
    }
}

struct EngineState {
    cfg: EngineConfig,
    store: Store,
    tenants: TenantRegistry,
    endpoint: Endpoint,
    sessions: Mutex<HashMap<u64, Arc<Session>>>,
    next_session: AtomicU64,
    qos: Mutex<HashMap<u64, QosBucket>>,
    /// tenant -> (pd on the engine endpoint, staging region)
    tenant_pds: Mutex<HashMap<u64, (u64, MemoryRegion)>>,
    clock: Clock,
    shutdown: AtomicBool,
}

/// A running engine. Dropping the handle does not stop the daemon; call
/// [`EngineHandle::shutdown`].
pub struct EngineHandle {
    pub ctrl_addr: String,
    pub data_addr: String,
    state: Arc<EngineState>,
    threads: Mutex<Vec<std::thread::JoinHandle<()>>>,
}

impl EngineHandle {
    pub fn shutdown(&self) {
        self.state.shutdown.store(true, Ordering::SeqCst);
        for t in self.threads.lock().drain(..) {
            let _ = t.join();
        }
        let _ = self.state.store.flush();
    }

    pub fn store(&self) -> &Store {
        &self.state.store
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.state.endpoint
    }
}

/// Binds both listeners, opens (or formats) the pool, and serves until
/// shutdown.
pub fn start(
    cfg: EngineConfig,
    tenants: TenantRegistry,
    clock: Clock,
) -> Result<EngineHandle, EngineError> {
    let store = Store::open_or_create(&PoolConfig {
        pool_id: 1,
        scm_capacity: cfg.scm_bytes,
        nvme_path: cfg.nvme_path.clone(),
        nvme_capacity: cfg.nvme_bytes,
    })?;
    let ctrl_listener = TcpListener::bind(&cfg.listen_ctrl).map_err(EngineError::Bind)?;
    ctrl_listener.set_nonblocking(true).map_err(EngineError::Bind)?;
    let endpoint = Endpoint::new(clock.clone());
    let data_listener = endpoint
        .listen(&cfg.listen_data)
        .map_err(|e| match e {
            TransportError::Io(io) => EngineError::Bind(io),
            other => EngineError::Bind(std::io::Error::other(other.to_string())),
        })?;

    let ctrl_addr = ctrl_listener.local_addr()?.to_string();
    let data_addr = data_listener.local_addr().to_string();

    let state = Arc::new(EngineState {
        cfg,
        store,
        tenants,
        endpoint,
        sessions: Mutex::new(HashMap::new()),
        next_session: AtomicU64::new(1),
        qos: Mutex::new(HashMap::new()),
        tenant_pds: Mutex::new(HashMap::new()),
        clock,
        shutdown: AtomicBool::new(false),
    });

    let mut threads = Vec::new();
    {
        let state = state.clone();
        threads.push(
            std::thread::Builder::new()
                .name("ctrl-accept".into())
                .spawn(move || ctrl_accept_loop(state, ctrl_listener))
                .expect("spawn ctrl accept"),
        );
    }
    {
        let state = state.clone();
        threads.push(
            std::thread::Builder::new()
                .name("data-accept".into())
                .spawn(move || data_accept_loop(state, data_listener))
                .expect("spawn data accept"),
        );
    }

    log::info!("engine ready ctrl={} data={}", ctrl_addr, data_addr);
    Ok(EngineHandle {
        ctrl_addr,
        data_addr,
        state,
        threads: Mutex::new(threads),
    })
}

fn ctrl_accept_loop(state: Arc<EngineState>, listener: TcpListener) {
    while !state.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let _ = stream.set_nonblocking(false);
                let state = state.clone();
                std::thread::Builder::new()
                    .name("ctrl-session".into())
                    .spawn(move || {
                        if let Err(e) = ctrl_session(state, stream) {
                            log::debug!("session ended: {}", e);
                        }
                    })
                    .expect("spawn session");
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(ACCEPT_POLL);
            }
            Err(_) => break,
        }
    }
}

fn data_accept_loop(state: Arc<EngineState>, listener: DataListener) {
    while !state.shutdown.load(Ordering::SeqCst) {
        match listener.accept_timeout(ACCEPT_POLL) {
            Ok(Some(pending)) => {
                let hello = pending.hello.clone();
                if hello.plane != Plane::Data {
                    pending.reject(WireStatus::BadRequest, "expected data-plane HELLO");
                    continue;
                }
                let session = state.sessions.lock().get(&hello.id).cloned();
                let Some(session) = session else {
                    pending.reject(WireStatus::AuthFailed, "unknown session");
                    continue;
                };
                if !session.is_authed()
                    || session.attach_key.load(Ordering::Acquire) != hello.attach_key
                    || session.provider != hello.provider
                    || session.qp.lock().is_some()
                {
                    pending.reject(WireStatus::AuthFailed, "attach rejected");
                    continue;
                }
                let tenant = session.tenant();
                let (pd, _) = state.tenant_resources(tenant);
                match pending.accept(pd, tenant) {
                    Ok(qp) => {
                        *session.qp.lock() = Some(qp);
                    }
                    Err(e) => log::warn!("data attach failed: {}", e),
                }
            }
            Ok(None) => {}
            Err(e) => {
                log::debug!("data accept: {}", e);
            }
        }
    }
}

impl EngineState {
    /// PD and staging region for a tenant on the engine endpoint,
    /// creating them on first use.
    fn tenant_resources(&self, tenant: u64) -> (u64, MemoryRegion) {
        let mut pds = self.tenant_pds.lock();
        if let Some((pd, mr)) = pds.get(&tenant) {
            return (*pd, mr.clone());
        }
        let pd = self.endpoint.create_pd(tenant);
        let staging = self
            .endpoint
            .register(pd, STAGING_LEN, Perms::READ_WRITE, 0)
            .expect("register staging region");
        pds.insert(tenant, (pd, staging.clone()));
        (pd, staging)
    }

    /// Token-bucket admission; sleeps out any delay. Returns an error
    /// status for oversized requests.
    fn qos_admit(&self, tenant: u64, bytes: u64) -> Result<(), WireStatus> {
        let limit = match self.tenants.get(tenant).and_then(|t| t.qos) {
            Some(limit) => limit,
            None => return Ok(()),
        };
        loop {
            let now = self.clock.now_ns();
            let mut qos = self.qos.lock();
            let bucket = qos
                .entry(tenant)
                .or_insert_with(|| QosBucket::new(tenant, limit.0, limit.1, now));
            match bucket.admit(bytes, now) {
                Ok(Admission::Admit) => return Ok(()),
                Ok(Admission::Delay { until_ns }) => {
                    drop(qos);
                    let wait = until_ns.saturating_sub(self.clock.now_ns());
                    std::thread::sleep(Duration::from_nanos(wait.min(50_000_000)));
                }
                Err(QosError::Oversized) | Err(QosError::ZeroRate) => {
                    return Err(WireStatus::QosOversized)
                }
            }
        }
    }
}

type Job = (OpCode, u64, Vec<u8>);

fn ctrl_session(state: Arc<EngineState>, stream: std::net::TcpStream) -> Result<(), TransportError> {
    // HELLO arrives unflavored
    let mut raw_stream = stream;
    let (header, payload) = read_raw_frame(&mut raw_stream)?;
    if header.frame_type != FrameType::Hello {
        return Err(TransportError::Protocol("expected HELLO".into()));
    }
    let hello =
        Hello::decode(&payload).map_err(|_| TransportError::Protocol("bad HELLO".into()))?;
    if hello.plane != Plane::Control {
        return Err(TransportError::Protocol("expected control HELLO".into()));
    }
    if !state.cfg.providers.contains(&hello.provider) {
        let (sender, _) = split_stream(raw_stream, hello.provider)?;
        let body = rpc::ErrorBody {
            code: WireStatus::Unsupported,
            request_id: 0,
            message: "provider not enabled".into(),
        };
        let _ = sender.send(FrameType::Error, 0, &[&body.encode()]);
        return Ok(());
    }

    let (sender, mut receiver) = split_stream(raw_stream, hello.provider)?;
    let sender = Arc::new(sender);
    let session_id = state.next_session.fetch_add(1, Ordering::Relaxed);
    let mut nonce = [0u8; NONCE_LEN];
    for chunk in nonce.chunks_mut(8) {
        chunk.copy_from_slice(&rand::random::<u64>().to_le_bytes()[..chunk.len()]);
    }
    let session = Arc::new(Session {
        id: session_id,
        provider: hello.provider,
        nonce,
        tenant_id: AtomicU64::new(hello.id),
        authed: AtomicBool::new(false),
        attach_key: AtomicU64::new(0),
        qp: Mutex::new(None),
        sender: sender.clone(),
    });
    state.sessions.lock().insert(session_id, session.clone());

    let ack = HelloAck {
        instance: state.endpoint.instance(),
        id: session_id,
        nonce,
        eager_threshold: state.cfg.eager_threshold,
    };
    sender.send(FrameType::HelloAck, 0, &[&ack.encode()])?;

    // lazily started worker pool for object RPCs
    let (job_tx, job_rx) = mpsc::channel::<Job>();
    let job_rx = Arc::new(Mutex::new(job_rx));
    let mut workers_started = false;

    let result = loop {
        let (header, payload) = match receiver.recv_owned() {
            Ok(f) => f,
            Err(_) => break Ok(()), // disconnect or malformed: close silently
        };
        if header.frame_type != FrameType::RpcReq {
            break Ok(()); // protocol violation: close without response
        }
        let envelope = match rpc::decode_req(&payload) {
            Ok(Ok(env)) => env,
            Ok(Err((_, request_id))) => {
                // unknown op code: ERROR frame with UNSUPPORTED
                let body = rpc::ErrorBody {
                    code: WireStatus::Unsupported,
                    request_id,
                    message: "unsupported op".into(),
                };
                let _ = sender.send(FrameType::Error, 0, &[&body.encode()]);
                continue;
            }
            Err(_) => break Ok(()), // malformed envelope: close
        };
        let op = envelope.op;
        let request_id = envelope.request_id;
        if op.is_bulk() {
            if !workers_started {
                for i in 0..state.cfg.session_workers.max(1) {
                    let state = state.clone();
                    let session = session.clone();
                    let rx = job_rx.clone();
                    std::thread::Builder::new()
                        .name(format!("s{}w{}", session_id, i))
                        .spawn(move || loop {
                            let job = {
                                let rx = rx.lock();
                                rx.recv()
                            };
                            match job {
                                Ok((op, request_id, payload)) => {
                                    handle_bulk(&state, &session, op, request_id, &payload);
                                }
                                Err(_) => break,
                            }
                        })
                        .expect("spawn session worker");
                }
                workers_started = true;
            }
            // body slice offsets survive via the owned frame payload
            job_tx
                .send((op, request_id, payload.clone()))
                .expect("queue job");
            continue;
        }
        match handle_metadata(&state, &session, op, request_id, envelope.body) {
            ControlFlow::Continue => {}
            ControlFlow::Close => break Ok(()),
        }
    };

    state.sessions.lock().remove(&session_id);
    if let Some(qp) = session.qp.lock().take() {
        qp.close();
    }
    result
}

enum ControlFlow {
    Continue,
    Close,
}

fn send_resp(
    sender: &FrameSender,
    op: OpCode,
    request_id: u64,
    status: WireStatus,
    body: &[u8],
    payload: &[u8],
) {
    let mut head = rpc::encode_resp_head(op, request_id, status);
    head.put_bytes(body);
    let _ = sender.send(FrameType::RpcResp, 0, &[head.as_slice(), payload]);
}

fn handle_metadata(
    state: &Arc<EngineState>,
    session: &Arc<Session>,
    op: OpCode,
    request_id: u64,
    body: &[u8],
) -> ControlFlow {
    let sender = &session.sender;
    match op {
        OpCode::Connect => {
            let Ok(req) = rpc::ConnectReq::decode(body) else {
                send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                return ControlFlow::Continue;
            };
            let Some(tenant) = state.tenants.get(req.tenant_id) else {
                send_resp(sender, op, request_id, WireStatus::UnknownTenant, &[], &[]);
                return ControlFlow::Continue;
            };
            if !verify_proof(
                &tenant.secret,
                &session.nonce,
                req.tenant_id,
                session.id,
                &req.proof,
            ) {
                send_resp(sender, op, request_id, WireStatus::AuthFailed, &[], &[]);
                return ControlFlow::Close;
            }
            session.tenant_id.store(req.tenant_id, Ordering::Release);
            let attach_key = rand::random::<u64>() | 1;
            session.attach_key.store(attach_key, Ordering::Release);
            session.authed.store(true, Ordering::Release);
            let (_, staging) = state.tenant_resources(req.tenant_id);
            let resp = rpc::ConnectResp {
                session_id: session.id,
                data_attach_key: attach_key,
                staging_mr_id: staging.meta.mr_id,
                staging_rkey: staging.meta.rkey,
                staging_len: staging.meta.length,
            };
            send_resp(sender, op, request_id, WireStatus::Ok, &resp.encode(), &[]);
            ControlFlow::Continue
        }
        OpCode::PoolConnect => {
            if !session.is_authed() {
                send_resp(sender, op, request_id, WireStatus::NotAuthed, &[], &[]);
                return ControlFlow::Continue;
            }
            let info = state.store.info();
            let resp = rpc::PoolConnectResp {
                pool_id: info.pool_id,
                scm_capacity: info.scm_capacity,
                nvme_capacity: info.nvme_capacity,
                block_size: info.block_size,
            };
            send_resp(sender, op, request_id, WireStatus::Ok, &resp.encode(), &[]);
            ControlFlow::Continue
        }
        OpCode::ContOpen => {
            if !session.is_authed() {
                send_resp(sender, op, request_id, WireStatus::NotAuthed, &[], &[]);
                return ControlFlow::Continue;
            }
            let Ok(req) = rpc::ContOpenReq::decode(body) else {
                send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                return ControlFlow::Continue;
            };
            let tenant = session.tenant();
            let result = if req.create && req.container_id == 0 {
                state.store.create_container(tenant).map(|id| (id, 0))
            } else {
                state.store.container_info(req.container_id).and_then(|(epoch, owner)| {
                    if owner != tenant {
                        Err(StoreError::UnknownContainer)
                    } else {
                        Ok((req.container_id, epoch))
                    }
                })
            };
            match result {
                Ok((container_id, epoch)) => {
                    let resp = rpc::ContOpenResp {
                        container_id,
                        epoch,
                    };
                    send_resp(sender, op, request_id, WireStatus::Ok, &resp.encode(), &[]);
                }
                Err(StoreError::UnknownContainer) => {
                    send_resp(sender, op, request_id, WireStatus::UnknownObject, &[], &[]);
                }
                Err(e) => {
                    send_resp(sender, op, request_id, e.wire_status(), &[], &[]);
                }
            }
            ControlFlow::Continue
        }
        OpCode::CapIssue => {
            if !session.is_authed() {
                send_resp(sender, op, request_id, WireStatus::NotAuthed, &[], &[]);
                return ControlFlow::Continue;
            }
            let Ok(req) = rpc::CapIssueReq::decode(body) else {
                send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                return ControlFlow::Continue;
            };
            match state.endpoint.issue_token(
                session.tenant(),
                req.mr_id,
                req.start,
                req.end,
                Perms::from_bits(req.perms),
                req.ttl_ns,
            ) {
                Ok(token) => {
                    let rec = rpc::TokenRecord {
                        token_id: token.token_id,
                        mr_id: token.mr_id,
                        start: token.start,
                        end: token.end,
                        perms: token.perms.bits(),
                        expiry: token.expiry_ns,
                        nonce: token.nonce,
                    };
                    send_resp(sender, op, request_id, WireStatus::Ok, &rec.encode(), &[]);
                }
                Err(e) => {
                    let status = match e {
                        IssueError::ForeignRegion | IssueError::UnknownRegion => {
                            WireStatus::ForeignRegion
                        }
                        IssueError::ScopeExceedsRegion => WireStatus::ScopeExceedsRegion,
                        IssueError::PermEscalation => WireStatus::PermEscalation,
                    };
                    send_resp(sender, op, request_id, status, &[], &[]);
                }
            }
            ControlFlow::Continue
        }
        OpCode::CapRevoke => {
            if !session.is_authed() {
                send_resp(sender, op, request_id, WireStatus::NotAuthed, &[], &[]);
                return ControlFlow::Continue;
            }
            let Ok(req) = rpc::CapRevokeReq::decode(body) else {
                send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                return ControlFlow::Continue;
            };
            let status = if state
                .endpoint
                .revoke_token_owned(req.token_id, session.tenant())
            {
                WireStatus::Ok
            } else {
                WireStatus::UnknownToken
            };
            send_resp(sender, op, request_id, status, &[], &[]);
            ControlFlow::Continue
        }
        OpCode::Ping => {
            let Ok(req) = rpc::PingReq::decode(body) else {
                send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                return ControlFlow::Continue;
            };
            if req.flush {
                if let Err(e) = state.store.flush() {
                    send_resp(sender, op, request_id, e.wire_status(), &[], &[]);
                    return ControlFlow::Continue;
                }
            }
            send_resp(
                sender,
                op,
                request_id,
                WireStatus::Ok,
                &rpc::PingReq {
                    echo: req.echo,
                    flush: req.flush,
                }
                .encode(),
                &[],
            );
            ControlFlow::Continue
        }
        OpCode::Close => {
            send_resp(sender, op, request_id, WireStatus::Ok, &[], &[]);
            ControlFlow::Close
        }
        // bulk ops never reach here
        _ => {
            send_resp(sender, op, request_id, WireStatus::Unsupported, &[], &[]);
            ControlFlow::Continue
        }
    }
}

/// Object RPCs, run on session workers. `frame` is the full request frame
/// payload (envelope included) so inline payload slices stay valid.
fn handle_bulk(state: &Arc<EngineState>, session: &Arc<Session>, op: OpCode, request_id: u64, frame: &[u8]) {
    let sender = &session.sender;
    let envelope = match rpc::decode_req(frame) {
        Ok(Ok(env)) => env,
        _ => return,
    };
    let body = envelope.body;
    if !session.is_authed() {
        send_resp(sender, op, request_id, WireStatus::NotAuthed, &[], &[]);
        return;
    }
    let tenant = session.tenant();

    match op {
        OpCode::ObjUpdate => {
            let Ok((req, inline)) = rpc::ObjUpdateReq::decode(body) else {
                send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                return;
            };
            if req.len == 0 || req.len > MAX_IO_LEN || req.len > MAX_FRAME_PAYLOAD as u64 {
                send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                return;
            }
            if let Err(status) = check_owner(state, tenant, req.oid) {
                send_resp(sender, op, request_id, status, &[], &[]);
                return;
            }
            if let Err(status) = state.qos_admit(tenant, req.len) {
                send_resp(sender, op, request_id, status, &[], &[]);
                return;
            }
            let result = match req.source {
                UpdateSource::Inline => {
                    if inline.len() as u64 != req.len {
                        send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                        return;
                    }
                    state.store.update(
                        req.oid.container_id,
                        Oid {
                            hi: req.oid.hi,
                            lo: req.oid.lo,
                        },
                        req.offset,
                        inline,
                        req.checksum,
                    )
                }
                UpdateSource::Rendezvous {
                    source_key,
                    source_offset,
                } => {
                    // pull the payload from the client's registered region
                    let qp = session.qp.lock().clone();
                    let Some(qp) = qp else {
                        send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                        return;
                    };
                    let (pd, _) = state.tenant_resources(tenant);
                    let bounce = match state.endpoint.register(pd, req.len, Perms::READ_WRITE, 0) {
                        Ok(mr) => mr,
                        Err(_) => {
                            send_resp(sender, op, request_id, WireStatus::Internal, &[], &[]);
                            return;
                        }
                    };
                    let completion = qp.one_sided_read(&bounce, 0, source_key, source_offset, req.len);
                    let result = if completion.is_ok() {
                        let payload = bounce.read_local(0, req.len).expect("bounce read");
                        state.store.update(
                            req.oid.container_id,
                            Oid {
                                hi: req.oid.hi,
                                lo: req.oid.lo,
                            },
                            req.offset,
                            &payload,
                            req.checksum,
                        )
                    } else {
                        let _ = state.endpoint.deregister(bounce.meta.mr_id);
                        send_resp(sender, op, request_id, completion.detail, &[], &[]);
                        return;
                    };
                    let _ = state.endpoint.deregister(bounce.meta.mr_id);
                    result
                }
            };
            match result {
                Ok(epoch) => send_resp(
                    sender,
                    op,
                    request_id,
                    WireStatus::Ok,
                    &rpc::EpochResp { epoch }.encode(),
                    &[],
                ),
                Err(e) => send_resp(sender, op, request_id, e.wire_status(), &[], &[]),
            }
        }
        OpCode::ObjFetch => {
            let Ok(req) = rpc::ObjFetchReq::decode(body) else {
                send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                return;
            };
            if req.len == 0 || req.len > MAX_IO_LEN {
                send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                return;
            }
            if let Err(status) = check_owner(state, tenant, req.oid) {
                send_resp(sender, op, request_id, status, &[], &[]);
                return;
            }
            if let Err(status) = state.qos_admit(tenant, req.len) {
                send_resp(sender, op, request_id, status, &[], &[]);
                return;
            }
            let fetched = state.store.fetch(
                req.oid.container_id,
                Oid {
                    hi: req.oid.hi,
                    lo: req.oid.lo,
                },
                req.offset,
                req.len,
                req.at_epoch,
                false,
            );
            let fetched = match fetched {
                Ok(f) => f,
                Err(e) => {
                    send_resp(sender, op, request_id, e.wire_status(), &[], &[]);
                    return;
                }
            };
            let crc = ros2_core::crc32c(&fetched.bytes);
            let rendezvous = match req.sink {
                Some(sink) if req.len >= state.cfg.eager_threshold as u64 => Some(sink),
                _ => None,
            };
            match rendezvous {
                Some((sink_key, sink_offset)) => {
                    let qp = session.qp.lock().clone();
                    let Some(qp) = qp else {
                        send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                        return;
                    };
                    let (pd, _) = state.tenant_resources(tenant);
                    let bounce = match state.endpoint.register(pd, req.len, Perms::READ_WRITE, 0) {
                        Ok(mr) => mr,
                        Err(_) => {
                            send_resp(sender, op, request_id, WireStatus::Internal, &[], &[]);
                            return;
                        }
                    };
                    bounce.write_local(0, &fetched.bytes).expect("bounce write");
                    let completion: Completion =
                        qp.one_sided_write(&bounce, 0, sink_key, sink_offset, req.len);
                    let _ = state.endpoint.deregister(bounce.meta.mr_id);
                    if !completion.is_ok() {
                        send_resp(sender, op, request_id, completion.detail, &[], &[]);
                        return;
                    }
                    let resp = rpc::ObjFetchResp {
                        epoch: fetched.epoch,
                        checksum: crc,
                        onesided_len: req.len,
                    };
                    send_resp(sender, op, request_id, WireStatus::Ok, &resp.encode(), &[]);
                }
                None => {
                    let resp = rpc::ObjFetchResp {
                        epoch: fetched.epoch,
                        checksum: crc,
                        onesided_len: 0,
                    };
                    send_resp(
                        sender,
                        op,
                        request_id,
                        WireStatus::Ok,
                        &resp.encode(),
                        &fetched.bytes,
                    );
                }
            }
        }
        OpCode::ObjPunch => {
            let Ok(req) = rpc::ObjPunchReq::decode(body) else {
                send_resp(sender, op, request_id, WireStatus::BadRequest, &[], &[]);
                return;
            };
            if let Err(status) = check_owner(state, tenant, req.oid) {
                send_resp(sender, op, request_id, status, &[], &[]);
                return;
            }
            match state.store.punch(
                req.oid.container_id,
                Oid {
                    hi: req.oid.hi,
                    lo: req.oid.lo,
                },
                req.offset,
                req.len,
            ) {
                Ok(epoch) => send_resp(
                    sender,
                    op,
                    request_id,
                    WireStatus::Ok,
                    &rpc::EpochResp { epoch }.encode(),
                    &[],
                ),
                Err(e) => send_resp(sender, op, request_id, e.wire_status(), &[], &[]),
            }
        }
        _ => unreachable!("non-bulk op in bulk handler"),
    }
}

fn check_owner(state: &Arc<EngineState>, tenant: u64, oid: WireOid) -> Result<(), WireStatus> {
    match state.store.container_info(oid.container_id) {
        Ok((_, owner)) if owner == tenant => Ok(()),
        Ok(_) => Err(WireStatus::DenyPerm),
        Err(_) => Err(WireStatus::UnknownObject),
    }
}

fn read_raw_frame(
    stream: &mut std::net::TcpStream,
) -> Result<(ros2_core::wire::FrameHeader, Vec<u8>), TransportError> {
    use std::io::Read;
    let mut raw = [0u8; ros2_core::wire::FRAME_HEADER_LEN];
    stream.read_exact(&mut raw)?;
    let header = ros2_core::wire::FrameHeader::decode(&raw)
        .map_err(|e| TransportError::Protocol(format!("{}", e)))?;
    let mut payload = vec![0u8; header.payload_len as usize];
    stream.read_exact(&mut payload)?;
    Ok((header, payload))
}
