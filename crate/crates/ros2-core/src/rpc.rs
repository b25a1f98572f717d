//! Control-plane RPC vocabulary and the fixed-order body records for every
//! operation, plus the data-plane and shim-channel records that share the
//! same frame format.
//!
//! Bodies are fixed-layout little-endian; bulk payloads are never embedded
//! in a record struct — they ride as the tail of the frame payload so the
//! transport can place or source them without re-encoding.

use alloc::string::String;
use alloc::vec::Vec;

use crate::codec::{Reader, ShortRecord, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum OpCode {
    Connect = 0x01,
    PoolConnect = 0x02,
    ContOpen = 0x03,
    ObjUpdate = 0x10,
    ObjFetch = 0x11,
    ObjPunch = 0x12,
    CapIssue = 0x20,
    CapRevoke = 0x21,
    Ping = 0x30,
    Close = 0x31,
}

impl OpCode {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0x01 => Self::Connect,
            0x02 => Self::PoolConnect,
            0x03 => Self::ContOpen,
            0x10 => Self::ObjUpdate,
            0x11 => Self::ObjFetch,
            0x12 => Self::ObjPunch,
            0x20 => Self::CapIssue,
            0x21 => Self::CapRevoke,
            0x30 => Self::Ping,
            0x31 => Self::Close,
        _ => return None,
        })
    }

    /// Metadata ops keep strict response ordering; object ops may overlap.
    pub fn is_bulk(self) -> bool {
        matches!(self, Self::ObjUpdate | Self::ObjFetch | Self::ObjPunch)
    }
}

/// Status byte carried in every response, shim reply, and completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum WireStatus {
    Ok = 0,
    UnknownTenant = 1,
    AuthFailed = 2,
    NotAuthed = 3,
    ChecksumMismatch = 4,
    NoSpace = 5,
    UnknownObject = 6,
    MediaCorruption = 7,
    DenyUnknownKey = 8,
    DenyOutOfBounds = 9,
    DenyPerm = 10,
    DenyExpired = 11,
    DenyRevoked = 12,
    Network = 13,
    Mismatch = 14,
    Unsupported = 15,
    QosOversized = 16,
    Unaligned = 17,
    Exists = 18,
    ForeignRegion = 19,
    ScopeExceedsRegion = 20,
    PermEscalation = 21,
    UnknownToken = 22,
    BadRequest = 23,
    NotFound = 24,
    NotADirectory = 25,
    IsADirectory = 26,
    NotEmpty = 27,
    BadSuperblock = 28,
    ProxyUnavailable = 29,
    EngineUnreachable = 30,
    InvalidName = 31,
    DuplicateName = 32,
    Internal = 33,
}

impl WireStatus {
    pub fn from_u8(v: u8) -> Option<Self> {
        if v <= WireStatus::Internal as u8 {
            // safety: repr(u8), dense range checked above
            Some(unsafe { core::mem::transmute::<u8, WireStatus>(v) })
        } else {
            None
        }
    }

    pub fn is_ok(self) -> bool {
        matches!(self, WireStatus::Ok)
    }

    pub fn is_deny(self) -> bool {
        matches!(
            self,
            WireStatus::DenyUnknownKey
                | WireStatus::DenyOutOfBounds
                | WireStatus::DenyPerm
                | WireStatus::DenyExpired
                | WireStatus::DenyRevoked
        )
    }
}

impl From<crate::security::DenyReason> for WireStatus {
    fn from(r: crate::security::DenyReason) -> Self {
        use crate::security::DenyReason::*;
        match r {
            UnknownKey => WireStatus::DenyUnknownKey,
            OutOfBounds => WireStatus::DenyOutOfBounds,
            Perm => WireStatus::DenyPerm,
            Expired => WireStatus::DenyExpired,
            Revoked => WireStatus::DenyRevoked,
        }
    }
}

/// Fetch requests use this in `at_epoch` to mean "latest committed".
pub const EPOCH_LATEST: u64 = u64::MAX;

// ---------------------------------------------------------------------------
// Handshake records (HELLO / HELLO_ACK frames)
// ---------------------------------------------------------------------------

pub const NONCE_LEN: usize = 16;
pub const PROOF_LEN: usize = 32;

/// Which plane a connection serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Plane {
    Control = 0,
    Data = 1,
    Shim = 2,
}

impl Plane {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Self::Control,
            1 => Self::Data,
            2 => Self::Shim,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ProviderKind {
    Stream = 0,
    RdmaSim = 1,
}

impl ProviderKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Self::Stream,
            1 => Self::RdmaSim,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Stream => "stream",
            Self::RdmaSim => "rdmasim",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "stream" => Self::Stream,
            "rdmasim" => Self::RdmaSim,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub plane: Plane,
    pub provider: ProviderKind,
    /// Process-unique endpoint instance, used to detect in-process peers.
    pub instance: u64,
    /// Control: tenant id. Data: session id.
    pub id: u64,
    /// Data plane only: attach key from the CONNECT response.
    pub attach_key: u64,
    /// Data plane: the connecting side's queue-pair id.
    pub qp_id: u64,
}

impl Hello {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(self.plane as u8)
            .put_u8(self.provider as u8)
            .put_u64(self.instance)
            .put_u64(self.id)
            .put_u64(self.attach_key)
            .put_u64(self.qp_id);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            plane: Plane::from_u8(r.get_u8()?).ok_or(ShortRecord)?,
            provider: ProviderKind::from_u8(r.get_u8()?).ok_or(ShortRecord)?,
            instance: r.get_u64()?,
            id: r.get_u64()?,
            attach_key: r.get_u64()?,
            qp_id: r.get_u64()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelloAck {
    pub instance: u64,
    /// Control: fresh session id. Data: qp id.
    pub id: u64,
    /// Control plane: server auth nonce.
    pub nonce: [u8; NONCE_LEN],
    /// Eager/rendezvous switch the server runs with.
    pub eager_threshold: u32,
}

impl HelloAck {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.instance)
            .put_u64(self.id)
            .put_bytes(&self.nonce)
            .put_u32(self.eager_threshold);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        let instance = r.get_u64()?;
        let id = r.get_u64()?;
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(r.get_bytes(NONCE_LEN)?);
        Ok(Self {
            instance,
            id,
            nonce,
            eager_threshold: r.get_u32()?,
        })
    }
}

// ---------------------------------------------------------------------------
// RPC envelope
// ---------------------------------------------------------------------------

/// Parsed head of an RPC_REQ frame payload; `body` is the op-specific rest.
#[derive(Debug)]
pub struct ReqEnvelope<'a> {
    pub op: OpCode,
    pub request_id: u64,
    pub body: &'a [u8],
}

pub fn encode_req_head(op: OpCode, request_id: u64) -> Writer {
    let mut w = Writer::new();
    w.put_u8(op as u8).put_u64(request_id);
    w
}

/// Returns None when the op code is unknown (caller answers UNSUPPORTED).
pub fn decode_req(raw: &[u8]) -> Result<Result<ReqEnvelope<'_>, (u8, u64)>, ShortRecord> {
    let mut r = Reader::new(raw);
    let op_raw = r.get_u8()?;
    let request_id = r.get_u64()?;
    match OpCode::from_u8(op_raw) {
        Some(op) => Ok(Ok(ReqEnvelope {
            op,
            request_id,
            body: r.rest(),
        })),
        None => Ok(Err((op_raw, request_id))),
    }
}

pub struct RespEnvelope<'a> {
    pub op: OpCode,
    pub request_id: u64,
    pub status: WireStatus,
    pub body: &'a [u8],
}

pub fn encode_resp_head(op: OpCode, request_id: u64, status: WireStatus) -> Writer {
    let mut w = Writer::new();
    w.put_u8(op as u8).put_u64(request_id).put_u8(status as u8);
    w
}

pub fn decode_resp(raw: &[u8]) -> Result<RespEnvelope<'_>, ShortRecord> {
    let mut r = Reader::new(raw);
    let op = OpCode::from_u8(r.get_u8()?).ok_or(ShortRecord)?;
    let request_id = r.get_u64()?;
    let status = WireStatus::from_u8(r.get_u8()?).ok_or(ShortRecord)?;
    Ok(RespEnvelope {
        op,
        request_id,
        status,
        body: r.rest(),
    })
}

// ---------------------------------------------------------------------------
// Per-op bodies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectReq {
    pub tenant_id: u64,
    pub proof: [u8; PROOF_LEN],
}

impl ConnectReq {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.tenant_id).put_bytes(&self.proof);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        let tenant_id = r.get_u64()?;
        let mut proof = [0u8; PROOF_LEN];
        proof.copy_from_slice(r.get_bytes(PROOF_LEN)?);
        Ok(Self { tenant_id, proof })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnectResp {
    pub session_id: u64,
    pub data_attach_key: u64,
    /// Engine-side staging region owned by this tenant, scope for
    /// CAP_ISSUE requests.
    pub staging_mr_id: u64,
    pub staging_rkey: u64,
    pub staging_len: u64,
}

impl ConnectResp {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.session_id)
            .put_u64(self.data_attach_key)
            .put_u64(self.staging_mr_id)
            .put_u64(self.staging_rkey)
            .put_u64(self.staging_len);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            session_id: r.get_u64()?,
            data_attach_key: r.get_u64()?,
            staging_mr_id: r.get_u64()?,
            staging_rkey: r.get_u64()?,
            staging_len: r.get_u64()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolConnectResp {
    pub pool_id: u64,
    pub scm_capacity: u64,
    pub nvme_capacity: u64,
    pub block_size: u32,
}

impl PoolConnectResp {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.pool_id)
            .put_u64(self.scm_capacity)
            .put_u64(self.nvme_capacity)
            .put_u32(self.block_size);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            pool_id: r.get_u64()?,
            scm_capacity: r.get_u64()?,
            nvme_capacity: r.get_u64()?,
            block_size: r.get_u32()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContOpenReq {
    /// 0 with `create` set mints a fresh container.
    pub container_id: u64,
    pub create: bool,
}

impl ContOpenReq {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.container_id).put_u8(self.create as u8);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            container_id: r.get_u64()?,
            create: r.get_u8()? != 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContOpenResp {
    pub container_id: u64,
    pub epoch: u64,
}

impl ContOpenResp {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.container_id).put_u64(self.epoch);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            container_id: r.get_u64()?,
            epoch: r.get_u64()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjId {
    pub container_id: u64,
    pub hi: u64,
    pub lo: u64,
}

impl ObjId {
    fn put(&self, w: &mut Writer) {
        w.put_u64(self.container_id).put_u64(self.hi).put_u64(self.lo);
    }

    fn get(r: &mut Reader<'_>) -> Result<Self, ShortRecord> {
        Ok(Self {
            container_id: r.get_u64()?,
            hi: r.get_u64()?,
            lo: r.get_u64()?,
        })
    }
}

/// Where an update's payload comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateSource {
    /// Payload is the frame tail after this record.
    Inline,
    /// Engine pulls the payload from the client's registered region.
    Rendezvous { source_key: u64, source_offset: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjUpdateReq {
    pub oid: ObjId,
    pub offset: u64,
    pub len: u64,
    pub checksum: u32,
    pub source: UpdateSource,
}

impl ObjUpdateReq {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.oid.put(&mut w);
        w.put_u64(self.offset).put_u64(self.len).put_u32(self.checksum);
        match self.source {
            UpdateSource::Inline => {
                w.put_u8(0);
            }
            UpdateSource::Rendezvous {
                source_key,
                source_offset,
            } => {
                w.put_u8(1).put_u64(source_key).put_u64(source_offset);
            }
        }
        w.into_vec()
    }

    /// Returns the record plus the inline payload tail (empty for
    /// rendezvous updates).
    pub fn decode(raw: &[u8]) -> Result<(Self, &[u8]), ShortRecord> {
        let mut r = Reader::new(raw);
        let oid = ObjId::get(&mut r)?;
        let offset = r.get_u64()?;
        let len = r.get_u64()?;
        let checksum = r.get_u32()?;
        let source = match r.get_u8()? {
            0 => UpdateSource::Inline,
            1 => UpdateSource::Rendezvous {
                source_key: r.get_u64()?,
                source_offset: r.get_u64()?,
            },
            _ => return Err(ShortRecord),
        };
        Ok((
            Self {
                oid,
                offset,
                len,
                checksum,
                source,
            },
            r.rest(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjFetchReq {
    pub oid: ObjId,
    pub offset: u64,
    pub len: u64,
    pub at_epoch: u64,
    /// Sink region for rendezvous delivery; None requests an inline reply.
    pub sink: Option<(u64, u64)>,
}

impl ObjFetchReq {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.oid.put(&mut w);
        w.put_u64(self.offset).put_u64(self.len).put_u64(self.at_epoch);
        match self.sink {
            None => {
                w.put_u8(0);
            }
            Some((key, off)) => {
                w.put_u8(1).put_u64(key).put_u64(off);
            }
        }
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        let oid = ObjId::get(&mut r)?;
        let offset = r.get_u64()?;
        let len = r.get_u64()?;
        let at_epoch = r.get_u64()?;
        let sink = match r.get_u8()? {
            0 => None,
            1 => Some((r.get_u64()?, r.get_u64()?)),
            _ => return Err(ShortRecord),
        };
        Ok(Self {
            oid,
            offset,
            len,
            at_epoch,
            sink,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjFetchResp {
    pub epoch: u64,
    pub checksum: u32,
    /// Bytes delivered via the one-sided path (0 when inline).
    pub onesided_len: u64,
}

impl ObjFetchResp {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.epoch)
            .put_u32(self.checksum)
            .put_u64(self.onesided_len);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<(Self, &[u8]), ShortRecord> {
        let mut r = Reader::new(raw);
        let resp = Self {
            epoch: r.get_u64()?,
            checksum: r.get_u32()?,
            onesided_len: r.get_u64()?,
        };
        Ok((resp, r.rest()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjPunchReq {
    pub oid: ObjId,
    pub offset: u64,
    pub len: u64,
}

impl ObjPunchReq {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.oid.put(&mut w);
        w.put_u64(self.offset).put_u64(self.len);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            oid: ObjId::get(&mut r)?,
            offset: r.get_u64()?,
            len: r.get_u64()?,
        })
    }
}

/// Epoch-only response body shared by update and punch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochResp {
    pub epoch: u64,
}

impl EpochResp {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.epoch);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            epoch: r.get_u64()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapIssueReq {
    pub mr_id: u64,
    pub start: u64,
    pub end: u64,
    pub perms: u8,
    pub ttl_ns: u64,
}

impl CapIssueReq {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.mr_id)
            .put_u64(self.start)
            .put_u64(self.end)
            .put_u8(self.perms)
            .put_u64(self.ttl_ns);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            mr_id: r.get_u64()?,
            start: r.get_u64()?,
            end: r.get_u64()?,
            perms: r.get_u8()?,
            ttl_ns: r.get_u64()?,
        })
    }
}

/// Capability token as serialized inside RPC payloads: fixed order
/// (token_id, mr_id, start, end, perms, expiry, nonce).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenRecord {
    pub token_id: u64,
    pub mr_id: u64,
    pub start: u64,
    pub end: u64,
    pub perms: u8,
    pub expiry: u64,
    pub nonce: u64,
}

impl TokenRecord {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.token_id)
            .put_u64(self.mr_id)
            .put_u64(self.start)
            .put_u64(self.end)
            .put_u8(self.perms)
            .put_u64(self.expiry)
            .put_u64(self.nonce);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            token_id: r.get_u64()?,
            mr_id: r.get_u64()?,
            start: r.get_u64()?,
            end: r.get_u64()?,
            perms: r.get_u8()?,
            expiry: r.get_u64()?,
            nonce: r.get_u64()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapRevokeReq {
    pub token_id: u64,
}

impl CapRevokeReq {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.token_id);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            token_id: r.get_u64()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PingReq {
    pub echo: u64,
    /// Non-zero requests a durability barrier before the response.
    pub flush: bool,
}

impl PingReq {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.echo).put_u8(self.flush as u8);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            echo: r.get_u64()?,
            flush: r.get_u8()? != 0,
        })
    }
}

/// ERROR frame body: protocol-level failure outside any single request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorBody {
    pub code: WireStatus,
    pub request_id: u64,
    pub message: String,
}

impl ErrorBody {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(self.code as u8)
            .put_u64(self.request_id)
            .put_str(&self.message);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            code: WireStatus::from_u8(r.get_u8()?).ok_or(ShortRecord)?,
            request_id: r.get_u64()?,
            message: r.get_string()?,
        })
    }
}

// ---------------------------------------------------------------------------
// Data-plane records
// ---------------------------------------------------------------------------

/// Header of ONESIDED_DATA (write request, payload follows) and
/// ONESIDED_READ_REQ frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OnesidedReq {
    pub op_id: u64,
    pub key: u64,
    pub offset: u64,
    pub len: u64,
}

impl OnesidedReq {
    pub const ENCODED_LEN: usize = 32;

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.op_id)
            .put_u64(self.key)
            .put_u64(self.offset)
            .put_u64(self.len);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            op_id: r.get_u64()?,
            key: r.get_u64()?,
            offset: r.get_u64()?,
            len: r.get_u64()?,
        })
    }
}

/// Completion record; read replies append the data after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OnesidedCompletion {
    pub op_id: u64,
    pub status: WireStatus,
    pub bytes: u64,
    pub crc: u32,
}

impl OnesidedCompletion {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.op_id)
            .put_u8(self.status as u8)
            .put_u64(self.bytes)
            .put_u32(self.crc);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<(Self, &[u8]), ShortRecord> {
        let mut r = Reader::new(raw);
        let c = Self {
            op_id: r.get_u64()?,
            status: WireStatus::from_u8(r.get_u8()?).ok_or(ShortRecord)?,
            bytes: r.get_u64()?,
            crc: r.get_u32()?,
        };
        Ok((c, r.rest()))
    }
}

/// Header of an eager transfer frame; payload follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XferEager {
    pub xfer_id: u64,
    pub sink_key: u64,
    pub sink_offset: u64,
    pub len: u64,
    pub crc: u32,
}

impl XferEager {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.xfer_id)
            .put_u64(self.sink_key)
            .put_u64(self.sink_offset)
            .put_u64(self.len)
            .put_u32(self.crc);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<(Self, &[u8]), ShortRecord> {
        let mut r = Reader::new(raw);
        let x = Self {
            xfer_id: r.get_u64()?,
            sink_key: r.get_u64()?,
            sink_offset: r.get_u64()?,
            len: r.get_u64()?,
            crc: r.get_u32()?,
        };
        Ok((x, r.rest()))
    }
}

/// Rendezvous completion notification: no payload, just the digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RdvNotify {
    pub xfer_id: u64,
    pub len: u64,
    pub crc: u32,
}

impl RdvNotify {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.xfer_id).put_u64(self.len).put_u32(self.crc);
        w.into_vec()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, ShortRecord> {
        let mut r = Reader::new(raw);
        Ok(Self {
            xfer_id: r.get_u64()?,
            len: r.get_u64()?,
            crc: r.get_u32()?,
        })
    }
}
