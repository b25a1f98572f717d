//! Framed wire protocol shared by the control plane, the data plane, and
//! the proxy shim channel.
//!
//! Every frame starts with a fixed 12-byte header, all integers
//! little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ROS2"
//! 4       1     version (1)
//! 5       1     frame type
//! 6       2     flags
//! 8       4     payload length
//! 12      ...   payload
//! ```

use crate::codec::{Reader, ShortRecord};

pub const FRAME_MAGIC: [u8; 4] = *b"ROS2";
pub const WIRE_VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 12;

/// Hard cap on one frame's payload. Chunked transfers never exceed the DFS
/// chunk size plus its descriptor, so 16 MiB leaves ample slack.
pub const MAX_FRAME_PAYLOAD: u32 = 16 << 20;

/// Shim-channel frames are status/command only and must stay tiny.
pub const MAX_SHIM_FRAME: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Hello = 0x01,
    HelloAck = 0x02,
    RpcReq = 0x10,
    RpcResp = 0x11,
    EagerData = 0x20,
    RdvNotify = 0x21,
    OnesidedReadReq = 0x22,
    OnesidedData = 0x23,
    Error = 0x2F,
    ShimCmd = 0x40,
    ShimReply = 0x41,
}

impl FrameType {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0x01 => Self::Hello,
            0x02 => Self::HelloAck,
            0x10 => Self::RpcReq,
            0x11 => Self::RpcResp,
            0x20 => Self::EagerData,
            0x21 => Self::RdvNotify,
            0x22 => Self::OnesidedReadReq,
            0x23 => Self::OnesidedData,
            0x2F => Self::Error,
            0x40 => Self::ShimCmd,
            0x41 => Self::ShimReply,
            _ => return None,
        })
    }

    /// True for the 0x40-0x4F range reserved for the host-proxy shim.
    pub fn is_shim(self) -> bool {
        (self as u8) & 0xF0 == 0x40
    }
}

/// Flag bits carried in the frame header.
pub mod flags {
    /// Frame is a completion for an earlier one-sided or transfer frame.
    pub const COMPLETION: u16 = 0x0001;
    /// EagerData frame belongs to the transfer protocol (has a sink
    /// descriptor header) rather than being a raw two-sided message.
    pub const XFER: u16 = 0x0002;
    /// One-sided frame describes a write (absent: read).
    pub const WRITE: u16 = 0x0004;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub frame_type: FrameType,
    pub flags: u16,
    pub payload_len: u32,
}

/// Why an incoming header was rejected. `BadMagic`/`BadVersion` are fatal
/// for the connection; the peer gets no response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameError {
    BadMagic,
    BadVersion(u8),
    UnknownType(u8),
    Oversized(u32),
    Truncated,
}

impl core::fmt::Display for FrameError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::BadMagic => write!(f, "bad frame magic"),
            Self::BadVersion(v) => write!(f, "unsupported wire version {}", v),
            Self::UnknownType(t) => write!(f, "unknown frame type {:#04x}", t),
            Self::Oversized(n) => write!(f, "frame payload {} exceeds cap", n),
            Self::Truncated => write!(f, "truncated frame header"),
        }
    }
}

impl From<ShortRecord> for FrameError {
    fn from(_: ShortRecord) -> Self {
        Self::Truncated
    }
}

impl FrameHeader {
    pub fn new(frame_type: FrameType, flags: u16, payload_len: u32) -> Self {
        Self {
            frame_type,
            flags,
            payload_len,
        }
    }

    pub fn encode(&self) -> [u8; FRAME_HEADER_LEN] {
        let mut h = [0u8; FRAME_HEADER_LEN];
        h[0..4].copy_from_slice(&FRAME_MAGIC);
        h[4] = WIRE_VERSION;
        h[5] = self.frame_type as u8;
        h[6..8].copy_from_slice(&self.flags.to_le_bytes());
        h[8..12].copy_from_slice(&self.payload_len.to_le_bytes());
        h
    }

    pub fn decode(raw: &[u8]) -> Result<Self, FrameError> {
        let mut r = Reader::new(raw);
        let magic = r.get_bytes(4)?;
        if magic != FRAME_MAGIC {
            return Err(FrameError::BadMagic);
        }
        let version = r.get_u8()?;
        if version != WIRE_VERSION {
            return Err(FrameError::BadVersion(version));
        }
        let ftype = r.get_u8()?;
        let frame_type = FrameType::from_u8(ftype).ok_or(FrameError::UnknownType(ftype))?;
        let flags = r.get_u16()?;
        let payload_len = r.get_u32()?;
        if payload_len > MAX_FRAME_PAYLOAD {
            return Err(FrameError::Oversized(payload_len));
        }
        Ok(Self {
            frame_type,
            flags,
            payload_len,
        })
    }
}
