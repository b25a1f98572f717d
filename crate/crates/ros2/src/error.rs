//! Error types shared across the stack, and their wire-status mappings.

use ros2_core::rpc::WireStatus;
use ros2_core::security::DenyReason;
use thiserror::Error;

/// Transport-level failure as seen by an initiator.
#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("connection closed")]
    Closed,
    #[error("operation timed out")]
    Timeout,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("queue pair not ready")]
    NotReady,
    #[error("payload/sink length mismatch")]
    Mismatch,
    #[error("remote denied: {0}")]
    Denied(DenyReason),
    #[error("peer reported {0:?}")]
    Remote(WireStatus),
}

impl TransportError {
    pub fn wire_status(&self) -> WireStatus {
        match self {
            TransportError::Denied(r) => WireStatus::from(*r),
            TransportError::Remote(s) => *s,
            TransportError::Mismatch => WireStatus::Mismatch,
            _ => WireStatus::Network,
        }
    }
}

/// DFS client failure, POSIX-flavored.
#[derive(Debug, Error)]
pub enum DfsError {
    #[error("not found")]
    NotFound,
    #[error("already exists")]
    Exists,
    #[error("not a directory")]
    NotADirectory,
    #[error("is a directory")]
    IsADirectory,
    #[error("directory not empty")]
    NotEmpty,
    #[error("invalid path or name")]
    InvalidName,
    #[error("bad superblock")]
    BadSuperblock,
    #[error("handle is not open for this access")]
    BadHandle,
    #[error("checksum mismatch on read-back")]
    ChecksumMismatch,
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("engine status {0:?}")]
    Engine(WireStatus),
}

impl DfsError {
    pub fn wire_status(&self) -> WireStatus {
        match self {
            DfsError::NotFound => WireStatus::NotFound,
            DfsError::Exists => WireStatus::Exists,
            DfsError::NotADirectory => WireStatus::NotADirectory,
            DfsError::IsADirectory => WireStatus::IsADirectory,
            DfsError::NotEmpty => WireStatus::NotEmpty,
            DfsError::InvalidName => WireStatus::InvalidName,
            DfsError::BadSuperblock => WireStatus::BadSuperblock,
            DfsError::BadHandle => WireStatus::BadRequest,
            DfsError::ChecksumMismatch => WireStatus::ChecksumMismatch,
            DfsError::Transport(t) => t.wire_status(),
            DfsError::Engine(s) => *s,
        }
    }

    /// Rebuild from a shim reply status.
    pub fn from_wire(status: WireStatus) -> Self {
        match status {
            WireStatus::NotFound => DfsError::NotFound,
            WireStatus::Exists => DfsError::Exists,
            WireStatus::NotADirectory => DfsError::NotADirectory,
            WireStatus::IsADirectory => DfsError::IsADirectory,
            WireStatus::NotEmpty => DfsError::NotEmpty,
            WireStatus::InvalidName => DfsError::InvalidName,
            WireStatus::BadSuperblock => DfsError::BadSuperblock,
            WireStatus::ChecksumMismatch => DfsError::ChecksumMismatch,
            other => DfsError::Engine(other),
        }
    }
}

/// Store failure.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("client checksum does not match payload")]
    ChecksumMismatch,
    #[error("stored data failed checksum verification")]
    MediaCorruption,
    #[error("out of space on {0}")]
    NoSpace(&'static str),
    #[error("unknown container")]
    UnknownContainer,
    #[error("unknown object")]
    UnknownObject,
    #[error("capacity not block aligned")]
    Unaligned,
    #[error("pool already exists")]
    Exists,
    #[error("pool corrupt: {0}")]
    Corrupt(String),
    #[error("empty payload")]
    EmptyPayload,
}

impl StoreError {
    pub fn wire_status(&self) -> WireStatus {
        match self {
            StoreError::ChecksumMismatch => WireStatus::ChecksumMismatch,
            StoreError::MediaCorruption => WireStatus::MediaCorruption,
            StoreError::NoSpace(_) => WireStatus::NoSpace,
            StoreError::UnknownObject | StoreError::UnknownContainer => WireStatus::UnknownObject,
            StoreError::Unaligned => WireStatus::Unaligned,
            StoreError::Exists => WireStatus::Exists,
            StoreError::EmptyPayload => WireStatus::BadRequest,
            _ => WireStatus::Internal,
        }
    }
}
