//! Framed IO over a byte-stream connection, flavored by provider.
//!
//! The two providers carry identical frames but spend different effort per
//! frame, mirroring the stacks they stand in for:
//!
//! - `stream` (TCP analog): every send assembles the frame into a fresh
//!   buffer before one write; every receive issues separate header and
//!   payload reads and lands payloads in freshly allocated scratch.
//! - `rdmasim` (RDMA analog): sends are vectored straight from caller
//!   buffers with no assembly copy; receives poll a large registered ring
//!   (a `BufReader`), batching header reads and letting large payloads be
//!   placed directly into their destination buffers.

use std::io::{self, BufReader, IoSlice, Read, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use ros2_core::rpc::ProviderKind;
use ros2_core::wire::{FrameError, FrameHeader, FrameType, FRAME_HEADER_LEN};

/// Receive-ring capacity for the rdmasim flavor.
const RECV_RING: usize = 256 * 1024;

#[derive(Debug, Default)]
pub struct IoCounters {
    pub bytes_tx: AtomicU64,
    pub bytes_rx: AtomicU64,
    pub frames_tx: AtomicU64,
    pub frames_rx: AtomicU64,
}

impl IoCounters {
    pub fn snapshot(&self) -> (u64, u64, u64, u64) {
        (
            self.bytes_tx.load(Ordering::Relaxed),
            self.bytes_rx.load(Ordering::Relaxed),
            self.frames_tx.load(Ordering::Relaxed),
            self.frames_rx.load(Ordering::Relaxed),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapDir {
    Tx,
    Rx,
}

/// One captured frame. Payload is copied in full; taps are a test facility
/// and stay detached in production paths.
#[derive(Debug, Clone)]
pub struct TapRecord {
    pub dir: TapDir,
    pub frame_type: FrameType,
    pub flags: u16,
    pub payload: Vec<u8>,
}

pub type Tap = Arc<Mutex<Vec<TapRecord>>>;

#[derive(Debug)]
pub enum RecvError {
    Io(io::Error),
    Frame(FrameError),
}

impl From<io::Error> for RecvError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

impl std::fmt::Display for RecvError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Io(e) => write!(f, "i/o: {}", e),
            Self::Frame(e) => write!(f, "frame: {}", e),
        }
    }
}

pub struct FrameSender {
    provider: ProviderKind,
    stream: Mutex<TcpStream>,
    pub counters: Arc<IoCounters>,
    tap: Arc<Mutex<Option<Tap>>>,
}

impl FrameSender {
    /// Writes one frame whose payload is the concatenation of `parts`.
    pub fn send(&self, frame_type: FrameType, flags: u16, parts: &[&[u8]]) -> io::Result<()> {
        let payload_len: usize = parts.iter().map(|p| p.len()).sum();
        let header = FrameHeader::new(frame_type, flags, payload_len as u32).encode();
        {
            let mut stream = self.stream.lock();
            match self.provider {
                ProviderKind::Stream => {
                    // assemble-and-send: the buffering TCP stacks pay for
                    let mut buf = Vec::with_capacity(FRAME_HEADER_LEN + payload_len);
                    buf.extend_from_slice(&header);
                    for p in parts {
                        buf.extend_from_slice(p);
                    }
                    stream.write_all(&buf)?;
                }
                ProviderKind::RdmaSim => {
                    let mut slices = Vec::with_capacity(parts.len() + 1);
                    slices.push(IoSlice::new(&header));
                    for p in parts {
                        slices.push(IoSlice::new(p));
                    }
                    write_vectored_all(&mut *stream, &mut slices)?;
                }
            }
        }
        self.counters
            .bytes_tx
            .fetch_add((FRAME_HEADER_LEN + payload_len) as u64, Ordering::Relaxed);
        self.counters.frames_tx.fetch_add(1, Ordering::Relaxed);
        if let Some(tap) = self.tap.lock().as_ref() {
            let mut payload = Vec::with_capacity(payload_len);
            for p in parts {
                payload.extend_from_slice(p);
            }
            tap.lock().push(TapRecord {
                dir: TapDir::Tx,
                frame_type,
                flags,
                payload,
            });
        }
        Ok(())
    }

    pub fn set_tap(&self, tap: Option<Tap>) {
        *self.tap.lock() = tap;
    }

    pub fn shutdown(&self) {
        let _ = self.stream.lock().shutdown(std::net::Shutdown::Both);
    }
}

enum ReaderKind {
    Stream(TcpStream),
    Ring(BufReader<TcpStream>),
}

impl ReaderKind {
    fn as_read(&mut self) -> &mut dyn Read {
        match self {
            ReaderKind::Stream(s) => s,
            ReaderKind::Ring(r) => r,
        }
    }
}

pub struct FrameReceiver {
    provider: ProviderKind,
    reader: ReaderKind,
    pub counters: Arc<IoCounters>,
    tap: Arc<Mutex<Option<Tap>>>,
}

impl FrameReceiver {
    pub fn provider(&self) -> ProviderKind {
        self.provider
    }

    pub fn read_header(&mut self) -> Result<FrameHeader, RecvError> {
        let mut raw = [0u8; FRAME_HEADER_LEN];
        self.reader.as_read().read_exact(&mut raw)?;
        let header = FrameHeader::decode(&raw).map_err(RecvError::Frame)?;
        self.counters
            .bytes_rx
            .fetch_add((FRAME_HEADER_LEN as u64) + header.payload_len as u64, Ordering::Relaxed);
        self.counters.frames_rx.fetch_add(1, Ordering::Relaxed);
        Ok(header)
    }

    /// Reads exactly `buf.len()` payload bytes. On the rdmasim flavor a
    /// large destination is filled straight from the socket once the ring
    /// is drained, which is what keeps placement single-copy.
    pub fn read_exact(&mut self, buf: &mut [u8]) -> io::Result<()> {
        self.reader.as_read().read_exact(buf)
    }

    pub fn read_vec(&mut self, len: usize) -> io::Result<Vec<u8>> {
        let mut buf = vec![0u8; len];
        self.read_exact(&mut buf)?;
        Ok(buf)
    }

    pub fn discard(&mut self, mut len: usize) -> io::Result<()> {
        let mut sink = [0u8; 4096];
        while len > 0 {
            let n = len.min(sink.len());
            self.read_exact(&mut sink[..n])?;
            len -= n;
        }
        Ok(())
    }

    /// Full-frame receive for control, handshake, and shim channels.
    pub fn recv_owned(&mut self) -> Result<(FrameHeader, Vec<u8>), RecvError> {
        let header = self.read_header()?;
        let payload = self.read_vec(header.payload_len as usize)?;
        self.tap_rx(&header, &payload);
        Ok((header, payload))
    }

    /// Records an Rx tap entry; payload must be the full frame payload.
    pub fn tap_rx(&mut self, header: &FrameHeader, payload: &[u8]) {
        if let Some(tap) = self.tap.lock().as_ref() {
            tap.lock().push(TapRecord {
                dir: TapDir::Rx,
                frame_type: header.frame_type,
                flags: header.flags,
                payload: payload.to_vec(),
            });
        }
    }

    pub fn tap_enabled(&self) -> bool {
        self.tap.lock().is_some()
    }
}

/// Splits a connected stream into flavored sender/receiver halves sharing
/// counters and tap.
pub fn split(stream: TcpStream, provider: ProviderKind) -> io::Result<(FrameSender, FrameReceiver)> {
    stream.set_nodelay(true)?;
    let read_half = stream.try_clone()?;
    let counters = Arc::new(IoCounters::default());
    let tap: Arc<Mutex<Option<Tap>>> = Arc::new(Mutex::new(None));
    let reader = match provider {
        ProviderKind::Stream => ReaderKind::Stream(read_half),
        ProviderKind::RdmaSim => ReaderKind::Ring(BufReader::with_capacity(RECV_RING, read_half)),
    };
    Ok((
        FrameSender {
            provider,
            stream: Mutex::new(stream),
            counters: counters.clone(),
            tap: tap.clone(),
        },
        FrameReceiver {
            provider,
            reader,
            counters,
            tap,
        },
    ))
}

fn write_vectored_all(stream: &mut TcpStream, slices: &mut [IoSlice<'_>]) -> io::Result<()> {
    let total: usize = slices.iter().map(|s| s.len()).sum();
    let mut written = 0usize;
    let mut idx = 0usize;
    let mut skip = 0usize;
    while written < total {
        // rebuild the slice window past what's already gone out
        let mut window: Vec<IoSlice<'_>> = Vec::with_capacity(slices.len() - idx);
        let first = &slices[idx][skip..];
        window.push(IoSlice::new(first));
        for s in &slices[idx + 1..] {
            window.push(IoSlice::new(s));
        }
        let n = stream.write_vectored(&window)?;
        if n == 0 {
            return Err(io::Error::new(io::ErrorKind::WriteZero, "socket closed"));
        }
        written += n;
        let mut remaining = n;
        while remaining > 0 && idx < slices.len() {
            let avail = slices[idx].len() - skip;
            if remaining >= avail {
                remaining -= avail;
                idx += 1;
                skip = 0;
            } else {
                skip += remaining;
                remaining = 0;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    fn pair() -> (TcpStream, TcpStream) {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = l.local_addr().unwrap();
        let a = TcpStream::connect(addr).unwrap();
        let (b, _) = l.accept().unwrap();
        (a, b)
    }

    #[test]
    fn frames_cross_both_flavors() {
        for provider in [ProviderKind::Stream, ProviderKind::RdmaSim] {
            let (a, b) = pair();
            let (tx, _) = split(a, provider).unwrap();
            let (_, mut rx) = split(b, provider).unwrap();
            tx.send(FrameType::EagerData, 7, &[b"hel", b"lo"]).unwrap();
            tx.send(FrameType::RdvNotify, 0, &[b"x"]).unwrap();
            let (h, p) = rx.recv_owned().unwrap();
            assert_eq!(h.frame_type, FrameType::EagerData);
            assert_eq!(h.flags, 7);
            assert_eq!(p, b"hello");
            let (h, p) = rx.recv_owned().unwrap();
            assert_eq!(h.frame_type, FrameType::RdvNotify);
            assert_eq!(p, b"x");
        }
    }

    #[test]
    fn counters_count_wire_bytes() {
        let (a, b) = pair();
        let (tx, _) = split(a, ProviderKind::Stream).unwrap();
        let (_, mut rx) = split(b, ProviderKind::Stream).unwrap();
        tx.send(FrameType::EagerData, 0, &[&[0u8; 100]]).unwrap();
        rx.recv_owned().unwrap();
        assert_eq!(tx.counters.bytes_tx.load(Ordering::Relaxed), 112);
        assert_eq!(rx.counters.bytes_rx.load(Ordering::Relaxed), 112);
        assert_eq!(rx.counters.frames_rx.load(Ordering::Relaxed), 1);
    }

    #[test]
    fn tap_captures_frames() {
        let (a, b) = pair();
        let (tx, _rx_a) = split(a, ProviderKind::RdmaSim).unwrap();
        let (_tx_b, mut rx) = split(b, ProviderKind::RdmaSim).unwrap();
        let tap: Tap = Arc::new(Mutex::new(Vec::new()));
        tx.set_tap(Some(tap.clone()));
        rx.tap_rx(&FrameHeader::new(FrameType::Error, 0, 0), &[]); // no tap installed: no-op
        tx.send(FrameType::EagerData, 0, &[b"abc"]).unwrap();
        let _ = rx.recv_owned().unwrap();
        let records = tap.lock();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].payload, b"abc");
        assert_eq!(records[0].dir, TapDir::Tx);
    }

    #[test]
    fn big_vectored_write_survives_partial_writes() {
        let (a, b) = pair();
        let (tx, _) = split(a, ProviderKind::RdmaSim).unwrap();
        let (_, mut rx) = split(b, ProviderKind::RdmaSim).unwrap();
        let big = vec![0xAB_u8; 3 << 20];
        let t = std::thread::spawn(move || {
            tx.send(FrameType::OnesidedData, 0, &[b"hdr", &big]).unwrap();
        });
        let (h, p) = rx.recv_owned().unwrap();
        assert_eq!(h.payload_len as usize, 3 + (3 << 20));
        assert_eq!(&p[..3], b"hdr");
        assert!(p[3..].iter().all(|&x| x == 0xAB));
        t.join().unwrap();
    }
}
