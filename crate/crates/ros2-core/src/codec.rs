//! Little-endian record encoding used by every wire and on-disk format.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Raised when a record is shorter than its declared layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShortRecord;

impl fmt::Display for ShortRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("record truncated")
    }
}

/// Append-only little-endian writer.
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self { buf: Vec::new() }
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self {
            buf: Vec::with_capacity(cap),
        }
    }

    pub fn put_u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn put_u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn put_u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn put_u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn put_bytes(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    /// u16 length prefix + raw bytes. Panics if `v` exceeds 64 KiB - 1.
    pub fn put_var_bytes(&mut self, v: &[u8]) -> &mut Self {
        assert!(v.len() <= u16::MAX as usize, "var field too long");
        self.put_u16(v.len() as u16);
        self.put_bytes(v)
    }

    pub fn put_str(&mut self, v: &str) -> &mut Self {
        self.put_var_bytes(v.as_bytes())
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }
}

/// Cursor over a received record; every getter checks remaining length.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ShortRecord> {
        if self.remaining() < n {
            return Err(ShortRecord);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn get_u8(&mut self) -> Result<u8, ShortRecord> {
        Ok(self.take(1)?[0])
    }

    pub fn get_u16(&mut self) -> Result<u16, ShortRecord> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn get_u32(&mut self) -> Result<u32, ShortRecord> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn get_u64(&mut self) -> Result<u64, ShortRecord> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn get_bytes(&mut self, n: usize) -> Result<&'a [u8], ShortRecord> {
        self.take(n)
    }

    pub fn get_var_bytes(&mut self) -> Result<&'a [u8], ShortRecord> {
        let n = self.get_u16()? as usize;
        self.take(n)
    }

    pub fn get_string(&mut self) -> Result<String, ShortRecord> {
        let raw = self.get_var_bytes()?;
        core::str::from_utf8(raw)
            .map(String::from)
            .map_err(|_| ShortRecord)
    }

    /// Everything not yet consumed.
    pub fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_scalars() {
        let mut w = Writer::new();
        w.put_u8(0xAB)
            .put_u16(0x1234)
            .put_u32(0xDEADBEEF)
            .put_u64(0x0102030405060708)
            .put_var_bytes(b"hello");
        let v = w.into_vec();

        let mut r = Reader::new(&v);
        assert_eq!(r.get_u8().unwrap(), 0xAB);
        assert_eq!(r.get_u16().unwrap(), 0x1234);
        assert_eq!(r.get_u32().unwrap(), 0xDEADBEEF);
        assert_eq!(r.get_u64().unwrap(), 0x0102030405060708);
        assert_eq!(r.get_var_bytes().unwrap(), b"hello");
        assert_eq!(r.remaining(), 0);
    }

    #[test]
    fn short_record_detected() {
        let v = [1u8, 2, 3];
        let mut r = Reader::new(&v);
        assert_eq!(r.get_u32(), Err(ShortRecord));
        // failed read must not consume
        assert_eq!(r.get_u8().unwrap(), 1);
    }

    #[test]
    fn little_endian_layout() {
        let mut w = Writer::new();
        w.put_u32(1);
        assert_eq!(w.as_slice(), &[1, 0, 0, 0]);
    }
}
