//! Shared plumbing for the crate's binary file formats.
//!
//! Every binary store follows the same envelope: 4 magic bytes, a u32
//! little-endian format version, a format-specific payload, and a trailing
//! SHA-256 over everything before it. Readers verify the checksum first (so
//! truncation and bit rot surface as [`Error::CorruptFile`]), then the magic,
//! then the version.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub(crate) fn sha256(bytes: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().into()
}

/// Accumulates an envelope-framed payload in memory.
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &'static str, version: u32) -> Writer {
        debug_assert_eq!(magic.len(), 4);
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(magic.as_bytes());
        buf.extend_from_slice(&version.to_le_bytes());
        Writer { buf }
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    /// Length-prefixed (u16) byte string.
    pub fn put_str(&mut self, v: &str) {
        debug_assert!(v.len() <= u16::MAX as usize);
        self.put_u16(v.len() as u16);
        self.buf.extend_from_slice(v.as_bytes());
    }

    /// Append the checksum and return the finished bytes.
    pub fn finish(mut self) -> Vec<u8> {
        let sum = sha256(&self.buf);
        self.buf.extend_from_slice(&sum);
        self.buf
    }

    pub fn finish_to(self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.finish()).map_err(|e| Error::io(path, e))
    }
}

/// Cursor over a verified envelope payload.
pub(crate) struct Reader {
    buf: Vec<u8>,
    pos: usize,
    end: usize,
}

impl Reader {
    pub fn open(path: impl AsRef<Path>, magic: &'static str, version: u32) -> Result<Reader> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Reader::from_bytes(buf, magic, version)
    }

    pub fn from_bytes(buf: Vec<u8>, magic: &'static str, version: u32) -> Result<Reader> {
        debug_assert_eq!(magic.len(), 4);
        if buf.len() < 4 + 4 + 32 {
            return Err(Error::CorruptFile(format!(
                "file is {} bytes, smaller than the smallest valid envelope",
                buf.len()
            )));
        }
        let body = buf.len() - 32;
        if sha256(&buf[..body])[..] != buf[body..] {
            return Err(Error::CorruptFile(
                "trailing checksum does not match contents".into(),
            ));
        }
        if &buf[..4] != magic.as_bytes() {
            return Err(Error::BadMagic { expected: magic });
        }
        let found = u32::from_le_bytes(buf[4..8].try_into().unwrap());
        if found != version {
            return Err(Error::VersionMismatch(format!(
                "format version {found}, this build reads version {version}"
            )));
        }
        Ok(Reader {
            buf,
            pos: 8,
            end: body,
        })
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.end - self.pos < n {
            return Err(Error::CorruptFile(format!(
                "payload ended early: wanted {n} more bytes, {} remain",
                self.end - self.pos
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn take_u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn take_u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn take_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn take_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn take_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn take_array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn take_str(&mut self) -> Result<String> {
        let len = self.take_u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::CorruptFile("string field is not UTF-8".into()))
    }

    /// Every byte of the payload must have been consumed.
    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.end {
            return Err(Error::CorruptFile(format!(
                "{} unexpected trailing payload bytes",
                self.end - self.pos
            )));
        }
        Ok(())
    }
}
