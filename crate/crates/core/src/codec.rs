//! Sectioned little-endian binary container.
//!
//! Layout of every file written through this module:
//!
//! ```text
//! magic      8 bytes   file-kind tag, e.g. b"BCMFMODL"
//! version    u16 LE
//! sections   repeated until EOF:
//!   tag      4 bytes   ASCII section name
//!   len      u64 LE    payload length in bytes
//!   payload  len bytes
//! ```
//!
//! Payloads are built with [`SectionWriter`] and consumed with
//! [`SectionReader`]; floats are stored as raw IEEE-754 bits so a round trip
//! is bitwise exact.

use std::io::{Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic header: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },
    #[error("file truncated in section `{section}`")]
    Truncated { section: String },
    #[error("missing section `{0}`")]
    MissingSection(String),
    #[error("corrupt section `{section}`: {reason}")]
    Corrupt { section: String, reason: String },
}

pub type Result<T> = std::result::Result<T, CodecError>;

/// Writes a container: magic, version, then sections in call order.
pub struct ContainerWriter<W: Write> {
    inner: W,
}

impl<W: Write> ContainerWriter<W> {
    pub fn new(mut inner: W, magic: &[u8; 8], version: u16) -> Result<Self> {
        inner.write_all(magic)?;
        inner.write_all(&version.to_le_bytes())?;
        Ok(Self { inner })
    }

    pub fn section(&mut self, tag: &[u8; 4], payload: SectionWriter) -> Result<()> {
        self.inner.write_all(tag)?;
        self.inner
            .write_all(&(payload.buf.len() as u64).to_le_bytes())?;
        self.inner.write_all(&payload.buf)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// A parsed container: sections keyed by tag, in file order.
pub struct Container {
    sections: Vec<([u8; 4], Vec<u8>)>,
}

impl Container {
    pub fn read<R: Read>(mut input: R, magic: &[u8; 8], supported: u16) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::parse(&bytes, magic, supported)
    }

    pub fn parse(bytes: &[u8], magic: &[u8; 8], supported: u16) -> Result<Self> {
        if bytes.len() < 10 {
            return Err(CodecError::Truncated {
                section: "header".into(),
            });
        }
        if &bytes[..8] != magic {
            return Err(CodecError::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
            });
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != supported {
            return Err(CodecError::UnsupportedVersion {
                found: version,
                supported,
            });
        }
        let mut pos = 10;
        let mut sections = Vec::new();
        while pos < bytes.len() {
            if bytes.len() - pos < 12 {
                return Err(CodecError::Truncated {
                    section: "section header".into(),
                });
            }
            let tag: [u8; 4] = bytes[pos..pos + 4].try_into().unwrap();
            let len = u64::from_le_bytes(bytes[pos + 4..pos + 12].try_into().unwrap());
            pos += 12;
            let remaining = (bytes.len() - pos) as u64;
            if len > remaining {
                return Err(CodecError::Truncated {
                    section: tag_name(&tag),
                });
            }
            let end = pos + len as usize;
            sections.push((tag, bytes[pos..end].to_vec()));
            pos = end;
        }
        Ok(Self { sections })
    }

    pub fn has(&self, tag: &[u8; 4]) -> bool {
        self.sections.iter().any(|(t, _)| t == tag)
    }

    pub fn section(&self, tag: &[u8; 4]) -> Result<SectionReader<'_>> {
        self.sections
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(t, data)| SectionReader {
                name: tag_name(t),
                data,
                pos: 0,
            })
            .ok_or_else(|| CodecError::MissingSection(tag_name(tag)))
    }
}

fn tag_name(tag: &[u8; 4]) -> String {
    String::from_utf8_lossy(tag).trim_end().to_string()
}

#[derive(Default)]
pub struct SectionWriter {
    buf: Vec<u8>,
}

impl SectionWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
        self
    }

    pub fn f64s(&mut self, values: &[f64]) -> &mut Self {
        self.u64(values.len() as u64);
        self.buf.reserve(values.len() * 8);
        for &v in values {
            self.f64(v);
        }
        self
    }

    pub fn u32s(&mut self, values: &[u32]) -> &mut Self {
        self.u64(values.len() as u64);
        self.buf.reserve(values.len() * 4);
        for &v in values {
            self.u32(v);
        }
        self
    }

    pub fn strs<S: AsRef<str>>(&mut self, values: &[S]) -> &mut Self {
        self.u64(values.len() as u64);
        for s in values {
            self.str(s.as_ref());
        }
        self
    }
}

pub struct SectionReader<'a> {
    name: String,
    data: &'a [u8],
    pos: usize,
}

impl<'a> SectionReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(CodecError::Truncated {
                section: self.name.clone(),
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn corrupt(&self, reason: impl Into<String>) -> CodecError {
        CodecError::Corrupt {
            section: self.name.clone(),
            reason: reason.into(),
        }
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn len(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.u64()?;
        let remaining = (self.data.len() - self.pos) as u64;
        if n.saturating_mul(elem_size as u64) > remaining {
            return Err(CodecError::Truncated {
                section: self.name.clone(),
            });
        }
        Ok(n as usize)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.corrupt("invalid utf-8 string"))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn u32s(&mut self) -> Result<Vec<u32>> {
        let n = self.len(4)?;
        (0..n).map(|_| self.u32()).collect()
    }

    pub fn strs(&mut self) -> Result<Vec<String>> {
        // every string carries at least its 8-byte length prefix
        let n = self.len(8)?;
        (0..n).map(|_| self.str()).collect()
    }

    /// Fails unless the whole payload was consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(self.corrupt(format!("{} trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }
}
