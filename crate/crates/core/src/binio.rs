//! Little-endian primitives shared by the student and expert model formats.

use std::io::{self, Read, Write};

use crate::corpus::LabelSpace;
use crate::error::{Error, Result};
use crate::featurizer::FeaturizerConfig;

/// Refuse single parameter blocks above this size (bytes).
pub const MAX_BLOCK_BYTES: u64 = 8 << 30;

pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn bytes(&mut self, b: &[u8]) -> io::Result<()> {
        self.inner.write_all(b)
    }

    pub fn u8(&mut self, v: u8) -> io::Result<()> {
        self.bytes(&[v])
    }

    pub fn u32(&mut self, v: u32) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f32s(&mut self, vs: &[f32]) -> io::Result<()> {
        let mut buf = Vec::with_capacity(vs.len() * 4);
        for v in vs {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.bytes(&buf)
    }

    pub fn string(&mut self, s: &str) -> io::Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }

    /// word_ngram_max u32, char_ngram_min u32, char_ngram_max u32,
    /// min_word_count u32, lowercase u8.
    pub fn featurizer(&mut self, cfg: &FeaturizerConfig) -> io::Result<()> {
        self.u32(cfg.word_ngram_max)?;
        self.u32(cfg.char_ngram_min)?;
        self.u32(cfg.char_ngram_max)?;
        self.u32(cfg.min_word_count)?;
        self.u8(cfg.lowercase as u8)
    }

    pub fn labels(&mut self, labels: &LabelSpace) -> io::Result<()> {
        for c in labels.categories() {
            self.string(c)?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub struct BinReader<R: Read> {
    inner: R,
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("truncated file".to_string())
    } else {
        Error::Format(e.to_string())
    }
}

impl<R: Read> BinReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    pub fn exact<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(truncated)?;
        Ok(buf)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.exact::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.exact()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.exact()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.exact()?))
    }

    pub fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        if len > 1 << 20 {
            return Err(Error::Format(format!("string length {len} out of range")));
        }
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf).map_err(truncated)?;
        String::from_utf8(buf).map_err(|_| Error::Format("label is not UTF-8".to_string()))
    }

    pub fn featurizer(&mut self, buckets: u64) -> Result<FeaturizerConfig> {
        let cfg = FeaturizerConfig {
            buckets,
            word_ngram_max: self.u32()?,
            char_ngram_min: self.u32()?,
            char_ngram_max: self.u32()?,
            min_word_count: self.u32()?,
            lowercase: self.u8()? != 0,
        };
        cfg.validate()
            .map_err(|e| Error::Format(format!("featurizer block: {e}")))?;
        Ok(cfg)
    }

    pub fn labels(&mut self, k: u32) -> Result<LabelSpace> {
        let mut cats = Vec::new();
        for _ in 0..k {
            cats.push(self.string()?);
        }
        LabelSpace::new(cats).map_err(|e| Error::Format(e.to_string()))
    }

    /// Reads `rows * cols` f32 values, checking the allocation first.
    pub fn f32_block(&mut self, rows: u64, cols: u64) -> Result<Vec<f32>> {
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Resource(format!("{rows} x {cols} block overflows")))?;
        let bytes = count
            .checked_mul(4)
            .filter(|b| *b <= MAX_BLOCK_BYTES)
            .ok_or_else(|| {
                Error::Resource(format!(
                    "{rows} x {cols} f32 block exceeds the {MAX_BLOCK_BYTES}-byte limit"
                ))
            })?;
        let bytes = usize::try_from(bytes)
            .map_err(|_| Error::Resource(format!("{bytes} bytes do not fit in memory")))?;
        let mut raw = Vec::new();
        raw.try_reserve_exact(bytes)
            .map_err(|e| Error::Resource(format!("cannot allocate {bytes} bytes: {e}")))?;
        (&mut self.inner)
            .take(bytes as u64)
            .read_to_end(&mut raw)
            .map_err(truncated)?;
        if raw.len() != bytes {
            return Err(Error::Format("truncated file".to_string()));
        }
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Format("trailing bytes after model".to_string())),
            Err(e) => Err(Error::Format(e.to_string())),
        }
    }
}
