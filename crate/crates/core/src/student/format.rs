//! Student model file.
//!
//! ```text
//! magic        8 bytes  "DDMESTU1"
//! version      u32
//! d            u32      embedding dimension
//! B            u64      bucket count
//! k            u32      category count
//! featurizer   word_ngram_max u32, char_ngram_min u32, char_ngram_max u32,
//!              min_word_count u32, lowercase u8
//! labels       k x (len u32, UTF-8 bytes)
//! embedding    B x d f32
//! output       k x d f32
//! ```
//! All integers and floats little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::StudentModel;
use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};

pub const STUDENT_MAGIC: &[u8; 8] = b"DDMESTU1";
pub const STUDENT_VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &StudentModel, w: W) -> std::io::Result<()> {
    let mut w = BinWriter::new(w);
    w.bytes(STUDENT_MAGIC)?;
    w.u32(STUDENT_VERSION)?;
    w.u32(model.dim() as u32)?;
    w.u64(model.buckets())?;
    w.u32(model.k() as u32)?;
    w.featurizer(model.featurizer())?;
    w.labels(model.label_space())?;
    w.f32s(model.embedding())?;
    w.f32s(model.output())?;
    w.into_inner().flush()
}

pub fn read_model<R: Read>(r: R) -> Result<StudentModel> {
    let mut r = BinReader::new(r);
    let magic: [u8; 8] = r.exact()?;
    if &magic != STUDENT_MAGIC {
        return Err(Error::Format("bad magic, not a student model".to_string()));
    }
    let version = r.u32()?;
    if version != STUDENT_VERSION {
        return Err(Error::Format(format!("unsupported student version {version}")));
    }
    let dim = r.u32()?;
    let buckets = r.u64()?;
    let k = r.u32()?;
    if dim == 0 || k == 0 {
        return Err(Error::Format("zero dimension in header".to_string()));
    }
    let featurizer = r.featurizer(buckets)?;
    let label_space = r.labels(k)?;
    let embedding = r.f32_block(buckets, u64::from(dim))?;
    let output = r.f32_block(u64::from(k), u64::from(dim))?;
    r.expect_eof()?;
    Ok(StudentModel::from_parts(
        dim as usize,
        embedding,
        output,
        featurizer,
        label_space,
    ))
}

pub fn save_model(model: &StudentModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(model, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<StudentModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelSpace;
    use crate::featurizer::FeaturizerConfig;

    fn tiny() -> StudentModel {
        let ls = LabelSpace::new(vec!["x".into(), "y".into()]).unwrap();
        let fc = FeaturizerConfig::default().with_buckets(8);
        let emb = (0..24).map(|i| i as f32 * 0.25 - 3.0).collect();
        StudentModel::from_parts(3, emb, vec![0.5, -1.0, 2.0, 0.0, 1e-3, -7.5], fc, ls)
    }

    #[test]
    fn round_trip_in_memory() {
        let m = tiny();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert_eq!(&buf[..8], STUDENT_MAGIC);
        assert_eq!(read_model(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn corrupted_magic() {
        let mut buf = Vec::new();
        write_model(&tiny(), &mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_model(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_and_trailing() {
        let mut buf = Vec::new();
        write_model(&tiny(), &mut buf).unwrap();
        let cut = &buf[..buf.len() - 3];
        assert!(matches!(read_model(cut), Err(Error::Format(_))));
        buf.push(0);
        assert!(matches!(read_model(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_version() {
        let mut buf = Vec::new();
        write_model(&tiny(), &mut buf).unwrap();
        buf[8] = 9;
        assert!(matches!(read_model(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn oversized_header_is_a_resource_error() {
        let mut w = BinWriter::new(Vec::new());
        w.bytes(STUDENT_MAGIC).unwrap();
        w.u32(STUDENT_VERSION).unwrap();
        w.u32(64).unwrap();
        w.u64(1 << 32).unwrap();
        w.u32(1).unwrap();
        w.featurizer(&FeaturizerConfig::default()).unwrap();
        w.string("only").unwrap();
        let buf = w.into_inner();
        match read_model(buf.as_slice()) {
            Err(Error::Resource(_)) => {}
            Err(Error::Format(msg)) if msg.contains("featurizer") => {
                panic!("featurizer block rejected before size check: {msg}")
            }
            other => panic!("expected resource error, got {other:?}"),
        }
    }
}
