//! Expert model file.
//!
//! ```text
//! magic        8 bytes  "DDMEEXP1"
//! version      u32
//! mode         u8       1 forward, 2 uniform, 3 backward
//! negatives    u8       0 literal, 1 smoothed; then alpha f64
//! d_e          u32      embedding dimension
//! h            u32      hidden width
//! B            u64      bucket count
//! k            u32      category count
//! featurizer   as in the student format
//! labels       k x (len u32, UTF-8 bytes)
//! embedding    B x d_e f32
//! w1, b1       h x d_e, h f32
//! w2, b2       k x h, k f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::loss::{ExpertKind, ExpertLossMode, ExpertParams, NegativeScheme};
use super::ExpertModel;
use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};

pub const EXPERT_MAGIC: &[u8; 8] = b"DDMEEXP1";
pub const EXPERT_VERSION: u32 = 1;

pub fn write_expert<W: Write>(model: &ExpertModel, w: W) -> std::io::Result<()> {
    let p = &model.params;
    let mut w = BinWriter::new(w);
    w.bytes(EXPERT_MAGIC)?;
    w.u32(EXPERT_VERSION)?;
    w.u8(model.mode.kind.code())?;
    match model.mode.negative_scheme {
        NegativeScheme::Literal => {
            w.u8(0)?;
            w.f64(0.0)?;
        }
        NegativeScheme::Smoothed(alpha) => {
            w.u8(1)?;
            w.f64(alpha)?;
        }
    }
    w.u32(p.embed_dim as u32)?;
    w.u32(p.hidden as u32)?;
    w.u64(model.featurizer.buckets)?;
    w.u32(p.k as u32)?;
    w.featurizer(&model.featurizer)?;
    w.labels(&model.label_space)?;
    for block in [&p.embedding, &p.w1, &p.b1, &p.w2, &p.b2] {
        w.f32s(block)?;
    }
    w.into_inner().flush()
}

pub fn read_expert<R: Read>(r: R) -> Result<ExpertModel> {
    let mut r = BinReader::new(r);
    let magic: [u8; 8] = r.exact()?;
    if &magic != EXPERT_MAGIC {
        return Err(Error::Format("bad magic, not an expert model".to_string()));
    }
    let version = r.u32()?;
    if version != EXPERT_VERSION {
        return Err(Error::Format(format!("unsupported expert version {version}")));
    }
    let kind = ExpertKind::from_code(r.u8()?)
        .ok_or_else(|| Error::Format("unknown expert mode byte".to_string()))?;
    let scheme_code = r.u8()?;
    let alpha = r.f64()?;
    let negative_scheme = match scheme_code {
        0 => NegativeScheme::Literal,
        1 if alpha > 0.0 => NegativeScheme::Smoothed(alpha),
        _ => return Err(Error::Format("bad negative scheme".to_string())),
    };
    let de = r.u32()?;
    let h = r.u32()?;
    let buckets = r.u64()?;
    let k = r.u32()?;
    if de == 0 || h == 0 || k == 0 {
        return Err(Error::Format("zero dimension in header".to_string()));
    }
    let featurizer = r.featurizer(buckets)?;
    let label_space = r.labels(k)?;
    let (de64, h64, k64) = (u64::from(de), u64::from(h), u64::from(k));
    let embedding = r.f32_block(buckets, de64)?;
    let w1 = r.f32_block(h64, de64)?;
    let b1 = r.f32_block(h64, 1)?;
    let w2 = r.f32_block(k64, h64)?;
    let b2 = r.f32_block(k64, 1)?;
    r.expect_eof()?;
    Ok(ExpertModel {
        params: ExpertParams {
            buckets: buckets as usize,
            embed_dim: de as usize,
            hidden: h as usize,
            k: k as usize,
            embedding,
            w1,
            b1,
            w2,
            b2,
        },
        mode: ExpertLossMode {
            kind,
            negative_scheme,
        },
        featurizer,
        label_space,
    })
}

pub fn save_expert(model: &ExpertModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_expert(model, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_expert(path: &Path) -> Result<ExpertModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_expert(BufReader::new(file))
}
