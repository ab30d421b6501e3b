//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "HRCPRED\0"
//! version      u32
//! header_len   u32
//! header       UTF-8 JSON {"config": ModelConfig, "norm": Normalizer}
//! count        u32
//! count × {
//!   name_len   u32
//!   name       UTF-8
//!   ndim       u32
//!   dims       ndim × u32
//!   values     product(dims) × f64
//! }
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, Normalizer, PredictorModel};
use crate::error::{Error, Result};
use crate::numeric::{ParamVector, Tensor};

const MAGIC: &[u8; 8] = b"HRCPRED\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    norm: Normalizer,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn write_checkpoint(model: &PredictorModel, out: &mut impl Write) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        norm: model.norm.clone(),
    })?;
    put_u32(&mut buf, header.len())?;
    buf.extend_from_slice(&header);
    let params = model.named_params();
    put_u32(&mut buf, params.len())?;
    for (name, t) in params {
        put_u32(&mut buf, name.len())?;
        buf.extend_from_slice(name.as_bytes());
        put_u32(&mut buf, t.ndim())?;
        for &d in t.shape() {
            put_u32(&mut buf, d)?;
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)
        .map_err(|e| Error::Checkpoint(format!("write failed: {e}")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<PredictorModel> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint (bad magic)".into()));
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let header_len = r.u32()?;
    let header: Header = serde_json::from_slice(r.take(header_len)?)?;
    let mut model = PredictorModel::zeros(header.config)?.with_normalizer(header.norm);

    let count = r.u32()?;
    let expected = model.param_names();
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "{count} parameters stored, model layout needs {}",
            expected.len()
        )));
    }
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let values = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        entries.push((name, Tensor::new(shape, values)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let stored = ParamVector::new(entries)?;
    for name in &expected {
        if stored.get(name).is_none() {
            return Err(Error::Checkpoint(format!("missing parameter `{name}`")));
        }
    }
    model.write_params(&stored)?;
    Ok(model)
}

pub fn save_checkpoint(model: &PredictorModel, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, &mut file)
}

pub fn load_checkpoint(path: &Path) -> Result<PredictorModel> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ScoreFn, Variant};
    use crate::numeric::Seed;

    #[test]
    fn round_trip_is_exact() {
        for variant in [Variant::Multi, Variant::Intent, Variant::Trajectory] {
            let cfg = ModelConfig {
                variant,
                score: ScoreFn::Cosine,
                ..ModelConfig::with_hidden(5)
            };
            let mut norm = Normalizer::default();
            norm.mean[2] = 0.1 + 0.2;
            norm.std[4] = 1.0 / 3.0;
            let model = PredictorModel::new(cfg, Seed(17)).unwrap().with_normalizer(norm);
            let mut buf = Vec::new();
            write_checkpoint(&model, &mut buf).unwrap();
            let back = read_checkpoint(&mut buf.as_slice()).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn corrupt_input_rejected() {
        let model = PredictorModel::new(ModelConfig::with_hidden(3), Seed(1)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        assert!(read_checkpoint(&mut &buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
    }
}
