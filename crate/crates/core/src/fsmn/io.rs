//! Binary model format, little-endian throughout:
//!
//! ```text
//! "FSMN" | u32 version | u32 input_dim, n_blocks, hidden, proj, lookback, mask_dim
//! f32 tensors: norm_mean, norm_std, input_weight, input_bias,
//!              per block { expand, expand_bias, project, memory },
//!              output_weight, output_bias
//! u64 total float count
//! ```

use std::io::Write;
use std::path::Path;

use super::model::{FsmnBlock, FsmnModel, FsmnShape};
use super::ModelError;

pub const MAGIC: [u8; 4] = *b"FSMN";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_BYTES: usize = 4 + 4 + 6 * 4;

pub fn write_model<W: Write>(model: &FsmnModel, mut w: W) -> Result<(), ModelError> {
    model.validate()?;
    let s = &model.shape;
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [s.input_dim, s.n_blocks, s.hidden, s.proj, s.lookback, s.mask_dim] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let mut count = 0u64;
    let mut put = |w: &mut W, t: &[f32]| -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(t.len() * 4);
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        count += t.len() as u64;
        w.write_all(&buf)
    };
    put(&mut w, &model.norm_mean)?;
    put(&mut w, &model.norm_std)?;
    put(&mut w, &model.input_weight)?;
    put(&mut w, &model.input_bias)?;
    for b in &model.blocks {
        put(&mut w, &b.expand)?;
        put(&mut w, &b.expand_bias)?;
        put(&mut w, &b.project)?;
        put(&mut w, &b.memory)?;
    }
    put(&mut w, &model.output_weight)?;
    put(&mut w, &model.output_bias)?;
    w.write_all(&count.to_le_bytes())?;
    Ok(())
}

pub fn save_model(model: &FsmnModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, needed_total: usize) -> Result<&[u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::Truncated {
                needed: needed_total.max(self.pos + n),
                available: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, needed: usize) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4, needed)?.try_into().unwrap()))
    }

    fn floats(&mut self, n: usize, needed: usize) -> Result<Vec<f32>, ModelError> {
        Ok(self
            .take(n * 4, needed)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Parses a complete model image.
pub fn read_model(bytes: &[u8]) -> Result<FsmnModel, ModelError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4, HEADER_BYTES)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(ModelError::BadMagic(magic));
    }
    let version = cur.u32(HEADER_BYTES)?;
    if version != FORMAT_VERSION {
        return Err(ModelError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = cur.u32(HEADER_BYTES)? as usize;
    }
    let shape = FsmnShape {
        input_dim: dims[0],
        n_blocks: dims[1],
        hidden: dims[2],
        proj: dims[3],
        lookback: dims[4],
        mask_dim: dims[5],
    };
    shape.validate()?;
    let expected = shape.float_count();
    let needed = HEADER_BYTES + 4 * expected + 8;
    if bytes.len() < needed {
        return Err(ModelError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    let s = shape;
    let norm_mean = cur.floats(s.input_dim, needed)?;
    let norm_std = cur.floats(s.input_dim, needed)?;
    let input_weight = cur.floats(s.proj * s.input_dim, needed)?;
    let input_bias = cur.floats(s.proj, needed)?;
    let mut blocks = Vec::with_capacity(s.n_blocks);
    for _ in 0..s.n_blocks {
        blocks.push(FsmnBlock {
            expand: cur.floats(s.hidden * s.proj, needed)?,
            expand_bias: cur.floats(s.hidden, needed)?,
            project: cur.floats(s.proj * s.hidden, needed)?,
            memory: cur.floats((s.lookback + 1) * s.proj, needed)?,
        });
    }
    let output_weight = cur.floats(s.mask_dim * s.proj, needed)?;
    let output_bias = cur.floats(s.mask_dim, needed)?;
    let stored = u64::from_le_bytes(cur.take(8, needed)?.try_into().unwrap());
    if stored != expected as u64 {
        return Err(ModelError::Checksum {
            stored,
            expected: expected as u64,
        });
    }
    if cur.pos != bytes.len() {
        return Err(ModelError::TrailingBytes(bytes.len() - cur.pos));
    }
    let model = FsmnModel {
        shape,
        norm_mean,
        norm_std,
        input_weight,
        input_bias,
        blocks,
        output_weight,
        output_bias,
    };
    model.validate()?;
    Ok(model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FsmnModel, ModelError> {
    read_model(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FsmnModel {
        let shape = FsmnShape { input_dim: 6, n_blocks: 2, hidden: 5, proj: 4, lookback: 3, mask_dim: 7 };
        FsmnModel::random(shape, 42)
    }

    fn encode(m: &FsmnModel) -> Vec<u8> {
        let mut buf = Vec::new();
        write_model(m, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = tiny();
        let bytes = encode(&m);
        assert_eq!(bytes.len(), HEADER_BYTES + 4 * m.shape.float_count() + 8);
        let back = read_model(&bytes).unwrap();
        assert_eq!(encode(&back), bytes);
        assert_eq!(back, m);
    }

    #[test]
    fn truncation_is_reported() {
        let bytes = encode(&tiny());
        for cut in [2, HEADER_BYTES - 1, HEADER_BYTES + 10, bytes.len() - 1] {
            match read_model(&bytes[..cut]) {
                Err(ModelError::Truncated { available, .. }) => assert_eq!(available, cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn version_bump_names_both_versions() {
        let mut bytes = encode(&tiny());
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        let err = read_model(&bytes).unwrap_err();
        assert!(matches!(err, ModelError::Version { found: 2, expected: 1 }));
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('1'));
    }

    #[test]
    fn magic_checksum_and_trailing() {
        let good = encode(&tiny());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(read_model(&bad), Err(ModelError::BadMagic(_))));

        let mut bad = good.clone();
        let n = bad.len();
        bad[n - 8..].copy_from_slice(&7u64.to_le_bytes());
        assert!(matches!(read_model(&bad), Err(ModelError::Checksum { stored: 7, .. })));

        let mut bad = good;
        bad.push(0);
        assert!(matches!(read_model(&bad), Err(ModelError::TrailingBytes(1))));
    }

    #[test]
    fn rejects_non_positive_std_on_load() {
        let mut m = tiny();
        let mut bytes = encode(&m);
        // std vector starts right after the mean vector
        let off = HEADER_BYTES + 4 * m.shape.input_dim;
        bytes[off..off + 4].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(matches!(read_model(&bytes), Err(ModelError::Shape(_))));
        m.norm_std[0] = -1.0;
        assert!(write_model(&m, Vec::new()).is_err());
    }
}
