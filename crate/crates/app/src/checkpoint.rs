//! Model checkpoints: magic + version header, length-prefixed JSON config,
//! then parameter blocks in declaration order as little-endian f32. Loading
//! is all-or-nothing; a truncated or corrupted file never yields a partial
//! model.

use std::fs;
use std::path::Path;

use tags2v_core::model::{TagModel, TagModelConfig};
use tags2v_core::tensor::Tensor;

use crate::error::AppError;

pub const MAGIC: &[u8; 8] = b"TAGS2V01";
pub const VERSION: u32 = 1;

/// Serializes the model. Parameters are stored as f32; training keeps f64
/// internally, so saving quantizes once and a save→load→save cycle is
/// byte-identical.
pub fn save_checkpoint(model: &TagModel, path: &Path) -> Result<(), AppError> {
    let config_json = serde_json::to_vec(&model.config)
        .map_err(|e| AppError::data(format!("config serialization failed: {e}")))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config_json);
    for param in model.params() {
        buf.extend_from_slice(&(param.numel() as u32).to_le_bytes());
        for &v in param.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AppError> {
        if self.pos + n > self.bytes.len() {
            return Err(AppError::data(format!("{}: truncated checkpoint", self.path)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, AppError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<TagModel, AppError> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0, path: path.display().to_string() };
    let name = path.display();
    if cur.take(8)? != MAGIC {
        return Err(AppError::data(format!("{name}: not a checkpoint (bad magic)")));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(AppError::data(format!(
            "{name}: unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let config_len = cur.u32()? as usize;
    let config: TagModelConfig = serde_json::from_slice(cur.take(config_len)?)
        .map_err(|e| AppError::data(format!("{name}: bad config block: {e}")))?;

    // Shapes come from the config; the file stores only flat data.
    let template = TagModel::new(config.clone()).map_err(AppError::from)?;
    let names = template.param_names();
    let mut parts = Vec::with_capacity(names.len());
    for (i, (shape_src, pname)) in template.params().iter().zip(&names).enumerate() {
        let count = cur.u32()? as usize;
        if count != shape_src.numel() {
            return Err(AppError::data(format!(
                "{name}: parameter block {i} ({pname}) has {count} values, expected {}",
                shape_src.numel()
            )));
        }
        let raw = cur.take(count * 4)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        parts.push(
            Tensor::new(shape_src.shape().to_vec(), data)
                .map_err(|e| AppError::data(format!("{name}: block {i} ({pname}): {e}")))?,
        );
    }
    if cur.pos != bytes.len() {
        return Err(AppError::data(format!(
            "{name}: {} trailing bytes after parameter blocks",
            bytes.len() - cur.pos
        )));
    }
    TagModel::from_parts(config, parts).map_err(AppError::from)
}

// ── tests ───────────────────────────────────────────────────────────────────
