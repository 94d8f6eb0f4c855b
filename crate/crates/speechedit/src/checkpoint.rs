//! Single-file checkpoint archive.
//!
//! ```text
//! b"SPEDCKPT"  u32 LE version  u64 LE header length  header JSON  payload
//! ```
//!
//! The payload is a sequence of little-endian f32 blocks described by the
//! header (`name`, `rows`, `cols`, byte `offset` into the payload). Blocks
//! hold the acoustic and duration parameters and both Adam states.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use speechedit_core::acoustic::{AcousticModel, DurationModel, ModelConfig, Models, Trainer};
use speechedit_core::nn::{Adam, AdamConfig, Mat, ParamStore};

use crate::fsutil::{read, write_atomic};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"SPEDCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: ModelConfig,
    pub step: u64,
    pub seed: u64,
    pub speakers: Vec<String>,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub acoustic_adam_step: u64,
    pub duration_adam_step: u64,
    pub blocks: Vec<BlockInfo>,
}

/// Trainer state plus the speaker table it was trained with.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub trainer: Trainer,
    pub speakers: Vec<String>,
}

impl Checkpoint {
    pub fn models(&self) -> &Models {
        &self.trainer.models
    }
}

fn push_block(blocks: &mut Vec<BlockInfo>, payload: &mut Vec<u8>, name: String, m: &Mat) {
    blocks.push(BlockInfo { name, rows: m.rows(), cols: m.cols(), offset: payload.len() });
    payload.extend(m.data().iter().flat_map(|v| (*v as f32).to_le_bytes()));
}

fn push_store(blocks: &mut Vec<BlockInfo>, payload: &mut Vec<u8>, prefix: &str, store: &ParamStore, adam: &Adam) {
    for (name, m) in store.iter() {
        push_block(blocks, payload, format!("{prefix}/{name}"), m);
    }
    for (id, (m, v)) in store.ids().zip(adam.m.iter().zip(&adam.v)) {
        let name = store.name(id);
        push_block(blocks, payload, format!("{prefix}.adam_m/{name}"), m);
        push_block(blocks, payload, format!("{prefix}.adam_v/{name}"), v);
    }
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let t = &ckpt.trainer;
    let mut blocks = Vec::new();
    let mut payload = Vec::new();
    push_store(&mut blocks, &mut payload, "acoustic", &t.models.acoustic.params, &t.acoustic_opt);
    push_store(&mut blocks, &mut payload, "duration", &t.models.duration.params, &t.duration_opt);
    let header = Header {
        config: t.models.acoustic.config.clone(),
        step: t.models.acoustic.step,
        seed: t.models.acoustic.seed,
        speakers: ckpt.speakers.clone(),
        optimizer: t.acoustic_opt.config.clone(),
        batch_size: t.batch_size,
        acoustic_adam_step: t.acoustic_opt.step,
        duration_adam_step: t.duration_opt.step,
        blocks,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Internal(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

struct Reader<'a> {
    path: &'a Path,
    header: Header,
    payload: &'a [u8],
}

impl Reader<'_> {
    fn block(&self, name: &str, rows: usize, cols: usize) -> Result<Mat> {
        let b = self
            .header
            .blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::format(self.path, format!("missing block {name}")))?;
        if (b.rows, b.cols) != (rows, cols) {
            return Err(Error::format(self.path, format!("block {name} is {}x{}, model expects {rows}x{cols}", b.rows, b.cols)));
        }
        let bytes = self
            .payload
            .get(b.offset..b.offset + rows * cols * 4)
            .ok_or_else(|| Error::format(self.path, format!("block {name} runs past the end of the file")))?;
        let data: Vec<f64> = bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(self.path, format!("block {name} has non-finite values")));
        }
        Ok(Mat::from_vec(rows, cols, data))
    }

    fn fill(&self, prefix: &str, store: &mut ParamStore, adam: &mut Adam) -> Result<()> {
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let (r, c) = (store.get(id).rows(), store.get(id).cols());
            *store.get_mut(id) = self.block(&format!("{prefix}/{name}"), r, c)?;
            adam.m[id.index()] = self.block(&format!("{prefix}.adam_m/{name}"), r, c)?;
            adam.v[id.index()] = self.block(&format!("{prefix}.adam_v/{name}"), r, c)?;
        }
        Ok(())
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let bad = |m: &str| Error::format(path, m);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint archive"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let json = bytes.get(20..20 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| Error::format(path, e))?;
    let config = header.config.clone();
    let mut acoustic = AcousticModel::new(config.clone(), header.seed).map_err(|e| Error::format(path, e))?;
    let mut duration = DurationModel::new(config, header.seed).map_err(|e| Error::format(path, e))?;
    let mut acoustic_opt = Adam::new(header.optimizer.clone(), &acoustic.params);
    let mut duration_opt = Adam::new(header.optimizer.clone(), &duration.params);
    let reader = Reader { path, payload: &bytes[20 + len..], header };
    reader.fill("acoustic", &mut acoustic.params, &mut acoustic_opt)?;
    reader.fill("duration", &mut duration.params, &mut duration_opt)?;
    let header = reader.header;
    acoustic.step = header.step;
    acoustic_opt.step = header.acoustic_adam_step;
    duration_opt.step = header.duration_adam_step;
    let trainer = Trainer { models: Models { acoustic, duration }, acoustic_opt, duration_opt, batch_size: header.batch_size.max(1) };
    Ok(Checkpoint { trainer, speakers: header.speakers })
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode(ckpt)?)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&read(path)?, path)
}

/// Hex SHA-256 of the archive bytes.
pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Checkpoint {
        let config = ModelConfig { scale_factor: 1.0 / 32.0, n_speakers: 2, ..Default::default() };
        let trainer = Trainer::new(config, AdamConfig::default(), 9, 4).unwrap();
        Checkpoint { trainer, speakers: vec!["a".into(), "b".into()] }
    }

    #[test]
    fn round_trip_is_f32_exact() {
        let ckpt = tiny();
        let bytes = encode(&ckpt).unwrap();
        let back = decode(&bytes, Path::new("x")).unwrap();
        assert_eq!(back.speakers, ckpt.speakers);
        for ((n1, a), (n2, b)) in ckpt.trainer.models.acoustic.params.iter().zip(back.trainer.models.acoustic.params.iter()) {
            assert_eq!(n1, n2);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
        // A second cycle is lossless.
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&tiny()).unwrap();
        assert!(decode(&bytes[..10], Path::new("x")).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode(&wrong, Path::new("x")).is_err());
        assert!(decode(&bytes[..bytes.len() - 4], Path::new("x")).is_err());
    }
}
