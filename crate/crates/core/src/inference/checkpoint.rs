use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"AGGCXCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Position of a ChaCha stream, enough to recreate it exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngPosition {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngPosition {
    pub fn of(rng: &ChaCha8Rng) -> Self {
        RngPosition {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.seed);
        out.extend_from_slice(&self.stream.to_le_bytes());
        out.extend_from_slice(&self.word_pos.to_le_bytes());
    }

    fn read(buf: &[u8]) -> Self {
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&buf[..32]);
        let stream = u64::from_le_bytes(buf[32..40].try_into().expect("8 bytes"));
        let word_pos = u128::from_le_bytes(buf[40..56].try_into().expect("16 bytes"));
        RngPosition {
            seed,
            stream,
            word_pos,
        }
    }
}

const RNG_BYTES: usize = 56;

/// Writes `MAGIC | version (u32 LE) | rng positions | body length (u64 LE) | JSON body`.
pub fn write_checkpoint<T: Serialize>(path: &Path, rngs: &[RngPosition], body: &T) -> Result<()> {
    let json = serde_json::to_vec(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(json.len() + 128);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rngs.len() as u32).to_le_bytes());
    for r in rngs {
        r.write(&mut out);
    }
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&out).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<T: DeserializeOwned>(path: &Path) -> Result<(Vec<RngPosition>, T)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::Checkpoint(format!("{}: {why}", path.display()));
    if buf.len() < 16 || &buf[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(buf[12..16].try_into().expect("4 bytes")) as usize;
    let mut pos = 16;
    let mut rngs = Vec::with_capacity(n);
    for _ in 0..n {
        if buf.len() < pos + RNG_BYTES {
            return Err(bad("truncated"));
        }
        rngs.push(RngPosition::read(&buf[pos..pos + RNG_BYTES]));
        pos += RNG_BYTES;
    }
    if buf.len() < pos + 8 {
        return Err(bad("truncated"));
    }
    let len = u64::from_le_bytes(buf[pos..pos + 8].try_into().expect("8 bytes")) as usize;
    pos += 8;
    if buf.len() != pos + len {
        return Err(bad("body length mismatch"));
    }
    let body = serde_json::from_slice(&buf[pos..]).map_err(|e| bad(&e.to_string()))?;
    Ok((rngs, body))
}
