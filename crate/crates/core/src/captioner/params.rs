use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::rng_for;

/// Model widths, fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub hidden: usize,
    pub feat: usize,
    pub pos: usize,
    pub pos_embed: usize,
}

/// Named parameter blocks. Matrices are row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// Input word embeddings, `vocab × hidden`.
    EmbIn,
    /// Output word embeddings, `vocab × hidden`; also the decision module's word space.
    EmbOut,
    /// Output bias, `vocab`.
    OutBias,
    /// Recurrence, `hidden × hidden`.
    Wh,
    /// Input projection, `hidden × hidden`.
    Wx,
    /// Attended-feature projection, `hidden × feat`.
    Wv,
    /// Recurrence bias, `hidden`.
    B,
    /// Attention feature projection, `hidden × feat`.
    Wa,
    /// Attention scoring vector, `hidden`.
    Ua,
    /// POS head, `pos × hidden`.
    Wp,
    /// POS head bias, `pos`.
    Bp,
    /// POS embedding, `pos × pos_embed`.
    EPos,
    /// POS-embedding projection into the word-prediction state, `hidden × pos_embed`.
    Wc,
}

impl Block {
    pub const ALL: [Block; 13] = [
        Block::EmbIn,
        Block::EmbOut,
        Block::OutBias,
        Block::Wh,
        Block::Wx,
        Block::Wv,
        Block::B,
        Block::Wa,
        Block::Ua,
        Block::Wp,
        Block::Bp,
        Block::EPos,
        Block::Wc,
    ];

    pub fn shape(self, d: &Dims) -> (usize, usize) {
        match self {
            Block::EmbIn | Block::EmbOut => (d.vocab, d.hidden),
            Block::OutBias => (d.vocab, 1),
            Block::Wh | Block::Wx => (d.hidden, d.hidden),
            Block::Wv | Block::Wa => (d.hidden, d.feat),
            Block::B | Block::Ua => (d.hidden, 1),
            Block::Wp => (d.pos, d.hidden),
            Block::Bp => (d.pos, 1),
            Block::EPos => (d.pos, d.pos_embed),
            Block::Wc => (d.hidden, d.pos_embed),
        }
    }

    fn init_scale(self, d: &Dims) -> f64 {
        match self {
            Block::OutBias | Block::B | Block::Bp => 0.0,
            Block::EmbIn | Block::EmbOut | Block::EPos => 0.1,
            Block::Ua => 1.0 / (d.hidden as f64).sqrt(),
            _ => 1.0 / (self.shape(d).1 as f64).sqrt(),
        }
    }
}

/// All captioner weights in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionerParams {
    dims: Dims,
    offsets: [usize; 14],
    pub data: Vec<f64>,
}

impl CaptionerParams {
    pub fn zeros(dims: Dims) -> Self {
        let mut offsets = [0usize; 14];
        for (i, b) in Block::ALL.iter().enumerate() {
            let (r, c) = b.shape(&dims);
            offsets[i + 1] = offsets[i] + r * c;
        }
        CaptionerParams {
            dims,
            offsets,
            data: vec![0.0; offsets[13]],
        }
    }

    /// Uniform initialization scaled by fan-in; biases start at zero.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut p = Self::zeros(dims);
        let mut rng = rng_for(seed, &[0x6361_7074]);
        for b in Block::ALL {
            let s = b.init_scale(&dims);
            for x in p.block_mut(b) {
                *x = if s == 0.0 { 0.0 } else { rng.gen_range(-s..s) };
            }
        }
        p
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn range(&self, b: Block) -> std::ops::Range<usize> {
        let i = b as usize;
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn block(&self, b: Block) -> &[f64] {
        &self.data[self.range(b)]
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [f64] {
        let r = self.range(b);
        &mut self.data[r]
    }

    /// Row `row` of a matrix block.
    pub fn row(&self, b: Block, row: usize) -> &[f64] {
        let cols = b.shape(&self.dims).1;
        &self.block(b)[row * cols..(row + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: self.dims,
            data: self.data.clone(),
        };
        fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    /// Loads a checkpoint, rejecting any shape other than `expected`.
    pub fn load(path: &Path, expected: &Dims) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        Self::from_checkpoint(ck, expected)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: self.dims,
            data: self.data.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint, expected: &Dims) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.dims != *expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected:?}"),
                found: format!("{:?}", ck.dims),
            });
        }
        let mut p = Self::zeros(ck.dims);
        if ck.data.len() != p.data.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", p.data.len()),
                found: format!("{} values", ck.data.len()),
            });
        }
        p.data = ck.data;
        Ok(p)
    }
}

const CHECKPOINT_FORMAT: &str = "askcap-captioner";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dims: Dims,
    pub data: Vec<f64>,
}
