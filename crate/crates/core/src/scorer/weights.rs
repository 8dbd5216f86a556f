//! Weight container for the attention scorer.
//!
//! Layout: an ASCII header terminated by the line `end`, followed immediately by the
//! raw payload of little-endian `f32` values. Header lines, in order:
//!
//! ```text
//! MPEWEIGHTS 1
//! d_model <int>
//! n_heads <int>
//! n_attn_layers <int>
//! n_ffn_blocks <int>
//! ffn_dim <int>
//! num_vars <int>
//! vocab_size <int>
//! vocab_offsets <int> ... (num_vars values)
//! tensor_count <int>
//! tensor <name> <byte offset> <rank> <dim> ...   (tensor_count lines)
//! payload_bytes <int>
//! checksum sha256 <hex digest of the payload>
//! end
//! ```
//!
//! Offsets are relative to the first payload byte; every tensor is stored row-major.
//! Linear layers hold `[in, out]` matrices and compute `y = x W + b`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::GraphicalModel;

pub const WEIGHTS_MAGIC: &str = "MPEWEIGHTS";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightsMeta {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_attn_layers: usize,
    pub n_ffn_blocks: usize,
    pub ffn_dim: usize,
    /// Token id of `(var, 0)`; `(var, val)` maps to `vocab_offsets[var] + val`.
    pub vocab_offsets: Vec<usize>,
    pub vocab_size: usize,
}

impl WeightsMeta {
    /// Vocabulary laid out variable by variable for `model`.
    pub fn for_model(
        model: &GraphicalModel,
        d_model: usize,
        n_heads: usize,
        n_attn_layers: usize,
        n_ffn_blocks: usize,
        ffn_dim: usize,
    ) -> Self {
        let mut offsets = Vec::with_capacity(model.num_vars());
        let mut next = 0;
        for &c in model.cardinalities() {
            offsets.push(next);
            next += c;
        }
        WeightsMeta {
            d_model,
            n_heads,
            n_attn_layers,
            n_ffn_blocks,
            ffn_dim,
            vocab_offsets: offsets,
            vocab_size: next,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.vocab_offsets.len()
    }

    #[inline]
    pub fn token(&self, var: usize, value: usize) -> usize {
        self.vocab_offsets[var] + value
    }

    /// Names and shapes of every tensor the forward pass needs.
    pub fn required_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let h = self.ffn_dim;
        let mut out = vec![("embed".to_string(), vec![self.vocab_size, d])];
        for l in 0..self.n_attn_layers {
            for p in ["wq", "wk", "wv", "wo"] {
                out.push((format!("attn.{l}.{p}"), vec![d, d]));
            }
            for p in ["bq", "bk", "bv", "bo"] {
                out.push((format!("attn.{l}.{p}"), vec![d]));
            }
        }
        out.push(("enc.in.w".into(), vec![2 * d, h]));
        out.push(("enc.in.b".into(), vec![h]));
        for k in 0..self.n_ffn_blocks {
            out.push((format!("enc.{k}.w1"), vec![h, h]));
            out.push((format!("enc.{k}.b1"), vec![h]));
            out.push((format!("enc.{k}.w2"), vec![h, h]));
            out.push((format!("enc.{k}.b2"), vec![h]));
        }
        out.push(("head.w".into(), vec![h, 1]));
        out.push(("head.b".into(), vec![1]));
        out
    }

    fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.ffn_dim == 0 {
            return Err(Error::weights(None, "d_model, n_heads and ffn_dim must be positive"));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::weights(
                None,
                format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads),
            ));
        }
        let mut prev_end = 0;
        for (v, &off) in self.vocab_offsets.iter().enumerate() {
            if off < prev_end || off >= self.vocab_size {
                return Err(Error::weights(
                    None,
                    format!("vocab offset of variable {v} overlaps or exceeds vocab_size"),
                ));
            }
            prev_end = off + 1;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }
}

/// Network parameters plus vocabulary metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerWeights {
    meta: WeightsMeta,
    tensors: BTreeMap<String, Tensor>,
}

impl ScorerWeights {
    pub fn new(meta: WeightsMeta, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        let w = ScorerWeights { meta, tensors };
        w.validate()?;
        Ok(w)
    }

    /// All-zero network; every output is exactly `sigmoid(0) = 0.5`.
    pub fn zeros(meta: WeightsMeta) -> Self {
        let tensors = meta
            .required_tensors()
            .into_iter()
            .map(|(name, shape)| (name, Tensor::zeros(shape)))
            .collect();
        ScorerWeights { meta, tensors }
    }

    pub fn meta(&self) -> &WeightsMeta {
        &self.meta
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::weights(Some(name), "missing tensor"))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        for (name, shape) in self.meta.required_tensors() {
            let t = self.tensor(&name)?;
            if t.shape != shape {
                return Err(Error::weights(
                    Some(&name),
                    format!("shape {:?}, expected {:?}", t.shape, shape),
                ));
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::weights(Some(&name), "data length does not match shape"));
            }
        }
        Ok(())
    }

    /// Checks that the vocabulary matches the model's variables and domains.
    pub fn check_model(&self, model: &GraphicalModel) -> Result<()> {
        let expected = WeightsMeta::for_model(model, 0, 0, 0, 0, 0);
        if self.meta.vocab_offsets != expected.vocab_offsets || self.meta.vocab_size != expected.vocab_size {
            return Err(Error::weights(
                None,
                format!(
                    "vocabulary ({} vars, {} tokens) does not match model ({} vars, {} tokens)",
                    self.meta.num_vars(),
                    self.meta.vocab_size,
                    model.num_vars(),
                    expected.vocab_size
                ),
            ));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        let mut dir = String::new();
        for (name, t) in &self.tensors {
            let _ = write!(dir, "tensor {name} {} {}", payload.len(), t.shape.len());
            for d in &t.shape {
                let _ = write!(dir, " {d}");
            }
            dir.push('\n');
            for v in &t.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let m = &self.meta;
        let mut header = String::new();
        let _ = writeln!(header, "{WEIGHTS_MAGIC} {WEIGHTS_VERSION}");
        let _ = writeln!(header, "d_model {}", m.d_model);
        let _ = writeln!(header, "n_heads {}", m.n_heads);
        let _ = writeln!(header, "n_attn_layers {}", m.n_attn_layers);
        let _ = writeln!(header, "n_ffn_blocks {}", m.n_ffn_blocks);
        let _ = writeln!(header, "ffn_dim {}", m.ffn_dim);
        let _ = writeln!(header, "num_vars {}", m.num_vars());
        let _ = writeln!(header, "vocab_size {}", m.vocab_size);
        let offs: Vec<String> = m.vocab_offsets.iter().map(|o| o.to_string()).collect();
        let _ = writeln!(header, "vocab_offsets {}", offs.join(" "));
        let _ = writeln!(header, "tensor_count {}", self.tensors.len());
        header.push_str(&dir);
        let _ = writeln!(header, "payload_bytes {}", payload.len());
        let _ = writeln!(header, "checksum sha256 {}", hex::encode(Sha256::digest(&payload)));
        header.push_str("end\n");
        let mut out = header.into_bytes();
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut lines = Vec::new();
        loop {
            let nl = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::weights(None, "header not terminated by `end`"))?;
            let line = std::str::from_utf8(&bytes[pos..pos + nl])
                .map_err(|_| Error::weights(None, "header is not valid UTF-8"))?;
            pos += nl + 1;
            if line.trim() == "end" {
                break;
            }
            lines.push(line);
        }
        let payload = &bytes[pos..];
        let mut it = lines.into_iter();
        let mut field = |key: &str| -> Result<Vec<&str>> {
            let line = it
                .next()
                .ok_or_else(|| Error::weights(None, format!("header ends before `{key}`")))?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some(k) if k == key => Ok(parts.collect()),
                other => Err(Error::weights(
                    None,
                    format!("expected header field `{key}`, found `{}`", other.unwrap_or("")),
                )),
            }
        };
        let num = |vals: &[&str], key: &str| -> Result<usize> {
            match vals {
                [v] => v
                    .parse()
                    .map_err(|_| Error::weights(None, format!("`{key}` is not an integer"))),
                _ => Err(Error::weights(None, format!("`{key}` expects one value"))),
            }
        };

        let version = field(WEIGHTS_MAGIC)?;
        if version != [WEIGHTS_VERSION.to_string().as_str()] {
            return Err(Error::weights(None, format!("unsupported format version {version:?}")));
        }
        let d_model = num(&field("d_model")?, "d_model")?;
        let n_heads = num(&field("n_heads")?, "n_heads")?;
        let n_attn_layers = num(&field("n_attn_layers")?, "n_attn_layers")?;
        let n_ffn_blocks = num(&field("n_ffn_blocks")?, "n_ffn_blocks")?;
        let ffn_dim = num(&field("ffn_dim")?, "ffn_dim")?;
        let num_vars = num(&field("num_vars")?, "num_vars")?;
        let vocab_size = num(&field("vocab_size")?, "vocab_size")?;
        let vocab_offsets = field("vocab_offsets")?
            .iter()
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::weights(None, "vocab_offsets entry is not an integer"))
            })
            .collect::<Result<Vec<usize>>>()?;
        if vocab_offsets.len() != num_vars {
            return Err(Error::weights(None, "vocab_offsets length differs from num_vars"));
        }
        let count = num(&field("tensor_count")?, "tensor_count")?;
        let mut directory = Vec::with_capacity(count);
        for _ in 0..count {
            let parts = field("tensor")?;
            let bad = || Error::weights(None, "malformed tensor directory line");
            let name = parts.first().ok_or_else(bad)?.to_string();
            let nums = parts[1..]
                .iter()
                .map(|p| p.parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            if nums.len() < 2 || nums.len() != 2 + nums[1] {
                return Err(Error::weights(Some(&name), "malformed tensor directory line"));
            }
            directory.push((name, nums[0], nums[2..].to_vec()));
        }
        let payload_bytes = num(&field("payload_bytes")?, "payload_bytes")?;
        let checksum = field("checksum")?;
        if payload.len() != payload_bytes {
            return Err(Error::weights(
                None,
                format!(
                    "payload is {} bytes, header says {payload_bytes} (truncated?)",
                    payload.len()
                ),
            ));
        }
        match checksum.as_slice() {
            ["sha256", digest] => {
                if hex::encode(Sha256::digest(payload)) != digest.to_ascii_lowercase() {
                    return Err(Error::weights(None, "checksum mismatch"));
                }
            }
            _ => return Err(Error::weights(None, "unsupported checksum field")),
        }
        if it.next().is_some() {
            return Err(Error::weights(None, "unexpected header lines after checksum"));
        }

        let mut tensors = BTreeMap::new();
        for (name, offset, shape) in directory {
            let n: usize = shape.iter().product();
            let end = offset + 4 * n;
            if offset % 4 != 0 || end > payload.len() {
                return Err(Error::weights(Some(&name), "tensor data outside payload"));
            }
            let data = payload[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if tensors.insert(name.clone(), Tensor { shape, data }).is_some() {
                return Err(Error::weights(Some(&name), "duplicate tensor"));
            }
        }
        let meta = WeightsMeta {
            d_model,
            n_heads,
            n_attn_layers,
            n_ffn_blocks,
            ffn_dim,
            vocab_offsets,
            vocab_size,
        };
        ScorerWeights::new(meta, tensors)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}
