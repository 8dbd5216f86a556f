use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use super::weights::ScorerWeights;
use super::NeighborScorer;
use crate::error::{Error, Result};
use crate::model::{Assignment, GraphicalModel, Move, QuerySpec};

/// Moves scored per attention block; bounds the size of the score matrix.
const MOVE_CHUNK: usize = 512;

#[derive(Debug, Clone)]
struct Linear {
    w: Array2<f32>,
    b: Array1<f32>,
}

impl Linear {
    fn load(weights: &ScorerWeights, w: &str, b: &str) -> Result<Self> {
        let wt = weights.tensor(w)?;
        let bt = weights.tensor(b)?;
        let w = Array2::from_shape_vec((wt.shape[0], wt.shape[1]), wt.data.clone())
            .map_err(|e| Error::weights(Some(w), e.to_string()))?;
        let b = Array1::from_vec(bt.data.clone());
        Ok(Linear { w, b })
    }

    fn apply(&self, x: &ArrayView2<f32>) -> Array2<f32> {
        let mut y = x.dot(&self.w);
        y += &self.b;
        y
    }
}

#[derive(Debug, Clone)]
struct AttnLayer {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone)]
struct Block {
    l1: Linear,
    l2: Linear,
}

/// Attention scorer evaluated from exported weights (inference only).
///
/// Move embeddings query the embedded state through `n_attn_layers` multi-head
/// cross-attention layers; the state embeddings are shared keys/values and are not
/// updated between layers. The final move representation is concatenated with the
/// raw move embedding and fed through a ReLU encoder of residual blocks, then a
/// sigmoid head.
#[derive(Debug, Clone)]
pub struct NeuralScorer {
    weights: ScorerWeights,
    embed: Array2<f32>,
    attn: Vec<AttnLayer>,
    enc_in: Linear,
    blocks: Vec<Block>,
    head: Linear,
}

fn relu_inplace(a: &mut Array2<f32>) {
    a.mapv_inplace(|v| v.max(0.0));
}

fn sigmoid(z: f32) -> f64 {
    let z = z as f64;
    1.0 / (1.0 + (-z).exp())
}

impl NeuralScorer {
    pub fn new(weights: ScorerWeights) -> Result<Self> {
        weights.validate()?;
        let meta = weights.meta();
        let et = weights.tensor("embed")?;
        let embed = Array2::from_shape_vec((et.shape[0], et.shape[1]), et.data.clone())
            .map_err(|e| Error::weights(Some("embed"), e.to_string()))?;
        let attn = (0..meta.n_attn_layers)
            .map(|l| {
                let lin = |p: &str| Linear::load(&weights, &format!("attn.{l}.w{p}"), &format!("attn.{l}.b{p}"));
                Ok(AttnLayer {
                    q: lin("q")?,
                    k: lin("k")?,
                    v: lin("v")?,
                    o: lin("o")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let enc_in = Linear::load(&weights, "enc.in.w", "enc.in.b")?;
        let blocks = (0..meta.n_ffn_blocks)
            .map(|k| {
                Ok(Block {
                    l1: Linear::load(&weights, &format!("enc.{k}.w1"), &format!("enc.{k}.b1"))?,
                    l2: Linear::load(&weights, &format!("enc.{k}.w2"), &format!("enc.{k}.b2"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::load(&weights, "head.w", "head.b")?;
        Ok(NeuralScorer {
            weights,
            embed,
            attn,
            enc_in,
            blocks,
            head,
        })
    }

    pub fn weights(&self) -> &ScorerWeights {
        &self.weights
    }

    fn gather(&self, tokens: impl ExactSizeIterator<Item = usize>) -> Array2<f32> {
        let d = self.weights.meta().d_model;
        let mut out = Array2::zeros((tokens.len(), d));
        for (row, t) in tokens.enumerate() {
            out.row_mut(row).assign(&self.embed.row(t));
        }
        out
    }

    /// Probability that each move is distance-reducing, for state `x`.
    pub fn forward(&self, x: &Assignment, moves: &[Move]) -> Result<Vec<f64>> {
        let meta = self.weights.meta();
        if x.len() != meta.num_vars() {
            return Err(Error::weights(
                None,
                format!(
                    "network vocabulary covers {} variables, state has {}",
                    meta.num_vars(),
                    x.len()
                ),
            ));
        }
        for &m in moves.iter() {
            let next = meta.vocab_offsets.get(m.var + 1).copied().unwrap_or(meta.vocab_size);
            if m.var >= meta.num_vars() || meta.token(m.var, m.value) >= next {
                return Err(Error::contract(format!("move {m} outside the network vocabulary")));
            }
        }
        let state = self.gather(x.values().iter().enumerate().map(|(v, &val)| meta.token(v, val)));
        // keys and values per layer depend only on the state
        let kv: Vec<(Array2<f32>, Array2<f32>)> = self
            .attn
            .iter()
            .map(|l| (l.k.apply(&state.view()), l.v.apply(&state.view())))
            .collect();
        let mut out = Vec::with_capacity(moves.len());
        for chunk in moves.chunks(MOVE_CHUNK) {
            let raw = self.gather(chunk.iter().map(|m| meta.token(m.var, m.value)));
            let mut cur = raw.clone();
            for (layer, (k, v)) in self.attn.iter().zip(&kv) {
                let q = layer.q.apply(&cur.view());
                let ctx = self.multi_head(&q, k, v);
                cur = layer.o.apply(&ctx.view());
            }
            let cat =
                ndarray::concatenate(Axis(1), &[cur.view(), raw.view()]).expect("move representations share row count");
            let mut h = self.enc_in.apply(&cat.view());
            relu_inplace(&mut h);
            for b in &self.blocks {
                let mut t = b.l1.apply(&h.view());
                relu_inplace(&mut t);
                let t = b.l2.apply(&t.view());
                h += &t;
                relu_inplace(&mut h);
            }
            let logits = self.head.apply(&h.view());
            out.extend(logits.column(0).iter().map(|&z| sigmoid(z)));
        }
        Ok(out)
    }

    fn multi_head(&self, q: &Array2<f32>, k: &Array2<f32>, v: &Array2<f32>) -> Array2<f32> {
        let meta = self.weights.meta();
        let dh = meta.d_model / meta.n_heads;
        let scale = 1.0 / (dh as f32).sqrt();
        let mut ctx = Array2::zeros(q.raw_dim());
        for h in 0..meta.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t());
            scores *= scale;
            for mut row in scores.rows_mut() {
                let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                row.mapv_inplace(|s| (s - max).exp());
                let sum = row.sum();
                row /= sum;
            }
            let head = scores.dot(&v.slice(cols));
            Zip::from(ctx.slice_mut(cols)).and(&head).for_each(|c, &hv| *c = hv);
        }
        ctx
    }
}

impl NeighborScorer for NeuralScorer {
    fn score_all(&self, _model: &GraphicalModel, x: &Assignment, _q: &QuerySpec, moves: &[Move]) -> Result<Vec<f64>> {
        self.forward(x, moves)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::WeightsMeta;

    #[test]
    fn zero_network_is_half() {
        let meta = WeightsMeta {
            d_model: 8,
            n_heads: 2,
            n_attn_layers: 2,
            n_ffn_blocks: 3,
            ffn_dim: 5,
            vocab_offsets: vec![0, 2, 5],
            vocab_size: 7,
        };
        let nn = NeuralScorer::new(ScorerWeights::zeros(meta)).unwrap();
        let x = Assignment::new(vec![1, 0, 1]);
        let out = nn
            .forward(&x, &[Move::new(0, 0), Move::new(1, 2), Move::new(2, 0)])
            .unwrap();
        assert_eq!(out, vec![0.5; 3]);
    }

    #[test]
    fn rejects_out_of_vocab_move() {
        let meta = WeightsMeta {
            d_model: 2,
            n_heads: 1,
            n_attn_layers: 1,
            n_ffn_blocks: 1,
            ffn_dim: 2,
            vocab_offsets: vec![0, 2],
            vocab_size: 4,
        };
        let nn = NeuralScorer::new(ScorerWeights::zeros(meta)).unwrap();
        let x = Assignment::new(vec![0, 0]);
        assert!(nn.forward(&x, &[Move::new(0, 2)]).is_err());
        assert!(nn.forward(&Assignment::new(vec![0]), &[Move::new(0, 1)]).is_err());
    }
}
