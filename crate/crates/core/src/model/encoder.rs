use super::{Dropout, Initializer, ModelConfig};
use crate::error::{Error, Result};
use crate::numcore::{cst, Float, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::pairseq::EncodedPair;

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    ln1_g: ParamId,
    ln1_b: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Per layer, one attention probability matrix per head.
pub type AttentionMaps<T> = Vec<Vec<Tensor<T>>>;

/// One pre-norm transformer encoder. Holds parameter handles only; the
/// tensors live in the owning model's [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBranch {
    pub(crate) word: ParamId,
    pub(crate) seg: ParamId,
    pub(crate) pos: ParamId,
    layers: Vec<Layer>,
    d_model: usize,
    n_heads: usize,
}

impl EncoderBranch {
    pub(crate) fn new<T: Float>(prefix: &str, cfg: &ModelConfig, store: &mut ParamStore<T>, init: &mut Initializer) -> Self {
        let d = cfg.d_model;
        let mut add_normal = |store: &mut ParamStore<T>, name: String, shape: &[usize]| store.add(name, init.trunc_normal(shape));
        let word = add_normal(store, format!("{prefix}.word_emb"), &[cfg.vocab_size, d]);
        let seg = add_normal(store, format!("{prefix}.seg_emb"), &[2, d]);
        let pos = add_normal(store, format!("{prefix}.pos_emb"), &[cfg.max_len, d]);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = format!("{prefix}.l{l}");
            let ones = |store: &mut ParamStore<T>, n: &str| store.add(format!("{p}.{n}"), Tensor::filled(&[1, d], T::one()));
            let zeros = |store: &mut ParamStore<T>, n: &str, w: usize| store.add(format!("{p}.{n}"), Tensor::zeros(&[1, w]));
            let ln1_g = ones(store, "ln1.g");
            let ln1_b = zeros(store, "ln1.b", d);
            let wq = add_normal(store, format!("{p}.attn.wq"), &[d, d]);
            let bq = zeros(store, "attn.bq", d);
            let wk = add_normal(store, format!("{p}.attn.wk"), &[d, d]);
            let bk = zeros(store, "attn.bk", d);
            let wv = add_normal(store, format!("{p}.attn.wv"), &[d, d]);
            let bv = zeros(store, "attn.bv", d);
            let wo = add_normal(store, format!("{p}.attn.wo"), &[d, d]);
            let bo = zeros(store, "attn.bo", d);
            let ln2_g = ones(store, "ln2.g");
            let ln2_b = zeros(store, "ln2.b", d);
            let w1 = add_normal(store, format!("{p}.ffn.w1"), &[d, cfg.d_ff]);
            let b1 = zeros(store, "ffn.b1", cfg.d_ff);
            let w2 = add_normal(store, format!("{p}.ffn.w2"), &[cfg.d_ff, d]);
            let b2 = zeros(store, "ffn.b2", d);
            layers.push(Layer {
                ln1_g,
                ln1_b,
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                ln2_g,
                ln2_b,
                w1,
                b1,
                w2,
                b2,
            });
        }
        Self {
            word,
            seg,
            pos,
            layers,
            d_model: d,
            n_heads: cfg.n_heads,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Word + segment + position embeddings, `[len, d_model]`.
    pub fn embed<T: Float>(&self, params: &ParamStore<T>, g: &mut Graph<T>, input_ids: &[u32], segment_ids: &[u8]) -> Result<NodeId> {
        if input_ids.len() != segment_ids.len() {
            return Err(Error::Shape {
                op: "embed",
                left: vec![input_ids.len()],
                right: vec![segment_ids.len()],
            });
        }
        let max_len = params.get(self.pos).shape()[0];
        if input_ids.len() > max_len {
            return Err(Error::Index {
                op: "position embedding",
                index: input_ids.len() - 1,
                bound: max_len,
            });
        }
        let ids: Vec<usize> = input_ids.iter().map(|&i| i as usize).collect();
        let segs: Vec<usize> = segment_ids.iter().map(|&s| s as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let word = g.param(params, self.word);
        let seg = g.param(params, self.seg);
        let pos = g.param(params, self.pos);
        let w = g.embedding(word, &ids)?;
        let s = g.embedding(seg, &segs)?;
        let p = g.embedding(pos, &positions)?;
        let ws = g.add(w, s)?;
        g.add(ws, p)
    }

    /// Multi-head self-attention of layer `layer` on `x`. Returns the
    /// concatenated head outputs before the output projection, and the
    /// attention weight nodes, one `[len, len]` matrix per head.
    pub fn attention<T: Float>(
        &self,
        params: &ParamStore<T>,
        g: &mut Graph<T>,
        layer: usize,
        x: NodeId,
        attention_mask: &[u8],
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let l = self.layers.get(layer).ok_or_else(|| Error::Model(format!("no layer {layer}")))?;
        let len = g.value(x).shape()[0];
        if attention_mask.len() != len {
            return Err(Error::Shape {
                op: "attention",
                left: vec![len],
                right: vec![attention_mask.len()],
            });
        }
        let mut proj = |w, b| -> Result<NodeId> {
            let (w, b) = (g.param(params, w), g.param(params, b));
            g.linear(x, w, b)
        };
        let q = proj(l.wq, l.bq)?;
        let k = proj(l.wk, l.bk)?;
        let v = proj(l.wv, l.bv)?;
        let dh = self.d_model / self.n_heads;
        let scale = cst::<T>(1.0 / (dh as f64).sqrt());
        let key_mask: Vec<bool> = (0..len).flat_map(|_| attention_mask.iter().map(|&m| m == 0)).collect();
        let mut heads = Vec::with_capacity(self.n_heads);
        let mut maps = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale);
            let scores = g.masked_fill(scores, &key_mask)?;
            let attn = g.row_softmax(scores)?;
            maps.push(attn);
            heads.push(g.matmul(attn, vh)?);
        }
        let ctx = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
        Ok((ctx, maps))
    }

    /// Runs every layer over `h`. Returns final hidden states and the
    /// attention maps of every layer and head.
    pub(crate) fn encode<T: Float>(
        &self,
        params: &ParamStore<T>,
        g: &mut Graph<T>,
        mut h: NodeId,
        attention_mask: &[u8],
        dropout: &mut Dropout,
    ) -> Result<(NodeId, Vec<Vec<NodeId>>)> {
        let mut all_maps = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let (g1, b1) = (g.param(params, l.ln1_g), g.param(params, l.ln1_b));
            let x = g.layer_norm(h, g1, b1)?;
            let (ctx, maps) = self.attention(params, g, i, x, attention_mask)?;
            all_maps.push(maps);
            let (wo, bo) = (g.param(params, l.wo), g.param(params, l.bo));
            let a = g.linear(ctx, wo, bo)?;
            let a = dropout.apply(g, a)?;
            h = g.add(h, a)?;

            let (g2, b2) = (g.param(params, l.ln2_g), g.param(params, l.ln2_b));
            let x = g.layer_norm(h, g2, b2)?;
            let (w1, fb1) = (g.param(params, l.w1), g.param(params, l.b1));
            let f = g.linear(x, w1, fb1)?;
            let f = g.gelu(f);
            let (w2, fb2) = (g.param(params, l.w2), g.param(params, l.b2));
            let f = g.linear(f, w2, fb2)?;
            let f = dropout.apply(g, f)?;
            h = g.add(h, f)?;
        }
        Ok((h, all_maps))
    }

    /// Hidden state at the CLS position, `[1, d_model]`.
    pub(crate) fn cls<T: Float>(&self, params: &ParamStore<T>, g: &mut Graph<T>, pair: &EncodedPair, dropout: &mut Dropout) -> Result<NodeId> {
        let h = self.embed(params, g, &pair.input_ids, &pair.segment_ids)?;
        let h = dropout.apply(g, h)?;
        let (h, _) = self.encode(params, g, h, &pair.attention_mask, dropout)?;
        g.slice_rows(h, 0, 1)
    }

    /// Hidden states and attention maps of one pair in eval mode.
    pub fn run<T: Float>(&self, params: &ParamStore<T>, pair: &EncodedPair) -> Result<(Tensor<T>, AttentionMaps<T>)> {
        let mut g = Graph::new();
        let h = self.embed(params, &mut g, &pair.input_ids, &pair.segment_ids)?;
        let (h, maps) = self.encode(params, &mut g, h, &pair.attention_mask, &mut Dropout::new(0.0, super::Mode::Eval))?;
        let maps = maps.iter().map(|layer| layer.iter().map(|&m| g.value(m).clone()).collect()).collect();
        Ok((g.value(h).clone(), maps))
    }
}
