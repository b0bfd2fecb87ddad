//! Pre-norm transformer encoder with a pooled or label-attention head.
//!
//! An [`EncoderInput`] holds one classification example as a set of rows
//! (one row for a plain sequence, several for a segmented one). Rows are
//! encoded independently with positions restarting at 0; the head sees all
//! valid positions of all rows in order.

use ndarray::{s, Array1, Array2, Axis, NdFloat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{HeadKind, ModelConfig, Pooling};
use super::ops::{self, cst, LayerNormCache};
use super::params::{Grads, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::text::SegmentBatch;

/// Token ids and validity mask, rows × row length.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInput {
    pub ids: Array2<u32>,
    pub mask: Array2<bool>,
}

impl EncoderInput {
    /// A single unpadded row.
    pub fn single(ids: &[u32]) -> Self {
        let n = ids.len();
        Self {
            ids: Array2::from_shape_vec((1, n), ids.to_vec()).expect("shape"),
            mask: Array2::from_elem((1, n), true),
        }
    }

    /// A single row right-padded to `len` slots.
    pub fn padded(ids: &[u32], len: usize, pad_id: u32) -> Self {
        let len = len.max(ids.len());
        let mut row = ids.to_vec();
        row.resize(len, pad_id);
        let mask = (0..len).map(|i| i < ids.len()).collect();
        Self {
            ids: Array2::from_shape_vec((1, len), row).expect("shape"),
            mask: Array2::from_shape_vec((1, len), mask).expect("shape"),
        }
    }

    pub fn from_segments(batch: &SegmentBatch) -> Self {
        Self { ids: batch.segments.clone(), mask: batch.pad_mask.clone() }
    }

    pub fn rows(&self) -> usize {
        self.ids.nrows()
    }

    pub fn row_len(&self) -> usize {
        self.ids.ncols()
    }

    /// Flat indices (row-major) of valid positions.
    pub fn valid_positions(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout active; masks are drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LoraIds {
    pub a: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LinearIds {
    pub w: ParamId,
    pub b: ParamId,
    pub lora: Option<LoraIds>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NormIds {
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LayerIds {
    pub ln1: NormIds,
    pub query: LinearIds,
    pub key: LinearIds,
    pub value: LinearIds,
    pub out: LinearIds,
    pub ln2: NormIds,
    pub up: LinearIds,
    pub down: LinearIds,
}

impl LayerIds {
    pub fn projection_mut(&mut self, target: super::LoraTarget) -> &mut LinearIds {
        match target {
            super::LoraTarget::Query => &mut self.query,
            super::LoraTarget::Key => &mut self.key,
            super::LoraTarget::Value => &mut self.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum HeadIds {
    Pooled { hidden: Option<(ParamId, ParamId)>, out_w: ParamId, out_b: ParamId },
    LabelAttention { query: ParamId, weight: ParamId, bias: ParamId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LoraState {
    pub rank: usize,
    pub targets: Vec<super::LoraTarget>,
    /// Index of the first adapter tensor in the store; adapters are last.
    pub first_param: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    pub config: ModelConfig,
    pub params: ParamStore<F>,
    pub(crate) tok_emb: ParamId,
    pub(crate) pos_emb: Option<ParamId>,
    pub(crate) layers: Vec<LayerIds>,
    pub(crate) final_ln: NormIds,
    pub(crate) head: HeadIds,
    pub(crate) lora: Option<LoraState>,
}

/// Final-layer states of one row, valid positions only (n × hidden).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput<F> {
    pub states: Array2<F>,
}

/// Inference result for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<F> {
    pub logits: Vec<F>,
    pub probabilities: Vec<F>,
    /// Label-attention weights, labels × valid tokens.
    pub attention: Option<Array2<F>>,
    /// Label-attention value vectors, labels × hidden.
    pub label_values: Option<Array2<F>>,
    /// Pooled sequence vector of the pooled head.
    pub pooled: Option<Array1<F>>,
}

struct LayerCache<F> {
    ln1: LayerNormCache<F>,
    a: Array2<F>,
    lora_q: Option<Array2<F>>,
    lora_k: Option<Array2<F>>,
    lora_v: Option<Array2<F>>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    probs: Vec<Array2<F>>,
    attn: Array2<F>,
    drop_attn: Option<Array2<F>>,
    ln2: LayerNormCache<F>,
    b: Array2<F>,
    pre: Array2<F>,
    act: Array2<F>,
    drop_ffn: Option<Array2<F>>,
}

enum HeadCache<F> {
    Pooled { e: Array1<F>, z: Option<Array1<F>> },
    Label { valid: Vec<usize>, hv: Array2<F>, alpha: Array2<F>, values: Array2<F> },
}

/// Everything needed to backpropagate through one forward pass.
pub struct ForwardPass<F> {
    ids: Array2<u32>,
    mask: Array2<bool>,
    drop_emb: Option<Array2<F>>,
    layers: Vec<LayerCache<F>>,
    final_ln: LayerNormCache<F>,
    head: HeadCache<F>,
    pub logits: Vec<F>,
}

impl<F> ForwardPass<F> {
    pub fn attention(&self) -> Option<&Array2<F>> {
        match &self.head {
            HeadCache::Label { alpha, .. } => Some(alpha),
            HeadCache::Pooled { .. } => None,
        }
    }
}

impl<F: NdFloat> Model<F> {
    /// Builds a randomly initialised model.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let d = config.hidden;
        let emb_std = 0.02;

        let tok_emb = store.push("embed.tokens", normal(&mut rng, config.vocab_size, d, emb_std));
        let pos_emb = config
            .positional
            .then(|| store.push("embed.positions", normal(&mut rng, config.max_positions, d, emb_std)));

        let linear = |store: &mut ParamStore<F>, rng: &mut ChaCha8Rng, name: &str, i: usize, o: usize| {
            let std = (2.0 / (i + o) as f64).sqrt();
            LinearIds {
                w: store.push(format!("{name}.weight"), normal(rng, i, o, std)),
                b: store.push(format!("{name}.bias"), Array2::zeros((1, o))),
                lora: None,
            }
        };
        let norm = |store: &mut ParamStore<F>, name: &str| NormIds {
            gamma: store.push(format!("{name}.gamma"), Array2::ones((1, d))),
            beta: store.push(format!("{name}.beta"), Array2::zeros((1, d))),
        };

        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("layer{l}");
            layers.push(LayerIds {
                ln1: norm(&mut store, &format!("{p}.ln1")),
                query: linear(&mut store, &mut rng, &format!("{p}.attn.query"), d, d),
                key: linear(&mut store, &mut rng, &format!("{p}.attn.key"), d, d),
                value: linear(&mut store, &mut rng, &format!("{p}.attn.value"), d, d),
                out: linear(&mut store, &mut rng, &format!("{p}.attn.out"), d, d),
                ln2: norm(&mut store, &format!("{p}.ln2")),
                up: linear(&mut store, &mut rng, &format!("{p}.ffn.up"), d, config.ff_dim),
                down: linear(&mut store, &mut rng, &format!("{p}.ffn.down"), config.ff_dim, d),
            });
        }
        let final_ln = norm(&mut store, "final_ln");

        let t = config.num_labels;
        let head = match config.head_kind {
            HeadKind::PooledMlp => {
                let (hidden, width) = match config.pooled_hidden {
                    Some(hd) => {
                        let l = linear(&mut store, &mut rng, "head.hidden", d, hd);
                        (Some((l.w, l.b)), hd)
                    }
                    None => (None, d),
                };
                let out = linear(&mut store, &mut rng, "head.out", width, t);
                HeadIds::Pooled { hidden, out_w: out.w, out_b: out.b }
            }
            HeadKind::LabelAttention => HeadIds::LabelAttention {
                query: store.push("head.label_query", normal(&mut rng, t, d, 0.02)),
                weight: store.push("head.label_weight", normal(&mut rng, t, d, (1.0 / d as f64).sqrt())),
                bias: store.push("head.label_bias", Array2::zeros((1, t))),
            },
        };

        Ok(Self { config, params: store, tok_emb, pos_emb, layers, final_ln, head, lora: None })
    }

    /// Same architecture and values in another float type.
    pub fn cast<G: NdFloat>(&self) -> Model<G> {
        Model {
            config: self.config.clone(),
            params: self.params.map(|v| G::from(v).expect("float cast")),
            tok_emb: self.tok_emb,
            pos_emb: self.pos_emb,
            layers: self.layers.clone(),
            final_ln: self.final_ln,
            head: self.head.clone(),
            lora: self.lora.clone(),
        }
    }

    pub fn is_head_param(name: &str) -> bool {
        name.starts_with("head.")
    }

    /// Zeroes every head tensor.
    pub fn zero_head(&mut self) {
        for p in self.params.iter_mut().filter(|p| Self::is_head_param(&p.name)) {
            p.value.fill(F::zero());
        }
    }

    pub fn validate_input(&self, input: &EncoderInput) -> Result<()> {
        if input.ids.raw_dim() != input.mask.raw_dim() {
            return Err(Error::Shape("ids and mask shapes differ".into()));
        }
        self.config.check_input_length(input.row_len()).map_err(|e| Error::arg(e.to_string()))?;
        for (r, row) in input.ids.rows().into_iter().enumerate() {
            if let Some(&bad) = row.iter().find(|&&id| id as usize >= self.config.vocab_size) {
                return Err(Error::arg(format!(
                    "sequence {r}: token id {bad} outside vocabulary of {}",
                    self.config.vocab_size
                )));
            }
        }
        Ok(())
    }

    /// Per-row final states at valid positions.
    pub fn encode(&self, input: &EncoderInput) -> Result<Vec<EncoderOutput<F>>> {
        self.validate_input(input)?;
        let (h, _) = self.encoder_forward(input, Mode::Eval, false);
        let len = input.row_len();
        Ok((0..input.rows())
            .map(|r| {
                let valid: Vec<usize> =
                    (0..len).filter(|&j| input.mask[[r, j]]).map(|j| r * len + j).collect();
                EncoderOutput { states: h.select(Axis(0), &valid) }
            })
            .collect())
    }

    pub fn predict(&self, input: &EncoderInput) -> Result<Prediction<F>> {
        self.validate_input(input)?;
        let (h, _) = self.encoder_forward(input, Mode::Eval, false);
        let (logits, head) = self.head_forward(&h, &input.mask)?;
        let probabilities = ops::softmax(&logits);
        Ok(match head {
            HeadCache::Pooled { e, .. } => Prediction {
                logits,
                probabilities,
                attention: None,
                label_values: None,
                pooled: Some(e),
            },
            HeadCache::Label { alpha, values, .. } => Prediction {
                logits,
                probabilities,
                attention: Some(alpha),
                label_values: Some(values),
                pooled: None,
            },
        })
    }

    /// Forward pass keeping every intermediate needed by [`Model::backward`].
    pub fn forward(&self, input: &EncoderInput, mode: Mode) -> Result<ForwardPass<F>> {
        self.validate_input(input)?;
        let (h, caches) = self.encoder_forward(input, mode, true);
        let caches = caches.expect("caches requested");
        let (logits, head) = self.head_forward(&h, &input.mask)?;
        Ok(ForwardPass {
            ids: input.ids.clone(),
            mask: input.mask.clone(),
            drop_emb: caches.0,
            layers: caches.1,
            final_ln: caches.2,
            head,
            logits,
        })
    }

    #[allow(clippy::type_complexity)]
    fn encoder_forward(
        &self,
        input: &EncoderInput,
        mode: Mode,
        keep: bool,
    ) -> (Array2<F>, Option<(Option<Array2<F>>, Vec<LayerCache<F>>, LayerNormCache<F>)>) {
        let p = &self.params;
        let cfg = &self.config;
        let (rows, len) = (input.rows(), input.row_len());
        let n = rows * len;
        let d = cfg.hidden;
        let mut dropout = DropoutSource::new(mode, cfg.dropout);

        let tok = p.get(self.tok_emb);
        let mut x = Array2::<F>::zeros((n, d));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            let id = input.ids[[i / len, i % len]] as usize;
            row.assign(&tok.row(id));
            if let Some(pos) = self.pos_emb {
                row += &p.get(pos).row(i % len);
            }
        }
        let drop_emb = dropout.apply(&mut x);

        let mut caches = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        for layer in &self.layers {
            let (a, ln1) = ops::layer_norm(&x, p.get(layer.ln1.gamma), p.get(layer.ln1.beta));
            let (q, lora_q) = self.linear(&layer.query, &a);
            let (k, lora_k) = self.linear(&layer.key, &a);
            let (v, lora_v) = self.linear(&layer.value, &a);
            let (attn, probs) = self.attention(&q, &k, &v, &input.mask, keep);
            let (mut y, _) = self.linear(&layer.out, &attn);
            let drop_attn = dropout.apply(&mut y);
            x += &y;

            let (b, ln2) = ops::layer_norm(&x, p.get(layer.ln2.gamma), p.get(layer.ln2.beta));
            let (pre, _) = self.linear(&layer.up, &b);
            let act = ops::gelu(&pre);
            let (mut z, _) = self.linear(&layer.down, &act);
            let drop_ffn = dropout.apply(&mut z);
            x += &z;

            if keep {
                caches.push(LayerCache {
                    ln1,
                    a,
                    lora_q,
                    lora_k,
                    lora_v,
                    q,
                    k,
                    v,
                    probs,
                    attn,
                    drop_attn,
                    ln2,
                    b,
                    pre,
                    act,
                    drop_ffn,
                });
            }
        }
        let (h, final_ln) = ops::layer_norm(&x, p.get(self.final_ln.gamma), p.get(self.final_ln.beta));
        let cache = keep.then_some((drop_emb, caches, final_ln));
        (h, cache)
    }

    fn linear(&self, ids: &LinearIds, x: &Array2<F>) -> (Array2<F>, Option<Array2<F>>) {
        let p = &self.params;
        let mut y = ops::affine(x, p.get(ids.w), p.get(ids.b));
        let xa = ids.lora.map(|l| {
            let xa = x.dot(&p.get(l.a).t());
            y += &xa.dot(&p.get(l.b).t());
            xa
        });
        (y, xa)
    }

    /// Multi-head attention, each row attending only within itself and
    /// only to valid keys.
    fn attention(
        &self,
        q: &Array2<F>,
        k: &Array2<F>,
        v: &Array2<F>,
        mask: &Array2<bool>,
        keep: bool,
    ) -> (Array2<F>, Vec<Array2<F>>) {
        let (rows, len) = mask.dim();
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let scale = cst::<F>(1.0 / (dh as f64).sqrt());
        let mut out = Array2::zeros(q.raw_dim());
        let mut probs = Vec::with_capacity(if keep { rows * heads } else { 0 });
        for r in 0..rows {
            let valid = mask.row(r);
            for h in 0..heads {
                let rs = r * len..(r + 1) * len;
                let cs = h * dh..(h + 1) * dh;
                let qh = q.slice(s![rs.clone(), cs.clone()]);
                let kh = k.slice(s![rs.clone(), cs.clone()]);
                let vh = v.slice(s![rs.clone(), cs.clone()]);
                let mut scores = qh.dot(&kh.t());
                for mut row in scores.rows_mut() {
                    let row = row.as_slice_mut().expect("contiguous scores");
                    row.iter_mut().for_each(|x| *x = *x * scale);
                    ops::masked_softmax_in_place(row, |j| valid[j]);
                }
                out.slice_mut(s![rs, cs]).assign(&scores.dot(&vh));
                if keep {
                    probs.push(scores);
                }
            }
        }
        (out, probs)
    }

    fn head_forward(&self, h: &Array2<F>, mask: &Array2<bool>) -> Result<(Vec<F>, HeadCache<F>)> {
        let p = &self.params;
        let valid: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        match &self.head {
            HeadIds::Pooled { hidden, out_w, out_b } => {
                let e = match self.config.pooling {
                    Pooling::Start => h.row(valid.first().copied().unwrap_or(0)).to_owned(),
                    Pooling::MaskedMean => {
                        if valid.is_empty() {
                            Array1::zeros(h.ncols())
                        } else {
                            h.select(Axis(0), &valid).sum_axis(Axis(0)) / cst::<F>(valid.len() as f64)
                        }
                    }
                };
                let z = hidden.map(|(w, b)| (e.dot(p.get(w)) + p.get(b).row(0)).mapv(|v| v.tanh()));
                let top = z.as_ref().unwrap_or(&e);
                let logits = (top.dot(p.get(*out_w)) + p.get(*out_b).row(0)).to_vec();
                Ok((logits, HeadCache::Pooled { e, z }))
            }
            HeadIds::LabelAttention { query, weight, bias } => {
                if valid.is_empty() {
                    return Err(Error::arg("label attention over an all-masked input"));
                }
                let hv = h.select(Axis(0), &valid);
                // labels × tokens
                let mut alpha = p.get(*query).dot(&hv.t());
                for mut row in alpha.rows_mut() {
                    ops::masked_softmax_in_place(row.as_slice_mut().expect("contiguous"), |_| true);
                }
                let values = alpha.dot(&hv);
                let w = p.get(*weight);
                let b = p.get(*bias);
                let logits = (0..self.config.num_labels)
                    .map(|l| values.row(l).dot(&w.row(l)) + b[[0, l]])
                    .collect();
                Ok((logits, HeadCache::Label { valid, hv, alpha, values }))
            }
        }
    }

    /// Accumulates gradients of `Σ dlogits · logits` into `grads`.
    pub fn backward(&self, pass: &ForwardPass<F>, dlogits: &[F], grads: &mut Grads<F>) {
        if grads.tracked() == 0 {
            return;
        }
        let p = &self.params;
        let (rows, len) = pass.mask.dim();
        let n = rows * len;
        let d = self.config.hidden;
        let dl = Array1::from(dlogits.to_vec());

        let mut dh = Array2::<F>::zeros((n, d));
        match (&self.head, &pass.head) {
            (HeadIds::Pooled { hidden, out_w, out_b }, HeadCache::Pooled { e, z }) => {
                let top = z.as_ref().unwrap_or(e);
                grads.add(*out_w, &outer(top, &dl));
                grads.add(*out_b, &dl.clone().insert_axis(Axis(0)));
                let mut de = p.get(*out_w).dot(&dl);
                if let (Some((w, b)), Some(z)) = (hidden, z) {
                    let dpre = &de * &z.mapv(|t| F::one() - t * t);
                    grads.add(*w, &outer(e, &dpre));
                    grads.add(*b, &dpre.clone().insert_axis(Axis(0)));
                    de = p.get(*w).dot(&dpre);
                }
                let valid: Vec<usize> =
                    pass.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
                match self.config.pooling {
                    Pooling::Start => {
                        let i = valid.first().copied().unwrap_or(0);
                        dh.row_mut(i).scaled_add(F::one(), &de);
                    }
                    Pooling::MaskedMean => {
                        let inv = F::one() / cst::<F>(valid.len().max(1) as f64);
                        for &i in &valid {
                            dh.row_mut(i).scaled_add(inv, &de);
                        }
                    }
                }
            }
            (HeadIds::LabelAttention { query, weight, bias }, HeadCache::Label { valid, hv, alpha, values }) => {
                let w = p.get(*weight);
                let dl_col = dl.clone().insert_axis(Axis(1));
                grads.add(*weight, &(values * &dl_col));
                grads.add(*bias, &dl.clone().insert_axis(Axis(0)));
                let dvalues = w * &dl_col; // labels × d
                let dalpha = dvalues.dot(&hv.t()); // labels × n
                let mut dhv = alpha.t().dot(&dvalues); // n × d
                let dscores = ops::softmax_rows_backward(alpha.view(), dalpha.view());
                grads.add(*query, &dscores.dot(hv));
                dhv += &dscores.t().dot(p.get(*query));
                for (k, &i) in valid.iter().enumerate() {
                    dh.row_mut(i).assign(&dhv.row(k));
                }
            }
            _ => unreachable!("head cache matches head kind"),
        }

        let (mut dx, dg, db) = ops::layer_norm_backward(&dh, &pass.final_ln, p.get(self.final_ln.gamma));
        grads.add(self.final_ln.gamma, &dg);
        grads.add(self.final_ln.beta, &db);

        for (layer, c) in self.layers.iter().zip(&pass.layers).rev() {
            // feed-forward block
            let mut dz = dx.clone();
            if let Some(m) = &c.drop_ffn {
                dz *= m;
            }
            let dact = self.linear_backward(&layer.down, &c.act, None, &dz, grads);
            let dpre = ops::gelu_backward(&c.pre, &dact);
            let dbn = self.linear_backward(&layer.up, &c.b, None, &dpre, grads);
            let (dln2, dg, db) = ops::layer_norm_backward(&dbn, &c.ln2, p.get(layer.ln2.gamma));
            grads.add(layer.ln2.gamma, &dg);
            grads.add(layer.ln2.beta, &db);
            dx += &dln2;

            // attention block
            let mut dy = dx.clone();
            if let Some(m) = &c.drop_attn {
                dy *= m;
            }
            let dattn = self.linear_backward(&layer.out, &c.attn, None, &dy, grads);
            let (dq, dk, dv) = self.attention_backward(c, &dattn, &pass.mask);
            let mut da = self.linear_backward(&layer.query, &c.a, c.lora_q.as_ref(), &dq, grads);
            da += &self.linear_backward(&layer.key, &c.a, c.lora_k.as_ref(), &dk, grads);
            da += &self.linear_backward(&layer.value, &c.a, c.lora_v.as_ref(), &dv, grads);
            let (dln1, dg, db) = ops::layer_norm_backward(&da, &c.ln1, p.get(layer.ln1.gamma));
            grads.add(layer.ln1.gamma, &dg);
            grads.add(layer.ln1.beta, &db);
            dx += &dln1;
        }

        if let Some(m) = &pass.drop_emb {
            dx *= m;
        }
        if let Some(g) = grads.slot(self.tok_emb) {
            for (i, row) in dx.rows().into_iter().enumerate() {
                let id = pass.ids[[i / len, i % len]] as usize;
                g.row_mut(id).scaled_add(F::one(), &row);
            }
        }
        if let Some(pos) = self.pos_emb {
            if let Some(g) = grads.slot(pos) {
                for (i, row) in dx.rows().into_iter().enumerate() {
                    g.row_mut(i % len).scaled_add(F::one(), &row);
                }
            }
        }
    }

    fn linear_backward(
        &self,
        ids: &LinearIds,
        x: &Array2<F>,
        xa: Option<&Array2<F>>,
        dy: &Array2<F>,
        grads: &mut Grads<F>,
    ) -> Array2<F> {
        let p = &self.params;
        if grads.is_tracked(ids.w) {
            grads.add(ids.w, &x.t().dot(dy));
        }
        if grads.is_tracked(ids.b) {
            grads.add(ids.b, &dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
        }
        let mut dx = dy.dot(&p.get(ids.w).t());
        if let (Some(l), Some(xa)) = (ids.lora, xa) {
            if grads.is_tracked(l.b) {
                grads.add(l.b, &dy.t().dot(xa));
            }
            let dxa = dy.dot(p.get(l.b));
            if grads.is_tracked(l.a) {
                grads.add(l.a, &dxa.t().dot(x));
            }
            dx += &dxa.dot(p.get(l.a));
        }
        dx
    }

    fn attention_backward(
        &self,
        c: &LayerCache<F>,
        dout: &Array2<F>,
        mask: &Array2<bool>,
    ) -> (Array2<F>, Array2<F>, Array2<F>) {
        let (rows, len) = mask.dim();
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let scale = cst::<F>(1.0 / (dh as f64).sqrt());
        let mut dq = Array2::zeros(c.q.raw_dim());
        let mut dk = Array2::zeros(c.k.raw_dim());
        let mut dv = Array2::zeros(c.v.raw_dim());
        for r in 0..rows {
            for h in 0..heads {
                let rs = r * len..(r + 1) * len;
                let cs = h * dh..(h + 1) * dh;
                let probs = &c.probs[r * heads + h];
                let dout_h = dout.slice(s![rs.clone(), cs.clone()]);
                let qh = c.q.slice(s![rs.clone(), cs.clone()]);
                let kh = c.k.slice(s![rs.clone(), cs.clone()]);
                let vh = c.v.slice(s![rs.clone(), cs.clone()]);
                let dprobs = dout_h.dot(&vh.t());
                dv.slice_mut(s![rs.clone(), cs.clone()]).assign(&probs.t().dot(&dout_h));
                let mut dscores = ops::softmax_rows_backward(probs.view(), dprobs.view());
                dscores.mapv_inplace(|x| x * scale);
                dq.slice_mut(s![rs.clone(), cs.clone()]).assign(&dscores.dot(&kh));
                dk.slice_mut(s![rs, cs]).assign(&dscores.t().dot(&qh));
            }
        }
        (dq, dk, dv)
    }
}

fn normal<F: NdFloat>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<F> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || cst::<F>(dist.sample(rng)))
}

pub(crate) fn normal_init<F: NdFloat>(seed: u64, rows: usize, cols: usize, std: f64) -> Array2<F> {
    normal(&mut ChaCha8Rng::seed_from_u64(seed), rows, cols, std)
}

fn outer<F: NdFloat>(a: &Array1<F>, b: &Array1<F>) -> Array2<F> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

struct DropoutSource {
    rng: Option<ChaCha8Rng>,
    rate: f64,
}

impl DropoutSource {
    fn new(mode: Mode, rate: f64) -> Self {
        let rng = match mode {
            Mode::Train { dropout_seed } if rate > 0.0 => Some(ChaCha8Rng::seed_from_u64(dropout_seed)),
            _ => None,
        };
        Self { rng, rate }
    }

    /// Applies inverted dropout in place and returns the scaled mask.
    fn apply<F: NdFloat>(&mut self, x: &mut Array2<F>) -> Option<Array2<F>> {
        let rng = self.rng.as_mut()?;
        let keep = cst::<F>(1.0 / (1.0 - self.rate));
        let rate = self.rate;
        let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
            if rng.random::<f64>() < rate { F::zero() } else { keep }
        });
        *x *= &mask;
        Some(mask)
    }
}
