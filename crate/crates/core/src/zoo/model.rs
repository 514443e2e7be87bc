//! Model architectures, their parameter layouts and their static group maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::groups::{GroupTable, PruneGroup, PruneStructure, Slice, StructureClass};
use crate::autodiff::{forward, value_and_grad, GradMap, Tape, Var};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

/// Shape of one transformer block after any pruning.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub heads: usize,
    pub ffn_hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    /// Fully connected ReLU network. With `context > 0` the input is the
    /// one-hot encoding of `context` previous tokens and `widths[0]` is
    /// `context * vocab`.
    Mlp {
        widths: Vec<usize>,
        context: usize,
    },
    Transformer {
        vocab: usize,
        d_model: usize,
        head_dim: usize,
        max_len: usize,
        blocks: Vec<BlockShape>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Batch {
    /// Dense feature rows with class labels.
    Features { inputs: Tensor, labels: Vec<usize> },
    /// Token sequences for next-token prediction.
    Sequences(Vec<Vec<usize>>),
}

impl Batch {
    pub fn len(&self) -> usize {
        match self {
            Batch::Features { labels, .. } => labels.len(),
            Batch::Sequences(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples reordered into a canonical order so that any permutation of
    /// the same samples evaluates with an identical summation order.
    fn canonical(&self) -> Batch {
        match self {
            Batch::Features { inputs, labels } => {
                let cols = inputs.shape().get(1).copied().unwrap_or(1);
                let row = |i: usize| &inputs.data()[i * cols..(i + 1) * cols];
                let mut order: Vec<usize> = (0..labels.len()).collect();
                order.sort_by(|&a, &b| {
                    row(a)
                        .iter()
                        .zip(row(b))
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(labels[a].cmp(&labels[b]))
                });
                let mut data = Vec::with_capacity(inputs.len());
                for &i in &order {
                    data.extend_from_slice(row(i));
                }
                Batch::Features {
                    inputs: Tensor::new(inputs.shape().to_vec(), data).expect("same shape"),
                    labels: order.iter().map(|&i| labels[i]).collect(),
                }
            }
            Batch::Sequences(seqs) => {
                let mut s = seqs.clone();
                s.sort();
                Batch::Sequences(s)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub arch: Architecture,
}

pub struct TransformerConfig {
    pub vocab: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub max_len: usize,
}

impl TransformerConfig {
    pub fn new(vocab: usize, d_model: usize, n_heads: usize, n_layers: usize) -> Self {
        Self { vocab, d_model, n_heads, n_layers, max_len: 128 }
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive extents")
}

/// Fully connected ReLU classifier; one prune group per hidden unit.
pub fn build_mlp(widths: &[usize], seed: u64) -> Result<(Model, ParamSet, GroupTable)> {
    build_mlp_with_context(widths, 0, seed)
}

pub fn build_mlp_with_context(widths: &[usize], context: usize, seed: u64) -> Result<(Model, ParamSet, GroupTable)> {
    if widths.len() < 3 {
        return Err(Error::Config("an MLP needs at least one hidden layer".into()));
    }
    if widths.contains(&0) {
        return Err(Error::Config(format!("layer widths must be positive, got {widths:?}")));
    }
    if context > 0 && !widths[0].is_multiple_of(context) {
        return Err(Error::Config(format!("input width {} is not a multiple of context {context}", widths[0])));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    for (l, pair) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        params.insert(format!("fc{l}.weight"), uniform(&mut rng, &[fan_in, fan_out], fan_in))?;
        params.insert(format!("fc{l}.bias"), uniform(&mut rng, &[fan_out], fan_in))?;
    }
    let model = Model { arch: Architecture::Mlp { widths: widths.to_vec(), context } };
    let groups = model.group_table();
    Ok((model, params, groups))
}

/// Causal decoder-only transformer with per-head and per-FFN-channel groups.
pub fn build_tiny_transformer(cfg: &TransformerConfig, seed: u64) -> Result<(Model, ParamSet, GroupTable)> {
    let TransformerConfig { vocab, d_model, n_heads, n_layers, max_len } = *cfg;
    if [vocab, d_model, n_heads, n_layers, max_len].contains(&0) {
        return Err(Error::Config("transformer dimensions must be positive".into()));
    }
    if d_model % n_heads != 0 {
        return Err(Error::Config(format!("d_model {d_model} is not divisible by {n_heads} heads")));
    }
    let head_dim = d_model / n_heads;
    let ffn = 4 * d_model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamSet::new();
    p.insert("tok_emb", uniform(&mut rng, &[vocab, d_model], d_model))?;
    p.insert("pos_emb", uniform(&mut rng, &[max_len, d_model], d_model))?;
    for i in 0..n_layers {
        let pre = format!("blocks.{i}");
        p.insert(format!("{pre}.ln1.gamma"), Tensor::new(vec![d_model], vec![1.0; d_model])?)?;
        p.insert(format!("{pre}.ln1.beta"), Tensor::zeros(&[d_model]))?;
        for w in ["wq", "wk", "wv"] {
            p.insert(format!("{pre}.attn.{w}"), uniform(&mut rng, &[d_model, d_model], d_model))?;
        }
        p.insert(format!("{pre}.attn.wo"), uniform(&mut rng, &[d_model, d_model], d_model))?;
        p.insert(format!("{pre}.ln2.gamma"), Tensor::new(vec![d_model], vec![1.0; d_model])?)?;
        p.insert(format!("{pre}.ln2.beta"), Tensor::zeros(&[d_model]))?;
        p.insert(format!("{pre}.ffn.w1"), uniform(&mut rng, &[d_model, ffn], d_model))?;
        p.insert(format!("{pre}.ffn.b1"), uniform(&mut rng, &[ffn], d_model))?;
        p.insert(format!("{pre}.ffn.w2"), uniform(&mut rng, &[ffn, d_model], ffn))?;
        p.insert(format!("{pre}.ffn.b2"), uniform(&mut rng, &[d_model], ffn))?;
    }
    p.insert("ln_f.gamma", Tensor::new(vec![d_model], vec![1.0; d_model])?)?;
    p.insert("ln_f.beta", Tensor::zeros(&[d_model]))?;
    p.insert("head", uniform(&mut rng, &[d_model, vocab], d_model))?;

    let blocks = vec![BlockShape { heads: n_heads, ffn_hidden: ffn }; n_layers];
    let model = Model { arch: Architecture::Transformer { vocab, d_model, head_dim, max_len, blocks } };
    let groups = model.group_table();
    Ok((model, p, groups))
}

impl Model {
    /// Static dependency map: which parameter slices must be removed together.
    pub fn group_table(&self) -> GroupTable {
        let mut table = GroupTable::default();
        let add_group = |table: &mut GroupTable, class, layer: String, unit, slices: Vec<(Vec<Slice>, Vec<Slice>)>| {
            let mut members = Vec::new();
            for (slices, coupled) in slices {
                let id = table.structures.len();
                table.structures.push(PruneStructure { id, slices, coupled });
                members.push(id);
            }
            let id = table.groups.len();
            table.groups.push(PruneGroup { id, class, layer, unit, members });
        };
        match &self.arch {
            Architecture::Mlp { widths, .. } => {
                for l in 1..widths.len() - 1 {
                    for j in 0..widths[l] {
                        let mut slices = vec![
                            Slice::new(format!("fc{}.weight", l - 1), 1, j, 1),
                            Slice::new(format!("fc{}.bias", l - 1), 0, j, 1),
                        ];
                        let fan_out = Slice::new(format!("fc{l}.weight"), 0, j, 1);
                        // fc{l}[j, k] is also unit k's fan-in when layer l+1 is hidden
                        let coupled = if l + 2 == widths.len() {
                            slices.push(fan_out);
                            Vec::new()
                        } else {
                            vec![fan_out]
                        };
                        add_group(
                            &mut table,
                            StructureClass::Channel,
                            format!("hidden{l}"),
                            j,
                            vec![(slices, coupled)],
                        );
                    }
                }
            }
            Architecture::Transformer { head_dim, blocks, .. } => {
                for (i, b) in blocks.iter().enumerate() {
                    let pre = format!("blocks.{i}");
                    for h in 0..b.heads {
                        let cols = |w: &str| vec![Slice::new(format!("{pre}.attn.{w}"), 1, h * head_dim, *head_dim)];
                        let rows = vec![Slice::new(format!("{pre}.attn.wo"), 0, h * head_dim, *head_dim)];
                        add_group(
                            &mut table,
                            StructureClass::Head,
                            format!("{pre}.attn"),
                            h,
                            vec![(cols("wq"), vec![]), (cols("wk"), vec![]), (cols("wv"), vec![]), (rows, vec![])],
                        );
                    }
                    for j in 0..b.ffn_hidden {
                        let fan_in = vec![
                            Slice::new(format!("{pre}.ffn.w1"), 1, j, 1),
                            Slice::new(format!("{pre}.ffn.b1"), 0, j, 1),
                        ];
                        let fan_out = vec![Slice::new(format!("{pre}.ffn.w2"), 0, j, 1)];
                        add_group(
                            &mut table,
                            StructureClass::Channel,
                            format!("{pre}.ffn"),
                            j,
                            vec![(fan_in, vec![]), (fan_out, vec![])],
                        );
                    }
                }
            }
        }
        table
    }

    pub fn vocab(&self) -> Option<usize> {
        match &self.arch {
            Architecture::Mlp { widths, context } if *context > 0 => Some(widths[0] / context),
            Architecture::Mlp { .. } => None,
            Architecture::Transformer { vocab, .. } => Some(*vocab),
        }
    }

    fn check_tokens(&self, seqs: &[Vec<usize>]) -> Result<()> {
        let vocab =
            self.vocab().ok_or_else(|| Error::Config("this model takes feature rows, not token sequences".into()))?;
        let classes = match &self.arch {
            Architecture::Mlp { widths, .. } => *widths.last().unwrap(),
            Architecture::Transformer { vocab, .. } => *vocab,
        };
        for (i, s) in seqs.iter().enumerate() {
            if let Some(&t) = s.iter().find(|&&t| t >= vocab.min(classes)) {
                return Err(Error::OutOfVocab { sample: i, token: t, vocab: vocab.min(classes) });
            }
        }
        Ok(())
    }

    /// One-hot context windows for a token-level MLP.
    fn windows(&self, seqs: &[Vec<usize>]) -> Result<Batch> {
        let Architecture::Mlp { widths, context } = &self.arch else { unreachable!() };
        let vocab = widths[0] / context;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (i, s) in seqs.iter().enumerate() {
            if s.len() <= *context {
                return Err(Error::EmptyTarget { sample: i });
            }
            for pos in *context..s.len() {
                let mut row = vec![0.0; widths[0]];
                for (c, &tok) in s[pos - context..pos].iter().enumerate() {
                    row[c * vocab + tok] = 1.0;
                }
                data.extend(row);
                labels.push(s[pos]);
            }
        }
        Ok(Batch::Features { inputs: Tensor::new(vec![labels.len(), widths[0]], data)?, labels })
    }

    fn mlp_logits(&self, tape: &mut Tape, inputs: &Tensor) -> Result<Var> {
        let Architecture::Mlp { widths, .. } = &self.arch else { unreachable!() };
        if inputs.shape().len() != 2 || inputs.shape()[1] != widths[0] {
            return Err(Error::Shape {
                op: "mlp",
                detail: format!("inputs {:?} for input width {}", inputs.shape(), widths[0]),
            });
        }
        let mut h = tape.constant(inputs.clone())?;
        let layers = widths.len() - 1;
        for l in 0..layers {
            let w = tape.param_var(&format!("fc{l}.weight"))?;
            let b = tape.param_var(&format!("fc{l}.bias"))?;
            h = tape.matmul(h, w)?;
            h = tape.add(h, b)?;
            if l + 1 < layers {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    fn transformer_logits(&self, tape: &mut Tape, tokens: &[usize]) -> Result<Var> {
        let Architecture::Transformer { head_dim, max_len, blocks, .. } = &self.arch else { unreachable!() };
        let n = tokens.len();
        if n > *max_len {
            return Err(Error::Shape { op: "embedding", detail: format!("{n} positions exceed {max_len}") });
        }
        let tok = tape.param_var("tok_emb")?;
        let pos = tape.param_var("pos_emb")?;
        let te = tape.embedding(tok, tokens)?;
        let positions: Vec<usize> = (0..n).collect();
        let pe = tape.embedding(pos, &positions)?;
        let mut h = tape.add(te, pe)?;
        let scale = 1.0 / (*head_dim as f64).sqrt();
        for (i, b) in blocks.iter().enumerate() {
            let pre = format!("blocks.{i}");
            let pv = |t: &Tape, s: &str| t.param_var(&format!("{pre}.{s}"));
            let (g1, b1) = (pv(tape, "ln1.gamma")?, pv(tape, "ln1.beta")?);
            let a = tape.layer_norm(h, g1, b1)?;
            let (wq, wk, wv, wo) =
                (pv(tape, "attn.wq")?, pv(tape, "attn.wk")?, pv(tape, "attn.wv")?, pv(tape, "attn.wo")?);
            let q = tape.matmul(a, wq)?;
            let k = tape.matmul(a, wk)?;
            let v = tape.matmul(a, wv)?;
            let mut heads = Vec::with_capacity(b.heads);
            for hd in 0..b.heads {
                let qh = tape.slice_cols(q, hd * head_dim, *head_dim)?;
                let kh = tape.slice_cols(k, hd * head_dim, *head_dim)?;
                let vh = tape.slice_cols(v, hd * head_dim, *head_dim)?;
                let kt = tape.transpose(kh)?;
                let s = tape.matmul(qh, kt)?;
                let s = tape.scale(s, scale)?;
                let p = tape.softmax(s, true)?;
                heads.push(tape.matmul(p, vh)?);
            }
            let cat = tape.concat_cols(&heads)?;
            let o = tape.matmul(cat, wo)?;
            h = tape.add(h, o)?;
            let (g2, b2) = (pv(tape, "ln2.gamma")?, pv(tape, "ln2.beta")?);
            let m = tape.layer_norm(h, g2, b2)?;
            let (w1, fb1, w2, fb2) =
                (pv(tape, "ffn.w1")?, pv(tape, "ffn.b1")?, pv(tape, "ffn.w2")?, pv(tape, "ffn.b2")?);
            let f = tape.matmul(m, w1)?;
            let f = tape.add(f, fb1)?;
            let f = tape.gelu(f)?;
            let f = tape.matmul(f, w2)?;
            let f = tape.add(f, fb2)?;
            h = tape.add(h, f)?;
        }
        let (gf, bf) = (tape.param_var("ln_f.gamma")?, tape.param_var("ln_f.beta")?);
        let hf = tape.layer_norm(h, gf, bf)?;
        let head = tape.param_var("head")?;
        tape.matmul(hf, head)
    }

    /// Records the mean loss over the batch on `tape`.
    pub fn record_loss(&self, tape: &mut Tape, batch: &Batch) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let batch = batch.canonical();
        match (&self.arch, &batch) {
            (Architecture::Mlp { widths, .. }, Batch::Features { inputs, labels }) => {
                let classes = *widths.last().unwrap();
                if let Some(i) = labels.iter().position(|&l| l >= classes) {
                    return Err(Error::OutOfVocab { sample: i, token: labels[i], vocab: classes });
                }
                let logits = self.mlp_logits(tape, inputs)?;
                tape.cross_entropy(logits, labels)
            }
            (Architecture::Mlp { .. }, Batch::Sequences(seqs)) => {
                self.check_tokens(seqs)?;
                let features = self.windows(seqs)?;
                self.record_loss(tape, &features)
            }
            (Architecture::Transformer { .. }, Batch::Sequences(seqs)) => {
                self.check_tokens(seqs)?;
                let mut losses = Vec::with_capacity(seqs.len());
                for (i, s) in seqs.iter().enumerate() {
                    if s.len() < 2 {
                        return Err(Error::EmptyTarget { sample: i });
                    }
                    let logits = self.transformer_logits(tape, &s[..s.len() - 1])?;
                    losses.push(tape.cross_entropy(logits, &s[1..])?);
                }
                tape.mean(&losses)
            }
            (Architecture::Transformer { .. }, Batch::Features { .. }) => {
                Err(Error::Config("a transformer takes token sequences".into()))
            }
        }
    }

    /// Mean per-sample loss over the batch.
    pub fn batch_loss(&self, params: &ParamSet, batch: &Batch) -> Result<f64> {
        forward(params, |t| self.record_loss(t, batch)).map(|(l, _)| l)
    }

    pub fn loss_and_grad(&self, params: &ParamSet, batch: &Batch) -> Result<(f64, GradMap)> {
        value_and_grad(params, |t| self.record_loss(t, batch))
    }

    /// Output logits, one row per prediction (MLP rows, or every position of
    /// every sequence for the transformer), in input order.
    pub fn outputs(&self, params: &ParamSet, batch: &Batch) -> Result<Tensor> {
        let mut tape = Tape::new();
        for (name, t) in params.iter() {
            tape.param(name, t.clone())?;
        }
        match (&self.arch, batch) {
            (Architecture::Mlp { .. }, Batch::Features { inputs, .. }) => {
                let v = self.mlp_logits(&mut tape, inputs)?;
                Ok(tape.value(v).clone())
            }
            (Architecture::Mlp { .. }, Batch::Sequences(seqs)) => {
                self.check_tokens(seqs)?;
                let features = self.windows(seqs)?;
                self.outputs(params, &features)
            }
            (Architecture::Transformer { vocab, .. }, Batch::Sequences(seqs)) => {
                self.check_tokens(seqs)?;
                let mut data = Vec::new();
                for s in seqs {
                    let v = self.transformer_logits(&mut tape, s)?;
                    data.extend_from_slice(tape.value(v).data());
                }
                Tensor::new(vec![data.len() / vocab, *vocab], data)
            }
            (Architecture::Transformer { .. }, Batch::Features { .. }) => {
                Err(Error::Config("a transformer takes token sequences".into()))
            }
        }
    }

    /// Differentiable program for `batch`, usable with [`crate::autodiff::grad_check`].
    pub fn program<'a>(&'a self, batch: &'a Batch) -> impl Fn(&mut Tape) -> Result<Var> + Sync + Send + 'a {
        move |t: &mut Tape| self.record_loss(t, batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_group_counting() {
        let (_, params, groups) = build_mlp(&[4, 8, 3], 1).unwrap();
        assert_eq!(groups.num_groups(), 8);
        groups.validate(&params).unwrap();
        for g in &groups.groups {
            assert_eq!(g.members.len(), 1);
            assert_eq!(groups.group_indices(&params, g).unwrap().len(), 4 + 1 + 3);
        }
    }

    #[test]
    fn mlp_seed_determinism() {
        let (_, a, _) = build_mlp(&[4, 8, 3], 11).unwrap();
        let (_, b, _) = build_mlp(&[4, 8, 3], 11).unwrap();
        let (_, c, _) = build_mlp(&[4, 8, 3], 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mlp_rejects_zero_width_and_no_hidden() {
        assert!(build_mlp(&[4, 0, 3], 1).is_err());
        assert!(build_mlp(&[4, 3], 1).is_err());
    }

    #[test]
    fn mlp_init_is_bounded_by_fan_in() {
        let (_, p, _) = build_mlp(&[16, 8, 3], 5).unwrap();
        assert!(p.get("fc0.weight").unwrap().data().iter().all(|v| v.abs() < 0.25));
        assert!(p.get("fc1.weight").unwrap().data().iter().all(|v| v.abs() < 1.0 / 8f64.sqrt()));
    }

    #[test]
    fn transformer_group_counting() {
        let (_, params, groups) = build_tiny_transformer(&TransformerConfig::new(32, 16, 4, 2), 3).unwrap();
        groups.validate(&params).unwrap();
        let heads = groups.groups.iter().filter(|g| g.class == StructureClass::Head).count();
        let channels = groups.groups.iter().filter(|g| g.class == StructureClass::Channel).count();
        assert_eq!(heads, 2 * 4);
        assert_eq!(channels, 2 * 4 * 16);
    }

    #[test]
    fn transformer_rejects_indivisible_heads() {
        assert!(build_tiny_transformer(&TransformerConfig::new(32, 16, 3, 1), 3).is_err());
    }

    #[test]
    fn embedding_and_head_never_prunable() {
        let (_, _, groups) = build_tiny_transformer(&TransformerConfig::new(8, 8, 2, 1), 3).unwrap();
        let prunable = groups.prunable_params();
        for name in ["tok_emb", "pos_emb", "head", "ln_f.gamma"] {
            assert!(!prunable.contains(name));
        }
    }

    #[test]
    fn one_token_sequence_has_empty_target() {
        let (m, p, _) = build_tiny_transformer(&TransformerConfig::new(8, 8, 2, 1), 3).unwrap();
        let err = m.batch_loss(&p, &Batch::Sequences(vec![vec![3]])).unwrap_err();
        assert!(matches!(err, Error::EmptyTarget { .. }), "{err}");
    }

    #[test]
    fn out_of_vocab_reports_sample() {
        let (m, p, _) = build_tiny_transformer(&TransformerConfig::new(8, 8, 2, 1), 3).unwrap();
        let err = m.batch_loss(&p, &Batch::Sequences(vec![vec![1, 2], vec![1, 9]])).unwrap_err();
        assert!(matches!(err, Error::OutOfVocab { sample: 1, token: 9, .. }), "{err}");
    }

    #[test]
    fn empty_batch_rejected() {
        let (m, p, _) = build_tiny_transformer(&TransformerConfig::new(8, 8, 2, 1), 3).unwrap();
        assert!(matches!(m.batch_loss(&p, &Batch::Sequences(vec![])), Err(Error::EmptyBatch)));
    }

    #[test]
    fn copies_of_one_sample_match_single_sample_loss() {
        let (m, p, _) = build_tiny_transformer(&TransformerConfig::new(8, 8, 2, 1), 3).unwrap();
        let s = vec![1, 4, 2, 7, 0];
        let one = m.batch_loss(&p, &Batch::Sequences(vec![s.clone()])).unwrap();
        let many = m.batch_loss(&p, &Batch::Sequences(vec![s; 4])).unwrap();
        approx::assert_relative_eq!(one, many, max_relative = 1e-15);
    }

    #[test]
    fn near_uniform_logits_give_log_vocab_loss() {
        let (m, mut p, _) = build_tiny_transformer(&TransformerConfig::new(32, 16, 4, 2), 9).unwrap();
        let head = p.get_mut("head").unwrap();
        for v in head.data_mut() {
            *v *= 0.01;
        }
        let seqs: Vec<Vec<usize>> = (0..4).map(|i| (0..20).map(|j| (i * 7 + j * 3) % 32).collect()).collect();
        let loss = m.batch_loss(&p, &Batch::Sequences(seqs)).unwrap();
        let expected = (32f64).ln();
        assert!((loss - expected).abs() / expected < 0.02, "loss {loss} vs ln 32 = {expected}");
    }
}
