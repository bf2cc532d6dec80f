//! Attentive encoder-decoder: Bi-LSTM encoder (per-step hidden states
//! summed across directions), one-directional LSTM decoder initialized from
//! the encoder final state, dot-product attention over all encoder steps,
//! and a softmax head over the target vocabulary.
//!
//! The same architecture serves surface-form extraction, disambiguation, and
//! the end-to-end baseline; they differ only in their training data.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingTable;
use crate::lstm::{lstm_cell, zero_state, LstmParams, LstmState, LstmVars};
use crate::optim::{Adam, AdamConfig};
use crate::tape::{Tape, Var};
use crate::tensor::{Tensor, TensorError};
use crate::util::{atomic_write, seeded_rng};
use crate::vocab::{EOS, SOS};

#[derive(Debug, Error)]
pub enum Seq2SeqError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("source sequence is empty")]
    EmptySource,
    #[error("target sequence is empty")]
    EmptyTarget,
    #[error("sequence length {len} exceeds the configured limit {max}")]
    TooLong { len: usize, max: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("embedding table is {rows}x{dim} but the model wants {want_rows}x{want_dim}")]
    EmbeddingShape { rows: usize, dim: usize, want_rows: usize, want_dim: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid checkpoint {path}: {reason}")]
    InvalidCheckpoint { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub vocab_size: usize,
    pub max_source_len: usize,
    pub max_decode_len: usize,
}

/// The full parameter set. Encoder and decoder share the hidden size so the
/// attention dot product is well-typed.
pub struct Seq2SeqModel {
    config: ModelConfig,
    embedding: EmbeddingTable,
    encoder_fwd: LstmParams,
    encoder_bwd: LstmParams,
    decoder: LstmParams,
    /// (2*hidden) x hidden, mixes [context; decoder hidden].
    w_v: Tensor,
    /// hidden x vocab, the softmax head.
    w_s: Tensor,
    vocab_hash: u64,
}

/// Tape handles for every model parameter of one forward pass.
pub struct ModelVars {
    pub embedding: Var,
    pub encoder_fwd: LstmVars,
    pub encoder_bwd: LstmVars,
    pub decoder: LstmVars,
    pub w_v: Var,
    pub w_s: Var,
}

impl ModelVars {
    /// Canonical flat order: embedding, encoder fwd gates, encoder bwd gates,
    /// decoder gates, w_v, w_s.
    pub fn ordered(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        for lstm in [&self.encoder_fwd, &self.encoder_bwd, &self.decoder] {
            out.extend([
                lstm.w_f, lstm.w_i, lstm.w_o, lstm.w_c, lstm.b_f, lstm.b_i, lstm.b_o, lstm.b_c,
            ]);
        }
        out.extend([self.w_v, self.w_s]);
        out
    }

    pub fn from_ordered(vars: &[Var]) -> Self {
        assert_eq!(vars.len(), Seq2SeqModel::PARAM_COUNT);
        ModelVars {
            embedding: vars[0],
            encoder_fwd: LstmVars::from_ordered(&vars[1..9]),
            encoder_bwd: LstmVars::from_ordered(&vars[9..17]),
            decoder: LstmVars::from_ordered(&vars[17..25]),
            w_v: vars[25],
            w_s: vars[26],
        }
    }
}

/// Encoder output: per-step summed hidden states plus the final state that
/// seeds the decoder. Directional states stay visible for invariant checks.
pub struct Encoding {
    /// N x hidden matrix of summed per-step states.
    pub steps: Var,
    pub per_step: Vec<Var>,
    pub fwd_steps: Vec<Var>,
    pub bwd_steps: Vec<Var>,
    pub final_state: LstmState,
}

/// One decoder step: logits over the vocabulary, the new decoder state, and
/// the attention weights used for the step.
pub struct DecodeStep {
    pub logits: Var,
    pub state: LstmState,
    pub attention: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyDecode {
    /// Emitted ids, EOS excluded.
    pub ids: Vec<usize>,
    /// Mean per-step log-probability of the chosen tokens (EOS step included).
    pub mean_log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainExample {
    pub source: Vec<usize>,
    /// EOS-terminated target ids.
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Shuffle example order each epoch (seeded, deterministic).
    pub shuffle: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { epochs: 30, adam: AdamConfig::default(), seed: 42, shuffle: true }
    }
}

/// Dot-product attention of a decoder state against all encoder steps:
/// weights softmax(h_m . h_n), context = weighted sum of encoder states.
pub fn attention(tape: &mut Tape, enc_steps: Var, h_m: Var) -> Result<(Var, Var), TensorError> {
    let scores = tape.matmul_nt(h_m, enc_steps)?;
    let weights = tape.softmax_rows(scores)?;
    let context = tape.matmul(weights, enc_steps)?;
    Ok((weights, context))
}

impl Seq2SeqModel {
    pub const PARAM_COUNT: usize = 27;

    pub fn new(
        config: ModelConfig,
        embedding: EmbeddingTable,
        vocab_hash: u64,
        seed: u64,
    ) -> Result<Self, Seq2SeqError> {
        if embedding.rows() != config.vocab_size || embedding.dim() != config.embed_dim {
            return Err(Seq2SeqError::EmbeddingShape {
                rows: embedding.rows(),
                dim: embedding.dim(),
                want_rows: config.vocab_size,
                want_dim: config.embed_dim,
            });
        }
        let mut rng = seeded_rng(seed);
        let (d, h, v) = (config.embed_dim, config.hidden, config.vocab_size);
        let encoder_fwd = LstmParams::init(d, h, &mut rng);
        let encoder_bwd = LstmParams::init(d, h, &mut rng);
        let decoder = LstmParams::init(d, h, &mut rng);
        let scale_v = 1.0 / ((2 * h) as f64).sqrt();
        let scale_s = 1.0 / (h as f64).sqrt();
        let w_v = Tensor::uniform(&[2 * h, h], scale_v, &mut rng).with_grad();
        let w_s = Tensor::uniform(&[h, v], scale_s, &mut rng).with_grad();
        Ok(Seq2SeqModel {
            config,
            embedding,
            encoder_fwd,
            encoder_bwd,
            decoder,
            w_v,
            w_s,
            vocab_hash,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_hash(&self) -> u64 {
        self.vocab_hash
    }

    pub fn embedding(&self) -> &EmbeddingTable {
        &self.embedding
    }

    pub fn embedding_mut(&mut self) -> &mut EmbeddingTable {
        &mut self.embedding
    }

    pub fn w_s_mut(&mut self) -> &mut Tensor {
        &mut self.w_s
    }

    pub fn w_v_mut(&mut self) -> &mut Tensor {
        &mut self.w_v
    }

    pub fn encoder_fwd_mut(&mut self) -> &mut LstmParams {
        &mut self.encoder_fwd
    }

    pub fn encoder_bwd_mut(&mut self) -> &mut LstmParams {
        &mut self.encoder_bwd
    }

    pub fn decoder_mut(&mut self) -> &mut LstmParams {
        &mut self.decoder
    }

    /// Parameter tensors with stable names, in canonical order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> =
            vec![("embedding".to_string(), self.embedding.weights())];
        for (prefix, lstm) in [
            ("encoder_fwd", &self.encoder_fwd),
            ("encoder_bwd", &self.encoder_bwd),
            ("decoder", &self.decoder),
        ] {
            for (name, t) in LstmParams::TENSOR_NAMES.iter().zip(lstm.tensors()) {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out.push(("w_v".to_string(), &self.w_v));
        out.push(("w_s".to_string(), &self.w_s));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![self.embedding.weights_mut()];
        out.extend(self.encoder_fwd.tensors_mut());
        out.extend(self.encoder_bwd.tensors_mut());
        out.extend(self.decoder.tensors_mut());
        out.push(&mut self.w_v);
        out.push(&mut self.w_s);
        out
    }

    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            embedding: tape.leaf(self.embedding.weights()),
            encoder_fwd: self.encoder_fwd.register(tape),
            encoder_bwd: self.encoder_bwd.register(tape),
            decoder: self.decoder.register(tape),
            w_v: tape.leaf(&self.w_v),
            w_s: tape.leaf(&self.w_s),
        }
    }

    /// Runs both encoder directions from zero states and sums the per-step
    /// hidden states; the final summed (h, C) seeds the decoder.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        source: &[usize],
    ) -> Result<Encoding, Seq2SeqError> {
        let n = source.len();
        if n == 0 {
            return Err(Seq2SeqError::EmptySource);
        }
        if n > self.config.max_source_len {
            return Err(Seq2SeqError::TooLong { len: n, max: self.config.max_source_len });
        }
        let inputs: Vec<Var> = source
            .iter()
            .map(|&id| tape.gather_rows(vars.embedding, &[id]))
            .collect::<Result<_, _>>()?;

        let mut fwd_h = Vec::with_capacity(n);
        let mut fwd_c = Vec::with_capacity(n);
        let mut state = zero_state(tape, self.config.hidden);
        for &x in &inputs {
            state = lstm_cell(tape, &vars.encoder_fwd, x, &state)?;
            fwd_h.push(state.h);
            fwd_c.push(state.c);
        }

        let mut bwd_h = vec![None; n];
        let mut bwd_c = vec![None; n];
        let mut state = zero_state(tape, self.config.hidden);
        for i in (0..n).rev() {
            state = lstm_cell(tape, &vars.encoder_bwd, inputs[i], &state)?;
            bwd_h[i] = Some(state.h);
            bwd_c[i] = Some(state.c);
        }
        let bwd_h: Vec<Var> = bwd_h.into_iter().map(|v| v.expect("filled above")).collect();
        let bwd_c: Vec<Var> = bwd_c.into_iter().map(|v| v.expect("filled above")).collect();

        let mut per_step = Vec::with_capacity(n);
        for i in 0..n {
            per_step.push(tape.add(fwd_h[i], bwd_h[i])?);
        }
        let steps = tape.stack_rows(&per_step)?;
        let final_c = tape.add(fwd_c[n - 1], bwd_c[n - 1])?;
        Ok(Encoding {
            steps,
            final_state: LstmState { h: per_step[n - 1], c: final_c },
            per_step,
            fwd_steps: fwd_h,
            bwd_steps: bwd_h,
        })
    }

    /// One decoder step: embed the previous target token, advance the LSTM,
    /// attend over the encoder, and project tanh(W_v [context; h]) through
    /// the softmax head.
    pub fn decode_step_on_tape(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        prev_id: usize,
        state: &LstmState,
        enc: &Encoding,
    ) -> Result<DecodeStep, Seq2SeqError> {
        let x = tape.gather_rows(vars.embedding, &[prev_id])?;
        let new_state = lstm_cell(tape, &vars.decoder, x, state)?;
        let (weights, context) = attention(tape, enc.steps, new_state.h)?;
        let cat = tape.concat(context, new_state.h, 1)?;
        let mixed = tape.matmul(cat, vars.w_v)?;
        let attn_vector = tape.tanh(mixed);
        let logits = tape.matmul(attn_vector, vars.w_s)?;
        Ok(DecodeStep { logits, state: new_state, attention: weights })
    }

    /// Teacher-forced cross-entropy over one example: gold y_{m-1} feeds
    /// step m, the stacked per-step logits score the full target.
    pub fn teacher_forced_loss(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        source: &[usize],
        target: &[usize],
    ) -> Result<Var, Seq2SeqError> {
        if target.is_empty() {
            return Err(Seq2SeqError::EmptyTarget);
        }
        if target.len() > self.config.max_decode_len {
            return Err(Seq2SeqError::TooLong {
                len: target.len(),
                max: self.config.max_decode_len,
            });
        }
        let enc = self.encode_on_tape(tape, vars, source)?;
        let mut state = enc.final_state;
        let mut prev = SOS;
        let mut logits = Vec::with_capacity(target.len());
        for &gold in target {
            let step = self.decode_step_on_tape(tape, vars, prev, &state, &enc)?;
            logits.push(step.logits);
            state = step.state;
            prev = gold;
        }
        let stacked = tape.stack_rows(&logits)?;
        Ok(tape.cross_entropy(stacked, target)?)
    }

    /// Greedy decoding from SOS: argmax each step (ties to the lowest id),
    /// feed the choice back, stop at EOS or `max_decode_len`. EOS itself is
    /// excluded from the returned sequence. Pure in (parameters, source).
    pub fn greedy_decode(&self, source: &[usize]) -> Result<GreedyDecode, Seq2SeqError> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let enc = self.encode_on_tape(&mut tape, &vars, source)?;
        let mut state = enc.final_state;
        let mut prev = SOS;
        let mut ids = Vec::new();
        let mut log_prob_sum = 0.0;
        let mut steps = 0usize;
        for _ in 0..self.config.max_decode_len {
            let step = self.decode_step_on_tape(&mut tape, &vars, prev, &state, &enc)?;
            let row = tape.value(step.logits);
            let chosen = argmax_lowest(row);
            log_prob_sum += row[chosen] - log_sum_exp(row);
            steps += 1;
            state = step.state;
            if chosen == EOS {
                break;
            }
            ids.push(chosen);
            prev = chosen;
        }
        Ok(GreedyDecode { ids, mean_log_prob: log_prob_sum / steps.max(1) as f64 })
    }

    /// Per-example Adam training with teacher forcing. Returns the mean loss
    /// per epoch. Deterministic for a fixed seed.
    pub fn train(
        &mut self,
        examples: &[TrainExample],
        opts: &TrainOptions,
    ) -> Result<Vec<f64>, Seq2SeqError> {
        if examples.is_empty() {
            return Err(Seq2SeqError::EmptyDataset);
        }
        for ex in examples {
            if ex.source.is_empty() {
                return Err(Seq2SeqError::EmptySource);
            }
            if ex.target.is_empty() {
                return Err(Seq2SeqError::EmptyTarget);
            }
            if ex.source.len() > self.config.max_source_len {
                return Err(Seq2SeqError::TooLong {
                    len: ex.source.len(),
                    max: self.config.max_source_len,
                });
            }
            if ex.target.len() > self.config.max_decode_len {
                return Err(Seq2SeqError::TooLong {
                    len: ex.target.len(),
                    max: self.config.max_decode_len,
                });
            }
        }
        let mut adam = Adam::new(opts.adam);
        let mut rng = seeded_rng(opts.seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut trace = Vec::with_capacity(opts.epochs);
        for _ in 0..opts.epochs {
            if opts.shuffle {
                shuffle(&mut order, &mut rng);
            }
            let mut epoch_loss = 0.0;
            for &idx in &order {
                epoch_loss += self.train_step(&examples[idx], &mut adam)?;
            }
            trace.push(epoch_loss / examples.len() as f64);
        }
        Ok(trace)
    }

    fn train_step(&mut self, ex: &TrainExample, adam: &mut Adam) -> Result<f64, Seq2SeqError> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let loss = self.teacher_forced_loss(&mut tape, &vars, &ex.source, &ex.target)?;
        let loss_value = tape.scalar_value(loss);
        let mut grads = tape.backward(loss)?;
        let grad_vecs: Vec<Vec<f64>> = vars
            .ordered()
            .iter()
            .map(|&v| grads.take(v).unwrap_or_else(|| vec![0.0; tape.value(v).len()]))
            .collect();
        for (param, grad) in self.params_mut().into_iter().zip(grad_vecs) {
            param.set_grad(grad)?;
        }
        self.embedding.mask_frozen_grad();
        adam.step(&mut self.params_mut())?;
        Ok(loss_value)
    }
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Fisher-Yates with the pipeline's seeded RNG.
fn shuffle<R: rand::Rng>(order: &mut [usize], rng: &mut R) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

// ── Checkpoint container ─────────────────────────────────────────────

const MAGIC: &[u8; 4] = b"ELNK";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    vocab_hash: u64,
    task: String,
    frozen_rows: Vec<u32>,
}

impl Seq2SeqModel {
    /// Writes a self-describing binary checkpoint: magic, version, JSON
    /// header (config, vocab hash, task, frozen embedding rows), then every
    /// named parameter tensor with its shape.
    pub fn save(&self, task: &str, path: &Path) -> Result<(), Seq2SeqError> {
        let header = CheckpointHeader {
            config: self.config,
            vocab_hash: self.vocab_hash,
            task: task.to_string(),
            frozen_rows: self
                .embedding
                .frozen()
                .iter()
                .enumerate()
                .filter_map(|(i, &f)| f.then_some(i as u32))
                .collect(),
        };
        let header_json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_json);
        let params = self.named_params();
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for (name, tensor) in params {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tensor.shape().len() as u8);
            for &dim in tensor.shape() {
                out.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        atomic_write(path, &out).map_err(|source| Seq2SeqError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Loads a checkpoint, validating magic, version, and every tensor
    /// shape against the stored configuration. Returns the model and the
    /// task string it was saved under.
    pub fn load(path: &Path) -> Result<(Self, String), Seq2SeqError> {
        let bytes = std::fs::read(path).map_err(|source| Seq2SeqError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let invalid = |reason: String| Seq2SeqError::InvalidCheckpoint {
            path: path.display().to_string(),
            reason,
        };
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(4).ok_or_else(|| invalid("truncated magic".into()))? != MAGIC {
            return Err(invalid("bad magic bytes".into()));
        }
        let version = r.u32().ok_or_else(|| invalid("truncated version".into()))?;
        if version != VERSION {
            return Err(invalid(format!("unsupported version {version}, want {VERSION}")));
        }
        let header_len = r.u32().ok_or_else(|| invalid("truncated header length".into()))? as usize;
        let header_bytes = r
            .take(header_len)
            .ok_or_else(|| invalid("truncated header".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(header_bytes)
            .map_err(|e| invalid(format!("bad header: {e}")))?;
        let count = r.u32().ok_or_else(|| invalid("truncated tensor count".into()))? as usize;
        if count != Self::PARAM_COUNT {
            return Err(invalid(format!("expected {} tensors, found {count}", Self::PARAM_COUNT)));
        }

        let cfg = header.config;
        let (d, h, v) = (cfg.embed_dim, cfg.hidden, cfg.vocab_size);
        let mut encoder_fwd = LstmParams::zeros(d, h);
        let mut encoder_bwd = LstmParams::zeros(d, h);
        let mut decoder = LstmParams::zeros(d, h);
        let mut w_v = Tensor::zeros(&[2 * h, h]).with_grad();
        let mut w_s = Tensor::zeros(&[h, v]).with_grad();
        let mut embedding_weights: Option<Tensor> = None;

        for (want_name, want_shape) in expected_shapes(&cfg) {
            let name_len = r.u16().ok_or_else(|| invalid("truncated tensor name".into()))? as usize;
            let name_bytes = r
                .take(name_len)
                .ok_or_else(|| invalid("truncated tensor name".into()))?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| invalid("tensor name is not utf-8".into()))?;
            if name != want_name {
                return Err(invalid(format!("expected tensor '{want_name}', found '{name}'")));
            }
            let ndim = r.u8().ok_or_else(|| invalid("truncated shape".into()))? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32().ok_or_else(|| invalid("truncated shape".into()))? as usize);
            }
            if shape != want_shape {
                return Err(invalid(format!(
                    "tensor '{name}' has shape {shape:?}, expected {want_shape:?}"
                )));
            }
            let n = crate::tensor::numel(&shape);
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let chunk = r
                    .take(8)
                    .ok_or_else(|| invalid("truncated tensor data".into()))?;
                data.push(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
            }
            let tensor = Tensor::from_vec(&shape, data)
                .map_err(|e| invalid(format!("tensor '{name}': {e}")))?
                .with_grad();
            match name {
                "embedding" => embedding_weights = Some(tensor),
                "w_v" => w_v = tensor,
                "w_s" => w_s = tensor,
                _ => {
                    let (which, field) = name.split_once('.').expect("lstm tensor name");
                    let lstm = match which {
                        "encoder_fwd" => &mut encoder_fwd,
                        "encoder_bwd" => &mut encoder_bwd,
                        _ => &mut decoder,
                    };
                    match field {
                        "w_f" => lstm.w_f = tensor,
                        "w_i" => lstm.w_i = tensor,
                        "w_o" => lstm.w_o = tensor,
                        "w_c" => lstm.w_c = tensor,
                        "b_f" => lstm.b_f = tensor,
                        "b_i" => lstm.b_i = tensor,
                        "b_o" => lstm.b_o = tensor,
                        _ => lstm.b_c = tensor,
                    }
                }
            }
        }
        if r.pos != bytes.len() {
            return Err(invalid("trailing bytes after last tensor".into()));
        }
        let weights = embedding_weights.expect("embedding is in the expected list");
        let mut frozen = vec![false; v];
        for idx in header.frozen_rows {
            let idx = idx as usize;
            if idx >= v {
                return Err(invalid(format!("frozen row {idx} out of range")));
            }
            frozen[idx] = true;
        }
        let embedding = EmbeddingTable::from_parts(weights, frozen, d);
        Ok((
            Seq2SeqModel {
                config: cfg,
                embedding,
                encoder_fwd,
                encoder_bwd,
                decoder,
                w_v,
                w_s,
                vocab_hash: header.vocab_hash,
            },
            header.task,
        ))
    }
}

fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, h, v) = (cfg.embed_dim, cfg.hidden, cfg.vocab_size);
    let mut out = vec![("embedding".to_string(), vec![v, d])];
    for prefix in ["encoder_fwd", "encoder_bwd", "decoder"] {
        for name in LstmParams::TENSOR_NAMES {
            let shape = if name.starts_with('w') { vec![d + h, h] } else { vec![1, h] };
            out.push((format!("{prefix}.{name}"), shape));
        }
    }
    out.push(("w_v".to_string(), vec![2 * h, h]));
    out.push(("w_s".to_string(), vec![h, v]));
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return None;
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Some(out)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes(b.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}
