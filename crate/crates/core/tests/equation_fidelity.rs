//! Straight-line re-implementations of the model math, written directly
//! from the defining formulas with plain vectors and loops, and compared
//! elementwise against the tape-based implementation on random
//! configurations. These oracles are independent of the tape code path.

use elink_core::embed::EmbeddingTable;
use elink_core::lstm::{lstm_cell, zero_state, LstmParams, LstmState};
use elink_core::seq2seq::{attention, ModelConfig, Seq2SeqModel};
use elink_core::tape::Tape;
use elink_core::tensor::Tensor;
use elink_core::util::seeded_rng;
use elink_core::vocab::Vocabulary;

use rand::Rng;

const TOL: f64 = 1e-12;

fn assert_close(actual: &[f64], expected: &[f64], what: &str) {
    assert_eq!(actual.len(), expected.len(), "{what}: length");
    for (i, (a, e)) in actual.iter().zip(expected).enumerate() {
        assert!((a - e).abs() < TOL, "{what}[{i}]: {a} vs {e}");
    }
}

// ── Oracle: plain-vector formulas ────────────────────────────────────

fn sigma(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct RawGate<'a> {
    w: &'a [f64], // (d + h) x h, row-major
    b: &'a [f64], // h
}

fn linear(z: &[f64], gate: &RawGate, hidden: usize) -> Vec<f64> {
    let mut out = vec![0.0; hidden];
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, zi) in z.iter().enumerate() {
            acc += zi * gate.w[i * hidden + j];
        }
        *o = acc + gate.b[j];
    }
    out
}

struct RawLstm<'a> {
    f: RawGate<'a>,
    i: RawGate<'a>,
    o: RawGate<'a>,
    c: RawGate<'a>,
    hidden: usize,
}

impl<'a> RawLstm<'a> {
    fn from_params(p: &'a LstmParams) -> Self {
        RawLstm {
            f: RawGate { w: p.w_f.data(), b: p.b_f.data() },
            i: RawGate { w: p.w_i.data(), b: p.b_i.data() },
            o: RawGate { w: p.w_o.data(), b: p.b_o.data() },
            c: RawGate { w: p.w_c.data(), b: p.b_c.data() },
            hidden: p.hidden(),
        }
    }

    /// f = sig(W_f [x,h] + b_f); i, o alike; cand = tanh(W_c [x,h] + b_c);
    /// c' = f*c + i*cand; h' = o*tanh(c').
    fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z: Vec<f64> = x.iter().chain(h_prev).copied().collect();
        let f: Vec<f64> = linear(&z, &self.f, self.hidden).iter().map(|&v| sigma(v)).collect();
        let i: Vec<f64> = linear(&z, &self.i, self.hidden).iter().map(|&v| sigma(v)).collect();
        let o: Vec<f64> = linear(&z, &self.o, self.hidden).iter().map(|&v| sigma(v)).collect();
        let cand: Vec<f64> =
            linear(&z, &self.c, self.hidden).iter().map(|v| v.tanh()).collect();
        let c_new: Vec<f64> = (0..self.hidden)
            .map(|k| f[k] * c_prev[k] + i[k] * cand[k])
            .collect();
        let h_new: Vec<f64> = (0..self.hidden).map(|k| o[k] * c_new[k].tanh()).collect();
        (h_new, c_new)
    }
}

/// a_n = exp(h_m . h_n) / sum_n' exp(h_m . h_n'), computed exactly as the
/// formula reads; V = sum_n a_n h_n.
fn oracle_attention(enc: &[Vec<f64>], h_m: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let scores: Vec<f64> = enc
        .iter()
        .map(|h_n| h_n.iter().zip(h_m).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let total: f64 = scores.iter().map(|s| s.exp()).sum();
    let weights: Vec<f64> = scores.iter().map(|s| s.exp() / total).collect();
    let hidden = h_m.len();
    let mut context = vec![0.0; hidden];
    for (w, h_n) in weights.iter().zip(enc) {
        for (c, v) in context.iter_mut().zip(h_n) {
            *c += w * v;
        }
    }
    (weights, context)
}

struct RawModel<'a> {
    enc_fwd: RawLstm<'a>,
    enc_bwd: RawLstm<'a>,
    dec: RawLstm<'a>,
    w_v: &'a [f64], // 2h x h
    w_s: &'a [f64], // h x v
    emb: &'a [f64], // v x d
    d: usize,
    h: usize,
    v: usize,
}

impl<'a> RawModel<'a> {
    fn embed(&self, id: usize) -> &[f64] {
        &self.emb[id * self.d..(id + 1) * self.d]
    }

    /// Both directions from zero states, per-step sums, summed final state.
    fn encode(&self, source: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let n = source.len();
        let mut fwd_h = Vec::with_capacity(n);
        let mut fwd_c = Vec::with_capacity(n);
        let (mut h, mut c) = (vec![0.0; self.h], vec![0.0; self.h]);
        for &id in source {
            let (nh, nc) = self.enc_fwd.step(self.embed(id), &h, &c);
            h = nh;
            c = nc;
            fwd_h.push(h.clone());
            fwd_c.push(c.clone());
        }
        let mut bwd_h = vec![Vec::new(); n];
        let mut bwd_c = vec![Vec::new(); n];
        let (mut h, mut c) = (vec![0.0; self.h], vec![0.0; self.h]);
        for i in (0..n).rev() {
            let (nh, nc) = self.enc_bwd.step(self.embed(source[i]), &h, &c);
            h = nh;
            c = nc;
            bwd_h[i] = h.clone();
            bwd_c[i] = c.clone();
        }
        let steps: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..self.h).map(|k| fwd_h[i][k] + bwd_h[i][k]).collect())
            .collect();
        let final_h = steps[n - 1].clone();
        let final_c: Vec<f64> = (0..self.h).map(|k| fwd_c[n - 1][k] + bwd_c[n - 1][k]).collect();
        (steps, final_h, final_c)
    }

    /// One decoder step: LSTM, attention, h~ = tanh(W_v [V; h]),
    /// logits = h~ W_s.
    fn decode_step(
        &self,
        prev_id: usize,
        h_prev: &[f64],
        c_prev: &[f64],
        enc: &[Vec<f64>],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let (h_m, c_m) = self.dec.step(self.embed(prev_id), h_prev, c_prev);
        let (weights, context) = oracle_attention(enc, &h_m);
        let cat: Vec<f64> = context.iter().chain(&h_m).copied().collect();
        let mixed: Vec<f64> = (0..self.h)
            .map(|j| {
                cat.iter()
                    .enumerate()
                    .map(|(i, v)| v * self.w_v[i * self.h + j])
                    .sum::<f64>()
                    .tanh()
            })
            .collect();
        let logits: Vec<f64> = (0..self.v)
            .map(|j| {
                mixed
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * self.w_s[i * self.v + j])
                    .sum()
            })
            .collect();
        (logits, h_m, c_m, weights)
    }
}

fn random_model(d: usize, h: usize, v: usize, seed: u64) -> Seq2SeqModel {
    let tokens: Vec<String> = (0..v.saturating_sub(5)).map(|i| format!("t{i}")).collect();
    let vocab = Vocabulary::build(tokens.iter(), v.max(6), 1).unwrap();
    let config = ModelConfig {
        embed_dim: d,
        hidden: h,
        vocab_size: vocab.len(),
        max_source_len: 16,
        max_decode_len: 8,
    };
    let embedding = EmbeddingTable::random(&vocab, d, seed);
    Seq2SeqModel::new(config, embedding, vocab.hash(), seed).unwrap()
}

fn raw_view(model: &Seq2SeqModel) -> RawModel<'_> {
    let params = model.named_params();
    let tensor = |name: &str| -> &Tensor {
        params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| *t)
            .unwrap_or_else(|| panic!("missing {name}"))
    };
    RawModel {
        enc_fwd: RawLstm {
            f: RawGate { w: tensor("encoder_fwd.w_f").data(), b: tensor("encoder_fwd.b_f").data() },
            i: RawGate { w: tensor("encoder_fwd.w_i").data(), b: tensor("encoder_fwd.b_i").data() },
            o: RawGate { w: tensor("encoder_fwd.w_o").data(), b: tensor("encoder_fwd.b_o").data() },
            c: RawGate { w: tensor("encoder_fwd.w_c").data(), b: tensor("encoder_fwd.b_c").data() },
            hidden: model.config().hidden,
        },
        enc_bwd: RawLstm {
            f: RawGate { w: tensor("encoder_bwd.w_f").data(), b: tensor("encoder_bwd.b_f").data() },
            i: RawGate { w: tensor("encoder_bwd.w_i").data(), b: tensor("encoder_bwd.b_i").data() },
            o: RawGate { w: tensor("encoder_bwd.w_o").data(), b: tensor("encoder_bwd.b_o").data() },
            c: RawGate { w: tensor("encoder_bwd.w_c").data(), b: tensor("encoder_bwd.b_c").data() },
            hidden: model.config().hidden,
        },
        dec: RawLstm {
            f: RawGate { w: tensor("decoder.w_f").data(), b: tensor("decoder.b_f").data() },
            i: RawGate { w: tensor("decoder.w_i").data(), b: tensor("decoder.b_i").data() },
            o: RawGate { w: tensor("decoder.w_o").data(), b: tensor("decoder.b_o").data() },
            c: RawGate { w: tensor("decoder.w_c").data(), b: tensor("decoder.b_c").data() },
            hidden: model.config().hidden,
        },
        w_v: tensor("w_v").data(),
        w_s: tensor("w_s").data(),
        emb: tensor("embedding").data(),
        d: model.config().embed_dim,
        h: model.config().hidden,
        v: model.config().vocab_size,
    }
}

#[test]
fn lstm_cell_matches_straight_line_oracle_100_configs() {
    let mut rng = seeded_rng(0xCE11);
    for case in 0..100 {
        let d = rng.random_range(2..8);
        let h = rng.random_range(2..8);
        let params = LstmParams::init(d, h, &mut rng);
        let x = Tensor::uniform(&[1, d], 1.5, &mut rng);
        let h_prev = Tensor::uniform(&[1, h], 1.0, &mut rng);
        let c_prev = Tensor::uniform(&[1, h], 1.0, &mut rng);

        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let xv = tape.leaf(&x);
        let hv = tape.leaf(&h_prev);
        let cv = tape.leaf(&c_prev);
        let state = lstm_cell(&mut tape, &vars, xv, &LstmState { h: hv, c: cv }).unwrap();

        let oracle = RawLstm::from_params(&params);
        let (h_want, c_want) = oracle.step(x.data(), h_prev.data(), c_prev.data());
        assert_close(tape.value(state.h), &h_want, &format!("case {case} h"));
        assert_close(tape.value(state.c), &c_want, &format!("case {case} c"));
    }
}

#[test]
fn attention_matches_direct_formula_100_configs() {
    let mut rng = seeded_rng(0xA77E);
    for case in 0..100 {
        let h = rng.random_range(2..8);
        let n = rng.random_range(1..7);
        let enc_rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..h).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let h_m: Vec<f64> = (0..h).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();

        let mut tape = Tape::new();
        let enc_flat: Vec<f64> = enc_rows.iter().flatten().copied().collect();
        let enc = tape.constant(&[n, h], enc_flat).unwrap();
        let query = tape.constant(&[1, h], h_m.clone()).unwrap();
        let (weights, context) = attention(&mut tape, enc, query).unwrap();

        let (w_want, v_want) = oracle_attention(&enc_rows, &h_m);
        assert_close(tape.value(weights), &w_want, &format!("case {case} weights"));
        assert_close(tape.value(context), &v_want, &format!("case {case} context"));
        let sum: f64 = tape.value(weights).iter().sum();
        assert!((sum - 1.0).abs() < TOL);
    }
}

#[test]
fn encoder_matches_straight_line_oracle() {
    let mut rng = seeded_rng(0xE9C0);
    for case in 0..40 {
        let d = rng.random_range(2..6);
        let h = rng.random_range(2..6);
        let v = rng.random_range(8..14);
        let model = random_model(d, h, v, rng.random());
        let n = rng.random_range(1..7);
        let source: Vec<usize> = (0..n).map(|_| rng.random_range(0..v)).collect();

        let mut tape = Tape::new();
        let vars = model.register(&mut tape);
        let enc = model.encode_on_tape(&mut tape, &vars, &source).unwrap();

        let raw = raw_view(&model);
        let (steps_want, final_h_want, final_c_want) = raw.encode(&source);
        for (i, want) in steps_want.iter().enumerate() {
            assert_close(tape.value(enc.per_step[i]), want, &format!("case {case} step {i}"));
        }
        assert_close(tape.value(enc.final_state.h), &final_h_want, "final h");
        assert_close(tape.value(enc.final_state.c), &final_c_want, "final c");
    }
}

#[test]
fn decode_step_matches_composed_oracle_100_configs() {
    let mut rng = seeded_rng(0xDEC0);
    for case in 0..100 {
        let d = rng.random_range(2..6);
        let h = rng.random_range(2..6);
        let v = rng.random_range(8..14);
        let model = random_model(d, h, v, rng.random());
        let n = rng.random_range(1..6);
        let source: Vec<usize> = (0..n).map(|_| rng.random_range(0..v)).collect();
        let prev_id = rng.random_range(0..v);

        let mut tape = Tape::new();
        let vars = model.register(&mut tape);
        let enc = model.encode_on_tape(&mut tape, &vars, &source).unwrap();
        let state = enc.final_state;
        let step = model
            .decode_step_on_tape(&mut tape, &vars, prev_id, &state, &enc)
            .unwrap();

        let raw = raw_view(&model);
        let (enc_steps, final_h, final_c) = raw.encode(&source);
        let (logits_want, h_want, c_want, weights_want) =
            raw.decode_step(prev_id, &final_h, &final_c, &enc_steps);
        assert_close(tape.value(step.logits), &logits_want, &format!("case {case} logits"));
        assert_close(tape.value(step.state.h), &h_want, &format!("case {case} h"));
        assert_close(tape.value(step.state.c), &c_want, &format!("case {case} c"));
        assert_close(tape.value(step.attention), &weights_want, &format!("case {case} attn"));
    }
}

#[test]
fn reversing_source_swaps_directional_roles() {
    // encode(rev(s)) with swapped fwd/bwd parameters yields the reversed
    // per-step sums of encode(s).
    let mut rng = seeded_rng(0x5CA1);
    for _ in 0..10 {
        let d = rng.random_range(2..6);
        let h = rng.random_range(2..6);
        let v = 12;
        let model = random_model(d, h, v, rng.random());
        let n = rng.random_range(2..7);
        let source: Vec<usize> = (0..n).map(|_| rng.random_range(0..v)).collect();
        let reversed: Vec<usize> = source.iter().rev().copied().collect();

        let mut swapped = random_model(d, h, v, 1);
        // Copy parameters with encoder directions exchanged.
        *swapped.encoder_fwd_mut() = clone_lstm(&model, "encoder_bwd");
        *swapped.encoder_bwd_mut() = clone_lstm(&model, "encoder_fwd");
        copy_named(&model, &mut swapped, "decoder");
        copy_rest(&model, &mut swapped);

        let mut tape_a = Tape::new();
        let vars_a = model.register(&mut tape_a);
        let enc_a = model.encode_on_tape(&mut tape_a, &vars_a, &source).unwrap();
        let mut tape_b = Tape::new();
        let vars_b = swapped.register(&mut tape_b);
        let enc_b = swapped.encode_on_tape(&mut tape_b, &vars_b, &reversed).unwrap();

        for i in 0..n {
            assert_close(
                tape_b.value(enc_b.per_step[i]),
                tape_a.value(enc_a.per_step[n - 1 - i]),
                &format!("step {i}"),
            );
        }
    }
}

fn clone_lstm(model: &Seq2SeqModel, prefix: &str) -> LstmParams {
    let params = model.named_params();
    let get = |suffix: &str| -> Tensor {
        params
            .iter()
            .find(|(n, _)| n == &format!("{prefix}.{suffix}"))
            .map(|(_, t)| (*t).clone())
            .expect("tensor present")
    };
    let mut lstm = LstmParams::zeros(model.config().embed_dim, model.config().hidden);
    lstm.w_f = get("w_f");
    lstm.w_i = get("w_i");
    lstm.w_o = get("w_o");
    lstm.w_c = get("w_c");
    lstm.b_f = get("b_f");
    lstm.b_i = get("b_i");
    lstm.b_o = get("b_o");
    lstm.b_c = get("b_c");
    lstm
}

fn copy_named(src: &Seq2SeqModel, dst: &mut Seq2SeqModel, prefix: &str) {
    let cloned = clone_lstm(src, prefix);
    match prefix {
        "decoder" => *dst.decoder_mut() = cloned,
        "encoder_fwd" => *dst.encoder_fwd_mut() = cloned,
        _ => *dst.encoder_bwd_mut() = cloned,
    }
}

fn copy_rest(src: &Seq2SeqModel, dst: &mut Seq2SeqModel) {
    let named = src.named_params();
    let get = |name: &str| -> Tensor {
        named
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| (*t).clone())
            .expect("tensor present")
    };
    *dst.w_v_mut() = get("w_v");
    *dst.w_s_mut() = get("w_s");
    let emb = get("embedding");
    dst.embedding_mut()
        .weights_mut()
        .data_mut()
        .copy_from_slice(emb.data());
}
