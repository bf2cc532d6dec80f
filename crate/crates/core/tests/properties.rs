//! Property tests for the spec-level invariants, quantified over generated
//! inputs.

use proptest::prelude::*;

use elink_core::embed::EmbeddingTable;
use elink_core::eval::{match_predictions, GoldSpec};
use elink_core::kg::{normalize, EntityRecord, KgIndex};
use elink_core::lstm::{lstm_cell_with_gates, zero_state, LstmParams};
use elink_core::pipeline::LinkPrediction;
use elink_core::seq2seq::{attention, ModelConfig, Seq2SeqModel};
use elink_core::tape::Tape;
use elink_core::tensor::Tensor;
use elink_core::util::seeded_rng;
use elink_core::vocab::{tokenize, Vocabulary};

use rand::Rng;

fn finite_all(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

mod numeric {
    use super::*;

    proptest! {
        #[test]
        fn forward_ops_stay_finite(
            a in proptest::collection::vec(-50.0f64..50.0, 6),
            b in proptest::collection::vec(-50.0f64..50.0, 6),
        ) {
            let mut tape = Tape::new();
            let ta = tape.constant(&[2, 3], a).unwrap();
            let tb = tape.constant(&[2, 3], b).unwrap();
            let sum = tape.add(ta, tb).unwrap();
            let prod = tape.mul(sum, ta).unwrap();
            let sig = tape.sigmoid(prod);
            let tan = tape.tanh(sig);
            let soft = tape.softmax_rows(tan).unwrap();
            prop_assert!(finite_all(tape.value(soft)));
        }

        #[test]
        fn softmax_rows_sum_to_one_and_are_nonnegative(
            rows in 1usize..5,
            cols in 1usize..7,
            seed in any::<u64>(),
        ) {
            let mut rng = seeded_rng(seed);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>() * 40.0 - 20.0).collect();
            let mut tape = Tape::new();
            let x = tape.constant(&[rows, cols], data).unwrap();
            let y = tape.softmax_rows(x).unwrap();
            let out = tape.value(y);
            for r in 0..rows {
                let row = &out[r * cols..(r + 1) * cols];
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                let sum: f64 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12, "row sum {sum}");
            }
        }
    }
}

mod model {
    use super::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn gate_ranges_hold(seed in any::<u64>(), d in 2usize..6, h in 2usize..6) {
            let mut rng = seeded_rng(seed);
            let params = LstmParams::init(d, h, &mut rng);
            let mut tape = Tape::new();
            let vars = params.register(&mut tape);
            let prev = zero_state(&mut tape, h);
            let x = tape.leaf(&Tensor::uniform(&[1, d], 3.0, &mut rng));
            let (state, gates) = lstm_cell_with_gates(&mut tape, &vars, x, &prev).unwrap();
            for g in [gates.forget, gates.input, gates.output] {
                prop_assert!(tape.value(g).iter().all(|&v| v > 0.0 && v < 1.0));
            }
            prop_assert!(tape.value(gates.candidate).iter().all(|&v| v > -1.0 && v < 1.0));
            prop_assert!(tape.value(state.h).iter().all(|&v| v > -1.0 && v < 1.0));
        }

        #[test]
        fn attention_weights_are_a_distribution(
            seed in any::<u64>(),
            n in 1usize..8,
            h in 2usize..6,
        ) {
            let mut rng = seeded_rng(seed);
            let enc_data: Vec<f64> = (0..n * h).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let q_data: Vec<f64> = (0..h).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let mut tape = Tape::new();
            let enc = tape.constant(&[n, h], enc_data).unwrap();
            let q = tape.constant(&[1, h], q_data).unwrap();
            let (weights, _) = attention(&mut tape, enc, q).unwrap();
            let w = tape.value(weights);
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            let sum: f64 = w.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn encoder_steps_are_directional_sums(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = seeded_rng(seed);
            let vocab = Vocabulary::build((0..8).map(|i| format!("t{i}")), 16, 1).unwrap();
            let config = ModelConfig {
                embed_dim: 4,
                hidden: 3,
                vocab_size: vocab.len(),
                max_source_len: 8,
                max_decode_len: 4,
            };
            let embedding = EmbeddingTable::random(&vocab, 4, seed);
            let model = Seq2SeqModel::new(config, embedding, vocab.hash(), seed).unwrap();
            let source: Vec<usize> = (0..n).map(|_| rng.random_range(0..vocab.len())).collect();
            let mut tape = Tape::new();
            let vars = model.register(&mut tape);
            let enc = model.encode_on_tape(&mut tape, &vars, &source).unwrap();
            for i in 0..n {
                let fwd = tape.value(enc.fwd_steps[i]).to_vec();
                let bwd = tape.value(enc.bwd_steps[i]).to_vec();
                let sum = tape.value(enc.per_step[i]);
                for k in 0..sum.len() {
                    prop_assert!((sum[k] - (fwd[k] + bwd[k])).abs() < 1e-15);
                }
            }
        }

        #[test]
        fn greedy_decode_is_pure(seed in any::<u64>()) {
            let vocab = Vocabulary::build((0..8).map(|i| format!("t{i}")), 16, 1).unwrap();
            let config = ModelConfig {
                embed_dim: 4,
                hidden: 3,
                vocab_size: vocab.len(),
                max_source_len: 8,
                max_decode_len: 6,
            };
            let embedding = EmbeddingTable::random(&vocab, 4, seed);
            let model = Seq2SeqModel::new(config, embedding, vocab.hash(), seed).unwrap();
            let out1 = model.greedy_decode(&[5, 6]).unwrap();
            let out2 = model.greedy_decode(&[5, 6]).unwrap();
            prop_assert_eq!(out1, out2);
        }
    }
}

mod vocabulary {
    use super::*;

    proptest! {
        #[test]
        fn roundtrip_identity_on_in_vocab_tokens(
            corpus in proptest::collection::vec("[a-z]{1,6}", 1..40),
        ) {
            let vocab = Vocabulary::build(corpus.iter(), 1000, 1).unwrap();
            let ids = vocab.encode(&corpus);
            let decoded = vocab.decode(&ids).unwrap();
            prop_assert_eq!(decoded, corpus);
        }

        #[test]
        fn construction_is_pure(
            corpus in proptest::collection::vec("[a-z]{1,5}", 0..30),
            max in 6usize..50,
        ) {
            let a = Vocabulary::build(corpus.iter(), max, 1).unwrap();
            let b = Vocabulary::build(corpus.iter(), max, 1).unwrap();
            prop_assert_eq!(a.tokens(), b.tokens());
            prop_assert_eq!(a.hash(), b.hash());
        }
    }
}

mod knowledge_graph {
    use super::*;

    proptest! {
        #[test]
        fn normalize_is_idempotent_on_arbitrary_strings(s in ".*") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }
    }

    fn record_strategy() -> impl Strategy<Value = Vec<EntityRecord>> {
        let label = "[a-z]{1,5}( [a-z]{1,5}){0,2}";
        let alias = "[A-Za-z]{1,6}(-[A-Za-z]{1,4})?";
        proptest::collection::btree_map(
            1u64..5000,
            (label, proptest::collection::vec(alias, 0..3)),
            1..25,
        )
        .prop_map(|map| {
            map.into_iter()
                .map(|(num, (label, aliases))| EntityRecord {
                    id: format!("Q{num}"),
                    label,
                    aliases,
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ingested_strings_round_trip_at_full_score(records in record_strategy()) {
            let index = KgIndex::from_records(records.clone());
            for rec in &records {
                for s in std::iter::once(&rec.label).chain(&rec.aliases) {
                    if normalize(s).is_empty() {
                        continue;
                    }
                    let hits = index.search(s, 1.0, usize::MAX).unwrap();
                    prop_assert!(
                        hits.iter().any(|h| h.id == rec.id && h.score == 1.0),
                        "string {s:?} of {} not retrievable", rec.id
                    );
                }
            }
        }

        #[test]
        fn threshold_monotonicity_and_score_bounds(
            records in record_strategy(),
            query in "[a-zA-Z]{1,8}",
        ) {
            let index = KgIndex::from_records(records);
            let mut previous: Option<Vec<String>> = None;
            for t in [1.0, 0.85, 0.7, 0.5] {
                let hits = index.search(&query, t, usize::MAX).unwrap();
                for hit in &hits {
                    prop_assert!(hit.score >= t && hit.score <= 1.0);
                    prop_assert!(index.contains_id(&hit.id));
                }
                let ids: Vec<String> = hits.into_iter().map(|h| h.id).collect();
                if let Some(prev) = &previous {
                    for id in prev {
                        prop_assert!(ids.contains(id), "threshold {t} lost {id}");
                    }
                }
                previous = Some(ids);
            }
        }

        #[test]
        fn serialization_is_deterministic(records in record_strategy()) {
            let a = KgIndex::from_records(records.clone()).to_bytes();
            let b = KgIndex::from_records(records).to_bytes();
            prop_assert_eq!(a, b);
        }
    }
}

mod corpus_props {
    use super::*;
    use elink_core::corpus::{align_sentence, ParseCounts, RawAnnotation};

    #[derive(Debug, Clone)]
    struct SentenceCase {
        tokens: Vec<String>,
        spans: Vec<(usize, usize, bool)>, // (start_tok, end_tok, misalign)
    }

    fn sentence_case() -> impl Strategy<Value = SentenceCase> {
        (
            proptest::collection::vec("[a-z]{1,5}", 1..30),
            proptest::collection::vec((0usize..30, 1usize..6, any::<bool>()), 0..6),
        )
            .prop_map(|(tokens, raw_spans)| {
                let len = tokens.len();
                let spans = raw_spans
                    .into_iter()
                    .map(|(start, span_len, misalign)| {
                        let start = start % len;
                        let end = (start + span_len).min(len);
                        (start, end, misalign)
                    })
                    .collect();
                SentenceCase { tokens, spans }
            })
    }

    proptest! {
        #[test]
        fn counters_balance_and_kept_spans_survive_roundtrip(case in sentence_case()) {
            let text = case.tokens.join(" ");
            let mut starts = Vec::new();
            let mut pos = 0;
            for tok in &case.tokens {
                starts.push(pos);
                pos += tok.chars().count() + 1;
            }
            let annotations: Vec<RawAnnotation> = case
                .spans
                .iter()
                .map(|&(i, j, misalign)| {
                    let start = starts[i] + usize::from(misalign);
                    let end = starts[j - 1] + case.tokens[j - 1].chars().count();
                    RawAnnotation {
                        start,
                        end,
                        surface: case.tokens[i..j].join(" "),
                        qid: "Q1".into(),
                    }
                })
                .collect();
            let max_tokens = 25;
            let mut counts = ParseCounts::default();
            let sent = align_sentence(&text, &annotations, max_tokens, &mut counts);

            prop_assert_eq!(
                counts.kept + counts.dropped_misaligned + counts.dropped_truncated,
                counts.annotations_total
            );
            prop_assert!(sent.tokens.len() <= max_tokens);

            // Round-trip: rebuild the text from tokens, re-tokenize, and
            // confirm every kept span still names the same tokens.
            let rebuilt = sent.tokens.join(" ");
            let re_tokens = tokenize(&rebuilt);
            for link in &sent.links {
                prop_assert!(link.end <= sent.tokens.len());
                prop_assert_eq!(
                    &re_tokens[link.start..link.end],
                    &sent.tokens[link.start..link.end]
                );
                prop_assert_eq!(
                    link.surface.clone(),
                    sent.tokens[link.start..link.end].join(" ")
                );
            }
            // Spans never overlap.
            for (a, b) in sent.links.iter().zip(sent.links.iter().skip(1)) {
                prop_assert!(a.end <= b.start || b.end <= a.start);
            }
        }
    }
}

mod eval_props {
    use super::*;

    fn predictions_strategy() -> impl Strategy<Value = Vec<LinkPrediction>> {
        proptest::collection::vec(
            ("[ab]{1,2}", 1u64..5, -3.0f64..0.0),
            0..7,
        )
        .prop_map(|items| {
            items
                .into_iter()
                .map(|(surface, qnum, decode_score)| LinkPrediction {
                    surface,
                    start: None,
                    end: None,
                    qid: format!("Q{qnum}"),
                    candidate_score: 1.0,
                    decode_score,
                })
                .collect()
        })
    }

    fn gold_strategy() -> impl Strategy<Value = Vec<GoldSpec>> {
        proptest::collection::vec(("[ab]{1,2}", 1u64..5), 0..7).prop_map(|items| {
            items
                .into_iter()
                .map(|(surface, qnum)| GoldSpec { surface, qid: format!("Q{qnum}") })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn count_identities_and_permutation_invariance(
            gold in gold_strategy(),
            mut preds in predictions_strategy(),
            rotate in 0usize..7,
        ) {
            let counts = match_predictions(&gold, &preds);
            prop_assert_eq!(counts.tp + counts.fn_, gold.len());
            prop_assert_eq!(counts.tp + counts.fp, preds.len());
            prop_assert_eq!(counts.fp, counts.wrong_entity + counts.spurious_mention);
            if !preds.is_empty() {
                let k = rotate % preds.len();
                preds.rotate_left(k);
                prop_assert_eq!(match_predictions(&gold, &preds), counts);
                preds.reverse();
                prop_assert_eq!(match_predictions(&gold, &preds), counts);
            }
        }
    }
}
