// Oracles index explicitly to mirror the formulas they check.
#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use probetime_core::backend::{Backend, TokenId};
use probetime_core::baselines::{random_vector_backend, reference_eval, REFERENCE_RUN_TAG};
use probetime_core::probes::behavioral::*;
use probetime_core::probes::spans::span_f1;
use probetime_core::probes::structural::*;
use probetime_core::probes::*;
use probetime_core::series::{Metric, ProbeFamily, ProbeTaskSpec};
use probetime_core::Error;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

fn brute_force_pll(sentence: &[TokenId], backend: &dyn Backend) -> f64 {
    let mut total = 0.0;
    for i in (0..sentence.len()).rev() {
        let mut copy = sentence.to_vec();
        copy[i] = backend.vocab().mask_id();
        let d = backend.score_masked(&copy, &[i]).unwrap();
        total += d[0].prob(sentence[i]).max(1e-30).ln();
    }
    total / sentence.len() as f64
}

fn random_sentence(r: &mut impl Rng, backend: &dyn Backend, max_len: usize) -> Vec<String> {
    let v = backend.vocab();
    let n = r.random_range(1..=max_len);
    (0..n)
        .map(|_| loop {
            let t = r.random_range(0..v.size()) as TokenId;
            if !v.is_special(t) {
                break v.token(t).unwrap().to_string();
            }
        })
        .collect()
}

#[test]
fn pll_equals_per_copy_oracle_on_trained_model() {
    let t = trained();
    let mut r = rng(5);
    for _ in 0..50 {
        let s = random_sentence(&mut r, &t.model, 8);
        let ids = t.vocab.encode(&s).unwrap();
        let got = pll_score(&s, &t.model).unwrap();
        assert!((got - brute_force_pll(&ids, &t.model)).abs() <= 1e-12);
    }
}

#[test]
fn uniform_stub_pll_and_tie_policy() {
    let stub = UniformStub { vocab: vocab_of(10) };
    let v = stub.vocab.size() as f64;
    for s in ["w0", "w1 w2 w3", "w4 w4 w4 w4 w4 w4"] {
        assert!((pll_score(&words(s), &stub).unwrap() - (1.0 / v).ln()).abs() < 1e-12);
    }
    let items: Vec<MinimalPairItem> = (0..10)
        .map(|i| MinimalPairItem {
            id: i.to_string(),
            good: words("w1 w2"),
            bads: vec![words("w2 w1")],
        })
        .collect();
    assert_eq!(eval_minimal_pairs(&items, &stub).unwrap().value, 0.0);
}

#[test]
fn minimal_pairs_match_enumeration_oracle() {
    let stub = HashStub {
        vocab: vocab_of(12),
        salt: 9,
        scale: 1.0,
    };
    let mut r = rng(6);
    let items: Vec<MinimalPairItem> = (0..20)
        .map(|i| {
            let good = random_sentence(&mut r, &stub, 5);
            let mut bad = good.clone();
            let pos = r.random_range(0..bad.len());
            bad[pos] = if bad[pos] == "w0" { "w1".into() } else { "w0".into() };
            MinimalPairItem {
                id: i.to_string(),
                good,
                bads: vec![bad],
            }
        })
        .collect();
    let oracle = items
        .iter()
        .filter(|it| {
            let g = brute_force_pll(&stub.vocab.encode(&it.good).unwrap(), &stub);
            let b = brute_force_pll(&stub.vocab.encode(&it.bads[0]).unwrap(), &stub);
            g > b
        })
        .count() as f64
        / 20.0;
    let got = eval_minimal_pairs(&items, &stub).unwrap();
    assert_eq!(got.value, oracle);
    assert!(oracle > 0.0 && oracle < 1.0);
    // Scaling every probability (a constant shift of every log-probability)
    // leaves comparisons unchanged.
    let shifted = HashStub { scale: 0.5, ..stub };
    assert_eq!(eval_minimal_pairs(&items, &shifted).unwrap().value, got.value);
}

#[test]
fn cloze_matches_sort_oracle_on_trained_model() {
    let t = trained();
    let items = &t.suites.cloze[..50];
    let got = eval_cloze(items, &t.model, 1).unwrap();
    assert_eq!((got.n_items, got.n_skipped), (50, 0));
    let mut correct = 0;
    for item in items {
        let ids = t.vocab.encode(&item.tokens).unwrap();
        let d = t.model.score_masked(&ids, &[item.mask_position().unwrap()]).unwrap();
        let mut pool: Vec<TokenId> = (0..t.vocab.size() as TokenId)
            .filter(|&x| !t.vocab.is_special(x))
            .collect();
        pool.sort_by(|a, b| d[0].probs[*b as usize].total_cmp(&d[0].probs[*a as usize]));
        correct += usize::from(t.vocab.token(pool[0]) == Some(item.answer.as_str()));
    }
    assert_eq!(got.value, correct as f64 / 50.0);
}

#[test]
fn cloze_boundaries_under_uniform_stub() {
    let stub = UniformStub { vocab: vocab_of(10) };
    let item = |candidates| ClozeItem {
        id: "c".into(),
        tokens: words("w1 [MASK]"),
        answer: "w3".into(),
        candidates,
    };
    let v = stub.vocab.size();
    assert_eq!(eval_cloze(&[item(None)], &stub, v).unwrap().value, 1.0);
    assert_eq!(
        eval_cloze(&[item(None)], &stub, 1).unwrap().value,
        0.0,
        "ties rank against the answer"
    );
    assert_eq!(
        eval_cloze(
            &[item(Some(words("w3")))],
            &HashStub {
                vocab: vocab_of(10),
                salt: 1,
                scale: 1.0
            },
            1
        )
        .unwrap()
        .value,
        1.0
    );
}

#[test]
fn cloze_with_candidates_ignores_other_tokens() {
    let stub = HashStub {
        vocab: vocab_of(10),
        salt: 3,
        scale: 1.0,
    };
    let item = ClozeItem {
        id: "c".into(),
        tokens: words("w1 [MASK]"),
        answer: "w3".into(),
        candidates: Some(words("w3 w5")),
    };
    let ids = stub.vocab.encode(&item.tokens).unwrap();
    let d = stub.score_masked(&ids, &[1]).unwrap();
    let p = |w: &str| d[0].prob(stub.vocab.id(w).unwrap());
    let want = f64::from(u8::from(p("w3") > p("w5")));
    assert_eq!(eval_cloze(&[item], &stub, 1).unwrap().value, want);
}

#[test]
fn multichoice_matches_per_choice_oracle_on_trained_model() {
    let t = trained();
    let mut r = rng(7);
    let nums: Vec<String> = t
        .vocab
        .tokens()
        .iter()
        .filter(|s| s.starts_with("num"))
        .cloned()
        .collect();
    let items: Vec<MultiChoiceItem> = t.suites.multichoice[..40]
        .iter()
        .map(|m| {
            let mut choices = m.choices.clone();
            choices.extend(nums.choose_multiple(&mut r, 2).cloned());
            MultiChoiceItem { choices, ..m.clone() }
        })
        .collect();
    let mut correct = 0;
    for item in &items {
        let ids = t.vocab.encode(&item.tokens).unwrap();
        let pos = item.mask_position().unwrap();
        let probs: Vec<f64> = item
            .choices
            .iter()
            .map(|c| t.model.score_masked(&ids, &[pos]).unwrap()[0].prob(t.vocab.id(c).unwrap()))
            .collect();
        let mut best = 0;
        for i in 1..probs.len() {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        correct += usize::from(best == item.answer_index);
    }
    assert_eq!(eval_multichoice(&items, &t.model).unwrap().value, correct as f64 / 40.0);
}

#[test]
fn multichoice_stub_policies() {
    let stub = UniformStub { vocab: vocab_of(6) };
    let items: Vec<MultiChoiceItem> = (0..8)
        .map(|i| MultiChoiceItem {
            id: i.to_string(),
            tokens: words("[MASK] w0"),
            choices: words("w1 w2"),
            answer_index: i % 4 / 3,
        })
        .collect();
    let frac0 = items.iter().filter(|i| i.answer_index == 0).count() as f64 / 8.0;
    assert_eq!(eval_multichoice(&items, &stub).unwrap().value, frac0);
    let skipped = MultiChoiceItem {
        id: "s".into(),
        tokens: words("[MASK] w0"),
        choices: words("w1 zz"),
        answer_index: 0,
    };
    let r = eval_multichoice(&[items[0].clone(), skipped], &stub).unwrap();
    assert_eq!((r.n_items, r.n_skipped), (1, 1));
}

#[test]
fn behavioral_probes_refuse_representation_only_backends() {
    let b = random_vector_backend(&vocab_of(5), 16, 1).unwrap();
    let mp = MinimalPairItem {
        id: "m".into(),
        good: words("w1"),
        bads: vec![words("w2")],
    };
    assert!(matches!(eval_minimal_pairs(&[mp], &b), Err(Error::Capability(_))));
    let cz = ClozeItem {
        id: "c".into(),
        tokens: words("[MASK]"),
        answer: "w1".into(),
        candidates: None,
    };
    assert!(matches!(eval_cloze(&[cz], &b, 1), Err(Error::Capability(_))));
    assert!(matches!(pll_score(&words("w1"), &b), Err(Error::Capability(_))));
}

#[test]
fn mix_matches_hand_computed_softmax_sum() {
    let mut r = rng(8);
    let stub = TableStub::random(vocab_of(4), 3, 5, 9);
    let reps = stub.encode(&[2, 3]).unwrap();
    for _ in 0..20 {
        let alpha: Vec<f64> = (0..3).map(|_| r.random_range(-3.0..3.0)).collect();
        let gamma = r.random_range(0.1..2.0);
        let m = ScalarMix {
            raw_weights: alpha.clone(),
            scale: gamma,
            normalize: true,
        };
        let z: f64 = alpha.iter().map(|a| a.exp()).sum();
        let got = mix(&reps, 1, &m).unwrap();
        for k in 0..5 {
            let want: f64 = gamma * (0..3).map(|l| alpha[l].exp() / z * stub.table[l][3][k]).sum::<f64>();
            assert!((got[k] - want).abs() < 1e-12);
        }
        let w = m.weights();
        assert!(w.iter().all(|&x| x > 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

/// Vocabulary of 40 types whose last-layer vectors decode linearly into 3
/// labels with a margin; layer 0 is unrelated noise.
fn planted(seed: u64) -> (TableStub, Vec<String>) {
    let mut r = rng(seed);
    let mut stub = TableStub::random(vocab_of(40), 2, 8, seed);
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..8).map(|_| r.random_range(-2.0..2.0)).collect())
        .collect();
    let mut labels = vec![String::new(); stub.vocab.size()];
    for t in 2..stub.vocab.size() {
        let c = t % 3;
        stub.table[1][t] = centers[c].iter().map(|x| x + r.random_range(-0.3..0.3)).collect();
        labels[t] = format!("L{c}");
    }
    (stub, labels)
}

fn labeled_sentences(r: &mut impl Rng, stub: &TableStub, labels: &[String], n: usize) -> Vec<TokenLabelSentence> {
    (0..n)
        .map(|_| {
            let len = r.random_range(2..8);
            let ids: Vec<usize> = (0..len).map(|_| r.random_range(2..stub.vocab.size())).collect();
            TokenLabelSentence {
                tokens: ids
                    .iter()
                    .map(|&i| stub.vocab.token(i as TokenId).unwrap().to_string())
                    .collect(),
                labels: ids.iter().map(|&i| labels[i].clone()).collect(),
            }
        })
        .collect()
}

#[test]
fn planted_signal_is_recovered_and_backend_stays_frozen() {
    let (stub, labels) = planted(10);
    let mut r = rng(11);
    let train = labeled_sentences(&mut r, &stub, &labels, 300);
    let dev = labeled_sentences(&mut r, &stub, &labels, 100);
    let before = stub.state_digest();
    let (trs, dvs) = (
        extract_token_labels(&stub, &train).unwrap(),
        extract_token_labels(&stub, &dev).unwrap(),
    );
    let (probe, dev_acc) = train_probe(&trs, &dvs, StructuralMetric::Accuracy, &ProbeHyper::default()).unwrap();
    assert!(dev_acc >= 0.99, "dev accuracy {dev_acc}");
    assert_eq!(stub.state_digest(), before);
    assert_eq!(eval_token_labeling(&probe, &dev, &stub).unwrap().value, dev_acc);
    // The trained mix leans on the informative layer.
    let w = probe.scalar_mix.weights();
    assert!(w[1] > w[0]);
}

#[test]
fn shuffled_labels_stay_near_majority_frequency() {
    let (stub, labels) = planted(12);
    let mut r = rng(13);
    let shuffle = |mut data: Vec<TokenLabelSentence>, r: &mut rand_chacha::ChaCha8Rng| {
        let mut all: Vec<String> = data.iter().flat_map(|s| s.labels.clone()).collect();
        all.shuffle(r);
        let mut it = all.into_iter();
        for s in &mut data {
            for l in &mut s.labels {
                *l = it.next().unwrap();
            }
        }
        data
    };
    let train = shuffle(labeled_sentences(&mut r, &stub, &labels, 300), &mut r);
    let dev = shuffle(labeled_sentences(&mut r, &stub, &labels, 200), &mut r);
    let (trs, dvs) = (
        extract_token_labels(&stub, &train).unwrap(),
        extract_token_labels(&stub, &dev).unwrap(),
    );
    let (_, dev_acc) = train_probe(&trs, &dvs, StructuralMetric::Accuracy, &ProbeHyper::default()).unwrap();
    let all: Vec<&String> = dev.iter().flat_map(|s| &s.labels).collect();
    let majority = ["L0", "L1", "L2"]
        .iter()
        .map(|l| all.iter().filter(|x| x.as_str() == *l).count())
        .max()
        .unwrap() as f64
        / all.len() as f64;
    assert!((dev_acc - majority).abs() <= 0.05, "{dev_acc} vs majority {majority}");
}

#[test]
fn scaling_representations_keeps_planted_predictions() {
    let (stub, labels) = planted(14);
    let mut r = rng(15);
    let train = labeled_sentences(&mut r, &stub, &labels, 300);
    let dev = labeled_sentences(&mut r, &stub, &labels, 100);
    let scaled = TableStub {
        table: stub
            .table
            .iter()
            .map(|l| l.iter().map(|v| v.iter().map(|x| x * 3.0).collect()).collect())
            .collect(),
        vocab: stub.vocab.clone(),
        ..stub
    };
    let reps = scaled.encode(&[5]).unwrap();
    let m = ScalarMix::new(2, true);
    let unscaled_reps = reps.scaled(1.0 / 3.0);
    let (a, b) = (mix(&reps, 0, &m).unwrap(), mix(&unscaled_reps, 0, &m).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - 3.0 * y).abs() < 1e-12);
    }
    let acc = |backend: &TableStub| {
        let (t, d) = (
            extract_token_labels(backend, &train).unwrap(),
            extract_token_labels(backend, &dev).unwrap(),
        );
        train_probe(&t, &d, StructuralMetric::Accuracy, &ProbeHyper::default())
            .unwrap()
            .1
    };
    assert!(acc(&scaled) >= 0.99);
}

fn oracle_spans(tags: &[&str]) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tags.len() {
        if tags[i] == "O" {
            i += 1;
            continue;
        }
        let ty = &tags[i][2..];
        let mut j = i + 1;
        while j < tags.len() && tags[j] == format!("I-{ty}") {
            j += 1;
        }
        out.push((i, j, ty.to_string()));
        i = j;
    }
    out
}

#[test]
fn span_f1_matches_pair_matching_oracle() {
    let mut r = rng(16);
    let tags = ["O", "B-NP", "I-NP", "B-VP", "I-VP"];
    for _ in 0..100 {
        let n_sent = r.random_range(1..4);
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        for _ in 0..n_sent {
            let len = r.random_range(1..7);
            gold.push((0..len).map(|_| *tags.choose(&mut r).unwrap()).collect::<Vec<_>>());
            pred.push((0..len).map(|_| *tags.choose(&mut r).unwrap()).collect::<Vec<_>>());
        }
        let (mut matched, mut np, mut ng) = (0usize, 0usize, 0usize);
        for (g, p) in gold.iter().zip(&pred) {
            let (gs, ps) = (oracle_spans(g), oracle_spans(p));
            ng += gs.len();
            np += ps.len();
            for a in &gs {
                for b in &ps {
                    matched += usize::from(a == b);
                }
            }
        }
        let want = if matched == 0 {
            0.0
        } else {
            let (p, rc) = (matched as f64 / np as f64, matched as f64 / ng as f64);
            2.0 * p * rc / (p + rc)
        };
        assert!((span_f1(&gold, &pred).unwrap() - want).abs() < 1e-15);
    }
}

fn random_arc_sentence(r: &mut impl Rng, vocab_size: usize) -> ArcSentence {
    let n = r.random_range(1..6);
    let tokens: Vec<String> = (0..n).map(|_| format!("w{}", r.random_range(0..vocab_size))).collect();
    let mut arcs = Vec::new();
    for dep in 0..n {
        let head = r.random_range(0..n);
        if head != dep && r.random_bool(0.7) {
            arcs.push(Arc {
                head,
                dep,
                label: ["nsubj", "obj", "det"][r.random_range(0..3)].into(),
            });
        }
    }
    ArcSentence { tokens, arcs }
}

#[test]
fn arc_evaluation_matches_enumeration_oracle() {
    let mut r = rng(17);
    let stub = TableStub::random(vocab_of(6), 2, 3, 18);
    for case in 0..100 {
        let data: Vec<ArcSentence> = (0..3).map(|_| random_arc_sentence(&mut r, 6)).collect();
        let (mode, label_set) = if case % 2 == 0 {
            (ArcMode::Pred, vec![ARC.to_string(), NO_ARC.to_string()])
        } else {
            (
                ArcMode::Class,
                vec!["det".to_string(), "nsubj".to_string(), "obj".to_string()],
            )
        };
        let mut probe = LinearProbeModel::new(2, 6, label_set.clone(), true);
        probe.weight.iter_mut().for_each(|w| *w = r.random_range(-1.0..1.0));
        probe.bias.iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
        probe.scalar_mix.raw_weights = vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let seed = case as u64;
        let got = eval_arcs(&probe, &data, &stub, mode, seed);

        let (mut correct, mut total, mut skipped) = (0, 0, 0);
        for (i, s) in data.iter().enumerate() {
            if mode == ArcMode::Pred && s.tokens.len() < 2 {
                skipped += 1;
                continue;
            }
            let reps = stub.encode(&stub.vocab.encode(&s.tokens).unwrap()).unwrap();
            let cands: Vec<(usize, usize, String)> = match mode {
                ArcMode::Pred => arc_candidates(s, seed, i)
                    .into_iter()
                    .map(|(h, d, l)| (h, d, l.to_string()))
                    .collect(),
                ArcMode::Class => s.arcs.iter().map(|a| (a.head, a.dep, a.label.clone())).collect(),
            };
            for (h, d, gold) in cands {
                let mut x = mix(&reps, h, &probe.scalar_mix).unwrap();
                x.extend(mix(&reps, d, &probe.scalar_mix).unwrap());
                let logits: Vec<f64> = (0..label_set.len())
                    .map(|j| {
                        probe.bias[j]
                            + (0..6)
                                .map(|a| x[a] * probe.weight[a * label_set.len() + j])
                                .sum::<f64>()
                    })
                    .collect();
                let best = (0..logits.len()).fold(0, |b, j| if logits[j] > logits[b] { j } else { b });
                correct += usize::from(label_set[best] == gold);
                total += 1;
            }
        }
        match got {
            Ok(score) => {
                assert_eq!(score.value, correct as f64 / total as f64, "case {case}");
                assert_eq!(score.n_skipped, skipped);
            }
            Err(Error::NoData(_)) => assert_eq!(total, 0),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn arc_prediction_set_is_balanced() {
    let mut r = rng(19);
    let stub = TableStub::random(vocab_of(6), 1, 2, 20);
    let data: Vec<ArcSentence> = (0..50)
        .map(|_| {
            let n = r.random_range(3..6);
            ArcSentence {
                tokens: (0..n).map(|_| format!("w{}", r.random_range(0..6))).collect(),
                arcs: (1..n)
                    .map(|dep| Arc {
                        head: 0,
                        dep,
                        label: "x".into(),
                    })
                    .collect(),
            }
        })
        .collect();
    // Zero weights with a bias favouring one class: a constant classifier.
    let mut probe = LinearProbeModel::new(1, 4, vec![ARC.into(), NO_ARC.into()], true);
    probe.bias = vec![1.0, 0.0];
    assert_eq!(eval_arcs(&probe, &data, &stub, ArcMode::Pred, 3).unwrap().value, 0.5);
    probe.bias = vec![0.0, 1.0];
    assert_eq!(eval_arcs(&probe, &data, &stub, ArcMode::Pred, 3).unwrap().value, 0.5);
}

#[test]
fn token_accuracy_matches_position_loop() {
    let (stub, labels) = planted(21);
    let mut r = rng(22);
    let data = labeled_sentences(&mut r, &stub, &labels, 30);
    let mut probe = LinearProbeModel::new(2, 8, vec!["L0".into(), "L1".into(), "L2".into()], false);
    probe.weight.iter_mut().for_each(|w| *w = r.random_range(-1.0..1.0));
    let (mut correct, mut total) = (0, 0);
    for s in &data {
        let reps = stub.encode(&stub.vocab.encode(&s.tokens).unwrap()).unwrap();
        for (p, gold) in s.labels.iter().enumerate() {
            let x = mix(&reps, p, &probe.scalar_mix).unwrap();
            let logits: Vec<f64> = (0..3)
                .map(|j| probe.bias[j] + (0..8).map(|a| x[a] * probe.weight[a * 3 + j]).sum::<f64>())
                .collect();
            let best = (0..3).fold(0, |b, j| if logits[j] > logits[b] { j } else { b });
            correct += usize::from(probe.label_set[best] == *gold);
            total += 1;
        }
    }
    assert_eq!(
        eval_token_labeling(&probe, &data, &stub).unwrap().value,
        correct as f64 / total as f64
    );
}

#[test]
fn segmentation_rejects_non_bio_labels() {
    let stub = TableStub::random(vocab_of(3), 1, 2, 1);
    let data = vec![TokenLabelSentence {
        tokens: words("w0 w1"),
        labels: words("NP VP"),
    }];
    let probe = LinearProbeModel::new(1, 2, vec!["B-NP".into()], true);
    assert!(matches!(eval_segmentation(&probe, &data, &stub), Err(Error::Data(_))));
}

#[test]
fn reference_eval_equals_direct_evaluation() {
    let t = trained();
    let suite = SuiteData {
        tasks: vec![
            (
                ProbeTaskSpec::new("agreement", ProbeFamily::MinimalPair, "mp.jsonl", Metric::Accuracy),
                TaskData::MinimalPairs(t.suites.minimal_pairs.clone()),
            ),
            (
                ProbeTaskSpec::new("facts", ProbeFamily::Cloze, "cloze.jsonl", Metric::PrecisionAtK),
                TaskData::Cloze(t.suites.cloze.clone()),
            ),
        ],
        hyper: ProbeHyper::default(),
    };
    let hyper = ProbeHyper::default();
    let final_records = reference_eval(&suite, &t.model, 800, &hyper).unwrap();
    let initial_records = reference_eval(&suite, &t.initial, 0, &hyper).unwrap();
    for (rec, (spec, data)) in final_records.iter().zip(&suite.tasks) {
        assert_eq!(rec.run_tag, REFERENCE_RUN_TAG);
        let direct = evaluate_task(spec, data, &t.model, &hyper).unwrap();
        assert_eq!(rec.record.metric_value, direct.value);
    }
    assert!(final_records[0].record.metric_value >= initial_records[0].record.metric_value);
}

#[test]
fn static_table_probe_is_weaker_than_trained_model() {
    let t = trained();
    let spec = ProbeTaskSpec::new("pos", ProbeFamily::TokenLabel, "pos.jsonl", Metric::Accuracy);
    let data = TaskData::TokenLabels(t.suites.token_labels.clone());
    let hyper = ProbeHyper::default();
    let trained_acc = evaluate_task(&spec, &data, &t.model, &hyper).unwrap().value;
    // A static table built from the untrained embedding rows plays the role of
    // context-free vectors.
    let table = t
        .vocab
        .tokens()
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), t.initial.embedding(i as TokenId).to_vec()))
        .collect();
    let static_backend = probetime_core::baselines::static_embedding_backend(&t.vocab, &table).unwrap();
    let static_acc = evaluate_task(&spec, &data, &static_backend, &hyper).unwrap().value;
    assert!(trained_acc >= static_acc, "{trained_acc} < {static_acc}");
}
