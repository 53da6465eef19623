mod common;

use common::*;
use probetime_core::backend::{Backend, TokenId};
use probetime_core::baselines::*;
use probetime_core::probes::{MultiChoiceItem, Splits, TaskData};
use probetime_core::series::{Metric, ProbeFamily, ProbeTaskSpec};
use probetime_core::Error;

#[test]
fn random_vector_entries_have_centered_mean() {
    // 1000 types of width 100 gives 1e5 independent draws from U(-2, 2).
    let b = random_vector_backend(&vocab_of(998), 100, 3).unwrap();
    let n = b.vocab().size() as TokenId;
    let values: Vec<f64> = (0..n).flat_map(|t| b.row(t).to_vec()).collect();
    assert_eq!(values.len(), 100_000);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    assert!(mean.abs() <= 0.02, "mean {mean}");
    assert!(values.iter().all(|x| x.abs() <= RANDOM_VECTOR_RANGE));
    // Variance of U(-a, a) is a^2 / 3.
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / values.len() as f64;
    assert!((var - 4.0 / 3.0).abs() < 0.02, "variance {var}");
}

#[test]
fn random_guess_averages_per_item_chance() {
    let mc = |n: usize| MultiChoiceItem {
        id: n.to_string(),
        tokens: words("[MASK]"),
        choices: (0..n).map(|i| format!("w{i}")).collect(),
        answer_index: 0,
    };
    let spec = ProbeTaskSpec::new("mc", ProbeFamily::Multichoice, "mc.jsonl", Metric::Accuracy);
    let g = random_guess_accuracy(&spec, &TaskData::MultiChoice(vec![mc(2), mc(5)]), 10).unwrap();
    assert!((g.value - 0.35).abs() < 1e-12);
    assert!(!g.approximate);
}

#[test]
fn random_guess_is_undefined_for_span_f1() {
    let t = trained();
    let spec = ProbeTaskSpec::new("chunk", ProbeFamily::Segmentation, "chunk.jsonl", Metric::SpanF1);
    let data = TaskData::TokenLabels(t.suites.segmentation.clone());
    assert!(matches!(
        random_guess_accuracy(&spec, &data, t.vocab.size()),
        Err(Error::Capability(_))
    ));
}

#[test]
fn random_guess_for_token_labels_is_inverse_label_count() {
    let t = trained();
    let spec = ProbeTaskSpec::new("pos", ProbeFamily::TokenLabel, "pos.jsonl", Metric::Accuracy);
    let Splits { train, .. } = &t.suites.token_labels;
    let labels: std::collections::BTreeSet<&String> = train.iter().flat_map(|s| &s.labels).collect();
    let g = random_guess_accuracy(
        &spec,
        &TaskData::TokenLabels(t.suites.token_labels.clone()),
        t.vocab.size(),
    )
    .unwrap();
    assert!((g.value - 1.0 / labels.len() as f64).abs() < 1e-12);
}

#[test]
fn final_layer_representations_depend_on_context() {
    let t = trained();
    let sentence = &t.suites.token_labels.test[0].tokens;
    let ids = t.vocab.encode(sentence).unwrap();
    let mut permuted = ids.clone();
    permuted.reverse();
    assert_ne!(ids, permuted);
    let (a, b) = (t.model.encode(&ids).unwrap(), t.model.encode(&permuted).unwrap());
    let last = a.n_layers() - 1;
    // The first token of `ids` sits at the end of `permuted`.
    let moved = ids.len() - 1;
    let differ = a
        .vector(last, 0)
        .iter()
        .zip(b.vector(last, moved))
        .any(|(x, y)| (x - y).abs() > 1e-9);
    assert!(
        differ,
        "the same token in a different context got the same final-layer vector"
    );
}

#[test]
fn heldout_loss_decreases_with_training() {
    let t = trained();
    let heldout: Vec<(u64, f64)> = t
        .losses
        .iter()
        .filter_map(|r| Some((r.step, r.heldout_loss?)))
        .collect();
    assert_eq!(heldout.first().unwrap().0, 0);
    assert_eq!(heldout.last().unwrap().0, t.config.total_steps);
    let (first, last) = (heldout.first().unwrap().1, heldout.last().unwrap().1);
    // Untrained loss starts near log V.
    assert!(
        (first - (t.vocab.size() as f64).ln()).abs() < 0.5,
        "initial loss {first}"
    );
    assert!(last < 0.6 * first, "{first} -> {last}");
}

#[test]
fn lookup_backends_leave_state_untouched() {
    let b = random_vector_backend(&vocab_of(5), 8, 1).unwrap();
    let before = b.state_digest();
    for _ in 0..3 {
        b.encode(&[2, 3, 4]).unwrap();
    }
    assert_eq!(b.state_digest(), before);
}

#[test]
fn random_init_is_a_per_trial_mean_of_untrained_models() {
    let t = trained();
    let spec = ProbeTaskSpec::new("facts", ProbeFamily::Cloze, "cloze.jsonl", Metric::PrecisionAtK).with_k(5);
    let data = TaskData::Cloze(t.suites.cloze.clone());
    let hyper = probetime_core::probes::structural::ProbeHyper::default();
    let one = random_init_eval(&spec, &data, &t.config, &t.vocab, 1, &hyper).unwrap();
    let two = random_init_eval(&spec, &data, &t.config, &t.vocab, 2, &hyper).unwrap();
    assert_eq!(
        one,
        random_init_eval(&spec, &data, &t.config, &t.vocab, 1, &hyper).unwrap()
    );
    assert_eq!((one.n_items, one.n_skipped), (two.n_items, two.n_skipped));
    // Trial seeds do not depend on the trial count, so the second trial's score
    // is recoverable and must be a whole number of correct items.
    let second = 2.0 * two.value - one.value;
    let correct = second * one.n_items as f64;
    assert!((0.0..=1.0 + 1e-12).contains(&second));
    assert!((correct - correct.round()).abs() < 1e-9, "second trial scored {second}");
    assert!(one.value < 0.5, "untrained precision@5 {}", one.value);
    assert!(matches!(
        random_init_eval(&spec, &data, &t.config, &t.vocab, 0, &hyper),
        Err(Error::Config { .. })
    ));
}
