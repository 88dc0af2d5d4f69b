//! Simulated hypotheses against the noise model's own expectations.

use biasforge::corpus_io::write_manifest;
use biasforge::noise_model::{corrupt_corpus, NoiseSpec};
use biasforge::scoring::{score_corpus, ScoringInput};
use biasforge::sot::MarkerPolicy;
use biasforge::synth::{generate, SynthConfig};
use biasforge::text_norm::CommonWordSet;

fn fixture() -> (Vec<biasforge::corpus_io::UtteranceRecord>, CommonWordSet) {
    let corpus = generate(&SynthConfig {
        utterances: 400,
        rare_list_size: 5000,
        seed: 77,
        ..Default::default()
    })
    .unwrap();
    let common = CommonWordSet::from_ranked(corpus.common.iter(), corpus.common.len()).unwrap();
    (corpus.records, common)
}

fn spec() -> NoiseSpec {
    NoiseSpec {
        p_rare_corrupt: 0.6,
        p_common_corrupt: 0.05,
        p_word_delete: 0.02,
        p_word_insert: 0.02,
        seed: 13,
        ..Default::default()
    }
}

#[test]
fn measured_wer_tracks_expected_rate() {
    let (records, common) = fixture();
    let spec = spec();
    let noisy = corrupt_corpus(&records, &common, &spec, false).unwrap();

    let words: Vec<&str> = records
        .iter()
        .flat_map(|r| r.reference.split_whitespace())
        .filter(|w| *w != "<sc>")
        .collect();
    assert!(words.len() >= 1000, "only {} words", words.len());
    let expected = spec.expected_error_rate(words.iter().copied(), &common);

    let inputs: Vec<ScoringInput> = noisy
        .iter()
        .map(|r| ScoringInput {
            id: r.id.clone(),
            reference: r.reference.clone(),
            hypothesis: r.hypothesis.clone(),
            biasing: Vec::new(),
            coverage: None,
        })
        .collect();
    let measured = score_corpus(&inputs, MarkerPolicy::Drop, false)
        .corpus
        .wer
        .unwrap();
    assert!(
        (measured - expected).abs() <= 0.02,
        "measured {measured:.4} vs expected {expected:.4} over {} words",
        words.len()
    );
}

#[test]
fn reruns_are_byte_identical() {
    let (records, common) = fixture();
    let render = || {
        let noisy = corrupt_corpus(&records, &common, &spec(), false).unwrap();
        let mut buf = Vec::new();
        write_manifest(&noisy, &mut buf).unwrap();
        buf
    };
    let a = render();
    assert_eq!(a, render());
    let other =
        corrupt_corpus(&records, &common, &NoiseSpec { seed: 14, ..spec() }, false).unwrap();
    let mut b = Vec::new();
    write_manifest(&other, &mut b).unwrap();
    assert_ne!(a, b);
}
