mod common;

use hag::backends::{Backend, GenerationRequest};
use hag::metrics::{self_bleu, BleuOptions};
use hag::HyperparamConfig;

const DRAWS: u64 = 10_000;

/// Upper 0.1% point of chi-square via the Wilson-Hilferty approximation.
fn chi_square_critical(df: f64) -> f64 {
    let z = 3.090_232;
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}

#[test]
fn identity_config_samples_the_exact_conditional() {
    let backend = common::toy_backend();
    let model = backend.model();
    assert!(model.vocab_size() <= 100, "identity top_k must cover the vocabulary");
    let identity = HyperparamConfig::new(1.0, 1.0, 100, 1.0).unwrap();
    let prompt = "The answer is ";
    let expected = model.conditional(&model.encode(prompt));

    let mut counts = vec![0u64; model.vocab_size()];
    for seed in 0..DRAWS {
        let out = backend
            .generate(&GenerationRequest::new(prompt, identity, 1, seed))
            .unwrap();
        let ch = out.text.chars().next().unwrap();
        counts[model.token_id(ch).unwrap()] += 1;
    }

    // pool tokens with small expected counts into one bin
    let (mut stat, mut bins) = (0.0, 0usize);
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (obs, p) in counts.iter().zip(&expected) {
        let exp = p * DRAWS as f64;
        if exp < 5.0 {
            pooled_obs += *obs as f64;
            pooled_exp += exp;
        } else {
            stat += (*obs as f64 - exp).powi(2) / exp;
            bins += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    }
    let df = (bins - 1) as f64;
    assert!(stat < chi_square_critical(df), "chi-square {stat:.1} with {df} df");
}

#[test]
fn higher_temperature_gives_more_diverse_samples() {
    let backend = common::toy_backend();
    let diversity = |t: f64| {
        let config = HyperparamConfig::new(t, 1.0, 100, 1.0).unwrap();
        let samples: Vec<String> = (0..8)
            .map(|seed| {
                backend
                    .generate(&GenerationRequest::new("It is a ", config, 60, seed))
                    .unwrap()
                    .text
            })
            .collect();
        self_bleu(&samples, &BleuOptions::default()).unwrap()
    };
    let (cold, hot) = (diversity(0.1), diversity(1.9));
    assert!(hot < cold, "Self-BLEU at 1.9 ({hot}) should be below 0.1 ({cold})");
}

#[test]
fn generation_is_reproducible_across_threads() {
    let backend = common::toy_backend();
    let config = HyperparamConfig::new(1.2, 0.9, 40, 1.1).unwrap();
    let serial: Vec<String> = (0..16)
        .map(|s| {
            backend
                .generate(&GenerationRequest::new("Is ", config, 30, s))
                .unwrap()
                .text
        })
        .collect();
    let parallel: Vec<String> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..16)
            .map(|s| {
                let b = &backend;
                scope.spawn(move || b.generate(&GenerationRequest::new("Is ", config, 30, s)).unwrap().text)
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(serial, parallel);
}
