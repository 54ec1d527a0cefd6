//! Walks one logit vector through repetition penalty, temperature, top-k,
//! softmax and nucleus filtering, then samples from the result.
//!
//!     cargo run --example decoding_pipeline

use hag::decoding::{
    apply_repetition_penalty, apply_temperature, apply_top_k, apply_top_p, sample_token, transform_pipeline,
    LogitVector,
};
use hag::HyperparamConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn show(label: &str, values: &[f64]) {
    let cells: Vec<String> = values.iter().map(|v| format!("{v:>7.3}")).collect();
    println!("{label:<22}{}", cells.join(" "));
}

fn main() -> anyhow::Result<()> {
    let logits = LogitVector::new(vec![3.0, 2.5, 1.0, 0.2, -0.5, -2.0])?;
    let context = [0, 4]; // tokens already generated
    let config = HyperparamConfig::new(0.7, 0.9, 4, 1.3)?;

    show("logits", logits.scores());
    let penalised = apply_repetition_penalty(&logits, &context, config.repetition_penalty)?;
    show("repetition penalty", penalised.scores());
    let scaled = apply_temperature(&penalised, config.temperature)?;
    show("temperature", scaled.scores());
    let kept = apply_top_k(&scaled, config.top_k as usize);
    show("top-k (-inf masked)", kept.scores());
    let probs = kept.softmax();
    show("softmax", probs.probs());
    let nucleus = apply_top_p(&probs, config.top_p)?;
    show("top-p", nucleus.probs());

    let composed = transform_pipeline(&logits, &context, &config)?;
    assert_eq!(composed.probs(), nucleus.probs());
    println!(
        "entropy {:.4} nats, support {:?}",
        composed.entropy(),
        composed.support()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut counts = vec![0; composed.vocab_size()];
    for _ in 0..10_000 {
        counts[sample_token(&composed, &mut rng)?] += 1;
    }
    println!("10k draws: {counts:?}");
    Ok(())
}
