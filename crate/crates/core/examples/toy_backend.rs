//! Trains the character n-gram model on the bundled corpus and samples from
//! it at several temperatures.
//!
//!     cargo run --example toy_backend [corpus.txt]

use std::path::PathBuf;

use hag::backends::{Backend, GenerationRequest, ToyBackend, ToyModel};
use hag::HyperparamConfig;

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/corpus.txt"));
    let model = ToyModel::train(&std::fs::read_to_string(&path)?, 4, 0.1)?;
    println!(
        "order {} model, {} characters in the vocabulary",
        model.order(),
        model.vocab_size()
    );

    let backend = ToyBackend::new(model);
    println!("default config {}", backend.default_config());
    for t in [0.1, 0.6, 1.2, 1.9] {
        let config = HyperparamConfig::new(t, 1.0, 100, 1.0)?;
        for seed in 0..2 {
            let out = backend.generate(&GenerationRequest::new("The coin is ", config, 48, seed))?;
            println!("T={t:<4} seed {seed}: {:?}", out.text);
        }
    }
    Ok(())
}
