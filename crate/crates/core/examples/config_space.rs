//! The hyperparameter grid and the textual config format models emit.
//!
//!     cargo run --example config_space

use hag::space::{parse_config_text, render_config_text, ConfigSpace, TOY_DEFAULT};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let space = ConfigSpace::default();
    println!("temperature {:?}", space.temperature);
    println!("top_p       {:?}", space.top_p);
    println!("top_k       {:?}", space.top_k);
    println!("rep penalty {:?}", space.repetition_penalty);
    println!("{} configurations", space.len());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pick = space.random_config(&mut rng);
    let text = render_config_text(&pick);
    println!("\nrandom pick: {text}");

    for raw in [
        text.as_str(),
        "I'd go with {'temperature': 0.3, 'top_p': 0.8, 'top_k': 20, 'repetition_penalty': 1.1}.",
        "{'temperature': 7.5, 'top_p': 0.9, 'top_k': 500, 'repetition_penalty': 1.0}",
        "no idea, sorry",
    ] {
        let (config, status) = parse_config_text(raw, &TOY_DEFAULT);
        println!("{:<10} {}  <- {raw:?}", status.as_str(), render_config_text(&config));
    }
}
