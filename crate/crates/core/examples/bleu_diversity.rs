//! Sentence BLEU and Self-BLEU on small, readable inputs.
//!
//!     cargo run --example bleu_diversity

use hag::metrics::{bleu, mean_and_variance, self_bleu, BleuOptions};

fn main() -> anyhow::Result<()> {
    let opts = BleuOptions::default();
    for (candidate, reference) in [
        ("the cat sat on the mat", "the cat sat on the mat"),
        ("the cat sat", "the cat sat down"),
        ("a cat sat on a mat", "the cat sat on the mat"),
        ("a b c", "d e f"),
    ] {
        println!(
            "BLEU {:.4}  {candidate:?} vs {reference:?}",
            bleu(candidate, &[reference], &opts)?
        );
    }

    let repetitive = [
        "the coin is heads up",
        "the coin is heads up",
        "the coin is still heads up",
    ];
    let varied = ["the coin is heads up", "nobody flipped it", "tails, I suspect"];
    let a = self_bleu(&repetitive, &opts)?;
    let b = self_bleu(&varied, &opts)?;
    println!("\nSelf-BLEU repetitive {a:.4}, varied {b:.4} (lower is more diverse)");
    let (m, v) = mean_and_variance(&[a, b])?;
    println!("mean {m:.4}, variance {v:.4}");
    Ok(())
}
