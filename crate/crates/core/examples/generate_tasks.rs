//! Writes seeded CoinFlip, Pig Latin and Spelling Bee task files.
//!
//!     cargo run --example generate_tasks -- <out-dir> [count] [seed]

use std::path::PathBuf;

use hag::tasks::{generate_instances, write_instances, Dictionary, TaskKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "generated-tasks".into()));
    let count: usize = args.next().map_or(Ok(30), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    std::fs::create_dir_all(&out)?;

    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let dictionary = Dictionary::from_file(&data.join("dictionary.txt"))?;

    for task in [TaskKind::Coinflip, TaskKind::PigLatin, TaskKind::SpellingBee] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = if task == TaskKind::SpellingBee {
            count.min(5)
        } else {
            count
        };
        let instances = generate_instances(task, n, &mut rng, Some(&dictionary))?;
        let path = out.join(format!("{}.jsonl", task.name()));
        write_instances(&path, &instances)?;
        println!("{}: {} instances -> {}", task.title(), instances.len(), path.display());
        println!("  e.g. {}", instances[0].input);
    }
    Ok(())
}
