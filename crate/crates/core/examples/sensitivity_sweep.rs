//! Output diversity (Self-BLEU) as each decoding axis varies on the toy model.
//!
//!     cargo run --release --example sensitivity_sweep

use std::path::PathBuf;

use hag::backends::{Backend, ToyBackend, ToyModel};
use hag::metrics::BleuOptions;
use hag::report::{render_sensitivity_csv, sensitivity_sweep, sweep_values, SENSITIVITY_POINTS};
use hag::runner::{ModelFamily, PromptTemplate, ResponseSettings};
use hag::space::Axis;
use hag::tasks::{load_instances, TaskKind};

fn main() -> anyhow::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let backend = ToyBackend::new(ToyModel::train(
        &std::fs::read_to_string(data.join("corpus.txt"))?,
        4,
        0.1,
    )?);
    let probe: Vec<_> = load_instances(&data.join("tasks/coinflip.jsonl"), Some(TaskKind::Coinflip))?
        .into_iter()
        .take(5)
        .collect();
    let settings = ResponseSettings::new(PromptTemplate::builtin(ModelFamily::Plain, 2), 10, 64, 0);
    for axis in Axis::ALL {
        let values = sweep_values(axis, SENSITIVITY_POINTS);
        let rows = sensitivity_sweep(
            &backend,
            &probe,
            axis,
            &values,
            backend.default_config(),
            &settings,
            &BleuOptions::default(),
        )?;
        print!("{}", render_sensitivity_csv(&rows));
    }
    Ok(())
}
