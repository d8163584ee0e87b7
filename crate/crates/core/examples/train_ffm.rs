//! Train an FFM on planted synthetic data and look at the early-stopping run.
//!
//! cargo run --release --example train_ffm

use ffm::data::{gen_synthetic, SynthSpec};
use ffm::{train, FfmModel, ModelConfig, TrainOptions};

fn main() -> ffm::Result<()> {
    let spec = SynthSpec { seed: 7, ..SynthSpec::default() };
    let mut data = gen_synthetic(&spec, 60_000);
    let val = data.split_off(48_000);

    let config = ModelConfig::ffm(spec.num_fields, 4, 1 << 16)
        .with_learning_rate(0.1)
        .with_init_scale(0.1)
        .with_seed(1);
    let report = train(FfmModel::new(config)?, &data, &val, &TrainOptions::default())?;

    println!("epoch  train_ll  val_ll");
    for e in &report.epochs {
        println!("{:>5}  {:.5}   {:.5}", e.epoch, e.train_loss, e.val_loss);
    }
    println!(
        "stopped at epoch {} ({}); mature model from epoch {}, premature from epoch {}",
        report.stop_epoch,
        if report.stopped_early { "validation loss went up" } else { "epoch cap" },
        report.mature_model.trained_epochs(),
        report.premature_model.trained_epochs(),
    );
    Ok(())
}
