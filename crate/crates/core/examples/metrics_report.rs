//! Log loss, normalized log loss and Utility with bootstrap intervals for a
//! trained model and for the constant base-rate predictor.
//!
//! cargo run --release --example metrics_report

use ffm::data::{gen_synthetic, SynthSpec};
use ffm::metrics::{metric_report, score_examples, BootstrapConfig, EvalRecord, ReportOptions};
use ffm::{train, FfmModel, ModelConfig, TrainOptions};

fn main() -> ffm::Result<()> {
    let spec = SynthSpec { seed: 3, ..SynthSpec::default() };
    let mut train_set = gen_synthetic(&spec, 50_000);
    let mut val = train_set.split_off(35_000);
    let test = val.split_off(7_500);

    let config = ModelConfig::ffm(8, 4, 1 << 16).with_learning_rate(0.1).with_init_scale(0.1);
    let model = train(FfmModel::new(config)?, &train_set, &val, &TrainOptions::default())?.mature_model;

    let opts = ReportOptions {
        bootstrap: Some(BootstrapConfig { resamples: 500, ..BootstrapConfig::default() }),
        ..ReportOptions::default()
    };
    let scored = score_examples(&model, &test)?;
    println!("model:\n{}", serde_json::to_string_pretty(&metric_report(&scored, &opts)?)?);

    let pbar = test.iter().map(|x| x.target()).sum::<f64>() / test.len() as f64;
    let constant: Vec<EvalRecord> = test.iter().map(|x| EvalRecord::from_example(pbar, x)).collect();
    println!("constant {pbar:.4}:\n{}", serde_json::to_string_pretty(&metric_report(&constant, &opts)?)?);
    Ok(())
}
