//! FFM against logistic regression with all pairwise cross features, both
//! holding the same number of parameters.
//!
//! cargo run --release --example ffm_vs_lr

use ffm::data::{gen_synthetic, SynthSpec};
use ffm::metrics::{bootstrap_ci, nll, score_examples, BootstrapConfig};
use ffm::{train, FfmModel, ModelConfig, TrainOptions};

fn main() -> ffm::Result<()> {
    let spec = SynthSpec { seed: 31, ..SynthSpec::default() };
    let mut train_set = gen_synthetic(&spec, 200_000);
    let mut val = train_set.split_off(140_000);
    let test = val.split_off(30_000);

    let d = 1 << 16;
    let configs = [
        ModelConfig::ffm(spec.num_fields, 4, d).with_init_scale(0.1),
        ModelConfig::lr_cross(spec.num_fields, d * 4),
    ];
    for config in configs {
        let params = config.num_params();
        let model = FfmModel::new(config.with_learning_rate(0.1).with_seed(2))?;
        let report = train(model, &train_set, &val, &TrainOptions::default())?;
        let records = score_examples(&report.mature_model, &test)?;
        let (lo, hi) = bootstrap_ci(&records, nll, &BootstrapConfig::default())?;
        println!(
            "{:<9} params={params} epochs={:>2} test NLL {:.4}  90% CI [{lo:.4}, {hi:.4}]",
            format!("{:?}", report.mature_model.config().kind),
            report.stop_epoch,
            nll(&records)?,
        );
    }
    Ok(())
}
