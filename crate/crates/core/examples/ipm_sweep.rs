//! Iterative parameter mixing over simulated machines: the naive variant
//! slows down as machines are added, the improved one tolerates a large rate.
//!
//! cargo run --release --example ipm_sweep

use ffm::data::{gen_synthetic, SynthSpec};
use ffm::ipm::{sweep, write_sweep_csv, IpmConfig, IpmVariant};
use ffm::{FfmModel, ModelConfig};

fn main() -> ffm::Result<()> {
    let spec = SynthSpec { num_fields: 6, cardinality: 10, seed: 11, ..SynthSpec::default() };
    let mut train = gen_synthetic(&spec, 200_000);
    let val = train.split_off(160_000);
    let seed = FfmModel::new(ModelConfig::ffm(6, 4, 1 << 16).with_seed(5).with_init_scale(0.1))?;

    let mut configs: Vec<IpmConfig> = [1, 4, 16].iter().map(|&m| IpmConfig::new(m, IpmVariant::Naive, 0.1)).collect();
    configs.push(IpmConfig::new(16, IpmVariant::Naive, 1.0));
    configs.push(IpmConfig::new(16, IpmVariant::Improved, 1.0));

    let rows = sweep(&configs, &seed, &train, &val)?;
    write_sweep_csv(&rows, std::io::stdout())?;
    Ok(())
}
