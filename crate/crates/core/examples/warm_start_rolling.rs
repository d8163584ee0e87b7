//! Rolling re-training on drifting blocks with cold, naive and pre-mature
//! seeding, reported as test log-loss differences against the cold baseline.
//!
//! cargo run --release --example warm_start_rolling

use ffm::data::{gen_synthetic, BlockedDataset, RollingWindow, SynthSpec};
use ffm::warm_start::{compare_plans, RollingPlan, Seeding};
use ffm::ModelConfig;

fn main() -> ffm::Result<()> {
    let spec = SynthSpec { num_fields: 8, cardinality: 300, n_blocks: 40, drift: 0.05, seed: 21, ..SynthSpec::default() };
    let blocked = BlockedDataset::split_blocks(gen_synthetic(&spec, 40_000), 40, 8)?;
    let config = ModelConfig::ffm(8, 4, 1 << 16).with_seed(5).with_init_scale(0.1).with_learning_rate(0.05);

    let window = RollingWindow::new(20);
    let baseline = RollingPlan::new(window, Seeding::Cold);
    let plans = [
        RollingPlan::new(window, Seeding::Naive),
        RollingPlan::new(window, Seeding::Premature),
        RollingPlan::new(window, Seeding::Premature).with_train_size(4),
        RollingPlan::online(window),
    ];
    let cmp = compare_plans(&baseline, &plans, &blocked, &config)?;

    println!("{:<14} {:>7} {:>10} {:>12}", "plan", "epochs", "seconds", "mean delta");
    println!("{:<14} {:>7} {:>10.2} {:>12}", baseline.label(), cmp.baseline.total_epochs(), cmp.baseline.total_seconds(), "-");
    for (report, delta) in cmp.reports.iter().zip(&cmp.deltas) {
        println!(
            "{:<14} {:>7} {:>10.2} {:>+12.5}",
            delta.plan,
            report.total_epochs(),
            report.total_seconds(),
            delta.mean
        );
    }
    Ok(())
}
