use ffm::data::{gen_synthetic, rolling_steps, BlockedDataset, RollingWindow, SynthSpec};
use ffm::ipm::{ipm_train, sweep, IpmConfig, IpmVariant};
use ffm::metrics::BootstrapConfig;
use ffm::warm_start::{compare_reports, run_rolling, run_rolling_with, save_comparison, train_step, compare_plans, RollingPlan, Seeding};
use ffm::{FfmModel, ModelConfig};

fn ipm_data() -> (Vec<ffm::FeatureVector>, Vec<ffm::FeatureVector>, FfmModel) {
    let spec = SynthSpec { num_fields: 6, cardinality: 10, seed: 11, ..SynthSpec::default() };
    let mut train = gen_synthetic(&spec, 40_000);
    let val = train.split_off(32_000);
    let seed = FfmModel::new(ModelConfig::ffm(6, 4, 1 << 16).with_seed(5).with_init_scale(0.1)).unwrap();
    (train, val, seed)
}

fn blocks(drift: f64, seed: u64) -> BlockedDataset {
    let spec = SynthSpec { num_fields: 8, cardinality: 300, n_blocks: 24, drift, seed, ..SynthSpec::default() };
    BlockedDataset::split_blocks(gen_synthetic(&spec, 24_000), 24, 8).unwrap()
}

fn config() -> ModelConfig {
    ModelConfig::ffm(8, 4, 1 << 16).with_seed(5).with_init_scale(0.1).with_learning_rate(0.05)
}

const WINDOW: RollingWindow = RollingWindow { train_blocks: 12, val_blocks: 1, test_blocks: 1, step: 1 };

#[test]
fn more_machines_need_more_epochs() {
    let (train, val, seed) = ipm_data();
    let configs: Vec<_> = [1, 2, 4].map(|m| IpmConfig::new(m, IpmVariant::Naive, 0.1)).into();
    let rows = sweep(&configs, &seed, &train, &val).unwrap();
    let epochs: Vec<usize> = rows.iter().map(|r| r.epochs_to_best).collect();
    assert!(epochs.windows(2).all(|w| w[0] <= w[1]), "{epochs:?}");
    assert_eq!(rows[0].speedup_vs_single, Some(1.0));
}

#[test]
fn naive_large_rate_is_faster_but_not_better() {
    let (train, val, seed) = ipm_data();
    let configs = [IpmConfig::new(8, IpmVariant::Naive, 0.2), IpmConfig::new(8, IpmVariant::Naive, 3.0)];
    let rows = sweep(&configs, &seed, &train, &val).unwrap();
    assert!(rows[1].epochs_to_best < rows[0].epochs_to_best, "{rows:?}");
    assert!(rows[1].best_logloss >= rows[0].best_logloss, "{rows:?}");
}

#[test]
fn single_row_sweep_is_ipm_train() {
    let (train, val, seed) = ipm_data();
    let config = IpmConfig::new(3, IpmVariant::Improved, 0.5).with_max_epochs(4);
    let rows = sweep(std::slice::from_ref(&config), &seed, &train, &val).unwrap();
    let direct = ipm_train(&config, seed, &train, &val).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].epochs_to_best, direct.train.epochs_to_best());
    assert_eq!(rows[0].best_logloss, direct.train.best_val_loss());
}

#[test]
fn premature_without_drift_saves_epochs_every_step() {
    let blocked = blocks(0.0, 21);
    let cold = run_rolling(&RollingPlan::new(WINDOW, Seeding::Cold), &blocked, &config()).unwrap();
    let warm = run_rolling(&RollingPlan::new(WINDOW, Seeding::Premature), &blocked, &config()).unwrap();
    for (c, w) in cold.steps.iter().zip(&warm.steps).skip(1) {
        assert!(w.epochs < c.epochs, "step {}: {} vs {}", c.step, w.epochs, c.epochs);
    }
}

#[test]
fn seeds_follow_the_snapshot_lineage() {
    let blocked = blocks(0.05, 21);
    for (seeding, premature) in [(Seeding::Premature, true), (Seeding::Naive, false)] {
        let mut seeds = Vec::new();
        let mut carried = Vec::new();
        let plan = RollingPlan::new(WINDOW, seeding).with_train_size(3);
        run_rolling_with(&plan, &blocked, &config(), |s| {
            seeds.push(s.seed.to_bytes());
            let next = if premature { &s.report.premature_model } else { &s.report.mature_model };
            carried.push(next.to_bytes());
        })
        .unwrap();
        for t in 1..seeds.len() {
            assert_eq!(seeds[t], carried[t - 1], "{seeding:?} step {t}");
        }
    }
}

#[test]
fn first_step_is_cold_for_every_plan() {
    let blocked = blocks(0.05, 22);
    let plans = [
        RollingPlan::new(WINDOW, Seeding::Cold),
        RollingPlan::new(WINDOW, Seeding::Naive),
        RollingPlan::new(WINDOW, Seeding::Premature).with_train_size(4),
        RollingPlan::online(WINDOW),
    ];
    let firsts: Vec<_> = plans
        .iter()
        .map(|p| run_rolling(&p.with_max_epochs(50), &blocked, &config()).unwrap().steps[0].clone())
        .collect();
    for f in &firsts[1..] {
        assert_eq!(f.test_ll, firsts[0].test_ll);
        assert_eq!(f.epochs, firsts[0].epochs);
        assert_eq!(f.train_blocks, 12);
    }
}

#[test]
fn totals_and_cold_independence() {
    let blocked = blocks(0.05, 23);
    let plan = RollingPlan::new(WINDOW, Seeding::Cold);
    let report = run_rolling(&plan, &blocked, &config()).unwrap();
    assert_eq!(report.steps.len(), rolling_steps(24, WINDOW).unwrap().len());
    assert_eq!(report.total_epochs(), report.steps.iter().map(|s| s.epochs).sum::<usize>());
    // steps in reverse order, each on its own
    let steps = rolling_steps(24, WINDOW).unwrap();
    for step in steps.iter().rev() {
        let (record, _, _) = train_step(&plan, &blocked, &config(), step, None).unwrap();
        assert_eq!(record.test_ll, report.steps[step.index].test_ll);
        assert_eq!(record.epochs, report.steps[step.index].epochs);
    }
}

#[test]
fn identical_plan_has_zero_delta_and_writes_csvs() {
    let blocked = blocks(0.05, 21);
    let cold = RollingPlan::new(WINDOW, Seeding::Cold).with_max_epochs(3);
    let cmp = compare_plans(&cold, &[cold], &blocked, &config()).unwrap();
    assert!(cmp.deltas[0].deltas.iter().all(|&d| d == 0.0));
    assert_eq!(cmp.deltas[0].mean, 0.0);
    let dir = tempfile::tempdir().unwrap();
    save_comparison(&cmp, dir.path()).unwrap();
    let rolling = std::fs::read_to_string(dir.path().join("rolling_report.csv")).unwrap();
    assert!(rolling.starts_with("step,seeding,train_blocks,test_ll,test_nll,epochs,seconds\n"));
    let delta = std::fs::read_to_string(dir.path().join("delta_vs_baseline.csv")).unwrap();
    assert!(delta.starts_with("step,plan,test_ll,baseline_ll,delta_ll\n"));
}

#[test]
fn online_beats_cold_on_most_steps() {
    let blocked = blocks(0.05, 21);
    let cold = run_rolling(&RollingPlan::new(WINDOW, Seeding::Cold), &blocked, &config()).unwrap();
    let online = run_rolling(&RollingPlan::online(WINDOW), &blocked, &config()).unwrap();
    assert!(online.steps[1..].iter().all(|s| s.train_blocks == 1));
    let deltas = compare_reports(&cold, &[online], &BootstrapConfig::default()).unwrap();
    let wins = deltas[0].deltas.iter().skip(1).filter(|&&d| d < 0.0).count();
    assert!(2 * wins > deltas[0].deltas.len() - 1, "online wins {wins}");
}

#[test]
fn time_per_epoch_tracks_training_size() {
    let blocked = blocks(0.05, 21);
    let full = run_rolling(&RollingPlan::new(WINDOW, Seeding::Premature), &blocked, &config()).unwrap();
    let small = run_rolling(&RollingPlan::new(WINDOW, Seeding::Premature).with_train_size(4), &blocked, &config()).unwrap();
    // skip the first step, which trains on the whole window for both
    let per_epoch = |r: &ffm::warm_start::RollingReport| {
        let s = &r.steps[1..];
        s.iter().map(|x| x.seconds).sum::<f64>() / s.iter().map(|x| x.epochs).sum::<usize>() as f64
    };
    let ratio = per_epoch(&small) / per_epoch(&full);
    let blocks_ratio = 4.0 / 12.0;
    assert!(ratio >= blocks_ratio / 2.0 && ratio <= blocks_ratio * 2.0, "ratio {ratio}");
}
