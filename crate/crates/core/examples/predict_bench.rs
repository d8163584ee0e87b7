//! Prediction cost against the number of latent factors.
//!
//! cargo run --release --example predict_bench

use ffm::cli::{bench_prediction, linear_fit};

fn main() -> ffm::Result<()> {
    let ks = [1, 2, 4, 8, 16];
    let rows = bench_prediction(&ks, 8, 4096, 20_000, 5)?;
    for r in &rows {
        println!("k={:<3} {:>8.1} ns/prediction", r.k, r.ns_per_prediction);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.ns_per_prediction).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    println!("{slope:.2} ns per latent factor + {intercept:.1} ns (R^2 {r2:.4})");
    Ok(())
}
