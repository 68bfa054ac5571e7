//! Snowball experiment on synthetic data.
//!
//! A threshold is tuned for best true F1 on a 100-record training set, then
//! applied to growing test sets; alongside it the threshold maximizing the
//! F1 lower bound on each test set is reported.
//!
//! Usage: `cargo run --release --example snowball [noise_sigma] [seed]`

use er_bounds::experiment::{run_snowball, SnowballConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let mut config = SnowballConfig::default();
    if let Some(s) = args.next() {
        config.noise_sigma = s.parse().expect("noise_sigma must be a number");
    }
    if let Some(s) = args.next() {
        config.seed = s.parse().expect("seed must be an integer");
    }
    let report = match run_snowball(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    };
    println!(
        "noise_sigma={} seed={} selection={} original_threshold={:.3} train_f1={:.4}",
        config.noise_sigma,
        config.seed,
        config.selection.name(),
        report.original_threshold,
        report.train_f1
    );
    println!("test_records,original_prec,original_rec,optimized_threshold,optimized_prec,optimized_rec,best_threshold,best_f1");
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_default();
    for p in &report.points {
        println!(
            "{},{:.4},{:.4},{},{},{},{},{}",
            p.test_records,
            p.original.precision,
            p.original.recall,
            fmt(p.optimized_threshold),
            fmt(p.optimized.map(|m| m.precision)),
            fmt(p.optimized.map(|m| m.recall)),
            fmt(p.best_threshold),
            fmt(p.best.map(|m| m.f1)),
        );
    }
}
