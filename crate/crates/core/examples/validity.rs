//! Coverage of the bound intervals over seeded synthetic pipelines.
//!
//! Usage: `cargo run --release --example validity [trials] [noise_sigma]`

use er_bounds::experiment::{run_synthetic_trial, TrialConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let trials: u64 = args.next().map(|s| s.parse().expect("trials must be an integer")).unwrap_or(50);
    let mut config = TrialConfig::default();
    if let Some(s) = args.next() {
        config.synthetic.noise_sigma = s.parse().expect("noise_sigma must be a number");
    }
    let (mut evaluations, mut suppressed, mut prec_ok, mut rec_ok) = (0, 0, 0, 0);
    let start = std::time::Instant::now();
    for seed in 0..trials {
        let outcome = run_synthetic_trial(&config.with_seed(seed)).expect("trial runs");
        for row in &outcome.rows {
            evaluations += 1;
            let (Some(report), Some(truth)) = (&row.report, &row.truth) else {
                suppressed += 1;
                continue;
            };
            prec_ok += usize::from(truth.precision >= report.ci.precision.low);
            rec_ok += usize::from(truth.recall >= report.ci.recall.low);
        }
        if seed == 0 {
            let v = outcome.rows[outcome.rows.len() / 2].validation.unwrap();
            println!("seed 0: {} test records, mid-grid validation precision {:?} recall {}", outcome.test_records, v.precision(), v.recall());
        }
    }
    println!(
        "noise_sigma={}: {trials} trials, {evaluations} evaluations ({suppressed} without bounds): precision covered {:.3}, recall covered {:.3}, {:.1?}",
        config.synthetic.noise_sigma,
        prec_ok as f64 / evaluations as f64,
        rec_ok as f64 / evaluations as f64,
        start.elapsed()
    );
}
