//! Runs DAOD and the OSNN baseline on the synthetic benchmark over several
//! seeds with default hyperparameters and prints Acc(OS) for both.
//!
//! ```text
//! cargo run --release -p daod-core --example benchmark -- [seeds]
//! ```

use daod_core::data::{generate_synthetic, SyntheticConfig};
use daod_core::eval::open_set_metrics;
use daod_core::pseudolabel::label_targets;
use daod_core::{daod_fit, Hyperparams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds: u64 = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => 10,
    };
    let hp = Hyperparams::default();
    let mut cfg = SyntheticConfig::default();
    let (mut sum_daod, mut sum_osnn) = (0.0, 0.0);
    for seed in 0..seeds {
        cfg.seed = seed;
        let (source, target) = generate_synthetic(&cfg)?;
        let truth = target.ground_truth().expect("synthetic targets carry ground truth");
        let t0 = std::time::Instant::now();
        let report = daod_fit(&source, target.unlabeled(), &hp)?;
        let elapsed = t0.elapsed().as_secs_f64();
        let daod = open_set_metrics(&report.predictions, truth)?;
        let osnn = open_set_metrics(&label_targets(target.unlabeled(), &source, hp.threshold())?, truth)?;
        let last = report.iterations.last().map_or(0, |r| r.changed);
        println!(
            "seed {seed:2}: daod {:.4} (os* {:.4})  osnn {:.4} (os* {:.4})  last change {last}  {elapsed:.2}s",
            daod.acc_os,
            daod.acc_os_star.unwrap_or(f64::NAN),
            osnn.acc_os,
            osnn.acc_os_star.unwrap_or(f64::NAN),
        );
        sum_daod += daod.acc_os;
        sum_osnn += osnn.acc_os;
    }
    let n = seeds.max(1) as f64;
    println!("mean: daod {:.4}  osnn {:.4}", sum_daod / n, sum_osnn / n);
    Ok(())
}
