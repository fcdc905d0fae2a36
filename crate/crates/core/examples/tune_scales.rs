//! Grid search for the per-level confidence scalings of the multiresolution
//! filter: every λ_i ∈ {0.1, 1, 10}, minimizing the time-averaged L²
//! discrepancy of the default twin experiment on one seed.
//!
//! `cargo run --release -p mrenkf-core --example tune_scales [seed]`

use mrenkf::experiment::{run_twin_experiment, FilterKind, TwinExperimentConfig};

const GRID: [f64; 3] = [0.1, 1.0, 10.0];

fn main() {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let base = TwinExperimentConfig {
        filter: FilterKind::Mrenkf,
        seed,
        ..TwinExperimentConfig::default()
    };
    let levels = base.mrenkf.scales.len();
    let enkf = run_twin_experiment(&TwinExperimentConfig {
        filter: FilterKind::Enkf,
        ..base.clone()
    })
    .expect("EnKF run");
    println!(
        "enkf l2 {:.4} chi2 {:.1}",
        enkf.metrics.time_averaged_l2(),
        enkf.metrics.rank_chi_square()
    );

    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..GRID.len().pow(levels as u32) {
        let lambdas: Vec<f64> = (0..levels)
            .map(|i| GRID[(code / GRID.len().pow(i as u32)) % GRID.len()])
            .collect();
        let mut cfg = base.clone();
        for (s, &l) in cfg.mrenkf.scales.iter_mut().zip(&lambdas) {
            s.lambda = l;
        }
        match run_twin_experiment(&cfg) {
            Ok(run) => {
                let l2 = run.metrics.time_averaged_l2();
                println!(
                    "{lambdas:?} l2 {l2:.4} chi2 {:.1}",
                    run.metrics.rank_chi_square()
                );
                if best.as_ref().is_none_or(|(b, _)| l2 < *b) {
                    best = Some((l2, lambdas));
                }
            }
            Err(e) => println!("{lambdas:?} failed: {e}"),
        }
    }
    if let Some((l2, lambdas)) = best {
        println!("best {lambdas:?} l2 {l2:.4}");
    }
}
