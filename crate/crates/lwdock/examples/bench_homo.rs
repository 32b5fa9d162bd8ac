//! Run the homogeneous benchmark scenario for one seed and print the loss of
//! each method at each labeled-data budget.
//!
//!     cargo run --release --example bench_homo -- [seed]

use lwdock::core::bench::{self, Scenario, ScenarioKind};

fn main() -> lwdock::core::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let dir = tempfile::tempdir()?;
    let report = bench::run(&Scenario::new(ScenarioKind::HomoTable, seed), dir.path())?;

    let methods = [
        bench::MEAN_IN_MARKET,
        bench::BEST_IN_MARKET,
        bench::TOP1,
        bench::JOB_SELECTOR,
        bench::AVERAGE_ENSEMBLE,
        bench::ENSEMBLE_PRUNING,
        bench::FEATURE_AUGMENT,
        bench::SCRATCH,
    ];
    let budgets = [0, 10, 20, 50, 100, 200];
    print!("{:<16}", "method");
    for b in budgets {
        print!("{b:>8}");
    }
    println!();
    for m in methods {
        print!("{m:<16}");
        for b in budgets {
            match report.mean(m, b) {
                Some(v) => print!("{v:>8.3}"),
                None => print!("{:>8}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
