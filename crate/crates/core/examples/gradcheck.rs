//! Analytic against finite-difference gradients for every trainable head.

use namegate::selfcheck::gradient_suite;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds: Vec<u64> = (0..5).collect();
    let report = gradient_suite(&seeds)?;
    for c in &report.checks {
        println!(
            "{:<10} seed {} {:<8} {:.2e}",
            c.model, c.seed, c.param, c.max_rel_error
        );
    }
    println!(
        "worst {:.2e} (tolerance {:.0e})",
        report.max_error(),
        report.tolerance
    );
    Ok(())
}
