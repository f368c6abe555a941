//! Partition function and mean demand for a few firm densities, with the
//! small-β deficit exponent and the `dD/dT = β² Var` identity.
//!
//! ```text
//! cargo run --release --example thermo_checks -- [model spec...]
//! ```

use prodstat::cli::thermo_checks;
use prodstat::thermo::{log_grid, FirmPdf, ThermoModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut specs: Vec<String> = std::env::args().skip(1).collect();
    if specs.is_empty() {
        specs = ["exp:1", "gb2:1.5,1,1,1", "gb2:2.5,2,2,1", "tail:1.3,1"]
            .map(String::from)
            .to_vec();
    }
    let grid = log_grid(1e-3, 1e3, 50);
    for spec in specs {
        let model = ThermoModel::new(spec.parse::<FirmPdf>()?)?;
        println!(
            "{spec}: μ_F = {}, ⟨c⟩_0 = {:.6}, branch {:?}",
            model.mu_f,
            model.mean0,
            model.expansion_branch()
        );
        for beta in [1e-3, 1e-1, 1.0, 10.0] {
            println!(
                "  β = {beta:<6} Z = {:.10}  D = {:.10}",
                model.partition(beta)?,
                model.demand(beta)?
            );
        }
        let report = model.check_monotonicity(&grid)?;
        let worst = report
            .points
            .iter()
            .map(|p| p.relative_error)
            .fold(0.0, f64::max);
        println!(
            "  monotone on 50 points: {} (worst identity error {worst:.2e})",
            report.pass
        );
        for c in thermo_checks(&model, &grid)? {
            println!("  {:<20} {}", c.name, if c.pass { "pass" } else { "FAIL" });
        }
    }
    Ok(())
}
