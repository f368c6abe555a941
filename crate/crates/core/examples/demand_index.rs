//! Pareto indices to demand index: `γ`, `δ` and `κ` over a few cells,
//! including the negative-temperature case.

use prodstat::superstat::{kappa_from_mus, mu_w_predicted, ParetoIndices};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!(
        "{:>6} {:>6} {:>8} {:>8} {:>8}  regime",
        "μ_F", "μ_W", "γ", "δ", "κ"
    );
    for (mu_f, mu_w) in [
        (2.2, 2.7),
        (2.5, 3.0),
        (1.5, 2.0),
        (1.3, 1.9),
        (2.0, 2.4),
        (2.4, 2.1),
    ] {
        let mut cell = ParetoIndices::exact(mu_f, mu_w);
        cell.mu_f_stderr = 0.05;
        cell.mu_w_stderr = 0.05;
        let p = kappa_from_mus(&cell)?;
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{mu_f:>6.2} {mu_w:>6.2} {:>8.4} {:>8} {:>8}  {:?}",
            p.gamma,
            show(p.delta),
            show(p.kappa),
            p.regime
        );
        if let Some(d) = p.delta {
            assert!((mu_w_predicted(mu_f, d)? - mu_w).abs() < 1e-12);
        }
    }
    Ok(())
}
