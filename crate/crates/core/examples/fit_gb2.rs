//! Draws a GB2 sample and recovers its parameters by maximum likelihood.
//!
//! ```text
//! cargo run --release --example fit_gb2 -- [mu] [nu] [q] [c1] [n]
//! ```

use prodstat::gb2::{fit_mle, FitOptions, Gb2Params, Observation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let arg = |i: usize, d: f64| args.get(i).copied().unwrap_or(d);
    let truth = Gb2Params::new(arg(0, 2.0), arg(1, 1.5), arg(2, 1.5), arg(3, 3.0))?;
    let n = arg(4, 50_000.0) as usize;

    let data: Vec<Observation> = truth
        .sample(n, 7)
        .into_iter()
        .map(Observation::unweighted)
        .collect();
    let fit = fit_mle(&data, &FitOptions::default())?;
    let p = &fit.params;
    println!(
        "true    μ={:.4} ν={:.4} q={:.4} c1={:.4}",
        truth.mu(),
        truth.nu(),
        truth.q(),
        truth.c1()
    );
    println!(
        "fitted  μ={:.4} ν={:.4} q={:.4} c1={:.4}",
        p.mu(),
        p.nu(),
        p.q(),
        p.c1()
    );
    println!(
        "μ stderr {:.4} from {} bootstrap replicates",
        fit.mu_stderr, fit.bootstrap_replicates
    );
    println!(
        "|μ̂ - μ| / se = {:.2}",
        (p.mu() - truth.mu()).abs() / fit.mu_stderr
    );
    Ok(())
}
