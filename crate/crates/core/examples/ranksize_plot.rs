//! Writes rank-size data for firms and workers from a simulated population,
//! plus the GB2 ccdf fitted to the firms.
//!
//! ```text
//! cargo run --release --example ranksize_plot -- [out_dir]
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use prodstat::gb2::{fit_mle, FitOptions, Gb2Params};
use prodstat::ingest::write_ranksize_tsv;
use prodstat::ranksize::{loglog_slope, ranksize};
use prodstat::simulate::{run_sim, SimConfig};
use prodstat::superstat::BetaWeight;
use prodstat::thermo::log_grid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&dir)?;
    let sim = run_sim(&SimConfig {
        n_firms: 20_000,
        n_workers_per_epoch: 10_000,
        n_epochs: 200,
        firm_params: Gb2Params::new(2.0, 3.0, 3.0, 1.0)?,
        beta_weight: BetaWeight::new(0.5, 1e-5, 10.0)?,
        seed: 5,
    })?;
    let c = &sim.firm_productivities;
    let n: Vec<f64> = sim.worker_counts.iter().map(|&k| k as f64).collect();
    let firms = ranksize(c, None);
    let workers = ranksize(c, Some(&n));
    write_ranksize_tsv(&firms, BufWriter::new(File::create(dir.join("firms.tsv"))?))?;
    write_ranksize_tsv(
        &workers,
        BufWriter::new(File::create(dir.join("workers.tsv"))?),
    )?;
    println!(
        "firm slope   {:.3}",
        loglog_slope(&firms, 0.01).unwrap_or(f64::NAN)
    );
    println!(
        "worker slope {:.3}",
        loglog_slope(&workers, 0.01).unwrap_or(f64::NAN)
    );

    let fit = fit_mle(
        &sim.firm_observations(),
        &FitOptions {
            bootstrap_replicates: 0,
            ..FitOptions::default()
        },
    )?;
    let mut out = BufWriter::new(File::create(dir.join("firms.fit.tsv"))?);
    writeln!(out, "c\tccdf")?;
    for x in log_grid(firms.last().unwrap().c, firms[0].c, 200) {
        writeln!(out, "{x:e}\t{:e}", fit.params.ccdf(x))?;
    }
    println!(
        "fitted μ_F {:.3}; files in {}",
        fit.params.mu(),
        dir.display()
    );
    Ok(())
}
