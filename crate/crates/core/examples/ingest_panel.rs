//! Writes synthetic firm panels as CSV, reads them back and prints the
//! exclusion ledger.
//!
//! ```text
//! cargo run --release --example ingest_panel -- [out_dir]
//! ```
//!
//! Produces `manufacturing.csv` (μ_F = 2.2, μ_W = 2.7) and
//! `nonmanufacturing.csv` (μ_F = 2.4, μ_W = 2.1), both for 2001..2005.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use prodstat::ingest::{build_samples, load_csv, write_csv, FilterConfig, SCHEMA_VERSION};
use prodstat::superstat::SectorClass;
use prodstat::synth::TiltedPanel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&dir)?;
    let panels = [
        ("manufacturing.csv", 2.2, 2.7, SectorClass::Manufacturing),
        (
            "nonmanufacturing.csv",
            2.4,
            2.1,
            SectorClass::Nonmanufacturing,
        ),
    ];
    for (i, (name, mu_f, mu_w, class)) in panels.into_iter().enumerate() {
        let path = dir.join(name);
        let panel =
            TiltedPanel::with_indices(mu_f, mu_w, 5_000, (2001, 2005), class, i as u64 + 1)?;
        write_csv(&panel.records(), BufWriter::new(File::create(&path)?))?;

        let loaded = load_csv(&path, SCHEMA_VERSION)?;
        let filters = FilterConfig {
            max_productivity: Some(1e4),
            ..FilterConfig::default()
        };
        let built = build_samples(&loaded.records, &filters);
        println!(
            "{}: {} records, {} samples",
            path.display(),
            loaded.records.len(),
            built.samples.len()
        );
        for (reason, n) in &built.ledger.counts {
            println!("  excluded {n:>6}  {}", reason.describe());
        }
        if let Some(top) = built.ledger.top_values.first() {
            println!(
                "  largest retained c = {:.1} ({} in {})",
                top.c, top.firm_id, top.year
            );
        }
    }
    Ok(())
}
