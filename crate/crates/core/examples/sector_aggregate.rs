//! Aggregates a 26-sector synthetic panel to sector productivities and
//! reads the tail off their rank-size plot.

use prodstat::ingest::{build_samples, sector_aggregate, FilterConfig};
use prodstat::ranksize::{loglog_slope, ranksize};
use prodstat::synth::SectorPanel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let panel = SectorPanel::default();
    let built = build_samples(&panel.records(), &FilterConfig::default());
    let sectors = sector_aggregate(&built.samples, panel.year)?;
    for s in &sectors {
        println!(
            "sector {:>2}  c = {:>9.3}  firms {:>3}  workers {:>8.0}",
            s.sector_code, s.productivity, s.n_firms, s.workers
        );
    }
    let values: Vec<f64> = sectors.iter().map(|s| s.productivity).collect();
    let slope = loglog_slope(&ranksize(&values, None), 1.0).ok_or("degenerate slope")?;
    println!(
        "rank-size slope {slope:.3} (a μ = {} tail gives {:.3})",
        panel.tail_index,
        -1.0 / panel.tail_index
    );
    Ok(())
}
