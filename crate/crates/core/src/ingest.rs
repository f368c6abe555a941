//! Firm panel ingestion and productivity construction.
//!
//! Input CSV (UTF-8, header required):
//!
//! ```text
//! firm_id,year,sector_code,sector_class,value_added,workers_eoy
//! ```
//!
//! Productivity is `c = Y / L̄` with `L̄` the mean of this year's and last
//! year's end-of-year head count. Every record that does not become a sample
//! is counted in the exclusion ledger under one reason.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ranksize::{ranksize, RankPoint};
use crate::superstat::SectorClass;

pub const SCHEMA_VERSION: u32 = 1;
pub const COLUMNS: [&str; 6] = [
    "firm_id",
    "year",
    "sector_code",
    "sector_class",
    "value_added",
    "workers_eoy",
];
/// Fraction of malformed rows above which loading fails.
pub const MAX_BAD_ROW_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unsupported schema version {0}; supported: {SCHEMA_VERSION}")]
    UnsupportedSchema(u32),
    #[error("schema error: missing column {0:?}")]
    Schema(String),
    #[error(
        "too many bad rows: {bad} of {total} (limit 1%); first: line {first_line}: {first_reason}"
    )]
    TooManyBadRows {
        bad: usize,
        total: usize,
        first_line: u64,
        first_reason: String,
    },
    #[error("no samples for year {0}")]
    EmptyYear(i32),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmRecord {
    pub firm_id: String,
    pub year: i32,
    pub sector_code: u32,
    pub sector_class: SectorClass,
    pub value_added: f64,
    pub workers_eoy: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub records: Vec<FirmRecord>,
    /// Malformed rows; these count toward the 1% limit.
    pub malformed: Vec<RowError>,
    /// Well-formed rows excluded at load time (zero workers).
    pub excluded: Vec<RowError>,
}

#[derive(Deserialize)]
struct RawRow {
    firm_id: String,
    year: String,
    sector_code: String,
    sector_class: String,
    value_added: String,
    workers_eoy: String,
}

fn parse_row(raw: RawRow) -> Result<FirmRecord, String> {
    let field = |name: &str, v: &str| format!("bad {name} {v:?}");
    let firm_id = raw.firm_id.trim().to_string();
    if firm_id.is_empty() {
        return Err("empty firm_id".into());
    }
    let year = raw
        .year
        .trim()
        .parse()
        .map_err(|_| field("year", &raw.year))?;
    let sector_code: u32 = raw
        .sector_code
        .trim()
        .parse()
        .map_err(|_| field("sector_code", &raw.sector_code))?;
    let sector_class = match raw.sector_class.parse::<SectorClass>() {
        Ok(SectorClass::All) | Err(_) => return Err(field("sector_class", &raw.sector_class)),
        Ok(c) => c,
    };
    let value_added: f64 = raw
        .value_added
        .trim()
        .parse()
        .map_err(|_| field("value_added", &raw.value_added))?;
    if !value_added.is_finite() {
        return Err(field("value_added", &raw.value_added));
    }
    let workers_eoy = raw
        .workers_eoy
        .trim()
        .parse()
        .map_err(|_| field("workers_eoy", &raw.workers_eoy))?;
    Ok(FirmRecord {
        firm_id,
        year,
        sector_code,
        sector_class,
        value_added,
        workers_eoy,
    })
}

pub fn load_csv(path: &Path, schema_version: u32) -> Result<LoadReport, IngestError> {
    load_reader(std::fs::File::open(path)?, schema_version)
}

pub fn load_reader<R: Read>(reader: R, schema_version: u32) -> Result<LoadReport, IngestError> {
    if schema_version != SCHEMA_VERSION {
        return Err(IngestError::UnsupportedSchema(schema_version));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(IngestError::Schema(col.to_string()));
        }
    }
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    let mut excluded = Vec::new();
    let mut total = 0usize;
    for row in rdr.records() {
        total += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                malformed.push(RowError {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let parsed = row
            .deserialize::<RawRow>(Some(&headers))
            .map_err(|e| e.to_string())
            .and_then(parse_row);
        match parsed {
            Ok(r) if r.workers_eoy == 0 => excluded.push(RowError {
                line,
                reason: "zero workers".into(),
            }),
            Ok(r) => records.push(r),
            Err(reason) => malformed.push(RowError { line, reason }),
        }
    }
    if total > 0 && malformed.len() as f64 > MAX_BAD_ROW_FRACTION * total as f64 {
        let first = &malformed[0];
        return Err(IngestError::TooManyBadRows {
            bad: malformed.len(),
            total,
            first_line: first.line,
            first_reason: first.reason.clone(),
        });
    }
    Ok(LoadReport {
        records,
        malformed,
        excluded,
    })
}

/// Writes records in the input CSV format.
pub fn write_csv<W: Write>(records: &[FirmRecord], out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record([
            r.firm_id.clone(),
            r.year.to_string(),
            r.sector_code.to_string(),
            r.sector_class.code().to_string(),
            format!("{:e}", r.value_added),
            r.workers_eoy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Minimum averaged head count `L̄`.
    pub min_workers: f64,
    /// Drop samples with `c` above this; unset means report only.
    pub max_productivity: Option<f64>,
    /// Inclusive range of sample years; earlier records still serve as the
    /// prior year.
    pub years: Option<(i32, i32)>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_workers: 1.0,
            max_productivity: None,
            years: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductivitySample {
    pub firm_id: String,
    pub year: i32,
    pub sector_code: u32,
    pub sector_class: SectorClass,
    pub c: f64,
    pub weight_workers: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoPriorYearWorkers,
    NonpositiveValueAdded,
    BelowMinWorkers,
    AboveMaxProductivity,
    DuplicateRecord,
    OutOfYearRange,
}

impl ExclusionReason {
    pub fn describe(self) -> &'static str {
        match self {
            ExclusionReason::NoPriorYearWorkers => "no prior-year workers",
            ExclusionReason::NonpositiveValueAdded => "nonpositive value added",
            ExclusionReason::BelowMinWorkers => "below min_workers",
            ExclusionReason::AboveMaxProductivity => {
                "productivity above max_productivity (head count unreliable)"
            }
            ExclusionReason::DuplicateRecord => "duplicate firm-year",
            ExclusionReason::OutOfYearRange => "year out of range",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub firm_id: String,
    pub year: i32,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopValue {
    pub firm_id: String,
    pub year: i32,
    pub c: f64,
    pub weight_workers: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExclusionLedger {
    pub counts: BTreeMap<ExclusionReason, usize>,
    pub entries: Vec<Exclusion>,
    /// The ten largest retained productivities, for manual review.
    pub top_values: Vec<TopValue>,
}

impl ExclusionLedger {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    fn push(&mut self, r: &FirmRecord, reason: ExclusionReason) {
        *self.counts.entry(reason).or_default() += 1;
        self.entries.push(Exclusion {
            firm_id: r.firm_id.clone(),
            year: r.year,
            reason,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub samples: Vec<ProductivitySample>,
    pub ledger: ExclusionLedger,
}

/// Turns records into productivity samples, ledgering every exclusion.
pub fn build_samples(records: &[FirmRecord], filters: &FilterConfig) -> BuildReport {
    let mut first_index: HashMap<(&str, i32), usize> = HashMap::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        first_index.entry((r.firm_id.as_str(), r.year)).or_insert(i);
    }
    let mut ledger = ExclusionLedger::default();
    let mut samples = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if first_index[&(r.firm_id.as_str(), r.year)] != i {
            ledger.push(r, ExclusionReason::DuplicateRecord);
            continue;
        }
        if let Some((lo, hi)) = filters.years {
            if r.year < lo || r.year > hi {
                ledger.push(r, ExclusionReason::OutOfYearRange);
                continue;
            }
        }
        let Some(&prev) = first_index.get(&(r.firm_id.as_str(), r.year - 1)) else {
            ledger.push(r, ExclusionReason::NoPriorYearWorkers);
            continue;
        };
        let l_bar = 0.5 * (r.workers_eoy as f64 + records[prev].workers_eoy as f64);
        if r.value_added <= 0.0 {
            ledger.push(r, ExclusionReason::NonpositiveValueAdded);
            continue;
        }
        if l_bar < filters.min_workers {
            ledger.push(r, ExclusionReason::BelowMinWorkers);
            continue;
        }
        let c = r.value_added / l_bar;
        if filters.max_productivity.is_some_and(|m| c > m) {
            ledger.push(r, ExclusionReason::AboveMaxProductivity);
            continue;
        }
        samples.push(ProductivitySample {
            firm_id: r.firm_id.clone(),
            year: r.year,
            sector_code: r.sector_code,
            sector_class: r.sector_class,
            c,
            weight_workers: l_bar,
        });
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[b].c.total_cmp(&samples[a].c));
    ledger.top_values = order
        .iter()
        .take(10)
        .map(|&i| TopValue {
            firm_id: samples[i].firm_id.clone(),
            year: samples[i].year,
            c: samples[i].c,
            weight_workers: samples[i].weight_workers,
        })
        .collect();
    BuildReport { samples, ledger }
}

/// Samples of one year and sector class.
pub fn slice(
    samples: &[ProductivitySample],
    year: i32,
    class: SectorClass,
) -> Vec<&ProductivitySample> {
    samples
        .iter()
        .filter(|s| s.year == year && class.contains(s.sector_class))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorValue {
    pub sector_code: u32,
    /// Worker-weighted mean productivity `Σ c w / Σ w`.
    pub productivity: f64,
    pub n_firms: usize,
    pub workers: f64,
}

/// Worker-weighted productivity per sector, ordered by sector code.
pub fn sector_aggregate(
    samples: &[ProductivitySample],
    year: i32,
) -> Result<Vec<SectorValue>, IngestError> {
    let mut acc: BTreeMap<u32, (f64, f64, usize)> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.year == year) {
        let e = acc.entry(s.sector_code).or_default();
        e.0 += s.c * s.weight_workers;
        e.1 += s.weight_workers;
        e.2 += 1;
    }
    if acc.is_empty() {
        return Err(IngestError::EmptyYear(year));
    }
    Ok(acc
        .into_iter()
        .map(|(sector_code, (cw, w, n))| SectorValue {
            sector_code,
            productivity: cw / w,
            n_firms: n,
            workers: w,
        })
        .collect())
}

/// Rank-size curve of samples; weighted by head count for worker plots.
pub fn ranksize_samples(samples: &[&ProductivitySample], weighted: bool) -> Vec<RankPoint> {
    let c: Vec<f64> = samples.iter().map(|s| s.c).collect();
    if weighted {
        let w: Vec<f64> = samples.iter().map(|s| s.weight_workers).collect();
        ranksize(&c, Some(&w))
    } else {
        ranksize(&c, None)
    }
}

/// Two-column TSV `c, rank_fraction`.
pub fn write_ranksize_tsv<W: Write>(points: &[RankPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "c\trank_fraction")?;
    for p in points {
        writeln!(out, "{:e}\t{:e}", p.c, p.rank_fraction)?;
    }
    Ok(())
}
