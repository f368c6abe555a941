//! Synthetic firm panels with known tail indices.
//!
//! These feed the ingest and CLI paths with data whose answer is known.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::gb2::{Gb2Params, InvalidParams};
use crate::ingest::FirmRecord;
use crate::simulate::SimOutput;
use crate::superstat::SectorClass;

/// Panel where firm productivity is GB2 and head count is a smooth function
/// of productivity.
///
/// Head count is `L(c) = L0 · (1 + (c/c1)^q)^{-t/q}`, so the worker-weighted
/// productivity density is GB2 with `μ_W = μ_F + t` and the same `(ν, q, c1)`.
/// `t > 0` gives the superstatistical ordering and `t < 0` the inverted one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltedPanel {
    pub firm_params: Gb2Params,
    pub tilt: f64,
    pub base_workers: f64,
    pub n_firms: usize,
    /// Inclusive sample years; one extra leading year is emitted so that
    /// every firm has a prior-year head count.
    pub first_year: i32,
    pub last_year: i32,
    pub sector_class: SectorClass,
    pub sector_codes: Vec<u32>,
    /// Log-scale year-to-year productivity noise.
    pub persistence_noise: f64,
    pub seed: u64,
}

impl TiltedPanel {
    /// Panel with the given firm and worker indices.
    pub fn with_indices(
        mu_f: f64,
        mu_w: f64,
        n_firms: usize,
        years: (i32, i32),
        sector_class: SectorClass,
        seed: u64,
    ) -> Result<Self, InvalidParams> {
        let sector_codes = match sector_class {
            SectorClass::Nonmanufacturing => (14..=26).collect(),
            _ => (1..=13).collect(),
        };
        Ok(Self {
            firm_params: Gb2Params::new(mu_f, 2.0, 2.0, 10.0)?,
            tilt: mu_w - mu_f,
            base_workers: 1e5,
            n_firms,
            first_year: years.0,
            last_year: years.1,
            sector_class,
            sector_codes,
            persistence_noise: 0.02,
            seed,
        })
    }

    pub fn worker_params(&self) -> Result<Gb2Params, InvalidParams> {
        let p = &self.firm_params;
        Gb2Params::new(p.mu() + self.tilt, p.nu(), p.q(), p.c1())
    }

    pub fn head_count(&self, c: f64) -> u64 {
        let p = &self.firm_params;
        let l = self.base_workers * (1.0 + (c / p.c1()).powf(p.q())).powf(-self.tilt / p.q());
        l.round().max(1.0) as u64
    }

    pub fn records(&self) -> Vec<FirmRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let base = self.firm_params.sample_with(&mut rng, self.n_firms);
        let codes = if self.sector_codes.is_empty() {
            vec![0]
        } else {
            self.sector_codes.clone()
        };
        let mut out =
            Vec::with_capacity(base.len() * (self.last_year - self.first_year + 2) as usize);
        let mut prev_workers = vec![0u64; base.len()];
        for year in self.first_year - 1..=self.last_year {
            for (k, &ck) in base.iter().enumerate() {
                let eps: f64 = rng.sample(StandardNormal);
                let c = ck * (self.persistence_noise * eps).exp();
                let workers = self.head_count(c);
                let l_bar = if year < self.first_year {
                    workers as f64
                } else {
                    0.5 * (workers + prev_workers[k]) as f64
                };
                prev_workers[k] = workers;
                out.push(FirmRecord {
                    firm_id: format!("F{k:06}"),
                    year,
                    sector_code: codes[k % codes.len()],
                    sector_class: self.sector_class,
                    value_added: c * l_bar,
                    workers_eoy: workers,
                });
            }
        }
        out
    }
}

/// Sector-level panel whose sector productivities follow a Pareto law.
///
/// Sector levels sit at the Pareto quantiles of the plotting positions
/// `i/(n+1)`; firms scatter log-normally around their sector level. Two years are
/// emitted with equal head counts, so the second year's samples carry the
/// generated productivities exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorPanel {
    pub n_sectors: u32,
    pub tail_index: f64,
    pub firms_per_sector: usize,
    pub firm_spread: f64,
    pub year: i32,
    pub seed: u64,
}

impl Default for SectorPanel {
    fn default() -> Self {
        Self {
            n_sectors: 26,
            tail_index: 1.6,
            firms_per_sector: 40,
            firm_spread: 0.3,
            year: 2004,
            seed: 0,
        }
    }
}

impl SectorPanel {
    pub fn sector_levels(&self) -> Vec<f64> {
        let n = self.n_sectors as f64;
        (1..=self.n_sectors)
            .map(|i| (i as f64 / (n + 1.0)).powf(-1.0 / self.tail_index))
            .collect()
    }

    pub fn records(&self) -> Vec<FirmRecord> {
        let levels = self.sector_levels();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let mut out = Vec::new();
        for (j, &level) in levels.iter().enumerate() {
            let code = j as u32 + 1;
            let class = if code <= self.n_sectors / 2 {
                SectorClass::Manufacturing
            } else {
                SectorClass::Nonmanufacturing
            };
            for i in 0..self.firms_per_sector {
                let eps: f64 = rng.sample(StandardNormal);
                let s = self.firm_spread;
                // mean-one log-normal keeps the weighted sector mean near the level
                let c = level * (s * eps - 0.5 * s * s).exp();
                let workers = rng.random_range(5..500u64);
                for year in [self.year - 1, self.year] {
                    out.push(FirmRecord {
                        firm_id: format!("S{code:02}F{i:04}"),
                        year,
                        sector_code: code,
                        sector_class: class,
                        value_added: c * workers as f64,
                        workers_eoy: workers,
                    });
                }
            }
        }
        out
    }
}

/// One panel year from a simulation: each firm's head count is its total
/// allocation, repeated in the prior year. Firms with no workers are dropped.
pub fn panel_from_simulation(
    sim: &SimOutput,
    year: i32,
    sector_class: SectorClass,
) -> Vec<FirmRecord> {
    let mut out = Vec::new();
    for (k, (&c, &n)) in sim
        .firm_productivities
        .iter()
        .zip(&sim.worker_counts)
        .enumerate()
    {
        if n == 0 {
            continue;
        }
        for y in [year - 1, year] {
            out.push(FirmRecord {
                firm_id: format!("K{k:06}"),
                year: y,
                sector_code: 0,
                sector_class,
                value_added: c * n as f64,
                workers_eoy: n,
            });
        }
    }
    out
}
