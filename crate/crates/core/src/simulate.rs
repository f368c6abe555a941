//! Monte Carlo allocation of workers over firms under a fluctuating
//! temperature.
//!
//! Each epoch allocates a fixed number of workers multinomially with
//! `p_k ∝ e^{-β c_k}`. Averaged over epochs the worker density is
//! `p_F(c) B(c)` with `B(c) = ∫ e^{-βc} f_β(β) dβ`, which requires the epoch
//! temperature to be drawn with density `∝ f_β(β) Z_K(β)` where
//! `Z_K(β) = K^{-1} Σ_k e^{-β c_k}`. Proposals come from `f_β` by inverse cdf
//! and are accepted with probability `Z_K(β) / Z_K(β_min)`.

use std::io::{self, Write};
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gb2::{fit_mle, FitError, FitOptions, FitResult, Gb2Params, Observation};
use crate::superstat::BetaWeight;

/// Minimum firm count for runs whose tails are fitted.
pub const MIN_FIRMS_FOR_FIT: usize = 1000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(
        "scaling window violated: need beta_min·c_hi < 0.1 and beta_max·c_lo > 10, \
         got beta_min·c_hi = {min_hi}, beta_max·c_lo = {max_lo}"
    )]
    Window { min_hi: f64, max_lo: f64 },
    #[error("tail fit failed: {0}")]
    Fit(#[from] FitError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_firms: usize,
    pub n_workers_per_epoch: u64,
    pub n_epochs: usize,
    pub firm_params: Gb2Params,
    pub beta_weight: BetaWeight,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_firms == 0 {
            return Err(SimError::Config("n_firms must be ≥ 1".into()));
        }
        if self.n_workers_per_epoch == 0 {
            return Err(SimError::Config("n_workers_per_epoch must be ≥ 1".into()));
        }
        if self.n_epochs == 0 {
            return Err(SimError::Config("n_epochs must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub c_lo: f64,
    pub c_hi: f64,
}

fn default_tolerance() -> f64 {
    0.15
}

fn default_replicates() -> usize {
    200
}

/// Scenario: the simulation config plus the verification settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub sim: SimConfig,
    pub fit_window: FitWindow,
    pub tolerance: f64,
    pub bootstrap_replicates: usize,
}

/// On-disk layout: every key at top level (dotted keys for nested fields).
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    n_firms: usize,
    n_workers_per_epoch: u64,
    n_epochs: usize,
    firm_params: Gb2Params,
    beta_weight: BetaWeight,
    seed: u64,
    fit_window: FitWindow,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default = "default_replicates")]
    bootstrap_replicates: usize,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let f: ScenarioFile = toml::from_str(text)?;
        let s = Scenario {
            sim: SimConfig {
                n_firms: f.n_firms,
                n_workers_per_epoch: f.n_workers_per_epoch,
                n_epochs: f.n_epochs,
                firm_params: f.firm_params,
                beta_weight: f.beta_weight,
                seed: f.seed,
            },
            fit_window: f.fit_window,
            tolerance: f.tolerance,
            bootstrap_replicates: f.bootstrap_replicates,
        };
        s.sim.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimDiagnostics {
    pub total_workers: u64,
    pub n_epochs: usize,
    pub beta_proposals: u64,
    pub acceptance_rate: f64,
    pub mean_epoch_demand: f64,
    pub epoch_demand: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimOutput {
    pub firm_productivities: Vec<f64>,
    pub worker_counts: Vec<u64>,
    pub realized_betas: Vec<f64>,
    pub diagnostics: SimDiagnostics,
}

/// Weights `e^{-β (c_k - c_min)}`, so the largest is exactly 1.
fn boltzmann_weights(c: &[f64], beta: f64, out: &mut [f64]) {
    let c_min = c.iter().copied().fold(f64::INFINITY, f64::min);
    for (o, &ck) in out.iter_mut().zip(c) {
        *o = (-beta * (ck - c_min)).exp();
    }
}

fn mean_boltzmann(c: &[f64], beta: f64) -> f64 {
    c.iter().map(|&ck| (-beta * ck).exp()).sum::<f64>() / c.len() as f64
}

struct Epoch {
    beta: f64,
    demand: f64,
    proposals: u64,
}

fn run_epoch(
    cfg: &SimConfig,
    sorted_c: &[f64],
    z_max: f64,
    epoch: usize,
    counts: &mut [u64],
) -> Epoch {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(epoch as u64 + 1);
    let w = &cfg.beta_weight;
    let mut proposals = 0u64;
    let beta = loop {
        proposals += 1;
        let beta = w.sample(&mut rng);
        if w.is_point_mass() {
            break beta;
        }
        let accept = mean_boltzmann(sorted_c, beta) / z_max;
        if rng.random::<f64>() < accept {
            break beta;
        }
    };

    let k = sorted_c.len();
    let mut weights = vec![0.0; k];
    boltzmann_weights(sorted_c, beta, &mut weights);
    // suffix sums keep the conditional probabilities accurate
    let mut suffix = vec![0.0; k + 1];
    for i in (0..k).rev() {
        suffix[i] = suffix[i + 1] + weights[i];
    }
    let mut remaining = cfg.n_workers_per_epoch;
    let mut demand = 0.0;
    for i in 0..k {
        if remaining == 0 {
            break;
        }
        let n = if i + 1 == k {
            remaining
        } else {
            let p = (weights[i] / suffix[i]).clamp(0.0, 1.0);
            Binomial::new(remaining, p)
                .expect("p in [0, 1]")
                .sample(&mut rng)
        };
        counts[i] += n;
        remaining -= n;
        demand += n as f64 * sorted_c[i];
    }
    Epoch {
        beta,
        demand: demand / cfg.n_workers_per_epoch as f64,
        proposals,
    }
}

/// Draws the firms once and allocates workers epoch by epoch.
///
/// Firms use RNG stream 0 of the seed and epoch `e` uses stream `e + 1`, so
/// the output is independent of thread scheduling.
pub fn run_sim(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let firms = cfg.firm_params.sample_with(&mut rng, cfg.n_firms);

    let mut order: Vec<usize> = (0..firms.len()).collect();
    order.sort_by(|&a, &b| firms[a].total_cmp(&firms[b]));
    let sorted_c: Vec<f64> = order.iter().map(|&i| firms[i]).collect();
    let z_max = mean_boltzmann(&sorted_c, cfg.beta_weight.beta_min());

    let k = firms.len();
    let (epochs, sorted_counts) = (0..cfg.n_epochs)
        .into_par_iter()
        .fold(
            || (Vec::new(), vec![0u64; k]),
            |(mut eps, mut counts), e| {
                eps.push((e, run_epoch(cfg, &sorted_c, z_max, e, &mut counts)));
                (eps, counts)
            },
        )
        .reduce(
            || (Vec::new(), vec![0u64; k]),
            |(mut ea, mut ca), (eb, cb)| {
                ea.extend(eb);
                for (a, b) in ca.iter_mut().zip(cb) {
                    *a += b;
                }
                (ea, ca)
            },
        );
    let mut epochs = epochs;
    epochs.sort_by_key(|(e, _)| *e);

    let mut worker_counts = vec![0u64; k];
    for (pos, &firm) in order.iter().enumerate() {
        worker_counts[firm] = sorted_counts[pos];
    }
    let proposals: u64 = epochs.iter().map(|(_, e)| e.proposals).sum();
    let epoch_demand: Vec<f64> = epochs.iter().map(|(_, e)| e.demand).collect();
    let diagnostics = SimDiagnostics {
        total_workers: worker_counts.iter().sum(),
        n_epochs: cfg.n_epochs,
        beta_proposals: proposals,
        acceptance_rate: cfg.n_epochs as f64 / proposals as f64,
        mean_epoch_demand: epoch_demand.iter().sum::<f64>() / cfg.n_epochs as f64,
        epoch_demand,
    };
    Ok(SimOutput {
        firm_productivities: firms,
        worker_counts,
        realized_betas: epochs.iter().map(|(_, e)| e.beta).collect(),
        diagnostics,
    })
}

impl SimOutput {
    /// Firm observations (unit weight) for the firm tail fit.
    pub fn firm_observations(&self) -> Vec<Observation> {
        self.firm_productivities
            .iter()
            .map(|&c| Observation::unweighted(c))
            .collect()
    }

    /// Firms with at least one worker, weighted by head count.
    pub fn worker_observations(&self) -> Vec<Observation> {
        self.firm_productivities
            .iter()
            .zip(&self.worker_counts)
            .filter(|(_, &n)| n > 0)
            .map(|(&c, &n)| Observation { c, w: n as f64 })
            .collect()
    }

    /// TSV with columns `firm_id, c_k, n_k`.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "firm_id\tc_k\tn_k")?;
        for (i, (c, n)) in self
            .firm_productivities
            .iter()
            .zip(&self.worker_counts)
            .enumerate()
        {
            writeln!(out, "{i}\t{c:e}\t{n}")?;
        }
        Ok(())
    }
}

/// Maximum-likelihood Pareto index of a weighted sample truncated to `[a, b]`.
pub fn truncated_pareto_index(obs: &[Observation], a: f64, b: f64) -> Option<f64> {
    let inside: Vec<&Observation> = obs.iter().filter(|o| o.c >= a && o.c <= b).collect();
    let w: f64 = inside.iter().map(|o| o.w).sum();
    if inside.len() < 10 || w <= 0.0 {
        return None;
    }
    let mean_ln = inside.iter().map(|o| o.w * (o.c / a).ln()).sum::<f64>() / w;
    let r = (b / a).ln();
    // score in units of ln(c/a): 1/α - mean - r e^{-αr} / (1 - e^{-αr})
    let score = |alpha: f64| {
        let e = (-alpha * r).exp();
        1.0 / alpha - mean_ln - r * e / (1.0 - e)
    };
    let (mut lo, mut hi) = (1e-4, 50.0);
    if score(lo) < 0.0 || score(hi) > 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub gamma: f64,
    pub fit_window: FitWindow,
    pub mu_f_fit: FitResult,
    pub mu_w_fit: FitResult,
    pub mu_f_measured: f64,
    pub mu_w_measured: f64,
    /// `μ_F(fit) - γ + 1`.
    pub mu_w_predicted: f64,
    /// `μ_F(config) - γ + 1`.
    pub mu_w_nominal: f64,
    /// `μ_W ± 2·stderr`.
    pub mu_w_interval: (f64, f64),
    pub mu_f_interval: (f64, f64),
    pub window_mu_f: Option<f64>,
    pub window_mu_w: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub diagnostics: SimDiagnostics,
}

pub fn check_window(w: &BetaWeight, window: &FitWindow) -> Result<(), SimError> {
    let min_hi = w.beta_min() * window.c_hi;
    let max_lo = w.beta_max() * window.c_lo;
    if !(window.c_lo > 0.0 && window.c_hi > window.c_lo) || !(min_hi < 0.1 && max_lo > 10.0) {
        return Err(SimError::Window { min_hi, max_lo });
    }
    Ok(())
}

/// Simulates, fits firm and worker GB2 tails and compares `μ_W` with
/// `μ_F - γ + 1`.
pub fn verify_tail_relation(scenario: &Scenario) -> Result<(TailReport, SimOutput), SimError> {
    let cfg = &scenario.sim;
    check_window(&cfg.beta_weight, &scenario.fit_window)?;
    if cfg.n_firms < MIN_FIRMS_FOR_FIT {
        return Err(SimError::Config(format!(
            "tail fits need n_firms ≥ {MIN_FIRMS_FOR_FIT}, got {}",
            cfg.n_firms
        )));
    }
    let out = run_sim(cfg)?;
    let opts = FitOptions {
        bootstrap_replicates: scenario.bootstrap_replicates,
        seed: cfg.seed,
        ..Default::default()
    };
    let firms = out.firm_observations();
    let workers = out.worker_observations();
    let f = fit_mle(&firms, &opts)?;
    let w = fit_mle(&workers, &opts)?;
    let gamma = cfg.beta_weight.gamma();
    let mu_f = f.params.mu();
    let mu_w = w.params.mu();
    let predicted = mu_f - gamma + 1.0;
    let pass =
        f.converged && w.converged && (mu_w - predicted).abs() <= scenario.tolerance && mu_w > mu_f;
    let win = scenario.fit_window;
    let report = TailReport {
        gamma,
        fit_window: win,
        mu_f_measured: mu_f,
        mu_w_measured: mu_w,
        mu_w_predicted: predicted,
        mu_w_nominal: cfg.firm_params.mu() - gamma + 1.0,
        mu_w_interval: (mu_w - 2.0 * w.mu_stderr, mu_w + 2.0 * w.mu_stderr),
        mu_f_interval: (mu_f - 2.0 * f.mu_stderr, mu_f + 2.0 * f.mu_stderr),
        window_mu_f: truncated_pareto_index(&firms, win.c_lo, win.c_hi),
        window_mu_w: truncated_pareto_index(&workers, win.c_lo, win.c_hi),
        tolerance: scenario.tolerance,
        pass,
        diagnostics: out.diagnostics.clone(),
        mu_f_fit: f,
        mu_w_fit: w,
    };
    Ok((report, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(weight: BetaWeight, n_firms: usize, workers: u64, epochs: usize) -> SimConfig {
        SimConfig {
            n_firms,
            n_workers_per_epoch: workers,
            n_epochs: epochs,
            firm_params: Gb2Params::new(2.5, 3.0, 3.0, 1.0).unwrap(),
            beta_weight: weight,
            seed: 17,
        }
    }

    #[test]
    fn conservation_and_determinism() {
        let c = cfg(BetaWeight::new(0.5, 1e-3, 10.0).unwrap(), 500, 1234, 37);
        let a = run_sim(&c).unwrap();
        assert_eq!(a.worker_counts.iter().sum::<u64>(), 1234 * 37);
        assert_eq!(a.diagnostics.total_workers, 1234 * 37);
        assert!(a.firm_productivities.iter().all(|&c| c > 0.0));
        assert_eq!(a, run_sim(&c).unwrap());
        let mut other = c.clone();
        other.seed += 1;
        assert_ne!(a.worker_counts, run_sim(&other).unwrap().worker_counts);
    }

    #[test]
    fn point_mass_matches_boltzmann() {
        let beta0 = 0.8;
        let c = cfg(BetaWeight::new(0.0, beta0, beta0).unwrap(), 50, 10_000, 100);
        let out = run_sim(&c).unwrap();
        let n_total = out.diagnostics.total_workers as f64;
        let z: f64 = out
            .firm_productivities
            .iter()
            .map(|c| (-beta0 * c).exp())
            .sum();
        let mut chi2 = 0.0;
        for (c, &n) in out.firm_productivities.iter().zip(&out.worker_counts) {
            let e = n_total * (-beta0 * c).exp() / z;
            chi2 += (n as f64 - e).powi(2) / e;
        }
        // χ² with 49 dof: the 0.99 quantile is 74.9
        assert!(chi2 < 74.9, "χ² = {chi2}");
        assert!(out.realized_betas.iter().all(|&b| b == beta0));
    }

    #[test]
    fn infinite_temperature_spreads_evenly() {
        let c = cfg(BetaWeight::new(0.0, 1e-9, 1e-9).unwrap(), 200, 20_000, 50);
        let out = run_sim(&c).unwrap();
        let mean_c = out.firm_productivities.iter().sum::<f64>() / 200.0;
        assert!((out.diagnostics.mean_epoch_demand / mean_c - 1.0).abs() < 0.01);
        let expected = 20_000.0 * 50.0 / 200.0;
        for &n in &out.worker_counts {
            assert!((n as f64 - expected).abs() < 6.0 * expected.sqrt());
        }
    }

    /// Spearman rank correlation of epoch demand against epoch β.
    fn spearman(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            let mut r = vec![0.0; v.len()];
            for (k, &i) in idx.iter().enumerate() {
                r[i] = k as f64;
            }
            r
        };
        let (rx, ry) = (rank(x), rank(y));
        let n = x.len() as f64;
        let m = (n - 1.0) / 2.0;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
        let var: f64 = rx.iter().map(|a| (a - m).powi(2)).sum();
        cov / var
    }

    #[test]
    fn demand_falls_with_beta() {
        let c = cfg(BetaWeight::new(0.5, 1e-2, 10.0).unwrap(), 2000, 2000, 200);
        let out = run_sim(&c).unwrap();
        let rho = spearman(&out.realized_betas, &out.diagnostics.epoch_demand);
        // p < 0.01 at n = 200 needs ρ < -0.18
        assert!(rho < -0.18, "ρ = {rho}");
    }

    #[test]
    fn realized_betas_follow_tilted_weight() {
        // accepted β have density ∝ β^{-γ} Z_K(β); compare the mean with quadrature
        let weight = BetaWeight::new(0.5, 1e-2, 10.0).unwrap();
        let c = cfg(weight, 300, 10, 4000);
        let out = run_sim(&c).unwrap();
        let firms = &out.firm_productivities;
        let grid = 20_000;
        let (a, b) = (weight.beta_min().ln(), weight.beta_max().ln());
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..grid {
            let t = a + (b - a) * (i as f64 + 0.5) / grid as f64;
            let beta = t.exp();
            let d = beta.powf(0.5) * mean_boltzmann(firms, beta);
            num += beta * d;
            den += d;
        }
        let expect = num / den;
        let got = out.realized_betas.iter().sum::<f64>() / out.realized_betas.len() as f64;
        let sd = (out
            .realized_betas
            .iter()
            .map(|x| (x - got).powi(2))
            .sum::<f64>()
            / 4000.0)
            .sqrt();
        assert!(
            (got - expect).abs() < 4.0 * sd / 4000f64.sqrt(),
            "{got} vs {expect}"
        );
    }

    #[test]
    fn truncated_pareto_recovers_index() {
        let n = 20_000;
        let obs: Vec<Observation> = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                Observation::unweighted(u.powf(-1.0 / 1.7))
            })
            .collect();
        let est = truncated_pareto_index(&obs, 2.0, 50.0).unwrap();
        assert!((est - 1.7).abs() < 0.01, "{est}");
    }

    #[test]
    fn window_guard() {
        let w = BetaWeight::new(0.0, 1e-3, 1e-3).unwrap();
        let err = check_window(
            &w,
            &FitWindow {
                c_lo: 1.0,
                c_hi: 10.0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, SimError::Window { .. }));
        let ok = BetaWeight::new(0.5, 1e-5, 10.0).unwrap();
        assert!(check_window(
            &ok,
            &FitWindow {
                c_lo: 1.5,
                c_hi: 1000.0
            }
        )
        .is_ok());
    }

    #[test]
    fn scenario_round_trip() {
        let text = r#"
n_firms = 20000
n_workers_per_epoch = 10000
n_epochs = 1000
seed = 7
firm_params.mu = 2.5
firm_params.nu = 3.0
firm_params.q = 3.0
firm_params.c1 = 1.0
beta_weight.gamma = 0.5
beta_weight.beta_min = 1e-5
beta_weight.beta_max = 10.0
fit_window.c_lo = 1.5
fit_window.c_hi = 1000.0
"#;
        let s = Scenario::from_toml(text).unwrap();
        assert_eq!(s.sim.n_firms, 20_000);
        assert_eq!(s.tolerance, 0.15);
        assert_eq!(s.bootstrap_replicates, 200);
        assert_eq!(s.sim.beta_weight.gamma(), 0.5);
        let bad = text.replace("n_epochs = 1000", "n_epochs = 0");
        assert!(Scenario::from_toml(&bad).is_err());
        let typo = text.replace("seed = 7", "sead = 7");
        assert!(Scenario::from_toml(&typo).is_err());
    }
}
