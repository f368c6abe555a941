//! Partition function, mean demand and moments of the Boltzmann allocation
//! of workers over firms with productivity density `p(c)`.
//!
//! ```text
//! Z(β) = ∫ e^{-βc} p(c) dc,   D(β) = -d ln Z / dβ = ⟨c⟩_β
//! ```
//!
//! All integrals run over `u = ln c` on a finite window. The pieces outside
//! the window are added from closed-form partial moments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gb2::Gb2Params;
use crate::quad::{integrate_with_breaks, QuadOptions};
use crate::specfun::gamma;

/// Small-β expansions are only used while `scale · β` stays below this.
pub const EXPANSION_RADIUS: f64 = 0.1;
/// `|μ_F - 2|` inside which the logarithmic branch is used.
pub const LOG_BRANCH_TOL: f64 = 1e-6;

const QUAD_REL_TOL: f64 = 1e-13;
const QUAD_MAX_INTERVALS: usize = 2000;
/// Upper cutoff in units of the Boltzmann scale `1/β`.
const BOLTZMANN_CUTOFF: f64 = 60.0;
/// Lower cutoff in units of the body scale.
const LOWER_CUTOFF: f64 = 1e-15;
/// `β · scale` below which `Z` and `D` are formed from their deficits.
const DEFICIT_SWITCH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThermoError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("moment {n} diverges at β = 0 for μ_F = {mu_f}")]
    DivergentMoment { n: u32, mu_f: f64 },
    #[error("expansion out of regime: scale·β = {scaled} ≥ {EXPANSION_RADIUS}")]
    OutOfRegime { scaled: f64 },
    #[error("β = {0} must be finite and ≥ 0")]
    InvalidBeta(f64),
}

/// Firm productivity density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FirmPdf {
    Gb2 {
        params: Gb2Params,
    },
    Exponential {
        mean: f64,
    },
    /// Pure tail law `P>(c) = (1 + c/c0)^{-μ_F}`, the GB2 with `ν = q = 1`.
    TabulatedTail {
        mu_f: f64,
        c0: f64,
    },
}

impl FirmPdf {
    fn as_gb2(&self) -> Option<Gb2Params> {
        match *self {
            FirmPdf::Gb2 { params } => Some(params),
            FirmPdf::TabulatedTail { mu_f, c0 } => Gb2Params::new(mu_f, 1.0, 1.0, c0).ok(),
            FirmPdf::Exponential { .. } => None,
        }
    }

    pub fn pdf(&self, c: f64) -> f64 {
        match *self {
            FirmPdf::Exponential { mean } => {
                if c < 0.0 {
                    0.0
                } else {
                    (-c / mean).exp() / mean
                }
            }
            _ => self.as_gb2().map_or(f64::NAN, |p| p.pdf(c)),
        }
    }

    pub fn ccdf(&self, c: f64) -> f64 {
        match *self {
            FirmPdf::Exponential { mean } => (-c.max(0.0) / mean).exp(),
            _ => self.as_gb2().map_or(f64::NAN, |p| p.ccdf(c)),
        }
    }

    pub fn cdf(&self, c: f64) -> f64 {
        match *self {
            FirmPdf::Exponential { mean } => -(-c.max(0.0) / mean).exp_m1(),
            _ => self.as_gb2().map_or(f64::NAN, |p| p.cdf(c)),
        }
    }

    /// Pareto index of the upper tail; infinite for the exponential.
    pub fn tail_index(&self) -> f64 {
        match *self {
            FirmPdf::Gb2 { params } => params.mu(),
            FirmPdf::Exponential { .. } => f64::INFINITY,
            FirmPdf::TabulatedTail { mu_f, .. } => mu_f,
        }
    }

    /// Exponent of `p(c) ∝ c^{ν-1}` near zero.
    fn low_power(&self) -> f64 {
        match *self {
            FirmPdf::Gb2 { params } => params.nu(),
            _ => 1.0,
        }
    }

    fn body_scale(&self) -> f64 {
        match *self {
            FirmPdf::Gb2 { params } => params.c1(),
            FirmPdf::Exponential { mean } => mean,
            FirmPdf::TabulatedTail { c0, .. } => c0,
        }
    }

    /// `E[c^k]` when finite.
    pub fn moment(&self, k: u32) -> Option<f64> {
        match *self {
            FirmPdf::Exponential { mean } => Some(mean.powi(k as i32) * factorial(k)),
            _ => self.as_gb2()?.moment(k as f64),
        }
    }

    /// `∫_x^∞ c^k p(c) dc` when finite.
    fn upper_partial_moment(&self, k: u32, x: f64) -> Option<f64> {
        match *self {
            FirmPdf::Exponential { mean } => {
                // m^k Γ(k+1, y) = m^k k! e^{-y} Σ_{j≤k} y^j / j!
                let y = x / mean;
                let mut term = 1.0;
                let mut sum = 1.0;
                for j in 1..=k {
                    term *= y / j as f64;
                    sum += term;
                }
                Some(mean.powi(k as i32) * factorial(k) * (-y).exp() * sum)
            }
            _ => self.as_gb2()?.upper_partial_moment(k as f64, x),
        }
    }

    fn validate(&self) -> Result<(), ThermoError> {
        match *self {
            FirmPdf::Exponential { mean } if !(mean.is_finite() && mean > 0.0) => Err(
                ThermoError::InvalidModel(format!("exponential mean {mean} must be > 0")),
            ),
            FirmPdf::TabulatedTail { mu_f, c0 } => Gb2Params::new(mu_f, 1.0, 1.0, c0)
                .map(|_| ())
                .map_err(|e| ThermoError::InvalidModel(e.to_string())),
            _ => Ok(()),
        }
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Parses `exp:<mean>`, `gb2:<mu>,<nu>,<q>,<c1>` or `tail:<mu_f>,<c0>`.
impl FromStr for FirmPdf {
    type Err = ThermoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            ThermoError::InvalidModel(format!(
                "{s:?}: expected exp:<mean>, gb2:<mu>,<nu>,<q>,<c1> or tail:<mu_f>,<c0>"
            ))
        };
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        let pdf = match (kind.trim(), nums.as_slice()) {
            ("exp", &[mean]) => FirmPdf::Exponential { mean },
            ("gb2", &[mu, nu, q, c1]) => FirmPdf::Gb2 {
                params: Gb2Params::new(mu, nu, q, c1)
                    .map_err(|e| ThermoError::InvalidModel(e.to_string()))?,
            },
            ("tail", &[mu_f, c0]) => FirmPdf::TabulatedTail { mu_f, c0 },
            _ => return Err(bad()),
        };
        pdf.validate()?;
        Ok(pdf)
    }
}

impl fmt::Display for FirmPdf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FirmPdf::Gb2 { params: p } => {
                write!(f, "gb2:{},{},{},{}", p.mu(), p.nu(), p.q(), p.c1())
            }
            FirmPdf::Exponential { mean } => write!(f, "exp:{mean}"),
            FirmPdf::TabulatedTail { mu_f, c0 } => write!(f, "tail:{mu_f},{c0}"),
        }
    }
}

/// Firm density with its tail parameters and cached moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermoModel {
    pub firm_pdf: FirmPdf,
    /// Infinite for the exponential model.
    pub mu_f: f64,
    /// Tail scale in `P>(c) ≃ (c/c0)^{-μ_F}`; the mean for the exponential.
    pub c0: f64,
    pub mean0: f64,
    /// `⟨c²⟩_0`, present iff `μ_F > 2`.
    pub m2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExpansionBranch {
    /// `μ_F > 2`: analytic in β to second order.
    Analytic,
    /// `μ_F = 2`: logarithmic correction.
    Logarithmic,
    /// `1 < μ_F < 2`: non-analytic `β^{μ_F}` correction.
    Anomalous,
}

impl ThermoModel {
    pub fn new(firm_pdf: FirmPdf) -> Result<Self, ThermoError> {
        firm_pdf.validate()?;
        let mu_f = firm_pdf.tail_index();
        if !(mu_f > 1.0) {
            return Err(ThermoError::InvalidModel(format!(
                "μ_F = {mu_f}: the mean demand needs μ_F > 1"
            )));
        }
        let mean0 = firm_pdf.moment(1).expect("μ_F > 1");
        let m2 = if mu_f > 2.0 { firm_pdf.moment(2) } else { None };
        let c0 = match firm_pdf {
            FirmPdf::Gb2 { params } => params.tail_scale(),
            FirmPdf::Exponential { mean } => mean,
            FirmPdf::TabulatedTail { c0, .. } => c0,
        };
        Ok(Self {
            firm_pdf,
            mu_f,
            c0,
            mean0,
            m2,
        })
    }

    pub fn exponential(mean: f64) -> Result<Self, ThermoError> {
        Self::new(FirmPdf::Exponential { mean })
    }

    pub fn gb2(params: Gb2Params) -> Result<Self, ThermoError> {
        Self::new(FirmPdf::Gb2 { params })
    }

    fn check_beta(beta: f64) -> Result<(), ThermoError> {
        if beta.is_finite() && beta >= 0.0 {
            Ok(())
        } else {
            Err(ThermoError::InvalidBeta(beta))
        }
    }

    fn window(&self, beta: f64) -> (f64, f64, Vec<f64>) {
        let scale = self.firm_pdf.body_scale();
        let lo = (scale * LOWER_CUTOFF).ln();
        let hi = (BOLTZMANN_CUTOFF / beta).ln().max(scale.ln() + 3.0);
        let mut breaks = vec![lo, hi];
        for t in [scale.ln() - 4.0, scale.ln(), scale.ln() + 4.0] {
            breaks.push(t);
        }
        let boltz = -beta.ln();
        for d in [-3.0, 0.0, 2.0] {
            breaks.push(boltz + d);
        }
        breaks.retain(|t| *t >= lo && *t <= hi);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        (lo, hi, breaks)
    }

    fn integrate_log(&self, f: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
        let opts = QuadOptions {
            abs_tol: 0.0,
            rel_tol: QUAD_REL_TOL,
            max_intervals: QUAD_MAX_INTERVALS,
        };
        integrate_with_breaks(f, breaks, opts).value
    }

    /// `∫_0^ε c^k p(c) dc` for the power-law head `p ∝ c^{ν-1}`.
    fn head(&self, k: f64, eps: f64) -> f64 {
        let nu = self.firm_pdf.low_power();
        self.firm_pdf.cdf(eps) * eps.powf(k) * nu / (nu + k)
    }

    /// `J_n(β) = ∫ c^n e^{-βc} p(c) dc` for `β > 0`.
    fn laplace(&self, n: u32, beta: f64) -> f64 {
        let (lo, _, breaks) = self.window(beta);
        let pdf = &self.firm_pdf;
        let body = self.integrate_log(
            |u| {
                let c = u.exp();
                pdf.pdf(c) * c.powi(n as i32 + 1) * (-beta * c).exp()
            },
            &breaks,
        );
        body + self.head(n as f64, lo.exp())
    }

    /// `Δ_n(β) = ∫ c^n (1 - e^{-βc}) p(c) dc` for `n < μ_F`.
    fn deficit(&self, n: u32, beta: f64) -> f64 {
        let (lo, hi, breaks) = self.window(beta);
        let pdf = &self.firm_pdf;
        let body = self.integrate_log(
            |u| {
                let c = u.exp();
                pdf.pdf(c) * c.powi(n as i32 + 1) * -(-beta * c).exp_m1()
            },
            &breaks,
        );
        let tail = pdf
            .upper_partial_moment(n, hi.exp())
            .expect("n < μ_F for deficits");
        body + tail + beta * self.head(n as f64 + 1.0, lo.exp())
    }

    fn small_beta(&self, beta: f64) -> bool {
        beta * self.mean0 < DEFICIT_SWITCH
    }

    /// `Z(β)`.
    pub fn partition(&self, beta: f64) -> Result<f64, ThermoError> {
        Self::check_beta(beta)?;
        if beta == 0.0 {
            return Ok(1.0);
        }
        Ok(if self.small_beta(beta) {
            1.0 - self.deficit(0, beta)
        } else {
            self.laplace(0, beta)
        })
    }

    /// `⟨c⟩_0 - D(β)`, accurate to relative precision for small β.
    pub fn demand_deficit(&self, beta: f64) -> Result<f64, ThermoError> {
        Self::check_beta(beta)?;
        if beta == 0.0 {
            return Ok(0.0);
        }
        if self.small_beta(beta) {
            let d0 = self.deficit(0, beta);
            let d1 = self.deficit(1, beta);
            Ok((d1 - self.mean0 * d0) / (1.0 - d0))
        } else {
            Ok(self.mean0 - self.laplace(1, beta) / self.laplace(0, beta))
        }
    }

    /// Mean demand `D(β) = ⟨c⟩_β`.
    pub fn demand(&self, beta: f64) -> Result<f64, ThermoError> {
        Self::check_beta(beta)?;
        if beta == 0.0 {
            return Ok(self.mean0);
        }
        if self.small_beta(beta) {
            Ok(self.mean0 - self.demand_deficit(beta)?)
        } else {
            Ok(self.laplace(1, beta) / self.laplace(0, beta))
        }
    }

    /// `⟨c^n⟩_β`.
    pub fn moment(&self, n: u32, beta: f64) -> Result<f64, ThermoError> {
        Self::check_beta(beta)?;
        if n == 0 {
            return Ok(1.0);
        }
        if beta == 0.0 {
            return self
                .firm_pdf
                .moment(n)
                .ok_or(ThermoError::DivergentMoment { n, mu_f: self.mu_f });
        }
        if n == 1 {
            return self.demand(beta);
        }
        Ok(self.laplace(n, beta) / self.partition(beta)?)
    }

    /// `Var_β(c) = ⟨c²⟩_β - ⟨c⟩_β²`, the response `dD/dT = β² Var_β`.
    pub fn variance(&self, beta: f64) -> Result<f64, ThermoError> {
        Self::check_beta(beta)?;
        if beta == 0.0 {
            let m2 = self.moment(2, 0.0)?;
            return Ok(m2 - self.mean0 * self.mean0);
        }
        // central moment computed directly avoids cancellation
        let d = self.demand(beta)?;
        let (lo, _, breaks) = self.window(beta);
        let pdf = &self.firm_pdf;
        let body = self.integrate_log(
            |u| {
                let c = u.exp();
                pdf.pdf(c) * c * (c - d).powi(2) * (-beta * c).exp()
            },
            &breaks,
        );
        let head = d * d * self.firm_pdf.cdf(lo.exp());
        Ok((body + head) / self.partition(beta)?)
    }

    pub fn expansion_branch(&self) -> ExpansionBranch {
        if (self.mu_f - 2.0).abs() < LOG_BRANCH_TOL {
            ExpansionBranch::Logarithmic
        } else if self.mu_f > 2.0 {
            ExpansionBranch::Analytic
        } else {
            ExpansionBranch::Anomalous
        }
    }

    fn check_regime(&self, beta: f64) -> Result<(), ThermoError> {
        Self::check_beta(beta)?;
        let scaled = self.c0 * beta;
        if scaled >= EXPANSION_RADIUS {
            return Err(ThermoError::OutOfRegime { scaled });
        }
        Ok(())
    }

    /// `μ_F Γ(-μ_F) c0^{μ_F}`, the coefficient of `β^{μ_F}` in `Z`.
    pub fn anomalous_coefficient(&self) -> Option<f64> {
        let g = gamma(-self.mu_f).ok()?;
        Some(self.mu_f * g * self.c0.powf(self.mu_f))
    }

    /// Leading small-β approximation of `D`.
    pub fn demand_expansion(&self, beta: f64) -> Result<f64, ThermoError> {
        self.check_regime(beta)?;
        if beta == 0.0 {
            return Ok(self.mean0);
        }
        let m = self.mean0;
        Ok(match self.expansion_branch() {
            ExpansionBranch::Analytic => m - (self.m2.expect("μ_F > 2") - m * m) * beta,
            ExpansionBranch::Logarithmic => {
                m + 2.0 * self.c0 * self.c0 * beta * (self.c0 * beta).ln()
            }
            ExpansionBranch::Anomalous => {
                let a = self.anomalous_coefficient().ok_or_else(|| {
                    ThermoError::InvalidModel(format!("Γ(-{}) undefined", self.mu_f))
                })?;
                m - self.mu_f * a * beta.powf(self.mu_f - 1.0)
            }
        })
    }

    /// Leading small-β approximation of `Z`.
    pub fn partition_expansion(&self, beta: f64) -> Result<f64, ThermoError> {
        self.check_regime(beta)?;
        if beta == 0.0 {
            return Ok(1.0);
        }
        let base = 1.0 - self.mean0 * beta;
        Ok(match self.expansion_branch() {
            ExpansionBranch::Analytic => base + 0.5 * self.m2.expect("μ_F > 2") * beta * beta,
            ExpansionBranch::Logarithmic => {
                let x = self.c0 * beta;
                base - x * x * x.ln()
            }
            ExpansionBranch::Anomalous => {
                let a = self.anomalous_coefficient().ok_or_else(|| {
                    ThermoError::InvalidModel(format!("Γ(-{}) undefined", self.mu_f))
                })?;
                base + a * beta.powf(self.mu_f)
            }
        })
    }

    /// Checks that `D` falls with β and that `dD/dT` from a finite
    /// difference matches `β² Var_β` at every grid point.
    pub fn check_monotonicity(&self, beta_grid: &[f64]) -> Result<MonotonicityReport, ThermoError> {
        for w in beta_grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(ThermoError::InvalidModel(
                    "β grid must be strictly increasing".into(),
                ));
            }
        }
        let mut points = Vec::with_capacity(beta_grid.len());
        let mut prev: Option<f64> = None;
        for &beta in beta_grid {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(ThermoError::InvalidBeta(beta));
            }
            let d = self.demand(beta)?;
            let h = 1e-3 * beta;
            let slope = (self.demand(beta + h)? - self.demand(beta - h)?) / (2.0 * h);
            let dd_dt_fd = -beta * beta * slope;
            let dd_dt_var = beta * beta * self.variance(beta)?;
            let scale = dd_dt_fd.abs().max(dd_dt_var.abs());
            let floor = 1e-8 * beta * d * (1.0 + beta * d);
            let abs_err = (dd_dt_fd - dd_dt_var).abs();
            let agree = abs_err <= MONOTONICITY_REL_TOL * scale + floor;
            let monotone = prev.is_none_or(|p| d <= p) && dd_dt_var >= 0.0;
            prev = Some(d);
            points.push(MonotonicityPoint {
                beta,
                demand: d,
                dd_dt_finite_difference: dd_dt_fd,
                dd_dt_variance: dd_dt_var,
                relative_error: if scale > 0.0 { abs_err / scale } else { 0.0 },
                monotone,
                pass: agree && monotone,
            });
        }
        let pass = points.iter().all(|p| p.pass);
        Ok(MonotonicityReport { points, pass })
    }
}

pub const MONOTONICITY_REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityPoint {
    pub beta: f64,
    pub demand: f64,
    pub dd_dt_finite_difference: f64,
    pub dd_dt_variance: f64,
    pub relative_error: f64,
    pub monotone: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub points: Vec<MonotonicityPoint>,
    pub pass: bool,
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Least-squares slope of `ln(⟨c⟩_0 - D)` against `ln β`.
pub fn deficit_exponent(model: &ThermoModel, betas: &[f64]) -> Result<f64, ThermoError> {
    let pts: Vec<(f64, f64)> = betas
        .iter()
        .map(|&b| Ok((b.ln(), model.demand_deficit(b)?.ln())))
        .collect::<Result<_, ThermoError>>()?;
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}
