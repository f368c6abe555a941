//! Pareto-index algebra of the superstatistical allocation.
//!
//! With a temperature weight `f_β ∝ β^{-γ}` the worker tail index is
//! `μ_W = μ_F - γ + 1`. The demand distribution near its ceiling behaves as
//! `(⟨c⟩_0 - D)^{-δ}` and the demand index is `κ = 1/(2 - δ)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{integrate_with_breaks, QuadOptions};
use crate::specfun::ln_gamma_unchecked;

/// `|μ_F - 1|` below which the index map collapses onto its fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SuperstatError {
    #[error("μ_W = {mu_w} ≤ μ_F = {mu_f}: no positive-temperature weight reproduces it")]
    Regime { mu_f: f64, mu_w: f64 },
    #[error("{name} = {value} out of domain: {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
}

fn domain(name: &'static str, value: f64, expected: &'static str) -> SuperstatError {
    SuperstatError::Domain {
        name,
        value,
        expected,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SectorClass {
    Manufacturing,
    Nonmanufacturing,
    All,
}

impl SectorClass {
    pub fn code(self) -> &'static str {
        match self {
            SectorClass::Manufacturing => "M",
            SectorClass::Nonmanufacturing => "N",
            SectorClass::All => "all",
        }
    }

    /// Whether a record of class `other` belongs to this slice.
    pub fn contains(self, other: SectorClass) -> bool {
        self == SectorClass::All || self == other
    }
}

impl fmt::Display for SectorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown sector class {0:?}; expected M, N or all")]
pub struct ParseSectorClassError(pub String);

impl FromStr for SectorClass {
    type Err = ParseSectorClassError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "M" | "m" | "Manufacturing" | "manufacturing" => Ok(SectorClass::Manufacturing),
            "N" | "n" | "Nonmanufacturing" | "nonmanufacturing" => {
                Ok(SectorClass::Nonmanufacturing)
            }
            "all" | "All" | "ALL" => Ok(SectorClass::All),
            other => Err(ParseSectorClassError(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoIndices {
    pub mu_f: f64,
    pub mu_w: f64,
    pub mu_f_stderr: f64,
    pub mu_w_stderr: f64,
    pub year: i32,
    pub sector_class: SectorClass,
}

impl ParetoIndices {
    /// Indices without uncertainties.
    pub fn exact(mu_f: f64, mu_w: f64) -> Self {
        Self {
            mu_f,
            mu_w,
            mu_f_stderr: 0.0,
            mu_w_stderr: 0.0,
            year: 0,
            sector_class: SectorClass::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Superstatistical,
    FixedPointDegenerate,
    NegativeTemperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandIndexPoint {
    pub gamma: f64,
    pub delta: Option<f64>,
    pub kappa: Option<f64>,
    pub kappa_stderr: Option<f64>,
    pub regime: Regime,
    pub year: i32,
    pub sector_class: SectorClass,
}

/// `γ = μ_F - μ_W + 1`.
pub fn gamma_from_mus(p: &ParetoIndices) -> Result<f64, SuperstatError> {
    if p.mu_w <= p.mu_f {
        return Err(SuperstatError::Regime {
            mu_f: p.mu_f,
            mu_w: p.mu_w,
        });
    }
    Ok(p.mu_f - p.mu_w + 1.0)
}

/// `δ = γ` for `μ_F ≥ 2`, `δ = 1 + (γ - 1)/(μ_F - 1)` for `1 < μ_F < 2`.
pub fn delta_from_gamma(gamma: f64, mu_f: f64) -> Result<f64, SuperstatError> {
    if !(gamma < 1.0) {
        return Err(domain("gamma", gamma, "γ < 1"));
    }
    if !(mu_f > 1.0) {
        return Err(domain("mu_f", mu_f, "μ_F > 1"));
    }
    Ok(if mu_f >= 2.0 {
        gamma
    } else {
        1.0 + (gamma - 1.0) / (mu_f - 1.0)
    })
}

/// `κ = 1/(2 - δ)`.
pub fn kappa_of_delta(delta: f64) -> f64 {
    1.0 / (2.0 - delta)
}

/// Predicted worker index for given `μ_F` and `δ`.
pub fn mu_w_predicted(mu_f: f64, delta: f64) -> Result<f64, SuperstatError> {
    if !(mu_f > 1.0) {
        return Err(domain("mu_f", mu_f, "μ_F > 1"));
    }
    if !(delta < 1.0) {
        return Err(domain("delta", delta, "δ < 1"));
    }
    Ok(if mu_f >= 2.0 {
        mu_f - delta + 1.0
    } else {
        (mu_f - 1.0) * (1.0 - delta) + mu_f
    })
}

/// Classifies the cell and computes `(γ, δ, κ)` with a delta-method error on `κ`.
pub fn kappa_from_mus(p: &ParetoIndices) -> Result<DemandIndexPoint, SuperstatError> {
    if !(p.mu_f > 1.0 - FIXED_POINT_TOL) || !p.mu_w.is_finite() {
        return Err(domain("mu_f", p.mu_f, "μ_F > 1"));
    }
    let gamma = p.mu_f - p.mu_w + 1.0;
    let point = |regime, delta, kappa, kappa_stderr| DemandIndexPoint {
        gamma,
        delta,
        kappa,
        kappa_stderr,
        regime,
        year: p.year,
        sector_class: p.sector_class,
    };
    if p.mu_w <= p.mu_f {
        return Ok(point(Regime::NegativeTemperature, None, None, None));
    }
    if (p.mu_f - 1.0).abs() < FIXED_POINT_TOL {
        return Ok(point(Regime::FixedPointDegenerate, None, None, None));
    }
    let delta = delta_from_gamma(gamma, p.mu_f)?;
    let (kappa, dk_df, dk_dw) = if p.mu_f >= 2.0 {
        let k = 1.0 / (p.mu_w - p.mu_f + 1.0);
        (k, k * k, -k * k)
    } else {
        let k = (p.mu_f - 1.0) / (p.mu_w - 1.0);
        (k, 1.0 / (p.mu_w - 1.0), -k / (p.mu_w - 1.0))
    };
    let se = ((dk_df * p.mu_f_stderr).powi(2) + (dk_dw * p.mu_w_stderr).powi(2)).sqrt();
    Ok(point(
        Regime::Superstatistical,
        Some(delta),
        Some(kappa),
        Some(se),
    ))
}

/// Temperature weight `f_β ∝ β^{-γ}` truncated to `[β_min, β_max]`.
///
/// `β_min == β_max` is accepted as a point mass at that temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBetaWeight", into = "RawBetaWeight")]
pub struct BetaWeight {
    gamma: f64,
    beta_min: f64,
    beta_max: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBetaWeight {
    gamma: f64,
    beta_min: f64,
    beta_max: f64,
}

impl TryFrom<RawBetaWeight> for BetaWeight {
    type Error = SuperstatError;
    fn try_from(r: RawBetaWeight) -> Result<Self, Self::Error> {
        BetaWeight::new(r.gamma, r.beta_min, r.beta_max)
    }
}

impl From<BetaWeight> for RawBetaWeight {
    fn from(w: BetaWeight) -> Self {
        RawBetaWeight {
            gamma: w.gamma,
            beta_min: w.beta_min,
            beta_max: w.beta_max,
        }
    }
}

impl BetaWeight {
    pub fn new(gamma: f64, beta_min: f64, beta_max: f64) -> Result<Self, SuperstatError> {
        if !(gamma < 1.0 && gamma.is_finite()) {
            return Err(domain("gamma", gamma, "finite γ < 1"));
        }
        if !(beta_min > 0.0 && beta_min.is_finite()) {
            return Err(domain("beta_min", beta_min, "finite β_min > 0"));
        }
        if !(beta_max >= beta_min && beta_max.is_finite()) {
            return Err(domain("beta_max", beta_max, "finite β_max ≥ β_min"));
        }
        Ok(Self {
            gamma,
            beta_min,
            beta_max,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }
    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    pub fn is_point_mass(&self) -> bool {
        self.beta_min == self.beta_max
    }

    fn s_exponent(&self) -> f64 {
        1.0 - self.gamma
    }

    /// `∫ β^{-γ} dβ` over the support.
    pub fn normalizer(&self) -> f64 {
        let s = self.s_exponent();
        (self.beta_max.powf(s) - self.beta_min.powf(s)) / s
    }

    /// Inverse cdf: `β^{1-γ}` is uniform between the endpoint values.
    pub fn quantile(&self, u: f64) -> f64 {
        if self.is_point_mass() {
            return self.beta_min;
        }
        let s = self.s_exponent();
        let (s0, s1) = (self.beta_min.powf(s), self.beta_max.powf(s));
        (s0 + u * (s1 - s0))
            .powf(1.0 / s)
            .clamp(self.beta_min, self.beta_max)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        use rand::RngExt;
        self.quantile(rng.random::<f64>())
    }

    /// `B(c) = ∫ e^{-βc} f_β(β) dβ` with the normalized weight.
    pub fn b_factor(&self, c: f64) -> f64 {
        if self.is_point_mass() {
            return (-self.beta_min * c).exp();
        }
        // over t = ln β: ∫ e^{-βc} β^{1-γ} dt, split where βc crosses 1
        let (t0, t1) = (self.beta_min.ln(), self.beta_max.ln());
        let mut breaks = vec![t0];
        if c > 0.0 {
            for k in [-3.0f64, 0.0, 3.0] {
                let t = k - c.ln();
                if t > t0 && t < t1 {
                    breaks.push(t);
                }
            }
        }
        breaks.push(t1);
        let s = self.s_exponent();
        let f = |t: f64| {
            let beta = t.exp();
            (s * t - beta * c).exp()
        };
        integrate_with_breaks(f, &breaks, QuadOptions::rel(1e-11)).value / self.normalizer()
    }

    /// Scaling-window asymptote `Γ(1-γ) c^{γ-1} / normalizer` of `B(c)`.
    pub fn b_factor_asymptote(&self, c: f64) -> f64 {
        let s = self.s_exponent();
        (ln_gamma_unchecked(s) - s * c.ln()).exp() / self.normalizer()
    }
}
