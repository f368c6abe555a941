//! Weighted maximum-likelihood fitting.
//!
//! The search runs over `u = (ln μ, ln ν, ln q, ln c1)`. Each start is driven
//! by Nelder–Mead and then polished by Newton steps on the analytic Hessian.
//! Bootstrap replicates restart Newton from the full-sample optimum.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Gb2Params;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::ranksize::{ranksize, tail_index, weighted_median};
use crate::specfun::{digamma, ln_beta_unchecked, sigmoid, softplus, trigamma};

pub const MIN_OBSERVATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub c: f64,
    pub w: f64,
}

impl Observation {
    pub fn unweighted(c: f64) -> Self {
        Self { c, w: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Single starting point; five heuristic starts are used when absent.
    pub init: Option<Gb2Params>,
    /// 0 falls back to the sandwich standard error.
    pub bootstrap_replicates: usize,
    pub seed: u64,
    pub max_iter_per_start: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            init: None,
            bootstrap_replicates: 200,
            seed: 0,
            max_iter_per_start: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Gb2Params,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub total_weight: f64,
    pub mu_stderr: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// Bootstrap replicates that produced a usable estimate.
    pub bootstrap_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("insufficient data: {got} observations, need at least {min}")]
    InsufficientData { got: usize, min: usize },
    #[error("observation {index} is invalid (c = {c}, w = {w}); need finite c > 0 and w > 0")]
    InvalidObservation { index: usize, c: f64, w: f64 },
}

const PARAM_BOUND: f64 = 1e6;

pub(crate) struct Likelihood {
    lnc: Vec<f64>,
    w: Vec<f64>,
    total_w: f64,
    sum_w_lnc: f64,
}

fn unpack(u: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let (mu, nu, q) = (u[0].exp(), u[1].exp(), u[2].exp());
    let ok = |v: f64| v.is_finite() && (1.0 / PARAM_BOUND..=PARAM_BOUND).contains(&v);
    (ok(mu) && ok(nu) && ok(q) && u[3].is_finite()).then_some((mu, nu, q, u[3]))
}

type Grad = [f64; 4];
type Hess = [[f64; 4]; 4];

impl Likelihood {
    pub(crate) fn new(lnc: Vec<f64>, w: Vec<f64>) -> Self {
        let total_w = w.iter().sum();
        let sum_w_lnc = lnc.iter().zip(&w).map(|(l, w)| l * w).sum();
        Self {
            lnc,
            w,
            total_w,
            sum_w_lnc,
        }
    }

    fn from_obs(data: &[Observation]) -> Self {
        Self::new(
            data.iter().map(|o| o.c.ln()).collect(),
            data.iter().map(|o| o.w).collect(),
        )
    }

    /// Weighted log-likelihood at `u`; `-inf` outside the admissible box.
    pub(crate) fn value(&self, u: &[f64]) -> f64 {
        let Some((mu, nu, q, m)) = unpack(u) else {
            return f64::NEG_INFINITY;
        };
        let a_sum = (mu + nu) / q;
        let s: f64 = self
            .lnc
            .iter()
            .zip(&self.w)
            .map(|(&l, &w)| {
                let x = l - m;
                w * (nu * x - a_sum * softplus(q * x))
            })
            .sum();
        self.total_w * (q.ln() - ln_beta_unchecked(mu / q, nu / q)) - self.sum_w_lnc + s
    }

    /// Value, gradient and Hessian with respect to `u`.
    pub(crate) fn derivatives(&self, u: &[f64]) -> Option<(f64, Grad, Hess)> {
        let (mu, nu, q, m) = unpack(u)?;
        let (a, b) = (mu / q, nu / q);
        let sum = mu + nu;
        let (mut x_s, mut s_m, mut s_g, mut xs, mut v, mut xv, mut xxv) =
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (&l, &w) in self.lnc.iter().zip(&self.w) {
            let x = l - m;
            let t = q * x;
            let sp = softplus(t);
            let sg = sigmoid(t);
            let var = sg * (1.0 - sg);
            x_s += w * x;
            s_m += w * sp;
            s_g += w * sg;
            xs += w * x * sg;
            v += w * var;
            xv += w * x * var;
            xxv += w * x * x * var;
        }
        let wt = self.total_w;
        let ll =
            wt * (q.ln() - ln_beta_unchecked(a, b)) - self.sum_w_lnc + nu * x_s - sum / q * s_m;

        let psi_ab = digamma(a + b);
        let pa = digamma(a) - psi_ab;
        let pb = digamma(b) - psi_ab;
        let tab = -trigamma(a + b);
        let taa = trigamma(a) + tab;
        let tbb = trigamma(b) + tab;
        let h = a * pa + b * pb;
        let qq = a * a * taa + 2.0 * a * b * tab + b * b * tbb;
        let q2 = q * q;

        // natural parameters (μ, ν, q, m = ln c1)
        let g = [
            -wt * pa / q - s_m / q,
            -wt * pb / q + x_s - s_m / q,
            wt / q + wt * h / q + sum * s_m / q2 - sum * xs / q,
            -wt * nu + sum * s_g,
        ];
        let mut hm = [[0.0; 4]; 4];
        hm[0][0] = -wt * taa / q2;
        hm[0][1] = -wt * tab / q2;
        hm[1][1] = -wt * tbb / q2;
        hm[0][2] = wt * (a * taa + b * tab) / q2 + wt * pa / q2 - xs / q + s_m / q2;
        hm[1][2] = wt * (a * tab + b * tbb) / q2 + wt * pb / q2 - xs / q + s_m / q2;
        hm[0][3] = s_g;
        hm[1][3] = -wt + s_g;
        hm[2][2] = -wt / q2 - wt * (2.0 * h + qq) / q2 + 2.0 * sum * xs / q2
            - 2.0 * sum * s_m / (q2 * q)
            - sum * xxv / q;
        hm[2][3] = sum * xv;
        hm[3][3] = -sum * q * v;
        for i in 0..4 {
            for j in 0..i {
                hm[i][j] = hm[j][i];
            }
        }

        // chain rule to log parameters
        let d = [mu, nu, q, 1.0];
        let mut gu = [0.0; 4];
        let mut hu = [[0.0; 4]; 4];
        for i in 0..4 {
            gu[i] = d[i] * g[i];
            for j in 0..4 {
                hu[i][j] = d[i] * d[j] * hm[i][j];
            }
            if i < 3 {
                hu[i][i] += d[i] * g[i];
            }
        }
        Some((ll, gu, hu))
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
fn cholesky_solve(a: &Hess, b: &Grad) -> Option<Grad> {
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = [0.0; 4];
    for i in 0..4 {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        x[i] = (y[i] - (i + 1..4).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

struct Polished {
    u: Vec<f64>,
    ll: f64,
    converged: bool,
    iterations: usize,
}

/// Damped Newton ascent; stops when the Newton decrement is negligible.
fn newton(lik: &Likelihood, u0: &[f64], max_iter: usize) -> Polished {
    let mut u = u0.to_vec();
    let mut ll = lik.value(&u);
    for it in 0..max_iter {
        let Some((val, g, h)) = lik.derivatives(&u) else {
            break;
        };
        ll = val;
        let mut neg = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                neg[i][j] = -h[i][j];
            }
        }
        let scale = (0..4)
            .map(|i| neg[i][i].abs())
            .fold(0.0, f64::max)
            .max(1e-300);
        let mut lambda = 0.0;
        let step = loop {
            let mut damped = neg;
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] += lambda;
            }
            if let Some(s) = cholesky_solve(&damped, &g) {
                break Some(s);
            }
            lambda = if lambda == 0.0 {
                1e-10 * scale
            } else {
                lambda * 10.0
            };
            if lambda > 1e10 * scale {
                break None;
            }
        };
        let Some(step) = step else { break };
        let decrement: f64 = step.iter().zip(&g).map(|(s, g)| s * g).sum();
        if decrement <= 1e-10 * ll.abs().max(1.0) {
            return Polished {
                u,
                ll,
                converged: true,
                iterations: it,
            };
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(x, s)| x + t * s).collect();
            let v = lik.value(&trial);
            if v >= ll + 1e-4 * t * decrement {
                u = trial;
                ll = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no ascent along the Newton direction: already at the optimum
            // to working precision, or the model is locally degenerate
            let converged = decrement <= 1e-6 * ll.abs().max(1.0);
            return Polished {
                u,
                ll,
                converged,
                iterations: it + 1,
            };
        }
    }
    Polished {
        u,
        ll,
        converged: false,
        iterations: max_iter,
    }
}

fn to_u(p: &Gb2Params) -> Vec<f64> {
    vec![p.mu().ln(), p.nu().ln(), p.q().ln(), p.c1().ln()]
}

fn from_u(u: &[f64]) -> Gb2Params {
    Gb2Params::new(u[0].exp(), u[1].exp(), u[2].exp(), u[3].exp())
        .expect("optimizer stays inside the admissible box")
}

/// Five deterministic starts: median scale, unit shapes, tail index from the
/// top decile of the rank-size curve, plus four perturbations.
fn default_starts(data: &[Observation]) -> Vec<Vec<f64>> {
    let c: Vec<f64> = data.iter().map(|o| o.c).collect();
    let w: Vec<f64> = data.iter().map(|o| o.w).collect();
    let med = weighted_median(&c, &w);
    let mu0 = tail_index(&ranksize(&c, Some(&w)), 0.1)
        .filter(|m| m.is_finite())
        .unwrap_or(1.5)
        .clamp(0.3, 10.0);
    let (l_mu, l_med) = (mu0.ln(), med.ln());
    let r = 1.5f64.ln();
    vec![
        vec![l_mu, 0.0, 0.0, l_med],
        vec![l_mu + r, 2f64.ln(), 2f64.ln(), l_med],
        vec![l_mu - r, 0.5f64.ln(), 0.5f64.ln(), l_med],
        vec![l_mu, 3f64.ln(), 3f64.ln(), l_med],
        vec![l_mu, 0.0, 0.0, l_med + 2f64.ln()],
    ]
}

fn validate(data: &[Observation]) -> Result<(), FitError> {
    if data.len() < MIN_OBSERVATIONS {
        return Err(FitError::InsufficientData {
            got: data.len(),
            min: MIN_OBSERVATIONS,
        });
    }
    for (index, o) in data.iter().enumerate() {
        if !(o.c.is_finite() && o.c > 0.0 && o.w.is_finite() && o.w > 0.0) {
            return Err(FitError::InvalidObservation {
                index,
                c: o.c,
                w: o.w,
            });
        }
    }
    Ok(())
}

/// Log-likelihood `Σ w ln p(c)` of `data` under `params`.
pub fn log_likelihood(params: &Gb2Params, data: &[Observation]) -> f64 {
    data.iter().map(|o| o.w * params.ln_pdf(o.c)).sum()
}

struct Search {
    u: Vec<f64>,
    ll: f64,
    converged: bool,
    iterations: usize,
}

fn search_from(lik: &Likelihood, start: &[f64], max_iter: usize) -> Search {
    let opts = NelderMeadOptions {
        max_iter,
        ..Default::default()
    };
    let nm = nelder_mead(|u| -lik.value(u), start, &opts);
    let polished = newton(lik, &nm.x, 50);
    let better = polished.ll >= -nm.value;
    Search {
        u: if better { polished.u } else { nm.x },
        ll: if better { polished.ll } else { -nm.value },
        converged: nm.converged || polished.converged,
        iterations: nm.iterations + polished.iterations,
    }
}

/// Sandwich standard error of `μ`, treating each observation as one sampling
/// unit whatever its weight.
fn sandwich_stderr(lik: &Likelihood, u: &[f64]) -> Option<f64> {
    let (mu, nu, q, m) = unpack(u)?;
    let (_, _, h) = lik.derivatives(u)?;
    let mut neg = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            neg[i][j] = -h[i][j];
        }
    }
    let col = cholesky_solve(&neg, &[1.0, 0.0, 0.0, 0.0])?;
    let (a, b) = (mu / q, nu / q);
    let psi_ab = digamma(a + b);
    let pa = digamma(a) - psi_ab;
    let pb = digamma(b) - psi_ab;
    let hh = a * pa + b * pb;
    let sum = mu + nu;
    let var: f64 = lik
        .lnc
        .iter()
        .zip(&lik.w)
        .map(|(&l, &w)| {
            let x = l - m;
            let sp = softplus(q * x);
            let sg = sigmoid(q * x);
            // unit score in u-space
            let s = [
                mu * (-pa / q - sp / q),
                nu * (-pb / q + x - sp / q),
                q * (1.0 / q + hh / q + sum * sp / (q * q) - sum * x * sg / q),
                -nu + sum * sg,
            ];
            let proj: f64 = s.iter().zip(&col).map(|(s, c)| s * c).sum();
            (w * proj).powi(2)
        })
        .sum();
    // Var(μ) = μ² Var(ln μ)
    let se = mu * var.sqrt();
    se.is_finite().then_some(se)
}

fn bootstrap_mu(
    lik: &Likelihood,
    u_hat: &[f64],
    replicate: usize,
    seed: u64,
    max_iter: usize,
) -> Option<f64> {
    let n = lik.lnc.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 + 1);
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    let (lnc, w): (Vec<f64>, Vec<f64>) = counts
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(i, &k)| (lik.lnc[i], lik.w[i] * k as f64))
        .unzip();
    let boot = Likelihood::new(lnc, w);
    let mut fit = newton(&boot, u_hat, 50);
    if !fit.converged {
        let s = search_from(&boot, u_hat, max_iter);
        fit = Polished {
            u: s.u,
            ll: s.ll,
            converged: s.converged,
            iterations: s.iterations,
        };
    }
    let mu = fit.u[0].exp();
    (fit.converged && mu.is_finite()).then_some(mu)
}

/// Maximizes `Σ w_i ln p(c_i)`.
///
/// A run whose best start hit the iteration cap is still returned with
/// `converged = false`.
pub fn fit_mle(data: &[Observation], opts: &FitOptions) -> Result<FitResult, FitError> {
    validate(data)?;
    let lik = Likelihood::from_obs(data);
    let starts = match opts.init {
        Some(p) => vec![to_u(&p)],
        None => default_starts(data),
    };
    let searches: Vec<Search> = starts
        .par_iter()
        .map(|s| search_from(&lik, s, opts.max_iter_per_start))
        .collect();
    let n_iterations = searches.iter().map(|s| s.iterations).sum();
    let best = searches
        .into_iter()
        .max_by(|a, b| a.ll.total_cmp(&b.ll))
        .expect("at least one start");

    let boot: Vec<f64> = (0..opts.bootstrap_replicates)
        .into_par_iter()
        .map(|r| bootstrap_mu(&lik, &best.u, r, opts.seed, opts.max_iter_per_start))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mu_stderr = if boot.len() >= 2 {
        let mean = boot.iter().sum::<f64>() / boot.len() as f64;
        (boot.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (boot.len() - 1) as f64).sqrt()
    } else {
        sandwich_stderr(&lik, &best.u).unwrap_or(f64::NAN)
    };

    Ok(FitResult {
        params: from_u(&best.u),
        log_likelihood: best.ll,
        n_obs: data.len(),
        total_weight: lik.total_w,
        mu_stderr,
        converged: best.converged && best.ll.is_finite(),
        n_iterations,
        bootstrap_replicates: boot.len(),
    })
}
