//! Derivative-free Nelder–Mead simplex minimisation.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Stop when `|f_worst - f_best| <= f_rel_tol * |f_best|`.
    pub f_rel_tol: f64,
    /// Stop when the largest vertex distance from the best vertex drops below this.
    pub x_tol: f64,
    pub max_iter: usize,
    /// Edge length of the initial axis-aligned simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            f_rel_tol: 1e-8,
            x_tol: 1e-9,
            max_iter: 2000,
            initial_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimises `f` starting from `x0`. Non-finite function values are treated
/// as `+inf`, so infeasible regions simply repel the simplex.
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n >= 1);
    let mut evaluations = 0usize;
    let eval = |x: &[f64], count: &mut usize| -> f64 {
        *count += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evaluations)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x, &mut evaluations);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    while iterations < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = (worst - best).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (best.is_finite() && spread <= opts.f_rel_tol * best.abs()) || diameter < opts.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |coef: f64, out: &mut Vec<f64>, worst_x: &[f64]| {
            for ((o, c), w) in out.iter_mut().zip(&centroid).zip(worst_x) {
                *o = c + coef * (c - w);
            }
        };

        let worst_x = simplex[n].0.clone();
        along(REFLECT, &mut trial, &worst_x);
        let f_reflect = eval(&trial, &mut evaluations);
        if f_reflect < simplex[0].1 {
            let reflected = trial.clone();
            along(EXPAND, &mut trial, &worst_x);
            let f_expand = eval(&trial, &mut evaluations);
            simplex[n] = if f_expand < f_reflect {
                (trial.clone(), f_expand)
            } else {
                (reflected, f_reflect)
            };
            continue;
        }
        if f_reflect < simplex[n - 1].1 {
            simplex[n] = (trial.clone(), f_reflect);
            continue;
        }
        let (coef, reference) = if f_reflect < simplex[n].1 {
            (CONTRACT, f_reflect) // outside contraction
        } else {
            (-CONTRACT, simplex[n].1) // inside contraction
        };
        along(coef, &mut trial, &worst_x);
        let f_contract = eval(&trial, &mut evaluations);
        if f_contract < reference {
            simplex[n] = (trial.clone(), f_contract);
            continue;
        }
        let best_x = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best_x) {
                *xi = bi + SHRINK * (*xi - bi);
            }
            *v = eval(x, &mut evaluations);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        evaluations,
        converged,
    }
}
