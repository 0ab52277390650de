//! Large-N limit of the TWFE event-study coefficients under the simulation
//! design, from exact Gaussian second moments.
//!
//! Every observable of a unit is an affine function of the unit's standard
//! normal draws (loadings noise, `α` noise, `v`, `u`), with an intercept that
//! depends only on treatment status. Concentrating out the unit effects by
//! per-unit time demeaning, the population normal equations average
//! `E[q_t q_t']` and `E[q_t y_t]` over the treated/control mixture. Without
//! covariates the estimator is linear in `y` with a fixed design, so the
//! result is also its exact finite-N mean.

use alloc::vec;
use alloc::vec::Vec;

use crate::montecarlo::DgpConfig;
use crate::numerics::{least_squares, Matrix};
use crate::Result;

#[derive(Debug, Clone)]
struct Affine {
    constant: f64,
    weights: Vec<f64>,
}

impl Affine {
    fn constant(c: f64, dim: usize) -> Self {
        Self { constant: c, weights: vec![0.0; dim] }
    }

    fn expect_product(&self, other: &Affine) -> f64 {
        self.constant * other.constant + self.weights.iter().zip(&other.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    fn scale_draws(&mut self, s: f64) {
        for w in self.weights.iter_mut() {
            *w *= s;
        }
    }

    fn axpy(&mut self, scale: f64, other: &Affine) {
        self.constant += scale * other.constant;
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            *w += scale * o;
        }
    }
}

/// Layout of one unit's standard normal draws.
struct Draws {
    t: usize,
}

impl Draws {
    fn dim(&self) -> usize {
        4 + 2 + 3 * self.t
    }
    fn z(&self, r: usize, j: usize) -> usize {
        r * 2 + j
    }
    fn e(&self, r: usize) -> usize {
        4 + r
    }
    fn v(&self, p: usize, j: usize) -> usize {
        6 + p * 2 + j
    }
    fn u(&self, p: usize) -> usize {
        6 + 2 * self.t + p
    }
}

/// Observables of a unit with treatment status `treated`, per period.
fn unit_series(config: &DgpConfig, treated: bool) -> (Vec<Affine>, Vec<[Affine; 2]>) {
    let t = config.n_periods;
    let layout = Draws { t };
    let dim = layout.dim();
    let d = if treated { 1.0 } else { 0.0 };
    let mut ys = Vec::with_capacity(t);
    let mut xs = Vec::with_capacity(t);
    for p in 0..t {
        let f = [1.0, (p + 1) as f64];
        let post = treated && p + 1 >= config.g_treat;
        let x: [Affine; 2] = core::array::from_fn(|j| {
            let mut a = Affine::constant(0.0, dim);
            for r in 0..2 {
                let identity = if r == j { 1.0 } else { 0.0 };
                a.constant += identity * f[r];
                a.weights[layout.z(r, j)] += f[r];
            }
            a.weights[layout.v(p, j)] += 1.0;
            a
        });
        let mut y = Affine::constant(0.0, dim);
        for j in 0..2 {
            y.axpy(config.beta[j], &x[j]);
        }
        // α_r = λ_rr + θ_r d + e_r
        for r in 0..2 {
            y.constant += f[r] * (1.0 + config.theta[r] * d);
            y.weights[layout.z(r, r)] += f[r];
            y.weights[layout.e(r)] += f[r];
        }
        for s in 0..=p {
            y.weights[layout.u(s)] += libm::pow(config.rho, (p - s) as f64);
        }
        let mut x_obs = x;
        y.scale_draws(config.noise_scale);
        for xj in x_obs.iter_mut() {
            xj.scale_draws(config.noise_scale);
        }
        if post {
            y.constant += config.delta_g;
            for (j, xj) in x_obs.iter_mut().enumerate() {
                xj.constant += config.tau_g[j];
            }
        }
        ys.push(y);
        xs.push(x_obs);
    }
    (ys, xs)
}

fn demean(series: &mut [Affine]) {
    let t = series.len() as f64;
    let dim = series[0].weights.len();
    let mut mean = Affine::constant(0.0, dim);
    for s in series.iter() {
        mean.axpy(1.0 / t, s);
    }
    for s in series.iter_mut() {
        s.axpy(-1.0, &mean);
    }
}

/// Large-N bias `plim δ̂_s - Δ_g` of each event-study coefficient,
/// `s = g..=T`.
pub fn twfe_bias_limit(config: &DgpConfig, include_covariates: bool) -> Result<Vec<f64>> {
    config.validate()?;
    let t = config.n_periods;
    let g = config.g_treat;
    let n_events = t + 1 - g;
    let n_time = t - 1;
    let n_cov = if include_covariates { 2 } else { 0 };
    let p = n_time + n_events + n_cov;
    let share_treated = config.n_treated() as f64 / config.n_units as f64;
    let dim = Draws { t }.dim();

    let mut gram = Matrix::zeros(p, p);
    let mut cross = Matrix::zeros(p, 1);
    for (treated, weight) in [(false, 1.0 - share_treated), (true, share_treated)] {
        let (mut ys, xs) = unit_series(config, treated);
        // Regressor columns per period: time dummies 2..=T, event dummies, covariates.
        let mut cols: Vec<Vec<Affine>> = Vec::with_capacity(p);
        for q in 1..t {
            cols.push((0..t).map(|s| Affine::constant(if s == q { 1.0 } else { 0.0 }, dim)).collect());
        }
        for e in 0..n_events {
            let period = g - 1 + e;
            cols.push(
                (0..t).map(|s| Affine::constant(if treated && s == period { 1.0 } else { 0.0 }, dim)).collect(),
            );
        }
        for j in 0..n_cov {
            cols.push(xs.iter().map(|x| x[j].clone()).collect());
        }
        demean(&mut ys);
        for c in cols.iter_mut() {
            demean(c);
        }
        for a in 0..p {
            for s in 0..t {
                cross[(a, 0)] += weight * cols[a][s].expect_product(&ys[s]);
            }
            for b in 0..p {
                for s in 0..t {
                    gram[(a, b)] += weight * cols[a][s].expect_product(&cols[b][s]);
                }
            }
        }
    }
    let coef = least_squares(&gram, &cross)?;
    Ok((0..n_events).map(|e| coef[(n_time + e, 0)] - config.delta_g).collect())
}
