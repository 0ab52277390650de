//! Straight-line evaluation of the estimator formulas with explicit
//! normal-equation inverses. Shares no code with the library's QR/SVD path.

#![allow(dead_code)]

use nalgebra::DMatrix;

pub struct OracleCell {
    pub period: usize,
    pub delta: f64,
    pub tau: f64,
    pub indirect: f64,
    pub eta: f64,
    pub var_delta: f64,
    pub var_tau: f64,
    pub var_indirect: f64,
    pub var_eta: f64,
}

pub struct OracleResult {
    pub beta: f64,
    pub a: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub cells: Vec<OracleCell>,
}

/// One covariate, one treated group starting at `g`. `y[i][t]`, `x[i][t]`
/// with 0-based t; `treated[i]` marks the group members.
pub fn straight_line(y: &[Vec<f64>], x: &[Vec<f64>], treated: &[bool], g: usize) -> OracleResult {
    let n = y.len();
    let t = y[0].len();
    let controls: Vec<usize> = (0..n).filter(|&i| !treated[i]).collect();
    let members: Vec<usize> = (0..n).filter(|&i| treated[i]).collect();
    let nc = controls.len() as f64;

    // f̂_t = mean over controls of (y, x)
    let mut fhat = DMatrix::<f64>::zeros(t, 2);
    for p in 0..t {
        fhat[(p, 0)] = controls.iter().map(|&i| y[i][p]).sum::<f64>() / nc;
        fhat[(p, 1)] = controls.iter().map(|&i| x[i][p]).sum::<f64>() / nc;
    }
    let l = g - 1;
    let f = fhat.rows(0, l).into_owned();
    let ftf_inv = (f.transpose() * &f).try_inverse().expect("F'F invertible");
    let mf = DMatrix::<f64>::identity(l, l) - &f * &ftf_inv * f.transpose();

    let col = |v: &Vec<f64>| DMatrix::from_fn(l, 1, |r, _| v[r]);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        let xi = col(&x[i]);
        let yi = col(&y[i]);
        sxx += (xi.transpose() * &mf * &xi)[(0, 0)];
        sxy += (xi.transpose() * &mf * &yi)[(0, 0)];
    }
    let beta = sxy / sxx;

    let mut a = Vec::new();
    let mut lambda = Vec::new();
    for i in 0..n {
        let xi = col(&x[i]);
        let yi = col(&y[i]);
        let ai = &ftf_inv * f.transpose() * (&yi - &xi * beta);
        let li = &ftf_inv * f.transpose() * &xi;
        a.push(vec![ai[0], ai[1]]);
        lambda.push(vec![li[0], li[1]]);
    }

    let mut cells = Vec::new();
    let ng = members.len() as f64;
    for p in (g - 1)..t {
        let mut d_i = Vec::new();
        let mut tau_i = Vec::new();
        for &i in &members {
            let xhat = fhat[(p, 0)] * lambda[i][0] + fhat[(p, 1)] * lambda[i][1];
            let yhat = beta * xhat + fhat[(p, 0)] * a[i][0] + fhat[(p, 1)] * a[i][1];
            d_i.push(y[i][p] - yhat);
            tau_i.push(x[i][p] - xhat);
        }
        let eta_i: Vec<f64> = d_i.iter().zip(&tau_i).map(|(d, tu)| d - tu * beta).collect();
        let delta = d_i.iter().sum::<f64>() / ng;
        let tau = tau_i.iter().sum::<f64>() / ng;
        let indirect = tau * beta;
        let eta = delta - indirect;
        let var = |v: &[f64], c: f64| v.iter().map(|z| (z - c) * (z - c)).sum::<f64>() / (ng - 1.0);
        let var_tau = var(&tau_i, tau);
        cells.push(OracleCell {
            period: p + 1,
            delta,
            tau,
            indirect,
            eta,
            var_delta: var(&d_i, delta),
            var_tau,
            var_indirect: beta * var_tau * beta,
            var_eta: var(&eta_i, eta),
        });
    }
    OracleResult { beta, a, lambda, cells }
}

/// Deterministic fixture: N=6 (units 0..3 never treated), T=5, m=1, g=4.
pub fn tiny_fixture(seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<bool>) {
    let mut s = seed;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let (n, t) = (6, 5);
    let mut y = vec![vec![0.0; t]; n];
    let mut x = vec![vec![0.0; t]; n];
    for i in 0..n {
        let (l0, l1, a0, a1) = (1.0 + next(), next(), next(), 1.0 + next());
        for p in 0..t {
            let trend = (p + 1) as f64;
            x[i][p] = l0 + l1 * trend + 0.5 * next();
            y[i][p] = 0.8 * x[i][p] + a0 + a1 * trend + 0.5 * next();
            if i >= 3 && p + 1 >= 4 {
                y[i][p] += 1.5;
                x[i][p] += 0.4;
            }
        }
    }
    let treated = (0..n).map(|i| i >= 3).collect();
    (y, x, treated)
}
