use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::montecarlo::DgpConfig;
use crate::numerics::Matrix;
use crate::panel::{GroupLabel, PanelDataset};
use crate::Result;

/// Population effects of the simulated treatment.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Truth {
    pub total: f64,
    pub indirect: f64,
    pub direct: f64,
}

/// A generated panel together with the untreated potential values.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub data: PanelDataset,
    pub y_untreated: Matrix,
    pub x_untreated: Vec<Matrix>,
    pub truth: Truth,
}

/// Generator for replication `rep` of a study seeded with `seed`.
///
/// Each replication owns a ChaCha20 stream of the seed, so draws do not
/// depend on which thread runs it or in what order.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn normal<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    scale * rng.sample::<f64, _>(StandardNormal)
}

/// Draws one panel.
///
/// Factors are `f_t = (1, t)'`. Per unit: `λ_i = I_2 + Z_i`,
/// `x_{i,t}(∞) = λ_i' f_t + v_{i,t}`, `α_i = diag(λ_i) + θ d_i + e_i`,
/// `ε_{i,t} = ρ ε_{i,t-1} + u_{i,t}` from `ε_{i,0} = 0`, and
/// `y_{i,t}(∞) = β' x_{i,t}(∞) + α_i' f_t + ε_{i,t}`. Treated units add
/// `Δ_g` to the outcome and `τ_g` to the covariates from `g` on.
pub fn generate<R: Rng + ?Sized>(config: &DgpConfig, rng: &mut R) -> Result<SimulatedPanel> {
    config.validate()?;
    let n = config.n_units;
    let t = config.n_periods;
    let g = config.g_treat;
    let scale = config.noise_scale;

    let mut treated = vec![false; n];
    for i in sample(rng, n, config.n_treated()).into_iter() {
        treated[i] = true;
    }

    let mut y0 = Matrix::zeros(n, t);
    let mut x0 = vec![Matrix::zeros(n, t); 2];
    for i in 0..n {
        let d = if treated[i] { 1.0 } else { 0.0 };
        // λ_i[r][j]: loading of covariate j on factor r.
        let mut lambda = [[1.0, 0.0], [0.0, 1.0]];
        for row in lambda.iter_mut() {
            for entry in row.iter_mut() {
                *entry += normal(rng, scale);
            }
        }
        let alpha = [
            lambda[0][0] + config.theta[0] * d + normal(rng, scale),
            lambda[1][1] + config.theta[1] * d + normal(rng, scale),
        ];
        let mut eps = 0.0;
        for p in 0..t {
            let f = [1.0, (p + 1) as f64];
            let mut y = alpha[0] * f[0] + alpha[1] * f[1];
            for j in 0..2 {
                let x = lambda[0][j] * f[0] + lambda[1][j] * f[1] + normal(rng, scale);
                x0[j][(i, p)] = x;
                y += config.beta[j] * x;
            }
            eps = config.rho * eps + normal(rng, scale);
            y0[(i, p)] = y + eps;
        }
    }

    let mut y = y0.clone();
    let mut x = x0.clone();
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        if treated[i] {
            groups.push(GroupLabel::TreatedAt(g));
            for p in (g - 1)..t {
                y[(i, p)] += config.delta_g;
                for j in 0..2 {
                    x[j][(i, p)] += config.tau_g[j];
                }
            }
        } else {
            groups.push(GroupLabel::NeverTreated);
        }
    }
    let data = PanelDataset::new(y, x, groups)?;
    Ok(SimulatedPanel { data, y_untreated: y0, x_untreated: x0, truth: config.truth() })
}
