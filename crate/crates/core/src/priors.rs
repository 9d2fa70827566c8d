//! Prior specification and prior sampling.
//!
//! The hyperparameters are user-configurable but default to a weakly
//! informative setup: gamma priors on the two advantage terms, an inverse
//! gamma on the time residual variance, symmetric beta priors on the two
//! prevalences, diffuse normals on the item effect means, and inverse
//! Wishart priors on both covariance matrices.
//!
//! The response-only variants do not carry speed or time-intensity effects,
//! so their person and item effects are scalars. Their variance priors are
//! the diagonal marginals of the inverse Wishart (an inverse gamma with
//! shape (df - 1) / 2 and scale psi_11 / 2), which keeps the prior on theta
//! identical whether or not times enter the model.

use serde::{Deserialize, Serialize};

use crate::dist::{
    beta_draw, beta_logpdf, bernoulli_logpmf, gamma_draw, gamma_logpdf, inv_gamma_draw,
    inv_gamma_logpdf, inv_wishart2_draw, inv_wishart2_logpdf, mvn2_draw, mvn2_logpdf, normal_draw,
    normal_logpdf, DistSpec,
};
use crate::error::{Error, Result};
use crate::linalg::{Sym2, Vec2};
use crate::model::{GlobalParams, ItemParams, ModelSpec, ParameterState, PersonParams};
use crate::rng::RngStream;

/// Hyperparameters of every prior in the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    /// Gamma prior on the success advantage delta: shape and rate.
    pub delta_shape: f64,
    pub delta_rate: f64,
    /// Gamma prior on the speed advantage gamma: shape and rate.
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    /// Inverse gamma prior on the time residual variance kappa.
    pub kappa_shape: f64,
    pub kappa_scale: f64,
    /// Beta prior shared by both prevalences pi1 and pi2.
    pub prevalence_a: f64,
    pub prevalence_b: f64,
    /// Normal prior on each component of the item effect mean.
    pub mu_mean: f64,
    pub mu_var: f64,
    /// Inverse Wishart prior shared by both covariance matrices.
    pub wishart_df: f64,
    pub wishart_scale: Sym2,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig {
            delta_shape: 2.0,
            delta_rate: 0.5,
            gamma_shape: 2.0,
            gamma_rate: 0.5,
            kappa_shape: 1.0,
            kappa_scale: 1.0,
            prevalence_a: 2.0,
            prevalence_b: 2.0,
            mu_mean: 0.0,
            mu_var: 25.0,
            wishart_df: 3.0,
            wishart_scale: Sym2::scaled_identity(2.0),
        }
    }
}

impl HyperConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta_shape", self.delta_shape),
            ("delta_rate", self.delta_rate),
            ("gamma_shape", self.gamma_shape),
            ("gamma_rate", self.gamma_rate),
            ("kappa_shape", self.kappa_shape),
            ("kappa_scale", self.kappa_scale),
            ("prevalence_a", self.prevalence_a),
            ("prevalence_b", self.prevalence_b),
            ("mu_var", self.mu_var),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !self.mu_mean.is_finite() {
            return Err(Error::Config(format!("mu_mean must be finite, got {}", self.mu_mean)));
        }
        if !(self.wishart_df > 1.0 && self.wishart_df.is_finite()) {
            return Err(Error::Config(format!(
                "wishart_df must exceed 1, got {}",
                self.wishart_df
            )));
        }
        if !self.wishart_scale.is_spd() {
            return Err(Error::Config(format!(
                "wishart_scale must be SPD, got {:?}",
                self.wishart_scale
            )));
        }
        Ok(())
    }

    /// The prior induced on a lone variance (the (1,1) entry) when the
    /// model drops the second coordinate: the inverse Wishart's diagonal
    /// marginal.
    pub fn scalar_variance_prior(&self) -> DistSpec {
        DistSpec::InvGamma {
            shape: 0.5 * (self.wishart_df - 1.0),
            scale: 0.5 * self.wishart_scale.a,
        }
    }
}

/// Joint log prior density of a complete state under one model variant.
/// States outside the support score `-inf`. Parameters a variant does not
/// use (speed effects under the response-only models, the advantage term a
/// null variant disables) contribute nothing.
pub fn log_prior(
    persons: &[PersonParams],
    items: &[ItemParams],
    globals: &GlobalParams,
    spec: ModelSpec,
    hyper: &HyperConfig,
) -> f64 {
    let g = globals;
    let mut total = 0.0;

    // Global support first, so the effect densities below never see a
    // broken covariance.
    if spec.response_advantage() {
        total += gamma_logpdf(g.delta, hyper.delta_shape, hyper.delta_rate);
    }
    if spec.time_advantage() {
        total += gamma_logpdf(g.gamma, hyper.gamma_shape, hyper.gamma_rate);
    }
    total += beta_logpdf(g.pi1, hyper.prevalence_a, hyper.prevalence_b);
    total += beta_logpdf(g.pi2, hyper.prevalence_a, hyper.prevalence_b);

    if spec.uses_times() {
        total += inv_gamma_logpdf(g.kappa, hyper.kappa_shape, hyper.kappa_scale);
        total += inv_wishart2_logpdf(g.sigma, hyper.wishart_df, hyper.wishart_scale);
        total += inv_wishart2_logpdf(g.omega, hyper.wishart_df, hyper.wishart_scale);
        total += normal_logpdf(g.mu.x, hyper.mu_mean, hyper.mu_var.sqrt());
        total += normal_logpdf(g.mu.y, hyper.mu_mean, hyper.mu_var.sqrt());
        if !total.is_finite() {
            return f64::NEG_INFINITY;
        }
        for p in persons {
            total += mvn2_logpdf(Vec2::new(p.theta, p.tau), Vec2::ZERO, g.sigma);
            total += bernoulli_logpmf(p.xi, g.pi1);
        }
        for item in items {
            total += mvn2_logpdf(Vec2::new(item.beta, item.alpha), g.mu, g.omega);
            total += bernoulli_logpmf(item.eta, g.pi2);
        }
    } else {
        let variance_prior = hyper.scalar_variance_prior();
        let (var_shape, var_scale) = match variance_prior {
            DistSpec::InvGamma { shape, scale } => (shape, scale),
            _ => unreachable!(),
        };
        total += inv_gamma_logpdf(g.sigma.a, var_shape, var_scale);
        total += inv_gamma_logpdf(g.omega.a, var_shape, var_scale);
        total += normal_logpdf(g.mu.x, hyper.mu_mean, hyper.mu_var.sqrt());
        if !total.is_finite() {
            return f64::NEG_INFINITY;
        }
        for p in persons {
            total += normal_logpdf(p.theta, 0.0, g.sigma.a.sqrt());
            total += bernoulli_logpmf(p.xi, g.pi1);
        }
        for item in items {
            total += normal_logpdf(item.beta, g.mu.x, g.omega.a.sqrt());
            total += bernoulli_logpmf(item.eta, g.pi2);
        }
    }
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}

/// Draw a complete state from the prior. Parameters a variant does not use
/// are set to neutral values (zero advantages, unit variances) rather than
/// sampled, so runs differing only in variant stay comparable draw by draw.
pub fn sample_full_state(
    hyper: &HyperConfig,
    n_persons: usize,
    n_items: usize,
    spec: ModelSpec,
    rng: &mut RngStream,
) -> Result<ParameterState> {
    hyper.validate()?;
    if n_persons == 0 || n_items == 0 {
        return Err(Error::InvalidInput(
            "cannot sample a state for zero persons or items".into(),
        ));
    }
    use rand::Rng;

    let delta = if spec.response_advantage() {
        gamma_draw(hyper.delta_shape, hyper.delta_rate, rng)
    } else {
        0.0
    };
    let gamma = if spec.time_advantage() {
        gamma_draw(hyper.gamma_shape, hyper.gamma_rate, rng)
    } else {
        0.0
    };
    let pi1 = beta_draw(hyper.prevalence_a, hyper.prevalence_b, rng);
    let pi2 = beta_draw(hyper.prevalence_a, hyper.prevalence_b, rng);

    let (kappa, sigma, omega, mu) = if spec.uses_times() {
        let kappa = inv_gamma_draw(hyper.kappa_shape, hyper.kappa_scale, rng);
        let sigma = inv_wishart2_draw(hyper.wishart_df, hyper.wishart_scale, rng);
        let omega = inv_wishart2_draw(hyper.wishart_df, hyper.wishart_scale, rng);
        let sd = hyper.mu_var.sqrt();
        let mu = Vec2::new(
            normal_draw(hyper.mu_mean, sd, rng),
            normal_draw(hyper.mu_mean, sd, rng),
        );
        (kappa, sigma, omega, mu)
    } else {
        let (shape, scale) = match hyper.scalar_variance_prior() {
            DistSpec::InvGamma { shape, scale } => (shape, scale),
            _ => unreachable!(),
        };
        let sigma11 = inv_gamma_draw(shape, scale, rng);
        let omega11 = inv_gamma_draw(shape, scale, rng);
        let mu1 = normal_draw(hyper.mu_mean, hyper.mu_var.sqrt(), rng);
        (
            1.0,
            Sym2::new(sigma11, 0.0, 1.0),
            Sym2::new(omega11, 0.0, 1.0),
            Vec2::new(mu1, 0.0),
        )
    };

    let globals = GlobalParams {
        delta,
        gamma,
        kappa,
        pi1,
        pi2,
        mu,
        sigma,
        omega,
    };

    let persons = (0..n_persons)
        .map(|_| {
            let (theta, tau) = if spec.uses_times() {
                let v = mvn2_draw(Vec2::ZERO, sigma, rng);
                (v.x, v.y)
            } else {
                (normal_draw(0.0, sigma.a.sqrt(), rng), 0.0)
            };
            PersonParams {
                theta,
                tau,
                xi: rng.random::<f64>() < pi1,
            }
        })
        .collect();
    let items = (0..n_items)
        .map(|_| {
            let (beta, alpha) = if spec.uses_times() {
                let v = mvn2_draw(mu, omega, rng);
                (v.x, v.y)
            } else {
                (normal_draw(mu.x, omega.a.sqrt(), rng), 0.0)
            };
            ItemParams {
                beta,
                alpha,
                eta: rng.random::<f64>() < pi2,
            }
        })
        .collect();

    Ok(ParameterState {
        persons,
        items,
        globals,
    })
}
