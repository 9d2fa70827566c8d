//! The distribution families used by the model, with matched samplers and
//! log densities.
//!
//! Everything the engine draws or scores flows through [`DistSpec`], so a
//! Gibbs step can hand back the exact conditional it intends to sample and a
//! test can check the sampler and the density against each other. The gamma
//! family is parameterized by shape and *rate*, the inverse gamma by shape
//! and *scale*, matching the way the priors are stated.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{Sym2, Vec2};
use crate::rng::RngStream;

pub const LN_2PI: f64 = 1.837877066409345;

/// A fully parameterized distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DistSpec {
    Normal { mean: f64, sd: f64 },
    MvNormal2 { mean: Vec2, cov: Sym2 },
    Gamma { shape: f64, rate: f64 },
    InvGamma { shape: f64, scale: f64 },
    Beta { a: f64, b: f64 },
    Bernoulli { p: f64 },
    InvWishart2 { df: f64, scale: Sym2 },
}

/// A value drawn from (or scored under) a [`DistSpec`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Draw {
    Scalar(f64),
    Vector(Vec2),
    Matrix(Sym2),
    Bit(bool),
}

impl Draw {
    pub fn scalar(self) -> Option<f64> {
        match self {
            Draw::Scalar(x) => Some(x),
            _ => None,
        }
    }

    pub fn vector(self) -> Option<Vec2> {
        match self {
            Draw::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn matrix(self) -> Option<Sym2> {
        match self {
            Draw::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub fn bit(self) -> Option<bool> {
        match self {
            Draw::Bit(b) => Some(b),
            _ => None,
        }
    }
}

impl DistSpec {
    /// Check the parameters lie in the family's domain.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParam(msg));
        match *self {
            DistSpec::Normal { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() || sd <= 0.0 {
                    return fail(format!("normal requires finite mean and sd > 0, got ({mean}, {sd})"));
                }
            }
            DistSpec::MvNormal2 { mean, cov } => {
                if !mean.x.is_finite() || !mean.y.is_finite() || !cov.is_spd() {
                    return fail(format!("bivariate normal requires finite mean and SPD covariance, got ({mean:?}, {cov:?})"));
                }
            }
            DistSpec::Gamma { shape, rate } => {
                if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                    return fail(format!("gamma requires shape > 0 and rate > 0, got ({shape}, {rate})"));
                }
            }
            DistSpec::InvGamma { shape, scale } => {
                if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
                    return fail(format!("inverse gamma requires shape > 0 and scale > 0, got ({shape}, {scale})"));
                }
            }
            DistSpec::Beta { a, b } => {
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return fail(format!("beta requires both shapes > 0, got ({a}, {b})"));
                }
            }
            DistSpec::Bernoulli { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return fail(format!("bernoulli requires p in [0, 1], got {p}"));
                }
            }
            DistSpec::InvWishart2 { df, scale } => {
                if !(df > 1.0 && df.is_finite() && scale.is_spd()) {
                    return fail(format!("inverse Wishart requires df > 1 and SPD scale, got ({df}, {scale:?})"));
                }
            }
        }
        Ok(())
    }

    /// Draw one value. Fails only on invalid parameters.
    pub fn sample(&self, rng: &mut RngStream) -> Result<Draw> {
        self.validate()?;
        Ok(match *self {
            DistSpec::Normal { mean, sd } => Draw::Scalar(normal_draw(mean, sd, rng)),
            DistSpec::MvNormal2 { mean, cov } => Draw::Vector(mvn2_draw(mean, cov, rng)),
            DistSpec::Gamma { shape, rate } => Draw::Scalar(gamma_draw(shape, rate, rng)),
            DistSpec::InvGamma { shape, scale } => Draw::Scalar(inv_gamma_draw(shape, scale, rng)),
            DistSpec::Beta { a, b } => Draw::Scalar(beta_draw(a, b, rng)),
            DistSpec::Bernoulli { p } => Draw::Bit(rng_bernoulli(p, rng)),
            DistSpec::InvWishart2 { df, scale } => Draw::Matrix(inv_wishart2_draw(df, scale, rng)),
        })
    }

    /// Log density (or log mass) at `x`. Points outside the support score
    /// `-inf`; handing a draw of the wrong shape is an error.
    pub fn log_density(&self, x: &Draw) -> Result<f64> {
        self.validate()?;
        let wrong_shape = || Error::InvalidInput(format!("draw {x:?} has the wrong shape for {self:?}"));
        Ok(match (*self, *x) {
            (DistSpec::Normal { mean, sd }, Draw::Scalar(v)) => normal_logpdf(v, mean, sd),
            (DistSpec::MvNormal2 { mean, cov }, Draw::Vector(v)) => mvn2_logpdf(v, mean, cov),
            (DistSpec::Gamma { shape, rate }, Draw::Scalar(v)) => gamma_logpdf(v, shape, rate),
            (DistSpec::InvGamma { shape, scale }, Draw::Scalar(v)) => inv_gamma_logpdf(v, shape, scale),
            (DistSpec::Beta { a, b }, Draw::Scalar(v)) => beta_logpdf(v, a, b),
            (DistSpec::Bernoulli { p }, Draw::Bit(v)) => bernoulli_logpmf(v, p),
            (DistSpec::InvWishart2 { df, scale }, Draw::Matrix(m)) => inv_wishart2_logpdf(m, df, scale),
            _ => return Err(wrong_shape()),
        })
    }
}

pub fn standard_normal_draw(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_draw(mean: f64, sd: f64, rng: &mut RngStream) -> f64 {
    mean + sd * standard_normal_draw(rng)
}

pub fn mvn2_draw(mean: Vec2, cov: Sym2, rng: &mut RngStream) -> Vec2 {
    let chol = cov.cholesky().expect("covariance must be SPD");
    let z = Vec2::new(standard_normal_draw(rng), standard_normal_draw(rng));
    mean.add(chol.mul_vec(z))
}

pub fn gamma_draw(shape: f64, rate: f64, rng: &mut RngStream) -> f64 {
    // rand_distr parameterizes gamma by scale.
    rand_distr::Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive")
        .sample(rng)
}

/// Inverse gamma with the given shape and scale, drawn as the reciprocal of
/// a gamma variate whose rate equals the scale.
pub fn inv_gamma_draw(shape: f64, scale: f64, rng: &mut RngStream) -> f64 {
    1.0 / gamma_draw(shape, scale, rng)
}

pub fn beta_draw(a: f64, b: f64, rng: &mut RngStream) -> f64 {
    rand_distr::Beta::new(a, b)
        .expect("beta parameters must be positive")
        .sample(rng)
}

fn rng_bernoulli(p: f64, rng: &mut RngStream) -> bool {
    use rand::Rng;
    rng.random::<f64>() < p
}

/// Inverse Wishart draw by the Bartlett decomposition: draw W from the
/// Wishart with inverted scale, then invert W.
pub fn inv_wishart2_draw(df: f64, scale: Sym2, rng: &mut RngStream) -> Sym2 {
    let l = scale
        .inverse()
        .cholesky()
        .expect("inverse Wishart scale must be SPD");
    // Bartlett factor of the Wishart(df, scale^-1) draw.
    let c11 = chi_squared_draw(df, rng).sqrt();
    let c22 = chi_squared_draw(df - 1.0, rng).sqrt();
    let c21 = standard_normal_draw(rng);
    // Rows of L * C, where C is lower triangular.
    let r1 = Vec2::new(l.l11 * c11, 0.0);
    let r2 = Vec2::new(l.l21 * c11 + l.l22 * c21, l.l22 * c22);
    let w = Sym2::new(r1.dot(r1), r1.dot(r2), r2.dot(r2));
    w.inverse()
}

fn chi_squared_draw(df: f64, rng: &mut RngStream) -> f64 {
    gamma_draw(df / 2.0, 0.5, rng)
}

pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (LN_2PI + z * z) - sd.ln()
}

pub fn mvn2_logpdf(x: Vec2, mean: Vec2, cov: Sym2) -> f64 {
    let centered = x.sub(mean);
    -LN_2PI - 0.5 * cov.det().ln() - 0.5 * cov.inverse().quad_form(centered)
}

pub fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn inv_gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

pub fn beta_logpdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return f64::NEG_INFINITY;
    }
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
}

pub fn bernoulli_logpmf(x: bool, p: f64) -> f64 {
    if x {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

pub fn inv_wishart2_logpdf(x: Sym2, df: f64, scale: Sym2) -> f64 {
    if !x.is_spd() {
        return f64::NEG_INFINITY;
    }
    // Bivariate multivariate gamma function, on the log scale.
    let ln_gamma2 = 0.5 * std::f64::consts::PI.ln() + ln_gamma(0.5 * df) + ln_gamma(0.5 * (df - 1.0));
    0.5 * df * scale.det().ln() - df * std::f64::consts::LN_2 - ln_gamma2
        - 0.5 * (df + 3.0) * x.det().ln()
        - 0.5 * scale.trace_product(x.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rng() -> RngStream {
        RngStream::new(20260816, 0)
    }

    #[test]
    fn pinned_log_density_values() {
        assert_relative_eq!(normal_logpdf(0.0, 0.0, 1.0), -0.9189385332046727, epsilon = 1e-12);
        assert_relative_eq!(normal_logpdf(3.0, 1.0, 2.0), -2.1120857137646187, epsilon = 1e-12);
        // Gamma with shape 2 and rate 0.5 at 4: density 0.25 * 4 * e^-2, so
        // the log is exactly -2.
        assert_relative_eq!(gamma_logpdf(4.0, 2.0, 0.5), -2.0, epsilon = 1e-12);
        // Inverse gamma with shape 1 and scale 1 has log density
        // -2 ln x - 1/x.
        assert_relative_eq!(inv_gamma_logpdf(2.0, 1.0, 1.0), -2.0 * 2.0f64.ln() - 0.5, epsilon = 1e-12);
        assert_relative_eq!(beta_logpdf(0.5, 2.0, 2.0), 1.5f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(bernoulli_logpmf(true, 0.3), 0.3f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(bernoulli_logpmf(false, 0.3), 0.7f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(
            mvn2_logpdf(Vec2::new(1.0, -1.0), Vec2::new(1.0, -1.0), Sym2::IDENTITY),
            -LN_2PI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn out_of_support_scores_neg_infinity() {
        assert_eq!(gamma_logpdf(0.0, 2.0, 0.5), f64::NEG_INFINITY);
        assert_eq!(gamma_logpdf(-1.0, 2.0, 0.5), f64::NEG_INFINITY);
        assert_eq!(inv_gamma_logpdf(-0.5, 1.0, 1.0), f64::NEG_INFINITY);
        assert_eq!(beta_logpdf(1.0, 2.0, 2.0), f64::NEG_INFINITY);
        assert_eq!(inv_wishart2_logpdf(Sym2::new(1.0, 2.0, 1.0), 3.0, Sym2::IDENTITY), f64::NEG_INFINITY);
        assert_eq!(bernoulli_logpmf(true, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(DistSpec::Normal { mean: 0.0, sd: 0.0 }.validate().is_err());
        assert!(DistSpec::Gamma { shape: -1.0, rate: 1.0 }.validate().is_err());
        assert!(DistSpec::InvGamma { shape: 1.0, scale: 0.0 }.validate().is_err());
        assert!(DistSpec::Beta { a: 0.0, b: 1.0 }.validate().is_err());
        assert!(DistSpec::Bernoulli { p: 1.2 }.validate().is_err());
        assert!(DistSpec::InvWishart2 { df: 1.0, scale: Sym2::IDENTITY }.validate().is_err());
        assert!(DistSpec::MvNormal2 { mean: Vec2::ZERO, cov: Sym2::new(1.0, 2.0, 1.0) }.validate().is_err());
        assert!(DistSpec::Bernoulli { p: 1.0 }.validate().is_ok());
    }

    #[test]
    fn log_density_rejects_mismatched_draws() {
        let spec = DistSpec::Normal { mean: 0.0, sd: 1.0 };
        assert!(spec.log_density(&Draw::Vector(Vec2::ZERO)).is_err());
        let spec = DistSpec::InvWishart2 { df: 3.0, scale: Sym2::IDENTITY };
        assert!(spec.log_density(&Draw::Scalar(1.0)).is_err());
    }

    /// Trapezoid integral of exp(log density) over a grid.
    fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut total = 0.5 * (f(lo).exp() + f(hi).exp());
        for k in 1..n {
            total += f(lo + h * k as f64).exp();
        }
        total * h
    }

    #[test]
    fn scalar_densities_integrate_to_one() {
        let near_one = |v: f64| (v - 1.0).abs() < 1e-3;
        assert!(near_one(integrate(|x| normal_logpdf(x, 0.5, 1.3), -10.0, 11.0, 4000)));
        assert!(near_one(integrate(|x| gamma_logpdf(x, 2.0, 0.5), 0.0, 80.0, 8000)));
        assert!(near_one(integrate(|x| inv_gamma_logpdf(x, 3.0, 2.0), 0.0, 200.0, 40000)));
        assert!(near_one(integrate(|x| beta_logpdf(x, 2.0, 2.0), 0.0, 1.0, 4000)));
    }

    #[test]
    fn sample_moments_match_analytic_values() {
        let mut rng = rng();
        let n = 200_000;
        let check = |spec: DistSpec, mean: f64, var: f64, rng: &mut RngStream| {
            let draws: Vec<f64> = (0..n)
                .map(|_| spec.sample(rng).unwrap().scalar().unwrap())
                .collect();
            let m = draws.iter().sum::<f64>() / n as f64;
            let v = draws.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            // Allow five standard errors on the mean, looser on the variance.
            let se = (var / n as f64).sqrt();
            assert!((m - mean).abs() < 5.0 * se, "{spec:?}: mean {m} vs {mean}");
            assert!((v - var).abs() < 0.05 * var, "{spec:?}: var {v} vs {var}");
        };
        check(DistSpec::Normal { mean: 2.0, sd: 3.0 }, 2.0, 9.0, &mut rng);
        check(DistSpec::Gamma { shape: 2.0, rate: 0.5 }, 4.0, 8.0, &mut rng);
        // Shape is kept high enough that the fourth moment exists, so the
        // sample variance concentrates; heavier-tailed shapes are covered by
        // the quantile checks elsewhere.
        check(DistSpec::InvGamma { shape: 6.0, scale: 5.0 }, 1.0, 0.25, &mut rng);
        check(DistSpec::Beta { a: 2.0, b: 2.0 }, 0.5, 0.05, &mut rng);
    }

    #[test]
    fn bernoulli_edge_probabilities_are_deterministic() {
        let mut rng = rng();
        for _ in 0..1000 {
            assert_eq!(DistSpec::Bernoulli { p: 1.0 }.sample(&mut rng).unwrap(), Draw::Bit(true));
            assert_eq!(DistSpec::Bernoulli { p: 0.0 }.sample(&mut rng).unwrap(), Draw::Bit(false));
        }
        let hits: usize = (0..100_000)
            .filter(|_| {
                DistSpec::Bernoulli { p: 0.3 }.sample(&mut rng).unwrap() == Draw::Bit(true)
            })
            .count();
        assert!((hits as f64 / 1e5 - 0.3).abs() < 0.01);
    }

    #[test]
    fn bivariate_normal_moments() {
        let mut rng = rng();
        let mean = Vec2::new(1.0, -1.0);
        let cov = Sym2::new(2.0, 0.6, 1.0);
        let n = 200_000;
        let mut sum = Vec2::ZERO;
        let mut cross = Sym2::new(0.0, 0.0, 0.0);
        for _ in 0..n {
            let v = mvn2_draw(mean, cov, &mut rng);
            sum = sum.add(v);
            cross = cross.add(v.sub(mean).outer());
        }
        let m = sum.scale(1.0 / n as f64);
        let c = cross.scale(1.0 / n as f64);
        assert!((m.x - 1.0).abs() < 0.02 && (m.y + 1.0).abs() < 0.02);
        assert!((c.a - 2.0).abs() < 0.05 && (c.b - 0.6).abs() < 0.03 && (c.d - 1.0).abs() < 0.03);
    }

    #[test]
    fn inverse_wishart_mean_matches_analytic_value() {
        // With df 6 the mean exists and equals scale / (df - 3).
        let mut rng = rng();
        let scale = Sym2::new(3.0, 0.5, 2.0);
        let n = 200_000;
        let mut acc = Sym2::new(0.0, 0.0, 0.0);
        for _ in 0..n {
            acc = acc.add(inv_wishart2_draw(6.0, scale, &mut rng));
        }
        let mean = acc.scale(1.0 / n as f64);
        assert!((mean.a - 1.0).abs() < 0.02, "a: {}", mean.a);
        assert!((mean.b - 0.5 / 3.0).abs() < 0.02, "b: {}", mean.b);
        assert!((mean.d - 2.0 / 3.0).abs() < 0.02, "d: {}", mean.d);
    }

    #[test]
    fn inverse_wishart_diagonal_marginals_are_inverse_gamma() {
        // With df 3 and scale 2I the diagonal entries are marginally
        // inverse gamma with shape 1 and scale 1. That distribution has no
        // mean, so compare the median (1 / ln 2) and a CDF probe instead.
        let mut rng = rng();
        let n = 200_000;
        let mut d11: Vec<f64> = Vec::with_capacity(n);
        let mut d22: Vec<f64> = Vec::with_capacity(n);
        let mut at_most_one = 0usize;
        for _ in 0..n {
            let x = inv_wishart2_draw(3.0, Sym2::scaled_identity(2.0), &mut rng);
            if x.a <= 1.0 {
                at_most_one += 1;
            }
            d11.push(x.a);
            d22.push(x.d);
        }
        d11.sort_by(f64::total_cmp);
        d22.sort_by(f64::total_cmp);
        let expected_median = 1.0 / std::f64::consts::LN_2;
        assert!((d11[n / 2] - expected_median).abs() < 0.03, "median {}", d11[n / 2]);
        assert!((d22[n / 2] - expected_median).abs() < 0.03, "median {}", d22[n / 2]);
        // P(X <= 1) for that inverse gamma is exp(-1).
        assert!((at_most_one as f64 / n as f64 - (-1.0f64).exp()).abs() < 0.01);
    }

    #[test]
    fn sampling_is_reproducible() {
        let specs = [
            DistSpec::Normal { mean: 0.0, sd: 1.0 },
            DistSpec::Gamma { shape: 2.0, rate: 0.5 },
            DistSpec::InvWishart2 { df: 3.0, scale: Sym2::scaled_identity(2.0) },
            DistSpec::Bernoulli { p: 0.5 },
        ];
        let run = || -> Vec<Draw> {
            let mut rng = RngStream::new(7, 3);
            specs.iter().map(|s| s.sample(&mut rng).unwrap()).collect()
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn inverse_wishart_draws_are_spd(
            df in 1.5f64..12.0,
            p in -1.5f64..1.5, q in -1.5f64..1.5, r in -1.5f64..1.5, s in -1.5f64..1.5,
            seed in 0u64..1000,
        ) {
            let scale = Sym2::new(p * p + q * q + 0.2, p * r + q * s, r * r + s * s + 0.2);
            let mut rng = RngStream::new(seed, 1);
            let x = inv_wishart2_draw(df, scale, &mut rng);
            prop_assert!(x.is_spd());
            prop_assert!(inv_wishart2_logpdf(x, df, scale).is_finite());
        }

        #[test]
        fn samples_score_finite_log_density(seed in 0u64..500) {
            let mut rng = RngStream::new(seed, 2);
            let specs = [
                DistSpec::Normal { mean: -1.0, sd: 0.7 },
                DistSpec::Gamma { shape: 2.0, rate: 0.5 },
                DistSpec::InvGamma { shape: 1.0, scale: 1.0 },
                DistSpec::Beta { a: 2.0, b: 2.0 },
                DistSpec::MvNormal2 { mean: Vec2::new(0.5, -0.5), cov: Sym2::new(1.0, 0.4, 2.0) },
                DistSpec::InvWishart2 { df: 3.0, scale: Sym2::scaled_identity(2.0) },
            ];
            for spec in specs {
                let draw = spec.sample(&mut rng).unwrap();
                prop_assert!(spec.log_density(&draw).unwrap().is_finite());
            }
        }
    }
}
