//! Component-wise independent exponential families in scaled natural-parameter
//! form.
//!
//! A family is described by its scalar log-partition `ψ`. For a parameter
//! vector `θ` and scaling `α > 0` the distribution over the sufficient
//! statistic `ξ ∈ R^p` is
//!
//! ```text
//! p(ξ; θ/α) = Π_j exp(ξ_j θ_j/α − ψ(θ_j/α)) π₀,α(ξ_j)
//! ```
//!
//! Three instances are provided: the Gaussian (whose base measure depends on
//! `α`, so that the law is exactly `N(θ, α² I)`), the symmetric Bernoulli over
//! `{−1, +1}` and the Bernoulli over `{0, 1}`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};

/// Lower clamp applied to saturated success probabilities before sampling.
pub const PROB_FLOOR: f64 = 1e-300;
/// Upper clamp applied to saturated success probabilities before sampling.
pub const PROB_CEIL: f64 = 1.0 - 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExpFamily {
    Gaussian,
    /// Bernoulli over `{−1, +1}` with `ψ(θ) = log(e^{−θ} + e^{θ})`.
    BernoulliPm1,
    /// Bernoulli over `{0, 1}` with `ψ(θ) = log(1 + e^{θ})`.
    Bernoulli01,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    RealLine,
    PlusMinusOne,
    ZeroOne,
}

impl Support {
    pub fn contains(self, x: f64) -> bool {
        match self {
            Support::RealLine => x.is_finite(),
            Support::PlusMinusOne => x == 1.0 || x == -1.0,
            Support::ZeroOne => x == 0.0 || x == 1.0,
        }
    }
}

/// Natural parameter `θ` together with its scaling `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledParam {
    theta: Vec<f64>,
    alpha: f64,
}

impl ScaledParam {
    pub fn new(theta: Vec<f64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain(format!("scaling alpha must be finite and > 0, got {alpha}")));
        }
        Ok(Self { theta, alpha })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `θ_α = θ / α`, component-wise.
    pub fn scaled(&self) -> Vec<f64> {
        self.theta.iter().map(|t| t / self.alpha).collect()
    }
}

/// A draw of the sufficient statistic `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw(pub Vec<f64>);

impl NoiseDraw {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::domain(format!("non-finite natural parameter at index {i}: {}", v[i]))),
        None => Ok(()),
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ExpFamily {
    pub const ALL: [ExpFamily; 3] = [ExpFamily::Gaussian, ExpFamily::BernoulliPm1, ExpFamily::Bernoulli01];

    pub fn support(self) -> Support {
        match self {
            ExpFamily::Gaussian => Support::RealLine,
            ExpFamily::BernoulliPm1 => Support::PlusMinusOne,
            ExpFamily::Bernoulli01 => Support::ZeroOne,
        }
    }

    /// Global upper bound on `ψ''`.
    pub fn c2(self) -> f64 {
        match self {
            ExpFamily::Gaussian | ExpFamily::BernoulliPm1 => 1.0,
            ExpFamily::Bernoulli01 => 0.25,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExpFamily::Gaussian => "gaussian",
            ExpFamily::BernoulliPm1 => "bernoulli_pm1",
            ExpFamily::Bernoulli01 => "bernoulli01",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "gaussian" => Some(ExpFamily::Gaussian),
            "bernoulli_pm1" | "bernoulli-pm1" => Some(ExpFamily::BernoulliPm1),
            "bernoulli01" | "bernoulli-01" => Some(ExpFamily::Bernoulli01),
            _ => None,
        }
    }

    /// Scalar log-partition, stable for large `|θ|`.
    pub fn psi(self, t: f64) -> f64 {
        match self {
            ExpFamily::Gaussian => 0.5 * t * t,
            ExpFamily::BernoulliPm1 => {
                let a = t.abs();
                a + (-2.0 * a).exp().ln_1p()
            }
            ExpFamily::Bernoulli01 => t.max(0.0) + (-t.abs()).exp().ln_1p(),
        }
    }

    /// Scalar `ψ'`, the expectation parameter.
    pub fn psi_prime(self, t: f64) -> f64 {
        match self {
            ExpFamily::Gaussian => t,
            ExpFamily::BernoulliPm1 => t.tanh(),
            ExpFamily::Bernoulli01 => logistic(t),
        }
    }

    /// Scalar `ψ''`, the per-coordinate variance of `ξ`.
    pub fn psi_second(self, t: f64) -> f64 {
        match self {
            ExpFamily::Gaussian => 1.0,
            ExpFamily::BernoulliPm1 => {
                let th = t.tanh();
                1.0 - th * th
            }
            ExpFamily::Bernoulli01 => {
                let s = logistic(t);
                s * (1.0 - s)
            }
        }
    }

    pub fn log_partition(self, theta_alpha: &[f64]) -> Result<f64> {
        check_finite(theta_alpha)?;
        Ok(theta_alpha.iter().map(|&t| self.psi(t)).sum())
    }

    pub fn mean_param(self, theta_alpha: &[f64]) -> Result<Vec<f64>> {
        check_finite(theta_alpha)?;
        Ok(theta_alpha.iter().map(|&t| self.psi_prime(t)).collect())
    }

    /// Probability of the upper atom (`+1` or `1`) for a discrete family, clamped.
    fn upper_prob(self, t: f64) -> f64 {
        let p = match self {
            ExpFamily::BernoulliPm1 => logistic(2.0 * t),
            ExpFamily::Bernoulli01 => logistic(t),
            ExpFamily::Gaussian => unreachable!("gaussian has no atoms"),
        };
        p.clamp(PROB_FLOOR, PROB_CEIL)
    }

    /// Draws `ξ` component-wise.
    ///
    /// The Gaussian instance returns `N(θ, α² I)`; the Bernoulli instances use
    /// `θ_α = θ/α` as natural parameter and inverse-CDF sampling.
    pub fn sample_noise<R: Rng + ?Sized>(self, param: &ScaledParam, rng: &mut R) -> NoiseDraw {
        let alpha = param.alpha();
        let xi = match self {
            ExpFamily::Gaussian => param
                .theta()
                .iter()
                .map(|&t| {
                    let z: f64 = rng.sample(StandardNormal);
                    t + alpha * z
                })
                .collect(),
            ExpFamily::BernoulliPm1 | ExpFamily::Bernoulli01 => {
                let (hi, lo) = if self == ExpFamily::BernoulliPm1 { (1.0, -1.0) } else { (1.0, 0.0) };
                param
                    .theta()
                    .iter()
                    .map(|&t| {
                        let p = self.upper_prob(t / alpha);
                        let u: f64 = rng.random();
                        if u < p {
                            hi
                        } else {
                            lo
                        }
                    })
                    .collect()
            }
        };
        NoiseDraw(xi)
    }

    /// Log-density of `ξ` under `param`.
    ///
    /// Discrete families use `π₀ ≡ 1`. The Gaussian uses the `α`-dependent base
    /// measure under which the density is exactly that of `N(θ, α² I)`.
    pub fn log_density(self, xi: &NoiseDraw, param: &ScaledParam) -> Result<f64> {
        check_len(param.dim(), xi.0.len())?;
        let support = self.support();
        if let Some(i) = xi.0.iter().position(|&x| !support.contains(x)) {
            return Err(Error::domain(format!(
                "xi[{i}] = {} is outside the {:?} support",
                xi.0[i], support
            )));
        }
        let ta = param.scaled();
        check_finite(&ta)?;
        match self {
            ExpFamily::Gaussian => {
                let a2 = param.alpha() * param.alpha();
                let sq: f64 = xi.0.iter().zip(param.theta()).map(|(x, t)| (x - t) * (x - t)).sum();
                let p = xi.0.len() as f64;
                Ok(-sq / (2.0 * a2) - 0.5 * p * (2.0 * std::f64::consts::PI * a2).ln())
            }
            _ => Ok(xi.0.iter().zip(&ta).map(|(x, t)| x * t - self.psi(*t)).sum()),
        }
    }

    /// Bregman divergence `ψ(θ₁) − ψ(θ₂) − ⟨∇ψ(θ₂), θ₁ − θ₂⟩`.
    pub fn bregman_div(self, theta1: &[f64], theta2: &[f64]) -> Result<f64> {
        check_len(theta1.len(), theta2.len())?;
        check_finite(theta1)?;
        check_finite(theta2)?;
        let d: f64 = theta1
            .iter()
            .zip(theta2)
            .map(|(&a, &b)| self.psi(a) - self.psi(b) - self.psi_prime(b) * (a - b))
            .sum();
        // rounding can push an exact zero slightly negative
        Ok(d.max(0.0))
    }
}
