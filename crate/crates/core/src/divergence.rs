//! Exact small-instance divergences between finite distributions, the Le Cam
//! style divergence (LSD) and its closed-form bound for exponential-family
//! noise.
//!
//! Conventions:
//! * total variation carries the ½ factor, `TV = ½ Σ |p − q|`;
//! * `KL` treats `0·log(0/q)` as 0 and reports `p > 0, q = 0` as an error
//!   instead of returning `+∞`.

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::expfam::{ExpFamily, ScaledParam};
use crate::quad::Simpson;

pub const MAX_SUPPORT: usize = 4096;
pub const MAX_PRODUCT_DIM: usize = 12;
const SUM_TOL: f64 = 1e-12;

/// Probability vector over `support_size` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDist {
    probs: Vec<f64>,
}

impl FiniteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.len() > MAX_SUPPORT {
            return Err(Error::domain(format!(
                "support size must be in 1..={MAX_SUPPORT}, got {}",
                probs.len()
            )));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::domain(format!("probability {i} is {}", probs[i])));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::domain(format!("probabilities sum to {s}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::domain("weights must have a positive finite sum"));
        }
        Self::new(weights.iter().map(|w| w / s).collect())
    }

    /// Random strictly positive distribution (normalized exponential weights).
    pub fn random<R: Rng + ?Sized>(rng: &mut R, support: usize) -> Self {
        let w: Vec<f64> = (0..support)
            .map(|_| {
                let u: f64 = rng.random();
                -(1.0 - u).ln() + 1e-12
            })
            .collect();
        Self::from_weights(&w).expect("positive weights")
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `s·self + (1 − s)·other`.
    pub fn mix(&self, other: &FiniteDist, s: f64) -> Result<FiniteDist> {
        check_len(self.len(), other.len())?;
        let probs = self.probs.iter().zip(&other.probs).map(|(a, b)| s * a + (1.0 - s) * b).collect();
        Ok(FiniteDist { probs })
    }

    /// Applies the same atom permutation `perm[i] = source index` .
    pub fn permuted(&self, perm: &[usize]) -> FiniteDist {
        FiniteDist { probs: perm.iter().map(|&i| self.probs[i]).collect() }
    }
}

/// Product of independent `{−1, +1}` coordinates with natural parameters `θ_α`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductBernoulliPm1 {
    theta_alpha: Vec<f64>,
}

impl ProductBernoulliPm1 {
    pub fn new(theta_alpha: Vec<f64>) -> Result<Self> {
        if theta_alpha.is_empty() || theta_alpha.len() > MAX_PRODUCT_DIM {
            return Err(Error::domain(format!(
                "dimension must be in 1..={MAX_PRODUCT_DIM}, got {}",
                theta_alpha.len()
            )));
        }
        if theta_alpha.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("non-finite natural parameter"));
        }
        Ok(Self { theta_alpha })
    }

    pub fn from_param(param: &ScaledParam) -> Result<Self> {
        Self::new(param.scaled())
    }

    /// Exact enumeration over the `2^p` atoms. Atom `k` has `ξ_j = +1` iff bit
    /// `j` of `k` is set.
    pub fn to_finite(&self) -> FiniteDist {
        let p = self.theta_alpha.len();
        let fam = ExpFamily::BernoulliPm1;
        // per-coordinate log-probabilities of -1 and +1
        let logs: Vec<(f64, f64)> =
            self.theta_alpha.iter().map(|&t| (-t - fam.psi(t), t - fam.psi(t))).collect();
        let probs: Vec<f64> = (0..1usize << p)
            .map(|k| {
                let lp: f64 = logs.iter().enumerate().map(|(j, &(m, pl))| if k >> j & 1 == 1 { pl } else { m }).sum();
                lp.exp()
            })
            .collect();
        let s: f64 = probs.iter().sum();
        FiniteDist { probs: probs.into_iter().map(|x| x / s).collect() }
    }
}

/// Three scalar Gaussians `N(μ, α²)` sharing a variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarGaussianTriple {
    pub mu_b: f64,
    pub mu_b_prime: f64,
    pub mu_a: f64,
    pub alpha: f64,
}

impl ScalarGaussianTriple {
    pub fn new(mu_b: f64, mu_b_prime: f64, mu_a: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::domain(format!("alpha must be > 0, got {alpha}")));
        }
        if ![mu_b, mu_b_prime, mu_a].iter().all(|m| m.is_finite()) {
            return Err(Error::domain("non-finite mean"));
        }
        Ok(Self { mu_b, mu_b_prime, mu_a, alpha })
    }

    /// Largest pairwise distance between the three means.
    pub fn delta(&self) -> f64 {
        let m = [self.mu_b, self.mu_b_prime, self.mu_a];
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                d = d.max((m[i] - m[j]).abs());
            }
        }
        d
    }
}

pub fn hellinger_sq(p: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let s: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    Ok((0.5 * s).clamp(0.0, 1.0))
}

pub fn kl_div(p: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let mut s = 0.0;
    for (i, (&a, &b)) in p.probs.iter().zip(&q.probs).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::domain(format!(
                "P is not absolutely continuous w.r.t. Q: p[{i}] = {a} but q[{i}] = 0"
            )));
        }
        s += a * (a / b).ln();
    }
    Ok(s.max(0.0))
}

pub fn tv_dist(p: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    check_len(p.len(), q.len())?;
    Ok(0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Inner LSD integral `Σ (p_B − p′_B)² / p_A` for one mini-batch pair.
pub fn lsd(p_b: &FiniteDist, p_b_prime: &FiniteDist, p_a: &FiniteDist) -> Result<f64> {
    check_len(p_b.len(), p_b_prime.len())?;
    check_len(p_b.len(), p_a.len())?;
    let mut s = 0.0;
    for i in 0..p_b.len() {
        let d = p_b.probs[i] - p_b_prime.probs[i];
        if d == 0.0 {
            continue;
        }
        let a = p_a.probs[i];
        if a == 0.0 {
            return Err(Error::domain(format!("reference density vanishes at atom {i} where P_B and P'_B differ")));
        }
        s += d * d / a;
    }
    Ok(s)
}

/// LSD for three scalar Gaussians, by adaptive quadrature over
/// `[min μ − 12α, max μ + 12α]`.
pub fn lsd_gaussian(t: &ScalarGaussianTriple) -> Result<f64> {
    let ScalarGaussianTriple { mu_b, mu_b_prime, mu_a, alpha } = *t;
    if mu_b == mu_b_prime {
        return Ok(0.0);
    }
    let a2 = 2.0 * alpha * alpha;
    let norm = 1.0 / (alpha * (2.0 * std::f64::consts::PI).sqrt());
    // φ_A (r_B − r'_B)² with r = φ/φ_A evaluated in log space
    let integrand = |x: f64| {
        let log_ratio = |mu: f64| ((x - mu_a).powi(2) - (x - mu).powi(2)) / a2;
        let diff = log_ratio(mu_b).exp() - log_ratio(mu_b_prime).exp();
        norm * (-(x - mu_a).powi(2) / a2).exp() * diff * diff
    };
    let lo = mu_b.min(mu_b_prime).min(mu_a) - 12.0 * alpha;
    let hi = mu_b.max(mu_b_prime).max(mu_a) + 12.0 * alpha;
    let floor = alpha_floor(t.delta(), ExpFamily::Gaussian.c2());
    let diagnose = |why: String| {
        Error::Quadrature(format!(
            "{why}; alpha = {alpha} vs the admissible floor sqrt(8 c2) * delta = {floor} (delta = {})",
            t.delta()
        ))
    };
    let value = Simpson::default().integrate(integrand, lo, hi).map_err(|e| diagnose(e.to_string()))?;
    let edge = integrand(lo).max(integrand(hi)) * (hi - lo);
    if !edge.is_finite() || edge > 1e-9 * value.max(1.0) {
        return Err(diagnose(format!("integrand mass escapes the window (edge contribution {edge:e})")));
    }
    Ok(value)
}

/// Exact mixture KL and the corresponding quadratic-in-`s` bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureKl {
    pub exact_kl: f64,
    pub quad_bound: f64,
    /// `lsd(Q, Q′, R)`, the bound without its `s²/(1 − s)` factor.
    pub lsd: f64,
}

/// `KL(sQ + (1−s)R ‖ sQ′ + (1−s)R)` against `s²/(1−s) · lsd(Q, Q′, R)`.
pub fn mixture_kl_pair(q: &FiniteDist, q_prime: &FiniteDist, r: &FiniteDist, s: f64) -> Result<MixtureKl> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::domain(format!("mixture weight must lie in (0, 1), got {s}")));
    }
    check_len(q.len(), q_prime.len())?;
    check_len(q.len(), r.len())?;
    let lsd_value = lsd(q, q_prime, r)?;
    // Σ p log(p/m) − (p − m), with p − m = s (Q − Q′) formed without cancellation.
    let mut kl = 0.0;
    for i in 0..q.len() {
        let p = s * q.probs[i] + (1.0 - s) * r.probs[i];
        let m = s * q_prime.probs[i] + (1.0 - s) * r.probs[i];
        let d = s * (q.probs[i] - q_prime.probs[i]);
        if p == 0.0 {
            kl += m;
            continue;
        }
        if m == 0.0 {
            return Err(Error::domain(format!("mixture is not absolutely continuous at atom {i}")));
        }
        kl += p * (d / m).ln_1p() - d;
    }
    Ok(MixtureKl { exact_kl: kl.max(0.0), quad_bound: s * s / (1.0 - s) * lsd_value, lsd: lsd_value })
}

/// `5 c₂ ‖θ_B/α − θ′_B/α‖²`.
pub fn lsd_upper_bound(theta_b: &ScaledParam, theta_b_prime: &ScaledParam, c2: f64) -> Result<f64> {
    if theta_b.alpha() != theta_b_prime.alpha() {
        return Err(Error::domain(format!(
            "both parameters must share one scaling, got {} and {}",
            theta_b.alpha(),
            theta_b_prime.alpha()
        )));
    }
    check_len(theta_b.dim(), theta_b_prime.dim())?;
    let a = theta_b.alpha();
    let sq: f64 = theta_b.theta().iter().zip(theta_b_prime.theta()).map(|(x, y)| ((x - y) / a).powi(2)).sum();
    Ok(5.0 * c2 * sq)
}

/// Smallest admissible scaling, `√(8 c₂) · Δ`.
pub fn alpha_floor(delta: f64, c2: f64) -> f64 {
    (8.0 * c2).sqrt() * delta
}

/// `|1 − e^{−2x}| − min(|x|, ½)`; nonnegative for every real `x`.
pub fn mix_norm_margin(x: f64) -> f64 {
    (-2.0 * x).exp_m1().abs() - x.abs().min(0.5)
}

/// `|tanh x| − ((e² − 1)/(e² + 1))·|x|`; nonnegative on `[−1, 1]`.
pub fn tanh_margin(x: f64) -> f64 {
    let e2 = std::f64::consts::E * std::f64::consts::E;
    x.tanh().abs() - (e2 - 1.0) / (e2 + 1.0) * x.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn d(v: &[f64]) -> FiniteDist {
        FiniteDist::new(v.to_vec()).unwrap()
    }

    #[test]
    fn finite_dist_validation() {
        assert!(FiniteDist::new(vec![]).is_err());
        assert!(FiniteDist::new(vec![0.5, 0.4]).is_err());
        assert!(FiniteDist::new(vec![1.5, -0.5]).is_err());
        assert!(FiniteDist::new(vec![0.0; MAX_SUPPORT + 1]).is_err());
        assert!(FiniteDist::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn hellinger_examples() {
        let p = d(&[0.2, 0.3, 0.5]);
        assert_eq!(hellinger_sq(&p, &p).unwrap(), 0.0);
        assert!((hellinger_sq(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap() - 1.0).abs() < 1e-15);
        // 50-digit reference value
        let h = hellinger_sq(&d(&[0.5, 0.5]), &d(&[0.9, 0.1])).unwrap();
        assert!((h - 0.105_572_809_000_084_12).abs() < 1e-15);
        assert!(hellinger_sq(&d(&[1.0]), &d(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = d(&[0.2, 0.3, 0.5]);
        assert_eq!(kl_div(&p, &p).unwrap(), 0.0);
        assert!((kl_div(&d(&[1.0, 0.0]), &d(&[0.5, 0.5])).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(kl_div(&d(&[0.5, 0.5]), &d(&[1.0, 0.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn tv_examples() {
        let p = d(&[0.2, 0.8]);
        assert_eq!(tv_dist(&p, &p).unwrap(), 0.0);
        assert_eq!(tv_dist(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), 1.0);
    }

    #[test]
    fn lsd_examples() {
        let p = d(&[0.2, 0.8]);
        assert_eq!(lsd(&p, &p, &d(&[0.5, 0.5])).unwrap(), 0.0);
        assert_eq!(lsd(&d(&[1.0, 0.0]), &d(&[0.0, 1.0]), &d(&[0.5, 0.5])).unwrap(), 4.0);
        assert!(lsd(&d(&[1.0, 0.0]), &d(&[0.0, 1.0]), &d(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn product_bernoulli_enumeration() {
        let pb = ProductBernoulliPm1::new(vec![0.3, -1.2, 0.0]).unwrap();
        let f = pb.to_finite();
        assert_eq!(f.len(), 8);
        assert!((f.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // atom 0b101: ξ = (+1, −1, +1)
        let fam = ExpFamily::BernoulliPm1;
        let lp = (0.3 - fam.psi(0.3)) + (1.2 - fam.psi(-1.2)) + (0.0 - fam.psi(0.0));
        assert!((f.probs()[0b101] - lp.exp()).abs() < 1e-15);
        assert!(ProductBernoulliPm1::new(vec![0.0; 13]).is_err());
    }

    /// ∫ φ₁ φ₂ / φ₃ = exp((μ₁ − μ₃)(μ₂ − μ₃)/α²) for shared variance α².
    fn lsd_gaussian_closed_form(t: &ScalarGaussianTriple) -> f64 {
        let a = (t.mu_b - t.mu_a) / t.alpha;
        let b = (t.mu_b_prime - t.mu_a) / t.alpha;
        (a * a).exp() - 2.0 * (a * b).exp() + (b * b).exp()
    }

    #[test]
    fn lsd_gaussian_matches_closed_form() {
        let mut rng = stream(11, 0);
        for _ in 0..50 {
            let alpha = rng.random_range(0.2..3.0);
            let t = ScalarGaussianTriple::new(
                rng.random_range(-0.1..0.1) * alpha,
                rng.random_range(-0.1..0.1) * alpha,
                rng.random_range(-0.1..0.1) * alpha,
                alpha,
            )
            .unwrap();
            let q = lsd_gaussian(&t).unwrap();
            let c = lsd_gaussian_closed_form(&t);
            assert!((q - c).abs() <= 1e-6 * c + 1e-9, "{q} vs {c}");
        }
    }

    #[test]
    fn lsd_gaussian_examples() {
        let t = ScalarGaussianTriple::new(0.3, 0.3, -0.2, 1.0).unwrap();
        assert_eq!(lsd_gaussian(&t).unwrap(), 0.0);
        let t = ScalarGaussianTriple::new(0.1, -0.1, 0.0, 1.0).unwrap();
        // frozen from a 10^7-point midpoint Riemann sum over [-20, 20]
        let riemann = 0.040_000_666_670_000_07;
        let q = lsd_gaussian(&t).unwrap();
        assert!((q - riemann).abs() <= 1e-5 * riemann, "{q}");
    }

    #[test]
    fn lsd_gaussian_reports_far_means() {
        let t = ScalarGaussianTriple::new(40.0, -40.0, 0.0, 1.0).unwrap();
        let err = lsd_gaussian(&t).unwrap_err();
        assert!(err.to_string().contains("floor"), "{err}");
    }

    #[test]
    fn mixture_examples() {
        let mut rng = stream(12, 0);
        let q = FiniteDist::random(&mut rng, 8);
        let r = FiniteDist::random(&mut rng, 8);
        let m = mixture_kl_pair(&q, &q, &r, 0.3).unwrap();
        assert_eq!((m.exact_kl, m.quad_bound), (0.0, 0.0));
        let qp = FiniteDist::random(&mut rng, 8);
        let m = mixture_kl_pair(&q, &qp, &r, 1e-6).unwrap();
        assert!(m.exact_kl <= 1e-11 * m.lsd, "{m:?}");
        assert!(m.exact_kl > 0.0);
        assert!(mixture_kl_pair(&q, &qp, &r, 1.0).is_err());
    }

    #[test]
    fn mixture_kl_matches_plain_kl() {
        let mut rng = stream(13, 0);
        let q = FiniteDist::random(&mut rng, 16);
        let qp = FiniteDist::random(&mut rng, 16);
        let r = FiniteDist::random(&mut rng, 16);
        let s = 0.4;
        let m = mixture_kl_pair(&q, &qp, &r, s).unwrap();
        let plain = kl_div(&q.mix(&r, s).unwrap(), &qp.mix(&r, s).unwrap()).unwrap();
        assert!((m.exact_kl - plain).abs() < 1e-14);
    }

    #[test]
    fn lsd_upper_bound_examples() {
        let a = ScaledParam::new(vec![0.3, -0.4], 1.0).unwrap();
        assert_eq!(lsd_upper_bound(&a, &a, 1.0).unwrap(), 0.0);
        let z = ScaledParam::new(vec![0.0, 0.0], 1.0).unwrap();
        assert!((lsd_upper_bound(&a, &z, 1.0).unwrap() - 1.25).abs() < 1e-15);
        let other = ScaledParam::new(vec![0.0, 0.0], 2.0).unwrap();
        assert!(lsd_upper_bound(&a, &other, 1.0).is_err());
    }

    #[test]
    fn alpha_floor_examples() {
        assert_eq!(alpha_floor(0.0, 1.0), 0.0);
        assert!((alpha_floor(1.0, 1.0) - 2.828_427_124_746_19).abs() < 1e-14);
        assert!((alpha_floor(2.0, 0.25) - 2.828_427_124_746_19).abs() < 1e-14);
    }

    #[test]
    fn lsd_permutation_invariant() {
        let mut rng = stream(14, 0);
        let (a, b, c) = (FiniteDist::random(&mut rng, 6), FiniteDist::random(&mut rng, 6), FiniteDist::random(&mut rng, 6));
        let perm = [3, 0, 5, 1, 4, 2];
        let x = lsd(&a, &b, &c).unwrap();
        let y = lsd(&a.permuted(&perm), &b.permuted(&perm), &c.permuted(&perm)).unwrap();
        assert!((x - y).abs() < 1e-14);
    }
}
