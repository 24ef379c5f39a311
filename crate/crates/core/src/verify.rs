//! Property suites: randomized trials with per-trial margins.
//!
//! A margin is `rhs − lhs` for an inequality `lhs ≤ rhs`; a trial fails when
//! its margin drops below `−tolerance`.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;

use crate::data::{Dataset, Example};
use crate::divergence::{
    alpha_floor, hellinger_sq, kl_div, lsd, lsd_gaussian, mix_norm_margin, mixture_kl_pair, lsd_upper_bound, tv_dist,
    FiniteDist, ProductBernoulliPm1, ScalarGaussianTriple,
};
use crate::engine::{
    efld_step, run_training, verify_sgld, verify_signsgd_full, verify_signsgd_minibatch, AlphaRule, BatchMode,
    ConvergenceObserver, ConvergenceRun, OptCheckConfig, OptimizerKind, OptimizerSpec, RateCheck, Schedule,
    SigmaRule, TrainConfig, TrainState,
};
use crate::error::{Error, Result};
use crate::expfam::{ExpFamily, ScaledParam};
use crate::models::Model;
use crate::rng::{stream, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Divergences,
    LsdBound,
    Mixture,
    Lemmas,
    Gradients,
    Convergence,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 7] = ["divergences", "theorem2", "mixture", "lemmas", "gradients", "convergence", "all"];

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "divergences" => Suite::Divergences,
            "theorem2" => Suite::LsdBound,
            "mixture" => Suite::Mixture,
            "lemmas" => Suite::Lemmas,
            "gradients" => Suite::Gradients,
            "convergence" => Suite::Convergence,
            "all" => Suite::All,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub tolerance: f64,
    /// One margin per trial, in trial order.
    pub margins: Vec<f64>,
    pub failures: Vec<String>,
    pub note: Option<String>,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self { name: name.into(), tolerance, margins: Vec::new(), failures: Vec::new(), note: None }
    }

    fn record(&mut self, margin: f64, describe: impl FnOnce() -> String) {
        if !(margin >= -self.tolerance) {
            self.failures.push(format!("trial {}: margin {margin:e}; {}", self.margins.len(), describe()));
        }
        self.margins.push(margin);
    }

    pub fn trials(&self) -> usize {
        self.margins.len()
    }

    pub fn worst_margin(&self) -> f64 {
        self.margins.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && !self.margins.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub checks: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Plain-text table, one line per check, followed by failing trials.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(s, "{:<width$}  {:>6}  {:>14}  {:>9}  result", "check", "trials", "worst margin", "tol");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<width$}  {:>6}  {:>14.6e}  {:>9.1e}  {}",
                c.name,
                c.trials(),
                c.worst_margin(),
                c.tolerance,
                if c.passed() { "PASS" } else { "FAIL" }
            );
            if let Some(n) = &c.note {
                let _ = writeln!(s, "    note: {n}");
            }
            for f in c.failures.iter().take(20) {
                let _ = writeln!(s, "    {f}");
            }
            if c.failures.len() > 20 {
                let _ = writeln!(s, "    ... {} more failing trials", c.failures.len() - 20);
            }
        }
        s
    }

    pub fn write_margins_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "check,trial,margin")?;
        for c in &self.checks {
            for (i, m) in c.margins.iter().enumerate() {
                writeln!(out, "{},{i},{m:e}", c.name)?;
            }
        }
        Ok(())
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Divergences => divergence_chain(seed, 1000)?,
        Suite::LsdBound => lsd_bound_checks(seed, 500, 500)?,
        Suite::Mixture => mixture_checks(seed, 1000)?,
        Suite::Lemmas => lemma_checks(10_000),
        Suite::Gradients => gradient_checks(seed, 100)?,
        Suite::Convergence => convergence_checks(seed, &ConvergenceSettings::default())?,
        Suite::All => {
            let mut all = Vec::new();
            for s in [Suite::Divergences, Suite::LsdBound, Suite::Mixture, Suite::Lemmas, Suite::Gradients, Suite::Convergence] {
                all.extend(run_suite(s, seed)?.checks);
            }
            all
        }
    };
    Ok(SuiteReport { checks })
}

/// Independent stream for trial `trial` of check number `check`.
fn trial_rng(seed: u64, check: u64, trial: usize) -> RngStream {
    stream(seed, (check << 32) | trial as u64)
}

// ---------------------------------------------------------------------------
// Divergences
// ---------------------------------------------------------------------------

/// Hellinger / KL / TV chain on random pairs with supports of 2..=64 atoms.
pub fn divergence_chain(seed: u64, trials: usize) -> Result<Vec<CheckOutcome>> {
    let tol = 1e-10;
    let mut kl_c = CheckOutcome::new("2H2<=KL", tol);
    let mut lit = CheckOutcome::new("2H2<=sqrt(KL/2)", tol);
    let mut valid = CheckOutcome::new("2H2<=sqrt(2KL)", tol);
    let mut tv_c = CheckOutcome::new("H2<=TV", tol);
    let mut pinsker = CheckOutcome::new("TV<=sqrt(KL/2)", tol);
    let mut perm = CheckOutcome::new("lsd_permutation", 1e-12);
    for i in 0..trials {
        let mut rng = trial_rng(seed, 1, i);
        let k = rng.random_range(2..=64);
        let p = FiniteDist::random(&mut rng, k);
        let q = FiniteDist::random(&mut rng, k);
        let h2 = hellinger_sq(&p, &q)?;
        let kl = kl_div(&p, &q)?;
        let tv = tv_dist(&p, &q)?;
        let desc = || format!("seed {seed}, support {k}, H2 = {h2:e}, KL = {kl:e}, TV = {tv:e}");
        kl_c.record(kl - 2.0 * h2, desc);
        lit.record((kl / 2.0).sqrt() - 2.0 * h2, desc);
        valid.record((2.0 * kl).sqrt() - 2.0 * h2, desc);
        tv_c.record(tv - h2, desc);
        pinsker.record((kl / 2.0).sqrt() - tv, desc);

        let r = FiniteDist::random(&mut rng, k);
        let mut order: Vec<usize> = (0..k).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let a = lsd(&p, &q, &r)?;
        let b = lsd(&p.permuted(&order), &q.permuted(&order), &r.permuted(&order))?;
        perm.record(-(a - b).abs() / a.max(1.0), || format!("seed {seed}, lsd {a:e} vs permuted {b:e}"));
    }
    lit.note = Some(
        "uses the unhalved-TV step of the original chain; P=(1,0), Q=(0.01,0.99) gives 2H2 = 1.8 > sqrt(KL/2) = 1.517, \
         the sound form is 2H2 <= sqrt(2KL)"
            .into(),
    );
    Ok(vec![kl_c, lit, valid, tv_c, pinsker, perm])
}

// ---------------------------------------------------------------------------
// LSD against 5 c2 ‖Δθ/α‖²
// ---------------------------------------------------------------------------

/// `lsd ≤ 5c₂‖(θ_B − θ′_B)/α‖²` for product `{−1,+1}` instances (exact
/// enumeration, `p ≤ 10`) and scalar Gaussian triples (quadrature), with
/// `α` drawn from `[1, 3] × √(8c₂)Δ`.
pub fn lsd_bound_checks(seed: u64, bernoulli_trials: usize, gaussian_trials: usize) -> Result<Vec<CheckOutcome>> {
    let tol = 1e-8;
    let mut bern = CheckOutcome::new("lsd<=5c2|dtheta|^2 bernoulli", tol);
    let c2 = ExpFamily::BernoulliPm1.c2();
    for i in 0..bernoulli_trials {
        let mut rng = trial_rng(seed, 2, i);
        let p = rng.random_range(1..=10);
        let scale = rng.random_range(0.01..3.0);
        let mut thetas: Vec<Vec<f64>> =
            (0..3).map(|_| (0..p).map(|_| rng.random_range(-scale..scale)).collect()).collect();
        let theta_a = thetas.pop().unwrap();
        let theta_bp = thetas.pop().unwrap();
        let theta_b = thetas.pop().unwrap();
        let delta = max_pair_dist(&[&theta_b, &theta_bp, &theta_a]);
        let alpha = (alpha_floor(delta, c2) * rng.random_range(1.0..3.0)).max(1e-12);
        let to_dist = |t: &[f64]| -> Result<FiniteDist> {
            Ok(ProductBernoulliPm1::from_param(&ScaledParam::new(t.to_vec(), alpha)?)?.to_finite())
        };
        let value = lsd(&to_dist(&theta_b)?, &to_dist(&theta_bp)?, &to_dist(&theta_a)?)?;
        let rhs = lsd_upper_bound(&ScaledParam::new(theta_b, alpha)?, &ScaledParam::new(theta_bp, alpha)?, c2)?;
        bern.record(rhs - value, || format!("seed {seed}, p = {p}, alpha = {alpha:e}, lsd = {value:e}, rhs = {rhs:e}"));
    }

    let mut gauss = CheckOutcome::new("lsd<=5c2|dtheta|^2 gaussian", tol);
    let c2 = ExpFamily::Gaussian.c2();
    for i in 0..gaussian_trials {
        let mut rng = trial_rng(seed, 3, i);
        let scale = rng.random_range(0.01..5.0);
        let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-scale..scale)).collect();
        let delta = max_pair_dist(&[&mu[0..1], &mu[1..2], &mu[2..3]]);
        let alpha = (alpha_floor(delta, c2) * rng.random_range(1.0..3.0)).max(1e-12);
        let triple = ScalarGaussianTriple::new(mu[0], mu[1], mu[2], alpha)?;
        let value = lsd_gaussian(&triple)?;
        let rhs = lsd_upper_bound(&ScaledParam::new(vec![mu[0]], alpha)?, &ScaledParam::new(vec![mu[1]], alpha)?, c2)?;
        gauss.record(rhs - value, || format!("seed {seed}, {triple:?}, lsd = {value:e}, rhs = {rhs:e}"));
    }
    Ok(vec![bern, gauss])
}

fn max_pair_dist(v: &[&[f64]]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            d = d.max(v[i].iter().zip(v[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    d
}

// ---------------------------------------------------------------------------
// Mixture KL
// ---------------------------------------------------------------------------

/// Medians of `exact_kl / lsd(Q, Q′, R)` at each mixture weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureScaling {
    pub weights: Vec<f64>,
    pub median_kl_over_lsd: Vec<f64>,
    pub median_kl_over_bound: Vec<f64>,
}

fn random_triple(rng: &mut RngStream, k: usize) -> (FiniteDist, FiniteDist, FiniteDist) {
    (FiniteDist::random(rng, k), FiniteDist::random(rng, k), FiniteDist::random(rng, k))
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

pub fn mixture_scaling(seed: u64, trials: usize, weights: &[f64]) -> Result<MixtureScaling> {
    let mut by_lsd = vec![Vec::with_capacity(trials); weights.len()];
    let mut by_bound = vec![Vec::with_capacity(trials); weights.len()];
    for i in 0..trials {
        let (q, qp, r) = random_triple(&mut trial_rng(seed, 5, i), 32);
        for (j, &s) in weights.iter().enumerate() {
            let m = mixture_kl_pair(&q, &qp, &r, s)?;
            by_lsd[j].push(m.exact_kl / m.lsd);
            by_bound[j].push(m.exact_kl / m.quad_bound);
        }
    }
    Ok(MixtureScaling {
        weights: weights.to_vec(),
        median_kl_over_lsd: by_lsd.iter().map(|v| median(v)).collect(),
        median_kl_over_bound: by_bound.iter().map(|v| median(v)).collect(),
    })
}

/// `KL(sQ + (1−s)R ‖ sQ′ + (1−s)R) ≤ s²/(1−s)·lsd(Q, Q′, R)` on random
/// 32-atom triples, plus the quadratic-in-`s` decay.
pub fn mixture_checks(seed: u64, trials: usize) -> Result<Vec<CheckOutcome>> {
    let tol = 1e-10;
    let weights = [("s=0.5", 0.5), ("s=0.1", 0.1), ("s=b/n=5/50", 5.0 / 50.0)];
    let mut out = Vec::new();
    for (w, (label, s)) in weights.iter().enumerate() {
        let mut c = CheckOutcome::new(format!("mixture_kl<=bound {label}"), tol);
        for i in 0..trials {
            let (q, qp, r) = random_triple(&mut trial_rng(seed, 4 + ((w as u64) << 8), i), 32);
            let m = mixture_kl_pair(&q, &qp, &r, *s)?;
            c.record(m.quad_bound - m.exact_kl, || format!("seed {seed}, kl = {:e}, bound = {:e}", m.exact_kl, m.quad_bound));
        }
        out.push(c);
    }

    let mut tiny = CheckOutcome::new("mixture_kl<=1e-11*lsd s=1e-6", 0.0);
    for i in 0..trials.min(200) {
        let (q, qp, r) = random_triple(&mut trial_rng(seed, 6, i), 32);
        let m = mixture_kl_pair(&q, &qp, &r, 1e-6)?;
        tiny.record(1e-11 * m.lsd - m.exact_kl, || format!("seed {seed}, kl = {:e}, lsd = {:e}", m.exact_kl, m.lsd));
    }
    out.push(tiny);

    let ws = [0.5, 0.1, 0.01, 0.001];
    let sc = mixture_scaling(seed, trials, &ws)?;
    let mut decay = CheckOutcome::new("mixture_s2_scaling", 0.0);
    let ratio = sc.median_kl_over_lsd[3] / sc.median_kl_over_lsd[0];
    decay.record(1e-4 - ratio, || format!("median kl/lsd at s=1e-3 over s=0.5 is {ratio:e}"));
    let monotone = sc.median_kl_over_lsd.windows(2).all(|p| p[1] < p[0]);
    decay.record(if monotone { 0.0 } else { -1.0 }, || format!("medians not decreasing: {:?}", sc.median_kl_over_lsd));
    decay.note = Some(format!(
        "median kl/lsd {:?}; median kl/bound {:?} (tends to 1/2, not 0)",
        sc.median_kl_over_lsd.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>(),
        sc.median_kl_over_bound.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
    ));
    out.push(decay);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scalar lemmas
// ---------------------------------------------------------------------------

pub const TANH_SLOPE: f64 = 0.76159;

fn grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(move |i| if i + 1 == points { hi } else { lo + step * i as f64 })
}

pub fn lemma_checks(points: usize) -> Vec<CheckOutcome> {
    let mut tanh = CheckOutcome::new("|tanh x|>=0.76159|x| on [-1,1]", 0.0);
    for x in grid(-1.0, 1.0, points) {
        tanh.record(x.tanh().abs() - TANH_SLOPE * x.abs(), || format!("x = {x}"));
    }
    let mut mix = CheckOutcome::new("|1-e^-2x|>=min(|x|,1/2) on [-10,10]", 0.0);
    for x in grid(-10.0, 10.0, points) {
        mix.record(mix_norm_margin(x), || format!("x = {x}"));
    }
    vec![tanh, mix]
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

/// Largest relative error between the analytic gradient and central
/// differences over `coords`. The denominator is floored at `1e-2`.
pub fn grad_check(model: &Model, w: &[f64], z: &Example, coords: &[usize], h: f64) -> Result<f64> {
    let g = model.grad(w, z)?;
    let mut wp = w.to_vec();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let orig = wp[i];
        wp[i] = orig + h;
        let up = model.loss(&wp, z)?;
        wp[i] = orig - h;
        let down = model.loss(&wp, z)?;
        wp[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-2);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn random_example(rng: &mut RngStream, dim: usize, classes: usize) -> Example {
    Example { x: (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect(), y: rng.random_range(0..classes) }
}

/// Central-difference checks on `points` random `(w, z)` pairs per model:
/// quadratic (all coordinates), logistic at `w = 0` and random `w` (all
/// coordinates, `h = 1e−6`, `1e−5`), MLP (50 coordinates, `1e−4`).
pub fn gradient_checks(seed: u64, points: usize) -> Result<Vec<CheckOutcome>> {
    let quad = Model::Quadratic { target: vec![0.5, -1.0, 0.25, 2.0, 0.0] };
    let logi = Model::Logistic { dim: 8, classes: 4 };
    let mlp = Model::mlp(vec![8, 16, 12, 4])?;
    let mut out = Vec::new();
    for (name, model, tol, max_coords) in [
        ("grad quadratic", &quad, 1e-6, usize::MAX),
        ("grad logistic", &logi, 1e-5, usize::MAX),
        ("grad mlp", &mlp, 1e-4, 50),
    ] {
        // the margin already carries the tolerance
        let mut c = CheckOutcome::new(name, 0.0);
        let p = model.param_count();
        for i in 0..points {
            let mut rng = trial_rng(seed, 7, i);
            let w: Vec<f64> = if name == "grad logistic" && i == 0 {
                vec![0.0; p]
            } else {
                (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            let z = random_example(&mut rng, model.input_dim(), model.num_classes().max(1));
            let coords: Vec<usize> = if max_coords >= p {
                (0..p).collect()
            } else {
                rand::seq::index::sample(&mut rng, p, max_coords).into_vec()
            };
            let err = grad_check(model, &w, &z, &coords, 1e-6)?;
            c.record(tol - err, || format!("seed {seed}, relative error {err:e}"));
        }
        out.push(c);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Optimization rates and the small-alpha limit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSettings {
    pub dim: usize,
    pub horizon: u64,
    pub repeats: usize,
    /// Per-coordinate bound `R` on the symmetric mini-batch data.
    pub minibatch_radius: f64,
    pub minibatch_points: usize,
    pub batch: usize,
    pub sgld_alpha: f64,
    pub c3: f64,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self {
            dim: 10,
            horizon: 10_000,
            repeats: 20,
            minibatch_radius: 1.0,
            minibatch_points: 100,
            batch: 10,
            sgld_alpha: 0.1,
            c3: 8.0,
        }
    }
}

/// Unit-distance quadratic: one example at the origin, optimum at `w*`,
/// `‖w₀ − w*‖ = 1`. `L_S(w₀) − L* = ½`.
fn unit_quadratic(dim: usize) -> (Model, Dataset, Vec<f64>) {
    let target = vec![1.0 / (dim as f64).sqrt(); dim];
    let m = Model::Quadratic { target };
    let d = Dataset::new(vec![Example { x: vec![0.0; dim], y: 0 }], vec![Example { x: vec![0.0; dim], y: 0 }], 1)
        .expect("valid");
    (m, d, vec![0.0; dim])
}

/// Paired `±x_i` points with `|x_ij| ≤ R`, so `∇L_S` is the noiseless
/// quadratic gradient and the mini-batch noise is symmetric with
/// sub-Gaussian proxy `R/√b` along every unit direction.
fn symmetric_quadratic(dim: usize, pairs: usize, radius: f64, seed: u64) -> (Model, Dataset) {
    let mut rng = stream(seed, 8);
    let mut examples = Vec::with_capacity(2 * pairs);
    for _ in 0..pairs {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        x.iter_mut().for_each(|v| *v *= radius / norm);
        examples.push(Example { x: x.iter().map(|v| -v).collect(), y: 0 });
        examples.push(Example { x, y: 0 });
    }
    let pool = examples[..2].to_vec();
    let target = vec![1.0 / (dim as f64).sqrt(); dim];
    (Model::Quadratic { target }, Dataset::new(examples, pool, 1).expect("valid"))
}

fn repeated_runs(
    model: &Model,
    data: &Dataset,
    w0: &[f64],
    optimizer: OptimizerSpec,
    horizon: u64,
    repeats: usize,
    seed: u64,
) -> Result<Vec<ConvergenceRun>> {
    let loss0 = model.full_loss(w0, &data.examples)?;
    let mean_x: Vec<f64> = {
        let n = data.n() as f64;
        (0..w0.len()).map(|j| data.examples.iter().map(|e| e.x[j]).sum::<f64>() / n).collect()
    };
    let w_star: Vec<f64> = match model {
        Model::Quadratic { target } => target.iter().zip(&mean_x).map(|(t, m)| t + m).collect(),
        _ => return Err(Error::Unsupported("rate checks need a model with a known minimizer".into())),
    };
    let loss_star = model.full_loss(&w_star, &data.examples)?;
    (0..repeats)
        .map(|r| {
            let cfg = TrainConfig {
                optimizer: optimizer.clone(),
                steps: horizon,
                seed: seed.wrapping_mul(1000).wrapping_add(r as u64),
                w0: Some(w0.to_vec()),
                snapshot_every: 0,
            };
            let mut obs = ConvergenceObserver::new(loss0, loss_star);
            run_training(&cfg, model, data, &mut [&mut obs])?;
            Ok(obs.run)
        })
        .collect()
}

fn rate_outcome(name: &str, check: RateCheck) -> CheckOutcome {
    let mut c = CheckOutcome::new(name, 0.0);
    c.record(check.rhs - check.lhs, || format!("lhs = {:e}, rhs = {:e}", check.lhs, check.rhs));
    c.note = Some(format!("lhs = {:.6e}, rhs = {:.6e}", check.lhs, check.rhs));
    c
}

/// Full-batch noisy sign-SGD with `α_t = max(‖∇L_S(w_{t−1})‖_∞, 10⁻⁶)`.
pub fn signsgd_full_check(seed: u64, s: &ConvergenceSettings) -> Result<RateCheck> {
    let (m, d, w0) = unit_quadratic(s.dim);
    let eta = 1.0 / (s.horizon as f64).sqrt();
    let opt = OptimizerSpec {
        kind: OptimizerKind::NoisySignSgd {
            eta: Schedule::Constant(eta),
            alpha: AlphaRule::GradInfNorm { factor: 1.0, floor: 1e-6 },
        },
        batch: BatchMode::Full,
    };
    let runs = repeated_runs(&m, &d, &w0, opt, s.horizon, s.repeats, seed)?;
    verify_signsgd_full(&OptCheckConfig { k_vec: vec![1.0; s.dim], kappa: vec![0.0], horizon: s.horizon }, &runs)
}

/// Mini-batch noisy sign-SGD on the symmetric construction with
/// `α_t = max(4‖∇L_S(w_{t−1})‖_∞, √2·R/√b)`.
pub fn signsgd_minibatch_check(seed: u64, s: &ConvergenceSettings) -> Result<RateCheck> {
    let (m, d) = symmetric_quadratic(s.dim, s.minibatch_points / 2, s.minibatch_radius, seed);
    let w0 = vec![0.0; s.dim];
    let kappa = s.minibatch_radius / (s.batch as f64).sqrt();
    let eta = 1.0 / (s.horizon as f64).sqrt();
    let opt = OptimizerSpec {
        kind: OptimizerKind::NoisySignSgd {
            eta: Schedule::Constant(eta),
            alpha: AlphaRule::GradInfNorm { factor: 4.0, floor: 2f64.sqrt() * kappa },
        },
        batch: BatchMode::MiniBatch(s.batch),
    };
    let runs = repeated_runs(&m, &d, &w0, opt, s.horizon, s.repeats, seed)?;
    verify_signsgd_minibatch(&OptCheckConfig { k_vec: vec![1.0; s.dim], kappa: vec![kappa], horizon: s.horizon }, &runs)
}

/// Full-batch SGLD with constant `α_t` and `η_t = 1/√T`. Also returns the
/// average over the pre-step iterates `w₀..w_{T−1}`.
pub fn sgld_check(seed: u64, s: &ConvergenceSettings) -> Result<(RateCheck, f64)> {
    let (m, d, w0) = unit_quadratic(s.dim);
    let eta = 1.0 / (s.horizon as f64).sqrt();
    let opt = OptimizerSpec {
        kind: OptimizerKind::Sgld { eta: Schedule::Constant(eta), sigma: SigmaRule::RatioToEta(s.sgld_alpha) },
        batch: BatchMode::Full,
    };
    let runs = repeated_runs(&m, &d, &w0, opt, s.horizon, s.repeats, seed)?;
    let g0: f64 = m.full_grad(&w0, &d.examples)?.iter().map(|v| v * v).sum();
    let pre_step = runs
        .iter()
        .map(|r| (g0 + r.grad_sq[..r.grad_sq.len() - 1].iter().sum::<f64>()) / s.horizon as f64)
        .sum::<f64>()
        / runs.len() as f64;
    let check = verify_sgld(
        &OptCheckConfig { k_vec: vec![1.0; s.dim], kappa: vec![0.0], horizon: s.horizon },
        &runs,
        s.dim,
        s.c3,
    )?;
    Ok((check, pre_step))
}

/// Fraction of coordinates where a noisy sign step agrees with the sign
/// step, over `draws` single steps with `|g_i| ≥ 10α`.
pub fn sign_agreement(seed: u64, draws: usize, alpha: f64) -> Result<f64> {
    let mut rng = stream(seed, 9);
    let dim = 10;
    let grad: Vec<f64> = (0..dim)
        .map(|_| {
            let mag = 10.0 * alpha * rng.random_range(1.0..5.0);
            if rng.random::<bool>() { mag } else { -mag }
        })
        .collect();
    let mut state = TrainState::new(vec![0.0; dim], seed);
    let (mut agree, mut total) = (0usize, 0usize);
    for _ in 0..draws {
        let before = state.w.clone();
        state = efld_step(state, ExpFamily::BernoulliPm1, &grad, 1.0, alpha)?;
        for j in 0..dim {
            let moved = before[j] - state.w[j];
            agree += (moved.signum() == grad[j].signum()) as usize;
            total += 1;
        }
    }
    Ok(agree as f64 / total as f64)
}

pub fn convergence_checks(seed: u64, s: &ConvergenceSettings) -> Result<Vec<CheckOutcome>> {
    let mut out = vec![
        rate_outcome("signsgd full-batch 5c/(3sqrtT)", signsgd_full_check(seed, s)?),
        rate_outcome("signsgd mini-batch 4c", signsgd_minibatch_check(seed, s)?),
    ];
    let (sgld, pre_step) = sgld_check(seed, s)?;
    let mut c = rate_outcome("sgld (K/2T)sum(p a^2 + c3 k^2)", sgld);
    c.note = Some(format!(
        "lhs = {:.6e} over w_1..w_T, {pre_step:.6e} over w_0..w_(T-1); rhs = {:.6e}",
        sgld.lhs, sgld.rhs
    ));
    out.push(c);
    let agree = sign_agreement(seed, 100_000, 0.01)?;
    let mut a = CheckOutcome::new("sign agreement |g|>=10a", 0.0);
    a.record(agree - 0.999, || format!("agreement {agree}"));
    out.push(a);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for n in Suite::NAMES {
            assert!(Suite::from_name(n).is_some());
        }
        assert!(Suite::from_name("bogus").is_none());
    }

    #[test]
    fn lemmas_pass() {
        let r = SuiteReport { checks: lemma_checks(10_000) };
        assert!(r.passed(), "{}", r.render());
        assert_eq!(r.checks[0].trials(), 10_000);
    }

    #[test]
    fn literal_chain_counterexample() {
        let p = FiniteDist::new(vec![1.0, 0.0]).unwrap();
        let q = FiniteDist::new(vec![0.01, 0.99]).unwrap();
        let h2 = hellinger_sq(&p, &q).unwrap();
        let kl = kl_div(&p, &q).unwrap();
        assert!((2.0 * h2 - 1.8).abs() < 1e-12);
        assert!(2.0 * h2 > (kl / 2.0).sqrt());
        assert!(2.0 * h2 <= (2.0 * kl).sqrt());
    }

    #[test]
    fn small_suites_pass() {
        let checks = lsd_bound_checks(1, 40, 40).unwrap();
        assert!(checks.iter().all(CheckOutcome::passed), "{}", SuiteReport { checks }.render());
        let checks = mixture_checks(1, 100).unwrap();
        assert!(checks.iter().all(CheckOutcome::passed), "{}", SuiteReport { checks }.render());
        let checks = gradient_checks(1, 10).unwrap();
        assert!(checks.iter().all(CheckOutcome::passed), "{}", SuiteReport { checks }.render());
    }

    #[test]
    fn failing_trial_is_listed() {
        let mut c = CheckOutcome::new("x", 0.0);
        c.record(1.0, String::new);
        c.record(-0.5, || "seed 3".into());
        assert!(!c.passed());
        assert_eq!(c.worst_margin(), -0.5);
        assert!(c.failures[0].contains("trial 1") && c.failures[0].contains("seed 3"));
        let mut buf = Vec::new();
        SuiteReport { checks: vec![c] }.write_margins_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "check,trial,margin\nx,0,1e0\nx,1,-5e-1\n");
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
