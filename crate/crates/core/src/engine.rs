//! The EFLD update loop and its specializations.
//!
//! One EFLD step draws `ξ_t` from the chosen family with natural parameter
//! `θ_t = ∇ℓ(w_{t−1}, S_{B_t}) / α_t` and moves `w_t = w_{t−1} − ρ_t ξ_t`.
//! With Gaussian noise and `(ρ, α) = (η, σ/η)` this is SGLD; with
//! `{−1, +1}` noise it is noisy sign-SGD.

use rand::Rng;

use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::expfam::{ExpFamily, ScaledParam};
use crate::models::Model;
use crate::rng::{stream, streams, RngStream};

/// Floor applied to data-dependent scalings so that `θ/α` stays finite.
pub const ALPHA_MIN: f64 = 1e-8;
/// Largest pool used for the pairwise gradient-distance estimate.
pub const MAX_DELTA_POOL: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// `base · rate^⌊epoch / every_epochs⌋`.
    StepDecay { base: f64, rate: f64, every_epochs: u64 },
    /// `base / √t` for step `t ≥ 1`.
    InverseSqrt { base: f64 },
}

impl Schedule {
    pub fn at(&self, t: u64, epoch: u64) -> f64 {
        match *self {
            Schedule::Constant(v) => v,
            Schedule::StepDecay { base, rate, every_epochs } => {
                base * rate.powi((epoch / every_epochs.max(1)) as i32)
            }
            Schedule::InverseSqrt { base } => base / (t.max(1) as f64).sqrt(),
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Schedule::Constant(v) => v > 0.0 && v.is_finite(),
            Schedule::StepDecay { base, rate, every_epochs } => {
                base > 0.0 && base.is_finite() && rate > 0.0 && rate.is_finite() && every_epochs >= 1
            }
            Schedule::InverseSqrt { base } => base > 0.0 && base.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("schedule `{name}` must stay positive and finite: {self:?}")))
        }
    }
}

/// How the scaling `α_t` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaRule {
    Fixed(Schedule),
    /// `α_t = max(safety · √(8c₂) · Δ̂_t, alpha_min)` with `Δ̂_t` the largest
    /// pairwise per-example gradient distance over `pool_size` points drawn
    /// from the training set and the held-out pool.
    Adaptive { safety: f64, pool_size: usize, alpha_min: f64 },
    /// `α_t = max(factor · ‖∇L_S(w_{t−1})‖_∞, floor)`.
    GradInfNorm { factor: f64, floor: f64 },
}

/// Noise level for SGLD.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaRule {
    Schedule(Schedule),
    /// `σ_t = ratio · η_t`, i.e. a constant `α = ratio`.
    RatioToEta(f64),
    /// Inverse temperature `β = 2η/σ²`, i.e. `σ_t = √(2η_t/β)`.
    InverseTemperature(f64),
}

impl SigmaRule {
    pub fn at(&self, eta: f64, t: u64, epoch: u64) -> f64 {
        match self {
            SigmaRule::Schedule(s) => s.at(t, epoch),
            SigmaRule::RatioToEta(r) => r * eta,
            SigmaRule::InverseTemperature(beta) => (2.0 * eta / beta).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerKind {
    Efld { family: ExpFamily, rho: Schedule, alpha: AlphaRule },
    Sgld { eta: Schedule, sigma: SigmaRule },
    NoisySignSgd { eta: Schedule, alpha: AlphaRule },
    SignSgd { eta: Schedule },
    Sgd { eta: Schedule },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    Full,
    MiniBatch(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub batch: BatchMode,
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        if let BatchMode::MiniBatch(0) = self.batch {
            return Err(Error::config("batch_size must be >= 1"));
        }
        let check_alpha = |a: &AlphaRule| match a {
            AlphaRule::Fixed(s) => s.validate("alpha"),
            AlphaRule::Adaptive { safety, pool_size, alpha_min } => {
                if !(*safety >= 1.0) {
                    Err(Error::config(format!("alpha.safety must be >= 1, got {safety}")))
                } else if *pool_size < 2 {
                    Err(Error::config(format!("alpha.pool_size must be >= 2, got {pool_size}")))
                } else if !(*alpha_min > 0.0) {
                    Err(Error::config("alpha.alpha_min must be > 0"))
                } else {
                    Ok(())
                }
            }
            AlphaRule::GradInfNorm { factor, floor } => {
                if *factor > 0.0 && *floor > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config("alpha.factor and alpha.floor must be > 0"))
                }
            }
        };
        match &self.kind {
            OptimizerKind::Efld { rho, alpha, .. } => {
                rho.validate("rho")?;
                check_alpha(alpha)
            }
            OptimizerKind::Sgld { eta, sigma } => {
                eta.validate("eta")?;
                match sigma {
                    SigmaRule::Schedule(s) => s.validate("sigma"),
                    SigmaRule::RatioToEta(r) if *r > 0.0 && r.is_finite() => Ok(()),
                    SigmaRule::InverseTemperature(b) if *b > 0.0 && b.is_finite() => Ok(()),
                    other => Err(Error::config(format!("invalid sigma rule {other:?}"))),
                }
            }
            OptimizerKind::NoisySignSgd { eta, alpha } => {
                eta.validate("eta")?;
                check_alpha(alpha)
            }
            OptimizerKind::SignSgd { eta } | OptimizerKind::Sgd { eta } => eta.validate("eta"),
        }
    }

    /// Noise family used by the update, if any.
    pub fn family(&self) -> Option<ExpFamily> {
        match &self.kind {
            OptimizerKind::Efld { family, .. } => Some(*family),
            OptimizerKind::Sgld { .. } => Some(ExpFamily::Gaussian),
            OptimizerKind::NoisySignSgd { .. } => Some(ExpFamily::BernoulliPm1),
            _ => None,
        }
    }

    pub fn batch_size(&self, n: usize) -> usize {
        match self.batch {
            BatchMode::Full => n,
            BatchMode::MiniBatch(b) => b,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub w: Vec<f64>,
    pub t: u64,
    pub epoch: u64,
    pub rng: RngStream,
}

impl TrainState {
    pub fn new(w: Vec<f64>, seed: u64) -> Self {
        Self { w, t: 0, epoch: 0, rng: stream(seed, streams::TRAIN) }
    }
}

/// `b` indices drawn i.i.d. uniformly from `0..n`, with replacement.
pub fn sample_minibatch<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 || b == 0 {
        return Err(Error::domain(format!("need n >= 1 and b >= 1, got n = {n}, b = {b}")));
    }
    Ok((0..b).map(|_| rng.random_range(0..n)).collect())
}

fn check_finite_grad(grad: &[f64], step: u64) -> Result<()> {
    match grad.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(Error::Numeric { step, msg: format!("non-finite gradient component {i}: {}", grad[i]) }),
        None => Ok(()),
    }
}

/// One EFLD update: `w ← w − ρ ξ`, `ξ ∼ p_ψ(·; grad/α)`.
pub fn efld_step(mut state: TrainState, family: ExpFamily, grad: &[f64], rho: f64, alpha: f64) -> Result<TrainState> {
    let step = state.t + 1;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::domain(format!("rho must be > 0, got {rho}")));
    }
    check_finite_grad(grad, step)?;
    if grad.len() != state.w.len() {
        return Err(Error::Shape { expected: state.w.len(), got: grad.len() });
    }
    let param = ScaledParam::new(grad.to_vec(), alpha)?;
    let xi = family.sample_noise(&param, &mut state.rng);
    for (w, x) in state.w.iter_mut().zip(&xi.0) {
        *w -= rho * x;
    }
    state.t = step;
    Ok(state)
}

/// Sign-SGD baseline, `w ← w − η sign(grad)` with `sign(0) = +1`.
pub fn sign_sgd_step(mut state: TrainState, grad: &[f64], eta: f64) -> TrainState {
    for (w, g) in state.w.iter_mut().zip(grad) {
        *w -= if *g >= 0.0 { eta } else { -eta };
    }
    state.t += 1;
    state
}

/// SGLD in EFLD coordinates: `(ρ, α) = (η, σ/η)`.
pub fn sgld_params(eta: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(eta > 0.0 && sigma > 0.0) || !eta.is_finite() || !sigma.is_finite() {
        return Err(Error::config(format!("eta and sigma must be > 0, got eta = {eta}, sigma = {sigma}")));
    }
    Ok((eta, sigma / eta))
}

/// Largest pairwise distance `max ‖∇ℓ(w, z) − ∇ℓ(w, z′)‖₂` over `pool`.
pub fn max_pairwise_grad_distance(model: &Model, w: &[f64], pool: &[&Example]) -> Result<f64> {
    if pool.len() < 2 {
        return Err(Error::domain(format!("gradient-distance pool needs >= 2 points, got {}", pool.len())));
    }
    let grads: Vec<Vec<f64>> = pool.iter().map(|z| model.grad(w, z)).collect::<Result<_>>()?;
    let mut best: f64 = 0.0;
    for i in 0..grads.len() {
        for j in i + 1..grads.len() {
            let d: f64 = grads[i].iter().zip(&grads[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.max(d);
        }
    }
    Ok(best.sqrt())
}

/// `safety · √(8c₂) · Δ̂` over the pool (exact over all pairs). Not floored.
pub fn adaptive_alpha(model: &Model, w: &[f64], pool: &[&Example], c2: f64, safety: f64) -> Result<f64> {
    let delta = max_pairwise_grad_distance(model, w, pool)?;
    Ok(safety * (8.0 * c2).sqrt() * delta)
}

/// Up to `m` distinct points drawn from the training set and held-out pool.
pub fn delta_pool<'a, R: Rng + ?Sized>(data: &'a Dataset, m: usize, rng: &mut R) -> Vec<&'a Example> {
    let total = data.examples.len() + data.held_out_pool.len();
    let m = m.min(total).min(MAX_DELTA_POOL);
    rand::seq::index::sample(rng, total, m)
        .into_iter()
        .map(|i| if i < data.examples.len() { &data.examples[i] } else { &data.held_out_pool[i - data.examples.len()] })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Everything an observer sees after a step.
#[derive(Debug)]
pub struct StepInfo<'a> {
    pub t: u64,
    pub epoch: u64,
    pub w_prev: &'a [f64],
    pub w: &'a [f64],
    pub batch: &'a [usize],
    /// Step size `η_t` (equal to `ρ_t` for EFLD-type updates).
    pub eta: f64,
    pub rho: f64,
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub delta_hat: Option<f64>,
    /// Last step of an epoch.
    pub epoch_end: bool,
    pub model: &'a Model,
    pub data: &'a Dataset,
}

pub trait Observer {
    fn on_step(&mut self, info: &StepInfo<'_>) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub epoch: u64,
    pub eta: f64,
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub w0: Vec<f64>,
    pub w_final: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// `(t, w_t)` every `snapshot_every` steps.
    pub snapshots: Vec<(u64, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerSpec,
    pub steps: u64,
    pub seed: u64,
    /// Starting point; the model's deterministic initialization when absent.
    pub w0: Option<Vec<f64>>,
    /// 0 disables snapshots.
    pub snapshot_every: u64,
}

impl TrainConfig {
    pub fn steps_per_epoch(&self, n: usize) -> u64 {
        let b = self.optimizer.batch_size(n).max(1);
        (n.div_ceil(b)).max(1) as u64
    }
}

/// Runs `config.steps` updates and reports each one to `observers`.
pub fn run_training(
    config: &TrainConfig,
    model: &Model,
    data: &Dataset,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory> {
    config.optimizer.validate()?;
    let n = data.n();
    if n == 0 {
        return Err(Error::config("training set is empty"));
    }
    let w0 = match &config.w0 {
        Some(w) => {
            if w.len() != model.param_count() {
                return Err(Error::Shape { expected: model.param_count(), got: w.len() });
            }
            w.clone()
        }
        None => model.init_params(config.seed),
    };
    let spe = config.steps_per_epoch(n);
    let all: Vec<usize> = (0..n).collect();
    let mut state = TrainState::new(w0.clone(), config.seed);
    let mut steps = Vec::with_capacity(config.steps as usize);
    let mut snapshots = Vec::new();

    for t in 1..=config.steps {
        let epoch = (t - 1) / spe;
        state.epoch = epoch;
        let batch = match config.optimizer.batch {
            BatchMode::Full => all.clone(),
            BatchMode::MiniBatch(b) => sample_minibatch(n, b, &mut state.rng)?,
        };
        let grad = model.batch_grad_idx(&state.w, &data.examples, &batch)?;
        check_finite_grad(&grad, t)?;
        let w_prev = state.w.clone();

        let mut delta_hat = None;
        let mut eval_alpha = |rule: &AlphaRule, c2: f64, state: &mut TrainState| -> Result<f64> {
            Ok(match rule {
                AlphaRule::Fixed(s) => s.at(t, epoch),
                AlphaRule::Adaptive { safety, pool_size, alpha_min } => {
                    let pool = delta_pool(data, *pool_size, &mut state.rng);
                    let d = max_pairwise_grad_distance(model, &state.w, &pool)?;
                    delta_hat = Some(d);
                    (safety * (8.0 * c2).sqrt() * d).max(*alpha_min)
                }
                AlphaRule::GradInfNorm { factor, floor } => {
                    let full = if config.optimizer.batch == BatchMode::Full {
                        inf_norm(&grad)
                    } else {
                        inf_norm(&model.full_grad(&state.w, &data.examples)?)
                    };
                    (factor * full).max(*floor)
                }
            })
        };

        let (eta, rho, alpha, sigma);
        match &config.optimizer.kind {
            OptimizerKind::Efld { family, rho: rho_s, alpha: rule } => {
                let r = rho_s.at(t, epoch);
                let a = eval_alpha(rule, family.c2(), &mut state)?;
                state = efld_step(state, *family, &grad, r, a)?;
                (eta, rho, alpha, sigma) = (r, r, Some(a), None);
            }
            OptimizerKind::Sgld { eta: eta_s, sigma: sigma_rule } => {
                let e = eta_s.at(t, epoch);
                let s = sigma_rule.at(e, t, epoch);
                let (r, a) = sgld_params(e, s)?;
                state = efld_step(state, ExpFamily::Gaussian, &grad, r, a)?;
                (eta, rho, alpha, sigma) = (e, r, Some(a), Some(s));
            }
            OptimizerKind::NoisySignSgd { eta: eta_s, alpha: rule } => {
                let e = eta_s.at(t, epoch);
                let a = eval_alpha(rule, ExpFamily::BernoulliPm1.c2(), &mut state)?;
                state = efld_step(state, ExpFamily::BernoulliPm1, &grad, e, a)?;
                (eta, rho, alpha, sigma) = (e, e, Some(a), None);
            }
            OptimizerKind::SignSgd { eta: eta_s } => {
                let e = eta_s.at(t, epoch);
                state = sign_sgd_step(state, &grad, e);
                (eta, rho, alpha, sigma) = (e, e, None, None);
            }
            OptimizerKind::Sgd { eta: eta_s } => {
                let e = eta_s.at(t, epoch);
                for (w, g) in state.w.iter_mut().zip(&grad) {
                    *w -= e * g;
                }
                state.t += 1;
                (eta, rho, alpha, sigma) = (e, e, None, None);
            }
        }
        if let Some(i) = state.w.iter().position(|v| !v.is_finite()) {
            let norm = w_prev.iter().map(|v| v * v).sum::<f64>().sqrt();
            return Err(Error::Numeric {
                step: t,
                msg: format!("parameter {i} became {} (‖w_prev‖ = {norm:e}, eta = {eta:e})", state.w[i]),
            });
        }

        let info = StepInfo {
            t,
            epoch,
            w_prev: &w_prev,
            w: &state.w,
            batch: &batch,
            eta,
            rho,
            alpha,
            sigma,
            delta_hat,
            epoch_end: t % spe == 0,
            model,
            data,
        };
        for obs in observers.iter_mut() {
            obs.on_step(&info)?;
        }
        steps.push(StepRecord { t, epoch, eta, alpha, sigma });
        if config.snapshot_every > 0 && t % config.snapshot_every == 0 {
            snapshots.push((t, state.w.clone()));
        }
    }
    Ok(Trajectory { w0, w_final: state.w, steps, snapshots })
}

// ---------------------------------------------------------------------------
// Optimization-rate checks
// ---------------------------------------------------------------------------

/// Constants of the smoothness / mini-batch noise assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct OptCheckConfig {
    /// Per-coordinate smoothness constants.
    pub k_vec: Vec<f64>,
    /// Sub-Gaussian proxy of the mini-batch gradient noise, per step.
    pub kappa: Vec<f64>,
    pub horizon: u64,
}

impl OptCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_vec.iter().chain(&self.kappa).any(|v| !(*v >= 0.0)) {
            return Err(Error::config("smoothness and sub-Gaussian constants must be >= 0"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be >= 1"));
        }
        Ok(())
    }

    fn kappa_at(&self, t: usize) -> f64 {
        self.kappa.get(t).or(self.kappa.last()).copied().unwrap_or(0.0)
    }
}

/// Per-step statistics of one optimization run on `L_S`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceRun {
    /// `‖∇L_S(w_t)‖²` at the iterate produced by step `t = 1..T`.
    pub grad_sq: Vec<f64>,
    /// `‖∇L_S(w_{t−1})‖_∞` at the point the step `t` was taken from.
    pub grad_inf_before: Vec<f64>,
    pub alpha: Vec<f64>,
    pub rho: Vec<f64>,
    pub loss_initial: f64,
    pub loss_star: f64,
}

/// Observer recording the statistics needed by the rate checks.
#[derive(Debug, Default)]
pub struct ConvergenceObserver {
    pub run: ConvergenceRun,
    last_inf: Option<f64>,
}

impl ConvergenceObserver {
    pub fn new(loss_initial: f64, loss_star: f64) -> Self {
        Self { run: ConvergenceRun { loss_initial, loss_star, ..Default::default() }, last_inf: None }
    }
}

impl Observer for ConvergenceObserver {
    fn on_step(&mut self, info: &StepInfo<'_>) -> Result<()> {
        let before = match self.last_inf {
            Some(v) => v,
            None => inf_norm(&info.model.full_grad(info.w_prev, &info.data.examples)?),
        };
        let g = info.model.full_grad(info.w, &info.data.examples)?;
        self.run.grad_sq.push(g.iter().map(|v| v * v).sum());
        self.run.grad_inf_before.push(before);
        self.last_inf = Some(inf_norm(&g));
        self.run.alpha.push(info.alpha.unwrap_or(f64::NAN));
        self.run.rho.push(info.rho);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

fn mean_lhs(runs: &[ConvergenceRun], horizon: u64) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::domain("no runs to check"));
    }
    let mut total = 0.0;
    for (r, run) in runs.iter().enumerate() {
        if run.grad_sq.len() as u64 != horizon {
            return Err(Error::domain(format!("run {r} has {} steps, expected {horizon}", run.grad_sq.len())));
        }
        total += run.grad_sq.iter().sum::<f64>() / horizon as f64;
    }
    Ok(total / runs.len() as f64)
}

fn check_step_size(runs: &[ConvergenceRun], horizon: u64) -> Result<()> {
    let target = 1.0 / (horizon as f64).sqrt();
    for (r, run) in runs.iter().enumerate() {
        if let Some(t) = run.rho.iter().position(|v| (v - target).abs() > 1e-12 * target) {
            return Err(Error::domain(format!(
                "run {r} step {}: step size {} differs from 1/sqrt(T) = {target}",
                t + 1,
                run.rho[t]
            )));
        }
    }
    Ok(())
}

fn check_alpha_bracket(runs: &[ConvergenceRun], lower: impl Fn(usize, &ConvergenceRun) -> f64) -> Result<f64> {
    let mut c: f64 = 0.0;
    for (r, run) in runs.iter().enumerate() {
        for (t, &a) in run.alpha.iter().enumerate() {
            let lo = lower(t, run);
            if !(a >= lo) {
                return Err(Error::domain(format!(
                    "run {r} step {}: alpha = {a} is below the required {lo}",
                    t + 1
                )));
            }
            c = c.max(a);
        }
    }
    Ok(c)
}

fn gap(runs: &[ConvergenceRun]) -> f64 {
    runs[0].loss_initial - runs[0].loss_star
}

/// Full-batch noisy sign-SGD:
/// `E[(1/T)Σ‖∇L_S(w_t)‖²] ≤ (5c/(3√T)) (L_S(w₀) − L_S(w*) + ½‖K‖₁)`
/// with `ρ_t = 1/√T` and `c ≥ α_t ≥ ‖∇L_S‖_∞`; `c` is taken as `max α_t`.
pub fn verify_signsgd_full(config: &OptCheckConfig, runs: &[ConvergenceRun]) -> Result<RateCheck> {
    config.validate()?;
    let lhs = mean_lhs(runs, config.horizon)?;
    check_step_size(runs, config.horizon)?;
    let c = check_alpha_bracket(runs, |t, run| run.grad_inf_before[t])?;
    let k1: f64 = config.k_vec.iter().sum();
    let rhs = 5.0 * c / (3.0 * (config.horizon as f64).sqrt()) * (gap(runs) + 0.5 * k1);
    Ok(RateCheck { lhs, rhs, pass: lhs <= rhs })
}

/// Mini-batch noisy sign-SGD with the `4c` constant and
/// `c ≥ α_t ≥ max(√2 κ_t, 4‖∇L_S‖_∞)`.
pub fn verify_signsgd_minibatch(config: &OptCheckConfig, runs: &[ConvergenceRun]) -> Result<RateCheck> {
    config.validate()?;
    let lhs = mean_lhs(runs, config.horizon)?;
    check_step_size(runs, config.horizon)?;
    let c = check_alpha_bracket(runs, |t, run| {
        (2f64.sqrt() * config.kappa_at(t)).max(4.0 * run.grad_inf_before[t])
    })?;
    let k1: f64 = config.k_vec.iter().sum();
    let rhs = 4.0 * c / (config.horizon as f64).sqrt() * (gap(runs) + 0.5 * k1);
    Ok(RateCheck { lhs, rhs, pass: lhs <= rhs })
}

/// SGLD with `η_t = 1/√T` and isotropic smoothness `K`:
/// `(1/T)ΣE‖∇L_S(w_t)‖² ≤ (L_S(w₁) − L_S(w*))/√T + (K/2T)Σ(p α_t² + c₃ κ_t²)/√T`.
pub fn verify_sgld(config: &OptCheckConfig, runs: &[ConvergenceRun], dim: usize, c3: f64) -> Result<RateCheck> {
    config.validate()?;
    let k = config.k_vec.iter().cloned().fold(0.0, f64::max);
    if config.k_vec.iter().any(|v| *v != k) {
        return Err(Error::domain("the SGLD rate assumes equal smoothness constants"));
    }
    let lhs = mean_lhs(runs, config.horizon)?;
    check_step_size(runs, config.horizon)?;
    let t_f = config.horizon as f64;
    let mut worst: f64 = 0.0;
    for run in runs {
        let s: f64 = run
            .alpha
            .iter()
            .enumerate()
            .map(|(t, a)| dim as f64 * a * a + c3 * config.kappa_at(t).powi(2))
            .sum();
        worst = worst.max(s);
    }
    let rhs = gap(runs) / t_f.sqrt() + (k / (2.0 * t_f)) * worst / t_f.sqrt();
    Ok(RateCheck { lhs, rhs, pass: lhs <= rhs })
}

/// Smallest `κ` with `mean exp(λ⟨v, g_B − ∇L_S⟩) ≤ exp(λ²κ²/2)` over
/// `directions` random unit vectors and `λ ∈ {0.5, 1, 2}`, estimated from
/// `batches` independent mini-batches of size `b`.
pub fn estimate_kappa<R: Rng + ?Sized>(
    model: &Model,
    w: &[f64],
    examples: &[Example],
    b: usize,
    batches: usize,
    directions: usize,
    rng: &mut R,
) -> Result<f64> {
    let full = model.full_grad(w, examples)?;
    let devs: Vec<Vec<f64>> = (0..batches)
        .map(|_| {
            let idx = sample_minibatch(examples.len(), b, rng)?;
            let g = model.batch_grad_idx(w, examples, &idx)?;
            Ok(g.iter().zip(&full).map(|(a, c)| a - c).collect())
        })
        .collect::<Result<_>>()?;
    let mut kappa: f64 = 0.0;
    for _ in 0..directions {
        let mut v: Vec<f64> = (0..w.len()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        v.iter_mut().for_each(|x| *x /= norm);
        let proj: Vec<f64> = devs.iter().map(|d| d.iter().zip(&v).map(|(a, c)| a * c).sum()).collect();
        for lambda in [0.5, 1.0, 2.0] {
            let mgf = proj.iter().map(|p| (lambda * p).exp()).sum::<f64>() / proj.len() as f64;
            if mgf > 1.0 {
                kappa = kappa.max((2.0 * mgf.ln()).sqrt() / lambda);
            }
        }
    }
    Ok(kappa)
}
