//! Online accumulation of the expected-stability generalization bound.
//!
//! Each recorded step estimates `E‖∇ℓ(w, z) − ∇ℓ(w, z′)‖²` from `m` random
//! pairs (`z` from the training set, `z′` from the held-out pool) and adds
//! `weight · mean_disc / α_t²` to the running radicand. The bound is then
//! `(c₀√(5c₂)/n) · √radicand`.

use std::io::Write;

use rand::Rng;

use crate::data::{Dataset, Example};
use crate::engine::{max_pairwise_grad_distance, Observer, StepInfo};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::rng::{stream, streams, RngStream};

pub const CSV_COLUMNS: [&str; 14] = [
    "t",
    "epoch",
    "eta",
    "sigma",
    "alpha",
    "mean_disc",
    "mean_grad_sq",
    "incoh_surrogate",
    "delta_hat",
    "alpha_floor",
    "our_bound",
    "li_bound",
    "train_err",
    "test_err",
];

#[derive(Debug, Clone, PartialEq)]
pub struct BoundConfig {
    /// Training-set size.
    pub n: usize,
    /// Loss range constant (twice the loss clamp).
    pub c0: f64,
    /// Curvature bound of the noise family.
    pub c2: f64,
    /// Monte Carlo pairs per recorded step.
    pub pairs_per_step: usize,
    /// Record every this many steps; skipped steps are filled in with the
    /// next recorded contribution.
    pub eval_every: u64,
    /// Constant for the comparison bound; `c₀√(5c₂)` when absent.
    pub c_li: Option<f64>,
    /// Pool size for `Δ̂`; 0 skips it.
    pub delta_pool: usize,
    /// Compute the mini-batch incoherence surrogate (needs a full gradient).
    pub track_incoherence: bool,
}

impl BoundConfig {
    pub fn new(n: usize, c0: f64, c2: f64) -> Self {
        Self { n, c0, c2, pairs_per_step: 20, eval_every: 1, c_li: None, delta_pool: 0, track_incoherence: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("bound.n must be >= 1"));
        }
        if !(self.c0 > 0.0 && self.c2 > 0.0) {
            return Err(Error::config(format!("bound constants must be > 0, got c0 = {}, c2 = {}", self.c0, self.c2)));
        }
        if self.pairs_per_step == 0 {
            return Err(Error::config("bound.pairs_per_step must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("bound.eval_every must be >= 1"));
        }
        if self.delta_pool == 1 {
            return Err(Error::config("bound.delta_pool must be 0 or >= 2"));
        }
        Ok(())
    }

    /// A warning when the batch is larger than half the sample.
    pub fn batch_warning(&self, b: usize) -> Option<String> {
        (self.n < 2 * b).then(|| format!("n = {} is below 2b = {}; the bound assumes b <= n/2", self.n, 2 * b))
    }

    /// `c₀√(5c₂)`.
    pub fn constant(&self) -> f64 {
        self.c0 * (5.0 * self.c2).sqrt()
    }

    pub fn li_constant(&self) -> f64 {
        self.c_li.unwrap_or_else(|| self.constant())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub t: u64,
    pub epoch: u64,
    pub eta: f64,
    /// SGLD noise level; absent for other updates.
    pub sigma: Option<f64>,
    pub alpha: f64,
    /// Number of steps this row stands for.
    pub weight: u64,
    pub mean_disc: f64,
    pub mean_grad_sq: f64,
    pub incoh_surrogate: f64,
    pub delta_hat: f64,
    pub alpha_floor: f64,
    /// Radicands after this row.
    pub ours: f64,
    pub li: Option<f64>,
    pub train_err: f64,
    pub test_err: f64,
}

/// Values describing one step, independent of the gradient statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepValues {
    pub t: u64,
    pub epoch: u64,
    pub eta: f64,
    pub alpha: f64,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStats {
    pub mean_disc: f64,
    pub mean_grad_sq: f64,
    /// Largest `disc − 2(‖g‖² + ‖g′‖²)` seen; never positive beyond rounding.
    pub triangle_excess: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundLedger {
    pub rows: Vec<LedgerRow>,
    ours: f64,
    li: Option<f64>,
}

/// `‖∇ℓ(w, z) − ∇ℓ(w, z′)‖²`.
pub fn grad_discrepancy(model: &Model, w: &[f64], z: &Example, zprime: &Example) -> Result<f64> {
    let g = model.grad(w, z)?;
    let h = model.grad(w, zprime)?;
    Ok(sq_dist(&g, &h))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Monte Carlo estimate over `m` pairs, `z` uniform on the training set and
/// `z′` uniform on the held-out pool.
pub fn sample_pair_stats<R: Rng + ?Sized>(
    model: &Model,
    w: &[f64],
    data: &Dataset,
    m: usize,
    rng: &mut R,
) -> Result<PairStats> {
    if data.examples.is_empty() || data.held_out_pool.is_empty() {
        return Err(Error::config("bound meter needs a nonempty training set and held-out pool"));
    }
    if m == 0 {
        return Err(Error::config("pairs_per_step must be >= 1"));
    }
    let (mut disc, mut gsq, mut excess) = (0.0, 0.0, f64::NEG_INFINITY);
    for _ in 0..m {
        let z = &data.examples[rng.random_range(0..data.examples.len())];
        let zp = &data.held_out_pool[rng.random_range(0..data.held_out_pool.len())];
        let g = model.grad(w, z)?;
        let h = model.grad(w, zp)?;
        let d = sq_dist(&g, &h);
        let (ng, nh) = (sq_norm(&g), sq_norm(&h));
        disc += d;
        gsq += ng;
        excess = excess.max(d - 2.0 * (ng + nh));
    }
    Ok(PairStats { mean_disc: disc / m as f64, mean_grad_sq: gsq / m as f64, triangle_excess: excess })
}

/// `‖∇ℓ(w, S_B) − ∇L_S(w)‖²`, a stand-in for the mini-batch incoherence.
pub fn surrogate_incoherence(model: &Model, w: &[f64], batch: &[usize], data: &Dataset) -> Result<f64> {
    let gb = model.batch_grad_idx(w, &data.examples, batch)?;
    let full = model.full_grad(w, &data.examples)?;
    Ok(sq_dist(&gb, &full))
}

/// `(Δ̂, √(8c₂)·Δ̂)` over the pool.
pub fn delta_and_floor(model: &Model, w: &[f64], pool: &[&Example], c2: f64) -> Result<(f64, f64)> {
    let d = max_pairwise_grad_distance(model, w, pool)?;
    Ok((d, crate::divergence::alpha_floor(d, c2)))
}

fn li_term(eta: f64, sigma: f64, mean_grad_sq: f64) -> f64 {
    eta * eta * mean_grad_sq / (sigma * sigma)
}

impl BoundLedger {
    pub fn new() -> Self {
        Self { rows: Vec::new(), ours: 0.0, li: Some(0.0) }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ours_radicand(&self) -> f64 {
        self.ours
    }

    pub fn li_radicand(&self) -> Option<f64> {
        self.li
    }

    pub fn last_t(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.t)
    }

    /// Appends a row from precomputed statistics. `weight` is the number of
    /// steps the row stands for.
    pub fn push(&mut self, step: StepValues, weight: u64, stats: PairStats) -> Result<&mut LedgerRow> {
        if !(step.alpha > 0.0 && step.alpha.is_finite()) {
            return Err(Error::Numeric { step: step.t, msg: format!("alpha = {} in bound ledger", step.alpha) });
        }
        if !(stats.mean_disc >= 0.0 && stats.mean_grad_sq >= 0.0) {
            return Err(Error::Numeric { step: step.t, msg: "negative or NaN gradient statistic".into() });
        }
        let wgt = weight as f64;
        self.ours += wgt * stats.mean_disc / (step.alpha * step.alpha);
        self.li = match (self.li, step.sigma) {
            (Some(acc), Some(s)) => Some(acc + wgt * li_term(step.eta, s, stats.mean_grad_sq)),
            _ => None,
        };
        self.rows.push(LedgerRow {
            t: step.t,
            epoch: step.epoch,
            eta: step.eta,
            sigma: step.sigma,
            alpha: step.alpha,
            weight,
            mean_disc: stats.mean_disc,
            mean_grad_sq: stats.mean_grad_sq,
            incoh_surrogate: f64::NAN,
            delta_hat: f64::NAN,
            alpha_floor: f64::NAN,
            ours: self.ours,
            li: self.li,
            train_err: f64::NAN,
            test_err: f64::NAN,
        });
        Ok(self.rows.last_mut().expect("row just pushed"))
    }

    /// Samples pair statistics at `w` and appends a row. The row's weight is
    /// the distance to the previous recorded step.
    pub fn record_step<R: Rng + ?Sized>(
        &mut self,
        step: StepValues,
        model: &Model,
        w: &[f64],
        data: &Dataset,
        config: &BoundConfig,
        rng: &mut R,
    ) -> Result<&mut LedgerRow> {
        if step.t <= self.last_t() {
            return Err(Error::domain(format!("step {} recorded after step {}", step.t, self.last_t())));
        }
        let stats = sample_pair_stats(model, w, data, config.pairs_per_step, rng)?;
        let weight = step.t - self.last_t();
        self.push(step, weight, stats)
    }

    pub fn our_bound(&self, config: &BoundConfig) -> f64 {
        bound_from(config.constant(), config.n, self.ours)
    }

    pub fn li_bound(&self, config: &BoundConfig) -> Result<f64> {
        match self.li {
            Some(r) => Ok(bound_from(config.li_constant(), config.n, r)),
            None => Err(Error::Unsupported("the gradient-norm bound needs an SGLD noise level at every step".into())),
        }
    }

    /// Replays the ledger with every `α_t` (and `σ_t`, keeping `η_t`) multiplied by `k`.
    pub fn replay_scaled_alpha(&self, k: f64) -> Result<BoundLedger> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::domain(format!("alpha scale must be > 0, got {k}")));
        }
        let mut out = BoundLedger::new();
        for r in &self.rows {
            let step = StepValues {
                t: r.t,
                epoch: r.epoch,
                eta: r.eta,
                alpha: r.alpha * k,
                sigma: r.sigma.map(|s| s * k),
            };
            let stats = PairStats { mean_disc: r.mean_disc, mean_grad_sq: r.mean_grad_sq, triangle_excess: 0.0 };
            let row = out.push(step, r.weight, stats)?;
            row.incoh_surrogate = r.incoh_surrogate;
            row.delta_hat = r.delta_hat;
            row.alpha_floor = r.alpha_floor;
            row.train_err = r.train_err;
            row.test_err = r.test_err;
        }
        Ok(out)
    }

    /// Bound value after each row.
    pub fn our_bound_series(&self, config: &BoundConfig) -> Vec<f64> {
        self.rows.iter().map(|r| bound_from(config.constant(), config.n, r.ours)).collect()
    }

    /// Appends a row carrying only the error columns, for updates without a
    /// noise scale. The radicands are left untouched.
    pub fn push_unscored(&mut self, t: u64, epoch: u64, eta: f64, train_err: f64, test_err: f64) {
        self.li = None;
        self.rows.push(LedgerRow {
            t,
            epoch,
            eta,
            sigma: None,
            alpha: f64::NAN,
            weight: t - self.last_t(),
            mean_disc: f64::NAN,
            mean_grad_sq: f64::NAN,
            incoh_surrogate: f64::NAN,
            delta_hat: f64::NAN,
            alpha_floor: f64::NAN,
            ours: self.ours,
            li: None,
            train_err,
            test_err,
        });
    }

    /// One array per row, in [`CSV_COLUMNS`] order. Missing values are NaN.
    pub fn table(&self, config: &BoundConfig) -> Vec<[f64; 14]> {
        let c = config.constant();
        let cli = config.li_constant();
        self.rows
            .iter()
            .map(|r| {
                let ours = if r.alpha.is_nan() { f64::NAN } else { bound_from(c, config.n, r.ours) };
                [
                    r.t as f64,
                    r.epoch as f64,
                    r.eta,
                    r.sigma.unwrap_or(f64::NAN),
                    r.alpha,
                    r.mean_disc,
                    r.mean_grad_sq,
                    r.incoh_surrogate,
                    r.delta_hat,
                    r.alpha_floor,
                    ours,
                    r.li.map_or(f64::NAN, |v| bound_from(cli, config.n, v)),
                    r.train_err,
                    r.test_err,
                ]
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, config: &BoundConfig, mut out: W) -> Result<()> {
        writeln!(out, "{}", CSV_COLUMNS.join(","))?;
        for (r, row) in self.rows.iter().zip(self.table(config)) {
            let mut line = format!("{},{}", r.t, r.epoch);
            for v in &row[2..] {
                line.push(',');
                line.push_str(&fmt(*v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:e}")
    }
}

/// `(c/n)·√radicand`.
pub fn bound_from(c: f64, n: usize, radicand: f64) -> f64 {
    c / n as f64 * radicand.sqrt()
}

/// Observer that feeds a ledger from a training run.
pub struct BoundObserver<'a> {
    pub ledger: BoundLedger,
    pub config: BoundConfig,
    horizon: u64,
    rng: RngStream,
    test: &'a [Example],
}

impl<'a> BoundObserver<'a> {
    /// `horizon` is the last step of the run; it is always recorded so that
    /// the in-fill covers every step.
    pub fn new(config: BoundConfig, horizon: u64, seed: u64, test: &'a [Example]) -> Result<Self> {
        config.validate()?;
        Ok(Self { ledger: BoundLedger::new(), config, horizon, rng: stream(seed, streams::METER), test })
    }
}

impl Observer for BoundObserver<'_> {
    fn on_step(&mut self, info: &StepInfo<'_>) -> Result<()> {
        if info.t % self.config.eval_every != 0 && info.t != self.horizon {
            return Ok(());
        }
        // the statistics refer to the point the step was taken from
        let w = info.w_prev;
        let alpha = match (info.alpha, info.sigma) {
            (Some(a), _) => a,
            _ => {
                return Err(Error::Unsupported(
                    "the bound meter needs a noisy update with a scaling alpha".into(),
                ))
            }
        };
        let step = StepValues { t: info.t, epoch: info.epoch, eta: info.eta, alpha, sigma: info.sigma };
        let (delta, floor) = if self.config.delta_pool >= 2 {
            let pool = crate::engine::delta_pool(info.data, self.config.delta_pool, &mut self.rng);
            delta_and_floor(info.model, w, &pool, self.config.c2)?
        } else {
            (f64::NAN, f64::NAN)
        };
        let incoh = if self.config.track_incoherence {
            surrogate_incoherence(info.model, w, info.batch, info.data)?
        } else {
            f64::NAN
        };
        let (train_err, test_err) = if info.model.is_classifier() {
            let tr = info.model.test_error(info.w, &info.data.examples)?;
            let te = if self.test.is_empty() { f64::NAN } else { info.model.test_error(info.w, self.test)? };
            (tr, te)
        } else {
            (f64::NAN, f64::NAN)
        };
        let row = self.ledger.record_step(step, info.model, w, info.data, &self.config, &mut self.rng)?;
        row.delta_hat = delta;
        row.alpha_floor = floor;
        row.incoh_surrogate = incoh;
        row.train_err = train_err;
        row.test_err = test_err;
        Ok(())
    }
}
