//! Small differentiable models with hand-written per-example gradients.
//!
//! Parameters are a flat `f64` vector. Dense layers store the weight matrix
//! row-major (`out × in`) followed by the bias, layer after layer.

use rand::Rng;

use crate::data::Example;
use crate::error::{check_len, Error, Result};
use crate::rng::{stream, streams};

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// `ℓ(w, z) = ½‖w − (w* + x)‖²`; gradient `w − w* − x`, smoothness `K = 1`.
    Quadratic { target: Vec<f64> },
    /// Multinomial logistic regression with cross-entropy.
    Logistic { dim: usize, classes: usize },
    /// ReLU network, `sizes = [input, hidden.., classes]`, cross-entropy.
    Mlp { sizes: Vec<usize> },
}

/// Clamp applied to losses entering the bound, so that `ℓ ≤ L_max` and the
/// second-moment constant is `c₀ = 2·L_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCaps {
    pub loss_clamp: f64,
}

impl Default for LossCaps {
    fn default() -> Self {
        Self { loss_clamp: 4.0 }
    }
}

impl LossCaps {
    pub fn new(loss_clamp: f64) -> Result<Self> {
        if !(loss_clamp > 0.0 && loss_clamp.is_finite()) {
            return Err(Error::config(format!("loss_clamp must be finite and > 0, got {loss_clamp}")));
        }
        Ok(Self { loss_clamp })
    }

    pub fn c0(&self) -> f64 {
        2.0 * self.loss_clamp
    }

    pub fn clamp(&self, loss: f64) -> f64 {
        loss.min(self.loss_clamp)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Model {
    pub fn mlp(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::config(format!("mlp needs at least two nonzero layer sizes, got {sizes:?}")));
        }
        Ok(Model::Mlp { sizes })
    }

    fn layers(&self) -> Option<Vec<usize>> {
        match self {
            Model::Quadratic { .. } => None,
            Model::Logistic { dim, classes } => Some(vec![*dim, *classes]),
            Model::Mlp { sizes } => Some(sizes.clone()),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Model::Quadratic { target } => target.len(),
            _ => {
                let s = self.layers().unwrap();
                s.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Quadratic { target } => target.len(),
            _ => self.layers().unwrap()[0],
        }
    }

    pub fn is_classifier(&self) -> bool {
        !matches!(self, Model::Quadratic { .. })
    }

    pub fn num_classes(&self) -> usize {
        self.layers().map_or(1, |s| *s.last().unwrap())
    }

    /// Deterministic initialization: zeros for the convex models, scaled
    /// uniform (He) weights and zero biases for the MLP.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut w = vec![0.0; self.param_count()];
        if let Model::Mlp { sizes } = self {
            let mut rng = stream(seed, streams::INIT);
            let mut off = 0;
            for pair in sizes.windows(2) {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                for v in &mut w[off..off + fan_in * fan_out] {
                    *v = rng.random_range(-bound..bound);
                }
                off += fan_in * fan_out + fan_out;
            }
        }
        w
    }

    fn check(&self, w: &[f64], z: &Example) -> Result<()> {
        check_len(self.param_count(), w.len())?;
        check_len(self.input_dim(), z.x.len())?;
        if self.is_classifier() && z.y >= self.num_classes() {
            return Err(Error::domain(format!("label {} out of range for {} classes", z.y, self.num_classes())));
        }
        Ok(())
    }

    /// Forward pass through the dense stack; returns the post-activation of
    /// every layer (input first, logits last).
    fn forward(sizes: &[usize], w: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(sizes.len());
        acts.push(x.to_vec());
        let mut off = 0;
        let last = sizes.len() - 2;
        for (l, pair) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let weights = &w[off..off + n_in * n_out];
            let bias = &w[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = &acts[l];
            let mut out: Vec<f64> = weights
                .chunks_exact(n_in)
                .zip(bias)
                .map(|(row, b)| row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>() + b)
                .collect();
            if l != last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        acts
    }

    /// Raw (unclamped) loss.
    pub fn loss(&self, w: &[f64], z: &Example) -> Result<f64> {
        self.check(w, z)?;
        Ok(match self {
            Model::Quadratic { target } => {
                0.5 * w.iter().zip(target).zip(&z.x).map(|((a, t), x)| (a - t - x).powi(2)).sum::<f64>()
            }
            _ => {
                let acts = Self::forward(&self.layers().unwrap(), w, &z.x);
                let logits = acts.last().unwrap();
                log_sum_exp(logits) - logits[z.y]
            }
        })
    }

    /// Adds `scale · ∇ℓ(w, z)` into `out` and returns the raw loss.
    pub fn accumulate_grad(&self, w: &[f64], z: &Example, scale: f64, out: &mut [f64]) -> Result<f64> {
        self.check(w, z)?;
        check_len(w.len(), out.len())?;
        match self {
            Model::Quadratic { target } => {
                let mut loss = 0.0;
                for (((o, a), t), x) in out.iter_mut().zip(w).zip(target).zip(&z.x) {
                    let r = a - t - x;
                    loss += 0.5 * r * r;
                    *o += scale * r;
                }
                Ok(loss)
            }
            _ => {
                let sizes = self.layers().unwrap();
                let acts = Self::forward(&sizes, w, &z.x);
                let logits = acts.last().unwrap();
                let lse = log_sum_exp(logits);
                let loss = lse - logits[z.y];
                // δ at the logits: softmax − onehot
                let mut delta: Vec<f64> = logits.iter().map(|v| (v - lse).exp()).collect();
                delta[z.y] -= 1.0;

                let offsets: Vec<usize> = sizes
                    .windows(2)
                    .scan(0, |acc, p| {
                        let o = *acc;
                        *acc += p[0] * p[1] + p[1];
                        Some(o)
                    })
                    .collect();
                for l in (0..sizes.len() - 1).rev() {
                    let (n_in, n_out) = (sizes[l], sizes[l + 1]);
                    let off = offsets[l];
                    let input = &acts[l];
                    for (r, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let sd = scale * d;
                        let row = &mut out[off + r * n_in..off + (r + 1) * n_in];
                        for (g, a) in row.iter_mut().zip(input) {
                            *g += sd * a;
                        }
                        out[off + n_in * n_out + r] += sd;
                    }
                    if l > 0 {
                        let weights = &w[off..off + n_in * n_out];
                        let mut prev = vec![0.0; n_in];
                        for (r, &d) in delta.iter().enumerate() {
                            if d == 0.0 {
                                continue;
                            }
                            for (p, wv) in prev.iter_mut().zip(&weights[r * n_in..(r + 1) * n_in]) {
                                *p += d * wv;
                            }
                        }
                        // ReLU derivative, taken as 0 at the kink
                        for (p, a) in prev.iter_mut().zip(input) {
                            if *a <= 0.0 {
                                *p = 0.0;
                            }
                        }
                        delta = prev;
                    }
                }
                Ok(loss)
            }
        }
    }

    /// Gradient of the raw loss at one example.
    pub fn grad(&self, w: &[f64], z: &Example) -> Result<Vec<f64>> {
        let mut g = vec![0.0; w.len()];
        self.accumulate_grad(w, z, 1.0, &mut g)?;
        Ok(g)
    }

    /// Mean of per-example gradients.
    pub fn batch_grad(&self, w: &[f64], batch: &[&Example]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::domain("empty mini-batch"));
        }
        let mut g = vec![0.0; w.len()];
        let scale = 1.0 / batch.len() as f64;
        for z in batch {
            self.accumulate_grad(w, z, scale, &mut g)?;
        }
        Ok(g)
    }

    /// Mean gradient over `examples[i]` for `i` in `idx`.
    pub fn batch_grad_idx(&self, w: &[f64], examples: &[Example], idx: &[usize]) -> Result<Vec<f64>> {
        let batch: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
        self.batch_grad(w, &batch)
    }

    /// Empirical risk `L_S(w)` (raw loss).
    pub fn full_loss(&self, w: &[f64], examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::domain("empty dataset"));
        }
        let mut s = 0.0;
        for z in examples {
            s += self.loss(w, z)?;
        }
        Ok(s / examples.len() as f64)
    }

    pub fn full_grad(&self, w: &[f64], examples: &[Example]) -> Result<Vec<f64>> {
        let batch: Vec<&Example> = examples.iter().collect();
        self.batch_grad(w, &batch)
    }

    pub fn predict(&self, w: &[f64], x: &[f64]) -> Result<usize> {
        let sizes = self
            .layers()
            .ok_or_else(|| Error::Unsupported("prediction needs a classifier model".into()))?;
        check_len(self.param_count(), w.len())?;
        check_len(sizes[0], x.len())?;
        let acts = Self::forward(&sizes, w, x);
        let logits = acts.last().unwrap();
        let mut best = 0;
        for (i, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Misclassification rate under argmax prediction.
    pub fn test_error(&self, w: &[f64], examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::domain("empty evaluation set"));
        }
        let mut wrong = 0usize;
        for z in examples {
            if self.predict(w, &z.x)? != z.y {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / examples.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthSpec};

    #[test]
    fn quadratic_examples() {
        let m = Model::Quadratic { target: vec![0.0; 3] };
        let z = Example { x: vec![0.0; 3], y: 0 };
        assert_eq!(m.loss(&[0.0; 3], &z).unwrap(), 0.0);
        let m = Model::Quadratic { target: vec![1.0, -2.0, 0.5] };
        let w = [0.3, 0.1, -0.7];
        assert_eq!(m.grad(&w, &z).unwrap(), vec![0.3 - 1.0, 0.1 + 2.0, -0.7 - 0.5]);
        assert!(m.test_error(&w, &[z]).is_err());
    }

    #[test]
    fn logistic_at_zero_is_log2() {
        let m = Model::Logistic { dim: 4, classes: 2 };
        let z = Example { x: vec![1.0, -2.0, 0.5, 3.0], y: 1 };
        let l = m.loss(&vec![0.0; m.param_count()], &z).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let m = Model::Logistic { dim: 4, classes: 2 };
        let z = Example { x: vec![1.0; 3], y: 0 };
        assert!(matches!(m.loss(&vec![0.0; 10], &z), Err(Error::Shape { .. })));
        assert!(matches!(m.grad(&vec![0.0; 9], &z), Err(Error::Shape { .. })));
        let z = Example { x: vec![1.0; 4], y: 2 };
        assert!(m.loss(&vec![0.0; 10], &z).is_err());
        assert!(m.batch_grad(&vec![0.0; 10], &[]).is_err());
        assert!(Model::mlp(vec![3]).is_err());
    }

    #[test]
    fn batch_of_one_matches_single() {
        let m = Model::mlp(vec![3, 5, 2]).unwrap();
        let w = m.init_params(1);
        let z = Example { x: vec![0.2, -1.0, 0.7], y: 1 };
        assert_eq!(m.batch_grad(&w, &[&z]).unwrap(), m.grad(&w, &z).unwrap());
    }

    #[test]
    fn swapping_last_example_scales_by_one_over_b() {
        let m = Model::Logistic { dim: 3, classes: 3 };
        let w: Vec<f64> = (0..m.param_count()).map(|i| (i as f64 * 0.37).sin()).collect();
        let zs: Vec<Example> = (0..5).map(|i| Example { x: vec![i as f64, 1.0 - i as f64, 0.5], y: i % 3 }).collect();
        let zp = Example { x: vec![-2.0, 0.3, 1.1], y: 2 };
        let b1: Vec<&Example> = zs.iter().collect();
        let mut b2 = b1.clone();
        b2[4] = &zp;
        let g1 = m.batch_grad(&w, &b1).unwrap();
        let g2 = m.batch_grad(&w, &b2).unwrap();
        let gn = m.grad(&w, &zs[4]).unwrap();
        let gp = m.grad(&w, &zp).unwrap();
        for i in 0..g1.len() {
            assert!(((g1[i] - g2[i]) - (gn[i] - gp[i]) / 5.0).abs() < 1e-14);
        }
    }

    #[test]
    fn separable_blobs_reach_zero_training_error() {
        let d = synth_dataset(&SynthSpec { dim: 5, n: 400, classes: 2, separation: 10.0 }, 3).unwrap();
        let m = Model::Logistic { dim: 5, classes: 2 };
        let mut w = m.init_params(0);
        for _ in 0..200 {
            let g = m.full_grad(&w, &d.examples).unwrap();
            for (a, b) in w.iter_mut().zip(&g) {
                *a -= 0.5 * b;
            }
        }
        assert_eq!(m.test_error(&w, &d.examples).unwrap(), 0.0);
    }

    #[test]
    fn loss_caps() {
        let c = LossCaps::default();
        assert_eq!(c.c0(), 8.0);
        assert_eq!(c.clamp(10.0), 4.0);
        assert_eq!(c.clamp(1.0), 1.0);
        assert!(LossCaps::new(0.0).is_err());
    }
}
