//! Datasets: labeled examples plus a disjoint held-out pool used as the source
//! of replacement points `z′`.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream, streams};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    /// Disjoint draws from the same distribution, sampled as `z′`.
    pub held_out_pool: Vec<Example>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, held_out_pool: Vec<Example>, num_classes: usize) -> Result<Self> {
        let ds = Self { examples, held_out_pool, num_classes };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn dim(&self) -> usize {
        self.examples.first().or(self.held_out_pool.first()).map_or(0, |e| e.x.len())
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        for (i, e) in self.examples.iter().chain(&self.held_out_pool).enumerate() {
            if e.x.len() != dim {
                return Err(Error::Shape { expected: dim, got: e.x.len() });
            }
            if e.y >= self.num_classes {
                return Err(Error::domain(format!("example {i}: label {} >= {} classes", e.y, self.num_classes)));
            }
        }
        Ok(())
    }

    /// Fraction of training examples per class.
    pub fn class_prior(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.num_classes];
        for e in &self.examples {
            c[e.y] += 1.0;
        }
        let n = self.n().max(1) as f64;
        c.iter().map(|v| v / n).collect()
    }
}

/// Gaussian class blobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub dim: usize,
    /// Training-set size.
    pub n: usize,
    pub classes: usize,
    /// Distance between class means, in units of the per-coordinate noise std.
    pub separation: f64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config(format!("synthetic n must be >= 2, got {}", self.n)));
        }
        if self.dim == 0 {
            return Err(Error::config("synthetic dim must be >= 1"));
        }
        if self.classes < 2 {
            return Err(Error::config(format!("synthetic classes must be >= 2, got {}", self.classes)));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::config(format!("separation must be finite and >= 0, got {}", self.separation)));
        }
        Ok(())
    }
}

/// Generates `n` training points, `n/4` held-out points (20% of everything
/// generated for the dataset) and `test_n` extra test points from the same
/// blobs. Labels are balanced before shuffling.
pub fn synth_with_test(spec: &SynthSpec, seed: u64, test_n: usize) -> Result<(Dataset, Vec<Example>)> {
    spec.validate()?;
    let mut rng = stream(seed, streams::DATA);
    let k = spec.classes;
    let means: Vec<Vec<f64>> = if spec.dim >= k {
        (0..k)
            .map(|c| (0..spec.dim).map(|j| if j == c { spec.separation / 2f64.sqrt() } else { 0.0 }).collect())
            .collect()
    } else {
        (0..k)
            .map(|_| {
                let v: Vec<f64> = (0..spec.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.iter().map(|x| x / norm * spec.separation / 2f64.sqrt()).collect()
            })
            .collect()
    };
    let centroid: Vec<f64> = (0..spec.dim).map(|j| means.iter().map(|m| m[j]).sum::<f64>() / k as f64).collect();

    let held = spec.n / 4;
    let total = spec.n + held + test_n;
    let mut labels: Vec<usize> = (0..total).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let mut points: Vec<Example> = labels
        .into_iter()
        .map(|y| {
            let x = (0..spec.dim)
                .map(|j| means[y][j] - centroid[j] + rng.sample::<f64, _>(StandardNormal))
                .collect();
            Example { x, y }
        })
        .collect();
    let test = points.split_off(spec.n + held);
    let pool = points.split_off(spec.n);
    Ok((Dataset { examples: points, held_out_pool: pool, num_classes: k }, test))
}

pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    synth_with_test(spec, seed, 0).map(|(d, _)| d)
}

fn corrupt_in_place<R: Rng>(examples: &mut [Example], fraction: f64, classes: usize, rng: &mut R) -> usize {
    let n = examples.len();
    let count = ((fraction * n as f64).floor() as usize).min(n);
    if count == 0 || classes < 2 {
        return 0;
    }
    for i in index::sample(rng, n, count) {
        let shift = 1 + rng.random_range(0..classes - 1);
        examples[i].y = (examples[i].y + shift) % classes;
    }
    count
}

/// Replaces the label of exactly `⌊fraction·n⌋` training examples (chosen
/// uniformly without replacement) with a uniformly random different label.
/// The held-out pool is corrupted at the same rate with an independent draw,
/// so that `z′` keeps following the corrupted distribution.
pub fn corrupt_labels(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config(format!("corruption fraction must be in [0, 1], got {fraction}")));
    }
    let mut out = dataset.clone();
    let mut rng = stream(seed, streams::DATA ^ 0x5a5a);
    corrupt_in_place(&mut out.examples, fraction, out.num_classes, &mut rng);
    corrupt_in_place(&mut out.held_out_pool, fraction, out.num_classes, &mut rng);
    Ok(out)
}

/// Draws a class-balanced training subset of size `n` plus a disjoint held-out
/// pool of size `pool` from a larger labeled set.
pub fn balanced_subset(source: &[Example], num_classes: usize, n: usize, pool: usize, seed: u64) -> Result<Dataset> {
    if n + pool > source.len() {
        return Err(Error::config(format!(
            "requested {n} training + {pool} held-out examples from a set of {}",
            source.len()
        )));
    }
    let mut rng = stream(seed, streams::DATA);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, e) in source.iter().enumerate() {
        by_class[e.y].push(i);
    }
    for idx in &mut by_class {
        idx.shuffle(&mut rng);
    }
    // round-robin over classes keeps the subset balanced
    let mut order = Vec::with_capacity(source.len());
    let longest = by_class.iter().map(Vec::len).max().unwrap_or(0);
    for r in 0..longest {
        for idx in &by_class {
            if let Some(&i) = idx.get(r) {
                order.push(i);
            }
        }
    }
    let mut train: Vec<Example> = order[..n].iter().map(|&i| source[i].clone()).collect();
    train.shuffle(&mut rng);
    let held: Vec<Example> = order[n..n + pool].iter().map(|&i| source[i].clone()).collect();
    Dataset::new(train, held, num_classes)
}
