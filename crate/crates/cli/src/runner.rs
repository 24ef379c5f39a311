//! Data preparation and single-seed training runs.

use std::path::{Path, PathBuf};

use efld_core::bound::{BoundConfig, BoundLedger, BoundObserver};
use efld_core::data::{balanced_subset, corrupt_labels, synth_with_test, Dataset, Example, SynthSpec};
use efld_core::engine::{run_training, Observer, StepInfo, TrainConfig};
use efld_core::idx;
use efld_core::models::Model;
use efld_core::{Error, Result};

use crate::config::{DataSource, RunConfig};

pub const DATA_DIR_ENV: &str = "EFLD_DATA_DIR";

const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// `--data-dir`, else `$EFLD_DATA_DIR`.
pub fn resolve_data_dir(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf).or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Dataset,
    pub test: Vec<Example>,
    pub model: Model,
    /// Where the data came from, for run metadata.
    pub source: String,
}

fn mnist_files(dir: &Path) -> Option<[PathBuf; 4]> {
    let files = [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS].map(|f| dir.join(f));
    files.iter().all(|p| p.is_file()).then_some(files)
}

fn load_mnist(cfg: &RunConfig, files: &[PathBuf; 4], data_seed: u64) -> Result<(Dataset, Vec<Example>)> {
    let (full, stats) = idx::load_idx_with_stats(&files[0], &files[1])?;
    let held = cfg.data.held_out.unwrap_or(cfg.data.n / 4);
    let data = balanced_subset(&full.examples, full.num_classes, cfg.data.n, held, data_seed)?;
    let images = idx::read_images(&files[2])?;
    let labels = idx::read_labels(&files[3])?;
    let mut test = idx::to_examples(&images, &labels, &stats)?;
    test.truncate(cfg.data.test_n);
    Ok((data, test))
}

/// Builds the dataset, test set and model for one seed. MNIST falls back to
/// synthetic blobs when the IDX files are not found.
pub fn prepare(cfg: &RunConfig, seed: u64, data_dir: Option<&Path>) -> Result<Prepared> {
    let data_seed = cfg.data.seed.unwrap_or(seed);
    let mnist = match cfg.data.source {
        DataSource::Mnist => data_dir.and_then(mnist_files),
        DataSource::Synthetic => None,
    };
    let (data, test, source) = match mnist {
        Some(files) => {
            let (d, t) = load_mnist(cfg, &files, data_seed)?;
            (d, t, format!("mnist subset from {}", files[0].parent().unwrap_or(Path::new(".")).display()))
        }
        None => {
            let spec = SynthSpec {
                dim: cfg.data.dim,
                n: cfg.data.n,
                classes: cfg.data.classes,
                separation: cfg.data.separation,
            };
            let (d, t) = synth_with_test(&spec, data_seed, cfg.data.test_n)?;
            let why = if cfg.data.source == DataSource::Mnist { " (mnist files not found)" } else { "" };
            (d, t, format!("synthetic blobs dim={} classes={} separation={}{why}", spec.dim, spec.classes, spec.separation))
        }
    };
    let data = if cfg.data.corruption > 0.0 { corrupt_labels(&data, cfg.data.corruption, data_seed)? } else { data };
    let model = cfg.model(data.dim(), data.num_classes)?;
    Ok(Prepared { data, test, model, source })
}

/// Records training and test error for updates that have no noise scale.
struct ErrorObserver<'a> {
    ledger: BoundLedger,
    eval_every: u64,
    horizon: u64,
    test: &'a [Example],
}

impl Observer for ErrorObserver<'_> {
    fn on_step(&mut self, info: &StepInfo<'_>) -> Result<()> {
        if info.t % self.eval_every != 0 && info.t != self.horizon {
            return Ok(());
        }
        let (tr, te) = if info.model.is_classifier() {
            let te = if self.test.is_empty() { f64::NAN } else { info.model.test_error(info.w, self.test)? };
            (info.model.test_error(info.w, &info.data.examples)?, te)
        } else {
            (f64::NAN, f64::NAN)
        };
        self.ledger.push_unscored(info.t, info.epoch, info.eta, tr, te);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub ledger: BoundLedger,
    pub bound: BoundConfig,
    pub steps: u64,
    pub final_train_err: f64,
    pub final_test_err: f64,
    pub final_w: Vec<f64>,
    pub source: String,
    pub warnings: Vec<String>,
}

pub fn run_seed(cfg: &RunConfig, seed: u64, data_dir: Option<&Path>) -> Result<SeedRun> {
    let prep = prepare(cfg, seed, data_dir)?;
    run_prepared(cfg, seed, &prep)
}

pub fn run_prepared(cfg: &RunConfig, seed: u64, prep: &Prepared) -> Result<SeedRun> {
    let n = prep.data.n();
    let bound = cfg.bound_config(n);
    let steps = cfg.steps(n);
    let mut warnings = Vec::new();
    if let Some(w) = bound.batch_warning(cfg.optimizer.batch_size.max(1)) {
        warnings.push(w);
    }
    let train = TrainConfig { optimizer: cfg.optimizer_spec()?, steps, seed, w0: None, snapshot_every: 0 };
    let (traj, ledger) = if cfg.family().is_some() {
        let mut obs = BoundObserver::new(bound.clone(), steps, seed, &prep.test)?;
        let traj = run_training(&train, &prep.model, &prep.data, &mut [&mut obs])?;
        (traj, obs.ledger)
    } else {
        let mut obs =
            ErrorObserver { ledger: BoundLedger::new(), eval_every: bound.eval_every, horizon: steps, test: &prep.test };
        let traj = run_training(&train, &prep.model, &prep.data, &mut [&mut obs])?;
        (traj, obs.ledger)
    };
    let (final_train_err, final_test_err) = if prep.model.is_classifier() {
        let te = if prep.test.is_empty() { f64::NAN } else { prep.model.test_error(&traj.w_final, &prep.test)? };
        (prep.model.test_error(&traj.w_final, &prep.data.examples)?, te)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(SeedRun {
        seed,
        ledger,
        bound,
        steps,
        final_train_err,
        final_test_err,
        final_w: traj.w_final,
        source: prep.source.clone(),
        warnings,
    })
}

/// Runs every seed, `threads` at a time; results come back in seed order.
pub fn run_seeds(cfg: &RunConfig, seeds: &[u64], data_dir: Option<&Path>, threads: usize) -> Result<Vec<SeedRun>> {
    use rayon::prelude::*;
    if seeds.is_empty() {
        return Err(Error::config("no seeds to run"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot build a pool of {threads} threads: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| run_seed(cfg, s, data_dir)).collect())
}
