//! The four subcommands, as library functions returning their results.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use efld_core::bound::{BoundConfig, CSV_COLUMNS};
use efld_core::verify::{run_suite, Suite, SuiteReport};
use efld_core::{Error, Result};

use crate::aggregate::{aggregate, fmt, median, median_series, write_aggregate, AggregateRow};
use crate::config::{OptimizerName, RunConfig, SweepAxis, SweepSpec};
use crate::runner::{run_seeds, SeedRun};
use crate::svg::{Plot, Series};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Unsupported(_) => EXIT_CONFIG,
        Error::Io(_) | Error::Format { .. } => EXIT_IO,
        Error::Numeric { .. } | Error::Quadrature(_) | Error::Shape { .. } => EXIT_NUMERIC,
    }
}

/// Parses `a..b`, `a..=b`, `a,b,c` or a single seed.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::config(format!("--seeds `{s}` is not a range `a..b`, a list `a,b,c` or a number"));
    let num = |x: &str| x.trim().parse::<u64>().map_err(|_| bad());
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        s.split(',').map(num).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(Error::config(format!("--seeds `{s}` selects no seeds")));
    }
    Ok(seeds)
}

/// Seeds from the flag, else `0..run.repeats`.
pub fn seeds_or_default(flag: Option<&str>, cfg: &RunConfig) -> Result<Vec<u64>> {
    match flag {
        Some(s) => parse_seeds(s),
        None => Ok((0..cfg.run.repeats).collect()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))
}

fn steps_per_epoch(cfg: &RunConfig, n: usize) -> f64 {
    let b = cfg.optimizer.batch_size;
    if b == 0 {
        1.0
    } else {
        n.div_ceil(b) as f64
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
    /// Fractional epoch of each checkpoint.
    pub epochs: Vec<f64>,
}

impl TrainOutput {
    pub fn final_median(&self, metric: &str) -> f64 {
        median_series(&self.aggregate, metric).and_then(|v| v.last().copied()).unwrap_or(f64::NAN)
    }
}

fn summarize(cfg: &RunConfig, runs: Vec<SeedRun>) -> Result<TrainOutput> {
    let tables: Vec<_> = runs.iter().map(|r| r.ledger.table(&r.bound)).collect();
    let agg = aggregate(&tables)?;
    let n = runs[0].bound.n;
    let spe = steps_per_epoch(cfg, n);
    let epochs = agg.iter().map(|r| r.t as f64 / spe).collect();
    Ok(TrainOutput { runs, aggregate: agg, epochs })
}

fn meta_text(cfg: &RunConfig, out: &TrainOutput) -> String {
    let r = &out.runs[0];
    let b = &r.bound;
    let mut s = String::new();
    s.push_str(&format!("data: {}\n", r.source));
    s.push_str(&format!("n: {}\nsteps: {}\nseeds: {:?}\n", b.n, r.steps, out.runs.iter().map(|r| r.seed).collect::<Vec<_>>()));
    s.push_str(&format!("model: {:?} (stand-in for the convolutional nets of the original study)\n", cfg.model.kind));
    s.push_str(&format!("optimizer: {:?}\n", cfg.optimizer.kind));
    s.push_str(&format!("c0: {}\nc2: {}\nc: {}\n", b.c0, b.c2, b.constant()));
    s.push_str(&format!(
        "li_bound constant: {} ({})\n",
        b.li_constant(),
        if b.c_li.is_some() { "set in config" } else { "shares c = c0*sqrt(5*c2) for a like-for-like comparison; a normalization choice" }
    ));
    s.push_str("incoh_surrogate: squared distance between mini-batch and full gradient, a surrogate for gradient incoherence\n");
    s.push_str(&format!("pairs_per_step: {}\neval_every: {}\n", b.pairs_per_step, b.eval_every));
    for run in &out.runs {
        for w in &run.warnings {
            s.push_str(&format!("warning (seed {}): {w}\n", run.seed));
        }
    }
    s
}

/// Per-seed ledgers, the aggregate CSV, SVG panels and a metadata file.
pub fn write_train_outputs(cfg: &RunConfig, out: &TrainOutput, dir: &Path) -> Result<()> {
    make_dir(dir)?;
    for r in &out.runs {
        let mut f = create(&dir.join(format!("seed_{}.csv", r.seed)))?;
        r.ledger.write_csv(&r.bound, &mut f)?;
        f.flush()?;
    }
    let mut f = create(&dir.join("aggregate.csv"))?;
    write_aggregate(&out.aggregate, &mut f)?;
    f.flush()?;

    let log = cfg.plot.log_scale;
    let med = |m: &str| median_series(&out.aggregate, m).unwrap_or_default();
    let x = out.epochs.clone();
    let panels: [(&str, &str, bool, &[&str]); 4] = [
        ("bound.svg", "generalization bound (median over seeds)", log, &["our_bound", "li_bound"]),
        ("errors.svg", "training and test error (median over seeds)", false, &["train_err", "test_err"]),
        ("bound_train.svg", "training error + bound vs test error", log, &["bound_plus_train", "test_err"]),
        ("grad_stats.svg", "gradient statistics (median over seeds)", true, &["mean_grad_sq", "mean_disc", "incoh_surrogate"]),
    ];
    for (file, title, log_y, metrics) in panels {
        let mut p = Plot::new(title, "epoch", "value", log_y);
        for m in metrics {
            let y = med(m);
            if y.iter().any(|v| !v.is_nan()) {
                p.push(Series::new(*m, x.clone(), y));
            }
        }
        write_text(&dir.join(file), &p.render())?;
    }
    write_text(&dir.join("meta.txt"), &meta_text(cfg, out))
}

pub fn train(cfg: &RunConfig, seeds: &[u64], data_dir: Option<&Path>, threads: usize) -> Result<TrainOutput> {
    summarize(cfg, run_seeds(cfg, seeds, data_dir, threads)?)
}

#[derive(Debug, Clone)]
pub struct SweepArm {
    pub label: String,
    pub value: f64,
    pub output: TrainOutput,
    /// Bound configuration used for the reported bound columns.
    pub bound: Vec<BoundConfig>,
}

impl SweepArm {
    /// Final-checkpoint values of one metric, one per seed.
    pub fn finals(&self, metric: &str) -> Vec<f64> {
        let k = CSV_COLUMNS.iter().position(|c| *c == metric).expect("known column");
        self.output
            .runs
            .iter()
            .zip(&self.bound)
            .map(|(r, b)| r.ledger.table(b).last().map_or(f64::NAN, |row| row[k]))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub axis: SweepAxis,
    pub arms: Vec<SweepArm>,
}

fn value_label(axis: SweepAxis, v: f64) -> String {
    format!("{}={v}", axis.name())
}

/// One training run per sweep value. The `n` axis trains once and replays the
/// frozen ledger with each `n`. An alpha sweep of noisy sign-SGD also runs the
/// sign-SGD baseline.
pub fn sweep(cfg: &RunConfig, spec: &SweepSpec, seeds: &[u64], data_dir: Option<&Path>, threads: usize) -> Result<SweepOutput> {
    spec.validate()?;
    let mut arms = Vec::new();
    if spec.axis == SweepAxis::N {
        let base = train(cfg, seeds, data_dir, threads)?;
        for &v in &spec.values {
            let bounds: Vec<BoundConfig> =
                base.runs.iter().map(|r| BoundConfig { n: v as usize, ..r.bound.clone() }).collect();
            let tables: Vec<_> = base.runs.iter().zip(&bounds).map(|(r, b)| r.ledger.table(b)).collect();
            let output = TrainOutput { aggregate: aggregate(&tables)?, ..base.clone() };
            arms.push(SweepArm { label: value_label(spec.axis, v), value: v, output, bound: bounds });
        }
        return Ok(SweepOutput { axis: spec.axis, arms });
    }
    for &v in &spec.values {
        let c = cfg.with_axis(spec.axis, v)?;
        let output = train(&c, seeds, data_dir, threads)?;
        let bound = output.runs.iter().map(|r| r.bound.clone()).collect();
        arms.push(SweepArm { label: value_label(spec.axis, v), value: v, output, bound });
    }
    if spec.axis == SweepAxis::Alpha && cfg.optimizer.kind == OptimizerName::NoisySignSgd {
        let mut c = cfg.clone();
        c.optimizer.kind = OptimizerName::SignSgd;
        c.sweep = None;
        let output = train(&c, seeds, data_dir, threads)?;
        let bound = output.runs.iter().map(|r| r.bound.clone()).collect();
        arms.push(SweepArm { label: "sign-sgd".into(), value: f64::NAN, output, bound });
    }
    Ok(SweepOutput { axis: spec.axis, arms })
}

pub fn write_sweep_outputs(cfg: &RunConfig, out: &SweepOutput, dir: &Path) -> Result<()> {
    make_dir(dir)?;
    let mut long = create(&dir.join("sweep.csv"))?;
    writeln!(long, "axis,value,seed,{}", CSV_COLUMNS.join(","))?;
    for arm in &out.arms {
        for (r, b) in arm.output.runs.iter().zip(&arm.bound) {
            for row in r.ledger.table(b) {
                let rest: Vec<String> = row[2..].iter().map(|v| fmt(*v)).collect();
                let value = if arm.value.is_nan() { arm.label.clone() } else { arm.value.to_string() };
                writeln!(long, "{},{value},{},{},{},{}", out.axis.name(), r.seed, row[0] as u64, row[1] as u64, rest.join(","))?;
            }
        }
    }
    long.flush()?;

    let mut summary = create(&dir.join("summary.csv"))?;
    writeln!(summary, "arm,final_our_bound_median,final_train_err_median,final_test_err_median")?;
    for arm in &out.arms {
        writeln!(
            summary,
            "{},{},{},{}",
            arm.label,
            fmt(median(&arm.finals("our_bound"))),
            fmt(median(&arm.finals("train_err"))),
            fmt(median(&arm.finals("test_err")))
        )?;
    }
    summary.flush()?;

    for (file, metric, log_y) in
        [("sweep_bound.svg", "our_bound", cfg.plot.log_scale), ("sweep_train_err.svg", "train_err", false), ("sweep_test_err.svg", "test_err", false)]
    {
        let mut p = Plot::new(format!("{metric} by {}", out.axis.name()), "epoch", metric, log_y);
        for arm in &out.arms {
            let y = median_series(&arm.output.aggregate, metric).unwrap_or_default();
            if y.iter().all(|v| v.is_nan()) {
                continue;
            }
            let te = median(&arm.finals("test_err"));
            let label = if te.is_nan() { arm.label.clone() } else { format!("{} [{:.2}%]", arm.label, 100.0 * te) };
            p.push(Series::new(label, arm.output.epochs.clone(), y));
        }
        write_text(&dir.join(file), &p.render())?;
    }
    if out.axis != SweepAxis::N {
        for arm in &out.arms {
            let sub_cfg = if arm.value.is_nan() { cfg.clone() } else { cfg.with_axis(out.axis, arm.value)? };
            write_train_outputs(&sub_cfg, &arm.output, &dir.join(arm.label.replace('=', "_")))?;
        }
    }
    Ok(())
}

pub fn verify(suite_name: &str, seed: u64, out: Option<&Path>) -> Result<SuiteReport> {
    let suite = Suite::from_name(suite_name).ok_or_else(|| {
        Error::config(format!("unknown suite `{suite_name}`; expected one of {}", Suite::NAMES.join(", ")))
    })?;
    let report = run_suite(suite, seed)?;
    if let Some(dir) = out {
        make_dir(dir)?;
        let mut f = create(&dir.join(format!("verify_{suite_name}.csv")))?;
        report.write_margins_csv(&mut f)?;
        f.flush()?;
    }
    Ok(report)
}

/// Reads a ledger CSV, checking the header against the ledger schema.
pub fn read_ledger_csv(path: &Path) -> Result<Vec<[f64; 14]>> {
    let file = File::open(path).map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let fmt_err = |offset: u64, msg: String| Error::Format { offset, msg: format!("{}: {msg}", path.display()) };
    let header = rd.headers().map_err(|e| fmt_err(0, e.to_string()))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(fmt_err(0, "empty CSV".into()));
    }
    for (i, want) in CSV_COLUMNS.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            Some(got) => return Err(fmt_err(0, format!("column {i} is `{got}`, expected `{want}`"))),
            None => return Err(fmt_err(0, format!("missing column `{want}`"))),
        }
    }
    if let Some(extra) = header.get(CSV_COLUMNS.len()) {
        return Err(fmt_err(0, format!("unexpected column `{extra}`")));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| fmt_err(e.position().map_or(0, |p| p.byte()), e.to_string()))?;
        let offset = rec.position().map_or(0, |p| p.byte());
        let mut row = [0.0; 14];
        for (k, cell) in rec.iter().enumerate() {
            row[k] = cell
                .trim()
                .parse::<f64>()
                .map_err(|_| fmt_err(offset, format!("column `{}` has non-numeric value `{cell}`", CSV_COLUMNS[k])))?;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(fmt_err(0, "CSV has a header but no rows".into()));
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct PlotRequest {
    pub csvs: Vec<PathBuf>,
    pub x: String,
    pub y: Vec<String>,
    pub log_y: bool,
    pub title: Option<String>,
}

fn column_index(name: &str) -> Result<usize> {
    CSV_COLUMNS
        .iter()
        .position(|c| *c == name)
        .ok_or_else(|| Error::config(format!("`{name}` is not a ledger column; expected one of {}", CSV_COLUMNS.join(", "))))
}

/// One polyline per (file, y column).
pub fn plot(req: &PlotRequest) -> Result<String> {
    if req.csvs.is_empty() {
        return Err(Error::config("plot needs at least one CSV"));
    }
    if req.y.is_empty() {
        return Err(Error::config("plot needs at least one y column"));
    }
    let xi = column_index(&req.x)?;
    let yi: Vec<usize> = req.y.iter().map(|y| column_index(y)).collect::<Result<_>>()?;
    let title = req.title.clone().unwrap_or_else(|| req.y.join(", "));
    let y_label = if req.y.len() == 1 { req.y[0].clone() } else { "value".into() };
    let mut p = Plot::new(title, &req.x, y_label, req.log_y);
    for path in &req.csvs {
        let rows = read_ledger_csv(path)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for (&k, name) in yi.iter().zip(&req.y) {
            let label = if req.csvs.len() == 1 { name.clone() } else { format!("{stem}: {name}") };
            p.push(Series::new(label, rows.iter().map(|r| r[xi]).collect(), rows.iter().map(|r| r[k]).collect()));
        }
    }
    Ok(p.render())
}

pub fn write_plot(req: &PlotRequest, out: &Path) -> Result<()> {
    let svg = plot(req)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        make_dir(dir)?;
    }
    write_text(out, &svg)
}
