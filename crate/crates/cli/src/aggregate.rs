//! Cross-seed medians and quartiles of ledger tables.

use std::io::Write;

use efld_core::bound::CSV_COLUMNS;
use efld_core::{Error, Result};

/// Metrics summarized across seeds: every ledger column after `t` and
/// `epoch`, plus the sum of training error and our bound.
pub fn metric_names() -> Vec<&'static str> {
    let mut m: Vec<&str> = CSV_COLUMNS[2..].to_vec();
    m.push("bound_plus_train");
    m
}

/// Quantile with linear interpolation between order statistics. NaNs are
/// ignored; all-NaN input gives NaN.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        Self { median: quantile(values, 0.5), q1: quantile(values, 0.25), q3: quantile(values, 0.75) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub t: u64,
    pub epoch: u64,
    /// One summary per entry of [`metric_names`].
    pub metrics: Vec<Summary>,
}

/// Extends a ledger table row with the derived metrics.
fn extended(row: &[f64; 14]) -> Vec<f64> {
    let mut v = row[2..].to_vec();
    v.push(row[12] + row[10]);
    v
}

/// Summarizes per-seed tables row by row. All tables must share the same
/// checkpoint steps.
pub fn aggregate(tables: &[Vec<[f64; 14]>]) -> Result<Vec<AggregateRow>> {
    let Some(first) = tables.first() else {
        return Err(Error::config("nothing to aggregate"));
    };
    for (i, tab) in tables.iter().enumerate() {
        if tab.len() != first.len() || tab.iter().zip(first).any(|(a, b)| a[0] != b[0]) {
            return Err(Error::config(format!("run {i} has different checkpoints from run 0")));
        }
    }
    let width = metric_names().len();
    let rows = first
        .iter()
        .enumerate()
        .map(|(r, head)| {
            let per_seed: Vec<Vec<f64>> = tables.iter().map(|tab| extended(&tab[r])).collect();
            let metrics = (0..width)
                .map(|k| Summary::of(&per_seed.iter().map(|v| v[k]).collect::<Vec<_>>()))
                .collect();
            AggregateRow { t: head[0] as u64, epoch: head[1] as u64, metrics }
        })
        .collect();
    Ok(rows)
}

pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:e}")
    }
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], mut out: W) -> Result<()> {
    let mut header = vec!["t".to_string(), "epoch".to_string()];
    for m in metric_names() {
        header.extend([format!("{m}_median"), format!("{m}_q1"), format!("{m}_q3")]);
    }
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let mut line = format!("{},{}", r.t, r.epoch);
        for s in &r.metrics {
            for v in [s.median, s.q1, s.q3] {
                line.push(',');
                line.push_str(&fmt(v));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Column of medians for a named metric.
pub fn median_series(rows: &[AggregateRow], metric: &str) -> Option<Vec<f64>> {
    let k = metric_names().iter().position(|m| *m == metric)?;
    Some(rows.iter().map(|r| r.metrics[k].median).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(offset: f64) -> Vec<[f64; 14]> {
        (1..=3)
            .map(|t| {
                let mut row = [offset; 14];
                row[0] = t as f64;
                row[1] = 0.0;
                row
            })
            .collect()
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0, f64::NAN];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!(quantile(&[f64::NAN], 0.5).is_nan());
    }

    #[test]
    fn seed_order_does_not_matter() {
        let a = aggregate(&[table(1.0), table(5.0), table(2.0)]).unwrap();
        let b = aggregate(&[table(2.0), table(1.0), table(5.0)]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].metrics[0].median, 2.0);
        let k = metric_names().len() - 1;
        assert_eq!(a[0].metrics[k].median, 4.0);
    }

    #[test]
    fn mismatched_checkpoints_rejected() {
        let mut t = table(0.0);
        t.pop();
        assert!(aggregate(&[table(0.0), t]).is_err());
    }
}
