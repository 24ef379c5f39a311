//! Adaptive Simpson quadrature on a finite interval.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

#[derive(Debug, Clone, Copy)]
pub struct Simpson {
    /// Absolute tolerance for the whole interval.
    pub abs_tol: f64,
    /// Number of equal panels the interval is split into before refinement.
    pub panels: usize,
}

impl Default for Simpson {
    fn default() -> Self {
        Self { abs_tol: 1e-9, panels: 32 }
    }
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

impl Simpson {
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(Error::Quadrature(format!("invalid interval [{a}, {b}]")));
        }
        let panels = self.panels.max(1);
        let h = (b - a) / panels as f64;
        let tol = self.abs_tol / panels as f64;
        let mut total = 0.0;
        for k in 0..panels {
            let lo = a + h * k as f64;
            let hi = if k + 1 == panels { b } else { lo + h };
            let m = 0.5 * (lo + hi);
            let (fa, fm, fb) = (eval(&f, lo)?, eval(&f, m)?, eval(&f, hi)?);
            let whole = simpson(lo, hi, fa, fm, fb);
            total += self.refine(&f, Panel { a: lo, b: hi, fa, fm, fb, whole }, tol, 0)?;
        }
        Ok(total)
    }

    fn refine<F: Fn(f64) -> f64>(&self, f: &F, p: Panel, tol: f64, depth: u32) -> Result<f64> {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let flm = eval(f, lm)?;
        let frm = eval(f, rm)?;
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let diff = left + right - p.whole;
        if diff.abs() <= 15.0 * tol {
            return Ok(left + right + diff / 15.0);
        }
        if depth >= MAX_DEPTH {
            return Err(Error::Quadrature(format!(
                "no convergence on [{}, {}] after {MAX_DEPTH} bisections",
                p.a, p.b
            )));
        }
        let l = self.refine(f, Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left }, tol / 2.0, depth + 1)?;
        let r = self.refine(f, Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right }, tol / 2.0, depth + 1)?;
        Ok(l + r)
    }
}

fn eval<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let y = f(x);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::Quadrature(format!("integrand is {y} at x = {x}")))
    }
}
