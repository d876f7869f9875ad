//! Finite-difference gradient checking and brute-force metric oracles.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub const DEFAULT_FD_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Worst per-coordinate relative error.
    pub max_rel_err: f64,
    /// `‖g_fd - g‖ / max(‖g_fd‖, ‖g‖)` over the whole vector; unlike the
    /// per-coordinate error it is not dominated by round-off on
    /// coordinates whose true derivative is zero.
    pub norm_rel_err: f64,
    pub worst_coord: usize,
    pub eps: f64,
    /// Some coordinate's one-sided slopes disagree by more than smooth
    /// curvature allows: the point sits within `eps` of a kink.
    pub near_kink: bool,
}

/// Compares `grad` with central differences of `loss` at `params`.
/// Relative error per coordinate is `|g_fd - g| / max(|g_fd|, |g|, 1e-8)`.
pub fn finite_diff_check<F>(
    mut loss: F,
    params: &[f64],
    grad: &[f64],
    eps: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != grad.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            actual: grad.len(),
            context: "gradient vs parameter count",
        });
    }
    let f0 = loss(params);
    let mut x = params.to_vec();
    let (mut diff_sq, mut fd_sq, mut grad_sq) = (0.0, 0.0, 0.0);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        norm_rel_err: 0.0,
        worst_coord: 0,
        eps,
        near_kink: false,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let fp = loss(&x);
        x[i] = orig - eps;
        let fm = loss(&x);
        x[i] = orig;
        let fd = (fp - fm) / (2.0 * eps);
        let (right, left) = ((fp - f0) / eps, (f0 - fm) / eps);
        if (right - left).abs() > 1e-2 * fd.abs().max(1.0) {
            report.near_kink = true;
        }
        diff_sq += (fd - grad[i]).powi(2);
        fd_sq += fd * fd;
        grad_sq += grad[i] * grad[i];
        let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_coord = i;
        }
    }
    let scale = fd_sq.max(grad_sq).sqrt();
    report.norm_rel_err = if scale > 0.0 {
        diff_sq.sqrt() / scale
    } else {
        0.0
    };
    Ok(report)
}

/// Runs `check` on successive attempts until one lands away from every kink,
/// returning that attempt's report, or the last one after `max_attempts`.
pub fn check_off_kink<F>(max_attempts: usize, mut check: F) -> Result<GradCheckReport>
where
    F: FnMut(usize) -> Result<GradCheckReport>,
{
    let mut last = None;
    for attempt in 0..max_attempts.max(1) {
        let report = check(attempt)?;
        if !report.near_kink {
            return Ok(report);
        }
        last = Some(report);
    }
    Ok(last.expect("at least one attempt"))
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `(nmi, ami)` from the contingency table with plain factorials. Only
/// defined for `n <= 20`, where every factorial is exact to rounding.
pub fn brute_force_metric(u: &[i64], v: &[i64]) -> Result<(f64, f64)> {
    let n = u.len();
    if n != v.len() || n == 0 {
        return Err(Error::InvalidInput(
            "labelings must be non-empty and equally long".into(),
        ));
    }
    if n > 20 {
        return Err(Error::InvalidInput(format!(
            "brute-force oracle limited to 20 points, got {n}"
        )));
    }
    let mut table: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut rows: BTreeMap<i64, usize> = BTreeMap::new();
    let mut cols: BTreeMap<i64, usize> = BTreeMap::new();
    for (&x, &y) in u.iter().zip(v) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let nf = n as f64;
    let h = |m: &BTreeMap<i64, usize>| {
        -m.values()
            .map(|&c| c as f64 / nf * (c as f64 / nf).ln())
            .sum::<f64>()
    };
    let (hu, hv) = (h(&rows), h(&cols));
    let mut mi = 0.0;
    for (&(x, y), &c) in &table {
        let p = c as f64 / nf;
        mi += p * (p / (rows[&x] as f64 / nf * cols[&y] as f64 / nf)).ln();
    }
    let nmi = match (rows.len(), cols.len()) {
        (1, 1) => 1.0,
        (1, _) | (_, 1) => 0.0,
        _ => (mi / ((hu + hv) / 2.0)).clamp(0.0, 1.0),
    };
    if table.len() == rows.len() && table.len() == cols.len() {
        return Ok((nmi, 1.0));
    }
    let mut emi = 0.0;
    for &a in rows.values() {
        for &b in cols.values() {
            let lo = if a + b > n { a + b - n } else { 0 }.max(1);
            for k in lo..=a.min(b) {
                let prob = factorial(a) * factorial(b) * factorial(n - a) * factorial(n - b)
                    / (factorial(n)
                        * factorial(k)
                        * factorial(a - k)
                        * factorial(b - k)
                        * factorial(n + k - a - b));
                emi += k as f64 / nf * (nf * k as f64 / (a * b) as f64).ln() * prob;
            }
        }
    }
    let denom = (hu + hv) / 2.0 - emi;
    let ami = if denom.abs() < 1e-12 {
        0.0
    } else {
        (mi - emi) / denom
    };
    Ok((nmi, ami))
}
