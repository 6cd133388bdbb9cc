//! Aggregation of CSV rows across repetitions.

use std::collections::BTreeMap;
use std::fmt::Write;

use spin_thimble::estimators::{aggregate, RepetitionResult, SweepReport};

use crate::run::Row;

/// Per `(method, β)` mean and population std over the successful rows.
pub fn summarize(rows: &[Row]) -> SweepReport {
    let results: Vec<RepetitionResult> = rows
        .iter()
        .filter(|r| r.is_ok())
        .filter_map(|r| {
            Some(RepetitionResult {
                beta: r.beta,
                method: r.method.clone(),
                energy: r.energy_re?,
                phase_statistic: r.phase_abs?,
            })
        })
        .collect();
    aggregate(&results)
}

/// Exact energy per β, taken from the `energy_exact` column.
pub fn exact_curve(rows: &[Row]) -> BTreeMap<u64, f64> {
    rows.iter().filter_map(|r| Some((r.beta.to_bits(), r.energy_exact?))).collect()
}

/// Fixed-width text table of a sweep.
pub fn render(rows: &[Row]) -> String {
    let report = summarize(rows);
    let exact = exact_curve(rows);
    let mut failures: BTreeMap<(String, u64), usize> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.is_ok()) {
        *failures.entry((r.method.clone(), r.beta.to_bits())).or_default() += 1;
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>5} {:>3} {:>24} {:>12} {:>20} {:>6}",
        "method", "beta", "n", "energy (mean ± std)", "exact", "phase (mean ± std)", "failed"
    );
    for c in &report.cells {
        let ex = exact.get(&c.beta.to_bits()).map_or("-".to_string(), |e| format!("{e:.4}"));
        let failed = failures.remove(&(c.method.clone(), c.beta.to_bits())).unwrap_or(0);
        let _ = writeln!(
            out,
            "{:<10} {:>5.2} {:>3} {:>24} {:>12} {:>20} {:>6}",
            c.method,
            c.beta,
            c.energy.count,
            format!("{:.4} ± {:.4}", c.energy.mean, c.energy.std),
            ex,
            format!("{:.4} ± {:.4}", c.phase_statistic.mean, c.phase_statistic.std),
            failed
        );
    }
    for ((method, beta), n) in failures {
        let _ = writeln!(out, "{:<10} {:>5.2} {:>3} {:>24} {:>12} {:>20} {:>6}", method, f64::from_bits(beta), 0, "-", "-", "-", n);
    }
    out
}
