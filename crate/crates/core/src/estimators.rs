//! Reweighted expectation values, the phase statistic, and aggregation over
//! independent repetitions.
//!
//! A sample drawn from `p ∝ e^{-Re S_eff}` carries the phase `e^{iθ}` with
//! `θ = -Im S_eff`, and `<O> = <O e^{iθ}>_p / <e^{iθ}>_p`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Smallest `|<e^{iθ}>|` accepted before the estimate is declared lost.
pub const MIN_PHASE: f64 = 1e-12;

/// Anything that can be reweighted.
pub trait Reweightable {
    fn observable(&self) -> Complex64;
    fn im_s_eff(&self) -> f64;
    /// Fraction of accepted proposals in the step that produced the sample.
    fn acceptance(&self) -> f64;
}

/// A bare `(observable, Im S_eff)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub observable: Complex64,
    pub im_s_eff: f64,
    pub acceptance: f64,
}

impl Reweightable for Observation {
    fn observable(&self) -> Complex64 {
        self.observable
    }

    fn im_s_eff(&self) -> f64 {
        self.im_s_eff
    }

    fn acceptance(&self) -> f64 {
        self.acceptance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateReport {
    pub observable_mean: Complex64,
    /// Real part of `observable_mean`.
    pub observable_reported: f64,
    /// `<e^{iθ}>` over the samples.
    pub mean_phase: Complex64,
    /// `|<e^{iθ}>|`, in `[0, 1]`.
    pub phase_statistic: f64,
    pub acceptance_rate: f64,
    pub n_samples: usize,
    /// Integrated autocorrelation time of `Re O`, in samples.
    pub autocorrelation_time: f64,
}

pub fn reweighted_expectation<S: Reweightable>(samples: &[S]) -> Result<EstimateReport> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples to reweight".into()));
    }
    let m = samples.len() as f64;
    let mut numerator = Complex64::new(0.0, 0.0);
    let mut denominator = Complex64::new(0.0, 0.0);
    let mut acceptance = 0.0;
    for s in samples {
        let phase = Complex64::from_polar(1.0, -s.im_s_eff());
        numerator += s.observable() * phase;
        denominator += phase;
        acceptance += s.acceptance();
    }
    let mean_phase = denominator / m;
    let phase_statistic = mean_phase.norm().min(1.0);
    if phase_statistic <= MIN_PHASE {
        return Err(Error::VanishingPhase(phase_statistic));
    }
    let observable_mean = numerator / denominator;
    let series: Vec<f64> = samples.iter().map(|s| s.observable().re).collect();
    Ok(EstimateReport {
        observable_mean,
        observable_reported: observable_mean.re,
        mean_phase,
        phase_statistic,
        acceptance_rate: acceptance / m,
        n_samples: samples.len(),
        autocorrelation_time: integrated_autocorrelation_time(&series),
    })
}

/// `|<e^{iθ}>|` alone; defined even when the reweighted ratio is not.
pub fn phase_statistic<S: Reweightable>(samples: &[S]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: Complex64 = samples.iter().map(|s| Complex64::from_polar(1.0, -s.im_s_eff())).sum();
    (sum / samples.len() as f64).norm().min(1.0)
}

/// Integrated autocorrelation time `1 + 2 Σ ρ(t)` with a self-consistent
/// window `W ≥ 5 τ(W)`. Returns 1 for constant or very short series.
pub fn integrated_autocorrelation_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for t in 1..n {
        let ct = centered[..n - t].iter().zip(&centered[t..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        tau += 2.0 * ct / c0;
        if t as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, count };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Self { mean, std: var.sqrt(), count }
    }
}

/// One repetition's headline numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionResult {
    pub beta: f64,
    pub method: String,
    pub energy: f64,
    pub phase_statistic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub beta: f64,
    pub method: String,
    pub energy: Summary,
    pub phase_statistic: Summary,
}

/// Per-`(β, method)` statistics over repetitions, ordered by method then β.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, method: &str, beta: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.method == method && c.beta == beta)
    }

    pub fn methods(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.cells.iter().map(|c| c.method.as_str()).collect();
        out.dedup();
        out
    }
}

pub fn aggregate(results: &[RepetitionResult]) -> SweepReport {
    let mut groups: BTreeMap<(String, u64), (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in results {
        // β is non-negative, so its bit pattern orders like the value.
        let entry = groups
            .entry((r.method.clone(), r.beta.to_bits()))
            .or_insert_with(|| (r.beta, Vec::new(), Vec::new()));
        entry.1.push(r.energy);
        entry.2.push(r.phase_statistic);
    }
    SweepReport {
        cells: groups
            .into_iter()
            .map(|((method, _), (beta, energies, phases))| SweepCell {
                beta,
                method,
                energy: Summary::of(&energies),
                phase_statistic: Summary::of(&phases),
            })
            .collect(),
    }
}
