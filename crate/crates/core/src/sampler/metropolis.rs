use rand::Rng;

use super::{perturb, ChainStats};
use crate::error::Result;

/// A point scored by the target: `re_action` is `-log` of the unnormalized
/// density, `payload` whatever the caller wants recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated<E> {
    pub re_action: f64,
    pub payload: E,
}

/// Random-walk Metropolis on `ℝ^d` with Gaussian proposals of width
/// `step_size`, targeting `∝ e^{-re_action}`.
///
/// `record` is called once per step after `n_therm` thermalization steps,
/// with the current point and whether this step's proposal was accepted.
/// A proposal whose evaluation fails is rejected and counted in
/// [`ChainStats::failures`]. The start point must evaluate.
pub fn metropolis<E, R, F, G>(
    start: Vec<f64>,
    step_size: f64,
    n_therm: usize,
    n_samples: usize,
    rng: &mut R,
    mut evaluate: F,
    mut record: G,
) -> Result<ChainStats>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<Evaluated<E>>,
    G: FnMut(&[f64], &Evaluated<E>, bool),
{
    let mut current = start;
    let mut current_eval = evaluate(&current)?;
    let mut candidate = current.clone();
    let mut stats = ChainStats::default();
    for step in 0..n_therm + n_samples {
        candidate.copy_from_slice(&current);
        perturb(&mut candidate, step_size, rng);
        let proposal = evaluate(&candidate);
        let u: f64 = rng.random();
        stats.proposals += 1;
        let accepted = match proposal {
            Ok(eval) => {
                let delta = eval.re_action - current_eval.re_action;
                if eval.re_action.is_finite() && u <= (-delta).exp() {
                    std::mem::swap(&mut current, &mut candidate);
                    current_eval = eval;
                    true
                } else {
                    false
                }
            }
            Err(_) => {
                stats.failures += 1;
                false
            }
        };
        if accepted {
            stats.accepted += 1;
        }
        if step >= n_therm {
            record(&current, &current_eval, accepted);
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    /// Separable toy target `e^{-(x²/2 + y⁴/4)}`.
    fn toy_action(p: &[f64]) -> f64 {
        0.5 * p[0] * p[0] + 0.25 * p[1].powi(4)
    }

    /// Probability mass of `[a, b)` for a 1D density `∝ e^{-v(t)}`, by Simpson.
    fn mass(v: impl Fn(f64) -> f64, a: f64, b: f64, norm: f64) -> f64 {
        let n = 200;
        let h = (b - a) / n as f64;
        let mut s = (-v(a)).exp() + (-v(b)).exp();
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * (-v(a + k as f64 * h)).exp();
        }
        s * h / 3.0 / norm
    }

    #[test]
    fn toy_action_density_chi_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let thin = 10;
        let n_kept = 100_000;
        let mut kept = Vec::with_capacity(n_kept);
        let mut counter = 0usize;
        let stats = metropolis(
            vec![0.0, 0.0],
            1.2,
            1000,
            n_kept * thin,
            &mut rng,
            |p| Ok(Evaluated { re_action: toy_action(p), payload: () }),
            |p, _, _| {
                counter += 1;
                if counter.is_multiple_of(thin) {
                    kept.push([p[0], p[1]]);
                }
            },
        )
        .unwrap();
        assert_eq!(kept.len(), n_kept);
        assert!(stats.acceptance_rate() > 0.2 && stats.acceptance_rate() < 0.9);

        let vx = |t: f64| 0.5 * t * t;
        let vy = |t: f64| 0.25 * t.powi(4);
        let norm_x = (2.0 * std::f64::consts::PI).sqrt();
        let norm_y = mass(vy, -8.0, 8.0, 1.0);
        let edges_x = [-f64::INFINITY, -1.5, -0.75, 0.0, 0.75, 1.5, f64::INFINITY];
        let edges_y = [-f64::INFINITY, -1.0, -0.4, 0.0, 0.4, 1.0, f64::INFINITY];
        let clip = |e: f64| e.clamp(-8.0, 8.0);
        let mut chi2 = 0.0;
        let cells = (edges_x.len() - 1) * (edges_y.len() - 1);
        for i in 0..edges_x.len() - 1 {
            for k in 0..edges_y.len() - 1 {
                let px = mass(vx, clip(edges_x[i]), clip(edges_x[i + 1]), norm_x);
                let py = mass(vy, clip(edges_y[k]), clip(edges_y[k + 1]), norm_y);
                let expected = px * py * n_kept as f64;
                let observed = kept
                    .iter()
                    .filter(|p| {
                        p[0] >= edges_x[i] && p[0] < edges_x[i + 1] && p[1] >= edges_y[k] && p[1] < edges_y[k + 1]
                    })
                    .count() as f64;
                chi2 += (observed - expected).powi(2) / expected;
            }
        }
        let p_value = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(chi2);
        assert!(p_value > 0.01, "chi2 = {chi2}, p = {p_value}");
    }

    #[test]
    fn failures_are_rejections() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut accepted_flags = Vec::new();
        let stats = metropolis(
            vec![0.0],
            0.5,
            0,
            1000,
            &mut rng,
            |p| {
                if p[0] > 0.0 {
                    Err(Error::NonFinite)
                } else {
                    Ok(Evaluated { re_action: p[0] * p[0], payload: p[0] })
                }
            },
            |p, e, acc| {
                assert!(p[0] <= 0.0);
                assert_eq!(e.payload, p[0]);
                accepted_flags.push(acc);
            },
        )
        .unwrap();
        assert_eq!(accepted_flags.len(), 1000);
        assert!(stats.failures > 100, "{stats:?}");
        assert!(stats.accepted + stats.failures <= stats.proposals);
        assert_eq!(stats.accepted, accepted_flags.iter().filter(|&&a| a).count());
    }

    #[test]
    fn rejected_steps_repeat_the_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut trace: Vec<(f64, bool)> = Vec::new();
        metropolis(
            vec![0.0],
            3.0,
            0,
            500,
            &mut rng,
            |p| Ok(Evaluated { re_action: 4.0 * p[0] * p[0], payload: () }),
            |p, _, acc| trace.push((p[0], acc)),
        )
        .unwrap();
        for w in trace.windows(2) {
            if !w[1].1 {
                assert_eq!(w[0].0, w[1].0);
            }
        }
        assert!(trace.iter().any(|t| !t.1));
    }
}
