use num_complex::Complex64;
use rand::Rng;

use super::{metropolis, Chain, Evaluated, SampleRecord, SamplerParams};
use crate::action::{action_prime, mean_classical_hamiltonian, ActionParams, ComplexConfiguration, RealConfiguration};
use crate::error::{Error, Result};
use crate::flow::flow_real;

/// Attempts at drawing a start point that evaluates cleanly.
const START_ATTEMPTS: usize = 100;

/// `(1/T) Σ_j H_cl(j)` at a (flowed) configuration.
pub fn energy_observable(params: &ActionParams, flowed: &ComplexConfiguration) -> Result<Complex64> {
    mean_classical_hamiltonian(params, flowed)
}

struct Point {
    flowed: ComplexConfiguration,
    s_eff: Complex64,
    observable: Complex64,
}

fn run<R, F>(sp: &SamplerParams, rng: &mut R, mut score: F) -> Result<Chain>
where
    R: Rng + ?Sized,
    F: FnMut(&RealConfiguration) -> Result<(ComplexConfiguration, Complex64)>,
{
    sp.validate()?;
    let params = &sp.action;
    let (n, t) = (params.num_sites(), params.num_slices());
    let mut evaluate = |coords: &[f64]| -> Result<Evaluated<Point>> {
        let r = RealConfiguration::from_flat(n, t, coords.to_vec())?;
        let (flowed, s_eff) = score(&r)?;
        let observable = energy_observable(params, &flowed)?;
        if !(s_eff.re.is_finite() && s_eff.im.is_finite() && observable.re.is_finite() && observable.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Evaluated { re_action: s_eff.re, payload: Point { flowed, s_eff, observable } })
    };

    let mut start = None;
    let mut last_error = Error::NonFinite;
    for _ in 0..START_ATTEMPTS {
        let r = match sp.initial.draw_for(params, rng) {
            Ok(r) => r,
            Err(e) => {
                last_error = e;
                continue;
            }
        };
        match evaluate(r.as_slice()) {
            Ok(_) => {
                start = Some(r);
                break;
            }
            Err(e) => last_error = e,
        }
    }
    let start = start.ok_or(last_error)?;

    let mut samples = Vec::with_capacity(sp.n_samples);
    let stats = metropolis(
        start.into_flat(),
        sp.step_size,
        sp.n_therm,
        sp.n_samples,
        rng,
        &mut evaluate,
        |coords, eval, accepted| {
            samples.push(SampleRecord {
                pre_flow: RealConfiguration::from_flat(n, t, coords.to_vec()).expect("chain keeps dimension"),
                flowed: eval.payload.flowed.clone(),
                s_eff: eval.payload.s_eff,
                observable: eval.payload.observable,
                accepted,
            })
        },
    )?;
    Ok(Chain { samples, stats })
}

/// Metropolis on the flowed manifold, weighted by `e^{-Re S_eff}`.
pub fn thimble_chain<R: Rng + ?Sized>(sp: &SamplerParams, rng: &mut R) -> Result<Chain> {
    run(sp, rng, |r| {
        let result = flow_real(&sp.action, &sp.flow, r)?;
        let flowed = result.flowed_configuration(&sp.action);
        Ok((flowed, result.s_eff))
    })
}

/// Metropolis on the real domain weighted by `e^{-Re S'}`; `sp.flow` is ignored.
pub fn spin_qmc_chain<R: Rng + ?Sized>(sp: &SamplerParams, rng: &mut R) -> Result<Chain> {
    run(sp, rng, |r| {
        let z = ComplexConfiguration::from(r);
        let s = action_prime(&sp.action, &z)?.value;
        Ok((z, s))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::reweighted_expectation;
    use crate::flow::FlowParams;
    use crate::sampler::{initial_configuration, InitialState};
    use crate::spin::{parse_hamiltonian, SpinValue};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_spin(beta: f64, t: usize) -> ActionParams {
        let spec = parse_hamiltonian("1*Sy1", 1, SpinValue::integer(40).unwrap()).unwrap();
        ActionParams::new(spec, beta, t).unwrap()
    }

    fn params(action: ActionParams, flow: FlowParams, step: f64, n_therm: usize, n_samples: usize) -> SamplerParams {
        SamplerParams { n_therm, n_samples, step_size: step, seed: 11, flow, action, initial: InitialState::default() }
    }

    #[test]
    fn observable_examples() {
        let triplet = parse_hamiltonian(
            "1*Sz1*Sz2 + 1*Sz1*Sz3 + 1*Sz2*Sz3 + 1*Sx1*Sx2 + 1*Sx1*Sx3 + 1*Sx2*Sx3",
            3,
            SpinValue::integer(10).unwrap(),
        )
        .unwrap();
        for t in [1, 3, 5] {
            let p = ActionParams::new(triplet.clone(), 1.0, t).unwrap();
            let e = energy_observable(&p, &ComplexConfiguration::zeros(3, t)).unwrap();
            assert!((e - Complex64::new(300.0, 0.0)).norm() < 1e-12);
        }
        let p = single_spin(1.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = initial_configuration(1, 3, &mut rng);
        assert_eq!(energy_observable(&p, &ComplexConfiguration::from(&r)).unwrap().im, 0.0);
    }

    #[test]
    fn identity_flow_matches_spin_qmc_bit_for_bit() {
        let sp = params(single_spin(0.5, 3), FlowParams::identity(), 0.2, 20, 200);
        let a = thimble_chain(&sp, &mut sp.rng()).unwrap();
        let b = spin_qmc_chain(&sp, &mut sp.rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn same_seed_same_chain() {
        let fp = FlowParams::new(0.01, 80.0).unwrap();
        let sp = params(single_spin(0.5, 3), fp, 0.03 / 0.5f64.sqrt(), 10, 50);
        let a = thimble_chain(&sp, &mut sp.rng()).unwrap();
        let b = thimble_chain(&sp, &mut sp.rng()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 50);
        let other = SamplerParams { seed: 12, ..sp.clone() };
        assert_ne!(thimble_chain(&other, &mut other.rng()).unwrap(), a);
    }

    #[test]
    fn rejected_records_repeat() {
        let sp = params(single_spin(1.0, 3), FlowParams::identity(), 0.5, 0, 300);
        let chain = spin_qmc_chain(&sp, &mut sp.rng()).unwrap();
        assert!(chain.samples.iter().any(|s| !s.accepted));
        for w in chain.samples.windows(2) {
            if !w[1].accepted {
                assert_eq!(w[0].pre_flow, w[1].pre_flow);
                assert_eq!(w[0].s_eff, w[1].s_eff);
            }
        }
    }

    /// Free spin, `T = 1`: the real-slice weight is the volume factor
    /// `(1 + x² + y²)^{-2}`, whose radial CDF is `r²/(1 + r²)`.
    #[test]
    fn zero_hamiltonian_samples_volume_density() {
        let spec = parse_hamiltonian("0*Sz1", 1, SpinValue::from_twice(1).unwrap()).unwrap();
        let action = ActionParams::new(spec, 1.0, 1).unwrap();
        let sp = SamplerParams {
            n_therm: 1000,
            n_samples: 200_000,
            step_size: 1.5,
            seed: 99,
            flow: FlowParams::identity(),
            action,
            initial: InitialState::default(),
        };
        let chain = thimble_chain(&sp, &mut sp.rng()).unwrap();
        let mut radii: Vec<f64> = chain
            .samples
            .iter()
            .step_by(40)
            .map(|s| s.pre_flow.as_slice()[0].hypot(s.pre_flow.as_slice()[1]))
            .collect();
        radii.sort_by(f64::total_cmp);
        let n = radii.len() as f64;
        let d = radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let f = r * r / (1.0 + r * r);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // Asymptotic Kolmogorov-Smirnov critical value at the 1% level.
        let critical = 1.628 / n.sqrt();
        assert!(d < critical, "D = {d}, critical {critical}");
        for s in &chain.samples {
            assert_eq!(s.observable, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn flowed_chain_improves_phase_on_single_spin() {
        let beta = 1.0;
        let fp = FlowParams::new(0.01, 80.0).unwrap();
        let thimble = params(single_spin(beta, 3), fp, 0.03 / beta.sqrt(), 300, 600);
        let plain = params(single_spin(beta, 3), FlowParams::identity(), 0.3 / beta.sqrt(), 300, 600);
        let a = thimble_chain(&thimble, &mut thimble.rng()).unwrap();
        let b = spin_qmc_chain(&plain, &mut plain.rng()).unwrap();
        let ra = reweighted_expectation(&a.samples).unwrap();
        let rb = reweighted_expectation(&b.samples).unwrap();
        assert!(ra.acceptance_rate > 0.0 && ra.acceptance_rate < 1.0);
        assert!(ra.phase_statistic > rb.phase_statistic, "{} vs {}", ra.phase_statistic, rb.phase_statistic);
    }
}
