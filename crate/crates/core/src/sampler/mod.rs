//! Monte Carlo samplers: the generalized-thimble Metropolis chain, plain spin
//! coherent state QMC, and the z/x-basis path-integral QMC.

mod metropolis;
mod pimc;
mod thimble;

pub use metropolis::{metropolis, Evaluated};
pub use pimc::{pi_qmc_chain, sx_eigenbasis, DitConfiguration, PiQmcChain, PiSample, SxEigenbasis};
pub use thimble::{energy_observable, spin_qmc_chain, thimble_chain};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::action::{action_prime, grad_action_prime, ActionParams, ComplexConfiguration, RealConfiguration};
use crate::error::{Error, Result};
use crate::estimators::Reweightable;
use crate::flow::FlowParams;

/// Standard deviation of the default Gaussian start.
pub const INITIAL_SCALE: f64 = 0.1;

/// Where a chain starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    /// Every coordinate drawn from `N(0, σ²)`, i.e. near the all-up state.
    Gaussian(f64),
    /// A constant path whose spin directions are uniform on the sphere.
    SphereUniform,
    /// A [`SphereUniform`](Self::SphereUniform) draw followed by gradient
    /// descent of `Re S'` on the real domain, which ends on a real critical
    /// point of the action (a classical minimum on constant paths).
    Descent,
}

impl Default for InitialState {
    fn default() -> Self {
        Self::Gaussian(INITIAL_SCALE)
    }
}

impl InitialState {
    /// Draws a start for a chain on `params`.
    pub fn draw_for<R: Rng + ?Sized>(&self, params: &ActionParams, rng: &mut R) -> Result<RealConfiguration> {
        let (n, t) = (params.num_sites(), params.num_slices());
        match self {
            Self::Descent => descend(params, Self::SphereUniform.draw(n, t, rng)),
            other => Ok(other.draw(n, t, rng)),
        }
    }

    /// Draws a start without reference to an action; [`Descent`](Self::Descent)
    /// falls back to its sphere-uniform seed.
    pub fn draw<R: Rng + ?Sized>(&self, num_sites: usize, num_slices: usize, rng: &mut R) -> RealConfiguration {
        match *self {
            Self::Gaussian(scale) => {
                let mut r = RealConfiguration::zeros(num_sites, num_slices);
                perturb(r.as_mut_slice(), scale, rng);
                r
            }
            Self::SphereUniform | Self::Descent => {
                let mut r = RealConfiguration::zeros(num_sites, num_slices);
                for a in 0..num_sites {
                    // Stereographic image of a uniform direction: |w| = tan(θ/2).
                    let cos_theta: f64 = rng.random_range(-1.0..1.0);
                    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let radius = ((1.0 - cos_theta) / (1.0 + cos_theta)).sqrt();
                    for j in 0..num_slices {
                        r.set(a, j, radius * phi.cos(), radius * phi.sin());
                    }
                }
                r
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerParams {
    pub n_therm: usize,
    pub n_samples: usize,
    /// Per-coordinate standard deviation of the Gaussian proposal.
    pub step_size: f64,
    pub seed: u64,
    pub flow: FlowParams,
    pub action: ActionParams,
    pub initial: InitialState,
}

impl SamplerParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParameter(format!("step size must be > 0, got {}", self.step_size)));
        }
        if let InitialState::Gaussian(scale) = self.initial {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidParameter(format!("initial scale must be > 0, got {scale}")));
            }
        }
        self.flow.validate()
    }

    /// The chain's own generator, seeded from `seed`.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// One recorded Metropolis step.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub pre_flow: RealConfiguration,
    pub flowed: ComplexConfiguration,
    pub s_eff: Complex64,
    pub observable: Complex64,
    pub accepted: bool,
}

impl Reweightable for SampleRecord {
    fn observable(&self) -> Complex64 {
        self.observable
    }

    fn im_s_eff(&self) -> f64 {
        self.s_eff.im
    }

    fn acceptance(&self) -> f64 {
        if self.accepted {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChainStats {
    pub proposals: usize,
    pub accepted: usize,
    /// Proposals whose evaluation failed (singular point or non-finite flow).
    pub failures: usize,
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<SampleRecord>,
    pub stats: ChainStats,
}

/// Adds independent `N(0, step_size²)` noise to every coordinate.
pub fn propose<R: Rng + ?Sized>(r: &RealConfiguration, step_size: f64, rng: &mut R) -> RealConfiguration {
    let mut out = r.clone();
    perturb(out.as_mut_slice(), step_size, rng);
    out
}

pub(crate) fn perturb<R: Rng + ?Sized>(coords: &mut [f64], step_size: f64, rng: &mut R) {
    let normal = Normal::new(0.0, step_size).expect("finite step size");
    for v in coords {
        *v += normal.sample(rng);
    }
}

/// `log q(from → to)` of [`propose`].
pub fn proposal_log_density(from: &[f64], to: &[f64], step_size: f64) -> f64 {
    let norm = -0.5 * (2.0 * std::f64::consts::PI * step_size * step_size).ln();
    from.iter()
        .zip(to)
        .map(|(a, b)| norm - (b - a).powi(2) / (2.0 * step_size * step_size))
        .sum()
}

/// Gradient descent of `Re S'` over real configurations with Armijo
/// backtracking, stopped when the gradient is below `1e-9 · max(1, |S'|)`.
pub fn descend(params: &ActionParams, start: RealConfiguration) -> Result<RealConfiguration> {
    let value = |r: &RealConfiguration| -> Result<f64> { Ok(action_prime(params, &ComplexConfiguration::from(r))?.value.re) };
    let mut r = start;
    let mut f = value(&r)?;
    let mut step = 1e-3;
    for _ in 0..20_000 {
        let grad: Vec<f64> = grad_action_prime(params, &ComplexConfiguration::from(&r))?.iter().map(|g| g.re).collect();
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        if norm2.sqrt() <= 1e-9 * f.abs().max(1.0) {
            break;
        }
        loop {
            let mut trial = r.clone();
            for (v, g) in trial.as_mut_slice().iter_mut().zip(&grad) {
                *v -= step * g;
            }
            match value(&trial) {
                Ok(ft) if ft <= f - 0.5 * step * norm2 => {
                    r = trial;
                    f = ft;
                    step *= 2.0;
                    break;
                }
                _ => {
                    step *= 0.5;
                    if step < 1e-300 {
                        return Ok(r);
                    }
                }
            }
        }
    }
    Ok(r)
}

/// Gaussian draw of scale [`INITIAL_SCALE`] around the origin.
pub fn initial_configuration<R: Rng + ?Sized>(num_sites: usize, num_slices: usize, rng: &mut R) -> RealConfiguration {
    InitialState::default().draw(num_sites, num_slices, rng)
}
