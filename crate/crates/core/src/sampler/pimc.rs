//! Path-integral QMC in alternating `Sz`/`Sx` product bases.
//!
//! `H = H_d + H_o` with `H_d` built from `Sz` factors only and `H_o` from `Sx`
//! factors only. Inserting complete sets of both bases between Trotter
//! factors gives the weight
//! `Π_j e^{-ε E_d(z_j)} <z_j|x_j> e^{-ε E_o(x_j)} <x_j|z_{j+1}>`, `ε = β/T`,
//! whose overlaps are real but not positive.

use faer::{Mat, Side};
use rand::Rng;

use super::ChainStats;
use crate::error::{Error, Result};
use crate::estimators::Reweightable;
use crate::spin::{Axis, HamiltonianSpec, HamiltonianTerm, SpinValue};

/// `<m_z = S - k | x-eigenvector l>`, with `x` eigenvalues `-S + l`.
#[derive(Debug, Clone, PartialEq)]
pub struct SxEigenbasis {
    spin: SpinValue,
    overlaps: Vec<f64>,
}

impl SxEigenbasis {
    pub fn spin(&self) -> SpinValue {
        self.spin
    }

    pub fn dimension(&self) -> usize {
        self.spin.dimension()
    }

    pub fn overlap(&self, z: usize, x: usize) -> f64 {
        self.overlaps[z * self.dimension() + x]
    }

    /// `Sx` eigenvalue of label `x`.
    pub fn mx(&self, x: usize) -> f64 {
        -self.spin.s() + x as f64
    }
}

/// Diagonalizes the single-site `Sx`.
pub fn sx_eigenbasis(spin: SpinValue) -> Result<SxEigenbasis> {
    let d = spin.dimension();
    let mut sx = Mat::<f64>::zeros(d, d);
    for (i, j, v) in spin.operator_entries(Axis::X) {
        sx[(i, j)] = v.re;
    }
    let eig = sx.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let u = eig.U();
    let values = eig.S().column_vector();
    for l in 0..d {
        let expected = -spin.s() + l as f64;
        if (values[l] - expected).abs() > 1e-8 * (1.0 + spin.s()) {
            return Err(Error::Eigen(format!("Sx eigenvalue {} where {expected} was expected", values[l])));
        }
    }
    let overlaps = (0..d).flat_map(|k| (0..d).map(move |l| u[(k, l)])).collect();
    Ok(SxEigenbasis { spin, overlaps })
}

/// Basis labels `z[j][a]` and `x[j][a]`, each in `[0, 2S_a]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DitConfiguration {
    num_sites: usize,
    num_slices: usize,
    z: Vec<usize>,
    x: Vec<usize>,
}

impl DitConfiguration {
    pub fn new(num_sites: usize, num_slices: usize) -> Self {
        Self { num_sites, num_slices, z: vec![0; num_sites * num_slices], x: vec![0; num_sites * num_slices] }
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn num_slices(&self) -> usize {
        self.num_slices
    }

    /// Slices taken modulo `T`.
    pub fn z(&self, slice: usize, site: usize) -> usize {
        self.z[(slice % self.num_slices) * self.num_sites + site]
    }

    pub fn x(&self, slice: usize, site: usize) -> usize {
        self.x[(slice % self.num_slices) * self.num_sites + site]
    }

    pub fn set(&mut self, slice: usize, site: usize, z: usize, x: usize) {
        let i = slice * self.num_sites + site;
        self.z[i] = z;
        self.x[i] = x;
    }
}

/// One recorded sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiSample {
    /// Sign of the weight, `±1`.
    pub sign: f64,
    pub log_abs_weight: f64,
    /// `(1/T) Σ_j [E_d(z_j) + E_o(x_j)]`.
    pub energy: f64,
    /// Accepted fraction of this sweep's proposals.
    pub acceptance: f64,
}

impl Reweightable for PiSample {
    fn observable(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.energy, 0.0)
    }

    fn im_s_eff(&self) -> f64 {
        if self.sign < 0.0 {
            std::f64::consts::PI
        } else {
            0.0
        }
    }

    fn acceptance(&self) -> f64 {
        self.acceptance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiQmcChain {
    pub samples: Vec<PiSample>,
    pub stats: ChainStats,
}

struct Model {
    num_sites: usize,
    num_slices: usize,
    epsilon: f64,
    diagonal: Vec<HamiltonianTerm>,
    off_diagonal: Vec<HamiltonianTerm>,
    bases: Vec<SxEigenbasis>,
}

impl Model {
    fn new(spec: &HamiltonianSpec, beta: f64, num_slices: usize) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        if num_slices == 0 {
            return Err(Error::InvalidParameter("need at least one time slice".into()));
        }
        let mut diagonal = Vec::new();
        let mut off_diagonal = Vec::new();
        for term in spec.terms() {
            if term.is_pure(Axis::Z) {
                diagonal.push(term.clone());
            } else if term.is_pure(Axis::X) {
                off_diagonal.push(term.clone());
            } else {
                return Err(Error::Unsupported(format!(
                    "path-integral QMC needs terms built from only Sz or only Sx factors, got {term}"
                )));
            }
        }
        let mut bases: Vec<SxEigenbasis> = Vec::with_capacity(spec.num_sites());
        for &spin in spec.spins() {
            match bases.iter().find(|b| b.spin() == spin) {
                Some(b) => bases.push(b.clone()),
                None => bases.push(sx_eigenbasis(spin)?),
            }
        }
        Ok(Self {
            num_sites: spec.num_sites(),
            num_slices,
            epsilon: beta / num_slices as f64,
            diagonal,
            off_diagonal,
            bases,
        })
    }

    fn diagonal_energy(&self, c: &DitConfiguration, slice: usize) -> f64 {
        self.diagonal
            .iter()
            .map(|t| t.coefficient * t.factors.iter().map(|f| self.bases[f.site].spin().m(c.z(slice, f.site))).product::<f64>())
            .sum()
    }

    fn off_diagonal_energy(&self, c: &DitConfiguration, slice: usize) -> f64 {
        self.off_diagonal
            .iter()
            .map(|t| t.coefficient * t.factors.iter().map(|f| self.bases[f.site].mx(c.x(slice, f.site))).product::<f64>())
            .sum()
    }

    /// `(log |W|, sign W)`; `log |W| = -inf` for a vanishing weight.
    fn log_weight(&self, c: &DitConfiguration) -> (f64, f64) {
        let mut log_abs = 0.0;
        let mut sign = 1.0;
        for j in 0..self.num_slices {
            log_abs -= self.epsilon * (self.diagonal_energy(c, j) + self.off_diagonal_energy(c, j));
            for (a, basis) in self.bases.iter().enumerate() {
                for o in [basis.overlap(c.z(j, a), c.x(j, a)), basis.overlap(c.z(j + 1, a), c.x(j, a))] {
                    if o == 0.0 {
                        return (f64::NEG_INFINITY, 0.0);
                    }
                    log_abs += o.abs().ln();
                    if o < 0.0 {
                        sign = -sign;
                    }
                }
            }
        }
        (log_abs, sign)
    }

    fn energy(&self, c: &DitConfiguration) -> f64 {
        (0..self.num_slices)
            .map(|j| self.diagonal_energy(c, j) + self.off_diagonal_energy(c, j))
            .sum::<f64>()
            / self.num_slices as f64
    }

    fn random_labels<R: Rng + ?Sized>(&self, site: usize, rng: &mut R) -> (usize, usize) {
        let d = self.bases[site].dimension();
        (rng.random_range(0..d), rng.random_range(0..d))
    }
}

/// Metropolis over basis labels sampling `|W|`, one record per sweep of
/// `n T` proposals. Each proposal redraws `(z_j, x_j)` of one site uniformly.
pub fn pi_qmc_chain<R: Rng + ?Sized>(
    spec: &HamiltonianSpec,
    beta: f64,
    num_slices: usize,
    n_therm: usize,
    n_sweeps: usize,
    rng: &mut R,
) -> Result<PiQmcChain> {
    let model = Model::new(spec, beta, num_slices)?;
    let (n, t) = (model.num_sites, model.num_slices);

    let mut config = DitConfiguration::new(n, t);
    let mut current = (f64::NEG_INFINITY, 0.0);
    for _ in 0..10_000 {
        for j in 0..t {
            for a in 0..n {
                let (z, x) = model.random_labels(a, rng);
                config.set(j, a, z, x);
            }
        }
        current = model.log_weight(&config);
        if current.0.is_finite() {
            break;
        }
    }
    if !current.0.is_finite() {
        return Err(Error::InvalidParameter("no configuration with nonzero weight found".into()));
    }

    let mut stats = ChainStats::default();
    let mut samples = Vec::with_capacity(n_sweeps);
    for sweep in 0..n_therm + n_sweeps {
        let mut accepted = 0;
        for j in 0..t {
            for a in 0..n {
                let (old_z, old_x) = (config.z(j, a), config.x(j, a));
                let (z, x) = model.random_labels(a, rng);
                config.set(j, a, z, x);
                let proposed = model.log_weight(&config);
                let u: f64 = rng.random();
                if proposed.0.is_finite() && u <= (proposed.0 - current.0).exp() {
                    current = proposed;
                    accepted += 1;
                } else {
                    config.set(j, a, old_z, old_x);
                }
            }
        }
        stats.proposals += n * t;
        stats.accepted += accepted;
        if sweep >= n_therm {
            samples.push(PiSample {
                sign: current.1,
                log_abs_weight: current.0,
                energy: model.energy(&config),
                acceptance: accepted as f64 / (n * t) as f64,
            });
        }
    }
    Ok(PiQmcChain { samples, stats })
}
