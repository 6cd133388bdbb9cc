//! Exact diagonalization ground truth for small spin systems.
//!
//! The Hamiltonian is assembled in the product `Sz` basis (site 0 is the most
//! significant tensor factor), split into the connected components of its
//! sparsity graph, and each block is diagonalized densely. Thermal averages
//! are taken over the full eigenvalue spectrum with energies shifted by the
//! spectral minimum.

use faer::{c64, Mat, Side};

use crate::error::{Error, Result};
use crate::spin::{Axis, HamiltonianSpec};

pub const DEFAULT_DIMENSION_CAP: usize = 20_000;

/// The Hamiltonian as a list of nonzero entries.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    dimension: usize,
    /// Sorted by `(row, col)`, duplicates merged, exact zeros dropped.
    entries: Vec<(usize, usize, c64)>,
}

impl SparseHamiltonian {
    pub fn build(spec: &HamiltonianSpec, cap: usize) -> Result<Self> {
        let dimension = spec
            .hilbert_dimension()
            .filter(|&d| d <= cap)
            .ok_or(Error::DimensionCap {
                dimension: spec.hilbert_dimension().unwrap_or(usize::MAX),
                cap,
            })?;
        let n = spec.num_sites();

        // Column lists of every single-site operator: local[site][axis][col] = [(row, value)].
        let local: Vec<[Vec<Vec<(usize, c64)>>; 3]> = spec
            .spins()
            .iter()
            .map(|&spin| {
                Axis::ALL.map(|axis| {
                    let mut cols = vec![Vec::new(); spin.dimension()];
                    for (r, c, v) in spin.operator_entries(axis) {
                        cols[c].push((r, v));
                    }
                    cols
                })
            })
            .collect();
        let strides: Vec<usize> = (0..n)
            .map(|a| spec.spins()[a + 1..].iter().map(|s| s.dimension()).product())
            .collect();

        let mut entries = Vec::new();
        let mut digits = vec![0usize; n];
        let mut frontier: Vec<(usize, c64)> = Vec::new();
        let mut next: Vec<(usize, c64)> = Vec::new();
        for col in 0..dimension {
            let mut rest = col;
            for a in 0..n {
                digits[a] = rest / strides[a];
                rest %= strides[a];
            }
            for term in spec.terms() {
                frontier.clear();
                frontier.push((col, c64::new(term.coefficient, 0.0)));
                for f in &term.factors {
                    next.clear();
                    let d = digits[f.site];
                    for &(row, amp) in &frontier {
                        for &(r, v) in &local[f.site][f.axis as usize][d] {
                            let row = row - d * strides[f.site] + r * strides[f.site];
                            next.push((row, amp * v));
                        }
                    }
                    std::mem::swap(&mut frontier, &mut next);
                }
                entries.extend(frontier.iter().map(|&(row, v)| (row, col, v)));
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, c64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|e| e.2 != c64::new(0.0, 0.0));
        Ok(Self { dimension, entries: merged })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(usize, usize, c64)] {
        &self.entries
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|e| e.2.im == 0.0)
    }

    pub fn trace(&self) -> c64 {
        self.entries.iter().filter(|e| e.0 == e.1).map(|e| e.2).sum()
    }

    /// Largest `|H_ij - conj(H_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let lookup = |r: usize, c: usize| {
            self.entries
                .binary_search_by_key(&(r, c), |e| (e.0, e.1))
                .map(|i| self.entries[i].2)
                .unwrap_or(c64::new(0.0, 0.0))
        };
        self.entries
            .iter()
            .map(|&(r, c, v)| (v - lookup(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.dimension, self.dimension);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = v;
        }
        m
    }

    /// Basis indices of each connected component of the sparsity graph.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.dimension).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for &(r, c, _) in &self.entries {
            let (a, b) = (find(&mut parent, r), find(&mut parent, c));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut label = vec![usize::MAX; self.dimension];
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for i in 0..self.dimension {
            let root = find(&mut parent, i);
            if label[root] == usize::MAX {
                label[root] = blocks.len();
                blocks.push(Vec::new());
            }
            blocks[label[root]].push(i);
        }
        blocks
    }
}

/// Dense Hamiltonian `Σ coeff · ⊗ factors`, identity on untouched sites.
pub fn dense_hamiltonian(spec: &HamiltonianSpec, cap: usize) -> Result<Mat<c64>> {
    Ok(SparseHamiltonian::build(spec, cap)?.to_dense())
}

/// The real eigenvalue spectrum of a Hamiltonian, computed once and reused
/// across inverse temperatures.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ascending.
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn compute(spec: &HamiltonianSpec, cap: usize) -> Result<Self> {
        Self::from_sparse(&SparseHamiltonian::build(spec, cap)?)
    }

    pub fn from_sparse(h: &SparseHamiltonian) -> Result<Self> {
        let scale = h.entries().iter().map(|e| e.2.norm()).fold(1.0, f64::max);
        let defect = h.hermiticity_defect();
        if defect > 1e-12 * scale {
            return Err(Error::Eigen(format!("matrix is not Hermitian (defect {defect:e})")));
        }
        let real = h.is_real();
        let blocks = h.blocks();
        let mut position = vec![0usize; h.dimension()];
        for block in &blocks {
            for (k, &i) in block.iter().enumerate() {
                position[i] = k;
            }
        }
        let mut owner = vec![0usize; h.dimension()];
        for (b, block) in blocks.iter().enumerate() {
            for &i in block {
                owner[i] = b;
            }
        }
        let mut eigenvalues = Vec::with_capacity(h.dimension());
        for (b, block) in blocks.iter().enumerate() {
            let entries = h.entries().iter().filter(|e| owner[e.0] == b);
            let n = block.len();
            let values = if real {
                let mut m = Mat::<f64>::zeros(n, n);
                for &(r, c, v) in entries {
                    m[(position[r], position[c])] = v.re;
                }
                m.self_adjoint_eigenvalues(Side::Lower)
            } else {
                let mut m = Mat::<c64>::zeros(n, n);
                for &(r, c, v) in entries {
                    m[(position[r], position[c])] = v;
                }
                m.self_adjoint_eigenvalues(Side::Lower)
            }
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
            eigenvalues.extend(values);
        }
        eigenvalues.sort_by(f64::total_cmp);
        Ok(Self { eigenvalues })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    fn check_beta(beta: f64) -> Result<()> {
        if beta >= 0.0 && beta.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("beta must be finite and >= 0, got {beta}")))
        }
    }

    /// `(Σ e^{-β(E-E0)}, Σ E e^{-β(E-E0)})`
    fn shifted_sums(&self, beta: f64) -> (f64, f64) {
        let e0 = self.ground_energy();
        self.eigenvalues.iter().fold((0.0, 0.0), |(z, ez), &e| {
            let w = (-beta * (e - e0)).exp();
            (z + w, ez + e * w)
        })
    }

    /// `Tr(H e^{-βH}) / Tr(e^{-βH})`.
    pub fn thermal_energy(&self, beta: f64) -> Result<f64> {
        Self::check_beta(beta)?;
        let (z, ez) = self.shifted_sums(beta);
        Ok(ez / z)
    }

    pub fn log_partition_function(&self, beta: f64) -> Result<f64> {
        Self::check_beta(beta)?;
        let (z, _) = self.shifted_sums(beta);
        Ok(z.ln() - beta * self.ground_energy())
    }

    /// `Tr(e^{-βH})`; overflows to infinity for very cold, very large systems.
    pub fn partition_function(&self, beta: f64) -> Result<f64> {
        Ok(self.log_partition_function(beta)?.exp())
    }
}

pub fn thermal_energy(spec: &HamiltonianSpec, beta: f64) -> Result<f64> {
    Spectrum::compute(spec, DEFAULT_DIMENSION_CAP)?.thermal_energy(beta)
}

pub fn partition_function(spec: &HamiltonianSpec, beta: f64) -> Result<f64> {
    Spectrum::compute(spec, DEFAULT_DIMENSION_CAP)?.partition_function(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{parse_hamiltonian, SpinValue};

    fn spec(text: &str, n: usize, twice: u32) -> HamiltonianSpec {
        parse_hamiltonian(text, n, SpinValue::from_twice(twice).unwrap()).unwrap()
    }

    /// Independent oracle: `-d/dβ log Σ_m e^{-βm}` for H = S_axis of one spin.
    fn single_spin_energy(twice_s: u32, beta: f64) -> f64 {
        let s = f64::from(twice_s) / 2.0;
        let ms: Vec<f64> = (0..=twice_s).map(|k| s - f64::from(k)).collect();
        let z: f64 = ms.iter().map(|m| (-beta * m).exp()).sum();
        let ez: f64 = ms.iter().map(|m| m * (-beta * m).exp()).sum();
        ez / z
    }

    #[test]
    fn sz_half_matrix() {
        let h = dense_hamiltonian(&spec("Sz1", 1, 1), DEFAULT_DIMENSION_CAP).unwrap();
        assert_eq!(h[(0, 0)], c64::new(0.5, 0.0));
        assert_eq!(h[(1, 1)], c64::new(-0.5, 0.0));
        assert_eq!(h[(0, 1)], c64::new(0.0, 0.0));
    }

    #[test]
    fn sx_sx_half_has_quarter_anti_diagonal() {
        let h = dense_hamiltonian(&spec("Sx1*Sx2", 2, 1), DEFAULT_DIMENSION_CAP).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i + j == 3 { 0.25 } else { 0.0 };
                assert_eq!(h[(i, j)], c64::new(expected, 0.0), "({i},{j})");
            }
        }
    }

    #[test]
    fn tensor_order_puts_site_one_first() {
        // Sz1 on two spin-1/2 sites: diag(1/2, 1/2, -1/2, -1/2).
        let h = dense_hamiltonian(&spec("Sz1", 2, 1), DEFAULT_DIMENSION_CAP).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| h[(i, i)].re).collect();
        assert_eq!(diag, vec![0.5, 0.5, -0.5, -0.5]);
    }

    #[test]
    fn triplet_is_traceless_hermitian_and_splits() {
        let h = SparseHamiltonian::build(
            &spec("Sz1*Sz2 + Sz2*Sz3 + Sz3*Sz1 + Sx1*Sx2 + Sx2*Sx3 + Sx3*Sx1", 3, 20),
            DEFAULT_DIMENSION_CAP,
        )
        .unwrap();
        assert_eq!(h.dimension(), 9261);
        assert!(h.trace().norm() < 1e-9);
        assert!(h.hermiticity_defect() <= 1e-12);
        assert!(h.is_real());
        // Total-Sz parity is conserved.
        assert_eq!(h.blocks().len(), 2);
    }

    #[test]
    fn dimension_cap_enforced() {
        let s = spec("Sz1*Sz2", 2, 80);
        assert!(matches!(
            SparseHamiltonian::build(&s, 1000),
            Err(Error::DimensionCap { dimension: 6561, cap: 1000 })
        ));
    }

    #[test]
    fn two_level_thermal_energy() {
        let spectrum = Spectrum::compute(&spec("Sz1", 1, 1), DEFAULT_DIMENSION_CAP).unwrap();
        for beta in [0.0, 0.3, 1.0, 7.5] {
            let e = spectrum.thermal_energy(beta).unwrap();
            assert!((e + 0.5 * (beta / 2.0).tanh()).abs() < 1e-14);
            let z = spectrum.partition_function(beta).unwrap();
            assert!((z - 2.0 * (beta / 2.0).cosh()).abs() < 1e-13);
        }
        assert!(spectrum.thermal_energy(-1.0).is_err());
    }

    #[test]
    fn single_spin_40_matches_analytic_sum() {
        let spectrum = Spectrum::compute(&spec("Sy1", 1, 80), DEFAULT_DIMENSION_CAP).unwrap();
        assert!(spectrum.thermal_energy(0.0).unwrap().abs() < 1e-12);
        for k in 1..=10 {
            let beta = 0.1 * f64::from(k);
            let e = spectrum.thermal_energy(beta).unwrap();
            assert!((e - single_spin_energy(80, beta)).abs() < 1e-10, "beta = {beta}");
        }
        let z: f64 = (0..=80).map(|k| (-0.5 * (40.0 - f64::from(k))).exp()).sum();
        let got = spectrum.partition_function(0.5).unwrap();
        assert!((got - z).abs() <= 1e-12 * z);
    }

    #[test]
    fn partition_function_at_zero_beta_is_dimension() {
        let spectrum = Spectrum::compute(&spec("Sx1*Sy2 + 0.3*Sz2", 2, 3), DEFAULT_DIMENSION_CAP).unwrap();
        assert!((spectrum.partition_function(0.0).unwrap() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn energy_monotone_and_approaches_ground_state() {
        let spectrum =
            Spectrum::compute(&spec("Sz1*Sz2 + 0.7*Sx1*Sy2 + 0.2*Sx2", 2, 3), DEFAULT_DIMENSION_CAP).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..200 {
            let e = spectrum.thermal_energy(0.05 * f64::from(k)).unwrap();
            assert!(e <= last + 1e-12);
            last = e;
        }
        let ev = spectrum.eigenvalues();
        let gap = ev.iter().find(|&&e| e > ev[0] + 1e-9).unwrap() - ev[0];
        let beta = 40.0 / gap;
        assert!((spectrum.thermal_energy(beta).unwrap() - ev[0]).abs() < 1e-6);
    }

    #[test]
    fn block_solve_matches_full_complex_solve() {
        let s = spec("Sz1*Sz2 + Sx1*Sx2 + 0.4*Sy1*Sy2 + 0.1*Sz1", 2, 4);
        let h = SparseHamiltonian::build(&s, DEFAULT_DIMENSION_CAP).unwrap();
        assert!(h.blocks().len() > 1);
        let full = h.to_dense().self_adjoint_eigenvalues(Side::Lower).unwrap();
        let spectrum = Spectrum::from_sparse(&h).unwrap();
        for (a, b) in full.iter().zip(spectrum.eigenvalues()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
