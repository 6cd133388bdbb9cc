//! Discrete spin coherent state path-integral action.
//!
//! Each site `a` and imaginary-time slice `j` carries a coherent-state label
//! `μ = x + i y`. Slices are periodic (`T ≡ 0`). The action is
//!
//! ```text
//! S  = Σ_a Σ_j 2i S_a (x_j y_{j+1} - y_j x_{j+1}) / (1 + x_j² + y_j²)
//!    + (β/T) Σ_j H_cl(slice j)
//! S' = S + 2 Σ_a Σ_j log(1 + x_j² + y_j²)
//! ```
//!
//! continued holomorphically by treating every `x` and `y` as an independent
//! complex variable (plain squares, no conjugation). Coordinates are flattened
//! site-major, slice-minor, `x` before `y`: see [`coord_index`].

use num_complex::Complex64;

use crate::cmatrix::CMatrix;
use crate::error::{Error, Result};
use crate::spin::{Axis, HamiltonianSpec, SpinValue};

/// `|1 + x² + y²|` below this is treated as the singularity.
pub const SINGULAR_GUARD: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Flat index of coordinate `component` (0 = x, 1 = y) of `site` at `slice`.
#[inline]
pub fn coord_index(num_slices: usize, site: usize, slice: usize, component: usize) -> usize {
    (site * num_slices + slice) * 2 + component
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionParams {
    spec: HamiltonianSpec,
    beta: f64,
    num_slices: usize,
}

impl ActionParams {
    pub fn new(spec: HamiltonianSpec, beta: f64, num_slices: usize) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        if num_slices == 0 {
            return Err(Error::InvalidParameter("need at least one time slice".into()));
        }
        Ok(Self { spec, beta, num_slices })
    }

    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn num_slices(&self) -> usize {
        self.num_slices
    }

    pub fn num_sites(&self) -> usize {
        self.spec.num_sites()
    }

    /// Number of real integration variables, `2 n T`.
    pub fn dimension(&self) -> usize {
        2 * self.num_sites() * self.num_slices
    }

    fn idx(&self, site: usize, slice: usize, component: usize) -> usize {
        coord_index(self.num_slices, site, slice % self.num_slices, component)
    }
}

macro_rules! configuration {
    ($name:ident, $scalar:ty) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            num_sites: usize,
            num_slices: usize,
            data: Vec<$scalar>,
        }

        impl $name {
            pub fn zeros(num_sites: usize, num_slices: usize) -> Self {
                Self { num_sites, num_slices, data: vec![<$scalar>::default(); 2 * num_sites * num_slices] }
            }

            pub fn from_flat(num_sites: usize, num_slices: usize, data: Vec<$scalar>) -> Result<Self> {
                if data.len() != 2 * num_sites * num_slices {
                    return Err(Error::InvalidParameter(format!(
                        "configuration needs {} coordinates, got {}",
                        2 * num_sites * num_slices,
                        data.len()
                    )));
                }
                Ok(Self { num_sites, num_slices, data })
            }

            pub fn num_sites(&self) -> usize {
                self.num_sites
            }

            pub fn num_slices(&self) -> usize {
                self.num_slices
            }

            pub fn as_slice(&self) -> &[$scalar] {
                &self.data
            }

            pub fn as_mut_slice(&mut self) -> &mut [$scalar] {
                &mut self.data
            }

            pub fn into_flat(self) -> Vec<$scalar> {
                self.data
            }

            /// `x` of `site` at `slice`, slices taken modulo `T`.
            pub fn x(&self, site: usize, slice: usize) -> $scalar {
                self.data[coord_index(self.num_slices, site, slice % self.num_slices, 0)]
            }

            pub fn y(&self, site: usize, slice: usize) -> $scalar {
                self.data[coord_index(self.num_slices, site, slice % self.num_slices, 1)]
            }

            pub fn set(&mut self, site: usize, slice: usize, x: $scalar, y: $scalar) {
                let i = coord_index(self.num_slices, site, slice, 0);
                self.data[i] = x;
                self.data[i + 1] = y;
            }

            /// Relabels slice `j` as slice `j + shift`.
            pub fn rotate_slices(&self, shift: usize) -> Self {
                let mut out = self.clone();
                for a in 0..self.num_sites {
                    for j in 0..self.num_slices {
                        out.set(a, (j + shift) % self.num_slices, self.x(a, j), self.y(a, j));
                    }
                }
                out
            }
        }
    };
}

configuration!(RealConfiguration, f64);
configuration!(ComplexConfiguration, Complex64);

impl RealConfiguration {
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl ComplexConfiguration {
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl From<&RealConfiguration> for ComplexConfiguration {
    fn from(r: &RealConfiguration) -> Self {
        Self {
            num_sites: r.num_sites,
            num_slices: r.num_slices,
            data: r.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// An action value together with `min |1 + x² + y²|` over the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionValue {
    pub value: Complex64,
    pub singular_proximity: f64,
}

/// Value and first/second derivatives of a function of `(x, y)`.
#[derive(Debug, Clone, Copy)]
struct Jet {
    v: Complex64,
    dx: Complex64,
    dy: Complex64,
    dxx: Complex64,
    dxy: Complex64,
    dyy: Complex64,
}

impl Jet {
    fn grad(&self, c: usize) -> Complex64 {
        if c == 0 {
            self.dx
        } else {
            self.dy
        }
    }

    fn hess(&self, c: usize, d: usize) -> Complex64 {
        match (c, d) {
            (0, 0) => self.dxx,
            (1, 1) => self.dyy,
            _ => self.dxy,
        }
    }
}

fn denominator(x: Complex64, y: Complex64) -> Complex64 {
    1.0 + x * x + y * y
}

/// Jet of `1 / (1 + x² + y²)`.
fn inverse_denominator(x: Complex64, y: Complex64) -> Jet {
    let r = 1.0 / denominator(x, y);
    let r2 = r * r;
    let r3 = r2 * r;
    Jet {
        v: r,
        dx: -2.0 * x * r2,
        dy: -2.0 * y * r2,
        dxx: -2.0 * r2 + 8.0 * x * x * r3,
        dxy: 8.0 * x * y * r3,
        dyy: -2.0 * r2 + 8.0 * y * y * r3,
    }
}

fn classical_jet(axis: Axis, spin: SpinValue, x: Complex64, y: Complex64) -> Jet {
    let r = inverse_denominator(x, y);
    let two_s = 2.0 * spin.s();
    match axis {
        Axis::X => Jet {
            v: two_s * x * r.v,
            dx: two_s * (r.v + x * r.dx),
            dy: two_s * x * r.dy,
            dxx: two_s * (2.0 * r.dx + x * r.dxx),
            dxy: two_s * (r.dy + x * r.dxy),
            dyy: two_s * x * r.dyy,
        },
        Axis::Y => Jet {
            v: two_s * y * r.v,
            dx: two_s * y * r.dx,
            dy: two_s * (r.v + y * r.dy),
            dxx: two_s * y * r.dxx,
            dxy: two_s * (r.dx + y * r.dxy),
            dyy: two_s * (2.0 * r.dy + y * r.dyy),
        },
        // S (1 - x² - y²)/(1 + x² + y²) = S (2r - 1)
        Axis::Z => Jet {
            v: spin.s() * (2.0 * r.v - 1.0),
            dx: two_s * r.dx,
            dy: two_s * r.dy,
            dxx: two_s * r.dxx,
            dxy: two_s * r.dxy,
            dyy: two_s * r.dyy,
        },
    }
}

fn check_point(x: Complex64, y: Complex64, site: usize, slice: usize) -> Result<f64> {
    let proximity = denominator(x, y).norm();
    if proximity < SINGULAR_GUARD || !proximity.is_finite() {
        return Err(Error::Singular { site, slice, proximity });
    }
    Ok(proximity)
}

/// Classical Hamiltonian of a single spin operator at `μ = x + i y`:
/// `Sx → 2Sx/(1+x²+y²)`, `Sy → 2Sy/(1+x²+y²)`, `Sz → S(1-x²-y²)/(1+x²+y²)`.
pub fn classical_term(axis: Axis, spin: SpinValue, x: Complex64, y: Complex64) -> Result<Complex64> {
    check_point(x, y, 0, 0)?;
    Ok(classical_jet(axis, spin, x, y).v)
}

fn check_configuration(params: &ActionParams, config: &ComplexConfiguration) -> Result<f64> {
    if config.num_sites() != params.num_sites() || config.num_slices() != params.num_slices() {
        return Err(Error::InvalidParameter(format!(
            "configuration shape ({}, {}) does not match ({}, {})",
            config.num_sites(),
            config.num_slices(),
            params.num_sites(),
            params.num_slices()
        )));
    }
    let mut proximity = f64::INFINITY;
    for a in 0..config.num_sites() {
        for j in 0..config.num_slices() {
            proximity = proximity.min(check_point(config.x(a, j), config.y(a, j), a, j)?);
        }
    }
    Ok(proximity)
}

/// `Σ_terms coeff · Π_factors H_cl(site)` at slice `j`.
pub fn classical_hamiltonian(params: &ActionParams, config: &ComplexConfiguration, slice: usize) -> Result<Complex64> {
    if slice >= params.num_slices() {
        return Err(Error::InvalidParameter(format!("slice {slice} out of range")));
    }
    check_configuration(params, config)?;
    Ok(slice_hamiltonian(params, config, slice))
}

fn slice_hamiltonian(params: &ActionParams, config: &ComplexConfiguration, j: usize) -> Complex64 {
    let spec = params.spec();
    spec.terms()
        .iter()
        .map(|term| {
            term.factors.iter().fold(Complex64::new(term.coefficient, 0.0), |acc, f| {
                acc * classical_jet(f.axis, spec.spin(f.site), config.x(f.site, j), config.y(f.site, j)).v
            })
        })
        .sum()
}

/// `(1/T) Σ_j H_cl(slice j)`.
pub fn mean_classical_hamiltonian(params: &ActionParams, config: &ComplexConfiguration) -> Result<Complex64> {
    check_configuration(params, config)?;
    let t = params.num_slices();
    let total: Complex64 = (0..t).map(|j| slice_hamiltonian(params, config, j)).sum();
    Ok(total / t as f64)
}

/// The Berry-phase term `Σ 2iS (x_j y_{j+1} - y_j x_{j+1}) / (1 + x_j² + y_j²)`.
pub fn geometric_term(params: &ActionParams, config: &ComplexConfiguration) -> Result<Complex64> {
    check_configuration(params, config)?;
    let mut total = ZERO;
    for a in 0..params.num_sites() {
        let c = Complex64::new(0.0, 2.0 * params.spec().spin(a).s());
        for j in 0..params.num_slices() {
            let (x, y) = (config.x(a, j), config.y(a, j));
            let (xn, yn) = (config.x(a, j + 1), config.y(a, j + 1));
            total += c * (x * yn - y * xn) / denominator(x, y);
        }
    }
    Ok(total)
}

/// `2 Σ log(1 + x² + y²)`, principal branch.
pub fn volume_term(params: &ActionParams, config: &ComplexConfiguration) -> Result<Complex64> {
    check_configuration(params, config)?;
    Ok(config
        .as_slice()
        .chunks_exact(2)
        .map(|p| 2.0 * denominator(p[0], p[1]).ln())
        .sum())
}

pub fn action(params: &ActionParams, config: &ComplexConfiguration) -> Result<ActionValue> {
    let d = evaluate(params, config, Order::Value)?;
    Ok(ActionValue { value: d.action, singular_proximity: d.singular_proximity })
}

pub fn action_prime(params: &ActionParams, config: &ComplexConfiguration) -> Result<ActionValue> {
    let d = evaluate(params, config, Order::Value)?;
    Ok(ActionValue { value: d.action_prime, singular_proximity: d.singular_proximity })
}

/// Holomorphic gradient of `S'` in flattened coordinate order.
pub fn grad_action_prime(params: &ActionParams, config: &ComplexConfiguration) -> Result<Vec<Complex64>> {
    Ok(evaluate(params, config, Order::Gradient)?.grad_action_prime)
}

/// Holomorphic Hessian of `S'`; symmetric.
pub fn hessian_action_prime(params: &ActionParams, config: &ComplexConfiguration) -> Result<CMatrix> {
    Ok(evaluate(params, config, Order::Hessian)?
        .hessian_prime
        .expect("hessian requested"))
}

/// How many derivatives [`evaluate`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

/// Action, volume-absorbed action, and their derivatives at one point.
///
/// Gradients are empty below [`Order::Gradient`]; the Hessian is present only
/// at [`Order::Hessian`].
#[derive(Debug, Clone)]
pub struct ActionDerivatives {
    pub action: Complex64,
    pub action_prime: Complex64,
    pub grad_action: Vec<Complex64>,
    pub grad_action_prime: Vec<Complex64>,
    pub hessian_prime: Option<CMatrix>,
    pub singular_proximity: f64,
}

/// Accumulates a local term's contributions into the global arrays.
struct Accumulator<'a> {
    order: Order,
    value: &'a mut Complex64,
    grad: &'a mut [Complex64],
    hess: Option<&'a mut CMatrix>,
}

impl Accumulator<'_> {
    fn add_value(&mut self, v: Complex64) {
        *self.value += v;
    }

    fn add_grad(&mut self, i: usize, g: Complex64) {
        if self.order >= Order::Gradient {
            self.grad[i] += g;
        }
    }

    fn add_hess(&mut self, i: usize, j: usize, h: Complex64) {
        if let Some(m) = self.hess.as_deref_mut() {
            m[(i, j)] += h;
        }
    }
}

/// Evaluates `S`, `S'` and derivatives up to `order`.
pub fn evaluate(params: &ActionParams, config: &ComplexConfiguration, order: Order) -> Result<ActionDerivatives> {
    let singular_proximity = check_configuration(params, config)?;
    let n = params.dimension();
    let mut action = ZERO;
    let mut grad_action = if order >= Order::Gradient { vec![ZERO; n] } else { Vec::new() };
    let mut hessian = (order >= Order::Hessian).then(|| CMatrix::zeros(n));

    {
        let mut acc = Accumulator { order, value: &mut action, grad: &mut grad_action, hess: hessian.as_mut() };
        add_geometric(params, config, &mut acc);
        add_hamiltonian(params, config, &mut acc);
    }
    let mut volume = ZERO;
    let mut grad_volume = if order >= Order::Gradient { vec![ZERO; n] } else { Vec::new() };
    {
        // The volume Hessian goes straight into the S' Hessian.
        let mut acc = Accumulator { order, value: &mut volume, grad: &mut grad_volume, hess: hessian.as_mut() };
        add_volume(params, config, &mut acc);
    }
    let grad_action_prime = grad_action.iter().zip(&grad_volume).map(|(a, b)| a + b).collect();
    Ok(ActionDerivatives {
        action,
        action_prime: action + volume,
        grad_action,
        grad_action_prime,
        hessian_prime: hessian,
        singular_proximity,
    })
}

fn add_geometric(params: &ActionParams, config: &ComplexConfiguration, acc: &mut Accumulator<'_>) {
    for a in 0..params.num_sites() {
        let c = Complex64::new(0.0, 2.0 * params.spec().spin(a).s());
        for j in 0..params.num_slices() {
            let (x, y) = (config.x(a, j), config.y(a, j));
            let (xn, yn) = (config.x(a, j + 1), config.y(a, j + 1));
            let r = inverse_denominator(x, y);
            let numerator = x * yn - y * xn;
            acc.add_value(c * numerator * r.v);
            if acc.order == Order::Value {
                continue;
            }
            // Local variables: x_j, y_j, x_{j+1}, y_{j+1}.
            let vars = [params.idx(a, j, 0), params.idx(a, j, 1), params.idx(a, j + 1, 0), params.idx(a, j + 1, 1)];
            let dn = [yn, -xn, -y, x];
            let dr = [r.dx, r.dy, ZERO, ZERO];
            for u in 0..4 {
                acc.add_grad(vars[u], c * (dn[u] * r.v + numerator * dr[u]));
            }
            if acc.order < Order::Hessian {
                continue;
            }
            for u in 0..4 {
                for v in 0..4 {
                    let dnn = match (u, v) {
                        (0, 3) | (3, 0) => 1.0,
                        (1, 2) | (2, 1) => -1.0,
                        _ => 0.0,
                    };
                    let drr = if u < 2 && v < 2 { r.hess(u, v) } else { ZERO };
                    let h = dnn * r.v + dn[u] * dr[v] + dn[v] * dr[u] + numerator * drr;
                    acc.add_hess(vars[u], vars[v], c * h);
                }
            }
        }
    }
}

fn add_volume(params: &ActionParams, config: &ComplexConfiguration, acc: &mut Accumulator<'_>) {
    for a in 0..params.num_sites() {
        for j in 0..params.num_slices() {
            let (x, y) = (config.x(a, j), config.y(a, j));
            let d = denominator(x, y);
            acc.add_value(2.0 * d.ln());
            if acc.order == Order::Value {
                continue;
            }
            let r = 1.0 / d;
            let (ix, iy) = (params.idx(a, j, 0), params.idx(a, j, 1));
            acc.add_grad(ix, 4.0 * x * r);
            acc.add_grad(iy, 4.0 * y * r);
            let r2 = r * r;
            acc.add_hess(ix, ix, 4.0 * r - 8.0 * x * x * r2);
            acc.add_hess(iy, iy, 4.0 * r - 8.0 * y * y * r2);
            acc.add_hess(ix, iy, -8.0 * x * y * r2);
            acc.add_hess(iy, ix, -8.0 * x * y * r2);
        }
    }
}

fn add_hamiltonian(params: &ActionParams, config: &ComplexConfiguration, acc: &mut Accumulator<'_>) {
    let spec = params.spec();
    let weight = params.beta() / params.num_slices() as f64;
    let mut jets: Vec<Jet> = Vec::new();
    for j in 0..params.num_slices() {
        for term in spec.terms() {
            let scale = weight * term.coefficient;
            jets.clear();
            jets.extend(
                term.factors
                    .iter()
                    .map(|f| classical_jet(f.axis, spec.spin(f.site), config.x(f.site, j), config.y(f.site, j))),
            );
            let m = jets.len();
            // Product of factor values with positions `skip` left out.
            let product_except = |skip: &[usize]| -> Complex64 {
                jets.iter()
                    .enumerate()
                    .filter(|(k, _)| !skip.contains(k))
                    .fold(Complex64::new(1.0, 0.0), |p, (_, jet)| p * jet.v)
            };
            acc.add_value(scale * product_except(&[]));
            if acc.order == Order::Value {
                continue;
            }
            for k in 0..m {
                let rest = scale * product_except(&[k]);
                for c in 0..2 {
                    let i = params.idx(term.factors[k].site, j, c);
                    acc.add_grad(i, jets[k].grad(c) * rest);
                    if acc.order < Order::Hessian {
                        continue;
                    }
                    for d in 0..2 {
                        acc.add_hess(i, params.idx(term.factors[k].site, j, d), jets[k].hess(c, d) * rest);
                    }
                }
                if acc.order < Order::Hessian {
                    continue;
                }
                for l in 0..m {
                    if l == k {
                        continue;
                    }
                    let rest = scale * product_except(&[k, l]);
                    for c in 0..2 {
                        for d in 0..2 {
                            acc.add_hess(
                                params.idx(term.factors[k].site, j, c),
                                params.idx(term.factors[l].site, j, d),
                                jets[k].grad(c) * jets[l].grad(d) * rest,
                            );
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::parse_hamiltonian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TRIPLET: &str = "Sz1*Sz2 + Sz2*Sz3 + Sz3*Sz1 + Sx1*Sx2 + Sx2*Sx3 + Sx3*Sx1";

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params(text: &str, n: usize, twice: u32, beta: f64, t: usize) -> ActionParams {
        let spec = parse_hamiltonian(text, n, SpinValue::from_twice(twice).unwrap()).unwrap();
        ActionParams::new(spec, beta, t).unwrap()
    }

    fn random_complex(p: &ActionParams, rng: &mut ChaCha8Rng, im_scale: f64) -> ComplexConfiguration {
        let data = (0..p.dimension())
            .map(|_| c(rng.random_range(-1.0..1.0), im_scale * rng.random_range(-1.0..1.0)))
            .collect();
        ComplexConfiguration::from_flat(p.num_sites(), p.num_slices(), data).unwrap()
    }

    /// Straightforward term-by-term evaluation, sharing no helpers with the
    /// production path.
    fn naive_action(p: &ActionParams, z: &ComplexConfiguration) -> Complex64 {
        let t = p.num_slices();
        let mut total = c(0.0, 0.0);
        for j in 0..t {
            for a in 0..p.num_sites() {
                let s = p.spec().spin(a).s();
                let (x0, y0) = (z.x(a, j), z.y(a, j));
                let (x1, y1) = (z.x(a, (j + 1) % t), z.y(a, (j + 1) % t));
                let d = 1.0 + x0 * x0 + y0 * y0;
                total += c(0.0, 2.0 * s) * ((y1 - y0) * x0 - (x1 - x0) * y0) / d;
            }
            let mut h = c(0.0, 0.0);
            for term in p.spec().terms() {
                let mut prod = c(term.coefficient, 0.0);
                for f in &term.factors {
                    let s = p.spec().spin(f.site).s();
                    let (x, y) = (z.x(f.site, j), z.y(f.site, j));
                    let d = 1.0 + x * x + y * y;
                    prod *= match f.axis {
                        Axis::X => 2.0 * s * x / d,
                        Axis::Y => 2.0 * s * y / d,
                        Axis::Z => s * (1.0 - x * x - y * y) / d,
                    };
                }
                h += prod;
            }
            total += p.beta() / t as f64 * h;
        }
        total
    }

    #[test]
    fn classical_term_examples() {
        let half = SpinValue::from_twice(1).unwrap();
        let s7 = SpinValue::integer(7).unwrap();
        assert_eq!(classical_term(Axis::Z, s7, c(0.0, 0.0), c(0.0, 0.0)).unwrap(), c(7.0, 0.0));
        assert_eq!(classical_term(Axis::X, half, c(1.0, 0.0), c(0.0, 0.0)).unwrap(), c(0.5, 0.0));
        let theta: f64 = 0.3;
        let v = classical_term(Axis::Z, s7, c(theta.cos(), 0.0), c(theta.sin(), 0.0)).unwrap();
        assert!(v.norm() < 1e-15);
        // x² + y² = -1 exactly.
        assert!(matches!(
            classical_term(Axis::Y, s7, c(0.0, 1.0), c(0.0, 0.0)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn classical_hamiltonian_examples() {
        let p = params("Sy1", 1, 80, 1.0, 3);
        let z = ComplexConfiguration::zeros(1, 3);
        assert_eq!(classical_hamiltonian(&p, &z, 0).unwrap(), c(0.0, 0.0));

        let p = params(TRIPLET, 3, 20, 1.0, 3);
        let z = ComplexConfiguration::zeros(3, 3);
        for j in 0..3 {
            assert_eq!(classical_hamiltonian(&p, &z, j).unwrap(), c(300.0, 0.0));
        }
        assert!(classical_hamiltonian(&p, &z, 3).is_err());

        let p = params("Sz1*Sx2", 2, 2, 1.0, 1);
        let mut z = ComplexConfiguration::zeros(2, 1);
        z.set(1, 0, c(1.0, 0.0), c(0.0, 0.0));
        assert_eq!(classical_hamiltonian(&p, &z, 0).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn geometric_term_examples() {
        let p = params("Sz1", 1, 1, 1.0, 2);
        let mut z = ComplexConfiguration::zeros(1, 2);
        z.set(0, 0, c(1.0, 0.0), c(0.0, 0.0));
        z.set(0, 1, c(0.0, 0.0), c(1.0, 0.0));
        // Every intermediate is a dyadic rational, so this is exact.
        assert_eq!(geometric_term(&p, &z).unwrap(), c(0.0, 0.0));

        let p = params("Sz1", 1, 3, 1.0, 4);
        let mut z = ComplexConfiguration::zeros(1, 4);
        for j in 0..4 {
            z.set(0, j, c(0.7, 0.0), c(-0.2, 0.0));
        }
        assert_eq!(geometric_term(&p, &z).unwrap(), c(0.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = ComplexConfiguration::from(&RealConfiguration::from_flat(
            1,
            4,
            (0..8).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap());
        assert_eq!(geometric_term(&p, &z).unwrap().re, 0.0);
    }

    #[test]
    fn action_matches_naive_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (text, n, twice) in [("Sy1", 1, 80), (TRIPLET, 3, 20), ("0.3*Sx1*Sy2 + Sz2", 2, 3)] {
            let p = params(text, n, twice, 0.7, 3);
            for _ in 0..20 {
                let z = random_complex(&p, &mut rng, 0.3);
                let got = action(&p, &z).unwrap().value;
                let want = naive_action(&p, &z);
                assert!((got - want).norm() <= 1e-12 * want.norm().max(1.0), "{text}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn small_beta_action_is_geometric() {
        let p = params("Sy1", 1, 80, 1e-300, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = random_complex(&p, &mut rng, 0.2);
        let geo = geometric_term(&p, &z).unwrap();
        assert!((action(&p, &z).unwrap().value - geo).norm() <= 1e-12 * geo.norm());
    }

    #[test]
    fn constant_real_path_action_is_beta_hcl() {
        let p = params("Sy1", 1, 80, 0.6, 3);
        let mut z = ComplexConfiguration::zeros(1, 3);
        for j in 0..3 {
            z.set(0, j, c(0.3, 0.0), c(-0.8, 0.0));
        }
        let s = action(&p, &z).unwrap().value;
        let h = classical_term(Axis::Y, SpinValue::integer(40).unwrap(), c(0.3, 0.0), c(-0.8, 0.0)).unwrap();
        assert_eq!(s.im, 0.0);
        assert!((s - 0.6 * h).norm() < 1e-12);
    }

    #[test]
    fn volume_term_examples() {
        let p = params("Sz1", 1, 1, 1.0, 1);
        let mut z = ComplexConfiguration::zeros(1, 1);
        z.set(0, 0, c(1.0, 0.0), c(1.0, 0.0));
        let diff = action_prime(&p, &z).unwrap().value - action(&p, &z).unwrap().value;
        assert!((diff - c(2.0 * 3f64.ln(), 0.0)).norm() < 1e-15);
        let origin = ComplexConfiguration::zeros(1, 1);
        assert_eq!(volume_term(&p, &origin).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn real_configurations_have_real_volume_and_hamiltonian() {
        let p = params(TRIPLET, 3, 20, 1.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let z = random_complex(&p, &mut rng, 0.0);
            let s = action(&p, &z).unwrap().value;
            let sp = action_prime(&p, &z).unwrap().value;
            assert_eq!((sp - s).im, 0.0);
            let geo = geometric_term(&p, &z).unwrap();
            assert_eq!(geo.re, 0.0);
            for j in 0..3 {
                assert_eq!(classical_hamiltonian(&p, &z, j).unwrap().im, 0.0);
            }
            assert!((s.im - geo.im).abs() < 1e-12 * geo.norm().max(1.0));
        }
    }

    #[test]
    fn slice_rotation_invariance() {
        let p = params(TRIPLET, 3, 20, 0.9, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let z = random_complex(&p, &mut rng, 0.3);
        let base = action_prime(&p, &z).unwrap().value;
        for shift in 1..3 {
            let rotated = action_prime(&p, &z.rotate_slices(shift)).unwrap().value;
            assert!((rotated - base).norm() < 1e-12 * base.norm());
        }
    }

    fn fd_gradient(p: &ActionParams, z: &ComplexConfiguration, h: f64) -> Vec<Complex64> {
        (0..p.dimension())
            .map(|i| {
                let mut plus = z.clone();
                let mut minus = z.clone();
                plus.as_mut_slice()[i] += h;
                minus.as_mut_slice()[i] -= h;
                (action_prime(p, &plus).unwrap().value - action_prime(p, &minus).unwrap().value) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (text, n, twice, t) in [("Sy1", 1, 80, 3), (TRIPLET, 3, 20, 3), ("Sz1*Sx2 + 0.5*Sy1", 2, 1, 1), ("Sx1", 1, 2, 2)] {
            let p = params(text, n, twice, 0.8, t);
            for _ in 0..10 {
                let z = random_complex(&p, &mut rng, 0.3);
                let g = grad_action_prime(&p, &z).unwrap();
                let fd = fd_gradient(&p, &z, 1e-5);
                let scale = g.iter().map(|v| v.norm()).fold(1.0, f64::max);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).norm() <= 1e-6 * scale, "{text}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn cauchy_riemann_holds() {
        let p = params(TRIPLET, 3, 20, 1.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = random_complex(&p, &mut rng, 0.3);
        let h = 1e-5;
        let i_unit = c(0.0, 1.0);
        let mut worst = 0.0f64;
        let mut scale = 1.0f64;
        for k in 0..p.dimension() {
            let shifted = |delta: Complex64| {
                let mut w = z.clone();
                w.as_mut_slice()[k] += delta;
                action_prime(&p, &w).unwrap().value
            };
            let along_re = (shifted(c(h, 0.0)) - shifted(c(-h, 0.0))) / (2.0 * h);
            let along_im = (shifted(c(0.0, h)) - shifted(c(0.0, -h))) / (2.0 * h);
            // ∂f/∂z = ∂f/∂u = -i ∂f/∂v
            worst = worst.max((along_re + i_unit * along_im).norm());
            scale = scale.max(along_re.norm());
        }
        assert!(worst <= 1e-6 * scale);
    }

    #[test]
    fn gradient_is_linear_in_coefficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p1 = params("1*Sx1*Sz2", 2, 4, 1.0, 3);
        let p3 = params("3*Sx1*Sz2", 2, 4, 1.0, 3);
        let p0 = params("0*Sx1*Sz2", 2, 4, 1.0, 3);
        let z = random_complex(&p1, &mut rng, 0.2);
        let g0 = grad_action_prime(&p0, &z).unwrap();
        let g1 = grad_action_prime(&p1, &z).unwrap();
        let g3 = grad_action_prime(&p3, &z).unwrap();
        for k in 0..g0.len() {
            let lhs = g3[k] - g0[k];
            let rhs = 3.0 * (g1[k] - g0[k]);
            assert!((lhs - rhs).norm() < 1e-12 * rhs.norm().max(1.0));
        }
    }

    #[test]
    fn hessian_symmetric_and_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (text, n, twice, t) in [("Sy1", 1, 80, 3), (TRIPLET, 3, 20, 3), ("Sz1*Sx2 + 0.5*Sy1", 2, 1, 1), ("Sx1", 1, 2, 2)] {
            let p = params(text, n, twice, 0.8, t);
            for _ in 0..5 {
                let z = random_complex(&p, &mut rng, 0.3);
                let hess = hessian_action_prime(&p, &z).unwrap();
                assert!(hess.max_abs_diff(&hess.transpose()) <= 1e-12 * hess.max_abs().max(1.0));
                let h = 1e-5;
                let scale = hess.max_abs().max(1.0);
                for k in 0..p.dimension() {
                    let mut plus = z.clone();
                    let mut minus = z.clone();
                    plus.as_mut_slice()[k] += h;
                    minus.as_mut_slice()[k] -= h;
                    let gp = grad_action_prime(&p, &plus).unwrap();
                    let gm = grad_action_prime(&p, &minus).unwrap();
                    for i in 0..p.dimension() {
                        let fd = (gp[i] - gm[i]) / (2.0 * h);
                        assert!((fd - hess[(i, k)]).norm() <= 1e-5 * scale, "{text} ({i},{k})");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_hamiltonian_hessian_is_geometric_plus_volume() {
        let p = params("0*Sz1", 1, 6, 1.0, 3);
        let mut z = ComplexConfiguration::zeros(1, 3);
        for j in 0..3 {
            z.set(0, j, c(0.4, 0.1), c(-0.3, 0.05));
        }
        let hess = hessian_action_prime(&p, &z).unwrap();
        // Geometric contribution alone, by finite differences of its own value.
        let geo = |w: &ComplexConfiguration| geometric_term(&p, w).unwrap() + volume_term(&p, w).unwrap();
        let h = 1e-4;
        for i in 0..6 {
            for k in 0..6 {
                let shift = |di: f64, dk: f64| {
                    let mut w = z.clone();
                    w.as_mut_slice()[i] += di;
                    w.as_mut_slice()[k] += dk;
                    geo(&w)
                };
                let fd = (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4.0 * h * h);
                assert!((fd - hess[(i, k)]).norm() < 1e-5 * hess.max_abs());
            }
        }
    }

    #[test]
    fn critical_point_by_newton_iteration() {
        // The gradient vanishes at the limit of a holomorphic Newton iteration.
        let p = params("Sy1", 1, 80, 1.0, 1);
        let mut z = ComplexConfiguration::zeros(1, 1);
        z.set(0, 0, c(0.05, 0.0), c(-0.5, 0.0));
        let mut norm = f64::INFINITY;
        for _ in 0..50 {
            let d = evaluate(&p, &z, Order::Hessian).unwrap();
            norm = d.grad_action_prime.iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-12 {
                break;
            }
            let step = d.hessian_prime.unwrap().lu().solve(&d.grad_action_prime);
            for (v, s) in z.as_mut_slice().iter_mut().zip(step) {
                *v -= s;
            }
        }
        assert!(norm < 1e-10, "gradient norm {norm}");
    }

    #[test]
    fn proximity_shrinks_toward_singularity() {
        let p = params("Sz1", 1, 2, 1.0, 1);
        // Straight line from the origin toward x = i (x² = -1).
        let mut last = f64::INFINITY;
        for k in 0..10 {
            let t = 1.0 - 0.5f64.powi(k);
            let mut z = ComplexConfiguration::zeros(1, 1);
            z.set(0, 0, c(0.0, t), c(0.0, 0.0));
            let prox = action(&p, &z).unwrap().singular_proximity;
            assert!(prox < last);
            last = prox;
        }
        let mut z = ComplexConfiguration::zeros(1, 1);
        z.set(0, 0, c(0.0, 1.0), c(0.0, 0.0));
        assert!(matches!(action(&p, &z), Err(Error::Singular { site: 0, slice: 0, .. })));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = params("Sz1", 1, 2, 1.0, 3);
        assert!(action(&p, &ComplexConfiguration::zeros(1, 2)).is_err());
        assert!(ActionParams::new(p.spec().clone(), 0.0, 3).is_err());
        assert!(ActionParams::new(p.spec().clone(), 1.0, 0).is_err());
    }
}
