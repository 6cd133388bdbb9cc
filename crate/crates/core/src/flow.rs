//! Regularized holomorphic flow and its Jacobian.
//!
//! The flow integrates
//!
//! ```text
//! dz_i/dτ = e^{-2 Re S/Λ} conj(∂_i S')
//! dJ/dτ   = e^{-2 Re S/Λ} [ (conj(H') - conj(∂S') ⊗ conj(∂S)/Λ) conj(J)
//!                           - conj(∂S') ⊗ ∂S J / Λ ]
//! ```
//!
//! from `J(0) = I` with adaptive Dormand-Prince or fixed-step RK4, where `H'` is the Hessian of `S'`. The
//! Jacobian equation above is the exact linearization of the regularized
//! velocity; [`CrossTerm`] selects alternative gradients in the two `1/Λ`
//! slots. Since `dS'/dτ = e^{-2 Re S/Λ} |∂S'|²` is real and non-negative,
//! `Im S'` is conserved and `Re S'` grows along the flow.

use num_complex::Complex64;

use crate::action::{evaluate, ActionDerivatives, ActionParams, ComplexConfiguration, Order, RealConfiguration};
use crate::cmatrix::CMatrix;
use crate::error::{Error, Result};

/// Which gradients enter the two `1/Λ` terms of the Jacobian flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossTerm {
    /// `∂S` in both slots: the true derivative of the regularized flow map.
    #[default]
    Consistent,
    /// `∂S'` in both slots.
    PrimeThroughout,
    /// `∂S` in the `conj(J)` slot and `∂S'` in the `J` slot.
    Mixed,
}

/// How the flow ODE is stepped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrator {
    /// Classical RK4 with `substeps` equal steps.
    Rk4 { substeps: usize },
    /// Dormand-Prince 5(4) with per-step error control: every component of
    /// `(z, J)` must satisfy `|err| ≤ tolerance · max(1, |y|)`.
    DormandPrince { tolerance: f64, max_steps: usize },
}

impl Integrator {
    pub const DEFAULT_SUBSTEPS: usize = 20;
    pub const DEFAULT_TOLERANCE: f64 = 1e-9;
    pub const DEFAULT_MAX_STEPS: usize = 4000;

    pub fn adaptive() -> Self {
        Self::DormandPrince { tolerance: Self::DEFAULT_TOLERANCE, max_steps: Self::DEFAULT_MAX_STEPS }
    }
}

impl Default for Integrator {
    fn default() -> Self {
        Self::adaptive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub flow_time: f64,
    /// Regulator scale; `f64::INFINITY` switches the regulator off.
    pub lambda: f64,
    pub integrator: Integrator,
    pub cross_term: CrossTerm,
}

impl FlowParams {
    pub fn new(flow_time: f64, lambda: f64) -> Result<Self> {
        let p = Self { flow_time, lambda, integrator: Integrator::default(), cross_term: CrossTerm::default() };
        p.validate()?;
        Ok(p)
    }

    /// The identity map.
    pub fn identity() -> Self {
        Self { flow_time: 0.0, lambda: f64::INFINITY, integrator: Integrator::default(), cross_term: CrossTerm::default() }
    }

    /// Fixed-step RK4 with `substeps` steps.
    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.integrator = Integrator::Rk4 { substeps };
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_cross_term(mut self, cross_term: CrossTerm) -> Self {
        self.cross_term = cross_term;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.flow_time >= 0.0 && self.flow_time.is_finite()) {
            return Err(Error::InvalidParameter(format!("flow time must be >= 0, got {}", self.flow_time)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be > 0, got {}", self.lambda)));
        }
        match self.integrator {
            Integrator::Rk4 { substeps: 0 } => Err(Error::InvalidParameter("substeps must be >= 1".into())),
            Integrator::DormandPrince { tolerance, max_steps } if !(tolerance > 0.0) || max_steps == 0 => {
                Err(Error::InvalidParameter(format!("bad adaptive integrator settings {tolerance}, {max_steps}")))
            }
            _ => Ok(()),
        }
    }
}

/// A holomorphic action the flow can integrate.
pub trait FlowTarget {
    fn dimension(&self) -> usize;

    /// `S`, `S'` and derivatives at flat coordinates `z`.
    fn derivatives(&self, z: &[Complex64], order: Order) -> Result<ActionDerivatives>;
}

impl FlowTarget for ActionParams {
    fn dimension(&self) -> usize {
        ActionParams::dimension(self)
    }

    fn derivatives(&self, z: &[Complex64], order: Order) -> Result<ActionDerivatives> {
        let config = ComplexConfiguration::from_flat(self.num_sites(), self.num_slices(), z.to_vec())?;
        evaluate(self, &config, order)
    }
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    /// Flowed coordinates in the action's flattening order.
    pub flowed: Vec<Complex64>,
    pub jacobian: CMatrix,
    /// Principal-branch `log det J`.
    pub log_det_jacobian: Complex64,
    /// `S'(flowed) - log det J`.
    pub s_eff: Complex64,
    /// `S'` at the start and end of the flow.
    pub action_prime_start: Complex64,
    pub action_prime_end: Complex64,
    /// `S` (no volume term) at the end of the flow.
    pub action_end: Complex64,
    /// `|Im S'(end) - Im S'(start)|`.
    pub im_drift: f64,
    /// `Re S'(end) - Re S'(start)`.
    pub re_gain: f64,
    /// Smallest `Re S'` change over a single RK4 step (0 when no steps ran).
    pub min_step_re_gain: f64,
    pub steps: usize,
}

impl FlowResult {
    pub fn flowed_configuration(&self, params: &ActionParams) -> ComplexConfiguration {
        ComplexConfiguration::from_flat(params.num_sites(), params.num_slices(), self.flowed.clone())
            .expect("flow preserves dimension")
    }
}

struct StageOutput {
    derivs: ActionDerivatives,
    dz: Vec<Complex64>,
    dj: CMatrix,
}

/// Flow velocity `(dz/dτ, dJ/dτ)` at `(z, J)`.
fn vector_field(
    target: &impl FlowTarget,
    fp: &FlowParams,
    z: &[Complex64],
    jac: &CMatrix,
    scratch: &mut CMatrix,
) -> Result<StageOutput> {
    let n = z.len();
    let derivs = target.derivatives(z, Order::Hessian)?;
    let prefactor = (-2.0 * derivs.action.re / fp.lambda).exp();
    if !prefactor.is_finite() {
        return Err(Error::NonFinite);
    }
    let inv_lambda = 1.0 / fp.lambda;
    let gp = &derivs.grad_action_prime;
    let dz: Vec<Complex64> = gp.iter().map(|g| prefactor * g.conj()).collect();

    let hessian = derivs.hessian_prime.as_ref().expect("hessian requested");
    hessian.mul_into(jac, scratch);
    let (conj_slot, plain_slot) = match fp.cross_term {
        CrossTerm::Consistent => (&derivs.grad_action, &derivs.grad_action),
        CrossTerm::PrimeThroughout => (&derivs.grad_action_prime, &derivs.grad_action_prime),
        CrossTerm::Mixed => (&derivs.grad_action, &derivs.grad_action_prime),
    };
    // row[k] = conj(Σ_j a_j J_jk) + Σ_j b_j J_jk
    let mut row = vec![Complex64::new(0.0, 0.0); n];
    if inv_lambda != 0.0 {
        for k in 0..n {
            let mut conj_part = Complex64::new(0.0, 0.0);
            let mut plain_part = Complex64::new(0.0, 0.0);
            for j in 0..n {
                let jjk = jac[(j, k)];
                conj_part += conj_slot[j] * jjk;
                plain_part += plain_slot[j] * jjk;
            }
            row[k] = conj_part.conj() + plain_part;
        }
    }
    let mut dj = CMatrix::zeros(n);
    for i in 0..n {
        let gi = gp[i].conj() * inv_lambda;
        for k in 0..n {
            dj[(i, k)] = prefactor * (scratch[(i, k)].conj() - gi * row[k]);
        }
    }
    Ok(StageOutput { derivs, dz, dj })
}

/// `out = base + h Σ c_k stage_k`.
fn combine(
    z: &[Complex64],
    jac: &CMatrix,
    h: f64,
    terms: &[(f64, &StageOutput)],
    z_out: &mut [Complex64],
    j_out: &mut CMatrix,
) {
    z_out.copy_from_slice(z);
    j_out.as_mut_slice().copy_from_slice(jac.as_slice());
    for &(c, stage) in terms {
        if c == 0.0 {
            continue;
        }
        let w = h * c;
        for (o, d) in z_out.iter_mut().zip(&stage.dz) {
            *o += w * d;
        }
        for (o, d) in j_out.as_mut_slice().iter_mut().zip(stage.dj.as_slice()) {
            *o += w * d;
        }
    }
}

fn state_is_finite(z: &[Complex64], jac: &CMatrix) -> bool {
    z.iter().all(|v| v.re.is_finite() && v.im.is_finite()) && jac.is_finite()
}

/// Bookkeeping of `Re S'` along accepted steps.
struct Track {
    start: Option<Complex64>,
    last_re: f64,
    min_step_re_gain: f64,
    steps: usize,
}

impl Track {
    fn new() -> Self {
        Self { start: None, last_re: f64::NAN, min_step_re_gain: f64::INFINITY, steps: 0 }
    }

    fn visit(&mut self, here: Complex64) {
        if self.start.is_none() {
            self.start = Some(here);
        } else {
            self.min_step_re_gain = self.min_step_re_gain.min(here.re - self.last_re);
        }
        self.last_re = here.re;
    }
}

fn rk4(
    target: &impl FlowTarget,
    fp: &FlowParams,
    substeps: usize,
    z: &mut Vec<Complex64>,
    jac: &mut CMatrix,
    track: &mut Track,
) -> Result<()> {
    let n = z.len();
    let h = fp.flow_time / substeps as f64;
    let mut scratch = CMatrix::zeros(n);
    let mut z_stage = vec![Complex64::new(0.0, 0.0); n];
    let mut j_stage = CMatrix::zeros(n);
    let mut z_next = z_stage.clone();
    let mut j_next = j_stage.clone();
    for _ in 0..substeps {
        let k1 = vector_field(target, fp, z, jac, &mut scratch)?;
        track.visit(k1.derivs.action_prime);
        combine(z, jac, 0.5 * h, &[(1.0, &k1)], &mut z_stage, &mut j_stage);
        let k2 = vector_field(target, fp, &z_stage, &j_stage, &mut scratch)?;
        combine(z, jac, 0.5 * h, &[(1.0, &k2)], &mut z_stage, &mut j_stage);
        let k3 = vector_field(target, fp, &z_stage, &j_stage, &mut scratch)?;
        combine(z, jac, h, &[(1.0, &k3)], &mut z_stage, &mut j_stage);
        let k4 = vector_field(target, fp, &z_stage, &j_stage, &mut scratch)?;
        combine(
            z,
            jac,
            h / 6.0,
            &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)],
            &mut z_next,
            &mut j_next,
        );
        std::mem::swap(z, &mut z_next);
        std::mem::swap(jac, &mut j_next);
        if !state_is_finite(z, jac) {
            return Err(Error::NonFinite);
        }
        track.steps += 1;
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau. The flow is autonomous, so no stage times.
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

fn dormand_prince(
    target: &impl FlowTarget,
    fp: &FlowParams,
    tolerance: f64,
    max_steps: usize,
    z: &mut Vec<Complex64>,
    jac: &mut CMatrix,
    track: &mut Track,
) -> Result<()> {
    let n = z.len();
    let mut scratch = CMatrix::zeros(n);
    let mut z_stage = vec![Complex64::new(0.0, 0.0); n];
    let mut j_stage = CMatrix::zeros(n);
    let mut z_err = z_stage.clone();
    let mut j_err = j_stage.clone();
    let zero_j = CMatrix::zeros(n);
    let zero_z = z_stage.clone();

    let mut t = 0.0;
    let mut h = fp.flow_time / Integrator::DEFAULT_SUBSTEPS as f64;
    let mut first = vector_field(target, fp, z, jac, &mut scratch)?;
    let mut attempts = 0;
    while t < fp.flow_time {
        attempts += 1;
        if attempts > max_steps {
            return Err(Error::NonFinite);
        }
        let last = fp.flow_time - t <= h * (1.0 + 1e-12);
        if last {
            h = fp.flow_time - t;
        }
        let mut stages: Vec<StageOutput> = Vec::with_capacity(7);
        let mut failed = false;
        for s in 1..7 {
            let terms: Vec<(f64, &StageOutput)> =
                std::iter::once(&first).chain(stages.iter()).zip(DP_A[s]).map(|(k, a)| (a, k)).collect();
            combine(z, jac, h, &terms, &mut z_stage, &mut j_stage);
            match vector_field(target, fp, &z_stage, &j_stage, &mut scratch) {
                Ok(k) => stages.push(k),
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        let error_ratio = if failed {
            f64::INFINITY
        } else {
            let terms: Vec<(f64, &StageOutput)> =
                std::iter::once(&first).chain(stages.iter()).zip(DP_E).map(|(k, e)| (e, k)).collect();
            combine(&zero_z, &zero_j, h, &terms, &mut z_err, &mut j_err);
            // Stage 7 sits at the proposed endpoint.
            z_stage.iter().zip(z.iter()).zip(&z_err).chain(
                j_stage.as_slice().iter().zip(jac.as_slice()).zip(j_err.as_slice()),
            )
            .map(|((new, old), e)| e.norm() / (tolerance * new.norm().max(old.norm()).max(1.0)))
            .fold(0.0, f64::max)
        };
        if error_ratio <= 1.0 {
            track.visit(first.derivs.action_prime);
            std::mem::swap(z, &mut z_stage);
            std::mem::swap(jac, &mut j_stage);
            if !state_is_finite(z, jac) {
                return Err(Error::NonFinite);
            }
            t = if last { fp.flow_time } else { t + h };
            track.steps += 1;
            first = stages.pop().expect("seven stages");
        }
        let factor = if error_ratio.is_finite() { 0.9 * error_ratio.powf(-0.2) } else { 0.25 };
        h *= factor.clamp(0.2, 5.0);
        if h <= 1e-14 * fp.flow_time {
            return Err(Error::NonFinite);
        }
    }
    Ok(())
}

/// Integrates the flow of `target` from `z0`.
pub fn integrate(target: &impl FlowTarget, fp: &FlowParams, z0: &[Complex64]) -> Result<FlowResult> {
    fp.validate()?;
    let n = target.dimension();
    if z0.len() != n {
        return Err(Error::InvalidParameter(format!("start point has {} coordinates, expected {n}", z0.len())));
    }
    let mut z = z0.to_vec();
    let mut jac = CMatrix::identity(n);
    let mut track = Track::new();
    if fp.flow_time > 0.0 {
        match fp.integrator {
            Integrator::Rk4 { substeps } => rk4(target, fp, substeps, &mut z, &mut jac, &mut track)?,
            Integrator::DormandPrince { tolerance, max_steps } => {
                dormand_prince(target, fp, tolerance, max_steps, &mut z, &mut jac, &mut track)?
            }
        }
    }

    let end = target.derivatives(&z, Order::Value)?;
    let start_prime = track.start.unwrap_or(end.action_prime);
    let min_step_re_gain = if track.steps == 0 {
        0.0
    } else {
        track.min_step_re_gain.min(end.action_prime.re - track.last_re)
    };
    let log_det_jacobian = jac.log_det();
    if !log_det_jacobian.re.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(FlowResult {
        s_eff: end.action_prime - log_det_jacobian,
        log_det_jacobian,
        jacobian: jac,
        flowed: z,
        action_prime_start: start_prime,
        action_prime_end: end.action_prime,
        action_end: end.action,
        im_drift: (end.action_prime.im - start_prime.im).abs(),
        re_gain: end.action_prime.re - start_prime.re,
        min_step_re_gain,
        steps: track.steps,
    })
}

/// Flows a complex configuration of the coherent-state action.
pub fn flow(params: &ActionParams, fp: &FlowParams, z0: &ComplexConfiguration) -> Result<FlowResult> {
    integrate(params, fp, z0.as_slice())
}

/// Flows a point of the real integration domain.
pub fn flow_real(params: &ActionParams, fp: &FlowParams, r: &RealConfiguration) -> Result<FlowResult> {
    flow(params, fp, &ComplexConfiguration::from(r))
}

/// The regularized velocity `dz/dτ` at `z`.
pub fn velocity(target: &impl FlowTarget, lambda: f64, z: &[Complex64]) -> Result<Vec<Complex64>> {
    let d = target.derivatives(z, Order::Gradient)?;
    let prefactor = (-2.0 * d.action.re / lambda).exp();
    Ok(d.grad_action_prime.iter().map(|g| prefactor * g.conj()).collect())
}

/// Conservation and monotonicity checks on a finished flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowDiagnostics {
    pub im_drift: f64,
    pub re_gain: f64,
    pub min_step_re_gain: f64,
    /// `1e-8 · max(1, |S'|)`.
    pub tolerance: f64,
    pub monotone: bool,
}

pub fn check_flow_invariants(result: &FlowResult) -> FlowDiagnostics {
    let tolerance = 1e-8 * result.action_prime_start.norm().max(result.action_prime_end.norm()).max(1.0);
    FlowDiagnostics {
        im_drift: result.im_drift,
        re_gain: result.re_gain,
        min_step_re_gain: result.min_step_re_gain,
        tolerance,
        monotone: result.re_gain >= -tolerance && result.min_step_re_gain >= -tolerance,
    }
}
