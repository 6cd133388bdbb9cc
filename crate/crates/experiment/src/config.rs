//! Experiment configuration, power-law parameter rules and presets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context};
use serde::{Deserialize, Serialize};
use spin_thimble::action::ActionParams;
use spin_thimble::flow::{CrossTerm, FlowParams, Integrator};
use spin_thimble::sampler::{InitialState, SamplerParams, INITIAL_SCALE};
use spin_thimble::spin::{parse_hamiltonian, HamiltonianSpec, SpinValue};

/// `base · β^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub base: f64,
    #[serde(default)]
    pub exponent: f64,
}

impl PowerLaw {
    pub fn new(base: f64, exponent: f64) -> Self {
        Self { base, exponent }
    }

    pub fn constant(base: f64) -> Self {
        Self::new(base, 0.0)
    }

    pub fn at(&self, beta: f64) -> f64 {
        self.base * beta.powf(self.exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Thimble,
    SpinQmc,
    PiQmc,
    Exact,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Thimble, Method::SpinQmc, Method::PiQmc, Method::Exact];

    pub fn name(self) -> &'static str {
        match self {
            Method::Thimble => "thimble",
            Method::SpinQmc => "spin-qmc",
            Method::PiQmc => "pi-qmc",
            Method::Exact => "exact",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self != Method::Exact
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .with_context(|| format!("unknown method `{s}` (expected thimble, spin-qmc, pi-qmc or exact)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorKind {
    Rk4,
    #[default]
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    #[default]
    Gaussian,
    Sphere,
    Descent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossTermKind {
    #[default]
    Consistent,
    PrimeThroughout,
    Mixed,
}

impl From<CrossTermKind> for CrossTerm {
    fn from(k: CrossTermKind) -> Self {
        match k {
            CrossTermKind::Consistent => CrossTerm::Consistent,
            CrossTermKind::PrimeThroughout => CrossTerm::PrimeThroughout,
            CrossTermKind::Mixed => CrossTerm::Mixed,
        }
    }
}

fn default_initial_scale() -> f64 {
    INITIAL_SCALE
}

fn initial_state(kind: InitialKind, scale: f64) -> InitialState {
    match kind {
        InitialKind::Gaussian => InitialState::Gaussian(scale),
        InitialKind::Sphere => InitialState::SphereUniform,
        InitialKind::Descent => InitialState::Descent,
    }
}

fn default_substeps() -> usize {
    Integrator::DEFAULT_SUBSTEPS
}

fn default_tolerance() -> f64 {
    Integrator::DEFAULT_TOLERANCE
}

fn default_max_steps() -> usize {
    Integrator::DEFAULT_MAX_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThimbleConfig {
    pub step: PowerLaw,
    pub lambda: PowerLaw,
    pub flow_time: PowerLaw,
    #[serde(default)]
    pub integrator: IntegratorKind,
    /// Fixed RK4 steps per flow; ignored by the adaptive integrator.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Per-step error tolerance of the adaptive integrator.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub cross_term: CrossTermKind,
    #[serde(default)]
    pub initial: InitialKind,
    /// Standard deviation of the Gaussian start.
    #[serde(default = "default_initial_scale")]
    pub initial_scale: f64,
}

impl ThimbleConfig {
    pub fn initial_state(&self) -> InitialState {
        initial_state(self.initial, self.initial_scale)
    }

    pub fn integrator(&self) -> Integrator {
        match self.integrator {
            IntegratorKind::Rk4 => Integrator::Rk4 { substeps: self.substeps },
            IntegratorKind::Adaptive => Integrator::DormandPrince { tolerance: self.tolerance, max_steps: self.max_steps },
        }
    }

    pub fn flow_params(&self, beta: f64) -> spin_thimble::Result<FlowParams> {
        let flow = FlowParams::new(self.flow_time.at(beta), self.lambda.at(beta))?
            .with_integrator(self.integrator())
            .with_cross_term(self.cross_term.into());
        flow.validate()?;
        Ok(flow)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinQmcConfig {
    pub step: PowerLaw,
    #[serde(default)]
    pub initial: InitialKind,
    #[serde(default = "default_initial_scale")]
    pub initial_scale: f64,
}

impl SpinQmcConfig {
    pub fn new(step: PowerLaw) -> Self {
        Self { step, initial: InitialKind::Gaussian, initial_scale: INITIAL_SCALE }
    }

    pub fn initial_state(&self) -> InitialState {
        initial_state(self.initial, self.initial_scale)
    }
}

fn default_dimension_cap() -> usize {
    spin_thimble::exact::DEFAULT_DIMENSION_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub hamiltonian: String,
    pub num_sites: usize,
    pub twice_s: u32,
    pub num_slices: usize,
    pub betas: Vec<f64>,
    pub methods: Vec<Method>,
    pub n_therm: usize,
    pub n_samples: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub output: PathBuf,
    #[serde(default = "default_dimension_cap")]
    pub dimension_cap: usize,
    pub thimble: Option<ThimbleConfig>,
    pub spin_qmc: Option<SpinQmcConfig>,
}

pub const PRESETS: [&str; 2] = ["single-spin40", "frustrated-triplet"];

const TRIPLET: &str = "Sz1*Sz2 + Sz2*Sz3 + Sz3*Sz1 + Sx1*Sx2 + Sx2*Sx3 + Sx3*Sx1";

fn beta_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

pub fn preset(name: &str) -> anyhow::Result<ExperimentConfig> {
    let config = match name {
        "single-spin40" => ExperimentConfig {
            name: name.into(),
            hamiltonian: "Sy1".into(),
            num_sites: 1,
            twice_s: 80,
            num_slices: 3,
            betas: beta_grid(),
            methods: vec![Method::Thimble, Method::SpinQmc, Method::Exact],
            n_therm: 1000,
            n_samples: 1000,
            repetitions: 5,
            seed: 20240401,
            output: PathBuf::from("results/single-spin40.csv"),
            dimension_cap: default_dimension_cap(),
            thimble: Some(ThimbleConfig {
                step: PowerLaw::new(0.03, -0.5),
                lambda: PowerLaw::constant(80.0),
                flow_time: PowerLaw::constant(0.01),
                integrator: IntegratorKind::Adaptive,
                substeps: default_substeps(),
                tolerance: default_tolerance(),
                max_steps: default_max_steps(),
                cross_term: CrossTermKind::Consistent,
                initial: InitialKind::Gaussian,
                initial_scale: INITIAL_SCALE,
            }),
            spin_qmc: Some(SpinQmcConfig::new(PowerLaw::new(0.3, -0.5))),
        },
        "frustrated-triplet" => ExperimentConfig {
            name: name.into(),
            hamiltonian: TRIPLET.into(),
            num_sites: 3,
            twice_s: 20,
            num_slices: 3,
            betas: beta_grid(),
            methods: vec![Method::Thimble, Method::SpinQmc, Method::PiQmc, Method::Exact],
            n_therm: 1000,
            n_samples: 1000,
            repetitions: 5,
            seed: 20240402,
            output: PathBuf::from("results/frustrated-triplet.csv"),
            dimension_cap: default_dimension_cap(),
            thimble: Some(ThimbleConfig {
                step: PowerLaw::new(0.004, -0.35),
                lambda: PowerLaw::new(300.0, 1.0),
                flow_time: PowerLaw::new(0.05, -0.75),
                integrator: IntegratorKind::Adaptive,
                substeps: default_substeps(),
                tolerance: default_tolerance(),
                max_steps: default_max_steps(),
                cross_term: CrossTermKind::Consistent,
                initial: InitialKind::Gaussian,
                initial_scale: INITIAL_SCALE,
            }),
            spin_qmc: Some(SpinQmcConfig::new(PowerLaw::new(0.08, -0.25))),
        },
        other => bail!("unknown preset `{other}`; available presets: {}", PRESETS.join(", ")),
    };
    Ok(config)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn spin(&self) -> anyhow::Result<SpinValue> {
        Ok(SpinValue::from_twice(self.twice_s)?)
    }

    pub fn spec(&self) -> anyhow::Result<HamiltonianSpec> {
        Ok(parse_hamiltonian(&self.hamiltonian, self.num_sites, self.spin()?)?)
    }

    pub fn has(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.spec()?;
        ensure!(self.num_slices >= 1, "num_slices must be at least 1");
        ensure!(!self.betas.is_empty(), "betas must be non-empty");
        ensure!(
            self.betas.iter().all(|b| b.is_finite() && *b > 0.0),
            "every beta must be positive and finite"
        );
        ensure!(!self.methods.is_empty(), "methods must be non-empty");
        ensure!(self.repetitions >= 1, "repetitions must be at least 1");
        ensure!(self.n_samples >= 1, "n_samples must be at least 1");

        let positive = |label: &str, rule: &PowerLaw| -> anyhow::Result<()> {
            for &beta in &self.betas {
                let v = rule.at(beta);
                ensure!(v.is_finite() && v > 0.0, "{label} evaluates to {v} at beta = {beta}");
            }
            Ok(())
        };
        if self.has(Method::Thimble) {
            let t = self.thimble.as_ref().context("method thimble needs a [thimble] section")?;
            positive("thimble.step", &t.step)?;
            positive("thimble.lambda", &t.lambda)?;
            positive("thimble.flow_time", &t.flow_time)?;
            for &beta in &self.betas {
                t.flow_params(beta)?;
            }
            ensure!(t.initial_scale > 0.0, "thimble.initial_scale must be positive");
        }
        if self.has(Method::SpinQmc) {
            let s = self.spin_qmc.as_ref().context("method spin-qmc needs a [spin_qmc] section")?;
            positive("spin_qmc.step", &s.step)?;
            ensure!(s.initial_scale > 0.0, "spin_qmc.initial_scale must be positive");
        }
        Ok(())
    }

    /// Sampler settings for one thimble cell.
    pub fn thimble_params(&self, beta: f64, seed: u64) -> anyhow::Result<SamplerParams> {
        let t = self.thimble.as_ref().context("no [thimble] section")?;
        let params = SamplerParams {
            n_therm: self.n_therm,
            n_samples: self.n_samples,
            step_size: t.step.at(beta),
            seed,
            flow: t.flow_params(beta)?,
            action: ActionParams::new(self.spec()?, beta, self.num_slices)?,
            initial: t.initial_state(),
        };
        params.validate()?;
        Ok(params)
    }

    /// Sampler settings for one spin-qmc cell.
    pub fn spin_qmc_params(&self, beta: f64, seed: u64) -> anyhow::Result<SamplerParams> {
        let s = self.spin_qmc.as_ref().context("no [spin_qmc] section")?;
        let params = SamplerParams {
            n_therm: self.n_therm,
            n_samples: self.n_samples,
            step_size: s.step.at(beta),
            seed,
            flow: FlowParams::identity(),
            action: ActionParams::new(self.spec()?, beta, self.num_slices)?,
            initial: s.initial_state(),
        };
        params.validate()?;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_spin_preset() {
        let c = preset("single-spin40").unwrap();
        c.validate().unwrap();
        assert_eq!(c.spin().unwrap().s(), 40.0);
        assert_eq!(c.num_slices, 3);
        assert_eq!(c.betas.len(), 10);
        assert!((c.betas[0] - 0.1).abs() < 1e-15 && (c.betas[9] - 1.0).abs() < 1e-15);
        assert_eq!((c.repetitions, c.n_therm, c.n_samples), (5, 1000, 1000));
        assert!(!c.has(Method::PiQmc));
        let t = c.thimble.as_ref().unwrap();
        assert_eq!(t.lambda.at(0.3), 80.0);
        assert_eq!(t.flow_time.at(0.7), 0.01);
        assert!((t.step.at(0.25) - 0.06).abs() < 1e-15);
        assert!((c.spin_qmc.as_ref().unwrap().step.at(0.25) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn triplet_preset() {
        let c = preset("frustrated-triplet").unwrap();
        c.validate().unwrap();
        assert_eq!(c.spec().unwrap().terms().len(), 6);
        assert_eq!(c.spin().unwrap().s(), 10.0);
        assert!(c.has(Method::PiQmc));
        let t = c.thimble.as_ref().unwrap();
        assert!((t.lambda.at(0.5) - 150.0).abs() < 1e-12);
        assert!((t.flow_time.at(0.5) - 0.05 * 0.5f64.powf(-0.75)).abs() < 1e-15);
        assert!((t.step.at(1.0) - 0.004).abs() < 1e-15);
        assert!((c.spin_qmc.as_ref().unwrap().step.at(1.0) - 0.08).abs() < 1e-15);
    }

    #[test]
    fn unknown_preset_lists_names() {
        let msg = preset("nope").unwrap_err().to_string();
        for name in PRESETS {
            assert!(msg.contains(name), "{msg}");
        }
    }

    #[test]
    fn toml_round_trip() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        }
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let text = r#"
            name = "tiny"
            hamiltonian = "Sz1"
            num_sites = 1
            twice_s = 1
            num_slices = 2
            betas = [0.5]
            methods = ["spin-qmc", "exact"]
            n_therm = 10
            n_samples = 20
            repetitions = 1
            seed = 3
            output = "out.csv"

            [spin_qmc]
            step = { base = 0.5 }
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        let s = c.spin_qmc.as_ref().unwrap();
        assert_eq!(s.step.exponent, 0.0);
        assert_eq!(s.initial_state(), InitialState::Gaussian(INITIAL_SCALE));
        assert_eq!(c.dimension_cap, spin_thimble::exact::DEFAULT_DIMENSION_CAP);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = preset("single-spin40").unwrap();
        c.thimble.as_mut().unwrap().step = PowerLaw::new(-0.1, 0.0);
        assert!(c.validate().unwrap_err().to_string().contains("thimble.step"));

        let mut c = preset("single-spin40").unwrap();
        c.thimble = None;
        assert!(c.validate().is_err());

        let mut c = preset("single-spin40").unwrap();
        c.betas.push(0.0);
        assert!(c.validate().is_err());

        let mut c = preset("single-spin40").unwrap();
        c.hamiltonian = "Sq1".into();
        assert!(c.validate().is_err());

        let text = preset("single-spin40").unwrap().to_toml() + "\nbogus = 1\n";
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn integrator_selection() {
        let mut t = preset("single-spin40").unwrap().thimble.unwrap();
        assert_eq!(t.integrator(), Integrator::adaptive());
        t.integrator = IntegratorKind::Rk4;
        t.substeps = 7;
        assert_eq!(t.integrator(), Integrator::Rk4 { substeps: 7 });
        t.initial = InitialKind::Descent;
        assert_eq!(t.initial_state(), InitialState::Descent);
    }
}
