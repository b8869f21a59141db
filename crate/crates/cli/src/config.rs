//! JSON config files, one shape per command. Every field has a default so a
//! missing `--config` means "the standard run".

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use waylab::cnot::{GateImplementation, PsiChoice};
use waylab::conservation::ConservationLaw;
use waylab::measurement::IndirectMeasurementModel;
use waylab::scenarios::Coupling;
use waylab::{Operator, StateVector};

use crate::CliError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })
}

/// Either explicit cases or `count` seeded random ones.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CasesConfig {
    #[serde(default)]
    pub cases: Vec<CaseInput>,
    #[serde(default = "default_count")]
    pub count: usize,
}

fn default_count() -> usize {
    100
}

impl Default for CasesConfig {
    fn default() -> Self {
        Self {
            cases: Vec::new(),
            count: default_count(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseInput {
    pub model: IndirectMeasurementModel,
    pub law: ConservationLaw,
    /// Input states; all certification states of the object when empty.
    #[serde(default)]
    pub psi: Vec<StateVector>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub implementation: GateImplementation,
    #[serde(default)]
    pub law: Option<ConservationLaw>,
    #[serde(default = "both_psi")]
    pub psi: Vec<PsiChoice>,
}

fn both_psi() -> Vec<PsiChoice> {
    vec![PsiChoice::PlusI, PsiChoice::Plus]
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            implementation: GateImplementation::perfect(&[], None).expect("valid"),
            law: None,
            psi: both_psi(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    #[default]
    Spin,
    Boson,
    ZControl,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeOptions {
    pub restarts: Option<usize>,
    pub max_iter: Option<usize>,
    pub refine_iter: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub kind: ScenarioKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_nbar")]
    pub nbar: f64,
    #[serde(default = "default_tail")]
    pub tail_tol: f64,
    #[serde(default)]
    pub opt: OptimizeOptions,
}

fn default_n() -> usize {
    2
}

fn default_nbar() -> f64 {
    1.0
}

fn default_tail() -> f64 {
    1e-10
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::default(),
            n: default_n(),
            nbar: default_nbar(),
            tail_tol: default_tail(),
            opt: OptimizeOptions::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BosonConfig {
    #[serde(default = "default_nbars")]
    pub nbar: Vec<f64>,
    #[serde(default = "default_tail")]
    pub tail_tol: f64,
    /// Random conserving implementations per `nbar`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Range of the interaction strength of the random draws.
    #[serde(default = "default_strength")]
    pub strength: (f64, f64),
    /// Explicit coupling Hamiltonians evaluated in addition.
    #[serde(default)]
    pub couplings: Vec<Coupling>,
}

fn default_nbars() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}

fn default_samples() -> usize {
    6
}

fn default_strength() -> (f64, f64) {
    (0.1, 2.0)
}

impl Default for BosonConfig {
    fn default() -> Self {
        Self {
            nbar: default_nbars(),
            tail_tol: default_tail(),
            samples: default_samples(),
            strength: default_strength(),
            couplings: Vec::new(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    /// Defaults to `X1 + X2` on two qubits.
    pub law: Option<ConservationLaw>,
    /// Defaults to `X`.
    pub observable: Option<Operator>,
}

impl ScenarioConfig {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ScenarioKind::Spin => "spin",
            ScenarioKind::Boson => "boson",
            ScenarioKind::ZControl => "z-control",
        }
    }
}
