use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::{AsymptoticTag, PrimaryVerdict};
use crate::mechanics::HypothesisMode;

/// A scenario document: manifold, optional forces, initial conditions, run
/// settings and the checks to perform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Helper functions callable from every expression, e.g. `a(u)`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub functions: BTreeMap<String, FunctionDef>,
    pub manifold: ManifoldConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    pub initial_conditions: Vec<InitialCondition>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionDef {
    pub params: Vec<String>,
    pub body: String,
}

/// Bounds of one coordinate; `null` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ManifoldConfig {
    Euclidean {
        dim: usize,
    },
    Minkowski {
        dim: usize,
    },
    /// `2 dx dy + τ(x) dy²` on the unit torus.
    TorusLorentz {
        tau: String,
    },
    /// `2 du dv` on `u > 0`.
    HalfPlane,
    /// `−2 du dv + H(u, x) du² + Σ dxᵢ²`.
    PpWave {
        dim: usize,
        h: String,
    },
    /// Plane wave with `H = Σ A_ij(u) xⁱ xʲ`.
    PlaneWave {
        profile: Vec<Vec<String>>,
    },
    /// 4D plane wave `H = a(x² − y²) + 2bxy + c(x² + y²)`.
    PlaneWavePolarization {
        a: String,
        b: String,
        c: String,
    },
    /// Explicit symmetric component matrix (upper triangle read).
    Components {
        dim: usize,
        signature: usize,
        components: Vec<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<Vec<BoundConfig>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        periods: Option<Vec<Option<f64>>>,
        /// Name coordinates `u, v, x1, ...` instead of `x1, x2, ...`.
        #[serde(default)]
        null_coordinates: bool,
    },
    /// Finsler structure from `F²` in `x1..xn`, `v1..vn`.
    Finsler {
        dim: usize,
        f_squared: String,
    },
    /// `F² = g(v,v) + ε Σ vᵢ⁴ / g(v,v)` over a Riemannian base (Euclidean by default).
    FinslerPerturbedQuartic {
        dim: usize,
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base_components: Option<Vec<Vec<String>>>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Matrix of the (1,1) tensor field `E`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endomorphism: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    /// `∂V/∂t`; taken by finite differences when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential_dt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(default)]
    pub t0: f64,
}

fn default_horizon() -> f64 {
    100.0
}

fn default_rel_tol() -> f64 {
    1e-10
}

fn default_abs_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon: default_horizon(),
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            output_step: None,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    Vanishing,
    Nonvanishing,
}

fn default_hypothesis_samples() -> usize {
    crate::growth::MIN_FIT_SAMPLES
}

fn tol_energy() -> f64 {
    1e-5
}

fn tol_killing() -> f64 {
    1e-8
}

fn tol_reduction() -> f64 {
    1e-4
}

fn tol_derivative() -> f64 {
    1e-4
}

fn tol_causal() -> f64 {
    1e-8
}

fn tol_finsler() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CheckConfig {
    /// Samples the growth hypotheses over a ball and `[0, b]`.
    Hypotheses {
        b: f64,
        radius: f64,
        /// Defaults to the first initial position.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        #[serde(default = "default_hypothesis_samples")]
        samples: usize,
        #[serde(default)]
        mode: HypothesisMode,
        #[serde(default)]
        seed: u64,
    },
    /// Arc length against the a-priori bound (or the energy ledger against
    /// its exponential bound in the lower-bounded-potential mode).
    BoundChain,
    EnergyLedger {
        #[serde(default = "tol_energy")]
        tolerance: f64,
    },
    /// Drift of `g(γ', K)` for a declared Killing field `K`.
    Killing {
        field: Vec<String>,
        #[serde(default = "tol_killing")]
        tolerance: f64,
    },
    /// Geodesic versus reduced transverse trajectory on a pp-wave.
    Reduction {
        #[serde(default = "tol_reduction")]
        tolerance: f64,
    },
    /// `R(U, W) = 0` for `U, W` orthogonal to a vector field.
    CurvatureCondition {
        field: Vec<String>,
        /// Defaults to the initial positions.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<Vec<f64>>>,
    },
    /// Max component of `∇^order R` at the given points.
    CurvatureDerivative {
        order: usize,
        points: Vec<Vec<f64>>,
        expect: Expectation,
        #[serde(default = "tol_derivative")]
        tolerance: f64,
    },
    /// Ricci components along the trajectory.
    Vacuum,
    CausalCharacter {
        #[serde(default = "tol_causal")]
        tolerance: f64,
    },
    /// Conservation of `F(γ')` on an autonomous Finsler trajectory.
    FinslerSpeed {
        #[serde(default = "tol_finsler")]
        tolerance: f64,
    },
    /// Classification of a bounding function `α(x)`.
    Growth {
        alpha: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<AsymptoticTag>,
        x_max: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect: Option<PrimaryVerdict>,
    },
}

impl CheckConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CheckConfig::Hypotheses { .. } => "hypotheses",
            CheckConfig::BoundChain => "bound-chain",
            CheckConfig::EnergyLedger { .. } => "energy-ledger",
            CheckConfig::Killing { .. } => "killing",
            CheckConfig::Reduction { .. } => "reduction",
            CheckConfig::CurvatureCondition { .. } => "curvature-condition",
            CheckConfig::CurvatureDerivative { .. } => "curvature-derivative",
            CheckConfig::Vacuum => "vacuum",
            CheckConfig::CausalCharacter { .. } => "causal-character",
            CheckConfig::FinslerSpeed { .. } => "finsler-speed",
            CheckConfig::Growth { .. } => "growth",
        }
    }

    /// Whether the check runs once per initial condition.
    pub fn per_trajectory(&self) -> bool {
        matches!(
            self,
            CheckConfig::BoundChain
                | CheckConfig::EnergyLedger { .. }
                | CheckConfig::Killing { .. }
                | CheckConfig::Reduction { .. }
                | CheckConfig::Vacuum
                | CheckConfig::CausalCharacter { .. }
                | CheckConfig::FinslerSpeed { .. }
        )
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::config("/", format!("invalid JSON: {e}")))?;
        let cfg = ScenarioConfig::deserialize(&value).map_err(|e| Error::config(locate(&value), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("/", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    /// Checks structural invariants that do not need any expression to be bound.
    pub fn validate(&self) -> Result<()> {
        if self.initial_conditions.is_empty() {
            return Err(Error::config("/initial_conditions", "at least one initial condition is required"));
        }
        let r = &self.run;
        for (name, tol) in [("rel_tol", r.rel_tol), ("abs_tol", r.abs_tol)] {
            if !(1e-14..=1e-2).contains(&tol) {
                return Err(Error::config(format!("/run/{name}"), format!("{tol:e} outside [1e-14, 1e-2]")));
            }
        }
        if !(r.horizon.is_finite() && r.horizon > 0.0) {
            return Err(Error::config("/run/horizon", "must be positive and finite"));
        }
        if let Some(h) = r.output_step {
            if !(h > 0.0) {
                return Err(Error::config("/run/output_step", "must be positive"));
            }
        }
        let bound_chain = self.checks.iter().any(|c| matches!(c, CheckConfig::BoundChain));
        let hypotheses = self.checks.iter().any(|c| matches!(c, CheckConfig::Hypotheses { .. }));
        if bound_chain && !hypotheses {
            return Err(Error::config("/checks", "bound-chain requires a hypotheses check"));
        }
        if self.checks.iter().filter(|c| matches!(c, CheckConfig::Hypotheses { .. })).count() > 1 {
            return Err(Error::config("/checks", "at most one hypotheses check"));
        }
        Ok(())
    }
}

fn fails<T: for<'de> Deserialize<'de>>(v: &serde_json::Value) -> bool {
    T::deserialize(v).is_err()
}

fn locate_in<T: for<'de> Deserialize<'de>>(key: &str, v: &serde_json::Value) -> Option<String> {
    if let Some(items) = v.as_array() {
        if let Some(i) = items.iter().position(fails::<T>) {
            return Some(format!("/{key}/{i}"));
        }
        return None;
    }
    fails::<T>(v).then(|| format!("/{key}"))
}

/// JSON pointer to the first top-level entry (or array element) that does not deserialize.
fn locate(value: &serde_json::Value) -> String {
    let Some(obj) = value.as_object() else {
        return "/".into();
    };
    for (key, v) in obj {
        let found = match key.as_str() {
            "manifold" => locate_in::<ManifoldConfig>(key, v),
            "problem" => locate_in::<ProblemConfig>(key, v),
            "initial_conditions" => locate_in::<InitialCondition>(key, v),
            "run" => locate_in::<RunConfig>(key, v),
            "checks" => locate_in::<CheckConfig>(key, v),
            "functions" => locate_in::<BTreeMap<String, FunctionDef>>(key, v),
            "name" | "description" => locate_in::<String>(key, v),
            _ => Some(format!("/{key}")),
        };
        if let Some(p) = found {
            return p;
        }
    }
    "/".into()
}
