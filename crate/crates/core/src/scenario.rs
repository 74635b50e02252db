//! JSON scenario files: parsing, validation and batch execution.
//!
//! A scenario names one model family, its parameters and the artifacts to
//! write. Outputs land in `<out>/<name>_<artifact>.<ext>`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::continuous::{
    simulate_dae_balanced, simulate_delay, simulate_ode, simulate_zero_imbalance, HistoryBuffer,
    SimError, StepperConfig,
};
use crate::discrete::{simulate_discrete, simulate_discrete_memory};
use crate::dispatch::{clear_market, min_cost_dispatch, DispatchError, DispatchProblem, DispatchResult};
use crate::equilibrium::{
    equilibrium_sloped, equilibrium_solve, equilibrium_with_memory, EquilibriumResult,
    EquilibriumStatus,
};
use crate::fractional::simulate_fractional;
use crate::model::{
    assemble_linear_system, FractionalSpec, FrequencySignal, MarketParams, MarketState,
    MemorySpec, ModelError, SystemVariant, Trajectory,
};
use crate::pencil::{generalized_eigenvalues, PencilError, SpectrumReport};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("scenario `{scenario}`: {message}")]
    Semantic { scenario: String, message: String },
    #[error("scenario `{scenario}`: {source}")]
    Sim {
        scenario: String,
        #[source]
        source: SimError,
    },
    #[error("scenario `{scenario}`: {source}")]
    Pencil {
        scenario: String,
        #[source]
        source: PencilError,
    },
    #[error("scenario `{scenario}`: {source}")]
    Dispatch {
        scenario: String,
        #[source]
        source: DispatchError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Continuous,
    ZeroImbalance,
    BalancedDae,
    Discrete,
    DiscreteMemory,
    Delay,
    Fractional,
    Dispatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    Trajectory,
    Spectrum,
    Equilibrium,
    Dispatch,
}

impl fmt::Display for Artifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Artifact::Trajectory => "trajectory",
            Artifact::Spectrum => "spectrum",
            Artifact::Equilibrium => "equilibrium",
            Artifact::Dispatch => "dispatch",
        })
    }
}

/// Starting point: an explicit state or the string `"equilibrium"`.
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Equilibrium,
    State(MarketState),
}

impl Serialize for Initial {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            Initial::Equilibrium => ser.serialize_str("equilibrium"),
            Initial::State(s) => s.serialize(ser),
        }
    }
}

impl<'de> Deserialize<'de> for Initial {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(de)?;
        match v {
            serde_json::Value::String(s) if s == "equilibrium" => Ok(Initial::Equilibrium),
            serde_json::Value::String(s) => Err(de::Error::custom(format!(
                "initial must be \"equilibrium\" or a state object, got \"{s}\""
            ))),
            other => serde_json::from_value(other)
                .map(Initial::State)
                .map_err(de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub model: ModelKind,
    pub params: MarketParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemorySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fractional: Option<FractionalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispatch: Option<DispatchProblem>,
    pub initial: Initial,
    pub stepper: StepperConfig,
    pub outputs: Vec<Artifact>,
    /// Pre-history samples for the delay model, newest first. A constant
    /// history equal to the initial state is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<MarketState>>,
    /// Pencil variant for the spectrum artifact; chosen from the model when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<SystemVariant>,
}

impl Scenario {
    fn semantic(&self, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Semantic {
            scenario: self.name.clone(),
            message: message.into(),
        }
    }

    fn model_err(&self, e: ModelError) -> ScenarioError {
        self.semantic(e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Checks the cross-field rules that serde cannot express.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(self.semantic("name must be non-empty ASCII [A-Za-z0-9_-]"));
        }
        self.params.clone().validate().map_err(|e| self.model_err(e))?;
        self.stepper
            .validate()
            .map_err(|e| self.semantic(e.to_string()))?;
        match self.model {
            ModelKind::DiscreteMemory | ModelKind::Delay => {
                let mem = self
                    .memory
                    .as_ref()
                    .ok_or_else(|| self.semantic("model requires a `memory` section"))?;
                mem.resolve(&self.params).map_err(|e| self.model_err(e))?;
            }
            ModelKind::Fractional => {
                let spec = self
                    .fractional
                    .as_ref()
                    .ok_or_else(|| self.semantic("model requires a `fractional` section"))?;
                spec.validate(&self.params).map_err(|e| self.model_err(e))?;
                if self.initial == Initial::Equilibrium {
                    return Err(self.semantic(
                        "initial = \"equilibrium\" is not available for the fractional model",
                    ));
                }
            }
            ModelKind::Dispatch => {
                let problem = self
                    .dispatch
                    .as_ref()
                    .ok_or_else(|| self.semantic("model requires a `dispatch` section"))?;
                problem
                    .validate()
                    .map_err(|e| self.semantic(e.to_string()))?;
            }
            _ => {}
        }
        if self.outputs.contains(&Artifact::Dispatch) && self.model != ModelKind::Dispatch {
            return Err(self.semantic("the dispatch artifact needs model = \"dispatch\""));
        }
        if let Some(hist) = &self.history {
            for s in hist {
                s.check_dims(&self.params).map_err(|e| self.model_err(e))?;
            }
        }
        match &self.initial {
            Initial::State(s) => s.check_dims(&self.params).map_err(|e| self.model_err(e))?,
            Initial::Equilibrium if self.model != ModelKind::Dispatch => {
                self.resolve_initial()?;
            }
            Initial::Equilibrium => {}
        }
        Ok(())
    }

    /// Equilibrium matching the scenario's model family.
    pub fn equilibrium(&self) -> Result<EquilibriumResult, ScenarioError> {
        let p = &self.params;
        if !p.is_sloped() {
            let variant = if self.model == ModelKind::BalancedDae {
                SystemVariant::BalancedDae
            } else {
                SystemVariant::FullSloped
            };
            return Ok(equilibrium_solve(&assemble_linear_system(p, variant)));
        }
        let res = match (&self.model, &self.memory) {
            (ModelKind::DiscreteMemory | ModelKind::Delay, Some(mem)) => {
                let w = mem.resolve(p).map_err(|e| self.model_err(e))?;
                equilibrium_with_memory(p, &w)
            }
            _ => equilibrium_sloped(p),
        };
        res.map_err(|e| self.semantic(e.to_string()))
    }

    /// The initial state, computing the equilibrium when requested.
    pub fn resolve_initial(&self) -> Result<MarketState, ScenarioError> {
        match &self.initial {
            Initial::State(s) => Ok(s.clone()),
            Initial::Equilibrium => {
                let eq = self.equilibrium()?;
                if eq.status != EquilibriumStatus::Unique {
                    return Err(self.semantic(format!(
                        "initial = \"equilibrium\" needs a unique equilibrium, status is {:?}",
                        eq.status
                    )));
                }
                let mut s = eq.state(self.params.m, self.params.n);
                if self.model == ModelKind::BalancedDae {
                    s.e = 0.0;
                }
                Ok(s)
            }
        }
    }

    /// Pencil variant used for the spectrum artifact.
    pub fn spectrum_variant(&self) -> SystemVariant {
        self.variant.unwrap_or(match self.model {
            ModelKind::BalancedDae => SystemVariant::BalancedDae,
            _ if self.params.is_sloped() => SystemVariant::FullSloped,
            _ => SystemVariant::FullConstant,
        })
    }
}

/// Parses scenario JSON text. `base` resolves relative `{"csv": path}`
/// frequency signals.
pub fn parse_scenario_str(text: &str, base: &Path) -> Result<Scenario, ScenarioError> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    // Deserializing from text keeps line/column in error messages; only a
    // rewritten document goes through the value tree.
    let sc: Scenario = if inline_csv_signal(&mut value, base)? {
        serde_json::from_value(value)
    } else {
        serde_json::from_str(text)
    }
    .map_err(|e| ScenarioError::Parse(e.to_string()))?;
    sc.validate()?;
    Ok(sc)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario_str(&text, base).map_err(|e| match e {
        ScenarioError::Parse(msg) => ScenarioError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Replaces `{"csv": path}` under `fractional.omega_coi` with the samples.
fn inline_csv_signal(value: &mut serde_json::Value, base: &Path) -> Result<bool, ScenarioError> {
    let Some(sig) = value.pointer_mut("/fractional/omega_coi") else {
        return Ok(false);
    };
    let Some(rel) = sig.get("csv").and_then(|v| v.as_str()) else {
        return Ok(false);
    };
    let path = base.join(rel);
    let text = fs::read_to_string(&path).map_err(|e| ScenarioError::Io {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let parsed = FrequencySignal::from_csv(&text)
        .map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?;
    *sig = serde_json::to_value(parsed).expect("signal serializes");
    Ok(true)
}

/// Everything a scenario run produced, before it is written out.
#[derive(Debug, Clone)]
pub enum RunOutput {
    Trajectory(Trajectory),
    Constraint(crate::continuous::ConstraintLog),
    Spectrum(SpectrumReport),
    Equilibrium(EquilibriumResult),
    Dispatch(DispatchResult),
}

pub fn simulate(sc: &Scenario) -> Result<Vec<RunOutput>, ScenarioError> {
    let sim = |e: SimError| ScenarioError::Sim {
        scenario: sc.name.clone(),
        source: e,
    };
    let p = &sc.params;
    let x0 = sc.resolve_initial()?;
    let cfg = &sc.stepper;
    let traj = match sc.model {
        ModelKind::Continuous => simulate_ode(p, &x0, cfg).map_err(sim)?,
        ModelKind::ZeroImbalance => {
            let (traj, log) = simulate_zero_imbalance(p, &x0, cfg).map_err(sim)?;
            return Ok(vec![RunOutput::Trajectory(traj), RunOutput::Constraint(log)]);
        }
        ModelKind::BalancedDae => simulate_dae_balanced(p, &x0, cfg).map_err(sim)?,
        ModelKind::Discrete => simulate_discrete(p, &x0, cfg.dt, cfg.n_steps()).map_err(sim)?,
        ModelKind::DiscreteMemory => {
            let mem = sc.memory.as_ref().expect("validated");
            let n_steps = (cfg.t_end / mem.lag_step).round().max(1.0) as usize;
            simulate_discrete_memory(p, mem, &x0, n_steps).map_err(sim)?
        }
        ModelKind::Delay => {
            let mem = sc.memory.as_ref().expect("validated");
            let history = match &sc.history {
                Some(samples) => {
                    let mut all = vec![x0.clone()];
                    all.extend(samples.iter().cloned());
                    HistoryBuffer {
                        lag_step: mem.lag_step,
                        samples: all,
                    }
                }
                None => HistoryBuffer::constant(&x0, mem.lag_step, mem.p),
            };
            simulate_delay(p, mem, &history, cfg).map_err(sim)?
        }
        ModelKind::Fractional => {
            let spec = sc.fractional.as_ref().expect("validated");
            simulate_fractional(p, spec, &x0, cfg).map_err(sim)?
        }
        ModelKind::Dispatch => {
            return Err(sc.semantic("dispatch scenarios have no trajectory"));
        }
    };
    Ok(vec![RunOutput::Trajectory(traj)])
}

pub fn stability(sc: &Scenario, variant: SystemVariant) -> Result<SpectrumReport, ScenarioError> {
    let sys = assemble_linear_system(&sc.params, variant);
    generalized_eigenvalues(&sys.e_mat, &sys.a_mat).map_err(|e| ScenarioError::Pencil {
        scenario: sc.name.clone(),
        source: e,
    })
}

pub fn dispatch(sc: &Scenario) -> Result<DispatchResult, ScenarioError> {
    let problem = sc
        .dispatch
        .as_ref()
        .ok_or_else(|| sc.semantic("no `dispatch` section"))?;
    let res = match problem.total_demand {
        Some(q) => min_cost_dispatch(problem, q),
        None => clear_market(problem),
    };
    res.map_err(|e| ScenarioError::Dispatch {
        scenario: sc.name.clone(),
        source: e,
    })
}

/// Computes every artifact listed in `sc.outputs`.
pub fn run_scenario(sc: &Scenario) -> Result<Vec<RunOutput>, ScenarioError> {
    let mut out = Vec::new();
    for art in &sc.outputs {
        match art {
            Artifact::Trajectory => out.extend(simulate(sc)?),
            Artifact::Spectrum => {
                out.push(RunOutput::Spectrum(stability(sc, sc.spectrum_variant())?))
            }
            Artifact::Equilibrium => out.push(RunOutput::Equilibrium(sc.equilibrium()?)),
            Artifact::Dispatch => out.push(RunOutput::Dispatch(dispatch(sc)?)),
        }
    }
    Ok(out)
}

pub fn equilibrium_json(res: &EquilibriumResult) -> String {
    let v = serde_json::json!({
        "labels": res.labels,
        "x": res.x,
        "residual_norm": res.residual_norm,
        "status": res.status,
    });
    serde_json::to_string_pretty(&v).expect("equilibrium serializes")
}

/// Writes outputs as `<dir>/<name>_<artifact>.<ext>` and returns the paths.
pub fn write_outputs(
    name: &str,
    outputs: &[RunOutput],
    dir: &Path,
) -> Result<Vec<PathBuf>, ScenarioError> {
    let io = |path: &Path, e: std::io::Error| ScenarioError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    for o in outputs {
        let (suffix, bytes) = match o {
            RunOutput::Trajectory(t) => {
                let mut buf = Vec::new();
                t.write_csv(&mut buf).expect("in-memory write");
                ("trajectory.csv", buf)
            }
            RunOutput::Constraint(log) => {
                let mut buf = Vec::new();
                log.write_csv(&mut buf).expect("in-memory write");
                ("constraint.csv", buf)
            }
            RunOutput::Spectrum(r) => ("spectrum.json", with_newline(r.to_json())),
            RunOutput::Equilibrium(r) => ("equilibrium.json", with_newline(equilibrium_json(r))),
            RunOutput::Dispatch(r) => ("dispatch.json", with_newline(r.to_json())),
        };
        let path = dir.join(format!("{name}_{suffix}"));
        fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn with_newline(mut s: String) -> Vec<u8> {
    s.push('\n');
    s.into_bytes()
}
