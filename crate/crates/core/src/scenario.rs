//! The lane-change case study: scenario files, feasibility quantities, and
//! the per-car search problem handed to the region search.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    is_feasible, ConstraintError, ConstraintRule, ConstraintSet, Direction, ExperimentCache,
    MonotoneDirection, Placement,
};
use crate::decision::{compare_models, DecisionParams, ModelKind};
use crate::domain::{Dimension, DomainError, ParameterSpace, StatePoint};
use crate::search::{
    Evaluation, InferenceProbe, ProbeOutcome, RegionProblem, SearchConfig, SearchError,
    SearchTarget,
};
use crate::vehicle::{ControllerParams, ModelError, Scenario, VehicleState};

pub const POSITION: &str = "position_m";
pub const VELOCITY: &str = "velocity_mps";
pub const ACCELERATION: &str = "acceleration_mps2";

/// The bundled three-lane, six-car scenario.
pub const BUNDLED_SCENARIO: &str = include_str!("../scenarios/highway_three_lane.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("constraint {constraint} violated: {detail}")]
    Violation { constraint: String, detail: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("point is infeasible: {}", .violations.join(", "))]
    Infeasible { violations: Vec<String> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

impl ScenarioError {
    /// Name of the violated constraint, when the error is a constraint
    /// violation.
    pub fn constraint(&self) -> Option<&str> {
        match self {
            ScenarioError::Violation { constraint, .. } => Some(constraint),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    pub lane: usize,
    #[serde(default)]
    pub position_m: f64,
    pub velocity_mps: f64,
    #[serde(default)]
    pub acceleration_mps2: f64,
}

/// Per-axis triple, used for bounds, steps, tolerances and directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes<T> {
    pub position_m: T,
    pub velocity_mps: T,
    pub acceleration_mps2: T,
}

impl<T: Copy> Axes<T> {
    pub fn to_vec(&self) -> Vec<T> {
        vec![self.position_m, self.velocity_mps, self.acceleration_mps2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarSpec {
    pub name: String,
    pub lane: usize,
    /// Relative to the ego.
    pub position_m: f64,
    pub velocity_mps: f64,
    #[serde(default)]
    pub acceleration_mps2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Axes<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Axes<Direction>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPair {
    pub surrogate: ModelKind,
    pub reference: ModelKind,
}

impl Default for ModelPair {
    fn default() -> Self {
        ModelPair {
            surrogate: ModelKind::ConstantAcceleration,
            reference: ModelKind::HighValidity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub step: Axes<f64>,
    pub tolerance: Axes<f64>,
    pub max_evals: usize,
    /// Default bounds for cars ahead of the ego; cars behind mirror the
    /// position range.
    pub position_range_m: [f64; 2],
    pub velocity_range_mps: [f64; 2],
    pub acceleration_range_mps2: [f64; 2],
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            step: Axes {
                position_m: 5.0,
                velocity_mps: 1.0,
                acceleration_mps2: 0.25,
            },
            tolerance: Axes {
                position_m: 0.5,
                velocity_mps: 0.1,
                acceleration_mps2: 0.025,
            },
            max_evals: 200_000,
            position_range_m: [35.0, 150.0],
            velocity_range_mps: [6.0, 20.0],
            acceleration_range_mps2: [-3.0, 2.0],
        }
    }
}

fn default_horizon() -> f64 {
    8.0
}

fn default_time_step() -> f64 {
    0.1
}

fn default_min_speed() -> f64 {
    6.0
}

fn default_length() -> f64 {
    5.0
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub lane_count: usize,
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
    #[serde(default = "default_time_step")]
    pub time_step_s: f64,
    #[serde(default = "default_min_speed")]
    pub min_speed_mps: f64,
    #[serde(default = "default_length")]
    pub vehicle_length_m: f64,
    pub ego: EgoSpec,
    pub surrounding: Vec<CarSpec>,
    #[serde(default)]
    pub controller: ControllerParams,
    #[serde(default)]
    pub decision: DecisionParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSet>,
    #[serde(default)]
    pub models: ModelPair,
    #[serde(default)]
    pub search: SearchSettings,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

/// A validated case study: scenario, constraints, models and one search
/// target per surrounding car.
#[derive(Debug, Clone)]
pub struct CaseStudy {
    pub scenario: Scenario,
    pub constraints: ConstraintSet,
    pub decision: DecisionParams,
    pub models: ModelPair,
    pub search: SearchSettings,
    targets: Vec<SearchTarget>,
    placements: Vec<Placement>,
}

/// Quantities the constraints of a scenario can refer to.
pub fn scenario_quantities(scenario: &Scenario) -> BTreeMap<String, f64> {
    let ego = scenario.ego().state;
    let length = scenario.vehicle_length_m;
    let mut ahead = vec![f64::INFINITY; scenario.lane_count()];
    let mut behind = vec![f64::INFINITY; scenario.lane_count()];
    for v in scenario.surrounding() {
        let s = v.state;
        let offset = s.position_m - ego.position_m;
        if offset > 0.0 {
            ahead[s.lane] = ahead[s.lane].min((offset - length).max(0.0));
        } else {
            behind[s.lane] = behind[s.lane].min((-offset - length).max(0.0));
        }
    }
    let min_speed = scenario
        .vehicles()
        .iter()
        .map(|v| v.state.velocity_mps)
        .fold(f64::INFINITY, f64::min);
    BTreeMap::from([
        ("min_speed_mps".to_string(), min_speed),
        (
            "front_gap_m".to_string(),
            ahead.into_iter().fold(f64::INFINITY, f64::min),
        ),
        (
            "rear_gap_m".to_string(),
            behind.into_iter().fold(f64::INFINITY, f64::min),
        ),
        ("ego_acceleration_mps2".to_string(), ego.acceleration_mps2),
        ("ego_velocity_mps".to_string(), ego.velocity_mps),
    ])
}

impl CaseStudy {
    pub fn bundled() -> Self {
        CaseStudy::parse(BUNDLED_SCENARIO).expect("bundled scenario is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        CaseStudy::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        CaseStudy::from_file(ScenarioFile::parse(text)?)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let constraints = file
            .constraints
            .clone()
            .unwrap_or_else(ConstraintSet::case_study);
        if file.surrounding.len() != 2 * file.lane_count {
            return Err(ScenarioError::Violation {
                constraint: "surrounding-count".into(),
                detail: format!(
                    "{} lanes need {} surrounding cars, found {}",
                    file.lane_count,
                    2 * file.lane_count,
                    file.surrounding.len()
                ),
            });
        }
        let speeds = std::iter::once(("ego", file.ego.velocity_mps)).chain(
            file.surrounding
                .iter()
                .map(|c| (c.name.as_str(), c.velocity_mps)),
        );
        for (name, v) in speeds {
            if v < file.min_speed_mps {
                return Err(ScenarioError::Violation {
                    constraint: "c2-min-speed".into(),
                    detail: format!("{name} drives {v} m/s, below {} m/s", file.min_speed_mps),
                });
            }
        }
        if file.ego.acceleration_mps2 != 0.0 {
            return Err(ScenarioError::Violation {
                constraint: "c5-ego-constant-speed".into(),
                detail: format!("ego acceleration is {} m/s2", file.ego.acceleration_mps2),
            });
        }
        let ego = VehicleState {
            lane: file.ego.lane,
            position_m: file.ego.position_m,
            velocity_mps: file.ego.velocity_mps,
            acceleration_mps2: 0.0,
        };
        let cars = file
            .surrounding
            .iter()
            .map(|c| {
                (
                    c.name.clone(),
                    VehicleState {
                        lane: c.lane,
                        position_m: ego.position_m + c.position_m,
                        velocity_mps: c.velocity_mps,
                        acceleration_mps2: c.acceleration_mps2,
                    },
                )
            })
            .collect();
        let mut scenario =
            Scenario::new(file.lane_count, ego, cars, file.horizon_s, file.time_step_s)?;
        scenario.min_speed_mps = file.min_speed_mps;
        scenario.vehicle_length_m = file.vehicle_length_m;
        scenario.controller = file.controller;
        scenario.validate()?;

        let quantities = scenario_quantities(&scenario);
        if let Some(name) = constraints.violations(&quantities)?.first() {
            return Err(ScenarioError::Violation {
                constraint: name.to_string(),
                detail: "violated by the nominal scenario at t = 0".into(),
            });
        }

        let settings = &file.search;
        let mut targets = Vec::with_capacity(file.surrounding.len());
        let mut placements = Vec::with_capacity(file.surrounding.len());
        for car in &file.surrounding {
            let placement = if car.position_m > 0.0 {
                Placement::Front
            } else {
                Placement::Behind
            };
            let bounds = car.bounds.unwrap_or_else(|| {
                let [lo, hi] = settings.position_range_m;
                Axes {
                    position_m: match placement {
                        Placement::Front => [lo, hi],
                        Placement::Behind => [-hi, -lo],
                    },
                    velocity_mps: settings.velocity_range_mps,
                    acceleration_mps2: settings.acceleration_range_mps2,
                }
            });
            let space = ParameterSpace::new(vec![
                Dimension::new(POSITION, "m", bounds.position_m[0], bounds.position_m[1]),
                Dimension::new(
                    VELOCITY,
                    "m/s",
                    bounds.velocity_mps[0],
                    bounds.velocity_mps[1],
                ),
                Dimension::new(
                    ACCELERATION,
                    "m/s2",
                    bounds.acceleration_mps2[0],
                    bounds.acceleration_mps2[1],
                ),
            ])
            .map_err(|e| ScenarioError::Invalid(format!("{}: {e}", car.name)))?;
            let tags = match car.directions {
                Some(d) => d.to_vec(),
                None => {
                    let position = match constraints.direction_for(placement) {
                        Some(_) if placement == Placement::Front => {
                            Direction::IncreasingTowardValid
                        }
                        Some(_) => Direction::DecreasingTowardValid,
                        None => Direction::Unknown,
                    };
                    vec![position, Direction::Unknown, Direction::Unknown]
                }
            };
            let directions = MonotoneDirection::new(&space, tags)?;
            let nominal = space.point(vec![
                car.position_m,
                car.velocity_mps,
                car.acceleration_mps2,
            ])?;
            targets.push(SearchTarget {
                label: car.name.clone(),
                space,
                directions,
                nominal,
            });
            placements.push(placement);
        }

        Ok(CaseStudy {
            scenario,
            constraints,
            decision: file.decision,
            models: file.models,
            search: file.search,
            targets,
            placements,
        })
    }

    pub fn with_models(mut self, models: ModelPair) -> Self {
        self.models = models;
        self
    }

    pub fn placement(&self, car: usize) -> Placement {
        self.placements[car]
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig::new(
            self.search.tolerance.to_vec(),
            self.search.step.to_vec(),
            self.search.max_evals,
        )
    }

    /// Scenario with surrounding car `car` moved to `point`, everyone else
    /// nominal.
    pub fn perturbed(&self, car: usize, point: &StatePoint) -> Scenario {
        let nominal = self.scenario.surrounding()[car].state;
        let ego = self.scenario.ego().state;
        self.scenario.with_surrounding_state(
            car,
            VehicleState {
                lane: nominal.lane,
                position_m: ego.position_m + point.get(0),
                velocity_mps: point.get(1),
                acceleration_mps2: point.get(2),
            },
        )
    }

    pub fn is_feasible(&self, car: usize, point: &StatePoint) -> Result<bool, ScenarioError> {
        let q = self.point_quantities(car, point);
        Ok(is_feasible(&q, &self.constraints)?)
    }

    fn point_quantities(&self, car: usize, point: &StatePoint) -> BTreeMap<String, f64> {
        let mut q = scenario_quantities(&self.perturbed(car, point));
        for (name, &value) in point.labels().iter().zip(point.coordinates()) {
            q.insert(name.clone(), value);
        }
        q
    }

    /// Single membership probe through `cache`; infeasible points are a
    /// precondition error.
    pub fn decision_probe(
        &self,
        car: usize,
        point: &StatePoint,
        cache: &mut ExperimentCache,
        inference: bool,
    ) -> Result<ProbeOutcome, ScenarioError> {
        let violations = self.violations(car, point)?;
        if !violations.is_empty() {
            return Err(ScenarioError::Infeasible { violations });
        }
        let taken = std::mem::replace(cache, ExperimentCache::new(MonotoneDirection::unknown(0)));
        let mut probe = InferenceProbe::new(self, car, taken, inference, usize::MAX);
        let outcome = probe.classify(point);
        *cache = probe.into_cache();
        Ok(outcome?)
    }

    /// Names of the modeling assumptions that hold by construction.
    pub fn assumptions(&self) -> Vec<&str> {
        self.constraints
            .iter()
            .filter(|c| matches!(c.rule, ConstraintRule::Assumption { .. }))
            .map(|c| c.name.as_str())
            .collect()
    }
}

impl RegionProblem for CaseStudy {
    fn targets(&self) -> &[SearchTarget] {
        &self.targets
    }

    fn violations(
        &self,
        target: usize,
        point: &StatePoint,
    ) -> Result<Vec<String>, ConstraintError> {
        let q = self.point_quantities(target, point);
        Ok(self
            .constraints
            .violations(&q)?
            .into_iter()
            .map(str::to_string)
            .collect())
    }

    fn evaluate(&self, target: usize, point: &StatePoint) -> Evaluation {
        let scenario = self.perturbed(target, point);
        match compare_models(
            &scenario,
            self.models.surrogate,
            self.models.reference,
            &self.decision,
        ) {
            Ok((pair, agree)) => Evaluation {
                agree,
                detail: Some(pair),
            },
            Err(_) => Evaluation {
                agree: false,
                detail: None,
            },
        }
    }
}
