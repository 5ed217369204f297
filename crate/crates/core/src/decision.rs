//! The decision maker: quantities of interest are extracted from a trace and
//! mapped to a lane-change decision for the ego.
//!
//! Lanes are numbered from the left, so the left neighbour of lane `l` is
//! `l - 1`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Decision, DecisionMetric, DecisionPair, DecisionSpace};
use crate::vehicle::{iterate_fixed_point, surrogate_predict, ModelError, Scenario, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("trace has {actual} steps, scenario horizon needs {expected}")]
    TraceLength { expected: usize, actual: usize },
    #[error("trace has {actual} vehicles, scenario has {expected}")]
    VehicleCount { expected: usize, actual: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecisionParams {
    /// Below this predicted front gap the ego wants to leave its lane.
    pub safe_gap_m: f64,
    /// Front and rear gap an adjacent lane needs to count as clear.
    pub clearance_gap_m: f64,
}

impl Default for DecisionParams {
    fn default() -> Self {
        DecisionParams {
            safe_gap_m: 30.0,
            clearance_gap_m: 30.0,
        }
    }
}

/// Scalar properties of a trace that the decision rule reads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantityOfInterest {
    /// Minimum bumper-to-bumper gap to the ego's lane leader; infinite when
    /// there is no leader.
    pub min_front_gap_m: f64,
    /// Minimum time to collision with the lane leader; infinite when never
    /// closing.
    pub min_time_to_collision_s: f64,
    /// `None` when the lane does not exist.
    pub left_clear: Option<bool>,
    pub right_clear: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LaneDecision {
    KeepLane,
    ChangeLeft,
    ChangeRight,
}

impl LaneDecision {
    pub const ALL: [LaneDecision; 3] = [
        LaneDecision::KeepLane,
        LaneDecision::ChangeLeft,
        LaneDecision::ChangeRight,
    ];

    pub fn label(self) -> &'static str {
        match self {
            LaneDecision::KeepLane => "KeepLane",
            LaneDecision::ChangeLeft => "ChangeLeft",
            LaneDecision::ChangeRight => "ChangeRight",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.label() == label)
    }

    pub fn space() -> DecisionSpace {
        DecisionSpace::categorical(Self::ALL.map(LaneDecision::label))
    }

    pub fn is_change(self) -> bool {
        self != LaneDecision::KeepLane
    }
}

impl fmt::Display for LaneDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl From<LaneDecision> for Decision {
    fn from(d: LaneDecision) -> Self {
        Decision::Categorical(d.label().to_string())
    }
}

/// Gap from `behind` to `ahead` (front bumper to rear bumper), never negative.
fn gap(ahead: f64, behind: f64, length: f64) -> f64 {
    (ahead - behind - length).max(0.0)
}

pub fn extract_quantities(
    trace: &Trace,
    scenario: &Scenario,
    params: &DecisionParams,
) -> Result<QuantityOfInterest, DecisionError> {
    let expected = scenario.steps() + 1;
    if trace.steps() != expected {
        return Err(DecisionError::TraceLength {
            expected,
            actual: trace.steps(),
        });
    }
    if trace.states.len() != scenario.vehicles().len() {
        return Err(DecisionError::VehicleCount {
            expected: scenario.vehicles().len(),
            actual: trace.states.len(),
        });
    }
    let length = scenario.vehicle_length_m;
    let ego_lane = scenario.ego().state.lane;
    let left = ego_lane.checked_sub(1);
    let right = Some(ego_lane + 1).filter(|&l| l < scenario.lane_count());

    let mut min_front_gap = f64::INFINITY;
    let mut min_ttc = f64::INFINITY;
    let mut left_clear = left.map(|_| true);
    let mut right_clear = right.map(|_| true);

    for step in 0..trace.steps() {
        let ego = trace.states[0][step];
        // nearest vehicle ahead and behind the ego, per lane
        let mut ahead: Vec<Option<(f64, f64)>> = vec![None; scenario.lane_count()];
        let mut behind: Vec<Option<f64>> = vec![None; scenario.lane_count()];
        for other in trace.states[1..].iter().map(|s| s[step]) {
            let lane = other.lane;
            if other.position_m > ego.position_m {
                if ahead[lane].is_none_or(|(x, _)| other.position_m < x) {
                    ahead[lane] = Some((other.position_m, other.velocity_mps));
                }
            } else if behind[lane].is_none_or(|x| other.position_m > x) {
                behind[lane] = Some(other.position_m);
            }
        }

        if let Some((x, v)) = ahead[ego_lane] {
            let g = gap(x, ego.position_m, length);
            min_front_gap = min_front_gap.min(g);
            let closing = ego.velocity_mps - v;
            if closing > 0.0 {
                min_ttc = min_ttc.min(g / closing);
            }
        }

        let lane_clear = |lane: usize| {
            let front_ok = ahead[lane]
                .is_none_or(|(x, _)| gap(x, ego.position_m, length) >= params.clearance_gap_m);
            let rear_ok = behind[lane]
                .is_none_or(|x| gap(ego.position_m, x, length) >= params.clearance_gap_m);
            front_ok && rear_ok
        };
        if let (Some(l), Some(clear)) = (left, left_clear.as_mut()) {
            *clear &= lane_clear(l);
        }
        if let (Some(l), Some(clear)) = (right, right_clear.as_mut()) {
            *clear &= lane_clear(l);
        }
    }

    Ok(QuantityOfInterest {
        min_front_gap_m: min_front_gap,
        min_time_to_collision_s: min_ttc,
        left_clear,
        right_clear,
    })
}

/// Keep the lane while the predicted front gap stays safe; otherwise move to
/// a clear neighbour lane, left before right.
pub fn decide(q: &QuantityOfInterest, params: &DecisionParams) -> LaneDecision {
    if q.min_front_gap_m >= params.safe_gap_m {
        LaneDecision::KeepLane
    } else if q.left_clear == Some(true) {
        LaneDecision::ChangeLeft
    } else if q.right_clear == Some(true) {
        LaneDecision::ChangeRight
    } else {
        LaneDecision::KeepLane
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ConstantAcceleration,
    HighValidity,
}

/// Outcome of running one model through the decision pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub decision: LaneDecision,
    pub quantities: QuantityOfInterest,
    /// False when the fixed-point iteration hit its cap.
    pub converged: bool,
}

pub fn predict(kind: ModelKind, scenario: &Scenario) -> Result<(Trace, bool), ModelError> {
    match kind {
        ModelKind::ConstantAcceleration => Ok((surrogate_predict(scenario)?, true)),
        ModelKind::HighValidity => {
            let r = iterate_fixed_point(scenario)?;
            Ok((r.trace, r.converged))
        }
    }
}

pub fn run_pipeline(
    kind: ModelKind,
    scenario: &Scenario,
    params: &DecisionParams,
) -> Result<PipelineOutcome, DecisionError> {
    let (trace, converged) = predict(kind, scenario)?;
    let quantities = extract_quantities(&trace, scenario, params)?;
    Ok(PipelineOutcome {
        decision: decide(&quantities, params),
        quantities,
        converged,
    })
}

/// Both pipelines on one scenario, compared by label equality. A model that
/// fails to converge makes the pair disagree.
pub fn compare_models(
    scenario: &Scenario,
    surrogate: ModelKind,
    reference: ModelKind,
    params: &DecisionParams,
) -> Result<(DecisionPair, bool), DecisionError> {
    let s = run_pipeline(surrogate, scenario, params)?;
    let r = run_pipeline(reference, scenario, params)?;
    let diverged = !(s.converged && r.converged);
    let pair = DecisionPair {
        surrogate: s.decision.into(),
        reference: r.decision.into(),
        diverged,
    };
    let agree = !diverged
        && crate::domain::decisions_agree(
            &pair.surrogate,
            &pair.reference,
            &DecisionMetric::CategoricalEquality,
        )
        .expect("lane decisions are categorical");
    Ok((pair, agree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::VehicleState;

    fn state(lane: usize, x: f64, v: f64, a: f64) -> VehicleState {
        VehicleState {
            lane,
            position_m: x,
            velocity_mps: v,
            acceleration_mps2: a,
        }
    }

    fn scenario(others: Vec<(&str, VehicleState)>) -> Scenario {
        Scenario::new(
            3,
            state(1, 0.0, 10.0, 0.0),
            others
                .into_iter()
                .map(|(n, s)| (n.to_string(), s))
                .collect(),
            8.0,
            0.1,
        )
        .unwrap()
    }

    fn quantities(s: &Scenario) -> QuantityOfInterest {
        let t = surrogate_predict(s).unwrap();
        extract_quantities(&t, s, &DecisionParams::default()).unwrap()
    }

    #[test]
    fn lone_ego_has_infinite_gap() {
        let q = quantities(&scenario(vec![]));
        assert_eq!(q.min_front_gap_m, f64::INFINITY);
        assert_eq!(q.min_time_to_collision_s, f64::INFINITY);
        assert_eq!(q.left_clear, Some(true));
        assert_eq!(q.right_clear, Some(true));
    }

    #[test]
    fn constant_leader_gap() {
        let q = quantities(&scenario(vec![("front", state(1, 40.0, 10.0, 0.0))]));
        assert!((q.min_front_gap_m - 35.0).abs() < 1e-12);
        assert_eq!(q.min_time_to_collision_s, f64::INFINITY);
    }

    #[test]
    fn decelerating_leader_closes_gap() {
        let s = scenario(vec![("front", state(1, 40.0, 10.0, -1.0))]);
        let q = quantities(&s);
        // closing speed reaches 4 m/s at t = 4 s; gap = 35 - 8 - 16 = 11 m at t = 8 s
        assert!(
            (q.min_front_gap_m - 11.0).abs() < 1e-9,
            "{}",
            q.min_front_gap_m
        );
        assert!(q.min_time_to_collision_s.is_finite());
        // TTC at t = 8 s: 11 m / 4 m/s
        assert!((q.min_time_to_collision_s - 2.75).abs() < 1e-9);
    }

    #[test]
    fn edge_lanes_have_no_outer_neighbour() {
        let s = Scenario::new(3, state(0, 0.0, 10.0, 0.0), vec![], 8.0, 0.1).unwrap();
        let q = quantities(&s);
        assert_eq!(q.left_clear, None);
        assert_eq!(q.right_clear, Some(true));
    }

    #[test]
    fn decision_rule() {
        let p = DecisionParams::default();
        let q = |gap, left, right| QuantityOfInterest {
            min_front_gap_m: gap,
            min_time_to_collision_s: f64::INFINITY,
            left_clear: left,
            right_clear: right,
        };
        assert_eq!(
            decide(&q(50.0, Some(true), Some(true)), &p),
            LaneDecision::KeepLane
        );
        assert_eq!(
            decide(&q(20.0, Some(true), Some(true)), &p),
            LaneDecision::ChangeLeft
        );
        assert_eq!(
            decide(&q(20.0, Some(false), Some(true)), &p),
            LaneDecision::ChangeRight
        );
        assert_eq!(
            decide(&q(20.0, Some(false), Some(false)), &p),
            LaneDecision::KeepLane
        );
        assert_eq!(
            decide(&q(20.0, None, Some(false)), &p),
            LaneDecision::KeepLane
        );
        assert_eq!(decide(&q(30.0, None, None), &p), LaneDecision::KeepLane);
    }

    #[test]
    fn single_step_pipeline_changes_left() {
        // one step, leader already 20 m ahead (bumper gap 15 m), left lane empty
        let s = Scenario::new(
            3,
            state(1, 0.0, 10.0, 0.0),
            vec![
                ("front".into(), state(1, 20.0, 10.0, 0.0)),
                ("right".into(), state(2, 10.0, 10.0, 0.0)),
            ],
            0.1,
            0.1,
        )
        .unwrap();
        let out = run_pipeline(
            ModelKind::ConstantAcceleration,
            &s,
            &DecisionParams::default(),
        )
        .unwrap();
        assert_eq!(out.quantities.min_front_gap_m, 15.0);
        assert_eq!(out.quantities.right_clear, Some(false));
        assert_eq!(out.decision, LaneDecision::ChangeLeft);
    }

    #[test]
    fn both_lanes_blocked_keeps_lane() {
        let s = scenario(vec![
            ("front", state(1, 20.0, 10.0, 0.0)),
            ("left", state(0, 10.0, 10.0, 0.0)),
            ("right", state(2, -10.0, 10.0, 0.0)),
        ]);
        let out = run_pipeline(
            ModelKind::ConstantAcceleration,
            &s,
            &DecisionParams::default(),
        )
        .unwrap();
        assert_eq!(out.quantities.left_clear, Some(false));
        assert_eq!(out.quantities.right_clear, Some(false));
        assert_eq!(out.decision, LaneDecision::KeepLane);
    }

    #[test]
    fn trace_shape_is_checked() {
        let s = scenario(vec![]);
        let mut t = surrogate_predict(&s).unwrap();
        t.times.pop();
        assert!(matches!(
            extract_quantities(&t, &s, &DecisionParams::default()),
            Err(DecisionError::TraceLength { .. })
        ));
    }

    #[test]
    fn same_model_always_agrees() {
        let s = scenario(vec![("front", state(1, 36.0, 7.0, -3.0))]);
        for kind in [ModelKind::ConstantAcceleration, ModelKind::HighValidity] {
            let (_, agree) = compare_models(&s, kind, kind, &DecisionParams::default()).unwrap();
            assert!(agree);
        }
    }

    #[test]
    fn labels_round_trip() {
        for d in LaneDecision::ALL {
            assert_eq!(LaneDecision::from_label(d.label()), Some(d));
            assert!(LaneDecision::space().label(d.label()).is_ok());
        }
    }
}
