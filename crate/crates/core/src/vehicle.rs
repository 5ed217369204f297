//! Longitudinal traffic models: the constant-acceleration surrogate and the
//! controller-based reference model iterated to a fixed point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("fixed point not reached after {iterations} iterations (residual {residual:.6} m)")]
    Divergence { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Ego,
    Surrounding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub lane: usize,
    pub position_m: f64,
    pub velocity_mps: f64,
    pub acceleration_mps2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub name: String,
    pub role: Role,
    pub state: VehicleState,
}

/// Gap-keeping law `k_v (v_leader - v) + k_p (gap - desired_gap)` with
/// `desired_gap = standstill + headway * v`, saturated to the acceleration
/// limits and only active when the leader is within the interaction range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    pub velocity_gain: f64,
    pub gap_gain: f64,
    pub standstill_gap_m: f64,
    pub time_headway_s: f64,
    pub min_acceleration_mps2: f64,
    pub max_acceleration_mps2: f64,
    pub interaction_range_m: f64,
    pub convergence_threshold_m: f64,
    pub max_iterations: usize,
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            velocity_gain: 0.5,
            gap_gain: 0.2,
            standstill_gap_m: 10.0,
            time_headway_s: 1.4,
            min_acceleration_mps2: -3.0,
            max_acceleration_mps2: 2.0,
            interaction_range_m: 100.0,
            convergence_threshold_m: 0.01,
            max_iterations: 50,
        }
    }
}

impl ControllerParams {
    pub fn command(&self, gap_m: f64, own_velocity: f64, leader_velocity: f64) -> f64 {
        let desired = self.standstill_gap_m + self.time_headway_s * own_velocity;
        let raw = self.velocity_gain * (leader_velocity - own_velocity)
            + self.gap_gain * (gap_m - desired);
        raw.clamp(self.min_acceleration_mps2, self.max_acceleration_mps2)
    }
}

/// A complete lane-change world. Vehicle 0 is the ego.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    lane_count: usize,
    vehicles: Vec<Vehicle>,
    pub horizon_s: f64,
    pub time_step_s: f64,
    pub min_speed_mps: f64,
    pub vehicle_length_m: f64,
    pub controller: ControllerParams,
}

impl Scenario {
    pub fn new(
        lane_count: usize,
        ego: VehicleState,
        surrounding: Vec<(String, VehicleState)>,
        horizon_s: f64,
        time_step_s: f64,
    ) -> Result<Self, ModelError> {
        let mut vehicles = vec![Vehicle {
            name: "ego".into(),
            role: Role::Ego,
            state: ego,
        }];
        vehicles.extend(surrounding.into_iter().map(|(name, state)| Vehicle {
            name,
            role: Role::Surrounding,
            state,
        }));
        let s = Scenario {
            lane_count,
            vehicles,
            horizon_s,
            time_step_s,
            min_speed_mps: 6.0,
            vehicle_length_m: 5.0,
            controller: ControllerParams::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidScenario(m));
        if self.lane_count == 0 {
            return bad("lane count must be positive".into());
        }
        if !(self.horizon_s >= 0.0 && self.horizon_s.is_finite()) {
            return bad(format!(
                "horizon must be non-negative, got {}",
                self.horizon_s
            ));
        }
        if !(self.time_step_s > 0.0 && self.time_step_s.is_finite()) {
            return bad(format!(
                "time step must be positive, got {}",
                self.time_step_s
            ));
        }
        let steps = self.horizon_s / self.time_step_s;
        if (steps - steps.round()).abs() > 1e-6 {
            return bad(format!(
                "horizon {} is not a whole number of time steps {}",
                self.horizon_s, self.time_step_s
            ));
        }
        for v in &self.vehicles {
            let st = &v.state;
            if st.lane >= self.lane_count {
                return bad(format!(
                    "{}: lane {} outside 0..{}",
                    v.name, st.lane, self.lane_count
                ));
            }
            if ![st.position_m, st.velocity_mps, st.acceleration_mps2]
                .iter()
                .all(|x| x.is_finite())
            {
                return bad(format!("{}: non-finite state", v.name));
            }
            if st.velocity_mps < self.min_speed_mps {
                return bad(format!(
                    "{}: c2-min-speed violated ({} < {} m/s)",
                    v.name, st.velocity_mps, self.min_speed_mps
                ));
            }
        }
        if self.vehicles[0].state.acceleration_mps2 != 0.0 {
            return bad("c5-ego-constant-speed violated: ego acceleration must be 0".into());
        }
        Ok(())
    }

    pub fn lane_count(&self) -> usize {
        self.lane_count
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn ego(&self) -> &Vehicle {
        &self.vehicles[0]
    }

    /// Surrounding vehicles, without the ego.
    pub fn surrounding(&self) -> &[Vehicle] {
        &self.vehicles[1..]
    }

    pub fn steps(&self) -> usize {
        (self.horizon_s / self.time_step_s).round() as usize
    }

    /// Copy with surrounding car `index` (0-based, ego excluded) replaced.
    pub fn with_surrounding_state(&self, index: usize, state: VehicleState) -> Scenario {
        let mut s = self.clone();
        s.vehicles[index + 1].state = state;
        s
    }

    /// Copy with every position shifted by `delta`.
    pub fn translated(&self, delta: f64) -> Scenario {
        let mut s = self.clone();
        for v in &mut s.vehicles {
            v.state.position_m += delta;
        }
        s
    }

    pub fn with_time_step(&self, time_step_s: f64) -> Scenario {
        Scenario {
            time_step_s,
            ..self.clone()
        }
    }

    fn time(&self, k: usize) -> f64 {
        let n = self.steps();
        if k == n {
            self.horizon_s
        } else {
            self.horizon_s * k as f64 / n as f64
        }
    }
}

/// Per-vehicle state series at uniform time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    /// `states[vehicle][step]`
    pub states: Vec<Vec<VehicleState>>,
}

impl Trace {
    pub fn steps(&self) -> usize {
        self.times.len()
    }

    pub fn final_positions(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| s.last().expect("non-empty trace").position_m)
            .collect()
    }

    /// Largest absolute position difference over all vehicles and steps.
    pub fn max_position_difference(&self, other: &Trace) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .flat_map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x.position_m - y.position_m).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// `x(t) = 1/2 a t^2 + v t + x0`
pub fn constant_acceleration_position(x0: f64, v: f64, a: f64, t: f64) -> f64 {
    0.5 * a * t * t + v * t + x0
}

/// Closed-form state at time `t` under constant acceleration with the
/// velocity floor: once a decelerating vehicle reaches the floor it keeps
/// that speed.
fn kinematic_state(initial: &VehicleState, floor: f64, t: f64) -> VehicleState {
    let VehicleState {
        lane,
        position_m: x0,
        velocity_mps: v0,
        acceleration_mps2: a,
    } = *initial;
    let floor_time = if a < 0.0 {
        ((floor - v0) / a).max(0.0)
    } else {
        f64::INFINITY
    };
    if t < floor_time {
        VehicleState {
            lane,
            position_m: constant_acceleration_position(x0, v0, a, t),
            velocity_mps: v0 + a * t,
            acceleration_mps2: a,
        }
    } else {
        let x_floor = constant_acceleration_position(x0, v0, a, floor_time);
        VehicleState {
            lane,
            position_m: x_floor + floor * (t - floor_time),
            velocity_mps: floor,
            acceleration_mps2: 0.0,
        }
    }
}

/// Constant-acceleration prediction: no interaction between vehicles.
pub fn surrogate_predict(scenario: &Scenario) -> Result<Trace, ModelError> {
    scenario.validate()?;
    let n = scenario.steps();
    let times: Vec<f64> = (0..=n).map(|k| scenario.time(k)).collect();
    let states = scenario
        .vehicles
        .iter()
        .map(|v| {
            let mut initial = v.state;
            if v.role == Role::Ego {
                initial.acceleration_mps2 = 0.0;
            }
            times
                .iter()
                .map(|&t| kinematic_state(&initial, scenario.min_speed_mps, t))
                .collect()
        })
        .collect();
    Ok(Trace { times, states })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePrediction {
    pub trace: Trace,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Controller-based prediction. Starting from the surrogate trace, every
/// vehicle is re-simulated against the previous iteration's trace of its
/// lane leader until positions stop changing.
pub fn high_validity_predict(scenario: &Scenario) -> Result<ReferencePrediction, ModelError> {
    let prediction = iterate_fixed_point(scenario)?;
    if prediction.converged {
        Ok(prediction)
    } else {
        Err(ModelError::Divergence {
            iterations: prediction.iterations,
            residual: prediction.residual,
        })
    }
}

/// Fixed-point iteration that reports, rather than rejects, a run that hit
/// the iteration cap. The trace is then the last iterate.
pub fn iterate_fixed_point(scenario: &Scenario) -> Result<ReferencePrediction, ModelError> {
    let surrogate = surrogate_predict(scenario)?;
    let params = &scenario.controller;
    let mut current = surrogate.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let next = controlled_pass(scenario, &surrogate, &current);
        residual = next.max_position_difference(&current);
        current = next;
        if residual < params.convergence_threshold_m {
            return Ok(ReferencePrediction {
                trace: current,
                iterations,
                residual,
                converged: true,
            });
        }
    }
    Ok(ReferencePrediction {
        trace: current,
        iterations,
        residual,
        converged: false,
    })
}

fn controlled_pass(scenario: &Scenario, surrogate: &Trace, previous: &Trace) -> Trace {
    let states = (0..scenario.vehicles.len())
        .map(|i| simulate_vehicle(scenario, i, &surrogate.states[i], previous))
        .collect();
    Trace {
        times: surrogate.times.clone(),
        states,
    }
}

/// Nearest same-lane vehicle ahead of `position` at `step` in `trace`.
fn leader_at(
    scenario: &Scenario,
    me: usize,
    lane: usize,
    position: f64,
    step: usize,
    trace: &Trace,
) -> Option<VehicleState> {
    (0..scenario.vehicles.len())
        .filter(|&k| k != me)
        .map(|k| trace.states[k][step])
        .filter(|s| s.lane == lane && s.position_m > position)
        .min_by(|a, b| a.position_m.total_cmp(&b.position_m))
}

fn simulate_vehicle(
    scenario: &Scenario,
    me: usize,
    own_surrogate: &[VehicleState],
    previous: &Trace,
) -> Vec<VehicleState> {
    let params = &scenario.controller;
    let floor = scenario.min_speed_mps;
    let intent = match scenario.vehicles[me].role {
        Role::Ego => 0.0,
        Role::Surrounding => scenario.vehicles[me].state.acceleration_mps2,
    };
    let n = own_surrogate.len() - 1;
    let mut out = Vec::with_capacity(n + 1);
    let mut state = own_surrogate[0];
    let mut engaged = false;
    out.push(state);
    for j in 0..n {
        let dt = previous.times[j + 1] - previous.times[j];
        let scripted = if state.velocity_mps <= floor && intent < 0.0 {
            0.0
        } else {
            intent
        };
        let mut accel = scripted;
        if let Some(leader) = leader_at(scenario, me, state.lane, state.position_m, j, previous) {
            let gap = leader.position_m - state.position_m - scenario.vehicle_length_m;
            if gap <= params.interaction_range_m {
                accel = accel.min(params.command(gap, state.velocity_mps, leader.velocity_mps));
            }
        }
        if !engaged && accel == scripted {
            // still on the scripted trajectory: keep the closed form
            state = own_surrogate[j + 1];
        } else {
            engaged = true;
            state = integrate(state, accel, dt, floor);
        }
        out.push(state);
    }
    out
}

/// One step under constant acceleration with the velocity floor.
fn integrate(state: VehicleState, accel: f64, dt: f64, floor: f64) -> VehicleState {
    let v = state.velocity_mps;
    let mut next = state;
    if accel < 0.0 && v + accel * dt < floor {
        let to_floor = if v > floor { (floor - v) / accel } else { 0.0 };
        next.position_m +=
            v * to_floor + 0.5 * accel * to_floor * to_floor + floor * (dt - to_floor);
        next.velocity_mps = floor;
        next.acceleration_mps2 = if to_floor > 0.0 { accel } else { 0.0 };
    } else {
        next.position_m += v * dt + 0.5 * accel * dt * dt;
        next.velocity_mps = v + accel * dt;
        next.acceleration_mps2 = accel;
    }
    next
}
