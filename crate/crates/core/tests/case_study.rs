use vregion_core::constraints::ExperimentCache;
use vregion_core::decision::{decide, extract_quantities, LaneDecision, ModelKind};
use vregion_core::domain::{Decision, StatePoint};
use vregion_core::scenario::{CaseStudy, ModelPair};
use vregion_core::search::{grid_oracle, validity_region_search, RegionProblem};
use vregion_core::vehicle::{high_validity_predict, surrogate_predict, VehicleState};

const FRONT: usize = 0;

/// Both decisions computed without the probe machinery.
fn dual_simulation(
    case: &CaseStudy,
    car: usize,
    p: f64,
    v: f64,
    a: f64,
) -> (LaneDecision, LaneDecision) {
    let ego = case.scenario.ego().state;
    let lane = case.scenario.surrounding()[car].state.lane;
    let scenario = case.scenario.with_surrounding_state(
        car,
        VehicleState {
            lane,
            position_m: ego.position_m + p,
            velocity_mps: v,
            acceleration_mps2: a,
        },
    );
    let s = surrogate_predict(&scenario).unwrap();
    let r = high_validity_predict(&scenario).unwrap().trace;
    let qs = extract_quantities(&s, &scenario, &case.decision).unwrap();
    let qr = extract_quantities(&r, &scenario, &case.decision).unwrap();
    (decide(&qs, &case.decision), decide(&qr, &case.decision))
}

#[test]
fn probe_matches_standalone_dual_simulation() {
    let case = CaseStudy::bundled();
    let points = [
        (FRONT, 35.0, 10.0, -3.0),
        (FRONT, 40.0, 12.0, -2.5),
        (FRONT, 45.0, 10.0, -0.5),
        (FRONT, 150.0, 20.0, 2.0),
        (3, -40.0, 14.0, 1.0),
        (2, 60.0, 8.0, -2.0),
    ];
    for (car, p, v, a) in points {
        let (ds, dr) = dual_simulation(&case, car, p, v, a);
        let point = case.targets()[car].space.point(vec![p, v, a]).unwrap();
        let e = case.evaluate(car, &point);
        let pair = e.detail.unwrap();
        assert_eq!(pair.surrogate, Decision::from(ds), "{car} {point}");
        assert_eq!(pair.reference, Decision::from(dr), "{car} {point}");
        assert_eq!(e.agree, ds == dr);
    }
}

#[test]
fn nominal_front_car_forces_a_lane_change() {
    let case = CaseStudy::bundled();
    let (ds, dr) = dual_simulation(&case, FRONT, 45.0, 10.0, -0.5);
    assert!(ds.is_change(), "{ds:?}");
    assert!(dr.is_change(), "{dr:?}");
}

#[test]
fn far_front_car_keeps_lane_in_both_models() {
    let case = CaseStudy::bundled();
    let (ds, dr) = dual_simulation(&case, FRONT, 150.0, 20.0, 2.0);
    assert_eq!(ds, LaneDecision::KeepLane);
    assert_eq!(dr, LaneDecision::KeepLane);
}

#[test]
fn front_car_region_equals_exhaustive_sweep() {
    let case = CaseStudy::bundled();
    let region = validity_region_search(&case, &case.search_config()).unwrap();
    assert_eq!(region.overrides(), 0);
    let target = &case.targets()[FRONT];
    let mut probe = |q: &StatePoint| {
        case.violations(FRONT, q).unwrap().is_empty() && case.evaluate(FRONT, q).agree
    };
    let steps = case.search.step.to_vec();
    let oracle = grid_oracle(target.space.dimensions(), &steps, &mut probe, 10_000).unwrap();
    assert_eq!(oracle.len(), 24 * 15 * 21);
    let mut disagreements = 0;
    for (point, member) in &oracle {
        let entry = region.entry(FRONT, point).expect("grid point classified");
        assert_eq!(entry.verdict.is_valid(), *member, "{point}");
        disagreements += usize::from(!member);
    }
    assert!(
        disagreements > 0,
        "the front car should produce a non-trivial region"
    );
}

#[test]
fn surrogate_never_leaves_keep_lane_as_front_car_recedes() {
    let case = CaseStudy::bundled();
    for v in [6.0, 10.0, 14.0, 20.0] {
        for a in [-3.0, -1.0, 0.0, 2.0] {
            let mut kept = false;
            for k in 0..=23 {
                let p = 35.0 + 5.0 * k as f64;
                let (ds, _) = dual_simulation(&case, FRONT, p, v, a);
                if kept {
                    assert_eq!(ds, LaneDecision::KeepLane, "p={p} v={v} a={a}");
                }
                kept |= ds == LaneDecision::KeepLane;
            }
        }
    }
}

#[test]
fn identical_models_agree_everywhere() {
    let case = CaseStudy::bundled().with_models(ModelPair {
        surrogate: ModelKind::HighValidity,
        reference: ModelKind::HighValidity,
    });
    let region = validity_region_search(&case, &case.search_config()).unwrap();
    assert_eq!(region.len(), 6 * 24 * 15 * 21);
    assert!(region.entries().all(|(_, _, e)| e.verdict.is_valid()));
}

#[test]
fn every_region_point_is_feasible() {
    let case = CaseStudy::bundled();
    let region = validity_region_search(&case, &case.search_config()).unwrap();
    for (car, point, _) in region.entries() {
        assert!(case.is_feasible(car, point).unwrap(), "{car} {point}");
    }
}

#[test]
fn direct_probe_records_once() {
    let case = CaseStudy::bundled();
    let target = &case.targets()[FRONT];
    let mut cache = ExperimentCache::new(target.directions.clone());
    let p = target.space.point(vec![35.0, 10.0, -3.0]).unwrap();
    let first = case.decision_probe(FRONT, &p, &mut cache, true).unwrap();
    assert!(!first.verdict.is_valid());
    // a closer, harder-braking state is inferred invalid without simulation
    let worse = target.space.point(vec![35.0, 9.0, -3.0]).unwrap();
    let second = case
        .decision_probe(FRONT, &worse, &mut cache, true)
        .unwrap();
    assert_eq!(second.source, vregion_core::search::ProbeSource::Inferred);
    assert_eq!(cache.len(), 1);
}
