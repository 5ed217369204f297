//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N: PASS|FAIL` line before asserting.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use vregion_core::constraints::{
    infer_verdict, ConstraintError, Direction, ExperimentCache, MonotoneDirection, Verdict,
};
use vregion_core::decision::{run_pipeline, LaneDecision, ModelKind};
use vregion_core::domain::{Dimension, ParameterSpace, StatePoint};
use vregion_core::scenario::{CaseStudy, ModelPair};
use vregion_core::search::{
    find_boundary, fresh_caches, grid_oracle, grid_values, search_with_caches,
    validity_region_search, Evaluation, RegionProblem, SearchConfig, SearchTarget,
};
use vregion_core::vehicle::{
    constant_acceleration_position, high_validity_predict, surrogate_predict, Scenario,
    VehicleState,
};

fn report(n: u32, ok: bool, detail: &str) {
    println!(
        "criterion {n}: {} - {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} failed: {detail}");
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn criterion_1_binary_search() {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let mut failures = Vec::new();
    for case in 0..200 {
        let lower = rng.random_range(-1000.0..1000.0);
        let extent = rng.random_range(0.1..5000.0);
        let upper = lower + extent;
        let t = rng.random_range(lower..upper);
        let tol = 1e-3 * extent;
        let valid_below = rng.random_bool(0.5);
        let space = ParameterSpace::new(vec![Dimension::new("x", "", lower, upper)]).unwrap();
        let lo = space.point(vec![lower]).unwrap();
        let hi = space.point(vec![upper]).unwrap();
        let mut calls = 0usize;
        let mut probe = |p: &StatePoint| {
            calls += 1;
            if valid_below {
                p.get(0) <= t
            } else {
                p.get(0) >= t
            }
        };
        let (valid, invalid) = if valid_below { (&lo, &hi) } else { (&hi, &lo) };
        let b = find_boundary(valid, invalid, &mut probe, tol, usize::MAX).unwrap();
        let limit = (extent / tol).log2().ceil() as usize + 2;
        let err = (b.valid.get(0) - t).abs();
        if err > tol || calls > limit {
            failures.push(format!(
                "case {case}: error {err:.3e} > {tol:.3e} or {calls} > {limit} calls"
            ));
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        failures.is_empty() && elapsed < Duration::from_secs(5),
        &format!(
            "200 probes, {} failures, {elapsed:.2?} {:?}",
            failures.len(),
            failures.first()
        ),
    );
}

// ---------------------------------------------------------- criteria 2 and 3

/// Monotone membership over the normalised cube, oriented per axis.
#[derive(Debug, Clone)]
enum Shape {
    Linear { w: [f64; 3], t: f64 },
    Orthants { corners: Vec<[f64; 3]> },
    Curved { w: [f64; 3], t: f64 },
}

#[derive(Debug, Clone)]
struct Synthetic {
    targets: Vec<SearchTarget>,
    increasing: [bool; 3],
    shape: Shape,
}

fn synthetic_space() -> ParameterSpace {
    ParameterSpace::new(vec![
        Dimension::new("position_m", "m", 0.0, 200.0),
        Dimension::new("velocity_mps", "m/s", 0.0, 40.0),
        Dimension::new("acceleration_mps2", "m/s2", -3.0, 3.0),
    ])
    .unwrap()
}

const SYN_STEPS: [f64; 3] = [10.0, 2.0, 0.25];

impl Synthetic {
    fn random(rng: &mut StdRng, kind: usize) -> Self {
        let increasing = [
            rng.random_bool(0.5),
            rng.random_bool(0.5),
            rng.random_bool(0.5),
        ];
        let w = [
            rng.random_range(0.2..1.0),
            rng.random_range(0.2..1.0),
            rng.random_range(0.2..1.0),
        ];
        let total: f64 = w.iter().sum();
        let shape = match kind % 3 {
            0 => Shape::Linear {
                w,
                t: rng.random_range(0.2..0.8) * total,
            },
            1 => Shape::Orthants {
                corners: (0..rng.random_range(1..4))
                    .map(|_| {
                        [
                            rng.random_range(0.0..1.0),
                            rng.random_range(0.0..1.0),
                            rng.random_range(0.0..1.0),
                        ]
                    })
                    .collect(),
            },
            _ => Shape::Curved {
                w,
                t: rng.random_range(0.2..0.8) * total,
            },
        };
        let space = synthetic_space();
        let tags = increasing
            .iter()
            .map(|&inc| {
                if inc {
                    Direction::IncreasingTowardValid
                } else {
                    Direction::DecreasingTowardValid
                }
            })
            .collect();
        Synthetic {
            targets: vec![SearchTarget {
                label: format!("synthetic-{kind}"),
                directions: MonotoneDirection::new(&space, tags).unwrap(),
                nominal: space.point(vec![100.0, 20.0, 0.0]).unwrap(),
                space,
            }],
            increasing,
            shape,
        }
    }

    fn member(&self, p: &StatePoint) -> bool {
        let space = &self.targets[0].space;
        let u: Vec<f64> = (0..3)
            .map(|i| {
                let d = space.dimension(i);
                let x = (p.get(i) - d.lower) / d.extent();
                if self.increasing[i] {
                    x
                } else {
                    1.0 - x
                }
            })
            .collect();
        match &self.shape {
            Shape::Linear { w, t } => w[0] * u[0] + w[1] * u[1] + w[2] * u[2] >= *t,
            Shape::Orthants { corners } => corners.iter().any(|c| (0..3).all(|i| u[i] >= c[i])),
            Shape::Curved { w, t } => {
                w[0] * u[0] * u[0] + w[1] * u[1].sqrt() + w[2] * u[2].powi(3) >= *t
            }
        }
    }
}

impl RegionProblem for Synthetic {
    fn targets(&self) -> &[SearchTarget] {
        &self.targets
    }

    fn violations(&self, _: usize, _: &StatePoint) -> Result<Vec<String>, ConstraintError> {
        Ok(Vec::new())
    }

    fn evaluate(&self, _: usize, p: &StatePoint) -> Evaluation {
        Evaluation {
            agree: self.member(p),
            detail: None,
        }
    }
}

fn synthetic_probes() -> Vec<Synthetic> {
    let mut rng = StdRng::seed_from_u64(2);
    (0..12).map(|k| Synthetic::random(&mut rng, k)).collect()
}

fn synthetic_config(inference: bool) -> SearchConfig {
    SearchConfig::new(
        SYN_STEPS.iter().map(|s| s / 10.0).collect(),
        SYN_STEPS.to_vec(),
        100_000,
    )
    .with_inference(inference)
}

#[test]
fn criterion_2_oracle_equivalence() {
    let start = Instant::now();
    let probes = synthetic_probes();
    let mut mismatches = 0;
    let mut trivial = 0;
    for s in &probes {
        let region = validity_region_search(s, &synthetic_config(true)).unwrap();
        let mut probe = |p: &StatePoint| s.member(p);
        let oracle = grid_oracle(
            synthetic_space().dimensions(),
            &SYN_STEPS,
            &mut probe,
            100_000,
        )
        .unwrap();
        assert_eq!(oracle.len(), 21 * 21 * 25);
        let valid = oracle.iter().filter(|(_, m)| *m).count();
        if valid == 0 || valid == oracle.len() {
            trivial += 1;
        }
        let searched: Vec<(StatePoint, bool)> = region
            .entries()
            .map(|(_, p, e)| (p.clone(), e.verdict.is_valid()))
            .collect();
        if searched != oracle {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    report(
        2,
        mismatches == 0 && trivial == 0 && elapsed < Duration::from_secs(60),
        &format!(
            "{} probes on 21x21x25, {mismatches} set mismatches, {trivial} trivial, {elapsed:.2?}",
            probes.len()
        ),
    );
}

#[test]
fn criterion_3_inference_soundness_and_savings() {
    let probes = synthetic_probes();
    let grid: Vec<StatePoint> = {
        let space = synthetic_space();
        let axes: Vec<Vec<f64>> = space
            .dimensions()
            .iter()
            .zip(SYN_STEPS)
            .map(|(d, s)| grid_values(d, s))
            .collect();
        let mut pts = Vec::new();
        for &p in &axes[0] {
            for &v in &axes[1] {
                for &a in &axes[2] {
                    pts.push(space.point(vec![p, v, a]).unwrap());
                }
            }
        }
        pts
    };
    let mut violations = 0;
    let mut not_fewer = 0;
    let (mut with, mut without) = (0, 0);
    for s in &probes {
        let on = synthetic_config(true);
        let run = search_with_caches(s, &on, fresh_caches(s, &on)).unwrap();
        let off = synthetic_config(false);
        let plain = search_with_caches(s, &off, fresh_caches(s, &off)).unwrap();
        let cache = &run.caches[0];
        for r in cache.records() {
            violations += usize::from(r.verdict.is_valid() != s.member(&r.point));
        }
        for p in &grid {
            if let Some(v) = infer_verdict(p, cache).unwrap() {
                violations += usize::from(v.is_valid() != s.member(p));
            }
        }
        for (_, p, e) in run.region.entries() {
            violations += usize::from(e.verdict.is_valid() != s.member(p));
        }
        let d_on = run.region.stats_total().direct;
        let d_off = plain.region.stats_total().direct;
        with += d_on;
        without += d_off;
        not_fewer += usize::from(d_on >= d_off);
    }

    // braking-machine example
    let braking = ParameterSpace::new(vec![
        Dimension::new("mass_kg", "kg", 0.0, 50_000.0),
        Dimension::new("incline_deg", "deg", 0.0, 45.0),
    ])
    .unwrap();
    let dirs = MonotoneDirection::new(
        &braking,
        vec![
            Direction::DecreasingTowardValid,
            Direction::DecreasingTowardValid,
        ],
    )
    .unwrap();
    let mut cache = ExperimentCache::new(dirs);
    let pt = |m: f64, i: f64| braking.point(vec![m, i]).unwrap();
    cache
        .record(pt(15220.0, 19.0), Verdict::Invalid, None)
        .unwrap();
    cache
        .record(pt(22330.0, 6.0), Verdict::Valid, None)
        .unwrap();
    let expected = [
        (pt(16000.0, 19.0), Some(Verdict::Invalid)),
        (pt(15220.0, 25.0), Some(Verdict::Invalid)),
        (pt(20000.0, 30.0), Some(Verdict::Invalid)),
        (pt(20000.0, 5.0), Some(Verdict::Valid)),
        (pt(22330.0, 2.0), Some(Verdict::Valid)),
        (pt(10000.0, 6.0), Some(Verdict::Valid)),
        (pt(18000.0, 10.0), None),
    ];
    let braking_ok = expected
        .iter()
        .all(|(q, v)| infer_verdict(q, &cache).unwrap() == *v);

    report(
        3,
        violations == 0 && not_fewer == 0 && braking_ok,
        &format!(
            "{} probes, {violations} inference violations, direct evaluations {with} with inference vs {without} without, braking triple {}",
            probes.len(),
            if braking_ok { "ok" } else { "wrong" }
        ),
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_identity_region() {
    let start = Instant::now();
    let mut bad = 0;
    let mut points = 0;
    for kind in [ModelKind::ConstantAcceleration, ModelKind::HighValidity] {
        let case = CaseStudy::bundled().with_models(ModelPair {
            surrogate: kind,
            reference: kind,
        });
        let config = case.search_config();
        let region = validity_region_search(&case, &config).unwrap();
        for (car, t) in case.targets().iter().enumerate() {
            let axes: Vec<Vec<f64>> = t
                .space
                .dimensions()
                .iter()
                .zip(&config.step)
                .map(|(d, &s)| grid_values(d, s))
                .collect();
            for &p in &axes[0] {
                for &v in &axes[1] {
                    for &a in &axes[2] {
                        let q = t.space.point(vec![p, v, a]).unwrap();
                        if !case.is_feasible(car, &q).unwrap() {
                            continue;
                        }
                        points += 1;
                        match region.entry(car, &q) {
                            Some(e) if e.verdict.is_valid() => {}
                            _ => bad += 1,
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        4,
        bad == 0 && points > 0 && elapsed < Duration::from_secs(30),
        &format!(
            "{points} feasible grid points over both models, {bad} not agreeing, {elapsed:.2?}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_case_study_phenomenon() {
    let start = Instant::now();
    let case = CaseStudy::bundled();
    let front = case
        .targets()
        .iter()
        .position(|t| t.label == "front-center")
        .unwrap();
    let target = &case.targets()[front];

    // a close, decelerating front car makes the reference model change lanes
    let mut witness = None;
    'sweep: for p in [35.0, 40.0, 45.0, 50.0] {
        for a in [-0.5, -1.0, -2.0, -3.0] {
            for v in [10.0, 12.0, 8.0] {
                let q = target.space.point(vec![p, v, a]).unwrap();
                let out = run_pipeline(
                    ModelKind::HighValidity,
                    &case.perturbed(front, &q),
                    &case.decision,
                )
                .unwrap();
                if out.decision != LaneDecision::KeepLane {
                    witness = Some((q, out.decision));
                    break 'sweep;
                }
            }
        }
    }

    // discovered region against a full grid sweep, and its c6 structure
    let config = case.search_config();
    let region = validity_region_search(&case, &config).unwrap();
    let mut probe =
        |q: &StatePoint| case.is_feasible(front, q).unwrap() && case.evaluate(front, q).agree;
    let sweep = grid_oracle(target.space.dimensions(), &config.step, &mut probe, 100_000).unwrap();
    let sweep_mismatch = sweep
        .iter()
        .filter(|(q, m)| region.entry(front, q).map(|e| e.verdict.is_valid()) != Some(*m))
        .count();
    let entries: Vec<(&StatePoint, bool)> = region
        .entries()
        .filter(|(c, _, _)| *c == front)
        .map(|(_, q, e)| (q, e.verdict.is_valid()))
        .collect();
    let disagreements = entries.iter().filter(|(_, ok)| !ok).count();
    let mut c6_violations = 0;
    for &(q, ok) in &entries {
        if !ok {
            continue;
        }
        c6_violations += entries
            .iter()
            .filter(|(r, f)| {
                !f && r.get(1) == q.get(1) && r.get(2) == q.get(2) && r.get(0) > q.get(0)
            })
            .count();
    }
    let elapsed = start.elapsed();
    report(
        5,
        witness.is_some()
            && disagreements > 0
            && c6_violations == 0
            && sweep_mismatch == 0
            && elapsed < Duration::from_secs(600),
        &format!(
            "reference decision {:?}, {disagreements} disagreeing front-car points, {c6_violations} c6 violations, {sweep_mismatch} sweep mismatches, {elapsed:.2?}",
            witness.as_ref().map(|(q, d)| format!("{} at {q}", d.label()))
        ),
    );
}

// ---------------------------------------------------------------- criterion 6

fn search_once(dir: &Path, workers: usize) -> (Vec<u8>, Vec<u8>) {
    let status = Command::new(env!("CARGO_BIN_EXE_vregion"))
        .args(["search", "--out"])
        .arg(dir)
        .args(["--workers", &workers.to_string()])
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    (
        std::fs::read(dir.join("region.csv")).unwrap(),
        std::fs::read(dir.join("boundary.csv")).unwrap(),
    )
}

#[test]
fn criterion_6_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<_> = [1, 1, 4, 4]
        .iter()
        .enumerate()
        .map(|(i, &w)| search_once(&tmp.path().join(format!("run{i}")), w))
        .collect();
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    report(
        6,
        identical && !runs[0].0.is_empty(),
        &format!(
            "4 runs (workers 1, 1, 4, 4), region.csv {} bytes, boundary.csv {} bytes, identical: {identical}",
            runs[0].0.len(),
            runs[0].1.len()
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

fn spread_scenario() -> Scenario {
    let st = |lane, x, v, a| VehicleState {
        lane,
        position_m: x,
        velocity_mps: v,
        acceleration_mps2: a,
    };
    // same-lane neighbours start 150 m apart and separate
    Scenario::new(
        3,
        st(1, 0.0, 10.0, 0.0),
        vec![
            ("a".into(), st(1, 150.0, 12.0, 0.5)),
            ("b".into(), st(1, -150.0, 8.0, -0.5)),
            ("c".into(), st(0, 20.0, 15.0, 1.0)),
            ("d".into(), st(0, -200.0, 9.0, -1.0)),
            ("e".into(), st(2, 0.0, 10.0, 0.0)),
            ("f".into(), st(2, -300.0, 10.0, 0.0)),
        ],
        8.0,
        0.1,
    )
    .unwrap()
}

#[test]
fn criterion_7_model_sanity() {
    let mut notes = Vec::new();

    let examples = [
        ((0.0, 0.0, 0.0, 5.0), 0.0),
        ((5.0, 10.0, 2.0, 2.0), 29.0),
        ((100.0, -6.0, 0.0, 10.0), 40.0),
    ];
    let mut rng = StdRng::seed_from_u64(7);
    let mut kin_err: f64 = examples
        .iter()
        .map(|&((x0, v, a, t), want)| (constant_acceleration_position(x0, v, a, t) - want).abs())
        .fold(0.0, f64::max);
    for _ in 0..1000 {
        let (x0, v, a, t): (f64, f64, f64, f64) = (
            rng.random_range(-500.0..500.0),
            rng.random_range(-40.0..40.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(0.0..10.0),
        );
        let want = x0 + v * t + a * t * t / 2.0;
        kin_err = kin_err.max((constant_acceleration_position(x0, v, a, t) - want).abs());
    }
    let kin_ok = kin_err <= 1e-12;
    notes.push(format!("kinematics max error {kin_err:.1e}"));

    let case = CaseStudy::bundled();
    let front = 0;
    let scenarios: Vec<Scenario> = [
        (45.0, 10.0, -0.5),
        (35.0, 10.0, -3.0),
        (40.0, 12.0, -2.5),
        (90.0, 15.0, 1.0),
    ]
    .iter()
    .map(|&(p, v, a)| {
        case.perturbed(
            front,
            &case.targets()[front].space.point(vec![p, v, a]).unwrap(),
        )
    })
    .collect();

    let mut shift_err: f64 = 0.0;
    for sc in &scenarios {
        for delta in [1000.0, -250.0] {
            let moved = sc.translated(delta);
            let pairs = [
                (
                    surrogate_predict(sc).unwrap(),
                    surrogate_predict(&moved).unwrap(),
                ),
                (
                    high_validity_predict(sc).unwrap().trace,
                    high_validity_predict(&moved).unwrap().trace,
                ),
            ];
            for (a, b) in pairs {
                for (va, vb) in a.states.iter().zip(&b.states) {
                    for (sa, sb) in va.iter().zip(vb) {
                        shift_err = shift_err.max((sb.position_m - sa.position_m - delta).abs());
                    }
                }
            }
        }
    }
    let shift_ok = shift_err <= 1e-9;
    notes.push(format!("translation error {shift_err:.1e}"));

    let spread = spread_scenario();
    let reference = high_validity_predict(&spread).unwrap();
    let surrogate = surrogate_predict(&spread).unwrap();
    let exact_ok = reference.trace == surrogate;
    notes.push(format!("no-interaction traces identical: {exact_ok}"));

    let mut refine_rel: f64 = 0.0;
    let mut refine_surrogate: f64 = 0.0;
    for sc in &scenarios {
        let fine = sc.with_time_step(sc.time_step_s / 2.0);
        let coarse_h = high_validity_predict(sc).unwrap().trace.final_positions();
        let fine_h = high_validity_predict(&fine)
            .unwrap()
            .trace
            .final_positions();
        for (c, f) in coarse_h.iter().zip(&fine_h) {
            refine_rel = refine_rel.max((f - c).abs() / c.abs());
        }
        let coarse_s = surrogate_predict(sc).unwrap().final_positions();
        let fine_s = surrogate_predict(&fine).unwrap().final_positions();
        for (c, f) in coarse_s.iter().zip(&fine_s) {
            refine_surrogate = refine_surrogate.max((f - c).abs());
        }
    }
    let refine_ok = refine_rel < 0.01 && refine_surrogate == 0.0;
    notes.push(format!(
        "refinement change {:.3}% (reference), {refine_surrogate} m (surrogate)",
        100.0 * refine_rel
    ));

    report(
        7,
        kin_ok && shift_ok && exact_ok && refine_ok,
        &notes.join(", "),
    );
}
