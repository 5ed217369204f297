//! Domain constraints, the feasible region they carve out of the state
//! space, and monotone-dominance inference over recorded experiments.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DecisionPair, ParameterSpace, StatePoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("constraint {constraint} references undeclared quantity {quantity}")]
    UndeclaredQuantity {
        constraint: String,
        quantity: String,
    },
    #[error("duplicate constraint name {0}")]
    DuplicateName(String),
    #[error("direction declaration has {actual} tags for a {expected}-dimensional space")]
    DirectionCount { expected: usize, actual: usize },
    #[error("inconsistent cache: {valid} is valid but {invalid} is invalid, yet the query lies between them")]
    CacheInconsistency {
        valid: StatePoint,
        invalid: StatePoint,
    },
    #[error("monotonicity violated: new {new_verdict} record at {point} contradicts {witness_verdict} record at {witness}")]
    MonotonicityViolation {
        point: StatePoint,
        new_verdict: Verdict,
        witness: StatePoint,
        witness_verdict: Verdict,
    },
}

/// Source of named scalar quantities a constraint can compare against.
pub trait QuantitySource {
    fn quantity(&self, name: &str) -> Option<f64>;
}

impl QuantitySource for StatePoint {
    fn quantity(&self, name: &str) -> Option<f64> {
        self.value(name)
    }
}

impl QuantitySource for BTreeMap<String, f64> {
    fn quantity(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

/// Which side of the ego a directional declaration talks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    Front,
    Behind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintRule {
    /// `quantity >= value`
    Min { quantity: String, value: f64 },
    /// `quantity <= value`
    Max { quantity: String, value: f64 },
    /// Holds by construction of the models; never rejects a point.
    Assumption { note: String },
    /// Validity improves moving away from the ego on the given side. Read by
    /// the inference engine, not a point predicate.
    Direction { placement: Placement, note: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    #[serde(flatten)]
    pub rule: ConstraintRule,
}

impl Constraint {
    pub fn min(name: &str, quantity: &str, value: f64) -> Self {
        Constraint {
            name: name.into(),
            rule: ConstraintRule::Min {
                quantity: quantity.into(),
                value,
            },
        }
    }

    pub fn max(name: &str, quantity: &str, value: f64) -> Self {
        Constraint {
            name: name.into(),
            rule: ConstraintRule::Max {
                quantity: quantity.into(),
                value,
            },
        }
    }

    pub fn assumption(name: &str, note: &str) -> Self {
        Constraint {
            name: name.into(),
            rule: ConstraintRule::Assumption { note: note.into() },
        }
    }

    pub fn direction(name: &str, placement: Placement, note: &str) -> Self {
        Constraint {
            name: name.into(),
            rule: ConstraintRule::Direction {
                placement,
                note: note.into(),
            },
        }
    }

    pub fn is_point_predicate(&self) -> bool {
        matches!(
            self.rule,
            ConstraintRule::Min { .. } | ConstraintRule::Max { .. }
        )
    }

    pub fn evaluate(&self, source: &dyn QuantitySource) -> Result<bool, ConstraintError> {
        let lookup = |q: &str| {
            source
                .quantity(q)
                .ok_or_else(|| ConstraintError::UndeclaredQuantity {
                    constraint: self.name.clone(),
                    quantity: q.to_string(),
                })
        };
        match &self.rule {
            ConstraintRule::Min { quantity, value } => Ok(lookup(quantity)? >= *value),
            ConstraintRule::Max { quantity, value } => Ok(lookup(quantity)? <= *value),
            ConstraintRule::Assumption { .. } | ConstraintRule::Direction { .. } => Ok(true),
        }
    }
}

/// Ordered, uniquely named set of constraints.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct ConstraintSet {
    constraints: Vec<Constraint>,
}

impl<'de> Deserialize<'de> for ConstraintSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let constraints = Vec::<Constraint>::deserialize(d)?;
        ConstraintSet::new(constraints).map_err(serde::de::Error::custom)
    }
}

impl ConstraintSet {
    pub fn new(constraints: Vec<Constraint>) -> Result<Self, ConstraintError> {
        let mut set = ConstraintSet::default();
        for c in constraints {
            set.push(c)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, constraint: Constraint) -> Result<(), ConstraintError> {
        if self.constraints.iter().any(|c| c.name == constraint.name) {
            return Err(ConstraintError::DuplicateName(constraint.name));
        }
        self.constraints.push(constraint);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.constraints.iter().map(|c| c.name.as_str()).collect()
    }

    /// Names of every constraint the point violates, in declaration order.
    pub fn violations(&self, source: &dyn QuantitySource) -> Result<Vec<&str>, ConstraintError> {
        let mut out = Vec::new();
        for c in &self.constraints {
            if !c.evaluate(source)? {
                out.push(c.name.as_str());
            }
        }
        Ok(out)
    }

    pub fn direction_for(&self, placement: Placement) -> Option<&Constraint> {
        self.constraints.iter().find(
            |c| matches!(&c.rule, ConstraintRule::Direction { placement: p, .. } if *p == placement),
        )
    }

    /// The lane-change case-study set. Quantity names are provided by the
    /// scenario: `min_speed_mps`, `front_gap_m`, `rear_gap_m`.
    pub fn case_study() -> Self {
        ConstraintSet::new(vec![
            Constraint::assumption(
                "c1-deterministic",
                "vehicles behave deterministically during simulation",
            ),
            Constraint::min("c2-min-speed", "min_speed_mps", 6.0),
            Constraint::assumption(
                "c3-constant-after-maneuver",
                "a vehicle keeps its velocity once its acceleration phase ends",
            ),
            Constraint::min("c4-front-gap", "front_gap_m", 30.0),
            Constraint::min("c4-rear-gap", "rear_gap_m", 30.0),
            Constraint::assumption(
                "c5-ego-constant-speed",
                "the ego's own acceleration input is zero",
            ),
            Constraint::direction(
                "c6-front-further-valid",
                Placement::Front,
                "a car ahead of the ego is valid at positions further away",
            ),
            Constraint::direction(
                "c7-behind-further-valid",
                Placement::Behind,
                "a car behind the ego is valid at positions further away",
            ),
        ])
        .expect("built-in names are unique")
    }
}

/// F = { x | every constraint holds at x }.
pub fn is_feasible(
    source: &dyn QuantitySource,
    constraints: &ConstraintSet,
) -> Result<bool, ConstraintError> {
    for c in constraints.iter() {
        if !c.evaluate(source)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Per-dimension direction in which membership can only improve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    IncreasingTowardValid,
    DecreasingTowardValid,
    Unknown,
}

impl Direction {
    /// `a` is at least as favorable as `b` along this dimension.
    fn at_least_as_favorable(self, a: f64, b: f64) -> bool {
        match self {
            Direction::IncreasingTowardValid => a >= b,
            Direction::DecreasingTowardValid => a <= b,
            Direction::Unknown => a == b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MonotoneDirection(Vec<Direction>);

impl MonotoneDirection {
    pub fn new(space: &ParameterSpace, tags: Vec<Direction>) -> Result<Self, ConstraintError> {
        if tags.len() != space.len() {
            return Err(ConstraintError::DirectionCount {
                expected: space.len(),
                actual: tags.len(),
            });
        }
        Ok(MonotoneDirection(tags))
    }

    pub fn unknown(dims: usize) -> Self {
        MonotoneDirection(vec![Direction::Unknown; dims])
    }

    pub fn tags(&self) -> &[Direction] {
        &self.0
    }

    pub fn get(&self, index: usize) -> Direction {
        self.0[index]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `a` is componentwise at least as favorable as `b`.
    pub fn dominates(&self, a: &StatePoint, b: &StatePoint) -> bool {
        self.0
            .iter()
            .zip(a.coordinates().iter().zip(b.coordinates()))
            .all(|(d, (&x, &y))| d.at_least_as_favorable(x, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Valid,
    Invalid,
}

impl Verdict {
    pub fn from_agreement(agree: bool) -> Self {
        if agree {
            Verdict::Valid
        } else {
            Verdict::Invalid
        }
    }

    pub fn is_valid(self) -> bool {
        self == Verdict::Valid
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Valid => "valid",
            Verdict::Invalid => "invalid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordSource {
    Direct,
    Inferred,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub point: StatePoint,
    pub verdict: Verdict,
    pub source: RecordSource,
    /// Insertion order; replaying records in this order rebuilds the cache.
    pub order: u64,
    pub detail: Option<DecisionPair>,
}

/// Recorded experiments for one parameter space, with the direction
/// declaration used for dominance inference.
#[derive(Debug, Clone)]
pub struct ExperimentCache {
    directions: MonotoneDirection,
    records: Vec<ExperimentRecord>,
    index: BTreeMap<StatePoint, usize>,
}

impl ExperimentCache {
    pub fn new(directions: MonotoneDirection) -> Self {
        ExperimentCache {
            directions,
            records: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn directions(&self) -> &MonotoneDirection {
        &self.directions
    }

    pub fn records(&self) -> &[ExperimentRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lookup(&self, point: &StatePoint) -> Option<&ExperimentRecord> {
        self.index.get(point).map(|&i| &self.records[i])
    }

    /// Adds a record unless it contradicts what the cache already implies.
    /// Re-recording an identical verdict is a no-op.
    pub fn record(
        &mut self,
        point: StatePoint,
        verdict: Verdict,
        detail: Option<DecisionPair>,
    ) -> Result<&ExperimentRecord, ConstraintError> {
        if let Some(&i) = self.index.get(&point) {
            let existing = &self.records[i];
            if existing.verdict != verdict {
                return Err(ConstraintError::MonotonicityViolation {
                    point,
                    new_verdict: verdict,
                    witness: existing.point.clone(),
                    witness_verdict: existing.verdict,
                });
            }
            return Ok(&self.records[i]);
        }
        if let Some(witness) = self.contradicting_witness(&point, verdict) {
            return Err(ConstraintError::MonotonicityViolation {
                point,
                new_verdict: verdict,
                witness: witness.point.clone(),
                witness_verdict: witness.verdict,
            });
        }
        let order = self.records.len() as u64;
        self.index.insert(point.clone(), self.records.len());
        self.records.push(ExperimentRecord {
            point,
            verdict,
            source: RecordSource::Direct,
            order,
            detail,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    fn contradicting_witness(
        &self,
        point: &StatePoint,
        verdict: Verdict,
    ) -> Option<&ExperimentRecord> {
        self.records.iter().find(|r| match (verdict, r.verdict) {
            // a valid point cannot be less favorable than a known invalid one
            (Verdict::Valid, Verdict::Invalid) => self.directions.dominates(&r.point, point),
            (Verdict::Invalid, Verdict::Valid) => self.directions.dominates(point, &r.point),
            _ => false,
        })
    }
}

/// Derives a verdict for `query` from cached records by monotone dominance.
/// Returns `Ok(None)` when no record decides the query.
pub fn infer_verdict(
    query: &StatePoint,
    cache: &ExperimentCache,
) -> Result<Option<Verdict>, ConstraintError> {
    let dirs = &cache.directions;
    let valid = cache
        .records
        .iter()
        .find(|r| r.verdict == Verdict::Valid && dirs.dominates(query, &r.point));
    let invalid = cache
        .records
        .iter()
        .find(|r| r.verdict == Verdict::Invalid && dirs.dominates(&r.point, query));
    match (valid, invalid) {
        (Some(v), Some(i)) => Err(ConstraintError::CacheInconsistency {
            valid: v.point.clone(),
            invalid: i.point.clone(),
        }),
        (Some(_), None) => Ok(Some(Verdict::Valid)),
        (None, Some(_)) => Ok(Some(Verdict::Invalid)),
        (None, None) => Ok(None),
    }
}

/// Appends a direct experiment to `cache`, rejecting records that contradict
/// the declared monotone directions.
pub fn record_experiment(
    point: StatePoint,
    verdict: Verdict,
    cache: &mut ExperimentCache,
) -> Result<(), ConstraintError> {
    cache.record(point, verdict, None).map(|_| ())
}
