//! Shared vocabulary: state points, parameter spaces, decisions and the
//! decision-space metric that defines when two models agree.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: Vec<String>,
        actual: Vec<String>,
    },
    #[error("coordinate {index} ({name}) is not finite: {value}")]
    NonFinite {
        index: usize,
        name: String,
        value: f64,
    },
    #[error("dimension {name}: lower bound {lower} must be below upper bound {upper}")]
    EmptyBound {
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("duplicate dimension name {0}")]
    DuplicateDimension(String),
    #[error("unknown dimension {0}")]
    UnknownDimension(String),
    #[error("metric mismatch: cannot compare {left} and {right} decisions under {metric} metric")]
    MetricMismatch {
        left: &'static str,
        right: &'static str,
        metric: &'static str,
    },
    #[error("label {label:?} is not in the declared label set {labels:?}")]
    UnknownLabel { label: String, labels: Vec<String> },
    #[error("numerical decision value is not finite: {0}")]
    NonFiniteDecision(f64),
    #[error("tolerance must be finite and positive, got {0}")]
    InvalidTolerance(f64),
}

/// One axis of a parameter space, with closed bounds `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub unit: String,
    pub lower: f64,
    pub upper: f64,
}

impl Dimension {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, lower: f64, upper: f64) -> Self {
        Dimension {
            name: name.into(),
            unit: unit.into(),
            lower,
            upper,
        }
    }

    pub fn extent(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.lower, self.upper)
    }
}

/// Bounded box of named dimensions. Every [`StatePoint`] created through a
/// space shares its label list.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    dimensions: Vec<Dimension>,
    labels: Arc<[String]>,
}

impl ParameterSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self, DomainError> {
        for (i, d) in dimensions.iter().enumerate() {
            if !(d.lower.is_finite() && d.upper.is_finite()) || d.lower >= d.upper {
                return Err(DomainError::EmptyBound {
                    name: d.name.clone(),
                    lower: d.lower,
                    upper: d.upper,
                });
            }
            if dimensions[..i].iter().any(|o| o.name == d.name) {
                return Err(DomainError::DuplicateDimension(d.name.clone()));
            }
        }
        let labels: Arc<[String]> = dimensions.iter().map(|d| d.name.clone()).collect();
        Ok(ParameterSpace { dimensions, labels })
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn dimension(&self, index: usize) -> &Dimension {
        &self.dimensions[index]
    }

    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    pub fn labels(&self) -> &Arc<[String]> {
        &self.labels
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| d.name == name)
    }

    /// Builds a point in this space, checking count and finiteness.
    pub fn point(&self, coordinates: Vec<f64>) -> Result<StatePoint, DomainError> {
        StatePoint::new(self.labels.clone(), coordinates)
    }

    pub fn lower_corner(&self) -> StatePoint {
        StatePoint {
            labels: self.labels.clone(),
            coordinates: self.dimensions.iter().map(|d| d.lower).collect(),
        }
    }

    pub fn upper_corner(&self) -> StatePoint {
        StatePoint {
            labels: self.labels.clone(),
            coordinates: self.dimensions.iter().map(|d| d.upper).collect(),
        }
    }
}

/// A point of the state space. Coordinates are ordered to match the labels.
#[derive(Debug, Clone)]
pub struct StatePoint {
    labels: Arc<[String]>,
    coordinates: Vec<f64>,
}

impl StatePoint {
    pub fn new(labels: Arc<[String]>, coordinates: Vec<f64>) -> Result<Self, DomainError> {
        if labels.len() != coordinates.len() {
            return Err(DomainError::DimensionMismatch {
                expected: labels.to_vec(),
                actual: (0..coordinates.len()).map(|i| format!("#{i}")).collect(),
            });
        }
        for (index, (&value, name)) in coordinates.iter().zip(labels.iter()).enumerate() {
            if !value.is_finite() {
                return Err(DomainError::NonFinite {
                    index,
                    name: name.clone(),
                    value,
                });
            }
        }
        Ok(StatePoint {
            labels,
            coordinates,
        })
    }

    pub fn labels(&self) -> &Arc<[String]> {
        &self.labels
    }

    pub fn coordinates(&self) -> &[f64] {
        &self.coordinates
    }

    pub fn get(&self, index: usize) -> f64 {
        self.coordinates[index]
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == name)
            .map(|i| self.coordinates[i])
    }

    pub fn dim(&self) -> usize {
        self.coordinates.len()
    }

    /// Copy of this point with one coordinate replaced.
    pub fn with(&self, index: usize, value: f64) -> StatePoint {
        debug_assert!(value.is_finite());
        let mut coordinates = self.coordinates.clone();
        coordinates[index] = value;
        StatePoint {
            labels: self.labels.clone(),
            coordinates,
        }
    }

    pub fn same_labels(&self, other: &StatePoint) -> bool {
        Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels
    }

    pub fn distance(&self, other: &StatePoint) -> f64 {
        self.coordinates
            .iter()
            .zip(&other.coordinates)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn midpoint(&self, other: &StatePoint) -> StatePoint {
        StatePoint {
            labels: self.labels.clone(),
            coordinates: self
                .coordinates
                .iter()
                .zip(&other.coordinates)
                .map(|(a, b)| (a + b) / 2.0)
                .collect(),
        }
    }
}

impl PartialEq for StatePoint {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for StatePoint {}

impl PartialOrd for StatePoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic by coordinate, then by labels.
impl Ord for StatePoint {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.coordinates.iter().zip(&other.coordinates) {
            match a.total_cmp(b) {
                Ordering::Equal => {}
                ord => return ord,
            }
        }
        self.coordinates
            .len()
            .cmp(&other.coordinates.len())
            .then_with(|| {
                if Arc::ptr_eq(&self.labels, &other.labels) {
                    Ordering::Equal
                } else {
                    self.labels.cmp(&other.labels)
                }
            })
    }
}

impl fmt::Display for StatePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, (name, value)) in self.labels.iter().zip(&self.coordinates).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{name}={value}")?;
        }
        write!(f, ")")
    }
}

/// True iff every coordinate lies in its closed dimension interval.
pub fn point_in_bounds(x: &StatePoint, space: &ParameterSpace) -> Result<bool, DomainError> {
    if !x.same_labels(&space.lower_corner()) {
        return Err(DomainError::DimensionMismatch {
            expected: space.labels().to_vec(),
            actual: x.labels().to_vec(),
        });
    }
    Ok(space
        .dimensions()
        .iter()
        .zip(x.coordinates())
        .all(|(d, &v)| d.contains(v)))
}

/// Declared decision space: a finite label set, or the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecisionSpace {
    Categorical { labels: Vec<String> },
    Numerical,
}

impl DecisionSpace {
    pub fn categorical<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        DecisionSpace::Categorical {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn label(&self, label: &str) -> Result<Decision, DomainError> {
        match self {
            DecisionSpace::Categorical { labels } if labels.iter().any(|l| l == label) => {
                Ok(Decision::Categorical(label.to_string()))
            }
            DecisionSpace::Categorical { labels } => Err(DomainError::UnknownLabel {
                label: label.to_string(),
                labels: labels.clone(),
            }),
            DecisionSpace::Numerical => Err(DomainError::MetricMismatch {
                left: "categorical",
                right: "numerical",
                metric: "numerical",
            }),
        }
    }

    pub fn value(&self, value: f64) -> Result<Decision, DomainError> {
        match self {
            DecisionSpace::Numerical if value.is_finite() => Ok(Decision::Numerical(value)),
            DecisionSpace::Numerical => Err(DomainError::NonFiniteDecision(value)),
            DecisionSpace::Categorical { .. } => Err(DomainError::MetricMismatch {
                left: "numerical",
                right: "categorical",
                metric: "categorical",
            }),
        }
    }
}

/// An element of a decision space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Decision {
    Categorical(String),
    Numerical(f64),
}

impl Decision {
    pub fn kind(&self) -> &'static str {
        match self {
            Decision::Categorical(_) => "categorical",
            Decision::Numerical(_) => "numerical",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Categorical(label) => f.write_str(label),
            Decision::Numerical(v) => write!(f, "{v}"),
        }
    }
}

/// Decisions of both models at one evaluated point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPair {
    pub surrogate: Decision,
    pub reference: Decision,
    /// The reference model failed to converge; the point counts as invalid.
    #[serde(default)]
    pub diverged: bool,
}

/// Distance on the decision space. Categorical spaces compare labels for
/// equality; numerical spaces use the absolute difference against `tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecisionMetric {
    CategoricalEquality,
    NumericalAbsoluteDifference { tolerance: f64 },
}

impl DecisionMetric {
    /// Numerical metric; the tolerance must be strictly positive.
    pub fn numerical(tolerance: f64) -> Result<Self, DomainError> {
        if !tolerance.is_finite() || tolerance <= 0.0 {
            return Err(DomainError::InvalidTolerance(tolerance));
        }
        Ok(DecisionMetric::NumericalAbsoluteDifference { tolerance })
    }

    fn name(&self) -> &'static str {
        match self {
            DecisionMetric::CategoricalEquality => "categorical",
            DecisionMetric::NumericalAbsoluteDifference { .. } => "numerical",
        }
    }

    pub fn tolerance(&self) -> f64 {
        match self {
            DecisionMetric::CategoricalEquality => 0.0,
            DecisionMetric::NumericalAbsoluteDifference { tolerance } => *tolerance,
        }
    }
}

pub fn decision_distance(
    a: &Decision,
    b: &Decision,
    metric: &DecisionMetric,
) -> Result<f64, DomainError> {
    match (a, b, metric) {
        (
            Decision::Categorical(x),
            Decision::Categorical(y),
            DecisionMetric::CategoricalEquality,
        ) => Ok(if x == y { 0.0 } else { 1.0 }),
        (
            Decision::Numerical(x),
            Decision::Numerical(y),
            DecisionMetric::NumericalAbsoluteDifference { .. },
        ) => Ok((x - y).abs()),
        _ => Err(DomainError::MetricMismatch {
            left: a.kind(),
            right: b.kind(),
            metric: metric.name(),
        }),
    }
}

/// Numerical spaces agree iff the distance is strictly below the tolerance;
/// categorical spaces agree iff the labels are equal.
pub fn decisions_agree(
    a: &Decision,
    b: &Decision,
    metric: &DecisionMetric,
) -> Result<bool, DomainError> {
    let distance = decision_distance(a, b, metric)?;
    Ok(match metric {
        DecisionMetric::CategoricalEquality => distance == 0.0,
        DecisionMetric::NumericalAbsoluteDifference { tolerance } => distance < *tolerance,
    })
}
