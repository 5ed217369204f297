//! Boundary bisection and the nested axis-by-axis region search.
//!
//! The region search walks the dimensions of each target in order. On each
//! axis it probes both bounds to learn which side is valid, bisects the
//! bracket down to the configured tolerance, and then classifies every grid
//! value on the axis: values on the valid side of the bracket are members,
//! values on the invalid side are not, and the (rare) grid values that fall
//! inside the final bracket are probed directly. Every valid value is then
//! refined along the next axis.
//!
//! While an axis is being searched, the axes after it are held at their most
//! favorable bound according to the target's direction declaration (or the
//! nominal value when the direction is unknown). For probes that are
//! monotone in every declared direction this makes the discrete region
//! identical to an exhaustive grid scan.

use std::collections::BTreeMap;
use std::thread;

use serde::Serialize;
use thiserror::Error;

use crate::constraints::{
    infer_verdict, ConstraintError, Direction, ExperimentCache, MonotoneDirection, Verdict,
};
use crate::domain::{DecisionPair, Dimension, DomainError, ParameterSpace, StatePoint};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid bracket: {0}")]
    InvalidBracket(&'static str),
    #[error("evaluation budget of {budget} probes exhausted")]
    Budget { budget: usize },
    #[error("evaluation budget exhausted after {} probes; partial region returned", .partial.region.stats_total().probes)]
    PartialResult { partial: Box<SearchRun> },
    #[error("search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Tolerances and grid steps, one entry per dimension, plus a per-target
/// probe budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub tolerance: Vec<f64>,
    pub step: Vec<f64>,
    pub max_evals: usize,
    pub inference: bool,
    pub workers: usize,
}

impl SearchConfig {
    pub fn new(tolerance: Vec<f64>, step: Vec<f64>, max_evals: usize) -> Self {
        SearchConfig {
            tolerance,
            step,
            max_evals,
            inference: true,
            workers: 1,
        }
    }

    pub fn with_inference(mut self, on: bool) -> Self {
        self.inference = on;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn validate(&self, space: &ParameterSpace) -> Result<(), SearchError> {
        if self.tolerance.len() != space.len() || self.step.len() != space.len() {
            return Err(SearchError::Config(format!(
                "expected {} tolerances and steps, got {} and {}",
                space.len(),
                self.tolerance.len(),
                self.step.len()
            )));
        }
        if self.max_evals == 0 {
            return Err(SearchError::Config(
                "evaluation budget must be positive".into(),
            ));
        }
        for ((d, &tol), &step) in space
            .dimensions()
            .iter()
            .zip(&self.tolerance)
            .zip(&self.step)
        {
            if !(tol > 0.0 && tol < d.extent()) {
                return Err(SearchError::Config(format!(
                    "{}: tolerance {tol} must be positive and below the extent {}",
                    d.name,
                    d.extent()
                )));
            }
            if !(step.is_finite() && step >= tol) {
                return Err(SearchError::Config(format!(
                    "{}: step {step} must be at least the tolerance {tol}",
                    d.name
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic membership test for V_ε.
pub trait MembershipProbe {
    fn probe(&mut self, point: &StatePoint) -> Result<bool, SearchError>;
}

impl<F> MembershipProbe for F
where
    F: FnMut(&StatePoint) -> bool,
{
    fn probe(&mut self, point: &StatePoint) -> Result<bool, SearchError> {
        Ok(self(point))
    }
}

/// Final bracket of a bisection: `valid` is a member, `invalid` is not, and
/// they are within the tolerance of each other.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub valid: StatePoint,
    pub invalid: StatePoint,
    pub evaluations: usize,
}

impl Boundary {
    pub fn width(&self) -> f64 {
        self.valid.distance(&self.invalid)
    }
}

/// Bisects the segment from `valid` (a member) to `invalid` (not a member)
/// until the endpoints are within `tolerance`, and returns the last member.
pub fn find_boundary<P: MembershipProbe + ?Sized>(
    valid: &StatePoint,
    invalid: &StatePoint,
    probe: &mut P,
    tolerance: f64,
    max_evals: usize,
) -> Result<Boundary, SearchError> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(SearchError::Config(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    if !valid.same_labels(invalid) {
        return Err(SearchError::Config(
            "bracket endpoints live in different spaces".into(),
        ));
    }
    let mut evaluations = 0usize;
    let mut eval = |p: &StatePoint, probe: &mut P| {
        if evaluations >= max_evals {
            return Err(SearchError::Budget { budget: max_evals });
        }
        evaluations += 1;
        probe.probe(p)
    };
    if !eval(valid, probe)? {
        return Err(SearchError::InvalidBracket(
            "first endpoint is not a member",
        ));
    }
    if eval(invalid, probe)? {
        return Err(SearchError::InvalidBracket("second endpoint is a member"));
    }
    let mut p1 = valid.clone();
    let mut p2 = invalid.clone();
    while p1.distance(&p2) > tolerance {
        let mid = p1.midpoint(&p2);
        if mid == p1 || mid == p2 {
            // floating point resolution reached
            break;
        }
        if eval(&mid, probe)? {
            p1 = mid;
        } else {
            p2 = mid;
        }
    }
    Ok(Boundary {
        valid: p1,
        invalid: p2,
        evaluations,
    })
}

/// Grid values along one dimension: `lower + k * step`, closed by `upper`.
pub fn grid_values(dimension: &Dimension, step: f64) -> Vec<f64> {
    let extent = dimension.extent();
    let n = (extent / step + 1e-9).floor() as usize;
    let mut values: Vec<f64> = (0..=n)
        .map(|k| (dimension.lower + k as f64 * step).min(dimension.upper))
        .collect();
    let last = *values.last().expect("at least the lower bound");
    if dimension.upper - last > 1e-9 * extent.max(1.0) {
        values.push(dimension.upper);
    } else if let Some(v) = values.last_mut() {
        *v = dimension.upper;
    }
    values
}

/// Exhaustive probe of every grid point, in lexicographic order.
pub fn grid_oracle<P: MembershipProbe + ?Sized>(
    bounds: &[Dimension],
    steps: &[f64],
    probe: &mut P,
    max_evals: usize,
) -> Result<Vec<(StatePoint, bool)>, SearchError> {
    if steps.len() != bounds.len() {
        return Err(SearchError::Config(
            "one step per dimension required".into(),
        ));
    }
    for (d, &s) in bounds.iter().zip(steps) {
        if !(s > 0.0 && s.is_finite()) {
            return Err(SearchError::Config(format!(
                "{}: step must be positive",
                d.name
            )));
        }
        if d.extent().is_nan() || d.extent() <= 0.0 {
            return Err(SearchError::Config(format!(
                "{}: zero-extent bound",
                d.name
            )));
        }
    }
    let space = ParameterSpace::new(bounds.to_vec())?;
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .zip(steps)
        .map(|(d, &s)| grid_values(d, s))
        .collect();
    let total = axes
        .iter()
        .try_fold(1usize, |acc, a| acc.checked_mul(a.len()));
    match total {
        Some(n) if n <= max_evals => {}
        _ => return Err(SearchError::Budget { budget: max_evals }),
    }
    let mut out = Vec::with_capacity(total.unwrap_or(0));
    let mut index = vec![0usize; axes.len()];
    loop {
        let coords = index.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        let point = space.point(coords)?;
        let member = probe.probe(&point)?;
        out.push((point, member));
        // odometer increment, last axis fastest
        let mut axis = axes.len();
        loop {
            if axis == 0 {
                return Ok(out);
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < axes[axis].len() {
                break;
            }
            index[axis] = 0;
        }
    }
}

/// A sub-space searched independently, e.g. the (p, v, a) space of one
/// surrounding car.
#[derive(Debug, Clone)]
pub struct SearchTarget {
    pub label: String,
    pub space: ParameterSpace,
    pub directions: MonotoneDirection,
    pub nominal: StatePoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub agree: bool,
    pub detail: Option<DecisionPair>,
}

/// Everything the region search needs to know about a problem.
pub trait RegionProblem: Sync {
    fn targets(&self) -> &[SearchTarget];

    /// Names of the constraints violated at `point`; empty when feasible.
    fn violations(&self, target: usize, point: &StatePoint)
        -> Result<Vec<String>, ConstraintError>;

    /// Runs both models and compares their decisions. Expensive.
    fn evaluate(&self, target: usize, point: &StatePoint) -> Evaluation;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeSource {
    Direct,
    Cached,
    Inferred,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub verdict: Verdict,
    pub source: ProbeSource,
    pub violations: Vec<String>,
    pub detail: Option<DecisionPair>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ProbeStats {
    pub probes: usize,
    pub direct: usize,
    pub cached: usize,
    pub inferred: usize,
    pub infeasible: usize,
    pub divergences: usize,
}

impl ProbeStats {
    pub fn merge(&mut self, other: &ProbeStats) {
        self.probes += other.probes;
        self.direct += other.direct;
        self.cached += other.cached;
        self.inferred += other.inferred;
        self.infeasible += other.infeasible;
        self.divergences += other.divergences;
    }

    /// Probes answered for feasible points.
    pub fn answered(&self) -> usize {
        self.direct + self.cached + self.inferred
    }
}

/// Membership probe composed of a feasibility check, an exact cache lookup,
/// monotone inference, and finally a direct paired evaluation that is
/// recorded in the cache.
pub struct InferenceProbe<'a, P: RegionProblem + ?Sized> {
    problem: &'a P,
    target: usize,
    cache: ExperimentCache,
    inference: bool,
    stats: ProbeStats,
    budget: usize,
}

impl<'a, P: RegionProblem + ?Sized> InferenceProbe<'a, P> {
    pub fn new(
        problem: &'a P,
        target: usize,
        cache: ExperimentCache,
        inference: bool,
        budget: usize,
    ) -> Self {
        InferenceProbe {
            problem,
            target,
            cache,
            inference,
            stats: ProbeStats::default(),
            budget,
        }
    }

    pub fn stats(&self) -> ProbeStats {
        self.stats
    }

    pub fn cache(&self) -> &ExperimentCache {
        &self.cache
    }

    pub fn into_cache(self) -> ExperimentCache {
        self.cache
    }

    pub fn classify(&mut self, point: &StatePoint) -> Result<ProbeOutcome, SearchError> {
        if self.stats.probes >= self.budget {
            return Err(SearchError::Budget {
                budget: self.budget,
            });
        }
        self.stats.probes += 1;
        let violations = self.problem.violations(self.target, point)?;
        if !violations.is_empty() {
            self.stats.infeasible += 1;
            return Ok(ProbeOutcome {
                verdict: Verdict::Invalid,
                source: ProbeSource::Infeasible,
                violations,
                detail: None,
            });
        }
        if let Some(record) = self.cache.lookup(point) {
            self.stats.cached += 1;
            return Ok(ProbeOutcome {
                verdict: record.verdict,
                source: ProbeSource::Cached,
                violations,
                detail: record.detail.clone(),
            });
        }
        if self.inference {
            if let Some(verdict) = infer_verdict(point, &self.cache)? {
                self.stats.inferred += 1;
                return Ok(ProbeOutcome {
                    verdict,
                    source: ProbeSource::Inferred,
                    violations,
                    detail: None,
                });
            }
        }
        let evaluation = self.problem.evaluate(self.target, point);
        self.stats.direct += 1;
        if evaluation.detail.as_ref().is_some_and(|d| d.diverged) {
            self.stats.divergences += 1;
        }
        let verdict = Verdict::from_agreement(evaluation.agree);
        self.cache
            .record(point.clone(), verdict, evaluation.detail.clone())?;
        Ok(ProbeOutcome {
            verdict,
            source: ProbeSource::Direct,
            violations,
            detail: evaluation.detail,
        })
    }
}

impl<P: RegionProblem + ?Sized> MembershipProbe for InferenceProbe<'_, P> {
    fn probe(&mut self, point: &StatePoint) -> Result<bool, SearchError> {
        Ok(self.classify(point)?.verdict.is_valid())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Direct,
    Inferred,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionEntry {
    pub verdict: Verdict,
    pub provenance: Provenance,
    pub detail: Option<DecisionPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    pub target: usize,
    pub axis: usize,
    pub point: StatePoint,
    pub bracket_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisOutcome {
    UniformValid,
    UniformInvalid,
}

/// An axis with no bracket: both bounds gave the same verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisDiagnostic {
    pub target: usize,
    pub axis: usize,
    pub prefix: Vec<f64>,
    pub outcome: AxisOutcome,
}

/// Discrete approximation of V_ε over the feasible grid points of every
/// target, with the boundary points found on the way.
#[derive(Debug, Clone, Default)]
pub struct ValidityRegion {
    entries: BTreeMap<(usize, StatePoint), RegionEntry>,
    boundary: Vec<BoundaryPoint>,
    diagnostics: Vec<AxisDiagnostic>,
    stats: Vec<ProbeStats>,
    /// Grid points where a direct evaluation overrode the interval
    /// classification; always zero for monotone probes.
    overrides: usize,
}

impl ValidityRegion {
    /// Inserts a classified point; a second, contradictory verdict for the
    /// same point is rejected.
    pub fn insert(
        &mut self,
        target: usize,
        point: StatePoint,
        entry: RegionEntry,
    ) -> Result<(), SearchError> {
        match self.entries.get(&(target, point.clone())) {
            Some(existing) if existing.verdict != entry.verdict => Err(SearchError::Config(
                format!("contradictory verdicts for target {target} at {point}"),
            )),
            Some(_) => Ok(()),
            None => {
                self.entries.insert((target, point), entry);
                Ok(())
            }
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &StatePoint, &RegionEntry)> {
        self.entries.iter().map(|((t, p), e)| (*t, p, e))
    }

    pub fn entry(&self, target: usize, point: &StatePoint) -> Option<&RegionEntry> {
        self.entries.get(&(target, point.clone()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Points classified valid, i.e. the members of V_ε.
    pub fn members(&self, target: usize) -> Vec<&StatePoint> {
        self.entries
            .iter()
            .filter(|((t, _), e)| *t == target && e.verdict.is_valid())
            .map(|((_, p), _)| p)
            .collect()
    }

    pub fn boundary(&self) -> &[BoundaryPoint] {
        &self.boundary
    }

    pub fn diagnostics(&self) -> &[AxisDiagnostic] {
        &self.diagnostics
    }

    pub fn stats(&self) -> &[ProbeStats] {
        &self.stats
    }

    pub fn stats_total(&self) -> ProbeStats {
        let mut total = ProbeStats::default();
        for s in &self.stats {
            total.merge(s);
        }
        total
    }

    pub fn overrides(&self) -> usize {
        self.overrides
    }

    fn absorb(&mut self, other: ValidityRegion) {
        self.entries.extend(other.entries);
        self.boundary.extend(other.boundary);
        self.diagnostics.extend(other.diagnostics);
        self.stats.extend(other.stats);
        self.overrides += other.overrides;
    }
}

/// Region plus the experiment caches it was built with, one per target.
#[derive(Debug)]
pub struct SearchRun {
    pub region: ValidityRegion,
    pub caches: Vec<ExperimentCache>,
}

/// Nested region search over every target of `problem`, with fresh caches.
pub fn validity_region_search<P: RegionProblem + ?Sized>(
    problem: &P,
    config: &SearchConfig,
) -> Result<ValidityRegion, SearchError> {
    let caches = fresh_caches(problem, config);
    search_with_caches(problem, config, caches).map(|run| run.region)
}

pub fn fresh_caches<P: RegionProblem + ?Sized>(
    problem: &P,
    config: &SearchConfig,
) -> Vec<ExperimentCache> {
    problem
        .targets()
        .iter()
        .map(|t| {
            let dirs = if config.inference {
                t.directions.clone()
            } else {
                MonotoneDirection::unknown(t.space.len())
            };
            ExperimentCache::new(dirs)
        })
        .collect()
}

/// Nested region search reusing (and returning) per-target caches. Targets
/// are searched independently, in parallel when `config.workers > 1`; the
/// merged result does not depend on the worker count.
pub fn search_with_caches<P: RegionProblem + ?Sized>(
    problem: &P,
    config: &SearchConfig,
    caches: Vec<ExperimentCache>,
) -> Result<SearchRun, SearchError> {
    let targets = problem.targets();
    if caches.len() != targets.len() {
        return Err(SearchError::Config(format!(
            "{} caches supplied for {} targets",
            caches.len(),
            targets.len()
        )));
    }
    for t in targets {
        config.validate(&t.space)?;
        if t.directions.len() != t.space.len() {
            return Err(SearchError::Config(format!(
                "{}: direction count mismatch",
                t.label
            )));
        }
    }

    let jobs: Vec<(usize, ExperimentCache)> = caches.into_iter().enumerate().collect();
    let workers = config.workers.max(1).min(jobs.len().max(1));
    let mut results: Vec<(usize, TargetResult)> = if workers == 1 {
        jobs.into_iter()
            .map(|(i, cache)| (i, search_target(problem, i, config, cache)))
            .collect()
    } else {
        let mut buckets: Vec<Vec<(usize, ExperimentCache)>> =
            (0..workers).map(|_| Vec::new()).collect();
        for (n, job) in jobs.into_iter().enumerate() {
            buckets[n % workers].push(job);
        }
        thread::scope(|s| {
            let handles: Vec<_> = buckets
                .into_iter()
                .map(|bucket| {
                    s.spawn(move || {
                        bucket
                            .into_iter()
                            .map(|(i, cache)| (i, search_target(problem, i, config, cache)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("search worker panicked"))
                .collect()
        })
    };
    results.sort_by_key(|(i, _)| *i);

    let mut region = ValidityRegion::default();
    let mut caches = Vec::with_capacity(results.len());
    let mut exhausted = false;
    for (_, result) in results {
        match result.error {
            None => {}
            Some(SearchError::Budget { .. }) => exhausted = true,
            Some(other) => return Err(other),
        }
        region.absorb(result.region);
        caches.push(result.cache);
    }
    let run = SearchRun { region, caches };
    if exhausted {
        Err(SearchError::PartialResult {
            partial: Box::new(run),
        })
    } else {
        Ok(run)
    }
}

struct TargetResult {
    region: ValidityRegion,
    cache: ExperimentCache,
    error: Option<SearchError>,
}

fn search_target<P: RegionProblem + ?Sized>(
    problem: &P,
    target: usize,
    config: &SearchConfig,
    cache: ExperimentCache,
) -> TargetResult {
    let spec = &problem.targets()[target];
    let mut walker = AxisWalker {
        problem,
        target,
        spec,
        config,
        probe: InferenceProbe::new(problem, target, cache, config.inference, config.max_evals),
        grids: spec
            .space
            .dimensions()
            .iter()
            .zip(&config.step)
            .map(|(d, &s)| grid_values(d, s))
            .collect(),
        classified: Vec::new(),
        region: ValidityRegion::default(),
    };
    let error = walker.walk(0, &mut Vec::new()).err();
    let AxisWalker {
        probe,
        classified,
        mut region,
        ..
    } = walker;
    let stats = probe.stats();
    let cache = probe.into_cache();

    for (coords, valid) in classified {
        let point = spec
            .space
            .point(coords)
            .expect("grid coordinates are finite");
        match problem.violations(target, &point) {
            Ok(v) if v.is_empty() => {}
            Ok(_) => continue,
            Err(e) => {
                return TargetResult {
                    region,
                    cache,
                    error: Some(e.into()),
                }
            }
        }
        let entry = match cache.lookup(&point) {
            Some(record) => {
                if record.verdict.is_valid() != valid {
                    region.overrides += 1;
                }
                RegionEntry {
                    verdict: record.verdict,
                    provenance: Provenance::Direct,
                    detail: record.detail.clone(),
                }
            }
            None => RegionEntry {
                verdict: Verdict::from_agreement(valid),
                provenance: Provenance::Inferred,
                detail: None,
            },
        };
        region
            .insert(target, point, entry)
            .expect("grid points are classified once");
    }
    region.stats.push(stats);
    TargetResult {
        region,
        cache,
        error,
    }
}

struct AxisWalker<'a, P: RegionProblem + ?Sized> {
    problem: &'a P,
    target: usize,
    spec: &'a SearchTarget,
    config: &'a SearchConfig,
    probe: InferenceProbe<'a, P>,
    grids: Vec<Vec<f64>>,
    classified: Vec<(Vec<f64>, bool)>,
    region: ValidityRegion,
}

impl<P: RegionProblem + ?Sized> AxisWalker<'_, P> {
    /// Value held on `axis` while an earlier axis is being searched.
    fn held_value(&self, axis: usize) -> f64 {
        let d = self.spec.space.dimension(axis);
        match self.spec.directions.get(axis) {
            Direction::IncreasingTowardValid => d.upper,
            Direction::DecreasingTowardValid => d.lower,
            Direction::Unknown => d.clamp(self.spec.nominal.get(axis)),
        }
    }

    fn point(&self, prefix: &[f64], axis: usize, value: f64) -> StatePoint {
        let mut coords = prefix.to_vec();
        coords.push(value);
        for later in axis + 1..self.spec.space.len() {
            coords.push(self.held_value(later));
        }
        self.spec.space.point(coords).expect("finite coordinates")
    }

    fn mark_all(&mut self, prefix: &mut Vec<f64>, axis: usize, valid: bool) {
        if axis == self.spec.space.len() {
            self.classified.push((prefix.clone(), valid));
            return;
        }
        for i in 0..self.grids[axis].len() {
            prefix.push(self.grids[axis][i]);
            self.mark_all(prefix, axis + 1, valid);
            prefix.pop();
        }
    }

    fn walk(&mut self, axis: usize, prefix: &mut Vec<f64>) -> Result<(), SearchError> {
        let dim = self.spec.space.dimension(axis).clone();
        let grid = self.grids[axis].clone();
        // Restrict the axis to its feasible span so that a constraint on the
        // favorable side does not look like an invalid endpoint.
        let mut feasible = Vec::with_capacity(grid.len());
        for &g in &grid {
            let p = self.point(prefix, axis, g);
            feasible.push(self.problem.violations(self.target, &p)?.is_empty());
        }
        let (Some(first), Some(last)) = (
            feasible.iter().position(|&f| f),
            feasible.iter().rposition(|&f| f),
        ) else {
            return self.finish_axis(axis, prefix, &grid, &vec![false; grid.len()]);
        };
        let lo = if first == 0 { dim.lower } else { grid[first] };
        let hi = if last + 1 == grid.len() {
            dim.upper
        } else {
            grid[last]
        };
        let lower = self.point(prefix, axis, lo);
        let upper = self.point(prefix, axis, hi);
        let lower_valid = self.probe.probe(&lower)?;
        let upper_valid = if hi > lo {
            self.probe.probe(&upper)?
        } else {
            lower_valid
        };

        let verdicts: Vec<bool> = match (lower_valid, upper_valid) {
            (true, true) | (false, false) => {
                self.region.diagnostics.push(AxisDiagnostic {
                    target: self.target,
                    axis,
                    prefix: prefix.clone(),
                    outcome: if lower_valid {
                        AxisOutcome::UniformValid
                    } else {
                        AxisOutcome::UniformInvalid
                    },
                });
                (0..grid.len())
                    .map(|i| lower_valid && i >= first && i <= last)
                    .collect()
            }
            (true, false) | (false, true) => {
                let (valid_end, invalid_end) = if lower_valid {
                    (&lower, &upper)
                } else {
                    (&upper, &lower)
                };
                let remaining = self
                    .config
                    .max_evals
                    .saturating_sub(self.probe.stats().probes);
                let tolerance = self.config.tolerance[axis];
                let b = find_boundary(
                    valid_end,
                    invalid_end,
                    &mut self.probe,
                    tolerance,
                    remaining,
                )
                .map_err(|e| match e {
                    SearchError::Budget { .. } => SearchError::Budget {
                        budget: self.config.max_evals,
                    },
                    other => other,
                })?;
                self.region.boundary.push(BoundaryPoint {
                    target: self.target,
                    axis,
                    point: b.valid.clone(),
                    bracket_width: b.width(),
                });
                let bv = b.valid.get(axis);
                let bi = b.invalid.get(axis);
                let mut out = Vec::with_capacity(grid.len());
                for (i, &g) in grid.iter().enumerate() {
                    if i < first || i > last {
                        out.push(false);
                        continue;
                    }
                    let on_valid_side = if lower_valid { g <= bv } else { g >= bv };
                    let on_invalid_side = if lower_valid { g >= bi } else { g <= bi };
                    out.push(if on_valid_side {
                        true
                    } else if on_invalid_side {
                        false
                    } else {
                        let p = self.point(prefix, axis, g);
                        self.probe.probe(&p)?
                    });
                }
                out
            }
        };

        self.finish_axis(axis, prefix, &grid, &verdicts)
    }

    fn finish_axis(
        &mut self,
        axis: usize,
        prefix: &mut Vec<f64>,
        grid: &[f64],
        verdicts: &[bool],
    ) -> Result<(), SearchError> {
        let last = axis + 1 == self.spec.space.len();
        for (&g, &valid) in grid.iter().zip(verdicts) {
            prefix.push(g);
            if last {
                self.classified.push((prefix.clone(), valid));
            } else if valid {
                self.walk(axis + 1, prefix)?;
            } else {
                self.mark_all(prefix, axis + 1, false);
            }
            prefix.pop();
        }
        Ok(())
    }
}
