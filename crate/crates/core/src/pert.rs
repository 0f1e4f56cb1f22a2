//! Three-point estimates, activity-on-node networks and the CPM forward /
//! backward pass, plus the normal-approximation completion probability.
//!
//! Networks carry an implicit zero-duration source (preceding every activity
//! without predecessors) and sink (succeeding every activity without
//! successors); they never appear in the activity list or the critical path.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Durations and times are minutes, stored as `f64`.
pub type Minutes = f64;

/// Beyond this magnitude the normal CDF is reported as exactly 0 or 1.
pub const CDF_CLAMP: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PertError {
    #[error("invalid estimate: {0}")]
    InvalidEstimate(String),
    #[error("duplicate activity id `{0}`")]
    DuplicateActivity(String),
    #[error("edge references unknown activity `{0}`")]
    UnknownActivity(String),
    #[error("precedence cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("{what} must be finite, got {value}")]
    NonFinite { what: &'static str, value: f64 },
    #[error("deadline must be non-negative, got {0}")]
    NegativeDeadline(f64),
}

/// Optimistic / most likely / pessimistic duration of one activity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreePointEstimate {
    pub optimistic: Minutes,
    pub most_likely: Minutes,
    pub pessimistic: Minutes,
}

impl ThreePointEstimate {
    pub fn new(
        optimistic: Minutes,
        most_likely: Minutes,
        pessimistic: Minutes,
    ) -> Result<Self, PertError> {
        let est = Self {
            optimistic,
            most_likely,
            pessimistic,
        };
        est.validate()?;
        Ok(est)
    }

    /// A deterministic duration: O = M = P.
    pub fn fixed(minutes: Minutes) -> Result<Self, PertError> {
        Self::new(minutes, minutes, minutes)
    }

    pub fn validate(&self) -> Result<(), PertError> {
        let Self {
            optimistic: o,
            most_likely: m,
            pessimistic: p,
        } = *self;
        for (name, v) in [("optimistic", o), ("most_likely", m), ("pessimistic", p)] {
            if !v.is_finite() {
                return Err(PertError::InvalidEstimate(format!(
                    "{name} must be finite, got {v}"
                )));
            }
        }
        if o < 0.0 {
            return Err(PertError::InvalidEstimate(format!(
                "optimistic must be >= 0, got {o}"
            )));
        }
        if o > m {
            return Err(PertError::InvalidEstimate(format!(
                "optimistic ({o}) exceeds most_likely ({m})"
            )));
        }
        if m > p {
            return Err(PertError::InvalidEstimate(format!(
                "most_likely ({m}) exceeds pessimistic ({p})"
            )));
        }
        Ok(())
    }

    /// (O + 4M + P) / 6, without validation. Written as an offset from M so
    /// that O = M = P yields M exactly.
    pub fn mean(&self) -> Minutes {
        let m = self.most_likely;
        m + ((self.optimistic - m) + (self.pessimistic - m)) / 6.0
    }

    /// ((P - O) / 6)², without validation.
    pub fn spread_variance(&self) -> f64 {
        let sd = (self.pessimistic - self.optimistic) / 6.0;
        sd * sd
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            optimistic: self.optimistic * factor,
            most_likely: self.most_likely * factor,
            pessimistic: self.pessimistic * factor,
        }
    }
}

/// Expected activity time `(O + 4M + P) / 6`.
pub fn expected_time(est: &ThreePointEstimate) -> Result<Minutes, PertError> {
    est.validate()?;
    Ok(est.mean())
}

/// Activity variance `((P - O) / 6)²`.
pub fn activity_variance(est: &ThreePointEstimate) -> Result<f64, PertError> {
    est.validate()?;
    Ok(est.spread_variance())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub id: String,
    pub label: String,
    pub estimate: ThreePointEstimate,
    pub expected_time: Minutes,
    pub variance: f64,
}

impl Activity {
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        estimate: ThreePointEstimate,
    ) -> Result<Self, PertError> {
        Ok(Self {
            id: id.into(),
            label: label.into(),
            expected_time: expected_time(&estimate)?,
            variance: activity_variance(&estimate)?,
            estimate,
        })
    }
}

/// A validated precedence DAG over activities.
#[derive(Debug, Clone, PartialEq)]
pub struct PertNetwork {
    activities: Vec<Activity>,
    edges: Vec<(String, String)>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl PertNetwork {
    pub fn activities(&self) -> &[Activity] {
        &self.activities
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.activities.iter().position(|a| a.id == id)
    }

    pub fn predecessors(&self, idx: usize) -> &[usize] {
        &self.preds[idx]
    }

    pub fn successors(&self, idx: usize) -> &[usize] {
        &self.succs[idx]
    }

    /// Activities attached to the virtual source.
    pub fn starts(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.activities.len()).filter(|&i| self.preds[i].is_empty())
    }

    /// Activities attached to the virtual sink.
    pub fn ends(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.activities.len()).filter(|&i| self.succs[i].is_empty())
    }

    /// Activity indices in a topological order (ties broken by insertion order).
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// A serial chain `a[0] -> a[1] -> ...`.
    pub fn chain(activities: Vec<Activity>) -> Result<Self, PertError> {
        let edges = activities
            .windows(2)
            .map(|w| (w[0].id.clone(), w[1].id.clone()))
            .collect();
        build_network(activities, edges)
    }
}

/// Validates ids and edges and attaches the virtual source / sink.
pub fn build_network(
    activities: Vec<Activity>,
    edges: Vec<(String, String)>,
) -> Result<PertNetwork, PertError> {
    let mut index = BTreeMap::new();
    for (i, a) in activities.iter().enumerate() {
        if !a.expected_time.is_finite() {
            return Err(PertError::NonFinite {
                what: "expected_time",
                value: a.expected_time,
            });
        }
        if index.insert(a.id.as_str(), i).is_some() {
            return Err(PertError::DuplicateActivity(a.id.clone()));
        }
    }

    let n = activities.len();
    let mut preds = vec![Vec::new(); n];
    let mut succs = vec![Vec::new(); n];
    let mut seen = BTreeSet::new();
    for (from, to) in &edges {
        let &u = index
            .get(from.as_str())
            .ok_or_else(|| PertError::UnknownActivity(from.clone()))?;
        let &v = index
            .get(to.as_str())
            .ok_or_else(|| PertError::UnknownActivity(to.clone()))?;
        if u == v {
            return Err(PertError::Cycle(vec![from.clone(), to.clone()]));
        }
        if seen.insert((u, v)) {
            succs[u].push(v);
            preds[v].push(u);
        }
    }

    // Kahn's algorithm; a min-heap keeps the order independent of edge order.
    let mut indegree: Vec<usize> = preds.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut topo = Vec::with_capacity(n);
    while let Some(Reverse(u)) = ready.pop() {
        topo.push(u);
        for &v in &succs[u] {
            indegree[v] -= 1;
            if indegree[v] == 0 {
                ready.push(Reverse(v));
            }
        }
    }
    if topo.len() < n {
        let stuck: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] > 0).collect();
        let cycle = find_cycle(&succs, &stuck);
        return Err(PertError::Cycle(
            cycle
                .into_iter()
                .map(|i| activities[i].id.clone())
                .collect(),
        ));
    }

    Ok(PertNetwork {
        activities,
        edges,
        preds,
        succs,
        topo,
    })
}

/// Walks successor links inside the non-sortable residue until a node repeats.
/// Every node left over by Kahn's algorithm has a residual predecessor, so
/// walking predecessors never dead-ends; the reversed walk is the cycle.
fn find_cycle(succs: &[Vec<usize>], stuck: &BTreeSet<usize>) -> Vec<usize> {
    let n = succs.len();
    let mut preds_in = vec![Vec::new(); n];
    for &u in stuck {
        for &v in &succs[u] {
            if stuck.contains(&v) {
                preds_in[v].push(u);
            }
        }
    }
    let Some(&start) = stuck.iter().next() else {
        return Vec::new();
    };
    let mut position = BTreeMap::new();
    let mut walk = Vec::new();
    let mut cur = start;
    while !position.contains_key(&cur) {
        position.insert(cur, walk.len());
        walk.push(cur);
        cur = *preds_in[cur]
            .iter()
            .min()
            .expect("residual node has a residual predecessor");
    }
    let mut cycle = walk.split_off(position[&cur]);
    cycle.reverse();
    // Rotate so the witness starts at its smallest index.
    if let Some(min_pos) = cycle
        .iter()
        .enumerate()
        .min_by_key(|(_, &v)| v)
        .map(|(i, _)| i)
    {
        cycle.rotate_left(min_pos);
    }
    cycle
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySchedule {
    pub id: String,
    pub expected_time: Minutes,
    pub variance: f64,
    pub earliest_start: Minutes,
    pub earliest_finish: Minutes,
    pub latest_start: Minutes,
    pub latest_finish: Minutes,
    pub total_float: Minutes,
}

impl ActivitySchedule {
    pub fn is_critical(&self, tolerance: f64) -> bool {
        self.total_float <= tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleAnalysis {
    /// In the network's activity order.
    pub activities: Vec<ActivitySchedule>,
    pub project_duration: Minutes,
    /// Lexicographically smallest zero-float source-to-sink path.
    pub critical_path: Vec<String>,
    /// Every zero-float activity, sorted by id.
    pub critical_activities: Vec<String>,
    pub critical_variance: f64,
    pub std_dev: Minutes,
}

impl ScheduleAnalysis {
    pub fn activity(&self, id: &str) -> Option<&ActivitySchedule> {
        self.activities.iter().find(|a| a.id == id)
    }
}

/// Float tolerance relative to the project's time scale.
pub fn float_tolerance(duration: Minutes) -> f64 {
    1e-9 * duration.abs().max(1.0)
}

/// Forward / backward pass, total floats, critical path and its variance.
pub fn analyze(network: &PertNetwork) -> ScheduleAnalysis {
    let n = network.activities.len();
    let dur: Vec<f64> = network.activities.iter().map(|a| a.expected_time).collect();

    let mut es = vec![0.0; n];
    let mut ef = vec![0.0; n];
    for &u in &network.topo {
        es[u] = network.preds[u].iter().map(|&p| ef[p]).fold(0.0, f64::max);
        ef[u] = es[u] + dur[u];
    }
    let project_duration = ef.iter().copied().fold(0.0, f64::max);

    let mut lf = vec![project_duration; n];
    let mut ls = vec![0.0; n];
    for &u in network.topo.iter().rev() {
        lf[u] = network.succs[u]
            .iter()
            .map(|&s| ls[s])
            .fold(project_duration, f64::min);
        ls[u] = lf[u] - dur[u];
    }

    let tol = float_tolerance(project_duration);
    let float: Vec<f64> = (0..n).map(|i| (ls[i] - es[i]).max(0.0)).collect();
    let zero_float: Vec<bool> = float.iter().map(|&f| f <= tol).collect();

    let critical_idx = critical_path(network, &es, &ef, &zero_float, project_duration, tol);
    let critical_variance: f64 = critical_idx
        .iter()
        .map(|&i| network.activities[i].variance)
        .sum();

    let mut critical_activities: Vec<String> = (0..n)
        .filter(|&i| zero_float[i])
        .map(|i| network.activities[i].id.clone())
        .collect();
    critical_activities.sort();

    ScheduleAnalysis {
        activities: (0..n)
            .map(|i| ActivitySchedule {
                id: network.activities[i].id.clone(),
                expected_time: dur[i],
                variance: network.activities[i].variance,
                earliest_start: es[i],
                earliest_finish: ef[i],
                latest_start: ls[i],
                latest_finish: lf[i],
                total_float: float[i],
            })
            .collect(),
        project_duration,
        critical_path: critical_idx
            .iter()
            .map(|&i| network.activities[i].id.clone())
            .collect(),
        critical_activities,
        critical_variance,
        std_dev: critical_variance.sqrt(),
    }
}

/// Chooses the lexicographically smallest (by id sequence) path through tight,
/// zero-float activities from the source to the sink.
fn critical_path(
    network: &PertNetwork,
    es: &[f64],
    ef: &[f64],
    zero_float: &[bool],
    duration: f64,
    tol: f64,
) -> Vec<usize> {
    let n = zero_float.len();
    if n == 0 {
        return Vec::new();
    }
    let by_id = |v: &mut Vec<usize>| {
        v.sort_by(|&a, &b| network.activities[a].id.cmp(&network.activities[b].id))
    };

    // reaches_sink[u]: a tight zero-float path from u ends at a sink activity.
    let mut reaches_sink = vec![false; n];
    for &u in network.topo.iter().rev() {
        if !zero_float[u] {
            continue;
        }
        reaches_sink[u] = if network.succs[u].is_empty() {
            (ef[u] - duration).abs() <= tol
        } else {
            network.succs[u]
                .iter()
                .any(|&s| reaches_sink[s] && (es[s] - ef[u]).abs() <= tol)
        };
    }

    let mut frontier: Vec<usize> = network
        .starts()
        .filter(|&u| reaches_sink[u] && es[u].abs() <= tol)
        .collect();
    let mut path = Vec::new();
    loop {
        by_id(&mut frontier);
        let Some(&next) = frontier.first() else { break };
        path.push(next);
        frontier = network.succs[next]
            .iter()
            .copied()
            .filter(|&s| reaches_sink[s] && (es[s] - ef[next]).abs() <= tol)
            .collect();
    }
    path
}

/// Standard normal CDF.
///
/// Hart's double-precision rational approximation (as popularised by West);
/// absolute error is well below 1e-12 on the supported range. Inputs with
/// `|z| > 8` clamp to exactly 0 or 1.
pub fn normal_cdf(z: f64) -> Result<f64, PertError> {
    if !z.is_finite() {
        return Err(PertError::NonFinite {
            what: "z",
            value: z,
        });
    }
    if z > CDF_CLAMP {
        return Ok(1.0);
    }
    if z < -CDF_CLAMP {
        return Ok(0.0);
    }
    let x = z.abs();
    let e = (-x * x / 2.0).exp();
    let tail = if x < 7.071_067_811_865_47 {
        let num = horner(
            x,
            &[
                3.526_249_659_989_11e-2,
                0.700_383_064_443_688,
                6.373_962_203_531_65,
                33.912_866_078_383,
                112.079_291_497_871,
                221.213_596_169_931,
                220.206_867_912_376,
            ],
        );
        let den = horner(
            x,
            &[
                8.838_834_764_831_84e-2,
                1.755_667_163_182_64,
                16.064_177_579_207,
                86.780_732_202_946_1,
                296.564_248_779_674,
                637.333_633_378_831,
                793.826_512_519_948,
                440.413_735_824_752,
            ],
        );
        e * num / den
    } else {
        let mut cf = x + 0.65;
        for k in [4.0, 3.0, 2.0, 1.0] {
            cf = x + k / cf;
        }
        e / cf / 2.506_628_274_631
    };
    Ok(if z > 0.0 { 1.0 - tail } else { tail })
}

fn horner(x: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionProbability {
    pub deadline: Minutes,
    /// `None` when the critical path has zero spread.
    pub z_value: Option<f64>,
    pub probability: f64,
}

impl fmt::Display for CompletionProbability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.z_value {
            Some(z) => write!(
                f,
                "P(T <= {}) = {:.4} (z = {:.4})",
                self.deadline, self.probability, z
            ),
            None => write!(
                f,
                "P(T <= {}) = {} (deterministic)",
                self.deadline, self.probability
            ),
        }
    }
}

/// Probability that the project finishes by `deadline`, treating its duration
/// as normal with mean = critical-path duration and the critical-path SD.
pub fn completion_probability(
    analysis: &ScheduleAnalysis,
    deadline: Minutes,
) -> Result<CompletionProbability, PertError> {
    if !deadline.is_finite() {
        return Err(PertError::NonFinite {
            what: "deadline",
            value: deadline,
        });
    }
    if deadline < 0.0 {
        return Err(PertError::NegativeDeadline(deadline));
    }
    if analysis.std_dev > 0.0 {
        let z = (deadline - analysis.project_duration) / analysis.std_dev;
        let probability = if z.is_finite() {
            normal_cdf(z)?
        } else if z > 0.0 {
            1.0
        } else {
            0.0
        };
        Ok(CompletionProbability {
            deadline,
            z_value: Some(z),
            probability,
        })
    } else {
        let on_time = analysis.project_duration <= deadline;
        Ok(CompletionProbability {
            deadline,
            z_value: None,
            probability: if on_time { 1.0 } else { 0.0 },
        })
    }
}
