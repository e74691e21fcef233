//! Finite-horizon estimation of the persistent interaction graph and the
//! graph-theoretic facts the rate certificates condition on: directed
//! spanning tree, strong connectivity, diameter.

use crate::error::{Error, Result};
use crate::schedule::{InfluenceArc, WeightSchedule};
use serde::Serialize;
use std::collections::BTreeSet;

/// A directed graph on `{0, .., n-1}` given by its influence arcs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArcSet {
    n: usize,
    arcs: BTreeSet<InfluenceArc>,
}

impl ArcSet {
    pub fn new(n: usize, arcs: impl IntoIterator<Item = InfluenceArc>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (from, to) in arcs {
            if from >= n || to >= n {
                return Err(Error::InvalidArc {
                    from: from + 1,
                    to: to + 1,
                    n,
                });
            }
            if from != to {
                set.insert((from, to));
            }
        }
        Ok(Self { n, arcs: set })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn arcs(&self) -> impl Iterator<Item = InfluenceArc> + '_ {
        self.arcs.iter().copied()
    }

    pub fn contains(&self, arc: InfluenceArc) -> bool {
        self.arcs.contains(&arc)
    }

    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    /// Complete digraph without self-loops.
    pub fn complete(n: usize) -> Self {
        let mut arcs = BTreeSet::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    arcs.insert((i, j));
                }
            }
        }
        Self { n, arcs }
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.n];
        for &(from, to) in &self.arcs {
            succ[from].push(to);
        }
        succ
    }

    /// BFS distances from `root` along influence direction; `None` where
    /// unreachable.
    fn distances_from(&self, root: usize, succ: &[Vec<usize>]) -> Vec<Option<u64>> {
        let mut dist = vec![None; self.n];
        dist[root] = Some(0);
        let mut frontier = vec![root];
        let mut d = 0u64;
        while !frontier.is_empty() {
            d += 1;
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in &succ[u] {
                    if dist[v].is_none() {
                        dist[v] = Some(d);
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
        dist
    }
}

/// Whether some node reaches every other along influence arcs, and all such
/// roots.
pub fn spanning_tree_roots(graph: &ArcSet) -> (bool, Vec<usize>) {
    let succ = graph.successors();
    let roots: Vec<usize> = (0..graph.n())
        .filter(|&r| {
            graph
                .distances_from(r, &succ)
                .iter()
                .all(|d| d.is_some())
        })
        .collect();
    (!roots.is_empty(), roots)
}

pub fn has_spanning_tree(graph: &ArcSet) -> bool {
    spanning_tree_roots(graph).0
}

/// BFS eccentricity of `root`, or `None` when it does not reach every node.
pub fn eccentricity(graph: &ArcSet, root: usize) -> Option<u64> {
    let succ = graph.successors();
    let dist = graph.distances_from(root, &succ);
    dist.iter().copied().collect::<Option<Vec<_>>>().map(|d| {
        d.into_iter().max().unwrap_or(0)
    })
}

pub fn is_strongly_connected(graph: &ArcSet) -> bool {
    let (_, roots) = spanning_tree_roots(graph);
    roots.len() == graph.n()
}

/// Diameter of the reachable structure: the largest BFS eccentricity among
/// valid roots. On a strongly connected graph this is the usual directed
/// diameter. Errors when no spanning tree exists.
pub fn diameter(graph: &ArcSet) -> Result<u64> {
    let (ok, roots) = spanning_tree_roots(graph);
    if !ok {
        return Err(Error::NoSpanningTree);
    }
    if graph.n() == 1 {
        return Ok(0);
    }
    let succ = graph.successors();
    Ok(roots
        .iter()
        .map(|&r| {
            graph
                .distances_from(r, &succ)
                .iter()
                .map(|d| d.expect("root reaches all"))
                .max()
                .unwrap_or(0)
        })
        .max()
        .unwrap_or(0))
}

/// Finite-prefix classification of an arc's weight stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcLabel {
    Persistent,
    Vanishing,
    Undetermined,
}

/// Classification thresholds; persistence is not decidable from a finite
/// prefix, so every report carries the horizon and thresholds it used.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClassifierThresholds {
    /// An arc is labeled persistent when its mass over the trailing half of
    /// the horizon exceeds this.
    pub persistent_min_recent_mass: f64,
    /// An arc is labeled vanishing when its trailing-half mass falls below
    /// this.
    pub vanishing_max_recent_mass: f64,
}

impl ClassifierThresholds {
    pub fn for_floor(floor: Option<f64>) -> Self {
        Self {
            persistent_min_recent_mass: match floor {
                Some(f) => 0.5 * f,
                None => 0.05,
            },
            vanishing_max_recent_mass: 1e-6,
        }
    }
}

/// Finite-horizon partial sums per arc plus labels.
#[derive(Debug, Clone)]
pub struct PersistentGraphEstimate {
    n: usize,
    pub t_start: u64,
    pub horizon: u64,
    /// Row-major, entry `(i, j)`: accumulated `a_ij`, i.e. mass of the
    /// influence arc `(j, i)`.
    totals: Vec<f64>,
    /// Same layout, restricted to the trailing half `[mid, horizon]`.
    recent: Vec<f64>,
    pub thresholds: ClassifierThresholds,
    /// Ground-truth persistent arcs when the schedule knows them.
    pub declared: Option<ArcSet>,
}

impl PersistentGraphEstimate {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn arc_mass(&self, arc: InfluenceArc) -> f64 {
        let (from, to) = arc;
        self.totals[to * self.n + from]
    }

    pub fn arc_recent_mass(&self, arc: InfluenceArc) -> f64 {
        let (from, to) = arc;
        self.recent[to * self.n + from]
    }

    /// Label from partial sums alone, ignoring any declared ground truth.
    pub fn heuristic_label(&self, arc: InfluenceArc) -> ArcLabel {
        let recent = self.arc_recent_mass(arc);
        if recent > self.thresholds.persistent_min_recent_mass {
            ArcLabel::Persistent
        } else if recent < self.thresholds.vanishing_max_recent_mass {
            ArcLabel::Vanishing
        } else {
            ArcLabel::Undetermined
        }
    }

    /// Declared ground truth when present, heuristic otherwise.
    pub fn label(&self, arc: InfluenceArc) -> ArcLabel {
        match &self.declared {
            Some(set) => {
                if set.contains(arc) {
                    ArcLabel::Persistent
                } else {
                    ArcLabel::Vanishing
                }
            }
            None => self.heuristic_label(arc),
        }
    }

    /// Arcs labeled persistent, as a graph.
    pub fn persistent_graph(&self) -> ArcSet {
        let arcs = self.off_diagonal_arcs().filter(|&a| self.label(a) == ArcLabel::Persistent);
        ArcSet::new(self.n, arcs).expect("arcs in range")
    }

    pub fn off_diagonal_arcs(&self) -> impl Iterator<Item = InfluenceArc> + '_ {
        let n = self.n;
        (0..n).flat_map(move |from| {
            (0..n)
                .filter(move |&to| to != from)
                .map(move |to| (from, to))
        })
    }
}

/// Accumulates arc mass over `[t0, horizon]` and classifies each arc.
pub fn accumulate(schedule: &WeightSchedule, horizon: u64) -> Result<PersistentGraphEstimate> {
    let t0 = schedule.t0();
    if horizon < t0 {
        return Err(Error::TimeBeforeStart { t: horizon, t0 });
    }
    let n = schedule.n();
    let mut totals = vec![0.0; n * n];
    let mut recent = vec![0.0; n * n];
    let mid = t0 + (horizon - t0) / 2;
    for t in t0..=horizon {
        let m = schedule.matrix_at(t)?;
        for i in 0..n {
            for j in 0..n {
                let w = m.get(i, j);
                totals[i * n + j] += w;
                if t >= mid {
                    recent[i * n + j] += w;
                }
            }
        }
    }
    let floor = schedule.self_weight_floor().map(|f| f.value);
    let declared = schedule
        .known_persistent_arcs()
        .map(|arcs| ArcSet::new(n, arcs).expect("generator arcs in range"));
    Ok(PersistentGraphEstimate {
        n,
        t_start: t0,
        horizon,
        totals,
        recent,
        thresholds: ClassifierThresholds::for_floor(floor),
        declared,
    })
}

/// How a transient tail time was established.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailTime {
    /// From a closed-form tail of the schedule's transient arcs.
    Exact { time: u64 },
    /// First time after which the remaining non-persistent mass inside the
    /// scanned horizon is within the budget; the true infinite tail may be
    /// larger.
    HorizonLimited { time: u64, scanned_to: u64 },
}

impl TailTime {
    pub fn time(&self) -> u64 {
        match *self {
            TailTime::Exact { time } | TailTime::HorizonLimited { time, .. } => time,
        }
    }
}

/// Earliest time from which every arc outside `persistent` has remaining
/// mass at most `budget`. Uses the schedule's closed-form tail when
/// available, otherwise scans up to `scan_horizon` and flags the result as
/// horizon-limited.
pub fn tail_time(
    schedule: &WeightSchedule,
    persistent: &ArcSet,
    budget: f64,
    scan_horizon: u64,
) -> Result<TailTime> {
    if let Some(time) = schedule.transient_tail_time(budget) {
        return Ok(TailTime::Exact { time });
    }
    let t0 = schedule.t0();
    let n = schedule.n();
    let end = match schedule.horizon() {
        Some(h) => h.min(scan_horizon),
        None => scan_horizon,
    };
    if end < t0 {
        return Err(Error::TimeBeforeStart { t: end, t0 });
    }
    // Per-step non-persistent mass, then suffix sums scanned backward.
    let mut step_mass = Vec::with_capacity((end - t0 + 1) as usize);
    for t in t0..=end {
        let m = schedule.matrix_at(t)?;
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j && !persistent.contains((j, i)) {
                    mass += m.get(i, j);
                }
            }
        }
        step_mass.push(mass);
    }
    let mut suffix = 0.0;
    let mut time = end + 1;
    for (idx, &mass) in step_mass.iter().enumerate().rev() {
        if suffix + mass > budget {
            break;
        }
        suffix += mass;
        time = t0 + idx as u64;
    }
    Ok(TailTime::HorizonLimited {
        time,
        scanned_to: end,
    })
}
