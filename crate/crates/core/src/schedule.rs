//! Sources of the time-varying weight matrix `A(t)`: built-in example
//! schedules, seeded balanced generators, explicit matrix lists loaded from
//! files, and the L-step window lift.
//!
//! Schedules are immutable and cheap to clone; `matrix_at` is pure, so the
//! same `(schedule, t)` always yields the same matrix, including for seeded
//! random generators.

use crate::error::{Error, Result};
use crate::matrix::{product_chain, StochasticMatrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

/// Directed influence arc `(from, to)`: node `from` influences node `to`,
/// i.e. the weight sits at matrix entry `(to, from)`.
pub type InfluenceArc = (usize, usize);

/// How a schedule's self-weight floor was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FloorProvenance {
    /// Guaranteed by construction (generator parameter or exact minimum of a
    /// finite matrix family covering all times).
    Declared,
    /// Minimum diagonal observed over a finite horizon; reported, not assumed.
    Inferred,
}

/// A positive lower bound on all diagonal weights, with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfWeightFloor {
    pub value: f64,
    pub provenance: FloorProvenance,
}

#[derive(Debug)]
enum Kind {
    Identity {
        n: usize,
        t0: u64,
    },
    Periodic {
        t0: u64,
        matrices: Vec<StochasticMatrix>,
    },
    Explicit {
        t0: u64,
        matrices: Vec<StochasticMatrix>,
        floor: Option<SelfWeightFloor>,
    },
    /// Three-agent switching family whose positive weights approach 0 and 1,
    /// so no uniform self-weight floor exists.
    ThreeAgentExample,
    ArcBalanced(ArcBalancedGen),
    CutBalanced(CutBalancedGen),
    Lifted {
        base: WeightSchedule,
        window: u64,
    },
}

/// Source of `A(t)` for each time `t >= t0`.
#[derive(Debug, Clone)]
pub struct WeightSchedule {
    kind: Arc<Kind>,
}

impl WeightSchedule {
    fn new(kind: Kind) -> Self {
        Self { kind: Arc::new(kind) }
    }

    /// `A(t) = I` for every `t >= t0`.
    pub fn identity(n: usize, t0: u64) -> Self {
        Self::new(Kind::Identity { n, t0 })
    }

    /// Cycles through the given matrices: `A(t) = M[(t - t0) mod len]`.
    pub fn periodic(matrices: Vec<StochasticMatrix>, t0: u64) -> Result<Self> {
        let first = matrices.first().ok_or(Error::EmptyMatrixList)?;
        let n = first.n();
        for m in &matrices {
            if m.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.n(),
                });
            }
        }
        Ok(Self::new(Kind::Periodic { t0, matrices }))
    }

    /// `A(t) = M` for every `t >= t0`.
    pub fn constant(matrix: StochasticMatrix, t0: u64) -> Self {
        Self::new(Kind::Periodic {
            t0,
            matrices: vec![matrix],
        })
    }

    /// Finite list of matrices for `t = t0, .., t0 + len - 1`. A declared
    /// self-weight floor is validated against every diagonal.
    pub fn explicit(
        matrices: Vec<StochasticMatrix>,
        t0: u64,
        floor: Option<SelfWeightFloor>,
    ) -> Result<Self> {
        let first = matrices.first().ok_or(Error::EmptyMatrixList)?;
        let n = first.n();
        for m in &matrices {
            if m.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.n(),
                });
            }
            if let Some(f) = floor {
                for i in 0..n {
                    if m.get(i, i) < f.value {
                        return Err(Error::DiagonalBelowFloor {
                            node: i + 1,
                            value: m.get(i, i),
                            floor: f.value,
                        });
                    }
                }
            }
        }
        Ok(Self::new(Kind::Explicit {
            t0,
            matrices,
            floor,
        }))
    }

    /// The three-agent counterexample schedule (`paper-sec5` in the CLI):
    /// starts at `t0 = 1`, switches among three graphs with period 3, is
    /// windowed cut-balanced with ratio 2 at window 1, yet keeps a positive
    /// spread forever because the self-weights are not uniformly bounded
    /// away from zero.
    pub fn three_agent_counterexample() -> Self {
        Self::new(Kind::ThreeAgentExample)
    }

    /// The four-agent alternating schedule (`paper-sec4` in the CLI) used to
    /// demonstrate the sorted-state transform; every diagonal equals 1/2.
    pub fn four_agent_sorted_example() -> Self {
        let h = 0.5;
        let even = StochasticMatrix::from_rows(vec![
            vec![h, 0.0, h, 0.0],
            vec![0.0, h, 0.0, h],
            vec![h, 0.0, h, 0.0],
            vec![0.0, h, 0.0, h],
        ])
        .expect("static matrix");
        let odd = StochasticMatrix::from_rows(vec![
            vec![h, h, 0.0, 0.0],
            vec![h, h, 0.0, 0.0],
            vec![0.0, 0.0, h, h],
            vec![0.0, 0.0, h, h],
        ])
        .expect("static matrix");
        Self::new(Kind::Periodic {
            t0: 0,
            matrices: vec![even, odd],
        })
    }

    pub fn arc_balanced(config: ArcBalancedConfig) -> Result<Self> {
        Ok(Self::new(Kind::ArcBalanced(ArcBalancedGen::new(config)?)))
    }

    pub fn cut_balanced(config: CutBalancedConfig) -> Result<Self> {
        Ok(Self::new(Kind::CutBalanced(CutBalancedGen::new(config)?)))
    }

    /// The L-step window schedule `B(t) = A((t+1)L - 1 + t0) .. A(tL + t0)`,
    /// indexed from 0. Its self-weight floor is the base floor to the L-th
    /// power.
    pub fn lift(&self, window: u64) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidWindow);
        }
        Ok(Self::new(Kind::Lifted {
            base: self.clone(),
            window,
        }))
    }

    pub fn n(&self) -> usize {
        match &*self.kind {
            Kind::Identity { n, .. } => *n,
            Kind::Periodic { matrices, .. } | Kind::Explicit { matrices, .. } => {
                matrices[0].n()
            }
            Kind::ThreeAgentExample => 3,
            Kind::ArcBalanced(g) => g.n,
            Kind::CutBalanced(g) => g.n,
            Kind::Lifted { base, .. } => base.n(),
        }
    }

    pub fn t0(&self) -> u64 {
        match &*self.kind {
            Kind::Identity { t0, .. }
            | Kind::Periodic { t0, .. }
            | Kind::Explicit { t0, .. } => *t0,
            Kind::ThreeAgentExample => 1,
            Kind::ArcBalanced(g) => g.t0,
            Kind::CutBalanced(g) => g.t0,
            Kind::Lifted { .. } => 0,
        }
    }

    /// Last valid time, or `None` for unbounded schedules.
    pub fn horizon(&self) -> Option<u64> {
        match &*self.kind {
            Kind::Explicit { t0, matrices, .. } => Some(t0 + matrices.len() as u64 - 1),
            Kind::Lifted { base, window } => base.horizon().map(|h| {
                let steps = h + 1 - base.t0();
                (steps / window).saturating_sub(1)
            }),
            _ => None,
        }
    }

    /// Guaranteed (or, for finite sources, exactly measured) lower bound on
    /// all diagonal weights over the schedule's whole domain. `None` when no
    /// positive uniform bound exists or is known.
    pub fn self_weight_floor(&self) -> Option<SelfWeightFloor> {
        match &*self.kind {
            Kind::Identity { .. } => Some(SelfWeightFloor {
                value: 1.0,
                provenance: FloorProvenance::Declared,
            }),
            Kind::Periodic { matrices, .. } => {
                let m = matrices
                    .iter()
                    .map(StochasticMatrix::min_diagonal)
                    .fold(f64::INFINITY, f64::min);
                (m > 0.0).then_some(SelfWeightFloor {
                    value: m,
                    provenance: FloorProvenance::Declared,
                })
            }
            Kind::Explicit { matrices, floor, .. } => floor.or_else(|| {
                let m = matrices
                    .iter()
                    .map(StochasticMatrix::min_diagonal)
                    .fold(f64::INFINITY, f64::min);
                (m > 0.0).then_some(SelfWeightFloor {
                    value: m,
                    provenance: FloorProvenance::Inferred,
                })
            }),
            Kind::ThreeAgentExample => None,
            Kind::ArcBalanced(g) => Some(SelfWeightFloor {
                value: g.min_self_weight,
                provenance: FloorProvenance::Declared,
            }),
            Kind::CutBalanced(g) => Some(SelfWeightFloor {
                value: g.min_self_weight,
                provenance: FloorProvenance::Declared,
            }),
            Kind::Lifted { base, window } => {
                base.self_weight_floor().map(|f| SelfWeightFloor {
                    value: f.value.powi(*window as i32),
                    provenance: f.provenance,
                })
            }
        }
    }

    fn check_time(&self, t: u64) -> Result<()> {
        let t0 = self.t0();
        if t < t0 {
            return Err(Error::TimeBeforeStart { t, t0 });
        }
        if let Some(h) = self.horizon() {
            if t > h {
                return Err(Error::HorizonExceeded { t, horizon: h });
            }
        }
        Ok(())
    }

    /// The weight matrix at time `t`.
    pub fn matrix_at(&self, t: u64) -> Result<StochasticMatrix> {
        self.check_time(t)?;
        match &*self.kind {
            Kind::Identity { n, .. } => Ok(StochasticMatrix::identity(*n)),
            Kind::Periodic { t0, matrices } => {
                let idx = ((t - t0) % matrices.len() as u64) as usize;
                Ok(matrices[idx].clone())
            }
            Kind::Explicit { t0, matrices, .. } => Ok(matrices[(t - t0) as usize].clone()),
            Kind::ThreeAgentExample => Ok(three_agent_matrix(t)),
            Kind::ArcBalanced(g) => Ok(g.matrix_at(t)),
            Kind::CutBalanced(g) => Ok(g.matrix_at(t)),
            Kind::Lifted { base, window } => {
                let start = t * window + base.t0();
                let mut factors = Vec::with_capacity(*window as usize);
                for u in (0..*window).rev() {
                    factors.push(base.matrix_at(start + u)?);
                }
                product_chain(&factors)
            }
        }
    }

    /// Ground-truth persistent arcs when the source knows them by
    /// construction; `None` for explicit/file sources, where only
    /// finite-horizon estimation is possible.
    pub fn known_persistent_arcs(&self) -> Option<BTreeSet<InfluenceArc>> {
        match &*self.kind {
            Kind::Identity { .. } => Some(BTreeSet::new()),
            Kind::Periodic { matrices, .. } => {
                let n = matrices[0].n();
                let mut arcs = BTreeSet::new();
                for m in matrices {
                    for i in 0..n {
                        for j in 0..n {
                            if i != j && m.get(i, j) > 0.0 {
                                arcs.insert((j, i));
                            }
                        }
                    }
                }
                Some(arcs)
            }
            Kind::Explicit { .. } => None,
            Kind::ThreeAgentExample => Some(
                [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)]
                    .into_iter()
                    .collect(),
            ),
            Kind::ArcBalanced(g) => Some(g.persistent_arcs.iter().copied().collect()),
            Kind::CutBalanced(g) => Some(g.persistent_arc_set()),
            Kind::Lifted { base, .. } => base.known_persistent_arcs(),
        }
    }

    /// Earliest time from which the total remaining weight of every
    /// non-persistent arc is at most `budget`, when that tail is known in
    /// closed form. `None` means only horizon-limited scanning can estimate
    /// it.
    pub fn transient_tail_time(&self, budget: f64) -> Option<u64> {
        match &*self.kind {
            Kind::Identity { t0, .. } | Kind::Periodic { t0, .. } => Some(*t0),
            Kind::ThreeAgentExample => Some(1),
            Kind::ArcBalanced(g) => Some(g.tail_time(budget)),
            Kind::CutBalanced(g) => Some(g.tail_time(budget)),
            Kind::Explicit { .. } => None,
            Kind::Lifted { .. } => None,
        }
    }

    /// Lower bound on the mass every persistent arc places in each window,
    /// available for the balanced generators.
    pub fn window_mass_floor(&self) -> Option<f64> {
        match &*self.kind {
            Kind::ArcBalanced(g) => Some(g.base_weight),
            Kind::CutBalanced(g) => Some(g.base_weight),
            _ => None,
        }
    }
}

/// Three-agent counterexample matrices, defined directly from the printed
/// closed forms; time starts at 1 and the family has period 3 in the graph
/// pattern with weights depending on t itself.
fn three_agent_matrix(t: u64) -> StochasticMatrix {
    let rel = t - 1;
    let phase = rel % 3;
    let tf = t as f64;
    let inv = 1.0 / tf;
    let inv2 = 1.0 / (tf * tf);
    let rows = match phase {
        0 => vec![
            vec![inv, 1.0 - inv, 0.0],
            vec![1.0 - inv2, inv2, 0.0],
            vec![0.0, 0.0, 1.0],
        ],
        1 => vec![
            vec![inv2, 0.0, 1.0 - inv2],
            vec![0.0, 1.0, 0.0],
            vec![1.0 - inv, 0.0, inv],
        ],
        _ => vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, inv, 1.0 - inv],
            vec![0.0, 1.0 - inv2, inv2],
        ],
    };
    StochasticMatrix::from_rows(rows).expect("closed-form rows are stochastic")
}

fn validate_arc(arc: InfluenceArc, n: usize) -> Result<()> {
    let (from, to) = arc;
    if from >= n || to >= n || from == to {
        return Err(Error::InvalidArc {
            from: from + 1,
            to: to + 1,
            n,
        });
    }
    Ok(())
}

/// Per-cycle weights for one slot, drawn from a stream derived from the seed
/// and the cycle index so that any time can be regenerated independently.
fn cycle_draws(seed: u64, cycle: u64, count: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cycle.wrapping_add(1));
    (0..count).map(|_| rng.random_range(lo..=hi)).collect()
}

/// Generator for schedules satisfying the windowed arc-balance condition:
/// every persistent arc fires exactly once per length-`window` cycle at a
/// fixed phase, with per-cycle weights drawn from `[w, ratio_bound * w]`.
/// Any window of the schedule therefore contains exactly one firing of every
/// persistent arc and all pairwise mass ratios stay within `ratio_bound`,
/// while single instants are typically unbalanced. Transient arcs decay
/// geometrically (factor 1/2 per cycle) and stop after `transient_cycles`.
#[derive(Debug, Clone)]
pub struct ArcBalancedConfig {
    pub n: usize,
    pub t0: u64,
    pub min_self_weight: f64,
    pub ratio_bound: f64,
    pub window: u64,
    pub seed: u64,
    /// Persistent influence arcs; must be nonempty.
    pub persistent_arcs: Vec<InfluenceArc>,
    pub transient_arcs: Vec<InfluenceArc>,
    pub transient_cycles: u64,
}

impl ArcBalancedConfig {
    /// Star rooted at node 0 with one decaying transient arc back to the
    /// root: the smallest family with a spanning tree that is not strongly
    /// connected.
    pub fn star(n: usize, seed: u64) -> Self {
        Self {
            n,
            t0: 0,
            min_self_weight: 0.4,
            ratio_bound: 2.0,
            window: 2,
            seed,
            persistent_arcs: (1..n).map(|i| (0, i)).collect(),
            transient_arcs: if n >= 2 { vec![(1, 0)] } else { vec![] },
            transient_cycles: 40,
        }
    }
}

#[derive(Debug)]
struct ArcBalancedGen {
    n: usize,
    t0: u64,
    min_self_weight: f64,
    ratio_bound: f64,
    window: u64,
    seed: u64,
    persistent_arcs: Vec<InfluenceArc>,
    persistent_phases: Vec<u64>,
    transient_arcs: Vec<InfluenceArc>,
    transient_phases: Vec<u64>,
    transient_cycles: u64,
    base_weight: f64,
    transient_weight: f64,
}

impl ArcBalancedGen {
    fn new(cfg: ArcBalancedConfig) -> Result<Self> {
        if cfg.window == 0 {
            return Err(Error::InvalidWindow);
        }
        if !(0.0 < cfg.min_self_weight && cfg.min_self_weight < 1.0) {
            return Err(Error::InvalidSelfWeightFloor(cfg.min_self_weight));
        }
        if cfg.ratio_bound < 1.0 {
            return Err(Error::InvalidRatioBound(cfg.ratio_bound));
        }
        if cfg.persistent_arcs.is_empty() {
            return Err(Error::EmptyArcSet);
        }
        for &a in cfg.persistent_arcs.iter().chain(&cfg.transient_arcs) {
            validate_arc(a, cfg.n)?;
        }
        let persistent_phases: Vec<u64> = (0..cfg.persistent_arcs.len())
            .map(|i| i as u64 % cfg.window)
            .collect();
        let transient_phases: Vec<u64> = (0..cfg.transient_arcs.len())
            .map(|i| (cfg.persistent_arcs.len() + i) as u64 % cfg.window)
            .collect();

        // Row capacity: at each (receiving row, phase) the off-diagonal mass
        // must leave at least min_self_weight for the diagonal. Transient
        // weights are capped by the persistent base weight, so counting every
        // arc at the maximal persistent weight is a safe bound.
        let mut max_count = 1usize;
        for phase in 0..cfg.window {
            let mut counts = vec![0usize; cfg.n];
            for (idx, &(_, to)) in cfg.persistent_arcs.iter().enumerate() {
                if persistent_phases[idx] == phase {
                    counts[to] += 1;
                }
            }
            for (idx, &(_, to)) in cfg.transient_arcs.iter().enumerate() {
                if transient_phases[idx] == phase {
                    counts[to] += 1;
                }
            }
            max_count = max_count.max(counts.iter().copied().max().unwrap_or(0));
        }
        let base_weight =
            (1.0 - cfg.min_self_weight) / (cfg.ratio_bound * max_count as f64);
        Ok(Self {
            n: cfg.n,
            t0: cfg.t0,
            min_self_weight: cfg.min_self_weight,
            ratio_bound: cfg.ratio_bound,
            window: cfg.window,
            seed: cfg.seed,
            persistent_arcs: cfg.persistent_arcs,
            persistent_phases,
            transient_arcs: cfg.transient_arcs,
            transient_phases,
            transient_cycles: cfg.transient_cycles,
            base_weight,
            transient_weight: base_weight / 4.0,
        })
    }

    fn matrix_at(&self, t: u64) -> StochasticMatrix {
        let rel = t - self.t0;
        let cycle = rel / self.window;
        let phase = rel % self.window;
        let draws = cycle_draws(
            self.seed,
            cycle,
            self.persistent_arcs.len(),
            self.base_weight,
            self.ratio_bound * self.base_weight,
        );
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        for (idx, &(from, to)) in self.persistent_arcs.iter().enumerate() {
            if self.persistent_phases[idx] == phase {
                entries[to * n + from] += draws[idx];
            }
        }
        if cycle < self.transient_cycles {
            let w = self.transient_weight * 0.5f64.powi(cycle as i32);
            for (idx, &(from, to)) in self.transient_arcs.iter().enumerate() {
                if self.transient_phases[idx] == phase {
                    entries[to * n + from] += w;
                }
            }
        }
        for i in 0..n {
            let off: f64 = entries[i * n..(i + 1) * n].iter().sum();
            entries[i * n + i] = 1.0 - off;
        }
        StochasticMatrix::from_flat_unchecked(n, entries)
    }

    /// First time from which every transient arc's remaining mass is within
    /// the budget; exact because the decay is closed-form.
    fn tail_time(&self, budget: f64) -> u64 {
        if self.transient_arcs.is_empty() || self.transient_cycles == 0 {
            return self.t0;
        }
        let mut cycle = 0u64;
        loop {
            if cycle >= self.transient_cycles {
                return self.t0 + self.transient_cycles * self.window;
            }
            // Remaining mass from this cycle on: w * 2^{-c} summed to cutoff.
            let mut tail = 0.0;
            for c in cycle..self.transient_cycles {
                tail += self.transient_weight * 0.5f64.powi(c as i32);
            }
            if tail <= budget {
                return self.t0 + cycle * self.window;
            }
            cycle += 1;
        }
    }
}

/// Generator for schedules satisfying the windowed cut-balance condition:
/// undirected pairs fire both directions once per length-`window` cycle at
/// distinct phases, with per-cycle weights in `[w, ratio_bound * w]`, so
/// every window of the schedule carries both directions of every pair and
/// all cut ratios stay within `ratio_bound`. Instantaneous cuts are
/// typically one-sided. Transient pairs fire both directions at the same
/// instant with weight halving every cycle and stop after `transient_cycles`.
#[derive(Debug, Clone)]
pub struct CutBalancedConfig {
    pub n: usize,
    pub t0: u64,
    pub min_self_weight: f64,
    pub ratio_bound: f64,
    pub window: u64,
    pub seed: u64,
    /// Undirected persistent pairs; their union must connect the nodes the
    /// caller cares about (a path over all nodes gives strong connectivity).
    pub pairs: Vec<(usize, usize)>,
    pub transient_pairs: Vec<(usize, usize)>,
    pub transient_cycles: u64,
}

impl CutBalancedConfig {
    /// Path 0-1-..-(n-1) with one transient chord.
    pub fn path(n: usize, seed: u64) -> Self {
        Self {
            n,
            t0: 0,
            min_self_weight: 0.4,
            ratio_bound: 2.0,
            window: 3,
            seed,
            pairs: (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            transient_pairs: if n >= 3 { vec![(0, 2)] } else { vec![] },
            transient_cycles: 40,
        }
    }
}

#[derive(Debug)]
struct CutBalancedGen {
    n: usize,
    t0: u64,
    min_self_weight: f64,
    ratio_bound: f64,
    window: u64,
    seed: u64,
    /// Directed arcs from the pairs, two per pair, in pair order.
    directed: Vec<InfluenceArc>,
    phases: Vec<u64>,
    transient_directed: Vec<InfluenceArc>,
    transient_phases: Vec<u64>,
    transient_cycles: u64,
    base_weight: f64,
    transient_weight: f64,
}

impl CutBalancedGen {
    fn new(cfg: CutBalancedConfig) -> Result<Self> {
        if cfg.window == 0 {
            return Err(Error::InvalidWindow);
        }
        if !(0.0 < cfg.min_self_weight && cfg.min_self_weight < 1.0) {
            return Err(Error::InvalidSelfWeightFloor(cfg.min_self_weight));
        }
        if cfg.ratio_bound < 1.0 {
            return Err(Error::InvalidRatioBound(cfg.ratio_bound));
        }
        if cfg.pairs.is_empty() {
            return Err(Error::EmptyArcSet);
        }
        let mut directed = Vec::with_capacity(cfg.pairs.len() * 2);
        let mut phases = Vec::with_capacity(cfg.pairs.len() * 2);
        for (p, &(a, b)) in cfg.pairs.iter().enumerate() {
            validate_arc((a, b), cfg.n)?;
            directed.push((a, b));
            phases.push((2 * p) as u64 % cfg.window);
            directed.push((b, a));
            phases.push((2 * p + 1) as u64 % cfg.window);
        }
        let mut transient_directed = Vec::new();
        let mut transient_phases = Vec::new();
        for (q, &(a, b)) in cfg.transient_pairs.iter().enumerate() {
            validate_arc((a, b), cfg.n)?;
            // Both directions at the same instant: a transient pair must not
            // leave a window with one-sided flow when it stops.
            let phase = (2 * cfg.pairs.len() + q) as u64 % cfg.window;
            transient_directed.push((a, b));
            transient_phases.push(phase);
            transient_directed.push((b, a));
            transient_phases.push(phase);
        }

        let mut max_count = 1usize;
        for phase in 0..cfg.window {
            let mut counts = vec![0usize; cfg.n];
            for (idx, &(_, to)) in directed.iter().enumerate() {
                if phases[idx] == phase {
                    counts[to] += 1;
                }
            }
            for (idx, &(_, to)) in transient_directed.iter().enumerate() {
                if transient_phases[idx] == phase {
                    counts[to] += 1;
                }
            }
            max_count = max_count.max(counts.iter().copied().max().unwrap_or(0));
        }
        let base_weight =
            (1.0 - cfg.min_self_weight) / (cfg.ratio_bound * max_count as f64);
        Ok(Self {
            n: cfg.n,
            t0: cfg.t0,
            min_self_weight: cfg.min_self_weight,
            ratio_bound: cfg.ratio_bound,
            window: cfg.window,
            seed: cfg.seed,
            directed,
            phases,
            transient_directed,
            transient_phases,
            transient_cycles: cfg.transient_cycles,
            base_weight,
            transient_weight: base_weight / 4.0,
        })
    }

    fn persistent_arc_set(&self) -> BTreeSet<InfluenceArc> {
        self.directed.iter().copied().collect()
    }

    fn matrix_at(&self, t: u64) -> StochasticMatrix {
        let rel = t - self.t0;
        let cycle = rel / self.window;
        let phase = rel % self.window;
        let draws = cycle_draws(
            self.seed,
            cycle,
            self.directed.len(),
            self.base_weight,
            self.ratio_bound * self.base_weight,
        );
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        for (idx, &(from, to)) in self.directed.iter().enumerate() {
            if self.phases[idx] == phase {
                entries[to * n + from] += draws[idx];
            }
        }
        if cycle < self.transient_cycles {
            let w = self.transient_weight * 0.5f64.powi(cycle as i32);
            for (idx, &(from, to)) in self.transient_directed.iter().enumerate() {
                if self.transient_phases[idx] == phase {
                    entries[to * n + from] += w;
                }
            }
        }
        for i in 0..n {
            let off: f64 = entries[i * n..(i + 1) * n].iter().sum();
            entries[i * n + i] = 1.0 - off;
        }
        StochasticMatrix::from_flat_unchecked(n, entries)
    }

    fn tail_time(&self, budget: f64) -> u64 {
        if self.transient_directed.is_empty() || self.transient_cycles == 0 {
            return self.t0;
        }
        let mut cycle = 0u64;
        loop {
            if cycle >= self.transient_cycles {
                return self.t0 + self.transient_cycles * self.window;
            }
            let mut tail = 0.0;
            for c in cycle..self.transient_cycles {
                tail += self.transient_weight * 0.5f64.powi(c as i32);
            }
            if tail <= budget {
                return self.t0 + cycle * self.window;
            }
            cycle += 1;
        }
    }
}

/// On-disk schedule document. Weights are decimal strings so files stay
/// human-auditable and round-trip doubles exactly.
#[derive(Debug, Serialize, Deserialize)]
struct ScheduleFile {
    n: usize,
    t0: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_self_weight: Option<String>,
    matrices: Vec<Vec<Vec<String>>>,
}

fn format_weight(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_weight(s: &str, t_index: usize, row: usize, col: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| {
        Error::ScheduleFile(format!(
            "matrix {t_index}, row {}, column {}: cannot parse weight {s:?}",
            row + 1,
            col + 1
        ))
    })
}

/// Writes the schedule's matrices for `t = t0 ..= last_t` to a file.
pub fn save_schedule(schedule: &WeightSchedule, path: &Path, last_t: u64) -> Result<()> {
    let t0 = schedule.t0();
    if last_t < t0 {
        return Err(Error::TimeBeforeStart { t: last_t, t0 });
    }
    let mut matrices = Vec::with_capacity((last_t - t0 + 1) as usize);
    for t in t0..=last_t {
        let m = schedule.matrix_at(t)?;
        matrices.push(
            m.rows()
                .map(|r| r.iter().copied().map(format_weight).collect())
                .collect(),
        );
    }
    let doc = ScheduleFile {
        n: schedule.n(),
        t0,
        min_self_weight: schedule
            .self_weight_floor()
            .filter(|f| f.provenance == FloorProvenance::Declared)
            .map(|f| format_weight(f.value)),
        matrices,
    };
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::ScheduleFile(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Loads an explicit schedule from a file, validating every matrix. The
/// self-weight floor is taken from the file when declared there; otherwise
/// the minimum diagonal is inferred and reported as such.
pub fn load_schedule(path: &Path) -> Result<WeightSchedule> {
    let text = std::fs::read_to_string(path)?;
    let doc: ScheduleFile =
        serde_json::from_str(&text).map_err(|e| Error::ScheduleFile(e.to_string()))?;
    if doc.n < 2 {
        return Err(Error::ScheduleFile(format!(
            "need at least 2 agents, got {}",
            doc.n
        )));
    }
    let mut matrices = Vec::with_capacity(doc.matrices.len());
    for (t_index, rows) in doc.matrices.iter().enumerate() {
        if rows.len() != doc.n {
            return Err(Error::ScheduleFile(format!(
                "matrix {t_index}: expected {} rows, found {}",
                doc.n,
                rows.len()
            )));
        }
        let mut parsed = Vec::with_capacity(doc.n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != doc.n {
                return Err(Error::ScheduleFile(format!(
                    "matrix {t_index}, row {}: expected {} columns, found {}",
                    i + 1,
                    doc.n,
                    row.len()
                )));
            }
            let mut out = Vec::with_capacity(doc.n);
            for (j, s) in row.iter().enumerate() {
                out.push(parse_weight(s, t_index, i, j)?);
            }
            parsed.push(out);
        }
        let matrix = StochasticMatrix::from_rows(parsed).map_err(|e| {
            Error::ScheduleFile(format!("matrix {t_index}: {e}"))
        })?;
        matrices.push(matrix);
    }
    let floor = match &doc.min_self_weight {
        Some(s) => {
            let value = parse_weight(s, 0, 0, 0)?;
            Some(SelfWeightFloor {
                value,
                provenance: FloorProvenance::Declared,
            })
        }
        None => None,
    };
    if let Some(f) = floor {
        for (t_index, m) in matrices.iter().enumerate() {
            if m.min_diagonal() < f.value {
                return Err(Error::ScheduleFile(format!(
                    "matrix {t_index} has a diagonal below the declared floor {}",
                    f.value
                )));
            }
        }
    }
    WeightSchedule::explicit(matrices, doc.t0, floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn three_agent_first_step_is_identity() {
        let s = WeightSchedule::three_agent_counterexample();
        let a = s.matrix_at(1).unwrap();
        assert_eq!(a, StochasticMatrix::identity(3));
    }

    #[test]
    fn three_agent_second_step_matches_closed_form() {
        let s = WeightSchedule::three_agent_counterexample();
        let a = s.matrix_at(2).unwrap();
        assert_abs_diff_eq!(a.get(0, 0), 0.25, epsilon = 0.0);
        assert_abs_diff_eq!(a.get(0, 2), 0.75, epsilon = 0.0);
        assert_abs_diff_eq!(a.get(2, 0), 0.5, epsilon = 0.0);
        assert_eq!(a.get(1, 1), 1.0);
    }

    #[test]
    fn three_agent_time_before_start_rejected() {
        let s = WeightSchedule::three_agent_counterexample();
        assert!(matches!(
            s.matrix_at(0),
            Err(Error::TimeBeforeStart { t: 0, t0: 1 })
        ));
    }

    #[test]
    fn four_agent_even_matrix() {
        let s = WeightSchedule::four_agent_sorted_example();
        let b = s.matrix_at(0).unwrap();
        let expect = [
            [0.5, 0.0, 0.5, 0.0],
            [0.0, 0.5, 0.0, 0.5],
            [0.5, 0.0, 0.5, 0.0],
            [0.0, 0.5, 0.0, 0.5],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(b.get(i, j), expect[i][j]);
            }
        }
    }

    #[test]
    fn identity_generator_any_time() {
        let s = WeightSchedule::identity(5, 3);
        assert_eq!(s.matrix_at(17).unwrap(), StochasticMatrix::identity(5));
    }

    #[test]
    fn matrix_at_is_deterministic_for_generators() {
        let s = WeightSchedule::cut_balanced(CutBalancedConfig::path(4, 99)).unwrap();
        for t in 0..40 {
            assert_eq!(s.matrix_at(t).unwrap(), s.matrix_at(t).unwrap());
        }
    }

    #[test]
    fn generators_respect_declared_floor_and_row_sums() {
        let arc = WeightSchedule::arc_balanced(ArcBalancedConfig::star(3, 7)).unwrap();
        let cut = WeightSchedule::cut_balanced(CutBalancedConfig::path(4, 7)).unwrap();
        for s in [arc, cut] {
            let floor = s.self_weight_floor().unwrap().value;
            for t in 0..60 {
                let m = s.matrix_at(t).unwrap();
                assert!(m.min_diagonal() >= floor - 1e-12, "t={t}");
                assert!(m.row_sum_deviation() <= 1e-12, "t={t}");
            }
        }
    }

    #[test]
    fn lift_window_one_reindexes_only() {
        let s = WeightSchedule::three_agent_counterexample();
        let lifted = s.lift(1).unwrap();
        assert_eq!(lifted.t0(), 0);
        for t in 0..9 {
            assert_eq!(lifted.matrix_at(t).unwrap(), s.matrix_at(t + 1).unwrap());
        }
    }

    #[test]
    fn lift_three_agent_window_three_rows_sum_to_one() {
        let s = WeightSchedule::three_agent_counterexample();
        let lifted = s.lift(3).unwrap();
        let b = lifted.matrix_at(0).unwrap();
        // Product A(3) A(2) A(1), composed latest-first.
        let expect = product_chain(&[
            s.matrix_at(3).unwrap(),
            s.matrix_at(2).unwrap(),
            s.matrix_at(1).unwrap(),
        ])
        .unwrap();
        assert_eq!(b, expect);
        assert!(b.row_sum_deviation() <= 3e-12);
    }

    #[test]
    fn lift_constant_schedule_squares_the_matrix() {
        let a = StochasticMatrix::from_rows(vec![
            vec![0.7, 0.3],
            vec![0.2, 0.8],
        ])
        .unwrap();
        let s = WeightSchedule::constant(a.clone(), 0);
        let lifted = s.lift(2).unwrap();
        let expect = a.multiply(&a).unwrap();
        for t in 0..5 {
            assert_eq!(lifted.matrix_at(t).unwrap(), expect);
        }
    }

    #[test]
    fn lift_composes_multiplicatively() {
        let s = WeightSchedule::cut_balanced(CutBalancedConfig::path(3, 5)).unwrap();
        let once = s.lift(6).unwrap();
        let twice = s.lift(2).unwrap().lift(3).unwrap();
        for t in 0..6 {
            let a = once.matrix_at(t).unwrap();
            let b = twice.matrix_at(t).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert_abs_diff_eq!(a.get(i, j), b.get(i, j), epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn lifted_floor_is_base_floor_powered() {
        let s = WeightSchedule::cut_balanced(CutBalancedConfig::path(4, 3)).unwrap();
        let lifted = s.lift(3).unwrap();
        let base = s.self_weight_floor().unwrap().value;
        let f = lifted.self_weight_floor().unwrap().value;
        assert_abs_diff_eq!(f, base.powi(3), epsilon = 1e-15);
        let b = lifted.matrix_at(4).unwrap();
        assert!(b.min_diagonal() >= f - 1e-12);
    }

    #[test]
    fn save_load_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sched.json");
        let s = WeightSchedule::three_agent_counterexample();
        save_schedule(&s, &path, 30).unwrap();
        let loaded = load_schedule(&path).unwrap();
        assert_eq!(loaded.t0(), 1);
        assert_eq!(loaded.horizon(), Some(30));
        for t in 1..=30 {
            let a = s.matrix_at(t).unwrap();
            let b = loaded.matrix_at(t).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert!(
                        a.get(i, j).to_bits() == b.get(i, j).to_bits(),
                        "t={t} ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn load_rejects_bad_row_sum_with_row_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"n":2,"t0":0,"matrices":[[["0.25","0.25"],["0.5","0.5"]]]}"#,
        )
        .unwrap();
        let err = load_schedule(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matrix 0"), "{msg}");
        assert!(msg.contains("row 1"), "{msg}");
    }

    #[test]
    fn load_single_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("id.json");
        std::fs::write(
            &path,
            r#"{"n":2,"t0":0,"matrices":[[["1","0"],["0","1"]]]}"#,
        )
        .unwrap();
        let s = load_schedule(&path).unwrap();
        assert_eq!(s.matrix_at(0).unwrap(), StochasticMatrix::identity(2));
        assert!(matches!(
            s.matrix_at(1),
            Err(Error::HorizonExceeded { t: 1, horizon: 0 })
        ));
    }

    #[test]
    fn known_persistent_arcs_of_builtins() {
        let s5 = WeightSchedule::three_agent_counterexample();
        assert_eq!(s5.known_persistent_arcs().unwrap().len(), 6);
        let s4 = WeightSchedule::four_agent_sorted_example();
        assert_eq!(s4.known_persistent_arcs().unwrap().len(), 8);
        let id = WeightSchedule::identity(3, 0);
        assert!(id.known_persistent_arcs().unwrap().is_empty());
    }

    #[test]
    fn tail_time_decreases_with_budget() {
        let s = WeightSchedule::arc_balanced(ArcBalancedConfig::star(3, 11)).unwrap();
        let loose = s.transient_tail_time(1.0).unwrap();
        let tight = s.transient_tail_time(1e-9).unwrap();
        assert!(loose <= tight);
        assert_eq!(s.transient_tail_time(f64::INFINITY).unwrap(), s.t0());
    }
}
