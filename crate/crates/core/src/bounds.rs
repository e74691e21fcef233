//! Evaluation of the explicit convergence-rate certificates: the product
//! floor for self-weights, the per-agent envelope recursion, the two rate
//! bounds (arc-balanced and cut-balanced flavors), their stage/time
//! sequences, stagewise contraction checks against a simulated trajectory,
//! the window-lift cut-balance facts, and the spread floor of the
//! three-agent counterexample.
//!
//! The certificates are deliberately conservative: their stage counts can be
//! astronomically large. Threshold times are therefore reported either as
//! reached (scanned forward to the crossing) or as exceeding the scanned
//! horizon with the accumulated mass so far. A guarantee `spread(t) <=
//! target * spread(t0)` for all `t >= deadline` is then verified through
//! monotonicity: once the simulated spread dips below the target at some
//! `t_hit <= deadline`, the guarantee holds.

use crate::balance::{self, OneSidedFlowScan, RATIO_SLACK};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::graph::{self, ArcSet, TailTime};
use crate::matrix::INEQ_SLACK;
use crate::schedule::WeightSchedule;
use serde::Serialize;

/// `ln(floor) / (floor - 1)`, the positive constant turning accumulated
/// self-weight deficits into a product floor.
fn deficit_rate(floor: f64) -> Result<f64> {
    if !(0.0 < floor && floor < 1.0) {
        return Err(Error::InvalidSelfWeightFloor(floor));
    }
    Ok(floor.ln() / (floor - 1.0))
}

/// Lower bound on a product of factors in `[floor, 1]` whose deficits
/// `1 - b_k` sum to at most `deficit_budget`: `exp(-budget * ln(floor)/(floor-1))`.
/// The bound does not depend on the number of factors.
pub fn product_floor(floor: f64, deficit_budget: f64) -> Result<f64> {
    if deficit_budget < 0.0 {
        return Err(Error::HorizonExhausted {
            scanned: 0,
            accumulated: deficit_budget,
            required: 0.0,
        });
    }
    Ok((-deficit_budget * deficit_rate(floor)?).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductFloorCheck {
    pub product: f64,
    pub floor_bound: f64,
    pub holds: bool,
}

/// Verifies the product floor on a concrete admissible sequence.
pub fn product_floor_check(
    floor: f64,
    deficit_budget: f64,
    factors: &[f64],
) -> Result<ProductFloorCheck> {
    let mut deficit = 0.0;
    for (k, &b) in factors.iter().enumerate() {
        if !(floor..=1.0).contains(&b) {
            return Err(Error::DiagonalBelowFloor {
                node: k + 1,
                value: b,
                floor,
            });
        }
        deficit += 1.0 - b;
    }
    if deficit > deficit_budget + INEQ_SLACK {
        return Err(Error::HorizonExhausted {
            scanned: factors.len() as u64,
            accumulated: deficit,
            required: deficit_budget,
        });
    }
    let product: f64 = factors.iter().product();
    let floor_bound = product_floor(floor, deficit_budget)?;
    Ok(ProductFloorCheck {
        product,
        floor_bound,
        holds: product >= floor_bound - INEQ_SLACK,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeCheck {
    pub envelope: f64,
    pub worst_excess: f64,
    pub holds: bool,
}

/// Envelope recursion: if agent `i` sits below the mixture
/// `mix * min + (1 - mix) * max` at time `from_t`, it stays below the
/// mixture damped by its own self-weight product for `span` further steps.
pub fn self_weight_envelope_check(
    schedule: &WeightSchedule,
    traj: &Trajectory,
    agent: usize,
    from_t: u64,
    mix: f64,
    span: u64,
) -> Result<EnvelopeCheck> {
    let n = schedule.n();
    if agent >= n {
        return Err(Error::IndexOutOfRange {
            index: agent + 1,
            max: n,
        });
    }
    if !(0.0..1.0).contains(&mix) {
        return Err(Error::WrongFixture(format!(
            "mixture must be in [0,1), got {mix}"
        )));
    }
    let state0 = traj
        .state_at(from_t)
        .ok_or(Error::HorizonExceeded {
            t: from_t,
            horizon: traj.last_t(),
        })?;
    let idx = (from_t - traj.t0) as usize;
    let hi = traj.max_state[idx];
    let lo = traj.min_state[idx];
    if state0[agent] > mix * lo + (1.0 - mix) * hi + INEQ_SLACK {
        return Err(Error::WrongFixture(format!(
            "agent {} does not satisfy the mixture precondition at t={from_t}",
            agent + 1
        )));
    }
    let mut self_product = 1.0;
    for k in 0..span {
        self_product *= schedule.matrix_at(from_t + k)?.get(agent, agent);
    }
    let envelope = mix * self_product * lo + (1.0 - mix * self_product) * hi;
    let mut worst_excess = f64::NEG_INFINITY;
    for tau in 0..=span {
        let state = traj.state_at(from_t + tau).ok_or(Error::HorizonExceeded {
            t: from_t + tau,
            horizon: traj.last_t(),
        })?;
        worst_excess = worst_excess.max(state[agent] - envelope);
    }
    Ok(EnvelopeCheck {
        envelope,
        worst_excess,
        holds: worst_excess <= INEQ_SLACK,
    })
}

/// A forward-scanned infimum over time: either the crossing was found or the
/// scan ended first, in which case the true time exceeds `scanned` and the
/// partial accumulation is reported.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeBound {
    Reached { steps: u64 },
    Beyond {
        scanned: u64,
        accumulated: f64,
        #[serde(serialize_with = "crate::ser::ext_real")]
        threshold: f64,
    },
}

impl TimeBound {
    /// Steps known not to exceed the true infimum.
    pub fn lower_bound(&self) -> u64 {
        match *self {
            TimeBound::Reached { steps } => steps,
            TimeBound::Beyond { scanned, .. } => scanned,
        }
    }

    pub fn reached(&self) -> Option<u64> {
        match *self {
            TimeBound::Reached { steps } => Some(steps),
            TimeBound::Beyond { .. } => None,
        }
    }
}

/// Stage boundaries of an accumulate-to-target scan, with per-stage masses.
#[derive(Debug, Clone, Serialize)]
pub struct StageSequence {
    /// Absolute time the accumulation starts from.
    pub origin: u64,
    /// Stage end offsets relative to `origin`, strictly increasing: stage r
    /// covers `[times[r-1], times[r])`.
    pub times: Vec<u64>,
    /// Accumulated mass of each completed stage.
    pub masses: Vec<f64>,
    /// Mass accumulated past the last completed stage when the scan ended
    /// early, with the offset scanned to.
    pub incomplete: Option<(f64, u64)>,
}

/// Incoming persistent mass of one node at one time.
fn incoming_persistent_mass(
    schedule: &WeightSchedule,
    persistent: &ArcSet,
    node: usize,
    t: u64,
) -> Result<f64> {
    let m = schedule.matrix_at(t)?;
    let mut mass = 0.0;
    for from in 0..schedule.n() {
        if from != node && persistent.contains((from, node)) {
            mass += m.get(node, from);
        }
    }
    Ok(mass)
}

/// Scans the stage sequence of a probe node: each stage ends as soon as the
/// node's accumulated incoming persistent mass reaches `target`. Minimal by
/// construction since the accumulands are nonnegative.
pub fn persistent_mass_stages(
    schedule: &WeightSchedule,
    probe: usize,
    persistent: &ArcSet,
    target: f64,
    origin: u64,
    last_t: u64,
    max_stages: usize,
) -> Result<StageSequence> {
    if !(0..schedule.n()).any(|from| persistent.contains((from, probe))) {
        return Err(Error::NoIncomingPersistentArc { node: probe + 1 });
    }
    let mut times = Vec::new();
    let mut masses = Vec::new();
    let mut acc = 0.0;
    let mut offset = 0u64;
    let mut incomplete = None;
    while times.len() < max_stages {
        if origin + offset > last_t {
            incomplete = Some((acc, offset));
            break;
        }
        acc += incoming_persistent_mass(schedule, persistent, probe, origin + offset)?;
        offset += 1;
        if acc >= target {
            times.push(offset);
            masses.push(acc);
            acc = 0.0;
        }
    }
    Ok(StageSequence {
        origin,
        times,
        masses,
        incomplete,
    })
}

fn stages_for_target(target_ratio: f64, ingredient: f64) -> f64 {
    if target_ratio >= 1.0 {
        return 0.0;
    }
    // ln(1/(1-x)) evaluated stably for tiny x.
    let denom = -(-ingredient).ln_1p();
    (1.0 / target_ratio).ln() / denom
}

/// Inputs for the arc-balanced rate certificate.
#[derive(Debug, Clone, Serialize)]
pub struct ArcRateInputs {
    /// Balance constant the schedule is certified at.
    pub ratio_bound: f64,
    /// Balance window length.
    pub window: u64,
    /// Target contraction of the spread.
    pub target_ratio: f64,
    /// Budget for the total tail mass of non-persistent arcs; defaults to
    /// a tenth of the generator's per-window mass floor.
    pub tail_budget: Option<f64>,
    /// Per-stage accumulation target; must exceed
    /// `window * (n-1) * (1 - floor)` and defaults to twice that.
    pub stage_mass_target: Option<f64>,
    /// Steps past the schedule start to simulate and scan.
    pub horizon: u64,
    pub max_stages: usize,
}

/// Evaluated constants and time thresholds of the arc-balanced certificate.
#[derive(Debug, Clone, Serialize)]
pub struct ArcRateBound {
    pub target_ratio: f64,
    pub tail_budget: f64,
    pub tail_time: TailTime,
    pub stage_mass_target: f64,
    pub diameter: u64,
    pub diameter_convention: &'static str,
    /// Floor on the probe-adjacent self-weight product per stage.
    pub root_self_product: f64,
    /// Floor on every other node's self-weight product per stage.
    pub other_self_product: f64,
    /// Floor on the per-stage mass of every persistent arc.
    pub arc_mass_floor: f64,
    /// Per-sweep contraction factor `1 - ingredient`.
    pub stage_factor: f64,
    pub vacuous: bool,
    /// Sweeps needed for the target; `None` when vacuous, may be infinite.
    #[serde(serialize_with = "crate::ser::ext_real_opt")]
    pub stages_needed: Option<f64>,
    /// Threshold on accumulated incoming persistent mass at the probe node.
    #[serde(serialize_with = "crate::ser::ext_real_opt")]
    pub mass_threshold: Option<f64>,
    /// Offset (from the tail time) after which the guarantee applies.
    pub threshold_time: Option<TimeBound>,
    /// Chosen root and its persistent successor used as the probe.
    pub root: usize,
    pub probe: usize,
    pub stages: StageSequence,
}

/// Computes every constant of the arc-balanced certificate. The balance
/// condition itself is certified separately (see `verify_arc_rate`).
pub fn evaluate_arc_rate(
    schedule: &WeightSchedule,
    persistent: &ArcSet,
    inputs: &ArcRateInputs,
) -> Result<ArcRateBound> {
    let floor = schedule
        .self_weight_floor()
        .ok_or(Error::SelfWeightFloorUndeclared)?
        .value;
    let rate = deficit_rate(floor)?;
    if inputs.ratio_bound < 1.0 {
        return Err(Error::InvalidRatioBound(inputs.ratio_bound));
    }
    if inputs.window == 0 {
        return Err(Error::InvalidWindow);
    }
    let n = schedule.n() as f64;
    let window = inputs.window as f64;
    let minimum_target = window * (n - 1.0) * (1.0 - floor);
    let target = inputs
        .stage_mass_target
        .unwrap_or(2.0 * minimum_target);
    if target <= minimum_target {
        return Err(Error::StageTargetTooSmall {
            delta: target,
            minimum: minimum_target,
        });
    }

    let (has_tree, roots) = graph::spanning_tree_roots(persistent);
    if !has_tree {
        return Err(Error::NoSpanningTree);
    }
    let diameter = graph::diameter(persistent)?;

    let tail_budget = inputs
        .tail_budget
        .or_else(|| schedule.window_mass_floor().map(|w| 0.1 * w))
        .unwrap_or(1e-3);
    let scan_to = schedule.t0() + inputs.horizon;
    let tail_time = graph::tail_time(schedule, persistent, tail_budget, scan_to)?;

    let k = inputs.ratio_bound;
    let root_self_product =
        (-(1.0 - floor + target + tail_budget * (n - 1.0)) * rate).exp();
    let other_self_product = (-(n - 1.0)
        * (k * (1.0 - floor + target) + window * (1.0 - floor) + tail_budget)
        * rate)
        .exp();
    debug_assert!(other_self_product <= root_self_product);
    let arc_mass_floor = (target / (n - 1.0) - window * (1.0 - floor)) / k;
    let ingredient = 0.5
        * other_self_product.powi(2 * diameter as i32)
        * arc_mass_floor.powi(diameter as i32);
    let vacuous = ingredient >= 1.0;
    let stage_factor = if vacuous { 1.0 } else { 1.0 - ingredient };

    // Root with the smallest eccentricity (ties to the smallest index), then
    // its smallest persistent successor as the probe node.
    let root = roots
        .iter()
        .copied()
        .min_by_key(|&r| (graph::eccentricity(persistent, r).unwrap_or(u64::MAX), r))
        .expect("nonempty roots");
    let probe = (0..persistent.n())
        .find(|&i| i != root && persistent.contains((root, i)))
        .ok_or(Error::NoSpanningTree)?;

    let (stages_needed, mass_threshold, threshold_time);
    if vacuous {
        stages_needed = None;
        mass_threshold = None;
        threshold_time = None;
    } else {
        let omega = stages_for_target(inputs.target_ratio, ingredient).ceil();
        let threshold = omega * diameter as f64 * (target + 1.0);
        stages_needed = Some(omega);
        mass_threshold = Some(threshold);
        threshold_time = Some(if threshold <= 0.0 {
            TimeBound::Reached { steps: 0 }
        } else {
            let origin = tail_time.time();
            let mut acc = 0.0;
            let mut steps = 0u64;
            loop {
                if origin + steps > scan_to {
                    break TimeBound::Beyond {
                        scanned: steps,
                        accumulated: acc,
                        threshold,
                    };
                }
                acc += incoming_persistent_mass(schedule, persistent, probe, origin + steps)?;
                steps += 1;
                if acc >= threshold {
                    break TimeBound::Reached { steps };
                }
            }
        });
    }

    let stages = persistent_mass_stages(
        schedule,
        probe,
        persistent,
        target,
        tail_time.time(),
        scan_to,
        inputs.max_stages,
    )?;

    Ok(ArcRateBound {
        target_ratio: inputs.target_ratio,
        tail_budget,
        tail_time,
        stage_mass_target: target,
        diameter,
        diameter_convention: "largest BFS eccentricity over valid roots",
        root_self_product,
        other_self_product,
        arc_mass_floor,
        stage_factor,
        vacuous,
        stages_needed,
        mass_threshold,
        threshold_time,
        root,
        probe,
        stages,
    })
}

/// One stage of an observed-versus-predicted contraction comparison.
#[derive(Debug, Clone, Serialize)]
pub struct StageCheck {
    pub stage: usize,
    pub time: u64,
    pub predicted: f64,
    pub observed: f64,
    /// Spread already at numerical zero, so any factor passes.
    pub trivial: bool,
    pub ok: bool,
}

/// Compares the spread at the given absolute stage times against the
/// geometric prediction `factor^r` relative to the spread at `base_time`.
pub fn stagewise_contraction_check(
    traj: &Trajectory,
    base_time: u64,
    stage_times: &[u64],
    factor: f64,
) -> Result<Vec<StageCheck>> {
    let base = traj.spread_at(base_time).ok_or(Error::HorizonExceeded {
        t: base_time,
        horizon: traj.last_t(),
    })?;
    let zero_tol = 1e-13 * traj.spread.first().copied().unwrap_or(1.0).max(1e-300);
    let mut checks = Vec::with_capacity(stage_times.len());
    for (r, &t) in stage_times.iter().enumerate() {
        let spread = traj.spread_at(t).ok_or(Error::HorizonExceeded {
            t,
            horizon: traj.last_t(),
        })?;
        let predicted = factor.powi(r as i32 + 1);
        let trivial = base <= zero_tol;
        let observed = if base > 0.0 { spread / base } else { 0.0 };
        let ok = trivial || spread <= zero_tol || observed <= predicted + RATIO_SLACK;
        checks.push(StageCheck {
            stage: r + 1,
            time: t,
            predicted,
            observed,
            trivial: trivial || spread <= zero_tol,
            ok,
        });
    }
    Ok(checks)
}

/// Full verification record for the arc-balanced certificate on a concrete
/// run: certified balance constant, evaluated bound, guarantee check, and
/// the stagewise contraction table.
#[derive(Debug, Clone, Serialize)]
pub struct ArcRateVerification {
    pub bound: ArcRateBound,
    pub balance_k_min: f64,
    pub balance_certified: bool,
    pub initial_spread: f64,
    pub target_spread: f64,
    /// First simulated time with spread at or below the target.
    pub spread_hit_time: Option<u64>,
    /// Whether `spread(t) <= target` is established for all `t` past the
    /// certificate deadline.
    pub guarantee_holds: bool,
    pub stage_checks: Vec<StageCheck>,
    /// Per-stage accumulated probe mass must stay within `target + 1`.
    pub stage_mass_bound: f64,
    pub stage_masses_ok: bool,
}

pub fn verify_arc_rate(
    schedule: &WeightSchedule,
    persistent: &ArcSet,
    inputs: &ArcRateInputs,
    x0: &[f64],
) -> Result<ArcRateVerification> {
    let bound = evaluate_arc_rate(schedule, persistent, inputs)?;
    let t0 = schedule.t0();
    let balance = balance::arc_balance_k_min(
        schedule,
        persistent,
        inputs.window,
        (t0, t0 + inputs.horizon),
    )?;
    let traj = crate::dynamics::simulate(
        schedule,
        x0,
        inputs.horizon,
        &crate::dynamics::SimOptions::default(),
    )?;
    let initial_spread = traj.spread[0];
    let target_spread = inputs.target_ratio * initial_spread;
    let hit = traj.first_spread_below(target_spread + 1e-12 * initial_spread);

    let origin = bound.tail_time.time();
    let guarantee_holds = match (&bound.threshold_time, hit) {
        (None, _) => true, // vacuous bound promises nothing
        (Some(TimeBound::Reached { steps }), Some(t_hit)) => t_hit <= origin + steps,
        (Some(TimeBound::Reached { steps }), None) => {
            // Deadline inside the horizon but the spread never got there.
            origin + steps > traj.last_t()
        }
        (Some(TimeBound::Beyond { scanned, .. }), Some(t_hit)) => t_hit <= origin + scanned,
        (Some(TimeBound::Beyond { .. }), None) => false,
    };

    // Contraction is predicted once per diameter-many stages.
    let d = bound.diameter.max(1) as usize;
    let sweep_times: Vec<u64> = bound
        .stages
        .times
        .iter()
        .enumerate()
        .filter(|(idx, _)| (idx + 1) % d == 0)
        .map(|(_, &offset)| origin + offset)
        .collect();
    let stage_checks =
        stagewise_contraction_check(&traj, origin, &sweep_times, bound.stage_factor)?;

    let stage_mass_bound = bound.stage_mass_target + 1.0;
    let stage_masses_ok = bound
        .stages
        .masses
        .iter()
        .all(|&m| m <= stage_mass_bound + INEQ_SLACK);

    Ok(ArcRateVerification {
        balance_k_min: balance.k_min,
        balance_certified: balance.satisfied_at(inputs.ratio_bound),
        initial_spread,
        target_spread,
        spread_hit_time: hit,
        guarantee_holds,
        stage_checks,
        stage_mass_bound,
        stage_masses_ok,
        bound,
    })
}

/// Inputs for the cut-balanced rate certificate.
#[derive(Debug, Clone, Serialize)]
pub struct CutRateInputs {
    pub ratio_bound: f64,
    pub window: u64,
    pub target_ratio: f64,
    /// Number of length-`window` blocks to simulate and scan.
    pub horizon_windows: u64,
    pub max_stages: usize,
}

/// One full stage of the nested flow sequence: the sub-stage end offsets (in
/// windows), the weighted flow each sub-stage accumulated on its minimizing
/// sequence, and the flow one window before the crossing (strictly below 1,
/// witnessing minimality of the end offset).
#[derive(Debug, Clone, Serialize)]
pub struct FlowStage {
    pub ends: Vec<u64>,
    pub weighted_flows: Vec<f64>,
    pub flows_before: Vec<f64>,
}

/// Evaluated constants and window thresholds of the cut-balanced
/// certificate.
#[derive(Debug, Clone, Serialize)]
pub struct CutRateBound {
    pub target_ratio: f64,
    /// Weight converting window cross-flow into lifted-matrix flow.
    pub flow_weight: f64,
    /// Balanced-asymmetry constant of the lifted system.
    pub lifted_ratio_bound: f64,
    pub half_count: u32,
    pub stage_factor: f64,
    #[serde(serialize_with = "crate::ser::ext_real")]
    pub stages_needed: f64,
    /// Threshold on accumulated weighted minimal flow.
    #[serde(serialize_with = "crate::ser::ext_real")]
    pub flow_threshold: f64,
    /// Windows (length-`window` blocks) after which the guarantee applies.
    pub threshold_windows: TimeBound,
    pub stages: Vec<FlowStage>,
    /// Weighted flow of every sub-stage must stay within this.
    pub substage_flow_bound: f64,
}

/// Computes the cut-balanced certificate constants and scans the nested
/// stage sequence with the subset-sequence dynamic program.
pub fn evaluate_cut_rate(
    schedule: &WeightSchedule,
    inputs: &CutRateInputs,
) -> Result<CutRateBound> {
    let floor = schedule
        .self_weight_floor()
        .ok_or(Error::SelfWeightFloorUndeclared)?
        .value;
    if !(0.0 < floor && floor < 1.0) {
        return Err(Error::InvalidSelfWeightFloor(floor));
    }
    if inputs.ratio_bound < 1.0 {
        return Err(Error::InvalidRatioBound(inputs.ratio_bound));
    }
    if inputs.window == 0 {
        return Err(Error::InvalidWindow);
    }
    let n = schedule.n();
    let nf = n as f64;
    let window = inputs.window;
    let floor_pow = floor.powi(window as i32);
    let flow_weight = floor_pow / ((nf - 1.0) * window as f64);
    let lifted_ratio_bound = ((nf - 1.0) * inputs.ratio_bound / floor.powi(window as i32 - 1))
        .max((nf - 1.0) / floor_pow);
    let half_count = (n / 2) as u32;
    let ingredient =
        lifted_ratio_bound.powi(-(half_count as i32)) / (8.0 * nf * nf).powi(half_count as i32);
    let stage_factor = 1.0 - ingredient;
    let stages_needed = stages_for_target(inputs.target_ratio, ingredient).ceil();
    let flow_threshold = stages_needed * half_count as f64 * (floor_pow + 1.0);

    let t0 = schedule.t0();
    // Accumulated window matrices, flat row-major.
    let mut windows: Vec<Vec<f64>> = Vec::with_capacity(inputs.horizon_windows as usize);
    for k in 0..inputs.horizon_windows {
        let mut flat = vec![0.0; n * n];
        for u in 0..window {
            let m = schedule.matrix_at(k * window + u + t0)?;
            for i in 0..n {
                for j in 0..n {
                    flat[i * n + j] += m.get(i, j);
                }
            }
        }
        windows.push(flat);
    }

    // Nested stage scan: each sub-stage ends when the weighted minimal flow
    // reaches 1; half_count sub-stages make one full stage.
    let mut stages = Vec::new();
    let mut scan = OneSidedFlowScan::new(n)?;
    let empty_stage = || FlowStage {
        ends: Vec::new(),
        weighted_flows: Vec::new(),
        flows_before: Vec::new(),
    };
    let mut current = empty_stage();
    let mut k = 0u64;
    let mut prior = 0.0;
    scan.reset();
    while stages.len() < inputs.max_stages && (k as usize) < windows.len() {
        scan.step(&windows[k as usize]);
        k += 1;
        let weighted = flow_weight * scan.current_min();
        if weighted >= 1.0 {
            current.ends.push(k);
            current.weighted_flows.push(weighted);
            current.flows_before.push(prior);
            scan.reset();
            prior = 0.0;
            if current.ends.len() == half_count as usize {
                stages.push(std::mem::replace(&mut current, empty_stage()));
            }
        } else {
            prior = weighted;
        }
    }

    // Threshold scan for the guarantee deadline, accumulated from window 0.
    let threshold_windows = if flow_threshold <= 0.0 {
        TimeBound::Reached { steps: 0 }
    } else {
        let mut scan = OneSidedFlowScan::new(n)?;
        let mut out = None;
        for (idx, flat) in windows.iter().enumerate() {
            scan.step(flat);
            if flow_weight * scan.current_min() >= flow_threshold {
                out = Some(TimeBound::Reached {
                    steps: idx as u64 + 1,
                });
                break;
            }
        }
        out.unwrap_or(TimeBound::Beyond {
            scanned: windows.len() as u64,
            accumulated: flow_weight * scan.current_min(),
            threshold: flow_threshold,
        })
    };

    Ok(CutRateBound {
        target_ratio: inputs.target_ratio,
        flow_weight,
        lifted_ratio_bound,
        half_count,
        stage_factor,
        stages_needed,
        flow_threshold,
        threshold_windows,
        stages,
        substage_flow_bound: floor_pow + 1.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CutRateVerification {
    pub bound: CutRateBound,
    pub balance_k_min: f64,
    pub balance_certified: bool,
    pub initial_spread: f64,
    pub target_spread: f64,
    pub spread_hit_time: Option<u64>,
    pub guarantee_holds: bool,
    pub stage_checks: Vec<StageCheck>,
    pub substage_flows_ok: bool,
    pub substage_times_strictly_increasing: bool,
}

pub fn verify_cut_rate(
    schedule: &WeightSchedule,
    inputs: &CutRateInputs,
    x0: &[f64],
) -> Result<CutRateVerification> {
    let bound = evaluate_cut_rate(schedule, inputs)?;
    let t0 = schedule.t0();
    let steps = inputs.horizon_windows * inputs.window;
    let balance = balance::cut_balance_k_min(
        schedule,
        inputs.window,
        (t0, t0 + steps.max(inputs.window)),
    )?;
    let traj = crate::dynamics::simulate(
        schedule,
        x0,
        steps,
        &crate::dynamics::SimOptions::default(),
    )?;
    let initial_spread = traj.spread[0];
    let target_spread = inputs.target_ratio * initial_spread;
    let hit = traj.first_spread_below(target_spread + 1e-12 * initial_spread);

    let guarantee_holds = match (&bound.threshold_windows, hit) {
        (TimeBound::Reached { steps }, Some(t_hit)) => t_hit <= steps * inputs.window + t0,
        (TimeBound::Reached { steps }, None) => steps * inputs.window + t0 > traj.last_t(),
        (TimeBound::Beyond { scanned, .. }, Some(t_hit)) => {
            t_hit <= scanned * inputs.window + t0
        }
        (TimeBound::Beyond { .. }, None) => false,
    };

    let stage_times: Vec<u64> = bound
        .stages
        .iter()
        .filter_map(|s| s.ends.last().copied())
        .map(|k| k * inputs.window + t0)
        .collect();
    let stage_checks = stagewise_contraction_check(&traj, t0, &stage_times, bound.stage_factor)?;

    let mut substage_flows_ok = true;
    let mut increasing = true;
    let mut prev_end = 0u64;
    for stage in &bound.stages {
        for (&end, &flow) in stage.ends.iter().zip(&stage.weighted_flows) {
            increasing &= end > prev_end;
            prev_end = end;
            substage_flows_ok &=
                flow >= 1.0 - RATIO_SLACK && flow <= bound.substage_flow_bound + RATIO_SLACK;
        }
    }

    Ok(CutRateVerification {
        balance_k_min: balance.k_min,
        balance_certified: balance.satisfied_at(inputs.ratio_bound),
        initial_spread,
        target_spread,
        spread_hit_time: hit,
        guarantee_holds,
        stage_checks,
        substage_flows_ok,
        substage_times_strictly_increasing: increasing,
        bound,
    })
}

/// Stage sequence and contraction factor computed directly on a matrix
/// system (typically a window lift): each sub-stage ends once the minimal
/// accumulated one-sided cross-flow over equal-cardinality subset sequences
/// reaches 1, and `floor(n/2)` sub-stages contract the spread by
/// `1 - M^{-floor(n/2)} / (8 n^2)^{floor(n/2)}`, where `M` combines the
/// measured per-matrix cut constant with `(n-1)/diag_floor`.
#[derive(Debug, Clone, Serialize)]
pub struct DirectFlowBound {
    /// Largest instantaneous cut ratio observed over the horizon.
    #[serde(serialize_with = "crate::ser::ext_real")]
    pub cut_constant: f64,
    pub diag_floor: f64,
    /// Balanced-asymmetry constant: `max(cut_constant, (n-1)/diag_floor)`.
    #[serde(serialize_with = "crate::ser::ext_real")]
    pub asymmetry_bound: f64,
    pub half_count: u32,
    pub stage_factor: f64,
    pub stages: Vec<FlowStage>,
}

/// Scans the direct stage sequence of `schedule` over `horizon` steps. The
/// schedule must declare a self-weight floor, and every scanned matrix must
/// have a finite cut ratio for the contraction factor to exist.
pub fn evaluate_direct_flow_stages(
    schedule: &WeightSchedule,
    horizon: u64,
    max_stages: usize,
) -> Result<DirectFlowBound> {
    let diag_floor = schedule
        .self_weight_floor()
        .ok_or(Error::SelfWeightFloorUndeclared)?
        .value;
    let n = schedule.n();
    let nf = n as f64;
    let t0 = schedule.t0();
    let half_count = (n / 2) as u32;

    let mut cut_constant: f64 = 1.0;
    let mut scan = OneSidedFlowScan::new(n)?;
    let empty_stage = || FlowStage {
        ends: Vec::new(),
        weighted_flows: Vec::new(),
        flows_before: Vec::new(),
    };
    let mut stages = Vec::new();
    let mut current = empty_stage();
    let mut prior = 0.0;
    for step in 0..horizon {
        let m = schedule.matrix_at(t0 + step)?;
        cut_constant = cut_constant.max(balance::instantaneous_cut_ratio(&m)?);
        let flat: Vec<f64> = m.rows().flatten().copied().collect();
        scan.step(&flat);
        let flow = scan.current_min();
        if flow >= 1.0 {
            current.ends.push(step + 1);
            current.weighted_flows.push(flow);
            current.flows_before.push(prior);
            scan.reset();
            prior = 0.0;
            if current.ends.len() == half_count as usize {
                stages.push(std::mem::replace(&mut current, empty_stage()));
                if stages.len() == max_stages {
                    break;
                }
            }
        } else {
            prior = flow;
        }
    }

    let asymmetry_bound = cut_constant.max((nf - 1.0) / diag_floor);
    let ingredient =
        asymmetry_bound.powi(-(half_count as i32)) / (8.0 * nf * nf).powi(half_count as i32);
    Ok(DirectFlowBound {
        cut_constant,
        diag_floor,
        asymmetry_bound,
        half_count,
        stage_factor: 1.0 - ingredient,
        stages,
    })
}

/// Verifies the direct-route contraction on a simulated run of the same
/// system: the spread at each stage end must respect the geometric factor.
#[derive(Debug, Clone, Serialize)]
pub struct DirectFlowVerification {
    pub bound: DirectFlowBound,
    pub stage_checks: Vec<StageCheck>,
}

pub fn verify_direct_flow_contraction(
    schedule: &WeightSchedule,
    horizon: u64,
    max_stages: usize,
    x0: &[f64],
) -> Result<DirectFlowVerification> {
    let bound = evaluate_direct_flow_stages(schedule, horizon, max_stages)?;
    let traj = crate::dynamics::simulate(
        schedule,
        x0,
        horizon,
        &crate::dynamics::SimOptions::default(),
    )?;
    let t0 = schedule.t0();
    let stage_times: Vec<u64> = bound
        .stages
        .iter()
        .filter_map(|s| s.ends.last().copied())
        .map(|end| t0 + end)
        .collect();
    let stage_checks = stagewise_contraction_check(&traj, t0, &stage_times, bound.stage_factor)?;
    Ok(DirectFlowVerification {
        bound,
        stage_checks,
    })
}

/// Window-lift facts: every length-`window` product has diagonals at least
/// `floor^window` and instantaneous cut ratio at most
/// `(n-1) * ratio_bound / floor^(window-1)`.
#[derive(Debug, Clone, Serialize)]
pub struct LiftCutBalanceReport {
    pub diag_floor: f64,
    pub worst_diag: f64,
    pub cut_bound: f64,
    pub worst_cut_ratio: f64,
    pub windows_checked: u64,
    pub holds: bool,
}

pub fn lifted_cut_balance_check(
    schedule: &WeightSchedule,
    ratio_bound: f64,
    window: u64,
    windows: u64,
) -> Result<LiftCutBalanceReport> {
    let floor = schedule
        .self_weight_floor()
        .ok_or(Error::SelfWeightFloorUndeclared)?
        .value;
    let n = schedule.n() as f64;
    let lifted = schedule.lift(window)?;
    let diag_floor = floor.powi(window as i32);
    let cut_bound = (n - 1.0) * ratio_bound / floor.powi(window as i32 - 1);
    let mut worst_diag = f64::INFINITY;
    let mut worst_cut_ratio: f64 = 0.0;
    for t in 0..windows {
        let b = lifted.matrix_at(t)?;
        worst_diag = worst_diag.min(b.min_diagonal());
        worst_cut_ratio = worst_cut_ratio.max(balance::instantaneous_cut_ratio(&b)?);
    }
    Ok(LiftCutBalanceReport {
        diag_floor,
        worst_diag,
        cut_bound,
        worst_cut_ratio,
        windows_checked: windows,
        holds: worst_diag >= diag_floor - 1e-12
            && worst_cut_ratio <= cut_bound + RATIO_SLACK,
    })
}

/// Checks that every declared persistent arc of the base schedule keeps a
/// persistent-looking weight stream after lifting, using the prefix
/// heuristic on the lifted schedule (no ground-truth override).
pub fn lifted_persistence_check(
    schedule: &WeightSchedule,
    window: u64,
    windows: u64,
) -> Result<bool> {
    let arcs = schedule
        .known_persistent_arcs()
        .ok_or_else(|| Error::WrongFixture("schedule has no declared persistent arcs".into()))?;
    let lifted = schedule.lift(window)?;
    let est = graph::accumulate(&lifted, windows.saturating_sub(1))?;
    Ok(arcs
        .iter()
        .all(|&arc| est.heuristic_label(arc) == graph::ArcLabel::Persistent))
}

/// Spread floor of the three-agent counterexample run started at
/// `x(1) = [1, 1, 0]`: the spread stays 1 for two steps, contracts by at
/// most `1 - 1/t^2` per step afterward, and therefore never falls below the
/// telescoping partial product, whose limit is 1/2.
#[derive(Debug, Clone, Serialize)]
pub struct SpreadFloorReport {
    pub per_step_ok: bool,
    pub final_spread: f64,
    pub partial_product: f64,
    pub limit: f64,
    pub holds: bool,
}

pub fn three_agent_spread_floor(traj: &Trajectory) -> Result<SpreadFloorReport> {
    if traj.t0 != 1 {
        return Err(Error::WrongFixture(format!(
            "expected start time 1, got {}",
            traj.t0
        )));
    }
    match traj.state_at(1) {
        Some(x) if x == [1.0, 1.0, 0.0] => {}
        _ => {
            return Err(Error::WrongFixture(
                "expected initial state [1, 1, 0]".into(),
            ));
        }
    }
    if traj.spread_at(1) != Some(1.0) || traj.spread_at(2) != Some(1.0) {
        return Err(Error::WrongFixture(
            "spread must equal 1 at the first two steps".into(),
        ));
    }
    let last = traj.last_t();
    let mut per_step_ok = true;
    let mut partial_product = 1.0;
    for t in 2..last {
        let tf = t as f64;
        let factor = 1.0 - 1.0 / (tf * tf);
        let before = traj.spread_at(t).expect("in range");
        let after = traj.spread_at(t + 1).expect("in range");
        if after < factor * before - 1e-12 {
            per_step_ok = false;
        }
        partial_product *= factor;
    }
    let final_spread = traj.spread_at(last).expect("in range");
    Ok(SpreadFloorReport {
        per_step_ok,
        final_spread,
        partial_product,
        limit: 0.5,
        holds: per_step_ok && final_spread >= partial_product - RATIO_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, SimOptions};
    use crate::matrix::StochasticMatrix;
    use crate::schedule::{ArcBalancedConfig, CutBalancedConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn product_floor_zero_budget_is_one() {
        assert_eq!(product_floor(0.5, 0.0).unwrap(), 1.0);
        let rep = product_floor_check(0.5, 0.0, &[1.0, 1.0]).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.product, 1.0);
    }

    #[test]
    fn product_floor_tight_single_factor() {
        // floor 0.5, budget 0.5: bound e^{ln 0.5} = 0.5, met with equality by [0.5].
        let bound = product_floor(0.5, 0.5).unwrap();
        assert_abs_diff_eq!(bound, 0.5, epsilon = 1e-15);
        let rep = product_floor_check(0.5, 0.5, &[0.5]).unwrap();
        assert!(rep.holds);
        assert_abs_diff_eq!(rep.product, rep.floor_bound, epsilon = 1e-15);
    }

    #[test]
    fn product_floor_rejects_bad_floor() {
        assert!(product_floor(1.0, 0.5).is_err());
        assert!(product_floor(0.0, 0.5).is_err());
    }

    #[test]
    fn envelope_check_on_fixed_run() {
        let s = WeightSchedule::four_agent_sorted_example();
        let traj = simulate(&s, &[0.0, 1.0, 2.0, 3.0], 6, &SimOptions::default()).unwrap();
        // Agent 1 starts at the minimum, mixture 1 - 0 would be excluded;
        // pick a strict mixture.
        let rep = self_weight_envelope_check(&s, &traj, 0, 0, 0.9, 4).unwrap();
        assert!(rep.holds, "excess {}", rep.worst_excess);
    }

    #[test]
    fn constant_mass_stage_lengths() {
        // Constant incoming mass a = 0.25 per step, target 0.75: every stage
        // takes exactly ceil(0.75/0.25) = 3 steps (values exact in binary).
        let a = StochasticMatrix::from_rows(vec![
            vec![0.75, 0.25],
            vec![0.25, 0.75],
        ])
        .unwrap();
        let s = WeightSchedule::constant(a, 0);
        let ep = ArcSet::complete(2);
        let seq = persistent_mass_stages(&s, 0, &ep, 0.75, 0, 50, 5).unwrap();
        assert_eq!(seq.times, vec![3, 6, 9, 12, 15]);
        for w in seq.times.windows(2) {
            assert_eq!(w[1] - w[0], 3);
        }
    }

    #[test]
    fn first_step_crossing_when_target_small() {
        let a = StochasticMatrix::from_rows(vec![
            vec![0.5, 0.5],
            vec![0.5, 0.5],
        ])
        .unwrap();
        let s = WeightSchedule::constant(a, 0);
        let ep = ArcSet::complete(2);
        let seq = persistent_mass_stages(&s, 1, &ep, 0.2, 0, 10, 1).unwrap();
        assert_eq!(seq.times, vec![1]);
    }

    #[test]
    fn three_agent_probe_mass_stage() {
        let s = WeightSchedule::three_agent_counterexample();
        let ep = ArcSet::new(3, s.known_persistent_arcs().unwrap()).unwrap();
        let seq = persistent_mass_stages(&s, 1, &ep, 0.5, 1, 60, 1).unwrap();
        // Node 2 (0-based 1) first accumulates at t = 3 where its incoming
        // weight is 2/3.
        assert_eq!(seq.times, vec![3]);
        assert!(seq.masses[0] >= 0.5);
    }

    #[test]
    fn probe_without_incoming_arc_rejected() {
        let s = WeightSchedule::identity(3, 0);
        let ep = ArcSet::new(3, [(0, 1)]).unwrap();
        assert!(matches!(
            persistent_mass_stages(&s, 2, &ep, 0.5, 0, 10, 1),
            Err(Error::NoIncomingPersistentArc { node: 3 })
        ));
    }

    #[test]
    fn arc_rate_constants_plug_in() {
        // Complete persistent graph, floor 0.5, ratio 1, window 1, default
        // stage target 2L(n-1)(1-floor) = 2: arc mass floor (2/2 - 0.5)/1 = 0.5.
        let a = StochasticMatrix::from_rows(vec![
            vec![0.5, 0.25, 0.25],
            vec![0.25, 0.5, 0.25],
            vec![0.25, 0.25, 0.5],
        ])
        .unwrap();
        let s = WeightSchedule::constant(a, 0);
        let ep = ArcSet::complete(3);
        let inputs = ArcRateInputs {
            ratio_bound: 1.0,
            window: 1,
            target_ratio: 0.5,
            tail_budget: Some(0.01),
            stage_mass_target: None,
            horizon: 500,
            max_stages: 8,
        };
        let bound = evaluate_arc_rate(&s, &ep, &inputs).unwrap();
        assert_abs_diff_eq!(bound.arc_mass_floor, 0.5, epsilon = 1e-12);
        assert_eq!(bound.diameter, 1);
        assert!(bound.other_self_product <= bound.root_self_product);
        assert!(!bound.vacuous);
    }

    #[test]
    fn arc_rate_target_one_needs_no_time() {
        let s = WeightSchedule::arc_balanced(ArcBalancedConfig::star(3, 5)).unwrap();
        let ep = ArcSet::new(3, s.known_persistent_arcs().unwrap()).unwrap();
        let inputs = ArcRateInputs {
            ratio_bound: 2.0,
            window: 2,
            target_ratio: 1.0,
            tail_budget: None,
            stage_mass_target: None,
            horizon: 200,
            max_stages: 4,
        };
        let bound = evaluate_arc_rate(&s, &ep, &inputs).unwrap();
        assert_eq!(bound.stages_needed, Some(0.0));
        assert!(matches!(
            bound.threshold_time,
            Some(TimeBound::Reached { steps: 0 })
        ));
    }

    #[test]
    fn arc_rate_rejects_small_stage_target() {
        let s = WeightSchedule::arc_balanced(ArcBalancedConfig::star(3, 5)).unwrap();
        let ep = ArcSet::new(3, s.known_persistent_arcs().unwrap()).unwrap();
        let inputs = ArcRateInputs {
            ratio_bound: 2.0,
            window: 2,
            target_ratio: 0.5,
            tail_budget: None,
            stage_mass_target: Some(1.0), // minimum is 2*2*0.6 = 2.4
            horizon: 100,
            max_stages: 4,
        };
        assert!(matches!(
            evaluate_arc_rate(&s, &ep, &inputs),
            Err(Error::StageTargetTooSmall { .. })
        ));
    }

    #[test]
    fn cut_rate_constants_two_agents() {
        let a = StochasticMatrix::from_rows(vec![
            vec![0.6, 0.4],
            vec![0.4, 0.6],
        ])
        .unwrap();
        let s = WeightSchedule::constant(a, 0);
        let inputs = CutRateInputs {
            ratio_bound: 1.5,
            window: 2,
            target_ratio: 0.5,
            horizon_windows: 50,
            max_stages: 2,
        };
        let bound = evaluate_cut_rate(&s, &inputs).unwrap();
        let floor: f64 = 0.6;
        let expected_ratio = (1.5 / floor).max(1.0 / floor.powi(2));
        assert_abs_diff_eq!(bound.lifted_ratio_bound, expected_ratio, epsilon = 1e-12);
        assert_eq!(bound.half_count, 1);
        assert_abs_diff_eq!(
            bound.stage_factor,
            1.0 - 1.0 / (expected_ratio * 32.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cut_rate_target_one_is_immediate() {
        let s = WeightSchedule::cut_balanced(CutBalancedConfig::path(4, 3)).unwrap();
        let inputs = CutRateInputs {
            ratio_bound: 2.0,
            window: 3,
            target_ratio: 1.0,
            horizon_windows: 40,
            max_stages: 1,
        };
        let bound = evaluate_cut_rate(&s, &inputs).unwrap();
        assert_eq!(bound.stages_needed, 0.0);
        assert!(matches!(
            bound.threshold_windows,
            TimeBound::Reached { steps: 0 }
        ));
    }

    #[test]
    fn stagewise_check_trivial_on_consensus_start() {
        let s = WeightSchedule::four_agent_sorted_example();
        let traj = simulate(&s, &[2.0, 2.0, 2.0, 2.0], 8, &SimOptions::default()).unwrap();
        let checks = stagewise_contraction_check(&traj, 0, &[2, 4], 0.5).unwrap();
        assert!(checks.iter().all(|c| c.ok && c.trivial));
    }

    #[test]
    fn three_agent_floor_fixture_validation() {
        let s = WeightSchedule::three_agent_counterexample();
        let traj = simulate(&s, &[1.0, 1.0, 0.0], 200, &SimOptions::default()).unwrap();
        let rep = three_agent_spread_floor(&traj).unwrap();
        assert!(rep.per_step_ok);
        assert!(rep.holds);
        assert!(rep.final_spread >= rep.partial_product - 1e-9);

        let wrong = simulate(&s, &[0.0, 1.0, 0.5], 5, &SimOptions::default()).unwrap();
        assert!(matches!(
            three_agent_spread_floor(&wrong),
            Err(Error::WrongFixture(_))
        ));
    }

    #[test]
    fn lift_checks_on_cut_generator() {
        let s = WeightSchedule::cut_balanced(CutBalancedConfig::path(3, 9)).unwrap();
        let rep = lifted_cut_balance_check(&s, 2.0, 3, 60).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert!(lifted_persistence_check(&s, 3, 60).unwrap());
    }

    #[test]
    fn direct_flow_stages_on_lifted_system() {
        // The lifted cut-balanced system is itself cut-balanced with a
        // positive diagonal floor, so the direct stage route applies to it.
        let s = WeightSchedule::cut_balanced(CutBalancedConfig::path(4, 29)).unwrap();
        let lifted = s.lift(3).unwrap();
        let rep =
            verify_direct_flow_contraction(&lifted, 4000, 2, &[0.0, 0.4, 0.7, 1.0]).unwrap();
        assert!(rep.bound.cut_constant.is_finite());
        assert!(rep.bound.asymmetry_bound >= rep.bound.cut_constant);
        assert!(rep.bound.stage_factor > 0.0 && rep.bound.stage_factor < 1.0);
        assert_eq!(rep.bound.stages.len(), 2);
        for stage in &rep.bound.stages {
            for (&flow, &before) in stage.weighted_flows.iter().zip(&stage.flows_before) {
                assert!(flow >= 1.0);
                assert!(before < 1.0);
            }
        }
        assert!(!rep.stage_checks.is_empty());
        assert!(rep.stage_checks.iter().all(|c| c.ok), "{:?}", rep.stage_checks);
    }
}
